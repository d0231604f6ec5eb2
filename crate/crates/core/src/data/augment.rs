use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

use super::CHANNELS;

/// Mirrors a sequence horizontally by negating every x and vx channel.
pub fn flip<F: Scalar>(features: &mut Tensor<F>) {
    for row in features.data_mut().chunks_mut(CHANNELS) {
        row[0] = -row[0];
        row[2] = -row[2];
    }
}

/// Applies [`flip`] with the given probability; returns whether it flipped.
pub fn augment_flip<F: Scalar, R: Rng + ?Sized>(features: &mut Tensor<F>, probability: f64, rng: &mut R) -> bool {
    let flipped = probability > 0.0 && rng.random::<f64>() < probability;
    if flipped {
        flip(features);
    }
    flipped
}

/// Adds i.i.d. `N(0, sigma²)` noise to every feature.
pub fn augment_noise<F: Scalar, R: Rng + ?Sized>(features: &mut Tensor<F>, sigma: f64, rng: &mut R) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked");
    for v in features.data_mut() {
        *v += F::of(normal.sample(rng));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flip_sign_rule() {
        let mut x = Tensor::<f32>::from_rows(&[&[0.2, 0.5, 0.1, -0.3, -0.4, 0.6, 0.0, 0.7]]);
        flip(&mut x);
        assert_eq!(x.row(0), &[-0.2, 0.5, -0.1, -0.3, 0.4, 0.6, -0.0, 0.7]);
    }

    #[test]
    fn probability_zero_and_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let orig = Tensor::<f64>::from_fn(&[3, 8], |i| i as f64 - 4.0);
        let mut x = orig.clone();
        for _ in 0..100 {
            assert!(!augment_flip(&mut x, 0.0, &mut rng));
        }
        assert_eq!(x, orig);
        assert!(augment_flip(&mut x, 1.0, &mut rng));
        assert_ne!(x, orig);
    }

    #[test]
    fn noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Tensor::<f64>::zeros(&[1000, 1000]);
        augment_noise(&mut x, 0.03, &mut rng).unwrap();
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let std = (x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std / 0.03 - 1.0).abs() < 0.02, "std {std}");
        let mut y = Tensor::<f32>::ones(&[4, 4]);
        augment_noise(&mut y, 0.0, &mut rng).unwrap();
        assert_eq!(y, Tensor::ones(&[4, 4]));
        assert!(augment_noise(&mut y, -1.0, &mut rng).is_err());
    }
}
