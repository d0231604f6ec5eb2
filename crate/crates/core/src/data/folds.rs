use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Index partition of a training set into fitting and validation parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Builds `folds` validation splits of about `val_fraction` of the data each,
/// preserving class proportions.
///
/// Each class is shuffled once with `seed`; fold `f` takes
/// `max(1, round(n_c · val_fraction))` consecutive items (cyclically) starting
/// at `f · n_c / folds`, so folds rotate through every class.
pub fn stratified_folds(
    labels: &[usize],
    class_names: &[String],
    folds: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<Vec<Fold>> {
    if folds == 0 {
        return Err(Error::Parameter("fold count must be positive".into()));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_names.len()];
    for (i, &label) in labels.iter().enumerate() {
        let bucket = by_class
            .get_mut(label)
            .ok_or_else(|| Error::Data(format!("label {label} out of range for {} classes", class_names.len())))?;
        bucket.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (c, members) in by_class.iter_mut().enumerate() {
        if !members.is_empty() && members.len() < folds {
            return Err(Error::Data(format!(
                "class {:?} has {} samples, fewer than the {folds} folds",
                class_names[c],
                members.len()
            )));
        }
        members.shuffle(&mut rng);
    }

    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let mut in_val = vec![false; labels.len()];
        for members in by_class.iter().filter(|m| !m.is_empty()) {
            let n = members.len();
            let take = ((n as f64 * val_fraction).round() as usize).max(1).min(n.max(2) - 1);
            let start = f * n / folds;
            for j in 0..take {
                in_val[members[(start + j) % n]] = true;
            }
        }
        let (validation, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| in_val[i]);
        out.push(Fold { train, validation });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|c| format!("c{c}")).collect()
    }

    #[test]
    fn one_per_class_with_ten_each() {
        let labels: Vec<usize> = (0..200).map(|i| i % 20).collect();
        let folds = stratified_folds(&labels, &names(20), 10, 0.1, 3).unwrap();
        assert_eq!(folds.len(), 10);
        let mut seen = vec![0; 200];
        for fold in &folds {
            let mut per_class = [0; 20];
            for &i in &fold.validation {
                per_class[labels[i]] += 1;
                seen[i] += 1;
            }
            assert!(per_class.iter().all(|&c| c == 1));
            assert_eq!(fold.train.len() + fold.validation.len(), 200);
        }
        // ten disjoint validation folds cover every sample once
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn small_class_is_named() {
        let labels = vec![0, 0, 0, 1, 1];
        let err = stratified_folds(&labels, &names(2), 3, 0.1, 0).unwrap_err();
        assert!(err.to_string().contains("\"c1\""), "{err}");
    }
}
