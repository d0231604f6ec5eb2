//! Procedural pose sequences with class-specific periodic motion.
//!
//! Every class moves one joint group at one base frequency and holds that
//! group at a class-specific height. Actors differ in body scale and
//! horizontal offset; samples differ in phase, amplitude, tempo, length and
//! positional jitter. Coordinates are centred at x = 0 so horizontal flips
//! mirror the figure.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{compute_velocities, Dataset, Detector, PoseSample, Split, CHANNELS, MAX_LENGTH, MIN_LENGTH};

/// Joints of the base figure; wider feature layouts add joints around the head.
pub const SYNTH_JOINTS: usize = 13;

const BASE: [(f64, f64); SYNTH_JOINTS] = [
    (0.0, 0.75),   // nose
    (-0.18, 0.5),  // left shoulder
    (0.18, 0.5),   // right shoulder
    (-0.25, 0.25), // left elbow
    (0.25, 0.25),  // right elbow
    (-0.28, 0.0),  // left wrist
    (0.28, 0.0),   // right wrist
    (-0.12, 0.0),  // left hip
    (0.12, 0.0),   // right hip
    (-0.13, -0.4), // left knee
    (0.13, -0.4),  // right knee
    (-0.14, -0.8), // left ankle
    (0.14, -0.8),  // right ankle
];

const GROUPS: [(&str, &[usize]); 8] = [
    ("left-arm", &[3, 5]),
    ("right-arm", &[4, 6]),
    ("both-arms", &[3, 4, 5, 6]),
    ("left-leg", &[9, 11]),
    ("right-leg", &[10, 12]),
    ("both-legs", &[9, 10, 11, 12]),
    ("head-shoulders", &[0, 1, 2]),
    ("torso", &[1, 2, 7, 8]),
];

/// Cycles per frame.
const TEMPOS: [(&str, f64); 3] = [("slow", 0.05), ("medium", 0.1), ("fast", 0.17)];

const TRAIN_ACTORS: usize = 16;
const TEST_ACTORS: usize = 5;
const JITTER: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Features per frame; must be a multiple of 4 covering at least 13 joints.
    pub features: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 20,
            train_per_class: 100,
            test_per_class: 20,
            features: 52,
            seed: 0,
        }
    }
}

struct Actor {
    id: String,
    scale: f64,
    offset: f64,
}

fn class_name(c: usize) -> String {
    let (group, _) = GROUPS[c % GROUPS.len()];
    let (tempo, _) = TEMPOS[(c / GROUPS.len()) % TEMPOS.len()];
    if c < GROUPS.len() * TEMPOS.len() {
        format!("{group}-{tempo}")
    } else {
        format!("{group}-{tempo}-{c}")
    }
}

fn base_position(joint: usize) -> (f64, f64) {
    BASE.get(joint).copied().unwrap_or_else(|| {
        // extra face joints sit on a small ring around the nose
        let a = joint as f64 * 1.7;
        (0.06 * a.cos(), 0.78 + 0.04 * a.sin())
    })
}

fn sample_positions(rng: &mut ChaCha8Rng, class: usize, joints: usize, actor: &Actor) -> Tensor<f64> {
    let (_, moving) = GROUPS[class % GROUPS.len()];
    let tempo_index = (class / GROUPS.len()) % TEMPOS.len();
    let (_, tempo) = TEMPOS[tempo_index];
    // each class also holds its moving joints at a distinct height
    let lift = 0.12 * (1 + tempo_index) as f64;
    // classes beyond the group x tempo grid shift tempo further
    let freq = tempo * (1.0 + 0.5 * (class / (GROUPS.len() * TEMPOS.len())) as f64) * rng.random_range(0.9..1.1);
    let amp = rng.random_range(0.8..1.2);
    let phase = rng.random_range(0.0..TAU);
    let sway = (
        rng.random_range(0.0..0.02),
        rng.random_range(0.02..0.04),
        rng.random_range(0.0..TAU),
    );
    let len = rng.random_range(MIN_LENGTH..=MAX_LENGTH);
    let jitter = Normal::new(0.0, JITTER).expect("positive jitter");

    let mut pos = Tensor::zeros(&[len, joints, 2]);
    let data = pos.data_mut();
    for t in 0..len {
        let theta = TAU * freq * t as f64 + phase;
        let drift = sway.0 * (TAU * sway.1 * t as f64 + sway.2).sin();
        for j in 0..joints {
            let (bx, by) = base_position(j);
            let (mut x, mut y) = (bx, by);
            if let Some(k) = moving.iter().position(|&m| m == j) {
                // alternate sides swing in anti-phase
                let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                y += lift + 0.15 * amp * (theta + side * 0.5).sin();
                x += 0.08 * amp * side * (theta).cos();
            }
            let i = (t * joints + j) * 2;
            data[i] = actor.scale * x + actor.offset + drift + jitter.sample(rng);
            data[i + 1] = actor.scale * y + jitter.sample(rng);
        }
    }
    pos
}

/// Generates a labelled dataset whose train and test actors are disjoint.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    if config.classes == 0 || config.train_per_class == 0 || config.test_per_class == 0 {
        return Err(Error::Parameter("class and per-class counts must be positive".into()));
    }
    if !config.features.is_multiple_of(CHANNELS) || config.features / CHANNELS < SYNTH_JOINTS {
        return Err(Error::Parameter(format!(
            "synthetic features must be a multiple of {CHANNELS} and at least {}, got {}",
            CHANNELS * SYNTH_JOINTS,
            config.features
        )));
    }
    let joints = config.features / CHANNELS;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut make_actors = |prefix: &str, n: usize| -> Vec<Actor> {
        (0..n)
            .map(|i| Actor {
                id: format!("{prefix}-{i:02}"),
                scale: rng.random_range(0.9..1.1),
                offset: rng.random_range(-0.05..0.05),
            })
            .collect()
    };
    let train_actors = make_actors("train-actor", TRAIN_ACTORS);
    let test_actors = make_actors("test-actor", TEST_ACTORS);

    let mut samples = Vec::new();
    for (split, per_class, actors) in [
        (Split::Train, config.train_per_class, &train_actors),
        (Split::Test, config.test_per_class, &test_actors),
    ] {
        for class in 0..config.classes {
            for _ in 0..per_class {
                let actor = &actors[rng.random_range(0..actors.len())];
                let positions = sample_positions(&mut rng, class, joints, actor);
                let features = compute_velocities(&positions)?.cast::<f32>();
                samples.push(PoseSample {
                    id: format!("{split}-{:05}", samples.len()),
                    actor: actor.id.clone(),
                    label: class,
                    split,
                    features,
                });
            }
        }
    }
    let dataset = Dataset {
        detector: Detector::Synthetic,
        class_names: (0..config.classes).map(class_name).collect(),
        features: config.features,
        samples,
    };
    dataset.validate()?;
    Ok(dataset)
}
