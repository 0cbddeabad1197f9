use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Vector;
use crate::network::SensorNetwork;

use super::SimulationError;

/// `(w(t), v_i(t) per node)`.
pub type SignalFn = dyn Fn(f64) -> (Vector, Vec<Vector>) + Send + Sync;

/// Process and measurement disturbances.
#[derive(Clone)]
pub enum DisturbanceSpec {
    None,
    /// The damped sinusoids of the worked example (two process channels,
    /// four scalar sensors).
    Reference,
    /// Sums of three random sinusoids per channel with total amplitude at
    /// most `amplitude`. Noise channels are keyed by node label, so a reduced
    /// network sees the same noise on its surviving nodes.
    RandomBounded { seed: u64, amplitude: f64 },
    Custom(Arc<SignalFn>),
}

impl fmt::Debug for DisturbanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "None"),
            Self::Reference => write!(f, "Reference"),
            Self::RandomBounded { seed, amplitude } => {
                write!(f, "RandomBounded {{ seed: {seed}, amplitude: {amplitude} }}")
            }
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Worked-example signals at time `t`: `w` (2 channels) and `v` (4 nodes).
pub fn reference_disturbance(t: f64) -> ([f64; 2], [f64; 4]) {
    let w = [
        1.2 * (20.0 * PI * t).sin() * (-0.01 * t).exp(),
        -0.9 * (40.0 * PI * t).sin() * (-0.02 * t).exp(),
    ];
    let v = [
        0.6 * (40.0 * PI * t).cos() * (-0.01 * t).exp(),
        -0.7 * (60.0 * PI * t).sin() * (-0.02 * t).exp(),
        0.8 * (80.0 * PI * t).cos() * (-0.03 * t).exp(),
        -0.9 * (100.0 * PI * t).sin() * (-0.04 * t).exp(),
    ];
    (w, v)
}

#[derive(Debug, Clone)]
pub(crate) struct MultiSine {
    terms: Vec<(f64, f64, f64)>,
}

impl MultiSine {
    fn new(seed: u64, channel: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ channel.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let raw: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen::<f64>(),
                    rng.gen_range(0.5..50.0),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let total: f64 = raw.iter().map(|r| r.0).sum::<f64>().max(1e-12);
        let terms = raw
            .into_iter()
            .map(|(a, f, ph)| (amplitude * a / total, f, ph))
            .collect();
        Self { terms }
    }

    fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|(a, f, ph)| a * (2.0 * PI * f * t + ph).sin())
            .sum()
    }
}

/// Disturbance bound to concrete channel counts.
pub(crate) enum Signals {
    Zero,
    Reference { labels: Vec<usize> },
    Random { w: Vec<MultiSine>, v: Vec<Vec<MultiSine>> },
    Custom(Arc<SignalFn>),
}

impl Signals {
    pub(crate) fn bind(spec: &DisturbanceSpec, q_w: usize, net: &SensorNetwork) -> Result<Self, SimulationError> {
        Ok(match spec {
            DisturbanceSpec::None => Signals::Zero,
            DisturbanceSpec::Reference => {
                if q_w != 2 {
                    return Err(SimulationError::InvalidDisturbance(format!(
                        "the example preset has 2 process channels, the model has {q_w}"
                    )));
                }
                if net.output_dims().iter().any(|q| *q != 1) || net.labels.iter().any(|l| *l >= 4) {
                    return Err(SimulationError::InvalidDisturbance(
                        "the example preset needs at most four single-output nodes".into(),
                    ));
                }
                Signals::Reference {
                    labels: net.labels.clone(),
                }
            }
            DisturbanceSpec::RandomBounded { seed, amplitude } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(SimulationError::InvalidDisturbance(format!("amplitude {amplitude}")));
                }
                let w = (0..q_w as u64).map(|c| MultiSine::new(*seed, c, *amplitude)).collect();
                let v = net
                    .labels
                    .iter()
                    .zip(net.output_dims())
                    .map(|(&label, q)| {
                        (0..q as u64)
                            .map(|r| MultiSine::new(*seed, 1000 + 64 * label as u64 + r, *amplitude))
                            .collect()
                    })
                    .collect();
                Signals::Random { w, v }
            }
            DisturbanceSpec::Custom(f) => Signals::Custom(f.clone()),
        })
    }

    pub(crate) fn eval(&self, t: f64, q_w: usize, dims: &[usize]) -> (Vector, Vec<Vector>) {
        match self {
            Signals::Zero => (Vector::zeros(q_w), dims.iter().map(|q| Vector::zeros(*q)).collect()),
            Signals::Reference { labels } => {
                let (w, v) = reference_disturbance(t);
                (
                    Vector::from_column_slice(&w),
                    labels.iter().map(|l| Vector::from_element(1, v[*l])).collect(),
                )
            }
            Signals::Random { w, v } => (
                Vector::from_iterator(w.len(), w.iter().map(|s| s.eval(t))),
                v.iter()
                    .map(|node| Vector::from_iterator(node.len(), node.iter().map(|s| s.eval(t))))
                    .collect(),
            ),
            Signals::Custom(f) => f(t),
        }
    }
}
