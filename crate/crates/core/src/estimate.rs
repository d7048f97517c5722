use serde::{Deserialize, Serialize};

/// Whether an estimate is of a quantity or of its logarithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// A Monte Carlo result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
    pub n: usize,
    pub seed: u64,
    pub scale: Scale,
}

impl Estimate {
    /// Sample mean and standard error of `xs`.
    pub fn from_samples(xs: &[f64], seed: u64) -> Self {
        let (mean, se) = mean_se(xs);
        Estimate { value: mean, std_err: se, n: xs.len(), seed, scale: Scale::Linear }
    }

    pub fn exact(value: f64, seed: u64) -> Self {
        Estimate { value, std_err: 0.0, n: 1, seed, scale: Scale::Linear }
    }

    /// Delta-method transfer to log scale.
    pub fn to_log(self) -> Self {
        Estimate { value: self.value.ln(), std_err: self.std_err / self.value, scale: Scale::Log, ..self }
    }

    /// |self − other| in units of the combined standard error.
    pub fn z_score(&self, other: f64, other_se: f64) -> f64 {
        let se = (self.std_err.powi(2) + other_se.powi(2)).sqrt();
        let diff = (self.value - other).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }
}

/// Mean and standard error by Welford's recurrence.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    (mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let (_, se) = mean_se(xs);
    se * se * xs.len() as f64
}
