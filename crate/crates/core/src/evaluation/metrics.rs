//! Point-forecast error metrics, the copy-previous reference and the Welch
//! t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// MAPE of one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// `None` when every scored step was excluded.
    pub value: Option<f64>,
    /// Steps skipped because the actual value is zero.
    pub excluded_zero: usize,
}

/// Mean of `100 |(ŷ - y) / y|` over steps with a known, non-zero actual.
pub fn mape(preds: &[f64], actuals: &[Option<f64>]) -> Result<Mape> {
    if preds.len() != actuals.len() {
        return Err(Error::Shape(format!("{} predictions for {} actuals", preds.len(), actuals.len())));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut excluded_zero = 0;
    for (p, a) in preds.iter().zip(actuals) {
        match a {
            Some(a) if *a == 0.0 => excluded_zero += 1,
            Some(a) => {
                sum += 100.0 * ((p - a) / a).abs();
                n += 1;
            }
            None => {}
        }
    }
    Ok(Mape {
        value: (n > 0).then(|| sum / n as f64),
        excluded_zero,
    })
}

/// How the MASE denominators are computed from the training series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaseNormalizer {
    /// Step `i` is scaled by the mean in-sample lag-`i` copy-previous error.
    #[default]
    PerStep,
    /// Every step is scaled by the mean lag-`K` error.
    LagK,
}

impl std::str::FromStr for MaseNormalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_step" => Ok(Self::PerStep),
            "lag_k" => Ok(Self::LagK),
            _ => Err(Error::Usage(format!("unknown MASE normalizer `{s}`"))),
        }
    }
}

/// Mean `|x_j - x_{j-lag}|` over pairs where both ends are observed.
pub fn lag_error(train: &[Option<f64>], lag: usize) -> Option<f64> {
    if lag == 0 {
        return None;
    }
    let (sum, n) = train
        .iter()
        .zip(train.iter().skip(lag))
        .filter_map(|(a, b)| Some((b.as_ref()? - a.as_ref()?).abs()))
        .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-step MASE denominators for a horizon of `K` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaseScale {
    /// `None` where the denominator is zero or has no observed pair.
    pub per_step: Vec<Option<f64>>,
}

impl MaseScale {
    pub fn fit(train: &[Option<f64>], horizon: usize, kind: MaseNormalizer) -> Self {
        let usable = |v: Option<f64>| v.filter(|d| *d > 0.0);
        let per_step = match kind {
            MaseNormalizer::PerStep => (1..=horizon).map(|i| usable(lag_error(train, i))).collect(),
            MaseNormalizer::LagK => vec![usable(lag_error(train, horizon)); horizon],
        };
        Self { per_step }
    }

    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }
}

/// Mean scaled error over the steps with a known actual; `None` if no step
/// is scored or a scored step has no usable denominator.
pub fn mase(preds: &[f64], actuals: &[Option<f64>], scale: &MaseScale) -> Result<Option<f64>> {
    if preds.len() != actuals.len() || preds.len() != scale.horizon() {
        return Err(Error::Shape(format!(
            "{} predictions, {} actuals, horizon {}",
            preds.len(),
            actuals.len(),
            scale.horizon()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, a), d) in preds.iter().zip(actuals).zip(&scale.per_step) {
        let Some(a) = a else { continue };
        let Some(d) = d else { return Ok(None) };
        sum += (p - a).abs() / d;
        n += 1;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Repeats the last observed value strictly before `from` (0-based).
pub fn copy_previous(values: &[Option<f64>], from: usize, horizon: usize) -> Result<Vec<f64>> {
    let last = values[..from.min(values.len())]
        .iter()
        .rev()
        .find_map(|v| *v)
        .ok_or_else(|| Error::Data(format!("no observed value before tick {from}")))?;
    Ok(vec![last; horizon])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub dof: f64,
    /// Two-sided.
    pub p: f64,
}

impl WelchTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

fn mean_var(s: &[f64]) -> (f64, f64) {
    let n = s.len() as f64;
    let m = s.iter().sum::<f64>() / n;
    let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Unequal-variance t-test. `None` when a sample has fewer than two values,
/// holds a non-finite value, or both samples have zero variance.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 || a.iter().chain(b).any(|v| !v.is_finite()) {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Some(WelchTest { t, dof, p })
}
