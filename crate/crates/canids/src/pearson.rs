//! Rule-based detector: Pearson correlation between the per-window packet
//! counts and mean time gaps, flagged when the coefficient drops to or below
//! the threshold.

use crate::error::{Error, Result};
use crate::segment::FeatureWindow;

/// Relative floor below which a standard deviation counts as zero.
const STD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PearsonConfig {
    /// Flag when rho <= threshold. Default -0.7.
    pub threshold: f64,
    /// Flag emitted when the correlation is undefined (zero variance).
    pub abstain_value: u8,
    /// Optional hysteresis band (upper, lower): rho above the upper bound is
    /// clean, at or below the lower bound is flagged, in between abstains.
    /// Off by default; the single-threshold rule is the reference behavior.
    pub band: Option<(f64, f64)>,
}

impl Default for PearsonConfig {
    fn default() -> Self {
        PearsonConfig {
            threshold: -0.7,
            abstain_value: 0,
            band: None,
        }
    }
}

impl PearsonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!(
                "pearson threshold {} outside [-1, 1]",
                self.threshold
            )));
        }
        if self.abstain_value > 1 {
            return Err(Error::invalid("abstain_value must be 0 or 1"));
        }
        if let Some((hi, lo)) = self.band {
            if lo > hi {
                return Err(Error::invalid("hysteresis band is inverted"));
            }
        }
        Ok(())
    }
}

/// Per-window rule outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonResult {
    pub window_index: usize,
    /// None when either series has zero variance.
    pub rho: Option<f64>,
    pub flag: u8,
    /// Two-sided p-value of the correlation (t-test with n-2 dof). Carried
    /// through for reporting; the rule thresholds the coefficient only.
    pub p_value: Option<f64>,
}

/// Two-sided p-value for a sample correlation of n pairs.
fn correlation_p_value(rho: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    let dof = (n - 2) as f64;
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return Some(0.0);
    }
    let t = rho.abs() * (dof / denom).sqrt();
    let dist = statrs::distribution::StudentsT::new(0.0, 1.0, dof).ok()?;
    use statrs::distribution::ContinuousCDF;
    Some((2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0))
}

/// Sample Pearson correlation; `None` when either series has (numerically)
/// zero variance. Lengths must match and be at least 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least 2 samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut rms_x = 0.0;
    let mut rms_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
        rms_x += a * a;
        rms_y += b * b;
    }
    let sx = (vx / n).sqrt();
    let sy = (vy / n).sqrt();
    let scale_x = (rms_x / n).sqrt();
    let scale_y = (rms_y / n).sqrt();
    if sx <= STD_EPS * scale_x || sx == 0.0 || sy <= STD_EPS * scale_y || sy == 0.0 {
        return Ok(None);
    }
    Ok(Some((cov / n) / (sx * sy)))
}

/// Apply the rule to one feature window.
pub fn detect(window: &FeatureWindow, cfg: &PearsonConfig) -> Result<PearsonResult> {
    cfg.validate()?;
    let rho = pearson(&window.counts, &window.gaps)?;
    let flag = match rho {
        None => cfg.abstain_value,
        Some(r) => match cfg.band {
            None => u8::from(r <= cfg.threshold),
            Some((hi, lo)) => {
                if r <= lo {
                    1
                } else if r > hi {
                    0
                } else {
                    cfg.abstain_value
                }
            }
        },
    };
    Ok(PearsonResult {
        window_index: window.window_index,
        rho,
        flag,
        p_value: rho.and_then(|r| correlation_p_value(r, window.counts.len())),
    })
}

/// Run the rule over a window sequence.
pub fn detect_all(windows: &[FeatureWindow], cfg: &PearsonConfig) -> Result<Vec<PearsonResult>> {
    windows.iter().map(|w| detect(w, cfg)).collect()
}
