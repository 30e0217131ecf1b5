//! Least-squares fits of the recorded local energy and `L²` norm.

use super::{DiagnosticsError, EnergyRecord};

pub const MIN_DECAY_SAMPLES: usize = 12;
pub const MIN_GROWTH_SAMPLES: usize = 8;
/// Largest fraction of window samples that may be dropped as nonpositive.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `C t^{-1}`
    InverseT,
    /// `C t^{-1} √log t`
    InverseTSqrtLog,
    /// `C t^{γ−1} √log t`
    GammaSqrtLog,
}

impl DecayModel {
    pub fn name(&self) -> &'static str {
        match self {
            DecayModel::InverseT => "t^-1",
            DecayModel::InverseTSqrtLog => "t^-1 sqrt(log t)",
            DecayModel::GammaSqrtLog => "t^(gamma-1) sqrt(log t)",
        }
    }

    fn log_shape(&self, t: f64, gamma: f64) -> f64 {
        match self {
            DecayModel::InverseT => -t.ln(),
            DecayModel::InverseTSqrtLog => -t.ln() + 0.5 * t.ln().ln(),
            DecayModel::GammaSqrtLog => (gamma - 1.0) * t.ln() + 0.5 * t.ln().ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFit {
    pub model: DecayModel,
    pub prefactor: f64,
    /// Sum of squared residuals in `log E`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub gamma: f64,
    /// Slope of `log E_loc` against `log t`.
    pub slope: f64,
    pub intercept: f64,
    pub models: [ModelFit; 3],
    pub best: DecayModel,
    pub used: usize,
    pub excluded: usize,
    /// Extremes of `E_loc t^{1−γ} / √log t` over the window.
    pub bound_min: f64,
    pub bound_max: f64,
}

impl DecayFit {
    pub fn model(&self, m: DecayModel) -> &ModelFit {
        self.models
            .iter()
            .find(|f| f.model == m)
            .expect("all models fitted")
    }

    pub fn bound_ratio(&self) -> f64 {
        self.bound_max / self.bound_min
    }
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    (intercept, slope, r2)
}

/// Fits `E_loc` over `[t_a, t_b]` (requires `t_a > 1` so `log log t` exists).
pub fn decay_fit(
    records: &[EnergyRecord],
    window: (f64, f64),
    gamma: f64,
) -> Result<DecayFit, DiagnosticsError> {
    let (ta, tb) = window;
    if !(ta > 1.0 && tb > ta) {
        return Err(DiagnosticsError::BadWindow { start: ta, end: tb });
    }
    let in_window: Vec<&EnergyRecord> = records.iter().filter(|r| r.t >= ta && r.t <= tb).collect();
    let kept: Vec<&EnergyRecord> = in_window
        .iter()
        .copied()
        .filter(|r| r.e_loc > 0.0)
        .collect();
    let excluded = in_window.len() - kept.len();
    if in_window.len() < MIN_DECAY_SAMPLES || kept.len() < MIN_DECAY_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            needed: MIN_DECAY_SAMPLES,
            got: kept.len(),
        });
    }
    if excluded as f64 > MAX_EXCLUDED_FRACTION * in_window.len() as f64 {
        return Err(DiagnosticsError::TooManyExcluded {
            excluded,
            total: in_window.len(),
        });
    }
    let lt: Vec<f64> = kept.iter().map(|r| r.t.ln()).collect();
    let le: Vec<f64> = kept.iter().map(|r| r.e_loc.ln()).collect();
    let (intercept, slope, _) = linear_fit(&lt, &le);

    let fit_model = |model: DecayModel| {
        let shifts: Vec<f64> = kept
            .iter()
            .zip(&le)
            .map(|(r, l)| l - model.log_shape(r.t, gamma))
            .collect();
        let c = shifts.iter().sum::<f64>() / shifts.len() as f64;
        let residual = shifts.iter().map(|s| (s - c) * (s - c)).sum();
        ModelFit {
            model,
            prefactor: c.exp(),
            residual,
        }
    };
    let models = [
        fit_model(DecayModel::InverseT),
        fit_model(DecayModel::InverseTSqrtLog),
        fit_model(DecayModel::GammaSqrtLog),
    ];
    let best = models
        .iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .map(|m| m.model)
        .unwrap();

    let bound: Vec<f64> = kept
        .iter()
        .map(|r| r.e_loc * r.t.powf(1.0 - gamma) / r.t.ln().sqrt())
        .collect();
    Ok(DecayFit {
        window,
        gamma,
        slope,
        intercept,
        models,
        best,
        used: kept.len(),
        excluded,
        bound_min: bound.iter().cloned().fold(f64::INFINITY, f64::min),
        bound_max: bound.iter().cloned().fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    /// `‖u‖² ≈ a + b log t`
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Fits `‖u(t)‖² ≈ a + b log t` over `[t_a, t_b]`.
pub fn growth_fit(
    records: &[EnergyRecord],
    window: (f64, f64),
) -> Result<GrowthFit, DiagnosticsError> {
    let pts: Vec<&EnergyRecord> = records
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1 && r.t > 0.0)
        .collect();
    if pts.len() < MIN_GROWTH_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            needed: MIN_GROWTH_SAMPLES,
            got: pts.len(),
        });
    }
    let x: Vec<f64> = pts.iter().map(|r| r.t.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|r| r.l2_norm * r.l2_norm).collect();
    let (a, b, r_squared) = linear_fit(&x, &y);
    Ok(GrowthFit {
        a,
        b,
        r_squared,
        samples: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, ta: f64, tb: f64, n: usize) -> Vec<EnergyRecord> {
        (0..n)
            .map(|k| {
                let t = ta + (tb - ta) * k as f64 / (n - 1) as f64;
                EnergyRecord {
                    t,
                    e_loc: f(t),
                    ..Default::default()
                }
            })
            .collect()
    }

    #[test]
    fn exact_inverse_t() {
        let recs = synthetic(|t| 3.0 / t, 20.0, 200.0, 40);
        let fit = decay_fit(&recs, (20.0, 200.0), 0.0).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.01);
        assert_eq!(fit.best, DecayModel::InverseT);
        assert!((fit.model(DecayModel::InverseT).prefactor - 3.0).abs() < 1e-10);
    }

    #[test]
    fn log_factor_lifts_slope() {
        let recs = synthetic(|t| 3.0 * t.ln().sqrt() / t, 20.0, 200.0, 40);
        let fit = decay_fit(&recs, (20.0, 200.0), 0.0).unwrap();
        // the local slope −1 + 1/(2 log t) runs from −0.833 at t = 20 to −0.906 at t = 200
        let (lo, hi) = (-1.0 + 0.5 / 200f64.ln(), -1.0 + 0.5 / 20f64.ln());
        assert!(fit.slope > lo && fit.slope < hi, "{}", fit.slope);
        assert_eq!(fit.best, DecayModel::InverseTSqrtLog);
        assert!((fit.bound_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exclusions() {
        let mut recs = synthetic(|t| 1.0 / t, 20.0, 200.0, 20);
        for r in recs.iter_mut().take(5) {
            r.e_loc = 0.0;
        }
        let fit = decay_fit(&recs, (20.0, 200.0), 0.0).unwrap();
        assert_eq!(fit.excluded, 5);
        for r in recs.iter_mut().take(7) {
            r.e_loc = 0.0;
        }
        assert!(matches!(
            decay_fit(&recs, (20.0, 200.0), 0.0),
            Err(DiagnosticsError::TooManyExcluded { .. })
        ));
        let few = synthetic(|t| 1.0 / t, 20.0, 200.0, 11);
        assert!(decay_fit(&few, (20.0, 200.0), 0.0).is_err());
    }

    #[test]
    fn growth_fit_recovers_line() {
        let recs: Vec<EnergyRecord> = (1..=30)
            .map(|k| {
                let t = 10.0 * k as f64;
                EnergyRecord {
                    t,
                    l2_norm: (2.0 + 0.5 * t.ln()).sqrt(),
                    ..Default::default()
                }
            })
            .collect();
        let g = growth_fit(&recs, (10.0, 300.0)).unwrap();
        assert!((g.a - 2.0).abs() < 1e-10 && (g.b - 0.5).abs() < 1e-10);
        assert!((g.r_squared - 1.0).abs() < 1e-12);
    }
}
