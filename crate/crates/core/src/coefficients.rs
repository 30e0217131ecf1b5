//! Bulk-modulus fields `K(x)` for each hypothesis family, and a grid-level
//! validator for the conditions K-1 … K-5.
//!
//! Every family here is radial, `K(x) = g(|x|)`, and equals its far-field
//! value `k0` on and beyond `r0`. The analytic profile is kept next to the
//! samples so that grid measurements can be compared against it.

use crate::field::{gradient, FaceCoefficients, Grid2D, ScalarField};
use std::f64::consts::LN_2;
use thiserror::Error;

/// Sign-condition tolerance for K-2 and K-4 measured at grid nodes.
pub const SIGN_TOLERANCE: f64 = 1e-8;
/// Allowed excess of the grid-measured `|∇K|` over the analytic supremum.
pub const LIPSCHITZ_TOLERANCE: f64 = 1e-6;

const RADIAL_SAMPLES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("far-field modulus must be positive, got {0}")]
    NonPositiveModulus(f64),
    #[error("peak modulus {k_peak} is below the far-field value {k0}; the profile would increase outward")]
    PeakBelowFarField { k_peak: f64, k0: f64 },
    #[error("gamma0 must lie in [0, 1), got {0}")]
    GammaOutOfRange(f64),
    #[error("r0 = {r0} must be positive and at least {min} (four grid spacings)")]
    RadiusTooSmall { r0: f64, min: f64 },
    #[error("eta0 = r0·|∇K|∞/k_m = {0} is not below 1")]
    EtaTooLarge(f64),
    #[error("minimum modulus {0} is not positive")]
    NonPositiveMinimum(f64),
    #[error("x·∇K/K = {measured} exceeds gamma0 = {gamma0} at node ({x}, {y})")]
    GammaViolated {
        measured: f64,
        gamma0: f64,
        x: f64,
        y: f64,
    },
    #[error("sample {value} at ({x}, {y}) violates {what}")]
    BadSample {
        value: f64,
        x: f64,
        y: f64,
        what: &'static str,
    },
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn bump_slope(s: f64) -> f64 {
    if s.abs() < 1.0 {
        let d = 1.0 - s * s;
        -2.0 * s / (d * d) * bump(s)
    } else {
        0.0
    }
}

/// Slope profile of the remark42 bridge in log-log coordinates: ramps from
/// the inner slope to a plateau, then down to zero, all C¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBridge {
    log_start: f64,
    log_value_start: f64,
    inner_slope: f64,
    plateau: f64,
    ramp: f64,
}

impl LogBridge {
    fn new(gamma0: f64, r0: f64) -> Self {
        let a = 0.5 * r0;
        let width = LN_2;
        let log_value_start = 0.5 * gamma0 * (1.0 + a * a).ln();
        let log_value_end = 0.5 * gamma0 * (1.0 + r0 * r0).ln();
        let rise = log_value_end - log_value_start;
        let inner_slope = gamma0 * a * a / (1.0 + a * a);
        // keep the plateau strictly under gamma0 so grid differencing of the
        // bridge cannot push the measured ratio over it
        let headroom = (0.05 * gamma0).min(0.5 * (gamma0 * width - rise) / width);
        let cap = gamma0 - headroom;
        let ramp = if gamma0 == 0.0 {
            width / 3.0
        } else {
            ((cap * width - rise) / (cap - 0.5 * inner_slope)).min(width / 3.0)
        };
        let plateau = if gamma0 == 0.0 {
            0.0
        } else {
            (rise - 0.5 * inner_slope * ramp) / (width - ramp)
        };
        Self {
            log_start: a.ln(),
            log_value_start,
            inner_slope,
            plateau,
            ramp,
        }
    }

    fn smoothstep(s: f64) -> f64 {
        s * s * (3.0 - 2.0 * s)
    }

    fn smoothstep_integral(s: f64) -> f64 {
        s * s * s - 0.5 * s * s * s * s
    }

    /// `d log g / d log r` at `rho = log r`.
    fn slope(&self, rho: f64) -> f64 {
        let x = rho - self.log_start;
        let flat_end = LN_2 - self.ramp;
        if x <= self.ramp {
            let s = (x / self.ramp).clamp(0.0, 1.0);
            self.inner_slope + (self.plateau - self.inner_slope) * Self::smoothstep(s)
        } else if x <= flat_end {
            self.plateau
        } else {
            let s = ((x - flat_end) / self.ramp).clamp(0.0, 1.0);
            self.plateau * (1.0 - Self::smoothstep(s))
        }
    }

    fn log_value(&self, rho: f64) -> f64 {
        let x = (rho - self.log_start).clamp(0.0, LN_2);
        let l = self.ramp;
        let flat_end = LN_2 - l;
        let up = |s: f64| {
            l * (self.inner_slope * s
                + (self.plateau - self.inner_slope) * Self::smoothstep_integral(s))
        };
        let mut g = self.log_value_start;
        if x <= l {
            return g + up(x / l);
        }
        g += up(1.0);
        if x <= flat_end {
            return g + self.plateau * (x - l);
        }
        g += self.plateau * (flat_end - l);
        let s = (x - flat_end) / l;
        g + l * self.plateau * (s - Self::smoothstep_integral(s))
    }
}

/// Analytic radial profile `g(r)` behind a coefficient field.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialProfile {
    Constant {
        k0: f64,
    },
    Remark42 {
        gamma0: f64,
        r0: f64,
        bridge: LogBridge,
    },
    RadialDecreasing {
        k_peak: f64,
        k0: f64,
        r0: f64,
    },
    Lipschitz {
        k0: f64,
        amplitude: f64,
        r0: f64,
    },
}

impl RadialProfile {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Constant { k0 } => k0,
            RadialProfile::Remark42 { gamma0, r0, bridge } => {
                if r <= 0.5 * r0 {
                    (1.0 + r * r).powf(0.5 * gamma0)
                } else if r < r0 {
                    bridge.log_value(r.ln()).exp()
                } else {
                    (1.0 + r0 * r0).powf(0.5 * gamma0)
                }
            }
            RadialProfile::RadialDecreasing { k_peak, k0, r0 } => k0 + (k_peak - k0) * bump(r / r0),
            RadialProfile::Lipschitz { k0, amplitude, r0 } => {
                k0 + amplitude * bump(r / r0) * (2.0 * r).cos()
            }
        }
    }

    /// `g'(r)`.
    pub fn slope(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Constant { .. } => 0.0,
            RadialProfile::Remark42 { gamma0, r0, bridge } => {
                if r <= 0.5 * r0 {
                    gamma0 * r * (1.0 + r * r).powf(0.5 * gamma0 - 1.0)
                } else if r < r0 {
                    self.value(r) * bridge.slope(r.ln()) / r
                } else {
                    0.0
                }
            }
            RadialProfile::RadialDecreasing { k_peak, k0, r0 } => {
                (k_peak - k0) * bump_slope(r / r0) / r0
            }
            RadialProfile::Lipschitz { amplitude, r0, .. } => {
                let s = r / r0;
                amplitude * (bump_slope(s) / r0 * (2.0 * r).cos() - 2.0 * bump(s) * (2.0 * r).sin())
            }
        }
    }

    /// Dense samples of `(r, g, g')` on `[0, r0]`.
    fn scan(&self, r0: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..=RADIAL_SAMPLES).map(move |k| {
            let r = r0 * k as f64 / RADIAL_SAMPLES as f64;
            (r, self.value(r), self.slope(r))
        })
    }
}

/// Which of the conditions K-1 … K-5 hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Hypotheses {
    pub k1: bool,
    pub k2: bool,
    pub k3: bool,
    pub k4: bool,
    pub k5: bool,
}

impl Hypotheses {
    pub fn as_array(&self) -> [bool; 5] {
        [self.k1, self.k2, self.k3, self.k4, self.k5]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    samples: ScalarField,
    faces: FaceCoefficients,
    profile: RadialProfile,
    k_m: f64,
    k0: f64,
    k1: f64,
    r0: f64,
    gamma0: Option<f64>,
    lip_grad_sup: f64,
    eta0: Option<f64>,
    advertised: Hypotheses,
}

impl CoefficientField {
    pub fn samples(&self) -> &ScalarField {
        &self.samples
    }
    pub fn grid(&self) -> &Grid2D {
        self.samples.grid()
    }
    pub fn faces(&self) -> &FaceCoefficients {
        &self.faces
    }
    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }
    pub fn k_m(&self) -> f64 {
        self.k_m
    }
    pub fn k0(&self) -> f64 {
        self.k0
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn gamma0(&self) -> Option<f64> {
        self.gamma0
    }
    pub fn lip_grad_sup(&self) -> f64 {
        self.lip_grad_sup
    }
    pub fn eta0(&self) -> Option<f64> {
        self.eta0
    }
    /// Conditions this family satisfies according to its analytic profile.
    pub fn advertised(&self) -> Hypotheses {
        self.advertised
    }

    /// Same physics resampled on another grid.
    pub fn resample(&self, grid: Grid2D) -> CoefficientField {
        let samples = sample(grid, &self.profile, self.r0, self.k0);
        CoefficientField {
            faces: FaceCoefficients::from_nodal(&samples),
            samples,
            ..self.clone()
        }
    }

    fn assemble(
        grid: Grid2D,
        profile: RadialProfile,
        k0: f64,
        r0: f64,
        gamma0: Option<f64>,
    ) -> Result<Self, CoefficientError> {
        let samples = sample(grid, &profile, r0, k0);
        let mut g_min = f64::INFINITY;
        let mut g_max: f64 = 0.0;
        let mut lip: f64 = 0.0;
        let mut max_xgrad = f64::NEG_INFINITY;
        let mut max_ratio: f64 = 0.0;
        for (r, g, dg) in profile.scan(r0) {
            g_min = g_min.min(g);
            g_max = g_max.max(g);
            lip = lip.max(dg.abs());
            max_xgrad = max_xgrad.max(r * dg);
            max_ratio = max_ratio.max(r * dg / g);
        }
        let s_min = samples
            .values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let s_max = samples.values().iter().cloned().fold(0.0, f64::max);
        let k_m = g_min.min(s_min).min(k0);
        if !(k_m > 0.0) {
            return Err(CoefficientError::NonPositiveMinimum(k_m));
        }
        let k1 = g_max.max(s_max).max(k0).sqrt();
        let eta = r0 * lip / k_m;
        let eta0 = (eta < 1.0).then_some(eta);
        let k4_bound = gamma0.or(eta0);
        let advertised = Hypotheses {
            k1: true,
            k2: max_xgrad <= 0.0,
            k3: true,
            k4: k4_bound.map_or(max_ratio < 1.0, |b| max_ratio <= b),
            k5: true,
        };
        Ok(Self {
            faces: FaceCoefficients::from_nodal(&samples),
            samples,
            profile,
            k_m,
            k0,
            k1,
            r0,
            gamma0,
            lip_grad_sup: lip,
            eta0,
            advertised,
        })
    }
}

fn sample(grid: Grid2D, profile: &RadialProfile, r0: f64, k0: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x, y| {
        let r = (x * x + y * y).sqrt();
        if r >= r0 {
            k0
        } else {
            profile.value(r)
        }
    })
}

fn check_r0(r0: f64, grid: &Grid2D) -> Result<(), CoefficientError> {
    let min = 4.0 * grid.spacing();
    if !(r0 > 0.0) || r0 < min {
        return Err(CoefficientError::RadiusTooSmall { r0, min });
    }
    Ok(())
}

/// `K ≡ k0`.
pub fn make_constant(k0: f64, grid: Grid2D) -> Result<CoefficientField, CoefficientError> {
    if !(k0 > 0.0) {
        return Err(CoefficientError::NonPositiveModulus(k0));
    }
    CoefficientField::assemble(grid, RadialProfile::Constant { k0 }, k0, 1.0, Some(0.0))
}

/// `(1+|x|²)^{γ₀/2}` inside `r0/2`, constant `(1+r0²)^{γ₀/2}` from `r0` on,
/// with a C¹ monotone bridge in between that keeps `x·∇K ≤ γ₀K`.
pub fn make_remark42(
    gamma0: f64,
    r0: f64,
    grid: Grid2D,
) -> Result<CoefficientField, CoefficientError> {
    if !(0.0..1.0).contains(&gamma0) {
        return Err(CoefficientError::GammaOutOfRange(gamma0));
    }
    check_r0(r0, &grid)?;
    let k0 = (1.0 + r0 * r0).powf(0.5 * gamma0);
    let profile = RadialProfile::Remark42 {
        gamma0,
        r0,
        bridge: LogBridge::new(gamma0, r0),
    };
    let field = CoefficientField::assemble(grid, profile, k0, r0, Some(gamma0))?;
    let report = validate_conditions(&field);
    if !report.k4.pass {
        let (x, y) = report.k4.worst_at;
        return Err(CoefficientError::GammaViolated {
            measured: report.measured_gamma0,
            gamma0,
            x,
            y,
        });
    }
    Ok(field)
}

/// `k0 + (k_peak − k0)·B(|x|/r0)` with the standard bump `B`.
pub fn make_radial_decreasing(
    k_peak: f64,
    k0: f64,
    r0: f64,
    grid: Grid2D,
) -> Result<CoefficientField, CoefficientError> {
    if !(k0 > 0.0) {
        return Err(CoefficientError::NonPositiveModulus(k0));
    }
    if k_peak < k0 {
        return Err(CoefficientError::PeakBelowFarField { k_peak, k0 });
    }
    check_r0(r0, &grid)?;
    let gamma0 = Some(0.0);
    CoefficientField::assemble(
        grid,
        RadialProfile::RadialDecreasing { k_peak, k0, r0 },
        k0,
        r0,
        gamma0,
    )
}

/// Non-monotone wiggle `k0 + amplitude·B(|x|/r0)·cos(2|x|)`.
pub fn make_lipschitz_perturbation(
    k0: f64,
    amplitude: f64,
    r0: f64,
    grid: Grid2D,
) -> Result<CoefficientField, CoefficientError> {
    if !(k0 > 0.0) {
        return Err(CoefficientError::NonPositiveModulus(k0));
    }
    check_r0(r0, &grid)?;
    let profile = RadialProfile::Lipschitz { k0, amplitude, r0 };
    let field = CoefficientField::assemble(grid, profile, k0, r0, None)?;
    match field.eta0 {
        Some(_) => Ok(field),
        None => Err(CoefficientError::EtaTooLarge(
            field.r0 * field.lip_grad_sup / field.k_m,
        )),
    }
}

/// Amplitude giving the Lipschitz wiggle a prescribed `‖∇K‖∞`.
pub fn lipschitz_amplitude_for(grad_sup: f64, r0: f64) -> f64 {
    let unit = RadialProfile::Lipschitz {
        k0: 1.0,
        amplitude: 1.0,
        r0,
    };
    let sup = unit.scan(r0).fold(0.0f64, |m, (_, _, d)| m.max(d.abs()));
    grad_sup / sup
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub pass: bool,
    pub worst_violation: f64,
    /// Node where the worst value was seen.
    pub worst_at: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub k1: ConditionCheck,
    pub k2: ConditionCheck,
    pub k3: ConditionCheck,
    pub k4: ConditionCheck,
    pub k5: ConditionCheck,
    /// `max x·∇K / K` over nodes.
    pub measured_gamma0: f64,
    /// `max x·∇K` over nodes.
    pub measured_xgrad: f64,
    /// `max |∇K|` over nodes.
    pub measured_lip: f64,
}

impl ConditionReport {
    pub fn hypotheses(&self) -> Hypotheses {
        Hypotheses {
            k1: self.k1.pass,
            k2: self.k2.pass,
            k3: self.k3.pass,
            k4: self.k4.pass,
            k5: self.k5.pass,
        }
    }
}

/// Checks K-1 … K-5 on the grid samples, using the central-difference
/// gradient for the sign conditions.
pub fn validate_conditions(k: &CoefficientField) -> ConditionReport {
    let grid = *k.grid();
    let v = k.samples().values();
    let (gx, gy) = gradient(k.samples());
    let origin = (0.0, 0.0);

    let mut k1 = (0.0f64, origin);
    let mut k3 = (0.0f64, origin);
    let mut xgrad = (f64::NEG_INFINITY, origin);
    let mut ratio = (f64::NEG_INFINITY, origin);
    let mut lip = (0.0f64, origin);
    for (idx, &kv) in v.iter().enumerate() {
        let (x, y) = grid.position(idx);
        let at = (x, y);
        let under = k.k_m - kv;
        if under > k1.0 {
            k1 = (under, at);
        }
        if (x * x + y * y).sqrt() > k.r0 {
            let off = (kv - k.k0).abs();
            if off > k3.0 {
                k3 = (off, at);
            }
        }
        let (dx, dy) = (gx.values()[idx], gy.values()[idx]);
        let xg = x * dx + y * dy;
        if xg > xgrad.0 {
            xgrad = (xg, at);
        }
        if xg / kv > ratio.0 {
            ratio = (xg / kv, at);
        }
        let g = dx.hypot(dy);
        if g > lip.0 {
            lip = (g, at);
        }
    }

    let check = |pass: bool, worst: f64, at: (f64, f64)| ConditionCheck {
        pass,
        worst_violation: worst.max(0.0),
        worst_at: at,
    };
    let k4 = match k.gamma0.or(k.eta0) {
        Some(bound) => check(ratio.0 <= bound + SIGN_TOLERANCE, ratio.0 - bound, ratio.1),
        None => check(ratio.0 < 1.0, ratio.0 - 1.0, ratio.1),
    };
    ConditionReport {
        k1: check(k1.0 <= 0.0, k1.0, k1.1),
        k2: check(xgrad.0 <= SIGN_TOLERANCE, xgrad.0, xgrad.1),
        k3: check(k3.0 == 0.0, k3.0, k3.1),
        k4,
        k5: check(
            lip.0.is_finite() && lip.0 <= k.lip_grad_sup + LIPSCHITZ_TOLERANCE,
            lip.0 - k.lip_grad_sup,
            lip.1,
        ),
        measured_gamma0: ratio.0.max(0.0),
        measured_xgrad: xgrad.0,
        measured_lip: lip.0,
    }
}

/// Family name plus parameters, buildable on any grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientSpec {
    Constant { k0: f64 },
    Remark42 { gamma0: f64, r0: f64 },
    RadialDecreasing { k_peak: f64, k0: f64, r0: f64 },
    Lipschitz { k0: f64, amplitude: f64, r0: f64 },
}

impl CoefficientSpec {
    pub fn family(&self) -> &'static str {
        match self {
            CoefficientSpec::Constant { .. } => "constant",
            CoefficientSpec::Remark42 { .. } => "remark42",
            CoefficientSpec::RadialDecreasing { .. } => "radial-decreasing",
            CoefficientSpec::Lipschitz { .. } => "lipschitz",
        }
    }

    /// Radius beyond which `K ≡ k0`.
    pub fn r0(&self) -> f64 {
        match *self {
            CoefficientSpec::Constant { .. } => 1.0,
            CoefficientSpec::Remark42 { r0, .. }
            | CoefficientSpec::RadialDecreasing { r0, .. }
            | CoefficientSpec::Lipschitz { r0, .. } => r0,
        }
    }

    pub fn build(&self, grid: Grid2D) -> Result<CoefficientField, CoefficientError> {
        match *self {
            CoefficientSpec::Constant { k0 } => make_constant(k0, grid),
            CoefficientSpec::Remark42 { gamma0, r0 } => make_remark42(gamma0, r0, grid),
            CoefficientSpec::RadialDecreasing { k_peak, k0, r0 } => {
                make_radial_decreasing(k_peak, k0, r0, grid)
            }
            CoefficientSpec::Lipschitz { k0, amplitude, r0 } => {
                make_lipschitz_perturbation(k0, amplitude, r0, grid)
            }
        }
    }
}
