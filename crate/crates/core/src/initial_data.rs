//! Compactly supported initial data `(u0, u1)` and the norms the estimates use.

use crate::field::{integrate, Grid2D, Region, ScalarField};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("bump radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("support radius L must be positive, got {0}")]
    NonPositiveSupport(f64),
    #[error("data reaches |x| = {radius}, beyond the support radius L = {support}")]
    SupportExceeded { radius: f64, support: f64 },
    #[error("support radius L = {support} does not fit in the grid half-width {half_width}")]
    GridTooSmall { support: f64, half_width: f64 },
    #[error("unknown data preset `{0}` (expected bump-velocity, bump-displacement, dipole-velocity or zero)")]
    UnknownPreset(String),
}

/// `amplitude · exp(1 − 1/(1 − s²))`, `s = |x − center| / radius`, zero for `s ≥ 1`.
pub fn make_bump(
    center: (f64, f64),
    radius: f64,
    amplitude: f64,
    grid: Grid2D,
) -> Result<ScalarField, DataError> {
    if !(radius > 0.0) {
        return Err(DataError::NonPositiveRadius(radius));
    }
    Ok(ScalarField::from_fn(grid, |x, y| {
        let s2 = ((x - center.0).powi(2) + (y - center.1).powi(2)) / (radius * radius);
        if s2 < 1.0 {
            amplitude * (1.0 - 1.0 / (1.0 - s2)).exp()
        } else {
            0.0
        }
    }))
}

/// `∫u1 dx`.
pub fn moment(u1: &ScalarField) -> f64 {
    integrate(u1, Region::Full).expect("full-domain quadrature")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `u0 = 0`, `u1` a centred bump (nonzero moment).
    BumpVelocity,
    /// `u0` a centred bump, `u1 = 0`.
    BumpDisplacement,
    /// `u0 = 0`, `u1` odd in `x1` (zero moment).
    DipoleVelocity,
    Zero,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::BumpVelocity => "bump-velocity",
            Preset::BumpDisplacement => "bump-displacement",
            Preset::DipoleVelocity => "dipole-velocity",
            Preset::Zero => "zero",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bump-velocity" => Ok(Preset::BumpVelocity),
            "bump-displacement" => Ok(Preset::BumpDisplacement),
            "dipole-velocity" => Ok(Preset::DipoleVelocity),
            "zero" => Ok(Preset::Zero),
            other => Err(DataError::UnknownPreset(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    pub preset: Preset,
    /// Support radius `L`.
    pub support: f64,
    pub amplitude: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            preset: Preset::BumpVelocity,
            support: 1.0,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: ScalarField,
    pub u1: ScalarField,
    /// Support radius `L`.
    pub support: f64,
    pub norm_u0_l2: f64,
    pub norm_u1_l2: f64,
    pub norm_u1_l1: f64,
    pub norm_u1_linf: f64,
    /// `M = ∫u1`.
    pub moment: f64,
}

impl InitialData {
    /// Wraps explicit fields, checking the support and caching norms.
    pub fn new(u0: ScalarField, u1: ScalarField, support: f64) -> Result<Self, DataError> {
        if !(support > 0.0) {
            return Err(DataError::NonPositiveSupport(support));
        }
        u0.check_grid(&u1).expect("u0 and u1 share a grid");
        let grid = *u0.grid();
        for f in [&u0, &u1] {
            for (idx, &v) in f.values().iter().enumerate() {
                if v != 0.0 {
                    let (x, y) = grid.position(idx);
                    let r = x.hypot(y);
                    if r > support {
                        return Err(DataError::SupportExceeded { radius: r, support });
                    }
                }
            }
        }
        let sq = |f: &ScalarField| integrate(&f.map(|v| v * v), Region::Full).unwrap();
        Ok(Self {
            norm_u0_l2: sq(&u0).sqrt(),
            norm_u1_l2: sq(&u1).sqrt(),
            norm_u1_l1: integrate(&u1.map(f64::abs), Region::Full).unwrap(),
            norm_u1_linf: u1.max_abs(),
            moment: moment(&u1),
            u0,
            u1,
            support,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        self.u0.grid()
    }

    pub fn is_zero(&self) -> bool {
        self.u0.max_abs() == 0.0 && self.u1.max_abs() == 0.0
    }
}

/// Builds one of the named presets on `grid`.
pub fn make_dataset(spec: &DataSpec, grid: Grid2D) -> Result<InitialData, DataError> {
    let l = spec.support;
    if !(l > 0.0) {
        return Err(DataError::NonPositiveSupport(l));
    }
    if l > grid.half_width() {
        return Err(DataError::GridTooSmall {
            support: l,
            half_width: grid.half_width(),
        });
    }
    let zero = ScalarField::zeros(grid);
    let bump = || make_bump((0.0, 0.0), l, spec.amplitude, grid);
    let (u0, u1) = match spec.preset {
        Preset::BumpVelocity => (zero, bump()?),
        Preset::BumpDisplacement => (bump()?, zero),
        Preset::DipoleVelocity => {
            let right = make_bump((0.5 * l, 0.0), 0.5 * l, spec.amplitude, grid)?;
            let left = make_bump((-0.5 * l, 0.0), 0.5 * l, spec.amplitude, grid)?;
            (zero, right.zip_with(&left, |a, b| a - b).unwrap())
        }
        Preset::Zero => (zero.clone(), zero),
    };
    InitialData::new(u0, u1, l)
}
