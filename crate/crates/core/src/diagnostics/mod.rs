//! Energies, the multiplier ledger, and audits of the decay and growth
//! estimates against recorded series.

mod audit;
mod bounds;
mod fit;
mod records;

pub use audit::{AuditEntry, AuditReport, SIMULATION_SLACK};
pub use bounds::{
    antiderivative_audit, energy_audit, gronwall_bound, growth_audit, local_energy_audit,
    local_energy_integral, morawetz_identity_audit, support_audit, virial_audit,
    weighted_energy_audit, BoundInputs, GronwallResult, ENERGY_TOLERANCE, GROWTH_START,
    IDENTITY_TOLERANCE,
};
pub use fit::{
    decay_fit, growth_fit, linear_fit, DecayFit, DecayModel, GrowthFit, ModelFit,
    MIN_DECAY_SAMPLES, MIN_GROWTH_SAMPLES,
};
pub use records::{
    compute_j0, energy, initial_weighted_energy, local_energy, morawetz_residual,
    AntiderivativeSample, EnergyRecord, MorawetzLedger, Observation, Probe, SUPPORT_THRESHOLD,
};

use crate::field::FieldError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("localized-energy radius R = {radius} must exceed r0 = {r0}")]
    RadiusNotBeyondR0 { radius: f64, r0: f64 },
    #[error("need at least {needed} samples in range, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{excluded} of {total} samples in the window have nonpositive energy")]
    TooManyExcluded { excluded: usize, total: usize },
    #[error("fit window [{start}, {end}] must satisfy 1 < start < end")]
    BadWindow { start: f64, end: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}
