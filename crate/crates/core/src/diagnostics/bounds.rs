//! Explicit-constant versions of the decay and growth estimates, audited
//! against recorded series.

use super::audit::{AuditEntry, SIMULATION_SLACK};
use super::fit::{growth_fit, GrowthFit, MIN_GROWTH_SAMPLES};
use super::records::{
    initial_weighted_energy, morawetz_residual, AntiderivativeSample, EnergyRecord, MorawetzLedger,
};
use super::DiagnosticsError;
use crate::coefficients::CoefficientField;
use crate::initial_data::InitialData;
use crate::potential::PotentialField;
use std::f64::consts::PI;

/// Tolerance on normalized residuals of exact identities.
pub const IDENTITY_TOLERANCE: f64 = 0.02;
/// Growth-chain samples start here.
pub const GROWTH_START: f64 = 10.0;
/// Allowed relative drift of the total energy.
pub const ENERGY_TOLERANCE: f64 = 1e-3;

/// Data norms and coefficient constants entering the explicit bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub j0: f64,
    pub e0: f64,
    pub norm_u0: f64,
    pub norm_u1_linf: f64,
    pub norm_u1_l1: f64,
    /// `∫(1 + |x|) e(0, x)`.
    pub weighted_e0: f64,
    pub support: f64,
    pub k_m: f64,
    pub k1: f64,
    pub r0: f64,
}

impl BoundInputs {
    pub fn new(data: &InitialData, k: &CoefficientField, j0: f64, e0: f64) -> Self {
        Self {
            j0,
            e0,
            norm_u0: data.norm_u0_l2,
            norm_u1_linf: data.norm_u1_linf,
            norm_u1_l1: data.norm_u1_l1,
            weighted_e0: initial_weighted_energy(data, k),
            support: data.support,
            k_m: k.k_m(),
            k1: k.k1(),
            r0: k.r0(),
        }
    }

    /// `1 + r0`.
    pub fn c_r0(&self) -> f64 {
        1.0 + self.r0
    }

    /// Coefficient of `‖u0‖ + ‖u1‖∞` in the `L²` chain.
    pub fn c1(&self) -> f64 {
        let l = self.support;
        (8.0 * l * l * (2.0 * PI / self.k_m).sqrt()).max(1.0)
    }

    /// Coefficient of `√log(2L + k1t) ‖u1‖₁` in the `L²` chain.
    pub fn c2(&self) -> f64 {
        2.0 / (PI * self.k_m).sqrt()
    }

    pub fn c3(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.c1().max(self.c2())
    }

    fn log_reach(&self, t: f64) -> f64 {
        (2.0 * self.support + self.k1 * t).ln()
    }

    /// `‖u0‖² + (2/k_m)(64πL⁴‖u1‖∞² + (2/π)‖u1‖₁² log(2L + k1t))`.
    pub fn growth_rhs(&self, t: f64) -> f64 {
        let l = self.support;
        let near = 64.0 * PI * l.powi(4) * self.norm_u1_linf.powi(2);
        let far = 2.0 / PI * self.norm_u1_l1.powi(2) * self.log_reach(t);
        self.norm_u0.powi(2) + 2.0 / self.k_m * (near + far)
    }

    /// `J0 + C3√E(0)(‖u0‖ + ‖u1‖∞ + ‖u1‖₁)√max(1, log(2L+k1t)) + (C_r0/√k_m)∫(1+|x|)e(0)`.
    pub fn a0(&self, t: f64) -> f64 {
        let norms = self.norm_u0 + self.norm_u1_linf + self.norm_u1_l1;
        self.j0
            + self.c3() * self.e0.sqrt() * norms * self.log_reach(t).max(1.0).sqrt()
            + self.c_r0() / self.k_m.sqrt() * self.weighted_e0
    }
}

/// `|E(t) − E(0)| ≤ 1e−3·E(0)` at every record (absolute when `E(0) = 0`).
pub fn energy_audit(records: &[EnergyRecord]) -> AuditEntry {
    let e0 = records.first().map_or(0.0, |r| r.e_total);
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    AuditEntry::worst_of(
        "energy_conservation",
        "|E(t) − E(0)| / E(0) ≤ 1e−3",
        records
            .iter()
            .map(|r| (r.t, (r.e_total - e0).abs() / scale, ENERGY_TOLERANCE)),
        0.0,
    )
}

/// Recorded support radius against `L + k1·t + 8Δx`.
pub fn support_audit(records: &[EnergyRecord], support: f64, k1: f64, dx: f64) -> AuditEntry {
    AuditEntry::worst_of(
        "support_containment",
        "supp u(t) ⊂ B_{L+k1 t+8dx} above 1e−12·max|u|",
        records
            .iter()
            .map(|r| (r.t, r.support_radius, support + k1 * r.t + 8.0 * dx)),
        0.0,
    )
}

/// `∫_{|x|>r0} ψ e(t) ≤ (1 + r0)∫(1 + |x|)e(0)` at every record.
pub fn weighted_energy_audit(records: &[EnergyRecord], inputs: &BoundInputs) -> AuditEntry {
    let rhs = inputs.c_r0() * inputs.weighted_e0;
    AuditEntry::worst_of(
        "weighted_exterior_energy",
        "∫_{|x|≥r0} ψ(t,x)e(t,x)dx ≤ C_r0 ∫(1+|x|)e(0,x)dx, C_r0 = 1 + r0",
        records.iter().map(|r| (r.t, r.weighted_ext, rhs)),
        SIMULATION_SLACK,
    )
}

/// `|residual| ≤ 0.02` for the multiplier identity at every record.
pub fn morawetz_identity_audit(records: &[EnergyRecord], ledger: &[MorawetzLedger]) -> AuditEntry {
    let e0 = records.first().map_or(0.0, |r| r.e_total);
    AuditEntry::worst_of(
        "morawetz_identity",
        "tE(t) + ½∫u_t u + ∫u_t(x·∇u) = J0 + ½∫₀ᵗ∫(x·∇K)|∇u|²",
        records
            .iter()
            .zip(ledger)
            .map(|(r, l)| (r.t, morawetz_residual(l, r, e0).abs(), IDENTITY_TOLERANCE)),
        0.0,
    )
}

/// The antiderivative identity, plus the `L²` bound it yields through `h`:
/// `‖u(t)‖² ≤ ‖u0‖² + (2/k_m)∫_{|x|≤2L+k1t}|∇h|²`.
pub fn antiderivative_audit(
    samples: &[AntiderivativeSample],
    inputs: &BoundInputs,
    potential: &PotentialField,
) -> [AuditEntry; 2] {
    let half_u0_sq = 0.5 * inputs.norm_u0 * inputs.norm_u0;
    let identity = AuditEntry::worst_of(
        "antiderivative_identity",
        "½‖v_t‖² + ½‖√K∇v‖² = ½‖u0‖² + ∫u1 v, v = ∫₀ᵗu",
        samples
            .iter()
            .map(|s| (s.t, s.residual(half_u0_sq).abs(), IDENTITY_TOLERANCE)),
        0.0,
    );
    let radii: Vec<f64> = samples
        .iter()
        .map(|s| 2.0 * inputs.support + inputs.k1 * s.t)
        .collect();
    let grad_energy = potential.gradient_energy_within(&radii);
    let bound = AuditEntry::worst_of(
        "l2_potential_bound",
        "‖u(t)‖² ≤ ‖u0‖² + 2C_ε∫_{|x|≤2L+k1t}|∇h|², ε = k_m/4, C_ε = 1/k_m",
        samples.iter().zip(&grad_energy).map(|(s, g)| {
            (
                s.t,
                2.0 * s.half_u_sq,
                inputs.norm_u0.powi(2) + 2.0 / inputs.k_m * g,
            )
        }),
        SIMULATION_SLACK,
    );
    [identity, bound]
}

/// Explicit `L²` growth chain at every record with `t ≥ 10`, and the fit
/// `‖u‖² ≈ a + b log t` there.
pub fn growth_audit(
    records: &[EnergyRecord],
    inputs: &BoundInputs,
) -> Result<(AuditEntry, GrowthFit), DiagnosticsError> {
    let late: Vec<&EnergyRecord> = records.iter().filter(|r| r.t >= GROWTH_START).collect();
    if late.len() < MIN_GROWTH_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            needed: MIN_GROWTH_SAMPLES,
            got: late.len(),
        });
    }
    let t_end = late.last().unwrap().t;
    let fit = growth_fit(records, (GROWTH_START, t_end))?;
    let entry = AuditEntry::worst_of(
        "l2_growth_chain",
        "‖u(t)‖² ≤ ‖u0‖² + (2/k_m)[64πL⁴‖u1‖²_L∞ + (2/π)‖u1‖²_L1 log(2L+k1t)]",
        late.iter()
            .map(|r| (r.t, r.l2_norm * r.l2_norm, inputs.growth_rhs(r.t))),
        SIMULATION_SLACK,
    );
    Ok((entry, fit))
}

/// `tE(t) ≤ J0 − ½∫u_t u − ∫u_t(x·∇u)` at every record; for `x·∇K ≤ 0`.
pub fn virial_audit(records: &[EnergyRecord], ledger: &[MorawetzLedger]) -> AuditEntry {
    AuditEntry::worst_of(
        "virial_inequality",
        "tE(t) ≤ J0 − ½∫u_t u − ∫u_t(x·∇u)",
        records.iter().zip(ledger).map(|(r, l)| {
            (
                r.t,
                r.t * r.e_total,
                l.j0 - l.cross_ut_u - l.cross_ut_xgradu,
            )
        }),
        SIMULATION_SLACK,
    )
}

/// Cumulative trapezoid `∫₀ᵗ E_loc` at each record.
pub fn local_energy_integral(records: &[EnergyRecord]) -> Vec<f64> {
    let mut out = Vec::with_capacity(records.len());
    let mut acc = 0.0;
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            let p = &records[i - 1];
            acc += 0.5 * (r.t - p.t) * (r.e_loc + p.e_loc);
        }
        out.push(acc);
    }
    out
}

/// `(t − R/√k_m)E_loc(t) ≤ A0(t) + bound·∫₀ᵗE_loc` at every record past
/// `R/√k_m`; `bound` is `γ0` or `η0`.
pub fn local_energy_audit(
    records: &[EnergyRecord],
    inputs: &BoundInputs,
    bound: f64,
    radius: f64,
) -> AuditEntry {
    let a = radius / inputs.k_m.sqrt();
    let integral = local_energy_integral(records);
    AuditEntry::worst_of(
        "local_energy_inequality",
        "(t − R/√k_m)E_R(t) ≤ A0(t) + γ0∫₀ᵗE_R(s)ds",
        records
            .iter()
            .zip(&integral)
            .filter(|(r, _)| r.t > a)
            .map(|(r, i)| (r.t, (r.t - a) * r.e_loc, inputs.a0(r.t) + bound * i)),
        SIMULATION_SLACK,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallResult {
    /// Smallest `C*` with `E_loc ≤ C* t^{γ−1}√log t` on `[t0, T]`.
    pub prefactor: f64,
    pub t0: f64,
    pub audit: AuditEntry,
}

/// Checks `Δw/Δt ≤ mean of A0(t)(t − a)^{−γ−1}` on every sample interval from
/// `t0`, where `w = (t − a)^{−γ}∫₀ᵗE_loc` and `a = R/√k_m`, and returns the
/// certified prefactor.
///
/// `t0` defaults to the first record with `t ≥ 10a`.
pub fn gronwall_bound(
    records: &[EnergyRecord],
    inputs: &BoundInputs,
    gamma: f64,
    radius: f64,
    t0: Option<f64>,
) -> Result<GronwallResult, DiagnosticsError> {
    let a = radius / inputs.k_m.sqrt();
    let start = t0.unwrap_or(10.0 * a).max(a);
    let first = records
        .iter()
        .position(|r| r.t >= start && r.t > 1.0)
        .ok_or(DiagnosticsError::TooFewSamples { needed: 2, got: 0 })?;
    if records.len() - first < 2 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 2,
            got: records.len() - first,
        });
    }
    let integral = local_energy_integral(records);
    let w = |i: usize| (records[i].t - a).powf(-gamma) * integral[i];
    let bound = |t: f64| inputs.a0(t) * (t - a).powf(-gamma - 1.0);
    let mut worst: Option<(usize, f64, f64, f64)> = None;
    for i in first..records.len() - 1 {
        let (t_i, t_j) = (records[i].t, records[i + 1].t);
        let lhs = (w(i + 1) - w(i)) / (t_j - t_i);
        let rhs = 0.5 * (bound(t_i) + bound(t_j));
        let m = rhs + SIMULATION_SLACK * rhs.abs() - lhs;
        if worst.is_none_or(|x| m < x.3) {
            worst = Some((i, lhs, rhs, m));
        }
    }
    let (i, lhs, rhs, _) = worst.unwrap();
    let mut audit = AuditEntry::new(
        "gronwall_derivative",
        "w'(t) ≤ A0(t)(t − R/√k_m)^{−γ0−1}, w(t) = (t − R/√k_m)^{−γ0}∫₀ᵗE_R",
        lhs,
        rhs,
        SIMULATION_SLACK,
    );
    audit.detail = format!(
        "worst interval [{:.4}, {:.4}]",
        records[i].t,
        records[i + 1].t
    );
    let prefactor = records[first..]
        .iter()
        .map(|r| r.e_loc / (r.t.powf(gamma - 1.0) * r.t.ln().sqrt()))
        .fold(0.0, f64::max);
    Ok(GronwallResult {
        prefactor,
        t0: records[first].t,
        audit,
    })
}
