//! Per-sample energies and multiplier terms, computed in one fused pass over
//! the active part of the grid.

use super::DiagnosticsError;
use crate::coefficients::CoefficientField;
use crate::field::{
    disc_fraction_at, gradient, gradient_at, integrate, FieldError, Grid2D, IndexBox, Region,
    ScalarField,
};
use crate::initial_data::InitialData;
use crate::solver::{velocity, WaveState};
use crate::weights::psi_value;
use rayon::prelude::*;

/// Nodes with `|u|` above this fraction of `max|u|` count towards the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRecord {
    pub t: f64,
    pub e_total: f64,
    pub e_loc: f64,
    pub e_ext: f64,
    pub l2_norm: f64,
    /// `∫_{|x|>r0} ψ e`.
    pub weighted_ext: f64,
    pub support_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MorawetzLedger {
    pub t: f64,
    pub j0: f64,
    /// `½∫₀ᵗ∫(x·∇K)|∇u|²`, trapezoid in time.
    pub k_integral: f64,
    /// The inner integrand `½∫(x·∇K)|∇u|²` at `t`.
    pub k_density: f64,
    /// `½∫u_t u`.
    pub cross_ut_u: f64,
    /// `∫u_t (x·∇u)`.
    pub cross_ut_xgradu: f64,
}

/// Terms of `½‖u‖² + ½‖√K∇v‖² = ½‖u0‖² + ∫u1 v`, `v = ∫₀ᵗu`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AntiderivativeSample {
    pub t: f64,
    pub half_u_sq: f64,
    pub half_kgradv_sq: f64,
    pub u1_v: f64,
}

impl AntiderivativeSample {
    /// Identity residual over `½‖u0‖² + |∫u1 v|` (zero when both vanish).
    pub fn residual(&self, half_u0_sq: f64) -> f64 {
        let lhs = self.half_u_sq + self.half_kgradv_sq;
        let rhs = half_u0_sq + self.u1_v;
        let scale = half_u0_sq + self.u1_v.abs();
        if scale == 0.0 {
            (lhs - rhs).abs()
        } else {
            (lhs - rhs) / scale
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub record: EnergyRecord,
    pub k_density: f64,
    pub cross_ut_u: f64,
    pub cross_ut_xgradu: f64,
}

#[derive(Default, Clone, Copy)]
struct RowSums {
    e_total: f64,
    e_loc: f64,
    e_ext: f64,
    weighted: f64,
    l2: f64,
    cross_u: f64,
    cross_x: f64,
    k_density: f64,
    support: f64,
}

/// Holds the per-run arrays the fused diagnostic pass needs.
pub struct Probe<'a> {
    k: &'a CoefficientField,
    data: &'a InitialData,
    grid: Grid2D,
    radius: f64,
    speed: f64,
    dt: f64,
    j0: f64,
    xgrad_k: Vec<f64>,
    half: Vec<f64>,
    rate: Vec<f64>,
    /// `(Δt/2)²`: turns `d(u_half)² − (Δt/2)²d(u_t)²` into `d(uⁿ)·d(uⁿ⁻¹)`.
    lag: f64,
    written: Option<IndexBox>,
}

impl<'a> Probe<'a> {
    pub fn new(
        k: &'a CoefficientField,
        data: &'a InitialData,
        radius: f64,
        dt: f64,
    ) -> Result<Self, DiagnosticsError> {
        data.u0.check_grid(k.samples())?;
        if !(radius > k.r0()) {
            return Err(DiagnosticsError::RadiusNotBeyondR0 { radius, r0: k.r0() });
        }
        let grid = *k.grid();
        let (gx, gy) = gradient(k.samples());
        let xgrad_k = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.position(idx);
                x * gx.values()[idx] + y * gy.values()[idx]
            })
            .collect();
        Ok(Self {
            k,
            data,
            grid,
            radius,
            speed: k.k0().sqrt(),
            dt,
            j0: compute_j0(data),
            xgrad_k,
            half: vec![0.0; grid.len()],
            rate: vec![0.0; grid.len()],
            lag: 0.0,
            written: None,
        })
    }

    pub fn j0(&self) -> f64 {
        self.j0
    }

    /// Record at `t = 0` from the exact data.
    pub fn observe_initial(&mut self) -> Observation {
        let (u0, u1) = (self.data.u0.values(), self.data.u1.values());
        let bx = self.grid.full_box();
        self.lag = 0.0;
        self.measure(0.0, bx, |idx| u0[idx], |idx| u1[idx])
    }

    /// Record at the half-step `t − Δt/2` of `state`.
    pub fn observe(&mut self, state: &WaveState) -> Observation {
        let (prev, curr) = (state.u_prev.values(), state.u_curr.values());
        let inv_dt = 1.0 / self.dt;
        let t = state.t - 0.5 * self.dt;
        self.lag = 0.25 * self.dt * self.dt;
        self.measure(
            t,
            state.active_box(),
            |idx| 0.5 * (prev[idx] + curr[idx]),
            |idx| (curr[idx] - prev[idx]) * inv_dt,
        )
    }

    pub fn antiderivative_initial(&self) -> AntiderivativeSample {
        let u0 = &self.data.u0;
        AntiderivativeSample {
            t: 0.0,
            half_u_sq: 0.5 * integrate(&u0.map(|v| v * v), Region::Full).unwrap(),
            half_kgradv_sq: 0.0,
            u1_v: 0.0,
        }
    }

    /// Identity terms at the integer level of `state.u_curr`, with `v` the
    /// running time integral of `u` up to that level.
    pub fn antiderivative(&self, state: &WaveState, v: &[f64]) -> AntiderivativeSample {
        let grid = self.grid;
        let n = grid.nodes_per_side();
        let bx = state.active_box().grow(1, &grid);
        let u = state.u_curr.values();
        let kv = self.k.samples().values();
        let u1 = self.data.u1.values();
        let rows: Vec<(f64, f64, f64)> = (bx.lo..=bx.hi)
            .into_par_iter()
            .map(|j| {
                let mut acc = (0.0, 0.0, 0.0);
                for i in bx.lo..=bx.hi {
                    let idx = j * n + i;
                    let (gx, gy) = gradient_at(v, &grid, i, j);
                    acc.0 += u[idx] * u[idx];
                    acc.1 += kv[idx] * (gx * gx + gy * gy);
                    acc.2 += u1[idx] * v[idx];
                }
                acc
            })
            .collect();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for r in rows {
            a += r.0;
            b += r.1;
            c += r.2;
        }
        let cell = grid.spacing() * grid.spacing();
        AntiderivativeSample {
            t: state.t,
            half_u_sq: 0.5 * a * cell,
            half_kgradv_sq: 0.5 * b * cell,
            u1_v: c * cell,
        }
    }

    fn measure(
        &mut self,
        t: f64,
        active: IndexBox,
        u_half: impl Fn(usize) -> f64 + Sync,
        u_t: impl Fn(usize) -> f64 + Sync,
    ) -> Observation {
        let grid = self.grid;
        let n = grid.nodes_per_side();
        let h = grid.spacing();
        if let Some(w) = self.written {
            if w.lo < active.lo || w.hi > active.hi {
                self.half.iter_mut().for_each(|v| *v = 0.0);
                self.rate.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        self.written = Some(active);
        let peak = self
            .half
            .par_chunks_mut(n)
            .zip(self.rate.par_chunks_mut(n))
            .enumerate()
            .map(|(j, (row, rate))| {
                let mut m: f64 = 0.0;
                if j >= active.lo && j <= active.hi {
                    for i in active.lo..=active.hi {
                        row[i] = u_half(j * n + i);
                        rate[i] = u_t(j * n + i);
                        m = m.max(row[i].abs());
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        let threshold = SUPPORT_THRESHOLD * peak;

        let bx = active.grow(1, &grid);
        let half = &self.half;
        let rate = &self.rate;
        let lag = self.lag;
        let faces = self.k.faces();
        let kv = self.k.samples().values();
        let xgk = &self.xgrad_k;
        let (radius, r0, speed) = (self.radius, self.k.r0(), self.speed);
        let rows: Vec<RowSums> = (bx.lo..=bx.hi)
            .into_par_iter()
            .map(|j| {
                let y = grid.coord(j);
                let mut s = RowSums::default();
                let inner_row = j > 0 && j + 1 < n;
                let inv2h = 0.5 / h;
                for i in bx.lo..=bx.hi {
                    let idx = j * n + i;
                    let x = grid.coord(i);
                    let uh = half[idx];
                    let ut = rate[idx];
                    let (gx, gy, strain) = if inner_row && i > 0 && i + 1 < n {
                        (
                            (half[idx + 1] - half[idx - 1]) * inv2h,
                            (half[idx + n] - half[idx - n]) * inv2h,
                            faces.strain_interior(half, rate, lag, idx),
                        )
                    } else {
                        let (gx, gy) = gradient_at(half, &grid, i, j);
                        (gx, gy, faces.strain_at(kv[idx], half, rate, lag, i, j))
                    };
                    let g2 = gx * gx + gy * gy;
                    let e = 0.5 * ut * ut + strain;
                    let r = (x * x + y * y).sqrt();
                    if e != 0.0 {
                        let inside = disc_fraction_at(x, y, r, h, radius);
                        s.e_total += e;
                        s.e_loc += e * inside;
                        s.e_ext += e * (1.0 - inside);
                        let outside_r0 = 1.0 - disc_fraction_at(x, y, r, h, r0);
                        if outside_r0 > 0.0 {
                            s.weighted += psi_value(t, r, speed) * e * outside_r0;
                        }
                    }
                    s.l2 += uh * uh;
                    s.cross_u += ut * uh;
                    s.cross_x += ut * (x * gx + y * gy);
                    s.k_density += xgk[idx] * g2;
                    if uh.abs() > threshold {
                        s.support = s.support.max(r);
                    }
                }
                s
            })
            .collect();
        let mut tot = RowSums::default();
        for r in rows {
            tot.e_total += r.e_total;
            tot.e_loc += r.e_loc;
            tot.e_ext += r.e_ext;
            tot.weighted += r.weighted;
            tot.l2 += r.l2;
            tot.cross_u += r.cross_u;
            tot.cross_x += r.cross_x;
            tot.k_density += r.k_density;
            tot.support = tot.support.max(r.support);
        }
        let cell = h * h;
        Observation {
            record: EnergyRecord {
                t,
                e_total: tot.e_total * cell,
                e_loc: tot.e_loc * cell,
                e_ext: tot.e_ext * cell,
                l2_norm: (tot.l2 * cell).sqrt(),
                weighted_ext: tot.weighted * cell,
                support_radius: tot.support,
            },
            k_density: 0.5 * tot.k_density * cell,
            cross_ut_u: 0.5 * tot.cross_u * cell,
            cross_ut_xgradu: tot.cross_x * cell,
        }
    }
}

/// Energy density at the half-step of `state`, and its integral.
///
/// `e = ½u_t² + ½K|∇u|²` with the gradient term taken across cell faces as
/// `K_f d_f(uⁿ) d_f(uⁿ⁻¹)`, shared equally between the two nodes of each
/// face. This is the energy the leapfrog scheme conserves exactly.
pub fn energy(state: &WaveState, k: &CoefficientField) -> Result<(f64, ScalarField), FieldError> {
    state.u_curr.check_grid(k.samples())?;
    let dt = state.dt();
    let ut = velocity(state, dt);
    let uh = state.u_curr.zip_with(&state.u_prev, |a, b| 0.5 * (a + b))?;
    let grid = *uh.grid();
    let n = grid.nodes_per_side();
    let faces = k.faces();
    let lag = 0.25 * dt * dt;
    let values = (0..grid.len())
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let v = ut.values()[idx];
            0.5 * v * v
                + faces.strain_at(
                    k.samples().values()[idx],
                    uh.values(),
                    ut.values(),
                    lag,
                    i,
                    j,
                )
        })
        .collect();
    let e = ScalarField::from_values(grid, values)?;
    Ok((integrate(&e, Region::Full)?, e))
}

/// `∫_{B_R} e`; `R` must exceed `r0`.
pub fn local_energy(
    state: &WaveState,
    k: &CoefficientField,
    radius: f64,
) -> Result<f64, DiagnosticsError> {
    if !(radius > k.r0()) {
        return Err(DiagnosticsError::RadiusNotBeyondR0 { radius, r0: k.r0() });
    }
    let (_, e) = energy(state, k)?;
    Ok(integrate(&e, Region::Disc(radius))?)
}

/// `∫(1 + |x|) e(0, x)` with `e(0) = ½u1² + ½K|∇u0|²` (face form).
pub fn initial_weighted_energy(data: &InitialData, k: &CoefficientField) -> f64 {
    let grid = *data.grid();
    let n = grid.nodes_per_side();
    let faces = k.faces();
    let (u0, u1) = (data.u0.values(), data.u1.values());
    let mut acc = 0.0;
    for idx in 0..grid.len() {
        let (i, j) = (idx % n, idx / n);
        let e =
            0.5 * u1[idx] * u1[idx] + faces.strain_at(k.samples().values()[idx], u0, u1, 0.0, i, j);
        if e != 0.0 {
            let (x, y) = grid.position(idx);
            acc += (1.0 + (x * x + y * y).sqrt()) * e;
        }
    }
    acc * grid.spacing() * grid.spacing()
}

/// `½∫u1 u0 + ∫u1 (x·∇u0)`.
pub fn compute_j0(data: &InitialData) -> f64 {
    let grid = *data.grid();
    let (gx, gy) = gradient(&data.u0);
    let mut acc = 0.0;
    for idx in 0..grid.len() {
        let w = data.u1.values()[idx];
        if w != 0.0 {
            let (x, y) = grid.position(idx);
            acc += w * (0.5 * data.u0.values()[idx] + x * gx.values()[idx] + y * gy.values()[idx]);
        }
    }
    acc * grid.spacing() * grid.spacing()
}

/// `(tE + ½∫u_t u + ∫u_t x·∇u − J0 − ½∫₀ᵗ∫(x·∇K)|∇u|²) / max(1, |J0| + t·E(0))`.
pub fn morawetz_residual(ledger: &MorawetzLedger, record: &EnergyRecord, e0: f64) -> f64 {
    let t = record.t;
    let lhs = t * record.e_total + ledger.cross_ut_u + ledger.cross_ut_xgradu;
    let rhs = ledger.j0 + ledger.k_integral;
    (lhs - rhs) / (ledger.j0.abs() + t * e0).max(1.0)
}
