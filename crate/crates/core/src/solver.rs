//! Leapfrog integration of `u_tt = ∇·(K∇u)` on a domain large enough that
//! the discrete solution never reaches the boundary.
//!
//! Each step only touches the square index box that can hold nonzero values.
//! The five-point stencil spreads support by one node per step, but the
//! discrete precursor ahead of the front decays faster than exponentially, so
//! values below `FLUSH_RELATIVE` times the data scale are set to zero. That
//! keeps the box close to the physical support and keeps subnormal numbers
//! out of the inner loop.

use crate::coefficients::{CoefficientError, CoefficientField, CoefficientSpec};
use crate::diagnostics::{
    AntiderivativeSample, DiagnosticsError, EnergyRecord, MorawetzLedger, Observation, Probe,
};
use crate::field::{half_nodes_for, FieldError, Grid2D, IndexBox, ScalarField};
use crate::initial_data::{make_dataset, DataError, DataSpec, InitialData};
use rayon::prelude::*;
use std::f64::consts::SQRT_2;
use thiserror::Error;

/// Default cap on grid nodes (about 3 GB of working arrays).
pub const DEFAULT_MAX_NODES: usize = 40_000_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error("domain needs {required} nodes, above the cap of {cap}")]
    DomainTooLarge { required: usize, cap: usize },
    #[error("non-finite value at step {step} (t = {t}); the scheme went unstable")]
    Unstable { step: usize, t: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Values below this fraction of the data scale are flushed to zero.
pub const FLUSH_RELATIVE: f64 = 1e-40;

/// Test-only source term `f(t, x, y)`.
pub type Forcing<'a> = &'a (dyn Fn(f64, f64, f64) -> f64 + Sync);

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub data: DataSpec,
    pub coefficient: CoefficientSpec,
    /// Localized-energy radius `R`.
    pub radius: f64,
    pub t_max: f64,
    pub dx: f64,
    pub cfl: f64,
    pub sample_stride: usize,
    pub max_nodes: usize,
}

impl SimulationConfig {
    /// Defaults for everything but the physics.
    pub fn new(data: DataSpec, coefficient: CoefficientSpec, t_max: f64) -> Self {
        Self {
            data,
            coefficient,
            radius: 2.0 * coefficient.r0(),
            t_max,
            dx: 0.05,
            cfl: 0.5,
            sample_stride: 10,
            max_nodes: DEFAULT_MAX_NODES,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |key, reason: String| Err(SolverError::InvalidConfig { key, reason });
        let r0 = self.coefficient.r0();
        if !(self.radius > r0) {
            return bad("R", format!("R = {} must exceed r0 = {r0}", self.radius));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad("cfl", format!("{} is not in (0, 1)", self.cfl));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad(
                "T_max",
                format!("{} is not a non-negative time", self.t_max),
            );
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return bad("dx", format!("{} is not positive", self.dx));
        }
        if self.sample_stride == 0 {
            return bad("stride", "must be at least 1".into());
        }
        if !(self.data.support > 0.0) {
            return bad("L", format!("{} is not positive", self.data.support));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub u_prev: ScalarField,
    pub u_curr: ScalarField,
    pub t: f64,
    pub step: usize,
    dt: f64,
    active: IndexBox,
    floor: f64,
}

impl WaveState {
    pub fn grid(&self) -> &Grid2D {
        self.u_curr.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Index box outside which both time levels vanish. It never shrinks, so
    /// it also covers everything either level has held.
    pub fn active_box(&self) -> IndexBox {
        self.active
    }

    /// Swaps the two time levels, so further steps run the dynamics backward.
    pub fn reversed(mut self) -> WaveState {
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        self
    }
}

/// Half-width `L + k1·T + 8·dx`, rounded up to the lattice, with the node cap
/// enforced.
pub fn domain_extent(config: &SimulationConfig, k1: f64) -> Result<f64, SolverError> {
    let reach = config.data.support + k1 * config.t_max + 8.0 * config.dx;
    let half = half_nodes_for(reach, config.dx);
    let side = 2 * half + 1;
    let required = side.saturating_mul(side);
    if required > config.max_nodes {
        return Err(SolverError::DomainTooLarge {
            required,
            cap: config.max_nodes,
        });
    }
    Ok(half as f64 * config.dx)
}

pub fn cfl_timestep(dx: f64, k1: f64, cfl: f64) -> f64 {
    cfl * dx / (k1 * SQRT_2)
}

/// Smallest centred box holding every nonzero node of the given fields.
fn support_box(fields: &[&ScalarField]) -> IndexBox {
    let grid = *fields[0].grid();
    let n = grid.nodes_per_side();
    let c = grid.center();
    let mut half = 0;
    for f in fields {
        for (idx, &v) in f.values().iter().enumerate() {
            if v != 0.0 {
                let (i, j) = (idx % n, idx / n);
                half = half.max(i.abs_diff(c)).max(j.abs_diff(c));
            }
        }
    }
    IndexBox {
        lo: c - half,
        hi: c + half,
    }
}

/// Taylor start `u(Δt) ≈ u0 + Δt·u1 + ½Δt²·∇·(K∇u0)`.
pub fn first_step(
    data: &InitialData,
    k: &CoefficientField,
    dt: f64,
) -> Result<WaveState, SolverError> {
    data.u0.check_grid(k.samples())?;
    let grid = *data.grid();
    let h = grid.spacing();
    let c = 0.5 * dt * dt / (h * h);
    let n = grid.nodes_per_side();
    let bx = support_box(&[&data.u0, &data.u1]).grow(1, &grid);
    let u0 = data.u0.values();
    let u1 = data.u1.values();
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = FLUSH_RELATIVE * (peak(u0) + peak(u1));
    let kv = k.samples().values();
    let faces = k.faces();
    let mut curr = ScalarField::zeros(grid);
    curr.values_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, row)| {
            if j < bx.lo || j > bx.hi {
                return;
            }
            for (i, out) in (bx.lo..=bx.hi).zip(&mut row[bx.lo..=bx.hi]) {
                let idx = j * n + i;
                let next = u0[idx] + dt * u1[idx] + c * faces.flux_at(kv[idx], u0, i, j);
                *out = if next.abs() < floor { 0.0 } else { next };
            }
        });
    if !curr.is_finite() {
        return Err(SolverError::Unstable { step: 1, t: dt });
    }
    Ok(WaveState {
        u_prev: data.u0.clone(),
        u_curr: curr,
        t: dt,
        step: 1,
        dt,
        active: bx,
        floor,
    })
}

/// Nonzero index range of one row, as `(lo, hi)` in both axes.
#[derive(Clone, Copy)]
struct RowExtent {
    unstable: bool,
    lo: usize,
    hi: usize,
}

impl RowExtent {
    const EMPTY: RowExtent = RowExtent {
        unstable: false,
        lo: usize::MAX,
        hi: 0,
    };

    fn merge(self, o: RowExtent) -> RowExtent {
        RowExtent {
            unstable: self.unstable || o.unstable,
            lo: self.lo.min(o.lo),
            hi: self.hi.max(o.hi),
        }
    }
}

/// One leapfrog step, optionally also accumulating `v += ½Δt(uⁿ + uⁿ⁺¹)`.
fn advance(
    state: &mut WaveState,
    k: &CoefficientField,
    forcing: Option<Forcing>,
    antiderivative: Option<&mut [f64]>,
) -> Result<(), SolverError> {
    state.u_curr.check_grid(k.samples())?;
    let grid = *state.grid();
    let n = grid.nodes_per_side();
    let h = grid.spacing();
    let dt = state.dt;
    let c = dt * dt / (h * h);
    let bx = if forcing.is_some() {
        grid.full_box()
    } else {
        state.active.grow(1, &grid)
    };
    let kv = k.samples().values();
    let faces = k.faces();
    let (east, north) = (&faces.east[..], &faces.north[..]);
    let t = state.t;
    let cur = state.u_curr.values();

    let floor = state.floor;

    let row_kernel = |j: usize, prev: &mut [f64], v: Option<&mut [f64]>| -> RowExtent {
        if j < bx.lo || j > bx.hi {
            return RowExtent::EMPTY;
        }
        let base = j * n;
        let slow = |i: usize| faces.flux_at(kv[base + i], cur, i, j);
        let (lo, hi) = (bx.lo, bx.hi);
        let update = |prev: &mut f64, uc: f64, flux: f64| *prev = 2.0 * uc - *prev + c * flux;
        if j > 0 && j + 1 < n {
            let (ilo, ihi) = (lo.max(1), hi.min(n - 2));
            if ilo <= ihi {
                let span = base + ilo..base + ihi + 1;
                let wide = base + ilo - 1..base + ihi + 2;
                let (c_w, c_s, c_n) = (
                    &cur[wide.clone()],
                    &cur[span.start - n..span.end - n],
                    &cur[span.start + n..span.end + n],
                );
                let (e_w, n_s, n_c) = (
                    &east[wide.start..span.end],
                    &north[span.start - n..span.end - n],
                    &north[span.clone()],
                );
                let out = &mut prev[ilo..=ihi];
                for (m, p) in out.iter_mut().enumerate() {
                    let uc = c_w[m + 1];
                    let flux = e_w[m + 1] * (c_w[m + 2] - uc)
                        + e_w[m] * (c_w[m] - uc)
                        + n_c[m] * (c_n[m] - uc)
                        + n_s[m] * (c_s[m] - uc);
                    update(p, uc, flux);
                }
            }
            if lo == 0 {
                update(&mut prev[0], cur[base], slow(0));
            }
            if hi == n - 1 {
                update(&mut prev[hi], cur[base + hi], slow(hi));
            }
        } else {
            for i in lo..=hi {
                update(&mut prev[i], cur[base + i], slow(i));
            }
        }
        if let Some(f) = forcing {
            for (i, p) in (lo..=hi).zip(&mut prev[lo..=hi]) {
                *p += dt * dt * f(t, grid.coord(i), grid.coord(j));
            }
        }

        let row = &mut prev[lo..=hi];
        let mut unstable = false;
        for x in row.iter_mut() {
            unstable |= !x.is_finite();
            if x.abs() < floor {
                *x = 0.0;
            }
        }
        if let Some(v) = v {
            let half = 0.5 * dt;
            for ((acc, &a), &b) in v[lo..=hi]
                .iter_mut()
                .zip(&cur[base + lo..=base + hi])
                .zip(row.iter())
            {
                *acc += half * (a + b);
            }
        }
        match (
            row.iter().position(|&x| x != 0.0),
            row.iter().rposition(|&x| x != 0.0),
        ) {
            (Some(a), Some(b)) => RowExtent {
                unstable,
                lo: (lo + a).min(j),
                hi: (lo + b).max(j),
            },
            _ => RowExtent {
                unstable,
                ..RowExtent::EMPTY
            },
        }
    };

    let prev = state.u_prev.values_mut();
    let extent = match antiderivative {
        Some(v) => prev
            .par_chunks_mut(n)
            .zip(v.par_chunks_mut(n))
            .enumerate()
            .map(|(j, (p, vr))| row_kernel(j, p, Some(vr)))
            .reduce(|| RowExtent::EMPTY, RowExtent::merge),
        None => prev
            .par_chunks_mut(n)
            .enumerate()
            .map(|(j, p)| row_kernel(j, p, None))
            .reduce(|| RowExtent::EMPTY, RowExtent::merge),
    };
    if extent.unstable {
        return Err(SolverError::Unstable {
            step: state.step + 1,
            t: (state.step + 1) as f64 * dt,
        });
    }
    std::mem::swap(&mut state.u_prev, &mut state.u_curr);
    state.step += 1;
    state.t = state.step as f64 * dt;
    if extent.lo <= extent.hi {
        state.active = state.active.union(IndexBox {
            lo: extent.lo,
            hi: extent.hi,
        });
    }
    Ok(())
}

/// `uⁿ⁺¹ = 2uⁿ − uⁿ⁻¹ + Δt²(∇·(K∇uⁿ) + f(tₙ))`.
///
/// `dt` must match the step the state was started with.
pub fn step(
    mut state: WaveState,
    k: &CoefficientField,
    dt: f64,
    forcing: Option<Forcing>,
) -> Result<WaveState, SolverError> {
    if dt != state.dt {
        return Err(SolverError::InvalidConfig {
            key: "dt",
            reason: format!("state was started with Δt = {}, got {dt}", state.dt),
        });
    }
    advance(&mut state, k, forcing, None)?;
    Ok(state)
}

/// `(u_curr − u_prev)/Δt`, the velocity at `t − Δt/2`.
pub fn velocity(state: &WaveState, dt: f64) -> ScalarField {
    state
        .u_curr
        .zip_with(&state.u_prev, |a, b| (a - b) / dt)
        .expect("state levels share a grid")
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EnergyRecord>,
    pub ledger: Vec<MorawetzLedger>,
    /// Terms of the antiderivative identity at integer time levels.
    pub antiderivative: Vec<AntiderivativeSample>,
    pub final_state: Option<WaveState>,
    pub coefficient: CoefficientField,
    pub data: InitialData,
    pub dt: f64,
    pub steps: usize,
}

pub fn run(config: &SimulationConfig) -> Result<RunOutput, SolverError> {
    run_with_sink(config, |_, _| {})
}

/// Runs to `T_max`, handing each record to `sink` as it is produced.
pub fn run_with_sink(
    config: &SimulationConfig,
    mut sink: impl FnMut(&EnergyRecord, &MorawetzLedger),
) -> Result<RunOutput, SolverError> {
    config.validate()?;
    let probe_grid = Grid2D::covering(config.coefficient.r0() + 4.0 * config.dx, config.dx)?;
    let k1 = config.coefficient.build(probe_grid)?.k1();
    let half_width = domain_extent(config, k1)?;
    let grid = Grid2D::covering(half_width, config.dx)?;
    let k = config.coefficient.build(grid)?;
    let data = make_dataset(&config.data, grid)?;
    let dt = cfl_timestep(config.dx, k.k1(), config.cfl);
    let steps = if config.t_max > 0.0 {
        (config.t_max / dt - 1e-9).ceil() as usize
    } else {
        0
    };

    let mut probe = Probe::new(&k, &data, config.radius, dt)?;
    let mut records = Vec::new();
    let mut ledger = Vec::new();
    let mut antiderivative = vec![probe.antiderivative_initial()];
    let j0 = probe.j0();
    let first = probe.observe_initial();
    let mut push =
        |obs: Observation, records: &mut Vec<EnergyRecord>, ledger: &mut Vec<MorawetzLedger>| {
            let entry = ledger_entry(ledger.last(), &obs, j0);
            sink(&obs.record, &entry);
            records.push(obs.record);
            ledger.push(entry);
        };
    push(first, &mut records, &mut ledger);

    if steps == 0 {
        return Ok(RunOutput {
            records,
            ledger,
            antiderivative,
            final_state: None,
            coefficient: k,
            data,
            dt,
            steps,
        });
    }

    let mut v = vec![0.0; grid.len()];
    let mut state = first_step(&data, &k, dt)?;
    {
        let bx = state.active;
        let n = grid.nodes_per_side();
        for j in bx.lo..=bx.hi {
            for i in bx.lo..=bx.hi {
                let idx = j * n + i;
                v[idx] = 0.5 * dt * (state.u_prev.values()[idx] + state.u_curr.values()[idx]);
            }
        }
    }
    let due = |s: usize| s.is_multiple_of(config.sample_stride) || s == steps;
    loop {
        if due(state.step) {
            let obs = probe.observe(&state);
            push(obs, &mut records, &mut ledger);
            antiderivative.push(probe.antiderivative(&state, &v));
        }
        if state.step >= steps {
            break;
        }
        advance(&mut state, &k, None, Some(&mut v))?;
    }
    Ok(RunOutput {
        records,
        ledger,
        antiderivative,
        final_state: Some(state),
        coefficient: k,
        data,
        dt,
        steps,
    })
}

fn ledger_entry(previous: Option<&MorawetzLedger>, obs: &Observation, j0: f64) -> MorawetzLedger {
    let k_integral = match previous {
        Some(p) => p.k_integral + 0.5 * (obs.record.t - p.t) * (p.k_density + obs.k_density),
        None => 0.0,
    };
    MorawetzLedger {
        t: obs.record.t,
        j0,
        k_integral,
        k_density: obs.k_density,
        cross_ut_u: obs.cross_ut_u,
        cross_ut_xgradu: obs.cross_ut_xgradu,
    }
}
