use wavedecay::coefficients::CoefficientSpec;
use wavedecay::diagnostics::energy;
use wavedecay::field::{div_k_grad, Grid2D, ScalarField};
use wavedecay::initial_data::{make_dataset, DataSpec, InitialData, Preset};
use wavedecay::solver::{cfl_timestep, first_step, run, step, SimulationConfig, SolverError};

fn bump_data(grid: Grid2D) -> InitialData {
    let spec = DataSpec {
        preset: Preset::BumpVelocity,
        support: 1.0,
        amplitude: 1.0,
    };
    make_dataset(&spec, grid).unwrap()
}

fn displaced(grid: Grid2D) -> InitialData {
    let spec = DataSpec {
        preset: Preset::BumpDisplacement,
        support: 1.5,
        amplitude: 1.0,
    };
    make_dataset(&spec, grid).unwrap()
}

fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn taylor_start_matches_operator() {
    let grid = Grid2D::covering(4.0, 0.1).unwrap();
    let k = CoefficientSpec::Lipschitz {
        k0: 1.0,
        amplitude: 0.05,
        r0: 2.0,
    }
    .build(grid)
    .unwrap();
    let data = displaced(grid);
    let dt = cfl_timestep(0.1, k.k1(), 0.5);
    let state = first_step(&data, &k, dt).unwrap();
    let lap = div_k_grad(k.samples(), &data.u0).unwrap();
    let mut worst: f64 = 0.0;
    for idx in 0..grid.len() {
        let want =
            data.u0.values()[idx] + dt * data.u1.values()[idx] + 0.5 * dt * dt * lap.values()[idx];
        worst = worst.max((state.u_curr.values()[idx] - want).abs());
    }
    assert!(worst < 1e-14);
    assert_eq!(state.step, 1);
    assert_eq!(state.u_prev, data.u0);
}

#[test]
fn fast_kernel_agrees_with_reference_operator() {
    // Small grid so the data touches the outer rows and the slow edge path runs.
    let grid = Grid2D::covering(1.6, 0.1).unwrap();
    let k = CoefficientSpec::RadialDecreasing {
        k_peak: 2.0,
        k0: 1.0,
        r0: 1.0,
    }
    .build(grid)
    .unwrap();
    let data = displaced(grid);
    let dt = cfl_timestep(0.1, k.k1(), 0.5);
    let mut state = first_step(&data, &k, dt).unwrap();
    for _ in 0..20 {
        let (prev, curr) = (state.u_prev.clone(), state.u_curr.clone());
        let lap = div_k_grad(k.samples(), &curr).unwrap();
        state = step(state, &k, dt, None).unwrap();
        let mut worst: f64 = 0.0;
        for idx in 0..grid.len() {
            let want = 2.0 * curr.values()[idx] - prev.values()[idx] + dt * dt * lap.values()[idx];
            worst = worst.max((state.u_curr.values()[idx] - want).abs());
        }
        assert!(worst < 1e-13, "kernel differs by {worst}");
    }
}

#[test]
fn time_reversal() {
    let grid = Grid2D::covering(5.0, 0.1).unwrap();
    let k = CoefficientSpec::Remark42 {
        gamma0: 0.5,
        r0: 2.0,
    }
    .build(grid)
    .unwrap();
    let data = bump_data(grid);
    let dt = cfl_timestep(0.1, k.k1(), 0.5);
    let mut state = first_step(&data, &k, dt).unwrap();
    let n = 150;
    for _ in 0..n {
        state = step(state, &k, dt, None).unwrap();
    }
    let mut back = state.reversed();
    for _ in 0..n {
        back = step(back, &k, dt, None).unwrap();
    }
    // Back at (u1, u0) after the swap.
    let scale = data.u1.max_abs() * dt;
    let err = max_diff(&back.u_curr, &data.u0);
    assert!(err <= 1e-10 * scale, "u0 recovered to {err}");
}

#[test]
fn rejects_mismatched_timestep() {
    let grid = Grid2D::covering(2.0, 0.1).unwrap();
    let k = CoefficientSpec::Constant { k0: 1.0 }.build(grid).unwrap();
    let dt = cfl_timestep(0.1, 1.0, 0.5);
    let state = first_step(&bump_data(grid), &k, dt).unwrap();
    let err = step(state, &k, 0.9 * dt, None).unwrap_err();
    assert!(matches!(err, SolverError::InvalidConfig { key: "dt", .. }));
}

/// `u = sin t · e^{-r²}` with the forcing that makes it exact for a radial `K`.
fn manufactured_error(dx: f64, t_end: f64) -> f64 {
    let grid = Grid2D::covering(6.0, dx).unwrap();
    let k = CoefficientSpec::RadialDecreasing {
        k_peak: 1.5,
        k0: 1.0,
        r0: 2.0,
    }
    .build(grid)
    .unwrap();
    let profile = k.profile().clone();
    let g = |x: f64, y: f64| (-(x * x + y * y)).exp();
    let u0 = ScalarField::zeros(grid);
    let u1 = ScalarField::from_fn(grid, g);
    let data = InitialData::new(u0, u1, 10.0).unwrap();
    let forcing = move |t: f64, x: f64, y: f64| {
        let r = (x * x + y * y).sqrt();
        let (kv, ks) = (profile.value(r), profile.slope(r));
        let gr = g(x, y);
        let div = kv * (4.0 * r * r - 4.0) * gr - 2.0 * r * ks * gr;
        -t.sin() * (gr + div)
    };
    let dt = cfl_timestep(dx, k.k1(), 0.5);
    let steps = (t_end / dt).round() as usize;
    let mut state = first_step(&data, &k, dt).unwrap();
    while state.step < steps {
        state = step(state, &k, dt, Some(&forcing)).unwrap();
    }
    let t = state.t;
    let exact = ScalarField::from_fn(grid, |x, y| t.sin() * g(x, y));
    max_diff(&state.u_curr, &exact)
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let errs: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&dx| manufactured_error(dx, 1.0))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.9, "order {order} from {errs:?}");
    }
}

#[test]
fn zero_data_and_zero_horizon() {
    let zero = DataSpec {
        preset: Preset::Zero,
        support: 1.0,
        amplitude: 1.0,
    };
    let mut cfg = SimulationConfig::new(zero, CoefficientSpec::Constant { k0: 1.0 }, 2.0);
    cfg.dx = 0.1;
    let out = run(&cfg).unwrap();
    let fin = out.final_state.as_ref().unwrap();
    assert_eq!(fin.u_curr.max_abs(), 0.0);
    assert!(out
        .records
        .iter()
        .all(|r| r.e_total == 0.0 && r.l2_norm == 0.0));

    let mut cfg = SimulationConfig::new(
        DataSpec {
            preset: Preset::BumpVelocity,
            support: 1.0,
            amplitude: 1.0,
        },
        CoefficientSpec::Constant { k0: 1.0 },
        0.0,
    );
    cfg.dx = 0.1;
    let out = run(&cfg).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(out.records.len(), 1);
    assert!(out.final_state.is_none());
}

#[test]
fn recorded_energy_matches_standalone() {
    let mut cfg = SimulationConfig::new(
        DataSpec {
            preset: Preset::DipoleVelocity,
            support: 1.0,
            amplitude: 1.0,
        },
        CoefficientSpec::Lipschitz {
            k0: 1.0,
            amplitude: 0.05,
            r0: 2.0,
        },
        3.0,
    );
    cfg.dx = 0.1;
    cfg.sample_stride = 1;
    let out = run(&cfg).unwrap();
    let fin = out.final_state.as_ref().unwrap();
    let (e, _) = energy(fin, &out.coefficient).unwrap();
    let last = out.records.last().unwrap();
    assert!(
        (e - last.e_total).abs() <= 1e-12 * e,
        "{e} vs {}",
        last.e_total
    );
}

#[test]
fn coefficient_term_sign() {
    let data = DataSpec {
        preset: Preset::BumpVelocity,
        support: 1.0,
        amplitude: 1.0,
    };
    let mut cfg = SimulationConfig::new(
        data,
        CoefficientSpec::RadialDecreasing {
            k_peak: 2.0,
            k0: 1.0,
            r0: 2.0,
        },
        4.0,
    );
    cfg.dx = 0.1;
    let out = run(&cfg).unwrap();
    assert!(out.ledger.iter().all(|l| l.k_integral <= 0.0));
    assert!(out.ledger.last().unwrap().k_integral < 0.0);

    let mut cfg = SimulationConfig::new(data, CoefficientSpec::Constant { k0: 1.0 }, 4.0);
    cfg.dx = 0.1;
    let out = run(&cfg).unwrap();
    assert!(out.ledger.iter().all(|l| l.k_integral == 0.0));
}
