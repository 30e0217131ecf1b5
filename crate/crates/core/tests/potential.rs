use std::f64::consts::PI;
use wavedecay::field::Grid2D;
use wavedecay::initial_data::{make_dataset, moment, DataSpec, InitialData, Preset};
use wavedecay::potential::{
    certify_far_gradient, certify_gradient_energy_growth, certify_near_bounds, far_field_points,
    newtonian_potential,
};

fn dataset(preset: Preset, amplitude: f64, dx: f64) -> InitialData {
    let spec = DataSpec {
        preset,
        support: 1.0,
        amplitude,
    };
    make_dataset(&spec, Grid2D::covering(1.2, dx).unwrap()).unwrap()
}

/// Worst `|−Δ_δ h − u1|` over the nodes of the 0.1 lattice inside `|x| ≤ 0.8`,
/// with the five-point stencil at the source spacing.
fn laplacian_error(dx: f64) -> f64 {
    let data = dataset(Preset::BumpVelocity, 1.0, dx);
    let bump = |x: f64, y: f64| {
        let s2 = x * x + y * y;
        if s2 < 1.0 {
            (1.0 - 1.0 / (1.0 - s2)).exp()
        } else {
            0.0
        }
    };
    let mut centres = Vec::new();
    for j in -8..=8 {
        for i in -8..=8 {
            let (x, y) = (0.1 * i as f64, 0.1 * j as f64);
            if x.hypot(y) <= 0.8 + 1e-9 {
                centres.push((x, y));
            }
        }
    }
    let mut points = Vec::new();
    for &(x, y) in &centres {
        points.extend([(x, y), (x + dx, y), (x - dx, y), (x, y + dx), (x, y - dx)]);
    }
    let pf = newtonian_potential(&data.u1, &points, 1.0).unwrap();
    pf.h.chunks(5)
        .zip(&centres)
        .map(|(s, &(x, y))| {
            let lap = (s[1] + s[2] + s[3] + s[4] - 4.0 * s[0]) / (dx * dx);
            (-lap - bump(x, y)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn discrete_laplacian_recovers_source() {
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dx| laplacian_error(dx))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order} from {errs:?}");
    }
}

#[test]
fn far_field_matches_point_mass() {
    let data = dataset(Preset::BumpVelocity, 1.0, 0.05);
    let m = moment(&data.u1);
    let pts = far_field_points(1.0);
    let pf = newtonian_potential(&data.u1, &pts, 1.0).unwrap();
    for (p, g) in pts.iter().zip(&pf.grad_h) {
        let got = p.0.hypot(p.1) * g.0.hypot(g.1);
        let want = m / (2.0 * PI);
        assert!((got - want).abs() <= 1e-6 * want, "{p:?}: {got} vs {want}");
    }
}

fn certificates(data: &InitialData) -> Vec<(String, bool, f64)> {
    let pf = newtonian_potential(&data.u1, &far_field_points(1.0), 1.0).unwrap();
    let times: Vec<f64> = (0..=10).map(|k| 5.0 * k as f64).collect();
    [
        certify_far_gradient(&pf, data),
        certify_gradient_energy_growth(&pf, data, 1.0, &times),
        certify_near_bounds(&pf, data),
    ]
    .into_iter()
    .map(|e| (e.name.clone(), e.pass, e.lhs / e.rhs))
    .collect()
}

#[test]
fn certificates_pass_for_bump_and_dipole() {
    for preset in [Preset::BumpVelocity, Preset::DipoleVelocity] {
        for (name, pass, ratio) in certificates(&dataset(preset, 1.0, 0.05)) {
            assert!(pass, "{preset:?} {name} at ratio {ratio}");
        }
    }
}

#[test]
fn dipole_far_gradient_decays_faster() {
    // zero moment: |x||∇h| falls off like 1/|x|
    let data = dataset(Preset::DipoleVelocity, 1.0, 0.05);
    assert!(moment(&data.u1).abs() < 1e-12);
    let pf = newtonian_potential(&data.u1, &[(2.0, 0.0), (10.0, 0.0)], 1.0).unwrap();
    let near = 2.0 * pf.grad_h[0].0.hypot(pf.grad_h[0].1);
    let far = 10.0 * pf.grad_h[1].0.hypot(pf.grad_h[1].1);
    assert!(far < 0.3 * near, "{near} {far}");
}

#[test]
fn certificate_ratios_ignore_amplitude() {
    let base = certificates(&dataset(Preset::DipoleVelocity, 1.0, 0.1));
    let scaled = certificates(&dataset(Preset::DipoleVelocity, 7.5, 0.1));
    for ((name, _, a), (_, _, b)) in base.iter().zip(&scaled) {
        assert!(
            (a - b).abs() <= 1e-9 * a.abs().max(1e-300),
            "{name}: {a} vs {b}"
        );
    }
}
