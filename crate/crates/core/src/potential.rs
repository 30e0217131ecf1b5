//! Logarithmic potential `h(x) = −(1/2π)∫log|x − y| u1(y) dy` of the initial
//! velocity, and the three quadrature certificates built on it.
//!
//! Sources are the grid cells of `u1`. Far cells use the midpoint rule; the
//! cell holding the evaluation point is integrated in closed form.

use crate::diagnostics::AuditEntry;
use crate::field::{disc_fraction, ScalarField};
use crate::initial_data::InitialData;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

/// Relative slack of the pure-quadrature certificates.
pub const QUADRATURE_SLACK: f64 = 1e-6;

/// Angular nodes of the polar rule used outside `B_{2L}`.
const ANGLES: usize = 64;
/// Panel width in `log r` for the radial Gauss rule.
const LOG_PANEL: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("no evaluation points given")]
    NoPoints,
    #[error("support radius L must be positive, got {0}")]
    NonPositiveSupport(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct SourceCells {
    spacing: f64,
    center: usize,
    /// `(i, j, x, y, u1·h²)` for every nonzero cell.
    cells: Vec<(usize, usize, f64, f64, f64)>,
}

/// `∫∫ ½ln(z1² + z2²)` antiderivative in both variables.
fn log_antiderivative(z1: f64, z2: f64) -> f64 {
    let r2 = z1 * z1 + z2 * z2;
    if r2 == 0.0 {
        return 0.0;
    }
    let mut g = z1 * z2 * (r2.ln() - 3.0);
    if z1 != 0.0 {
        g += z1 * z1 * (z2 / z1).atan();
    }
    if z2 != 0.0 {
        g += z2 * z2 * (z1 / z2).atan();
    }
    0.5 * g
}

/// `∫∫ z1/(z1² + z2²)` antiderivative in both variables.
fn kernel_antiderivative(z1: f64, z2: f64) -> f64 {
    let r2 = z1 * z1 + z2 * z2;
    if r2 == 0.0 {
        return 0.0;
    }
    let mut g = 0.5 * z2 * r2.ln() - z2;
    if z1 != 0.0 {
        g += z1 * (z2 / z1).atan();
    }
    g
}

fn over_rect(f: impl Fn(f64, f64) -> f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    f(b.0, b.1) - f(a.0, b.1) - f(b.0, a.1) + f(a.0, a.1)
}

impl SourceCells {
    fn new(u1: &ScalarField) -> Self {
        let grid = *u1.grid();
        let n = grid.nodes_per_side();
        let h = grid.spacing();
        let cells = u1
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(idx, &v)| {
                let (i, j) = (idx % n, idx / n);
                (i, j, grid.coord(i), grid.coord(j), v * h * h)
            })
            .collect();
        Self {
            spacing: h,
            center: grid.center(),
            cells,
        }
    }

    /// Lattice index of the cell containing `p`, if it could be a source.
    fn owner(&self, p: (f64, f64)) -> Option<(usize, usize)> {
        let h = self.spacing;
        let ci = (p.0 / h).round() + self.center as f64;
        let cj = (p.1 / h).round() + self.center as f64;
        (ci >= 0.0 && cj >= 0.0).then_some((ci as usize, cj as usize))
    }

    fn value_at(&self, p: (f64, f64)) -> f64 {
        let h = self.spacing;
        let own = self.owner(p);
        let mut acc = 0.0;
        for &(i, j, x, y, w) in &self.cells {
            if Some((i, j)) == own {
                let a = (x - 0.5 * h - p.0, y - 0.5 * h - p.1);
                let b = (x + 0.5 * h - p.0, y + 0.5 * h - p.1);
                acc += w / (h * h) * over_rect(log_antiderivative, a, b);
            } else {
                let r2 = (p.0 - x).powi(2) + (p.1 - y).powi(2);
                acc += w * 0.5 * r2.ln();
            }
        }
        -acc / (2.0 * PI)
    }

    fn gradient_at(&self, p: (f64, f64)) -> (f64, f64) {
        let h = self.spacing;
        let own = self.owner(p);
        let (mut gx, mut gy) = (0.0, 0.0);
        for &(i, j, x, y, w) in &self.cells {
            if Some((i, j)) == own {
                // ∫ (p − y)/|p − y|² over the cell = −∫ z/|z|² with z = y − p
                let a = (x - 0.5 * h - p.0, y - 0.5 * h - p.1);
                let b = (x + 0.5 * h - p.0, y + 0.5 * h - p.1);
                let ix = over_rect(kernel_antiderivative, a, b);
                let iy = over_rect(|s, t| kernel_antiderivative(t, s), a, b);
                gx -= w / (h * h) * ix;
                gy -= w / (h * h) * iy;
            } else {
                let (dx, dy) = (p.0 - x, p.1 - y);
                let r2 = dx * dx + dy * dy;
                gx += w * dx / r2;
                gy += w * dy / r2;
            }
        }
        (-gx / (2.0 * PI), -gy / (2.0 * PI))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub points: Vec<(f64, f64)>,
    pub h: Vec<f64>,
    pub grad_h: Vec<(f64, f64)>,
    /// `∫_{|x|≤2L} |∇h|²`.
    pub i_h: f64,
    /// `max |∇h|` over the lattice nodes of `B_{2L}`.
    pub max_grad_near: f64,
    pub support: f64,
    sources: SourceCells,
}

impl PotentialField {
    pub fn value_at(&self, p: (f64, f64)) -> f64 {
        self.sources.value_at(p)
    }

    pub fn gradient_at(&self, p: (f64, f64)) -> (f64, f64) {
        self.sources.gradient_at(p)
    }

    /// `∫_{|x|≤ρ} |∇h|²` for each `ρ`, with `ρ < 2L` clamped up to `2L`.
    ///
    /// The part outside `B_{2L}` uses Gauss panels in `log r` and the
    /// trapezoid rule in angle.
    pub fn gradient_energy_within(&self, radii: &[f64]) -> Vec<f64> {
        let inner = 2.0 * self.support;
        let mut order: Vec<usize> = (0..radii.len()).collect();
        order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
        let mut out = vec![0.0; radii.len()];
        let mut reached = inner;
        let mut total = self.i_h;
        for idx in order {
            let rho = radii[idx].max(inner);
            if rho > reached {
                total += self.annulus_energy(reached, rho);
                reached = rho;
            }
            out[idx] = total;
        }
        out
    }

    fn annulus_energy(&self, a: f64, b: f64) -> f64 {
        if self.sources.cells.is_empty() {
            return 0.0;
        }
        let (la, lb) = (a.ln(), b.ln());
        let panels = ((lb - la) / LOG_PANEL).ceil().max(1.0) as usize;
        let width = (lb - la) / panels as f64;
        let (nodes, weights) = gauss_legendre_5();
        let mut samples = Vec::with_capacity(panels * 5);
        for p in 0..panels {
            let mid = la + (p as f64 + 0.5) * width;
            for (x, w) in nodes.iter().zip(&weights) {
                samples.push((mid + 0.5 * width * x, 0.5 * width * w));
            }
        }
        let dtheta = 2.0 * PI / ANGLES as f64;
        let ring: Vec<f64> = samples
            .par_iter()
            .map(|&(s, w)| {
                let r = s.exp();
                let mut acc = 0.0;
                for k in 0..ANGLES {
                    let th = k as f64 * dtheta;
                    let (gx, gy) = self.sources.gradient_at((r * th.cos(), r * th.sin()));
                    acc += gx * gx + gy * gy;
                }
                // dx = r² ds dθ in log-polar coordinates
                w * r * r * acc * dtheta
            })
            .collect();
        ring.iter().sum()
    }
}

fn gauss_legendre_5() -> ([f64; 5], [f64; 5]) {
    let s = 2.0 * (10.0f64 / 7.0).sqrt();
    let x1 = (5.0 - s).sqrt() / 3.0;
    let x2 = (5.0 + s).sqrt() / 3.0;
    let r70 = 70f64.sqrt();
    let w1 = (322.0 + 13.0 * r70) / 900.0;
    let w2 = (322.0 - 13.0 * r70) / 900.0;
    ([-x2, -x1, 0.0, x1, x2], [w2, w1, 128.0 / 225.0, w1, w2])
}

/// Evaluates `h` and `∇h` at `points`, and `I_h` on the lattice of `u1`.
pub fn newtonian_potential(
    u1: &ScalarField,
    points: &[(f64, f64)],
    support: f64,
) -> Result<PotentialField, PotentialError> {
    if points.is_empty() {
        return Err(PotentialError::NoPoints);
    }
    if !(support > 0.0) {
        return Err(PotentialError::NonPositiveSupport(support));
    }
    let sources = SourceCells::new(u1);
    let values: Vec<(f64, (f64, f64))> = points
        .par_iter()
        .map(|&p| (sources.value_at(p), sources.gradient_at(p)))
        .collect();

    let h = sources.spacing;
    let reach = (2.0 * support / h).ceil() as i64 + 1;
    let near: Vec<(f64, f64)> = (-reach..=reach)
        .into_par_iter()
        .map(|j| {
            let y = j as f64 * h;
            let mut acc = 0.0;
            let mut peak: f64 = 0.0;
            for i in -reach..=reach {
                let x = i as f64 * h;
                let f = disc_fraction(x, y, h, 2.0 * support);
                if f == 0.0 {
                    continue;
                }
                let (gx, gy) = if sources.cells.is_empty() {
                    (0.0, 0.0)
                } else {
                    sources.gradient_at((x, y))
                };
                let g2 = gx * gx + gy * gy;
                acc += f * g2;
                peak = peak.max(g2.sqrt());
            }
            (acc * h * h, peak)
        })
        .collect();
    let i_h = near.iter().map(|r| r.0).sum();
    let max_grad_near = near.iter().fold(0.0f64, |m, r| m.max(r.1));

    Ok(PotentialField {
        points: points.to_vec(),
        h: values.iter().map(|v| v.0).collect(),
        grad_h: values.iter().map(|v| v.1).collect(),
        i_h,
        max_grad_near,
        support,
        sources,
    })
}

/// Rings of points covering `2L ≤ |x| ≤ 10L`.
pub fn far_field_points(support: f64) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for k in 0..=40 {
        let r = support * (2.0 + 8.0 * k as f64 / 40.0);
        for a in 0..48 {
            let th = 2.0 * PI * (a as f64 + 0.5 * (k % 2) as f64) / 48.0;
            pts.push((r * th.cos(), r * th.sin()));
        }
    }
    pts
}

/// `|x||∇h(x)| ≤ ‖u1‖₁/π` on the sampled points with `|x| ≥ 2L`.
pub fn certify_far_gradient(pf: &PotentialField, data: &InitialData) -> AuditEntry {
    let rhs = data.norm_u1_l1 / PI;
    let lhs = pf
        .points
        .iter()
        .zip(&pf.grad_h)
        .filter(|(p, _)| p.0.hypot(p.1) >= 2.0 * pf.support * (1.0 - 1e-12))
        .map(|(p, g)| p.0.hypot(p.1) * g.0.hypot(g.1))
        .fold(0.0, f64::max);
    AuditEntry::new(
        "potential_far_gradient",
        "|x||∇h(x)| ≤ C‖u1‖_L1, C = 1/π",
        lhs,
        rhs,
        QUADRATURE_SLACK,
    )
}

/// `∫_{|x|≤2L+k1t}|∇h|² ≤ I_h + (2/π)‖u1‖₁² log(2L + k1t)` at each `t`.
pub fn certify_gradient_energy_growth(
    pf: &PotentialField,
    data: &InitialData,
    k1: f64,
    times: &[f64],
) -> AuditEntry {
    let radii: Vec<f64> = times.iter().map(|t| 2.0 * pf.support + k1 * t).collect();
    let lhs = pf.gradient_energy_within(&radii);
    let c = 2.0 / PI * data.norm_u1_l1 * data.norm_u1_l1;
    let samples = radii
        .iter()
        .zip(&lhs)
        .zip(times)
        .map(|((rho, l), &t)| (t, *l, pf.i_h + c * rho.ln()));
    AuditEntry::worst_of(
        "potential_gradient_energy",
        "∫_{|x|≤2L+k1t}|∇h|² ≤ I_h + 2πC²‖u1‖²_L1 log(2L+k1t)",
        samples,
        QUADRATURE_SLACK,
    )
}

/// `|∇h| ≤ 4L‖u1‖∞` on `B_{2L}` and the integrated form `I_h ≤ 64πL⁴‖u1‖∞²`.
pub fn certify_near_bounds(pf: &PotentialField, data: &InitialData) -> AuditEntry {
    let l = pf.support;
    let sup = data.norm_u1_linf;
    let (grad_bound, energy_bound) = (4.0 * l * sup, 64.0 * PI * l.powi(4) * sup * sup);
    let ratio = |x: f64, bound: f64| {
        if bound > 0.0 {
            x / bound
        } else if x == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let worst = ratio(pf.max_grad_near, grad_bound).max(ratio(pf.i_h, energy_bound));
    AuditEntry::new(
        "potential_near_bounds",
        "max_B2L |∇h| / 4L‖u1‖_L∞ and I_h / 64πL⁴‖u1‖²_L∞ both ≤ 1",
        worst,
        1.0,
        QUADRATURE_SLACK,
    )
    .with_detail(format!(
        "max |∇h| = {:.6e} vs {:.6e}; I_h = {:.6e} vs {:.6e}",
        pf.max_grad_near, grad_bound, pf.i_h, energy_bound
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid2D;
    use crate::initial_data::{make_bump, moment};

    #[test]
    fn cell_integrals_match_known_values() {
        let unit = over_rect(log_antiderivative, (0.0, 0.0), (1.0, 1.0));
        let expected = 0.5 * (2f64.ln() - 3.0 + 0.5 * PI);
        assert!((unit - expected).abs() < 1e-14);
        // a centred cell: ln h − ln2/2 − 3/2 + π/4 per unit area
        let h = 0.1;
        let centred = over_rect(log_antiderivative, (-0.05, -0.05), (0.05, 0.05)) / (h * h);
        let c0 = h.ln() - 0.5 * 2f64.ln() - 1.5 + 0.25 * PI;
        assert!((centred - c0).abs() < 1e-12);
        let g = over_rect(kernel_antiderivative, (-0.05, -0.05), (0.05, 0.05));
        assert!(g.abs() < 1e-15);
    }

    #[test]
    fn kernel_antiderivative_matches_midpoint() {
        let (a, b) = ((0.3, -0.2), (0.7, 0.4));
        let exact = over_rect(kernel_antiderivative, a, b);
        let m = 400;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let z1 = a.0 + (i as f64 + 0.5) * (b.0 - a.0) / m as f64;
                let z2 = a.1 + (j as f64 + 0.5) * (b.1 - a.1) / m as f64;
                acc += z1 / (z1 * z1 + z2 * z2);
            }
        }
        acc *= (b.0 - a.0) * (b.1 - a.1) / (m * m) as f64;
        assert!((exact - acc).abs() < 1e-5, "{exact} vs {acc}");
    }

    #[test]
    fn zero_source() {
        let g = Grid2D::covering(1.5, 0.1).unwrap();
        let pf = newtonian_potential(&ScalarField::zeros(g), &[(3.0, 0.0)], 1.0).unwrap();
        assert_eq!(pf.h[0], 0.0);
        assert_eq!(pf.i_h, 0.0);
        assert!(newtonian_potential(&ScalarField::zeros(g), &[], 1.0).is_err());
    }

    #[test]
    fn radial_far_field() {
        let g = Grid2D::covering(1.2, 0.05).unwrap();
        let u1 = make_bump((0.0, 0.0), 1.0, 1.0, g).unwrap();
        let m = moment(&u1);
        let pts = [(3.0, 0.0), (0.0, -5.0), (2.0, 2.0)];
        let pf = newtonian_potential(&u1, &pts, 1.0).unwrap();
        for (p, gr) in pts.iter().zip(&pf.grad_h) {
            let r2 = p.0 * p.0 + p.1 * p.1;
            let ex = (-m / (2.0 * PI) * p.0 / r2, -m / (2.0 * PI) * p.1 / r2);
            let err = (gr.0 - ex.0).hypot(gr.1 - ex.1) / ex.0.hypot(ex.1);
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn annulus_energy_matches_radial_formula() {
        // outside the support |∇h| = M/(2π r), so the annulus carries (M²/2π) log(b/a)
        let g = Grid2D::covering(1.2, 0.05).unwrap();
        let u1 = make_bump((0.0, 0.0), 1.0, 1.0, g).unwrap();
        let m = moment(&u1);
        let pf = newtonian_potential(&u1, &[(0.0, 0.0)], 1.0).unwrap();
        let got = pf.gradient_energy_within(&[2.0, 30.0]);
        let expected = m * m / (2.0 * PI) * 15f64.ln();
        assert_eq!(got[0], pf.i_h);
        assert!(((got[1] - got[0]) - expected).abs() < 1e-9 * expected);
    }
}
