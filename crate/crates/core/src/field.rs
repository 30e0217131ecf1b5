//! Uniform Cartesian grids, scalar fields on them, the discrete differential
//! operators used by the solver, and disc/annulus quadrature.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid needs an odd node count of at least 3 per side, got {0}")]
    BadNodeCount(usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("value array has {got} entries, grid needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("integration radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("integration radius {radius} exceeds the domain half-width {half_width}")]
    RadiusOutsideDomain { radius: f64, half_width: f64 },
    #[error("annulus bounds out of order: {inner} > {outer}")]
    InvertedAnnulus { inner: f64, outer: f64 },
}

/// Square node lattice on `[-X, X]²` with the origin at the centre node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nodes_per_side: usize,
    spacing: f64,
}

impl Grid2D {
    pub fn new(nodes_per_side: usize, spacing: f64) -> Result<Self, FieldError> {
        if nodes_per_side < 3 || nodes_per_side.is_multiple_of(2) {
            return Err(FieldError::BadNodeCount(nodes_per_side));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(FieldError::BadSpacing(spacing));
        }
        Ok(Self {
            nodes_per_side,
            spacing,
        })
    }

    /// Smallest grid of the given spacing whose half-width is at least `half_width`.
    pub fn covering(half_width: f64, spacing: f64) -> Result<Self, FieldError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(FieldError::BadSpacing(spacing));
        }
        let half_nodes = half_nodes_for(half_width, spacing).max(1);
        Self::new(2 * half_nodes + 1, spacing)
    }

    pub fn nodes_per_side(&self) -> usize {
        self.nodes_per_side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes_per_side * self.nodes_per_side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the centre node along either axis.
    pub fn center(&self) -> usize {
        (self.nodes_per_side - 1) / 2
    }

    pub fn half_width(&self) -> f64 {
        self.center() as f64 * self.spacing
    }

    /// Coordinate of lattice index `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.spacing
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_per_side + i
    }

    #[inline]
    pub fn position(&self, idx: usize) -> (f64, f64) {
        let n = self.nodes_per_side;
        (self.coord(idx % n), self.coord(idx / n))
    }

    pub fn full_box(&self) -> IndexBox {
        IndexBox {
            lo: 0,
            hi: self.nodes_per_side - 1,
        }
    }

    /// Square index box covering the disc of radius `radius`, clipped to the grid.
    pub fn box_covering(&self, radius: f64) -> IndexBox {
        let half = half_nodes_for(radius.max(0.0), self.spacing).min(self.center());
        IndexBox {
            lo: self.center() - half,
            hi: self.center() + half,
        }
    }

    pub fn same_as(&self, other: &Grid2D) -> bool {
        self.nodes_per_side == other.nodes_per_side && self.spacing == other.spacing
    }
}

/// Number of lattice steps needed to reach `length`, rounded up.
pub(crate) fn half_nodes_for(length: f64, spacing: f64) -> usize {
    // tolerate representation error in ratios like 11.8 / 0.1
    (length / spacing - 1e-9).ceil().max(0.0) as usize
}

/// Inclusive index range `[lo, hi]` applied to both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub lo: usize,
    pub hi: usize,
}

impl IndexBox {
    pub fn grow(self, by: usize, grid: &Grid2D) -> IndexBox {
        IndexBox {
            lo: self.lo.saturating_sub(by),
            hi: (self.hi + by).min(grid.nodes_per_side() - 1),
        }
    }

    pub fn union(self, other: IndexBox) -> IndexBox {
        IndexBox {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.nodes_per_side();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..n {
            let y = grid.coord(j);
            for i in 0..n {
                values.push(f(grid.coord(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Nodewise combination of two fields on the same grid.
    pub fn zip_with(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ScalarField, FieldError> {
        self.check_grid(other)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_grid(&self, other: &ScalarField) -> Result<(), FieldError> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }
}

/// Second-order gradient: central differences inside, one-sided three-point
/// formulas on the boundary ring.
pub fn gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let grid = *f.grid();
    let n = grid.nodes_per_side();
    let mut gx = vec![0.0; grid.len()];
    let mut gy = vec![0.0; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let idx = grid.index(i, j);
            (gx[idx], gy[idx]) = gradient_at(f.values(), &grid, i, j);
        }
    }
    (
        ScalarField { grid, values: gx },
        ScalarField { grid, values: gy },
    )
}

/// Gradient at one node, same stencils as [`gradient`].
#[inline]
pub(crate) fn gradient_at(v: &[f64], grid: &Grid2D, i: usize, j: usize) -> (f64, f64) {
    let n = grid.nodes_per_side();
    let inv2h = 0.5 / grid.spacing();
    let idx = grid.index(i, j);
    let gx = if i == 0 {
        (-3.0 * v[idx] + 4.0 * v[idx + 1] - v[idx + 2]) * inv2h
    } else if i == n - 1 {
        (3.0 * v[idx] - 4.0 * v[idx - 1] + v[idx - 2]) * inv2h
    } else {
        (v[idx + 1] - v[idx - 1]) * inv2h
    };
    let gy = if j == 0 {
        (-3.0 * v[idx] + 4.0 * v[idx + n] - v[idx + 2 * n]) * inv2h
    } else if j == n - 1 {
        (3.0 * v[idx] - 4.0 * v[idx - n] + v[idx - 2 * n]) * inv2h
    } else {
        (v[idx + n] - v[idx - n]) * inv2h
    };
    (gx, gy)
}

/// Face coefficients of the flux-form operator (arithmetic means of nodal K).
///
/// `east[idx]` sits between node `idx` and its `+x` neighbour, `north[idx]`
/// between `idx` and its `+y` neighbour. Faces leaving the grid take the
/// node's own value.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceCoefficients {
    grid: Grid2D,
    pub(crate) east: Vec<f64>,
    pub(crate) north: Vec<f64>,
}

impl FaceCoefficients {
    pub fn from_nodal(k: &ScalarField) -> Self {
        let grid = *k.grid();
        let n = grid.nodes_per_side();
        let kv = k.values();
        let mut east = vec![0.0; grid.len()];
        let mut north = vec![0.0; grid.len()];
        for j in 0..n {
            for i in 0..n {
                let idx = grid.index(i, j);
                east[idx] = if i + 1 < n {
                    0.5 * (kv[idx] + kv[idx + 1])
                } else {
                    kv[idx]
                };
                north[idx] = if j + 1 < n {
                    0.5 * (kv[idx] + kv[idx + n])
                } else {
                    kv[idx]
                };
            }
        }
        Self { grid, east, north }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Flux-form `∇·(K∇u)` at one node, with zero extension past the boundary.
    #[inline]
    pub(crate) fn apply_at(&self, k_node: f64, u: &[f64], i: usize, j: usize) -> f64 {
        let h = self.grid.spacing();
        self.flux_at(k_node, u, i, j) / (h * h)
    }

    /// `h²` times [`Self::apply_at`].
    #[inline]
    pub(crate) fn flux_at(&self, k_node: f64, u: &[f64], i: usize, j: usize) -> f64 {
        let n = self.grid.nodes_per_side();
        let idx = self.grid.index(i, j);
        let uc = u[idx];
        let ue = if i + 1 < n { u[idx + 1] } else { 0.0 };
        let uw = if i > 0 { u[idx - 1] } else { 0.0 };
        let un = if j + 1 < n { u[idx + n] } else { 0.0 };
        let us = if j > 0 { u[idx - n] } else { 0.0 };
        let kw = if i > 0 { self.east[idx - 1] } else { k_node };
        let ks = if j > 0 { self.north[idx - n] } else { k_node };
        self.east[idx] * (ue - uc) + kw * (uw - uc) + self.north[idx] * (un - uc) + ks * (us - uc)
    }
}

impl FaceCoefficients {
    /// Potential-energy share of one node: a quarter of `K_f·d_f(a)² −
    /// lag·K_f·d_f(b)²` summed over its four faces, `d_f` the one-sided
    /// difference quotient across face `f` (zero extension past the edge).
    #[inline]
    pub(crate) fn strain_at(
        &self,
        k_node: f64,
        a: &[f64],
        b: &[f64],
        lag: f64,
        i: usize,
        j: usize,
    ) -> f64 {
        let n = self.grid.nodes_per_side();
        let idx = self.grid.index(i, j);
        let inv_h2 = 1.0 / (self.grid.spacing() * self.grid.spacing());
        let face = |kf: f64, other: Option<usize>| {
            let (na, nb) = other.map_or((0.0, 0.0), |o| (a[o], b[o]));
            let da = a[idx] - na;
            let db = b[idx] - nb;
            kf * (da * da - lag * db * db)
        };
        let e = face(self.east[idx], (i + 1 < n).then(|| idx + 1))
            + face(
                if i > 0 { self.east[idx - 1] } else { k_node },
                (i > 0).then(|| idx - 1),
            )
            + face(self.north[idx], (j + 1 < n).then(|| idx + n))
            + face(
                if j > 0 { self.north[idx - n] } else { k_node },
                (j > 0).then(|| idx - n),
            );
        0.25 * e * inv_h2
    }

    /// `strain_at` for a node with all four neighbours on the grid.
    #[inline]
    pub(crate) fn strain_interior(&self, a: &[f64], b: &[f64], lag: f64, idx: usize) -> f64 {
        let n = self.grid.nodes_per_side();
        let inv_h2 = 1.0 / (self.grid.spacing() * self.grid.spacing());
        let face = |kf: f64, o: usize| {
            let da = a[idx] - a[o];
            let db = b[idx] - b[o];
            kf * (da * da - lag * db * db)
        };
        let e = face(self.east[idx], idx + 1)
            + face(self.east[idx - 1], idx - 1)
            + face(self.north[idx], idx + n)
            + face(self.north[idx - n], idx - n);
        0.25 * e * inv_h2
    }
}

/// Conservative five-point discretisation of `∇·(K∇u)`.
pub fn div_k_grad(k: &ScalarField, u: &ScalarField) -> Result<ScalarField, FieldError> {
    k.check_grid(u)?;
    let faces = FaceCoefficients::from_nodal(k);
    Ok(div_k_grad_with(&faces, k, u))
}

pub(crate) fn div_k_grad_with(
    faces: &FaceCoefficients,
    k: &ScalarField,
    u: &ScalarField,
) -> ScalarField {
    let grid = *u.grid();
    let n = grid.nodes_per_side();
    let mut out = vec![0.0; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let idx = grid.index(i, j);
            out[idx] = faces.apply_at(k.values()[idx], u.values(), i, j);
        }
    }
    ScalarField { grid, values: out }
}

/// Plain five-point Laplacian with zero extension (reference for the
/// constant-coefficient case).
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let ones = ScalarField::from_fn(*u.grid(), |_, _| 1.0);
    div_k_grad(&ones, u).expect("same grid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Full,
    /// `|x| <= radius`
    Disc(f64),
    /// `inner < |x| <= outer`
    Annulus(f64, f64),
    /// `|x| > radius`
    Exterior(f64),
}

impl Region {
    fn validate(&self, grid: &Grid2D) -> Result<(), FieldError> {
        let check = |r: f64| {
            if r < 0.0 || r.is_nan() {
                Err(FieldError::NegativeRadius(r))
            } else if r > grid.half_width() + 1e-12 {
                Err(FieldError::RadiusOutsideDomain {
                    radius: r,
                    half_width: grid.half_width(),
                })
            } else {
                Ok(())
            }
        };
        match *self {
            Region::Full => Ok(()),
            Region::Disc(r) | Region::Exterior(r) => check(r),
            Region::Annulus(a, b) => {
                check(a)?;
                check(b)?;
                if a > b {
                    Err(FieldError::InvertedAnnulus { inner: a, outer: b })
                } else {
                    Ok(())
                }
            }
        }
    }
}

const SUBCELL: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];

/// Fraction of the cell centred at `(x, y)` with `|p| <= radius`, by 4×4
/// sub-sampling.
#[inline]
pub(crate) fn disc_fraction(x: f64, y: f64, h: f64, radius: f64) -> f64 {
    disc_fraction_at(x, y, (x * x + y * y).sqrt(), h, radius)
}

/// `disc_fraction` with the node radius `r` already known.
#[inline]
pub(crate) fn disc_fraction_at(x: f64, y: f64, r: f64, h: f64, radius: f64) -> f64 {
    let reach = h * std::f64::consts::FRAC_1_SQRT_2;
    if r + reach <= radius {
        return 1.0;
    }
    if r - reach > radius {
        return 0.0;
    }
    let r2 = radius * radius;
    let mut inside = 0u32;
    for oy in SUBCELL {
        let py = y + oy * h;
        for ox in SUBCELL {
            let px = x + ox * h;
            if px * px + py * py <= r2 {
                inside += 1;
            }
        }
    }
    inside as f64 / 16.0
}

#[inline]
pub(crate) fn region_fraction(region: Region, x: f64, y: f64, h: f64) -> f64 {
    match region {
        Region::Full => 1.0,
        Region::Disc(r) => disc_fraction(x, y, h, r),
        Region::Annulus(a, b) => disc_fraction(x, y, h, b) - disc_fraction(x, y, h, a),
        Region::Exterior(r) => 1.0 - disc_fraction(x, y, h, r),
    }
}

/// Cell-weighted quadrature of `f` over `region`.
pub fn integrate(f: &ScalarField, region: Region) -> Result<f64, FieldError> {
    region.validate(f.grid())?;
    Ok(integrate_in(
        f.values(),
        f.grid(),
        region,
        f.grid().full_box(),
    ))
}

/// Quadrature restricted to an index box; nodes outside it are taken as zero.
pub(crate) fn integrate_in(values: &[f64], grid: &Grid2D, region: Region, bx: IndexBox) -> f64 {
    let h = grid.spacing();
    let n = grid.nodes_per_side();
    let mut total = 0.0;
    for j in bx.lo..=bx.hi {
        let y = grid.coord(j);
        let row = &values[j * n..(j + 1) * n];
        let mut acc = 0.0;
        match region {
            Region::Full => {
                for &v in &row[bx.lo..=bx.hi] {
                    acc += v;
                }
            }
            _ => {
                for (i, &v) in (bx.lo..=bx.hi).zip(&row[bx.lo..=bx.hi]) {
                    if v != 0.0 {
                        acc += v * region_fraction(region, grid.coord(i), y, h);
                    }
                }
            }
        }
        total += acc;
    }
    total * h * h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, h: f64) -> Grid2D {
        Grid2D::new(n, h).unwrap()
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid2D::new(4, 0.1).is_err());
        assert!(Grid2D::new(1, 0.1).is_err());
        assert!(Grid2D::new(5, 0.0).is_err());
        let g = grid(21, 0.1);
        assert!((g.half_width() - 1.0).abs() < 1e-15);
        assert_eq!(g.coord(g.center()), 0.0);
        let c = Grid2D::covering(11.8, 0.1).unwrap();
        assert_eq!(c.nodes_per_side(), 237);
    }

    #[test]
    fn gradient_exact_on_affine() {
        let g = grid(9, 0.25);
        let f = ScalarField::from_fn(g, |x, y| 3.0 * x - 2.0 * y + 1.0);
        let (gx, gy) = gradient(&f);
        for (&a, &b) in gx.values().iter().zip(gy.values()) {
            assert!((a - 3.0).abs() < 1e-12);
            assert!((b + 2.0).abs() < 1e-12);
        }
        let c = ScalarField::from_fn(g, |_, _| 7.5);
        let (cx, cy) = gradient(&c);
        assert!(cx.max_abs() < 1e-12 && cy.max_abs() < 1e-12);
    }

    #[test]
    fn gradient_second_order() {
        let err = |n: usize| {
            let h = 4.0 / (n - 1) as f64;
            let g = grid(n, h);
            let f = ScalarField::from_fn(g, |x, y| x.sin() * y.cos());
            let (gx, gy) = gradient(&f);
            let mut e: f64 = 0.0;
            for idx in 0..g.len() {
                let (x, y) = g.position(idx);
                e = e.max((gx.values()[idx] - x.cos() * y.cos()).abs());
                e = e.max((gy.values()[idx] + x.sin() * y.sin()).abs());
            }
            e
        };
        let (e1, e2) = (err(41), err(81));
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn flux_form_exact_on_quadratic() {
        let g = grid(11, 0.2);
        let k = ScalarField::from_fn(g, |_, _| 1.0);
        let u = ScalarField::from_fn(g, |x, y| x * x + y * y);
        let out = div_k_grad(&k, &u).unwrap();
        for j in 1..10 {
            for i in 1..10 {
                assert!((out.at(i, j) - 4.0).abs() < 1e-10);
            }
        }
        let zero = div_k_grad(&k, &ScalarField::zeros(g)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn flux_form_rejects_grid_mismatch() {
        let k = ScalarField::zeros(grid(5, 0.1));
        let u = ScalarField::zeros(grid(7, 0.1));
        assert_eq!(div_k_grad(&k, &u), Err(FieldError::GridMismatch));
    }

    #[test]
    fn constant_coefficient_is_scaled_laplacian() {
        let g = grid(15, 0.1);
        let u = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() * (x * y).exp());
        let k = ScalarField::from_fn(g, |_, _| 2.5);
        let a = div_k_grad(&k, &u).unwrap();
        let b = laplacian(&u);
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!((p - 2.5 * q).abs() <= 1e-14 * p.abs().max(1.0) * 100.0);
        }
    }

    #[test]
    fn disc_area() {
        let g = Grid2D::covering(2.5, 0.05).unwrap();
        let one = ScalarField::from_fn(g, |_, _| 1.0);
        let area = integrate(&one, Region::Disc(2.0)).unwrap();
        let exact = std::f64::consts::PI * 4.0;
        assert!((area - exact).abs() / exact < 5e-3);
        assert_eq!(
            integrate(&ScalarField::zeros(g), Region::Full).unwrap(),
            0.0
        );
        assert!(integrate(&one, Region::Disc(-1.0)).is_err());
    }

    #[test]
    fn gaussian_integral() {
        let g = Grid2D::covering(6.0, 0.05).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (-(x * x + y * y)).exp());
        let v = integrate(&f, Region::Full).unwrap();
        let pi = std::f64::consts::PI;
        assert!((v - pi).abs() / pi < 1e-4);
    }
}
