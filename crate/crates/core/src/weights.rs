//! Space-time weights `ψ(t, x)` and `φ(t)` with closed-form derivatives.
//!
//! Both weights move outward at the far-field speed `√k0`; `ψ` solves the
//! eikonal relation `k0|∇ψ|² = ψ_t²` away from the origin and `φ(t)` is `ψ`
//! evaluated on the circle `|x| = r0`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight parameters need k0 > 0 and r0 > 0, got k0 = {k0}, r0 = {r0}")]
    BadParams { k0: f64, r0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    k0: f64,
    r0: f64,
}

impl WeightParams {
    pub fn new(k0: f64, r0: f64) -> Result<Self, WeightError> {
        if !(k0 > 0.0 && r0 > 0.0) {
            return Err(WeightError::BadParams { k0, r0 });
        }
        Ok(Self { k0, r0 })
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    fn speed(&self) -> f64 {
        self.k0.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiValue {
    pub value: f64,
    pub dt: f64,
    pub grad: (f64, f64),
}

/// `ψ` and its derivatives. The gradient at `x = 0` is reported as zero.
pub fn psi(t: f64, x: (f64, f64), params: &WeightParams) -> PsiValue {
    let c = params.speed();
    let r = x.0.hypot(x.1);
    let front = c * t;
    let dir = if r > 0.0 {
        (x.0 / r, x.1 / r)
    } else {
        (0.0, 0.0)
    };
    if r >= front {
        PsiValue {
            value: 1.0 + r - front,
            dt: -c,
            grad: dir,
        }
    } else {
        let d = 1.0 + front - r;
        let inv2 = 1.0 / (d * d);
        PsiValue {
            value: 1.0 / d,
            dt: -c * inv2,
            grad: (dir.0 * inv2, dir.1 * inv2),
        }
    }
}

/// Value of `ψ` only.
#[inline]
pub fn psi_value(t: f64, r: f64, speed: f64) -> f64 {
    let front = speed * t;
    if r >= front {
        1.0 + r - front
    } else {
        1.0 / (1.0 + front - r)
    }
}

/// `k0|∇ψ|² − ψ_t²`.
pub fn eikonal_residual(t: f64, x: (f64, f64), params: &WeightParams) -> f64 {
    let p = psi(t, x, params);
    params.k0 * (p.grad.0 * p.grad.0 + p.grad.1 * p.grad.1) - p.dt * p.dt
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    pub dt: f64,
}

pub fn phi(t: f64, params: &WeightParams) -> PhiValue {
    let c = params.speed();
    let front = c * t;
    if params.r0 >= front {
        PhiValue {
            value: 1.0 + params.r0 - front,
            dt: -c,
        }
    } else {
        let d = 1.0 + front - params.r0;
        PhiValue {
            value: 1.0 / d,
            dt: -c / (d * d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> WeightParams {
        WeightParams::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn psi_branches() {
        let p = unit();
        for &r in &[0.0, 0.5, 3.0, 10.0] {
            assert_eq!(psi(0.0, (r, 0.0), &p).value, 1.0 + r);
        }
        assert_eq!(psi(3.0, (0.0, 0.0), &p).value, 0.25);
        assert_eq!(psi(3.0, (0.0, 0.0), &p).grad, (0.0, 0.0));
        let at_front = psi(2.0, (2.0, 0.0), &p).value;
        let just_inside = psi(2.0, (2.0 - 1e-12, 0.0), &p).value;
        assert_eq!(at_front, 1.0);
        assert!((just_inside - 1.0).abs() < 1e-11);
    }

    #[test]
    fn eikonal_exact_on_both_branches() {
        let p = WeightParams::new(2.0, 1.0).unwrap();
        assert!(eikonal_residual(1.0, (5.0, 1.0), &p).abs() < 1e-15);
        assert!(eikonal_residual(5.0, (0.3, -0.4), &p).abs() < 1e-15);
    }

    #[test]
    fn phi_values() {
        let p = unit();
        assert_eq!(phi(0.0, &p).value, 3.0);
        let q = WeightParams::new(1.0, 2.0).unwrap();
        assert!((phi(6.0, &q).value - 0.2).abs() < 1e-15);
        for k in 0..200 {
            let t = 0.05 * k as f64;
            let f = phi(t, &q);
            assert!(f.value > 0.0 && f.dt < 0.0);
            let on_circle = psi(t, (0.6 * 2.0, 0.8 * 2.0), &q).value;
            assert!((f.value - on_circle).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(WeightParams::new(0.0, 1.0).is_err());
        assert!(WeightParams::new(1.0, -1.0).is_err());
    }
}
