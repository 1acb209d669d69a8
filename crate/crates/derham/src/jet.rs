//! Truncated Taylor-series ("jet") arithmetic in the curve parameter t at t = 0.
//!
//! A `Jet` of order K stores Taylor coefficients c_0..c_K, so the k-th
//! derivative of the represented quantity is `k! * c_k`. All operations are
//! exact truncations of the formal power-series operations and never read
//! beyond index K.

use crate::error::{Error, Result};

/// Largest supported truncation order.
pub const MAX_ORDER: usize = 8;

/// Truncated Taylor series of fixed order, inline storage, `Copy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    order: usize,
    c: [f64; MAX_ORDER + 1],
}

impl Jet {
    pub fn zero(order: usize) -> Self {
        debug_assert!(order <= MAX_ORDER);
        Jet {
            order,
            c: [0.0; MAX_ORDER + 1],
        }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut j = Jet::zero(order);
        j.c[0] = value;
        j
    }

    pub fn one(order: usize) -> Self {
        Jet::constant(1.0, order)
    }

    /// `value + t`, the jet of the identity parametrization shifted by `value`.
    pub fn variable(value: f64, order: usize) -> Self {
        let mut j = Jet::constant(value, order);
        if order >= 1 {
            j.c[1] = 1.0;
        }
        j
    }

    pub fn from_coeffs(coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > MAX_ORDER + 1 {
            return Err(Error::OrderTooLarge(coeffs.len().saturating_sub(1)));
        }
        let mut j = Jet::zero(coeffs.len() - 1);
        j.c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(j)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c[..=self.order]
    }

    pub fn coeff(&self, k: usize) -> f64 {
        if k <= self.order {
            self.c[k]
        } else {
            0.0
        }
    }

    /// Constant term, i.e. the value at t = 0.
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative at t = 0, `k! * c_k`.
    pub fn derivative(&self, k: usize) -> f64 {
        factorial(k) * self.coeff(k)
    }

    /// Evaluate the truncated polynomial at parameter value `t`.
    pub fn eval_at(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for &ck in self.coeffs().iter().rev() {
            acc = acc * t + ck;
        }
        acc
    }

    /// Re-expand the truncated polynomial around `t0` (same order).
    pub fn shift_base(&self, t0: f64) -> Jet {
        // Repeated synthetic division of the polynomial by (t - t0).
        let mut work = *self;
        let mut out = Jet::zero(self.order);
        for k in 0..=self.order {
            let mut acc = 0.0;
            for i in (k..=self.order).rev() {
                acc = acc * t0 + work.c[i];
                work.c[i] = acc;
            }
            out.c[k] = work.c[k];
        }
        out
    }

    fn check_order(&self, other: &Jet) -> Result<()> {
        if self.order != other.order {
            return Err(Error::OrderMismatch {
                left: self.order,
                right: other.order,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        let mut out = *self;
        for i in 0..=self.order {
            out.c[i] += other.c[i];
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        let mut out = *self;
        for i in 0..=self.order {
            out.c[i] -= other.c[i];
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = *self;
        for i in 0..=self.order {
            out.c[i] *= s;
        }
        out
    }

    /// Cauchy product truncated at the shared order.
    pub fn mul(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        let mut out = Jet::zero(self.order);
        for i in 0..=self.order {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.c[j] * other.c[i - j];
            }
            out.c[i] = acc;
        }
        Ok(out)
    }

    /// Power-series quotient truncated at the shared order.
    pub fn div(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        if other.c[0].abs() < 1e-300 {
            return Err(Error::DivisionSingularity);
        }
        let inv_b0 = 1.0 / other.c[0];
        let mut out = Jet::zero(self.order);
        for i in 0..=self.order {
            let mut acc = self.c[i];
            for j in 1..=i {
                acc -= other.c[j] * out.c[i - j];
            }
            out.c[i] = acc * inv_b0;
        }
        Ok(out)
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = *self;
        out.c[0] += s;
        out
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs().iter().all(|c| c.is_finite())
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Möbius map `(a z + b) / (c z + d)` with jet-valued matrix entries.
///
/// `m` is row-major: `[[a, b], [c, d]]`.
pub fn mobius_jet(m: &[[Jet; 2]; 2], z: &Jet) -> Result<Jet> {
    let num = m[0][0].mul(z)?.add(&m[0][1])?;
    let den = m[1][0].mul(z)?.add(&m[1][1])?;
    num.div(&den)
}
