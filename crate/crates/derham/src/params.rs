//! The parameter space: points (b1, c0, c1), matrix construction, duals,
//! the [alpha, beta] interval, measure classification and the
//! non-degeneracy condition on parameter curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{mobius_jet, Jet, MAX_ORDER};

/// A point of the admissible parameter region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub b1: f64,
    pub c0: f64,
    pub c1: f64,
}

/// Per-condition outcome of validating a parameter triple.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ValidationReport {
    pub finite: bool,
    /// b1 in (0, 1)
    pub b1_in_range: bool,
    /// c0 in (b1 - 1, 1/b1 - 1)
    pub c0_in_range: bool,
    /// c1 in (-b1, b1/(1 - b1))
    pub c1_in_range: bool,
    /// (1 + c1)(1 - b1(1 + c0))^2 < 1 - b1
    pub contraction_first: bool,
    /// (b1 + c1)^2 < b1(1 + c0)(1 + c1)
    pub contraction_second: bool,
}

impl ValidationReport {
    pub fn base_conditions(&self) -> bool {
        self.finite && self.b1_in_range && self.c0_in_range && self.c1_in_range
    }

    pub fn contraction(&self) -> bool {
        self.contraction_first || self.contraction_second
    }

    pub fn valid(&self) -> bool {
        self.base_conditions() && self.contraction()
    }
}

/// The pair of defining matrices, row-major entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixPair {
    pub a0: [[f64; 2]; 2],
    pub a1: [[f64; 2]; 2],
}

/// Scalar Möbius map `(a z + b)/(c z + d)`.
pub fn mobius(m: &[[f64; 2]; 2], z: f64) -> f64 {
    (m[0][0] * z + m[0][1]) / (m[1][0] * z + m[1][1])
}

/// Measure type of the base point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureClass {
    AbsolutelyContinuous,
    Singular,
}

impl CurvePoint {
    pub fn new(b1: f64, c0: f64, c1: f64) -> Result<Self> {
        let p = CurvePoint { b1, c0, c1 };
        let report = p.validate();
        if report.valid() {
            Ok(p)
        } else {
            Err(Error::InvalidPoint(format!("{report:?}")))
        }
    }

    /// Construct without the contraction condition; base range conditions are
    /// still required so that the recursion stays well defined.
    pub fn new_forced(b1: f64, c0: f64, c1: f64) -> Result<Self> {
        let p = CurvePoint { b1, c0, c1 };
        if p.validate().base_conditions() {
            Ok(p)
        } else {
            Err(Error::InvalidPoint(format!("{:?}", p.validate())))
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let CurvePoint { b1, c0, c1 } = *self;
        let finite = b1.is_finite() && c0.is_finite() && c1.is_finite();
        let b1_in_range = finite && b1 > 0.0 && b1 < 1.0;
        // Range checks below only make sense once b1 is in range.
        let c0_in_range = b1_in_range && c0 > b1 - 1.0 && c0 < 1.0 / b1 - 1.0;
        let c1_in_range = b1_in_range && c1 > -b1 && c1 < b1 / (1.0 - b1);
        let contraction_first =
            b1_in_range && (1.0 + c1) * (1.0 - b1 * (1.0 + c0)).powi(2) < 1.0 - b1;
        let contraction_second = b1_in_range && (b1 + c1).powi(2) < b1 * (1.0 + c0) * (1.0 + c1);
        ValidationReport {
            finite,
            b1_in_range,
            c0_in_range,
            c1_in_range,
            contraction_first,
            contraction_second,
        }
    }

    /// The defining matrices A0 = [[b1(c0+1), 0], [c0, 1]],
    /// A1 = [[1-b1+c1, b1], [c1, 1]].
    pub fn matrices(&self) -> MatrixPair {
        let CurvePoint { b1, c0, c1 } = *self;
        MatrixPair {
            a0: [[b1 * (c0 + 1.0), 0.0], [c0, 1.0]],
            a1: [[1.0 - b1 + c1, b1], [c1, 1.0]],
        }
    }

    /// The reflected parameter triple (1-b1, -c1/(1+c1), -c0/(1+c0)).
    pub fn dual(&self) -> CurvePoint {
        CurvePoint {
            b1: 1.0 - self.b1,
            c0: -self.c1 / (1.0 + self.c1),
            c1: -self.c0 / (1.0 + self.c0),
        }
    }

    /// The invariant interval [alpha, beta] of the transposed maps.
    pub fn alpha_beta(&self) -> (f64, f64) {
        let CurvePoint { b1, c0, c1 } = *self;
        let r0 = c0 / (1.0 - b1 * (c0 + 1.0));
        let r1 = c1 / b1;
        let alpha = 0.0_f64.min(r0).min(r1);
        let beta = 0.0_f64.max(r0).max(r1);
        (alpha, beta)
    }

    /// Absolutely continuous iff c0 = (2 b1)^{-1} - 1 and c1 = 1 - 2 b1.
    pub fn classify(&self) -> MeasureClass {
        let tol = 1e-12;
        let ac = (self.c0 - (0.5 / self.b1 - 1.0)).abs() <= tol
            && (self.c1 - (1.0 - 2.0 * self.b1)).abs() <= tol;
        if ac {
            MeasureClass::AbsolutelyContinuous
        } else {
            MeasureClass::Singular
        }
    }
}

/// A smooth parameter curve given by Taylor jets of (b1, c0, c1) at t = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCurve {
    b1: Jet,
    c0: Jet,
    c1: Jet,
    half_width: f64,
}

#[derive(Serialize, Deserialize)]
struct CurveWire {
    b1: Vec<f64>,
    c0: Vec<f64>,
    c1: Vec<f64>,
    order: usize,
    half_width: f64,
}

impl ParamCurve {
    /// Build and validate a curve. With `force` the contraction condition
    /// (but not the base range conditions) is waived at every sampled t.
    pub fn new(
        b1: &[f64],
        c0: &[f64],
        c1: &[f64],
        half_width: f64,
        force: bool,
    ) -> Result<Self> {
        let order = b1.len().max(c0.len()).max(c1.len()).saturating_sub(1);
        if order > MAX_ORDER {
            return Err(Error::OrderTooLarge(order));
        }
        let pad = |v: &[f64]| -> Result<Jet> {
            let mut c = vec![0.0; order + 1];
            c[..v.len()].copy_from_slice(v);
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("curve coefficient"));
            }
            Jet::from_coeffs(&c)
        };
        let curve = ParamCurve {
            b1: pad(b1)?,
            c0: pad(c0)?,
            c1: pad(c1)?,
            half_width,
        };
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidPoint("half_width must be positive".into()));
        }
        // Sampled validation: base point and t in {+-tau/2, +-tau}.
        for t in [0.0, half_width, -half_width, half_width / 2.0, -half_width / 2.0] {
            let p = curve.point_at(t);
            let rep = p.validate();
            let ok = if force {
                rep.base_conditions()
            } else {
                rep.valid()
            };
            if !ok {
                return Err(Error::InvalidPoint(format!(
                    "curve leaves the admissible region at t = {t}: {rep:?}"
                )));
            }
        }
        Ok(curve)
    }

    /// A curve with all t-derivatives zero.
    pub fn constant(point: CurvePoint, order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::OrderTooLarge(order));
        }
        CurvePoint::new(point.b1, point.c0, point.c1)?;
        Ok(ParamCurve {
            b1: Jet::constant(point.b1, order),
            c0: Jet::constant(point.c0, order),
            c1: Jet::constant(point.c1, order),
            half_width: 1e-3,
        })
    }

    /// The Lebesgue-singular family `(t + a, 0, 0)`.
    pub fn bernoulli(a: f64, order: usize) -> Result<Self> {
        let mut b1 = vec![0.0; order + 1];
        b1[0] = a;
        if order >= 1 {
            b1[1] = 1.0;
        }
        let tau = 0.49 * a.min(1.0 - a);
        ParamCurve::new(&b1, &[0.0], &[0.0], tau, false)
    }

    pub fn order(&self) -> usize {
        self.b1.order()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn b1_jet(&self) -> &Jet {
        &self.b1
    }

    pub fn c0_jet(&self) -> &Jet {
        &self.c0
    }

    pub fn c1_jet(&self) -> &Jet {
        &self.c1
    }

    /// Base point (t = 0).
    pub fn point(&self) -> CurvePoint {
        CurvePoint {
            b1: self.b1.value(),
            c0: self.c0.value(),
            c1: self.c1.value(),
        }
    }

    pub fn point_at(&self, t: f64) -> CurvePoint {
        CurvePoint {
            b1: self.b1.eval_at(t),
            c0: self.c0.eval_at(t),
            c1: self.c1.eval_at(t),
        }
    }

    /// Dual curve: jets of (1-b1, -c1/(1+c1), -c0/(1+c0)).
    pub fn dual(&self) -> Result<ParamCurve> {
        let order = self.order();
        let one = Jet::one(order);
        let b1 = one.sub(&self.b1)?;
        let c0 = self.c1.neg().div(&one.add(&self.c1)?)?;
        let c1 = self.c0.neg().div(&one.add(&self.c0)?)?;
        Ok(ParamCurve {
            b1,
            c0,
            c1,
            half_width: self.half_width,
        })
    }

    /// Jet-valued transposed matrices [tA0, tA1]:
    /// tA0 = [[b1(1+c0), c0], [0, 1]], tA1 = [[1-b1+c1, c1], [b1, 1]].
    pub fn transposed_matrix_jets(&self) -> Result<[[[Jet; 2]; 2]; 2]> {
        let k = self.order();
        let one = Jet::one(k);
        let zero = Jet::zero(k);
        let ta0 = [
            [self.b1.mul(&one.add(&self.c0)?)?, self.c0],
            [zero, one],
        ];
        let ta1 = [
            [one.sub(&self.b1)?.add(&self.c1)?, self.c1],
            [self.b1, one],
        ];
        Ok([ta0, ta1])
    }

    /// Jet in t of `G_j(t, y)` for fixed y.
    pub fn g_jet_at(&self, j: usize, y: f64) -> Result<Jet> {
        let ms = self.transposed_matrix_jets()?;
        mobius_jet(&ms[j], &Jet::constant(y, self.order()))
    }

    /// Re-expand the curve around t0 (evaluating F at t = t0 then reduces to
    /// evaluating the shifted curve at 0). No region re-validation beyond the
    /// base point.
    pub fn shift_base(&self, t0: f64) -> Result<ParamCurve> {
        let shifted = ParamCurve {
            b1: self.b1.shift_base(t0),
            c0: self.c0.shift_base(t0),
            c1: self.c1.shift_base(t0),
            half_width: self.half_width,
        };
        if !shifted.point().validate().base_conditions() {
            return Err(Error::InvalidPoint(format!(
                "curve leaves the base region at t = {t0}"
            )));
        }
        Ok(shifted)
    }

    /// Reparametrize by t -> gamma(t) given as a jet with gamma(0) = 0.
    pub fn compose(&self, gamma: &Jet) -> Result<ParamCurve> {
        let compose_one = |f: &Jet| -> Result<Jet> {
            // Horner on the outer polynomial with jet argument.
            let mut acc = Jet::constant(f.coeff(f.order()), self.order());
            for k in (0..f.order()).rev() {
                acc = acc.mul(gamma)?.add_scalar(f.coeff(k));
            }
            Ok(acc)
        };
        Ok(ParamCurve {
            b1: compose_one(&self.b1)?,
            c0: compose_one(&self.c0)?,
            c1: compose_one(&self.c1)?,
            half_width: self.half_width,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!(CurveWire {
            b1: self.b1.coeffs().to_vec(),
            c0: self.c0.coeffs().to_vec(),
            c1: self.c1.coeffs().to_vec(),
            order: self.order(),
            half_width: self.half_width,
        })
    }

    pub fn from_json(v: &serde_json::Value, force: bool) -> Result<ParamCurve> {
        let wire: CurveWire = serde_json::from_value(v.clone())?;
        let extend = |mut v: Vec<f64>| {
            v.resize(wire.order + 1, 0.0);
            v
        };
        ParamCurve::new(
            &extend(wire.b1),
            &extend(wire.c0),
            &extend(wire.c1),
            wire.half_width,
            force,
        )
    }
}

/// Outcome of the non-degeneracy check on a curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NdReport {
    pub delta0: f64,
    pub delta1: Option<f64>,
    pub delta0_dual: f64,
    pub delta1_dual: Option<f64>,
    pub nd1_holds: bool,
    pub nd2_holds: bool,
    pub nd_holds: bool,
}

/// Extremize `f` over [a, b]: grid of >= 1025 points plus golden-section
/// refinement around the best grid cell, to absolute tolerance 1e-9.
fn extremize(f: &dyn Fn(f64) -> f64, a: f64, b: f64, maximize: bool) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    if b - a <= 0.0 {
        return f(a);
    }
    const GRID: usize = 1025;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..GRID {
        let y = a + (b - a) * i as f64 / (GRID - 1) as f64;
        let v = sign * f(y);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let step = (b - a) / (GRID - 1) as f64;
    let mut lo = a + step * best_i.saturating_sub(1) as f64;
    let mut hi = (a + step * (best_i + 1) as f64).min(b);
    // Golden-section refinement.
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = sign * f(x1);
    let mut f2 = sign * f(x2);
    while hi - lo > 1e-9 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sign * f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sign * f(x2);
        }
    }
    sign * best.min(f1.min(f2))
}

/// d/dy of G_j(0, y) at the base point.
fn dy_g(point: &CurvePoint, j: usize, y: f64) -> f64 {
    if j == 0 {
        point.b1 * (1.0 + point.c0)
    } else {
        (1.0 - point.b1) * (1.0 + point.c1) / (point.b1 * y + 1.0).powi(2)
    }
}

/// The ratio `dt G_j(0, y) / (1 - dy G_j(0, y))`, extremized over the
/// invariant interval. Returns None when the denominator vanishes there.
fn delta_extremum(curve: &ParamCurve, j: usize, maximize: bool) -> Result<Option<f64>> {
    let point = curve.point();
    let (alpha, beta) = point.alpha_beta();
    // The denominator is monotone in y, so vanishing on the interval shows
    // at the endpoints or as a sign change between them.
    let den_a = 1.0 - dy_g(&point, j, alpha);
    let den_b = 1.0 - dy_g(&point, j, beta);
    if den_a.abs() < 1e-12 || den_b.abs() < 1e-12 || den_a.signum() != den_b.signum() {
        return Ok(None);
    }
    let ms = curve.transposed_matrix_jets()?;
    let order = curve.order();
    let ratio = |y: f64| -> f64 {
        let g = mobius_jet(&ms[j], &Jet::constant(y, order)).expect("denominator checked");
        g.coeff(1) / (1.0 - dy_g(&point, j, y))
    };
    Ok(Some(extremize(&ratio, alpha, beta, maximize)))
}

/// Evaluate the non-degeneracy condition for a curve (order >= 1).
pub fn check_nd(curve: &ParamCurve) -> Result<NdReport> {
    if curve.order() < 1 {
        return Err(Error::OrderTooLarge(0));
    }
    let point = curve.point();
    let dual = curve.dual()?;
    let dual_point = dual.point();
    let (alpha, _) = point.alpha_beta();
    let (alpha_dual, _) = dual_point.alpha_beta();

    let delta0 = delta_extremum(curve, 0, false)?.expect("delta0 is always defined");
    let delta1 = delta_extremum(curve, 1, false)?;
    let delta0_dual = delta_extremum(&dual, 0, true)?.expect("dual delta0 is always defined");
    let delta1_dual = delta_extremum(&dual, 1, true)?;

    if delta1.is_none() && delta1_dual.is_none() {
        return Err(Error::DeltaInconsistency);
    }

    let b1p = curve.b1_jet().coeff(1);
    let b1 = point.b1;
    let nd1_holds = match delta1 {
        Some(d1) => {
            b1p * (alpha + 1.0) + b1 * (1.0 - b1) * 0.0_f64.min(delta0).min(d1) > 0.0
        }
        None => false,
    };
    let b1p_dual = dual.b1_jet().coeff(1);
    let b1_dual = dual_point.b1;
    let nd2_holds = match delta1_dual {
        Some(d1) => {
            b1p_dual * (alpha_dual + 1.0)
                + b1_dual * (1.0 - b1_dual) * 0.0_f64.max(delta0_dual).max(d1)
                < 0.0
        }
        None => false,
    };

    Ok(NdReport {
        delta0,
        delta1,
        delta0_dual,
        delta1_dual,
        nd1_holds,
        nd2_holds,
        nd_holds: nd1_holds || nd2_holds,
    })
}
