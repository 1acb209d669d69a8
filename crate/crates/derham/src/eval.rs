//! Core evaluation of the self-affine interpolation function F(t, x) and its
//! t-derivatives, driven by the binary digits of x.
//!
//! State along a digit path is kept in a log-normalized form: the cylinder
//! mass jet M_n is stored as `2^log2_m * zm` with `zm` normalized so its
//! constant term is 1. This keeps the recursion stable down to depth 4096,
//! where M_n itself underflows f64 by thousands of binary orders.

use crate::dyadic::{first_disagreement, BinaryPoint};
use crate::error::{Error, Result};
use crate::exec;
use crate::jet::{factorial, mobius_jet, Jet};
use crate::params::ParamCurve;
use rand::Rng;

/// Depth above which tree recursions hand both children to `exec::join`.
const SPLIT_DEPTH: u32 = 12;

/// Hard cap on digits consumed by a single series evaluation.
pub const MAX_DIGITS: u64 = 4096;

/// Evaluator for one parameter curve: precomputed jet matrices plus scalar
/// base-point data.
#[derive(Clone, Debug)]
pub struct CurveEvaluator {
    curve: ParamCurve,
    order: usize,
    /// Transposed matrix jets [tA0, tA1] driving y -> G_j(t, y).
    mats: [[[Jet; 2]; 2]; 2],
    b1: Jet,
    alpha: f64,
    beta: f64,
    p_min: f64,
    p_max: f64,
}

/// Result of a series evaluation of F at one point.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    /// F(0, x).
    pub value: f64,
    /// Jet of t -> F(t, x).
    pub jet: Jet,
    /// Digits consumed.
    pub terms: usize,
    /// Bound on the truncated tail (0 for exact dyadic termination).
    pub tail_bound: f64,
}

impl Evaluation {
    /// f_k(x), the k-th t-derivative at t = 0.
    pub fn f_k(&self, k: usize) -> f64 {
        self.jet.derivative(k)
    }
}

/// A jet with an explicit power-of-two scale factor, used for increments
/// F(t, y) - F(t, x) whose magnitude underflows f64.
#[derive(Clone, Copy, Debug)]
pub struct ScaledJet {
    pub log2_scale: f64,
    pub jet: Jet,
}

impl ScaledJet {
    /// k-th derivative as a plain f64 (may underflow to 0 by design).
    pub fn derivative(&self, k: usize) -> f64 {
        self.log2_scale.exp2() * self.jet.derivative(k)
    }

    /// log2 of |k-th derivative|, usable far outside f64 range.
    pub fn log2_abs_derivative(&self, k: usize) -> f64 {
        self.log2_scale + self.jet.derivative(k).abs().log2()
    }
}

/// Per-step output of the digit recursion.
#[derive(Clone, Copy, Debug)]
pub struct StepOut {
    /// Jet of the consumed transition weight H_n (p or 1 - p at g_n).
    pub h: Jet,
    /// Jet of p0(t, g_n), regardless of the digit taken.
    pub p: Jet,
}

/// Path state: g_n jet, normalized mass jet and its log2 scale.
#[derive(Clone, Copy, Debug)]
pub struct PathState {
    pub g: Jet,
    pub zm: Jet,
    pub log2_m: f64,
    pub n: u64,
}

/// Per-depth extremes of the depth-d increment f_k(l/2^d) - f_k((l-1)/2^d)
/// over cylinders inside a fixed dyadic interval.
#[derive(Clone, Debug)]
pub struct DepthExtremes {
    /// max over cylinders at depth d = index + 1; -inf when none fit.
    pub max: Vec<f64>,
    /// min, +inf when none fit.
    pub min: Vec<f64>,
}

/// Z_{k,n}, Y_n and companion series along the digit path of one point.
#[derive(Clone, Debug)]
pub struct ZSeries {
    /// log2 M_n(0, x) for n = 1..=n_max.
    pub log2_m: Vec<f64>,
    /// z[n-1][k] = Z_{k,n} = d_t^k M_n / M_n at t = 0.
    pub z: Vec<Vec<f64>>,
    /// Y_n = d_t H_{n-1} / H_{n-1} along the path.
    pub y: Vec<f64>,
    /// E[Y_{n}^2 | first n-1 digits], from both candidate digits.
    pub cond_var: Vec<f64>,
    /// P_{n-1} = p0(0, g_{n-1}), the probability of digit 0 at step n.
    pub p: Vec<f64>,
}

impl CurveEvaluator {
    pub fn new(curve: &ParamCurve) -> Result<Self> {
        let point = curve.point();
        let (alpha, beta) = point.alpha_beta();
        let order = curve.order();
        let mats = curve.transposed_matrix_jets()?;
        let p0 = |y: f64| point.b1 * (y + 1.0) / (point.b1 * y + 1.0);
        // p0 is increasing in y and p1 = 1 - p0 decreasing, so the extremes of
        // the transition weight over [alpha, beta] sit at the endpoints.
        let p_max = p0(beta).max(1.0 - p0(alpha));
        let p_min = p0(alpha).min(1.0 - p0(beta));
        Ok(CurveEvaluator {
            curve: curve.clone(),
            order,
            mats,
            b1: *curve.b1_jet(),
            alpha,
            beta,
            p_min,
            p_max,
        })
    }

    pub fn curve(&self) -> &ParamCurve {
        &self.curve
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Infimum of the transition weight H over digits and y in [alpha, beta].
    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    /// Supremum of the transition weight; strictly below 1 on valid points.
    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// Jet of p0(t, g) = b1 (g + 1) / (b1 g + 1).
    pub fn p0_jet(&self, g: &Jet) -> Result<Jet> {
        let num = self.b1.mul(&g.add_scalar(1.0))?;
        let den = self.b1.mul(g)?.add_scalar(1.0);
        num.div(&den)
    }

    /// Scalar p0 at t = 0.
    pub fn p0_scalar(&self, g: f64) -> f64 {
        let b1 = self.b1.value();
        b1 * (g + 1.0) / (b1 * g + 1.0)
    }

    pub fn initial_state(&self) -> PathState {
        PathState {
            g: Jet::zero(self.order),
            zm: Jet::one(self.order),
            log2_m: 0.0,
            n: 0,
        }
    }

    /// Consume one digit: updates g, the normalized mass jet and its scale.
    pub fn step(&self, state: &mut PathState, bit: u8) -> Result<StepOut> {
        debug_assert!(bit <= 1);
        debug_assert!(
            state.g.value() >= self.alpha - 1e-9 && state.g.value() <= self.beta + 1e-9,
            "g left [alpha, beta]"
        );
        let p = self.p0_jet(&state.g)?;
        let h = if bit == 0 {
            p
        } else {
            Jet::one(self.order).sub(&p)?
        };
        let h0 = h.value();
        if !(h0 > 0.0 && h0 < 1.0) {
            return Err(Error::Instability {
                step: state.n as usize + 1,
                what: "transition weight left (0, 1)",
            });
        }
        let raw = state.zm.mul(&h)?;
        let s = raw.value();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Instability {
                step: state.n as usize + 1,
                what: "mass jet lost its positive constant term",
            });
        }
        state.log2_m += s.log2();
        state.zm = raw.scale(1.0 / s);
        state.g = mobius_jet(&self.mats[bit as usize], &state.g)?;
        state.n += 1;
        Ok(StepOut { h, p })
    }

    /// Series evaluation of the F jet at `x` with tail bound below `tol`.
    ///
    /// Dyadic (and truncated) points terminate exactly once their digits run
    /// out; eventually periodic points stop when `M_n (1 + 10 n^K) < tol`,
    /// with a hard cap of `MAX_DIGITS` digits.
    pub fn eval_f_jet(&self, x: &BinaryPoint, tol: f64) -> Result<Evaluation> {
        let finite = x.period_len() == 0;
        let limit = x.prefix_len() as u64;
        self.eval_engine(
            |i| {
                if finite && i > limit {
                    None
                } else {
                    Some(x.digit(i))
                }
            },
            self.initial_state(),
            tol,
        )
    }

    /// F(0, x) only.
    pub fn eval_f(&self, x: &BinaryPoint, tol: f64) -> Result<f64> {
        Ok(self.eval_f_jet(x, tol)?.value)
    }

    fn eval_engine<D: Fn(u64) -> Option<u8>>(
        &self,
        digits: D,
        start: PathState,
        tol: f64,
    ) -> Result<Evaluation> {
        let k = self.order as i32;
        let mut state = start;
        let mut sum = Jet::zero(self.order);
        let mut tail;
        let mut i = state.n;
        loop {
            i += 1;
            let Some(bit) = digits(i) else {
                tail = 0.0;
                break;
            };
            if bit == 1 {
                let p = self.p0_jet(&state.g)?;
                let contrib = state.zm.mul(&p)?.scale(state.log2_m.exp2());
                sum = sum.add(&contrib)?;
            }
            self.step(&mut state, bit)?;
            let n = state.n - start.n;
            tail = state.log2_m.exp2() * (1.0 + 10.0 * (n as f64).powi(k));
            if tail < tol {
                break;
            }
            if n >= MAX_DIGITS {
                return Err(Error::PrecisionExhausted {
                    requested: tol,
                    achieved: tail,
                    terms: n as usize,
                });
            }
        }
        if !sum.is_finite() {
            return Err(Error::Instability {
                step: state.n as usize,
                what: "non-finite partial sum",
            });
        }
        Ok(Evaluation {
            value: sum.value(),
            jet: sum,
            terms: (state.n - start.n) as usize,
            tail_bound: tail,
        })
    }

    /// Increment jet F(t, y) - F(t, x) via the shared-digit-prefix route.
    ///
    /// The common prefix contributes only the common mass factor, which is
    /// split off as the scale of the returned `ScaledJet`; the two tails are
    /// evaluated from the common state, so no catastrophic cancellation
    /// occurs even when |y - x| is as small as 2^-1024.
    pub fn f_diff(&self, x: &BinaryPoint, y: &BinaryPoint, tol: f64) -> Result<ScaledJet> {
        let l = first_disagreement(x, y)?;
        let mut state = self.initial_state();
        for i in 1..l {
            self.step(&mut state, x.digit(i))?;
        }
        let tail_eval = |p: &BinaryPoint| -> Result<Jet> {
            let finite = p.period_len() == 0;
            let limit = p.prefix_len() as u64;
            let shift = l - 1;
            let ev = self.eval_engine(
                |i| {
                    let j = shift + i;
                    if finite && j > limit {
                        None
                    } else {
                        Some(p.digit(j))
                    }
                },
                PathState {
                    g: state.g,
                    zm: Jet::one(self.order),
                    log2_m: 0.0,
                    n: 0,
                },
                tol,
            )?;
            Ok(ev.jet)
        };
        let ry = tail_eval(y)?;
        let rx = tail_eval(x)?;
        let jet = state.zm.mul(&ry.sub(&rx)?)?;
        Ok(ScaledJet {
            log2_scale: state.log2_m,
            jet,
        })
    }

    /// Normalized increment derivative
    /// `d_t^k (F(t,y) - F(t,x)) / (F(0,y) - F(0,x))` at t = 0.
    pub fn delta_k_f(&self, x: &BinaryPoint, y: &BinaryPoint, k: usize, tol: f64) -> Result<f64> {
        let d = self.f_diff(x, y, tol)?;
        let denom = d.jet.value();
        if denom.abs() < 1e-300 {
            return Err(Error::DegenerateDenominator);
        }
        Ok(d.jet.derivative(k) / denom)
    }

    /// Z_{k,n}, Y_n, log2 M_n and companions along the digits of `x`,
    /// for n = 1..=n_max.
    pub fn z_series(&self, x: &BinaryPoint, n_max: u64) -> Result<ZSeries> {
        self.z_series_digits(|i| x.digit(i), n_max)
    }

    /// Same, driven by an explicit digit string (index i-1 holds digit i).
    pub fn z_series_bits(&self, bits: &[bool]) -> Result<ZSeries> {
        self.z_series_digits(|i| u8::from(bits[(i - 1) as usize]), bits.len() as u64)
    }

    fn z_series_digits<D: Fn(u64) -> u8>(&self, digit: D, n_max: u64) -> Result<ZSeries> {
        let mut state = self.initial_state();
        let n = n_max as usize;
        let mut out = ZSeries {
            log2_m: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            cond_var: Vec::with_capacity(n),
            p: Vec::with_capacity(n),
        };
        for i in 1..=n_max {
            let step = self.step(&mut state, digit(i))?;
            let p0 = step.p.value();
            let y0 = step.p.coeff(1) / p0;
            let p1 = Jet::one(self.order).sub(&step.p)?;
            let y1 = p1.coeff(1) / p1.value();
            out.p.push(p0);
            out.y.push(step.h.coeff(1) / step.h.value());
            out.cond_var.push(p0 * y0 * y0 + (1.0 - p0) * y1 * y1);
            out.log2_m.push(state.log2_m);
            out.z
                .push((0..=self.order).map(|k| state.zm.derivative(k)).collect());
        }
        Ok(out)
    }

    /// Draw `depth` digits from the base-point measure; returns the digit
    /// string (digit i at index i-1).
    pub fn sample_mu0_bits<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Vec<bool> {
        let m = self.curve.point().matrices();
        let mut g = 0.0f64;
        let mut bits = Vec::with_capacity(depth);
        for _ in 0..depth {
            let p0 = self.p0_scalar(g);
            let one = rng.gen::<f64>() >= p0;
            bits.push(one);
            let a = if one { &m.a1 } else { &m.a0 };
            // transposed-matrix Mobius action on g
            g = (a[0][0] * g + a[1][0]) / (a[0][1] * g + a[1][1]);
        }
        bits
    }

    /// Draw a `depth`-digit point from the base-point measure, flagged as a
    /// truncated expansion.
    pub fn sample_mu0<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Result<BinaryPoint> {
        let bits = self.sample_mu0_bits(depth, rng);
        BinaryPoint::from_bits(bits, Vec::new(), true)
    }

    /// log2 of the cylinder mass of the given digit string at t = 0.
    pub fn log2_mass_bits(&self, bits: &[bool]) -> Result<f64> {
        let m = self.curve.point().matrices();
        let mut g = 0.0f64;
        let mut acc = 0.0f64;
        for (i, &one) in bits.iter().enumerate() {
            let p0 = self.p0_scalar(g);
            let h = if one { 1.0 - p0 } else { p0 };
            if !(h > 0.0 && h < 1.0) {
                return Err(Error::Instability {
                    step: i + 1,
                    what: "transition weight left (0, 1)",
                });
            }
            acc += h.log2();
            let a = if one { &m.a1 } else { &m.a0 };
            g = (a[0][0] * g + a[1][0]) / (a[0][1] * g + a[1][1]);
        }
        Ok(acc)
    }

    /// f_k at every dyadic point j/2^level, j = 0..=2^level, via one pass
    /// over the binary tree.
    pub fn grid_values(&self, level: u32, k: usize) -> Result<Vec<f64>> {
        if k > self.order {
            return Err(Error::OrderTooLarge(k));
        }
        let n = 1usize << level;
        let mut out = vec![0.0; n + 1];
        self.grid_rec(
            &Jet::zero(self.order),
            &Jet::one(self.order),
            &Jet::zero(self.order),
            level,
            k,
            &mut out[..n],
        )?;
        out[n] = if k == 0 { 1.0 } else { 0.0 };
        Ok(out)
    }

    fn grid_rec(
        &self,
        g: &Jet,
        m: &Jet,
        sum: &Jet,
        depth_left: u32,
        k: usize,
        out: &mut [f64],
    ) -> Result<()> {
        if depth_left == 0 {
            out[0] = factorial(k) * sum.coeff(k);
            return Ok(());
        }
        let p = self.p0_jet(g)?;
        let m0 = m.mul(&p)?;
        let m1 = m.sub(&m0)?;
        let g0 = mobius_jet(&self.mats[0], g)?;
        let g1 = mobius_jet(&self.mats[1], g)?;
        let sum1 = sum.add(&m0)?;
        let (lo, hi) = out.split_at_mut(out.len() / 2);
        if depth_left > SPLIT_DEPTH {
            let (ra, rb) = exec::join(
                || self.grid_rec(&g0, &m0, sum, depth_left - 1, k, lo),
                || self.grid_rec(&g1, &m1, &sum1, depth_left - 1, k, hi),
            );
            ra?;
            rb?;
        } else {
            self.grid_rec(&g0, &m0, sum, depth_left - 1, k, lo)?;
            self.grid_rec(&g1, &m1, &sum1, depth_left - 1, k, hi)?;
        }
        Ok(())
    }

    /// Sum of `f(leaf_index, M_depth jet, g_depth jet)` over the depth-`depth`
    /// cylinders with leaf index in `[a_leaf, b_leaf)`.
    pub fn fold_leaves<F>(&self, depth: u32, a_leaf: u64, b_leaf: u64, f: &F) -> Result<f64>
    where
        F: Fn(u64, &Jet, &Jet) -> f64 + Sync,
    {
        if b_leaf > 1u64 << depth || a_leaf >= b_leaf {
            return Err(Error::OutOfRange(b_leaf as f64));
        }
        self.fold_rec(
            &Jet::zero(self.order),
            &Jet::one(self.order),
            depth,
            0,
            a_leaf,
            b_leaf,
            f,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn fold_rec<F>(
        &self,
        g: &Jet,
        m: &Jet,
        depth_left: u32,
        node_lo: u64,
        a: u64,
        b: u64,
        f: &F,
    ) -> Result<f64>
    where
        F: Fn(u64, &Jet, &Jet) -> f64 + Sync,
    {
        let span = 1u64 << depth_left;
        if node_lo >= b || node_lo + span <= a {
            return Ok(0.0);
        }
        if depth_left == 0 {
            return Ok(f(node_lo, m, g));
        }
        let p = self.p0_jet(g)?;
        let m0 = m.mul(&p)?;
        let m1 = m.sub(&m0)?;
        let g0 = mobius_jet(&self.mats[0], g)?;
        let g1 = mobius_jet(&self.mats[1], g)?;
        let mid = node_lo + span / 2;
        if depth_left > SPLIT_DEPTH {
            let (ra, rb) = exec::join(
                || self.fold_rec(&g0, &m0, depth_left - 1, node_lo, a, b, f),
                || self.fold_rec(&g1, &m1, depth_left - 1, mid, a, b, f),
            );
            Ok(ra? + rb?)
        } else {
            Ok(self.fold_rec(&g0, &m0, depth_left - 1, node_lo, a, b, f)?
                + self.fold_rec(&g1, &m1, depth_left - 1, mid, a, b, f)?)
        }
    }

    /// Total variation-style level sum: sum over depth-`depth` cylinders in
    /// the leaf range of |f_k(right end) - f_k(left end)| = |d_t^k M_depth|.
    pub fn variation_level(&self, depth: u32, k: usize, a_leaf: u64, b_leaf: u64) -> Result<f64> {
        let kf = factorial(k);
        self.fold_leaves(depth, a_leaf, b_leaf, &|_, m: &Jet, _g: &Jet| {
            (kf * m.coeff(k)).abs()
        })
    }

    /// Base-point measure of `[a_leaf, b_leaf) / 2^depth`.
    pub fn mu0_mass(&self, depth: u32, a_leaf: u64, b_leaf: u64) -> Result<f64> {
        self.fold_leaves(depth, a_leaf, b_leaf, &|_, m: &Jet, _g: &Jet| m.value())
    }

    /// Per-depth extremes of the depth-d increments over all cylinders at
    /// depths 1..=max_depth that fit inside `[a_leaf, b_leaf) / 2^max_depth`.
    pub fn depth_extremes(
        &self,
        max_depth: u32,
        a_leaf: u64,
        b_leaf: u64,
        k: usize,
    ) -> Result<DepthExtremes> {
        if b_leaf > 1u64 << max_depth || a_leaf >= b_leaf {
            return Err(Error::OutOfRange(b_leaf as f64));
        }
        let mut acc = DepthExtremes {
            max: vec![f64::NEG_INFINITY; max_depth as usize],
            min: vec![f64::INFINITY; max_depth as usize],
        };
        self.extremes_rec(
            &Jet::zero(self.order),
            &Jet::one(self.order),
            0,
            0,
            max_depth,
            a_leaf,
            b_leaf,
            k,
            &mut acc,
        )?;
        Ok(acc)
    }

    #[allow(clippy::too_many_arguments)]
    fn extremes_rec(
        &self,
        g: &Jet,
        m: &Jet,
        depth: u32,
        node_lo: u64,
        max_depth: u32,
        a: u64,
        b: u64,
        k: usize,
        acc: &mut DepthExtremes,
    ) -> Result<()> {
        let span = 1u64 << (max_depth - depth);
        if node_lo >= b || node_lo + span <= a {
            return Ok(());
        }
        if depth >= 1 && node_lo >= a && node_lo + span <= b {
            let v = factorial(k) * m.coeff(k);
            let slot = (depth - 1) as usize;
            acc.max[slot] = acc.max[slot].max(v);
            acc.min[slot] = acc.min[slot].min(v);
        }
        if depth == max_depth {
            return Ok(());
        }
        let p = self.p0_jet(g)?;
        let m0 = m.mul(&p)?;
        let m1 = m.sub(&m0)?;
        let g0 = mobius_jet(&self.mats[0], g)?;
        let g1 = mobius_jet(&self.mats[1], g)?;
        let mid = node_lo + span / 2;
        if max_depth - depth > SPLIT_DEPTH {
            let mut acc_r = DepthExtremes {
                max: vec![f64::NEG_INFINITY; max_depth as usize],
                min: vec![f64::INFINITY; max_depth as usize],
            };
            let (ra, rb) = exec::join(
                || self.extremes_rec(&g0, &m0, depth + 1, node_lo, max_depth, a, b, k, acc),
                || self.extremes_rec(&g1, &m1, depth + 1, mid, max_depth, a, b, k, &mut acc_r),
            );
            ra?;
            rb?;
            for d in 0..max_depth as usize {
                acc.max[d] = acc.max[d].max(acc_r.max[d]);
                acc.min[d] = acc.min[d].min(acc_r.min[d]);
            }
        } else {
            self.extremes_rec(&g0, &m0, depth + 1, node_lo, max_depth, a, b, k, acc)?;
            self.extremes_rec(&g1, &m1, depth + 1, mid, max_depth, a, b, k, acc)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{parse_point, DyadicRational};
    use crate::params::CurvePoint;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bern(a: f64, order: usize) -> CurveEvaluator {
        CurveEvaluator::new(&ParamCurve::bernoulli(a, order).unwrap()).unwrap()
    }

    fn constant(b1: f64, c0: f64, c1: f64, order: usize) -> CurveEvaluator {
        let curve = ParamCurve::constant(CurvePoint::new(b1, c0, c1).unwrap(), order);
        CurveEvaluator::new(&curve.unwrap()).unwrap()
    }

    fn pt(s: &str) -> BinaryPoint {
        parse_point(s).unwrap()
    }

    #[test]
    fn lebesgue_curve_is_identity() {
        let ev = bern(0.5, 0);
        for s in ["0/1", "1/4", "5/8", "1/3", "2/3", "7/12", "1023/1024"] {
            let x = pt(s);
            let f = ev.eval_f(&x, 1e-15).unwrap();
            assert_relative_eq!(f, x.value(), epsilon = 1e-14);
        }
    }

    #[test]
    fn bernoulli_third_values() {
        let ev = bern(1.0 / 3.0, 0);
        assert_relative_eq!(ev.eval_f(&pt("1/4"), 1e-15).unwrap(), 1.0 / 9.0);
        assert_relative_eq!(ev.eval_f(&pt("5/8"), 1e-15).unwrap(), 11.0 / 27.0);
        let e = ev.eval_f_jet(&pt("5/8"), 1e-15).unwrap();
        assert_eq!(e.tail_bound, 0.0);
        assert_eq!(e.terms, 3);
    }

    #[test]
    fn value_at_half_is_b1() {
        // F(0, 1/2) = p0(0, 0) = b1 regardless of c0, c1.
        let ev = constant(0.4, 0.3, -0.2, 2);
        assert_relative_eq!(ev.eval_f(&pt("1/2"), 1e-15).unwrap(), 0.4);
        let curve =
            ParamCurve::new(&[0.5, 1.0], &[-1.0 / 3.0], &[1.0 / 3.0], 0.05, true).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        assert_relative_eq!(ev.eval_f(&pt("1/2"), 1e-15).unwrap(), 0.5);
    }

    #[test]
    fn jet_at_half_matches_b1_jet() {
        // Digits of 1/2 are "1": F(t, 1/2) = p0(t, 0) = b1(t).
        let ev = bern(0.5, 3);
        let e = ev.eval_f_jet(&pt("1/2"), 1e-15).unwrap();
        assert_relative_eq!(e.f_k(0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(e.f_k(1), 1.0, epsilon = 1e-15);
        assert_relative_eq!(e.f_k(2), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_curve_has_zero_derivatives() {
        let ev = constant(1.0 / 3.0, 0.0, 0.0, 4);
        for s in ["1/3", "5/8", "7/12"] {
            let e = ev.eval_f_jet(&pt(s), 1e-15).unwrap();
            for k in 1..=4 {
                assert_relative_eq!(e.f_k(k), 0.0, epsilon = 1e-12);
            }
        }
    }

    /// Tent-sum oracle for the classical midpoint-displacement function.
    fn takagi(x: f64) -> f64 {
        let mut acc = 0.0;
        for n in 0..60 {
            let s = (x * f64::powi(2.0, n)).fract();
            acc += s.min(1.0 - s) / f64::powi(2.0, n);
        }
        acc
    }

    #[test]
    fn first_derivative_is_twice_takagi_at_half() {
        let ev = bern(0.5, 1);
        for s in ["1/4", "1/2", "5/8", "1/3", "7/12", "11/16"] {
            let x = pt(s);
            let f1 = ev.eval_f_jet(&x, 1e-15).unwrap().f_k(1);
            assert_relative_eq!(f1, 2.0 * takagi(x.value()), epsilon = 1e-12);
        }
    }

    #[test]
    fn z_and_y_series_on_takagi_curve() {
        // x = 1/2: first digit 1 then zeros. Y_1 = -2, Y_i = 2 for i >= 2,
        // Z_{1,n} = 2n - 4, Z_{0,n} = 1, |Y_i| from the 1/a and 1/(1-a) rates.
        let ev = bern(0.5, 2);
        let zs = ev.z_series(&pt("1/2"), 8).unwrap();
        assert_relative_eq!(zs.y[0], -2.0, epsilon = 1e-13);
        for i in 1..8 {
            assert_relative_eq!(zs.y[i], 2.0, epsilon = 1e-13);
        }
        for n in 1..=8usize {
            assert_relative_eq!(zs.z[n - 1][0], 1.0, epsilon = 1e-13);
            assert_relative_eq!(zs.z[n - 1][1], 2.0 * n as f64 - 4.0, epsilon = 1e-11);
            assert_relative_eq!(zs.log2_m[n - 1], -(n as f64), epsilon = 1e-12);
            assert_relative_eq!(zs.cond_var[n - 1], 4.0, epsilon = 1e-13);
            assert_relative_eq!(zs.p[n - 1], 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn delta_matches_z_on_dyadic_offsets() {
        // Delta_1 F(1/2, 1/2 + 2^-n) = Z_{1,n}(1/2) = 2n - 4.
        let ev = bern(0.5, 2);
        let x = pt("1/2");
        for n in [3u32, 5, 10, 40, 200] {
            let y = x
                .add_offset(&crate::dyadic::dyadic_offset(1, n))
                .unwrap();
            let d1 = ev.delta_k_f(&x, &y, 1, 1e-15).unwrap();
            assert_relative_eq!(d1, 2.0 * n as f64 - 4.0, epsilon = 1e-9);
            assert_relative_eq!(
                ev.delta_k_f(&x, &y, 0, 1e-15).unwrap(),
                1.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn f_diff_matches_direct_difference() {
        let curve =
            ParamCurve::new(&[0.5, 1.0], &[-1.0 / 3.0, 1.0], &[-1.0 / 3.0], 0.02, false).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        let x = pt("1/3");
        let y = pt("7/12");
        let d = ev.f_diff(&x, &y, 1e-15).unwrap();
        let fx = ev.eval_f_jet(&x, 1e-15).unwrap();
        let fy = ev.eval_f_jet(&y, 1e-15).unwrap();
        for k in 0..=curve.order() {
            assert_relative_eq!(
                d.derivative(k),
                fy.f_k(k) - fx.f_k(k),
                epsilon = 1e-11,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn deep_diff_magnitude_stays_usable() {
        // |F(0, x + 2^-n) - F(0, x)| ~ M_n: far below f64 range at n = 1500,
        // but the log2 magnitude is still finite and ~ n log2 p for (a,0,0).
        let ev = bern(1.0 / 3.0, 1);
        let x = pt("1/3");
        let n = 1500u32;
        let y = x.add_offset(&crate::dyadic::dyadic_offset(1, n)).unwrap();
        let d = ev.f_diff(&x, &y, 1e-15).unwrap();
        let lg = d.log2_abs_derivative(0);
        assert!(lg.is_finite());
        // digits of 1/3 alternate, so M_n = (1/3)^(n/2) (2/3)^(n/2).
        let expected = (n as f64) * 0.5 * ((1.0f64 / 3.0).log2() + (2.0f64 / 3.0).log2());
        assert_relative_eq!(lg, expected, max_relative = 1e-2);
        assert_eq!(d.derivative(0), 0.0); // underflow by design
    }

    #[test]
    fn grid_matches_pointwise_eval() {
        let curve =
            ParamCurve::new(&[0.5, 1.0], &[-1.0 / 3.0], &[1.0 / 3.0], 0.02, true).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        for k in 0..=1usize {
            let grid = ev.grid_values(6, k).unwrap();
            assert_eq!(grid.len(), 65);
            for j in 0..64u64 {
                let x = BinaryPoint::from_dyadic(&DyadicRational::new(j, 6)).unwrap();
                let e = ev.eval_f_jet(&x, 1e-15).unwrap();
                assert_relative_eq!(grid[j as usize], e.f_k(k), epsilon = 1e-12);
            }
            assert_relative_eq!(grid[64], if k == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn child_masses_add_up() {
        // M_{n+1}(x.0) + M_{n+1}(x.1) = M_n(x), as full jets.
        let ev = constant(0.4, 0.3, -0.2, 3);
        let total = ev.fold_leaves(7, 0, 128, &|_, m: &Jet, _| m.value()).unwrap();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        for k in 1..=3usize {
            let s = ev
                .fold_leaves(7, 0, 128, &|_, m: &Jet, _| m.coeff(k))
                .unwrap();
            assert_relative_eq!(s, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn variation_level_matches_grid_differences() {
        let ev = bern(0.5, 2);
        let k = 1;
        let depth = 8u32;
        let grid = ev.grid_values(depth, k).unwrap();
        let direct: f64 = grid.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let folded = ev.variation_level(depth, k, 0, 1 << depth).unwrap();
        assert_relative_eq!(direct, folded, epsilon = 1e-10);
        // restriction to [1/4, 1/2)
        let direct_r: f64 = grid[64..=128]
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum();
        let folded_r = ev.variation_level(depth, k, 64, 128).unwrap();
        assert_relative_eq!(direct_r, folded_r, epsilon = 1e-10);
    }

    #[test]
    fn depth_extremes_match_grid() {
        let ev = bern(0.5, 1);
        let max_depth = 6u32;
        let ex = ev.depth_extremes(max_depth, 16, 48, 1).unwrap(); // [1/4, 3/4)
        for d in 1..=max_depth {
            let grid = ev.grid_values(d, 1).unwrap();
            // cylinders [j, j+1]/2^d fully inside [1/4, 3/4]
            let lo = ((1u64 << d) + 3) / 4;
            let hi = 3 * (1u64 << d) / 4;
            let mut mx = f64::NEG_INFINITY;
            let mut mn = f64::INFINITY;
            for j in lo..hi {
                let inc = grid[(j + 1) as usize] - grid[j as usize];
                mx = mx.max(inc);
                mn = mn.min(inc);
            }
            if lo >= hi {
                assert_eq!(ex.max[(d - 1) as usize], f64::NEG_INFINITY);
                assert_eq!(ex.min[(d - 1) as usize], f64::INFINITY);
            } else {
                assert_relative_eq!(ex.max[(d - 1) as usize], mx, epsilon = 1e-12);
                assert_relative_eq!(ex.min[(d - 1) as usize], mn, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        // Central differences in t converge at second order; error should
        // drop ~4x per halving of h.
        let curve =
            ParamCurve::new(&[0.5, 1.0], &[-1.0 / 3.0, 1.0], &[0.1], 0.02, false).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        let x = pt("5/8");
        let f1 = ev.eval_f_jet(&x, 1e-15).unwrap().f_k(1);
        let fd = |h: f64| -> f64 {
            let plus = CurveEvaluator::new(&curve.shift_base(h).unwrap()).unwrap();
            let minus = CurveEvaluator::new(&curve.shift_base(-h).unwrap()).unwrap();
            (plus.eval_f(&x, 1e-16).unwrap() - minus.eval_f(&x, 1e-16).unwrap()) / (2.0 * h)
        };
        let e1 = (fd(1e-3) - f1).abs();
        let e2 = (fd(5e-4) - f1).abs();
        assert!(e1 < 1e-5, "fd error too large: {e1}");
        assert!(e2 < e1 / 2.5, "not second order: {e1} vs {e2}");
    }

    #[test]
    fn duality_of_values_and_jets() {
        // The dual curve satisfies F~(t, 1 - x) = 1 - F(t, x).
        let curve =
            ParamCurve::new(&[0.5, 1.0], &[-1.0 / 3.0, 0.5], &[0.0, -0.3], 0.02, false).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        let dual = CurveEvaluator::new(&curve.dual().unwrap()).unwrap();
        for s in ["1/3", "5/8", "7/12", "3/16"] {
            let x = pt(s);
            let xc = x.complement().unwrap();
            let e = ev.eval_f_jet(&x, 1e-15).unwrap();
            let ec = dual.eval_f_jet(&xc, 1e-15).unwrap();
            assert_relative_eq!(ec.f_k(0), 1.0 - e.f_k(0), epsilon = 1e-13);
            for k in 1..=curve.order() {
                assert_relative_eq!(ec.f_k(k), -e.f_k(k), epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn martingale_identity_and_z_recursion() {
        // E[Z_{k,n+1} | first n digits] = Z_{k,n}, and the jet recursion
        // Z_{l,n+1} = sum_i C(l,i) (d^i H_n / H_n) Z_{l-i,n}.
        let curve =
            ParamCurve::new(&[0.45, 1.0], &[0.2, -0.5], &[-0.1, 0.3], 0.02, false).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..=20usize);
            let mut state = ev.initial_state();
            for _ in 0..n {
                let bit = u8::from(rng.gen::<bool>());
                ev.step(&mut state, bit).unwrap();
            }
            let z_n: Vec<f64> = (0..=1).map(|k| state.zm.derivative(k)).collect();
            let p0 = ev.p0_scalar(state.g.value());
            let mut cond = [0.0f64; 2];
            for bit in 0..2u8 {
                let mut child = state;
                let step = ev.step(&mut child, bit).unwrap();
                let w = if bit == 0 { p0 } else { 1.0 - p0 };
                for (k, c) in cond.iter_mut().enumerate() {
                    *c += w * child.zm.derivative(k);
                }
                // jet recursion for l = 1 with the consumed weight H_n
                let z1_child = child.zm.derivative(1);
                let y = step.h.derivative(1) / step.h.value();
                assert_relative_eq!(z1_child, z_n[1] + y, epsilon = 1e-9);
            }
            for k in 0..=1 {
                assert_relative_eq!(cond[k], z_n[k], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn mu0_sampling_matches_cylinder_masses() {
        let ev = constant(1.0 / 3.0, 0.0, 0.0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 20000usize;
        let mut count_11 = 0usize;
        for _ in 0..trials {
            let bits = ev.sample_mu0_bits(2, &mut rng);
            if bits[0] && bits[1] {
                count_11 += 1;
            }
        }
        // mu0 of the "11" cylinder is (2/3)^2 = 4/9.
        let freq = count_11 as f64 / trials as f64;
        assert!((freq - 4.0 / 9.0).abs() < 0.01, "freq = {freq}");
        let bits = vec![true, false, true];
        assert_relative_eq!(
            ev.log2_mass_bits(&bits).unwrap(),
            (2.0f64 / 9.0 * 2.0 / 3.0).log2(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn periodic_points_respect_tolerance() {
        let ev = bern(0.3, 2);
        let e = ev.eval_f_jet(&pt("1/3"), 1e-12).unwrap();
        assert!(e.tail_bound < 1e-12);
        assert!(e.terms < 200);
        let tight = ev.eval_f_jet(&pt("1/3"), 1e-13).unwrap();
        assert!((e.value - tight.value).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_values_stay_in_unit_interval(
            a in 0.1f64..0.9,
            num in 1u64..255,
        ) {
            let ev = bern(a, 0);
            let x = BinaryPoint::from_dyadic(&DyadicRational::new(num, 8)).unwrap();
            let v = ev.eval_f(&x, 1e-14).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn f_is_monotone_on_grid(
            b1 in 0.2f64..0.8,
            c0 in -0.04f64..0.04,
            c1 in -0.04f64..0.04,
        ) {
            let point = CurvePoint::new(b1, c0, c1);
            prop_assume!(point.is_ok());
            let curve = ParamCurve::constant(point.unwrap(), 0).unwrap();
            let ev = CurveEvaluator::new(&curve).unwrap();
            let grid = ev.grid_values(7, 0).unwrap();
            for w in grid.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }

        #[test]
        fn masses_sum_to_one(
            b1 in 0.2f64..0.8,
            c0 in -0.04f64..0.04,
            c1 in -0.04f64..0.04,
            depth in 1u32..9,
        ) {
            let point = CurvePoint::new(b1, c0, c1);
            prop_assume!(point.is_ok());
            let curve = ParamCurve::constant(point.unwrap(), 2).unwrap();
            let ev = CurveEvaluator::new(&curve).unwrap();
            let total = ev
                .fold_leaves(depth, 0, 1 << depth, &|_, m: &Jet, _| m.value())
                .unwrap();
            prop_assert!((total - 1.0).abs() < 1e-11);
        }
    }
}
