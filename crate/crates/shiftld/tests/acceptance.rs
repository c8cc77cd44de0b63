//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS/FAIL line with the measured values (run with `--nocapture` to see
//! them all).
//!
//! Run with `cargo test --test acceptance -- --nocapture`.

use std::time::Instant;

use shiftld::coupling::{analytic_bound, block_counts, psi_certificate};
use shiftld::decoupling::{
    verify_sld, verify_ssd, verify_ssd_with_witness, DecouplingKind, DecouplingSpec, TauSequence,
};
use shiftld::ldp::{
    chernoff_exponent, convexity_defect, empirical_ldp_probe, entropy_pressure,
    fluctuation_identities, legendre_transform, ObservableSpec, PressureCurve,
};
use shiftld::level3::level3_fr_check;
use shiftld::measures::MeasureSpec;
use shiftld::renewal::{
    locate_case_transition, q_prime, rho_solve, validate_renewal, RenewalPair, RhoCase,
};
use shiftld::symbolic::{Alphabet, Involution, Word};
use shiftld::Budget;

fn criterion(id: &str, pass: bool, detail: String) -> bool {
    println!(
        "[{}] acceptance {id}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn markov() -> MeasureSpec {
    MeasureSpec::markov(
        Alphabet::binary(),
        vec![vec![0.9, 0.1], vec![0.5, 0.5]],
        None,
    )
    .unwrap()
}

#[test]
fn criterion_01_example1_curve() {
    let pair = RenewalPair::preset(1).unwrap();
    let start = Instant::now();
    let grid: Vec<f64> = (0..61).map(|i| -1.2 + 0.02 * i as f64).collect();
    let mut q_half = f64::NAN;
    let mut q_034 = f64::NAN;
    for &alpha in &grid {
        let r = rho_solve(&pair, alpha).unwrap();
        if (alpha + 0.5).abs() < 1e-12 {
            q_half = r.q;
        }
        if (alpha + 0.34).abs() < 1e-12 {
            q_034 = r.q;
        }
    }
    let elapsed = start.elapsed();
    let q0 = rho_solve(&pair, 0.0).unwrap().q;
    let q_pos = rho_solve(&pair, 0.25).unwrap();
    let pass = criterion(
        "1 (example-1 curve)",
        q0.abs() <= 1e-9
            && (q_half - (-0.0303276)).abs() <= 1e-3
            && (q_034 - (-0.0328625)).abs() <= 1e-3
            && q_pos.q == f64::INFINITY
            && q_pos.case == RhoCase::Degenerate
            && elapsed.as_secs_f64() < 10.0,
        format!(
            "q(0) = {q0:.2e}, q(-0.5) = {q_half:.7}, q(-0.34) = {q_034:.7}, \
             q(0.25) = {}, 61-point grid in {:.3}s",
            q_pos.q,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_example1_left_derivative() {
    let pair = RenewalPair::preset(1).unwrap();
    let point = rho_solve(&pair, 0.0).unwrap();
    let qp = q_prime(&pair, &point).unwrap();
    let pass = criterion(
        "2 (example-1 derivative)",
        (qp - 0.3294).abs() <= 5e-3,
        format!("q'(0-) = {qp:.6} (target 0.3294 +/- 5e-3, analytic rho' series)"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_example5_kink() {
    let pair = RenewalPair::preset(5).unwrap();
    let mut kappa_err = 0.0f64;
    for i in 0..=28 {
        let alpha = -1.4 + 0.1 * i as f64;
        kappa_err = kappa_err.max((pair.kappa(alpha) - (1.0 - alpha).exp()).abs());
    }
    let astar = locate_case_transition(&pair, 1.0, 1.3, 1e-7).unwrap();
    let left = rho_solve(&pair, astar - 0.01).unwrap();
    let right = rho_solve(&pair, astar + 0.01).unwrap();
    let ql = q_prime(&pair, &left).unwrap();
    let qr = q_prime(&pair, &right).unwrap();
    // continuity across the kink
    let jump = (rho_solve(&pair, astar - 1e-3).unwrap().q
        - rho_solve(&pair, astar + 1e-3).unwrap().q)
        .abs();
    let pass = criterion(
        "3 (example-5 transition)",
        kappa_err <= 1e-12
            && (astar - 1.1305).abs() <= 5e-3
            && jump < 0.01
            && (ql - qr).abs() > 0.01,
        format!(
            "max |kappa - e^(1-a)| = {kappa_err:.2e}, alpha* = {astar:.5}, \
             |q jump| = {jump:.2e}, one-sided q' = {ql:.4} vs {qr:.4}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_example6_boundaries() {
    let pair = RenewalPair::preset(6).unwrap();
    let left = locate_case_transition(&pair, -1.0, -0.4, 1e-7).unwrap();
    let right = locate_case_transition(&pair, -0.4, 0.2, 1e-7).unwrap();
    let grid: Vec<f64> = (0..=95).map(|i| -1.4 + 0.02 * i as f64).collect();
    let qs: Vec<f64> = grid
        .iter()
        .map(|&a| rho_solve(&pair, a).unwrap().q)
        .collect();
    let finite = qs.iter().all(|q| q.is_finite());
    let mut convex = true;
    for w in qs.windows(3) {
        if w[1] > 0.5 * (w[0] + w[2]) + 1e-6 {
            convex = false;
        }
    }
    let pass = criterion(
        "4 (example-6 non-analyticity interval)",
        (left - (-0.6418)).abs() <= 5e-3 && (right - (-0.2042)).abs() <= 5e-3 && finite && convex,
        format!(
            "boundaries = ({left:.5}, {right:.5}) vs (-0.6418, -0.2042); \
             q finite on [-1.4, 0.5]: {finite}, convex: {convex}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_example4_values() {
    let pair = RenewalPair::preset(4).unwrap();
    let r = rho_solve(&pair, 0.5).unwrap();
    // q increases continuously to +inf as alpha approaches the wall at 1
    let ramp: Vec<f64> = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98]
        .iter()
        .map(|&a| rho_solve(&pair, a).unwrap().q)
        .collect();
    let monotone = ramp.windows(2).all(|w| w[1] > w[0]);
    let beyond = rho_solve(&pair, 1.05).unwrap().q;
    let pass = criterion(
        "5 (example-4 values)",
        (r.q - 0.527183).abs() <= 1e-3
            && (r.rho - 0.590265).abs() <= 1e-3
            && monotone
            && ramp.last().unwrap() > &10.0
            && beyond == f64::INFINITY,
        format!(
            "q(0.5) = {:.6}, rho(0.5) = {:.6}, q(0.98) = {:.2}, monotone ramp: {monotone}, \
             q(1.05) = {beyond}",
            r.q,
            r.rho,
            ramp.last().unwrap()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_renewal_vs_brute_force() {
    let mut worst = 0.0f64;
    for k in [1u8, 3, 5] {
        for alpha in [-0.5, 0.0] {
            let v = validate_renewal(
                &RenewalPair::preset(k).unwrap(),
                10,
                alpha,
                Budget::default(),
            )
            .unwrap();
            worst = worst.max(v.max_rel_defect);
        }
    }
    let pass = criterion(
        "6 (renewal recursion vs enumeration)",
        worst <= 1e-8,
        format!(
            "max relative defect over presets 1,3,5 and alpha in {{-0.5, 0}}, t <= 10: {worst:.2e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_exact_fluctuation_identities() {
    let p = markov();
    let theta = Involution::reversal(2);
    let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let r10 = fluctuation_identities(&p, &theta, &grid, 10, Budget::default()).unwrap();
    let mut transient_worst = 0.0f64;
    for t in 1..=12 {
        let r = fluctuation_identities(&p, &theta, &grid, t, Budget::default()).unwrap();
        transient_worst = transient_worst.max(r.transient_defect);
    }
    let mut level3_worst = 0.0f64;
    for q in [p.clone(), MeasureSpec::uniform(Alphabet::binary())] {
        let r = level3_fr_check(&q, &p, &theta, 8, Budget::default()).unwrap();
        level3_worst = level3_worst.max(r.defect);
    }
    let pass = criterion(
        "7 (exact finite-t fluctuation identities)",
        r10.gc_defect <= 1e-12 && transient_worst <= 1e-10 && level3_worst <= 1e-12,
        format!(
            "gc defect at t=10: {:.2e}; transient defect, t <= 12: {transient_worst:.2e}; \
             level-3 defect at t=8: {level3_worst:.2e}",
            r10.gc_defect
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_decoupling_certificates() {
    let bern = MeasureSpec::bernoulli(Alphabet::binary(), vec![0.3, 0.7]).unwrap();
    let spec0 = DecouplingSpec::new(DecouplingKind::Sld, TauSequence::Constant(0), 3).unwrap();
    let mut bern_worst = 0.0f64;
    for t in 1..=5 {
        let r = verify_sld(&bern, t, &spec0, None).unwrap();
        bern_worst = bern_worst.max(r.c_star.abs());
    }
    let pair = RenewalPair::preset(1).unwrap();
    let p = MeasureSpec::hidden_renewal(pair.gamma.clone(), 1e-15).unwrap();
    let ph = MeasureSpec::hidden_renewal(pair.gamma_hat.clone(), 1e-15).unwrap();
    let spec1 = DecouplingSpec::new(DecouplingKind::Ssd, TauSequence::Constant(1), 4).unwrap();
    let xi_a = Word::parse(p.alphabet(), "a").unwrap();
    let mut free_ok = true;
    let mut forced_ok = true;
    let mut forced_worst = 0.0f64;
    for t in 1..=4 {
        let free = verify_ssd(&p, &ph, t, &spec1).unwrap();
        free_ok &= free.c_star.is_finite() && free.violations.is_empty();
        // the single renewing insert xi = a certifies every pair by itself
        let forced = verify_ssd_with_witness(&p, &ph, t, &spec1, &xi_a).unwrap();
        forced_ok &= forced.c_star.is_finite() && forced.violations.is_empty();
        forced_worst = forced_worst.max(forced.c_star);
    }
    let pass = criterion(
        "8 (decoupling certificates)",
        bern_worst <= 1e-12 && free_ok && forced_ok,
        format!(
            "Bernoulli |c*| <= {bern_worst:.2e} at tau=0, t <= 5; hidden-renewal pair \
             passes SSD at tau=1 (free optimum finite, forced xi=a constant {forced_worst:.4})"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_psi_certificate() {
    let uniform = MeasureSpec::uniform(Alphabet::binary());
    let layout = block_counts(2, 5, 0).unwrap();
    let d = psi_certificate(&[&uniform], &layout, Budget::default()).unwrap();
    let g_target = (2.0f64).ln();
    // analytic bound holds across a small layout grid
    let m = markov();
    let mut bound_ok = true;
    for (n, t, tau) in [(2usize, 5usize, 0usize), (2, 8, 1), (3, 9, 0), (2, 10, 1)] {
        let layout = block_counts(n, t, tau).unwrap();
        if layout.degenerate() {
            continue;
        }
        let diag = psi_certificate(&[&m], &layout, Budget::default()).unwrap();
        let spec =
            DecouplingSpec::new(DecouplingKind::Sld, TauSequence::Constant(tau), t - n).unwrap();
        let c_n = verify_sld(&m, n, &spec, None).unwrap().c_star.max(0.0);
        let bound = analytic_bound(&layout, c_n, (2.0f64).ln());
        bound_ok &= diag.g_min <= bound + 1e-9;
    }
    let pass = criterion(
        "9 (psi certificate)",
        (d.g_min - g_target).abs() <= 1e-12 && d.multiplicity == 1 && bound_ok,
        format!(
            "uniform n=2 t=5: g_min = {:.12} (target log 2), multiplicity = {}; \
             analytic bound holds on the layout grid: {bound_ok}",
            d.g_min, d.multiplicity
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_pressure_and_conjugate_properties() {
    let f = ObservableSpec::scalar(2, 2, vec![0.3, -1.0, 0.7, 0.1]).unwrap();
    let m = markov();
    let mut convex_worst = f64::NEG_INFINITY;
    let mut lips_worst = f64::NEG_INFINITY;
    for t in [6usize, 10] {
        let (c, l) = convexity_defect(&m, &f, t, 24, 2.0, 7, Budget::default()).unwrap();
        convex_worst = convex_worst.max(c);
        lips_worst = lips_worst.max(l);
    }
    // Legendre round-trip on the quadratic
    let alphas: Vec<f64> = (0..=1000).map(|i| -5.0 + 0.01 * i as f64).collect();
    let values: Vec<f64> = alphas.iter().map(|a| a * a / 2.0).collect();
    let rf = legendre_transform(&PressureCurve::new(alphas, values, None, true), &[1.0]).unwrap();
    // Chernoff minimizer for a symmetric pair
    let p = MeasureSpec::bernoulli(Alphabet::binary(), vec![0.75, 0.25]).unwrap();
    let ph = MeasureSpec::bernoulli(Alphabet::binary(), vec![0.25, 0.75]).unwrap();
    let step = 0.02;
    let grid: Vec<f64> = (0..=50).map(|i| step * i as f64).collect();
    let evals: Vec<f64> = grid
        .iter()
        .map(|&a| entropy_pressure(&p, &ph, -a, 8, Budget::default()).unwrap())
        .collect();
    let ch = chernoff_exponent(&PressureCurve::new(grid, evals, Some(8), false)).unwrap();
    let pass = criterion(
        "10 (pressure and conjugate properties)",
        convex_worst <= 1e-9
            && lips_worst <= 1e-9
            && (rf.i[0] - 0.5).abs() <= 1e-4
            && (ch.minimizer - 0.5).abs() <= step,
        format!(
            "midpoint excess {convex_worst:.2e}, Lipschitz excess {lips_worst:.2e}, \
             I(1) = {:.6}, Chernoff minimizer = {} (symmetric: {})",
            rf.i[0], ch.minimizer, ch.symmetric
        ),
    );
    assert!(pass);
}

/// The criterion as stated compares the plain interval estimator at t = 40
/// against the asymptotic rate 0.08228 within +/- 0.01. The estimator
/// converges to the exact binomial tail rate, which at t = 40 is
/// (1/40)·log P(Bin(40,1/2) >= 28) = -0.119805: the distance to -0.08228 is
/// the 0.0375 finite-t prefactor, far above both the tolerance and the Monte
/// Carlo noise (~2e-4), and no horizon fixes it (the prefactor falls below
/// 0.01 only past t ~ 350, where the hit probability e^{-t·0.0823} < 1e-12
/// is unreachable at 10^6 samples). The probe itself is verified against the
/// exact-binomial oracle, which passes; the asserted comparison fails and is
/// reported honestly.
#[test]
fn criterion_11_monte_carlo_probe() {
    let uniform = MeasureSpec::uniform(Alphabet::binary());
    let f = ObservableSpec::indicator(2, 0);
    let rows = empirical_ldp_probe(&uniform, &f, (0.7, 1.0), &[40], 1_000_000, 42, None).unwrap();
    let emp = rows[0].emp_rate;
    // independent oracle: exact binomial tail P(Bin(40, 1/2) >= 28)
    let mut tail = 0.0f64;
    let mut binom = 1.0f64; // C(40, 0)
    let mut partial_tail = 0.0f64;
    for k in 0..=40u32 {
        if k >= 28 {
            partial_tail += binom;
        }
        binom = binom * (40.0 - k as f64) / (k as f64 + 1.0);
    }
    tail += partial_tail / (2.0f64).powi(40);
    let oracle = tail.ln() / 40.0;
    let i07 = 2.0f64.ln() + 0.7 * 0.7f64.ln() + 0.3 * 0.3f64.ln();
    let target = -i07; // the Cramér rate the criterion demands, -I(0.7)
    let oracle_ok = (emp - oracle).abs() <= 3.0 * 2e-4 + 1e-3;
    let stated_ok = (emp - target).abs() <= 0.01;
    let pass = criterion(
        "11 (Monte Carlo probe)",
        stated_ok,
        format!(
            "empirical rate {emp:.6} vs Cramer rate -I(0.7) = {target:.6} \
             (|diff| = {:.4}, tolerance 0.01); finite-t exact-binomial oracle \
             {oracle:.6} (|diff| = {:.1e}, reproduced: {oracle_ok})",
            (emp - target).abs(),
            (emp - oracle).abs()
        ),
    );
    assert!(
        oracle_ok,
        "the probe disagrees with its exact finite-t oracle: emp {emp} vs {oracle}"
    );
    assert!(
        pass,
        "stated criterion is numerically unattainable at t = 40: \
         the empirical rate {emp:.6} reproduces the exact binomial tail rate \
         {oracle:.6}, which differs from the asymptotic -I(0.7) = {target:.6} \
         by the finite-t prefactor 0.0375 > 0.01"
    );
}
