//! Subcommand dispatch. Exit codes: 0 success, 1 configuration error,
//! 2 check failure (a verified identity or certificate failed its contract),
//! 3 numerical non-convergence (series or bisection budget).
//!
//! Every run ends with a machine-readable JSON footer; artifacts (CSV/JSON
//! reports) go to `--out` when given, to stdout otherwise. The same config
//! and seed produce byte-identical artifacts at any `--threads` setting.

use std::io::Write;
use std::path::PathBuf;

use serde_json::json;

use shiftld::coupling::{analytic_bound, block_counts, compat_defect, psi_certificate, CompatMode};
use shiftld::decoupling::{
    verify_sld, verify_ssd, verify_ud, DecouplingKind, DecouplingSpec, TauSequence,
};
use shiftld::ldp::{
    chernoff_exponent, empirical_ldp_probe, entropy_pressure, finite_pressure,
    finite_pressure_fast, fluctuation_identities, legendre_transform, PressureCurve,
};
use shiftld::level3::{entropy_rates, level3_fr_check};
use shiftld::measures::MeasureSpec;
use shiftld::renewal::{locate_case_transition, q_curve, RenewalError, RhoCase};
use shiftld::report::{csv_document, fmt_float};
use shiftld::Budget;

use crate::cli::{Cli, Command};
use crate::config::{parse_config, ConfigError, RunConfig};

/// Structured failure: carries the exit code and the JSON `reason`.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub reason: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            reason: e.to_string(),
        }
    }

    fn check(reason: impl Into<String>) -> Self {
        Failure {
            code: 2,
            reason: reason.into(),
        }
    }

    fn numeric(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 3,
            reason: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match &e {
            // construction can fail for numerical reasons (power iteration,
            // hidden-state truncation); classify by the underlying text
            ConfigError::Measure(_) => classify(e),
            _ => Failure::config(e),
        }
    }
}

/// Classify library errors: budget/convergence problems are exit 3,
/// everything else is a configuration error.
fn classify(e: impl std::fmt::Display + std::fmt::Debug) -> Failure {
    let text = format!("{e}");
    // enumeration-budget refusals are configuration problems; series and
    // iteration budgets are genuine non-convergence
    let numeric = !text.contains("enumeration budget")
        && (text.contains("truncation") || text.contains("converge") || text.contains("bracket"));
    if numeric {
        Failure {
            code: 3,
            reason: text,
        }
    } else {
        Failure {
            code: 1,
            reason: text,
        }
    }
}

pub fn run(cli: &Cli) -> Result<serde_json::Value, Failure> {
    if let Some(threads) = cli.threads {
        // ignore failure if a pool already exists (tests call run repeatedly)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Pressure => pressure(cli, &cfg),
        Command::Rate => rate(cli, &cfg),
        Command::Decoupling => decoupling(cli, &cfg),
        Command::PsiCheck => psi_check(cli, &cfg),
        Command::FrCheck => fr_check(cli, &cfg),
        Command::Level3 => level3(cli, &cfg),
        Command::Chernoff => chernoff(cli, &cfg),
        Command::Hmc => hmc(cli, &cfg),
        Command::Probe => probe(cli, &cfg),
    }
}

fn alpha_grid(cli: &Cli, cfg: &RunConfig) -> Result<Vec<f64>, Failure> {
    let lo = match cli.alpha_min {
        Some(x) => x,
        None => cfg.get_f64("sweep", "alpha_min")?.unwrap_or(-1.0),
    };
    let hi = match cli.alpha_max {
        Some(x) => x,
        None => cfg.get_f64("sweep", "alpha_max")?.unwrap_or(1.0),
    };
    let step = match cli.alpha_step {
        Some(x) => x,
        None => cfg.get_f64("sweep", "alpha_step")?.unwrap_or(0.05),
    };
    if step.is_nan() || step <= 0.0 {
        return Err(Failure::config("alpha_step must be positive"));
    }
    if lo > hi {
        return Err(Failure::config("alpha_min must not exceed alpha_max"));
    }
    let n = ((hi - lo) / step).round() as usize + 1;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

fn horizon(cli: &Cli, cfg: &RunConfig, default: usize) -> Result<usize, Failure> {
    Ok(match cli.t {
        Some(t) => t,
        None => cfg.get_usize("sweep", "t")?.unwrap_or(default),
    })
}

fn tolerance(cli: &Cli, cfg: &RunConfig, default: f64) -> Result<f64, Failure> {
    Ok(match cli.tol {
        Some(x) => x,
        None => cfg.get_f64("sweep", "tol")?.unwrap_or(default),
    })
}

fn emit(cli: &Cli, artifact: &str) -> Result<Option<PathBuf>, Failure> {
    match &cli.out {
        Some(path) => {
            let mut f = std::fs::File::create(path)
                .map_err(|e| Failure::config(format!("cannot create {}: {e}", path.display())))?;
            f.write_all(artifact.as_bytes())
                .map_err(|e| Failure::config(format!("write failed: {e}")))?;
            Ok(Some(path.clone()))
        }
        None => {
            print!("{artifact}");
            Ok(None)
        }
    }
}

fn pressure(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let m = cfg.build_measure("measure")?;
    let t = horizon(cli, cfg, 8)?;
    let grid = alpha_grid(cli, cfg)?;
    let values: Vec<f64> = if cfg.section("hat_measure").is_some() {
        let mh = cfg.build_measure("hat_measure")?;
        grid.iter()
            .map(|&a| entropy_pressure(&m, &mh, a, t, Budget::default()))
            .collect::<Result<_, _>>()
            .map_err(classify)?
    } else {
        let f = cfg.build_observable(m.alphabet().size())?;
        grid.iter()
            .map(|&a| {
                finite_pressure_fast(&m, &f, &[a], t)
                    .or_else(|_| finite_pressure(&m, &f, &[a], t, Budget::default()))
            })
            .collect::<Result<_, _>>()
            .map_err(classify)?
    };
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .zip(&values)
        .map(|(&a, &q)| vec![a, q])
        .collect();
    let path = emit(cli, &csv_document("alpha,q", &rows))?;
    Ok(json!({ "status": "ok", "rows": rows.len(), "t": t, "out": path }))
}

fn rate(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let m = cfg.build_measure("measure")?;
    let t = horizon(cli, cfg, 8)?;
    let grid = alpha_grid(cli, cfg)?;
    let values: Vec<f64> = if cfg.section("hat_measure").is_some() {
        let mh = cfg.build_measure("hat_measure")?;
        grid.iter()
            .map(|&a| entropy_pressure(&m, &mh, a, t, Budget::default()))
            .collect::<Result<_, _>>()
            .map_err(classify)?
    } else {
        let f = cfg.build_observable(m.alphabet().size())?;
        grid.iter()
            .map(|&a| {
                finite_pressure_fast(&m, &f, &[a], t)
                    .or_else(|_| finite_pressure(&m, &f, &[a], t, Budget::default()))
            })
            .collect::<Result<_, _>>()
            .map_err(classify)?
    };
    let curve = PressureCurve::new(grid, values, Some(t), false);
    // the s grid defaults to the achieved slope range of the curve
    let (s_lo, s_hi, s_step) = {
        let finite: Vec<(f64, f64)> = curve
            .alphas
            .iter()
            .zip(&curve.values)
            .filter(|(_, q)| q.is_finite())
            .map(|(&a, &q)| (a, q))
            .collect();
        let slopes: Vec<f64> = finite
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        let lo = cfg
            .get_f64("sweep", "s_min")?
            .unwrap_or_else(|| slopes.iter().copied().fold(f64::INFINITY, f64::min));
        let hi = cfg
            .get_f64("sweep", "s_max")?
            .unwrap_or_else(|| slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let step = cfg
            .get_f64("sweep", "s_step")?
            .unwrap_or((hi - lo).abs() / 100.0);
        (lo, hi, step)
    };
    if s_step.is_nan() || s_step <= 0.0 || s_lo > s_hi {
        return Err(Failure::config("rate: empty or inverted s grid"));
    }
    let n = ((s_hi - s_lo) / s_step).round() as usize + 1;
    let s_grid: Vec<f64> = (0..n).map(|i| s_lo + s_step * i as f64).collect();
    let rf = legendre_transform(&curve, &s_grid).map_err(classify)?;
    let rows: Vec<Vec<f64>> = rf.s.iter().zip(&rf.i).map(|(&s, &i)| vec![s, i]).collect();
    let path = emit(cli, &csv_document("s,I", &rows))?;
    Ok(json!({ "status": "ok", "rows": rows.len(), "t": t, "out": path }))
}

fn decoupling(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let m = cfg.build_measure("measure")?;
    let t = horizon(cli, cfg, 3)?;
    let tau = match cli.tau {
        Some(x) => x,
        None => cfg.get_usize("sweep", "tau")?.unwrap_or(0),
    };
    let v_max = match cli.v_max {
        Some(x) => x,
        None => cfg.get_usize("sweep", "v_max")?.unwrap_or(3),
    };
    let kind = match cli.kind.as_deref() {
        Some("sld") | None => DecouplingKind::Sld,
        Some("ud") => DecouplingKind::Ud,
        Some("ssd") => DecouplingKind::Ssd,
        Some(other) => return Err(Failure::config(format!("unknown decoupling kind {other}"))),
    };
    let spec =
        DecouplingSpec::new(kind, TauSequence::Constant(tau), v_max).map_err(Failure::config)?;
    let window = cfg.get_usize("sweep", "window")?;
    let report = match kind {
        DecouplingKind::Sld => verify_sld(&m, t, &spec, window).map_err(classify)?,
        DecouplingKind::Ud => verify_ud(&m, t, &spec).map_err(classify)?,
        DecouplingKind::Ssd => {
            let mh = cfg.build_measure("hat_measure")?;
            verify_ssd(&m, &mh, t, &spec).map_err(classify)?
        }
    };
    let j = report.to_json(m.alphabet());
    let path = emit(
        cli,
        &format!("{}\n", serde_json::to_string_pretty(&j).unwrap()),
    )?;
    if !report.c_star.is_finite() {
        return Err(Failure::check(format!(
            "decoupling certificate failed: {} violating pairs",
            report.violations.len()
        )));
    }
    Ok(json!({ "status": "ok", "c_star": report.c_star, "out": path }))
}

fn psi_check(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let m = cfg.build_measure("measure")?;
    let t = horizon(cli, cfg, 6)?;
    let n = cfg
        .get_usize("sweep", "n")?
        .ok_or_else(|| Failure::config("psi-check needs `n` in [sweep]"))?;
    let tau = match cli.tau {
        Some(x) => x,
        None => cfg.get_usize("sweep", "tau")?.unwrap_or(0),
    };
    let layout = block_counts(n, t, tau).map_err(classify)?;
    if layout.degenerate() {
        let j = json!({ "status": "ok", "degenerate": true, "n": n, "t": t, "N": 0 });
        emit(
            cli,
            &format!("{}\n", serde_json::to_string_pretty(&j).unwrap()),
        )?;
        return Ok(j);
    }
    let hat = match cfg.section("hat_measure") {
        Some(_) => Some(cfg.build_measure("hat_measure")?),
        None => None,
    };
    let measures: Vec<&MeasureSpec> = match &hat {
        Some(h) => vec![&m, h],
        None => vec![&m],
    };
    let diag = psi_certificate(&measures, &layout, Budget::default()).map_err(classify)?;
    // proof-side bound from a selective-lower certificate at block scale
    let spec = DecouplingSpec::new(
        DecouplingKind::Sld,
        TauSequence::Constant(tau),
        (t - n).max(1),
    )
    .map_err(Failure::config)?;
    let c_n = verify_sld(&m, n, &spec, None).map_err(classify)?.c_star;
    let g_analytic = if c_n.is_finite() {
        analytic_bound(&layout, c_n.max(0.0), (m.alphabet().size() as f64).ln())
    } else {
        f64::INFINITY
    };
    let sigma_defect = match &hat {
        Some(h) => Some(
            compat_defect(&[&m, h], &layout, CompatMode::Sigma, Budget::default())
                .map_err(classify)?
                .defect,
        ),
        None => None,
    };
    let birkhoff_defect = match cfg.section("observable") {
        Some(_) => {
            let f = cfg.build_observable(m.alphabet().size())?;
            Some(
                compat_defect(
                    &measures,
                    &layout,
                    CompatMode::Birkhoff(&f),
                    Budget::default(),
                )
                .map_err(classify)?
                .defect,
            )
        }
        None => None,
    };
    let j = json!({
        "n": layout.n,
        "t": layout.t,
        "N": layout.blocks,
        "t_prime": layout.t_prime,
        "delta": layout.delta_max,
        "g_min": diag.g_min,
        "g_analytic": if g_analytic.is_finite() { json!(g_analytic) } else { json!("inf") },
        "multiplicity": diag.multiplicity,
        "sigma_defect": sigma_defect,
        "birkhoff_defect": birkhoff_defect,
    });
    let path = emit(
        cli,
        &format!("{}\n", serde_json::to_string_pretty(&j).unwrap()),
    )?;
    if diag.multiplicity > diag.multiplicity_bound || diag.g_min > g_analytic + 1e-9 {
        return Err(Failure::check(
            "psi certificate exceeded its analytic bound",
        ));
    }
    Ok(json!({ "status": "ok", "g_min": diag.g_min, "out": path }))
}

fn fr_check(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let m = cfg.build_measure("measure")?;
    let theta = cfg.build_involution(m.alphabet())?;
    let t = horizon(cli, cfg, 8)?;
    let grid = alpha_grid(cli, cfg)?;
    let tol = tolerance(cli, cfg, 1e-9)?;
    let r = fluctuation_identities(&m, &theta, &grid, t, Budget::default()).map_err(classify)?;
    let j = json!({
        "t": r.t,
        "gc_defect": r.gc_defect,
        "transient_defect": r.transient_defect,
        "tol": tol,
    });
    let path = emit(
        cli,
        &format!("{}\n", serde_json::to_string_pretty(&j).unwrap()),
    )?;
    if r.gc_defect > tol || r.transient_defect > tol {
        return Err(Failure::check(format!(
            "fluctuation identity defect above tolerance: gc = {}, transient = {}",
            r.gc_defect, r.transient_defect
        )));
    }
    Ok(json!({ "status": "ok", "gc_defect": r.gc_defect, "out": path }))
}

fn level3(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let p = cfg.build_measure("measure")?;
    let q = match cfg.section("q_measure") {
        Some(_) => cfg.build_measure("q_measure")?,
        None => p.clone(),
    };
    let t_max = match cli.t_max {
        Some(x) => x,
        None => cfg
            .get_usize("sweep", "t_max")?
            .unwrap_or(horizon(cli, cfg, 8)?),
    };
    let tol = tolerance(cli, cfg, 1e-9)?;
    let mut rows = Vec::new();
    for t in 1..=t_max {
        let r = entropy_rates(&q, &p, t, Budget::default()).map_err(classify)?;
        rows.push(vec![t as f64, r.h_rate, r.varsigma_rate, r.ent_rate]);
    }
    let path = emit(cli, &csv_document("t,h_rate,varsigma_rate,ent_rate", &rows))?;
    // with an involution section, verify the exact finite-t identity as well
    let mut defect = None;
    if cfg.section("involution").is_some() {
        let theta = cfg.build_involution(p.alphabet())?;
        let r = level3_fr_check(&q, &p, &theta, t_max, Budget::default()).map_err(classify)?;
        if r.defect > tol {
            return Err(Failure::check(format!(
                "level-3 identity defect {} > {tol}",
                r.defect
            )));
        }
        defect = Some(r.defect);
    }
    Ok(json!({ "status": "ok", "rows": rows.len(), "fr_defect": defect, "out": path }))
}

fn chernoff(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let m = cfg.build_measure("measure")?;
    let mh = cfg.build_measure("hat_measure")?;
    let t = horizon(cli, cfg, 10)?;
    let step = match cli.alpha_step {
        Some(x) => x,
        None => cfg.get_f64("sweep", "alpha_step")?.unwrap_or(0.01),
    };
    if step.is_nan() || step <= 0.0 {
        return Err(Failure::config("alpha_step must be positive"));
    }
    let n = (1.0 / step).round() as usize + 1;
    let alphas: Vec<f64> = (0..n).map(|i| step * i as f64).collect();
    // e(α) = q(−α)
    let values: Vec<f64> = alphas
        .iter()
        .map(|&a| entropy_pressure(&m, &mh, -a, t, Budget::default()))
        .collect::<Result<_, _>>()
        .map_err(classify)?;
    let curve = PressureCurve::new(alphas.clone(), values.clone(), Some(t), false);
    let r = chernoff_exponent(&curve).map_err(classify)?;
    let rows: Vec<Vec<f64>> = alphas
        .iter()
        .zip(&values)
        .map(|(&a, &e)| vec![a, e])
        .collect();
    let path = emit(cli, &csv_document("alpha,q", &rows))?;
    Ok(json!({
        "status": "ok",
        "exponent": r.exponent,
        "minimizer": r.minimizer,
        "symmetric": r.symmetric,
        "t": t,
        "out": path,
    }))
}

fn hmc(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let pair = cfg.build_renewal_pair(cli.example)?;
    let grid = alpha_grid(cli, cfg)?;
    let curve = q_curve(&pair, &grid).map_err(|e| match e {
        RenewalError::SeriesUndecided { .. } | RenewalError::NoBracket(_) => Failure::numeric(e),
        other => Failure::config(other),
    })?;
    let rows: Vec<Vec<f64>> = curve
        .points
        .iter()
        .map(|p| vec![p.alpha, p.rho, p.kappa, p.q])
        .collect();
    let path = emit(cli, &csv_document("alpha,rho,kappa,q", &rows))?;
    // locate case transitions between adjacent grid points when possible
    let mut transitions = Vec::new();
    for w in curve.points.windows(2) {
        let changed = w[0].case != w[1].case;
        let both_finite = w[0].kappa.is_finite()
            && w[1].kappa.is_finite()
            && w[0].kappa > 0.0
            && w[1].kappa > 0.0
            && w[0].case != RhoCase::Degenerate
            && w[1].case != RhoCase::Degenerate;
        if changed && both_finite {
            if let Ok(a) = locate_case_transition(&pair, w[0].alpha, w[1].alpha, 1e-6) {
                transitions.push(a);
            }
        }
    }
    Ok(json!({
        "status": "ok",
        "rows": rows.len(),
        "transitions": transitions,
        "out": path,
    }))
}

fn probe(cli: &Cli, cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let m = cfg.build_measure("measure")?;
    let f = cfg.build_observable(m.alphabet().size())?;
    let a = cfg
        .get_f64("probe", "a")?
        .ok_or_else(|| Failure::config("probe needs `a` in [probe]"))?;
    let b = cfg
        .get_f64("probe", "b")?
        .ok_or_else(|| Failure::config("probe needs `b` in [probe]"))?;
    if a > b {
        return Err(Failure::config("probe interval has a > b"));
    }
    let t_list: Vec<usize> = match cfg.get_str("probe", "t_list") {
        Some(text) => crate::config::number_list(text)?
            .into_iter()
            .map(|x| x as usize)
            .collect(),
        None => vec![horizon(cli, cfg, 20)?],
    };
    let samples = match cli.samples {
        Some(x) => x,
        None => cfg.get_u64("sweep", "samples")?.unwrap_or(100_000),
    };
    let seed = match cli.seed {
        Some(x) => x,
        None => cfg.get_u64("sweep", "seed")?.unwrap_or(0),
    };
    // reference rate from the finite-t pressure curve at the largest horizon
    let t_ref = *t_list.iter().max().unwrap();
    let grid = alpha_grid(cli, cfg)?;
    let rf = {
        let values: Result<Vec<f64>, _> = grid
            .iter()
            .map(|&alpha| finite_pressure_fast(&m, &f, &[alpha], t_ref))
            .collect();
        match values {
            Ok(values) => {
                let curve = PressureCurve::new(grid, values, Some(t_ref), false);
                let s_grid: Vec<f64> = (0..=200).map(|i| a + (b - a) * i as f64 / 200.0).collect();
                legendre_transform(&curve, &s_grid).ok()
            }
            Err(_) => None,
        }
    };
    let rows = empirical_ldp_probe(&m, &f, (a, b), &t_list, samples, seed, rf.as_ref())
        .map_err(classify)?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.t as f64, r.emp_rate, r.ref_rate, r.ci_low, r.ci_high])
        .collect();
    let path = emit(
        cli,
        &csv_document("t,emp_rate,ref_rate,ci_low,ci_high", &table),
    )?;
    let zero_hit_ts: Vec<usize> = rows.iter().filter(|r| r.hits == 0).map(|r| r.t).collect();
    Ok(json!({
        "status": "ok",
        "rows": rows.len(),
        "zero_hit_horizons": zero_hit_ts,
        "emp_rate_last": fmt_float(rows.last().map(|r| r.emp_rate).unwrap_or(f64::NAN)),
        "out": path,
    }))
}
