//! Finite-`t` certificates for the decoupling hypotheses.
//!
//! A lower-decoupling certificate at horizon `t` answers: what is the best
//! constant `c` such that for every `u ∈ Ω_t` and every `v` with
//! `1 ≤ |v| ≤ v_max`, some insert `ξ` with `|ξ| ≤ τ_t` achieves
//! `P(uξv) ≥ e^{−c} P(u)P(v)`? The verifiers here enumerate all pairs,
//! optimize the insert per pair, and return the max-over-pairs optimum `c*`
//! together with a replayable witness table. Upper decoupling quantifies over
//! every insert of length exactly `τ_t`; the symmetric variant demands a
//! single shared insert that two-sidedly decouples both measures of a pair.
//!
//! `c*` is reported per-`t` and unclamped: certificates are explicitly
//! finite-horizon, and inserts can help more than independence allows.
//! Zero-probability conventions: `log 0 = −∞`, vacuous pairs are skipped,
//! pairs with no admissible insert make `c* = +∞` and are listed.

use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

use crate::measures::{MeasureError, MeasureSpec};
use crate::symbolic::{for_each_word, word_at_index, Symbol, Word};
use crate::Budget;

#[derive(Debug, Clone, Error)]
pub enum DecouplingError {
    #[error("v_max must be at least 1")]
    BadVMax,
    #[error("measures are over different alphabets ({0} vs {1})")]
    AlphabetMismatch(usize, usize),
    #[error("word {0} has zero mass under measure {1}; extension is undefined")]
    ZeroMassBase(String, usize),
    #[error(
        "no extension of length {k} has positive mass (first failure: {b} under measure {measure})"
    )]
    NoPositiveExtension { k: usize, b: String, measure: usize },
    #[error("absolute continuity violated on visited word {0}")]
    AbsoluteContinuity(String),
    #[error("upper decoupling precondition failed: c* is not finite")]
    UdPreconditionFailed,
    #[error("supplied witness table is not valid: {0}")]
    InvalidWitnessTable(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Symbolic(#[from] crate::symbolic::SymbolicError),
    #[error(transparent)]
    Budget(#[from] crate::BudgetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecouplingKind {
    Sld,
    Ud,
    Ssd,
}

/// `t ↦ τ_t`.
#[derive(Debug, Clone)]
pub enum TauSequence {
    Constant(usize),
    Table(Vec<usize>),
}

impl TauSequence {
    pub fn at(&self, t: usize) -> usize {
        match self {
            TauSequence::Constant(k) => *k,
            TauSequence::Table(v) => v.get(t).copied().unwrap_or_else(|| *v.last().unwrap_or(&0)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecouplingSpec {
    pub kind: DecouplingKind,
    pub tau: TauSequence,
    pub v_max: usize,
    pub budget: Budget,
}

impl DecouplingSpec {
    pub fn new(
        kind: DecouplingKind,
        tau: TauSequence,
        v_max: usize,
    ) -> Result<Self, DecouplingError> {
        if v_max < 1 {
            return Err(DecouplingError::BadVMax);
        }
        Ok(DecouplingSpec {
            kind,
            tau,
            v_max,
            budget: Budget::default(),
        })
    }
}

/// Per-pair witness: the chosen insert and the constant it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessEntry {
    pub u: Word,
    pub v: Word,
    pub xi: Word,
    pub achieved: f64,
}

/// The result of one verification run.
#[derive(Debug, Clone)]
pub struct DecouplingReport {
    pub kind: DecouplingKind,
    pub t: usize,
    pub tau_t: usize,
    pub v_max: usize,
    /// Minimal constant making the condition hold at this `t`; `+∞` if some
    /// pair admits no insert at all.
    pub c_star: f64,
    /// Per-pair optima (SLD/SSD only; UD has no selected insert).
    pub witnesses: Vec<WitnessEntry>,
    /// Pairs with no admissible insert.
    pub violations: Vec<(Word, Word)>,
    pub elapsed_ms: u128,
}

impl DecouplingReport {
    /// JSON per the external interface:
    /// `kind, t, tau, v_max, c_star, witness_count, violations, elapsed_ms`.
    pub fn to_json(&self, alphabet: &crate::symbolic::Alphabet) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "t": self.t,
            "tau": self.tau_t,
            "v_max": self.v_max,
            "c_star": if self.c_star.is_finite() { serde_json::json!(self.c_star) } else { serde_json::json!("inf") },
            "witness_count": self.witnesses.len(),
            "violations": self.violations.iter().map(|(u, v)| {
                serde_json::json!([alphabet.format_word(u), alphabet.format_word(v)])
            }).collect::<Vec<_>>(),
            "elapsed_ms": self.elapsed_ms,
        })
    }

    /// Re-evaluate every stored witness and return the largest deviation from
    /// its recorded per-pair optimum.
    pub fn replay(&self, measures: &[&MeasureSpec]) -> Result<f64, DecouplingError> {
        let mut worst = 0.0f64;
        for e in &self.witnesses {
            let got = match self.kind {
                DecouplingKind::Sld => pair_needed_lower(measures[0], &e.u, &e.xi, &e.v)?,
                DecouplingKind::Ssd => pair_needed_two_sided(measures, &e.u, &e.xi, &e.v)?,
                DecouplingKind::Ud => -pair_needed_lower(measures[0], &e.u, &e.xi, &e.v)?,
            };
            worst = worst.max((got - e.achieved).abs());
        }
        Ok(worst)
    }
}

fn syms(w: &Word) -> &[Symbol] {
    w.symbols()
}

/// Per-`u` scan result: (worst constant, witnesses, violating pairs).
type PairScan = (f64, Vec<WitnessEntry>, Vec<(Word, Word)>);

/// Per-`u` scan result without witnesses (upper decoupling).
type UpperScan = (f64, Vec<(Word, Word)>);

/// `log P(u) + log P(v) − log P(uξv)`: the `c` this insert needs (lower bound).
pub fn pair_needed_lower(
    m: &MeasureSpec,
    u: &Word,
    xi: &Word,
    v: &Word,
) -> Result<f64, DecouplingError> {
    let mut w = Vec::with_capacity(u.len() + xi.len() + v.len());
    w.extend_from_slice(syms(u));
    w.extend_from_slice(syms(xi));
    w.extend_from_slice(syms(v));
    let joint = m.log_marginal_symbols(&w)?;
    let split = m.log_marginal_symbols(syms(u))? + m.log_marginal_symbols(syms(v))?;
    Ok(split - joint)
}

/// Two-sided constant `max_♯ |log P♯(uξv) − log P♯(u) − log P♯(v)|` with the
/// zero-mass conventions of the symmetric hypothesis: a pair that vanishes on
/// both sides is vacuous (−∞); mismatched vanishing is impossible (+∞).
pub fn pair_needed_two_sided(
    measures: &[&MeasureSpec],
    u: &Word,
    xi: &Word,
    v: &Word,
) -> Result<f64, DecouplingError> {
    let mut worst = f64::NEG_INFINITY;
    for m in measures {
        let mut w = Vec::with_capacity(u.len() + xi.len() + v.len());
        w.extend_from_slice(syms(u));
        w.extend_from_slice(syms(xi));
        w.extend_from_slice(syms(v));
        let joint = m.log_marginal_symbols(&w)?;
        let split = m.log_marginal_symbols(syms(u))? + m.log_marginal_symbols(syms(v))?;
        let d = if split == f64::NEG_INFINITY && joint == f64::NEG_INFINITY {
            f64::NEG_INFINITY // vacuous for this measure
        } else if split == f64::NEG_INFINITY || joint == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            (joint - split).abs()
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

/// All inserts `|ξ| ≤ τ` in (length, lex) order; a strictly better candidate
/// replaces the incumbent, so the first optimum in this order is the witness.
fn insert_candidates(alphabet_size: usize, tau: usize) -> Vec<Word> {
    let mut out = Vec::new();
    for len in 0..=tau {
        for_each_word(alphabet_size, len, |w| {
            out.push(Word::from_slice(alphabet_size, w))
        });
    }
    out
}

fn v_words(alphabet_size: usize, v_max: usize) -> Vec<Word> {
    let mut out = Vec::new();
    for len in 1..=v_max {
        for_each_word(alphabet_size, len, |w| {
            out.push(Word::from_slice(alphabet_size, w))
        });
    }
    out
}

/// Selective lower decoupling at horizon `t`.
///
/// With `window = Some(k)`, the summed condition
/// `Σ_{τ−k ≤ |ξ| ≤ τ} P(uξv) ≥ e^{−c} P(u)P(v)` is tested instead (the
/// windowed form behind the ergodicity argument); no per-pair witness is
/// stored in that mode.
pub fn verify_sld(
    m: &MeasureSpec,
    t: usize,
    spec: &DecouplingSpec,
    window: Option<usize>,
) -> Result<DecouplingReport, DecouplingError> {
    let start = Instant::now();
    let a = m.alphabet().size();
    let tau = spec.tau.at(t);
    spec.budget.check(a, t + tau + spec.v_max)?;
    let inserts = insert_candidates(a, tau);
    let vs = v_words(a, spec.v_max);
    let total_u = spec.budget.check(a, t)?;

    let per_u: Vec<Result<PairScan, DecouplingError>> = (0..total_u)
        .into_par_iter()
        .map(|ui| {
            let u = Word::from_slice(a, &word_at_index(a, t, ui));
            let lu = m.log_marginal_symbols(syms(&u))?;
            let mut worst = f64::NEG_INFINITY;
            let mut entries = Vec::new();
            let mut violations = Vec::new();
            if lu == f64::NEG_INFINITY {
                return Ok((worst, entries, violations));
            }
            for v in &vs {
                let lv = m.log_marginal_symbols(syms(v))?;
                if lv == f64::NEG_INFINITY {
                    continue;
                }
                match window {
                    None => {
                        let mut best = f64::INFINITY;
                        let mut best_xi: Option<&Word> = None;
                        for xi in &inserts {
                            let needed = pair_needed_lower(m, &u, xi, v)?;
                            if needed < best {
                                best = needed;
                                best_xi = Some(xi);
                            }
                        }
                        match best_xi {
                            Some(xi) if best < f64::INFINITY => {
                                worst = worst.max(best);
                                entries.push(WitnessEntry {
                                    u: u.clone(),
                                    v: v.clone(),
                                    xi: xi.clone(),
                                    achieved: best,
                                });
                            }
                            _ => {
                                worst = f64::INFINITY;
                                violations.push((u.clone(), v.clone()));
                            }
                        }
                    }
                    Some(k) => {
                        let lo = tau.saturating_sub(k);
                        let mut mass = 0.0f64;
                        for xi in inserts.iter().filter(|xi| xi.len() >= lo) {
                            let mut w = Vec::new();
                            w.extend_from_slice(syms(&u));
                            w.extend_from_slice(syms(xi));
                            w.extend_from_slice(syms(v));
                            mass += m.log_marginal_symbols(&w)?.exp();
                        }
                        if mass > 0.0 {
                            worst = worst.max(lu + lv - mass.ln());
                        } else {
                            worst = f64::INFINITY;
                            violations.push((u.clone(), v.clone()));
                        }
                    }
                }
            }
            Ok((worst, entries, violations))
        })
        .collect();

    let mut c_star = f64::NEG_INFINITY;
    let mut witnesses = Vec::new();
    let mut violations = Vec::new();
    for r in per_u {
        let (w, e, viol) = r?;
        c_star = c_star.max(w);
        witnesses.extend(e);
        violations.extend(viol);
    }
    Ok(DecouplingReport {
        kind: DecouplingKind::Sld,
        t,
        tau_t: tau,
        v_max: spec.v_max,
        c_star,
        witnesses,
        violations,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

/// Upper decoupling: max over `u`, `v` and every `ξ ∈ Ω_{τ_t}` of
/// `log P(uξv) − log P(u)P(v)`.
pub fn verify_ud(
    m: &MeasureSpec,
    t: usize,
    spec: &DecouplingSpec,
) -> Result<DecouplingReport, DecouplingError> {
    let start = Instant::now();
    let a = m.alphabet().size();
    let tau = spec.tau.at(t);
    spec.budget.check(a, t + tau + spec.v_max)?;
    let mut inserts = Vec::new();
    for_each_word(a, tau, |w| inserts.push(Word::from_slice(a, w)));
    let vs = v_words(a, spec.v_max);
    let total_u = spec.budget.check(a, t)?;

    let per_u: Vec<Result<UpperScan, DecouplingError>> = (0..total_u)
        .into_par_iter()
        .map(|ui| {
            let u = Word::from_slice(a, &word_at_index(a, t, ui));
            let lu = m.log_marginal_symbols(syms(&u))?;
            let mut worst = f64::NEG_INFINITY;
            let mut violations = Vec::new();
            for v in &vs {
                let lv = m.log_marginal_symbols(syms(v))?;
                for xi in &inserts {
                    let mut w = Vec::new();
                    w.extend_from_slice(syms(&u));
                    w.extend_from_slice(syms(xi));
                    w.extend_from_slice(syms(v));
                    let joint = m.log_marginal_symbols(&w)?;
                    if joint == f64::NEG_INFINITY {
                        continue; // vacuous
                    }
                    if lu == f64::NEG_INFINITY || lv == f64::NEG_INFINITY {
                        worst = f64::INFINITY;
                        violations.push((u.clone(), v.clone()));
                        continue;
                    }
                    worst = worst.max(joint - lu - lv);
                }
            }
            Ok((worst, violations))
        })
        .collect();

    let mut c_star = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for r in per_u {
        let (w, viol) = r?;
        c_star = c_star.max(w);
        violations.extend(viol);
    }
    Ok(DecouplingReport {
        kind: DecouplingKind::Ud,
        t,
        tau_t: tau,
        v_max: spec.v_max,
        c_star,
        witnesses: Vec::new(),
        violations,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

/// Selective symmetric decoupling: one shared insert per pair, two-sided for
/// both measures. Also checks `P ≪ P̂` on every visited word.
pub fn verify_ssd(
    m: &MeasureSpec,
    m_hat: &MeasureSpec,
    t: usize,
    spec: &DecouplingSpec,
) -> Result<DecouplingReport, DecouplingError> {
    verify_ssd_inner(m, m_hat, t, spec, None)
}

/// Replay a fixed candidate insert `ξ` across every pair (no optimization):
/// certifies a claim of the form "`ξ = a` works for all pairs".
pub fn verify_ssd_with_witness(
    m: &MeasureSpec,
    m_hat: &MeasureSpec,
    t: usize,
    spec: &DecouplingSpec,
    xi: &Word,
) -> Result<DecouplingReport, DecouplingError> {
    verify_ssd_inner(m, m_hat, t, spec, Some(xi))
}

fn verify_ssd_inner(
    m: &MeasureSpec,
    m_hat: &MeasureSpec,
    t: usize,
    spec: &DecouplingSpec,
    forced: Option<&Word>,
) -> Result<DecouplingReport, DecouplingError> {
    let start = Instant::now();
    let a = m.alphabet().size();
    if a != m_hat.alphabet().size() {
        return Err(DecouplingError::AlphabetMismatch(
            a,
            m_hat.alphabet().size(),
        ));
    }
    let tau = spec.tau.at(t);
    spec.budget.check(a, t + tau + spec.v_max)?;
    let inserts = insert_candidates(a, tau);
    let vs = v_words(a, spec.v_max);
    let total_u = spec.budget.check(a, t)?;
    let measures: [&MeasureSpec; 2] = [m, m_hat];

    let per_u: Vec<Result<PairScan, DecouplingError>> = (0..total_u)
        .into_par_iter()
        .map(|ui| {
            let u = Word::from_slice(a, &word_at_index(a, t, ui));
            check_ac(m, m_hat, &u)?;
            let mut worst = f64::NEG_INFINITY;
            let mut entries = Vec::new();
            let mut violations = Vec::new();
            for v in &vs {
                check_ac(m, m_hat, v)?;
                // pairs vacuous for both measures contribute nothing
                let live = measures.iter().any(|mm| {
                    mm.log_marginal_symbols(syms(&u))
                        .map(|x| x > f64::NEG_INFINITY)
                        .unwrap_or(false)
                        && mm
                            .log_marginal_symbols(syms(v))
                            .map(|x| x > f64::NEG_INFINITY)
                            .unwrap_or(false)
                });
                if !live {
                    continue;
                }
                let (best, best_xi) = match forced {
                    Some(xi) => (pair_needed_two_sided(&measures, &u, xi, v)?, Some(xi)),
                    None => {
                        let mut best = f64::INFINITY;
                        let mut best_xi: Option<&Word> = None;
                        for xi in &inserts {
                            let c = pair_needed_two_sided(&measures, &u, xi, v)?;
                            if c < best {
                                best = c;
                                best_xi = Some(xi);
                            }
                        }
                        (best, best_xi)
                    }
                };
                match best_xi {
                    Some(xi) if best < f64::INFINITY => {
                        worst = worst.max(best);
                        entries.push(WitnessEntry {
                            u: u.clone(),
                            v: v.clone(),
                            xi: xi.clone(),
                            achieved: best,
                        });
                    }
                    _ => {
                        worst = f64::INFINITY;
                        violations.push((u.clone(), v.clone()));
                    }
                }
            }
            Ok((worst, entries, violations))
        })
        .collect();

    let mut c_star = f64::NEG_INFINITY;
    let mut witnesses = Vec::new();
    let mut violations = Vec::new();
    for r in per_u {
        let (w, e, viol) = r?;
        c_star = c_star.max(w);
        witnesses.extend(e);
        violations.extend(viol);
    }
    Ok(DecouplingReport {
        kind: DecouplingKind::Ssd,
        t,
        tau_t: tau,
        v_max: spec.v_max,
        c_star,
        witnesses,
        violations,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

fn check_ac(m: &MeasureSpec, m_hat: &MeasureSpec, w: &Word) -> Result<(), DecouplingError> {
    let lp = m.log_marginal_symbols(syms(w))?;
    let lph = m_hat.log_marginal_symbols(syms(w))?;
    if lp > f64::NEG_INFINITY && lph == f64::NEG_INFINITY {
        return Err(DecouplingError::AbsoluteContinuity(
            m.alphabet().format_word(w),
        ));
    }
    Ok(())
}

/// Pick `b ∈ Ω_k` maximizing the minimum over the supplied measures of
/// `log P♯(bv) − log P♯(v)` (ties broken lexicographically). Returns the
/// word and the achieved ratio; errors when every extension vanishes.
pub fn extend_word(
    measures: &[&MeasureSpec],
    v: &Word,
    k: usize,
) -> Result<(Word, f64), DecouplingError> {
    let a = measures[0].alphabet().size();
    if k == 0 {
        return Ok((Word::empty(a), 0.0));
    }
    let mut base = Vec::with_capacity(measures.len());
    for (i, m) in measures.iter().enumerate() {
        let lv = m.log_marginal_symbols(syms(v))?;
        if lv == f64::NEG_INFINITY {
            return Err(DecouplingError::ZeroMassBase(
                m.alphabet().format_word(v),
                i,
            ));
        }
        base.push(lv);
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_b: Option<Word> = None;
    let mut first_fail: Option<(Word, usize)> = None;
    let mut err: Option<DecouplingError> = None;
    for_each_word(a, k, |b| {
        if err.is_some() {
            return;
        }
        let mut w = Vec::with_capacity(k + v.len());
        w.extend_from_slice(b);
        w.extend_from_slice(syms(v));
        let mut score = f64::INFINITY;
        for (i, m) in measures.iter().enumerate() {
            match m.log_marginal_symbols(&w) {
                Ok(lbv) => {
                    let ratio = lbv - base[i];
                    if ratio == f64::NEG_INFINITY && first_fail.is_none() {
                        first_fail = Some((Word::from_slice(a, b), i));
                    }
                    score = score.min(ratio);
                }
                Err(e) => err = Some(e.into()),
            }
        }
        if score > best {
            best = score;
            best_b = Some(Word::from_slice(a, b));
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if best == f64::NEG_INFINITY {
        let (b, i) = first_fail.expect("some extension must have been scored");
        return Err(DecouplingError::NoPositiveExtension {
            k,
            b: measures[0].alphabet().format_word(&b),
            measure: i,
        });
    }
    Ok((best_b.unwrap(), best))
}

/// A supplied shared-insert table for [`ssd_from_sld_ud`], keyed by `(u, v)`.
pub type WitnessTable = BTreeMap<(Word, Word), Word>;

/// Result of the constructive assembly of a symmetric certificate from
/// one-sided pieces: `ξ′ = ξ b` with `b` extending `v` and `ξ` a shared lower
/// witness for `(u, bv)`, giving `|ξ′| ≤ 2τ_t` and a two-sided constant
/// bounded by the one-sided pieces plus the extension cost.
#[derive(Debug, Clone)]
pub struct SsdConstruction {
    pub report: DecouplingReport,
    /// `|ξ′| ≤ 2τ_t`.
    pub tau_prime: usize,
    /// Two-sided bound promised by the assembly.
    pub c_bound: f64,
    pub bound_satisfied: bool,
}

pub fn ssd_from_sld_ud(
    m: &MeasureSpec,
    m_hat: &MeasureSpec,
    t: usize,
    spec: &DecouplingSpec,
    supplied: Option<&WitnessTable>,
) -> Result<SsdConstruction, DecouplingError> {
    let start = Instant::now();
    let a = m.alphabet().size();
    let tau = spec.tau.at(t);
    let ud_m = verify_ud(m, t, spec)?;
    let ud_mh = verify_ud(m_hat, t, spec)?;
    if !ud_m.c_star.is_finite() || !ud_mh.c_star.is_finite() {
        return Err(DecouplingError::UdPreconditionFailed);
    }
    let c_ud = ud_m.c_star.max(ud_mh.c_star);

    let inserts = insert_candidates(a, tau);
    let vs = v_words(a, spec.v_max);
    let measures: [&MeasureSpec; 2] = [m, m_hat];
    let total_u = spec.budget.check(a, t)?;

    let mut witnesses = Vec::new();
    let mut violations = Vec::new();
    let mut c_star = f64::NEG_INFINITY;
    let mut c_sld = f64::NEG_INFINITY;
    let mut ext_cost = 0.0f64; // observed per-letter extension cost C
    for ui in 0..total_u {
        let u = Word::from_slice(a, &word_at_index(a, t, ui));
        if measures.iter().all(|mm| {
            mm.log_marginal_symbols(syms(&u))
                .map(|x| x == f64::NEG_INFINITY)
                .unwrap_or(true)
        }) {
            continue;
        }
        for v in &vs {
            if measures.iter().any(|mm| {
                mm.log_marginal_symbols(syms(v))
                    .map(|x| x == f64::NEG_INFINITY)
                    .unwrap_or(true)
            }) {
                continue;
            }
            let (b, ratio) = extend_word(&measures, v, tau)?;
            if tau > 0 {
                ext_cost = ext_cost.max(-ratio / tau as f64);
            }
            let bv = crate::symbolic::concat(&b, v)?;
            // shared lower witness ξ for (u, bv)
            let xi = match supplied {
                Some(table) => {
                    let key = (u.clone(), v.clone());
                    let xi = table.get(&key).ok_or_else(|| {
                        DecouplingError::InvalidWitnessTable(format!(
                            "missing entry for pair ({}, {})",
                            m.alphabet().format_word(&u),
                            m.alphabet().format_word(v)
                        ))
                    })?;
                    let needed = shared_lower_needed(&measures, &u, xi, &bv)?;
                    if !needed.is_finite() {
                        return Err(DecouplingError::InvalidWitnessTable(format!(
                            "entry for pair ({}, {}) does not lower-decouple both measures",
                            m.alphabet().format_word(&u),
                            m.alphabet().format_word(v)
                        )));
                    }
                    c_sld = c_sld.max(needed);
                    xi.clone()
                }
                None => {
                    let mut best = f64::INFINITY;
                    let mut best_xi: Option<&Word> = None;
                    for cand in &inserts {
                        let needed = shared_lower_needed(&measures, &u, cand, &bv)?;
                        if needed < best {
                            best = needed;
                            best_xi = Some(cand);
                        }
                    }
                    match best_xi {
                        Some(xi) if best.is_finite() => {
                            c_sld = c_sld.max(best);
                            xi.clone()
                        }
                        _ => {
                            violations.push((u.clone(), v.clone()));
                            continue;
                        }
                    }
                }
            };
            let xi_prime = crate::symbolic::concat(&xi, &b)?;
            let achieved = pair_needed_two_sided(&measures, &u, &xi_prime, v)?;
            if !achieved.is_finite() {
                violations.push((u.clone(), v.clone()));
                c_star = f64::INFINITY;
                continue;
            }
            c_star = c_star.max(achieved);
            witnesses.push(WitnessEntry {
                u: u.clone(),
                v: v.clone(),
                xi: xi_prime,
                achieved,
            });
        }
    }
    if !violations.is_empty() {
        c_star = f64::INFINITY;
    }
    let c_bound = c_sld.max(0.0).max(c_ud.max(0.0)) + ext_cost * tau as f64;
    let bound_satisfied = c_star <= c_bound + 1e-9;
    Ok(SsdConstruction {
        report: DecouplingReport {
            kind: DecouplingKind::Ssd,
            t,
            tau_t: tau,
            v_max: spec.v_max,
            c_star,
            witnesses,
            violations,
            elapsed_ms: start.elapsed().as_millis(),
        },
        tau_prime: 2 * tau,
        c_bound,
        bound_satisfied,
    })
}

/// Shared one-sided lower constant: `max_♯ (log P♯(u)P♯(v) − log P♯(uξv))`.
fn shared_lower_needed(
    measures: &[&MeasureSpec],
    u: &Word,
    xi: &Word,
    v: &Word,
) -> Result<f64, DecouplingError> {
    let mut worst = f64::NEG_INFINITY;
    for m in measures {
        worst = worst.max(pair_needed_lower(m, u, xi, v)?);
    }
    Ok(worst)
}
