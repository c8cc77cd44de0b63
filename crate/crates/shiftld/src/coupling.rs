//! The constructive block-gluing map `ψ_{n,t} : Ω_{t′} → Ω_t` and its
//! enumeration certificates.
//!
//! A word of length `t′ = Nn` is cut into `N` blocks of length `n`; the map
//! glues them back into one word of length `t` by inserting short connectors
//! `ξ^i` (each `|ξ^i| ≤ τ_n`, chosen right to left so every partial suffix
//! keeps positive mass) and prepending an extension `b` that absorbs the
//! leftover length `δ = t − t′ − Σ|ξ^i|`. The certificate compares the
//! decoupled product measure `P^{(n)}` pushed through `ψ` against the true
//! `P_t` and reports the minimal `g` with `P^{(n)} ∘ ψ^{−1} ≤ e^g P_t`,
//! together with the observed preimage multiplicity (at most `(τ_n+1)^{N−1}`:
//! a glued word is pinned by the connector lengths).

use std::collections::BTreeMap;
use thiserror::Error;

use crate::decoupling::{extend_word, DecouplingError};
use crate::ldp::ObservableSpec;
use crate::measures::{MeasureError, MeasureSpec};
use crate::symbolic::{for_each_word, Symbol, Word};
use crate::Budget;

#[derive(Debug, Clone, Error)]
pub enum CouplingError {
    #[error("need t >= n >= 1, got n = {n}, t = {t}")]
    BadHorizons { n: usize, t: usize },
    #[error("layout is degenerate (N = 0); nothing to glue")]
    Degenerate,
    #[error("word length {got} does not match t' = {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("block {index} of the input has zero mass under measure {measure}")]
    BlockOutsideSupport { index: usize, measure: usize },
    #[error("no positive-probability gluing exists at block {index}")]
    NoPositiveGluing { index: usize },
    #[error("sigma mode needs exactly two measures, got {0}")]
    SigmaNeedsPair(usize),
    #[error("absolute continuity violated at {0}")]
    AbsoluteContinuity(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Decoupling(#[from] Box<DecouplingError>),
    #[error(transparent)]
    Budget(#[from] crate::BudgetError),
}

/// Block arithmetic: `N = 2⌊t/(2(n+τ_n))⌋`, `t′ = Nn`, and the admissible
/// range for the prefix length `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct BlockLayout {
    pub n: usize,
    pub t: usize,
    pub tau_n: usize,
    /// `N` (always even; 0 marks a degenerate layout).
    pub blocks: usize,
    pub t_prime: usize,
    /// `δ ∈ [t − N(n+τ_n), t − t′]` depending on the connectors chosen.
    pub delta_min: usize,
    pub delta_max: usize,
}

impl BlockLayout {
    pub fn degenerate(&self) -> bool {
        self.blocks == 0
    }
}

/// Compute the layout. Degenerate layouts (`N = 0`) are returned, not
/// errors: callers sweep `(n, t)` grids.
pub fn block_counts(n: usize, t: usize, tau_n: usize) -> Result<BlockLayout, CouplingError> {
    if n < 1 || t < n {
        return Err(CouplingError::BadHorizons { n, t });
    }
    let blocks = 2 * (t / (2 * (n + tau_n)));
    let t_prime = blocks * n;
    Ok(BlockLayout {
        n,
        t,
        tau_n,
        blocks,
        t_prime,
        delta_min: t.saturating_sub(blocks * (n + tau_n)),
        delta_max: t - t_prime,
    })
}

/// The glued word together with its parts.
#[derive(Debug, Clone)]
pub struct GluedWord {
    pub output: Word,
    pub prefix: Word,
    pub connectors: Vec<Word>,
}

/// Apply `ψ_{n,t}` to one word of `Λ_{t′}`.
///
/// One measure: each connector maximizes `log P(w^i ξ S)` over `|ξ| ≤ τ_n`
/// given the already-glued suffix `S` (right to left, ties by length then
/// lex). Two measures: the connector minimizes the worst two-sided deviation
/// `max_♯ |log P♯(w^i ξ S) − log P♯(w^i) − log P♯(S)|`. The prefix `b` comes
/// from the word-extension rule on the glued suffix.
pub fn build_psi(
    measures: &[&MeasureSpec],
    layout: &BlockLayout,
    w: &Word,
) -> Result<GluedWord, CouplingError> {
    if layout.degenerate() {
        return Err(CouplingError::Degenerate);
    }
    if w.len() != layout.t_prime {
        return Err(CouplingError::WrongLength {
            expected: layout.t_prime,
            got: w.len(),
        });
    }
    let a = measures[0].alphabet().size();
    let n = layout.n;
    let nb = layout.blocks;
    // precondition: every block carries positive mass under every measure
    for (i, m) in measures.iter().enumerate() {
        for k in 0..nb {
            let block = &w.symbols()[k * n..(k + 1) * n];
            if m.log_marginal_symbols(block)? == f64::NEG_INFINITY {
                return Err(CouplingError::BlockOutsideSupport {
                    index: k,
                    measure: i,
                });
            }
        }
    }
    let mut connectors = vec![Word::empty(a); nb.saturating_sub(1)];
    let mut suffix: Vec<Symbol> = w.symbols()[(nb - 1) * n..].to_vec();
    for i in (0..nb - 1).rev() {
        let block = &w.symbols()[i * n..(i + 1) * n];
        let mut best_score = f64::NEG_INFINITY;
        let mut best: Option<(Word, Vec<Symbol>)> = None;
        let mut err: Option<CouplingError> = None;
        for len in 0..=layout.tau_n {
            for_each_word(a, len, |xi| {
                if err.is_some() {
                    return;
                }
                let mut cand = Vec::with_capacity(block.len() + len + suffix.len());
                cand.extend_from_slice(block);
                cand.extend_from_slice(xi);
                cand.extend_from_slice(&suffix);
                let score = match score_gluing(measures, block, xi, &suffix, &cand) {
                    Ok(s) => s,
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                };
                if score > best_score {
                    best_score = score;
                    best = Some((Word::from_slice(a, xi), cand));
                }
            });
        }
        if let Some(e) = err {
            return Err(e);
        }
        match best {
            Some((xi, cand)) if best_score > f64::NEG_INFINITY => {
                connectors[i] = xi;
                suffix = cand;
            }
            _ => return Err(CouplingError::NoPositiveGluing { index: i }),
        }
    }
    let delta = layout.t - suffix.len();
    let glued = Word::from_slice(a, &suffix);
    let (prefix, _) = extend_word(measures, &glued, delta).map_err(Box::new)?;
    let mut out = prefix.symbols().to_vec();
    out.extend_from_slice(&suffix);
    debug_assert_eq!(out.len(), layout.t);
    Ok(GluedWord {
        output: Word::from_slice(a, &out),
        prefix,
        connectors,
    })
}

/// One-measure score: `log P(block·ξ·suffix)` (monotone in the lower-
/// decoupling slack). Two measures: negated worst two-sided deviation.
fn score_gluing(
    measures: &[&MeasureSpec],
    block: &[Symbol],
    _xi: &[Symbol],
    suffix: &[Symbol],
    cand: &[Symbol],
) -> Result<f64, CouplingError> {
    if measures.len() == 1 {
        Ok(measures[0].log_marginal_symbols(cand)?)
    } else {
        let mut worst = f64::NEG_INFINITY;
        for m in measures {
            let joint = m.log_marginal_symbols(cand)?;
            if joint == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let split = m.log_marginal_symbols(block)? + m.log_marginal_symbols(suffix)?;
            worst = worst.max((joint - split).abs());
        }
        Ok(-worst)
    }
}

/// Enumeration certificate for `ψ`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PsiDiagnostics {
    pub layout: BlockLayout,
    /// Minimal `g` with `P^{(n)} ∘ ψ^{−1} ≤ e^g P_t` pointwise.
    pub g_min: f64,
    /// Largest observed preimage count.
    pub multiplicity: usize,
    /// `(τ_n + 1)^{N−1}`, the forced ceiling on the multiplicity.
    pub multiplicity_bound: usize,
    /// Number of words in `Λ_{t′}`.
    pub support_size: usize,
}

/// Push `P^{(n)}_{t′}` through `ψ` exactly and certify the comparison
/// constant against `P_t`.
pub fn psi_certificate(
    measures: &[&MeasureSpec],
    layout: &BlockLayout,
    budget: Budget,
) -> Result<PsiDiagnostics, CouplingError> {
    if layout.degenerate() {
        return Err(CouplingError::Degenerate);
    }
    let m = measures[0];
    let a = m.alphabet().size();
    budget.check(a, layout.t_prime.max(layout.t))?;
    let n = layout.n;
    let mut pushed: BTreeMap<Vec<Symbol>, (f64, usize)> = BTreeMap::new();
    let mut support = 0usize;
    let mut err: Option<CouplingError> = None;
    for_each_word(a, layout.t_prime, |wsym| {
        if err.is_some() {
            return;
        }
        // Λ_{t′}: every block in the support of P_n
        let mut log_decoupled = 0.0f64;
        for k in 0..layout.blocks {
            match m.log_marginal_symbols(&wsym[k * n..(k + 1) * n]) {
                Ok(lp) => log_decoupled += lp,
                Err(e) => {
                    err = Some(e.into());
                    return;
                }
            }
        }
        if log_decoupled == f64::NEG_INFINITY {
            return;
        }
        support += 1;
        let w = Word::from_slice(a, wsym);
        match build_psi(measures, layout, &w) {
            Ok(glued) => {
                let slot = pushed
                    .entry(glued.output.symbols().to_vec())
                    .or_insert((0.0, 0));
                slot.0 += log_decoupled.exp();
                slot.1 += 1;
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut g_min = f64::NEG_INFINITY;
    let mut multiplicity = 0usize;
    for (img, (mass, count)) in &pushed {
        multiplicity = multiplicity.max(*count);
        let lp = m.log_marginal_symbols(img)?;
        g_min = g_min.max(mass.ln() - lp);
    }
    let bound = (layout.tau_n + 1).pow(layout.blocks.saturating_sub(1) as u32);
    Ok(PsiDiagnostics {
        layout: *layout,
        g_min,
        multiplicity,
        multiplicity_bound: bound,
        support_size: support,
    })
}

/// The analytic comparison bound from the gluing construction:
/// `(N−1)·c_n + δ_max·C + (N−1)·log(τ_n+1)`.
pub fn analytic_bound(layout: &BlockLayout, c_n: f64, big_c: f64) -> f64 {
    let nm1 = layout.blocks.saturating_sub(1) as f64;
    nm1 * c_n + layout.delta_max as f64 * big_c + nm1 * ((layout.tau_n + 1) as f64).ln()
}

/// Which additive quantity the compatibility defect tracks.
pub enum CompatMode<'a> {
    /// `z_t = σ_t` for a pair of measures.
    Sigma,
    /// `z_t = S_{t−r+1} f` for a finitely-dependent observable.
    Birkhoff(&'a ObservableSpec),
}

/// Compatibility defect report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompatReport {
    /// `sup_{w∈Λ_{t′}} |z_t(ψ(w)) − Σ_k z_n(w^k)| / t`
    pub defect: f64,
    /// Counting bound `‖f‖ (1 − t′/t + r/n)` (Birkhoff mode only).
    pub birkhoff_bound: Option<f64>,
}

/// Sup-norm discrepancy per unit time between the glued word's additive
/// functional and the blockwise sum.
pub fn compat_defect(
    measures: &[&MeasureSpec],
    layout: &BlockLayout,
    mode: CompatMode<'_>,
    budget: Budget,
) -> Result<CompatReport, CouplingError> {
    if layout.degenerate() {
        return Err(CouplingError::Degenerate);
    }
    if matches!(mode, CompatMode::Sigma) && measures.len() != 2 {
        return Err(CouplingError::SigmaNeedsPair(measures.len()));
    }
    let m = measures[0];
    let a = m.alphabet().size();
    budget.check(a, layout.t_prime.max(layout.t))?;
    let n = layout.n;
    let mut worst = 0.0f64;
    let mut err: Option<CouplingError> = None;
    for_each_word(a, layout.t_prime, |wsym| {
        if err.is_some() {
            return;
        }
        let mut in_support = true;
        for k in 0..layout.blocks {
            match m.log_marginal_symbols(&wsym[k * n..(k + 1) * n]) {
                Ok(lp) => in_support &= lp > f64::NEG_INFINITY,
                Err(e) => {
                    err = Some(e.into());
                    return;
                }
            }
        }
        if !in_support {
            return;
        }
        let w = Word::from_slice(a, wsym);
        let glued = match build_psi(measures, layout, &w) {
            Ok(g) => g,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        let d = match &mode {
            CompatMode::Sigma => {
                let sig = |x: &[Symbol]| -> Result<f64, CouplingError> {
                    let lp = measures[0].log_marginal_symbols(x)?;
                    let lph = measures[1].log_marginal_symbols(x)?;
                    if lp > f64::NEG_INFINITY && lph == f64::NEG_INFINITY {
                        return Err(CouplingError::AbsoluteContinuity(
                            m.alphabet().format_word(&Word::from_slice(a, x)),
                        ));
                    }
                    Ok(lp - lph)
                };
                let mut blockwise = 0.0;
                for k in 0..layout.blocks {
                    match sig(&wsym[k * n..(k + 1) * n]) {
                        Ok(s) => blockwise += s,
                        Err(e) => {
                            err = Some(e);
                            return;
                        }
                    }
                }
                match sig(glued.output.symbols()) {
                    Ok(total) => (total - blockwise).abs(),
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                }
            }
            CompatMode::Birkhoff(f) => {
                let total = f.birkhoff_sum(glued.output.symbols());
                let mut blockwise = vec![0.0; f.dim()];
                for k in 0..layout.blocks {
                    let zb = f.birkhoff_sum(&wsym[k * n..(k + 1) * n]);
                    for (acc, x) in blockwise.iter_mut().zip(&zb) {
                        *acc += x;
                    }
                }
                total
                    .iter()
                    .zip(&blockwise)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            }
        };
        worst = worst.max(d / layout.t as f64);
    });
    if let Some(e) = err {
        return Err(e);
    }
    let birkhoff_bound = match &mode {
        CompatMode::Birkhoff(f) => Some(
            f.sup_norm()
                * (1.0 - layout.t_prime as f64 / layout.t as f64
                    + f.locality() as f64 / layout.n as f64),
        ),
        CompatMode::Sigma => None,
    };
    Ok(CompatReport {
        defect: worst,
        birkhoff_bound,
    })
}
