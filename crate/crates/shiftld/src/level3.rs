//! Finite-`t` Level-3 quantities: block entropy `h_t`, the cross term `ς_t`,
//! the relative entropy rate, mean entropy production, and the exact
//! finite-`t` Level-3 fluctuation identity.
//!
//! With `0·log 0 = 0` throughout,
//!
//! ```text
//! h_t(Q)  = −Σ_w Q(w) log Q(w)
//! ς_t(Q)  = −Σ_w Q(w) log P(w)      (+∞ when Q_t ⋪ P_t, with a witness)
//! Ent(Q_t | P_t) = ς_t(Q) − h_t(Q)
//! ```
//!
//! and for `P̂ = ΘP` the balance
//! `⟨σ_t, Q⟩ = Ent((ΘQ)_t | P_t) − Ent(Q_t | P_t)` holds exactly at every
//! finite `t`; [`level3_fr_check`] verifies it to floating-point accuracy.

use thiserror::Error;

use crate::measures::{MeasureError, MeasureSpec};
use crate::symbolic::{for_each_word, Involution, Word};
use crate::Budget;

#[derive(Debug, Clone, Error)]
pub enum Level3Error {
    #[error("measures are over different alphabets ({0} vs {1})")]
    AlphabetMismatch(usize, usize),
    #[error("sigma is undefined on the support: Q({0}) > 0 but P vanishes there")]
    UndefinedSigma(String),
    #[error("absolute continuity violated on supp Q at {0}")]
    AbsoluteContinuity(String),
    #[error("relative entropy of {side} is infinite (witness {witness})")]
    InfiniteEntropy { side: &'static str, witness: String },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Budget(#[from] crate::BudgetError),
}

/// Per-`t` entropy report; all rates are divided by `t`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EntropyReport {
    pub t: usize,
    /// `h_t(Q)/t ∈ [0, log A]`
    pub h_rate: f64,
    /// `ς_t(Q)/t` (may be `+∞`)
    pub varsigma_rate: f64,
    /// `Ent(Q_t|P_t)/t = varsigma_rate − h_rate ≥ 0`
    pub ent_rate: f64,
    /// A word with `Q(w) > 0 = P(w)` when the entropy is infinite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

/// Exact block sums over `Ω_t`.
pub fn entropy_rates(
    q: &MeasureSpec,
    p: &MeasureSpec,
    t: usize,
    budget: Budget,
) -> Result<EntropyReport, Level3Error> {
    let a = q.alphabet().size();
    if a != p.alphabet().size() {
        return Err(Level3Error::AlphabetMismatch(a, p.alphabet().size()));
    }
    budget.check(a, t)?;
    let mut h = 0.0f64;
    let mut varsigma = 0.0f64;
    let mut witness: Option<String> = None;
    let mut err: Option<Level3Error> = None;
    for_each_word(a, t, |w| {
        if err.is_some() {
            return;
        }
        let lq = match q.log_marginal_symbols(w) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e.into());
                return;
            }
        };
        if lq == f64::NEG_INFINITY {
            return; // 0 log 0 = 0
        }
        let mass = lq.exp();
        h -= mass * lq;
        let lp = match p.log_marginal_symbols(w) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e.into());
                return;
            }
        };
        if lp == f64::NEG_INFINITY {
            varsigma = f64::INFINITY;
            if witness.is_none() {
                witness = Some(q.alphabet().format_word(&Word::from_slice(a, w)));
            }
        } else if varsigma.is_finite() {
            varsigma -= mass * lp;
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let tf = t as f64;
    Ok(EntropyReport {
        t,
        h_rate: h / tf,
        varsigma_rate: varsigma / tf,
        ent_rate: (varsigma - h) / tf,
        witness,
    })
}

/// `(1/t) Σ_w Q(w) (log P(w) − log P̂(w))`: mean entropy production of the
/// pair `(P, P̂)` with respect to `Q`.
pub fn mean_entropy_production(
    q: &MeasureSpec,
    p: &MeasureSpec,
    p_hat: &MeasureSpec,
    t: usize,
    budget: Budget,
) -> Result<f64, Level3Error> {
    let a = q.alphabet().size();
    budget.check(a, t)?;
    let mut acc = 0.0f64;
    let mut err: Option<Level3Error> = None;
    for_each_word(a, t, |w| {
        if err.is_some() {
            return;
        }
        let lq = match q.log_marginal_symbols(w) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e.into());
                return;
            }
        };
        if lq == f64::NEG_INFINITY {
            return;
        }
        let word = || q.alphabet().format_word(&Word::from_slice(a, w));
        let lp = match p.log_marginal_symbols(w) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e.into());
                return;
            }
        };
        if lp == f64::NEG_INFINITY {
            err = Some(Level3Error::UndefinedSigma(word()));
            return;
        }
        let lph = match p_hat.log_marginal_symbols(w) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e.into());
                return;
            }
        };
        if lph == f64::NEG_INFINITY {
            err = Some(Level3Error::AbsoluteContinuity(word()));
            return;
        }
        acc += lq.exp() * (lp - lph);
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(acc / t as f64)
}

/// The two exact finite-`t` Level-3 identities for `P̂ = ΘP`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Level3Report {
    pub t: usize,
    /// `|⟨σ_t,Q⟩/t − (Ent((ΘQ)_t|P_t) − Ent(Q_t|P_t))/t|`
    pub defect: f64,
    /// `|h_t(Q) − h_t(ΘQ)|` (a bijection identity, zero in exact arithmetic)
    pub h_defect: f64,
    pub mean_ep: f64,
    pub ent_rate_q: f64,
    pub ent_rate_theta_q: f64,
}

pub fn level3_fr_check(
    q: &MeasureSpec,
    p: &MeasureSpec,
    theta: &Involution,
    t: usize,
    budget: Budget,
) -> Result<Level3Report, Level3Error> {
    let p_hat = MeasureSpec::theta_lift(p.clone(), theta.clone())?;
    let theta_q = MeasureSpec::theta_lift(q.clone(), theta.clone())?;

    let ent_q = entropy_rates(q, p, t, budget)?;
    if let Some(w) = ent_q.witness {
        return Err(Level3Error::InfiniteEntropy {
            side: "Ent(Q|P)",
            witness: w,
        });
    }
    let ent_tq = entropy_rates(&theta_q, p, t, budget)?;
    if let Some(w) = ent_tq.witness {
        return Err(Level3Error::InfiniteEntropy {
            side: "Ent(ThetaQ|P)",
            witness: w,
        });
    }
    let mean_ep = mean_entropy_production(q, p, &p_hat, t, budget)?;
    let defect = (mean_ep - (ent_tq.ent_rate - ent_q.ent_rate)).abs();
    let h_defect = ((ent_q.h_rate - ent_tq.h_rate) * t as f64).abs();
    Ok(Level3Report {
        t,
        defect,
        h_defect,
        mean_ep,
        ent_rate_q: ent_q.ent_rate,
        ent_rate_theta_q: ent_tq.ent_rate,
    })
}

/// Max positive excess of `h_{t+t′} − h_t − h_{t′}` over `t + t′ ≤ t_max`;
/// subadditivity makes the true value nonpositive.
pub fn ks_subadditivity_check(
    q: &MeasureSpec,
    t_max: usize,
    budget: Budget,
) -> Result<f64, Level3Error> {
    let a = q.alphabet().size();
    budget.check(a, t_max)?;
    let mut h = vec![0.0f64; t_max + 1];
    for (t, ht) in h.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0f64;
        let mut err: Option<Level3Error> = None;
        for_each_word(a, t, |w| {
            if err.is_some() {
                return;
            }
            match q.log_marginal_symbols(w) {
                Ok(lq) if lq > f64::NEG_INFINITY => acc -= lq.exp() * lq,
                Ok(_) => {}
                Err(e) => err = Some(e.into()),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        *ht = acc;
    }
    let mut excess = f64::NEG_INFINITY;
    for t in 1..t_max {
        for tp in 1..=(t_max - t) {
            excess = excess.max(h[t + tp] - h[t] - h[tp]);
        }
    }
    Ok(excess)
}
