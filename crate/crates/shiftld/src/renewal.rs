//! Exact engine for the hidden Markov renewal family.
//!
//! A pair of non-decreasing sequences `γ, γ̂` (with `γ(0) = 0` and
//! `γ(n+1) ≥ γ(n) + ε`) defines a pair of hidden Markov measures on `{a,b}^ℕ`
//! through the climb-or-reset chain on `ℕ₀` with climb probability
//! `g(n+1) = e^{γ(n)−γ(n+1)}`. The entropy-production pressure of the pair is
//! `q(α) = −log ρ(α)`, where `ρ(α)` is the radius of convergence of the
//! return series `R_α(x) = Σ r_t(α) x^t` and is computed here as
//! `ρ(α) = sup{x ≥ 0 : x·U_α(x) ≤ 1}` with
//!
//! ```text
//! U_α(x) = Σ_t u_t(α) x^t,
//! u_t(α) = (1−g(t+1))^{α+1} (1−ĝ(t+1))^{−α} e^{−(α+1)γ(t) + αγ̂(t)}.
//! ```
//!
//! Everything is evaluated in log domain; the sup is found by bisection with
//! certified early exit (`x·U_α(x) > 1` is decided as soon as a partial sum
//! crosses one, even where the full series diverges). The radius `κ(α)` of
//! `U_α` itself comes from declared slope limits, never from sampled ratios.
//!
//! Six presets reproduce the qualitative zoo of singular pressure behaviours:
//! hard `+∞` walls, continuous blow-up, kinks where the root collides with
//! the radius, and a non-analyticity interval in the interior of the domain.

use serde::Serialize;
use thiserror::Error;

use crate::measures::MeasureSpec;
use crate::symbolic::for_each_word;
use crate::Budget;

#[derive(Debug, Clone, Error)]
pub enum RenewalError {
    #[error("invalid preset {0}: expected 1..=6")]
    InvalidPreset(u8),
    #[error("gamma sequence violates the increment condition at n = {n}: {prev} -> {next} (epsilon {epsilon})")]
    IncrementViolation {
        n: u64,
        prev: f64,
        next: f64,
        epsilon: f64,
    },
    #[error(
        "declared slope limit {declared} disagrees with sampled gamma(t)/t = {sampled} at t = {t}"
    )]
    SlopeMismatch { declared: f64, sampled: f64, t: u64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("series truncation cannot certify x*U(x) near the radius at alpha = {alpha}: partial = {partial}, tail estimate = {tail}")]
    SeriesUndecided { alpha: f64, partial: f64, tail: f64 },
    #[error("series for the derivative does not converge at alpha = {alpha} (root at the radius; request one-sided values away from the transition)")]
    DerivativeAtTransition { alpha: f64 },
    #[error("derivative undefined for a degenerate point (rho = 0) at alpha = {alpha}")]
    DerivativeDegenerate { alpha: f64 },
    #[error("no case transition in [{lo}, {hi}]: same case at both ends")]
    NoTransition { lo: f64, hi: f64 },
    #[error("kappa is not finite and positive on the bracket (kappa({alpha}) = {kappa})")]
    KappaNotFinite { alpha: f64, kappa: f64 },
    #[error("bracket search failed: x*U(x) never crossed 1 below {0:e}")]
    NoBracket(f64),
    #[error(transparent)]
    Measure(#[from] Box<crate::measures::MeasureError>),
    #[error(transparent)]
    Budget(#[from] crate::BudgetError),
}

/// `ln(1 − e^{−d})` for `d > 0`, stable for both small and large `d`.
pub(crate) fn ln_one_minus_exp_neg(d: f64) -> f64 {
    if d == f64::INFINITY {
        0.0
    } else if d > std::f64::consts::LN_2 {
        (-(-d).exp()).ln_1p()
    } else {
        (-(-d).exp_m1()).ln()
    }
}

/// Closed-form generators for `γ(n)`, `n ≥ 1`; `γ(0)` is held by
/// [`GammaSpec`] (the construction's normalization is `γ(0) = 0`).
#[derive(Debug, Clone, PartialEq)]
pub enum GammaKind {
    /// `a·n`
    Linear { a: f64 },
    /// `lin·n + quad·n²`
    Quadratic { lin: f64, quad: f64 },
    /// `quad·n² + pow32·n^{3/2}`
    QuadRoot { quad: f64, pow32: f64 },
    /// `offset + lin·n + log_coef·ln(1 + n/scale)` (for `n ≥ 1` only; the
    /// offset is a genuine jump between `γ(0)` and `γ(1)`)
    LinLog {
        offset: f64,
        lin: f64,
        log_coef: f64,
        scale: f64,
    },
    /// `e^{rate·n}` (for `n ≥ 1` only)
    Exp { rate: f64 },
    /// Explicit head values for `n = 1..=head.len()`, then the tail kind.
    Tabular {
        head: Vec<f64>,
        tail: Box<GammaKind>,
    },
}

impl GammaKind {
    fn eval(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        let x = n as f64;
        match self {
            GammaKind::Linear { a } => a * x,
            GammaKind::Quadratic { lin, quad } => lin * x + quad * x * x,
            GammaKind::QuadRoot { quad, pow32 } => quad * x * x + pow32 * x.powf(1.5),
            GammaKind::LinLog {
                offset,
                lin,
                log_coef,
                scale,
            } => offset + lin * x + log_coef * (x / scale).ln_1p(),
            GammaKind::Exp { rate } => (rate * x).exp(),
            GammaKind::Tabular { head, tail } => {
                if (n as usize) <= head.len() {
                    head[n as usize - 1]
                } else {
                    tail.eval(n)
                }
            }
        }
    }

    fn tiers(&self) -> SlopeTiers {
        match self {
            GammaKind::Linear { a } => SlopeTiers {
                exp: 0.0,
                quad: 0.0,
                pow32: 0.0,
                lin: *a,
            },
            GammaKind::Quadratic { lin, quad } => SlopeTiers {
                exp: 0.0,
                quad: *quad,
                pow32: 0.0,
                lin: *lin,
            },
            GammaKind::QuadRoot { quad, pow32 } => SlopeTiers {
                exp: 0.0,
                quad: *quad,
                pow32: *pow32,
                lin: 0.0,
            },
            GammaKind::LinLog { lin, .. } => SlopeTiers {
                exp: 0.0,
                quad: 0.0,
                pow32: 0.0,
                lin: *lin,
            },
            GammaKind::Exp { rate } => SlopeTiers {
                exp: *rate,
                quad: 0.0,
                pow32: 0.0,
                lin: 0.0,
            },
            GammaKind::Tabular { tail, .. } => tail.tiers(),
        }
    }
}

/// Declared asymptotic structure of `γ(t)` as `t → ∞`, ordered by growth
/// tier. Used to evaluate `κ(α)` analytically: sampled ratios cannot certify
/// a liminf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeTiers {
    pub exp: f64,
    pub quad: f64,
    pub pow32: f64,
    pub lin: f64,
}

impl SlopeTiers {
    /// `lim γ(t)/t`, `+∞` when any super-linear tier is present.
    pub fn slope_limit(&self) -> f64 {
        if self.exp > 0.0 || self.quad > 0.0 || self.pow32 > 0.0 {
            f64::INFINITY
        } else {
            self.lin
        }
    }
}

/// One `γ` sequence: `γ(0)`, a closed-form generator for `n ≥ 1`, and the
/// declared minimal increment `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSpec {
    kind: GammaKind,
    gamma_zero: f64,
    epsilon: f64,
}

const INCREMENT_SCAN: u64 = 10_000;

impl GammaSpec {
    /// Build and validate: `ε > 0`, `γ(n+1) ≥ γ(n) + ε` on `n ≤ 10⁴`, and the
    /// declared slope limit consistent with `γ(t)/t` sampled at `t = 10³`
    /// within 10%.
    pub fn new(kind: GammaKind, epsilon: f64) -> Result<Self, RenewalError> {
        Self::with_gamma_zero(kind, 0.0, epsilon)
    }

    pub fn with_gamma_zero(
        kind: GammaKind,
        gamma_zero: f64,
        epsilon: f64,
    ) -> Result<Self, RenewalError> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(RenewalError::BadEpsilon(epsilon));
        }
        let spec = GammaSpec {
            kind,
            gamma_zero,
            epsilon,
        };
        let slack = 1e-9;
        let mut prev = spec.eval(0);
        for n in 0..INCREMENT_SCAN {
            let next = spec.eval(n + 1);
            if next != f64::INFINITY && (next.is_nan() || next < prev + epsilon - slack) {
                return Err(RenewalError::IncrementViolation {
                    n,
                    prev,
                    next,
                    epsilon,
                });
            }
            if next > 1e300 {
                break;
            }
            prev = next;
        }
        // declared slope vs sampled ratio at t = 1000
        let t = 1000u64;
        let sampled = spec.eval(t) / t as f64;
        let tiers = spec.tiers();
        let tf = t as f64;
        let predicted = if tiers.exp > 0.0 {
            (tiers.exp * tf).exp() / tf
        } else {
            tiers.quad * tf + tiers.pow32 * tf.sqrt() + tiers.lin
        };
        let ok = if predicted.is_infinite() || sampled.is_infinite() {
            predicted.is_infinite() && sampled.is_infinite()
        } else {
            (sampled - predicted).abs() <= 0.10 * predicted.abs().max(1e-12)
        };
        if !ok {
            return Err(RenewalError::SlopeMismatch {
                declared: predicted,
                sampled,
                t,
            });
        }
        Ok(spec)
    }

    /// `γ(n)`; `γ(0)` is the stored normalization value (default 0).
    pub fn eval(&self, n: u64) -> f64 {
        if n == 0 {
            self.gamma_zero
        } else {
            self.kind.eval(n)
        }
    }

    /// Declared minimal increment `ε`.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tiers(&self) -> SlopeTiers {
        self.kind.tiers()
    }

    /// `lim γ(t)/t` from the declared tiers.
    pub fn slope_limit(&self) -> f64 {
        self.tiers().slope_limit()
    }

    /// `log(1 − g(n+1))` with `g(n+1) = e^{γ(n)−γ(n+1)}`.
    pub fn log_one_minus_g(&self, n_plus_1: u64) -> f64 {
        let lo = self.eval(n_plus_1 - 1);
        let hi = self.eval(n_plus_1);
        let d = if hi == f64::INFINITY {
            f64::INFINITY
        } else {
            hi - lo
        };
        ln_one_minus_exp_neg(d)
    }

    /// Length of an explicit tabular head (0 for pure closed forms); beyond
    /// it the generator's increments are monotone.
    pub fn head_len(&self) -> usize {
        match &self.kind {
            GammaKind::Tabular { head, .. } => head.len(),
            _ => 0,
        }
    }
}

/// A `(γ, γ̂)` pair plus series tolerances.
#[derive(Debug, Clone)]
pub struct RenewalPair {
    pub gamma: GammaSpec,
    pub gamma_hat: GammaSpec,
    /// Relative series tolerance (default 1e−14).
    pub rel_tol: f64,
    /// Series term cap (default 10⁶); exceeding it without a verdict is an
    /// explicit error, never a silent answer.
    pub max_terms: u64,
}

impl RenewalPair {
    pub fn new(gamma: GammaSpec, gamma_hat: GammaSpec) -> Self {
        RenewalPair {
            gamma,
            gamma_hat,
            rel_tol: 1e-14,
            max_terms: 1_000_000,
        }
    }

    /// The six worked configurations (the plotted `c = 1/2` cases for 3–4).
    ///
    /// All generators are normalized to `γ(0) = γ̂(0) = 0`; closed forms apply
    /// from `n = 1` (so preset 6's `γ̂` jumps by `12 + 5·ln(1.2)` between
    /// `n = 0` and `n = 1`, and preset 2's `γ̂(1) = e²`).
    pub fn preset(k: u8) -> Result<Self, RenewalError> {
        let p = |g, eg, gh, egh| -> Result<RenewalPair, RenewalError> {
            Ok(RenewalPair::new(
                GammaSpec::new(g, eg)?,
                GammaSpec::new(gh, egh)?,
            ))
        };
        match k {
            1 => p(
                GammaKind::Linear { a: 1.0 },
                1.0,
                GammaKind::Quadratic {
                    lin: 0.0,
                    quad: 1.0,
                },
                1.0,
            ),
            2 => p(
                GammaKind::Linear { a: 1.0 },
                1.0,
                GammaKind::Exp { rate: 2.0 },
                7.0,
            ),
            3 => p(
                GammaKind::Quadratic {
                    lin: 1.0,
                    quad: 0.5,
                },
                1.5,
                GammaKind::Quadratic {
                    lin: 0.0,
                    quad: 1.0,
                },
                1.0,
            ),
            4 => p(
                GammaKind::Quadratic {
                    lin: 0.0,
                    quad: 0.5,
                },
                0.5,
                GammaKind::QuadRoot {
                    quad: 1.0,
                    pow32: 1.0,
                },
                2.0,
            ),
            5 => p(
                GammaKind::Linear { a: 1.0 },
                1.0,
                GammaKind::LinLog {
                    offset: 0.0,
                    lin: 2.0,
                    log_coef: -2.0,
                    scale: 2.0,
                },
                1.18,
            ),
            6 => p(
                GammaKind::Tabular {
                    head: vec![0.01],
                    tail: Box::new(GammaKind::LinLog {
                        offset: 0.0,
                        lin: 1.0,
                        log_coef: 5.0,
                        scale: 5.0,
                    }),
                },
                0.01,
                GammaKind::LinLog {
                    offset: 10.0,
                    lin: 2.0,
                    log_coef: 5.0,
                    scale: 5.0,
                },
                2.0,
            ),
            other => Err(RenewalError::InvalidPreset(other)),
        }
    }

    /// `log u_t(α)` by the closed formula, in log domain.
    pub fn log_u(&self, t: u64, alpha: f64) -> f64 {
        let a1 = alpha + 1.0;
        let mut s = 0.0;
        if a1 != 0.0 {
            s += a1 * self.gamma.log_one_minus_g(t + 1);
        }
        if alpha != 0.0 {
            s -= alpha * self.gamma_hat.log_one_minus_g(t + 1);
        }
        let g = self.gamma.eval(t);
        let gh = self.gamma_hat.eval(t);
        let mut tail = 0.0;
        if a1 != 0.0 {
            tail -= a1 * g;
        }
        if alpha != 0.0 {
            tail += alpha * gh;
        }
        if tail.is_nan() {
            // inf − inf: resolve by the declared growth tiers
            tail = match self.divergent_sign(alpha) {
                std::cmp::Ordering::Less => f64::NEG_INFINITY,
                std::cmp::Ordering::Greater => f64::INFINITY,
                std::cmp::Ordering::Equal => 0.0,
            };
        }
        s + tail
    }

    /// Sign of the divergent part `−(α+1)γ(t) + αγ̂(t)` per declared tiers.
    fn divergent_sign(&self, alpha: f64) -> std::cmp::Ordering {
        let g = self.gamma.tiers();
        let gh = self.gamma_hat.tiers();
        let a1 = alpha + 1.0;
        for (x, y) in [
            (g.exp, gh.exp),
            (g.quad, gh.quad),
            (g.pow32, gh.pow32),
            (g.lin, gh.lin),
        ] {
            let c = -a1 * x + alpha * y;
            if c != 0.0 {
                return c.partial_cmp(&0.0).unwrap();
            }
        }
        std::cmp::Ordering::Equal
    }

    /// `u_t(α)` in linear domain; overflow yields `+∞` (drives the
    /// degenerate case downstream).
    pub fn u_coefficient(&self, t: u64, alpha: f64) -> f64 {
        self.log_u(t, alpha).exp()
    }

    /// `∂_α log u_t(α)`, analytic:
    /// `log(1−g(t+1)) − log(1−ĝ(t+1)) − γ(t) + γ̂(t)`.
    pub fn dlog_u(&self, t: u64) -> f64 {
        self.gamma.log_one_minus_g(t + 1)
            - self.gamma_hat.log_one_minus_g(t + 1)
            - self.gamma.eval(t)
            + self.gamma_hat.eval(t)
    }

    /// Radius of convergence `κ(α)` of `U_α` from the declared slope
    /// structure: the first growth tier with a nonzero combined coefficient
    /// `(α+1)·γ_tier − α·γ̂_tier` decides `0` or `+∞`; if every super-linear
    /// tier cancels, `κ = exp((α+1)·lin − α·lin̂)`.
    pub fn kappa(&self, alpha: f64) -> f64 {
        let g = self.gamma.tiers();
        let gh = self.gamma_hat.tiers();
        let a1 = alpha + 1.0;
        for (x, y) in [(g.exp, gh.exp), (g.quad, gh.quad), (g.pow32, gh.pow32)] {
            let c = a1 * x - alpha * y;
            if c > 0.0 {
                return f64::INFINITY;
            }
            if c < 0.0 {
                return 0.0;
            }
        }
        (a1 * g.lin - alpha * gh.lin).exp()
    }
}

/// Case tag for a solved point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RhoCase {
    /// `x·U_α(x) = 1` has a root strictly inside the radius.
    RootOfXU,
    /// `x·U_α(x) < 1` all the way to the radius: `ρ = κ`.
    RadiusBound,
    /// `κ = 0`: the series diverges for every `x > 0`; `q = +∞`.
    Degenerate,
}

/// One solved point of the pressure curve.
#[derive(Debug, Clone, Serialize)]
pub struct RhoResult {
    pub alpha: f64,
    pub rho: f64,
    pub case: RhoCase,
    pub kappa: f64,
    /// `q(α) = −log ρ(α)` (`+∞` when `ρ = 0`).
    pub q: f64,
    pub iterations: u32,
    /// RootOfXU: `|ρU_α(ρ) − 1|`; RadiusBound: slack `1 − κU_α(κ)`.
    pub residual: f64,
}

enum SeriesVerdict {
    GreaterThanOne,
    AtMostOne { partial: f64, tail: f64 },
    Undecided { partial: f64, tail: f64 },
}

/// Solver with a per-α memo of `log u_t` (shared across bisection steps).
///
/// Truncation discipline: a partial sum (or any single term) crossing one
/// certifies `F(x) > 1` even where the series diverges. Certifying
/// `F(x) ≤ 1` needs a tail bound, built from the term-log increments
/// `d(t) = log(term_{t+1}/term_t)`. Beyond the tabular heads every generator
/// has monotone increments, so `d` approaches its tier limit
/// `d_∞ = log(x/κ)` (or `−∞` when `κ = +∞`) with at most one interior hump;
/// consequently the future ratio is bounded by `e^{max(d, d_∞)}` once `d` is
/// observed non-increasing, and by `e^{d_∞}` when it increases toward a
/// negative limit. The only regime without a sound geometric bound is
/// `x = κ` with `d` increasing toward zero (polynomially decaying terms);
/// there the tail is an explicit *estimate* with a safety factor, and a sum
/// that cannot be separated from one is reported as undecided, never
/// rounded.
struct RhoSolver<'a> {
    pair: &'a RenewalPair,
    alpha: f64,
    kappa: f64,
    log_u: Vec<f64>,
    /// ignore increment heuristics below this index (tabular heads)
    settle_from: u64,
}

impl<'a> RhoSolver<'a> {
    fn new(pair: &'a RenewalPair, alpha: f64) -> Self {
        let kappa = pair.kappa(alpha);
        let settle_from = (pair.gamma.head_len().max(pair.gamma_hat.head_len()) as u64) + 4;
        RhoSolver {
            pair,
            alpha,
            kappa,
            log_u: Vec::new(),
            settle_from,
        }
    }

    fn log_u(&mut self, t: u64) -> f64 {
        while self.log_u.len() <= t as usize {
            let n = self.log_u.len() as u64;
            self.log_u.push(self.pair.log_u(n, self.alpha));
        }
        self.log_u[t as usize]
    }

    /// A valid future-ratio exponent, or `None` in the estimate-only regime.
    ///
    /// `concave` counts consecutive steps with non-increasing `d`. A concave,
    /// decreasing term-log cannot resurge for any reachable input (the top
    /// growth tier is non-positive whenever `κ > 0`, and a positive tier
    /// would have crossed 1 instead), so `e^d` bounds all future ratios.
    /// With a finite `κ` the increments converge monotonically to
    /// `d_∞ = log(x/κ)`, which bounds a convex (increasing-`d`) approach.
    fn ratio_bound(&self, x: f64, d: f64, concave: u32) -> Option<f64> {
        if d.is_nan() || d >= -1e-12 {
            return None;
        }
        if self.kappa.is_finite() {
            let d_inf = if x < self.kappa {
                (x / self.kappa).ln()
            } else {
                0.0
            };
            if concave >= 16 || d_inf < -1e-12 {
                return Some(d.max(d_inf).min(-1e-15));
            }
            None
        } else if concave >= 16 {
            Some(d)
        } else {
            None
        }
    }

    /// Evaluate `F(x) = x·U_α(x)` far enough to compare against 1.
    fn eval(&mut self, x: f64) -> SeriesVerdict {
        if x <= 0.0 {
            return SeriesVerdict::AtMostOne {
                partial: 0.0,
                tail: 0.0,
            };
        }
        let lx = x.ln();
        let rel_tol = self.pair.rel_tol;
        let max_terms = self.pair.max_terms;
        let mut partial = 0.0f64;
        let mut prev_lt = f64::NAN;
        let mut prev_d = f64::NAN;
        let mut concave = 0u32;
        let mut consec_small = 0u32;
        for t in 0..max_terms {
            let lt = self.log_u(t) + (t as f64 + 1.0) * lx;
            if lt > 0.0 {
                return SeriesVerdict::GreaterThanOne;
            }
            let term = lt.exp();
            partial += term;
            if partial > 1.0 {
                return SeriesVerdict::GreaterThanOne;
            }
            let d = lt - prev_lt; // NaN on the first term and along −∞ runs
            concave = if d <= prev_d + 1e-12 { concave + 1 } else { 0 };
            if term <= rel_tol * partial.max(1e-300) && t >= self.settle_from {
                consec_small += 1;
            } else {
                consec_small = 0;
            }
            if consec_small >= 30 {
                if lt == f64::NEG_INFINITY && prev_lt == f64::NEG_INFINITY {
                    // tier saturation: log u is −∞ for every later t
                    return SeriesVerdict::AtMostOne { partial, tail: 0.0 };
                }
                if let Some(rate) = self.ratio_bound(x, d, concave) {
                    let r = rate.exp();
                    let tail = term * r / (1.0 - r);
                    if partial + tail <= 1.0 {
                        return SeriesVerdict::AtMostOne { partial, tail };
                    }
                    if tail <= rel_tol * partial.max(1e-300) {
                        return SeriesVerdict::Undecided { partial, tail };
                    }
                } else if d < -1e-12 && concave == 0 && self.kappa.is_finite() {
                    // at the radius with increasing d: estimate-only tail
                    let r = d.exp();
                    let tail = 8.0 * term * r / (1.0 - r);
                    if partial + tail <= 1.0 && tail <= 1e-9 * partial.max(1e-300) {
                        return SeriesVerdict::AtMostOne { partial, tail };
                    }
                }
            }
            if !d.is_nan() {
                prev_d = d;
            }
            prev_lt = lt;
        }
        let tail = prev_lt.exp();
        if partial + tail <= 1.0 && tail <= 1e-6 * partial.max(1e-300) {
            SeriesVerdict::AtMostOne { partial, tail }
        } else {
            SeriesVerdict::Undecided { partial, tail }
        }
    }

    /// Sum `x·U_α(x)` to convergence or the term cap (no comparison against
    /// 1); used to report residuals and transition diagnostics.
    fn sum(&mut self, x: f64) -> (f64, f64) {
        if x <= 0.0 {
            return (0.0, 0.0);
        }
        let lx = x.ln();
        let mut partial = 0.0f64;
        let mut prev_lt = f64::NAN;
        let mut prev_d = f64::NAN;
        let mut concave = 0u32;
        let mut consec_small = 0u32;
        for t in 0..self.pair.max_terms {
            let lt = self.log_u(t) + (t as f64 + 1.0) * lx;
            let term = lt.exp();
            if !term.is_finite() {
                return (f64::INFINITY, 0.0);
            }
            partial += term;
            if partial > 1e12 {
                return (partial, 0.0);
            }
            let d = lt - prev_lt;
            concave = if d <= prev_d + 1e-12 { concave + 1 } else { 0 };
            if term <= self.pair.rel_tol * partial.max(1e-300) && t >= self.settle_from {
                consec_small += 1;
            } else {
                consec_small = 0;
            }
            if consec_small >= 30 {
                if lt == f64::NEG_INFINITY && prev_lt == f64::NEG_INFINITY {
                    return (partial, 0.0);
                }
                let tail = match self.ratio_bound(x, d, concave) {
                    Some(rate) => {
                        let r = rate.exp();
                        Some(term * r / (1.0 - r))
                    }
                    None if d < -1e-12 && concave == 0 && self.kappa.is_finite() => {
                        let r = d.exp();
                        Some(8.0 * term * r / (1.0 - r))
                    }
                    None => None,
                };
                if let Some(tail) = tail {
                    if tail <= self.pair.rel_tol * partial.max(1e-300) * 8.0 {
                        return (partial, tail);
                    }
                }
            }
            if !d.is_nan() {
                prev_d = d;
            }
            prev_lt = lt;
        }
        (partial, prev_lt.exp())
    }
}

/// Solve `ρ(α) = sup{x ≥ 0 : x·U_α(x) ≤ 1}` by bisection.
pub fn rho_solve(pair: &RenewalPair, alpha: f64) -> Result<RhoResult, RenewalError> {
    let kappa = pair.kappa(alpha);
    if kappa == 0.0 {
        return Ok(RhoResult {
            alpha,
            rho: 0.0,
            case: RhoCase::Degenerate,
            kappa,
            q: f64::INFINITY,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut solver = RhoSolver::new(pair, alpha);
    let mut iterations = 0u32;

    // establish the bracket [lo, hi] with F(lo) <= 1 < F(hi)
    let mut lo = 0.0f64;
    let mut hi;
    if kappa.is_finite() {
        match solver.eval(kappa) {
            SeriesVerdict::GreaterThanOne => hi = kappa,
            SeriesVerdict::AtMostOne { partial, tail } => {
                return Ok(RhoResult {
                    alpha,
                    rho: kappa,
                    case: RhoCase::RadiusBound,
                    kappa,
                    q: -kappa.ln(),
                    iterations: 0,
                    residual: 1.0 - (partial + tail),
                });
            }
            SeriesVerdict::Undecided { partial, tail } => {
                return Err(RenewalError::SeriesUndecided {
                    alpha,
                    partial,
                    tail,
                });
            }
        }
    } else {
        let mut x = 1.0f64;
        loop {
            match solver.eval(x) {
                SeriesVerdict::GreaterThanOne => {
                    hi = x;
                    break;
                }
                SeriesVerdict::AtMostOne { .. } => {
                    lo = x;
                    x *= 2.0;
                    iterations += 1;
                    if x > 1e60 {
                        return Err(RenewalError::NoBracket(x));
                    }
                }
                SeriesVerdict::Undecided { partial, tail } => {
                    return Err(RenewalError::SeriesUndecided {
                        alpha,
                        partial,
                        tail,
                    });
                }
            }
        }
    }

    // bisection to relative residual 1e−12 in x (tighter when it comes free)
    while hi - lo > 5e-15 * hi && iterations < 140 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match solver.eval(mid) {
            SeriesVerdict::GreaterThanOne => hi = mid,
            SeriesVerdict::AtMostOne { .. } => lo = mid,
            SeriesVerdict::Undecided { partial, tail } => {
                // best effort: decide by the estimated sum
                if partial + tail <= 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        iterations += 1;
    }
    let rho = lo.max(0.5 * (lo + hi));
    let (case, residual) = if kappa.is_finite() && kappa - rho <= 4e-12 * kappa.max(1.0) {
        let (partial, _) = solver.sum(kappa);
        (RhoCase::RadiusBound, 1.0 - partial)
    } else {
        let (partial, _) = solver.sum(rho);
        (RhoCase::RootOfXU, (partial - 1.0).abs())
    };
    let rho = if case == RhoCase::RadiusBound {
        kappa
    } else {
        rho
    };
    Ok(RhoResult {
        alpha,
        rho,
        case,
        kappa,
        q: -rho.ln(),
        iterations,
        residual,
    })
}

/// Analytic `ρ′(α)` in the interior-root case:
/// `ρ′ = −(Σ_n ∂_α u_n ρ^{n+1}) / (Σ_n u_n (n+1) ρ^n)`, with
/// `∂_α u_n = u_n · (log(1−g(n+1)) − log(1−ĝ(n+1)) − γ(n) + γ̂(n))`.
/// In the radius-bound case `ρ′ = κ′`.
pub fn rho_prime(pair: &RenewalPair, point: &RhoResult) -> Result<f64, RenewalError> {
    match point.case {
        RhoCase::Degenerate => Err(RenewalError::DerivativeDegenerate { alpha: point.alpha }),
        RhoCase::RadiusBound => {
            // κ(α) = e^{(α+1)s − α ŝ} on the linear tier: κ′ = κ·(s − ŝ)
            let s = pair.gamma.tiers().lin;
            let sh = pair.gamma_hat.tiers().lin;
            Ok(point.kappa * (s - sh))
        }
        RhoCase::RootOfXU => {
            let rho = point.rho;
            let lrho = rho.ln();
            // both series converge strictly inside the radius
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            let mut settled = 0u32;
            let mut converged = false;
            for t in 0..pair.max_terms {
                let lu = pair.log_u(t, point.alpha);
                let base = (lu + (t as f64) * lrho).exp();
                if !base.is_finite() {
                    return Err(RenewalError::DerivativeAtTransition { alpha: point.alpha });
                }
                let dn = pair.dlog_u(t);
                let num_term = base * rho * dn;
                let den_term = base * (t as f64 + 1.0);
                num += num_term;
                den += den_term;
                let small = num_term.abs() <= 1e-16 * num.abs().max(1e-300)
                    && den_term <= 1e-16 * den.max(1e-300);
                settled = if small { settled + 1 } else { 0 };
                if settled >= 30 && t >= 8 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(RenewalError::DerivativeAtTransition { alpha: point.alpha });
            }
            Ok(-num / den)
        }
    }
}

/// `q′(α) = −ρ′(α)/ρ(α)` away from transitions.
pub fn q_prime(pair: &RenewalPair, point: &RhoResult) -> Result<f64, RenewalError> {
    let rp = rho_prime(pair, point)?;
    Ok(-rp / point.rho)
}

/// A solved pressure curve: per-point results plus derivative samples where
/// the analytic formula applies (`None` at degenerate points or detected
/// transitions).
#[derive(Debug, Clone, Serialize)]
pub struct QCurve {
    pub points: Vec<RhoResult>,
    pub dq: Vec<Option<f64>>,
}

/// Solve the curve on a sorted grid.
pub fn q_curve(pair: &RenewalPair, alphas: &[f64]) -> Result<QCurve, RenewalError> {
    let mut points = Vec::with_capacity(alphas.len());
    for &a in alphas {
        points.push(rho_solve(pair, a)?);
    }
    let dq = points.iter().map(|p| q_prime(pair, p).ok()).collect();
    Ok(QCurve { points, dq })
}

/// Locate a case transition `α*` (root collides with the radius) inside
/// `[lo, hi]` by bisection on the sign of `κ(α)·U_α(κ(α)) − 1`. Requires a
/// finite positive `κ` on the bracket and opposite cases at the ends.
pub fn locate_case_transition(
    pair: &RenewalPair,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, RenewalError> {
    let sign_at = |alpha: f64| -> Result<bool, RenewalError> {
        let kappa = pair.kappa(alpha);
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(RenewalError::KappaNotFinite { alpha, kappa });
        }
        let mut solver = RhoSolver::new(pair, alpha);
        Ok(match solver.eval(kappa) {
            SeriesVerdict::GreaterThanOne => true, // case (a): crosses inside
            SeriesVerdict::AtMostOne { .. } => false,
            // sums that cannot be certified sit essentially on the boundary;
            // classify by the best-effort partial
            SeriesVerdict::Undecided { partial, tail } => partial + tail > 1.0,
        })
    };
    let s_lo = sign_at(lo)?;
    let s_hi = sign_at(hi)?;
    if s_lo == s_hi {
        return Err(RenewalError::NoTransition { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if sign_at(mid)? == s_lo {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Renewal recursion `r_t(α) = Σ_{k=0}^{t−1} u_k(α) r_{t−1−k}(α) + u_t(α)`,
/// with `r_0 = u_0`.
pub fn renewal_recursion(pair: &RenewalPair, t_max: usize, alpha: f64) -> Vec<f64> {
    let u: Vec<f64> = (0..=t_max as u64)
        .map(|t| pair.u_coefficient(t, alpha))
        .collect();
    let mut r = Vec::with_capacity(t_max + 1);
    r.push(u[0]);
    for t in 1..=t_max {
        let mut s = u[t];
        for k in 0..t {
            s += u[k] * r[t - 1 - k];
        }
        r.push(s);
    }
    r
}

/// Brute-force `r_t(α) = Σ_{w∈Ω_t} ζ_{t,α}(w)` with
/// `p_t(w) = P_{t+2}(awa)/P_1(a)` evaluated through the measures module, and
/// the renewal recursion, compared over `t ≤ t_max`.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalValidation {
    pub t_max: usize,
    pub alpha: f64,
    /// max over `t ≤ t_max` of `|brute − recursion| / recursion`
    pub max_rel_defect: f64,
    /// max relative defect of `ζ(uav) = ζ(u)ζ(v)` over all splits
    pub max_split_defect: f64,
}

pub fn validate_renewal(
    pair: &RenewalPair,
    t_max: usize,
    alpha: f64,
    budget: Budget,
) -> Result<RenewalValidation, RenewalError> {
    budget.check(2, t_max + 2)?;
    let m = MeasureSpec::hidden_renewal(pair.gamma.clone(), 1e-15).map_err(Box::new)?;
    let mh = MeasureSpec::hidden_renewal(pair.gamma_hat.clone(), 1e-15).map_err(Box::new)?;

    // log ζ_{t,α}(w) via the measures module
    let log_zeta = |w: &[u16]| -> Result<f64, RenewalError> {
        let lp = log_p_t(&m, w)?;
        let lph = log_p_t(&mh, w)?;
        Ok((alpha + 1.0) * lp - alpha * lph)
    };

    let rec = renewal_recursion(pair, t_max, alpha);
    let mut max_rel = 0.0f64;
    let mut zeta_by_t: Vec<Vec<f64>> = Vec::with_capacity(t_max + 1);
    for (t, &rec_t) in rec.iter().enumerate() {
        let mut words_zeta = Vec::with_capacity(1usize << t);
        let mut err: Option<RenewalError> = None;
        for_each_word(2, t, |w| {
            if err.is_some() {
                return;
            }
            match log_zeta(w) {
                Ok(lz) => words_zeta.push(lz),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let brute: f64 = words_zeta.iter().map(|lz| lz.exp()).sum();
        let rel = (brute - rec_t).abs() / rec_t.abs().max(1e-300);
        max_rel = max_rel.max(rel);
        zeta_by_t.push(words_zeta);
    }

    // multiplicativity across every split at an interior letter 'a'
    let mut max_split = 0.0f64;
    for t in 1..=t_max {
        let mut idx = 0usize;
        let mut defect = 0.0f64;
        for_each_word(2, t, |w| {
            let lz = zeta_by_t[t][idx];
            idx += 1;
            for i in 0..t {
                if w[i] == 0 {
                    // w = u a v
                    let lu = zeta_lookup(&zeta_by_t, &w[..i]);
                    let lv = zeta_lookup(&zeta_by_t, &w[i + 1..]);
                    let rel = ((lu + lv) - lz).abs();
                    defect = defect.max((rel.exp() - 1.0).abs());
                }
            }
        });
        max_split = max_split.max(defect);
    }

    Ok(RenewalValidation {
        t_max,
        alpha,
        max_rel_defect: max_rel,
        max_split_defect: max_split,
    })
}

fn zeta_lookup(zeta_by_t: &[Vec<f64>], w: &[u16]) -> f64 {
    zeta_by_t[w.len()][crate::symbolic::index_of_word(2, w) as usize]
}

/// `log p_t(w) = log P_{t+2}(awa) − log P_1(a)` over the binary alphabet.
fn log_p_t(m: &MeasureSpec, w: &[u16]) -> Result<f64, RenewalError> {
    use crate::symbolic::Word;
    let mut awa = Vec::with_capacity(w.len() + 2);
    awa.push(0u16);
    awa.extend_from_slice(w);
    awa.push(0u16);
    let num = m
        .log_marginal(&Word::from_slice(2, &awa))
        .map_err(Box::new)?;
    let den = m
        .log_marginal(&Word::from_slice(2, &[0u16]))
        .map_err(Box::new)?;
    Ok(num - den)
}
