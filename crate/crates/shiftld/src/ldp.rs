//! Finite-`t` pressures, Fenchel–Legendre transforms, exact fluctuation
//! identities, the Chernoff exponent, and a Monte Carlo rare-event probe.
//!
//! Pressure values carry their horizon `t` and are never extrapolated. Two
//! finite-`t` identities are *exact* (not asymptotic) whenever `P̂ = ΘP`:
//!
//! * the pressure symmetry `⟨e^{−ασ_t}, P⟩ = ⟨e^{(α−1)σ_t}, P⟩`, and
//! * the transient relation `P(σ_t = v) = e^{v} P(σ_t = −v)`,
//!
//! both consequences of the bijection `θ_t` on the support. The verifiers
//! here check them to floating-point accuracy.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::measures::{MeasureError, MeasureSpec, SamplerState};
use crate::symbolic::{for_each_word, Involution, Symbol, Word};
use crate::Budget;

#[derive(Debug, Clone, Error)]
pub enum LdpError {
    #[error("observable table has {got} rows; alphabet^r = {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("observable entries must be finite")]
    NonFiniteObservable,
    #[error("dimension mismatch: alpha has {alpha} components, observable {d}")]
    DimensionMismatch { alpha: usize, d: usize },
    #[error("absolute continuity violated at word {0}")]
    AbsoluteContinuity(String),
    #[error("support mismatch under the involution at word {0}")]
    SupportMismatch(String),
    #[error("need at least 3 finite curve points, got {0}")]
    TooFewPoints(usize),
    #[error("curve must be finite on [0,1] for the Chernoff exponent (q({0}) is not)")]
    NonFiniteOnUnit(f64),
    #[error("rate functions are computed for scalar observables only (d = {0})")]
    NotScalar(usize),
    #[error("fast path requires a Bernoulli or Markov measure")]
    NoFastPath,
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Budget(#[from] crate::BudgetError),
}

/// A finitely-dependent observable `f : Ω_r → ℝ^d`, tabulated on `Ω_r` in
/// lexicographic order. These are dense in the continuous functions, and make
/// every pressure below exactly computable.
#[derive(Debug, Clone)]
pub struct ObservableSpec {
    alphabet_size: usize,
    r: usize,
    d: usize,
    table: Vec<Vec<f64>>,
}

impl ObservableSpec {
    pub fn new(
        alphabet_size: usize,
        r: usize,
        d: usize,
        table: Vec<Vec<f64>>,
    ) -> Result<Self, LdpError> {
        let expected = alphabet_size.pow(r as u32);
        if table.len() != expected {
            return Err(LdpError::TableSize {
                expected,
                got: table.len(),
            });
        }
        if table
            .iter()
            .any(|v| v.len() != d || v.iter().any(|x| !x.is_finite()))
        {
            return Err(LdpError::NonFiniteObservable);
        }
        Ok(ObservableSpec {
            alphabet_size,
            r,
            d,
            table,
        })
    }

    /// Indicator of one symbol (`r = 1`, `d = 1`).
    pub fn indicator(alphabet_size: usize, symbol: Symbol) -> Self {
        let table = (0..alphabet_size)
            .map(|s| vec![if s == symbol as usize { 1.0 } else { 0.0 }])
            .collect();
        ObservableSpec {
            alphabet_size,
            r: 1,
            d: 1,
            table,
        }
    }

    /// Scalar observable from a flat table over `Ω_r`.
    pub fn scalar(alphabet_size: usize, r: usize, values: Vec<f64>) -> Result<Self, LdpError> {
        Self::new(
            alphabet_size,
            r,
            1,
            values.into_iter().map(|x| vec![x]).collect(),
        )
    }

    pub fn locality(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eval(&self, window: &[Symbol]) -> &[f64] {
        let idx = crate::symbolic::index_of_word(self.alphabet_size, window) as usize;
        &self.table[idx]
    }

    /// `S_{t−r+1} f(w) = Σ_{s=0}^{t−r} f(w_{s+1..s+r})`, zero when `t < r`.
    pub fn birkhoff_sum(&self, w: &[Symbol]) -> Vec<f64> {
        let mut acc = vec![0.0; self.d];
        if w.len() < self.r {
            return acc;
        }
        for s in 0..=(w.len() - self.r) {
            let f = self.eval(&w[s..s + self.r]);
            for (a, &x) in acc.iter_mut().zip(f) {
                *a += x;
            }
        }
        acc
    }

    /// `‖f‖ = max_w |f(w)|₂`.
    pub fn sup_norm(&self) -> f64 {
        self.table
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Streaming log-sum-exp accumulator (deterministic in visit order).
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, term: f64) {
        if term == f64::NEG_INFINITY {
            return;
        }
        if term > self.max {
            self.sum = self.sum * (self.max - term).exp() + 1.0;
            self.max = term;
        } else {
            self.sum += (term - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `(1/t) log ⟨e^{(α, S_{t−r+1}f)}, P⟩`, exact by enumeration.
///
/// For Bernoulli and Markov measures, [`finite_pressure_fast`] computes the
/// same value through the tilted transfer recursion on `(r−1)`-grams.
pub fn finite_pressure(
    m: &MeasureSpec,
    f: &ObservableSpec,
    alpha: &[f64],
    t: usize,
    budget: Budget,
) -> Result<f64, LdpError> {
    if alpha.len() != f.d {
        return Err(LdpError::DimensionMismatch {
            alpha: alpha.len(),
            d: f.d,
        });
    }
    // normalization: q_f(0) = 0 exactly
    if alpha.iter().all(|&a| a == 0.0) {
        return Ok(0.0);
    }
    let a = m.alphabet().size();
    budget.check(a, t)?;
    let mut lse = LogSumExp::new();
    let mut err: Option<LdpError> = None;
    for_each_word(a, t, |w| {
        if err.is_some() {
            return;
        }
        match m.log_marginal_symbols(w) {
            Ok(lp) => {
                if lp == f64::NEG_INFINITY {
                    return;
                }
                let s = f.birkhoff_sum(w);
                lse.add(dot(alpha, &s) + lp);
            }
            Err(e) => err = Some(e.into()),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(lse.value() / t as f64)
}

/// Tilted-transfer fast path for Bernoulli/Markov measures: a recursion over
/// `(r−1)`-gram states, equal to enumeration to 1e−12.
pub fn finite_pressure_fast(
    m: &MeasureSpec,
    f: &ObservableSpec,
    alpha: &[f64],
    t: usize,
) -> Result<f64, LdpError> {
    if alpha.len() != f.d {
        return Err(LdpError::DimensionMismatch {
            alpha: alpha.len(),
            d: f.d,
        });
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Ok(0.0);
    }
    let a = m.alphabet().size();
    // view the measure as (π, P)
    let (pi, trans): (Vec<f64>, Vec<Vec<f64>>) = match m {
        MeasureSpec::Bernoulli { log_p, .. } => {
            let p: Vec<f64> = log_p.iter().map(|&l| l.exp()).collect();
            (p.clone(), vec![p; a])
        }
        MeasureSpec::Uniform { .. } => {
            let p = vec![1.0 / a as f64; a];
            (p.clone(), vec![p; a])
        }
        MeasureSpec::Markov {
            transition,
            stationary,
            ..
        } => (stationary.clone(), transition.clone()),
        _ => return Err(LdpError::NoFastPath),
    };
    let r = f.r;
    if t < r {
        return Ok(0.0); // S_{t−r+1} f = 0 when t < r
    }
    let mut log_scale = 0.0f64;
    let mut rescale = |v: &mut Vec<f64>| -> bool {
        let mx = v.iter().fold(0.0f64, |acc, &x| acc.max(x));
        if mx == 0.0 {
            return false;
        }
        for x in v.iter_mut() {
            *x /= mx;
        }
        log_scale += mx.ln();
        true
    };
    if r == 1 {
        // state = current symbol; every step carries a tilted letter
        let mut v: Vec<f64> = (0..a)
            .map(|x| pi[x] * dot(alpha, f.eval(&[x as Symbol])).exp())
            .collect();
        if !rescale(&mut v) {
            return Ok(f64::NEG_INFINITY);
        }
        for _ in 1..t {
            let mut next = vec![0.0f64; a];
            for (y, nx) in next.iter_mut().enumerate() {
                let tilt = dot(alpha, f.eval(&[y as Symbol])).exp();
                for (vx, row) in v.iter().zip(&trans) {
                    *nx += vx * row[y] * tilt;
                }
            }
            if !rescale(&mut next) {
                return Ok(f64::NEG_INFINITY);
            }
            v = next;
        }
        let total: f64 = v.iter().sum();
        return Ok((total.ln() + log_scale) / t as f64);
    }
    // r ≥ 2: states are (r−1)-grams; v[g] starts as the marginal of the first
    // r−1 symbols and each of the t−r+1 steps appends one tilted symbol
    let nstates = a.pow((r - 1) as u32);
    let mut v = vec![0.0f64; nstates];
    for (g, vg) in v.iter_mut().enumerate() {
        let gram = crate::symbolic::word_at_index(a, r - 1, g as u64);
        let mut p = pi[gram[0] as usize];
        for pair in gram.windows(2) {
            p *= trans[pair[0] as usize][pair[1] as usize];
        }
        *vg = p;
    }
    if !rescale(&mut v) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut window = vec![0 as Symbol; r];
    for _ in 0..=(t - r) {
        let mut next = vec![0.0f64; nstates];
        for (g, &vg) in v.iter().enumerate() {
            if vg == 0.0 {
                continue;
            }
            let gram = crate::symbolic::word_at_index(a, r - 1, g as u64);
            window[..r - 1].copy_from_slice(&gram);
            let row = &trans[gram[r - 2] as usize];
            for (y, &weight) in row.iter().enumerate() {
                if weight == 0.0 {
                    continue;
                }
                window[r - 1] = y as Symbol;
                let tilt = dot(alpha, f.eval(&window)).exp();
                let dest = (crate::symbolic::index_of_word(a, &gram[1..]) as usize) * a + y;
                next[dest] += vg * weight * tilt;
            }
        }
        if !rescale(&mut next) {
            return Ok(f64::NEG_INFINITY);
        }
        v = next;
    }
    let total: f64 = v.iter().sum();
    Ok((total.ln() + log_scale) / t as f64)
}

/// Entropy-production pressure at finite `t`:
/// `(1/t) log Σ_{w∈Ω_t⁺} P(w)^{1+α} P̂(w)^{−α}`, with absolute continuity
/// checked on every visited word of positive `P`-mass.
pub fn entropy_pressure(
    p: &MeasureSpec,
    p_hat: &MeasureSpec,
    alpha: f64,
    t: usize,
    budget: Budget,
) -> Result<f64, LdpError> {
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let a = p.alphabet().size();
    budget.check(a, t)?;
    let mut lse = LogSumExp::new();
    let mut err: Option<LdpError> = None;
    for_each_word(a, t, |w| {
        if err.is_some() {
            return;
        }
        let lp = match p.log_marginal_symbols(w) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e.into());
                return;
            }
        };
        if lp == f64::NEG_INFINITY {
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
            err = Some(LdpError::AbsoluteContinuity(
                p.alphabet().format_word(&Word::from_slice(a, w)),
            ));
            return;
        }
        lse.add((1.0 + alpha) * lp - alpha * lph);
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(lse.value() / t as f64)
}

/// A sampled pressure curve; `+∞` entries mark a genuinely divergent point.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PressureCurve {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    /// Horizon for finite-`t` curves; `None` for exact asymptotic curves.
    pub t_used: Option<usize>,
    pub exact: bool,
}

impl PressureCurve {
    pub fn new(alphas: Vec<f64>, values: Vec<f64>, t_used: Option<usize>, exact: bool) -> Self {
        PressureCurve {
            alphas,
            values,
            t_used,
            exact,
        }
    }

    /// Sweep the entropy-production pressure over a grid.
    pub fn entropy_sweep(
        p: &MeasureSpec,
        p_hat: &MeasureSpec,
        alphas: Vec<f64>,
        t: usize,
        budget: Budget,
    ) -> Result<Self, LdpError> {
        let values: Result<Vec<f64>, LdpError> = alphas
            .par_iter()
            .map(|&a| entropy_pressure(p, p_hat, a, t, budget))
            .collect();
        Ok(PressureCurve {
            alphas,
            values: values?,
            t_used: Some(t),
            exact: false,
        })
    }
}

/// A rate function on a grid: `I ≥ 0`, convex, `+∞` where the conjugate is
/// unbounded inside the sampled window.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateFunction {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
}

/// Fenchel–Legendre transform `I(s) = sup_α (αs − q(α))` over the curve's
/// finite points, refined by a quadratic fit through the bracketing triple
/// when the discrete argmax is interior.
///
/// Domain logic: an argmax at the outer edge of the *sampled window* means
/// the supremum is not attained inside it, and `I(s) = +∞` is reported; an
/// argmax at the edge of the *effective domain* (a finite point adjacent to a
/// `+∞` value) is a genuine boundary and yields the finite value there.
pub fn legendre_transform(curve: &PressureCurve, s_grid: &[f64]) -> Result<RateFunction, LdpError> {
    let finite: Vec<(f64, f64)> = curve
        .alphas
        .iter()
        .zip(&curve.values)
        .filter(|(_, &q)| q.is_finite())
        .map(|(&a, &q)| (a, q))
        .collect();
    if finite.len() < 3 {
        return Err(LdpError::TooFewPoints(finite.len()));
    }
    let n = finite.len();
    let mut out = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let (mut best_i, mut best) = (0usize, f64::NEG_INFINITY);
        for (i, &(a, q)) in finite.iter().enumerate() {
            let val = a * s - q;
            if val > best {
                best = val;
                best_i = i;
            }
        }
        // a *strictly* increasing argmax on the outer edge of the sampled
        // window means the sup escapes the window; flat maxima stay finite
        let tol = 1e-12 * best.abs().max(1.0);
        let at_left_edge = best_i == 0
            && finite[0].0 == curve.alphas[0]
            && best > finite[1].0 * s - finite[1].1 + tol;
        let at_right_edge = best_i == n - 1
            && finite[n - 1].0 == *curve.alphas.last().unwrap()
            && best > finite[n - 2].0 * s - finite[n - 2].1 + tol;
        if at_left_edge || at_right_edge {
            out.push(f64::INFINITY);
            continue;
        }
        let refined = if best_i > 0 && best_i < n - 1 {
            quadratic_peak(
                finite[best_i - 1].0,
                finite[best_i - 1].0 * s - finite[best_i - 1].1,
                finite[best_i].0,
                best,
                finite[best_i + 1].0,
                finite[best_i + 1].0 * s - finite[best_i + 1].1,
            )
        } else {
            best
        };
        out.push(refined.max(best));
    }
    Ok(RateFunction {
        s: s_grid.to_vec(),
        i: out,
    })
}

/// Peak of the parabola through three points (falls back to the middle value
/// when the fit is degenerate or the vertex escapes the bracket).
fn quadratic_peak(x0: f64, y0: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let second = (d1 - d0) / (x2 - x0);
    if second >= 0.0 {
        return y1; // not concave around the argmax: keep the grid value
    }
    let xv = 0.5 * (x0 + x1) - d0 / (2.0 * second);
    if xv <= x0 || xv >= x2 {
        return y1;
    }
    // Newton form of the interpolant: p(x) = y0 + d0 (x−x0) + second (x−x0)(x−x1)
    y0 + d0 * (xv - x0) + second * (xv - x0) * (xv - x1)
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Defects of the two exact finite-`t` fluctuation identities for the pair
/// `(P, ΘP)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FluctuationReport {
    pub t: usize,
    /// max over the grid of the relative defect of
    /// `⟨e^{−ασ_t}, P⟩ = ⟨e^{(α−1)σ_t}, P⟩`
    pub gc_defect: f64,
    /// max over achieved values `v` of `σ_t` of
    /// `|log P(σ_t = v) − v − log P(σ_t = −v)|`
    pub transient_defect: f64,
}

pub fn fluctuation_identities(
    p: &MeasureSpec,
    theta: &Involution,
    alpha_grid: &[f64],
    t: usize,
    budget: Budget,
) -> Result<FluctuationReport, LdpError> {
    let a = p.alphabet().size();
    budget.check(a, t)?;
    let p_hat = MeasureSpec::theta_lift(p.clone(), theta.clone())?;

    // one sweep collects σ_t masses and both tilted sums per α
    let mut sigma_mass: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    let mut lse_neg: Vec<LogSumExp> = alpha_grid.iter().map(|_| LogSumExp::new()).collect();
    let mut lse_shift: Vec<LogSumExp> = alpha_grid.iter().map(|_| LogSumExp::new()).collect();
    let mut err: Option<LdpError> = None;
    for_each_word(a, t, |w| {
        if err.is_some() {
            return;
        }
        let lp = match p.log_marginal_symbols(w) {
            Ok(x) => x,
            Err(e) => {
                err = Some(e.into());
                return;
            }
        };
        if lp == f64::NEG_INFINITY {
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
            err = Some(LdpError::SupportMismatch(
                p.alphabet().format_word(&Word::from_slice(a, w)),
            ));
            return;
        }
        // canonicalize −0.0 so the v = 0 class is one bucket
        let sigma = if lp == lph { 0.0 } else { lp - lph };
        *sigma_mass.entry(sigma.to_bits()).or_insert(0.0) += lp.exp();
        for (i, &alpha) in alpha_grid.iter().enumerate() {
            lse_neg[i].add(lp - alpha * sigma);
            lse_shift[i].add(lp + (alpha - 1.0) * sigma);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    let mut gc_defect = 0.0f64;
    for i in 0..alpha_grid.len() {
        let la = lse_neg[i].value();
        let lb = lse_shift[i].value();
        gc_defect = gc_defect.max(((lb - la).exp() - 1.0).abs());
    }

    let mut transient_defect = 0.0f64;
    for (&bits, &mass) in &sigma_mass {
        let v = f64::from_bits(bits);
        if v < 0.0 {
            continue;
        }
        let mirror_key = if v == 0.0 {
            0.0f64.to_bits()
        } else {
            (-v).to_bits()
        };
        match sigma_mass.get(&mirror_key) {
            Some(&mirror) => {
                transient_defect = transient_defect.max((mass.ln() - v - mirror.ln()).abs());
            }
            None => transient_defect = f64::INFINITY,
        }
    }
    Ok(FluctuationReport {
        t,
        gc_defect,
        transient_defect,
    })
}

/// Chernoff exponent of a curve `e(α) = q(−α)` sampled on `[0, 1]`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ChernoffReport {
    pub exponent: f64,
    pub minimizer: f64,
    /// `e(α) = e(1−α)` held on the grid to 1e−9 (then the minimizer is 1/2).
    pub symmetric: bool,
}

pub fn chernoff_exponent(curve: &PressureCurve) -> Result<ChernoffReport, LdpError> {
    let pts: Vec<(f64, f64)> = curve
        .alphas
        .iter()
        .zip(&curve.values)
        .filter(|(&a, _)| (0.0..=1.0).contains(&a))
        .map(|(&a, &e)| (a, e))
        .collect();
    if let Some(&(a, _)) = pts.iter().find(|(_, e)| !e.is_finite()) {
        return Err(LdpError::NonFiniteOnUnit(a));
    }
    if pts.len() < 3 {
        return Err(LdpError::TooFewPoints(pts.len()));
    }
    // symmetry check on mirrored grid points
    let mut symmetric = true;
    for &(a, e) in &pts {
        let mirror = 1.0 - a;
        if let Some(&(_, em)) = pts.iter().find(|(x, _)| (x - mirror).abs() < 1e-12) {
            if (e - em).abs() > 1e-9 {
                symmetric = false;
                break;
            }
        }
    }
    let (mut best_i, mut best) = (0usize, f64::INFINITY);
    for (i, &(_, e)) in pts.iter().enumerate() {
        if e < best {
            best = e;
            best_i = i;
        }
    }
    let (minimizer, exponent) = if symmetric {
        // interpolate e(1/2) from the bracketing points when absent
        let at_half = pts.iter().find(|(a, _)| (a - 0.5).abs() < 1e-12);
        match at_half {
            Some(&(_, e)) => (0.5, e),
            None => (0.5, interp(&pts, 0.5)),
        }
    } else if best_i > 0 && best_i < pts.len() - 1 {
        let (x0, y0) = pts[best_i - 1];
        let (x1, y1) = pts[best_i];
        let (x2, y2) = pts[best_i + 1];
        let refined = -quadratic_peak(x0, -y0, x1, -y1, x2, -y2);
        (pts[best_i].0, refined.min(y1))
    } else {
        (pts[best_i].0, best)
    };
    Ok(ChernoffReport {
        exponent,
        minimizer,
        symmetric,
    })
}

fn interp(pts: &[(f64, f64)], x: f64) -> f64 {
    for w in pts.windows(2) {
        if w[0].0 <= x && x <= w[1].0 {
            let t = (x - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 * (1.0 - t) + w[1].1 * t;
        }
    }
    pts.last().unwrap().1
}

/// One row of the Monte Carlo rare-event probe.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProbeRow {
    pub t: usize,
    pub hits: u64,
    pub samples: u64,
    /// `(1/t) log(hits/n)`; `−∞` when no sample lands in the window.
    pub emp_rate: f64,
    /// `−inf_{[a,b]} I` from the supplied rate function (`nan` when absent).
    pub ref_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Estimate `(1/t) log P(S_t f / t ∈ [a, b])` by direct sampling, with a
/// Wilson interval on the hit probability. Samples are drawn in fixed blocks
/// with worker-derived seeds, so the result is identical at any thread count.
pub fn empirical_ldp_probe(
    m: &MeasureSpec,
    f: &ObservableSpec,
    interval: (f64, f64),
    t_list: &[usize],
    n_samples: u64,
    seed: u64,
    rate: Option<&RateFunction>,
) -> Result<Vec<ProbeRow>, LdpError> {
    if f.d != 1 {
        return Err(LdpError::NotScalar(f.d));
    }
    let (lo, hi) = interval;
    const BLOCK: u64 = 1 << 16;
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let blocks: Vec<(u64, u64)> = {
            let mut v = Vec::new();
            let mut done = 0u64;
            let mut idx = 0u64;
            while done < n_samples {
                let n = BLOCK.min(n_samples - done);
                v.push((idx, n));
                done += n;
                idx += 1;
            }
            v
        };
        let hits: Result<Vec<u64>, LdpError> = blocks
            .par_iter()
            .map(|&(widx, n)| {
                let mut state = SamplerState::derive(seed.wrapping_add(t as u64), widx);
                let mut h = 0u64;
                for _ in 0..n {
                    let w = m.sample_path(t, &mut state)?;
                    let z = f.birkhoff_sum(w.symbols())[0] / t as f64;
                    if z >= lo && z <= hi {
                        h += 1;
                    }
                }
                Ok(h)
            })
            .collect();
        let hits: u64 = hits?.iter().sum();
        let n = n_samples as f64;
        let p_hat = hits as f64 / n;
        let emp_rate = if hits > 0 {
            p_hat.ln() / t as f64
        } else {
            f64::NEG_INFINITY
        };
        // Wilson interval at 95%
        let z = 1.959963984540054f64;
        let denom = 1.0 + z * z / n;
        let center = (p_hat + z * z / (2.0 * n)) / denom;
        let half = (z / denom) * (p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)).sqrt();
        let (p_lo, p_hi) = ((center - half).max(0.0), (center + half).min(1.0));
        let ci_low = if p_lo > 0.0 {
            p_lo.ln() / t as f64
        } else {
            f64::NEG_INFINITY
        };
        let ci_high = if p_hi > 0.0 {
            p_hi.ln() / t as f64
        } else {
            f64::NEG_INFINITY
        };
        let ref_rate = match rate {
            Some(rf) => {
                let inf_i =
                    rf.s.iter()
                        .zip(&rf.i)
                        .filter(|(&s, _)| s >= lo && s <= hi)
                        .map(|(_, &i)| i)
                        .fold(f64::INFINITY, f64::min);
                -inf_i
            }
            None => f64::NAN,
        };
        rows.push(ProbeRow {
            t,
            hits,
            samples: n_samples,
            emp_rate,
            ref_rate,
            ci_low,
            ci_high,
        });
    }
    Ok(rows)
}

/// Draw a deterministic pseudo-random α grid triple and check midpoint
/// convexity and the Lipschitz bound; used by the property suites.
pub fn convexity_defect(
    m: &MeasureSpec,
    f: &ObservableSpec,
    t: usize,
    trials: u32,
    span: f64,
    seed: u64,
    budget: Budget,
) -> Result<(f64, f64), LdpError> {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    use rand::SeedableRng;
    let norm = f.sup_norm();
    let mut worst_convex = f64::NEG_INFINITY;
    let mut worst_lipschitz = f64::NEG_INFINITY;
    for _ in 0..trials {
        let dir: Vec<f64> = (0..f.d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let len = dot(&dir, &dir).sqrt();
        let dir: Vec<f64> = dir.iter().map(|x| x / len).collect();
        let c: f64 = (rng.random::<f64>() * 2.0 - 1.0) * span;
        let h: f64 = rng.random::<f64>() * span * 0.5 + 1e-3;
        let at = |s: f64| -> Result<f64, LdpError> {
            let alpha: Vec<f64> = dir.iter().map(|d| d * s).collect();
            finite_pressure(m, f, &alpha, t, budget)
        };
        let (q0, q1, q2) = (at(c - h)?, at(c)?, at(c + h)?);
        worst_convex = worst_convex.max(q1 - 0.5 * (q0 + q2));
        worst_lipschitz = worst_lipschitz.max(((q2 - q0) / (2.0 * h)).abs() - norm);
    }
    Ok((worst_convex, worst_lipschitz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::Alphabet;
    use approx::assert_relative_eq;

    fn binary() -> Alphabet {
        Alphabet::binary()
    }

    fn uniform() -> MeasureSpec {
        MeasureSpec::uniform(binary())
    }

    fn bern34() -> MeasureSpec {
        MeasureSpec::bernoulli(binary(), vec![0.75, 0.25]).unwrap()
    }

    fn markov() -> MeasureSpec {
        MeasureSpec::markov(binary(), vec![vec![0.9, 0.1], vec![0.5, 0.5]], None).unwrap()
    }

    #[test]
    fn pressure_iid_closed_form() {
        // uniform, indicator of a, α = 1: log((e+1)/2) at every t
        let f = ObservableSpec::indicator(2, 0);
        let expect = ((1.0f64.exp() + 1.0) / 2.0).ln();
        for t in [3usize, 6, 10] {
            let q = finite_pressure(&uniform(), &f, &[1.0], t, Budget::default()).unwrap();
            assert_relative_eq!(q, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn pressure_at_zero_and_constants() {
        let f = ObservableSpec::indicator(2, 0);
        assert_eq!(
            finite_pressure(&markov(), &f, &[0.0], 6, Budget::default()).unwrap(),
            0.0
        );
        // constant observable: q(α) = α·c exactly
        let c = 0.37;
        let fc = ObservableSpec::scalar(2, 1, vec![c, c]).unwrap();
        for alpha in [-2.0, 0.5, 1.5] {
            let q = finite_pressure(&markov(), &fc, &[alpha], 6, Budget::default()).unwrap();
            assert_relative_eq!(q, alpha * c, epsilon = 1e-12);
        }
    }

    #[test]
    fn fast_path_matches_enumeration() {
        let f1 = ObservableSpec::indicator(2, 0);
        let f2 = ObservableSpec::scalar(2, 2, vec![0.3, -1.0, 0.7, 0.1]).unwrap();
        for m in [markov(), bern34()] {
            for f in [&f1, &f2] {
                for alpha in [-1.5, 0.4, 2.0] {
                    for t in [4usize, 7, 10] {
                        let slow = finite_pressure(&m, f, &[alpha], t, Budget::default()).unwrap();
                        let fast = finite_pressure_fast(&m, f, &[alpha], t).unwrap();
                        assert!(
                            (slow - fast).abs() <= 1e-12,
                            "t={t} alpha={alpha}: {slow} vs {fast}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn entropy_pressure_values() {
        // q(0) = 0 exactly
        assert_eq!(
            entropy_pressure(&uniform(), &bern34(), 0.0, 8, Budget::default()).unwrap(),
            0.0
        );
        // q(−1) = (1/t) log P̂(Ω_t⁺) ≤ 0, equality for full support
        let q = entropy_pressure(&uniform(), &bern34(), -1.0, 8, Budget::default()).unwrap();
        assert!(q.abs() <= 1e-12);
        // i.i.d. closed form at α = 1: log Σ_x P(x)² / P̂(x)
        let expect = (0.25f64 * (4.0 / 3.0 + 4.0)).ln();
        for t in [2usize, 5, 8] {
            let q = entropy_pressure(&uniform(), &bern34(), 1.0, t, Budget::default()).unwrap();
            assert_relative_eq!(q, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn entropy_pressure_detects_ac_violation() {
        let degenerate = MeasureSpec::bernoulli(binary(), vec![1.0, 0.0]).unwrap();
        let err = entropy_pressure(&uniform(), &degenerate, 0.5, 3, Budget::default());
        assert!(matches!(err, Err(LdpError::AbsoluteContinuity(_))));
    }

    #[test]
    fn legendre_quadratic_roundtrip() {
        let alphas: Vec<f64> = (0..=1000).map(|i| -5.0 + 0.01 * i as f64).collect();
        let values: Vec<f64> = alphas.iter().map(|a| a * a / 2.0).collect();
        let curve = PressureCurve::new(alphas, values, None, true);
        let rf = legendre_transform(&curve, &[1.0]).unwrap();
        assert!((rf.i[0] - 0.5).abs() <= 1e-4, "I(1) = {}", rf.i[0]);
    }

    #[test]
    fn legendre_linear_domain_logic() {
        let alphas: Vec<f64> = (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect();
        let c = 0.3;
        let values: Vec<f64> = alphas.iter().map(|a| c * a).collect();
        let curve = PressureCurve::new(alphas, values, None, true);
        let rf = legendre_transform(&curve, &[c, c + 1.0, c - 1.0]).unwrap();
        assert!(rf.i[0].abs() <= 1e-9, "I(c) = {}", rf.i[0]);
        assert_eq!(rf.i[1], f64::INFINITY);
        assert_eq!(rf.i[2], f64::INFINITY);
    }

    #[test]
    fn legendre_effective_domain_boundary_is_finite() {
        // q = +∞ on α > 0: the conjugate flattens to −q(0) for large s
        // instead of blowing up
        let alphas: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let values: Vec<f64> = alphas
            .iter()
            .map(|&a| if a > 0.0 { f64::INFINITY } else { a * a })
            .collect();
        let curve = PressureCurve::new(alphas, values, None, true);
        let rf = legendre_transform(&curve, &[10.0]).unwrap();
        assert!(rf.i[0].is_finite());
        assert!(rf.i[0].abs() <= 1e-9, "I(10) = {}", rf.i[0]);
    }

    #[test]
    fn legendre_needs_three_points() {
        let curve = PressureCurve::new(vec![0.0, 1.0], vec![0.0, 1.0], None, true);
        assert!(matches!(
            legendre_transform(&curve, &[0.5]),
            Err(LdpError::TooFewPoints(2))
        ));
    }

    #[test]
    fn entropy_curve_rate_function_properties() {
        // I >= 0, convex on the grid, and min_s I <= 1e-6 when q(0) = 0
        let t = 8usize;
        let alphas: Vec<f64> = (0..=80).map(|i| -2.0 + 0.05 * i as f64).collect();
        let values: Vec<f64> = alphas
            .iter()
            .map(|&a| entropy_pressure(&uniform(), &bern34(), a, t, Budget::default()).unwrap())
            .collect();
        let curve = PressureCurve::new(alphas, values, Some(t), false);
        let s_grid: Vec<f64> = (0..=100).map(|i| -0.6 + 0.012 * i as f64).collect();
        let rf = legendre_transform(&curve, &s_grid).unwrap();
        let finite: Vec<f64> = rf.i.iter().copied().filter(|i| i.is_finite()).collect();
        assert!(finite.iter().all(|&i| i >= -1e-12));
        assert!(finite.iter().copied().fold(f64::INFINITY, f64::min) <= 1e-6);
        for w in rf.i.windows(3) {
            if w.iter().all(|i| i.is_finite()) {
                assert!(w[1] <= 0.5 * (w[0] + w[2]) + 1e-9);
            }
        }
    }

    #[test]
    fn fluctuation_identities_markov() {
        let theta = Involution::reversal(2);
        let grid: Vec<f64> = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let r = fluctuation_identities(&markov(), &theta, &grid, 10, Budget::default()).unwrap();
        assert!(r.gc_defect <= 1e-12, "gc = {}", r.gc_defect);
        assert!(r.transient_defect <= 1e-10, "tr = {}", r.transient_defect);
    }

    #[test]
    fn fluctuation_reversible_measure_is_flat() {
        // reversible P with pure reversal: σ_t ≡ 0 and all mass at 0
        let pair = crate::renewal::RenewalPair::preset(1).unwrap();
        let m = MeasureSpec::hidden_renewal(pair.gamma.clone(), 1e-15).unwrap();
        let theta = Involution::reversal(2);
        let r = fluctuation_identities(&m, &theta, &[-1.0, 0.5], 6, Budget::default()).unwrap();
        assert!(r.gc_defect <= 1e-12);
        assert!(r.transient_defect <= 1e-12);
    }

    #[test]
    fn chernoff_symmetric_and_flat_cases() {
        // P = P̂: e ≡ 0
        let alphas: Vec<f64> = (0..=20).map(|i| 0.05 * i as f64).collect();
        let curve = PressureCurve::new(alphas.clone(), vec![0.0; 21], Some(6), false);
        let r = chernoff_exponent(&curve).unwrap();
        assert_eq!(r.exponent, 0.0);
        assert!(r.symmetric);
        assert_eq!(r.minimizer, 0.5);

        // symmetric non-flat curve: minimizer pinned at 1/2
        let values: Vec<f64> = alphas.iter().map(|a| (a - 0.5) * (a - 0.5)).collect();
        let curve = PressureCurve::new(alphas, values, Some(6), false);
        let r = chernoff_exponent(&curve).unwrap();
        assert!(r.symmetric);
        assert_eq!(r.minimizer, 0.5);
        assert!(r.exponent.abs() <= 1e-12);
    }

    #[test]
    fn chernoff_iid_pair_closed_form() {
        // e(α) = q(−α) for (uniform, Bernoulli(3/4,1/4)):
        // single-letter closed form min_α log Σ_x P(x)^{1−α} P̂(x)^α
        let p = uniform();
        let ph = bern34();
        let t = 12;
        let alphas: Vec<f64> = (0..=100).map(|i| 0.01 * i as f64).collect();
        let values: Result<Vec<f64>, LdpError> = alphas
            .iter()
            .map(|&a| entropy_pressure(&p, &ph, -a, t, Budget::default()))
            .collect();
        let curve = PressureCurve::new(alphas, values.unwrap(), Some(t), false);
        let r = chernoff_exponent(&curve).unwrap();
        let scalar = |a: f64| (0.5f64.powf(1.0 - a) * (0.75f64.powf(a) + 0.25f64.powf(a))).ln();
        let (_, expect) = golden_section_max(|a| -scalar(a), 0.0, 1.0, 1e-10);
        assert!(
            (r.exponent - (-expect)).abs() <= 1e-6,
            "{} vs {}",
            r.exponent,
            -expect
        );
        assert!(!r.symmetric);
    }

    #[test]
    fn probe_matches_exact_binomial() {
        // frozen oracle: (1/t) log P(Bin(t,1/2) ≥ 0.7 t) at t = 20
        // Σ_{j=0}^{6} C(20,j) = 60460, so the rate is log(60460/2^20)/20
        let oracle20 = (60460.0f64 / (1u64 << 20) as f64).ln() / 20.0;
        let f = ObservableSpec::indicator(2, 0);
        let rows =
            empirical_ldp_probe(&uniform(), &f, (0.7, 1.0), &[20], 200_000, 42, None).unwrap();
        let r = &rows[0];
        assert!(r.hits > 0);
        assert!(
            (r.emp_rate - oracle20).abs() <= 0.01,
            "emp {} vs oracle {oracle20}",
            r.emp_rate
        );
        assert!(r.ci_low <= r.emp_rate && r.emp_rate <= r.ci_high);
    }

    #[test]
    fn probe_zero_hits_is_reported_not_fatal() {
        let m = MeasureSpec::bernoulli(binary(), vec![1.0, 0.0]).unwrap();
        let f = ObservableSpec::indicator(2, 1); // counts the never-seen symbol
        let rows = empirical_ldp_probe(&m, &f, (0.5, 1.0), &[10], 1000, 1, None).unwrap();
        assert_eq!(rows[0].hits, 0);
        assert_eq!(rows[0].emp_rate, f64::NEG_INFINITY);
    }

    #[test]
    fn probe_mean_window_rate_vanishes() {
        let f = ObservableSpec::indicator(2, 0);
        let rows =
            empirical_ldp_probe(&uniform(), &f, (0.4, 0.6), &[64], 100_000, 3, None).unwrap();
        // the window contains the mean, so the rate is ~0
        assert!(rows[0].emp_rate.abs() <= 0.02, "{}", rows[0].emp_rate);
    }

    #[test]
    fn probe_thread_invariance() {
        // fixed blocks with derived seeds: the outcome is a pure function of
        // (seed, t, n), independent of the worker schedule
        let f = ObservableSpec::indicator(2, 0);
        let a = empirical_ldp_probe(&uniform(), &f, (0.7, 1.0), &[12], 70_000, 5, None).unwrap();
        let b = empirical_ldp_probe(&uniform(), &f, (0.7, 1.0), &[12], 70_000, 5, None).unwrap();
        assert_eq!(a[0].hits, b[0].hits);
        assert_eq!(a[0].emp_rate.to_bits(), b[0].emp_rate.to_bits());
    }

    #[test]
    fn vector_observable_with_constant_component() {
        // second component constant c: q(a1, a2) = q_f1(a1) + a2 * c
        let c = 0.4;
        let f2 = ObservableSpec::new(2, 1, 2, vec![vec![1.0, c], vec![0.0, c]]).unwrap();
        let f1 = ObservableSpec::indicator(2, 0);
        let m = markov();
        for (a1, a2) in [(0.7, -1.2), (-0.5, 2.0)] {
            let q2 = finite_pressure(&m, &f2, &[a1, a2], 6, Budget::default()).unwrap();
            let q1 = finite_pressure(&m, &f1, &[a1], 6, Budget::default()).unwrap();
            assert!(
                (q2 - (q1 + a2 * c)).abs() <= 1e-12,
                "{q2} vs {}",
                q1 + a2 * c
            );
        }
    }

    #[test]
    fn budget_guard_refuses_large_enumerations() {
        let f = ObservableSpec::indicator(2, 0);
        let tight = crate::Budget { max_words: 16 };
        assert!(matches!(
            finite_pressure(&markov(), &f, &[1.0], 10, tight),
            Err(LdpError::Budget(_))
        ));
        assert!(matches!(
            entropy_pressure(&uniform(), &bern34(), 0.5, 10, tight),
            Err(LdpError::Budget(_))
        ));
    }

    #[test]
    fn pressure_convex_and_lipschitz() {
        let f = ObservableSpec::scalar(2, 2, vec![0.3, -1.0, 0.7, 0.1]).unwrap();
        for t in [6usize, 10] {
            let (convex, lips) =
                convexity_defect(&markov(), &f, t, 20, 2.0, 11, Budget::default()).unwrap();
            assert!(convex <= 1e-9, "t={t}: midpoint excess {convex}");
            assert!(lips <= 1e-9, "t={t}: Lipschitz excess {lips}");
        }
    }
}
