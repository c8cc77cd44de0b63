//! Finite-time large-deviation machinery for shift-invariant measures on
//! finite-alphabet shift spaces.
//!
//! Everything here is computed at a *finite* horizon `t`. Limits are never
//! extrapolated: identities that hold exactly at every finite `t` (the
//! Gallavotti–Cohen pressure symmetry, the transient fluctuation relation, the
//! Level-3 entropy balance) are checked exactly, while genuinely asymptotic
//! quantities are either reported per-`t` or, for the hidden Markov renewal
//! family, computed in closed asymptotic form through a renewal power series
//! whose radius of convergence is found by bisection.
//!
//! The crate is organized around the measure zoo in [`measures`]:
//!
//! * [`symbolic`] — alphabets, words, deterministic enumeration of `Ω_t`, and
//!   the involutions `θ_t` (letterwise or reversal) used to time-reverse a
//!   measure.
//! * [`measures`] — exact log-marginals `w ↦ log P_t(w)` for Bernoulli,
//!   Markov, matrix-product, hidden-renewal, uniform, `Θ`-lifted and
//!   product-pair measures, plus seeded samplers.
//! * [`decoupling`] — brute-force verifiers for the selective lower (SLD),
//!   upper (UD) and selective symmetric (SSD) decoupling hypotheses, returning
//!   the best achievable constant and a witness table.
//! * [`coupling`] — the block-gluing map `ψ_{n,t}` that compares the
//!   `n`-decoupled measure with the true one, with enumeration certificates.
//! * [`ldp`] — finite-`t` pressures, Fenchel–Legendre transforms, fluctuation
//!   identities, the Chernoff exponent, and a Monte Carlo rare-event probe.
//! * [`level3`] — block entropies `h_t`, the cross term `ς_t`, relative
//!   entropy rate and the finite-`t` Level-3 fluctuation identity.
//! * [`renewal`] — the exact renewal engine: coefficients `u_t(α)`, the series
//!   `U_α`, the radius `ρ(α)` via bisection, `κ(α)` from declared slope
//!   limits, `q(α) = −log ρ(α)`, the analytic `ρ′(α)`, and six presets.
//!
//! All probability is carried in log domain (`f64`, with `-inf` for mass
//! zero and `+inf` where a pressure genuinely diverges).
//!
//! ```
//! use shiftld::measures::MeasureSpec;
//! use shiftld::symbolic::{Alphabet, Word};
//!
//! let m = MeasureSpec::uniform(Alphabet::binary());
//! let w = Word::parse(&Alphabet::binary(), "abb").unwrap();
//! let lp = m.log_marginal(&w).unwrap();
//! assert!((lp - (1.0f64 / 8.0).ln()).abs() < 1e-15);
//! ```

#![forbid(unsafe_code)]

pub mod coupling;
pub mod decoupling;
pub mod guide;
pub mod ldp;
pub mod level3;
pub mod measures;
pub mod renewal;
pub mod report;
pub mod symbolic;

/// Enumeration budget guard: operations that enumerate `Ω_t` refuse to start
/// when `A^t` exceeds `max_words`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_words: u64,
}

impl Default for Budget {
    fn default() -> Self {
        // A^t <= 2^24 keeps every brute-force pass desk-scale.
        Budget { max_words: 1 << 24 }
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget {
            max_words: u64::MAX,
        }
    }

    /// `A^t` if it fits the budget.
    pub fn check(&self, alphabet_size: usize, t: usize) -> Result<u64, BudgetError> {
        let mut n: u64 = 1;
        for _ in 0..t {
            n = n
                .checked_mul(alphabet_size as u64)
                .filter(|&n| n <= self.max_words)
                .ok_or(BudgetError {
                    alphabet_size,
                    t,
                    max_words: self.max_words,
                })?;
        }
        Ok(n)
    }
}

/// Raised when an enumeration would exceed the configured budget.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("enumeration budget exceeded: {alphabet_size}^{t} > {max_words}")]
pub struct BudgetError {
    pub alphabet_size: usize,
    pub t: usize,
    pub max_words: u64,
}
