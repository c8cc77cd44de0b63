//! Flag surface. One config file, one subcommand per invocation; sweeps live
//! in flags, and flags override config values.

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "shiftld",
    version,
    about = "Finite-time large-deviation toolkit for measures on shift spaces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// INI-style run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Artifact path (CSV or JSON); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha_min: Option<f64>,

    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha_max: Option<f64>,

    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha_step: Option<f64>,

    /// Horizon t.
    #[arg(long, global = true)]
    pub t: Option<usize>,

    #[arg(long, global = true)]
    pub t_max: Option<usize>,

    /// Insert-length budget τ.
    #[arg(long, global = true)]
    pub tau: Option<usize>,

    /// Longest right word v in decoupling certificates.
    #[arg(long, global = true)]
    pub v_max: Option<usize>,

    /// Renewal preset 1..=6 for `hmc`.
    #[arg(long, global = true)]
    pub example: Option<u8>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true)]
    pub samples: Option<u64>,

    /// Worker threads (0 = available parallelism). `--threads 1` reproduces
    /// parallel output bit-exactly.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Tolerance override for contract checks.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tol: Option<f64>,

    /// Decoupling kind: sld | ud | ssd.
    #[arg(long, global = true)]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Pressure sweep over α: finite-t observable pressure, or the
    /// entropy-production pressure when a hat measure is configured.
    Pressure,
    /// Pressure sweep followed by the Fenchel–Legendre transform.
    Rate,
    /// SLD/UD/SSD certificate at one horizon.
    Decoupling,
    /// Block-gluing certificate and compatibility defects.
    PsiCheck,
    /// Exact finite-t fluctuation identities for P and its Θ-lift.
    FrCheck,
    /// Block entropy rates per t, plus the Level-3 identity when an
    /// involution is configured.
    Level3,
    /// Chernoff exponent of the pair (measure, hat measure).
    Chernoff,
    /// Renewal engine sweep: alpha,rho,kappa,q.
    Hmc,
    /// Monte Carlo rare-event probe.
    Probe,
}
