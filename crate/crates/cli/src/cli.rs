//! Argument parsing.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "tfelab",
    version,
    about = "Experiments for the thin-film equation u_t = -(phi(u) u_xxx)_x and its n -> 0 limit u_t = -u_xxxx",
    long_about = None
)]
pub struct Cli {
    /// Output directory for data files and manifest.json.
    #[arg(long, global = true, env = "TFELAB_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for parallel sweeps (0: all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML parameter file; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the kernel F(y) = (1/pi) int_0^inf exp(-xi^4) cos(xi y) dxi,
    /// which solves F'''' = (y F)' / 4 with F(0) = Gamma(5/4)/pi.
    Kernel(ConfigArg),
    /// Evolve u_t = -(phi(u) u_xxx)_x and track mass int u dx and the
    /// energy identity d/dt (1/2) int u_x^2 dx = -int phi(u) u_xxx^2 dx.
    Simulate(ConfigArg),
    /// err0(n) = |u_{eps(n),n}(t) - w(t)|_inf along a ladder n -> 0, where
    /// w = F_t * u0 solves w_t = -w_xxxx and eps(n) = exp(-1/sqrt(n)) by default.
    Homotopy(ConfigArg),
    /// err1(n) / n with err1 = |u - w - n phi1|_inf and
    /// phi1(t) = -int_0^t F_{t-s} ** (ln|w| w_xxx)_x ds.
    Branching(ConfigArg),
    /// Periodic orbit of phi''' = |phi|^(-n) phi - a2 phi'' - a1 phi' - a0 phi
    /// with mu = 3/n and a_k from (mu - d/ds - ...) expansion of x^mu phi(ln x).
    Orbit(ConfigArg),
    /// Track the orbit period over n and fit period = A - B ln(n_h - n).
    Scan(ConfigArg),
    /// Riemann data u0 = chi_pm |x|^(4/n): separable profile C|y|^(4/n) with
    /// C^n P(4/n) = -1, blow-up fit sup|u| ~ (T - t)^(-1/n), and interface
    /// data x^(3/n) phi*(ln x + (n/3) ln eps).
    Riemann(ConfigArg),
    /// Weak-form residual int int (u phi_t + phi(u) u_xxx phi_x) dx dt split into
    /// the eps term and the bad set {|u| < delta}.
    Sweep(ConfigArg),
    /// Rerun a manifest and compare every listed output.
    Reproduce {
        /// Path to a manifest.json written by a previous run.
        manifest: PathBuf,
    },
}

impl Command {
    /// Subcommand name and config path for experiment commands.
    pub fn experiment(&self) -> Option<(&'static str, Option<&PathBuf>)> {
        let (name, arg) = match self {
            Command::Kernel(a) => ("kernel", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Homotopy(a) => ("homotopy", a),
            Command::Branching(a) => ("branching", a),
            Command::Orbit(a) => ("orbit", a),
            Command::Scan(a) => ("scan", a),
            Command::Riemann(a) => ("riemann", a),
            Command::Sweep(a) => ("sweep", a),
            Command::Reproduce { .. } => return None,
        };
        Some((name, arg.config.as_ref()))
    }
}

pub fn command() -> clap::Command {
    <Cli as clap::CommandFactory>::command()
}
