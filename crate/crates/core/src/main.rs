use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use homog::config::{Config, DomainConfig};
use homog::run::{execute, Command};

#[derive(Parser)]
#[command(name = "homog", version, about = "Periodic homogenization of oscillating Dirichlet problems")]
struct Cli {
    /// TOML configuration; missing sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV tables, JSON summaries and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Correctors and the homogenized tensor.
    Cell,
    /// Diophantine constants of one direction or of the boundary normals.
    Dioph {
        /// Single direction `n1,n2`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        n: Option<Vec<f64>>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Lattice enumeration box `|xi|_inf <= XI`.
        #[arg(long)]
        xi: Option<usize>,
        /// `disc` or `ellipse:A,B`.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Quasiperiodic quadrature against its error bound.
    Ergodic,
    /// Stopping-time cube decomposition and partition of unity.
    Decompose,
    /// Half-space boundary layer, decay profile and tail.
    Layer,
    /// Homogenized boundary datum along the boundary.
    Gbar,
    /// Convergence rate of the oscillating Dirichlet problem.
    Converge,
    /// Norms of the error functional.
    Efunc,
}

fn parse_domain(s: &str) -> Result<DomainConfig, String> {
    if s == "disc" {
        return Ok(DomainConfig::Disc);
    }
    let axes = s.strip_prefix("ellipse:").ok_or_else(|| format!("unknown domain {s:?}"))?;
    let v: Vec<f64> = axes.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v[..] {
        [a, b] => Ok(DomainConfig::Ellipse { a, b }),
        _ => Err(format!("ellipse needs two semi-axes, got {axes:?}")),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => match Config::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    let cmd = match cli.command {
        Sub::Cell => Command::Cell,
        Sub::Dioph { n, kappa, xi, domain, samples } => {
            if let Some(n) = n {
                let [n1, n2] = n[..] else {
                    eprintln!("error: --n takes two components, got {}", n.len());
                    return ExitCode::from(2);
                };
                cfg.dioph.n = Some([n1, n2]);
            }
            if let Some(k) = kappa {
                cfg.dioph.kappa = k;
            }
            if let Some(x) = xi {
                cfg.dioph.xi = x;
            }
            if let Some(s) = samples {
                cfg.dioph.samples = s;
            }
            if let Some(d) = domain {
                match parse_domain(&d) {
                    Ok(d) => cfg.domain = d,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            Command::Dioph
        }
        Sub::Ergodic => Command::Ergodic,
        Sub::Decompose => Command::Decompose,
        Sub::Layer => Command::Layer,
        Sub::Gbar => Command::Gbar,
        Sub::Converge => Command::Converge,
        Sub::Efunc => Command::Efunc,
    };
    match execute(cmd, &cfg, &cli.out, cli.threads) {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
