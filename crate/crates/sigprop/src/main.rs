use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigprop::commands::{ingest_cmd, moments_cmd, propagate_cmd, spectrum_cmd, validate_cmd};
use sigprop::config::{Compensate, InputConfig};
use sigprop::{Error, Overrides, RunConfig};

/// Exact squared-norm laws of signals in random fully-connected networks.
#[derive(Parser, Debug)]
#[command(name = "sigprop", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    #[arg(long, global = true)]
    grid_max: Option<f64>,
    /// Network depth.
    #[arg(long, global = true)]
    layers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate the input law through every layer.
    Propagate,
    /// Eigenvalue curves λ_m and critical exponents.
    Spectrum {
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<usize>>,
        #[arg(long, allow_hyphen_values = true)]
        m_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        m_max: Option<f64>,
        #[arg(long)]
        m_samples: Option<usize>,
        /// Leading eigenvalues of the discretized operator.
        #[arg(long)]
        top_k: Option<usize>,
        /// Fit m_crit against width at critical σ_w, e.g. `5,10,20,50`.
        #[arg(long, value_delimiter = ',')]
        mcrit_scan: Option<Vec<usize>>,
    },
    /// Closed-form squared-norm moments.
    Moments {
        /// First-layer σ_w that makes a two-layer chain norm-preserving: `N1,N2,sigma_w2`.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        compensate: Option<Vec<String>>,
    },
    /// Compare the operator with Monte Carlo sampling.
    Validate {
        #[arg(long)]
        samples: Option<usize>,
        /// Scale σ_w of the sampled networks only.
        #[arg(long)]
        mc_sigma_w_scale: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
    },
    /// Read an IDX image file and write its squared-norm law.
    Ingest {
        #[arg(long)]
        idx: Option<PathBuf>,
        #[arg(long)]
        scale: Option<f64>,
    },
}

fn parse_compensate(parts: &[String]) -> Result<Compensate, Error> {
    let bad = || Error::Config(format!("--compensate expects N1,N2,sigma_w2, got {:?}", parts.join(",")));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(Compensate {
        n1: parts[0].trim().parse().map_err(|_| bad())?,
        n2: parts[1].trim().parse().map_err(|_| bad())?,
        sigma_w2: parts[2].trim().parse().map_err(|_| bad())?,
    })
}

fn run(cli: Cli) -> Result<bool, Error> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        out: g.out,
        seed: g.seed,
        grid_points: g.grid_points,
        grid_max: g.grid_max,
        layers: g.layers,
    })?;
    match cli.command {
        Command::Propagate => propagate_cmd(&cfg),
        Command::Spectrum { widths, m_min, m_max, m_samples, top_k, mcrit_scan } => {
            let s = &mut cfg.spectrum;
            if let Some(w) = widths {
                s.widths = w;
            }
            if let Some(m) = m_min {
                s.m_min = m;
            }
            if let Some(m) = m_max {
                s.m_max = m;
            }
            if let Some(n) = m_samples {
                s.m_samples = n;
            }
            if let Some(k) = top_k {
                s.top_k = k;
            }
            if mcrit_scan.is_some() {
                s.mcrit_scan = mcrit_scan;
            }
            spectrum_cmd(&cfg)
        }
        Command::Moments { compensate } => {
            if let Some(parts) = compensate {
                cfg.moments.compensate = Some(parse_compensate(&parts)?);
            }
            moments_cmd(&cfg)
        }
        Command::Validate { samples, mc_sigma_w_scale, depths } => {
            let v = &mut cfg.validate;
            if let Some(n) = samples {
                v.n_samples = n;
            }
            if let Some(s) = mc_sigma_w_scale {
                v.mc_sigma_w_scale = s;
            }
            if depths.is_some() {
                v.depths = depths;
            }
            validate_cmd(&cfg)
        }
        Command::Ingest { idx, scale } => {
            if let Some(path) = idx {
                cfg.input = InputConfig::Idx { path, scale: scale.unwrap_or(255.0) };
            } else if let (Some(s), InputConfig::Idx { scale, .. }) = (scale, &mut cfg.input) {
                *scale = s;
            }
            ingest_cmd(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("sigprop: checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("sigprop: {e}");
            ExitCode::from(2)
        }
    }
}
