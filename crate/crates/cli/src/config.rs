//! Command-line flags, the flat `key = value` config file, and their merge
//! into a [`RunConfig`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use kfp_core::mesh::{Formulation, RectDomain};
use kfp_core::solvers::RunConfig;

use crate::output::format_real;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "kfp", version, about = "Finite element runs and studies for the Kolmogorov equation")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunFlags,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Unset flags fall back to the config file,
/// then to the built-in defaults.
#[derive(Debug, Default, Clone, Args)]
pub struct RunFlags {
    /// Formulation: original, lagrangian or selfsimilar.
    #[arg(long, global = true)]
    pub form: Option<String>,
    /// Mesh subdivisions per side.
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Time step (dt, or ds for the self-similar form).
    #[arg(long, global = true)]
    pub dt: Option<String>,
    /// Final physical time T.
    #[arg(long = "t-end", global = true)]
    pub t_end: Option<String>,
    /// Domain as vmin,vmax,zmin,zmax.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub domain: Option<String>,
    #[arg(long, global = true)]
    pub theta: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub sigma1: Option<String>,
    /// Relative residual tolerance of the linear solver.
    #[arg(long, global = true)]
    pub tol: Option<String>,
    /// Keep a field snapshot every k steps (0: none written).
    #[arg(long = "snapshot-stride", global = true)]
    pub snapshot_stride: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run one solver from the Gaussian initial data.
    Run,
    /// Self-similar mesh convergence study.
    Convergence {
        /// Element sizes, e.g. 1,0.5,0.25,0.125.
        #[arg(long, default_value = "1,0.5,0.25,0.125")]
        levels: String,
    },
    /// Run all three formulations and tabulate their final errors.
    Compare,
    /// Norm time series of one run with the sup-norm envelope check.
    Norms,
    /// Kernel L^q norms: closed form against quadrature.
    KernelCheck,
    /// Directional Poincare inequality on random fields.
    PoincareCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Comma-separated times.
        #[arg(long = "t-grid", default_value = "0,0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.25,2.5,2.75,3,3.25,3.5,3.75,4,4.25,4.5,4.75,5")]
        t_grid: String,
    },
    /// Self-similar runs on nested squares compared on an inner region.
    NestedDomains {
        /// Half-widths of the nested squares.
        #[arg(long, default_value = "4,6,8,10")]
        scales: String,
        /// Half-width of the comparison region.
        #[arg(long, default_value_t = 2.0)]
        inner: f64,
        /// Element size shared by all domains.
        #[arg(long, default_value_t = 0.25)]
        h: f64,
    },
}

/// Config keys, identical to the flag names.
pub const KEYS: [&str; 11] = [
    "form",
    "n",
    "dt",
    "t-end",
    "domain",
    "theta",
    "sigma1",
    "tol",
    "snapshot-stride",
    "out",
    "seed",
];

/// Default output directory when neither flag nor file sets one.
pub const DEFAULT_OUT: &str = "out";

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.trim().parse().map_err(|_| CliError::Config {
        key: key.to_string(),
        reason: format!("cannot parse `{}`", raw.trim()),
    })
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',').map(|p| parse_value(key, p)).collect()
}

/// Applies one `key = value` setting to `cfg`.
pub fn apply(cfg: &mut RunConfig, key: &str, raw: &str) -> Result<(), CliError> {
    match key {
        "form" => {
            cfg.form = Formulation::from_str(raw.trim()).map_err(|e| CliError::Config {
                key: key.into(),
                reason: e.to_string(),
            })?
        }
        "n" => cfg.n = parse_value(key, raw)?,
        "dt" => cfg.dt = parse_value(key, raw)?,
        "t-end" => cfg.horizon = parse_value(key, raw)?,
        "domain" => {
            let parts = parse_list(key, raw)?;
            if parts.len() != 4 {
                return Err(CliError::Config {
                    key: key.into(),
                    reason: format!("expected vmin,vmax,zmin,zmax, got {} values", parts.len()),
                });
            }
            cfg.domain = RectDomain::new(parts[0], parts[1], parts[2], parts[3]).map_err(|e| CliError::Config {
                key: key.into(),
                reason: e.to_string(),
            })?;
        }
        "theta" => cfg.theta = parse_value(key, raw)?,
        "sigma1" => cfg.sigma1 = parse_value(key, raw)?,
        "tol" => cfg.tol = parse_value(key, raw)?,
        "snapshot-stride" => cfg.snapshot_stride = parse_value(key, raw)?,
        "out" => cfg.output = Some(PathBuf::from(raw.trim())),
        "seed" => cfg.seed = parse_value(key, raw)?,
        _ => {
            return Err(CliError::Config {
                key: key.into(),
                reason: "unknown key".into(),
            })
        }
    }
    Ok(())
}

/// Parses the flat config format: `key = value` per line, `#` comments.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config {
                key: format!("line {}", lineno + 1),
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        key: "config".into(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config_text(&text)
}

/// Serializes every key of `cfg` in the config-file format.
pub fn config_to_string(cfg: &RunConfig) -> String {
    let d = &cfg.domain;
    let mut s = String::new();
    s.push_str(&format!("form = {}\n", cfg.form));
    s.push_str(&format!("n = {}\n", cfg.n));
    s.push_str(&format!("dt = {}\n", format_real(cfg.dt)));
    s.push_str(&format!("t-end = {}\n", format_real(cfg.horizon)));
    s.push_str(&format!(
        "domain = {},{},{},{}\n",
        format_real(d.v_min),
        format_real(d.v_max),
        format_real(d.z_min),
        format_real(d.z_max)
    ));
    s.push_str(&format!("theta = {}\n", format_real(cfg.theta)));
    s.push_str(&format!("sigma1 = {}\n", format_real(cfg.sigma1)));
    s.push_str(&format!("tol = {}\n", format_real(cfg.tol)));
    s.push_str(&format!("snapshot-stride = {}\n", cfg.snapshot_stride));
    if let Some(out) = &cfg.output {
        s.push_str(&format!("out = {}\n", out.display()));
    }
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s
}

impl RunFlags {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        [
            ("form", &self.form),
            ("n", &self.n),
            ("dt", &self.dt),
            ("t-end", &self.t_end),
            ("domain", &self.domain),
            ("theta", &self.theta),
            ("sigma1", &self.sigma1),
            ("tol", &self.tol),
            ("snapshot-stride", &self.snapshot_stride),
            ("out", &self.out),
            ("seed", &self.seed),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }
}

/// Merges defaults, the config file and the flags (in increasing priority)
/// and validates the result.
pub fn resolve(flags: &RunFlags) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &flags.config {
        for (key, value) in read_config_file(path)? {
            apply(&mut cfg, &key, &value)?;
        }
    }
    for (key, value) in flags.pairs() {
        apply(&mut cfg, key, value)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let bad = |key: &str, reason: String| {
        Err(CliError::Config {
            key: key.into(),
            reason,
        })
    };
    if !(0.0..=1.0).contains(&cfg.theta) {
        return bad("theta", format!("must lie in [0, 1], got {}", cfg.theta));
    }
    if !(cfg.sigma1 <= 1.0) {
        return bad("sigma1", format!("must be <= 1, got {}", cfg.sigma1));
    }
    if cfg.n == 0 {
        return bad("n", "must be at least 1".into());
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return bad("dt", format!("must be positive, got {}", cfg.dt));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return bad("t-end", format!("must be positive, got {}", cfg.horizon));
    }
    if !(cfg.tol > 0.0) {
        return bad("tol", format!("must be positive, got {}", cfg.tol));
    }
    Ok(())
}

/// A parsed invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
}

impl Invocation {
    pub fn out_dir(&self) -> PathBuf {
        self.config.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

/// Parses `argv` (including the program name) into an invocation.
pub fn parse_config<I, T>(argv: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Usage)?;
    let config = resolve(&cli.run)?;
    Ok(Invocation {
        command: cli.command,
        config,
    })
}

/// Parses a comma-separated list of reals for a subcommand option.
pub fn parse_reals(key: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    parse_list(key, raw)
}
