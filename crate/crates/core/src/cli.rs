//! The `eei` command-line front end.
//!
//! Every run prints one report: the library version, the resolved
//! configuration, the seed, a summary `(lhs, rhs, margin)` and the full
//! command-specific result. Exit status is 0 when the check passes, 1 when a
//! mathematical check fails, and 2 for bad input.
//!
//! Matrix flags accept a number (read as that multiple of the identity, in
//! the dimension of the other matrices) or a path to a `{"dim", "rows"}`
//! JSON file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::applications::{
    design_private_message, lmmse_matrix, mi_lower_bound, BroadcastInstance,
};
use crate::eei_construct::{
    construct_k, construct_l, eei_optimum_thm3, eei_optimum_thm4, ConstructionCertificate,
    EEIInstance,
};
use crate::error::{EeiError, Result};
use crate::gaussmat::{log_det_spd, spd_inverse, CovMatrix};
use crate::verify_oracle::{
    check_eei, check_epi, check_worst_noise, convolve_density, fit_stationarity, gaussian_search,
    paired_grids, variational_second_form, NamedDensity, ScalarEEI, VerificationReport,
};
use crate::VERSION;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "eei",
    version,
    about = "Optimal Gaussian covariances for extremal entropy inequalities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CommonArgs {
    /// Pass tolerance; each command has its own default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Random trials for `search`.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub trials: u64,

    #[arg(long, global = true, env = "EEI_SEED", default_value_t = 42)]
    pub seed: u64,

    /// Nodes of 1-D density grids.
    #[arg(long, global = true, default_value_t = 4001)]
    pub grid_points: usize,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Include wall-clock time (makes output run-dependent).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// L multiplier and W̃ split from Σ_X and Σ_W.
    ConstructL {
        #[arg(long)]
        x: String,
        #[arg(long)]
        w: String,
        #[arg(long)]
        mu: f64,
    },
    /// K multiplier and W̃ split from Σ_W and Σ_Ṽ.
    ConstructK {
        #[arg(long)]
        w: String,
        /// Σ_Ṽ.
        #[arg(long)]
        v: String,
        #[arg(long)]
        mu: f64,
    },
    /// Optimal Gaussian covariance under Σ ⪯ R (two-noise form when --v is given).
    Optimum {
        #[arg(long)]
        w: String,
        #[arg(long)]
        v: Option<String>,
        #[arg(long)]
        r: String,
        #[arg(long)]
        mu: f64,
    },
    /// Quadrature objective of a 1-D density against the Gaussian optimum.
    VerifyEei {
        /// gaussian[:var] | uniform[:a,b] | mixture:w,m1,s1,m2,s2 (variance defaults to r).
        #[arg(long, default_value = "gaussian")]
        density: String,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        w: f64,
        #[arg(long)]
        v: Option<f64>,
        #[arg(long)]
        r: f64,
    },
    /// Entropy power inequality for two 1-D densities.
    VerifyEpi {
        #[arg(long, default_value = "gaussian")]
        density: String,
        #[arg(long, default_value = "gaussian")]
        density2: String,
    },
    /// Worst additive noise inequality for a 1-D density.
    VerifyWorstNoise {
        #[arg(long, default_value = "gaussian")]
        density: String,
        #[arg(long, default_value_t = 1.0)]
        w_tilde: f64,
        #[arg(long, default_value_t = 1.0)]
        w_prime: f64,
    },
    /// Random feasible Gaussian search against the constructed optimum.
    Search {
        #[arg(long)]
        w: String,
        #[arg(long)]
        v: Option<String>,
        #[arg(long)]
        r: String,
        #[arg(long)]
        mu: f64,
    },
    /// Input covariance for the private-message broadcast channel.
    BroadcastDesign {
        #[arg(long)]
        z1: String,
        #[arg(long)]
        z2: String,
        #[arg(long)]
        r: String,
        /// Search direction; defaults to R.
        #[arg(long)]
        direction: Option<String>,
    },
    /// LMMSE matrix and the mutual-information lower bound.
    LmmseBound {
        #[arg(long)]
        x: String,
        #[arg(long)]
        r: String,
    },
    /// Stationarity residual and second-variation sweep for a 1-D input.
    VariationalCheck {
        #[arg(long, default_value = "gaussian")]
        density: String,
        /// Noise variance of V̂.
        #[arg(long, default_value_t = 1.0)]
        v: f64,
        #[arg(long)]
        mu: f64,
        /// Defaults to 1 − μ.
        #[arg(long, allow_hyphen_values = true)]
        alpha1: Option<f64>,
        /// Random perturbation pairs for the second variation.
        #[arg(long, default_value_t = 100)]
        pairs: u64,
        /// Nodes of the (coarser) grid used for the second variation.
        #[arg(long, default_value_t = 401)]
        second_grid_points: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ConstructL { .. } => "construct-l",
            Command::ConstructK { .. } => "construct-k",
            Command::Optimum { .. } => "optimum",
            Command::VerifyEei { .. } => "verify-eei",
            Command::VerifyEpi { .. } => "verify-epi",
            Command::VerifyWorstNoise { .. } => "verify-worst-noise",
            Command::Search { .. } => "search",
            Command::BroadcastDesign { .. } => "broadcast-design",
            Command::LmmseBound { .. } => "lmmse-bound",
            Command::VariationalCheck { .. } => "variational-check",
        }
    }

    pub fn default_tol(&self) -> f64 {
        match self {
            Command::ConstructL { .. } | Command::ConstructK { .. } => 1e-8,
            Command::Optimum { .. } | Command::Search { .. } => 1e-6,
            Command::VerifyEei { .. } | Command::VariationalCheck { .. } => 1e-3,
            Command::VerifyEpi { .. } | Command::VerifyWorstNoise { .. } => 1e-4,
            Command::BroadcastDesign { .. } => 1e-9,
            Command::LmmseBound { .. } => 1e-10,
        }
    }
}

/// Summary of one run. `passed` is `margin ≥ −tol`.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: String,
    pub n: usize,
    pub mu: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub trials: u64,
    pub seed: u64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    pub result: Value,
}

enum MatrixArg {
    Scalar(f64),
    Matrix(CovMatrix),
}

fn read_matrix_arg(s: &str) -> Result<MatrixArg> {
    if let Ok(x) = s.trim().parse::<f64>() {
        return Ok(MatrixArg::Scalar(x));
    }
    Ok(MatrixArg::Matrix(CovMatrix::read_json(Path::new(s))?))
}

/// Loads matrix flags, expanding numbers to multiples of the identity in the
/// common dimension of the file arguments.
fn load_matrices(args: &[&str]) -> Result<(usize, Vec<CovMatrix>)> {
    let parsed: Vec<MatrixArg> = args
        .iter()
        .map(|s| read_matrix_arg(s))
        .collect::<Result<_>>()?;
    let n = parsed
        .iter()
        .find_map(|m| match m {
            MatrixArg::Matrix(c) => Some(c.dim()),
            MatrixArg::Scalar(_) => None,
        })
        .unwrap_or(1);
    let mats = parsed
        .into_iter()
        .map(|m| match m {
            MatrixArg::Matrix(c) if c.dim() == n => Ok(c),
            MatrixArg::Matrix(c) => Err(EeiError::DimensionMismatch {
                expected: n,
                got: c.dim(),
            }),
            MatrixArg::Scalar(x) => CovMatrix::identity(n).scaled(x),
        })
        .collect::<Result<_>>()?;
    Ok((n, mats))
}

fn parse_params(body: &str, count: usize, name: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = body
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| EeiError::Parse(format!("{name} parameters '{body}': {e}")))?;
    if vals.len() != count {
        return Err(EeiError::Parse(format!(
            "{name} takes {count} parameters, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Parses `gaussian[:var]`, `uniform[:a,b]`, `mixture:w,m1,s1,m2,s2`.
/// Bare `gaussian` and `uniform` are centred with variance `default_var`.
pub fn parse_density(spec: &str, default_var: f64) -> Result<NamedDensity> {
    let (kind, body) = match spec.split_once(':') {
        Some((k, b)) => (k.trim(), Some(b)),
        None => (spec.trim(), None),
    };
    let d = match (kind, body) {
        ("gaussian", None) => NamedDensity::Gaussian {
            mean: 0.0,
            var: default_var,
        },
        ("gaussian", Some(b)) => {
            let p = parse_params(b, 1, "gaussian")?;
            NamedDensity::Gaussian {
                mean: 0.0,
                var: p[0],
            }
        }
        ("uniform", None) => NamedDensity::uniform_with_variance(default_var),
        ("uniform", Some(b)) => {
            let p = parse_params(b, 2, "uniform")?;
            NamedDensity::Uniform { a: p[0], b: p[1] }
        }
        ("mixture", Some(b)) => {
            let p = parse_params(b, 5, "mixture")?;
            NamedDensity::Mixture {
                w: p[0],
                m1: p[1],
                s1: p[2],
                m2: p[3],
                s2: p[4],
            }
        }
        _ => {
            return Err(EeiError::Parse(format!(
                "unknown density '{spec}' (expected gaussian, uniform, or mixture:w,m1,s1,m2,s2)"
            )))
        }
    };
    d.validate()?;
    Ok(d)
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn certificate_summary(c: &ConstructionCertificate) -> (f64, f64) {
    // worst residual relative to the certificate's scale
    let worst = (c
        .zero_product_residual
        .max(c.markov_residual)
        .max(-c.order_residual))
    .max(0.0)
        / c.scale;
    (worst, -worst)
}

struct Summary {
    n: usize,
    mu: Option<f64>,
    lhs: f64,
    rhs: f64,
    margin: f64,
    extra_pass: bool,
    result: Value,
}

fn from_report(r: VerificationReport, mu: Option<f64>) -> Summary {
    Summary {
        n: 1,
        mu,
        lhs: r.lhs,
        rhs: r.rhs,
        margin: r.margin,
        extra_pass: true,
        result: to_value(&r),
    }
}

fn strip_elapsed(mut r: VerificationReport) -> VerificationReport {
    r.elapsed_ms = None;
    r
}

fn execute(cmd: &Command, common: &CommonArgs, tol: f64) -> Result<Summary> {
    let points = common.grid_points;
    Ok(match cmd {
        Command::ConstructL { x, w, mu } => {
            crate::eei_construct::check_mu(*mu)?;
            let (n, m) = load_matrices(&[x, w])?;
            let c = construct_l(&m[0], &m[1], *mu)?;
            let (worst, margin) = certificate_summary(&c);
            Summary {
                n,
                mu: Some(*mu),
                lhs: worst,
                rhs: 0.0,
                margin,
                extra_pass: true,
                result: to_value(&c),
            }
        }
        Command::ConstructK { w, v, mu } => {
            crate::eei_construct::check_mu(*mu)?;
            let (n, m) = load_matrices(&[w, v])?;
            let c = construct_k(&m[0], &m[1], *mu)?;
            let (worst, margin) = certificate_summary(&c);
            Summary {
                n,
                mu: Some(*mu),
                lhs: worst,
                rhs: 0.0,
                margin,
                extra_pass: true,
                result: to_value(&c),
            }
        }
        Command::Optimum { w, v, r, mu } => {
            crate::eei_construct::check_mu(*mu)?;
            match v {
                None => {
                    let (n, m) = load_matrices(&[w, r])?;
                    let res = eei_optimum_thm3(&m[0], &m[1], *mu)?;
                    let (worst, margin) = certificate_summary(&res.certificate);
                    Summary {
                        n,
                        mu: Some(*mu),
                        lhs: worst,
                        rhs: 0.0,
                        margin,
                        extra_pass: true,
                        result: to_value(&res),
                    }
                }
                Some(v) => {
                    let (n, m) = load_matrices(&[w, v, r])?;
                    let inst =
                        EEIInstance::new(*mu, m[0].clone(), Some(m[1].clone()), m[2].clone())?;
                    let res = eei_optimum_thm4(&inst)?;
                    let (worst, margin) = certificate_summary(&res.certificate);
                    Summary {
                        n,
                        mu: Some(*mu),
                        lhs: worst,
                        rhs: 0.0,
                        margin,
                        extra_pass: true,
                        result: to_value(&res),
                    }
                }
            }
        }
        Command::VerifyEei {
            density,
            mu,
            w,
            v,
            r,
        } => {
            crate::eei_construct::check_mu(*mu)?;
            let d = parse_density(density, *r)?;
            let grid = d.grid(points)?;
            let p = ScalarEEI {
                mu: *mu,
                s2_w: *w,
                s2_v: *v,
                r: *r,
            };
            from_report(strip_elapsed(check_eei(&grid, &p, tol)?), Some(*mu))
        }
        Command::VerifyEpi { density, density2 } => {
            let a = parse_density(density, 1.0)?;
            let b = parse_density(density2, 1.0)?;
            let (d1, d2) = paired_grids(&a, &b, points)?;
            from_report(strip_elapsed(check_epi(&d1, &d2, tol)?), None)
        }
        Command::VerifyWorstNoise {
            density,
            w_tilde,
            w_prime,
        } => {
            let d = parse_density(density, 1.0)?.grid(points)?;
            from_report(
                strip_elapsed(check_worst_noise(&d, *w_tilde, *w_prime, tol)?),
                None,
            )
        }
        Command::Search { w, v, r, mu } => {
            crate::eei_construct::check_mu(*mu)?;
            let inst = match v {
                None => {
                    let (_, m) = load_matrices(&[w, r])?;
                    EEIInstance::new(*mu, m[0].clone(), None, m[1].clone())?
                }
                Some(v) => {
                    let (_, m) = load_matrices(&[w, v, r])?;
                    EEIInstance::new(*mu, m[0].clone(), Some(m[1].clone()), m[2].clone())?
                }
            };
            let rep = strip_elapsed(gaussian_search(&inst, common.trials, common.seed, tol)?);
            let mut s = from_report(rep, Some(*mu));
            s.n = inst.dim();
            s
        }
        Command::BroadcastDesign {
            z1,
            z2,
            r,
            direction,
        } => {
            let mut args: Vec<&str> = vec![z1, z2, r];
            if let Some(d) = direction {
                args.push(d);
            }
            let (n, m) = load_matrices(&args)?;
            let inst = BroadcastInstance::new(
                m[0].clone(),
                m[1].clone(),
                m[2].clone(),
                m.get(3).cloned(),
            )?;
            let d = design_private_message(&inst)?;
            let tr = inst.r.trace();
            let ok =
                (d.trace_mse_rx2 - tr).abs() <= 1e-6 * tr && d.markov_residual <= tol * (1.0 + tr);
            Summary {
                n,
                mu: None,
                lhs: d.trace_mse_rx1,
                rhs: tr,
                margin: tr - d.trace_mse_rx1,
                extra_pass: ok,
                result: to_value(&d),
            }
        }
        Command::LmmseBound { x, r } => {
            let (n, m) = load_matrices(&[x, r])?;
            let e = lmmse_matrix(&m[0], &m[1])?;
            let bound = mi_lower_bound(&m[0], &m[1])?;
            let sum = m[0].matrix() + m[1].matrix();
            let ld_sum =
                log_det_spd(&sum).ok_or_else(|| EeiError::SingularCovariance("Σ_X + R".into()))?;
            let ld_r = log_det_spd(m[1].matrix())
                .ok_or_else(|| EeiError::SingularCovariance("R".into()))?;
            let gaussian_mi = 0.5 * (ld_sum - ld_r);
            // Σ_X Σ_Y⁻¹ R must reproduce the LMMSE matrix
            let inv =
                spd_inverse(&sum).ok_or_else(|| EeiError::SingularCovariance("Σ_X + R".into()))?;
            let alt = m[0].matrix() * inv * m[1].matrix();
            let form_gap = (alt - e.matrix()).norm() / e.matrix().norm().max(1.0);
            let gap = (bound - gaussian_mi).abs().max(form_gap);
            Summary {
                n,
                mu: None,
                lhs: bound,
                rhs: gaussian_mi,
                margin: -gap,
                extra_pass: true,
                result: json!({
                    "lmmse": e,
                    "mi_lower_bound": bound,
                    "gaussian_mi": gaussian_mi,
                    "second_form_gap": form_gap,
                }),
            }
        }
        Command::VariationalCheck {
            density,
            v,
            mu,
            alpha1,
            pairs,
            second_grid_points,
        } => {
            crate::eei_construct::check_mu(*mu)?;
            let alpha1 = alpha1.unwrap_or(1.0 - mu);
            let d = parse_density(density, 1.0)?;
            let setup = |points: usize| -> Result<_> {
                let fx = d.grid(points)?;
                let fv =
                    NamedDensity::Gaussian { mean: 0.0, var: *v }.grid_with_spacing(fx.dx())?;
                let fy = convolve_density(&fx, *v)?;
                Ok((fx, fy, fv))
            };
            let (fx, fy, fv) = setup(points)?;
            let fit = fit_stationarity(&fx, &fy, &fv, *mu)?;
            let (sx, sy, sv) = setup(*second_grid_points)?;
            let values: Vec<f64> = (0..*pairs)
                .into_par_iter()
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
                    rng.set_stream(k);
                    let hx: Vec<f64> = sx
                        .values()
                        .iter()
                        .map(|f| f * rng.random_range(-1.0..1.0))
                        .collect();
                    let hy: Vec<f64> = sy
                        .values()
                        .iter()
                        .map(|f| f * rng.random_range(-1.0..1.0))
                        .collect();
                    variational_second_form(&sx, &sy, &sv, *mu, &hx, &hy, alpha1)
                })
                .collect::<Result<_>>()?;
            let worst = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Summary {
                n: 1,
                mu: Some(*mu),
                lhs: fit.residual,
                rhs: worst,
                margin: -fit.residual.max(worst.max(0.0)),
                extra_pass: true,
                result: json!({
                    "stationarity": fit,
                    "alpha1": alpha1,
                    "pairs": pairs,
                    "second_variation_max": worst,
                }),
            }
        }
    })
}

/// Runs the configured command.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let start = Instant::now();
    let tol = cli.common.tol.unwrap_or_else(|| cli.command.default_tol());
    let s = execute(&cli.command, &cli.common, tol)?;
    let trials = match cli.command {
        Command::Search { .. } => cli.common.trials,
        Command::VariationalCheck { pairs, .. } => pairs,
        _ => 1,
    };
    Ok(Outcome {
        command: cli.command.name().to_string(),
        n: s.n,
        mu: s.mu,
        lhs: s.lhs,
        rhs: s.rhs,
        margin: s.margin,
        tol,
        trials,
        seed: cli.common.seed,
        passed: s.margin >= -tol && s.extra_pass,
        elapsed_ms: cli
            .common
            .timing
            .then(|| start.elapsed().as_secs_f64() * 1e3),
        result: s.result,
    })
}

/// Shortest round-trip form, exponent notation for small and large values.
fn num(x: f64) -> String {
    serde_json::to_string(&x).expect("float serializes")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Formats an outcome with its reproducibility header.
pub fn render(cli: &Cli, o: &Outcome) -> String {
    let config = to_value(cli);
    match cli.common.format {
        Format::Json => {
            let doc = json!({
                "version": VERSION,
                "seed": o.seed,
                "config": config,
                "report": o,
            });
            format!("{doc}\n")
        }
        Format::Csv => {
            let mut s = format!("# eei {VERSION} seed={} config={config}\n", o.seed);
            s.push_str("command,n,mu,lhs,rhs,margin,tol,trials,seed,elapsed_ms\n");
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                o.command,
                o.n,
                fmt_opt(o.mu),
                num(o.lhs),
                num(o.rhs),
                num(o.margin),
                num(o.tol),
                o.trials,
                o.seed,
                fmt_opt(o.elapsed_ms)
            ));
            s
        }
        Format::Text => {
            let mut s = format!("eei {VERSION} {} (seed {})\n", o.command, o.seed);
            s.push_str(&format!("config: {config}\n"));
            s.push_str(&format!(
                "status: {}\n",
                if o.passed { "PASS" } else { "FAIL" }
            ));
            s.push_str(&format!("n: {}\n", o.n));
            if let Some(mu) = o.mu {
                s.push_str(&format!("mu: {}\n", num(mu)));
            }
            for (k, v) in [
                ("lhs", o.lhs),
                ("rhs", o.rhs),
                ("margin", o.margin),
                ("tol", o.tol),
            ] {
                s.push_str(&format!("{k}: {}\n", num(v)));
            }
            if let Some(ms) = o.elapsed_ms {
                s.push_str(&format!("elapsed_ms: {}\n", num(ms)));
            }
            let pretty = serde_json::to_string_pretty(&o.result).expect("report types serialize");
            s.push_str(&format!("result: {pretty}\n"));
            s
        }
    }
}

/// Whether an error means a mathematical check failed rather than bad input.
fn is_check_failure(e: &EeiError) -> bool {
    matches!(
        e,
        EeiError::DominationFailed { .. }
            | EeiError::SeparationFailed { .. }
            | EeiError::SplitInfeasible(_)
            | EeiError::NoConvergence(_)
    )
}

/// Parses `args`, runs, writes the report, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return if is_check_failure(&e) { 1 } else { 2 };
        }
    };
    let text = render(&cli, &outcome);
    let written = match &cli.common.output {
        Some(path) => fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return 2;
    }
    if outcome.passed {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Result<Outcome> {
        let mut full = vec!["eei"];
        full.extend_from_slice(args);
        run(&Cli::try_parse_from(full).unwrap())
    }

    #[test]
    fn density_specs() {
        assert_eq!(
            parse_density("gaussian", 2.0).unwrap(),
            NamedDensity::Gaussian {
                mean: 0.0,
                var: 2.0
            }
        );
        assert_eq!(
            parse_density("uniform:0,1", 2.0).unwrap(),
            NamedDensity::Uniform { a: 0.0, b: 1.0 }
        );
        assert!((parse_density("uniform", 3.0).unwrap().variance() - 3.0).abs() < 1e-12);
        let m = parse_density("mixture:0.3,-1,0.5,2,1", 1.0).unwrap();
        assert_eq!(
            m,
            NamedDensity::Mixture {
                w: 0.3,
                m1: -1.0,
                s1: 0.5,
                m2: 2.0,
                s2: 1.0
            }
        );
        assert!(parse_density("mixture:0.3,1", 1.0).is_err());
        assert!(parse_density("cauchy", 1.0).is_err());
        assert!(parse_density("gaussian:-1", 1.0).is_err());
    }

    #[test]
    fn scalar_construct_l() {
        let o = run_args(&["construct-l", "--x", "1", "--w", "3", "--mu", "2"]).unwrap();
        assert!(o.passed);
        let l = o.result["multiplier"]["rows"][0][0].as_f64().unwrap();
        assert!((l - 0.25).abs() <= 1e-12);
    }

    #[test]
    fn small_mu_is_rejected() {
        let e = run_args(&["construct-l", "--x", "1", "--w", "3", "--mu", "0.5"]).unwrap_err();
        assert!(e.to_string().contains("mu must exceed 1"));
        assert!(!is_check_failure(&e));
    }

    #[test]
    fn per_command_tolerances() {
        let o = run_args(&["lmmse-bound", "--x", "1", "--r", "1"]).unwrap();
        assert_eq!(o.tol, 1e-10);
        assert!(o.passed);
        assert!((o.lhs - 0.5 * 2f64.ln()).abs() < 1e-15);
        let o = run_args(&["--tol", "1e-3", "lmmse-bound", "--x", "1", "--r", "1"]).unwrap();
        assert_eq!(o.tol, 1e-3);
    }

    #[test]
    fn csv_has_fixed_columns_and_no_timing_by_default() {
        let cli = Cli::try_parse_from([
            "eei",
            "--format",
            "csv",
            "lmmse-bound",
            "--x",
            "2",
            "--r",
            "1",
        ])
        .unwrap();
        let o = run(&cli).unwrap();
        let out = render(&cli, &o);
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines[0].starts_with("# eei "));
        assert_eq!(
            lines[1],
            "command,n,mu,lhs,rhs,margin,tol,trials,seed,elapsed_ms"
        );
        assert!(lines[2].starts_with("lmmse-bound,1,,"));
        assert!(lines[2].ends_with(",1,42,"));
    }

    #[test]
    fn broadcast_unreachable_is_input_error() {
        let e =
            run_args(&["broadcast-design", "--z1", "0.5", "--z2", "2", "--r", "3"]).unwrap_err();
        assert!(matches!(e, EeiError::ThresholdUnreachable { .. }));
        assert!(!is_check_failure(&e));
    }
}
