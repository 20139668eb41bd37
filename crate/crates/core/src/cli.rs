//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for invalid input (bad flags, malformed or
//! inadmissible configuration), 2 for numerical failures and failed checks.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{GridFunction, ProblemConfig, ProblemSpec};
use crate::eigen::{EigenOptions, Eigenpairs};
use crate::error::{Error, Result};
use crate::extremal::{
    classify_parameter, ensure_negative_coupling, sigma_star, trace_curve, ExtremalCurve,
    ExtremalOptions, Region,
};
use crate::functionals::ParameterPair;
use crate::solver::{minimize_j_global, minimize_j_local, Anchor, SolverOptions};
use crate::verify::{run_verify, VerifyOptions};

/// Mesh size of the built-in reference instance.
pub const REFERENCE_N: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "pqlab", version, about = "Extremal parameters and positive solutions of a (p,q)-Laplacian system")]
pub struct Cli {
    /// Problem configuration (JSON). Without it the reference instance is used.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory receiving all output files.
    #[arg(long, global = true, env = "PQLAB_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    /// Seed for all randomized starting pairs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Number of starting pairs per minimization.
    #[arg(long, global = true, default_value_t = 8)]
    pub seeds: usize,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Operator {
    /// The p-Laplacian (writes phi1.csv).
    P,
    /// The q-Laplacian (writes psi1.csv).
    Q,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First eigenpair of one of the two operators.
    Eigen {
        #[arg(long, value_enum, default_value = "p")]
        r: Operator,
    },
    /// Extremal parameter and its minimizer.
    SigmaStar,
    /// Both branches of the extremal curve.
    Trace {
        /// Samples per branch.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value = "curve.csv")]
        out: PathBuf,
    },
    /// Positive solution at one parameter pair.
    Solve {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        /// Minimize locally over the pairs with quotients below NU and NU_BAR,
        /// starting from the global minimizer at the anchor.
        #[arg(long, num_args = 2, value_names = ["NU", "NU_BAR"])]
        anchor: Option<Vec<f64>>,
    },
    /// Classify a parameter grid and solve at every point on or below the curve.
    Sweep {
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long)]
        mu_min: f64,
        #[arg(long)]
        mu_max: f64,
        /// Points per axis.
        #[arg(long, default_value_t = 5)]
        grid: usize,
        /// Curve samples per branch used for classification.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Run the self-check battery; nonzero exit if any check fails.
    Verify {
        /// Curve samples per branch.
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

struct Context {
    spec: ProblemSpec,
    eigs: Eigenpairs,
    extremal: ExtremalOptions,
    solver: SolverOptions,
}

fn load(cli: &Cli) -> Result<Context> {
    if cli.seeds == 0 {
        return Err(Error::invalid("--seeds must be positive"));
    }
    let eig_opts = EigenOptions::default();
    let (spec, eigs) = match &cli.config {
        None => {
            let (spec, eigs, factor) =
                ensure_negative_coupling(&ProblemConfig::reference(REFERENCE_N), &eig_opts)?;
            if factor != 1.0 {
                log::warn!("reference weight deepened by a factor {factor}");
            }
            (spec, eigs)
        }
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::invalid(format!("cannot read config {}: {e}", path.display()))
            })?;
            let spec = ProblemSpec::from_json(&text)?;
            let eigs = Eigenpairs::compute(&spec, &eig_opts)?;
            (spec, eigs)
        }
    };
    let mut extremal = ExtremalOptions {
        seeds: cli.seeds,
        ..ExtremalOptions::default()
    };
    let mut solver = SolverOptions {
        seeds: cli.seeds,
        ..SolverOptions::default()
    };
    if let Some(s) = cli.seed {
        extremal.rng_seed = s;
        solver.rng_seed = s.wrapping_add(1);
    }
    Ok(Context {
        spec,
        eigs,
        extremal,
        solver,
    })
}

fn out_path(cli: &Cli, name: &Path) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out_dir)?;
    Ok(cli.out_dir.join(name))
}

fn write(cli: &Cli, name: impl AsRef<Path>, text: &str) -> Result<PathBuf> {
    let path = out_path(cli, name.as_ref())?;
    fs::write(&path, text)?;
    Ok(path)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn profile_csv(header: &str, columns: &[&GridFunction]) -> String {
    let mut s = format!("{header}\n");
    let profiles: Vec<_> = columns.iter().map(|c| c.nodal_profile()).collect();
    for j in 0..profiles[0].len() {
        let _ = write!(s, "{}", profiles[0][j].0);
        for p in &profiles {
            let _ = write!(s, ",{}", p[j].1);
        }
        s.push('\n');
    }
    s
}

fn curve_csv(curve: &ExtremalCurve) -> String {
    let mut s = String::from("lambda,mu,branch,residual_P,residual_F\n");
    for (name, branch) in [("mu", &curve.mu_branch), ("lambda", &curve.lambda_branch)] {
        for c in branch {
            let _ = writeln!(s, "{},{},{name},{},{}", c.lambda, c.mu, c.residual_p, c.residual_f);
        }
    }
    s
}

#[derive(Serialize)]
struct SigmaStarSummary {
    sigma_star: f64,
    lambda_star: f64,
    mu_star: f64,
    f_residual: f64,
    quotient_gap: f64,
    trivial: bool,
}

fn execute(cli: &Cli) -> Result<i32> {
    let ctx = load(cli)?;
    let spec = &ctx.spec;
    let eigs = &ctx.eigs;
    match &cli.command {
        Command::Eigen { r } => {
            let (pair, name) = match r {
                Operator::P => (&eigs.first, "phi1.csv"),
                Operator::Q => (&eigs.second, "psi1.csv"),
            };
            println!("{}", pair.value);
            write(cli, name, &profile_csv("x,u", &[&pair.function]))?;
        }
        Command::SigmaStar => {
            let star = sigma_star(spec, eigs, &ctx.extremal)?;
            println!(
                "sigma* = {}  (lambda*, mu*) = ({}, {})",
                star.sigma_star, star.lambda_star, star.mu_star
            );
            let summary = SigmaStarSummary {
                sigma_star: star.sigma_star,
                lambda_star: star.lambda_star,
                mu_star: star.mu_star,
                f_residual: star.f_residual,
                quotient_gap: star.quotient_gap,
                trivial: star.trivial,
            };
            write(cli, "sigma_star.json", &json(&summary)?)?;
            write(
                cli,
                "sigma_star.csv",
                &profile_csv("x,u,v", &[&star.minimizer.0, &star.minimizer.1]),
            )?;
        }
        Command::Trace { samples, out } => {
            if *samples < 2 {
                return Err(Error::invalid("--samples must be at least 2"));
            }
            let star = sigma_star(spec, eigs, &ctx.extremal)?;
            let curve = trace_curve(spec, eigs, &star, *samples, &ctx.extremal)?;
            let path = write(cli, out, &curve_csv(&curve))?;
            println!("{} samples written to {}", 2 * samples, path.display());
        }
        Command::Solve { lambda, mu, anchor } => {
            let sigma = ParameterPair::new(*lambda, *mu)?;
            let report = match anchor.as_deref() {
                None => minimize_j_global(sigma, spec, eigs, &[], &ctx.solver)?,
                Some(&[nu, nu_bar]) => {
                    let omega = Anchor { nu, nu_bar };
                    let start = minimize_j_global(omega.pair(), spec, eigs, &[], &ctx.solver)?;
                    minimize_j_local(sigma, omega, spec, eigs, &start.normalized(spec), &ctx.solver)?
                }
                Some(_) => return Err(Error::invalid("--anchor takes two values")),
            };
            let summary = report.summary();
            print!("{}", json(&summary)?);
            write(cli, "solution.json", &json(&summary)?)?;
            write(cli, "solution.csv", &profile_csv("x,u,v", &[&report.u, &report.v]))?;
        }
        Command::Sweep {
            lambda_min,
            lambda_max,
            mu_min,
            mu_max,
            grid,
            samples,
            out,
        } => {
            if *grid == 0 || *samples < 2 {
                return Err(Error::invalid("--grid must be positive and --samples at least 2"));
            }
            if !(lambda_min <= lambda_max && mu_min <= mu_max) {
                return Err(Error::invalid("empty sweep rectangle"));
            }
            let star = sigma_star(spec, eigs, &ctx.extremal)?;
            let curve = trace_curve(spec, eigs, &star, *samples, &ctx.extremal)?;
            let axis = |lo: f64, hi: f64| -> Vec<f64> {
                if *grid == 1 {
                    vec![lo]
                } else {
                    (0..*grid).map(|i| lo + (hi - lo) * i as f64 / (*grid - 1) as f64).collect()
                }
            };
            let points: Vec<ParameterPair> = axis(*lambda_min, *lambda_max)
                .into_iter()
                .flat_map(|l| axis(*mu_min, *mu_max).into_iter().map(move |m| ParameterPair { lambda: l, mu: m }))
                .collect();
            let rows: Vec<String> = points
                .par_iter()
                .map(|&sigma| {
                    let region = classify_parameter(sigma, &curve, 1e-3);
                    let solvable = matches!(region, Region::GammaMinus | Region::OnGamma);
                    let result = solvable.then(|| minimize_j_global(sigma, spec, eigs, &[], &ctx.solver));
                    let status = if region == Region::OnGamma && !spec.on_curve_theory_applies() {
                        "ok_outside_hypotheses"
                    } else {
                        "ok"
                    };
                    let tail = match result {
                        None => ",,,skipped".to_string(),
                        Some(Ok(r)) => format!(
                            "{},{},{},{status}",
                            r.jhat.map_or(String::new(), |j| j.to_string()),
                            r.energy,
                            r.el_residual
                        ),
                        Some(Err(e)) => {
                            log::warn!("sweep point {sigma:?}: {e}");
                            ",,,failed".to_string()
                        }
                    };
                    format!("{},{},{region:?},{tail}", sigma.lambda, sigma.mu)
                })
                .collect();
            let mut s = String::from("lambda,mu,region,jhat,energy,el_residual,status\n");
            for r in rows {
                s.push_str(&r);
                s.push('\n');
            }
            let path = write(cli, out, &s)?;
            println!("{} points written to {}", points.len(), path.display());
        }
        Command::Verify { samples } => {
            if *samples < 2 {
                return Err(Error::invalid("--samples must be at least 2"));
            }
            let opts = VerifyOptions {
                samples: *samples,
                extremal: ctx.extremal,
                solver: ctx.solver,
                seed: cli.seed.unwrap_or(VerifyOptions::default().seed),
            };
            let report = run_verify(spec, eigs, &opts)?;
            for c in &report.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            write(cli, "verify.json", &json(&report)?)?;
            if !report.all_passed() {
                return Ok(2);
            }
        }
    }
    Ok(0)
}
