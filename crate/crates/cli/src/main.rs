//! `fairmab` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
//! instance, 3 numerical failure, 4 I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairmab::algorithms::Algorithm;
use fairmab::harness::{alpha_sweep, run_experiment, ExperimentConfig, DEFAULT_ALPHAS};
use fairmab::ingest::build_user_genre_matrix;
use fairmab::instance::max_row_rewards;
use fairmab::policy::{feasibility_report, solve_dual_lambda, solve_p1};
use fairmab::{BanditInstance, Error, Result};

#[derive(Parser)]
#[command(
    name = "fairmab",
    version,
    about = "Fair multi-agent multi-armed bandit laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report which feasibility conditions an instance satisfies.
    Check {
        /// Instance JSON file.
        instance: PathBuf,
    },
    /// Print the optimal fair policy, its welfare and the dual value.
    Solve {
        /// Instance JSON file.
        instance: PathBuf,
    },
    /// Run every configured algorithm over every seed.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Replaces the exponent of every Explore-First entry.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Explore-First regret across exploration exponents.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        /// Exponent to include; repeat for several. Defaults to 0.1..1.0 and 0.67.
        #[arg(long = "alpha")]
        alphas: Vec<f64>,
    },
    /// Build an instance from MovieLens-1M `ratings.dat` and `movies.dat`.
    Ingest {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        movies: PathBuf,
        /// Output instance JSON.
        #[arg(long)]
        out: PathBuf,
        /// Horizon stored in the instance.
        #[arg(long, default_value_t = 100_000)]
        horizon: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds as an inclusive range `a..b` or a comma list (overrides the config).
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Refit the dual multipliers every K exploitation rounds.
    #[arg(long = "dual-refresh", value_name = "K")]
    dual_refresh: Option<usize>,
    /// Clamp confidence bounds to [0, 1].
    #[arg(long = "clamp-confidence")]
    clamp_confidence: bool,
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad range start in {s:?}"))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad range end in {s:?}"))?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| format!("bad seed {x:?}")))
            .collect::<std::result::Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(SeedList(seeds))
}

/// Six significant digits, trailing zeros dropped.
fn g6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn g6_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| g6(x)).collect();
    format!("({})", parts.join(", "))
}

fn load_instance(path: &Path) -> Result<BanditInstance> {
    BanditInstance::from_json(&fs::read_to_string(path)?)
}

fn load_config(args: &RunArgs, alpha: Option<f64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.0.clone();
    }
    if let Some(alpha) = alpha {
        for alg in cfg.algorithms.iter_mut() {
            if let Algorithm::ExploreFirst { alpha: a } = alg {
                *a = alpha;
            }
        }
    }
    if args.dual_refresh.is_some() {
        cfg.options.dual_refresh = args.dual_refresh;
    }
    if args.clamp_confidence {
        cfg.options.clamp_confidence = true;
    }
    Ok(cfg)
}

fn check(path: &Path) -> Result<()> {
    let inst = load_instance(path)?;
    let report = feasibility_report(inst.means(), inst.fairness())?;
    println!("agents {}, arms {}", inst.agents(), inst.arms());
    println!("sum condition (sum C <= 1): {}", report.cond_sum);
    println!("max condition (max C <= 1/min(n, m)): {}", report.cond_max);
    match &report.witness {
        Some(w) if report.lp_feasible => {
            println!("feasible: fair policy {}", g6_vec(w.as_slice()));
            Ok(())
        }
        _ => {
            println!("infeasible: no policy meets every minimum-reward guarantee");
            Err(Error::InfeasibleInstance(Box::new(report)))
        }
    }
}

fn solve(path: &Path) -> Result<()> {
    let inst = load_instance(path)?;
    let opt = solve_p1(inst.means(), inst.fairness())?;
    let dual = solve_dual_lambda(
        inst.means(),
        inst.fairness(),
        &max_row_rewards(inst.means()),
    )?;
    println!("pi* = {}", g6_vec(opt.policy.as_slice()));
    println!("SW* = {}", g6(opt.welfare));
    println!("dual = {}", g6(dual.value));
    println!("lambda = {}", g6_vec(&dual.lambda));
    Ok(())
}

fn run(args: &RunArgs, alpha: Option<f64>) -> Result<()> {
    let cfg = load_config(args, alpha)?;
    let res = run_experiment(&cfg)?;
    let s = &res.summary;
    println!(
        "instance {} ({} agents, {} arms), T = {}, {} seeds, SW* = {}",
        &s.instance_digest[..12],
        s.agents,
        s.arms,
        s.horizon,
        s.seeds.len(),
        g6(s.optimal_welfare)
    );
    for a in &s.algorithms {
        let slope = |v: Option<f64>| v.map_or("n/a".to_string(), g6);
        println!(
            "{:<28} SW regret {} +- {}  fairness regret {} +- {}  slopes {} / {}  fallbacks {}",
            a.algorithm,
            g6(a.final_sw_mean),
            g6(a.final_sw_std),
            g6(a.final_fr_mean),
            g6(a.final_fr_std),
            slope(a.sw_slope),
            slope(a.fr_slope),
            a.fallback_events
        );
    }
    if let Some(dir) = &cfg.output_dir {
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn sweep(args: &RunArgs, alphas: &[f64]) -> Result<()> {
    let cfg = load_config(args, None)?;
    let alphas = if alphas.is_empty() {
        DEFAULT_ALPHAS.to_vec()
    } else {
        alphas.to_vec()
    };
    let rows = alpha_sweep(&cfg, &alphas)?;
    println!("alpha  normalized SW  normalized fairness  combined");
    for r in &rows {
        println!(
            "{:<6} {:<14} {:<20} {}",
            g6(r.alpha),
            g6(r.normalized_sw),
            g6(r.normalized_fr),
            g6(r.combined())
        );
    }
    if let Some(dir) = &cfg.output_dir {
        println!("wrote {}", dir.join("sweep.csv").display());
    }
    Ok(())
}

fn ingest(ratings: &Path, movies: &Path, out: &Path, horizon: usize) -> Result<()> {
    let m = build_user_genre_matrix(ratings, movies)?;
    let inst = m.into_instance(horizon)?;
    fs::write(out, inst.to_json())?;
    println!(
        "{} users x {} genres, digest {}, wrote {}",
        inst.agents(),
        inst.arms(),
        &inst.digest()[..12],
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Check { instance } => check(instance),
        Command::Solve { instance } => solve(instance),
        Command::Run { common, alpha } => run(common, *alpha),
        Command::Sweep { common, alphas } => sweep(common, alphas),
        Command::Ingest {
            ratings,
            movies,
            out,
            horizon,
        } => ingest(ratings, movies, out, *horizon),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
