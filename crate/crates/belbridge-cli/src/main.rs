//! Command-line front end: train controls, sample steered paths, evaluate
//! experiments, dump oracle artifacts, and check the variance formulas.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use bel_bridge::conditioning::controlled_simulate_batch;
use bel_bridge::experiments::evaluate_experiment;
use bel_bridge::models::make_model;
use bel_bridge::net::DriftNet;
use bel_bridge::oracles::{
    bel_second_moment_formula, brownian_bridge_score, double_well_committor, mc_second_moment,
    ou_tweedie_score,
};
use bel_bridge::schedule::AlphaSchedule;
use bel_bridge::sde::paths_to_csv;
use bel_bridge::train::train;
use bel_bridge::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "belbridge", about = "Conditioned-diffusion training and evaluation")]
struct Cli {
    /// Run configuration file (train).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory or file, command-dependent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Accepted for interface stability; execution is single-threaded.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a control network from a config file.
    Train,
    /// Sample steered paths from a finished training run.
    Sample {
        /// Run directory holding config.txt and checkpoint.txt.
        #[arg(long)]
        run: PathBuf,
        /// Conditioning value, comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long, default_value_t = 100)]
        n_paths: usize,
    },
    /// Re-score a finished experiment run without retraining.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Write an oracle artifact: a committor table, a bridge-score grid, or
    /// a Tweedie score table.
    Oracle {
        /// committor | bridge-score | tweedie
        #[arg(long)]
        kind: String,
        /// Barrier height for committor tables.
        #[arg(long, default_value_t = 5.0)]
        v: f64,
        /// Terminal ball radius for committor tables.
        #[arg(long, default_value_t = 0.3)]
        r: f64,
        /// Terminal ball center / conditioning point.
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        center: f64,
        #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long, default_value_t = 201)]
        n_x: usize,
        #[arg(long, default_value_t = 400)]
        n_t: usize,
        /// Reference starting state for Tweedie tables.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
    },
    /// Compare the closed-form target second moment with a Monte Carlo
    /// estimate.
    VarianceCheck {
        /// average | first:<width> | last:<width> | optimal-bm
        #[arg(long)]
        schedule: String,
        /// Conditioning offset.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        d: f64,
        #[arg(long, default_value_t = 20000)]
        n_samples: usize,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite { .. }
        | Error::NonFiniteLoss { .. }
        | Error::SolverInstability { .. }
        | Error::Singular(_)
        | Error::DegenerateSchedule { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: &Path, seed_override: Option<u64>) -> bel_bridge::Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = RunConfig::parse(&text)?;
    if seed_override.is_some() {
        cfg.seed = seed_override;
    }
    Ok(cfg)
}

fn run_dir_config(run: &Path, seed_override: Option<u64>) -> bel_bridge::Result<(RunConfig, DriftNet)> {
    let cfg = load_config(&run.join("config.txt"), seed_override)?;
    let ck = std::fs::read_to_string(run.join("checkpoint.txt"))?;
    let (net, _step) = DriftNet::from_checkpoint(&ck)?;
    Ok((cfg, net))
}

fn run(cli: &Cli) -> bel_bridge::Result<()> {
    match &cli.cmd {
        Cmd::Train => cmd_train(cli),
        Cmd::Sample { run, y, n_paths } => cmd_sample(cli, run, y, *n_paths),
        Cmd::Evaluate { run } => cmd_evaluate(cli, run),
        Cmd::Oracle { kind, v, r, center, x_min, x_max, n_x, n_t, x0 } => {
            cmd_oracle(cli, kind, *v, *r, *center, *x_min, *x_max, *n_x, *n_t, *x0)
        }
        Cmd::VarianceCheck { schedule, d, n_samples } => {
            cmd_variance_check(schedule, *d, *n_samples, cli.seed.unwrap_or(0))
        }
    }
}

fn required<'a, T>(opt: &'a Option<T>, flag: &str) -> bel_bridge::Result<&'a T> {
    opt.as_ref().ok_or_else(|| Error::Invalid(format!("missing required flag {flag}")))
}

fn cmd_train(cli: &Cli) -> bel_bridge::Result<()> {
    let cfg = load_config(required(&cli.config, "--config")?, cli.seed)?;
    let out = match (&cli.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => PathBuf::from(o),
        (None, None) => return Err(Error::Invalid("no output directory: set --out or 'out' in the config".into())),
    };
    let tc = cfg.train_config()?;
    let (net, history) = train(&tc)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    std::fs::write(out.join("checkpoint.txt"), net.to_checkpoint(history.len() as u64))?;
    let mut csv = String::from("batch,loss\n");
    for (b, loss) in history.iter().enumerate() {
        csv.push_str(&format!("{b},{loss:.16e}\n"));
    }
    std::fs::write(out.join("loss_history.csv"), csv)?;
    println!(
        "trained {} batches; final loss {:.6e}; artifacts in {}",
        history.len(),
        history.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn cmd_sample(cli: &Cli, run: &Path, y: &str, n_paths: usize) -> bel_bridge::Result<()> {
    let (cfg, net) = run_dir_config(run, cli.seed)?;
    let y: Vec<f64> = y
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad y component '{p}'"))))
        .collect::<bel_bridge::Result<_>>()?;
    if y.len() != net.cond_dim() {
        return Err(Error::DimMismatch { expected: net.cond_dim(), got: y.len() });
    }
    let model = make_model(&cfg.model_spec()?)?;
    let grid = cfg.grid()?;
    let x0 = cfg.sample_x0()?;
    let ys = vec![y; n_paths];
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let paths = controlled_simulate_batch(model.as_ref(), &net, &ys, &grid, &x0, seed)?;
    let csv = paths_to_csv(&paths, Some(&ys));
    match &cli.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_evaluate(cli: &Cli, run: &Path) -> bel_bridge::Result<()> {
    let (cfg, net) = run_dir_config(run, cli.seed)?;
    let mut ec = cfg
        .experiment_config()?
        .ok_or_else(|| Error::Invalid("evaluate needs a config with an 'experiment' key".into()))?;
    ec.out_dir = Some(cli.out.clone().unwrap_or_else(|| run.to_path_buf()));
    let report = evaluate_experiment(&ec, &net)?;
    println!("experiment = {}", report.experiment);
    println!("dist = {:.6e}", report.dist);
    if let Some(mv) = report.mv {
        println!("mv = {mv:.6e}");
    }
    if let Some(sd) = report.shape_dist {
        println!("shape_dist = {sd:.6e}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    cli: &Cli,
    kind: &str,
    v: f64,
    r: f64,
    center: f64,
    x_min: f64,
    x_max: f64,
    n_x: usize,
    n_t: usize,
    x0: f64,
) -> bel_bridge::Result<()> {
    let out = required(&cli.out, "--out")?;
    let text = match kind {
        "committor" => double_well_committor(v, x_min, x_max, n_x, n_t, r, center)?.to_text(),
        "bridge-score" => {
            let mut s = String::from("t,x,score\n");
            for i in 0..n_t {
                let t = i as f64 / n_t as f64;
                for k in 0..n_x {
                    let x = x_min + (x_max - x_min) * k as f64 / (n_x - 1).max(1) as f64;
                    let score = brownian_bridge_score(t, &[x], &[center], 1.0)?[0];
                    s.push_str(&format!("{t:.16e},{x:.16e},{score:.16e}\n"));
                }
            }
            s
        }
        "tweedie" => {
            let mut s = String::from("t,x,score\n");
            for i in 1..=n_t {
                let t = i as f64 / n_t as f64;
                for k in 0..n_x {
                    let x = x_min + (x_max - x_min) * k as f64 / (n_x - 1).max(1) as f64;
                    let score = ou_tweedie_score(t, x, x0)?;
                    s.push_str(&format!("{t:.16e},{x:.16e},{score:.16e}\n"));
                }
            }
            s
        }
        other => {
            return Err(Error::Invalid(format!(
                "unknown oracle kind '{other}' (expected committor, bridge-score, or tweedie)"
            )))
        }
    };
    std::fs::write(out, text)?;
    Ok(())
}

fn parse_schedule(s: &str) -> bel_bridge::Result<AlphaSchedule> {
    match s.split_once(':') {
        None => match s {
            "average" => Ok(AlphaSchedule::Average),
            "optimal-bm" => Ok(AlphaSchedule::OptimalBm),
            other => Err(Error::Invalid(format!(
                "unknown schedule '{other}' (expected average, optimal-bm, first:<w>, last:<w>)"
            ))),
        },
        Some(("first", w)) => AlphaSchedule::first(
            w.parse().map_err(|_| Error::Invalid(format!("bad schedule width '{w}'")))?,
        ),
        Some(("last", w)) => AlphaSchedule::last(
            w.parse().map_err(|_| Error::Invalid(format!("bad schedule width '{w}'")))?,
        ),
        Some((other, _)) => Err(Error::Invalid(format!("unknown schedule '{other}'"))),
    }
}

fn cmd_variance_check(schedule: &str, d: f64, n_samples: usize, seed: u64) -> bel_bridge::Result<()> {
    let schedule = parse_schedule(schedule)?;
    let formula = bel_second_moment_formula(&schedule, d)?;
    let (mc, se) = mc_second_moment(&schedule, d, n_samples, seed)?;
    println!("schedule = {}", schedule.descriptor());
    println!("formula     {:.6e}", formula.value);
    println!("monte-carlo {mc:.6e} +- {se:.6e}");
    if !formula.boundary_ok {
        println!("warning: normaliser does not vanish fast enough at the horizon");
    }
    Ok(())
}
