use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hetsel::bounds::{bound_curve, bound_for_run, CurveSpec};
use hetsel::checks::run_checks;
use hetsel::costs::{build_gram, compute_weights, make_oracle, wfp, CostKind, WeightRule};
use hetsel::experiments::{run_experiment, ExperimentConfig};
use hetsel::instance::parse_instance;
use hetsel::par::{self, Exec};
use hetsel::report::{bounds_csv, opt_ratio_csv, summary_csv, trials_jsonl, SelectionDocument};
use hetsel::rng::{Purpose, RngStream};
use hetsel::selectors::{run_method, Method, OptOptions, DEFAULT_OPT_CAP};
use hetsel::{Error, Result};

/// Joint greedy sensor selection for heterogeneous sensor networks.
///
/// The worker count can be set with the HETSEL_THREADS environment variable;
/// it never changes any output.
#[derive(Parser)]
#[command(name = "hetsel", version)]
struct Cli {
    /// Print errors as a JSON object on standard error.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select sensors for one instance file.
    Select(SelectArgs),
    /// Evaluate performance guarantees and write them as CSV.
    Bounds(BoundsArgs),
    /// Run a Monte-Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Run the randomized self-checks.
    Check(CheckArgs),
}

#[derive(Args)]
struct SelectArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// jgs, gs, igs, rs, irs or opt.
    #[arg(long, default_value = "jgs", value_parser = parse_method)]
    method: Method,
    /// wfc, trace, logdet, maxeig or negmse.
    #[arg(long, default_value = "wfc", value_parser = parse_cost)]
    cost: CostKind,
    /// recip, shifted, sigmoid, tanh or unit.
    #[arg(long, default_value = "sigmoid", value_parser = parse_weight)]
    weight: WeightRule,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest search space exhaustive search will enumerate.
    #[arg(long, default_value_t = DEFAULT_OPT_CAP as u64)]
    opt_cap: u64,
    /// Include the wall time in the output document.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BoundsArgs {
    /// Quota of the set that fills first; a comma list with --sweep-sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    m1: Vec<usize>,
    /// Quota of the other set; a comma list with --sweep-sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    m2: Vec<usize>,
    /// Iteration at which the first set fills.
    #[arg(long, conflicts_with = "sweep_ms")]
    ms: Option<usize>,
    /// One row per switch iteration from M1 to M1+M2-1.
    #[arg(long, conflicts_with = "sweep_sizes")]
    sweep_ms: bool,
    /// One row per (M1, M2) pair, switching at M1+M2-1 unless --ms is given.
    #[arg(long)]
    sweep_sizes: bool,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write every trial to trials.jsonl.
    #[arg(long)]
    write_trials: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per check.
    #[arg(long, default_value_t = 200)]
    cases: usize,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cost(s: &str) -> std::result::Result<CostKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_weight(s: &str) -> std::result::Result<WeightRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn select(args: SelectArgs) -> Result<()> {
    let started = Instant::now();
    let inst = parse_instance(&read(&args.instance)?, args.seed)?;
    let weights = compute_weights(&inst.noise, args.weight)?;
    let gram = build_gram(&inst.model, None, &weights)?;
    let oracle = make_oracle(args.cost, &gram, &inst.model, &inst.noise)?;
    let opt = OptOptions {
        cap: args.opt_cap as u128,
        exec: Exec::default(),
    };
    let stream = RngStream::for_run(args.seed, Purpose::Selector);
    let result = run_method(args.method, &*oracle, &inst.noise, &inst.constraints, stream, opt)?;
    let wfc = gram.wfp_full() - wfp(&gram, &result.kept_union())?;
    let quotas: Vec<usize> = if oracle.complement_mode() {
        inst.noise.set_sizes().iter().zip(&inst.constraints.counts).map(|(n, m)| n - m).collect()
    } else {
        inst.constraints.counts.clone()
    };
    let bound = bound_for_run(&quotas, &result.switch_iterations);
    let cost_name = args.cost.name();
    let mut doc = SelectionDocument::new(
        args.method.name(),
        cost_name,
        args.weight.name(),
        args.seed,
        &result,
        wfc,
        bound,
    );
    let elapsed = started.elapsed().as_secs_f64();
    if args.timing {
        doc.wall_time_s = Some(elapsed);
    }
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write(args.out.as_deref(), &text)?;
    eprintln!("selection finished in {elapsed:.3} s");
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let single = |v: &[usize], name: &str| -> Result<usize> {
        match v {
            [x] => Ok(*x),
            _ => Err(Error::InvalidConfig(format!("--{name} takes one value unless --sweep-sizes is set"))),
        }
    };
    let spec = if args.sweep_sizes {
        CurveSpec::VarySizes {
            m1: args.m1,
            m2: args.m2,
            switch: args.ms,
        }
    } else if args.sweep_ms {
        CurveSpec::VarySwitch {
            m1: single(&args.m1, "m1")?,
            m2: single(&args.m2, "m2")?,
        }
    } else {
        let m1 = single(&args.m1, "m1")?;
        let m2 = single(&args.m2, "m2")?;
        CurveSpec::Point {
            m1,
            m2,
            switch: args.ms.unwrap_or((m1 + m2).saturating_sub(1)),
        }
    };
    write(args.out.as_deref(), &bounds_csv(&bound_curve(&spec)?))
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut config = ExperimentConfig::from_json(&read(&args.config)?)?;
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    let started = Instant::now();
    let out = run_experiment(&config, Exec::default())?;
    fs::create_dir_all(&args.out_dir)?;
    let dir = args.out_dir.as_path();
    write(Some(&dir.join("summary.csv")), &summary_csv(&out.summary))?;
    if let Some(rows) = &out.opt_ratio {
        write(Some(&dir.join("opt_ratio.csv")), &opt_ratio_csv(rows))?;
    }
    if args.write_trials {
        write(Some(&dir.join("trials.jsonl")), &trials_jsonl(&out.records)?)?;
    }
    let failed: usize = out.summary.iter().map(|r| r.trials_failed).sum();
    eprintln!(
        "{} trials x {} sweep points in {:.2} s, {failed} method runs failed",
        config.trials,
        config.sweep.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn check(args: CheckArgs) -> Result<bool> {
    let outcomes = run_checks(args.seed, args.cases);
    let mut all = true;
    for o in &outcomes {
        all &= o.passed;
        println!(
            "{} {} ({} cases) {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.cases,
            o.detail
        );
    }
    Ok(all)
}

fn report_error(e: &Error, json: bool) {
    if json {
        let doc = serde_json::json!({
            "error": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        });
        eprintln!("{doc}");
    } else {
        eprintln!("error: {e}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            if json_errors {
                let doc = serde_json::json!({
                    "error": "InvalidArguments",
                    "message": e.to_string().trim_end(),
                    "exit_code": 1,
                });
                eprintln!("{doc}");
            } else {
                eprint!("{e}");
            }
            return ExitCode::from(1);
        }
    };
    if let Ok(v) = std::env::var("HETSEL_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => par::init_threads(Some(n)),
            _ => {
                report_error(&Error::InvalidConfig(format!("HETSEL_THREADS must be a positive integer, got {v:?}")), cli.json_errors);
                return ExitCode::from(1);
            }
        }
    }
    let outcome = match cli.command {
        Command::Select(a) => select(a).map(|_| true),
        Command::Bounds(a) => bounds(a).map(|_| true),
        Command::Experiment(a) => experiment(a).map(|_| true),
        Command::Check(a) => check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            report_error(&e, cli.json_errors);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
