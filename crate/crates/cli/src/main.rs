//! `cbkm`: synthesise corpora, detect key moments, evaluate trajectories and
//! run the brute-force oracles.
//!
//! Exit codes: 0 success, 1 verification or processing failure, 2 usage or
//! configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbkm::config::RunConfig;
use cbkm::dsp::{band_pass, short_time_energy};
use cbkm::ground_truth::Pole;
use cbkm::io::{read_record, write_record, Corpus, RecordFormat};
use cbkm::pipeline::{
    closing_times, detect_corpus, detections_csv, evaluate, parse_detections_csv, report_json, synth_corpus,
};
use cbkm::plot::report_figures;
use cbkm::record::OperationRecord;
use cbkm::verify::{run_oracle, Oracle};
use cbkm::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "cbkm",
    version,
    about = "Circuit-breaker key-moment detection from vibration"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON run configuration layered over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true, env = "CBKM_WORKERS")]
    workers: Option<usize>,
    /// Seed for synthesis and oracle cases.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Contact-channel pole used as ground truth.
    #[arg(long, global = true, value_parser = parse_pole)]
    pole: Option<Pole>,
    /// Record format for written files.
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<RecordFormat>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic run-to-failure corpus with a manifest.
    Synth {
        /// Number of operations.
        #[arg(long)]
        ops: Option<usize>,
        /// Add the post-contact sustained tone.
        #[arg(long)]
        sustained: bool,
    },
    /// Detect key moments and change points for every op of a corpus.
    Detect {
        /// Corpus directory or manifest file.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Score detections against contact-separation ground truth.
    Eval {
        /// Detections CSV written by `detect`.
        #[arg(long)]
        detections: PathBuf,
        /// Corpus directory or manifest file.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Compare optimised routines with brute-force references.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        /// Run a single oracle: ste, binseg, cost or detector.
        #[arg(long, value_parser = parse_oracle)]
        only: Option<Oracle>,
        /// Test hook: corrupt one optimised routine.
        #[arg(long, hide = true, value_parser = parse_oracle)]
        force_bug: Option<Oracle>,
    },
    /// Band-pass the vibration channel of one record.
    Filter {
        #[arg(long)]
        input: PathBuf,
    },
    /// Dump the short-time energy envelope of one record as CSV.
    Ste {
        #[arg(long)]
        input: PathBuf,
        /// Window length; defaults to the t2 detector's window.
        #[arg(long)]
        window: Option<usize>,
    },
}

fn parse_pole(s: &str) -> Result<Pole, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<RecordFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_oracle(s: &str) -> Result<Oracle, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Error carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_config() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn out_dir(global: &GlobalArgs) -> CliResult<&Path> {
    let dir = global
        .out
        .as_deref()
        .ok_or_else(|| usage("--out DIR is required for this command"))?;
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn workers(global: &GlobalArgs) -> CliResult<usize> {
    match global.workers {
        Some(0) => Err(usage("--workers must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Defaults, then the JSON file, then flags.
fn load_config(global: &GlobalArgs, command: &Command) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(global.config.as_deref())?;
    if let Some(seed) = global.seed {
        cfg.synth.degradation.seed = seed;
    }
    if let Some(pole) = global.pole {
        cfg.ground_truth.pole = pole;
    }
    if let Some(format) = global.format {
        cfg.io.format = format;
    }
    if let Command::Synth { ops, sustained } = command {
        if let Some(n) = ops {
            if *n == 0 {
                return Err(usage("--ops must be at least 1"));
            }
            cfg.synth.degradation.n_ops = *n;
        }
        if *sustained {
            cfg.synth.sustained = true;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_synth(global: &GlobalArgs, cfg: &RunConfig) -> CliResult {
    let dir = out_dir(global)?;
    let manifest = synth_corpus(cfg, dir, workers(global)?)?;
    let deg = &cfg.synth.degradation;
    println!("corpus:      {}", dir.display());
    println!("n_ops:       {}", manifest.ops.len());
    println!("t2 drift:    {} -> {} ms", deg.t2_start_ms, deg.t2_end_ms);
    println!("seed:        {}", deg.seed);
    println!("format:      {}", cfg.io.format.extension());
    println!("sustained:   {}", cfg.synth.sustained);
    Ok(())
}

fn cmd_detect(global: &GlobalArgs, cfg: &RunConfig, corpus: &Path) -> CliResult {
    let dir = out_dir(global)?;
    let corpus = Corpus::open(corpus)?;
    let batch = detect_corpus(&corpus, cfg, workers(global)?)?;
    let path = dir.join("detections.csv");
    fs::write(&path, detections_csv(&batch.results))?;
    println!(
        "detections:  {} ({} of {} ops, {} skipped)",
        path.display(),
        batch.results.len(),
        batch.total,
        batch.failures.len()
    );
    batch.check(cfg.max_failure_fraction)?;
    Ok(())
}

fn cmd_eval(global: &GlobalArgs, cfg: &RunConfig, detections: &Path, corpus: &Path) -> CliResult {
    let dir = out_dir(global)?;
    let text = fs::read_to_string(detections)?;
    let detections = parse_detections_csv(&text)?;
    let corpus = Corpus::open(corpus)?;
    let closing = closing_times(&corpus, cfg, workers(global)?)?;
    let report = evaluate(&detections, &closing.results, cfg, corpus.manifest.stage_bounds)?;

    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("report.json"), report_json(&report, cfg))?;
    for fig in report_figures(&report) {
        fs::write(dir.join(format!("{}.svg", fig.name)), fig.to_svg())?;
    }
    let s = &report.summary;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4} ms"));
    println!("ops joined:        {}", s.n_ops);
    println!(
        "rmse t2:           {} ({} ops)",
        show(s.rmse_t2_ms),
        s.rmse_t2_contributing
    );
    println!(
        "rmse cp:           {} ({} ops)",
        show(s.rmse_cp_ms),
        s.rmse_cp_contributing
    );
    println!("cp delay:          {}", show(s.delay_reference_ms));
    println!("rmse cp corrected: {}", show(s.rmse_cp_delay_corrected_ms));
    println!("report:            {}", dir.join("report.json").display());
    closing.check(cfg.max_failure_fraction)?;
    Ok(())
}

fn cmd_oracle(global: &GlobalArgs, cases: usize, only: Option<Oracle>, bug: Option<Oracle>) -> CliResult {
    if cases == 0 {
        return Err(usage("--cases must be at least 1"));
    }
    let seed = global.seed.unwrap_or(1);
    let oracles: Vec<Oracle> = match only {
        Some(o) => vec![o],
        None => Oracle::ALL.to_vec(),
    };
    let mut failed = false;
    for o in oracles {
        let report = run_oracle(o, cases, seed, bug == Some(o));
        println!("{report}");
        failed |= !report.passed();
    }
    if failed {
        return Err(Failure {
            code: 1,
            message: "oracle mismatch".into(),
        });
    }
    Ok(())
}

fn read_input(cfg: &RunConfig, input: &Path) -> CliResult<OperationRecord> {
    Ok(read_record(input, &cfg.io.channels)?)
}

fn cmd_filter(global: &GlobalArgs, cfg: &RunConfig, input: &Path) -> CliResult {
    let dir = out_dir(global)?;
    let mut rec = read_input(cfg, input)?;
    rec.vibration = band_pass(&rec.vibration, &cfg.filter)?;
    let path = dir.join(format!("filtered.{}", cfg.io.format.extension()));
    write_record(&rec, &path, cfg.io.format, &cfg.io.channels)?;
    println!("filtered:    {}", path.display());
    Ok(())
}

fn cmd_ste(global: &GlobalArgs, cfg: &RunConfig, input: &Path, window: Option<usize>) -> CliResult {
    use std::fmt::Write as _;
    let dir = out_dir(global)?;
    let rec = read_input(cfg, input)?;
    let filtered = band_pass(&rec.vibration, &cfg.filter)?;
    let ste = short_time_energy(&filtered, window.unwrap_or(cfg.t2().ste_window))?;
    let mut out = String::from("time_ms,ste\n");
    for (i, v) in ste.values().iter().enumerate() {
        let _ = writeln!(out, "{:.6},{v:e}", ste.time_ms(i));
    }
    let path = dir.join("ste.csv");
    fs::write(&path, out)?;
    println!("ste:         {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli.global, &cli.command)?;
    let g = &cli.global;
    match &cli.command {
        Command::Synth { .. } => cmd_synth(g, &cfg),
        Command::Detect { corpus } => cmd_detect(g, &cfg, corpus),
        Command::Eval { detections, corpus } => cmd_eval(g, &cfg, detections, corpus),
        Command::Oracle { cases, only, force_bug } => cmd_oracle(g, *cases, *only, *force_bug),
        Command::Filter { input } => cmd_filter(g, &cfg, input),
        Command::Ste { input, window } => cmd_ste(g, &cfg, input, *window),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
