use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use gyroshape::checks::{run_suite, Suite, DEFAULT_SEED};
use gyroshape::scenario::{
    compare, energy_report, load_scenario, read_trace, run_scenario, write_trace, Trace, TraceFormat,
};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "gyroshape", version, about = "Rigid-body slit passage with lossless transient shaping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for TraceFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TraceFormat::Csv,
            Format::Jsonl => TraceFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    So3,
    Energy,
    Gradients,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write its trace and print an energy summary.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to jsonl for a `.jsonl` output path, csv otherwise.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Dotted-path override, e.g. `mpc.eps2=0.05`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run randomized property suites.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Compare two traces recorded on the same time grid.
    Compare {
        trace_a: PathBuf,
        trace_b: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "K,V,eps,d")]
        fields: Vec<String>,
        /// Exit 1 unless every field deviates by at most this much.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run several scenarios in parallel, one trace file each.
    Sweep {
        #[arg(long = "scenario", required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn summary(name: &str, trace: &Trace) -> String {
    let mut s = format!(
        "scenario {name}: {} records, {} failed MPC solves\n",
        trace.records.len(),
        trace.mpc_failures
    );
    if let Some(r) = energy_report(trace) {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

fn format_for(out: &Path, format: Option<Format>) -> TraceFormat {
    match format {
        Some(f) => f.into(),
        None if out.extension().is_some_and(|e| e == "jsonl") => TraceFormat::Jsonl,
        None => TraceFormat::Csv,
    }
}

/// Loads, runs and writes one scenario. Errors carry their exit code.
fn run_one(scenario: &Path, out: &Path, format: TraceFormat, overrides: &[String]) -> Result<String, (u8, String)> {
    let cfg = load_scenario(scenario, overrides).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", scenario.display())))?;
    let trace = run_scenario(&cfg).map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", cfg.name)))?;
    write_trace(&trace, out, format).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    Ok(summary(&cfg.name, &trace))
}

fn run(scenario: &Path, out: &Path, format: Option<Format>, overrides: &[String]) -> ExitCode {
    match run_one(scenario, out, format_for(out, format), overrides) {
        Ok(s) => {
            print!("{s}");
            println!("trace written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn check(suite: SuiteArg, seed: u64) -> ExitCode {
    let suites = match suite {
        SuiteArg::So3 => vec![Suite::So3],
        SuiteArg::Energy => vec![Suite::Energy],
        SuiteArg::Gradients => vec![Suite::Gradients],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    println!("seed {seed}");
    let mut failed = 0;
    for s in suites {
        for o in run_suite(s, seed) {
            println!(
                "{} {}/{} ({})",
                if o.passed { "PASS" } else { "FAIL" },
                o.suite,
                o.property,
                o.detail
            );
            failed += usize::from(!o.passed);
        }
    }
    if failed > 0 {
        eprintln!("{failed} properties failed; replay with --seed {seed}");
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn compare_cmd(a: &Path, b: &Path, fields: &[String], tol: Option<f64>) -> ExitCode {
    let load = |p: &Path| read_trace(p).map_err(|e| eprintln!("error: {e}"));
    let (Ok(ta), Ok(tb)) = (load(a), load(b)) else {
        return ExitCode::from(EXIT_CONFIG);
    };
    let names: Vec<&str> = fields.iter().map(|s| s.trim()).collect();
    let cmp = match compare(&ta, &tb, &names) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for (name, dev) in &cmp.deviations {
        println!("max |{name}_a - {name}_b| = {dev:.6e}");
    }
    for (label, path, (t, eps)) in [("a", a, cmp.closest[0]), ("b", b, cmp.closest[1])] {
        println!("{label}: closest approach at t = {t} s, eps = {eps:.6e} ({})", path.display());
    }
    for (label, t) in [("a", &ta), ("b", &tb)] {
        if let Some(r) = energy_report(t) {
            let trend = if r.max_v_increase <= 0.0 { "non-increasing" } else { "increases" };
            println!("{label}: V {trend} (max step increase {:.3e} J)", r.max_v_increase);
        }
    }
    match tol {
        Some(tol) if !cmp.within(tol) => {
            eprintln!("deviation exceeds tolerance {tol:e}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        _ => ExitCode::SUCCESS,
    }
}

fn sweep(scenarios: &[PathBuf], out_dir: &Path, format: Format, overrides: &[String], jobs: Option<usize>) -> ExitCode {
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let format: TraceFormat = format.into();
    let ext = match format {
        TraceFormat::Csv => "csv",
        TraceFormat::Jsonl => "jsonl",
    };
    let outputs: Vec<PathBuf> = scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let stem = s.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
            out_dir.join(format!("{i:02}-{stem}.{ext}"))
        })
        .collect();
    let work = || {
        scenarios
            .par_iter()
            .zip(&outputs)
            .map(|(s, out)| run_one(s, out, format, overrides).map(|summary| (summary, out)))
            .collect::<Vec<_>>()
    };
    let results = match jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
        },
        None => work(),
    };
    let mut worst = 0;
    for r in results {
        match r {
            Ok((summary, out)) => {
                print!("{summary}");
                println!("trace written to {}\n", out.display());
            }
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                worst = worst.max(code);
            }
        }
    }
    ExitCode::from(worst)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            format,
            overrides,
        } => run(&scenario, &out, format, &overrides),
        Command::Check { suite, seed } => check(suite, seed),
        Command::Compare {
            trace_a,
            trace_b,
            fields,
            tol,
        } => compare_cmd(&trace_a, &trace_b, &fields, tol),
        Command::Sweep {
            scenarios,
            out_dir,
            format,
            overrides,
            jobs,
        } => sweep(&scenarios, &out_dir, format, &overrides, jobs),
    }
}
