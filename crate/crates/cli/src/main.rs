use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svr_core::baselines::Method;
use svr_core::experiment::{generate_cache, run_ablation, run_experiment, ExperimentConfig};
use svr_core::memory::MemoryPolicy;
use svr_core::metrics::RunRecord;
use svr_core::report::report;
use svr_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "svr",
    version,
    about = "Continual-learning experiments with singular value-based rehearsal"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the task sequences and cache them as binary files.
    Gen(Overrides),
    /// Run the method x memory grid.
    Run(Overrides),
    /// Run the SVR ablation arms.
    Ablate(Overrides),
    /// Summarize the run records of an output directory.
    Report {
        /// Output directory of a previous `run` or `ablate`.
        run_dir: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// JSON config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds to run (comma separated), replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Methods to run (comma separated), e.g. svr,er,fine_tune.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Memory sizes (comma separated): a number for a fixed buffer, `<n>t` for n per task.
    #[arg(long, value_delimiter = ',')]
    memory: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if !self.method.is_empty() {
            cfg.methods = self
                .method
                .iter()
                .map(|m| Method::from_name(m))
                .collect::<Result<_>>()?;
        }
        if !self.memory.is_empty() {
            let policies: Vec<MemoryPolicy> = self
                .memory
                .iter()
                .map(|m| MemoryPolicy::from_label(m))
                .collect::<Result<_>>()?;
            cfg.ablation_memory = policies[0];
            cfg.memory = policies;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_records(records: &[RunRecord]) {
    println!(
        "{:<28} {:>5} {:>10} {:>10} {:>10}",
        "arm", "seed", "avg_err", "bwt", "final_err"
    );
    for r in records {
        println!(
            "{:<28} {:>5} {:>10.4} {:>+10.4} {:>10.4}",
            r.arm, r.seed, r.summary.average_error, r.summary.bwt, r.summary.final_task_error
        );
        for m in &r.memory_log {
            let per_task: Vec<String> =
                m.per_task.iter().map(|(t, n)| format!("{t}:{n}")).collect();
            println!(
                "    memory after task {}: {} entries [{}]",
                m.task,
                m.total,
                per_task.join(" ")
            );
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(o) => {
            let cfg = o.config()?;
            let files = generate_cache(&cfg)?;
            println!(
                "wrote {} task files under {}",
                files.len(),
                cfg.out_dir.display()
            );
        }
        Command::Run(o) => {
            let cfg = o.config()?;
            let records = run_experiment(&cfg)?;
            print_records(&records);
        }
        Command::Ablate(o) => {
            let cfg = o.config()?;
            let records = run_ablation(&cfg)?;
            print_records(&records);
        }
        Command::Report { run_dir } => {
            let rep = report(&run_dir)?;
            print!("{}", rep.summary_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::Io(_) | Error::Format { .. } | Error::Report { .. } => 3,
        _ => 1,
    }
}
