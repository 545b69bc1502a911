use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dsgen::bench::{self, BenchConfig, BenchError, Distribution, Stage, Workload, CSV_HEADER, FULL_RECORDS_PER_WORKER};
use dsgen::catalog::CatalogParams;

#[derive(Parser)]
#[command(name = "bench", about = "Inspect and benchmark generated concurrent data structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Uniform,
    Zipf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload, once per thread count.
    Run {
        #[arg(long)]
        structure: String,
        /// Comma-separated thread counts; defaults to 1..=available CPUs.
        #[arg(long, value_delimiter = ',')]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        ops: u64,
        #[arg(long, value_enum, default_value = "uniform")]
        dist: Dist,
        #[arg(long, default_value_t = 0.4)]
        theta: f64,
        #[arg(long = "read-ratio", default_value_t = 0.5)]
        read_ratio: f64,
        #[arg(long, default_value_t = 10)]
        columns: usize,
        #[arg(long = "key-domain", default_value_t = 1 << 20)]
        key_domain: u64,
        #[arg(long, default_value_t = 1 << 10)]
        capacity: usize,
        #[arg(long = "records-per-worker", default_value_t = 100_000)]
        records_per_worker: usize,
        /// One million YCSB records per worker.
        #[arg(long = "full-scale")]
        full_scale: bool,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        /// Runs per thread count; each is reported.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long = "no-pin")]
        no_pin: bool,
        /// Emit CSV, to stdout or to the given file.
        #[arg(long, num_args = 0..=1, default_missing_value = "-", require_equals = true)]
        csv: Option<String>,
    },
    /// Print a structure's IR at one compilation stage.
    DumpIr {
        #[arg(long)]
        structure: String,
        /// pre-opt | post-opt | analysis | post-cc
        #[arg(long)]
        stage: String,
    },
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::DumpIr { structure, stage } => {
            let stage: Stage = stage.parse()?;
            print!("{}", bench::dump_ir(&structure, stage, CatalogParams::default())?);
            Ok(())
        }
        Command::Run {
            structure,
            threads,
            ops,
            dist,
            theta,
            read_ratio,
            columns,
            key_domain,
            capacity,
            records_per_worker,
            full_scale,
            seed,
            repeat,
            no_pin,
            csv,
        } => {
            let distribution = match dist {
                Dist::Uniform => Distribution::Uniform,
                Dist::Zipf => Distribution::Zipfian { theta },
            };
            let threads = if threads.is_empty() {
                (1..=std::thread::available_parallelism().map_or(1, |n| n.get())).collect()
            } else {
                threads
            };
            let mut out: Box<dyn Write> = match csv.as_deref() {
                None | Some("-") => Box::new(std::io::stdout()),
                Some(path) => Box::new(
                    std::fs::File::create(path).map_err(|e| BenchError::Usage(format!("cannot write {path}: {e}")))?,
                ),
            };
            if csv.is_some() {
                writeln!(out, "{CSV_HEADER}").ok();
            }
            for t in threads {
                let cfg = BenchConfig {
                    structure: structure.clone(),
                    threads: t,
                    ops_per_thread: ops,
                    distribution,
                    key_domain,
                    capacity,
                    read_ratio,
                    num_columns: columns,
                    records_per_worker: if full_scale { FULL_RECORDS_PER_WORKER } else { records_per_worker },
                    seed,
                    pin_threads: !no_pin,
                    strict: false,
                };
                let workload = Workload::new(&cfg)?;
                for _ in 0..repeat.max(1) {
                    let r = workload.run()?;
                    if csv.is_some() {
                        writeln!(out, "{}", r.csv_row()).ok();
                    } else {
                        writeln!(
                            out,
                            "{} threads={} {:.0} ops/s commits={} aborts={} {:.3}s",
                            r.structure, r.threads, r.throughput, r.commits, r.aborts, r.seconds
                        )
                        .ok();
                    }
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ BenchError::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
