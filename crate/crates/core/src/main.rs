use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pfasst_fem::harness::{self, Coarsening, HarnessError, Method, RunConfig, StudyConfig, StudyRow};
use pfasst_fem::problems::zeldovich;
use pfasst_fem::BcMode;

#[derive(Parser)]
#[command(name = "pfasst-fem", version, about = "SDC and PFASST runs on the Zeldovich front problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sdc,
    SdcNaive,
    Pfasst,
    PfasstNaive,
}

#[derive(Clone, Copy, ValueEnum)]
enum BcArg {
    Natural,
    Dirichlet,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoarsenArg {
    P,
    H,
}

#[derive(Subcommand)]
enum Command {
    /// Single run; prints one CSV row.
    Run {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        order: usize,
        #[arg(long)]
        elements: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        iters: usize,
        #[arg(long, default_value_t = 4)]
        nodes: usize,
        #[arg(long, default_value_t = 4)]
        block: usize,
        #[arg(long, value_enum, default_value = "natural")]
        bc: BcArg,
        /// Defaults to p for order > 1 and h otherwise.
        #[arg(long, value_enum)]
        coarsen: Option<CoarsenArg>,
    },
    /// Error study over a grid of time steps and iteration counts.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let spec = zeldovich();
    match cli.command {
        Command::Run { method, order, elements, dt, iters, nodes, block, bc, coarsen } => {
            let method = match method {
                MethodArg::Sdc => Method::Sdc,
                MethodArg::SdcNaive => Method::SdcNaive,
                MethodArg::Pfasst => Method::Pfasst,
                MethodArg::PfasstNaive => Method::PfasstNaive,
            };
            let mut run = RunConfig::new(method, order, elements, dt, iters);
            run.nodes = nodes;
            run.block = block;
            run.bc = match bc {
                BcArg::Natural => BcMode::Natural,
                BcArg::Dirichlet => BcMode::DirichletFrozen,
            };
            if let Some(c) = coarsen {
                run.coarsening = match c {
                    CoarsenArg::P => Coarsening::Order,
                    CoarsenArg::H => Coarsening::Halve,
                };
            }
            let u = harness::run_method(&spec, &run)?;
            let space = harness::fine_space(&spec, order, elements)?;
            let mut spec_ref = spec.clone();
            spec_ref.bc = run.bc;
            let reference = harness::reference_solution(&spec_ref, space, nodes, dt)?;
            let row = StudyRow { method, order, elements, dt, k: iters, error_inf: Some(harness::error_inf(&u, &reference)?) };
            println!("{}", harness::CSV_HEADER);
            println!("{}", row.csv_line());
            Ok(())
        }
        Command::Study { config, out } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", config.display())))?;
            let cfg = StudyConfig::parse(&text)?;
            let result = harness::run_study(&spec, &cfg)?;
            match out {
                Some(path) => result.write_csv(fs::File::create(path)?)?,
                None => result.write_csv(io::stdout().lock())?,
            }
            for (k, slope) in &result.slopes {
                match slope {
                    Some(s) => eprintln!("k={k}: slope {s:.3}"),
                    None => eprintln!("k={k}: slope unavailable"),
                }
            }
            match result.failures() {
                0 => Ok(()),
                n => Err(HarnessError::FailedPoints(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
