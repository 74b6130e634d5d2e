mod compare;
mod config;
mod table;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thermocc::dmcc::{run_quench, Truncation};
use thermocc::observables::quadratic_oracle;
use thermocc::oracle_dense::{build_thermal_ket, propagate_dense};
use thermocc::oracle_tebd::run_tebd;
use thermocc::thermofield::build_super_hamiltonian;
use thermocc::wick::generate_eom;
use thermocc::{build_bath, Occupations, SiamConfig, TrajectoryRecord};

use crate::config::{parse_config, ConfigFile, SD_DEFAULT_N_BATH};
use crate::table::Table;

#[derive(Parser)]
#[command(name = "thermocc", version, about = "Thermo-field coupled-cluster impurity dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a quench and write the observables as CSV.
    Run {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lift the memory guard on the DMCC-SD amplitude arrays.
        #[arg(long)]
        allow_large: bool,
    },
    /// Per-column deviation between two CSV runs on the same time grid.
    Compare { a: PathBuf, b: PathBuf },
    /// Print the compiled amplitude equations.
    DumpEquations {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "dmcc-sd")]
        method: Method,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    DmccS,
    DmccSd,
    Tebd,
    Dense,
    Quadratic,
}

/// Bytes the DMCC-SD propagator may claim before `--allow-large` is needed:
/// three doubles blocks of `N⁴` complex numbers, held about six times over by
/// the state, the Runge-Kutta stages and the evaluator.
const SD_MEMORY_LIMIT: f64 = 8.0 * (1u64 << 30) as f64;

fn sd_bytes(n_bath: usize) -> f64 {
    let n = (n_bath + 1) as f64;
    6.0 * 3.0 * n.powi(4) * 16.0
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Capacity(String),
    Numerical(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Capacity(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Capacity(m) | Failure::Numerical(m) | Failure::Other(m) => m,
        }
    }
}

impl From<thermocc::Error> for Failure {
    fn from(e: thermocc::Error) -> Self {
        use thermocc::Error as E;
        let m = e.to_string();
        match e {
            E::InvalidConfig { .. } | E::Unsupported(_) => Failure::Config(m),
            E::Capacity(_) | E::BondOverflow { .. } => Failure::Capacity(m),
            E::NonFinite { .. } | E::DimensionMismatch(_) | E::NotNormalOrdered(_) => Failure::Numerical(m),
        }
    }
}

fn load_config(path: &Path, method: Method) -> Result<SiamConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let ConfigFile { mut config, n_bath_set } =
        parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if !n_bath_set && method == Method::DmccSd {
        config.n_bath = SD_DEFAULT_N_BATH;
    }
    config.validate()?;
    Ok(config)
}

fn simulate(method: Method, config: &SiamConfig, allow_large: bool) -> Result<TrajectoryRecord, Failure> {
    Ok(match method {
        Method::DmccS => run_quench(config, Truncation::Singles)?,
        Method::DmccSd => {
            let bytes = sd_bytes(config.n_bath);
            if bytes > SD_MEMORY_LIMIT && !allow_large {
                return Err(Failure::Capacity(format!(
                    "DMCC-SD at n_bath = {} needs about {:.1} GiB; pass --allow-large to proceed",
                    config.n_bath,
                    bytes / (1u64 << 30) as f64
                )));
            }
            run_quench(config, Truncation::SinglesDoubles)?
        }
        Method::Tebd => run_tebd(config)?,
        Method::Dense => {
            let bath = build_bath(config)?;
            let rho = build_thermal_ket(&Occupations::reference(config, &bath))?;
            propagate_dense(&rho, config)?
        }
        Method::Quadratic => quadratic_oracle(config)?,
    })
}

fn write_table(path: &Path, table: &Table) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    table.write(&mut out).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    out.flush().map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn read_table(path: &Path) -> Result<Table, Failure> {
    let file = File::open(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    Table::read(file).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            method,
            config,
            out,
            allow_large,
        } => {
            let config = load_config(&config, method)?;
            let record = simulate(method, &config, allow_large)?;
            write_table(&out, &Table::from_record(&record))
        }
        Command::Compare { a, b } => {
            let report = compare::compare(&read_table(&a)?, &read_table(&b)?).map_err(Failure::Other)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::DumpEquations { config, method } => {
            let truncation = match method {
                Method::DmccS => Truncation::Singles,
                Method::DmccSd => Truncation::SinglesDoubles,
                _ => return Err(Failure::Config("dump-equations takes dmcc-s or dmcc-sd".into())),
            };
            let config = load_config(&config, method)?;
            let bath = build_bath(&config)?;
            let occ = Occupations::reference(&config, &bath);
            let sh = build_super_hamiltonian(&config, &bath, &occ, 0.0)?;
            print!("{}", generate_eom(&sh, truncation)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("thermocc: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
