use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use oscresp::driven::{classical_displacement, ode_oscillator, CurrentProfile, DriveScenario, OdeOptions};
use oscresp::fock::StateKind;
use oscresp::io::{fmt_f64, to_csv_string, to_json_string, KernelRecord};
use oscresp::kernels::{commutator_kernel, commutator_qp_kernel, osc_kernels, Commensurability, OscillatorParams};
use oscresp::spectral::{Kernel, Sampled, TimeGrid};
use oscresp::suite::{output_dir, run_suite, Config, Suite, SuiteReport};
use oscresp::wick::{enumerate_pairings, hori_expand, parse_factors, perfect_pairings};
use oscresp::{Error, Result};

/// Green's-function identities of the driven harmonic oscillator, checked against a
/// truncated Fock-space oracle.
#[derive(Debug, Parser)]
#[command(name = "oscresp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a verification suite and write its JSON report.
    Verify {
        /// kernels, spectral, wick, functional, driven, charged, field or all
        suite: Suite,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $OSCRESP_OUT_DIR, else the working directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print only the summary line.
        #[arg(long)]
        quiet: bool,
    },
    /// Export an oscillator kernel sampled on a grid.
    Kernels {
        #[arg(long, default_value = "1,1,1")]
        params: String,
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// DFT bin carrying omega0; the step is chosen to match.
        #[arg(long, conflicts_with = "dt")]
        bin: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        /// Admit a grid on which omega0 is off-bin.
        #[arg(long)]
        loose: bool,
        #[arg(long, value_enum, default_value_t = KernelKind::Retarded)]
        kind: KernelKind,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Driven trajectory: q_j by convolution against the ODE solution, as CSV.
    Drive {
        /// step:A, sine:A or zero
        #[arg(long)]
        current: String,
        #[arg(long, default_value_t = 0.0)]
        t_on: f64,
        #[arg(long, default_value = "1,1,1")]
        params: String,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contraction expansion of a branch-labelled product, or the pairings of m factors.
    Wick {
        /// e.g. "+t0.0,+t1.3,-t0.7"
        #[arg(long, conflicts_with = "m")]
        factors: Option<String>,
        #[arg(long)]
        m: Option<usize>,
        /// With --m: perfect pairings only.
        #[arg(long, requires = "m")]
        perfect: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a saved report; exits 1 if it has gating failures.
    Report { file: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelKind {
    Retarded,
    Contraction,
    Feynman,
    FeynmanConj,
    Commutator,
    QpCommutator,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Serialize)]
struct PairingOut {
    pairs: Vec<(usize, usize)>,
    rest: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit(out: Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(&path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Verify { suite, config, seed, out, quiet } => {
            let mut cfg = match config {
                Some(path) => Config::load(&path)?,
                None => Config::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_suite(suite, &cfg)?;
            let dir = output_dir(out);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join(report.default_file_name());
            report.write(&path)?;
            let text = report.render();
            if quiet {
                print!("{}", text.lines().last().map(|l| format!("{l}\n")).unwrap_or_default());
            } else {
                print!("{text}");
            }
            println!("report written to {}", path.display());
            Ok(report.exit_code() as u8)
        }
        Command::Kernels { params, n, bin, dt, loose, kind, format, out } => {
            let p = OscillatorParams::parse(&params)?;
            let grid = match dt {
                Some(dt) => TimeGrid::new(n, dt)?,
                None => TimeGrid::commensurate(n, p.omega0(), bin.unwrap_or(8))?,
            };
            let mode = if loose { Commensurability::Loose } else { Commensurability::Strict };
            let k = osc_kernels(&p, grid, mode)?;
            let kernel: Kernel = match kind {
                KernelKind::Retarded => k.retarded,
                KernelKind::Contraction => k.contraction,
                KernelKind::Feynman => k.feynman,
                KernelKind::FeynmanConj => k.feynman.conj(),
                KernelKind::Commutator => commutator_kernel(&k.retarded, p.hbar()),
                KernelKind::QpCommutator => commutator_qp_kernel(&k.retarded, p.mass(), p.hbar()),
            };
            let text = match format {
                Format::Csv => to_csv_string(&kernel),
                Format::Json => to_json_string(&KernelRecord::from_sampled(&kernel))? + "\n",
            };
            emit(out, &text)?;
            Ok(0)
        }
        Command::Drive { current, t_on, params, n, dt, out } => {
            let p = OscillatorParams::parse(&params)?;
            let grid = TimeGrid::new(n, dt)?;
            let profile = CurrentProfile::parse(&current, t_on)?;
            let sc = DriveScenario::new(p, grid, profile, StateKind::Vacuum)?;
            let k = osc_kernels(&p, grid, Commensurability::Loose)?;
            let q = classical_displacement(&sc, &k.retarded)?;
            let ode = ode_oscillator(&sc, OdeOptions::default())?;
            let mut text = String::from("t,q_j,ode_q,abs_diff\n");
            for i in 0..grid.n() {
                let (a, b) = (q.values()[i].re, ode.values()[i].re);
                text.push_str(&format!("{},{},{},{}\n", fmt_f64(grid.time(i)), fmt_f64(a), fmt_f64(b), fmt_f64((a - b).abs())));
            }
            emit(out, &text)?;
            Ok(0)
        }
        Command::Wick { factors, m, perfect, out } => {
            let json = match (factors, m) {
                (Some(spec), _) => to_json_string(&hori_expand(&parse_factors(&spec)?)?)?,
                (None, Some(m)) => {
                    let pairings = if perfect { perfect_pairings(m)? } else { enumerate_pairings(m)? };
                    let items: Vec<PairingOut> = pairings
                        .into_iter()
                        .map(|pairs| {
                            let rest = (0..m).filter(|i| !pairs.iter().any(|&(a, b)| a == *i || b == *i)).collect();
                            PairingOut { pairs, rest }
                        })
                        .collect();
                    to_json_string(&items)?
                }
                (None, None) => return Err(Error::Parse("wick needs --factors or --m".into())),
            };
            emit(out, &(json + "\n"))?;
            Ok(0)
        }
        Command::Report { file } => {
            let report = SuiteReport::read(&file)?;
            print!("{}", report.render());
            Ok(report.exit_code() as u8)
        }
    }
}
