use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rydsim::analysis::{annotate_background, fit_scan};
use rydsim::scan::linear_grid;
use rydsim::sequence::{parse, Engine, PulseProgram};
use rydsim::transport::{equilibrium_positions, minimum_trajectory, residual_excitation, RampShape, TransportRamp};
use rydsim::units::{parse_quantity, Dimension};
use rydsim::{ExperimentConfig, ScanResult};

/// Input or parse problem: exit 2. Numerical non-convergence: exit 3.
enum Failure {
    Input(String),
    Numeric(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "rydsim", version, about = "Addressed Rydberg excitation of trapped-ion crystals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Detuning,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a sequence file and print its normalized form.
    Parse { sequence: PathBuf },
    /// Run a sequence at one VUV detuning and print per-ion fractions.
    Run {
        sequence: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "0", value_parser = frequency)]
        detuning: f64,
        #[arg(long, default_value_t = 1000)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-shot event logs here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep the VUV detuning and write the scan CSV.
    Scan {
        sequence: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "detuning")]
        param: Param,
        #[arg(long, value_parser = frequency, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, value_parser = frequency, allow_hyphen_values = true)]
        to: f64,
        #[arg(long)]
        points: usize,
        #[arg(long, default_value_t = 1000)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fit one ion's column of a scan CSV with a single Gaussian.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        ion: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Constant added to the addressed ions before fitting.
        #[arg(long)]
        background: Option<f64>,
        #[arg(long, value_delimiter = ',', requires = "background")]
        addressed: Vec<usize>,
        /// Write the annotated scan CSV here.
        #[arg(long, requires = "background")]
        annotated: Option<PathBuf>,
    },
    /// Print equilibrium positions (m), one per line.
    Positions {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Simulate a filtered transport ramp.
    Transport {
        #[arg(long, value_parser = voltage, allow_hyphen_values = true)]
        dv: f64,
        #[arg(long, value_parser = time)]
        t: f64,
        #[arg(long, default_value = "linear")]
        shape: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the sampled trajectory CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn frequency(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dimension::Frequency)
}

fn voltage(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dimension::Voltage)
}

fn time(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dimension::Time)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => ExperimentConfig::from_json(&read(p)?).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_program(path: &Path) -> Result<PulseProgram, Failure> {
    parse(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_trace(path: Option<&Path>, lines: Option<Vec<String>>) -> CliResult {
    if let (Some(p), Some(lines)) = (path, lines) {
        let mut text = lines.join("\n");
        text.push('\n');
        write(p, &text)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult {
    match cli.command {
        Command::Parse { sequence } => {
            print!("{}", load_program(&sequence)?.normalized());
        }
        Command::Run { sequence, config, detuning, shots, seed, trace } => {
            let engine = Engine::new(&load_program(&sequence)?, &load_config(config.as_deref())?)?;
            let r = engine.run(detuning, shots, seed, trace.is_some())?;
            for (i, s) in r.ions.iter().enumerate() {
                println!("ion={i} bright={} signal={} err={}", s.bright, s.signal, s.err);
            }
            write_trace(trace.as_deref(), r.trace)?;
        }
        Command::Scan { sequence, config, param: Param::Detuning, from, to, points, shots, seed, out, trace } => {
            let engine = Engine::new(&load_program(&sequence)?, &load_config(config.as_deref())?)?;
            let grid = linear_grid(from, to, points)?;
            let (scan, lines) = engine.scan_traced(&grid, shots, seed, trace.is_some())?;
            write(&out, &scan.to_csv())?;
            write_trace(trace.as_deref(), trace.is_some().then_some(lines))?;
        }
        Command::Fit { input, ion, out, background, addressed, annotated } => {
            let mut scan = ScanResult::from_csv(&read(&input)?)?;
            if let Some(b) = background {
                let ions = if addressed.is_empty() { vec![ion] } else { addressed };
                scan = annotate_background(&scan, &ions, b)?;
                if let Some(p) = annotated {
                    write(&p, &scan.to_csv())?;
                }
            }
            let fit = fit_scan(&scan, ion)?;
            let json = fit.to_json() + "\n";
            match out {
                Some(p) => write(&p, &json)?,
                None => print!("{json}"),
            }
            if !fit.converged {
                return Err(Failure::Numeric(format!("fit did not converge after {} iterations", fit.iterations)));
            }
        }
        Command::Positions { n, config } => {
            let cfg = load_config(config.as_deref())?;
            let pos = equilibrium_positions(n, &cfg.trap()).map_err(|e| match e {
                rydsim::transport::TransportError::NoConvergence { .. } => Failure::Numeric(e.to_string()),
                _ => Failure::Input(e.to_string()),
            })?;
            for x in pos {
                println!("{x:?}");
            }
        }
        Command::Transport { dv, t, shape, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let ramp = TransportRamp {
                delta_v: dv,
                kappa: cfg.kappa_m_per_v,
                duration: t,
                shape: shape.parse::<RampShape>()?,
                filter_cutoff: cfg.filter_cutoff_hz,
            };
            let traj = minimum_trajectory(&ramp, t / 1000.0)?;
            let quanta = residual_excitation(&traj, &cfg.trap())?;
            println!("final_displacement_m={:?}", ramp.final_displacement());
            println!("residual_quanta={quanta}");
            if let Some(p) = out {
                write(&p, &traj.to_csv())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
