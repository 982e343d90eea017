//! Shot-by-shot execution of a pulse program over an ion register.

use std::f64::consts::PI;

use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::atomic::{Half, Level, Term};
use crate::coherent::{apply_swap, beam_profile, transfer_probability, PiPulse};
use crate::config::{ConfigError, ExperimentConfig};
use crate::rydberg::{Event, LineShape, RateTable, RydbergConfig};
use crate::scan::{validate_grid, ScanError, ScanResult};
use crate::seed::shot_rng;
use crate::sequence::program::{Displacement, Instruction, PulseProgram, Signal};
use crate::transport::equilibrium_positions;

/// Couplings below this fraction of the on-axis value cannot be calibrated
/// into a π pulse.
const MIN_TARGET_COUPLING: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("line {line}: ion index {ion} out of range for a crystal of {n_ions}")]
    IonIndex { line: usize, ion: usize, n_ions: usize },
    #[error("line {line}: ion {ion} sits {offset_um:.2} um from the addressing beam and cannot be driven")]
    Unaddressed { line: usize, ion: usize, offset_um: f64 },
    #[error("crystal geometry: {0}")]
    Geometry(String),
    #[error("shots must be >= 1")]
    NoShots,
    #[error(transparent)]
    Scan(#[from] ScanError),
}

#[derive(Debug, Clone)]
enum Step {
    Prepare(Level),
    Swap { lower: Level, upper: Level, probs: Vec<f64>, duration: f64 },
    Vuv { offset: f64, duration: f64 },
    Pump397,
    Pump393,
    Wait { duration: f64 },
    Detect { duration: f64 },
}

/// Per-ion statistics from one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonStat {
    pub bright: f64,
    /// Fraction of shots counted as signal (bright or dark, per program).
    pub signal: f64,
    /// Binomial standard error of `signal`.
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub detuning: f64,
    pub shots: u64,
    pub ions: Vec<IonStat>,
    /// Event log lines, present when tracing was requested.
    pub trace: Option<Vec<String>>,
}

/// A program bound to a configuration, ready to run.
#[derive(Debug, Clone)]
pub struct Engine {
    steps: Vec<Step>,
    signal: Signal,
    n_ions: usize,
    positions: Vec<f64>,
    final_positions: Vec<f64>,
    shape: LineShape,
    rydberg: RydbergConfig,
    pump393_fidelity: f64,
    pump397_fidelity: f64,
    vuv_unswitched: bool,
}

struct ShotOutcome {
    bright: Vec<bool>,
    trace: Vec<String>,
}

impl Engine {
    pub fn new(program: &PulseProgram, cfg: &ExperimentConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let n = cfg.n_ions;
        let positions = equilibrium_positions(n, &cfg.trap())
            .map_err(|e| EngineError::Geometry(e.to_string()))?;
        let waist = cfg.beam.waist_m;
        let center = cfg.beam.center_m;
        let mut pos = positions.clone();
        let mut steps = Vec::with_capacity(program.len());

        for (instr, &line) in program.instructions().iter().zip(program.lines()) {
            let check_ion = |ion: usize, pos: &[f64]| -> Result<f64, EngineError> {
                if ion >= n {
                    return Err(EngineError::IonIndex { line, ion, n_ions: n });
                }
                let c = beam_profile(pos[ion] - center, waist);
                if c < MIN_TARGET_COUPLING {
                    return Err(EngineError::Unaddressed { line, ion, offset_um: (pos[ion] - center) * 1e6 });
                }
                Ok(c)
            };
            let step = match *instr {
                Instruction::Prepare { state } => Step::Prepare(Level::from_zeeman(state).expect("S1/2")),
                Instruction::PiPulse { ion, lower, upper } => {
                    let target = check_ion(ion, &pos)?;
                    let pulse = PiPulse::new(lower, upper, cfg.pulse_fidelity)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    let probs = pos
                        .iter()
                        .map(|x| pulse.swap_probability(beam_profile(x - center, waist) / target))
                        .collect();
                    let duration = PI / (cfg.omega0() * target);
                    Step::Swap { lower: pulse.lower(), upper: pulse.upper(), probs, duration }
                }
                Instruction::RabiPulse { ion, lower, upper, omega_hz, detuning_hz, t } => {
                    let target = check_ion(ion, &pos)?;
                    let omega = 2.0 * PI * omega_hz;
                    let delta = 2.0 * PI * detuning_hz;
                    let probs = pos
                        .iter()
                        .map(|x| transfer_probability(omega * beam_profile(x - center, waist) / target, delta, t))
                        .collect();
                    Step::Swap {
                        lower: Level::from_zeeman(lower).expect("S1/2"),
                        upper: Level::from_zeeman(upper).expect("D5/2"),
                        probs,
                        duration: t,
                    }
                }
                Instruction::Vuv { t, detuning_hz } => Step::Vuv { offset: detuning_hz, duration: t },
                Instruction::Pump397 => Step::Pump397,
                Instruction::Pump393 => Step::Pump393,
                Instruction::Transport { shift, t } => {
                    let dz = match shift {
                        Displacement::Meters(dz) => dz,
                        Displacement::Volts(dv) => cfg.kappa_m_per_v * dv,
                    };
                    pos.iter_mut().for_each(|x| *x += dz);
                    Step::Wait { duration: t }
                }
                Instruction::Detect { t, .. } => Step::Detect { duration: t },
            };
            steps.push(step);
        }

        Ok(Engine {
            steps,
            signal: program.signal(),
            n_ions: n,
            positions,
            final_positions: pos,
            shape: cfg.line_shape()?,
            rydberg: cfg.rydberg_config(),
            pump393_fidelity: cfg.pump393_fidelity,
            pump397_fidelity: cfg.pump397_fidelity,
            vuv_unswitched: cfg.vuv_unswitched,
        })
    }

    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    /// Equilibrium positions at the start of each shot, m.
    pub fn initial_positions(&self) -> &[f64] {
        &self.positions
    }

    /// Positions after all transports, m.
    pub fn final_positions(&self) -> &[f64] {
        &self.final_positions
    }

    pub fn signal(&self) -> Signal {
        self.signal
    }

    /// Per-ion swap probabilities of the `index`-th coherent pulse.
    pub fn pulse_transfer(&self, index: usize) -> Option<&[f64]> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Swap { probs, .. } => Some(probs.as_slice()),
                _ => None,
            })
            .nth(index)
    }

    fn tables(&self, detuning: f64) -> Vec<Option<RateTable>> {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Vuv { offset, .. } => Some(RateTable::new(&self.shape, &self.rydberg, detuning + offset)),
                Step::Detect { .. } if self.vuv_unswitched => {
                    Some(RateTable::new(&self.shape, &self.rydberg, detuning))
                }
                _ => None,
            })
            .collect()
    }

    fn shot<R: Rng>(&self, tables: &[Option<RateTable>], rng: &mut R, trace: bool) -> ShotOutcome {
        let initial = Level::S(Half::from_twice(-1));
        let mut levels = vec![initial; self.n_ions];
        let mut logs: Vec<Vec<Event>> = vec![Vec::new(); if trace { self.n_ions } else { 0 }];
        let mut clock = 0.0;
        for (step, table) in self.steps.iter().zip(tables) {
            match step {
                Step::Prepare(target) => {
                    for level in levels.iter_mut().filter(|l| matches!(l, Level::S(_))) {
                        *level = *target;
                    }
                }
                Step::Swap { lower, upper, probs, duration } => {
                    for (level, p) in levels.iter_mut().zip(probs) {
                        apply_swap(*lower, *upper, *p, level, rng);
                    }
                    clock += duration;
                }
                Step::Vuv { duration, .. } => {
                    let table = table.as_ref().expect("table for vuv step");
                    for (i, level) in levels.iter_mut().enumerate() {
                        *level = table.expose(*level, *duration, clock, rng, logs.get_mut(i));
                    }
                    clock += duration;
                }
                Step::Pump397 => {
                    for level in levels.iter_mut().filter(|l| matches!(l, Level::S(_))) {
                        if rng.random::<f64>() < self.pump397_fidelity {
                            *level = Level::D32;
                        }
                    }
                }
                Step::Pump393 => {
                    for level in levels.iter_mut().filter(|l| matches!(l, Level::S(_))) {
                        if rng.random::<f64>() < self.pump393_fidelity {
                            let m = Term::D52.projections().nth(rng.random_range(0..6)).expect("six sublevels");
                            *level = Level::D52(m);
                        }
                    }
                }
                Step::Wait { duration } => clock += duration,
                Step::Detect { duration } => {
                    if let Some(table) = table {
                        for (i, level) in levels.iter_mut().enumerate() {
                            *level = table.expose(*level, *duration, clock, rng, logs.get_mut(i));
                        }
                    }
                    clock += duration;
                }
            }
        }
        let trace = logs
            .iter()
            .enumerate()
            .flat_map(|(i, log)| {
                std::iter::once(format!("# ion={i} final={}", levels[i]))
                    .chain(log.iter().map(ToString::to_string))
            })
            .collect();
        ShotOutcome { bright: levels.iter().map(|l| l.is_bright()).collect(), trace }
    }

    fn point(&self, detuning: f64, grid_index: u64, shots: u64, seed: u64, trace: bool) -> RunResult {
        let tables = self.tables(detuning);
        let run_shot = |s: u64| self.shot(&tables, &mut shot_rng(seed, grid_index, s), trace);
        let mut counts = vec![0u64; self.n_ions];
        let mut lines = Vec::new();
        if trace {
            for s in 0..shots {
                let out = run_shot(s);
                lines.push(format!("# shot={s} detuning_hz={detuning}"));
                lines.extend(out.trace);
                add_counts(&mut counts, &out.bright);
            }
        } else {
            counts = self.count_shots(shots, &run_shot);
        }
        let n = shots as f64;
        let ions = counts
            .iter()
            .map(|&c| {
                let bright = c as f64 / n;
                let signal = match self.signal {
                    Signal::Bright => bright,
                    Signal::Dark => (shots - c) as f64 / n,
                };
                IonStat { bright, signal, err: (signal * (1.0 - signal) / n).sqrt() }
            })
            .collect();
        RunResult { detuning, shots, ions, trace: trace.then_some(lines) }
    }

    #[cfg(feature = "parallel")]
    fn count_shots(&self, shots: u64, run_shot: &(dyn Fn(u64) -> ShotOutcome + Sync)) -> Vec<u64> {
        (0..shots)
            .into_par_iter()
            .fold(
                || vec![0u64; self.n_ions],
                |mut acc, s| {
                    add_counts(&mut acc, &run_shot(s).bright);
                    acc
                },
            )
            .reduce(|| vec![0u64; self.n_ions], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
    }

    #[cfg(not(feature = "parallel"))]
    fn count_shots(&self, shots: u64, run_shot: &dyn Fn(u64) -> ShotOutcome) -> Vec<u64> {
        let mut acc = vec![0u64; self.n_ions];
        for s in 0..shots {
            add_counts(&mut acc, &run_shot(s).bright);
        }
        acc
    }

    /// Runs `shots` shots at one VUV detuning (Hz).
    pub fn run(&self, detuning: f64, shots: u64, seed: u64, trace: bool) -> Result<RunResult, EngineError> {
        if shots == 0 {
            return Err(EngineError::NoShots);
        }
        Ok(self.point(detuning, 0, shots, seed, trace))
    }

    /// One run per grid point; point `g` uses grid index `g` in the seed
    /// derivation.
    pub fn scan(&self, grid: &[f64], shots: u64, seed: u64) -> Result<ScanResult, EngineError> {
        self.scan_traced(grid, shots, seed, false).map(|(s, _)| s)
    }

    pub fn scan_traced(
        &self,
        grid: &[f64],
        shots: u64,
        seed: u64,
        trace: bool,
    ) -> Result<(ScanResult, Vec<String>), EngineError> {
        validate_grid(grid)?;
        if shots == 0 {
            return Err(EngineError::NoShots);
        }
        let eval = |(g, d): (usize, &f64)| self.point(*d, g as u64, shots, seed, trace);
        #[cfg(feature = "parallel")]
        let runs: Vec<RunResult> = grid.par_iter().enumerate().map(eval).collect();
        #[cfg(not(feature = "parallel"))]
        let runs: Vec<RunResult> = grid.iter().enumerate().map(eval).collect();
        let mut lines = Vec::new();
        for r in &runs {
            if let Some(t) = &r.trace {
                lines.extend(t.iter().cloned());
            }
        }
        let scan = ScanResult {
            detunings: grid.to_vec(),
            p: runs.iter().map(|r| r.ions.iter().map(|s| s.signal).collect()).collect(),
            err: runs.iter().map(|r| r.ions.iter().map(|s| s.err).collect()).collect(),
            raw_p: None,
            corrections: Vec::new(),
        };
        Ok((scan, lines))
    }
}

fn add_counts(acc: &mut [u64], bright: &[bool]) {
    for (a, b) in acc.iter_mut().zip(bright) {
        *a += u64::from(*b);
    }
}

/// Parses nothing; convenience for callers holding a program and config.
pub fn run(
    program: &PulseProgram,
    cfg: &ExperimentConfig,
    detuning: f64,
    shots: u64,
    seed: u64,
) -> Result<RunResult, EngineError> {
    Engine::new(program, cfg)?.run(detuning, shots, seed, false)
}

pub fn scan(
    program: &PulseProgram,
    cfg: &ExperimentConfig,
    grid: &[f64],
    shots: u64,
    seed: u64,
) -> Result<ScanResult, EngineError> {
    Engine::new(program, cfg)?.scan(grid, shots, seed)
}
