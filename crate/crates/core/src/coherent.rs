//! Two-level Rabi dynamics on the 729 nm qubit transition with a tightly
//! focused addressing beam.
//!
//! Coherences live only inside a single pulse: at the pulse boundary the
//! amplitudes collapse to populations and the ion is left in one sublevel.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::atomic::{transition_kind, Level, TransitionKind, ZeemanState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoherentError {
    #[error("{lower} <-> {upper} is not a quadrupole transition")]
    SelectionRule { lower: ZeemanState, upper: ZeemanState },
    #[error("fidelity {0} outside [0, 1]")]
    Fidelity(f64),
    #[error("invalid drive: {0}")]
    Drive(&'static str),
}

/// Gaussian addressing beam driving the qubit transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiDrive {
    /// Peak angular Rabi frequency on the beam axis, rad/s.
    pub omega0: f64,
    /// Angular detuning, rad/s.
    pub detuning: f64,
    pub duration: f64,
    /// Intensity waist w₀, m.
    pub beam_waist: f64,
    /// Axial position of the beam, m.
    pub beam_center: f64,
}

impl RabiDrive {
    pub fn validate(&self) -> Result<(), CoherentError> {
        if !(self.omega0 >= 0.0) {
            return Err(CoherentError::Drive("omega0 must be >= 0"));
        }
        if !(self.duration >= 0.0) {
            return Err(CoherentError::Drive("duration must be >= 0"));
        }
        if !(self.beam_waist > 0.0) {
            return Err(CoherentError::Drive("beam waist must be > 0"));
        }
        Ok(())
    }

    /// Ω(r) = Ω₀·exp(−r²/w₀²). The Rabi frequency follows the field
    /// amplitude of the beam.
    pub fn local_rabi_frequency(&self, ion_position: f64) -> f64 {
        self.omega0 * beam_profile(ion_position - self.beam_center, self.beam_waist)
    }
}

/// Field-amplitude profile exp(−r²/w₀²) of a beam with intensity waist w₀.
pub fn beam_profile(r: f64, waist: f64) -> f64 {
    (-(r * r) / (waist * waist)).exp()
}

pub fn local_rabi_frequency(drive: &RabiDrive, ion_position: f64) -> f64 {
    drive.local_rabi_frequency(ion_position)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelAmplitude {
    pub c_lower: Complex64,
    pub c_upper: Complex64,
}

impl TwoLevelAmplitude {
    pub fn lower() -> Self {
        TwoLevelAmplitude { c_lower: Complex64::new(1.0, 0.0), c_upper: Complex64::new(0.0, 0.0) }
    }

    pub fn upper() -> Self {
        TwoLevelAmplitude { c_lower: Complex64::new(0.0, 0.0), c_upper: Complex64::new(1.0, 0.0) }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c_lower.norm_sqr() + self.c_upper.norm_sqr()
    }

    pub fn upper_population(&self) -> f64 {
        self.c_upper.norm_sqr()
    }
}

/// Exact rotating-frame propagator for H = ½[[−δ, Ω], [Ω, δ]] applied for
/// time `t`.
pub fn evolve(state: TwoLevelAmplitude, omega: f64, detuning: f64, t: f64) -> TwoLevelAmplitude {
    let gen = omega.hypot(detuning);
    if gen == 0.0 {
        return state;
    }
    let half = 0.5 * gen * t;
    let (sin, cos) = half.sin_cos();
    let s = sin / gen;
    let i = Complex64::i();
    // U = cos·1 − i·sin/Ω'·[[−δ, Ω], [Ω, δ]]
    let u11 = Complex64::new(cos, 0.0) + i * (detuning * s);
    let u22 = Complex64::new(cos, 0.0) - i * (detuning * s);
    let u12 = -i * (omega * s);
    TwoLevelAmplitude {
        c_lower: u11 * state.c_lower + u12 * state.c_upper,
        c_upper: u12 * state.c_lower + u22 * state.c_upper,
    }
}

/// Transfer probability between the two levels after a pulse starting in
/// either level: [Ω²/(Ω²+δ²)]·sin²(√(Ω²+δ²)·t/2).
pub fn transfer_probability(omega: f64, detuning: f64, t: f64) -> f64 {
    evolve(TwoLevelAmplitude::lower(), omega, detuning, t).upper_population()
}

/// Probability distribution over electronic levels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Populations(BTreeMap<Level, f64>);

impl Populations {
    pub fn pure(level: Level) -> Self {
        Populations(BTreeMap::from([(level, 1.0)]))
    }

    pub fn get(&self, level: Level) -> f64 {
        self.0.get(&level).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    fn set(&mut self, level: Level, p: f64) {
        if p == 0.0 {
            self.0.remove(&level);
        } else {
            self.0.insert(level, p);
        }
    }
}

/// π pulse on one quadrupole transition with a Bernoulli infidelity channel:
/// with probability `fidelity` the pulse acts, otherwise nothing happens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiPulse {
    lower: Level,
    upper: Level,
    fidelity: f64,
}

impl PiPulse {
    pub fn new(lower: ZeemanState, upper: ZeemanState, fidelity: f64) -> Result<Self, CoherentError> {
        if transition_kind(lower, upper) != Some(TransitionKind::Quadrupole729)
            || lower.term() != crate::atomic::Term::S12
        {
            return Err(CoherentError::SelectionRule { lower, upper });
        }
        if !(0.0..=1.0).contains(&fidelity) {
            return Err(CoherentError::Fidelity(fidelity));
        }
        Ok(PiPulse {
            lower: Level::from_zeeman(lower).expect("S1/2 level"),
            upper: Level::from_zeeman(upper).expect("D5/2 level"),
            fidelity,
        })
    }

    pub fn lower(&self) -> Level {
        self.lower
    }

    pub fn upper(&self) -> Level {
        self.upper
    }

    /// Swap probability for an ion whose coupling is `relative_coupling`
    /// times that of the ion the pulse length was calibrated on.
    pub fn swap_probability(&self, relative_coupling: f64) -> f64 {
        let area = std::f64::consts::PI * relative_coupling;
        self.fidelity * (0.5 * area).sin().powi(2)
    }

    pub fn apply_populations(&self, pops: &mut Populations, relative_coupling: f64) {
        let p = self.swap_probability(relative_coupling);
        let (a, b) = (pops.get(self.lower), pops.get(self.upper));
        pops.set(self.lower, (1.0 - p) * a + p * b);
        pops.set(self.upper, (1.0 - p) * b + p * a);
    }

    pub fn apply<R: Rng + ?Sized>(&self, level: &mut Level, relative_coupling: f64, rng: &mut R) {
        apply_swap(self.lower, self.upper, self.swap_probability(relative_coupling), level, rng);
    }
}

/// Sampled population swap between `a` and `b` with probability `p`.
pub(crate) fn apply_swap<R: Rng + ?Sized>(a: Level, b: Level, p: f64, level: &mut Level, rng: &mut R) {
    if *level != a && *level != b {
        return;
    }
    if p > 0.0 && rng.random::<f64>() < p {
        *level = if *level == a { b } else { a };
    }
}
