//! Level structure of Ca⁺ relevant to qubit shelving and 22F Rydberg
//! excitation: fine-structure terms, Zeeman sublevels, Landé factors and
//! selection rules.
//!
//! Angular-momentum projections are half-integers and are stored doubled
//! ([`Half`]) so that all selection-rule arithmetic stays exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bohr magneton over Planck's constant, Hz/T.
pub const MU_B_OVER_H: f64 = 13.996_245e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomicError {
    #[error("inconsistent quantum numbers: L={l}, S={s}, J={j}")]
    QuantumNumbers { l: u32, s: Half, j: Half },
    #[error("m={m} is outside the range of {term}")]
    Projection { term: Term, m: Half },
    #[error("transition {lower} -> {upper} violates the selection rules")]
    SelectionRule { lower: ZeemanState, upper: ZeemanState },
    #[error("negative magnetic field {0} T")]
    NegativeField(f64),
    #[error("unknown state label `{0}`")]
    UnknownLabel(String),
}

/// A half-integer stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Half(i32);

impl Half {
    pub const fn from_twice(twice: i32) -> Self {
        Half(twice)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn is_half_odd(self) -> bool {
        self.0 % 2 != 0
    }
}

impl std::ops::Neg for Half {
    type Output = Half;
    fn neg(self) -> Half {
        Half(-self.0)
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 > 0 { "+" } else if self.0 < 0 { "-" } else { "" };
        if self.0 % 2 == 0 {
            write!(f, "{sign}{}", self.0.abs() / 2)
        } else {
            write!(f, "{sign}{}/2", self.0.abs())
        }
    }
}

impl FromStr for Half {
    type Err = AtomicError;

    /// Accepts `-5/2`, `+1/2`, `3/2`, `2`, `-1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AtomicError::UnknownLabel(s.to_string());
        let t = s.trim();
        let (neg, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let twice = match body.split_once('/') {
            Some((num, "2")) => num.parse::<i32>().map_err(|_| bad())?,
            Some(_) => return Err(bad()),
            None => 2 * body.parse::<i32>().map_err(|_| bad())?,
        };
        if body.starts_with(['+', '-']) {
            return Err(bad());
        }
        Ok(Half(if neg { -twice } else { twice }))
    }
}

/// Landé factor of a fine-structure term, spin g-factor taken as 2.
pub fn lande_g(l: u32, s: Half, j: Half) -> Result<f64, AtomicError> {
    let l2 = 2 * l as i32;
    let (s2, j2) = (s.twice(), j.twice());
    let consistent = s2 >= 0
        && j2 > 0
        && j2 >= (l2 - s2).abs()
        && j2 <= l2 + s2
        && (j2 - l2 - s2) % 2 == 0;
    if !consistent {
        return Err(AtomicError::QuantumNumbers { l, s, j });
    }
    let jj = j.value() * (j.value() + 1.0);
    let ss = s.value() * (s.value() + 1.0);
    let ll = f64::from(l) * f64::from(l + 1);
    Ok(1.0 + (jj + ss - ll) / (2.0 * jj))
}

/// Fine-structure terms tracked by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    S12,
    D32,
    D52,
    F52,
    F72,
}

impl Term {
    pub const ALL: [Term; 5] = [Term::S12, Term::D32, Term::D52, Term::F52, Term::F72];

    pub fn label(self) -> &'static str {
        match self {
            Term::S12 => "S1/2",
            Term::D32 => "D3/2",
            Term::D52 => "D5/2",
            Term::F52 => "F5/2",
            Term::F72 => "F7/2",
        }
    }

    pub fn l(self) -> u32 {
        match self {
            Term::S12 => 0,
            Term::D32 | Term::D52 => 2,
            Term::F52 | Term::F72 => 3,
        }
    }

    pub fn s(self) -> Half {
        Half(1)
    }

    pub fn j(self) -> Half {
        match self {
            Term::S12 => Half(1),
            Term::D32 => Half(3),
            Term::D52 | Term::F52 => Half(5),
            Term::F72 => Half(7),
        }
    }

    /// Landé factor from the term's quantum numbers.
    pub fn lande(self) -> f64 {
        lande_g(self.l(), self.s(), self.j()).expect("built-in terms are consistent")
    }

    /// All m values from −J to +J.
    pub fn projections(self) -> impl Iterator<Item = Half> {
        let j2 = self.j().twice();
        (-j2..=j2).step_by(2).map(Half)
    }

    pub fn contains(self, m: Half) -> bool {
        let j2 = self.j().twice();
        m.twice().abs() <= j2 && (m.twice() - j2) % 2 == 0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One magnetic sublevel |term, m⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZeemanState {
    term: Term,
    m: Half,
}

impl ZeemanState {
    pub fn new(term: Term, m: Half) -> Result<Self, AtomicError> {
        if term.contains(m) {
            Ok(ZeemanState { term, m })
        } else {
            Err(AtomicError::Projection { term, m })
        }
    }

    pub fn term(&self) -> Term {
        self.term
    }

    pub fn m(&self) -> Half {
        self.m
    }

    /// The same sublevel with m → −m.
    pub fn mirrored(&self) -> Self {
        ZeemanState { term: self.term, m: -self.m }
    }
}

impl fmt::Display for ZeemanState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.term, self.m)
    }
}

impl FromStr for ZeemanState {
    type Err = AtomicError;

    /// `S:-1/2`, `S1/2:+1/2`, `D5/2:-5/2`, `F7/2:-7/2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AtomicError::UnknownLabel(s.to_string());
        let (term, m) = s.split_once(':').ok_or_else(bad)?;
        let term = parse_term(term).ok_or_else(bad)?;
        let m: Half = m.parse().map_err(|_| bad())?;
        ZeemanState::new(term, m)
    }
}

fn parse_term(s: &str) -> Option<Term> {
    match s {
        "S" | "S1/2" => Some(Term::S12),
        "D3/2" => Some(Term::D32),
        "D5/2" => Some(Term::D52),
        "F5/2" => Some(Term::F52),
        "F7/2" => Some(Term::F72),
        _ => None,
    }
}

/// Magnetic field magnitude in tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticField(f64);

impl MagneticField {
    pub fn new(tesla: f64) -> Result<Self, AtomicError> {
        if tesla >= 0.0 && tesla.is_finite() {
            Ok(MagneticField(tesla))
        } else {
            Err(AtomicError::NegativeField(tesla))
        }
    }

    pub fn tesla(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionKind {
    /// S1/2 ↔ D5/2 at 729 nm, |Δm| ≤ 2.
    Quadrupole729,
    /// D5/2 → F5/2, F7/2, |Δm| ≤ 1.
    DipoleVUV,
    /// F5/2, F7/2 → D5/2, |Δm| ≤ 1. Decay into the aggregate D3/2 level is
    /// not a Zeeman target and is handled by the branching ratio.
    DipoleDecay,
}

impl TransitionKind {
    fn max_delta_m2(self) -> i32 {
        match self {
            TransitionKind::Quadrupole729 => 4,
            TransitionKind::DipoleVUV | TransitionKind::DipoleDecay => 2,
        }
    }

    fn target_terms(self, from: Term) -> &'static [Term] {
        match (self, from) {
            (TransitionKind::Quadrupole729, Term::S12) => &[Term::D52],
            (TransitionKind::Quadrupole729, Term::D52) => &[Term::S12],
            (TransitionKind::DipoleVUV, Term::D52) => &[Term::F52, Term::F72],
            (TransitionKind::DipoleDecay, Term::F52 | Term::F72) => &[Term::D52],
            _ => &[],
        }
    }
}

/// Zeeman sublevels reachable from `initial` under `kind`. Sorted by target
/// term (F5/2 before F7/2), then ascending m.
pub fn allowed_targets(initial: ZeemanState, kind: TransitionKind) -> Vec<ZeemanState> {
    let dm = kind.max_delta_m2();
    kind.target_terms(initial.term)
        .iter()
        .flat_map(|&term| {
            term.projections()
                .filter(move |m| (m.twice() - initial.m.twice()).abs() <= dm)
                .map(move |m| ZeemanState { term, m })
        })
        .collect()
}

/// Which transition kind, if any, connects `lower` to `upper`.
pub fn transition_kind(lower: ZeemanState, upper: ZeemanState) -> Option<TransitionKind> {
    [
        TransitionKind::Quadrupole729,
        TransitionKind::DipoleVUV,
        TransitionKind::DipoleDecay,
    ]
    .into_iter()
    .find(|&k| allowed_targets(lower, k).contains(&upper))
}

/// Landé factors per term, defaulting to the Landé formula, with optional
/// overrides for measured values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicStructure {
    overrides: Vec<(Term, f64)>,
}

impl AtomicStructure {
    pub fn with_override(mut self, term: Term, g: f64) -> Self {
        self.overrides.retain(|(t, _)| *t != term);
        self.overrides.push((term, g));
        self
    }

    pub fn g(&self, term: Term) -> f64 {
        self.overrides
            .iter()
            .find(|(t, _)| *t == term)
            .map_or_else(|| term.lande(), |(_, g)| *g)
    }

    /// Linear Zeeman shift of one sublevel, Hz.
    pub fn zeeman_shift(&self, state: ZeemanState, field: MagneticField) -> f64 {
        self.g(state.term) * state.m.value() * MU_B_OVER_H * field.tesla()
    }

    /// Frequency of `lower → upper` relative to the zero-field line, Hz.
    pub fn transition_offset(
        &self,
        lower: ZeemanState,
        upper: ZeemanState,
        field: MagneticField,
    ) -> Result<f64, AtomicError> {
        if transition_kind(lower, upper).is_none() {
            return Err(AtomicError::SelectionRule { lower, upper });
        }
        Ok(self.zeeman_shift(upper, field) - self.zeeman_shift(lower, field))
    }
}

pub fn zeeman_shift(state: ZeemanState, field: MagneticField) -> f64 {
    AtomicStructure::default().zeeman_shift(state, field)
}

pub fn transition_offset(
    lower: ZeemanState,
    upper: ZeemanState,
    field: MagneticField,
) -> Result<f64, AtomicError> {
    AtomicStructure::default().transition_offset(lower, upper, field)
}

/// Electronic state of one ion during a shot. D3/2 is a single aggregate
/// level without Zeeman bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    S(Half),
    D52(Half),
    D32,
}

impl Level {
    pub fn zeeman(self) -> Option<ZeemanState> {
        match self {
            Level::S(m) => Some(ZeemanState { term: Term::S12, m }),
            Level::D52(m) => Some(ZeemanState { term: Term::D52, m }),
            Level::D32 => None,
        }
    }

    /// Fluorescence under 397/866 nm light.
    pub fn is_bright(self) -> bool {
        matches!(self, Level::S(_) | Level::D32)
    }

    pub fn from_zeeman(state: ZeemanState) -> Option<Level> {
        match state.term {
            Term::S12 => Some(Level::S(state.m)),
            Term::D52 => Some(Level::D52(state.m)),
            Term::D32 => Some(Level::D32),
            Term::F52 | Term::F72 => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.zeeman() {
            Some(z) => z.fmt(f),
            None => f.write_str("D3/2"),
        }
    }
}
