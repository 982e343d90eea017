//! Incoherent VUV excitation D5/2 → 22F as a kinetic Monte Carlo process.
//!
//! Each allowed Zeeman channel k from a D5/2 sublevel has rate
//! `R_k(δ) = R0·w_k·exp(−(δ−δ_k)²/(2σ²))`. Excitation is followed by an
//! instantaneous decay: to the aggregate D3/2 level with probability β
//! (terminal), otherwise to a D5/2 sublevel drawn uniformly from the dipole
//! decay targets, after which rates are recomputed for the new sublevel.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{
    allowed_targets, AtomicStructure, Half, Level, MagneticField, Term, TransitionKind, ZeemanState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RydbergError {
    #[error("excitation starts from D5/2, got {0}")]
    NotD52(String),
    #[error("line width sigma must be > 0, got {0}")]
    Sigma(f64),
    #[error("weight {weight} for {channel} outside [0, 1]")]
    Weight { channel: String, weight: f64 },
    #[error("unknown channel `{0}` in weight table")]
    UnknownChannel(String),
    #[error("peak rate must be >= 0, got {0}")]
    Rate(f64),
    #[error("branching ratio {0} outside [0, 1]")]
    Branching(f64),
    #[error("ratio undefined: no exposure ended in D3/2")]
    UndefinedRatio,
}

/// Line strength assignment for the excitation channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    /// Every D5/2 → F7/2 channel has weight 1; F5/2 channels are off.
    #[default]
    Equal,
    /// Explicit weights keyed by channel label, e.g.
    /// `"D5/2:-5/2->F7/2:-7/2"`. Unlisted channels have weight 0.
    Custom(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RydbergConfig {
    /// Peak single-channel excitation rate R0, 1/s.
    pub r0: f64,
    /// Probability β that a decay ends in D3/2.
    pub branch_d32: f64,
    /// 22F lifetime, s. Decay is treated as instantaneous.
    pub rydberg_lifetime: f64,
    pub weights_mode: WeightsMode,
}

impl Default for RydbergConfig {
    fn default() -> Self {
        RydbergConfig {
            r0: DEFAULT_R0,
            branch_d32: DEFAULT_BRANCH_D32,
            rydberg_lifetime: 200e-9,
            weights_mode: WeightsMode::Equal,
        }
    }
}

/// Default peak rate, 1/s. Gives ~20 % m-change signal at the line center
/// for a 1.5 ms exposure.
pub const DEFAULT_R0: f64 = 200.0;

/// Branching ratio calibrated so that, with equal weights, R0 = 200/s and a
/// 1.5 ms exposure from |D5/2,−5/2⟩ at the composite center (+2.80 MHz),
/// m-change events outnumber D3/2 decays five to one.
pub const DEFAULT_BRANCH_D32: f64 = 0.0793;

/// Per-component Gaussian width σ, Hz.
pub const DEFAULT_SIGMA: f64 = 3.8e6;

impl RydbergConfig {
    pub fn validate(&self) -> Result<(), RydbergError> {
        if !(self.r0 >= 0.0) || !self.r0.is_finite() {
            return Err(RydbergError::Rate(self.r0));
        }
        if !(0.0..=1.0).contains(&self.branch_d32) {
            return Err(RydbergError::Branching(self.branch_d32));
        }
        Ok(())
    }
}

/// One D5/2 → F Zeeman channel of the line shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub from: ZeemanState,
    pub to: ZeemanState,
    /// Line center relative to the zero-field resonance, Hz.
    pub center: f64,
    pub weight: f64,
}

impl Component {
    pub fn label(&self) -> String {
        channel_label(self.from, self.to)
    }

    /// Whether a decay after this excitation can land on a sublevel other
    /// than `from`.
    pub fn is_detectable(&self) -> bool {
        allowed_targets(self.to, TransitionKind::DipoleDecay)
            .iter()
            .any(|t| *t != self.from)
    }
}

pub fn channel_label(from: ZeemanState, to: ZeemanState) -> String {
    format!("{from}->{to}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineShape {
    sigma: f64,
    components: Vec<Component>,
}

impl LineShape {
    pub fn new(sigma: f64, components: Vec<Component>) -> Result<Self, RydbergError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(RydbergError::Sigma(sigma));
        }
        for c in &components {
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(RydbergError::Weight { channel: c.label(), weight: c.weight });
            }
        }
        Ok(LineShape { sigma, components })
    }

    /// Every D5/2 → F channel with centers from the Zeeman shifts at `field`.
    pub fn build(
        structure: &AtomicStructure,
        field: MagneticField,
        sigma: f64,
        weights: &WeightsMode,
    ) -> Result<Self, RydbergError> {
        let mut components = Vec::new();
        for m in Term::D52.projections() {
            let from = ZeemanState::new(Term::D52, m).expect("in range");
            for to in allowed_targets(from, TransitionKind::DipoleVUV) {
                let center = structure
                    .transition_offset(from, to, field)
                    .expect("allowed by construction");
                let weight = match weights {
                    WeightsMode::Equal => f64::from(u8::from(to.term() == Term::F72)),
                    WeightsMode::Custom(table) => {
                        table.get(&channel_label(from, to)).copied().unwrap_or(0.0)
                    }
                };
                components.push(Component { from, to, center, weight });
            }
        }
        if let WeightsMode::Custom(table) = weights {
            if let Some(key) = table.keys().find(|k| !components.iter().any(|c| c.label() == **k)) {
                return Err(RydbergError::UnknownChannel(key.clone()));
            }
        }
        LineShape::new(sigma, components)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn channels_from(&self, from: ZeemanState) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(move |c| c.from == from)
    }

    /// Same components with every weight set to zero except the channels
    /// whose labels are listed.
    pub fn restricted_to(&self, labels: &[&str]) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| Component {
                weight: if labels.contains(&c.label().as_str()) { c.weight } else { 0.0 },
                ..*c
            })
            .collect();
        LineShape { sigma: self.sigma, components }
    }
}

/// Rates out of one D5/2 sublevel at a fixed detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRates {
    pub total: f64,
    /// (F target, rate in 1/s), in line-shape order.
    pub channels: Vec<(ZeemanState, f64)>,
}

pub fn excitation_rate(
    from: ZeemanState,
    vuv_detuning: f64,
    shape: &LineShape,
    cfg: &RydbergConfig,
) -> Result<ChannelRates, RydbergError> {
    if from.term() != Term::D52 {
        return Err(RydbergError::NotD52(from.to_string()));
    }
    let inv = 1.0 / (2.0 * shape.sigma * shape.sigma);
    let channels: Vec<_> = shape
        .channels_from(from)
        .map(|c| {
            let d = vuv_detuning - c.center;
            (c.to, cfg.r0 * c.weight * (-d * d * inv).exp())
        })
        .collect();
    let total = channels.iter().map(|(_, r)| r).sum();
    Ok(ChannelRates { total, channels })
}

/// Probability that no event occurs in time `t` at constant `rate`.
pub fn survival_probability(rate: f64, t: f64) -> f64 {
    (-rate * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Excite { from: ZeemanState, to: ZeemanState },
    Decay { to: Level },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EventKind::Excite { from, to } => {
                write!(f, "t={} event=excite channel={from}->{to}", self.t)
            }
            EventKind::Decay { to } => write!(f, "t={} event=decay to={to}", self.t),
        }
    }
}

/// Rates from every D5/2 sublevel at one detuning, precomputed for repeated
/// exposures.
#[derive(Debug, Clone)]
pub struct RateTable {
    by_m: Vec<ChannelRates>,
    decay: Vec<(ZeemanState, Vec<ZeemanState>)>,
    beta: f64,
}

fn d52_index(m: Half) -> usize {
    ((m.twice() + 5) / 2) as usize
}

impl RateTable {
    pub fn new(shape: &LineShape, cfg: &RydbergConfig, detuning: f64) -> Self {
        let by_m = Term::D52
            .projections()
            .map(|m| {
                let from = ZeemanState::new(Term::D52, m).expect("in range");
                excitation_rate(from, detuning, shape, cfg).expect("D5/2 sublevel")
            })
            .collect::<Vec<_>>();
        let mut decay: Vec<(ZeemanState, Vec<ZeemanState>)> = Vec::new();
        for rates in &by_m {
            for (to, _) in &rates.channels {
                if !decay.iter().any(|(f, _)| f == to) {
                    decay.push((*to, allowed_targets(*to, TransitionKind::DipoleDecay)));
                }
            }
        }
        RateTable { by_m, decay, beta: cfg.branch_d32 }
    }

    pub fn rates(&self, m: Half) -> &ChannelRates {
        &self.by_m[d52_index(m)]
    }

    fn decay_targets(&self, f: ZeemanState) -> &[ZeemanState] {
        self.decay
            .iter()
            .find(|(s, _)| *s == f)
            .map(|(_, t)| t.as_slice())
            .expect("decay table covers every channel target")
    }

    /// Runs the event loop for an exposure of `duration` starting at shot
    /// time `t0`. Only D5/2 ions couple to the VUV light.
    pub fn expose<R: Rng + ?Sized>(
        &self,
        mut level: Level,
        duration: f64,
        t0: f64,
        rng: &mut R,
        mut log: Option<&mut Vec<Event>>,
    ) -> Level {
        let mut t = 0.0;
        while let Level::D52(m) = level {
            let rates = self.rates(m);
            if rates.total <= 0.0 {
                break;
            }
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / rates.total;
            if t > duration {
                break;
            }
            let mut pick = rng.random::<f64>() * rates.total;
            let mut target = rates.channels.last().expect("nonzero total").0;
            for &(to, r) in &rates.channels {
                if pick < r {
                    target = to;
                    break;
                }
                pick -= r;
            }
            let from = ZeemanState::new(Term::D52, m).expect("in range");
            if let Some(log) = log.as_deref_mut() {
                log.push(Event { t: t0 + t, kind: EventKind::Excite { from, to: target } });
            }
            level = if rng.random::<f64>() < self.beta {
                Level::D32
            } else {
                let targets = self.decay_targets(target);
                let i = rng.random_range(0..targets.len());
                Level::D52(targets[i].m())
            };
            if let Some(log) = log.as_deref_mut() {
                log.push(Event { t: t0 + t, kind: EventKind::Decay { to: level } });
            }
        }
        level
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exposure {
    pub level: Level,
    pub events: Vec<Event>,
}

pub fn vuv_exposure<R: Rng + ?Sized>(
    level: Level,
    duration: f64,
    detuning: f64,
    shape: &LineShape,
    cfg: &RydbergConfig,
    rng: &mut R,
) -> Exposure {
    let mut events = Vec::new();
    let table = RateTable::new(shape, cfg, detuning);
    let level = table.expose(level, duration.max(0.0), 0.0, rng, Some(&mut events));
    Exposure { level, events }
}

/// Counts of exposure outcomes from one initial sublevel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExposureTally {
    pub unchanged: u64,
    pub m_changed: u64,
    pub d32: u64,
}

impl ExposureTally {
    pub fn total(&self) -> u64 {
        self.unchanged + self.m_changed + self.d32
    }
}

pub fn tally_exposures<R: Rng + ?Sized>(
    table: &RateTable,
    initial: ZeemanState,
    duration: f64,
    exposures: u64,
    rng: &mut R,
) -> ExposureTally {
    let start = Level::from_zeeman(initial).expect("D5/2 sublevel");
    let mut tally = ExposureTally::default();
    for _ in 0..exposures {
        match table.expose(start, duration, 0.0, rng, None) {
            Level::D32 => tally.d32 += 1,
            l if l == start => tally.unchanged += 1,
            _ => tally.m_changed += 1,
        }
    }
    tally
}

/// Signal of the m-change detection scheme over that of the j-change
/// scheme (decay into D3/2) for identical exposures.
#[allow(clippy::too_many_arguments)]
pub fn detection_efficiency_ratio<R: Rng + ?Sized>(
    shape: &LineShape,
    cfg: &RydbergConfig,
    initial: ZeemanState,
    detuning: f64,
    duration: f64,
    exposures: u64,
    rng: &mut R,
) -> Result<f64, RydbergError> {
    if initial.term() != Term::D52 {
        return Err(RydbergError::NotD52(initial.to_string()));
    }
    let table = RateTable::new(shape, cfg, detuning);
    let tally = tally_exposures(&table, initial, duration, exposures, rng);
    if tally.d32 == 0 {
        return Err(RydbergError::UndefinedRatio);
    }
    Ok(tally.m_changed as f64 / tally.d32 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn st(s: &str) -> ZeemanState {
        s.parse().unwrap()
    }

    fn shape() -> LineShape {
        LineShape::build(
            &AtomicStructure::default(),
            MagneticField::new(0.28e-3).unwrap(),
            DEFAULT_SIGMA,
            &WeightsMode::Equal,
        )
        .unwrap()
    }

    const BLIND: &str = "D5/2:-5/2->F7/2:-7/2";

    #[test]
    fn peak_normalization() {
        let s = shape().restricted_to(&[BLIND]);
        let cfg = RydbergConfig { r0: 123.0, ..Default::default() };
        let center = s.channels_from(st("D5/2:-5/2")).find(|c| c.weight > 0.0).unwrap().center;
        let r = excitation_rate(st("D5/2:-5/2"), center, &s, &cfg).unwrap();
        assert_eq!(r.total, 123.0);
        let far = excitation_rate(st("D5/2:-5/2"), 1e12, &s, &cfg).unwrap();
        assert_eq!(far.total, 0.0);
        assert!(excitation_rate(st("S:-1/2"), 0.0, &s, &cfg).is_err());
    }

    #[test]
    fn channel_centers_from_stretched_state() {
        let s = shape();
        let centers: Vec<f64> = s
            .channels_from(st("D5/2:-5/2"))
            .filter(|c| c.weight > 0.0)
            .map(|c| c.center / 1e6)
            .collect();
        assert_eq!(centers.len(), 3);
        for (got, want) in centers.iter().zip([-3.919, 0.560, 5.039]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-3);
        }
        let f52 = s.channels_from(st("D5/2:-5/2")).filter(|c| c.to.term() == Term::F52);
        assert!(f52.into_iter().all(|c| c.weight == 0.0));
    }

    #[test]
    fn custom_weights() {
        let mut table = BTreeMap::new();
        table.insert(BLIND.to_string(), 0.5);
        let s = LineShape::build(
            &AtomicStructure::default(),
            MagneticField::new(0.28e-3).unwrap(),
            DEFAULT_SIGMA,
            &WeightsMode::Custom(table.clone()),
        )
        .unwrap();
        assert_eq!(s.components().iter().filter(|c| c.weight > 0.0).count(), 1);
        table.insert("D5/2:-5/2->F7/2:+1/2".into(), 1.0);
        let bad = LineShape::build(
            &AtomicStructure::default(),
            MagneticField::new(0.28e-3).unwrap(),
            DEFAULT_SIGMA,
            &WeightsMode::Custom(table),
        );
        assert!(matches!(bad, Err(RydbergError::UnknownChannel(_))));
        assert!(LineShape::new(0.0, vec![]).is_err());
    }

    #[test]
    fn survival() {
        assert_abs_diff_eq!(1.0 - survival_probability(2f64.ln(), 1.0), 0.5, epsilon = 1e-15);
        assert_eq!(survival_probability(5.0, 0.0), 1.0);
        assert_abs_diff_eq!(survival_probability(3.0, 1.0), 0.0498, epsilon = 5e-5);
    }

    #[test]
    fn ground_state_ignores_vuv() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = RydbergConfig { r0: 1e6, ..Default::default() };
        let l = Level::S(st("S:-1/2").m());
        let e = vuv_exposure(l, 1e-3, 0.0, &shape(), &cfg, &mut rng);
        assert_eq!(e.level, l);
        assert!(e.events.is_empty());
    }

    #[test]
    fn blind_channel_returns_to_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = shape().restricted_to(&[BLIND]);
        let cfg = RydbergConfig { r0: 1e5, branch_d32: 0.0, ..Default::default() };
        let start = Level::D52(st("D5/2:-5/2").m());
        for _ in 0..200 {
            let e = vuv_exposure(start, 1e-3, -3.9e6, &s, &cfg, &mut rng);
            assert_eq!(e.level, start);
            assert!(!e.events.is_empty());
        }
    }

    #[test]
    fn saturated_exposure_ends_in_d32() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = RydbergConfig { r0: 1e7, branch_d32: 1.0, ..Default::default() };
        let start = Level::D52(st("D5/2:-5/2").m());
        for _ in 0..500 {
            assert_eq!(vuv_exposure(start, 1e-3, 0.0, &shape(), &cfg, &mut rng).level, Level::D32);
        }
    }

    #[test]
    fn event_log_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = RydbergConfig { r0: 1e4, ..Default::default() };
        let e = vuv_exposure(Level::D52(st("D5/2:-5/2").m()), 1e-3, 0.0, &shape(), &cfg, &mut rng);
        let first = e.events[0].to_string();
        assert!(first.starts_with("t="), "{first}");
        assert!(first.contains(" event=excite channel=D5/2:-5/2->F7/2:"), "{first}");
        assert!(e.events[1].to_string().contains(" event=decay to="));
    }

    #[test]
    fn ratio_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = shape();
        let all_j = RydbergConfig { r0: 2000.0, branch_d32: 1.0, ..Default::default() };
        let r = detection_efficiency_ratio(&s, &all_j, st("D5/2:-5/2"), 2.8e6, 1.5e-3, 2000, &mut rng);
        assert_eq!(r.unwrap(), 0.0);
        let no_j = RydbergConfig { r0: 2000.0, branch_d32: 0.0, ..Default::default() };
        let r = detection_efficiency_ratio(&s, &no_j, st("D5/2:-5/2"), 2.8e6, 1.5e-3, 2000, &mut rng);
        assert_eq!(r, Err(RydbergError::UndefinedRatio));
    }

    #[test]
    fn detectability() {
        let s = shape();
        let blind: Vec<_> = s
            .components()
            .iter()
            .filter(|c| c.to.term() == Term::F72 && !c.is_detectable())
            .map(|c| c.label())
            .collect();
        assert_eq!(blind, [BLIND, "D5/2:+5/2->F7/2:+7/2"]);
    }
}
