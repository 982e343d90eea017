//! Line-oriented pulse-sequence language.
//!
//! ```text
//! # comment
//! prepare state=S:-1/2
//! pulse pi ion=0 from=S:-1/2 to=D5/2:-5/2
//! pulse rabi ion=0 from=S:-1/2 to=D5/2:-5/2 omega=80kHz detuning=0 t=6.25us
//! vuv t=1.5ms detuning=0MHz
//! pump 397
//! pump 393
//! transport dz=7um t=500us        # or dv=140mV
//! detect t=2ms signal=dark
//! ```
//!
//! Values take unit suffixes (ns, us, ms, s, Hz, kHz, MHz, nm, um, mm, m,
//! mV, V) and are stored in SI. `vuv detuning` is an offset added to the
//! run's VUV detuning. Ions start in S1/2 m=-1/2; `prepare` optically pumps
//! every ion currently in S1/2 into the given sublevel.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::atomic::{transition_kind, Half, Term, TransitionKind, ZeemanState};
use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownState(String),
    SelectionRule(String),
    DuplicateDetect,
    MissingDetect,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownState(s) => write!(f, "unknown state `{s}`"),
            ParseErrorKind::SelectionRule(m) => write!(f, "selection rule violated: {m}"),
            ParseErrorKind::DuplicateDetect => f.write_str("duplicate detect"),
            ParseErrorKind::MissingDetect => f.write_str("program must end with detect"),
        }
    }
}

/// What counts as signal when detection results are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Signal {
    #[default]
    Bright,
    Dark,
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::Bright => "bright",
            Signal::Dark => "dark",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Displacement {
    Meters(f64),
    Volts(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instruction {
    Prepare { state: ZeemanState },
    PiPulse { ion: usize, lower: ZeemanState, upper: ZeemanState },
    RabiPulse {
        ion: usize,
        lower: ZeemanState,
        upper: ZeemanState,
        /// Rabi frequency Ω/2π on the target ion, Hz.
        omega_hz: f64,
        detuning_hz: f64,
        t: f64,
    },
    Vuv { t: f64, detuning_hz: f64 },
    Pump397,
    Pump393,
    Transport { shift: Displacement, t: f64 },
    Detect { t: f64, signal: Signal },
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Prepare { state } => write!(f, "prepare state={state}"),
            Instruction::PiPulse { ion, lower, upper } => {
                write!(f, "pulse pi ion={ion} from={lower} to={upper}")
            }
            Instruction::RabiPulse { ion, lower, upper, omega_hz, detuning_hz, t } => write!(
                f,
                "pulse rabi ion={ion} from={lower} to={upper} omega={omega_hz} detuning={detuning_hz} t={t}"
            ),
            Instruction::Vuv { t, detuning_hz } => write!(f, "vuv t={t} detuning={detuning_hz}"),
            Instruction::Pump397 => f.write_str("pump 397"),
            Instruction::Pump393 => f.write_str("pump 393"),
            Instruction::Transport { shift: Displacement::Meters(dz), t } => {
                write!(f, "transport dz={dz} t={t}")
            }
            Instruction::Transport { shift: Displacement::Volts(dv), t } => {
                write!(f, "transport dv={dv} t={t}")
            }
            Instruction::Detect { t, signal } => write!(f, "detect t={t} signal={signal}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseProgram {
    instructions: Vec<Instruction>,
    lines: Vec<usize>,
}

impl PulseProgram {
    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    /// Source line of each instruction, 1-based.
    pub fn lines(&self) -> &[usize] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn signal(&self) -> Signal {
        match self.instructions.last() {
            Some(Instruction::Detect { signal, .. }) => *signal,
            _ => Signal::Bright,
        }
    }

    pub fn max_ion_index(&self) -> Option<usize> {
        self.instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::PiPulse { ion, .. } | Instruction::RabiPulse { ion, .. } => Some(*ion),
                _ => None,
            })
            .max()
    }

    /// One instruction per line in canonical SI form.
    pub fn normalized(&self) -> String {
        self.instructions.iter().map(|i| format!("{i}\n")).collect()
    }
}

impl FromStr for PulseProgram {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in code.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Token { text: &code[s..i], column: code[..s].chars().count() + 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &code[s..], column: code[..s].chars().count() + 1 });
    }
    out
}

struct Fields<'a> {
    line: usize,
    keyword_column: usize,
    entries: Vec<(&'a str, &'a str, usize, bool)>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, keyword_column: usize, tokens: &[Token<'a>]) -> Result<Self, ParseError> {
        let mut entries: Vec<(&str, &str, usize, bool)> = Vec::new();
        for tok in tokens {
            let (k, v) = tok.text.split_once('=').ok_or_else(|| ParseError {
                line,
                column: tok.column,
                kind: ParseErrorKind::Syntax(format!("expected key=value, found `{}`", tok.text)),
            })?;
            if k.is_empty() || v.is_empty() {
                return Err(syntax(line, tok.column, format!("malformed field `{}`", tok.text)));
            }
            if entries.iter().any(|(ek, ..)| *ek == k) {
                return Err(syntax(line, tok.column, format!("duplicate field `{k}`")));
            }
            entries.push((k, v, tok.column, false));
        }
        Ok(Fields { line, keyword_column, entries })
    }

    fn take(&mut self, key: &str) -> Option<(&'a str, usize)> {
        self.entries.iter_mut().find(|(k, ..)| *k == key).map(|e| {
            e.3 = true;
            (e.1, e.2)
        })
    }

    fn require(&mut self, key: &str) -> Result<(&'a str, usize), ParseError> {
        let (line, col) = (self.line, self.keyword_column);
        self.take(key)
            .ok_or_else(|| syntax(line, col, format!("missing field `{key}`")))
    }

    fn quantity(&mut self, key: &str, dim: Dimension) -> Result<Option<f64>, ParseError> {
        let line = self.line;
        match self.take(key) {
            None => Ok(None),
            Some((v, col)) => parse_quantity(v, dim).map(Some).map_err(|m| syntax(line, col, m)),
        }
    }

    fn duration(&mut self, key: &str) -> Result<f64, ParseError> {
        let (v, col) = self.require(key)?;
        let t = parse_quantity(v, Dimension::Time).map_err(|m| syntax(self.line, col, m))?;
        if t < 0.0 {
            return Err(syntax(self.line, col, format!("duration `{v}` is negative")));
        }
        Ok(t)
    }

    fn ion(&mut self) -> Result<usize, ParseError> {
        let (v, col) = self.require("ion")?;
        v.parse()
            .map_err(|_| syntax(self.line, col, format!("ion index `{v}` is not a non-negative integer")))
    }

    fn state(&mut self, key: &str) -> Result<(ZeemanState, usize), ParseError> {
        let (v, col) = self.require(key)?;
        parse_state(v)
            .map(|s| (s, col))
            .ok_or_else(|| ParseError { line: self.line, column: col, kind: ParseErrorKind::UnknownState(v.into()) })
    }

    fn finish(self) -> Result<(), ParseError> {
        match self.entries.iter().find(|e| !e.3) {
            Some((k, _, col, _)) => Err(syntax(self.line, *col, format!("unknown field `{k}`"))),
            None => Ok(()),
        }
    }
}

fn syntax(line: usize, column: usize, msg: impl Into<String>) -> ParseError {
    ParseError { line, column, kind: ParseErrorKind::Syntax(msg.into()) }
}

/// State literals usable in pulses: `S:<m>` (or `S1/2:<m>`) and `D5/2:<m>`.
fn parse_state(text: &str) -> Option<ZeemanState> {
    let (term, m) = text.split_once(':')?;
    let term = match term {
        "S" | "S1/2" => Term::S12,
        "D5/2" => Term::D52,
        _ => return None,
    };
    let m: Half = m.parse().ok()?;
    ZeemanState::new(term, m).ok()
}

fn quadrupole_pair(
    a: ZeemanState,
    b: ZeemanState,
    line: usize,
    column: usize,
) -> Result<(ZeemanState, ZeemanState), ParseError> {
    let (lower, upper) = if a.term() == Term::S12 { (a, b) } else { (b, a) };
    if transition_kind(lower, upper) == Some(TransitionKind::Quadrupole729) {
        return Ok((lower, upper));
    }
    let msg = if lower.term() == upper.term() {
        format!("{a} -> {b} does not connect S1/2 and D5/2")
    } else {
        let dm = upper.m().twice() - lower.m().twice();
        format!("{a} -> {b} has Δm={}, quadrupole transitions need |Δm| <= 2", Half::from_twice(dm))
    };
    Err(ParseError { line, column, kind: ParseErrorKind::SelectionRule(msg) })
}

pub fn parse(source: &str) -> Result<PulseProgram, ParseError> {
    let mut instructions = Vec::new();
    let mut lines = Vec::new();
    let mut detect_line: Option<usize> = None;
    let mut last_line = 0;
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let tokens = tokenize(raw);
        let Some(head) = tokens.first() else { continue };
        if detect_line.is_some() {
            let kind = if head.text == "detect" {
                ParseErrorKind::DuplicateDetect
            } else {
                ParseErrorKind::Syntax("instruction after detect".into())
            };
            return Err(ParseError { line, column: head.column, kind });
        }
        let (instr, rest) = match head.text {
            "pulse" => {
                let kind = tokens.get(1).ok_or_else(|| syntax(line, head.column, "expected `pi` or `rabi`"))?;
                let mut f = Fields::new(line, head.column, &tokens[2..])?;
                let ion = f.ion()?;
                let (from, _) = f.state("from")?;
                let (to, to_col) = f.state("to")?;
                let (lower, upper) = quadrupole_pair(from, to, line, to_col)?;
                let instr = match kind.text {
                    "pi" => Instruction::PiPulse { ion, lower, upper },
                    "rabi" => {
                        let (v, col) = f.require("omega")?;
                        let omega_hz = parse_quantity(v, Dimension::Frequency).map_err(|m| syntax(line, col, m))?;
                        if omega_hz < 0.0 {
                            return Err(syntax(line, col, "omega must be >= 0"));
                        }
                        let detuning_hz = f.quantity("detuning", Dimension::Frequency)?.unwrap_or(0.0);
                        let t = f.duration("t")?;
                        Instruction::RabiPulse { ion, lower, upper, omega_hz, detuning_hz, t }
                    }
                    other => {
                        return Err(syntax(line, kind.column, format!("unknown pulse kind `{other}`")));
                    }
                };
                (instr, f)
            }
            "prepare" => {
                let mut f = Fields::new(line, head.column, &tokens[1..])?;
                let (state, col) = f.state("state")?;
                if state.term() != Term::S12 {
                    return Err(syntax(line, col, format!("prepare needs an S1/2 sublevel, got {state}")));
                }
                (Instruction::Prepare { state }, f)
            }
            "vuv" => {
                let mut f = Fields::new(line, head.column, &tokens[1..])?;
                let t = f.duration("t")?;
                let detuning_hz = f.quantity("detuning", Dimension::Frequency)?.unwrap_or(0.0);
                (Instruction::Vuv { t, detuning_hz }, f)
            }
            "pump" => {
                let which = tokens.get(1).ok_or_else(|| syntax(line, head.column, "expected `397` or `393`"))?;
                let instr = match which.text {
                    "397" => Instruction::Pump397,
                    "393" => Instruction::Pump393,
                    other => return Err(syntax(line, which.column, format!("unknown pump `{other}`"))),
                };
                (instr, Fields::new(line, head.column, &tokens[2..])?)
            }
            "transport" => {
                let mut f = Fields::new(line, head.column, &tokens[1..])?;
                let dz = f.quantity("dz", Dimension::Length)?;
                let dv = f.quantity("dv", Dimension::Voltage)?;
                let shift = match (dz, dv) {
                    (Some(dz), None) => Displacement::Meters(dz),
                    (None, Some(dv)) => Displacement::Volts(dv),
                    _ => return Err(syntax(line, head.column, "transport needs exactly one of dz, dv")),
                };
                let t = f.duration("t")?;
                (Instruction::Transport { shift, t }, f)
            }
            "detect" => {
                let mut f = Fields::new(line, head.column, &tokens[1..])?;
                let t = f.duration("t")?;
                let signal = match f.take("signal") {
                    None | Some(("bright", _)) => Signal::Bright,
                    Some(("dark", _)) => Signal::Dark,
                    Some((v, col)) => return Err(syntax(line, col, format!("signal must be bright or dark, got `{v}`"))),
                };
                detect_line = Some(line);
                (Instruction::Detect { t, signal }, f)
            }
            other => return Err(syntax(line, head.column, format!("unknown instruction `{other}`"))),
        };
        rest.finish()?;
        instructions.push(instr);
        lines.push(line);
    }
    if detect_line.is_none() {
        return Err(ParseError { line: last_line.max(1), column: 1, kind: ParseErrorKind::MissingDetect });
    }
    Ok(PulseProgram { instructions, lines })
}
