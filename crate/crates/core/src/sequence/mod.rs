pub mod engine;
pub mod program;

pub use engine::{run, scan, Engine, EngineError, IonStat, RunResult};
pub use program::{parse, Displacement, Instruction, ParseError, ParseErrorKind, PulseProgram, Signal};
