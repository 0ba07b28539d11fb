//! Structured queries over the world model and the task-adaptive
//! coordinator that decides between cached answers and fresh perception.

mod engine;
mod parser;

pub use engine::{
    evaluate, Answer, CoordinatorPolicy, Engine, Mode, QueryError, QueryOutcome, SceneInputs, Stage, StageDelays,
    StageTimings, Tools,
};
pub use parser::{parse_query, quote_label, ParseError, Query, QueryCategory};
