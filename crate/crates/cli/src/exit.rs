//! Error → process exit code mapping.

use std::error::Error;

use finbench_core::corpus::CorpusError;
use finbench_core::instruct::InstructError;
use finbench_core::io::IoError;
use finbench_core::mixer::MixError;
use finbench_core::runner::RunnerError;
use finbench_core::scorer::ScoreError;

use crate::config::ConfigError;

pub const IO: u8 = 1;
pub const COUNT_FAILURE: u8 = 3;
pub const MISSING_FILE: u8 = 4;
pub const MALFORMED_ROW: u8 = 5;
pub const COUNT_MISMATCH: u8 = 6;
pub const UNKNOWN_LABEL: u8 = 7;
pub const MISSING_QUESTION_ANSWER: u8 = 8;
pub const CORPUS: u8 = 9;
pub const INSTRUCT: u8 = 10;
pub const MIX: u8 = 11;
pub const SCORE: u8 = 12;
pub const ADAPTER_NOT_FOUND: u8 = 13;
pub const ADAPTER_FAILED: u8 = 14;
pub const PROTOCOL_VIOLATION: u8 = 15;
pub const PLAN: u8 = 16;
pub const CONFIG: u8 = 17;

pub const HELP: &str = "\
Exit codes:
   0  success
   1  file I/O or encoding error
   2  invalid command-line usage
   3  ingest: count validation failed
   4  corpus: missing source file
   5  corpus: malformed row
   6  corpus: count mismatch against a manifest's expected_count
   7  corpus: label outside the dataset vocabulary
   8  corpus: headline row missing a question answer
   9  corpus: invalid manifest, incomplete mapping or task mismatch
  10  instruction construction error
  11  mixing error (missing task, empty group, zero-shot leak)
  12  scoring error
  13  adapter not found
  14  adapter exited with failure
  15  adapter protocol violation (missing/malformed output, completions not 1:1 with eval ids)
  16  plan error (unknown phase, invalid override, bad cost input)
  17  configuration error";

fn corpus(e: &CorpusError) -> u8 {
    match e {
        CorpusError::MissingFile(_) => MISSING_FILE,
        CorpusError::MalformedRow { .. } => MALFORMED_ROW,
        CorpusError::CountMismatch { .. } => COUNT_MISMATCH,
        CorpusError::UnknownLabel { .. } => UNKNOWN_LABEL,
        CorpusError::MissingQuestionAnswer { .. } => MISSING_QUESTION_ANSWER,
        CorpusError::Io(_) => IO,
        _ => CORPUS,
    }
}

fn score(e: &ScoreError) -> u8 {
    match e {
        ScoreError::MissingCompletion(_) | ScoreError::UnexpectedCompletion(_) => PROTOCOL_VIOLATION,
        ScoreError::Io(_) => IO,
        _ => SCORE,
    }
}

fn runner(e: &RunnerError) -> u8 {
    match e {
        RunnerError::AdapterNotFound(_) => ADAPTER_NOT_FOUND,
        RunnerError::AdapterFailed { .. } => ADAPTER_FAILED,
        RunnerError::ProtocolViolation(_) => PROTOCOL_VIOLATION,
        RunnerError::Mix(_) => MIX,
        RunnerError::Instruct(_) => INSTRUCT,
        RunnerError::Score(s) => score(s),
        RunnerError::Io(_) => IO,
        _ => PLAN,
    }
}

fn classify(e: &(dyn Error + 'static)) -> Option<u8> {
    if let Some(e) = e.downcast_ref::<CorpusError>() {
        return Some(corpus(e));
    }
    if let Some(e) = e.downcast_ref::<RunnerError>() {
        return Some(runner(e));
    }
    if let Some(e) = e.downcast_ref::<ScoreError>() {
        return Some(score(e));
    }
    if e.is::<InstructError>() {
        return Some(INSTRUCT);
    }
    if e.is::<MixError>() {
        return Some(MIX);
    }
    if e.is::<ConfigError>() {
        return Some(CONFIG);
    }
    if e.is::<IoError>() {
        return Some(IO);
    }
    None
}

pub fn code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify).unwrap_or(IO)
}
