//! Evaluation: answer mapping, method runners, accuracy, significance and
//! plan statistics.

pub mod dataset;
pub mod mapping;
pub mod methods;
pub mod metrics;
pub mod significance;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::UsageTotals;

pub use dataset::{
    import_quality, parse_articles, parse_examples, shuffle_options, split_for_scores, Article,
    DatasetError, ImportOutput, QaExample, Split,
};
pub use mapping::{label_reasoning_types, map_answer, parse_choice, parse_reasoning_types, REASONING_TYPES};
pub use methods::{run_method, MethodContext, QuestionTrace};
pub use metrics::{accuracy, accuracy_csv, accuracy_report, plan_stats, AccuracyRow, GroupBy, PlanStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pearl,
    ZeroShot,
    ZeroShotCot,
    PearlNoExec,
    MultiChoiceDirect,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Pearl,
        Method::ZeroShot,
        Method::ZeroShotCot,
        Method::PearlNoExec,
        Method::MultiChoiceDirect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pearl => "pearl",
            Method::ZeroShot => "zero_shot",
            Method::ZeroShotCot => "zero_shot_cot",
            Method::PearlNoExec => "pearl_no_exec",
            Method::MultiChoiceDirect => "multi_choice_direct",
        }
    }

    /// Whether the method needs a registry and demonstrations.
    pub fn uses_plans(self) -> bool {
        matches!(self, Method::Pearl | Method::PearlNoExec)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown method '{s}' (expected one of: {})",
                    Method::ALL.map(Method::as_str).join(", ")
                )
            })
    }
}

/// Outcome of one question under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub method: Method,
    pub split: Split,
    pub gold_label: usize,
    pub generated_answer: String,
    pub mapped_choice: Option<usize>,
    /// `None` when no choice was mapped; counted as wrong.
    pub correct: Option<bool>,
    pub mapping_failed: bool,
    /// The plan never validated and the zero-shot answer was used.
    pub fallback: bool,
    pub error: Option<String>,
    pub usage: UsageTotals,
    pub trace_ref: String,
    #[serde(default)]
    pub reasoning_types: Vec<String>,
}

impl EvalRecord {
    pub fn empty(question_id: &str, method: Method) -> Self {
        EvalRecord {
            question_id: question_id.to_string(),
            method,
            split: Split::Short,
            gold_label: 0,
            generated_answer: String::new(),
            mapped_choice: None,
            correct: None,
            mapping_failed: false,
            fallback: false,
            error: None,
            usage: UsageTotals::default(),
            trace_ref: trace_ref(question_id),
            reasoning_types: Vec::new(),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.correct == Some(true)
    }
}

/// Relative path of a question's trace file inside a run directory.
pub fn trace_ref(question_id: &str) -> String {
    let safe: String = question_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("traces/{safe}.json")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("records are not paired: {0}")]
    UnpairedRecords(String),
}

/// Paired permutation p-value between two methods' records on the same
/// questions.
pub fn significance(
    a: &[EvalRecord],
    b: &[EvalRecord],
    resamples: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    let index: HashMap<&str, &EvalRecord> = b.iter().map(|r| (r.question_id.as_str(), r)).collect();
    if index.len() != b.len() {
        return Err(EvalError::UnpairedRecords("duplicate question ids in the second run".into()));
    }
    if a.len() != b.len() {
        return Err(EvalError::UnpairedRecords(format!(
            "{} records against {}",
            a.len(),
            b.len()
        )));
    }
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for r in a {
        let other = index.get(r.question_id.as_str()).ok_or_else(|| {
            EvalError::UnpairedRecords(format!("question '{}' missing from the second run", r.question_id))
        })?;
        xs.push(r.is_correct());
        ys.push(other.is_correct());
    }
    Ok(significance::paired_permutation_p(&xs, &ys, resamples, seed))
}
