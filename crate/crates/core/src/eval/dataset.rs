use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Questions whose mean context score reaches this value are `Long`.
pub const LONG_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Long,
    Short,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Long => "Long",
            Split::Short => "Short",
        }
    }
}

/// Long iff the mean annotator score is at least 3. No scores means Short.
pub fn split_for_scores(scores: &[f64]) -> Split {
    if scores.is_empty() {
        return Split::Short;
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    if mean >= LONG_THRESHOLD {
        Split::Long
    } else {
        Split::Short
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub question_id: String,
    pub article_id: String,
    pub question: String,
    pub options: Vec<String>,
    /// 0-based index into `options`.
    pub gold_label: usize,
    #[serde(default)]
    pub context_scores: Vec<f64>,
}

impl QaExample {
    pub fn split(&self) -> Split {
        split_for_scores(&self.context_scores)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.options.len() != 4 {
            return Err(format!("expected 4 options, found {}", self.options.len()));
        }
        if self.gold_label >= 4 {
            return Err(format!("gold_label {} out of range 0..3", self.gold_label));
        }
        if self.question_id.is_empty() {
            return Err("question_id is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub text: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("permutation id {0} out of range 0..3")]
    InvalidPermutation(usize),
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<(usize, T)>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| DatasetError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

/// Reads normalized examples (one JSON object per line).
pub fn parse_examples(text: &str) -> Result<Vec<QaExample>, DatasetError> {
    parse_lines::<QaExample>(text)?
        .into_iter()
        .map(|(line, ex)| {
            ex.check()
                .map(|_| ex)
                .map_err(|message| DatasetError::Schema { line, message })
        })
        .collect()
}

pub fn parse_articles(text: &str) -> Result<Vec<Article>, DatasetError> {
    Ok(parse_lines::<Article>(text)?.into_iter().map(|(_, a)| a).collect())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

// Field names of the released QuALITY files. Nothing outside the importer
// depends on them.
#[derive(Deserialize)]
struct QualityArticle {
    article_id: String,
    #[serde(default)]
    set_unique_id: Option<String>,
    article: String,
    questions: Vec<QualityQuestion>,
}

#[derive(Deserialize)]
struct QualityQuestion {
    question: String,
    #[serde(default)]
    question_unique_id: Option<String>,
    options: Vec<String>,
    /// 1-based.
    gold_label: usize,
    #[serde(default)]
    validation: Vec<QualityValidation>,
}

#[derive(Deserialize)]
struct QualityValidation {
    #[serde(default)]
    untimed_eval2_context: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportOutput {
    pub examples: Vec<QaExample>,
    pub articles: Vec<Article>,
}

impl ImportOutput {
    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::from([(Split::Long, 0), (Split::Short, 0)]);
        for ex in &self.examples {
            *counts.entry(ex.split()).or_default() += 1;
        }
        counts
    }
}

/// Converts a QuALITY JSON-lines file into normalized examples and articles.
pub fn import_quality(text: &str) -> Result<ImportOutput, DatasetError> {
    let mut examples = Vec::new();
    let mut articles: Vec<Article> = Vec::new();
    for (line, art) in parse_lines::<QualityArticle>(text)? {
        let set_id = art.set_unique_id.clone().unwrap_or_else(|| art.article_id.clone());
        if !articles.iter().any(|a| a.article_id == art.article_id) {
            articles.push(Article {
                article_id: art.article_id.clone(),
                text: art.article.clone(),
            });
        }
        for (qi, q) in art.questions.into_iter().enumerate() {
            if q.gold_label == 0 {
                return Err(DatasetError::Schema {
                    line,
                    message: format!("question {}: gold_label must be 1-based", qi + 1),
                });
            }
            let ex = QaExample {
                question_id: q
                    .question_unique_id
                    .unwrap_or_else(|| format!("{set_id}_{}", qi + 1)),
                article_id: art.article_id.clone(),
                question: q.question,
                options: q.options,
                gold_label: q.gold_label - 1,
                context_scores: q
                    .validation
                    .iter()
                    .filter_map(|v| v.untimed_eval2_context)
                    .collect(),
            };
            ex.check().map_err(|message| DatasetError::Schema {
                line,
                message: format!("question {}: {message}", qi + 1),
            })?;
            examples.push(ex);
        }
    }
    Ok(ImportOutput { examples, articles })
}

/// Option order permutations: 0 is the identity, then the three pair
/// swaps (A-D/B-C, A-C/B-D, A-B/C-D). Each is its own inverse.
const PERMUTATIONS: [[usize; 4]; 4] = [[0, 1, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1], [1, 0, 3, 2]];

pub fn shuffle_options(example: &QaExample, permutation_id: usize) -> Result<QaExample, DatasetError> {
    let perm = PERMUTATIONS
        .get(permutation_id)
        .ok_or(DatasetError::InvalidPermutation(permutation_id))?;
    let mut out = example.clone();
    out.options = perm.iter().map(|&i| example.options[i].clone()).collect();
    out.gold_label = perm[example.gold_label];
    Ok(out)
}
