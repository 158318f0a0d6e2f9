use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LlmExchange, Tag};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl UsageTotals {
    pub fn add(&mut self, ex: &LlmExchange) {
        self.calls += 1;
        self.prompt_tokens += ex.prompt_tokens;
        self.completion_tokens += ex.completion_tokens;
    }

    pub fn merge(&mut self, other: &UsageTotals) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

/// This run's totals divided by a baseline run's. A ratio is `None` when
/// the baseline count is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRatios {
    pub prompt_tokens: Option<f64>,
    pub completion_tokens: Option<f64>,
    pub calls: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub per_tag: BTreeMap<Tag, UsageTotals>,
    pub total: UsageTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_to_baseline: Option<CostRatios>,
}

impl UsageReport {
    /// Adds one call's counts under `tag`.
    pub fn record(&mut self, tag: Tag, prompt_tokens: u64, completion_tokens: u64) {
        let call = UsageTotals {
            calls: 1,
            prompt_tokens,
            completion_tokens,
        };
        self.per_tag.entry(tag).or_default().merge(&call);
        self.total.merge(&call);
    }

    /// Fills `relative_to_baseline` from another run's report.
    pub fn with_baseline(mut self, baseline: &UsageReport) -> Self {
        let (a, b) = (self.total, baseline.total);
        self.relative_to_baseline = Some(CostRatios {
            prompt_tokens: ratio(a.prompt_tokens, b.prompt_tokens),
            completion_tokens: ratio(a.completion_tokens, b.completion_tokens),
            calls: ratio(a.calls, b.calls),
        });
        self
    }
}

pub fn usage_report(exchanges: &[LlmExchange]) -> UsageReport {
    let mut report = UsageReport::default();
    for ex in exchanges {
        report.record(ex.request.tag, ex.prompt_tokens, ex.completion_tokens);
    }
    report
}
