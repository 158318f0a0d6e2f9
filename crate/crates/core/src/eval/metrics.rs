use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::EvalRecord;
use crate::plan::Plan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Overall,
    Split,
    ReasoningType,
}

/// Counts for one group. Accuracy is `correct / n`; records with no mapped
/// choice count as wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub group: String,
    pub n: usize,
    pub correct: usize,
}

impl AccuracyRow {
    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.correct as f64 / self.n as f64
        }
    }
}

pub fn accuracy(records: &[EvalRecord], group_by: GroupBy) -> Vec<AccuracyRow> {
    let mut groups: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let keys: Vec<String> = match group_by {
            GroupBy::Overall => vec!["overall".to_string()],
            GroupBy::Split => vec![r.split.as_str().to_string()],
            GroupBy::ReasoningType => r.reasoning_types.clone(),
        };
        for k in keys {
            let e = groups.entry(k).or_default();
            e.0 += 1;
            e.1 += usize::from(r.correct == Some(true));
        }
    }
    groups
        .into_iter()
        .map(|(group, (n, correct))| AccuracyRow { group, n, correct })
        .collect()
}

/// Overall, then per split, then per reasoning type (when labeled).
pub fn accuracy_report(records: &[EvalRecord]) -> Vec<AccuracyRow> {
    let mut rows = accuracy(records, GroupBy::Overall);
    rows.extend(accuracy(records, GroupBy::Split));
    rows.extend(accuracy(records, GroupBy::ReasoningType));
    rows
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut out = String::from("group,n,accuracy\n");
    for r in rows {
        let group = if r.group.contains(',') || r.group.contains('"') {
            format!("\"{}\"", r.group.replace('"', "\"\""))
        } else {
            r.group.clone()
        };
        out.push_str(&format!("{group},{},{:?}\n", r.n, r.accuracy()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub plans: usize,
    pub mean_steps: f64,
    pub mean_unique_actions: f64,
    /// Action name and use count, most used first, ties by name.
    pub action_frequency: Vec<(String, usize)>,
}

pub fn plan_stats(plans: &[Plan]) -> PlanStats {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut steps = 0usize;
    let mut unique = 0usize;
    for p in plans {
        steps += p.steps.len();
        unique += p.steps.iter().map(|s| s.action.as_str()).collect::<HashSet<_>>().len();
        for s in &p.steps {
            *freq.entry(&s.action).or_default() += 1;
        }
    }
    let mut action_frequency: Vec<(String, usize)> =
        freq.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    action_frequency.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let n = plans.len();
    let mean = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    PlanStats {
        plans: n,
        mean_steps: mean(steps),
        mean_unique_actions: mean(unique),
        action_frequency,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Method, Split};
    use crate::plan::parse_plan;

    fn rec(id: &str, split: Split, correct: Option<bool>) -> EvalRecord {
        EvalRecord {
            question_id: id.into(),
            split,
            correct,
            ..EvalRecord::empty(id, Method::Pearl)
        }
    }

    #[test]
    fn overall_and_split() {
        let records = vec![
            rec("1", Split::Long, Some(true)),
            rec("2", Split::Long, Some(true)),
            rec("3", Split::Short, Some(true)),
            rec("4", Split::Short, None),
        ];
        let rows = accuracy_report(&records);
        assert_eq!(rows[0], AccuracyRow { group: "overall".into(), n: 4, correct: 3 });
        assert_eq!(rows[0].accuracy(), 0.75);
        assert_eq!(rows[1].accuracy(), 1.0);
        assert_eq!(rows[2].accuracy(), 0.5);
        assert_eq!(
            accuracy_csv(&rows),
            "group,n,accuracy\noverall,4,0.75\nLong,2,1.0\nShort,2,0.5\n"
        );
    }

    #[test]
    fn type_rows() {
        let mut records: Vec<EvalRecord> = (0..118)
            .map(|i| rec(&i.to_string(), Split::Long, Some(i < 83)))
            .collect();
        for r in &mut records {
            r.reasoning_types = vec!["Not/except".into()];
        }
        let rows = accuracy(&records, GroupBy::ReasoningType);
        assert_eq!(accuracy_csv(&rows), format!("group,n,accuracy\nNot/except,118,{:?}\n", 83.0 / 118.0));
    }

    #[test]
    fn stats() {
        let a = parse_plan("1. a = X(CTX)\n2. b = X(CTX)\n3. c = CONCAT(a, b)").unwrap();
        let b = parse_plan(
            "1. a = FIND_CHARACTER(CTX, \"r\")\n2. b = CONCAT(a)\n3. c = CONCAT(b)\n4. d = Y(CTX)\n5. e = Y(CTX)",
        )
        .unwrap();
        let s = plan_stats(&[a, b]);
        assert_eq!(s.mean_steps, 4.0);
        assert_eq!(s.mean_unique_actions, 2.5);
        assert_eq!(
            s.action_frequency,
            vec![
                ("CONCAT".to_string(), 3),
                ("X".to_string(), 2),
                ("Y".to_string(), 2),
                ("FIND_CHARACTER".to_string(), 1)
            ]
        );
    }
}
