use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn from_accept(accept: bool) -> Self {
        if accept {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_yes() { "YES" } else { "NO" })
    }
}

/// One step of a tester run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub values: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
}

impl StageRecord {
    pub fn new(stage: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            values: BTreeMap::new(),
            answer: None,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }

    pub fn answered(mut self, answer: Answer) -> Self {
        self.answer = Some(answer);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleUsage {
    pub oracle: String,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestVerdict {
    pub answer: Answer,
    pub samples_used: Vec<OracleUsage>,
    pub trace: Vec<StageRecord>,
}

impl TestVerdict {
    pub fn total_samples(&self) -> u64 {
        self.samples_used.iter().map(|u| u.samples).sum()
    }

    pub fn samples_for(&self, oracle: &str) -> Option<u64> {
        self.samples_used
            .iter()
            .find(|u| u.oracle == oracle)
            .map(|u| u.samples)
    }
}

/// Accumulates stage records and answers NO at the first failing stage.
#[derive(Debug, Default)]
pub(crate) struct Trace {
    pub records: Vec<StageRecord>,
}

impl Trace {
    pub fn push(&mut self, r: StageRecord) {
        self.records.push(r);
    }

    pub fn extend(&mut self, prefix: &str, other: Vec<StageRecord>) {
        for mut r in other {
            r.stage = format!("{prefix}/{}", r.stage);
            self.records.push(r);
        }
    }

    pub fn finish(self, answer: Answer, usage: Vec<(&str, u64)>) -> TestVerdict {
        TestVerdict {
            answer,
            samples_used: usage
                .into_iter()
                .map(|(o, s)| OracleUsage {
                    oracle: o.to_string(),
                    samples: s,
                })
                .collect(),
            trace: self.records,
        }
    }
}
