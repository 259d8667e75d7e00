use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::combination::AvailabilityMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Closed,
    Settled,
}

/// One market round for a single task and time index.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub t: u64,
    pub state: SessionState,
    /// Seller index -> values laid out as `values[h * m + q]`.
    pub submissions: BTreeMap<usize, Vec<f64>>,
    /// Sellers that tried to submit after the session closed.
    pub late: Vec<usize>,
    /// Set at close.
    pub alpha: Option<AvailabilityMask>,
    /// Combined forecast per model instance, set at close.
    pub combined: Option<Vec<f64>>,
}

impl Session {
    pub(crate) fn open(task_id: &str, t: u64) -> Self {
        Self {
            session_id: format!("{task_id}/{t}"),
            t,
            state: SessionState::Open,
            submissions: BTreeMap::new(),
            late: Vec::new(),
            alpha: None,
            combined: None,
        }
    }

    pub fn submission_count(&self) -> usize {
        self.submissions.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmissionAck {
    pub session_id: String,
    pub seller: String,
    /// True when an earlier submission from the same seller was overwritten.
    pub replaced: bool,
}

/// What the client receives at close.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub session_id: String,
    pub alpha: AvailabilityMask,
    /// Per model instance, in task layout order.
    pub combined: Vec<f64>,
    /// Every seller was missing; the combined forecasts are 0.
    pub degenerate: bool,
}
