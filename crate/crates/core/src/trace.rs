use serde::{Deserialize, Serialize};

/// One per-epoch measurement of a run. Epoch 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub effective_passes: f64,
    pub wall_time_s: f64,
    pub objective: f64,
    /// Objective minus the reference minimum, once one is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

/// Fills in `gap` for every record against a reference minimum.
pub fn attach_gaps(trace: &mut [TraceRecord], reference: f64) {
    for rec in trace {
        rec.gap = Some(rec.objective - reference);
    }
}
