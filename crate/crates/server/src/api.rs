use mom_core::pointcloud::{PointcloudConfig, PointcloudSession};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// `POST /sessions` body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    /// Only `"pointcloud"` is served.
    pub experiment: String,
    /// Partial configuration merged over [`default_config`].
    #[serde(default)]
    pub config: Value,
    #[serde(default)]
    pub seed: u64,
    /// Reveal the true shapes after each submitted round.
    #[serde(default = "yes")]
    pub feedback: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub round: usize,
    pub rounds: usize,
    pub queries_per_round: usize,
}

/// One scatterplot to label. Carries no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub query_id: String,
    pub points2d: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Active,
    Complete,
}

/// `GET /sessions/{id}/round` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPayload {
    pub session_id: String,
    pub round: usize,
    pub status: RoundStatus,
    pub queries: Vec<QueryPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub query_id: String,
    /// `"X"` or `"O"`.
    pub label: String,
}

/// `POST /sessions/{id}/labels` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitLabels {
    pub labels: Vec<LabelEntry>,
}

/// Outcome of one labeled round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    /// Fraction of this round's labels matching the true shapes.
    pub human_accuracy: f64,
    pub proxy_validation_error: f64,
    /// False when the projection was left unchanged.
    pub embedding_updated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub query_id: String,
    pub label: String,
    pub truth: String,
    pub correct: bool,
}

/// `POST /sessions/{id}/labels` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResult {
    #[serde(flatten)]
    pub summary: RoundSummary,
    pub next_round: usize,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Vec<Feedback>>,
}

/// `GET /sessions/{id}/metrics` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPayload {
    pub session_id: String,
    pub experiment: String,
    pub round: usize,
    pub complete: bool,
    pub trace: Vec<RoundSummary>,
    pub seed: u64,
    pub feedback: bool,
    pub config: PointcloudConfig,
}

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
}

/// The persisted document of one session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub experiment: String,
    pub seed: u64,
    pub feedback: bool,
    /// Milliseconds since the Unix epoch.
    pub created_ms: u64,
    pub updated_ms: u64,
    pub state: PointcloudSession,
}

impl SessionRecord {
    pub fn trace(&self) -> Vec<RoundSummary> {
        self.state
            .session
            .metrics
            .iter()
            .map(|m| RoundSummary {
                round: m.round,
                human_accuracy: m.response_accuracy,
                proxy_validation_error: m.proxy_validation_error,
                embedding_updated: m.embedding_updated,
            })
            .collect()
    }
}

/// Interactive defaults: 5 rounds of 15 scatterplots, and a perfectly
/// labeled round leaves the projection untouched.
pub fn default_config() -> PointcloudConfig {
    let mut c = PointcloudConfig::default();
    c.mom.rounds = 5;
    c.mom.queries_per_round = 15;
    c.mom.skip_embed_on_perfect = true;
    c
}

/// Recursively overlays `patch` onto `base`; non-object values replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (_, Value::Null) => {}
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_overlays_nested_keys() {
        let mut base = json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge(&mut base, json!({"b": {"c": 5}, "e": true}));
        assert_eq!(base, json!({"a": 1, "b": {"c": 5, "d": 3}, "e": true}));
        merge(&mut base, Value::Null);
        assert_eq!(base["a"], 1);
    }

    #[test]
    fn create_defaults() {
        let c: CreateSession = serde_json::from_str(r#"{"experiment":"pointcloud"}"#).unwrap();
        assert!(c.feedback);
        assert_eq!(c.seed, 0);
        assert!(c.config.is_null());
    }
}
