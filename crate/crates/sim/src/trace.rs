//! Trace recording: every signal dispatch and state transition becomes one
//! timestamped event, the unit of all simulation output.

use crate::machine::SignalKind;
use crate::value::AttrValue;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Node,
    Edge,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub seq: u64,
    pub entity: Entity,
    pub signal: SignalKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub kind: EntityKind,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceDocument {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
}

impl TraceDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// One committed or received attribute value, kept for time-series export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrSample {
    pub t: f64,
    pub node: String,
    pub attr: String,
    pub value: AttrValue,
    pub received: bool,
}

/// Renders `t,value` (or `t,v0,...,vk` for vectors) CSV for a series.
pub fn series_csv(samples: &[(f64, AttrValue)]) -> String {
    let width = samples
        .iter()
        .map(|(_, v)| v.csv_fields().len())
        .max()
        .unwrap_or(1);
    let mut out = String::new();
    if width == 1 {
        out.push_str("t,value\n");
    } else {
        out.push('t');
        for i in 0..width {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
    }
    for (t, v) in samples {
        out.push_str(&format!("{t}"));
        for f in v.csv_fields() {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
    }
    out
}
