//! Attribute values communicated between compute nodes. Values are always
//! deep-copied at send time, so nodes never share mutable state.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AttrValue {
    Real(f64),
    Int(i64),
    Bool(bool),
    Vector(Vec<f64>),
    Matrix {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    Record(BTreeMap<String, AttrValue>),
}

impl AttrValue {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            AttrValue::Real(v) => Some(*v),
            AttrValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AttrValue::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            AttrValue::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_record(&self) -> Option<&BTreeMap<String, AttrValue>> {
        match self {
            AttrValue::Record(r) => Some(r),
            _ => None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> AttrValue {
        assert_eq!(rows * cols, data.len());
        AttrValue::Matrix { rows, cols, data }
    }

    /// Scalar components for CSV export: one column for scalars, one per
    /// entry for vectors.
    pub fn csv_fields(&self) -> Vec<f64> {
        match self {
            AttrValue::Real(v) => vec![*v],
            AttrValue::Int(v) => vec![*v as f64],
            AttrValue::Bool(v) => vec![f64::from(u8::from(*v))],
            AttrValue::Vector(v) => v.clone(),
            AttrValue::Matrix { data, .. } => data.clone(),
            AttrValue::Record(_) => vec![],
        }
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Real(v)
    }
}

impl From<i64> for AttrValue {
    fn from(v: i64) -> Self {
        AttrValue::Int(v)
    }
}

impl From<bool> for AttrValue {
    fn from(v: bool) -> Self {
        AttrValue::Bool(v)
    }
}

impl From<Vec<f64>> for AttrValue {
    fn from(v: Vec<f64>) -> Self {
        AttrValue::Vector(v)
    }
}
