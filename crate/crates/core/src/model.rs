//! Node-local component models: variables with bounds, expression
//! constraints, an objective and a named data vector.

use crate::expr::Expr;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("variable `{0}` already declared")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("data entry `{0}` already declared")]
    DuplicateData(String),
    #[error("unknown data entry `{0}`")]
    UnknownData(String),
    #[error("lower bound {lower} exceeds upper bound {upper} for `{name}`")]
    BadBounds { name: String, lower: f64, upper: f64 },
    #[error("expression references variable index {index}, model has {len} variables")]
    BadVariableRef { index: usize, len: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(with = "bound_serde")]
    pub lower: f64,
    #[serde(with = "bound_serde")]
    pub upper: f64,
    pub start: f64,
}

/// JSON has no infinity literal, so unbounded sides round-trip as strings.
mod bound_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Bound {
            Number(f64),
            Text(String),
        }
        match Bound::deserialize(d)? {
            Bound::Number(v) => Ok(v),
            Bound::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad bound `{other}`"))),
            },
        }
    }
}

/// A self-contained optimization model attached to one graph node.
/// Equalities mean `expr == 0`, inequalities mean `expr >= 0`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ComponentModel {
    variables: Vec<Variable>,
    #[serde(skip)]
    var_lookup: HashMap<String, usize>,
    data_names: Vec<String>,
    data_values: Vec<f64>,
    #[serde(skip)]
    data_lookup: HashMap<String, usize>,
    pub equalities: Vec<Expr>,
    pub inequalities: Vec<Expr>,
    pub objective: Option<Expr>,
}

impl ComponentModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: &str, start: f64) -> Result<Expr, ModelError> {
        self.add_bounded_variable(name, f64::NEG_INFINITY, f64::INFINITY, start)
    }

    pub fn add_bounded_variable(
        &mut self,
        name: &str,
        lower: f64,
        upper: f64,
        start: f64,
    ) -> Result<Expr, ModelError> {
        if self.var_lookup.contains_key(name) {
            return Err(ModelError::DuplicateVariable(name.to_string()));
        }
        if lower > upper {
            return Err(ModelError::BadBounds {
                name: name.to_string(),
                lower,
                upper,
            });
        }
        let idx = self.variables.len();
        self.variables.push(Variable {
            name: name.to_string(),
            lower,
            upper,
            start,
        });
        self.var_lookup.insert(name.to_string(), idx);
        Ok(Expr::var(idx))
    }

    pub fn add_data(&mut self, name: &str, value: f64) -> Result<Expr, ModelError> {
        if self.data_lookup.contains_key(name) {
            return Err(ModelError::DuplicateData(name.to_string()));
        }
        let idx = self.data_names.len();
        self.data_names.push(name.to_string());
        self.data_values.push(value);
        self.data_lookup.insert(name.to_string(), idx);
        Ok(Expr::data(idx))
    }

    pub fn set_data(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        let idx = *self
            .data_lookup
            .get(name)
            .ok_or_else(|| ModelError::UnknownData(name.to_string()))?;
        self.data_values[idx] = value;
        Ok(())
    }

    pub fn data_value(&self, name: &str) -> Result<f64, ModelError> {
        let idx = *self
            .data_lookup
            .get(name)
            .ok_or_else(|| ModelError::UnknownData(name.to_string()))?;
        Ok(self.data_values[idx])
    }

    pub fn data_values(&self) -> &[f64] {
        &self.data_values
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn var_index(&self, name: &str) -> Result<usize, ModelError> {
        self.var_lookup
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
    }

    pub fn var_expr(&self, name: &str) -> Result<Expr, ModelError> {
        Ok(Expr::var(self.var_index(name)?))
    }

    pub fn set_start(&mut self, name: &str, start: f64) -> Result<(), ModelError> {
        let idx = self.var_index(name)?;
        self.variables[idx].start = start;
        Ok(())
    }

    pub fn start_point(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.start).collect()
    }

    pub fn add_equality(&mut self, expr: Expr) -> Result<(), ModelError> {
        self.check_refs(&expr)?;
        self.equalities.push(expr);
        Ok(())
    }

    pub fn add_inequality(&mut self, expr: Expr) -> Result<(), ModelError> {
        self.check_refs(&expr)?;
        self.inequalities.push(expr);
        Ok(())
    }

    pub fn set_objective(&mut self, expr: Expr) -> Result<(), ModelError> {
        self.check_refs(&expr)?;
        self.objective = Some(expr);
        Ok(())
    }

    pub fn add_to_objective(&mut self, expr: Expr) -> Result<(), ModelError> {
        self.check_refs(&expr)?;
        self.objective = Some(match self.objective.take() {
            Some(o) => o + expr,
            None => expr,
        });
        Ok(())
    }

    fn check_refs(&self, expr: &Expr) -> Result<(), ModelError> {
        if let Some(max) = expr.max_var() {
            if max >= self.variables.len() {
                return Err(ModelError::BadVariableRef {
                    index: max,
                    len: self.variables.len(),
                });
            }
        }
        Ok(())
    }

    /// Rebuilds lookup tables, needed after deserialization.
    pub fn rebuild_lookups(&mut self) {
        self.var_lookup = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i))
            .collect();
        self.data_lookup = self
            .data_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variables_and_data() {
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 1.0).unwrap();
        let d = m.add_data("demand", 5.0).unwrap();
        m.add_equality(x.clone() - d).unwrap();
        m.set_objective(x.square()).unwrap();
        assert_eq!(m.num_vars(), 1);
        assert_eq!(m.equalities[0].evaluate(&[5.0], m.data_values()).unwrap(), 0.0);
        m.set_data("demand", 7.0).unwrap();
        assert_eq!(m.equalities[0].evaluate(&[5.0], m.data_values()).unwrap(), -2.0);
        assert!(matches!(
            m.set_data("nope", 0.0),
            Err(ModelError::UnknownData(_))
        ));
    }

    #[test]
    fn duplicate_and_bad_refs() {
        let mut m = ComponentModel::new();
        m.add_variable("x", 0.0).unwrap();
        assert!(matches!(
            m.add_variable("x", 0.0),
            Err(ModelError::DuplicateVariable(_))
        ));
        assert!(matches!(
            m.add_equality(Expr::var(3)),
            Err(ModelError::BadVariableRef { .. })
        ));
        assert!(matches!(
            m.add_bounded_variable("y", 2.0, 1.0, 0.0),
            Err(ModelError::BadBounds { .. })
        ));
    }
}
