//! Countable-state chains given by a step rule on the integers.
//!
//! These cannot be solved exactly; they carry declared classification and,
//! where known in closed form, the hitting probability and mean return time
//! of their target state so simulations have something to be checked against.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::Classification;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("unknown family `{0}` (known: srw_z, reflecting_bd)")]
    UnknownFamily(String),
    #[error("parameter `{name}` = {value} out of range: {reason}")]
    ParamOutOfRange {
        name: String,
        value: f64,
        reason: &'static str,
    },
    #[error("family `{family}` does not take parameter `{name}`")]
    UnknownParam { family: String, name: String },
}

/// Closed-form facts about the target state, when available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Analytic {
    /// Probability of visiting the target at some step `n >= 1` from the start.
    pub f_start_target: Option<f64>,
    /// Mean return time to the target (finite only for positive recurrence).
    pub m_target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Simple random walk on the integers, up-step probability `p`.
    SrwZ,
    /// Birth-death walk on the non-negative integers; at 0 it stays put with
    /// probability `1 - p`.
    ReflectingBd,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::SrwZ => "srw_z",
            Family::ReflectingBd => "reflecting_bd",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A countable chain with a pure step rule `(state, u) -> next`, `u ∈ [0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorChain {
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    pub start: i64,
    pub target: i64,
    pub declared_class_of_target: Classification,
    pub analytic: Option<Analytic>,
    up: f64,
}

impl GeneratorChain {
    pub fn family_name(&self) -> &'static str {
        self.family.name()
    }

    #[inline]
    pub fn step(&self, state: i64, u: f64) -> i64 {
        match self.family {
            Family::SrwZ => {
                if u < self.up {
                    state + 1
                } else {
                    state - 1
                }
            }
            Family::ReflectingBd => {
                if u < self.up {
                    state + 1
                } else if state > 0 {
                    state - 1
                } else {
                    0
                }
            }
        }
    }

    /// Declared facts for `target`; only the family's own target is covered.
    pub fn analytic_for(&self, target: i64) -> Option<Analytic> {
        if target == self.target {
            self.analytic
        } else {
            None
        }
    }
}

/// Instantiates a built-in family. Both families take a single parameter `p`.
pub fn builtin_family(name: &str, params: &BTreeMap<String, f64>) -> Result<GeneratorChain, FamilyError> {
    let family = match name {
        "srw_z" => Family::SrwZ,
        "reflecting_bd" => Family::ReflectingBd,
        other => return Err(FamilyError::UnknownFamily(other.to_owned())),
    };
    if let Some(extra) = params.keys().find(|k| k.as_str() != "p") {
        return Err(FamilyError::UnknownParam {
            family: name.to_owned(),
            name: extra.clone(),
        });
    }
    let p = params.get("p").copied().unwrap_or(0.5);
    if !(p > 0.0 && p < 1.0) {
        return Err(FamilyError::ParamOutOfRange {
            name: "p".into(),
            value: p,
            reason: "must lie strictly between 0 and 1",
        });
    }
    let q = 1.0 - p;
    // Both walks return to 0 with probability 1 - |p - q| = 2 min(p, q).
    let f_return = 2.0 * p.min(q);
    let (class, analytic) = match family {
        Family::SrwZ if p == 0.5 => (
            Classification::NullRecurrent,
            Analytic { f_start_target: Some(1.0), m_target: None },
        ),
        Family::SrwZ => (
            Classification::Transient,
            Analytic { f_start_target: Some(f_return), m_target: None },
        ),
        Family::ReflectingBd if p < 0.5 => {
            // Geometric stationary law pi_i = (1 - p/q)(p/q)^i.
            let pi0 = 1.0 - p / q;
            (
                Classification::PositiveRecurrent,
                Analytic { f_start_target: Some(1.0), m_target: Some(1.0 / pi0) },
            )
        }
        Family::ReflectingBd if p == 0.5 => (
            Classification::NullRecurrent,
            Analytic { f_start_target: Some(1.0), m_target: None },
        ),
        Family::ReflectingBd => (
            Classification::Transient,
            Analytic { f_start_target: Some(f_return), m_target: None },
        ),
    };
    Ok(GeneratorChain {
        family,
        params: BTreeMap::from([("p".to_owned(), p)]),
        start: 0,
        target: 0,
        declared_class_of_target: class,
        analytic: Some(analytic),
        up: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> BTreeMap<String, f64> {
        BTreeMap::from([("p".to_owned(), v)])
    }

    #[test]
    fn reflecting_positive_recurrent_mean_return() {
        let g = builtin_family("reflecting_bd", &p(1.0 / 3.0)).unwrap();
        assert_eq!(g.declared_class_of_target, Classification::PositiveRecurrent);
        let m = g.analytic.unwrap().m_target.unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert_eq!((g.start, g.target), (0, 0));
    }

    #[test]
    fn srw_classes() {
        let g = builtin_family("srw_z", &p(0.5)).unwrap();
        assert_eq!(g.declared_class_of_target, Classification::NullRecurrent);
        assert_eq!(g.analytic.unwrap().m_target, None);
        let g = builtin_family("srw_z", &p(0.7)).unwrap();
        assert_eq!(g.declared_class_of_target, Classification::Transient);
        assert!((g.analytic.unwrap().f_start_target.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn reflecting_other_regimes() {
        let g = builtin_family("reflecting_bd", &p(0.5)).unwrap();
        assert_eq!(g.declared_class_of_target, Classification::NullRecurrent);
        let g = builtin_family("reflecting_bd", &p(0.8)).unwrap();
        assert_eq!(g.declared_class_of_target, Classification::Transient);
        assert!((g.analytic.unwrap().f_start_target.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn bad_names_and_params() {
        assert!(matches!(builtin_family("ring", &p(0.5)), Err(FamilyError::UnknownFamily(_))));
        assert!(matches!(builtin_family("srw_z", &p(1.0)), Err(FamilyError::ParamOutOfRange { .. })));
        assert!(matches!(builtin_family("srw_z", &p(f64::NAN)), Err(FamilyError::ParamOutOfRange { .. })));
        let extra = BTreeMap::from([("q".to_owned(), 0.5)]);
        assert!(matches!(builtin_family("srw_z", &extra), Err(FamilyError::UnknownParam { .. })));
    }

    #[test]
    fn step_rules() {
        let g = builtin_family("reflecting_bd", &p(0.25)).unwrap();
        assert_eq!(g.step(0, 0.1), 1);
        assert_eq!(g.step(0, 0.9), 0);
        assert_eq!(g.step(3, 0.9), 2);
        let g = builtin_family("srw_z", &p(0.25)).unwrap();
        assert_eq!(g.step(0, 0.9), -1);
        assert_eq!(g.step(-1, 0.0), 0);
    }
}
