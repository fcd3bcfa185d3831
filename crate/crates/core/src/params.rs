//! Flat real-valued parameter maps checked against declared defaults.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Params = BTreeMap<String, f64>;

/// Parameters merged with their owner's defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved(BTreeMap<&'static str, f64>);

impl Resolved {
    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(f64::NAN)
    }

    /// Value, or `fallback` when the default is grid-dependent (`NaN`).
    pub fn or(&self, key: &str, fallback: f64) -> f64 {
        let v = self.get(key);
        if v.is_nan() {
            fallback
        } else {
            v
        }
    }

    /// Non-negative integer parameter.
    pub fn count(&self, key: &str) -> Result<usize> {
        let v = self.get(key);
        if !(v >= 0.0) || v.fract() != 0.0 {
            return Err(Error::config(format!("parameter '{key}' must be a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

/// Merge `given` into `defaults`; keys not declared by `owner` are rejected.
pub fn resolve(owner: &str, defaults: &[(&'static str, f64)], given: &Params) -> Result<Resolved> {
    let mut out: BTreeMap<&'static str, f64> = defaults.iter().cloned().collect();
    for (k, v) in given {
        let key = defaults
            .iter()
            .map(|(d, _)| *d)
            .find(|d| d == k)
            .ok_or_else(|| Error::config(format!("'{owner}' has no parameter '{k}'")))?;
        if !v.is_finite() {
            return Err(Error::config(format!("parameter '{k}' of '{owner}' must be finite")));
        }
        out.insert(key, *v);
    }
    Ok(Resolved(out))
}
