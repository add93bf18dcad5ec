use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances. Values marked "per row" or "per depth" are scaled
/// by the size of the object at the point of use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub row: f64,
    pub pivot: f64,
    pub fill: f64,
    /// Reconstruction tolerance per materialized row.
    pub recon: f64,
    pub poly: f64,
    pub abs: f64,
    /// Eigenvalue separation, relative to the dominant eigenvalue.
    pub sep: f64,
    /// Biorthogonality, per row.
    pub bio: f64,
    /// Mass-sum identity, per row.
    pub meas: f64,
    pub spec: f64,
    pub km: f64,
    /// Stationarity and detailed balance, per row.
    pub stat: f64,
    pub theta_mass: f64,
    /// Minimum growth factor of the recurrence integral for a recurrent verdict.
    pub recurrent_growth: f64,
    /// Maximum relative change of the recurrence integral for a transient verdict.
    pub transient_change: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            row: 1e-12,
            pivot: 1e-13,
            fill: 1e-12,
            recon: 1e-10,
            poly: 1e-10,
            abs: 1e-14,
            sep: 1e-10,
            bio: 1e-9,
            meas: 1e-10,
            spec: 1e-11,
            km: 1e-9,
            stat: 1e-10,
            theta_mass: 1e-3,
            recurrent_growth: 2.0,
            transient_change: 0.1,
        }
    }
}

/// Names, defaults and meaning, in the order shown by `--help`.
pub const DESCRIPTIONS: &[(&str, &str)] = &[
    ("row", "row-sum tolerance for stochastic rows"),
    ("pivot", "smallest admissible elimination pivot"),
    ("fill", "largest admissible residue in an eliminated position"),
    ("recon", "factor reconstruction error, per row"),
    ("poly", "relative tolerance of polynomial identities"),
    ("abs", "absolute floor of polynomial identities"),
    ("sep", "minimum eigenvalue gap relative to lambda0"),
    ("bio", "biorthogonality residual, per row"),
    ("meas", "mass-sum residual, per row"),
    ("spec", "spectral reconstruction residual, per row"),
    ("km", "spectral k-step probability versus matrix power"),
    ("stat", "stationarity and detailed balance residual, per row"),
    ("theta_mass", "mass at 1 above which a stationary estimate is produced"),
    ("recurrent_growth", "integral growth across N for a recurrent verdict"),
    ("transient_change", "relative integral change across N for a transient verdict"),
];

impl Tolerances {
    pub fn get(&self, key: &str) -> Option<f64> {
        let v = match key {
            "row" => self.row,
            "pivot" => self.pivot,
            "fill" => self.fill,
            "recon" => self.recon,
            "poly" => self.poly,
            "abs" => self.abs,
            "sep" => self.sep,
            "bio" => self.bio,
            "meas" => self.meas,
            "spec" => self.spec,
            "km" => self.km,
            "stat" => self.stat,
            "theta_mass" => self.theta_mass,
            "recurrent_growth" => self.recurrent_growth,
            "transient_change" => self.transient_change,
            _ => return None,
        };
        Some(v)
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance {key} must be positive, got {value}")));
        }
        let slot = match key {
            "row" => &mut self.row,
            "pivot" => &mut self.pivot,
            "fill" => &mut self.fill,
            "recon" => &mut self.recon,
            "poly" => &mut self.poly,
            "abs" => &mut self.abs,
            "sep" => &mut self.sep,
            "bio" => &mut self.bio,
            "meas" => &mut self.meas,
            "spec" => &mut self.spec,
            "km" => &mut self.km,
            "stat" => &mut self.stat,
            "theta_mass" => &mut self.theta_mass,
            "recurrent_growth" => &mut self.recurrent_growth,
            "transient_change" => &mut self.transient_change,
            _ => return Err(Error::InvalidInput(format!("unknown tolerance key {key:?}"))),
        };
        *slot = value;
        Ok(())
    }

    /// Parses a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got {assignment:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("tolerance {key} has non-numeric value {value:?}")))?;
        self.set(key.trim(), value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_described_key_round_trips() {
        let mut t = Tolerances::default();
        for (key, _) in DESCRIPTIONS {
            assert!(t.get(key).is_some(), "{key}");
            t.apply(&format!("{key}=0.5")).unwrap();
            assert_eq!(t.get(key), Some(0.5));
        }
    }

    #[test]
    fn rejects_bad_overrides() {
        let mut t = Tolerances::default();
        assert!(t.apply("row").is_err());
        assert!(t.apply("row=-1").is_err());
        assert!(t.apply("nope=1").is_err());
    }
}
