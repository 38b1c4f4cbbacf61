//! Analytic model family: log-normal, double log-normal, discrete power law
//! and discrete truncated log-normal.
//!
//! Every model implements [`Distribution`]. The required methods are total
//! functions used on hot paths (`density` is zero and `cumulative` clamps
//! outside the support); the provided `pdf`/`cdf`/`quantile` wrappers check
//! their arguments and return [`DistError`].

mod lognormal;
mod powerlaw;
pub mod special;
mod truncated;

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lognormal::{DoubleLogNormalParams, LogNormalParams};
pub use powerlaw::{PowerLawParams, PowerLawSampler};
pub use special::erf;
pub use truncated::TruncatedLogNormalParams;

use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{0} is outside the support of the model")]
    OutsideSupport(f64),
    #[error("probability {0} is not in (0, 1)")]
    InvalidProbability(f64),
    #[error("malformed parameter record: {0}")]
    Malformed(String),
}

/// Where a model puts its mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Real numbers `t > 0`.
    Positive,
    /// Integers `x >= min`.
    Integers { min: u64 },
}

impl Support {
    pub fn contains(&self, t: f64) -> bool {
        match *self {
            Support::Positive => t > 0.0 && t.is_finite(),
            Support::Integers { min } => t.fract() == 0.0 && t >= min as f64 && t.is_finite(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Support::Integers { .. })
    }
}

pub trait Distribution {
    fn support(&self) -> Support;

    /// Density (continuous) or mass (discrete) at `t`; zero outside the support.
    fn density(&self, t: f64) -> f64;

    /// `P(X <= t)` for any real `t`.
    fn cumulative(&self, t: f64) -> f64;

    /// `P(X > t)`. Implementations override this where `1 - cumulative`
    /// would cancel in the right tail.
    fn survival(&self, t: f64) -> f64 {
        1.0 - self.cumulative(t)
    }

    /// Smallest `t` in the support with `cumulative(t) >= p`, `0 < p < 1`.
    fn inverse_cdf(&self, p: f64) -> f64;

    fn draw(&self, rng: &mut dyn RngCore) -> f64;

    fn pdf(&self, t: f64) -> Result<f64, DistError> {
        if !self.support().contains(t) {
            return Err(DistError::OutsideSupport(t));
        }
        Ok(self.density(t))
    }

    fn cdf(&self, t: f64) -> Result<f64, DistError> {
        if !self.support().contains(t) {
            return Err(DistError::OutsideSupport(t));
        }
        Ok(self.cumulative(t))
    }

    fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::InvalidProbability(p));
        }
        Ok(self.inverse_cdf(p))
    }

    /// `n` independent draws, deterministic for a fixed seed.
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed, "sample", 0);
        self.sample_with(n, &mut rng)
    }

    fn sample_with(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Any of the four model families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    LogNormal(LogNormalParams),
    DoubleLogNormal(DoubleLogNormalParams),
    PowerLaw(PowerLawParams),
    TruncatedLogNormal(TruncatedLogNormalParams),
}

impl ModelParams {
    pub fn name(&self) -> &'static str {
        match self {
            ModelParams::LogNormal(_) => "ln",
            ModelParams::DoubleLogNormal(_) => "dln",
            ModelParams::PowerLaw(_) => "powerlaw",
            ModelParams::TruncatedLogNormal(_) => "truncated_ln",
        }
    }

    fn inner(&self) -> &dyn DistributionObject {
        match self {
            ModelParams::LogNormal(p) => p,
            ModelParams::DoubleLogNormal(p) => p,
            ModelParams::PowerLaw(p) => p,
            ModelParams::TruncatedLogNormal(p) => p,
        }
    }

    /// Flat `key=value` pairs: `name`, then whichever of `mu`, `sigma`, `c`,
    /// `mu2`, `sigma2`, `gamma`, `x_min` apply.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        let mut kv = vec![("name", self.name().to_string())];
        match *self {
            ModelParams::LogNormal(p) => {
                kv.push(("mu", p.mu.to_string()));
                kv.push(("sigma", p.sigma.to_string()));
            }
            ModelParams::DoubleLogNormal(p) => {
                kv.push(("mu", p.mu1.to_string()));
                kv.push(("sigma", p.sigma1.to_string()));
                kv.push(("c", p.c.to_string()));
                kv.push(("mu2", p.mu2.to_string()));
                kv.push(("sigma2", p.sigma2.to_string()));
            }
            ModelParams::PowerLaw(p) => {
                kv.push(("gamma", p.gamma.to_string()));
                kv.push(("x_min", p.x_min.to_string()));
            }
            ModelParams::TruncatedLogNormal(p) => {
                kv.push(("mu", p.mu.to_string()));
                kv.push(("sigma", p.sigma.to_string()));
                kv.push(("x_min", p.x_min.to_string()));
            }
        }
        kv
    }

    /// Parse the text produced by the `Display` impl.
    pub fn parse_key_values(text: &str) -> Result<Self, DistError> {
        let mut map = BTreeMap::new();
        for tok in text.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| DistError::Malformed(format!("token `{tok}` has no `=`")))?;
            map.insert(k, v);
        }
        let real = |k: &str| -> Result<f64, DistError> {
            map.get(k)
                .ok_or_else(|| DistError::Malformed(format!("missing key `{k}`")))?
                .parse::<f64>()
                .map_err(|e| DistError::Malformed(format!("key `{k}`: {e}")))
        };
        let int = |k: &str| -> Result<u64, DistError> {
            map.get(k)
                .ok_or_else(|| DistError::Malformed(format!("missing key `{k}`")))?
                .parse::<u64>()
                .map_err(|e| DistError::Malformed(format!("key `{k}`: {e}")))
        };
        let name = *map
            .get("name")
            .ok_or_else(|| DistError::Malformed("missing key `name`".into()))?;
        match name {
            "ln" => Ok(ModelParams::LogNormal(LogNormalParams::new(real("mu")?, real("sigma")?)?)),
            "dln" => Ok(ModelParams::DoubleLogNormal(DoubleLogNormalParams::new(
                real("mu")?,
                real("sigma")?,
                real("c")?,
                real("mu2")?,
                real("sigma2")?,
            )?)),
            "powerlaw" => Ok(ModelParams::PowerLaw(PowerLawParams::new(real("gamma")?, int("x_min")?)?)),
            "truncated_ln" => Ok(ModelParams::TruncatedLogNormal(TruncatedLogNormalParams::new(
                real("mu")?,
                real("sigma")?,
                int("x_min")?,
            )?)),
            other => Err(DistError::Malformed(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kv = self.to_key_values();
        for (i, (k, v)) in kv.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

// Object-safe view used by the `ModelParams` dispatch.
trait DistributionObject {
    fn support(&self) -> Support;
    fn density(&self, t: f64) -> f64;
    fn cumulative(&self, t: f64) -> f64;
    fn survival(&self, t: f64) -> f64;
    fn inverse_cdf(&self, p: f64) -> f64;
    fn draw(&self, rng: &mut dyn RngCore) -> f64;
    fn sample_with(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64>;
}

impl<D: Distribution> DistributionObject for D {
    fn support(&self) -> Support {
        Distribution::support(self)
    }
    fn density(&self, t: f64) -> f64 {
        Distribution::density(self, t)
    }
    fn cumulative(&self, t: f64) -> f64 {
        Distribution::cumulative(self, t)
    }
    fn survival(&self, t: f64) -> f64 {
        Distribution::survival(self, t)
    }
    fn inverse_cdf(&self, p: f64) -> f64 {
        Distribution::inverse_cdf(self, p)
    }
    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        Distribution::draw(self, rng)
    }
    fn sample_with(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        Distribution::sample_with(self, n, rng)
    }
}

impl Distribution for ModelParams {
    fn support(&self) -> Support {
        self.inner().support()
    }
    fn density(&self, t: f64) -> f64 {
        self.inner().density(t)
    }
    fn cumulative(&self, t: f64) -> f64 {
        self.inner().cumulative(t)
    }
    fn survival(&self, t: f64) -> f64 {
        self.inner().survival(t)
    }
    fn inverse_cdf(&self, p: f64) -> f64 {
        self.inner().inverse_cdf(p)
    }
    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner().draw(rng)
    }
    fn sample_with(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner().sample_with(n, rng)
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<(), DistError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(DistError::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<(), DistError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(DistError::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn key_value_text_names_every_field() {
        let m = ModelParams::DoubleLogNormal(DoubleLogNormalParams::new(4.0, 1.0, 0.7, 7.0, 0.5).unwrap());
        assert_eq!(m.to_string(), "name=dln mu=4 sigma=1 c=0.7 mu2=7 sigma2=0.5");
        let p = ModelParams::PowerLaw(PowerLawParams::new(1.5, 1).unwrap());
        assert_eq!(p.to_string(), "name=powerlaw gamma=1.5 x_min=1");
    }

    #[test]
    fn malformed_records_are_rejected() {
        assert!(ModelParams::parse_key_values("name=ln mu=1").is_err());
        assert!(ModelParams::parse_key_values("name=weird").is_err());
        assert!(ModelParams::parse_key_values("name=ln mu=1 sigma=-2").is_err());
        assert!(ModelParams::parse_key_values("mu=1 sigma").is_err());
    }

    fn any_model() -> impl Strategy<Value = ModelParams> {
        prop_oneof![
            (-5.0..10.0f64, 0.01..4.0f64)
                .prop_map(|(m, s)| ModelParams::LogNormal(LogNormalParams::new(m, s).unwrap())),
            (-5.0..10.0f64, 0.01..4.0f64, 0.0..=1.0f64, -5.0..10.0f64, 0.01..4.0f64).prop_map(
                |(m1, s1, c, m2, s2)| ModelParams::DoubleLogNormal(
                    DoubleLogNormalParams::new(m1, s1, c, m2, s2).unwrap()
                )
            ),
            (1.01..5.0f64, 1u64..50)
                .prop_map(|(g, x)| ModelParams::PowerLaw(PowerLawParams::new(g, x).unwrap())),
            (-3.0..6.0f64, 0.05..4.0f64, 1u64..20).prop_map(|(m, s, x)| {
                ModelParams::TruncatedLogNormal(TruncatedLogNormalParams::new(m, s, x).unwrap())
            }),
        ]
    }

    proptest! {
        #[test]
        fn key_value_text_round_trips_exactly(m in any_model()) {
            let back = ModelParams::parse_key_values(&m.to_string()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
