use rand::Rng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::lognormal::LogNormalParams;
use super::{check_finite, check_positive, DistError, Distribution, Support};

/// Log-normal discretized by continuity correction and truncated to `x >= x_min`:
/// `P(x) = [F(x + 1/2) - F(x - 1/2)] / [1 - F(x_min - 1/2)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedLogNormalParams {
    pub mu: f64,
    pub sigma: f64,
    pub x_min: u64,
}

impl TruncatedLogNormalParams {
    pub fn new(mu: f64, sigma: f64, x_min: u64) -> Result<Self, DistError> {
        check_finite("mu", mu)?;
        check_positive("sigma", sigma)?;
        if x_min == 0 {
            return Err(DistError::InvalidParameter {
                name: "x_min",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(Self { mu, sigma, x_min })
    }

    pub fn continuous(&self) -> LogNormalParams {
        LogNormalParams {
            mu: self.mu,
            sigma: self.sigma,
        }
    }

    /// Mass of the underlying log-normal on the support, `1 - F(x_min - 1/2)`.
    pub fn support_mass(&self) -> f64 {
        self.continuous().survival(self.x_min as f64 - 0.5)
    }

    /// Unnormalized mass of integer `x`.
    pub fn raw_mass(&self, x: f64) -> f64 {
        self.continuous().interval_mass(x - 0.5, x + 0.5)
    }
}

impl Distribution for TruncatedLogNormalParams {
    fn support(&self) -> Support {
        Support::Integers { min: self.x_min }
    }

    fn density(&self, x: f64) -> f64 {
        if !self.support().contains(x) {
            return 0.0;
        }
        self.raw_mass(x) / self.support_mass()
    }

    fn cumulative(&self, x: f64) -> f64 {
        let x = x.floor();
        if x < self.x_min as f64 {
            return 0.0;
        }
        let lo = self.x_min as f64 - 0.5;
        self.continuous().interval_mass(lo, x + 0.5) / self.support_mass()
    }

    fn survival(&self, x: f64) -> f64 {
        let x = x.floor();
        if x < self.x_min as f64 {
            return 1.0;
        }
        self.continuous().survival(x + 0.5) / self.support_mass()
    }

    fn inverse_cdf(&self, p: f64) -> f64 {
        let t = self.continuous_draw(1.0 - p);
        let x = (t + 0.5).floor().max(self.x_min as f64);
        // guard against rounding at bin edges
        if x > self.x_min as f64 && self.cumulative(x - 1.0) >= p {
            x - 1.0
        } else if self.cumulative(x) < p {
            x + 1.0
        } else {
            x
        }
    }

    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        // v uniform on (0, 1]
        let v: f64 = 1.0 - rng.random::<f64>();
        let t = self.continuous_draw(v);
        (t + 0.5).floor().max(self.x_min as f64)
    }
}

impl TruncatedLogNormalParams {
    /// Continuous log-normal value conditioned on `t >= x_min - 1/2`, given
    /// its survival probability `v` within the conditioned range.
    fn continuous_draw(&self, v: f64) -> f64 {
        let s = v * self.support_mass();
        // survival s  <=>  z = -probit(s)
        let z = -super::special::probit(s);
        (self.mu + self.sigma * z).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_sums_to_one_over_support() {
        for &(mu, sigma, x_min) in &[(1.0, 2.0, 1u64), (0.5, 0.7, 1), (3.0, 1.0, 5)] {
            let m = TruncatedLogNormalParams::new(mu, sigma, x_min).unwrap();
            let mut acc = 0.0;
            let mut x = x_min;
            while x < 2_000_000 {
                acc += m.density(x as f64);
                x += 1;
            }
            let rest = m.survival(1_999_999.0);
            assert!((acc + rest - 1.0).abs() < 1e-9, "{acc} + {rest}");
        }
    }

    #[test]
    fn cdf_equals_cumulative_pmf() {
        let m = TruncatedLogNormalParams::new(1.0, 2.0, 2).unwrap();
        let mut acc = 0.0;
        for x in 2..500u64 {
            acc += m.pdf(x as f64).unwrap();
            assert!((m.cdf(x as f64).unwrap() - acc).abs() < 1e-12);
        }
        assert_eq!(m.cumulative(1.0), 0.0);
        assert!(m.pdf(1.0).is_err());
    }

    #[test]
    fn draws_follow_the_pmf() {
        let m = TruncatedLogNormalParams::new(1.0, 2.0, 1).unwrap();
        let xs = m.sample(50_000, 5);
        for target in 1..=4u64 {
            let freq = xs.iter().filter(|&&x| x == target as f64).count() as f64 / xs.len() as f64;
            let p = m.density(target as f64);
            let se = (p * (1.0 - p) / xs.len() as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "x={target} freq={freq} p={p}");
        }
    }

    #[test]
    fn quantile_is_smallest_integer_reaching_p() {
        let m = TruncatedLogNormalParams::new(1.0, 2.0, 1).unwrap();
        for &p in &[0.01, 0.2, 0.5, 0.9, 0.999] {
            let x = m.quantile(p).unwrap();
            assert!(m.cumulative(x) >= p - 1e-12);
            assert!(x == 1.0 || m.cumulative(x - 1.0) < p);
        }
    }
}
