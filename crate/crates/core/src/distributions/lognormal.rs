use std::f64::consts::{PI, SQRT_2};

use rand::RngCore;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::special::{erfc, probit};
use super::{check_finite, check_positive, DistError, Distribution, Support};

/// Log-normal distribution in log-minutes: `ln t ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, DistError> {
        check_finite("mu", mu)?;
        check_positive("sigma", sigma)?;
        Ok(Self { mu, sigma })
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    /// Geometric standard deviation.
    pub fn sigma_g(&self) -> f64 {
        self.sigma.exp()
    }

    fn z(&self, t: f64) -> f64 {
        (t.ln() - self.mu) / (self.sigma * SQRT_2)
    }

    pub fn ln_density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let y = t.ln();
        let u = (y - self.mu) / self.sigma;
        -0.5 * u * u - y - self.sigma.ln() - 0.5 * (2.0 * PI).ln()
    }

    /// `P(a < X <= b)` without cancellation in either tail.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if a > 0.0 && a.ln() >= self.mu {
            (self.survival(a) - self.survival(b)).max(0.0)
        } else {
            (self.cumulative(b) - self.cumulative(a)).max(0.0)
        }
    }
}

impl Distribution for LogNormalParams {
    fn support(&self) -> Support {
        Support::Positive
    }

    fn density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let u = (t.ln() - self.mu) / self.sigma;
        (-0.5 * u * u).exp() / (t * self.sigma * (2.0 * PI).sqrt())
    }

    fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t == f64::INFINITY {
            return 1.0;
        }
        0.5 * erfc(-self.z(t))
    }

    fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if t == f64::INFINITY {
            return 0.0;
        }
        0.5 * erfc(self.z(t))
    }

    fn inverse_cdf(&self, p: f64) -> f64 {
        (self.mu + self.sigma * probit(p)).exp()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu + self.sigma * z).exp()
    }
}

/// Convex mixture `c LN(mu1, sigma1) + (1 - c) LN(mu2, sigma2)`.
///
/// Constructed values are canonical: components are swapped so that `c >= 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleLogNormalParams {
    pub mu1: f64,
    pub sigma1: f64,
    pub c: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

impl DoubleLogNormalParams {
    pub fn new(mu1: f64, sigma1: f64, c: f64, mu2: f64, sigma2: f64) -> Result<Self, DistError> {
        check_finite("mu1", mu1)?;
        check_positive("sigma1", sigma1)?;
        check_finite("mu2", mu2)?;
        check_positive("sigma2", sigma2)?;
        if !(0.0..=1.0).contains(&c) {
            return Err(DistError::InvalidParameter {
                name: "c",
                value: c,
                reason: "must lie in [0, 1]",
            });
        }
        let p = Self {
            mu1,
            sigma1,
            c,
            mu2,
            sigma2,
        };
        Ok(p.canonical())
    }

    /// The DLN with both components equal to `ln` (a single LN in disguise).
    pub fn nested(ln: LogNormalParams) -> Self {
        Self {
            mu1: ln.mu,
            sigma1: ln.sigma,
            c: 1.0,
            mu2: ln.mu,
            sigma2: ln.sigma,
        }
    }

    fn canonical(self) -> Self {
        if self.c >= 0.5 {
            self
        } else {
            Self {
                mu1: self.mu2,
                sigma1: self.sigma2,
                c: 1.0 - self.c,
                mu2: self.mu1,
                sigma2: self.sigma1,
            }
        }
    }

    pub fn first(&self) -> LogNormalParams {
        LogNormalParams {
            mu: self.mu1,
            sigma: self.sigma1,
        }
    }

    pub fn second(&self) -> LogNormalParams {
        LogNormalParams {
            mu: self.mu2,
            sigma: self.sigma2,
        }
    }

    pub fn ln_density(&self, t: f64) -> f64 {
        self.density(t).ln()
    }
}

impl Distribution for DoubleLogNormalParams {
    fn support(&self) -> Support {
        Support::Positive
    }

    fn density(&self, t: f64) -> f64 {
        self.c * self.first().density(t) + (1.0 - self.c) * self.second().density(t)
    }

    fn cumulative(&self, t: f64) -> f64 {
        self.c * self.first().cumulative(t) + (1.0 - self.c) * self.second().cumulative(t)
    }

    fn survival(&self, t: f64) -> f64 {
        self.c * self.first().survival(t) + (1.0 - self.c) * self.second().survival(t)
    }

    /// Bisection in `ln t` between the component quantiles, which bracket
    /// the mixture quantile, finished by Newton steps.
    fn inverse_cdf(&self, p: f64) -> f64 {
        let q1 = self.first().inverse_cdf(p).ln();
        let q2 = self.second().inverse_cdf(p).ln();
        let (mut lo, mut hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        if hi - lo < 1e-15 {
            return lo.exp();
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cumulative(mid.exp()) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..3 {
            let t = y.exp();
            let slope = self.density(t) * t;
            if slope <= 0.0 {
                break;
            }
            let next = y - (self.cumulative(t) - p) / slope;
            if !(next >= lo && next <= hi) {
                break;
            }
            y = next;
        }
        y.exp()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        if u < self.c {
            self.first().draw(rng)
        } else {
            self.second().draw(rng)
        }
    }
}
