use rand::Rng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::special::hurwitz_zeta;
use super::{DistError, Distribution, Support};

/// Discrete power law `P(x) = x^-gamma / zeta(gamma, x_min)` on `x >= x_min`.
///
/// `gamma` is stored as a magnitude; the slope on a log-log plot is `-gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
    pub gamma: f64,
    pub x_min: u64,
}

impl PowerLawParams {
    pub fn new(gamma: f64, x_min: u64) -> Result<Self, DistError> {
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(DistError::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "must be greater than 1",
            });
        }
        if x_min == 0 {
            return Err(DistError::InvalidParameter {
                name: "x_min",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(Self { gamma, x_min })
    }

    /// Normalizing constant `zeta(gamma, x_min)`.
    pub fn normalizer(&self) -> f64 {
        hurwitz_zeta(self.gamma, self.x_min as f64)
    }

    /// `P(X >= x)` for integer `x >= x_min`.
    fn tail_from(&self, x: f64, norm: f64) -> f64 {
        hurwitz_zeta(self.gamma, x) / norm
    }

    /// Continuous approximation to the inverse survival function, used as a
    /// starting point for the exact discrete search.
    fn approx_inverse_survival(&self, v: f64) -> f64 {
        (self.x_min as f64 - 0.5) * v.powf(-1.0 / (self.gamma - 1.0)) + 0.5
    }

    /// Smallest integer `x >= x_min` with `P(X > x) <= v`, by bracketing and bisection.
    fn search_inverse_survival(&self, v: f64, start: f64, norm: f64) -> f64 {
        let min = self.x_min as f64;
        let surv = |x: f64| self.tail_from(x + 1.0, norm);
        if start >= 9.0e15 {
            return start.floor();
        }
        let mut hi = start.floor().max(min);
        let mut lo;
        if surv(hi) <= v {
            // walk down
            let mut step = 1.0f64.max((hi - min) * 0.05).floor();
            loop {
                let cand = (hi - step).max(min);
                if cand == hi {
                    return hi;
                }
                if surv(cand) <= v {
                    hi = cand;
                    step *= 2.0;
                } else {
                    lo = cand;
                    break;
                }
            }
        } else {
            lo = hi;
            let mut step = 1.0f64.max(hi * 0.05).floor();
            loop {
                let cand = lo + step;
                if cand >= 9.0e15 {
                    return cand;
                }
                if surv(cand) <= v {
                    hi = cand;
                    break;
                }
                lo = cand;
                step *= 2.0;
            }
        }
        // invariant: surv(lo) > v >= surv(hi)
        while hi - lo > 1.0 {
            let mid = (0.5 * (lo + hi)).floor();
            if surv(mid) <= v {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

impl Distribution for PowerLawParams {
    fn support(&self) -> Support {
        Support::Integers { min: self.x_min }
    }

    fn density(&self, x: f64) -> f64 {
        if !self.support().contains(x) {
            return 0.0;
        }
        x.powf(-self.gamma) / self.normalizer()
    }

    fn cumulative(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    fn survival(&self, x: f64) -> f64 {
        let x = x.floor();
        if x < self.x_min as f64 {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        self.tail_from(x + 1.0, self.normalizer())
    }

    fn inverse_cdf(&self, p: f64) -> f64 {
        let v = 1.0 - p;
        let norm = self.normalizer();
        self.search_inverse_survival(v, self.approx_inverse_survival(v), norm)
    }

    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        let v: f64 = 1.0 - rng.random::<f64>();
        self.search_inverse_survival(v, self.approx_inverse_survival(v), self.normalizer())
    }

    fn sample_with(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let sampler = PowerLawSampler::new(*self);
        (0..n).map(|_| sampler.draw(rng)).collect()
    }
}

const TABLE_LEN: usize = 1 << 16;

/// Inverse-cdf sampler: a cumulative table over the first `2^16` support
/// points, exact bracketing search beyond it.
#[derive(Debug, Clone)]
pub struct PowerLawSampler {
    params: PowerLawParams,
    norm: f64,
    /// `table[i] = P(X > x_min + i)`
    table: Vec<f64>,
}

impl PowerLawSampler {
    pub fn new(params: PowerLawParams) -> Self {
        let norm = params.normalizer();
        let mut table = Vec::with_capacity(TABLE_LEN);
        let x0 = params.x_min as f64;
        let tail_end = hurwitz_zeta(params.gamma, x0 + TABLE_LEN as f64);
        // accumulate from the far end so each entry is a sum of small terms
        let mut acc = tail_end;
        let mut rev = vec![0.0; TABLE_LEN];
        for i in (0..TABLE_LEN).rev() {
            rev[i] = acc / norm;
            acc += (x0 + i as f64).powf(-params.gamma);
        }
        table.extend_from_slice(&rev);
        Self { params, norm, table }
    }

    pub fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        // v uniform on (0, 1]
        let v: f64 = 1.0 - rng.random::<f64>();
        let last = *self.table.last().expect("table is nonempty");
        if v >= last {
            // first index with tail <= v; table is decreasing
            let i = self.table.partition_point(|&s| s > v);
            self.params.x_min as f64 + i as f64
        } else {
            let start = self
                .params
                .approx_inverse_survival(v)
                .max(self.params.x_min as f64 + TABLE_LEN as f64);
            self.params.search_inverse_survival(v, start, self.norm)
        }
    }
}
