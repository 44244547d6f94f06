//! Average access latency of a pointer chase over `n` blocks that share one
//! cache set of associativity `N`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geometry::CacheGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub l_llc: f64,
    pub l_memory: f64,
    /// Per-access Gaussian jitter; 0 gives a deterministic model.
    #[serde(default)]
    pub noise_stddev: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            l_llc: 40.0,
            l_memory: 200.0,
            noise_stddev: 0.0,
            rng_seed: 0,
        }
    }
}

impl LatencyModel {
    pub fn new(
        l_llc: f64,
        l_memory: f64,
        noise_stddev: f64,
        rng_seed: u64,
    ) -> Result<Self, ModelError> {
        let m = Self {
            l_llc,
            l_memory,
            noise_stddev,
            rng_seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn deterministic(l_llc: f64, l_memory: f64) -> Result<Self, ModelError> {
        Self::new(l_llc, l_memory, 0.0, 0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.l_llc > 0.0 && self.l_memory > self.l_llc && self.l_memory.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "need l_memory > l_llc > 0, got l_llc={} l_memory={}",
                self.l_llc, self.l_memory
            )));
        }
        if !(self.noise_stddev >= 0.0 && self.noise_stddev.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "noise stddev must be non-negative, got {}",
                self.noise_stddev
            )));
        }
        Ok(())
    }

    pub fn with_noise(mut self, noise_stddev: f64, rng_seed: u64) -> Self {
        self.noise_stddev = noise_stddev;
        self.rng_seed = rng_seed;
        self
    }

    /// Noise-free average latency for `n` blocks cycled through one set with
    /// `ways` ways. The memory term grows with the real ratio `n / ways`.
    #[inline]
    pub fn expected(&self, n: u64, ways: usize) -> f64 {
        let ways = ways as f64;
        let n = n as f64;
        if n < ways {
            self.l_llc
        } else {
            self.l_memory * (n / ways - 1.0) + self.l_llc
        }
    }
}

/// Average latency for `n` blocks cycled through one set of `geom`.
///
/// With noise enabled the jitter is drawn from a generator seeded by
/// `(rng_seed, n)`, so repeated calls with the same arguments agree.
pub fn latency(n: u64, geom: &CacheGeometry, model: &LatencyModel) -> Result<f64, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidArgument(
            "latency needs at least one block".into(),
        ));
    }
    model.validate()?;
    let base = model.expected(n, geom.associativity());
    if model.noise_stddev == 0.0 {
        return Ok(base);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let normal = Normal::new(0.0, model.noise_stddev).expect("validated stddev");
    Ok(base + normal.sample(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(ways: usize) -> CacheGeometry {
        CacheGeometry::new(64, ways, 2048, 6, 36, 64 << 30).unwrap()
    }

    #[test]
    fn below_and_at_associativity() {
        let m = LatencyModel::deterministic(40.0, 200.0).unwrap();
        assert_eq!(latency(10, &geom(20), &m).unwrap(), 40.0);
        assert_eq!(latency(20, &geom(20), &m).unwrap(), 40.0);
    }

    #[test]
    fn past_the_knee() {
        let m = LatencyModel::deterministic(40.0, 200.0).unwrap();
        assert_eq!(latency(40, &geom(20), &m).unwrap(), 240.0);
        assert!((latency(21, &geom(20), &m).unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn zero_blocks_is_an_error() {
        let m = LatencyModel::default();
        assert!(latency(0, &geom(20), &m).is_err());
    }

    #[test]
    fn invalid_models() {
        assert!(LatencyModel::deterministic(0.0, 200.0).is_err());
        assert!(LatencyModel::deterministic(200.0, 40.0).is_err());
        assert!(LatencyModel::new(40.0, 200.0, -1.0, 0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let m = LatencyModel::new(40.0, 200.0, 5.0, 17).unwrap();
        let a = latency(30, &geom(20), &m).unwrap();
        let b = latency(30, &geom(20), &m).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a,
            latency(
                30,
                &geom(20),
                &LatencyModel::deterministic(40.0, 200.0).unwrap()
            )
            .unwrap()
        );
    }

    #[test]
    fn monotone_without_noise() {
        let m = LatencyModel::deterministic(40.0, 200.0).unwrap();
        for ways in [4, 8, 20] {
            let g = geom(ways);
            for n in 1..300 {
                assert!(latency(n + 1, &g, &m).unwrap() >= latency(n, &g, &m).unwrap());
            }
        }
    }
}
