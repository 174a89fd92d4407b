use serde::{Deserialize, Serialize};

use crate::source_model::CachePlan;
use crate::{Error, Result};

/// Cached, coded-multicast and unicast rates per receiver and file.
///
/// `unicast[i][j]` is the rate unicast to receiver `i` when it requests
/// file `j` (unicast that depends only on the file identity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticastRatePlan {
    pub cached: Vec<Vec<f64>>,
    pub multicast: Vec<Vec<f64>>,
    pub unicast: Vec<Vec<f64>>,
}

impl MulticastRatePlan {
    pub fn new(
        cached: Vec<Vec<f64>>,
        multicast: Vec<Vec<f64>>,
        unicast: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = cached.len();
        let m = cached.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::dimension(
                "plan must cover at least one receiver and file",
            ));
        }
        for (name, mat) in [
            ("cached", &cached),
            ("multicast", &multicast),
            ("unicast", &unicast),
        ] {
            if mat.len() != n || mat.iter().any(|r| r.len() != m) {
                return Err(Error::dimension(format!("{name} matrix is not {n} x {m}")));
            }
            if mat.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::domain(format!(
                    "{name} matrix has a negative or non-finite entry"
                )));
            }
        }
        Ok(Self {
            cached,
            multicast,
            unicast,
        })
    }

    /// Plan without unicast.
    pub fn coded(cached: Vec<Vec<f64>>, multicast: Vec<Vec<f64>>) -> Result<Self> {
        let zeros = vec![vec![0.0; cached.first().map_or(0, Vec::len)]; cached.len()];
        Self::new(cached, multicast, zeros)
    }

    /// Same per-file rates at every receiver.
    pub fn symmetric(n: usize, cached: &[f64], multicast: &[f64], unicast: &[f64]) -> Result<Self> {
        Self::new(
            vec![cached.to_vec(); n],
            vec![multicast.to_vec(); n],
            vec![unicast.to_vec(); n],
        )
    }

    pub fn n(&self) -> usize {
        self.cached.len()
    }

    pub fn m(&self) -> usize {
        self.cached[0].len()
    }

    /// `M_{i,j} + R̃_{i,j}`, the storing range in bits per sample.
    pub fn storing_rate(&self, i: usize, j: usize) -> f64 {
        self.cached[i][j] + self.multicast[i][j]
    }

    /// Probability that a packet inside the storing range is cached,
    /// `M / (M + R̃)`; one when both are zero.
    pub fn p_cached(&self, i: usize, j: usize) -> f64 {
        cached_fraction(self.cached[i][j], self.multicast[i][j])
    }

    pub fn is_symmetric(&self) -> bool {
        let same = |mat: &Vec<Vec<f64>>| mat.iter().all(|r| r == &mat[0]);
        same(&self.cached) && same(&self.multicast) && same(&self.unicast)
    }

    pub fn cache_plan(&self, budgets: &[f64]) -> Result<CachePlan> {
        CachePlan::new(self.cached.clone(), budgets.to_vec())
    }

    /// Rate delivered over the link (multicast plus unicast) to a receiver
    /// requesting file `j`.
    pub fn delivered_per_file(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| {
                (0..self.m())
                    .map(|j| self.multicast[i][j] + self.unicast[i][j])
                    .collect()
            })
            .collect()
    }
}

pub fn cached_fraction(cached: f64, multicast: f64) -> f64 {
    let total = cached + multicast;
    if total > 0.0 {
        cached / total
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_cached_convention() {
        let plan =
            MulticastRatePlan::coded(vec![vec![0.0, 1.0, 3.0]], vec![vec![0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(plan.p_cached(0, 0), 1.0);
        assert_eq!(plan.p_cached(0, 1), 0.5);
        assert_eq!(plan.p_cached(0, 2), 0.75);
    }

    #[test]
    fn rejects_negative_and_ragged() {
        assert!(MulticastRatePlan::coded(vec![vec![-1.0]], vec![vec![0.0]]).is_err());
        assert!(MulticastRatePlan::coded(vec![vec![1.0]], vec![vec![0.0, 1.0]]).is_err());
    }
}
