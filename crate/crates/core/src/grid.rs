use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition `0 = t₀ < t₁ < … < t_K = T` of the depth axis. Intervals are
/// numbered `1..=K`; interval `k` is `[t_{k−1}, t_k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(intervals: usize, t_final: f64) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidArgument("grid needs at least one interval".into()));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "terminal time must be positive, got {t_final}"
            )));
        }
        let h = t_final / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|k| k as f64 * h).collect();
        nodes[intervals] = t_final;
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidArgument("grid must start at t = 0".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "grid nodes must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { nodes })
    }

    /// Number of intervals `K`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn t_final(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// `τ_k` for `k` in `1..=K`; `τ_0 = τ_{K+1} = 0`.
    pub fn tau(&self, k: usize) -> f64 {
        if k == 0 || k > self.intervals() {
            0.0
        } else {
            self.nodes[k] - self.nodes[k - 1]
        }
    }

    pub fn taus(&self) -> Vec<f64> {
        (1..=self.intervals()).map(|k| self.tau(k)).collect()
    }

    pub fn max_tau(&self) -> f64 {
        self.taus().into_iter().fold(0.0, f64::max)
    }

    /// Midpoint of interval `k`.
    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.nodes[k - 1] + self.nodes[k])
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (1..=self.intervals()).map(|k| self.midpoint(k)).collect()
    }

    /// Bisects interval `k_star`, returning the refined grid.
    pub fn insert_midpoint(&self, k_star: usize) -> Result<Self> {
        self.check_interval(k_star)?;
        let mut nodes = Vec::with_capacity(self.nodes.len() + 1);
        nodes.extend_from_slice(&self.nodes[..k_star]);
        nodes.push(self.midpoint(k_star));
        nodes.extend_from_slice(&self.nodes[k_star..]);
        Ok(Self { nodes })
    }

    /// Splits every interval into `factor` equal pieces.
    pub fn refine_uniformly(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("refinement factor must be >= 1".into()));
        }
        let mut nodes = Vec::with_capacity(self.intervals() * factor + 1);
        nodes.push(0.0);
        for k in 1..=self.intervals() {
            let (a, b) = (self.nodes[k - 1], self.nodes[k]);
            for j in 1..factor {
                let w = j as f64 / factor as f64;
                nodes.push((1.0 - w) * a + w * b);
            }
            nodes.push(b);
        }
        Ok(Self { nodes })
    }

    pub fn check_interval(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.intervals() {
            return Err(Error::IndexOutOfRange {
                index: k,
                intervals: self.intervals(),
            });
        }
        Ok(())
    }

    /// Interval `k` containing `t` (left-closed), clamped to `1..=K`.
    pub fn locate(&self, t: f64) -> usize {
        let k = self.nodes.partition_point(|&node| node <= t);
        k.clamp(1, self.intervals())
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(nodes: Vec<f64>) -> Result<Self> {
        TimeGrid::from_nodes(nodes)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.nodes
    }
}
