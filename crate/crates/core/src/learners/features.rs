//! Hand-designed transition features for ball-world reward models, with
//! stored standardization statistics.
//!
//! The squared position differences of the other balls between `s` and `s'`
//! are tiny on real transitions but explode on recombined state pairs; they
//! are included deliberately so learned rewards are prone to
//! out-of-distribution errors a dynamics-aware comparison avoids.

use serde::{Deserialize, Serialize};

use crate::bouncing_balls::{BallWorldConfig, BallWorldLayout};
use crate::types::{RewardError, SchemaId, Transition, Triple};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureExtractor {
    n_balls: usize,
    goal_threshold: f64,
    schema: SchemaId,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl FeatureExtractor {
    /// Feature order: goal distance in `s`, goal distance in `s'`, their
    /// difference, goal indicator in `s'`, squared position displacement of
    /// each non-agent ball between `s` and `s'`, action components.
    pub fn feature_dim(n_balls: usize) -> usize {
        4 + (n_balls - 1) + 2
    }

    pub fn dim(&self) -> usize {
        Self::feature_dim(self.n_balls)
    }

    fn layout(&self) -> BallWorldLayout {
        BallWorldLayout {
            n_balls: self.n_balls,
        }
    }

    pub fn raw(&self, t: Triple<'_>, out: &mut Vec<f64>) -> Result<(), RewardError> {
        if t.s.schema_id() != self.schema {
            return Err(RewardError::SchemaMismatch {
                name: "features".into(),
                expected: self.schema,
                got: t.s.schema_id(),
            });
        }
        let layout = self.layout();
        let cur = t.s.values();
        let next = t.s_next.values();
        let d_cur = layout.goal_distance(cur);
        let d_next = layout.goal_distance(next);
        out.push(d_cur);
        out.push(d_next);
        out.push(d_next - d_cur);
        out.push(if d_next <= self.goal_threshold { 1.0 } else { 0.0 });
        for ball in 1..self.n_balls {
            let p = layout.ball_pos(cur, ball);
            let q = layout.ball_pos(next, ball);
            out.push((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2));
        }
        out.push(t.a.values()[0]);
        out.push(t.a.values()[1]);
        Ok(())
    }

    /// Standardized features: `(raw - mean) / std`.
    pub fn extract(&self, t: Triple<'_>, out: &mut Vec<f64>) -> Result<(), RewardError> {
        let start = out.len();
        self.raw(t, out)?;
        for (i, v) in out[start..].iter_mut().enumerate() {
            *v = (*v - self.mean[i]) / self.std[i];
        }
        Ok(())
    }

    /// Fit standardization statistics on a training set. Population std;
    /// near-constant features fall back to unit scale.
    pub fn fit(config: &BallWorldConfig, transitions: &[Transition]) -> Result<Self, RewardError> {
        let dim = Self::feature_dim(config.n_balls);
        let mut extractor = Self {
            n_balls: config.n_balls,
            goal_threshold: config.goal_threshold,
            schema: config.schema_id(),
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        };
        let n = transitions.len().max(1) as f64;
        let mut raw = Vec::with_capacity(dim);
        let mut sums = vec![0.0; dim];
        for tr in transitions {
            raw.clear();
            extractor.raw(tr.triple(), &mut raw)?;
            for (s, v) in sums.iter_mut().zip(&raw) {
                *s += v;
            }
        }
        let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let mut sq = vec![0.0; dim];
        for tr in transitions {
            raw.clear();
            extractor.raw(tr.triple(), &mut raw)?;
            for (i, v) in raw.iter().enumerate() {
                sq[i] += (v - mean[i]) * (v - mean[i]);
            }
        }
        let std: Vec<f64> = sq
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < 1e-8 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        extractor.mean = mean;
        extractor.std = std;
        Ok(extractor)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bouncing_balls::Policy;
    use crate::datasets::collect;

    #[test]
    fn standardization_centers_training_features() {
        let config = BallWorldConfig::default();
        let ds = collect(&config, Policy::Uniform, 5000, 3).unwrap();
        let fx = FeatureExtractor::fit(&config, &ds.transitions).unwrap();
        let dim = fx.dim();
        let mut sums = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut buf = Vec::new();
        for tr in &ds.transitions {
            buf.clear();
            fx.extract(tr.triple(), &mut buf).unwrap();
            for i in 0..dim {
                sums[i] += buf[i];
                sq[i] += buf[i] * buf[i];
            }
        }
        let n = ds.transitions.len() as f64;
        for i in 0..dim {
            let mean = sums[i] / n;
            let var = sq[i] / n - mean * mean;
            assert!(mean.abs() <= 1e-8, "feature {i} mean {mean}");
            assert!(
                (var.sqrt() - 1.0).abs() <= 1e-6,
                "feature {i} std {}",
                var.sqrt()
            );
        }
    }

    #[test]
    fn feature_dim_matches() {
        let config = BallWorldConfig::default();
        let ds = collect(&config, Policy::Uniform, 10, 3).unwrap();
        let fx = FeatureExtractor::fit(&config, &ds.transitions).unwrap();
        let mut buf = Vec::new();
        fx.extract(ds.transitions[0].triple(), &mut buf).unwrap();
        assert_eq!(buf.len(), 9); // 4 + 3 other balls + 2 action dims
        assert_eq!(fx.dim(), 9);
    }
}
