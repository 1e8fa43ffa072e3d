//! Percentile bootstrap confidence intervals over dataset subsamples.

use super::{stable_mean, MetricError};
use crate::datasets::TransitionDataset;
use crate::rng::Rng;
use crate::types::Transition;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

/// Draw `k` datasets of size `n` (without replacement within a draw) from the
/// population, evaluate `metric_fn` on each, and return the mean and the
/// percentile confidence interval of the resulting values.
///
/// A draw on which the metric reports degenerate variance is redrawn at most
/// 10 times before the whole computation aborts.
pub fn bootstrap_ci(
    metric_fn: &mut dyn FnMut(&[Transition], &mut Rng) -> Result<f64, MetricError>,
    population: &TransitionDataset,
    n: usize,
    k: usize,
    confidence: f64,
    rng: &mut Rng,
) -> Result<BootstrapSummary, MetricError> {
    let transitions = &population.transitions;
    if n == 0 || n > transitions.len() {
        return Err(MetricError::InvalidConfig(format!(
            "bootstrap size {} must be in [1, {}]",
            n,
            transitions.len()
        )));
    }
    if k < 2 {
        return Err(MetricError::InvalidConfig(
            "bootstrap needs k >= 2 draws".into(),
        ));
    }
    if !(0.0..1.0).contains(&confidence) || confidence <= 0.0 {
        return Err(MetricError::InvalidConfig(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }

    const MAX_ATTEMPTS: usize = 11; // first try plus 10 redraws
    let mut values = Vec::with_capacity(k);
    for draw in 0..k {
        let mut ok = false;
        for attempt in 0..MAX_ATTEMPTS {
            let label = (draw * MAX_ATTEMPTS + attempt) as u64;
            let mut draw_rng = rng.child_idx("bootstrap/draw", label);
            let indices = draw_rng.sample_indices(transitions.len(), n);
            let subset: Vec<Transition> =
                indices.iter().map(|&i| transitions[i].clone()).collect();
            let mut metric_rng = rng.child_idx("bootstrap/metric", label);
            match metric_fn(&subset, &mut metric_rng) {
                Ok(v) => {
                    values.push(v);
                    ok = true;
                    break;
                }
                Err(MetricError::DegenerateVariance(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        if !ok {
            return Err(MetricError::BootstrapDegenerate(MAX_ATTEMPTS));
        }
    }

    let mean = stable_mean(&values);
    let mut sorted = values;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let alpha = (1.0 - confidence) / 2.0;
    let lo = percentile(&sorted, alpha);
    let hi = percentile(&sorted, 1.0 - alpha);
    Ok(BootstrapSummary {
        mean,
        lo,
        hi,
        width: hi - lo,
    })
}

/// Linearly interpolated quantile of pre-sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::TransitionDataset;
    use crate::types::{ActionVec, SchemaId, StateVec, Transition};

    fn tiny_dataset(n: usize) -> TransitionDataset {
        let id = SchemaId::from_name("test");
        let transitions: Vec<Transition> = (0..n)
            .map(|i| {
                let s = StateVec::new(vec![i as f64], id).unwrap();
                let sn = StateVec::new(vec![(i + 1) as f64], id).unwrap();
                let a = ActionVec::new(vec![0.0], vec![(-1.0, 1.0)]).unwrap();
                Transition::new(s, a, sn, 0, i as u64, 0.0, false).unwrap()
            })
            .collect();
        TransitionDataset::from_transitions("test", transitions)
    }

    #[test]
    fn constant_metric_zero_width() {
        let population = tiny_dataset(64);
        let mut rng = Rng::new(0);
        let summary = bootstrap_ci(
            &mut |_, _| Ok(0.5),
            &population,
            16,
            20,
            0.95,
            &mut rng,
        )
        .unwrap();
        assert_eq!(summary.mean, 0.5);
        assert_eq!(summary.width, 0.0);
    }

    #[test]
    fn degenerate_draws_are_retried_then_abort() {
        let population = tiny_dataset(64);
        let mut rng = Rng::new(0);
        let mut calls = 0usize;
        // Fails the first two attempts of each draw, then succeeds.
        let result = bootstrap_ci(
            &mut |_, _| {
                calls += 1;
                if calls % 3 != 0 {
                    Err(MetricError::DegenerateVariance("test"))
                } else {
                    Ok(1.0)
                }
            },
            &population,
            16,
            5,
            0.95,
            &mut rng,
        );
        assert!(result.is_ok());

        let always = bootstrap_ci(
            &mut |_, _| Err(MetricError::DegenerateVariance("test")),
            &population,
            16,
            5,
            0.95,
            &mut rng,
        );
        assert!(matches!(always, Err(MetricError::BootstrapDegenerate(_))));
    }

    #[test]
    fn mean_metric_interval_contains_truth() {
        let population = tiny_dataset(512);
        let mut rng = Rng::new(7);
        // Mean of the first state coordinate; population mean is 255.5.
        let summary = bootstrap_ci(
            &mut |ts, _| Ok(stable_mean(&ts.iter().map(|t| t.s.values()[0]).collect::<Vec<_>>())),
            &population,
            64,
            100,
            0.95,
            &mut rng,
        )
        .unwrap();
        assert!(summary.lo <= 255.5 && 255.5 <= summary.hi);
        assert!(summary.width > 0.0);
    }
}
