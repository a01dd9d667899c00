use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub gini: f64,
    pub lorenz: Vec<[f64; 2]>,
}

impl InequalityReport {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Ok(Self {
            gini: gini(values)?,
            lorenz: lorenz(values)?,
        })
    }
}

fn sorted_checked(values: &[f64]) -> Result<(Vec<f64>, f64)> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Undefined(
            "inequality measures need finite non-negative values".into(),
        ));
    }
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Undefined(
            "inequality measures need at least one positive value".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted, total))
}

/// Mean absolute pairwise difference over twice the mean, via the sorted form
/// `sum_i (2i - n - 1) x_(i) / (n * sum x)`.
pub fn gini(values: &[f64]) -> Result<f64> {
    let (sorted, total) = sorted_checked(values)?;
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * total)).max(0.0))
}

/// Lorenz curve points `(population share, cumulative value share)`,
/// ascending, from `(0,0)` to exactly `(1,1)`.
pub fn lorenz(values: &[f64]) -> Result<Vec<[f64; 2]>> {
    let (sorted, total) = sorted_checked(values)?;
    let n = sorted.len();
    let mut points = Vec::with_capacity(n + 1);
    points.push([0.0, 0.0]);
    let mut cum = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        cum += x;
        points.push([(i + 1) as f64 / n as f64, (cum / total).min(1.0)]);
    }
    *points.last_mut().unwrap() = [1.0, 1.0];
    Ok(points)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Direct O(n^2) mean absolute difference.
    fn gini_pairwise(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mut s = 0.0;
        for a in xs {
            for b in xs {
                s += (a - b).abs();
            }
        }
        s / (n * n) / (2.0 * mean)
    }

    #[test]
    fn equality_and_concentration() {
        assert_eq!(gini(&[5.0; 4]).unwrap(), 0.0);
        assert!((gini(&[0.0, 0.0, 0.0, 10.0]).unwrap() - 0.75).abs() < 1e-12);
        assert!((gini_pairwise(&[0.0, 0.0, 0.0, 10.0]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(gini(&[0.0, 0.0]).is_err());
        assert!(gini(&[]).is_err());
        assert!(lorenz(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn lorenz_endpoints() {
        let l = lorenz(&[3.0, 1.0, 0.1, 7.0]).unwrap();
        assert_eq!(l[0], [0.0, 0.0]);
        assert_eq!(*l.last().unwrap(), [1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn matches_pairwise_and_scales(xs in prop::collection::vec(0.0f64..100.0, 1..40), c in 0.01f64..1e3) {
            prop_assume!(xs.iter().sum::<f64>() > 1e-6);
            let g = gini(&xs).unwrap();
            prop_assert!((g - gini_pairwise(&xs)).abs() < 1e-10);
            prop_assert!((0.0..1.0).contains(&g));
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            prop_assert!((gini(&scaled).unwrap() - g).abs() < 1e-12);
        }

        #[test]
        fn lorenz_is_monotone_and_convex(xs in prop::collection::vec(0.0f64..100.0, 1..40)) {
            prop_assume!(xs.iter().sum::<f64>() > 1e-6);
            let l = lorenz(&xs).unwrap();
            for w in l.windows(2) {
                prop_assert!(w[1][0] > w[0][0] && w[1][1] >= w[0][1]);
            }
            for w in l.windows(3) {
                let s1 = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
                let s2 = (w[2][1] - w[1][1]) / (w[2][0] - w[1][0]);
                prop_assert!(s2 >= s1 - 1e-9);
            }
            prop_assert_eq!(*l.last().unwrap(), [1.0, 1.0]);
        }
    }
}
