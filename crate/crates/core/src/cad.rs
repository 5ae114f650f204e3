//! Capacity adjusted distances.
//!
//! A normalized distance `s` maps to `s^(n_m(s) / d)`, where `n_m` is the
//! estimated intrinsic dimension at scale `s` and `d` the target dimension.
//! The raw map need not be monotone, so it is replaced by its running
//! maximum over the sorted observed distances.

use ndarray::Array2;

use crate::dimest::{n_m_at, DimensionCurve};
use crate::error::{CpmError, Result};
use crate::metricspace::{DistanceMatrix, MetricKind};

/// Target dimension of the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum TargetDim {
    Two,
    Three,
}

impl TargetDim {
    pub fn get(self) -> usize {
        match self {
            TargetDim::Two => 2,
            TargetDim::Three => 3,
        }
    }
}

impl TryFrom<usize> for TargetDim {
    type Error = CpmError;

    fn try_from(d: usize) -> Result<Self> {
        match d {
            2 => Ok(TargetDim::Two),
            3 => Ok(TargetDim::Three),
            _ => Err(CpmError::InvalidParameter(format!(
                "target dimension must be 2 or 3, got {d}"
            ))),
        }
    }
}

impl From<TargetDim> for usize {
    fn from(d: TargetDim) -> usize {
        d.get()
    }
}

/// `sigma^(n_m(sigma) / d)`, computed in log space; `cad(0) = 0`.
pub fn cad(sigma: f64, curve: &DimensionCurve, d: TargetDim) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    (n_m_at(curve, sigma) / d.get() as f64 * sigma.ln()).exp()
}

/// Running maximum of `cad_values` along strictly increasing `sorted_sigmas`.
pub fn monotone_envelope(sorted_sigmas: &[f64], cad_values: &[f64]) -> Result<Vec<f64>> {
    if sorted_sigmas.len() != cad_values.len() {
        return Err(CpmError::Contract(format!(
            "{} distances but {} adjusted values",
            sorted_sigmas.len(),
            cad_values.len()
        )));
    }
    if let Some(k) = sorted_sigmas.windows(2).position(|w| w[1] <= w[0]) {
        return Err(CpmError::Contract(format!(
            "distances must be strictly increasing (violated at index {})",
            k + 1
        )));
    }
    let mut out = Vec::with_capacity(cad_values.len());
    let mut running = f64::NEG_INFINITY;
    for &v in cad_values {
        running = running.max(v);
        out.push(running);
    }
    Ok(out)
}

/// Lookup table from each observed normalized distance to its envelope value.
#[derive(Debug, Clone)]
pub struct CadTransform {
    curve: DimensionCurve,
    target_dim: TargetDim,
    sorted_distances: Vec<f64>,
    envelope_values: Vec<f64>,
}

impl CadTransform {
    /// Builds the table from the off-diagonal entries of `dist`.
    pub fn new(dist: &DistanceMatrix, curve: &DimensionCurve, d: TargetDim) -> Result<Self> {
        let scale = curve.scale();
        let mut sigmas: Vec<f64> = dist.upper_triangle().into_iter().map(|v| v / scale).collect();
        sigmas.sort_unstable_by(f64::total_cmp);
        sigmas.dedup();
        let raw: Vec<f64> = sigmas.iter().map(|s| cad(*s, curve, d)).collect();
        let envelope_values = monotone_envelope(&sigmas, &raw)?;
        Ok(Self {
            curve: curve.clone(),
            target_dim: d,
            sorted_distances: sigmas,
            envelope_values,
        })
    }

    pub fn curve(&self) -> &DimensionCurve {
        &self.curve
    }

    pub fn target_dim(&self) -> TargetDim {
        self.target_dim
    }

    /// Unique normalized distances, ascending.
    pub fn sorted_distances(&self) -> &[f64] {
        &self.sorted_distances
    }

    pub fn envelope_values(&self) -> &[f64] {
        &self.envelope_values
    }

    /// Envelope value of a normalized distance that occurs in the table.
    fn lookup(&self, sigma: f64) -> Option<f64> {
        self.sorted_distances
            .binary_search_by(|probe| probe.total_cmp(&sigma))
            .ok()
            .map(|k| self.envelope_values[k])
    }
}

/// Normalizes `dist` by the curve's scale, applies the capacity adjustment and
/// its monotone envelope to every entry.
pub fn adjusted_distance_matrix(
    dist: &DistanceMatrix,
    curve: &DimensionCurve,
    d: TargetDim,
) -> Result<DistanceMatrix> {
    if dist.kind() == MetricKind::Adjusted {
        return Err(CpmError::Contract(
            "input is already an adjusted distance matrix".into(),
        ));
    }
    let transform = CadTransform::new(dist, curve, d)?;
    let n = dist.len();
    let scale = curve.scale();
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = transform
                .lookup(dist.get(i, j) / scale)
                .expect("every off-diagonal distance is in the table");
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    DistanceMatrix::new(values, MetricKind::Adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metricspace::euclidean_from_points;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn cad_examples() {
        let identity = DimensionCurve::constant(2.0, 1.0).unwrap();
        assert!((cad(0.37, &identity, TargetDim::Two) - 0.37).abs() < 1e-15);
        assert_eq!(cad(0.0, &identity, TargetDim::Two), 0.0);

        let four = DimensionCurve::constant(4.0, 1.0).unwrap();
        assert_eq!(cad(1.0, &four, TargetDim::Three), 1.0);
        assert!((cad(4.0, &four, TargetDim::Two) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn target_dim_parsing() {
        assert_eq!(TargetDim::try_from(3).unwrap(), TargetDim::Three);
        assert!(TargetDim::try_from(4).is_err());
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(
            monotone_envelope(&[1.0, 2.0, 3.0], &[1.0, 0.8, 1.2]).unwrap(),
            vec![1.0, 1.0, 1.2]
        );
        assert_eq!(
            monotone_envelope(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]).unwrap(),
            vec![0.1, 0.5, 0.9]
        );
        assert_eq!(
            monotone_envelope(&[1.0, 2.0], &[0.7, 0.7]).unwrap(),
            vec![0.7, 0.7]
        );
        assert!(monotone_envelope(&[2.0, 1.0], &[0.1, 0.2]).is_err());
        assert!(monotone_envelope(&[1.0, 1.0], &[0.1, 0.2]).is_err());
    }

    proptest! {
        #[test]
        fn envelope_properties(raw in prop::collection::vec(0.0f64..10.0, 1..60)) {
            let sigmas: Vec<f64> = (1..=raw.len()).map(|k| k as f64).collect();
            let env = monotone_envelope(&sigmas, &raw).unwrap();
            prop_assert!(env.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(env.iter().zip(&raw).all(|(e, r)| e >= r));
            prop_assert_eq!(env[0], raw[0]);
            prop_assert_eq!(monotone_envelope(&sigmas, &env).unwrap(), env);
        }
    }

    fn random_matrix(seed: u64, n: usize) -> DistanceMatrix {
        let mut rng = Rng::new(seed);
        let pts = Array2::from_shape_simple_fn((n, 3), || rng.gaussian());
        euclidean_from_points(pts.view())
    }

    #[test]
    fn identity_curve_returns_normalized_input() {
        let dist = random_matrix(1, 30);
        let curve = DimensionCurve::constant(2.0, 1.7).unwrap();
        let adj = adjusted_distance_matrix(&dist, &curve, TargetDim::Two).unwrap();
        assert_eq!(adj.kind(), MetricKind::Adjusted);
        for (a, d) in adj.values().iter().zip(dist.values().iter()) {
            assert!((a - d / 1.7).abs() <= 1e-14 * (1.0 + a));
        }
    }

    #[test]
    fn adjusted_matrix_preserves_rank_order() {
        let dist = random_matrix(2, 25);
        // a non-monotone raw map: high dimension at small scale, low at large
        let curve =
            DimensionCurve::new(vec![0.5, 1.0, 1.5], vec![6.0, 1.0, 0.5], 1.0, 6.0, 1.0).unwrap();
        let adj = adjusted_distance_matrix(&dist, &curve, TargetDim::Two).unwrap();
        let orig = dist.upper_triangle();
        let new = adj.upper_triangle();
        for a in 0..orig.len() {
            for b in 0..orig.len() {
                if orig[a] < orig[b] {
                    assert!(new[a] <= new[b]);
                }
                if orig[a] == orig[b] {
                    assert_eq!(new[a], new[b]);
                }
            }
        }
        let t = CadTransform::new(&dist, &curve, TargetDim::Two).unwrap();
        for (s, e) in t.sorted_distances().iter().zip(t.envelope_values()) {
            assert!(*e >= cad(*s, &curve, TargetDim::Two));
        }
    }

    #[test]
    fn already_adjusted_input_is_rejected() {
        let dist = random_matrix(3, 5);
        let curve = DimensionCurve::constant(2.0, 1.0).unwrap();
        let adj = adjusted_distance_matrix(&dist, &curve, TargetDim::Two).unwrap();
        assert!(adjusted_distance_matrix(&adj, &curve, TargetDim::Two).is_err());
    }
}
