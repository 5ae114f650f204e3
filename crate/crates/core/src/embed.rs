//! Pair affinities and KL-divergence embedding.
//!
//! High-dimensional affinities are `p_ij ∝ (eps + D_ij^2)^-1` and
//! low-dimensional ones `q_ij ∝ (1 + |y_i - y_j|^2)^-1`, each normalized once
//! over all ordered pairs `i != j` (not per row). The objective is
//! `KL(P || Q) = sum_{i != j} p_ij ln(p_ij / q_ij)` with gradient
//!
//! ```text
//! dKL/dy_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j),   w_ij = (1 + |y_i - y_j|^2)^-1
//! ```
//!
//! Writing `Z = sum_{k != l} w_kl`, the gradient splits into
//! `4 (sum_j p_ij w_ij (y_i - y_j) - (1/Z) sum_j w_ij^2 (y_i - y_j))`, so the
//! optimizer gets the objective and gradient from a single pass over pairs.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::baseline::classical_mds;
use crate::cad::TargetDim;
use crate::error::{CpmError, Result};
use crate::metricspace::{DistanceMatrix, MetricKind};
use crate::rng::Rng;

/// Low-dimensional coordinates, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    coords: Array2<f64>,
}

impl Embedding {
    pub fn new(coords: Array2<f64>) -> Result<Self> {
        let d = coords.ncols();
        if !(d == 2 || d == 3) {
            return Err(CpmError::InvalidParameter(format!(
                "embedding dimension must be 2 or 3, got {d}"
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(CpmError::Numerical("embedding has non-finite coordinates".into()));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> ArrayView2<'_, f64> {
        self.coords.view()
    }

    pub fn into_coords(self) -> Array2<f64> {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Globally normalized pair probabilities with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    values: Array2<f64>,
    epsilon: Option<f64>,
}

impl AffinityMatrix {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Regularizer used for high-dimensional affinities.
    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Builds a matrix by normalizing a symmetric kernel given on the upper
    /// triangle.
    fn from_kernel(n: usize, kernel: impl Fn(usize, usize) -> f64, epsilon: Option<f64>) -> Self {
        let mut values = Array2::<f64>::zeros((n, n));
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let k = kernel(i, j);
                values[[i, j]] = k;
                total += k;
            }
        }
        let norm = 1.0 / (2.0 * total);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = values[[i, j]] * norm;
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        Self { values, epsilon }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// `p_ij ∝ (eps + D_ij^2)^-1` with `eps = epsilon_factor * median(D^2)` over
/// off-diagonal entries (median of the nonzero ones if that median is zero).
pub fn high_affinities(adjusted: &DistanceMatrix, epsilon_factor: f64) -> Result<AffinityMatrix> {
    if adjusted.kind() != MetricKind::Adjusted {
        return Err(CpmError::Contract(format!(
            "high affinities expect an adjusted distance matrix, got {:?}",
            adjusted.kind()
        )));
    }
    if !(epsilon_factor > 0.0 && epsilon_factor.is_finite()) {
        return Err(CpmError::InvalidParameter(format!(
            "epsilon factor must be positive, got {epsilon_factor}"
        )));
    }
    let n = adjusted.len();
    if n < 2 {
        return Err(CpmError::InvalidParameter("need at least two points".into()));
    }
    let squares: Vec<f64> = adjusted.upper_triangle().into_iter().map(|d| d * d).collect();
    let nonzero: Vec<f64> = squares.iter().copied().filter(|s| *s > 0.0).collect();
    if nonzero.is_empty() {
        return Err(CpmError::DegenerateData(
            "all adjusted distances are zero".into(),
        ));
    }
    let mut base = median(squares);
    if base <= 0.0 {
        base = median(nonzero);
    }
    let eps = epsilon_factor * base;
    let d = adjusted.values();
    Ok(AffinityMatrix::from_kernel(
        n,
        |i, j| 1.0 / (eps + d[[i, j]] * d[[i, j]]),
        Some(eps),
    ))
}

fn sq_dist(y: ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
    y.row(i)
        .iter()
        .zip(y.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `q_ij ∝ (1 + |y_i - y_j|^2)^-1`.
pub fn low_affinities(emb: &Embedding) -> AffinityMatrix {
    let y = emb.coords();
    AffinityMatrix::from_kernel(emb.len(), |i, j| 1.0 / (1.0 + sq_dist(y, i, j)), None)
}

/// `sum_{i != j} p_ij ln(p_ij / q_ij)`.
pub fn kl_divergence(p: &AffinityMatrix, q: &AffinityMatrix) -> Result<f64> {
    if p.values.dim() != q.values.dim() {
        return Err(CpmError::Contract(format!(
            "affinity shapes differ: {:?} vs {:?}",
            p.values.dim(),
            q.values.dim()
        )));
    }
    let n = p.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.values[[i, j]];
            if pij > 0.0 {
                total += pij * (pij / q.values[[i, j]]).ln();
            }
        }
    }
    Ok(total)
}

/// Analytic gradient of `KL(P || Q(Y))` with respect to the coordinates.
pub fn kl_gradient(p: &AffinityMatrix, emb: &Embedding) -> Result<Array2<f64>> {
    if p.len() != emb.len() {
        return Err(CpmError::Contract(format!(
            "{} affinities rows but {} embedded points",
            p.len(),
            emb.len()
        )));
    }
    let q = low_affinities(emb);
    let y = emb.coords();
    let (n, d) = y.dim();
    let mut grad = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = 1.0 / (1.0 + sq_dist(y, i, j));
            let coef = 4.0 * (p.values[[i, j]] - q.values[[i, j]]) * w;
            for k in 0..d {
                grad[[i, k]] += coef * (y[[i, k]] - y[[j, k]]);
            }
        }
    }
    Ok(grad)
}

/// Objective and gradient evaluated together from one pass over pairs.
/// Rows are processed independently and reduced in index order, so the
/// result does not depend on the thread count.
struct Objective<'a> {
    p: &'a AffinityMatrix,
    p_log_p: f64,
    p_total: f64,
}

struct Evaluation {
    kl: f64,
    grad: Array2<f64>,
}

impl<'a> Objective<'a> {
    fn new(p: &'a AffinityMatrix) -> Self {
        let (mut p_log_p, mut p_total) = (0.0, 0.0);
        for ((i, j), &v) in p.values.indexed_iter() {
            if i != j && v > 0.0 {
                p_log_p += v * v.ln();
                p_total += v;
            }
        }
        Self {
            p,
            p_log_p,
            p_total,
        }
    }

    fn evaluate(&self, y: ArrayView2<'_, f64>) -> Evaluation {
        let (n, d) = y.dim();
        let p = self.p.values.view();
        let rows: Vec<(f64, f64, Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut sum_w, mut sum_plw) = (0.0, 0.0);
                let mut attract = vec![0.0; d];
                let mut repulse = vec![0.0; d];
                let yi = y.row(i);
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let yj = y.row(j);
                    let mut dist2 = 0.0;
                    for k in 0..d {
                        let diff = yi[k] - yj[k];
                        dist2 += diff * diff;
                    }
                    let w = 1.0 / (1.0 + dist2);
                    let pij = p[[i, j]];
                    sum_w += w;
                    sum_plw -= pij * dist2.ln_1p();
                    for k in 0..d {
                        let diff = yi[k] - yj[k];
                        attract[k] += pij * w * diff;
                        repulse[k] += w * w * diff;
                    }
                }
                (sum_w, sum_plw, attract, repulse)
            })
            .collect();
        let z: f64 = rows.iter().map(|r| r.0).sum();
        let sum_plw: f64 = rows.iter().map(|r| r.1).sum();
        let kl = self.p_log_p - sum_plw + self.p_total * z.ln();
        let mut grad = Array2::<f64>::zeros((n, d));
        for (i, (_, _, attract, repulse)) in rows.iter().enumerate() {
            for k in 0..d {
                grad[[i, k]] = 4.0 * (attract[k] - repulse[k] / z);
            }
        }
        Evaluation { kl, grad }
    }
}

/// How the optimizer picks its starting coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Classical MDS of the initialization distances.
    Mds,
    /// I.i.d. Gaussian coordinates with standard deviation 1e-2.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Stop when the relative decrease of KL falls below this.
    pub tol: f64,
    pub momentum: f64,
    pub learning_rate: f64,
    /// Learning-rate multiplier after an accepted step.
    pub growth: f64,
    /// Halvings tried before giving up on finding a descent step.
    pub max_halvings: usize,
    pub init: Init,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-7,
            momentum: 0.8,
            learning_rate: 10.0,
            growth: 1.05,
            max_halvings: 30,
            init: Init::Mds,
        }
    }
}

/// Why [`OptimizerState::run`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    NoDescentStep,
    MaxIterations,
}

/// Momentum gradient descent with monotone step acceptance.
///
/// A candidate step that raises KL is rejected: the velocity is dropped, the
/// learning rate halved and the step retried. Accepted steps grow the rate.
pub struct OptimizerState<'a> {
    objective: Objective<'a>,
    coords: Array2<f64>,
    velocity: Array2<f64>,
    gradient: Array2<f64>,
    learning_rate: f64,
    momentum: f64,
    iteration: usize,
    kl_history: Vec<f64>,
    opts: OptimizerOptions,
}

/// Outcome of [`OptimizerState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Accepted with the given relative decrease.
    Accepted { relative_decrease: f64 },
    /// No step size up to `max_halvings` halvings decreased the objective.
    Stalled,
}

impl<'a> OptimizerState<'a> {
    pub fn new(p: &'a AffinityMatrix, init: Embedding, opts: OptimizerOptions) -> Result<Self> {
        if init.len() != p.len() {
            return Err(CpmError::Contract(format!(
                "{} initial points for a {}-point affinity matrix",
                init.len(),
                p.len()
            )));
        }
        if opts.max_iters < 1 {
            return Err(CpmError::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&opts.momentum) || opts.learning_rate.is_nan() || opts.learning_rate <= 0.0 {
            return Err(CpmError::InvalidParameter(
                "momentum must be in [0, 1) and the learning rate positive".into(),
            ));
        }
        let objective = Objective::new(p);
        let coords = init.into_coords();
        let eval = objective.evaluate(coords.view());
        if !eval.kl.is_finite() {
            return Err(CpmError::Diverged {
                iteration: 0,
                value: eval.kl,
            });
        }
        Ok(Self {
            objective,
            velocity: Array2::zeros(coords.raw_dim()),
            coords,
            gradient: eval.grad,
            learning_rate: opts.learning_rate,
            momentum: opts.momentum,
            iteration: 0,
            kl_history: vec![eval.kl],
            opts,
        })
    }

    pub fn kl(&self) -> f64 {
        *self.kl_history.last().expect("history starts with the initial KL")
    }

    pub fn kl_history(&self) -> &[f64] {
        &self.kl_history
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn coords(&self) -> ArrayView2<'_, f64> {
        self.coords.view()
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        self.iteration += 1;
        let current = self.kl();
        let mut lr = self.learning_rate;
        let mut velocity = self.velocity.clone();
        let mut last_value = current;
        for _ in 0..=self.opts.max_halvings {
            let step = &velocity * self.momentum - &self.gradient * lr;
            let candidate = &self.coords + &step;
            let eval = self.objective.evaluate(candidate.view());
            if eval.kl.is_finite() && eval.kl <= current {
                self.coords = candidate;
                self.velocity = step;
                self.gradient = eval.grad;
                self.learning_rate = lr * self.opts.growth;
                self.kl_history.push(eval.kl);
                let relative_decrease = (current - eval.kl) / current.abs().max(f64::MIN_POSITIVE);
                return Ok(StepOutcome::Accepted { relative_decrease });
            }
            last_value = eval.kl;
            velocity.fill(0.0);
            lr *= 0.5;
        }
        if !last_value.is_finite() {
            return Err(CpmError::Diverged {
                iteration: self.iteration,
                value: last_value,
            });
        }
        self.velocity.fill(0.0);
        Ok(StepOutcome::Stalled)
    }

    /// Steps until the relative decrease drops below `tol`, no descent step
    /// exists, or `max_iters` is reached.
    pub fn run(&mut self) -> Result<StopReason> {
        while self.iteration < self.opts.max_iters {
            match self.step()? {
                StepOutcome::Stalled => return Ok(StopReason::NoDescentStep),
                StepOutcome::Accepted { relative_decrease } if relative_decrease < self.opts.tol => {
                    return Ok(StopReason::Tolerance)
                }
                StepOutcome::Accepted { .. } => {}
            }
        }
        Ok(StopReason::MaxIterations)
    }

    pub fn into_result(self, stop: StopReason) -> Result<OptimizationResult> {
        Ok(OptimizationResult {
            embedding: Embedding::new(self.coords)?,
            kl_history: self.kl_history,
            iterations: self.iteration,
            stop,
        })
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub embedding: Embedding,
    /// Initial KL followed by the KL after every accepted step.
    pub kl_history: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Initial coordinates per `init`.
pub fn initial_embedding(
    init: Init,
    n: usize,
    d: TargetDim,
    dist_for_init: &DistanceMatrix,
    rng: &mut Rng,
) -> Result<Embedding> {
    match init {
        Init::Mds => {
            if dist_for_init.len() != n {
                return Err(CpmError::Contract(format!(
                    "initialization distances cover {} points, expected {n}",
                    dist_for_init.len()
                )));
            }
            classical_mds(dist_for_init, d)
        }
        Init::Random => {
            Embedding::new(Array2::from_shape_simple_fn((n, d.get()), || 1e-2 * rng.gaussian()))
        }
    }
}

/// Minimizes `KL(P || Q(Y))` from the initialization chosen in `opts`.
pub fn optimize_embedding(
    p: &AffinityMatrix,
    d: TargetDim,
    dist_for_init: &DistanceMatrix,
    rng: &mut Rng,
    opts: &OptimizerOptions,
) -> Result<OptimizationResult> {
    let init = initial_embedding(opts.init, p.len(), d, dist_for_init, rng)?;
    let mut state = OptimizerState::new(p, init, *opts)?;
    let stop = state.run()?;
    state.into_result(stop)
}

/// Sum of each gradient column; zero for a translation-invariant objective.
pub fn gradient_drift(grad: &Array2<f64>) -> Vec<f64> {
    grad.sum_axis(Axis(0)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metricspace::euclidean_from_points;
    use crate::rng::Rng;
    use ndarray::array;
    use proptest::prelude::*;

    fn adjusted(values: Array2<f64>) -> DistanceMatrix {
        DistanceMatrix::new(values, MetricKind::Adjusted).unwrap()
    }

    fn equilateral() -> DistanceMatrix {
        adjusted(array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    }

    fn random_embedding(rng: &mut Rng, n: usize, d: usize) -> Embedding {
        Embedding::new(Array2::from_shape_simple_fn((n, d), || rng.gaussian())).unwrap()
    }

    fn random_p(rng: &mut Rng, n: usize) -> AffinityMatrix {
        let pts = Array2::from_shape_simple_fn((n, 4), || rng.gaussian());
        let d = euclidean_from_points(pts.view());
        high_affinities(&adjusted(d.values().to_owned()), 1e-6).unwrap()
    }

    #[test]
    fn two_points_split_evenly() {
        let p = high_affinities(&adjusted(array![[0.0, 3.0], [3.0, 0.0]]), 1e-6).unwrap();
        assert_eq!(p.values()[[0, 1]], 0.5);
        assert_eq!(p.values()[[1, 0]], 0.5);
        let q = low_affinities(&Embedding::new(array![[0.0, 0.0], [5.0, 1.0]]).unwrap());
        assert_eq!(q.values()[[0, 1]], 0.5);
    }

    #[test]
    fn equilateral_sixths() {
        let p = high_affinities(&equilateral(), 1e-6).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let q = low_affinities(&Embedding::new(array![[0.0, 0.0], [1.0, 0.0], [0.5, h]]).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((p.values()[[i, j]] - want).abs() < 1e-15);
                assert!((q.values()[[i, j]] - want).abs() < 1e-12);
            }
        }
        assert!((p.epsilon().unwrap() - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn coincident_points_have_finite_q() {
        let q = low_affinities(&Embedding::new(array![[1.0, 1.0], [1.0, 1.0], [2.0, 0.0]]).unwrap());
        assert!(q.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn affinities_need_adjusted_nondegenerate_input() {
        let d = DistanceMatrix::new(array![[0.0, 1.0], [1.0, 0.0]], MetricKind::Euclidean).unwrap();
        assert!(high_affinities(&d, 1e-6).is_err());
        assert!(matches!(
            high_affinities(&adjusted(Array2::zeros((3, 3))), 1e-6),
            Err(CpmError::DegenerateData(_))
        ));
    }

    #[test]
    fn row_sums_are_not_equalized() {
        // an outlier keeps a small row sum under global normalization
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [30.0, 30.0]];
        let d = euclidean_from_points(pts.view());
        let p = high_affinities(&adjusted(d.values().to_owned()), 1e-6).unwrap();
        let rows: Vec<f64> = p.values().rows().into_iter().map(|r| r.sum()).collect();
        assert!(rows[4] < 0.25 * rows[0]);
        assert!((rows.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_two_pair_system() {
        // ordered pairs (0,1),(1,0) hold 0.35 each and (0,2),(2,0) hold 0.15,
        // which sums to 0.7 ln 1.4 + 0.3 ln 0.6
        let p = AffinityMatrix {
            values: array![[0.0, 0.35, 0.15], [0.35, 0.0, 0.0], [0.15, 0.0, 0.0]],
            epsilon: None,
        };
        let q = AffinityMatrix {
            values: array![[0.0, 0.25, 0.25], [0.25, 0.0, 0.0], [0.25, 0.0, 0.0]],
            epsilon: None,
        };
        let want = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        assert!((kl_divergence(&p, &q).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.08228).abs() < 1e-5);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn gradient_vanishes_at_p_equals_q() {
        let mut rng = Rng::new(3);
        let emb = random_embedding(&mut rng, 7, 2);
        let p = low_affinities(&emb);
        let g = kl_gradient(&p, &emb).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn fused_objective_matches_matrix_route() {
        let mut rng = Rng::new(5);
        let p = random_p(&mut rng, 9);
        let emb = random_embedding(&mut rng, 9, 3);
        let eval = Objective::new(&p).evaluate(emb.coords());
        let kl = kl_divergence(&p, &low_affinities(&emb)).unwrap();
        assert!((eval.kl - kl).abs() < 1e-12 * kl.max(1.0));
        let g = kl_gradient(&p, &emb).unwrap();
        for (a, b) in eval.grad.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    fn fd_gradient(p: &AffinityMatrix, emb: &Embedding, h: f64) -> Array2<f64> {
        let base = emb.coords().to_owned();
        let mut out = Array2::zeros(base.raw_dim());
        for idx in ndarray::indices(base.raw_dim()) {
            let mut plus = base.clone();
            plus[idx] += h;
            let mut minus = base.clone();
            minus[idx] -= h;
            let fp = kl_divergence(p, &low_affinities(&Embedding::new(plus).unwrap())).unwrap();
            let fm = kl_divergence(p, &low_affinities(&Embedding::new(minus).unwrap())).unwrap();
            out[idx] = (fp - fm) / (2.0 * h);
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences_n6() {
        let mut rng = Rng::new(21);
        let p = random_p(&mut rng, 6);
        let emb = random_embedding(&mut rng, 6, 2);
        let g = kl_gradient(&p, &emb).unwrap();
        let fd = fd_gradient(&p, &emb, 1e-5);
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-4 * scale, "{a} vs {b}");
        }
        let drift = gradient_drift(&g);
        assert!(drift.iter().all(|v| v.abs() < 1e-10));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kl_nonnegative_and_rigid_invariant(seed in any::<u64>(), n in 4usize..12, angle in 0.0f64..6.3, tx in -5.0f64..5.0) {
            let mut rng = Rng::new(seed);
            let p = random_p(&mut rng, n);
            let emb = random_embedding(&mut rng, n, 2);
            let kl = kl_divergence(&p, &low_affinities(&emb)).unwrap();
            prop_assert!(kl >= -1e-15);
            let (s, c) = angle.sin_cos();
            let rot = array![[c, -s], [s, c]];
            let moved = emb.coords().dot(&rot) + tx;
            let kl2 = kl_divergence(&p, &low_affinities(&Embedding::new(moved).unwrap())).unwrap();
            prop_assert!((kl - kl2).abs() <= 1e-12 * kl.max(1.0));
        }

        #[test]
        fn gradient_check_random_instances(seed in any::<u64>(), n in 4usize..=12, three in any::<bool>()) {
            let mut rng = Rng::new(seed);
            let d = if three { 3 } else { 2 };
            let p = random_p(&mut rng, n);
            let emb = random_embedding(&mut rng, n, d);
            let g = kl_gradient(&p, &emb).unwrap();
            let fd = fd_gradient(&p, &emb, 1e-5);
            let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in g.iter().zip(fd.iter()) {
                prop_assert!((a - b).abs() <= 1e-4 * scale);
            }
        }
    }

    #[test]
    fn heavy_tailed_affinities() {
        // p (eps + D^2) is one constant, so p D^2 flattens once D^2 >> eps
        let alpha = 1.7;
        let n = 40;
        let pts = Array2::from_shape_fn((n, 1), |(i, _)| (i as f64 + 1.0).powf(1.3));
        let d = euclidean_from_points(pts.view());
        let adj = adjusted(d.values().mapv(|v| v.powf(alpha)));
        let p = high_affinities(&adj, 1e-6).unwrap();
        let eps = p.epsilon().unwrap();
        let base = p.values()[[0, 1]] * (eps + adj.get(0, 1).powi(2));
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            for j in (i + 1)..n {
                let d2 = adj.get(i, j).powi(2);
                let exact = p.values()[[i, j]] * (eps + d2);
                assert!((exact - base).abs() <= 1e-12 * base);
                if d2 > 1e4 * eps {
                    let v = p.values()[[i, j]] * d2;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        assert!(lo > 0.0 && hi / lo < 1.0 + 1e-3, "{lo} {hi}");
    }

    #[test]
    fn optimizer_equilateral_reaches_zero() {
        let p = high_affinities(&equilateral(), 1e-6).unwrap();
        for init in [Init::Mds, Init::Random] {
            let opts = OptimizerOptions { init, ..Default::default() };
            let res = optimize_embedding(&p, TargetDim::Two, &equilateral(), &mut Rng::new(1), &opts)
                .unwrap();
            assert!(*res.kl_history.last().unwrap() <= 1e-10, "{init:?} {:?}", res.kl_history.last());
            let q = low_affinities(&res.embedding);
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!((q.values()[[i, j]] - 1.0 / 6.0).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn optimizer_history_is_monotone_and_deterministic() {
        let mut rng = Rng::new(8);
        let p = random_p(&mut rng, 30);
        let dummy = adjusted(Array2::zeros((30, 30)));
        let opts = OptimizerOptions {
            init: Init::Random,
            max_iters: 200,
            ..Default::default()
        };
        let a = optimize_embedding(&p, TargetDim::Two, &dummy, &mut Rng::new(4), &opts).unwrap();
        assert!(a.kl_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.kl_history.last() < a.kl_history.first());
        let b = optimize_embedding(&p, TargetDim::Two, &dummy, &mut Rng::new(4), &opts).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.kl_history, b.kl_history);
    }

    #[test]
    fn embedding_validation() {
        assert!(Embedding::new(array![[0.0], [1.0]]).is_err());
        assert!(Embedding::new(array![[0.0, f64::NAN], [1.0, 0.0]]).is_err());
    }
}
