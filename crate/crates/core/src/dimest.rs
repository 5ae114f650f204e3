//! Multiscale intrinsic dimension estimation.
//!
//! The pair-distance density is modelled as `rho(r) = c * n(r) * r^(n(r) - 1)`
//! with a slowly varying dimension `n(r)`. The estimator:
//!
//! 1. counts pairs to get the capacity `C(r)` (fraction of ordered pairs
//!    within distance `r`),
//! 2. differences `C` over quantile bins to get `rho`,
//! 3. fits `log C = log c + n0 * log r` at small scales to get `c` and the
//!    correlation dimension `n0`,
//! 4. for every bin, brute-force searches `n` on a 0.01 grid minimizing
//!    `(rho(r0) - c * n * r0^(n - 1))^2`, using the local log-slope of `rho`
//!    (plus one) as the tie-break anchor,
//! 5. smooths the per-bin estimates with a centered moving average.
//!
//! All radii are in units of the median nonzero pairwise distance.

use serde::{Deserialize, Serialize};

use crate::error::{CpmError, Result};
use crate::metricspace::DistanceMatrix;

/// Step of the brute-force dimension grid.
pub const DIMENSION_GRID_STEP: f64 = 0.01;

/// Number of log-spaced radii used for the small-scale `(c, n0)` fit.
const FIT_GRID_POINTS: usize = 20;

/// Minimum number of usable radii for the small-scale fit.
const MIN_FIT_POINTS: usize = 5;

/// Empirical capacity `C(r)` on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityCurve {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl CapacityCurve {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(CpmError::Contract(format!(
                "{} radii but {} capacity values",
                radii.len(),
                values.len()
            )));
        }
        check_grid(&radii)?;
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CpmError::Contract("capacity values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(CpmError::Contract("capacity must be nondecreasing".into()));
        }
        Ok(Self { radii, values })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Finite-difference density of a capacity curve, one value per grid interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    radii: Vec<f64>,
    values: Vec<f64>,
    bin_widths: Vec<f64>,
}

impl DensityCurve {
    /// Bin centers.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bin_widths(&self) -> &[f64] {
        &self.bin_widths
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Estimated dimension per scale, with the fitted constant `c`, the
/// correlation dimension `n0`, and the distance scale used to normalize radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionCurve {
    radii: Vec<f64>,
    #[serde(rename = "n")]
    n_of_r: Vec<f64>,
    c: f64,
    n0: f64,
    scale: f64,
}

impl DimensionCurve {
    pub fn new(radii: Vec<f64>, n_of_r: Vec<f64>, c: f64, n0: f64, scale: f64) -> Result<Self> {
        if radii.is_empty() || radii.len() != n_of_r.len() {
            return Err(CpmError::Contract(
                "dimension curve needs matching, nonempty radii and values".into(),
            ));
        }
        check_grid(&radii)?;
        if n_of_r.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(CpmError::Contract("dimensions must be finite and positive".into()));
        }
        if !(c > 0.0 && c.is_finite()) || !(scale > 0.0 && scale.is_finite()) || !n0.is_finite() {
            return Err(CpmError::Contract(format!(
                "invalid curve constants c={c}, n0={n0}, scale={scale}"
            )));
        }
        Ok(Self {
            radii,
            n_of_r,
            c,
            n0,
            scale,
        })
    }

    /// A curve with the same dimension at every scale.
    pub fn constant(n: f64, scale: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![n], 1.0, n, scale)
    }

    /// Bin centers, in normalized units.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn n_of_r(&self) -> &[f64] {
        &self.n_of_r
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// Median nonzero pairwise distance of the source matrix.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("curve is plain data")
    }
}

fn check_grid(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(CpmError::InvalidParameter("empty radius grid".into()));
    }
    if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CpmError::InvalidParameter(
            "radii must be finite and nonnegative".into(),
        ));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CpmError::InvalidParameter(
            "radii must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Sorted upper-triangle distances of an `N`-point matrix.
struct SortedPairs {
    sorted: Vec<f64>,
}

impl SortedPairs {
    fn new(mut distances: Vec<f64>) -> Self {
        distances.sort_unstable_by(f64::total_cmp);
        Self { sorted: distances }
    }

    /// Fraction of pairs with distance `<= r`.
    fn capacity(&self, r: f64) -> f64 {
        let count = self.sorted.partition_point(|d| *d <= r);
        count as f64 / self.sorted.len() as f64
    }

    fn capacity_curve(&self, radii: Vec<f64>) -> Result<CapacityCurve> {
        check_grid(&radii)?;
        let values = radii.iter().map(|r| self.capacity(*r)).collect();
        Ok(CapacityCurve { radii, values })
    }
}

/// `C(r) = #{(i, j) : i != j, d_ij <= r} / (N (N - 1))` on each radius.
pub fn empirical_capacity(dist: &DistanceMatrix, radii: &[f64]) -> Result<CapacityCurve> {
    if dist.len() < 2 {
        return Err(CpmError::InvalidParameter(
            "capacity needs at least two points".into(),
        ));
    }
    if radii.first().is_some_and(|r| *r <= 0.0) {
        return Err(CpmError::InvalidParameter("radii must be positive".into()));
    }
    // Unordered pairs: each ordered pair is counted twice in both numerator
    // and denominator.
    SortedPairs::new(dist.upper_triangle()).capacity_curve(radii.to_vec())
}

pub fn empirical_density(capacity: &CapacityCurve) -> Result<DensityCurve> {
    let r = &capacity.radii;
    let c = &capacity.values;
    if r.len() < 2 {
        return Err(CpmError::InvalidParameter(
            "density needs at least two capacity radii".into(),
        ));
    }
    let bins = r.len() - 1;
    let mut radii = Vec::with_capacity(bins);
    let mut values = Vec::with_capacity(bins);
    let mut bin_widths = Vec::with_capacity(bins);
    for k in 0..bins {
        let width = r[k + 1] - r[k];
        radii.push(0.5 * (r[k] + r[k + 1]));
        values.push((c[k + 1] - c[k]) / width);
        bin_widths.push(width);
    }
    Ok(DensityCurve {
        radii,
        values,
        bin_widths,
    })
}

/// Local log-log slope of the density between `bin` and `bin + 1`, plus one.
///
/// Returns `Ok(None)` when either density is zero. The value is not clamped
/// and may be negative.
pub fn initial_dimension_guess(density: &DensityCurve, bin: usize) -> Result<Option<f64>> {
    if bin + 1 >= density.len() {
        return Err(CpmError::InvalidParameter(format!(
            "bin {bin} has no successor in a {}-bin density",
            density.len()
        )));
    }
    let (r0, r1) = (density.radii[bin], density.radii[bin + 1]);
    let (p0, p1) = (density.values[bin], density.values[bin + 1]);
    if !(p0 > 0.0 && p1 > 0.0 && r0 > 0.0) {
        return Ok(None);
    }
    Ok(Some(1.0 + (p1.ln() - p0.ln()) / (r1.ln() - r0.ln())))
}

/// Least-squares fit of `log C(r) = log c + n0 log r` over the grid radii up
/// to the first radius where `C` reaches `small_scale_fraction`, skipping
/// radii with `C = 0`. Returns `(c, n0)`.
pub fn fit_c_and_n0(capacity: &CapacityCurve, small_scale_fraction: f64) -> Result<(f64, f64)> {
    if !(small_scale_fraction > 0.0 && small_scale_fraction <= 1.0) {
        return Err(CpmError::InvalidParameter(format!(
            "small-scale fraction must lie in (0, 1], got {small_scale_fraction}"
        )));
    }
    let cutoff = capacity
        .values
        .iter()
        .position(|c| *c >= small_scale_fraction)
        .unwrap_or(capacity.values.len() - 1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = capacity.radii[..=cutoff]
        .iter()
        .zip(&capacity.values[..=cutoff])
        .filter(|(r, c)| **c > 0.0 && **r > 0.0)
        .map(|(r, c)| (r.ln(), c.ln()))
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return Err(CpmError::InsufficientData(format!(
            "only {} radii with nonzero capacity below the small-scale cutoff (need {MIN_FIT_POINTS}); use more samples or a larger cutoff fraction",
            xs.len()
        )));
    }
    let (slope, intercept) = least_squares_line(&xs, &ys).ok_or_else(|| {
        CpmError::InsufficientData("small-scale radii are all equal".into())
    })?;
    Ok((intercept.exp(), slope))
}

/// Ordinary least squares `y = slope * x + intercept`.
pub(crate) fn least_squares_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Closed search interval for the brute-force dimension search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionRange {
    pub min: f64,
    pub max: f64,
}

impl DimensionRange {
    /// `[0.1, 3 * ambient_dim]`.
    pub fn for_ambient_dim(ambient_dim: usize) -> Self {
        Self {
            min: 0.1,
            max: 3.0 * ambient_dim.max(1) as f64,
        }
    }

    fn grid(&self) -> impl Iterator<Item = f64> {
        // integer hundredths so grid values like 1.0 and 2.0 are exact
        let lo = (self.min / DIMENSION_GRID_STEP).round() as i64;
        let hi = (self.max / DIMENSION_GRID_STEP).round() as i64;
        (lo..=hi).map(|k| k as f64 / 100.0)
    }
}

/// `argmin_n (density_value - c * n * r0^(n - 1))^2` over the grid of `range`.
///
/// For `r0 < 1` the model rises and then falls in `n`, so the residual often
/// has two exact zeros. The grid cannot tell such solutions apart: every grid
/// minimum that brackets a zero counts as a tie, and the one nearest `anchor`
/// (the initial guess, or `n0` when no guess is available) wins. Without any
/// zero the plain argmin is taken. Remaining ties go to the smaller `n`.
pub fn refine_dimension_at_scale(
    density_value: f64,
    r0: f64,
    c: f64,
    anchor: f64,
    range: DimensionRange,
) -> f64 {
    let log_r0 = r0.ln();
    let model = |n: f64| c * n * ((n - 1.0) * log_r0).exp();
    let grid: Vec<f64> = range.grid().collect();
    let diffs: Vec<f64> = grid.iter().map(|&n| density_value - model(n)).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return anchor.clamp(range.min, range.max);
    }
    let nearest_anchor = |a: &usize, b: &usize| {
        (grid[*a] - anchor)
            .abs()
            .total_cmp(&(grid[*b] - anchor).abs())
            .then(grid[*a].total_cmp(&grid[*b]))
    };

    let mut roots: Vec<usize> = Vec::new();
    for k in 0..grid.len() {
        if diffs[k] == 0.0 {
            roots.push(k);
        } else if k + 1 < grid.len() && diffs[k + 1] != 0.0 && (diffs[k] > 0.0) != (diffs[k + 1] > 0.0) {
            roots.push(if diffs[k].abs() <= diffs[k + 1].abs() { k } else { k + 1 });
        }
    }
    let pick = if roots.is_empty() {
        let best = diffs.iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
        (0..grid.len())
            .filter(|&k| diffs[k] * diffs[k] == best)
            .min_by(nearest_anchor)
    } else {
        roots.into_iter().min_by(nearest_anchor)
    };
    grid[pick.expect("grid is nonempty")].clamp(range.min, range.max)
}

/// Tuning for [`dimension_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimEstOptions {
    /// Number of quantile bins `M`.
    pub num_scales: usize,
    pub smoothing_width: usize,
    /// Pair quantile below which the `(c, n0)` fit is done.
    pub small_scale_fraction: f64,
    pub range: DimensionRange,
}

impl DimEstOptions {
    pub fn for_ambient_dim(ambient_dim: usize) -> Self {
        Self {
            num_scales: 50,
            smoothing_width: 3,
            small_scale_fraction: 0.05,
            range: DimensionRange::for_ambient_dim(ambient_dim),
        }
    }
}

/// Result of [`dimension_curve`]: the curve plus any warnings raised.
#[derive(Debug, Clone)]
pub struct DimensionEstimate {
    pub curve: DimensionCurve,
    pub density: DensityCurve,
    pub warnings: Vec<String>,
}

/// Full multiscale estimate from a distance matrix.
pub fn dimension_curve(dist: &DistanceMatrix, opts: &DimEstOptions) -> Result<DimensionEstimate> {
    let m = opts.num_scales;
    if m < 4 {
        return Err(CpmError::InvalidParameter(format!(
            "need at least 4 scales, got {m}"
        )));
    }
    if dist.len() < 2 {
        return Err(CpmError::InvalidParameter(
            "dimension estimation needs at least two points".into(),
        ));
    }
    if !(opts.range.min > 0.0 && opts.range.max >= opts.range.min) {
        return Err(CpmError::InvalidParameter(format!(
            "invalid dimension range {:?}",
            opts.range
        )));
    }
    let mut warnings = Vec::new();
    let mut pairs = SortedPairs::new(dist.upper_triangle());
    let first_nonzero = pairs.sorted.partition_point(|d| *d <= 0.0);
    if first_nonzero == pairs.sorted.len() {
        return Err(CpmError::DegenerateData(
            "all pairwise distances are zero".into(),
        ));
    }
    let scale = {
        let nz = &pairs.sorted[first_nonzero..];
        let mid = nz.len() / 2;
        if nz.len() % 2 == 1 {
            nz[mid]
        } else {
            0.5 * (nz[mid - 1] + nz[mid])
        }
    };
    pairs.sorted.iter_mut().for_each(|d| *d /= scale);
    let nonzero = &pairs.sorted[first_nonzero..];
    if nonzero.first() == nonzero.last() {
        return Err(CpmError::DegenerateData(
            "all nonzero pairwise distances are equal".into(),
        ));
    }
    if pairs.sorted.len() < 10 * m {
        let msg = format!(
            "only {} pairs for {m} scales (recommended at least {}); dimension estimates will be noisy",
            pairs.sorted.len(),
            10 * m
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let quantile = |q: f64| -> f64 {
        let idx = (q * (nonzero.len() - 1) as f64).round() as usize;
        nonzero[idx.min(nonzero.len() - 1)]
    };

    // Quantile bin edges over the nonzero distances, duplicates collapsed.
    let mut edges: Vec<f64> = (0..=m).map(|k| quantile(k as f64 / m as f64)).collect();
    edges.dedup();
    let capacity = pairs.capacity_curve(edges)?;
    let density = empirical_density(&capacity)?;

    let (c, n0) = fit_small_scale(&pairs, nonzero, opts.small_scale_fraction, &mut warnings)?;

    let bins = density.len();
    let raw: Vec<f64> = (0..bins)
        .map(|k| {
            let guess = if bins < 2 {
                None
            } else if k + 1 < bins {
                initial_dimension_guess(&density, k).ok().flatten()
            } else {
                initial_dimension_guess(&density, k - 1).ok().flatten()
            };
            let anchor = guess.unwrap_or(n0);
            refine_dimension_at_scale(density.values[k], density.radii[k], c, anchor, opts.range)
        })
        .collect();
    let smoothed = moving_average(&raw, opts.smoothing_width)
        .into_iter()
        .map(|n| n.clamp(opts.range.min, opts.range.max))
        .collect();
    let curve = DimensionCurve::new(density.radii.clone(), smoothed, c, n0, scale)?;
    Ok(DimensionEstimate {
        curve,
        density,
        warnings,
    })
}

fn fit_small_scale(
    pairs: &SortedPairs,
    nonzero: &[f64],
    fraction: f64,
    warnings: &mut Vec<String>,
) -> Result<(f64, f64)> {
    let mut fraction = fraction;
    loop {
        let hi_idx = ((fraction * nonzero.len() as f64) as usize).min(nonzero.len() - 1);
        let lo_idx = ((fraction / 50.0 * nonzero.len() as f64) as usize).min(hi_idx);
        let (lo, hi) = (nonzero[lo_idx], nonzero[hi_idx]);
        let attempt = if hi > lo {
            let ratio = (hi / lo).ln() / (FIT_GRID_POINTS - 1) as f64;
            let mut radii: Vec<f64> = (0..FIT_GRID_POINTS)
                .map(|i| lo * (ratio * i as f64).exp())
                .collect();
            radii[FIT_GRID_POINTS - 1] = hi;
            radii.dedup();
            pairs
                .capacity_curve(radii)
                .and_then(|cap| fit_c_and_n0(&cap, fraction))
        } else {
            Err(CpmError::InsufficientData(
                "small-scale radius range is empty".into(),
            ))
        };
        match attempt {
            Ok(fit) => return Ok(fit),
            Err(e) if fraction < 1.0 => {
                let next = (fraction * 2.0).min(1.0);
                let msg = format!(
                    "small-scale fit failed at pair fraction {fraction} ({e}); retrying at {next}"
                );
                log::warn!("{msg}");
                warnings.push(msg);
                fraction = next;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Centered moving average; the window is truncated at the ends.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return values.to_vec();
    }
    let before = (width - 1) / 2;
    let after = width - 1 - before;
    (0..values.len())
        .map(|k| {
            let lo = k.saturating_sub(before);
            let hi = (k + after).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// `n_m(r)` by linear interpolation between bin centers, constant outside.
pub fn n_m_at(curve: &DimensionCurve, r: f64) -> f64 {
    let radii = &curve.radii;
    let n = &curve.n_of_r;
    if r <= radii[0] {
        return n[0];
    }
    let last = radii.len() - 1;
    if r >= radii[last] {
        return n[last];
    }
    let k = radii.partition_point(|x| *x <= r) - 1;
    if radii[k] == r {
        return n[k];
    }
    let t = (r - radii[k]) / (radii[k + 1] - radii[k]);
    n[k] + t * (n[k + 1] - n[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metricspace::MetricKind;
    use ndarray::array;

    fn matrix(values: ndarray::Array2<f64>) -> DistanceMatrix {
        DistanceMatrix::new(values, MetricKind::Euclidean).unwrap()
    }

    #[test]
    fn capacity_single_pair_is_inclusive() {
        let d = matrix(array![[0.0, 1.0], [1.0, 0.0]]);
        let cap = empirical_capacity(&d, &[0.5, 1.0]).unwrap();
        assert_eq!(cap.values(), &[0.0, 1.0]);
    }

    #[test]
    fn capacity_rejects_bad_grids() {
        let d = matrix(array![[0.0, 1.0], [1.0, 0.0]]);
        assert!(empirical_capacity(&d, &[]).is_err());
        assert!(empirical_capacity(&d, &[1.0, 1.0]).is_err());
        assert!(empirical_capacity(&d, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn density_finite_difference() {
        let cap = CapacityCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 1.0]).unwrap();
        let rho = empirical_density(&cap).unwrap();
        assert_eq!(rho.values(), &[0.5, 0.5]);
        assert_eq!(rho.radii(), &[0.5, 1.5]);

        let flat = CapacityCurve::new(vec![1.0, 2.0, 3.0], vec![0.2, 0.2, 0.9]).unwrap();
        assert_eq!(empirical_density(&flat).unwrap().values()[0], 0.0);

        let short = CapacityCurve::new(vec![1.0], vec![0.5]).unwrap();
        assert!(empirical_density(&short).is_err());
    }

    #[test]
    fn density_integrates_to_capacity_difference() {
        let radii = vec![0.1, 0.3, 0.35, 0.9, 1.7];
        let cap = CapacityCurve::new(radii, vec![0.01, 0.2, 0.21, 0.8, 1.0]).unwrap();
        let rho = empirical_density(&cap).unwrap();
        let total: f64 = rho.values().iter().zip(rho.bin_widths()).map(|(v, w)| v * w).sum();
        assert!((total - (1.0 - 0.01)).abs() < 1e-12);
    }

    fn density(radii: Vec<f64>, values: Vec<f64>) -> DensityCurve {
        let bin_widths = vec![1.0; radii.len()];
        DensityCurve {
            radii,
            values,
            bin_widths,
        }
    }

    #[test]
    fn guess_from_power_law() {
        // rho = c n r^(n-1) with n = 2
        let d = density(vec![0.5, 0.8], vec![2.0 * 0.5, 2.0 * 0.8]);
        let g = initial_dimension_guess(&d, 0).unwrap().unwrap();
        assert!((g - 2.0).abs() < 1e-12);

        let flat = density(vec![0.5, 0.8], vec![0.3, 0.3]);
        assert_eq!(initial_dimension_guess(&flat, 0).unwrap(), Some(1.0));

        let steep = density(vec![1.0, 2.0], vec![1.0, 0.01]);
        assert!(initial_dimension_guess(&steep, 0).unwrap().unwrap() < 0.0);

        let empty = density(vec![1.0, 2.0], vec![0.0, 1.0]);
        assert_eq!(initial_dimension_guess(&empty, 0).unwrap(), None);
        assert!(initial_dimension_guess(&empty, 1).is_err());
    }

    #[test]
    fn fit_exact_power_laws() {
        let radii: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
        let cube: Vec<f64> = radii.iter().map(|r| r.powi(3)).collect();
        let (c, n0) = fit_c_and_n0(&CapacityCurve::new(radii.clone(), cube).unwrap(), 1.0).unwrap();
        assert!((n0 - 3.0).abs() < 1e-10 && (c - 1.0).abs() < 1e-10);

        let half_sq: Vec<f64> = radii.iter().map(|r| 0.5 * r * r).collect();
        let (c, n0) =
            fit_c_and_n0(&CapacityCurve::new(radii, half_sq).unwrap(), 1.0).unwrap();
        assert!((n0 - 2.0).abs() < 1e-10 && (c - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fit_needs_five_points() {
        let cap = CapacityCurve::new(vec![0.1, 0.2, 0.3, 0.4], vec![0.001, 0.008, 0.027, 0.064])
            .unwrap();
        assert!(matches!(
            fit_c_and_n0(&cap, 1.0),
            Err(CpmError::InsufficientData(_))
        ));
    }

    #[test]
    fn refine_recovers_planted_dimension() {
        let (c, r0, n) = (1.0, 0.5, 3.0);
        let rho = c * n * f64::powf(r0, n - 1.0);
        let got = refine_dimension_at_scale(rho, r0, c, 2.0, DimensionRange::for_ambient_dim(5));
        assert!((got - 3.0).abs() <= 0.01, "{got}");
    }

    #[test]
    fn refine_zero_density_matches_brute_force() {
        let range = DimensionRange::for_ambient_dim(3);
        // r0 > 1: model increases in n, smallest residual at the lower end
        assert_eq!(refine_dimension_at_scale(0.0, 2.0, 1.0, 2.0, range), range.min);
        // r0 < 1: brute-force oracle over the same grid
        let r0: f64 = 0.5;
        let mut best = (f64::INFINITY, 0.0);
        let mut k = 10;
        while k <= 900 {
            let n = k as f64 / 100.0;
            let res = (n * r0.powf(n - 1.0)).powi(2);
            if res < best.0 {
                best = (res, n);
            }
            k += 1;
        }
        assert_eq!(refine_dimension_at_scale(0.0, r0, 1.0, 2.0, range), best.1);
        assert_eq!(best.1, 9.0);
    }

    #[test]
    fn refine_tie_goes_to_anchor() {
        // n * 0.5^(n-1) equals 1 at both n = 1 and n = 2
        let range = DimensionRange::for_ambient_dim(3);
        assert_eq!(refine_dimension_at_scale(1.0, 0.5, 1.0, 1.2, range), 1.0);
        assert_eq!(refine_dimension_at_scale(1.0, 0.5, 1.0, 1.8, range), 2.0);
    }

    #[test]
    fn refine_off_grid_roots_follow_anchor() {
        // both zeros of rho - n r0^(n-1) fall between grid points
        let (r0, n_hi): (f64, f64) = (0.4, 3.004);
        let rho = n_hi * r0.powf(n_hi - 1.0);
        let f = |n: f64| rho - n * r0.powf(n - 1.0);
        let (mut a, mut b) = (0.1, -1.0 / r0.ln());
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (f(a) > 0.0) == (f(m) > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        let n_lo = 0.5 * (a + b);
        let range = DimensionRange::for_ambient_dim(3);
        let snap = |n: f64| (n * 100.0).round() / 100.0;
        assert_eq!(refine_dimension_at_scale(rho, r0, 1.0, 2.5, range), snap(n_hi));
        assert_eq!(refine_dimension_at_scale(rho, r0, 1.0, 0.9, range), snap(n_lo));
    }

    #[test]
    fn interpolation_rules() {
        let curve = DimensionCurve::new(vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 5.0], 1.0, 2.0, 1.0)
            .unwrap();
        assert_eq!(n_m_at(&curve, 2.0), 4.0);
        assert_eq!(n_m_at(&curve, 1.5), 3.0);
        assert_eq!(n_m_at(&curve, 10.0), 5.0);
        assert_eq!(n_m_at(&curve, 0.0), 2.0);
    }

    #[test]
    fn moving_average_truncates_at_ends() {
        let v = moving_average(&[1.0, 2.0, 6.0, 3.0], 3);
        assert_eq!(v, vec![1.5, 3.0, 11.0 / 3.0, 4.5]);
        assert_eq!(moving_average(&[1.0, 2.0], 1), vec![1.0, 2.0]);
    }

    #[test]
    fn tiny_input_warns_but_produces_curve() {
        let d = matrix(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]]);
        let est = dimension_curve(&d, &DimEstOptions::for_ambient_dim(2)).unwrap();
        assert!(!est.warnings.is_empty());
        assert!(!est.curve.n_of_r().is_empty());
    }

    #[test]
    fn all_zero_distances_are_degenerate() {
        let d = matrix(ndarray::Array2::zeros((4, 4)));
        assert!(matches!(
            dimension_curve(&d, &DimEstOptions::for_ambient_dim(2)),
            Err(CpmError::DegenerateData(_))
        ));
    }

    #[test]
    fn curve_json_schema() {
        let curve = DimensionCurve::new(vec![0.5, 1.0], vec![2.0, 2.5], 0.7, 2.1, 3.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&curve.to_json()).unwrap();
        for key in ["radii", "n", "c", "n0", "scale"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: DimensionCurve = serde_json::from_str(&curve.to_json()).unwrap();
        assert_eq!(back, curve);
    }
}
