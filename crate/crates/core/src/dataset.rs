//! Point clouds, the synthetic generators used in the experiments, and CSV
//! interchange.
//!
//! CSV layout: one row per point, comma separated, `\n` line endings, an
//! optional header row and an optional integer label column. Files written
//! here always carry a header `x1,...,xn[,label]` with the label column last.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{CpmError, Result};
use crate::rng::Rng;

/// `N` samples in ambient dimension `n`, stored row-major, with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(points: Array2<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        let (n_rows, n_cols) = points.dim();
        if n_rows < 2 {
            return Err(CpmError::InvalidParameter(format!(
                "a dataset needs at least 2 points, got {n_rows}"
            )));
        }
        if n_cols < 1 {
            return Err(CpmError::InvalidParameter(
                "a dataset needs at least 1 coordinate".into(),
            ));
        }
        if let Some(((row, col), v)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(CpmError::Parse {
                row: row + 1,
                column: col + 1,
                message: format!("non-finite value {v}"),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != n_rows {
                return Err(CpmError::Contract(format!(
                    "{} labels for {} points",
                    labels.len(),
                    n_rows
                )));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Vec<i64>>) {
        (self.points, self.labels)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        save_csv(path, self.points(), self.labels())
    }
}

/// Reads a dataset. `label_column` is a zero-based column index.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let records = read_records(path)?;
    parse_records(records, has_header, label_column)
}

/// Reads a dataset, detecting a header row (any non-numeric cell in the first
/// row) and taking the column named `label` as the label column.
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let first = records.first().ok_or_else(|| CpmError::Parse {
        row: 0,
        column: 0,
        message: "empty file".into(),
    })?;
    let has_header = first.iter().any(|cell| cell.trim().parse::<f64>().is_err());
    let label_column = if has_header {
        first
            .iter()
            .position(|cell| cell.trim().eq_ignore_ascii_case("label"))
    } else {
        None
    };
    parse_records(records, has_header, label_column)
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CpmError::io(path, io),
            other => CpmError::Parse {
                row: 0,
                column: 0,
                message: format!("{other:?}"),
            },
        })?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CpmError::Parse {
            row: i + 1,
            column: 0,
            message: e.to_string(),
        })?;
        // skip blank lines
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn parse_records(
    records: Vec<csv::StringRecord>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let skip = usize::from(has_header);
    let body = &records[skip.min(records.len())..];
    if body.is_empty() {
        return Err(CpmError::Parse {
            row: skip,
            column: 0,
            message: "empty file".into(),
        });
    }
    let width = body[0].len();
    if let Some(lc) = label_column {
        if lc >= width {
            return Err(CpmError::Parse {
                row: skip + 1,
                column: lc + 1,
                message: format!("label column {} outside {width} columns", lc + 1),
            });
        }
    }
    let n_coords = width - usize::from(label_column.is_some());
    if n_coords == 0 {
        return Err(CpmError::Parse {
            row: skip + 1,
            column: 0,
            message: "no coordinate columns".into(),
        });
    }
    let mut values = Vec::with_capacity(body.len() * n_coords);
    let mut labels = label_column.map(|_| Vec::with_capacity(body.len()));
    for (i, rec) in body.iter().enumerate() {
        let row = i + skip + 1;
        if rec.len() != width {
            return Err(CpmError::Parse {
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            if Some(j) == label_column {
                let label = parse_label(cell).ok_or_else(|| CpmError::Parse {
                    row,
                    column: j + 1,
                    message: format!("label {cell:?} is not an integer"),
                })?;
                labels.as_mut().unwrap().push(label);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| CpmError::Parse {
                row,
                column: j + 1,
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CpmError::Parse {
                    row,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
    }
    let points = Array2::from_shape_vec((body.len(), n_coords), values)
        .expect("row widths checked above");
    Dataset::new(points, labels)
}

fn parse_label(cell: &str) -> Option<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

/// Writes points (and labels as the final column) with a header row.
/// Values use the shortest representation that round-trips exactly.
pub fn save_csv(
    path: impl AsRef<Path>,
    points: ArrayView2<'_, f64>,
    labels: Option<&[i64]>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(labels) = labels {
        if labels.len() != points.nrows() {
            return Err(CpmError::Contract(format!(
                "{} labels for {} points",
                labels.len(),
                points.nrows()
            )));
        }
    }
    let file = File::create(path).map_err(|e| CpmError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header: Vec<String> = (1..=points.ncols()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    let mut text = header.join(",");
    text.push('\n');
    let mut buf = ryu::Buffer::new();
    for (i, row) in points.outer_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                text.push(',');
            }
            text.push_str(format_float(&mut buf, *v));
        }
        if let Some(labels) = labels {
            text.push(',');
            text.push_str(&labels[i].to_string());
        }
        text.push('\n');
    }
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CpmError::io(path, e))
}

pub(crate) fn format_float(buf: &mut ryu::Buffer, v: f64) -> &str {
    if v == 0.0 {
        // ryu keeps the sign of negative zero, which then fails to round-trip byte-for-byte
        // through other tools; zero is zero here.
        return "0.0";
    }
    buf.format(v)
}

/// Uniform samples from the unit l2 ball of R^n.
pub fn generate_uniform_ball(dim: usize, count: usize, rng: &mut Rng) -> Result<Array2<f64>> {
    if dim < 1 || count < 1 {
        return Err(CpmError::InvalidParameter(
            "ball sampling needs dim >= 1 and count >= 1".into(),
        ));
    }
    let mut out = Array2::zeros((count, dim));
    for mut row in out.outer_iter_mut() {
        let radius = rng.uniform().powf(1.0 / dim as f64);
        let dir = random_direction(dim, rng);
        for (x, d) in row.iter_mut().zip(&dir) {
            *x = radius * d;
        }
    }
    Ok(out)
}

fn random_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Class 1: `n_ball` points uniform in the unit ball (label 1). Class 2:
/// `n_shell` points uniform in the shell `inner <= |x| <= outer` (label 2).
pub fn generate_ball_shell(
    dim: usize,
    n_ball: usize,
    n_shell: usize,
    inner: f64,
    outer: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if dim < 2 {
        return Err(CpmError::InvalidParameter(format!(
            "ball-shell needs dim >= 2, got {dim}"
        )));
    }
    if n_ball < 1 || n_shell < 1 {
        return Err(CpmError::InvalidParameter(
            "ball-shell needs at least one point per class".into(),
        ));
    }
    if inner.is_nan() || inner < 1.0 {
        return Err(CpmError::InvalidGeometry(format!(
            "shell inner radius {inner} must be >= 1 so the shell lies outside the ball"
        )));
    }
    if !outer.is_finite() || outer <= inner {
        return Err(CpmError::InvalidGeometry(format!(
            "shell outer radius {outer} must exceed inner radius {inner}"
        )));
    }
    let ball = generate_uniform_ball(dim, n_ball, rng)?;
    let mut points = Array2::zeros((n_ball + n_shell, dim));
    points.slice_mut(ndarray::s![..n_ball, ..]).assign(&ball);
    let n = dim as f64;
    let (lo, hi) = (inner.powf(n), outer.powf(n));
    for i in 0..n_shell {
        let r = (lo + rng.uniform() * (hi - lo))
            .powf(1.0 / n)
            .clamp(inner, outer);
        let dir = random_direction(dim, rng);
        let mut p: Vec<f64> = dir.iter().map(|d| r * d).collect();
        // rounding in the rescale can leave |p| a few ulps outside the band
        for _ in 0..64 {
            let norm = l2(&p);
            let fix = if norm < inner {
                1.0 + f64::EPSILON
            } else if norm > outer {
                1.0 - f64::EPSILON
            } else {
                break;
            };
            p.iter_mut().for_each(|x| *x *= fix);
        }
        points
            .row_mut(n_ball + i)
            .iter_mut()
            .zip(&p)
            .for_each(|(dst, v)| *dst = *v);
    }
    let labels = std::iter::repeat_n(1, n_ball)
        .chain(std::iter::repeat_n(2, n_shell))
        .collect();
    Dataset::new(points, Some(labels))
}

/// Swiss-roll strip `((t+1)cos t, (t+1)sin t)` with `t ~ U[0, 1]`, padded to
/// `total_dim` columns by i.i.d. Gaussian noise of the given variance.
pub fn generate_augmented_swiss_roll(
    count: usize,
    total_dim: usize,
    noise_variance: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if count < 2 {
        return Err(CpmError::InvalidParameter(format!(
            "swiss roll needs at least 2 points, got {count}"
        )));
    }
    if total_dim < 3 {
        return Err(CpmError::InvalidParameter(format!(
            "augmented swiss roll needs total dimension >= 3, got {total_dim}"
        )));
    }
    if !noise_variance.is_finite() || noise_variance < 0.0 {
        return Err(CpmError::InvalidParameter(format!(
            "noise variance must be finite and >= 0, got {noise_variance}"
        )));
    }
    let sd = noise_variance.sqrt();
    let mut points = Array2::zeros((count, total_dim));
    for mut row in points.outer_iter_mut() {
        let t = rng.uniform();
        row[0] = (t + 1.0) * t.cos();
        row[1] = (t + 1.0) * t.sin();
        for j in 2..total_dim {
            row[j] = sd * rng.gaussian();
        }
    }
    Dataset::new(points, None)
}

/// I.i.d. standard Gaussian rows.
pub fn generate_gaussian_cloud(count: usize, dim: usize, rng: &mut Rng) -> Result<Dataset> {
    if count < 2 || dim < 1 {
        return Err(CpmError::InvalidParameter(format!(
            "gaussian cloud needs N >= 2 and dim >= 1, got N={count}, dim={dim}"
        )));
    }
    let points = Array2::from_shape_simple_fn((count, dim), || rng.gaussian());
    Dataset::new(points, None)
}

/// `k` isotropic Gaussian clusters of unit variance, centers drawn from
/// `N(0, center_spread^2 I)`. Labels are `1..=k`.
pub fn generate_gaussian_clusters(
    k: usize,
    per_cluster: usize,
    dim: usize,
    center_spread: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if k < 1 || per_cluster < 1 || dim < 1 || k * per_cluster < 2 {
        return Err(CpmError::InvalidParameter(
            "clusters need k >= 1, per_cluster >= 1, dim >= 1 and at least 2 points".into(),
        ));
    }
    let centers = Array2::from_shape_simple_fn((k, dim), || center_spread * rng.gaussian());
    let mut points = Array2::zeros((k * per_cluster, dim));
    let mut labels = Vec::with_capacity(k * per_cluster);
    for c in 0..k {
        for i in 0..per_cluster {
            let mut row = points.row_mut(c * per_cluster + i);
            for j in 0..dim {
                row[j] = centers[[c, j]] + rng.gaussian();
            }
            labels.push(c as i64 + 1);
        }
    }
    Dataset::new(points, Some(labels))
}

/// Points uniform on the segment from `start` to `end`.
pub fn generate_segment(start: &[f64], end: &[f64], count: usize, rng: &mut Rng) -> Result<Dataset> {
    if start.len() != end.len() || start.is_empty() || count < 2 {
        return Err(CpmError::InvalidParameter(
            "segment endpoints must share a nonzero dimension and count >= 2".into(),
        ));
    }
    let mut points = Array2::zeros((count, start.len()));
    for mut row in points.outer_iter_mut() {
        let t = rng.uniform();
        for (j, x) in row.iter_mut().enumerate() {
            *x = start[j] + t * (end[j] - start[j]);
        }
    }
    Dataset::new(points, None)
}
