//! Embedding quality measures: Shepard data with a Spearman summary, cluster
//! variances, cluster-neighbourhood proximity error, and a crowding score for
//! the ball-and-shell data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::dataset::format_float;
use crate::embed::Embedding;
use crate::error::{CpmError, Result};
use crate::metricspace::DistanceMatrix;

/// `(original, embedded)` distance for each unordered pair `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShepardData {
    pairs: Vec<(f64, f64)>,
}

impl ShepardData {
    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Two columns `orig,emb` with a header row.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = ryu::Buffer::new();
        let mut buf2 = ryu::Buffer::new();
        write_table(
            path.as_ref(),
            "orig,emb",
            self.pairs
                .iter()
                .map(|(a, b)| format!("{},{}", format_float(&mut buf, *a), format_float(&mut buf2, *b))),
        )
    }
}

pub(crate) fn write_table(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| CpmError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = String::from(header);
    body.push('\n');
    for row in rows {
        body.push_str(&row);
        body.push('\n');
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CpmError::io(path, e))
}

pub fn shepard_pairs(orig: &DistanceMatrix, emb: &Embedding) -> Result<ShepardData> {
    let n = orig.len();
    if emb.len() != n {
        return Err(CpmError::Contract(format!(
            "original data has {n} points, embedding has {}",
            emb.len()
        )));
    }
    let y = emb.coords();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let e = y
                .row(i)
                .iter()
                .zip(y.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            pairs.push((orig.get(i, j), e));
        }
    }
    Ok(ShepardData { pairs })
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation between the two Shepard columns.
pub fn spearman_rank_correlation(data: &ShepardData) -> Result<f64> {
    if data.len() < 2 {
        return Err(CpmError::InsufficientData(
            "Spearman correlation needs at least two pairs".into(),
        ));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = data.pairs.iter().copied().unzip();
    pearson(&average_ranks(&a), &average_ranks(&b)).ok_or_else(|| {
        CpmError::DegenerateData("a Shepard column is constant; correlation is undefined".into())
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ClusterVariance {
    pub label: i64,
    pub variance: f64,
    /// `variance / max variance`.
    pub normalized: f64,
}

fn group_rows(labels: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(*l).or_default().push(i);
    }
    groups
}

/// Mean squared distance to the cluster mean, per label (ascending).
pub fn cluster_variances(points: ArrayView2<'_, f64>, labels: &[i64]) -> Result<Vec<ClusterVariance>> {
    if labels.len() != points.nrows() {
        return Err(CpmError::Contract(format!(
            "{} labels for {} points",
            labels.len(),
            points.nrows()
        )));
    }
    if labels.is_empty() {
        return Err(CpmError::Contract("no points to group".into()));
    }
    let d = points.ncols();
    let mut out: Vec<ClusterVariance> = group_rows(labels)
        .into_iter()
        .map(|(label, rows)| {
            let mut mean = vec![0.0; d];
            for &i in &rows {
                for (m, x) in mean.iter_mut().zip(points.row(i)) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
            let variance = rows
                .iter()
                .map(|&i| {
                    points
                        .row(i)
                        .iter()
                        .zip(&mean)
                        .map(|(x, m)| (x - m) * (x - m))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / rows.len() as f64;
            ClusterVariance {
                label,
                variance,
                normalized: 0.0,
            }
        })
        .collect();
    let max = out.iter().map(|c| c.variance).fold(0.0, f64::max);
    if max > 0.0 {
        out.iter_mut().for_each(|c| c.normalized = c.variance / max);
    }
    Ok(out)
}

pub fn save_variance_csv(path: impl AsRef<Path>, variances: &[ClusterVariance]) -> Result<()> {
    let mut b1 = ryu::Buffer::new();
    let mut b2 = ryu::Buffer::new();
    write_table(
        path.as_ref(),
        "label,variance,normalized",
        variances.iter().map(|c| {
            format!(
                "{},{},{}",
                c.label,
                format_float(&mut b1, c.variance),
                format_float(&mut b2, c.normalized)
            )
        }),
    )
}

/// Average pairwise Euclidean distance between every two clusters. Returns
/// the sorted labels and the `K x K` matrix in that order.
pub fn cluster_distance_matrix(
    points: ArrayView2<'_, f64>,
    labels: &[i64],
) -> Result<(Vec<i64>, Array2<f64>)> {
    if labels.len() != points.nrows() {
        return Err(CpmError::Contract(format!(
            "{} labels for {} points",
            labels.len(),
            points.nrows()
        )));
    }
    let groups: Vec<(i64, Vec<usize>)> = group_rows(labels).into_iter().collect();
    let k = groups.len();
    let mut out = Array2::<f64>::zeros((k, k));
    for a in 0..k {
        for b in (a + 1)..k {
            let mut total = 0.0;
            for &i in &groups[a].1 {
                for &j in &groups[b].1 {
                    total += points
                        .row(i)
                        .iter()
                        .zip(points.row(j).iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                }
            }
            let mean = total / (groups[a].1.len() * groups[b].1.len()) as f64;
            out[[a, b]] = mean;
            out[[b, a]] = mean;
        }
    }
    Ok((groups.into_iter().map(|g| g.0).collect(), out))
}

/// Binary neighbour matrix: row `i` marks the `floor(p (K - 1))` clusters
/// nearest to cluster `i` (ties to the smaller index).
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    entries: Array2<u8>,
    percentile: f64,
}

impl ProximityMatrix {
    pub fn entries(&self) -> ArrayView2<'_, u8> {
        self.entries.view()
    }

    pub fn percentile(&self) -> f64 {
        self.percentile
    }

    pub fn neighbors_per_row(&self) -> usize {
        self.entries.row(0).iter().map(|v| *v as usize).sum()
    }
}

/// Neighbour count for percentile `p` among `k` clusters.
pub fn neighbor_count(p: f64, k: usize) -> usize {
    (p * (k - 1) as f64 + 1e-9).floor() as usize
}

pub fn proximity_matrix(dist_between_clusters: ArrayView2<'_, f64>, p: f64) -> Result<ProximityMatrix> {
    let (k, c) = dist_between_clusters.dim();
    if k != c || k < 2 {
        return Err(CpmError::Contract(format!(
            "cluster distance matrix must be square with K >= 2, got {k}x{c}"
        )));
    }
    if !(p > 0.0 && p <= 0.5) {
        return Err(CpmError::InvalidParameter(format!(
            "percentile must lie in (0, 0.5], got {p}"
        )));
    }
    for i in 0..k {
        if dist_between_clusters[[i, i]] != 0.0 {
            return Err(CpmError::Contract("cluster distance diagonal must be zero".into()));
        }
        for j in 0..i {
            if dist_between_clusters[[i, j]] != dist_between_clusters[[j, i]] {
                return Err(CpmError::Contract("cluster distances must be symmetric".into()));
            }
        }
    }
    let count = neighbor_count(p, k);
    let mut entries = Array2::<u8>::zeros((k, k));
    for i in 0..k {
        let mut others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            dist_between_clusters[[i, a]]
                .total_cmp(&dist_between_clusters[[i, b]])
                .then(a.cmp(&b))
        });
        for &j in others.iter().take(count) {
            entries[[i, j]] = 1;
        }
    }
    Ok(ProximityMatrix {
        entries,
        percentile: p,
    })
}

/// Fraction of original neighbour relations missing after embedding, per
/// percentile. When a percentile selects no neighbours the error is 0.
pub fn proximity_error_curve(
    orig: ArrayView2<'_, f64>,
    emb: &Embedding,
    labels: &[i64],
    p_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if emb.len() != orig.nrows() {
        return Err(CpmError::Contract(format!(
            "original data has {} points, embedding has {}",
            orig.nrows(),
            emb.len()
        )));
    }
    if p_grid.is_empty() {
        return Err(CpmError::InvalidParameter("empty percentile grid".into()));
    }
    let (names, d_orig) = cluster_distance_matrix(orig, labels)?;
    if names.len() < 2 {
        return Err(CpmError::Contract(
            "proximity error needs at least two clusters".into(),
        ));
    }
    let (_, d_emb) = cluster_distance_matrix(emb.coords(), labels)?;
    p_grid
        .iter()
        .map(|&p| {
            if neighbor_count(p, names.len()) == 0 {
                log::warn!("percentile {p} gives no neighbours among {} clusters", names.len());
            }
            let a = proximity_matrix(d_orig.view(), p)?;
            let b = proximity_matrix(d_emb.view(), p)?;
            let total: usize = a.entries.iter().map(|v| *v as usize).sum();
            let lost = a
                .entries
                .iter()
                .zip(b.entries.iter())
                .filter(|(x, y)| **x == 1 && **y == 0)
                .count();
            let err = if total == 0 {
                0.0
            } else {
                lost as f64 / total as f64
            };
            Ok((p, err))
        })
        .collect()
}

pub fn save_proximity_csv(path: impl AsRef<Path>, curve: &[(f64, f64)]) -> Result<()> {
    let mut b1 = ryu::Buffer::new();
    let mut b2 = ryu::Buffer::new();
    write_table(
        path.as_ref(),
        "p,error",
        curve
            .iter()
            .map(|(p, e)| format!("{},{}", format_float(&mut b1, *p), format_float(&mut b2, *e))),
    )
}

/// Embedded points in source-row order with their row index, for tracing
/// trajectories (e.g. rotation sequences) by eye.
pub fn save_trajectory_csv(
    path: impl AsRef<Path>,
    emb: &Embedding,
    labels: Option<&[i64]>,
) -> Result<()> {
    let mut header: Vec<String> = vec!["index".into()];
    header.extend((1..=emb.dim()).map(|j| format!("y{j}")));
    if labels.is_some() {
        header.push("label".into());
    }
    let mut buf = ryu::Buffer::new();
    let rows = emb.coords().outer_iter().enumerate().map(|(i, row)| {
        let mut cells = vec![i.to_string()];
        cells.extend(row.iter().map(|v| format_float(&mut buf, *v).to_owned()));
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        cells.join(",")
    }).collect::<Vec<_>>();
    write_table(path.as_ref(), &header.join(","), rows.into_iter())
}

/// Fraction of class-2 (shell) points farther from the class-1 centroid than
/// the median class-1 point. 1.0 is a clean separation, about 0.5 full overlap.
pub fn crowding_overlap_score(emb: &Embedding, labels: &[i64]) -> Result<f64> {
    if labels.len() != emb.len() {
        return Err(CpmError::Contract(format!(
            "{} labels for {} points",
            labels.len(),
            emb.len()
        )));
    }
    if let Some(other) = labels.iter().find(|l| **l != 1 && **l != 2) {
        return Err(CpmError::Contract(format!(
            "crowding score expects labels 1 (ball) and 2 (shell), found {other}"
        )));
    }
    let y = emb.coords();
    let ball: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let shell: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 2).collect();
    if ball.is_empty() || shell.is_empty() {
        return Err(CpmError::Contract(
            "crowding score needs both class 1 and class 2".into(),
        ));
    }
    let mut center = vec![0.0; y.ncols()];
    for &i in &ball {
        for (c, v) in center.iter_mut().zip(y.row(i)) {
            *c += v;
        }
    }
    center.iter_mut().for_each(|c| *c /= ball.len() as f64);
    let radius = |i: usize| -> f64 {
        y.row(i)
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut ball_r: Vec<f64> = ball.iter().map(|&i| radius(i)).collect();
    ball_r.sort_unstable_by(f64::total_cmp);
    let mid = ball_r.len() / 2;
    let median = if ball_r.len() % 2 == 1 {
        ball_r[mid]
    } else {
        0.5 * (ball_r[mid - 1] + ball_r[mid])
    };
    let outside = shell.iter().filter(|&&i| radius(i) > median).count();
    Ok(outside as f64 / shell.len() as f64)
}
