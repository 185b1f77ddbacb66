use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seed::derive_seed;
use crate::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 100;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_FLAT_THRESHOLD_PCT: f64 = 5.0;

/// Result of one k-means run on raw points.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub sse: f64,
    /// SSE after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

pub fn sse_of(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| dist2(p, &centroids[l]))
        .sum()
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations until assignments stop changing or the cap is reached.
fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut history = vec![sse_of(points, &centroids, &labels)];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // an emptied cluster takes the point worst served by its centroid
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, dist2(p, &centroids[labels[i]])))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                centroids[j] = points[far].clone();
                labels[far] = j;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let changed = next != labels;
        labels = next;
        history.push(sse_of(points, &centroids, &labels));
        if !changed {
            break;
        }
    }
    let sse = sse_of(points, &centroids, &labels);
    KMeans {
        centroids,
        labels,
        sse,
        history,
    }
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Infeasible(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0
        || points
            .iter()
            .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Shape(
            "points must share a nonzero dimension and be finite".into(),
        ));
    }
    Ok(())
}

/// Best of `restarts` k-means++ runs. Restart `r` uses
/// `derive_seed(seed, "kmeans/{k}", r)`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    validate(points, k)?;
    let mut best: Option<KMeans> = None;
    for r in 0..restarts.max(1) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("kmeans/{k}"), r as u64));
        let run = lloyd(points, plus_plus_seed(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Lloyd started from `prev` plus the point farthest from it, which cannot
/// end above `prev`'s SSE.
fn inherited(points: &[Vec<f64>], prev: &KMeans) -> KMeans {
    let far = (0..points.len())
        .map(|i| (i, dist2(&points[i], &prev.centroids[prev.labels[i]])))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
        .0;
    let mut start = prev.centroids.clone();
    start.push(points[far].clone());
    lloyd(points, start)
}

/// Best clustering for each `k = 1..=k_max`.
pub fn kmeans_path(
    points: &[Vec<f64>],
    k_max: usize,
    seed: u64,
    restarts: usize,
) -> Result<Vec<KMeans>> {
    validate(points, k_max)?;
    let mut path: Vec<KMeans> = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut run = kmeans(points, k, seed, restarts)?;
        if let Some(prev) = path.last() {
            if run.sse > prev.sse {
                let retry = kmeans(points, k, seed, 2 * restarts.max(1))?;
                if retry.sse < run.sse {
                    run = retry;
                }
            }
            if run.sse > prev.sse {
                let inh = inherited(points, prev);
                if inh.sse < run.sse {
                    run = inh;
                }
            }
        }
        path.push(run);
    }
    Ok(path)
}

/// SSE for `k = 1..=k_max`, non-increasing.
pub fn sse_curve(points: &[Vec<f64>], k_max: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(kmeans_path(points, k_max, seed, DEFAULT_RESTARTS)?
        .into_iter()
        .map(|r| r.sse)
        .collect())
}

/// Percent change `d_κ = (SSE_{κ+1} − SSE_κ) / SSE_κ · 100`.
pub fn diminishing_return(sse: &[f64]) -> Result<Vec<f64>> {
    if sse.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: sse.len(),
        });
    }
    sse.windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                Ok((w[1] - w[0]) / w[0] * 100.0)
            } else {
                Err(Error::DegenerateSeries)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KSelection {
    pub k: usize,
    /// False when no sustained flat region exists and `k` fell back to `k_max`.
    pub flat: bool,
}

/// Smallest `κ` from which every `|d_j|` stays below the threshold.
/// `d[0]` is `d_1`.
pub fn select_k(d: &[f64], flat_threshold_pct: f64) -> KSelection {
    let k_max = d.len() + 1;
    let mut k = None;
    for kappa in (1..=d.len()).rev() {
        if d[kappa - 1].abs() < flat_threshold_pct {
            k = Some(kappa);
        } else {
            break;
        }
    }
    match k {
        Some(k) => KSelection { k, flat: true },
        None => KSelection {
            k: k_max,
            flat: false,
        },
    }
}
