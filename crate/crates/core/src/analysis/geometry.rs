use serde::{Deserialize, Serialize};

use super::pca::pca;
use crate::error::{Error, Result};
use crate::tensor::Mat;

/// Angular bins of the centroid curve traced by one parameter group.
const CURVE_BINS: usize = 36;
/// Samples per polyline segment when measuring curve-to-curve distance.
const SEGMENT_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSeparation {
    /// `min_distance / mean_thickness`.
    pub score: f64,
    pub min_distance: f64,
    pub mean_thickness: f64,
    pub thickness: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn point_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 {
        (p.iter().zip(a).zip(&ab).map(|((pv, av), d)| (pv - av) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(av, d)| av + t * d).collect();
    dist(p, &proj)
}

/// Distance from `p` to a closed polyline.
fn point_curve(p: &[f64], curve: &[Vec<f64>]) -> f64 {
    let n = curve.len();
    if n == 1 {
        return dist(p, &curve[0]);
    }
    (0..n)
        .map(|i| point_segment(p, &curve[i], &curve[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn densify(curve: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = curve.len();
    let mut out = Vec::with_capacity(n * SEGMENT_SAMPLES);
    for i in 0..n {
        let (a, b) = (&curve[i], &curve[(i + 1) % n]);
        for s in 0..SEGMENT_SAMPLES {
            let t = s as f64 / SEGMENT_SAMPLES as f64;
            out.push(a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect());
        }
    }
    out
}

/// Closed centroid curve: points binned by phase angle in their leading principal plane.
fn centroid_curve(points: &Mat) -> Result<Vec<Vec<f64>>> {
    let rep = pca(points, 0.0)?;
    let d = points.cols();
    let k = d.min(2);
    let proj = rep.project(points, k);
    let mut sums = vec![vec![0.0; d]; CURVE_BINS];
    let mut counts = vec![0usize; CURVE_BINS];
    let angle = |i: usize| {
        if k == 2 {
            proj[(i, 1)].atan2(proj[(i, 0)])
        } else {
            proj[(i, 0)].signum() * std::f64::consts::FRAC_PI_2
        }
    };
    // Bins are centred on the first point's angle, so they do not depend on the
    // orientation or handedness of the principal axes.
    let a0 = angle(0);
    for i in 0..points.rows() {
        let ang = (angle(i) - a0).rem_euclid(std::f64::consts::TAU);
        let b = ((ang / std::f64::consts::TAU) * CURVE_BINS as f64 + 0.5) as usize % CURVE_BINS;
        counts[b] += 1;
        for (s, v) in sums[b].iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    let curve: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    Ok(curve)
}

/// Separation of per-parameter orbits in latent space: the smallest distance
/// between any two groups' centroid curves over the mean distance of points to
/// their own curve.
pub fn cycle_separation(groups: &[Mat]) -> Result<CycleSeparation> {
    if groups.len() < 2 {
        return Err(Error::invalid("cycle separation needs at least two parameter groups"));
    }
    let d = groups[0].cols();
    if groups.iter().any(|g| g.cols() != d || g.rows() < 3) {
        return Err(Error::invalid("groups must share dimension and have >= 3 points"));
    }
    let curves = groups.iter().map(centroid_curve).collect::<Result<Vec<_>>>()?;
    let thickness: Vec<f64> = groups
        .iter()
        .zip(&curves)
        .map(|(g, c)| g.iter_rows().map(|p| point_curve(p, c)).sum::<f64>() / g.rows() as f64)
        .collect();
    let dense: Vec<Vec<Vec<f64>>> = curves.iter().map(|c| densify(c)).collect();
    let mut min_distance = f64::INFINITY;
    for a in 0..curves.len() {
        for b in 0..curves.len() {
            if a == b {
                continue;
            }
            for p in &dense[a] {
                min_distance = min_distance.min(point_curve(p, &curves[b]));
            }
        }
    }
    let mean_thickness = thickness.iter().sum::<f64>() / thickness.len() as f64;
    let score = if mean_thickness > 0.0 {
        min_distance / mean_thickness
    } else {
        f64::INFINITY
    };
    Ok(CycleSeparation {
        score,
        min_distance,
        mean_thickness,
        thickness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeparation {
    /// `between_median / within_median`.
    pub ratio: f64,
    /// Median latent distance of position-matched pairs on opposite velocity branches.
    pub between_median: f64,
    /// Median latent distance of position-matched pairs on the same branch.
    pub within_median: f64,
    pub n_between: usize,
    pub n_within: usize,
}

fn median(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Compare latents at equal observed positions on opposite halves of an orbit.
///
/// Pairs `(i, j)` with `|x_i − x_j| < x_tol` and `|x| ≤ central · max|x|` are split by
/// whether their velocities share a sign.
pub fn phase_separation(latent: &Mat, x: &[f64], v: &[f64], x_tol: f64, central: f64) -> Result<PhaseSeparation> {
    let n = latent.rows();
    if x.len() != n || v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len().min(v.len()),
        });
    }
    let xmax = x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let keep: Vec<usize> = (0..n)
        .filter(|&i| x[i].abs() <= central * xmax && v[i] != 0.0)
        .collect();
    let mut between = Vec::new();
    let mut within = Vec::new();
    for (a, &i) in keep.iter().enumerate() {
        for &j in &keep[a + 1..] {
            if (x[i] - x[j]).abs() >= x_tol {
                continue;
            }
            let dz = dist(latent.row(i), latent.row(j));
            if v[i].signum() == v[j].signum() {
                within.push(dz);
            } else {
                between.push(dz);
            }
        }
    }
    if between.is_empty() || within.is_empty() {
        return Err(Error::invalid("no position-matched pairs on one of the branches"));
    }
    let bm = median(&mut between);
    let wm = median(&mut within);
    Ok(PhaseSeparation {
        ratio: if wm > 0.0 { bm / wm } else { f64::INFINITY },
        between_median: bm,
        within_median: wm,
        n_between: between.len(),
        n_within: within.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub median_gap: f64,
    pub max_gap: f64,
    /// Distance from the first point to the nearest point one period later.
    pub return_distance: f64,
    pub closed: bool,
}

/// Closed-curve test: no jump larger than ten median steps, and the curve returns
/// within one median step of its start after `period` samples (±2).
pub fn closure_check(points: &Mat, period: usize) -> Result<ClosureReport> {
    let n = points.rows();
    if period < 3 || n < period + 3 {
        return Err(Error::invalid("closure check needs more than one period of points"));
    }
    let mut gaps: Vec<f64> = (1..n).map(|i| dist(points.row(i), points.row(i - 1))).collect();
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let median_gap = median(&mut gaps);
    let return_distance = (period - 2..=period + 2)
        .map(|k| dist(points.row(0), points.row(k)))
        .fold(f64::INFINITY, f64::min);
    Ok(ClosureReport {
        median_gap,
        max_gap,
        return_distance,
        closed: max_gap < 10.0 * median_gap && return_distance <= median_gap,
    })
}
