use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CclError, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeans {
    /// `dim x G`, one center per column.
    pub centers: DMatrix<f64>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after every Lloyd iteration.
    pub wcss_trace: Vec<f64>,
}

/// Lloyd's algorithm on the columns of `x`, seeded by greedy farthest-point
/// selection starting from a point drawn with `seed`.
pub fn kmeans(x: &DMatrix<f64>, g: usize, seed: u64) -> Result<KMeans> {
    let n = x.ncols();
    if g == 0 || g > n {
        return Err(CclError::InvalidInput(format!(
            "cannot place {g} centers on {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centers = DMatrix::zeros(x.nrows(), g);
    centers.set_column(0, &x.column(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| (x.column(i) - x.column(first)).norm_squared())
        .collect();
    for c in 1..g {
        let far = argmax(&nearest);
        centers.set_column(c, &x.column(far));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min((x.column(i) - x.column(far)).norm_squared());
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut wcss_trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let (best, _) = nearest_center(&centers, &x.column(i).into_owned());
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }

        let mut sums = DMatrix::zeros(x.nrows(), g);
        let mut counts = vec![0usize; g];
        for (i, &a) in assignments.iter().enumerate() {
            let mut col = sums.column_mut(a);
            col += x.column(i);
            counts[a] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centers.set_column(c, &(sums.column(c) / count as f64));
            }
        }
        for c in (0..g).filter(|&c| counts[c] == 0) {
            // Empty cluster: move it onto the point worst served by the others.
            let dist: Vec<f64> = (0..n)
                .map(|i| nearest_center(&centers, &x.column(i).into_owned()).1)
                .collect();
            centers.set_column(c, &x.column(argmax(&dist)));
            changed = true;
        }

        wcss_trace.push(wcss(x, &centers, &assignments));
        if !changed {
            break;
        }
    }

    Ok(KMeans {
        centers,
        assignments,
        wcss_trace,
    })
}

pub fn kmeans_centers(x: &DMatrix<f64>, g: usize, seed: u64) -> Result<DMatrix<f64>> {
    kmeans(x, g, seed).map(|k| k.centers)
}

fn nearest_center(centers: &DMatrix<f64>, p: &DVector<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, col) in centers.column_iter().enumerate() {
        let d = (col - p).norm_squared();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in v.iter().enumerate() {
        if d > v[best] {
            best = i;
        }
    }
    best
}

fn wcss(x: &DMatrix<f64>, centers: &DMatrix<f64>, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| (x.column(i) - centers.column(a)).norm_squared())
        .sum()
}
