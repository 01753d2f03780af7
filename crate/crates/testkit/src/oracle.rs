use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use beamrecall_core::transcribe::Chunk;

pub type DenseMatrix = Vec<Vec<Complex64>>;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, b: &[Complex64]) -> Vec<Complex64> {
    let n = b.len();
    let mut m: DenseMatrix = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm())).unwrap();
        m.swap(col, pivot);
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for r in rest.iter_mut() {
            let f = r[col] / pivot_row[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
        }
    }
    let mut x = vec![Complex64::default(); n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// `R⁻¹d / (dᴴR⁻¹d)` through [`dense_solve`].
pub fn mvdr_oracle(r: &DenseMatrix, d: &[Complex64]) -> Vec<Complex64> {
    let x = dense_solve(r, d);
    let denom: Complex64 = d.iter().zip(&x).map(|(di, xi)| di.conj() * xi).sum();
    x.iter().map(|v| v / denom).collect()
}

fn gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// `A Aᴴ / m + 0.1 I` for a complex Gaussian `A`: Hermitian, well conditioned.
pub fn random_hermitian_pd(rng: &mut impl Rng, m: usize) -> DenseMatrix {
    let a: DenseMatrix = (0..m).map(|_| (0..m).map(|_| gaussian(rng)).collect()).collect();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut v: Complex64 = (0..m).map(|k| a[i][k] * a[j][k].conj()).sum::<Complex64>() / m as f64;
                    if i == j {
                        v += 0.1;
                    }
                    v
                })
                .collect()
        })
        .collect()
}

/// Unit-modulus vector with random phases.
pub fn random_phases(rng: &mut impl Rng, m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
        .collect()
}

/// Ids ranked by full scan: cosine descending, then id ascending.
pub fn brute_force_ranking(rows: &[Vec<f32>], ids: &[u64], query: &[f32], k: usize) -> Vec<(u64, f64)> {
    let mut scored: Vec<(u64, f64)> = rows
        .iter()
        .zip(ids)
        .map(|(row, &id)| {
            let mut s = 0.0;
            for (a, b) in row.iter().zip(query) {
                s += f64::from(*a) * f64::from(*b);
            }
            (id, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Union of inclusive position ranges, computed by marking every position.
pub fn interval_union(ranges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let Some(max) = ranges.iter().map(|r| r.1).max() else {
        return Vec::new();
    };
    let mut marked = vec![false; max + 2];
    for &(a, b) in ranges {
        for m in &mut marked[a..=b] {
            *m = true;
        }
    }
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in marked.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Ids of chunks outside `attended_label` that overlap some attended
/// interval by at least `min_overlap_s`, checked over every pair.
pub fn missed_by_pairwise_overlap(
    attended: &[(f64, f64)],
    chunks: &[Chunk],
    attended_label: &str,
    min_overlap_s: f64,
) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for c in chunks.iter().filter(|c| c.direction_label != attended_label) {
        for &(s, e) in attended {
            let overlap = c.end_s.min(e) - c.start_s.max(s);
            if overlap >= min_overlap_s {
                out.insert(c.chunk_id);
            }
        }
    }
    out
}
