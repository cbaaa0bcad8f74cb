//! Dense rank and nullspace extraction via singular values.

use nalgebra::DMatrix;

/// Relative singular-value threshold used for all rank decisions.
pub const RANK_RTOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RankResult {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Smallest singular value treated as nonzero (0 if rank is 0).
    pub smallest_kept: f64,
    /// Largest singular value below the threshold (0 if full rank).
    pub largest_dropped: f64,
}

/// Rank of a dense matrix with the relative threshold `rtol * s_max`.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> RankResult {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RankResult {
            rank: 0,
            singular_values: Vec::new(),
            smallest_kept: 0.0,
            largest_dropped: 0.0,
        };
    }
    let svd = m.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    summarize(sv, rtol)
}

fn summarize(sv: Vec<f64>, rtol: f64) -> RankResult {
    let smax = sv.first().cloned().unwrap_or(0.0);
    let tol = smax * rtol;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let smallest_kept = if rank > 0 { sv[rank - 1] } else { 0.0 };
    let largest_dropped = if rank < sv.len() { sv[rank] } else { 0.0 };
    RankResult {
        rank,
        singular_values: sv,
        smallest_kept,
        largest_dropped,
    }
}

/// Orthonormal basis of the (right) nullspace at the relative threshold.
pub fn nullspace(m: &DMatrix<f64>, rtol: f64) -> (RankResult, Vec<Vec<f64>>) {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        let basis = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        return (
            RankResult {
                rank: 0,
                singular_values: Vec::new(),
                smallest_kept: 0.0,
                largest_dropped: 0.0,
            },
            basis,
        );
    }
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut pairs: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .cloned()
        .zip(0..)
        .map(|(s, i)| (s, i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let sv: Vec<f64> = pairs.iter().map(|(s, _)| *s).collect();
    let res = summarize(sv, rtol);
    let mut basis = Vec::new();
    let smax = res.singular_values.first().cloned().unwrap_or(0.0);
    for (s, i) in pairs.iter() {
        if *s <= smax * rtol {
            basis.push(vt.row(*i).iter().cloned().collect());
        }
    }
    // nalgebra computes min(nrows, ncols) singular triples; for wide matrices
    // the remaining kernel directions complete the row space orthogonally
    if vt.nrows() < n {
        // complete with the orthogonal complement of the row space
        let q = complete_orthonormal(&vt);
        for v in q {
            basis.push(v);
        }
    }
    (res, basis)
}

/// Complete the rows of `vt` to an orthonormal basis of R^n and return the
/// new vectors.
fn complete_orthonormal(vt: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = vt.ncols();
    let mut rows: Vec<Vec<f64>> = (0..vt.nrows()).map(|i| vt.row(i).iter().cloned().collect()).collect();
    let mut out = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        for r in &rows {
            let dot: f64 = r.iter().zip(&e).map(|(a, b)| a * b).sum();
            for (j, rv) in r.iter().enumerate() {
                e[j] -= dot * rv;
            }
        }
        let norm: f64 = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for x in &mut e {
                *x /= norm;
            }
            rows.push(e.clone());
            out.push(e);
        }
        if rows.len() == n {
            break;
        }
    }
    out
}
