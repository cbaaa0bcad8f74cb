//! Periodic 4-d cubical charts and cell indexing.
//!
//! A chart is a periodic lattice with sides `N1..N4` and a constant diagonal
//! metric `g = (g1..g4)` of squared edge lengths. An r-cell is a pair
//! (base vertex, direction set); direction sets of each degree are kept in
//! lexicographic order. Vertices are indexed x4-fastest:
//!
//!   idx = ((v1*N2 + v2)*N3 + v3)*N4 + v4
//!
//! and the flat index of an r-cell is `vertex * nsets(r) + set_pos`. The same
//! ordering governs every serialized buffer.

use serde::{Deserialize, Serialize};

/// Direction sets per degree, as sorted direction lists.
pub const DIR_SETS: [&[&[usize]]; 5] = [
    &[&[]],
    &[&[0], &[1], &[2], &[3]],
    &[&[0, 1], &[0, 2], &[0, 3], &[1, 2], &[1, 3], &[2, 3]],
    &[&[0, 1, 2], &[0, 1, 3], &[0, 2, 3], &[1, 2, 3]],
    &[&[0, 1, 2, 3]],
];

/// Complementary set position for each degree-2 set: pairs (01,23), (02,13), (03,12).
pub const COMPLEMENT_2: [usize; 6] = [5, 4, 3, 2, 1, 0];

/// Sign of the permutation (S, S^c) of (0,1,2,3) for each degree-2 set,
/// in `DIR_SETS[2]` order: 01|23 -> +, 02|13 -> -, 03|12 -> +, 12|03 -> +,
/// 13|02 -> -, 23|01 -> +.
pub const SPLIT_SIGN_2: [f64; 6] = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0];

/// Number of direction sets of a given degree.
pub fn nsets(degree: usize) -> usize {
    DIR_SETS[degree].len()
}

/// Sign of the permutation taking (S, S^c) to (0,1,2,3), any degree.
pub fn split_sign(degree: usize, set_pos: usize) -> f64 {
    let s = DIR_SETS[degree][set_pos];
    let mut seq: Vec<usize> = s.to_vec();
    for d in 0..4 {
        if !s.contains(&d) {
            seq.push(d);
        }
    }
    let mut inv = 0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if seq[i] > seq[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Position of the complementary set in degree 4-r.
pub fn complement_pos(degree: usize, set_pos: usize) -> usize {
    let s = DIR_SETS[degree][set_pos];
    let comp: Vec<usize> = (0..4).filter(|d| !s.contains(d)).collect();
    DIR_SETS[4 - degree]
        .iter()
        .position(|t| *t == comp.as_slice())
        .expect("complement set exists")
}

/// Position of a sorted direction list within its degree.
pub fn set_pos(dirs: &[usize]) -> usize {
    DIR_SETS[dirs.len()]
        .iter()
        .position(|t| *t == dirs)
        .expect("valid direction set")
}

/// One periodic cubical chart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chart {
    pub id: usize,
    /// Periodic sides N1..N4, each >= 2.
    pub extent: [usize; 4],
    /// Squared edge lengths g1..g4, each > 0.
    pub metric: [f64; 4],
}

impl Chart {
    pub fn new(id: usize, extent: [usize; 4], metric: [f64; 4]) -> crate::Result<Self> {
        if extent.iter().any(|&n| n < 2) {
            return Err(crate::Error::BadInput(format!(
                "chart extents must be >= 2, got {:?}",
                extent
            )));
        }
        if metric.iter().any(|&g| !(g > 0.0)) {
            return Err(crate::Error::BadInput(format!(
                "chart metric entries must be > 0, got {:?}",
                metric
            )));
        }
        Ok(Chart { id, extent, metric })
    }

    pub fn vertex_count(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn cell_count(&self, degree: usize) -> usize {
        self.vertex_count() * nsets(degree)
    }

    /// Flat vertex index, x4-fastest.
    pub fn vertex_index(&self, v: [usize; 4]) -> usize {
        debug_assert!((0..4).all(|i| v[i] < self.extent[i]));
        ((v[0] * self.extent[1] + v[1]) * self.extent[2] + v[2]) * self.extent[3] + v[3]
    }

    pub fn vertex_coords(&self, idx: usize) -> [usize; 4] {
        let v4 = idx % self.extent[3];
        let r = idx / self.extent[3];
        let v3 = r % self.extent[2];
        let r = r / self.extent[2];
        let v2 = r % self.extent[1];
        let v1 = r / self.extent[1];
        [v1, v2, v3, v4]
    }

    /// Reduce possibly-negative coordinates mod extents.
    pub fn wrap(&self, v: [i64; 4]) -> [usize; 4] {
        let mut out = [0usize; 4];
        for i in 0..4 {
            let n = self.extent[i] as i64;
            out[i] = (((v[i] % n) + n) % n) as usize;
        }
        out
    }

    /// Neighbor vertex offset by +1 or -1 along `dir`.
    pub fn step(&self, v: [usize; 4], dir: usize, forward: bool) -> [usize; 4] {
        let mut w = v;
        let n = self.extent[dir];
        w[dir] = if forward { (v[dir] + 1) % n } else { (v[dir] + n - 1) % n };
        w
    }

    pub fn cell_index(&self, degree: usize, vertex: usize, set: usize) -> usize {
        vertex * nsets(degree) + set
    }

    pub fn cell_parts(&self, degree: usize, cell: usize) -> (usize, usize) {
        (cell / nsets(degree), cell % nsets(degree))
    }

    /// Product of metric entries over a direction set.
    pub fn metric_product(&self, set: &[usize]) -> f64 {
        set.iter().map(|&d| self.metric[d]).product()
    }

    pub fn metric_det(&self) -> f64 {
        self.metric.iter().product()
    }

    /// Inner-product weight of an r-cell: sqrt(det g) / prod_{i in S} g_i.
    pub fn cell_weight(&self, degree: usize, set: usize) -> f64 {
        self.metric_det().sqrt() / self.metric_product(DIR_SETS[degree][set])
    }

    /// Hodge factor carrying coefficients on S to the complementary set;
    /// numerically identical to `cell_weight`.
    pub fn star_factor(&self, degree: usize, set: usize) -> f64 {
        self.cell_weight(degree, set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let c = Chart::new(0, [4, 3, 5, 2], [1.0; 4]).unwrap();
        for idx in 0..c.vertex_count() {
            assert_eq!(c.vertex_index(c.vertex_coords(idx)), idx);
        }
        assert_eq!(c.vertex_index([0, 0, 0, 1]), 1); // x4-fastest
    }

    #[test]
    fn split_signs_match_table() {
        for p in 0..6 {
            assert_eq!(split_sign(2, p), SPLIT_SIGN_2[p]);
            assert_eq!(complement_pos(2, p), COMPLEMENT_2[p]);
        }
        // r(4-r) parity: star^2 = -1 on degree 1 and 3, +1 on 0, 2, 4
        for r in 0..=4usize {
            for p in 0..nsets(r) {
                let q = complement_pos(r, p);
                let sgn = split_sign(r, p) * split_sign(4 - r, q);
                let expect = if (r * (4 - r)) % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(sgn, expect, "degree {r} set {p}");
            }
        }
    }

    #[test]
    fn weights_unit_metric() {
        let c = Chart::new(0, [4; 4], [1.0; 4]).unwrap();
        for r in 0..=4 {
            for p in 0..nsets(r) {
                assert_eq!(c.cell_weight(r, p), 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_charts() {
        assert!(Chart::new(0, [1, 4, 4, 4], [1.0; 4]).is_err());
        assert!(Chart::new(0, [4; 4], [0.0, 1.0, 1.0, 1.0]).is_err());
    }
}
