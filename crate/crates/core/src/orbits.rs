//! Orbit enumeration for pseudogroup actions on cell index spaces.
//!
//! The table stores, per cell, a transport back to the orbit representative:
//! for an invariant cochain, value(cell) = sign * Ad(lift) value(rep). Non-tree
//! BFS edges yield Schreier relations generating the stabilizer; their fixed
//! subspace constrains the representative value (a sign -1 relation kills a
//! scalar orbit, an Ad relation cuts the su(2) fiber down to its fixed space).

use crate::su2::Quat;
use nalgebra::Matrix3;

/// Outcome of applying one pseudogroup element to a cell.
#[derive(Debug, Clone, Copy)]
pub struct CellImage {
    pub cell: usize,
    /// Orientation sign of the cell map.
    pub sign: f64,
    /// Bundle lift at the source cell's base vertex.
    pub lift: Quat,
}

/// Transport from the orbit representative to this cell.
#[derive(Debug, Clone, Copy)]
pub struct CellTransport {
    pub orbit: usize,
    pub sign: f64,
    pub lift: Quat,
}

/// One orbit of cells.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub rep: usize,
    pub members: Vec<usize>,
    pub stabilizer_order: usize,
    /// Nontrivial stabilizer relations (sign, lift) constraining the rep value.
    pub relations: Vec<(f64, Quat)>,
    /// Whether a scalar invariant cochain may be nonzero on this orbit.
    pub scalar_live: bool,
    /// Orthonormal basis of the su(2) subspace fixed by the stabilizer.
    pub su2_basis: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct OrbitTable {
    pub cells: Vec<CellTransport>,
    pub orbits: Vec<Orbit>,
}

impl OrbitTable {
    /// Enumerate orbits of `n_cells` indices under the closure of `actions`.
    /// Each action must be a bijection of the index space; supply inverses as
    /// separate actions.
    pub fn build<F>(n_cells: usize, n_actions: usize, apply: F) -> OrbitTable
    where
        F: Fn(usize, usize) -> Option<CellImage>,
    {
        let mut cells = vec![
            CellTransport {
                orbit: usize::MAX,
                sign: 1.0,
                lift: Quat::IDENTITY
            };
            n_cells
        ];
        let mut orbits = Vec::new();
        let mut queue = Vec::new();

        for start in 0..n_cells {
            if cells[start].orbit != usize::MAX {
                continue;
            }
            let orbit_id = orbits.len();
            cells[start] = CellTransport {
                orbit: orbit_id,
                sign: 1.0,
                lift: Quat::IDENTITY,
            };
            let mut members = vec![start];
            let mut relations: Vec<(f64, Quat)> = Vec::new();
            queue.clear();
            queue.push(start);
            let mut head = 0;
            while head < queue.len() {
                let cur = queue[head];
                head += 1;
                let t_cur = cells[cur];
                for a in 0..n_actions {
                    let Some(img) = apply(a, cur) else { continue };
                    let sign = img.sign * t_cur.sign;
                    let lift = img.lift.mul(&t_cur.lift);
                    let slot = &mut cells[img.cell];
                    if slot.orbit == usize::MAX {
                        *slot = CellTransport {
                            orbit: orbit_id,
                            sign,
                            lift,
                        };
                        members.push(img.cell);
                        queue.push(img.cell);
                    } else {
                        debug_assert_eq!(slot.orbit, orbit_id);
                        // relation: sign_e * Ad(lift_e) X = sign * Ad(lift) X
                        let s_rel = slot.sign * sign;
                        let q_rel = slot.lift.conj().mul(&lift);
                        if s_rel < 0.0 || q_rel.imag().iter().map(|c| c.abs()).sum::<f64>() > 1e-12 {
                            relations.push((s_rel, q_rel));
                        }
                    }
                }
            }
            let (scalar_live, su2_basis) = fixed_subspace(&relations);
            orbits.push(Orbit {
                rep: start,
                members,
                stabilizer_order: 1,
                relations,
                scalar_live,
                su2_basis,
            });
        }
        OrbitTable { cells, orbits }
    }

    pub fn orbit_of(&self, cell: usize) -> &Orbit {
        &self.orbits[self.cells[cell].orbit]
    }

    pub fn n_orbits(&self) -> usize {
        self.orbits.len()
    }
}

/// Scalar liveness and the orthonormal fixed su(2) subspace of a relation set.
fn fixed_subspace(relations: &[(f64, Quat)]) -> (bool, Vec<[f64; 3]>) {
    let scalar_live = relations.iter().all(|(s, _)| *s > 0.0);
    if relations.is_empty() {
        return (
            true,
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        );
    }
    // accumulate sum of (I - s Ad(q))^T (I - s Ad(q)); kernel = fixed subspace
    let mut m = Matrix3::<f64>::zeros();
    for (s, q) in relations {
        let mut r = Matrix3::<f64>::zeros();
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            let col = q.rotate(&e);
            for i in 0..3 {
                r[(i, j)] = if i == j { 1.0 } else { 0.0 } - s * col[i];
            }
        }
        m += r.transpose() * r;
    }
    let eig = m.symmetric_eigen();
    let mut basis = Vec::new();
    for k in 0..3 {
        if eig.eigenvalues[k].abs() < 1e-10 {
            let v = eig.eigenvectors.column(k);
            basis.push([v[0], v[1], v[2]]);
        }
    }
    (scalar_live, basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_involution_orbits() {
        // 6 cells, action swaps i <-> i+3
        let apply = |_a: usize, c: usize| {
            Some(CellImage {
                cell: (c + 3) % 6,
                sign: 1.0,
                lift: Quat::IDENTITY,
            })
        };
        let t = OrbitTable::build(6, 1, apply);
        assert_eq!(t.n_orbits(), 3);
        for o in &t.orbits {
            assert_eq!(o.members.len(), 2);
            assert!(o.scalar_live);
            assert_eq!(o.su2_basis.len(), 3);
        }
    }

    #[test]
    fn sign_relation_kills_scalar() {
        // single cell fixed with orientation flip
        let apply = |_a: usize, _c: usize| {
            Some(CellImage {
                cell: 0,
                sign: -1.0,
                lift: Quat::IDENTITY,
            })
        };
        let t = OrbitTable::build(1, 1, apply);
        assert!(!t.orbits[0].scalar_live);
        assert!(t.orbits[0].su2_basis.is_empty());
    }

    #[test]
    fn ad_relation_leaves_axis() {
        // stabilizer conjugates by a rotation about the z axis
        let q = Quat::exp(&[0.0, 0.0, 0.9]);
        let apply = move |_a: usize, _c: usize| {
            Some(CellImage {
                cell: 0,
                sign: 1.0,
                lift: q,
            })
        };
        let t = OrbitTable::build(1, 1, apply);
        assert!(t.orbits[0].scalar_live);
        assert_eq!(t.orbits[0].su2_basis.len(), 1);
        let b = t.orbits[0].su2_basis[0];
        assert!(b[0].abs() < 1e-9 && b[1].abs() < 1e-9 && (b[2].abs() - 1.0).abs() < 1e-9);
    }
}
