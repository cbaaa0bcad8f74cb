//! Basic cohomology of the transversal: ranks of the coboundary restricted to
//! invariant cochains, harmonic representatives, the theta-weighted Poincare
//! pairing, and foliation cycles (invariant weighted Dirac measures on vertex
//! orbits).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::complex::DIR_SETS;
use crate::forms::{
    integral_form, invariance_residual, wedge, Cochain, InvariantBasis, Value,
};
use crate::linalg::{nullspace, rank, RANK_RTOL};
use crate::presentation::FoliationPresentation;
use crate::{Error, Result};

/// Basic Betti numbers with the rank threshold used to compute them.
#[derive(Debug, Clone, Serialize)]
pub struct CohomologyReport {
    pub betti: [usize; 5],
    pub rank_rtol: f64,
    /// Per degree 0..3: (smallest kept, largest dropped) singular values of
    /// the scaled coboundary matrices, as a conditioning diagnostic.
    pub singular_gaps: Vec<(f64, f64)>,
}

/// Matrix of d on invariant coordinates, scaled symmetrically by the Gram
/// weights so that singular values refer to the theta-weighted inner product.
pub fn d_matrix_scaled(
    p: &FoliationPresentation,
    br: &InvariantBasis,
    br1: &InvariantBasis,
) -> DMatrix<f64> {
    let r = br.degree;
    let table_r = p.cell_orbit_table(r);
    let table_r1 = p.cell_orbit_table(r + 1);
    let mut live = vec![usize::MAX; table_r.n_orbits()];
    for (k, &oi) in br.orbits.iter().enumerate() {
        live[oi] = k;
    }
    let mut m = DMatrix::<f64>::zeros(br1.dim(), br.dim());
    for (row, &oi1) in br1.orbits.iter().enumerate() {
        let rep = table_r1.orbits[oi1].rep;
        let (ci, local) = p.split_cell(r + 1, rep);
        let chart = &p.charts[ci];
        let (v_idx, t_pos) = chart.cell_parts(r + 1, local);
        let v = chart.vertex_coords(v_idx);
        let t_dirs = DIR_SETS[r + 1][t_pos];
        let off = p.cell_offset(r, ci);
        for (k, &dk) in t_dirs.iter().enumerate() {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            let mut face: Vec<usize> = t_dirs.to_vec();
            face.remove(k);
            let s_pos = crate::complex::set_pos(&face);
            let w = chart.step(v, dk, true);
            let fwd = off + chart.cell_index(r, chart.vertex_index(w), s_pos);
            let bwd = off + chart.cell_index(r, v_idx, s_pos);
            for (cell, pm) in [(fwd, sgn), (bwd, -sgn)] {
                let t = table_r.cells[cell];
                let col = live[t.orbit];
                if col != usize::MAX {
                    m[(row, col)] += pm * t.sign;
                }
            }
        }
    }
    scale_matrix(&mut m, &br1.gram, &br.gram);
    m
}

/// Matrix of (kappa ^) on invariant coordinates, same scaling as `d_matrix_scaled`.
pub fn kappa_matrix_scaled(
    p: &FoliationPresentation,
    br: &InvariantBasis,
    br1: &InvariantBasis,
) -> DMatrix<f64> {
    let r = br.degree;
    let table_r = p.cell_orbit_table(r);
    let table_r1 = p.cell_orbit_table(r + 1);
    let mut live = vec![usize::MAX; table_r.n_orbits()];
    for (k, &oi) in br.orbits.iter().enumerate() {
        live[oi] = k;
    }
    let mut m = DMatrix::<f64>::zeros(br1.dim(), br.dim());
    for (row, &oi1) in br1.orbits.iter().enumerate() {
        let rep = table_r1.orbits[oi1].rep;
        let (ci, local) = p.split_cell(r + 1, rep);
        let chart = &p.charts[ci];
        let (v_idx, t_pos) = chart.cell_parts(r + 1, local);
        let t_dirs = DIR_SETS[r + 1][t_pos];
        let off = p.cell_offset(r, ci);
        for (k, &dk) in t_dirs.iter().enumerate() {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            let kv = p.kappa[ci][chart.cell_index(1, v_idx, dk)];
            let mut face: Vec<usize> = t_dirs.to_vec();
            face.remove(k);
            let s_pos = crate::complex::set_pos(&face);
            let cell = off + chart.cell_index(r, v_idx, s_pos);
            let t = table_r.cells[cell];
            let col = live[t.orbit];
            if col != usize::MAX {
                m[(row, col)] += sgn * kv * t.sign;
            }
        }
    }
    scale_matrix(&mut m, &br1.gram, &br.gram);
    m
}

fn scale_matrix(m: &mut DMatrix<f64>, gram_rows: &[f64], gram_cols: &[f64]) {
    for (j, g) in gram_cols.iter().enumerate() {
        let s = 1.0 / g.sqrt();
        for i in 0..m.nrows() {
            m[(i, j)] *= s;
        }
    }
    for (i, g) in gram_rows.iter().enumerate() {
        let s = g.sqrt();
        for j in 0..m.ncols() {
            m[(i, j)] *= s;
        }
    }
}

/// Invariant bases and scaled coboundary matrices for all degrees.
pub struct InvariantComplex {
    pub bases: Vec<InvariantBasis>,
    /// d_r for r = 0..3, in scaled coordinates.
    pub d: Vec<DMatrix<f64>>,
}

impl InvariantComplex {
    pub fn build(p: &FoliationPresentation) -> InvariantComplex {
        Self::build_twisted(p, false)
    }

    /// With `twisted`, use d - kappa^ instead of d.
    pub fn build_twisted(p: &FoliationPresentation, twisted: bool) -> InvariantComplex {
        let bases: Vec<InvariantBasis> = (0..=4).map(|r| InvariantBasis::scalar(p, r)).collect();
        let mut d = Vec::new();
        for r in 0..4 {
            let mut m = d_matrix_scaled(p, &bases[r], &bases[r + 1]);
            if twisted {
                m -= kappa_matrix_scaled(p, &bases[r], &bases[r + 1]);
            }
            d.push(m);
        }
        InvariantComplex { bases, d }
    }

    /// Orthonormal basis of the harmonic space in scaled coordinates.
    pub fn harmonic_scaled(&self, r: usize) -> Vec<Vec<f64>> {
        let dim = self.bases[r].dim();
        let up_rows = if r < 4 { self.d[r].nrows() } else { 0 };
        let down_rows = if r > 0 { self.d[r - 1].ncols() } else { 0 };
        let mut stacked = DMatrix::<f64>::zeros(up_rows + down_rows, dim);
        if r < 4 {
            stacked.view_mut((0, 0), (up_rows, dim)).copy_from(&self.d[r]);
        }
        if r > 0 {
            stacked
                .view_mut((up_rows, 0), (down_rows, dim))
                .copy_from(&self.d[r - 1].transpose());
        }
        let (_, basis) = nullspace(&stacked, RANK_RTOL);
        basis
    }

    /// Harmonic representatives as full cochains, each normalized to unit
    /// max-abs coefficient with its largest entry positive.
    pub fn harmonic_representatives(
        &self,
        p: &FoliationPresentation,
        r: usize,
    ) -> Vec<Cochain> {
        let basis = self.harmonic_scaled(r);
        let mut out = Vec::new();
        for y in basis {
            // unscale: x = y / sqrt(G)
            let x: Vec<f64> = y
                .iter()
                .zip(&self.bases[r].gram)
                .map(|(v, g)| v / g.sqrt())
                .collect();
            let mut c = self.bases[r].embed(p, &x);
            let mut best = 0usize;
            for (i, v) in c.data.iter().enumerate() {
                if v.abs() > c.data[best].abs() {
                    best = i;
                }
            }
            let scale = c.data[best];
            if scale != 0.0 {
                c.scale(1.0 / scale);
            }
            out.push(c);
        }
        out
    }
}

/// Basic Betti numbers via singular-value ranks of the invariant complex.
pub fn basic_betti(p: &FoliationPresentation) -> CohomologyReport {
    let cx = InvariantComplex::build(p);
    let ranks: Vec<crate::linalg::RankResult> =
        cx.d.iter().map(|m| rank(m, RANK_RTOL)).collect();
    let mut betti = [0usize; 5];
    for r in 0..=4usize {
        let up = if r < 4 { ranks[r].rank } else { 0 };
        let down = if r > 0 { ranks[r - 1].rank } else { 0 };
        betti[r] = cx.bases[r].dim() - up - down;
    }
    CohomologyReport {
        betti,
        rank_rtol: RANK_RTOL,
        singular_gaps: ranks
            .iter()
            .map(|r| (r.smallest_kept, r.largest_dropped))
            .collect(),
    }
}

/// Poincare pairing on harmonic representatives: entries are the
/// theta-weighted integrals of rep_i ^ rep_j for classes of degree r and 4-r.
/// With nonzero kappa the degree-r side uses the twisted complex.
pub fn pairing_matrix(p: &FoliationPresentation, r: usize) -> Result<DMatrix<f64>> {
    if r > 4 {
        return Err(Error::DegreeError { expected: 4, got: r });
    }
    let twisted = !p.taut;
    let cx_r = InvariantComplex::build_twisted(p, twisted);
    let reps_r = cx_r.harmonic_representatives(p, r);
    let reps_c = if twisted {
        InvariantComplex::build(p).harmonic_representatives(p, 4 - r)
    } else {
        cx_r.harmonic_representatives(p, 4 - r)
    };
    let mut m = DMatrix::<f64>::zeros(reps_r.len(), reps_c.len());
    for (i, a) in reps_r.iter().enumerate() {
        for (j, b) in reps_c.iter().enumerate() {
            m[(i, j)] = integral_form(p, &wedge(p, a, b)?)?;
        }
    }
    Ok(m)
}

/// Smallest / largest singular value ratio of a pairing matrix; zero for a
/// non-square or empty matrix.
pub fn pairing_nondegeneracy(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return 0.0;
    }
    let r = rank(m, 0.0);
    let smax = r.singular_values.first().cloned().unwrap_or(0.0);
    let smin = r.singular_values.last().cloned().unwrap_or(0.0);
    if smax == 0.0 {
        0.0
    } else {
        smin / smax
    }
}

/// An invariant integer-weighted Dirac measure on vertex orbits: the discrete
/// foliation cycle. Support entries are vertex-orbit indices.
#[derive(Debug, Clone, Serialize)]
pub struct FoliationCycle {
    pub support: Vec<usize>,
    pub multiplicities: Vec<i64>,
}

impl FoliationCycle {
    pub fn new(
        p: &FoliationPresentation,
        support: Vec<usize>,
        multiplicities: Vec<i64>,
    ) -> Result<FoliationCycle> {
        if support.len() != multiplicities.len() {
            return Err(Error::InvalidCycle(
                "support and multiplicities differ in length".into(),
            ));
        }
        let n_orbits = p.cell_orbit_table(0).n_orbits();
        for &o in &support {
            if o >= n_orbits {
                return Err(Error::InvalidCycle(format!("orbit {o} out of range")));
            }
        }
        if multiplicities.iter().any(|&n| n == 0) {
            return Err(Error::InvalidCycle("zero multiplicity".into()));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != support.len() {
            return Err(Error::InvalidCycle("repeated support orbit".into()));
        }
        Ok(FoliationCycle {
            support,
            multiplicities,
        })
    }

    pub fn empty() -> FoliationCycle {
        FoliationCycle {
            support: Vec::new(),
            multiplicities: Vec::new(),
        }
    }
}

/// Evaluate the cycle on an invariant function: sum over orbits of
/// n * sum_{y in orbit} theta(y) f(y).
pub fn cycle_eval(
    p: &FoliationPresentation,
    t: &FoliationCycle,
    f: &Cochain,
) -> Result<f64> {
    if f.degree != 0 || f.value != Value::Scalar {
        return Err(Error::TypeError("cycle_eval needs a scalar 0-cochain".into()));
    }
    f.check_layout(p)?;
    let res = invariance_residual(p, f);
    if res > 1e-10 {
        return Err(Error::InvarianceError("cycle_eval argument".into(), res));
    }
    let table = p.cell_orbit_table(0);
    let mut total = 0.0;
    for (&orbit, &n) in t.support.iter().zip(&t.multiplicities) {
        let mut weighted = 0.0;
        for &m in &table.orbits[orbit].members {
            let (ci, local) = p.split_cell(0, m);
            weighted += p.theta[ci][local] * f.data[m];
        }
        total += n as f64 * weighted;
    }
    Ok(total)
}

/// Mass norm: sum of multiplicity times leaf volume; positive multiplicities
/// are required for mass semantics.
pub fn mass(p: &FoliationPresentation, t: &FoliationCycle) -> Result<f64> {
    if t.multiplicities.iter().any(|&n| n <= 0) {
        return Err(Error::InvalidCycle(
            "mass requires positive multiplicities".into(),
        ));
    }
    Ok(t.support
        .iter()
        .zip(&t.multiplicities)
        .map(|(&o, &n)| n as f64 * p.leaf_volume_of_orbit(o))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presentation::{preset_p0, preset_p2, preset_p4};

    #[test]
    fn betti_p0_is_torus() {
        let rep = basic_betti(&preset_p0(4).unwrap());
        assert_eq!(rep.betti, [1, 4, 6, 4, 1]);
    }

    #[test]
    fn betti_p2_matches_quotient_torus() {
        // the free translation acts trivially on harmonic forms
        let rep = basic_betti(&preset_p2(4).unwrap());
        assert_eq!(rep.betti, [1, 4, 6, 4, 1]);
    }

    #[test]
    fn betti_p4_character_count() {
        // invariant constant 1-forms: dx3, dx4; invariant constant 2-forms:
        // dx1^dx2 and dx3^dx4
        let rep = basic_betti(&preset_p4(4).unwrap());
        assert_eq!(rep.betti, [1, 2, 2, 2, 1]);
    }

    #[test]
    fn poincare_symmetry() {
        for p in [
            preset_p0(4).unwrap(),
            preset_p2(4).unwrap(),
            preset_p4(4).unwrap(),
        ] {
            let rep = basic_betti(&p);
            for r in 0..=4 {
                assert_eq!(rep.betti[r], rep.betti[4 - r]);
            }
            assert_eq!(rep.betti[0], 1);
        }
    }

    #[test]
    fn pairing_p0_degree0() {
        let p = preset_p0(4).unwrap();
        let m = pairing_matrix(&p, 0).unwrap();
        assert_eq!(m.nrows(), 1);
        assert!((m[(0, 0)] - 256.0).abs() < 1e-9, "got {}", m[(0, 0)]);
    }

    #[test]
    fn pairing_p0_degree2_signature() {
        let p = preset_p0(4).unwrap();
        let m = pairing_matrix(&p, 2).unwrap();
        assert_eq!(m.nrows(), 6);
        assert!(pairing_nondegeneracy(&m) >= 1e-6);
        // intersection form of the 4-torus has signature (3,3)
        let sym = (m.clone() + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let pos = eig.eigenvalues.iter().filter(|&&e| e > 0.0).count();
        let neg = eig.eigenvalues.iter().filter(|&&e| e < 0.0).count();
        assert_eq!((pos, neg), (3, 3));
    }

    #[test]
    fn pairing_p4_degree1() {
        let p = preset_p4(4).unwrap();
        let m = pairing_matrix(&p, 1).unwrap();
        assert_eq!(m.nrows(), 2);
        assert!(pairing_nondegeneracy(&m) >= 1e-6);
    }

    #[test]
    fn cycle_eval_and_mass_p2() {
        let p = preset_p2(4).unwrap();
        let table = p.cell_orbit_table(0);
        let orbit = table.cells[0].orbit;
        let t = FoliationCycle::new(&p, vec![orbit], vec![1]).unwrap();
        let f = Cochain::constant(&p, 0, 1.0);
        assert_eq!(cycle_eval(&p, &t, &f).unwrap(), 2.0);
        assert_eq!(mass(&p, &t).unwrap(), 2.0);
    }

    #[test]
    fn cycle_mass_p4_fixed_point() {
        let p = preset_p4(4).unwrap();
        let g = p.global_vertex(0, [0, 0, 1, 2]);
        let orbit = p.cell_orbit_table(0).cells[g].orbit;
        let t = FoliationCycle::new(&p, vec![orbit], vec![3]).unwrap();
        assert_eq!(mass(&p, &t).unwrap(), 3.0);
    }

    #[test]
    fn cycle_rejects_zero_multiplicity() {
        let p = preset_p2(4).unwrap();
        assert!(FoliationCycle::new(&p, vec![0], vec![0]).is_err());
    }

    #[test]
    fn cycle_eval_rejects_noninvariant() {
        let p = preset_p2(4).unwrap();
        let t = FoliationCycle::new(&p, vec![0], vec![1]).unwrap();
        let mut f = Cochain::constant(&p, 0, 1.0);
        f.data[3] = 2.0;
        assert!(matches!(
            cycle_eval(&p, &t, &f),
            Err(Error::InvarianceError(_, _))
        ));
    }

    #[test]
    fn cycle_linearity_and_additive_mass() {
        let p = preset_p2(4).unwrap();
        let table = p.cell_orbit_table(0);
        let (o1, o2) = (table.cells[0].orbit, table.cells[5].orbit);
        assert_ne!(o1, o2);
        let t1 = FoliationCycle::new(&p, vec![o1], vec![2]).unwrap();
        let t2 = FoliationCycle::new(&p, vec![o2], vec![1]).unwrap();
        let t12 = FoliationCycle::new(&p, vec![o1, o2], vec![2, 1]).unwrap();
        let f = Cochain::constant(&p, 0, 0.5);
        let lhs = cycle_eval(&p, &t12, &f).unwrap();
        let rhs = cycle_eval(&p, &t1, &f).unwrap() + cycle_eval(&p, &t2, &f).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert_eq!(
            mass(&p, &t12).unwrap(),
            mass(&p, &t1).unwrap() + mass(&p, &t2).unwrap()
        );
    }

    #[test]
    fn diffuse_consistency() {
        // pairing an invariant function against a top density through the
        // weighted integral agrees with the measure-style evaluation
        let p = preset_p2(4).unwrap();
        let mut tau = Cochain::constant(&p, 0, 0.0);
        for (i, x) in tau.data.iter_mut().enumerate() {
            *x = ((i % 7) as f64).sin();
        }
        let tau = crate::forms::invariant_project(&p, &tau).unwrap();
        let omega = Cochain::constant(&p, 4, 1.25);
        // left: weighted integral of (tau * omega) as a density
        let mut prod = omega.clone();
        for v in 0..256 {
            prod.data[v] *= tau.data[v];
        }
        let lhs = crate::presentation::modified_integral(&p, &prod).unwrap();
        // right: the measure with density omega sqrt(det g) theta applied to tau
        let chart = &p.charts[0];
        let vol = chart.metric_det().sqrt();
        let mut rhs = 0.0;
        for v in 0..256 {
            rhs += p.theta[0][v] * omega.data[v] * vol * tau.data[v];
        }
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
