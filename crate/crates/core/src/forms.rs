//! Discrete exterior calculus on the transversal complex.
//!
//! Cochains hold coefficient values per cell: the value on an r-cell
//! (v, S) is the coefficient of dx^S sampled on that cell. The coboundary is
//! the oriented cubical incidence sum, the Hodge star pairs each r-cell with
//! its complementary cell at the same base vertex (diagonal for diagonal
//! metrics), and all inner products are theta-weighted. su(2) values are three
//! real coefficients with pointwise pairing -Tr(alpha beta) = 2 dot.

use rand::Rng;

use crate::complex::{complement_pos, nsets, split_sign, DIR_SETS};
use crate::orbits::OrbitTable;
use crate::presentation::FoliationPresentation;
use crate::{Error, Result};

/// Cochain value type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Scalar,
    Su2,
}

impl Value {
    pub fn ncomp(&self) -> usize {
        match self {
            Value::Scalar => 1,
            Value::Su2 => 3,
        }
    }
}

/// A discrete differential form of degree 0..4.
#[derive(Debug, Clone)]
pub struct Cochain {
    pub degree: usize,
    pub value: Value,
    /// Per global cell, `ncomp` consecutive components.
    pub data: Vec<f64>,
}

impl Cochain {
    pub fn zeros(p: &FoliationPresentation, degree: usize, value: Value) -> Cochain {
        Cochain {
            degree,
            value,
            data: vec![0.0; p.cell_total(degree) * value.ncomp()],
        }
    }

    pub fn constant(p: &FoliationPresentation, degree: usize, v: f64) -> Cochain {
        Cochain {
            degree,
            value: Value::Scalar,
            data: vec![v; p.cell_total(degree)],
        }
    }

    pub fn random<R: Rng>(
        p: &FoliationPresentation,
        degree: usize,
        value: Value,
        rng: &mut R,
    ) -> Cochain {
        let mut c = Cochain::zeros(p, degree, value);
        for x in &mut c.data {
            *x = rng.random_range(-1.0..1.0);
        }
        c
    }

    /// Round every component to a multiple of 2^-20; incidence sums of such
    /// values are exact in f64.
    pub fn quantize_dyadic(&mut self) {
        let s = (1u64 << 20) as f64;
        for x in &mut self.data {
            *x = (*x * s).round() / s;
        }
    }

    pub fn check_layout(&self, p: &FoliationPresentation) -> Result<()> {
        let expect = p.cell_total(self.degree) * self.value.ncomp();
        if self.data.len() != expect {
            return Err(Error::TypeError(format!(
                "cochain layout mismatch: {} components, expected {}",
                self.data.len(),
                expect
            )));
        }
        Ok(())
    }

    pub fn vec_at(&self, cell: usize) -> [f64; 3] {
        debug_assert_eq!(self.value, Value::Su2);
        [
            self.data[3 * cell],
            self.data[3 * cell + 1],
            self.data[3 * cell + 2],
        ]
    }

    pub fn set_vec(&mut self, cell: usize, v: [f64; 3]) {
        self.data[3 * cell] = v[0];
        self.data[3 * cell + 1] = v[1];
        self.data[3 * cell + 2] = v[2];
    }

    pub fn add_scaled(&mut self, other: &Cochain, s: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

impl Cochain {
    /// Scalar value by chart and local cell index.
    pub fn scalar(&self, p: &FoliationPresentation, chart: usize, local: usize) -> f64 {
        self.data[p.cell_offset(self.degree, chart) + local]
    }
}

/// Oriented cubical coboundary; exact incidence arithmetic.
pub fn d(p: &FoliationPresentation, c: &Cochain) -> Result<Cochain> {
    if c.degree >= 4 {
        return Err(Error::DegreeError {
            expected: 3,
            got: c.degree,
        });
    }
    c.check_layout(p)?;
    let r = c.degree;
    let nc = c.value.ncomp();
    let mut out = Cochain {
        degree: r + 1,
        value: c.value,
        data: vec![0.0; p.cell_total(r + 1) * nc],
    };
    for (ci, chart) in p.charts.iter().enumerate() {
        let off_in = p.cell_offset(r, ci);
        let off_out = p.cell_offset(r + 1, ci);
        let sets_out = DIR_SETS[r + 1];
        for v_idx in 0..chart.vertex_count() {
            let v = chart.vertex_coords(v_idx);
            for (t_pos, t_dirs) in sets_out.iter().enumerate() {
                let cell_out = (off_out + chart.cell_index(r + 1, v_idx, t_pos)) * nc;
                for (k, &dk) in t_dirs.iter().enumerate() {
                    let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let mut face: Vec<usize> = t_dirs.to_vec();
                    face.remove(k);
                    let s_pos = crate::complex::set_pos(&face);
                    let w = chart.step(v, dk, true);
                    let fwd = (off_in + chart.cell_index(r, chart.vertex_index(w), s_pos)) * nc;
                    let bwd = (off_in + chart.cell_index(r, v_idx, s_pos)) * nc;
                    for j in 0..nc {
                        out.data[cell_out + j] += sgn * (c.data[fwd + j] - c.data[bwd + j]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Transpose of `d` with respect to the plain (unweighted) pairing.
fn d_transpose(p: &FoliationPresentation, y: &Cochain) -> Cochain {
    let r1 = y.degree; // degree of the (r+1)-cochain
    let r = r1 - 1;
    let nc = y.value.ncomp();
    let mut out = Cochain {
        degree: r,
        value: y.value,
        data: vec![0.0; p.cell_total(r) * nc],
    };
    for (ci, chart) in p.charts.iter().enumerate() {
        let off_in = p.cell_offset(r, ci);
        let off_out = p.cell_offset(r1, ci);
        for v_idx in 0..chart.vertex_count() {
            let v = chart.vertex_coords(v_idx);
            for (t_pos, t_dirs) in DIR_SETS[r1].iter().enumerate() {
                let cell_y = (off_out + chart.cell_index(r1, v_idx, t_pos)) * nc;
                for (k, &dk) in t_dirs.iter().enumerate() {
                    let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let mut face: Vec<usize> = t_dirs.to_vec();
                    face.remove(k);
                    let s_pos = crate::complex::set_pos(&face);
                    let w = chart.step(v, dk, true);
                    let fwd = (off_in + chart.cell_index(r, chart.vertex_index(w), s_pos)) * nc;
                    let bwd = (off_in + chart.cell_index(r, v_idx, s_pos)) * nc;
                    for j in 0..nc {
                        out.data[fwd + j] += sgn * y.data[cell_y + j];
                        out.data[bwd + j] -= sgn * y.data[cell_y + j];
                    }
                }
            }
        }
    }
    out
}

/// Transverse Hodge star: (star c)(v, S^c) = sign(S,S^c) sqrt(det g)/|g_S| c(v, S).
pub fn star(p: &FoliationPresentation, c: &Cochain) -> Result<Cochain> {
    c.check_layout(p)?;
    let r = c.degree;
    let nc = c.value.ncomp();
    let mut out = Cochain {
        degree: 4 - r,
        value: c.value,
        data: vec![0.0; p.cell_total(4 - r) * nc],
    };
    for (ci, chart) in p.charts.iter().enumerate() {
        let off_in = p.cell_offset(r, ci);
        let off_out = p.cell_offset(4 - r, ci);
        for v_idx in 0..chart.vertex_count() {
            for s_pos in 0..nsets(r) {
                let factor = split_sign(r, s_pos) * chart.star_factor(r, s_pos);
                let dual = complement_pos(r, s_pos);
                let src = (off_in + chart.cell_index(r, v_idx, s_pos)) * nc;
                let dst = (off_out + chart.cell_index(4 - r, v_idx, dual)) * nc;
                for j in 0..nc {
                    out.data[dst + j] = factor * c.data[src + j];
                }
            }
        }
    }
    Ok(out)
}

/// Self-dual / anti-self-dual split of a degree-2 cochain:
/// plus = (c + star c)/2, minus = (c - star c)/2.
pub fn split_selfdual(p: &FoliationPresentation, c: &Cochain) -> Result<(Cochain, Cochain)> {
    if c.degree != 2 {
        return Err(Error::DegreeError {
            expected: 2,
            got: c.degree,
        });
    }
    let st = star(p, c)?;
    let mut plus = c.clone();
    let mut minus = c.clone();
    for i in 0..c.data.len() {
        plus.data[i] = 0.5 * (c.data[i] + st.data[i]);
        minus.data[i] = 0.5 * (c.data[i] - st.data[i]);
    }
    Ok((plus, minus))
}

/// theta-weighted inner product. su(2) components pair with -Tr(alpha beta).
pub fn inner_theta(p: &FoliationPresentation, a: &Cochain, b: &Cochain) -> Result<f64> {
    if a.degree != b.degree || a.value != b.value {
        return Err(Error::TypeError(
            "inner product needs matching degree and value type".into(),
        ));
    }
    a.check_layout(p)?;
    b.check_layout(p)?;
    let r = a.degree;
    let nc = a.value.ncomp();
    let pair_factor = match a.value {
        Value::Scalar => 1.0,
        Value::Su2 => 2.0,
    };
    let mut total = 0.0;
    for (ci, chart) in p.charts.iter().enumerate() {
        let off = p.cell_offset(r, ci);
        let weights: Vec<f64> = (0..nsets(r)).map(|s| chart.cell_weight(r, s)).collect();
        for v_idx in 0..chart.vertex_count() {
            let th = p.theta[ci][v_idx];
            for s_pos in 0..nsets(r) {
                let cell = (off + chart.cell_index(r, v_idx, s_pos)) * nc;
                let mut dot = 0.0;
                for j in 0..nc {
                    dot += a.data[cell + j] * b.data[cell + j];
                }
                total += th * weights[s_pos] * pair_factor * dot;
            }
        }
    }
    Ok(total)
}

pub fn norm_sq_theta(p: &FoliationPresentation, a: &Cochain) -> Result<f64> {
    inner_theta(p, a, a)
}

/// Same-base wedge of scalar cochains: (a ^ b)(v, T) =
/// sum over splits T = S u S' of shuffle_sign * a(v,S) b(v,S'). Exact for
/// constant cochains; used only inside integrals.
pub fn wedge(p: &FoliationPresentation, a: &Cochain, b: &Cochain) -> Result<Cochain> {
    if a.value != Value::Scalar || b.value != Value::Scalar {
        return Err(Error::TypeError("wedge is defined for scalar cochains".into()));
    }
    let (ra, rb) = (a.degree, b.degree);
    if ra + rb > 4 {
        return Err(Error::DegreeError {
            expected: 4,
            got: ra + rb,
        });
    }
    a.check_layout(p)?;
    b.check_layout(p)?;
    let rt = ra + rb;
    let mut out = Cochain::zeros(p, rt, Value::Scalar);
    // enumerate splits of each target set
    let mut splits: Vec<(usize, usize, usize, f64)> = Vec::new(); // (t_pos, a_pos, b_pos, sign)
    for (t_pos, t_dirs) in DIR_SETS[rt].iter().enumerate() {
        let n = t_dirs.len();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != ra {
                continue;
            }
            let mut s: Vec<usize> = Vec::new();
            let mut sc: Vec<usize> = Vec::new();
            for (i, &dir) in t_dirs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    s.push(dir);
                } else {
                    sc.push(dir);
                }
            }
            // shuffle sign: parity of (s, sc) as a permutation of t_dirs
            let seq: Vec<usize> = s.iter().chain(sc.iter()).cloned().collect();
            let mut inv = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if seq[i] > seq[j] {
                        inv += 1;
                    }
                }
            }
            let sgn = if inv % 2 == 0 { 1.0 } else { -1.0 };
            splits.push((
                t_pos,
                crate::complex::set_pos(&s),
                crate::complex::set_pos(&sc),
                sgn,
            ));
        }
    }
    for (ci, chart) in p.charts.iter().enumerate() {
        let off_a = p.cell_offset(ra, ci);
        let off_b = p.cell_offset(rb, ci);
        let off_t = p.cell_offset(rt, ci);
        for v_idx in 0..chart.vertex_count() {
            for &(t_pos, a_pos, b_pos, sgn) in &splits {
                out.data[off_t + chart.cell_index(rt, v_idx, t_pos)] += sgn
                    * a.data[off_a + chart.cell_index(ra, v_idx, a_pos)]
                    * b.data[off_b + chart.cell_index(rb, v_idx, b_pos)];
            }
        }
    }
    Ok(out)
}

/// theta-weighted coordinate integral of a top-degree scalar form (no metric
/// volume factor; the wedge coefficient is already a density in coordinates).
pub fn integral_form(p: &FoliationPresentation, c: &Cochain) -> Result<f64> {
    if c.degree != 4 {
        return Err(Error::DegreeError {
            expected: 4,
            got: c.degree,
        });
    }
    c.check_layout(p)?;
    let mut total = 0.0;
    for (ci, chart) in p.charts.iter().enumerate() {
        for v in 0..chart.vertex_count() {
            total += p.theta[ci][v] * c.scalar(p, ci, v);
        }
    }
    Ok(total)
}

/// Same-base wedge by a scalar 1-cochain kappa: (kappa ^ f)(v,T) =
/// sum_k (-1)^k kappa(v, t_k) f(v, T \ t_k). Componentwise on su(2) values.
pub fn kappa_wedge(p: &FoliationPresentation, kappa: &[Vec<f64>], f: &Cochain) -> Cochain {
    let r = f.degree;
    let nc = f.value.ncomp();
    let rt = r + 1;
    let mut out = Cochain {
        degree: rt,
        value: f.value,
        data: vec![0.0; p.cell_total(rt) * nc],
    };
    for (ci, chart) in p.charts.iter().enumerate() {
        let off_in = p.cell_offset(r, ci);
        let off_out = p.cell_offset(rt, ci);
        for v_idx in 0..chart.vertex_count() {
            for (t_pos, t_dirs) in DIR_SETS[rt].iter().enumerate() {
                let dst = (off_out + chart.cell_index(rt, v_idx, t_pos)) * nc;
                for (k, &dk) in t_dirs.iter().enumerate() {
                    let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let kv = kappa[ci][chart.cell_index(1, v_idx, dk)];
                    let mut face: Vec<usize> = t_dirs.to_vec();
                    face.remove(k);
                    let s_pos = crate::complex::set_pos(&face);
                    let src = (off_in + chart.cell_index(r, v_idx, s_pos)) * nc;
                    for j in 0..nc {
                        out.data[dst + j] += sgn * kv * f.data[src + j];
                    }
                }
            }
        }
    }
    out
}

fn kappa_wedge_transpose(p: &FoliationPresentation, kappa: &[Vec<f64>], y: &Cochain) -> Cochain {
    let rt = y.degree;
    let r = rt - 1;
    let nc = y.value.ncomp();
    let mut out = Cochain {
        degree: r,
        value: y.value,
        data: vec![0.0; p.cell_total(r) * nc],
    };
    for (ci, chart) in p.charts.iter().enumerate() {
        let off_in = p.cell_offset(r, ci);
        let off_out = p.cell_offset(rt, ci);
        for v_idx in 0..chart.vertex_count() {
            for (t_pos, t_dirs) in DIR_SETS[rt].iter().enumerate() {
                let src = (off_out + chart.cell_index(rt, v_idx, t_pos)) * nc;
                for (k, &dk) in t_dirs.iter().enumerate() {
                    let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let kv = kappa[ci][chart.cell_index(1, v_idx, dk)];
                    let mut face: Vec<usize> = t_dirs.to_vec();
                    face.remove(k);
                    let s_pos = crate::complex::set_pos(&face);
                    let dst = (off_in + chart.cell_index(r, v_idx, s_pos)) * nc;
                    for j in 0..nc {
                        out.data[dst + j] += sgn * kv * y.data[src + j];
                    }
                }
            }
        }
    }
    out
}

fn apply_gram(p: &FoliationPresentation, c: &Cochain, invert: bool) -> Cochain {
    let r = c.degree;
    let nc = c.value.ncomp();
    let mut out = c.clone();
    for (ci, chart) in p.charts.iter().enumerate() {
        let off = p.cell_offset(r, ci);
        let weights: Vec<f64> = (0..nsets(r)).map(|s| chart.cell_weight(r, s)).collect();
        for v_idx in 0..chart.vertex_count() {
            let th = p.theta[ci][v_idx];
            for s_pos in 0..nsets(r) {
                let w = th * weights[s_pos];
                let f = if invert { 1.0 / w } else { w };
                let cell = (off + chart.cell_index(r, v_idx, s_pos)) * nc;
                for j in 0..nc {
                    out.data[cell + j] *= f;
                }
            }
        }
    }
    out
}

/// Exact adjoint of (d - kappa ^) in the theta-weighted inner product:
/// delta_kappa = G_{r-1}^-1 (d^T - (kappa^)^T) G_r. With kappa = 0 this is the
/// plain weighted codifferential.
pub fn codifferential_twisted(
    p: &FoliationPresentation,
    c: &Cochain,
    kappa: &[Vec<f64>],
) -> Result<Cochain> {
    if c.degree == 0 {
        return Err(Error::DegreeError {
            expected: 1,
            got: 0,
        });
    }
    c.check_layout(p)?;
    let weighted = apply_gram(p, c, false);
    let mut u = d_transpose(p, &weighted);
    let kt = kappa_wedge_transpose(p, kappa, &weighted);
    for (a, b) in u.data.iter_mut().zip(&kt.data) {
        *a -= b;
    }
    Ok(apply_gram(p, &u, true))
}

/// Plain weighted codifferential (kappa = 0).
pub fn codifferential(p: &FoliationPresentation, c: &Cochain) -> Result<Cochain> {
    let zero: Vec<Vec<f64>> = p
        .charts
        .iter()
        .map(|ch| vec![0.0; ch.cell_count(1)])
        .collect();
    codifferential_twisted(p, c, &zero)
}

// ---- invariant cochains ----

/// Which orbit table governs a cochain: geometric cells of its degree.
fn table_for<'a>(p: &'a FoliationPresentation, degree: usize) -> &'a OrbitTable {
    p.cell_orbit_table(degree)
}

/// Group-average projection onto invariant cochains. Scalar values average
/// with orientation signs; su(2) values are conjugated by the bundle lifts and
/// then projected onto the stabilizer-fixed subspace of each orbit.
pub fn invariant_project(p: &FoliationPresentation, c: &Cochain) -> Result<Cochain> {
    c.check_layout(p)?;
    let table = table_for(p, c.degree);
    let mut out = c.clone();
    match c.value {
        Value::Scalar => {
            for orbit in &table.orbits {
                let mut acc = 0.0;
                for &m in &orbit.members {
                    acc += table.cells[m].sign * c.data[m];
                }
                let mean = if orbit.scalar_live {
                    acc / orbit.members.len() as f64
                } else {
                    0.0
                };
                for &m in &orbit.members {
                    out.data[m] = table.cells[m].sign * mean;
                }
            }
        }
        Value::Su2 => {
            for orbit in &table.orbits {
                let mut acc = [0.0f64; 3];
                for &m in &orbit.members {
                    let t = table.cells[m];
                    let v = c.vec_at(m);
                    let back = t.lift.conj().rotate(&v);
                    for j in 0..3 {
                        acc[j] += t.sign * back[j];
                    }
                }
                let n = orbit.members.len() as f64;
                for a in &mut acc {
                    *a /= n;
                }
                // project onto stabilizer-fixed subspace
                let mut proj = [0.0f64; 3];
                for b in &orbit.su2_basis {
                    let dot = acc[0] * b[0] + acc[1] * b[1] + acc[2] * b[2];
                    for j in 0..3 {
                        proj[j] += dot * b[j];
                    }
                }
                for &m in &orbit.members {
                    let t = table.cells[m];
                    let fwd = t.lift.rotate(&proj);
                    out.set_vec(m, [t.sign * fwd[0], t.sign * fwd[1], t.sign * fwd[2]]);
                }
            }
        }
    }
    Ok(out)
}

/// Max deviation from invariance under the generators.
pub fn invariance_residual(p: &FoliationPresentation, c: &Cochain) -> f64 {
    let proj = invariant_project(p, c).expect("layout checked by caller");
    c.data
        .iter()
        .zip(&proj.data)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Basis bookkeeping for invariant scalar cochains of one degree.
#[derive(Debug, Clone)]
pub struct InvariantBasis {
    pub degree: usize,
    /// Live orbit indices, in orbit order.
    pub orbits: Vec<usize>,
    /// theta-weighted Gram weight per live orbit.
    pub gram: Vec<f64>,
}

impl InvariantBasis {
    pub fn scalar(p: &FoliationPresentation, degree: usize) -> InvariantBasis {
        let table = table_for(p, degree);
        let mut orbits = Vec::new();
        let mut gram = Vec::new();
        for (oi, orbit) in table.orbits.iter().enumerate() {
            if !orbit.scalar_live {
                continue;
            }
            let mut g = 0.0;
            for &m in &orbit.members {
                let (ci, local) = p.split_cell(degree, m);
                let chart = &p.charts[ci];
                let (v_idx, s_pos) = chart.cell_parts(degree, local);
                g += p.theta[ci][v_idx] * chart.cell_weight(degree, s_pos);
            }
            orbits.push(oi);
            gram.push(g);
        }
        InvariantBasis {
            degree,
            orbits,
            gram,
        }
    }

    pub fn dim(&self) -> usize {
        self.orbits.len()
    }

    /// Embed coordinates into a full cochain.
    pub fn embed(&self, p: &FoliationPresentation, x: &[f64]) -> Cochain {
        let table = table_for(p, self.degree);
        let mut c = Cochain::zeros(p, self.degree, Value::Scalar);
        for (k, &oi) in self.orbits.iter().enumerate() {
            for &m in &table.orbits[oi].members {
                c.data[m] = table.cells[m].sign * x[k];
            }
        }
        c
    }

    /// Evaluate an invariant cochain at orbit representatives.
    pub fn restrict(&self, p: &FoliationPresentation, c: &Cochain) -> Vec<f64> {
        let table = table_for(p, self.degree);
        self.orbits
            .iter()
            .map(|&oi| c.data[table.orbits[oi].rep])
            .collect()
    }
}
