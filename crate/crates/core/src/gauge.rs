//! Pseudogroup-equivariant SU(2) lattice gauge fields.
//!
//! A field is parametrized by one unit quaternion per edge-orbit
//! representative; the full link field is reconstructed through the orbit
//! transports U(e) = A U_rep^{+-1} B^-1, so equivariance is structural. The
//! field strength is the clover average of the four plaquettes cornered at a
//! site, under the principal logarithm; the resulting su(2) 2-cochain is
//! indexed site-attached, which makes the self-dual split commute exactly with
//! the pseudogroup transport. The theta-weighted energy, the foliation charge
//! (1/8 pi^2) int' Tr(F ^ F) and the identity YM = 8 pi^2 k + 2 |F+|^2 are all
//! evaluated from this one discrete F, so the identity holds to rounding.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complex::{COMPLEMENT_2, DIR_SETS, SPLIT_SIGN_2};
use crate::forms::{inner_theta, split_selfdual, Cochain, Value};
use crate::linalg::{nullspace, RANK_RTOL};
use crate::presentation::FoliationPresentation;
use crate::su2::{Quat, Su2Vec};
use crate::{Error, Result};

/// Transport of a link from its orbit representative:
/// U(edge) = a * U_rep^{sigma} * b^-1 with sigma = -1 iff `flip`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeTransport {
    pub orbit: usize,
    pub a: Quat,
    pub b: Quat,
    pub flip: bool,
}

/// One edge orbit with its representative and any stabilizer constraints.
#[derive(Debug, Clone)]
pub struct EdgeOrbit {
    pub rep: usize,
    pub members: Vec<usize>,
    /// Self-relations (a, b, flip): a consistent field needs
    /// U_rep = a U_rep^{+-1} b^-1.
    pub constraints: Vec<(Quat, Quat, bool)>,
}

/// Link transports for a presentation; built once and shared by fields.
#[derive(Debug, Clone)]
pub struct LinkOrbits {
    pub edges: Vec<EdgeTransport>,
    pub orbits: Vec<EdgeOrbit>,
}

/// Endpoints (source, target vertex global index) of a global edge.
pub fn edge_endpoints(p: &FoliationPresentation, edge: usize) -> (usize, usize) {
    let (ci, local) = p.split_cell(1, edge);
    let chart = &p.charts[ci];
    let (v_idx, dir) = chart.cell_parts(1, local);
    let v = chart.vertex_coords(v_idx);
    let w = chart.step(v, DIR_SETS[1][dir][0], true);
    (
        p.vertex_offset(ci) + v_idx,
        p.vertex_offset(ci) + chart.vertex_index(w),
    )
}

impl LinkOrbits {
    pub fn build(p: &FoliationPresentation) -> LinkOrbits {
        let n = p.cell_total(1);
        let mut edges = vec![
            EdgeTransport {
                orbit: usize::MAX,
                a: Quat::IDENTITY,
                b: Quat::IDENTITY,
                flip: false,
            };
            n
        ];
        let mut orbits = Vec::new();
        let mut queue = Vec::new();
        for start in 0..n {
            if edges[start].orbit != usize::MAX {
                continue;
            }
            let orbit_id = orbits.len();
            edges[start] = EdgeTransport {
                orbit: orbit_id,
                a: Quat::IDENTITY,
                b: Quat::IDENTITY,
                flip: false,
            };
            let mut members = vec![start];
            let mut constraints = Vec::new();
            queue.clear();
            queue.push(start);
            let mut head = 0;
            while head < queue.len() {
                let cur = queue[head];
                head += 1;
                let t = edges[cur];
                let (src, dst) = edge_endpoints(p, cur);
                for rm in p.resolved_maps() {
                    let Some(img) = p.cell_image(rm, 1, cur) else { continue };
                    // lift values at both endpoints of the source edge
                    let (sci, _) = p.split_cell(1, cur);
                    let lv = rm.lift[src - p.vertex_offset(sci)];
                    let lw = rm.lift[dst - p.vertex_offset(sci)];
                    // image link: gamma(v) U(e) gamma(w)^-1, reversed if the
                    // canonical image edge is flipped
                    let (na, nb, nflip) = if img.sign > 0.0 {
                        (lv.mul(&t.a), lw.mul(&t.b), t.flip)
                    } else {
                        (lw.mul(&t.b), lv.mul(&t.a), !t.flip)
                    };
                    let slot = &mut edges[img.cell];
                    if slot.orbit == usize::MAX {
                        *slot = EdgeTransport {
                            orbit: orbit_id,
                            a: na,
                            b: nb,
                            flip: nflip,
                        };
                        members.push(img.cell);
                        queue.push(img.cell);
                    } else {
                        // non-tree edge: existing = new as maps of U_rep
                        let e = *slot;
                        let a2 = e.a.conj().mul(&na);
                        let b2 = e.b.conj().mul(&nb);
                        if e.flip != nflip {
                            constraints.push((a2, b2, true));
                        } else {
                            let nontrivial = a2.imag().iter().map(|c| c.abs()).sum::<f64>()
                                + b2.imag().iter().map(|c| c.abs()).sum::<f64>()
                                + (a2.w() - b2.w()).abs()
                                > 1e-12;
                            if nontrivial {
                                constraints.push((a2, b2, false));
                            }
                        }
                    }
                }
            }
            orbits.push(EdgeOrbit {
                rep: start,
                members,
                constraints,
            });
        }
        LinkOrbits { edges, orbits }
    }

    pub fn n_orbits(&self) -> usize {
        self.orbits.len()
    }

    /// True if any orbit carries a non-trivial stabilizer constraint.
    pub fn has_constraints(&self) -> bool {
        self.orbits.iter().any(|o| !o.constraints.is_empty())
    }
}

/// SU(2) gauge field on edge-orbit representatives.
#[derive(Debug, Clone)]
pub struct EquivariantGaugeField {
    pub reps: Vec<Quat>,
}

impl EquivariantGaugeField {
    pub fn identity(orbits: &LinkOrbits) -> EquivariantGaugeField {
        EquivariantGaugeField {
            reps: vec![Quat::IDENTITY; orbits.n_orbits()],
        }
    }

    /// Full link field from the representative values.
    pub fn links(&self, orbits: &LinkOrbits) -> Vec<Quat> {
        orbits
            .edges
            .iter()
            .map(|t| {
                let u = self.reps[t.orbit];
                let u = if t.flip { u.conj() } else { u };
                t.a.mul(&u).mul(&t.b.conj())
            })
            .collect()
    }

    pub fn normalize(&mut self) {
        for q in &mut self.reps {
            *q = q.normalized();
        }
    }

    pub fn max_unit_defect(&self) -> f64 {
        self.reps
            .iter()
            .fold(0.0f64, |m, q| m.max((q.norm() - 1.0).abs()))
    }
}

/// Max residual of the link equivariance constraint over all generators.
pub fn equivariance_residual(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
) -> f64 {
    let links = field.links(orbits);
    let mut worst: f64 = 0.0;
    for rm in p.resolved_maps() {
        for cur in 0..links.len() {
            let Some(img) = p.cell_image(rm, 1, cur) else { continue };
            let (src, dst) = edge_endpoints(p, cur);
            let (sci, _) = p.split_cell(1, cur);
            let lv = rm.lift[src - p.vertex_offset(sci)];
            let lw = rm.lift[dst - p.vertex_offset(sci)];
            let mapped = lv.mul(&links[cur]).mul(&lw.conj());
            let mapped = if img.sign > 0.0 { mapped } else { mapped.conj() };
            let d = mapped.add(&links[img.cell].scale(-1.0));
            worst = worst.max(d.norm());
        }
    }
    worst
}

/// Read representative values off a full link field and check that the
/// reconstruction reproduces it.
pub fn from_links(
    orbits: &LinkOrbits,
    links: &[Quat],
    tol: f64,
) -> Result<EquivariantGaugeField> {
    let mut reps = Vec::with_capacity(orbits.n_orbits());
    for o in &orbits.orbits {
        reps.push(links[o.rep]);
    }
    let field = EquivariantGaugeField { reps };
    let rebuilt = field.links(orbits);
    let mut worst: f64 = 0.0;
    for (a, b) in rebuilt.iter().zip(links) {
        worst = worst.max(a.add(&b.scale(-1.0)).norm());
    }
    if worst > tol {
        return Err(Error::EquivarianceError(format!(
            "link field is not equivariant (reconstruction residual {worst:.3e})"
        )));
    }
    Ok(field)
}

/// Field-strength construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurvatureMethod {
    /// Average of the four plaquettes cornered at the site, then log.
    Clover,
    /// Single plaquette based at the site.
    Plaquette,
}

/// su(2)-valued field strength with its construction tag.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    pub f: Cochain,
    pub method: CurvatureMethod,
}

/// One step of a plaquette loop: a global edge traversed forward or inverted.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LoopStep {
    pub edge: usize,
    pub inverted: bool,
}

/// The four clover loops at (chart, vertex, plane), each four steps based at
/// the site and circulating with the +e_i ^ +e_j orientation.
pub(crate) fn clover_loops(
    p: &FoliationPresentation,
    chart: usize,
    v_idx: usize,
    plane: usize,
) -> [[LoopStep; 4]; 4] {
    let ch = &p.charts[chart];
    let off = p.cell_offset(1, chart);
    let dirs = DIR_SETS[2][plane];
    let (di, dj) = (dirs[0], dirs[1]);
    let v = ch.vertex_coords(v_idx);
    let vi = ch.step(v, di, true); // v + i
    let vj = ch.step(v, dj, true); // v + j
    let vmi = ch.step(v, di, false); // v - i
    let vmj = ch.step(v, dj, false); // v - j
    let vmi_j = ch.step(vmi, dj, true); // v - i + j
    let vmi_mj = ch.step(vmi, dj, false); // v - i - j
    let vi_mj = ch.step(vi, dj, false); // v + i - j

    let e = |w: [usize; 4], d: usize| off + ch.cell_index(1, ch.vertex_index(w), d);
    let fwd = |w: [usize; 4], d: usize| LoopStep {
        edge: e(w, d),
        inverted: false,
    };
    let inv = |w: [usize; 4], d: usize| LoopStep {
        edge: e(w, d),
        inverted: true,
    };

    [
        // v -> v+i -> v+i+j -> v+j -> v
        [fwd(v, di), fwd(vi, dj), inv(vj, di), inv(v, dj)],
        // v -> v+j -> v+j-i -> v-i -> v
        [fwd(v, dj), inv(vmi_j, di), inv(vmi, dj), fwd(vmi, di)],
        // v -> v-i -> v-i-j -> v-j -> v
        [inv(vmi, di), inv(vmi_mj, dj), fwd(vmi_mj, di), fwd(vmj, dj)],
        // v -> v-j -> v-j+i -> v+i -> v
        [inv(vmj, dj), fwd(vmj, di), fwd(vi_mj, dj), inv(v, di)],
    ]
}

pub(crate) fn loop_product(links: &[Quat], steps: &[LoopStep; 4]) -> Quat {
    let mut q = Quat::IDENTITY;
    for s in steps {
        let u = if s.inverted {
            links[s.edge].conj()
        } else {
            links[s.edge]
        };
        q = q.mul(&u);
    }
    q
}

/// Clover (or raw plaquette) field strength. Exactly zero on the identity
/// field; site-attached equivariant by construction.
pub fn curvature_with(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
    method: CurvatureMethod,
) -> Result<CurvatureField> {
    let links = field.links(orbits);
    let mut f = Cochain::zeros(p, 2, Value::Su2);
    for (ci, chart) in p.charts.iter().enumerate() {
        let off2 = p.cell_offset(2, ci);
        for v_idx in 0..chart.vertex_count() {
            for plane in 0..6 {
                let loops = clover_loops(p, ci, v_idx, plane);
                let cell = off2 + chart.cell_index(2, v_idx, plane);
                let value = match method {
                    CurvatureMethod::Clover => {
                        let mut avg = Quat([0.0; 4]);
                        for steps in &loops {
                            let q = loop_product(&links, steps);
                            check_branch(ci, cell, &q)?;
                            avg = avg.add(&q.scale(0.25));
                        }
                        check_branch(ci, cell, &avg.normalized())?;
                        avg.log()
                    }
                    CurvatureMethod::Plaquette => {
                        let q = loop_product(&links, &loops[0]);
                        check_branch(ci, cell, &q)?;
                        q.log()
                    }
                };
                f.set_vec(cell, value);
            }
        }
    }
    Ok(CurvatureField { f, method })
}

pub fn curvature(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
) -> Result<CurvatureField> {
    curvature_with(p, orbits, field, CurvatureMethod::Clover)
}

fn check_branch(chart: usize, cell: usize, q: &Quat) -> Result<()> {
    if q.re_trace() <= -2.0 + 1e-9 {
        return Err(Error::BranchCutError {
            chart,
            cell,
            trace: q.re_trace(),
        });
    }
    Ok(())
}

/// Equivariance residual of an su(2) 2-cochain under the site-attached
/// transport (the natural covariance of the clover field strength).
pub fn curvature_equivariance_residual(p: &FoliationPresentation, f: &Cochain) -> f64 {
    let table = p.site_plane_table();
    let mut worst: f64 = 0.0;
    for orbit in &table.orbits {
        let rep_val = {
            let t = table.cells[orbit.rep];
            let v = f.vec_at(orbit.rep);
            let back = t.lift.conj().rotate(&v);
            [t.sign * back[0], t.sign * back[1], t.sign * back[2]]
        };
        for &m in &orbit.members {
            let t = table.cells[m];
            let expect = t.lift.rotate(&rep_val);
            let got = f.vec_at(m);
            for j in 0..3 {
                worst = worst.max((got[j] - t.sign * expect[j]).abs());
            }
        }
    }
    worst
}

/// Pointwise Tr(F ^ F) coefficient: c4(v) = sum_S sign(S) Tr(F_S F_{S^c}).
pub fn trace_f_wedge_f(p: &FoliationPresentation, f: &Cochain) -> Cochain {
    let mut out = Cochain::zeros(p, 4, Value::Scalar);
    for (ci, chart) in p.charts.iter().enumerate() {
        let off2 = p.cell_offset(2, ci);
        let off4 = p.cell_offset(4, ci);
        for v_idx in 0..chart.vertex_count() {
            let mut c4 = 0.0;
            for s_pos in 0..6 {
                let a = f.vec_at(off2 + chart.cell_index(2, v_idx, s_pos));
                let b = f.vec_at(off2 + chart.cell_index(2, v_idx, COMPLEMENT_2[s_pos]));
                c4 += SPLIT_SIGN_2[s_pos] * crate::su2::trace_product(&a, &b);
            }
            out.data[off4 + v_idx] = c4;
        }
    }
    out
}

/// Energy and charge summary of a field.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyCharge {
    pub ym: f64,
    pub charge: f64,
    pub plus_norm_sq: f64,
    pub minus_norm_sq: f64,
    pub identity_residual: f64,
}

/// YM = <F,F>, charge = (1/8 pi^2) int' Tr(F^F), and the split norms, all from
/// the same clover F so that YM - 8 pi^2 k - 2|F+|^2 vanishes to rounding.
pub fn energy_charge(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
) -> Result<EnergyCharge> {
    let cf = curvature(p, orbits, field)?;
    energy_charge_of_curvature(p, &cf.f)
}

pub fn energy_charge_of_curvature(
    p: &FoliationPresentation,
    f: &Cochain,
) -> Result<EnergyCharge> {
    let ym = inner_theta(p, f, f)?;
    let (plus, minus) = split_selfdual(p, f)?;
    let plus_norm_sq = inner_theta(p, &plus, &plus)?;
    let minus_norm_sq = inner_theta(p, &minus, &minus)?;
    let c4 = trace_f_wedge_f(p, f);
    let charge = crate::forms::integral_form(p, &c4)? / (8.0 * PI * PI);
    let lhs = ym - 8.0 * PI * PI * charge - 2.0 * plus_norm_sq;
    let scale = ym.abs().max((8.0 * PI * PI * charge).abs()).max(1e-30);
    Ok(EnergyCharge {
        ym,
        charge,
        plus_norm_sq,
        minus_norm_sq,
        identity_residual: lhs.abs() / scale,
    })
}

/// |F+|^2 of the clover field strength.
pub fn fasd_residual(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
) -> Result<f64> {
    Ok(energy_charge(p, orbits, field)?.plus_norm_sq)
}

/// Constant-flux diagonal field: 2 pi m1 |G| / (N1 N2) per (1,2)-plaquette in
/// the sigma3 (quaternion k) direction, same in the (3,4)-plane. The flux is
/// normalized per pseudogroup quotient so that (m, -m) stays anti-self-dual on
/// every preset that admits it; compatibility with the generators is checked
/// and rejected otherwise.
pub fn embed_abelian(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    m1: i64,
    m2: i64,
) -> Result<EquivariantGaugeField> {
    if p.charts.len() != 1 {
        return Err(Error::EquivarianceError(
            "abelian embed needs a single chart".into(),
        ));
    }
    let chart = &p.charts[0];
    let ext = chart.extent;
    let periods = p.translation_periods(0);
    let order = p.group_order() as i64;
    let mut links = vec![Quat::IDENTITY; p.cell_total(1)];

    for (m, (di, dj), period_i) in [
        (m1, (0usize, 1usize), periods[0]),
        (m2, (2usize, 3usize), periods[2]),
    ] {
        if m == 0 {
            continue;
        }
        let cells = (ext[di] * ext[dj]) as f64;
        let a = 2.0 * PI * (m * order) as f64 / cells;
        // seam pattern validity: a * N_j * period_i must be a multiple of 2 pi
        let q = (m * order * period_i as i64) as f64 / ext[di] as f64;
        if (q - q.round()).abs() > 1e-12 {
            return Err(Error::EquivarianceError(format!(
                "flux {m} has no equivariant constant-curvature representative"
            )));
        }
        for v_idx in 0..chart.vertex_count() {
            let v = chart.vertex_coords(v_idx);
            // U_i(v) = exp(-i a v_j)
            let phase = -a * v[dj] as f64;
            links[chart.cell_index(1, v_idx, di)] =
                links[chart.cell_index(1, v_idx, di)].mul(&Quat::exp(&[0.0, 0.0, phase]));
            // seam at v_j = N_j - 1: U_j(v) = exp(i a N_j (v_i mod period))
            if v[dj] == ext[dj] - 1 {
                let phase = a * ext[dj] as f64 * (v[di] % period_i) as f64;
                links[chart.cell_index(1, v_idx, dj)] =
                    links[chart.cell_index(1, v_idx, dj)].mul(&Quat::exp(&[0.0, 0.0, phase]));
            }
        }
    }
    let field = from_links(orbits, &links, 1e-10)?;
    let res = equivariance_residual(p, orbits, &field);
    if res > 1e-10 {
        return Err(Error::EquivarianceError(format!(
            "abelian flux ({m1},{m2}) incompatible with the pseudogroup (residual {res:.3e})"
        )));
    }
    Ok(field)
}

/// Gauge transformation values on vertex-orbit representatives.
#[derive(Debug, Clone)]
pub struct GaugeTransform {
    pub reps: Vec<Quat>,
}

impl GaugeTransform {
    pub fn identity(p: &FoliationPresentation) -> GaugeTransform {
        GaugeTransform {
            reps: vec![Quat::IDENTITY; p.cell_orbit_table(0).n_orbits()],
        }
    }

    pub fn random(p: &FoliationPresentation, seed: u64) -> GaugeTransform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = p.cell_orbit_table(0);
        let reps = (0..table.n_orbits())
            .map(|_| {
                Quat::exp(&[
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        GaugeTransform { reps }
    }

    /// Value at a global vertex via the orbit transport (conjugation by the
    /// accumulated lift).
    pub fn at_vertex(&self, p: &FoliationPresentation, vertex: usize) -> Quat {
        let t = p.cell_orbit_table(0).cells[vertex];
        let s = self.reps[t.orbit];
        t.lift.mul(&s).mul(&t.lift.conj())
    }
}

/// Standard link transformation U(e) -> s(src) U(e) s(dst)^-1, applied on the
/// representatives; the result is exactly equivariant again.
pub fn apply_gauge(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
    s: &GaugeTransform,
) -> EquivariantGaugeField {
    let mut reps = Vec::with_capacity(field.reps.len());
    for (oi, o) in orbits.orbits.iter().enumerate() {
        let (src, dst) = edge_endpoints(p, o.rep);
        let u = s
            .at_vertex(p, src)
            .mul(&field.reps[oi])
            .mul(&s.at_vertex(p, dst).conj());
        reps.push(u);
    }
    EquivariantGaugeField { reps }
}

/// Deterministic rough field: identity links perturbed by exp of eps-scaled
/// Gaussian noise on the orbit representatives. Constrained orbits stay at the
/// identity.
pub fn random_equivariant_field(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    seed: u64,
    roughness: f64,
) -> Result<EquivariantGaugeField> {
    if !(0.0..=1.0).contains(&roughness) {
        return Err(Error::BadInput("roughness must lie in [0,1]".into()));
    }
    let _ = p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reps = Vec::with_capacity(orbits.n_orbits());
    for o in &orbits.orbits {
        let x: Su2Vec = [
            roughness * normal(&mut rng),
            roughness * normal(&mut rng),
            roughness * normal(&mut rng),
        ];
        if o.constraints.is_empty() {
            reps.push(Quat::exp(&x));
        } else {
            reps.push(Quat::IDENTITY);
        }
    }
    Ok(EquivariantGaugeField { reps })
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Basis of the invariant su(2) 0-cochains (per vertex orbit, the
/// stabilizer-fixed su(2) subspace).
#[derive(Debug, Clone)]
pub struct Su2VertexBasis {
    /// (orbit index, local basis vectors).
    pub blocks: Vec<(usize, Vec<Su2Vec>)>,
}

impl Su2VertexBasis {
    pub fn build(p: &FoliationPresentation) -> Su2VertexBasis {
        let table = p.cell_orbit_table(0);
        let blocks = table
            .orbits
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.su2_basis.is_empty())
            .map(|(i, o)| (i, o.su2_basis.clone()))
            .collect();
        Su2VertexBasis { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|(_, b)| b.len()).sum()
    }

    /// Embed coordinates into an invariant su(2) 0-cochain.
    pub fn embed(&self, p: &FoliationPresentation, x: &[f64]) -> Cochain {
        let table = p.cell_orbit_table(0);
        let mut c = Cochain::zeros(p, 0, Value::Su2);
        let mut k = 0;
        for (oi, basis) in &self.blocks {
            let mut rep_val = [0.0f64; 3];
            for b in basis {
                for j in 0..3 {
                    rep_val[j] += x[k] * b[j];
                }
                k += 1;
            }
            for &m in &table.orbits[*oi].members {
                let t = table.cells[m];
                let v = t.lift.rotate(&rep_val);
                c.set_vec(m, v);
            }
        }
        c
    }
}

/// Matrix of the covariant coboundary eta -> eta(src) - Ad(U_e) eta(dst) from
/// invariant su(2) 0-cochains to per-representative-edge su(2) tangents.
pub fn gauge_action_matrix(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
    basis: &Su2VertexBasis,
) -> nalgebra::DMatrix<f64> {
    let table = p.cell_orbit_table(0);
    let mut m = nalgebra::DMatrix::<f64>::zeros(3 * orbits.n_orbits(), basis.dim());
    let mut col = 0;
    for (oi, local) in &basis.blocks {
        for bvec in local {
            // eta with value bvec at the orbit's representative
            for (ei, eo) in orbits.orbits.iter().enumerate() {
                let (src, dst) = edge_endpoints(p, eo.rep);
                let mut xi = [0.0f64; 3];
                for (vtx, sgn) in [(src, 1.0), (dst, -1.0)] {
                    let t = table.cells[vtx];
                    if t.orbit != *oi {
                        continue;
                    }
                    let val = t.lift.rotate(bvec);
                    if sgn > 0.0 {
                        for j in 0..3 {
                            xi[j] += val[j];
                        }
                    } else {
                        let rot = field.reps[ei].rotate(&val);
                        for j in 0..3 {
                            xi[j] -= rot[j];
                        }
                    }
                }
                for j in 0..3 {
                    m[(3 * ei + j, col)] = xi[j];
                }
            }
            col += 1;
        }
    }
    m
}

/// Kernel of the covariant coboundary on invariant su(2) 0-cochains: its
/// dimension counts reducibility, and the basis spans the stabilizer algebra.
pub fn reducibility_kernel(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
) -> (usize, Vec<Cochain>) {
    let basis = Su2VertexBasis::build(p);
    let m = gauge_action_matrix(p, orbits, field, &basis);
    let (_, null) = nullspace(&m, RANK_RTOL);
    let kernel: Vec<Cochain> = null.iter().map(|x| basis.embed(p, x)).collect();
    (kernel.len(), kernel)
}
