//! Codimension-4 foliation presentations: a complete transversal of periodic
//! cubical charts, a holonomy pseudogroup generated by chart isometries with
//! bundle lifts, the leafwise weight theta, and the mean-curvature cochain
//! kappa.
//!
//! Pseudogroup elements are globally defined affine lattice isometries
//! x -> R x + t with R a signed permutation, det R = +1 (transverse
//! orientation). The group closure is required to be finite; every basic
//! quantity on the foliation enters through invariant objects on the charts,
//! weighted by theta.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::complex::{Chart, DIR_SETS};
use crate::orbits::{CellImage, OrbitTable};
use crate::su2::Quat;
use crate::{Error, Result};

/// Affine lattice isometry x -> R x + t; R e_i = sign[i] e_[perm[i]].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VertexMap {
    pub perm: [usize; 4],
    pub sign: [i8; 4],
    pub trans: [i64; 4],
}

impl VertexMap {
    pub fn identity() -> Self {
        VertexMap {
            perm: [0, 1, 2, 3],
            sign: [1; 4],
            trans: [0; 4],
        }
    }

    pub fn translation(t: [i64; 4]) -> Self {
        VertexMap {
            perm: [0, 1, 2, 3],
            sign: [1; 4],
            trans: t,
        }
    }

    /// Apply without wrapping.
    pub fn apply(&self, v: [i64; 4]) -> [i64; 4] {
        let mut out = self.trans;
        for i in 0..4 {
            out[self.perm[i]] += self.sign[i] as i64 * v[i];
        }
        out
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &VertexMap) -> VertexMap {
        let mut perm = [0; 4];
        let mut sign = [1i8; 4];
        let mut trans = self.trans;
        for i in 0..4 {
            let j = other.perm[i];
            perm[i] = self.perm[j];
            sign[i] = self.sign[j] * other.sign[i];
            trans[self.perm[j]] += self.sign[j] as i64 * other.trans[j];
        }
        VertexMap { perm, sign, trans }
    }

    pub fn inverse(&self) -> VertexMap {
        let mut perm = [0; 4];
        let mut sign = [1i8; 4];
        let mut trans = [0i64; 4];
        for i in 0..4 {
            perm[self.perm[i]] = i;
            sign[self.perm[i]] = self.sign[i];
            trans[i] = -(self.sign[i] as i64) * self.trans[self.perm[i]];
        }
        VertexMap { perm, sign, trans }
    }

    /// Reduce the translation mod the target extents.
    pub fn canonical(&self, extent: [usize; 4]) -> VertexMap {
        let mut m = *self;
        for i in 0..4 {
            let n = extent[i] as i64;
            m.trans[i] = ((m.trans[i] % n) + n) % n;
        }
        m
    }

    pub fn det(&self) -> i8 {
        let mut inv = 0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                if self.perm[i] > self.perm[j] {
                    inv += 1;
                }
            }
        }
        let p = if inv % 2 == 0 { 1 } else { -1 };
        p * self.sign.iter().product::<i8>()
    }

    pub fn is_identity(&self) -> bool {
        *self == VertexMap::identity()
    }

    pub fn is_pure_translation(&self) -> bool {
        self.perm == [0, 1, 2, 3] && self.sign == [1; 4]
    }
}

/// One pseudogroup generator with its lifted action on the foliated bundle.
#[derive(Debug, Clone)]
pub struct Generator {
    pub source_chart: usize,
    pub target_chart: usize,
    pub vertex_map: VertexMap,
    /// SU(2) lift per source-chart vertex.
    pub bundle_lift: Vec<Quat>,
}

impl Generator {
    pub fn new(source_chart: usize, target_chart: usize, vertex_map: VertexMap) -> Self {
        Generator {
            source_chart,
            target_chart,
            vertex_map,
            bundle_lift: Vec::new(),
        }
    }
}

/// Internal: generator or inverse, with per-vertex lifts resolved.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedMap {
    pub source: usize,
    pub target: usize,
    pub map: VertexMap,
    pub lift: Vec<Quat>,
}

/// One element of the (finite) group closure.
#[derive(Debug, Clone)]
pub struct GroupElement {
    pub source: usize,
    pub target: usize,
    pub map: VertexMap,
    pub lift: Vec<Quat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
}

/// Per-check residual report from `FoliationPresentation::validate`.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Maximum group closure size before `UnsupportedHolonomy` is raised.
pub const DEFAULT_CLOSURE_BOUND: usize = 4096;

/// A complete transversal with holonomy pseudogroup, weight and curvature data.
#[derive(Debug, Clone)]
pub struct FoliationPresentation {
    pub charts: Vec<Chart>,
    pub generators: Vec<Generator>,
    /// Leafwise weight per chart vertex; positive, not required invariant.
    pub theta: Vec<Vec<f64>>,
    /// Mean-curvature 1-cochain per chart edge (vertex-major, direction fastest).
    pub kappa: Vec<Vec<f64>>,
    pub taut: bool,

    pub(crate) resolved: Vec<ResolvedMap>,
    pub(crate) closure: Vec<GroupElement>,
    pub(crate) cocycle_residual: f64,
    /// Orbit tables for geometric cells, by degree.
    pub(crate) cell_orbits: Vec<OrbitTable>,
    /// Orbit table for site-attached (vertex, plane) pairs used by su(2)
    /// 2-cochains; the action moves the site without base shifts so that the
    /// Hodge split commutes with transport.
    pub(crate) site_plane_orbits: OrbitTable,
}

impl FoliationPresentation {
    pub fn new(
        charts: Vec<Chart>,
        generators: Vec<Generator>,
        theta: Vec<Vec<f64>>,
        kappa: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::with_bound(charts, generators, theta, kappa, DEFAULT_CLOSURE_BOUND)
    }

    pub fn with_bound(
        charts: Vec<Chart>,
        mut generators: Vec<Generator>,
        theta: Vec<Vec<f64>>,
        kappa: Vec<Vec<f64>>,
        closure_bound: usize,
    ) -> Result<Self> {
        if charts.is_empty() {
            return Err(Error::BadInput("presentation needs at least one chart".into()));
        }
        for (i, c) in charts.iter().enumerate() {
            if c.id != i {
                return Err(Error::BadInput("chart ids must be 0..n in order".into()));
            }
        }
        if theta.len() != charts.len()
            || theta
                .iter()
                .zip(&charts)
                .any(|(t, c)| t.len() != c.vertex_count())
        {
            return Err(Error::BadInput("theta layout does not match charts".into()));
        }
        if kappa.len() != charts.len()
            || kappa
                .iter()
                .zip(&charts)
                .any(|(k, c)| k.len() != c.cell_count(1))
        {
            return Err(Error::BadInput("kappa layout does not match chart edges".into()));
        }
        if theta.iter().flatten().any(|&t| !(t > 0.0)) {
            return Err(Error::BadInput("theta must be positive".into()));
        }

        for g in &mut generators {
            if g.source_chart >= charts.len() || g.target_chart >= charts.len() {
                return Err(Error::InvalidGenerator("chart id out of range".into()));
            }
            let src = &charts[g.source_chart];
            let tgt = &charts[g.target_chart];
            if g.vertex_map.det() != 1 {
                return Err(Error::InvalidGenerator(
                    "vertex map must preserve orientation (det = +1)".into(),
                ));
            }
            for i in 0..4 {
                if tgt.extent[g.vertex_map.perm[i]] != src.extent[i] {
                    return Err(Error::InvalidGenerator(format!(
                        "extents incompatible along axis {}",
                        i + 1
                    )));
                }
            }
            g.vertex_map = g.vertex_map.canonical(tgt.extent);
            if g.bundle_lift.is_empty() {
                g.bundle_lift = vec![Quat::IDENTITY; src.vertex_count()];
            } else if g.bundle_lift.len() != src.vertex_count() {
                return Err(Error::InvalidGenerator(
                    "bundle lift length does not match source chart vertices".into(),
                ));
            }
        }

        let resolved = resolve_maps(&charts, &generators);
        let (closure, cocycle_residual) = close_group(&charts, &resolved, closure_bound)?;

        let mut p = FoliationPresentation {
            charts,
            generators,
            theta,
            kappa,
            taut: true,
            resolved,
            closure,
            cocycle_residual,
            cell_orbits: Vec::new(),
            site_plane_orbits: OrbitTable {
                cells: Vec::new(),
                orbits: Vec::new(),
            },
        };
        p.taut = p.kappa.iter().flatten().all(|&k| k == 0.0);
        p.build_orbits();
        Ok(p)
    }

    fn build_orbits(&mut self) {
        let n_actions = self.resolved.len();
        for degree in 0..=4 {
            let n = self.cell_total(degree);
            let table = OrbitTable::build(n, n_actions, |a, cell| {
                self.cell_image(&self.resolved[a], degree, cell)
            });
            self.cell_orbits.push(table);
        }
        let n_sp = self.vertex_total() * 6;
        let mut sp = OrbitTable::build(n_sp, n_actions, |a, idx| {
            self.site_plane_image(&self.resolved[a], idx)
        });
        self.assign_stabilizer_orders(&mut sp, None);
        self.site_plane_orbits = sp;
        for degree in 0..=4 {
            let mut t = std::mem::replace(
                &mut self.cell_orbits[degree],
                OrbitTable {
                    cells: Vec::new(),
                    orbits: Vec::new(),
                },
            );
            self.assign_stabilizer_orders(&mut t, Some(degree));
            self.cell_orbits[degree] = t;
        }
    }

    fn assign_stabilizer_orders(&self, table: &mut OrbitTable, degree: Option<usize>) {
        for orbit in &mut table.orbits {
            let rep = orbit.rep;
            let mut stab = 0;
            for el in &self.closure {
                let rm = ResolvedMap {
                    source: el.source,
                    target: el.target,
                    map: el.map,
                    lift: el.lift.clone(),
                };
                let img = match degree {
                    Some(d) => self.cell_image(&rm, d, rep),
                    None => self.site_plane_image(&rm, rep),
                };
                if let Some(img) = img {
                    if img.cell == rep {
                        stab += 1;
                    }
                }
            }
            orbit.stabilizer_order = stab.max(1);
        }
    }

    // ---- indexing helpers ----

    pub fn vertex_total(&self) -> usize {
        self.charts.iter().map(|c| c.vertex_count()).sum()
    }

    pub fn cell_total(&self, degree: usize) -> usize {
        self.charts.iter().map(|c| c.cell_count(degree)).sum()
    }

    pub fn cell_offset(&self, degree: usize, chart: usize) -> usize {
        self.charts[..chart]
            .iter()
            .map(|c| c.cell_count(degree))
            .sum()
    }

    pub fn vertex_offset(&self, chart: usize) -> usize {
        self.charts[..chart].iter().map(|c| c.vertex_count()).sum()
    }

    /// (chart, local cell) of a global cell index.
    pub fn split_cell(&self, degree: usize, mut cell: usize) -> (usize, usize) {
        for (i, c) in self.charts.iter().enumerate() {
            let n = c.cell_count(degree);
            if cell < n {
                return (i, cell);
            }
            cell -= n;
        }
        panic!("cell index out of range");
    }

    pub fn global_vertex(&self, chart: usize, coords: [usize; 4]) -> usize {
        self.vertex_offset(chart) + self.charts[chart].vertex_index(coords)
    }

    pub fn theta_at(&self, chart: usize, vertex: usize) -> f64 {
        self.theta[chart][vertex]
    }

    /// Image of a geometric cell under a pseudogroup element, with the
    /// orientation sign and the bundle lift at the source base vertex.
    pub(crate) fn cell_image(
        &self,
        rm: &ResolvedMap,
        degree: usize,
        global_cell: usize,
    ) -> Option<CellImage> {
        let (chart, local) = self.split_cell(degree, global_cell);
        if chart != rm.source {
            return None;
        }
        let src = &self.charts[chart];
        let tgt = &self.charts[rm.target];
        let (v_idx, set) = src.cell_parts(degree, local);
        let v = src.vertex_coords(v_idx);
        let vi = [v[0] as i64, v[1] as i64, v[2] as i64, v[3] as i64];
        let mut w = rm.map.apply(vi);
        let dirs = DIR_SETS[degree][set];
        let mut mapped: Vec<(usize, i8)> = Vec::with_capacity(dirs.len());
        for &d in dirs {
            let d2 = rm.map.perm[d];
            let s = rm.map.sign[d];
            if s < 0 {
                w[d2] -= 1;
            }
            mapped.push((d2, s));
        }
        let mut sign = 1.0;
        for (i, &(di, si)) in mapped.iter().enumerate() {
            if si < 0 {
                sign = -sign;
            }
            for &(dj, _) in &mapped[i + 1..] {
                if di > dj {
                    sign = -sign;
                }
            }
        }
        let mut sorted: Vec<usize> = mapped.iter().map(|&(d, _)| d).collect();
        sorted.sort_unstable();
        let set2 = crate::complex::set_pos(&sorted);
        let w = tgt.wrap(w);
        let cell2 = self.cell_offset(degree, rm.target)
            + tgt.cell_index(degree, tgt.vertex_index(w), set2);
        Some(CellImage {
            cell: cell2,
            sign,
            lift: rm.lift[v_idx],
        })
    }

    /// Image of a site-attached (vertex, plane) pair: the site moves without
    /// base shifts, the plane maps with its form-component sign.
    pub(crate) fn site_plane_image(&self, rm: &ResolvedMap, idx: usize) -> Option<CellImage> {
        let (chart, local) = {
            let mut i = idx;
            let mut found = None;
            for (ci, c) in self.charts.iter().enumerate() {
                let n = c.vertex_count() * 6;
                if i < n {
                    found = Some((ci, i));
                    break;
                }
                i -= n;
            }
            found?
        };
        if chart != rm.source {
            return None;
        }
        let src = &self.charts[chart];
        let tgt = &self.charts[rm.target];
        let v_idx = local / 6;
        let plane = local % 6;
        let v = src.vertex_coords(v_idx);
        let vi = [v[0] as i64, v[1] as i64, v[2] as i64, v[3] as i64];
        let w = tgt.wrap(rm.map.apply(vi));
        let dirs = DIR_SETS[2][plane];
        let mut mapped: Vec<(usize, i8)> = dirs
            .iter()
            .map(|&d| (rm.map.perm[d], rm.map.sign[d]))
            .collect();
        let mut sign = 1.0;
        if mapped[0].0 > mapped[1].0 {
            sign = -sign;
            mapped.swap(0, 1);
        }
        sign *= (mapped[0].1 * mapped[1].1) as f64;
        let plane2 = crate::complex::set_pos(&[mapped[0].0, mapped[1].0]);
        let sp_offset: usize = self.charts[..rm.target]
            .iter()
            .map(|c| c.vertex_count() * 6)
            .sum();
        Some(CellImage {
            cell: sp_offset + tgt.vertex_index(w) * 6 + plane2,
            sign,
            lift: rm.lift[v_idx],
        })
    }

    pub fn cell_orbit_table(&self, degree: usize) -> &OrbitTable {
        &self.cell_orbits[degree]
    }

    /// Generators and their inverses with per-vertex lifts resolved.
    pub(crate) fn resolved_maps(&self) -> &[ResolvedMap] {
        &self.resolved
    }

    pub fn site_plane_table(&self) -> &OrbitTable {
        &self.site_plane_orbits
    }

    pub fn group_order(&self) -> usize {
        self.closure.len()
    }

    pub fn closure_elements(&self) -> &[GroupElement] {
        &self.closure
    }

    // ---- operations ----

    /// Per-check residual report: metric invariance, bundle-lift unit norm,
    /// cocycle consistency, theta positivity, kappa invariance.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();

        let mut metric_res: f64 = 0.0;
        for g in &self.generators {
            let src = &self.charts[g.source_chart];
            let tgt = &self.charts[g.target_chart];
            for i in 0..4 {
                metric_res = metric_res.max((tgt.metric[g.vertex_map.perm[i]] - src.metric[i]).abs());
            }
        }
        checks.push(CheckResult {
            name: "metric-invariance".into(),
            passed: metric_res <= 1e-12,
            residual: metric_res,
        });

        let mut unit_res: f64 = 0.0;
        for g in &self.generators {
            for q in &g.bundle_lift {
                unit_res = unit_res.max((q.norm() - 1.0).abs());
            }
        }
        checks.push(CheckResult {
            name: "unit-bundle-lift".into(),
            passed: unit_res <= 1e-12,
            residual: unit_res,
        });

        checks.push(CheckResult {
            name: "cocycle-consistency".into(),
            passed: self.cocycle_residual <= 1e-10,
            residual: self.cocycle_residual,
        });

        let theta_min = self
            .theta
            .iter()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        checks.push(CheckResult {
            name: "theta-positive".into(),
            passed: theta_min > 0.0,
            residual: (-theta_min).max(0.0),
        });

        let mut kappa_res: f64 = 0.0;
        for rm in &self.resolved {
            let off_src = self.cell_offset(1, rm.source);
            let n = self.charts[rm.source].cell_count(1);
            for local in 0..n {
                let e = off_src + local;
                if let Some(img) = self.cell_image(rm, 1, e) {
                    let (tc, tl) = self.split_cell(1, img.cell);
                    let v_img = self.kappa[tc][tl];
                    let v_src = self.kappa[rm.source][local];
                    kappa_res = kappa_res.max((v_img - img.sign * v_src).abs());
                }
            }
        }
        checks.push(CheckResult {
            name: "kappa-invariance".into(),
            passed: kappa_res <= 1e-12,
            residual: kappa_res,
        });

        ValidationReport { checks }
    }

    /// Sum of theta over the orbit of a vertex: the volume of its leaf.
    pub fn leaf_volume(&self, chart: usize, coords: [usize; 4]) -> f64 {
        let g = self.global_vertex(chart, coords);
        self.leaf_volume_of_orbit(self.cell_orbits[0].cells[g].orbit)
    }

    pub fn leaf_volume_of_orbit(&self, orbit: usize) -> f64 {
        self.cell_orbits[0].orbits[orbit]
            .members
            .iter()
            .map(|&m| {
                let (c, l) = self.split_cell(0, m);
                self.theta[c][l]
            })
            .sum()
    }

    /// Content hash covering charts, generators, theta and kappa.
    pub fn content_hash(&self) -> String {
        let mut h = Fnv::new();
        for c in &self.charts {
            for &e in &c.extent {
                h.write_u64(e as u64);
            }
            for &g in &c.metric {
                h.write_u64(g.to_bits());
            }
        }
        for g in &self.generators {
            h.write_u64(g.source_chart as u64);
            h.write_u64(g.target_chart as u64);
            for i in 0..4 {
                h.write_u64(g.vertex_map.perm[i] as u64);
                h.write_u64(g.vertex_map.sign[i] as i64 as u64);
                h.write_u64(g.vertex_map.trans[i] as u64);
            }
            for q in &g.bundle_lift {
                for &c in &q.0 {
                    h.write_u64(c.to_bits());
                }
            }
        }
        for t in self.theta.iter().flatten() {
            h.write_u64(t.to_bits());
        }
        for k in self.kappa.iter().flatten() {
            h.write_u64(k.to_bits());
        }
        format!("{:016x}", h.finish())
    }

    /// Greatest common axis periods of the pure-translation subgroup, used by
    /// the abelian embeds to pick flux quantization on the quotient.
    pub fn translation_periods(&self, chart: usize) -> [usize; 4] {
        let ext = self.charts[chart].extent;
        let mut per = ext;
        for el in &self.closure {
            if el.source != chart || el.target != chart || !el.map.is_pure_translation() {
                continue;
            }
            for i in 0..4 {
                let t = el.map.trans[i].rem_euclid(ext[i] as i64) as usize;
                if t != 0 {
                    per[i] = gcd(per[i], t);
                }
            }
        }
        per
    }
}

/// theta-weighted integral of a degree-4 density cochain: sum over 4-cells of
/// theta(base) * value * sqrt(det g).
pub fn modified_integral(
    p: &FoliationPresentation,
    c: &crate::forms::Cochain,
) -> Result<f64> {
    if c.degree != 4 {
        return Err(Error::DegreeError {
            expected: 4,
            got: c.degree,
        });
    }
    c.check_layout(p)?;
    let mut total = 0.0;
    for (ci, chart) in p.charts.iter().enumerate() {
        let vol = chart.metric_det().sqrt();
        for v in 0..chart.vertex_count() {
            total += p.theta[ci][v] * c.scalar(p, ci, v) * vol;
        }
    }
    Ok(total)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn resolve_maps(charts: &[Chart], generators: &[Generator]) -> Vec<ResolvedMap> {
    let mut out = Vec::with_capacity(generators.len() * 2);
    for g in generators {
        out.push(ResolvedMap {
            source: g.source_chart,
            target: g.target_chart,
            map: g.vertex_map,
            lift: g.bundle_lift.clone(),
        });
        // inverse: lift_inv(y) = lift(phi^-1 y)^-1
        let inv = g.vertex_map.inverse().canonical(charts[g.source_chart].extent);
        let tgt = &charts[g.target_chart];
        let src = &charts[g.source_chart];
        let mut lift_inv = vec![Quat::IDENTITY; tgt.vertex_count()];
        for (w_idx, li) in lift_inv.iter_mut().enumerate() {
            let w = tgt.vertex_coords(w_idx);
            let wi = [w[0] as i64, w[1] as i64, w[2] as i64, w[3] as i64];
            let v = src.wrap(inv.apply(wi));
            *li = g.bundle_lift[src.vertex_index(v)].conj();
        }
        out.push(ResolvedMap {
            source: g.target_chart,
            target: g.source_chart,
            map: inv,
            lift: lift_inv,
        });
    }
    out
}

fn close_group(
    charts: &[Chart],
    seeds: &[ResolvedMap],
    bound: usize,
) -> Result<(Vec<GroupElement>, f64)> {
    let mut elements: Vec<GroupElement> = Vec::new();
    let mut index: HashMap<(usize, usize, VertexMap), usize> = HashMap::new();
    let mut residual: f64 = 0.0;

    let push = |elements: &mut Vec<GroupElement>,
                    index: &mut HashMap<(usize, usize, VertexMap), usize>,
                    residual: &mut f64,
                    el: GroupElement|
     -> bool {
        let key = (el.source, el.target, el.map);
        if let Some(&i) = index.get(&key) {
            // same base map reached twice: lifts must agree up to a global sign
            let mut best = f64::INFINITY;
            for s in [1.0, -1.0] {
                let mut worst: f64 = 0.0;
                for (a, b) in elements[i].lift.iter().zip(&el.lift) {
                    let d = a.add(&b.scale(-s));
                    worst = worst.max(d.norm());
                }
                best = best.min(worst);
            }
            *residual = residual.max(best);
            false
        } else {
            index.insert(key, elements.len());
            elements.push(el);
            true
        }
    };

    for (ci, c) in charts.iter().enumerate() {
        push(
            &mut elements,
            &mut index,
            &mut residual,
            GroupElement {
                source: ci,
                target: ci,
                map: VertexMap::identity(),
                lift: vec![Quat::IDENTITY; c.vertex_count()],
            },
        );
    }
    for s in seeds {
        push(
            &mut elements,
            &mut index,
            &mut residual,
            GroupElement {
                source: s.source,
                target: s.target,
                map: s.map.canonical(charts[s.target].extent),
                lift: s.lift.clone(),
            },
        );
    }

    let mut frontier: Vec<usize> = (0..elements.len()).collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &fi in &frontier {
            for gi in 0..elements.len() {
                for (first, second) in [(fi, gi), (gi, fi)] {
                    let (f, g) = (&elements[first], &elements[second]);
                    if f.target != g.source {
                        continue;
                    }
                    let map = g.map.compose(&f.map).canonical(charts[g.target].extent);
                    let src_chart = &charts[f.source];
                    let mid_chart = &charts[f.target];
                    let mut lift = vec![Quat::IDENTITY; src_chart.vertex_count()];
                    for (v_idx, lv) in lift.iter_mut().enumerate() {
                        let v = src_chart.vertex_coords(v_idx);
                        let vi = [v[0] as i64, v[1] as i64, v[2] as i64, v[3] as i64];
                        let mid = mid_chart.wrap(f.map.apply(vi));
                        *lv = g.lift[mid_chart.vertex_index(mid)].mul(&f.lift[v_idx]);
                    }
                    let el = GroupElement {
                        source: f.source,
                        target: g.target,
                        map,
                        lift,
                    };
                    if push(&mut elements, &mut index, &mut residual, el) {
                        next.push(elements.len() - 1);
                    }
                    if elements.len() > bound {
                        return Err(Error::UnsupportedHolonomy(bound));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok((elements, residual))
}

/// FNV-1a 64-bit.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }
    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

// ---- suspension builder and canonical instances ----

/// Chart data for `build_suspension`.
#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub extent: [usize; 4],
    pub metric: [f64; 4],
}

/// Generator data for `build_suspension`; identity lifts unless given.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub source_chart: usize,
    pub target_chart: usize,
    pub vertex_map: VertexMap,
    pub bundle_lift: Option<Vec<Quat>>,
}

/// Build a suspension presentation: unit leafwise weight, zero mean curvature.
pub fn build_suspension(
    chart_specs: &[ChartSpec],
    generator_specs: &[GeneratorSpec],
) -> Result<FoliationPresentation> {
    let mut charts = Vec::new();
    for (i, s) in chart_specs.iter().enumerate() {
        charts.push(Chart::new(i, s.extent, s.metric)?);
    }
    let mut generators = Vec::new();
    for s in generator_specs {
        let mut g = Generator::new(s.source_chart, s.target_chart, s.vertex_map);
        if let Some(l) = &s.bundle_lift {
            g.bundle_lift = l.clone();
        }
        generators.push(g);
    }
    let theta: Vec<Vec<f64>> = charts.iter().map(|c| vec![1.0; c.vertex_count()]).collect();
    let kappa: Vec<Vec<f64>> = charts.iter().map(|c| vec![0.0; c.cell_count(1)]).collect();
    FoliationPresentation::new(charts, generators, theta, kappa)
}

fn single_chart(n: usize) -> ChartSpec {
    ChartSpec {
        extent: [n; 4],
        metric: [1.0; 4],
    }
}

/// Trivial pseudogroup on one n^4 torus chart.
pub fn preset_p0(n: usize) -> Result<FoliationPresentation> {
    build_suspension(&[single_chart(n)], &[])
}

/// Order-2 translation x -> x + (2,0,0,0) mod n.
pub fn preset_p2(n: usize) -> Result<FoliationPresentation> {
    build_suspension(
        &[single_chart(n)],
        &[GeneratorSpec {
            source_chart: 0,
            target_chart: 0,
            vertex_map: VertexMap::translation([2, 0, 0, 0]),
            bundle_lift: None,
        }],
    )
}

/// Quarter rotation (x1,x2,x3,x4) -> (-x2,x1,x3,x4) mod n.
pub fn preset_p4(n: usize) -> Result<FoliationPresentation> {
    build_suspension(
        &[single_chart(n)],
        &[GeneratorSpec {
            source_chart: 0,
            target_chart: 0,
            vertex_map: VertexMap {
                perm: [1, 0, 2, 3],
                sign: [1, -1, 1, 1],
                trans: [0, 0, 0, 0],
            },
            bundle_lift: None,
        }],
    )
}

/// Resolve a preset by name.
pub fn preset(name: &str, n: usize) -> Result<FoliationPresentation> {
    match name {
        "p0" => preset_p0(n),
        "p2" => preset_p2(n),
        "p4" => preset_p4(n),
        other => Err(Error::BadInput(format!("unknown preset '{other}'"))),
    }
}
