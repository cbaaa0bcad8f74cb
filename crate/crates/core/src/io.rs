//! File formats: presentations, cochains and gauge fields as JSON headers
//! with base64 little-endian payloads.
//!
//! Buffers follow the in-memory order: charts in id order, vertices x4-fastest,
//! cells vertex-major with the direction set fastest. Field files embed the
//! presentation and edge-orbit hashes so that representative data cannot be
//! loaded against the wrong presentation.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::complex::Chart;
use crate::forms::{Cochain, Value};
use crate::gauge::{EquivariantGaugeField, LinkOrbits};
use crate::presentation::{FoliationPresentation, Generator, VertexMap};
use crate::su2::Quat;
use crate::{Error, Result};

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text.trim())
        .map_err(|e| Error::BadInput(format!("base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::BadInput("payload length not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn quats_to_f64s(qs: &[Quat]) -> Vec<f64> {
    qs.iter().flat_map(|q| q.0).collect()
}

fn f64s_to_quats(v: &[f64]) -> Result<Vec<Quat>> {
    if v.len() % 4 != 0 {
        return Err(Error::BadInput("quaternion payload length not a multiple of 4".into()));
    }
    Ok(v.chunks_exact(4)
        .map(|c| Quat([c[0], c[1], c[2], c[3]]))
        .collect())
}

// ---- presentation files ----

#[derive(Serialize, Deserialize)]
struct ChartFile {
    id: usize,
    extent: [usize; 4],
    metric: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    source_chart: usize,
    target_chart: usize,
    /// Signed permutation as a 4x4 integer matrix, row-major.
    matrix: [[i8; 4]; 4],
    translation: [i64; 4],
    /// Unit quaternions (w, x, y, z) per source-chart vertex.
    bundle_lifts: String,
}

#[derive(Serialize, Deserialize)]
struct PresentationFile {
    charts: Vec<ChartFile>,
    generators: Vec<GeneratorFile>,
    /// Positive weights per vertex: chart-major, x4-fastest.
    theta: String,
    /// Mean-curvature values per edge: vertex-major, direction fastest.
    kappa: String,
}

fn map_to_matrix(m: &VertexMap) -> [[i8; 4]; 4] {
    let mut out = [[0i8; 4]; 4];
    for i in 0..4 {
        out[m.perm[i]][i] = m.sign[i];
    }
    out
}

fn matrix_to_map(mat: &[[i8; 4]; 4], trans: [i64; 4]) -> Result<VertexMap> {
    let mut perm = [usize::MAX; 4];
    let mut sign = [0i8; 4];
    for col in 0..4 {
        for row in 0..4 {
            match mat[row][col] {
                0 => {}
                s @ (1 | -1) => {
                    if perm[col] != usize::MAX {
                        return Err(Error::BadInput("matrix column has two entries".into()));
                    }
                    perm[col] = row;
                    sign[col] = s;
                }
                _ => return Err(Error::BadInput("matrix entries must be -1, 0, 1".into())),
            }
        }
        if perm[col] == usize::MAX {
            return Err(Error::BadInput("matrix column is zero".into()));
        }
    }
    let mut seen = [false; 4];
    for &p in &perm {
        if seen[p] {
            return Err(Error::BadInput("matrix rows collide".into()));
        }
        seen[p] = true;
    }
    Ok(VertexMap { perm, sign, trans })
}

pub fn presentation_to_json(p: &FoliationPresentation) -> Result<String> {
    let charts = p
        .charts
        .iter()
        .map(|c| ChartFile {
            id: c.id,
            extent: c.extent,
            metric: c.metric,
        })
        .collect();
    let generators = p
        .generators
        .iter()
        .map(|g| GeneratorFile {
            source_chart: g.source_chart,
            target_chart: g.target_chart,
            matrix: map_to_matrix(&g.vertex_map),
            translation: g.vertex_map.trans,
            bundle_lifts: B64.encode(
                g.bundle_lift
                    .iter()
                    .flat_map(|q| q.0.iter().flat_map(|v| v.to_le_bytes()))
                    .collect::<Vec<u8>>(),
            ),
        })
        .collect();
    let theta: Vec<f64> = p.theta.iter().flatten().cloned().collect();
    let kappa: Vec<f64> = p.kappa.iter().flatten().cloned().collect();
    Ok(serde_json::to_string_pretty(&PresentationFile {
        charts,
        generators,
        theta: encode_f64s(&theta),
        kappa: encode_f64s(&kappa),
    })?)
}

pub fn presentation_from_json(text: &str) -> Result<FoliationPresentation> {
    let file: PresentationFile = serde_json::from_str(text)?;
    let mut charts = Vec::new();
    for c in &file.charts {
        charts.push(Chart::new(c.id, c.extent, c.metric)?);
    }
    let mut generators = Vec::new();
    for g in &file.generators {
        let map = matrix_to_map(&g.matrix, g.translation)?;
        let lifts = f64s_to_quats(&decode_f64s(&g.bundle_lifts)?)?;
        generators.push(Generator {
            source_chart: g.source_chart,
            target_chart: g.target_chart,
            vertex_map: map,
            bundle_lift: lifts,
        });
    }
    let theta_flat = decode_f64s(&file.theta)?;
    let kappa_flat = decode_f64s(&file.kappa)?;
    let mut theta = Vec::new();
    let mut kappa = Vec::new();
    let mut t_off = 0;
    let mut k_off = 0;
    for c in &charts {
        let nv = c.vertex_count();
        let ne = c.cell_count(1);
        if t_off + nv > theta_flat.len() || k_off + ne > kappa_flat.len() {
            return Err(Error::BadInput("theta/kappa payload too short".into()));
        }
        theta.push(theta_flat[t_off..t_off + nv].to_vec());
        kappa.push(kappa_flat[k_off..k_off + ne].to_vec());
        t_off += nv;
        k_off += ne;
    }
    if t_off != theta_flat.len() || k_off != kappa_flat.len() {
        return Err(Error::BadInput("theta/kappa payload too long".into()));
    }
    FoliationPresentation::new(charts, generators, theta, kappa)
}

pub fn save_presentation(p: &FoliationPresentation, path: &Path) -> Result<()> {
    std::fs::write(path, presentation_to_json(p)?)?;
    Ok(())
}

pub fn load_presentation(path: &Path) -> Result<FoliationPresentation> {
    presentation_from_json(&std::fs::read_to_string(path)?)
}

// ---- cochain files ----

#[derive(Serialize, Deserialize)]
struct CochainFile {
    degree: usize,
    value_type: String,
    /// Chart extents, as a layout check.
    chart_extents: Vec<[usize; 4]>,
    data: String,
}

pub fn cochain_to_json(p: &FoliationPresentation, c: &Cochain) -> Result<String> {
    c.check_layout(p)?;
    Ok(serde_json::to_string_pretty(&CochainFile {
        degree: c.degree,
        value_type: match c.value {
            Value::Scalar => "scalar".into(),
            Value::Su2 => "su2".into(),
        },
        chart_extents: p.charts.iter().map(|ch| ch.extent).collect(),
        data: encode_f64s(&c.data),
    })?)
}

pub fn cochain_from_json(p: &FoliationPresentation, text: &str) -> Result<Cochain> {
    let file: CochainFile = serde_json::from_str(text)?;
    let value = match file.value_type.as_str() {
        "scalar" => Value::Scalar,
        "su2" => Value::Su2,
        other => return Err(Error::BadInput(format!("unknown value type '{other}'"))),
    };
    if file.degree > 4 {
        return Err(Error::BadInput("degree out of range".into()));
    }
    let extents: Vec<[usize; 4]> = p.charts.iter().map(|ch| ch.extent).collect();
    if file.chart_extents != extents {
        return Err(Error::BadInput("cochain chart layout mismatch".into()));
    }
    let c = Cochain {
        degree: file.degree,
        value,
        data: decode_f64s(&file.data)?,
    };
    c.check_layout(p)?;
    Ok(c)
}

// ---- field files ----

#[derive(Serialize, Deserialize)]
struct FieldFile {
    presentation_hash: String,
    orbit_hash: String,
    reps: String,
}

/// Hash of the edge-orbit structure (representatives and member lists).
pub fn orbit_hash(orbits: &LinkOrbits) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut write = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    write(orbits.orbits.len() as u64);
    for o in &orbits.orbits {
        write(o.rep as u64);
        write(o.members.len() as u64);
        for &m in &o.members {
            write(m as u64);
        }
    }
    format!("{h:016x}")
}

pub fn field_to_json(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
) -> Result<String> {
    if field.reps.len() != orbits.n_orbits() {
        return Err(Error::BadInput("field layout mismatch".into()));
    }
    Ok(serde_json::to_string_pretty(&FieldFile {
        presentation_hash: p.content_hash(),
        orbit_hash: orbit_hash(orbits),
        reps: encode_f64s(&quats_to_f64s(&field.reps)),
    })?)
}

pub fn field_from_json(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    text: &str,
) -> Result<EquivariantGaugeField> {
    let file: FieldFile = serde_json::from_str(text)?;
    if file.presentation_hash != p.content_hash() {
        return Err(Error::BadInput(
            "field file belongs to a different presentation".into(),
        ));
    }
    if file.orbit_hash != orbit_hash(orbits) {
        return Err(Error::BadInput("field file orbit table mismatch".into()));
    }
    let reps = f64s_to_quats(&decode_f64s(&file.reps)?)?;
    if reps.len() != orbits.n_orbits() {
        return Err(Error::BadInput("field payload length mismatch".into()));
    }
    Ok(EquivariantGaugeField { reps })
}

pub fn save_field(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    field: &EquivariantGaugeField,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, field_to_json(p, orbits, field)?)?;
    Ok(())
}

pub fn load_field(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    path: &Path,
) -> Result<EquivariantGaugeField> {
    field_from_json(p, orbits, &std::fs::read_to_string(path)?)
}
