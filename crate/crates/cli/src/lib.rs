//! Scenario execution: one JSON file describes a presentation, a task and its
//! options; a run writes a deterministic `report.json` plus task artifacts
//! into the output directory. Timestamps go to `run_meta.json` so that
//! repeated runs with the same scenario, seed and thread count are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use folgauge::analysis::{bubble_analyze, numeric_index, shrinking_lump_sequence, LumpSpec};
use folgauge::cohomology::{basic_betti, pairing_matrix, pairing_nondegeneracy};
use folgauge::flow::{descend, FlowOptions};
use folgauge::gauge::{
    embed_abelian, energy_charge, equivariance_residual, random_equivariant_field,
    reducibility_kernel, EquivariantGaugeField, LinkOrbits,
};
use folgauge::io::{load_field, load_presentation, save_field};
use folgauge::presentation::{preset, FoliationPresentation};
use folgauge::{Error, Result};

/// Exit codes: 0 success, 2 validation failure, 3 numerical error, 4 bad input.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_BAD_INPUT: i32 = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PresentationSpec {
    Preset { preset: String, n: usize },
    File { file: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Identity,
    Abelian { m1: i64, m2: i64 },
    Random { roughness: f64 },
    File { path: PathBuf },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Random { roughness: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct FlowOptionsSpec {
    pub max_iters: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub energy_floor: Option<f64>,
    pub backtrack_factor: Option<f64>,
    pub armijo_c: Option<f64>,
}

impl FlowOptionsSpec {
    pub fn build(&self) -> FlowOptions {
        let mut o = FlowOptions::default();
        if let Some(v) = self.max_iters {
            o.max_iters = v;
        }
        if let Some(v) = self.gradient_tolerance {
            o.gradient_tolerance = v;
        }
        if let Some(v) = self.energy_floor {
            o.energy_floor = v;
        }
        if let Some(v) = self.backtrack_factor {
            o.backtrack_factor = v;
        }
        if let Some(v) = self.armijo_c {
            o.armijo_c = v;
        }
        o
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BubbleSpec {
    /// Field files in sequence order; mutually exclusive with `synthetic_center`.
    #[serde(default)]
    pub manifest: Vec<PathBuf>,
    #[serde(default)]
    pub synthetic_center: Option<[usize; 4]>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    // the measure threshold is epsilon^2 = 0.5
    0.5f64.sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub presentation: PresentationSpec,
    pub task: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub flow: FlowOptionsSpec,
    #[serde(default)]
    pub bubble: Option<BubbleSpec>,
    /// Diagonal metric perturbation applied before the task.
    #[serde(default)]
    pub metric_scale: Option<[f64; 4]>,
    /// Degrees for the pairing matrices of the cohomology task.
    #[serde(default)]
    pub pairing_degrees: Option<Vec<usize>>,
}

/// Everything a finished run reports back to the caller.
pub struct RunOutcome {
    pub exit_code: i32,
    pub report_path: PathBuf,
}

#[derive(Serialize)]
struct ReportEnvelope {
    tool_version: String,
    task: String,
    presentation: String,
    presentation_hash: String,
    seed: u64,
    threads: usize,
    results: serde_json::Value,
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::BranchCutError { .. } => EXIT_NUMERICAL,
        _ => EXIT_BAD_INPUT,
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn resolve_presentation(spec: &PresentationSpec) -> Result<(FoliationPresentation, String)> {
    match spec {
        PresentationSpec::Preset { preset: name, n } => {
            if ![4, 6, 8].contains(n) {
                return Err(Error::BadInput(format!(
                    "preset side must be one of 4, 6, 8 (got {n})"
                )));
            }
            Ok((preset(name, *n)?, format!("{name}:{n}")))
        }
        PresentationSpec::File { file } => {
            Ok((load_presentation(file)?, file.display().to_string()))
        }
    }
}

fn resolve_field(
    p: &FoliationPresentation,
    orbits: &LinkOrbits,
    spec: &FieldSpec,
    seed: u64,
) -> Result<EquivariantGaugeField> {
    match spec {
        FieldSpec::Identity => Ok(EquivariantGaugeField::identity(orbits)),
        FieldSpec::Abelian { m1, m2 } => embed_abelian(p, orbits, *m1, *m2),
        FieldSpec::Random { roughness } => random_equivariant_field(p, orbits, seed, *roughness),
        FieldSpec::File { path } => load_field(p, orbits, path),
    }
}

/// Execute a scenario file. `out`, `seed` and `threads` override the scenario;
/// the default output root comes from `FOLGAUGE_OUT` (falling back to `runs`).
pub fn run_scenario(
    scenario_path: &Path,
    out_override: Option<&Path>,
    threads: usize,
    seed_override: Option<u64>,
) -> RunOutcome {
    match run_scenario_inner(scenario_path, out_override, threads, seed_override) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            RunOutcome {
                exit_code: exit_code_for(&e),
                report_path: PathBuf::new(),
            }
        }
    }
}

fn output_dir(scenario: &Scenario, scenario_path: &Path, out_override: Option<&Path>) -> PathBuf {
    if let Some(o) = out_override {
        return o.to_path_buf();
    }
    let root = std::env::var_os("FOLGAUGE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    match &scenario.out {
        Some(o) if o.is_absolute() => o.clone(),
        Some(o) => root.join(o),
        None => {
            let stem = scenario_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into());
            root.join(stem)
        }
    }
}

fn run_scenario_inner(
    scenario_path: &Path,
    out_override: Option<&Path>,
    threads: usize,
    seed_override: Option<u64>,
) -> Result<RunOutcome> {
    if threads == 0 {
        return Err(Error::BadInput("thread count must be positive".into()));
    }
    let scenario = load_scenario(scenario_path)?;
    let seed = seed_override.unwrap_or(scenario.seed);
    let out_dir = output_dir(&scenario, scenario_path, out_override);
    fs::create_dir_all(&out_dir)?;

    let (mut p, label) = resolve_presentation(&scenario.presentation)?;
    if let Some(scale) = scenario.metric_scale {
        let phi = folgauge::flow::MetricPerturbation::diagonal(&p, scale);
        p = folgauge::flow::perturb_metric(&p, &phi)?;
    }

    let mut exit_code = EXIT_OK;
    let results: serde_json::Value = match scenario.task.as_str() {
        "validate" => {
            let report = p.validate();
            if !report.passed() {
                exit_code = EXIT_VALIDATION;
            }
            serde_json::to_value(&report)?
        }
        "cohomology" => {
            let betti = basic_betti(&p);
            let degrees = scenario.pairing_degrees.clone().unwrap_or(vec![0, 1, 2]);
            let mut pairings = Vec::new();
            for r in degrees {
                let m = pairing_matrix(&p, r)?;
                let ratio = pairing_nondegeneracy(&m);
                write_matrix_csv(&out_dir.join(format!("pairing_{r}.csv")), &m)?;
                pairings.push(json!({
                    "degree": r,
                    "rows": m.nrows(),
                    "cols": m.ncols(),
                    "nondegeneracy": ratio,
                }));
            }
            json!({ "betti": betti, "pairings": pairings })
        }
        "identity-check" => {
            let orbits = LinkOrbits::build(&p);
            let field = resolve_field(
                &p,
                &orbits,
                scenario.field.as_ref().unwrap_or(&FieldSpec::default()),
                seed,
            )?;
            let ec = energy_charge(&p, &orbits, &field)?;
            serde_json::to_value(&ec)?
        }
        "flow" => {
            let orbits = LinkOrbits::build(&p);
            let start = resolve_field(
                &p,
                &orbits,
                scenario.field.as_ref().unwrap_or(&FieldSpec::default()),
                seed,
            )?;
            let opts = scenario.flow.build();
            let res = descend(&p, &orbits, &start, &opts)?;
            write_trajectory_csv(&out_dir.join("trajectory.csv"), &res.trajectory)?;
            save_field(&p, &orbits, &res.field, &out_dir.join("field_final.json"))?;
            json!({
                "converged": res.converged,
                "iterations": res.iterations,
                "stop_reason": res.stop_reason,
                "final": res.final_energy,
                "reducibility_dim": res.reducibility_dim,
                "equivariance_residual": equivariance_residual(&p, &orbits, &res.field),
            })
        }
        "index" => {
            let orbits = LinkOrbits::build(&p);
            let field = resolve_field(
                &p,
                &orbits,
                scenario.field.as_ref().unwrap_or(&FieldSpec::default()),
                seed,
            )?;
            let rep = numeric_index(&p, &orbits, &field)?;
            let (red, _) = reducibility_kernel(&p, &orbits, &field);
            let mut v = serde_json::to_value(&rep)?;
            v["reducibility_dim"] = json!(red);
            v
        }
        "bubble" => {
            let orbits = LinkOrbits::build(&p);
            let spec = scenario
                .bubble
                .as_ref()
                .ok_or_else(|| Error::BadInput("bubble task needs a bubble section".into()))?;
            let fields: Vec<EquivariantGaugeField> = if let Some(center) = spec.synthetic_center {
                shrinking_lump_sequence(&p, &orbits, &LumpSpec::standard(0, center))?
            } else if !spec.manifest.is_empty() {
                spec.manifest
                    .iter()
                    .map(|f| load_field(&p, &orbits, f))
                    .collect::<Result<_>>()?
            } else {
                return Err(Error::BadInput(
                    "bubble needs a manifest or a synthetic center".into(),
                ));
            };
            let rep = bubble_analyze(&p, &orbits, &fields, spec.epsilon)?;
            serde_json::to_value(&rep)?
        }
        other => {
            return Err(Error::BadInput(format!("unknown task '{other}'")));
        }
    };

    let envelope = ReportEnvelope {
        tool_version: folgauge::VERSION.to_string(),
        task: scenario.task.clone(),
        presentation: label,
        presentation_hash: p.content_hash(),
        seed,
        threads,
        results,
    };
    let report_path = out_dir.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&envelope)?)?;
    let meta = json!({
        "finished_unix_ms": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        "scenario": scenario_path.display().to_string(),
    });
    fs::write(out_dir.join("run_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(RunOutcome {
        exit_code,
        report_path,
    })
}

fn write_trajectory_csv(path: &Path, traj: &[folgauge::flow::TrajectoryPoint]) -> Result<()> {
    let mut text = String::from("iter,ym,plus_norm_sq,grad_sup,charge\n");
    for (i, t) in traj.iter().enumerate() {
        text.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            i, t.ym, t.plus_norm_sq, t.grad_sup, t.charge
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_matrix_csv(path: &Path, m: &nalgebra::DMatrix<f64>) -> Result<()> {
    let mut text = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

// re-exported for the binary
pub use folgauge::VERSION;
