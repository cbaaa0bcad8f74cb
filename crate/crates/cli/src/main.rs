use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use folgauge_cli::{run_scenario, FieldSpec, EXIT_BAD_INPUT};

/// Scenario-driven runs of the equivariant lattice laboratory.
#[derive(Parser)]
#[command(name = "folgauge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides the scenario and FOLGAUGE_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count, recorded in the report (execution is deterministic).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Seed override, recorded in every output.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task named in the scenario.
    Run(CommonArgs),
    /// Run a descent to an anti-self-dual field.
    Flow {
        #[command(flatten)]
        common: CommonArgs,
        /// Start field: identity | abelian:M1,M2 | random:EPS | a field file.
        #[arg(long)]
        start: Option<String>,
        /// Flow options file (JSON), overriding the scenario's flow section.
        #[arg(long)]
        opts: Option<PathBuf>,
    },
    /// Analyze a concentrating field sequence.
    Bubble {
        #[command(flatten)]
        common: CommonArgs,
        /// Manifest file: a JSON array of field file paths in sequence order.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn parse_start(text: &str) -> Result<FieldSpec, String> {
    if text == "identity" {
        return Ok(FieldSpec::Identity);
    }
    if let Some(rest) = text.strip_prefix("abelian:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() == 2 {
            let m1 = parts[0].parse().map_err(|e| format!("bad m1: {e}"))?;
            let m2 = parts[1].parse().map_err(|e| format!("bad m2: {e}"))?;
            return Ok(FieldSpec::Abelian { m1, m2 });
        }
        return Err("abelian start needs two flux integers".into());
    }
    if let Some(rest) = text.strip_prefix("random:") {
        let roughness = rest.parse().map_err(|e| format!("bad roughness: {e}"))?;
        return Ok(FieldSpec::Random { roughness });
    }
    Ok(FieldSpec::File {
        path: PathBuf::from(text),
    })
}

/// Rewrite the scenario with command-line overrides into a temp file, so the
/// single runner sees one consistent input.
fn with_overrides(
    common: &CommonArgs,
    patch: impl FnOnce(&mut serde_json::Value) -> Result<(), String>,
) -> Result<PathBuf, String> {
    let text = std::fs::read_to_string(&common.scenario)
        .map_err(|e| format!("{}: {e}", common.scenario.display()))?;
    let mut v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("scenario parse: {e}"))?;
    patch(&mut v)?;
    let dir = std::env::temp_dir().join(format!("folgauge-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join(
        common
            .scenario
            .file_name()
            .unwrap_or_else(|| std::ffi::OsStr::new("scenario.json")),
    );
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).map_err(|e| e.to_string())?;
    Ok(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, scenario_path) = match &cli.command {
        Command::Run(common) => (common, Ok(common.scenario.clone())),
        Command::Flow {
            common,
            start,
            opts,
        } => {
            let start = start.clone();
            let opts = opts.clone();
            let path = with_overrides(common, move |v| {
                v["task"] = serde_json::json!("flow");
                if let Some(s) = &start {
                    let spec = parse_start(s)?;
                    v["field"] = serde_json::to_value(spec).unwrap();
                }
                if let Some(o) = &opts {
                    let text = std::fs::read_to_string(o).map_err(|e| e.to_string())?;
                    v["flow"] =
                        serde_json::from_str(&text).map_err(|e| format!("flow options: {e}"))?;
                }
                Ok(())
            });
            (common, path)
        }
        Command::Bubble { common, manifest } => {
            let manifest = manifest.clone();
            let path = with_overrides(common, move |v| {
                v["task"] = serde_json::json!("bubble");
                if let Some(m) = &manifest {
                    let text = std::fs::read_to_string(m).map_err(|e| e.to_string())?;
                    let files: Vec<String> =
                        serde_json::from_str(&text).map_err(|e| format!("manifest: {e}"))?;
                    v["bubble"]["manifest"] = serde_json::json!(files);
                }
                Ok(())
            });
            (common, path)
        }
    };
    let scenario_path = match scenario_path {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_INPUT as u8);
        }
    };
    let outcome = run_scenario(
        &scenario_path,
        common.out.as_deref(),
        common.threads,
        common.seed,
    );
    if outcome.exit_code == 0 {
        println!("{}", outcome.report_path.display());
    }
    ExitCode::from(outcome.exit_code as u8)
}
