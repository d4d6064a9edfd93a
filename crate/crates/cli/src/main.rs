//! `birkhoff`: configuration-driven front end for normal forms and flow experiments.

mod config;
mod run;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{BackendKind, ConfigError, Loaded, Overrides, RunConfig};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const OUT_ENV: &str = "BIRKHOFF_OUT";

#[derive(Parser)]
#[command(name = "birkhoff", version, about = "Birkhoff normal forms, divergence probes and flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Output directory (default: $BIRKHOFF_OUT/<name>, else ./birkhoff-out/<name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scalar backend for models.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Float precision in bits (implies the float backend unless --backend is given).
    #[arg(long, global = true)]
    precision_bits: Option<u32>,
    /// Scale-profile file applied to sequences that do not name one.
    #[arg(long, global = true)]
    profile: Option<PathBuf>,
    /// Normalization order, overriding the config.
    #[arg(long, global = true)]
    order: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Float,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every action of a run config.
    Run { config: PathBuf },
    /// Normal form of a model up to --order.
    Normalize { model: PathBuf },
    /// Coefficient table, optionally against a closed form.
    Coeffs {
        model: PathBuf,
        /// Action index such as 1,1 (repeatable).
        #[arg(long = "target", value_delimiter = ';')]
        targets: Vec<String>,
        #[arg(long)]
        closed_form: Option<String>,
        #[arg(long, default_value_t = 0)]
        position: usize,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Growth probe over normal-form or closed-form coefficients.
    Probe {
        model: PathBuf,
        #[arg(long = "target", value_delimiter = ';')]
        targets: Vec<String>,
        #[arg(long)]
        closed_form: Option<String>,
    },
    /// Resonance sequence of a model.
    Sequence { model: PathBuf },
    /// One experiment from a parameter file.
    Experiment {
        kind: String,
        /// Parameter file (TOML or JSON); defaults apply when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Criterion tolerance as name=value (repeatable).
        #[arg(long = "tolerance")]
        tolerances: Vec<String>,
    },
}

enum Failure {
    Validation(String),
    Run(String),
}

fn validation(e: ConfigError) -> Failure {
    Failure::Validation(e.to_string())
}

fn overrides(c: &Common) -> Result<Overrides, Failure> {
    Ok(Overrides {
        output: c.out.clone(),
        backend: c.backend.map(|b| match b {
            BackendArg::Exact => BackendKind::Exact,
            BackendArg::Float => BackendKind::Float,
        }),
        bits: c.precision_bits,
        profile: c.profile.as_deref().map(config::load_profile).transpose().map_err(validation)?,
        order: c.order,
    })
}

fn parse_index(text: &str) -> Result<Vec<u16>, Failure> {
    text.split(',')
        .map(|p| p.trim().parse::<u16>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Validation(format!("bad action index {text:?} (expected e.g. 1,2)")))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

/// Wraps a single-model file into a one-action config.
fn model_config(path: &Path, action: Value, needs_order: bool, common: &Common) -> Result<Loaded, Failure> {
    if needs_order && common.order.is_none() {
        return Err(Failure::Validation("--order is required".into()));
    }
    let mut loaded = config::load(path).map_err(validation)?;
    let mut model = loaded.value.clone();
    let profiles = model.as_object_mut().and_then(|o| o.remove("profiles")).unwrap_or(json!({}));
    let mut action = action;
    action["model"] = json!("model");
    if needs_order {
        action["order"] = json!(common.order);
    }
    loaded.value = json!({ "profiles": profiles, "models": { "model": model }, "actions": [action] });
    Ok(loaded)
}

fn experiment_config(kind: &str, params: Option<&Path>, tolerances: &[String]) -> Result<Loaded, Failure> {
    let (params_value, sources, root) = match params {
        Some(p) => {
            let l = config::load(p).map_err(validation)?;
            (l.value, l.sources, l.root)
        }
        None => (Value::Object(Map::new()), Vec::new(), PathBuf::from(format!("{kind}.toml"))),
    };
    let mut tol = Map::new();
    for t in tolerances {
        let (name, v) = t.split_once('=').ok_or_else(|| Failure::Validation(format!("bad tolerance {t:?}")))?;
        let v: f64 = v.parse().map_err(|_| Failure::Validation(format!("bad tolerance value in {t:?}")))?;
        tol.insert(name.into(), json!(v));
    }
    // Coupled escape needs its model next to the parameters.
    let mut params_value = params_value;
    let mut models = Map::new();
    if let Some(m) = params_value.as_object_mut().and_then(|o| o.remove("model_spec")) {
        models.insert("model".into(), m);
        params_value["model"] = json!("model");
    }
    let value = json!({
        "models": models,
        "actions": [{ "action": "experiment", "kind": kind, "params": params_value, "tolerances": tol }],
    });
    let sources = if sources.is_empty() { vec![(root.display().to_string(), Vec::new())] } else { sources };
    Ok(Loaded { root, sources, value })
}

fn default_out(name: &str) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(name),
        _ => PathBuf::from("birkhoff-out").join(name),
    }
}

fn execute(loaded: Loaded, name: String, common: &Common) -> Result<(), Failure> {
    let ov = overrides(common)?;
    let cfg = RunConfig::from_loaded(&loaded, &ov).map_err(validation)?;
    let out = cfg.output.clone().unwrap_or_else(|| default_out(&name));
    if out.exists() && !out.is_dir() {
        return Err(Failure::Validation(format!("{}: output path is not a directory", out.display())));
    }
    let summary = run::execute(&cfg, &out, &loaded.sources).map_err(|e| Failure::Run(format!("writing artifacts: {e}")))?;
    let mut problems = Vec::new();
    for (dir, o) in &summary.outputs {
        if let Some(e) = &o.error {
            println!("ERROR {dir}: {e}");
            problems.push(format!("{dir}: {e}"));
        } else if !o.failing().is_empty() {
            println!("FAIL  {dir}: failing verdicts {}", o.failing().join(", "));
            problems.push(format!("{dir}: failing verdicts {}", o.failing().join(", ")));
        } else {
            println!("ok    {dir}");
        }
    }
    println!("manifest: {}", summary.out_dir.join("manifest.json").display());
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(problems.join("; ")))
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let c = &cli.common;
    match &cli.command {
        Command::Run { config } => execute(config::load(config).map_err(validation)?, stem(config), c),
        Command::Normalize { model } => {
            let l = model_config(model, json!({ "action": "normalize" }), true, c)?;
            execute(l, format!("normalize-{}", stem(model)), c)
        }
        Command::Coeffs { model, targets, closed_form, position, tolerance } => {
            let targets = targets.iter().map(|t| parse_index(t)).collect::<Result<Vec<_>, _>>()?;
            let action = json!({
                "action": "coefficients", "targets": targets, "closed_form": closed_form,
                "position": position, "tolerance": tolerance,
            });
            execute(model_config(model, action, true, c)?, format!("coeffs-{}", stem(model)), c)
        }
        Command::Probe { model, targets, closed_form } => {
            let action = match closed_form {
                Some(kind) => json!({ "action": "divergence-probe", "closed_form": kind }),
                None => {
                    let targets = targets.iter().map(|t| parse_index(t)).collect::<Result<Vec<_>, _>>()?;
                    json!({ "action": "divergence-probe", "targets": targets })
                }
            };
            execute(model_config(model, action, closed_form.is_none(), c)?, format!("probe-{}", stem(model)), c)
        }
        Command::Sequence { model } => {
            execute(model_config(model, json!({ "action": "sequence" }), false, c)?, format!("sequence-{}", stem(model)), c)
        }
        Command::Experiment { kind, params, tolerances } => {
            let l = experiment_config(kind, params.as_deref(), tolerances)?;
            execute(l, kind.clone(), c)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
