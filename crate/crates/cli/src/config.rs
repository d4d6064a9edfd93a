//! Run configuration: loading (TOML or JSON, with includes), validation and model building.

use birkhoff_core::flow::{CompareOptions, CoupledOptions, FlowSettings};
use birkhoff_core::models::{
    build_model, resonance_sequence, ClosedFormKind, EntryOverride, Family, ModelSpec, ScaleProfile,
    SequenceConstraints, SequenceMode,
};
use birkhoff_core::{Backend, FrequencyVector, PoissonSeries, Scalar};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

/// A validation failure, anchored to a line of the file it came from when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.file, line, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
    PlotScript,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Exact,
    Float,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Precision {
    pub backend: BackendKind,
    pub bits: u32,
}

impl Default for Precision {
    fn default() -> Self {
        Precision { backend: BackendKind::Exact, bits: 256 }
    }
}

impl Precision {
    pub fn backend(&self) -> Result<Backend, String> {
        match self.backend {
            BackendKind::Exact => Ok(Backend::Exact),
            BackendKind::Float if self.bits < 128 => Err(format!("float precision must be >= 128 bits, got {}", self.bits)),
            BackendKind::Float => Backend::float(self.bits).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaConfig {
    pub values: Vec<String>,
    #[serde(default)]
    pub lattice: Vec<Vec<i64>>,
}

impl OmegaConfig {
    pub fn build(&self, backend: Backend) -> Result<FrequencyVector, String> {
        let values = self
            .values
            .iter()
            .map(|v| Scalar::parse_real(v, backend).map_err(|e| format!("omega value {v:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        FrequencyVector::with_lattice(values, self.lattice.clone()).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Named(String),
    Inline(ScaleProfile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub mode: SequenceMode,
    pub count: usize,
    #[serde(default)]
    pub first_index: usize,
    #[serde(default)]
    pub pairs: Option<Vec<(u32, u32)>>,
    #[serde(default)]
    pub scale_profile: Option<ProfileRef>,
    #[serde(default)]
    pub overrides: Vec<EntryOverride>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub omega: OmegaConfig,
    pub sequence: SequenceConfig,
    pub order: usize,
    #[serde(default)]
    pub terms: Option<usize>,
    #[serde(default)]
    pub coupling: Option<String>,
    #[serde(default)]
    pub pair_caps: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Action {
    Sequence {
        model: String,
    },
    Normalize {
        model: String,
        order: usize,
        #[serde(default)]
        remainder_degrees: usize,
    },
    Coefficients {
        model: String,
        order: usize,
        #[serde(default)]
        targets: Vec<Vec<u16>>,
        #[serde(default)]
        closed_form: Option<ClosedFormKind>,
        /// Sequence position the closed form refers to.
        #[serde(default)]
        position: usize,
        /// Relative tolerance of the measured-vs-predicted comparison (0 = exact equality).
        #[serde(default)]
        tolerance: f64,
    },
    DivergenceProbe {
        model: String,
        /// Normal-form coefficients at `targets`, normalized to `order`...
        #[serde(default)]
        order: Option<usize>,
        #[serde(default)]
        targets: Vec<Vec<u16>>,
        /// ...or one closed-form value per sequence entry.
        #[serde(default)]
        closed_form: Option<ClosedFormKind>,
    },
    Experiment {
        kind: ExperimentKind,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        params: Value,
        /// Criterion name → tolerance (relative checks) or bound (one-sided checks).
        #[serde(default)]
        tolerances: BTreeMap<String, f64>,
    },
}

/// Where a probe takes its coefficient stream from.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbeSource {
    /// Normal-form coefficients at the listed indices.
    Normalized { order: usize, targets: Vec<Vec<u16>> },
    /// One closed-form value per sequence entry.
    ClosedForm { closed_form: ClosedFormKind },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Delta,
    ResonantEscape,
    RotatingFrameCompare,
    Gronwall,
    CoupledEscape,
}

impl Action {
    pub fn probe_source(&self) -> Option<ProbeSource> {
        match self {
            Action::DivergenceProbe { order: Some(order), targets, closed_form: None, .. } => {
                Some(ProbeSource::Normalized { order: *order, targets: targets.clone() })
            }
            Action::DivergenceProbe { closed_form: Some(kind), .. } => Some(ProbeSource::ClosedForm { closed_form: *kind }),
            _ => None,
        }
    }
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Delta => "delta",
            ExperimentKind::ResonantEscape => "resonant-escape",
            ExperimentKind::RotatingFrameCompare => "rotating-frame-compare",
            ExperimentKind::Gronwall => "gronwall",
            ExperimentKind::CoupledEscape => "coupled-escape",
        }
    }

    /// Criteria whose tolerance or bound a config may set.
    fn tunable(self, name: &str) -> bool {
        let fixed: &[&str] = match self {
            ExperimentKind::Delta => &["escape_time", "time_bound", "transverse"],
            ExperimentKind::ResonantEscape => &["escape_time", "norm_identity"],
            ExperimentKind::RotatingFrameCompare => &["fitted_bound", "configured_bound"],
            ExperimentKind::Gronwall => &["slope"],
            ExperimentKind::CoupledEscape => &[
                "escape_not_late",
                "escape_not_early",
                "control_full_horizon",
                "i3_conserved",
                "control_i3_conserved",
                "start_radius",
                "start_shift",
            ],
        };
        fixed.contains(&name)
            || (self == ExperimentKind::Gronwall
                && name.strip_prefix("bound_").is_some_and(|i| i.parse::<usize>().is_ok()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaParams {
    pub k: u32,
    pub l: u32,
    pub n: usize,
    #[serde(default)]
    pub flow: FlowSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonantParams {
    pub omega: OmegaConfig,
    pub k: u32,
    pub l: u32,
    pub a: f64,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default)]
    pub flow: FlowSettings,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub u: Vec<u16>,
    pub v: Vec<u16>,
    pub re: String,
    #[serde(default = "zero_text")]
    pub im: String,
}

fn zero_text() -> String {
    "0".into()
}

/// A perturbation series: a saddle F_{k,l} or an explicit term list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SeriesConfig {
    Saddle {
        saddle: (u32, u32),
        #[serde(default = "one_text")]
        coefficient: String,
    },
    Terms {
        terms: Vec<TermConfig>,
    },
}

fn one_text() -> String {
    "1".into()
}

impl SeriesConfig {
    pub fn build(&self, d: usize, backend: Backend) -> Result<PoissonSeries, String> {
        let parse = |t: &str| Scalar::parse_real(t, backend).map_err(|e| format!("{t:?}: {e}"));
        match self {
            SeriesConfig::Saddle { saddle: (k, l), coefficient } => {
                let order = (k + l) as usize;
                birkhoff_core::models::saddle_series(d, order, *k, *l, &parse(coefficient)?).map_err(|e| e.to_string())
            }
            SeriesConfig::Terms { terms } => {
                let mut out = Vec::new();
                let mut order = 0;
                for t in terms {
                    if t.u.len() != d || t.v.len() != d {
                        return Err(format!("term exponents must have length {d}"));
                    }
                    let m = birkhoff_core::Monomial::new(&t.u, &t.v);
                    order = order.max(m.degree());
                    let c = &parse(&t.re)? + &parse(&t.im)?.mul_i();
                    out.push((m, c));
                }
                PoissonSeries::from_terms(d, order, backend, out).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareParams {
    pub omega: OmegaConfig,
    pub f: SeriesConfig,
    pub g: SeriesConfig,
    pub z0: Vec<f64>,
    pub horizon: f64,
    /// Gronwall only: the couplings of the slope fit.
    #[serde(default)]
    pub couplings: Vec<f64>,
    #[serde(default)]
    pub options: CompareOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledParams {
    pub model: String,
    #[serde(default)]
    pub position: usize,
    #[serde(default)]
    pub options: CoupledOptions,
}

/// Fully typed experiment parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentParams {
    Delta(DeltaParams),
    Resonant(ResonantParams),
    Compare(CompareParams),
    Coupled(CoupledParams),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    output: Option<String>,
    #[serde(default = "all_formats")]
    formats: Vec<Format>,
    #[serde(default)]
    precision: Precision,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    parallel: bool,
    #[serde(default)]
    profiles: BTreeMap<String, Value>,
    #[serde(default)]
    models: BTreeMap<String, Value>,
    #[serde(default)]
    actions: Vec<Value>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::PlotScript]
}

/// A parsed config plus every file it was assembled from.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub root: PathBuf,
    /// (path relative to the root config's directory, file bytes), root first.
    pub sources: Vec<(String, Vec<u8>)>,
    pub value: Value,
}

/// Values taking precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub bits: Option<u32>,
    pub profile: Option<ScaleProfile>,
    pub order: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub output: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub precision: Precision,
    pub seed: u64,
    pub parallel: bool,
    pub models: BTreeMap<String, ModelSpec>,
    pub actions: Vec<Action>,
    pub params: Vec<Option<ExperimentParams>>,
}

fn parse_text(path: &Path, text: &str) -> Result<Value, ConfigError> {
    let file = path.display().to_string();
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| ConfigError { file, line: Some(e.line()), message: e.to_string() })
    } else {
        let v: toml::Value = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            ConfigError { file: file.clone(), line, message: e.message().to_string() }
        })?;
        serde_json::to_value(v).map_err(|e| ConfigError { file, line: None, message: e.to_string() })
    }
}

/// Tables merge key by key; anything else in `over` replaces `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn load_rec(path: &Path, base_dir: &Path, stack: &mut Vec<PathBuf>, sources: &mut Vec<(String, Vec<u8>)>) -> Result<Value, ConfigError> {
    let file = path.display().to_string();
    let canon = path.canonicalize().map_err(|e| ConfigError { file: file.clone(), line: None, message: e.to_string() })?;
    if stack.contains(&canon) {
        return Err(ConfigError { file, line: None, message: "include cycle".into() });
    }
    let bytes = std::fs::read(path).map_err(|e| ConfigError { file: file.clone(), line: None, message: e.to_string() })?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| ConfigError { file: file.clone(), line: None, message: "not UTF-8".into() })?;
    let rel = pathdiff(path, base_dir);
    if !sources.iter().any(|(p, _)| *p == rel) {
        sources.push((rel, bytes));
    }
    let mut value = parse_text(path, &text)?;
    let includes = match value.as_object_mut().and_then(|o| o.remove("include")) {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(a)) => a
            .into_iter()
            .map(|v| v.as_str().map(String::from))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| anchored(&file, &text, "include", "include must be a string or a list of strings"))?,
        Some(_) => return Err(anchored(&file, &text, "include", "include must be a string or a list of strings")),
    };
    stack.push(canon);
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut merged = Value::Object(Map::new());
    for inc in includes {
        let v = load_rec(&dir.join(&inc), base_dir, stack, sources)?;
        merge(&mut merged, v);
    }
    stack.pop();
    merge(&mut merged, value);
    Ok(merged)
}

fn pathdiff(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut sources = Vec::new();
    let value = load_rec(path, &base, &mut Vec::new(), &mut sources)?;
    Ok(Loaded { root: path.to_path_buf(), sources, value })
}

/// First line of `text` mentioning `needle` (1-based), if any.
fn find_line(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

fn anchored(file: &str, text: &str, needle: &str, message: &str) -> ConfigError {
    ConfigError { file: file.into(), line: find_line(text, needle), message: message.into() }
}

/// Locates where a model or action is declared in the root config text.
struct Locator<'a> {
    file: String,
    text: &'a str,
}

impl Locator<'_> {
    fn model(&self, name: &str, message: String) -> ConfigError {
        let line = find_line(self.text, &format!("[models.{name}"))
            .or_else(|| find_line(self.text, &format!("\"{name}\"")))
            .or_else(|| find_line(self.text, name));
        ConfigError { file: self.file.clone(), line, message: format!("model {name}: {message}") }
    }

    fn action(&self, index: usize, message: String) -> ConfigError {
        let toml_headers: Vec<usize> =
            self.text.lines().enumerate().filter(|(_, l)| l.trim_start().starts_with("[[actions]]")).map(|(i, _)| i + 1).collect();
        let json_items: Vec<usize> =
            self.text.lines().enumerate().filter(|(_, l)| l.contains("\"action\"")).map(|(i, _)| i + 1).collect();
        let line = toml_headers.get(index).or_else(|| json_items.get(index)).copied();
        ConfigError { file: self.file.clone(), line, message: format!("action {}: {message}", index + 1) }
    }

    fn top(&self, key: &str, message: String) -> ConfigError {
        ConfigError { file: self.file.clone(), line: find_line(self.text, key), message }
    }
}

fn typed<T: DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| e.to_string())
}

fn resolve_profile(
    seq: &SequenceConfig,
    profiles: &BTreeMap<String, ScaleProfile>,
    fallback: &Option<ScaleProfile>,
) -> Result<ScaleProfile, String> {
    let p = match &seq.scale_profile {
        None => fallback.clone().unwrap_or_default(),
        Some(ProfileRef::Inline(p)) => p.clone(),
        Some(ProfileRef::Named(name)) => profiles.get(name).cloned().ok_or_else(|| format!("unknown scale profile {name:?}"))?,
    };
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

pub fn build_spec(
    cfg: &ModelConfig,
    backend: Backend,
    profiles: &BTreeMap<String, ScaleProfile>,
    fallback: &Option<ScaleProfile>,
) -> Result<ModelSpec, String> {
    let omega = cfg.omega.build(backend)?;
    if omega.dof() != cfg.family.dof() {
        return Err(format!("family {} needs {} frequencies, got {}", cfg.family, cfg.family.dof(), omega.dof()));
    }
    let constraints = SequenceConstraints {
        first_index: cfg.sequence.first_index,
        profile: resolve_profile(&cfg.sequence, profiles, fallback)?,
        overrides: cfg.sequence.overrides.clone(),
        pairs: cfg.sequence.pairs.clone(),
    };
    let seq = resonance_sequence(&omega, cfg.sequence.count, cfg.sequence.mode, &constraints).map_err(|e| e.to_string())?;
    let mut spec = ModelSpec::new(cfg.family, seq, cfg.terms.unwrap_or(cfg.sequence.count), cfg.order);
    spec.coupling = cfg
        .coupling
        .as_ref()
        .map(|c| Scalar::parse_real(c, backend).map_err(|e| format!("coupling {c:?}: {e}")))
        .transpose()?;
    spec.pair_caps = cfg.pair_caps.clone();
    spec.validate().map_err(|e| e.to_string())?;
    build_model(&spec).map_err(|e| e.to_string())?;
    Ok(spec)
}

impl RunConfig {
    /// Type-checks everything and builds every model; nothing is written.
    pub fn from_loaded(loaded: &Loaded, ov: &Overrides) -> Result<RunConfig, ConfigError> {
        let text = String::from_utf8_lossy(&loaded.sources[0].1).into_owned();
        let loc = Locator { file: loaded.root.display().to_string(), text: &text };
        let raw: RawConfig = typed(&loaded.value).map_err(|m| loc.top("", m))?;
        let mut precision = raw.precision;
        if let Some(b) = ov.backend {
            precision.backend = b;
        }
        if let Some(bits) = ov.bits {
            precision.bits = bits;
            if ov.backend.is_none() {
                precision.backend = BackendKind::Float;
            }
        }
        let backend = precision.backend().map_err(|m| loc.top("precision", m))?;

        let mut profiles = BTreeMap::new();
        for (name, v) in &raw.profiles {
            let p: ScaleProfile = typed(v).map_err(|m| loc.top(&format!("profiles.{name}"), format!("profile {name}: {m}")))?;
            p.validate().map_err(|e| loc.top(&format!("profiles.{name}"), format!("profile {name}: {e}")))?;
            profiles.insert(name.clone(), p);
        }

        let mut models = BTreeMap::new();
        for (name, v) in &raw.models {
            let cfg: ModelConfig = typed(v).map_err(|m| loc.model(name, m))?;
            let spec = build_spec(&cfg, backend, &profiles, &ov.profile).map_err(|m| loc.model(name, m))?;
            models.insert(name.clone(), spec);
        }

        let mut actions = Vec::new();
        let mut params = Vec::new();
        for (i, v) in raw.actions.iter().enumerate() {
            let mut a: Action = typed(v).map_err(|m| loc.action(i, m))?;
            if let Some(order) = ov.order {
                match &mut a {
                    Action::Normalize { order: o, .. } | Action::Coefficients { order: o, .. } => *o = order,
                    Action::DivergenceProbe { order: o @ Some(_), .. } => *o = Some(order),
                    _ => {}
                }
            }
            let need = |m: &String| -> Result<(), ConfigError> {
                if models.contains_key(m) {
                    Ok(())
                } else {
                    Err(loc.action(i, format!("references undefined model {m:?}")))
                }
            };
            let p = match &a {
                Action::Sequence { model } | Action::Normalize { model, .. } => need(model).map(|_| None)?,
                Action::Coefficients { model, targets, closed_form, position, tolerance, .. } => {
                    need(model)?;
                    if targets.is_empty() && closed_form.is_none() {
                        return Err(loc.action(i, "needs targets or a closed_form".into()));
                    }
                    if *tolerance < 0.0 {
                        return Err(loc.action(i, "tolerance must be >= 0".into()));
                    }
                    let d = models[model].omega().dof();
                    if targets.iter().any(|t| t.len() != d) {
                        return Err(loc.action(i, format!("targets must have {d} entries")));
                    }
                    models[model].entry(*position).map_err(|e| loc.action(i, e.to_string()))?;
                    None
                }
                Action::DivergenceProbe { model, order, targets, closed_form } => {
                    need(model)?;
                    match (order, targets.is_empty(), closed_form) {
                        (Some(_), false, None) | (None, true, Some(_)) => {}
                        _ => return Err(loc.action(i, "probe needs either order and targets, or closed_form".into())),
                    }
                    None
                }
                Action::Experiment { kind, params: pv, tolerances, .. } => {
                    for (name, &value) in tolerances {
                        if !kind.tunable(name) {
                            return Err(loc.action(i, format!("{} has no tunable criterion {name:?}", kind.label())));
                        }
                        if !(value >= 0.0) {
                            return Err(loc.action(i, format!("tolerance {name} must be >= 0")));
                        }
                    }
                    let ep = experiment_params(*kind, pv, &models).map_err(|m| loc.action(i, m))?;
                    Some(ep)
                }
            };
            actions.push(a);
            params.push(p);
        }
        if actions.is_empty() {
            return Err(loc.top("", "config defines no actions".into()));
        }
        let mut formats = raw.formats;
        formats.sort();
        formats.dedup();
        Ok(RunConfig {
            output: ov.output.clone().or_else(|| raw.output.map(|o| loaded.root.parent().unwrap_or(Path::new(".")).join(o))),
            formats,
            precision,
            seed: raw.seed,
            parallel: raw.parallel,
            models,
            actions,
            params,
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn experiment_params(kind: ExperimentKind, v: &Value, models: &BTreeMap<String, ModelSpec>) -> Result<ExperimentParams, String> {
    let v = if v.is_null() { Value::Object(Map::new()) } else { v.clone() };
    Ok(match kind {
        ExperimentKind::Delta => {
            let p: DeltaParams = typed(&v)?;
            if p.n == 0 || p.k == 0 || p.l == 0 || p.k + p.l < 3 {
                return Err("delta needs k, l, n >= 1 and k + l >= 3".into());
            }
            ExperimentParams::Delta(p)
        }
        ExperimentKind::ResonantEscape => {
            let p: ResonantParams = typed(&v)?;
            if !(p.a > 0.0) {
                return Err("resonant-escape needs a > 0".into());
            }
            p.omega.build(Backend::Exact).or_else(|_| p.omega.build(Backend::Float(128)))?;
            ExperimentParams::Resonant(p)
        }
        ExperimentKind::RotatingFrameCompare | ExperimentKind::Gronwall => {
            let p: CompareParams = typed(&v)?;
            let d = p.omega.values.len();
            if p.z0.len() != 2 * d {
                return Err(format!("z0 must have {} entries", 2 * d));
            }
            if kind == ExperimentKind::Gronwall && p.couplings.len() < 2 {
                return Err("gronwall needs at least two couplings".into());
            }
            if !(p.horizon > 0.0) {
                return Err("horizon must be positive".into());
            }
            ExperimentParams::Compare(p)
        }
        ExperimentKind::CoupledEscape => {
            let p: CoupledParams = typed(&v)?;
            let spec = models.get(&p.model).ok_or_else(|| format!("references undefined model {:?}", p.model))?;
            birkhoff_core::flow::experiments::validate_scale_profile(spec, p.position).map_err(|e| e.to_string())?;
            ExperimentParams::Coupled(p)
        }
    })
}

/// Loads a bare scale-profile file (TOML or JSON).
pub fn load_profile(path: &Path) -> Result<ScaleProfile, ConfigError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError { file: file.clone(), line: None, message: e.to_string() })?;
    let v = parse_text(path, &text)?;
    let p: ScaleProfile = typed(&v).map_err(|m| ConfigError { file: file.clone(), line: None, message: m })?;
    p.validate().map_err(|e| ConfigError { file, line: None, message: e.to_string() })?;
    Ok(p)
}
