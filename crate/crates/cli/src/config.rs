//! Plain-text run configuration.
//!
//! The format is INI-like: `[section]` headers followed by `key = value`
//! lines; blank lines and lines starting with `#` are ignored. Numeric lists
//! are comma separated, expression lists semicolon separated. [`emit`]
//! writes the canonical form, which [`parse_str`] reads back unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use qrd_core::energy::DEFAULT_P_CAP;
use qrd_core::expr::Expr;
use qrd_core::integrator::StepControl;
use qrd_core::{BoundarySpec, Grid, StructuralParams};

/// Every section with its accepted keys, in canonical order.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("model", &["preset", "include_deceased"]),
    (
        "rates",
        &[
            "alpha",
            "mu",
            "sigma",
            "phi_e",
            "phi_r",
            "phi_d",
            "beta_i",
            "beta_e",
            "a0",
            "nu_s",
            "nu_e",
            "nu_i",
            "nu_r",
            "beta_i_response",
            "beta_e_response",
            "response_growth",
        ],
    ),
    ("custom", &["species", "reactions", "phi", "diffusion", "diffusion_y", "diffusion_xy"]),
    ("structural", &["b", "m_lower", "pi_exp", "m_upper", "r", "k1", "k2", "k3", "k4", "l", "c", "a"]),
    ("grid", &["cells", "extent"]),
    ("boundary", &["kind", "robin"]),
    ("initial", &["profile", "center", "width", "mass", "values"]),
    ("time", &["t_end", "checkpoints", "eps", "eps_levels", "gamma", "dt_min", "dt_max", "rho"]),
    ("energy", &["orders", "theta"]),
    ("audit", &["u_max", "seed", "interior", "per_face"]),
    ("output", &["directory", "snapshot_every", "panels", "deterministic"]),
];

/// Variables available to space-time rate expressions.
pub const SPACE_TIME_VARS: [&str; 3] = ["x", "y", "t"];
/// Variables available to contact-rate responses `β(z, n)`.
pub const RESPONSE_VARS: [&str; 2] = ["z", "n"];
/// Variables available to initial-data expressions.
pub const SPACE_VARS: [&str; 2] = ["x", "y"];

const RESERVED: &[&str] = &[
    "x", "y", "t", "z", "n", "pi", "exp", "log", "sqrt", "abs", "sin", "cos", "min", "max", "pos", "ratio", "guard",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All problems found in one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn single(message: impl Into<String>) -> Self {
        ConfigErrors(vec![ConfigError { line: None, message: message.into() }])
    }

    pub fn messages(&self) -> Vec<String> {
        self.0.iter().map(|e| e.message.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeirdVariant {
    /// Linear mortality `−φ_d i`.
    Original,
    /// Mortality `−φ_d n i`.
    Quadratic,
    /// Quadratic mortality with the `δ`-regularized ratio.
    Delta(f64),
    /// Quadratic mortality with space-time rates and contact responses.
    Heterogeneous,
}

/// SEIRD rates as expressions in `x, y, t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeirdRates {
    pub alpha: String,
    pub mu: String,
    pub sigma: String,
    pub phi_e: String,
    pub phi_r: String,
    pub phi_d: String,
    pub beta_i: String,
    pub beta_e: String,
    pub a0: f64,
    pub nu: [String; 4],
    /// `β_i(i, n)` as an expression in `z, n`.
    pub beta_i_response: Option<String>,
    pub beta_e_response: Option<String>,
    pub response_growth: f64,
}

impl Default for SeirdRates {
    fn default() -> Self {
        SeirdRates {
            alpha: "0.01".into(),
            mu: "0.02".into(),
            sigma: "0.5".into(),
            phi_e: "0.1".into(),
            phi_r: "0.1".into(),
            phi_d: "0.02".into(),
            beta_i: "1.0".into(),
            beta_e: "0.5".into(),
            a0: 0.0,
            nu: ["0.05".into(), "0.05".into(), "0.01".into(), "0.05".into()],
            beta_i_response: None,
            beta_e_response: None,
            response_growth: 1.0,
        }
    }
}

impl SeirdRates {
    fn named(&self) -> [(&'static str, &String); 12] {
        [
            ("alpha", &self.alpha),
            ("mu", &self.mu),
            ("sigma", &self.sigma),
            ("phi_e", &self.phi_e),
            ("phi_r", &self.phi_r),
            ("phi_d", &self.phi_d),
            ("beta_i", &self.beta_i),
            ("beta_e", &self.beta_e),
            ("nu_s", &self.nu[0]),
            ("nu_e", &self.nu[1]),
            ("nu_i", &self.nu[2]),
            ("nu_r", &self.nu[3]),
        ]
    }
}

/// A user-declared system.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomSpec {
    pub species: Vec<String>,
    /// One expression per species in the species names and `x, y, t`.
    pub reactions: Vec<String>,
    /// `total` for `Σ u_i`, otherwise an expression in the species names.
    pub phi: String,
    /// Per-species diffusion rate (first axis, or both when `diffusion_y`
    /// is absent) in `x, y, t`.
    pub diffusion: Vec<String>,
    pub diffusion_y: Option<Vec<String>>,
    /// Off-diagonal entries. Accepted only when they vanish identically.
    pub diffusion_xy: Option<Vec<String>>,
    pub structural: StructuralParams,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Seird { variant: SeirdVariant, rates: SeirdRates, include_deceased: bool },
    Heat,
    Custom(CustomSpec),
}

impl ModelSpec {
    pub fn preset_id(&self) -> String {
        match self {
            ModelSpec::Seird { variant, .. } => match variant {
                SeirdVariant::Original => "seird_original".into(),
                SeirdVariant::Quadratic => "seird_quadratic".into(),
                SeirdVariant::Delta(d) => format!("seird_delta({d:?})"),
                SeirdVariant::Heterogeneous => "seird_hetero".into(),
            },
            ModelSpec::Heat => "heat".into(),
            ModelSpec::Custom(_) => "custom".into(),
        }
    }

    pub fn species(&self) -> Vec<String> {
        match self {
            ModelSpec::Seird { .. } => qrd_core::seird::SPECIES.iter().map(|s| s.to_string()).collect(),
            ModelSpec::Heat => vec!["u".into()],
            ModelSpec::Custom(c) => c.species.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    /// `(s, e, i, r) = (1, 0, 0, 0)`.
    Homogeneous,
    /// Gaussian infection spot; missing values follow the grid.
    Spot { center: Option<Vec<f64>>, width: Option<f64>, mass: Option<f64> },
    TwoCluster { width: Option<f64>, mass: Option<f64> },
    /// `1 + cos(πx)`.
    Heat,
    /// One expression in `x, y` per species.
    Expr(Vec<String>),
}

impl InitialSpec {
    fn name(&self) -> &'static str {
        match self {
            InitialSpec::Homogeneous => "homogeneous",
            InitialSpec::Spot { .. } => "spot",
            InitialSpec::TwoCluster { .. } => "two_cluster",
            InitialSpec::Heat => "heat",
            InitialSpec::Expr(_) => "expr",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub cells: Vec<usize>,
    pub extent: Vec<f64>,
}

impl GridSpec {
    pub fn build(&self) -> qrd_core::Result<Grid> {
        Grid::new(&self.cells, &self.extent)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSpec {
    pub t_end: f64,
    pub checkpoints: usize,
    pub eps: f64,
    /// Regularization levels of the ε study, strictly decreasing.
    pub eps_levels: Vec<f64>,
    pub control: StepControl,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThetaMode {
    Auto,
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergySpec {
    pub orders: Vec<u32>,
    pub theta: ThetaMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditSpec {
    pub u_max: f64,
    pub seed: u64,
    pub interior: usize,
    pub per_face: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Panel {
    Masses,
    Energies,
    Linf,
}

impl Panel {
    pub const ALL: [Panel; 3] = [Panel::Masses, Panel::Energies, Panel::Linf];

    pub fn name(self) -> &'static str {
        match self {
            Panel::Masses => "masses",
            Panel::Energies => "energies",
            Panel::Linf => "linf",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub directory: String,
    /// Write a snapshot every this many checkpoints (and at the end); 0
    /// disables snapshots.
    pub snapshot_every: usize,
    pub panels: Vec<Panel>,
    /// Leave wall-clock data out of the summary so reruns are byte-identical.
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: GridSpec,
    pub boundary: BoundarySpec,
    pub initial: InitialSpec,
    pub time: TimeSpec,
    pub energy: EnergySpec,
    pub audit: AuditSpec,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn m(&self) -> usize {
        self.model.species().len()
    }
}

struct Entry {
    value: String,
    line: usize,
}

#[derive(Default)]
struct Document {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn nearest<'a>(word: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, c)| *d <= word.len().max(c.len()) / 3 + 1)
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c)
}

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k)
}

fn lex(text: &str, errors: &mut Vec<ConfigError>) -> Document {
    let mut doc = Document::default();
    let mut current: Option<String> = None;
    let mut skipping = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| ConfigError { line: Some(line), message };
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if section_keys(&name).is_none() {
                let hint = nearest(&name, SCHEMA.iter().map(|(s, _)| *s))
                    .map(|s| format!(" (did you mean [{s}]?)"))
                    .unwrap_or_default();
                errors.push(err(format!("unknown section [{name}]{hint}")));
                current = None;
                skipping = true;
                continue;
            }
            if doc.sections.contains_key(&name) {
                errors.push(err(format!("section [{name}] appears more than once")));
            }
            doc.sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            errors.push(err(format!("expected `key = value` or `[section]`, got `{trimmed}`")));
            continue;
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let Some(section) = &current else {
            // Keys under an unknown section were already reported with it.
            if !skipping {
                errors.push(err(format!("key `{key}` appears before any section header")));
            }
            continue;
        };
        let keys = section_keys(section).expect("current section is known");
        if !keys.contains(&key.as_str()) {
            let hint = match SCHEMA.iter().find(|(_, ks)| ks.contains(&key.as_str())) {
                Some((other, _)) => Some(format!(" (`{key}` belongs in [{other}])")),
                None => nearest(&key, keys.iter().copied()).map(|k| format!(" (did you mean `{k}`?)")),
            };
            errors.push(err(format!("unknown key `{key}` in [{section}]{}", hint.unwrap_or_default())));
            continue;
        }
        let table = doc.sections.get_mut(section).expect("section was inserted");
        if table.contains_key(&key) {
            errors.push(err(format!("key `{key}` is set twice in [{section}]")));
            continue;
        }
        table.insert(key, Entry { value, line });
    }
    doc
}

struct Reader<'a> {
    doc: &'a Document,
    errors: Vec<ConfigError>,
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<&'a Entry> {
        self.doc.sections.get(section).and_then(|t| t.get(key))
    }

    fn has_section(&self, section: &str) -> bool {
        self.doc.sections.get(section).is_some_and(|t| !t.is_empty())
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.entry(section, key).map(|e| e.line)
    }

    fn fail(&mut self, line: Option<usize>, message: impl Into<String>) {
        self.errors.push(ConfigError { line, message: message.into() });
    }

    fn opt<T: FromStr>(&mut self, section: &str, key: &str) -> Option<T> {
        let e = self.entry(section, key)?;
        match e.value.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                let what = std::any::type_name::<T>();
                let kind = if what.contains("f64") { "a number" } else if what == "bool" { "true or false" } else { "a nonnegative integer" };
                self.fail(Some(e.line), format!("[{section}] {key}: expected {kind}, got `{}`", e.value));
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> T {
        self.opt(section, key).unwrap_or(default)
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> Option<Vec<T>> {
        let e = self.entry(section, key)?;
        if e.value.is_empty() {
            return Some(Vec::new());
        }
        let mut out = Vec::new();
        for item in e.value.split(',') {
            match item.trim().parse() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.fail(Some(e.line), format!("[{section}] {key}: cannot read list item `{}`", item.trim()));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn exprs(&mut self, section: &str, key: &str, vars: &[&str]) -> Option<Vec<String>> {
        let e = self.entry(section, key)?;
        let items: Vec<String> = e.value.split(';').map(|s| s.trim().to_string()).collect();
        for item in &items {
            self.check_expr(Some(e.line), section, key, item, vars);
        }
        Some(items)
    }

    fn expr(&mut self, section: &str, key: &str, default: &str, vars: &[&str]) -> String {
        match self.entry(section, key) {
            Some(e) => {
                self.check_expr(Some(e.line), section, key, &e.value, vars);
                e.value.clone()
            }
            None => default.to_string(),
        }
    }

    fn check_expr(&mut self, line: Option<usize>, section: &str, key: &str, source: &str, vars: &[&str]) {
        if let Err(err) = Expr::compile(source, vars) {
            self.fail(line, format!("[{section}] {key}: {err} (variables: {})", vars.join(", ")));
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors::single(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let doc = lex(text, &mut errors);
    let mut r = Reader { doc: &doc, errors };

    let model = read_model(&mut r);
    let species = model.species();
    let m = species.len();
    let grid = read_grid(&mut r);
    let boundary = read_boundary(&mut r, m);
    let initial = read_initial(&mut r, &model, grid.cells.len());
    let energy = read_energy(&mut r, m);
    let time = read_time(&mut r, !energy.orders.is_empty());
    let audit = read_audit(&mut r);
    let output = read_output(&mut r);

    if r.errors.is_empty() {
        let cfg = RunConfig { model, grid, boundary, initial, time, energy, audit, output };
        // Cross-module rules are enforced by building the run once.
        if let Err(e) = crate::setup::build(&cfg) {
            r.errors.push(ConfigError { line: None, message: e.to_string() });
        } else {
            return Ok(cfg);
        }
    }
    r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
    Err(ConfigErrors(r.errors))
}

fn parse_preset(value: &str) -> Option<Result<ModelSpec, String>> {
    let seird = |variant| ModelSpec::Seird { variant, rates: SeirdRates::default(), include_deceased: false };
    Some(Ok(match value {
        "seird_original" => seird(SeirdVariant::Original),
        "seird_quadratic" => seird(SeirdVariant::Quadratic),
        "seird_hetero" => seird(SeirdVariant::Heterogeneous),
        "heat" => ModelSpec::Heat,
        "custom" => ModelSpec::Custom(CustomSpec {
            species: Vec::new(),
            reactions: Vec::new(),
            phi: "1".into(),
            diffusion: Vec::new(),
            diffusion_y: None,
            diffusion_xy: None,
            structural: StructuralParams::neutral(1),
        }),
        other => {
            let arg = other.strip_prefix("seird_delta(")?.strip_suffix(')')?;
            return Some(match arg.trim().parse::<f64>() {
                Ok(d) if d > 0.0 && d.is_finite() => Ok(seird(SeirdVariant::Delta(d))),
                _ => Err(format!("seird_delta needs a positive δ, got `{arg}`")),
            });
        }
    }))
}

const PRESETS: [&str; 6] = ["seird_original", "seird_quadratic", "seird_delta(0.1)", "seird_hetero", "heat", "custom"];

fn read_model(r: &mut Reader) -> ModelSpec {
    let mut model = match r.entry("model", "preset") {
        None => ModelSpec::Seird { variant: SeirdVariant::Quadratic, rates: SeirdRates::default(), include_deceased: false },
        Some(e) => match parse_preset(&e.value) {
            Some(Ok(m)) => m,
            Some(Err(msg)) => {
                r.fail(Some(e.line), msg);
                ModelSpec::Heat
            }
            None => {
                let hint = nearest(&e.value, PRESETS.iter().copied())
                    .map(|p| format!(" (did you mean `{p}`?)"))
                    .unwrap_or_default();
                r.fail(Some(e.line), format!("unknown preset `{}`{hint}; expected one of {}", e.value, PRESETS.join(", ")));
                ModelSpec::Heat
            }
        },
    };
    let seird = matches!(model, ModelSpec::Seird { .. });
    let custom = matches!(model, ModelSpec::Custom(_));
    if !seird {
        for key in ["include_deceased"] {
            if let Some(line) = r.line("model", key) {
                r.fail(Some(line), format!("[model] {key} applies to the seird presets only"));
            }
        }
        if r.has_section("rates") {
            r.fail(None, "section [rates] applies to the seird presets only");
        }
    }
    if !custom {
        for s in ["custom", "structural"] {
            if r.has_section(s) {
                r.fail(None, format!("section [{s}] applies to preset = custom only"));
            }
        }
    }
    match &mut model {
        ModelSpec::Seird { variant, rates, include_deceased } => {
            *include_deceased = r.get("model", "include_deceased", false);
            read_rates(r, rates, variant);
        }
        ModelSpec::Heat => {}
        ModelSpec::Custom(spec) => read_custom(r, spec),
    }
    model
}

fn read_rates(r: &mut Reader, rates: &mut SeirdRates, variant: &SeirdVariant) {
    let defaults = SeirdRates::default();
    let names = defaults.named();
    let mut values: Vec<String> = Vec::with_capacity(names.len());
    for (key, default) in names {
        values.push(r.expr("rates", key, default, &SPACE_TIME_VARS));
    }
    let hetero = *variant == SeirdVariant::Heterogeneous;
    if !hetero {
        for (k, v) in values.iter().enumerate() {
            if let Ok(e) = Expr::compile(v, &SPACE_TIME_VARS) {
                if e.as_constant().is_none() {
                    let line = r.line("rates", names[k].0);
                    r.fail(line, format!("[rates] {}: space-time rates need preset = seird_hetero", names[k].0));
                }
            }
        }
    }
    let mut it = values.into_iter();
    let mut next = || it.next().expect("one value per rate");
    rates.alpha = next();
    rates.mu = next();
    rates.sigma = next();
    rates.phi_e = next();
    rates.phi_r = next();
    rates.phi_d = next();
    rates.beta_i = next();
    rates.beta_e = next();
    rates.nu = [next(), next(), next(), next()];
    rates.a0 = r.get("rates", "a0", 0.0);
    if !(rates.a0 >= 0.0) || !rates.a0.is_finite() {
        let line = r.line("rates", "a0");
        r.fail(line, format!("[rates] a0 must be finite and ≥ 0 (got {})", rates.a0));
    }
    for key in ["beta_i_response", "beta_e_response"] {
        if let Some(e) = r.entry("rates", key) {
            if !hetero {
                r.fail(Some(e.line), format!("[rates] {key} needs preset = seird_hetero"));
                continue;
            }
            r.check_expr(Some(e.line), "rates", key, &e.value, &RESPONSE_VARS);
            let v = Some(e.value.clone());
            if key == "beta_i_response" {
                rates.beta_i_response = v;
            } else {
                rates.beta_e_response = v;
            }
        }
    }
    rates.response_growth = r.get("rates", "response_growth", 1.0);
    if !(rates.response_growth > 0.0) || !rates.response_growth.is_finite() {
        let line = r.line("rates", "response_growth");
        r.fail(line, "[rates] response_growth must be positive");
    }
}

fn valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn read_custom(r: &mut Reader, spec: &mut CustomSpec) {
    let Some(e) = r.entry("custom", "species") else {
        r.fail(None, "[custom] species is required for preset = custom");
        return;
    };
    let species: Vec<String> = e.value.split(',').map(|s| s.trim().to_string()).collect();
    let mut ok = true;
    for (k, s) in species.iter().enumerate() {
        if !valid_identifier(s) || RESERVED.contains(&s.as_str()) {
            r.fail(Some(e.line), format!("[custom] species: `{s}` is not a usable species name"));
            ok = false;
        } else if species[..k].contains(s) {
            r.fail(Some(e.line), format!("[custom] species: `{s}` is listed twice"));
            ok = false;
        }
    }
    if !ok {
        return;
    }
    let m = species.len();
    let mut reaction_vars: Vec<&str> = species.iter().map(String::as_str).collect();
    reaction_vars.extend(SPACE_TIME_VARS);
    let species_vars: Vec<&str> = species.iter().map(String::as_str).collect();

    let sized = |r: &mut Reader, key: &str, vars: &[&str], required: bool| -> Option<Vec<String>> {
        let list = r.exprs("custom", key, vars);
        match &list {
            None if required => r.fail(None, format!("[custom] {key} is required for preset = custom")),
            Some(l) if l.len() != m => {
                let line = r.line("custom", key);
                r.fail(line, format!("[custom] {key}: expected {m} entries separated by `;`, got {}", l.len()));
            }
            _ => {}
        }
        list
    };
    spec.reactions = sized(r, "reactions", &reaction_vars, true).unwrap_or_default();
    spec.diffusion = sized(r, "diffusion", &SPACE_TIME_VARS, true).unwrap_or_default();
    spec.diffusion_y = sized(r, "diffusion_y", &SPACE_TIME_VARS, false);
    spec.diffusion_xy = sized(r, "diffusion_xy", &SPACE_TIME_VARS, false);
    spec.phi = match r.entry("custom", "phi") {
        Some(e) if e.value == "total" => e.value.clone(),
        Some(e) => {
            r.check_expr(Some(e.line), "custom", "phi", &e.value, &species_vars);
            e.value.clone()
        }
        None => "1".into(),
    };
    spec.species = species;
    spec.structural = read_structural(r, m);
}

fn read_structural(r: &mut Reader, m: usize) -> StructuralParams {
    let mut s = StructuralParams::neutral(m);
    let scalars: [(&str, &mut f64); 10] = [
        ("b", &mut s.b),
        ("m_lower", &mut s.m_lower),
        ("pi_exp", &mut s.pi_exp),
        ("m_upper", &mut s.m_upper),
        ("r", &mut s.r),
        ("k1", &mut s.k1),
        ("k2", &mut s.k2),
        ("k3", &mut s.k3),
        ("k4", &mut s.k4),
        ("l", &mut s.l),
    ];
    for (key, slot) in scalars {
        if let Some(v) = r.opt("structural", key) {
            *slot = v;
        }
    }
    if let Some(c) = r.list("structural", "c") {
        s.c = c;
    }
    if let Some(e) = r.entry("structural", "a") {
        let rows: Result<Vec<Vec<f64>>, _> = e
            .value
            .split(';')
            .map(|row| row.split(',').map(|v| v.trim().parse::<f64>()).collect())
            .collect();
        match rows {
            Ok(a) => s.a = a,
            Err(_) => r.fail(Some(e.line), "[structural] a: expected rows of numbers separated by `;`"),
        }
    }
    if let Err(e) = s.validate(m) {
        r.fail(None, format!("[structural] {e}"));
    }
    s
}

fn read_grid(r: &mut Reader) -> GridSpec {
    let cells: Vec<usize> = r.list("grid", "cells").unwrap_or_else(|| vec![64, 64]);
    let extent: Vec<f64> = r.list("grid", "extent").unwrap_or_else(|| vec![1.0; cells.len()]);
    let spec = GridSpec { cells, extent };
    if let Err(e) = spec.build() {
        let line = r.line("grid", "cells").or(r.line("grid", "extent"));
        r.fail(line, format!("[grid] {e}"));
    }
    spec
}

fn read_boundary(r: &mut Reader, m: usize) -> BoundarySpec {
    let kind = r.entry("boundary", "kind").map(|e| (e.value.clone(), e.line));
    let robin: Option<Vec<f64>> = r.list("boundary", "robin");
    let spec = match kind.as_ref().map(|(k, l)| (k.as_str(), *l)) {
        None | Some(("neumann", _)) => {
            if let Some(line) = r.line("boundary", "robin") {
                r.fail(Some(line), "[boundary] robin coefficients need kind = robin");
            }
            BoundarySpec::NeumannZeroFlux
        }
        Some(("robin", line)) => match robin {
            Some(a) if a.len() == 1 && m > 1 => BoundarySpec::Robin(vec![a[0]; m]),
            Some(a) => BoundarySpec::Robin(a),
            None => {
                r.fail(Some(line), "[boundary] kind = robin needs `robin = <coefficients>`");
                BoundarySpec::Robin(vec![0.0; m])
            }
        },
        Some((other, line)) => {
            r.fail(Some(line), format!("[boundary] kind must be `neumann` or `robin`, got `{other}`"));
            BoundarySpec::NeumannZeroFlux
        }
    };
    if let Err(e) = spec.validate(m) {
        let line = r.line("boundary", "robin");
        r.fail(line, format!("[boundary] {e}"));
    }
    spec
}

fn read_initial(r: &mut Reader, model: &ModelSpec, dim: usize) -> InitialSpec {
    let seird = matches!(model, ModelSpec::Seird { .. });
    let m = model.species().len();
    let default = match model {
        ModelSpec::Seird { .. } => "spot",
        ModelSpec::Heat => "heat",
        ModelSpec::Custom(_) => "expr",
    };
    let (profile, line) = match r.entry("initial", "profile") {
        Some(e) => (e.value.clone(), Some(e.line)),
        None => (default.to_string(), None),
    };
    let width: Option<f64> = r.opt("initial", "width");
    let mass: Option<f64> = r.opt("initial", "mass");
    let center: Option<Vec<f64>> = r.list("initial", "center");
    if width.is_some_and(|w| !(w > 0.0) || !w.is_finite()) {
        let l = r.line("initial", "width");
        r.fail(l, "[initial] width must be positive");
    }
    if mass.is_some_and(|v| !(v >= 0.0) || !v.is_finite()) {
        let l = r.line("initial", "mass");
        r.fail(l, "[initial] mass must be finite and ≥ 0");
    }
    let spec = match profile.as_str() {
        "homogeneous" => InitialSpec::Homogeneous,
        "spot" => {
            if center.as_ref().is_some_and(|c| c.len() != dim) {
                let l = r.line("initial", "center");
                r.fail(l, format!("[initial] center needs {dim} coordinates"));
            }
            InitialSpec::Spot { center, width, mass }
        }
        "two_cluster" => InitialSpec::TwoCluster { width, mass },
        "heat" => InitialSpec::Heat,
        "expr" => match r.exprs("initial", "values", &SPACE_VARS) {
            Some(v) => {
                if v.len() != m {
                    let l = r.line("initial", "values");
                    r.fail(l, format!("[initial] values: expected {m} expressions separated by `;`, got {}", v.len()));
                }
                InitialSpec::Expr(v)
            }
            None => {
                r.fail(line, "[initial] profile = expr needs `values = <expr>; ...`");
                InitialSpec::Expr(Vec::new())
            }
        },
        other => {
            let names = ["homogeneous", "spot", "two_cluster", "heat", "expr"];
            let hint = nearest(other, names.iter().copied()).map(|p| format!(" (did you mean `{p}`?)")).unwrap_or_default();
            r.fail(line, format!("[initial] unknown profile `{other}`{hint}"));
            InitialSpec::Heat
        }
    };
    let seird_only = matches!(spec, InitialSpec::Homogeneous | InitialSpec::Spot { .. } | InitialSpec::TwoCluster { .. });
    if seird_only && !seird {
        r.fail(line, format!("[initial] profile `{}` needs a seird preset", spec.name()));
    }
    if matches!(spec, InitialSpec::Heat) && m != 1 {
        r.fail(line, "[initial] profile `heat` needs a single-species model");
    }
    let uses_shape = matches!(spec, InitialSpec::Spot { .. } | InitialSpec::TwoCluster { .. });
    for key in ["center", "width", "mass"] {
        let misplaced = if key == "center" { !matches!(spec, InitialSpec::Spot { .. }) } else { !uses_shape };
        if misplaced {
            if let Some(l) = r.line("initial", key) {
                r.fail(Some(l), format!("[initial] {key} does not apply to profile `{}`", spec.name()));
            }
        }
    }
    if !matches!(spec, InitialSpec::Expr(_)) {
        if let Some(l) = r.line("initial", "values") {
            r.fail(Some(l), format!("[initial] values does not apply to profile `{}`", spec.name()));
        }
    }
    spec
}

fn read_time(r: &mut Reader, monitored: bool) -> TimeSpec {
    let defaults = StepControl::default();
    let t_end: f64 = r.get("time", "t_end", 5.0);
    if !(t_end > 0.0) || !t_end.is_finite() {
        let l = r.line("time", "t_end");
        r.fail(l, format!("T must be positive (got {t_end})"));
    }
    let checkpoints: usize = r.get("time", "checkpoints", 200);
    let needed = if monitored { 3 } else { 2 };
    if checkpoints < needed {
        let l = r.line("time", "checkpoints");
        r.fail(l, format!("[time] checkpoints must be ≥ {needed} (got {checkpoints})"));
    }
    let eps: f64 = r.get("time", "eps", 0.0);
    if !(eps >= 0.0) || !eps.is_finite() {
        let l = r.line("time", "eps");
        r.fail(l, format!("[time] eps must be finite and ≥ 0 (got {eps})"));
    }
    let eps_levels: Vec<f64> = r.list("time", "eps_levels").unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]);
    if eps_levels.len() < 2 || eps_levels.windows(2).any(|w| !(w[1] < w[0])) || eps_levels.iter().any(|e| !(*e >= 0.0)) {
        let l = r.line("time", "eps_levels");
        r.fail(l, "[time] eps_levels needs at least two values, ≥ 0 and strictly decreasing");
    }
    let control = StepControl {
        gamma: r.get("time", "gamma", defaults.gamma),
        dt_min: r.get("time", "dt_min", defaults.dt_min),
        dt_max: r.get("time", "dt_max", defaults.dt_max),
        rho: r.get("time", "rho", defaults.rho),
    };
    if let Err(e) = control.validate() {
        r.fail(None, format!("[time] {e}"));
    }
    TimeSpec { t_end, checkpoints, eps, eps_levels, control }
}

fn read_energy(r: &mut Reader, m: usize) -> EnergySpec {
    let orders: Vec<u32> = r.list("energy", "orders").unwrap_or_else(|| vec![2]);
    for p in &orders {
        if *p < 2 || *p > DEFAULT_P_CAP {
            let l = r.line("energy", "orders");
            r.fail(l, format!("energy order p must satisfy 2 ≤ p ≤ {DEFAULT_P_CAP} (got {p})"));
        }
    }
    if orders.iter().enumerate().any(|(k, p)| orders[..k].contains(p)) {
        let l = r.line("energy", "orders");
        r.fail(l, "[energy] orders must not repeat");
    }
    let theta = match r.entry("energy", "theta") {
        None => ThetaMode::Auto,
        Some(e) if e.value == "auto" => ThetaMode::Auto,
        Some(e) => {
            let line = e.line;
            match r.list::<f64>("energy", "theta") {
                Some(t) if t.len() == m && t.iter().all(|v| *v > 0.0 && v.is_finite()) => ThetaMode::Explicit(t),
                Some(_) => {
                    r.fail(Some(line), format!("[energy] theta must be `auto` or {m} positive weights"));
                    ThetaMode::Auto
                }
                None => ThetaMode::Auto,
            }
        }
    };
    EnergySpec { orders, theta }
}

fn read_audit(r: &mut Reader) -> AuditSpec {
    let spec = AuditSpec {
        u_max: r.get("audit", "u_max", 10.0),
        seed: r.get("audit", "seed", 0),
        interior: r.get("audit", "interior", 4096),
        per_face: r.get("audit", "per_face", 1000),
    };
    if !(spec.u_max > 0.0) || !spec.u_max.is_finite() {
        let l = r.line("audit", "u_max");
        r.fail(l, format!("[audit] u_max must be positive (got {})", spec.u_max));
    }
    if spec.interior == 0 {
        let l = r.line("audit", "interior");
        r.fail(l, "[audit] interior must be ≥ 1");
    }
    spec
}

fn read_output(r: &mut Reader) -> OutputSpec {
    let directory = r.entry("output", "directory").map(|e| e.value.clone()).unwrap_or_else(|| "qrd-run".into());
    if directory.is_empty() {
        let l = r.line("output", "directory");
        r.fail(l, "[output] directory must not be empty");
    }
    let panels = match r.entry("output", "panels") {
        None => Panel::ALL.to_vec(),
        Some(e) if e.value.is_empty() => Vec::new(),
        Some(e) => {
            let mut out = Vec::new();
            for name in e.value.split(',').map(str::trim) {
                match Panel::ALL.iter().find(|p| p.name() == name) {
                    Some(p) if out.contains(p) => r.fail(Some(e.line), format!("[output] panel `{name}` is listed twice")),
                    Some(p) => out.push(*p),
                    None => {
                        let hint = nearest(name, Panel::ALL.iter().map(|p| p.name()))
                            .map(|p| format!(" (did you mean `{p}`?)"))
                            .unwrap_or_default();
                        r.fail(Some(e.line), format!("[output] unknown panel `{name}`{hint}"));
                    }
                }
            }
            out
        }
    };
    OutputSpec {
        directory,
        snapshot_every: r.get("output", "snapshot_every", 50),
        panels,
        deterministic: r.get("output", "deterministic", true),
    }
}

struct Writer(String);

impl Writer {
    fn section(&mut self, name: &str) {
        if !self.0.is_empty() {
            self.0.push('\n');
        }
        self.0.push_str(&format!("[{name}]\n"));
    }

    fn kv(&mut self, key: &str, value: impl fmt::Display) {
        self.0.push_str(&format!("{key} = {value}\n"));
    }

    fn num(&mut self, key: &str, v: f64) {
        self.kv(key, format!("{v:?}"));
    }

    fn nums(&mut self, key: &str, v: &[f64]) {
        self.kv(key, v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
    }

    fn ints<T: fmt::Display>(&mut self, key: &str, v: &[T]) {
        self.kv(key, v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
    }

    fn exprs(&mut self, key: &str, v: &[String]) {
        self.kv(key, v.join("; "));
    }
}

/// Canonical text of a configuration.
pub fn emit(cfg: &RunConfig) -> String {
    let mut w = Writer(String::new());
    w.section("model");
    w.kv("preset", cfg.model.preset_id());
    match &cfg.model {
        ModelSpec::Seird { rates, include_deceased, .. } => {
            w.kv("include_deceased", include_deceased);
            w.section("rates");
            for (key, value) in rates.named() {
                w.kv(key, value);
            }
            w.num("a0", rates.a0);
            if let Some(b) = &rates.beta_i_response {
                w.kv("beta_i_response", b);
            }
            if let Some(b) = &rates.beta_e_response {
                w.kv("beta_e_response", b);
            }
            w.num("response_growth", rates.response_growth);
        }
        ModelSpec::Heat => {}
        ModelSpec::Custom(c) => {
            w.section("custom");
            w.kv("species", c.species.join(", "));
            w.exprs("reactions", &c.reactions);
            w.kv("phi", &c.phi);
            w.exprs("diffusion", &c.diffusion);
            if let Some(d) = &c.diffusion_y {
                w.exprs("diffusion_y", d);
            }
            if let Some(d) = &c.diffusion_xy {
                w.exprs("diffusion_xy", d);
            }
            let s = &c.structural;
            w.section("structural");
            for (key, v) in [
                ("b", s.b),
                ("m_lower", s.m_lower),
                ("pi_exp", s.pi_exp),
                ("m_upper", s.m_upper),
                ("r", s.r),
                ("k1", s.k1),
                ("k2", s.k2),
                ("k3", s.k3),
                ("k4", s.k4),
                ("l", s.l),
            ] {
                w.num(key, v);
            }
            w.nums("c", &s.c);
            let rows: Vec<String> =
                s.a.iter().map(|row| row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")).collect();
            w.kv("a", rows.join("; "));
        }
    }

    w.section("grid");
    w.ints("cells", &cfg.grid.cells);
    w.nums("extent", &cfg.grid.extent);

    w.section("boundary");
    match &cfg.boundary {
        BoundarySpec::NeumannZeroFlux => w.kv("kind", "neumann"),
        BoundarySpec::Robin(a) => {
            w.kv("kind", "robin");
            w.nums("robin", a);
        }
    }

    w.section("initial");
    w.kv("profile", cfg.initial.name());
    match &cfg.initial {
        InitialSpec::Spot { center, width, mass } => {
            if let Some(c) = center {
                w.nums("center", c);
            }
            if let Some(v) = width {
                w.num("width", *v);
            }
            if let Some(v) = mass {
                w.num("mass", *v);
            }
        }
        InitialSpec::TwoCluster { width, mass } => {
            if let Some(v) = width {
                w.num("width", *v);
            }
            if let Some(v) = mass {
                w.num("mass", *v);
            }
        }
        InitialSpec::Expr(values) => w.exprs("values", values),
        InitialSpec::Homogeneous | InitialSpec::Heat => {}
    }

    let t = &cfg.time;
    w.section("time");
    w.num("t_end", t.t_end);
    w.kv("checkpoints", t.checkpoints);
    w.num("eps", t.eps);
    w.nums("eps_levels", &t.eps_levels);
    w.num("gamma", t.control.gamma);
    w.num("dt_min", t.control.dt_min);
    w.num("dt_max", t.control.dt_max);
    w.num("rho", t.control.rho);

    w.section("energy");
    w.ints("orders", &cfg.energy.orders);
    match &cfg.energy.theta {
        ThetaMode::Auto => w.kv("theta", "auto"),
        ThetaMode::Explicit(theta) => w.nums("theta", theta),
    }

    let a = &cfg.audit;
    w.section("audit");
    w.num("u_max", a.u_max);
    w.kv("seed", a.seed);
    w.kv("interior", a.interior);
    w.kv("per_face", a.per_face);

    let o = &cfg.output;
    w.section("output");
    w.kv("directory", &o.directory);
    w.kv("snapshot_every", o.snapshot_every);
    w.kv("panels", o.panels.iter().map(|p| p.name()).collect::<Vec<_>>().join(", "));
    w.kv("deterministic", o.deterministic);
    w.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn messages(text: &str) -> Vec<String> {
        parse_str(text).expect_err("config should be rejected").messages()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_str("").unwrap();
        assert_eq!(cfg.model.preset_id(), "seird_quadratic");
        assert_eq!(cfg.grid.cells, vec![64, 64]);
        assert_eq!(cfg.time.checkpoints, 200);
        assert_eq!(cfg.energy.orders, vec![2]);
        assert_eq!(cfg.energy.theta, ThetaMode::Auto);
        assert_eq!(cfg.output.panels, Panel::ALL.to_vec());
        assert!(matches!(cfg.initial, InitialSpec::Spot { center: None, width: None, mass: None }));
    }

    #[test]
    fn negative_horizon_is_rejected() {
        let msgs = messages("[time]\nt_end = -1\n");
        assert!(msgs.iter().any(|m| m.starts_with("T must be positive")), "{msgs:?}");
    }

    #[test]
    fn unknown_key_names_the_nearest_one() {
        let msgs = messages("[rates]\nalpah = 0.1\n");
        assert!(msgs[0].contains("`alpah`") && msgs[0].contains("did you mean `alpha`"), "{msgs:?}");
        let msgs = messages("[time]\norders = 2\n");
        assert!(msgs[0].contains("belongs in [energy]"), "{msgs:?}");
        let msgs = messages("[tiem]\nt_end = 1\n");
        assert!(msgs[0].contains("did you mean [time]"), "{msgs:?}");
    }

    #[test]
    fn every_error_is_reported() {
        let msgs = messages("[time]\nt_end = 0\ngamma = 2\n[energy]\norders = 1\n[audit]\nu_max = -3\n");
        assert_eq!(msgs.len(), 4, "{msgs:?}");
    }

    #[test]
    fn delta_preset_carries_its_parameter() {
        let cfg = parse_str("[model]\npreset = seird_delta(0.25)\n").unwrap();
        assert!(matches!(cfg.model, ModelSpec::Seird { variant: SeirdVariant::Delta(d), .. } if d == 0.25));
        assert!(parse_str("[model]\npreset = seird_delta(-1)\n").is_err());
    }

    #[test]
    fn off_diagonal_diffusion_is_rejected() {
        let text = "[model]\npreset = custom\n[custom]\nspecies = u\nreactions = 0\ndiffusion = 1\ndiffusion_xy = 0.5\n\
                    [grid]\ncells = 8, 8\n[initial]\nvalues = 1\n";
        let msgs = messages(text);
        assert!(msgs.iter().any(|m| m.contains("non-diagonal")), "{msgs:?}");
        let ok = text.replace("diffusion_xy = 0.5", "diffusion_xy = 0");
        parse_str(&ok).unwrap();
    }

    #[test]
    fn rates_section_is_seird_only() {
        let msgs = messages("[model]\npreset = heat\n[rates]\nalpha = 1\n[grid]\ncells = 8\n");
        assert!(msgs.iter().any(|m| m.contains("[rates]")), "{msgs:?}");
    }

    #[test]
    fn bad_expressions_are_reported_with_their_key() {
        let msgs = messages("[rates]\nmu = 0.1 +\nsigma = foo\n");
        assert_eq!(msgs.len(), 2, "{msgs:?}");
        assert!(msgs[0].contains("[rates] mu") && msgs[1].contains("[rates] sigma"));
    }

    #[test]
    fn space_time_rates_need_the_heterogeneous_preset() {
        assert!(parse_str("[rates]\nalpha = 0.01*(1+x)\n").is_err());
        parse_str("[model]\npreset = seird_hetero\n[rates]\nalpha = 0.01*(1+x)\nbeta_i_response = z/(1+z)\n").unwrap();
    }

    #[test]
    fn emit_round_trips_defaults_and_custom_models() {
        let cfg = parse_str("").unwrap();
        assert_eq!(parse_str(&emit(&cfg)).unwrap(), cfg);
        let text = "[model]\npreset = custom\n[custom]\nspecies = u, v\nreactions = -u*v; u*v\nphi = total\n\
                    diffusion = 1; 0.5\n[structural]\nk1 = 0\nc = 1, 1\na = 1, 0; 1, 1\n[grid]\ncells = 16\n\
                    [initial]\nvalues = 1; 0.1*x\n[boundary]\nkind = robin\nrobin = 0.5\n[energy]\ntheta = 2, 1\n";
        let cfg = parse_str(text).unwrap();
        assert_eq!(cfg.boundary, BoundarySpec::Robin(vec![0.5, 0.5]));
        assert_eq!(parse_str(&emit(&cfg)).unwrap(), cfg);
    }
}
