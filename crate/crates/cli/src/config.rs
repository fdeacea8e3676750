//! Experiment configuration in sectioned `key = value` form:
//! `[experiment]`, `[model]`, `[scheme]`, `[output]`.

use std::fmt;
use std::path::{Path, PathBuf};

use ini::Ini;
use switchsde::markov::GeneratorMatrix;
use switchsde::model::{
    builtin, parse_model_with_generator, HybridModel, StepControl, StepVariant, BUILTIN_NAMES,
};
use switchsde::schemes::SchemeVariant;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Convergence,
    ConvergenceExact,
    Invariant,
    Stability,
    CheckAssumptions,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::Convergence,
        Command::ConvergenceExact,
        Command::Invariant,
        Command::Stability,
        Command::CheckAssumptions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Convergence => "convergence",
            Command::ConvergenceExact => "convergence-exact",
            Command::Invariant => "invariant",
            Command::Stability => "stability",
            Command::CheckAssumptions => "check-assumptions",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    fn default_model(self) -> &'static str {
        match self {
            Command::ConvergenceExact => "ginzburg32",
            Command::Stability => "ginzburg53",
            _ => "volatility31",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelRef {
    Builtin {
        name: String,
        gamma: Option<f64>,
    },
    /// Model DSL file.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    AcrossPaths,
    AlongPath,
}

impl Sampling {
    fn name(self) -> &'static str {
        match self {
            Sampling::AcrossPaths => "across-paths",
            Sampling::AlongPath => "along-path",
        }
    }
}

/// `h(Δ) = scale Δ^{-exponent}` with bound `k`; `theta` selects the
/// infinite-horizon variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpec {
    pub scale: f64,
    pub exponent: f64,
    pub k: f64,
    pub theta: Option<f64>,
}

impl StepSpec {
    fn from_control(sc: &StepControl<f64>) -> Self {
        Self {
            scale: sc.scale(),
            exponent: sc.exponent(),
            k: sc.k(),
            theta: match sc.variant() {
                StepVariant::Plain => None,
                StepVariant::Stability { theta } | StepVariant::Measure { theta } => Some(theta),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub command: Command,
    pub seed: u64,
    pub paths: usize,
    pub workers: Option<usize>,
    pub model: ModelRef,
    /// Row-major rates replacing the model's generator.
    pub generator: Option<Vec<f64>>,
    pub variant: SchemeVariant,
    pub delta: f64,
    /// Test steps of the convergence runs, descending.
    pub deltas: Vec<f64>,
    /// Reference step for convergence runs, fine step for `invariant`.
    pub reference_delta: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    /// 0-based; written 1-based.
    pub regime: usize,
    pub step: Option<StepSpec>,
    /// Error moment `E|X-Y|^q` of `convergence`.
    pub q: f64,
    /// Moment order of `stability` traces and order of `W_p`.
    pub p: f64,
    pub alpha: f64,
    pub sampling: Sampling,
    pub burn_in: f64,
    pub thinning: usize,
    pub p_bar: f64,
    pub rho: f64,
    pub out_dir: PathBuf,
    pub svg: bool,
}

fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

impl ExperimentConfig {
    /// Defaults for `command` on a built-in model.
    pub fn defaults(command: Command, model: &str, paper_scale: bool) -> Result<Self, CliError> {
        let gamma = (model == "ginzburg53").then_some(1.5);
        let b = builtin::<f64>(model, gamma).map_err(CliError::from)?;
        let d = &b.defaults;
        let mut cfg = ExperimentConfig {
            id: format!("{command}-{model}"),
            command,
            seed: DEFAULT_SEED,
            paths: if paper_scale { 1000 } else { 500 },
            workers: None,
            model: ModelRef::Builtin {
                name: model.to_string(),
                gamma,
            },
            generator: None,
            variant: SchemeVariant::TruncatedFinite,
            delta: pow2(-9),
            deltas: Vec::new(),
            reference_delta: pow2(-13),
            horizon: d.horizon,
            x0: d.x0.clone(),
            regime: d.regime,
            step: Some(StepSpec::from_control(&d.finite_step)),
            q: 1.0,
            p: 1.0,
            alpha: 0.02,
            sampling: Sampling::AcrossPaths,
            burn_in: d.horizon / 2.0,
            thinning: 10,
            p_bar: if model == "volatility31" {
                5.0 / 3.0
            } else {
                1.0
            },
            rho: if model == "volatility31" { 0.8 } else { 0.1 },
            out_dir: PathBuf::from("out").join(command.name()),
            svg: true,
        };
        let measure = d.measure_step.map(|sc| StepSpec::from_control(&sc));
        match command {
            Command::Simulate => cfg.delta = pow2(-10),
            Command::Convergence => {
                let (hi, lo, reference) = if paper_scale {
                    (8, 17, 19)
                } else {
                    (6, 11, 14)
                };
                cfg.deltas = (hi..=lo).map(|k| pow2(-k)).collect();
                cfg.reference_delta = pow2(-reference);
                cfg.horizon = if paper_scale { 10.0 } else { d.horizon };
            }
            Command::ConvergenceExact => {
                let (hi, lo) = if paper_scale { (10, 19) } else { (10, 15) };
                cfg.deltas = (hi..=lo).map(|k| pow2(-k)).collect();
                cfg.reference_delta = pow2(-(lo + 2));
            }
            Command::Invariant => {
                if measure.is_some() {
                    cfg.variant = SchemeVariant::TruncatedMeasure;
                    cfg.step = measure;
                }
                cfg.horizon = 100.0;
                cfg.burn_in = 50.0;
                cfg.p = 0.5;
                cfg.reference_delta = pow2(if paper_scale { -18 } else { -13 });
            }
            Command::Stability => {
                cfg.step = measure.or(cfg.step);
                cfg.delta = if paper_scale { 1e-4 } else { 1e-3 };
                cfg.horizon = if paper_scale { 100.0 } else { 50.0 };
                cfg.paths = if paper_scale { 1000 } else { 200 };
            }
            Command::CheckAssumptions => {}
        }
        Ok(cfg)
    }

    /// Reads a configuration; keys absent from `text` keep the defaults of
    /// the command and model it names.
    pub fn parse(
        text: &str,
        command: Option<Command>,
        paper_scale: bool,
    ) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text)
            .map_err(|e| CliError::Config(format!("config syntax: {e}")))?;
        for (section, props) in ini.iter() {
            let allowed: &[&str] = match section {
                None => &[],
                Some("experiment") => &["id", "command", "seed", "paths", "workers", "version"],
                Some("model") => &["name", "file", "gamma", "generator"],
                Some("scheme") => &[
                    "variant",
                    "delta",
                    "deltas",
                    "reference_delta",
                    "horizon",
                    "x0",
                    "regime",
                    "step_scale",
                    "step_exponent",
                    "step_k",
                    "theta",
                    "q",
                    "p",
                    "alpha",
                    "sampling",
                    "burn_in",
                    "thinning",
                    "p_bar",
                    "rho",
                ],
                Some("output") => &["dir", "svg"],
                Some(other) => return Err(CliError::Config(format!("unknown section [{other}]"))),
            };
            for (k, _) in props.iter() {
                if !allowed.contains(&k) {
                    let name = section.unwrap_or("top level");
                    return Err(CliError::Config(format!("unknown key '{k}' in [{name}]")));
                }
            }
        }
        let get = |s: &str, k: &str| ini.section(Some(s)).and_then(|p| p.get(k)).map(str::trim);

        let command = match (command, get("experiment", "command")) {
            (Some(c), _) => c,
            (None, Some(name)) => Command::from_name(name)
                .ok_or_else(|| CliError::Config(format!("unknown command '{name}'")))?,
            (None, None) => return Err(CliError::Config("no command given".into())),
        };
        let file = get("model", "file");
        let name = get("model", "name");
        let mut cfg = match (name, file) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "[model] takes either 'name' or 'file', not both".into(),
                ))
            }
            (Some(n), None) => Self::defaults(command, n, paper_scale)?,
            (None, Some(f)) => {
                let mut c = Self::defaults(command, command.default_model(), paper_scale)?;
                c.model = ModelRef::File(PathBuf::from(f));
                c.x0.clear();
                c.step = None;
                c.id = format!(
                    "{command}-{}",
                    Path::new(f)
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("model")
                );
                c
            }
            (None, None) => Self::defaults(command, command.default_model(), paper_scale)?,
        };
        cfg.command = command;

        if let Some(v) = get("experiment", "id") {
            cfg.id = v.to_string();
        }
        if let Some(v) = get("experiment", "seed") {
            cfg.seed = parse_int(v, "seed")?;
        }
        if let Some(v) = get("experiment", "paths") {
            cfg.paths = parse_int(v, "paths")?;
        }
        if let Some(v) = get("experiment", "workers") {
            cfg.workers = if v == "auto" {
                None
            } else {
                Some(parse_int(v, "workers")?)
            };
        }
        if let Some(v) = get("model", "gamma") {
            match &mut cfg.model {
                ModelRef::Builtin { gamma, .. } => *gamma = Some(parse_number(v, "gamma")?),
                ModelRef::File(_) => {
                    return Err(CliError::Config(
                        "'gamma' only applies to built-in models".into(),
                    ))
                }
            }
        }
        if let Some(v) = get("model", "generator") {
            cfg.generator = Some(parse_list(v, "generator")?);
        }
        if let Some(v) = get("scheme", "variant") {
            cfg.variant = SchemeVariant::from_name(v)
                .ok_or_else(|| CliError::Config(format!("unknown scheme variant '{v}'")))?;
        }
        let num = |k: &str, slot: &mut f64| -> Result<(), CliError> {
            if let Some(v) = get("scheme", k) {
                *slot = parse_number(v, k)?;
            }
            Ok(())
        };
        num("delta", &mut cfg.delta)?;
        num("reference_delta", &mut cfg.reference_delta)?;
        num("horizon", &mut cfg.horizon)?;
        num("q", &mut cfg.q)?;
        num("p", &mut cfg.p)?;
        num("alpha", &mut cfg.alpha)?;
        num("burn_in", &mut cfg.burn_in)?;
        num("p_bar", &mut cfg.p_bar)?;
        num("rho", &mut cfg.rho)?;
        if let Some(v) = get("scheme", "deltas") {
            cfg.deltas = parse_list(v, "deltas")?;
        }
        if let Some(v) = get("scheme", "x0") {
            cfg.x0 = parse_list(v, "x0")?;
        }
        if let Some(v) = get("scheme", "regime") {
            let r: usize = parse_int(v, "regime")?;
            if r == 0 {
                return Err(CliError::Config("regimes are numbered from 1".into()));
            }
            cfg.regime = r - 1;
        }
        if let Some(v) = get("scheme", "thinning") {
            cfg.thinning = parse_int(v, "thinning")?;
        }
        if let Some(v) = get("scheme", "sampling") {
            cfg.sampling = match v {
                "across-paths" => Sampling::AcrossPaths,
                "along-path" => Sampling::AlongPath,
                other => return Err(CliError::Config(format!("unknown sampling mode '{other}'"))),
            };
        }
        let step_keys =
            ["step_scale", "step_exponent", "step_k", "theta"].map(|k| get("scheme", k));
        if step_keys[0] == Some("none") {
            cfg.step = None;
        } else if step_keys.iter().any(Option::is_some) {
            let base = cfg.step;
            let value =
                |i: usize, name: &str, fallback: Option<f64>| -> Result<Option<f64>, CliError> {
                    match step_keys[i] {
                        Some("none") => Ok(None),
                        Some(v) => parse_number(v, name).map(Some),
                        None => Ok(fallback),
                    }
                };
            let scale = value(0, "step_scale", base.map(|s| s.scale))?
                .ok_or_else(|| CliError::Config("step control needs 'step_scale'".into()))?;
            let exponent = value(1, "step_exponent", base.map(|s| s.exponent))?
                .ok_or_else(|| CliError::Config("step control needs 'step_exponent'".into()))?;
            let k = value(2, "step_k", Some(base.map_or(scale, |s| s.k)))?.unwrap_or(scale);
            let theta = value(3, "theta", base.and_then(|s| s.theta))?;
            cfg.step = Some(StepSpec {
                scale,
                exponent,
                k,
                theta,
            });
        }
        if let Some(v) = get("output", "dir") {
            cfg.out_dir = PathBuf::from(v);
        }
        if let Some(v) = get("output", "svg") {
            cfg.svg = match v {
                "true" => true,
                "false" => false,
                other => {
                    return Err(CliError::Config(format!(
                        "svg must be true or false, got '{other}'"
                    )))
                }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; every key is written.
    pub fn serialize(&self) -> String {
        let mut ini = Ini::new();
        ini.with_section(Some("experiment"))
            .set("id", self.id.as_str())
            .set("command", self.command.name())
            .set("seed", self.seed.to_string())
            .set("paths", self.paths.to_string())
            .set(
                "workers",
                self.workers.map_or("auto".to_string(), |w| w.to_string()),
            )
            .set("version", env!("CARGO_PKG_VERSION"));
        {
            let mut model = ini.with_section(Some("model"));
            match &self.model {
                ModelRef::Builtin { name, gamma } => {
                    model.set("name", name.as_str());
                    if let Some(g) = gamma {
                        model.set("gamma", g.to_string());
                    }
                }
                ModelRef::File(path) => {
                    model.set("file", path.display().to_string());
                }
            }
            if let Some(g) = &self.generator {
                model.set("generator", join(g));
            }
        }
        {
            let mut s = ini.with_section(Some("scheme"));
            s.set("variant", self.variant.name())
                .set("delta", self.delta.to_string())
                .set("deltas", join(&self.deltas))
                .set("reference_delta", self.reference_delta.to_string())
                .set("horizon", self.horizon.to_string())
                .set("x0", join(&self.x0))
                .set("regime", (self.regime + 1).to_string());
            match self.step {
                Some(st) => {
                    s.set("step_scale", st.scale.to_string())
                        .set("step_exponent", st.exponent.to_string())
                        .set("step_k", st.k.to_string())
                        .set(
                            "theta",
                            st.theta.map_or("none".to_string(), |t| t.to_string()),
                        );
                }
                None => {
                    s.set("step_scale", "none")
                        .set("step_exponent", "none")
                        .set("step_k", "none")
                        .set("theta", "none");
                }
            }
            s.set("q", self.q.to_string())
                .set("p", self.p.to_string())
                .set("alpha", self.alpha.to_string())
                .set("sampling", self.sampling.name())
                .set("burn_in", self.burn_in.to_string())
                .set("thinning", self.thinning.to_string())
                .set("p_bar", self.p_bar.to_string())
                .set("rho", self.rho.to_string());
        }
        ini.with_section(Some("output"))
            .set("dir", self.out_dir.display().to_string())
            .set("svg", self.svg.to_string());
        let mut out = Vec::new();
        ini.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("config text is UTF-8")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.paths == 0 {
            return bad("paths must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if let ModelRef::File(p) = &self.model {
            if !p.is_file() {
                return bad(format!("model file '{}' does not exist", p.display()));
            }
        }
        if self.x0.is_empty() {
            return bad("x0 is required".into());
        }
        for (name, v) in [
            ("delta", self.delta),
            ("reference_delta", self.reference_delta),
            ("horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.deltas.windows(2).any(|w| !(w[0] > w[1])) {
            return bad("deltas must be sorted in strictly descending order".into());
        }
        if matches!(
            self.command,
            Command::Convergence | Command::ConvergenceExact
        ) {
            if self.deltas.len() < 3 {
                return bad("a convergence run needs at least three deltas".into());
            }
            if self
                .deltas
                .last()
                .is_some_and(|&d| d <= self.reference_delta)
            {
                return bad("the reference step must be finer than every test step".into());
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.q > 0.0) || !(self.p > 0.0) {
            return bad("moment orders must be positive".into());
        }
        if self.thinning == 0 {
            return bad("thinning must be positive".into());
        }
        if self.variant != SchemeVariant::PlainEm
            && self.variant != SchemeVariant::BackwardEmCubic
            && self.step.is_none()
        {
            return bad(format!(
                "{} needs step_scale and step_exponent",
                self.variant
            ));
        }
        Ok(())
    }

    /// Loads the referenced model, applying the generator override.
    pub fn load_model(&self) -> Result<HybridModel<f64>, CliError> {
        let generator = match &self.generator {
            Some(rates) => Some(GeneratorMatrix::from_row_major(rates)?),
            None => None,
        };
        let model = match &self.model {
            ModelRef::Builtin { name, gamma } => {
                let m = builtin::<f64>(name, *gamma)?.model;
                match generator {
                    Some(g) => m.with_generator(g)?,
                    None => m,
                }
            }
            ModelRef::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read '{}': {e}", path.display()))
                })?;
                parse_model_with_generator(&text, generator)?
            }
        };
        Ok(model)
    }

    /// Step control for `variant`: measure variant for the Lipschitz
    /// truncation, stability variant when `theta` accompanies the growth
    /// truncation.
    pub fn step_control(
        &self,
        variant: SchemeVariant,
    ) -> Result<Option<StepControl<f64>>, CliError> {
        let Some(st) = self.step else { return Ok(None) };
        let kind = match (variant, st.theta) {
            (SchemeVariant::TruncatedMeasure, Some(theta)) => StepVariant::Measure { theta },
            (SchemeVariant::TruncatedMeasure, None) => {
                return Err(CliError::Config("truncated-measure needs theta".into()))
            }
            (_, Some(theta)) => StepVariant::Stability { theta },
            (_, None) => StepVariant::Plain,
        };
        Ok(Some(StepControl::new(st.scale, st.exponent, st.k, kind)?))
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

/// A decimal number or a power `b^e`, e.g. `2^-9`.
pub fn parse_number(s: &str, key: &str) -> Result<f64, CliError> {
    let err = || CliError::Config(format!("'{key}': cannot read '{s}' as a number"));
    let s = s.trim();
    if let Some((base, exp)) = s.split_once('^') {
        let base: f64 = base.trim().parse().map_err(|_| err())?;
        let exp: f64 = exp.trim().parse().map_err(|_| err())?;
        return Ok(if exp.fract() == 0.0 && exp.abs() < 1e4 {
            base.powi(exp as i32)
        } else {
            base.powf(exp)
        });
    }
    s.parse().map_err(|_| err())
}

fn parse_list(s: &str, key: &str) -> Result<Vec<f64>, CliError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|v| parse_number(v, key)).collect()
}

fn parse_int<I: std::str::FromStr>(s: &str, key: &str) -> Result<I, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("'{key}': cannot read '{s}' as an integer")))
}

/// Registry text for `list-models`.
pub fn list_models() -> String {
    let mut out = String::from("Built-in models:\n");
    for name in BUILTIN_NAMES {
        let b = builtin::<f64>(name, None).expect("built-in models construct");
        out.push_str(&format!("  {name:<13} {}\n", b.defaults.description));
    }
    out.push_str(
        "\nCustom models: set `file = path/to/model.sde` in the [model] section.\n\
         The file holds `n = ..`, `d = ..`, `m = ..`, `generator = <m*m rates>`,\n\
         then one `[regime i]` section per regime with `drift[k] = <expr in x1..xn>`\n\
         and `diff[k][l] = <expr>`, and optional `[envelope i]` sections with\n\
         `phi = <expr in u>`, `phibar = <expr in u>`, a constant, or `auto`.\n",
    );
    out
}
