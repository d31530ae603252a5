//! Line-oriented `key = value` run configuration with `[section]` headers.
//!
//! ```text
//! [laws]
//! M_i = iso(0.638)
//! M_e = diag(0.29, 0.61)
//! M_e_shell = iso(1.2)
//! [probes]
//! point = (0.35, 0.35)
//! ```
//!
//! Unknown sections and keys are errors. [`render_config`] writes every field,
//! so `parse_config(render_config(c)) == c`.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use crate::mesh::Rect;
use crate::physics::{FluxLaw, IonicKind, IonicMode, IonicModel, PPowerLaw, RegionTensors, Tensor2};
use crate::stepper::{FluxIteration, LinearSolver, Nonlinearity, SolverKind, StepConfig, StimulusSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key `{key}`: {message}")]
    Key { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Disk { radius: f64, h: f64 },
    NestedDisk { inner_radius: f64, outer_radius: f64, h: f64 },
    NestedRect { inner: Rect, outer: Rect, h: f64 },
    /// Mesh file; relative paths resolve against the config file's directory.
    File(String),
}

/// A tensor as written in the file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TensorSpec {
    Iso(f64),
    Diag(f64, f64),
    Full(f64, f64, f64),
}

impl TensorSpec {
    pub fn tensor(&self) -> Result<Tensor2, ConfigError> {
        let t = match *self {
            TensorSpec::Iso(s) => Tensor2::iso(s),
            TensorSpec::Diag(a, b) => Tensor2::diag(a, b),
            TensorSpec::Full(xx, xy, yy) => Tensor2::new(xx, xy, yy),
        };
        t.map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawSpec {
    Tensor(TensorSpec),
    PPower { alpha: f64, p: f64, delta: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawsSpec {
    pub intra: LawSpec,
    pub extra: LawSpec,
    /// Extracellular tensor on the shell; required for nested meshes with a tensor law.
    pub extra_shell: Option<TensorSpec>,
}

impl LawsSpec {
    pub fn build(&self) -> Result<crate::physics::BidomainLaws, ConfigError> {
        let ppower = |alpha, p, delta| {
            PPowerLaw::new(alpha, p, delta).map(FluxLaw::PPower).map_err(|e| ConfigError::Invalid(e.to_string()))
        };
        let intra = match self.intra {
            LawSpec::Tensor(t) => FluxLaw::tissue_only(t.tensor()?),
            LawSpec::PPower { alpha, p, delta } => ppower(alpha, p, delta)?,
        };
        let extra = match self.extra {
            LawSpec::Tensor(t) => FluxLaw::Linear(RegionTensors {
                tissue: Some(t.tensor()?),
                shell: self.extra_shell.map(|s| s.tensor()).transpose()?,
            }),
            LawSpec::PPower { alpha, p, delta } => ppower(alpha, p, delta)?,
        };
        Ok(crate::physics::BidomainLaws { intra, extra })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonicSpec {
    pub kind: IonicKind,
    pub mode: IonicMode,
    pub a: f64,
    pub lambda: f64,
    pub mu: f64,
    pub tau: f64,
}

impl IonicSpec {
    pub fn model(&self) -> Result<IonicModel, ConfigError> {
        IonicModel { a: self.a, lambda: self.lambda, mu: self.mu, tau: self.tau, mode: self.mode, kind: self.kind }
            .validated()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperSpec {
    pub dt: f64,
    pub t_end: f64,
    /// `None` selects `1e-6 · max conductivity`.
    pub epsilon: Option<f64>,
    pub nonlinearity: Nonlinearity,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
    pub solver: LinearSolver,
}

impl StepperSpec {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn step_config(&self, laws: &crate::physics::BidomainLaws) -> StepConfig {
        StepConfig {
            dt: self.dt,
            epsilon: self.epsilon.unwrap_or_else(|| StepConfig::default_epsilon(laws)),
            nonlinearity: self.nonlinearity,
            flux_iteration: FluxIteration::Picard { max_iter: self.picard_max_iter, tol: self.picard_tol },
            linear_solver: self.solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub directory: String,
    /// Probe rows every `every` steps.
    pub every: usize,
    /// Snapshots every `snapshot_every` steps; 0 disables them.
    pub snapshot_every: usize,
    pub seed: u64,
}

/// Initial data: `u` and `w` everywhere on the tissue, with `u` replaced by
/// `patch_u` inside an optional disk patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSpec {
    pub u: f64,
    pub w: f64,
    pub patch: Option<([f64; 2], f64)>,
    pub patch_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub laws: LawsSpec,
    pub ionic: IonicSpec,
    pub stepper: StepperSpec,
    pub output: OutputSpec,
    pub stimulus: Option<StimulusSpec>,
    pub probes: Vec<[f64; 2]>,
    pub initial: InitialSpec,
}

type Entries = BTreeMap<String, (usize, String)>;

struct Section<'a> {
    name: &'a str,
    entries: Entries,
}

impl Section<'_> {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn err(&self, line: usize, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Key { line, key: key.to_string(), message: message.into() }
    }

    fn num(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.trim().parse::<f64>().map(Some).map_err(|_| self.err(line, key, format!("expected a number, got `{v}`"))),
        }
    }

    fn num_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn require(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.num(key)?.ok_or_else(|| ConfigError::Invalid(format!("[{}] requires `{key}`", self.name)))
    }

    fn count_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => v.trim().parse::<usize>().map_err(|_| self.err(line, key, format!("expected a non-negative integer, got `{v}`"))),
        }
    }

    fn word(&mut self, key: &str) -> Option<(usize, String)> {
        self.take(key).map(|(l, v)| (l, v.trim().to_string()))
    }

    fn tuple(&mut self, key: &str, arity: usize) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_tuple(&v, arity).map(Some).map_err(|m| self.err(line, key, m)),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(ConfigError::Key { line, key, message: format!("unknown key in [{}]", self.name) }),
        }
    }
}

fn parse_tuple(v: &str, arity: usize) -> Result<Vec<f64>, String> {
    let v = v.trim();
    let inner = v.strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(|| format!("expected `(…)`, got `{v}`"))?;
    let nums: Result<Vec<f64>, _> = inner.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let nums = nums.map_err(|_| format!("malformed tuple `{v}`"))?;
    if nums.len() != arity {
        return Err(format!("expected {arity} values, got {}", nums.len()));
    }
    Ok(nums)
}

/// `name(args)` → `(name, args)`.
fn parse_call(v: &str) -> Result<(String, Vec<f64>), String> {
    let v = v.trim();
    let open = v.find('(').ok_or_else(|| format!("expected `name(...)`, got `{v}`"))?;
    let name = v[..open].trim().to_string();
    let args = &v[open..];
    let inner = args.strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(|| format!("unbalanced parentheses in `{v}`"))?;
    let nums: Result<Vec<f64>, _> = inner.split(',').map(|s| s.trim().parse::<f64>()).collect();
    Ok((name, nums.map_err(|_| format!("malformed arguments in `{v}`"))?))
}

fn parse_tensor(v: &str) -> Result<TensorSpec, String> {
    let (name, args) = parse_call(v)?;
    match (name.as_str(), args.as_slice()) {
        ("iso", [s]) => Ok(TensorSpec::Iso(*s)),
        ("diag", [a, b]) => Ok(TensorSpec::Diag(*a, *b)),
        ("tensor", [xx, xy, yy]) => Ok(TensorSpec::Full(*xx, *xy, *yy)),
        _ => Err(format!("expected iso(s), diag(a, b) or tensor(xx, xy, yy), got `{v}`")),
    }
}

fn parse_law(v: &str) -> Result<LawSpec, String> {
    if let Ok((name, args)) = parse_call(v) {
        if name == "ppower" {
            return match args.as_slice() {
                [alpha, p] => Ok(LawSpec::PPower { alpha: *alpha, p: *p, delta: None }),
                [alpha, p, delta] => Ok(LawSpec::PPower { alpha: *alpha, p: *p, delta: Some(*delta) }),
                _ => Err(format!("expected ppower(alpha, p[, delta]), got `{v}`")),
            };
        }
    }
    parse_tensor(v).map(LawSpec::Tensor)
}

fn split_sections(text: &str) -> Result<(BTreeMap<String, Entries>, Vec<(usize, String)>), ConfigError> {
    let mut sections: BTreeMap<String, Entries> = BTreeMap::new();
    let mut points = Vec::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !["mesh", "laws", "ionic", "stepper", "output", "stimulus", "probes", "initial"].contains(&name) {
                return Err(ConfigError::Syntax { line, message: format!("unknown section [{name}]") });
            }
            if sections.contains_key(name) {
                return Err(ConfigError::Syntax { line, message: format!("duplicate section [{name}]") });
            }
            sections.insert(name.to_string(), Entries::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") })?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let section = current.as_ref().ok_or_else(|| ConfigError::Syntax { line, message: "entry before the first section header".into() })?;
        if section == "probes" {
            if key != "point" {
                return Err(ConfigError::Key { line, key, message: "unknown key in [probes]".into() });
            }
            points.push((line, value));
            continue;
        }
        let entries = sections.get_mut(section).expect("section registered");
        if entries.insert(key.clone(), (line, value)).is_some() {
            return Err(ConfigError::Key { line, key, message: "duplicate key".into() });
        }
    }
    Ok((sections, points))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let (mut sections, points) = split_sections(text)?;
    let has_stimulus = sections.contains_key("stimulus");
    let mut section = |name: &'static str| Section { name, entries: sections.remove(name).unwrap_or_default() };

    let mut s = section("mesh");
    let (line, generator) = s.word("generator").ok_or_else(|| ConfigError::Invalid("[mesh] requires `generator`".into()))?;
    let mesh = match generator.as_str() {
        "disk" => MeshSpec::Disk { radius: s.num_or("radius", 1.0)?, h: s.require("h")? },
        "nested_disk" => MeshSpec::NestedDisk { inner_radius: s.require("inner_radius")?, outer_radius: s.require("outer_radius")?, h: s.require("h")? },
        "nested_rect" => {
            let rect = |s: &mut Section, key: &str| -> Result<Rect, ConfigError> {
                let v = s.tuple(key, 4)?.ok_or_else(|| ConfigError::Invalid(format!("[mesh] requires `{key}`")))?;
                Ok(Rect::new(v[0], v[1], v[2], v[3]))
            };
            MeshSpec::NestedRect { inner: rect(&mut s, "inner")?, outer: rect(&mut s, "outer")?, h: s.require("h")? }
        }
        "file" => MeshSpec::File(s.word("path").ok_or_else(|| ConfigError::Invalid("[mesh] requires `path`".into()))?.1),
        other => return Err(ConfigError::Key { line, key: "generator".into(), message: format!("unknown generator `{other}`") }),
    };
    s.finish()?;

    let mut s = section("laws");
    let law = |s: &mut Section, key: &str| -> Result<Option<LawSpec>, ConfigError> {
        match s.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_law(&v).map(Some).map_err(|m| s.err(line, key, m)),
        }
    };
    let intra = law(&mut s, "M_i")?.ok_or_else(|| ConfigError::Invalid("[laws] requires `M_i`".into()))?;
    let extra = law(&mut s, "M_e")?.ok_or_else(|| ConfigError::Invalid("[laws] requires `M_e`".into()))?;
    let extra_shell = match s.take("M_e_shell") {
        None => None,
        Some((line, v)) => Some(parse_tensor(&v).map_err(|m| s.err(line, "M_e_shell", m))?),
    };
    s.finish()?;
    let laws = LawsSpec { intra, extra, extra_shell };

    let mut s = section("ionic");
    let kind = match s.word("kind") {
        None => IonicKind::FitzHughNagumo,
        Some((_, k)) if k == "fhn" => IonicKind::FitzHughNagumo,
        Some((_, k)) if k == "bilinear" => IonicKind::Bilinear,
        Some((_, k)) if k == "passive" => IonicKind::Passive,
        Some((line, k)) => return Err(s.err(line, "kind", format!("expected fhn, bilinear or passive, got `{k}`"))),
    };
    let mode = match s.word("mode") {
        None => IonicMode::Fhn,
        Some((_, m)) if m == "fhn" => IonicMode::Fhn,
        Some((_, m)) if m == "gradient" => IonicMode::PureGradient,
        Some((line, m)) => return Err(s.err(line, "mode", format!("expected fhn or gradient, got `{m}`"))),
    };
    let ionic = IonicSpec {
        kind,
        mode,
        a: s.num_or("a", 0.1)?,
        lambda: s.num_or("lambda", 0.0)?,
        mu: s.num_or("mu", 0.5)?,
        tau: s.num_or("tau", 1.0)?,
    };
    s.finish()?;

    let mut s = section("stepper");
    let dt = s.require("dt")?;
    let t_end = s.require("t_end")?;
    let epsilon = s.num("epsilon")?;
    let newton_max_iter = s.count_or("newton_max_iter", 20)?;
    let newton_tol = s.num_or("newton_tol", 1e-10)?;
    let nonlinearity = match s.word("nonlinearity") {
        None => Nonlinearity::Explicit,
        Some((_, n)) if n == "explicit" => Nonlinearity::Explicit,
        Some((_, n)) if n == "newton" => Nonlinearity::Newton { max_iter: newton_max_iter, tol: newton_tol },
        Some((line, n)) => return Err(s.err(line, "nonlinearity", format!("expected explicit or newton, got `{n}`"))),
    };
    let kind = match s.word("solver") {
        None => SolverKind::BiCgStab,
        Some((_, k)) if k == "cg" => SolverKind::Cg,
        Some((_, k)) if k == "bicgstab" => SolverKind::BiCgStab,
        Some((line, k)) => return Err(s.err(line, "solver", format!("expected cg or bicgstab, got `{k}`"))),
    };
    let jacobi = match s.word("jacobi") {
        None => true,
        Some((_, b)) if b == "true" => true,
        Some((_, b)) if b == "false" => false,
        Some((line, b)) => return Err(s.err(line, "jacobi", format!("expected true or false, got `{b}`"))),
    };
    let stepper = StepperSpec {
        dt,
        t_end,
        epsilon,
        nonlinearity,
        picard_max_iter: s.count_or("picard_max_iter", 50)?,
        picard_tol: s.num_or("picard_tol", 1e-10)?,
        solver: LinearSolver { kind, tol: s.num_or("solver_tol", 1e-10)?, max_iter: s.count_or("solver_max_iter", 5000)?, jacobi },
    };
    s.finish()?;

    let mut s = section("output");
    let output = OutputSpec {
        directory: s.word("directory").map_or_else(|| "out".to_string(), |(_, d)| d),
        every: s.count_or("every", 1)?,
        snapshot_every: s.count_or("snapshot_every", 0)?,
        seed: s.count_or("seed", 0)? as u64,
    };
    s.finish()?;

    let mut s = section("stimulus");
    let stimulus = if has_stimulus {
        let center = s.tuple("center", 2)?.unwrap_or(vec![0.0, 0.0]);
        Some(StimulusSpec {
            amplitude: s.require("amplitude")?,
            center: [center[0], center[1]],
            radius: s.require("radius")?,
            start: s.num_or("start", 0.0)?,
            end: s.require("end")?,
        })
    } else {
        None
    };
    s.finish()?;

    let mut s = section("initial");
    let patch = s.tuple("patch", 3)?.map(|v| ([v[0], v[1]], v[2]));
    let initial = InitialSpec { u: s.num_or("u", 0.0)?, w: s.num_or("w", 0.0)?, patch, patch_u: s.num_or("patch_u", 1.0)? };
    s.finish()?;

    let probes = points
        .into_iter()
        .map(|(line, v)| parse_tuple(&v, 2).map(|p| [p[0], p[1]]).map_err(|m| ConfigError::Key { line, key: "point".into(), message: m }))
        .collect::<Result<Vec<_>, _>>()?;

    let config = RunConfig { mesh, laws, ionic, stepper, output, stimulus, probes, initial };
    validate_config(&config)?;
    Ok(config)
}

/// Mesh-independent invariants.
pub fn validate_config(c: &RunConfig) -> Result<(), ConfigError> {
    let invalid = |m: String| Err(ConfigError::Invalid(m));
    let st = &c.stepper;
    if !(st.dt > 0.0 && st.dt.is_finite()) {
        return invalid(format!("dt must be positive, got {}", st.dt));
    }
    if !(st.t_end > 0.0 && st.t_end.is_finite()) {
        return invalid(format!("t_end must be positive, got {}", st.t_end));
    }
    let steps = st.t_end / st.dt;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return invalid(format!("t_end = {} is not a multiple of dt = {}", st.t_end, st.dt));
    }
    if c.output.every == 0 || st.n_steps() % c.output.every != 0 {
        return invalid(format!("output cadence {} does not divide the {} steps", c.output.every, st.n_steps()));
    }
    let laws = c.laws.build()?;
    st.step_config(&laws).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    c.ionic.model()?;
    if let Some(s) = &c.stimulus {
        s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    }
    if let Some((_, r)) = c.initial.patch {
        if !(r > 0.0) {
            return invalid(format!("initial patch radius must be positive, got {r}"));
        }
    }
    match &c.mesh {
        MeshSpec::Disk { radius, h } if !(*radius > 0.0 && *h > 0.0) => invalid("disk radius and h must be positive".into()),
        MeshSpec::NestedDisk { inner_radius, outer_radius, h } if !(*inner_radius > 0.0 && outer_radius > inner_radius && *h > 0.0) => {
            invalid("nested disk needs 0 < inner_radius < outer_radius and h > 0".into())
        }
        _ => Ok(()),
    }
}

fn render_tensor(t: &TensorSpec) -> String {
    match t {
        TensorSpec::Iso(s) => format!("iso({s:?})"),
        TensorSpec::Diag(a, b) => format!("diag({a:?}, {b:?})"),
        TensorSpec::Full(xx, xy, yy) => format!("tensor({xx:?}, {xy:?}, {yy:?})"),
    }
}

fn render_law(l: &LawSpec) -> String {
    match l {
        LawSpec::Tensor(t) => render_tensor(t),
        LawSpec::PPower { alpha, p, delta: None } => format!("ppower({alpha:?}, {p:?})"),
        LawSpec::PPower { alpha, p, delta: Some(d) } => format!("ppower({alpha:?}, {p:?}, {d:?})"),
    }
}

pub fn render_config(c: &RunConfig) -> String {
    let mut out = String::from("[mesh]\n");
    match &c.mesh {
        MeshSpec::Disk { radius, h } => write!(out, "generator = disk\nradius = {radius:?}\nh = {h:?}\n"),
        MeshSpec::NestedDisk { inner_radius, outer_radius, h } => {
            write!(out, "generator = nested_disk\ninner_radius = {inner_radius:?}\nouter_radius = {outer_radius:?}\nh = {h:?}\n")
        }
        MeshSpec::NestedRect { inner, outer, h } => write!(
            out,
            "generator = nested_rect\ninner = ({:?}, {:?}, {:?}, {:?})\nouter = ({:?}, {:?}, {:?}, {:?})\nh = {h:?}\n",
            inner.x0, inner.y0, inner.x1, inner.y1, outer.x0, outer.y0, outer.x1, outer.y1
        ),
        MeshSpec::File(path) => write!(out, "generator = file\npath = {path}\n"),
    }
    .unwrap();

    write!(out, "\n[laws]\nM_i = {}\nM_e = {}\n", render_law(&c.laws.intra), render_law(&c.laws.extra)).unwrap();
    if let Some(t) = &c.laws.extra_shell {
        writeln!(out, "M_e_shell = {}", render_tensor(t)).unwrap();
    }

    let i = &c.ionic;
    let kind = match i.kind {
        IonicKind::FitzHughNagumo => "fhn",
        IonicKind::Bilinear => "bilinear",
        IonicKind::Passive => "passive",
    };
    let mode = match i.mode {
        IonicMode::Fhn => "fhn",
        IonicMode::PureGradient => "gradient",
    };
    write!(out, "\n[ionic]\nkind = {kind}\nmode = {mode}\na = {:?}\nlambda = {:?}\nmu = {:?}\ntau = {:?}\n", i.a, i.lambda, i.mu, i.tau).unwrap();

    let s = &c.stepper;
    write!(out, "\n[stepper]\ndt = {:?}\nt_end = {:?}\n", s.dt, s.t_end).unwrap();
    if let Some(eps) = s.epsilon {
        writeln!(out, "epsilon = {eps:?}").unwrap();
    }
    match s.nonlinearity {
        Nonlinearity::Explicit => out.push_str("nonlinearity = explicit\n"),
        Nonlinearity::Newton { max_iter, tol } => {
            write!(out, "nonlinearity = newton\nnewton_max_iter = {max_iter}\nnewton_tol = {tol:?}\n").unwrap()
        }
    }
    let solver = match s.solver.kind {
        SolverKind::Cg => "cg",
        SolverKind::BiCgStab => "bicgstab",
    };
    write!(
        out,
        "picard_max_iter = {}\npicard_tol = {:?}\nsolver = {solver}\nsolver_tol = {:?}\nsolver_max_iter = {}\njacobi = {}\n",
        s.picard_max_iter, s.picard_tol, s.solver.tol, s.solver.max_iter, s.solver.jacobi
    )
    .unwrap();

    let o = &c.output;
    write!(out, "\n[output]\ndirectory = {}\nevery = {}\nsnapshot_every = {}\nseed = {}\n", o.directory, o.every, o.snapshot_every, o.seed).unwrap();

    if let Some(st) = &c.stimulus {
        write!(
            out,
            "\n[stimulus]\namplitude = {:?}\ncenter = ({:?}, {:?})\nradius = {:?}\nstart = {:?}\nend = {:?}\n",
            st.amplitude, st.center[0], st.center[1], st.radius, st.start, st.end
        )
        .unwrap();
    }

    let init = &c.initial;
    write!(out, "\n[initial]\nu = {:?}\nw = {:?}\n", init.u, init.w).unwrap();
    if let Some((center, r)) = init.patch {
        write!(out, "patch = ({:?}, {:?}, {r:?})\npatch_u = {:?}\n", center[0], center[1], init.patch_u).unwrap();
    }

    if !c.probes.is_empty() {
        out.push_str("\n[probes]\n");
        for p in &c.probes {
            writeln!(out, "point = ({:?}, {:?})", p[0], p[1]).unwrap();
        }
    }
    out
}
