//! The flat `key = value` run configuration.
//!
//! Lines are `dotted.key = value`; `#` starts a comment. Lists are comma
//! separated. Every key is optional except `time.T`, `time.N`,
//! `params.alpha` and `params.mu`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{build_mesh, read_field, FaceAveraging, Field, Mesh};
use crate::model::{validate_tau, ContactModulation, Diffusivity, ModelParams, Nonlinearity, TauCheck};
use crate::stepper::{InitialData, Simulation, TimeGrid, Truncation, Unknown};

/// How one initial field is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    /// `floor + amplitude * exp(-|x - center|² / width²)`
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64, floor: f64 },
    /// `inside` on the closed box `[lo, hi]`, `outside` elsewhere.
    Rectangle { lo: Vec<f64>, hi: Vec<f64>, inside: f64, outside: f64 },
    /// A snapshot file; relative paths resolve against the config's directory.
    Raster(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub params: ModelParams,
    pub contact: ContactModulation,
    pub diffusivity: Diffusivity,
    /// Initial specs in the order n, s, i, h.
    pub init: [FieldSpec; 4],
    pub d0: f64,
    pub mollify: bool,
    pub tol: f64,
    pub averaging: FaceAveraging,
    pub truncation: Truncation,
    pub output_dir: PathBuf,
    pub every: usize,
    /// Directory that relative raster paths resolve against. Not emitted.
    pub base_dir: PathBuf,
}

const REQUIRED: [&str; 4] = ["time.T", "time.N", "params.alpha", "params.mu"];

const PRESET_KEYS: [&str; 11] = [
    "preset", "value", "center", "width", "amplitude", "floor", "lo", "hi", "inside", "outside", "path",
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

/// Raw `key -> value` pairs in file order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct Entries(BTreeMap<String, Entry>);

impl Entries {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::ConfigSyntax { line, message: format!("malformed key `{key}`") });
            }
            if value.is_empty() {
                return Err(Error::ConfigSyntax { line, message: format!("missing value for `{key}`") });
            }
            if let Some(prev) = map.get(key) {
                let prev: &Entry = prev;
                return Err(Error::ConfigSyntax {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
            map.insert(key.to_string(), Entry { line, value: value.to_string() });
        }
        Ok(Entries(map))
    }

    /// Overrides or adds a key, as a sweep point does.
    pub fn set(&mut self, key: &str, value: &str) {
        self.0.insert(key.to_string(), Entry { line: 0, value: value.to_string() });
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key).map(|e| e.value)
    }
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigValue { key: key.to_string(), message: message.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| bad(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(bad(key, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, format!("`{v}` is not a nonnegative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, found `{v}`"))),
    }
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(|s| item(key, s.trim())).collect()
}

/// Splits `name(a, b)` into `("name", ["a", "b"])`; a bare word has no args.
fn parse_call<'a>(key: &str, v: &'a str) -> Result<(&'a str, Vec<&'a str>)> {
    match v.split_once('(') {
        None => Ok((v, Vec::new())),
        Some((name, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| bad(key, format!("unbalanced parentheses in `{v}`")))?;
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(str::trim).collect()
            };
            Ok((name.trim(), args))
        }
    }
}

fn parse_contact(key: &str, v: &str) -> Result<ContactModulation> {
    match parse_call(key, v)? {
        ("constant", a) if a.len() == 1 => Ok(ContactModulation::Constant(parse_f64(key, a[0])?)),
        ("saturating", a) if a.len() == 1 => Ok(ContactModulation::Saturating(parse_f64(key, a[0])?)),
        _ => Err(bad(key, format!("expected constant(c) or saturating(a0), found `{v}`"))),
    }
}

fn parse_diffusivity(key: &str, v: &str) -> Result<Diffusivity> {
    match parse_call(key, v)? {
        ("constant", a) if a.len() == 1 => Ok(Diffusivity::Constant(parse_f64(key, a[0])?)),
        ("linear", a) if a.is_empty() => Ok(Diffusivity::Linear),
        ("affine", a) if a.len() == 2 => Ok(Diffusivity::Affine {
            slope: parse_f64(key, a[0])?,
            offset: parse_f64(key, a[1])?,
        }),
        _ => Err(bad(key, format!("expected constant(c), linear or affine(a, b), found `{v}`"))),
    }
}

fn parse_field_spec(e: &mut Entries, name: &str, default: f64, dim: usize) -> Result<FieldSpec> {
    let key = |k: &str| format!("init.{name}.{k}");
    let preset = e.take(&key("preset")).unwrap_or_else(|| "constant".to_string());
    let mut need = |k: &str| -> Result<String> {
        e.take(&key(k)).ok_or_else(|| bad(&key(k), format!("required by preset {preset}")))
    };
    let point = |k: &str, v: String| -> Result<Vec<f64>> {
        let p = parse_list(&key(k), &v, parse_f64)?;
        if p.len() != dim {
            return Err(bad(&key(k), format!("expected {dim} coordinates, got {}", p.len())));
        }
        Ok(p)
    };
    let spec = match preset.as_str() {
        "constant" => {
            let v = e.take(&key("value"));
            FieldSpec::Constant(v.map_or(Ok(default), |v| parse_f64(&key("value"), &v))?)
        }
        "gaussian" => {
            let center = point("center", need("center")?)?;
            let width = parse_f64(&key("width"), &need("width")?)?;
            let amplitude = parse_f64(&key("amplitude"), &need("amplitude")?)?;
            let floor = parse_f64(&key("floor"), &need("floor")?)?;
            if width <= 0.0 {
                return Err(bad(&key("width"), "must be positive"));
            }
            FieldSpec::Gaussian { center, width, amplitude, floor }
        }
        "rectangle" => {
            let lo = point("lo", need("lo")?)?;
            let hi = point("hi", need("hi")?)?;
            let inside = parse_f64(&key("inside"), &need("inside")?)?;
            let outside = parse_f64(&key("outside"), &need("outside")?)?;
            FieldSpec::Rectangle { lo, hi, inside, outside }
        }
        "raster" => FieldSpec::Raster(PathBuf::from(need("path")?)),
        other => {
            return Err(bad(
                &key("preset"),
                format!("unknown preset `{other}` (constant, gaussian, rectangle, raster)"),
            ))
        }
    };
    for k in PRESET_KEYS {
        if e.0.contains_key(&key(k)) {
            return Err(bad(&key(k), format!("does not apply to preset {preset}")));
        }
    }
    Ok(spec)
}

impl FieldSpec {
    pub fn realize(&self, mesh: &Mesh, base_dir: &Path) -> Result<Field> {
        let dim = mesh.dim();
        Ok(match self {
            FieldSpec::Constant(c) => Field::constant(mesh, *c),
            FieldSpec::Gaussian { center, width, amplitude, floor } => Field::from_fn(mesh, |p| {
                let r2: f64 = (0..dim).map(|a| (p[a] - center[a]).powi(2)).sum();
                floor + amplitude * (-r2 / (width * width)).exp()
            }),
            FieldSpec::Rectangle { lo, hi, inside, outside } => Field::from_fn(mesh, |p| {
                if (0..dim).all(|a| lo[a] <= p[a] && p[a] <= hi[a]) {
                    *inside
                } else {
                    *outside
                }
            }),
            FieldSpec::Raster(path) => {
                let full = base_dir.join(path);
                let file = std::fs::File::open(&full).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", full.display())))
                })?;
                let snap = read_field(std::io::BufReader::new(file))?;
                if snap.dim != dim || snap.cells != mesh.cells3() {
                    return Err(Error::invalid(format!(
                        "raster {} has shape {:?}, mesh needs {:?}",
                        full.display(),
                        &snap.cells[..snap.dim.min(3)],
                        mesh.cells_per_axis()
                    )));
                }
                Field::new(mesh, snap.values)?
            }
        })
    }

    fn emit(&self, name: &str, out: &mut String) {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let p = format!("init.{name}");
        match self {
            FieldSpec::Constant(c) => {
                let _ = writeln!(out, "{p}.preset = constant\n{p}.value = {c}");
            }
            FieldSpec::Gaussian { center, width, amplitude, floor } => {
                let _ = writeln!(
                    out,
                    "{p}.preset = gaussian\n{p}.center = {}\n{p}.width = {width}\n{p}.amplitude = {amplitude}\n{p}.floor = {floor}",
                    list(center)
                );
            }
            FieldSpec::Rectangle { lo, hi, inside, outside } => {
                let _ = writeln!(
                    out,
                    "{p}.preset = rectangle\n{p}.lo = {}\n{p}.hi = {}\n{p}.inside = {inside}\n{p}.outside = {outside}",
                    list(lo),
                    list(hi)
                );
            }
            FieldSpec::Raster(path) => {
                let _ = writeln!(out, "{p}.preset = raster\n{p}.path = {}", path.display());
            }
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_in(text, Path::new("."))
}

/// Parses with raster paths resolved against `base_dir`.
pub fn parse_config_in(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let entries = Entries::parse(text)?;
    RunConfig::from_entries(entries, base_dir)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    parse_config_in(&text, base)
}

impl RunConfig {
    pub fn from_entries(mut e: Entries, base_dir: &Path) -> Result<Self> {
        for key in REQUIRED {
            if !e.0.contains_key(key) {
                return Err(bad(key, "is required"));
            }
        }
        let mut get = |key: &str| e.take(key);

        let dim = get("mesh.dim").map_or(Ok(1), |v| parse_usize("mesh.dim", &v))?;
        if !(1..=3).contains(&dim) {
            return Err(bad("mesh.dim", format!("must be 1, 2 or 3, got {dim}")));
        }
        let cells = match get("mesh.cells") {
            Some(v) => parse_list("mesh.cells", &v, parse_usize)?,
            None => vec![32; dim],
        };
        let lengths = match get("mesh.lengths") {
            Some(v) => parse_list("mesh.lengths", &v, parse_f64)?,
            None => vec![1.0; dim],
        };
        if cells.len() != dim || cells.contains(&0) {
            return Err(bad("mesh.cells", format!("need {dim} positive counts")));
        }
        if lengths.len() != dim || lengths.iter().any(|&l| l <= 0.0) {
            return Err(bad("mesh.lengths", format!("need {dim} positive lengths")));
        }

        let horizon = parse_f64("time.T", &get("time.T").unwrap_or_default())?;
        if horizon <= 0.0 {
            return Err(bad("time.T", "must be positive"));
        }
        let steps = parse_usize("time.N", &get("time.N").unwrap_or_default())?;
        if steps == 0 {
            return Err(bad("time.N", "must be at least 1"));
        }

        let alpha = parse_f64("params.alpha", &get("params.alpha").unwrap_or_default())?;
        let mu = parse_f64("params.mu", &get("params.mu").unwrap_or_default())?;
        let mut params = ModelParams::normalized(alpha, mu);
        if let Some(v) = get("params.normalized") {
            params.normalized = parse_bool("params.normalized", &v)?;
        }
        for (name, slot) in [
            ("params.beta_i", &mut params.beta_i),
            ("params.beta_e", &mut params.beta_e),
            ("params.sigma", &mut params.sigma),
            ("params.phi_e", &mut params.phi_e),
            ("params.phi_r", &mut params.phi_r),
            ("params.phi_d", &mut params.phi_d),
        ] {
            if let Some(v) = get(name) {
                if params.normalized {
                    return Err(bad(name, "only allowed with params.normalized = false"));
                }
                *slot = parse_f64(name, &v)?;
            }
        }
        if params.alpha <= 0.0 {
            return Err(bad("params.alpha", "must be positive"));
        }
        if params.mu <= 0.0 {
            return Err(bad("params.mu", "must be positive"));
        }
        params.validate().map_err(|err| bad("params", err.to_string()))?;

        let contact = get("nl.a").map_or(Ok(ContactModulation::Constant(1.0)), |v| parse_contact("nl.a", &v))?;
        let diffusivity = get("nl.kappa").map_or(Ok(Diffusivity::Constant(1.0)), |v| parse_diffusivity("nl.kappa", &v))?;
        Nonlinearity::new(contact, diffusivity).map_err(|err| bad("nl", err.to_string()))?;

        let d0 = get("init.d0").map_or(Ok(0.0), |v| parse_f64("init.d0", &v))?;
        if d0 < 0.0 {
            return Err(bad("init.d0", "must be nonnegative"));
        }

        let mollify = get("solver.mollify").map_or(Ok(false), |v| parse_bool("solver.mollify", &v))?;
        let tol = get("solver.tol").map_or(Ok(1e-10), |v| parse_f64("solver.tol", &v))?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(bad("solver.tol", "must lie in (0, 1)"));
        }
        let averaging = match get("solver.averaging").as_deref() {
            None | Some("harmonic") => FaceAveraging::Harmonic,
            Some("arithmetic") => FaceAveraging::Arithmetic,
            Some(v) => return Err(bad("solver.averaging", format!("expected harmonic or arithmetic, found `{v}`"))),
        };
        let truncation = match get("solver.truncation").as_deref() {
            None | Some("ledger") => Truncation::Ledger,
            Some("off") => Truncation::Off,
            Some(v) => return Err(bad("solver.truncation", format!("expected ledger or off, found `{v}`"))),
        };
        let output_dir = PathBuf::from(get("output.dir").unwrap_or_else(|| "out".to_string()));
        let every = get("output.every").map_or(Ok(1), |v| parse_usize("output.every", &v))?;
        if every == 0 {
            return Err(bad("output.every", "must be at least 1"));
        }

        let init = [
            parse_field_spec(&mut e, "n", 1.0, dim)?,
            parse_field_spec(&mut e, "s", 1.0, dim)?,
            parse_field_spec(&mut e, "i", 0.0, dim)?,
            parse_field_spec(&mut e, "h", 1.0, dim)?,
        ];

        if let Some((key, entry)) = e.0.iter().next() {
            return Err(bad(key, format!("unknown key (line {})", entry.line)));
        }

        let cfg = RunConfig {
            dim,
            cells,
            lengths,
            horizon,
            steps,
            params,
            contact,
            diffusivity,
            init,
            d0,
            mollify,
            tol,
            averaging,
            truncation,
            output_dir,
            every,
            base_dir: base_dir.to_path_buf(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Runs the data and step-size checks on the realized initial fields.
    fn check(&self) -> Result<()> {
        if let TauCheck::Rejected(why) = validate_tau(&self.params, self.horizon / self.steps as f64) {
            return Err(bad("time.N", format!("step size rejected: {why}")));
        }
        let mesh = self.mesh()?;
        let data = self.initial_data(&mesh)?;
        if !(data.n.min() > 0.0) {
            return Err(bad("init.n", format!("inf n0 must be positive, got {}", data.n.min())));
        }
        if data.s.min() < 0.0 {
            return Err(bad("init.s", format!("s0 must be nonnegative, min is {}", data.s.min())));
        }
        if data.i.min() < 0.0 {
            return Err(bad("init.i", format!("i0 must be nonnegative, min is {}", data.i.min())));
        }
        if data.h.sub(&data.s).min() < 0.0 {
            return Err(bad("init.h", "h0 >= s0 must hold in every cell"));
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        build_mesh(self.dim, &self.cells, &self.lengths).map_err(|err| bad("mesh", err.to_string()))
    }

    pub fn initial_data(&self, mesh: &Mesh) -> Result<InitialData> {
        let mut fields = Vec::with_capacity(4);
        for (spec, u) in self.init.iter().zip(Unknown::ALL) {
            let key = format!("init.{}", u.name());
            fields.push(spec.realize(mesh, &self.base_dir).map_err(|err| match err {
                Error::Io(_) => err,
                other => bad(&key, other.to_string()),
            })?);
        }
        let h = fields.pop().unwrap();
        let i = fields.pop().unwrap();
        let s = fields.pop().unwrap();
        let n = fields.pop().unwrap();
        Ok(InitialData { n, s, i, h })
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity { contact: self.contact, diffusivity: self.diffusivity }
    }

    /// The library-level description of this run.
    pub fn simulation(&self) -> Result<Simulation> {
        let mesh = self.mesh()?;
        let initial = self.initial_data(&mesh)?;
        Ok(Simulation {
            time: TimeGrid::new(self.horizon, self.steps, &self.params)?,
            mesh,
            params: self.params,
            nonlinearity: Nonlinearity::new(self.contact, self.diffusivity)?,
            initial,
            mollify: self.mollify,
            tol: self.tol,
            averaging: self.averaging,
            truncation: self.truncation,
            initial_deceased: self.d0,
        })
    }

    /// Rewrites relative raster paths as absolute ones.
    pub fn with_absolute_rasters(&self) -> RunConfig {
        let mut cfg = self.clone();
        let base = std::path::absolute(&self.base_dir).unwrap_or_else(|_| self.base_dir.clone());
        for spec in &mut cfg.init {
            if let FieldSpec::Raster(p) = spec {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg
    }

    /// Serializes to text that parses back to an equal config.
    pub fn emit(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let cells = self.cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "mesh.dim = {}\nmesh.cells = {cells}\nmesh.lengths = {}", self.dim, list(&self.lengths));
        let _ = writeln!(out, "time.T = {}\ntime.N = {}", self.horizon, self.steps);
        let p = &self.params;
        let _ = writeln!(out, "params.alpha = {}\nparams.mu = {}\nparams.normalized = {}", p.alpha, p.mu, p.normalized);
        if !p.normalized {
            let _ = writeln!(
                out,
                "params.beta_i = {}\nparams.beta_e = {}\nparams.sigma = {}\nparams.phi_e = {}\nparams.phi_r = {}\nparams.phi_d = {}",
                p.beta_i, p.beta_e, p.sigma, p.phi_e, p.phi_r, p.phi_d
            );
        }
        let a = match self.contact {
            ContactModulation::Constant(c) => format!("constant({c})"),
            ContactModulation::Saturating(a0) => format!("saturating({a0})"),
        };
        let kappa = match self.diffusivity {
            Diffusivity::Constant(c) => format!("constant({c})"),
            Diffusivity::Linear => "linear".to_string(),
            Diffusivity::Affine { slope, offset } => format!("affine({slope}, {offset})"),
        };
        let _ = writeln!(out, "nl.a = {a}\nnl.kappa = {kappa}");
        for (spec, u) in self.init.iter().zip(Unknown::ALL) {
            spec.emit(u.name(), &mut out);
        }
        let _ = writeln!(out, "init.d0 = {}", self.d0);
        let averaging = match self.averaging {
            FaceAveraging::Harmonic => "harmonic",
            FaceAveraging::Arithmetic => "arithmetic",
        };
        let truncation = match self.truncation {
            Truncation::Ledger => "ledger",
            Truncation::Off => "off",
        };
        let _ = writeln!(
            out,
            "solver.mollify = {}\nsolver.tol = {}\nsolver.averaging = {averaging}\nsolver.truncation = {truncation}",
            self.mollify, self.tol
        );
        let _ = writeln!(out, "output.dir = {}\noutput.every = {}", self.output_dir.display(), self.every);
        out
    }
}
