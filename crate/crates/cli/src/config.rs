//! Experiment configuration files.
//!
//! Line-oriented `key = value` pairs grouped in sections:
//!
//! ```text
//! [domain]
//! shape = box            # box | ball
//! [lattice]
//! n_list = 8, 16, 32
//! [field]
//! type = helix
//! q = 2pi, 0, 0
//! [studies]
//! run = construction, norm
//! ```
//!
//! `#` starts a comment. Lists and vectors are comma separated (optionally
//! wrapped in `[...]`); reals accept a trailing `pi` factor (`2pi`, `0.5*pi`).
//! Unknown sections, keys or study names are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use spinlab::demag::Method;
use spinlab::geometry::DomainSpec;
use spinlab::lab::{DemagSettings, FieldSpec, SweepConfig, ZeemanSpec};
use spinlab::spin_field::{DefectAmplitude, DefectSpec};
use spinlab::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Construction,
    Norm,
    Defects,
    Total,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Construction => "construction",
            Study::Norm => "norm",
            Study::Defects => "defects",
            Study::Total => "total",
        }
    }

    fn parse(s: &str) -> Option<Study> {
        match s {
            "construction" => Some(Study::Construction),
            "norm" => Some(Study::Norm),
            "defects" => Some(Study::Defects),
            "total" => Some(Study::Total),
            _ => None,
        }
    }
}

/// Every accepted key with its default (`None`: required or unset).
const SCHEMA: &[(&str, &str, Option<&str>)] = &[
    ("domain", "shape", None),
    ("domain", "min", Some("-0.5, -0.5, -0.5")),
    ("domain", "max", Some("0.5, 0.5, 0.5")),
    ("domain", "center", Some("0, 0, 0")),
    ("domain", "radius", Some("0.5")),
    ("lattice", "a", Some("1")),
    ("lattice", "n_list", None),
    ("lattice", "k", Some("1")),
    ("field", "type", None),
    ("field", "q", Some("2pi, 0, 0")),
    ("field", "theta", Some("0.25pi")),
    ("field", "direction", Some("0, 0, 1")),
    ("energies", "A", Some("1")),
    ("energies", "zeeman", Some("0, 0, 0")),
    ("energies", "mu0", Some("1")),
    ("energies", "demag", Some("spectral")),
    ("energies", "demag_cells", Some("32")),
    ("energies", "demag_oversample", Some("2")),
    ("energies", "cell_budget", Some("32768")),
    ("energies", "quadrature_resolution", Some("64")),
    ("energies", "fd_step", None),
    ("defects", "beta", Some("1")),
    ("defects", "amplitude", Some("inverse_log")),
    ("defects", "c", Some("1")),
    ("defects", "seed", Some("0")),
    ("studies", "run", Some("")),
    ("studies", "eval_resolution", Some("25")),
    ("studies", "c_hyp", None),
    ("studies", "construction_max_rel_error", None),
    ("studies", "liminf_delta", Some("0.1")),
    ("studies", "defect_bound_slack", Some("0.1")),
    ("output", "dir", Some("out")),
];

const REQUIRED: &[(&str, &str)] = &[
    ("domain", "shape"),
    ("lattice", "n_list"),
    ("field", "type"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sweep: SweepConfig,
    pub studies: Vec<Study>,
    pub out_dir: PathBuf,
    /// Resolved `section.key = value` lines, defaults included, in schema
    /// order.
    pub resolved: Vec<String>,
}

impl RunConfig {
    /// Apply a `--seed` override to the defect generator.
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(d) = self.sweep.defects.as_mut() {
            d.seed = seed;
        }
        for line in self.resolved.iter_mut() {
            if line.starts_with("defects.seed =") {
                *line = format!("defects.seed = {seed} (command line)");
            }
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        for line in self.resolved.iter_mut() {
            if line.starts_with("output.dir =") {
                *line = format!("output.dir = {} (command line)", dir.display());
            }
        }
        self.out_dir = dir;
    }
}

struct Entry {
    value: String,
    line: usize,
}

fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(prefix) = s.strip_suffix("pi") {
        let prefix = prefix.trim().trim_end_matches('*').trim();
        let factor = match prefix {
            "" | "+" => 1.0,
            "-" => -1.0,
            p => p.parse::<f64>().ok()?,
        };
        return Some(factor * std::f64::consts::PI);
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn split_list(s: &str) -> Vec<String> {
    let s = s.trim();
    let s = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .unwrap_or(s);
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(|t| t.trim().to_string()).collect()
}

struct Values {
    entries: BTreeMap<(String, String), Entry>,
}

impl Values {
    fn raw(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        if let Some(e) = self.entries.get(&(section.to_string(), key.to_string())) {
            return Some((&e.value, e.line));
        }
        SCHEMA
            .iter()
            .find(|(s, k, _)| *s == section && *k == key)
            .and_then(|(_, _, d)| d.map(|v| (v, 0)))
    }

    fn err(line: usize, section: &str, key: &str, what: &str) -> ConfigError {
        if line == 0 {
            ConfigError::global(format!("{section}.{key}: {what}"))
        } else {
            ConfigError::at(line, format!("{section}.{key}: {what}"))
        }
    }

    fn required(&self, section: &str, key: &str) -> Result<(&str, usize), ConfigError> {
        self.raw(section, key).ok_or_else(|| {
            ConfigError::global(format!("missing required key `{key}` in [{section}]"))
        })
    }

    fn real(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let (v, line) = self.required(section, key)?;
        parse_real(v)
            .ok_or_else(|| Self::err(line, section, key, &format!("`{v}` is not a number")))
    }

    fn opt_real(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(_) => self.real(section, key).map(Some),
        }
    }

    fn uint(&self, section: &str, key: &str) -> Result<u64, ConfigError> {
        let (v, line) = self.required(section, key)?;
        v.trim().parse::<u64>().map_err(|_| {
            Self::err(
                line,
                section,
                key,
                &format!("`{v}` is not a non-negative integer"),
            )
        })
    }

    fn usize(&self, section: &str, key: &str) -> Result<usize, ConfigError> {
        self.uint(section, key).map(|v| v as usize)
    }

    fn vec3(&self, section: &str, key: &str) -> Result<Vec3, ConfigError> {
        let (v, line) = self.required(section, key)?;
        let parts = split_list(v);
        let nums: Option<Vec<f64>> = parts.iter().map(|p| parse_real(p)).collect();
        match nums {
            Some(n) if n.len() == 3 => Ok(Vec3::new(n[0], n[1], n[2])),
            _ => Err(Self::err(
                line,
                section,
                key,
                &format!("`{v}` is not a 3-vector"),
            )),
        }
    }

    fn word(&self, section: &str, key: &str) -> Result<(String, usize), ConfigError> {
        let (v, line) = self.required(section, key)?;
        Ok((v.trim().to_ascii_lowercase(), line))
    }
}

/// Parse and validate configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !SCHEMA.iter().any(|(s, _, _)| *s == name) {
                return Err(ConfigError::at(
                    line_no,
                    format!("unknown section [{name}]"),
                ));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::at(
                line_no,
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = key.trim();
        let Some(sec) = section.as_deref() else {
            return Err(ConfigError::at(
                line_no,
                format!("key `{key}` appears before any [section]"),
            ));
        };
        if !SCHEMA.iter().any(|(s, k, _)| *s == sec && *k == key) {
            return Err(ConfigError::at(
                line_no,
                format!("unknown key `{key}` in [{sec}]"),
            ));
        }
        let slot = (sec.to_string(), key.to_string());
        if let Some(prev) = entries.get(&slot) {
            return Err(ConfigError::at(
                line_no,
                format!("duplicate key `{key}` (first set on line {})", prev.line),
            ));
        }
        entries.insert(
            slot,
            Entry {
                value: value.trim().to_string(),
                line: line_no,
            },
        );
    }
    for (s, k) in REQUIRED {
        if !entries.contains_key(&(s.to_string(), k.to_string())) {
            return Err(ConfigError::global(format!(
                "missing required key `{k}` in [{s}]"
            )));
        }
    }
    let values = Values { entries };
    build(&values)
}

pub fn parse_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::global(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

fn build(v: &Values) -> Result<RunConfig, ConfigError> {
    let lib_err = |e: spinlab::Error| ConfigError::global(e.to_string());

    let (shape, shape_line) = v.word("domain", "shape")?;
    let domain = match shape.as_str() {
        "box" => DomainSpec::new_box(v.vec3("domain", "min")?, v.vec3("domain", "max")?)
            .map_err(lib_err)?,
        "ball" => DomainSpec::new_ball(v.vec3("domain", "center")?, v.real("domain", "radius")?)
            .map_err(lib_err)?,
        other => {
            return Err(ConfigError::at(
                shape_line,
                format!("unknown domain shape `{other}` (box | ball)"),
            ))
        }
    };

    let (n_raw, n_line) = v.required("lattice", "n_list")?;
    let n_list: Vec<usize> = split_list(n_raw)
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            ConfigError::at(
                n_line,
                format!("n_list: `{n_raw}` is not a list of integers"),
            )
        })?;

    let (ftype, ftype_line) = v.word("field", "type")?;
    let field = match ftype.as_str() {
        "helix" => FieldSpec::Helix {
            q: v.vec3("field", "q")?,
        },
        "conical" => FieldSpec::Conical {
            q: v.vec3("field", "q")?,
            theta: v.real("field", "theta")?,
        },
        "constant" => {
            let d = v.vec3("field", "direction")?;
            if (d.norm() - 1.0).abs() > 1e-9 {
                return Err(ConfigError::global("field.direction must be a unit vector"));
            }
            FieldSpec::Constant { direction: d }
        }
        other => {
            return Err(ConfigError::at(
                ftype_line,
                format!("unknown field type `{other}` (helix | conical | constant)"),
            ))
        }
    };

    let mut sweep = SweepConfig::new(domain, n_list, field);
    sweep.a = v.real("lattice", "a")?;
    sweep.k = v.usize("lattice", "k")?;
    sweep.coupling = v.real("energies", "A")?;
    let h = v.vec3("energies", "zeeman")?;
    sweep.zeeman = if h == Vec3::zeros() {
        ZeemanSpec::Zero
    } else {
        ZeemanSpec::Uniform(h)
    };

    let (demag, demag_line) = v.word("energies", "demag")?;
    let method = match demag.as_str() {
        "spectral" => Some(Method::Spectral),
        "direct" => Some(Method::Direct),
        "off" => None,
        other => {
            return Err(ConfigError::at(
                demag_line,
                format!("unknown demag method `{other}` (spectral | direct | off)"),
            ))
        }
    };
    sweep.demag = method.map(|method| DemagSettings {
        method,
        mu0: 1.0,
        cells: 32,
        oversample: 2,
        cell_budget: 32_768,
    });
    if let Some(d) = sweep.demag.as_mut() {
        d.mu0 = v.real("energies", "mu0")?;
        d.cells = v.usize("energies", "demag_cells")?;
        d.oversample = v.usize("energies", "demag_oversample")?;
        d.cell_budget = v.usize("energies", "cell_budget")?;
    }
    sweep.quadrature.resolution = v.usize("energies", "quadrature_resolution")?;
    sweep.quadrature.fd_step = v.opt_real("energies", "fd_step")?;

    let (amp, amp_line) = v.word("defects", "amplitude")?;
    let c = v.real("defects", "c")?;
    let amplitude = match amp.as_str() {
        "inverse_log" => DefectAmplitude::InverseLog { scale: c },
        "constant" => DefectAmplitude::Constant(c),
        other => {
            return Err(ConfigError::at(
                amp_line,
                format!("unknown defect amplitude `{other}` (inverse_log | constant)"),
            ))
        }
    };
    sweep.defects = Some(DefectSpec {
        beta: v.real("defects", "beta")?,
        amplitude,
        seed: v.uint("defects", "seed")?,
    });

    sweep.eval_resolution = v.usize("studies", "eval_resolution")?;
    sweep.c_hyp = v.opt_real("studies", "c_hyp")?;
    sweep.tolerances.construction_max_rel_error =
        v.opt_real("studies", "construction_max_rel_error")?;
    sweep.tolerances.liminf_delta = v.real("studies", "liminf_delta")?;
    sweep.tolerances.defect_bound_slack = v.real("studies", "defect_bound_slack")?;

    let (run_raw, run_line) = v.required("studies", "run")?;
    let mut studies = Vec::new();
    for name in split_list(run_raw) {
        let s = Study::parse(&name.to_ascii_lowercase()).ok_or_else(|| {
            ConfigError::at(
                run_line,
                format!("unknown study `{name}` (construction | norm | defects | total)"),
            )
        })?;
        if !studies.contains(&s) {
            studies.push(s);
        }
    }
    if studies.contains(&Study::Total) && sweep.demag.is_none() {
        return Err(ConfigError::at(
            demag_line.max(run_line),
            "the total study needs demag = spectral or direct",
        ));
    }

    sweep.validate().map_err(|e| match e {
        spinlab::Error::InvalidParameter(msg) if msg.contains("n_list") => {
            ConfigError::at(n_line, msg)
        }
        other => lib_err(other),
    })?;

    let out_dir = PathBuf::from(v.required("output", "dir")?.0);
    let resolved = SCHEMA
        .iter()
        .map(
            |(s, k, _)| match v.entries.get(&(s.to_string(), k.to_string())) {
                Some(e) => format!("{s}.{k} = {}", e.value),
                None => match v.raw(s, k) {
                    Some((d, _)) => format!("{s}.{k} = {d} (default)"),
                    None => format!("{s}.{k} = (unset)"),
                },
            },
        )
        .collect();
    Ok(RunConfig {
        sweep,
        studies,
        out_dir,
        resolved,
    })
}
