//! Scenario configuration: a flat `key = value` text format with
//! `[section]` headers and `#` comments. Unknown sections and keys are
//! rejected; `sensor` and `probe` keys may repeat.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Sdof,
    Bar1d,
    Plate2d,
    Custom,
}

impl ScenarioKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "sdof" => Some(ScenarioKind::Sdof),
            "bar1d" => Some(ScenarioKind::Bar1d),
            "plate2d" => Some(ScenarioKind::Plate2d),
            "custom" => Some(ScenarioKind::Custom),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Sdof => "sdof",
            ScenarioKind::Bar1d => "bar1d",
            ScenarioKind::Plate2d => "plate2d",
            ScenarioKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshConfig {
    Interval { length: f64, elements: usize, clamp_left: bool },
    Plate {
        width: f64,
        height: f64,
        hole_radius: f64,
        hole_x: f64,
        hole_y: f64,
        sectors: usize,
        rings: usize,
        clamp_left: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaterialModel {
    /// Lognormal modulus field driven by a Matérn log-field.
    Lognormal,
    /// Gaussian scalar coefficient (single-element meshes).
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialConfig {
    pub density: f64,
    pub base: f64,
    pub model: MaterialModel,
    pub sigma: f64,
    pub length_scale: Option<f64>,
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingLawKind {
    None,
    Sine,
    TwoSine,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcePattern {
    /// Point load on the free node with the largest x (1D only).
    Tip,
    /// Traction integrated along the x = width edge (2D only).
    RightEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    /// White noise on the tip DOF.
    Point,
    /// Matérn-correlated field over the domain.
    Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingConfig {
    pub law: ForcingLawKind,
    pub amplitude: f64,
    pub frequency: Option<f64>,
    pub omega_low: Option<f64>,
    pub omega_high: Option<f64>,
    pub start: Option<f64>,
    pub rise: Option<f64>,
    pub fall: Option<f64>,
    pub pattern: ForcePattern,
    pub noise: NoiseKind,
    pub sigma_f: f64,
    pub noise_length_scale: Option<f64>,
    pub noise_nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DampingConfig {
    None,
    Rayleigh { zeta: f64, omega1: f64, omega2: f64 },
    Viscous { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub total: f64,
    /// Observation sampling factor: one observation every `observe_every`
    /// steps.
    pub observe_every: usize,
    pub assimilate_from: f64,
    pub assimilate_until: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorsConfig {
    pub sigma_e: f64,
    pub coords: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub material: u64,
    pub forcing: u64,
    pub noise: u64,
    pub mc: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub sigma_f_min: f64,
    pub sigma_f_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    pub forcing: ForcingConfig,
    pub damping: DampingConfig,
    pub time: TimeConfig,
    pub sensors: SensorsConfig,
    pub probes: Vec<[f64; 2]>,
    pub seeds: Seeds,
    pub calibration: CalibrationConfig,
    /// True coefficient override for gaussian-material twin experiments.
    pub truth_coefficient: Option<f64>,
    pub mc_samples: usize,
}

struct Section {
    line: usize,
    entries: Vec<(usize, String, String)>,
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse { line: line_no, message: "unterminated section header".into() })?
                .trim()
                .to_string();
            if sections.contains_key(&name) {
                return Err(Error::Parse { line: line_no, message: format!("duplicate section [{name}]") });
            }
            sections.insert(name.clone(), Section { line: line_no, entries: Vec::new() });
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse { line: line_no, message: format!("expected 'key = value', found '{line}'") });
        };
        let section = current
            .as_ref()
            .ok_or_else(|| Error::Parse { line: line_no, message: "key outside any [section]".into() })?;
        sections
            .get_mut(section)
            .unwrap()
            .entries
            .push((line_no, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(sections)
}

/// Typed view over one section's entries that tracks which keys were read.
struct SectionReader<'a> {
    name: &'a str,
    entries: &'a [(usize, String, String)],
    used: Vec<bool>,
}

impl<'a> SectionReader<'a> {
    fn new(name: &'a str, section: &'a Section) -> Self {
        SectionReader { name, entries: &section.entries, used: vec![false; section.entries.len()] }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        for (i, (_, k, v)) in self.entries.iter().enumerate() {
            if k == key && !self.used[i] {
                self.used[i] = true;
                return Some(v);
            }
        }
        None
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{}] {key}: expected a number, got '{v}'", self.name))),
        }
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| Error::Config(format!("[{}] missing required key '{key}'", self.name)))
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::Config(format!("[{}] missing required key '{key}'", self.name)))?;
        v.parse::<usize>()
            .map_err(|_| Error::Config(format!("[{}] {key}: expected an integer, got '{v}'", self.name)))
    }

    fn u64(&mut self, key: &str) -> Result<u64> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::Config(format!("[{}] missing required key '{key}'", self.name)))?;
        v.parse::<u64>()
            .map_err(|_| Error::Config(format!("[{}] {key}: expected an integer, got '{v}'", self.name)))
    }

    fn bool(&mut self, key: &str) -> Result<bool> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::Config(format!("[{}] missing required key '{key}'", self.name)))?;
        match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(Error::Config(format!("[{}] {key}: expected true/false, got '{v}'", self.name))),
        }
    }

    fn string(&mut self, key: &str) -> Result<&'a str> {
        self.raw(key)
            .ok_or_else(|| Error::Config(format!("[{}] missing required key '{key}'", self.name)))
    }

    /// All values of a repeatable key, each a coordinate pair (1D: one
    /// number, y = 0).
    fn coords(&mut self, key: &str) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::new();
        for (i, (line, k, v)) in self.entries.iter().enumerate() {
            if k == key {
                self.used[i] = true;
                let parts: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| Error::Parse {
                            line: *line,
                            message: format!("bad coordinate '{t}' for '{key}'"),
                        })
                    })
                    .collect::<Result<_>>()?;
                match parts.len() {
                    1 => out.push([parts[0], 0.0]),
                    2 => out.push([parts[0], parts[1]]),
                    n => {
                        return Err(Error::Parse {
                            line: *line,
                            message: format!("'{key}' takes 1 or 2 coordinates, found {n}"),
                        })
                    }
                }
            }
        }
        Ok(out)
    }

    fn finish(self) -> Result<()> {
        for (i, (line, k, _)) in self.entries.iter().enumerate() {
            if !self.used[i] {
                return Err(Error::Parse { line: *line, message: format!("unknown key '{k}' in [{}]", self.name) });
            }
        }
        Ok(())
    }
}

/// Parses a configuration from text. All structural and type errors name
/// the offending line or key; physical validation (stability, sensor
/// placement) happens when the scenario is built.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let sections = split_sections(text)?;
    let known = [
        "scenario", "mesh", "material", "forcing", "damping", "time", "sensors", "probes", "seeds",
        "calibration", "truth", "mc",
    ];
    for (name, section) in &sections {
        if !known.contains(&name.as_str()) {
            return Err(Error::Parse { line: section.line, message: format!("unknown section [{name}]") });
        }
    }
    let get = |name: &str| -> Result<&Section> {
        sections
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing required section [{name}]")))
    };

    let kind = {
        let mut r = SectionReader::new("scenario", get("scenario")?);
        let raw = r.string("kind")?;
        let kind = ScenarioKind::parse(raw)
            .ok_or_else(|| Error::Config(format!("[scenario] unknown kind '{raw}'")))?;
        r.finish()?;
        kind
    };

    let mesh = {
        let section = get("mesh")?;
        let is_interval = section.entries.iter().any(|(_, k, _)| k == "length");
        let mut r = SectionReader::new("mesh", section);
        let m = if is_interval {
            MeshConfig::Interval {
                length: r.f64("length")?,
                elements: r.usize("elements")?,
                clamp_left: r.bool("clamp_left")?,
            }
        } else {
            MeshConfig::Plate {
                width: r.f64("width")?,
                height: r.f64("height")?,
                hole_radius: r.f64("hole_radius")?,
                hole_x: r.f64("hole_x")?,
                hole_y: r.f64("hole_y")?,
                sectors: r.usize("sectors")?,
                rings: r.usize("rings")?,
                clamp_left: r.bool("clamp_left")?,
            }
        };
        r.finish()?;
        m
    };

    let material = {
        let mut r = SectionReader::new("material", get("material")?);
        let model = match r.string("model")? {
            "lognormal" => MaterialModel::Lognormal,
            "gaussian" => MaterialModel::Gaussian,
            other => return Err(Error::Config(format!("[material] unknown model '{other}'"))),
        };
        let m = MaterialConfig {
            density: r.f64("density")?,
            base: r.f64("base")?,
            model,
            sigma: r.f64("sigma")?,
            length_scale: r.f64_opt("length_scale")?,
            nu: r.f64_opt("nu")?,
        };
        r.finish()?;
        if m.density <= 0.0 || m.base <= 0.0 {
            return Err(Error::Config("[material] density and base must be positive".into()));
        }
        if m.sigma < 0.0 {
            return Err(Error::Config("[material] sigma must be non-negative".into()));
        }
        if m.model == MaterialModel::Lognormal && (m.length_scale.is_none() || m.nu.is_none()) {
            return Err(Error::Config(
                "[material] lognormal model needs length_scale and nu".into(),
            ));
        }
        m
    };

    let forcing = {
        let mut r = SectionReader::new("forcing", get("forcing")?);
        let law = match r.string("law")? {
            "none" => ForcingLawKind::None,
            "sine" => ForcingLawKind::Sine,
            "two_sine" => ForcingLawKind::TwoSine,
            "triangle" => ForcingLawKind::Triangle,
            other => return Err(Error::Config(format!("[forcing] unknown law '{other}'"))),
        };
        let pattern = match r.string("pattern")? {
            "tip" => ForcePattern::Tip,
            "right_edge" => ForcePattern::RightEdge,
            other => return Err(Error::Config(format!("[forcing] unknown pattern '{other}'"))),
        };
        let noise = match r.string("noise")? {
            "none" => NoiseKind::None,
            "point" => NoiseKind::Point,
            "field" => NoiseKind::Field,
            other => return Err(Error::Config(format!("[forcing] unknown noise '{other}'"))),
        };
        let f = ForcingConfig {
            law,
            amplitude: r.f64("amplitude")?,
            frequency: r.f64_opt("frequency")?,
            omega_low: r.f64_opt("omega_low")?,
            omega_high: r.f64_opt("omega_high")?,
            start: r.f64_opt("start")?,
            rise: r.f64_opt("rise")?,
            fall: r.f64_opt("fall")?,
            pattern,
            noise,
            sigma_f: r.f64("sigma_f")?,
            noise_length_scale: r.f64_opt("noise_length_scale")?,
            noise_nu: r.f64_opt("noise_nu")?,
        };
        r.finish()?;
        if f.sigma_f < 0.0 {
            return Err(Error::Config("[forcing] sigma_f must be non-negative".into()));
        }
        match f.law {
            ForcingLawKind::Sine if f.frequency.is_none() => {
                return Err(Error::Config("[forcing] sine law needs 'frequency'".into()))
            }
            ForcingLawKind::TwoSine if f.omega_low.is_none() || f.omega_high.is_none() => {
                return Err(Error::Config("[forcing] two_sine law needs omega_low and omega_high".into()))
            }
            ForcingLawKind::Triangle if f.rise.is_none() || f.fall.is_none() => {
                return Err(Error::Config("[forcing] triangle law needs rise and fall".into()))
            }
            _ => {}
        }
        if f.noise == NoiseKind::Field && (f.noise_length_scale.is_none() || f.noise_nu.is_none()) {
            return Err(Error::Config(
                "[forcing] field noise needs noise_length_scale and noise_nu".into(),
            ));
        }
        f
    };

    let damping = {
        let mut r = SectionReader::new("damping", get("damping")?);
        let d = match r.string("model")? {
            "none" => DampingConfig::None,
            "rayleigh" => DampingConfig::Rayleigh {
                zeta: r.f64("zeta")?,
                omega1: r.f64("omega1")?,
                omega2: r.f64("omega2")?,
            },
            "viscous" => DampingConfig::Viscous { gamma: r.f64("gamma")? },
            other => return Err(Error::Config(format!("[damping] unknown model '{other}'"))),
        };
        r.finish()?;
        d
    };

    let time = {
        let mut r = SectionReader::new("time", get("time")?);
        let t = TimeConfig {
            dt: r.f64("dt")?,
            total: r.f64("total")?,
            observe_every: r.usize("observe_every")?,
            assimilate_from: r.f64("assimilate_from")?,
            assimilate_until: r.f64("assimilate_until")?,
        };
        r.finish()?;
        if !(t.dt > 0.0) || !(t.total > 0.0) {
            return Err(Error::Config("[time] dt and total must be positive".into()));
        }
        if t.observe_every == 0 {
            return Err(Error::Config("[time] observe_every must be at least 1".into()));
        }
        let steps = t.total / t.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "[time] total/dt = {steps} is not an integer number of steps"
            )));
        }
        t
    };

    let sensors = {
        let mut r = SectionReader::new("sensors", get("sensors")?);
        let s = SensorsConfig { sigma_e: r.f64("sigma_e")?, coords: r.coords("sensor")? };
        r.finish()?;
        if !(s.sigma_e > 0.0) {
            return Err(Error::Config("[sensors] sigma_e must be positive".into()));
        }
        if s.coords.is_empty() {
            return Err(Error::Config("[sensors] at least one 'sensor' line is required".into()));
        }
        s
    };

    let probes = {
        let mut r = SectionReader::new("probes", get("probes")?);
        let p = r.coords("probe")?;
        r.finish()?;
        if p.is_empty() {
            return Err(Error::Config("[probes] at least one 'probe' line is required".into()));
        }
        p
    };

    let seeds = {
        let mut r = SectionReader::new("seeds", get("seeds")?);
        let s = Seeds {
            material: r.u64("material")?,
            forcing: r.u64("forcing")?,
            noise: r.u64("noise")?,
            mc: r.u64("mc")?,
        };
        r.finish()?;
        s
    };

    let calibration = {
        let mut r = SectionReader::new("calibration", get("calibration")?);
        let c = CalibrationConfig {
            sigma_f_min: r.f64("sigma_f_min")?,
            sigma_f_max: r.f64("sigma_f_max")?,
            points: r.usize("points")?,
        };
        r.finish()?;
        if !(c.sigma_f_min > 0.0) || c.sigma_f_max <= c.sigma_f_min || c.points < 2 {
            return Err(Error::Config(
                "[calibration] needs 0 < sigma_f_min < sigma_f_max and points >= 2".into(),
            ));
        }
        c
    };

    let truth_coefficient = match sections.get("truth") {
        None => None,
        Some(section) => {
            let mut r = SectionReader::new("truth", section);
            let v = r.f64_opt("coefficient")?;
            r.finish()?;
            v
        }
    };

    let mc_samples = match sections.get("mc") {
        None => 20_000,
        Some(section) => {
            let mut r = SectionReader::new("mc", section);
            let v = r.usize("samples")?;
            r.finish()?;
            v
        }
    };

    Ok(ScenarioConfig {
        kind,
        mesh,
        material,
        forcing,
        damping,
        time,
        sensors,
        probes,
        seeds,
        calibration,
        truth_coefficient,
        mc_samples,
    })
}

fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

/// Canonical text form; `parse_config(serialize(c)) == c`.
pub fn serialize_config(c: &ScenarioConfig) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "[scenario]");
    let _ = writeln!(w, "kind = {}", c.kind.name());
    let _ = writeln!(w, "\n[mesh]");
    match &c.mesh {
        MeshConfig::Interval { length, elements, clamp_left } => {
            let _ = writeln!(w, "length = {}", fmt_f(*length));
            let _ = writeln!(w, "elements = {elements}");
            let _ = writeln!(w, "clamp_left = {clamp_left}");
        }
        MeshConfig::Plate { width, height, hole_radius, hole_x, hole_y, sectors, rings, clamp_left } => {
            let _ = writeln!(w, "width = {}", fmt_f(*width));
            let _ = writeln!(w, "height = {}", fmt_f(*height));
            let _ = writeln!(w, "hole_radius = {}", fmt_f(*hole_radius));
            let _ = writeln!(w, "hole_x = {}", fmt_f(*hole_x));
            let _ = writeln!(w, "hole_y = {}", fmt_f(*hole_y));
            let _ = writeln!(w, "sectors = {sectors}");
            let _ = writeln!(w, "rings = {rings}");
            let _ = writeln!(w, "clamp_left = {clamp_left}");
        }
    }
    let _ = writeln!(w, "\n[material]");
    let _ = writeln!(w, "model = {}", match c.material.model {
        MaterialModel::Lognormal => "lognormal",
        MaterialModel::Gaussian => "gaussian",
    });
    let _ = writeln!(w, "density = {}", fmt_f(c.material.density));
    let _ = writeln!(w, "base = {}", fmt_f(c.material.base));
    let _ = writeln!(w, "sigma = {}", fmt_f(c.material.sigma));
    if let Some(l) = c.material.length_scale {
        let _ = writeln!(w, "length_scale = {}", fmt_f(l));
    }
    if let Some(nu) = c.material.nu {
        let _ = writeln!(w, "nu = {}", fmt_f(nu));
    }
    let _ = writeln!(w, "\n[forcing]");
    let _ = writeln!(w, "law = {}", match c.forcing.law {
        ForcingLawKind::None => "none",
        ForcingLawKind::Sine => "sine",
        ForcingLawKind::TwoSine => "two_sine",
        ForcingLawKind::Triangle => "triangle",
    });
    let _ = writeln!(w, "amplitude = {}", fmt_f(c.forcing.amplitude));
    if let Some(v) = c.forcing.frequency {
        let _ = writeln!(w, "frequency = {}", fmt_f(v));
    }
    if let Some(v) = c.forcing.omega_low {
        let _ = writeln!(w, "omega_low = {}", fmt_f(v));
    }
    if let Some(v) = c.forcing.omega_high {
        let _ = writeln!(w, "omega_high = {}", fmt_f(v));
    }
    if let Some(v) = c.forcing.start {
        let _ = writeln!(w, "start = {}", fmt_f(v));
    }
    if let Some(v) = c.forcing.rise {
        let _ = writeln!(w, "rise = {}", fmt_f(v));
    }
    if let Some(v) = c.forcing.fall {
        let _ = writeln!(w, "fall = {}", fmt_f(v));
    }
    let _ = writeln!(w, "pattern = {}", match c.forcing.pattern {
        ForcePattern::Tip => "tip",
        ForcePattern::RightEdge => "right_edge",
    });
    let _ = writeln!(w, "noise = {}", match c.forcing.noise {
        NoiseKind::None => "none",
        NoiseKind::Point => "point",
        NoiseKind::Field => "field",
    });
    let _ = writeln!(w, "sigma_f = {}", fmt_f(c.forcing.sigma_f));
    if let Some(v) = c.forcing.noise_length_scale {
        let _ = writeln!(w, "noise_length_scale = {}", fmt_f(v));
    }
    if let Some(v) = c.forcing.noise_nu {
        let _ = writeln!(w, "noise_nu = {}", fmt_f(v));
    }
    let _ = writeln!(w, "\n[damping]");
    match &c.damping {
        DampingConfig::None => {
            let _ = writeln!(w, "model = none");
        }
        DampingConfig::Rayleigh { zeta, omega1, omega2 } => {
            let _ = writeln!(w, "model = rayleigh");
            let _ = writeln!(w, "zeta = {}", fmt_f(*zeta));
            let _ = writeln!(w, "omega1 = {}", fmt_f(*omega1));
            let _ = writeln!(w, "omega2 = {}", fmt_f(*omega2));
        }
        DampingConfig::Viscous { gamma } => {
            let _ = writeln!(w, "model = viscous");
            let _ = writeln!(w, "gamma = {}", fmt_f(*gamma));
        }
    }
    let _ = writeln!(w, "\n[time]");
    let _ = writeln!(w, "dt = {}", fmt_f(c.time.dt));
    let _ = writeln!(w, "total = {}", fmt_f(c.time.total));
    let _ = writeln!(w, "observe_every = {}", c.time.observe_every);
    let _ = writeln!(w, "assimilate_from = {}", fmt_f(c.time.assimilate_from));
    let _ = writeln!(w, "assimilate_until = {}", fmt_f(c.time.assimilate_until));
    let _ = writeln!(w, "\n[sensors]");
    let _ = writeln!(w, "sigma_e = {}", fmt_f(c.sensors.sigma_e));
    for s in &c.sensors.coords {
        let _ = writeln!(w, "sensor = {} {}", fmt_f(s[0]), fmt_f(s[1]));
    }
    let _ = writeln!(w, "\n[probes]");
    for p in &c.probes {
        let _ = writeln!(w, "probe = {} {}", fmt_f(p[0]), fmt_f(p[1]));
    }
    let _ = writeln!(w, "\n[seeds]");
    let _ = writeln!(w, "material = {}", c.seeds.material);
    let _ = writeln!(w, "forcing = {}", c.seeds.forcing);
    let _ = writeln!(w, "noise = {}", c.seeds.noise);
    let _ = writeln!(w, "mc = {}", c.seeds.mc);
    let _ = writeln!(w, "\n[calibration]");
    let _ = writeln!(w, "sigma_f_min = {}", fmt_f(c.calibration.sigma_f_min));
    let _ = writeln!(w, "sigma_f_max = {}", fmt_f(c.calibration.sigma_f_max));
    let _ = writeln!(w, "points = {}", c.calibration.points);
    if let Some(t) = c.truth_coefficient {
        let _ = writeln!(w, "\n[truth]");
        let _ = writeln!(w, "coefficient = {}", fmt_f(t));
    }
    let _ = writeln!(w, "\n[mc]");
    let _ = writeln!(w, "samples = {}", c.mc_samples);
    out
}

/// Short hex digest of the canonical serialisation, echoed into every CSV.
pub fn config_digest(c: &ScenarioConfig) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(serialize_config(c).as_bytes());
    let hash = hasher.finalize();
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sdof_text() -> String {
        r#"
# single oscillator
[scenario]
kind = sdof
[mesh]
length = 1.0
elements = 1
clamp_left = true
[material]
model = gaussian
density = 2.0
base = 100.0
sigma = 5.0
[forcing]
law = two_sine
amplitude = 1.0
omega_low = 3.1
omega_high = 6.2
pattern = tip
noise = point
sigma_f = 0.05
[damping]
model = viscous
gamma = 1.0
[time]
dt = 2.0106192982974676e-3
total = 6.283185307179586
observe_every = 90
assimilate_from = 0.0
assimilate_until = 10.0
[sensors]
sigma_e = 0.005
sensor = 1.0
[probes]
probe = 1.0
[seeds]
material = 1
forcing = 2
noise = 3
mc = 4
[calibration]
sigma_f_min = 0.005
sigma_f_max = 0.5
points = 20
[truth]
coefficient = 94.48
"#
        .to_string()
    }

    #[test]
    fn parses_the_sdof_scenario() {
        let c = parse_config(&sdof_text()).unwrap();
        assert_eq!(c.kind, ScenarioKind::Sdof);
        assert_eq!(c.material.model, MaterialModel::Gaussian);
        assert_eq!(c.material.base, 100.0);
        assert_eq!(c.truth_coefficient, Some(94.48));
        assert_eq!(c.time.observe_every, 90);
        assert_eq!(c.sensors.coords, vec![[1.0, 0.0]]);
        assert_eq!(c.mc_samples, 20_000);
    }

    #[test]
    fn round_trip_is_stable() {
        let c = parse_config(&sdof_text()).unwrap();
        let text = serialize_config(&c);
        let c2 = parse_config(&text).unwrap();
        assert_eq!(c, c2);
        assert_eq!(serialize_config(&c2), text);
        assert_eq!(config_digest(&c), config_digest(&c2));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = sdof_text().replace("gamma = 1.0", "gamma = 1.0\nbogus = 3");
        match parse_config(&text) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("bogus"), "{message}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_section_is_rejected() {
        let text = format!("{}\n[extras]\nx = 1\n", sdof_text());
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn missing_required_key_names_it() {
        let text = sdof_text().replace("sigma_e = 0.005\n", "");
        match parse_config(&text) {
            Err(Error::Config(message)) => assert!(message.contains("sigma_e"), "{message}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn non_integer_step_count_is_rejected() {
        let text = sdof_text().replace("total = 6.283185307179586", "total = 6.0");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn law_parameter_consistency_is_enforced() {
        let text = sdof_text().replace("omega_low = 3.1\n", "");
        assert!(parse_config(&text).is_err());
    }
}
