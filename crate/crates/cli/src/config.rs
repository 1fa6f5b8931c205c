//! Flat `block.key = value` experiment configuration.
//!
//! A config is a list of typed keys such as `bath.gamma = 0.05`. Blank lines and
//! lines starting with `#` are ignored, except inside kzopen output files, whose
//! `# config.` header lines are read back so any output can be re-run as a config.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kzopen_core::bath::BathParams;
use kzopen_core::dynamics::{DynamicsOptions, GridSpec, Integrator};
use kzopen_core::model::{ApproachSide, Kitaev};
use kzopen_core::protocol::RampSpec;
use sha2::{Digest, Sha256};

/// Marker on the first line of every file the tool writes.
pub const OUTPUT_MAGIC: &str = "# kzopen";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorChoice {
    FixedVelocity,
    FitIntercept,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub name: String,
    pub model: Kitaev,
    pub side: ApproachSide,
    pub bath: BathParams,
    pub dynamics: DynamicsOptions,
    /// Ramp shape; `t_f` is `ramp_t_f` when given and 1 otherwise.
    pub ramp: RampSpec,
    pub ramp_t_f: Option<f64>,
    /// `θ` and `R` when the start point was given in polar form.
    pub polar: Option<(f64, f64)>,
    pub samples: usize,
    pub toggles: bool,
    pub sweep: Vec<f64>,
    pub window: Option<(f64, f64)>,
    pub t0: f64,
    pub prefactor: PrefactorChoice,
    pub pairs: Vec<(f64, f64)>,
    pub tolerance: f64,
    pub coherent: bool,
    pub out_dir: Option<PathBuf>,
    pub gnuplot: bool,
}

const KEYS: &[&str] = &[
    "model.kind",
    "model.J",
    "model.Delta_p",
    "model.side",
    "bath.gamma",
    "bath.delta",
    "bath.s",
    "dynamics.kappa",
    "dynamics.use_local",
    "dynamics.rel_tol",
    "dynamics.abs_tol",
    "dynamics.integrator",
    "dynamics.panels",
    "dynamics.nodes_per_panel",
    "dynamics.eps_max",
    "dynamics.tau_min",
    "dynamics.max_steps",
    "dynamics.convergence_target",
    "ramp.alpha",
    "ramp.beta",
    "ramp.dmu_i",
    "ramp.T_i",
    "ramp.theta",
    "ramp.radius",
    "ramp.t_f",
    "ramp.samples",
    "ramp.toggles",
    "sweep.t_f",
    "sweep.log_min",
    "sweep.log_max",
    "sweep.points",
    "analysis.window",
    "analysis.t0",
    "analysis.prefactor",
    "verify.pairs",
    "verify.tolerance",
    "verify.coherent",
    "output.name",
    "output.dir",
    "output.formats",
];

/// Raw key/value pairs with the line each came from.
struct Entries {
    source: String,
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(source: &str, text: &str) -> Result<Self> {
        let from_output = text.starts_with(OUTPUT_MAGIC);
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = if from_output {
                match raw.strip_prefix("# config.") {
                    Some(rest) => rest,
                    None => continue,
                }
            } else {
                raw.trim()
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{source}:{}: expected `block.key = value`", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if key.contains("seed") {
                bail!("{source}:{}: `{key}`: kzopen is deterministic and takes no seeds", i + 1);
            }
            if !KEYS.contains(&key) {
                bail!("{source}:{}: unknown key `{key}`", i + 1);
            }
            if map.insert(key.to_string(), (i + 1, value.to_string())).is_some() {
                bail!("{source}:{}: `{key}` given twice", i + 1);
            }
        }
        Ok(Self {
            source: source.to_string(),
            map,
        })
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn at(&self, key: &str, line: usize) -> String {
        format!("{}:{line}: `{key}`", self.source)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("{}: cannot parse `{v}`: {e}", self.at(key, line))),
        }
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => parse_number(v)
                .map(Some)
                .with_context(|| self.at(key, line)),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|t| parse_number(t.trim()))
                .collect::<Result<Vec<_>>>()
                .map(Some)
                .with_context(|| self.at(key, line)),
        }
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get::<bool>(key)
    }

    /// Wraps a validation failure with the position of `key`.
    fn check<T>(&self, key: &str, r: kzopen_core::Result<T>) -> Result<T> {
        let here = match self.raw(key) {
            Some((line, _)) => self.at(key, line),
            None => format!("{}: `{key}`", self.source),
        };
        r.map_err(|e| anyhow!("{here}: {e}"))
    }
}

/// Parses a decimal number, also accepting `pi` and `<number>*pi` or `pi/<number>`.
fn parse_number(s: &str) -> Result<f64> {
    let lower = s.to_ascii_lowercase();
    let value = if lower == "pi" {
        PI
    } else if let Some(rest) = lower.strip_prefix("pi/") {
        PI / rest.trim().parse::<f64>()?
    } else if let Some(front) = lower.strip_suffix("*pi") {
        front.trim().parse::<f64>()? * PI
    } else if let Some((n, d)) = lower.split_once('/') {
        n.trim().parse::<f64>()? / d.trim().parse::<f64>()?
    } else {
        lower.parse::<f64>()?
    };
    if !value.is_finite() {
        bail!("`{s}` is not a finite number");
    }
    Ok(value)
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment")
            .split('.')
            .next()
            .unwrap_or("experiment")
            .to_string();
        Self::parse(&path.display().to_string(), &text, &stem)
    }

    pub fn parse(source: &str, text: &str, default_name: &str) -> Result<Self> {
        let e = Entries::parse(source, text)?;

        if let Some(kind) = e.get::<String>("model.kind")? {
            if kind != "kitaev" {
                bail!("{source}: `model.kind`: unsupported model `{kind}` (only `kitaev`)");
            }
        }
        let hopping = e.num("model.J")?.unwrap_or(1.0);
        let pairing = e.num("model.Delta_p")?.unwrap_or(1.0);
        let model = e.check("model.J", Kitaev::new(hopping, pairing))?;
        let side = match e.raw("model.side") {
            None => ApproachSide::Below,
            Some((line, v)) => v
                .parse::<ApproachSide>()
                .map_err(|m| anyhow!("{}: {m}", e.at("model.side", line)))?,
        };

        let bath = BathParams {
            gamma: e.num("bath.gamma")?.unwrap_or(0.0),
            delta: e.num("bath.delta")?.unwrap_or(1.0),
            s: e.num("bath.s")?.unwrap_or(1.0),
        };
        e.check("bath.gamma", bath.validate())?;

        let defaults = DynamicsOptions::default();
        let use_local = e.flag("dynamics.use_local")?.unwrap_or(false);
        let base_grid = if use_local { defaults.local_grid } else { defaults.exact_grid };
        let grid = GridSpec {
            panels: e.get("dynamics.panels")?.unwrap_or(base_grid.panels),
            nodes_per_panel: e.get("dynamics.nodes_per_panel")?.unwrap_or(base_grid.nodes_per_panel),
        };
        let integrator = match e.raw("dynamics.integrator") {
            None => defaults.integrator,
            Some((line, v)) => v
                .parse::<Integrator>()
                .map_err(|m| anyhow!("{}: {m}", e.at("dynamics.integrator", line)))?,
        };
        let dynamics = DynamicsOptions {
            kappa: e.num("dynamics.kappa")?.unwrap_or(defaults.kappa),
            use_local,
            rel_tol: e.num("dynamics.rel_tol")?.unwrap_or(defaults.rel_tol),
            abs_tol: e.num("dynamics.abs_tol")?.unwrap_or(defaults.abs_tol),
            integrator,
            exact_grid: if use_local { defaults.exact_grid } else { grid },
            local_grid: if use_local { grid } else { defaults.local_grid },
            eps_max: e.num("dynamics.eps_max")?,
            tau_min: e.num("dynamics.tau_min")?.unwrap_or(defaults.tau_min),
            max_steps: e.get("dynamics.max_steps")?.unwrap_or(defaults.max_steps),
            convergence_target: e.num("dynamics.convergence_target")?,
        };
        e.check("dynamics.rel_tol", dynamics.validate())?;

        let alpha = e.num("ramp.alpha")?.ok_or_else(|| anyhow!("{source}: `ramp.alpha` is required"))?;
        let beta = e.num("ramp.beta")?.ok_or_else(|| anyhow!("{source}: `ramp.beta` is required"))?;
        let ramp_t_f = e.num("ramp.t_f")?;
        let polar = match (e.num("ramp.theta")?, e.num("ramp.radius")?) {
            (None, None) => None,
            (Some(theta), Some(radius)) => Some((theta, radius)),
            _ => bail!("{source}: `ramp.theta` and `ramp.radius` must be given together"),
        };
        let explicit = (e.num("ramp.dmu_i")?, e.num("ramp.T_i")?);
        let ramp = match (polar, explicit) {
            (Some(_), (Some(_), _) | (_, Some(_))) => {
                bail!("{source}: give either `ramp.theta`/`ramp.radius` or `ramp.dmu_i`/`ramp.T_i`, not both")
            }
            (Some((theta, radius)), _) => {
                let r = e.check("ramp.theta", RampSpec::from_angle(alpha, beta, radius, theta, 1.0))?;
                RampSpec {
                    dmu_i: if r.dmu_i == 0.0 { 0.0 } else { side.signed(r.dmu_i) },
                    ..r
                }
            }
            (None, (dmu_i, temp_i)) => {
                let dmu_i = dmu_i.unwrap_or(0.0);
                let temp_i = temp_i.unwrap_or(0.0);
                if dmu_i != 0.0 && side.signed(dmu_i) != dmu_i {
                    bail!(
                        "{}: sign of {dmu_i} contradicts `model.side = {}`",
                        e.at("ramp.dmu_i", e.raw("ramp.dmu_i").map_or(0, |r| r.0)),
                        side_name(side)
                    );
                }
                e.check("ramp.dmu_i", RampSpec::new(alpha, beta, dmu_i, temp_i, 1.0))?
            }
        };
        let ramp = match ramp_t_f {
            Some(t) => e.check("ramp.t_f", RampSpec::new(ramp.alpha, ramp.beta, ramp.dmu_i, ramp.temp_i, t))?,
            None => ramp,
        };

        let sweep = match (e.list("sweep.t_f")?, e.num("sweep.log_min")?, e.num("sweep.log_max")?) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                bail!("{source}: give either `sweep.t_f` or `sweep.log_min`/`sweep.log_max`, not both")
            }
            (Some(list), None, None) => list,
            (None, Some(lo), Some(hi)) => {
                let n: usize = e.get("sweep.points")?.unwrap_or(15);
                if n == 0 || (n == 1 && lo != hi) {
                    bail!("{source}: `sweep.points` must be at least 2 for a range");
                }
                if n == 1 {
                    vec![10f64.powf(lo)]
                } else {
                    (0..n)
                        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
                        .collect()
                }
            }
            (None, None, None) => Vec::new(),
            _ => bail!("{source}: `sweep.log_min` and `sweep.log_max` must be given together"),
        };
        if let Some(bad) = sweep.iter().find(|t| !(**t > 0.0)) {
            bail!("{source}: `sweep`: t_f = {bad} is not positive");
        }

        let window = match e.list("analysis.window")? {
            None => None,
            Some(w) if w.len() == 2 && w[0] > 0.0 && w[0] < w[1] => Some((w[0], w[1])),
            Some(_) => bail!("{source}: `analysis.window` must be `lo, hi` with 0 < lo < hi"),
        };
        let prefactor = match e.get::<String>("analysis.prefactor")?.as_deref() {
            None | Some("fixed-velocity") => PrefactorChoice::FixedVelocity,
            Some("fit-intercept") => PrefactorChoice::FitIntercept,
            Some(other) => bail!("{source}: `analysis.prefactor`: `{other}` (expected fixed-velocity|fit-intercept)"),
        };
        let pairs = match e.raw("verify.pairs") {
            None => vec![(2.0, 2.0), (0.5, 4.0), (3.0, 1.0)],
            Some((line, v)) => v
                .split(',')
                .map(|p| {
                    let (a, b) = p
                        .split_once(':')
                        .ok_or_else(|| anyhow!("pair `{}` is not `a:b`", p.trim()))?;
                    Ok((parse_number(a.trim())?, parse_number(b.trim())?))
                })
                .collect::<Result<Vec<_>>>()
                .with_context(|| e.at("verify.pairs", line))?,
        };
        let gnuplot = match e.raw("output.formats") {
            None => true,
            Some((line, v)) => {
                let formats: Vec<&str> = v.split(',').map(str::trim).collect();
                if let Some(bad) = formats.iter().find(|f| !["csv", "gnuplot"].contains(f)) {
                    bail!("{}: unknown format `{bad}` (expected csv, gnuplot)", e.at("output.formats", line));
                }
                formats.contains(&"gnuplot")
            }
        };

        let config = Self {
            name: e.get::<String>("output.name")?.unwrap_or_else(|| default_name.to_string()),
            model,
            side,
            bath,
            dynamics,
            ramp,
            ramp_t_f,
            polar,
            samples: e.get("ramp.samples")?.unwrap_or(201),
            toggles: e.flag("ramp.toggles")?.unwrap_or(false),
            sweep,
            window,
            t0: e.num("analysis.t0")?.unwrap_or(1.0),
            prefactor,
            pairs,
            tolerance: e.num("verify.tolerance")?.unwrap_or(5e-3),
            coherent: e.flag("verify.coherent")?.unwrap_or(false),
            out_dir: e.get::<String>("output.dir")?.map(PathBuf::from),
            gnuplot,
        };
        if !(config.t0 > 0.0) {
            bail!("{source}: `analysis.t0` must be positive");
        }
        if config.samples < 2 {
            bail!("{source}: `ramp.samples` must be at least 2");
        }
        if config.name.is_empty() || config.name.contains(['/', '\\']) {
            bail!("{source}: `output.name` must be a plain file name");
        }
        Ok(config)
    }

    /// Lines `key = value` covering the physics of the experiment: model, bath,
    /// dynamics and ramp shape. Durations, sweeps, analysis and output settings
    /// are excluded, so curves from one physical setup share a fingerprint.
    fn physics_lines(&self) -> Vec<(String, String)> {
        let d = &self.dynamics;
        let grid = if d.use_local { d.local_grid } else { d.exact_grid };
        let mut v = vec![
            ("model.kind", "kitaev".to_string()),
            ("model.J", num(self.model.hopping)),
            ("model.Delta_p", num(self.model.pairing)),
            ("model.side", side_name(self.side).to_string()),
            ("bath.gamma", num(self.bath.gamma)),
            ("bath.delta", num(self.bath.delta)),
            ("bath.s", num(self.bath.s)),
            ("dynamics.kappa", num(d.kappa)),
            ("dynamics.use_local", d.use_local.to_string()),
            ("dynamics.rel_tol", num(d.rel_tol)),
            ("dynamics.abs_tol", num(d.abs_tol)),
            ("dynamics.integrator", integrator_name(d.integrator).to_string()),
            ("dynamics.panels", grid.panels.to_string()),
            ("dynamics.nodes_per_panel", grid.nodes_per_panel.to_string()),
            ("dynamics.tau_min", num(d.tau_min)),
            ("dynamics.max_steps", d.max_steps.to_string()),
            ("ramp.alpha", num(self.ramp.alpha)),
            ("ramp.beta", num(self.ramp.beta)),
            ("ramp.dmu_i", num(self.ramp.dmu_i)),
            ("ramp.T_i", num(self.ramp.temp_i)),
        ];
        if let Some(e) = d.eps_max {
            v.push(("dynamics.eps_max", num(e)));
        }
        if let Some(c) = d.convergence_target {
            v.push(("dynamics.convergence_target", num(c)));
        }
        v.into_iter().map(|(k, s)| (k.to_string(), s)).collect()
    }

    /// Every setting in canonical form, physics first.
    pub fn canonical_lines(&self) -> Vec<(String, String)> {
        let mut v = self.physics_lines();
        let mut push = |k: &str, s: String| v.push((k.to_string(), s));
        if let Some(t) = self.ramp_t_f {
            push("ramp.t_f", num(t));
        }
        push("ramp.samples", self.samples.to_string());
        push("ramp.toggles", self.toggles.to_string());
        if !self.sweep.is_empty() {
            push("sweep.t_f", self.sweep.iter().map(|t| num(*t)).collect::<Vec<_>>().join(", "));
        }
        if let Some((lo, hi)) = self.window {
            push("analysis.window", format!("{}, {}", num(lo), num(hi)));
        }
        push("analysis.t0", num(self.t0));
        push(
            "analysis.prefactor",
            match self.prefactor {
                PrefactorChoice::FixedVelocity => "fixed-velocity",
                PrefactorChoice::FitIntercept => "fit-intercept",
            }
            .to_string(),
        );
        push(
            "verify.pairs",
            self.pairs
                .iter()
                .map(|(a, b)| format!("{}:{}", num(*a), num(*b)))
                .collect::<Vec<_>>()
                .join(", "),
        );
        push("verify.tolerance", num(self.tolerance));
        push("verify.coherent", self.coherent.to_string());
        push("output.name", self.name.clone());
        push("output.formats", if self.gnuplot { "csv, gnuplot" } else { "csv" }.to_string());
        v
    }

    /// SHA-256 of the canonical physics lines, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.physics_lines() {
            hasher.update(format!("{k} = {v}\n").as_bytes());
        }
        hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Header block embedded in every output file.
    pub fn header(&self, kind: &str) -> String {
        let mut h = format!("{OUTPUT_MAGIC} {kind}\n# fingerprint = {}\n", self.fingerprint());
        if let Some((theta, radius)) = self.polar {
            let _ = writeln!(h, "# start theta = {}, radius = {}", num(theta), num(radius));
        }
        for (k, v) in self.canonical_lines() {
            let _ = writeln!(h, "# config.{k} = {v}");
        }
        h
    }

    pub fn ramp_with(&self, t_f: f64) -> Result<RampSpec> {
        RampSpec::new(self.ramp.alpha, self.ramp.beta, self.ramp.dmu_i, self.ramp.temp_i, t_f)
            .map_err(|e| anyhow!("{}: t_f = {t_f}: {e}", self.name))
    }
}

/// Shortest decimal string that parses back to the same `f64`, with `-0` written as `0`.
pub fn num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:?}")
}

fn side_name(side: ApproachSide) -> &'static str {
    match side {
        ApproachSide::Below => "below",
        ApproachSide::Above => "above",
    }
}

fn integrator_name(i: Integrator) -> &'static str {
    match i {
        Integrator::Magnus => "magnus",
        Integrator::DormandPrince => "dopri5",
    }
}
