//! Line-based `key = value` run configuration with dotted section keys.
//!
//! Parsing is strict: unknown keys and missing required keys are reported
//! all at once, semantic violations name the failing invariant, and the
//! normalized dump re-parses to an identical configuration (numbers are
//! emitted with 17 significant digits).

use std::collections::BTreeMap;

use crate::obstacle::ObstacleSpec;
use crate::output::fmt_f64;
use crate::solver::{Backend, Forcing, SolverConfig, TorusGrid};
use crate::{Error, Result, RNG_NAME};

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Master seed; the field stream and experiment streams derive from it.
    pub seed: u64,
    pub obstacle: ObstacleSpec,
    pub grid_m: usize,
    pub solver: SolverConfig,
    pub forcing: Forcing,
    pub pin: PinConfig,
    pub hysteresis: HysteresisConfig,
    pub eps: EpsConfig,
    pub ensemble: EnsembleConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinConfig {
    pub f_init_hi: f64,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisConfig {
    /// Loading amplitude; required by the hysteresis subcommand.
    pub amplitude: Option<f64>,
    /// Cycle period; required by the hysteresis subcommand.
    pub period: Option<f64>,
    /// Pinned-threshold estimate the amplitude must stay below.
    pub f_lo: Option<f64>,
    pub cycles: u32,
    pub quasistatic_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsConfig {
    pub list: Vec<f64>,
    pub force: f64,
    pub t_study: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Used when `seeds` is absent: seeds are `seed..seed+count`.
    pub count: u32,
    pub seeds: Option<Vec<u64>>,
}

const REQUIRED_KEYS: [&str; 4] =
    ["obstacle.lambda", "obstacle.rho", "obstacle.delta", "obstacle.y"];

const KNOWN_KEYS: [&str; 36] = [
    "seed",
    "rng.generator",
    "obstacle.lambda",
    "obstacle.rho",
    "obstacle.delta",
    "obstacle.y",
    "obstacle.n",
    "obstacle.seed",
    "grid.m",
    "solver.backend",
    "solver.epsilon",
    "solver.cfl",
    "solver.tol_pin",
    "solver.dwell",
    "solver.escape_margin",
    "solver.t_max",
    "output.stride",
    "forcing.kind",
    "forcing.value",
    "forcing.amplitude",
    "forcing.period",
    "forcing.times",
    "forcing.values",
    "forcing.profile",
    "pin.f_init_hi",
    "pin.steps",
    "hysteresis.amplitude",
    "hysteresis.period",
    "hysteresis.f_lo",
    "hysteresis.cycles",
    "hysteresis.quasistatic_factor",
    "eps.list",
    "eps.force",
    "eps.t_study",
    "ensemble.count",
    "ensemble.seeds",
];

fn known_key(key: &str) -> bool {
    KNOWN_KEYS.contains(&key)
}

struct Raw {
    map: BTreeMap<String, String>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Self { map })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn f64_of(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
            })
            .transpose()
    }

    fn u64_of(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("{key}: '{v}' is not a nonnegative integer")))
            })
            .transpose()
    }

    fn f64_list_of(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<f64>().map_err(|_| {
                            Error::Config(format!("{key}: '{}' is not a number", item.trim()))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .transpose()
    }

    fn u64_list_of(&self, key: &str) -> Result<Option<Vec<u64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<u64>().map_err(|_| {
                            Error::Config(format!("{key}: '{}' is not an integer", item.trim()))
                        })
                    })
                    .collect::<Result<Vec<u64>>>()
            })
            .transpose()
    }
}

/// Parse and fully validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw = Raw::parse(text)?;

    let unknown: Vec<&String> = raw.map.keys().filter(|k| !known_key(k)).collect();
    if !unknown.is_empty() {
        let list: Vec<String> = unknown.iter().map(|k| format!("'{k}'")).collect();
        return Err(Error::Config(format!("unknown keys: {}", list.join(", "))));
    }
    let missing: Vec<&str> =
        REQUIRED_KEYS.iter().copied().filter(|k| raw.get(k).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
    }

    if let Some(generator) = raw.get("rng.generator") {
        if generator != RNG_NAME {
            return Err(Error::Config(format!(
                "rng.generator: only '{RNG_NAME}' is supported, got '{generator}'"
            )));
        }
    }

    let seed = raw.u64_of("seed")?.unwrap_or(0);
    let obstacle = ObstacleSpec {
        intensity: raw.f64_of("obstacle.lambda")?.unwrap(),
        radius: raw.f64_of("obstacle.rho")?.unwrap(),
        mollification_width: raw.f64_of("obstacle.delta")?.unwrap(),
        slab_half_height: raw.f64_of("obstacle.y")?.unwrap(),
        dimension: raw.u64_of("obstacle.n")?.unwrap_or(1) as usize,
        seed: raw.u64_of("obstacle.seed")?.unwrap_or(seed),
    };
    obstacle.validate()?;

    let grid_m = raw.u64_of("grid.m")?.unwrap_or(256) as usize;
    let grid = TorusGrid::new(obstacle.dimension, grid_m)?;

    let backend = match raw.get("solver.backend").unwrap_or("prox") {
        "prox" => Backend::Prox,
        "regularized" => {
            let epsilon = raw.f64_of("solver.epsilon")?.ok_or_else(|| {
                Error::Config("solver.epsilon is required when solver.backend = regularized".into())
            })?;
            Backend::Regularized { epsilon }
        }
        other => {
            return Err(Error::Config(format!(
                "solver.backend must be 'prox' or 'regularized', got '{other}'"
            )))
        }
    };
    if matches!(backend, Backend::Prox) && raw.get("solver.epsilon").is_some() {
        return Err(Error::Config(
            "solver.epsilon requires solver.backend = regularized".into(),
        ));
    }

    let mut solver = SolverConfig {
        backend,
        cfl_factor: raw.f64_of("solver.cfl")?.unwrap_or(0.5),
        tol_pin: raw.f64_of("solver.tol_pin")?.unwrap_or(1e-8),
        dwell: raw.f64_of("solver.dwell")?,
        escape_margin: raw.f64_of("solver.escape_margin")?,
        t_max: raw.f64_of("solver.t_max")?.unwrap_or(20.0),
        output_stride: raw.u64_of("output.stride")?.unwrap_or(100),
    };
    solver.validate(&grid)?;
    // Resolve defaults so the normalized dump is self-contained.
    solver.dwell = Some(solver.dwell_window(&grid));
    solver.escape_margin = Some(solver.escape_margin(&grid));

    let forcing = match raw.get("forcing.kind").unwrap_or("constant") {
        "constant" => Forcing::Constant(raw.f64_of("forcing.value")?.unwrap_or(0.0)),
        "cycle" => {
            let amplitude = raw.f64_of("forcing.amplitude")?.ok_or_else(|| {
                Error::Config("forcing.amplitude is required when forcing.kind = cycle".into())
            })?;
            let period = raw.f64_of("forcing.period")?.ok_or_else(|| {
                Error::Config("forcing.period is required when forcing.kind = cycle".into())
            })?;
            Forcing::Cycle { amplitude, period }
        }
        "tabulated" => {
            let times = raw.f64_list_of("forcing.times")?.ok_or_else(|| {
                Error::Config("forcing.times is required when forcing.kind = tabulated".into())
            })?;
            let values = raw.f64_list_of("forcing.values")?.ok_or_else(|| {
                Error::Config("forcing.values is required when forcing.kind = tabulated".into())
            })?;
            Forcing::Tabulated { times, values }
        }
        "profile" => {
            let values = raw.f64_list_of("forcing.profile")?.ok_or_else(|| {
                Error::Config("forcing.profile is required when forcing.kind = profile".into())
            })?;
            Forcing::LateralProfile(values)
        }
        other => {
            return Err(Error::Config(format!(
                "forcing.kind must be one of constant, cycle, tabulated, profile; got '{other}'"
            )))
        }
    };
    forcing.validate(&grid)?;

    let pin = PinConfig {
        f_init_hi: raw.f64_of("pin.f_init_hi")?.unwrap_or(1.0),
        steps: raw.u64_of("pin.steps")?.unwrap_or(10) as u32,
    };
    if !(pin.f_init_hi > 0.0) {
        return Err(Error::Config("pin.f_init_hi must be positive".into()));
    }
    if pin.steps < 6 {
        return Err(Error::Config("pin.steps must be at least 6".into()));
    }

    let hysteresis = HysteresisConfig {
        amplitude: raw.f64_of("hysteresis.amplitude")?,
        period: raw.f64_of("hysteresis.period")?,
        f_lo: raw.f64_of("hysteresis.f_lo")?,
        cycles: raw.u64_of("hysteresis.cycles")?.unwrap_or(3) as u32,
        quasistatic_factor: raw.f64_of("hysteresis.quasistatic_factor")?.unwrap_or(10.0),
    };
    if hysteresis.cycles < 2 {
        return Err(Error::Config("hysteresis.cycles must be at least 2".into()));
    }
    if !(hysteresis.quasistatic_factor > 0.0) {
        return Err(Error::Config("hysteresis.quasistatic_factor must be positive".into()));
    }

    let eps = EpsConfig {
        list: raw
            .f64_list_of("eps.list")?
            .unwrap_or_else(|| vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3]),
        force: raw.f64_of("eps.force")?.unwrap_or(0.25),
        t_study: raw.f64_of("eps.t_study")?.unwrap_or(0.3),
    };
    if eps.list.is_empty() || eps.list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("eps.list must contain positive values".into()));
    }
    if eps.list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("eps.list must be strictly decreasing".into()));
    }
    if !(eps.t_study > 0.0) {
        return Err(Error::Config("eps.t_study must be positive".into()));
    }

    let ensemble = EnsembleConfig {
        count: raw.u64_of("ensemble.count")?.unwrap_or(8) as u32,
        seeds: raw.u64_list_of("ensemble.seeds")?,
    };
    if ensemble.count < 8 && ensemble.seeds.is_none() {
        return Err(Error::Config("ensemble.count must be at least 8".into()));
    }
    if let Some(seeds) = &ensemble.seeds {
        if seeds.len() < 8 {
            return Err(Error::Config("ensemble.seeds must list at least 8 seeds".into()));
        }
    }

    Ok(RunConfig { seed, obstacle, grid_m, solver, forcing, pin, hysteresis, eps, ensemble })
}

impl RunConfig {
    pub fn grid(&self) -> TorusGrid {
        TorusGrid::new(self.obstacle.dimension, self.grid_m).expect("validated at parse time")
    }

    /// Seeds for ensemble members: explicit list, or `seed..seed+count`.
    pub fn ensemble_seeds(&self) -> Vec<u64> {
        match &self.ensemble.seeds {
            Some(seeds) => seeds.clone(),
            None => (0..self.ensemble.count as u64).map(|k| self.seed + k).collect(),
        }
    }

    /// Resolve the parameters the hysteresis subcommand needs.
    pub fn hysteresis_params(&self) -> Result<crate::experiments::HysteresisParams> {
        let mut missing = Vec::new();
        if self.hysteresis.amplitude.is_none() {
            missing.push("hysteresis.amplitude");
        }
        if self.hysteresis.period.is_none() {
            missing.push("hysteresis.period");
        }
        if self.hysteresis.f_lo.is_none() {
            missing.push("hysteresis.f_lo");
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "missing required keys for the hysteresis subcommand: {}",
                missing.join(", ")
            )));
        }
        Ok(crate::experiments::HysteresisParams {
            amplitude: self.hysteresis.amplitude.unwrap(),
            period: self.hysteresis.period.unwrap(),
            cycles: self.hysteresis.cycles,
            quasistatic_factor: self.hysteresis.quasistatic_factor,
            pinned_threshold: self.hysteresis.f_lo.unwrap(),
        })
    }

    /// Normalized dump: every resolved key, sorted, numbers in full precision.
    pub fn dump(&self) -> String {
        let mut pairs: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("rng.generator".into(), RNG_NAME.into()),
            ("obstacle.lambda".into(), fmt_f64(self.obstacle.intensity)),
            ("obstacle.rho".into(), fmt_f64(self.obstacle.radius)),
            ("obstacle.delta".into(), fmt_f64(self.obstacle.mollification_width)),
            ("obstacle.y".into(), fmt_f64(self.obstacle.slab_half_height)),
            ("obstacle.n".into(), self.obstacle.dimension.to_string()),
            ("obstacle.seed".into(), self.obstacle.seed.to_string()),
            ("grid.m".into(), self.grid_m.to_string()),
            ("solver.cfl".into(), fmt_f64(self.solver.cfl_factor)),
            ("solver.tol_pin".into(), fmt_f64(self.solver.tol_pin)),
            ("solver.dwell".into(), fmt_f64(self.solver.dwell.expect("resolved"))),
            (
                "solver.escape_margin".into(),
                fmt_f64(self.solver.escape_margin.expect("resolved")),
            ),
            ("solver.t_max".into(), fmt_f64(self.solver.t_max)),
            ("output.stride".into(), self.solver.output_stride.to_string()),
            ("pin.f_init_hi".into(), fmt_f64(self.pin.f_init_hi)),
            ("pin.steps".into(), self.pin.steps.to_string()),
            ("hysteresis.cycles".into(), self.hysteresis.cycles.to_string()),
            (
                "hysteresis.quasistatic_factor".into(),
                fmt_f64(self.hysteresis.quasistatic_factor),
            ),
            ("eps.list".into(), join_f64(&self.eps.list)),
            ("eps.force".into(), fmt_f64(self.eps.force)),
            ("eps.t_study".into(), fmt_f64(self.eps.t_study)),
            ("ensemble.count".into(), self.ensemble.count.to_string()),
        ];
        match self.solver.backend {
            Backend::Prox => pairs.push(("solver.backend".into(), "prox".into())),
            Backend::Regularized { epsilon } => {
                pairs.push(("solver.backend".into(), "regularized".into()));
                pairs.push(("solver.epsilon".into(), fmt_f64(epsilon)));
            }
        }
        match &self.forcing {
            Forcing::Constant(v) => {
                pairs.push(("forcing.kind".into(), "constant".into()));
                pairs.push(("forcing.value".into(), fmt_f64(*v)));
            }
            Forcing::Cycle { amplitude, period } => {
                pairs.push(("forcing.kind".into(), "cycle".into()));
                pairs.push(("forcing.amplitude".into(), fmt_f64(*amplitude)));
                pairs.push(("forcing.period".into(), fmt_f64(*period)));
            }
            Forcing::Tabulated { times, values } => {
                pairs.push(("forcing.kind".into(), "tabulated".into()));
                pairs.push(("forcing.times".into(), join_f64(times)));
                pairs.push(("forcing.values".into(), join_f64(values)));
            }
            Forcing::LateralProfile(values) => {
                pairs.push(("forcing.kind".into(), "profile".into()));
                pairs.push(("forcing.profile".into(), join_f64(values)));
            }
        }
        if let Some(a) = self.hysteresis.amplitude {
            pairs.push(("hysteresis.amplitude".into(), fmt_f64(a)));
        }
        if let Some(p) = self.hysteresis.period {
            pairs.push(("hysteresis.period".into(), fmt_f64(p)));
        }
        if let Some(f) = self.hysteresis.f_lo {
            pairs.push(("hysteresis.f_lo".into(), fmt_f64(f)));
        }
        if let Some(seeds) = &self.ensemble.seeds {
            let list: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
            pairs.push(("ensemble.seeds".into(), list.join(",")));
        }
        pairs.sort();
        let mut out = String::new();
        for (key, value) in pairs {
            out.push_str(&key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}
