//! Run configuration: a TOML file of `[section]` headers and `key = value`
//! pairs. Every key is optional; presets fill in whatever is not given.
//!
//! ```toml
//! [params]            # SI units; defaults are the laboratory rig
//! r1 = 0.0            # link damping, N m s
//!
//! [gains]
//! preset = "Set2"     # Set1 | Set2 | Set3 | Exp
//! kp = 2.0            # overrides the preset field-wise
//!
//! [ics]
//! preset = "ICs1"     # ICs1 | ICs2 | ICs3 | origin
//! thetadot = 0.1      # 1/s
//!
//! [run]
//! horizon = 30.0      # s
//! step = 0.001        # s
//! form = "rel"        # rel | srel
//! out = "traj.csv"
//! ```

use std::path::{Path, PathBuf};

use flexpend::analysis::{DEFAULT_FD_STEP, LEVEL_NODES, LEVEL_THETA_RANGE, LEVEL_Z_RANGE};
use flexpend::control::CHECK_GRID;
use flexpend::sim::{DEFAULT_HORIZON, DEFAULT_STEP};
use flexpend::{Form, Gains, InitialConditions, PhysicalParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown gain preset {0:?} (expected Set1, Set2, Set3 or Exp)")]
    GainPreset(String),
    #[error("unknown initial-condition preset {0:?} (expected ICs1, ICs2, ICs3 or origin)")]
    IcsPreset(String),
    #[error("unknown form {0:?} (expected rel or srel)")]
    Form(String),
    #[error("invalid value: {0}")]
    Value(String),
}

/// The file as written, before presets are applied.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub ics: IcsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub linearize: LinearizeSection,
    #[serde(default)]
    pub levelcurves: LevelSection,
    #[serde(default)]
    pub equilibria: EquilibriaSection,
    #[serde(default)]
    pub batch: BatchSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub a0: Option<f64>,
    pub e: Option<f64>,
    pub g: Option<f64>,
    pub i: Option<f64>,
    pub l: Option<f64>,
    pub m: Option<f64>,
    pub mc: Option<f64>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub r1: Option<f64>,
    pub r3: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub preset: Option<String>,
    pub ke: Option<f64>,
    pub ka: Option<f64>,
    pub ku: Option<f64>,
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub kd: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub c_bound: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcsSection {
    pub preset: Option<String>,
    pub theta: Option<f64>,
    pub z: Option<f64>,
    pub thetadot: Option<f64>,
    pub zdot: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub form: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizeSection {
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSection {
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaSection {
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    pub gains: Option<Vec<String>>,
    pub ics: Option<Vec<String>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset_gains: Option<String>,
    pub preset_ics: Option<String>,
    pub form: Option<String>,
    pub out: Option<PathBuf>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: ParamsOut,
    pub gains: GainsOut,
    pub ics: IcsOut,
    pub run: RunOut,
    pub linearize: LinearizeOut,
    pub levelcurves: LevelOut,
    pub equilibria: EquilibriaOut,
    pub batch: BatchOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamsOut {
    pub a0: f64,
    pub e: f64,
    pub g: f64,
    pub i: f64,
    pub l: f64,
    pub m: f64,
    pub mc: f64,
    pub eta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub r1: f64,
    pub r3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainsOut {
    pub ke: f64,
    pub ka: f64,
    pub ku: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub eps: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IcsOut {
    pub theta: f64,
    pub z: f64,
    pub thetadot: f64,
    pub zdot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOut {
    pub horizon: f64,
    pub step: f64,
    pub form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizeOut {
    pub fd_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelOut {
    pub theta_min: f64,
    pub theta_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriaOut {
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchOut {
    pub gains: Vec<String>,
    pub ics: Vec<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }
}

fn gains_preset(name: &str) -> Result<Gains, ConfigError> {
    Gains::preset(name).ok_or_else(|| ConfigError::GainPreset(name.to_owned()))
}

fn ics_preset(name: &str) -> Result<InitialConditions, ConfigError> {
    InitialConditions::preset(name).ok_or_else(|| ConfigError::IcsPreset(name.to_owned()))
}

pub fn parse_form(name: &str) -> Result<Form, ConfigError> {
    match name.to_ascii_lowercase().as_str() {
        "rel" => Ok(Form::Rel),
        "srel" => Ok(Form::Srel),
        _ => Err(ConfigError::Form(name.to_owned())),
    }
}

impl RunConfig {
    /// Applies presets, then file values, then command-line overrides.
    pub fn resolve(file: &ConfigFile, cli: &Overrides) -> Result<Self, ConfigError> {
        let d = PhysicalParams::default();
        let p = &file.params;
        let params = ParamsOut {
            a0: p.a0.unwrap_or(d.a0),
            e: p.e.unwrap_or(d.e),
            g: p.g.unwrap_or(d.g),
            i: p.i.unwrap_or(d.i),
            l: p.l.unwrap_or(d.l),
            m: p.m.unwrap_or(d.m),
            mc: p.mc.unwrap_or(d.mc),
            eta: p.eta.unwrap_or(d.eta),
            gamma: p.gamma.unwrap_or(d.gamma),
            rho: p.rho.unwrap_or(d.rho),
            r1: p.r1.unwrap_or(d.r1),
            r3: p.r3.unwrap_or(d.r3),
        };

        let gs = &file.gains;
        let base = match cli.preset_gains.as_deref().or(gs.preset.as_deref()) {
            Some(name) => gains_preset(name)?,
            None => Gains::set1(),
        };
        let gains = GainsOut {
            ke: gs.ke.unwrap_or(base.ke),
            ka: gs.ka.unwrap_or(base.ka),
            ku: gs.ku.unwrap_or(base.ku),
            kp: gs.kp.unwrap_or(base.kp),
            ki: gs.ki.unwrap_or(base.ki),
            kd: gs.kd.unwrap_or(base.kd),
            eps: gs.eps.unwrap_or(base.eps),
            delta: gs.delta.unwrap_or(base.delta),
            c_bound: gs.c_bound.or(base.c_bound),
        };

        let is = &file.ics;
        let base = match cli.preset_ics.as_deref().or(is.preset.as_deref()) {
            Some(name) => ics_preset(name)?,
            None => InitialConditions::ics1(),
        };
        let ics = IcsOut {
            theta: is.theta.unwrap_or(base.theta),
            z: is.z.unwrap_or(base.z),
            thetadot: is.thetadot.unwrap_or(base.thetadot),
            zdot: is.zdot.unwrap_or(base.zdot),
        };

        let r = &file.run;
        let form = cli.form.as_deref().or(r.form.as_deref()).unwrap_or("rel");
        let form = parse_form(form)?.to_string();
        let run = RunOut {
            horizon: r.horizon.unwrap_or(DEFAULT_HORIZON),
            step: r.step.unwrap_or(DEFAULT_STEP),
            form,
            out: cli.out.clone().or_else(|| r.out.clone()),
        };
        if !(run.step > 0.0 && run.step.is_finite()) {
            return Err(ConfigError::Value(format!(
                "run.step must be positive, got {}",
                run.step
            )));
        }
        if !(run.horizon >= 0.0 && run.horizon.is_finite()) {
            return Err(ConfigError::Value(format!(
                "run.horizon must be non-negative, got {}",
                run.horizon
            )));
        }

        let linearize = LinearizeOut {
            fd_step: file.linearize.fd_step.unwrap_or(DEFAULT_FD_STEP),
        };
        let lv = &file.levelcurves;
        let levelcurves = LevelOut {
            theta_min: lv.theta_min.unwrap_or(LEVEL_THETA_RANGE.0),
            theta_max: lv.theta_max.unwrap_or(LEVEL_THETA_RANGE.1),
            z_min: lv.z_min.unwrap_or(LEVEL_Z_RANGE.0),
            z_max: lv.z_max.unwrap_or(LEVEL_Z_RANGE.1),
            nodes: lv.nodes.unwrap_or(LEVEL_NODES),
        };
        if levelcurves.nodes < 2 {
            return Err(ConfigError::Value(
                "levelcurves.nodes must be at least 2".into(),
            ));
        }
        let equilibria = EquilibriaOut {
            nodes: file.equilibria.nodes.unwrap_or(CHECK_GRID),
        };
        if equilibria.nodes < 2 {
            return Err(ConfigError::Value(
                "equilibria.nodes must be at least 2".into(),
            ));
        }

        let names = |v: &Option<Vec<String>>, all: [&str; 3]| {
            v.clone()
                .unwrap_or_else(|| all.iter().map(|s| s.to_string()).collect())
        };
        let batch = BatchOut {
            gains: names(&file.batch.gains, ["Set1", "Set2", "Set3"]),
            ics: names(&file.batch.ics, ["ICs1", "ICs2", "ICs3"]),
        };
        for g in &batch.gains {
            gains_preset(g)?;
        }
        for i in &batch.ics {
            ics_preset(i)?;
        }

        let cfg = Self {
            params,
            gains,
            ics,
            run,
            linearize,
            levelcurves,
            equilibria,
            batch,
        };
        cfg.physical_params()
            .validate()
            .map_err(|e| ConfigError::Value(e.to_string()))?;
        Ok(cfg)
    }

    pub fn physical_params(&self) -> PhysicalParams {
        let p = self.params;
        PhysicalParams {
            a0: p.a0,
            e: p.e,
            g: p.g,
            i: p.i,
            l: p.l,
            m: p.m,
            mc: p.mc,
            eta: p.eta,
            gamma: p.gamma,
            rho: p.rho,
            r1: p.r1,
            r3: p.r3,
        }
    }

    pub fn gains(&self) -> Gains {
        let g = &self.gains;
        Gains {
            eps: g.eps,
            delta: g.delta,
            c_bound: g.c_bound,
            ..Gains::new(g.ke, g.ka, g.ku, g.kd, g.kp, g.ki)
        }
    }

    pub fn initial_conditions(&self) -> InitialConditions {
        let i = self.ics;
        InitialConditions {
            theta: i.theta,
            z: i.z,
            thetadot: i.thetadot,
            zdot: i.zdot,
        }
    }

    pub fn form(&self) -> Form {
        parse_form(&self.run.form).expect("form validated on resolve")
    }

    /// The resolved configuration as TOML that [`ConfigFile::parse`] accepts.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved configuration is serializable")
    }
}
