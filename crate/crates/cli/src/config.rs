use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use underact::mechmodel::{CustomSystem, CustomSystemSpec};
use underact::scenario::{FURUTA_INTERVAL, PENDUBOT_INTERVAL};
use underact::simcore::IntegratorConfig;
use underact::verify::QuotedForm;
use underact::{
    make_profile, Design, Furuta, Pendubot, ProfileSettings, SharedSystem, State4, SynthesisProfile,
};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Furuta,
    Pendubot,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    /// Physical parameter overrides by name (`m`, `l`, `r`, `J`, `J_a`, `g` for
    /// the Furuta pendulum; `m1`, `m2`, `l1`, `l2`, `lc1`, `lc2`, `I1`, `I2`,
    /// `g` for the Pendubot).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Inline expressions for a custom system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomSystemSpec>,
    /// File holding the custom system expressions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    /// Custom generator `K(x1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<String>,
    /// Custom generator slope `K'(x1)`, with `K(0) = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dk: Option<String>,
    /// Custom scaling map; derived from `K` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<String>,
    pub gamma1: f64,
    pub gamma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// `x1` range of the grid-based checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Scale `K` by this factor while keeping the scaling map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutate_k: Option<f64>,
    #[serde(default)]
    pub d4: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    pub synthesis: SynthesisSection,
    pub x0: [f64; 4],
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

/// What a run needs once the configuration has been resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub label: String,
    pub profile: SynthesisProfile,
    pub x0: State4,
    pub integrator: IntegratorConfig,
    pub check_range: (f64, f64),
    pub quoted_forms: Vec<QuotedForm>,
}

impl ScenarioConfig {
    pub fn furuta_demo() -> Self {
        Self {
            system: SystemSection {
                kind: SystemKind::Furuta,
                params: BTreeMap::new(),
                custom: None,
                file: None,
            },
            synthesis: SynthesisSection {
                k1: Some(5.0),
                k2: None,
                k: None,
                dk: None,
                s: None,
                gamma1: 5.0,
                gamma2: 5.0,
                interval: None,
            },
            x0: [PI / 9.0, 0.6, 0.0, 0.0],
            integrator: IntegratorConfig::default(),
            output: OutputSection::default(),
            verify: VerifySection::default(),
        }
    }

    pub fn pendubot_demo() -> Self {
        Self {
            system: SystemSection {
                kind: SystemKind::Pendubot,
                ..Self::furuta_demo().system
            },
            synthesis: SynthesisSection {
                k1: None,
                k2: Some(-1.0),
                gamma1: 10.0,
                gamma2: 5.0,
                ..Self::furuta_demo().synthesis
            },
            x0: [PI / 3.0, PI / 1.5, 0.0, 0.0],
            ..Self::furuta_demo()
        }
    }

    pub fn demo(name: &str) -> Result<Self, CliError> {
        match name {
            "furuta" => Ok(Self::furuta_demo()),
            "pendubot" => Ok(Self::pendubot_demo()),
            other => Err(CliError::Config(format!(
                "unknown demo `{other}` (expected furuta or pendubot)"
            ))),
        }
    }

    pub fn from_toml(src: &str) -> Result<Self, CliError> {
        toml::from_str(src).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&src)?;
        if let (Some(file), Some(dir)) = (&cfg.system.file, path.parent()) {
            if file.is_relative() {
                cfg.system.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    fn interval(&self, default: (f64, f64)) -> (f64, f64) {
        self.synthesis
            .interval
            .map(|[a, b]| (a, b))
            .unwrap_or(default)
    }

    fn settings(&self, interval: (f64, f64)) -> ProfileSettings {
        ProfileSettings {
            gamma1: self.synthesis.gamma1,
            gamma2: self.synthesis.gamma2,
            interval,
        }
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(CliError::Config("x0 must be finite".into()));
        }
        self.integrator.validate()?;
        let s = &self.synthesis;
        let (label, profile, default_range, quoted_forms) = match self.system.kind {
            SystemKind::Furuta => {
                let sys = furuta_from(&self.system.params)?;
                if s.k2.is_some() || s.k.is_some() || s.dk.is_some() {
                    return Err(CliError::Config("the Furuta design takes only k1".into()));
                }
                let k1 =
                    s.k1.ok_or_else(|| CliError::Config("missing synthesis.k1".into()))?;
                let interval = self.interval(FURUTA_INTERVAL);
                let p = make_profile(
                    Arc::new(sys.clone()),
                    Design::furuta_k1(&sys, k1),
                    self.settings(interval),
                )?;
                let range = (
                    0.95 * interval.0.max(-1.3 / 0.95),
                    0.95 * interval.1.min(1.3 / 0.95),
                );
                (
                    format!("furuta k1={k1}"),
                    p,
                    range,
                    QuotedForm::furuta(&sys, k1).to_vec(),
                )
            }
            SystemKind::Pendubot => {
                let sys = pendubot_from(&self.system.params)?;
                if s.k1.is_some() || s.k.is_some() || s.dk.is_some() {
                    return Err(CliError::Config("the Pendubot design takes only k2".into()));
                }
                let k2 =
                    s.k2.ok_or_else(|| CliError::Config("missing synthesis.k2".into()))?;
                let interval = self.interval(PENDUBOT_INTERVAL);
                let p = make_profile(
                    Arc::new(sys.clone()),
                    Design::pendubot_k2(&sys, k2),
                    self.settings(interval),
                )?;
                let range = (interval.0.max(-PI), interval.1.min(PI));
                (
                    format!("pendubot k2={k2}"),
                    p,
                    range,
                    QuotedForm::pendubot(&sys).to_vec(),
                )
            }
            SystemKind::Custom => {
                let spec = match (&self.system.custom, &self.system.file) {
                    (Some(spec), None) => spec.clone(),
                    (None, Some(file)) => {
                        let src = std::fs::read_to_string(file).map_err(|e| {
                            CliError::Config(format!("cannot read {}: {e}", file.display()))
                        })?;
                        toml::from_str(&src)
                            .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?
                    }
                    _ => {
                        return Err(CliError::Config(
                            "custom system needs exactly one of `custom` or `file`".into(),
                        ))
                    }
                };
                let sys: SharedSystem = Arc::new(CustomSystem::from_spec(spec)?);
                let interval = self
                    .synthesis
                    .interval
                    .map(|[a, b]| (a, b))
                    .ok_or_else(|| {
                        CliError::Config("custom designs need synthesis.interval".into())
                    })?;
                let design = Design::from_expressions(
                    s.k.as_deref(),
                    s.dk.as_deref(),
                    s.s.as_deref(),
                    interval,
                )?;
                let p = make_profile(sys, design, self.settings(interval))?;
                let c = 0.5 * (interval.0 + interval.1);
                let h = 0.475 * (interval.1 - interval.0);
                ("custom".to_string(), p, (c - h, c + h), Vec::new())
            }
        };
        let check_range = self
            .verify
            .range
            .map(|[a, b]| (a, b))
            .unwrap_or(default_range);
        if !(check_range.0 < check_range.1) {
            return Err(CliError::Config("verify.range must be increasing".into()));
        }
        Ok(Resolved {
            label,
            profile,
            x0: State4::from_array(self.x0),
            integrator: self.integrator,
            check_range,
            quoted_forms,
        })
    }
}

fn take(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<(), CliError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(CliError::Config(format!(
            "unknown parameter `{k}` (expected one of {})",
            allowed.join(", ")
        ))),
        None => Ok(()),
    }
}

fn furuta_from(params: &BTreeMap<String, f64>) -> Result<Furuta, CliError> {
    take(params, &["m", "l", "r", "J", "J_a", "g"])?;
    let b = Furuta::benchmark();
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    Ok(Furuta::with_gravity(
        get("m", b.m),
        get("l", b.l),
        get("r", b.r),
        get("J", b.j),
        get("J_a", b.j_a),
        get("g", b.g),
    )?)
}

fn pendubot_from(params: &BTreeMap<String, f64>) -> Result<Pendubot, CliError> {
    take(
        params,
        &["m1", "m2", "l1", "l2", "lc1", "lc2", "I1", "I2", "g"],
    )?;
    let b = Pendubot::benchmark();
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    Ok(Pendubot::with_gravity(
        get("m1", b.m1),
        get("m2", b.m2),
        get("l1", b.l1),
        get("l2", b.l2),
        get("lc1", b.lc1),
        get("lc2", b.lc2),
        get("I1", b.i1),
        get("I2", b.i2),
        get("g", b.g),
    )?)
}
