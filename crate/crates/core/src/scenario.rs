//! The two built-in scenarios with their demo initial conditions.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::mechmodel::{Furuta, Pendubot, State4};
use crate::synthesis::{
    make_profile, make_profile_unchecked, scalar_fn, Design, ProfileSettings, Scaling,
    SynthesisProfile,
};
use crate::verify::QuotedForm;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub profile: SynthesisProfile,
    pub x0: State4,
    /// Range of `x1` used by the grid-based checks.
    pub xi1_range: (f64, f64),
    pub quoted_forms: Vec<QuotedForm>,
}

pub const FURUTA_K1: f64 = 5.0;
pub const FURUTA_GAINS: (f64, f64) = (5.0, 5.0);
pub const FURUTA_INTERVAL: (f64, f64) = (-1.4, 1.4);
pub const PENDUBOT_K2: f64 = -1.0;
pub const PENDUBOT_GAINS: (f64, f64) = (10.0, 5.0);
pub const PENDUBOT_INTERVAL: (f64, f64) = (-2.0 * PI, 2.0 * PI);

pub fn furuta_profile(sys: &Furuta, k1: f64, gains: (f64, f64)) -> Result<SynthesisProfile> {
    make_profile(
        Arc::new(sys.clone()),
        Design::furuta_k1(sys, k1),
        ProfileSettings {
            gamma1: gains.0,
            gamma2: gains.1,
            interval: FURUTA_INTERVAL,
        },
    )
}

pub fn pendubot_profile(sys: &Pendubot, k2: f64, gains: (f64, f64)) -> Result<SynthesisProfile> {
    make_profile(
        Arc::new(sys.clone()),
        Design::pendubot_k2(sys, k2),
        ProfileSettings {
            gamma1: gains.0,
            gamma2: gains.1,
            interval: PENDUBOT_INTERVAL,
        },
    )
}

impl Scenario {
    pub fn furuta() -> Result<Self> {
        let sys = Furuta::benchmark();
        Ok(Self {
            name: "furuta",
            profile: furuta_profile(&sys, FURUTA_K1, FURUTA_GAINS)?,
            x0: State4::new(PI / 9.0, 0.6, 0.0, 0.0),
            xi1_range: (-1.3, 1.3),
            quoted_forms: QuotedForm::furuta(&sys, FURUTA_K1).to_vec(),
        })
    }

    pub fn pendubot() -> Result<Self> {
        let sys = Pendubot::benchmark();
        Ok(Self {
            name: "pendubot",
            profile: pendubot_profile(&sys, PENDUBOT_K2, PENDUBOT_GAINS)?,
            x0: State4::new(PI / 3.0, PI / 1.5, 0.0, 0.0),
            xi1_range: (-PI, PI),
            quoted_forms: QuotedForm::pendubot(&sys).to_vec(),
        })
    }

    pub fn by_name(name: &str) -> Option<Result<Self>> {
        match name {
            "furuta" => Some(Self::furuta()),
            "pendubot" => Some(Self::pendubot()),
            _ => None,
        }
    }
}

/// The same profile with `K` (hence `K'`, `K''`) scaled by `factor` while the
/// scaling map is kept, so the design no longer satisfies the invariance
/// equation.
pub fn mutated_profile(p: &SynthesisProfile, factor: f64) -> Result<SynthesisProfile> {
    let orig = p.clone();
    make_profile_unchecked(
        p.shared_system(),
        Design {
            generator: p.generator().scaled(factor),
            scaling: Some(Scaling(scalar_fn(move |x| orig.scaling(x)))),
        },
        p.settings(),
    )
}
