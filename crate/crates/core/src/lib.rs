//! Orbital stabilization of two-degree-of-freedom underactuated mechanical
//! systems by immersion and invariance, after collocated partial feedback
//! linearization.

pub mod error;
pub mod expr;
pub mod mechmodel;
pub mod ode;
pub mod prefeedback;
pub mod quad;
pub mod scenario;
pub mod simcore;
pub mod synthesis;
pub mod target;
pub mod verify;

pub use error::{Error, Result};
pub use mechmodel::{Furuta, MechanicalSystem, Pendubot, SharedSystem, State4};
pub use synthesis::{make_profile, Design, ProfileSettings, SynthesisProfile};
