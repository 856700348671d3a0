//! Simulation and analysis of a multi-pixel superconducting nanowire
//! single-photon detector array read out by a time tagger.

pub mod analysis;
pub mod device;
pub mod error;
pub mod geometry;
pub mod reproduce;
pub mod scenario;
pub mod synth;
pub mod tag;
pub mod tagio;

pub use device::{BeamProfile, BeamShape, OpticalPath, PixelModel, Polarization};
pub use error::{Error, Result};
pub use geometry::{ArrayGeometry, Rect, Topology};
pub use scenario::{Scenario, ScenarioConfig};
pub use synth::{simulate, CrosstalkModel, SimRun, SourceModel, TdcModel};
pub use tag::{Event, TimeTag};
