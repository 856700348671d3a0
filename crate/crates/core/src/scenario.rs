//! Scenario configuration files (JSON).
//!
//! A scenario fixes the array geometry, the per-pixel detector parameters,
//! the optics and beam, the bias point and the synthesis models. Per-pixel
//! parameters accept three forms:
//!
//! ```json
//! "dead_time_ns": 50.0
//! "dead_time_ns": [50.0, 51.2, ...]                 // one entry per pixel
//! "dead_time_ns": {"mean": 49.6, "sigma": 2.0, "seed": 11}
//! ```
//!
//! The last form draws a normal spread truncated at +-2 sigma from a fixed
//! seed, so the same file always resolves to the same pixels.
//!
//! Unknown keys are rejected. Schema version is [`SCHEMA_VERSION`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::device::{
    BeamProfile, OpticalPath, PixelModel, DEFAULT_DEAD_TIME_NS, DEFAULT_DEAD_TIME_SPREAD_NS,
    DEFAULT_ETA_SPREAD, DEFAULT_ETA_SYSTEM_MAX, NOMINAL_BIAS_UA,
};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::synth::{CrosstalkModel, SourceModel, TdcModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPixel {
    Scalar(f64),
    List(Vec<f64>),
    Spread { mean: f64, sigma: f64, seed: u64 },
}

impl From<f64> for PerPixel {
    fn from(v: f64) -> Self {
        PerPixel::Scalar(v)
    }
}

impl PerPixel {
    pub fn resolve(&self, n: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            PerPixel::Scalar(v) => Ok(vec![*v; n]),
            PerPixel::List(v) if v.len() == n => Ok(v.clone()),
            PerPixel::List(v) => Err(Error::Scenario {
                path: format!("pixels.{field}"),
                message: format!("expected {n} entries, found {}", v.len()),
            }),
            PerPixel::Spread { mean, sigma, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..n)
                    .map(|_| loop {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        if z.abs() <= 2.0 {
                            break mean + sigma * z;
                        }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelConfig {
    pub eta_system_max: PerPixel,
    pub i_turn_on_ua: PerPixel,
    pub i_width_ua: PerPixel,
    pub dcr_base_cps: PerPixel,
    pub dcr_knee_ua: PerPixel,
    pub dcr_scale_ua: PerPixel,
    pub dcr_knee_rate_cps: PerPixel,
    pub dead_time_ns: PerPixel,
    pub jitter_fwhm_ps: PerPixel,
    pub i_switch_ua: PerPixel,
}

impl Default for PixelConfig {
    fn default() -> Self {
        let p = PixelModel::nominal(0);
        Self {
            eta_system_max: PerPixel::Spread { mean: DEFAULT_ETA_SYSTEM_MAX, sigma: DEFAULT_ETA_SPREAD, seed: 7 },
            i_turn_on_ua: p.i_turn_on_ua.into(),
            i_width_ua: p.i_width_ua.into(),
            dcr_base_cps: p.dcr_base_cps.into(),
            dcr_knee_ua: p.dcr_knee_ua.into(),
            dcr_scale_ua: p.dcr_scale_ua.into(),
            dcr_knee_rate_cps: p.dcr_knee_rate_cps.into(),
            dead_time_ns: PerPixel::Spread {
                mean: DEFAULT_DEAD_TIME_NS,
                sigma: DEFAULT_DEAD_TIME_SPREAD_NS,
                seed: 11,
            },
            jitter_fwhm_ps: p.jitter_fwhm_ps.into(),
            i_switch_ua: p.i_switch_ua.into(),
        }
    }
}

impl PixelConfig {
    /// All pixels identical at the nominal parameters.
    pub fn uniform() -> Self {
        Self {
            eta_system_max: DEFAULT_ETA_SYSTEM_MAX.into(),
            dead_time_ns: DEFAULT_DEAD_TIME_NS.into(),
            ..Self::default()
        }
    }

    pub fn resolve(&self, n: usize) -> Result<Vec<PixelModel>> {
        let eta = self.eta_system_max.resolve(n, "eta_system_max")?;
        let on = self.i_turn_on_ua.resolve(n, "i_turn_on_ua")?;
        let width = self.i_width_ua.resolve(n, "i_width_ua")?;
        let base = self.dcr_base_cps.resolve(n, "dcr_base_cps")?;
        let knee = self.dcr_knee_ua.resolve(n, "dcr_knee_ua")?;
        let scale = self.dcr_scale_ua.resolve(n, "dcr_scale_ua")?;
        let knee_rate = self.dcr_knee_rate_cps.resolve(n, "dcr_knee_rate_cps")?;
        let dead = self.dead_time_ns.resolve(n, "dead_time_ns")?;
        let jitter = self.jitter_fwhm_ps.resolve(n, "jitter_fwhm_ps")?;
        let sw = self.i_switch_ua.resolve(n, "i_switch_ua")?;
        (0..n)
            .map(|i| {
                let p = PixelModel {
                    channel: i,
                    eta_system_max: eta[i],
                    i_turn_on_ua: on[i],
                    i_width_ua: width[i],
                    dcr_base_cps: base[i],
                    dcr_knee_ua: knee[i],
                    dcr_scale_ua: scale[i],
                    dcr_knee_rate_cps: knee_rate[i],
                    dead_time_ns: dead[i],
                    jitter_fwhm_ps: jitter[i],
                    i_switch_ua: sw[i],
                };
                p.validate().map_err(|e| Error::Scenario { path: format!("pixels[{i}]"), message: e.to_string() })?;
                Ok(p)
            })
            .collect()
    }
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub geometry: ArrayGeometry,
    #[serde(default)]
    pub pixels: PixelConfig,
    #[serde(default)]
    pub optics: OpticalPath,
    pub beam: BeamProfile,
    #[serde(default = "default_bias")]
    pub bias_ua: f64,
    #[serde(default)]
    pub source: SourceModel,
    #[serde(default)]
    pub crosstalk: CrosstalkModel,
    #[serde(default)]
    pub tdc: TdcModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_bias() -> f64 {
    NOMINAL_BIAS_UA
}

impl Default for ScenarioConfig {
    /// Flood illumination of the whole array at 10^6 photons/s, nominal bias.
    fn default() -> Self {
        let geometry = ArrayGeometry::default();
        let beam = BeamProfile::flood(geometry.footprint(), 1e6);
        Self {
            version: SCHEMA_VERSION,
            geometry,
            pixels: PixelConfig::default(),
            optics: OpticalPath::default(),
            beam,
            bias_ua: NOMINAL_BIAS_UA,
            source: SourceModel::Cw,
            crosstalk: CrosstalkModel::default(),
            tdc: TdcModel::default(),
            duration_s: None,
            seed: None,
        }
    }
}

impl ScenarioConfig {
    /// Parse JSON, reporting schema errors with the offending path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Scenario {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn resolve(&self) -> Result<Scenario> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Scenario {
                path: "version".into(),
                message: format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version),
            });
        }
        let wrap = |path: &str| {
            let path = path.to_string();
            move |e: Error| Error::Scenario { path: path.clone(), message: e.to_string() }
        };
        self.geometry.validate().map_err(wrap("geometry"))?;
        self.optics.validate().map_err(wrap("optics"))?;
        self.beam.validate().map_err(wrap("beam"))?;
        self.tdc.validate().map_err(wrap("tdc"))?;
        self.crosstalk.validate().map_err(wrap("crosstalk"))?;
        self.source.validate(self.geometry.pixel_count()).map_err(wrap("source"))?;
        if let Some(d) = self.duration_s {
            if !(d > 0.0) {
                return Err(Error::Scenario { path: "duration_s".into(), message: "must be positive".into() });
            }
        }
        let pixels = self.pixels.resolve(self.geometry.pixel_count())?;
        for p in &pixels {
            p.internal_efficiency(self.bias_ua).map_err(wrap("bias_ua"))?;
        }
        Ok(Scenario {
            geometry: self.geometry.clone(),
            pixels,
            optics: self.optics.clone(),
            beam: self.beam.clone(),
            bias_ua: self.bias_ua,
            source: self.source.clone(),
            crosstalk: self.crosstalk.clone(),
            tdc: self.tdc.clone(),
        })
    }
}

/// Validated scenario with concrete per-pixel models.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub pixels: Vec<PixelModel>,
    pub optics: OpticalPath,
    pub beam: BeamProfile,
    pub bias_ua: f64,
    pub source: SourceModel,
    pub crosstalk: CrosstalkModel,
    pub tdc: TdcModel,
}

impl Scenario {
    pub fn nominal() -> Self {
        ScenarioConfig::default().resolve().expect("default scenario is valid")
    }

    pub fn with_beam(mut self, beam: BeamProfile) -> Self {
        self.beam = beam;
        self
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    /// Channels carried by tag streams: pixels plus the sync channel if any.
    pub fn channel_count(&self) -> u16 {
        match self.source.sync_channel() {
            Some(s) => (s + 1).max(self.pixels.len() as u16),
            None => self.pixels.len() as u16,
        }
    }

    pub fn photon_rates(&self) -> Result<Vec<f64>> {
        self.pixels
            .iter()
            .map(|p| crate::device::expected_photon_rate(&self.geometry, p, &self.optics, &self.beam, self.bias_ua))
            .collect()
    }

    pub fn dark_rates(&self) -> Result<Vec<f64>> {
        self.pixels.iter().map(|p| p.dark_rate(self.bias_ua)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_json() {
        let cfg = ScenarioConfig::default();
        let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.resolve().unwrap(), Scenario::nominal());
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let s = ScenarioConfig::from_json(
            r#"{"version": 1, "beam": {"kind": "gaussian", "center_um": [15, 15], "diameter_1e2_um": 27, "flux": 1e6}}"#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(s.pixels.len(), 64);
        assert_eq!(s.bias_ua, 21.0);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = ScenarioConfig::from_json(
            r#"{"version": 1, "beam": {"kind": "flood", "rect_um": {"x0":0,"y0":0,"x1":240,"y1":240}, "flux": 1}, "tdc": {"tick": 1}}"#,
        )
        .unwrap_err();
        match err {
            Error::Scenario { path, .. } => assert!(path.starts_with("tdc"), "{path}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_beam_key_rejected() {
        let err = ScenarioConfig::from_json(
            r#"{"version": 1, "beam": {"kind": "gaussian", "center_um": [0, 0], "diameter_1e2_um": 27, "flux": 1, "waist": 3}}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn wrong_list_length_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.pixels.dead_time_ns = PerPixel::List(vec![50.0; 63]);
        assert!(matches!(cfg.resolve(), Err(Error::Scenario { .. })));
    }

    #[test]
    fn spread_is_deterministic_and_truncated() {
        let spread = PerPixel::Spread { mean: 1.0, sigma: 0.1, seed: 3 };
        let a = spread.resolve(1000, "x").unwrap();
        assert_eq!(a, spread.resolve(1000, "x").unwrap());
        assert!(a.iter().all(|v| (v - 1.0).abs() <= 0.2));
    }

    #[test]
    fn bias_above_switching_current_rejected() {
        let cfg = ScenarioConfig { bias_ua: 30.0, ..ScenarioConfig::default() };
        match cfg.resolve() {
            Err(Error::Scenario { path, .. }) => assert_eq!(path, "bias_ua"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sync_channel_must_not_collide() {
        let cfg = ScenarioConfig { source: SourceModel::pulsed(20.0, 10), ..ScenarioConfig::default() };
        assert!(cfg.resolve().is_err());
    }
}
