//! Parametric response model of the array: beam overlap with each pixel,
//! bias-dependent efficiency and dark counts, and the resulting count rates.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Rect};

/// Nominal operating bias.
pub const NOMINAL_BIAS_UA: f64 = 21.0;

/// Plateau system efficiency at parallel polarization. Calibrated so that the
/// focused-spot, total-array-count SPDE measurement recovers 77.7 % at the
/// nominal bias on the default geometry.
pub const DEFAULT_ETA_SYSTEM_MAX: f64 = 0.820;
pub const DEFAULT_ETA_SPREAD: f64 = 0.006;
/// Ratio of perpendicular to parallel system efficiency (73.7 / 77.7).
pub const DEFAULT_POLARIZATION_CONTRAST: f64 = 73.7 / 77.7;
pub const DEFAULT_DEAD_TIME_NS: f64 = 49.6;
pub const DEFAULT_DEAD_TIME_SPREAD_NS: f64 = 2.0;
pub const DEFAULT_JITTER_FWHM_PS: f64 = 85.0;

/// Standard normal CDF.
pub(crate) fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability mass of a unit normal in `[a, b]`, accurate in both tails.
pub(crate) fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        // both in the upper tail: Q(a) - Q(b)
        (phi(-a) - phi(-b)).max(0.0)
    } else if b <= 0.0 {
        (phi(b) - phi(a)).max(0.0)
    } else {
        1.0 - phi(a) - phi(-b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    #[default]
    Parallel,
    Perpendicular,
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Polarization::Parallel => f.write_str("parallel"),
            Polarization::Perpendicular => f.write_str("perpendicular"),
        }
    }
}

/// Per-pixel detector parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelModel {
    pub channel: usize,
    pub eta_system_max: f64,
    pub i_turn_on_ua: f64,
    pub i_width_ua: f64,
    pub dcr_base_cps: f64,
    pub dcr_knee_ua: f64,
    pub dcr_scale_ua: f64,
    /// Amplitude of the exponential dark-count term at the knee current.
    pub dcr_knee_rate_cps: f64,
    pub dead_time_ns: f64,
    pub jitter_fwhm_ps: f64,
    pub i_switch_ua: f64,
}

impl PixelModel {
    /// Default parameters: sigmoid turn-on at 15 uA (width 2 uA) so the
    /// plateau is reached by 21 uA, and a dark-count floor of 5 cps plus an
    /// exponential knee at 22 uA with a 0.5 uA scale, giving 20 cps at 21 uA.
    pub fn nominal(channel: usize) -> Self {
        Self {
            channel,
            eta_system_max: DEFAULT_ETA_SYSTEM_MAX,
            i_turn_on_ua: 15.0,
            i_width_ua: 2.0,
            dcr_base_cps: 5.0,
            dcr_knee_ua: 22.0,
            dcr_scale_ua: 0.5,
            dcr_knee_rate_cps: 15.0 * (2.0f64).exp(),
            dead_time_ns: DEFAULT_DEAD_TIME_NS,
            jitter_fwhm_ps: DEFAULT_JITTER_FWHM_PS,
            i_switch_ua: 24.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ch = self.channel;
        if !(0.0..=1.0).contains(&self.eta_system_max) {
            return Err(Error::domain(format!("pixel {ch}: eta_system_max must lie in [0, 1]")));
        }
        if !(self.dead_time_ns > 0.0) {
            return Err(Error::domain(format!("pixel {ch}: dead time must be positive")));
        }
        if !(self.jitter_fwhm_ps > 0.0) {
            return Err(Error::domain(format!("pixel {ch}: jitter FWHM must be positive")));
        }
        if !(self.i_width_ua > 0.0 && self.dcr_scale_ua > 0.0) {
            return Err(Error::domain(format!("pixel {ch}: current scales must be positive")));
        }
        if !(self.dcr_base_cps >= 0.0 && self.dcr_knee_rate_cps >= 0.0) {
            return Err(Error::domain(format!("pixel {ch}: dark rates must be non-negative")));
        }
        if !(0.0 < self.i_turn_on_ua
            && self.i_turn_on_ua < self.dcr_knee_ua
            && self.dcr_knee_ua <= self.i_switch_ua)
        {
            return Err(Error::domain(format!(
                "pixel {ch}: require 0 < i_turn_on < dcr_knee <= i_switch"
            )));
        }
        Ok(())
    }

    fn check_bias(&self, bias_ua: f64) -> Result<()> {
        if bias_ua > self.i_switch_ua {
            return Err(Error::Latched { bias_ua, i_switch_ua: self.i_switch_ua });
        }
        if !(bias_ua >= 0.0) {
            return Err(Error::domain(format!("bias must be non-negative, got {bias_ua}")));
        }
        Ok(())
    }

    /// Relative internal detection efficiency, an error-function sigmoid
    /// centred on `i_turn_on`.
    pub fn internal_efficiency(&self, bias_ua: f64) -> Result<f64> {
        self.check_bias(bias_ua)?;
        Ok(phi((bias_ua - self.i_turn_on_ua) / self.i_width_ua))
    }

    /// Dark count rate in counts per second.
    pub fn dark_rate(&self, bias_ua: f64) -> Result<f64> {
        self.check_bias(bias_ua)?;
        Ok(self.dcr_base_cps
            + self.dcr_knee_rate_cps * ((bias_ua - self.dcr_knee_ua) / self.dcr_scale_ua).exp())
    }

    /// Jitter standard deviation for a Gaussian with this FWHM.
    pub fn jitter_sigma_ps(&self) -> f64 {
        fwhm_to_sigma(self.jitter_fwhm_ps)
    }
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * 2.0 * (2.0 * std::f64::consts::LN_2).sqrt()
}

/// Free-space optics between the fibre and the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalPath {
    /// Window, 1600 nm short-pass, 1900 nm short-pass, 1550 nm band-pass, lens.
    pub element_transmissions: Vec<f64>,
    pub polarization_contrast: f64,
}

impl Default for OpticalPath {
    fn default() -> Self {
        Self {
            element_transmissions: vec![0.99, 0.97, 0.97, 0.97, 0.99],
            polarization_contrast: DEFAULT_POLARIZATION_CONTRAST,
        }
    }
}

impl OpticalPath {
    pub fn validate(&self) -> Result<()> {
        if self.element_transmissions.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::domain("optical transmissions must lie in (0, 1]"));
        }
        if !(self.polarization_contrast > 0.0 && self.polarization_contrast <= 1.0) {
            return Err(Error::domain("polarization contrast must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Product of element transmissions. Already folded into
    /// `eta_system_max`; reported for loss budgets.
    pub fn total_transmission(&self) -> f64 {
        self.element_transmissions.iter().product()
    }

    pub fn polarization_factor(&self, polarization: Polarization) -> f64 {
        match polarization {
            Polarization::Parallel => 1.0,
            Polarization::Perpendicular => self.polarization_contrast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BeamShape {
    /// Gaussian spot; `diameter_1e2_um` is the 1/e^2 intensity diameter.
    Gaussian { center_um: (f64, f64), diameter_1e2_um: f64 },
    /// Uniform illumination over `rect_um`.
    Flood { rect_um: Rect },
}

// `deny_unknown_fields` lives on `BeamShape`: serde does not support it
// alongside `flatten` on the outer struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamProfile {
    #[serde(flatten)]
    pub shape: BeamShape,
    /// Photons per second.
    pub flux: f64,
    #[serde(default)]
    pub polarization: Polarization,
}

impl BeamProfile {
    pub fn gaussian(center_um: (f64, f64), diameter_1e2_um: f64, flux: f64) -> Self {
        Self {
            shape: BeamShape::Gaussian { center_um, diameter_1e2_um },
            flux,
            polarization: Polarization::Parallel,
        }
    }

    pub fn flood(rect_um: Rect, flux: f64) -> Self {
        Self { shape: BeamShape::Flood { rect_um }, flux, polarization: Polarization::Parallel }
    }

    pub fn with_polarization(mut self, polarization: Polarization) -> Self {
        self.polarization = polarization;
        self
    }

    pub fn with_flux(mut self, flux: f64) -> Self {
        self.flux = flux;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flux >= 0.0) || !self.flux.is_finite() {
            return Err(Error::domain("beam flux must be finite and non-negative"));
        }
        match &self.shape {
            BeamShape::Gaussian { diameter_1e2_um, .. } if !(*diameter_1e2_um > 0.0) => {
                Err(Error::domain("gaussian beam diameter must be positive"))
            }
            BeamShape::Flood { rect_um } if !(rect_um.width() > 0.0 && rect_um.height() > 0.0) => {
                Err(Error::domain("flood rectangle must have positive area"))
            }
            _ => Ok(()),
        }
    }

    /// Fraction of the beam power falling inside `rect`.
    pub fn power_in(&self, rect: &Rect) -> f64 {
        match &self.shape {
            BeamShape::Gaussian { center_um, diameter_1e2_um } => {
                let sigma = diameter_1e2_um / 4.0;
                let px = normal_interval((rect.x0 - center_um.0) / sigma, (rect.x1 - center_um.0) / sigma);
                let py = normal_interval((rect.y0 - center_um.1) / sigma, (rect.y1 - center_um.1) / sigma);
                px * py
            }
            BeamShape::Flood { rect_um } => rect_um.intersection_area(rect) / rect_um.area(),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let shape = match &self.shape {
            BeamShape::Gaussian { center_um, diameter_1e2_um } => BeamShape::Gaussian {
                center_um: (center_um.0 + dx, center_um.1 + dy),
                diameter_1e2_um: *diameter_1e2_um,
            },
            BeamShape::Flood { rect_um } => BeamShape::Flood { rect_um: rect_um.translated(dx, dy) },
        };
        Self { shape, ..self.clone() }
    }
}

/// Fraction of beam power landing on the pixel's active rectangle.
pub fn absorption_fraction(geometry: &ArrayGeometry, pixel: usize, beam: &BeamProfile) -> Result<f64> {
    let rect = geometry.active_rect(pixel)?;
    Ok(beam.power_in(&rect))
}

/// Active-area fraction plus the wire-efficiency-weighted share of the
/// surrounding gap region.
pub fn effective_absorption(geometry: &ArrayGeometry, pixel: usize, beam: &BeamProfile) -> Result<f64> {
    let active = absorption_fraction(geometry, pixel, beam)?;
    if geometry.wire_efficiency == 0.0 {
        return Ok(active);
    }
    let cell = beam.power_in(&geometry.cell_rect(pixel)?);
    Ok(active + geometry.wire_efficiency * (cell - active).max(0.0))
}

/// Expected photon-induced count rate (cps), excluding dark counts and
/// before dead-time compression.
pub fn expected_photon_rate(
    geometry: &ArrayGeometry,
    pixel: &PixelModel,
    optics: &OpticalPath,
    beam: &BeamProfile,
    bias_ua: f64,
) -> Result<f64> {
    let absorbed = effective_absorption(geometry, pixel.channel, beam)?;
    Ok(beam.flux
        * absorbed
        * pixel.eta_system_max
        * pixel.internal_efficiency(bias_ua)?
        * optics.polarization_factor(beam.polarization))
}

/// Expected total count rate of a pixel: photon counts plus dark counts.
pub fn expected_pixel_rate(
    geometry: &ArrayGeometry,
    pixel: &PixelModel,
    optics: &OpticalPath,
    beam: &BeamProfile,
    bias_ua: f64,
) -> Result<f64> {
    Ok(expected_photon_rate(geometry, pixel, optics, beam, bias_ua)? + pixel.dark_rate(bias_ua)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::default()
    }

    /// Midpoint-rule 2-D integral of the Gaussian intensity over a rectangle.
    fn numeric_power(cx: f64, cy: f64, d: f64, r: &Rect) -> f64 {
        let w = d / 2.0;
        let n = 800;
        let (dx, dy) = (r.width() / n as f64, r.height() / n as f64);
        let norm = 2.0 / (std::f64::consts::PI * w * w);
        let mut acc = 0.0;
        for i in 0..n {
            let x = r.x0 + (i as f64 + 0.5) * dx;
            for j in 0..n {
                let y = r.y0 + (j as f64 + 0.5) * dy;
                let rr = (x - cx).powi(2) + (y - cy).powi(2);
                acc += norm * (-2.0 * rr / (w * w)).exp();
            }
        }
        acc * dx * dy
    }

    #[test]
    fn flood_over_array_gives_area_ratio() {
        let g = geom();
        let beam = BeamProfile::flood(g.footprint(), 1.0);
        for p in 0..64 {
            let f = absorption_fraction(&g, p, &beam).unwrap();
            assert_relative_eq!(f, 27.8 * 27.5 / 240.0f64.powi(2), epsilon = 1e-12);
        }
        let total: f64 = (0..64).map(|p| absorption_fraction(&g, p, &beam).unwrap()).sum();
        assert_relative_eq!(total, g.fill_factor(), epsilon = 1e-6);
    }

    #[test]
    fn far_gaussian_is_negligible() {
        let g = geom();
        let beam = BeamProfile::gaussian((1240.0, 120.0), 27.0, 1.0);
        for p in 0..64 {
            assert!(absorption_fraction(&g, p, &beam).unwrap() < 1e-12);
        }
    }

    #[test]
    fn focused_spot_matches_numeric_integration() {
        let g = geom();
        let (cx, cy) = g.pixel_center(27).unwrap();
        let beam = BeamProfile::gaussian((cx, cy), 27.0, 1.0);
        let analytic = absorption_fraction(&g, 27, &beam).unwrap();
        let oracle = numeric_power(cx, cy, 27.0, &g.active_rect(27).unwrap());
        assert_relative_eq!(analytic, oracle, epsilon = 1e-5);
        assert!((analytic - 0.92).abs() < 0.005, "{analytic}");
    }

    #[test]
    fn invalid_pixel_is_domain_error() {
        let beam = BeamProfile::flood(geom().footprint(), 1.0);
        assert!(matches!(absorption_fraction(&geom(), 64, &beam), Err(Error::InvalidPixel { .. })));
    }

    #[test]
    fn efficiency_curve_shape() {
        let p = PixelModel::nominal(0);
        assert!(p.internal_efficiency(0.0).unwrap() < 1e-6);
        assert!(p.internal_efficiency(NOMINAL_BIAS_UA).unwrap() >= 0.99);
        assert_relative_eq!(p.internal_efficiency(p.i_turn_on_ua).unwrap(), 0.5, epsilon = 1e-12);
        assert!(matches!(p.internal_efficiency(24.5), Err(Error::Latched { .. })));
    }

    #[test]
    fn dark_rate_values() {
        let p = PixelModel::nominal(0);
        assert_relative_eq!(p.dark_rate(21.0).unwrap(), 20.0, epsilon = 1e-9);
        assert_relative_eq!(p.dark_rate(0.0).unwrap(), p.dcr_base_cps, epsilon = 1e-12);
        let at = p.dcr_knee_ua + 2.0 * p.dcr_scale_ua;
        assert_relative_eq!(
            p.dark_rate(at).unwrap(),
            p.dcr_base_cps + 2.0f64.exp() * p.dcr_knee_rate_cps,
            max_relative = 1e-12
        );
        assert!(p.dark_rate(23.0).unwrap() >= 10.0 * p.dark_rate(21.0).unwrap());
    }

    #[test]
    fn zero_flux_rate_is_dark_rate() {
        let g = geom();
        let p = PixelModel::nominal(3);
        let beam = BeamProfile::flood(g.footprint(), 0.0);
        let r = expected_pixel_rate(&g, &p, &OpticalPath::default(), &beam, 21.0).unwrap();
        assert_eq!(r, p.dark_rate(21.0).unwrap());
    }

    #[test]
    fn polarization_ratio() {
        let g = geom();
        let optics = OpticalPath::default();
        let beam = BeamProfile::flood(g.footprint(), 1e6);
        let total = |b: &BeamProfile| -> f64 {
            (0..64)
                .map(|c| expected_photon_rate(&g, &PixelModel::nominal(c), &optics, b, 21.0).unwrap())
                .sum()
        };
        let par = total(&beam);
        let perp = total(&beam.clone().with_polarization(Polarization::Perpendicular));
        assert_relative_eq!(perp / par, 73.7 / 77.7, epsilon = 1e-12);
    }

    #[test]
    fn edge_pixels_lose_spill() {
        let g = geom();
        let captured = |p: usize| {
            let (cx, cy) = g.pixel_center(p).unwrap();
            let b = BeamProfile::gaussian((cx, cy), 27.0, 1.0);
            (0..64).map(|q| absorption_fraction(&g, q, &b).unwrap()).sum::<f64>()
        };
        let center = captured(27);
        assert!(captured(0) < captured(3));
        assert!(captured(3) < center);
    }

    #[test]
    fn wire_efficiency_adds_gap_light() {
        let g = ArrayGeometry { wire_efficiency: 0.5, ..geom() };
        let beam = BeamProfile::flood(g.footprint(), 1.0);
        let f = effective_absorption(&g, 5, &beam).unwrap();
        let cell = 900.0 / 57600.0;
        let active = 27.8 * 27.5 / 57600.0;
        assert_relative_eq!(f, active + 0.5 * (cell - active), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn gaussian_total_at_most_one(x in -100.0f64..340.0, y in -100.0f64..340.0, d in 1.0f64..600.0) {
            let g = geom();
            let b = BeamProfile::gaussian((x, y), d, 1.0);
            let s: f64 = (0..64).map(|p| absorption_fraction(&g, p, &b).unwrap()).sum();
            prop_assert!(s <= 1.0 + 1e-12);
            prop_assert!(s >= 0.0);
        }

        #[test]
        fn translation_equivariance(x in 0.0f64..240.0, y in 0.0f64..240.0, d in 5.0f64..300.0,
                                    dx in -500.0f64..500.0, dy in -500.0f64..500.0, p in 0usize..64) {
            let g = geom();
            let moved = ArrayGeometry { origin_um: (g.origin_um.0 + dx, g.origin_um.1 + dy), ..g.clone() };
            let b = BeamProfile::gaussian((x, y), d, 1.0);
            let a = absorption_fraction(&g, p, &b).unwrap();
            let m = absorption_fraction(&moved, p, &b.translated(dx, dy)).unwrap();
            prop_assert!((a - m).abs() < 1e-9);
        }

        #[test]
        fn rate_affine_in_flux(flux in 0.0f64..1e9, p in 0usize..64, bias in 0.0f64..24.0) {
            let g = geom();
            let px = PixelModel::nominal(p);
            let o = OpticalPath::default();
            let beam = BeamProfile::flood(g.footprint(), 1.0);
            let unit = expected_photon_rate(&g, &px, &o, &beam, bias).unwrap();
            let r = expected_pixel_rate(&g, &px, &o, &beam.with_flux(flux), bias).unwrap();
            let expect = flux * unit + px.dark_rate(bias).unwrap();
            prop_assert!((r - expect).abs() <= 1e-9 * expect.max(1.0));
        }

        #[test]
        fn efficiency_and_dark_monotone(a in 0.0f64..24.0, b in 0.0f64..24.0) {
            let p = PixelModel::nominal(0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(p.internal_efficiency(lo).unwrap() <= p.internal_efficiency(hi).unwrap());
            prop_assert!(p.dark_rate(lo).unwrap() <= p.dark_rate(hi).unwrap());
        }
    }
}
