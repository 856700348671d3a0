use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates measured at one bias setting: illuminated total array rate and the
/// matching dark-run rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub bias_ua: f64,
    pub count_rate: f64,
    pub dark_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurvePoint {
    pub bias_ua: f64,
    /// Dark-subtracted photon count rate.
    pub pcr_cps: f64,
    pub pcr_normalized: f64,
    pub dcr_cps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurve {
    pub points: Vec<BiasCurvePoint>,
    /// Mean PCR of the three highest bias points.
    pub plateau_cps: f64,
}

impl BiasCurve {
    pub fn at(&self, bias_ua: f64) -> Option<&BiasCurvePoint> {
        self.points.iter().find(|p| (p.bias_ua - bias_ua).abs() < 1e-9)
    }
}

const PLATEAU_POINTS: usize = 3;

/// Normalized photon count rate and absolute dark count rate versus bias.
pub fn bias_sweep(points: &[BiasPoint]) -> Result<BiasCurve> {
    if points.len() < 2 {
        return Err(Error::domain("a bias sweep needs at least two points"));
    }
    if points.iter().any(|p| !(p.bias_ua.is_finite() && p.count_rate >= 0.0 && p.dark_rate >= 0.0)) {
        return Err(Error::domain("bias points need finite bias and non-negative rates"));
    }
    if points.iter().all(|p| p.count_rate == 0.0 && p.dark_rate == 0.0) {
        return Err(Error::Degenerate("all bias points have zero counts".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.bias_ua.total_cmp(&b.bias_ua));
    let top = &sorted[sorted.len().saturating_sub(PLATEAU_POINTS)..];
    let plateau_cps = top.iter().map(|p| p.count_rate - p.dark_rate).sum::<f64>() / top.len() as f64;
    if !(plateau_cps > 0.0) {
        return Err(Error::Degenerate(format!(
            "photon count plateau is {plateau_cps:.3} cps; illuminated runs show no signal above dark"
        )));
    }
    let points = sorted
        .iter()
        .map(|p| {
            let pcr = p.count_rate - p.dark_rate;
            BiasCurvePoint { bias_ua: p.bias_ua, pcr_cps: pcr, pcr_normalized: pcr / plateau_cps, dcr_cps: p.dark_rate }
        })
        .collect();
    Ok(BiasCurve { points, plateau_cps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::PixelModel;

    fn model_points() -> Vec<BiasPoint> {
        let m = PixelModel::nominal(0);
        (10..=23)
            .map(|b| {
                let b = b as f64;
                let dark = m.dark_rate(b).unwrap();
                BiasPoint { bias_ua: b, count_rate: 1e6 * m.internal_efficiency(b).unwrap() + dark, dark_rate: dark }
            })
            .collect()
    }

    #[test]
    fn normalizes_to_top_three() {
        let c = bias_sweep(&model_points()).unwrap();
        let top: f64 = c.points[11..].iter().map(|p| p.pcr_cps).sum::<f64>() / 3.0;
        assert!((c.plateau_cps - top).abs() < 1e-6);
        assert!(c.at(21.0).unwrap().pcr_normalized >= 0.99);
        assert!(c.at(10.0).unwrap().pcr_normalized < 0.01);
        let ratio = c.at(23.0).unwrap().dcr_cps / c.at(21.0).unwrap().dcr_cps;
        assert!(ratio > 5.0, "{ratio}");
    }

    #[test]
    fn input_order_irrelevant() {
        let mut pts = model_points();
        let a = bias_sweep(&pts).unwrap();
        pts.reverse();
        assert_eq!(a, bias_sweep(&pts).unwrap());
    }

    #[test]
    fn dark_only_input_is_degenerate() {
        let pts: Vec<BiasPoint> =
            model_points().into_iter().map(|p| BiasPoint { count_rate: p.dark_rate, ..p }).collect();
        assert!(matches!(bias_sweep(&pts), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_counts_and_short_sweeps_rejected() {
        let zero = [BiasPoint { bias_ua: 1.0, count_rate: 0.0, dark_rate: 0.0 }; 3];
        assert!(matches!(bias_sweep(&zero), Err(Error::Degenerate(_))));
        assert!(matches!(bias_sweep(&zero[..1]), Err(Error::Domain(_))));
    }
}
