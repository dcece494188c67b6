//! Expected per-coordinate noise magnitude `E|z_i|`, the SNR objective and
//! the ℓ1/ℓ2 clipping-volume ratio.
//!
//! Distortion is always *per coordinate*. For Γ-PLRV noise it is
//! `1/((k-1) theta)` and does not involve the clip `C` at all (the clip
//! enters only through accounting); for the Gaussian mechanism the noise
//! standard deviation is `C sigma`, so its distortion `C sigma sqrt(2/pi)`
//! scales with `C`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_decaying, log_gamma};
use crate::params::{GammaPlrvParams, GaussianParams, MechanismKind};

/// Expected absolute value of one noise coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub mechanism: MechanismKind,
    /// `E|z_i|`; `inf` when the expectation diverges.
    #[serde(with = "crate::io::extended_f64")]
    pub per_coordinate_l1: f64,
    pub finite: bool,
}

impl DistortionReport {
    pub fn csv_header() -> &'static str {
        "mechanism,l1_per_coord,finite"
    }

    /// One CSV row matching [`DistortionReport::csv_header`].
    pub fn csv_row(&self) -> String {
        let value = if self.finite {
            self.per_coordinate_l1.to_string()
        } else {
            "inf".to_string()
        };
        format!("{},{},{}", self.mechanism, value, self.finite)
    }
}

/// `1/((k-1) theta)` for `k > 1`; reported as non-finite otherwise.
pub fn plrv_distortion(params: &GammaPlrvParams) -> DistortionReport {
    if params.has_finite_distortion() {
        DistortionReport {
            mechanism: MechanismKind::Plrvo,
            per_coordinate_l1: 1.0 / ((params.k() - 1.0) * params.theta()),
            finite: true,
        }
    } else {
        DistortionReport {
            mechanism: MechanismKind::Plrvo,
            per_coordinate_l1: f64::INFINITY,
            finite: false,
        }
    }
}

/// `E|z| = int_0^inf M_u(-z) dz = int_0^inf (1 + z theta)^(-k) dz`, by
/// quadrature. Independent check of [`plrv_distortion`].
pub fn plrv_distortion_by_quadrature(params: &GammaPlrvParams) -> Result<f64> {
    if !params.has_finite_distortion() {
        return Err(Error::NonConvergence { panels: 0 });
    }
    let (k, theta) = (params.k(), params.theta());
    // Substituting s = z theta keeps the integrand's scale near one.
    let s = integrate_decaying(|s| (-k * s.ln_1p()).exp(), 0.0)?;
    Ok(s / theta)
}

/// Half-normal mean of the noise `N(0, (C sigma)^2)`: `C sigma sqrt(2/pi)`.
pub fn gaussian_distortion(params: &GaussianParams, clip: f64) -> f64 {
    clip * params.sigma() * (2.0 / PI).sqrt()
}

/// Gaussian distortion as a report.
pub fn gaussian_distortion_report(params: &GaussianParams, clip: f64) -> DistortionReport {
    DistortionReport {
        mechanism: MechanismKind::Gaussian,
        per_coordinate_l1: gaussian_distortion(params, clip),
        finite: true,
    }
}

/// Clip-to-distortion ratio `J = C (k-1) theta`.
pub fn snr(params: &GammaPlrvParams, clip: f64) -> Result<f64> {
    if !params.has_finite_distortion() {
        return Err(Error::domain(
            "snr",
            format!("distortion diverges for k = {} <= 1", params.k()),
        ));
    }
    Ok(clip * (params.k() - 1.0) * params.theta())
}

/// `ln(V_l1 / V_l2)` for the radius-`C` balls in `n` dimensions:
/// `n ln(2/sqrt(pi)) + ln Gamma(n/2 + 1) - ln Gamma(n + 1)`.
pub fn l1_l2_volume_log_ratio(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("l1_l2_volume_log_ratio", "dimension must be at least 1"));
    }
    let n = n as f64;
    Ok(n * (2.0 / PI.sqrt()).ln() + log_gamma(n / 2.0 + 1.0)? - log_gamma(n + 1.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma(k: f64, theta: f64) -> GammaPlrvParams {
        GammaPlrvParams::new(k, theta).unwrap()
    }

    #[test]
    fn table2_values() {
        assert!((plrv_distortion(&gamma(141.06, 8.32e-4)).per_coordinate_l1 - 8.58).abs() < 0.01);
        assert!((plrv_distortion(&gamma(5242.4, 2.08e-5)).per_coordinate_l1 - 9.17).abs() < 0.01);
        let g = |s| GaussianParams::new(s).unwrap();
        assert!((gaussian_distortion(&g(0.9456), 5.0) - 3.77).abs() < 0.01);
        assert!((gaussian_distortion(&g(1.8812), 15.0) - 22.51).abs() < 0.01);
    }

    #[test]
    fn divergent_shape() {
        let r = plrv_distortion(&gamma(1.0, 0.3));
        assert!(!r.finite);
        assert_eq!(r.csv_row(), "plrvo,inf,false");
        assert!(plrv_distortion_by_quadrature(&gamma(0.5, 1.0)).is_err());
        assert!(snr(&gamma(1.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form() {
        assert!((plrv_distortion_by_quadrature(&gamma(2.0, 1.0)).unwrap() - 1.0).abs() < 1e-9);
        assert!((plrv_distortion_by_quadrature(&gamma(10.0, 0.01)).unwrap() - 100.0 / 9.0).abs() < 1e-8);
        let q = plrv_distortion_by_quadrature(&gamma(141.06, 8.32e-4)).unwrap();
        assert!((q - 8.58).abs() < 0.01);
    }

    #[test]
    fn snr_values() {
        assert_eq!(snr(&gamma(2.0, 1.0), 1.0).unwrap(), 1.0);
        let p = gamma(141.06, 8.32e-4);
        let j = snr(&p, 10.0).unwrap();
        assert!((j - 10.0 / plrv_distortion(&p).per_coordinate_l1).abs() < 1e-12 * j);
        assert_eq!(snr(&p, 20.0).unwrap(), 2.0 * j);
    }

    #[test]
    fn volume_ratio() {
        assert!(l1_l2_volume_log_ratio(1).unwrap().abs() < 1e-14);
        assert!((l1_l2_volume_log_ratio(2).unwrap() - (2.0 / PI).ln()).abs() < 1e-13);
        let mut prev = l1_l2_volume_log_ratio(2).unwrap();
        for n in 3..300 {
            let v = l1_l2_volume_log_ratio(n).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(l1_l2_volume_log_ratio(0).is_err());
    }

    #[test]
    fn report_json() {
        let r = plrv_distortion(&gamma(1.0, 1.0));
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(
            text,
            r#"{"mechanism":"plrvo","per_coordinate_l1":"inf","finite":false}"#
        );
    }
}
