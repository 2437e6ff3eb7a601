//! Spherical geometry on ICRS coordinates, all angles in degrees.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("coordinate out of domain: {0}")]
pub struct DomainError(pub String);

/// Great-circle separation by the haversine formula, in `[0, 180]`.
///
/// Well conditioned for small separations, which is where cone searches
/// make their decisions.
pub fn angular_separation(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> Result<f64, DomainError> {
    for (name, v) in [("ra1", ra1), ("ra2", ra2)] {
        if !v.is_finite() {
            return Err(DomainError(format!("{name} = {v}")));
        }
    }
    for (name, v) in [("dec1", dec1), ("dec2", dec2)] {
        if !(-90.0..=90.0).contains(&v) {
            return Err(DomainError(format!("{name} = {v} outside [-90, 90]")));
        }
    }
    Ok(haversine_deg(ra1, dec1, ra2, dec2))
}

/// Unchecked haversine; callers guarantee finite inputs and valid declinations.
///
/// `2 asin(sqrt(h))` loses half its digits as `h` approaches 1, so the angle
/// is taken as `2 atan2(sqrt(h), sqrt(1 - h))` with `1 - h` expanded into a
/// sum of non-negative terms, which keeps near-antipodal pairs accurate.
pub(crate) fn haversine_deg(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let (d1, d2) = (dec1.to_radians(), dec2.to_radians());
    let half_ddec = (d2 - d1) / 2.0;
    let half_sdec = (d2 + d1) / 2.0;
    let half_dra = (ra2 - ra1).to_radians() / 2.0;
    let sin2_dra = half_dra.sin().powi(2);
    let h = half_ddec.sin().powi(2) + d1.cos() * d2.cos() * sin2_dra;
    let one_minus_h = half_ddec.cos().powi(2) * half_dra.cos().powi(2) + half_sdec.sin().powi(2) * sin2_dra;
    let theta = 2.0 * h.max(0.0).sqrt().atan2(one_minus_h.max(0.0).sqrt());
    theta.to_degrees().clamp(0.0, 180.0)
}
