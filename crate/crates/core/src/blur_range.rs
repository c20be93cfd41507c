//! Depth-of-field limits and the distances at which an object is guaranteed to
//! look blurred through a tunable lens, plus the inverse problem: the least
//! lens power that blurs an object at a given distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::EyeModel;
use crate::root::bisect_predicate;
use crate::units::mm_inv_to_diopters;

/// Objects closer than this cannot be illuminated by the projector; planning
/// below it is rejected.
pub const MIN_PLANNING_DISTANCE: f64 = 80.0;

/// Search bracket for [`min_blur_power`] (mm⁻¹).
pub const MIN_BLUR_POWER_BRACKET: (f64, f64) = (1e-6, 0.012);

/// One side of the depth of field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "mm", rename_all = "snake_case")]
pub enum DofLimit {
    Finite(f64),
    /// The depth of field extends past infinity (far side) or past the lens
    /// (near side).
    Unbounded,
}

impl DofLimit {
    pub fn finite(self) -> Option<f64> {
        match self {
            DofLimit::Finite(d) => Some(d),
            DofLimit::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, DofLimit::Unbounded)
    }
}

/// Far and near limits of the depth of field for one eye/ETL state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofBorders {
    /// Far limit: the larger distance at which the CoC reaches the acceptable size.
    pub far: DofLimit,
    /// Near limit.
    pub near: DofLimit,
}

/// Distances beyond which (far) or within which (near) an object blurs for
/// every accommodation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurBorders {
    pub near_border: DofLimit,
    pub far_border: f64,
}

impl BlurBorders {
    /// Whether an object at `d` mm is blurred under every accommodation state.
    pub fn blurs(&self, d: f64) -> bool {
        d > self.far_border || self.near_border.finite().is_some_and(|near| d < near)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite input in {values:?}")))
    }
}

/// One closed-form DOF root. `sign = +1` solves for signed defocus `+D_r^a/D_e`
/// (the near limit), `sign = -1` for `-D_r^a/D_e` (the far limit).
fn dof_root(eye: &EyeModel, d_ee: f64, p_etl: f64, p_eye: f64, sign: f64) -> DofLimit {
    let d_e = eye.pupil_diameter;
    let d_er = eye.lens_retina_distance;
    let coc = eye.acceptable_coc;
    let k = d_ee * d_er * p_eye - d_ee - d_er;
    let num = d_e * k + sign * d_ee * coc;
    let den = d_e * (p_etl * k - d_er * p_eye + 1.0) + sign * coc * (d_ee * p_etl - 1.0);
    if den.abs() < 1e-15 {
        return DofLimit::Unbounded;
    }
    let d = num / den;
    if d.is_finite() && d > 0.0 {
        DofLimit::Finite(d)
    } else {
        DofLimit::Unbounded
    }
}

/// Both depth-of-field limits for the given ETL power and eye power.
pub fn dof_borders(eye: &EyeModel, d_ee: f64, p_etl: f64, p_eye: f64) -> Result<DofBorders> {
    check_finite(&[d_ee, p_etl, p_eye, eye.pupil_diameter, eye.lens_retina_distance, eye.acceptable_coc])?;
    if p_etl < 0.0 {
        return Err(Error::Domain(format!("ETL power must be non-negative, got {p_etl}")));
    }
    Ok(DofBorders {
        far: dof_root(eye, d_ee, p_etl, p_eye, -1.0),
        near: dof_root(eye, d_ee, p_etl, p_eye, 1.0),
    })
}

/// Far limit with a relaxed eye, or `None` when it is unbounded.
pub fn far_border(eye: &EyeModel, d_ee: f64, p_etl: f64) -> Option<f64> {
    dof_root(eye, d_ee, p_etl, eye.far_power, -1.0).finite()
}

/// Near and far blur borders for ETL power `p_etl > 0`.
pub fn blur_borders(eye: &EyeModel, d_ee: f64, p_etl: f64) -> Result<BlurBorders> {
    if !(p_etl > 0.0) {
        return Err(Error::Domain(format!("blur borders need a positive ETL power, got {p_etl}")));
    }
    let far = dof_borders(eye, d_ee, p_etl, eye.far_power)?.far;
    let near = dof_borders(eye, d_ee, p_etl, eye.near_power)?.near;
    match far {
        DofLimit::Finite(far_border) => Ok(BlurBorders {
            near_border: near,
            far_border,
        }),
        DofLimit::Unbounded => Err(Error::CannotBlur {
            power_diopters: mm_inv_to_diopters(p_etl),
        }),
    }
}

/// Least ETL power (mm⁻¹) whose far border lies at or before `d_oe`.
pub fn min_blur_power(eye: &EyeModel, d_ee: f64, d_oe: f64) -> Result<f64> {
    if !(d_oe.is_finite() && d_oe >= MIN_PLANNING_DISTANCE) {
        return Err(Error::Domain(format!(
            "object distance {d_oe} mm is below the planning limit of {MIN_PLANNING_DISTANCE} mm"
        )));
    }
    let blurs = |p: f64| far_border(eye, d_ee, p).is_some_and(|f| f <= d_oe);
    let (lo, hi) = MIN_BLUR_POWER_BRACKET;
    if blurs(lo) {
        return Ok(lo);
    }
    if !blurs(hi) {
        return Err(Error::Domain(format!(
            "object at {d_oe} mm needs more than {} D to blur",
            mm_inv_to_diopters(hi)
        )));
    }
    Ok(bisect_predicate(blurs, lo, hi))
}
