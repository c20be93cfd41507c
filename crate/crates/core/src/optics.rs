//! Paraxial ray-transfer-matrix algebra and the blur-circle model of a point
//! seen through a tunable lens worn in front of the eye.
//!
//! The eye is a single thin lens followed by the retina. Rays are `(x, u)`
//! pairs (height in mm, paraxial angle in rad) and every optical element is a
//! 2×2 ABCD matrix. The full chain from an object point to the retina is
//!
//! ```text
//! T(d_er) · R(P_e) · T(d_Ee) · R(P_E) · T(d_oE)
//! ```
//!
//! applied right to left.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::ARCMIN;

/// Threshold below which the pupil-imaging denominator is treated as zero.
const SINGULAR_EPS: f64 = 1e-12;

/// Paraxial ray state at a reference plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    /// Height above the optical axis (mm).
    pub x: f64,
    /// Angle to the axis (rad).
    pub u: f64,
}

impl RayState {
    pub fn new(x: f64, u: f64) -> Self {
        Self { x, u }
    }
}

/// A 2×2 paraxial ray-transfer matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl TransferMatrix {
    pub const IDENTITY: TransferMatrix = TransferMatrix {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, ray: RayState) -> RayState {
        RayState {
            x: self.a * ray.x + self.b * ray.u,
            u: self.c * ray.x + self.d * ray.u,
        }
    }
}

impl Mul for TransferMatrix {
    type Output = TransferMatrix;

    fn mul(self, rhs: TransferMatrix) -> TransferMatrix {
        compose(self, rhs)
    }
}

/// Propagation through `d` mm of free space.
pub fn free_space(d: f64) -> Result<TransferMatrix> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::Domain(format!(
            "free-space distance must be finite and non-negative, got {d}"
        )));
    }
    Ok(TransferMatrix::new(1.0, d, 0.0, 1.0))
}

/// Refraction by a thin lens of power `p` (mm⁻¹).
pub fn thin_lens(p: f64) -> Result<TransferMatrix> {
    if !p.is_finite() {
        return Err(Error::Domain(format!("lens power must be finite, got {p}")));
    }
    Ok(TransferMatrix::new(1.0, 0.0, -p, 1.0))
}

/// Matrix product `outer · inner`: `inner` acts on the ray first.
pub fn compose(outer: TransferMatrix, inner: TransferMatrix) -> TransferMatrix {
    TransferMatrix {
        a: outer.a * inner.a + outer.b * inner.c,
        b: outer.a * inner.b + outer.b * inner.d,
        c: outer.c * inner.a + outer.d * inner.c,
        d: outer.c * inner.b + outer.d * inner.d,
    }
}

/// Reduced-eye parameters. All lengths in mm, powers in mm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeModel {
    /// Pupil diameter `D_e`.
    pub pupil_diameter: f64,
    /// Distance from the eye lens to the retina `d_er`.
    pub lens_retina_distance: f64,
    /// Eye power when focused at the far point.
    pub far_power: f64,
    /// Eye power when focused at the near point.
    pub near_power: f64,
    /// Largest blur-circle diameter on the retina still perceived as sharp.
    pub acceptable_coc: f64,
}

impl EyeModel {
    /// Accommodation amplitude of the default eye, in mm⁻¹ (11 D).
    pub const DEFAULT_ACCOMMODATION: f64 = 0.011;

    /// Builds an eye focused at infinity when relaxed, with the given pupil,
    /// retina distance and accommodation amplitude. The acceptable CoC is the
    /// retinal size of one arc-minute.
    pub fn relaxed_at_infinity(
        pupil_diameter: f64,
        lens_retina_distance: f64,
        accommodation: f64,
    ) -> Self {
        let far_power = 1.0 / lens_retina_distance;
        Self {
            pupil_diameter,
            lens_retina_distance,
            far_power,
            near_power: far_power + accommodation,
            acceptable_coc: lens_retina_distance * ARCMIN.tan(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pupil_diameter,
            self.lens_retina_distance,
            self.far_power,
            self.near_power,
            self.acceptable_coc,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!("eye parameters must be finite and non-negative: {self:?}")));
        }
        if self.pupil_diameter == 0.0 || self.lens_retina_distance == 0.0 || self.far_power == 0.0 {
            return Err(Error::Domain("pupil, retina distance and far power must be positive".into()));
        }
        if self.near_power <= self.far_power {
            return Err(Error::Domain("near power must exceed far power".into()));
        }
        if self.acceptable_coc >= self.pupil_diameter {
            return Err(Error::Domain("acceptable CoC must be smaller than the pupil".into()));
        }
        Ok(())
    }

    /// Clamps an eye power into the accommodation range.
    pub fn clamp_power(&self, p: f64) -> f64 {
        p.clamp(self.far_power, self.near_power)
    }
}

impl Default for EyeModel {
    fn default() -> Self {
        Self::relaxed_at_infinity(4.0, 50.0 / 3.0, Self::DEFAULT_ACCOMMODATION)
    }
}

/// The eye, the tunable lens in front of it and their current powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalStack {
    pub eye: EyeModel,
    /// ETL-to-eye vertex distance `d_Ee` (mm).
    pub vertex_distance: f64,
    /// ETL power `P_E` (mm⁻¹).
    pub etl_power: f64,
    /// Current eye power `P_e` (mm⁻¹).
    pub eye_power: f64,
}

impl OpticalStack {
    /// Validated constructor. The eye power must lie in the accommodation range.
    pub fn new(eye: EyeModel, vertex_distance: f64, etl_power: f64, eye_power: f64) -> Result<Self> {
        eye.validate()?;
        let stack = Self::unchecked(eye, vertex_distance, etl_power, eye_power);
        if !(vertex_distance.is_finite() && vertex_distance > 0.0) {
            return Err(Error::Domain(format!("vertex distance must be positive, got {vertex_distance}")));
        }
        if !(etl_power.is_finite() && etl_power >= 0.0) {
            return Err(Error::Domain(format!("ETL power must be non-negative, got {etl_power}")));
        }
        let tol = 1e-15;
        if !(eye_power >= eye.far_power - tol && eye_power <= eye.near_power + tol) {
            return Err(Error::Domain(format!(
                "eye power {eye_power} outside accommodation range [{}, {}]",
                eye.far_power, eye.near_power
            )));
        }
        Ok(stack)
    }

    /// Builds a stack without range checks. Used by the renderer, which
    /// evaluates powers on both sides of the nominal sweep.
    pub fn unchecked(eye: EyeModel, vertex_distance: f64, etl_power: f64, eye_power: f64) -> Self {
        Self {
            eye,
            vertex_distance,
            etl_power,
            eye_power,
        }
    }

    pub fn with_etl_power(self, etl_power: f64) -> Self {
        Self { etl_power, ..self }
    }

    /// `T(d_Ee) R(P_E) T(d_oE)`: object point to the eye lens.
    pub fn object_to_eye(&self, object_distance: f64) -> Result<TransferMatrix> {
        Ok(free_space(self.vertex_distance)? * thin_lens(self.etl_power)? * free_space(object_distance)?)
    }

    /// `T(d_er) R(P_e) T(d_Ee) R(P_E) T(d_oE)`: object point to the retina.
    pub fn object_to_retina(&self, object_distance: f64) -> Result<TransferMatrix> {
        Ok(free_space(self.eye.lens_retina_distance)?
            * thin_lens(self.eye_power)?
            * self.object_to_eye(object_distance)?)
    }

    /// `d_oE + d_Ee − d_oE·d_Ee·P_E`, the pupil-height-per-unit-angle factor.
    fn pupil_lever(&self, object_distance: f64) -> f64 {
        object_distance + self.vertex_distance
            - object_distance * self.vertex_distance * self.etl_power
    }
}

/// The marginal ray from an on-axis object point through the pupil edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalRayTrace {
    /// Angle at the object (rad).
    pub u_object: f64,
    /// Angle arriving at the eye lens (rad).
    pub u_eye: f64,
    /// Angle arriving at the retina (rad).
    pub u_retina: f64,
    /// Signed height on the retina (mm).
    pub retina_height: f64,
    /// Blur-circle diameter `D_r` (mm).
    pub blur_diameter: f64,
}

fn check_object_distance(stack: &OpticalStack, object_distance: f64) -> Result<f64> {
    if !(object_distance.is_finite() && object_distance > 0.0) {
        return Err(Error::Domain(format!("object distance must be positive, got {object_distance}")));
    }
    let lever = stack.pupil_lever(object_distance);
    if lever.abs() < SINGULAR_EPS {
        return Err(Error::Singular(format!(
            "ETL images the pupil onto the object at d_oE = {object_distance} mm"
        )));
    }
    Ok(lever)
}

/// Traces the marginal ray through the full matrix chain.
pub fn marginal_ray(stack: &OpticalStack, object_distance: f64) -> Result<MarginalRayTrace> {
    let lever = check_object_distance(stack, object_distance)?;
    let u_object = stack.eye.pupil_diameter / (2.0 * lever);
    let start = RayState::new(0.0, u_object);
    let at_eye = stack.object_to_eye(object_distance)?.apply(start);
    let at_retina = stack.object_to_retina(object_distance)?.apply(start);
    Ok(MarginalRayTrace {
        u_object,
        u_eye: at_eye.u,
        u_retina: at_retina.u,
        retina_height: at_retina.x,
        blur_diameter: 2.0 * at_retina.x.abs(),
    })
}

/// Signed defocus `1 − d_er P_e + d_er (1 − d_oE P_E)/(d_oE + d_Ee − d_oE d_Ee P_E)`.
///
/// Strictly decreasing in `object_distance` between poles; its absolute value
/// times the pupil diameter is the blur-circle diameter.
pub fn signed_defocus(stack: &OpticalStack, object_distance: f64) -> Result<f64> {
    let lever = check_object_distance(stack, object_distance)?;
    let d_er = stack.eye.lens_retina_distance;
    Ok(1.0 - d_er * stack.eye_power + d_er * (1.0 - object_distance * stack.etl_power) / lever)
}

/// Closed-form blur-circle diameter `D_r` on the retina (mm).
pub fn blur_circle_diameter(stack: &OpticalStack, object_distance: f64) -> Result<f64> {
    Ok(stack.eye.pupil_diameter * signed_defocus(stack, object_distance)?.abs())
}
