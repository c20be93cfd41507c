//! Unit helpers. Lengths are millimetres and optical powers are mm⁻¹ throughout
//! the crate; diopters only appear at the edges (CLI, JSON).

/// mm⁻¹ per diopter.
pub const MM_INV_PER_DIOPTER: f64 = 1e-3;

#[inline]
pub fn diopters_to_mm_inv(d: f64) -> f64 {
    d * MM_INV_PER_DIOPTER
}

#[inline]
pub fn mm_inv_to_diopters(p: f64) -> f64 {
    p / MM_INV_PER_DIOPTER
}

/// One minute of arc in radians.
pub const ARCMIN: f64 = std::f64::consts::PI / (180.0 * 60.0);
