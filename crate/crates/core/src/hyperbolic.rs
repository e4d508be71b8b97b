//! Poincaré ball operations at curvature −1.
//!
//! - exponential map at the origin: `tanh(‖h‖) · h / ‖h‖`
//! - Möbius addition: `x ⊕ y = ((1 + 2⟨x,y⟩ + ‖y‖²) x + (1 − ‖x‖²) y) / (1 + 2⟨x,y⟩ + ‖x‖²‖y‖²)`
//! - distance: `d(a, b) = 2 · artanh(‖−a ⊕ b‖)`

use alloc::vec::Vec;

/// Largest norm fed to `artanh`. Keeps distances finite near the boundary.
pub const MAX_NORM: f64 = 1.0 - 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum HyperbolicError {
    #[error("vector has non-finite entries")]
    NonFiniteInput,
    #[error("point with norm {0} is not inside the unit ball")]
    OutsideBall(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

fn check_ball(v: &[f64]) -> Result<f64, HyperbolicError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(HyperbolicError::NonFiniteInput);
    }
    let n = norm(v);
    if n >= 1.0 {
        return Err(HyperbolicError::OutsideBall(n));
    }
    Ok(n)
}

/// Maps a Euclidean vector into the ball. The origin maps to itself.
pub fn project_hyperbolic(h: &[f64]) -> Result<Vec<f64>, HyperbolicError> {
    if h.iter().any(|x| !x.is_finite()) {
        return Err(HyperbolicError::NonFiniteInput);
    }
    let n = norm(h);
    if n == 0.0 {
        return Ok(h.to_vec());
    }
    let scale = libm::tanh(n) / n;
    Ok(h.iter().map(|x| x * scale).collect())
}

/// Rescales `v` so its norm is at most `max_norm`; shorter vectors are
/// returned unchanged.
pub fn clip_to_ball(v: &[f64], max_norm: f64) -> Vec<f64> {
    let n = norm(v);
    if n <= max_norm {
        v.to_vec()
    } else {
        let s = max_norm / n;
        v.iter().map(|x| x * s).collect()
    }
}

pub fn mobius_add(x: &[f64], y: &[f64]) -> Result<Vec<f64>, HyperbolicError> {
    if x.len() != y.len() {
        return Err(HyperbolicError::DimensionMismatch(x.len(), y.len()));
    }
    check_ball(x)?;
    check_ball(y)?;
    Ok(mobius_add_unchecked(x, y))
}

fn mobius_add_unchecked(x: &[f64], y: &[f64]) -> Vec<f64> {
    let xy = dot(x, y);
    let xx = dot(x, x);
    let yy = dot(y, y);
    let cx = 1.0 + 2.0 * xy + yy;
    let cy = 1.0 - xx;
    let denom = 1.0 + 2.0 * xy + xx * yy;
    x.iter().zip(y).map(|(a, b)| (cx * a + cy * b) / denom).collect()
}

/// Geodesic distance between two points of the ball.
pub fn poincare_distance(a: &[f64], b: &[f64]) -> Result<f64, HyperbolicError> {
    if a.len() != b.len() {
        return Err(HyperbolicError::DimensionMismatch(a.len(), b.len()));
    }
    check_ball(a)?;
    check_ball(b)?;
    if a == b {
        return Ok(0.0);
    }
    let neg_a: Vec<f64> = a.iter().map(|v| -v).collect();
    let diff = mobius_add_unchecked(&neg_a, b);
    let n = norm(&diff).min(MAX_NORM);
    Ok(2.0 * libm::atanh(n))
}
