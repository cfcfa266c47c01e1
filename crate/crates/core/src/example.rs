//! Closed forms for the scalar bang-bang example
//! `D^α x = Γ(α) g(τ) u`, `|u| ≤ 1`, cost `−x(T)²`.
//!
//! With `I(t) = ∫_t^T |g(τ)| (T−τ)^{α−1} dτ` and `a = a(T | t, w)` the value
//! is `−(|a| + I(t))²`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fractional::Position;
use crate::problem::GFunction;
use crate::special::gamma;

/// Threshold below which `a(T | t, w)` counts as zero.
pub fn drift_is_zero(a: f64) -> bool {
    a.abs() <= 1e-9
}

/// `∫_t^T |g(τ)| (T−τ)^{α−1} dτ`. `|g|` is interpolated linearly on a
/// uniform grid and integrated against exact kernel moments; the grid is
/// doubled until two successive values agree to 1e-13.
pub fn abs_g_integral(g: GFunction, alpha: f64, t: f64, horizon: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha out of (0,1): {alpha}")));
    }
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::OutOfRange {
            value: t,
            lo: 0.0,
            hi: horizon,
        });
    }
    if t == horizon {
        return Ok(0.0);
    }
    let mut cells = 16usize;
    let mut prev = trapezoid_moments(g, alpha, t, horizon, cells);
    for _ in 0..16 {
        cells *= 2;
        let next = trapezoid_moments(g, alpha, t, horizon, cells);
        if (next - prev).abs() <= 1e-13 * next.abs().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

fn trapezoid_moments(g: GFunction, alpha: f64, t: f64, horizon: f64, cells: usize) -> f64 {
    let h = (horizon - t) / cells as f64;
    let mut acc = 0.0;
    for j in 0..cells {
        let a = t + j as f64 * h;
        let b = if j + 1 == cells { horizon } else { a + h };
        let (da, db) = (horizon - a, horizon - b);
        let m0 = (da.powf(alpha) - db.powf(alpha)) / alpha;
        // ∫ (τ − a)(T − τ)^{α−1} dτ
        let m1 = da * m0 - (da.powf(alpha + 1.0) - db.powf(alpha + 1.0)) / (alpha + 1.0);
        let (ga, gb) = (g.value(a).abs(), g.value(b).abs());
        acc += ga * m0 + (gb - ga) / (b - a) * m1;
    }
    acc
}

fn scalar_drift(p: &Position) -> Result<f64> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch {
            what: "example position",
            expected: 1,
            got: p.dim(),
        });
    }
    Ok(p.terminal_drift()[0])
}

/// `−(|a(T | t, w)| + I(t))²`.
pub fn value_closed_form_example(p: &Position, g: GFunction) -> Result<f64> {
    let a = scalar_drift(p)?;
    let i = abs_g_integral(g, p.alpha(), p.t(), p.horizon())?;
    Ok(-(a.abs() + i).powi(2))
}

/// Order-α derivatives `(∂_t^α, ∇^α)` of the value where `a(T | t, w) ≠ 0`;
/// `None` at the kink.
pub fn ci_derivatives_example(p: &Position, g: GFunction) -> Result<Option<(f64, f64)>> {
    if !p.is_interior() {
        return Err(Error::invalid("derivatives need t < T"));
    }
    let a = scalar_drift(p)?;
    if drift_is_zero(a) {
        return Ok(None);
    }
    let alpha = p.alpha();
    let span = (p.horizon() - p.t()).powf(1.0 - alpha);
    let level = a.abs() + abs_g_integral(g, alpha, p.t(), p.horizon())?;
    let dt = 2.0 * g.value(p.t()).abs() / span * level;
    let grad = -2.0 * a.signum() / (gamma(alpha) * span) * level;
    Ok(Some((dt, grad)))
}

/// Directional derivative of order α of the value in direction `f`: from
/// the ci-derivatives away from the kink, and
/// `2(Γ(α)|g(t)| − |f|) I(t) / (Γ(α)(T−t)^{1−α})` on it.
pub fn directional_derivative_example(p: &Position, g: GFunction, f: f64) -> Result<f64> {
    if let Some((dt, grad)) = ci_derivatives_example(p, g)? {
        return Ok(dt + grad * f);
    }
    let alpha = p.alpha();
    let ga = gamma(alpha);
    let span = (p.horizon() - p.t()).powf(1.0 - alpha);
    let i = abs_g_integral(g, alpha, p.t(), p.horizon())?;
    Ok(2.0 * (ga * g.value(p.t()).abs() - f.abs()) / (ga * span) * i)
}

/// The optimal positional rule: `sgn g(t)` if `a > 0`, `1` if `a = 0`,
/// `−sgn g(t)` if `a < 0`.
pub fn optimal_control_example(p: &Position, g: GFunction) -> Result<f64> {
    let a = scalar_drift(p)?;
    let sg = sign(g.value(p.t()));
    Ok(if drift_is_zero(a) {
        1.0
    } else if a > 0.0 {
        sg
    } else {
        -sg
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}
