//! Where the true model stops being recoverable.
//!
//! The true model `m*` beats the best constant model `m^c` on average while
//! its expected description length is lower. Equating the two gives
//!
//! ```text
//! s×² = ⟨δ²⟩ / (exp(2Δ/N) · N^((k*-1)/N) - 1)
//! ```
//!
//! with `Δ = H_M(m*) - H_M(m^c)`; expanding for large `N` gives
//! `s×² ≈ ⟨δ²⟩ N / (2Δ + (k*-1) ln N)`.

use crate::error::{Error, Result};

fn check_inputs(delta2: f64, delta_m: f64, n: f64) -> Result<()> {
    if !(delta2 >= 0.0) || !delta2.is_finite() {
        return Err(Error::Domain(format!("⟨δ²⟩ must be finite and >= 0, got {delta2}")));
    }
    if !delta_m.is_finite() {
        return Err(Error::Domain(format!("Δ_M must be finite, got {delta_m}")));
    }
    if !(n >= 2.0) {
        return Err(Error::Domain(format!("N must be at least 2, got {n}")));
    }
    Ok(())
}

/// Transition noise from the exact finite-`N` balance. Returns `+inf` when
/// the constant model can never win (denominator `<= 0`).
pub fn transition_noise_exact(delta2: f64, delta_m: f64, k_true: usize, n: usize) -> Result<f64> {
    let n = n as f64;
    check_inputs(delta2, delta_m, n)?;
    // exp(2Δ/N + (k-1) ln N / N) - 1, without cancellation for large N
    let exponent = (2.0 * delta_m + (k_true as f64 - 1.0) * n.ln()) / n;
    let denom = exponent.exp_m1();
    if denom <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((delta2 / denom).sqrt())
}

/// Large-`N` approximation of the transition noise.
pub fn transition_noise_approx(delta2: f64, delta_m: f64, k_true: usize, n: usize) -> Result<f64> {
    let n = n as f64;
    check_inputs(delta2, delta_m, n)?;
    let denom = 2.0 * delta_m + (k_true as f64 - 1.0) * n.ln();
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "2Δ_M + (k*-1) ln N must be positive, got {denom}"
        )));
    }
    Ok((delta2 * n / denom).sqrt())
}
