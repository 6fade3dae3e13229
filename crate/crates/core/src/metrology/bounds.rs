use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

/// `(Δφ_SQL)² = [N + δφ⁻²]⁻¹`.
pub fn sql_bmse(n: usize, prior_width: f64) -> f64 {
    van_trees_bound(n as f64, prior_width.powi(-2))
}

/// `(Δφ_HL)² = [N² + δφ⁻²]⁻¹`.
pub fn hl_bmse(n: usize, prior_width: f64) -> f64 {
    let n = n as f64;
    van_trees_bound(n * n, prior_width.powi(-2))
}

/// Prior mass outside `[-π, π)`: `2∫_π^∞ P_δφ(φ) dφ`.
pub fn phase_slip_probability(prior_width: f64) -> f64 {
    erfc(PI / (SQRT_2 * prior_width))
}

/// Slip probability times the minimal squared error `(2π)²` of a slip.
pub fn psl_bmse(prior_width: f64) -> f64 {
    (2.0 * PI).powi(2) * phase_slip_probability(prior_width)
}

/// Van Trees: `BMSE ≥ 1/(F̄ + I)`.
pub fn van_trees_bound(avg_fisher: f64, prior_info: f64) -> f64 {
    1.0 / (avg_fisher + prior_info)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!((sql_bmse(12, 0.5) - 0.0625).abs() < 1e-15);
        assert!((hl_bmse(12, 0.5) - 1.0 / 148.0).abs() < 1e-15);
        assert_eq!(van_trees_bound(0.0, 4.0), 0.25);
        assert!((sql_bmse(12, 0.5) - van_trees_bound(12.0, 4.0)).abs() < 1e-15);
    }

    #[test]
    fn slip_tail() {
        // δφ = π gives the 1σ two-sided tail
        let p = phase_slip_probability(PI);
        assert!((p - 0.317_310_507_862_914_1).abs() < 1e-13, "{p:.17}");
        let w: f64 = 0.3;
        assert!((psl_bmse(w).sqrt() / w) < 1e-10);
    }
}
