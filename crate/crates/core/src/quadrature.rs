//! Fixed low-order quadrature rules on reference simplices.

/// 3-point Gauss-Legendre on `[0, 1]`: `(node, weight)`.
pub fn gauss_legendre_3() -> [(f64, f64); 3] {
    let d = 0.5 * (3.0f64 / 5.0).sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

/// Degree-2 rule on the reference triangle `{s, t >= 0, s + t <= 1}`.
pub const TRIANGLE_3: [([f64; 2], f64); 3] = [
    ([1.0 / 6.0, 1.0 / 6.0], 1.0 / 6.0),
    ([2.0 / 3.0, 1.0 / 6.0], 1.0 / 6.0),
    ([1.0 / 6.0, 2.0 / 3.0], 1.0 / 6.0),
];

const TET_A: f64 = 0.585_410_196_624_968_5;
const TET_B: f64 = 0.138_196_601_125_010_5;

/// Degree-2 rule on the reference tetrahedron, in reference coordinates.
pub const TET_4: [([f64; 3], f64); 4] = [
    ([TET_B, TET_B, TET_B], 1.0 / 24.0),
    ([TET_A, TET_B, TET_B], 1.0 / 24.0),
    ([TET_B, TET_A, TET_B], 1.0 / 24.0),
    ([TET_B, TET_B, TET_A], 1.0 / 24.0),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_are_exact_for_quadratics() {
        let gl: f64 = gauss_legendre_3().iter().map(|(x, w)| w * x.powi(5)).sum();
        assert!((gl - 1.0 / 6.0).abs() < 1e-15);
        // int s^2 over the triangle = 1/12, int s t = 1/24
        let s2: f64 = TRIANGLE_3.iter().map(|(p, w)| w * p[0] * p[0]).sum();
        let st: f64 = TRIANGLE_3.iter().map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((s2 - 1.0 / 12.0).abs() < 1e-15 && (st - 1.0 / 24.0).abs() < 1e-15);
        // int s^2 over the tet = 1/60, int s t = 1/120
        let s2: f64 = TET_4.iter().map(|(p, w)| w * p[0] * p[0]).sum();
        let st: f64 = TET_4.iter().map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((s2 - 1.0 / 60.0).abs() < 1e-15 && (st - 1.0 / 120.0).abs() < 1e-15);
    }
}
