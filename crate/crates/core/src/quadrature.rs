//! Quadrature rules on triangles (plus the 1D Gauss nodes they reuse).

/// 8-point Gauss-Legendre rule on [-1, 1] as (node, weight) pairs.
pub const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_328_99, 0.313_706_645_877_887_29),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_361_98),
    (0.183_434_642_495_649_8, 0.362_683_783_378_361_98),
    (0.525_532_409_916_328_99, 0.313_706_645_877_887_29),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

pub type QuadPoint = ([f64; 2], f64);

fn triangle_area(v: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
        .abs()
}

/// Edge-midpoint rule: 3 points, exact for polynomials of degree 2.
/// Weights sum to the triangle area.
pub fn triangle_midpoint_rule(v: &[[f64; 2]; 3]) -> [QuadPoint; 3] {
    let area = triangle_area(v);
    let w = area / 3.0;
    let mid = |a: usize, b: usize| {
        [
            0.5 * (v[a][0] + v[b][0]),
            0.5 * (v[a][1] + v[b][1]),
        ]
    };
    [(mid(0, 1), w), (mid(1, 2), w), (mid(2, 0), w)]
}

/// 64-point collapsed tensor Gauss rule, effectively exact for any smooth
/// integrand met here (projection loads, error norms against closed-form
/// solutions). Weights sum to the triangle area.
pub fn triangle_gauss_64(v: &[[f64; 2]; 3]) -> Vec<QuadPoint> {
    let area = triangle_area(v);
    let mut points = Vec::with_capacity(64);
    for &(xi_raw, wx) in GAUSS_LEGENDRE_8.iter() {
        let xi = (xi_raw + 1.0) / 2.0;
        for &(eta_raw, wy) in GAUSS_LEGENDRE_8.iter() {
            let eta = (eta_raw + 1.0) / 2.0;
            // Duffy map [0,1]^2 -> reference triangle, Jacobian (1 - eta).
            let r = xi * (1.0 - eta);
            let s = eta;
            let x = v[0][0] + r * (v[1][0] - v[0][0]) + s * (v[2][0] - v[0][0]);
            let y = v[0][1] + r * (v[1][1] - v[0][1]) + s * (v[2][1] - v[0][1]);
            let w = wx * wy * (1.0 - eta) * area / 2.0;
            points.push(([x, y], w));
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: [[f64; 2]; 3] = [[0.2, 0.1], [1.1, 0.3], [0.4, 0.9]];

    #[test]
    fn weights_sum_to_area() {
        let area = triangle_area(&TRI);
        let sum3: f64 = triangle_midpoint_rule(&TRI).iter().map(|p| p.1).sum();
        let sum64: f64 = triangle_gauss_64(&TRI).iter().map(|p| p.1).sum();
        assert!((sum3 - area).abs() < 1e-14);
        assert!((sum64 - area).abs() < 1e-14);
    }

    /// Integrates x^a y^b over the unit right triangle; the exact value is
    /// a! b! / (a + b + 2)!.
    fn monomial_exact(a: u32, b: u32) -> f64 {
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn midpoint_rule_exact_to_degree_two() {
        let unit: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for (a, b) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
            let num: f64 = triangle_midpoint_rule(&unit)
                .iter()
                .map(|&([x, y], w)| w * x.powi(a as i32) * y.powi(b as i32))
                .sum();
            assert!(
                (num - monomial_exact(a, b)).abs() < 1e-15,
                "midpoint rule on x^{a} y^{b}"
            );
        }
    }

    #[test]
    fn gauss_64_handles_high_degree_and_transcendentals() {
        let unit: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for (a, b) in [(5, 4), (7, 2), (3, 8)] {
            let num: f64 = triangle_gauss_64(&unit)
                .iter()
                .map(|&([x, y], w)| w * x.powi(a) * y.powi(b))
                .sum();
            assert!(
                (num - monomial_exact(a as u32, b as u32)).abs() < 1e-15,
                "gauss rule on x^{a} y^{b}"
            );
        }
        // Transcendental integrand: splitting the triangle in four must
        // reproduce the same value if the rule has converged.
        let f = |x: f64, y: f64| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
        let whole: f64 = triangle_gauss_64(&unit)
            .iter()
            .map(|&([x, y], w)| w * f(x, y))
            .sum();
        let m01 = [0.5, 0.0];
        let m02 = [0.0, 0.5];
        let m12 = [0.5, 0.5];
        let sub = [
            [[0.0, 0.0], m01, m02],
            [[1.0, 0.0], m12, m01],
            [[0.0, 1.0], m02, m12],
            [m01, m12, m02],
        ];
        let split: f64 = sub
            .iter()
            .map(|t| {
                triangle_gauss_64(t)
                    .iter()
                    .map(|&([x, y], w)| w * f(x, y))
                    .sum::<f64>()
            })
            .sum();
        assert!((whole - split).abs() < 1e-13);
    }
}
