//! B-spline basis checked against an independent textbook Cox-de Boor
//! recursion, plus the linear-in-coefficients least-squares reproduction of
//! a piecewise-linear signature.

use occuload_core::spline::{bspline_basis, SplineConfig};

/// Naive recursive Cox-de Boor definition, evaluated for every basis
/// function. Intentionally independent of the production implementation.
fn cox_de_boor(knots: &[f64], i: usize, degree: usize, x: f64) -> f64 {
    if degree == 0 {
        // half-open spans, closed at the final knot
        let last_span = knots[i + 1] >= *knots.last().unwrap();
        if (knots[i] <= x && x < knots[i + 1]) || (last_span && x == knots[i + 1]) {
            return 1.0;
        }
        return 0.0;
    }
    let mut value = 0.0;
    let d1 = knots[i + degree] - knots[i];
    if d1 > 0.0 {
        value += (x - knots[i]) / d1 * cox_de_boor(knots, i, degree - 1, x);
    }
    let d2 = knots[i + degree + 1] - knots[i + 1];
    if d2 > 0.0 {
        value += (knots[i + degree + 1] - x) / d2 * cox_de_boor(knots, i + 1, degree - 1, x);
    }
    value
}

#[test]
fn basis_matches_textbook_recursion() {
    let cfg = SplineConfig::<f64>::default();
    let knots = cfg.knots();
    for &x in &[
        -2.0, -1.999, -1.3, -0.8, -0.4, 0.0, 0.37, 0.8, 1.2, 1.6, 1.99, 2.0,
    ] {
        let fast = bspline_basis(x, &cfg);
        for i in 0..cfg.basis_count() {
            let slow = cox_de_boor(&knots, i, cfg.order, x);
            assert!(
                (fast[i] - slow).abs() < 1e-12,
                "x={x} basis {i}: {} vs {slow}",
                fast[i]
            );
        }
    }
}

#[test]
fn basis_nonnegative_partition_at_random_points() {
    let cfg = SplineConfig::<f64>::default();
    let mut state = 0x12345678u64;
    for _ in 0..1000 {
        // xorshift for cheap deterministic points
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let x = -2.0 + 4.0 * (state % 10_000) as f64 / 9_999.0;
        let basis = bspline_basis(x, &cfg);
        assert!(basis.iter().all(|&b| b >= 0.0));
        let sum: f64 = basis.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

/// The spline output is linear in the coefficients, so a least-squares fit
/// on basis-aligned samples of a piecewise-linear cooling signature must
/// reproduce those samples.
#[test]
fn least_squares_reproduces_piecewise_linear_samples() {
    let cfg = SplineConfig::<f64>::default();
    let n = cfg.basis_count();
    // one sample per basis function, spread over the domain
    let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
    let signature = |x: f64| 1.2 + 2.5 * (x - 0.3f64).max(0.0);
    let ys: Vec<f64> = xs.iter().map(|&x| signature(x)).collect();

    // normal equations in coefficient space
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| bspline_basis(x, &cfg)).collect();
    let mut ata = vec![vec![0.0; n]; n];
    let mut atb = vec![0.0; n];
    for (row, &y) in rows.iter().zip(&ys) {
        for i in 0..n {
            atb[i] += row[i] * y;
            for j in 0..n {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    // Gaussian elimination
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| ata[a][col].abs().partial_cmp(&ata[b][col].abs()).unwrap())
            .unwrap();
        ata.swap(col, pivot);
        atb.swap(col, pivot);
        let d = ata[col][col];
        assert!(d.abs() > 1e-12, "singular design");
        for r in col + 1..n {
            let f = ata[r][col] / d;
            for c in col..n {
                ata[r][c] -= f * ata[col][c];
            }
            atb[r] -= f * atb[col];
        }
    }
    let mut coeffs = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = atb[col];
        for c in col + 1..n {
            acc -= ata[col][c] * coeffs[c];
        }
        coeffs[col] = acc / ata[col][col];
    }

    for (&x, &y) in xs.iter().zip(&ys) {
        let basis = bspline_basis(x, &cfg);
        let pred: f64 = basis.iter().zip(&coeffs).map(|(b, c)| b * c).sum();
        assert!((pred - y).abs() < 1e-6, "x={x}: {pred} vs {y}");
    }
}
