use proptest::prelude::*;
use stokes_lab::integrator::{transfer_matrix, CoefficientField, Path};
use stokes_lab::linalg::{self, c};
use stokes_lab::{ConfluentFamily, C64};

const TOL: f64 = 1e-11;

fn euler_field() -> CoefficientField {
    // poles at ±0.5i
    ConfluentFamily::euler().field(0.5).unwrap()
}

/// Points in the left half plane, well away from the poles.
fn point() -> impl Strategy<Value = C64> {
    (-1.5..-0.3f64, -1.0..1.0f64).prop_map(|(x, y)| c(x, y))
}

#[test]
fn contractible_loop_is_identity() {
    let field = euler_field();
    let lasso = Path::lasso(
        c(-0.5, 0.0),
        &Path::circle(c(-1.0, 0.0), 0.2, 0.0, true).unwrap(),
    )
    .unwrap();
    let m = transfer_matrix(&field, &lasso, TOL).unwrap().to_matrix();
    assert!(linalg::max_diff(&m, &linalg::identity(2)) < 10.0 * TOL * 100.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_diagonal_is_exponential(a in -2.0..2.0f64, b in -2.0..2.0f64, z in point()) {
        let field = CoefficientField::constant(linalg::diag(&[c(a, 0.0), c(b, 0.0)]));
        let from = c(0.0, 0.0);
        let m = transfer_matrix(&field, &Path::segment(from, z).unwrap(), TOL).unwrap().to_matrix();
        let expect = linalg::diag(&[(c(a, 0.0) * z).exp(), (c(b, 0.0) * z).exp()]);
        for j in 0..2 {
            prop_assert!((m[(j, j)] / expect[(j, j)] - 1.0).norm() < 1e-8);
        }
        prop_assert!(m[(0, 1)].norm() + m[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn concatenation_multiplies(p in point(), q in point(), r in point()) {
        let field = euler_field();
        let g1 = Path::segment(p, q).unwrap();
        let g2 = Path::segment(q, r).unwrap();
        let whole = transfer_matrix(&field, &g1.then(&g2).unwrap(), TOL).unwrap();
        let t1 = transfer_matrix(&field, &g1, TOL).unwrap();
        let t2 = transfer_matrix(&field, &g2, TOL).unwrap();
        prop_assert!(whole.relative_distance(&t2.compose(&t1).unwrap()) < 1e-8);
    }

    #[test]
    fn reversal_inverts(p in point(), q in point()) {
        let field = euler_field();
        let g = Path::segment(p, q).unwrap();
        let there = transfer_matrix(&field, &g, TOL).unwrap();
        let back = transfer_matrix(&field, &g.reversed(), TOL).unwrap();
        let prod = back.compose(&there).unwrap().to_matrix();
        prop_assert!(linalg::max_diff(&prod, &linalg::identity(2)) < 1e-8);
    }

    #[test]
    fn traceless_field_preserves_determinant(p in point(), q in point()) {
        let field = euler_field();
        let m = transfer_matrix(&field, &Path::segment(p, q).unwrap(), TOL).unwrap();
        prop_assert!(m.ln_det().norm() < 1e-8);
    }

    #[test]
    fn loop_radius_is_irrelevant(r1 in 0.15..0.4f64, r2 in 0.15..0.4f64) {
        // lassos from -1 around the pole 0.5i, with different circle radii
        let field = euler_field();
        let pole = c(0.0, 0.5);
        let base = c(-1.0, 0.0);
        let loop_with = |r: f64| {
            let start = pole + (base - pole) / (base - pole).norm() * r;
            Path::lasso(base, &Path::circle_through(pole, start, true).unwrap()).unwrap()
        };
        let a = transfer_matrix(&field, &loop_with(r1), TOL).unwrap();
        let b = transfer_matrix(&field, &loop_with(r2), TOL).unwrap();
        prop_assert!(a.relative_distance(&b) < 1e-8);
    }
}
