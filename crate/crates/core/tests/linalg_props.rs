use nalgebra::DMatrix;
use pear::linalg::{factor_spd, independent_rows, solve_spd, DenseMatrix, RANK_TOL};
use proptest::prelude::*;

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// `MMᵀ + n·I` from raw entries.
fn spd_from(n: usize, raw: &[f64]) -> DenseMatrix {
    let m = DMatrix::from_row_slice(n, n, &raw[..n * n]);
    let h = &m * m.transpose() + DMatrix::identity(n, n) * n as f64;
    let h = (&h + h.transpose()) * 0.5;
    DenseMatrix::from_vec(n, n, h.transpose().as_slice().to_vec()).unwrap()
}

fn spd_case() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1usize..=50).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cholesky_reconstructs((n, raw, _) in spd_case()) {
        let h = spd_from(n, &raw);
        let f = factor_spd(&h).unwrap();
        let err = f.reconstruct().sub(&h).unwrap().max_abs();
        prop_assert!(err <= 1e-9 * h.max_abs().max(1.0), "reconstruction error {err}");
        let na = to_na(&h).cholesky().unwrap();
        let l = to_na(&f.lower());
        prop_assert!((l - na.l()).amax() <= 1e-9);
    }

    #[test]
    fn spd_solve_matches_oracle((n, raw, b) in spd_case()) {
        let h = spd_from(n, &raw);
        let x = solve_spd(&factor_spd(&h).unwrap(), &b).unwrap();
        let hx = h.matvec(&x).unwrap();
        let resid = hx.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        prop_assert!(resid <= 1e-8);
        let oracle = to_na(&h).lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for (a, o) in x.iter().zip(oracle.iter()) {
            prop_assert!((a - o).abs() <= 1e-8 * (1.0 + o.abs()));
        }
    }

    #[test]
    fn independent_rows_matches_rank(
        k in 1usize..8,
        n in 1usize..10,
        raw in prop::collection::vec(-1.0f64..1.0, 80),
        dup in prop::collection::vec(0usize..8, 0..4),
    ) {
        let mut j = DenseMatrix::from_vec(k, n, raw[..k * n].to_vec()).unwrap();
        for d in dup {
            let row = j.row(d % k).to_vec();
            let scaled: Vec<f64> = row.iter().map(|v| -2.0 * v).collect();
            j.push_row(&scaled).unwrap();
        }
        let kept = independent_rows(&j, RANK_TOL);
        let rank = to_na(&j).rank(1e-8);
        prop_assert_eq!(kept.len(), rank);
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(to_na(&j.select_rows(&kept)).rank(1e-8), rank);
    }
}
