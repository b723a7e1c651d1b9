//! Regret gradients from the active set of a solved QP.
//!
//! Given the primal-dual pair of the forward solve, the binding constraints
//! are stacked into a Jacobian `J` and the prediction error `e` is mapped to
//!
//! ```text
//!     g = P_H e,   P_H = H⁻¹ − H⁻¹Jᵀ(JH⁻¹Jᵀ)⁻¹JH⁻¹
//! ```
//!
//! through the k×k Schur system `(JH⁻¹Jᵀ) v = JH⁻¹e`, so only `H` and the
//! small Schur matrix are ever factorized. The dense operators are kept for
//! verification.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, factor_spd, independent_rows, norm2, solve_spd, DenseMatrix, RANK_TOL};
use crate::solver::{ConvexInstance, PrimalDualSolution, SpdOperator};

/// Absolute band added to the dual side of the complementary slackness test.
pub const ACTIVE_TOL: f64 = 1e-6;

/// Relative diagonal shift applied to the Schur matrix before factorization.
pub const SCHUR_REG: f64 = 1e-10;

const REFINE_STEPS: usize = 2;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    /// Inequality rows where both tests fire (`l = u`); always active.
    pub fixed: Vec<usize>,
    pub equality_count: usize,
}

impl ActiveSet {
    /// Active inequality rows in increasing order.
    pub fn inequality_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .lower
            .iter()
            .chain(&self.upper)
            .chain(&self.fixed)
            .copied()
            .collect();
        rows.sort_unstable();
        rows
    }

    /// Binary activity pattern over the `m` inequality rows.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &i in self.lower.iter().chain(&self.upper).chain(&self.fixed) {
            mask[i] = true;
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.equality_count + self.lower.len() + self.upper.len() + self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Complementary slackness test on the solved pair.
///
/// Row `i` is lower-active when `(rᵢ − lᵢ) < −yᵢ + tol` and upper-active when
/// `(uᵢ − rᵢ) < yᵢ + tol`, with `r = Gz`. Rows with `l = u`, or where both
/// tests fire, are equalities and always active. Expects a solved pair.
pub fn detect_active(inst: &ConvexInstance, sol: &PrimalDualSolution, tol: f64) -> ActiveSet {
    let p = inst.n_eq();
    let r = inst
        .ineq_matrix
        .matvec(&sol.z)
        .expect("solution matches instance dimension");
    let y = sol.y_ineq(p);
    let mut act = ActiveSet {
        equality_count: p,
        ..Default::default()
    };
    for i in 0..inst.n_ineq() {
        let lower_hit = (r[i] - inst.lower[i]) < -y[i] + tol;
        let upper_hit = (inst.upper[i] - r[i]) < y[i] + tol;
        if inst.lower[i] == inst.upper[i] {
            act.fixed.push(i);
            continue;
        }
        match (lower_hit, upper_hit) {
            (true, true) => act.fixed.push(i),
            (true, false) => act.lower.push(i),
            (false, true) => act.upper.push(i),
            (false, false) => {}
        }
    }
    act
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowOrigin {
    Equality(usize),
    Fixed(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveJacobian {
    pub matrix: DenseMatrix,
    pub row_origin: Vec<RowOrigin>,
    /// Rows removed by the rank filter.
    pub dropped: Vec<RowOrigin>,
}

impl ActiveJacobian {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    /// Wraps an arbitrary matrix, tagging rows as equalities.
    pub fn from_matrix(matrix: DenseMatrix) -> Self {
        let row_origin = (0..matrix.rows()).map(RowOrigin::Equality).collect();
        Self {
            matrix,
            row_origin,
            dropped: Vec::new(),
        }
    }
}

/// Stacks `[A; G_𝒜]` and removes linearly dependent rows (equalities first).
pub fn assemble_jacobian(inst: &ConvexInstance, act: &ActiveSet) -> ActiveJacobian {
    let n = inst.n();
    let mut matrix = DenseMatrix::empty(n);
    let mut origin = Vec::new();
    for i in 0..inst.n_eq() {
        matrix.push_row(inst.eq_matrix.row(i)).expect("row width n");
        origin.push(RowOrigin::Equality(i));
    }
    let lower: std::collections::HashSet<_> = act.lower.iter().collect();
    let fixed: std::collections::HashSet<_> = act.fixed.iter().collect();
    for i in act.inequality_rows() {
        matrix.push_row(inst.ineq_matrix.row(i)).expect("row width n");
        origin.push(if fixed.contains(&i) {
            RowOrigin::Fixed(i)
        } else if lower.contains(&i) {
            RowOrigin::Lower(i)
        } else {
            RowOrigin::Upper(i)
        });
    }
    let kept = independent_rows(&matrix, RANK_TOL);
    if kept.len() == matrix.rows() {
        return ActiveJacobian {
            matrix,
            row_origin: origin,
            dropped: Vec::new(),
        };
    }
    let mut keep_flag = vec![false; origin.len()];
    kept.iter().for_each(|&i| keep_flag[i] = true);
    let dropped = origin
        .iter()
        .zip(&keep_flag)
        .filter(|(_, &k)| !k)
        .map(|(o, _)| *o)
        .collect();
    ActiveJacobian {
        matrix: matrix.select_rows(&kept),
        row_origin: kept.iter().map(|&i| origin[i]).collect(),
        dropped,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PearGradient {
    /// Tangent component `P_H e`.
    pub g: Vec<f64>,
    /// Normal component `H⁻¹Jᵀv`; `g + normal = H⁻¹e`.
    pub normal: Vec<f64>,
    /// Solution of the Schur system.
    pub dual: Vec<f64>,
}

fn regularized_schur_solve(mut s: DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let k = s.rows();
    // Average the two triangles so the factorization sees an exactly
    // symmetric matrix.
    for i in 0..k {
        for l in 0..i {
            let avg = 0.5 * (s[(i, l)] + s[(l, i)]);
            s[(i, l)] = avg;
            s[(l, i)] = avg;
        }
    }
    let delta = SCHUR_REG * s.trace() / k as f64;
    for i in 0..k {
        s[(i, i)] += delta;
    }
    let f = factor_spd(&s).map_err(|_| Error::SchurSingular { rows: k })?;
    let mut v = solve_spd(&f, rhs)?;
    // Iterative refinement against the unshifted matrix removes the bias
    // introduced by the shift whenever S itself is nonsingular.
    for _ in 0..REFINE_STEPS {
        let sv = s.matvec(&v)?;
        let resid: Vec<f64> = rhs
            .iter()
            .zip(&sv)
            .zip(&v)
            .map(|((b, a), vi)| b - (a - delta * vi))
            .collect();
        let dv = solve_spd(&f, &resid)?;
        linalg::axpy(1.0, &dv, &mut v);
    }
    Ok(v)
}

/// `g = P_H e` via the reduced Schur system, for any SPD curvature.
pub fn pear_gradient<H: SpdOperator + ?Sized>(h: &H, j: &DenseMatrix, e: &[f64]) -> Result<PearGradient> {
    let n = h.dim();
    check_len(n, e.len())?;
    check_len(n, j.cols())?;
    let x = h.solve(e);
    let k = j.rows();
    if k == 0 {
        return Ok(PearGradient {
            g: x,
            normal: vec![0.0; n],
            dual: Vec::new(),
        });
    }
    let r = j.matvec(&x)?;
    // Rows of `w` are H⁻¹Jᵢᵀ.
    let w: Vec<Vec<f64>> = (0..k).map(|i| h.solve(j.row(i))).collect();
    let mut s = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for l in 0..k {
            s[(i, l)] = linalg::dot(j.row(i), &w[l]);
        }
    }
    let v = regularized_schur_solve(s, &r)?;
    let mut normal = vec![0.0; n];
    for (vi, wi) in v.iter().zip(&w) {
        linalg::axpy(*vi, wi, &mut normal);
    }
    let g = x.iter().zip(&normal).map(|(a, b)| a - b).collect();
    Ok(PearGradient { g, normal, dual: v })
}

/// Specialization for `H = λI`: solves `JJᵀv = Je` and returns
/// `g = λ⁻¹(e − Jᵀv)`.
pub fn pear_gradient_lp(lambda: f64, j: &DenseMatrix, e: &[f64]) -> Result<PearGradient> {
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("smoothing must be positive, got {lambda}")));
    }
    let n = e.len();
    check_len(n, j.cols())?;
    let k = j.rows();
    if k == 0 {
        return Ok(PearGradient {
            g: e.iter().map(|v| v / lambda).collect(),
            normal: vec![0.0; n],
            dual: Vec::new(),
        });
    }
    let mut s = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for l in 0..=i {
            let v = linalg::dot(j.row(i), j.row(l));
            s[(i, l)] = v;
            s[(l, i)] = v;
        }
    }
    let v = regularized_schur_solve(s, &j.matvec(e)?)?;
    let jtv = j.tmatvec(&v)?;
    let g = e.iter().zip(&jtv).map(|(a, b)| (a - b) / lambda).collect();
    let normal = jtv.iter().map(|b| b / lambda).collect();
    Ok(PearGradient { g, normal, dual: v })
}

/// Norm-matched normal injection: `g + β·(‖g‖/‖n‖)·n`.
pub fn normal_inject(pg: &PearGradient, beta: f64) -> Vec<f64> {
    let gn = norm2(&pg.g);
    let nn = norm2(&pg.normal);
    if beta == 0.0 || gn == 0.0 || nn == 0.0 {
        return pg.g.clone();
    }
    let scale = beta * gn / nn;
    pg.g.iter().zip(&pg.normal).map(|(g, n)| g + scale * n).collect()
}

fn dense_inverse(h: &DenseMatrix) -> Result<DenseMatrix> {
    let f = factor_spd(h)?;
    let n = h.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = solve_spd(&f, &e)?;
        for (r, v) in col.into_iter().enumerate() {
            inv[(r, c)] = v;
        }
    }
    Ok(inv)
}

/// `H⁻¹Jᵀ S⁻¹` with `S = JH⁻¹Jᵀ`, unregularized. Returns `(H⁻¹, H⁻¹JᵀS⁻¹)`.
fn dense_pieces(h: &DenseMatrix, j: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    check_len(h.rows(), j.cols())?;
    let k = j.rows();
    if independent_rows(j, RANK_TOL).len() < k {
        return Err(Error::SchurSingular { rows: k });
    }
    let hinv = dense_inverse(h)?;
    let hinv_jt = hinv.matmul(&j.transpose())?;
    let s = j.matmul(&hinv_jt)?;
    let mut s_sym = s.clone();
    for i in 0..k {
        for l in 0..k {
            s_sym[(i, l)] = 0.5 * (s[(i, l)] + s[(l, i)]);
        }
    }
    let f = factor_spd(&s_sym).map_err(|_| Error::SchurSingular { rows: k })?;
    // (H⁻¹JᵀS⁻¹)ᵀ = S⁻¹JH⁻¹, solved column by column.
    let mut out = DenseMatrix::zeros(h.rows(), k);
    for r in 0..h.rows() {
        let row = solve_spd(&f, hinv_jt.row(r))?;
        out.row_mut(r).copy_from_slice(&row);
    }
    Ok((hinv, out))
}

/// Explicit `P_H`; verification only.
pub fn dense_projector(h: &DenseMatrix, j: &DenseMatrix) -> Result<DenseMatrix> {
    let (hinv, b) = dense_pieces(h, j)?;
    if j.rows() == 0 {
        return Ok(hinv);
    }
    // P = H⁻¹ − (H⁻¹JᵀS⁻¹)(JH⁻¹)
    let jhinv = j.matmul(&hinv)?;
    hinv.sub(&b.matmul(&jhinv)?)
}

/// Explicit `Π_H = I − H⁻¹Jᵀ(JH⁻¹Jᵀ)⁻¹J`; verification only.
pub fn tangent_projector(h: &DenseMatrix, j: &DenseMatrix) -> Result<DenseMatrix> {
    let n = h.rows();
    let (_, b) = dense_pieces(h, j)?;
    if j.rows() == 0 {
        return Ok(DenseMatrix::identity(n));
    }
    DenseMatrix::identity(n).sub(&b.matmul(j)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, Curvature, CurvatureFactor, SolveSettings, SolveStatus};
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn vec_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    fn single_row_solution(z: f64, y: f64) -> (ConvexInstance, PrimalDualSolution) {
        let inst = ConvexInstance::new(1, Curvature::ScaledIdentity(1.0))
            .with_inequalities(DenseMatrix::identity(1), vec![0.0], vec![1.0]);
        let sol = PrimalDualSolution {
            z: vec![z],
            y: vec![y],
            status: SolveStatus::Solved,
            stationarity_residual: 0.0,
            primal_residual: 0.0,
            iterations: 0,
        };
        (inst, sol)
    }

    #[test]
    fn detect_lower_upper_inactive() {
        let (inst, sol) = single_row_solution(0.0, -0.5);
        let act = detect_active(&inst, &sol, ACTIVE_TOL);
        assert_eq!(act.lower, vec![0]);
        assert!(act.upper.is_empty());

        let (inst, sol) = single_row_solution(1.0, 0.5);
        let act = detect_active(&inst, &sol, ACTIVE_TOL);
        assert_eq!(act.upper, vec![0]);
        assert!(act.lower.is_empty());

        let (inst, sol) = single_row_solution(0.5, 0.0);
        assert!(detect_active(&inst, &sol, ACTIVE_TOL).is_empty());
    }

    #[test]
    fn equal_bounds_classified_fixed() {
        let inst = ConvexInstance::new(1, Curvature::ScaledIdentity(1.0))
            .with_inequalities(DenseMatrix::identity(1), vec![0.3], vec![0.3])
            .with_cost(vec![0.0]);
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        let act = detect_active(&inst, &sol, ACTIVE_TOL);
        assert_eq!(act.fixed, vec![0]);
        assert_eq!(act.mask(1), vec![true]);
    }

    #[test]
    fn assemble_examples() {
        let a = m(&[&[1.0, 0.0]]);
        let g = m(&[&[0.0, 1.0], &[1.0, 1.0], &[2.0, 0.0]]);
        let inst = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0))
            .with_equalities(a.clone(), vec![0.0])
            .with_inequalities(g.clone(), vec![0.0; 3], vec![1.0; 3]);

        let act = ActiveSet {
            equality_count: 1,
            ..Default::default()
        };
        assert_eq!(assemble_jacobian(&inst, &act).matrix, a);

        let no_eq = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0)).with_inequalities(
            g.clone(),
            vec![0.0; 3],
            vec![1.0; 3],
        );
        let act = ActiveSet {
            upper: vec![2],
            ..Default::default()
        };
        let jac = assemble_jacobian(&no_eq, &act);
        assert_eq!(jac.matrix, m(&[&[2.0, 0.0]]));
        assert_eq!(jac.row_origin, vec![RowOrigin::Upper(2)]);

        // G row 2 = 2·A row 0 is dependent and dropped.
        let act = ActiveSet {
            lower: vec![2],
            equality_count: 1,
            ..Default::default()
        };
        let jac = assemble_jacobian(&inst, &act);
        assert_eq!(jac.matrix, a);
        assert_eq!(jac.dropped, vec![RowOrigin::Lower(2)]);
    }

    #[test]
    fn gradient_examples() {
        let id2 = CurvatureFactor::from_matrix(&DenseMatrix::identity(2)).unwrap();
        let j = m(&[&[1.0, 0.0]]);
        let pg = pear_gradient(&id2, &j, &[1.0, 1.0]).unwrap();
        vec_close(&pg.g, &[0.0, 1.0], 1e-12);
        vec_close(&pg.normal, &[1.0, 0.0], 1e-9);

        let h2 = CurvatureFactor::from_matrix(&DenseMatrix::from_diag(&[2.0, 2.0])).unwrap();
        let pg = pear_gradient(&h2, &DenseMatrix::empty(2), &[2.0, 4.0]).unwrap();
        vec_close(&pg.g, &[1.0, 2.0], 1e-14);
        vec_close(&pg.normal, &[0.0, 0.0], 0.0);

        let hd = CurvatureFactor::from_matrix(&DenseMatrix::from_diag(&[1.0, 2.0])).unwrap();
        let j = m(&[&[1.0, 1.0]]);
        let pg = pear_gradient(&hd, &j, &[1.0, 0.0]).unwrap();
        vec_close(&pg.g, &[1.0 / 3.0, -1.0 / 3.0], 1e-9);
        assert!(j.matvec(&pg.g).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn lp_gradient_examples() {
        let j = m(&[&[1.0, 0.0]]);
        let pg = pear_gradient_lp(1.0, &j, &[1.0, 1.0]).unwrap();
        vec_close(&pg.g, &[0.0, 1.0], 1e-9);
        let pg = pear_gradient_lp(0.1, &j, &[1.0, 1.0]).unwrap();
        vec_close(&pg.g, &[0.0, 10.0], 1e-8);
        let pg = pear_gradient_lp(0.1, &DenseMatrix::empty(2), &[1.0, 0.0]).unwrap();
        vec_close(&pg.g, &[10.0, 0.0], 1e-14);
        assert!(pear_gradient_lp(0.0, &j, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn injection_examples() {
        let pg = PearGradient {
            g: vec![0.0, 1.0],
            normal: vec![1.0, 0.0],
            dual: vec![],
        };
        vec_close(&normal_inject(&pg, 0.1), &[0.1, 1.0], 1e-15);
        assert_eq!(normal_inject(&pg, 0.0), pg.g);

        let pg = PearGradient {
            g: vec![3.0, 4.0],
            normal: vec![0.0, 2.0],
            dual: vec![],
        };
        vec_close(&normal_inject(&pg, 0.5), &[3.0, 6.5], 1e-15);

        let zero_normal = PearGradient {
            g: vec![3.0, 4.0],
            normal: vec![0.0, 0.0],
            dual: vec![],
        };
        assert_eq!(normal_inject(&zero_normal, 0.5), vec![3.0, 4.0]);
    }

    #[test]
    fn dense_projector_examples() {
        let p = dense_projector(&DenseMatrix::identity(2), &m(&[&[1.0, 0.0]])).unwrap();
        assert!(p.sub(&m(&[&[0.0, 0.0], &[0.0, 1.0]])).unwrap().max_abs() < 1e-15);

        let h = m(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let p = dense_projector(&h, &DenseMatrix::empty(2)).unwrap();
        let hinv = m(&[&[1.0 / 1.75, -0.5 / 1.75], &[-0.5 / 1.75, 2.0 / 1.75]]);
        assert!(p.sub(&hinv).unwrap().max_abs() < 1e-14);

        let p = dense_projector(&DenseMatrix::from_diag(&[1.0, 2.0]), &m(&[&[1.0, 1.0]])).unwrap();
        let col = p.matvec(&[1.0, 0.0]).unwrap();
        vec_close(&col, &[1.0 / 3.0, -1.0 / 3.0], 1e-14);
    }

    #[test]
    fn tangent_projector_examples() {
        let pi = tangent_projector(&DenseMatrix::identity(2), &m(&[&[1.0, 0.0]])).unwrap();
        assert!(pi.sub(&DenseMatrix::from_diag(&[0.0, 1.0])).unwrap().max_abs() < 1e-15);

        let h = m(&[&[3.0, 1.0, 0.0], &[1.0, 2.0, 0.5], &[0.0, 0.5, 1.5]]);
        let j = m(&[&[1.0, 2.0, -1.0]]);
        let pi = tangent_projector(&h, &j).unwrap();
        assert!(pi.matmul(&pi).unwrap().sub(&pi).unwrap().max_abs() < 1e-10);

        let p = dense_projector(&h, &j).unwrap();
        let hinv = dense_inverse(&h).unwrap();
        assert!(pi.matmul(&hinv).unwrap().sub(&p).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn duplicated_rows_are_singular_for_dense_path() {
        let j = m(&[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]);
        assert_eq!(
            dense_projector(&DenseMatrix::identity(3), &j),
            Err(Error::SchurSingular { rows: 2 })
        );
    }

    #[test]
    fn decomposition_sums_to_curvature_rescaled_error() {
        let h = m(&[&[3.0, 1.0, 0.0], &[1.0, 2.0, 0.5], &[0.0, 0.5, 1.5]]);
        let f = CurvatureFactor::from_matrix(&h).unwrap();
        let j = m(&[&[1.0, 2.0, -1.0], &[0.0, 1.0, 1.0]]);
        let e = [0.3, -1.2, 2.0];
        let pg = pear_gradient(&f, &j, &e).unwrap();
        let sum: Vec<f64> = pg.g.iter().zip(&pg.normal).map(|(a, b)| a + b).collect();
        vec_close(&sum, &f.solve(&e), 1e-12);
        for v in j.matvec(&pg.g).unwrap() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }
}
