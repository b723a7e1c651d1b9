//! Forward pass: strictly convex QPs of the form
//!
//! ```text
//!     minimize    ½ zᵀHz + costᵀz
//!     subject to  A z = b
//!                 l ≤ G z ≤ u
//! ```
//!
//! solved with the Goldfarb–Idnani dual active-set method. The method starts
//! from the unconstrained minimizer and adds violated constraints one at a
//! time while keeping the iterate dual feasible, so it terminates at an exact
//! KKT point (up to rounding) rather than an approximate one.
//!
//! Dual convention: the stationarity condition is
//! `Hz + cost + Aᵀy_eq + Gᵀy_ineq = 0`, so an inequality dual is negative
//! when its lower bound binds and positive when its upper bound binds.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, dot, factor_spd, independent_rows, norm_inf, DenseMatrix, SpdFactor};

/// Positive definite curvature of the quadratic term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Curvature {
    /// `H = λ·I`, the quadratic smoothing used for LPs.
    ScaledIdentity(f64),
    Explicit(DenseMatrix),
}

/// Applies `H⁻¹` through a factorization; `H` itself is never inverted.
pub trait SpdOperator {
    fn dim(&self) -> usize;
    fn solve(&self, rhs: &[f64]) -> Vec<f64>;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub enum CurvatureFactor {
    ScaledIdentity { dim: usize, lambda: f64 },
    Cholesky { h: DenseMatrix, factor: SpdFactor },
}

impl CurvatureFactor {
    pub fn new(curvature: &Curvature, dim: usize) -> Result<Self> {
        match curvature {
            Curvature::ScaledIdentity(lambda) => {
                if !(*lambda > 0.0) || !lambda.is_finite() {
                    return Err(Error::NotPositiveDefinite {
                        index: 0,
                        pivot: *lambda,
                    });
                }
                Ok(Self::ScaledIdentity {
                    dim,
                    lambda: *lambda,
                })
            }
            Curvature::Explicit(h) => {
                check_len(dim, h.rows())?;
                Ok(Self::Cholesky {
                    h: h.clone(),
                    factor: factor_spd(h)?,
                })
            }
        }
    }

    pub fn from_matrix(h: &DenseMatrix) -> Result<Self> {
        Self::new(&Curvature::Explicit(h.clone()), h.rows())
    }
}

impl SpdOperator for CurvatureFactor {
    fn dim(&self) -> usize {
        match self {
            Self::ScaledIdentity { dim, .. } => *dim,
            Self::Cholesky { factor, .. } => factor.dim(),
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Self::ScaledIdentity { lambda, .. } => rhs.iter().map(|v| v / lambda).collect(),
            Self::Cholesky { factor, .. } => {
                let mut x = rhs.to_vec();
                factor.forward_in_place(&mut x);
                factor.backward_in_place(&mut x);
                x
            }
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::ScaledIdentity { lambda, .. } => x.iter().map(|v| v * lambda).collect(),
            Self::Cholesky { h, .. } => h.matvec(x).expect("dimension checked at construction"),
        }
    }
}

/// One optimization problem. The cost slot is filled per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexInstance {
    pub curvature: Curvature,
    pub cost: Vec<f64>,
    pub eq_matrix: DenseMatrix,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: DenseMatrix,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConvexInstance {
    /// Unconstrained instance with zero cost.
    pub fn new(n: usize, curvature: Curvature) -> Self {
        Self {
            curvature,
            cost: vec![0.0; n],
            eq_matrix: DenseMatrix::empty(n),
            eq_rhs: Vec::new(),
            ineq_matrix: DenseMatrix::empty(n),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn with_equalities(mut self, a: DenseMatrix, b: Vec<f64>) -> Self {
        self.eq_matrix = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_inequalities(mut self, g: DenseMatrix, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.ineq_matrix = g;
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_cost(mut self, cost: Vec<f64>) -> Self {
        self.cost = cost;
        self
    }

    pub fn n(&self) -> usize {
        self.cost.len()
    }

    pub fn n_eq(&self) -> usize {
        self.eq_matrix.rows()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_matrix.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if let Curvature::Explicit(h) = &self.curvature {
            check_len(n, h.rows())?;
            check_len(n, h.cols())?;
        }
        check_len(n, self.eq_matrix.cols())?;
        check_len(self.eq_matrix.rows(), self.eq_rhs.len())?;
        check_len(n, self.ineq_matrix.cols())?;
        check_len(self.ineq_matrix.rows(), self.lower.len())?;
        check_len(self.ineq_matrix.rows(), self.upper.len())?;
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u || l.is_nan() || u.is_nan() {
                return Err(Error::Invalid(format!("row {i}: lower bound {l} exceeds upper {u}")));
            }
        }
        Ok(())
    }

    pub fn curvature_factor(&self) -> Result<CurvatureFactor> {
        CurvatureFactor::new(&self.curvature, self.n())
    }

    /// `H·z`
    pub fn curvature_apply(&self, z: &[f64]) -> Vec<f64> {
        match &self.curvature {
            Curvature::ScaledIdentity(l) => z.iter().map(|v| v * l).collect(),
            Curvature::Explicit(h) => h.matvec(z).expect("validated dimensions"),
        }
    }

    /// `½ zᵀHz + costᵀz` for an arbitrary cost vector.
    pub fn objective_with(&self, z: &[f64], cost: &[f64]) -> f64 {
        0.5 * dot(z, &self.curvature_apply(z)) + dot(cost, z)
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        self.objective_with(z, &self.cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Solved,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualSolution {
    pub z: Vec<f64>,
    /// Equality duals first, then one dual per inequality row.
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub stationarity_residual: f64,
    pub primal_residual: f64,
    pub iterations: usize,
}

impl PrimalDualSolution {
    pub fn y_eq(&self, p: usize) -> &[f64] {
        &self.y[..p]
    }

    pub fn y_ineq(&self, p: usize) -> &[f64] {
        &self.y[p..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

/// Recomputes the ∞-norms of the three KKT residual blocks.
pub fn kkt_report(inst: &ConvexInstance, z: &[f64], y: &[f64]) -> Result<KktReport> {
    inst.validate()?;
    let (p, m) = (inst.n_eq(), inst.n_ineq());
    check_len(inst.n(), z.len())?;
    check_len(p + m, y.len())?;

    let mut grad = inst.curvature_apply(z);
    linalg::axpy(1.0, &inst.cost, &mut grad);
    linalg::axpy(1.0, &inst.eq_matrix.tmatvec(&y[..p])?, &mut grad);
    linalg::axpy(1.0, &inst.ineq_matrix.tmatvec(&y[p..])?, &mut grad);
    let stationarity = norm_inf(&grad);

    let az = inst.eq_matrix.matvec(z)?;
    let mut primal = az
        .iter()
        .zip(&inst.eq_rhs)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    let gz = inst.ineq_matrix.matvec(z)?;
    let mut complementarity = 0.0f64;
    for i in 0..m {
        let (r, l, u, yi) = (gz[i], inst.lower[i], inst.upper[i], y[p + i]);
        primal = primal.max(l - r).max(r - u);
        let slack_term = if yi < 0.0 {
            -yi * (r - l)
        } else if yi > 0.0 {
            yi * (u - r)
        } else {
            0.0
        };
        complementarity = complementarity.max(slack_term.abs());
    }
    Ok(KktReport {
        stationarity,
        primal,
        complementarity,
    })
}

/// Sparse constraint normal in `≥` form: `normalᵀz ≥ rhs`.
#[derive(Debug, Clone)]
struct Constraint {
    idx: Vec<usize>,
    val: Vec<f64>,
    rhs: f64,
    norm: f64,
    kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// Equality row of `A` (or an inequality row with `l = u`); the sign
    /// records whether the normal was negated to make the step positive.
    Equality { dual_slot: usize, sign: f64 },
    Lower { dual_slot: usize },
    Upper { dual_slot: usize },
}

impl Constraint {
    fn from_row(row: &[f64], sign: f64, rhs: f64, kind: Kind) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                idx.push(j);
                val.push(sign * v);
            }
        }
        let norm = val.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            idx,
            val,
            rhs: sign * rhs,
            norm,
            kind,
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&j, v)| v * z[j]).sum()
    }

    fn slack(&self, z: &[f64]) -> f64 {
        self.eval(z) - self.rhs
    }

    fn flip(&mut self) {
        self.val.iter_mut().for_each(|v| *v = -*v);
        self.rhs = -self.rhs;
        if let Kind::Equality { sign, .. } = &mut self.kind {
            *sign = -*sign;
        }
    }
}

/// Goldfarb–Idnani workspace. `j` holds `L⁻ᵀQ` column-major and `r` the
/// upper triangular factor, so that `J₁ᵀN = R` for the active normals `N`.
struct DualActiveSet {
    n: usize,
    j: Vec<f64>,
    r: Vec<f64>,
    active: Vec<usize>,
    mult: Vec<f64>,
}

impl DualActiveSet {
    fn new(factor: &CurvatureFactor) -> Self {
        let n = factor.dim();
        let mut j = vec![0.0; n * n];
        match factor {
            CurvatureFactor::ScaledIdentity { lambda, .. } => {
                let s = 1.0 / lambda.sqrt();
                for k in 0..n {
                    j[k * n + k] = s;
                }
            }
            CurvatureFactor::Cholesky { factor, .. } => {
                for k in 0..n {
                    let col = &mut j[k * n..(k + 1) * n];
                    col[k] = 1.0;
                    factor.backward_in_place(col);
                }
            }
        }
        Self {
            n,
            j,
            r: vec![0.0; n * n],
            active: Vec::new(),
            mult: Vec::new(),
        }
    }

    fn q(&self) -> usize {
        self.active.len()
    }

    fn col(&self, k: usize) -> &[f64] {
        &self.j[k * self.n..(k + 1) * self.n]
    }

    fn r_at(&self, i: usize, k: usize) -> f64 {
        self.r[k * self.n + i]
    }

    /// `d = Jᵀ·normal`
    fn project(&self, c: &Constraint) -> Vec<f64> {
        (0..self.n)
            .map(|k| {
                let col = self.col(k);
                c.idx.iter().zip(&c.val).map(|(&i, v)| v * col[i]).sum()
            })
            .collect()
    }

    /// Primal direction `J₂d₂` and dual direction `R⁻¹d₁`.
    fn directions(&self, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, q) = (self.n, self.q());
        let mut z = vec![0.0; n];
        for k in q..n {
            if d[k] != 0.0 {
                linalg::axpy(d[k], self.col(k), &mut z);
            }
        }
        let mut r = d[..q].to_vec();
        for i in (0..q).rev() {
            let mut s = r[i];
            for k in i + 1..q {
                s -= self.r_at(i, k) * r[k];
            }
            r[i] = s / self.r_at(i, i);
        }
        (z, r)
    }

    fn rotate_cols(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let n = self.n;
        let (lo, hi) = self.j.split_at_mut(b * n);
        let ca = &mut lo[a * n..(a + 1) * n];
        let cb = &mut hi[..n];
        for (x, y) in ca.iter_mut().zip(cb.iter_mut()) {
            let (xa, yb) = (*x, *y);
            *x = c * xa + s * yb;
            *y = -s * xa + c * yb;
        }
    }

    fn add(&mut self, id: usize, mut d: Vec<f64>, mult: f64) {
        let (n, q) = (self.n, self.q());
        for k in (q + 1..n).rev() {
            let (a, b) = (d[k - 1], d[k]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[k - 1] = h;
            d[k] = 0.0;
            self.rotate_cols(k - 1, k, c, s);
        }
        if d[q] < 0.0 {
            d[q] = -d[q];
            self.j[q * n..(q + 1) * n].iter_mut().for_each(|v| *v = -*v);
        }
        for i in 0..=q {
            self.r[q * n + i] = d[i];
        }
        self.active.push(id);
        self.mult.push(mult);
    }

    fn drop(&mut self, pos: usize) {
        let (n, q) = (self.n, self.q());
        self.active.remove(pos);
        self.mult.remove(pos);
        for k in pos..q - 1 {
            for i in 0..n {
                self.r[k * n + i] = self.r[(k + 1) * n + i];
            }
        }
        for i in 0..n {
            self.r[(q - 1) * n + i] = 0.0;
        }
        for k in pos..q - 1 {
            let (a, b) = (self.r_at(k, k), self.r_at(k + 1, k));
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in k..q - 1 {
                let (x, y) = (self.r_at(k, col), self.r_at(k + 1, col));
                self.r[col * n + k] = c * x + s * y;
                self.r[col * n + k + 1] = -s * x + c * y;
            }
            self.r[k * n + k + 1] = 0.0;
            self.rotate_cols(k, k + 1, c, s);
        }
    }
}

enum Outcome {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Solves a [`ConvexInstance`] to an exact KKT point.
///
/// Errors are reserved for malformed input; convergence problems are
/// reported through [`PrimalDualSolution::status`].
pub fn solve(inst: &ConvexInstance, settings: &SolveSettings) -> Result<PrimalDualSolution> {
    inst.validate()?;
    let factor = inst.curvature_factor()?;
    solve_with_factor(inst, &factor, settings)
}

/// As [`solve`], reusing a curvature factorization across many cost vectors.
pub fn solve_with_factor(
    inst: &ConvexInstance,
    factor: &CurvatureFactor,
    settings: &SolveSettings,
) -> Result<PrimalDualSolution> {
    let n = inst.n();
    check_len(n, factor.dim())?;
    let (p, m) = (inst.n_eq(), inst.n_ineq());

    // Equality rows first, dependent ones dropped (their dual stays zero).
    let mut cons: Vec<Constraint> = Vec::new();
    for i in independent_rows(&inst.eq_matrix, linalg::RANK_TOL) {
        cons.push(Constraint::from_row(
            inst.eq_matrix.row(i),
            1.0,
            inst.eq_rhs[i],
            Kind::Equality {
                dual_slot: i,
                sign: 1.0,
            },
        ));
    }
    let mut ineq_cons = Vec::new();
    for i in 0..m {
        let row = inst.ineq_matrix.row(i);
        let (l, u) = (inst.lower[i], inst.upper[i]);
        if l == u {
            cons.push(Constraint::from_row(
                row,
                1.0,
                l,
                Kind::Equality {
                    dual_slot: p + i,
                    sign: 1.0,
                },
            ));
            continue;
        }
        if l.is_finite() {
            ineq_cons.push(Constraint::from_row(row, 1.0, l, Kind::Lower { dual_slot: p + i }));
        }
        if u.is_finite() {
            ineq_cons.push(Constraint::from_row(row, -1.0, u, Kind::Upper { dual_slot: p + i }));
        }
    }
    let n_forced = cons.len();
    cons.extend(ineq_cons);

    let feas_tol = (1e-3 * settings.eps_abs).max(1e-11);
    let mut ws = DualActiveSet::new(factor);
    let mut z: Vec<f64> = factor.solve(&inst.cost).into_iter().map(|v| -v).collect();
    let mut is_active = vec![false; cons.len()];
    // Satisfied constraints that are dependent on the current active set;
    // cleared whenever the active set grows.
    let mut parked: Vec<usize> = Vec::new();
    let mut next_forced = 0usize;
    let mut iterations = 0usize;

    let outcome = 'outer: loop {
        // Pick the constraint to add: pending equalities, then the most
        // violated inequality (normalized by the row norm).
        let pick = if next_forced < n_forced {
            let id = next_forced;
            next_forced += 1;
            if cons[id].slack(&z) > 0.0 {
                cons[id].flip();
            }
            Some(id)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for (id, c) in cons.iter().enumerate().skip(n_forced) {
                if is_active[id] || c.norm == 0.0 {
                    continue;
                }
                let s = c.slack(&z);
                if s < -feas_tol * (1.0 + c.rhs.abs()) {
                    let score = s / c.norm;
                    if best.is_none_or(|(_, b)| score < b) {
                        best = Some((id, score));
                    }
                }
            }
            best.map(|(id, _)| id)
        };
        let Some(id) = pick else {
            break Outcome::Optimal;
        };

        let mut mult_new = 0.0;
        loop {
            iterations += 1;
            if iterations > settings.max_iter {
                break 'outer Outcome::MaxIterations;
            }
            let c = &cons[id];
            let d = ws.project(c);
            let (step, dual_dir) = ws.directions(&d);
            let q = ws.q();

            // Partial step: largest move keeping active inequality duals ≥ 0.
            let mut t1 = f64::INFINITY;
            let mut drop_pos = None;
            for (pos, &rj) in dual_dir.iter().enumerate() {
                let is_ineq = !matches!(cons[ws.active[pos]].kind, Kind::Equality { .. });
                if is_ineq && rj > 0.0 {
                    let t = ws.mult[pos] / rj;
                    if t < t1 {
                        t1 = t;
                        drop_pos = Some(pos);
                    }
                }
            }

            // Full step: move onto the constraint.
            let d_norm = linalg::norm2(&d);
            let d2_norm = linalg::norm2(&d[q..]);
            let slack = c.slack(&z);
            let t2 = if d2_norm > 1e-12 * d_norm.max(1e-300) {
                let zn = c.eval(&step);
                -slack / zn
            } else {
                f64::INFINITY
            };

            if t1.is_infinite() && t2.is_infinite() {
                if slack >= -feas_tol * (1.0 + c.rhs.abs()) * 10.0 {
                    // Dependent on the active set and already satisfied.
                    is_active[id] = true;
                    parked.push(id);
                    continue 'outer;
                }
                break 'outer Outcome::Infeasible;
            }

            let t = t1.min(t2);
            if t2.is_finite() {
                linalg::axpy(t, &step, &mut z);
            }
            for (mj, rj) in ws.mult.iter_mut().zip(&dual_dir) {
                *mj -= t * rj;
            }
            mult_new += t;

            if t2 <= t1 {
                ws.add(id, d, mult_new);
                is_active[id] = true;
                for k in parked.drain(..) {
                    is_active[k] = false;
                }
                continue 'outer;
            }
            let pos = drop_pos.expect("finite partial step has a blocking constraint");
            is_active[ws.active[pos]] = false;
            ws.drop(pos);
        }
    };

    let mut y = vec![0.0; p + m];
    for (&id, &mu) in ws.active.iter().zip(&ws.mult) {
        match cons[id].kind {
            Kind::Equality { dual_slot, sign } => y[dual_slot] = -sign * mu,
            Kind::Lower { dual_slot } => y[dual_slot] = -mu,
            Kind::Upper { dual_slot } => y[dual_slot] = mu,
        }
    }

    let report = kkt_report(inst, &z, &y)?;
    let status = match outcome {
        Outcome::Infeasible => SolveStatus::Infeasible,
        Outcome::MaxIterations => SolveStatus::MaxIterations,
        Outcome::Optimal => {
            let scale_p = norm_inf(&inst.eq_rhs)
                .max(norm_inf(&inst.ineq_matrix.matvec(&z)?))
                .max(1.0);
            let scale_d = norm_inf(&inst.cost).max(norm_inf(&inst.curvature_apply(&z))).max(1.0);
            if report.primal > settings.eps_abs + settings.eps_rel * scale_p {
                SolveStatus::Infeasible
            } else if report.stationarity > settings.eps_abs + settings.eps_rel * scale_d {
                SolveStatus::MaxIterations
            } else {
                SolveStatus::Solved
            }
        }
    };
    Ok(PrimalDualSolution {
        z,
        y,
        status,
        stationarity_residual: report.stationarity,
        primal_residual: report.primal,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_box(cost: f64, l: f64, u: f64) -> ConvexInstance {
        ConvexInstance::new(1, Curvature::ScaledIdentity(1.0))
            .with_inequalities(DenseMatrix::identity(1), vec![l], vec![u])
            .with_cost(vec![cost])
    }

    #[test]
    fn lower_bound_binds_with_negative_dual() {
        let sol = solve(&scalar_box(0.0, 1.0, 2.0), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        assert_abs_diff_eq!(sol.z[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y[0], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn upper_bound_binds_with_positive_dual() {
        let sol = solve(&scalar_box(-3.0, 1.0, 2.0), &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        assert_abs_diff_eq!(sol.z[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_equality() {
        let inst = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0))
            .with_equalities(DenseMatrix::from_rows(&[[1.0, 1.0]]).unwrap(), vec![1.0]);
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        assert_abs_diff_eq!(sol.z[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.z[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y[0], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn kkt_report_examples() {
        let inst = scalar_box(0.0, 1.0, 2.0);
        let exact = kkt_report(&inst, &[1.0], &[-1.0]).unwrap();
        assert!(exact.stationarity <= 1e-12 && exact.primal <= 1e-12 && exact.complementarity <= 1e-12);

        let off = kkt_report(&inst, &[1.1], &[-1.0]).unwrap();
        assert!(off.primal <= 1e-12);
        assert_abs_diff_eq!(off.stationarity, 0.1, epsilon = 1e-12);

        let h = DenseMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let free = ConvexInstance::new(2, Curvature::Explicit(h.clone())).with_cost(vec![1.0, -2.0]);
        let f = CurvatureFactor::from_matrix(&h).unwrap();
        let z: Vec<f64> = f.solve(&free.cost).iter().map(|v| -v).collect();
        let rep = kkt_report(&free, &z, &[]).unwrap();
        assert!(rep.stationarity <= 1e-12);

        assert!(matches!(kkt_report(&inst, &[1.0, 2.0], &[0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(kkt_report(&inst, &[1.0], &[]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        // Same row twice with consistent right-hand sides.
        let a = DenseMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        let inst = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0)).with_equalities(a, vec![1.0, 2.0]);
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        assert_abs_diff_eq!(sol.z[0], 0.5, epsilon = 1e-12);
        assert_eq!(sol.y[1], 0.0);
    }

    #[test]
    fn inconsistent_constraints_are_infeasible() {
        let a = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let inst = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0)).with_equalities(a, vec![1.0, 2.0]);
        assert_eq!(solve(&inst, &SolveSettings::default()).unwrap().status, SolveStatus::Infeasible);

        let g = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let inst = ConvexInstance::new(1, Curvature::ScaledIdentity(1.0)).with_inequalities(
            g,
            vec![2.0, f64::NEG_INFINITY],
            vec![f64::INFINITY, 1.0],
        );
        assert_eq!(solve(&inst, &SolveSettings::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn equal_bounds_act_as_equality() {
        let g = DenseMatrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let inst = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0))
            .with_inequalities(g, vec![1.0], vec![1.0])
            .with_cost(vec![1.0, 0.0]);
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        // z = -(c + y·1) with z0 + z1 = 1 gives y = -1, z = (0, 1).
        assert_abs_diff_eq!(sol.z[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.z[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y[0], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_bounds_rejected() {
        let inst = scalar_box(0.0, 2.0, 1.0);
        assert!(matches!(solve(&inst, &SolveSettings::default()), Err(Error::Invalid(_))));
    }
}
