//! Independent checks of the gradient machinery: finite differences of the
//! smoothed regret, explicit projector identities, normal invariance,
//! dense-vs-reduced equivalence, exhaustive oracles for the combinatorial
//! solvers, and the active-set stability probe.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{substream, DataView, STREAM_VERIFY};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, independent_rows, norm2, norm_inf, DenseMatrix, RANK_TOL};
use crate::problems::{exact_grid_path, exact_knapsack, Benchmark, GridPathProblem, KnapsackProblem, Orientation};
use crate::sensitivity::{
    assemble_jacobian, dense_projector, detect_active, pear_gradient, pear_gradient_lp, tangent_projector,
    ActiveSet, PearGradient, ACTIVE_TOL,
};
use crate::solver::{self, ConvexInstance, Curvature, CurvatureFactor, PrimalDualSolution, SolveSettings, SolveStatus, SpdOperator};
use crate::train::{grad_pear, LinearModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub descriptor: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub skipped: usize,
}

impl CheckReport {
    pub fn new(name: &str, descriptor: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            descriptor: descriptor.into(),
            max_error,
            tolerance,
            pass: max_error <= tolerance,
            skipped: 0,
        }
    }

    /// Folds `other` into `self`, keeping the worst error.
    pub fn absorb(&mut self, other: &CheckReport) {
        if other.max_error > self.max_error || other.max_error.is_nan() {
            self.max_error = other.max_error;
            self.descriptor = other.descriptor.clone();
        }
        self.skipped += other.skipped;
        self.pass = self.max_error <= self.tolerance;
    }

    pub fn line(&self) -> String {
        format!("{},{:e},{:e},{}", self.name, self.max_error, self.tolerance, self.pass)
    }
}

fn describe(inst: &ConvexInstance) -> String {
    format!("n={} p={} m={}", inst.n(), inst.n_eq(), inst.n_ineq())
}

fn solved(inst: &ConvexInstance) -> Result<PrimalDualSolution> {
    let sol = solver::solve(inst, &SolveSettings::default())?;
    if sol.status != SolveStatus::Solved {
        return Err(Error::SolveFailed(sol.status));
    }
    Ok(sol)
}

fn with_cost(inst: &ConvexInstance, cost: &[f64]) -> ConvexInstance {
    inst.clone().with_cost(cost.to_vec())
}

// ---------------------------------------------------------------------------
// Finite differences

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiff {
    pub grad: Vec<f64>,
    /// Coordinates whose ±h perturbation changed the detected active set.
    pub skipped: Vec<bool>,
}

impl FiniteDiff {
    pub fn skipped_count(&self) -> usize {
        self.skipped.iter().filter(|&&s| s).count()
    }

    /// `‖fd − g‖∞ / max(‖g‖∞, floor)` over the kept coordinates.
    pub fn relative_error(&self, g: &[f64], floor: f64) -> f64 {
        let scale = norm_inf(g).max(floor).max(f64::MIN_POSITIVE);
        self.grad
            .iter()
            .zip(g)
            .zip(&self.skipped)
            .filter(|(_, &s)| !s)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Central differences of `ĉ ↦ φ(z*(ĉ)) + cᵀz*(ĉ)`, the smoothed-objective
/// regret up to a constant.
pub fn finite_diff_regret(inst: &ConvexInstance, c_hat: &[f64], c: &[f64], h: f64) -> Result<FiniteDiff> {
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("step {h} must be positive")));
    }
    let n = inst.n();
    check_len(n, c_hat.len())?;
    check_len(n, c.len())?;
    let base = {
        let i = with_cost(inst, c_hat);
        let sol = solved(&i)?;
        detect_active(&i, &sol, ACTIVE_TOL)
    };
    let value = |cost: &[f64]| -> Result<(f64, ActiveSet)> {
        let i = with_cost(inst, cost);
        let sol = solved(&i)?;
        Ok((i.objective_with(&sol.z, c), detect_active(&i, &sol, ACTIVE_TOL)))
    };
    let mut grad = vec![0.0; n];
    let mut skipped = vec![false; n];
    let mut probe = c_hat.to_vec();
    for k in 0..n {
        probe[k] = c_hat[k] + h;
        let (fp, ap) = value(&probe)?;
        probe[k] = c_hat[k] - h;
        let (fm, am) = value(&probe)?;
        probe[k] = c_hat[k];
        grad[k] = (fp - fm) / (2.0 * h);
        skipped[k] = ap != base || am != base;
    }
    Ok(FiniteDiff { grad, skipped })
}

/// PEAR gradient (no injection) at `c_hat`, for comparison with
/// [`finite_diff_regret`].
pub fn pear_at(inst: &ConvexInstance, c_hat: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let mut i = inst.clone();
    let factor = i.curvature_factor()?;
    grad_pear(&mut i, &factor, c_hat, c, 0.0, &SolveSettings::default())
}

pub fn finite_diff_check(inst: &ConvexInstance, c_hat: &[f64], c: &[f64], h: f64) -> Result<CheckReport> {
    let fd = finite_diff_regret(inst, c_hat, c, h)?;
    let g = pear_at(inst, c_hat, c)?;
    // When the projection removes nearly everything, measure against the
    // unprojected signal H⁻¹e instead of a vanishing g.
    let e: Vec<f64> = c_hat.iter().zip(c).map(|(a, b)| a - b).collect();
    let floor = 1e-2 * norm_inf(&inst.curvature_factor()?.solve(&e));
    let mut rep = CheckReport::new("finite_diff_regret", describe(inst), fd.relative_error(&g, floor), 1e-4);
    rep.skipped = fd.skipped_count();
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Projector identities and the reduced system

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    Ok(a.sub(b)?.max_abs())
}

fn dense_inverse(h: &DenseMatrix) -> Result<DenseMatrix> {
    // Same map as the projector with no constraints.
    dense_projector(h, &DenseMatrix::empty(h.rows()))
}

/// Max entrywise deviation over `JP = 0`, `PJᵀ = 0`, `Π² = Π`, `P = ΠH⁻¹`
/// and `P = Pᵀ`.
pub fn check_projection_identities(h: &DenseMatrix, j: &DenseMatrix) -> Result<CheckReport> {
    let p = dense_projector(h, j)?;
    let pi = tangent_projector(h, j)?;
    let hinv = dense_inverse(h)?;
    let zero_jp = j.matmul(&p)?.max_abs();
    let zero_pjt = p.matmul(&j.transpose())?.max_abs();
    let idem = max_abs_diff(&pi.matmul(&pi)?, &pi)?;
    let factor = max_abs_diff(&p, &pi.matmul(&hinv)?)?;
    let sym = max_abs_diff(&p, &p.transpose())?;
    let err = zero_jp.max(zero_pjt).max(idem).max(factor).max(sym);
    Ok(CheckReport::new(
        "projection_identities",
        format!("n={} k={}", h.rows(), j.rows()),
        err,
        1e-8,
    ))
}

/// Fault injected into [`schur_vs_dense_with`] to confirm the check can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mutation {
    #[default]
    None,
    /// Adds the normal component back instead of subtracting it.
    FlipRecoverySign,
}

pub fn schur_vs_dense(h: &DenseMatrix, j: &DenseMatrix, e: &[f64]) -> Result<CheckReport> {
    schur_vs_dense_with(h, j, e, Mutation::None)
}

/// `‖pear_gradient − P_H e‖ / (1 + ‖e‖)`.
pub fn schur_vs_dense_with(h: &DenseMatrix, j: &DenseMatrix, e: &[f64], mutation: Mutation) -> Result<CheckReport> {
    let factor = CurvatureFactor::from_matrix(h)?;
    let PearGradient { mut g, normal, .. } = pear_gradient(&factor, j, e)?;
    if mutation == Mutation::FlipRecoverySign {
        for (gi, ni) in g.iter_mut().zip(&normal) {
            *gi += 2.0 * ni;
        }
    }
    let pe = dense_projector(h, j)?.matvec(e)?;
    let diff: Vec<f64> = g.iter().zip(&pe).map(|(a, b)| a - b).collect();
    Ok(CheckReport::new(
        "schur_vs_dense",
        format!("n={} k={}", h.rows(), j.rows()),
        norm2(&diff) / (1.0 + norm2(e)),
        1e-9,
    ))
}

/// The `λI` specialization against the general path with `H = λI`.
pub fn lp_vs_general(lambda: f64, j: &DenseMatrix, e: &[f64]) -> Result<CheckReport> {
    let n = e.len();
    let lp = pear_gradient_lp(lambda, j, e)?;
    let factor = CurvatureFactor::new(&Curvature::ScaledIdentity(lambda), n)?;
    let gen = pear_gradient(&factor, j, e)?;
    let err = lp
        .g
        .iter()
        .zip(&gen.g)
        .chain(lp.normal.iter().zip(&gen.normal))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(CheckReport::new("lp_vs_general", format!("n={n} k={} lambda={lambda}", j.rows()), err, 1e-10))
}

/// `H(g + n) = e`: the tangent and normal parts recombine into the MSE
/// gradient.
pub fn mse_decomposition(h: &DenseMatrix, j: &DenseMatrix, e: &[f64]) -> Result<CheckReport> {
    let factor = CurvatureFactor::from_matrix(h)?;
    let pg = pear_gradient(&factor, j, e)?;
    let sum: Vec<f64> = pg.g.iter().zip(&pg.normal).map(|(a, b)| a + b).collect();
    let hs = h.matvec(&sum)?;
    let err = hs.iter().zip(e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(CheckReport::new("mse_decomposition", format!("n={} k={}", h.rows(), j.rows()), err, 1e-8))
}

// ---------------------------------------------------------------------------
// Normal invariance and active-set stability

/// Shifts `ĉ` along random normal directions `Jᵀv`, halving the step until
/// the active set is preserved, and compares gradients. Trials that need
/// `α ≤ 1e-10` are counted as skipped.
pub fn check_normal_invariance(
    inst: &ConvexInstance,
    c_hat: &[f64],
    c: &[f64],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<CheckReport> {
    let base_inst = with_cost(inst, c_hat);
    let sol = solved(&base_inst)?;
    let act = detect_active(&base_inst, &sol, ACTIVE_TOL);
    let jac = assemble_jacobian(&base_inst, &act);
    let g0 = pear_at(inst, c_hat, c)?;
    let mut rep = CheckReport::new("normal_invariance", describe(inst), 0.0, 1e-6);
    if jac.rows() == 0 {
        return Ok(rep);
    }
    for _ in 0..trials {
        let v: Vec<f64> = (0..jac.rows()).map(|_| rng.sample(StandardNormal)).collect();
        let dir = jac.matrix.tmatvec(&v)?;
        let mut alpha = 1.0 / norm2(&dir).max(1e-300);
        let mut found = false;
        while alpha > 1e-10 {
            let shifted: Vec<f64> = c_hat.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
            let si = with_cost(inst, &shifted);
            if let Ok(s) = solved(&si) {
                if detect_active(&si, &s, ACTIVE_TOL) == act {
                    // Shift the target too so the error e is unchanged.
                    let shifted_c: Vec<f64> = c.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
                    let g = pear_at(inst, &shifted, &shifted_c)?;
                    let err = g.iter().zip(&g0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    rep.absorb(&CheckReport::new("normal_invariance", describe(inst), err, 1e-6));
                    found = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !found {
            rep.skipped += 1;
        }
    }
    Ok(rep)
}

/// Mean over `trials` of `(100/m)·Σ 𝕀[aᵢ ≠ a′ᵢ]`, where `a′` is the activity
/// pattern after scaling each cost entry by `1 + scale·U(−1, 1)`.
pub fn active_set_change_rate(
    inst: &ConvexInstance,
    c_hat: &[f64],
    scale: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if !(scale >= 0.0) {
        return Err(Error::Invalid(format!("scale {scale} must be non-negative")));
    }
    let m = inst.n_ineq();
    if m == 0 || trials == 0 {
        return Ok(0.0);
    }
    let factor = inst.curvature_factor()?;
    let mut work = with_cost(inst, c_hat);
    let mask_for = |work: &ConvexInstance| -> Result<Vec<bool>> {
        let sol = solver::solve_with_factor(work, &factor, &SolveSettings::default())?;
        if sol.status != SolveStatus::Solved {
            return Err(Error::SolveFailed(sol.status));
        }
        Ok(detect_active(work, &sol, ACTIVE_TOL).mask(m))
    };
    let base = mask_for(&work)?;
    let mut total = 0.0;
    for _ in 0..trials {
        for (w, c) in work.cost.iter_mut().zip(c_hat) {
            *w = c * (1.0 + scale * rng.random_range(-1.0..=1.0));
        }
        let mask = mask_for(&work)?;
        let changed = mask.iter().zip(&base).filter(|(a, b)| a != b).count();
        total += 100.0 * changed as f64 / m as f64;
    }
    Ok(total / trials as f64)
}

/// [`active_set_change_rate`] averaged over the model's predictions on a view.
pub fn benchmark_change_rate(
    bench: &Benchmark,
    model: &LinearModel,
    view: &DataView<'_>,
    lambda_smooth: f64,
    scale: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let inst = bench.training_instance(lambda_smooth)?;
    let mut total = 0.0;
    for i in 0..view.len() {
        let c_hat = bench.to_slot(&model.predict(view.features(i))?);
        total += active_set_change_rate(&inst, &c_hat, scale, trials, rng)?;
    }
    Ok(if view.is_empty() { 0.0 } else { total / view.len() as f64 })
}

// ---------------------------------------------------------------------------
// Exhaustive oracles

/// Every source–target path as a 0/1 edge vector, in lexicographic order
/// of edge-index sequences.
pub fn enumerate_grid_paths(p: &GridPathProblem) -> Vec<Vec<f64>> {
    let edges = p.edges();
    let mut out = Vec::new();
    let mut stack = Vec::new();
    fn walk(
        v: usize,
        target: usize,
        edges: &[(usize, usize)],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if v == target {
            let mut z = vec![0.0; edges.len()];
            for &e in stack.iter() {
                z[e] = 1.0;
            }
            out.push(z);
            return;
        }
        for (e, &(tail, head)) in edges.iter().enumerate() {
            if tail == v {
                stack.push(e);
                walk(head, target, edges, stack, out);
                stack.pop();
            }
        }
    }
    walk(p.source(), p.target(), &edges, &mut stack, &mut out);
    out
}

/// Brute-force best 0/1 selection (n ≤ 20).
pub fn enumerate_knapsack(p: &KnapsackProblem, values: &[f64]) -> (Vec<f64>, f64) {
    let n = p.n();
    assert!(n <= 20, "enumeration limited to 20 items");
    let cap = p.capacity();
    let mut best = (vec![0.0; n], 0.0);
    for mask in 0u32..(1 << n) {
        let (mut w, mut v) = (0.0, 0.0);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                w += p.weights[i] as f64;
                v += values[i];
            }
        }
        if w <= cap + 1e-9 && v > best.1 {
            best = ((0..n).map(|i| (mask >> i & 1) as f64).collect(), v);
        }
    }
    best
}

/// Grid DP against enumeration on `samples` random cost vectors.
pub fn grid_dp_check(p: &GridPathProblem, samples: usize, rng: &mut impl Rng) -> Result<CheckReport> {
    let paths = enumerate_grid_paths(p);
    let mut err: f64 = 0.0;
    for _ in 0..samples {
        let costs: Vec<f64> = (0..p.edge_count()).map(|_| rng.random_range(0.0..1.0)).collect();
        let dp = exact_grid_path(p, &costs)?;
        let (best_z, best_v) = paths
            .iter()
            .map(|z| (z, dot(&costs, z)))
            .fold((&paths[0], f64::INFINITY), |acc, (z, v)| if v < acc.1 { (z, v) } else { acc });
        let mismatch = if &dp.z == best_z { 0.0 } else { 1.0 };
        err = err.max((dp.objective_value - best_v).abs()).max(mismatch);
    }
    Ok(CheckReport::new(
        "grid_dp_enumeration",
        format!("{}x{} paths={}", p.rows, p.cols, paths.len()),
        err,
        1e-9,
    ))
}

/// Knapsack DP against subset enumeration for random instances with
/// `n ≤ max_n`.
pub fn knapsack_dp_check(max_n: usize, samples: usize, rng: &mut impl Rng) -> Result<CheckReport> {
    let mut err: f64 = 0.0;
    for s in 0..samples {
        let n = 1 + s % max_n;
        let ratio = rng.random_range(0.1..0.9);
        let p = KnapsackProblem::random(n, ratio, rng)?;
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..5.0)).collect();
        let dp = exact_knapsack(&p, &values)?;
        let (_, best) = enumerate_knapsack(&p, &values);
        err = err.max((dp.objective_value - best).abs());
    }
    Ok(CheckReport::new("knapsack_dp_enumeration", format!("n<={max_n}"), err, 1e-9))
}

// ---------------------------------------------------------------------------
// Random instances

/// `MMᵀ/n + 0.5·I` with standard normal `M`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let m: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = dot(&m[i * n..(i + 1) * n], &m[j * n..(j + 1) * n]) / n as f64 + if i == j { 0.5 } else { 0.0 };
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("finite")
}

pub fn random_vector(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Feasible random QP: box `[−1, 1]`, up to two equalities and one general
/// inequality through an interior point. `lp` selects `λI` curvature.
pub fn random_qp(n: usize, lp: bool, rng: &mut impl Rng) -> ConvexInstance {
    let curvature = if lp {
        Curvature::ScaledIdentity(rng.random_range(0.1..1.0))
    } else {
        Curvature::Explicit(random_spd(n, rng))
    };
    let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let p = rng.random_range(0..=2.min(n - 1));
    let a = random_matrix(p, n, rng);
    let b = a.matvec(&z0).expect("dims");
    let mut g = DenseMatrix::identity(n);
    let row = random_vector(n, rng);
    let rhs = dot(&row, &z0) + 0.5;
    g.push_row(&row).expect("dims");
    let mut lower = vec![-1.0; n];
    let mut upper = vec![1.0; n];
    lower.push(f64::NEG_INFINITY);
    upper.push(rhs);
    ConvexInstance::new(n, curvature)
        .with_equalities(a, b)
        .with_inequalities(g, lower, upper)
}

/// Strict complementarity with margin: inactive rows have slack above
/// `margin`, active rows have `|y|` above it.
pub fn is_nondegenerate(inst: &ConvexInstance, sol: &PrimalDualSolution, margin: f64) -> bool {
    let r = inst.ineq_matrix.matvec(&sol.z).expect("dims");
    let y = sol.y_ineq(inst.n_eq());
    if independent_rows(&inst.eq_matrix, RANK_TOL).len() < inst.n_eq() {
        return false;
    }
    let act = detect_active(inst, sol, ACTIVE_TOL);
    let mask = act.mask(inst.n_ineq());
    for i in 0..inst.n_ineq() {
        let slack = (r[i] - inst.lower[i]).min(inst.upper[i] - r[i]);
        if mask[i] {
            if y[i].abs() <= margin {
                return false;
            }
        } else if slack <= margin {
            return false;
        }
    }
    let jac = assemble_jacobian(inst, &act);
    jac.dropped.is_empty()
}

/// A random smoothed instance with costs `(ĉ, c)` whose solution at `ĉ`
/// is non-degenerate, drawn by rejection.
pub fn random_nondegenerate(n: usize, lp: bool, rng: &mut impl Rng) -> (ConvexInstance, Vec<f64>, Vec<f64>) {
    loop {
        let inst = random_qp(n, lp, rng);
        let c_hat: Vec<f64> = random_vector(n, rng).into_iter().map(|v| 2.0 * v).collect();
        let c: Vec<f64> = c_hat.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        let probe = with_cost(&inst, &c_hat);
        if let Ok(sol) = solved(&probe) {
            if is_nondegenerate(&probe, &sol, 1e-3) {
                return (inst, c_hat, c);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Suite

/// Runs every check on instances drawn from `seed`.
pub fn run_suite(seed: u64, mutation: Mutation) -> Result<Vec<CheckReport>> {
    let mut rng = substream(seed, STREAM_VERIFY);
    let rng = &mut rng;
    let mut reports = Vec::new();

    let mut proj = CheckReport::new("projection_identities", "", 0.0, 1e-8);
    let mut schur = CheckReport::new("schur_vs_dense", "", 0.0, 1e-9);
    let mut lp = CheckReport::new("lp_vs_general", "", 0.0, 1e-10);
    let mut decomp = CheckReport::new("mse_decomposition", "", 0.0, 1e-8);
    for t in 0..20 {
        let n = 2 + t % 19;
        let k = 1 + rng.random_range(0..n);
        let h = random_spd(n, rng);
        let j = random_matrix(k, n, rng);
        let e = random_vector(n, rng);
        proj.absorb(&check_projection_identities(&h, &j)?);
        decomp.absorb(&mse_decomposition(&h, &j, &e)?);
        lp.absorb(&lp_vs_general(rng.random_range(0.01..1.0), &j, &e)?);
        let (h20, j7, e20) = (random_spd(20, rng), random_matrix(7, 20, rng), random_vector(20, rng));
        schur.absorb(&schur_vs_dense_with(&h20, &j7, &e20, mutation)?);
    }

    // A duplicated row must be rejected before filtering and pass after.
    let h = random_spd(6, rng);
    let mut j = random_matrix(3, 6, rng);
    let dup = j.row(0).to_vec();
    j.push_row(&dup)?;
    let rejected = matches!(tangent_projector(&h, &j), Err(Error::SchurSingular { .. }));
    let filtered = j.select_rows(&independent_rows(&j, RANK_TOL));
    let mut licq = check_projection_identities(&h, &filtered)?;
    licq.name = "projection_licq_filter".into();
    if !rejected {
        licq.absorb(&CheckReport::new("projection_licq_filter", "duplicate accepted", f64::INFINITY, 1e-8));
    }
    reports.extend([proj, licq, schur, lp, decomp]);

    let mut fd = CheckReport::new("finite_diff_regret", "", 0.0, 1e-4);
    let mut coords = 0usize;
    let mut inv = CheckReport::new("normal_invariance", "", 0.0, 1e-6);
    for t in 0..20 {
        let n = 2 + t % 9;
        let (inst, c_hat, c) = random_nondegenerate(n, t % 2 == 0, rng);
        fd.absorb(&finite_diff_check(&inst, &c_hat, &c, 1e-5)?);
        coords += n;
        inv.absorb(&check_normal_invariance(&inst, &c_hat, &c, 3, rng)?);
    }
    let skip_fraction = fd.skipped as f64 / coords as f64;
    reports.push(fd);
    reports.push(CheckReport::new("finite_diff_skip_fraction", format!("coords={coords}"), skip_fraction, 0.2));
    reports.push(inv);

    reports.push(grid_dp_check(&GridPathProblem::default(), 50, rng)?);
    let mut cross = grid_dp_check(&GridPathProblem::new(5, 5, Orientation::Cross), 50, rng)?;
    cross.name = "grid_dp_enumeration_cross".into();
    reports.push(cross);
    reports.push(knapsack_dp_check(12, 48, rng)?);
    Ok(reports)
}

/// One `name,error,tolerance,pass` line per report, after a header.
pub fn format_reports(reports: &[CheckReport]) -> String {
    let mut s = String::from("name,error,tolerance,pass\n");
    for r in reports {
        let _ = writeln!(s, "{}", r.line());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn finite_diff_examples() {
        let inst = ConvexInstance::new(2, Curvature::Explicit(m(&[&[1.0, 0.0], &[0.0, 2.0]])))
            .with_equalities(m(&[&[1.0, 1.0]]), vec![0.0]);
        let fd = finite_diff_regret(&inst, &[1.0, 0.0], &[0.0, 0.0], 1e-5).unwrap();
        assert_abs_diff_eq!(fd.grad[0], 1.0 / 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fd.grad[1], -1.0 / 3.0, epsilon = 1e-8);
        assert_eq!(fd.skipped_count(), 0);

        let same = finite_diff_regret(&inst, &[0.4, -0.2], &[0.4, -0.2], 1e-5).unwrap();
        assert!(norm_inf(&same.grad) < 1e-8);

        let pinned = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0))
            .with_equalities(m(&[&[1.0, 0.0], &[0.0, 1.0]]), vec![0.2, 0.3]);
        let fd = finite_diff_regret(&pinned, &[1.0, -1.0], &[0.0, 0.0], 1e-5).unwrap();
        assert!(norm_inf(&fd.grad) < 1e-9);
        assert!(finite_diff_regret(&pinned, &[1.0, -1.0], &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let rep = check_projection_identities(&DenseMatrix::identity(2), &m(&[&[1.0, 0.0]])).unwrap();
        assert!(rep.max_error < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rep = check_projection_identities(&random_spd(12, &mut rng), &random_matrix(5, 12, &mut rng)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn schur_examples() {
        let rep = schur_vs_dense(&DenseMatrix::identity(2), &m(&[&[1.0, 0.0]]), &[1.0, 1.0]).unwrap();
        assert!(rep.max_error < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (h, j, e) = (random_spd(20, &mut rng), random_matrix(7, 20, &mut rng), random_vector(20, &mut rng));
        assert!(schur_vs_dense(&h, &j, &e).unwrap().pass);
        let broken = schur_vs_dense_with(&h, &j, &e, Mutation::FlipRecoverySign).unwrap();
        assert!(!broken.pass);
        assert!(lp_vs_general(0.3, &j, &e).unwrap().pass);
    }

    #[test]
    fn normal_invariance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = ConvexInstance::new(3, Curvature::ScaledIdentity(0.5))
            .with_equalities(m(&[&[1.0, 1.0, 1.0]]), vec![1.0]);
        let rep = check_normal_invariance(&inst, &[0.3, -0.1, 0.2], &[0.0; 3], 5, &mut rng).unwrap();
        assert!(rep.pass && rep.skipped == 0);

        let boxed = ConvexInstance::new(2, Curvature::ScaledIdentity(1.0))
            .with_inequalities(DenseMatrix::identity(2), vec![0.0; 2], vec![1.0; 2]);
        let rep = check_normal_invariance(&boxed, &[0.5, -3.0], &[0.1, 0.1], 5, &mut rng).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn change_rate_zero_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random_qp(6, true, &mut rng);
        let c = random_vector(6, &mut rng);
        assert_eq!(active_set_change_rate(&inst, &c, 0.0, 5, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_grid_paths(&GridPathProblem::default()).len(), 70);
        assert_eq!(enumerate_grid_paths(&GridPathProblem::new(5, 5, Orientation::Cross)).len(), 70);
        let p = KnapsackProblem::new(vec![1, 2, 3], 5.0 / 6.0).unwrap();
        assert_eq!(enumerate_knapsack(&p, &[6.0, 10.0, 12.0]), (vec![0.0, 1.0, 1.0], 22.0));
    }

    #[test]
    fn suite_passes_and_canary_fails() {
        let reports = run_suite(0, Mutation::None).unwrap();
        for r in &reports {
            assert!(r.pass, "{r:?}");
        }
        let text = format_reports(&reports);
        assert!(text.starts_with("name,error,tolerance,pass\n"));
        assert_eq!(text.lines().count(), reports.len() + 1);

        let broken = run_suite(0, Mutation::FlipRecoverySign).unwrap();
        let schur = broken.iter().find(|r| r.name == "schur_vs_dense").unwrap();
        assert!(!schur.pass);
    }
}
