//! Benchmark problems: monotone grid shortest path, 0/1 knapsack and
//! mean-variance portfolio selection.
//!
//! Each benchmark knows how to build its smoothed training instance, how to
//! make the exact decision for a cost vector (dynamic programs for the
//! combinatorial tasks, the QP itself for the portfolio), and how to score a
//! decision under the true costs. The knapsack is a maximization; the sign
//! flip into the minimization form of [`ConvexInstance`] lives here and
//! nowhere else.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, factor_spd, DenseMatrix};
use crate::solver::{self, ConvexInstance, Curvature, CurvatureFactor, SolveSettings, SolveStatus};

/// Largest integer capacity the knapsack DP table accepts.
pub const KNAPSACK_DP_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutcome {
    pub z: Vec<f64>,
    /// Objective in true-cost units.
    pub objective_value: f64,
    pub sense: Sense,
}

/// Suboptimality of `achieved` relative to `true_opt`, both scored under the
/// true costs. Non-negative whenever `true_opt` is optimal.
pub fn regret(true_opt: &DecisionOutcome, achieved: &DecisionOutcome) -> f64 {
    match true_opt.sense {
        Sense::Minimize => achieved.objective_value - true_opt.objective_value,
        Sense::Maximize => true_opt.objective_value - achieved.objective_value,
    }
}

// ---------------------------------------------------------------------------
// Shortest path

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Edges point right and down; (0, 0) to (rows−1, cols−1).
    Forward,
    /// Edges point right and up; (rows−1, 0) to (0, cols−1).
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPathProblem {
    pub rows: usize,
    pub cols: usize,
    pub orientation: Orientation,
}

impl Default for GridPathProblem {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 5,
            orientation: Orientation::Forward,
        }
    }
}

impl GridPathProblem {
    pub fn new(rows: usize, cols: usize, orientation: Orientation) -> Self {
        Self { rows, cols, orientation }
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Vertical edges first (row-major by upper endpoint), then horizontal.
    pub fn edge_count(&self) -> usize {
        (self.rows - 1) * self.cols + self.rows * (self.cols - 1)
    }

    fn node(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    /// Directed edges `(tail, head)` in index order. The undirected edge
    /// behind each index is the same for every orientation, so one cost
    /// vector serves both.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for r in 0..self.rows - 1 {
            for c in 0..self.cols {
                let (top, bottom) = (self.node(r, c), self.node(r + 1, c));
                out.push(match self.orientation {
                    Orientation::Forward => (top, bottom),
                    Orientation::Cross => (bottom, top),
                });
            }
        }
        for r in 0..self.rows {
            for c in 0..self.cols - 1 {
                out.push((self.node(r, c), self.node(r, c + 1)));
            }
        }
        out
    }

    pub fn source(&self) -> usize {
        match self.orientation {
            Orientation::Forward => self.node(0, 0),
            Orientation::Cross => self.node(self.rows - 1, 0),
        }
    }

    pub fn target(&self) -> usize {
        match self.orientation {
            Orientation::Forward => self.node(self.rows - 1, self.cols - 1),
            Orientation::Cross => self.node(0, self.cols - 1),
        }
    }

    /// Node-arc incidence (inflow − outflow) and demand vector.
    pub fn flow_balance(&self) -> (DenseMatrix, Vec<f64>) {
        let edges = self.edges();
        let mut a = DenseMatrix::zeros(self.node_count(), edges.len());
        for (e, &(tail, head)) in edges.iter().enumerate() {
            a[(head, e)] += 1.0;
            a[(tail, e)] -= 1.0;
        }
        let mut b = vec![0.0; self.node_count()];
        b[self.source()] = -1.0;
        b[self.target()] = 1.0;
        (a, b)
    }
}

/// Flow LP over the grid with `0 ≤ w ≤ 1` and `λ/2‖w‖²` smoothing.
pub fn build_grid_lp(p: &GridPathProblem, lambda_smooth: f64) -> ConvexInstance {
    let n = p.edge_count();
    let (a, b) = p.flow_balance();
    ConvexInstance::new(n, Curvature::ScaledIdentity(lambda_smooth))
        .with_equalities(a, b)
        .with_inequalities(DenseMatrix::identity(n), vec![0.0; n], vec![1.0; n])
}

/// Minimum-cost source–target path by dynamic programming on the DAG.
/// Among optimal paths the lexicographically smallest edge-index sequence
/// is returned.
pub fn exact_grid_path(p: &GridPathProblem, costs: &[f64]) -> Result<DecisionOutcome> {
    check_len(p.edge_count(), costs.len())?;
    let edges = p.edges();
    let nodes = p.node_count();
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (e, &(tail, _)) in edges.iter().enumerate() {
        out_edges[tail].push(e);
    }
    // Every edge moves one step closer to the target in Manhattan distance,
    // so processing nodes by increasing distance is a reverse topological order.
    let target = p.target();
    let (tr, tc) = (target / p.cols, target % p.cols);
    let mut order: Vec<usize> = (0..nodes).collect();
    order.sort_by_key(|&v| (v / p.cols).abs_diff(tr) + (v % p.cols).abs_diff(tc));
    let mut to_go = vec![f64::INFINITY; nodes];
    to_go[target] = 0.0;
    for &v in &order {
        if v == target {
            continue;
        }
        for &e in &out_edges[v] {
            let cand = costs[e] + to_go[edges[e].1];
            if cand < to_go[v] {
                to_go[v] = cand;
            }
        }
    }
    let mut z = vec![0.0; edges.len()];
    let mut v = p.source();
    while v != target {
        let mut best: Option<(usize, f64)> = None;
        for &e in &out_edges[v] {
            let cand = costs[e] + to_go[edges[e].1];
            if best.is_none_or(|(_, b)| cand < b) {
                best = Some((e, cand));
            }
        }
        let (e, _) = best.ok_or_else(|| Error::Invalid("target unreachable".into()))?;
        z[e] = 1.0;
        v = edges[e].1;
    }
    Ok(DecisionOutcome {
        objective_value: dot(costs, &z),
        z,
        sense: Sense::Minimize,
    })
}

// ---------------------------------------------------------------------------
// Knapsack

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackProblem {
    pub weights: Vec<u32>,
    pub capacity_ratio: f64,
}

impl KnapsackProblem {
    pub fn new(weights: Vec<u32>, capacity_ratio: f64) -> Result<Self> {
        if !(capacity_ratio > 0.0 && capacity_ratio < 1.0) {
            return Err(Error::Invalid(format!("capacity ratio {capacity_ratio} outside (0, 1)")));
        }
        if weights.contains(&0) {
            return Err(Error::Invalid("knapsack weights must be at least 1".into()));
        }
        Ok(Self { weights, capacity_ratio })
    }

    /// Integer weights drawn uniformly from {3, …, 8}.
    pub fn random(n: usize, capacity_ratio: f64, rng: &mut impl Rng) -> Result<Self> {
        let weights = (0..n).map(|_| rng.random_range(3..=8)).collect();
        Self::new(weights, capacity_ratio)
    }

    pub fn with_ratio(&self, capacity_ratio: f64) -> Result<Self> {
        Self::new(self.weights.clone(), capacity_ratio)
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn capacity(&self) -> f64 {
        self.capacity_ratio * self.weights.iter().map(|&w| w as f64).sum::<f64>()
    }
}

/// LP relaxation in minimization form: the cost slot receives `−values`.
pub fn build_knapsack_lp(p: &KnapsackProblem, lambda_smooth: f64) -> ConvexInstance {
    let n = p.n();
    let mut g = DenseMatrix::zeros(n + 1, n);
    for (j, &w) in p.weights.iter().enumerate() {
        g[(0, j)] = w as f64;
        g[(j + 1, j)] = 1.0;
    }
    let mut lower = vec![0.0; n + 1];
    lower[0] = f64::NEG_INFINITY;
    let mut upper = vec![1.0; n + 1];
    upper[0] = p.capacity();
    ConvexInstance::new(n, Curvature::ScaledIdentity(lambda_smooth)).with_inequalities(g, lower, upper)
}

/// Optimal 0/1 selection by a weight-indexed dynamic program. Items with
/// non-positive value are never selected.
pub fn exact_knapsack(p: &KnapsackProblem, values: &[f64]) -> Result<DecisionOutcome> {
    check_len(p.n(), values.len())?;
    // Integer weights: wᵀz ≤ C is equivalent to wᵀz ≤ ⌊C⌋.
    let cap = (p.capacity() + 1e-9).floor().max(0.0) as usize;
    if cap > KNAPSACK_DP_LIMIT {
        return Err(Error::CapacityOverflow {
            capacity: cap,
            limit: KNAPSACK_DP_LIMIT,
        });
    }
    let n = p.n();
    let mut best = vec![0.0f64; cap + 1];
    let mut take = vec![false; n * (cap + 1)];
    for (i, (&w, &v)) in p.weights.iter().zip(values).enumerate() {
        let w = w as usize;
        if v <= 0.0 || w > cap {
            continue;
        }
        for c in (w..=cap).rev() {
            let cand = best[c - w] + v;
            if cand > best[c] {
                best[c] = cand;
                take[i * (cap + 1) + c] = true;
            }
        }
    }
    let mut z = vec![0.0; n];
    let mut c = cap;
    for i in (0..n).rev() {
        if take[i * (cap + 1) + c] {
            z[i] = 1.0;
            c -= p.weights[i] as usize;
        }
    }
    Ok(DecisionOutcome {
        objective_value: dot(values, &z),
        z,
        sense: Sense::Maximize,
    })
}

// ---------------------------------------------------------------------------
// Mean-variance portfolio

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvoProblem {
    pub covariance: DenseMatrix,
    pub risk_aversion: f64,
    pub lower_bound: f64,
}

impl MvoProblem {
    pub fn new(covariance: DenseMatrix, risk_aversion: f64, lower_bound: f64) -> Result<Self> {
        factor_spd(&covariance)?;
        Ok(Self {
            covariance,
            risk_aversion,
            lower_bound,
        })
    }

    /// `Σ = D(QQᵀ/n + 0.1·I)D` with standard normal `Q` and volatilities
    /// `D` uniform in [0.1, 0.4].
    pub fn synthetic_covariance(n: usize, rng: &mut impl Rng) -> DenseMatrix {
        let q: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        let vol: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=0.4)).collect();
        let mut s = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let qq = dot(&q[i * n..(i + 1) * n], &q[j * n..(j + 1) * n]) / n as f64;
                let base = if i == j { qq + 0.1 } else { qq };
                let v = vol[i] * base * vol[j];
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn random(n: usize, risk_aversion: f64, lower_bound: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::new(Self::synthetic_covariance(n, rng), risk_aversion, lower_bound)
    }

    pub fn with_lower_bound(&self, lower_bound: f64) -> Self {
        Self {
            lower_bound,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.covariance.rows()
    }

    pub fn curvature(&self) -> DenseMatrix {
        self.covariance.scale(self.risk_aversion)
    }
}

/// Budget-constrained mean-variance QP with `H = λ_risk·Σ`; the cost slot
/// receives `−μ̂`.
pub fn build_mvo(p: &MvoProblem) -> Result<ConvexInstance> {
    let n = p.n();
    let h = p.curvature();
    factor_spd(&h)?;
    Ok(ConvexInstance::new(n, Curvature::Explicit(h))
        .with_equalities(DenseMatrix::from_vec(1, n, vec![1.0; n])?, vec![1.0])
        .with_inequalities(DenseMatrix::identity(n), vec![p.lower_bound; n], vec![f64::INFINITY; n]))
}

// ---------------------------------------------------------------------------
// Unified benchmark view used by training and evaluation.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Benchmark {
    ShortestPath(GridPathProblem),
    Knapsack(KnapsackProblem),
    Mvo(MvoProblem),
}

impl Benchmark {
    pub fn cost_dim(&self) -> usize {
        match self {
            Self::ShortestPath(p) => p.edge_count(),
            Self::Knapsack(p) => p.n(),
            Self::Mvo(p) => p.n(),
        }
    }

    pub fn sense(&self) -> Sense {
        match self {
            Self::Knapsack(_) => Sense::Maximize,
            _ => Sense::Minimize,
        }
    }

    /// Sign mapping predicted costs into the minimization cost slot.
    pub fn slot_sign(&self) -> f64 {
        match self {
            Self::ShortestPath(_) => 1.0,
            Self::Knapsack(_) | Self::Mvo(_) => -1.0,
        }
    }

    pub fn to_slot(&self, costs: &[f64]) -> Vec<f64> {
        let s = self.slot_sign();
        costs.iter().map(|c| s * c).collect()
    }

    /// LP benchmarks are smoothed with `λI`; only they use normal injection.
    pub fn is_lp(&self) -> bool {
        !matches!(self, Self::Mvo(_))
    }

    /// Training instance with an empty cost slot. `lambda_smooth` is ignored
    /// for the portfolio, whose curvature is `λ_risk·Σ`.
    pub fn training_instance(&self, lambda_smooth: f64) -> Result<ConvexInstance> {
        match self {
            Self::ShortestPath(p) => Ok(build_grid_lp(p, lambda_smooth)),
            Self::Knapsack(p) => Ok(build_knapsack_lp(p, lambda_smooth)),
            Self::Mvo(p) => build_mvo(p),
        }
    }

    /// Objective of decision `z` under `costs`, in the benchmark's own units.
    pub fn score(&self, z: &[f64], costs: &[f64]) -> f64 {
        match self {
            Self::ShortestPath(_) | Self::Knapsack(_) => dot(costs, z),
            Self::Mvo(p) => {
                let hz = p.curvature().matvec(z).expect("dimension");
                0.5 * dot(z, &hz) - dot(costs, z)
            }
        }
    }

    /// Evaluation-time decision for `costs`, scored under the same costs.
    pub fn decide(&self, costs: &[f64]) -> Result<DecisionOutcome> {
        match self {
            Self::ShortestPath(p) => exact_grid_path(p, costs),
            Self::Knapsack(p) => exact_knapsack(p, costs),
            Self::Mvo(p) => {
                let inst = build_mvo(p)?.with_cost(self.to_slot(costs));
                let sol = solver::solve(&inst, &SolveSettings::default())?;
                if sol.status != SolveStatus::Solved {
                    return Err(Error::SolveFailed(sol.status));
                }
                Ok(DecisionOutcome {
                    objective_value: self.score(&sol.z, costs),
                    z: sol.z,
                    sense: Sense::Minimize,
                })
            }
        }
    }

    /// Decision made under `predicted`, scored under `truth`.
    pub fn decide_and_score(&self, predicted: &[f64], truth: &[f64]) -> Result<DecisionOutcome> {
        let mut out = self.decide(predicted)?;
        out.objective_value = self.score(&out.z, truth);
        Ok(out)
    }

    /// Reusable curvature factorization for repeated portfolio solves.
    pub fn curvature_factor(&self, lambda_smooth: f64) -> Result<CurvatureFactor> {
        self.training_instance(lambda_smooth)?.curvature_factor()
    }
}
