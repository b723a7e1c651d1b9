//! Linear cost predictor, loss gradients, Adam and the training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{substream, DataView, STREAM_SHUFFLE};
use crate::error::{check_len, Error, Result};
use crate::linalg::DenseMatrix;
use crate::problems::{regret, Benchmark, DecisionOutcome};
use crate::sensitivity::{
    assemble_jacobian, detect_active, normal_inject, pear_gradient, pear_gradient_lp, ACTIVE_TOL,
};
use crate::solver::{self, ConvexInstance, CurvatureFactor, SolveSettings, SolveStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// d×p
    pub w: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(d: usize, p: usize) -> Self {
        Self {
            w: DenseMatrix::zeros(d, p),
            bias: vec![0.0; d],
        }
    }

    pub fn new(w: DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        check_len(w.rows(), bias.len())?;
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite bias".into()));
        }
        Ok(Self { w, bias })
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.w.matvec(x)?;
        for (yi, b) in y.iter_mut().zip(&self.bias) {
            *yi += b;
        }
        Ok(y)
    }

    /// Weights row-major, then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.w.as_slice().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        let (d, p) = (self.out_dim(), self.in_dim());
        check_len(d * p + d, theta.len())?;
        self.w = DenseMatrix::from_vec(d, p, theta[..d * p].to_vec())?;
        self.bias = theta[d * p..].to_vec();
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Loss gradients. `grad_pear` and `grad_spo_plus` work in the minimization
// cost slot; `sample_gradient` maps back to prediction space.

/// Gradient of `½‖ĉ − c‖²`.
pub fn grad_mse(c_hat: &[f64], c: &[f64]) -> Vec<f64> {
    c_hat.iter().zip(c).map(|(a, b)| a - b).collect()
}

/// Regret gradient of the smoothed problem at the cost `c_hat` (slot
/// space). Normal injection with `beta` applies only to `λI` curvature.
pub fn grad_pear(
    inst: &mut ConvexInstance,
    factor: &CurvatureFactor,
    c_hat: &[f64],
    c: &[f64],
    beta: f64,
    settings: &SolveSettings,
) -> Result<Vec<f64>> {
    check_len(inst.n(), c_hat.len())?;
    check_len(inst.n(), c.len())?;
    inst.cost.clear();
    inst.cost.extend_from_slice(c_hat);
    let sol = solver::solve_with_factor(inst, factor, settings)?;
    if sol.status != SolveStatus::Solved {
        return Err(Error::SolveFailed(sol.status));
    }
    let act = detect_active(inst, &sol, ACTIVE_TOL);
    let jac = assemble_jacobian(inst, &act);
    let e = grad_mse(c_hat, c);
    match factor {
        CurvatureFactor::ScaledIdentity { lambda, .. } => {
            let pg = pear_gradient_lp(*lambda, &jac.matrix, &e)?;
            Ok(normal_inject(&pg, beta))
        }
        CurvatureFactor::Cholesky { .. } => Ok(pear_gradient(factor, &jac.matrix, &e)?.g),
    }
}

/// SPO+ subgradient `2(z*(c) − z*(2ĉ − c))` in slot space, with both
/// decisions taken by the benchmark's evaluation oracle.
pub fn grad_spo_plus(bench: &Benchmark, c_hat: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    check_len(c.len(), c_hat.len())?;
    let shifted: Vec<f64> = c_hat.iter().zip(c).map(|(h, t)| 2.0 * h - t).collect();
    let z_true = bench.decide(c)?.z;
    let z_shift = bench.decide(&shifted)?.z;
    Ok(z_true.iter().zip(&z_shift).map(|(a, b)| 2.0 * (a - b)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Loss {
    Pear { lambda_smooth: f64, beta: f64 },
    Mse,
    SpoPlus,
}

impl Loss {
    pub fn pear_default() -> Self {
        Self::Pear {
            lambda_smooth: 0.1,
            beta: 0.1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pear { .. } => "pear",
            Self::Mse => "mse",
            Self::SpoPlus => "spo_plus",
        }
    }
}

/// Per-sample gradient machinery shared across a training run.
pub struct GradientEngine<'a> {
    bench: &'a Benchmark,
    loss: Loss,
    inst: Option<(ConvexInstance, CurvatureFactor)>,
    settings: SolveSettings,
}

impl<'a> GradientEngine<'a> {
    pub fn new(bench: &'a Benchmark, loss: Loss) -> Result<Self> {
        let inst = match loss {
            Loss::Pear { lambda_smooth, beta } => {
                if !(0.0..=1.0).contains(&beta) {
                    return Err(Error::Invalid(format!("beta {beta} outside [0, 1]")));
                }
                let inst = bench.training_instance(lambda_smooth)?;
                let factor = inst.curvature_factor()?;
                Some((inst, factor))
            }
            _ => None,
        };
        Ok(Self {
            bench,
            loss,
            inst,
            settings: SolveSettings::default(),
        })
    }

    /// Loss gradient with respect to the prediction `c_hat`.
    pub fn sample_gradient(&mut self, c_hat: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        let sign = self.bench.slot_sign();
        match self.loss {
            Loss::Mse => Ok(grad_mse(c_hat, c)),
            Loss::SpoPlus => {
                let g = grad_spo_plus(self.bench, c_hat, c)?;
                Ok(g.into_iter().map(|v| sign * v).collect())
            }
            Loss::Pear { beta, .. } => {
                let (inst, factor) = self.inst.as_mut().expect("pear instance");
                let g = grad_pear(
                    inst,
                    factor,
                    &self.bench.to_slot(c_hat),
                    &self.bench.to_slot(c),
                    beta,
                    &self.settings,
                )?;
                Ok(g.into_iter().map(|v| sign * v).collect())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_len(params.len(), grads.len())?;
    check_len(params.len(), state.m.len())?;
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation

/// Normalized regret over a view, with the true optima computed once.
pub struct RegretEvaluator<'a> {
    bench: &'a Benchmark,
    view: DataView<'a>,
    optima: Vec<DecisionOutcome>,
    denominator: f64,
}

impl<'a> RegretEvaluator<'a> {
    pub fn new(bench: &'a Benchmark, view: DataView<'a>) -> Result<Self> {
        let optima = (0..view.len())
            .map(|i| bench.decide(view.costs(i)))
            .collect::<Result<Vec<_>>>()?;
        let denominator = optima.iter().map(|o| o.objective_value.abs()).sum();
        Ok(Self {
            bench,
            view,
            optima,
            denominator,
        })
    }

    pub fn bench(&self) -> &Benchmark {
        self.bench
    }

    pub fn view(&self) -> &DataView<'a> {
        &self.view
    }

    /// Percentage `100·Σ regret / Σ |optimal value|`.
    pub fn evaluate(&self, model: &LinearModel) -> Result<f64> {
        if self.denominator == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        let mut total = 0.0;
        for (i, opt) in self.optima.iter().enumerate() {
            let c_hat = model.predict(self.view.features(i))?;
            let got = self.bench.decide_and_score(&c_hat, self.view.costs(i))?;
            total += regret(opt, &got);
        }
        Ok(100.0 * total / self.denominator)
    }
}

pub fn normalized_regret(model: &LinearModel, view: &DataView<'_>, bench: &Benchmark) -> Result<f64> {
    RegretEvaluator::new(bench, view.clone())?.evaluate(model)
}

/// Mean squared prediction error per cost entry.
pub fn prediction_mse(model: &LinearModel, view: &DataView<'_>) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..view.len() {
        let c_hat = model.predict(view.features(i))?;
        for (a, b) in c_hat.iter().zip(view.costs(i)) {
            total += (a - b) * (a - b);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

// ---------------------------------------------------------------------------
// Training loop

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop once validation regret fails to improve by `min_rel` for
    /// `patience` consecutive evaluations.
    RelativeImprovement { min_rel: f64, patience: usize },
    /// Halve-style learning-rate reduction plus early stopping, both keyed
    /// on evaluations without a new best validation regret.
    Plateau {
        lr_factor: f64,
        lr_patience: usize,
        stop_patience: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub lr: f64,
    pub batch: usize,
    pub max_seconds: f64,
    /// Evaluate on validation every this many epochs.
    pub eval_every: usize,
    pub max_epochs: usize,
    pub stop_rule: StopRule,
    pub seed: u64,
}

impl TrainConfig {
    /// Shortest path and knapsack.
    pub fn lp(loss: Loss) -> Self {
        Self {
            loss,
            lr: 1e-2,
            batch: 32,
            max_seconds: 600.0,
            eval_every: 1,
            max_epochs: 200,
            stop_rule: StopRule::RelativeImprovement {
                min_rel: 0.01,
                patience: 3,
            },
            seed: 0,
        }
    }

    pub fn mvo(loss: Loss) -> Self {
        Self {
            lr: 1e-3,
            batch: 64,
            stop_rule: StopRule::Plateau {
                lr_factor: 0.5,
                lr_patience: 3,
                stop_patience: 10,
            },
            ..Self::lp(loss)
        }
    }

    pub fn for_benchmark(bench: &Benchmark, loss: Loss) -> Self {
        if bench.is_lp() {
            Self::lp(loss)
        } else {
            Self::mvo(loss)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Invalid(format!("learning rate {} must be non-negative", self.lr)));
        }
        if self.batch == 0 || self.eval_every == 0 {
            return Err(Error::Invalid("batch size and evaluation cadence must be positive".into()));
        }
        if !(self.max_seconds >= 0.0) {
            return Err(Error::Invalid("time cap must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Patience,
    TimeCap,
    MaxEpochs,
    /// Too many per-sample gradient failures in one epoch.
    Aborted,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Patience => "patience",
            Self::TimeCap => "time_cap",
            Self::MaxEpochs => "max_epochs",
            Self::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub wall_seconds: f64,
    pub val_regret: f64,
    pub train_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub failed_samples: usize,
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EvalRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }
}

/// Largest tolerated fraction of failed per-sample gradients per epoch.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

pub fn fit(
    model: LinearModel,
    train: &DataView<'_>,
    val: &DataView<'_>,
    bench: &Benchmark,
    cfg: &TrainConfig,
) -> Result<(LinearModel, TrainHistory)> {
    cfg.validate()?;
    let d = bench.cost_dim();
    check_len(d, model.out_dim())?;
    check_len(train.data.config.p, model.in_dim())?;
    check_len(d, train.data.config.d)?;

    let start = Instant::now();
    let evaluator = RegretEvaluator::new(bench, val.clone())?;
    let mut engine = GradientEngine::new(bench, cfg.loss)?;
    let mut rng = substream(cfg.seed, STREAM_SHUFFLE);
    let p = model.in_dim();

    let mut model = model;
    let mut theta = model.params();
    let mut adam = AdamState::new(theta.len());
    let mut lr = cfg.lr;

    let mut records = Vec::new();
    let record = |epoch: usize, m: &LinearModel, records: &mut Vec<EvalRecord>| -> Result<f64> {
        let val_regret = evaluator.evaluate(m)?;
        let wall = start.elapsed().as_secs_f64();
        // Keep timestamps strictly increasing even on a coarse clock.
        let wall = match records.last() {
            Some(prev) if prev.wall_seconds >= wall => prev.wall_seconds + 1e-9,
            _ => wall,
        };
        records.push(EvalRecord {
            epoch,
            wall_seconds: wall,
            val_regret,
            train_mse: prediction_mse(m, train)?,
        });
        Ok(val_regret)
    };

    let mut best_val = record(0, &model, &mut records)?;
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    // Reference for the relative-improvement rule; tracks the last
    // evaluation that counted as an improvement.
    let mut reference = best_val;
    let mut stale = 0usize;
    let mut failed_total = 0usize;
    let time_up = |cap: f64| start.elapsed().as_secs_f64() >= cap;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad_theta = vec![0.0; theta.len()];
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        if time_up(cfg.max_seconds) {
            stop = StopReason::TimeCap;
            break;
        }
        order.shuffle(&mut rng);
        let mut failed = 0usize;
        let mut timed_out = false;
        for batch in order.chunks(cfg.batch) {
            grad_theta.iter_mut().for_each(|v| *v = 0.0);
            let mut used = 0usize;
            for &i in batch {
                let x = train.features(i);
                let c_hat = model.predict(x)?;
                let gc = match engine.sample_gradient(&c_hat, train.costs(i)) {
                    Ok(g) => g,
                    Err(_) => {
                        failed += 1;
                        continue;
                    }
                };
                used += 1;
                for (j, gj) in gc.iter().enumerate() {
                    let row = &mut grad_theta[j * p..(j + 1) * p];
                    for (w, xk) in row.iter_mut().zip(x) {
                        *w += gj * xk;
                    }
                    grad_theta[d * p + j] += gj;
                }
            }
            if used > 0 {
                let inv = 1.0 / used as f64;
                grad_theta.iter_mut().for_each(|v| *v *= inv);
                adam_step(&mut adam, &mut theta, &grad_theta, lr)?;
                model.set_params(&theta)?;
            }
            if time_up(cfg.max_seconds) {
                timed_out = true;
                break;
            }
        }
        failed_total += failed;
        if failed as f64 > MAX_FAILURE_FRACTION * train.len() as f64 {
            stop = StopReason::Aborted;
            break 'epochs;
        }

        if epoch % cfg.eval_every == 0 || timed_out {
            let v = record(epoch, &model, &mut records)?;
            if v < best_val {
                best_val = v;
                best_model = model.clone();
                best_epoch = epoch;
            }
            match cfg.stop_rule {
                StopRule::RelativeImprovement { min_rel, patience } => {
                    if v < reference * (1.0 - min_rel) {
                        reference = v;
                        stale = 0;
                    } else {
                        stale += 1;
                    }
                    if stale >= patience {
                        stop = StopReason::Patience;
                        break 'epochs;
                    }
                }
                StopRule::Plateau {
                    lr_factor,
                    lr_patience,
                    stop_patience,
                } => {
                    if best_epoch == epoch {
                        stale = 0;
                    } else {
                        stale += 1;
                        if stale.is_multiple_of(lr_patience) {
                            lr *= lr_factor;
                        }
                    }
                    if stale >= stop_patience {
                        stop = StopReason::Patience;
                        break 'epochs;
                    }
                }
            }
        }
        if timed_out {
            stop = StopReason::TimeCap;
            break;
        }
    }

    let history = TrainHistory {
        records,
        stop_reason: stop,
        best_epoch,
        failed_samples: failed_total,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((best_model, history))
}

// ---------------------------------------------------------------------------
// Checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub d: usize,
    pub p: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(model: &LinearModel, config: &TrainConfig) -> Self {
        Self {
            d: model.out_dim(),
            p: model.in_dim(),
            weights: model.w.as_slice().to_vec(),
            bias: model.bias.clone(),
            config: config.clone(),
        }
    }

    pub fn model(&self) -> Result<LinearModel> {
        LinearModel::new(DenseMatrix::from_vec(self.d, self.p, self.weights.clone())?, self.bias.clone())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, split, GenConfig};
    use crate::problems::{GridPathProblem, KnapsackProblem, MvoProblem};
    use approx::assert_abs_diff_eq;

    #[test]
    fn predict_examples() {
        let m = LinearModel::new(DenseMatrix::identity(2), vec![0.0; 2]).unwrap();
        assert_eq!(m.predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let m = LinearModel::new(DenseMatrix::zeros(2, 3), vec![4.0, -1.0]).unwrap();
        assert_eq!(m.predict(&[7.0, 8.0, 9.0]).unwrap(), vec![4.0, -1.0]);
        let m = LinearModel::new(DenseMatrix::from_rows(&[[1.0, 1.0]]).unwrap(), vec![0.5]).unwrap();
        assert_eq!(m.predict(&[1.0, 2.0]).unwrap(), vec![3.5]);
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn mse_gradient_examples() {
        assert_eq!(grad_mse(&[1.0, 2.0], &[1.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(grad_mse(&[2.0, 0.0], &[1.0, 1.0]), vec![1.0, -1.0]);
        assert_eq!(grad_mse(&[3.0, -1.0], &[1.0, 1.0]), vec![2.0, -2.0]);
    }

    #[test]
    fn pear_gradient_examples() {
        let p = MvoProblem::new(DenseMatrix::identity(2), 1.0, f64::NEG_INFINITY).unwrap();
        let bench = Benchmark::Mvo(p);
        let mut inst = bench.training_instance(0.1).unwrap();
        let factor = inst.curvature_factor().unwrap();
        let s = SolveSettings::default();
        let g = grad_pear(&mut inst, &factor, &[1.0, 0.0], &[0.0, 0.0], 0.5, &s).unwrap();
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(g[1], -0.5, epsilon = 1e-10);
        let g = grad_pear(&mut inst, &factor, &[0.3, 0.1], &[0.3, 0.1], 0.0, &s).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
        // Shifting along the budget normal leaves the gradient unchanged.
        let g2 = grad_pear(&mut inst, &factor, &[1.7, 0.7], &[0.0, 0.0], 0.0, &s).unwrap();
        assert_abs_diff_eq!(g2[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(g2[1], -0.5, epsilon = 1e-10);
    }

    #[test]
    fn spo_plus_examples() {
        let bench = Benchmark::Knapsack(KnapsackProblem::new(vec![1, 1], 0.5).unwrap());
        let g = grad_spo_plus(&bench, &[1.0, 5.0], &[3.0, 2.0]).unwrap();
        assert_eq!(g, vec![2.0, -2.0]);
        let g = grad_spo_plus(&bench, &[3.0, 2.0], &[3.0, 2.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = grad_spo_plus(&bench, &[2.0, 10.0], &[6.0, 4.0]).unwrap();
        assert_eq!(g, vec![2.0, -2.0]);
    }

    #[test]
    fn adam_examples() {
        let mut st = AdamState::new(1);
        let mut x = [1.0];
        for _ in 0..10 {
            adam_step(&mut st, &mut x, &[0.0], 0.1).unwrap();
        }
        assert_eq!(x, [1.0]);

        let mut st = AdamState::new(1);
        let mut x = [1.0];
        adam_step(&mut st, &mut x, &[3.0], 0.01).unwrap();
        assert_abs_diff_eq!(x[0], 0.99, epsilon = 1e-8);

        // Second identical step: m̂ = g, v̂ = g², so the update repeats, but
        // ε now weighs against a smaller bias correction; verify by hand.
        let first = 1.0 - x[0];
        let mut y = x;
        adam_step(&mut st, &mut y, &[3.0], 0.01).unwrap();
        let second = x[0] - y[0];
        let (m, v) = (0.9 * 0.3 + 0.3, 0.999 * 0.009 + 0.009);
        let expect = 0.01 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert_abs_diff_eq!(second, expect, epsilon = 1e-15);
        assert!(second <= first);
    }

    #[test]
    fn normalized_regret_examples() {
        let bench = Benchmark::Knapsack(KnapsackProblem::new(vec![1, 1], 0.5).unwrap());
        let mut cfg = GenConfig::new(2, 2, 0.0, 0).with_sizes([1, 0, 0]);
        cfg.p = 1;
        let mut ds = generate(&cfg).unwrap();
        ds.x = DenseMatrix::from_vec(1, 1, vec![0.0]).unwrap();
        ds.c = DenseMatrix::from_vec(1, 2, vec![3.0, 2.0]).unwrap();
        let bad = LinearModel::new(DenseMatrix::zeros(2, 1), vec![1.0, 5.0]).unwrap();
        let r = normalized_regret(&bad, &ds.full(), &bench).unwrap();
        assert_abs_diff_eq!(r, 100.0 / 3.0, epsilon = 1e-12);
        let good = LinearModel::new(DenseMatrix::zeros(2, 1), vec![3.0, 2.0]).unwrap();
        assert_eq!(normalized_regret(&good, &ds.full(), &bench).unwrap(), 0.0);

        ds.c = ds.c.scale(2.0);
        let r2 = normalized_regret(&bad, &ds.full(), &bench).unwrap();
        assert_abs_diff_eq!(r2, r, epsilon = 1e-12);

        ds.c = DenseMatrix::zeros(1, 2);
        assert!(matches!(normalized_regret(&bad, &ds.full(), &bench), Err(Error::ZeroDenominator)));
    }

    fn sp_data(seed: u64, sizes: [usize; 3]) -> crate::datagen::Dataset {
        generate(&GenConfig::new(40, 2, 0.0, seed).with_sizes(sizes)).unwrap()
    }

    #[test]
    fn mse_training_decreases_error() {
        let bench = Benchmark::ShortestPath(GridPathProblem::default());
        let ds = sp_data(1, [200, 50, 0]);
        let (tr, va, _) = split(&ds, [200, 50, 0]).unwrap();
        let m0 = LinearModel::zeros(40, 5);
        let before = prediction_mse(&m0, &tr).unwrap();
        let mut cfg = TrainConfig::lp(Loss::Mse);
        cfg.max_epochs = 5;
        let (m, hist) = fit(m0, &tr, &va, &bench, &cfg).unwrap();
        assert!(hist.records.last().unwrap().train_mse < before);
        assert!(prediction_mse(&m, &tr).unwrap() <= before);
    }

    #[test]
    fn zero_time_cap_returns_initial_model() {
        let bench = Benchmark::ShortestPath(GridPathProblem::default());
        let ds = sp_data(2, [20, 10, 0]);
        let (tr, va, _) = split(&ds, [20, 10, 0]).unwrap();
        let mut cfg = TrainConfig::lp(Loss::pear_default());
        cfg.max_seconds = 0.0;
        let (m, hist) = fit(LinearModel::zeros(40, 5), &tr, &va, &bench, &cfg).unwrap();
        assert_eq!(hist.stop_reason, StopReason::TimeCap);
        assert_eq!(m, LinearModel::zeros(40, 5));
        assert_eq!(hist.records.len(), 1);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let bench = Benchmark::ShortestPath(GridPathProblem::default());
        let ds = sp_data(3, [20, 10, 0]);
        let (tr, va, _) = split(&ds, [20, 10, 0]).unwrap();
        let mut cfg = TrainConfig::lp(Loss::pear_default());
        cfg.lr = 0.0;
        cfg.max_epochs = 2;
        let init = LinearModel::new(DenseMatrix::zeros(40, 5), vec![1.0; 40]).unwrap();
        let (m, hist) = fit(init.clone(), &tr, &va, &bench, &cfg).unwrap();
        assert_eq!(m, init);
        assert_eq!(hist.records.len(), 3);
        assert!(hist.records.windows(2).all(|w| w[1].wall_seconds > w[0].wall_seconds));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = LinearModel::new(DenseMatrix::from_rows(&[[1.5, -2.0], [0.1, 3.0]]).unwrap(), vec![0.25, -1.0]).unwrap();
        let ck = Checkpoint::new(&m, &TrainConfig::mvo(Loss::pear_default()));
        let text = ck.to_toml().unwrap();
        let back = Checkpoint::from_toml(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model().unwrap(), m);
        assert!(Checkpoint::from_toml("d = 1").is_err());
    }
}
