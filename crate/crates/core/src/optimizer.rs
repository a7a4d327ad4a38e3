//! Projected-gradient solver for the score problems on the capped simplex,
//! plus KKT diagnostics and an exhaustive lattice oracle.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GramianModel;
use crate::scores::{closed_form_optimum, evaluate, Derivatives, ObjectiveEvaluation, ObjectiveKind};
pub use crate::simplex::project_capped_simplex;
use crate::simplex::{capped_barycenter, validate_caps, SimplexWeights};
use crate::spectral::{assumption_report, spectral_model_from_gramians, AssumptionReport, SpectralModel, ASSUMPTION_TOL};

/// Objective spread across starts above which the result is flagged ambiguous.
pub const AMBIGUITY_TOL: f64 = 1e-6;

/// Lattice points the grid oracle is willing to enumerate.
pub const GRID_BUDGET: u128 = 5_000_000;

/// Objective changes below this many ulps of `|f|` are treated as rounding noise.
pub const NOISE_ULPS: f64 = 64.0;

const FD_STEP: f64 = 1e-6;
const MIN_STEP: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Tolerance on `||p - Π(p - ∇h(p))||_∞`.
    pub grad_tol: f64,
    pub step_shrink: f64,
    pub armijo_c: f64,
    /// `None` picks 1 start for certified-convex models and 8 otherwise.
    pub starts: Option<usize>,
    pub seed: u64,
    pub assumption_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-9,
            step_shrink: 0.5,
            armijo_c: 1e-4,
            starts: None,
            seed: 0,
            assumption_tol: ASSUMPTION_TOL,
        }
    }
}

impl SolveConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.grad_tol > 0.0
            && self.step_shrink > 0.0
            && self.step_shrink < 1.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.starts != Some(0)
            && self.assumption_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// The best iterate is returned but its KKT residual exceeds `grad_tol`.
    MaxItersExceeded,
    /// Starts reached objective values further apart than [`AMBIGUITY_TOL`].
    NonConvexAmbiguous,
}

/// One projected-gradient trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start_index: usize,
    pub initial: Vec<f64>,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub selection_history: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub kind: ObjectiveKind,
    pub n: usize,
    pub weights: SimplexWeights,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub assumption_report: AssumptionReport,
    pub uniqueness_certified: bool,
    pub selection_history: Vec<Vec<usize>>,
    pub status: SolveStatus,
    pub starts: Vec<StartOutcome>,
    pub warnings: Vec<String>,
}

/// Minimizes the VCS or AECS objective over `{p : Σp = 1, 0 ≤ p ≤ caps}`.
///
/// Each start runs projected gradient descent with Armijo backtracking along
/// the projection arc and a Barzilai-Borwein trial step. Points outside the
/// domain (`μ_n ≤ 0`) evaluate to `+∞` and simply shrink the step.
pub fn solve(kind: ObjectiveKind, model: &GramianModel, n: usize, caps: &[f64], config: &SolveConfig) -> Result<ScoreResult> {
    config.validate()?;
    validate_caps(caps)?;
    if caps.len() != model.node_count() {
        return Err(Error::IndexMismatch { expected: model.node_count(), got: caps.len() });
    }
    let report = assumption_report(model, n, caps, config.assumption_tol)?;
    if !report.feasible {
        return Err(Error::Infeasible { n });
    }
    let mut warnings = Vec::new();
    let strictly_convex = report.all_pass() && selected_rows_independent(model, n, &report, config.assumption_tol);
    if report.all_pass() && !strictly_convex {
        warnings.push("selected eigen-rows are linearly dependent over the nodes; the optimum may not be unique".into());
    }
    if !report.n_spectrum {
        warnings.push(format!(
            "n-spectrum check failed (residual {:.3e}); the objective is a minimum over row selections and may be non-convex",
            report.n_spectrum_residual
        ));
    }

    let warm = warm_start(kind, model, caps, &mut warnings)?;
    let start_count = config.starts.unwrap_or(if strictly_convex { 1 } else { 8 });
    let initial = start_points(kind, model, n, caps, &warm, start_count, config.seed)?;

    let outcomes: Vec<StartOutcome> = initial
        .into_par_iter()
        .enumerate()
        .map(|(index, p0)| run_start(kind, model, n, caps, config, index, p0))
        .collect::<Result<Vec<_>>>()?;

    // Objectives that differ only by rounding count as ties; among ties a
    // converged start wins, then the lowest start index.
    let lowest = outcomes.iter().map(|o| o.objective).fold(f64::INFINITY, f64::min);
    let tie_floor = NOISE_ULPS * f64::EPSILON * lowest.abs().max(1.0);
    let best = outcomes
        .iter()
        .filter(|o| o.objective <= lowest + tie_floor)
        .min_by_key(|o| (!o.converged, o.start_index))
        .expect("at least one start");
    let worst = outcomes.iter().map(|o| o.objective).fold(f64::NEG_INFINITY, f64::max);

    let status = if worst - best.objective > AMBIGUITY_TOL {
        warnings.push(format!("starts disagree: objective spread {:.3e}", worst - best.objective));
        SolveStatus::NonConvexAmbiguous
    } else if !best.converged {
        warnings.push(format!("best start stopped with KKT residual {:.3e}", best.kkt_residual));
        SolveStatus::MaxItersExceeded
    } else {
        SolveStatus::Converged
    };

    let mut selection_history: Vec<Vec<usize>> = Vec::new();
    for o in &outcomes {
        for rows in &o.selection_history {
            if !selection_history.contains(rows) {
                selection_history.push(rows.clone());
            }
        }
    }

    if let GramianModel::Dense(family) = model {
        if n == family.dimension() {
            cross_check_full_rank(kind, model, &best.weights, best.objective, &mut warnings)?;
        }
    }

    Ok(ScoreResult {
        kind,
        n,
        weights: SimplexWeights::new(best.weights.clone(), caps.to_vec())?,
        objective: best.objective,
        kkt_residual: best.kkt_residual,
        iterations: best.iterations,
        assumption_report: report,
        uniqueness_certified: strictly_convex,
        selection_history,
        status,
        starts: outcomes,
        warnings,
    })
}

/// Full-rank objectives must agree with `-log det W` and `tr W⁻¹`.
fn cross_check_full_rank(kind: ObjectiveKind, model: &GramianModel, p: &[f64], value: f64, warnings: &mut Vec<String>) -> Result<()> {
    let w = model.gramian(p)?;
    let direct = match kind {
        ObjectiveKind::Vcs => crate::scores::neg_log_det(&w),
        ObjectiveKind::Aecs => crate::scores::trace_inverse(&w),
    };
    if (direct - value).abs() > 1e-8 * direct.abs().max(1.0) {
        warnings.push(format!("objective {value} disagrees with the direct matrix formula {direct}"));
    }
    Ok(())
}

/// The proof of strict convexity needs the selected rows of the eigenvalue
/// table to be linearly independent as vectors over the nodes.
fn selected_rows_independent(model: &GramianModel, n: usize, report: &AssumptionReport, tol: f64) -> bool {
    let table: Option<(DMatrix<f64>, Vec<usize>)> = match model {
        GramianModel::Spectral(m) => Some((m.table().clone(), report.selected_rows.clone())),
        GramianModel::Dense(f) => spectral_model_from_gramians(f, n, tol).ok().map(|jd| {
            let sums: Vec<f64> = jd.model.table().row_iter().map(|r| r.sum()).collect();
            (jd.model.table().clone(), crate::spectral::select_top_rows(&sums, n))
        }),
    };
    let Some((table, rows)) = table else { return false };
    let m = table.ncols();
    if rows.len() < m {
        return false;
    }
    let selected = DMatrix::from_fn(rows.len(), m, |r, c| table[(rows[r], c)]);
    let sv = selected.singular_values();
    let largest = sv.max();
    largest > 0.0 && sv.min() > 1e-10 * largest && sv.len() == m
}

fn warm_start(kind: ObjectiveKind, model: &GramianModel, caps: &[f64], warnings: &mut Vec<String>) -> Result<SimplexWeights> {
    let GramianModel::Spectral(table) = model else {
        return capped_barycenter(caps);
    };
    let unit_caps = vec![1.0; caps.len()];
    match closed_form_optimum(kind, table, &unit_caps) {
        Ok(p) => {
            if p.values().iter().zip(caps).any(|(v, a)| v > a) {
                warnings.push("closed-form optimum violates a cap; solving from its projection".into());
                project_capped_simplex(p.values(), caps)
            } else {
                Ok(SimplexWeights::new(p.into_values(), caps.to_vec())?)
            }
        }
        Err(Error::NotDiagonal) => capped_barycenter(caps),
        Err(e) => Err(e),
    }
}

/// Start 0 is the warm start; the rest mix the capped barycenter with a seeded
/// symmetric-Dirichlet draw.
fn start_points(
    kind: ObjectiveKind,
    model: &GramianModel,
    n: usize,
    caps: &[f64],
    warm: &SimplexWeights,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let bary = capped_barycenter(caps)?;
    let warm_ok = evaluate(kind, model, warm.values(), n, Derivatives::Value)?.is_feasible();
    let mut points = vec![if warm_ok { warm.values().to_vec() } else { bary.values().to_vec() }];
    for index in 1..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64));
        let draw: Vec<f64> = (0..caps.len()).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = draw.iter().sum();
        let mut mix = 0.5;
        let point = loop {
            let v: Vec<f64> = bary.values().iter().zip(&draw).map(|(b, d)| (1.0 - mix) * b + mix * d / total).collect();
            let p = project_capped_simplex(&v, caps)?;
            if evaluate(kind, model, p.values(), n, Derivatives::Value)?.is_feasible() || mix < 1e-3 {
                break p;
            }
            mix *= 0.5;
        };
        points.push(point.into_values());
    }
    Ok(points)
}

struct Iterate {
    p: Vec<f64>,
    eval: ObjectiveEvaluation,
    grad: DVector<f64>,
}

fn iterate_at(kind: ObjectiveKind, model: &GramianModel, n: usize, p: Vec<f64>) -> Result<Option<Iterate>> {
    let eval = evaluate(kind, model, &p, n, Derivatives::Gradient)?;
    if !eval.is_feasible() {
        return Ok(None);
    }
    let analytic = eval.gradient.clone().expect("feasible evaluation has a gradient");
    let grad = if eval.smooth {
        analytic
    } else {
        finite_difference_gradient(kind, model, n, &p).unwrap_or(analytic)
    };
    Ok(Some(Iterate { p, eval, grad }))
}

/// Central differences of the objective; `None` if any probe leaves the domain.
fn finite_difference_gradient(kind: ObjectiveKind, model: &GramianModel, n: usize, p: &[f64]) -> Option<DVector<f64>> {
    let mut g = DVector::zeros(p.len());
    let mut probe = p.to_vec();
    for i in 0..p.len() {
        probe[i] = p[i] + FD_STEP;
        let up = evaluate(kind, model, &probe, n, Derivatives::Value).ok()?.value;
        probe[i] = p[i] - FD_STEP;
        let down = evaluate(kind, model, &probe, n, Derivatives::Value).ok()?.value;
        probe[i] = p[i];
        if !up.is_finite() || !down.is_finite() {
            return None;
        }
        g[i] = (up - down) / (2.0 * FD_STEP);
    }
    Some(g)
}

fn projected_residual(p: &[f64], grad: &DVector<f64>, caps: &[f64]) -> Result<f64> {
    let shifted: Vec<f64> = p.iter().zip(grad.iter()).map(|(x, g)| x - g).collect();
    let proj = project_capped_simplex(&shifted, caps)?;
    Ok(p.iter().zip(proj.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn run_start(
    kind: ObjectiveKind,
    model: &GramianModel,
    n: usize,
    caps: &[f64],
    config: &SolveConfig,
    start_index: usize,
    p0: Vec<f64>,
) -> Result<StartOutcome> {
    let initial = p0.clone();
    let mut current = iterate_at(kind, model, n, p0)?.ok_or(Error::Infeasible { n })?;
    let mut objective_trace = vec![current.eval.value];
    let mut selection_history = vec![current.eval.active_rows.clone()];
    let mut residual = projected_residual(&current.p, &current.grad, caps)?;
    let mut step = 1.0 / current.grad.amax().max(1e-12);
    let mut iterations = 0;

    while residual > config.grad_tol && iterations < config.max_iters {
        let mut alpha = step;
        let mut retried_crossing = false;
        let accepted = loop {
            if alpha < MIN_STEP {
                break None;
            }
            let shifted: Vec<f64> = current.p.iter().zip(current.grad.iter()).map(|(x, g)| x - alpha * g).collect();
            let trial_p = project_capped_simplex(&shifted, caps)?.into_values();
            if trial_p == current.p {
                break None;
            }
            let slope: f64 = trial_p.iter().zip(&current.p).zip(current.grad.iter()).map(|((y, x), g)| g * (y - x)).sum();
            let Some(trial) = iterate_at(kind, model, n, trial_p)? else {
                alpha *= config.step_shrink;
                continue;
            };
            let f_old = current.eval.value;
            let f_new = trial.eval.value;
            let sufficient = f_new <= f_old + config.armijo_c * slope;
            // Below the rounding floor of f the Armijo decrease cannot be resolved;
            // accept any non-increasing step that does not lengthen the projected gradient.
            let noise_floor = NOISE_ULPS * f64::EPSILON * f_old.abs().max(1.0);
            let within_noise = -slope * config.armijo_c <= noise_floor
                && f_new <= f_old + noise_floor
                && projected_residual(&trial.p, &trial.grad, caps)? < residual;
            if !(sufficient || within_noise) {
                alpha *= config.step_shrink;
                continue;
            }
            if trial.eval.active_rows != current.eval.active_rows && !retried_crossing {
                retried_crossing = true;
                alpha *= config.step_shrink;
                continue;
            }
            break Some((trial, alpha));
        };
        let Some((next, used)) = accepted else { break };
        iterations += 1;

        let s = DVector::from_iterator(next.p.len(), next.p.iter().zip(&current.p).map(|(a, b)| a - b));
        let y = &next.grad - &current.grad;
        let sy = s.dot(&y);
        step = if sy > 0.0 { (s.dot(&s) / sy).clamp(1e-12 * used, 1e12 * used.max(1e-300)) } else { used * 2.0 };

        if next.eval.active_rows != current.eval.active_rows && !selection_history.contains(&next.eval.active_rows) {
            selection_history.push(next.eval.active_rows.clone());
        }
        current = next;
        objective_trace.push(current.eval.value);
        residual = projected_residual(&current.p, &current.grad, caps)?;
    }

    Ok(StartOutcome {
        start_index,
        initial,
        objective: current.eval.value,
        converged: residual <= config.grad_tol,
        weights: current.p,
        kkt_residual: residual,
        iterations,
        objective_trace,
        selection_history,
    })
}

/// First-order optimality diagnostics at a capped-simplex point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `||p - Π(p - ∇h(p))||_∞`.
    pub residual: f64,
    /// Multiplier of `Σp = 1`, estimated from the free coordinates.
    pub multiplier: f64,
    /// `∂h/∂p_i + multiplier`: zero on free coordinates, `≥ 0` at zero, `≤ 0` at a cap.
    pub stationarity_gaps: Vec<f64>,
    pub at_zero: Vec<usize>,
    pub at_cap: Vec<usize>,
}

pub fn kkt_report(kind: ObjectiveKind, model: &GramianModel, p: &SimplexWeights, n: usize) -> Result<KktReport> {
    let eval = evaluate(kind, model, p.values(), n, Derivatives::Gradient)?;
    if !eval.is_feasible() {
        return Err(Error::InfeasiblePoint { nth_eigenvalue: eval.eigenvalues.last().copied().unwrap_or(0.0) });
    }
    let grad = eval.gradient.expect("feasible evaluation has a gradient");
    let residual = projected_residual(p.values(), &grad, p.caps())?;
    let bound_tol = 1e-12;
    let at_zero: Vec<usize> = (0..p.len()).filter(|&i| p.values()[i] <= bound_tol).collect();
    let at_cap: Vec<usize> = (0..p.len())
        .filter(|&i| !at_zero.contains(&i) && p.values()[i] >= p.caps()[i] - bound_tol)
        .collect();
    let free: Vec<usize> = (0..p.len()).filter(|i| !at_zero.contains(i) && !at_cap.contains(i)).collect();
    let multiplier = if free.is_empty() {
        -grad.mean()
    } else {
        -free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64
    };
    let stationarity_gaps = grad.iter().map(|g| g + multiplier).collect();
    Ok(KktReport { residual, multiplier, stationarity_gaps, at_zero, at_cap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub weights: SimplexWeights,
    pub value: f64,
    pub points_evaluated: u64,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Exhaustive minimization over the lattice `{p = u / N : u ∈ ℕ^m, Σu = N}` with
/// `N = 1/step`, restricted to the caps. Ties keep the first point in
/// lexicographic order of `u`.
pub fn grid_oracle(kind: ObjectiveKind, model: &GramianModel, n: usize, caps: &[f64], step: f64) -> Result<GridOptimum> {
    validate_caps(caps)?;
    let m = model.node_count();
    if caps.len() != m {
        return Err(Error::IndexMismatch { expected: m, got: caps.len() });
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidArgument(format!("grid step {step} must lie in (0, 1]")));
    }
    let divisions = (1.0 / step).round();
    if (divisions * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("grid step {step} does not divide 1")));
    }
    let divisions = divisions as usize;
    let points = binomial((divisions + m - 1) as u128, (m - 1) as u128);
    if points > GRID_BUDGET {
        return Err(Error::TooLarge { points, budget: GRID_BUDGET });
    }

    let best = (0..=divisions)
        .into_par_iter()
        .map(|first| -> Result<SliceBest> {
            let mut units = vec![0usize; m];
            units[0] = first;
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut count = 0u64;
            enumerate_tail(&mut units, 1, divisions - first, &mut |u| {
                let p: Vec<f64> = u.iter().map(|&k| k as f64 / divisions as f64).collect();
                if p.iter().zip(caps).any(|(x, a)| *x > a + 1e-12) {
                    return Ok(());
                }
                count += 1;
                let value = evaluate(kind, model, &p, n, Derivatives::Value)?.value;
                if best.as_ref().is_none_or(|(v, _)| value < *v) {
                    best = Some((value, u.to_vec()));
                }
                Ok(())
            })?;
            Ok((best, count))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = 0u64;
    let mut winner: Option<(f64, Vec<usize>)> = None;
    for (candidate, count) in best {
        total += count;
        if let Some((v, u)) = candidate {
            if winner.as_ref().is_none_or(|(bv, _)| v < *bv) {
                winner = Some((v, u));
            }
        }
    }
    let (value, units) = winner.ok_or(Error::Infeasible { n })?;
    if !value.is_finite() {
        return Err(Error::Infeasible { n });
    }
    let weights: Vec<f64> = units.iter().map(|&k| k as f64 / divisions as f64).collect();
    let sum: f64 = weights.iter().sum();
    let weights = if (sum - 1.0).abs() <= crate::simplex::SUM_TOL {
        SimplexWeights::new(weights, caps.to_vec())?
    } else {
        project_capped_simplex(&weights, caps)?
    };
    Ok(GridOptimum { weights, value, points_evaluated: total })
}

/// Visits every way of distributing `remaining` units over `units[pos..]`.
/// Best lattice point in one slice of the grid (value, units) and the points visited.
type SliceBest = (Option<(f64, Vec<usize>)>, u64);

fn enumerate_tail(units: &mut [usize], pos: usize, remaining: usize, visit: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    if pos == units.len() {
        return if remaining == 0 { visit(units) } else { Ok(()) };
    }
    if pos == units.len() - 1 {
        units[pos] = remaining;
        return visit(units);
    }
    for k in 0..=remaining {
        units[pos] = k;
        enumerate_tail(units, pos + 1, remaining - k, visit)?;
    }
    units[pos] = 0;
    Ok(())
}

/// Scores for a finite-dimensional system with unit caps.
pub fn finite_dim_scores(family: &crate::linsys::NodeGramianFamily, kind: ObjectiveKind, n: usize, config: &SolveConfig) -> Result<ScoreResult> {
    if n > family.dimension() {
        return Err(Error::InvalidArgument(format!("n = {n} exceeds state dimension {}", family.dimension())));
    }
    let model = GramianModel::Dense(family.clone());
    solve(kind, &model, n, &vec![1.0; family.node_count()], config)
}

/// Convenience for table models: solve with the model's own score order.
pub fn solve_spectral(kind: ObjectiveKind, model: &SpectralModel, caps: &[f64], config: &SolveConfig) -> Result<ScoreResult> {
    solve(kind, &GramianModel::Spectral(model.clone()), model.score_order(), caps, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{check_stability, NodeGramianFamily};
    use crate::spectral::heat_dirichlet_model;
    use approx::assert_relative_eq;

    fn heat(nodes: &[usize]) -> GramianModel {
        GramianModel::Spectral(heat_dirichlet_model(nodes).unwrap())
    }

    fn diag_family(d: &[f64]) -> NodeGramianFamily {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(d));
        NodeGramianFamily::all_nodes(check_stability(&a).unwrap()).unwrap()
    }

    #[test]
    fn heat_aecs_from_barycenter_converges_to_closed_form() {
        let model = heat(&[2, 3, 4, 5]);
        let warm = capped_barycenter(&[1.0; 4]).unwrap().into_values();
        let out = run_start(ObjectiveKind::Aecs, &model, 4, &[1.0; 4], &SolveConfig::default(), 0, warm).unwrap();
        assert!(out.converged, "residual {}", out.kkt_residual);
        for (x, k) in out.weights.iter().zip([2.0, 3.0, 4.0, 5.0]) {
            assert_relative_eq!(*x, k / 14.0, epsilon = 1e-8);
        }
        let floor = |f: f64| NOISE_ULPS * f64::EPSILON * f.abs();
        assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0] + floor(w[0])));
    }

    #[test]
    fn solve_matches_closed_form_on_heat() {
        let cfg = SolveConfig::default();
        let r = solve(ObjectiveKind::Aecs, &heat(&[3, 4, 5, 6]), 4, &[1.0; 4], &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.uniqueness_certified);
        for (x, k) in r.weights.values().iter().zip([3.0, 4.0, 5.0, 6.0]) {
            assert_relative_eq!(*x, k / 18.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn dense_vcs_is_uniform_for_diagonal_dynamics() {
        let fam = diag_family(&[-1.0, -2.0, -3.0]);
        let r = finite_dim_scores(&fam, ObjectiveKind::Vcs, 3, &SolveConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        for x in r.weights.values() {
            assert!((x - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    }

    #[test]
    fn dense_aecs_matches_lagrange_solution() {
        let fam = diag_family(&[-1.0, -2.0]);
        let r = finite_dim_scores(&fam, ObjectiveKind::Aecs, 2, &SolveConfig::default()).unwrap();
        let s2 = 2f64.sqrt();
        assert_relative_eq!(r.weights.values()[0], s2 / (s2 + 2.0), epsilon = 1e-8);
        assert_relative_eq!(r.weights.values()[1], 2.0 / (s2 + 2.0), epsilon = 1e-8);
        let grid = grid_oracle(ObjectiveKind::Aecs, &GramianModel::Dense(fam), 2, &[1.0, 1.0], 0.01).unwrap();
        assert!((grid.weights.values()[0] - 0.41).abs() < 1e-12);
        assert!(r.objective <= grid.value + 1e-9);
    }

    #[test]
    fn grid_examples() {
        let g = grid_oracle(ObjectiveKind::Aecs, &heat(&[1, 2]), 2, &[1.0, 1.0], 0.01).unwrap();
        assert_eq!(g.weights.values(), &[0.33, 0.67]);
        assert_eq!(g.points_evaluated, 101);

        let fam = diag_family(&[-1.0, -1.0]);
        let g = grid_oracle(ObjectiveKind::Vcs, &GramianModel::Dense(fam), 2, &[1.0, 1.0], 0.05).unwrap();
        assert_eq!(g.weights.values(), &[0.5, 0.5]);

        let g = grid_oracle(ObjectiveKind::Aecs, &heat(&[1, 2, 3, 4]), 4, &[1.0; 4], 0.02).unwrap();
        for (x, e) in g.weights.values().iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((x - e).abs() <= 0.02 + 1e-12);
        }
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            grid_oracle(ObjectiveKind::Vcs, &heat(&[1, 2, 3, 4, 5, 6, 7, 8]), 8, &[1.0; 8], 0.01),
            Err(Error::TooLarge { .. })
        ));
        assert!(grid_oracle(ObjectiveKind::Vcs, &heat(&[1, 2]), 2, &[1.0; 2], 0.3).is_err());
    }

    #[test]
    fn grid_respects_caps() {
        let g = grid_oracle(ObjectiveKind::Aecs, &heat(&[1, 2]), 2, &[1.0, 0.5], 0.01).unwrap();
        assert_eq!(g.weights.values(), &[0.5, 0.5]);
    }

    #[test]
    fn kkt_examples() {
        let h = heat_dirichlet_model(&[1, 2, 3, 4]).unwrap();
        let p = closed_form_optimum(ObjectiveKind::Aecs, &h, &[1.0; 4]).unwrap();
        let k = kkt_report(ObjectiveKind::Aecs, &GramianModel::Spectral(h), &p, 4).unwrap();
        assert!(k.residual <= 1e-9, "{}", k.residual);
        assert!(k.at_zero.is_empty() && k.at_cap.is_empty());

        let uniform = SimplexWeights::uniform(4).unwrap();
        let k = kkt_report(ObjectiveKind::Vcs, &heat(&[1, 2, 3, 4]), &uniform, 4).unwrap();
        assert!(k.residual <= 1e-9);

        let uniform = SimplexWeights::uniform(2).unwrap();
        let k = kkt_report(ObjectiveKind::Aecs, &heat(&[1, 2]), &uniform, 2).unwrap();
        assert!(k.residual > 0.01);

        let corner = SimplexWeights::new(vec![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            kkt_report(ObjectiveKind::Aecs, &heat(&[1, 2]), &corner, 2),
            Err(Error::InfeasiblePoint { .. })
        ));
    }

    #[test]
    fn infeasible_model_is_rejected() {
        let table = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let model = GramianModel::Spectral(SpectralModel::new(vec![1, 2], table, 2).unwrap());
        assert_eq!(
            solve(ObjectiveKind::Vcs, &model, 2, &[1.0, 1.0], &SolveConfig::default()).unwrap_err(),
            Error::Infeasible { n: 2 }
        );
    }

    #[test]
    fn binding_cap_is_respected() {
        let r = solve(ObjectiveKind::Aecs, &heat(&[1, 2]), 2, &[1.0, 0.6], &SolveConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_relative_eq!(r.weights.values()[1], 0.6, epsilon = 1e-12);
        assert!(r.warnings.iter().any(|w| w.contains("cap")));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let table = DMatrix::from_row_slice(3, 3, &[0.4, 0.1, 0.1, 0.05, 0.9, 0.0, 0.2, 0.3, 0.5]);
        let model = GramianModel::Spectral(SpectralModel::new(vec![1, 2, 3], table, 2).unwrap());
        let cfg = SolveConfig { seed: 11, ..SolveConfig::default() };
        let a = solve(ObjectiveKind::Vcs, &model, 2, &[1.0; 3], &cfg).unwrap();
        let b = solve(ObjectiveKind::Vcs, &model, 2, &[1.0; 3], &cfg).unwrap();
        assert_eq!(a.starts, b.starts);
        assert_eq!(a.starts.len(), 8);
    }

    #[test]
    fn config_validation() {
        let bad = SolveConfig { step_shrink: 1.5, ..SolveConfig::default() };
        assert!(solve(ObjectiveKind::Vcs, &heat(&[1]), 1, &[1.0], &bad).is_err());
    }
}
