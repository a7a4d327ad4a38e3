//! Minimum-energy control and reachable ellipsoids over the top-`n` eigenspace
//! of `W(p)`, plus a discretized check of the minimum-norm control operator.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linsys::{symmetric_spectrum, NodeGramianFamily, DEFAULT_TOL};
use crate::model::GramianModel;

/// Relative residual allowed when checking that a target lies in the top-`n` span.
pub const SPAN_TOL: f64 = 1e-8;

const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyQuery {
    pub target: Vec<f64>,
    /// Number of leading eigenpairs used for the pseudo-inverse.
    pub rank: usize,
}

/// Top-`n` eigenpairs of a Gramian.
#[derive(Debug, Clone)]
struct Frame {
    eigenvalues: Vec<f64>,
    directions: DMatrix<f64>,
}

fn frame(w: &DMatrix<f64>, n: usize) -> Result<Frame> {
    if n == 0 || n > w.nrows() {
        return Err(Error::InvalidArgument(format!("rank {n} outside 1..={}", w.nrows())));
    }
    let spectrum = symmetric_spectrum(w, DEFAULT_TOL)?;
    Ok(Frame { eigenvalues: spectrum.values[..n].to_vec(), directions: spectrum.leading_vectors(n) })
}

/// `Σ_k ⟨x, z_k⟩² / μ_k`.
fn frame_energy(frame: &Frame, x: &DVector<f64>) -> f64 {
    let coords = frame.directions.transpose() * x;
    coords.iter().zip(&frame.eigenvalues).map(|(c, mu)| c * c / mu).sum()
}

fn span_residual(frame: &Frame, x: &DVector<f64>) -> f64 {
    let coords = frame.directions.transpose() * x;
    (x - &frame.directions * coords).norm()
}

/// Minimum input energy `Σ_k ⟨x_f, z_k⟩² / μ_k` to reach `x_f` on the infinite horizon.
///
/// Equals `x_f^T W(p)^{-1} x_f` when `W(p)` is nonsingular and the rank equals the
/// state dimension.
pub fn min_energy(model: &GramianModel, p: &[f64], query: &EnergyQuery) -> Result<f64> {
    let w = model.gramian(p)?;
    if query.target.len() != w.nrows() {
        return Err(Error::IndexMismatch { expected: w.nrows(), got: query.target.len() });
    }
    if query.target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let frame = frame(&w, query.rank)?;
    let x = DVector::from_column_slice(&query.target);
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let smallest = frame.eigenvalues[query.rank - 1];
    if smallest.is_nan() || smallest <= 0.0 {
        return Err(Error::SingularGramian { n: query.rank, eigenvalue: smallest });
    }
    let residual = span_residual(&frame, &x);
    if residual > SPAN_TOL * norm {
        return Err(Error::TargetOutsideSpan { residual: residual / norm });
    }
    Ok(frame_energy(&frame, &x))
}

/// `log` of the volume of the unit ball in `n` dimensions.
pub fn log_unit_ball_volume(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    half * std::f64::consts::PI.ln() - ln_gamma(half + 1.0)
}

/// The `n`-dimensional section `{Σ a_k z_k : Σ a_k² / μ_k ≤ 1}` of the reachable set.
#[derive(Debug, Clone)]
pub struct ReachabilityEllipsoid {
    /// `√μ_k`, descending.
    pub semi_axes: Vec<f64>,
    /// Column `k` is `z_k`.
    pub axis_directions: DMatrix<f64>,
    /// `log V_n + ½ Σ log μ_k`.
    pub log_volume: f64,
    frame: Frame,
}

impl ReachabilityEllipsoid {
    pub fn dimension(&self) -> usize {
        self.semi_axes.len()
    }

    /// Minimum energy of `x` restricted to the ellipsoid's span.
    pub fn energy(&self, x: &[f64]) -> f64 {
        frame_energy(&self.frame, &DVector::from_column_slice(x))
    }

    /// Membership uses the same arithmetic as [`min_energy`].
    pub fn contains(&self, x: &[f64]) -> bool {
        self.energy(x) <= 1.0
    }
}

pub fn reachable_ellipsoid(model: &GramianModel, p: &[f64], n: usize) -> Result<ReachabilityEllipsoid> {
    let w = model.gramian(p)?;
    let frame = frame(&w, n)?;
    let smallest = frame.eigenvalues[n - 1];
    if smallest.is_nan() || smallest <= 0.0 {
        return Err(Error::RankDeficient { n, eigenvalue: smallest });
    }
    let semi_axes = frame.eigenvalues.iter().map(|mu| mu.sqrt()).collect();
    let log_volume = log_unit_ball_volume(n) + 0.5 * frame.eigenvalues.iter().map(|mu| mu.ln()).sum::<f64>();
    Ok(ReachabilityEllipsoid { semi_axes, axis_directions: frame.directions.clone(), log_volume, frame })
}

/// Closed-form mean of the minimum energy over unit targets uniform on the
/// sphere of the top-`n` span: `(1/n) Σ 1/μ_k`.
pub fn expected_sphere_energy(model: &GramianModel, p: &[f64], n: usize) -> Result<f64> {
    let w = model.gramian(p)?;
    let frame = frame(&w, n)?;
    let smallest = frame.eigenvalues[n - 1];
    if smallest.is_nan() || smallest <= 0.0 {
        return Err(Error::SingularGramian { n, eigenvalue: smallest });
    }
    Ok(frame.eigenvalues.iter().map(|mu| 1.0 / mu).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo mean of [`min_energy`] over uniform unit targets in the top-`n` span.
///
/// Samples are drawn in fixed-size chunks, each with its own seeded stream,
/// and reduced in chunk order so the estimate does not depend on thread count.
pub fn monte_carlo_sphere_energy(model: &GramianModel, p: &[f64], n: usize, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let w = model.gramian(p)?;
    let frame = frame(&w, n)?;
    let smallest = frame.eigenvalues[n - 1];
    if smallest.is_nan() || smallest <= 0.0 {
        return Err(Error::SingularGramian { n, eigenvalue: smallest });
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = MC_CHUNK.min(samples - chunk * MC_CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                let g = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let x = &frame.directions * (g.clone() / g.norm());
                let e = frame_energy(&frame, &x);
                sum += e;
                sum_sq += e * e;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partial.iter().fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let count = samples as f64;
    let mean = sum / count;
    let variance = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
    Ok(MonteCarloEstimate { mean, std_error: (variance / count).sqrt(), samples })
}

/// `W(p, T) = W(p) - e^{TA} W(p) e^{TA^T}` for a dense family.
pub fn finite_horizon_gramian(family: &NodeGramianFamily, p: &[f64], horizon: f64) -> Result<DMatrix<f64>> {
    let w = family.assemble(p)?;
    let phi = (family.system().dynamics() * horizon).exp();
    let wt = &w - &phi * &w * phi.transpose();
    Ok((&wt + wt.transpose()) * 0.5)
}

/// Residuals of the discretized minimum-norm control operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDiagnostic {
    /// `||P̂² - P̂||_F`.
    pub idempotency_residual: f64,
    /// `||P̂^T - P̂||_F`.
    pub symmetry_residual: f64,
    /// Numerical rank of the discretized Gramian.
    pub rank: usize,
    pub rank_deficient: bool,
    /// `||û||²` for the minimum-norm discrete control reaching the target.
    pub discretized_energy: Option<f64>,
    /// `x_f^T W_n(p, T)^† x_f` from the closed-form finite-horizon Gramian.
    pub exact_energy: Option<f64>,
    pub energy_relative_error: Option<f64>,
}

/// Discretizes the reachability operator `L(p, T) u = ∫ e^{(T-t)A} B u(t) dt` on a
/// uniform midpoint grid as `L̂ = [e^{(T - t_j)A} B √Δt]_j`, and checks that
/// `P̂ = L̂^T Ŵ_n^† L̂` is an orthogonal projection.
///
/// `P̂` is never formed. With `X` a small state-space matrix,
/// `||L̂^T X L̂||_F² = tr(X^T Ŵ X Ŵ)` where `Ŵ = L̂ L̂^T`.
pub fn projection_operator_check(
    family: &NodeGramianFamily,
    p: &[f64],
    n: usize,
    horizon: f64,
    time_steps: usize,
    target: Option<&[f64]>,
) -> Result<ProjectionDiagnostic> {
    let dim = family.dimension();
    if p.len() != family.node_count() {
        return Err(Error::IndexMismatch { expected: family.node_count(), got: p.len() });
    }
    if !(horizon > 0.0 && horizon.is_finite()) || time_steps == 0 {
        return Err(Error::InvalidArgument("horizon must be positive and finite, with at least one step".into()));
    }
    if n == 0 || n > dim {
        return Err(Error::InvalidArgument(format!("rank {n} outside 1..={dim}")));
    }
    let a = family.system().dynamics();
    let mut b = DMatrix::<f64>::zeros(dim, p.len());
    for (col, (&node, &weight)) in family.node_indices().iter().zip(p).enumerate() {
        b[(node - 1, col)] = weight.max(0.0).sqrt();
    }

    let dt = horizon / time_steps as f64;
    let step = (a * dt).exp();
    let mut phi = (a * (0.5 * dt)).exp();
    let mut w_hat = DMatrix::<f64>::zeros(dim, dim);
    for _ in 0..time_steps {
        let block = &phi * &b;
        w_hat += &block * block.transpose() * dt;
        phi = &step * phi;
    }
    w_hat = (&w_hat + w_hat.transpose()) * 0.5;

    let spectrum = symmetric_spectrum(&w_hat, DEFAULT_TOL)?;
    let top = spectrum.values.first().copied().unwrap_or(0.0);
    let rank = spectrum.values.iter().filter(|&&mu| mu > 1e-12 * top.max(f64::MIN_POSITIVE) && mu > 0.0).count();
    let rank_deficient = rank < n;
    let used = n.min(rank);

    let mut pinv = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..used {
        let z = spectrum.vectors.column(k);
        pinv += z * z.transpose() / spectrum.values[k];
    }
    // The trace is a sum of squares up to rounding; `abs` keeps that rounding visible.
    let frob = |x: &DMatrix<f64>| (x.transpose() * &w_hat * x * &w_hat).trace().abs().sqrt();
    let idempotency_residual = frob(&(&pinv * &w_hat * &pinv - &pinv));
    let symmetry_residual = frob(&(pinv.transpose() - &pinv));

    let (mut discretized_energy, mut exact_energy, mut energy_relative_error) = (None, None, None);
    if let (Some(x), false) = (target, rank_deficient) {
        if x.len() != dim {
            return Err(Error::IndexMismatch { expected: dim, got: x.len() });
        }
        let x = DVector::from_column_slice(x);
        let discrete = (x.transpose() * &pinv * &w_hat * &pinv * &x)[(0, 0)];
        let exact_w = finite_horizon_gramian(family, p, horizon)?;
        let exact_frame = frame(&exact_w, n)?;
        if exact_frame.eigenvalues[n - 1] > 0.0 && span_residual(&exact_frame, &x) <= SPAN_TOL * x.norm().max(f64::MIN_POSITIVE) {
            let exact = frame_energy(&exact_frame, &x);
            discretized_energy = Some(discrete);
            exact_energy = Some(exact);
            energy_relative_error = Some((discrete - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
        } else {
            discretized_energy = Some(discrete);
        }
    }
    Ok(ProjectionDiagnostic {
        idempotency_residual,
        symmetry_residual,
        rank,
        rank_deficient,
        discretized_energy,
        exact_energy,
        energy_relative_error,
    })
}
