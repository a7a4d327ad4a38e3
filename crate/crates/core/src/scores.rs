//! Objective functions of the volumetric (VCS) and average-energy (AECS)
//! controllability scores, with exact first and second derivatives.
//!
//! Both objectives are spectral functions of the `n` largest eigenvalues
//! `μ_1 ≥ … ≥ μ_n` of `W(p)`:
//!
//! * VCS: `f(p) = -Σ_k log μ_k`
//! * AECS: `g(p) = Σ_k 1 / μ_k`
//!
//! Points where `μ_n` is not positive are outside the domain and evaluate to
//! `+∞` with no derivatives.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{symmetric_spectrum, DEFAULT_TOL};
use crate::model::GramianModel;
use crate::simplex::{validate_caps, SimplexWeights};
use crate::spectral::{select_top_rows, SpectralModel, DEGENERACY_GAP, FEASIBILITY_REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Vcs,
    Aecs,
}

impl ObjectiveKind {
    fn phi(self, mu: f64) -> f64 {
        match self {
            Self::Vcs => -mu.ln(),
            Self::Aecs => 1.0 / mu,
        }
    }

    fn dphi(self, mu: f64) -> f64 {
        match self {
            Self::Vcs => -1.0 / mu,
            Self::Aecs => -1.0 / (mu * mu),
        }
    }

    fn d2phi(self, mu: f64) -> f64 {
        match self {
            Self::Vcs => 1.0 / (mu * mu),
            Self::Aecs => 2.0 / (mu * mu * mu),
        }
    }

    /// `(φ'(a) - φ'(b)) / (a - b)`, continuous through `a = b`.
    fn dphi_divided(self, a: f64, b: f64) -> f64 {
        match self {
            Self::Vcs => 1.0 / (a * b),
            Self::Aecs => (a + b) / (a * a * b * b),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Vcs => "vcs",
            Self::Aecs => "aecs",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vcs" => Ok(Self::Vcs),
            "aecs" => Ok(Self::Aecs),
            other => Err(Error::InvalidArgument(format!("unknown score kind {other:?}"))),
        }
    }
}

/// How many derivatives [`evaluate`] should compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Derivatives {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone)]
pub struct ObjectiveEvaluation {
    /// `+∞` outside the feasible set.
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
    /// Table rows (spectral models) or eigenvalue positions (dense) of the top `n`.
    pub active_rows: Vec<usize>,
    /// The top `n` eigenvalues in selection order.
    pub eigenvalues: Vec<f64>,
    /// False when `μ_n` and `μ_{n+1}` are within the degeneracy gap, where the
    /// objective is not differentiable.
    pub smooth: bool,
}

impl ObjectiveEvaluation {
    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }

    fn infeasible(active_rows: Vec<usize>, eigenvalues: Vec<f64>) -> Self {
        Self { value: f64::INFINITY, gradient: None, hessian: None, active_rows, eigenvalues, smooth: false }
    }
}

/// Evaluates `f` or `g` at `p` over the `n` largest eigenvalues of `W(p)`.
pub fn evaluate(kind: ObjectiveKind, model: &GramianModel, p: &[f64], n: usize, depth: Derivatives) -> Result<ObjectiveEvaluation> {
    if p.len() != model.node_count() {
        return Err(Error::IndexMismatch { expected: model.node_count(), got: p.len() });
    }
    if n == 0 || n > model.state_dimension() {
        return Err(Error::InvalidArgument(format!("n = {n} outside 1..={}", model.state_dimension())));
    }
    match model {
        GramianModel::Spectral(m) => evaluate_table(kind, m, p, n, depth),
        GramianModel::Dense(_) => evaluate_dense(kind, model, p, n, depth),
    }
}

fn is_positive(mu_n: f64, mu_1: f64) -> bool {
    mu_n > 0.0 && mu_n > FEASIBILITY_REL_TOL * mu_1
}

fn evaluate_table(kind: ObjectiveKind, model: &SpectralModel, p: &[f64], n: usize, depth: Derivatives) -> Result<ObjectiveEvaluation> {
    let values = model.mode_values(p)?;
    let rows = select_top_rows(&values, n);
    let mu: Vec<f64> = rows.iter().map(|&k| values[k]).collect();
    if !is_positive(mu[n - 1], mu[0]) {
        return Ok(ObjectiveEvaluation::infeasible(rows, mu));
    }
    let next = (0..values.len())
        .filter(|k| !rows.contains(k))
        .map(|k| values[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let smooth = mu[n - 1] - next > DEGENERACY_GAP * mu[0];

    let value = mu.iter().map(|&x| kind.phi(x)).sum();
    let table = model.table();
    let m = p.len();
    let gradient = (depth >= Derivatives::Gradient).then(|| {
        DVector::from_fn(m, |i, _| rows.iter().zip(&mu).map(|(&k, &x)| kind.dphi(x) * table[(k, i)]).sum())
    });
    let hessian = (depth >= Derivatives::Hessian).then(|| {
        DMatrix::from_fn(m, m, |a, b| {
            rows.iter()
                .zip(&mu)
                .map(|(&k, &x)| kind.d2phi(x) * table[(k, a)] * table[(k, b)])
                .sum()
        })
    });
    Ok(ObjectiveEvaluation { value, gradient, hessian, active_rows: rows, eigenvalues: mu, smooth })
}

fn evaluate_dense(kind: ObjectiveKind, model: &GramianModel, p: &[f64], n: usize, depth: Derivatives) -> Result<ObjectiveEvaluation> {
    let GramianModel::Dense(family) = model else { unreachable!() };
    let w = family.assemble(p)?;
    let spectrum = symmetric_spectrum(&w, DEFAULT_TOL)?;
    let mu_all = &spectrum.values;
    let rows: Vec<usize> = (0..n).collect();
    let mu: Vec<f64> = mu_all[..n].to_vec();
    if !is_positive(mu[n - 1], mu[0]) {
        return Ok(ObjectiveEvaluation::infeasible(rows, mu));
    }
    let dim = mu_all.len();
    let smooth = n == dim || mu[n - 1] - mu_all[n] > DEGENERACY_GAP * mu[0];
    let value = mu.iter().map(|&x| kind.phi(x)).sum();
    if depth == Derivatives::Value {
        return Ok(ObjectiveEvaluation { value, gradient: None, hessian: None, active_rows: rows, eigenvalues: mu, smooth });
    }

    // Node Gramians in the eigenbasis of W(p): a[i][(k, l)] = z_k^T W_i z_l.
    let z = &spectrum.vectors;
    let rotated: Vec<DMatrix<f64>> = family.gramians().iter().map(|wi| z.transpose() * wi * z).collect();
    let m = p.len();
    let gradient = DVector::from_fn(m, |i, _| (0..n).map(|k| kind.dphi(mu[k]) * rotated[i][(k, k)]).sum());

    let hessian = (depth == Derivatives::Hessian && smooth).then(|| {
        let mut h = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let (ra, rb) = (&rotated[a], &rotated[b]);
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        let coupling = ra[(k, l)] * rb[(k, l)];
                        s += if k == l {
                            kind.d2phi(mu[k]) * coupling
                        } else {
                            kind.dphi_divided(mu[k], mu[l]) * coupling
                        };
                    }
                    for l in n..dim {
                        s += 2.0 * kind.dphi(mu[k]) * ra[(k, l)] * rb[(k, l)] / (mu[k] - mu_all[l]);
                    }
                }
                h[(a, b)] = s;
                h[(b, a)] = s;
            }
        }
        h
    });
    Ok(ObjectiveEvaluation { value, gradient: Some(gradient), hessian, active_rows: rows, eigenvalues: mu, smooth })
}

/// `-log det W` via Cholesky; `+∞` when `W` is not positive definite.
pub fn neg_log_det(w: &DMatrix<f64>) -> f64 {
    match w.clone().cholesky() {
        Some(chol) => -2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::INFINITY,
    }
}

/// `tr(W⁻¹)` via Cholesky; `+∞` when `W` is not positive definite.
pub fn trace_inverse(w: &DMatrix<f64>) -> f64 {
    match w.clone().cholesky() {
        Some(chol) => chol.inverse().trace(),
        None => f64::INFINITY,
    }
}

/// Optimum of a diagonal table model with `n = |I|`.
///
/// Node `i` excites one mode with eigenvalue `p_i λ_i`, so the objectives separate:
/// VCS is uniform, and AECS minimizes `Σ c_i / p_i` with `c_i = 1/λ_i`, giving
/// `p_i ∝ √c_i`.
pub fn closed_form_optimum(kind: ObjectiveKind, model: &SpectralModel, caps: &[f64]) -> Result<SimplexWeights> {
    let m = model.node_count();
    validate_caps(caps)?;
    if caps.len() != m {
        return Err(Error::IndexMismatch { expected: m, got: caps.len() });
    }
    if !model.is_diagonal() || model.score_order() != m {
        return Err(Error::NotDiagonal);
    }
    let values: Vec<f64> = match kind {
        ObjectiveKind::Vcs => vec![1.0 / m as f64; m],
        ObjectiveKind::Aecs => {
            let roots: Vec<f64> = model
                .table()
                .column_iter()
                .map(|col| (1.0 / col.max()).sqrt())
                .collect();
            let total: f64 = roots.iter().sum();
            roots.iter().map(|r| r / total).collect()
        }
    };
    if let Some(position) = values.iter().zip(caps).position(|(v, a)| v > a) {
        return Err(Error::CapsBind { position, value: values[position], cap: caps[position] });
    }
    SimplexWeights::new(values, caps.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{check_stability, NodeGramianFamily};
    use crate::spectral::heat_dirichlet_model;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn heat(nodes: &[usize]) -> GramianModel {
        GramianModel::Spectral(heat_dirichlet_model(nodes).unwrap())
    }

    #[test]
    fn heat_aecs_value() {
        let e = evaluate(ObjectiveKind::Aecs, &heat(&[1, 2, 3, 4]), &[0.1, 0.2, 0.3, 0.4], 4, Derivatives::Value).unwrap();
        // 2π² (1/0.1 + 4/0.2 + 9/0.3 + 16/0.4), summed independently.
        let oracle: f64 = [(1.0, 0.1), (4.0, 0.2), (9.0, 0.3), (16.0, 0.4)]
            .iter()
            .map(|(k2, p)| 2.0 * PI * PI * k2 / p)
            .sum();
        assert_relative_eq!(e.value, oracle, max_relative = 1e-14);
        assert_relative_eq!(e.value, 1973.920880217872, max_relative = 1e-12);
    }

    #[test]
    fn heat_vcs_value() {
        let e = evaluate(ObjectiveKind::Vcs, &heat(&[1, 2]), &[0.5, 0.5], 2, Derivatives::Value).unwrap();
        let expected = 4.0f64.ln() + (16.0 * PI.powi(4)).ln();
        assert_relative_eq!(e.value, expected, max_relative = 1e-14);
    }

    #[test]
    fn zero_weight_is_infeasible() {
        let e = evaluate(ObjectiveKind::Aecs, &heat(&[1, 2, 3]), &[0.5, 0.5, 0.0], 3, Derivatives::Hessian).unwrap();
        assert!(!e.is_feasible());
        assert_eq!(e.value, f64::INFINITY);
        assert!(e.gradient.is_none());
    }

    #[test]
    fn dense_gradient_and_hessian_reduce_to_matrix_identities() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 0.5, 0.1, 0.3, -1.0, 0.4, -0.2, 0.1, -1.5]);
        let fam = NodeGramianFamily::all_nodes(check_stability(&a).unwrap()).unwrap();
        let model = GramianModel::Dense(fam.clone());
        let p = [0.2, 0.5, 0.3];
        let w = fam.assemble(&p).unwrap();
        let winv = w.clone().try_inverse().unwrap();
        let f = evaluate(ObjectiveKind::Vcs, &model, &p, 3, Derivatives::Hessian).unwrap();
        let g = evaluate(ObjectiveKind::Aecs, &model, &p, 3, Derivatives::Hessian).unwrap();
        assert_relative_eq!(f.value, neg_log_det(&w), max_relative = 1e-10);
        assert_relative_eq!(g.value, trace_inverse(&w), max_relative = 1e-10);
        for i in 0..3 {
            let wi = &fam.gramians()[i];
            assert_relative_eq!(f.gradient.as_ref().unwrap()[i], -(&winv * wi).trace(), max_relative = 1e-9);
            assert_relative_eq!(g.gradient.as_ref().unwrap()[i], -(&winv * &winv * wi).trace(), max_relative = 1e-9);
            for j in 0..3 {
                let wj = &fam.gramians()[j];
                let hf = (&winv * wi * &winv * wj).trace();
                let hg = 2.0 * (&winv * wi * &winv * wj * &winv).trace();
                assert_relative_eq!(f.hessian.as_ref().unwrap()[(i, j)], hf, max_relative = 1e-8);
                assert_relative_eq!(g.hessian.as_ref().unwrap()[(i, j)], hg, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let h = heat_dirichlet_model(&[1, 2, 3, 4]).unwrap();
        let p = closed_form_optimum(ObjectiveKind::Aecs, &h, &[1.0; 4]).unwrap();
        for (x, e) in p.values().iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert_relative_eq!(*x, e, epsilon = 1e-15);
        }
        let h = heat_dirichlet_model(&[1, 2, 3, 6]).unwrap();
        let p = closed_form_optimum(ObjectiveKind::Aecs, &h, &[1.0; 4]).unwrap();
        for (x, e) in p.values().iter().zip([1.0 / 12.0, 2.0 / 12.0, 3.0 / 12.0, 6.0 / 12.0]) {
            assert_relative_eq!(*x, e, epsilon = 1e-15);
        }
        let h = heat_dirichlet_model(&[2, 5, 9]).unwrap();
        let p = closed_form_optimum(ObjectiveKind::Vcs, &h, &[1.0; 3]).unwrap();
        assert_eq!(p.values(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn closed_form_errors() {
        let h = heat_dirichlet_model(&[1, 2]).unwrap();
        assert!(matches!(
            closed_form_optimum(ObjectiveKind::Aecs, &h, &[1.0, 0.5]),
            Err(Error::CapsBind { position: 1, .. })
        ));
        let mixed = SpectralModel::new(vec![1, 2], DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), 2).unwrap();
        assert_eq!(closed_form_optimum(ObjectiveKind::Vcs, &mixed, &[1.0, 1.0]).unwrap_err(), Error::NotDiagonal);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("VCS".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::Vcs);
        assert_eq!("aecs".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::Aecs);
        assert!("energy".parse::<ObjectiveKind>().is_err());
    }
}
