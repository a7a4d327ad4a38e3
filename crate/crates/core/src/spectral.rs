//! Commuting Gramian families represented by their eigenvalue tables, the
//! Dirichlet heat-equation model, and numerical checks of the structural
//! assumptions that make the scores well posed and unique.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{symmetric_spectrum, NodeGramianFamily};
use crate::model::GramianModel;
use crate::simplex::{capped_barycenter, project_capped_simplex, validate_caps, SimplexWeights};

/// Default relative tolerance for the assumption checkers.
pub const ASSUMPTION_TOL: f64 = 1e-8;

/// Relative gap below which eigenvalues are treated as one degenerate cluster.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// `μ_n(W(p)) > FEASIBILITY_REL_TOL * μ_1(W(p))` counts as strictly positive.
pub const FEASIBILITY_REL_TOL: f64 = 1e-12;

/// Eigenvalue table `Λ[k][i] = λ_k^{(i)}` of a commuting family, one row per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    node_indices: Vec<usize>,
    table: DMatrix<f64>,
    score_order: usize,
}

impl SpectralModel {
    pub fn new(node_indices: Vec<usize>, table: DMatrix<f64>, score_order: usize) -> Result<Self> {
        if node_indices.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if table.ncols() != node_indices.len() {
            return Err(Error::IndexMismatch { expected: node_indices.len(), got: table.ncols() });
        }
        let mut sorted = node_indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidModel("duplicate node index".into()));
        }
        if table.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel("eigenvalue table entries must be finite and nonnegative".into()));
        }
        if score_order == 0 || score_order > table.nrows() {
            return Err(Error::InvalidModel(format!(
                "score order {score_order} must be in 1..={}",
                table.nrows()
            )));
        }
        Ok(Self { node_indices, table, score_order })
    }

    pub fn node_indices(&self) -> &[usize] {
        &self.node_indices
    }

    pub fn node_count(&self) -> usize {
        self.node_indices.len()
    }

    /// Number of retained modes `K`.
    pub fn mode_count(&self) -> usize {
        self.table.nrows()
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn score_order(&self) -> usize {
        self.score_order
    }

    /// Per-mode eigenvalues `Σ_i p_i Λ[k][i]` of `W(p)`, in row order.
    pub fn mode_values(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.node_count() {
            return Err(Error::IndexMismatch { expected: self.node_count(), got: p.len() });
        }
        Ok(self
            .table
            .row_iter()
            .map(|row| row.iter().zip(p).map(|(l, w)| l * w).sum())
            .collect())
    }

    /// True when every node excites exactly one mode and no two nodes share one.
    pub fn is_diagonal(&self) -> bool {
        let mut used = vec![false; self.mode_count()];
        for col in self.table.column_iter() {
            let nonzero: Vec<usize> = col.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(k, _)| k).collect();
            if nonzero.len() != 1 || used[nonzero[0]] {
                return false;
            }
            used[nonzero[0]] = true;
        }
        true
    }
}

/// Dirichlet heat equation on `(0, 1)` with nodes `√2 sin(kπx)`, `k ∈ I`.
///
/// Node `k` has Gramian `(1 / (2π²k²)) e_k e_k^T`; all other modes carry zero, so
/// the table keeps exactly one row per node and `n = |I|`.
pub fn heat_dirichlet_model(nodes: &[usize]) -> Result<SpectralModel> {
    if nodes.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    if nodes.contains(&0) {
        return Err(Error::InvalidModel("heat modes are numbered from 1".into()));
    }
    let m = nodes.len();
    let mut table = DMatrix::<f64>::zeros(m, m);
    for (i, &k) in nodes.iter().enumerate() {
        let k = k as f64;
        table[(i, i)] = 1.0 / (2.0 * PI * PI * k * k);
    }
    SpectralModel::new(nodes.to_vec(), table, m)
}

/// Descending eigenvalues of `W(p)` for a table model.
pub fn model_eigenvalues(model: &SpectralModel, p: &[f64]) -> Result<Vec<f64>> {
    let mut values = model.mode_values(p)?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Row indices of the `n` largest values; ties go to the lower index.
pub fn select_top_rows(values: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Output of [`spectral_model_from_gramians`].
#[derive(Debug, Clone)]
pub struct JointDiagonalization {
    pub model: SpectralModel,
    /// Orthonormal common eigenbasis; column `k` is mode `k` of the table.
    pub eigenvectors: DMatrix<f64>,
    /// `max_i ||W_i - Z diag(Λ[:, i]) Z^T||_F / max(1, ||W_i||_F)`.
    pub reconstruction_residual: f64,
}

/// Simultaneously diagonalizes a commuting dense family.
///
/// The basis starts from the eigenvectors of `Σ W_i`; each degenerate cluster
/// is split further by diagonalizing the restriction of `W_1`, then `W_2`, and
/// so on.
pub fn spectral_model_from_gramians(family: &NodeGramianFamily, n: usize, tol: f64) -> Result<JointDiagonalization> {
    let commuting = check_commuting_family(family, tol);
    if !commuting.commuting {
        return Err(Error::NotCommuting { residual: commuting.max_residual });
    }
    let dim = family.dimension();
    let gramians = family.gramians();
    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    for w in gramians {
        sum += w;
    }
    let spectrum = symmetric_spectrum(&sum, tol)?;
    let scale = spectrum.values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);

    let mut columns = Vec::with_capacity(dim);
    for cluster in clusters(&spectrum.values, scale) {
        let basis = spectrum.vectors.columns(cluster.start, cluster.len()).clone_owned();
        refine_cluster(basis, gramians, 0, tol, &mut columns)?;
    }
    let z = DMatrix::from_columns(&columns);

    let m = family.node_count();
    let mut table = DMatrix::<f64>::zeros(dim, m);
    for (i, w) in gramians.iter().enumerate() {
        for k in 0..dim {
            let zk = z.column(k);
            table[(k, i)] = zk.dot(&(w * zk)).max(0.0);
        }
    }
    let reconstruction_residual = gramians
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let rebuilt = &z * DMatrix::from_diagonal(&table.column(i).clone_owned()) * z.transpose();
            (w - rebuilt).norm() / w.norm().max(1.0)
        })
        .fold(0.0, f64::max);
    if reconstruction_residual > tol {
        return Err(Error::DiagonalizationResidualTooLarge { residual: reconstruction_residual });
    }
    let model = SpectralModel::new(family.node_indices().to_vec(), table, n)?;
    Ok(JointDiagonalization { model, eigenvectors: z, reconstruction_residual })
}

/// Consecutive index ranges of a descending sequence whose neighbours differ by
/// less than `DEGENERACY_GAP * scale`.
fn clusters(values: &[f64], scale: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k - 1] - values[k] >= DEGENERACY_GAP * scale {
            out.push(start..k);
            start = k;
        }
    }
    out
}

fn refine_cluster(
    basis: DMatrix<f64>,
    gramians: &[DMatrix<f64>],
    depth: usize,
    tol: f64,
    out: &mut Vec<nalgebra::DVector<f64>>,
) -> Result<()> {
    if basis.ncols() == 1 || depth == gramians.len() {
        out.extend(basis.column_iter().map(|c| c.clone_owned()));
        return Ok(());
    }
    let restricted = basis.transpose() * &gramians[depth] * &basis;
    let local = symmetric_spectrum(&restricted, tol.max(1e-10))?;
    let scale = gramians[depth].norm().max(f64::MIN_POSITIVE);
    for cluster in clusters(&local.values, scale) {
        let sub = &basis * local.vectors.columns(cluster.start, cluster.len());
        refine_cluster(sub, gramians, depth + 1, tol, out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutingCheck {
    pub commuting: bool,
    /// `max_{i<j} ||W_i W_j - W_j W_i||_F / max(1, ||W_i||_F ||W_j||_F)`.
    pub max_residual: f64,
}

pub fn check_commuting(model: &GramianModel, tol: f64) -> CommutingCheck {
    match model {
        GramianModel::Spectral(_) => CommutingCheck { commuting: true, max_residual: 0.0 },
        GramianModel::Dense(f) => check_commuting_family(f, tol),
    }
}

pub fn check_commuting_family(family: &NodeGramianFamily, tol: f64) -> CommutingCheck {
    let gramians = family.gramians();
    let m = gramians.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let max_residual = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (wi, wj) = (&gramians[i], &gramians[j]);
            (wi * wj - wj * wi).norm() / (wi.norm() * wj.norm()).max(1.0)
        })
        .reduce(|| 0.0, f64::max);
    CommutingCheck { commuting: max_residual <= tol, max_residual }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSpectrumCheck {
    pub holds: bool,
    /// Largest Gramian mass outside the selected `n` modes, relative to the largest entry.
    pub residual: f64,
    /// The selected modes (table rows, or eigenvector positions of `Σ W_i`).
    pub selected_rows: Vec<usize>,
}

/// Checks that every node Gramian vanishes outside a common `n`-dimensional span.
pub fn check_n_spectrum(model: &GramianModel, n: usize, tol: f64) -> Result<NSpectrumCheck> {
    match model {
        GramianModel::Spectral(m) => Ok(check_n_spectrum_table(m, n, tol)),
        GramianModel::Dense(f) => check_n_spectrum_family(f, n, tol),
    }
}

fn check_n_spectrum_table(model: &SpectralModel, n: usize, tol: f64) -> NSpectrumCheck {
    let table = model.table();
    let row_sums: Vec<f64> = table.row_iter().map(|r| r.sum()).collect();
    let selected_rows = select_top_rows(&row_sums, n);
    let scale = table.max();
    let outside = (0..table.nrows())
        .filter(|k| !selected_rows.contains(k))
        .flat_map(|k| table.row(k).iter().copied().collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let residual = if scale > 0.0 { outside / scale } else { 0.0 };
    NSpectrumCheck { holds: residual <= tol, residual, selected_rows }
}

fn check_n_spectrum_family(family: &NodeGramianFamily, n: usize, tol: f64) -> Result<NSpectrumCheck> {
    let dim = family.dimension();
    if n > dim {
        return Err(Error::InvalidArgument(format!("n = {n} exceeds state dimension {dim}")));
    }
    let gramians = family.gramians();
    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    for w in gramians {
        sum += w;
    }
    let spectrum = symmetric_spectrum(&sum, crate::linsys::DEFAULT_TOL)?;
    let scale = gramians
        .iter()
        .map(|w| symmetric_spectrum(w, crate::linsys::DEFAULT_TOL).map(|s| s.values[0]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let residual = if n == dim || scale == 0.0 {
        0.0
    } else {
        let complement = spectrum.vectors.columns(n, dim - n).clone_owned();
        let mut worst: f64 = 0.0;
        for w in gramians {
            let restricted = complement.transpose() * w * &complement;
            let top = symmetric_spectrum(&restricted, 1e-8)?.values[0];
            worst = worst.max(top);
        }
        worst / scale
    };
    Ok(NSpectrumCheck { holds: residual <= tol, residual, selected_rows: (0..n).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCheck {
    pub feasible: bool,
    /// First candidate with a strictly positive `n`-th eigenvalue.
    pub witness: Option<Vec<f64>>,
    /// `μ_n(W(p₀))` at the witness, or the best value seen when infeasible.
    pub nth_eigenvalue: f64,
}

/// `n`-th largest eigenvalue of `W(p)` (one-based `n`).
pub fn nth_eigenvalue(model: &GramianModel, p: &[f64], n: usize) -> Result<(f64, f64)> {
    let values = match model {
        GramianModel::Spectral(m) => model_eigenvalues(m, p)?,
        GramianModel::Dense(f) => symmetric_spectrum(&f.assemble(p)?, crate::linsys::DEFAULT_TOL)?.values,
    };
    if n == 0 || n > values.len() {
        return Err(Error::InvalidArgument(format!("n = {n} outside 1..={}", values.len())));
    }
    Ok((values[n - 1], values[0]))
}

/// Searches for a capped-simplex point with `μ_n(W(p)) > 0`.
///
/// Candidates are the capped barycenter followed by one extreme pattern per node
/// (the projection of a large mass on that node).
pub fn check_feasibility(model: &GramianModel, n: usize, caps: &[f64]) -> Result<FeasibilityCheck> {
    validate_caps(caps)?;
    if caps.len() != model.node_count() {
        return Err(Error::IndexMismatch { expected: model.node_count(), got: caps.len() });
    }
    let mut candidates: Vec<SimplexWeights> = vec![capped_barycenter(caps)?];
    for j in 0..caps.len() {
        let mut v = vec![0.0; caps.len()];
        v[j] = 2.0;
        candidates.push(project_capped_simplex(&v, caps)?);
    }
    let mut best = f64::NEG_INFINITY;
    for p in &candidates {
        let (mu_n, mu_1) = nth_eigenvalue(model, p.values(), n)?;
        if mu_n > FEASIBILITY_REL_TOL * mu_1 && mu_n > 0.0 {
            return Ok(FeasibilityCheck { feasible: true, witness: Some(p.values().to_vec()), nth_eigenvalue: mu_n });
        }
        best = best.max(mu_n);
    }
    Ok(FeasibilityCheck { feasible: false, witness: None, nth_eigenvalue: best })
}

/// Combined result of the feasibility, commutativity and n-spectrum checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub feasible: bool,
    pub witness: Option<Vec<f64>>,
    pub nth_eigenvalue: f64,
    pub commuting: bool,
    pub commutator_residual: f64,
    pub n_spectrum: bool,
    pub n_spectrum_residual: f64,
    pub selected_rows: Vec<usize>,
    pub tol: f64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.feasible && self.commuting && self.n_spectrum
    }
}

pub fn assumption_report(model: &GramianModel, n: usize, caps: &[f64], tol: f64) -> Result<AssumptionReport> {
    let feasibility = check_feasibility(model, n, caps)?;
    let commuting = check_commuting(model, tol);
    let n_spectrum = check_n_spectrum(model, n, tol)?;
    Ok(AssumptionReport {
        feasible: feasibility.feasible,
        witness: feasibility.witness,
        nth_eigenvalue: feasibility.nth_eigenvalue,
        commuting: commuting.commuting,
        commutator_residual: commuting.max_residual,
        n_spectrum: n_spectrum.holds,
        n_spectrum_residual: n_spectrum.residual,
        selected_rows: n_spectrum.selected_rows,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{check_stability, top_eigenvalues};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(values))
    }

    #[test]
    fn heat_tables() {
        let one = heat_dirichlet_model(&[1]).unwrap();
        assert_relative_eq!(one.table()[(0, 0)], 0.050_660_591_821_168_89, epsilon = 1e-15);
        let two = heat_dirichlet_model(&[1, 2]).unwrap();
        assert_relative_eq!(two.table()[(1, 1)], 1.0 / (8.0 * PI * PI), epsilon = 1e-15);
        assert_eq!(two.table()[(0, 1)], 0.0);
        assert!(two.is_diagonal());
        assert_eq!(heat_dirichlet_model(&[]).unwrap_err(), Error::EmptyIndexSet);
        assert!(heat_dirichlet_model(&[0, 1]).is_err());
    }

    #[test]
    fn joint_diagonalization_of_diagonal_family() {
        let sys = check_stability(&diag(&[-1.0, -2.0])).unwrap();
        let fam = NodeGramianFamily::all_nodes(sys).unwrap();
        let jd = spectral_model_from_gramians(&fam, 2, ASSUMPTION_TOL).unwrap();
        let t = jd.model.table();
        assert_relative_eq!(t[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(t[(1, 1)], 0.25, epsilon = 1e-15);
        assert!(t[(0, 1)].abs() < 1e-15 && t[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn joint_diagonalization_recovers_heat_table() {
        let heat = heat_dirichlet_model(&[1, 2, 3, 4]).unwrap();
        let a = diag(&[-1.0, -4.0, -9.0, -16.0].map(|k: f64| k * PI * PI));
        let sys = check_stability(&a).unwrap();
        let fam = NodeGramianFamily::new(sys, vec![1, 2, 3, 4]).unwrap();
        let jd = spectral_model_from_gramians(&fam, 4, ASSUMPTION_TOL).unwrap();
        assert_relative_eq!(jd.model.table(), heat.table(), epsilon = 1e-12);
    }

    #[test]
    fn joint_diagonalization_of_shared_eigenvectors() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = DMatrix::from_row_slice(2, 2, &[s, s, s, -s]);
        let w1 = &z * diag(&[0.3, 0.1]) * z.transpose();
        let w2 = &z * diag(&[0.2, 0.4]) * z.transpose();
        let sys = check_stability(&diag(&[-1.0, -1.0])).unwrap();
        let fam = NodeGramianFamily::from_gramians(sys, vec![1, 2], vec![w1, w2]).unwrap();
        let jd = spectral_model_from_gramians(&fam, 2, ASSUMPTION_TOL).unwrap();
        assert!(jd.reconstruction_residual <= 1e-12);
        let mut rows: Vec<(f64, f64)> = jd.model.table().row_iter().map(|r| (r[0], r[1])).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_relative_eq!(rows[0].0, 0.1, epsilon = 1e-12);
        assert_relative_eq!(rows[0].1, 0.4, epsilon = 1e-12);
        assert_relative_eq!(rows[1].0, 0.3, epsilon = 1e-12);
        assert_relative_eq!(rows[1].1, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_sum_is_split_by_refinement() {
        // Σ W_i = I, so the split must come from W_1 alone.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = DMatrix::from_row_slice(2, 2, &[s, s, s, -s]);
        let w1 = &z * diag(&[0.7, 0.2]) * z.transpose();
        let w2 = &z * diag(&[0.3, 0.8]) * z.transpose();
        let sys = check_stability(&diag(&[-1.0, -1.0])).unwrap();
        let fam = NodeGramianFamily::from_gramians(sys, vec![1, 2], vec![w1, w2]).unwrap();
        let jd = spectral_model_from_gramians(&fam, 2, ASSUMPTION_TOL).unwrap();
        assert!(jd.reconstruction_residual <= 1e-12);
    }

    #[test]
    fn non_commuting_family_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        let fam = NodeGramianFamily::all_nodes(check_stability(&a).unwrap()).unwrap();
        let check = check_commuting_family(&fam, ASSUMPTION_TOL);
        assert!(!check.commuting);
        // W_1 = diag(1/2, 0); W_2 solves the triangular Lyapunov equation directly.
        let (w1, w2) = (&fam.gramians()[0], &fam.gramians()[1]);
        let expected = (w1 * w2 - w2 * w1).norm() / (w1.norm() * w2.norm()).max(1.0);
        assert_relative_eq!(check.max_residual, expected, epsilon = 1e-15);
        assert!(check.max_residual > 1e-3);
        assert!(matches!(
            spectral_model_from_gramians(&fam, 2, ASSUMPTION_TOL),
            Err(Error::NotCommuting { .. })
        ));
    }

    #[test]
    fn commuting_examples() {
        let fam = NodeGramianFamily::all_nodes(check_stability(&diag(&[-1.0, -3.0, -2.0])).unwrap()).unwrap();
        let check = check_commuting(&GramianModel::Dense(fam), ASSUMPTION_TOL);
        assert!(check.commuting);
        assert_eq!(check.max_residual, 0.0);
        let heat = GramianModel::Spectral(heat_dirichlet_model(&[1, 2, 3]).unwrap());
        assert!(check_commuting(&heat, ASSUMPTION_TOL).commuting);
    }

    #[test]
    fn symmetric_dynamics_with_eigenvector_nodes_commute() {
        // A = V D V^T symmetric; nodes are the eigenvectors, so W_i = v_i v_i^T / (2|d_i|).
        let v = DMatrix::from_row_slice(3, 3, &[
            2.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0,
        ]);
        let d = [-1.0, -2.5, -4.0];
        let a = &v * diag(&d) * v.transpose();
        let sys = check_stability(&a).unwrap();
        let gramians: Vec<_> = (0..3)
            .map(|i| {
                let c = v.column(i).clone_owned();
                let rhs = -(&c * c.transpose());
                crate::linsys::solve_continuous_lyapunov(&a, &rhs).unwrap()
            })
            .collect();
        let fam = NodeGramianFamily::from_gramians(sys, vec![1, 2, 3], gramians).unwrap();
        let check = check_commuting_family(&fam, ASSUMPTION_TOL);
        assert!(check.max_residual <= 1e-12, "{}", check.max_residual);
    }

    #[test]
    fn n_spectrum_examples() {
        let heat = GramianModel::Spectral(heat_dirichlet_model(&[1, 2, 3, 4]).unwrap());
        let full = check_n_spectrum(&heat, 4, ASSUMPTION_TOL).unwrap();
        assert!(full.holds);
        assert_eq!(full.residual, 0.0);
        let short = check_n_spectrum(&heat, 3, ASSUMPTION_TOL).unwrap();
        assert!(!short.holds);
        assert_relative_eq!(short.residual, 1.0 / 16.0, epsilon = 1e-15);

        let table = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.1]);
        let model = GramianModel::Spectral(SpectralModel::new(vec![1, 2], table, 2).unwrap());
        let check = check_n_spectrum(&model, 2, ASSUMPTION_TOL).unwrap();
        assert!(!check.holds);
        assert_eq!(check.selected_rows, vec![0, 1]);
        assert_relative_eq!(check.residual, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn n_spectrum_of_dense_family() {
        let fam = NodeGramianFamily::new(check_stability(&diag(&[-1.0, -2.0, -3.0])).unwrap(), vec![1, 3]).unwrap();
        let model = GramianModel::Dense(fam);
        assert!(check_n_spectrum(&model, 2, ASSUMPTION_TOL).unwrap().holds);
        let one = check_n_spectrum(&model, 1, ASSUMPTION_TOL).unwrap();
        assert!(!one.holds);
        assert_relative_eq!(one.residual, (1.0 / 6.0) / 0.5, epsilon = 1e-12);
    }

    #[test]
    fn select_rows_breaks_ties_by_index() {
        assert_eq!(select_top_rows(&[1.0, 2.0, 2.0, 0.5], 2), vec![1, 2]);
        assert_eq!(select_top_rows(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn feasibility_examples() {
        let heat = GramianModel::Spectral(heat_dirichlet_model(&[1, 2, 3, 4]).unwrap());
        let f = check_feasibility(&heat, 4, &[1.0; 4]).unwrap();
        assert!(f.feasible);
        assert_eq!(f.witness.unwrap(), vec![0.25; 4]);
        assert_relative_eq!(f.nth_eigenvalue, 0.25 / (2.0 * PI * PI * 16.0), epsilon = 1e-15);

        let deficient = SpectralModel::new(vec![1, 2], DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 2).unwrap();
        let f = check_feasibility(&GramianModel::Spectral(deficient), 2, &[1.0, 1.0]).unwrap();
        assert!(!f.feasible);
        assert_eq!(f.nth_eigenvalue, 0.0);
    }

    #[test]
    fn feasibility_of_random_diagonal_tables() {
        let mut seed = 7u64;
        for m in 1..6 {
            let diag_entries: Vec<f64> = (0..m)
                .map(|_| {
                    seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    0.05 + (seed >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect();
            let model = SpectralModel::new((1..=m).collect(), diag(&diag_entries), m).unwrap();
            let f = check_feasibility(&GramianModel::Spectral(model), m, &vec![1.0; m]).unwrap();
            let expected = diag_entries.iter().copied().fold(f64::INFINITY, f64::min) / m as f64;
            assert!(f.feasible);
            assert_relative_eq!(f.nth_eigenvalue, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn model_eigenvalue_examples() {
        let heat = heat_dirichlet_model(&[1, 2]).unwrap();
        let mu = model_eigenvalues(&heat, &[0.5, 0.5]).unwrap();
        assert_relative_eq!(mu[0], 0.25 / (PI * PI), epsilon = 1e-15);
        assert_relative_eq!(mu[1], 0.0625 / (PI * PI), epsilon = 1e-15);
        assert_relative_eq!(mu[0], 0.025330295910584444, epsilon = 1e-12);
        assert_relative_eq!(mu[1], 0.006332573977646111, epsilon = 1e-12);
        let mu = model_eigenvalues(&heat, &[1.0, 0.0]).unwrap();
        assert_eq!(mu, vec![1.0 / (2.0 * PI * PI), 0.0]);
        assert!(model_eigenvalues(&heat, &[1.0]).is_err());
    }

    #[test]
    fn table_eigenvalues_match_matrix_route() {
        let table = DMatrix::from_row_slice(3, 3, &[0.4, 0.0, 0.1, 0.0, 0.9, 0.0, 0.2, 0.3, 0.05]);
        let model = SpectralModel::new(vec![1, 2, 3], table, 3).unwrap();
        let p = [1.0 / 3.0; 3];
        let via_table = model_eigenvalues(&model, &p).unwrap();
        let w = GramianModel::Spectral(model).gramian(&p).unwrap();
        let via_matrix = top_eigenvalues(&w, 3).unwrap();
        for (a, b) in via_table.iter().zip(&via_matrix) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn report_for_heat_model_passes() {
        let heat = GramianModel::Spectral(heat_dirichlet_model(&[1, 2, 3, 4]).unwrap());
        let report = assumption_report(&heat, 4, &[1.0; 4], ASSUMPTION_TOL).unwrap();
        assert!(report.all_pass());
        assert_eq!(report.commutator_residual, 0.0);
        assert_eq!(report.n_spectrum_residual, 0.0);
    }
}
