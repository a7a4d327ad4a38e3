//! Finite-dimensional stable LTI systems and their controllability Gramians.
//!
//! Node Gramians solve the continuous Lyapunov equation
//! `A W_i + W_i A^T + e_i e_i^T = 0` by a real-Schur (Bartels-Stewart) sweep.
//! The weighted Gramian is the linear combination `W(p) = sum_i p_i W_i`.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Absolute tolerance used for residual, symmetry and clamping checks.
pub const DEFAULT_TOL: f64 = 1e-10;

const SCHUR_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StableLtiSystem {
    dynamics: DMatrix<f64>,
    spectral_abscissa: f64,
}

impl StableLtiSystem {
    pub fn dynamics(&self) -> &DMatrix<f64> {
        &self.dynamics
    }

    pub fn dimension(&self) -> usize {
        self.dynamics.nrows()
    }

    /// Largest real part over the spectrum of `A`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.spectral_abscissa
    }
}

/// Computes the spectral abscissa of `a` and accepts it only if it is negative.
pub fn check_stability(a: &DMatrix<f64>) -> Result<StableLtiSystem> {
    if !a.is_square() {
        return Err(Error::NonSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidArgument("empty dynamics matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let spectral_abscissa = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if spectral_abscissa.is_nan() || spectral_abscissa >= 0.0 {
        return Err(Error::UnstableSystem { abscissa: spectral_abscissa });
    }
    Ok(StableLtiSystem { dynamics: a.clone(), spectral_abscissa })
}

/// Solves `A X + X A^T = C` for `X`.
///
/// The solve reduces `A` to real Schur form `Q T Q^T` and back-substitutes over
/// the 1x1 and 2x2 diagonal blocks of `T`. The result is symmetrized when `C`
/// is symmetric.
pub fn solve_continuous_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::NonSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if c.shape() != (n, n) {
        return Err(Error::IndexMismatch { expected: n * n, got: c.len() });
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITERS)
        .ok_or_else(|| Error::LyapunovSolveFailure("real Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();

    let rhs = q.transpose() * c * &q;
    let blocks = quasi_triangular_blocks(&t);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(ri, pi) in blocks.iter().rev() {
        for &(rj, qj) in blocks.iter().rev() {
            let mut r = rhs.view((ri, rj), (pi, qj)).clone_owned();
            let tail_i = ri + pi;
            if tail_i < n {
                r -= t.view((ri, tail_i), (pi, n - tail_i)) * y.view((tail_i, rj), (n - tail_i, qj));
            }
            let tail_j = rj + qj;
            if tail_j < n {
                r -= y.view((ri, tail_j), (pi, n - tail_j))
                    * t.view((rj, tail_j), (qj, n - tail_j)).transpose();
            }
            let tii = t.view((ri, ri), (pi, pi)).clone_owned();
            let tjj = t.view((rj, rj), (qj, qj)).clone_owned();
            let block = solve_small_sylvester(&tii, &tjj, &r)?;
            y.view_mut((ri, rj), (pi, qj)).copy_from(&block);
        }
    }

    let mut x = &q * y * q.transpose();
    if is_symmetric(c, 0.0) {
        x = symmetrize(&x);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LyapunovSolveFailure("non-finite solution".into()));
    }
    Ok(x)
}

/// Splits a quasi-upper-triangular matrix into its diagonal blocks `(start, size)`.
fn quasi_triangular_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let coupled = i + 1 < n && {
            let sub = t[(i + 1, i)].abs();
            let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            sub > f64::EPSILON * scale.max(f64::MIN_POSITIVE)
        };
        if coupled {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `T_ii Z + Z T_jj^T = R` for blocks of size at most 2 via the Kronecker form.
fn solve_small_sylvester(tii: &DMatrix<f64>, tjj: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = tii.nrows();
    let q = tjj.nrows();
    if p == 1 && q == 1 {
        let denom = tii[(0, 0)] + tjj[(0, 0)];
        if denom == 0.0 {
            return Err(Error::LyapunovSolveFailure("singular 1x1 block (eigenvalues sum to zero)".into()));
        }
        return Ok(DMatrix::from_element(1, 1, r[(0, 0)] / denom));
    }
    // vec(T_ii Z) = (I_q (x) T_ii) vec Z and vec(Z T_jj^T) = (T_jj (x) I_p) vec Z, column-major.
    let dim = p * q;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    for col in 0..q {
        for a in 0..p {
            for b in 0..p {
                k[(col * p + a, col * p + b)] += tii[(a, b)];
            }
        }
    }
    for a in 0..q {
        for b in 0..q {
            for row in 0..p {
                k[(a * p + row, b * p + row)] += tjj[(a, b)];
            }
        }
    }
    let rhs = DVector::from_column_slice(r.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LyapunovSolveFailure("singular block Sylvester system".into()))?;
    Ok(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && symmetry_defect(m) <= tol * m.norm().max(1.0)
}

fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Gramian of a single node: `A W + W A^T = -e_i e_i^T`, with `node` counted from 1.
pub fn node_gramian(system: &StableLtiSystem, node: usize) -> Result<DMatrix<f64>> {
    let dim = system.dimension();
    if node == 0 || node > dim {
        return Err(Error::NodeOutOfRange { node, dim });
    }
    let mut rhs = DMatrix::<f64>::zeros(dim, dim);
    rhs[(node - 1, node - 1)] = -1.0;
    solve_continuous_lyapunov(system.dynamics(), &rhs)
}

/// Frobenius norm of `A W + W A^T + e_i e_i^T`.
pub fn lyapunov_residual(system: &StableLtiSystem, node: usize, gramian: &DMatrix<f64>) -> f64 {
    let a = system.dynamics();
    let mut r = a * gramian + gramian * a.transpose();
    r[(node - 1, node - 1)] += 1.0;
    r.norm()
}

/// The per-node Gramians `{W_i}` of a stable system over an ordered node set.
#[derive(Debug, Clone)]
pub struct NodeGramianFamily {
    system: StableLtiSystem,
    node_indices: Vec<usize>,
    gramians: Vec<DMatrix<f64>>,
}

impl NodeGramianFamily {
    /// Solves one Lyapunov equation per node and verifies each residual.
    pub fn new(system: StableLtiSystem, node_indices: Vec<usize>) -> Result<Self> {
        Self::with_tol(system, node_indices, DEFAULT_TOL)
    }

    pub fn with_tol(system: StableLtiSystem, node_indices: Vec<usize>, tol: f64) -> Result<Self> {
        if node_indices.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        check_distinct(&node_indices)?;
        let gramians = node_indices
            .par_iter()
            .map(|&node| {
                let w = node_gramian(&system, node)?;
                let residual = lyapunov_residual(&system, node, &w);
                if residual > tol * w.norm().max(1.0) {
                    return Err(Error::LyapunovSolveFailure(format!(
                        "node {node}: residual {residual:e} exceeds tolerance"
                    )));
                }
                Ok(w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { system, node_indices, gramians })
    }

    /// All nodes `1..=n_dim`.
    pub fn all_nodes(system: StableLtiSystem) -> Result<Self> {
        let nodes = (1..=system.dimension()).collect();
        Self::new(system, nodes)
    }

    /// Builds a family from externally supplied Gramians, checking symmetry and PSD.
    ///
    /// The Lyapunov residual is not checked here; use this for fixtures whose
    /// Gramians are known exactly.
    pub fn from_gramians(system: StableLtiSystem, node_indices: Vec<usize>, gramians: Vec<DMatrix<f64>>) -> Result<Self> {
        if node_indices.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if node_indices.len() != gramians.len() {
            return Err(Error::IndexMismatch { expected: node_indices.len(), got: gramians.len() });
        }
        check_distinct(&node_indices)?;
        let dim = system.dimension();
        for w in &gramians {
            if w.shape() != (dim, dim) {
                return Err(Error::InvalidModel(format!("gramian shape {:?}, expected {dim}x{dim}", w.shape())));
            }
            if !is_symmetric(w, DEFAULT_TOL) {
                return Err(Error::InvalidModel("gramian is not symmetric".into()));
            }
            symmetric_spectrum(w, DEFAULT_TOL)?;
        }
        let gramians = gramians.iter().map(symmetrize).collect();
        Ok(Self { system, node_indices, gramians })
    }

    pub fn system(&self) -> &StableLtiSystem {
        &self.system
    }

    pub fn node_indices(&self) -> &[usize] {
        &self.node_indices
    }

    pub fn gramians(&self) -> &[DMatrix<f64>] {
        &self.gramians
    }

    pub fn node_count(&self) -> usize {
        self.node_indices.len()
    }

    pub fn dimension(&self) -> usize {
        self.system.dimension()
    }

    /// `W(p) = sum_i p_i W_i`.
    pub fn assemble(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if p.len() != self.gramians.len() {
            return Err(Error::IndexMismatch { expected: self.gramians.len(), got: p.len() });
        }
        let dim = self.dimension();
        let mut w = DMatrix::<f64>::zeros(dim, dim);
        for (weight, gramian) in p.iter().zip(&self.gramians) {
            if *weight != 0.0 {
                w += gramian * *weight;
            }
        }
        Ok(w)
    }
}

fn check_distinct(nodes: &[usize]) -> Result<()> {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidModel("duplicate node index".into()));
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric PSD matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    /// Descending, clamped at zero.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricSpectrum {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Columns `0..n` of the eigenvector matrix.
    pub fn leading_vectors(&self, n: usize) -> DMatrix<f64> {
        self.vectors.columns(0, n).clone_owned()
    }
}

/// Full descending spectrum of a symmetric PSD matrix.
///
/// Eigenvalues in `[-tol * max(1, ||W||_F), 0)` are clamped to zero; anything more
/// negative is reported as an error.
pub fn symmetric_spectrum(w: &DMatrix<f64>, tol: f64) -> Result<SymmetricSpectrum> {
    if !w.is_square() {
        return Err(Error::NonSquare { rows: w.nrows(), cols: w.ncols() });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = w.norm().max(1.0);
    if symmetry_defect(w) > tol * scale {
        return Err(Error::EigenFailure(format!("matrix is not symmetric (defect {:e})", symmetry_defect(w))));
    }
    let eig = SymmetricEigen::try_new(symmetrize(w), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let dim = w.nrows();
    let mut values = Vec::with_capacity(dim);
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);
    for (k, &idx) in order.iter().enumerate() {
        let mut mu = eig.eigenvalues[idx];
        if mu < 0.0 {
            if mu < -tol * scale {
                return Err(Error::EigenFailure(format!("negative eigenvalue {mu:e}")));
            }
            mu = 0.0;
        }
        values.push(mu);
        vectors.set_column(k, &eig.eigenvectors.column(idx));
    }
    Ok(SymmetricSpectrum { values, vectors })
}

/// The `n` largest eigenvalues of a symmetric PSD matrix, with multiplicity.
pub fn top_eigenvalues(w: &DMatrix<f64>, n: usize) -> Result<Vec<f64>> {
    top_eigenvalues_with_tol(w, n, DEFAULT_TOL)
}

pub fn top_eigenvalues_with_tol(w: &DMatrix<f64>, n: usize, tol: f64) -> Result<Vec<f64>> {
    if n > w.nrows() {
        return Err(Error::InvalidArgument(format!("requested {n} eigenvalues of a {}x{} matrix", w.nrows(), w.ncols())));
    }
    let mut spectrum = symmetric_spectrum(w, tol)?;
    spectrum.values.truncate(n);
    Ok(spectrum.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(values))
    }

    /// Composite Simpson quadrature of the defining integral, tail beyond `horizon` dropped.
    fn quadrature_gramian(a: &DMatrix<f64>, node: usize, horizon: f64, intervals: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let panels = 2 * intervals;
        let h = horizon / panels as f64;
        let step = (a * h).exp();
        let mut phi = DMatrix::<f64>::identity(n, n);
        let mut w = DMatrix::<f64>::zeros(n, n);
        for j in 0..=panels {
            let weight = if j == 0 || j == panels {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let col = phi.column(node - 1).clone_owned();
            w += &col * col.transpose() * (weight * h / 3.0);
            phi = &step * phi;
        }
        w
    }

    #[test]
    fn stability_examples() {
        let sys = check_stability(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_eq!(sys.spectral_abscissa(), -1.0);

        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(check_stability(&rot), Err(Error::UnstableSystem { .. })));

        let tri = DMatrix::from_row_slice(2, 2, &[-1.0, 100.0, 0.0, -1.0]);
        let sys = check_stability(&tri).unwrap();
        assert_relative_eq!(sys.spectral_abscissa(), -1.0, epsilon = 1e-12);

        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(check_stability(&rect), Err(Error::NonSquare { .. })));

        let nan = DMatrix::from_element(1, 1, f64::NAN);
        assert_eq!(check_stability(&nan), Err(Error::NonFinite));
    }

    #[test]
    fn scalar_gramian_is_one_half() {
        let sys = check_stability(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        let w = node_gramian(&sys, 1).unwrap();
        assert!((w[(0, 0)] - 0.5).abs() <= 1e-14);
    }

    #[test]
    fn decoupled_gramian() {
        let sys = check_stability(&diag(&[-1.0, -2.0])).unwrap();
        let w2 = node_gramian(&sys, 2).unwrap();
        assert_relative_eq!(w2, diag(&[0.0, 0.25]), epsilon = 1e-15);
        assert!(matches!(node_gramian(&sys, 3), Err(Error::NodeOutOfRange { .. })));
        assert!(matches!(node_gramian(&sys, 0), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn triangular_gramian_matches_quadrature() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        let sys = check_stability(&a).unwrap();
        let w = node_gramian(&sys, 1).unwrap();
        // exp(-2t) tail beyond t = 16 is below 1e-14.
        let oracle = quadrature_gramian(&a, 1, 16.0, 20_000);
        assert_relative_eq!(w, oracle, epsilon = 1e-9);
        assert!(lyapunov_residual(&sys, 1, &w) <= 1e-12);
    }

    #[test]
    fn complex_pair_blocks() {
        // Eigenvalues -0.5 +- 3i force a 2x2 Schur block.
        let a = DMatrix::from_row_slice(3, 3, &[-0.5, 3.0, 0.2, -3.0, -0.5, 0.0, 0.1, 0.4, -1.5]);
        let sys = check_stability(&a).unwrap();
        for node in 1..=3 {
            let w = node_gramian(&sys, node).unwrap();
            assert!(lyapunov_residual(&sys, node, &w) <= 1e-10 * w.norm().max(1.0));
            let oracle = quadrature_gramian(&a, node, 60.0, 30_000);
            assert_relative_eq!(w, oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn assemble_examples() {
        let sys = check_stability(&diag(&[-1.0, -2.0])).unwrap();
        let fam = NodeGramianFamily::all_nodes(sys).unwrap();
        assert_relative_eq!(fam.assemble(&[1.0, 0.0]).unwrap(), diag(&[0.5, 0.0]), epsilon = 1e-15);
        assert_relative_eq!(fam.assemble(&[0.5, 0.5]).unwrap(), diag(&[0.25, 0.125]), epsilon = 1e-15);
        assert!(matches!(fam.assemble(&[1.0]), Err(Error::IndexMismatch { .. })));
    }

    #[test]
    fn assemble_matches_single_weighted_solve() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 0.5, 0.1, 0.3, -1.0, 0.4, -0.2, 0.1, -1.5]);
        let sys = check_stability(&a).unwrap();
        let fam = NodeGramianFamily::all_nodes(sys).unwrap();
        let p = [1.0 / 3.0; 3];
        let assembled = fam.assemble(&p).unwrap();
        let direct = solve_continuous_lyapunov(&a, &(-diag(&p))).unwrap();
        assert_relative_eq!(assembled, direct, epsilon = 1e-13);
    }

    #[test]
    fn top_eigenvalue_examples() {
        assert_eq!(top_eigenvalues(&diag(&[0.25, 0.5]), 2).unwrap(), vec![0.5, 0.25]);
        assert_eq!(top_eigenvalues(&DMatrix::identity(3, 3), 2).unwrap(), vec![1.0, 1.0]);
        assert!(top_eigenvalues(&DMatrix::identity(2, 2), 3).is_err());
        assert!(top_eigenvalues(&diag(&[1.0, -1e-3]), 1).is_err());
        assert_eq!(top_eigenvalues(&diag(&[1.0, -1e-13]), 2).unwrap(), vec![1.0, 0.0]);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(top_eigenvalues(&asym, 1), Err(Error::EigenFailure(_))));
    }

    #[test]
    fn top_eigenvalues_match_full_spectrum() {
        let b = DMatrix::from_row_slice(4, 4, &[
            0.3, -1.2, 0.7, 0.1, 0.5, 0.9, -0.4, 1.1, -0.8, 0.2, 0.6, -0.3, 1.0, 0.4, -0.5, 0.2,
        ]);
        let w = &b * b.transpose();
        let mut oracle: Vec<f64> = w.clone().symmetric_eigenvalues().iter().copied().collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        let top = top_eigenvalues(&w, 4).unwrap();
        for (x, y) in top.iter().zip(&oracle) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let sys = check_stability(&diag(&[-1.0, -2.0])).unwrap();
        assert!(NodeGramianFamily::new(sys.clone(), vec![1, 1]).is_err());
        assert_eq!(NodeGramianFamily::new(sys, vec![]).unwrap_err(), Error::EmptyIndexSet);
    }
}
