use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linsys::NodeGramianFamily;
use crate::spectral::SpectralModel;

/// Either representation of a Gramian family that the scores are defined over.
#[derive(Debug, Clone)]
pub enum GramianModel {
    /// Eigenvalue table of a commuting family (one row per retained mode).
    Spectral(SpectralModel),
    /// Dense per-node Gramians of a finite-dimensional system.
    Dense(NodeGramianFamily),
}

impl GramianModel {
    pub fn node_indices(&self) -> &[usize] {
        match self {
            Self::Spectral(m) => m.node_indices(),
            Self::Dense(f) => f.node_indices(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_indices().len()
    }

    /// Retained modes for a table, state dimension for a dense family.
    pub fn state_dimension(&self) -> usize {
        match self {
            Self::Spectral(m) => m.mode_count(),
            Self::Dense(f) => f.dimension(),
        }
    }

    /// `W(p)` as a dense matrix. For a table this is `diag(Λ p)` in the mode basis.
    pub fn gramian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Self::Spectral(m) => Ok(DMatrix::from_diagonal(&DVector::from_vec(m.mode_values(p)?))),
            Self::Dense(f) => f.assemble(p),
        }
    }

    /// The per-node Gramians as dense matrices.
    pub fn node_gramians(&self) -> Vec<DMatrix<f64>> {
        match self {
            Self::Spectral(m) => (0..m.node_count())
                .map(|i| DMatrix::from_diagonal(&m.table().column(i).clone_owned()))
                .collect(),
            Self::Dense(f) => f.gramians().to_vec(),
        }
    }
}

impl From<SpectralModel> for GramianModel {
    fn from(m: SpectralModel) -> Self {
        Self::Spectral(m)
    }
}

impl From<NodeGramianFamily> for GramianModel {
    fn from(f: NodeGramianFamily) -> Self {
        Self::Dense(f)
    }
}
