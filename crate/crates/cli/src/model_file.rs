//! Model files: a small TOML document with an explicit schema version.
//!
//! ```toml
//! schema_version = 1
//! kind = "dense_lti"
//! a = [[-1.0, 1.0], [0.0, -2.0]]
//! nodes = [1, 2]
//! n = 2
//! caps = [1.0, 1.0]
//! ```

use std::ops::Range;

use ctrlscore::linsys::{check_stability, NodeGramianFamily};
use ctrlscore::spectral::{heat_dirichlet_model, SpectralModel};
use ctrlscore::GramianModel;
use nalgebra::DMatrix;
use serde::Deserialize;
use toml::Spanned;

pub const SCHEMA_VERSION: u32 = 1;

/// A malformed model file, located by 1-based line and column.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parse error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Anything that can go wrong turning a file into a model.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ctrlscore::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DenseLti,
    SpectralTable,
    HeatDirichlet,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    schema_version: Spanned<u32>,
    kind: Spanned<ModelKind>,
    a: Option<Spanned<Vec<Vec<f64>>>>,
    table: Option<Spanned<Vec<Vec<f64>>>>,
    nodes: Option<Spanned<Vec<usize>>>,
    n: Option<Spanned<usize>>,
    caps: Option<Spanned<Vec<f64>>>,
}

/// A parsed, validated model file.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub model: GramianModel,
    /// Score order; defaults to the number of nodes (capped by the state dimension).
    pub n: usize,
    /// Per-node caps; all ones when absent.
    pub caps: Vec<f64>,
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn error(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ParseError {
        let offset = span.map(|s| s.start).unwrap_or(0).min(self.text.len());
        let before = &self.text[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
        ParseError { line, column, message: message.into() }
    }

    fn at<T>(&self, field: &Spanned<T>, message: impl Into<String>) -> ParseError {
        self.error(Some(field.span()), message)
    }
}

fn matrix(loc: &Locator, field: &Spanned<Vec<Vec<f64>>>, name: &str) -> Result<DMatrix<f64>, ParseError> {
    let rows = field.get_ref();
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err(loc.at(field, format!("`{name}` must be a non-empty list of rows")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(loc.at(field, format!("`{name}` row {} has {} entries, expected {cols}", bad + 1, rows[bad].len())));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn forbid<T>(loc: &Locator, field: &Option<Spanned<T>>, name: &str, kind: &str) -> Result<(), ParseError> {
    match field {
        Some(f) => Err(loc.at(f, format!("`{name}` is not allowed for kind = \"{kind}\""))),
        None => Ok(()),
    }
}

fn require<'a, T>(loc: &Locator, field: &'a Option<Spanned<T>>, name: &str, kind: &str) -> Result<&'a Spanned<T>, ParseError> {
    field.as_ref().ok_or_else(|| loc.error(None, format!("kind = \"{kind}\" requires `{name}`")))
}

impl ModelFile {
    /// Parses and validates a model file. Syntax and schema problems are
    /// [`LoadError::Parse`]; mathematical problems (instability, bad tables)
    /// are [`LoadError::Model`].
    pub fn parse(text: &str) -> Result<Self, LoadError> {
        let loc = Locator { text };
        let raw: RawModelFile = toml::from_str(text).map_err(|e| loc.error(e.span(), e.message().trim().to_string()))?;
        if *raw.schema_version.get_ref() != SCHEMA_VERSION {
            return Err(loc.at(&raw.schema_version, format!("unsupported schema_version {}, expected {SCHEMA_VERSION}", raw.schema_version.get_ref())).into());
        }
        let kind = *raw.kind.get_ref();
        let nodes = raw.nodes.as_ref().map(|n| n.get_ref().clone());
        let model = match kind {
            ModelKind::DenseLti => {
                forbid(&loc, &raw.table, "table", "dense_lti")?;
                let a_field = require(&loc, &raw.a, "a", "dense_lti")?;
                let a = matrix(&loc, a_field, "a")?;
                if a.nrows() != a.ncols() {
                    return Err(loc.at(a_field, format!("`a` must be square, got {}x{}", a.nrows(), a.ncols())).into());
                }
                let system = check_stability(&a)?;
                let nodes = nodes.unwrap_or_else(|| (1..=a.nrows()).collect());
                GramianModel::Dense(NodeGramianFamily::new(system, nodes)?)
            }
            ModelKind::SpectralTable => {
                forbid(&loc, &raw.a, "a", "spectral_table")?;
                let t_field = require(&loc, &raw.table, "table", "spectral_table")?;
                let table = matrix(&loc, t_field, "table")?;
                let n_field = require(&loc, &raw.n, "n", "spectral_table")?;
                let nodes = nodes.unwrap_or_else(|| (1..=table.ncols()).collect());
                if nodes.len() != table.ncols() {
                    return Err(loc.at(t_field, format!("`table` has {} columns but there are {} nodes", table.ncols(), nodes.len())).into());
                }
                GramianModel::Spectral(SpectralModel::new(nodes, table, *n_field.get_ref())?)
            }
            ModelKind::HeatDirichlet => {
                forbid(&loc, &raw.a, "a", "heat_dirichlet")?;
                forbid(&loc, &raw.table, "table", "heat_dirichlet")?;
                let nodes = require(&loc, &raw.nodes, "nodes", "heat_dirichlet")?.get_ref();
                let heat = heat_dirichlet_model(nodes)?;
                let n = raw.n.as_ref().map(|n| *n.get_ref()).unwrap_or(nodes.len());
                GramianModel::Spectral(SpectralModel::new(nodes.clone(), heat.table().clone(), n)?)
            }
        };
        let n = match &raw.n {
            Some(f) => {
                let n = *f.get_ref();
                if n == 0 || n > model.state_dimension() {
                    return Err(loc.at(f, format!("`n` must lie in 1..={}", model.state_dimension())).into());
                }
                n
            }
            None => model.node_count().min(model.state_dimension()),
        };
        let caps = match &raw.caps {
            Some(f) => {
                if f.get_ref().len() != model.node_count() {
                    return Err(loc.at(f, format!("`caps` has {} entries but there are {} nodes", f.get_ref().len(), model.node_count())).into());
                }
                f.get_ref().clone()
            }
            None => vec![1.0; model.node_count()],
        };
        Ok(Self { kind, model, n, caps })
    }
}
