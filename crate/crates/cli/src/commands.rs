//! Subcommand implementations.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use ctrlscore::energy::{min_energy, reachable_ellipsoid, EnergyQuery};
use ctrlscore::optimizer::{grid_oracle, solve, SolveConfig, SolveStatus};
use ctrlscore::scores::ObjectiveKind;
use ctrlscore::spectral::{assumption_report, heat_dirichlet_model, ASSUMPTION_TOL};
use ctrlscore::GramianModel;

use crate::exit;
use crate::model_file::{LoadError, ModelFile, ParseError};
use crate::report::{input_digest, two_decimals, GridCheck, Rounding, RunReport};
use crate::OutputFormat;

/// Index sets of the reference heat-equation table.
pub const DEFAULT_HEAT_ROWS: [[usize; 4]; 6] = [[1, 2, 3, 4], [1, 2, 3, 5], [1, 2, 3, 6], [2, 3, 4, 5], [2, 3, 4, 6], [3, 4, 5, 6]];

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Core(#[from] ctrlscore::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("BadIndexSet: {0}")]
    BadIndexSet(String),
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

impl From<LoadError> for CommandError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Parse(p) => Self::Parse(p),
            LoadError::Model(m) => Self::Core(m),
        }
    }
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        use ctrlscore::Error as E;
        match self {
            Self::Core(E::TargetOutsideSpan { .. }) => exit::OUTSIDE_SPAN,
            Self::Core(
                E::UnstableSystem { .. }
                | E::Infeasible { .. }
                | E::EmptyFeasibleSet { .. }
                | E::InfeasiblePoint { .. }
                | E::SingularGramian { .. }
                | E::RankDeficient { .. },
            ) => exit::INFEASIBLE,
            _ => exit::FAILURE,
        }
    }
}

type CmdResult = Result<i32, CommandError>;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_path_buf(), source }
}

fn load(path: &Path) -> Result<(ModelFile, Vec<u8>), CommandError> {
    let bytes = std::fs::read(path).map_err(io_error(path))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| ParseError { line: 1, column: 1, message: format!("not UTF-8: {e}") })?;
    Ok((ModelFile::parse(text)?, bytes))
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CommandError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_error(p)),
        None => out.write_all(text.as_bytes()).map_err(io_error(Path::new("<stdout>"))),
    }
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<f64>, CommandError> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CommandError::BadArgument(format!("{what}: cannot parse {s:?} as a number"))))
        .collect()
}

pub struct ScoreArgs {
    pub model: PathBuf,
    pub kind: ObjectiveKind,
    pub n: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub seed: u64,
    pub starts: Option<usize>,
    pub grid_check: Option<f64>,
}

pub fn score(args: &ScoreArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let (file, bytes) = load(&args.model)?;
    let n = args.n.unwrap_or(file.n);
    let config = SolveConfig { seed: args.seed, starts: args.starts, ..SolveConfig::default() };
    let result = solve(args.kind, &file.model, n, &file.caps, &config)?;
    let grid = match args.grid_check {
        Some(step) => Some(GridCheck::new(&result, &grid_oracle(args.kind, &file.model, n, &file.caps, step)?, step)),
        None => None,
    };
    let report = RunReport::new(input_digest(&bytes), &result, file.model.node_indices(), grid.clone());
    let text = match args.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::JsonLines => report.to_json_line(),
    };
    emit(&text, args.out.as_deref(), out)?;
    // The table embeds the grid line itself and JSON carries it as a field; CSV
    // must stay machine-readable, so the line goes to the diagnostic stream.
    if let (OutputFormat::Csv, Some(g)) = (args.format, &grid) {
        let _ = writeln!(err, "{}", g.summary());
    }
    if args.format != OutputFormat::Table {
        for w in &report.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
    }
    Ok(if result.status == SolveStatus::NonConvexAmbiguous { exit::AMBIGUOUS } else { exit::OK })
}

pub fn check(path: &Path, n: Option<usize>, out: &mut dyn Write) -> CmdResult {
    let (file, _) = load(path)?;
    let n = n.unwrap_or(file.n);
    let report = assumption_report(&file.model, n, &file.caps, ASSUMPTION_TOL)?;
    let yes = |b: bool| if b { "pass" } else { "FAIL" };
    let mut text = String::new();
    let witness = report
        .witness
        .as_ref()
        .map(|w| w.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "))
        .unwrap_or_else(|| "none".into());
    let _ = writeln!(text, "n                {n}");
    let _ = writeln!(text, "feasibility      {}  witness ({witness})  mu_n {:.6e}", yes(report.feasible), report.nth_eigenvalue);
    let _ = writeln!(text, "commuting        {}  residual {:.6e}", yes(report.commuting), report.commutator_residual);
    let _ = writeln!(text, "n-spectrum       {}  residual {:.6e}", yes(report.n_spectrum), report.n_spectrum_residual);
    let rows: Vec<String> = report.selected_rows.iter().map(|r| (r + 1).to_string()).collect();
    let _ = writeln!(text, "selected modes   {}", rows.join(", "));
    let _ = writeln!(text, "tolerance        {:e}", report.tol);
    emit(&text, None, out)?;
    Ok(if report.all_pass() { exit::OK } else { exit::INFEASIBLE })
}

/// Parses `"1,2,3,4;2,3,4,5"` into index sets.
pub fn parse_rows(raw: &str) -> Result<Vec<Vec<usize>>, CommandError> {
    let rows: Vec<Vec<usize>> = raw
        .split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|row| {
            let nodes = row
                .split(',')
                .map(|s| match s.trim().parse::<usize>() {
                    Ok(k) if k >= 1 => Ok(k),
                    _ => Err(CommandError::BadIndexSet(format!("{:?} is not a positive mode number in {row:?}", s.trim()))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut sorted = nodes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != nodes.len() {
                return Err(CommandError::BadIndexSet(format!("{row:?} repeats a mode")));
            }
            Ok(nodes)
        })
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(CommandError::BadIndexSet("no index sets given".into()));
    }
    Ok(rows)
}

/// One heat-demo row at full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatRow {
    pub nodes: Vec<usize>,
    pub aecs: Vec<f64>,
    pub vcs: Vec<f64>,
}

pub fn heat_rows(rows: &[Vec<usize>]) -> Result<Vec<HeatRow>, CommandError> {
    let config = SolveConfig::default();
    rows.iter()
        .map(|nodes| {
            let model = GramianModel::Spectral(heat_dirichlet_model(nodes)?);
            let caps = vec![1.0; nodes.len()];
            let aecs = solve(ObjectiveKind::Aecs, &model, nodes.len(), &caps, &config)?;
            let vcs = solve(ObjectiveKind::Vcs, &model, nodes.len(), &caps, &config)?;
            Ok(HeatRow { nodes: nodes.clone(), aecs: aecs.weights.into_values(), vcs: vcs.weights.into_values() })
        })
        .collect()
}

pub fn heat_demo(rows: Option<&str>, rounding: Rounding, out: &mut dyn Write) -> CmdResult {
    let sets = match rows {
        Some(raw) => parse_rows(raw)?,
        None => DEFAULT_HEAT_ROWS.iter().map(|r| r.to_vec()).collect(),
    };
    let fmt = |v: &[f64]| format!("({})", v.iter().map(|x| two_decimals(*x, rounding)).collect::<Vec<_>>().join(", "));
    let results = heat_rows(&sets)?;
    let labels: Vec<String> = results
        .iter()
        .map(|r| format!("{{{}}}", r.nodes.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")))
        .collect();
    let cells: Vec<String> = results.iter().map(|r| fmt(&r.aecs)).collect();
    let w_label = labels.iter().map(String::len).max().unwrap_or(0).max(1);
    let w_cell = cells.iter().map(String::len).max().unwrap_or(0).max(4);
    let mut text = format!("{:<w_label$}  {:<w_cell$}  VCS\n", "I", "AECS");
    for ((label, cell), r) in labels.iter().zip(&cells).zip(&results) {
        let _ = writeln!(text, "{label:<w_label$}  {cell:<w_cell$}  {}", fmt(&r.vcs));
    }
    emit(&text, None, out)?;
    Ok(exit::OK)
}

pub fn energy(path: &Path, p: &str, target: &str, n: Option<usize>, out: &mut dyn Write) -> CmdResult {
    let (file, _) = load(path)?;
    let n = n.unwrap_or(file.n);
    let p = parse_list(p, "--p")?;
    let target = parse_list(target, "--target")?;
    let energy = min_energy(&file.model, &p, &EnergyQuery { target, rank: n })?;
    let ellipsoid = reachable_ellipsoid(&file.model, &p, n)?;
    let axes: Vec<String> = ellipsoid.semi_axes.iter().map(|a| format!("{a:.6e}")).collect();
    let text = format!(
        "energy      {energy:.6}\nsemi_axes   {}\nlog_volume  {:.6}\n",
        axes.join(", "),
        ellipsoid.log_volume
    );
    emit(&text, None, out)?;
    Ok(exit::OK)
}
