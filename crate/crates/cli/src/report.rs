//! Run reports and their table / CSV / JSON-lines renderings.

use std::fmt::Write as _;

use ctrlscore::optimizer::{GridOptimum, ScoreResult, SolveStatus};
use ctrlscore::scores::ObjectiveKind;
use ctrlscore::spectral::AssumptionReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Decimals used for emitted weights.
pub const WEIGHT_DECIMALS: u32 = 6;

/// `sha256:<hex>` of the raw input bytes.
pub fn input_digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeWeight {
    pub node: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub step: f64,
    pub grid_objective: f64,
    pub grid_weights: Vec<f64>,
    pub points_evaluated: u64,
    /// `solver objective - grid objective`; non-positive when the solver is at least as good.
    pub objective_gap: f64,
    /// `max_i |p*_i - grid_i|`.
    pub max_deviation: f64,
    pub agrees: bool,
}

impl GridCheck {
    pub fn new(result: &ScoreResult, grid: &GridOptimum, step: f64) -> Self {
        let objective_gap = result.objective - grid.value;
        let max_deviation = result
            .weights
            .values()
            .iter()
            .zip(grid.weights.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Self {
            step,
            grid_objective: grid.value,
            grid_weights: grid.weights.values().to_vec(),
            points_evaluated: grid.points_evaluated,
            objective_gap,
            max_deviation,
            agrees: objective_gap <= 1e-9 && max_deviation <= step,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "grid-check step={} points={} grid_objective={:.12} objective_gap={:.3e} max_deviation={:.3e} agrees={}",
            self.step, self.points_evaluated, self.grid_objective, self.objective_gap, self.max_deviation, self.agrees
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input_digest: String,
    pub kind: ObjectiveKind,
    pub n: usize,
    pub assumption_report: AssumptionReport,
    pub weights: Vec<NodeWeight>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub uniqueness_certified: bool,
    pub warnings: Vec<String>,
    pub grid_check: Option<GridCheck>,
}

impl RunReport {
    pub fn new(input_digest: String, result: &ScoreResult, nodes: &[usize], grid_check: Option<GridCheck>) -> Self {
        Self {
            input_digest,
            kind: result.kind,
            n: result.n,
            assumption_report: result.assumption_report.clone(),
            weights: nodes.iter().zip(result.weights.values()).map(|(&node, &weight)| NodeWeight { node, weight }).collect(),
            objective: result.objective,
            kkt_residual: result.kkt_residual,
            iterations: result.iterations,
            status: result.status,
            uniqueness_certified: result.uniqueness_certified,
            warnings: result.warnings.clone(),
            grid_check,
        }
    }

    fn rounded_weights(&self) -> Vec<u64> {
        let w: Vec<f64> = self.weights.iter().map(|w| w.weight).collect();
        sum_preserving_units(&w, WEIGHT_DECIMALS)
    }

    /// `node,weight` rows at six decimals whose printed values sum to exactly 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,weight\n");
        for (w, units) in self.weights.iter().zip(self.rounded_weights()) {
            let _ = writeln!(out, "{},{}", w.node, format_units(units, WEIGHT_DECIMALS));
        }
        out
    }

    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("reports serialize");
        line.push('\n');
        line
    }

    pub fn to_table(&self) -> String {
        let status = match self.status {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxItersExceeded => "max-iters-exceeded",
            SolveStatus::NonConvexAmbiguous => "non-convex-ambiguous",
        };
        let a = &self.assumption_report;
        let mut out = String::new();
        let _ = writeln!(out, "input        {}", self.input_digest);
        let _ = writeln!(out, "score        {} (n = {})", self.kind, self.n);
        let _ = writeln!(out, "status       {status}");
        let _ = writeln!(out, "unique       {}", if self.uniqueness_certified { "certified" } else { "not certified" });
        let _ = writeln!(out, "objective    {:.12}", self.objective);
        let _ = writeln!(out, "kkt residual {:.3e}", self.kkt_residual);
        let _ = writeln!(out, "iterations   {}", self.iterations);
        let _ = writeln!(
            out,
            "assumptions  feasible={} commuting={} (residual {:.3e}) n-spectrum={} (residual {:.3e})",
            a.feasible, a.commuting, a.commutator_residual, a.n_spectrum, a.n_spectrum_residual
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>6}  {:>8}", "node", "weight");
        for (w, units) in self.weights.iter().zip(self.rounded_weights()) {
            let _ = writeln!(out, "{:>6}  {}", w.node, format_units(units, WEIGHT_DECIMALS));
        }
        for warning in &self.warnings {
            let _ = writeln!(out, "warning: {warning}");
        }
        if let Some(g) = &self.grid_check {
            let _ = writeln!(out, "{}", g.summary());
        }
        out
    }
}

/// Rounds each weight to `decimals` places so the rounded values still add up to
/// the rounded total (largest-remainder method, ties to the lower index).
pub fn sum_preserving_units(weights: &[f64], decimals: u32) -> Vec<u64> {
    let scale = 10f64.powi(decimals as i32);
    let scaled: Vec<f64> = weights.iter().map(|w| w.max(0.0) * scale).collect();
    let mut units: Vec<u64> = scaled.iter().map(|s| s.floor() as u64).collect();
    let target = scaled.iter().sum::<f64>().round() as u64;
    let assigned: u64 = units.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| (scaled[j] - scaled[j].floor()).total_cmp(&(scaled[i] - scaled[i].floor())).then(i.cmp(&j)));
    for &i in order.iter().take(target.saturating_sub(assigned) as usize) {
        units[i] += 1;
    }
    units
}

pub fn format_units(units: u64, decimals: u32) -> String {
    let scale = 10u64.pow(decimals);
    format!("{}.{:0width$}", units / scale, units % scale, width = decimals as usize)
}

/// How the heat demo renders two-decimal scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Rounding {
    /// Drop digits past the second decimal, as in the reference table.
    Truncate,
    /// Round half to even.
    HalfEven,
}

/// Formats `x` to two decimals.
pub fn two_decimals(x: f64, rounding: Rounding) -> String {
    match rounding {
        // The nudge keeps exact decimals such as 0.3 = 0.29999... from truncating down.
        Rounding::Truncate => format!("{:.2}", ((x * 100.0) * (1.0 + 1e-12)).floor() / 100.0),
        Rounding::HalfEven => format!("{:.2}", x),
    }
}
