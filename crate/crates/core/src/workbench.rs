//! Work-precision measurement and controller comparison.
//!
//! A controller is swept over an explicit tolerance grid; each problem's
//! (global error, function evaluations) points are reduced to their lower-left
//! Pareto envelope and interpolated log-log at fixed target errors. Two
//! controllers are compared by the arithmetic mean of per-problem feval
//! ratios at each target.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerKind, ControllerParams, ParamSet, ParamTriple};
use crate::error::{Error, Result};
use crate::integrator::{global_error, integrate, IntegrationLimits};
use crate::problems::{OdeProblem, Registry};

/// Header of the curve CSV export.
pub const CURVE_CSV_HEADER: &str =
    "problem,controller,tau,global_error,n_fevals,n_accepted,n_rejected";

const RATIO_CSV_HEADER: &str = "record,target,problem,fevals_a,fevals_b,value";

/// Only targets inside this closed range enter the win fraction.
pub const COUNTED_RANGE: (f64, f64) = (1e-8, 1e-3);

/// `n` points from `10^hi_exp` down to `10^lo_exp`, equispaced in the exponent.
pub fn log_grid(hi_exp: f64, lo_exp: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(hi_exp)],
        _ => (0..n)
            .map(|i| {
                let frac = i as f64 / (n - 1) as f64;
                10f64.powf(hi_exp + (lo_exp - hi_exp) * frac)
            })
            .collect(),
    }
}

/// 21 tolerances from 1e-2 to 1e-12.
pub fn default_tau_grid() -> Vec<f64> {
    log_grid(-2.0, -12.0, 21)
}

/// 1e-3, 1e-4, ..., 1e-8.
pub fn default_targets() -> Vec<f64> {
    log_grid(-3.0, -8.0, 6)
}

/// Parses `1e-3..1e-8` (decades, inclusive), `1e-2..1e-12:21` (`n` log-spaced
/// points) or a comma-separated list.
pub fn parse_log_range(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("invalid range {spec:?}"));
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| bad())?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(bad())
        }
    };
    if let Some((lo, hi)) = spec.split_once("..") {
        let (hi, count) = match hi.split_once(':') {
            Some((h, c)) => (h, Some(c.trim().parse::<usize>().map_err(|_| bad())?)),
            None => (hi, None),
        };
        let (a, b) = (num(lo)?.log10(), num(hi)?.log10());
        let n = match count {
            Some(n) if n >= 1 => n,
            Some(_) => return Err(bad()),
            None => (a - b).abs().round() as usize + 1,
        };
        let mut grid = log_grid(a.max(b), a.min(b), n);
        if a < b {
            grid.reverse();
        }
        Ok(grid)
    } else {
        spec.split(',').map(num).collect()
    }
}

/// Controller kind and `(sigma, lambda1, lambda2)`, without a tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub params: ParamTriple<f64>,
    /// Set when `params` came from a named set; used for labels only.
    pub set: Option<ParamSet>,
}

impl ControllerSpec {
    pub fn named(kind: ControllerKind, set: ParamSet) -> Self {
        Self {
            kind,
            params: set.triple(),
            set: Some(set),
        }
    }

    pub fn explicit(kind: ControllerKind, params: ParamTriple<f64>) -> Self {
        Self {
            kind,
            params,
            set: None,
        }
    }

    pub fn at_tau(&self, tau: f64) -> Result<ControllerParams<f64>> {
        ControllerParams::new(self.kind, tau, self.params, 5)
    }

    pub fn label(&self) -> String {
        match self.set {
            Some(set) => format!("{}:{}", self.kind, set.id()),
            None => format!(
                "{}:{}/{}/{}",
                self.kind, self.params.sigma, self.params.lambda1, self.params.lambda2
            ),
        }
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ControllerSpec {
    type Err = Error;

    /// `kind:set-id` or `kind:sigma/lambda1/lambda2`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected kind:params, got {s:?}")))?;
        let kind: ControllerKind = kind.parse()?;
        if let Ok(set) = rest.parse::<ParamSet>() {
            return Ok(Self::named(kind, set));
        }
        let values: Vec<f64> = rest
            .split('/')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("bad parameters {rest:?}")))?;
        let [sigma, l1, l2] = values[..] else {
            return Err(Error::Parse(format!(
                "expected a set id or sigma/lambda1/lambda2, got {rest:?}"
            )));
        };
        let params = ParamTriple::new(sigma, l1, l2);
        params.validate()?;
        Ok(Self::explicit(kind, params))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub global_error: f64,
    pub n_fevals: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

/// A tolerance whose run produced no usable point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGap {
    pub tau: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkPrecisionCurve {
    pub problem_id: String,
    pub controller: ControllerSpec,
    /// Sorted by `tau`, descending.
    pub points: Vec<CurvePoint>,
    pub gaps: Vec<SweepGap>,
}

fn check_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::Parse("empty tolerance grid".into()));
    }
    if tau_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Parse("tolerances must be positive and finite".into()));
    }
    if tau_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Parse("tolerance grid must be strictly descending".into()));
    }
    Ok(())
}

/// One integration per tolerance. Failed runs and runs with zero global
/// error become gaps.
pub fn sweep(
    problem: &OdeProblem<f64>,
    controller: &ControllerSpec,
    tau_grid: &[f64],
) -> Result<WorkPrecisionCurve> {
    check_grid(tau_grid)?;
    let limits = IntegrationLimits::default();
    let runs: Vec<Result<std::result::Result<CurvePoint, SweepGap>>> = tau_grid
        .par_iter()
        .map(|&tau| {
            let params = controller.at_tau(tau)?;
            let stats = match integrate(problem, &params, &limits) {
                Ok(s) => s,
                Err(e) => {
                    return Ok(Err(SweepGap {
                        tau,
                        reason: e.to_string(),
                    }))
                }
            };
            let gerr = global_error(problem, &stats)?;
            if gerr > 0.0 {
                Ok(Ok(CurvePoint {
                    tau,
                    global_error: gerr,
                    n_fevals: stats.n_fevals,
                    n_accepted: stats.n_accepted,
                    n_rejected: stats.n_rejected,
                }))
            } else {
                Ok(Err(SweepGap {
                    tau,
                    reason: "zero global error".into(),
                }))
            }
        })
        .collect();

    let mut curve = WorkPrecisionCurve {
        problem_id: problem.id.clone(),
        controller: *controller,
        points: Vec::new(),
        gaps: Vec::new(),
    };
    for run in runs {
        match run? {
            Ok(point) => curve.points.push(point),
            Err(gap) => curve.gaps.push(gap),
        }
    }
    if curve.points.is_empty() {
        return Err(Error::EmptyCurve(problem.id.clone()));
    }
    Ok(curve)
}

/// Lower-left Pareto envelope as `(global_error, fevals)`, error ascending
/// and fevals strictly decreasing.
pub fn envelope(points: &[CurvePoint]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.global_error, p.n_fevals as f64))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for pt in pts {
        if out.last().is_none_or(|last| pt.1 < last.1) {
            out.push(pt);
        }
    }
    out
}

/// Function evaluations needed for global error `target`, interpolated
/// piecewise-linearly in log-log coordinates on the envelope.
pub fn fevals_at(curve: &WorkPrecisionCurve, target: f64) -> Result<f64> {
    let env = envelope(&curve.points);
    if env.len() < 2 || !(target > 0.0) {
        return Err(Error::Unbracketed { target });
    }
    if let Some(&(_, fev)) = env.iter().find(|&&(g, _)| g == target) {
        return Ok(fev);
    }
    let seg = env
        .windows(2)
        .find(|w| w[0].0 < target && target < w[1].0)
        .ok_or(Error::Unbracketed { target })?;
    let (g0, f0) = (seg[0].0.ln(), seg[0].1.ln());
    let (g1, f1) = (seg[1].0.ln(), seg[1].1.ln());
    let frac = (target.ln() - g0) / (g1 - g0);
    Ok((f0 + frac * (f1 - f0)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCell {
    pub problem: String,
    pub fevals_a: f64,
    pub fevals_b: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub target: f64,
    pub cells: Vec<RatioCell>,
    /// Problems whose curves could not bracket this target.
    pub excluded: Vec<String>,
    pub mean_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub a: String,
    pub b: String,
    pub suite: Vec<String>,
    pub rows: Vec<RatioRow>,
    /// Counted cells where `a` used strictly fewer evaluations.
    pub wins: usize,
    pub counted: usize,
    pub win_fraction: Option<f64>,
}

impl RatioTable {
    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    pub fn row(&self, target: f64) -> Option<&RatioRow> {
        self.rows
            .iter()
            .find(|r| (r.target / target - 1.0).abs() < 1e-9)
    }

    /// Mean over rows of the per-row mean ratio.
    pub fn grand_mean(&self) -> Option<f64> {
        let means: Vec<f64> = self.rows.iter().filter_map(|r| r.mean_ratio).collect();
        (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
    }

    pub fn excluded_cells(&self) -> usize {
        self.rows.iter().map(|r| r.excluded.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{RATIO_CSV_HEADER}");
        let _ = writeln!(out, "a,,,,,{}", self.a);
        let _ = writeln!(out, "b,,,,,{}", self.b);
        let _ = writeln!(out, "suite,,,,,{}", self.suite.join(";"));
        for row in &self.rows {
            let _ = writeln!(out, "mean,{:e},,,,{}", row.target, opt(row.mean_ratio));
            for c in &row.cells {
                let _ = writeln!(
                    out,
                    "cell,{:e},{},{},{},{}",
                    row.target, c.problem, c.fevals_a, c.fevals_b, c.ratio
                );
            }
            for p in &row.excluded {
                let _ = writeln!(out, "excluded,{:e},{p},,,", row.target);
            }
        }
        let _ = writeln!(out, "wins,,,,,{}", self.wins);
        let _ = writeln!(out, "counted,,,,,{}", self.counted);
        let _ = writeln!(out, "win_fraction,,,,,{}", opt(self.win_fraction));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Parse(format!("line {line}: {what}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == RATIO_CSV_HEADER => {}
            _ => return Err(Error::Parse("missing ratio table header".into())),
        }
        let mut table = RatioTable {
            a: String::new(),
            b: String::new(),
            suite: Vec::new(),
            rows: Vec::new(),
            wins: 0,
            counted: 0,
            win_fraction: None,
        };
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(n, "expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            let current = |rows: &mut Vec<RatioRow>, target: f64| -> Result<usize> {
                match rows.last() {
                    Some(r) if r.target == target => Ok(rows.len() - 1),
                    _ => Err(bad(n, "record outside its target row")),
                }
            };
            match f[0] {
                "a" => table.a = f[5].to_string(),
                "b" => table.b = f[5].to_string(),
                "suite" => {
                    table.suite = f[5]
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                }
                "mean" => table.rows.push(RatioRow {
                    target: num(f[1])?,
                    cells: Vec::new(),
                    excluded: Vec::new(),
                    mean_ratio: opt(f[5])?,
                }),
                "cell" => {
                    let idx = current(&mut table.rows, num(f[1])?)?;
                    table.rows[idx].cells.push(RatioCell {
                        problem: f[2].to_string(),
                        fevals_a: num(f[3])?,
                        fevals_b: num(f[4])?,
                        ratio: num(f[5])?,
                    });
                }
                "excluded" => {
                    let idx = current(&mut table.rows, num(f[1])?)?;
                    table.rows[idx].excluded.push(f[2].to_string());
                }
                "wins" => table.wins = f[5].parse().map_err(|_| bad(n, "bad count"))?,
                "counted" => table.counted = f[5].parse().map_err(|_| bad(n, "bad count"))?,
                "win_fraction" => table.win_fraction = opt(f[5])?,
                other => return Err(bad(n, &format!("unknown record {other:?}"))),
            }
        }
        Ok(table)
    }

    /// Human-readable layout: one line per target.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Mean ratio of function evaluations, a / b");
        let _ = writeln!(out, "  a: {}", self.a);
        let _ = writeln!(out, "  b: {}", self.b);
        let _ = writeln!(out, "  suite: {}", self.suite.join(" "));
        let _ = writeln!(out, "{:>14}  {:>10}  {:>5}  {:>8}", "global error", "mean ratio", "cells", "excluded");
        for row in &self.rows {
            let mean = row
                .mean_ratio
                .map(|m| format!("{m:.4}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:>14e}  {:>10}  {:>5}  {:>8}",
                row.target,
                mean,
                row.cells.len(),
                row.excluded.len()
            );
        }
        if let Some(g) = self.grand_mean() {
            let _ = writeln!(out, "grand mean: {g:.4}");
        }
        match self.win_fraction {
            Some(w) => {
                let _ = writeln!(
                    out,
                    "win fraction of a: {:.1}% ({}/{})",
                    100.0 * w,
                    self.wins,
                    self.counted
                );
            }
            None => {
                let _ = writeln!(out, "win fraction of a: - (no counted cells)");
            }
        }
        out
    }
}

fn in_counted_range(target: f64) -> bool {
    let (lo, hi) = COUNTED_RANGE;
    target >= lo * (1.0 - 1e-9) && target <= hi * (1.0 + 1e-9)
}

/// Builds the ratio table from precomputed curves. A `None` curve means the
/// problem produced no usable points; all of its cells are excluded.
pub fn ratio_table(
    a: &str,
    b: &str,
    suite: &[String],
    curves_a: &[Option<WorkPrecisionCurve>],
    curves_b: &[Option<WorkPrecisionCurve>],
    targets: &[f64],
) -> RatioTable {
    let mut rows = Vec::with_capacity(targets.len());
    let (mut wins, mut counted) = (0, 0);
    for &target in targets {
        let mut row = RatioRow {
            target,
            cells: Vec::new(),
            excluded: Vec::new(),
            mean_ratio: None,
        };
        for (i, id) in suite.iter().enumerate() {
            let at = |c: &Option<WorkPrecisionCurve>| c.as_ref().and_then(|c| fevals_at(c, target).ok());
            match (at(&curves_a[i]), at(&curves_b[i])) {
                (Some(fa), Some(fb)) => row.cells.push(RatioCell {
                    problem: id.clone(),
                    fevals_a: fa,
                    fevals_b: fb,
                    ratio: fa / fb,
                }),
                _ => row.excluded.push(id.clone()),
            }
        }
        if !row.cells.is_empty() {
            let sum: f64 = row.cells.iter().map(|c| c.ratio).sum();
            row.mean_ratio = Some(sum / row.cells.len() as f64);
        }
        if in_counted_range(target) {
            counted += row.cells.len();
            wins += row.cells.iter().filter(|c| c.fevals_a < c.fevals_b).count();
        }
        rows.push(row);
    }
    RatioTable {
        a: a.to_string(),
        b: b.to_string(),
        suite: suite.to_vec(),
        rows,
        wins,
        counted,
        win_fraction: (counted > 0).then(|| wins as f64 / counted as f64),
    }
}

/// Sweeps every problem in `suite` and returns curves in suite order.
/// Problems without any usable run map to `None`.
pub fn sweep_suite(
    registry: &Registry,
    suite: &[String],
    controller: &ControllerSpec,
    tau_grid: &[f64],
) -> Result<Vec<Option<WorkPrecisionCurve>>> {
    check_grid(tau_grid)?;
    suite
        .par_iter()
        .map(|id| {
            let problem = registry.get::<f64>(id)?;
            match sweep(&problem, controller, tau_grid) {
                Ok(c) => Ok(Some(c)),
                Err(Error::EmptyCurve(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Compares controller `a` against `b` on `suite` at each target error.
pub fn compare(
    registry: &Registry,
    suite: &[String],
    a: &ControllerSpec,
    b: &ControllerSpec,
    targets: &[f64],
    tau_grid: &[f64],
) -> Result<RatioTable> {
    if suite.is_empty() {
        return Err(Error::Parse("empty problem suite".into()));
    }
    let mut suite = suite.to_vec();
    suite.sort();
    suite.dedup();
    let curves_a = sweep_suite(registry, &suite, a, tau_grid)?;
    let curves_b = sweep_suite(registry, &suite, b, tau_grid)?;
    Ok(ratio_table(&a.label(), &b.label(), &suite, &curves_a, &curves_b, targets))
}

/// Curves in the CSV schema of [`CURVE_CSV_HEADER`].
pub fn curves_to_csv<'a>(curves: impl IntoIterator<Item = &'a WorkPrecisionCurve>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CURVE_CSV_HEADER}");
    for curve in curves {
        let label = curve.controller.label();
        for p in &curve.points {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{},{},{}",
                curve.problem_id, label, p.tau, p.global_error, p.n_fevals, p.n_accepted, p.n_rejected
            );
        }
    }
    out
}
