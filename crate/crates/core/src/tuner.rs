//! Tuning of `(sigma, lambda1, lambda2)` for minimum function evaluations.
//!
//! The objective sums interpolated feval counts over every (problem, target)
//! cell; the search is a bounded Nelder–Mead with projection onto the box and
//! three restarts from the perturbed incumbent. Step sizes and the
//! convergence test are scaled by each coordinate's range.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerKind, ParamSet, ParamTriple};
use crate::error::{Error, Result};
use crate::problems::Registry;
use crate::workbench::{default_tau_grid, fevals_at, sweep_suite, ControllerSpec};

const DIM: usize = 3;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const RESTARTS: usize = 3;
/// Initial simplex edge and restart offset, as a fraction of each range.
const STEP: f64 = 0.1;
/// Simplex diameter, relative to the ranges, below which a run is converged.
const X_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            lower: [1.0, 0.05, 1.05],
            upper: [20.0, 0.95, 10.0],
        }
    }
}

impl Bounds {
    pub fn contains(&self, x: &[f64; DIM]) -> bool {
        (0..DIM).all(|j| x[j] >= self.lower[j] && x[j] <= self.upper[j])
    }

    pub fn range(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    fn project(&self, x: [f64; DIM]) -> [f64; DIM] {
        std::array::from_fn(|j| x[j].clamp(self.lower[j], self.upper[j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub kind: ControllerKind,
    pub suite: Vec<String>,
    pub targets: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub bounds: Bounds,
    pub start: ParamTriple<f64>,
    /// Maximum number of objective evaluations.
    pub budget: usize,
}

impl TuneSpec {
    /// Targets 1e-4..1e-7, default bounds and grid, start at the
    /// recommended set, budget 200.
    pub fn new(kind: ControllerKind, suite: Vec<String>) -> Self {
        Self {
            kind,
            suite,
            targets: vec![1e-4, 1e-5, 1e-6, 1e-7],
            tau_grid: default_tau_grid(),
            bounds: Bounds::default(),
            start: ParamSet::StandardRecommended.triple(),
            budget: 200,
        }
    }

    /// Group I as served by `registry` (without C5 unless it is available).
    pub fn default_suite(registry: &Registry) -> Vec<String> {
        registry
            .resolve_suite("group1")
            .map(|(kept, _)| kept)
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if (0..DIM).any(|j| !(b.lower[j] < b.upper[j])) {
            return Err(Error::InvalidParams("bounds must satisfy lower < upper".into()));
        }
        if !b.contains(&self.start.to_array()) {
            return Err(Error::InvalidParams(format!(
                "start {:?} lies outside the bounds",
                self.start
            )));
        }
        if self.suite.is_empty() || self.targets.is_empty() || self.budget == 0 {
            return Err(Error::InvalidParams(
                "suite, targets and budget must be nonempty".into(),
            ));
        }
        let (lo, hi) = self
            .tau_grid
            .iter()
            .fold((f64::INFINITY, 0f64), |(lo, hi), &t| (lo.min(t), hi.max(t)));
        if self.targets.iter().any(|&t| t < lo || t > hi) {
            return Err(Error::InvalidParams(
                "targets must lie within the tolerance grid range".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub params: ParamTriple<f64>,
    /// `+inf` where the objective was infeasible.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_params: ParamTriple<f64>,
    pub best_objective: f64,
    pub trace: Vec<TraceEntry>,
}

impl TuneResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,sigma,lambda1,lambda2,objective\n");
        for e in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.iter, e.params.sigma, e.params.lambda1, e.params.lambda2, e.objective
            );
        }
        out
    }
}

/// Total interpolated function evaluations over all (problem, target) cells.
///
/// An undefined cell costs ten times the largest defined cell of its target
/// row, or of the whole table when the row is empty.
pub fn objective(registry: &Registry, params: ParamTriple<f64>, spec: &TuneSpec) -> Result<f64> {
    let controller = ControllerSpec::explicit(spec.kind, params);
    let curves = sweep_suite(registry, &spec.suite, &controller, &spec.tau_grid)?;
    let rows: Vec<Vec<Option<f64>>> = spec
        .targets
        .iter()
        .map(|&target| {
            curves
                .iter()
                .map(|c| c.as_ref().and_then(|c| fevals_at(c, target).ok()))
                .collect()
        })
        .collect();
    let overall_max = rows
        .iter()
        .flatten()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if overall_max == f64::NEG_INFINITY {
        return Err(Error::Infeasible(format!(
            "no (problem, target) cell is defined at {params:?}"
        )));
    }
    let total = rows
        .iter()
        .map(|row| {
            let row_max = row.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let penalty = 10.0 * if row_max.is_finite() { row_max } else { overall_max };
            row.iter().map(|c| c.unwrap_or(penalty)).sum::<f64>()
        })
        .sum();
    Ok(total)
}

/// Tunes against the workbench objective.
pub fn tune(registry: &Registry, spec: &TuneSpec) -> Result<TuneResult> {
    tune_with(spec, |p| objective(registry, p, spec))
}

struct Search<'a, F> {
    spec: &'a TuneSpec,
    f: F,
    trace: Vec<TraceEntry>,
    last_error: Option<Error>,
}

impl<F> Search<'_, F>
where
    F: Fn(ParamTriple<f64>) -> Result<f64> + Sync,
{
    fn remaining(&self) -> usize {
        self.spec.budget - self.trace.len()
    }

    /// Evaluates up to `remaining()` points, in parallel, recording them in order.
    fn eval_many(&mut self, points: &[[f64; DIM]]) -> Vec<f64> {
        let take = points.len().min(self.remaining());
        let xs: Vec<[f64; DIM]> = points[..take]
            .iter()
            .map(|&x| self.spec.bounds.project(x))
            .collect();
        let results: Vec<Result<f64>> = xs
            .par_iter()
            .map(|x| (self.f)(ParamTriple::from_array(*x)))
            .collect();
        let mut values = Vec::with_capacity(take);
        for (x, r) in xs.into_iter().zip(results) {
            let value = match r {
                Ok(v) if v.is_finite() => v,
                Ok(_) => f64::INFINITY,
                Err(e) => {
                    self.last_error = Some(e);
                    f64::INFINITY
                }
            };
            self.trace.push(TraceEntry {
                iter: self.trace.len(),
                params: ParamTriple::from_array(x),
                objective: value,
            });
            values.push(value);
        }
        values
    }

    fn eval(&mut self, x: [f64; DIM]) -> Option<f64> {
        self.eval_many(&[x]).first().copied()
    }

    /// One Nelder–Mead run from `start` using at most `budget` evaluations.
    fn run(&mut self, start: [f64; DIM], budget: usize) {
        let bounds = self.spec.bounds;
        let stop = self.trace.len() + budget.min(self.remaining());
        let mut simplex: Vec<[f64; DIM]> = vec![start];
        for j in 0..DIM {
            let mut v = start;
            let step = STEP * bounds.range(j);
            v[j] = if v[j] + step <= bounds.upper[j] { v[j] + step } else { v[j] - step };
            simplex.push(v);
        }
        let room = stop - self.trace.len();
        let values = self.eval_many(&simplex[..(DIM + 1).min(room)]);
        if values.len() < DIM + 1 {
            return;
        }
        let mut pts: Vec<([f64; DIM], f64)> = simplex.into_iter().zip(values).collect();

        while self.trace.len() < stop {
            pts.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = pts[0].0;
            let diameter = pts[1..]
                .iter()
                .map(|(v, _)| {
                    (0..DIM)
                        .map(|j| (v[j] - best[j]).abs() / bounds.range(j))
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if diameter < X_TOL {
                break;
            }
            let centroid: [f64; DIM] =
                std::array::from_fn(|j| pts[..DIM].iter().map(|(v, _)| v[j]).sum::<f64>() / DIM as f64);
            let worst = pts[DIM];
            let along = |t: f64, from: [f64; DIM]| -> [f64; DIM] {
                bounds.project(std::array::from_fn(|j| centroid[j] + t * (from[j] - centroid[j])))
            };

            let xr = along(-REFLECT, worst.0);
            let Some(fr) = self.eval(xr) else { break };
            if fr < pts[0].1 {
                let xe = along(-REFLECT * EXPAND, worst.0);
                let Some(fe) = (self.trace.len() < stop).then(|| self.eval(xe)).flatten() else {
                    pts[DIM] = (xr, fr);
                    break;
                };
                pts[DIM] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < pts[DIM - 1].1 {
                pts[DIM] = (xr, fr);
                continue;
            }
            if self.trace.len() >= stop {
                break;
            }
            let (xc, limit) = if fr < worst.1 {
                (along(-REFLECT * CONTRACT, worst.0), fr)
            } else {
                (along(CONTRACT, worst.0), worst.1)
            };
            let Some(fc) = self.eval(xc) else { break };
            if fc < limit || (fc == limit && fr < worst.1) {
                pts[DIM] = (xc, fc);
                continue;
            }
            let room = stop - self.trace.len();
            let shrunk: Vec<[f64; DIM]> = pts[1..]
                .iter()
                .map(|(v, _)| std::array::from_fn(|j| best[j] + SHRINK * (v[j] - best[j])))
                .collect();
            let values = self.eval_many(&shrunk[..DIM.min(room)]);
            for (i, value) in values.into_iter().enumerate() {
                pts[i + 1] = (shrunk[i], value);
            }
        }
    }
}

/// Tunes against an arbitrary objective over `spec.bounds`. Deterministic
/// for a deterministic objective.
pub fn tune_with<F>(spec: &TuneSpec, f: F) -> Result<TuneResult>
where
    F: Fn(ParamTriple<f64>) -> Result<f64> + Sync,
{
    spec.validate()?;
    let mut search = Search {
        spec,
        f,
        trace: Vec::with_capacity(spec.budget),
        last_error: None,
    };
    let bounds = spec.bounds;
    let mut start = spec.start.to_array();
    for restart in 0..=RESTARTS {
        let runs_left = RESTARTS + 1 - restart;
        let budget = search.remaining() / runs_left;
        if budget == 0 && search.remaining() == 0 {
            break;
        }
        search.run(start, budget.max(1));
        let Some(best) = incumbent(&search.trace) else { continue };
        let x = best.params.to_array();
        // Signs alternate per coordinate and flip with each restart.
        start = bounds.project(std::array::from_fn(|j| {
            let sign = if (restart + j) % 2 == 0 { 1.0 } else { -1.0 };
            x[j] + sign * STEP * bounds.range(j)
        }));
    }

    match incumbent(&search.trace) {
        Some(best) => Ok(TuneResult {
            best_params: best.params,
            best_objective: best.objective,
            trace: search.trace,
        }),
        None => Err(search
            .last_error
            .unwrap_or_else(|| Error::Infeasible("no feasible objective evaluation".into()))),
    }
}

/// First entry attaining the minimum finite objective.
fn incumbent(trace: &[TraceEntry]) -> Option<&TraceEntry> {
    trace
        .iter()
        .filter(|e| e.objective.is_finite())
        .fold(None, |best: Option<&TraceEntry>, e| match best {
            Some(b) if b.objective <= e.objective => Some(b),
            _ => Some(e),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TuneSpec {
        TuneSpec::new(ControllerKind::Standard, vec!["A1".into()])
    }

    #[test]
    fn validation() {
        let mut s = spec();
        assert!(s.validate().is_ok());
        s.start = ParamTriple::new(25.0, 0.5, 2.0);
        assert!(s.validate().is_err());
        let mut s = spec();
        s.targets = vec![1e-14];
        assert!(s.validate().is_err());
        let mut s = spec();
        s.bounds.lower[1] = 0.99;
        assert!(s.validate().is_err());
    }

    #[test]
    fn budget_and_bounds_respected() {
        let mut s = spec();
        s.budget = 37;
        let r = tune_with(&s, |p| Ok((p.sigma - 30.0).powi(2) + p.lambda1 + p.lambda2)).unwrap();
        assert!(r.trace.len() <= 37);
        assert!(r.trace.iter().all(|e| s.bounds.contains(&e.params.to_array())));
        // The unconstrained minimum lies beyond sigma's upper bound.
        assert!((r.best_params.sigma - 20.0).abs() < 1e-2);
    }

    #[test]
    fn infeasible_everywhere_propagates() {
        let err = tune_with(&spec(), |_| Err(Error::Infeasible("nope".into()))).unwrap_err();
        assert_eq!(err, Error::Infeasible("nope".into()));
    }

    #[test]
    fn partly_infeasible_region() {
        let r = tune_with(&spec(), |p| {
            if p.lambda2 > 5.0 {
                Err(Error::Infeasible("too wide".into()))
            } else {
                Ok((p.sigma - 3.0).powi(2) + (p.lambda2 - 4.0).powi(2))
            }
        })
        .unwrap();
        assert!(r.best_params.lambda2 <= 5.0);
        assert!(r.trace.iter().any(|e| e.objective.is_infinite()));
    }

    #[test]
    fn trace_csv_header() {
        let r = tune_with(&spec(), |p| Ok(p.sigma)).unwrap();
        let csv = r.trace_csv();
        assert!(csv.starts_with("iter,sigma,lambda1,lambda2,objective\n"));
        assert_eq!(csv.lines().count(), r.trace.len() + 1);
    }
}
