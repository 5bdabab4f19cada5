//! Adaptive integration loop with function-evaluation bookkeeping.

use crate::control::{decide, ControllerParams};
use crate::error::{Error, Result};
use crate::problems::OdeProblem;
use crate::scalar::{max_norm, Real};
use crate::tableau::{dp54_tableau, embedded_step, EmbeddedTableau};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationLimits {
    /// Maximum number of trial steps, accepted plus rejected.
    pub max_steps: usize,
    /// Smallest admissible step as a fraction of the interval length.
    pub h_min_factor: f64,
    /// Keep a per-trial `StepRecord` log.
    pub record_history: bool,
}

impl Default for IntegrationLimits {
    fn default() -> Self {
        Self {
            max_steps: 10_000_000,
            h_min_factor: 1e-14,
            record_history: false,
        }
    }
}

impl IntegrationLimits {
    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }
}

/// One trial step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<T = f64> {
    pub t: T,
    pub h: T,
    pub accepted: bool,
    /// The step was shortened (or stretched by less than the minimum step)
    /// to land on `t_end`.
    pub endpoint_clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationStats<T = f64> {
    pub n_accepted: usize,
    pub n_rejected: usize,
    pub n_fevals: usize,
    pub y_final: Vec<T>,
    pub t_final: T,
    pub h_history: Option<Vec<StepRecord<T>>>,
}

impl<T> IntegrationStats<T> {
    pub fn n_steps(&self) -> usize {
        self.n_accepted + self.n_rejected
    }
}

/// `h0 = T * min(1e-2, tau^(1/(p+1)))`.
pub fn initial_step<T: Real>(problem: &OdeProblem<T>, params: &ControllerParams<T>) -> T {
    let exponent = T::one() / T::lit(f64::from(params.p + 1));
    problem.interval() * T::lit(1e-2).min(params.tau.powf(exponent))
}

/// Integrates with the Dormand–Prince 5(4) pair.
pub fn integrate<T: Real>(
    problem: &OdeProblem<T>,
    params: &ControllerParams<T>,
    limits: &IntegrationLimits,
) -> Result<IntegrationStats<T>> {
    integrate_with(&dp54_tableau(), problem, params, limits)
}

/// Integrates with an arbitrary embedded pair.
///
/// The error measure handed to the controller is the max norm of
/// `y_high - y_low`. The first-stage derivative is reused after a rejection
/// and, for FSAL pairs, after an acceptance.
pub fn integrate_with<T: Real>(
    tab: &EmbeddedTableau<T>,
    problem: &OdeProblem<T>,
    params: &ControllerParams<T>,
    limits: &IntegrationLimits,
) -> Result<IntegrationStats<T>> {
    let f = problem.rhs();
    let t_end = problem.t_end;
    let h_min = problem.interval() * T::lit(limits.h_min_factor);

    let mut t = problem.t0;
    let mut y = problem.y0.clone();
    let mut k1 = problem.eval(t, &y);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            t: t.as_f64(),
            y: y.iter().map(|v| v.as_f64()).collect(),
        });
    }
    let mut n_fevals = 1;
    let mut n_accepted = 0;
    let mut n_rejected = 0;
    let mut history = limits.record_history.then(Vec::new);
    let mut h = initial_step(problem, params);

    while t < t_end {
        if n_accepted + n_rejected >= limits.max_steps {
            return Err(Error::StepBudget(limits.max_steps));
        }
        let remaining = t_end - t;
        let last = h >= remaining - h_min;
        let h_eff = if last { remaining } else { h };
        if !last && h_eff < h_min {
            return Err(Error::StepUnderflow {
                t: t.as_f64(),
                h: h_eff.as_f64(),
            });
        }

        let out = embedded_step(f, t, &y, h_eff, Some(&k1), tab)?;
        n_fevals += out.evals;
        let err = max_norm(&out.eps_vec);
        let decision = decide(params, h_eff, err);

        if let Some(log) = history.as_mut() {
            log.push(StepRecord {
                t,
                h: h_eff,
                accepted: decision.accept,
                endpoint_clamped: last && h_eff != h,
            });
        }

        if decision.accept {
            if out.y_high.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { t: t.as_f64() });
            }
            t = if last { t_end } else { t + h_eff };
            y = out.y_high;
            k1 = if tab.fsal {
                out.k_last
            } else {
                let k = problem.eval(t, &y);
                n_fevals += 1;
                k
            };
            n_accepted += 1;
        } else {
            n_rejected += 1;
        }
        h = decision.h_next;
    }

    Ok(IntegrationStats {
        n_accepted,
        n_rejected,
        n_fevals,
        y_final: y,
        t_final: t,
        h_history: history,
    })
}

/// Max-norm distance of the endpoint from the problem's reference endpoint.
pub fn global_error<T: Real>(problem: &OdeProblem<T>, stats: &IntegrationStats<T>) -> Result<T> {
    let reference = problem.reference_endpoint()?;
    if reference.len() != stats.y_final.len() {
        return Err(Error::Structure(format!(
            "reference has {} components, solution has {}",
            reference.len(),
            stats.y_final.len()
        )));
    }
    Ok(stats
        .y_final
        .iter()
        .zip(&reference)
        .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ControllerKind, ParamSet, ParamTriple};
    use crate::problems::get;

    fn zero_problem() -> OdeProblem<f64> {
        OdeProblem::new("zero", 0.0, 20.0, vec![1.5, -2.0], |_t, _y, dy: &mut [f64]| {
            dy.fill(0.0)
        })
        .unwrap()
        .with_exact(|_t| vec![1.5, -2.0])
    }

    #[test]
    fn initial_step_formula() {
        let a1 = get::<f64>("A1").unwrap();
        let p = ControllerParams::dp54(ControllerKind::New, 1e-6, ParamSet::NewOptimized).unwrap();
        assert!((initial_step(&a1, &p) - 0.2).abs() < 1e-15);
        let p = p.with_tau(1e-13);
        let expect = 20.0 * 1e-13f64.powf(1.0 / 6.0);
        assert!((initial_step(&a1, &p) - expect).abs() < 1e-15);
        assert!((expect - 0.136258).abs() < 1e-6);
        let unit = OdeProblem::new("u", 0.0, 1.0, vec![0.0], |_t, _y, dy: &mut [f64]| dy[0] = 0.0)
            .unwrap();
        let p = p.with_tau(1.0);
        assert!((initial_step(&unit, &p) - 0.01).abs() < 1e-16);
    }

    #[test]
    fn zero_rhs_path() {
        let prob = zero_problem();
        let p = ControllerParams::new(
            ControllerKind::Standard,
            1e-6,
            ParamTriple::new(1.2, 0.5, 5.0),
            5,
        )
        .unwrap();
        let stats = integrate(&prob, &p, &IntegrationLimits::default()).unwrap();
        assert_eq!(stats.y_final, prob.y0);
        assert_eq!(stats.n_rejected, 0);
        assert_eq!(stats.n_fevals, 1 + 6 * stats.n_accepted);
        assert_eq!(stats.t_final, 20.0);
        assert_eq!(global_error(&prob, &stats).unwrap(), 0.0);
    }

    #[test]
    fn a1_new_controller() {
        let a1 = get::<f64>("A1").unwrap();
        let p = ControllerParams::dp54(ControllerKind::New, 1e-6, ParamSet::NewOptimized).unwrap();
        let stats = integrate(&a1, &p, &IntegrationLimits::default()).unwrap();
        assert!((stats.y_final[0] - (-20f64).exp()).abs() <= 1e-6);
        assert_eq!(stats.n_fevals, 1 + 6 * stats.n_steps());
        let gerr = global_error(&a1, &stats).unwrap();
        assert!(gerr > 0.0 && gerr < 1e-5);
    }

    #[test]
    fn tighter_tolerance_reduces_a3_error() {
        let a3 = get::<f64>("A3").unwrap();
        let run = |tau| {
            let p = ControllerParams::dp54(ControllerKind::Standard, tau, ParamSet::StandardRecommended)
                .unwrap();
            let s = integrate(&a3, &p, &IntegrationLimits::default()).unwrap();
            global_error(&a3, &s).unwrap()
        };
        assert!(run(1e-8) < run(1e-4));
    }

    #[test]
    fn step_budget_and_underflow() {
        let a1 = get::<f64>("A1").unwrap();
        let p = ControllerParams::dp54(ControllerKind::Standard, 1e-10, ParamSet::StandardRecommended)
            .unwrap();
        let limits = IntegrationLimits {
            max_steps: 5,
            ..Default::default()
        };
        assert_eq!(integrate(&a1, &p, &limits).unwrap_err(), Error::StepBudget(5));

        let limits = IntegrationLimits {
            h_min_factor: 1e-2,
            ..Default::default()
        };
        let p = p.with_tau(1e-14);
        assert!(matches!(
            integrate(&a1, &p, &limits),
            Err(Error::StepUnderflow { .. })
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        let prob = OdeProblem::new("blowup", 0.0, 20.0, vec![1.0], |_t, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0] * y[0]
        })
        .unwrap();
        let p = ControllerParams::dp54(ControllerKind::Standard, 1e-6, ParamSet::StandardRecommended)
            .unwrap();
        let err = integrate(&prob, &p, &IntegrationLimits::default()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Evaluation { .. } | Error::Divergence { .. } | Error::StepUnderflow { .. }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn missing_reference_is_unsupported() {
        let prob = OdeProblem::new("bare", 0.0, 1.0, vec![1.0], |_t, _y, dy: &mut [f64]| dy[0] = 1.0)
            .unwrap();
        let p = ControllerParams::dp54(ControllerKind::New, 1e-6, ParamSet::NewOptimized).unwrap();
        let stats = integrate(&prob, &p, &IntegrationLimits::default()).unwrap();
        assert!(matches!(
            global_error(&prob, &stats),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn single_precision_run() {
        let a1 = get::<f32>("A1").unwrap();
        let p = ControllerParams::<f32>::dp54(ControllerKind::New, 1e-4, ParamSet::NewOptimized)
            .unwrap();
        let stats = integrate(&a1, &p, &IntegrationLimits::default()).unwrap();
        assert_eq!(stats.t_final, 20.0);
        assert!(global_error(&a1, &stats).unwrap() < 1e-3);
    }
}
