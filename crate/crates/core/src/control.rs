//! The two step-size controllers.
//!
//! Both propose `h_next = h * (tol / measure)^(1/(p+1))` and accept when
//! `measure < sigma * tol`; they differ only in the error measure. The
//! standard controller uses the local error estimate `|eps|`, the
//! step-proportional controller ([`ControllerKind::New`]) uses `|eps| * h`,
//! which makes its proposal independent of the current step in the
//! asymptotic regime. The proposal is always clamped into
//! `[lambda1 * h, lambda2 * h]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Errors below this are treated as zero and earn the maximum growth factor.
pub const EPS_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    /// Error measure `|eps| * h`.
    New,
    /// Error measure `|eps|`.
    Standard,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 2] = [ControllerKind::New, ControllerKind::Standard];

    pub fn id(self) -> &'static str {
        match self {
            ControllerKind::New => "new",
            ControllerKind::Standard => "standard",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new" => Ok(ControllerKind::New),
            "standard" | "std" => Ok(ControllerKind::Standard),
            other => Err(Error::Parse(format!(
                "unknown controller {other:?}; valid: new, standard"
            ))),
        }
    }
}

/// `(sigma, lambda1, lambda2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTriple<T = f64> {
    pub sigma: T,
    pub lambda1: T,
    pub lambda2: T,
}

impl<T: Real> ParamTriple<T> {
    pub fn new(sigma: T, lambda1: T, lambda2: T) -> Self {
        Self {
            sigma,
            lambda1,
            lambda2,
        }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.sigma, self.lambda1, self.lambda2]
    }

    pub fn from_array([sigma, lambda1, lambda2]: [T; 3]) -> Self {
        Self::new(sigma, lambda1, lambda2)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, l1, l2) = (self.sigma, self.lambda1, self.lambda2);
        let ok = s > T::zero()
            && l1 > T::zero()
            && l1 <= T::one()
            && l2 >= T::one()
            && s.is_finite()
            && l2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "need sigma > 0 and 0 < lambda1 <= 1 <= lambda2, got sigma={s}, lambda1={l1}, lambda2={l2}"
            )))
        }
    }
}

/// The tuned and recommended parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamSet {
    /// Tuned for the step-proportional controller: sigma 6.70, lambda 0.67..5.00.
    NewOptimized,
    /// Tuned for the standard controller: sigma 5.50, lambda 0.26..4.00.
    StandardOptimized,
    /// Conventional choice: sigma 1.20, lambda 0.50..2.00.
    StandardRecommended,
}

impl ParamSet {
    pub const ALL: [ParamSet; 3] = [
        ParamSet::NewOptimized,
        ParamSet::StandardOptimized,
        ParamSet::StandardRecommended,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ParamSet::NewOptimized => "new-opt",
            ParamSet::StandardOptimized => "std-opt",
            ParamSet::StandardRecommended => "std-rec",
        }
    }

    pub fn triple<T: Real>(self) -> ParamTriple<T> {
        let (s, l1, l2) = match self {
            ParamSet::NewOptimized => (6.70, 0.67, 5.00),
            ParamSet::StandardOptimized => (5.50, 0.26, 4.00),
            ParamSet::StandardRecommended => (1.20, 0.50, 2.00),
        };
        ParamTriple::new(T::lit(s), T::lit(l1), T::lit(l2))
    }
}

impl FromStr for ParamSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamSet::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown parameter set {s:?}; valid: new-opt, std-opt, std-rec"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams<T = f64> {
    pub kind: ControllerKind,
    pub tau: T,
    pub sigma: T,
    pub lambda1: T,
    pub lambda2: T,
    /// Order of the propagated solution.
    pub p: u32,
}

impl<T: Real> ControllerParams<T> {
    pub fn new(kind: ControllerKind, tau: T, triple: ParamTriple<T>, p: u32) -> Result<Self> {
        triple.validate()?;
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(Error::InvalidParams(format!("tau must be positive, got {tau}")));
        }
        if p < 1 {
            return Err(Error::InvalidParams("order p must be at least 1".into()));
        }
        Ok(Self {
            kind,
            tau,
            sigma: triple.sigma,
            lambda1: triple.lambda1,
            lambda2: triple.lambda2,
            p,
        })
    }

    /// Parameters for the Dormand–Prince pair (`p = 5`).
    pub fn dp54(kind: ControllerKind, tau: T, set: ParamSet) -> Result<Self> {
        Self::new(kind, tau, set.triple(), 5)
    }

    pub fn triple(&self) -> ParamTriple<T> {
        ParamTriple::new(self.sigma, self.lambda1, self.lambda2)
    }

    pub fn with_tau(mut self, tau: T) -> Self {
        self.tau = tau;
        self
    }

    fn measure(&self, h: T, err: T) -> T {
        match self.kind {
            ControllerKind::New => err * h,
            ControllerKind::Standard => err,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision<T = f64> {
    pub accept: bool,
    pub h_next: T,
}

fn eps_floor<T: Real>() -> T {
    T::lit(EPS_FLOOR).max(T::min_positive_value())
}

/// Unclamped proposal for the next step length.
pub fn propose<T: Real>(params: &ControllerParams<T>, h: T, err: T) -> T {
    if err < eps_floor() {
        return params.lambda2 * h;
    }
    let exponent = T::one() / T::lit(f64::from(params.p + 1));
    h * (params.tau / params.measure(h, err)).powf(exponent)
}

/// Limits `h_raw` to `[lambda1 * h, lambda2 * h]`.
pub fn clamp<T: Real>(params: &ControllerParams<T>, h: T, h_raw: T) -> T {
    h_raw.max(params.lambda1 * h).min(params.lambda2 * h)
}

/// Strict acceptance test `measure < sigma * tau`.
pub fn accept<T: Real>(params: &ControllerParams<T>, h: T, err: T) -> bool {
    params.measure(h, err) < params.sigma * params.tau
}

/// Accept/reject verdict and the next trial step. The same step rule applies
/// after acceptance and rejection.
pub fn decide<T: Real>(params: &ControllerParams<T>, h: T, err: T) -> StepDecision<T> {
    StepDecision {
        accept: accept(params, h, err),
        h_next: clamp(params, h, propose(params, h, err)),
    }
}
