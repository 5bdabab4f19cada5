//! The DETEST non-stiff problems of classes A, B, C and E.
//!
//! Every problem is integrated over `[0, 20]`. Endpoint references come
//! from a closed form where one exists, otherwise from a tight-tolerance
//! integration that is computed once per process and cached.

mod c5;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

pub use c5::{sha256_hex, C5Data};

use crate::control::{ControllerKind, ControllerParams, ParamSet};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegrationLimits};
use crate::scalar::Real;

pub type Rhs<T> = dyn Fn(T, &[T], &mut [T]) + Send + Sync;
pub type RhsFn<T> = Arc<Rhs<T>>;
pub type ExactFn<T> = Arc<dyn Fn(T) -> Vec<T> + Send + Sync>;
pub type ReferenceFn<T> = Arc<dyn Fn() -> Result<Vec<T>> + Send + Sync>;

/// Tolerance of the reference integrations.
pub const REFERENCE_TAU: f64 = 1e-13;

pub const ALL_IDS: [&str; 20] = [
    "A1", "A2", "A3", "A4", "A5", "B1", "B2", "B3", "B4", "B5", "C1", "C2", "C3", "C4", "C5",
    "E1", "E2", "E3", "E4", "E5",
];

pub const GROUP_I: [&str; 10] = ["A1", "A3", "A5", "B2", "B4", "C1", "C3", "C5", "E2", "E4"];
pub const GROUP_II: [&str; 10] = ["A2", "A4", "B1", "B3", "B5", "C2", "C4", "E1", "E3", "E5"];

/// An initial value problem `y' = f(t, y)`, `y(t0) = y0` on `[t0, t_end]`.
#[derive(Clone)]
pub struct OdeProblem<T = f64> {
    pub id: String,
    pub dim: usize,
    pub t0: T,
    pub t_end: T,
    pub y0: Vec<T>,
    rhs: RhsFn<T>,
    exact: Option<ExactFn<T>>,
    reference: Option<ReferenceFn<T>>,
}

impl<T: Real> OdeProblem<T> {
    pub fn new<F>(id: impl Into<String>, t0: T, t_end: T, y0: Vec<T>, rhs: F) -> Result<Self>
    where
        F: Fn(T, &[T], &mut [T]) + Send + Sync + 'static,
    {
        let id = id.into();
        if !(t_end > t0) {
            return Err(Error::Unsupported {
                id,
                reason: "t_end must exceed t0".into(),
            });
        }
        if y0.is_empty() || y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unsupported {
                id,
                reason: "initial state must be nonempty and finite".into(),
            });
        }
        Ok(Self {
            id,
            dim: y0.len(),
            t0,
            t_end,
            y0,
            rhs: Arc::new(rhs),
            exact: None,
            reference: None,
        })
    }

    pub fn with_exact<F>(mut self, exact: F) -> Self
    where
        F: Fn(T) -> Vec<T> + Send + Sync + 'static,
    {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_reference<F>(mut self, reference: F) -> Self
    where
        F: Fn() -> Result<Vec<T>> + Send + Sync + 'static,
    {
        self.reference = Some(Arc::new(reference));
        self
    }

    pub fn rhs(&self) -> &Rhs<T> {
        self.rhs.as_ref()
    }

    pub fn eval(&self, t: T, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        (self.rhs)(t, y, &mut out);
        out
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact(&self, t: T) -> Option<Vec<T>> {
        self.exact.as_ref().map(|f| f(t))
    }

    pub fn interval(&self) -> T {
        self.t_end - self.t0
    }

    /// The state at `t_end` used to measure global error.
    pub fn reference_endpoint(&self) -> Result<Vec<T>> {
        if let Some(exact) = &self.exact {
            return Ok(exact(self.t_end));
        }
        match &self.reference {
            Some(reference) => reference(),
            None => Err(Error::Unsupported {
                id: self.id.clone(),
                reason: "no exact solution or reference endpoint".into(),
            }),
        }
    }
}

impl<T: Real> fmt::Debug for OdeProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("y0", &self.y0)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemGroups {
    pub group1: Vec<&'static str>,
    pub group2: Vec<&'static str>,
}

pub fn groups() -> ProblemGroups {
    ProblemGroups {
        group1: GROUP_I.to_vec(),
        group2: GROUP_II.to_vec(),
    }
}

/// Problem lookup, optionally with C5 data supplied by the caller.
///
/// The default registry serves C5 only if the bundled data file is marked
/// verified.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    c5: Option<Arc<C5Data>>,
}

impl Registry {
    pub fn new() -> Self {
        let c5 = C5Data::bundled().ok().filter(|d| d.verified).map(Arc::new);
        Self { c5 }
    }

    /// Registry that serves C5 from `data`, verified or not.
    pub fn with_c5(data: C5Data) -> Self {
        Self {
            c5: Some(Arc::new(data)),
        }
    }

    pub fn c5_available(&self) -> bool {
        self.c5.is_some()
    }

    pub fn c5_data(&self) -> Option<&C5Data> {
        self.c5.as_deref()
    }

    pub fn get<T: Real>(&self, id: &str) -> Result<OdeProblem<T>> {
        let problem = build::<T>(id, self.c5.as_deref())?;
        if problem.has_exact() {
            return Ok(problem);
        }
        let key = match (&self.c5, id) {
            (Some(d), "C5") => format!("C5@{}", &d.sha256[..16]),
            _ => id.to_string(),
        };
        let registry = self.clone();
        let id = id.to_string();
        Ok(problem.with_reference(move || {
            let cached = cached_reference(&key, || {
                let twin = build::<f64>(&id, registry.c5.as_deref())?;
                integrate_reference(&twin)
            })?;
            Ok(cached.iter().map(|&v| T::lit(v)).collect())
        }))
    }

    /// Expands `group1`, `group2`, `all` or a comma-separated id list.
    /// Returns the sorted ids kept and those dropped because C5 is unavailable.
    pub fn resolve_suite(&self, spec: &str) -> Result<(Vec<String>, Vec<String>)> {
        let ids: Vec<String> = match spec {
            "group1" => GROUP_I.iter().map(|s| s.to_string()).collect(),
            "group2" => GROUP_II.iter().map(|s| s.to_string()).collect(),
            "all" => ALL_IDS.iter().map(|s| s.to_string()).collect(),
            list => list
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        };
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for id in ids {
            if !ALL_IDS.contains(&id.as_str()) {
                return Err(unknown(&id));
            }
            if id == "C5" && !self.c5_available() {
                dropped.push(id);
            } else if !kept.contains(&id) {
                kept.push(id);
            }
        }
        kept.sort();
        Ok((kept, dropped))
    }
}

pub fn get<T: Real>(id: &str) -> Result<OdeProblem<T>> {
    Registry::new().get(id)
}

/// Reference endpoint of problem `id` from the default registry.
pub fn reference_endpoint(id: &str) -> Result<Vec<f64>> {
    get::<f64>(id)?.reference_endpoint()
}

fn unknown(id: &str) -> Error {
    Error::UnknownProblem {
        id: id.to_string(),
        valid: ALL_IDS.join(", "),
    }
}

fn reference_cache() -> &'static Mutex<HashMap<String, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cached_reference<F>(key: &str, compute: F) -> Result<Arc<Vec<f64>>>
where
    F: FnOnce() -> Result<Vec<f64>>,
{
    let key = format!("{key}@{REFERENCE_TAU:e}");
    if let Some(hit) = reference_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let value = Arc::new(compute()?);
    let mut cache = reference_cache().lock().unwrap();
    Ok(cache.entry(key).or_insert(value).clone())
}

fn integrate_reference(problem: &OdeProblem<f64>) -> Result<Vec<f64>> {
    let params =
        ControllerParams::dp54(ControllerKind::Standard, REFERENCE_TAU, ParamSet::StandardRecommended)?;
    integrate(problem, &params, &IntegrationLimits::default())
        .map(|stats| stats.y_final)
        .map_err(|e| e.context(format!("reference integration of {}", problem.id)))
}

fn build<T: Real>(id: &str, c5: Option<&C5Data>) -> Result<OdeProblem<T>> {
    let l = T::lit;
    let zero = T::zero();
    let t_end = l(20.0);
    let p = |y0: Vec<f64>, f: fn(T, &[T], &mut [T])| {
        OdeProblem::new(id, zero, t_end, y0.into_iter().map(l).collect(), f)
    };
    let problem = match id {
        "A1" => p(vec![1.0], |_t, y, dy| dy[0] = -y[0])?.with_exact(|t: T| vec![(-t).exp()]),
        "A2" => p(vec![1.0], |_t, y, dy| dy[0] = -y[0].powi(3) / T::lit(2.0))?
            .with_exact(|t: T| vec![(T::one() + t).sqrt().recip()]),
        "A3" => p(vec![1.0], |t, y, dy| dy[0] = y[0] * t.cos())?
            .with_exact(|t: T| vec![t.sin().exp()]),
        "A4" => p(vec![1.0], |_t, y, dy| {
            dy[0] = y[0] * (T::one() - y[0] / T::lit(20.0)) / T::lit(4.0)
        })?
        .with_exact(|t: T| {
            vec![T::lit(20.0) / (T::one() + T::lit(19.0) * (-t / T::lit(4.0)).exp())]
        }),
        "A5" => p(vec![4.0], |t, y, dy| dy[0] = (y[0] - t) / (y[0] + t))?,

        "B1" => p(vec![1.0, 3.0], |_t, y, dy| {
            dy[0] = T::lit(2.0) * (y[0] - y[0] * y[1]);
            dy[1] = -(y[1] - y[0] * y[1]);
        })?,
        "B2" => p(vec![2.0, 0.0, 1.0], |_t, y, dy| {
            dy[0] = -y[0] + y[1];
            dy[1] = y[0] - T::lit(2.0) * y[1] + y[2];
            dy[2] = y[1] - y[2];
        })?,
        "B3" => p(vec![1.0, 0.0, 0.0], |_t, y, dy| {
            dy[0] = -y[0];
            dy[1] = y[0] - y[1] * y[1];
            dy[2] = y[1] * y[1];
        })?,
        "B4" => p(vec![3.0, 0.0, 0.0], |_t, y, dy| {
            let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
            dy[0] = -y[1] - y[0] * y[2] / r;
            dy[1] = y[0] - y[1] * y[2] / r;
            dy[2] = y[0] / r;
        })?,
        "B5" => p(vec![0.0, 1.0, 1.0], |_t, y, dy| {
            dy[0] = y[1] * y[2];
            dy[1] = -y[0] * y[2];
            dy[2] = -T::lit(0.51) * y[0] * y[1];
        })?,

        "C1" => p(unit_vector(10), |_t, y, dy| {
            dy[0] = -y[0];
            for i in 1..9 {
                dy[i] = y[i - 1] - y[i];
            }
            dy[9] = y[8];
        })?
        .with_exact(poisson_chain),
        "C2" => p(unit_vector(10), |_t, y, dy| {
            dy[0] = -y[0];
            for i in 1..9 {
                let i_f = T::lit(i as f64);
                dy[i] = i_f * y[i - 1] - (i_f + T::one()) * y[i];
            }
            dy[9] = T::lit(9.0) * y[8];
        })?
        .with_exact(binomial_chain),
        "C3" => p(unit_vector(10), tridiagonal)?.with_exact(|t| tridiagonal_exact(10, t)),
        "C4" => p(unit_vector(51), tridiagonal)?.with_exact(|t| tridiagonal_exact(51, t)),
        "C5" => {
            let data = c5.ok_or_else(|| Error::Unsupported {
                id: "C5".into(),
                reason: "no verified planetary data file; supply one explicitly".into(),
            })?;
            outer_planets(data)?
        }

        "E1" => {
            let y0 = bessel_half(zero);
            OdeProblem::new(id, zero, t_end, y0, |t: T, y: &[T], dy: &mut [T]| {
                let s = t + T::one();
                dy[0] = y[1];
                dy[1] = -(y[1] / s + (T::one() - T::lit(0.25) / (s * s)) * y[0]);
            })?
            .with_exact(bessel_half)
        }
        "E2" => p(vec![2.0, 0.0], |_t, y, dy| {
            dy[0] = y[1];
            dy[1] = (T::one() - y[0] * y[0]) * y[1] - y[0];
        })?,
        "E3" => p(vec![0.0, 0.0], |t, y, dy| {
            dy[0] = y[1];
            dy[1] = y[0].powi(3) / T::lit(6.0) - y[0] + T::lit(2.0) * (T::lit(2.78535) * t).sin();
        })?,
        "E4" => p(vec![30.0, 0.0], |_t, y, dy| {
            dy[0] = y[1];
            dy[1] = T::lit(0.032) - T::lit(0.4) * y[1] * y[1];
        })?,
        "E5" => p(vec![0.0, 0.0], |t, y, dy| {
            dy[0] = y[1];
            dy[1] = (T::one() + y[1] * y[1]).sqrt() / (T::lit(25.0) - t);
        })?,
        other => return Err(unknown(other)),
    };
    Ok(problem)
}

fn unit_vector(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

fn tridiagonal<T: Real>(_t: T, y: &[T], dy: &mut [T]) {
    let n = y.len();
    let two = T::lit(2.0);
    for i in 0..n {
        let left = if i > 0 { y[i - 1] } else { T::zero() };
        let right = if i + 1 < n { y[i + 1] } else { T::zero() };
        dy[i] = left - two * y[i] + right;
    }
}

/// `y_i = t^(i-1) e^-t / (i-1)!` for the first nine components.
fn poisson_chain<T: Real>(t: T) -> Vec<T> {
    let mut y = Vec::with_capacity(10);
    let mut term = (-t).exp();
    for i in 0..9 {
        y.push(term);
        term = term * t / T::lit((i + 1) as f64);
    }
    let partial = y.iter().fold(T::zero(), |acc, &v| acc + v);
    y.push(T::one() - partial);
    y
}

/// `y_i = e^-t (1 - e^-t)^(i-1)`, `y_10 = (1 - e^-t)^9`.
fn binomial_chain<T: Real>(t: T) -> Vec<T> {
    let decay = (-t).exp();
    let u = -(-t).exp_m1();
    let mut y: Vec<T> = (0..9).map(|i| decay * u.powi(i)).collect();
    y.push(u.powi(9));
    y
}

/// Eigen-expansion of `y' = tridiag(1, -2, 1) y`, `y(0) = e_1`.
fn tridiagonal_exact<T: Real>(n: usize, t: T) -> Vec<T> {
    let m = T::lit((n + 1) as f64);
    let pi = T::lit(std::f64::consts::PI);
    let weights: Vec<(T, T)> = (1..=n)
        .map(|k| {
            let theta = T::lit(k as f64) * pi / m;
            let half = (theta / T::lit(2.0)).sin();
            let rate = -T::lit(4.0) * half * half;
            (theta, theta.sin() * (rate * t).exp())
        })
        .collect();
    (1..=n)
        .map(|i| {
            let i_f = T::lit(i as f64);
            let sum = weights
                .iter()
                .fold(T::zero(), |acc, &(theta, w)| acc + (i_f * theta).sin() * w);
            T::lit(2.0) / m * sum
        })
        .collect()
}

/// `y1 = sqrt(2 / (pi (t+1))) sin(t+1)` and its derivative.
fn bessel_half<T: Real>(t: T) -> Vec<T> {
    let s = t + T::one();
    let scale = (T::lit(2.0) / T::lit(std::f64::consts::PI)).sqrt();
    let y1 = scale * s.sin() / s.sqrt();
    let y2 = scale * (s.cos() / s.sqrt() - s.sin() / (T::lit(2.0) * s * s.sqrt()));
    vec![y1, y2]
}

fn outer_planets<T: Real>(data: &C5Data) -> Result<OdeProblem<T>> {
    const N: usize = c5::BODIES;
    let k2 = T::lit(data.k2);
    let masses: Vec<T> = data.masses.iter().map(|&m| T::lit(m)).collect();
    let y0 = data.initial_state().into_iter().map(T::lit).collect();
    OdeProblem::new("C5", T::zero(), T::lit(20.0), y0, move |_t: T, y: &[T], dy: &mut [T]| {
        let (q, v) = y.split_at(3 * N);
        dy[..3 * N].copy_from_slice(v);
        let cube = |x: [T; 3]| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            r2 * r2.sqrt()
        };
        let pos = |i: usize| [q[3 * i], q[3 * i + 1], q[3 * i + 2]];
        let r3: Vec<T> = (0..N).map(|i| cube(pos(i))).collect();
        for i in 0..N {
            let qi = pos(i);
            for axis in 0..3 {
                let mut acc = -(masses[0] + masses[i + 1]) * qi[axis] / r3[i];
                for j in (0..N).filter(|&j| j != i) {
                    let qj = pos(j);
                    let d = [qj[0] - qi[0], qj[1] - qi[1], qj[2] - qi[2]];
                    acc = acc + masses[j + 1] * (d[axis] / cube(d) - qj[axis] / r3[j]);
                }
                dy[3 * N + 3 * i + axis] = k2 * acc;
            }
        }
    })
}
