//! Embedded explicit Runge–Kutta pairs and the single-step kernel.
//!
//! Only the Dormand–Prince 5(4) pair ships. Its coefficients are kept as
//! exact integer ratios and rounded once into the working scalar type.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Butcher coefficients of an explicit embedded pair with orders `(p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTableau<T> {
    pub stages: usize,
    /// Strictly lower-triangular coupling; row `i` has `i` entries.
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub b_hat: Vec<T>,
    pub c: Vec<T>,
    pub p: u32,
    pub q: u32,
    pub fsal: bool,
}

type Frac = (i64, i64);

const DP54_C: [Frac; 7] = [(0, 1), (1, 5), (3, 10), (4, 5), (8, 9), (1, 1), (1, 1)];

const DP54_A: [&[Frac]; 7] = [
    &[],
    &[(1, 5)],
    &[(3, 40), (9, 40)],
    &[(44, 45), (-56, 15), (32, 9)],
    &[(19372, 6561), (-25360, 2187), (64448, 6561), (-212, 729)],
    &[
        (9017, 3168),
        (-355, 33),
        (46732, 5247),
        (49, 176),
        (-5103, 18656),
    ],
    &[
        (35, 384),
        (0, 1),
        (500, 1113),
        (125, 192),
        (-2187, 6784),
        (11, 84),
    ],
];

const DP54_B: [Frac; 7] = [
    (35, 384),
    (0, 1),
    (500, 1113),
    (125, 192),
    (-2187, 6784),
    (11, 84),
    (0, 1),
];

const DP54_B_HAT: [Frac; 7] = [
    (5179, 57600),
    (0, 1),
    (7571, 16695),
    (393, 640),
    (-92097, 339200),
    (187, 2100),
    (1, 40),
];

fn convert<T: Real>(fracs: &[Frac]) -> Vec<T> {
    fracs.iter().map(|&(n, d)| T::ratio(n, d)).collect()
}

/// The 7-stage FSAL Dormand–Prince pair of orders (5, 4).
pub fn dp54_tableau<T: Real>() -> EmbeddedTableau<T> {
    EmbeddedTableau {
        stages: 7,
        a: DP54_A.iter().map(|row| convert(row)).collect(),
        b: convert(&DP54_B),
        b_hat: convert(&DP54_B_HAT),
        c: convert(&DP54_C),
        p: 5,
        q: 4,
        fsal: true,
    }
}

/// Outcome of one named coefficient check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self, name: &str) -> bool {
        self.get(name).is_some_and(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, residual: f64, tol: f64) {
        self.checks.push(Check {
            name: name.into(),
            residual,
            passed: residual.abs() <= tol,
        });
    }
}

const CHECK_TOL: f64 = 1e-14;

/// Checks consistency sums, row sums, order conditions through order 3 for
/// both weight vectors, the `q = p - 1` structure and the FSAL row identity.
///
/// Check names: `sum_b`, `sum_b_hat`, `row_sum[i]`, `order2`, `order3a`,
/// `order3b` (and `_hat` variants), `orders`, `fsal_row`.
pub fn validate_tableau<T: Real>(tab: &EmbeddedTableau<T>) -> Result<ValidationReport> {
    let s = tab.stages;
    if s == 0 {
        return Err(Error::Structure("tableau has no stages".into()));
    }
    if tab.b.len() != s || tab.b_hat.len() != s || tab.c.len() != s || tab.a.len() != s {
        return Err(Error::Structure(format!(
            "expected {s} entries in a, b, b_hat and c; got {}, {}, {}, {}",
            tab.a.len(),
            tab.b.len(),
            tab.b_hat.len(),
            tab.c.len()
        )));
    }
    for (i, row) in tab.a.iter().enumerate() {
        if row.len() != i {
            return Err(Error::Structure(format!(
                "row {i} of a must have {i} entries, has {}",
                row.len()
            )));
        }
    }

    let f = |x: T| x.as_f64();
    let a: Vec<Vec<f64>> = tab.a.iter().map(|r| r.iter().copied().map(f).collect()).collect();
    let c: Vec<f64> = tab.c.iter().copied().map(f).collect();
    let mut report = ValidationReport::default();

    for (suffix, weights) in [("", &tab.b), ("_hat", &tab.b_hat)] {
        let w: Vec<f64> = weights.iter().copied().map(f).collect();
        report.push(format!("sum_b{suffix}"), w.iter().sum::<f64>() - 1.0, CHECK_TOL);
        let o2: f64 = w.iter().zip(&c).map(|(wi, ci)| wi * ci).sum();
        report.push(format!("order2{suffix}"), o2 - 0.5, CHECK_TOL);
        let o3a: f64 = w.iter().zip(&c).map(|(wi, ci)| wi * ci * ci).sum();
        report.push(format!("order3a{suffix}"), o3a - 1.0 / 3.0, CHECK_TOL);
        let o3b: f64 = (0..s)
            .map(|i| w[i] * (0..i).map(|j| a[i][j] * c[j]).sum::<f64>())
            .sum();
        report.push(format!("order3b{suffix}"), o3b - 1.0 / 6.0, CHECK_TOL);
    }

    for i in 0..s {
        let row_sum: f64 = a[i].iter().sum();
        report.push(format!("row_sum[{i}]"), c[i] - row_sum, CHECK_TOL);
    }

    let orders_ok = tab.p >= 1 && tab.q + 1 == tab.p;
    report.push("orders", if orders_ok { 0.0 } else { 1.0 }, 0.0);

    if tab.fsal {
        let last = &tab.a[s - 1];
        let dev = (0..s - 1)
            .map(|j| (f(last[j]) - f(tab.b[j])).abs())
            .fold(f(tab.b[s - 1]).abs(), f64::max);
        report.push("fsal_row", dev, 0.0);
    }
    Ok(report)
}

/// Result of one embedded step from `(t, y)` with length `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    /// Order-p solution.
    pub y_high: Vec<T>,
    /// Order-q solution.
    pub y_low: Vec<T>,
    /// `y_high - y_low`, componentwise.
    pub eps_vec: Vec<T>,
    /// Derivative at the last stage; equals `f(t + h, y_high)` for FSAL pairs.
    pub k_last: Vec<T>,
    pub evals: usize,
}

fn eval_checked<T: Real, F>(f: &F, t: T, y: &[T], out: &mut [T]) -> Result<()>
where
    F: Fn(T, &[T], &mut [T]) + ?Sized,
{
    f(t, y, out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Evaluation {
            t: t.as_f64(),
            y: y.iter().map(|v| v.as_f64()).collect(),
        })
    }
}

/// Takes one step of the embedded pair.
///
/// `k1`, when given, must equal `f(t, y)`; it saves one evaluation.
pub fn embedded_step<T: Real, F>(
    f: &F,
    t: T,
    y: &[T],
    h: T,
    k1: Option<&[T]>,
    tab: &EmbeddedTableau<T>,
) -> Result<StepOutcome<T>>
where
    F: Fn(T, &[T], &mut [T]) + ?Sized,
{
    let n = y.len();
    let s = tab.stages;
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; s];
    let mut evals = 0;

    match k1 {
        Some(k1) => {
            if k1.len() != n {
                return Err(Error::Structure(format!(
                    "cached derivative has length {}, state has {n}",
                    k1.len()
                )));
            }
            k[0].copy_from_slice(k1);
        }
        None => {
            eval_checked(f, t, y, &mut k[0])?;
            evals += 1;
        }
    }

    let mut stage_y = vec![T::zero(); n];
    for i in 1..s {
        for (m, slot) in stage_y.iter_mut().enumerate() {
            let incr = tab.a[i]
                .iter()
                .zip(&k[..i])
                .fold(T::zero(), |acc, (&aij, kj)| acc + aij * kj[m]);
            *slot = y[m] + h * incr;
        }
        eval_checked(f, t + tab.c[i] * h, &stage_y, &mut k[i])?;
        evals += 1;
    }

    let combine = |w: &[T]| -> Vec<T> {
        (0..n)
            .map(|m| {
                let incr = w
                    .iter()
                    .zip(&k)
                    .fold(T::zero(), |acc, (&wi, ki)| acc + wi * ki[m]);
                y[m] + h * incr
            })
            .collect()
    };
    let y_high = combine(&tab.b);
    let y_low = combine(&tab.b_hat);
    let eps_vec = y_high.iter().zip(&y_low).map(|(&hi, &lo)| hi - lo).collect();

    let k_last = if tab.fsal {
        k.pop().unwrap_or_default()
    } else {
        let mut out = vec![T::zero(); n];
        eval_checked(f, t + h, &y_high, &mut out)?;
        evals += 1;
        out
    };

    Ok(StepOutcome {
        y_high,
        y_low,
        eps_vec,
        k_last,
        evals,
    })
}
