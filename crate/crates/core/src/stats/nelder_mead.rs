//! Nelder-Mead downhill simplex minimization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions<T> {
    pub max_iter: usize,
    /// Stop when every vertex lies within this (max-norm) distance of the best.
    pub x_tol: T,
    /// Stop when the objective spread over the simplex falls below this.
    pub f_tol: T,
}

impl<T: Scalar> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 2000,
            x_tol: T::cst(1e-8),
            f_tol: T::cst(1e-12),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    SimplexSize,
    ValueSpread,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl<T> NelderMeadResult<T> {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `objective` from `x0`. The initial simplex perturbs each
/// coordinate by 5% (or 2.5e-4 when it is zero). Non-finite values at the
/// starting simplex are an error; later non-finite values are treated as
/// `+∞` and rejected by the simplex moves.
pub fn nelder_mead<T, F>(mut objective: F, x0: &[T], opts: &NelderMeadOptions<T>) -> Result<NelderMeadResult<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty starting point".into()));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[T], evaluations: &mut usize| {
        *evaluations += 1;
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };

    let mut simplex: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] != T::zero() {
            v[i] * T::cst(1.05)
        } else {
            T::cst(2.5e-4)
        };
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(n + 1);
    for v in &simplex {
        let f = eval(v, &mut evaluations);
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective(v.iter().map(|x| x.as_f64()).collect()));
        }
        values.push(f);
    }

    let mut iterations = 0;
    let termination = loop {
        // sort vertices by value, stable so ties keep their order
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        if spread <= opts.f_tol {
            break Termination::ValueSpread;
        }
        if size <= opts.x_tol {
            break Termination::SimplexSize;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); n];
        for v in &simplex[..n] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        let inv = T::cst(1.0 / n as f64);
        centroid.iter_mut().for_each(|c| *c *= inv);
        let along = |t: f64, from: &[T]| -> Vec<T> {
            centroid
                .iter()
                .zip(from)
                .map(|(&c, &x)| c + T::cst(t) * (x - c))
                .collect()
        };

        let worst = simplex[n].clone();
        let xr = along(-REFLECT, &worst);
        let fr = eval(&xr, &mut evaluations);
        if fr < values[0] {
            let xe = along(-REFLECT * EXPAND, &worst);
            let fe = eval(&xe, &mut evaluations);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        if fr < values[n] {
            let xc = along(-REFLECT * CONTRACT, &worst);
            let fc = eval(&xc, &mut evaluations);
            if fc <= fr {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
        } else {
            let xcc = along(CONTRACT, &worst);
            let fcc = eval(&xcc, &mut evaluations);
            if fcc < values[n] {
                simplex[n] = xcc;
                values[n] = fcc;
                continue;
            }
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for (x, &b) in simplex[i].iter_mut().zip(&best) {
                *x = b + T::cst(SHRINK) * (*x - b);
            }
            values[i] = eval(&simplex[i], &mut evaluations);
        }
    };

    // the centroid of a converged simplex is often at least as good as its
    // best vertex; prefer it on ties
    let mut centroid = vec![T::zero(); n];
    for v in &simplex {
        for (c, &x) in centroid.iter_mut().zip(v) {
            *c += x;
        }
    }
    let inv = T::cst(1.0 / (n + 1) as f64);
    centroid.iter_mut().for_each(|c| *c *= inv);
    let fc = eval(&centroid, &mut evaluations);
    let (x, f) = if fc <= values[0] {
        (centroid, fc)
    } else {
        (simplex[0].clone(), values[0])
    };
    Ok(NelderMeadResult {
        x,
        f,
        iterations,
        evaluations,
        termination,
    })
}
