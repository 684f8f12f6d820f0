//! Four-unknown TDOA least squares (pinger position plus emission time) and
//! its gradient-descent solver.
//!
//! The objective is `f = ½ Σ r²` over seven residuals, all in seconds: one per
//! precise-quad pair,
//!
//! ```text
//! r_ij = (‖p − h_i‖ − ‖p − h_j‖) / c − Δτ_ij
//! ```
//!
//! and one anchor tying the emission time to the reference onset,
//!
//! ```text
//! r_ref = ‖p − h_ref‖ / c + t0 − onset_ref
//! ```
//!
//! With a centimetre-scale quad the raw objective is very badly scaled: its
//! curvature across bearing is roughly `(baseline / (c · range))²` while its
//! curvature in `t0` is 1. Descent therefore runs in normalized coordinates:
//! position offset from the quad centroid in units of the initial range, and
//! the arrival time at the reference hydrophone in units of the quad's
//! largest pair delay. Each step is still a plain gradient step with Armijo
//! backtracking on the same objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::TdoaSet;
use crate::geometry::{true_azimuth_elevation, HydrophoneArray, Vec3};

/// Points closer than this to a precise hydrophone are singular.
pub const SINGULAR_RADIUS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("singular geometry: position within {SINGULAR_RADIUS} m of a hydrophone")]
    SingularGeometry,
    #[error("diverged: objective is not finite")]
    Diverged,
    #[error("TDOA set references channel {0}, which is not a precise hydrophone")]
    UnknownChannel(usize),
    #[error("TDOA set needs 6 precise pairs, got {0}")]
    MissingPairs(usize),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
}

/// The unknowns: pinger position and emission time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub position: Vec3,
    /// Emission time, seconds since recording start.
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// First trial step of every line search.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop when the normalized gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when one accepted step lowers the objective by less than this
    /// fraction of its current value.
    pub f_tol: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            max_iters: 5000,
            grad_tol: 1e-9,
            f_tol: 1e-5,
            backtrack: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

impl SolverParams {
    fn check(&self) -> Result<(), SolverError> {
        let ok = self.step_size > 0.0
            && self.grad_tol > 0.0
            && self.f_tol > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0;
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveChange,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub theta: Theta,
    /// Final objective, seconds squared.
    pub objective: f64,
    /// Gradient norm in the normalized descent coordinates.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Bearing of the estimate seen from the precise-quad centroid, degrees.
    pub azimuth: f64,
    pub elevation: f64,
    pub range: f64,
}

/// Positions and measurements resolved once per solve.
struct Problem {
    pairs: [(Vec3, Vec3, f64); 6],
    reference: Vec3,
    onset: f64,
    precise: [Vec3; 4],
    c: f64,
}

impl Problem {
    fn new(tdoa: &TdoaSet, array: &HydrophoneArray, c: f64) -> Result<Self, SolverError> {
        if tdoa.pairwise.len() != 6 {
            return Err(SolverError::MissingPairs(tdoa.pairwise.len()));
        }
        let precise_channels = array.precise_channels();
        let lookup = |ch: usize| -> Result<Vec3, SolverError> {
            precise_channels
                .iter()
                .position(|&p| p == ch)
                .map(|k| array.precise[k])
                .ok_or(SolverError::UnknownChannel(ch))
        };
        let mut pairs = [(Vec3::ZERO, Vec3::ZERO, 0.0); 6];
        for (slot, d) in pairs.iter_mut().zip(&tdoa.pairwise) {
            *slot = (lookup(d.pair.0)?, lookup(d.pair.1)?, d.delta_t);
        }
        Ok(Self {
            pairs,
            reference: lookup(tdoa.reference_channel)?,
            onset: tdoa.onset_time_abs,
            precise: array.precise,
            c,
        })
    }

    fn guard(&self, p: Vec3) -> Result<(), SolverError> {
        if self.precise.iter().any(|h| p.distance(*h) < SINGULAR_RADIUS) {
            Err(SolverError::SingularGeometry)
        } else {
            Ok(())
        }
    }

    fn residuals(&self, theta: &Theta) -> Result<[f64; 7], SolverError> {
        let p = theta.position;
        self.guard(p)?;
        let mut r = [0.0; 7];
        for (slot, &(hi, hj, dt)) in r.iter_mut().zip(&self.pairs) {
            *slot = (p.distance(hi) - p.distance(hj)) / self.c - dt;
        }
        r[6] = p.distance(self.reference) / self.c + theta.t0 - self.onset;
        Ok(r)
    }

    fn objective_and_gradient(&self, theta: &Theta) -> Result<(f64, [f64; 4]), SolverError> {
        let r = self.residuals(theta)?;
        let p = theta.position;
        let unit = |h: Vec3| {
            let d = p - h;
            d * (1.0 / d.norm())
        };
        let mut gp = Vec3::ZERO;
        for (&ri, &(hi, hj, _)) in r.iter().zip(&self.pairs) {
            gp += (unit(hi) - unit(hj)) * (ri / self.c);
        }
        let anchor = r[6];
        gp += unit(self.reference) * (anchor / self.c);
        let f = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        Ok((f, [gp.x, gp.y, gp.z, anchor]))
    }
}

/// The seven residuals (six pairs in `tdoa.pairwise` order, then the
/// anchor), seconds.
pub fn residuals(theta: &Theta, tdoa: &TdoaSet, array: &HydrophoneArray, c: f64) -> Result<[f64; 7], SolverError> {
    Problem::new(tdoa, array, c)?.residuals(theta)
}

/// `f = ½ Σ r²` and its analytic gradient `(∂f/∂x, ∂f/∂y, ∂f/∂z, ∂f/∂t0)`.
pub fn objective_and_gradient(
    theta: &Theta,
    tdoa: &TdoaSet,
    array: &HydrophoneArray,
    c: f64,
) -> Result<(f64, [f64; 4]), SolverError> {
    Problem::new(tdoa, array, c)?.objective_and_gradient(theta)
}

/// Maps between `Theta` and the normalized descent coordinates.
struct Scaling {
    centroid: Vec3,
    length: f64,
    time: f64,
}

impl Scaling {
    fn decode(&self, u: &[f64; 4], problem: &Problem) -> Theta {
        let position = self.centroid + Vec3::new(u[0], u[1], u[2]) * self.length;
        let t0 = self.time * u[3] - position.distance(problem.reference) / problem.c;
        Theta { position, t0 }
    }

    fn encode(&self, theta: &Theta, problem: &Problem) -> [f64; 4] {
        let q = (theta.position - self.centroid) * (1.0 / self.length);
        let arrival = theta.t0 + theta.position.distance(problem.reference) / problem.c;
        [q.x, q.y, q.z, arrival / self.time]
    }

    /// Scaled objective and its gradient in `u`.
    fn evaluate(&self, u: &[f64; 4], problem: &Problem) -> Result<(f64, [f64; 4]), SolverError> {
        let theta = self.decode(u, problem);
        let (f, g) = problem.objective_and_gradient(&theta)?;
        let d = theta.position - problem.reference;
        let u_ref = d * (1.0 / d.norm());
        let tt = self.time * self.time;
        let k = self.length / tt;
        let gx = Vec3::new(g[0], g[1], g[2]) - u_ref * (g[3] / problem.c);
        Ok((f / tt, [k * gx.x, k * gx.y, k * gx.z, g[3] / self.time]))
    }
}

fn norm4(g: &[f64; 4]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gradient descent with Armijo backtracking from `init`.
pub fn gradient_descent(
    init: &Theta,
    tdoa: &TdoaSet,
    array: &HydrophoneArray,
    c: f64,
    params: &SolverParams,
) -> Result<SolverResult, SolverError> {
    gradient_descent_traced(init, tdoa, array, c, params).map(|(r, _)| r)
}

/// As [`gradient_descent`], also returning the objective (seconds squared)
/// after every accepted step, starting with the objective at `init`.
pub fn gradient_descent_traced(
    init: &Theta,
    tdoa: &TdoaSet,
    array: &HydrophoneArray,
    c: f64,
    params: &SolverParams,
) -> Result<(SolverResult, Vec<f64>), SolverError> {
    params.check()?;
    if !init.position.is_finite() || !init.t0.is_finite() {
        return Err(SolverError::InvalidParams("initial point is not finite".into()));
    }
    let problem = Problem::new(tdoa, array, c)?;
    problem.guard(init.position)?;
    let centroid = array.precise_centroid();
    let scaling = Scaling {
        centroid,
        length: init.position.distance(centroid).max(1.0),
        time: array.max_precise_spacing() / c,
    };

    let mut u = scaling.encode(init, &problem);
    let (mut fu, mut g) = scaling.evaluate(&u, &problem)?;
    if !fu.is_finite() {
        return Err(SolverError::Diverged);
    }
    let tt = scaling.time * scaling.time;
    let mut trace = vec![fu * tt];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    while iterations < params.max_iters {
        let gnorm2 = g.iter().map(|v| v * v).sum::<f64>();
        if gnorm2.sqrt() <= params.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut alpha = params.step_size;
        let mut accepted = None;
        for _ in 0..=params.max_backtracks {
            let trial = [
                u[0] - alpha * g[0],
                u[1] - alpha * g[1],
                u[2] - alpha * g[2],
                u[3] - alpha * g[3],
            ];
            match scaling.evaluate(&trial, &problem) {
                Ok((ft, _)) if !ft.is_finite() => return Err(SolverError::Diverged),
                Ok((ft, gt)) if ft <= fu - params.armijo * alpha * gnorm2 => {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                // singular trial points are rejected like any failed step
                Ok(_) | Err(SolverError::SingularGeometry) => alpha *= params.backtrack,
                Err(e) => return Err(e),
            }
        }
        let Some((trial, ft, gt)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        let decrease = fu - ft;
        u = trial;
        g = gt;
        let previous = fu;
        fu = ft;
        iterations += 1;
        trace.push(fu * tt);
        if decrease <= params.f_tol * previous {
            stop = StopReason::ObjectiveChange;
            break;
        }
    }

    let theta = scaling.decode(&u, &problem);
    let grad_norm = norm4(&g);
    let converged = match stop {
        StopReason::GradientTolerance | StopReason::ObjectiveChange => true,
        StopReason::MaxIterations | StopReason::LineSearchFailed => grad_norm <= params.grad_tol,
    };
    let offset = theta.position - centroid;
    let (azimuth, elevation) = true_azimuth_elevation(offset).map_err(|_| SolverError::SingularGeometry)?;
    Ok((
        SolverResult {
            theta,
            objective: fu * tt,
            grad_norm,
            iterations,
            converged,
            stop_reason: stop,
            azimuth,
            elevation,
            range: offset.norm(),
        },
        trace,
    ))
}
