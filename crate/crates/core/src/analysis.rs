//! Metrics computed from finished traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    classify, sigma_l, sigma_n, sigma_p, sigma_r, DeltaProfile, HybridState, Phase,
};
use crate::simulator::{Trace, TraceRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trace has no rows")]
    EmptyTrace,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
}

/// `0.5 (l^2 + theta^2)` in normalized coordinates.
pub fn lyapunov(l_norm: f64, theta_tilde: f64) -> f64 {
    0.5 * (l_norm * l_norm + theta_tilde * theta_tilde)
}

/// Both coordinates must stay below this in the final window.
pub const CONVERGENCE_TOLERANCE: f64 = 0.05;
/// Fraction of the trace forming the final window.
pub const CONVERGENCE_WINDOW: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub t_converge: Option<f64>,
    pub path_length: f64,
    pub switch_count: usize,
    #[serde(rename = "max_V")]
    pub max_v: f64,
    #[serde(rename = "final_V")]
    pub final_v: f64,
    pub lyapunov_violations: usize,
}

fn settled(row: &TraceRow, radius: f64) -> bool {
    row.l_norm(radius).abs() < CONVERGENCE_TOLERANCE
        && row.theta_tilde.abs() < CONVERGENCE_TOLERANCE
}

pub fn summarize(trace: &Trace) -> Result<RunSummary, AnalysisError> {
    let rows = &trace.rows;
    let last = rows.last().ok_or(AnalysisError::EmptyTrace)?;
    let radius = trace.meta.turning_radius;
    let window = ((rows.len() as f64 * CONVERGENCE_WINDOW).ceil() as usize).max(1);
    let converged = rows[rows.len() - window..]
        .iter()
        .all(|r| settled(r, radius));
    let t_converge = converged.then(|| {
        let first_settled = rows
            .iter()
            .rposition(|r| !settled(r, radius))
            .map_or(0, |i| i + 1);
        rows[first_settled].t
    });
    let path_length = rows
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum();
    let switch_count = rows
        .windows(2)
        .filter(|w| w[0].maneuver != w[1].maneuver)
        .count();
    let max_v = rows.iter().map(|r| r.lyapunov).fold(0.0, f64::max);
    Ok(RunSummary {
        converged,
        t_converge,
        path_length,
        switch_count,
        max_v,
        final_v: last.lyapunov,
        lyapunov_violations: lyapunov_check(trace).violations,
    })
}

/// Largest excursion of `theta - delta(l)` expected while tracking: the dead
/// band plus one control step of turning and one of path rotation.
pub fn tracking_ripple(trace: &Trace) -> f64 {
    let m = &trace.meta;
    m.eps_theta
        + m.v_nominal * m.dt_control / m.turning_radius
        + m.max_path_curvature * m.v_nominal * m.dt_control
}

/// Allowed rise of `V` between consecutive samples taken at offset `l`.
pub fn lyapunov_ripple(trace: &Trace, l_norm: f64) -> f64 {
    let m = &trace.meta;
    0.5 * (m.eps_theta * m.eps_theta
        + 2.0 * l_norm.abs() * m.dt_control * m.v_nominal / m.turning_radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub l_norm: f64,
    pub theta_tilde: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LyapunovCheck {
    pub samples: Vec<LyapunovSample>,
    pub violations: usize,
}

fn manifold_error(profile: &DeltaProfile, row: &TraceRow, radius: f64) -> f64 {
    row.theta_tilde - profile.eval(row.l_norm(radius))
}

/// Samples `V` at manifold crossings and Controlled entries while tracking
/// and counts rises larger than [`lyapunov_ripple`]. Each uninterrupted
/// tracking stretch is checked on its own.
pub fn lyapunov_check(trace: &Trace) -> LyapunovCheck {
    let radius = trace.meta.turning_radius;
    let profile = &trace.meta.delta_profile;
    let mut out = LyapunovCheck::default();
    let mut previous: Option<LyapunovSample> = None;
    for w in trace.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.phase != Phase::Track || a.phase != Phase::Track {
            previous = None;
            continue;
        }
        let mut sample = None;
        let (ea, eb) = (
            manifold_error(profile, a, radius),
            manifold_error(profile, b, radius),
        );
        if ea * eb < 0.0 && (b.theta_tilde - a.theta_tilde).abs() < std::f64::consts::PI {
            let f = ea / (ea - eb);
            let l = a.l_norm(radius) + f * (b.l_norm(radius) - a.l_norm(radius));
            let theta = a.theta_tilde + f * (b.theta_tilde - a.theta_tilde);
            sample = Some(LyapunovSample {
                t: a.t + f * (b.t - a.t),
                l_norm: l,
                theta_tilde: theta,
                v: lyapunov(l, theta),
            });
        } else if b.hybrid_state == HybridState::Controlled
            && a.hybrid_state != HybridState::Controlled
        {
            sample = Some(LyapunovSample {
                t: b.t,
                l_norm: b.l_norm(radius),
                theta_tilde: b.theta_tilde,
                v: b.lyapunov,
            });
        }
        if let Some(s) = sample {
            if let Some(p) = previous {
                if s.v > p.v + lyapunov_ripple(trace, p.l_norm) {
                    out.violations += 1;
                }
            }
            previous = Some(s);
            out.samples.push(s);
        }
    }
    out
}

/// Returns to the manifold after leaving it by more than
/// [`tracking_ripple`]; each entry is the first row back within `eps_theta`
/// or across the manifold.
pub fn manifold_reentries(trace: &Trace) -> Vec<LyapunovSample> {
    let radius = trace.meta.turning_radius;
    let profile = &trace.meta.delta_profile;
    let ripple = tracking_ripple(trace);
    let mut out = Vec::new();
    let mut departed_sign = 0.0;
    for r in &trace.rows {
        if r.phase != Phase::Track {
            departed_sign = 0.0;
            continue;
        }
        let e = manifold_error(profile, r, radius);
        if departed_sign == 0.0 {
            if e.abs() > ripple {
                departed_sign = e.signum();
            }
        } else if e.abs() <= trace.meta.eps_theta || e * departed_sign < 0.0 {
            departed_sign = 0.0;
            out.push(LyapunovSample {
                t: r.t,
                l_norm: r.l_norm(radius),
                theta_tilde: r.theta_tilde,
                v: r.lyapunov,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub l_min: f64,
    pub l_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            l_min: -4.0,
            l_max: 4.0,
            theta_min: -std::f64::consts::PI,
            theta_max: std::f64::consts::PI,
            resolution: 201,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.resolution < 2 {
            return Err(AnalysisError::InvalidGrid("resolution must be at least 2"));
        }
        let b = [self.l_min, self.l_max, self.theta_min, self.theta_max];
        if b.iter().any(|x| !x.is_finite()) {
            return Err(AnalysisError::InvalidGrid("bounds must be finite"));
        }
        if !(self.l_max > self.l_min && self.theta_max > self.theta_min) {
            return Err(AnalysisError::InvalidGrid("bounds must be increasing"));
        }
        Ok(())
    }

    /// `l` includes both ends; `theta` excludes the upper one so that a
    /// full turn is not sampled twice.
    pub fn l_values(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.resolution;
        (0..n).map(move |i| self.l_min + (self.l_max - self.l_min) * i as f64 / (n - 1) as f64)
    }

    pub fn theta_values(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.resolution;
        (0..n)
            .map(move |j| self.theta_min + (self.theta_max - self.theta_min) * j as f64 / n as f64)
    }
}

pub const FIELD_HEADER: &str = "l_norm,theta_tilde,sigma_r,sigma_l,sigma_n,sigma_p,region";

/// Boundary functions and region labels on a regular grid, as CSV.
pub fn field_dump(delta: f64, grid: &GridSpec, band: f64) -> Result<String, AnalysisError> {
    grid.validate()?;
    let mut out = String::with_capacity(110 * grid.resolution * grid.resolution);
    out.push_str(FIELD_HEADER);
    out.push('\n');
    for l in grid.l_values() {
        for t in grid.theta_values() {
            let _ = writeln!(
                out,
                "{l:.8e},{t:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{}",
                sigma_r(l, t),
                sigma_l(l, t),
                sigma_n(l, t, delta),
                sigma_p(l, t, delta),
                classify(l, t, delta, band).name()
            );
        }
    }
    Ok(out)
}
