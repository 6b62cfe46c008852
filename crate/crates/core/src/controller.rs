//! Hybrid bang-bang steering controller.
//!
//! The controller works in normalized path coordinates `(l, theta)` where
//! `l` is the lateral offset divided by the turning radius `R` and `theta`
//! is the heading error. With one brake locked the state moves on the level
//! sets of the boundary functions:
//!
//! * a right turn keeps `sigma_R = l + 1 - cos(theta)` constant,
//! * a left turn keeps `sigma_L = l - 1 + cos(theta)` constant,
//!
//! so `sigma_R = 0` (with `theta >= 0`) and `sigma_L = 0` (with
//! `theta <= 0`) are the final turns that land on the path tangentially.
//! For an approach angle `d`, `sigma_P` is the value `sigma_L` takes once a
//! right turn has brought the heading to `-d`; `sigma_N` is the value
//! `sigma_R` takes once a left turn has brought it to `+d`.
//!
//! Two phases share the same three maneuvers:
//!
//! * **Approach**: turn to the approach heading `-sign(l) d`, go straight,
//!   then make the final turn along `sigma_L`/`sigma_R` (any of the three
//!   stages may be empty).
//! * **Track**: regulate the heading about `theta = delta(l)` with a dead
//!   band of half-width `eps_theta`.
//!
//! Approach heading and `delta(l)` have the sign opposite to `l`, which is
//! what makes `dl/dt = v sin(theta)` shrink `|l|`.
//!
//! Region table used by [`classify`] and the approach phase (`d = |delta|`):
//!
//! | region            | condition                                   | sequence                     |
//! |-------------------|---------------------------------------------|------------------------------|
//! | `OnSigmaR`        | `|sigma_R| <= eps_b`, `theta >= 0`          | final right turn             |
//! | `OnSigmaL`        | `|sigma_L| <= eps_b`, `theta <= 0`          | final left turn              |
//! | `OnDeltaLine`     | `theta = -sign(l) d`, before the final turn | straight, final turn         |
//! | `RightTurnFirst`  | `sigma_L > 0`, `sigma_P < 0`, `theta > -d`  | right turn, final left turn  |
//! | `LeftTurnFirst`   | `sigma_R < 0`, `sigma_N > 0`, `theta < d`   | left turn, final right turn  |
//! | `Interior`        | otherwise                                   | turn, straight, final turn   |

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::FrenetState;
use crate::vehicle::BrakeCommand;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("projection lost: path-relative state is not finite")]
    ProjectionLost,
    #[error("invalid delta profile: {0}")]
    InvalidProfile(String),
    #[error("invalid controller setting `{0}`")]
    InvalidSetting(&'static str),
}

/// Heading-error reference as a function of the normalized offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DeltaProfile {
    /// `-sign(l) |delta|`.
    Constant { delta: f64 },
    /// `-A tanh(k l)`.
    Tanh {
        #[serde(rename = "A")]
        amplitude: f64,
        #[serde(rename = "k")]
        gain: f64,
    },
    /// Odd extension of a table `(l >= 0, delta)`, linearly interpolated and
    /// held constant past the last entry.
    Custom { points: Vec<(f64, f64)> },
}

impl Default for DeltaProfile {
    fn default() -> Self {
        DeltaProfile::Tanh {
            amplitude: FRAC_PI_2,
            gain: 1.0,
        }
    }
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl DeltaProfile {
    pub fn eval(&self, l: f64) -> f64 {
        match self {
            DeltaProfile::Constant { delta } => -signum0(l) * delta.abs(),
            DeltaProfile::Tanh { amplitude, gain } => -amplitude * (gain * l).tanh(),
            DeltaProfile::Custom { points } => signum0(l) * interpolate(points, l.abs()),
        }
    }

    /// `d delta / d l`; zero for the constant profile.
    pub fn derivative(&self, l: f64) -> f64 {
        match self {
            DeltaProfile::Constant { .. } => 0.0,
            DeltaProfile::Tanh { amplitude, gain } => {
                let c = (gain * l).cosh();
                -amplitude * gain / (c * c)
            }
            DeltaProfile::Custom { points } => {
                let x = l.abs();
                match points.windows(2).find(|w| x >= w[0].0 && x < w[1].0) {
                    Some(w) => (w[1].1 - w[0].1) / (w[1].0 - w[0].0),
                    None => 0.0,
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidProfile(m.to_string()));
        match self {
            DeltaProfile::Constant { delta } => {
                if !(delta.is_finite() && delta.abs() < PI) {
                    return bad("constant delta must lie in (-pi, pi)");
                }
            }
            DeltaProfile::Tanh { amplitude, gain } => {
                if !(amplitude.is_finite() && *amplitude > 0.0 && *amplitude < PI) {
                    return bad("tanh amplitude must lie in (0, pi)");
                }
                if !(gain.is_finite() && *gain > 0.0) {
                    return bad("tanh gain must be positive");
                }
            }
            DeltaProfile::Custom { points } => {
                if points.len() < 2 {
                    return bad("custom table needs at least two points");
                }
                if points[0] != (0.0, 0.0) {
                    return bad("custom table must start at (0, 0)");
                }
                for w in points.windows(2) {
                    let ((l0, d0), (l1, d1)) = (w[0], w[1]);
                    if l1.is_nan() || l1 <= l0 {
                        return bad("custom abscissae must increase");
                    }
                    if d1.is_nan() || d1 > d0 {
                        return bad("custom delta must be non-increasing (|delta| grows, sign opposite to l)");
                    }
                }
                if points
                    .iter()
                    .any(|(l, d)| !l.is_finite() || !d.is_finite() || d.abs() >= PI)
                {
                    return bad("custom values must be finite with |delta| < pi");
                }
            }
        }
        Ok(())
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let last = points[points.len() - 1];
    if x >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= x).max(1);
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Boundary function selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    R,
    L,
    N,
    P,
}

pub fn sigma(which: Boundary, l: f64, theta: f64, delta: f64) -> f64 {
    match which {
        Boundary::R => sigma_r(l, theta),
        Boundary::L => sigma_l(l, theta),
        Boundary::N => sigma_n(l, theta, delta),
        Boundary::P => sigma_p(l, theta, delta),
    }
}

// Evaluation order is fixed so that sigma_R(-l, -t) == -sigma_L(l, t) and
// sigma_N(-l, -t, -d) == -sigma_P(l, t, d) hold bit for bit.

pub fn sigma_r(l: f64, theta: f64) -> f64 {
    (l + 1.0) - theta.cos()
}

pub fn sigma_l(l: f64, theta: f64) -> f64 {
    (l - 1.0) + theta.cos()
}

pub fn sigma_n(l: f64, theta: f64, delta: f64) -> f64 {
    ((l + 1.0) - 2.0 * delta.cos()) + theta.cos()
}

pub fn sigma_p(l: f64, theta: f64, delta: f64) -> f64 {
    ((l - 1.0) + 2.0 * delta.cos()) - theta.cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    RightTurnFirst,
    LeftTurnFirst,
    OnSigmaR,
    OnSigmaL,
    OnDeltaLine,
    Interior,
}

impl Region {
    pub const ALL: [Region; 6] = [
        Region::RightTurnFirst,
        Region::LeftTurnFirst,
        Region::OnSigmaR,
        Region::OnSigmaL,
        Region::OnDeltaLine,
        Region::Interior,
    ];

    /// Label of the point reflected through the origin.
    pub fn mirror(self) -> Region {
        match self {
            Region::RightTurnFirst => Region::LeftTurnFirst,
            Region::LeftTurnFirst => Region::RightTurnFirst,
            Region::OnSigmaR => Region::OnSigmaL,
            Region::OnSigmaL => Region::OnSigmaR,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::RightTurnFirst => "RightTurnFirst",
            Region::LeftTurnFirst => "LeftTurnFirst",
            Region::OnSigmaR => "OnSigmaR",
            Region::OnSigmaL => "OnSigmaL",
            Region::OnDeltaLine => "OnDeltaLine",
            Region::Interior => "Interior",
        }
    }
}

/// Membership of `(l, theta)` in each region of the partition, in the order
/// of [`Region::ALL`]. The predicates are mutually exclusive by construction.
pub fn region_memberships(l: f64, theta: f64, delta: f64, band: f64) -> [bool; 6] {
    let d = delta.abs();
    let sr = sigma_r(l, theta);
    let sl = sigma_l(l, theta);
    let origin = l.abs() <= band && theta.abs() <= band;
    let on_r = !origin && sr.abs() <= band && theta >= 0.0;
    let on_l = !origin && sl.abs() <= band && theta <= 0.0;
    let on_curve = on_r || on_l;
    let on_line = origin
        || (!on_curve
            && ((l > 0.0 && sl > band && (theta + d).abs() <= band)
                || (l < 0.0 && sr < -band && (theta - d).abs() <= band)));
    let rest = !on_curve && !on_line;
    let rtf = rest && sl > 0.0 && sigma_p(l, theta, d) < 0.0 && theta > -d;
    let ltf = rest && sr < 0.0 && sigma_n(l, theta, d) > 0.0 && theta < d;
    let interior = rest && !rtf && !ltf;
    [rtf, ltf, on_r, on_l, on_line, interior]
}

/// Labels a normalized state. The origin, where all curves meet, counts as
/// on the delta line.
pub fn classify(l: f64, theta: f64, delta: f64, band: f64) -> Region {
    let m = region_memberships(l, theta, delta, band);
    Region::ALL
        .iter()
        .zip(m)
        .find_map(|(r, hit)| hit.then_some(*r))
        .unwrap_or(Region::Interior)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Approach,
    Track,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Approach => "Approach",
            Phase::Track => "Track",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HybridState {
    Turning,
    Straight,
    Controlled,
    Stopped,
}

impl HybridState {
    pub fn name(self) -> &'static str {
        match self {
            HybridState::Turning => "Turning",
            HybridState::Straight => "Straight",
            HybridState::Controlled => "Controlled",
            HybridState::Stopped => "Stopped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Approach angle magnitude, rad.
    pub delta_approach: f64,
    /// Tracking reference.
    pub delta_profile: DeltaProfile,
    /// Half-width of the dead band around `theta = delta(l)`, rad.
    pub eps_theta: f64,
    /// Thickness of the boundary curves.
    pub eps_b: f64,
    /// Switch to tracking when `|l| <= threshold_l`.
    pub threshold_l: f64,
    /// Return to approach when `|l| > re_approach_factor * threshold_l`.
    pub re_approach_factor: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            delta_approach: FRAC_PI_3,
            delta_profile: DeltaProfile::default(),
            eps_theta: 0.02,
            eps_b: 1e-3,
            threshold_l: 1.0,
            re_approach_factor: 2.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.delta_approach.is_finite() && self.delta_approach.abs() < PI) {
            return Err(ControllerError::InvalidSetting("delta_approach"));
        }
        if !(self.eps_theta.is_finite() && self.eps_theta > 0.0) {
            return Err(ControllerError::InvalidSetting("eps_theta"));
        }
        if !(self.eps_b.is_finite() && self.eps_b > 0.0) {
            return Err(ControllerError::InvalidSetting("eps_b"));
        }
        if !(self.threshold_l.is_finite() && self.threshold_l > 0.0) {
            return Err(ControllerError::InvalidSetting("threshold_l"));
        }
        if !(self.re_approach_factor.is_finite() && self.re_approach_factor >= 1.0) {
            return Err(ControllerError::InvalidSetting("re_approach_factor"));
        }
        self.delta_profile.validate()
    }
}

/// Discrete controller memory carried between control steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub phase: Phase,
    pub hybrid_state: HybridState,
    pub last_maneuver: BrakeCommand,
    /// Heading the current approach turn is aiming for.
    pub target_heading: f64,
    /// `(sigma_L, sigma_R)` at the previous step, for crossing detection.
    pub prev_sigma: Option<(f64, f64)>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            phase: Phase::Approach,
            hybrid_state: HybridState::Straight,
            last_maneuver: BrakeCommand::GoStraight,
            target_heading: 0.0,
            prev_sigma: None,
        }
    }
}

impl ControllerState {
    pub fn stopped(mut self) -> Self {
        self.hybrid_state = HybridState::Stopped;
        self.last_maneuver = BrakeCommand::Stop;
        self
    }
}

/// Approach to Track when `|l| <= threshold`, back only past
/// `factor * threshold`.
pub fn phase_switch(
    l: f64,
    ctrl: &ControllerState,
    threshold: f64,
    factor: f64,
) -> ControllerState {
    let mut next = *ctrl;
    next.phase = match ctrl.phase {
        Phase::Approach if l.abs() <= threshold => Phase::Track,
        Phase::Track if l.abs() > factor * threshold => Phase::Approach,
        p => p,
    };
    if next.phase != ctrl.phase {
        next.hybrid_state = HybridState::Straight;
        next.prev_sigma = None;
    }
    next
}

/// `|delta'(l) sin(delta(l))| <= 1` on a dense grid, i.e. the reference can be
/// followed with turns of radius `R`. Returns the smallest `|l|` where it
/// fails, or infinity.
pub fn curvature_feasible(profile: &DeltaProfile) -> (bool, f64) {
    const STEP: f64 = 1e-4;
    const EXTENT: f64 = 20.0;
    let n = (EXTENT / STEP) as usize;
    for i in 0..=n {
        let l = i as f64 * STEP;
        let rate = (profile.derivative(l) * profile.eval(l).sin()).abs();
        if rate > 1.0 {
            return (false, l);
        }
    }
    (true, f64::INFINITY)
}

/// One control decision.
///
/// `frenet` must be finite; `turning_radius` normalizes the lateral offset.
/// The automaton never emits `Stop` itself; it only repeats it once the
/// state is latched as stopped.
pub fn select_maneuver(
    frenet: &FrenetState,
    ctrl: &ControllerState,
    cfg: &ControllerConfig,
    turning_radius: f64,
) -> Result<(BrakeCommand, ControllerState), ControllerError> {
    if !frenet.is_finite() {
        return Err(ControllerError::ProjectionLost);
    }
    if ctrl.hybrid_state == HybridState::Stopped {
        return Ok((BrakeCommand::Stop, *ctrl));
    }
    let l = frenet.l_norm(turning_radius);
    let theta = frenet.theta_tilde;
    let mut next = phase_switch(l, ctrl, cfg.threshold_l, cfg.re_approach_factor);

    let (command, hybrid) = if l.abs() <= cfg.eps_b && theta.abs() <= cfg.eps_b {
        (BrakeCommand::GoStraight, HybridState::Controlled)
    } else {
        match next.phase {
            Phase::Approach => approach_step(l, theta, &mut next, cfg),
            Phase::Track => track_step(l, theta, cfg),
        }
    };
    next.hybrid_state = hybrid;
    next.last_maneuver = command;
    next.prev_sigma = Some((sigma_l(l, theta), sigma_r(l, theta)));
    Ok((command, next))
}

fn track_step(l: f64, theta: f64, cfg: &ControllerConfig) -> (BrakeCommand, HybridState) {
    let error = theta - cfg.delta_profile.eval(l);
    if error > cfg.eps_theta {
        let landing = sigma_r(l, theta).abs() <= cfg.eps_b && theta >= 0.0;
        (
            BrakeCommand::TurnRight,
            if landing {
                HybridState::Controlled
            } else {
                HybridState::Turning
            },
        )
    } else if error < -cfg.eps_theta {
        let landing = sigma_l(l, theta).abs() <= cfg.eps_b && theta <= 0.0;
        (
            BrakeCommand::TurnLeft,
            if landing {
                HybridState::Controlled
            } else {
                HybridState::Turning
            },
        )
    } else {
        (BrakeCommand::GoStraight, HybridState::Straight)
    }
}

fn approach_step(
    l: f64,
    theta: f64,
    ctrl: &mut ControllerState,
    cfg: &ControllerConfig,
) -> (BrakeCommand, HybridState) {
    use BrakeCommand::*;
    let d = cfg.delta_approach.abs();
    let band = cfg.eps_b;
    let sl = sigma_l(l, theta);
    let sr = sigma_r(l, theta);

    // final turn in progress: keep turning until the heading error changes sign
    if ctrl.hybrid_state == HybridState::Controlled {
        match ctrl.last_maneuver {
            TurnLeft if theta < 0.0 => return (TurnLeft, HybridState::Controlled),
            TurnRight if theta > 0.0 => return (TurnRight, HybridState::Controlled),
            _ => {}
        }
    }

    // landing curve crossed since the previous step
    if let Some((prev_sl, prev_sr)) = ctrl.prev_sigma {
        if prev_sl > band && sl <= band && theta <= 0.0 {
            return (TurnLeft, HybridState::Controlled);
        }
        if prev_sr < -band && sr >= -band && theta >= 0.0 {
            return (TurnRight, HybridState::Controlled);
        }
    }

    match ctrl.hybrid_state {
        HybridState::Turning => {
            let target = ctrl.target_heading;
            match ctrl.last_maneuver {
                TurnRight if theta > target => return (TurnRight, HybridState::Turning),
                TurnLeft if theta < target => return (TurnLeft, HybridState::Turning),
                TurnRight | TurnLeft if heading_toward_landing(l, theta, sl, sr, band) => {
                    return (GoStraight, HybridState::Straight)
                }
                _ => {}
            }
        }
        HybridState::Straight if heading_toward_landing(l, theta, sl, sr, band) => {
            return (GoStraight, HybridState::Straight)
        }
        _ => {}
    }

    match classify(l, theta, d, band) {
        Region::OnSigmaL => (TurnLeft, HybridState::Controlled),
        Region::OnSigmaR => (TurnRight, HybridState::Controlled),
        Region::OnDeltaLine => (GoStraight, HybridState::Straight),
        Region::RightTurnFirst => {
            ctrl.target_heading = -d;
            (TurnRight, HybridState::Turning)
        }
        Region::LeftTurnFirst => {
            ctrl.target_heading = d;
            (TurnLeft, HybridState::Turning)
        }
        Region::Interior => {
            let target = -signum0(l) * d;
            ctrl.target_heading = target;
            if theta > target {
                (TurnRight, HybridState::Turning)
            } else if theta < target {
                (TurnLeft, HybridState::Turning)
            } else {
                (GoStraight, HybridState::Straight)
            }
        }
    }
}

/// Whether going straight keeps approaching the landing curve of this side.
fn heading_toward_landing(l: f64, theta: f64, sl: f64, sr: f64, band: f64) -> bool {
    (l > 0.0 && theta < 0.0 && sl > band) || (l < 0.0 && theta > 0.0 && sr < -band)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frenet(l_norm: f64, theta: f64, radius: f64) -> FrenetState {
        FrenetState {
            s: 1.0,
            l: l_norm * radius,
            theta_tilde: theta,
        }
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_r(0.0, 0.0), 0.0);
        assert_eq!(sigma_l(0.0, 0.0), 0.0);
        assert!((sigma_n(0.0, 0.0, FRAC_PI_3) - 1.0).abs() < 1e-15);
        assert!((sigma_p(2.0, FRAC_PI_2, FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert_eq!(sigma(Boundary::P, 2.0, 0.3, 0.4), sigma_p(2.0, 0.3, 0.4));
    }

    #[test]
    fn turns_keep_their_sigma_constant() {
        // dl/dtheta = -sin(theta) on a right turn, +sin(theta) on a left turn
        let (mut l, mut t) = (0.4, 1.2);
        let h = 1e-5;
        let r0 = sigma_r(l, t);
        for _ in 0..100_000 {
            let k1 = t.sin();
            let k2 = (t - 0.5 * h).sin();
            l += h * (k1 + 4.0 * k2 + (t - h).sin()) / 6.0;
            t -= h;
        }
        assert!((sigma_r(l, t) - r0).abs() < 1e-10);
        let (mut l, mut t) = (0.4, -2.0);
        let s0 = sigma_l(l, t);
        for _ in 0..100_000 {
            l += h * (t.sin() + 4.0 * (t + 0.5 * h).sin() + (t + h).sin()) / 6.0;
            t += h;
        }
        assert!((sigma_l(l, t) - s0).abs() < 1e-10);
    }

    #[test]
    fn origin_counts_as_on_delta_line() {
        for delta in [0.0, 0.3, FRAC_PI_3, -1.0] {
            assert_eq!(classify(0.0, 0.0, delta, 1e-3), Region::OnDeltaLine);
        }
    }

    #[test]
    fn right_turn_first_region() {
        // sigma_L > 0 and sigma_P < 0 with theta > -delta
        let (l, t, d) = (0.3, 0.2, FRAC_PI_3);
        assert!(sigma_l(l, t) > 0.0 && sigma_p(l, t, d) < 0.0);
        assert_eq!(classify(l, t, d, 1e-3), Region::RightTurnFirst);
        assert_eq!(classify(-l, -t, -d, 1e-3), Region::LeftTurnFirst);
        // far away with zero heading error needs the full sequence
        assert_eq!(classify(4.0, 0.0, d, 1e-3), Region::Interior);
        assert_eq!(classify(4.0, -d, d, 1e-3), Region::OnDeltaLine);
        assert_eq!(
            classify(1.0 - (0.5f64).cos(), -0.5, d, 1e-3),
            Region::OnSigmaL
        );
    }

    #[test]
    fn memberships_are_exclusive() {
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20_000 {
            let l = 8.0 * next() - 4.0;
            let t = 2.0 * PI * next() - PI;
            let d = 2.0 * PI * next() - PI;
            let m = region_memberships(l, t, d, 0.05);
            assert_eq!(m.iter().filter(|&&b| b).count(), 1);
        }
    }

    #[test]
    fn profile_shapes() {
        let tanh = DeltaProfile::default();
        assert_eq!(tanh.eval(0.0), 0.0);
        assert!(tanh.eval(1.0) < 0.0 && tanh.eval(-1.0) > 0.0);
        assert_eq!(tanh.eval(-0.7), -tanh.eval(0.7));
        let h = 1e-6;
        let fd = (tanh.eval(0.3 + h) - tanh.eval(0.3 - h)) / (2.0 * h);
        assert!((fd - tanh.derivative(0.3)).abs() < 1e-8);

        let constant = DeltaProfile::Constant { delta: 1.0 };
        assert_eq!(constant.eval(2.0), -1.0);
        assert_eq!(constant.eval(-2.0), 1.0);

        let custom = DeltaProfile::Custom {
            points: vec![(0.0, 0.0), (1.0, -0.5), (2.0, -1.0)],
        };
        custom.validate().unwrap();
        assert!((custom.eval(1.5) + 0.75).abs() < 1e-15);
        assert!((custom.eval(-1.5) - 0.75).abs() < 1e-15);
        assert_eq!(custom.eval(9.0), -1.0);
        assert_eq!(custom.derivative(1.5), -0.5);

        let wrong_sign = DeltaProfile::Custom {
            points: vec![(0.0, 0.0), (1.0, 0.5)],
        };
        assert!(wrong_sign.validate().is_err());
        assert!(DeltaProfile::Tanh {
            amplitude: 4.0,
            gain: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn feasibility() {
        assert_eq!(
            curvature_feasible(&DeltaProfile::Constant { delta: 1.0 }),
            (true, f64::INFINITY)
        );
        let (ok, l_hat) = curvature_feasible(&DeltaProfile::default());
        assert!(ok && l_hat.is_infinite());
        let (ok, l_hat) = curvature_feasible(&DeltaProfile::Tanh {
            amplitude: FRAC_PI_2,
            gain: 10.0,
        });
        // first failure from a 1e-7 grid scan of the same expression
        assert!(!ok);
        assert!((l_hat - 0.004065).abs() < 2e-4, "{l_hat}");
    }

    #[test]
    fn phase_switch_hysteresis() {
        let approach = ControllerState::default();
        assert_eq!(phase_switch(0.5, &approach, 1.0, 2.0).phase, Phase::Track);
        let track = ControllerState {
            phase: Phase::Track,
            ..Default::default()
        };
        assert_eq!(phase_switch(1.05, &track, 1.0, 2.0).phase, Phase::Track);
        assert_eq!(phase_switch(2.5, &track, 1.0, 2.0).phase, Phase::Approach);
        assert_eq!(phase_switch(-2.5, &track, 1.0, 2.0).phase, Phase::Approach);
    }

    #[test]
    fn far_state_turns_right_first() {
        let cfg = ControllerConfig::default();
        let (cmd, next) = select_maneuver(
            &frenet(4.0, 0.0, 0.3),
            &ControllerState::default(),
            &cfg,
            0.3,
        )
        .unwrap();
        assert_eq!(cmd, BrakeCommand::TurnRight);
        assert_eq!(next.phase, Phase::Approach);
        assert_eq!(next.hybrid_state, HybridState::Turning);
    }

    #[test]
    fn on_manifold_goes_straight() {
        let cfg = ControllerConfig::default();
        let track = ControllerState {
            phase: Phase::Track,
            ..Default::default()
        };
        let l = 0.6;
        let theta = cfg.delta_profile.eval(l);
        let (cmd, next) = select_maneuver(&frenet(l, theta, 0.3), &track, &cfg, 0.3).unwrap();
        assert_eq!(cmd, BrakeCommand::GoStraight);
        assert_eq!(next.hybrid_state, HybridState::Straight);
        let (cmd, _) = select_maneuver(&frenet(l, theta + 0.05, 0.3), &track, &cfg, 0.3).unwrap();
        assert_eq!(cmd, BrakeCommand::TurnRight);
        let (cmd, _) = select_maneuver(&frenet(l, theta - 0.05, 0.3), &track, &cfg, 0.3).unwrap();
        assert_eq!(cmd, BrakeCommand::TurnLeft);
    }

    #[test]
    fn origin_is_controlled_complete() {
        let cfg = ControllerConfig::default();
        for phase in [Phase::Approach, Phase::Track] {
            let ctrl = ControllerState {
                phase,
                ..Default::default()
            };
            let (cmd, next) = select_maneuver(&frenet(0.0, 0.0, 0.3), &ctrl, &cfg, 0.3).unwrap();
            assert_eq!(cmd, BrakeCommand::GoStraight);
            assert_eq!(next.hybrid_state, HybridState::Controlled);
        }
    }

    #[test]
    fn non_finite_state_is_projection_lost() {
        let cfg = ControllerConfig::default();
        let bad = FrenetState {
            s: 0.0,
            l: f64::NAN,
            theta_tilde: 0.0,
        };
        assert_eq!(
            select_maneuver(&bad, &ControllerState::default(), &cfg, 0.3),
            Err(ControllerError::ProjectionLost)
        );
    }

    #[test]
    fn stopped_is_latched() {
        let cfg = ControllerConfig::default();
        let ctrl = ControllerState::default().stopped();
        let (cmd, next) = select_maneuver(&frenet(2.0, 0.3, 0.3), &ctrl, &cfg, 0.3).unwrap();
        assert_eq!(cmd, BrakeCommand::Stop);
        assert_eq!(next, ctrl);
    }
}
