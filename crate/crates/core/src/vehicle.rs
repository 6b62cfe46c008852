//! Walker dynamics: unicycle body, rear-wheel torques and quantized brakes.
//!
//! Two fidelity levels are provided. [`step_kinematic`] imposes the user's
//! forward speed and moves along exact lines and circles of radius
//! `R = d / 2`. [`step_dynamic`] integrates forces and torques with a
//! fixed-step RK4.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::{wrap_angle, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("vehicle parameter `{0}` must be finite and positive")]
    InvalidParameter(&'static str),
}

/// Physical parameters, SI units. Defaults are plausible rollator values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Mass, kg.
    #[serde(rename = "m")]
    pub mass: f64,
    /// Yaw inertia, kg m^2.
    #[serde(rename = "J")]
    pub yaw_inertia: f64,
    /// Wheel inertia, kg m^2.
    #[serde(rename = "J_w")]
    pub wheel_inertia: f64,
    /// Rear axle length, m.
    #[serde(rename = "d")]
    pub axle_length: f64,
    /// Wheel radius, m.
    #[serde(rename = "r")]
    pub wheel_radius: f64,
    /// Rolling viscous coefficient, N m s.
    #[serde(rename = "b_w")]
    pub rolling_friction: f64,
    /// Full-brake viscous coefficient, N m s.
    #[serde(rename = "b_max")]
    pub max_brake: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 20.0,
            yaw_inertia: 1.0,
            wheel_inertia: 0.01,
            axle_length: 0.6,
            wheel_radius: 0.1,
            rolling_friction: 0.05,
            max_brake: 50.0,
        }
    }
}

impl VehicleParams {
    /// Radius of the circle traced with one wheel locked.
    pub fn turning_radius(&self) -> f64 {
        self.axle_length / 2.0
    }

    /// Time constant of a free wheel spinning down against the full brake.
    pub fn brake_time_constant(&self) -> f64 {
        self.wheel_inertia / self.max_brake
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let fields = [
            ("m", self.mass),
            ("J", self.yaw_inertia),
            ("J_w", self.wheel_inertia),
            ("d", self.axle_length),
            ("r", self.wheel_radius),
            ("b_w", self.rolling_friction),
            ("b_max", self.max_brake),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(VehicleError::InvalidParameter(name));
            }
        }
        Ok(())
    }

    /// Wheel rates `(right, left)` for body rates `(v, omega)`.
    pub fn wheel_rates(&self, v: f64, omega: f64) -> (f64, f64) {
        let half = omega * self.axle_length / 2.0;
        (
            (v + half) / self.wheel_radius,
            (v - half) / self.wheel_radius,
        )
    }

    /// Body rates `(v, omega)` for wheel rates `(right, left)`.
    pub fn body_rates(&self, right: f64, left: f64) -> (f64, f64) {
        (
            self.wheel_radius * (right + left) / 2.0,
            self.wheel_radius * (right - left) / self.axle_length,
        )
    }
}

/// The four admissible brake actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BrakeCommand {
    GoStraight,
    TurnRight,
    TurnLeft,
    Stop,
}

impl BrakeCommand {
    pub const ALL: [BrakeCommand; 4] = [
        BrakeCommand::GoStraight,
        BrakeCommand::TurnRight,
        BrakeCommand::TurnLeft,
        BrakeCommand::Stop,
    ];

    /// Whether the `(right, left)` brakes are fully engaged.
    pub fn engaged(self) -> (bool, bool) {
        match self {
            BrakeCommand::GoStraight => (false, false),
            BrakeCommand::TurnRight => (true, false),
            BrakeCommand::TurnLeft => (false, true),
            BrakeCommand::Stop => (true, true),
        }
    }

    /// Per-wheel settings `(right, left)`.
    pub fn wheel_brakes(self, params: &VehicleParams) -> (WheelBrake, WheelBrake) {
        let (r, l) = self.engaged();
        (WheelBrake::new(r, params), WheelBrake::new(l, params))
    }

    /// Body yaw rate produced at forward speed `v`.
    pub fn yaw_rate(self, v: f64, turning_radius: f64) -> f64 {
        match self {
            BrakeCommand::TurnRight => -v / turning_radius,
            BrakeCommand::TurnLeft => v / turning_radius,
            _ => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BrakeCommand::GoStraight => "GoStraight",
            BrakeCommand::TurnRight => "TurnRight",
            BrakeCommand::TurnLeft => "TurnLeft",
            BrakeCommand::Stop => "Stop",
        }
    }
}

/// Brake setting of one wheel: no brake `(0, 0)` or full brake `(b_max, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelBrake {
    /// Viscous coefficient acting while the wheel turns.
    pub viscous: f64,
    /// Fraction of the user torque cancelled while the wheel is at rest.
    pub hold: f64,
}

impl WheelBrake {
    fn new(engaged: bool, params: &VehicleParams) -> Self {
        if engaged {
            Self {
                viscous: params.max_brake,
                hold: 1.0,
            }
        } else {
            Self {
                viscous: 0.0,
                hold: 0.0,
            }
        }
    }

    pub fn is_engaged(&self) -> bool {
        self.hold > 0.0
    }
}

/// Force along the heading and torque about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: f64,
    pub torque: f64,
}

pub fn torques_to_wrench(tau_r: f64, tau_l: f64, params: &VehicleParams) -> Wrench {
    let r = params.wheel_radius;
    Wrench {
        force: (tau_r + tau_l) / r,
        torque: (tau_r - tau_l) * params.axle_length / (2.0 * r),
    }
}

pub fn wrench_to_torques(wrench: Wrench, params: &VehicleParams) -> (f64, f64) {
    let r = params.wheel_radius;
    let sum = wrench.force * r;
    let diff = 2.0 * r * wrench.torque / params.axle_length;
    ((sum + diff) / 2.0, (sum - diff) / 2.0)
}

/// Net torque on a wheel given the user torque, the brake setting and the
/// wheel rate. A wheel at rest is held against `hold` of the user torque.
pub fn effective_wheel_torque(
    tau_h: f64,
    brake: WheelBrake,
    alpha_dot: f64,
    params: &VehicleParams,
) -> f64 {
    if alpha_dot == 0.0 {
        (1.0 - brake.hold) * tau_h
    } else {
        tau_h - brake.viscous * alpha_dot - params.rolling_friction * alpha_dot
    }
}

/// Torques the user transmits to the `(right, left)` wheel hubs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UserInput {
    pub tau_r: f64,
    pub tau_l: f64,
}

impl UserInput {
    pub fn from_wrench(wrench: Wrench, params: &VehicleParams) -> Self {
        let (tau_r, tau_l) = wrench_to_torques(wrench, params);
        Self { tau_r, tau_l }
    }

    pub fn wrench(&self, params: &VehicleParams) -> Wrench {
        torques_to_wrench(self.tau_r, self.tau_l, params)
    }
}

/// How an engaged brake stops its wheel in dynamic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrakeTransient {
    /// The wheel locks at the start of the step and stays locked.
    #[default]
    Instant,
    /// The brake acts as a viscous torque `-b_max * alpha_dot` only.
    Viscous,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub alpha_dot_r: f64,
    pub alpha_dot_l: f64,
}

impl VehicleState {
    pub fn new(pose: Pose, v: f64, omega: f64, params: &VehicleParams) -> Self {
        let mut state = Self {
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            ..Default::default()
        };
        state.set_body_rates(v, omega, params);
        state
    }

    pub fn at_rest(pose: Pose) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            ..Default::default()
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.theta)
    }

    pub fn set_body_rates(&mut self, v: f64, omega: f64, params: &VehicleParams) {
        self.v = v;
        self.omega = omega;
        let (r, l) = params.wheel_rates(v, omega);
        self.alpha_dot_r = r;
        self.alpha_dot_l = l;
    }

    pub fn kinetic_energy(&self, params: &VehicleParams) -> f64 {
        0.5 * params.mass * self.v * self.v + 0.5 * params.yaw_inertia * self.omega * self.omega
    }
}

/// Moves along the exact line or circle selected by `command` at speed
/// `v_user` for `dt` seconds. `Stop` halts the vehicle in place.
pub fn step_kinematic(
    state: &VehicleState,
    command: BrakeCommand,
    v_user: f64,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState, VehicleError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(VehicleError::NonPositiveDt(dt));
    }
    let mut next = *state;
    if command == BrakeCommand::Stop {
        next.set_body_rates(0.0, 0.0, params);
        return Ok(next);
    }
    let v = v_user.max(0.0);
    let omega = command.yaw_rate(v, params.turning_radius());
    let turn = omega * dt;
    let half = 0.5 * turn;
    let chord = if half.abs() < 1e-8 {
        v * dt
    } else {
        2.0 * (v / omega) * half.sin()
    };
    let mid = state.theta + half;
    next.x = state.x + chord * mid.cos();
    next.y = state.y + chord * mid.sin();
    next.theta = wrap_angle(state.theta + turn);
    next.set_body_rates(v, omega, params);
    Ok(next)
}

#[derive(Debug, Clone, Copy)]
struct Body([f64; 5]);

impl Body {
    fn of(s: &VehicleState) -> Self {
        Body([s.x, s.y, s.theta, s.v, s.omega])
    }

    fn axpy(&self, h: f64, k: &Body) -> Body {
        let mut out = self.0;
        for (o, d) in out.iter_mut().zip(k.0) {
            *o += h * d;
        }
        Body(out)
    }
}

/// Which wheels are locked for the duration of a dynamic step.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Lock {
    Free,
    /// Yaw rate is tied to speed: `omega = sign * v / R`.
    OneWheel {
        sign: f64,
        free_is_right: bool,
    },
    Both,
}

fn body_derivative(
    b: &Body,
    command: BrakeCommand,
    lock: Lock,
    user: &UserInput,
    params: &VehicleParams,
) -> Body {
    let [_, _, theta, v, omega] = b.0;
    let (sin, cos) = theta.sin_cos();
    match lock {
        Lock::Free => {
            let (right, left) = command.wheel_brakes(params);
            let (ar, al) = params.wheel_rates(v, omega);
            let tau_r = effective_wheel_torque(user.tau_r, right, ar, params);
            let tau_l = effective_wheel_torque(user.tau_l, left, al, params);
            let w = torques_to_wrench(tau_r, tau_l, params);
            Body([
                v * cos,
                v * sin,
                omega,
                w.force / params.mass,
                w.torque / params.yaw_inertia,
            ])
        }
        Lock::OneWheel {
            sign,
            free_is_right,
        } => {
            // one degree of freedom: the locked wheel does no work
            let radius = params.turning_radius();
            let r = params.wheel_radius;
            let alpha_free = 2.0 * v / r;
            let tau_h = if free_is_right {
                user.tau_r
            } else {
                user.tau_l
            };
            let tau = tau_h - params.rolling_friction * alpha_free;
            let effective_mass = params.mass + params.yaw_inertia / (radius * radius);
            let accel = 2.0 * tau / (r * effective_mass);
            Body([
                v * cos,
                v * sin,
                sign * v / radius,
                accel,
                sign * accel / radius,
            ])
        }
        Lock::Both => Body([0.0; 5]),
    }
}

/// Integrates the body dynamics over `dt` with a single RK4 step.
///
/// With [`BrakeTransient::Instant`] engaged wheels lock at the start of the
/// step. The velocity jump is the inelastic projection onto the locked
/// motion in the kinetic-energy metric, so it never adds energy. Forward
/// speed is clamped at zero afterwards.
pub fn step_dynamic(
    state: &VehicleState,
    command: BrakeCommand,
    user: &UserInput,
    dt: f64,
    params: &VehicleParams,
    transient: BrakeTransient,
) -> Result<VehicleState, VehicleError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(VehicleError::NonPositiveDt(dt));
    }
    let radius = params.turning_radius();
    let (m, j) = (params.mass, params.yaw_inertia);
    let mut start = *state;
    let lock = match (transient, command.engaged()) {
        (BrakeTransient::Viscous, _) | (_, (false, false)) => Lock::Free,
        (BrakeTransient::Instant, (true, true)) => Lock::Both,
        (BrakeTransient::Instant, (right, _)) => {
            let sign = if right { -1.0 } else { 1.0 };
            let v = (m * state.v + sign * j * state.omega / radius) / (m + j / (radius * radius));
            start.v = v.max(0.0);
            start.omega = sign * start.v / radius;
            Lock::OneWheel {
                sign,
                free_is_right: !right,
            }
        }
    };
    if lock == Lock::Both {
        let mut next = *state;
        next.set_body_rates(0.0, 0.0, params);
        return Ok(next);
    }

    let y0 = Body::of(&start);
    let f = |b: &Body| body_derivative(b, command, lock, user, params);
    let k1 = f(&y0);
    let k2 = f(&y0.axpy(dt / 2.0, &k1));
    let k3 = f(&y0.axpy(dt / 2.0, &k2));
    let k4 = f(&y0.axpy(dt, &k3));
    let mut y = y0.0;
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
    }

    let mut next = *state;
    next.x = y[0];
    next.y = y[1];
    next.theta = wrap_angle(y[2]);
    let (mut v, mut omega) = (y[3], y[4]);
    if let Lock::OneWheel { sign, .. } = lock {
        v = v.max(0.0);
        omega = sign * v / radius;
    } else {
        v = v.max(0.0);
    }
    next.set_body_rates(v, omega, params);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn params() -> VehicleParams {
        VehicleParams {
            wheel_radius: 0.1,
            axle_length: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn wrench_examples() {
        let p = params();
        let w = torques_to_wrench(1.0, 1.0, &p);
        assert!((w.force - 20.0).abs() < 1e-12 && w.torque == 0.0);
        let w = torques_to_wrench(1.0, -1.0, &p);
        assert!(w.force == 0.0 && (w.torque - 5.0).abs() < 1e-12);
    }

    #[test]
    fn wheel_torque_examples() {
        let p = VehicleParams {
            rolling_friction: 0.1,
            ..Default::default()
        };
        let (free, braked) = BrakeCommand::TurnLeft.wheel_brakes(&p);
        assert_eq!(effective_wheel_torque(2.0, free, 0.0, &p), 2.0);
        assert_eq!(effective_wheel_torque(2.0, braked, 0.0, &p), 0.0);
        assert!((effective_wheel_torque(2.0, free, 3.0, &p) - 1.7).abs() < 1e-12);
        assert!(effective_wheel_torque(2.0, braked, 3.0, &p) < -140.0);
    }

    #[test]
    fn command_expansion() {
        let p = VehicleParams::default();
        let (r, l) = BrakeCommand::TurnRight.wheel_brakes(&p);
        assert_eq!(
            (r.viscous, r.hold, l.viscous, l.hold),
            (p.max_brake, 1.0, 0.0, 0.0)
        );
        let (r, l) = BrakeCommand::Stop.wheel_brakes(&p);
        assert!(r.is_engaged() && l.is_engaged());
        let (r, l) = BrakeCommand::GoStraight.wheel_brakes(&p);
        assert!(!r.is_engaged() && !l.is_engaged());
    }

    #[test]
    fn kinematic_examples() {
        let p = VehicleParams {
            axle_length: 1.0,
            ..Default::default()
        };
        let s0 = VehicleState::at_rest(Pose::default());
        let s = step_kinematic(&s0, BrakeCommand::GoStraight, 1.0, 1.0, &p).unwrap();
        assert!((s.x - 1.0).abs() < 1e-15 && s.y == 0.0 && s.theta == 0.0);

        let s = step_kinematic(&s0, BrakeCommand::TurnLeft, 1.0, FRAC_PI_4, &p).unwrap();
        assert!((s.theta - FRAC_PI_2).abs() < 1e-15);
        assert!((s.x - 0.5).abs() < 1e-15 && (s.y - 0.5).abs() < 1e-15);

        let moving = VehicleState::new(Pose::new(1.0, 2.0, 0.3), 1.0, 0.2, &p);
        let s = step_kinematic(&moving, BrakeCommand::Stop, 1.0, 7.0, &p).unwrap();
        assert_eq!(s.pose(), moving.pose());
        assert_eq!((s.v, s.omega), (0.0, 0.0));
        assert_eq!(
            step_kinematic(&moving, BrakeCommand::Stop, 1.0, 0.0, &p),
            Err(VehicleError::NonPositiveDt(0.0))
        );
    }

    #[test]
    fn turn_right_is_clockwise() {
        let p = VehicleParams::default();
        let s0 = VehicleState::at_rest(Pose::default());
        let s = step_kinematic(&s0, BrakeCommand::TurnRight, 1.0, 0.1, &p).unwrap();
        assert!(s.theta < 0.0 && s.omega < 0.0 && s.y < 0.0);
    }

    #[test]
    fn full_circle_closes() {
        let p = VehicleParams::default();
        let n = 157;
        let dt = 2.0 * PI * p.turning_radius() / n as f64;
        let mut s = VehicleState::at_rest(Pose::new(0.7, -0.2, 1.1));
        for _ in 0..n {
            s = step_kinematic(&s, BrakeCommand::TurnRight, 1.0, dt, &p).unwrap();
        }
        assert!((s.x - 0.7).abs().max((s.y + 0.2).abs()) < 1e-9);
    }

    #[test]
    fn stop_is_idempotent() {
        let p = VehicleParams::default();
        let s0 = VehicleState::new(Pose::new(1.0, 1.0, 1.0), 0.8, 0.0, &p);
        let once = step_kinematic(&s0, BrakeCommand::Stop, 0.8, 0.02, &p).unwrap();
        let twice = step_kinematic(&once, BrakeCommand::Stop, 0.8, 0.02, &p).unwrap();
        assert_eq!(once, twice);
        let user = UserInput::default();
        let once = step_dynamic(
            &s0,
            BrakeCommand::Stop,
            &user,
            0.01,
            &p,
            BrakeTransient::Instant,
        )
        .unwrap();
        let twice = step_dynamic(
            &once,
            BrakeCommand::Stop,
            &user,
            0.01,
            &p,
            BrakeTransient::Instant,
        )
        .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn free_acceleration_from_rest() {
        // no friction: v(T) = 2 tau T / (r m)
        let p = VehicleParams {
            rolling_friction: 1e-300,
            ..Default::default()
        };
        let user = UserInput {
            tau_r: 0.3,
            tau_l: 0.3,
        };
        let mut s = VehicleState::at_rest(Pose::default());
        let dt = 1e-3;
        for _ in 0..2000 {
            s = step_dynamic(
                &s,
                BrakeCommand::GoStraight,
                &user,
                dt,
                &p,
                BrakeTransient::Instant,
            )
            .unwrap();
        }
        let expected = 2.0 * 0.3 * 2.0 / (p.wheel_radius * p.mass);
        assert!((s.v - expected).abs() < 1e-9, "{} vs {}", s.v, expected);
        assert!(s.omega.abs() < 1e-12);
    }

    #[test]
    fn locked_wheel_turns_on_radius() {
        let p = VehicleParams::default();
        let user = UserInput {
            tau_r: 0.5,
            tau_l: 0.5,
        };
        let s0 = VehicleState::new(Pose::default(), 1.0, 0.0, &p);
        let s = step_dynamic(
            &s0,
            BrakeCommand::TurnLeft,
            &user,
            1e-3,
            &p,
            BrakeTransient::Instant,
        )
        .unwrap();
        assert!((s.omega - s.v / p.turning_radius()).abs() < 1e-12);
        assert!(s.alpha_dot_l.abs() < 1e-12);
        let (v, w) = p.body_rates(s.alpha_dot_r, s.alpha_dot_l);
        assert!((v - s.v).abs() < 1e-12 && (w - s.omega).abs() < 1e-12);
    }

    #[test]
    fn braking_to_rest_is_monotone() {
        let p = VehicleParams::default();
        let user = UserInput::default();
        let mut s = VehicleState::new(Pose::default(), 1.2, 0.0, &p);
        let mut last = s.v;
        for _ in 0..200 {
            s = step_dynamic(
                &s,
                BrakeCommand::Stop,
                &user,
                1e-3,
                &p,
                BrakeTransient::Viscous,
            )
            .unwrap();
            assert!(s.v <= last && s.v >= 0.0);
            last = s.v;
        }
        assert!(s.v < 1e-6);
        // displacement bounded by v0 times the settling time
        assert!(s.x < 1.2 * 0.2);
    }
}
