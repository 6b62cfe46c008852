//! Closed-loop scenario execution and parameter sweeps.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analysis::{lyapunov, summarize, RunSummary};
use crate::controller::{
    select_maneuver, ControllerConfig, ControllerState, DeltaProfile, HybridState, Phase,
};
use crate::path::{FrenetState, Path, PathSpec, Pose};
use crate::vehicle::{
    step_dynamic, step_kinematic, BrakeCommand, BrakeTransient, UserInput, VehicleParams,
    VehicleState,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("empty sweep grid")]
    EmptyGrid,
    #[error("sweep override `{key}` failed: {reason}")]
    Override { key: String, reason: String },
}

fn invalid(reason: impl Into<String>) -> SimError {
    SimError::ScenarioInvalid(reason.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Kinematic,
    Dynamic,
}

/// What the walker's user does. Kinematic mode uses `speed`; dynamic mode
/// applies the wheel torques `[right, left]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserModel {
    pub speed: f64,
    pub torque: Option<[f64; 2]>,
    /// Half-width of the uniform perturbation added to speed or torques.
    pub noise: f64,
}

impl Default for UserModel {
    fn default() -> Self {
        Self {
            speed: 1.0,
            torque: None,
            noise: 0.0,
        }
    }
}

fn default_dt_control() -> f64 {
    0.02
}

fn default_dt_physics() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub path: PathSpec,
    pub initial_pose: Pose,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub user: UserModel,
    #[serde(default = "default_dt_control")]
    pub dt_control: f64,
    #[serde(default = "default_dt_physics")]
    pub dt_physics: f64,
    pub t_max: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub brake_transient: BrakeTransient,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, SimError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn from_value(value: Value) -> Result<Scenario, SimError> {
        serde_json::from_value(value).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("scenario serializes")
    }

    /// Builds the path and checks every setting. Curvature beyond `1/R` is
    /// reported as a warning since the run itself is still well defined.
    pub fn validate(&self) -> Result<(Path, Vec<String>), SimError> {
        let mut warnings = Vec::new();
        self.vehicle
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.controller
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        let path = Path::build(&self.path).map_err(|e| invalid(e.to_string()))?;
        if !self.initial_pose.is_finite() {
            return Err(invalid("initial pose is not finite"));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(invalid("t_max must be positive"));
        }
        if !(self.dt_control.is_finite() && self.dt_control > 0.0) {
            return Err(invalid("dt_control must be positive"));
        }
        if !(self.dt_physics.is_finite() && self.dt_physics > 0.0) {
            return Err(invalid("dt_physics must be positive"));
        }
        if self.dt_physics > self.dt_control {
            return Err(invalid("dt_physics exceeds dt_control"));
        }
        if !(self.user.speed.is_finite() && self.user.speed >= 0.0) {
            return Err(invalid("user speed must be non-negative"));
        }
        if !(self.user.noise.is_finite() && self.user.noise >= 0.0) {
            return Err(invalid("user noise must be non-negative"));
        }
        if self.mode == Mode::Dynamic {
            let ratio = self.dt_control / self.dt_physics;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return Err(invalid("dt_control is not a multiple of dt_physics"));
            }
            match self.user.torque {
                Some(t) if t.iter().all(|x| x.is_finite()) => {}
                Some(_) => return Err(invalid("user torque is not finite")),
                None => return Err(invalid("dynamic mode needs user.torque")),
            }
        }
        let radius = self.vehicle.turning_radius();
        for (i, seg) in path.segments().iter().enumerate() {
            if seg.max_abs_curvature() * radius > 1.0 + 1e-12 {
                warnings.push(format!(
                    "segment {i} ({:?}) curvature {:.4} exceeds 1/R = {:.4}",
                    seg.kind,
                    seg.max_abs_curvature(),
                    1.0 / radius
                ));
            }
        }
        Ok((path, warnings))
    }

    /// Number of physics sub-steps per control step in dynamic mode.
    pub fn substeps(&self) -> usize {
        (self.dt_control / self.dt_physics).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum HaltReason {
    TimeLimit,
    PathEnd,
    ProjectionLost(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub dt_control: f64,
    pub turning_radius: f64,
    pub eps_theta: f64,
    pub delta_profile: DeltaProfile,
    pub v_nominal: f64,
    pub max_path_curvature: f64,
    pub halt_reason: HaltReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub s: f64,
    pub l: f64,
    pub theta_tilde: f64,
    pub maneuver: BrakeCommand,
    pub hybrid_state: HybridState,
    pub phase: Phase,
    #[serde(rename = "V")]
    pub lyapunov: f64,
}

impl TraceRow {
    pub fn l_norm(&self, radius: f64) -> f64 {
        self.l / radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

pub const TRACE_HEADER: &str = "t,x,y,theta,v,omega,s,l,theta_tilde,maneuver,hybrid_state,phase,V";

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(160 * (self.rows.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            for v in [
                r.t,
                r.x,
                r.y,
                r.theta,
                r.v,
                r.omega,
                r.s,
                r.l,
                r.theta_tilde,
            ] {
                let _ = write!(out, "{v:.8e},");
            }
            let _ = writeln!(
                out,
                "{},{},{},{:.8e}",
                r.maneuver.name(),
                r.hybrid_state.name(),
                r.phase.name(),
                r.lyapunov
            );
        }
        out
    }
}

/// Runs one scenario to `t_max`, the end of the path, or a lost projection.
pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    let (path, _) = scenario.validate()?;
    let params = scenario.vehicle;
    let radius = params.turning_radius();
    let dt = scenario.dt_control;
    let end_s = path.total_length() - 1e-9;
    let steps = (scenario.t_max / dt + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let noise = scenario.user.noise;
    let mut perturb = |x: f64| {
        if noise > 0.0 {
            x + rng.gen_range(-noise..=noise)
        } else {
            x
        }
    };

    let mut state = VehicleState::new(scenario.initial_pose, scenario.user.speed, 0.0, &params);
    let mut ctrl = ControllerState::default();
    let mut hint = None;
    let mut last_frenet: Option<FrenetState> = None;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut halt = HaltReason::TimeLimit;

    for k in 0..=steps {
        let t = k as f64 * dt;
        let projected = path
            .frenet_project(&state.pose(), hint, radius)
            .map_err(|e| e.to_string());
        let decision = match projected {
            Ok(f) if f.s >= end_s => Err((f, HaltReason::PathEnd)),
            Ok(f) => match select_maneuver(&f, &ctrl, &scenario.controller, radius) {
                Ok((cmd, next)) => Ok((f, cmd, next)),
                Err(e) => Err((f, HaltReason::ProjectionLost(e.to_string()))),
            },
            Err(e) => {
                let f = last_frenet.unwrap_or(FrenetState {
                    s: f64::NAN,
                    l: f64::NAN,
                    theta_tilde: f64::NAN,
                });
                Err((f, HaltReason::ProjectionLost(e)))
            }
        };
        let (frenet, command) = match decision {
            Ok((f, cmd, next)) => {
                ctrl = next;
                (f, cmd)
            }
            Err((f, reason)) => {
                ctrl = ctrl.stopped();
                halt = reason;
                (f, BrakeCommand::Stop)
            }
        };
        if command == BrakeCommand::Stop {
            state.set_body_rates(0.0, 0.0, &params);
        }
        rows.push(TraceRow {
            t,
            x: state.x,
            y: state.y,
            theta: state.theta,
            v: state.v,
            omega: state.omega,
            s: frenet.s,
            l: frenet.l,
            theta_tilde: frenet.theta_tilde,
            maneuver: command,
            hybrid_state: ctrl.hybrid_state,
            phase: ctrl.phase,
            lyapunov: lyapunov(frenet.l_norm(radius), frenet.theta_tilde),
        });
        if halt != HaltReason::TimeLimit || k == steps {
            break;
        }
        hint = Some(frenet.s);
        last_frenet = Some(frenet);

        state = match scenario.mode {
            Mode::Kinematic => {
                let speed = perturb(scenario.user.speed).max(0.0);
                step_kinematic(&state, command, speed, dt, &params)
                    .map_err(|e| invalid(e.to_string()))?
            }
            Mode::Dynamic => {
                let [tr, tl] = scenario.user.torque.unwrap_or_default();
                let user = UserInput {
                    tau_r: perturb(tr),
                    tau_l: perturb(tl),
                };
                let h = dt / scenario.substeps() as f64;
                let mut s = state;
                for _ in 0..scenario.substeps() {
                    s = step_dynamic(&s, command, &user, h, &params, scenario.brake_transient)
                        .map_err(|e| invalid(e.to_string()))?;
                }
                s
            }
        };
    }

    Ok(Trace {
        meta: TraceMeta {
            dt_control: dt,
            turning_radius: radius,
            eps_theta: scenario.controller.eps_theta,
            delta_profile: scenario.controller.delta_profile.clone(),
            v_nominal: scenario.user.speed,
            max_path_curvature: path.max_abs_curvature(),
            halt_reason: halt,
        },
        rows,
    })
}

/// Sets `root.a.b.c = value`, creating intermediate objects.
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<(), String> {
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err("empty key component".into());
        }
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => return Err(format!("`{part}` is not inside an object")),
        };
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// One sweep axis. The keys `s0`, `l_norm` and `theta_tilde` place the start
/// relative to the path; any other key is a dotted scenario field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub axes: Vec<SweepAxis>,
    /// When set, `t_max = budget_factor * (V0 + 1) * R / v` per run.
    #[serde(default)]
    pub budget_factor: Option<f64>,
}

const START_KEYS: [&str; 3] = ["s0", "l_norm", "theta_tilde"];

impl SweepGrid {
    pub fn len(&self) -> usize {
        if self.axes.is_empty() {
            0
        } else {
            self.axes.iter().map(|a| a.values.len()).product()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in row-major order, first axis slowest.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.key.clone(), v));
                        q
                    })
                })
                .collect();
        }
        if self.axes.is_empty() {
            Vec::new()
        } else {
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub point: Vec<(String, f64)>,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

fn scenario_for_point(
    base: &Scenario,
    point: &[(String, f64)],
    budget_factor: Option<f64>,
) -> Result<Scenario, SimError> {
    let mut value = base.to_value();
    for (key, v) in point
        .iter()
        .filter(|(k, _)| !START_KEYS.contains(&k.as_str()))
    {
        set_dotted(&mut value, key, Value::from(*v)).map_err(|reason| SimError::Override {
            key: key.clone(),
            reason,
        })?;
    }
    let mut scenario = Scenario::from_value(value)?;
    let get = |name: &str| point.iter().find(|(k, _)| k == name).map(|(_, v)| *v);
    let radius = scenario.vehicle.turning_radius();
    let (l_norm, theta_tilde) = (
        get("l_norm").unwrap_or(0.0),
        get("theta_tilde").unwrap_or(0.0),
    );
    if START_KEYS.iter().any(|k| get(k).is_some()) {
        let path = Path::build(&scenario.path).map_err(|e| invalid(e.to_string()))?;
        let anchor = path
            .pose_at(get("s0").unwrap_or(0.0))
            .map_err(|e| invalid(e.to_string()))?;
        let mut pose = anchor.offset_left(l_norm * radius);
        pose.theta = anchor.theta + theta_tilde;
        scenario.initial_pose = pose;
    }
    if let Some(factor) = budget_factor {
        let v = scenario.user.speed.max(1e-3);
        scenario.t_max = factor * (lyapunov(l_norm, theta_tilde) + 1.0) * radius / v;
    }
    Ok(scenario)
}

fn run_point(base: &Scenario, point: &[(String, f64)], budget: Option<f64>) -> SweepResult {
    let outcome = scenario_for_point(base, point, budget).and_then(|s| run(&s));
    let (summary, error) = match outcome {
        Ok(trace) => {
            let error = match &trace.meta.halt_reason {
                HaltReason::ProjectionLost(e) => Some(e.clone()),
                _ => None,
            };
            (summarize(&trace).ok(), error)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    SweepResult {
        point: point.to_vec(),
        summary,
        error,
    }
}

/// Runs every grid point on `parallelism` threads. Results keep grid order
/// and per-run failures are recorded, not raised.
pub fn sweep(
    base: &Scenario,
    grid: &SweepGrid,
    parallelism: usize,
) -> Result<Vec<SweepResult>, SimError> {
    if grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    let points = grid.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| invalid(e.to_string()))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|p| run_point(base, p, grid.budget_factor))
            .collect()
    }))
}

pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::new();
    if let Some(first) = results.first() {
        for (k, _) in &first.point {
            let _ = write!(out, "{k},");
        }
    }
    out.push_str(
        "converged,t_converge,path_length,switch_count,max_V,final_V,lyapunov_violations,error\n",
    );
    for r in results {
        for (_, v) in &r.point {
            let _ = write!(out, "{v:.8e},");
        }
        match &r.summary {
            Some(s) => {
                let tc = s.t_converge.map(|t| format!("{t:.8e}")).unwrap_or_default();
                let _ = write!(
                    out,
                    "{},{tc},{:.8e},{},{:.8e},{:.8e},{},",
                    s.converged,
                    s.path_length,
                    s.switch_count,
                    s.max_v,
                    s.final_v,
                    s.lyapunov_violations
                );
            }
            None => out.push_str("false,,,,,,,"),
        }
        let err = r.error.as_deref().unwrap_or("").replace(['"', ','], ";");
        let _ = writeln!(out, "{err}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::SegmentSpec;

    fn straight(length: f64, pose: Pose, t_max: f64) -> Scenario {
        Scenario {
            path: PathSpec {
                start: Some(Pose::new(0.0, 0.0, 0.0)),
                segments: vec![SegmentSpec::line(length)],
            },
            initial_pose: pose,
            vehicle: VehicleParams::default(),
            controller: ControllerConfig::default(),
            user: UserModel::default(),
            dt_control: 0.02,
            dt_physics: 0.001,
            t_max,
            mode: Mode::Kinematic,
            rng_seed: 7,
            brake_transient: BrakeTransient::Instant,
        }
    }

    #[test]
    fn on_path_start_is_an_equilibrium() {
        let trace = run(&straight(50.0, Pose::new(1.0, 0.0, 0.0), 5.0)).unwrap();
        assert_eq!(trace.rows.len(), 251);
        for r in &trace.rows {
            assert_eq!(r.maneuver, BrakeCommand::GoStraight);
            assert_eq!(r.l, 0.0);
            assert_eq!(r.theta_tilde, 0.0);
        }
        assert!((trace.rows[250].t - 5.0).abs() < 1e-12);
    }

    #[test]
    fn offset_start_converges() {
        let trace = run(&straight(50.0, Pose::new(1.0, 0.9, 0.0), 20.0)).unwrap();
        let last = trace.rows.last().unwrap();
        assert!(last.l.abs() < 0.05 * 0.3 && last.theta_tilde.abs() < 0.05);
    }

    #[test]
    fn path_end_halts_with_stop() {
        let trace = run(&straight(3.0, Pose::new(0.0, 0.0, 0.0), 10.0)).unwrap();
        assert_eq!(trace.meta.halt_reason, HaltReason::PathEnd);
        let last = trace.rows.last().unwrap();
        assert_eq!(last.maneuver, BrakeCommand::Stop);
        assert_eq!(last.hybrid_state, HybridState::Stopped);
        assert!(trace.rows.len() < 160);
    }

    #[test]
    fn times_are_uniform() {
        let trace = run(&straight(50.0, Pose::new(1.0, 0.5, 1.0), 3.0)).unwrap();
        for (k, r) in trace.rows.iter().enumerate() {
            assert_eq!(r.t, k as f64 * 0.02);
        }
    }

    #[test]
    fn consecutive_poses_are_close() {
        let trace = run(&straight(50.0, Pose::new(1.0, 1.0, -2.0), 6.0)).unwrap();
        for w in trace.rows.windows(2) {
            let step = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
            assert!(step <= 1.0 * 0.02 + 1e-12);
        }
    }

    #[test]
    fn validation_failures() {
        let mut s = straight(10.0, Pose::default(), 1.0);
        s.dt_physics = 0.03;
        assert!(matches!(s.validate(), Err(SimError::ScenarioInvalid(_))));
        let mut s = straight(10.0, Pose::default(), 1.0);
        s.mode = Mode::Dynamic;
        assert!(s.validate().is_err());
        s.user.torque = Some([1.0, 1.0]);
        s.dt_physics = 0.003;
        assert!(s.validate().is_err());
        s.dt_physics = 0.001;
        assert!(s.validate().is_ok());
        let mut s = straight(10.0, Pose::default(), 0.0);
        assert!(s.validate().is_err());
        s.t_max = 1.0;
        s.path.segments.push(SegmentSpec::arc(5.0, 1.0));
        let (_, warnings) = s.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].starts_with("segment 1"));
    }

    #[test]
    fn noise_is_seeded() {
        let mut s = straight(50.0, Pose::new(1.0, 0.6, 0.3), 4.0);
        s.user.noise = 0.2;
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        s.rng_seed = 8;
        assert_ne!(run(&s).unwrap().to_csv(), a.to_csv());
    }

    #[test]
    fn csv_layout() {
        let trace = run(&straight(50.0, Pose::new(1.0, 0.0, 0.0), 0.04)).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "0.00000000e0,1.00000000e0,0.00000000e0,0.00000000e0,1.00000000e0,0.00000000e0,\
             1.00000000e0,0.00000000e0,0.00000000e0,GoStraight,Controlled,Track,0.00000000e0"
        );
    }

    #[test]
    fn dotted_overrides() {
        let mut v = serde_json::json!({"a": {"b": 1}});
        set_dotted(&mut v, "a.c.d", Value::from(2.5)).unwrap();
        set_dotted(&mut v, "a.b", Value::from(3)).unwrap();
        assert_eq!(v, serde_json::json!({"a": {"b": 3, "c": {"d": 2.5}}}));
        assert!(set_dotted(&mut v, "a.b.x", Value::from(1)).is_err());
    }

    #[test]
    fn sweep_keeps_order_and_isolates_errors() {
        let mut base = straight(50.0, Pose::default(), 1.0);
        base.path.segments = vec![SegmentSpec::arc(1.0, 5.0)];
        // l = 1/c puts the second start on the center of curvature
        let grid = SweepGrid {
            axes: vec![
                SweepAxis {
                    key: "s0".into(),
                    values: vec![1.0],
                },
                SweepAxis {
                    key: "l_norm".into(),
                    values: vec![0.0, 1.0 / 0.3],
                },
            ],
            budget_factor: None,
        };
        let results = sweep(&base, &grid, 2).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].point[1].1, 0.0);
        assert!(results[0].error.is_none());
        assert!(results[1]
            .error
            .as_deref()
            .unwrap()
            .contains("center of curvature"));
        assert!(!results[1].summary.as_ref().unwrap().converged);
        assert!(matches!(
            sweep(&base, &SweepGrid::default(), 1),
            Err(SimError::EmptyGrid)
        ));
    }
}
