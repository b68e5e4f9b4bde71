//! High-level controller running on the main computer.
//!
//! Each tick applies queued events to the mode machine, picks the command
//! source for the current mode, shapes it with the slew limiter and sends
//! wheel speeds to the drive unit. Encoder feedback coming back is folded
//! into an odometry pose and motor telemetry drives the battery model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::drive::period_ticks;
use crate::kinematics::{
    integrate_odometry, ticks_to_distance, twist_to_wheel_rpm, Pose2D, RobotParams, Twist2D,
};
use crate::protocol::{
    pack_message, rpm_to_wire, unpack_message, BusMessage, Frame, SOURCE_SUPERVISOR, VEL_FLAG_BRAKE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Boot,
    Manual,
    Automatic,
    Estopped,
    Docked,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Boot,
        Mode::Manual,
        Mode::Automatic,
        Mode::Estopped,
        Mode::Docked,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Mode::Boot => "Boot",
            Mode::Manual => "Manual",
            Mode::Automatic => "Automatic",
            Mode::Estopped => "Estopped",
            Mode::Docked => "Docked",
        }
    }

    pub fn from_label(s: &str) -> Option<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Operator-selectable drive mode for `set_mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    Manual,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    EstopPressed,
    EstopReset,
    SetMode(DriveMode),
    DockReached,
    Undock,
    /// Display panel keys: 1 lowers speed level, 2 raises it, 3 toggles
    /// between manual and automatic.
    FunctionKey(u8),
}

impl Event {
    pub const ALPHABET: [Event; 9] = [
        Event::EstopPressed,
        Event::EstopReset,
        Event::SetMode(DriveMode::Manual),
        Event::SetMode(DriveMode::Auto),
        Event::DockReached,
        Event::Undock,
        Event::FunctionKey(1),
        Event::FunctionKey(2),
        Event::FunctionKey(3),
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayState {
    pub speed_level: u8,
    /// Rounded to 0.1 V.
    pub battery_v: f64,
    pub mode_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlewLimits {
    pub a_lin: f64,
    pub d_lin: f64,
    pub a_ang: f64,
    pub d_ang: f64,
}

impl Default for SlewLimits {
    fn default() -> Self {
        Self {
            a_lin: 0.5,
            d_lin: 1.0,
            a_ang: 1.5,
            d_ang: 3.0,
        }
    }
}

/// Linear model of the 24 V pack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryModel {
    pub full_v: f64,
    pub empty_v: f64,
    pub capacity_wh: f64,
    pub idle_w: f64,
    pub motor_power_w: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            full_v: 25.5,
            empty_v: 22.0,
            capacity_wh: 240.0,
            idle_w: 5.0,
            motor_power_w: 86.0,
        }
    }
}

impl BatteryModel {
    pub fn power_draw_w(&self, duty_left: f64, duty_right: f64) -> f64 {
        (duty_left + duty_right) / 100.0 * self.motor_power_w + self.idle_w
    }

    pub fn energy_wh(&self, battery_v: f64) -> f64 {
        (battery_v - self.empty_v) / (self.full_v - self.empty_v) * self.capacity_wh
    }

    pub fn voltage(&self, energy_wh: f64) -> f64 {
        self.empty_v + (self.full_v - self.empty_v) * (energy_wh / self.capacity_wh)
    }
}

pub fn battery_update(battery_v: f64, draw_w: f64, dt: f64, model: &BatteryModel) -> f64 {
    let energy = (model.energy_wh(battery_v) - draw_w.max(0.0) * dt / 3600.0).max(0.0);
    model.voltage(energy).min(battery_v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorConfig {
    pub period: f64,
    pub heartbeat_period: f64,
    pub watchdog: f64,
    pub deadzone: f64,
    /// Top linear speed per speed level (m/s).
    pub v_max: [f64; 3],
    /// Top yaw rate per speed level (rad/s).
    pub w_max: [f64; 3],
    pub slew: SlewLimits,
    pub battery: BatteryModel,
    pub ticks_per_rev: u32,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            period: 0.02,
            heartbeat_period: 0.1,
            watchdog: 0.3,
            deadzone: 0.08,
            v_max: [0.3, 0.6, 0.9],
            w_max: [0.6, 1.0, 1.5],
            slew: SlewLimits::default(),
            battery: BatteryModel::default(),
            ticks_per_rev: 4096,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupervisorCounters {
    pub ignored_events: u64,
    pub vel_frames: u64,
    pub heartbeat_frames: u64,
    pub estop_frames: u64,
    pub bus_errors: u64,
    pub rx_errors: u64,
    pub encoder_gaps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorState {
    pub mode: Mode,
    pub speed_level: u8,
    pub current_twist: Twist2D,
    pub last_joystick_at: Option<f64>,
    pub last_auto_cmd_at: Option<f64>,
    pub battery_v: f64,
    pub estop_latched: bool,
    pub display: DisplayState,
    pub odom: Pose2D,
    pub time: f64,
    pub tick: u64,
    pub counters: SupervisorCounters,
    joystick_axes: (f64, f64),
    auto_cmd: Twist2D,
    last_enc_seq: Option<u8>,
    duty: (f64, f64),
    hb_counter: u8,
}

impl SupervisorState {
    pub fn new(battery_v: f64) -> Self {
        let mut s = Self {
            mode: Mode::Boot,
            speed_level: 1,
            current_twist: Twist2D::ZERO,
            last_joystick_at: None,
            last_auto_cmd_at: None,
            battery_v,
            estop_latched: false,
            display: DisplayState {
                speed_level: 1,
                battery_v: 0.0,
                mode_label: String::new(),
            },
            odom: Pose2D::default(),
            time: 0.0,
            tick: 0,
            counters: SupervisorCounters::default(),
            joystick_axes: (0.0, 0.0),
            auto_cmd: Twist2D::ZERO,
            last_enc_seq: None,
            duty: (0.0, 0.0),
            hb_counter: 0,
        };
        s.refresh_display();
        s
    }

    pub fn refresh_display(&mut self) {
        self.display = DisplayState {
            speed_level: self.speed_level,
            battery_v: (self.battery_v * 10.0).round() / 10.0,
            mode_label: self.mode.label().to_string(),
        };
    }

    /// Latest motor duties reported by the drive unit.
    pub fn reported_duty(&self) -> (f64, f64) {
        self.duty
    }
}

impl Default for SupervisorState {
    fn default() -> Self {
        Self::new(BatteryModel::default().full_v)
    }
}

/// Applies one event to the mode machine. Returns false when the event was
/// not applicable in the current mode (the state is then unchanged apart
/// from the ignored-event counter).
pub fn transition(s: &mut SupervisorState, e: Event) -> bool {
    use Mode::*;
    let applied = match (s.mode, e) {
        (_, Event::EstopPressed) => {
            s.mode = Estopped;
            s.estop_latched = true;
            s.current_twist = Twist2D::ZERO;
            true
        }
        (Estopped, Event::EstopReset) => {
            s.mode = Manual;
            s.estop_latched = false;
            true
        }
        (Estopped, _) => matches!(e, Event::FunctionKey(1 | 2)) && apply_level_key(s, e),
        (Boot | Manual | Automatic | Docked, Event::SetMode(m)) => {
            let next = match m {
                DriveMode::Manual => Manual,
                DriveMode::Auto => Automatic,
            };
            let changed = s.mode != next;
            s.mode = next;
            changed
        }
        (Boot | Automatic, Event::DockReached) => {
            s.mode = Docked;
            true
        }
        (Docked, Event::Undock) => {
            s.mode = Automatic;
            true
        }
        (Manual, Event::FunctionKey(3)) => {
            s.mode = Automatic;
            true
        }
        (Automatic, Event::FunctionKey(3)) => {
            s.mode = Manual;
            true
        }
        (_, Event::FunctionKey(1 | 2)) => apply_level_key(s, e),
        _ => false,
    };
    if !applied {
        s.counters.ignored_events += 1;
    }
    applied
}

fn apply_level_key(s: &mut SupervisorState, e: Event) -> bool {
    let next = match e {
        Event::FunctionKey(1) => s.speed_level.saturating_sub(1).max(1),
        Event::FunctionKey(2) => (s.speed_level + 1).min(3),
        _ => return false,
    };
    let changed = next != s.speed_level;
    s.speed_level = next;
    changed
}

pub fn joystick_to_twist(axes: (f64, f64), speed_level: u8, cfg: &SupervisorConfig) -> Twist2D {
    let clamp = |a: f64| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
    let (x, y) = (clamp(axes.0), clamp(axes.1));
    if x.hypot(y) < cfg.deadzone {
        return Twist2D::ZERO;
    }
    let idx = (speed_level.clamp(1, 3) - 1) as usize;
    Twist2D {
        v: y * cfg.v_max[idx],
        w: -x * cfg.w_max[idx],
    }
}

/// Moves `current` toward `desired` by at most `accel·dt` when speeding up
/// and `decel·dt` when slowing down. A sign reversal spends the tick braking
/// to zero first and any remaining time accelerating the other way.
pub fn slew_axis(current: f64, desired: f64, accel: f64, decel: f64, dt: f64) -> f64 {
    if current == desired {
        return current;
    }
    if current * desired < 0.0 {
        let t_stop = current.abs() / decel;
        if t_stop >= dt {
            return current - current.signum() * decel * dt;
        }
        let rest = dt - t_stop;
        return desired.signum() * desired.abs().min(accel * rest);
    }
    let rate = if desired.abs() > current.abs() {
        accel
    } else {
        decel
    };
    let step = rate * dt;
    if (desired - current).abs() <= step + 1e-12 {
        desired
    } else {
        current + (desired - current).signum() * step
    }
}

pub fn slew_limit(current: Twist2D, desired: Twist2D, lim: &SlewLimits, dt: f64) -> Twist2D {
    Twist2D {
        v: slew_axis(current.v, desired.v, lim.a_lin, lim.d_lin, dt),
        w: slew_axis(current.w, desired.w, lim.a_ang, lim.d_ang, dt),
    }
}

fn fresh(at: Option<f64>, now: f64, watchdog: f64) -> bool {
    matches!(at, Some(t) if now - t <= watchdog + 1e-9)
}

/// Chooses the desired twist for this tick. Stale sources fall back to zero.
pub fn arbitrate(
    s: &SupervisorState,
    joystick: Option<Twist2D>,
    auto_cmd: Option<Twist2D>,
    now: f64,
    cfg: &SupervisorConfig,
) -> Twist2D {
    match s.mode {
        Mode::Manual if fresh(s.last_joystick_at, now, cfg.watchdog) => {
            joystick.unwrap_or(Twist2D::ZERO)
        }
        Mode::Automatic if fresh(s.last_auto_cmd_at, now, cfg.watchdog) => {
            auto_cmd.unwrap_or(Twist2D::ZERO)
        }
        _ => Twist2D::ZERO,
    }
}

/// Everything queued for the supervisor since its previous tick.
#[derive(Debug, Clone, Default)]
pub struct SupervisorInputs {
    pub events: Vec<Event>,
    /// Latest joystick sample, if one arrived.
    pub joystick: Option<(f64, f64)>,
    /// Latest autonomy command, if one arrived.
    pub auto_cmd: Option<Twist2D>,
    pub rx: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub desired: Twist2D,
    pub wheel_rpm: (f64, f64),
    /// Frames to send, in priority order (E-stop first).
    pub frames: Vec<Frame>,
}

pub struct Supervisor;

impl Supervisor {
    /// One supervisor control period.
    pub fn tick(
        s: &mut SupervisorState,
        inputs: SupervisorInputs,
        params: &RobotParams,
        cfg: &SupervisorConfig,
    ) -> TickOutput {
        let dt = cfg.period;
        let now = (s.tick + 1) as f64 * dt;
        let mut frames = Vec::with_capacity(3);

        Self::absorb_feedback(s, &inputs.rx, params, cfg);

        let was_latched = s.estop_latched;
        for e in inputs.events {
            transition(s, e);
        }
        if s.estop_latched != was_latched {
            let msg = BusMessage::Estop {
                asserted: s.estop_latched as u8,
            };
            match pack_message(&msg) {
                Ok(f) => {
                    frames.push(f);
                    s.counters.estop_frames += 1;
                }
                Err(_) => s.counters.bus_errors += 1,
            }
        }

        if let Some(axes) = inputs.joystick {
            s.joystick_axes = axes;
            s.last_joystick_at = Some(now);
        }
        if let Some(cmd) = inputs.auto_cmd {
            s.auto_cmd = cmd;
            s.last_auto_cmd_at = Some(now);
        }

        let joystick = joystick_to_twist(s.joystick_axes, s.speed_level, cfg);
        let desired = arbitrate(s, Some(joystick), Some(s.auto_cmd), now, cfg);
        s.current_twist = if s.estop_latched {
            Twist2D::ZERO
        } else {
            slew_limit(s.current_twist, desired, &cfg.slew, dt)
        };

        let (l, r) = if s.estop_latched {
            (0.0, 0.0)
        } else {
            twist_to_wheel_rpm(s.current_twist, params)
        };
        let vel = BusMessage::VelCmd {
            left_rpm_d: rpm_to_wire(l),
            right_rpm_d: rpm_to_wire(r),
            flags: if s.estop_latched { VEL_FLAG_BRAKE } else { 0 },
        };
        match pack_message(&vel) {
            Ok(f) => {
                frames.push(f);
                s.counters.vel_frames += 1;
            }
            Err(_) => s.counters.bus_errors += 1,
        }

        if s.tick
            .is_multiple_of(period_ticks(cfg.heartbeat_period, dt))
        {
            let hb = BusMessage::Heartbeat {
                source: SOURCE_SUPERVISOR,
                counter: s.hb_counter,
            };
            if let Ok(f) = pack_message(&hb) {
                frames.push(f);
                s.counters.heartbeat_frames += 1;
                s.hb_counter = s.hb_counter.wrapping_add(1);
            }
        }

        let draw = cfg.battery.power_draw_w(s.duty.0, s.duty.1);
        s.battery_v = battery_update(s.battery_v, draw, dt, &cfg.battery);
        s.time = now;
        s.tick += 1;
        s.refresh_display();

        TickOutput {
            desired,
            wheel_rpm: (l, r),
            frames,
        }
    }

    fn absorb_feedback(
        s: &mut SupervisorState,
        rx: &[Frame],
        params: &RobotParams,
        cfg: &SupervisorConfig,
    ) {
        for f in rx {
            match unpack_message(f) {
                Ok(BusMessage::EncFeedback {
                    left_delta,
                    right_delta,
                    seq,
                }) => {
                    if let Some(prev) = s.last_enc_seq {
                        if seq != prev.wrapping_add(1) {
                            s.counters.encoder_gaps += 1;
                        }
                    }
                    s.last_enc_seq = Some(seq);
                    let dl = ticks_to_distance(left_delta as i64, cfg.ticks_per_rev, params);
                    let dr = ticks_to_distance(right_delta as i64, cfg.ticks_per_rev, params);
                    s.odom = integrate_odometry(s.odom, dl, dr, params);
                }
                Ok(BusMessage::MotorTelem {
                    duty_left,
                    duty_right,
                    ..
                }) => s.duty = (duty_left as f64, duty_right as f64),
                Ok(_) => {}
                Err(_) => s.counters.rx_errors += 1,
            }
        }
    }
}
