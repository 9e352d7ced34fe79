//! Slew/luff/telescope boom kinematics and the suspended payload.
//!
//! The boom pivots at `base_pos + (0, 0, boom_pivot_height)`. Slew rotates
//! about +z, luff elevates the boom from the horizontal plane, and the
//! telescope sets the pivot-to-tip length. The payload is a point mass on a
//! rigid rope of fixed length hanging from the boom tip, integrated with a
//! symmetric kick-drift-kick step that keeps the relative velocity tangent to
//! the rope sphere.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CraneConfig {
    pub base_pos: Vec3,
    pub boom_pivot_height: f64,
    pub boom_min_len: f64,
    pub boom_max_len: f64,
    /// Radians above horizontal.
    pub luff_min: f64,
    pub luff_max: f64,
    /// Per-RL-step joint rate limits (rad, rad, m).
    pub slew_rate_max: f64,
    pub luff_rate_max: f64,
    pub telescope_rate_max: f64,
    pub rope_length: f64,
    pub payload_half_extents: Vec3,
    /// Per-substep multiplier on the payload's swing velocity, in (0, 1].
    pub damping: f64,
    pub gravity: f64,
    /// Physics substep, seconds.
    pub dt: f64,
    /// Physics substeps per control step.
    pub substeps: u32,
}

impl Default for CraneConfig {
    fn default() -> Self {
        Self {
            base_pos: Vec3::zeros(),
            boom_pivot_height: 3.0,
            boom_min_len: 4.0,
            boom_max_len: 20.0,
            luff_min: 0.0,
            luff_max: 80f64.to_radians(),
            slew_rate_max: 0.05,
            luff_rate_max: 0.05,
            telescope_rate_max: 0.3,
            rope_length: 5.0,
            payload_half_extents: Vec3::new(0.25, 0.25, 0.25),
            damping: 0.995,
            gravity: 9.81,
            dt: 0.02,
            substeps: 10,
        }
    }
}

impl CraneConfig {
    /// Returns the first violated constraint as `(field, message)`.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let finite = [
            self.boom_pivot_height,
            self.boom_min_len,
            self.boom_max_len,
            self.luff_min,
            self.luff_max,
            self.slew_rate_max,
            self.luff_rate_max,
            self.telescope_rate_max,
            self.rope_length,
            self.damping,
            self.gravity,
            self.dt,
        ];
        if finite.iter().any(|v| !v.is_finite())
            || self.base_pos.iter().any(|v| !v.is_finite())
            || self.payload_half_extents.iter().any(|v| !v.is_finite())
        {
            return Err(("crane", "all values must be finite".into()));
        }
        if !(0.0 < self.boom_min_len && self.boom_min_len < self.boom_max_len) {
            return Err(("boom_min_len", "need 0 < boom_min_len < boom_max_len".into()));
        }
        if !(0.0 <= self.luff_min && self.luff_min < self.luff_max && self.luff_max <= FRAC_PI_2) {
            return Err(("luff_max", "need 0 <= luff_min < luff_max <= pi/2".into()));
        }
        if self.slew_rate_max <= 0.0 || self.luff_rate_max <= 0.0 || self.telescope_rate_max <= 0.0 {
            return Err(("slew_rate_max", "joint rate limits must be positive".into()));
        }
        if self.rope_length <= 0.0 {
            return Err(("rope_length", "must be > 0".into()));
        }
        if self.payload_half_extents.iter().any(|v| *v < 0.0) {
            return Err(("payload_half_extents", "must be >= 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(("damping", "must lie in (0, 1]".into()));
        }
        if self.gravity <= 0.0 {
            return Err(("gravity", "must be > 0".into()));
        }
        if self.dt <= 0.0 {
            return Err(("dt", "must be > 0".into()));
        }
        if self.substeps == 0 {
            return Err(("substeps", "must be >= 1".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(k, m)| Error::Config(format!("crane.{k}: {m}")))
    }

    pub fn pivot(&self) -> Vec3 {
        self.base_pos + Vec3::new(0.0, 0.0, self.boom_pivot_height)
    }

    /// Seconds of simulated time per control step.
    pub fn control_period(&self) -> f64 {
        self.dt * f64::from(self.substeps)
    }

    /// Small-angle swing period of the payload.
    pub fn pendulum_period(&self) -> f64 {
        2.0 * PI * (self.rope_length / self.gravity).sqrt()
    }

    pub fn within_limits(&self, st: &CraneState) -> bool {
        st.slew.is_finite()
            && (self.luff_min..=self.luff_max).contains(&st.luff)
            && (self.boom_min_len..=self.boom_max_len).contains(&st.boom_len)
    }

    fn clamp_state(&self, st: CraneState) -> CraneState {
        CraneState {
            slew: wrap_angle(st.slew),
            luff: st.luff.clamp(self.luff_min, self.luff_max),
            boom_len: st.boom_len.clamp(self.boom_min_len, self.boom_max_len),
        }
    }
}

/// Joint values. Slew is continuous and kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraneState {
    pub slew: f64,
    pub luff: f64,
    pub boom_len: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadState {
    pub pos: Vec3,
    /// World-frame velocity.
    pub vel: Vec3,
    pub rope_angle: f64,
}

impl PayloadState {
    /// Payload at rest directly below `tip`.
    pub fn hanging_below(tip: &Vec3, rope_length: f64) -> Self {
        Self {
            pos: tip - Vec3::new(0.0, 0.0, rope_length),
            vel: Vec3::zeros(),
            rope_angle: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub state: CraneState,
    /// Set when the requested tip lay outside the joint box.
    pub clamped: bool,
}

pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

pub fn forward_kinematics(cfg: &CraneConfig, st: &CraneState) -> Vec3 {
    let horizontal = st.boom_len * st.luff.cos();
    cfg.base_pos
        + Vec3::new(
            horizontal * st.slew.cos(),
            horizontal * st.slew.sin(),
            cfg.boom_pivot_height + st.boom_len * st.luff.sin(),
        )
}

/// Joint values placing the tip at `target`, clamped into the joint box.
/// On the slew axis (zero horizontal offset) `prev_slew` is kept.
pub fn inverse_kinematics(cfg: &CraneConfig, target: &Vec3, prev_slew: f64) -> IkSolution {
    let d = target - cfg.pivot();
    let r = d.x.hypot(d.y);
    let h = d.z;
    let slew = if r == 0.0 { prev_slew } else { d.y.atan2(d.x) };
    let raw = CraneState {
        slew,
        luff: h.atan2(r),
        boom_len: r.hypot(h),
    };
    let state = cfg.clamp_state(raw);
    let clamped = state.luff != raw.luff || state.boom_len != raw.boom_len;
    IkSolution { state, clamped }
}

/// Angle between the rope (payload to tip) and +z, in [0, pi].
pub fn rope_angle(tip: &Vec3, payload_pos: &Vec3) -> Result<f64> {
    let d = tip - payload_pos;
    if d.norm() == 0.0 {
        return Err(Error::Geometry("zero-length rope vector".into()));
    }
    Ok(d.x.hypot(d.y).atan2(d.z))
}

/// Swing energy per unit mass relative to the payload hanging at rest.
pub fn pendulum_energy(cfg: &CraneConfig, tip: &Vec3, payload: &PayloadState) -> f64 {
    0.5 * payload.vel.norm_squared() + cfg.gravity * (payload.pos.z - (tip.z - cfg.rope_length))
}

fn tangent(v: Vec3, unit_radial: &Vec3) -> Vec3 {
    v - unit_radial * v.dot(unit_radial)
}

/// Advance crane and payload by one control step.
///
/// The tip command is solved through IK, then each joint moves at most its
/// rate limit toward the solution. Joints are interpolated linearly over the
/// physics substeps; the tip velocity of each substep comes from consecutive
/// tip positions, and changes in it reach the payload through the rope
/// constraint.
pub fn step_dynamics(
    cfg: &CraneConfig,
    crane: &CraneState,
    payload: &PayloadState,
    tip_delta: &Vec3,
) -> (CraneState, PayloadState) {
    let old_tip = forward_kinematics(cfg, crane);
    let goal = inverse_kinematics(cfg, &(old_tip + tip_delta), crane.slew).state;

    let d_slew = wrap_angle(goal.slew - crane.slew).clamp(-cfg.slew_rate_max, cfg.slew_rate_max);
    let d_luff = (goal.luff - crane.luff).clamp(-cfg.luff_rate_max, cfg.luff_rate_max);
    let d_len = (goal.boom_len - crane.boom_len)
        .clamp(-cfg.telescope_rate_max, cfg.telescope_rate_max);

    let joints_at = |frac: f64| CraneState {
        slew: crane.slew + frac * d_slew,
        luff: crane.luff + frac * d_luff,
        boom_len: crane.boom_len + frac * d_len,
    };

    let gravity = Vec3::new(0.0, 0.0, -cfg.gravity);
    let half_kick = gravity * (0.5 * cfg.dt);
    let l = cfg.rope_length;
    let n = cfg.substeps;

    let mut x = payload.pos;
    let mut v = payload.vel;
    let mut tip_prev = old_tip;
    for k in 1..=n {
        let tip = forward_kinematics(cfg, &joints_at(f64::from(k) / f64::from(n)));
        let v_tip = (tip - tip_prev) / cfg.dt;

        let radial = (x - tip_prev).normalize();
        v = v_tip + tangent(v + half_kick - v_tip, &radial);

        let offset = x + v * cfg.dt - tip;
        let radial = offset.normalize();
        x = tip + radial * l;

        // carry the relative speed onto the new tangent plane
        let rel = v - v_tip;
        let rotated = tangent(rel, &radial);
        let norm = rotated.norm();
        let rel = if norm > 0.0 {
            rotated * (rel.norm() / norm)
        } else {
            rotated
        };
        v = v_tip + tangent(rel + half_kick, &radial) * cfg.damping;
        tip_prev = tip;
    }

    let new_crane = cfg.clamp_state(joints_at(1.0));
    let angle = rope_angle(&tip_prev, &x).unwrap_or(0.0);
    (
        new_crane,
        PayloadState {
            pos: x,
            vel: v,
            rope_angle: angle,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg_at_origin() -> CraneConfig {
        CraneConfig {
            luff_max: FRAC_PI_2,
            ..CraneConfig::default()
        }
    }

    fn assert_vec_close(a: &Vec3, b: &Vec3, tol: f64) {
        assert!((a - b).norm() <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn fk_planar_cases() {
        let cfg = cfg_at_origin();
        let st = |slew, luff| CraneState {
            slew,
            luff,
            boom_len: 10.0,
        };
        assert_vec_close(&forward_kinematics(&cfg, &st(0.0, 0.0)), &Vec3::new(10.0, 0.0, 3.0), 1e-12);
        assert_vec_close(
            &forward_kinematics(&cfg, &st(FRAC_PI_2, 0.0)),
            &Vec3::new(0.0, 10.0, 3.0),
            1e-12,
        );
        assert_vec_close(
            &forward_kinematics(&cfg, &st(0.0, FRAC_PI_2)),
            &Vec3::new(0.0, 0.0, 13.0),
            1e-12,
        );
    }

    #[test]
    fn ik_round_trip_random_states() {
        let cfg = CraneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let st = CraneState {
                slew: rng.random_range(-PI..PI),
                luff: rng.random_range(cfg.luff_min..cfg.luff_max),
                boom_len: rng.random_range(cfg.boom_min_len..cfg.boom_max_len),
            };
            let tip = forward_kinematics(&cfg, &st);
            let sol = inverse_kinematics(&cfg, &tip, 0.0);
            assert!(!sol.clamped);
            assert!(wrap_angle(sol.state.slew - st.slew).abs() <= 1e-9);
            assert!((sol.state.luff - st.luff).abs() <= 1e-9);
            assert!((sol.state.boom_len - st.boom_len).abs() <= 1e-9);
        }
    }

    #[test]
    fn ik_saturates_beyond_reach() {
        let cfg = CraneConfig::default();
        let sol = inverse_kinematics(&cfg, &Vec3::new(50.0, 0.0, 3.0), 0.0);
        assert!(sol.clamped);
        assert_eq!(sol.state.boom_len, cfg.boom_max_len);
    }

    #[test]
    fn ik_planar_target() {
        let cfg = CraneConfig::default();
        let sol = inverse_kinematics(&cfg, &Vec3::new(7.0, 0.0, 3.0), 1.0);
        assert!(!sol.clamped);
        assert_eq!(sol.state.slew, 0.0);
        assert_eq!(sol.state.luff, 0.0);
        assert_eq!(sol.state.boom_len, 7.0);
    }

    #[test]
    fn ik_on_axis_keeps_previous_slew() {
        let cfg = CraneConfig::default();
        let sol = inverse_kinematics(&cfg, &cfg.pivot(), 0.7);
        assert_eq!(sol.state.slew, 0.7);
        assert!(sol.clamped);
        let above = inverse_kinematics(&cfg, &(cfg.pivot() + Vec3::new(0.0, 0.0, 6.0)), -1.2);
        assert_eq!(above.state.slew, -1.2);
    }

    #[test]
    fn rope_angle_cases() {
        let tip = Vec3::new(1.0, 2.0, 10.0);
        assert_eq!(rope_angle(&tip, &(tip - Vec3::new(0.0, 0.0, 5.0))).unwrap(), 0.0);
        let a = 30f64.to_radians();
        let p = tip - Vec3::new(5.0 * a.sin(), 0.0, 5.0 * a.cos());
        assert!((rope_angle(&tip, &p).unwrap() - PI / 6.0).abs() <= 1e-9);
        assert!(rope_angle(&tip, &tip).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = Vec3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let d = tip - p;
            let oracle = (d.z / d.norm()).acos();
            assert!((rope_angle(&tip, &p).unwrap() - oracle).abs() <= 1e-7);
        }
    }

    fn displaced(cfg: &CraneConfig, crane: &CraneState, theta: f64) -> PayloadState {
        let tip = forward_kinematics(cfg, crane);
        PayloadState {
            pos: tip + cfg.rope_length * Vec3::new(theta.sin(), 0.0, -theta.cos()),
            vel: Vec3::zeros(),
            rope_angle: theta,
        }
    }

    fn home() -> CraneState {
        CraneState {
            slew: 0.3,
            luff: 0.5,
            boom_len: 8.0,
        }
    }

    #[test]
    fn equilibrium_is_preserved() {
        let cfg = CraneConfig::default();
        let crane = home();
        let mut payload = PayloadState::hanging_below(&forward_kinematics(&cfg, &crane), cfg.rope_length);
        let mut st = crane;
        for _ in 0..200 {
            let (c, p) = step_dynamics(&cfg, &st, &payload, &Vec3::zeros());
            assert_eq!(p.rope_angle, 0.0);
            assert_eq!(p.vel, Vec3::zeros());
            st = c;
            payload = p;
        }
    }

    #[test]
    fn damped_swing_peaks_decrease() {
        let cfg = CraneConfig {
            damping: 0.999,
            substeps: 1,
            ..CraneConfig::default()
        };
        let crane = home();
        let mut payload = displaced(&cfg, &crane, 0.2);
        let mut angles = Vec::new();
        for _ in 0..2000 {
            let (_, p) = step_dynamics(&cfg, &crane, &payload, &Vec3::zeros());
            angles.push(p.rope_angle);
            payload = p;
        }
        let peaks: Vec<f64> = angles
            .windows(3)
            .filter(|w| w[1] > w[0] && w[1] >= w[2])
            .map(|w| w[1])
            .collect();
        assert!(peaks.len() >= 10);
        assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
    }

    #[test]
    fn small_angle_period() {
        let cfg = CraneConfig {
            damping: 1.0,
            substeps: 1,
            ..CraneConfig::default()
        };
        let crane = CraneState {
            slew: 0.0,
            ..home()
        };
        let tip = forward_kinematics(&cfg, &crane);
        let mut payload = displaced(&cfg, &crane, 0.05);
        let mut crossings = Vec::new();
        let mut prev = payload.pos.x - tip.x;
        for i in 0..5000 {
            payload = step_dynamics(&cfg, &crane, &payload, &Vec3::zeros()).1;
            let x = payload.pos.x - tip.x;
            if prev < 0.0 && x >= 0.0 {
                // linear interpolation of the crossing time
                crossings.push(i as f64 + prev / (prev - x));
            }
            prev = x;
        }
        let n = crossings.len() - 1;
        let period = (crossings[n] - crossings[0]) / n as f64 * cfg.dt;
        let expected = cfg.pendulum_period();
        assert!((period - expected).abs() / expected < 0.05, "{period} vs {expected}");
    }

    #[test]
    fn undamped_energy_drift_is_small() {
        let cfg = CraneConfig {
            damping: 1.0,
            substeps: 1,
            ..CraneConfig::default()
        };
        let crane = home();
        let tip = forward_kinematics(&cfg, &crane);
        let mut payload = displaced(&cfg, &crane, 0.05);
        let e0 = pendulum_energy(&cfg, &tip, &payload);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            payload = step_dynamics(&cfg, &crane, &payload, &Vec3::zeros()).1;
            worst = worst.max((pendulum_energy(&cfg, &tip, &payload) - e0).abs() / e0);
        }
        assert!(worst <= 0.01, "relative drift {worst}");
    }

    #[test]
    fn damped_energy_never_increases() {
        let cfg = CraneConfig {
            damping: 0.99,
            substeps: 1,
            ..CraneConfig::default()
        };
        let crane = home();
        let tip = forward_kinematics(&cfg, &crane);
        let mut payload = displaced(&cfg, &crane, 0.3);
        let mut e = pendulum_energy(&cfg, &tip, &payload);
        for _ in 0..3000 {
            payload = step_dynamics(&cfg, &crane, &payload, &Vec3::zeros()).1;
            let e_next = pendulum_energy(&cfg, &tip, &payload);
            assert!(e_next <= e + 1e-12, "{e_next} > {e}");
            e = e_next;
        }
    }

    #[test]
    fn rope_stays_rigid_and_joints_in_limits() {
        let cfg = CraneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut crane = home();
        let mut payload = PayloadState::hanging_below(&forward_kinematics(&cfg, &crane), cfg.rope_length);
        for _ in 0..5000 {
            let delta = Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let (c, p) = step_dynamics(&cfg, &crane, &payload, &delta);
            let tip = forward_kinematics(&cfg, &c);
            assert!(((p.pos - tip).norm() - cfg.rope_length).abs() <= 1e-6);
            assert!(cfg.within_limits(&c), "{c:?}");
            crane = c;
            payload = p;
        }
    }

    #[test]
    fn rate_limits_bound_joint_motion() {
        let cfg = CraneConfig::default();
        let crane = home();
        let payload = PayloadState::hanging_below(&forward_kinematics(&cfg, &crane), cfg.rope_length);
        let (c, _) = step_dynamics(&cfg, &crane, &payload, &Vec3::new(-30.0, 30.0, 30.0));
        assert!(wrap_angle(c.slew - crane.slew).abs() <= cfg.slew_rate_max + 1e-15);
        assert!((c.luff - crane.luff).abs() <= cfg.luff_rate_max + 1e-15);
        assert!((c.boom_len - crane.boom_len).abs() <= cfg.telescope_rate_max + 1e-15);
    }

    #[test]
    fn step_is_deterministic() {
        let cfg = CraneConfig::default();
        let crane = home();
        let payload = displaced(&cfg, &crane, 0.1);
        let d = Vec3::new(0.2, -0.1, 0.3);
        let a = step_dynamics(&cfg, &crane, &payload, &d);
        let b = step_dynamics(&cfg, &crane, &payload, &d);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.pos.map(f64::to_bits), b.1.pos.map(f64::to_bits));
        assert_eq!(a.1.vel.map(f64::to_bits), b.1.vel.map(f64::to_bits));
    }

    #[test]
    fn config_validation() {
        assert!(CraneConfig::default().validate().is_ok());
        let bad = CraneConfig {
            damping: 1.5,
            ..CraneConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CraneConfig {
            boom_min_len: 30.0,
            ..CraneConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
