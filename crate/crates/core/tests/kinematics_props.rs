use std::f64::consts::PI;

use moby_core::kinematics::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn twist_rpm_inverse(v in -1.0f64..1.0, w in -2.0f64..2.0) {
        let p = RobotParams::default();
        let (l, r) = twist_to_wheel_rpm(Twist2D::new(v, w), &p);
        let t = wheel_rpm_to_twist(l, r, &p);
        prop_assert!((t.v - v).abs() < 1e-12);
        prop_assert!((t.w - w).abs() < 1e-12);
    }

    /// For a fixed wheel ratio the arc model composes exactly: one step of
    /// (dl, dr) equals two steps of half the travel.
    #[test]
    fn arc_steps_compose(
        x in -5.0f64..5.0, y in -5.0f64..5.0, th in -PI..PI,
        dl in -0.5f64..0.5, dr in -0.5f64..0.5,
    ) {
        let p = RobotParams::default();
        let start = Pose2D::new(x, y, th);
        let once = integrate_odometry(start, dl, dr, &p);
        let half = integrate_odometry(start, dl / 2.0, dr / 2.0, &p);
        let twice = integrate_odometry(half, dl / 2.0, dr / 2.0, &p);
        prop_assert!((once.x - twice.x).abs() < 1e-9);
        prop_assert!((once.y - twice.y).abs() < 1e-9);
        prop_assert!(normalize_angle(once.theta - twice.theta).abs() < 1e-9);
    }

    /// Equal and opposite wheel travel spins in place.
    #[test]
    fn spin_in_place(d in -1.0f64..1.0, th in -PI..PI) {
        let p = RobotParams::default();
        let q = integrate_odometry(Pose2D::new(1.0, 2.0, th), -d, d, &p);
        prop_assert!((q.x - 1.0).abs() < 1e-12 && (q.y - 2.0).abs() < 1e-12);
        prop_assert!(normalize_angle(q.theta - th - 2.0 * d / p.track_width).abs() < 1e-9);
    }

    #[test]
    fn normalized_angles_are_in_range(a in -100.0f64..100.0) {
        let n = normalize_angle(a);
        prop_assert!(n > -PI && n <= PI);
        prop_assert!(((a - n) / (2.0 * PI)).fract().abs() < 1e-9
            || (1.0 - ((a - n) / (2.0 * PI)).fract().abs()) < 1e-9);
    }
}

#[test]
fn encoder_distance_examples() {
    let p = RobotParams::default();
    assert!((ticks_to_distance(4096, 4096, &p) - 2.0 * PI * 0.075).abs() < 1e-15);
    assert_eq!(ticks_to_distance(0, 4096, &p), 0.0);
    let (l, r) = twist_to_wheel_rpm(Twist2D::new(0.5, 0.0), &p);
    assert!((l - 63.661977).abs() < 1e-5 && l == r);
}
