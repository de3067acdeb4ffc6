//! Planning metrics: L2 displacement error and collision rate, each in two
//! conventions, plus the oriented-rectangle collision predicate.
//!
//! * [`MetricMode::AtHorizon`]: the value at `h` seconds looks only at the
//!   waypoint at `h` (L2), or at whether any waypoint up to `h` collides.
//! * [`MetricMode::AvgUpTo`]: values are averaged over every waypoint up to `h`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scene::{dist, Point, Scene, HORIZON_STEPS};

/// Ego footprint used for collision checks: `[length, width]`.
pub const DEFAULT_EGO_SIZE: [f64; 2] = [4.5, 2.0];

/// Displacements shorter than this leave the footprint heading at 0.
const MIN_HEADING_DISPLACEMENT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricMode {
    AtHorizon,
    AvgUpTo,
}

impl MetricMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricMode::AtHorizon => "at_horizon",
            MetricMode::AvgUpTo => "avg_up_to",
        }
    }
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "at_horizon" => Ok(MetricMode::AtHorizon),
            "avg_up_to" => Ok(MetricMode::AvgUpTo),
            other => Err(Error::Config(format!(
                "unknown metric mode `{other}` (expected at_horizon or avg_up_to)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedRect {
    pub center: Point,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: Point, heading: f64, size: [f64; 2]) -> Self {
        Self {
            center,
            heading,
            length: size[0],
            width: size[1],
        }
    }

    /// Unit vectors along the length and width directions.
    pub fn axes(&self) -> [Point; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [Point; 4] {
        let [u, v] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let at = |a: f64, b: f64| {
            [
                self.center[0] + a * u[0] + b * v[0],
                self.center[1] + a * u[1] + b * v[1],
            ]
        };
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point) -> bool {
        let [u, v] = self.axes();
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let a = d[0] * u[0] + d[1] * u[1];
        let b = d[0] * v[0] + d[1] * v[1];
        a.abs() <= self.length / 2.0 && b.abs() <= self.width / 2.0
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

fn project(corners: &[Point; 4], axis: Point) -> (f64, f64) {
    corners
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            let p = c[0] * axis[0] + c[1] * axis[1];
            (lo.min(p), hi.max(p))
        })
}

/// Separating-axis test for two oriented rectangles. Rectangles are closed
/// sets, so touching edges count as intersecting.
pub fn rect_intersect(a: &OrientedRect, b: &OrientedRect) -> bool {
    let (ca, cb) = (a.corners(), b.corners());
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    for axis in [a0, a1, b0, b1] {
        let (lo_a, hi_a) = project(&ca, axis);
        let (lo_b, hi_b) = project(&cb, axis);
        if hi_a < lo_b || hi_b < lo_a {
            return false;
        }
    }
    true
}

/// Ego footprints at each waypoint. Heading comes from the displacement from
/// the previous waypoint (the origin for the first one).
pub fn ego_footprints(plan: &[Point], ego_size: [f64; 2]) -> Vec<OrientedRect> {
    let mut prev = [0.0, 0.0];
    plan.iter()
        .map(|&p| {
            let (dx, dy) = (p[0] - prev[0], p[1] - prev[1]);
            let heading = if dx.hypot(dy) > MIN_HEADING_DISPLACEMENT {
                dy.atan2(dx)
            } else {
                0.0
            };
            prev = p;
            OrientedRect::new(p, heading, ego_size)
        })
        .collect()
}

/// Footprint of agent `i` at waypoint index `k` (0-based, i.e. time `0.5·(k+1)` s).
pub fn agent_footprint(scene: &Scene, i: usize, k: usize) -> OrientedRect {
    let agent = &scene.agents[i];
    OrientedRect::new(
        scene.gt_future.agents[i][k],
        agent.heading_at(k + 1),
        agent.size,
    )
}

/// Per-waypoint collision flags of `plan` against the scene's ground-truth agents.
pub fn collision_flags(plan: &[Point], scene: &Scene, ego_size: [f64; 2]) -> Vec<bool> {
    ego_footprints(plan, ego_size)
        .iter()
        .enumerate()
        .map(|(k, ego)| {
            (0..scene.agents.len()).any(|i| {
                let other = agent_footprint(scene, i, k);
                // cheap reject before the full test
                dist(ego.center, other.center) <= ego.half_diagonal() + other.half_diagonal()
                    && rect_intersect(ego, &other)
            })
        })
        .collect()
}

fn check_len(plan: &[Point], gt: &[Point]) -> Result<()> {
    if plan.len() != HORIZON_STEPS || gt.len() != HORIZON_STEPS {
        return Err(Error::Data(format!(
            "trajectories must have {HORIZON_STEPS} waypoints, got {} and {}",
            plan.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// L2 error at 1 s, 2 s and 3 s.
pub fn l2_error(plan: &[Point], gt: &[Point], mode: MetricMode) -> Result<[f64; 3]> {
    check_len(plan, gt)?;
    let errs: Vec<f64> = plan.iter().zip(gt).map(|(&p, &g)| dist(p, g)).collect();
    let mut out = [0.0; 3];
    for (h, o) in out.iter_mut().enumerate() {
        let n = 2 * (h + 1);
        *o = match mode {
            MetricMode::AtHorizon => errs[n - 1],
            MetricMode::AvgUpTo => errs[..n].iter().sum::<f64>() / n as f64,
        };
    }
    Ok(out)
}

/// Collision values at 1 s, 2 s and 3 s for a single scene.
pub fn scene_collision(flags: &[bool], mode: MetricMode) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (h, o) in out.iter_mut().enumerate() {
        let n = 2 * (h + 1);
        let window = &flags[..n.min(flags.len())];
        *o = match mode {
            MetricMode::AtHorizon => f64::from(u8::from(window.iter().any(|&c| c))),
            MetricMode::AvgUpTo => {
                window.iter().filter(|&&c| c).count() as f64 / window.len().max(1) as f64
            }
        };
    }
    out
}

/// Collision rate at 1 s, 2 s and 3 s averaged over scenes.
pub fn collision_rate(
    plans: &[Vec<Point>],
    scenes: &[Scene],
    ego_size: [f64; 2],
    mode: MetricMode,
) -> Result<[f64; 3]> {
    if plans.len() != scenes.len() {
        return Err(Error::Data(format!(
            "{} plans for {} scenes",
            plans.len(),
            scenes.len()
        )));
    }
    let mut acc = [0.0; 3];
    for (plan, scene) in plans.iter().zip(scenes) {
        check_len(plan, &scene.gt_future.ego)?;
        let per = scene_collision(&collision_flags(plan, scene, ego_size), mode);
        for (a, v) in acc.iter_mut().zip(per) {
            *a += v;
        }
    }
    let n = scenes.len().max(1) as f64;
    Ok(acc.map(|v| v / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mode: MetricMode,
    pub scenes: usize,
    pub l2: [f64; 3],
    pub l2_avg: f64,
    pub collision: [f64; 3],
    pub collision_avg: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "mode,scenes,l2_1s,l2_2s,l2_3s,l2_avg,cr_1s,cr_2s,cr_3s,cr_avg";

impl MetricsReport {
    pub fn new(mode: MetricMode, scenes: usize, l2: [f64; 3], collision: [f64; 3]) -> Self {
        Self {
            mode,
            scenes,
            l2,
            l2_avg: (l2[0] + l2[1] + l2[2]) / 3.0,
            collision,
            collision_avg: (collision[0] + collision[1] + collision[2]) / 3.0,
        }
    }

    /// Evaluates plans against their scenes' ground truth.
    pub fn compute(
        plans: &[Vec<Point>],
        scenes: &[Scene],
        ego_size: [f64; 2],
        mode: MetricMode,
    ) -> Result<Self> {
        let collision = collision_rate(plans, scenes, ego_size, mode)?;
        let mut l2 = [0.0; 3];
        for (plan, scene) in plans.iter().zip(scenes) {
            let e = l2_error(plan, &scene.gt_future.ego, mode)?;
            for (a, v) in l2.iter_mut().zip(e) {
                *a += v;
            }
        }
        let n = scenes.len().max(1) as f64;
        Ok(Self::new(mode, scenes.len(), l2.map(|v| v / n), collision))
    }

    /// Values after `mode,scenes` in CSV column order.
    pub fn values(&self) -> [f64; 8] {
        [
            self.l2[0],
            self.l2[1],
            self.l2[2],
            self.l2_avg,
            self.collision[0],
            self.collision[1],
            self.collision[2],
            self.collision_avg,
        ]
    }

    pub fn csv_fields(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.mode, self.scenes, self.csv_fields())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, y: f64, h: f64, l: f64, w: f64) -> OrientedRect {
        OrientedRect::new([x, y], h, [l, w])
    }

    fn line(offset: Point) -> Vec<Point> {
        (1..=6)
            .map(|k| [k as f64 + offset[0], 0.5 * k as f64 + offset[1]])
            .collect()
    }

    #[test]
    fn identical_rects_intersect() {
        let r = rect(1.0, 2.0, 0.3, 4.0, 2.0);
        assert!(rect_intersect(&r, &r));
    }

    #[test]
    fn far_rects_do_not_intersect() {
        let a = rect(0.0, 0.0, 0.7, 4.0, 2.0);
        let b = rect(4.5, 0.1, -1.2, 4.0, 2.0);
        // sum of half diagonals is √20 ≈ 4.47 < 4.5
        assert!(!rect_intersect(&a, &b));
    }

    #[test]
    fn touching_edges_intersect() {
        let a = rect(0.0, 0.0, 0.0, 4.0, 2.0);
        let b = rect(4.0, 0.0, 0.0, 4.0, 2.0);
        assert!(rect_intersect(&a, &b));
        let c = rect(4.0 + 1e-9, 0.0, 0.0, 4.0, 2.0);
        assert!(!rect_intersect(&a, &c));
    }

    #[test]
    fn rotated_cross_shape_intersects_without_corner_containment() {
        let a = rect(0.0, 0.0, 0.0, 10.0, 1.0);
        let b = rect(0.0, 0.0, std::f64::consts::FRAC_PI_2, 10.0, 1.0);
        assert!(rect_intersect(&a, &b));
        assert!(a.corners().iter().all(|&c| !b.contains(c)));
    }

    #[test]
    fn l2_spot_checks() {
        let gt = line([0.0, 0.0]);
        for mode in [MetricMode::AtHorizon, MetricMode::AvgUpTo] {
            assert_eq!(l2_error(&gt, &gt, mode).unwrap(), [0.0; 3]);
            let shifted = line([0.3, 0.4]);
            for v in l2_error(&shifted, &gt, mode).unwrap() {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn l2_last_waypoint_only() {
        let gt = line([0.0, 0.0]);
        let mut plan = gt.clone();
        plan[5][0] += 1.2;
        let at = l2_error(&plan, &gt, MetricMode::AtHorizon).unwrap();
        assert_eq!(at[0], 0.0);
        assert_eq!(at[1], 0.0);
        assert!((at[2] - 1.2).abs() < 1e-12);
        let avg = l2_error(&plan, &gt, MetricMode::AvgUpTo).unwrap();
        assert!((avg[2] - 1.2 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn l2_rejects_wrong_length() {
        let gt = line([0.0, 0.0]);
        assert!(l2_error(&gt[..5], &gt, MetricMode::AtHorizon).is_err());
    }

    #[test]
    fn collision_window_semantics() {
        let flags = [false, true, false, false, false, false];
        assert_eq!(
            scene_collision(&flags, MetricMode::AtHorizon),
            [1.0, 1.0, 1.0]
        );
        let avg = scene_collision(&flags, MetricMode::AvgUpTo);
        assert_eq!(avg, [0.5, 0.25, 1.0 / 6.0]);
    }

    #[test]
    fn footprint_heading_from_displacement() {
        let fp = ego_footprints(&[[0.0, 0.0], [0.0, 2.0], [0.0, 2.0]], [4.0, 2.0]);
        assert_eq!(fp[0].heading, 0.0);
        assert!((fp[1].heading - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(fp[2].heading, 0.0);
    }

    #[test]
    fn report_averages_and_csv() {
        let r = MetricsReport::new(MetricMode::AvgUpTo, 3, [0.1, 0.2, 0.6], [0.0, 0.5, 1.0]);
        assert_eq!(r.l2_avg, (0.1 + 0.2 + 0.6) / 3.0);
        assert_eq!(
            r.csv_row(),
            "avg_up_to,3,0.100000,0.200000,0.600000,0.300000,0.000000,0.500000,1.000000,0.500000"
        );
    }

    #[test]
    fn metric_mode_parse() {
        assert_eq!(
            "avg_up_to".parse::<MetricMode>().unwrap(),
            MetricMode::AvgUpTo
        );
        assert!("l2".parse::<MetricMode>().is_err());
    }
}
