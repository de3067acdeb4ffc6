//! Scene data model shared by the generator, describer, model and metrics.

use serde::{Deserialize, Serialize};

/// `(x, y)` in meters, ego frame at t = 0 (ego at origin heading +x).
pub type Point = [f64; 2];

/// Number of future waypoints per trajectory.
pub const HORIZON_STEPS: usize = 6;
/// Spacing between waypoints in seconds.
pub const STEP_DT: f64 = 0.5;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum AgentClass {
    Car,
    Pedestrian,
    Cyclist,
}

impl AgentClass {
    pub const ALL: [AgentClass; 3] = [AgentClass::Car, AgentClass::Pedestrian, AgentClass::Cyclist];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub class: AgentClass,
    pub pos: Point,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    /// `[length, width]`
    pub size: [f64; 2],
}

impl AgentState {
    pub fn velocity(&self) -> Point {
        [
            self.speed * self.heading.cos(),
            self.speed * self.heading.sin(),
        ]
    }

    /// Heading after `k` constant-turn-rate steps.
    pub fn heading_at(&self, k: usize) -> f64 {
        self.heading + self.yaw_rate * STEP_DT * k as f64
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    LaneDivider,
    RoadBoundary,
    PedCrossing,
}

impl MapKind {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct MapPolyline {
    pub kind: MapKind,
    pub points: Vec<Point>,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Left,
    Straight,
    Right,
}

impl Command {
    pub const ALL: [Command; 3] = [Command::Left, Command::Straight, Command::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct GtFuture {
    pub ego: Vec<Point>,
    /// One trajectory per entry of [`Scene::agents`], same order.
    pub agents: Vec<Vec<Point>>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Scene {
    pub ego: AgentState,
    pub agents: Vec<AgentState>,
    pub map: Vec<MapPolyline>,
    pub gt_future: GtFuture,
    pub command: Command,
}

impl Scene {
    /// Ego velocity at t = 0 estimated from the first ground-truth waypoint.
    pub fn ego_velocity(&self) -> Point {
        let p = self.gt_future.ego.first().copied().unwrap_or([0.0, 0.0]);
        [p[0] / STEP_DT, p[1] / STEP_DT]
    }
}

pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Resamples a polyline to `n` points equally spaced in arc length, keeping
/// both endpoints.
pub fn resample_polyline(points: &[Point], n: usize) -> Vec<Point> {
    if points.is_empty() || n == 0 {
        return Vec::new();
    }
    if points.len() == 1 || n == 1 {
        return vec![points[0]; n];
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + dist(w[0], w[1]));
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 2 < points.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 {
            ((target - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (points[seg], points[seg + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}
