//! Seeded synthetic driving scenes.
//!
//! A scene is a 3-lane road (straight or gently curved) in the ego frame,
//! one of four scenario templates, a handful of background agents, and
//! noise-free ground-truth futures. Agents follow constant-turn-rate
//! kinematics; the ego follows its lane with a scenario-dependent speed
//! profile and lateral offset.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{collision_flags, rect_intersect, OrientedRect};
use crate::scene::{
    norm, AgentClass, AgentState, Command, GtFuture, MapKind, MapPolyline, Point, Scene,
    HORIZON_STEPS, STEP_DT,
};

pub const LANE_WIDTH: f64 = 3.5;
pub const EGO_SIZE: [f64; 2] = crate::evalkit::DEFAULT_EGO_SIZE;
/// Agent futures must stay within this multiple of the extent.
pub const FUTURE_EXTENT_FACTOR: f64 = 1.5;
const MAX_POLYLINE_POINTS: usize = 10;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Following,
    CrossingPedestrian,
    LaneChange,
    Turn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioMix {
    pub following: f64,
    pub crossing: f64,
    pub lane_change: f64,
    pub turn: f64,
}

impl Default for ScenarioMix {
    fn default() -> Self {
        Self {
            following: 0.40,
            crossing: 0.25,
            lane_change: 0.20,
            turn: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Half-width `R` of the square region agents start in.
    pub extent: f64,
    pub max_agents: usize,
    pub max_map: usize,
    /// Upper bound on background agents added on top of the scenario's own.
    pub background_agents: usize,
    pub mix: ScenarioMix,
    pub ego_speed: (f64, f64),
    pub car_speed: (f64, f64),
    pub pedestrian_speed: (f64, f64),
    pub cyclist_speed: (f64, f64),
    pub retries: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            extent: 50.0,
            max_agents: 16,
            max_map: 8,
            background_agents: 6,
            mix: ScenarioMix::default(),
            ego_speed: (5.0, 9.0),
            car_speed: (3.0, 10.0),
            pedestrian_speed: (0.8, 1.8),
            cyclist_speed: (2.5, 6.0),
            retries: 64,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if !(self.extent.is_finite() && self.extent >= 20.0) {
            return bad("extent must be at least 20 m");
        }
        if self.max_agents > 64 {
            return bad("max_agents must be at most 64");
        }
        if self.max_map < 1 || self.max_map > 16 {
            return bad("max_map must be in 1..=16");
        }
        for (name, (lo, hi)) in [
            ("ego_speed", self.ego_speed),
            ("car_speed", self.car_speed),
            ("pedestrian_speed", self.pedestrian_speed),
            ("cyclist_speed", self.cyclist_speed),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 20.0) {
                return bad(&format!("{name} range must satisfy 0 <= lo <= hi <= 20"));
            }
        }
        let m = &self.mix;
        let weights = [m.following, m.crossing, m.lane_change, m.turn];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0
        {
            return bad("scenario mix weights must be non-negative with a positive sum");
        }
        if self.retries == 0 {
            return bad("retries must be positive");
        }
        Ok(())
    }
}

/// Kinematic states `(position, heading)` after each of `steps` Euler steps of
/// the constant-turn-rate model.
pub fn rollout_ct_states(state: &AgentState, dt: f64, steps: usize) -> Vec<(Point, f64)> {
    let [mut x, mut y] = state.pos;
    let mut theta = state.heading;
    (0..steps)
        .map(|_| {
            x += state.speed * theta.cos() * dt;
            y += state.speed * theta.sin() * dt;
            theta += state.yaw_rate * dt;
            ([x, y], theta)
        })
        .collect()
}

/// Waypoints of the constant-turn-rate rollout.
pub fn rollout_ct(state: &AgentState, dt: f64, steps: usize) -> Vec<Point> {
    rollout_ct_states(state, dt, steps)
        .into_iter()
        .map(|(p, _)| p)
        .collect()
}

/// Road reference: the ego lane centre through the origin with heading 0 and
/// constant curvature. Lateral offsets are positive to the left.
#[derive(Clone, Copy, Debug)]
struct Road {
    curvature: f64,
}

impl Road {
    fn point(&self, s: f64, l: f64) -> Point {
        let k = self.curvature;
        if k.abs() < 1e-9 {
            return [s, l];
        }
        let (sin, cos) = (k * s).sin_cos();
        [sin / k - l * sin, (1.0 - cos) / k + l * cos]
    }

    fn heading(&self, s: f64) -> f64 {
        self.curvature * s
    }

    /// Arc-length window covered by the map polylines.
    fn span(&self, extent: f64) -> (f64, f64) {
        let limit = if self.curvature.abs() < 1e-9 {
            f64::INFINITY
        } else {
            FRAC_PI_2 / self.curvature.abs()
        };
        (-(0.8 * extent).min(limit), (0.9 * extent).min(limit))
    }

    fn polyline(&self, l: f64, extent: f64) -> Vec<Point> {
        let (s0, s1) = self.span(extent);
        (0..MAX_POLYLINE_POINTS)
            .map(|i| s0 + (s1 - s0) * i as f64 / (MAX_POLYLINE_POINTS - 1) as f64)
            .map(|s| self.point(s, l))
            .filter(|p| norm(*p) <= extent)
            .collect()
    }

    /// Agent moving along the lane at lateral offset `l`.
    fn lane_agent(
        &self,
        class: AgentClass,
        s: f64,
        l: f64,
        speed: f64,
        size: [f64; 2],
    ) -> AgentState {
        let heading = self.heading(s);
        // curvature of the offset lane
        let yaw_rate = if self.curvature.abs() < 1e-9 {
            0.0
        } else {
            speed / (1.0 / self.curvature - l)
        };
        AgentState {
            id: 0,
            class,
            pos: self.point(s, l),
            heading,
            speed,
            yaw_rate,
            size,
        }
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn random_size(rng: &mut ChaCha8Rng, class: AgentClass) -> [f64; 2] {
    match class {
        AgentClass::Car => [rng.gen_range(4.0..5.2), rng.gen_range(1.8..2.1)],
        AgentClass::Pedestrian => [rng.gen_range(0.5..0.8), rng.gen_range(0.5..0.8)],
        AgentClass::Cyclist => [rng.gen_range(1.6..1.9), rng.gen_range(0.6..0.8)],
    }
}

/// Ego speed profile along the lane: initial speed and constant acceleration,
/// never reversing.
#[derive(Clone, Copy, Debug)]
struct EgoPlan {
    speed: f64,
    accel: f64,
    lateral_target: f64,
}

impl EgoPlan {
    fn arc_length(&self, t: f64) -> f64 {
        if self.accel < 0.0 {
            let t_stop = self.speed / -self.accel;
            let t = t.min(t_stop);
            self.speed * t + 0.5 * self.accel * t * t
        } else {
            self.speed * t + 0.5 * self.accel * t * t
        }
    }

    fn future(&self, road: &Road) -> Vec<Point> {
        let horizon = STEP_DT * HORIZON_STEPS as f64;
        (1..=HORIZON_STEPS)
            .map(|k| {
                let t = STEP_DT * k as f64;
                road.point(
                    self.arc_length(t),
                    self.lateral_target * smoothstep(t / horizon),
                )
            })
            .collect()
    }
}

struct Draft {
    kind: ScenarioKind,
    road: Road,
    command: Command,
    ego: EgoPlan,
    scenario_agents: Vec<AgentState>,
    crosswalk: Option<f64>,
}

fn pick_scenario(rng: &mut ChaCha8Rng, mix: &ScenarioMix) -> ScenarioKind {
    let w = [mix.following, mix.crossing, mix.lane_change, mix.turn];
    let total: f64 = w.iter().sum();
    let mut u = rng.gen_range(0.0..total);
    let kinds = [
        ScenarioKind::Following,
        ScenarioKind::CrossingPedestrian,
        ScenarioKind::LaneChange,
        ScenarioKind::Turn,
    ];
    for (kind, wi) in kinds.iter().zip(w) {
        if u < wi {
            return *kind;
        }
        u -= wi;
    }
    kinds[w.iter().rposition(|&x| x > 0.0).unwrap_or(0)]
}

fn mild_curvature(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        0.0
    } else {
        rng.gen_range(-0.004..0.004)
    }
}

fn draft(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> Draft {
    let kind = pick_scenario(rng, &cfg.mix);
    match kind {
        ScenarioKind::Following => {
            let road = Road {
                curvature: mild_curvature(rng),
            };
            let lead_speed = uniform(rng, cfg.car_speed);
            let gap = rng.gen_range(8.0..25.0);
            let lead = road.lane_agent(
                AgentClass::Car,
                gap,
                0.0,
                lead_speed,
                random_size(rng, AgentClass::Car),
            );
            let speed = (lead_speed + rng.gen_range(-0.5..0.5)).max(0.0);
            let mut scenario_agents = vec![lead];
            if rng.gen_bool(0.75) {
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                scenario_agents.push(neighbor(rng, &road, side, speed, cfg));
            }
            Draft {
                kind,
                road,
                command: Command::Straight,
                ego: EgoPlan {
                    speed,
                    accel: 0.0,
                    lateral_target: 0.0,
                },
                scenario_agents,
                crosswalk: rng.gen_bool(0.3).then(|| rng.gen_range(35.0..42.0)),
            }
        }
        ScenarioKind::CrossingPedestrian => {
            let road = Road {
                curvature: mild_curvature(rng),
            };
            let v0 = uniform(rng, cfg.ego_speed);
            // brake to a stop with the front bumper just short of the
            // crossing, then the pedestrian passes in front
            let t_stop = rng.gen_range(1.5..2.5);
            let accel = -v0 / t_stop;
            let s_c = 0.5 * v0 * t_stop + EGO_SIZE[0] / 2.0 + rng.gen_range(0.6..1.0);
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let speed = uniform(rng, cfg.pedestrian_speed);
            let t_center = rng.gen_range(t_stop..3.0);
            let pos = road.point(s_c, side * speed * t_center);
            let ped = AgentState {
                id: 0,
                class: AgentClass::Pedestrian,
                pos,
                heading: road.heading(s_c) - side * FRAC_PI_2,
                speed,
                yaw_rate: 0.0,
                size: random_size(rng, AgentClass::Pedestrian),
            };
            Draft {
                kind,
                road,
                command: Command::Straight,
                ego: EgoPlan {
                    speed: v0,
                    accel,
                    lateral_target: 0.0,
                },
                scenario_agents: vec![ped],
                crosswalk: Some(s_c),
            }
        }
        ScenarioKind::LaneChange => {
            let road = Road {
                curvature: mild_curvature(rng),
            };
            let left = rng.gen_bool(0.5);
            let target = if left { LANE_WIDTH } else { -LANE_WIDTH };
            let v0 = uniform(rng, cfg.ego_speed);
            let ahead = rng.gen_bool(0.5);
            let (s, speed) = if ahead {
                (rng.gen_range(15.0..35.0), v0 + rng.gen_range(0.0..2.0))
            } else {
                (
                    rng.gen_range(-25.0..-12.0),
                    (v0 - rng.gen_range(0.0..2.0)).max(0.0),
                )
            };
            let other = road.lane_agent(
                AgentClass::Car,
                s,
                target,
                speed,
                random_size(rng, AgentClass::Car),
            );
            let mut scenario_agents = vec![other];
            if rng.gen_bool(0.75) {
                let side = if left { -1.0 } else { 1.0 };
                scenario_agents.push(neighbor(rng, &road, side, v0, cfg));
            }
            Draft {
                kind,
                road,
                command: if left { Command::Left } else { Command::Right },
                ego: EgoPlan {
                    speed: v0,
                    accel: 0.0,
                    lateral_target: target,
                },
                scenario_agents,
                crosswalk: None,
            }
        }
        ScenarioKind::Turn => {
            let left = rng.gen_bool(0.5);
            let k = rng.gen_range(1.0 / 40.0..1.0 / 20.0);
            let road = Road {
                curvature: if left { k } else { -k },
            };
            let v0: f64 = rng.gen_range(4.0..7.0);
            Draft {
                kind,
                road,
                command: if left { Command::Left } else { Command::Right },
                ego: EgoPlan {
                    speed: v0,
                    accel: 0.0,
                    lateral_target: 0.0,
                },
                scenario_agents: Vec::new(),
                crosswalk: None,
            }
        }
    }
}

/// Car or cyclist in the adjacent lane on `side`, roughly alongside the ego
/// and drifting a little toward it.
fn neighbor(
    rng: &mut ChaCha8Rng,
    road: &Road,
    side: f64,
    ego_speed: f64,
    cfg: &GeneratorConfig,
) -> AgentState {
    let s = rng.gen_range(-5.0..5.0);
    let l = side * rng.gen_range(3.0..3.6);
    if rng.gen_bool(0.8) {
        let speed = (ego_speed + rng.gen_range(-2.0..2.0)).max(0.0);
        road.lane_agent(
            AgentClass::Car,
            s,
            l,
            speed,
            random_size(rng, AgentClass::Car),
        )
    } else {
        let speed = uniform(rng, cfg.cyclist_speed);
        road.lane_agent(
            AgentClass::Cyclist,
            s,
            l,
            speed,
            random_size(rng, AgentClass::Cyclist),
        )
    }
}

fn background_agent(rng: &mut ChaCha8Rng, road: &Road, cfg: &GeneratorConfig) -> AgentState {
    let u: f64 = rng.gen();
    let s = rng.gen_range(-0.7 * cfg.extent..0.8 * cfg.extent);
    if u < 0.6 {
        let size = random_size(rng, AgentClass::Car);
        if rng.gen_bool(0.2) {
            // parked at the kerb
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            road.lane_agent(AgentClass::Car, s, side * 6.5, 0.0, size)
        } else {
            let lane = [-LANE_WIDTH, 0.0, LANE_WIDTH][rng.gen_range(0..3)];
            let speed = uniform(rng, cfg.car_speed);
            road.lane_agent(
                AgentClass::Car,
                s,
                lane + rng.gen_range(-0.3..0.3),
                speed,
                size,
            )
        }
    } else if u < 0.85 {
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let l = side * rng.gen_range(6.5..9.0);
        let speed = uniform(rng, cfg.pedestrian_speed);
        let mut a = road.lane_agent(
            AgentClass::Pedestrian,
            s,
            l,
            speed,
            random_size(rng, AgentClass::Pedestrian),
        );
        if rng.gen_bool(0.5) {
            a.heading += PI;
            a.yaw_rate = -a.yaw_rate;
        }
        a
    } else {
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let l = side * rng.gen_range(4.6..5.0);
        let speed = uniform(rng, cfg.cyclist_speed);
        road.lane_agent(
            AgentClass::Cyclist,
            s,
            l,
            speed,
            random_size(rng, AgentClass::Cyclist),
        )
    }
}

fn overlaps_at_start(a: &AgentState, others: &[AgentState]) -> bool {
    let ra = OrientedRect::new(a.pos, a.heading, a.size);
    let ego = OrientedRect::new([0.0, 0.0], 0.0, EGO_SIZE);
    rect_intersect(&ra, &ego)
        || others
            .iter()
            .any(|b| rect_intersect(&ra, &OrientedRect::new(b.pos, b.heading, b.size)))
}

fn build_map(road: &Road, crosswalk: Option<f64>, cfg: &GeneratorConfig) -> Vec<MapPolyline> {
    let half = 1.5 * LANE_WIDTH;
    let mut map = Vec::new();
    for (kind, l) in [
        (MapKind::RoadBoundary, -half),
        (MapKind::LaneDivider, -LANE_WIDTH / 2.0),
        (MapKind::LaneDivider, LANE_WIDTH / 2.0),
        (MapKind::RoadBoundary, half),
    ] {
        let points = road.polyline(l, cfg.extent);
        if points.len() >= 2 {
            map.push(MapPolyline { kind, points });
        }
    }
    if let Some(s) = crosswalk {
        let points = vec![road.point(s, -half), road.point(s, half)];
        if points.iter().all(|p| norm(*p) <= cfg.extent) {
            map.push(MapPolyline {
                kind: MapKind::PedCrossing,
                points,
            });
        }
    }
    map.truncate(cfg.max_map);
    map
}

fn attempt(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> (ScenarioKind, Scene) {
    let d = draft(rng, cfg);
    let mut agents: Vec<AgentState> = Vec::new();
    let mut candidates = d.scenario_agents.clone();
    if d.kind != ScenarioKind::Turn {
        let n_bg = rng.gen_range(0..=cfg.background_agents);
        for _ in 0..n_bg {
            candidates.push(background_agent(rng, &d.road, cfg));
        }
    }
    let future_limit = FUTURE_EXTENT_FACTOR * cfg.extent;
    for a in candidates {
        if agents.len() >= cfg.max_agents {
            break;
        }
        if norm(a.pos) > cfg.extent || overlaps_at_start(&a, &agents) {
            continue;
        }
        if rollout_ct(&a, STEP_DT, HORIZON_STEPS)
            .iter()
            .any(|p| norm(*p) > future_limit)
        {
            continue;
        }
        agents.push(a);
    }
    for (i, a) in agents.iter_mut().enumerate() {
        a.id = i as u32 + 1;
    }
    let gt_agents = agents
        .iter()
        .map(|a| rollout_ct(a, STEP_DT, HORIZON_STEPS))
        .collect();
    let ego = AgentState {
        id: 0,
        class: AgentClass::Car,
        pos: [0.0, 0.0],
        heading: 0.0,
        speed: d.ego.speed,
        yaw_rate: d.ego.speed * d.road.curvature,
        size: EGO_SIZE,
    };
    let scene = Scene {
        ego,
        agents,
        map: build_map(&d.road, d.crosswalk, cfg),
        gt_future: GtFuture {
            ego: d.ego.future(&d.road),
            agents: gt_agents,
        },
        command: d.command,
    };
    (d.kind, scene)
}

/// Generates the scene for `seed`, retrying until the ego ground truth is
/// collision-free.
pub fn generate_scene(seed: u64, cfg: &GeneratorConfig) -> Result<Scene> {
    generate_scene_with_kind(seed, cfg).map(|(_, s)| s)
}

pub fn generate_scene_with_kind(seed: u64, cfg: &GeneratorConfig) -> Result<(ScenarioKind, Scene)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.retries {
        let (kind, scene) = attempt(&mut rng, cfg);
        if !collision_flags(&scene.gt_future.ego, &scene, EGO_SIZE)
            .iter()
            .any(|&c| c)
        {
            return Ok((kind, scene));
        }
    }
    Err(Error::Unsatisfiable {
        seed,
        retries: cfg.retries,
    })
}

/// Checks every scene invariant; returns the first violation. Negated
/// comparisons also reject NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_scene(scene: &Scene, cfg: &GeneratorConfig) -> std::result::Result<(), String> {
    let r = cfg.extent;
    let check_agent = |a: &AgentState, what: &str| -> std::result::Result<(), String> {
        if !(a.speed >= 0.0 && a.speed.is_finite()) {
            return Err(format!("{what}: negative or non-finite speed"));
        }
        if !(a.size[0] > 0.0 && a.size[1] > 0.0) {
            return Err(format!("{what}: non-positive size"));
        }
        if !(norm(a.pos) <= r) {
            return Err(format!("{what}: position outside extent"));
        }
        if !(a.heading.is_finite() && a.yaw_rate.is_finite()) {
            return Err(format!("{what}: non-finite heading"));
        }
        Ok(())
    };
    if scene.ego.id != 0 || scene.ego.class != AgentClass::Car || scene.ego.pos != [0.0, 0.0] {
        return Err("ego must be car id 0 at the origin".into());
    }
    check_agent(&scene.ego, "ego")?;
    if scene.agents.len() > cfg.max_agents {
        return Err("too many agents".into());
    }
    if scene.map.len() > cfg.max_map {
        return Err("too many map polylines".into());
    }
    for a in &scene.agents {
        check_agent(a, &format!("agent {}", a.id))?;
    }
    for (i, m) in scene.map.iter().enumerate() {
        if !(2..=MAX_POLYLINE_POINTS).contains(&m.points.len()) {
            return Err(format!("polyline {i}: bad point count"));
        }
        if m.points.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("polyline {i}: repeated consecutive point"));
        }
        if m.points.iter().any(|p| !(norm(*p) <= r)) {
            return Err(format!("polyline {i}: point outside extent"));
        }
    }
    if scene.gt_future.ego.len() != HORIZON_STEPS {
        return Err("ego future length".into());
    }
    if scene.gt_future.agents.len() != scene.agents.len() {
        return Err("agent future count".into());
    }
    for f in &scene.gt_future.agents {
        if f.len() != HORIZON_STEPS {
            return Err("agent future length".into());
        }
        if f.iter().any(|p| !(norm(*p) <= FUTURE_EXTENT_FACTOR * r)) {
            return Err("agent future leaves 1.5x extent".into());
        }
    }
    if collision_flags(&scene.gt_future.ego, scene, EGO_SIZE)
        .iter()
        .any(|&c| c)
    {
        return Err("ego ground truth collides".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(speed: f64, heading: f64, yaw_rate: f64) -> AgentState {
        AgentState {
            id: 1,
            class: AgentClass::Car,
            pos: [0.0, 0.0],
            heading,
            speed,
            yaw_rate,
            size: [4.0, 2.0],
        }
    }

    #[test]
    fn static_rollout_stays_put() {
        let mut s = state(0.0, 1.0, 0.3);
        s.pos = [3.0, -2.0];
        assert!(rollout_ct(&s, 0.5, 6).iter().all(|p| *p == [3.0, -2.0]));
    }

    #[test]
    fn straight_rollout() {
        let w = rollout_ct(&state(1.0, 0.0, 0.0), 0.5, 6);
        for (k, p) in w.iter().enumerate() {
            assert!((p[0] - 0.5 * (k + 1) as f64).abs() < 1e-12);
            assert_eq!(p[1], 0.0);
        }
    }

    #[test]
    fn turning_rollout_heading_change() {
        let s = state(1.0, 0.0, PI / 3.0);
        let states = rollout_ct_states(&s, 0.5, 6);
        assert!((states[5].1 - s.heading - PI).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let cfg = GeneratorConfig::default();
        assert_eq!(
            generate_scene(17, &cfg).unwrap(),
            generate_scene(17, &cfg).unwrap()
        );
        assert_ne!(
            generate_scene(17, &cfg).unwrap(),
            generate_scene(18, &cfg).unwrap()
        );
    }

    #[test]
    fn zero_agents_config() {
        let cfg = GeneratorConfig {
            max_agents: 0,
            ..Default::default()
        };
        for seed in 0..20 {
            assert!(generate_scene(seed, &cfg).unwrap().agents.is_empty());
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = GeneratorConfig {
            car_speed: (5.0, 1.0),
            ..Default::default()
        };
        assert!(matches!(generate_scene(0, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn scenario_mix_is_respected() {
        let cfg = GeneratorConfig {
            mix: ScenarioMix {
                following: 0.0,
                crossing: 1.0,
                lane_change: 0.0,
                turn: 0.0,
            },
            ..Default::default()
        };
        for seed in 0..10 {
            let (kind, scene) = generate_scene_with_kind(seed, &cfg).unwrap();
            assert_eq!(kind, ScenarioKind::CrossingPedestrian);
            assert!(scene.map.iter().any(|m| m.kind == MapKind::PedCrossing));
        }
    }

    #[test]
    fn lane_change_commands_match_offset() {
        let cfg = GeneratorConfig {
            mix: ScenarioMix {
                following: 0.0,
                crossing: 0.0,
                lane_change: 1.0,
                turn: 0.0,
            },
            ..Default::default()
        };
        for seed in 0..10 {
            let scene = generate_scene(seed, &cfg).unwrap();
            let last = scene.gt_future.ego[5];
            match scene.command {
                Command::Left => assert!(last[1] > 1.0),
                Command::Right => assert!(last[1] < -1.0),
                Command::Straight => panic!("lane change must turn"),
            }
        }
    }
}
