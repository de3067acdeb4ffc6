//! Rule-based scene descriptions over a closed token vocabulary.
//!
//! The attention description (ALD) lists only agents that interact with the
//! ego's future path; the global description (GLD) lists every agent nearby.
//! Both share one clause grammar: `class side distance motion`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{dist, norm, AgentClass, AgentState, Point, Scene, HORIZON_STEPS, STEP_DT};

pub const VOCAB_SIZE: usize = 18;
pub const MAX_LEN: usize = 24;
pub const CLAUSE_LEN: usize = 4;
/// Most clauses that fit between BOS and EOS within [`MAX_LEN`].
pub const MAX_CLAUSES: usize = 4;

/// Minimum predicted separation that makes an agent relevant.
pub const CORRIDOR: f64 = 3.5;
/// Agents closer than this right now are always relevant.
pub const PROXIMITY: f64 = 5.0;
pub const GLOBAL_RADIUS: f64 = 30.0;
const STATIC_RATE: f64 = 0.2;
const CROSSING_SPEED: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Token {
    Bos = 0,
    Eos,
    None,
    Sep,
    Car,
    Ped,
    Cyclist,
    Ahead,
    Behind,
    Left,
    Right,
    Near,
    Mid,
    Far,
    Approaching,
    Receding,
    Crossing,
    Static,
}

impl Token {
    pub const ALL: [Token; VOCAB_SIZE] = [
        Token::Bos,
        Token::Eos,
        Token::None,
        Token::Sep,
        Token::Car,
        Token::Ped,
        Token::Cyclist,
        Token::Ahead,
        Token::Behind,
        Token::Left,
        Token::Right,
        Token::Near,
        Token::Mid,
        Token::Far,
        Token::Approaching,
        Token::Receding,
        Token::Crossing,
        Token::Static,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Token> {
        Token::ALL.get(id).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Token::Bos => "BOS",
            Token::Eos => "EOS",
            Token::None => "NONE",
            Token::Sep => "SEP",
            Token::Car => "CAR",
            Token::Ped => "PED",
            Token::Cyclist => "CYCLIST",
            Token::Ahead => "AHEAD",
            Token::Behind => "BEHIND",
            Token::Left => "LEFT",
            Token::Right => "RIGHT",
            Token::Near => "NEAR",
            Token::Mid => "MID",
            Token::Far => "FAR",
            Token::Approaching => "APPROACHING",
            Token::Receding => "RECEDING",
            Token::Crossing => "CROSSING",
            Token::Static => "STATIC",
        }
    }

    fn slot(self) -> Option<usize> {
        match self.id() {
            4..=6 => Some(0),
            7..=10 => Some(1),
            11..=13 => Some(2),
            14..=17 => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Clause = [Token; CLAUSE_LEN];

/// A grammatical token sequence. Construct through [`Description::new`] or
/// [`Description::from_ids`]; both validate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Description {
    tokens: Vec<Token>,
}

impl TryFrom<Vec<u8>> for Description {
    type Error = Error;

    fn try_from(ids: Vec<u8>) -> Result<Self> {
        Description::from_ids(ids.into_iter().map(usize::from))
    }
}

impl From<Description> for Vec<u8> {
    fn from(d: Description) -> Self {
        d.tokens.iter().map(|t| *t as u8).collect()
    }
}

/// Checks the framing and clause grammar.
pub fn validate_tokens(tokens: &[Token]) -> Result<()> {
    let bad = |m: &str| Err(Error::Grammar(m.to_string()));
    if tokens.len() > MAX_LEN {
        return bad("longer than the maximum length");
    }
    if tokens.len() < 3 || tokens[0] != Token::Bos || tokens[tokens.len() - 1] != Token::Eos {
        return bad("must start with BOS and end with EOS around a non-empty body");
    }
    let body = &tokens[1..tokens.len() - 1];
    if body == [Token::None] {
        return Ok(());
    }
    if !(body.len() + 1).is_multiple_of(CLAUSE_LEN + 1) {
        return bad("body is not a SEP-separated list of 4-token clauses");
    }
    for (i, t) in body.iter().enumerate() {
        let pos = i % (CLAUSE_LEN + 1);
        let ok = if pos == CLAUSE_LEN {
            *t == Token::Sep
        } else {
            t.slot() == Some(pos)
        };
        if !ok {
            return bad(&format!("unexpected {t} at body position {i}"));
        }
    }
    Ok(())
}

impl Description {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        validate_tokens(&tokens)?;
        Ok(Self { tokens })
    }

    pub fn from_ids(ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let tokens = ids
            .into_iter()
            .map(|id| {
                Token::from_id(id).ok_or_else(|| Error::Grammar(format!("unknown token id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(tokens)
    }

    pub fn from_clauses(clauses: &[Clause]) -> Self {
        let mut tokens = vec![Token::Bos];
        if clauses.is_empty() {
            tokens.push(Token::None);
        }
        for (i, c) in clauses.iter().enumerate() {
            if i > 0 {
                tokens.push(Token::Sep);
            }
            tokens.extend_from_slice(c);
        }
        tokens.push(Token::Eos);
        debug_assert!(validate_tokens(&tokens).is_ok());
        Self { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn ids(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.id()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens strictly between BOS and EOS.
    pub fn body(&self) -> &[Token] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn clauses(&self) -> Vec<Clause> {
        self.body()
            .chunks(CLAUSE_LEN + 1)
            .filter(|c| c.len() >= CLAUSE_LEN)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect()
    }

    /// Human-readable body, one clause per `;`.
    pub fn text(&self) -> String {
        let clauses = self.clauses();
        if clauses.is_empty() {
            return "NONE".to_string();
        }
        clauses
            .iter()
            .map(|c| c.map(|t| t.as_str()).join(" "))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words: Vec<&str> = self.tokens.iter().map(|t| t.as_str()).collect();
        f.write_str(&words.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionMode {
    Ald,
    Gld,
}

impl std::str::FromStr for DescriptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ald" => Ok(Self::Ald),
            "gld" => Ok(Self::Gld),
            _ => Err(Error::Config(format!("unknown description mode {s:?}"))),
        }
    }
}

impl DescriptionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ald => "ald",
            Self::Gld => "gld",
        }
    }
}

pub fn describe(scene: &Scene, mode: DescriptionMode) -> Description {
    match mode {
        DescriptionMode::Ald => attention_description(scene),
        DescriptionMode::Gld => global_description(scene),
    }
}

fn class_token(c: AgentClass) -> Token {
    match c {
        AgentClass::Car => Token::Car,
        AgentClass::Pedestrian => Token::Ped,
        AgentClass::Cyclist => Token::Cyclist,
    }
}

fn side_token(p: Point) -> Token {
    if p[1].abs() <= p[0].abs() {
        if p[0] >= 0.0 {
            Token::Ahead
        } else {
            Token::Behind
        }
    } else if p[1] > 0.0 {
        Token::Left
    } else {
        Token::Right
    }
}

fn distance_token(d: f64) -> Token {
    if d < 10.0 {
        Token::Near
    } else if d < 25.0 {
        Token::Mid
    } else {
        Token::Far
    }
}

fn motion_token(agent: &AgentState, ego_velocity: Point) -> Token {
    let v = agent.velocity();
    if agent.class == AgentClass::Pedestrian && v[1].abs() > CROSSING_SPEED {
        return Token::Crossing;
    }
    let d = norm(agent.pos);
    let rate = if d > 0.0 {
        (agent.pos[0] * (v[0] - ego_velocity[0]) + agent.pos[1] * (v[1] - ego_velocity[1])) / d
    } else {
        0.0
    };
    if rate.abs() < STATIC_RATE {
        Token::Static
    } else if rate < 0.0 {
        Token::Approaching
    } else {
        Token::Receding
    }
}

/// Clause describing `agent` from its state at t = 0.
pub fn clause(agent: &AgentState, ego_velocity: Point) -> Clause {
    [
        class_token(agent.class),
        side_token(agent.pos),
        distance_token(norm(agent.pos)),
        motion_token(agent, ego_velocity),
    ]
}

/// Minimum time-aligned distance between the agent's constant-velocity
/// rollout and the ego ground truth, with the step index where it occurs.
pub fn closest_approach(agent: &AgentState, scene: &Scene) -> (f64, usize) {
    let v = agent.velocity();
    let mut best = (f64::INFINITY, 0);
    for k in 0..=HORIZON_STEPS {
        let t = STEP_DT * k as f64;
        let a = [agent.pos[0] + v[0] * t, agent.pos[1] + v[1] * t];
        let e = if k == 0 {
            [0.0, 0.0]
        } else {
            scene
                .gt_future
                .ego
                .get(k - 1)
                .copied()
                .unwrap_or([0.0, 0.0])
        };
        let d = dist(a, e);
        if d < best.0 {
            best = (d, k);
        }
    }
    best
}

pub fn is_attention_relevant(agent: &AgentState, scene: &Scene) -> bool {
    closest_approach(agent, scene).0 < CORRIDOR || norm(agent.pos) < PROXIMITY
}

fn by_key(a: &(f64, f64, u32), b: &(f64, f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.cmp(&b.2))
}

pub fn attention_description(scene: &Scene) -> Description {
    let ego_v = scene.ego.velocity();
    let mut ranked: Vec<((f64, f64, u32), &AgentState)> = scene
        .agents
        .iter()
        .filter_map(|a| {
            let (d_min, k) = closest_approach(a, scene);
            let d_now = norm(a.pos);
            (d_min < CORRIDOR || d_now < PROXIMITY).then_some(((k as f64, d_now, a.id), a))
        })
        .collect();
    ranked.sort_by(|x, y| by_key(&x.0, &y.0));
    let clauses: Vec<Clause> = ranked
        .iter()
        .take(MAX_CLAUSES)
        .map(|(_, a)| clause(a, ego_v))
        .collect();
    Description::from_clauses(&clauses)
}

pub fn global_description(scene: &Scene) -> Description {
    let ego_v = scene.ego.velocity();
    let mut ranked: Vec<((f64, f64, u32), &AgentState)> = scene
        .agents
        .iter()
        .filter(|a| norm(a.pos) <= GLOBAL_RADIUS)
        .map(|a| ((norm(a.pos), 0.0, a.id), a))
        .collect();
    ranked.sort_by(|x, y| by_key(&x.0, &y.0));
    let clauses: Vec<Clause> = ranked
        .iter()
        .take(MAX_CLAUSES)
        .map(|(_, a)| clause(a, ego_v))
        .collect();
    Description::from_clauses(&clauses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Command, GtFuture};

    pub(crate) fn car(id: u32, pos: Point, heading: f64, speed: f64) -> AgentState {
        AgentState {
            id,
            class: AgentClass::Car,
            pos,
            heading,
            speed,
            yaw_rate: 0.0,
            size: [4.5, 2.0],
        }
    }

    fn straight_scene(agents: Vec<AgentState>, ego_speed: f64) -> Scene {
        let ego_future = (1..=6).map(|k| [ego_speed * 0.5 * k as f64, 0.0]).collect();
        let agent_futures = agents
            .iter()
            .map(|a| crate::scenegen::rollout_ct(a, 0.5, 6))
            .collect();
        Scene {
            ego: car(0, [0.0, 0.0], 0.0, ego_speed),
            agents,
            map: vec![],
            gt_future: GtFuture {
                ego: ego_future,
                agents: agent_futures,
            },
            command: Command::Straight,
        }
    }

    #[test]
    fn empty_scene_is_none() {
        let s = straight_scene(vec![], 5.0);
        let expect = vec![Token::Bos, Token::None, Token::Eos];
        assert_eq!(attention_description(&s).tokens(), expect);
        assert_eq!(global_description(&s).tokens(), expect);
    }

    #[test]
    fn oncoming_car_ahead() {
        let s = straight_scene(vec![car(1, [8.0, 0.0], std::f64::consts::PI, 2.0)], 2.0);
        assert_eq!(
            attention_description(&s).tokens(),
            [
                Token::Bos,
                Token::Car,
                Token::Ahead,
                Token::Near,
                Token::Approaching,
                Token::Eos
            ]
        );
    }

    #[test]
    fn receding_car_far_behind_is_excluded() {
        let s = straight_scene(vec![car(1, [-50.0, 0.0], std::f64::consts::PI, 10.0)], 5.0);
        assert_eq!(
            attention_description(&s).tokens(),
            [Token::Bos, Token::None, Token::Eos]
        );
    }

    #[test]
    fn gld_lists_nearby_irrelevant_agent() {
        // one car right in the ego path, one parked 8 m to the left
        let s = straight_scene(
            vec![car(1, [12.0, 0.0], 0.0, 1.0), car(2, [0.0, 8.0], 0.0, 0.0)],
            5.0,
        );
        assert_eq!(attention_description(&s).clauses().len(), 1);
        assert_eq!(global_description(&s).clauses().len(), 2);
    }

    #[test]
    fn relevance_by_proximity_alone() {
        // beside the ego and receding sideways: never within the corridor later
        let mut a = car(1, [0.0, 4.0], std::f64::consts::FRAC_PI_2, 6.0);
        a.class = AgentClass::Cyclist;
        let s = straight_scene(vec![a], 0.0);
        let d = attention_description(&s);
        assert_eq!(
            d.clauses(),
            vec![[Token::Cyclist, Token::Left, Token::Near, Token::Receding]]
        );
    }

    #[test]
    fn crossing_pedestrian() {
        let mut p = car(1, [6.0, 2.0], -std::f64::consts::FRAC_PI_2, 1.2);
        p.class = AgentClass::Pedestrian;
        p.size = [0.6, 0.6];
        let s = straight_scene(vec![p], 1.0);
        assert_eq!(attention_description(&s).clauses()[0][3], Token::Crossing);
    }

    #[test]
    fn ordering_by_time_of_closest_approach() {
        // both relevant; the farther one is met earlier because it is oncoming
        let s = straight_scene(
            vec![
                car(1, [9.0, 0.0], 0.0, 0.0),
                car(2, [14.0, 0.0], std::f64::consts::PI, 6.0),
            ],
            4.0,
        );
        let clauses = attention_description(&s).clauses();
        assert_eq!(clauses.len(), 2);
        assert_eq!(clauses[0][2], Token::Mid);
        assert_eq!(clauses[1][2], Token::Near);
    }

    #[test]
    fn at_most_four_clauses() {
        let agents = (0..7)
            .map(|i| car(i + 1, [6.0 + 2.0 * i as f64, 3.0], 0.0, 0.0))
            .collect();
        let s = straight_scene(agents, 4.0);
        for d in [attention_description(&s), global_description(&s)] {
            assert_eq!(d.clauses().len(), MAX_CLAUSES);
            assert!(d.len() <= MAX_LEN);
        }
    }

    #[test]
    fn grammar_rejects_malformed() {
        use Token::*;
        let ok = [
            Bos, Car, Ahead, Near, Static, Sep, Ped, Left, Far, Crossing, Eos,
        ];
        assert!(validate_tokens(&ok).is_ok());
        for bad in [
            vec![Bos, Eos],
            vec![Car, Ahead, Near, Static, Eos],
            vec![Bos, Car, Ahead, Near, Static],
            vec![Bos, Ahead, Car, Near, Static, Eos],
            vec![Bos, Car, Ahead, Near, Static, Sep, Eos],
            vec![Bos, None, None, Eos],
            vec![Bos, Car, Ahead, Near, Static, Car, Ahead, Near, Static, Eos],
            vec![Bos, Bos, None, Eos],
        ] {
            assert!(validate_tokens(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn serde_as_integer_array() {
        let d = Description::from_clauses(&[[Token::Car, Token::Right, Token::Far, Token::Static]]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, "[0,4,10,13,17,1]");
        assert_eq!(serde_json::from_str::<Description>(&json).unwrap(), d);
        assert!(serde_json::from_str::<Description>("[0,4,1]").is_err());
    }
}
