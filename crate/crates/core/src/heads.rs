//! Planning, motion and auxiliary regression heads.
//!
//! Trajectory heads emit waypoints in units of [`TRAJ_UNIT`] meters; motion
//! outputs are offsets from each agent's current position.

use numkit::{Binder, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::nn::{valid_indices, Builder, Init, Mlp};
use crate::scene::{AgentState, Command, MapPolyline, Point, HORIZON_STEPS};
use crate::tokenizer::{map_points, MAP_POINTS};

pub const TRAJ_UNIT: f64 = 10.0;
pub const TRAJ_OUT: usize = 2 * HORIZON_STEPS;
pub const DET_OUT: usize = 6;
pub const MAP_OUT: usize = 2 * MAP_POINTS;

#[derive(Clone, Debug)]
pub struct HeadParams {
    pub plan: Mlp,
    pub motion: Mlp,
    pub det: Mlp,
    pub map: Mlp,
}

impl HeadParams {
    pub fn new(bld: &mut Builder, d: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            plan: Mlp::new(bld, "head.plan", d + 3, hidden, TRAJ_OUT, Init::Zero)?,
            motion: Mlp::new(bld, "head.motion", d, hidden, TRAJ_OUT, Init::Zero)?,
            det: Mlp::new(bld, "head.det", d, hidden, DET_OUT, Init::Zero)?,
            map: Mlp::new(bld, "head.map", d, hidden, MAP_OUT, Init::Zero)?,
        })
    }
}

/// Planned ego trajectory: `6 x 2` meters.
pub fn plan_head(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &HeadParams,
    ego: Var,
    command: Command,
) -> Result<Var> {
    let cmd = tape.constant(Tensor::row_vector(&command.one_hot()));
    let x = tape.concat_cols(&[ego, cmd])?;
    let y = params.plan.forward(tape, bind, x)?;
    let y = tape.reshape(y, HORIZON_STEPS, 2)?;
    Ok(tape.scale(y, TRAJ_UNIT))
}

/// Trajectories of the unmasked agents, one `[x1, y1, .., x6, y6]` row each
/// in meters, or `None` if every agent is masked. `origins` holds the current
/// positions of the unmasked agents in mask order.
pub fn motion_head(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &HeadParams,
    agents: Var,
    mask: &[bool],
    origins: &[Point],
) -> Result<Option<Var>> {
    let rows = valid_indices(mask);
    if rows.is_empty() {
        return Ok(None);
    }
    if rows.len() != origins.len() {
        return Err(Error::Data("one origin per unmasked agent required".into()));
    }
    let x = tape.gather_rows(agents, &rows)?;
    let y = params.motion.forward(tape, bind, x)?;
    let y = tape.scale(y, TRAJ_UNIT);
    let offsets = Tensor::from_fn(rows.len(), TRAJ_OUT, |i, j| origins[i][j % 2]);
    let offsets = tape.constant(offsets);
    Ok(Some(tape.add(y, offsets)?))
}

/// Mean squared Euclidean distance between corresponding waypoints. Each row
/// holds consecutive `(x, y)` pairs.
pub fn imitation_loss(tape: &mut Tape, pred: Var, gt: Var) -> Result<Var> {
    let (a, b) = (tape.value(pred).shape(), tape.value(gt).shape());
    if a != b || a.1 % 2 != 0 || a.0 * a.1 == 0 {
        return Err(Error::Num(numkit::NumError::Shape {
            op: "imitation_loss",
            lhs: a,
            rhs: b,
        }));
    }
    let waypoints = (a.0 * a.1 / 2) as f64;
    let diff = tape.sub(pred, gt)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / waypoints))
}

/// Regression target of the detection head.
pub fn det_target(a: &AgentState, extent: f64) -> [f64; DET_OUT] {
    [
        a.pos[0] / extent,
        a.pos[1] / extent,
        a.heading.sin(),
        a.heading.cos(),
        a.speed / 10.0,
        (a.size[0] * a.size[1]).ln(),
    ]
}

/// Regression target of the map head.
pub fn map_target(m: &MapPolyline, extent: f64) -> [f64; MAP_OUT] {
    let mut t = [0.0; MAP_OUT];
    for (i, p) in map_points(m).iter().enumerate() {
        t[2 * i] = p[0] / extent;
        t[2 * i + 1] = p[1] / extent;
    }
    t
}

fn masked_mse(
    tape: &mut Tape,
    bind: &mut Binder,
    mlp: &Mlp,
    tokens: Var,
    mask: &[bool],
    targets: Vec<Vec<f64>>,
) -> Result<Var> {
    let rows = valid_indices(mask);
    if rows.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    if rows.len() != targets.len() {
        return Err(Error::Data("one target per unmasked token required".into()));
    }
    let x = tape.gather_rows(tokens, &rows)?;
    let y = mlp.forward(tape, bind, x)?;
    let t = tape.constant(Tensor::from_rows(&targets)?);
    let diff = tape.sub(y, t)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// `(det_loss, map_loss)`: mean squared errors over unmasked slots, zero
/// when there are none.
#[allow(clippy::too_many_arguments)]
pub fn aux_losses(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &HeadParams,
    agents: Var,
    agent_mask: &[bool],
    map: Var,
    map_mask: &[bool],
    agent_states: &[AgentState],
    polylines: &[MapPolyline],
    extent: f64,
) -> Result<(Var, Var)> {
    let det_t = agent_states
        .iter()
        .map(|a| det_target(a, extent).to_vec())
        .collect();
    let map_t = polylines
        .iter()
        .map(|m| map_target(m, extent).to_vec())
        .collect();
    let det = masked_mse(tape, bind, &params.det, agents, agent_mask, det_t)?;
    let map = masked_mse(tape, bind, &params.map, map, map_mask, map_t)?;
    Ok((det, map))
}
