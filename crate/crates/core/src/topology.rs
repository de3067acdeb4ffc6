//! Ego/agent self-attention followed by cross-attention to map tokens.
//!
//! Each layer applies three residual sublayers to the concatenated
//! `[ego; agents]` rows: self-attention, cross-attention to the map (keys and
//! values only), and a feed-forward map. Masked rows never take part and
//! come out exactly zero.

use numkit::{scaled_dot_attention, Binder, ParamId, Tape, Var};

use crate::error::{Error, Result};
use crate::nn::{scatter_rows, valid_indices, Builder, Init, Linear};

#[derive(Clone, Debug)]
pub struct TgmLayer {
    pub self_q: ParamId,
    pub self_k: ParamId,
    pub self_v: ParamId,
    pub cross_q: ParamId,
    pub cross_k: ParamId,
    pub cross_v: ParamId,
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Clone, Debug)]
pub struct TgmParams {
    pub d: usize,
    pub heads: usize,
    pub layers: Vec<TgmLayer>,
}

impl TgmParams {
    /// Value projections and the second feed-forward map start at zero so
    /// every residual branch is initially the identity.
    pub fn new(bld: &mut Builder, d: usize, layers: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "model.heads = {heads} must divide model.d = {d}"
            )));
        }
        let layers = (0..layers)
            .map(|l| {
                let n = |s: &str| format!("tgm.{l}.{s}");
                Ok(TgmLayer {
                    self_q: bld.param(&n("self_q"), d, d, Init::Xavier)?,
                    self_k: bld.param(&n("self_k"), d, d, Init::Xavier)?,
                    self_v: bld.param(&n("self_v"), d, d, Init::Zero)?,
                    cross_q: bld.param(&n("cross_q"), d, d, Init::Xavier)?,
                    cross_k: bld.param(&n("cross_k"), d, d, Init::Xavier)?,
                    cross_v: bld.param(&n("cross_v"), d, d, Init::Zero)?,
                    ff1: Linear::new(bld, &n("ff1"), d, d, Init::Xavier)?,
                    ff2: Linear::new(bld, &n("ff2"), d, d, Init::Zero)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { d, heads, layers })
    }
}

/// `[ego; agents]` with the mask extended by `true` for the ego row.
pub fn concat_queries(
    tape: &mut Tape,
    ego: Var,
    agents: Var,
    agent_mask: &[bool],
) -> Result<(Var, Vec<bool>)> {
    if tape.value(agents).rows() != agent_mask.len() {
        return Err(Error::Data(format!(
            "{} agent rows with a mask of length {}",
            tape.value(agents).rows(),
            agent_mask.len()
        )));
    }
    let x = tape.concat_rows(&[ego, agents])?;
    let mut mask = Vec::with_capacity(agent_mask.len() + 1);
    mask.push(true);
    mask.extend_from_slice(agent_mask);
    Ok((x, mask))
}

/// Attention split evenly over `heads` column groups.
pub fn multi_head_attention(tape: &mut Tape, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    if heads == 1 {
        return Ok(scaled_dot_attention(tape, q, k, v, None)?);
    }
    let d = tape.value(q).cols();
    let dh = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        outs.push(scaled_dot_attention(tape, qh, kh, vh, None)?);
    }
    Ok(tape.concat_cols(&outs)?)
}

/// Refines `[ego; agents]`; returns `(ego 1 x d, agents N_a x d)`.
pub fn tgm_forward(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &TgmParams,
    x: Var,
    mask: &[bool],
    map: Var,
    map_mask: &[bool],
) -> Result<(Var, Var)> {
    if mask.first() != Some(&true) {
        return Err(Error::Data("ego row must not be masked".into()));
    }
    if tape.value(x).cols() != params.d || tape.value(map).cols() != params.d {
        return Err(Error::Data(
            "token width does not match the topology module".into(),
        ));
    }
    let rows = valid_indices(mask);
    let mut h = tape.gather_rows(x, &rows)?;
    let map_rows = valid_indices(map_mask);
    let m = if map_rows.is_empty() {
        None
    } else {
        Some(tape.gather_rows(map, &map_rows)?)
    };
    for layer in &params.layers {
        let wq = bind.var(tape, layer.self_q);
        let wk = bind.var(tape, layer.self_k);
        let wv = bind.var(tape, layer.self_v);
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(h, wk)?;
        let v = tape.matmul(h, wv)?;
        let a = multi_head_attention(tape, q, k, v, params.heads)?;
        h = tape.add(h, a)?;

        if let Some(m) = m {
            let wq = bind.var(tape, layer.cross_q);
            let wk = bind.var(tape, layer.cross_k);
            let wv = bind.var(tape, layer.cross_v);
            let q = tape.matmul(h, wq)?;
            let k = tape.matmul(m, wk)?;
            let v = tape.matmul(m, wv)?;
            let a = multi_head_attention(tape, q, k, v, params.heads)?;
            h = tape.add(h, a)?;
        }

        let f = layer.ff1.forward(tape, bind, h)?;
        let f = tape.tanh(f);
        let f = layer.ff2.forward(tape, bind, f)?;
        h = tape.add(h, f)?;
    }
    let out = scatter_rows(tape, h, mask)?;
    let n = mask.len() - 1;
    let ego = tape.slice_rows(out, 0, 1)?;
    let agents = tape.slice_rows(out, 1, n)?;
    Ok((ego, agents))
}
