//! The full network: tokenizer, topology module, alignment embeddings,
//! description decoder and output heads, sharing one parameter store.

use std::io::{Read, Write};

use numkit::{Binder, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::describer::Description;
use crate::error::{Error, Result};
use crate::heads::{aux_losses, imitation_loss, motion_head, plan_head, HeadParams, TRAJ_UNIT};
use crate::itg::{itg_loss, ItgParams};
use crate::nn::Builder;
use crate::scene::{Point, Scene};
use crate::tokenizer::{BevGrid, TokenizedScene, TokenizerDims, TokenizerParams};
use crate::topology::{concat_queries, tgm_forward, TgmParams};
use crate::vl_align::{embed_description, LangParams};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelDims {
    pub d: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub d_bev: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub n_agents: usize,
    pub n_map: usize,
    pub extent: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d: 64,
            grid_h: 32,
            grid_w: 32,
            d_bev: 16,
            hidden: 64,
            layers: 2,
            heads: 1,
            n_agents: 16,
            n_map: 8,
            extent: 50.0,
        }
    }
}

pub struct Model {
    pub dims: ModelDims,
    pub store: ParamStore,
    pub tokenizer: TokenizerParams,
    pub tgm: TgmParams,
    pub lang: LangParams,
    pub itg: ItgParams,
    pub heads: HeadParams,
}

/// Intermediate tokens of one scene.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub raw: TokenizedScene,
    /// Ego token after the topology module (or the raw one if bypassed).
    pub ego: Var,
    /// Agent tokens after the topology module (or the raw ones if bypassed).
    pub agents: Var,
}

/// Per-scene loss terms. `None` marks a term that was not requested.
#[derive(Clone, Debug, Default)]
pub struct SceneTerms {
    pub plan: Option<Var>,
    pub motion: Option<Var>,
    pub det: Option<Var>,
    pub map: Option<Var>,
    pub itg: Option<Var>,
    /// Scene and description features for the matching loss.
    pub align: Option<(Var, Var)>,
}

/// Which loss terms to build.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TermMask {
    pub plan: bool,
    pub motion: bool,
    pub det: bool,
    pub map: bool,
    pub itm: bool,
    pub itg: bool,
}

impl Model {
    /// Seeded initialization; `all_zero` sets every parameter to zero.
    pub fn new(dims: ModelDims, seed: u64, all_zero: bool) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bld = Builder {
            store: &mut store,
            rng: &mut rng,
            all_zero,
        };
        let tokenizer = TokenizerParams::new(
            &mut bld,
            TokenizerDims {
                grid_h: dims.grid_h,
                grid_w: dims.grid_w,
                extent: dims.extent,
                d: dims.d,
                d_bev: dims.d_bev,
                hidden: dims.hidden,
                n_agents: dims.n_agents,
                n_map: dims.n_map,
            },
        )?;
        let tgm = TgmParams::new(&mut bld, dims.d, dims.layers, dims.heads)?;
        let lang = LangParams::new(&mut bld, dims.d)?;
        let itg = ItgParams::new(&mut bld, dims.d)?;
        let heads = HeadParams::new(&mut bld, dims.d, dims.hidden)?;
        Ok(Self {
            dims,
            store,
            tokenizer,
            tgm,
            lang,
            itg,
            heads,
        })
    }

    pub fn rasterize(&self, scene: &Scene) -> BevGrid {
        self.tokenizer.rasterize(scene)
    }

    /// Scene to (optionally refined) instance tokens.
    pub fn encode(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        scene: &Scene,
        grid: &BevGrid,
        tgm_enabled: bool,
    ) -> Result<Encoded> {
        let f_bev = self.tokenizer.bev_encode(tape, bind, grid)?;
        let raw = self
            .tokenizer
            .instance_tokens(tape, bind, f_bev, grid, scene)?;
        let (ego, agents) = if tgm_enabled {
            let (x, mask) = concat_queries(tape, raw.ego, raw.agents, &raw.agent_mask)?;
            tgm_forward(tape, bind, &self.tgm, x, &mask, raw.map, &raw.map_mask)?
        } else {
            (raw.ego, raw.agents)
        };
        Ok(Encoded { raw, ego, agents })
    }

    pub fn plan_var(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        scene: &Scene,
        grid: &BevGrid,
        tgm_enabled: bool,
    ) -> Result<Var> {
        let enc = self.encode(tape, bind, scene, grid, tgm_enabled)?;
        plan_head(tape, bind, &self.heads, enc.ego, scene.command)
    }

    /// Planned trajectory for `scene`. Reads nothing but the scene.
    pub fn plan(&self, scene: &Scene, tgm_enabled: bool) -> Result<Vec<Point>> {
        let grid = self.rasterize(scene);
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&self.store);
        let p = self.plan_var(&mut tape, &mut bind, scene, &grid, tgm_enabled)?;
        let t = tape.value(p);
        if !t.is_finite() {
            return Err(Error::NonFinite("planned trajectory".into()));
        }
        Ok((0..t.rows()).map(|r| [t.get(r, 0), t.get(r, 1)]).collect())
    }

    /// Builds the requested loss terms for one scene. Trajectory terms are
    /// measured in units of [`TRAJ_UNIT`] meters.
    #[allow(clippy::too_many_arguments)]
    pub fn scene_terms(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        scene: &Scene,
        grid: &BevGrid,
        desc: Option<&Description>,
        tgm_enabled: bool,
        want: TermMask,
    ) -> Result<SceneTerms> {
        let enc = self.encode(tape, bind, scene, grid, tgm_enabled)?;
        let unit2 = 1.0 / (TRAJ_UNIT * TRAJ_UNIT);
        let mut out = SceneTerms::default();
        if want.plan {
            let plan = plan_head(tape, bind, &self.heads, enc.ego, scene.command)?;
            let gt = tape.constant(points_tensor(&scene.gt_future.ego));
            let l = imitation_loss(tape, plan, gt)?;
            out.plan = Some(tape.scale(l, unit2));
        }
        let n_agents = enc.raw.agent_mask.iter().filter(|&&m| m).count();
        let agents = &scene.agents[..n_agents];
        if want.motion {
            let origins: Vec<Point> = agents.iter().map(|a| a.pos).collect();
            out.motion = Some(
                match motion_head(
                    tape,
                    bind,
                    &self.heads,
                    enc.agents,
                    &enc.raw.agent_mask,
                    &origins,
                )? {
                    None => tape.constant(Tensor::scalar(0.0)),
                    Some(pred) => {
                        let rows: Vec<Vec<f64>> = scene.gt_future.agents[..n_agents]
                            .iter()
                            .map(|f| f.iter().flat_map(|p| [p[0], p[1]]).collect())
                            .collect();
                        let gt = tape.constant(Tensor::from_rows(&rows)?);
                        let l = imitation_loss(tape, pred, gt)?;
                        tape.scale(l, unit2)
                    }
                },
            );
        }
        if want.det || want.map {
            let n_map = enc.raw.map_mask.iter().filter(|&&m| m).count();
            let (det, map) = aux_losses(
                tape,
                bind,
                &self.heads,
                enc.raw.agents,
                &enc.raw.agent_mask,
                enc.raw.map,
                &enc.raw.map_mask,
                agents,
                &scene.map[..n_map],
                self.dims.extent,
            )?;
            out.det = want.det.then_some(det);
            out.map = want.map.then_some(map);
        }
        if want.itg || want.itm {
            let desc = desc.ok_or_else(|| {
                Error::Data("description required for the language losses".into())
            })?;
            if want.itg {
                out.itg = Some(itg_loss(
                    tape,
                    bind,
                    &self.itg,
                    desc,
                    enc.agents,
                    &enc.raw.agent_mask,
                )?);
            }
            if want.itm {
                let v = embed_description(tape, bind, &self.lang, desc)?;
                out.align = Some((enc.ego, v));
            }
        }
        Ok(out)
    }

    pub fn write_params<W: Write>(&self, w: &mut W, meta: &[(String, String)]) -> Result<()> {
        Ok(self.store.write_checkpoint(w, meta)?)
    }

    /// Replaces every parameter with the stored values; names and shapes must
    /// match this model.
    pub fn read_params<R: Read>(&mut self, r: &mut R) -> Result<Vec<(String, String)>> {
        let (store, meta) = ParamStore::read_checkpoint(r)?;
        self.load_store(&store)?;
        Ok(meta)
    }

    pub fn load_store(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                other.len(),
                self.store.len()
            )));
        }
        self.store
            .load_from(other)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// `n x 2` tensor of waypoints.
pub fn points_tensor(points: &[Point]) -> Tensor {
    Tensor::from_fn(points.len(), 2, |r, c| points[r][c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, GeneratorConfig};

    #[test]
    fn zero_model_plans_zero() {
        let m = Model::new(ModelDims::default(), 0, true).unwrap();
        let s = generate_scene(0, &GeneratorConfig::default()).unwrap();
        assert!(m.plan(&s, true).unwrap().iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::new(ModelDims::default(), 4, false).unwrap();
        let b = Model::new(ModelDims::default(), 4, false).unwrap();
        let c = Model::new(ModelDims::default(), 5, false).unwrap();
        assert!(a.store.iter().zip(b.store.iter()).all(|(x, y)| x == y));
        assert!(a.store.iter().zip(c.store.iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn checkpoint_restores_identical_plans() {
        let a = Model::new(ModelDims::default(), 1, false).unwrap();
        let mut buf = Vec::new();
        a.write_params(&mut buf, &[]).unwrap();
        let mut b = Model::new(ModelDims::default(), 2, false).unwrap();
        b.read_params(&mut &buf[..]).unwrap();
        let s = generate_scene(3, &GeneratorConfig::default()).unwrap();
        assert_eq!(a.plan(&s, true).unwrap(), b.plan(&s, true).unwrap());
    }

    #[test]
    fn mismatched_checkpoint_rejected() {
        let a = Model::new(
            ModelDims {
                d: 8,
                ..Default::default()
            },
            1,
            false,
        )
        .unwrap();
        let mut buf = Vec::new();
        a.write_params(&mut buf, &[]).unwrap();
        let mut b = Model::new(ModelDims::default(), 1, false).unwrap();
        assert!(matches!(
            b.read_params(&mut &buf[..]),
            Err(Error::Checkpoint(_))
        ));
    }
}
