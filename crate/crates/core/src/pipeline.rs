//! Two-phase training, evaluation, ablation and checkpoints.
//!
//! Phase 1 trains the representation with the language losses only; phase 2
//! trains everything end to end. Descriptions are read only inside losses:
//! planning never consumes them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use numkit::{Binder, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, LossWeights};
use crate::dataset::{Dataset, DatasetHeader, SceneRecord};
use crate::describer::{describe, Description, DescriptionMode, Token};
use crate::error::{Error, Result};
use crate::evalkit::{MetricMode, MetricsReport, DEFAULT_EGO_SIZE, METRICS_CSV_HEADER};
use crate::itg::greedy_decode;
use crate::model::{Model, TermMask};
use crate::optim::{cosine_lr, AdamW};
use crate::scene::{Point, Scene};
use crate::tokenizer::BevGrid;
use crate::vl_align::{cosine_value, derangement, itm_loss_with, make_negatives, DegeneratePairs};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "phase1",
            Phase::Finetune => "phase2",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Phase::Pretrain => 0x5048_4153_4531,
            Phase::Finetune => 0x5048_4153_4532,
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase1" => Ok(Phase::Pretrain),
            "phase2" => Ok(Phase::Finetune),
            _ => Err(Error::Checkpoint(format!("unknown phase tag {s:?}"))),
        }
    }
}

/// A scene with its cached raster and (optional) target description.
pub struct Prepared<'a> {
    pub scene: &'a Scene,
    pub grid: BevGrid,
    pub desc: Option<Description>,
}

/// Rasterizes every scene once. Descriptions come from the record, or are
/// derived from the scene when the record has none.
pub fn prepare<'a>(
    model: &Model,
    records: &'a [SceneRecord],
    mode: Option<DescriptionMode>,
) -> Vec<Prepared<'a>> {
    records
        .iter()
        .map(|r| Prepared {
            scene: &r.scene,
            grid: model.rasterize(&r.scene),
            desc: mode.map(|m| {
                let stored = match m {
                    DescriptionMode::Ald => &r.ald_tokens,
                    DescriptionMode::Gld => &r.gld_tokens,
                };
                stored.clone().unwrap_or_else(|| describe(&r.scene, m))
            }),
        })
        .collect()
}

/// Batch-mean value of each loss term; `None` for terms not computed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermValues {
    pub plan: Option<f64>,
    pub motion: Option<f64>,
    pub det: Option<f64>,
    pub map: Option<f64>,
    pub itm: Option<f64>,
    pub itg: Option<f64>,
}

impl TermValues {
    fn pairs(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("plan", self.plan),
            ("motion", self.motion),
            ("det", self.det),
            ("map", self.map),
            ("itm", self.itm),
            ("itg", self.itg),
        ]
    }

    /// `Σ λ_k · L_k` in the same order the training loss is assembled.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        let weights = weight_list(w);
        let mut total = 0.0;
        let mut first = true;
        for ((_, v), lam) in self.pairs().iter().zip(weights) {
            if let Some(v) = v {
                let term = lam * v;
                total = if first { term } else { total + term };
                first = false;
            }
        }
        total
    }
}

fn weight_list(w: &LossWeights) -> [f64; 6] {
    [w.plan, w.motion, w.det, w.map, w.itm, w.itg]
}

pub struct BatchLoss {
    pub total: Var,
    pub terms: TermValues,
}

/// Terms whose weight is positive.
pub fn active_terms(w: &LossWeights) -> TermMask {
    TermMask {
        plan: w.plan > 0.0,
        motion: w.motion > 0.0,
        det: w.det > 0.0,
        map: w.map > 0.0,
        itm: w.itm > 0.0,
        itg: w.itg > 0.0,
    }
}

fn mean_of(tape: &mut Tape, vars: &[Var]) -> Result<Option<Var>> {
    if vars.is_empty() {
        return Ok(None);
    }
    let all = tape.concat_rows(vars)?;
    Ok(Some(tape.mean(all)))
}

/// Weighted training loss over one batch. The matching loss pairs every
/// scene with its own description plus a deranged mismatch; batches of one
/// scene carry no matching term.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss(
    model: &Model,
    tape: &mut Tape,
    bind: &mut Binder,
    items: &[&Prepared],
    tgm_enabled: bool,
    weights: &LossWeights,
    negative_seed: u64,
) -> Result<BatchLoss> {
    let want = active_terms(weights);
    let mut cols: [Vec<Var>; 5] = Default::default();
    let mut align = Vec::new();
    for it in items {
        let t = model.scene_terms(
            tape,
            bind,
            it.scene,
            &it.grid,
            it.desc.as_ref(),
            tgm_enabled,
            want,
        )?;
        for (col, v) in cols.iter_mut().zip([t.plan, t.motion, t.det, t.map, t.itg]) {
            col.extend(v);
        }
        align.extend(t.align);
    }
    let [plan, motion, det, map, itg] = cols;
    let plan = mean_of(tape, &plan)?;
    let motion = mean_of(tape, &motion)?;
    let det = mean_of(tape, &det)?;
    let map = mean_of(tape, &map)?;
    let itg = mean_of(tape, &itg)?;
    let itm = if align.len() >= 2 {
        let batch = make_negatives(&align, negative_seed)?;
        Some(itm_loss_with(tape, &batch, DegeneratePairs::Neutral)?)
    } else {
        None
    };

    let ordered = [plan, motion, det, map, itm, itg];
    let mut total: Option<Var> = None;
    for (v, lam) in ordered.iter().zip(weight_list(weights)) {
        if let Some(v) = v {
            let term = tape.scale(*v, lam);
            total = Some(match total {
                None => term,
                Some(t) => tape.add(t, term)?,
            });
        }
    }
    let total = total.unwrap_or_else(|| tape.constant(Tensor::scalar(0.0)));
    let val = |v: Option<Var>| v.map(|v| tape.value(v).item());
    let terms = TermValues {
        plan: val(plan),
        motion: val(motion),
        det: val(det),
        map: val(map),
        itm: val(itm),
        itg: val(itg),
    };
    Ok(BatchLoss { total, terms })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub phase: Phase,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub terms: TermValues,
}

impl std::fmt::Display for StepLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} epoch {} step {} lr {:.3e} loss {:.5}",
            self.phase.as_str(),
            self.epoch,
            self.step,
            self.lr,
            self.total
        )?;
        for (name, v) in self.terms.pairs() {
            if let Some(v) = v {
                write!(f, " {name} {v:.5}")?;
            }
        }
        Ok(())
    }
}

fn phase_weights(cfg: &Config, phase: Phase) -> LossWeights {
    let l = &cfg.loss;
    match phase {
        Phase::Pretrain => LossWeights {
            plan: 0.0,
            motion: 0.0,
            det: 0.0,
            map: 0.0,
            itm: l.itm,
            itg: l.itg,
        },
        Phase::Finetune if cfg.lgam_enabled => l.clone(),
        Phase::Finetune => LossWeights {
            itm: 0.0,
            itg: 0.0,
            ..l.clone()
        },
    }
}

fn check_finite(what: &str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn train_loop(
    model: &mut Model,
    records: &[SceneRecord],
    cfg: &Config,
    phase: Phase,
    epochs: usize,
    log: &mut dyn FnMut(&StepLog),
) -> Result<()> {
    let weights = phase_weights(cfg, phase);
    let want = active_terms(&weights);
    let mode = (want.itm || want.itg).then_some(cfg.description_mode);
    let prepared = prepare(model, records, mode);
    let n = prepared.len();
    if n == 0 || epochs == 0 {
        return Ok(());
    }
    let bs = cfg.optim.batch_size;
    let total_steps = epochs * n.div_ceil(bs);
    let mut opt = AdamW::new(&model.store, cfg.optim.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ phase.salt());
    let mut step = 0;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(bs) {
            let lr = cosine_lr(step, total_steps, cfg.optim.lr);
            let negative_seed: u64 = rng.gen();
            let items: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (grads, total, terms) = {
                let mut tape = Tape::new();
                let mut bind = Binder::new(&model.store);
                let bl = batch_loss(
                    model,
                    &mut tape,
                    &mut bind,
                    &items,
                    cfg.tgm_enabled,
                    &weights,
                    negative_seed,
                )?;
                let total = tape.value(bl.total).item();
                if !total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "{} loss at step {step}",
                        phase.as_str()
                    )));
                }
                let mut g = tape.backward(bl.total)?;
                (bind.collect(&mut g), total, bl.terms)
            };
            for g in grads.iter().flatten() {
                check_finite("gradient", g)?;
            }
            opt.step(&mut model.store, &grads, lr)?;
            log(&StepLog {
                phase,
                epoch,
                step,
                lr,
                total,
                terms,
            });
            step += 1;
        }
    }
    Ok(())
}

/// Language-only pretraining of the tokenizer, topology module, description
/// embeddings and decoder.
pub fn train_phase1(
    model: &mut Model,
    records: &[SceneRecord],
    cfg: &Config,
    log: &mut dyn FnMut(&StepLog),
) -> Result<()> {
    if !cfg.lgam_enabled {
        return Err(Error::Phase1RequiresLgam);
    }
    train_loop(
        model,
        records,
        cfg,
        Phase::Pretrain,
        cfg.optim.pretrain_epochs,
        log,
    )
}

/// End-to-end training with the planning, motion and auxiliary losses, plus
/// the language losses when enabled.
pub fn train_phase2(
    model: &mut Model,
    records: &[SceneRecord],
    cfg: &Config,
    log: &mut dyn FnMut(&StepLog),
) -> Result<()> {
    train_loop(model, records, cfg, Phase::Finetune, cfg.optim.epochs, log)
}

/// Phase 1 (when the language losses are enabled) followed by phase 2.
pub fn train_full(
    model: &mut Model,
    records: &[SceneRecord],
    cfg: &Config,
    log: &mut dyn FnMut(&StepLog),
) -> Result<()> {
    if cfg.lgam_enabled {
        train_phase1(model, records, cfg, log)?;
    }
    train_phase2(model, records, cfg, log)
}

pub fn plan_all(model: &Model, scenes: &[&Scene], tgm_enabled: bool) -> Result<Vec<Vec<Point>>> {
    scenes.iter().map(|s| model.plan(s, tgm_enabled)).collect()
}

/// Inference-only metrics over `records`.
pub fn evaluate_run(
    model: &Model,
    cfg: &Config,
    records: &[SceneRecord],
    mode: MetricMode,
) -> Result<MetricsReport> {
    let scenes: Vec<Scene> = records.iter().map(|r| r.scene.clone()).collect();
    let refs: Vec<&Scene> = scenes.iter().collect();
    let plans = plan_all(model, &refs, cfg.tgm_enabled)?;
    MetricsReport::compute(&plans, &scenes, DEFAULT_EGO_SIZE, mode)
}

/// Mean matched and mean mismatched cosine similarity between refined ego
/// tokens and description embeddings. Mismatches pair scene `i` with the
/// description of scene `σ(i)` for a seeded derangement `σ`.
pub fn alignment_similarity(
    model: &Model,
    records: &[SceneRecord],
    cfg: &Config,
    seed: u64,
) -> Result<(f64, f64)> {
    let prepared = prepare(model, records, Some(cfg.description_mode));
    let mut w = Vec::with_capacity(prepared.len());
    let mut v = Vec::with_capacity(prepared.len());
    for p in &prepared {
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&model.store);
        let enc = model.encode(&mut tape, &mut bind, p.scene, &p.grid, cfg.tgm_enabled)?;
        let desc = p.desc.as_ref().expect("descriptions requested");
        let e = crate::vl_align::embed_description(&mut tape, &mut bind, &model.lang, desc)?;
        w.push(tape.value(enc.ego).data().to_vec());
        v.push(tape.value(e).data().to_vec());
    }
    let n = w.len();
    if n < 2 {
        return Err(Error::TooFewPositives(n));
    }
    let sigma = derangement(n, seed);
    let sim = |a: &[f64], b: &[f64]| cosine_value(a, b).unwrap_or(0.0);
    let matched = (0..n).map(|i| sim(&w[i], &v[i])).sum::<f64>() / n as f64;
    let mismatched = (0..n).map(|i| sim(&w[i], &v[sigma[i]])).sum::<f64>() / n as f64;
    Ok((matched, mismatched))
}

/// Greedy decode of the description for one scene.
pub fn decode_scene(model: &Model, scene: &Scene, tgm_enabled: bool) -> Result<Vec<Token>> {
    let grid = model.rasterize(scene);
    let mut tape = Tape::new();
    let mut bind = Binder::frozen(&model.store);
    let enc = model.encode(&mut tape, &mut bind, scene, &grid, tgm_enabled)?;
    greedy_decode(
        &mut tape,
        &mut bind,
        &model.itg,
        enc.agents,
        &enc.raw.agent_mask,
        crate::describer::MAX_LEN,
    )
}

/// Fraction of target tokens reproduced at the same position by greedy
/// decoding.
pub fn decode_accuracy(model: &Model, records: &[SceneRecord], cfg: &Config) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for r in records {
        let target = describe(&r.scene, cfg.description_mode);
        let out = decode_scene(model, &r.scene, cfg.tgm_enabled)?;
        total += target.len();
        hit += target
            .tokens()
            .iter()
            .zip(&out)
            .filter(|(a, b)| a == b)
            .count();
    }
    Ok(if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    })
}

/// Parameters with the config that shaped them and the phase they finished.
pub fn write_checkpoint<W: Write>(
    model: &Model,
    cfg: &Config,
    phase: Phase,
    w: &mut W,
) -> Result<()> {
    let meta = vec![
        ("config".to_string(), cfg.to_text()),
        ("config_hash".to_string(), cfg.hash()),
        ("dims_hash".to_string(), cfg.dims_hash()),
        ("phase".to_string(), phase.as_str().to_string()),
    ];
    model.write_params(w, &meta)
}

pub fn save_checkpoint(model: &Model, cfg: &Config, phase: Phase, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, cfg, phase, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: std::io::Read>(r: &mut R) -> Result<(Model, Config, Phase)> {
    let (store, meta) = numkit::ParamStore::read_checkpoint(r)?;
    let get = |k: &str| {
        meta.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing `{k}` metadata")))
    };
    let cfg = Config::parse(get("config")?)
        .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
    if get("config_hash")? != cfg.hash() || get("dims_hash")? != cfg.dims_hash() {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    let phase: Phase = get("phase")?.parse()?;
    let mut model = Model::new(cfg.model.clone(), cfg.seed, true)?;
    model.load_store(&store)?;
    Ok((model, cfg, phase))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, Config, Phase)> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

/// Fails unless the dataset was generated with the scene layout the model
/// expects.
pub fn check_compatible(cfg: &Config, header: &DatasetHeader) -> Result<()> {
    let g = &cfg.generator;
    if header.extent != g.extent || header.max_agents != g.max_agents || header.max_map != g.max_map
    {
        return Err(Error::Checkpoint(format!(
            "config hash mismatch: model expects extent {} / {} agents / {} polylines, dataset has {} / {} / {}",
            g.extent, g.max_agents, g.max_map, header.extent, header.max_agents, header.max_map
        )));
    }
    Ok(())
}

/// First `data.train` records for training, the next `data.val` for
/// validation.
pub fn split_train_val<'a>(
    cfg: &Config,
    ds: &'a Dataset,
) -> Result<(&'a [SceneRecord], &'a [SceneRecord])> {
    let need = cfg.train_scenes + cfg.val_scenes;
    if ds.len() < need {
        return Err(Error::Data(format!(
            "dataset has {} scenes, config needs {} (data.train + data.val)",
            ds.len(),
            need
        )));
    }
    Ok((
        &ds.records[..cfg.train_scenes],
        &ds.records[cfg.train_scenes..need],
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub tgm: bool,
    pub lgam: bool,
    pub desc: DescriptionMode,
    pub report: MetricsReport,
}

pub const ABLATION_CSV_PREFIX: &str = "tgm,lgam,desc";

/// Trains from scratch under `cfg` and evaluates on `val`.
pub fn train_and_evaluate(
    cfg: &Config,
    train: &[SceneRecord],
    val: &[SceneRecord],
    log: &mut dyn FnMut(&StepLog),
) -> Result<(Model, MetricsReport)> {
    let mut model = Model::new(cfg.model.clone(), cfg.seed, false)?;
    train_full(&mut model, train, cfg, log)?;
    let report = evaluate_run(&model, cfg, val, cfg.metric_mode)?;
    Ok((model, report))
}

/// The four {TGM, LGAM} on/off configurations under one seed, optionally
/// followed by the GLD and ALD description arms (both modules on).
pub fn ablate(
    cfg: &Config,
    ds: &Dataset,
    log: &mut dyn FnMut(&StepLog),
) -> Result<Vec<AblationRow>> {
    check_compatible(cfg, &ds.header)?;
    let (train, val) = split_train_val(cfg, ds)?;
    let mut rows = Vec::new();
    for (tgm, lgam) in [(false, false), (true, false), (false, true), (true, true)] {
        let c = Config {
            tgm_enabled: tgm,
            lgam_enabled: lgam,
            ..cfg.clone()
        };
        let (_, report) = train_and_evaluate(&c, train, val, log)?;
        rows.push(AblationRow {
            tgm,
            lgam,
            desc: c.description_mode,
            report,
        });
    }
    if cfg.ablate_descriptions {
        for desc in [DescriptionMode::Gld, DescriptionMode::Ald] {
            let c = Config {
                tgm_enabled: true,
                lgam_enabled: true,
                description_mode: desc,
                ..cfg.clone()
            };
            let report = if desc == cfg.description_mode {
                rows[3].report.clone()
            } else {
                train_and_evaluate(&c, train, val, log)?.1
            };
            rows.push(AblationRow {
                tgm: true,
                lgam: true,
                desc,
                report,
            });
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("{ABLATION_CSV_PREFIX},{METRICS_CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.tgm,
            r.lgam,
            r.desc.as_str(),
            r.report.csv_row()
        ));
    }
    s
}

pub fn metrics_csv(report: &MetricsReport) -> String {
    format!("{METRICS_CSV_HEADER}\n{}\n", report.csv_row())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn tiny() -> Config {
        let mut cfg = Config {
            model: ModelDims {
                d: 8,
                hidden: 8,
                grid_h: 8,
                grid_w: 8,
                d_bev: 4,
                ..ModelDims::default()
            },
            train_scenes: 6,
            val_scenes: 4,
            ..Config::default()
        };
        cfg.optim.epochs = 2;
        cfg.optim.pretrain_epochs = 1;
        cfg.optim.batch_size = 4;
        cfg
    }

    #[test]
    fn phase1_requires_language_losses() {
        let cfg = Config {
            lgam_enabled: false,
            ..tiny()
        };
        let ds = Dataset::generate(0, 4, &cfg.generator).unwrap();
        let mut m = Model::new(cfg.model.clone(), 0, false).unwrap();
        let err = train_phase1(&mut m, &ds.records, &cfg, &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Phase1RequiresLgam));
        assert!(err.to_string().contains("phase 1 requires LGAM"));
    }

    #[test]
    fn phase1_leaves_heads_untouched() {
        let cfg = tiny();
        let ds = Dataset::generate(0, 8, &cfg.generator).unwrap();
        let mut m = Model::new(cfg.model.clone(), 0, false).unwrap();
        let before = m.store.clone();
        let mut steps = 0;
        train_phase1(&mut m, &ds.records, &cfg, &mut |_| steps += 1).unwrap();
        assert_eq!(steps, 2);
        for ((name, a), (_, b)) in m.store.iter().zip(before.iter()) {
            if name.starts_with("head.") {
                assert_eq!(a, b, "{name} changed");
            }
        }
        assert!(m.store.iter().zip(before.iter()).any(|(a, b)| a != b));
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_round_trip() {
        let cfg = tiny();
        let ds = Dataset::generate(3, 8, &cfg.generator).unwrap();
        let run = || {
            let mut m = Model::new(cfg.model.clone(), cfg.seed, false).unwrap();
            train_full(&mut m, &ds.records, &cfg, &mut |_| {}).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&m, &cfg, Phase::Finetune, &mut buf).unwrap();
            (m, buf)
        };
        let (m1, b1) = run();
        let (_, b2) = run();
        assert_eq!(b1, b2);
        let (m3, cfg3, phase) = read_checkpoint(&mut &b1[..]).unwrap();
        assert_eq!(phase, Phase::Finetune);
        assert_eq!(cfg3.hash(), cfg.hash());
        let a = evaluate_run(&m1, &cfg, &ds.records, MetricMode::AvgUpTo).unwrap();
        let b = evaluate_run(&m3, &cfg3, &ds.records, MetricMode::AvgUpTo).unwrap();
        assert_eq!(a.csv_row(), b.csv_row());
    }

    #[test]
    fn plan_only_training_reduces_planning_loss() {
        let mut cfg = tiny();
        cfg.loss = LossWeights {
            plan: 1.0,
            motion: 0.0,
            det: 0.0,
            map: 0.0,
            itm: 0.0,
            itg: 0.0,
        };
        cfg.optim.epochs = 60;
        cfg.optim.lr = 3e-3;
        cfg.optim.batch_size = 8;
        let ds = Dataset::generate(9, 8, &cfg.generator).unwrap();
        let mut m = Model::new(cfg.model.clone(), 0, false).unwrap();
        let mut losses = Vec::new();
        train_phase2(&mut m, &ds.records, &cfg, &mut |s| {
            assert!(s.terms.motion.is_none() && s.terms.itm.is_none());
            losses.push(s.terms.plan.unwrap());
        })
        .unwrap();
        assert!(losses.last().unwrap() < &(0.5 * losses[0]), "{losses:?}");
    }

    #[test]
    fn ablation_table_layout() {
        let cfg = Config {
            ablate_descriptions: true,
            ..tiny()
        };
        let ds = Dataset::generate(0, 10, &cfg.generator).unwrap();
        let rows = ablate(&cfg, &ds, &mut |_| {}).unwrap();
        let flags: Vec<_> = rows.iter().map(|r| (r.tgm, r.lgam, r.desc)).collect();
        use DescriptionMode::*;
        assert_eq!(
            flags,
            [
                (false, false, Ald),
                (true, false, Ald),
                (false, true, Ald),
                (true, true, Ald),
                (true, true, Gld),
                (true, true, Ald),
            ]
        );
        assert_eq!(rows[5].report, rows[3].report);
        let csv = ablation_csv(&rows);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("tgm,lgam,desc,mode,scenes,"));
        assert!(csv.lines().nth(1).unwrap().starts_with("false,false,ald,"));
    }

    #[test]
    fn too_small_dataset_for_split() {
        let cfg = tiny();
        let ds = Dataset::generate(0, 5, &cfg.generator).unwrap();
        assert!(matches!(split_train_val(&cfg, &ds), Err(Error::Data(_))));
    }

    #[test]
    fn incompatible_dataset_rejected() {
        let cfg = tiny();
        let other = crate::scenegen::GeneratorConfig {
            extent: 40.0,
            ..Default::default()
        };
        let ds = Dataset::generate(0, 2, &other).unwrap();
        let err = check_compatible(&cfg, &ds.header).unwrap_err();
        assert!(err.to_string().contains("config hash mismatch"));
    }
}
