//! Run configuration: flat `key = value` text with dotted keys.
//!
//! Blank lines and `#` comments are ignored. Every key is optional except
//! `seed`; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::describer::DescriptionMode;
use crate::error::{Error, Result};
use crate::evalkit::MetricMode;
use crate::model::ModelDims;
use crate::scenegen::GeneratorConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub plan: f64,
    pub motion: f64,
    pub det: f64,
    pub map: f64,
    pub itm: f64,
    pub itg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            plan: 1.0,
            motion: 0.5,
            det: 0.5,
            map: 0.5,
            itm: 0.5,
            itg: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Phase 2 epochs.
    pub epochs: usize,
    /// Phase 1 epochs.
    pub pretrain_epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            weight_decay: 0.01,
            batch_size: 8,
            epochs: 40,
            pretrain_epochs: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub generator: GeneratorConfig,
    pub model: ModelDims,
    pub loss: LossWeights,
    pub optim: OptimConfig,
    pub tgm_enabled: bool,
    pub lgam_enabled: bool,
    pub description_mode: DescriptionMode,
    pub metric_mode: MetricMode,
    /// Adds the GLD/ALD pair to ablation tables.
    pub ablate_descriptions: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            train_scenes: 256,
            val_scenes: 64,
            generator: GeneratorConfig::default(),
            model: ModelDims::default(),
            loss: LossWeights::default(),
            optim: OptimConfig::default(),
            tgm_enabled: true,
            lgam_enabled: true,
            description_mode: DescriptionMode::Ald,
            metric_mode: MetricMode::AtHorizon,
            ablate_descriptions: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {v:?}"
        ))),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen_seed = false;
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key}",
                    i + 1
                )));
            }
            if key == "seed" {
                seen_seed = true;
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(e))))?;
        }
        if !seen_seed {
            return Err(Error::Config("missing required key `seed`".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let g = &mut self.generator;
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "data.train" => self.train_scenes = parse_num(key, v)?,
            "data.val" => self.val_scenes = parse_num(key, v)?,
            "gen.extent" => g.extent = parse_num(key, v)?,
            "gen.max_agents" => g.max_agents = parse_num(key, v)?,
            "gen.max_map" => g.max_map = parse_num(key, v)?,
            "gen.background_agents" => g.background_agents = parse_num(key, v)?,
            "gen.retries" => g.retries = parse_num(key, v)?,
            "gen.mix.following" => g.mix.following = parse_num(key, v)?,
            "gen.mix.crossing" => g.mix.crossing = parse_num(key, v)?,
            "gen.mix.lane_change" => g.mix.lane_change = parse_num(key, v)?,
            "gen.mix.turn" => g.mix.turn = parse_num(key, v)?,
            "gen.ego_speed.min" => g.ego_speed.0 = parse_num(key, v)?,
            "gen.ego_speed.max" => g.ego_speed.1 = parse_num(key, v)?,
            "gen.car_speed.min" => g.car_speed.0 = parse_num(key, v)?,
            "gen.car_speed.max" => g.car_speed.1 = parse_num(key, v)?,
            "gen.pedestrian_speed.min" => g.pedestrian_speed.0 = parse_num(key, v)?,
            "gen.pedestrian_speed.max" => g.pedestrian_speed.1 = parse_num(key, v)?,
            "gen.cyclist_speed.min" => g.cyclist_speed.0 = parse_num(key, v)?,
            "gen.cyclist_speed.max" => g.cyclist_speed.1 = parse_num(key, v)?,
            "model.d" => self.model.d = parse_num(key, v)?,
            "model.grid_h" => self.model.grid_h = parse_num(key, v)?,
            "model.grid_w" => self.model.grid_w = parse_num(key, v)?,
            "model.d_bev" => self.model.d_bev = parse_num(key, v)?,
            "model.hidden" => self.model.hidden = parse_num(key, v)?,
            "model.layers" => self.model.layers = parse_num(key, v)?,
            "model.heads" => self.model.heads = parse_num(key, v)?,
            "loss.plan" => self.loss.plan = parse_num(key, v)?,
            "loss.motion" => self.loss.motion = parse_num(key, v)?,
            "loss.det" => self.loss.det = parse_num(key, v)?,
            "loss.map" => self.loss.map = parse_num(key, v)?,
            "loss.itm" => self.loss.itm = parse_num(key, v)?,
            "loss.itg" => self.loss.itg = parse_num(key, v)?,
            "optim.lr" => self.optim.lr = parse_num(key, v)?,
            "optim.weight_decay" => self.optim.weight_decay = parse_num(key, v)?,
            "optim.batch_size" => self.optim.batch_size = parse_num(key, v)?,
            "optim.epochs" => self.optim.epochs = parse_num(key, v)?,
            "optim.pretrain_epochs" => self.optim.pretrain_epochs = parse_num(key, v)?,
            "tgm.enabled" => self.tgm_enabled = parse_bool(key, v)?,
            "lgam.enabled" => self.lgam_enabled = parse_bool(key, v)?,
            "describer.mode" => self.description_mode = v.parse()?,
            "eval.mode" => self.metric_mode = v.parse()?,
            "ablate.descriptions" => self.ablate_descriptions = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        self.model.extent = self.generator.extent;
        self.model.n_agents = self.generator.max_agents;
        self.model.n_map = self.generator.max_map;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        let l = &self.loss;
        for (name, w) in [
            ("plan", l.plan),
            ("motion", l.motion),
            ("det", l.det),
            ("map", l.map),
            ("itm", l.itm),
            ("itg", l.itg),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!(
                    "loss.{name} must be a non-negative number"
                )));
            }
        }
        let m = &self.model;
        if m.d == 0 || m.grid_h == 0 || m.grid_w == 0 || m.d_bev == 0 || m.hidden == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if m.heads == 0 || !m.d.is_multiple_of(m.heads) {
            return Err(Error::Config("model.heads must divide model.d".into()));
        }
        let o = &self.optim;
        if !(o.lr.is_finite() && o.lr > 0.0)
            || !(o.weight_decay.is_finite() && o.weight_decay >= 0.0)
        {
            return Err(Error::Config(
                "optim.lr must be positive and optim.weight_decay non-negative".into(),
            ));
        }
        if o.batch_size == 0 {
            return Err(Error::Config("optim.batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let g = &self.generator;
        let m = &self.model;
        let l = &self.loss;
        let o = &self.optim;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("data.train", self.train_scenes.to_string());
        kv("data.val", self.val_scenes.to_string());
        kv("gen.extent", format!("{:?}", g.extent));
        kv("gen.max_agents", g.max_agents.to_string());
        kv("gen.max_map", g.max_map.to_string());
        kv("gen.background_agents", g.background_agents.to_string());
        kv("gen.retries", g.retries.to_string());
        kv("gen.mix.following", format!("{:?}", g.mix.following));
        kv("gen.mix.crossing", format!("{:?}", g.mix.crossing));
        kv("gen.mix.lane_change", format!("{:?}", g.mix.lane_change));
        kv("gen.mix.turn", format!("{:?}", g.mix.turn));
        for (name, (lo, hi)) in [
            ("ego_speed", g.ego_speed),
            ("car_speed", g.car_speed),
            ("pedestrian_speed", g.pedestrian_speed),
            ("cyclist_speed", g.cyclist_speed),
        ] {
            kv(&format!("gen.{name}.min"), format!("{lo:?}"));
            kv(&format!("gen.{name}.max"), format!("{hi:?}"));
        }
        kv("model.d", m.d.to_string());
        kv("model.grid_h", m.grid_h.to_string());
        kv("model.grid_w", m.grid_w.to_string());
        kv("model.d_bev", m.d_bev.to_string());
        kv("model.hidden", m.hidden.to_string());
        kv("model.layers", m.layers.to_string());
        kv("model.heads", m.heads.to_string());
        kv("loss.plan", format!("{:?}", l.plan));
        kv("loss.motion", format!("{:?}", l.motion));
        kv("loss.det", format!("{:?}", l.det));
        kv("loss.map", format!("{:?}", l.map));
        kv("loss.itm", format!("{:?}", l.itm));
        kv("loss.itg", format!("{:?}", l.itg));
        kv("optim.lr", format!("{:?}", o.lr));
        kv("optim.weight_decay", format!("{:?}", o.weight_decay));
        kv("optim.batch_size", o.batch_size.to_string());
        kv("optim.epochs", o.epochs.to_string());
        kv("optim.pretrain_epochs", o.pretrain_epochs.to_string());
        kv("tgm.enabled", self.tgm_enabled.to_string());
        kv("lgam.enabled", self.lgam_enabled.to_string());
        kv("describer.mode", self.description_mode.as_str().to_string());
        kv("eval.mode", self.metric_mode.as_str().to_string());
        kv("ablate.descriptions", self.ablate_descriptions.to_string());
        s
    }

    /// SHA-256 (hex) of the canonical text.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_text().as_bytes()))
    }

    /// SHA-256 (hex) of everything that fixes parameter shapes and the
    /// expected scene layout.
    pub fn dims_hash(&self) -> String {
        let m = &self.model;
        let text = format!(
            "d={} grid={}x{} d_bev={} hidden={} layers={} heads={} agents={} map={} extent={:?}",
            m.d,
            m.grid_h,
            m.grid_w,
            m.d_bev,
            m.hidden,
            m.layers,
            m.heads,
            m.n_agents,
            m.n_map,
            m.extent
        );
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = Config::parse(
            "seed = 7\n# comment\n\ntgm.enabled = false\noptim.lr = 1e-3 # trailing\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(!cfg.tgm_enabled);
        assert_eq!(cfg.optim.lr, 1e-3);
        assert_eq!(cfg.optim.weight_decay, 0.01);
        assert_eq!(cfg.loss, LossWeights::default());
    }

    #[test]
    fn errors() {
        for (text, needle) in [
            ("tgm.enabled = true", "seed"),
            ("seed = 1\nbogus.key = 3", "unknown key"),
            ("seed = 1\nloss.plan = -1", "non-negative"),
            ("seed = 1\ntgm.enabled = yes", "true or false"),
            ("seed = 1\nseed = 2", "duplicate"),
            ("seed = 1\nnot a pair", "key = value"),
            ("seed = 1\neval.mode = sideways", "sideways"),
        ] {
            let err = Config::parse(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}");
            assert!(err.to_string().contains(needle), "{text}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = Config::parse("seed = 3\nmodel.d = 8\ndescriber.mode = gld\neval.mode = avg_up_to\ngen.max_agents = 5").unwrap();
        let back = Config::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.model.n_agents, 5);
    }
}
