//! JSON-Lines scene datasets.
//!
//! Line 1 is a header object carrying the schema version and generator
//! bounds; every following line is one scene record. An empty dataset is an
//! empty file. Floats are written with 17 significant digits so a round trip
//! is exact.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::describer::{attention_description, global_description, Description};
use crate::error::{Error, Result};
use crate::scene::Scene;
use crate::scenegen::{generate_scene_with_kind, GeneratorConfig, ScenarioKind};

pub const SCHEMA: &str = "langdrive.scenes";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub schema: String,
    pub version: u32,
    pub extent: f64,
    pub max_agents: usize,
    pub max_map: usize,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub seed: u64,
    pub scenario: ScenarioKind,
    #[serde(flatten)]
    pub scene: Scene,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ald_tokens: Option<Description>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gld_tokens: Option<Description>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<SceneRecord>,
}

impl Dataset {
    pub fn empty(cfg: &GeneratorConfig) -> Self {
        Self {
            header: DatasetHeader {
                schema: SCHEMA.to_string(),
                version: SCHEMA_VERSION,
                extent: cfg.extent,
                max_agents: cfg.max_agents,
                max_map: cfg.max_map,
            },
            records: Vec::new(),
        }
    }

    /// Scenes for seeds `first_seed..first_seed + count`, each with both
    /// descriptions attached.
    pub fn generate(first_seed: u64, count: usize, cfg: &GeneratorConfig) -> Result<Self> {
        let mut ds = Self::empty(cfg);
        for i in 0..count as u64 {
            let seed = first_seed + i;
            let (scenario, scene) = generate_scene_with_kind(seed, cfg)?;
            ds.records.push(SceneRecord {
                seed,
                scenario,
                ald_tokens: Some(attention_description(&scene)),
                gld_tokens: Some(global_description(&scene)),
                scene,
            });
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scenes(&self) -> impl Iterator<Item = &Scene> {
        self.records.iter().map(|r| &r.scene)
    }

    /// Copy with every description removed.
    pub fn without_descriptions(&self) -> Self {
        let mut ds = self.clone();
        for r in &mut ds.records {
            r.ald_tokens = None;
            r.gld_tokens = None;
        }
        ds
    }

    pub fn split(&self, at: usize) -> (Self, Self) {
        let at = at.min(self.records.len());
        let mut a = self.clone();
        let b_records = a.records.split_off(at);
        let b = Self {
            header: self.header.clone(),
            records: b_records,
        };
        (a, b)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        if !self.records.is_empty() {
            write_line(&mut w, &self.header)?;
            for r in &self.records {
                write_line(&mut w, r)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: io::Read>(r: R) -> Result<Self> {
        let mut header: Option<DatasetHeader> = None;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            };
            match &header {
                None => {
                    let h: DatasetHeader = serde_json::from_str(&line).map_err(parse_err)?;
                    if h.schema != SCHEMA || h.version != SCHEMA_VERSION {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("unsupported schema {} v{}", h.schema, h.version),
                        });
                    }
                    header = Some(h);
                }
                Some(_) => records.push(serde_json::from_str(&line).map_err(parse_err)?),
            }
        }
        Ok(Self {
            header: header.unwrap_or_else(|| Self::empty(&GeneratorConfig::default()).header),
            records,
        })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write(File::create(path)?)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(File::open(path)?)
    }
}

pub fn write_dataset(records: &[SceneRecord], cfg: &GeneratorConfig, path: &Path) -> Result<()> {
    let mut ds = Dataset::empty(cfg);
    ds.records = records.to_vec();
    ds.write_file(path)
}

pub fn read_dataset(path: &Path) -> Result<Vec<SceneRecord>> {
    Ok(Dataset::read_file(path)?.records)
}

/// Compact JSON with every float in `d.dddddddddddddddde±x` form.
struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value == 0.0 {
            // keep the sign of negative zero
            return w.write_all(if value.is_sign_negative() {
                b"-0.0"
            } else {
                b"0.0"
            });
        }
        write!(w, "{value:.16e}")
    }
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *w, SeventeenDigits);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Data(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_is_empty_file() {
        let ds = Dataset::empty(&GeneratorConfig::default());
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        assert!(buf.is_empty());
        assert!(Dataset::read(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let mut buf = Vec::new();
        write_line(&mut buf, &vec![0.1f64, -2.5, 0.0, 1e-300]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "[1.0000000000000001e-1,-2.5000000000000000e0,0.0,1.0000000000000000e-300]\n"
        );
    }

    #[test]
    fn truncated_line_names_line_number() {
        let ds = Dataset::generate(0, 3, &GeneratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let third = lines[2].clone();
        lines[2] = third[..third.len() / 2].to_string();
        let broken = lines.join("\n");
        match Dataset::read(broken.as_bytes()) {
            Err(e @ Error::Parse { line: 3, .. }) => assert!(e.to_string().starts_with("line 3:")),
            other => panic!("expected parse error on line 3, got {other:?}"),
        }
    }

    #[test]
    fn bad_description_is_rejected() {
        let ds = Dataset::generate(0, 1, &GeneratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let broken = text.replacen("\"ald_tokens\":[0,", "\"ald_tokens\":[1,", 1);
        assert!(matches!(
            Dataset::read(broken.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
