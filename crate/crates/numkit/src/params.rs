//! Flat named parameter registry and its binary checkpoint format.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic  b"NKCP"
//! u8     version (1)
//! u32    metadata count, then per entry: u32 len + utf-8 key, u32 len + utf-8 value
//! u32    record count, then per record:  u32 len + utf-8 name, u32 rows, u32 cols,
//!        rows*cols f64 values
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{NumError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NKCP";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(NumError::DuplicateParam(name));
        }
        self.by_name.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Overwrites values by name from `other`. Every name in `other` must exist
    /// here with the same shape.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, value) in other.iter() {
            let id = self.id(name)?;
            let cur = &self.values[id.0];
            if cur.shape() != value.shape() {
                return Err(NumError::Shape {
                    op: "load_from",
                    lhs: cur.shape(),
                    rhs: value.shape(),
                });
            }
            self.values[id.0] = value.clone();
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W, meta: &[(String, String)]) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&[CHECKPOINT_VERSION])?;
        write_u32(w, meta.len())?;
        for (k, v) in meta {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        write_u32(w, self.values.len())?;
        for (name, t) in self.iter() {
            write_str(w, name)?;
            write_u32(w, t.rows())?;
            write_u32(w, t.cols())?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(ParamStore, Vec<(String, String)>)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NumError::Checkpoint("bad magic".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != CHECKPOINT_VERSION {
            return Err(NumError::Checkpoint(format!(
                "unsupported version {}",
                version[0]
            )));
        }
        let n_meta = read_u32(r)?;
        let mut meta = Vec::with_capacity(n_meta.min(1024));
        for _ in 0..n_meta {
            meta.push((read_str(r)?, read_str(r)?));
        }
        let n = read_u32(r)?;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let name = read_str(r)?;
            let rows = read_u32(r)?;
            let cols = read_u32(r)?;
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| NumError::Checkpoint("record too large".into()))?;
            let mut data = Vec::with_capacity(len.min(1 << 24));
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            store.add(name, Tensor::new(rows, cols, data)?)?;
        }
        Ok((store, meta))
    }
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| NumError::Checkpoint("length exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)?;
    if len > 1 << 20 {
        return Err(NumError::Checkpoint("string too long".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| NumError::Checkpoint("invalid utf-8".into()))
}

/// Lazily places parameters on a tape the first time a forward pass uses them.
///
/// Parameters never touched by a pass get no gradient, which is how frozen or
/// unused sub-modules stay untouched by the optimizer.
pub struct Binder<'p> {
    store: &'p ParamStore,
    vars: Vec<Option<Var>>,
    trainable: bool,
}

impl<'p> Binder<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            vars: vec![None; store.len()],
            trainable: true,
        }
    }

    /// Binds parameters as constants; nothing will receive gradients.
    pub fn frozen(store: &'p ParamStore) -> Self {
        Self {
            trainable: false,
            ..Self::new(store)
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn var(&mut self, tape: &mut Tape, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let value = self.store.get(id).clone();
        let v = if self.trainable {
            tape.leaf(value)
        } else {
            tape.constant(value)
        };
        self.vars[id.0] = Some(v);
        v
    }

    /// Per-parameter gradients in registry order; `None` for parameters the
    /// pass never used.
    pub fn collect(&self, grads: &mut Gradients) -> Vec<Option<Tensor>> {
        self.vars
            .iter()
            .map(|v| v.and_then(|v| grads.take(v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let mut store = ParamStore::new();
        store
            .add(
                "a.w",
                Tensor::from_fn(2, 3, |r, c| r as f64 - c as f64 * 0.1),
            )
            .unwrap();
        store.add("b", Tensor::scalar(f64::MIN_POSITIVE)).unwrap();
        let meta = vec![("phase".to_string(), "phase1".to_string())];
        let mut buf = Vec::new();
        store.write_checkpoint(&mut buf, &meta).unwrap();
        assert_eq!(&buf[..4], b"NKCP");
        assert_eq!(buf[4], 1);
        let (back, meta_back) = ParamStore::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, store);
        assert_eq!(meta_back, meta);
    }

    #[test]
    fn bad_magic_and_truncation_are_errors() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::zeros(4, 4)).unwrap();
        let mut buf = Vec::new();
        store.write_checkpoint(&mut buf, &[]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ParamStore::read_checkpoint(&mut bad.as_slice()).is_err());
        buf.truncate(buf.len() - 3);
        assert!(ParamStore::read_checkpoint(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::zeros(1, 1)).unwrap();
        assert!(matches!(
            store.add("x", Tensor::zeros(1, 1)),
            Err(NumError::DuplicateParam(_))
        ));
    }

    #[test]
    fn binder_reuses_vars_and_skips_unused() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::full(1, 2, 1.5)).unwrap();
        let _b = store.add("b", Tensor::full(1, 2, 9.0)).unwrap();
        let mut tape = Tape::new();
        let mut binder = Binder::new(&store);
        let v1 = binder.var(&mut tape, a);
        let v2 = binder.var(&mut tape, a);
        assert_eq!(v1, v2);
        let p = tape.mul(v1, v2).unwrap();
        let s = tape.sum(p);
        let mut grads = tape.backward(s).unwrap();
        let collected = binder.collect(&mut grads);
        assert_eq!(collected[0].as_ref().unwrap(), &Tensor::full(1, 2, 3.0));
        assert!(collected[1].is_none());
    }
}
