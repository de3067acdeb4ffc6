//! Parameterized layers registered in a [`ParamStore`].

use numkit::{Binder, ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zero,
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Xavier,
    /// Uniform in `±scale`.
    Uniform(f64),
}

/// Everything needed to register new parameters.
pub struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
    /// Forces every parameter to zero regardless of the requested init.
    pub all_zero: bool,
}

impl Builder<'_> {
    pub fn param(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<ParamId> {
        let init = if self.all_zero { Init::Zero } else { init };
        let t = match init {
            Init::Zero => Tensor::zeros(rows, cols),
            Init::Xavier => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                Tensor::from_fn(rows, cols, |_, _| self.rng.gen_range(-a..a))
            }
            Init::Uniform(s) => Tensor::from_fn(rows, cols, |_, _| self.rng.gen_range(-s..s)),
        };
        Ok(self.store.add(name, t)?)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        bld: &mut Builder,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        init: Init,
    ) -> Result<Self> {
        Ok(Self {
            w: bld.param(&format!("{name}.w"), fan_in, fan_out, init)?,
            b: bld.param(&format!("{name}.b"), 1, fan_out, Init::Zero)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bind: &mut Binder, x: Var) -> Result<Var> {
        let w = bind.var(tape, self.w);
        let b = bind.var(tape, self.b);
        let y = tape.matmul(x, w)?;
        Ok(tape.add_row(y, b)?)
    }
}

/// `tanh(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new(
        bld: &mut Builder,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
        out_init: Init,
    ) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(bld, &format!("{name}.0"), fan_in, hidden, Init::Xavier)?,
            out: Linear::new(bld, &format!("{name}.1"), hidden, fan_out, out_init)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bind: &mut Binder, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, bind, x)?;
        let h = tape.tanh(h);
        self.out.forward(tape, bind, h)
    }
}

/// Rows of `valid` placed at the `true` positions of `mask`; all other rows
/// are exactly zero.
pub fn scatter_rows(tape: &mut Tape, valid: Var, mask: &[bool]) -> Result<Var> {
    let cols = tape.value(valid).cols();
    if !mask.iter().any(|&m| m) {
        return Ok(tape.constant(Tensor::zeros(mask.len(), cols)));
    }
    let mut next = 0;
    let weights: Vec<Vec<(usize, f64)>> = mask
        .iter()
        .map(|&m| {
            if m {
                next += 1;
                vec![(next - 1, 1.0)]
            } else {
                Vec::new()
            }
        })
        .collect();
    Ok(tape.mix_rows(valid, &weights)?)
}

/// Indices of the `true` entries.
pub fn valid_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn scatter_places_rows_and_zeros_the_rest() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let s = scatter_rows(&mut tape, v, &[false, true, false, true]).unwrap();
        assert_eq!(
            tape.value(s),
            &Tensor::from_rows(&[[0.0, 0.0], [1.0, 2.0], [0.0, 0.0], [3.0, 4.0]]).unwrap()
        );
    }

    #[test]
    fn zero_builder_ignores_init() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bld = Builder {
            store: &mut store,
            rng: &mut rng,
            all_zero: true,
        };
        let id = bld.param("w", 3, 3, Init::Xavier).unwrap();
        assert_eq!(store.get(id), &Tensor::zeros(3, 3));
    }
}
