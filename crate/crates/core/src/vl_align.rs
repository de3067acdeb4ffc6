//! Scene/description alignment: description embeddings, cosine similarity
//! and the binary matching loss.

use numkit::{Binder, ParamId, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::describer::{Description, Token, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::nn::{Builder, Init};

/// Clamp applied to the rescaled similarity before taking logs.
pub const ITM_EPS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct LangParams {
    pub table: ParamId,
}

impl LangParams {
    pub fn new(bld: &mut Builder, d: usize) -> Result<Self> {
        Ok(Self {
            table: bld.param("lang.table", VOCAB_SIZE, d, Init::Xavier)?,
        })
    }
}

/// Mean embedding of `tokens`.
pub fn embed_tokens(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &LangParams,
    tokens: &[Token],
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::EmptyDescriptionBody);
    }
    let table = bind.var(tape, params.table);
    let ids: Vec<usize> = tokens.iter().map(|t| t.id()).collect();
    let rows = tape.gather_rows(table, &ids)?;
    Ok(tape.mean_rows(rows)?)
}

/// Mean embedding of the tokens strictly between BOS and EOS.
pub fn embed_description(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &LangParams,
    desc: &Description,
) -> Result<Var> {
    embed_tokens(tape, bind, params, desc.body())
}

fn check_row_pair(tape: &Tape, w: Var, v: Var) -> Result<()> {
    let (a, b) = (tape.value(w).shape(), tape.value(v).shape());
    if a.0 != 1 || a != b {
        return Err(Error::Num(numkit::NumError::Shape {
            op: "cosine_similarity",
            lhs: a,
            rhs: b,
        }));
    }
    Ok(())
}

fn squared_norm(t: &Tensor) -> f64 {
    t.data().iter().map(|x| x * x).sum()
}

/// `wᵀv / (‖w‖‖v‖)` for two `1 x d` rows.
pub fn cosine_similarity(tape: &mut Tape, w: Var, v: Var) -> Result<Var> {
    check_row_pair(tape, w, v)?;
    if squared_norm(tape.value(w)) == 0.0 || squared_norm(tape.value(v)) == 0.0 {
        return Err(Error::DegenerateSimilarity);
    }
    let wv = tape.mul(w, v)?;
    let dot = tape.sum(wv);
    let ww = tape.mul(w, w)?;
    let ww = tape.sum(ww);
    let vv = tape.mul(v, v)?;
    let vv = tape.sum(vv);
    let nn = tape.mul(ww, vv)?;
    let denom = tape.sqrt(nn);
    Ok(tape.div(dot, denom)?)
}

/// Plain-value cosine similarity; `None` for a zero vector.
pub fn cosine_value(w: &[f64], v: &[f64]) -> Option<f64> {
    let dot: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
    let nw: f64 = w.iter().map(|a| a * a).sum::<f64>();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>();
    (nw > 0.0 && nv > 0.0).then(|| dot / (nw * nv).sqrt())
}

#[derive(Clone, Copy, Debug)]
pub struct Pair {
    pub w: Var,
    pub v: Var,
    /// 1 for a matched pair, 0 for a mismatched one.
    pub label: u8,
}

pub type PairBatch = Vec<Pair>;

/// How [`itm_loss_with`] treats a pair containing a zero vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegeneratePairs {
    /// Fail with [`Error::DegenerateSimilarity`].
    Reject,
    /// Score the pair as `s = 0` (no gradient through it).
    Neutral,
}

/// Mean binary cross-entropy of `ŝ = clamp((s + 1) / 2, ε, 1 − ε)`.
pub fn itm_loss(tape: &mut Tape, batch: &[Pair]) -> Result<Var> {
    itm_loss_with(tape, batch, DegeneratePairs::Reject)
}

pub fn itm_loss_with(tape: &mut Tape, batch: &[Pair], degenerate: DegeneratePairs) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Data("matching loss over an empty batch".into()));
    }
    let mut terms = Vec::with_capacity(batch.len());
    for p in batch {
        let s = match cosine_similarity(tape, p.w, p.v) {
            Err(Error::DegenerateSimilarity) if degenerate == DegeneratePairs::Neutral => {
                tape.constant(Tensor::scalar(0.0))
            }
            other => other?,
        };
        let half = tape.scale(s, 0.5);
        let s_hat = tape.offset(half, 0.5);
        let s_hat = tape.clamp(s_hat, ITM_EPS, 1.0 - ITM_EPS);
        let p_label = if p.label == 1 {
            s_hat
        } else {
            let neg = tape.scale(s_hat, -1.0);
            tape.offset(neg, 1.0)
        };
        let log = tape.log(p_label);
        terms.push(tape.scale(log, -1.0));
    }
    let all = tape.concat_rows(&terms)?;
    Ok(tape.mean(all))
}

/// Uniformly random cyclic permutation of `0..n` (Sattolo's algorithm), so
/// no index maps to itself.
pub fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..i);
        p.swap(i, j);
    }
    p
}

/// Every positive with label 1, followed by `(w_i, v_σ(i))` with label 0 for
/// a seeded derangement `σ`.
pub fn make_negatives(positives: &[(Var, Var)], seed: u64) -> Result<PairBatch> {
    let n = positives.len();
    if n < 2 {
        return Err(Error::TooFewPositives(n));
    }
    let sigma = derangement(n, seed);
    let mut out: PairBatch = positives
        .iter()
        .map(|&(w, v)| Pair { w, v, label: 1 })
        .collect();
    out.extend((0..n).map(|i| Pair {
        w: positives[i].0,
        v: positives[sigma[i]].1,
        label: 0,
    }));
    Ok(out)
}
