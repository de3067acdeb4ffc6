//! Autoregressive description decoder conditioned on agent tokens.
//!
//! One layer: token and position embeddings, causal self-attention over the
//! prefix, cross-attention to the conditioning rows, and a projection to
//! vocabulary logits. Both attention stages are residual.

use numkit::{causal_attention, scaled_dot_attention, Binder, ParamId, Tape, Var};

use crate::describer::{Description, Token, MAX_LEN, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::nn::{Builder, Init};

#[derive(Clone, Debug)]
pub struct ItgParams {
    pub d: usize,
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub self_q: ParamId,
    pub self_k: ParamId,
    pub self_v: ParamId,
    pub cross_q: ParamId,
    pub cross_k: ParamId,
    pub cross_v: ParamId,
    /// Starts at zero so the initial next-token distribution is uniform.
    pub out: ParamId,
}

impl ItgParams {
    pub fn new(bld: &mut Builder, d: usize) -> Result<Self> {
        Ok(Self {
            d,
            tok_emb: bld.param("itg.tok_emb", VOCAB_SIZE, d, Init::Xavier)?,
            pos_emb: bld.param("itg.pos_emb", MAX_LEN, d, Init::Xavier)?,
            self_q: bld.param("itg.self_q", d, d, Init::Xavier)?,
            self_k: bld.param("itg.self_k", d, d, Init::Xavier)?,
            self_v: bld.param("itg.self_v", d, d, Init::Xavier)?,
            cross_q: bld.param("itg.cross_q", d, d, Init::Xavier)?,
            cross_k: bld.param("itg.cross_k", d, d, Init::Xavier)?,
            cross_v: bld.param("itg.cross_v", d, d, Init::Xavier)?,
            out: bld.param("itg.out", d, VOCAB_SIZE, Init::Zero)?,
        })
    }
}

fn check_prefix(prefix: &[Token]) -> Result<()> {
    if prefix.is_empty() || prefix.len() > MAX_LEN {
        return Err(Error::InvalidPrefix(format!(
            "length {} outside 1..={MAX_LEN}",
            prefix.len()
        )));
    }
    if prefix[0] != Token::Bos {
        return Err(Error::InvalidPrefix("must start with BOS".into()));
    }
    Ok(())
}

/// Next-token logits after every prefix position: `|prefix| x V`. Row `i`
/// depends only on `prefix[..=i]` and the unmasked rows of `a`.
pub fn sequence_logits(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &ItgParams,
    prefix: &[Token],
    a: Var,
    a_mask: &[bool],
) -> Result<Var> {
    check_prefix(prefix)?;
    if tape.value(a).rows() != a_mask.len() {
        return Err(Error::Data(
            "conditioning mask length does not match its rows".into(),
        ));
    }
    let n = prefix.len();
    let ids: Vec<usize> = prefix.iter().map(|t| t.id()).collect();
    let tok = bind.var(tape, params.tok_emb);
    let pos = bind.var(tape, params.pos_emb);
    let e = tape.gather_rows(tok, &ids)?;
    let p = tape.slice_rows(pos, 0, n)?;
    let mut h = tape.add(e, p)?;

    let (wq, wk, wv) = (
        bind.var(tape, params.self_q),
        bind.var(tape, params.self_k),
        bind.var(tape, params.self_v),
    );
    let q = tape.matmul(h, wq)?;
    let k = tape.matmul(h, wk)?;
    let v = tape.matmul(h, wv)?;
    let sa = causal_attention(tape, q, k, v)?;
    h = tape.add(h, sa)?;

    if a_mask.iter().any(|&m| m) {
        let (wq, wk, wv) = (
            bind.var(tape, params.cross_q),
            bind.var(tape, params.cross_k),
            bind.var(tape, params.cross_v),
        );
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(a, wk)?;
        let v = tape.matmul(a, wv)?;
        let ca = scaled_dot_attention(tape, q, k, v, Some(a_mask))?;
        h = tape.add(h, ca)?;
    }
    let out = bind.var(tape, params.out);
    Ok(tape.matmul(h, out)?)
}

/// Logits for the token following `prefix`: `1 x V`.
pub fn step_logits(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &ItgParams,
    prefix: &[Token],
    a: Var,
    a_mask: &[bool],
) -> Result<Var> {
    let all = sequence_logits(tape, bind, params, prefix, a, a_mask)?;
    Ok(tape.slice_rows(all, prefix.len() - 1, 1)?)
}

/// Teacher-forced mean negative log-likelihood of every token after BOS.
pub fn itg_loss(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &ItgParams,
    desc: &Description,
    a: Var,
    a_mask: &[bool],
) -> Result<Var> {
    let tokens = desc.tokens();
    let inputs = &tokens[..tokens.len() - 1];
    let targets: Vec<usize> = tokens[1..].iter().map(|t| t.id()).collect();
    let logits = sequence_logits(tape, bind, params, inputs, a, a_mask)?;
    let logp = tape.log_softmax_rows(logits);
    let picked = tape.pick_cols(logp, &targets)?;
    let mean = tape.mean(picked);
    Ok(tape.scale(mean, -1.0))
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding from `[BOS]` until EOS or `max_len` tokens; EOS is
/// appended if the limit is hit first.
pub fn greedy_decode(
    tape: &mut Tape,
    bind: &mut Binder,
    params: &ItgParams,
    a: Var,
    a_mask: &[bool],
    max_len: usize,
) -> Result<Vec<Token>> {
    let max_len = max_len.clamp(1, MAX_LEN);
    let mut out = vec![Token::Bos];
    while out.len() < max_len {
        let logits = step_logits(tape, bind, params, &out, a, a_mask)?;
        let next = Token::from_id(argmax(tape.value(logits).row(0))).expect("vocabulary id");
        out.push(next);
        if next == Token::Eos {
            return Ok(out);
        }
    }
    out.push(Token::Eos);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use numkit::{ParamStore, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize, zero: bool) -> (ParamStore, ItgParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ItgParams::new(
            &mut Builder {
                store: &mut store,
                rng: &mut rng,
                all_zero: zero,
            },
            d,
        )
        .unwrap();
        (store, p)
    }

    fn sample_desc() -> Description {
        Description::from_clauses(&[[Token::Car, Token::Ahead, Token::Near, Token::Approaching]])
    }

    #[test]
    fn zero_params_give_uniform_loss() {
        let (store, p) = setup(4, true);
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&store);
        let a = tape.constant(Tensor::zeros(3, 4));
        let l = itg_loss(
            &mut tape,
            &mut bind,
            &p,
            &sample_desc(),
            a,
            &[true, false, true],
        )
        .unwrap();
        assert!((tape.value(l).item() - (VOCAB_SIZE as f64).ln()).abs() < 1e-12);
        let s = step_logits(
            &mut tape,
            &mut bind,
            &p,
            &[Token::Bos],
            a,
            &[true, false, true],
        )
        .unwrap();
        assert_eq!(tape.value(s), &Tensor::zeros(1, VOCAB_SIZE));
    }

    #[test]
    fn random_params_give_finite_logits_of_vocab_width() {
        let (mut store, p) = setup(4, false);
        *store.get_mut(p.out) = Tensor::from_fn(4, VOCAB_SIZE, |i, j| ((i * 7 + j) as f64).cos());
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&store);
        let a = tape.constant(Tensor::from_fn(2, 4, |i, j| (i + j) as f64));
        let s = step_logits(&mut tape, &mut bind, &p, &[Token::Bos], a, &[true, true]).unwrap();
        assert_eq!(tape.value(s).shape(), (1, VOCAB_SIZE));
        assert!(tape.value(s).is_finite());
        let l = itg_loss(&mut tape, &mut bind, &p, &sample_desc(), a, &[true, true]).unwrap();
        assert!(tape.value(l).item() >= 0.0);
    }

    #[test]
    fn invalid_prefixes_rejected() {
        let (store, p) = setup(2, false);
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&store);
        let a = tape.constant(Tensor::zeros(1, 2));
        assert!(step_logits(&mut tape, &mut bind, &p, &[], a, &[true]).is_err());
        assert!(step_logits(&mut tape, &mut bind, &p, &[Token::Car], a, &[true]).is_err());
        let long = vec![Token::Bos; MAX_LEN + 1];
        assert!(matches!(
            step_logits(&mut tape, &mut bind, &p, &long, a, &[true]),
            Err(Error::InvalidPrefix(_))
        ));
    }

    #[test]
    fn step_logits_are_causal() {
        let (mut store, p) = setup(4, false);
        *store.get_mut(p.out) = Tensor::from_fn(4, VOCAB_SIZE, |i, j| ((i + 3 * j) as f64).sin());
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&store);
        let a = tape.constant(Tensor::from_fn(2, 4, |i, j| (i * j) as f64 - 0.5));
        let full = [Token::Bos, Token::Ped, Token::Left, Token::Far];
        let seq = sequence_logits(&mut tape, &mut bind, &p, &full, a, &[true, true]).unwrap();
        let seq = tape.value(seq).clone();
        for i in 0..full.len() {
            let s = step_logits(&mut tape, &mut bind, &p, &full[..=i], a, &[true, true]).unwrap();
            assert_eq!(tape.value(s).row(0), seq.row(i));
        }
    }

    #[test]
    fn decode_is_framed_and_bounded() {
        let (mut store, p) = setup(4, false);
        // favour CAR at every step: never emits EOS
        *store.get_mut(p.out) =
            Tensor::from_fn(4, VOCAB_SIZE, |_, j| if j == 4 { 1.0 } else { 0.0 });
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&store);
        let a = tape.constant(Tensor::full(1, 4, 1.0));
        let out = greedy_decode(&mut tape, &mut bind, &p, a, &[true], MAX_LEN).unwrap();
        assert_eq!(out.len(), MAX_LEN + 1);
        assert_eq!(out[0], Token::Bos);
        assert_eq!(*out.last().unwrap(), Token::Eos);
    }

    #[test]
    fn argmax_prefers_lowest_id_on_ties() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0, 1.0]), 1);
    }
}
