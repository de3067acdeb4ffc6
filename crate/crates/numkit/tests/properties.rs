use numkit::{
    causal_attention, grad_check, scaled_dot_attention, softmax_rows_value, Result, Tape, Tensor,
    Var,
};
use proptest::prelude::*;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |d| Tensor::new(rows, cols, d).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=4, 1usize..=4, 1usize..=4)
}

/// Reduces any output to a scalar with fixed, non-uniform weights so that
/// every output coordinate contributes a distinct amount.
fn weighted_sum(tape: &mut Tape, y: Var) -> Result<Var> {
    let (r, c) = tape.value(y).shape();
    let w = tape.constant(Tensor::from_fn(r, c, |i, j| {
        0.3 + 0.7 * ((i * 7 + j * 3) % 5) as f64
    }));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grad_matmul((m, k, n) in dims(), seed in any::<u64>()) {
        let a = Tensor::from_fn(m, k, |i, j| ((seed >> ((i + j) % 16)) % 7) as f64 * 0.3 - 1.0);
        let b = Tensor::from_fn(k, n, |i, j| ((i * 3 + j) as f64).sin());
        let err = grad_check(|t, v| { let y = t.matmul(v[0], v[1])?; weighted_sum(t, y) }, &[a, b], EPS).unwrap();
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn grad_elementwise(a in tensor(3, 4), b in tensor(3, 4)) {
        let denom = b.map(|v| v.abs() + 0.5);
        let err = grad_check(|t, v| {
            let s = t.add(v[0], v[1])?;
            let d = t.sub(s, v[0])?;
            let p = t.mul(d, v[0])?;
            let q = t.div(p, v[2])?;
            let th = t.tanh(q);
            let sc = t.scale(th, 1.7);
            let off = t.offset(sc, 0.25);
            weighted_sum(t, off)
        }, &[a, b, denom], EPS).unwrap();
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn grad_log_sqrt_clamp(a in tensor(2, 3)) {
        let pos = a.map(|v| v.abs() + 0.3);
        let err = grad_check(|t, v| {
            let l = t.log(v[0]);
            let s = t.sqrt(v[0]);
            let c = t.clamp(v[1], -1.0, 1.0);
            let x = t.add(l, s)?;
            let y = t.mul(x, c)?;
            weighted_sum(t, y)
        }, &[pos, a.map(|v| if (v.abs() - 1.0).abs() < 1e-3 { v * 0.5 } else { v })], EPS).unwrap();
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn grad_softmax_and_log_softmax(x in tensor(3, 4)) {
        let err = grad_check(|t, v| {
            let s = t.softmax_rows(v[0]);
            let ls = t.log_softmax_rows(v[0]);
            let y = t.add(s, ls)?;
            weighted_sum(t, y)
        }, &[x], EPS).unwrap();
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn grad_structural_ops(x in tensor(4, 3), b in tensor(1, 3), y in tensor(2, 3)) {
        let err = grad_check(|t, v| {
            let ar = t.add_row(v[0], v[1])?;
            let tr = t.transpose(ar);
            let back = t.transpose(tr);
            let cat = t.concat_rows(&[back, v[2]])?;
            let cc = t.concat_cols(&[cat, cat])?;
            let sr = t.slice_rows(cc, 1, 4)?;
            let sc = t.slice_cols(sr, 2, 3)?;
            let g = t.gather_rows(sc, &[0, 3, 3, 1])?;
            let mx = t.mix_rows(g, &[vec![(0, 0.25), (2, 0.75)], vec![(1, -1.0)]])?;
            let rs = t.reshape(mx, 3, 2)?;
            let mr = t.mean_rows(rs)?;
            let pk = t.pick_cols(rs, &[1, 0, 1])?;
            let s1 = weighted_sum(t, mr)?;
            let s2 = weighted_sum(t, pk)?;
            let m = t.mean(g);
            let a = t.add(s1, s2)?;
            t.add(a, m)
        }, &[x, b, y], EPS).unwrap();
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn grad_attention(q in tensor(2, 3), k in tensor(4, 3), v in tensor(4, 3), mask_bits in 1u8..16) {
        let mask: Vec<bool> = (0..4).map(|i| mask_bits & (1 << i) != 0).collect();
        let err = grad_check(|t, x| {
            let o = scaled_dot_attention(t, x[0], x[1], x[2], Some(&mask))?;
            weighted_sum(t, o)
        }, &[q.clone(), k.clone(), v.clone()], EPS).unwrap();
        prop_assert!(err < TOL, "{}", err);

        let err = grad_check(|t, x| {
            let o = causal_attention(t, x[0], x[1], x[2])?;
            weighted_sum(t, o)
        }, &[k.clone(), k, v], EPS).unwrap();
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(x in tensor(4, 4), c in -50.0f64..50.0) {
        let s = softmax_rows_value(&x);
        for r in 0..4 {
            let total: f64 = s.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.row(r).iter().all(|&p| p >= 0.0));
        }
        let shifted = softmax_rows_value(&x.map(|v| v + c));
        for (a, b) in s.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_keys_average_values(q in tensor(3, 2), key in tensor(1, 2), v in tensor(4, 2)) {
        let mut tape = Tape::new();
        let qv = tape.constant(q);
        let kv = tape.constant(Tensor::from_fn(4, 2, |_, j| key.get(0, j)));
        let vv = tape.constant(v.clone());
        let out = scaled_dot_attention(&mut tape, qv, kv, vv, None).unwrap();
        for j in 0..2 {
            let mean = (0..4).map(|i| v.get(i, j)).sum::<f64>() / 4.0;
            for r in 0..3 {
                prop_assert!((tape.value(out).get(r, j) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_is_associative(a in tensor(3, 4), b in tensor(4, 2), c in tensor(2, 3)) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn matmul_identity_and_zero(a in tensor(3, 4)) {
        prop_assert_eq!(a.matmul(&Tensor::identity(4)).unwrap(), a.clone());
        prop_assert_eq!(a.matmul(&Tensor::zeros(4, 2)).unwrap(), Tensor::zeros(3, 2));
    }
}
