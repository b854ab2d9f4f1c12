//! Finite-difference checks of every graph operation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

type Build = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Evaluates `sum(w * f(inputs))` with fixed random `w`.
fn objective(
    inputs: &[Tensor],
    build: &Build,
    weights: &mut Option<Tensor>,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone()).unwrap()).collect();
    let out = build(&mut g, &vars).unwrap();
    let [r, c] = g.shape(out);
    let w = weights.get_or_insert_with(|| random(r, c, rng, -1.0, 1.0)).clone();
    let wv = g.input(w).unwrap();
    let prod = g.mul(out, wv).unwrap();
    let loss = g.sum(prod).unwrap();
    let grads = g.backward(loss).unwrap();
    let gs = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .wrt(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect();
    (g.scalar(loss), gs)
}

fn check(name: &str, inputs: Vec<Tensor>, build: &Build) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut weights = None;
    let (_, analytic) = objective(&inputs, build, &mut weights, &mut rng);
    for (i, input) in inputs.iter().enumerate() {
        for k in 0..input.len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[k] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[k] -= H;
            let fp = objective(&plus, build, &mut weights, &mut rng).0;
            let fm = objective(&minus, build, &mut weights, &mut rng).0;
            let numeric = (fp - fm) / (2.0 * H);
            let a = analytic[i].data()[k];
            let scale = 1.0f64.max(a.abs()).max(numeric.abs());
            assert!(
                (a - numeric).abs() <= TOL * scale,
                "{name}: input {i} entry {k}: analytic {a} numeric {numeric}"
            );
        }
    }
}

const SHAPES: [(usize, usize); 3] = [(1, 1), (2, 3), (4, 2)];

fn unary(name: &str, lo: f64, hi: f64, f: fn(&mut Graph, Var) -> Result<Var>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (r, c) in SHAPES {
        check(name, vec![random(r, c, &mut rng, lo, hi)], &move |g, v| f(g, v[0]));
    }
}

fn binary(name: &str, f: fn(&mut Graph, Var, Var) -> Result<Var>) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (r, c) in SHAPES {
        let a = random(r, c, &mut rng, -2.0, 2.0);
        let b = random(r, c, &mut rng, -2.0, 2.0);
        check(name, vec![a, b], &move |g, v| f(g, v[0], v[1]));
    }
}

#[test]
fn elementwise_unary() {
    unary("tanh", -2.0, 2.0, |g, x| g.tanh(x));
    unary("sigmoid", -4.0, 4.0, |g, x| g.sigmoid(x));
    unary("relu", 0.1, 2.0, |g, x| g.relu(x));
    unary("relu_neg", -2.0, -0.1, |g, x| g.relu(x));
    unary("softplus", -4.0, 4.0, |g, x| g.softplus(x));
    unary("exp", -2.0, 2.0, |g, x| g.exp(x));
    unary("sqrt", 0.5, 3.0, |g, x| g.sqrt(x));
    unary("recip", 0.5, 3.0, |g, x| g.recip(x));
    unary("powi3", -2.0, 2.0, |g, x| g.powi(x, 3));
    unary("powi-3", 0.5, 2.0, |g, x| g.powi(x, -3));
    unary("clamp_min", 0.2, 2.0, |g, x| g.clamp_min(x, 0.1));
    unary("scale", -2.0, 2.0, |g, x| g.scale(x, -1.7));
    unary("transpose", -2.0, 2.0, |g, x| g.transpose(x));
    unary("sum", -2.0, 2.0, |g, x| g.sum(x));
    unary("sum_rows", -2.0, 2.0, |g, x| g.sum_rows(x));
    unary("sum_cols", -2.0, 2.0, |g, x| g.sum_cols(x));
    unary("softmax", -2.0, 2.0, |g, x| g.softmax_rows(x, None));
    unary("reshape", -2.0, 2.0, |g, x| {
        let [r, c] = g.shape(x);
        g.reshape(x, c, r)
    });
}

#[test]
fn layer_norm_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (r, c) in [(1, 3), (2, 4), (3, 5)] {
        check("layer_norm", vec![random(r, c, &mut rng, -2.0, 2.0)], &|g, v| {
            g.layer_norm_rows(v[0], 1e-5)
        });
    }
}

#[test]
fn elementwise_binary() {
    binary("add", |g, a, b| g.add(a, b));
    binary("sub", |g, a, b| g.sub(a, b));
    binary("mul", |g, a, b| g.mul(a, b));
}

#[test]
fn products_and_broadcasts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, k, m) in [(1, 1, 1), (2, 3, 4), (4, 2, 3)] {
        let a = random(n, k, &mut rng, -1.0, 1.0);
        let b = random(k, m, &mut rng, -1.0, 1.0);
        check("matmul", vec![a, b], &|g, v| g.matmul(v[0], v[1]));
        let x = random(n, m, &mut rng, -1.0, 1.0);
        let row = random(1, m, &mut rng, -1.0, 1.0);
        let col = random(n, 1, &mut rng, -1.0, 1.0);
        let s = random(1, 1, &mut rng, -1.0, 1.0);
        check("add_row", vec![x.clone(), row.clone()], &|g, v| g.add_row(v[0], v[1]));
        check("mul_row", vec![x.clone(), row.clone()], &|g, v| g.mul_row(v[0], v[1]));
        check("mul_col", vec![x.clone(), col], &|g, v| g.mul_col(v[0], v[1]));
        check("mul_scalar", vec![x, s], &|g, v| g.mul_scalar(v[0], v[1]));
        check("repeat_rows", vec![row], &move |g, v| g.repeat_rows(v[0], n));
    }
}

#[test]
fn structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (r, c) in [(1, 2), (2, 3), (3, 4)] {
        let a = random(r, c, &mut rng, -1.0, 1.0);
        let b = random(r, 1, &mut rng, -1.0, 1.0);
        let d = random(1, c, &mut rng, -1.0, 1.0);
        check("concat_cols", vec![a.clone(), b], &|g, v| {
            g.concat_cols(&[v[0], v[1], v[0]])
        });
        check("concat_rows", vec![a.clone(), d], &|g, v| g.concat_rows(&[v[1], v[0]]));
        check("slice_cols", vec![a.clone()], &move |g, v| g.slice_cols(v[0], 1, c - 1));
        check("slice_rows", vec![a], &move |g, v| g.slice_rows(v[0], r - 1, 1));
    }
}

#[test]
fn masked_softmax_and_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (r, c) in SHAPES {
        let mask: Vec<bool> = (0..c).map(|j| j % 2 == 0).collect();
        let x = random(r, c, &mut rng, -2.0, 2.0);
        check("masked_softmax", vec![x.clone()], &move |g, v| {
            g.softmax_rows(v[0], Some(&mask))
        });
        let target = random(r, c, &mut rng, -2.0, 2.0);
        let t = target.clone();
        check("huber", vec![x.clone()], &move |g, v| g.huber(v[0], &t, 0.7));
        let soft = target.map(libm::exp);
        let soft = {
            let mut s = soft;
            for row in 0..r {
                let total: f64 = s.row_slice(row).iter().sum();
                for col in 0..c {
                    let v = s.at(row, col) / total;
                    s.set(row, col, v);
                }
            }
            s
        };
        check("soft_cross_entropy", vec![x], &move |g, v| {
            g.soft_cross_entropy(v[0], &soft)
        });
    }
}

#[test]
fn layers_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "attn", 4, 2, &mut rng).unwrap();
    let norm = LayerNorm::new(&mut store, "ln", 4).unwrap();
    let lstm = LstmCell::new(&mut store, "lstm", 4, 3, &mut rng).unwrap();
    let q = random(2, 4, &mut rng, -1.0, 1.0);
    let k = random(3, 4, &mut rng, -1.0, 1.0);
    let mask = [true, false, true];
    let store2 = store.clone();
    check("attention", vec![q, k], &move |g, v| {
        let out = attn.forward(g, &store2, v[0], v[1], Some(&mask))?;
        norm.forward(g, &store2, out.output)
    });
    let x = random(1, 4, &mut rng, -1.0, 1.0);
    let h = random(1, 3, &mut rng, -1.0, 1.0);
    let c = random(1, 3, &mut rng, -1.0, 1.0);
    check("lstm", vec![x, h, c], &move |g, v| {
        let (h, c) = lstm.step(g, &store, v[0], v[1], v[2])?;
        g.concat_cols(&[h, c])
    });
}

#[test]
fn masked_keys_get_exact_zero_weight() {
    let mut g = Graph::new();
    let x = g.input(Tensor::from_rows(&[[1.0, 50.0, -3.0]]).unwrap()).unwrap();
    let y = g.softmax_rows(x, Some(&[true, false, true])).unwrap();
    assert_eq!(g.value(y).at(0, 1), 0.0);
    assert!((g.value(y).sum() - 1.0).abs() < 1e-15);
    assert!(matches!(
        g.softmax_rows(x, Some(&[false, false, false])),
        Err(crate::Error::DegenerateAttention { .. })
    ));
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "l", 3, 2, &mut rng).unwrap();
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(2, 4)).unwrap();
    let err = lin.forward(&mut g, &store, x).unwrap_err();
    assert_eq!(
        err,
        crate::Error::Shape {
            op: "linear",
            left: [2, 4],
            right: [3, 2]
        }
    );
}

#[test]
fn non_finite_values_are_reported() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(0.0)).unwrap();
    assert_eq!(g.recip(x).unwrap_err(), crate::Error::NonFinite { op: "recip" });
}

#[test]
fn param_grads_accumulate_into_store() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::row(&[2.0, 3.0])).unwrap();
    for _ in 0..2 {
        let mut g = Graph::new();
        let w = g.param(&store, id).unwrap();
        let w2 = g.param(&store, id).unwrap();
        assert_eq!(w, w2);
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        g.accumulate_param_grads(&grads, &mut store);
    }
    assert_eq!(store.grad(id).data(), &[8.0, 12.0]);
}

#[test]
fn linear_hand_values() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lin = Linear::new(&mut store, "l", 2, 2, &mut rng).unwrap();
    *store.value_mut(lin.weight) = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    *store.value_mut(lin.bias) = Tensor::row(&[1.0, 1.0]);
    let mut g = Graph::new();
    let x = g.input(Tensor::row(&[1.0, 2.0])).unwrap();
    let y = lin.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.value(y).data(), &[2.0, 3.0]);
    *store.value_mut(lin.bias) = Tensor::row(&[0.0, 0.0]);
    let mut g = Graph::new();
    let x = g.input(Tensor::row(&[-0.5, 7.0])).unwrap();
    let y = lin.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.value(y).data(), &[-0.5, 7.0]);
}

#[test]
fn linear_gradient_absolute_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(3, 4, &mut rng, -1.0, 1.0);
    let w = random(4, 2, &mut rng, -1.0, 1.0);
    let b = random(1, 2, &mut rng, -1.0, 1.0);
    let f = |x: &Tensor, w: &Tensor, b: &Tensor| -> (f64, Vec<Tensor>) {
        let mut g = Graph::new();
        let (xv, wv, bv) = (
            g.input(x.clone()).unwrap(),
            g.input(w.clone()).unwrap(),
            g.input(b.clone()).unwrap(),
        );
        let y = g.matmul(xv, wv).unwrap();
        let y = g.add_row(y, bv).unwrap();
        let y = g.tanh(y).unwrap();
        let loss = g.sum(y).unwrap();
        let gr = g.backward(loss).unwrap();
        (
            g.scalar(loss),
            [xv, wv, bv].iter().map(|v| gr.wrt(*v).unwrap().clone()).collect(),
        )
    };
    let (_, an) = f(&x, &w, &b);
    let mut inputs = [x, w, b];
    for i in 0..3 {
        for k in 0..inputs[i].len() {
            let orig = inputs[i].data()[k];
            inputs[i].data_mut()[k] = orig + H;
            let fp = f(&inputs[0], &inputs[1], &inputs[2]).0;
            inputs[i].data_mut()[k] = orig - H;
            let fm = f(&inputs[0], &inputs[1], &inputs[2]).0;
            inputs[i].data_mut()[k] = orig;
            assert!((an[i].data()[k] - (fp - fm) / (2.0 * H)).abs() < 1e-6);
        }
    }
}

#[test]
fn attention_single_and_identical_keys() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "a", 4, 1, &mut rng).unwrap();
    let mut g = Graph::new();
    let q = g.input(random(3, 4, &mut rng, -1.0, 1.0)).unwrap();
    let key_row = random(1, 4, &mut rng, -1.0, 1.0);
    let k1 = g.input(key_row.clone()).unwrap();
    let one = attn.forward(&mut g, &store, q, k1, None).unwrap();
    let k2 = g
        .input(Tensor::from_rows(&[key_row.data(), key_row.data()]).unwrap())
        .unwrap();
    let two = attn.forward(&mut g, &store, q, k2, None).unwrap();
    let v = attn.value.forward(&mut g, &store, k1).unwrap();
    let expected = attn.output.forward(&mut g, &store, v).unwrap();
    for r in 0..3 {
        for c in 0..4 {
            let e = g.value(expected).at(0, c);
            assert!((g.value(one.output).at(r, c) - e).abs() < 1e-12);
            assert!((g.value(two.output).at(r, c) - e).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_weights_sum_to_one_over_unmasked() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "a", 8, 2, &mut rng).unwrap();
    let mut g = Graph::new();
    let q = g.input(random(5, 8, &mut rng, -2.0, 2.0)).unwrap();
    let k = g.input(random(4, 8, &mut rng, -2.0, 2.0)).unwrap();
    let mask = [true, false, true, true];
    let out = attn.forward(&mut g, &store, q, k, Some(&mask)).unwrap();
    for w in out.weights {
        let t = g.value(w);
        for r in 0..t.rows() {
            let row = t.row_slice(r);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(row[1], 0.0);
            assert!(row[0] > 0.0 && row[2] > 0.0 && row[3] > 0.0);
        }
    }
}

#[test]
fn lstm_zero_weights_and_bounded_hidden() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "c", 3, 4, &mut rng).unwrap();
    let mut zeroed = store.clone();
    let ids: Vec<_> = zeroed.ids().collect();
    for id in ids {
        zeroed.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new();
    let x = g.input(random(1, 3, &mut rng, -1.0, 1.0)).unwrap();
    let z = g.input(Tensor::zeros(1, 4)).unwrap();
    let (h, _) = cell.step(&mut g, &zeroed, x, z, z).unwrap();
    assert!(g.value(h).data().iter().all(|v| *v == 0.0));
    for _ in 0..20 {
        let x = g.input(random(1, 3, &mut rng, -5.0, 5.0)).unwrap();
        let h0 = g.input(random(1, 4, &mut rng, -1.0, 1.0)).unwrap();
        let c0 = g.input(random(1, 4, &mut rng, -3.0, 3.0)).unwrap();
        let (h, _) = cell.step(&mut g, &store, x, h0, c0).unwrap();
        assert!(g.value(h).data().iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn lstm_unrolled_three_steps_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "c", 2, 3, &mut rng).unwrap();
    let xs: Vec<Tensor> = (0..3).map(|_| random(1, 2, &mut rng, -1.0, 1.0)).collect();
    let run = |store: &ParamStore| -> (f64, Graph, Var) {
        let mut g = Graph::new();
        let mut h = g.input(Tensor::zeros(1, 3)).unwrap();
        let mut c = h;
        for x in &xs {
            let xv = g.input(x.clone()).unwrap();
            (h, c) = cell.step(&mut g, store, xv, h, c).unwrap();
        }
        let loss = g.sum(h).unwrap();
        (g.scalar(loss), g, loss)
    };
    let (_, g, loss) = run(&store);
    let grads = g.backward(loss).unwrap();
    store.zero_grads();
    g.accumulate_param_grads(&grads, &mut store);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.value(id).len() {
            let analytic = store.grad(id).data()[k];
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + H;
            let fp = run(&store).0;
            store.value_mut(id).data_mut()[k] = orig - H;
            let fm = run(&store).0;
            store.value_mut(id).data_mut()[k] = orig;
            assert!((analytic - (fp - fm) / (2.0 * H)).abs() < 1e-5);
        }
    }
}

#[test]
fn adam_hand_step_zero_gradient_and_determinism() {
    let mut store = ParamStore::new();
    let id = store.add("p", Tensor::scalar(0.5)).unwrap();
    *store.grad_mut(id) = Tensor::scalar(1.0);
    let mut twin = store.clone();
    let mut adam = Adam::new(0.01);
    let mut adam2 = adam.clone();
    adam.step(&mut store, |_| true).unwrap();
    // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
    assert_eq!(store.value(id).data()[0], 0.5 - 0.01 * (1.0 / (1.0 + 1e-8)));
    adam2.step(&mut twin, |_| true).unwrap();
    assert_eq!(store.value(id).data()[0].to_bits(), twin.value(id).data()[0].to_bits());

    let mut still = ParamStore::new();
    let sid = still.add("p", Tensor::row(&[1.0, -2.0])).unwrap();
    Adam::new(0.1).step(&mut still, |_| true).unwrap();
    assert_eq!(still.value(sid).data(), &[1.0, -2.0]);
}

#[test]
fn softmax_positive_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = Graph::new();
    let x = g.input(random(6, 7, &mut rng, -30.0, 30.0)).unwrap();
    let y = g.softmax_rows(x, None).unwrap();
    let t = g.value(y);
    for r in 0..6 {
        assert!((t.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(t.row_slice(r).iter().all(|v| *v > 0.0));
    }
}
