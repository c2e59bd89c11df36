//! Finite-difference gradient checks for every differentiable operation.
//!
//! The oracle is independent of the tape: central differences with h = 1e-5
//! applied to the parameter set, compared against reverse-mode gradients at
//! relative error < 1e-4.

use autodiff::{ParamSet, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Compare reverse-mode gradients of `build` against central differences,
/// for every entry of every parameter in `params`.
fn check_grads(
    params: &ParamSet,
    build: &dyn Fn(&mut Tape, &ParamSet) -> Var,
    label: &str,
) {
    let eval = |p: &ParamSet| -> f64 {
        let mut tape = Tape::new();
        let loss = build(&mut tape, p);
        tape.value(loss)
    };

    let mut reverse = params.clone();
    {
        let mut tape = Tape::new();
        let loss = build(&mut tape, &reverse);
        let snapshot = reverse.clone();
        tape.backward(loss, &mut reverse).unwrap();
        // Values untouched by backward.
        for (a, b) in snapshot.iter().zip(reverse.iter()) {
            assert_eq!(a.tensor.values, b.tensor.values);
        }
    }

    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    for name in &names {
        let n = params.by_name(name).unwrap().tensor.values.len();
        for i in 0..n {
            let mut probe = params.clone();
            let id = probe.id_of(name).unwrap();
            let orig = probe.get(id).tensor.values[i];
            probe.get_mut(id).tensor.values[i] = orig + H;
            let up = eval(&probe);
            probe.get_mut(id).tensor.values[i] = orig - H;
            let down = eval(&probe);
            let fd = (up - down) / (2.0 * H);
            let got = reverse.by_name(name).unwrap().tensor.grad.as_ref().unwrap()[i];
            assert!(
                rel_err(got, fd) < REL_TOL,
                "{label} {name}[{i}]: reverse {got} vs central-diff {fd}"
            );
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape, values).unwrap()
}

#[test]
fn matmul_gradient_matches_central_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        params
            .insert("a", rand_tensor(&mut rng, vec![3, 4], -2.0, 2.0))
            .unwrap();
        params
            .insert("b", rand_tensor(&mut rng, vec![4, 2], -2.0, 2.0))
            .unwrap();
        check_grads(
            &params,
            &|tape, p| {
                let a = tape.param(p, p.id_of("a").unwrap());
                let b = tape.param(p, p.id_of("b").unwrap());
                let prod = tape.matmul(a, b).unwrap();
                tape.sum(prod)
            },
            "sum(A*B)",
        );
    }
}

#[test]
fn elementwise_ops_gradients_match() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut params = ParamSet::new();
        params
            .insert("x", rand_tensor(&mut rng, vec![6], -2.0, 2.0))
            .unwrap();
        let other: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let o = other.clone();
        let w = weights.clone();
        check_grads(
            &params,
            &move |tape, p| {
                let x = tape.param(p, p.id_of("x").unwrap());
                let c = tape.constant(&o);
                let s = tape.add(x, c).unwrap();
                let sq = tape.mul(s, s).unwrap();
                let sc = tape.scale(sq, 0.7);
                tape.weighted_sum(&w, sc).unwrap()
            },
            "add-mul-scale",
        );

        let w2 = weights.clone();
        check_grads(
            &params,
            &move |tape, p| {
                let x = tape.param(p, p.id_of("x").unwrap());
                let t = tape.tanh(x);
                tape.weighted_sum(&w2, t).unwrap()
            },
            "tanh",
        );

        // log over strictly positive inputs, away from the clamp.
        let mut pos_params = ParamSet::new();
        pos_params
            .insert("x", rand_tensor(&mut rng, vec![6], 0.3, 3.0))
            .unwrap();
        let w3 = weights.clone();
        check_grads(
            &pos_params,
            &move |tape, p| {
                let x = tape.param(p, p.id_of("x").unwrap());
                let l = tape.log(x);
                tape.weighted_sum(&w3, l).unwrap()
            },
            "log",
        );
    }
}

#[test]
fn softmax_and_cross_entropy_gradients_match() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut params = ParamSet::new();
        params
            .insert("logits", rand_tensor(&mut rng, vec![5], -2.0, 2.0))
            .unwrap();
        let weights: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = rng.gen_range(0..5);

        let w = weights.clone();
        check_grads(
            &params,
            &move |tape, p| {
                let x = tape.param(p, p.id_of("logits").unwrap());
                let s = tape.softmax(x).unwrap();
                tape.weighted_sum(&w, s).unwrap()
            },
            "softmax",
        );

        check_grads(
            &params,
            &move |tape, p| {
                let x = tape.param(p, p.id_of("logits").unwrap());
                let s = tape.softmax(x).unwrap();
                let logp = tape.log(s);
                tape.cross_entropy(logp, target).unwrap()
            },
            "cross-entropy",
        );
    }
}

#[test]
fn gather_and_concat_gradients_match() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let mut params = ParamSet::new();
        params
            .insert("v", rand_tensor(&mut rng, vec![8], -2.0, 2.0))
            .unwrap();
        params
            .insert("table", rand_tensor(&mut rng, vec![4, 3], -2.0, 2.0))
            .unwrap();
        let i = rng.gen_range(0..8);
        let r = rng.gen_range(0..4);
        let weights: Vec<f64> = (0..11).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let w = weights.clone();
        check_grads(
            &params,
            &move |tape, p| {
                let v = tape.param(p, p.id_of("v").unwrap());
                let t = tape.param(p, p.id_of("table").unwrap());
                let picked = tape.index(v, i).unwrap();
                let sq = tape.mul(picked, picked).unwrap();
                let row = tape.row(t, r).unwrap();
                let joined = tape.concat(&[v, row]).unwrap();
                let ws = tape.weighted_sum(&w, joined).unwrap();
                tape.add(ws, sq).unwrap()
            },
            "index-row-concat",
        );
    }
}

#[test]
fn random_three_layer_network_passes_gradient_check() {
    // End-to-end: x -> tanh(W1x+b1) -> tanh(W2h+b2) -> softmax(W3h+b3),
    // cross-entropy loss; every parameter checked against central differences.
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let (din, dh, dout) = (4, 5, 3);
        let mut params = ParamSet::new();
        params.insert_xavier("w1", dh, din, &mut rng).unwrap();
        params.insert("b1", rand_tensor(&mut rng, vec![dh], -0.5, 0.5)).unwrap();
        params.insert_xavier("w2", dh, dh, &mut rng).unwrap();
        params.insert("b2", rand_tensor(&mut rng, vec![dh], -0.5, 0.5)).unwrap();
        params.insert_xavier("w3", dout, dh, &mut rng).unwrap();
        params.insert("b3", rand_tensor(&mut rng, vec![dout], -0.5, 0.5)).unwrap();
        let x: Vec<f64> = (0..din).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target = rng.gen_range(0..dout);

        let xc = x.clone();
        check_grads(
            &params,
            &move |tape, p| {
                let xv = tape.constant(&xc);
                let affine = |tape: &mut Tape, w: &str, b: &str, inp: Var| {
                    let wv = tape.param(p, p.id_of(w).unwrap());
                    let bv = tape.param(p, p.id_of(b).unwrap());
                    let prod = tape.matmul(wv, inp).unwrap();
                    tape.add(prod, bv).unwrap()
                };
                let h1 = affine(tape, "w1", "b1", xv);
                let h1 = tape.tanh(h1);
                let h2 = affine(tape, "w2", "b2", h1);
                let h2 = tape.tanh(h2);
                let logits = affine(tape, "w3", "b3", h2);
                let probs = tape.softmax(logits).unwrap();
                let logp = tape.log(probs);
                tape.cross_entropy(logp, target).unwrap()
            },
            "three-layer-net",
        );
    }
}

#[test]
fn backward_is_deterministic_bit_identical() {
    let run = || -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut params = ParamSet::new();
        params
            .insert("x", rand_tensor(&mut rng, vec![8], -2.0, 2.0))
            .unwrap();
        let weights: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let id = params.id_of("x").unwrap();
        let x = tape.param(&params, id);
        let t = tape.tanh(x);
        let s = tape.softmax(t).unwrap();
        let l = tape.log(s);
        let loss = tape.weighted_sum(&weights, l).unwrap();
        tape.backward(loss, &mut params).unwrap();
        params
            .get(id)
            .tensor
            .grad
            .as_ref()
            .unwrap()
            .iter()
            .map(|g| g.to_bits())
            .collect()
    };
    assert_eq!(run(), run());
}
