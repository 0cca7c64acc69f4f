use padd::numerics::{finite_difference_grad, max_relative_error, Graph, NodeId, Tensor};
use padd::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces `out` to a scalar through a fixed random bilinear form and a
/// nonlinearity, so every output element gets a distinct weight.
fn reduce(g: &mut Graph<'_>, out: NodeId, rng_seed: u64) -> Result<NodeId> {
    let shape = g.value(out).shape().to_vec();
    if shape.iter().product::<usize>() == 1 {
        return Ok(out);
    }
    let (m, n) = match shape.as_slice() {
        [m, n] => (*m, *n),
        [n] => (1, *n),
        _ => panic!("unsupported rank"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let out = if shape.len() == 1 {
        let t = g.value(out).clone().reshape(vec![1, n]).unwrap();
        g.leaf(t, false)
    } else {
        out
    };
    let q = g.leaf(random(&mut rng, &[1, m]), false);
    let r = g.leaf(random(&mut rng, &[n, 3]), false);
    let pooled = g.matmul(q, out)?;
    let proj = g.matmul(pooled, r)?;
    let act = g.gelu(proj)?;
    g.sum(act)
}

type Build = dyn Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>;

fn check_op(name: &str, shapes: &[&[usize]], build: &Build, prep: fn(f64) -> f64) {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let inputs: Vec<Tensor> = shapes
            .iter()
            .map(|s| random(&mut rng, s).map(prep))
            .collect();

        let loss_of = |vals: &[Tensor]| -> f64 {
            let mut g = Graph::new();
            let ids: Vec<_> = vals.iter().map(|v| g.leaf(v.clone(), true)).collect();
            let out = build(&mut g, &ids).unwrap();
            let l = reduce(&mut g, out, seed).unwrap();
            g.value(l).item()
        };

        let mut g = Graph::new();
        let ids: Vec<_> = inputs.iter().map(|v| g.leaf(v.clone(), true)).collect();
        let out = build(&mut g, &ids).unwrap();
        let loss = reduce(&mut g, out, seed).unwrap();
        let grads = g.backward(loss).unwrap();

        for (k, id) in ids.iter().enumerate() {
            let analytic = grads.wrt(*id);
            assert_eq!(analytic.shape(), inputs[k].shape());
            let numeric = finite_difference_grad(
                |p| {
                    let mut vals = inputs.clone();
                    vals[k] = p.clone();
                    loss_of(&vals)
                },
                &inputs[k],
                1e-5,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "{name} input {k} seed {seed}: rel err {err}");
        }
    }
}

fn id(x: f64) -> f64 {
    x
}

fn away_from_zero(x: f64) -> f64 {
    if x.abs() < 0.05 {
        x.signum() * 0.05 + x
    } else {
        x
    }
}

#[test]
fn gradcheck_matmul() {
    check_op(
        "matmul",
        &[&[3, 4], &[4, 2]],
        &|g, x| g.matmul(x[0], x[1]),
        id,
    );
    check_op(
        "matmul_nt",
        &[&[3, 4], &[5, 4]],
        &|g, x| g.matmul_nt(x[0], x[1]),
        id,
    );
    check_op("transpose", &[&[3, 4]], &|g, x| g.transpose(x[0]), id);
}

#[test]
fn gradcheck_add_and_scale() {
    check_op("add", &[&[3, 4], &[3, 4]], &|g, x| g.add(x[0], x[1]), id);
    check_op("add_row", &[&[3, 4], &[4]], &|g, x| g.add(x[0], x[1]), id);
    check_op(
        "mul_scalar",
        &[&[2, 3]],
        &|g, x| g.mul_scalar(x[0], -0.7),
        id,
    );
    check_op("sum", &[&[2, 3]], &|g, x| g.sum(x[0]), id);
    let table = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.0, 0.25, 3.0]).unwrap();
    check_op(
        "embedding_add",
        &[&[2, 3]],
        &move |g, x| g.embedding_add(x[0], &table),
        id,
    );
}

#[test]
fn gradcheck_normalization_and_activations() {
    check_op(
        "layernorm",
        &[&[3, 5], &[5], &[5]],
        &|g, x| g.layernorm(x[0], x[1], x[2], 1e-5),
        id,
    );
    check_op("softmax", &[&[3, 4]], &|g, x| g.softmax(x[0]), id);
    check_op("gelu", &[&[3, 4]], &|g, x| g.gelu(x[0]), id);
    check_op("relu", &[&[3, 4]], &|g, x| g.relu(x[0]), away_from_zero);
}

#[test]
fn gradcheck_conv_and_pooling() {
    check_op(
        "conv1d",
        &[&[11, 2], &[3, 2, 3], &[3]],
        &|g, x| g.conv1d(x[0], x[1], x[2], 2),
        id,
    );
    check_op("mean_pool", &[&[4, 3]], &|g, x| g.mean_pool(x[0]), id);
}

#[test]
fn gradcheck_slicing() {
    check_op(
        "slice_rows",
        &[&[5, 3]],
        &|g, x| g.slice_rows(x[0], 1, 4),
        id,
    );
    check_op(
        "slice_cols",
        &[&[3, 5]],
        &|g, x| g.slice_cols(x[0], 2, 5),
        id,
    );
    check_op(
        "concat_rows",
        &[&[2, 3], &[4, 3]],
        &|g, x| g.concat_rows(&[x[0], x[1]]),
        id,
    );
    check_op(
        "concat_cols",
        &[&[3, 2], &[3, 1]],
        &|g, x| g.concat_cols(&[x[0], x[1]]),
        id,
    );
}

#[test]
fn gradcheck_cross_entropy() {
    check_op(
        "cross_entropy",
        &[&[3, 2]],
        &|g, x| g.cross_entropy(x[0], &[0, 1, 1], &[2.0, 0.5, 1.0]),
        id,
    );
}

#[test]
fn identity_matmul() {
    let a = Tensor::matrix(3, 3, vec![1., -2., 3., 4., 5., -6., 0.5, 8., 9.]).unwrap();
    let mut g = Graph::new();
    let i = g.leaf(Tensor::eye(3), false);
    let x = g.leaf(a.clone(), false);
    let y = g.matmul(i, x).unwrap();
    assert_eq!(g.forward(y), &a);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::row(&[0.0, 0.0, 0.0]), false);
    let y = g.softmax(x).unwrap();
    for &v in g.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let t = random(&mut rng, &[4, 7]).map(|v| v * 30.0);
        let mut g = Graph::new();
        let x = g.leaf(t, false);
        let y = g.softmax(x).unwrap();
        for row in g.value(y).data().chunks(7) {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn layernorm_standardizes_rows() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::row(&[1.0, 2.0, 3.0]), false);
    let gamma = g.leaf(Tensor::full(&[3], 1.0), false);
    let beta = g.leaf(Tensor::zeros(&[3]), false);
    let y = g.layernorm(x, gamma, beta, 0.0).unwrap();
    let v = g.value(y).data();
    let mean = v.iter().sum::<f64>() / 3.0;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-12);
}

#[test]
fn gradient_of_sum_is_ones() {
    let mut g = Graph::new();
    let x = g.leaf(
        Tensor::matrix(2, 3, vec![1., -4., 2., 0., 9., 3.]).unwrap(),
        true,
    );
    let s = g.sum(x).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.wrt(x), Tensor::full(&[2, 3], 1.0));
}

#[test]
fn gradient_of_self_dot_is_twice_input() {
    let v = Tensor::row(&[1.5, -2.0, 0.25]);
    let mut g = Graph::new();
    let x = g.leaf(v.clone(), true);
    let dot = g.matmul_nt(x, x).unwrap();
    let grads = g.backward(dot).unwrap();
    assert_eq!(grads.wrt(x).data(), &[3.0, -4.0, 0.5]);
}

#[test]
fn unreachable_leaf_gets_zero_grad() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::row(&[1.0, 2.0]), true);
    let unused = g.leaf(Tensor::row(&[3.0, 4.0, 5.0]), true);
    let s = g.sum(x).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.wrt(unused), Tensor::zeros(&[1, 3]));
}

#[test]
fn non_scalar_loss_rejected() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::row(&[1.0, 2.0]), true);
    let y = g.gelu(x).unwrap();
    assert!(matches!(g.backward(y), Err(padd::Error::NonScalarLoss(_))));
}

#[test]
fn shape_errors_name_the_op() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::zeros(&[2, 3]), false);
    let b = g.leaf(Tensor::zeros(&[2, 3]), false);
    let err = g.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    let c = g.leaf(Tensor::zeros(&[3, 2]), false);
    assert!(g.add(a, c).unwrap_err().to_string().contains("add"));
}

#[test]
fn repeated_passes_are_bitwise_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut g = Graph::new();
        let x = g.leaf(random(&mut rng, &[4, 6]), true);
        let w = g.leaf(random(&mut rng, &[6, 6]), true);
        let h = g.matmul(x, w).unwrap();
        let s = g.softmax(h).unwrap();
        let l = reduce(&mut g, s, 3).unwrap();
        let grads = g.backward(l).unwrap();
        (g.value(l).clone(), grads.wrt(x), grads.wrt(w))
    };
    let (l1, gx1, gw1) = run();
    let (l2, gx2, gw2) = run();
    assert!(l1.bit_eq(&l2) && gx1.bit_eq(&gx2) && gw1.bit_eq(&gw2));
}
