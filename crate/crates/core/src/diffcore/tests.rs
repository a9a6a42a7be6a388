use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn arr(shape: &[usize], data: &[f64]) -> DiffArray<f64> {
    DiffArray::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> DiffArray<f64> {
    DiffArray::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Triple-loop reference for `a (.., m, k) @ b (k, n)` or matching batches.
fn naive_matmul(a: &DiffArray<f64>, b: &DiffArray<f64>) -> Vec<f64> {
    let (m, k) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
    let n = b.shape()[b.rank() - 1];
    let batches = a.numel() / (m * k);
    let b_batched = b.rank() > 2;
    let mut out = vec![0.0; batches * m * n];
    for bi in 0..batches {
        let boff = if b_batched { bi * k * n } else { 0 };
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data()[bi * m * k + i * k + p] * b.data()[boff + p * n + j];
                }
                out[bi * m * n + i * n + j] = s;
            }
        }
    }
    out
}

#[test]
fn matmul_identity_leaves_rhs_unchanged() {
    let mut t = Tape::new();
    let eye = t.constant(arr(&[2, 2], &[1., 0., 0., 1.]));
    let b = t.constant(arr(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
    let c = t.matmul(eye, b).unwrap();
    assert_eq!(t.value(c), t.value(b));
}

#[test]
fn matmul_hand_example() {
    let mut t = Tape::new();
    let a = t.constant(arr(&[2, 2], &[1., 2., 3., 4.]));
    let b = t.constant(arr(&[2, 1], &[5., 6.]));
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.value(c).data(), &[17., 39.]);
    assert_eq!(t.shape(c), &[2, 1]);
}

#[test]
fn matmul_broadcasts_leading_axes() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(DiffArray::zeros(&[4, 2, 3]));
    let b = t.constant(DiffArray::zeros(&[3, 5]));
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.shape(c), &[4, 2, 5]);

    let a = t.constant(DiffArray::zeros(&[3, 2, 3]));
    let b = t.constant(DiffArray::zeros(&[4, 1, 3, 5]));
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.shape(c), &[4, 3, 2, 5]);
}

#[test]
fn matmul_shape_mismatch_is_descriptive() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(DiffArray::zeros(&[2, 3]));
    let b = t.constant(DiffArray::zeros(&[4, 5]));
    let err = t.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("inner dimensions"), "{err}");
    let b = t.constant(DiffArray::zeros(&[2, 3, 5]));
    let a = t.constant(DiffArray::zeros(&[3, 2, 3]));
    assert!(t.matmul(a, b).is_err());
}

#[test]
fn matmul_transposed_operands() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&[2, 4, 3], &mut rng);
    let b = random(&[2, 5, 3], &mut rng);
    let mut t = Tape::new();
    let (va, vb) = (t.constant(a.clone()), t.constant(b.clone()));
    let c = t.matmul_nt(va, vb).unwrap();
    let bt = t.transpose_last(vb).unwrap();
    let c2 = t.matmul(va, bt).unwrap();
    assert!(t.value(c).max_abs_diff(t.value(c2)) < 1e-14);

    let at = t.transpose_last(va).unwrap();
    let c3 = t.matmul_ex(at, vb, true, true).unwrap();
    assert!(t.value(c).max_abs_diff(t.value(c3)) < 1e-14);
}

#[test]
fn softmax_examples() {
    let mut t = Tape::new();
    let x = t.constant(arr(&[3], &[0., 0., 0.]));
    let s = t.softmax_last(x).unwrap();
    for &v in t.value(s).data() {
        assert!((v - 1. / 3.).abs() < 1e-15);
    }
    let x = t.constant(arr(&[3], &[1f64.ln(), 2f64.ln(), 3f64.ln()]));
    let s = t.softmax_last(x).unwrap();
    for (v, e) in t.value(s).data().iter().zip([1. / 6., 2. / 6., 3. / 6.]) {
        assert!((v - e).abs() < 1e-15);
    }
    let x = t.constant(arr(&[1], &[123.4]));
    let s = t.softmax_last(x).unwrap();
    assert_eq!(t.value(s).data(), &[1.0]);
}

#[test]
fn softmax_rejects_non_finite_input() {
    let mut t = Tape::new();
    let x = t.constant(arr(&[2], &[f64::NAN, 0.0]));
    assert!(matches!(t.softmax_last(x), Err(crate::Error::Numeric(_))));
}

#[test]
fn layer_norm_examples() {
    let mut t = Tape::new();
    let ones = t.constant(DiffArray::full(&[4], 1.0));
    let zeros = t.constant(DiffArray::zeros(&[4]));
    let x = t.constant(DiffArray::full(&[4], 5.0));
    let y = t.layer_norm(x, ones, zeros).unwrap();
    assert_eq!(t.value(y).data(), &[0.0; 4]);

    let one2 = t.constant(DiffArray::full(&[2], 1.0));
    let zero2 = t.constant(DiffArray::zeros(&[2]));
    let x = t.constant(arr(&[1, 2], &[1., 3.]));
    let y = t.layer_norm(x, one2, zero2).unwrap();
    let d = t.value(y).data();
    assert!((d[0] + 1.0).abs() < 1e-4 && (d[1] - 1.0).abs() < 1e-4);
    assert!(d[1] < 1.0, "epsilon shrinks the result");

    let bias = t.constant(arr(&[2], &[0.5, -2.0]));
    let y = t.layer_norm(x, zero2, bias).unwrap();
    assert_eq!(t.value(y).data(), &[0.5, -2.0]);

    let bad = t.constant(DiffArray::zeros(&[3]));
    assert!(t.layer_norm(x, bad, zero2).is_err());
}

#[test]
fn concat_examples() {
    let mut t = Tape::new();
    let a = t.constant(DiffArray::zeros(&[2, 3]));
    let b = t.constant(DiffArray::zeros(&[2, 4]));
    let c = t.concat_last(&[a, b]).unwrap();
    assert_eq!(t.shape(c), &[2, 7]);

    let single = t.concat_last(&[a]).unwrap();
    assert_eq!(t.value(single), t.value(a));

    let p = t.constant(arr(&[2, 1], &[1., 4.]));
    let q = t.constant(arr(&[2, 1], &[2., 5.]));
    let r = t.constant(arr(&[2, 1], &[3., 6.]));
    let c = t.concat_last(&[p, q, r]).unwrap();
    assert_eq!(t.value(c).data(), &[1., 2., 3., 4., 5., 6.]);

    let bad = t.constant(DiffArray::zeros(&[3, 1]));
    assert!(t.concat_last(&[a, bad]).is_err());
}

#[test]
fn backward_examples() {
    let mut t = Tape::new();
    let x = t.param(arr(&[3], &[1., 2., 3.]));
    let s = t.sum(x);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1., 1., 1.]);

    let mut t = Tape::new();
    let x = t.param(arr(&[3], &[1., 2., 3.]));
    let sq = t.mul(x, x).unwrap();
    let s = t.sum(sq);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2., 4., 6.]);

    let mut t = Tape::new();
    let x = t.param(arr(&[3], &[1., 2., 3.]));
    let s1 = t.sum(x);
    let s2 = t.sum(x);
    let s = t.add(s1, s2).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2., 2., 2.]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut t = Tape::new();
    let x = t.param(arr(&[2], &[1., 2.]));
    assert!(matches!(t.backward(x), Err(crate::Error::Contract(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let c = t.constant(arr(&[2], &[1., 2.]));
    let x = t.param(arr(&[2], &[3., 4.]));
    let p = t.mul(c, x).unwrap();
    let s = t.sum(p);
    t.backward(s).unwrap();
    assert!(t.grad(c).is_none());
    assert_eq!(t.grad(x).unwrap(), &[1., 2.]);
}

#[test]
fn grad_check_quadratic_and_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&[4, 4], &mut rng);
    let x = random(&[4, 1], &mut rng);
    let err = grad_check(
        |t, x| {
            let av = t.constant(a.clone());
            let ax = t.matmul(av, x)?;
            let q = t.matmul_ex(x, ax, true, false)?;
            Ok(t.sum(q))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-7, "quadratic form error {err}");

    let err = grad_check(
        |t, _| Ok(t.constant(DiffArray::scalar(3.0))),
        &x,
        1e-5,
    )
    .unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn grad_check_flags_non_finite_functions() {
    let x = arr(&[1], &[1000.0]);
    let r = grad_check(
        |t, x| {
            let e = t.exp(x);
            Ok(t.sum(e))
        },
        &x,
        1e-5,
    );
    assert!(matches!(r, Err(crate::Error::Numeric(_))));
}

/// Reduces an array to a scalar with fixed pseudo-random weights so every
/// coordinate of the gradient is exercised.
fn weighted_sum(t: &mut Tape<f64>, v: Var, seed: u64) -> crate::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(t.shape(v), &mut rng);
    let wv = t.constant(w);
    let p = t.mul(v, wv)?;
    Ok(t.sum(p))
}

#[test]
fn every_op_passes_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases: Vec<(&str, Vec<DiffArray<f64>>, Box<dyn Fn(&mut Tape<f64>, &[Var]) -> crate::Result<Var>>)> = vec![
        ("matmul", vec![random(&[2, 3, 4], &mut rng), random(&[4, 2], &mut rng)], Box::new(|t, v| t.matmul(v[0], v[1]))),
        ("matmul-batched-rhs", vec![random(&[3, 4], &mut rng), random(&[2, 4, 2], &mut rng)], Box::new(|t, v| t.matmul(v[0], v[1]))),
        ("matmul-tt", vec![random(&[2, 4, 3], &mut rng), random(&[1, 5, 4], &mut rng)], Box::new(|t, v| t.matmul_ex(v[0], v[1], true, true))),
        ("add-broadcast", vec![random(&[2, 3, 4], &mut rng), random(&[3, 1], &mut rng)], Box::new(|t, v| t.add(v[0], v[1]))),
        ("sub", vec![random(&[2, 3], &mut rng), random(&[2, 3], &mut rng)], Box::new(|t, v| t.sub(v[0], v[1]))),
        ("mul-broadcast", vec![random(&[2, 3], &mut rng), random(&[1], &mut rng)], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("scale", vec![random(&[5], &mut rng)], Box::new(|t, v| Ok(t.scale(v[0], 0.3)))),
        ("offset", vec![random(&[5], &mut rng)], Box::new(|t, v| Ok(t.add_scalar(v[0], 0.3)))),
        ("exp", vec![random(&[5], &mut rng)], Box::new(|t, v| Ok(t.exp(v[0])))),
        ("abs", vec![random(&[5], &mut rng)], Box::new(|t, v| Ok(t.abs(v[0])))),
        ("gelu", vec![random(&[7], &mut rng)], Box::new(|t, v| Ok(t.gelu(v[0])))),
        ("mean", vec![random(&[2, 3], &mut rng)], Box::new(|t, v| Ok(t.mean(v[0])))),
        ("permute", vec![random(&[2, 3, 4], &mut rng)], Box::new(|t, v| t.permute(v[0], &[2, 0, 1]))),
        ("reshape", vec![random(&[2, 3, 4], &mut rng)], Box::new(|t, v| t.reshape(v[0], &[6, 4]))),
        ("slice", vec![random(&[2, 6, 3], &mut rng)], Box::new(|t, v| t.slice(v[0], 1, 2, 3))),
        ("concat", vec![random(&[2, 2], &mut rng), random(&[2, 3], &mut rng)], Box::new(|t, v| t.concat_last(&[v[0], v[1], v[0]]))),
        ("softmax", vec![random(&[3, 4], &mut rng)], Box::new(|t, v| t.softmax_last(v[0]))),
        ("layer-norm", vec![random(&[3, 5], &mut rng), random(&[5], &mut rng), random(&[5], &mut rng)], Box::new(|t, v| t.layer_norm(v[0], v[1], v[2]))),
    ];
    for (i, (name, params, op)) in cases.into_iter().enumerate() {
        let err = grad_check_many(
            |t, v| {
                let y = op(t, v)?;
                weighted_sum(t, y, i as u64)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{name}: relative error {err}");
    }
}

#[test]
fn backward_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::new();
        let a = t.param(random(&[3, 4, 5], &mut rng));
        let b = t.param(random(&[5, 4], &mut rng));
        let c = t.matmul(a, b).unwrap();
        let s = t.softmax_last(c).unwrap();
        let g = t.gelu(s);
        let l = t.mean(g);
        t.backward(l).unwrap();
        (t.grad(a).unwrap().to_vec(), t.grad(b).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}

#[test]
fn f32_engine_runs_the_same_ops() {
    let mut t = Tape::<f32>::new();
    let a = t.param(DiffArray::from_fn(&[2, 3], |i| i as f32 * 0.1));
    let b = t.param(DiffArray::from_fn(&[3, 2], |i| 1.0 - i as f32 * 0.2));
    let c = t.matmul(a, b).unwrap();
    let s = t.softmax_last(c).unwrap();
    let l = t.sum(s);
    t.backward(l).unwrap();
    assert!((t.value(l).data()[0] - 2.0).abs() < 1e-6);
    assert_eq!(t.grad(a).unwrap().len(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_matches_triple_loop(
        m in 1usize..=8, k in 1usize..=8, n in 1usize..=8, batch in 1usize..=3,
        batched_rhs in any::<bool>(), seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&[batch, m, k], &mut rng);
        let b = if batched_rhs { random(&[batch, k, n], &mut rng) } else { random(&[k, n], &mut rng) };
        let expected = naive_matmul(&a, &b);
        let mut t = Tape::new();
        let (va, vb) = (t.constant(a), t.constant(b));
        let c = t.matmul(va, vb).unwrap();
        for (x, y) in t.value(c).data().iter().zip(&expected) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, width in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DiffArray::from_fn(&[rows, width], |_| rng.random_range(-100.0..100.0));
        let mut t = Tape::new();
        let v = t.constant(x);
        let s = t.softmax_last(v).unwrap();
        for row in t.value(s).data().chunks(width) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
