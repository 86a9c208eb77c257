use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn eval1(f: impl Fn(&mut Tape, Var) -> Result<Var>, x: Tensor) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let out = f(&mut tape, v).unwrap();
    tape.value(out).clone()
}

#[test]
fn relu_add_sigmoid_values() {
    let r = eval1(|t, v| t.relu(v), Tensor::vector(vec![-1.0, 0.0, 2.0]));
    assert_eq!(r.data(), &[0.0, 0.0, 2.0]);

    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let s = tape.elementwise(ElementwiseKind::Add, a, Some(b)).unwrap();
    assert_eq!(tape.value(s).data(), &[4.0, 6.0]);

    let r = eval1(|t, v| t.sigmoid(v), Tensor::vector(vec![0.0]));
    assert_eq!(r.data(), &[0.5]);
}

#[test]
fn binary_shape_mismatch_and_missing_operand() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(tape.add(a, b), Err(TensorError::ShapeMismatch { .. })));
    assert!(matches!(
        tape.elementwise(ElementwiseKind::Mul, a, None),
        Err(TensorError::MissingOperand { .. })
    ));
}

#[test]
fn trailing_singleton_broadcast() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let b = tape.param(Tensor::matrix(2, 1, vec![10.0, 20.0]).unwrap());
    let c = tape.mul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[10.0, 20.0, 30.0, 80.0, 100.0, 120.0]);
    let s = tape.sum(c).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(b).unwrap().data(), &[6.0, 15.0]);
    assert_eq!(g.get(a).unwrap().data(), &[10.0, 10.0, 10.0, 20.0, 20.0, 20.0]);
}

#[test]
fn non_finite_output_is_an_error() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![0.0]));
    assert!(matches!(tape.ln(a), Err(TensorError::NonFinite { op: "ln" })));
    let big = tape.constant(Tensor::vector(vec![1e300]));
    assert!(matches!(tape.mul(big, big), Err(TensorError::NonFinite { .. })));
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::new();
    let i2 = tape.constant(Tensor::eye(2));
    let m = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let p = tape.matmul(i2, m).unwrap();
    assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

    let row = tape.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let col = tape.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
    let p = tape.matmul(row, col).unwrap();
    assert_eq!(tape.value(p).data(), &[11.0]);
    assert!(matches!(tape.matmul(row, row), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn conv1d_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
    let k = tape.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap());
    let y = tape.conv1d(x, k, Padding::Valid).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 5.0]);

    let x5 = tape.constant(Tensor::full(&[5, 2], 1.0));
    let k3 = tape.constant(Tensor::full(&[3, 2, 4], 1.0));
    let y = tape.conv1d(x5, k3, Padding::Same).unwrap();
    assert_eq!(tape.value(y).shape(), &[5, 4]);
    // Edge rows see one zero pad.
    assert_eq!(tape.value(y).data()[0], 4.0);
    assert_eq!(tape.value(y).data()[4], 6.0);

    let long = tape.constant(Tensor::full(&[4, 1, 1], 1.0));
    assert!(matches!(
        tape.conv1d(x, long, Padding::Valid),
        Err(TensorError::KernelTooLong { kernel: 4, input: 3 })
    ));
}

#[test]
fn conv1d_same_even_kernel_pads_right() {
    // k = 2: left pad 0, right pad 1, so the last output sees x[len-1] and a zero.
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
    let k = tape.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 10.0]).unwrap());
    let y = tape.conv1d(x, k, Padding::Same).unwrap();
    assert_eq!(tape.value(y).data(), &[21.0, 32.0, 3.0]);
}

#[test]
fn gather_examples() {
    let mut tape = Tape::new();
    let table = tape.param(Tensor::eye(3));
    let rows = tape.embedding_gather(table, &[2, 0]).unwrap();
    assert_eq!(tape.value(rows).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    assert!(matches!(
        tape.embedding_gather(table, &[5]),
        Err(TensorError::IndexOutOfRange { index: 5, bound: 3 })
    ));

    let rep = tape.embedding_gather(table, &[1, 1]).unwrap();
    let s = tape.sum(rep).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(table).unwrap().data(), &[0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0]);
}

#[test]
fn reduce_examples() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 5.0, 3.0]));
    let m = tape.reduce(ReduceKind::Max, x, Some(0)).unwrap();
    assert_eq!(tape.value(m).item(), 5.0);
    let g = tape.backward(m).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![2.0, 4.0]));
    let m = tape.mean(x).unwrap();
    assert_eq!(tape.value(m).item(), 3.0);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let s = tape.sum(x).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0; 4]);
}

#[test]
fn max_ties_go_to_lowest_index() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::matrix(3, 2, vec![1.0, 7.0, 4.0, 7.0, 4.0, 2.0]).unwrap());
    let m = tape.reduce(ReduceKind::Max, x, Some(0)).unwrap();
    assert_eq!(tape.value(m).data(), &[4.0, 7.0]);
    let s = tape.sum(m).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn reduce_errors() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![1.0]));
    assert!(matches!(
        tape.reduce(ReduceKind::Sum, x, Some(1)),
        Err(TensorError::InvalidAxis { axis: 1, rank: 1 })
    ));
}

#[test]
fn backward_scalar_examples() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 6.0);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(2.0));
    let y = tape.param(Tensor::scalar(5.0));
    let z = tape.mul(x, y).unwrap();
    let g = tape.backward(z).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 5.0);
    assert_eq!(g.get(y).unwrap().item(), 2.0);
}

#[test]
fn backward_errors() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
    let y = tape.relu(x).unwrap();
    assert!(matches!(tape.backward(y), Err(TensorError::NonScalarOutput(_))));

    let mut other = Tape::new();
    let foreign = other.param(Tensor::scalar(1.0));
    let tape = Tape::new();
    assert!(matches!(tape.backward(foreign), Err(TensorError::DetachedOutput)));
}

#[test]
fn constant_output_yields_zero_gradients() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
    let c = tape.constant(Tensor::scalar(4.0));
    let g = tape.backward(c).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn grad_check_quadratic_and_relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&mut rng, &[3, 3]);
    let x = random(&mut rng, &[3, 1]);
    let quad = |t: &mut Tape, v: &[Var]| {
        let ax = t.matmul(v[0], v[1])?;
        let xax = t.mul(ax, v[1])?;
        t.sum(xax)
    };
    assert!(grad_check(quad, &[a, x], 1e-5).unwrap() < 1e-8);

    let p = Tensor::vector(vec![-0.7, 0.4, 1.3]);
    let relu = |t: &mut Tape, v: &[Var]| {
        let r = t.relu(v[0])?;
        let sq = t.mul(r, r)?;
        t.sum(sq)
    };
    assert!(grad_check(relu, &[p], 1e-5).unwrap() < 1e-6);
}

#[test]
fn grad_check_reports_non_finite_probe() {
    let p = Tensor::vector(vec![1e-6]);
    let f = |t: &mut Tape, v: &[Var]| {
        let l = t.ln(v[0])?;
        t.sum(l)
    };
    assert!(matches!(grad_check(f, &[p], 1e-5), Err(TensorError::NonFiniteProbe)));
}

type Builder = fn(&mut Tape, &[Var]) -> Result<Var>;

/// Scalar objective `sum(w * op(inputs))` with a fixed random weighting so
/// every output coordinate has a distinct sensitivity.
fn weighted(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = t.value(y).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(random(&mut rng, &shape));
    let p = t.mul(y, w)?;
    t.sum(p)
}

fn primitive_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Builder)> {
    vec![
        ("add", vec![vec![3, 4], vec![3, 4]], |t, v| {
            let y = t.add(v[0], v[1])?;
            weighted(t, y, 1)
        }),
        ("sub", vec![vec![5], vec![5]], |t, v| {
            let y = t.sub(v[0], v[1])?;
            weighted(t, y, 2)
        }),
        ("mul", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.mul(v[0], v[1])?;
            weighted(t, y, 3)
        }),
        ("mul_broadcast", vec![vec![3, 4], vec![3, 1]], |t, v| {
            let y = t.mul(v[0], v[1])?;
            weighted(t, y, 4)
        }),
        ("scale", vec![vec![4]], |t, v| {
            let y = t.scale(v[0], -2.5)?;
            weighted(t, y, 5)
        }),
        ("relu", vec![vec![6]], |t, v| {
            let y = t.relu(v[0])?;
            weighted(t, y, 6)
        }),
        ("sigmoid", vec![vec![6]], |t, v| {
            let y = t.sigmoid(v[0])?;
            weighted(t, y, 7)
        }),
        ("tanh", vec![vec![6]], |t, v| {
            let y = t.tanh(v[0])?;
            weighted(t, y, 8)
        }),
        ("ln", vec![vec![5]], |t, v| {
            let s = t.sigmoid(v[0])?;
            let y = t.ln(s)?;
            weighted(t, y, 9)
        }),
        ("sparse_rows", vec![vec![4, 3]], |t, v| {
            let rows = vec![vec![(0, 0.5), (2, -1.5)], vec![], vec![(3, 2.0), (1, 0.25), (0, 1.0)]];
            let y = t.sparse_rows(rows, v[0])?;
            weighted(t, y, 21)
        }),
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted(t, y, 10)
        }),
        ("add_bias", vec![vec![3, 4], vec![4]], |t, v| {
            let y = t.add_bias(v[0], v[1])?;
            weighted(t, y, 11)
        }),
        ("conv1d_valid", vec![vec![7, 3], vec![3, 3, 2]], |t, v| {
            let y = t.conv1d(v[0], v[1], Padding::Valid)?;
            weighted(t, y, 12)
        }),
        ("conv1d_same", vec![vec![6, 2], vec![4, 2, 3]], |t, v| {
            let y = t.conv1d(v[0], v[1], Padding::Same)?;
            weighted(t, y, 13)
        }),
        ("gather", vec![vec![4, 3]], |t, v| {
            let y = t.gather(v[0], &[3, 0, 3, 1])?;
            weighted(t, y, 14)
        }),
        ("reduce_sum_axis", vec![vec![3, 4]], |t, v| {
            let y = t.reduce(ReduceKind::Sum, v[0], Some(1))?;
            weighted(t, y, 15)
        }),
        ("reduce_mean_axis", vec![vec![3, 4]], |t, v| {
            let y = t.reduce(ReduceKind::Mean, v[0], Some(0))?;
            weighted(t, y, 16)
        }),
        ("reduce_max_axis", vec![vec![5, 3]], |t, v| {
            let y = t.reduce(ReduceKind::Max, v[0], Some(0))?;
            weighted(t, y, 17)
        }),
        ("slice_rows", vec![vec![5, 2]], |t, v| {
            let y = t.slice_rows(v[0], 1, 3)?;
            weighted(t, y, 18)
        }),
        ("concat", vec![vec![2, 3], vec![2, 2]], |t, v| {
            let y = t.concat(&[v[0], v[1]], 1)?;
            weighted(t, y, 19)
        }),
        ("column", vec![vec![4, 3]], |t, v| {
            let y = t.column(v[0], 2)?;
            weighted(t, y, 20)
        }),
        ("clamp", vec![vec![6]], |t, v| {
            let y = t.clamp(v[0], -0.5, 0.5)?;
            weighted(t, y, 21)
        }),
    ]
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, shapes, build) in primitive_cases() {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let point: Vec<Tensor> = shapes.iter().map(|s| random(&mut rng, s)).collect();
            worst = worst.max(grad_check(build, &point, 1e-5).unwrap());
        }
        assert!(worst < 1e-6, "{name}: relative error {worst}");
    }
}

#[test]
fn gradients_are_linear_in_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x0 = random(&mut rng, &[4, 3]);
    let w0 = random(&mut rng, &[3, 2]);
    let grads_of = |which: u8| {
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let w = tape.param(w0.clone());
        let xw = tape.matmul(x, w).unwrap();
        let f = tape.tanh(xw).unwrap();
        let f = tape.sum(f).unwrap();
        let xx = tape.mul(x, x).unwrap();
        let g = tape.mean(xx).unwrap();
        let out = match which {
            0 => f,
            1 => g,
            _ => tape.add(f, g).unwrap(),
        };
        let grads = tape.backward(out).unwrap();
        (grads.get(x).unwrap().clone(), grads.get(w).unwrap().clone())
    };
    let (fx, fw) = grads_of(0);
    let (gx, gw) = grads_of(1);
    let (sx, sw) = grads_of(2);
    for i in 0..sx.len() {
        assert!((sx.data()[i] - fx.data()[i] - gx.data()[i]).abs() < 1e-10);
    }
    for i in 0..sw.len() {
        assert!((sw.data()[i] - fw.data()[i] - gw.data()[i]).abs() < 1e-10);
    }
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut tape = Tape::new();
        let x = tape.constant(random(&mut rng, &[8, 4]));
        let k = tape.constant(random(&mut rng, &[3, 4, 5]));
        let y = tape.conv1d(x, k, Padding::Same).unwrap();
        let y = tape.sigmoid(y).unwrap();
        tape.value(y).clone()
    };
    assert_eq!(run().data(), run().data());
}

#[test]
fn tensor_shape_invariant() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    assert!(Tensor::new(vec![0], vec![]).is_err());
    assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
}

#[test]
fn sparse_rows_matches_dense_and_is_order_free() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let y = tape.sparse_rows(vec![vec![(0, 1.0), (2, 2.0)], vec![(1, -1.0)]], x).unwrap();
    assert_eq!(tape.value(y).data(), &[11.0, 14.0, -3.0, -4.0]);
    let z = tape.sparse_rows(vec![vec![(2, 2.0), (0, 1.0)], vec![(1, -1.0)]], x).unwrap();
    assert_eq!(tape.value(y), tape.value(z));
    assert!(matches!(
        tape.sparse_rows(vec![vec![(3, 1.0)]], x),
        Err(TensorError::IndexOutOfRange { index: 3, bound: 3 })
    ));
}
