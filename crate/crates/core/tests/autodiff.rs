use std::sync::Arc;

use adaptherm_core::autodiff::{
    CustomOp, EdgeList, Eval, Ops, StepFn, Tape, Value, checkpointed_rollout, full_rollout, record,
};
use adaptherm_core::sparse::CsrMatrix;
use adaptherm_core::{Error, Result};
use proptest::prelude::*;

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

#[test]
fn identity_has_unit_gradient() {
    let r = record(&[3.5], |_, x| Ok(x[0])).unwrap();
    assert_eq!(r.value(), 3.5);
    assert_eq!(r.gradient().unwrap(), vec![1.0]);
}

#[test]
fn fourth_power_at_two() {
    let r = record(&[2.0], |t, x| Ok(t.pow4(&x[0]))).unwrap();
    assert_eq!(r.value(), 16.0);
    assert_eq!(r.gradient().unwrap(), vec![32.0]);
}

#[test]
fn sum_of_inputs_has_all_ones_gradient() {
    let r = record(&[1.0, -2.0, 5.0], |t, x| {
        let v = t.concat(x);
        Ok(t.sum(&v))
    })
    .unwrap();
    assert_eq!(r.gradient().unwrap(), vec![1.0; 3]);
}

#[test]
fn non_scalar_output_is_rejected() {
    let mut t = Tape::new();
    let x = t.input(vec![1.0, 2.0]);
    let y = t.exp(&x);
    assert_eq!(t.gradient(y).unwrap_err(), Error::NonScalarOutput(2));
}

#[test]
fn unknown_primitive_is_named() {
    let mut t = Tape::new();
    let x = t.input(vec![1.0]);
    match t.unary("erf", &x) {
        Err(Error::UnsupportedPrimitive(name)) => assert_eq!(name, "erf"),
        other => panic!("{other:?}"),
    }
    let mut e = Eval;
    let v = e.input(vec![1.0]);
    assert!(e.unary("erf", &v).is_err());
    assert!((e.unary("exp", &v).unwrap()[0] - 1f64.exp()).abs() < 1e-15);
}

#[test]
fn matvec_weight_adjoint_is_input() {
    let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let xv = vec![0.5, -1.5, 2.0];
    let mut t = Tape::new();
    let wv = t.input(w);
    let x = t.input(xv.clone());
    let y = t.matvec(&wv, &x, 2, 3);
    let l = t.sum(&y);
    let g = t.gradient(l).unwrap();
    assert_eq!(g.get(wv).unwrap(), &[xv.clone(), xv].concat()[..]);
    assert_eq!(g.get(x).unwrap(), &[5.0, 7.0, 9.0]);
}

/// Every primitive on the tape, composed into one scalar.
fn kitchen_sink<O: Ops>(o: &mut O, x: &O::V, m: &Arc<CsrMatrix>, e: &Arc<EdgeList>) -> O::V {
    let a = o.slice(x, 0, 3);
    let b = o.slice(x, 3, 3);
    let s = o.add(&a, &b);
    let d = o.sub(&a, &b);
    let p = o.mul(&s, &d);
    let two = o.scalar(2.0);
    let q = o.offset(&b, 3.0);
    let q = o.div(&p, &q);
    let q = o.scale(&q, 0.7);
    let ex = o.exp(&q);
    let lg = o.offset(&ex, 1.0);
    let lg = o.ln(&lg);
    let th = o.tanh(&lg);
    let sg = o.sigmoid(&d);
    let rl = o.relu(&d);
    let p4 = o.pow4(&sg);
    let pw = o.powf(&ex, 1.5);
    let t10 = o.scale(&th, 0.1);
    let t10 = o.exp10(&t10);
    let mv = o.spmv(m, &pw);
    let ng = o.neg(&rl);
    let cat = o.concat(&[t10.clone(), mv.clone(), ng]);
    let idx = Arc::new(vec![0usize, 4, 8, 2, 2]);
    let gth = o.gather(&cat, &idx);
    let g = o.mul(&b, &b);
    let dif = o.edge_diffusion(e, &p4, &g);
    let s1 = o.sum(&gth);
    let s2 = o.sum(&dif);
    let bc = o.broadcast(&s1, 3);
    let w = o.mul(&bc, &two);
    let w = o.mul(&w, &dif);
    let s3 = o.sum(&w);
    let s12 = o.add(&s1, &s2);
    o.add(&s12, &s3)
}

fn fixtures() -> (Arc<CsrMatrix>, Arc<EdgeList>) {
    let m = Arc::new(CsrMatrix::from_dense(
        3,
        3,
        &[0.1, 0.0, 0.3, 0.0, 0.2, 0.0, 0.4, 0.5, 0.0],
    ));
    let e = Arc::new(EdgeList {
        nodes: 3,
        pairs: vec![(0, 1), (1, 2), (0, 2)],
    });
    (m, e)
}

#[test]
fn every_primitive_matches_finite_differences() {
    let (m, e) = fixtures();
    let x0 = [0.3, -0.4, 0.9, 0.2, 0.5, -0.1];
    let rec = record(&x0, |t, xs| {
        let x = t.concat(xs);
        Ok(kitchen_sink(t, &x, &m, &e))
    })
    .unwrap();
    let g = rec.gradient().unwrap();
    let f = |x: &[f64]| {
        let mut ev = Eval;
        let v = ev.input(x.to_vec());
        kitchen_sink(&mut ev, &v, &m, &e)[0]
    };
    assert_eq!(rec.value(), f(&x0));
    let fd = central_difference(f, &x0, 1e-6);
    for (a, b) in g.iter().zip(&fd) {
        assert!(close(*a, *b, 1e-6, 1e-8), "{a} vs {b}");
    }
}

#[test]
fn replay_is_bit_identical() {
    let (m, e) = fixtures();
    let mut t = Tape::new();
    let x = t.input(vec![0.3, -0.4, 0.9, 0.2, 0.5, -0.1]);
    let _ = kitchen_sink(&mut t, &x, &m, &e);
    assert_eq!(t.replay().unwrap(), t.recorded_values());
}

#[test]
fn gradients_are_deterministic() {
    let (m, e) = fixtures();
    let run = || {
        record(&[0.3, -0.4, 0.9, 0.2, 0.5, -0.1], |t, xs| {
            let x = t.concat(xs);
            Ok(kitchen_sink(t, &x, &m, &e))
        })
        .unwrap()
        .gradient()
        .unwrap()
    };
    let a = run();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        run().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

struct Cube;

impl CustomOp for Cube {
    fn name(&self) -> &str {
        "cube"
    }
    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(inputs[0].iter().map(|x| x * x * x).collect())
    }
    fn backward(&self, inputs: &[&[f64]], _out: &[f64], adj: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![inputs[0].iter().zip(adj).map(|(x, g)| 3.0 * x * x * g).collect()])
    }
}

#[test]
fn custom_op_participates_in_backward() {
    let r = record(&[2.0], |t, x| {
        let y = t.custom(Arc::new(Cube), &[x[0]])?;
        Ok(t.scale(&y, 0.5))
    })
    .unwrap();
    assert_eq!(r.value(), 4.0);
    assert_eq!(r.gradient().unwrap(), vec![6.0]);
}

/// Nonlinear toy recurrence with state and parameters.
struct Toy;

impl StepFn for Toy {
    fn state_len(&self) -> usize {
        3
    }
    fn step<O: Ops>(&self, o: &mut O, x: &O::V, p: &O::V) -> O::V {
        let k = o.slice(p, 0, 3);
        let c = o.slice(p, 3, 1);
        let x4 = o.pow4(x);
        let loss = o.mul(&k, &x4);
        let dx = o.sub(&c, &loss);
        let dx = o.scale(&dx, 0.01);
        o.add(x, &dx)
    }
}

fn rollout_grads(every: Option<usize>, steps: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let mut t = Tape::new();
    let x0 = t.input(vec![1.0, 0.8, 1.2]);
    let p = t.input(vec![0.5, 0.3, 0.7, 0.2]);
    let f = Arc::new(Toy);
    let xn = match every {
        Some(k) => checkpointed_rollout(&mut t, f, &x0, &p, steps, k).unwrap().0,
        None => full_rollout(&mut t, f.as_ref(), &x0, &p, steps).unwrap(),
    };
    let sq = t.mul(&xn, &xn);
    let l = t.sum(&sq);
    let g = t.gradient(l).unwrap();
    (t.scalar_value(l), g.wrt(x0, 3), g.wrt(p, 4))
}

#[test]
fn checkpointing_matches_full_tape() {
    let full = rollout_grads(None, 20);
    for every in [1, 3, 7, 20, 50] {
        let ck = rollout_grads(Some(every), 20);
        assert_eq!(ck.0, full.0, "value, every {every}");
        for (a, b) in ck.1.iter().chain(&ck.2).zip(full.1.iter().chain(&full.2)) {
            assert!((a - b).abs() <= 1e-12, "every {every}: {a} vs {b}");
        }
    }
}

#[test]
fn checkpoint_interval_must_be_positive() {
    let mut t = Tape::new();
    let x0 = t.input(vec![1.0, 1.0, 1.0]);
    let p = t.input(vec![0.0; 4]);
    let e = checkpointed_rollout(&mut t, Arc::new(Toy), &x0, &p, 5, 0)
        .map(|_| ())
        .unwrap_err();
    assert_eq!(e, Error::InvalidCheckpointInterval);
}

#[test]
fn checkpoint_memory_is_bounded() {
    let n = 64;
    struct Decay(usize);
    impl StepFn for Decay {
        fn state_len(&self) -> usize {
            self.0
        }
        fn step<O: Ops>(&self, o: &mut O, x: &O::V, p: &O::V) -> O::V {
            let d = o.mul(x, p);
            o.sub(x, &d)
        }
    }
    let mut t = Tape::new();
    let x0 = t.input(vec![1.0; n]);
    let p = t.input(vec![1e-3; n]);
    let (xn, op) = checkpointed_rollout(&mut t, Arc::new(Decay(n)), &x0, &p, 500, 25).unwrap();
    let l = t.sum(&xn);
    t.gradient(l).unwrap();
    let s = op.stats();
    assert_eq!(s.checkpoints, 20);
    assert_eq!(s.segment_steps, 25);
    assert!(s.peak_states <= 25 + 20);

    let mut full = Tape::new();
    let x0 = full.input(vec![1.0; n]);
    let p = full.input(vec![1e-3; n]);
    let _ = full_rollout(&mut full, &Decay(n), &x0, &p, 500).unwrap();
    assert!(
        s.peak_floats * 5 < full.float_count(),
        "{} vs {}",
        s.peak_floats,
        full.float_count()
    );
}

#[test]
fn eval_and_tape_values_agree() {
    let (m, e) = fixtures();
    let x = vec![0.3, -0.4, 0.9, 0.2, 0.5, -0.1];
    let mut t = Tape::new();
    let xv = t.input(x.clone());
    let y = kitchen_sink(&mut t, &xv, &m, &e);
    let mut ev = Eval;
    let xe: Value = ev.input(x);
    assert_eq!(t.get(y), &kitchen_sink(&mut ev, &xe, &m, &e)[..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_harness(x in proptest::collection::vec(-1.0f64..1.0, 6)) {
        let (m, e) = fixtures();
        let rec = record(&x, |t, xs| {
            let v = t.concat(xs);
            Ok(kitchen_sink(t, &v, &m, &e))
        }).unwrap();
        let g = rec.gradient().unwrap();
        let f = |x: &[f64]| {
            let mut ev = Eval;
            let v = ev.input(x.to_vec());
            kitchen_sink(&mut ev, &v, &m, &e)[0]
        };
        let fd = central_difference(f, &x, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            // relu kinks sit at d = 0; skip points within h of one
            prop_assert!(close(*a, *b, 1e-4, 1e-6) || x[..3].iter().zip(&x[3..]).any(|(p, q)| (p - q).abs() < 1e-5), "{} vs {}", a, b);
        }
    }

    #[test]
    fn gradient_is_linear(x in proptest::collection::vec(-1.0f64..1.0, 3), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let grad = |wa: f64, wb: f64| record(&x, |t, xs| {
            let v = t.concat(xs);
            let f = t.tanh(&v);
            let f = t.sum(&f);
            let g = t.pow4(&v);
            let g = t.sum(&g);
            let fa = t.scale(&f, wa);
            let gb = t.scale(&g, wb);
            Ok(t.add(&fa, &gb))
        }).unwrap().gradient().unwrap();
        let combo = grad(a, b);
        let (gf, gg) = (grad(1.0, 0.0), grad(0.0, 1.0));
        for i in 0..3 {
            prop_assert!((combo[i] - (a * gf[i] + b * gg[i])).abs() <= 1e-12 * (1.0 + combo[i].abs()));
        }
    }
}
