use std::f64::consts::PI;
use std::sync::Arc;

use adaptherm_core::STEFAN_BOLTZMANN;
use adaptherm_core::autodiff::{Eval, Ops, Tape, checkpointed_rollout, full_rollout};
use adaptherm_core::mesh::SurfaceKind;
use adaptherm_core::radiation::ViewFactorMatrix;
use adaptherm_core::solver::{
    FaceProps, SolverSettings, ThermalModel, ThermalState, ThermalStep, Topology, node_parameters, pack_params,
};
use adaptherm_core::sparse::CsrMatrix;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn plate(emissivity: f64) -> FaceProps {
    FaceProps {
        kind: SurfaceKind::Rectangular2D,
        width: 1.0,
        height: 0.8,
        radius: 0.0,
        areal_capacity: 2700.0 * 896.0 * 0.002,
        emissivity,
        sheet_conductance: 167.0 * 0.002,
    }
}

fn rod(emissivity: f64) -> FaceProps {
    FaceProps {
        kind: SurfaceKind::Cylindrical1D,
        width: 2.0 * PI * 0.05,
        height: 0.5,
        radius: 0.05,
        areal_capacity: 4429.0 * 502.0 * 0.002,
        emissivity,
        sheet_conductance: 7.2 * 0.002,
    }
}

fn node_areas(faces: &[FaceProps], ns: &[usize]) -> Vec<f64> {
    faces
        .iter()
        .zip(ns)
        .flat_map(|(f, &n)| {
            let (count, a) = match f.kind {
                SurfaceKind::Rectangular2D => (n * n, f.area() / (n * n) as f64),
                SurfaceKind::Cylindrical1D => (n, f.area() / n as f64),
            };
            std::iter::repeat_n(a, count)
        })
        .collect()
}

/// Random view factors with rows summing to at most 0.6, symmetrized.
fn random_exchange(areas: &[f64], seed: u64) -> (ViewFactorMatrix, Vec<f64>) {
    let n = areas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                v[i * n + j] = unit(&mut rng) * 0.3 / n as f64;
            }
        }
    }
    let f = ViewFactorMatrix::from_parts(n, v, areas.to_vec(), 1000)
        .unwrap()
        .symmetrized();
    let space = f.row_sums().iter().map(|r| (1.0 - r).max(0.0)).collect();
    (f, space)
}

#[test]
fn radiative_cooling_matches_closed_form() {
    let f = rod(0.92);
    let settings = SolverSettings::default();
    let m = ThermalModel::from_faces(
        vec![f],
        &[1],
        Arc::new(CsrMatrix::from_dense(1, 1, &[0.0])),
        &[1.0],
        settings,
    )
    .unwrap();
    let t0 = 400.0;
    let sim = m.simulate(&ThermalState::new(vec![t0]), &[0.0], true).unwrap();
    let (a, c) = (f.area(), f.areal_capacity * f.area());
    let mut worst = 0.0f64;
    for s in sim.trajectory.unwrap() {
        let exact = (t0.powi(-3) + 3.0 * STEFAN_BOLTZMANN * 0.92 * a * s.time / c).powf(-1.0 / 3.0);
        worst = worst.max((s.temperatures[0] - exact).abs() / exact);
    }
    assert!(worst <= 1e-3, "worst relative error {worst}");
    assert!((sim.final_state.time - 50.0).abs() < 1e-9);
}

#[test]
fn energy_balance_with_reciprocal_exchange() {
    let faces = vec![plate(0.8), plate(0.8), rod(0.8)];
    let ns = [2, 3, 4];
    let areas = node_areas(&faces, &ns);
    let (f, space) = random_exchange(&areas, 7);
    let settings = SolverSettings {
        space_sink_temperature: 3.0,
        ..SolverSettings::default()
    };
    let m = ThermalModel::from_faces(faces, &ns, Arc::new(f.to_csr()), &space, settings).unwrap();
    let n = m.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t: Vec<f64> = (0..n).map(|_| 250.0 + 100.0 * unit(&mut rng)).collect();
    let q: Vec<f64> = (0..n).map(|_| 5.0 * unit(&mut rng)).collect();
    let next = m.step(&ThermalState::new(t.clone()), &q).unwrap();
    let c = m.capacities();
    let de: f64 = c
        .iter()
        .zip(&t)
        .zip(&next.temperatures)
        .map(|((c, a), b)| c * (b - a))
        .sum();
    let ts4 = 3f64.powi(4);
    let to_space: f64 = (0..n).map(|i| m.rad_coef()[i] * space[i] * (t[i].powi(4) - ts4)).sum();
    let expect = settings.dt * (q.iter().sum::<f64>() - to_space);
    let scale = settings.dt * (q.iter().sum::<f64>() + to_space.abs());
    assert!((de - expect).abs() <= 1e-9 * scale, "{de} vs {expect}");
}

#[test]
fn equilibrium_state_is_fixed() {
    let faces = vec![plate(0.8), rod(0.6)];
    let ns = [3, 5];
    let areas = node_areas(&faces, &ns);
    let (f, space) = random_exchange(&areas, 11);
    let m = ThermalModel::from_faces(faces, &ns, Arc::new(f.to_csr()), &space, SolverSettings::default()).unwrap();
    let t: f64 = 310.0;
    let n = m.node_count();
    // uniform temperature: only the net loss to space remains
    let q: Vec<f64> = (0..n).map(|i| m.rad_coef()[i] * space[i] * t.powi(4)).collect();
    let next = m.step(&ThermalState::new(vec![t; n]), &q).unwrap();
    for v in &next.temperatures {
        assert!((v - t).abs() <= 1e-12 * t, "{v}");
    }
}

#[test]
fn relabeling_surfaces_permutes_output() {
    let faces = vec![plate(0.8), rod(0.6)];
    let ns = [2, 3];
    let areas = node_areas(&faces, &ns);
    let (f, space) = random_exchange(&areas, 5);
    let n = areas.len();
    // new order: rod nodes first
    let perm: Vec<usize> = (4..7).chain(0..4).collect();
    let fp: Vec<f64> = (0..n * n).map(|k| f.get(perm[k / n], perm[k % n])).collect();
    let sp: Vec<f64> = perm.iter().map(|&i| space[i]).collect();
    let t: Vec<f64> = (0..n).map(|i| 280.0 + 7.0 * i as f64).collect();
    let q: Vec<f64> = (0..n).map(|i| 0.5 * i as f64).collect();
    let a = ThermalModel::from_faces(
        faces.clone(),
        &ns,
        Arc::new(f.to_csr()),
        &space,
        SolverSettings::default(),
    )
    .unwrap();
    let b = ThermalModel::from_faces(
        vec![faces[1], faces[0]],
        &[3, 2],
        Arc::new(CsrMatrix::from_dense(n, n, &fp)),
        &sp,
        SolverSettings::default(),
    )
    .unwrap();
    let ra = a
        .simulate(&ThermalState::new(t.clone()), &q, false)
        .unwrap()
        .final_state
        .temperatures;
    let tp: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
    let qp: Vec<f64> = perm.iter().map(|&i| q[i]).collect();
    let rb = b
        .simulate(&ThermalState::new(tp), &qp, false)
        .unwrap()
        .final_state
        .temperatures;
    for (k, &i) in perm.iter().enumerate() {
        assert!((rb[k] - ra[i]).abs() <= 1e-10 * ra[i]);
    }
}

/// Final-state functional of a short rollout with node counts and loads as inputs.
fn rollout_objective<O: Ops>(
    o: &mut O,
    faces: &[FaceProps],
    topo: &Topology,
    step: &Arc<ThermalStep>,
    x: &[O::V],
    steps: usize,
    every: Option<usize>,
) -> O::V {
    let settings = SolverSettings::default();
    let nv = [x[0].clone(), x[1].clone()];
    let p = node_parameters(o, faces, topo, &nv, &settings);
    let params = pack_params(o, &p, &x[2]);
    let t0 = o.constant((0..step.nodes).map(|i| 290.0 + 3.0 * i as f64).collect());
    let tn = match every {
        Some(k) => checkpointed_rollout(o, step.clone(), &t0, &params, steps, k).unwrap().0,
        None => full_rollout(o, step.as_ref(), &t0, &params, steps).unwrap(),
    };
    let w = o.constant((0..step.nodes).map(|i| 1.0 + 0.1 * i as f64).collect());
    let s = o.mul(&tn, &w);
    o.sum(&s)
}

#[test]
fn rollout_gradient_matches_finite_differences() {
    let faces = vec![plate(0.8), rod(0.6)];
    let ns = [2, 3];
    let areas = node_areas(&faces, &ns);
    let (f, space) = random_exchange(&areas, 2);
    let topo = Topology::new(&[faces[0].kind, faces[1].kind], &ns);
    let step = Arc::new(ThermalStep::new(topo.edges.clone(), Arc::new(f.to_csr()), &space, 0.0).unwrap());
    let n_nodes = step.nodes;
    let loads: Vec<f64> = (0..n_nodes).map(|i| 2.0 + i as f64).collect();
    let x0: Vec<Vec<f64>> = vec![vec![2.0], vec![3.0], loads];
    for every in [None, Some(4)] {
        let mut t = Tape::new();
        let xs: Vec<_> = x0.iter().map(|v| t.input(v.clone())).collect();
        let l = rollout_objective(&mut t, &faces, &topo, &step, &xs, 10, every);
        let g = t.gradient(l).unwrap();
        let eval = |x: &[Vec<f64>]| {
            let mut e = Eval;
            let xs: Vec<_> = x.iter().map(|v| e.input(v.clone())).collect();
            rollout_objective(&mut e, &faces, &topo, &step, &xs, 10, None)[0]
        };
        for (k, var) in xs.iter().enumerate() {
            let an = g.wrt(*var, x0[k].len());
            for i in 0..x0[k].len() {
                let h = 1e-5 * x0[k][i].abs().max(1.0);
                let mut p = x0.clone();
                let mut m = x0.clone();
                p[k][i] += h;
                m[k][i] -= h;
                let fd = (eval(&p) - eval(&m)) / (2.0 * h);
                assert!(
                    (an[i] - fd).abs() <= 1e-4 * fd.abs() + 1e-6,
                    "input {k}[{i}]: {} vs {fd}",
                    an[i]
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_balance_random(seed in 0u64..1000, n0 in 1usize..5, n1 in 1usize..6) {
        let faces = vec![plate(0.9), rod(0.9)];
        let ns = [n0, n1];
        let areas = node_areas(&faces, &ns);
        let (f, space) = random_exchange(&areas, seed);
        let m = ThermalModel::from_faces(faces, &ns, Arc::new(f.to_csr()), &space, SolverSettings::default()).unwrap();
        let n = m.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let t: Vec<f64> = (0..n).map(|_| 200.0 + 200.0 * unit(&mut rng)).collect();
        let q: Vec<f64> = (0..n).map(|_| 3.0 * unit(&mut rng)).collect();
        let next = m.step(&ThermalState::new(t.clone()), &q).unwrap();
        let de: f64 = m.capacities().iter().zip(&t).zip(&next.temperatures).map(|((c, a), b)| c * (b - a)).sum();
        let to_space: f64 = (0..n).map(|i| m.rad_coef()[i] * space[i] * t[i].powi(4)).sum();
        let qs: f64 = q.iter().sum();
        prop_assert!((de - 0.1 * (qs - to_space)).abs() <= 1e-9 * 0.1 * (qs + to_space));
    }
}
