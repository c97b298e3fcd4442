use lograph::graph::{laplacian_from_adjacency, project_to_laplacian_set, smoothness};
use lograph::graph_update::{alternate, full_objective, AlternatingConfig, MONOTONE_SLACK};
use lograph::lowrank::{rpca, solve_lowrank_step, LowRankStepConfig};
use lograph::prox::{nuclear_norm, singular_values, soft_threshold, svt};
use lograph::synth::{SynthInstance, SynthSpec};
use lograph::{Adjacency, Laplacian, Matrix};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |v| Matrix::from_vec(r, c, v))
    })
}

fn adjacency(max_nodes: usize) -> impl Strategy<Value = Adjacency> {
    (2..=max_nodes).prop_flat_map(|p| {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], p * (p - 1) / 2).prop_map(move |v| {
            let mut w = Matrix::zeros(p, p);
            let mut k = 0;
            for i in 0..p {
                for j in (i + 1)..p {
                    w[(i, j)] = v[k];
                    w[(j, i)] = v[k];
                    k += 1;
                }
            }
            Adjacency::new(w).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_sum_to_zero(w in adjacency(10)) {
        let phi = w.laplacian();
        for i in 0..w.nodes() {
            let s: f64 = phi.matrix().row(i).iter().sum();
            prop_assert!(s.abs() <= 1e-12);
        }
        prop_assert_eq!(phi.adjacency(), w);
    }

    #[test]
    fn smoothness_is_nonnegative_and_zero_on_constant_rows(w in adjacency(8), n in 1usize..6, c in -3.0f64..3.0) {
        let phi = laplacian_from_adjacency(w.weights()).unwrap();
        let constant = Matrix::from_element(w.nodes(), n, c);
        prop_assert!(smoothness(&constant, &phi).unwrap().abs() <= 1e-9 * (1.0 + c * c));
        let l = Matrix::from_fn(w.nodes(), n, |i, j| (i * 7 + j * 3) as f64 % 5.0 - 2.0);
        prop_assert!(smoothness(&l, &phi).unwrap() >= -1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(m in matrix(8, 8).prop_filter("square", |m| m.is_square())) {
        let once = project_to_laplacian_set(&m).unwrap();
        let twice = project_to_laplacian_set(once.matrix()).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(Laplacian::try_from_matrix(once.into_inner()).is_ok());
    }

    #[test]
    fn soft_threshold_is_nonexpansive(a in matrix(5, 5), tau in 0.0f64..3.0) {
        let b = a.map(|v| v + 0.5);
        let d = (soft_threshold(&a, tau) - soft_threshold(&b, tau)).norm();
        prop_assert!(d <= (&a - &b).norm() + 1e-12);
    }

    #[test]
    fn svt_shrinks_nuclear_norm_by_tau_per_value(a in matrix(6, 6), tau in 0.0f64..2.0) {
        let before = singular_values(&a).unwrap();
        let expected: f64 = before.iter().map(|s| (s - tau).max(0.0)).sum();
        let after = nuclear_norm(&svt(&a, tau).unwrap()).unwrap();
        prop_assert!((after - expected).abs() <= 1e-9 * (1.0 + expected));
    }
}

#[test]
fn lowrank_step_is_feasible_on_synthetic_data() {
    let inst = SynthInstance::generate(&SynthSpec { seed: 4, ..Default::default() }).unwrap();
    let res = solve_lowrank_step(&inst.x, &inst.phi_true, &LowRankStepConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.relative_feasibility(&inst.x) <= 1e-5);
}

#[test]
fn true_graph_beats_robust_pca() {
    let inst = SynthInstance::generate(&SynthSpec { seed: 1, ..Default::default() }).unwrap();
    let cfg = LowRankStepConfig::default();
    let with_graph = solve_lowrank_step(&inst.x, &inst.phi_true, &cfg).unwrap();
    let without = rpca(&inst.x, cfg.delta, &cfg).unwrap();
    let err = |l: &Matrix| (l - &inst.l0).norm() / inst.l0.norm();
    assert!(err(&with_graph.l) < err(&without.l));
}

#[test]
fn outer_loop_reports_its_objective() {
    let inst = SynthInstance::generate(&SynthSpec { seed: 2, ..Default::default() }).unwrap();
    let cfg = AlternatingConfig::default();
    let res = alternate(&inst.x, &inst.phi_true, &cfg).unwrap();
    let last = res.outer.last().unwrap().objective;
    let recomputed = full_objective(&res.l, &res.m, &res.phi, cfg.lowrank.delta, cfg.lowrank.gamma, cfg.graph.beta).unwrap();
    assert!((last - recomputed).abs() <= 1e-9 * last.abs());
    assert!(res.outer.windows(2).all(|w| w[1].objective <= w[0].objective + MONOTONE_SLACK));
}
