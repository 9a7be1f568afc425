use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use vicsek_core::calculus::*;
use vicsek_core::LevelGraph;

fn graph(m: u32) -> Arc<LevelGraph> {
    static CACHE: OnceLock<Vec<Arc<LevelGraph>>> = OnceLock::new();
    CACHE.get_or_init(|| (0..=4).map(|m| Arc::new(LevelGraph::build(m).unwrap())).collect())[m as usize].clone()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

/// A level together with random vertex and edge data on it.
fn level_data(levels: std::ops::RangeInclusive<u32>) -> impl Strategy<Value = (u32, Vec<f64>, Vec<f64>, Vec<f64>)> {
    levels.prop_flat_map(|m| {
        let n = graph(m).vertex_count();
        (Just(m), values(n), values(n), values(n - 1))
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn codifferential_is_the_adjoint((m, f, _, eta) in level_data(0..=3)) {
        let g = graph(m);
        let f = VertexFunction::new(g.clone(), f).unwrap();
        let eta = EdgeFunction::new(g, eta).unwrap();
        let lhs = eta.inner(&gradient(&f)).unwrap();
        let rhs = codifferential(&eta).inner(&f).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn laplacian_is_symmetric_and_gives_the_energy((m, f, h, _) in level_data(0..=3)) {
        let g = graph(m);
        let f = VertexFunction::new(g.clone(), f).unwrap();
        let h = VertexFunction::new(g, h).unwrap();
        let a = laplacian(&f).inner(&h).unwrap();
        let b = f.inner(&laplacian(&h)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let e = energy(&f);
        prop_assert!(rel(-laplacian(&f).inner(&f).unwrap(), e) < 1e-12);
        prop_assert!(e >= 0.0);
        prop_assert!(laplacian(&VertexFunction::constant(f.graph().clone(), 3.0)).values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn antiderivative_inverts_gradient((m, f, _, eta) in level_data(0..=4), base in any::<prop::sample::Index>()) {
        let g = graph(m);
        let x0 = base.index(g.vertex_count());
        let eta = EdgeFunction::new(g.clone(), eta).unwrap();
        let back = gradient(&antiderivative(&eta, x0).unwrap());
        for (a, b) in back.values().iter().zip(eta.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let f = VertexFunction::new(g, f).unwrap();
        let rebuilt = antiderivative(&gradient(&f), x0).unwrap();
        for (a, b) in rebuilt.values().iter().zip(f.values()) {
            prop_assert!((a - (b - f.values()[x0])).abs() <= 1e-12);
        }
    }

    #[test]
    fn midpoint_product_rule((m, f, h, _) in level_data(0..=3)) {
        let g = graph(m);
        let f = VertexFunction::new(g.clone(), f).unwrap();
        let h = VertexFunction::new(g, h).unwrap();
        let fh = f.zip_with(&h, |a, b| a * b).unwrap();
        let lhs = gradient(&fh);
        let (fb, hb, df, dh) = (edge_average(&f), edge_average(&h), gradient(&f), gradient(&h));
        for e in 0..lhs.values().len() {
            let rhs = fb.values()[e] * dh.values()[e] + hb.values()[e] * df.values()[e];
            prop_assert!((lhs.values()[e] - rhs).abs() <= 1e-12 * rhs.abs().max(1.0) * 3f64.powi(m as i32));
        }
    }

    #[test]
    fn holder_bound_is_exact((m, f, _, _) in level_data(1..=3), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>(), p in prop::sample::select(vec![2.0, 4.0])) {
        let g = graph(m);
        let (x, y) = (a.index(g.vertex_count()), b.index(g.vertex_count()));
        let f = VertexFunction::new(g.clone(), f).unwrap();
        let d = g.geodesic_distance(x, y).unwrap();
        let bound = d.powf(1.0 - 1.0 / p) * lp_edge_norm(&gradient(&f), p).unwrap();
        prop_assert!((f.values()[x] - f.values()[y]).abs() <= bound * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn codifferential_poincare_holds((m, _, _, eta) in level_data(0..=4), base in any::<prop::sample::Index>()) {
        let g = graph(m);
        let x0 = base.index(g.vertex_count());
        let eta = EdgeFunction::new(g.clone(), eta).unwrap();
        let lhs = g.edge_measure() * eta.values().iter().map(|v| v.abs()).sum::<f64>();
        let dist = g.distances_from(x0).unwrap();
        let div = codifferential(&eta);
        let rhs: f64 = (0..g.vertex_count())
            .map(|x| dist[x] * div.values()[x].abs() * g.vertex_measure()[x])
            .sum();
        prop_assert!(lhs <= rhs + 1e-10 * rhs.max(1.0));
    }

    #[test]
    fn piecewise_affine_energy_is_level_invariant(coarse in values(21)) {
        let g1 = graph(1);
        let f1 = VertexFunction::new(g1, coarse).unwrap();
        let e1 = energy(&f1);
        for m in 2..=4 {
            let fm = piecewise_affine_extend(&f1, &graph(m)).unwrap();
            prop_assert!(rel(energy(&fm), e1) < 1e-12, "m={} {} vs {}", m, energy(&fm), e1);
        }
    }

    #[test]
    fn extension_is_transitive(coarse in values(21)) {
        let f1 = VertexFunction::new(graph(1), coarse).unwrap();
        let direct = piecewise_affine_extend(&f1, &graph(3)).unwrap();
        let staged = piecewise_affine_extend(&piecewise_affine_extend(&f1, &graph(2)).unwrap(), &graph(3)).unwrap();
        for (a, b) in direct.values().iter().zip(staged.values()) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn lp_norms_are_monotone_in_p((m, f, _, _) in level_data(0..=3)) {
        let f = VertexFunction::new(graph(m), f).unwrap();
        let norms: Vec<f64> = [1.0, 2.0, 4.0, f64::INFINITY].iter().map(|&p| f.lp_norm(p).unwrap()).collect();
        prop_assert!(norms.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)));
    }
}

#[test]
fn csv_round_trip() {
    let g = graph(1);
    let f = VertexFunction::from_fn(g.clone(), |v| v as f64 / 7.0);
    let mut buf = Vec::new();
    f.write_csv(&mut buf).unwrap();
    let back = VertexFunction::read_csv(g, buf.as_slice()).unwrap();
    assert_eq!(back.values(), f.values());
}
