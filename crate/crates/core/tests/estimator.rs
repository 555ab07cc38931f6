use dgsem_tau::*;
use proptest::prelude::*;

struct Fixture {
    disc: Discretization64,
    mesh: Mesh64,
    q: GlobalSolution64,
}

const P: Orders = Orders { n1: 4, n2: 5 };

fn fixture() -> &'static Fixture {
    static CELL: std::sync::OnceLock<Fixture> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let disc = Discretization::manufactured(GasParameters::default());
        let mesh = build_cartesian_mesh(3, 3, P).unwrap();
        let q = disc.sample_exact(&mesh).unwrap();
        Fixture { disc, mesh, q }
    })
}

#[test]
fn coarsening_touches_one_element() {
    let f = fixture();
    let c = coarsen_solution(&f.disc, &f.q, 4, Orders::new(2, 3)).unwrap();
    for (k, (a, b)) in c.elements.iter().zip(&f.q.elements).enumerate() {
        if k == 4 {
            assert_eq!(a.orders, Orders::new(2, 3));
        } else {
            assert_eq!(a, b);
        }
    }
    assert!(coarsen_solution(&f.disc, &f.q, 4, Orders::new(5, 5)).is_err());
}

#[test]
fn directional_series_shapes() {
    let f = fixture();
    let est = Estimator::new(&f.disc, &f.mesh);
    let (s1, s2) = est
        .directional_series(&f.q, 4, Flavor::NonIsolated)
        .unwrap();
    assert_eq!(s1.direction, Direction::Xi);
    assert_eq!(s2.direction, Direction::Eta);
    assert_eq!(s1.samples.len(), P.n1 - 1);
    assert_eq!(s2.samples.len(), P.n2 - 1);
    assert_eq!(s1.fields.len(), s1.samples.len());
    assert_eq!(s1.field_at(2).unwrap().orders, Orders::new(2, P.n2));
    assert_eq!(s2.field_at(3).unwrap().orders, Orders::new(P.n1, 3));
    assert_eq!(s1.component(P.n1).unwrap(), 0.0);
    assert!(s1.component(P.n1 + 1).is_err());
}

#[test]
fn exact_tau_agrees_with_field_evaluation() {
    let f = fixture();
    let est = Estimator::new(&f.disc, &f.mesh);
    for flavor in Flavor::BOTH {
        let field = est.exact_tau_field(&f.mesh.orders(), flavor).unwrap();
        let single = est.exact_tau(4, P, flavor).unwrap();
        assert_eq!(field[4].value_inf, single.value_inf);
        // The fixture is the exact solution, so estimating at P is exact too.
        let estimated = est.estimate_tau(&f.q, 4, P, flavor).unwrap();
        assert_eq!(estimated.value_inf, single.value_inf);
    }
}

#[test]
fn full_product_covers_inner_map() {
    let f = fixture();
    let est = Estimator::new(&f.disc, &f.mesh);
    let samples = est.full_product_samples(&f.q, 4, Flavor::Isolated).unwrap();
    assert_eq!(samples.len(), (P.n1 - 1) * (P.n2 - 1));
    assert!(samples
        .iter()
        .all(|s| s.orders.n1 < P.n1 && s.orders.n2 < P.n2));
}

#[test]
fn single_direction_composition_is_the_direct_estimate() {
    let f = fixture();
    let est = Estimator::new(&f.disc, &f.mesh);
    let (s1, s2) = est
        .directional_series(&f.q, 4, Flavor::NonIsolated)
        .unwrap();
    for n1 in 1..P.n1 {
        let o = Orders::new(n1, P.n2);
        let composed = est.compose_directional(&s1, &s2, o).unwrap();
        let direct = est.estimate_tau(&f.q, 4, o, Flavor::NonIsolated).unwrap();
        let rel = (composed.value_inf - direct.value_inf).abs() / direct.value_inf;
        assert!(rel < 1e-12, "({n1}, P2): {rel:e}");
    }
}

#[test]
fn isolated_oracle_tracks_exact_isolated_error() {
    let f = fixture();
    let est = Estimator::new(&f.disc, &f.mesh);
    let o = Orders::uniform(3);
    let exact = est
        .exact_tau(4, o, Flavor::Isolated)
        .unwrap()
        .value(est.norm);
    let oracle = est.isolated_interpolation_oracle(4, o).unwrap();
    assert!(
        (exact - oracle).abs() / exact < 0.2,
        "{exact:e} vs {oracle:e}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn composition_is_symmetric(n1 in 1usize..=4, n2 in 1usize..=5) {
        let f = fixture();
        let est = Estimator::new(&f.disc, &f.mesh);
        let (s1, s2) = est.directional_series(&f.q, 4, Flavor::Isolated).unwrap();
        let o = Orders::new(n1, n2);
        let ab = est.compose_directional(&s1, &s2, o).unwrap().value_inf;
        let ba = est.compose_directional(&s2, &s1, o).unwrap().value_inf;
        prop_assert!((ab - ba).abs() <= 1e-14 * ab.max(1e-300));
        let nab = compose_norms(&s1, &s2, o).unwrap().value_inf;
        let nba = compose_norms(&s2, &s1, o).unwrap().value_inf;
        prop_assert_eq!(nab, nba);
    }
}
