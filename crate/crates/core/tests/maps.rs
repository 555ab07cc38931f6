use std::io::BufReader;

use dgsem_tau::adaptation::{
    select_orders_independent, sweep_to_csv, PLAN_CSV_HEADER, SWEEP_CSV_HEADER,
};
use dgsem_tau::error_map::{map_from_samples, maps_from_csv, maps_to_csv, MAP_CSV_HEADER};
use dgsem_tau::*;
use proptest::prelude::*;

/// Full map of `10^(a + b N1 + c N2)` with estimated provenance.
fn plane_map(a: f64, b: f64, c: f64, n_max: usize) -> TauMap64 {
    let mut m = TauMap::empty(0, n_max, Flavor::NonIsolated, MapMethod::FullProduct);
    for n2 in 1..=n_max {
        for n1 in 1..=n_max {
            let v = 10f64.powf(a + b * n1 as f64 + c * n2 as f64);
            m.set(Orders::new(n1, n2), v, Provenance::Estimated)
                .unwrap();
        }
    }
    m
}

fn synthetic_series(direction: Direction, p: Orders, a: f64, b: f64) -> DirectionalSeries<f64> {
    DirectionalSeries {
        element_id: 0,
        direction,
        flavor: Flavor::Isolated,
        reference: p,
        samples: (1..p.get(direction))
            .map(|n| (n, 10f64.powf(a + b * n as f64)))
            .collect(),
        fields: Vec::new(),
    }
}

#[test]
fn fit_window_selection() {
    let pts = [(1, 1.0), (2, 0.5), (3, 0.25)];
    assert_eq!(FitWindow::All.select(&pts, 5).len(), 3);
    assert_eq!(FitWindow::DropFirstFrom(4).select(&pts, 5)[0].0, 2);
    assert_eq!(FitWindow::DropFirstFrom(4).select(&pts, 3).len(), 3);
}

#[test]
fn degenerate_fits_are_rejected() {
    assert!(fit_loglinear(&[(2, 1e-3)]).is_err());
    assert!(fit_loglinear(&[(2, 1e-3), (2, 1e-4)]).is_err());
    assert!(fit_loglinear(&[(1, 1e-3), (2, -1.0)]).is_err());
}

#[test]
fn low_order_map_reproduces_a_hyperplane() {
    let p = Orders::uniform(5);
    let plane = plane_map(-1.0, -0.7, -0.4, 10);
    let mut inner = TauMap::empty(0, 10, Flavor::NonIsolated, MapMethod::FullProduct);
    for (o, v, prov) in plane.iter().filter(|c| c.0.n1 < p.n1 && c.0.n2 < p.n2) {
        inner.set(o, v, prov).unwrap();
    }
    for window in [FitWindow::All, FitWindow::default()] {
        let low = build_map_low_order(&inner, p, 10, window).unwrap();
        assert!(low.is_complete());
        for (o, v, prov) in low.iter() {
            let expect = plane.get(o).unwrap();
            assert!(
                (v.log10() - expect.log10()).abs() < 1e-10,
                "{o}: {v:e} vs {expect:e}"
            );
            let outer = o.n1 >= p.n1 || o.n2 >= p.n2;
            assert_eq!(prov == Provenance::Extrapolated, outer);
        }
    }
}

#[test]
fn high_order_map_sums_directional_extrapolations() {
    let p = Orders::new(5, 4);
    let s1 = synthetic_series(Direction::Xi, p, -1.0, -0.5);
    let s2 = synthetic_series(Direction::Eta, p, -2.0, -0.3);
    let map = build_map_high_order(&s2, &s1, 10, FitWindow::All, None).unwrap();
    let fits = map.fits.map(|f| f.unwrap());
    assert!((fits[0].slope + 0.5).abs() < 1e-12 && (fits[1].slope + 0.3).abs() < 1e-12);
    for (o, v, prov) in map.iter() {
        let expect = 10f64.powf(-1.0 - 0.5 * o.n1 as f64) + 10f64.powf(-2.0 - 0.3 * o.n2 as f64);
        assert!((v - expect).abs() <= 1e-10 * expect, "{o}");
        assert_eq!(prov == Provenance::Estimated, o.n1 < p.n1 && o.n2 < p.n2);
    }
    let same = build_map_high_order(&s1, &s1, 10, FitWindow::All, None);
    assert!(same.is_err());
}

#[test]
fn csv_round_trip() {
    let a = plane_map(-1.0, -0.3, -0.2, 4);
    let mut b = TauMap::empty(1, 4, Flavor::Isolated, MapMethod::HighOrder);
    b.set(Orders::new(2, 3), 1.25e-4, Provenance::Extrapolated)
        .unwrap();
    let csv = maps_to_csv(&[a.clone(), b.clone()]);
    assert_eq!(csv.lines().next(), Some(MAP_CSV_HEADER));
    let back: Vec<TauMap64> = maps_from_csv(BufReader::new(csv.as_bytes())).unwrap();
    assert_eq!(back.len(), 2);
    for (orig, read) in [a, b].iter().zip(&back) {
        assert_eq!(
            (orig.element_id, orig.flavor, orig.method),
            (read.element_id, read.flavor, read.method)
        );
        let cells: Vec<_> = orig.iter().collect();
        let read_cells: Vec<_> = read.iter().collect();
        assert_eq!(cells.len(), read_cells.len());
        for (x, y) in cells.iter().zip(&read_cells) {
            assert_eq!((x.0, x.2), (y.0, y.2));
            assert!((x.1 - y.1).abs() <= 1e-9 * x.1);
        }
    }
    assert!(maps_from_csv::<f64>(BufReader::new("bad,header\n".as_bytes())).is_err());
}

#[test]
fn map_rejects_bad_cells() {
    let mut m = TauMap::<f64>::empty(0, 3, Flavor::Isolated, MapMethod::Exact);
    assert!(m.set(Orders::new(4, 1), 1.0, Provenance::Exact).is_err());
    assert!(m.set(Orders::new(1, 1), -1.0, Provenance::Exact).is_err());
    assert!(m
        .set(Orders::new(1, 1), f64::NAN, Provenance::Exact)
        .is_err());
    assert!(!m.is_complete());
}

#[test]
fn selection_tie_breaks_and_fallback() {
    // (2,3) and (3,2) both cost 12 DOFs with max order 3; the smaller N1 wins.
    let mut m = plane_map(0.0, 0.0, 0.0, 4);
    m.set(Orders::new(2, 3), 1e-3, Provenance::Estimated)
        .unwrap();
    m.set(Orders::new(3, 2), 1e-3, Provenance::Estimated)
        .unwrap();
    let (o, v) = select_orders(&m, 1e-2, 1, 4).unwrap();
    assert_eq!((o, v), (Orders::new(2, 3), 1e-3));
    // (1,5) would cost 12 too, but (1,5) lies outside the 4x4 map.
    let (o, _) = select_orders(&m, 1e-6, 1, 4).unwrap();
    assert_eq!(o, Orders::uniform(4));
    assert!(select_orders(&m, 1e-2, 3, 2).is_err());
    assert!(select_orders(&m, 0.0, 1, 4).is_err());
}

#[test]
fn independent_selection_on_low_order_map() {
    let p = Orders::uniform(5);
    let plane = plane_map(-1.0, -0.7, -0.4, 10);
    let mut inner = TauMap::empty(0, 10, Flavor::NonIsolated, MapMethod::FullProduct);
    for (o, v, prov) in plane.iter().filter(|c| c.0.n1 < 5 && c.0.n2 < 5) {
        inner.set(o, v, prov).unwrap();
    }
    let low = build_map_low_order(&inner, p, 10, FitWindow::All).unwrap();
    // An inner cell qualifies: the cheapest inner cell wins, even though the
    // outer cell (5,1) would be cheaper still.
    let loose = 10f64.powf(-1.0 - 0.7 * 3.0 - 0.4 * 3.0);
    let inner_best = low
        .iter()
        .filter(|c| c.0.n1 < 5 && c.0.n2 < 5 && c.1 <= loose)
        .min_by_key(|c| (dof_count(c.0), c.0.max_component(), c.0.n1))
        .unwrap()
        .0;
    assert_eq!(
        select_orders_independent(&low, p, loose, 1, 10).unwrap().0,
        inner_best
    );
    assert_eq!(
        select_orders(&low, loose, 1, 10).unwrap().0,
        Orders::new(5, 1)
    );
    // Nothing inner qualifies: each direction from its own iso-line.
    let tight = 1e-7;
    let (o, _) = select_orders_independent(&low, p, tight, 1, 10).unwrap();
    let fits = low.fits.map(|f| f.unwrap());
    let first = |k: usize| {
        (1..=10)
            .find(|&n| fits[k].predict(n) <= tight)
            .unwrap_or(10)
    };
    assert_eq!(o, Orders::new(first(0), first(1)));
}

#[test]
fn thresholds_are_log_spaced() {
    let t = log_thresholds(1e-7, 1e-1, 4);
    assert_eq!(t.len(), 24);
    assert!((t[0] - 1e-7).abs() < 1e-20);
    assert!(*t.last().unwrap() < 1e-1);
    for w in t.windows(2) {
        assert!(((w[1] / w[0]).log10() - 0.25).abs() < 1e-12);
    }
}

#[test]
fn exact_isolated_maps_bound_the_achieved_error() {
    // The isolated error of an element depends only on its own orders, so a
    // plan built from exact isolated maps meets every threshold it can.
    let disc = Discretization64::manufactured(GasParameters::default());
    let mesh = build_cartesian_mesh(2, 2, Orders::uniform(4)).unwrap();
    let est = Estimator::new(&disc, &mesh);
    let n_max = 6;
    let maps: Vec<TauMap64> = (0..mesh.len())
        .map(|id| {
            let samples = est.exact_samples(id, n_max, Flavor::Isolated).unwrap();
            map_from_samples(
                &samples,
                n_max,
                MapMethod::Exact,
                Provenance::Exact,
                est.norm,
            )
            .unwrap()
        })
        .collect();
    let thresholds = log_thresholds(1e-6, 1e-1, 2);
    let opts = SweepOptions {
        n_max,
        ..SweepOptions::default()
    };
    let rows = sweep_thresholds(&est, &maps, &thresholds, None, &opts).unwrap();
    for r in &rows {
        let reachable = r.plan.predicted_tau.iter().all(|&p| p <= r.tau_max);
        if reachable {
            assert!(
                r.achieved_isolated <= r.tau_max * (1.0 + 1e-12),
                "{}",
                r.tau_max
            );
        }
        let predicted = r.plan.predicted_tau.iter().cloned().fold(0.0, f64::max);
        assert!((predicted - r.achieved_isolated).abs() <= 1e-12 * predicted);
    }
    for w in rows.windows(2) {
        assert!(w[0].plan.total_dofs >= w[1].plan.total_dofs);
    }
    let csv = sweep_to_csv(&rows);
    assert_eq!(csv.lines().next(), Some(SWEEP_CSV_HEADER));
    assert_eq!(csv.lines().count(), rows.len() + 1);
    assert!(rows[0].plan.to_csv().starts_with(PLAN_CSV_HEADER));

    let unsorted = [1e-2, 1e-3];
    assert!(sweep_thresholds(&est, &maps, &unsorted, None, &opts).is_err());
    let mut shuffled = maps.clone();
    shuffled.swap(0, 1);
    assert!(AdaptationPlan::build(&shuffled, 1e-3, 1, n_max).is_err());
}

fn random_map() -> impl Strategy<Value = TauMap64> {
    proptest::collection::vec(-8.0..0.0f64, 36).prop_map(|logs| {
        let mut m = TauMap::empty(0, 6, Flavor::Isolated, MapMethod::Exact);
        for (k, l) in logs.into_iter().enumerate() {
            m.set(
                Orders::new(k % 6 + 1, k / 6 + 1),
                10f64.powf(l),
                Provenance::Exact,
            )
            .unwrap();
        }
        m
    })
}

proptest! {
    #[test]
    fn fit_recovers_exponentials(a in -5.0..0.0f64, b in -2.0..-0.05f64, n in 3usize..8) {
        let pts: Vec<(usize, f64)> = (1..=n).map(|k| (k, 10f64.powf(a + b * k as f64))).collect();
        let fit = fit_loglinear(&pts).unwrap();
        prop_assert!((fit.slope - b).abs() < 1e-10);
        prop_assert!((fit.intercept - a).abs() < 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
        prop_assert_eq!(fit.n_points, n);
    }

    #[test]
    fn selection_matches_brute_force(map in random_map(), log_tau in -8.0..0.0f64) {
        let tau = 10f64.powf(log_tau);
        let (o, v) = select_orders(&map, tau, 1, 6).unwrap();
        let best = map
            .iter()
            .filter(|c| c.1 <= tau)
            .min_by_key(|c| (dof_count(c.0), c.0.max_component(), c.0.n1));
        match best {
            Some((bo, bv, _)) => prop_assert_eq!((o, v), (bo, bv)),
            None => prop_assert_eq!(o, Orders::uniform(6)),
        }
    }

    #[test]
    fn looser_thresholds_never_cost_more(map in random_map(), a in -8.0..0.0f64, b in -8.0..0.0f64) {
        let (lo, hi) = (10f64.powf(a.min(b)), 10f64.powf(a.max(b)));
        let tight = dof_count(select_orders(&map, lo, 1, 6).unwrap().0);
        let loose = dof_count(select_orders(&map, hi, 1, 6).unwrap().0);
        prop_assert!(loose <= tight);
    }
}
