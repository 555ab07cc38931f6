//! Truncation-error maps over `(N1, N2)`: log-linear regression, the
//! high-order (directional) extrapolation and the low-order (hyperplane)
//! extrapolation it is compared against.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::estimator::{compose_norms, DirectionalSeries, Estimator, TauSample};
use crate::mesh::{Direction, Orders};
use crate::operator::Flavor;
use crate::scalar::Scalar;

/// Default upper order of a map, matching the adaptation cap.
pub const DEFAULT_MAP_MAX_ORDER: usize = 10;

/// Least-squares line through `(N, log10 value)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub n_points: usize,
}

impl<T: Scalar> RegressionFit<T> {
    pub fn log10_at(&self, n: usize) -> T {
        self.intercept + self.slope * T::from_usize_lossy(n)
    }

    pub fn predict(&self, n: usize) -> T {
        T::lit(10.0).powf(self.log10_at(n))
    }
}

/// Fits `log10(value) = intercept + slope * N`.
///
/// ```
/// use dgsem_tau::fit_loglinear;
/// let pts: Vec<(usize, f64)> = (1..5).map(|n| (n, 10f64.powf(1.0 - 0.5 * n as f64))).collect();
/// let fit = fit_loglinear(&pts).unwrap();
/// assert!((fit.slope + 0.5).abs() < 1e-12 && (fit.intercept - 1.0).abs() < 1e-12);
/// ```
pub fn fit_loglinear<T: Scalar>(points: &[(usize, T)]) -> Result<RegressionFit<T>> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, v)) = points
        .iter()
        .find(|p| !(p.1 > T::zero()) || !p.1.is_finite())
    {
        return Err(Error::DegenerateFit(format!(
            "value at N = {n} is not positive ({v:e})"
        )));
    }
    let count = T::from_usize_lossy(points.len());
    let xs: Vec<T> = points.iter().map(|p| T::from_usize_lossy(p.0)).collect();
    let ys: Vec<T> = points.iter().map(|p| p.1.log10()).collect();
    let mx = xs.iter().copied().sum::<T>() / count;
    let my = ys.iter().copied().sum::<T>() / count;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if !(sxx > T::zero()) {
        return Err(Error::DegenerateFit(
            "all points share the same order".into(),
        ));
    }
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: T = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    let ss_res: T = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > T::zero() {
        (T::one() - ss_res / ss_tot).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
    })
}

/// Which points of a series enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWindow {
    /// Every available order.
    All,
    /// Drop `N = 1` when the reference order is at least this value.
    DropFirstFrom(usize),
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::DropFirstFrom(4)
    }
}

impl FitWindow {
    pub fn select<T: Copy>(self, points: &[(usize, T)], reference: usize) -> Vec<(usize, T)> {
        match self {
            FitWindow::All => points.to_vec(),
            FitWindow::DropFirstFrom(p) if reference >= p => {
                points.iter().copied().filter(|q| q.0 > 1).collect()
            }
            FitWindow::DropFirstFrom(_) => points.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapMethod {
    HighOrder,
    LowOrder,
    FullProduct,
    Exact,
}

impl MapMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MapMethod::HighOrder => "high-order",
            MapMethod::LowOrder => "low-order",
            MapMethod::FullProduct => "full-product",
            MapMethod::Exact => "exact",
        }
    }
}

impl std::str::FromStr for MapMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "high-order" => Ok(MapMethod::HighOrder),
            "low-order" => Ok(MapMethod::LowOrder),
            "full-product" => Ok(MapMethod::FullProduct),
            "exact" => Ok(MapMethod::Exact),
            other => Err(format!("unknown map method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Estimated,
    Extrapolated,
    Exact,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Estimated => "estimated",
            Provenance::Extrapolated => "extrapolated",
            Provenance::Exact => "exact",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "estimated" => Ok(Provenance::Estimated),
            "extrapolated" => Ok(Provenance::Extrapolated),
            "exact" => Ok(Provenance::Exact),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

/// `||tau||` of one element over `1 <= N_i <= n_max`; cells may be empty
/// (a full-product map only covers the inner region).
#[derive(Debug, Clone, PartialEq)]
pub struct TauMap<T> {
    pub element_id: usize,
    pub n_max: usize,
    pub flavor: Flavor,
    pub method: MapMethod,
    cells: Vec<Option<(T, Provenance)>>,
    /// Directional fits behind extrapolated cells, indexed by direction.
    pub fits: [Option<RegressionFit<T>>; 2],
}

impl<T: Scalar> TauMap<T> {
    pub fn empty(element_id: usize, n_max: usize, flavor: Flavor, method: MapMethod) -> Self {
        Self {
            element_id,
            n_max,
            flavor,
            method,
            cells: vec![None; n_max * n_max],
            fits: [None, None],
        }
    }

    fn slot(&self, n1: usize, n2: usize) -> Option<usize> {
        (n1 >= 1 && n2 >= 1 && n1 <= self.n_max && n2 <= self.n_max)
            .then(|| (n1 - 1) + self.n_max * (n2 - 1))
    }

    pub fn set(&mut self, orders: Orders, value: T, provenance: Provenance) -> Result<()> {
        if !(value >= T::zero()) {
            return Err(Error::MalformedMap(format!(
                "negative or NaN value {value:e} at {orders}"
            )));
        }
        let k = self
            .slot(orders.n1, orders.n2)
            .ok_or_else(|| Error::MalformedMap(format!("{orders} outside 1..={}", self.n_max)))?;
        self.cells[k] = Some((value, provenance));
        Ok(())
    }

    pub fn get(&self, orders: Orders) -> Option<T> {
        self.cell(orders).map(|c| c.0)
    }

    pub fn cell(&self, orders: Orders) -> Option<(T, Provenance)> {
        self.slot(orders.n1, orders.n2).and_then(|k| self.cells[k])
    }

    /// Filled cells in `N1`-fastest order.
    pub fn iter(&self) -> impl Iterator<Item = (Orders, T, Provenance)> + '_ {
        self.cells.iter().enumerate().filter_map(move |(k, c)| {
            c.map(|(v, p)| (Orders::new(k % self.n_max + 1, k / self.n_max + 1), v, p))
        })
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    pub fn csv_rows(&self, out: &mut String) {
        for (o, v, p) in self.iter() {
            let _ = writeln!(
                out,
                "{},{},{},{:.9e},{},{},{}",
                self.element_id,
                o.n1,
                o.n2,
                v.to_f64_lossy(),
                self.flavor,
                self.method.as_str(),
                p.as_str()
            );
        }
    }
}

pub const MAP_CSV_HEADER: &str = "element_id,N1,N2,tau,flavor,method,provenance";

/// Serializes maps with the CSV header.
pub fn maps_to_csv<T: Scalar>(maps: &[TauMap<T>]) -> String {
    let mut out = format!("{MAP_CSV_HEADER}\n");
    for m in maps {
        m.csv_rows(&mut out);
    }
    out
}

/// Parses CSV written by [`maps_to_csv`]; one map per
/// `(element, flavor, method)` triple, in order of first appearance.
pub fn maps_from_csv<T: Scalar>(input: impl BufRead) -> Result<Vec<TauMap<T>>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != MAP_CSV_HEADER {
                return Err(Error::MalformedMap(format!("unexpected header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::MalformedMap(format!("line {}: {what}", i + 1));
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let id: usize = f[0].parse().map_err(|_| bad("element_id"))?;
        let n1: usize = f[1].parse().map_err(|_| bad("N1"))?;
        let n2: usize = f[2].parse().map_err(|_| bad("N2"))?;
        let tau: f64 = f[3].parse().map_err(|_| bad("tau"))?;
        let flavor: Flavor = f[4].parse().map_err(|e: String| bad(&e))?;
        let method: MapMethod = f[5].parse().map_err(|e: String| bad(&e))?;
        let prov: Provenance = f[6].parse().map_err(|e: String| bad(&e))?;
        rows.push((id, Orders::new(n1, n2), T::lit(tau), flavor, method, prov));
    }
    let mut maps: Vec<TauMap<T>> = Vec::new();
    for (id, o, v, fl, m, p) in &rows {
        let n_max = rows
            .iter()
            .filter(|r| r.0 == *id && r.3 == *fl && r.4 == *m)
            .map(|r| r.1.max_component())
            .max()
            .unwrap_or(1);
        let idx = match maps
            .iter()
            .position(|x| x.element_id == *id && x.flavor == *fl && x.method == *m)
        {
            Some(k) => k,
            None => {
                maps.push(TauMap::empty(*id, n_max, *fl, *m));
                maps.len() - 1
            }
        };
        maps[idx].set(*o, *v, *p)?;
    }
    Ok(maps)
}

/// Map from exact samples.
pub fn map_from_samples<T: Scalar>(
    samples: &[TauSample<T>],
    n_max: usize,
    method: MapMethod,
    provenance: Provenance,
    norm: crate::operator::TauNorm,
) -> Result<TauMap<T>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::MalformedMap("no samples".into()))?;
    let mut map = TauMap::empty(first.element_id, n_max, first.flavor, method);
    for s in samples {
        if s.orders.max_component() <= n_max {
            map.set(s.orders, s.value(norm), provenance)?;
        }
    }
    Ok(map)
}

fn directional_fit<T: Scalar>(
    series: &DirectionalSeries<T>,
    window: FitWindow,
) -> Result<RegressionFit<T>> {
    fit_loglinear(&window.select(&series.samples, series.reference_order()))
}

/// High-order map: inner cells (`N_i < P_i`) compose the directional fields;
/// any cell needing `N_i >= P_i` sums the regression-extrapolated directional
/// norms.
///
/// Without an estimator (or without stored fields) the inner cells fall back
/// to the norm-level sum as well.
pub fn build_map_high_order<T: Scalar>(
    series1: &DirectionalSeries<T>,
    series2: &DirectionalSeries<T>,
    n_map_max: usize,
    window: FitWindow,
    composer: Option<&Estimator<'_, T>>,
) -> Result<TauMap<T>> {
    let (s1, s2) = match (series1.direction, series2.direction) {
        (Direction::Xi, Direction::Eta) => (series1, series2),
        (Direction::Eta, Direction::Xi) => (series2, series1),
        _ => return Err(Error::Mismatch("need one series per direction".into())),
    };
    let fits = [directional_fit(s1, window)?, directional_fit(s2, window)?];
    let p = s1.reference;
    let mut map = TauMap::empty(s1.element_id, n_map_max, s1.flavor, MapMethod::HighOrder);
    map.fits = [Some(fits[0]), Some(fits[1])];

    let component = |s: &DirectionalSeries<T>, fit: &RegressionFit<T>, n: usize| -> T {
        if n < s.reference_order() {
            s.value_at(n).unwrap_or_else(|| fit.predict(n))
        } else {
            fit.predict(n)
        }
    };

    for n2 in 1..=n_map_max {
        for n1 in 1..=n_map_max {
            let o = Orders::new(n1, n2);
            if n1 < p.n1 && n2 < p.n2 {
                let v = match composer {
                    Some(est) => est.compose_directional(s1, s2, o)?.value(est.norm),
                    None => compose_norms(s1, s2, o)?.value_inf,
                };
                map.set(o, v, Provenance::Estimated)?;
            } else {
                let v = component(s1, &fits[0], n1) + component(s2, &fits[1], n2);
                map.set(o, v, Provenance::Extrapolated)?;
            }
        }
    }
    Ok(map)
}

/// Inner-only map of direct estimates at every `N_i <= P_i - 1`.
pub fn build_map_full_product<T: Scalar>(
    samples: &[TauSample<T>],
    n_map_max: usize,
    norm: crate::operator::TauNorm,
) -> Result<TauMap<T>> {
    map_from_samples(
        samples,
        n_map_max,
        MapMethod::FullProduct,
        Provenance::Estimated,
        norm,
    )
}

/// Low-order map: inner cells copied from the full-product map; outer cells
/// from log-linear fits along the iso-lines `N_j = P_j - 1`, extended to the
/// whole outer region as the hyperplane through those lines.
///
/// For `N1 < P1 <= N2` the value is `log L2(N2) + s1 (N1 - (P1-1))`, with
/// `L2` the fit along `N1 = P1-1` and `s1` the slope along `N2 = P2-1`;
/// the mirrored formula covers `N2 < P2 <= N1`, and where both orders are
/// outer the two expressions are averaged in log space. Every formula
/// reduces to the plain iso-line fit on its iso-line.
pub fn build_map_low_order<T: Scalar>(
    full_inner: &TauMap<T>,
    p: Orders,
    n_map_max: usize,
    window: FitWindow,
) -> Result<TauMap<T>> {
    if p.n1 < 2 || p.n2 < 2 {
        return Err(Error::DegenerateFit(format!(
            "reference orders {p} leave no inner map"
        )));
    }
    let line = |dir: Direction| -> Result<Vec<(usize, T)>> {
        let p_i = p.get(dir);
        (1..p_i)
            .map(|n| {
                let o = match dir {
                    Direction::Xi => Orders::new(n, p.n2 - 1),
                    Direction::Eta => Orders::new(p.n1 - 1, n),
                };
                full_inner
                    .get(o)
                    .map(|v| (n, v))
                    .ok_or_else(|| Error::MalformedMap(format!("inner map lacks {o}")))
            })
            .collect()
    };
    let fit1 = fit_loglinear(&window.select(&line(Direction::Xi)?, p.n1))?;
    let fit2 = fit_loglinear(&window.select(&line(Direction::Eta)?, p.n2))?;

    let mut map = TauMap::empty(
        full_inner.element_id,
        n_map_max,
        full_inner.flavor,
        MapMethod::LowOrder,
    );
    map.fits = [Some(fit1), Some(fit2)];
    let ten = T::lit(10.0);
    let from_line2 = |n1: usize, n2: usize| {
        fit2.log10_at(n2) + fit1.slope * (T::from_usize_lossy(n1) - T::from_usize_lossy(p.n1 - 1))
    };
    let from_line1 = |n1: usize, n2: usize| {
        fit1.log10_at(n1) + fit2.slope * (T::from_usize_lossy(n2) - T::from_usize_lossy(p.n2 - 1))
    };
    for n2 in 1..=n_map_max {
        for n1 in 1..=n_map_max {
            let o = Orders::new(n1, n2);
            let (outer1, outer2) = (n1 >= p.n1, n2 >= p.n2);
            match (outer1, outer2) {
                (false, false) => {
                    let v = full_inner
                        .get(o)
                        .ok_or_else(|| Error::MalformedMap(format!("inner map lacks {o}")))?;
                    map.set(o, v, Provenance::Estimated)?;
                }
                (false, true) => {
                    map.set(o, ten.powf(from_line2(n1, n2)), Provenance::Extrapolated)?
                }
                (true, false) => {
                    map.set(o, ten.powf(from_line1(n1, n2)), Provenance::Extrapolated)?
                }
                (true, true) => {
                    let l = (from_line1(n1, n2) + from_line2(n1, n2)) * T::lit(0.5);
                    map.set(o, ten.powf(l), Provenance::Extrapolated)?
                }
            }
        }
    }
    Ok(map)
}
