//! DOF-minimizing order selection from truncation-error maps and the
//! threshold sweep that measures the achieved truncation error.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::error_map::TauMap;
use crate::estimator::Estimator;
use crate::mesh::{dof_count, Orders};
use crate::operator::{Flavor, GlobalSolution};
use crate::scalar::Scalar;
use crate::solver::{discretization_error, solve_steady, SolverOptions};

/// Cheapest in-range cell with `map <= tau_max`.
///
/// Ties on DOFs go to the smaller `max(N1, N2)`, then the smaller `N1`.
/// Returns `(N_max, N_max)` when no cell qualifies, together with the map
/// value of the returned cell.
pub fn select_orders<T: Scalar>(
    map: &TauMap<T>,
    tau_max: T,
    n_min: usize,
    n_max: usize,
) -> Result<(Orders, T)> {
    if n_min < 1 || n_min > n_max {
        return Err(Error::MalformedMap(format!(
            "order range {n_min}..={n_max} is empty"
        )));
    }
    if !(tau_max > T::zero()) {
        return Err(Error::MalformedMap(format!(
            "threshold {tau_max:e} is not positive"
        )));
    }
    let mut best: Option<(Orders, T)> = None;
    let key = |o: Orders| (dof_count(o), o.max_component(), o.n1);
    for n2 in n_min..=n_max {
        for n1 in n_min..=n_max {
            let o = Orders::new(n1, n2);
            let v = map.get(o).ok_or_else(|| {
                Error::MalformedMap(format!("element {} map lacks {o}", map.element_id))
            })?;
            if v <= tau_max && best.map_or(true, |(b, _)| key(o) < key(b)) {
                best = Some((o, v));
            }
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            let o = Orders::uniform(n_max);
            Ok((o, map.get(o).unwrap_or_else(T::nan)))
        }
    }
}

/// Selection on a low-order map with reference orders `p`.
///
/// The cheapest qualifying inner cell wins. Failing that, each direction is
/// chosen independently as the smallest order whose iso-line fit meets
/// `tau_max`, capped at `n_max`.
pub fn select_orders_independent<T: Scalar>(
    map: &TauMap<T>,
    p: Orders,
    tau_max: T,
    n_min: usize,
    n_max: usize,
) -> Result<(Orders, T)> {
    let inner = {
        let mut restricted = TauMap::empty(map.element_id, map.n_max, map.flavor, map.method);
        for (o, v, prov) in map.iter() {
            let v = if o.n1 < p.n1 && o.n2 < p.n2 {
                v
            } else {
                T::infinity()
            };
            restricted.set(o, v, prov)?;
        }
        select_orders(&restricted, tau_max, n_min, n_max)?
    };
    if inner.1 <= tau_max {
        return Ok(inner);
    }
    let pick = |dir: usize| -> Result<usize> {
        let fit = map.fits[dir].ok_or_else(|| {
            Error::MalformedMap(format!("element {} map has no fit {dir}", map.element_id))
        })?;
        Ok((n_min..=n_max)
            .find(|&n| fit.predict(n) <= tau_max)
            .unwrap_or(n_max))
    };
    let o = Orders::new(pick(0)?, pick(1)?);
    Ok((o, map.get(o).unwrap_or_else(T::nan)))
}

/// Per-element orders for one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationPlan<T> {
    pub orders: Vec<Orders>,
    pub tau_max: T,
    pub n_min: usize,
    pub n_max: usize,
    pub total_dofs: usize,
    pub predicted_tau: Vec<T>,
}

pub const PLAN_CSV_HEADER: &str = "element_id,N1,N2,dofs,predicted_tau";

impl<T: Scalar> AdaptationPlan<T> {
    /// One map per element, in element order.
    pub fn build(maps: &[TauMap<T>], tau_max: T, n_min: usize, n_max: usize) -> Result<Self> {
        for (k, m) in maps.iter().enumerate() {
            if m.element_id != k {
                return Err(Error::MalformedMap(format!(
                    "map {k} belongs to element {}",
                    m.element_id
                )));
            }
        }
        let picks: Vec<(Orders, T)> = maps
            .par_iter()
            .map(|m| select_orders(m, tau_max, n_min, n_max))
            .collect::<Result<_>>()?;
        Ok(Self {
            total_dofs: picks.iter().map(|p| dof_count(p.0)).sum(),
            orders: picks.iter().map(|p| p.0).collect(),
            predicted_tau: picks.into_iter().map(|p| p.1).collect(),
            tau_max,
            n_min,
            n_max,
        })
    }

    pub fn all_at(&self, orders: Orders) -> bool {
        self.orders.iter().all(|&o| o == orders)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{PLAN_CSV_HEADER}\n");
        for (id, (o, t)) in self.orders.iter().zip(&self.predicted_tau).enumerate() {
            let _ = writeln!(
                out,
                "{id},{},{},{},{:.9e}",
                o.n1,
                o.n2,
                dof_count(*o),
                t.to_f64_lossy()
            );
        }
        out
    }
}

/// Log-spaced thresholds `lo <= t < hi` with `per_decade` points per decade.
pub fn log_thresholds(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let steps = ((b - a) * per_decade as f64).round() as usize;
    (0..steps)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / steps as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions<T> {
    pub n_min: usize,
    pub n_max: usize,
    /// Re-converge the adapted discretization for each threshold.
    pub resolve: bool,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> Default for SweepOptions<T> {
    fn default() -> Self {
        Self {
            n_min: 1,
            n_max: 10,
            resolve: false,
            solver: SolverOptions::default(),
        }
    }
}

/// Outcome of a re-solve on the adapted orders.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolveOutcome<T> {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_inf: T,
    pub error_l2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub tau_max: T,
    pub plan: AdaptationPlan<T>,
    /// Max over elements of the exact non-isolated truncation error.
    pub achieved_non_isolated: T,
    /// Max over elements of the exact isolated truncation error.
    pub achieved_isolated: T,
    pub resolve: Option<std::result::Result<ResolveOutcome<T>, String>>,
}

impl<T: Scalar> SweepRow<T> {
    pub fn achieved(&self, flavor: Flavor) -> T {
        match flavor {
            Flavor::NonIsolated => self.achieved_non_isolated,
            Flavor::Isolated => self.achieved_isolated,
        }
    }
}

pub const SWEEP_CSV_HEADER: &str =
    "tau_max,total_dofs,achieved_non_isolated,achieved_isolated,all_at_min,all_at_max,resolve_converged,resolve_residual,resolve_error_l2";

pub fn sweep_to_csv<T: Scalar>(rows: &[SweepRow<T>]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let (conv, res, err) = match &r.resolve {
            Some(Ok(o)) => (
                o.converged.to_string(),
                format!("{:.9e}", o.final_residual_inf.to_f64_lossy()),
                format!("{:.9e}", o.error_l2.to_f64_lossy()),
            ),
            Some(Err(_)) => ("error".into(), String::new(), String::new()),
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{:.9e},{},{:.9e},{:.9e},{},{},{conv},{res},{err}",
            r.tau_max.to_f64_lossy(),
            r.plan.total_dofs,
            r.achieved_non_isolated.to_f64_lossy(),
            r.achieved_isolated.to_f64_lossy(),
            r.plan.all_at(Orders::uniform(r.plan.n_min)),
            r.plan.all_at(Orders::uniform(r.plan.n_max)),
        );
    }
    out
}

/// For every threshold: plan from `maps`, then measure the exact truncation
/// error of the adapted discretization in both flavors. The optional
/// re-solve starts from `reference` interpolated (or extended) to the plan.
pub fn sweep_thresholds<T: Scalar>(
    est: &Estimator<'_, T>,
    maps: &[TauMap<T>],
    thresholds: &[T],
    reference: Option<&GlobalSolution<T>>,
    options: &SweepOptions<T>,
) -> Result<Vec<SweepRow<T>>> {
    if thresholds.iter().any(|t| !(*t > T::zero())) {
        return Err(Error::MalformedMap("thresholds must be positive".into()));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::MalformedMap(
            "thresholds must be sorted ascending".into(),
        ));
    }
    thresholds
        .iter()
        .map(|&tau_max| {
            let plan = AdaptationPlan::build(maps, tau_max, options.n_min, options.n_max)?;
            let achieved = |flavor| -> Result<T> {
                Ok(est
                    .exact_tau_field(&plan.orders, flavor)?
                    .iter()
                    .fold(T::zero(), |m, s| m.max(s.value(est.norm))))
            };
            let achieved_non_isolated = achieved(Flavor::NonIsolated)?;
            let achieved_isolated = achieved(Flavor::Isolated)?;
            let resolve = if options.resolve {
                Some(
                    resolve_plan(est, &plan, reference, &options.solver).map_err(|e| e.to_string()),
                )
            } else {
                None
            };
            Ok(SweepRow {
                tau_max,
                plan,
                achieved_non_isolated,
                achieved_isolated,
                resolve,
            })
        })
        .collect()
}

fn resolve_plan<T: Scalar>(
    est: &Estimator<'_, T>,
    plan: &AdaptationPlan<T>,
    reference: Option<&GlobalSolution<T>>,
    solver: &SolverOptions<T>,
) -> Result<ResolveOutcome<T>> {
    let disc = est.disc;
    let mesh = est.mesh.with_orders(&plan.orders)?;
    let initial = match reference {
        Some(q) => GlobalSolution {
            elements: q
                .elements
                .iter()
                .zip(&plan.orders)
                .map(|(e, &o)| {
                    let ix = disc.cache().interpolation(e.orders.n1, o.n1)?;
                    let iy = disc.cache().interpolation(e.orders.n2, o.n2)?;
                    crate::operator::ElementSolution::new(
                        o,
                        crate::basis::TransferMatrix::apply_tensor(&ix, &iy, &e.values),
                    )
                })
                .collect::<Result<_>>()?,
        },
        None => disc.sample_exact(&mesh)?,
    };
    let (q, report) = solve_steady(disc, &mesh, initial, solver)?;
    Ok(ResolveOutcome {
        converged: report.converged,
        iterations: report.iterations,
        final_residual_inf: report.final_residual_inf,
        error_l2: discretization_error(disc, &q, &mesh)?.l2,
    })
}
