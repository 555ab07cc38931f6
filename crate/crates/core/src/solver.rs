//! Explicit pseudo-time marching to steady state, discretization-error
//! diagnostics, residual-history CSV and the solution snapshot format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Orders};
use crate::operator::{Discretization, ElementSolution, Flavor, GlobalSolution};
use crate::physics::State;
use crate::scalar::Scalar;

/// Carpenter-Kennedy five-stage, fourth-order, 2N-storage coefficients.
const LSRK_A: [f64; 5] = [
    0.0,
    -567_301_805_773.0 / 1_357_537_059_087.0,
    -2_404_267_990_393.0 / 2_016_746_695_238.0,
    -3_550_918_686_646.0 / 2_091_501_179_385.0,
    -1_275_806_237_668.0 / 842_570_457_699.0,
];
const LSRK_B: [f64; 5] = [
    1_432_997_174_477.0 / 9_575_080_441_755.0,
    5_161_836_677_717.0 / 13_612_068_292_357.0,
    1_720_146_321_549.0 / 2_090_206_949_498.0,
    3_134_564_353_537.0 / 4_481_467_310_338.0,
    2_277_821_191_437.0 / 14_882_151_754_819.0,
];

/// Knobs for [`solve_steady`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<T> {
    /// Stop once the max-norm of `[M]S - F(Q)` falls to this value.
    pub tolerance: T,
    pub max_iterations: usize,
    pub cfl: T,
    /// Record every `history_stride`-th residual (0 disables the history).
    pub history_stride: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-10),
            max_iterations: 200_000,
            cfl: T::lit(0.8),
            history_stride: 10,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > T::zero()) || !(self.cfl > T::zero()) {
            return Err(Error::Mismatch(format!(
                "tolerance ({}) and cfl ({}) must be positive",
                self.tolerance, self.cfl
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub iterations: usize,
    pub final_residual_inf: T,
    pub converged: bool,
    pub wall_time: f64,
    pub time_step: T,
    /// `(iteration, residual_inf)` samples.
    pub history: Vec<(usize, T)>,
}

impl<T: Scalar> SolveReport<T> {
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,residual_inf\n");
        for (it, r) in &self.history {
            let _ = writeln!(out, "{it},{:.9e}", r.to_f64_lossy());
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Global explicit time step from the advective and viscous limits on the
/// `h / N^2` node-spacing scale.
pub fn stable_time_step<T: Scalar>(
    disc: &Discretization<T>,
    q: &GlobalSolution<T>,
    mesh: &Mesh<T>,
    cfl: T,
) -> T {
    let gas = &disc.gas;
    let gamma = gas.gamma;
    let diffusivity_factor = T::lit(4.0 / 3.0).max(gamma / gas.prandtl) * gas.mu / gas.reynolds;
    q.elements
        .par_iter()
        .zip(mesh.elements.par_iter())
        .map(|(e, el)| {
            let n1 = T::from_usize_lossy(e.orders.n1 * e.orders.n1);
            let n2 = T::from_usize_lossy(e.orders.n2 * e.orders.n2);
            let dx = el.cell_size.0 / n1;
            let dy = el.cell_size.1 / n2;
            let mut dt = T::infinity();
            for s in &e.values {
                let (u, v) = s.velocity();
                let c = s.sound_speed(gamma);
                let advective = cfl / ((u.abs() + c) / dx + (v.abs() + c) / dy);
                let nu = diffusivity_factor / s.rho;
                let viscous =
                    T::lit(0.5) * cfl / (nu * (T::one() / (dx * dx) + T::one() / (dy * dy)));
                dt = dt.min(advective).min(viscous);
            }
            dt
        })
        .reduce(T::infinity, T::min)
}

fn mass_weighted_inf<T: Scalar>(pointwise: &[Vec<State<T>>], mass: &[Vec<T>]) -> T {
    pointwise
        .par_iter()
        .zip(mass.par_iter())
        .map(|(r, m)| {
            r.iter()
                .zip(m)
                .fold(T::zero(), |acc, (s, &w)| acc.max(s.max_abs() * w))
        })
        .reduce(T::zero, T::max)
}

/// Marches `dQ/dt = M^-1([M]S - F(Q))` with the non-isolated operator until
/// `||[M]S - F(Q)||_inf <= tolerance` or the iteration budget runs out.
///
/// Non-convergence is reported through `converged = false`; loss of
/// admissibility or a non-finite residual aborts with an error.
pub fn solve_steady<T: Scalar>(
    disc: &Discretization<T>,
    mesh: &Mesh<T>,
    initial: GlobalSolution<T>,
    options: &SolverOptions<T>,
) -> Result<(GlobalSolution<T>, SolveReport<T>)> {
    options.validate()?;
    let start = Instant::now();
    let mut q = initial;
    let mass: Vec<Vec<T>> = mesh
        .elements
        .iter()
        .zip(&q.elements)
        .map(|(el, e)| disc.mass_matrix(el, e.orders))
        .collect::<Result<_>>()?;
    let dt = stable_time_step(disc, &q, mesh, options.cfl);
    let mut du: Vec<Vec<State<T>>> = q
        .elements
        .iter()
        .map(|e| vec![State::zero(); e.values.len()])
        .collect();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut residual;
    loop {
        let r = disc.pointwise_residual(&q, mesh, Flavor::NonIsolated)?;
        residual = mass_weighted_inf(&r, &mass);
        if !residual.is_finite() {
            return Err(Error::Inadmissible {
                rho: f64::NAN,
                pressure: f64::NAN,
            });
        }
        if options.history_stride > 0 && iterations % options.history_stride == 0 {
            history.push((iterations, residual));
        }
        if residual <= options.tolerance || iterations >= options.max_iterations {
            break;
        }

        let mut stage_residual = Some(r);
        for (&a, &b) in LSRK_A.iter().zip(&LSRK_B) {
            let r = match stage_residual.take() {
                Some(r) => r,
                None => disc.pointwise_residual(&q, mesh, Flavor::NonIsolated)?,
            };
            let (a, b) = (T::lit(a), T::lit(b));
            q.elements
                .par_iter_mut()
                .zip(du.par_iter_mut())
                .zip(r.par_iter())
                .for_each(|((e, d), r)| {
                    for ((qv, dv), &rv) in e.values.iter_mut().zip(d.iter_mut()).zip(r) {
                        *dv = *dv * a + rv * dt;
                        *qv += *dv * b;
                    }
                });
        }
        iterations += 1;
    }
    if options.history_stride > 0 && history.last().map(|h| h.0) != Some(iterations) {
        history.push((iterations, residual));
    }

    let report = SolveReport {
        iterations,
        final_residual_inf: residual,
        converged: residual <= options.tolerance,
        wall_time: start.elapsed().as_secs_f64(),
        time_step: dt,
        history,
    };
    Ok((q, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorNorms<T> {
    pub l2: T,
    pub linf: T,
    pub per_element_linf: Vec<T>,
}

/// Error against the exact state on an order `N + 4` Gauss grid per element.
pub fn discretization_error<T: Scalar>(
    disc: &Discretization<T>,
    q: &GlobalSolution<T>,
    mesh: &Mesh<T>,
) -> Result<ErrorNorms<T>> {
    discretization_error_oversampled(disc, q, mesh, 4)
}

/// Same as [`discretization_error`] with a chosen oversampling; `0` measures
/// at the solution's own nodes.
pub fn discretization_error_oversampled<T: Scalar>(
    disc: &Discretization<T>,
    q: &GlobalSolution<T>,
    mesh: &Mesh<T>,
    oversample: usize,
) -> Result<ErrorNorms<T>> {
    if q.len() != mesh.len() {
        return Err(Error::Mismatch(format!(
            "solution has {} elements, mesh has {}",
            q.len(),
            mesh.len()
        )));
    }
    let cache = disc.cache();
    let per: Vec<(T, T)> = q
        .elements
        .par_iter()
        .zip(mesh.elements.par_iter())
        .map(|(e, el)| -> Result<(T, T)> {
            let fine = Orders::new(e.orders.n1 + oversample, e.orders.n2 + oversample);
            let ix = cache.interpolation(e.orders.n1, fine.n1)?;
            let iy = cache.interpolation(e.orders.n2, fine.n2)?;
            let values = crate::basis::TransferMatrix::apply_tensor(&ix, &iy, &e.values);
            let exact = disc.sample_exact_element(el, fine)?;
            let mass = disc.mass_matrix(el, fine)?;
            let mut sq = T::zero();
            let mut inf = T::zero();
            for ((v, x), m) in values.iter().zip(&exact.values).zip(&mass) {
                let d = *x - *v;
                sq = sq + d.sum_squares() * *m;
                inf = inf.max(d.max_abs());
            }
            Ok((sq, inf))
        })
        .collect::<Result<_>>()?;
    Ok(ErrorNorms {
        l2: per.iter().map(|p| p.0).sum::<T>().sqrt(),
        linf: per.iter().fold(T::zero(), |m, p| m.max(p.1)),
        per_element_linf: per.into_iter().map(|p| p.1).collect(),
    })
}

const SNAPSHOT_HEADER: &str = "# dgsem-tau solution v1";

/// Writes per-element orders and nodal values as versioned text.
pub fn write_snapshot<T: Scalar>(q: &GlobalSolution<T>, mut out: impl Write) -> Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    writeln!(out, "elements {}", q.len())?;
    for (id, e) in q.elements.iter().enumerate() {
        writeln!(out, "element {id} {} {}", e.orders.n1, e.orders.n2)?;
        for s in &e.values {
            writeln!(
                out,
                "{:.17e} {:.17e} {:.17e} {:.17e}",
                s.rho.to_f64_lossy(),
                s.rho_u.to_f64_lossy(),
                s.rho_v.to_f64_lossy(),
                s.rho_e.to_f64_lossy()
            )?;
        }
    }
    Ok(())
}

/// Reads the format produced by [`write_snapshot`].
pub fn read_snapshot<T: Scalar>(input: impl BufRead) -> Result<GlobalSolution<T>> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::Snapshot {
                line: 0,
                msg: format!("unexpected end of input, expected {what}"),
            }),
        }
    };
    let bad = |line: usize, msg: &str| Error::Snapshot {
        line,
        msg: msg.to_string(),
    };

    let (n, header) = next("header")?;
    if header.trim() != SNAPSHOT_HEADER {
        return Err(bad(n, "unsupported snapshot header"));
    }
    let (n, count) = next("element count")?;
    let count: usize = count
        .trim()
        .strip_prefix("elements ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| bad(n, "expected `elements <count>`"))?;

    let mut elements = Vec::with_capacity(count);
    for expected in 0..count {
        let (n, head) = next("element header")?;
        let parts: Vec<usize> = head
            .trim()
            .strip_prefix("element ")
            .map(|r| {
                r.split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect()
            })
            .unwrap_or_default();
        if parts.len() != 3 || parts[0] != expected || parts[1] < 1 || parts[2] < 1 {
            return Err(bad(n, "expected `element <id> <N1> <N2>`"));
        }
        let orders = Orders::new(parts[1], parts[2]);
        let mut values = Vec::with_capacity(orders.node_count());
        for _ in 0..orders.node_count() {
            let (n, row) = next("nodal values")?;
            let v: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(n, "non-numeric nodal value"))?;
            if v.len() != 4 {
                return Err(bad(n, "expected four conserved variables"));
            }
            values.push(State::new(
                T::lit(v[0]),
                T::lit(v[1]),
                T::lit(v[2]),
                T::lit(v[3]),
            ));
        }
        elements.push(ElementSolution::new(orders, values)?);
    }
    Ok(GlobalSolution { elements })
}
