use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use dgsem_tau::adaptation::sweep_to_csv;
use dgsem_tau::error_map::{map_from_samples, maps_to_csv};
use dgsem_tau::solver::{read_snapshot, write_snapshot};
use dgsem_tau::*;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::CliError;

pub struct Reference {
    pub disc: Discretization64,
    pub mesh: Mesh64,
    pub q: GlobalSolution64,
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.join(name))
}

fn write_text(cfg: &RunConfig, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = out_path(cfg, name)?;
    fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn write_solution(cfg: &RunConfig, name: &str, q: &GlobalSolution64) -> Result<(), CliError> {
    let path = out_path(cfg, name)?;
    write_snapshot(q, BufWriter::new(File::create(&path)?))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Converges the order-P reference, writing its snapshot and residual history.
pub fn solve(cfg: &RunConfig) -> Result<Reference, CliError> {
    let disc = Discretization::manufactured(cfg.gas());
    let mesh = build_cartesian_mesh(cfg.nx, cfg.ny, cfg.reference_orders())?;
    let initial = disc.sample_exact(&mesh)?;
    let (q, report) = solve_steady(&disc, &mesh, initial, &cfg.solver())?;
    println!(
        "{}x{} mesh, P = {}: |R|_inf = {:.3e} after {} iterations ({:.1} s, dt = {:.3e})",
        cfg.nx,
        cfg.ny,
        cfg.reference_orders(),
        report.final_residual_inf,
        report.iterations,
        report.wall_time,
        report.time_step
    );
    let err = discretization_error(&disc, &q, &mesh)?;
    println!(
        "discretization error: L2 {:.3e}, Linf {:.3e}",
        err.l2, err.linf
    );
    let history = out_path(cfg, "residual_history.csv")?;
    report.write_history_csv(&history)?;
    println!("wrote {}", history.display());
    write_solution(cfg, "solution.dat", &q)?;
    if !report.converged {
        return Err(CliError::NotConverged(format!(
            "residual {:.3e} above tolerance {:.1e} after {} iterations",
            report.final_residual_inf, cfg.tolerance, report.iterations
        )));
    }
    Ok(Reference { disc, mesh, q })
}

/// Loads a snapshot as the reference, or solves for one.
pub fn reference(cfg: &RunConfig, snapshot: Option<&Path>) -> Result<Reference, CliError> {
    let Some(path) = snapshot else {
        return solve(cfg);
    };
    let q: GlobalSolution64 = read_snapshot(BufReader::new(File::open(path)?))?;
    let mesh = build_cartesian_mesh(cfg.nx, cfg.ny, OrderLayout::PerElement(q.orders()))?;
    println!("loaded {} ({} elements)", path.display(), q.len());
    Ok(Reference {
        disc: Discretization::manufactured(cfg.gas()),
        mesh,
        q,
    })
}

fn build_map(
    est: &Estimator<'_, f64>,
    q: &GlobalSolution64,
    id: usize,
    flavor: Flavor,
    method: MapMethod,
    cfg: &RunConfig,
) -> Result<TauMap64, CliError> {
    let p = q.elements[id].orders;
    Ok(match method {
        MapMethod::HighOrder => {
            let (s1, s2) = est.directional_series(q, id, flavor)?;
            build_map_high_order(&s1, &s2, cfg.n_max, cfg.fit_window(), Some(est))?
        }
        MapMethod::LowOrder => {
            let samples = est.full_product_samples(q, id, flavor)?;
            let inner = build_map_full_product(&samples, cfg.n_max, est.norm)?;
            build_map_low_order(&inner, p, cfg.n_max, cfg.fit_window())?
        }
        MapMethod::FullProduct => build_map_full_product(
            &est.full_product_samples(q, id, flavor)?,
            cfg.n_max,
            est.norm,
        )?,
        MapMethod::Exact => map_from_samples(
            &est.exact_samples(id, cfg.n_max, flavor)?,
            cfg.n_max,
            MapMethod::Exact,
            Provenance::Exact,
            est.norm,
        )?,
    })
}

fn all_maps(r: &Reference, cfg: &RunConfig, flavor: Flavor) -> Result<Vec<TauMap64>, CliError> {
    let est = Estimator::new(&r.disc, &r.mesh).with_norm(cfg.norm()?);
    let method = cfg.map_method()?;
    (0..r.mesh.len())
        .into_par_iter()
        .map(|id| build_map(&est, &r.q, id, flavor, method, cfg))
        .collect()
}

pub fn map(cfg: &RunConfig, snapshot: Option<&Path>) -> Result<(), CliError> {
    let r = reference(cfg, snapshot)?;
    let id = match cfg.element {
        Some(id) if id < r.mesh.len() => id,
        Some(id) => return Err(CliError::Config(format!("no element {id}"))),
        None => r
            .mesh
            .locate(0.5, 0.5)
            .ok_or_else(|| CliError::Config("peak lies outside the mesh".into()))?,
    };
    let est = Estimator::new(&r.disc, &r.mesh).with_norm(cfg.norm()?);
    let methods = [
        MapMethod::Exact,
        MapMethod::HighOrder,
        MapMethod::LowOrder,
        MapMethod::FullProduct,
    ];
    let mut maps = Vec::new();
    let mut fits = String::from("flavor,method,direction,slope,intercept,r_squared,n_points\n");
    for flavor in Flavor::BOTH {
        for method in methods {
            let m = build_map(&est, &r.q, id, flavor, method, cfg)?;
            for (dir, fit) in m.fits.iter().enumerate() {
                if let Some(f) = fit {
                    let _ = writeln!(
                        fits,
                        "{flavor},{},{},{:.9e},{:.9e},{:.9e},{}",
                        method.as_str(),
                        dir + 1,
                        f.slope,
                        f.intercept,
                        f.r_squared,
                        f.n_points
                    );
                }
            }
            maps.push(m);
        }
    }
    println!(
        "element {id}: {} maps up to order {}",
        maps.len(),
        cfg.n_max
    );
    write_text(cfg, &format!("map_element{id}.csv"), &maps_to_csv(&maps))?;
    write_text(cfg, &format!("fits_element{id}.csv"), &fits)?;
    Ok(())
}

fn plans_csv(rows: &[SweepRow<f64>]) -> String {
    let mut out = String::from("tau_max,element_id,N1,N2,dofs,predicted_tau\n");
    for r in rows {
        for (id, (o, t)) in r.plan.orders.iter().zip(&r.plan.predicted_tau).enumerate() {
            let _ = writeln!(
                out,
                "{:.9e},{id},{},{},{},{t:.9e}",
                r.tau_max,
                o.n1,
                o.n2,
                dof_count(*o)
            );
        }
    }
    out
}

fn run_sweep(
    cfg: &RunConfig,
    snapshot: Option<&Path>,
    thresholds: &[f64],
) -> Result<Vec<SweepRow<f64>>, CliError> {
    let r = reference(cfg, snapshot)?;
    let flavor = cfg.flavor()?;
    let maps = all_maps(&r, cfg, flavor)?;
    println!(
        "built {} {} maps from the {flavor} estimator",
        maps.len(),
        cfg.map_method()?.as_str()
    );
    let est = Estimator::new(&r.disc, &r.mesh).with_norm(cfg.norm()?);
    let opts = SweepOptions {
        n_min: cfg.n_min,
        n_max: cfg.n_max,
        resolve: cfg.resolve,
        solver: cfg.solver(),
    };
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let row = sweep_thresholds(&est, &maps, &[t], Some(&r.q), &opts)?.remove(0);
        eprintln!(
            "tau_max {t:.3e}: {} DOFs, achieved non-isolated {:.3e}, isolated {:.3e}",
            row.plan.total_dofs, row.achieved_non_isolated, row.achieved_isolated
        );
        rows.push(row);
    }
    Ok(rows)
}

fn check_resolves(rows: &[SweepRow<f64>]) -> Result<(), CliError> {
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| match &r.resolve {
            Some(Ok(o)) if o.converged => None,
            Some(Ok(_)) => Some(format!("{:.3e} (not converged)", r.tau_max)),
            Some(Err(e)) => Some(format!("{:.3e} ({e})", r.tau_max)),
            None => None,
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "re-solve failed at tau_max {}",
            failed.join(", ")
        )))
    }
}

pub fn adapt(cfg: &RunConfig, snapshot: Option<&Path>) -> Result<(), CliError> {
    let rows = run_sweep(cfg, snapshot, &[cfg.tau_max])?;
    let row = &rows[0];
    println!(
        "tau_max {:.3e}: {} DOFs; achieved non-isolated {:.3e}, isolated {:.3e}",
        row.tau_max, row.plan.total_dofs, row.achieved_non_isolated, row.achieved_isolated
    );
    if let Some(Ok(o)) = &row.resolve {
        println!(
            "re-solve: converged {} after {} iterations, |R|_inf {:.3e}, L2 error {:.3e}",
            o.converged, o.iterations, o.final_residual_inf, o.error_l2
        );
    }
    write_text(cfg, "plan.csv", &row.plan.to_csv())?;
    write_text(cfg, "adapt.csv", &sweep_to_csv(&rows))?;
    check_resolves(&rows)
}

pub fn sweep(cfg: &RunConfig, snapshot: Option<&Path>) -> Result<(), CliError> {
    let thresholds = log_thresholds(
        cfg.threshold_min,
        cfg.threshold_max,
        cfg.thresholds_per_decade,
    );
    let rows = run_sweep(cfg, snapshot, &thresholds)?;
    write_text(cfg, "sweep.csv", &sweep_to_csv(&rows))?;
    write_text(cfg, "sweep_plans.csv", &plans_csv(&rows))?;
    check_resolves(&rows)
}

pub fn verify_source(cfg: &RunConfig, flip_exponent: bool) -> Result<(), CliError> {
    let gas = cfg.gas();
    let check = if flip_exponent {
        check_source(
            &gas,
            cfg.source_points_per_side,
            cfg.source_step,
            flipped_exponent_source,
        )?
    } else {
        check_source(
            &gas,
            cfg.source_points_per_side,
            cfg.source_step,
            manufactured_source,
        )?
    };
    let centre = if flip_exponent {
        flipped_exponent_source(0.5, 0.5, &gas)
    } else {
        manufactured_source(0.5, 0.5, &gas)
    };
    println!(
        "{} points, max mismatch {:.3e}, max |source| {:.3e}, relative {:.3e} (tolerance {:.1e})",
        check.points, check.max_mismatch, check.max_source, check.relative, cfg.source_tolerance
    );
    println!("source at the peak: {:.3e}", centre.max_abs());
    let passed = check.relative <= cfg.source_tolerance;
    write_text(
        cfg,
        "source_check.csv",
        &format!(
            "variant,points,max_mismatch,max_source,relative,tolerance,passed\n{},{},{:.9e},{:.9e},{:.9e},{:.9e},{passed}\n",
            if flip_exponent { "flipped-exponent" } else { "derived" },
            check.points,
            check.max_mismatch,
            check.max_source,
            check.relative,
            cfg.source_tolerance
        ),
    )?;
    if passed {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::CheckFailed(format!(
            "source mismatch {:.3e} exceeds {:.1e}",
            check.relative, cfg.source_tolerance
        )))
    }
}
