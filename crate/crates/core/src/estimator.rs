//! Fine-to-coarse truncation-error estimation: coarsen a converged order-P
//! solution on one element, evaluate the coarse operator, and collect the
//! directional series that the high-order map extrapolates.
//!
//! Coarsening always touches a single element; every other element stays at
//! its native orders, so the estimate only sees interface data from
//! well-resolved neighbours.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Direction, Mesh, Orders};
use crate::operator::{Discretization, ElementSolution, Flavor, GlobalSolution, TauNorm};
use crate::physics::{euler_flux, FluxPair, State};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    Estimated,
    Exact,
    Directional1,
    Directional2,
    Composed,
}

/// Norms of one element's truncation-error functional at one order pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSample<T> {
    pub element_id: usize,
    pub orders: Orders,
    /// Max norm (mass-weighted or pointwise, per the estimator's [`TauNorm`]).
    pub value_inf: T,
    pub value_l2: T,
    pub flavor: Flavor,
    pub kind: SampleKind,
}

impl<T: Scalar> TauSample<T> {
    /// The value a map should use under `norm`.
    pub fn value(&self, norm: TauNorm) -> T {
        match norm {
            TauNorm::L2 => self.value_l2,
            TauNorm::MassWeightedMax | TauNorm::PointwiseMax => self.value_inf,
        }
    }
}

/// `tau_i(N_i)` for `N_i = 1..P_i-1` with the other direction held at `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalSeries<T> {
    pub element_id: usize,
    pub direction: Direction,
    pub flavor: Flavor,
    /// Reference orders the series was coarsened from.
    pub reference: Orders,
    /// `(N_i, value)` with `N_i` strictly increasing.
    pub samples: Vec<(usize, T)>,
    /// Pointwise (mass-divided) nodal truncation error behind each sample,
    /// on the `(N_i, P_j)` grid. Empty when the series came from elsewhere.
    pub fields: Vec<ElementSolution<T>>,
}

impl<T: Scalar> DirectionalSeries<T> {
    pub fn reference_order(&self) -> usize {
        self.reference.get(self.direction)
    }

    pub fn value_at(&self, n: usize) -> Option<T> {
        self.samples.iter().find(|s| s.0 == n).map(|s| s.1)
    }

    pub fn field_at(&self, n: usize) -> Option<&ElementSolution<T>> {
        let k = self.samples.iter().position(|s| s.0 == n)?;
        self.fields.get(k)
    }

    /// Value at `n`, with the reference order itself contributing zero
    /// (no coarsening in this direction).
    pub fn component(&self, n: usize) -> Result<T> {
        if n == self.reference_order() {
            return Ok(T::zero());
        }
        self.value_at(n).ok_or(Error::OutsideSeries {
            direction: self.direction.index(),
            order: n,
            max: self.reference_order().saturating_sub(1),
        })
    }
}

/// Replaces one element's values by their interpolant at `target`; all
/// other elements are left untouched.
pub fn coarsen_solution<T: Scalar>(
    disc: &Discretization<T>,
    q: &GlobalSolution<T>,
    element_id: usize,
    target: Orders,
) -> Result<GlobalSolution<T>> {
    let e = q
        .elements
        .get(element_id)
        .ok_or_else(|| Error::Mismatch(format!("no element {element_id}")))?;
    let coarse = disc.interpolate_element(e, element_id, target)?;
    let mut out = q.clone();
    out.elements[element_id] = coarse;
    Ok(out)
}

/// Norm-level composition `||tau_1(N1)|| + ||tau_2(N2)||`, an upper bound
/// of the field-level sum. Used where only norms exist (extrapolated cells).
///
/// The series do not have to be in any particular argument order; each is
/// matched to the target component of its own direction.
pub fn compose_norms<T: Scalar>(
    a: &DirectionalSeries<T>,
    b: &DirectionalSeries<T>,
    target: Orders,
) -> Result<TauSample<T>> {
    if a.direction == b.direction || a.element_id != b.element_id {
        return Err(Error::Mismatch(
            "composition needs one series per direction for the same element".into(),
        ));
    }
    let value = a.component(target.get(a.direction))? + b.component(target.get(b.direction))?;
    Ok(TauSample {
        element_id: a.element_id,
        orders: target,
        value_inf: value,
        value_l2: T::nan(),
        flavor: a.flavor,
        kind: SampleKind::Composed,
    })
}

/// Runs estimates against one mesh with one norm convention.
#[derive(Debug, Clone, Copy)]
pub struct Estimator<'a, T: Scalar> {
    pub disc: &'a Discretization<T>,
    pub mesh: &'a Mesh<T>,
    pub norm: TauNorm,
}

impl<'a, T: Scalar> Estimator<'a, T> {
    pub fn new(disc: &'a Discretization<T>, mesh: &'a Mesh<T>) -> Self {
        Self {
            disc,
            mesh,
            norm: TauNorm::default(),
        }
    }

    pub fn with_norm(mut self, norm: TauNorm) -> Self {
        self.norm = norm;
        self
    }

    fn max_norm(&self) -> TauNorm {
        match self.norm {
            TauNorm::PointwiseMax => TauNorm::PointwiseMax,
            _ => TauNorm::MassWeightedMax,
        }
    }

    /// Evaluates the operator on `q` and returns the norms of one element.
    fn sample(
        &self,
        q: &GlobalSolution<T>,
        element_id: usize,
        flavor: Flavor,
        kind: SampleKind,
    ) -> Result<TauSample<T>> {
        let out = self.disc.residual(q, self.mesh, flavor)?;
        self.sample_from(&out.elements[element_id], element_id, flavor, kind)
    }

    fn sample_from(
        &self,
        values: &ElementSolution<T>,
        element_id: usize,
        flavor: Flavor,
        kind: SampleKind,
    ) -> Result<TauSample<T>> {
        let el = self.mesh.element(element_id)?;
        Ok(TauSample {
            element_id,
            orders: values.orders,
            value_inf: self.disc.element_norm(values, el, true, self.max_norm())?,
            value_l2: self.disc.element_norm(values, el, true, TauNorm::L2)?,
            flavor,
            kind,
        })
    }

    /// `[M]S - F(I_P^N Q^P)` on one element, neighbours at their native orders.
    pub fn estimate_tau(
        &self,
        q_p: &GlobalSolution<T>,
        element_id: usize,
        target: Orders,
        flavor: Flavor,
    ) -> Result<TauSample<T>> {
        let coarse = coarsen_solution(self.disc, q_p, element_id, target)?;
        self.sample(&coarse, element_id, flavor, SampleKind::Estimated)
    }

    /// Like [`Self::estimate_tau`], also returning the pointwise nodal field.
    pub fn estimate_with_field(
        &self,
        q_p: &GlobalSolution<T>,
        element_id: usize,
        target: Orders,
        flavor: Flavor,
    ) -> Result<(TauSample<T>, ElementSolution<T>)> {
        let coarse = coarsen_solution(self.disc, q_p, element_id, target)?;
        let out = self.disc.residual(&coarse, self.mesh, flavor)?;
        let values = &out.elements[element_id];
        let sample = self.sample_from(values, element_id, flavor, SampleKind::Estimated)?;
        let mass = self
            .disc
            .mass_matrix(self.mesh.element(element_id)?, target)?;
        let field = values
            .values
            .iter()
            .zip(&mass)
            .map(|(v, &m)| *v * (T::one() / m))
            .collect();
        Ok((sample, ElementSolution::new(target, field)?))
    }

    /// Directional composition `tau(N1,N2) ~ tau_1(N1) + tau_2(N2)` of the
    /// directional nodal fields, both interpolated onto the `(N1, N2)` grid,
    /// then normed like a direct estimate. A component whose order equals
    /// the reference order contributes nothing.
    ///
    /// Falls back to [`compose_norms`] when either series carries no fields.
    pub fn compose_directional(
        &self,
        a: &DirectionalSeries<T>,
        b: &DirectionalSeries<T>,
        target: Orders,
    ) -> Result<TauSample<T>> {
        let norm_level = compose_norms(a, b, target)?;
        if a.fields.is_empty() || b.fields.is_empty() {
            return Ok(norm_level);
        }
        let cache = self.disc.cache();
        let mut sum = vec![State::zero(); target.node_count()];
        for s in [a, b] {
            let n = target.get(s.direction);
            if n == s.reference_order() {
                continue;
            }
            let field = s.field_at(n).ok_or(Error::OutsideSeries {
                direction: s.direction.index(),
                order: n,
                max: s.reference_order() - 1,
            })?;
            let ix = cache.interpolation(field.orders.n1, target.n1)?;
            let iy = cache.interpolation(field.orders.n2, target.n2)?;
            let on_target = crate::basis::TransferMatrix::apply_tensor(&ix, &iy, &field.values);
            for (acc, v) in sum.iter_mut().zip(on_target) {
                *acc += v;
            }
        }
        let el = self.mesh.element(a.element_id)?;
        let mass = self.disc.mass_matrix(el, target)?;
        let weighted = ElementSolution::new(
            target,
            sum.iter().zip(&mass).map(|(v, &m)| *v * m).collect(),
        )?;
        self.sample_from(&weighted, a.element_id, a.flavor, SampleKind::Composed)
    }

    /// Operator applied to nodal samples of the exact solution: the element
    /// at `target`, everything else at the mesh's orders.
    pub fn exact_tau(
        &self,
        element_id: usize,
        target: Orders,
        flavor: Flavor,
    ) -> Result<TauSample<T>> {
        let mut orders = self.mesh.orders();
        *orders
            .get_mut(element_id)
            .ok_or_else(|| Error::Mismatch(format!("no element {element_id}")))? = target;
        let q = self.disc.sample_exact_at(self.mesh, &orders)?;
        self.sample(&q, element_id, flavor, SampleKind::Exact)
    }

    /// Exact truncation error of every element at the given per-element orders.
    pub fn exact_tau_field(&self, orders: &[Orders], flavor: Flavor) -> Result<Vec<TauSample<T>>> {
        let q = self.disc.sample_exact_at(self.mesh, orders)?;
        let out = self.disc.residual(&q, self.mesh, flavor)?;
        out.elements
            .iter()
            .enumerate()
            .map(|(id, e)| self.sample_from(e, id, flavor, SampleKind::Exact))
            .collect()
    }

    /// Per-element norms of the operator at an arbitrary global solution.
    pub fn residual_field(
        &self,
        q: &GlobalSolution<T>,
        flavor: Flavor,
    ) -> Result<Vec<TauSample<T>>> {
        let out = self.disc.residual(q, self.mesh, flavor)?;
        out.elements
            .iter()
            .enumerate()
            .map(|(id, e)| self.sample_from(e, id, flavor, SampleKind::Estimated))
            .collect()
    }

    /// The two directional series; costs `(P1-1) + (P2-1)` operator evaluations.
    pub fn directional_series(
        &self,
        q_p: &GlobalSolution<T>,
        element_id: usize,
        flavor: Flavor,
    ) -> Result<(DirectionalSeries<T>, DirectionalSeries<T>)> {
        let reference = q_p
            .elements
            .get(element_id)
            .ok_or_else(|| Error::Mismatch(format!("no element {element_id}")))?
            .orders;
        let mut series = Direction::BOTH.map(|direction| DirectionalSeries {
            element_id,
            direction,
            flavor,
            reference,
            samples: Vec::new(),
            fields: Vec::new(),
        });
        for s in &mut series {
            let p = reference.get(s.direction);
            let results: Vec<(usize, T, ElementSolution<T>)> = (1..p)
                .into_par_iter()
                .map(|n| {
                    let target = reference.with(s.direction, n);
                    let (sample, field) =
                        self.estimate_with_field(q_p, element_id, target, flavor)?;
                    Ok((n, sample.value(self.norm), field))
                })
                .collect::<Result<_>>()?;
            for (n, v, f) in results {
                s.samples.push((n, v));
                s.fields.push(f);
            }
        }
        let [s1, s2] = series;
        Ok((s1, s2))
    }

    /// Estimates at every `(N1, N2)` with `N_i <= P_i - 1`; costs
    /// `(P1-1)(P2-1)` operator evaluations.
    pub fn full_product_samples(
        &self,
        q_p: &GlobalSolution<T>,
        element_id: usize,
        flavor: Flavor,
    ) -> Result<Vec<TauSample<T>>> {
        let p = q_p
            .elements
            .get(element_id)
            .ok_or_else(|| Error::Mismatch(format!("no element {element_id}")))?
            .orders;
        let targets: Vec<Orders> = (1..p.n2)
            .flat_map(|n2| (1..p.n1).map(move |n1| Orders::new(n1, n2)))
            .collect();
        targets
            .into_par_iter()
            .map(|t| self.estimate_tau(q_p, element_id, t, flavor))
            .collect()
    }

    /// Exact samples over `1..=n_max` in both directions.
    pub fn exact_samples(
        &self,
        element_id: usize,
        n_max: usize,
        flavor: Flavor,
    ) -> Result<Vec<TauSample<T>>> {
        let targets: Vec<Orders> = (1..=n_max)
            .flat_map(|n2| (1..=n_max).map(move |n1| Orders::new(n1, n2)))
            .collect();
        targets
            .into_par_iter()
            .map(|t| self.exact_tau(element_id, t, flavor))
            .collect()
    }

    /// `(div eps_F, phi_ij)` for the advective flux interpolation error,
    /// with the order `target + 6` interpolant standing in for the exact flux.
    ///
    /// Returns the max over basis functions and variables, in the same
    /// max-norm convention as the estimator.
    pub fn isolated_interpolation_oracle(&self, element_id: usize, target: Orders) -> Result<T> {
        let disc = self.disc;
        let el = self.mesh.element(element_id)?;
        let cache = disc.cache();
        let fine = Orders::new(target.n1 + 6, target.n2 + 6);
        let gamma = disc.gas.gamma;

        let fluxes = |orders: Orders| -> Result<(Vec<State<T>>, Vec<State<T>>)> {
            let q = disc.sample_exact_element(el, orders)?;
            let pairs: Vec<FluxPair<T>> = q.values.iter().map(|s| euler_flux(s, gamma)).collect();
            Ok((
                pairs.iter().map(|p| p.f).collect(),
                pairs.iter().map(|p| p.g).collect(),
            ))
        };
        let divergence =
            |orders: Orders, f: &[State<T>], g: &[State<T>]| -> Result<Vec<State<T>>> {
                let bx = cache.basis(orders.n1)?;
                let by = cache.basis(orders.n2)?;
                let (nx, ny) = (orders.n1 + 1, orders.n2 + 1);
                let mut div = vec![State::zero(); nx * ny];
                for j in 0..ny {
                    for i in 0..nx {
                        let mut a = State::zero();
                        for k in 0..nx {
                            a += f[k + nx * j] * bx.diff_matrix[i * nx + k];
                        }
                        let mut b = State::zero();
                        for k in 0..ny {
                            b += g[i + nx * k] * by.diff_matrix[j * ny + k];
                        }
                        div[i + nx * j] = a * el.metric_scale.0 + b * el.metric_scale.1;
                    }
                }
                Ok(div)
            };

        let (ff, gf) = fluxes(fine)?;
        let div_fine = divergence(fine, &ff, &gf)?;
        let (fc, gc) = fluxes(target)?;
        let div_coarse = divergence(target, &fc, &gc)?;
        let ix = cache.interpolation(target.n1, fine.n1)?;
        let iy = cache.interpolation(target.n2, fine.n2)?;
        let div_coarse_on_fine = crate::basis::TransferMatrix::apply_tensor(&ix, &iy, &div_coarse);
        let mass_fine = disc.mass_matrix(el, fine)?;
        let weighted: Vec<State<T>> = div_fine
            .iter()
            .zip(&div_coarse_on_fine)
            .zip(&mass_fine)
            .map(|((a, b), &m)| (*a - *b) * m)
            .collect();

        // Rows of `ix`/`iy` hold phi_i at the fine nodes.
        let (cx, cy) = (target.n1 + 1, target.n2 + 1);
        let (fx, fy) = (fine.n1 + 1, fine.n2 + 1);
        let mass_coarse = disc.mass_matrix(el, target)?;
        let mut result = T::zero();
        for j in 0..cy {
            for i in 0..cx {
                let mut acc = State::zero();
                for l in 0..fy {
                    let phi_j = iy.entry(l, j);
                    for k in 0..fx {
                        acc += weighted[k + fx * l] * (ix.entry(k, i) * phi_j);
                    }
                }
                let v = match self.norm {
                    TauNorm::PointwiseMax => acc * (T::one() / mass_coarse[i + cx * j]),
                    _ => acc,
                };
                result = result.max(v.max_abs());
            }
        }
        Ok(result)
    }
}
