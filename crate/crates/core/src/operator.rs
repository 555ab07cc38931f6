//! Discrete DGSEM operators on Legendre-Gauss nodes: mass matrix, BR1
//! gradients, the non-isolated operator with Roe/BR1 interface fluxes and
//! p-nonconforming mortars, and the isolated operator that uses each
//! element's own flux trace.
//!
//! Everything is assembled in strong form: for Gauss collocation with affine
//! maps the weak form integrates exactly by parts, so the element operator is
//! the collocation divergence of the flux interpolant plus a lifting of the
//! jump `F* - F^N . n` at each face.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::{BasisCache, Nodal, NodalBasis};
use crate::error::{Error, Result};
use crate::mesh::{Direction, Element, FaceSide, LocalFace, Mesh, Orders};
use crate::physics::{
    euler_flux, roe_flux_unchecked, viscous_flux, FlowCase, FluxPair, GasParameters,
    ManufacturedCase, State, StateGradient,
};
use crate::scalar::Scalar;

/// Which interface flux the operator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// Roe + BR1 numerical fluxes coupling neighbouring elements.
    NonIsolated,
    /// The element's own interior flux trace; no neighbour data.
    Isolated,
}

impl Flavor {
    pub const BOTH: [Flavor; 2] = [Flavor::NonIsolated, Flavor::Isolated];

    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::NonIsolated => "non-isolated",
            Flavor::Isolated => "isolated",
        }
    }
}

impl std::str::FromStr for Flavor {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "non-isolated" | "nonisolated" => Ok(Flavor::NonIsolated),
            "isolated" => Ok(Flavor::Isolated),
            other => Err(format!("unknown flavor `{other}`")),
        }
    }
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nodal values of one element on its tensor-product Gauss grid, `xi` index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementSolution<T> {
    pub orders: Orders,
    pub values: Vec<State<T>>,
}

impl<T: Scalar> ElementSolution<T> {
    pub fn new(orders: Orders, values: Vec<State<T>>) -> Result<Self> {
        if values.len() != orders.node_count() {
            return Err(Error::Mismatch(format!(
                "{} values for orders {orders}",
                values.len()
            )));
        }
        Ok(Self { orders, values })
    }

    pub fn constant(orders: Orders, q: State<T>) -> Self {
        Self {
            orders,
            values: vec![q; orders.node_count()],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + (self.orders.n1 + 1) * j
    }

    pub fn at(&self, i: usize, j: usize) -> State<T> {
        self.values[self.index(i, j)]
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, s| m.max(s.max_abs()))
    }
}

/// One [`ElementSolution`] per mesh element, in mesh order.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSolution<T> {
    pub elements: Vec<ElementSolution<T>>,
}

impl<T: Scalar> GlobalSolution<T> {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn orders(&self) -> Vec<Orders> {
        self.elements.iter().map(|e| e.orders).collect()
    }

    pub fn uniform(mesh: &Mesh<T>, q: State<T>) -> Self {
        Self {
            elements: mesh
                .elements
                .iter()
                .map(|e| ElementSolution::constant(e.orders, q))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.elements
            .iter()
            .fold(T::zero(), |m, e| m.max(e.max_abs()))
    }
}

/// Output of [`Discretization::spatial_operator`]: `[M]S - F(Q)` per element node.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorOutput<T> {
    pub flavor: Flavor,
    pub mass_weighted: bool,
    pub elements: Vec<ElementSolution<T>>,
}

/// Norm applied to an element's truncation-error functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TauNorm {
    /// Max over nodes and variables of the mass-weighted values.
    #[default]
    MassWeightedMax,
    /// Max over nodes and variables after dividing by the diagonal mass matrix.
    PointwiseMax,
    /// `sqrt(sum_k |r_k|^2 M_k)` of the pointwise values.
    L2,
}

impl std::str::FromStr for TauNorm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "inf" | "max" | "mass-weighted-max" => Ok(TauNorm::MassWeightedMax),
            "pointwise-max" | "pointwise" => Ok(TauNorm::PointwiseMax),
            "l2" => Ok(TauNorm::L2),
            other => Err(format!("unknown norm `{other}`")),
        }
    }
}

/// Element and face geometry plus nodal bases, shared by every operator pass.
#[derive(Debug)]
struct ElementFrame<T: Scalar> {
    bx: Arc<NodalBasis<T>>,
    by: Arc<NodalBasis<T>>,
    /// `2 / hx`, `2 / hy`
    scale: (T, T),
}

/// A discretized steady flow problem: gas model, forcing/boundary case and
/// the cached nodal bases.
pub struct Discretization<T: Scalar> {
    pub gas: GasParameters<T>,
    case: Arc<dyn FlowCase<T>>,
    cache: BasisCache<T>,
    evaluations: AtomicUsize,
}

impl<T: Scalar> std::fmt::Debug for Discretization<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("gas", &self.gas)
            .field("case", &self.case.name())
            .field("max_order", &self.cache.max_order())
            .finish()
    }
}

impl<T: Scalar> Discretization<T> {
    pub fn new(gas: GasParameters<T>, case: Arc<dyn FlowCase<T>>) -> Self {
        Self::with_cache(gas, case, BasisCache::default())
    }

    pub fn with_cache(
        gas: GasParameters<T>,
        case: Arc<dyn FlowCase<T>>,
        cache: BasisCache<T>,
    ) -> Self {
        Self {
            gas,
            case,
            cache,
            evaluations: AtomicUsize::new(0),
        }
    }

    /// The Gaussian-bump manufactured case with the given gas.
    pub fn manufactured(gas: GasParameters<T>) -> Self {
        Self::new(gas, Arc::new(ManufacturedCase { gas }))
    }

    pub fn case(&self) -> &dyn FlowCase<T> {
        self.case.as_ref()
    }

    pub fn cache(&self) -> &BasisCache<T> {
        &self.cache
    }

    /// Number of operator evaluations since construction or the last reset.
    pub fn evaluation_count(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluation_count(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    fn frame(&self, el: &Element<T>, orders: Orders) -> Result<ElementFrame<T>> {
        Ok(ElementFrame {
            bx: self.cache.basis(orders.n1)?,
            by: self.cache.basis(orders.n2)?,
            scale: el.metric_scale,
        })
    }

    /// Physical coordinates of the element's volume nodes at `orders`.
    pub fn node_coordinates(&self, el: &Element<T>, orders: Orders) -> Result<Vec<(T, T)>> {
        let (bx, by) = (self.cache.basis(orders.n1)?, self.cache.basis(orders.n2)?);
        Ok(by
            .nodes
            .iter()
            .flat_map(|&eta| bx.nodes.iter().map(move |&xi| el.to_physical(xi, eta)))
            .collect())
    }

    fn face_coordinates(
        &self,
        el: &Element<T>,
        orders: Orders,
        face: LocalFace,
    ) -> Result<Vec<(T, T)>> {
        let one = T::one();
        let coords = match face {
            LocalFace::West | LocalFace::East => {
                let xi = if face == LocalFace::West { -one } else { one };
                self.cache
                    .basis(orders.n2)?
                    .nodes
                    .iter()
                    .map(|&eta| el.to_physical(xi, eta))
                    .collect()
            }
            LocalFace::South | LocalFace::North => {
                let eta = if face == LocalFace::South { -one } else { one };
                self.cache
                    .basis(orders.n1)?
                    .nodes
                    .iter()
                    .map(|&xi| el.to_physical(xi, eta))
                    .collect()
            }
        };
        Ok(coords)
    }

    /// Diagonal mass matrix `w_i w_j J`, `xi` index fastest.
    pub fn mass_matrix(&self, el: &Element<T>, orders: Orders) -> Result<Vec<T>> {
        let (bx, by) = (self.cache.basis(orders.n1)?, self.cache.basis(orders.n2)?);
        Ok(by
            .weights
            .iter()
            .flat_map(|&wj| bx.weights.iter().map(move |&wi| wi * wj * el.jacobian))
            .collect())
    }

    /// Nodal samples of the case's exact state at `orders`.
    pub fn sample_exact_element(
        &self,
        el: &Element<T>,
        orders: Orders,
    ) -> Result<ElementSolution<T>> {
        let values = self
            .node_coordinates(el, orders)?
            .into_iter()
            .map(|(x, y)| self.case.exact_state(x, y))
            .collect();
        ElementSolution::new(orders, values)
    }

    /// Exact-state samples on every element at the mesh orders.
    pub fn sample_exact(&self, mesh: &Mesh<T>) -> Result<GlobalSolution<T>> {
        self.sample_exact_at(mesh, &mesh.orders())
    }

    pub fn sample_exact_at(&self, mesh: &Mesh<T>, orders: &[Orders]) -> Result<GlobalSolution<T>> {
        if orders.len() != mesh.len() {
            return Err(Error::Mismatch(format!(
                "{} orders for {} elements",
                orders.len(),
                mesh.len()
            )));
        }
        let elements = mesh
            .elements
            .par_iter()
            .zip(orders.par_iter())
            .map(|(el, &o)| self.sample_exact_element(el, o))
            .collect::<Result<Vec<_>>>()?;
        Ok(GlobalSolution { elements })
    }

    fn check_solution(&self, q: &GlobalSolution<T>, mesh: &Mesh<T>) -> Result<()> {
        if q.len() != mesh.len() {
            return Err(Error::Mismatch(format!(
                "solution has {} elements, mesh has {}",
                q.len(),
                mesh.len()
            )));
        }
        for (id, e) in q.elements.iter().enumerate() {
            if e.values.len() != e.orders.node_count() || e.orders.n1 < 1 || e.orders.n2 < 1 {
                return Err(Error::Mismatch(format!(
                    "element {id}: {} values for orders {}",
                    e.values.len(),
                    e.orders
                )));
            }
        }
        Ok(())
    }

    /// Traces of nodal data on the four faces, in [`LocalFace::index`] order.
    fn traces<V: Nodal<T>>(frame: &ElementFrame<T>, orders: Orders, values: &[V]) -> [Vec<V>; 4] {
        let (nx, ny) = (orders.n1 + 1, orders.n2 + 1);
        let along_eta = |weights: &[T]| -> Vec<V> {
            (0..ny)
                .map(|j| (0..nx).fold(V::zero(), |acc, i| acc + values[i + nx * j] * weights[i]))
                .collect()
        };
        let along_xi = |weights: &[T]| -> Vec<V> {
            (0..nx)
                .map(|i| (0..ny).fold(V::zero(), |acc, j| acc + values[i + nx * j] * weights[j]))
                .collect()
        };
        [
            along_eta(&frame.bx.left),
            along_eta(&frame.bx.right),
            along_xi(&frame.by.left),
            along_xi(&frame.by.right),
        ]
    }

    /// Moves face data between trace orders through the mortar of order `max(from, to)`.
    fn transfer<V: Nodal<T>>(&self, values: &[V], from: usize, to: usize) -> Result<Vec<V>> {
        if from == to {
            Ok(values.to_vec())
        } else {
            Ok(self.cache.projection(from, to)?.apply(values))
        }
    }

    /// L2 projection of a face trace from order `from` to order `to`.
    pub fn mortar_project<V: Nodal<T>>(
        &self,
        trace: &[V],
        from: usize,
        to: usize,
    ) -> Result<Vec<V>> {
        if trace.len() != from + 1 {
            return Err(Error::Mismatch(format!(
                "trace of {} values is not of order {from}",
                trace.len()
            )));
        }
        self.transfer(trace, from, to)
    }

    /// For every element and face, the value seen from that element of a
    /// quantity defined on the face: `interior(face data on mortar, ...)`.
    ///
    /// `pair` combines minus/plus data on mortar nodes with the unit normal
    /// pointing minus -> plus. `boundary` combines interior data with the
    /// element's outward normal and the face node coordinates.
    /// `flip_plus` negates the value handed to the plus side.
    #[allow(clippy::too_many_arguments)]
    fn face_pass<V, W, P, B>(
        &self,
        mesh: &Mesh<T>,
        q: &GlobalSolution<T>,
        data: &[[Vec<V>; 4]],
        pair: P,
        boundary: B,
        flip_plus: bool,
    ) -> Result<Vec<[Vec<W>; 4]>>
    where
        V: Nodal<T> + Send + Sync,
        W: Nodal<T> + Send + Sync + std::ops::Neg<Output = W>,
        P: Fn(&[V], &[V], [T; 2]) -> Vec<W> + Sync,
        B: Fn(&[V], [T; 2], &[(T, T)]) -> Vec<W> + Sync,
    {
        let per_face: Vec<Vec<(usize, LocalFace, Vec<W>)>> = mesh
            .faces
            .par_iter()
            .map(|face| -> Result<Vec<(usize, LocalFace, Vec<W>)>> {
                let (minus_face, plus_face) = match face.normal {
                    Direction::Xi => (LocalFace::East, LocalFace::West),
                    Direction::Eta => (LocalFace::North, LocalFace::South),
                };
                match (face.minus, face.plus) {
                    (FaceSide::Element(m), FaceSide::Element(p)) => {
                        let om = q.elements[m].orders.get(face.normal.other());
                        let op = q.elements[p].orders.get(face.normal.other());
                        let mortar = om.max(op);
                        let dm = self.transfer(&data[m][minus_face.index()], om, mortar)?;
                        let dp = self.transfer(&data[p][plus_face.index()], op, mortar)?;
                        let on_mortar = pair(&dm, &dp, face.normal_vector());
                        let to_minus = self.transfer(&on_mortar, mortar, om)?;
                        let mut to_plus = self.transfer(&on_mortar, mortar, op)?;
                        if flip_plus {
                            for v in &mut to_plus {
                                *v = -*v;
                            }
                        }
                        Ok(vec![(m, minus_face, to_minus), (p, plus_face, to_plus)])
                    }
                    (FaceSide::Element(e), FaceSide::Boundary) => {
                        self.boundary_side(mesh, q, data, e, minus_face, &boundary)
                    }
                    (FaceSide::Boundary, FaceSide::Element(e)) => {
                        self.boundary_side(mesh, q, data, e, plus_face, &boundary)
                    }
                    (FaceSide::Boundary, FaceSide::Boundary) => Ok(vec![]),
                }
            })
            .collect::<Result<_>>()?;

        let mut out: Vec<[Vec<W>; 4]> = (0..mesh.len())
            .map(|_| [vec![], vec![], vec![], vec![]])
            .collect();
        for (e, lf, vals) in per_face.into_iter().flatten() {
            out[e][lf.index()] = vals;
        }
        Ok(out)
    }

    fn boundary_side<V, W, B>(
        &self,
        mesh: &Mesh<T>,
        q: &GlobalSolution<T>,
        data: &[[Vec<V>; 4]],
        e: usize,
        lf: LocalFace,
        boundary: &B,
    ) -> Result<Vec<(usize, LocalFace, Vec<W>)>>
    where
        V: Nodal<T>,
        B: Fn(&[V], [T; 2], &[(T, T)]) -> Vec<W>,
    {
        let coords = self.face_coordinates(&mesh.elements[e], q.elements[e].orders, lf)?;
        let vals = boundary(&data[e][lf.index()], lf.outward_normal(), &coords);
        Ok(vec![(e, lf, vals)])
    }

    /// Collocation derivatives along `xi` and `eta` of nodal data.
    fn local_derivatives<V: Nodal<T>>(
        frame: &ElementFrame<T>,
        orders: Orders,
        values: &[V],
    ) -> (Vec<V>, Vec<V>) {
        let (nx, ny) = (orders.n1 + 1, orders.n2 + 1);
        let dx = &frame.bx.diff_matrix;
        let dy = &frame.by.diff_matrix;
        let mut d_xi = vec![V::zero(); nx * ny];
        let mut d_eta = vec![V::zero(); nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut a = V::zero();
                for k in 0..nx {
                    a = a + values[k + nx * j] * dx[i * nx + k];
                }
                d_xi[i + nx * j] = a;
                let mut b = V::zero();
                for k in 0..ny {
                    b = b + values[i + nx * k] * dy[j * ny + k];
                }
                d_eta[i + nx * j] = b;
            }
        }
        (d_xi, d_eta)
    }

    /// Adds `sum_faces jump * l(face) / w` to the reference-space derivatives.
    fn lift<V: Nodal<T>>(
        frame: &ElementFrame<T>,
        orders: Orders,
        jumps: &[Vec<V>; 4],
        d_xi: &mut [V],
        d_eta: &mut [V],
    ) {
        let (nx, ny) = (orders.n1 + 1, orders.n2 + 1);
        let (bx, by) = (&frame.bx, &frame.by);
        for j in 0..ny {
            for i in 0..nx {
                let k = i + nx * j;
                let mut a = d_xi[k];
                if !jumps[0].is_empty() {
                    a = a + jumps[0][j] * (bx.left[i] / bx.weights[i]);
                }
                if !jumps[1].is_empty() {
                    a = a + jumps[1][j] * (bx.right[i] / bx.weights[i]);
                }
                d_xi[k] = a;
                let mut b = d_eta[k];
                if !jumps[2].is_empty() {
                    b = b + jumps[2][i] * (by.left[j] / by.weights[j]);
                }
                if !jumps[3].is_empty() {
                    b = b + jumps[3][i] * (by.right[j] / by.weights[j]);
                }
                d_eta[k] = b;
            }
        }
    }

    /// BR1 gradients of the conserved variables. Interface values are the
    /// arithmetic mean of the two traces (on the mortar for mismatched orders);
    /// boundary faces average with the exact exterior state.
    pub fn br1_gradients(
        &self,
        q: &GlobalSolution<T>,
        mesh: &Mesh<T>,
    ) -> Result<Vec<Vec<StateGradient<T>>>> {
        self.check_solution(q, mesh)?;
        let frames = self.frames(q, mesh)?;
        let traces: Vec<[Vec<State<T>>; 4]> = q
            .elements
            .par_iter()
            .zip(frames.par_iter())
            .map(|(e, f)| Self::traces(f, e.orders, &e.values))
            .collect();
        self.br1_from_traces(q, mesh, &frames, &traces)
    }

    fn frames(&self, q: &GlobalSolution<T>, mesh: &Mesh<T>) -> Result<Vec<ElementFrame<T>>> {
        mesh.elements
            .iter()
            .zip(&q.elements)
            .map(|(el, e)| self.frame(el, e.orders))
            .collect()
    }

    fn br1_from_traces(
        &self,
        q: &GlobalSolution<T>,
        mesh: &Mesh<T>,
        frames: &[ElementFrame<T>],
        traces: &[[Vec<State<T>>; 4]],
    ) -> Result<Vec<Vec<StateGradient<T>>>> {
        let half = T::lit(0.5);
        let case = self.case.as_ref();
        let qhat = self.face_pass(
            mesh,
            q,
            traces,
            |a: &[State<T>], b: &[State<T>], _n| {
                a.iter()
                    .zip(b)
                    .map(|(&l, &r)| (l + r) * half)
                    .collect::<Vec<_>>()
            },
            |a: &[State<T>], _n, xy: &[(T, T)]| {
                a.iter()
                    .zip(xy)
                    .map(|(&l, &(x, y))| (l + case.exact_state(x, y)) * half)
                    .collect::<Vec<_>>()
            },
            false,
        )?;

        q.elements
            .par_iter()
            .enumerate()
            .map(|(id, e)| {
                let frame = &frames[id];
                let (mut d_xi, mut d_eta) = Self::local_derivatives(frame, e.orders, &e.values);
                let jumps: [Vec<State<T>>; 4] = std::array::from_fn(|f| {
                    let lf = LocalFace::ALL[f];
                    let sign = T::lit(f64::from(lf.outward_sign()));
                    qhat[id][f]
                        .iter()
                        .zip(&traces[id][f])
                        .map(|(&h, &t)| (h - t) * sign)
                        .collect()
                });
                Self::lift(frame, e.orders, &jumps, &mut d_xi, &mut d_eta);
                Ok(d_xi
                    .into_iter()
                    .zip(d_eta)
                    .map(|(a, b)| StateGradient {
                        dx: a * frame.scale.0,
                        dy: b * frame.scale.1,
                    })
                    .collect())
            })
            .collect()
    }

    fn local_gradients(frame: &ElementFrame<T>, e: &ElementSolution<T>) -> Vec<StateGradient<T>> {
        let (d_xi, d_eta) = Self::local_derivatives(frame, e.orders, &e.values);
        d_xi.into_iter()
            .zip(d_eta)
            .map(|(a, b)| StateGradient {
                dx: a * frame.scale.0,
                dy: b * frame.scale.1,
            })
            .collect()
    }

    fn check_admissible(&self, q: &GlobalSolution<T>) -> Result<()> {
        q.elements.par_iter().try_for_each(|e| {
            e.values
                .iter()
                .try_for_each(|s| s.check_admissible(self.gas.gamma))
        })
    }

    /// `S - F(Q)` divided by the mass matrix, i.e. `dQ/dt` of the semi-discrete system.
    pub fn pointwise_residual(
        &self,
        q: &GlobalSolution<T>,
        mesh: &Mesh<T>,
        flavor: Flavor,
    ) -> Result<Vec<Vec<State<T>>>> {
        self.check_solution(q, mesh)?;
        self.check_admissible(q)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);

        let gas = self.gas;
        let gamma = gas.gamma;
        let inv_re = T::one() / gas.reynolds;
        let half = T::lit(0.5);
        let case = self.case.as_ref();
        let frames = self.frames(q, mesh)?;

        let traces: Vec<[Vec<State<T>>; 4]> = q
            .elements
            .par_iter()
            .zip(frames.par_iter())
            .map(|(e, f)| Self::traces(f, e.orders, &e.values))
            .collect();
        for t in &traces {
            for face in t {
                for s in face {
                    s.check_admissible(gamma)?;
                }
            }
        }

        let gradients: Vec<Vec<StateGradient<T>>> = match flavor {
            Flavor::NonIsolated => self.br1_from_traces(q, mesh, &frames, &traces)?,
            Flavor::Isolated => q
                .elements
                .par_iter()
                .zip(frames.par_iter())
                .map(|(e, f)| Self::local_gradients(f, e))
                .collect(),
        };

        let numerical_flux = match flavor {
            Flavor::Isolated => None,
            Flavor::NonIsolated => {
                let grad_traces: Vec<[Vec<StateGradient<T>>; 4]> = q
                    .elements
                    .par_iter()
                    .zip(frames.par_iter())
                    .zip(gradients.par_iter())
                    .map(|((e, f), g)| Self::traces(f, e.orders, g))
                    .collect();
                let paired: Vec<[Vec<TracePair<T>>; 4]> = traces
                    .iter()
                    .zip(&grad_traces)
                    .map(|(t, g)| {
                        std::array::from_fn(|f| {
                            t[f].iter()
                                .zip(&g[f])
                                .map(|(&q, &grad)| TracePair { q, grad })
                                .collect()
                        })
                    })
                    .collect();
                let flux_on_pairs = |a: &[TracePair<T>], b: &[TracePair<T>], n: [T; 2]| {
                    a.iter()
                        .zip(b)
                        .map(
                            |(&TracePair { q: ql, grad: gl }, &TracePair { q: qr, grad: gr })| {
                                let inviscid = roe_flux_unchecked(&ql, &qr, n, gamma);
                                let visc = (viscous_flux(&ql, &gl, &gas).normal(n)
                                    + viscous_flux(&qr, &gr, &gas).normal(n))
                                    * half;
                                FaceValue(inviscid - visc * inv_re)
                            },
                        )
                        .collect::<Vec<_>>()
                };
                let boundary = |a: &[TracePair<T>], n: [T; 2], xy: &[(T, T)]| {
                    a.iter()
                        .zip(xy)
                        .map(|(&TracePair { q: ql, grad: gl }, &(x, y))| {
                            let qr = case.exact_state(x, y);
                            let inviscid = roe_flux_unchecked(&ql, &qr, n, gamma);
                            let visc = (viscous_flux(&ql, &gl, &gas).normal(n)
                                + viscous_flux(&qr, &gl, &gas).normal(n))
                                * half;
                            FaceValue(inviscid - visc * inv_re)
                        })
                        .collect::<Vec<_>>()
                };
                Some(self.face_pass(mesh, q, &paired, flux_on_pairs, boundary, true)?)
            }
        };

        q.elements
            .par_iter()
            .enumerate()
            .map(|(id, e)| {
                let frame = &frames[id];
                let el = &mesh.elements[id];
                let fluxes: Vec<FluxPair<T>> = e
                    .values
                    .iter()
                    .zip(&gradients[id])
                    .map(|(s, g)| {
                        let a = euler_flux(s, gamma);
                        let v = viscous_flux(s, g, &gas);
                        FluxPair {
                            f: a.f - v.f * inv_re,
                            g: a.g - v.g * inv_re,
                        }
                    })
                    .collect();
                let f: Vec<State<T>> = fluxes.iter().map(|p| p.f).collect();
                let g: Vec<State<T>> = fluxes.iter().map(|p| p.g).collect();
                let (mut div_xi, _) = Self::local_derivatives(frame, e.orders, &f);
                let (_, mut div_eta) = Self::local_derivatives(frame, e.orders, &g);

                if let Some(nf) = &numerical_flux {
                    let f_tr = Self::traces(frame, e.orders, &f);
                    let g_tr = Self::traces(frame, e.orders, &g);
                    let jumps: [Vec<State<T>>; 4] = std::array::from_fn(|k| {
                        let lf = LocalFace::ALL[k];
                        let sign = T::lit(f64::from(lf.outward_sign()));
                        let interior = match lf.normal_direction() {
                            Direction::Xi => &f_tr[k],
                            Direction::Eta => &g_tr[k],
                        };
                        nf[id][k]
                            .iter()
                            .zip(interior)
                            .map(|(&FaceValue(star), &fin)| star - fin * sign)
                            .collect()
                    });
                    Self::lift(frame, e.orders, &jumps, &mut div_xi, &mut div_eta);
                }

                let coords = self.node_coordinates(el, e.orders)?;
                Ok(coords
                    .iter()
                    .zip(div_xi.iter().zip(&div_eta))
                    .map(|(&(x, y), (&a, &b))| {
                        case.source(x, y) - (a * frame.scale.0 + b * frame.scale.1)
                    })
                    .collect())
            })
            .collect()
    }

    /// `[M]S - F(Q)` on each element at the solution's orders.
    pub fn residual(
        &self,
        q: &GlobalSolution<T>,
        mesh: &Mesh<T>,
        flavor: Flavor,
    ) -> Result<OperatorOutput<T>> {
        let pointwise = self.pointwise_residual(q, mesh, flavor)?;
        let elements = pointwise
            .into_iter()
            .zip(&q.elements)
            .zip(&mesh.elements)
            .map(|((r, e), el)| {
                let mass = self.mass_matrix(el, e.orders)?;
                let values = r.into_iter().zip(mass).map(|(v, m)| v * m).collect();
                ElementSolution::new(e.orders, values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OperatorOutput {
            flavor,
            mass_weighted: true,
            elements,
        })
    }

    /// Evaluates `[M]S - F` with each element first interpolated down to
    /// `eval_orders` (element-wise `<=` the solution's orders).
    pub fn spatial_operator(
        &self,
        q: &GlobalSolution<T>,
        mesh: &Mesh<T>,
        flavor: Flavor,
        eval_orders: Option<&[Orders]>,
    ) -> Result<OperatorOutput<T>> {
        match eval_orders {
            None => self.residual(q, mesh, flavor),
            Some(orders) => {
                if orders.len() != q.len() {
                    return Err(Error::Mismatch(format!(
                        "{} evaluation orders for {} elements",
                        orders.len(),
                        q.len()
                    )));
                }
                let mut coarse = q.clone();
                for (id, &o) in orders.iter().enumerate() {
                    if o != q.elements[id].orders {
                        coarse.elements[id] = self.interpolate_element(&q.elements[id], id, o)?;
                    }
                }
                self.residual(&coarse, mesh, flavor)
            }
        }
    }

    /// Tensor-product interpolation of one element to lower (or equal) orders.
    pub fn interpolate_element(
        &self,
        e: &ElementSolution<T>,
        element_id: usize,
        target: Orders,
    ) -> Result<ElementSolution<T>> {
        if !target.fits_within(e.orders) || target.n1 < 1 || target.n2 < 1 {
            return Err(Error::Upscale {
                element: element_id,
                native: e.orders,
                target,
            });
        }
        if target == e.orders {
            return Ok(e.clone());
        }
        let ix = self.cache.interpolation(e.orders.n1, target.n1)?;
        let iy = self.cache.interpolation(e.orders.n2, target.n2)?;
        ElementSolution::new(
            target,
            crate::basis::TransferMatrix::apply_tensor(&ix, &iy, &e.values),
        )
    }

    /// Norm of one element of an operator output.
    pub fn element_norm(
        &self,
        out: &ElementSolution<T>,
        el: &Element<T>,
        mass_weighted: bool,
        norm: TauNorm,
    ) -> Result<T> {
        let mass = self.mass_matrix(el, out.orders)?;
        let pointwise = |v: &State<T>, m: T| {
            if mass_weighted {
                *v * (T::one() / m)
            } else {
                *v
            }
        };
        let weighted = |v: &State<T>, m: T| if mass_weighted { *v } else { *v * m };
        Ok(match norm {
            TauNorm::MassWeightedMax => out
                .values
                .iter()
                .zip(&mass)
                .fold(T::zero(), |acc, (v, &m)| acc.max(weighted(v, m).max_abs())),
            TauNorm::PointwiseMax => out
                .values
                .iter()
                .zip(&mass)
                .fold(T::zero(), |acc, (v, &m)| acc.max(pointwise(v, m).max_abs())),
            TauNorm::L2 => out
                .values
                .iter()
                .zip(&mass)
                .map(|(v, &m)| pointwise(v, m).sum_squares() * m)
                .sum::<T>()
                .sqrt(),
        })
    }
}

/// Numerical flux on a face node; a newtype so the face pass can negate it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FaceValue<T>(State<T>);

impl<T: Scalar> std::ops::Add for FaceValue<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        FaceValue(self.0 + o.0)
    }
}

impl<T: Scalar> std::ops::Sub for FaceValue<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        FaceValue(self.0 - o.0)
    }
}

impl<T: Scalar> std::ops::Mul<T> for FaceValue<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        FaceValue(self.0 * s)
    }
}

impl<T: Scalar> std::ops::Neg for FaceValue<T> {
    type Output = Self;
    fn neg(self) -> Self {
        FaceValue(-self.0)
    }
}

impl<T: Scalar> Nodal<T> for FaceValue<T> {
    fn zero() -> Self {
        FaceValue(State::zero())
    }
}

/// State and gradient traces moved together through the mortar.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TracePair<T> {
    q: State<T>,
    grad: StateGradient<T>,
}

impl<T: Scalar> std::ops::Add for TracePair<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        TracePair {
            q: self.q + o.q,
            grad: self.grad + o.grad,
        }
    }
}

impl<T: Scalar> std::ops::Sub for TracePair<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        TracePair {
            q: self.q - o.q,
            grad: self.grad - o.grad,
        }
    }
}

impl<T: Scalar> std::ops::Mul<T> for TracePair<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        TracePair {
            q: self.q * s,
            grad: self.grad * s,
        }
    }
}

impl<T: Scalar> Nodal<T> for TracePair<T> {
    fn zero() -> Self {
        TracePair {
            q: State::zero(),
            grad: StateGradient::zero(),
        }
    }
}
