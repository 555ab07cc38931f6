//! Legendre-Gauss nodal bases: quadrature, barycentric Lagrange interpolation,
//! collocation differentiation and the transfer operators between orders.

use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Orders above this need an explicit [`BasisCache::with_max_order`].
pub const DEFAULT_MAX_ORDER: usize = 20;

const NEWTON_MAX_ITER: usize = 100;

/// Values that can be stored at nodes and combined linearly.
pub trait Nodal<T>: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<T, Output = Self> {
    fn zero() -> Self;
}

impl<T: Scalar> Nodal<T> for T {
    #[inline]
    fn zero() -> Self {
        T::zero()
    }
}

/// One-dimensional Lagrange basis collocated at the Legendre-Gauss points.
#[derive(Debug, Clone)]
pub struct NodalBasis<T> {
    pub order: usize,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    pub barycentric_weights: Vec<T>,
    /// Row-major `(order+1) x (order+1)`.
    pub diff_matrix: Vec<T>,
    /// `l_i(-1)`
    pub left: Vec<T>,
    /// `l_i(+1)`
    pub right: Vec<T>,
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
pub fn legendre<T: Scalar>(n: usize, x: T) -> (T, T) {
    if n == 0 {
        return (T::one(), T::zero());
    }
    let mut p_prev = T::one();
    let mut p = x;
    let mut dp_prev = T::zero();
    let mut dp = T::one();
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let a = (T::lit(2.0) * kf - T::one()) / kf;
        let b = (kf - T::one()) / kf;
        let p_next = a * x * p - b * p_prev;
        let dp_next = dp_prev + (T::lit(2.0) * kf - T::one()) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// Builds the Legendre-Gauss basis of the given order (`order + 1` nodes).
pub fn gauss_basis<T: Scalar>(order: usize) -> NodalBasis<T> {
    let (nodes, weights) = gauss_legendre_rule::<T>(order);
    let barycentric_weights = barycentric_weights(&nodes);
    let diff_matrix = collocation_derivative(&nodes, &barycentric_weights);
    let left = lagrange_row(&nodes, &barycentric_weights, -T::one());
    let right = lagrange_row(&nodes, &barycentric_weights, T::one());
    NodalBasis {
        order,
        nodes,
        weights,
        barycentric_weights,
        diff_matrix,
        left,
        right,
    }
}

fn gauss_legendre_rule<T: Scalar>(order: usize) -> (Vec<T>, Vec<T>) {
    let n = order + 1;
    if order == 0 {
        return (vec![T::zero()], vec![T::lit(2.0)]);
    }
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::from_usize_lossy(n);
    // Roots come in +/- pairs; solve for the negative half and mirror.
    for k in 0..n.div_ceil(2) {
        let mut x = -(T::PI() * (T::lit(2.0) * T::from_usize_lossy(k) + T::one())
            / (T::lit(2.0) * nf))
            .cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre(n, x);
            let delta = p / dp;
            x = x - delta;
            if delta.abs() <= T::NEWTON_TOL * (T::one() + x.abs()) {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[k] = x;
        nodes[n - 1 - k] = -x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

pub fn barycentric_weights<T: Scalar>(nodes: &[T]) -> Vec<T> {
    (0..nodes.len())
        .map(|j| {
            let prod = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .fold(T::one(), |acc, (_, &xk)| acc * (nodes[j] - xk));
            T::one() / prod
        })
        .collect()
}

/// All Lagrange polynomials of the node set evaluated at `x` (second barycentric form).
pub fn lagrange_row<T: Scalar>(nodes: &[T], bary: &[T], x: T) -> Vec<T> {
    if let Some(hit) = nodes.iter().position(|&xj| xj == x) {
        let mut row = vec![T::zero(); nodes.len()];
        row[hit] = T::one();
        return row;
    }
    let terms: Vec<T> = nodes
        .iter()
        .zip(bary)
        .map(|(&xj, &bj)| bj / (x - xj))
        .collect();
    let denom: T = terms.iter().copied().sum();
    terms.into_iter().map(|t| t / denom).collect()
}

fn collocation_derivative<T: Scalar>(nodes: &[T], bary: &[T]) -> Vec<T> {
    let n = nodes.len();
    let mut d = vec![T::zero(); n * n];
    for i in 0..n {
        let mut diag = T::zero();
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[i * n + j] = v;
                diag = diag - v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

impl<T: Scalar> NodalBasis<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Lagrange polynomials of this basis evaluated at `x`.
    pub fn lagrange_at(&self, x: T) -> Vec<T> {
        lagrange_row(&self.nodes, &self.barycentric_weights, x)
    }

    /// Evaluates the interpolant through `values` at `x`.
    pub fn interpolate_at<V: Nodal<T>>(&self, values: &[V], x: T) -> V {
        self.lagrange_at(x)
            .into_iter()
            .zip(values)
            .fold(V::zero(), |acc, (l, &v)| acc + v * l)
    }

    /// Nodal samples of the derivative of the interpolant through `values`.
    pub fn differentiate<V: Nodal<T>>(&self, values: &[V]) -> Vec<V> {
        let n = self.len();
        (0..n)
            .map(|i| {
                self.diff_matrix[i * n..(i + 1) * n]
                    .iter()
                    .zip(values)
                    .fold(V::zero(), |acc, (&d, &v)| acc + v * d)
            })
            .collect()
    }

    /// Quadrature of nodal samples over `[-1, 1]`.
    pub fn integrate<V: Nodal<T>>(&self, values: &[V]) -> V {
        self.weights
            .iter()
            .zip(values)
            .fold(V::zero(), |acc, (&w, &v)| acc + v * w)
    }
}

/// Dense linear map between two nodal sets of (possibly) different order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix<T> {
    pub src_order: usize,
    pub dst_order: usize,
    /// Row-major `(dst_order+1) x (src_order+1)`.
    pub entries: Vec<T>,
}

/// Interpolation between Gauss node sets.
pub type InterpolationMatrix<T> = TransferMatrix<T>;

impl<T: Scalar> TransferMatrix<T> {
    pub fn rows(&self) -> usize {
        self.dst_order + 1
    }

    pub fn cols(&self) -> usize {
        self.src_order + 1
    }

    pub fn entry(&self, row: usize, col: usize) -> T {
        self.entries[row * self.cols() + col]
    }

    pub fn apply<V: Nodal<T>>(&self, src: &[V]) -> Vec<V> {
        let mut out = Vec::with_capacity(self.rows());
        self.apply_into(src, &mut out);
        out
    }

    pub fn apply_into<V: Nodal<T>>(&self, src: &[V], out: &mut Vec<V>) {
        debug_assert_eq!(src.len(), self.cols());
        let cols = self.cols();
        out.clear();
        out.extend(self.entries.chunks_exact(cols).map(|row| {
            row.iter()
                .zip(src)
                .fold(V::zero(), |acc, (&m, &v)| acc + v * m)
        }));
    }

    /// `self * rhs`: apply `rhs` first.
    pub fn compose(&self, rhs: &TransferMatrix<T>) -> TransferMatrix<T> {
        assert_eq!(self.src_order, rhs.dst_order);
        let (r, k, c) = (self.rows(), self.cols(), rhs.cols());
        let mut entries = vec![T::zero(); r * c];
        for i in 0..r {
            for m in 0..k {
                let a = self.entries[i * k + m];
                for j in 0..c {
                    entries[i * c + j] = entries[i * c + j] + a * rhs.entries[m * c + j];
                }
            }
        }
        TransferMatrix {
            src_order: rhs.src_order,
            dst_order: self.dst_order,
            entries,
        }
    }

    /// Tensor-product application to an `(src_x+1) x (src_y+1)` array stored
    /// with the first index fastest.
    pub fn apply_tensor<V: Nodal<T>>(
        along_x: &TransferMatrix<T>,
        along_y: &TransferMatrix<T>,
        values: &[V],
    ) -> Vec<V> {
        let (sx, sy) = (along_x.cols(), along_y.cols());
        let (dx, dy) = (along_x.rows(), along_y.rows());
        debug_assert_eq!(values.len(), sx * sy);
        let mut tmp = Vec::with_capacity(dx * sy);
        let mut line = Vec::with_capacity(dx);
        for j in 0..sy {
            along_x.apply_into(&values[j * sx..(j + 1) * sx], &mut line);
            tmp.extend_from_slice(&line);
        }
        let mut out = vec![V::zero(); dx * dy];
        let mut column = Vec::with_capacity(sy);
        let mut mapped = Vec::with_capacity(dy);
        for i in 0..dx {
            column.clear();
            column.extend((0..sy).map(|j| tmp[j * dx + i]));
            along_y.apply_into(&column, &mut mapped);
            for (j, &v) in mapped.iter().enumerate() {
                out[j * dx + i] = v;
            }
        }
        out
    }
}

/// Entry `(j, i)` is `l_i(dst.nodes[j])` with `l_i` the Lagrange polynomials on `src`.
pub fn interpolation_matrix<T: Scalar>(
    src: &NodalBasis<T>,
    dst: &NodalBasis<T>,
) -> InterpolationMatrix<T> {
    let entries = dst.nodes.iter().flat_map(|&x| src.lagrange_at(x)).collect();
    TransferMatrix {
        src_order: src.order,
        dst_order: dst.order,
        entries,
    }
}

pub fn differentiation_matrix<T: Scalar>(basis: &NodalBasis<T>) -> Vec<T> {
    basis.diff_matrix.clone()
}

/// L2 projection between Gauss node sets, integrated on the Gauss rule of
/// order `max(src, dst)`; reduces to interpolation when `dst >= src`.
pub fn projection_matrix<T: Scalar>(
    src: &NodalBasis<T>,
    dst: &NodalBasis<T>,
    quad: &NodalBasis<T>,
) -> TransferMatrix<T> {
    debug_assert!(quad.order >= src.order.max(dst.order));
    let to_quad = interpolation_matrix(src, quad);
    let (rows, cols) = (dst.len(), quad.len());
    let mut entries = vec![T::zero(); rows * cols];
    for (m, (&xm, &wm)) in quad.nodes.iter().zip(&quad.weights).enumerate() {
        let l = dst.lagrange_at(xm);
        for j in 0..rows {
            entries[j * cols + m] = l[j] * wm / dst.weights[j];
        }
    }
    let from_quad = TransferMatrix {
        src_order: quad.order,
        dst_order: dst.order,
        entries,
    };
    from_quad.compose(&to_quad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum TransferKind {
    Interpolation,
    Projection,
}

/// Lazily populated, thread-safe cache of bases and transfer matrices.
#[derive(Debug)]
pub struct BasisCache<T> {
    max_order: usize,
    bases: Vec<OnceLock<Arc<NodalBasis<T>>>>,
    transfers: RwLock<HashMap<(TransferKind, usize, usize), Arc<TransferMatrix<T>>>>,
}

impl<T: Scalar> Default for BasisCache<T> {
    fn default() -> Self {
        Self::with_max_order(DEFAULT_MAX_ORDER)
    }
}

impl<T: Scalar> BasisCache<T> {
    pub fn with_max_order(max_order: usize) -> Self {
        Self {
            max_order,
            bases: (0..=max_order).map(|_| OnceLock::new()).collect(),
            transfers: RwLock::new(HashMap::new()),
        }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn basis(&self, order: usize) -> Result<Arc<NodalBasis<T>>> {
        let slot = self.bases.get(order).ok_or(Error::OrderTooHigh {
            order,
            max: self.max_order,
        })?;
        Ok(slot.get_or_init(|| Arc::new(gauss_basis(order))).clone())
    }

    pub fn interpolation(&self, src: usize, dst: usize) -> Result<Arc<TransferMatrix<T>>> {
        self.transfer(TransferKind::Interpolation, src, dst)
    }

    pub fn projection(&self, src: usize, dst: usize) -> Result<Arc<TransferMatrix<T>>> {
        self.transfer(TransferKind::Projection, src, dst)
    }

    fn transfer(
        &self,
        kind: TransferKind,
        src: usize,
        dst: usize,
    ) -> Result<Arc<TransferMatrix<T>>> {
        let key = (kind, src, dst);
        if let Some(m) = self
            .transfers
            .read()
            .expect("transfer cache poisoned")
            .get(&key)
        {
            return Ok(m.clone());
        }
        let (sb, db) = (self.basis(src)?, self.basis(dst)?);
        let m = Arc::new(match kind {
            TransferKind::Interpolation => interpolation_matrix(&sb, &db),
            TransferKind::Projection => {
                let quad = self.basis(src.max(dst))?;
                projection_matrix(&sb, &db, &quad)
            }
        });
        let mut guard = self.transfers.write().expect("transfer cache poisoned");
        Ok(guard.entry(key).or_insert(m).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exact_monomial_integral(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            2.0 / (k as f64 + 1.0)
        }
    }

    #[test]
    fn order_zero_is_midpoint_rule() {
        let b = gauss_basis::<f64>(0);
        assert_eq!(b.nodes, vec![0.0]);
        assert_eq!(b.weights, vec![2.0]);
        assert_eq!(b.diff_matrix, vec![0.0]);
    }

    #[test]
    fn order_one_nodes_and_weights() {
        let b = gauss_basis::<f64>(1);
        assert_abs_diff_eq!(b.nodes[0], -0.5773502691896257, epsilon = 1e-15);
        assert_abs_diff_eq!(b.nodes[1], 0.5773502691896257, epsilon = 1e-15);
        assert_abs_diff_eq!(b.weights[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.weights[1], 1.0, epsilon = 1e-15);
        let x2: f64 = b.nodes.iter().zip(&b.weights).map(|(x, w)| w * x * x).sum();
        assert_abs_diff_eq!(x2, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn order_two_nodes_and_weights() {
        let b = gauss_basis::<f64>(2);
        let r = (3.0f64 / 5.0).sqrt();
        assert_abs_diff_eq!(b.nodes[0], -r, epsilon = 1e-15);
        assert_eq!(b.nodes[1], 0.0);
        assert_abs_diff_eq!(b.nodes[2], r, epsilon = 1e-15);
        assert_abs_diff_eq!(b.weights[0], 5.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.weights[1], 8.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.weights[2], 5.0 / 9.0, epsilon = 1e-15);
        for k in 0..=5u32 {
            let q: f64 = b
                .nodes
                .iter()
                .zip(&b.weights)
                .map(|(x, w)| w * x.powi(k as i32))
                .sum();
            assert_abs_diff_eq!(q, exact_monomial_integral(k), epsilon = 1e-15);
        }
    }

    #[test]
    fn basis_invariants_hold_up_to_order_twenty() {
        for n in 0..=20 {
            let b = gauss_basis::<f64>(n);
            for k in 0..=n {
                assert_abs_diff_eq!(b.nodes[k], -b.nodes[n - k], epsilon = 1e-14);
                assert!(b.nodes[k] > -1.0 && b.nodes[k] < 1.0);
                if k > 0 {
                    assert!(b.nodes[k] > b.nodes[k - 1]);
                }
                assert!(b.weights[k] > 0.0);
            }
            assert_abs_diff_eq!(b.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for i in 0..=n {
                let row: f64 = b.diff_matrix[i * (n + 1)..(i + 1) * (n + 1)].iter().sum();
                assert!(row.abs() <= 1e-12, "order {n} row {i} sum {row}");
            }
            for &x in &b.nodes {
                assert!(legendre(n + 1, x).0.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_precision_basis_is_usable() {
        let b = gauss_basis::<f32>(4);
        let s: f32 = b.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-5);
        let x4: f32 = b
            .nodes
            .iter()
            .zip(&b.weights)
            .map(|(x, w)| w * x.powi(4))
            .sum();
        assert!((x4 - 0.4).abs() < 1e-5);
    }

    #[test]
    fn interpolation_identity_and_linear_exactness() {
        let b2 = gauss_basis::<f64>(2);
        let b1 = gauss_basis::<f64>(1);
        let id = interpolation_matrix(&b2, &b2);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(id.entry(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let m = interpolation_matrix(&b2, &b1);
        let lin = m.apply(&b2.nodes);
        let s = 1.0 / 3.0f64.sqrt();
        assert_abs_diff_eq!(lin[0], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(lin[1], s, epsilon = 1e-15);
        let sq: Vec<f64> = b2.nodes.iter().map(|x| x * x).collect();
        let out = m.apply(&sq);
        assert_abs_diff_eq!(out[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn differentiation_examples() {
        for n in 1..=8 {
            let b = gauss_basis::<f64>(n);
            let ones = vec![1.0; n + 1];
            for d in b.differentiate(&ones) {
                assert!(d.abs() < 1e-12);
            }
            for d in b.differentiate(&b.nodes) {
                assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
            }
        }
        let b = gauss_basis::<f64>(2);
        let sq: Vec<f64> = b.nodes.iter().map(|x| x * x).collect();
        for (d, x) in b.differentiate(&sq).iter().zip(&b.nodes) {
            assert_abs_diff_eq!(*d, 2.0 * x, epsilon = 1e-14);
        }
    }

    #[test]
    fn second_derivative_on_monomials() {
        for n in 2..=9 {
            let b = gauss_basis::<f64>(n);
            for k in 0..=n as i32 {
                let f: Vec<f64> = b.nodes.iter().map(|x| x.powi(k)).collect();
                let dd = b.differentiate(&b.differentiate(&f));
                for (v, x) in dd.iter().zip(&b.nodes) {
                    let exact = if k >= 2 {
                        (k * (k - 1)) as f64 * x.powi(k - 2)
                    } else {
                        0.0
                    };
                    assert_abs_diff_eq!(*v, exact, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn projection_is_exact_upward_and_round_trips() {
        let b3 = gauss_basis::<f64>(3);
        let b5 = gauss_basis::<f64>(5);
        let up = projection_matrix(&b3, &b5, &b5);
        let down = projection_matrix(&b5, &b3, &b5);
        let f: Vec<f64> = b3.nodes.iter().map(|x| 1.0 - 2.0 * x + x.powi(3)).collect();
        let there = up.apply(&f);
        for (v, x) in there.iter().zip(&b5.nodes) {
            assert_abs_diff_eq!(*v, 1.0 - 2.0 * x + x.powi(3), epsilon = 1e-13);
        }
        let back = down.apply(&there);
        for (a, b) in back.iter().zip(&f) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn cache_rejects_orders_above_cap() {
        let cache = BasisCache::<f64>::with_max_order(4);
        assert!(cache.basis(4).is_ok());
        assert!(matches!(
            cache.basis(5),
            Err(Error::OrderTooHigh { order: 5, max: 4 })
        ));
        let a = cache.interpolation(4, 2).unwrap();
        let b = cache.interpolation(4, 2).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn tensor_interpolation_preserves_bilinear_fields() {
        let (bx, by) = (gauss_basis::<f64>(4), gauss_basis::<f64>(3));
        let (cx, cy) = (gauss_basis::<f64>(2), gauss_basis::<f64>(1));
        let f = |x: f64, y: f64| 0.5 + x * y - 2.0 * y + x * x * y;
        let vals: Vec<f64> = by
            .nodes
            .iter()
            .flat_map(|&y| bx.nodes.iter().map(move |&x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        let out = TransferMatrix::apply_tensor(
            &interpolation_matrix(&bx, &cx),
            &interpolation_matrix(&by, &cy),
            &vals,
        );
        for (j, &y) in cy.nodes.iter().enumerate() {
            for (i, &x) in cx.nodes.iter().enumerate() {
                assert_abs_diff_eq!(out[j * 3 + i], f(x, y), epsilon = 1e-13);
            }
        }
    }
}
