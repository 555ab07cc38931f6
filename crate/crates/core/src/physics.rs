//! Compressible Navier-Stokes state algebra in two dimensions, the advective
//! and viscous fluxes, the Roe interface flux and the manufactured solution.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use crate::basis::Nodal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Conserved variables `(rho, rho u, rho v, rho e)`, nondimensional.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State<T> {
    pub rho: T,
    pub rho_u: T,
    pub rho_v: T,
    pub rho_e: T,
}

impl<T: Scalar> State<T> {
    pub const fn new(rho: T, rho_u: T, rho_v: T, rho_e: T) -> Self {
        Self {
            rho,
            rho_u,
            rho_v,
            rho_e,
        }
    }

    pub fn zero() -> Self {
        Self::splat(T::zero())
    }

    pub fn splat(v: T) -> Self {
        Self::new(v, v, v, v)
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.rho, self.rho_u, self.rho_v, self.rho_e]
    }

    /// State from density, velocity and pressure.
    pub fn from_primitive(rho: T, u: T, v: T, p: T, gamma: T) -> Self {
        let half = T::lit(0.5);
        Self::new(
            rho,
            rho * u,
            rho * v,
            p / (gamma - T::one()) + half * rho * (u * u + v * v),
        )
    }

    pub fn velocity(&self) -> (T, T) {
        (self.rho_u / self.rho, self.rho_v / self.rho)
    }

    /// Perfect-gas pressure `(gamma - 1)(rho e - rho |V|^2 / 2)`.
    pub fn pressure(&self, gamma: T) -> T {
        let (u, v) = self.velocity();
        (gamma - T::one()) * (self.rho_e - T::lit(0.5) * self.rho * (u * u + v * v))
    }

    pub fn sound_speed(&self, gamma: T) -> T {
        (gamma * self.pressure(gamma) / self.rho).sqrt()
    }

    pub fn check_admissible(&self, gamma: T) -> Result<()> {
        let p = self.pressure(gamma);
        // NaN fails both comparisons and is rejected too.
        if self.rho > T::zero() && p > T::zero() {
            Ok(())
        } else {
            Err(Error::Inadmissible {
                rho: self.rho.to_f64_lossy(),
                pressure: p.to_f64_lossy(),
            })
        }
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.rho), f(self.rho_u), f(self.rho_v), f(self.rho_e))
    }

    pub fn zip_with(self, other: Self, f: impl Fn(T, T) -> T) -> Self {
        Self::new(
            f(self.rho, other.rho),
            f(self.rho_u, other.rho_u),
            f(self.rho_v, other.rho_v),
            f(self.rho_e, other.rho_e),
        )
    }

    pub fn max_abs(&self) -> T {
        self.rho
            .abs()
            .max(self.rho_u.abs())
            .max(self.rho_v.abs())
            .max(self.rho_e.abs())
    }

    pub fn sum_squares(&self) -> T {
        self.rho * self.rho
            + self.rho_u * self.rho_u
            + self.rho_v * self.rho_v
            + self.rho_e * self.rho_e
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> Index<usize> for State<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.rho,
            1 => &self.rho_u,
            2 => &self.rho_v,
            3 => &self.rho_e,
            _ => panic!("state component {i} out of range"),
        }
    }
}

impl<T: Scalar> Add for State<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(
            self.rho + o.rho,
            self.rho_u + o.rho_u,
            self.rho_v + o.rho_v,
            self.rho_e + o.rho_e,
        )
    }
}

impl<T: Scalar> Sub for State<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.rho - o.rho,
            self.rho_u - o.rho_u,
            self.rho_v - o.rho_v,
            self.rho_e - o.rho_e,
        )
    }
}

impl<T: Scalar> Mul<T> for State<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.rho * s, self.rho_u * s, self.rho_v * s, self.rho_e * s)
    }
}

impl<T: Scalar> Neg for State<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.rho, -self.rho_u, -self.rho_v, -self.rho_e)
    }
}

impl<T: Scalar> AddAssign for State<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for State<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> Nodal<T> for State<T> {
    #[inline]
    fn zero() -> Self {
        State::zero()
    }
}

/// Flux components along `x` (`f`) and `y` (`g`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluxPair<T> {
    pub f: State<T>,
    pub g: State<T>,
}

impl<T: Scalar> FluxPair<T> {
    /// `f n_x + g n_y`
    #[inline]
    pub fn normal(&self, n: [T; 2]) -> State<T> {
        self.f * n[0] + self.g * n[1]
    }
}

/// Spatial gradient of the conserved variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateGradient<T> {
    pub dx: State<T>,
    pub dy: State<T>,
}

impl<T: Scalar> StateGradient<T> {
    pub fn zero() -> Self {
        Self {
            dx: State::zero(),
            dy: State::zero(),
        }
    }
}

impl<T: Scalar> Add for StateGradient<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            dx: self.dx + o.dx,
            dy: self.dy + o.dy,
        }
    }
}

impl<T: Scalar> Sub for StateGradient<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            dx: self.dx - o.dx,
            dy: self.dy - o.dy,
        }
    }
}

impl<T: Scalar> Mul<T> for StateGradient<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self {
            dx: self.dx * s,
            dy: self.dy * s,
        }
    }
}

impl<T: Scalar> Nodal<T> for StateGradient<T> {
    #[inline]
    fn zero() -> Self {
        StateGradient::zero()
    }
}

/// Nondimensional gas and flow parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParameters<T> {
    pub gamma: T,
    pub prandtl: T,
    pub reynolds: T,
    pub mach: T,
    /// Constant dynamic viscosity; the thermal conductivity coefficient equals it.
    pub mu: T,
}

impl<T: Scalar> Default for GasParameters<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(1.4),
            prandtl: T::lit(0.72),
            reynolds: T::lit(1000.0),
            mach: T::lit(0.5),
            mu: T::one(),
        }
    }
}

impl<T: Scalar> GasParameters<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma, self.prandtl, self.reynolds, self.mach, self.mu];
        if all.iter().all(|&v| v > T::zero() && v.is_finite()) && self.gamma > T::one() {
            Ok(())
        } else {
            Err(Error::InvalidMesh(format!(
                "gas parameters must be positive with gamma > 1: {self:?}"
            )))
        }
    }

    pub fn kappa(&self) -> T {
        self.mu
    }

    /// Nondimensional temperature `gamma M^2 p / rho`.
    pub fn temperature(&self, q: &State<T>) -> T {
        self.gamma * self.mach * self.mach * q.pressure(self.gamma) / q.rho
    }

    /// `kappa / ((gamma - 1) Pr M^2)`
    pub fn heat_flux_coefficient(&self) -> T {
        self.kappa() / ((self.gamma - T::one()) * self.prandtl * self.mach * self.mach)
    }
}

/// Euler fluxes without the admissibility check.
#[inline]
pub(crate) fn euler_flux<T: Scalar>(q: &State<T>, gamma: T) -> FluxPair<T> {
    let u = q.rho_u / q.rho;
    let v = q.rho_v / q.rho;
    let p = (gamma - T::one()) * (q.rho_e - T::lit(0.5) * (q.rho_u * u + q.rho_v * v));
    let h = q.rho_e + p;
    FluxPair {
        f: State::new(q.rho_u, q.rho_u * u + p, q.rho_u * v, u * h),
        g: State::new(q.rho_v, q.rho_v * u, q.rho_v * v + p, v * h),
    }
}

pub fn advective_flux<T: Scalar>(q: &State<T>, gas: &GasParameters<T>) -> Result<FluxPair<T>> {
    q.check_admissible(gas.gamma)?;
    Ok(euler_flux(q, gas.gamma))
}

/// Diffusive fluxes `(f^v, g^v)` before the `1/Re` scaling, with the Stokes
/// hypothesis for the bulk viscosity.
pub fn viscous_flux<T: Scalar>(
    q: &State<T>,
    grad: &StateGradient<T>,
    gas: &GasParameters<T>,
) -> FluxPair<T> {
    let rho = q.rho;
    let u = q.rho_u / rho;
    let v = q.rho_v / rho;
    let gm1 = gas.gamma - T::one();
    let half = T::lit(0.5);
    let p = gm1 * (q.rho_e - half * rho * (u * u + v * v));
    let p_over_rho = p / rho;
    let ke = half * (u * u + v * v);

    let d = |g: &State<T>| {
        let du = (g.rho_u - u * g.rho) / rho;
        let dv = (g.rho_v - v * g.rho) / rho;
        let dp = gm1 * (g.rho_e - u * g.rho_u - v * g.rho_v + ke * g.rho);
        let d_p_over_rho = (dp - p_over_rho * g.rho) / rho;
        (du, dv, d_p_over_rho)
    };
    let (ux, vx, prx) = d(&grad.dx);
    let (uy, vy, pry) = d(&grad.dy);

    let mu = gas.mu;
    let two = T::lit(2.0);
    let div = ux + vy;
    let third = T::one() / T::lit(3.0);
    let tau_xx = two * mu * (ux - third * div);
    let tau_yy = two * mu * (vy - third * div);
    let tau_xy = mu * (uy + vx);
    // T = gamma M^2 p / rho, so k T_x / ((gamma-1) Pr M^2) = k gamma (p/rho)_x / ((gamma-1) Pr)
    let heat = gas.heat_flux_coefficient() * gas.gamma * gas.mach * gas.mach;
    FluxPair {
        f: State::new(
            T::zero(),
            tau_xx,
            tau_xy,
            u * tau_xx + v * tau_xy + heat * prx,
        ),
        g: State::new(
            T::zero(),
            tau_xy,
            tau_yy,
            u * tau_xy + v * tau_yy + heat * pry,
        ),
    }
}

/// Roe flux through a face with unit normal `n`, directed from `left` to `right`.
pub fn roe_flux<T: Scalar>(
    left: &State<T>,
    right: &State<T>,
    n: [T; 2],
    gas: &GasParameters<T>,
) -> Result<State<T>> {
    left.check_admissible(gas.gamma)?;
    right.check_admissible(gas.gamma)?;
    Ok(roe_flux_unchecked(left, right, n, gas.gamma))
}

pub(crate) fn roe_flux_unchecked<T: Scalar>(
    left: &State<T>,
    right: &State<T>,
    n: [T; 2],
    gamma: T,
) -> State<T> {
    let half = T::lit(0.5);
    let gm1 = gamma - T::one();
    let (ul, vl) = left.velocity();
    let (ur, vr) = right.velocity();
    let pl = left.pressure(gamma);
    let pr = right.pressure(gamma);
    let hl = (left.rho_e + pl) / left.rho;
    let hr = (right.rho_e + pr) / right.rho;

    let sl = left.rho.sqrt();
    let sr = right.rho.sqrt();
    let inv = T::one() / (sl + sr);
    let rho = sl * sr;
    let u = (sl * ul + sr * ur) * inv;
    let v = (sl * vl + sr * vr) * inv;
    let h = (sl * hl + sr * hr) * inv;
    let ke = half * (u * u + v * v);
    let c2 = gm1 * (h - ke);
    let c = c2.sqrt();
    let un = u * n[0] + v * n[1];

    let d_rho = right.rho - left.rho;
    let d_p = pr - pl;
    let d_u = ur - ul;
    let d_v = vr - vl;
    let d_un = d_u * n[0] + d_v * n[1];

    let a_minus = (d_p - rho * c * d_un) / (T::lit(2.0) * c2);
    let a_plus = (d_p + rho * c * d_un) / (T::lit(2.0) * c2);
    let a_entropy = d_rho - d_p / c2;

    let l_minus = (un - c).abs();
    let l_mid = un.abs();
    let l_plus = (un + c).abs();

    let r_minus = State::new(T::one(), u - c * n[0], v - c * n[1], h - c * un);
    let r_plus = State::new(T::one(), u + c * n[0], v + c * n[1], h + c * un);
    let r_entropy = State::new(T::one(), u, v, ke);
    let dut = d_u - d_un * n[0];
    let dvt = d_v - d_un * n[1];
    let shear = State::new(T::zero(), dut, dvt, u * d_u + v * d_v - un * d_un) * rho;

    let dissipation = r_minus * (l_minus * a_minus)
        + (r_entropy * a_entropy + shear) * l_mid
        + r_plus * (l_plus * a_plus);

    let fl = euler_flux(left, gamma).normal(n);
    let fr = euler_flux(right, gamma).normal(n);
    (fl + fr - dissipation) * half
}

/// Gaussian bump of the manufactured density/pressure field, without the unit offset.
fn bump<T: Scalar>(x: T, y: T) -> T {
    let half = T::lit(0.5);
    let dx = x - half;
    let dy = y - half;
    (-T::lit(5.0) * (T::lit(4.0) * dx * dx + dy * dy)).exp()
}

/// `rho = p = exp(-5 (4 (x-1/2)^2 + (y-1/2)^2)) + 1`, `u = v = 1`.
pub fn manufactured_state<T: Scalar>(x: T, y: T, gamma: T) -> State<T> {
    let rho = bump(x, y) + T::one();
    State::from_primitive(rho, T::one(), T::one(), rho, gamma)
}

/// Source term `div F^a(q_exact)` balancing [`manufactured_state`]; the
/// diffusive contribution vanishes identically on that field.
pub fn manufactured_source<T: Scalar>(x: T, y: T, gas: &GasParameters<T>) -> State<T> {
    let half = T::lit(0.5);
    let g = bump(x, y);
    let a = x - half;
    let b = y - half;
    let s_rho = -(T::lit(40.0) * a + T::lit(10.0) * b) * g;
    let s_ru = -(T::lit(80.0) * a + T::lit(10.0) * b) * g;
    let s_rv = -(T::lit(40.0) * a + T::lit(20.0) * b) * g;
    let energy_factor = T::one() / (gas.gamma - T::one()) + T::lit(2.0);
    State::new(s_rho, s_ru, s_rv, s_rho * energy_factor)
}

/// Same closed form as [`manufactured_source`] but with the sign of the
/// Gaussian exponent reversed. Only useful as a negative control.
pub fn flipped_exponent_source<T: Scalar>(x: T, y: T, gas: &GasParameters<T>) -> State<T> {
    let g = bump(x, y);
    let rescale = if g > T::zero() {
        g.recip() * g.recip()
    } else {
        T::zero()
    };
    manufactured_source(x, y, gas) * rescale
}

/// Result of comparing a closed-form source against central differences of
/// the advective flux divergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceCheck<T> {
    pub points: usize,
    pub max_mismatch: T,
    pub max_source: T,
    pub relative: T,
}

/// Compares `source` with a fourth-order central difference of `div F^a`
/// applied to [`manufactured_state`] on an `n x n` grid of cell centres in
/// the unit square.
pub fn check_source<T: Scalar>(
    gas: &GasParameters<T>,
    n: usize,
    h: T,
    source: impl Fn(T, T, &GasParameters<T>) -> State<T>,
) -> Result<SourceCheck<T>> {
    let flux = |x: T, y: T| advective_flux(&manufactured_state(x, y, gas.gamma), gas);
    let c1 = T::lit(8.0) / (T::lit(12.0) * h);
    let c2 = T::one() / (T::lit(12.0) * h);
    let (mut max_mismatch, mut max_source) = (T::zero(), T::zero());
    for j in 0..n {
        for i in 0..n {
            let x = (T::from_usize_lossy(i) + T::lit(0.5)) / T::from_usize_lossy(n);
            let y = (T::from_usize_lossy(j) + T::lit(0.5)) / T::from_usize_lossy(n);
            let two = T::lit(2.0);
            let dfdx = (flux(x + h, y)?.f - flux(x - h, y)?.f) * c1
                - (flux(x + two * h, y)?.f - flux(x - two * h, y)?.f) * c2;
            let dgdy = (flux(x, y + h)?.g - flux(x, y - h)?.g) * c1
                - (flux(x, y + two * h)?.g - flux(x, y - two * h)?.g) * c2;
            let s = source(x, y, gas);
            max_mismatch = max_mismatch.max((dfdx + dgdy - s).max_abs());
            max_source = max_source.max(s.max_abs());
        }
    }
    Ok(SourceCheck {
        points: n * n,
        max_mismatch,
        max_source,
        relative: max_mismatch / max_source,
    })
}

/// Steady problem definition: exact/exterior state and volume source.
pub trait FlowCase<T: Scalar>: Send + Sync {
    /// Exact solution, also imposed weakly as the exterior boundary state.
    fn exact_state(&self, x: T, y: T) -> State<T>;
    fn source(&self, x: T, y: T) -> State<T>;
    fn name(&self) -> &'static str;
}

/// The Gaussian-bump manufactured solution.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase<T> {
    pub gas: GasParameters<T>,
}

impl<T: Scalar> FlowCase<T> for ManufacturedCase<T> {
    fn exact_state(&self, x: T, y: T) -> State<T> {
        manufactured_state(x, y, self.gas.gamma)
    }

    fn source(&self, x: T, y: T) -> State<T> {
        manufactured_source(x, y, &self.gas)
    }

    fn name(&self) -> &'static str {
        "manufactured"
    }
}

/// Constant state everywhere with no source.
#[derive(Debug, Clone, Copy)]
pub struct UniformFlow<T> {
    pub state: State<T>,
}

impl<T: Scalar> FlowCase<T> for UniformFlow<T> {
    fn exact_state(&self, _x: T, _y: T) -> State<T> {
        self.state
    }

    fn source(&self, _x: T, _y: T) -> State<T> {
        State::zero()
    }

    fn name(&self) -> &'static str {
        "uniform"
    }
}
