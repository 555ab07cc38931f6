//! Cartesian tessellation of the unit square with per-element anisotropic
//! orders and affine element mappings.

use std::fmt;

use crate::basis::DEFAULT_MAX_ORDER;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Polynomial orders `(N1, N2)` of an element in the `xi` and `eta` directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Orders {
    pub n1: usize,
    pub n2: usize,
}

impl Orders {
    pub const fn new(n1: usize, n2: usize) -> Self {
        Self { n1, n2 }
    }

    pub const fn uniform(n: usize) -> Self {
        Self { n1: n, n2: n }
    }

    /// Nodes per element and conserved variable.
    pub const fn node_count(self) -> usize {
        (self.n1 + 1) * (self.n2 + 1)
    }

    pub fn get(self, direction: Direction) -> usize {
        match direction {
            Direction::Xi => self.n1,
            Direction::Eta => self.n2,
        }
    }

    pub fn with(self, direction: Direction, n: usize) -> Self {
        match direction {
            Direction::Xi => Self { n1: n, ..self },
            Direction::Eta => Self { n2: n, ..self },
        }
    }

    /// Component-wise `<=`.
    pub fn fits_within(self, other: Orders) -> bool {
        self.n1 <= other.n1 && self.n2 <= other.n2
    }

    pub fn max_component(self) -> usize {
        self.n1.max(self.n2)
    }
}

impl fmt::Display for Orders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n1, self.n2)
    }
}

/// Degrees of freedom per conserved variable of an element.
pub fn dof_count(orders: Orders) -> usize {
    orders.node_count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Xi,
    Eta,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Xi, Direction::Eta];

    /// 1 for `xi`, 2 for `eta`.
    pub fn index(self) -> usize {
        match self {
            Direction::Xi => 1,
            Direction::Eta => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            1 => Some(Direction::Xi),
            2 => Some(Direction::Eta),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Direction::Xi => Direction::Eta,
            Direction::Eta => Direction::Xi,
        }
    }
}

/// Local face of the reference square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalFace {
    /// `xi = -1`
    West,
    /// `xi = +1`
    East,
    /// `eta = -1`
    South,
    /// `eta = +1`
    North,
}

impl LocalFace {
    pub const ALL: [LocalFace; 4] = [
        LocalFace::West,
        LocalFace::East,
        LocalFace::South,
        LocalFace::North,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Direction normal to the face.
    pub fn normal_direction(self) -> Direction {
        match self {
            LocalFace::West | LocalFace::East => Direction::Xi,
            LocalFace::South | LocalFace::North => Direction::Eta,
        }
    }

    /// Sign of the outward normal along [`Self::normal_direction`].
    pub fn outward_sign(self) -> i8 {
        match self {
            LocalFace::West | LocalFace::South => -1,
            LocalFace::East | LocalFace::North => 1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            LocalFace::West => LocalFace::East,
            LocalFace::East => LocalFace::West,
            LocalFace::South => LocalFace::North,
            LocalFace::North => LocalFace::South,
        }
    }

    /// Unit outward normal `(nx, ny)`.
    pub fn outward_normal<T: Scalar>(self) -> [T; 2] {
        let s = T::lit(f64::from(self.outward_sign()));
        match self.normal_direction() {
            Direction::Xi => [s, T::zero()],
            Direction::Eta => [T::zero(), s],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceSide {
    Element(usize),
    Boundary,
}

impl FaceSide {
    pub fn element(self) -> Option<usize> {
        match self {
            FaceSide::Element(e) => Some(e),
            FaceSide::Boundary => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element<T> {
    pub id: usize,
    /// Cell index `(ix, iy)` in the Cartesian grid.
    pub grid: (usize, usize),
    pub cell_origin: (T, T),
    pub cell_size: (T, T),
    pub orders: Orders,
    /// `hx * hy / 4`
    pub jacobian: T,
    /// `(d xi / dx, d eta / dy)`
    pub metric_scale: (T, T),
    /// Indexed by [`LocalFace::index`].
    pub faces: [usize; 4],
    pub neighbors: [FaceSide; 4],
}

impl<T: Scalar> Element<T> {
    /// Affine map from the reference square.
    pub fn to_physical(&self, xi: T, eta: T) -> (T, T) {
        let half = T::lit(0.5);
        (
            self.cell_origin.0 + self.cell_size.0 * half * (xi + T::one()),
            self.cell_origin.1 + self.cell_size.1 * half * (eta + T::one()),
        )
    }

    pub fn area(&self) -> T {
        self.cell_size.0 * self.cell_size.1
    }

    pub fn neighbor(&self, face: LocalFace) -> FaceSide {
        self.neighbors[face.index()]
    }

    /// Order of the trace on `face`: faces normal to `xi` carry `N2` nodes and vice versa.
    pub fn trace_order(&self, face: LocalFace) -> usize {
        self.orders.get(face.normal_direction().other())
    }

    /// Length of the face in physical space.
    pub fn face_length(&self, face: LocalFace) -> T {
        match face.normal_direction() {
            Direction::Xi => self.cell_size.1,
            Direction::Eta => self.cell_size.0,
        }
    }
}

/// Interface shared by two elements (or an element and the boundary).
/// `minus` lies on the low-coordinate side; the normal points from `minus` to `plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub id: usize,
    pub normal: Direction,
    pub minus: FaceSide,
    pub plus: FaceSide,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        matches!(self.minus, FaceSide::Boundary) || matches!(self.plus, FaceSide::Boundary)
    }

    pub fn normal_vector<T: Scalar>(&self) -> [T; 2] {
        match self.normal {
            Direction::Xi => [T::one(), T::zero()],
            Direction::Eta => [T::zero(), T::one()],
        }
    }
}

/// Requested element orders for [`build_cartesian_mesh`].
#[derive(Debug, Clone, PartialEq)]
pub enum OrderLayout {
    Uniform(Orders),
    PerElement(Vec<Orders>),
}

impl From<Orders> for OrderLayout {
    fn from(o: Orders) -> Self {
        OrderLayout::Uniform(o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub nx: usize,
    pub ny: usize,
    pub elements: Vec<Element<T>>,
    pub faces: Vec<Face>,
    pub max_order: usize,
}

pub fn build_cartesian_mesh<T: Scalar>(
    nx: usize,
    ny: usize,
    orders: impl Into<OrderLayout>,
) -> Result<Mesh<T>> {
    build_cartesian_mesh_capped(nx, ny, orders, DEFAULT_MAX_ORDER)
}

pub fn build_cartesian_mesh_capped<T: Scalar>(
    nx: usize,
    ny: usize,
    orders: impl Into<OrderLayout>,
    max_order: usize,
) -> Result<Mesh<T>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh(format!(
            "element counts must be positive, got {nx}x{ny}"
        )));
    }
    let count = nx * ny;
    let per_element = match orders.into() {
        OrderLayout::Uniform(o) => vec![o; count],
        OrderLayout::PerElement(v) => {
            if v.len() != count {
                return Err(Error::InvalidMesh(format!(
                    "{} element orders given for {count} elements",
                    v.len()
                )));
            }
            v
        }
    };
    for o in &per_element {
        validate_orders(*o, max_order)?;
    }

    let hx = T::one() / T::from_usize_lossy(nx);
    let hy = T::one() / T::from_usize_lossy(ny);
    let quarter = T::lit(0.25);
    let two = T::lit(2.0);
    let id_of = |ix: usize, iy: usize| ix + nx * iy;

    // Vertical faces (normal xi) first, row by row, then horizontal ones.
    let vertical_id = |fx: usize, iy: usize| fx + (nx + 1) * iy;
    let horizontal_base = (nx + 1) * ny;
    let horizontal_id = |ix: usize, fy: usize| horizontal_base + ix + nx * fy;

    let mut faces = Vec::with_capacity(horizontal_base + nx * (ny + 1));
    for iy in 0..ny {
        for fx in 0..=nx {
            let minus = if fx == 0 {
                FaceSide::Boundary
            } else {
                FaceSide::Element(id_of(fx - 1, iy))
            };
            let plus = if fx == nx {
                FaceSide::Boundary
            } else {
                FaceSide::Element(id_of(fx, iy))
            };
            faces.push(Face {
                id: vertical_id(fx, iy),
                normal: Direction::Xi,
                minus,
                plus,
            });
        }
    }
    for fy in 0..=ny {
        for ix in 0..nx {
            let minus = if fy == 0 {
                FaceSide::Boundary
            } else {
                FaceSide::Element(id_of(ix, fy - 1))
            };
            let plus = if fy == ny {
                FaceSide::Boundary
            } else {
                FaceSide::Element(id_of(ix, fy))
            };
            faces.push(Face {
                id: horizontal_id(ix, fy),
                normal: Direction::Eta,
                minus,
                plus,
            });
        }
    }

    let mut elements = Vec::with_capacity(count);
    for iy in 0..ny {
        for ix in 0..nx {
            let id = id_of(ix, iy);
            let face_ids = [
                vertical_id(ix, iy),
                vertical_id(ix + 1, iy),
                horizontal_id(ix, iy),
                horizontal_id(ix, iy + 1),
            ];
            let neighbors = [
                faces[face_ids[0]].minus,
                faces[face_ids[1]].plus,
                faces[face_ids[2]].minus,
                faces[face_ids[3]].plus,
            ];
            elements.push(Element {
                id,
                grid: (ix, iy),
                cell_origin: (hx * T::from_usize_lossy(ix), hy * T::from_usize_lossy(iy)),
                cell_size: (hx, hy),
                orders: per_element[id],
                jacobian: hx * hy * quarter,
                metric_scale: (two / hx, two / hy),
                faces: face_ids,
                neighbors,
            });
        }
    }

    Ok(Mesh {
        nx,
        ny,
        elements,
        faces,
        max_order,
    })
}

fn validate_orders(o: Orders, max_order: usize) -> Result<()> {
    if o.n1 < 1 || o.n2 < 1 {
        return Err(Error::InvalidMesh(format!("orders {o} must be at least 1")));
    }
    if o.n1 > max_order || o.n2 > max_order {
        return Err(Error::OrderTooHigh {
            order: o.max_component(),
            max: max_order,
        });
    }
    Ok(())
}

impl<T: Scalar> Mesh<T> {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, id: usize) -> Result<&Element<T>> {
        self.elements
            .get(id)
            .ok_or_else(|| Error::InvalidMesh(format!("no element with id {id}")))
    }

    pub fn element_at(&self, ix: usize, iy: usize) -> Option<&Element<T>> {
        (ix < self.nx && iy < self.ny).then(|| &self.elements[ix + self.nx * iy])
    }

    /// Element whose closed cell contains `(x, y)`; ties on shared edges go to
    /// the lower-left cell.
    pub fn locate(&self, x: T, y: T) -> Option<usize> {
        if x < T::zero() || y < T::zero() || x > T::one() || y > T::one() {
            return None;
        }
        let cell = |v: T, n: usize| -> usize {
            let s = v * T::from_usize_lossy(n);
            let k = s.ceil().to_usize().unwrap_or(0);
            k.saturating_sub(1).min(n - 1)
        };
        Some(cell(x, self.nx) + self.nx * cell(y, self.ny))
    }

    pub fn orders(&self) -> Vec<Orders> {
        self.elements.iter().map(|e| e.orders).collect()
    }

    pub fn set_orders(&mut self, id: usize, orders: Orders) -> Result<()> {
        validate_orders(orders, self.max_order)?;
        let max = self.max_order;
        let el = self
            .elements
            .get_mut(id)
            .ok_or_else(|| Error::InvalidMesh(format!("no element with id {id} (max {max})")))?;
        el.orders = orders;
        Ok(())
    }

    pub fn with_orders(&self, orders: &[Orders]) -> Result<Self> {
        if orders.len() != self.len() {
            return Err(Error::InvalidMesh(format!(
                "{} orders for {} elements",
                orders.len(),
                self.len()
            )));
        }
        let mut m = self.clone();
        for (id, &o) in orders.iter().enumerate() {
            m.set_orders(id, o)?;
        }
        Ok(m)
    }

    pub fn interior_face_count(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn total_dofs(&self) -> usize {
        self.elements.iter().map(|e| dof_count(e.orders)).sum()
    }

    pub fn total_area(&self) -> T {
        self.elements.iter().map(|e| e.area()).sum()
    }
}
