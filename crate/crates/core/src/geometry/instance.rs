//! The three groupoid/algebroid instances and their structure maps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::group::MatrixGroup;
use crate::error::{Error, Result};
use crate::linalg::concat;

/// Endpoint mismatch tolerated by [`Instance::compose`].
pub const COMPOSABLE_TOL: f64 = 1e-9;

/// Tolerance on `gᵀg = I` and `det g = 1` for elements of SO(3).
pub const GROUP_MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum Instance {
    /// Pair groupoid `Rⁿ × Rⁿ` with algebroid `TRⁿ`.
    PairEuclidean(usize),
    /// Matrix Lie group over a point, algebroid = Lie algebra.
    MatrixGroup(Arc<MatrixGroup>),
    /// Trivial principal bundle `K × Rᵐ`: groupoid `K × (Rᵐ × Rᵐ)`,
    /// algebroid `k × TRᵐ`.
    TrivialBundle { group: Arc<MatrixGroup>, base_dim: usize },
}

/// An arrow of one of the instances.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupoidElement {
    Pair { q0: DVector<f64>, q1: DVector<f64> },
    Group { g: DMatrix<f64> },
    Bundle { k: DMatrix<f64>, x0: DVector<f64>, x1: DVector<f64> },
}

/// Algebroid element in local coordinates `(x^i, y^α)`.
///
/// * pair: `base = q`, `fiber = v`
/// * group: `base` empty, `fiber = ξ`
/// * bundle: `base = x`, `fiber = (ξ, ẋ)`
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebroidVector {
    pub base: DVector<f64>,
    pub fiber: DVector<f64>,
}

/// Covector on the algebroid, `(x^i, y_α)`, same layout as [`AlgebroidVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct Momentum {
    pub base: DVector<f64>,
    pub fiber: DVector<f64>,
}

impl AlgebroidVector {
    pub fn new(base: DVector<f64>, fiber: DVector<f64>) -> Self {
        Self { base, fiber }
    }

    pub fn tangent(q: DVector<f64>, v: DVector<f64>) -> Self {
        Self { base: q, fiber: v }
    }

    pub fn algebra(xi: DVector<f64>) -> Self {
        Self { base: DVector::zeros(0), fiber: xi }
    }

    pub fn bundle(xi: &DVector<f64>, x: DVector<f64>, xdot: &DVector<f64>) -> Self {
        Self { base: x, fiber: concat(xi, xdot) }
    }

    /// Concatenated `(base, fiber)`.
    pub fn coords(&self) -> DVector<f64> {
        concat(&self.base, &self.fiber)
    }
}

impl Momentum {
    pub fn new(base: DVector<f64>, fiber: DVector<f64>) -> Self {
        Self { base, fiber }
    }

    pub fn coords(&self) -> DVector<f64> {
        concat(&self.base, &self.fiber)
    }

    /// Coordinate distance between two momenta.
    pub fn distance(&self, other: &Momentum) -> f64 {
        let db = if self.base.len() == other.base.len() {
            (&self.base - &other.base).norm_squared()
        } else {
            f64::INFINITY
        };
        let df = if self.fiber.len() == other.fiber.len() {
            (&self.fiber - &other.fiber).norm_squared()
        } else {
            f64::INFINITY
        };
        (db + df).sqrt()
    }
}

fn mismatch(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    (a - b).amax()
}

fn split(c: &DVector<f64>, d: usize) -> (DVector<f64>, DVector<f64>) {
    (c.rows(0, d).into_owned(), c.rows(d, c.len() - d).into_owned())
}

impl Instance {
    pub fn pair(n: usize) -> Self {
        Instance::PairEuclidean(n)
    }

    pub fn so3() -> Self {
        Instance::MatrixGroup(Arc::new(MatrixGroup::so3()))
    }

    pub fn bundle(group: MatrixGroup, base_dim: usize) -> Self {
        Instance::TrivialBundle { group: Arc::new(group), base_dim }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Instance::PairEuclidean(_) => "pair",
            Instance::MatrixGroup(_) => "group",
            Instance::TrivialBundle { .. } => "bundle",
        }
    }

    pub fn group(&self) -> Option<&MatrixGroup> {
        match self {
            Instance::PairEuclidean(_) => None,
            Instance::MatrixGroup(g) => Some(g),
            Instance::TrivialBundle { group, .. } => Some(group),
        }
    }

    pub fn base_dim(&self) -> usize {
        match self {
            Instance::PairEuclidean(n) => *n,
            Instance::MatrixGroup(_) => 0,
            Instance::TrivialBundle { base_dim, .. } => *base_dim,
        }
    }

    /// Algebra dimension (0 for the pair groupoid).
    pub fn algebra_dim(&self) -> usize {
        self.group().map_or(0, |g| g.dim())
    }

    /// Rank of the algebroid.
    pub fn fiber_dim(&self) -> usize {
        match self {
            Instance::PairEuclidean(n) => *n,
            Instance::MatrixGroup(g) => g.dim(),
            Instance::TrivialBundle { group, base_dim } => group.dim() + base_dim,
        }
    }

    /// Anchor `ρ(y)`: identity on `TRⁿ`, zero on an algebra, `(ξ, ẋ) ↦ ẋ`
    /// on the bundle.
    pub fn anchor(&self, fiber: &DVector<f64>) -> DVector<f64> {
        match self {
            Instance::PairEuclidean(_) => fiber.clone(),
            Instance::MatrixGroup(_) => DVector::zeros(0),
            Instance::TrivialBundle { group, base_dim } => fiber.rows(group.dim(), *base_dim).into_owned(),
        }
    }

    /// Transpose of the anchor applied to a base covector.
    pub fn anchor_transpose(&self, base_covector: &DVector<f64>) -> DVector<f64> {
        match self {
            Instance::PairEuclidean(_) => base_covector.clone(),
            Instance::MatrixGroup(g) => DVector::zeros(g.dim()),
            Instance::TrivialBundle { group, .. } => concat(&DVector::zeros(group.dim()), base_covector),
        }
    }

    /// `ad*_y p` on the fiber; brackets only act on the algebra block.
    pub fn fiber_coad(&self, y: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        match self {
            Instance::PairEuclidean(n) => DVector::zeros(*n),
            Instance::MatrixGroup(g) => g.coad(y, p),
            Instance::TrivialBundle { group, base_dim } => {
                let d = group.dim();
                let c = group.coad(&y.rows(0, d).into_owned(), &p.rows(0, d).into_owned());
                concat(&c, &DVector::zeros(*base_dim))
            }
        }
    }

    pub fn check_vector(&self, a: &AlgebroidVector) -> Result<()> {
        if a.base.len() != self.base_dim() || a.fiber.len() != self.fiber_dim() {
            return Err(Error::InstanceMismatch(format!(
                "algebroid vector has shape ({}, {}), {} instance expects ({}, {})",
                a.base.len(),
                a.fiber.len(),
                self.name(),
                self.base_dim(),
                self.fiber_dim()
            )));
        }
        Ok(())
    }

    pub fn check_momentum(&self, m: &Momentum) -> Result<()> {
        if m.base.len() != self.base_dim() || m.fiber.len() != self.fiber_dim() {
            return Err(Error::InstanceMismatch(format!(
                "momentum has shape ({}, {}), {} instance expects ({}, {})",
                m.base.len(),
                m.fiber.len(),
                self.name(),
                self.base_dim(),
                self.fiber_dim()
            )));
        }
        Ok(())
    }

    /// Shape check plus, for orthogonal groups, membership to 1e-10.
    pub fn check_element(&self, a: &GroupoidElement) -> Result<()> {
        let shape_ok = match (self, a) {
            (Instance::PairEuclidean(n), GroupoidElement::Pair { q0, q1 }) => q0.len() == *n && q1.len() == *n,
            (Instance::MatrixGroup(g), GroupoidElement::Group { g: m }) => {
                m.nrows() == g.matrix_size() && m.ncols() == g.matrix_size()
            }
            (Instance::TrivialBundle { group, base_dim }, GroupoidElement::Bundle { k, x0, x1 }) => {
                k.nrows() == group.matrix_size()
                    && k.ncols() == group.matrix_size()
                    && x0.len() == *base_dim
                    && x1.len() == *base_dim
            }
            _ => false,
        };
        if !shape_ok {
            return Err(Error::InstanceMismatch(format!("arrow does not belong to the {} instance", self.name())));
        }
        let all_finite = match a {
            GroupoidElement::Pair { q0, q1 } => q0.iter().chain(q1.iter()).all(|v| v.is_finite()),
            GroupoidElement::Group { g } => g.iter().all(|v| v.is_finite()),
            GroupoidElement::Bundle { k, x0, x1 } => {
                k.iter().chain(x0.iter()).chain(x1.iter()).all(|v| v.is_finite())
            }
        };
        if !all_finite {
            return Err(Error::InvalidInput("arrow has non-finite entries".into()));
        }
        if let (Some(group), Some(m)) = (self.group(), a.group_part()) {
            if group.is_orthogonal() {
                let defect = group.membership_defect(m);
                if defect > GROUP_MEMBERSHIP_TOL {
                    return Err(Error::InvalidInput(format!("matrix is off the group by {defect:.3e}")));
                }
            }
        }
        Ok(())
    }

    /// Source map α.
    pub fn source(&self, a: &GroupoidElement) -> DVector<f64> {
        match a {
            GroupoidElement::Pair { q0, .. } => q0.clone(),
            GroupoidElement::Group { .. } => DVector::zeros(0),
            GroupoidElement::Bundle { x0, .. } => x0.clone(),
        }
    }

    /// Target map β.
    pub fn target(&self, a: &GroupoidElement) -> DVector<f64> {
        match a {
            GroupoidElement::Pair { q1, .. } => q1.clone(),
            GroupoidElement::Group { .. } => DVector::zeros(0),
            GroupoidElement::Bundle { x1, .. } => x1.clone(),
        }
    }

    pub fn compose(&self, a: &GroupoidElement, b: &GroupoidElement) -> Result<GroupoidElement> {
        use GroupoidElement::*;
        match (a, b) {
            (Pair { q0, q1 }, Pair { q0: p0, q1: p1 }) => {
                let m = mismatch(q1, p0);
                if !(m <= COMPOSABLE_TOL) {
                    return Err(Error::NotComposable { mismatch: m });
                }
                Ok(Pair { q0: q0.clone(), q1: p1.clone() })
            }
            (Group { g }, Group { g: h }) => Ok(Group { g: g * h }),
            (Bundle { k, x0, x1 }, Bundle { k: k2, x0: y0, x1: y1 }) => {
                let m = mismatch(x1, y0);
                if !(m <= COMPOSABLE_TOL) {
                    return Err(Error::NotComposable { mismatch: m });
                }
                Ok(Bundle { k: k * k2, x0: x0.clone(), x1: y1.clone() })
            }
            _ => Err(Error::InstanceMismatch("compose: arrows of different kinds".into())),
        }
    }

    pub fn inverse(&self, a: &GroupoidElement) -> Result<GroupoidElement> {
        use GroupoidElement::*;
        Ok(match a {
            Pair { q0, q1 } => Pair { q0: q1.clone(), q1: q0.clone() },
            Group { g } => Group { g: crate::linalg::inverse(g)? },
            Bundle { k, x0, x1 } => Bundle { k: crate::linalg::inverse(k)?, x0: x1.clone(), x1: x0.clone() },
        })
    }

    /// Identity arrow ε(x).
    pub fn identity_at(&self, x: &DVector<f64>) -> GroupoidElement {
        match self {
            Instance::PairEuclidean(_) => GroupoidElement::Pair { q0: x.clone(), q1: x.clone() },
            Instance::MatrixGroup(g) => GroupoidElement::Group { g: g.identity() },
            Instance::TrivialBundle { group, .. } => GroupoidElement::Bundle {
                k: group.identity(),
                x0: x.clone(),
                x1: x.clone(),
            },
        }
    }

    /// Exponential-type curve through ε(x) in the α-fiber: the arrow from `x`
    /// with fiber coordinates `c`. Pair: `(x, x + c)`, group: `exp(c)`,
    /// bundle: `(exp(c_k), x, x + c_x)`.
    pub fn delta(&self, x: &DVector<f64>, c: &DVector<f64>) -> GroupoidElement {
        match self {
            Instance::PairEuclidean(_) => GroupoidElement::Pair { q0: x.clone(), q1: x + c },
            Instance::MatrixGroup(g) => GroupoidElement::Group { g: g.exp(c) },
            Instance::TrivialBundle { group, .. } => {
                let (ck, cx) = split(c, group.dim());
                GroupoidElement::Bundle { k: group.exp(&ck), x0: x.clone(), x1: x + cx }
            }
        }
    }

    /// `g · δ_{β(g)}(c)`: moves the target of `g`, keeping its source.
    pub fn translate_target(&self, g: &GroupoidElement, c: &DVector<f64>) -> GroupoidElement {
        match (self, g) {
            (_, GroupoidElement::Pair { q0, q1 }) => GroupoidElement::Pair { q0: q0.clone(), q1: q1 + c },
            (Instance::MatrixGroup(group), GroupoidElement::Group { g }) => {
                GroupoidElement::Group { g: g * group.exp(c) }
            }
            (Instance::TrivialBundle { group, .. }, GroupoidElement::Bundle { k, x0, x1 }) => {
                let (ck, cx) = split(c, group.dim());
                GroupoidElement::Bundle { k: k * group.exp(&ck), x0: x0.clone(), x1: x1 + cx }
            }
            _ => g.clone(),
        }
    }

    /// `δ_{α(g)}(c)⁻¹ · g`: moves the source of `g`, keeping its target.
    pub fn translate_source(&self, g: &GroupoidElement, c: &DVector<f64>) -> GroupoidElement {
        match (self, g) {
            (_, GroupoidElement::Pair { q0, q1 }) => GroupoidElement::Pair { q0: q0 + c, q1: q1.clone() },
            (Instance::MatrixGroup(group), GroupoidElement::Group { g }) => {
                GroupoidElement::Group { g: group.exp(&(-c)) * g }
            }
            (Instance::TrivialBundle { group, .. }, GroupoidElement::Bundle { k, x0, x1 }) => {
                let (ck, cx) = split(c, group.dim());
                GroupoidElement::Bundle { k: group.exp(&(-ck)) * k, x0: x0 + cx, x1: x1.clone() }
            }
            _ => g.clone(),
        }
    }

    /// Coordinates of `a` in the α-fiber chart at `reference`: the `c` with
    /// `a = reference · δ(c)`. Both arrows must share their source.
    pub fn fiber_chart(&self, reference: &GroupoidElement, a: &GroupoidElement) -> Result<DVector<f64>> {
        use GroupoidElement::*;
        match (self, reference, a) {
            (Instance::PairEuclidean(_), Pair { q0: r0, q1: r1 }, Pair { q0, q1 }) => {
                let m = mismatch(r0, q0);
                if !(m <= COMPOSABLE_TOL) {
                    return Err(Error::NotComposable { mismatch: m });
                }
                Ok(q1 - r1)
            }
            (Instance::MatrixGroup(group), Group { g: r }, Group { g }) => {
                group.log(&(crate::linalg::inverse(r)? * g))
            }
            (Instance::TrivialBundle { group, .. }, Bundle { k: rk, x0: r0, x1: r1 }, Bundle { k, x0, x1 }) => {
                let m = mismatch(r0, x0);
                if !(m <= COMPOSABLE_TOL) {
                    return Err(Error::NotComposable { mismatch: m });
                }
                let ck = group.log(&(crate::linalg::inverse(rk)? * k))?;
                Ok(concat(&ck, &(x1 - r1)))
            }
            _ => Err(Error::InstanceMismatch("fiber_chart: arrows of different kinds".into())),
        }
    }

    /// Chart used for error measurement: pair → `(q0 − r.q0, q1 − r.q1)`,
    /// group → `log(r⁻¹ a)`, bundle → both concatenated.
    pub fn chart_coords(&self, reference: &GroupoidElement, a: &GroupoidElement) -> Result<DVector<f64>> {
        use GroupoidElement::*;
        match (self, reference, a) {
            (Instance::PairEuclidean(_), Pair { q0: r0, q1: r1 }, Pair { q0, q1 }) => {
                Ok(concat(&(q0 - r0), &(q1 - r1)))
            }
            (Instance::MatrixGroup(group), Group { g: r }, Group { g }) => {
                group.log(&(crate::linalg::inverse(r)? * g))
            }
            (Instance::TrivialBundle { group, .. }, Bundle { k: rk, x0: r0, x1: r1 }, Bundle { k, x0, x1 }) => {
                let ck = group.log(&(crate::linalg::inverse(rk)? * k))?;
                Ok(concat(&ck, &concat(&(x0 - r0), &(x1 - r1))))
            }
            _ => Err(Error::InstanceMismatch("chart_coords: arrows of different kinds".into())),
        }
    }

    /// Fiber coordinates of `a` relative to the identity at its source:
    /// `(q1 − q0)`, `log g`, `(log k, x1 − x0)`.
    pub fn displacement(&self, a: &GroupoidElement) -> Result<DVector<f64>> {
        let id = self.identity_at(&self.source(a));
        self.fiber_chart(&id, a)
    }

    /// Casimir `‖μ‖` of the algebra block, defined for SO(3) only.
    pub fn casimir(&self, m: &Momentum) -> Option<f64> {
        match self {
            Instance::MatrixGroup(g) if g.is_so3() => Some(m.fiber.norm()),
            _ => None,
        }
    }
}

impl GroupoidElement {
    pub fn group_part(&self) -> Option<&DMatrix<f64>> {
        match self {
            GroupoidElement::Pair { .. } => None,
            GroupoidElement::Group { g } => Some(g),
            GroupoidElement::Bundle { k, .. } => Some(k),
        }
    }

    pub fn pair(q0: &[f64], q1: &[f64]) -> Self {
        GroupoidElement::Pair { q0: DVector::from_row_slice(q0), q1: DVector::from_row_slice(q1) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn pair_groupoid_law() {
        let inst = Instance::pair(1);
        let c = inst.compose(&GroupoidElement::pair(&[0.0], &[1.0]), &GroupoidElement::pair(&[1.0], &[3.0])).unwrap();
        assert_eq!(c, GroupoidElement::pair(&[0.0], &[3.0]));
        assert!(matches!(
            inst.compose(&GroupoidElement::pair(&[0.0], &[1.0]), &GroupoidElement::pair(&[2.0], &[3.0])),
            Err(Error::NotComposable { .. })
        ));
        assert_eq!(inst.inverse(&GroupoidElement::pair(&[0.0], &[1.0])).unwrap(), GroupoidElement::pair(&[1.0], &[0.0]));
    }

    #[test]
    fn group_identity_inverse() {
        let inst = Instance::so3();
        let id = GroupoidElement::Group { g: DMatrix::identity(3, 3) };
        assert_eq!(inst.inverse(&id).unwrap(), id);
    }

    #[test]
    fn composability_tolerance_is_absolute() {
        let inst = Instance::pair(1);
        let a = GroupoidElement::pair(&[0.0], &[1.0]);
        assert!(inst.compose(&a, &GroupoidElement::pair(&[1.0 + 5e-10], &[2.0])).is_ok());
        assert!(inst.compose(&a, &GroupoidElement::pair(&[1.0 + 2e-9], &[2.0])).is_err());
    }

    #[test]
    fn chart_at_self_is_zero_and_pair_chart_is_translation() {
        let inst = Instance::pair(2);
        let r = GroupoidElement::pair(&[0.1, 0.2], &[0.3, -0.4]);
        assert_eq!(inst.chart_coords(&r, &r).unwrap(), v(&[0.0; 4]));
        let a = GroupoidElement::pair(&[1.1, 0.2], &[0.3, 0.6]);
        assert_eq!(inst.chart_coords(&r, &a).unwrap(), v(&[1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn translations_match_fiber_chart() {
        let inst = Instance::bundle(MatrixGroup::so3(), 2);
        let g = GroupoidElement::Bundle {
            k: inst.group().unwrap().exp(&v(&[0.3, -0.2, 0.5])),
            x0: v(&[0.1, 0.2]),
            x1: v(&[0.4, -0.1]),
        };
        let c = v(&[0.01, 0.02, -0.03, 0.5, -0.25]);
        let moved = inst.translate_target(&g, &c);
        assert_relative_eq!(inst.fiber_chart(&g, &moved).unwrap(), c, epsilon = 1e-14);
        let src = inst.translate_source(&g, &c);
        assert_eq!(inst.target(&src), inst.target(&g));
        assert_relative_eq!(inst.source(&src), v(&[0.6, -0.05]), epsilon = 1e-15);
    }

    fn rot(inst: &Instance, x: f64, y: f64, z: f64) -> GroupoidElement {
        GroupoidElement::Group { g: inst.group().unwrap().exp(&v(&[x, y, z])) }
    }

    proptest! {
        #[test]
        fn groupoid_axioms_on_so3(a in proptest::collection::vec(-1.5f64..1.5, 9)) {
            let inst = Instance::so3();
            let g1 = rot(&inst, a[0], a[1], a[2]);
            let g2 = rot(&inst, a[3], a[4], a[5]);
            let g3 = rot(&inst, a[6], a[7], a[8]);
            let left = inst.compose(&inst.compose(&g1, &g2).unwrap(), &g3).unwrap();
            let right = inst.compose(&g1, &inst.compose(&g2, &g3).unwrap()).unwrap();
            prop_assert!(inst.chart_coords(&left, &right).unwrap().norm() <= 1e-10);
            let id = inst.identity_at(&inst.source(&g1));
            let e = inst.compose(&g1, &inst.inverse(&g1).unwrap()).unwrap();
            prop_assert!(inst.chart_coords(&id, &e).unwrap().norm() <= 1e-10);
            let eg = inst.compose(&id, &g1).unwrap();
            prop_assert!(inst.chart_coords(&g1, &eg).unwrap().norm() <= 1e-10);
            prop_assert!(inst.check_element(&g1).is_ok());
        }

        #[test]
        fn chart_norm_is_swap_symmetric(a in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let inst = Instance::so3();
            let g1 = rot(&inst, a[0], a[1], a[2]);
            let g2 = rot(&inst, a[3], a[4], a[5]);
            let ab = inst.chart_coords(&g1, &g2).unwrap();
            let ba = inst.chart_coords(&g2, &g1).unwrap();
            prop_assert!((ab + ba).norm() <= 1e-12);
        }
    }
}
