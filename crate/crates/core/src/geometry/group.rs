//! Matrix Lie groups described by a basis of their Lie algebra.
//!
//! Algebra elements are coordinate vectors against the basis `E_a`; the
//! matrix form `Σ ξ_a E_a` is only built when a group operation needs it.
//! SO(3) ships with Rodrigues closed forms, every other group goes through
//! scaling-and-squaring series.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Below this rotation angle the SO(3) closed forms switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-4;

/// Margin kept from the SO(3) cut locus at angle π.
pub const SO3_BRANCH_MARGIN: f64 = 1e-6;

const CLOSURE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKind {
    /// `τ = exp`
    Exp,
    /// `τ(a) = I + h a`
    Affine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Closed {
    So3,
    None,
}

#[derive(Clone, Debug)]
pub struct MatrixGroup {
    n: usize,
    basis: Vec<DMatrix<f64>>,
    /// `structure[(a * d + b) * d + c] = C^c_{ab}`
    structure: Vec<f64>,
    gram_inv: DMatrix<f64>,
    closed: Closed,
    orthogonal: bool,
}

fn hat3(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0])
}

impl MatrixGroup {
    /// SO(3) with the basis `E_a = hat(e_a)`, so that `[E_a, E_b] = ε_abc E_c`.
    pub fn so3() -> Self {
        let basis = (0..3)
            .map(|a| {
                let mut v = [0.0; 3];
                v[a] = 1.0;
                hat3(&v)
            })
            .collect();
        let mut g = Self::from_basis(basis).expect("so(3) basis is valid");
        g.closed = Closed::So3;
        g
    }

    /// Builds a group from user supplied algebra basis matrices. Structure
    /// constants are recovered by projecting commutators onto the basis and
    /// the algebra is rejected if brackets do not close or Jacobi fails.
    pub fn from_basis(basis: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = basis.len();
        if d == 0 {
            return Err(Error::InvalidInstance("empty algebra basis".into()));
        }
        let n = basis[0].nrows();
        if n == 0 {
            return Err(Error::InvalidInstance("zero-size basis matrix".into()));
        }
        for (i, e) in basis.iter().enumerate() {
            if e.nrows() != n || e.ncols() != n {
                return Err(Error::InvalidInstance(format!(
                    "basis matrix {i} is {}x{}, expected {n}x{n}",
                    e.nrows(),
                    e.ncols()
                )));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInstance(format!("basis matrix {i} is not finite")));
            }
        }
        let gram = DMatrix::from_fn(d, d, |a, b| linalg::frobenius_inner(&basis[a], &basis[b]));
        if linalg::condition_number(&gram) > 1e12 {
            return Err(Error::InvalidInstance("basis matrices are linearly dependent".into()));
        }
        let gram_inv = linalg::inverse(&gram)?;
        let orthogonal = basis
            .iter()
            .all(|e| (e + e.transpose()).amax() <= 1e-14 * e.amax().max(1.0));
        let mut group = MatrixGroup {
            n,
            basis,
            structure: vec![0.0; d * d * d],
            gram_inv,
            closed: Closed::None,
            orthogonal,
        };
        let scale = group.basis.iter().map(|e| e.amax()).fold(0.0, f64::max).max(1.0);
        for a in 0..d {
            for b in 0..d {
                let comm = &group.basis[a] * &group.basis[b] - &group.basis[b] * &group.basis[a];
                let coords = group.vee(&comm);
                let back = group.hat(&coords);
                if (&back - &comm).amax() > CLOSURE_TOL * scale * scale {
                    return Err(Error::InvalidInstance(format!(
                        "bracket [E_{a}, E_{b}] leaves the span of the basis"
                    )));
                }
                for c in 0..d {
                    group.structure[(a * d + b) * d + c] = coords[c];
                }
            }
        }
        let jac = group.jacobi_defect();
        let cmax = group.structure.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        if jac > CLOSURE_TOL * cmax * cmax {
            return Err(Error::InvalidInstance(format!("Jacobi identity fails by {jac:.3e}")));
        }
        Ok(group)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Size of the ambient matrices.
    pub fn matrix_size(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    pub fn is_so3(&self) -> bool {
        self.closed == Closed::So3
    }

    /// True when every basis matrix is skew, i.e. the group sits in O(n) and
    /// polar projection is a valid way back onto it.
    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    /// `C^c_{ab}`
    pub fn structure_constant(&self, a: usize, b: usize, c: usize) -> f64 {
        let d = self.dim();
        self.structure[(a * d + b) * d + c]
    }

    /// Largest violation of the Jacobi identity over all basis triples.
    pub fn jacobi_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += self.structure_constant(b, c, m) * self.structure_constant(a, m, e)
                                + self.structure_constant(c, a, m) * self.structure_constant(b, m, e)
                                + self.structure_constant(a, b, m) * self.structure_constant(c, m, e);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    pub fn identity(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n)
    }

    /// `Σ ξ_a E_a`
    pub fn hat(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (e, &x) in self.basis.iter().zip(xi.iter()) {
            m += e * x;
        }
        m
    }

    /// Frobenius-orthogonal projection of a matrix onto the algebra, in
    /// basis coordinates. Exact for matrices already in the algebra.
    pub fn vee(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let rhs = DVector::from_iterator(
            self.dim(),
            self.basis.iter().map(|e| linalg::frobenius_inner(e, m)),
        );
        &self.gram_inv * rhs
    }

    /// `[ξ, η]` in coordinates.
    pub fn bracket(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        let mut out = DVector::zeros(d);
        for a in 0..d {
            if xi[a] == 0.0 {
                continue;
            }
            for b in 0..d {
                let w = xi[a] * eta[b];
                if w == 0.0 {
                    continue;
                }
                for c in 0..d {
                    out[c] += self.structure_constant(a, b, c) * w;
                }
            }
        }
        out
    }

    /// Matrix of `ad_ξ` acting on coordinates.
    pub fn ad_matrix(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |c, b| {
            (0..d).map(|a| self.structure_constant(a, b, c) * xi[a]).sum()
        })
    }

    /// `ad*_ξ μ` with the pairing `⟨ad*_ξ μ, η⟩ = ⟨μ, [ξ, η]⟩`.
    pub fn coad(&self, xi: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        self.ad_matrix(xi).transpose() * mu
    }

    pub fn exp(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        match self.closed {
            Closed::So3 => so3_exp(xi),
            Closed::None => expm(&self.hat(xi)),
        }
    }

    pub fn log(&self, g: &DMatrix<f64>) -> Result<DVector<f64>> {
        if g.nrows() != self.n || g.ncols() != self.n {
            return Err(Error::InvalidInput(format!(
                "group element is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                self.n,
                self.n
            )));
        }
        match self.closed {
            Closed::So3 => so3_log(g),
            Closed::None => {
                let l = logm(g)?;
                let xi = self.vee(&l);
                if (self.hat(&xi) - &l).amax() > 1e-8 * l.amax().max(1.0) {
                    return Err(Error::OutOfBranch("logarithm leaves the Lie algebra".into()));
                }
                Ok(xi)
            }
        }
    }

    /// Radius in algebra coordinates inside which `log ∘ exp = id`.
    pub fn branch_radius(&self) -> f64 {
        match self.closed {
            Closed::So3 => std::f64::consts::PI - SO3_BRANCH_MARGIN,
            // inverse scaling and squaring log is the principal logarithm;
            // spectral radius below π keeps exp injective
            Closed::None => std::f64::consts::PI / self.ad_scale(),
        }
    }

    fn ad_scale(&self) -> f64 {
        let e = self.basis.iter().map(|e| e.norm()).fold(0.0, f64::max);
        e.max(1e-300)
    }

    /// Left-trivialized derivative of exp,
    /// `d_l exp_ξ(η) = Σ_j (-1)^j ad_ξ^j η / (j+1)!`.
    pub fn dexp_left(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        let mut term = eta.clone();
        let mut sum = eta.clone();
        let scale = eta.norm().max(1.0);
        for j in 1..200 {
            term = -self.bracket(xi, &term) / ((j + 1) as f64);
            sum += &term;
            if term.norm() < 1e-15 * scale * 1e-2 {
                break;
            }
        }
        sum
    }

    /// Matrix of `d_l exp_ξ` in coordinates.
    pub fn dexp_left_matrix(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        linalg::columns_of(d, d, |e| self.dexp_left(xi, e))
    }

    pub fn dexpinv_left(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<DVector<f64>> {
        linalg::solve(&self.dexp_left_matrix(xi), eta)
            .ok_or_else(|| Error::SingularMatrix("d_l exp is not invertible".into()))
    }

    /// `τ(ξ)` for the chosen retraction, `h` enters only the affine one.
    pub fn tau(&self, kind: TauKind, xi: &DVector<f64>, h: f64) -> DMatrix<f64> {
        match kind {
            TauKind::Exp => self.exp(xi),
            TauKind::Affine => self.identity() + self.hat(xi) * h,
        }
    }

    /// `τ⁻¹(g)` in coordinates. For the affine retraction `(g − I)/h` is in
    /// general not in the algebra and is projected onto it.
    pub fn tau_inverse(&self, kind: TauKind, g: &DMatrix<f64>, h: f64) -> Result<DVector<f64>> {
        match kind {
            TauKind::Exp => self.log(g),
            TauKind::Affine => Ok(self.vee(&((g - self.identity()) / h))),
        }
    }

    /// Left-trivialized derivative `d_lτ_ξ(η)`. For the affine retraction
    /// this is the algebra projection of `(I + hX)⁻¹ hH`.
    pub fn dtau_left(
        &self,
        kind: TauKind,
        xi: &DVector<f64>,
        eta: &DVector<f64>,
        h: f64,
    ) -> Result<DVector<f64>> {
        match kind {
            TauKind::Exp => Ok(self.dexp_left(xi, eta)),
            TauKind::Affine => Ok(self.vee(&self.dtau_affine_matrix(xi, eta, h)?)),
        }
    }

    /// `(I + hX)⁻¹ hH` as a matrix, before any projection.
    pub fn dtau_affine_matrix(
        &self,
        xi: &DVector<f64>,
        eta: &DVector<f64>,
        h: f64,
    ) -> Result<DMatrix<f64>> {
        let a = self.identity() + self.hat(xi) * h;
        if linalg::condition_number(&a) > 1e12 {
            return Err(Error::SingularTau);
        }
        let inv = linalg::inverse(&a).map_err(|_| Error::SingularTau)?;
        Ok(inv * self.hat(eta) * h)
    }

    pub fn dtau_left_matrix(&self, kind: TauKind, xi: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let col = self.dtau_left(kind, xi, &linalg::unit(d, j), h)?;
            m.set_column(j, &col);
        }
        Ok(m)
    }

    pub fn dtau_inverse_left(
        &self,
        kind: TauKind,
        xi: &DVector<f64>,
        eta: &DVector<f64>,
        h: f64,
    ) -> Result<DVector<f64>> {
        let m = self.dtau_left_matrix(kind, xi, h)?;
        linalg::solve(&m, eta).ok_or(Error::SingularTau)
    }

    /// Distance of `g` from the group: `‖gᵀg − I‖` for orthogonal groups,
    /// the projection defect of `log g` otherwise.
    pub fn membership_defect(&self, g: &DMatrix<f64>) -> f64 {
        if g.nrows() != self.n || g.ncols() != self.n {
            return f64::INFINITY;
        }
        if self.orthogonal {
            let mut d = (g.transpose() * g - self.identity()).amax();
            if self.is_so3() {
                d = d.max((g.determinant() - 1.0).abs());
            }
            d
        } else {
            match logm(g) {
                Ok(l) => (self.hat(&self.vee(&l)) - &l).amax(),
                Err(_) => f64::INFINITY,
            }
        }
    }
}

fn so3_exp(xi: &DVector<f64>) -> DMatrix<f64> {
    let theta2 = xi.norm_squared();
    let theta = theta2.sqrt();
    let k = hat3(xi.as_slice());
    let (a, b) = if theta < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    DMatrix::identity(3, 3) + &k * a + &k * &k * b
}

fn so3_log(r: &DMatrix<f64>) -> Result<DVector<f64>> {
    let w = DVector::from_vec(vec![
        0.5 * (r[(2, 1)] - r[(1, 2)]),
        0.5 * (r[(0, 2)] - r[(2, 0)]),
        0.5 * (r[(1, 0)] - r[(0, 1)]),
    ]);
    let s = w.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if theta > std::f64::consts::PI - SO3_BRANCH_MARGIN {
        return Err(Error::OutOfBranch(format!("rotation angle {theta} too close to π")));
    }
    let factor = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / s
    };
    Ok(w * factor)
}

/// Matrix exponential by scaling and squaring of the Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().amax().max(a.abs().column_sum().amax());
    let mut s = 0;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as i32;
    }
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Principal matrix logarithm by inverse scaling and squaring: repeated
/// Denman–Beavers square roots followed by the Mercator series.
pub fn logm(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut x = g.clone();
    let mut k = 0;
    while (&x - &id).amax() > 0.25 {
        x = sqrtm(&x)?;
        k += 1;
        if k > 60 {
            return Err(Error::OutOfBranch("square root iteration does not approach I".into()));
        }
    }
    let e = &x - &id;
    let mut power = e.clone();
    let mut sum = e.clone();
    for j in 2..200 {
        power = &power * &e;
        let term = &power / (j as f64);
        if j % 2 == 0 {
            sum -= &term;
        } else {
            sum += &term;
        }
        if term.amax() < 1e-18 * sum.amax().max(1e-300) {
            break;
        }
    }
    Ok(sum * 2f64.powi(k))
}

fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = linalg::inverse(&y).map_err(|_| Error::OutOfBranch("singular square root".into()))?;
        let zi = linalg::inverse(&z).map_err(|_| Error::OutOfBranch("singular square root".into()))?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).amax();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.amax() {
            return Ok(y);
        }
    }
    Err(Error::OutOfBranch("matrix square root did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    /// Upper-triangular 2x2 group {[[a, b], [0, 1/a]]}: non-compact, non-abelian.
    fn affine_group() -> MatrixGroup {
        MatrixGroup::from_basis(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn so3_structure_constants_are_levi_civita() {
        let g = MatrixGroup::so3();
        assert_relative_eq!(g.structure_constant(0, 1, 2), 1.0, epsilon = 1e-15);
        assert_relative_eq!(g.structure_constant(1, 0, 2), -1.0, epsilon = 1e-15);
        assert_relative_eq!(g.structure_constant(1, 2, 0), 1.0, epsilon = 1e-15);
        assert_eq!(g.structure_constant(0, 0, 2), 0.0);
        assert!(g.jacobi_defect() < 1e-12);
        assert!(g.is_orthogonal());
    }

    #[test]
    fn non_closing_basis_is_rejected() {
        let e1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            MatrixGroup::from_basis(vec![e1, e2]),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn exp_of_zero_and_quarter_turn() {
        let g = MatrixGroup::so3();
        assert_relative_eq!(g.exp(&v(&[0.0, 0.0, 0.0])), DMatrix::identity(3, 3));
        let r = g.exp(&v(&[0.0, 0.0, std::f64::consts::FRAC_PI_2]));
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(r, expected, epsilon = 1e-15);
        assert_relative_eq!(g.log(&expected).unwrap(), v(&[0.0, 0.0, std::f64::consts::FRAC_PI_2]), epsilon = 1e-15);
        assert_relative_eq!(g.log(&DMatrix::identity(3, 3)).unwrap(), v(&[0.0; 3]));
    }

    #[test]
    fn log_rejects_half_turn() {
        let g = MatrixGroup::so3();
        let r = g.exp(&v(&[std::f64::consts::PI, 0.0, 0.0]));
        assert!(matches!(g.log(&r), Err(Error::OutOfBranch(_))));
    }

    #[test]
    fn closed_form_matches_series_near_taylor_switch() {
        let g = MatrixGroup::so3();
        for &t in &[0.5e-4, 0.99e-4, 1.01e-4, 1e-3, 1.0] {
            let xi = v(&[t * 0.6, -t * 0.8, 0.0]);
            assert_relative_eq!(g.exp(&xi), expm(&g.hat(&xi)), epsilon = 1e-15);
            assert_relative_eq!(g.log(&g.exp(&xi)).unwrap(), xi.clone(), epsilon = 1e-16);
        }
    }

    #[test]
    fn generic_group_exp_log_round_trip() {
        let g = affine_group();
        let xi = v(&[0.7, -1.3]);
        let m = g.exp(&xi);
        assert_relative_eq!(m[(1, 0)], 0.0);
        assert_relative_eq!(m[(0, 0)] * m[(1, 1)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.log(&m).unwrap(), xi, epsilon = 1e-12);
    }

    #[test]
    fn dexp_trivial_cases() {
        let g = MatrixGroup::so3();
        let eta = v(&[0.3, -0.2, 0.9]);
        assert_eq!(g.dexp_left(&v(&[0.0; 3]), &eta), eta);
        let xi = &eta * 2.5;
        assert_relative_eq!(g.dexp_left(&xi, &eta), eta.clone(), epsilon = 1e-15);
    }

    #[test]
    fn dexp_matches_central_difference_of_exp() {
        let g = MatrixGroup::so3();
        let xi = v(&[0.9, -1.4, 0.6]);
        let eta = v(&[-0.3, 0.5, 1.1]);
        let s = 1e-4;
        let d = (g.exp(&(&xi + &eta * s)) - g.exp(&(&xi - &eta * s))) / (2.0 * s);
        let fd = g.vee(&(g.exp(&xi).transpose() * d));
        let an = g.dexp_left(&xi, &eta);
        assert!((fd - an).norm() <= 10.0 * s * s);
    }

    #[test]
    fn affine_dtau_at_zero_and_against_finite_difference() {
        let g = MatrixGroup::so3();
        let h = 0.1;
        let eta = v(&[0.4, 0.1, -0.7]);
        assert_relative_eq!(g.dtau_left(TauKind::Affine, &v(&[0.0; 3]), &eta, h).unwrap(), &eta * h, epsilon = 1e-16);
        assert_eq!(g.dtau_left(TauKind::Exp, &v(&[0.0; 3]), &eta, h).unwrap(), eta);
        let xi = v(&[1.2, -0.5, 0.3]);
        let s = 1e-5;
        let tau = |x: &DVector<f64>| g.tau(TauKind::Affine, x, h);
        let d = (tau(&(&xi + &eta * s)) - tau(&(&xi - &eta * s))) / (2.0 * s);
        let fd = linalg::inverse(&tau(&xi)).unwrap() * d;
        let an = g.dtau_affine_matrix(&xi, &eta, h).unwrap();
        assert!((fd - an).amax() < 1e-9);
    }

    #[test]
    fn coad_is_mu_cross_xi_on_so3() {
        let g = MatrixGroup::so3();
        // brute-force the defining pairing over basis triples
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let (ea, eb, ec) = (linalg::unit(3, a), linalg::unit(3, b), linalg::unit(3, c));
                    let lhs = g.coad(&ea, &ec).dot(&eb);
                    let rhs = ec.dot(&g.bracket(&ea, &eb));
                    assert_eq!(lhs, rhs);
                }
            }
        }
        let xi = v(&[1.0, 2.0, -0.5]);
        let mu = v(&[0.3, -1.0, 2.0]);
        let cross = nalgebra::Vector3::new(0.3, -1.0, 2.0).cross(&nalgebra::Vector3::new(1.0, 2.0, -0.5));
        assert_relative_eq!(g.coad(&xi, &mu), v(cross.as_slice()), epsilon = 1e-15);
        assert_eq!(g.coad(&v(&[0.0; 3]), &mu), v(&[0.0; 3]));
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(x in -1.7f64..1.7, y in -1.7f64..1.7, z in -1.7f64..1.7) {
            let g = MatrixGroup::so3();
            let xi = v(&[x, y, z]);
            prop_assume!(xi.norm() <= 3.0);
            let back = g.log(&g.exp(&xi)).unwrap();
            prop_assert!((back - &xi).norm() <= 1e-10);
            let id = g.exp(&xi) * g.exp(&(-&xi));
            prop_assert!((id - DMatrix::identity(3, 3)).amax() <= 1e-12);
        }

        #[test]
        fn dexpinv_inverts_dexp(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0, e in -1.0f64..1.0) {
            let g = MatrixGroup::so3();
            let xi = v(&[x, y, z]);
            let eta = v(&[e, 1.0 - e, 0.5]);
            let back = g.dexpinv_left(&xi, &g.dexp_left(&xi, &eta)).unwrap();
            prop_assert!((back - eta).norm() <= 1e-12);
        }

        #[test]
        fn coad_pairing_identity(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
            let g = MatrixGroup::so3();
            let xi = v(&[a, b, c]);
            let mu = v(&[c, a, -b]);
            let eta = v(&[b, -c, a + 0.3]);
            let lhs = g.coad(&xi, &mu).dot(&eta) + mu.dot(&g.bracket(&eta, &xi));
            prop_assert!(lhs.abs() <= 1e-12);
        }
    }
}
