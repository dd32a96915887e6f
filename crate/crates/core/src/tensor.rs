//! Fixed-size 3-vector and 3×3 tensor algebra, plus the shape decomposition of
//! spin-spin interaction tensors into isotropic, symmetric-traceless and
//! antisymmetric parts.
//!
//! Axis convention: lab `z` is crystal \[001\] and lab `x` is crystal \[110\].
//!
//! The antisymmetric part is carried as a vector `D` with the sign fixed by
//! `J_xy - J_yx = 2 D_z` (and cyclic), so that `S1·A·S2 = D·(S1 × S2)`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used by the exact-algebra checks in this module.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vector3 {
    pub const ZERO: Vector3 = Vector3::new(0.0, 0.0, 0.0);
    pub const X: Vector3 = Vector3::new(1.0, 0.0, 0.0);
    pub const Y: Vector3 = Vector3::new(0.0, 1.0, 0.0);
    pub const Z: Vector3 = Vector3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vector3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vector3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Vector3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vector3) -> Vector3 {
        Vector3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector along `self`, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vector3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vector3 {
    type Output = Vector3;
    fn add(self, o: Vector3) -> Vector3 {
        Vector3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vector3 {
    type Output = Vector3;
    fn sub(self, o: Vector3) -> Vector3 {
        Vector3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vector3 {
    type Output = Vector3;
    fn neg(self) -> Vector3 {
        Vector3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vector3 {
    type Output = Vector3;
    fn mul(self, s: f64) -> Vector3 {
        Vector3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Index<usize> for Vector3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vector3 index {i} out of range"),
        }
    }
}

/// Real 3×3 matrix, row-major in (x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matrix3(pub [[f64; 3]; 3]);

impl Matrix3 {
    pub const ZERO: Matrix3 = Matrix3([[0.0; 3]; 3]);

    pub fn identity() -> Self {
        Matrix3::diag(1.0, 1.0, 1.0)
    }

    pub fn diag(x: f64, y: f64, z: f64) -> Self {
        Matrix3([[x, 0.0, 0.0], [0.0, y, 0.0], [0.0, 0.0, z]])
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Matrix3(rows)
    }

    /// Outer product `a bᵀ`.
    pub fn outer(a: Vector3, b: Vector3) -> Self {
        let mut m = Matrix3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a[i] * b[j];
            }
        }
        m
    }

    /// Rotation by `angle` radians about the unit `axis` (right-handed).
    pub fn rotation(axis: Vector3, angle: f64) -> Self {
        let u = axis.normalized().unwrap_or(Vector3::Z);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Matrix3([
            [
                c + u.x * u.x * t,
                u.x * u.y * t - u.z * s,
                u.x * u.z * t + u.y * s,
            ],
            [
                u.y * u.x * t + u.z * s,
                c + u.y * u.y * t,
                u.y * u.z * t - u.x * s,
            ],
            [
                u.z * u.x * t - u.y * s,
                u.z * u.y * t + u.x * s,
                c + u.z * u.z * t,
            ],
        ])
    }

    pub fn transpose(&self) -> Self {
        let mut t = Matrix3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                t.0[i][j] = self.0[j][i];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: Vector3) -> Vector3 {
        let m = &self.0;
        Vector3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Frobenius inner product `Σ A_ij B_ij`.
    pub fn frobenius_dot(&self, other: &Matrix3) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += self.0[i][j] * other.0[i][j];
            }
        }
        s
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_dot(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix3) -> f64 {
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Singular values in descending order, from the eigenvalues of `MᵀM`.
    pub fn singular_values(&self) -> [f64; 3] {
        let mtm = self.transpose() * *self;
        let mut ev = symmetric_eigenvalues(&mtm);
        for v in ev.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

impl Index<(usize, usize)> for Matrix3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Matrix3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl Add for Matrix3 {
    type Output = Matrix3;
    fn add(mut self, o: Matrix3) -> Matrix3 {
        self += o;
        self
    }
}

impl AddAssign for Matrix3 {
    fn add_assign(&mut self, o: Matrix3) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += o.0[i][j];
            }
        }
    }
}

impl Sub for Matrix3 {
    type Output = Matrix3;
    fn sub(self, o: Matrix3) -> Matrix3 {
        self + o * -1.0
    }
}

impl Mul<f64> for Matrix3 {
    type Output = Matrix3;
    fn mul(mut self, s: f64) -> Matrix3 {
        for row in self.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        self
    }
}

impl Mul for Matrix3 {
    type Output = Matrix3;
    fn mul(self, o: Matrix3) -> Matrix3 {
        let mut r = Matrix3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        r
    }
}

/// Eigenvalues of a real symmetric 3×3 matrix (closed-form trigonometric
/// solution), ascending.
pub fn symmetric_eigenvalues(m: &Matrix3) -> [f64; 3] {
    let a = &m.0;
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    if p1 == 0.0 {
        let mut d = [a[0][0], a[1][1], a[2][2]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let q = m.trace() / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (*m - Matrix3::identity() * q) * (1.0 / p);
    let r = (b.det() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut ev = [e1, e2, e3];
    ev.sort_by(f64::total_cmp);
    ev
}

/// Isotropic / symmetric-traceless / antisymmetric split of a coupling tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingDecomposition {
    /// Isotropic scalar, `trace(J)/3` (GHz).
    pub j0: f64,
    /// Symmetric traceless part (GHz).
    pub v: Matrix3,
    /// Antisymmetric vector (GHz).
    pub d: Vector3,
}

/// Matrix form of `D·(S1 × S2)`.
pub fn antisymmetric_matrix(d: Vector3) -> Matrix3 {
    Matrix3([[0.0, d.z, -d.y], [-d.z, 0.0, d.x], [d.y, -d.x, 0.0]])
}

pub fn decompose_coupling(j: &Matrix3) -> CouplingDecomposition {
    let j0 = j.trace() / 3.0;
    let jt = j.transpose();
    let v = (*j + jt) * 0.5 - Matrix3::identity() * j0;
    let m = &j.0;
    let d = Vector3::new(
        0.5 * (m[1][2] - m[2][1]),
        0.5 * (m[2][0] - m[0][2]),
        0.5 * (m[0][1] - m[1][0]),
    );
    CouplingDecomposition { j0, v, d }
}

/// Inverse of [`decompose_coupling`]. `V` must be symmetric and traceless to
/// within [`EXACT_TOL`] (scaled by its magnitude).
pub fn compose_coupling(d: &CouplingDecomposition) -> Result<Matrix3> {
    let scale = d.v.frobenius_norm().max(1.0);
    let asym = d.v.max_abs_diff(&d.v.transpose());
    if asym > EXACT_TOL * scale {
        return Err(Error::InvalidTensor(format!(
            "symmetric part is not symmetric (max |V - Vᵀ| = {asym:e})"
        )));
    }
    let tr = d.v.trace();
    if tr.abs() > EXACT_TOL * scale {
        return Err(Error::InvalidTensor(format!(
            "symmetric part is not traceless (trace = {tr:e})"
        )));
    }
    Ok(Matrix3::identity() * d.j0 + d.v + antisymmetric_matrix(d.d))
}

/// `R·M·Rᵀ` for a proper rotation `R`.
pub fn rotate_g_tensor(m: &Matrix3, r: &Matrix3) -> Result<Matrix3> {
    const ROT_TOL: f64 = 1e-10;
    let rrt = *r * r.transpose();
    let orth = rrt.max_abs_diff(&Matrix3::identity());
    let det = r.det();
    if orth > ROT_TOL || (det - 1.0).abs() > ROT_TOL {
        return Err(Error::InvalidTensor(format!(
            "not a proper rotation (|RRᵀ - I| = {orth:e}, det = {det})"
        )));
    }
    Ok(*r * *m * r.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_coupling_is_isotropic() {
        let d = decompose_coupling(&(Matrix3::identity() * 5.0));
        assert!((d.j0 - 5.0).abs() < EXACT_TOL);
        assert!(d.v.frobenius_norm() < EXACT_TOL);
        assert!(d.d.norm() < EXACT_TOL);
    }

    #[test]
    fn pure_antisymmetric_gives_dz() {
        let mut j = Matrix3::ZERO;
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -1.0;
        let d = decompose_coupling(&j);
        assert_eq!(d.j0, 0.0);
        assert!(d.v.frobenius_norm() < EXACT_TOL);
        assert_eq!(d.d, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn ising_ground_state_decomposition() {
        // trace/3 and symmetrisation by hand: 209/3 = 69.666..
        let d = decompose_coupling(&Matrix3::diag(0.0, 0.0, 209.0));
        let third = 209.0 / 3.0;
        assert!((d.j0 - third).abs() < 1e-12);
        assert!(d.v.max_abs_diff(&Matrix3::diag(-third, -third, 2.0 * third)) < 1e-12);
        assert!((d.j0 - 69.667).abs() < 1e-3);
        assert!((d.v[(2, 2)] - 139.333).abs() < 1e-3);
        assert_eq!(d.d, Vector3::ZERO);
    }

    #[test]
    fn compose_known_cases() {
        let j = compose_coupling(&CouplingDecomposition {
            j0: 0.0,
            v: Matrix3::ZERO,
            d: Vector3::new(0.0, 0.0, 1.0),
        })
        .unwrap();
        assert_eq!(j[(0, 1)], 1.0);
        assert_eq!(j[(1, 0)], -1.0);
        let j = compose_coupling(&CouplingDecomposition {
            j0: 5.0,
            v: Matrix3::ZERO,
            d: Vector3::ZERO,
        })
        .unwrap();
        assert_eq!(j, Matrix3::identity() * 5.0);
    }

    #[test]
    fn compose_rejects_bad_symmetric_part() {
        let bad = CouplingDecomposition {
            j0: 0.0,
            v: Matrix3::diag(1.0, 0.0, 0.0),
            d: Vector3::ZERO,
        };
        assert!(compose_coupling(&bad).is_err());
        let mut v = Matrix3::ZERO;
        v[(0, 1)] = 1.0;
        let bad = CouplingDecomposition {
            j0: 0.0,
            v,
            d: Vector3::ZERO,
        };
        assert!(compose_coupling(&bad).is_err());
    }

    #[test]
    fn cross_product_form_matches_matrix() {
        // a·A(D)·b == D·(a × b)
        let d = Vector3::new(0.3, -1.2, 2.0);
        let a = Vector3::new(1.0, 2.0, -0.5);
        let b = Vector3::new(-0.7, 0.1, 0.9);
        let lhs = a.dot(antisymmetric_matrix(d).mul_vec(b));
        assert!((lhs - d.dot(a.cross(b))).abs() < 1e-14);
    }

    #[test]
    fn rotation_cases() {
        let m = Matrix3::diag(0.0, 0.0, 7.0);
        assert_eq!(rotate_g_tensor(&m, &Matrix3::identity()).unwrap(), m);
        let r = Matrix3::rotation(Vector3::Y, std::f64::consts::FRAC_PI_2);
        let rot = rotate_g_tensor(&m, &r).unwrap();
        assert!(rot.max_abs_diff(&Matrix3::diag(7.0, 0.0, 0.0)) < 1e-12);
        let reflection = Matrix3::diag(1.0, 1.0, -1.0);
        assert!(rotate_g_tensor(&m, &reflection).is_err());
        assert!(rotate_g_tensor(&m, &(Matrix3::identity() * 2.0)).is_err());
    }

    #[test]
    fn closed_form_eigenvalues() {
        let ev = symmetric_eigenvalues(&Matrix3::from_rows([
            [2.0, 1.0, 0.0],
            [1.0, 2.0, 0.0],
            [0.0, 0.0, 5.0],
        ]));
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
        assert!((ev[2] - 5.0).abs() < 1e-12);
    }
}
