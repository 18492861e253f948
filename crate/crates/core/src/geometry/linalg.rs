//! Fixed-size 3-vectors and 3×3 matrices.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3([T::zero(); 3])
    }

    #[inline]
    pub fn unit(axis: usize) -> Self {
        let mut v = Self::zero();
        v.0[axis] = T::one();
        v
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        let a = &self.0;
        let b = &o.0;
        Vec3([
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ])
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Outer product `self · otherᵀ`.
    pub fn outer(&self, other: &Self) -> Mat3<T> {
        let mut m = Mat3::zero();
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] = self.0[r] * other.0[c];
            }
        }
        m
    }

    /// Skew-symmetric cross-product matrix `[v]×`.
    pub fn hat(&self) -> Mat3<T> {
        let [x, y, z] = self.0;
        let o = T::zero();
        Mat3([[o, -z, y], [z, o, -x], [-y, x, o]])
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        Self::diag(T::one(), T::one(), T::one())
    }

    pub fn diag(a: T, b: T, c: T) -> Self {
        let mut m = Self::zero();
        m.0[0][0] = a;
        m.0[1][1] = b;
        m.0[2][2] = c;
        m
    }

    pub fn from_columns(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        let mut m = Self::zero();
        for r in 0..3 {
            m.0[r][0] = c0.0[r];
            m.0[r][1] = c1.0[r];
            m.0[r][2] = c2.0[r];
        }
        m
    }

    #[inline]
    pub fn column(&self, c: usize) -> Vec3<T> {
        Vec3([self.0[0][c], self.0[1][c], self.0[2][c]])
    }

    #[inline]
    pub fn set_column(&mut self, c: usize, v: Vec3<T>) {
        for r in 0..3 {
            self.0[r][c] = v.0[r];
        }
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                m.0[c][r] = self.0[r][c];
            }
        }
        m
    }

    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3([
            m[0][0] * v.0[0] + m[0][1] * v.0[1] + m[0][2] * v.0[2],
            m[1][0] * v.0[0] + m[1][1] * v.0[1] + m[1][2] * v.0[2],
            m[2][0] * v.0[0] + m[2][1] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    /// `selfᵀ · v` without materializing the transpose.
    #[inline]
    pub fn tr_mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3([
            m[0][0] * v.0[0] + m[1][0] * v.0[1] + m[2][0] * v.0[2],
            m[0][1] * v.0[0] + m[1][1] * v.0[1] + m[2][1] * v.0[2],
            m[0][2] * v.0[0] + m[1][2] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    pub fn scale(&self, s: T) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    /// Frobenius inner product `Σ aᵢⱼ bᵢⱼ`.
    pub fn frobenius_dot(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for r in 0..3 {
            for c in 0..3 {
                acc += self.0[r][c] * other.0[r][c];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for r in 0..3 {
            for c in 0..3 {
                worst = worst.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut m = Mat3::zero();
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] = self.0[r][0] * o.0[0][c] + self.0[r][1] * o.0[1][c] + self.0[r][2] * o.0[2][c];
            }
        }
        m
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self;
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] += o.0[r][c];
            }
        }
        m
    }
}

impl<T: Real> AddAssign for Mat3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ` of a 3×3 matrix.
#[derive(Clone, Copy, Debug)]
pub struct Svd3<T> {
    pub u: Mat3<T>,
    pub singular_values: [T; 3],
    pub v: Mat3<T>,
}

/// One-sided (Hestenes) Jacobi SVD. Singular values come out sorted in
/// descending order; `u` and `v` are orthogonal but may carry a reflection.
pub fn svd3<T: Real>(a: &Mat3<T>) -> Svd3<T> {
    let mut work = *a;
    let mut v = Mat3::identity();
    let tol = T::epsilon();

    for _sweep in 0..60 {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let cp = work.column(p);
            let cq = work.column(q);
            let alpha = cp.norm_squared();
            let beta = cq.norm_squared();
            let gamma = cp.dot(&cq);
            if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (gamma + gamma);
            let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = c * t;
            work.set_column(p, cp * c - cq * s);
            work.set_column(q, cp * s + cq * c);
            let vp = v.column(p);
            let vq = v.column(q);
            v.set_column(p, vp * c - vq * s);
            v.set_column(q, vp * s + vq * c);
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize, 1, 2];
    let norms = [work.column(0).norm(), work.column(1).norm(), work.column(2).norm()];
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = Mat3::zero();
    let mut v_sorted = Mat3::zero();
    let mut s = [T::zero(); 3];
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        v_sorted.set_column(dst, v.column(src));
    }

    // Columns of U for (numerically) zero singular values are completed to
    // an orthonormal basis.
    let floor = s[0] * T::epsilon() * T::lit(64.0);
    let mut have = 0;
    for (dst, &src) in order.iter().enumerate() {
        if s[dst] > floor && s[dst] > T::zero() {
            u.set_column(dst, work.column(src).scale(T::one() / s[dst]));
            have += 1;
        } else {
            break;
        }
    }
    if have < 3 {
        complete_basis(&mut u, have);
    }

    Svd3 {
        u,
        singular_values: s,
        v: v_sorted,
    }
}

fn complete_basis<T: Real>(u: &mut Mat3<T>, have: usize) {
    if have == 0 {
        *u = Mat3::identity();
        return;
    }
    if have == 1 {
        let a = u.column(0);
        // Pick the coordinate axis least aligned with `a`.
        let mut axis = 0;
        let mut smallest = a.0[0].abs();
        for k in 1..3 {
            if a.0[k].abs() < smallest {
                smallest = a.0[k].abs();
                axis = k;
            }
        }
        let e = Vec3::unit(axis);
        let b = e - a.scale(a.dot(&e));
        let b = b.scale(T::one() / b.norm());
        u.set_column(1, b);
    }
    let c = u.column(0).cross(&u.column(1));
    u.set_column(2, c);
}
