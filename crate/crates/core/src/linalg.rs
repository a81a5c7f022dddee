//! Small fixed-size linear algebra: symmetric 3×3 tensors and their
//! Cholesky factors.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

pub type Vec3 = [f64; 3];

/// Symmetric 3×3 matrix stored as its six unique entries
/// `[xx, yy, zz, xy, xz, yz]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Sym3(pub [f64; 6]);

/// Position of `(i, j)` in the packed storage.
pub const fn sym_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) | (1, 0) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

/// `(i, j)` pairs in packed order.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

impl Sym3 {
    pub const fn identity() -> Self {
        Sym3([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        Sym3([a, b, c, 0.0, 0.0, 0.0])
    }

    pub fn scaled_identity(s: f64) -> Self {
        Sym3([s, s, s, 0.0, 0.0, 0.0])
    }

    pub fn outer(v: Vec3) -> Self {
        Sym3([
            v[0] * v[0],
            v[1] * v[1],
            v[2] * v[2],
            v[0] * v[1],
            v[0] * v[2],
            v[1] * v[2],
        ])
    }

    /// Symmetrizes a full matrix.
    pub fn from_full(m: [[f64; 3]; 3]) -> Self {
        Sym3([
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[1][2] + m[2][1]),
        ])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[sym_index(i, j)]
    }

    pub fn to_full(&self) -> [[f64; 3]; 3] {
        let s = &self.0;
        [[s[0], s[3], s[4]], [s[3], s[1], s[5]], [s[4], s[5], s[2]]]
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn det(&self) -> f64 {
        let [a, b, c, d, e, f] = self.0;
        a * (b * c - f * f) - d * (d * c - f * e) + e * (d * f - b * e)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = self.to_full();
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Eigenvalues in ascending order, closed-form trigonometric solution.
    pub fn eigenvalues(&self) -> Vec3 {
        let [a, b, c, d, e, f] = self.0;
        let p1 = d * d + e * e + f * f;
        if p1 == 0.0 {
            let mut ev = [a, b, c];
            ev.sort_by(f64::total_cmp);
            return ev;
        }
        let q = (a + b + c) / 3.0;
        let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let shifted = Sym3([(a - q) / p, (b - q) / p, (c - q) / p, d / p, e / p, f / p]);
        let r = (shifted.det() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        let mid = 3.0 * q - hi - lo;
        [lo, mid, hi]
    }

    /// Lower Cholesky factor, `None` unless numerically positive definite.
    pub fn cholesky(&self) -> Option<Lower3> {
        let [a, b, c, d, e, f] = self.0;
        if !self.is_finite() || a <= 0.0 {
            return None;
        }
        let l00 = a.sqrt();
        let l10 = d / l00;
        let l20 = e / l00;
        let s11 = b - l10 * l10;
        if s11 <= 0.0 {
            return None;
        }
        let l11 = s11.sqrt();
        let l21 = (f - l20 * l10) / l11;
        let s22 = c - l20 * l20 - l21 * l21;
        if s22 <= 0.0 {
            return None;
        }
        let l22 = s22.sqrt();
        Some(Lower3([l00, l10, l11, l20, l21, l22]))
    }

    /// Inverse via the adjugate. Only used off the hot path.
    pub fn inverse(&self) -> Option<Sym3> {
        let [a, b, c, d, e, f] = self.0;
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Sym3([
            (b * c - f * f) * inv,
            (a * c - e * e) * inv,
            (a * b - d * d) * inv,
            (e * f - d * c) * inv,
            (d * f - e * b) * inv,
            (d * e - a * f) * inv,
        ]))
    }
}

impl Add for Sym3 {
    type Output = Sym3;
    fn add(self, o: Sym3) -> Sym3 {
        let mut r = self.0;
        for (x, y) in r.iter_mut().zip(o.0) {
            *x += y;
        }
        Sym3(r)
    }
}

impl Sub for Sym3 {
    type Output = Sym3;
    fn sub(self, o: Sym3) -> Sym3 {
        let mut r = self.0;
        for (x, y) in r.iter_mut().zip(o.0) {
            *x -= y;
        }
        Sym3(r)
    }
}

impl Mul<Sym3> for f64 {
    type Output = Sym3;
    fn mul(self, m: Sym3) -> Sym3 {
        Sym3(m.0.map(|x| self * x))
    }
}

/// Lower-triangular 3×3 factor stored row-wise `[l00, l10, l11, l20, l21, l22]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lower3(pub [f64; 6]);

impl Lower3 {
    pub fn det(&self) -> f64 {
        self.0[0] * self.0[2] * self.0[5]
    }

    /// Solves `L z = r` by forward substitution.
    #[inline]
    pub fn solve(&self, r: Vec3) -> Vec3 {
        let [l00, l10, l11, l20, l21, l22] = self.0;
        let z0 = r[0] / l00;
        let z1 = (r[1] - l10 * z0) / l11;
        let z2 = (r[2] - l20 * z0 - l21 * z1) / l22;
        [z0, z1, z2]
    }

    /// `L Lᵀ`.
    pub fn gram(&self) -> Sym3 {
        let [l00, l10, l11, l20, l21, l22] = self.0;
        Sym3([
            l00 * l00,
            l10 * l10 + l11 * l11,
            l20 * l20 + l21 * l21 + l22 * l22,
            l10 * l00,
            l20 * l00,
            l20 * l10 + l21 * l11,
        ])
    }
}

pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eigenvalues_of_diagonal_are_sorted_entries() {
        assert_eq!(Sym3::diag(3.0, 1.0, 2.0).eigenvalues(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        // [[2,1,0],[1,2,0],[0,0,5]] has spectrum {1, 3, 5}
        let m = Sym3([2.0, 2.0, 5.0, 1.0, 0.0, 0.0]);
        let ev = m.eigenvalues();
        for (a, b) in ev.iter().zip([1.0, 3.0, 5.0]) {
            assert!((a - b).abs() < 1e-13, "{ev:?}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(Sym3::diag(1.0, -1.0, 1.0).cholesky().is_none());
        assert!(Sym3([1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).cholesky().is_none());
    }

    fn spd() -> impl Strategy<Value = Sym3> {
        prop::array::uniform9(-1.0f64..1.0).prop_map(|a| {
            // A Aᵀ + 0.1 I
            let m = [[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]];
            let mut s = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] = (0..3).map(|k| m[i][k] * m[j][k]).sum::<f64>();
                }
                s[i][i] += 0.1;
            }
            Sym3::from_full(s)
        })
    }

    proptest! {
        #[test]
        fn cholesky_reconstructs(m in spd()) {
            let l = m.cholesky().unwrap();
            let g = l.gram();
            prop_assert!((g - m).max_abs() <= 1e-13 * m.max_abs().max(1.0));
            prop_assert!((l.det() * l.det() - m.det()).abs() <= 1e-12 * m.det().abs().max(1.0));
        }

        #[test]
        fn eigenvalues_match_trace_and_determinant(m in spd()) {
            let ev = m.eigenvalues();
            prop_assert!(ev[0] <= ev[1] && ev[1] <= ev[2]);
            prop_assert!((ev.iter().sum::<f64>() - m.trace()).abs() < 1e-12);
            prop_assert!((ev[0] * ev[1] * ev[2] - m.det()).abs() < 1e-10);
        }
    }
}
