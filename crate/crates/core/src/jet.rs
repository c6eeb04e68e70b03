//! Order-3 Taylor jets of scalar fields on R³.
//!
//! A [`Jet3`] carries a value together with every partial derivative up to
//! order three. Arithmetic propagates all four orders exactly (truncated
//! Taylor arithmetic), so metric coefficients assembled from jets come with
//! derivatives that are accurate to round-off.
//!
//! Only the canonical components (`i <= j`, `i <= j <= k`) are computed; the
//! remaining slots are mirrored, which keeps the Hessian and third-derivative
//! arrays symmetric to exact equality.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub(crate) const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

pub(crate) const TRIPLES: [(usize, usize, usize); 10] = [
    (0, 0, 0),
    (0, 0, 1),
    (0, 0, 2),
    (0, 1, 1),
    (0, 1, 2),
    (0, 2, 2),
    (1, 1, 1),
    (1, 1, 2),
    (1, 2, 2),
    (2, 2, 2),
];

/// Value and partials `∂_i`, `∂_i∂_j`, `∂_i∂_j∂_k` of a scalar field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3 {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
    pub third: [[[f64; 3]; 3]; 3],
}

impl Default for Jet3 {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl Jet3 {
    pub const fn constant(value: f64) -> Self {
        Self {
            value,
            grad: [0.0; 3],
            hess: [[0.0; 3]; 3],
            third: [[[0.0; 3]; 3]; 3],
        }
    }

    /// The coordinate function `x_axis` evaluated at `value`.
    pub fn variable(axis: usize, value: f64) -> Self {
        let mut j = Self::constant(value);
        j.grad[axis] = 1.0;
        j
    }

    /// The affine function `value + grad · (x - x0)` at `x0`.
    pub fn affine(value: f64, grad: [f64; 3]) -> Self {
        let mut j = Self::constant(value);
        j.grad = grad;
        j
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0.0
            && self.grad.iter().all(|&g| g == 0.0)
            && self.hess.iter().flatten().all(|&h| h == 0.0)
            && self.third.iter().flatten().flatten().all(|&t| t == 0.0)
    }

    /// Partial derivative of order `|idx|` (0..=3), indices in any order.
    pub fn partial(&self, idx: &[usize]) -> f64 {
        match *idx {
            [] => self.value,
            [i] => self.grad[i],
            [i, j] => self.hess[i][j],
            [i, j, k] => self.third[i][j][k],
            _ => panic!("jets carry partials up to order 3"),
        }
    }

    fn mirror(&mut self) {
        for &(i, j) in &PAIRS {
            self.hess[j][i] = self.hess[i][j];
        }
        for &(i, j, k) in &TRIPLES {
            let v = self.third[i][j][k];
            self.third[i][k][j] = v;
            self.third[j][i][k] = v;
            self.third[j][k][i] = v;
            self.third[k][i][j] = v;
            self.third[k][j][i] = v;
        }
    }

    /// Chain rule for a univariate `φ` given `[φ, φ', φ'', φ''']` at `self.value`.
    pub fn compose(&self, d: [f64; 4]) -> Self {
        let u = self;
        let mut out = Self::constant(d[0]);
        for i in 0..3 {
            out.grad[i] = d[1] * u.grad[i];
        }
        for &(i, j) in &PAIRS {
            out.hess[i][j] = d[1] * u.hess[i][j] + d[2] * u.grad[i] * u.grad[j];
        }
        for &(i, j, k) in &TRIPLES {
            let g = &u.grad;
            let h = &u.hess;
            out.third[i][j][k] = d[1] * u.third[i][j][k]
                + d[2] * (h[i][j] * g[k] + h[i][k] * g[j] + h[j][k] * g[i])
                + d[3] * g[i] * g[j] * g[k];
        }
        out.mirror();
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        out.value *= c;
        out.grad.iter_mut().for_each(|x| *x *= c);
        out.hess.iter_mut().flatten().for_each(|x| *x *= c);
        out.third.iter_mut().flatten().flatten().for_each(|x| *x *= c);
        out
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.compose([e, e, e, e])
    }

    pub fn recip(&self) -> Self {
        let x = self.value;
        let r = 1.0 / x;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        let x = self.value;
        self.compose([s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x)])
    }

    /// Integer power `u^n`, including negative exponents.
    pub fn powi(&self, n: i32) -> Self {
        let x = self.value;
        let nf = f64::from(n);
        self.compose([
            x.powi(n),
            nf * x.powi(n - 1),
            nf * (nf - 1.0) * x.powi(n - 2),
            nf * (nf - 1.0) * (nf - 2.0) * x.powi(n - 3),
        ])
    }

    pub fn square(&self) -> Self {
        *self * *self
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(mut self, rhs: Jet3) -> Jet3 {
        self += rhs;
        self
    }
}

impl AddAssign for Jet3 {
    fn add_assign(&mut self, rhs: Jet3) {
        self.value += rhs.value;
        for i in 0..3 {
            self.grad[i] += rhs.grad[i];
            for j in 0..3 {
                self.hess[i][j] += rhs.hess[i][j];
                for k in 0..3 {
                    self.third[i][j][k] += rhs.third[i][j][k];
                }
            }
        }
    }
}

impl Add<f64> for Jet3 {
    type Output = Jet3;
    fn add(mut self, rhs: f64) -> Jet3 {
        self.value += rhs;
        self
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, rhs: Jet3) -> Jet3 {
        self + (-rhs)
    }
}

impl Sub<f64> for Jet3 {
    type Output = Jet3;
    fn sub(mut self, rhs: f64) -> Jet3 {
        self.value -= rhs;
        self
    }
}

impl Neg for Jet3 {
    type Output = Jet3;
    fn neg(self) -> Jet3 {
        self.scale(-1.0)
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, b: Jet3) -> Jet3 {
        let a = &self;
        let mut out = Jet3::constant(a.value * b.value);
        for i in 0..3 {
            out.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
        }
        for &(i, j) in &PAIRS {
            out.hess[i][j] = a.hess[i][j] * b.value
                + a.grad[i] * b.grad[j]
                + a.grad[j] * b.grad[i]
                + a.value * b.hess[i][j];
        }
        for &(i, j, k) in &TRIPLES {
            out.third[i][j][k] = a.third[i][j][k] * b.value
                + a.hess[i][j] * b.grad[k]
                + a.hess[i][k] * b.grad[j]
                + a.hess[j][k] * b.grad[i]
                + a.grad[i] * b.hess[j][k]
                + a.grad[j] * b.hess[i][k]
                + a.grad[k] * b.hess[i][j]
                + a.value * b.third[i][j][k];
        }
        out.mirror();
        out
    }
}

impl Mul<f64> for Jet3 {
    type Output = Jet3;
    fn mul(self, rhs: f64) -> Jet3 {
        self.scale(rhs)
    }
}

impl Mul<Jet3> for f64 {
    type Output = Jet3;
    fn mul(self, rhs: Jet3) -> Jet3 {
        rhs.scale(self)
    }
}

impl Div for Jet3 {
    type Output = Jet3;
    fn div(self, rhs: Jet3) -> Jet3 {
        self * rhs.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn([f64; 3]) -> Jet3, p: [f64; 3]) {
        let h = 1e-4;
        let j = f(p);
        for a in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            let (jp, jm) = (f(pp), f(pm));
            let d1 = (jp.value - jm.value) / (2.0 * h);
            assert!((d1 - j.grad[a]).abs() < 1e-6 * (1.0 + d1.abs()), "grad {a}");
            for b in 0..3 {
                let d2 = (jp.grad[b] - jm.grad[b]) / (2.0 * h);
                assert!((d2 - j.hess[a][b]).abs() < 1e-6 * (1.0 + d2.abs()));
                for c in 0..3 {
                    let d3 = (jp.hess[b][c] - jm.hess[b][c]) / (2.0 * h);
                    assert!((d3 - j.third[a][b][c]).abs() < 1e-5 * (1.0 + d3.abs()));
                }
            }
        }
    }

    fn vars(p: [f64; 3]) -> [Jet3; 3] {
        [Jet3::variable(0, p[0]), Jet3::variable(1, p[1]), Jet3::variable(2, p[2])]
    }

    #[test]
    fn product_and_quotient_match_finite_differences() {
        fd_check(
            |p| {
                let [x, y, z] = vars(p);
                (x * y * z + x.square()) / (y.square() + 2.0)
            },
            [0.3, -0.7, 1.1],
        );
    }

    #[test]
    fn transcendental_compositions_match_finite_differences() {
        fd_check(
            |p| {
                let [x, y, z] = vars(p);
                (x * 2.0 + y).sin() * (z * -0.5).exp() + (x.square() + y.square() + 1.0).sqrt()
                    - (x * z).cos()
            },
            [0.2, 0.4, -0.3],
        );
        fd_check(
            |p| {
                let [x, y, z] = vars(p);
                (x.square() + y.square() + z.square() + 1.0).powi(-2)
            },
            [0.5, 0.1, -0.2],
        );
    }

    #[test]
    fn symmetric_slots_are_exactly_equal() {
        let [x, y, z] = vars([0.31, 0.77, -0.45]);
        let j = (x * y.sin() + z.exp() * x.square()).recip() * (y * z).cos();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(j.hess[i][k], j.hess[k][i]);
                for l in 0..3 {
                    let v = j.third[i][k][l];
                    assert_eq!(v, j.third[k][i][l]);
                    assert_eq!(v, j.third[l][k][i]);
                    assert_eq!(v, j.third[i][l][k]);
                }
            }
        }
    }

    #[test]
    fn constants_have_no_derivatives() {
        let c = Jet3::constant(3.0).sin() * Jet3::constant(2.0);
        assert!(c.grad.iter().all(|&g| g == 0.0));
        assert!((c.value - 2.0 * 3.0f64.sin()).abs() < 1e-15);
    }
}
