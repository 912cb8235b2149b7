//! Univariate polynomials: floating-point real roots through the companion
//! matrix, and exact Sturm-sequence root counting over the rationals.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Coefficients in ascending order of degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Companion matrix of the monic normalization.
    fn companion(&self) -> DMatrix<f64> {
        let n = self.degree();
        let lead = self.coeffs[n];
        let mut m = DMatrix::zeros(n, n);
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            m[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        m
    }

    /// Real roots in ascending order: eigenvalues of the companion matrix
    /// with negligible imaginary part, each polished by Newton's method.
    pub fn real_roots(&self) -> Vec<f64> {
        if self.degree() == 0 {
            return Vec::new();
        }
        let dp = self.derivative();
        let mut roots: Vec<f64> = self
            .companion()
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
            .map(|z| self.polish(&dp, z.re))
            .collect();
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
        roots
    }

    fn polish(&self, dp: &Polynomial, mut x: f64) -> f64 {
        for _ in 0..50 {
            let (f, df) = (self.eval(x), dp.eval(x));
            if df == 0.0 {
                break;
            }
            let step = f / df;
            x -= step;
            if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        x
    }
}

/// Exact polynomial over the rationals, ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalPoly {
    coeffs: Vec<BigRational>,
}

impl RationalPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_integers(coeffs: &[i64]) -> Self {
        Self::new(
            coeffs
                .iter()
                .map(|&c| BigRational::from_integer(BigInt::from(c)))
                .collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    fn lead(&self) -> &BigRational {
        self.coeffs.last().expect("polynomial has at least one coefficient")
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::new(vec![BigRational::zero()]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * BigRational::from_integer(BigInt::from(k)))
                .collect(),
        )
    }

    /// Remainder of Euclidean division by `divisor` (non-zero).
    pub fn rem(&self, divisor: &Self) -> Self {
        let mut r = self.coeffs.clone();
        let dd = divisor.degree();
        let lead = divisor.lead().clone();
        while r.len() > dd {
            let shift = r.len() - 1 - dd;
            let factor = r[r.len() - 1].clone() / &lead;
            for (k, c) in divisor.coeffs.iter().enumerate() {
                r[shift + k] -= &factor * c;
            }
            r.pop();
        }
        if r.is_empty() {
            r.push(BigRational::zero());
        }
        Self::new(r)
    }

    /// Sign of `p(x)` as `x → +∞`.
    fn sign_at_infinity(&self) -> i32 {
        sign(self.lead())
    }

    /// Canonical Sturm chain `p, p', -rem(p_{k-1}, p_k), ...`.
    pub fn sturm_chain(&self) -> Vec<Self> {
        let mut chain = vec![self.clone(), self.derivative()];
        loop {
            let k = chain.len();
            if chain[k - 1].is_zero() {
                chain.pop();
                break;
            }
            let r = chain[k - 2].rem(&chain[k - 1]);
            if r.is_zero() {
                break;
            }
            chain.push(Self::new(r.coeffs.into_iter().map(|c| -c).collect()));
        }
        chain
    }

    /// Number of distinct real roots in `(a, +∞)`, where `p(a) ≠ 0`.
    pub fn count_roots_above(&self, a: &BigRational) -> usize {
        let chain = self.sturm_chain();
        let at_a: Vec<i32> = chain.iter().map(|p| sign(&p.eval(a))).collect();
        let at_inf: Vec<i32> = chain.iter().map(Self::sign_at_infinity).collect();
        sign_changes(&at_a).saturating_sub(sign_changes(&at_inf))
    }

    /// Number of distinct positive real roots (requires `p(0) ≠ 0`).
    pub fn count_positive_roots(&self) -> usize {
        self.count_roots_above(&BigRational::zero())
    }

    /// Descartes' rule of signs: an upper bound on positive roots.
    pub fn descartes_bound(&self) -> usize {
        let signs: Vec<i32> = self.coeffs.iter().map(sign).collect();
        sign_changes(&signs)
    }
}

fn sign(x: &BigRational) -> i32 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

fn sign_changes(signs: &[i32]) -> usize {
    let nonzero: Vec<i32> = signs.iter().copied().filter(|&s| s != 0).collect();
    nonzero.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn one() -> BigRational {
    BigRational::one()
}
