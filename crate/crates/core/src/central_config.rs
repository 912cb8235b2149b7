//! Central configurations: construction, normalization to multiplier `-1`,
//! the colinear 3-body Euler quintic and its inverse mass parametrization,
//! the affine 4-body mass line, and Moulton's colinear configurations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::potential::{acceleration, gradient, hessian_w, Configuration, MassVector};

/// Residual bound (relative to the force scale) for a central configuration.
pub const CC_TOL: f64 = 1e-10;

const ABSOLUTE_EQUILIBRIUM_TOL: f64 = 1e-12;
const SINGULAR_RHO_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralConfiguration {
    pub config: Configuration,
    pub masses: MassVector,
    pub multiplier: f64,
    pub center: Vec<f64>,
    /// Max-norm of `∇V - α m∘(q - g)`.
    pub residual: f64,
}

impl CentralConfiguration {
    /// Fits the multiplier by least squares and rejects configurations whose
    /// residual exceeds [`CC_TOL`] relative to the largest force component.
    pub fn new(masses: MassVector, config: Configuration) -> Result<Self> {
        let cc = Self::fit(masses, config)?;
        let grad = gradient(&cc.masses, &cc.config)?;
        let scale = grad.iter().fold(1.0_f64, |a, g| a.max(g.abs()));
        if cc.residual > CC_TOL * scale {
            return Err(Error::NotCentral {
                residual: cc.residual,
            });
        }
        Ok(cc)
    }

    fn fit(masses: MassVector, config: Configuration) -> Result<Self> {
        let grad = gradient(&masses, &config)?;
        let center = config.center_of_mass(&masses)?;
        let d = config.d();
        let w = masses.values();
        // rel[k] = m_i (q_i - g)_a
        let rel: Vec<f64> = (0..config.n())
            .flat_map(|i| {
                let row = config.body(i);
                let center = &center;
                (0..d).map(move |a| w[i] * (row[a] - center[a]))
            })
            .collect();
        let denom: f64 = rel.iter().map(|r| r * r).sum();
        if denom <= f64::MIN_POSITIVE {
            return Err(Error::DegenerateMass(
                "mass-weighted configuration vanishes".into(),
            ));
        }
        let multiplier = grad.iter().zip(&rel).map(|(g, r)| g * r).sum::<f64>() / denom;
        let residual = grad
            .iter()
            .zip(&rel)
            .map(|(g, r)| (g - multiplier * r).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            config,
            masses,
            multiplier,
            center,
            residual,
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.masses.is_normalized()
            && (self.multiplier + 1.0).abs() <= 1e-9
            && self.center.iter().all(|g| g.abs() <= 1e-12)
    }
}

/// Translates the center of mass to the origin, rescales masses to unit total
/// and dilates by `γ` with `γ³ = -α` so the multiplier becomes `-1`.
pub fn normalize_cc(cc: &CentralConfiguration) -> Result<CentralConfiguration> {
    let total = cc.masses.total();
    if total.abs() <= f64::EPSILON {
        return Err(Error::DegenerateMass("total mass is zero".into()));
    }
    let masses = if cc.masses.is_normalized() {
        cc.masses.clone()
    } else {
        MassVector::normalized(cc.masses.values().to_vec())?
    };
    let alpha = cc.multiplier / total;
    if alpha.abs() <= ABSOLUTE_EQUILIBRIUM_TOL {
        return Err(Error::AbsoluteEquilibrium {
            multiplier: cc.multiplier,
        });
    }
    let shift: Vec<f64> = cc.center.iter().map(|g| -g).collect();
    let gamma = (-alpha).cbrt();
    let config = cc.config.translated(&shift).scaled(gamma);
    CentralConfiguration::new(masses, config)
}

/// Coefficients (ascending in `ρ`) of the quintic satisfied by `ρ` when
/// `(-1, 0, ρ)` is a central configuration for `(m1, m2, m3)`.
pub fn euler_quintic_coeffs(m: [f64; 3]) -> [f64; 6] {
    let [m1, m2, m3] = m;
    [
        m2 + m3,
        2.0 * m2 + 3.0 * m3,
        3.0 * m3 + m2,
        -(3.0 * m1 + m2),
        -(3.0 * m1 + 2.0 * m2),
        -(m1 + m2),
    ]
}

/// Positive real roots of the Euler quintic.
pub fn euler_quintic(m: &MassVector) -> Result<Vec<f64>> {
    if m.len() != 3 {
        return Err(Error::InvalidInput(format!("expected 3 masses, got {}", m.len())));
    }
    m.require_positive()?;
    let v = m.values();
    let p = Polynomial::new(euler_quintic_coeffs([v[0], v[1], v[2]]).to_vec());
    Ok(p.real_roots().into_iter().filter(|&r| r > 0.0).collect())
}

fn quartic_q(rho: f64) -> f64 {
    1.0 + 2.0 * rho + rho.powi(2) + 2.0 * rho.powi(3) + rho.powi(4)
}

/// Affine family of normalized masses making `(-1, 0, ρ)` central.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassLine3 {
    pub rho: f64,
}

impl MassLine3 {
    pub fn new(rho: f64) -> Result<Self> {
        if !rho.is_finite() || (rho * (rho + 1.0) * quartic_q(rho)).abs() <= SINGULAR_RHO_TOL {
            return Err(Error::SingularRho(rho));
        }
        Ok(Self { rho })
    }

    pub fn masses(&self, s: f64) -> [f64; 3] {
        let r = self.rho;
        let (r2, r3, r4, r5) = (r * r, r.powi(3), r.powi(4), r.powi(5));
        let den = r * quartic_q(r);
        let m2 = -(3.0 * s * r3 + 3.0 * s * r4 + s * r5 + s - 1.0 + 3.0 * r * s - 3.0 * r
            + 3.0 * r2 * s
            - 3.0 * r2)
            / den;
        let m3 = (2.0 * r * s + r2 * s + 2.0 * s * r3 + s * r4 + s - 1.0 - 2.0 * r - r2 + r3
            + 2.0 * r4
            + r5)
            / den;
        [s, m2, m3]
    }

    /// Open interval of `s` giving all-positive masses, if non-empty.
    pub fn s_interval(&self) -> Option<(f64, f64)> {
        let at0 = self.masses(0.0);
        let at1 = self.masses(1.0);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..3 {
            let slope = at1[i] - at0[i];
            if slope == 0.0 {
                if at0[i] <= 0.0 {
                    return None;
                }
                continue;
            }
            let root = -at0[i] / slope;
            if slope > 0.0 {
                lo = lo.max(root);
            } else {
                hi = hi.min(root);
            }
        }
        (lo < hi).then_some((lo, hi))
    }
}

/// Upper end of the positivity interval for `ρ ≥ 1` in closed form.
pub fn s_upper_bound(rho: f64) -> f64 {
    (1.0 + 3.0 * rho + 3.0 * rho * rho) / (quartic_q(rho) * (1.0 + rho))
}

pub fn masses_from_rho(rho: f64, s: f64) -> Result<MassVector> {
    let line = MassLine3::new(rho)?;
    MassVector::new(line.masses(s).to_vec())
}

/// Masses `J(m3)` making `(-ρ1, -1, 1, ρ2)` central with unit total mass,
/// together with the (raw) multiplier. The family is affine in `m3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassLine4 {
    pub rho1: f64,
    pub rho2: f64,
    base: [f64; 4],
    slope: [f64; 4],
    multiplier_base: f64,
    multiplier_slope: f64,
}

impl MassLine4 {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        if !(rho1 >= rho2 && rho2 > 1.0) || !rho1.is_finite() {
            return Err(Error::InvalidInput(format!(
                "need rho1 >= rho2 > 1, got rho1 = {rho1}, rho2 = {rho2}"
            )));
        }
        let (m0, a0) = solve_4body_system(rho1, rho2, 0.0)?;
        let (m1, a1) = solve_4body_system(rho1, rho2, 1.0)?;
        let mut slope = [0.0; 4];
        for i in 0..4 {
            slope[i] = m1[i] - m0[i];
        }
        Ok(Self {
            rho1,
            rho2,
            base: m0,
            slope,
            multiplier_base: a0,
            multiplier_slope: a1 - a0,
        })
    }

    pub fn positions(&self) -> [f64; 4] {
        [-self.rho1, -1.0, 1.0, self.rho2]
    }

    pub fn config(&self) -> Configuration {
        Configuration::colinear(&self.positions()).expect("four bodies")
    }

    pub fn masses(&self, m3: f64) -> [f64; 4] {
        let mut m = [0.0; 4];
        for i in 0..4 {
            m[i] = self.base[i] + self.slope[i] * m3;
        }
        m[2] = m3;
        m
    }

    /// Coefficients `(J_i(0), dJ_i/dm3)`.
    pub fn affine(&self, i: usize) -> (f64, f64) {
        (self.base[i], self.slope[i])
    }

    /// Raw multiplier of `(-ρ1, -1, 1, ρ2)` at masses `J(m3)`.
    pub fn multiplier(&self, m3: f64) -> f64 {
        self.multiplier_base + self.multiplier_slope * m3
    }

    /// `m3` at which `J_i` vanishes (`i` zero-based).
    pub fn root(&self, i: usize) -> Option<f64> {
        let (b, s) = self.affine(i);
        (s != 0.0).then(|| -b / s)
    }

    /// Closed interval of `m3` where all masses are non-negative.
    pub fn feasible_interval(&self) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..4 {
            let (b, s) = self.affine(i);
            if s == 0.0 {
                if b < 0.0 {
                    return None;
                }
                continue;
            }
            let root = -b / s;
            if s > 0.0 {
                lo = lo.max(root);
            } else {
                hi = hi.min(root);
            }
        }
        (lo < hi).then_some((lo, hi))
    }
}

/// Solves the linear central-configuration system for `(m1, m2, m4, α, αg)`
/// at fixed `m3`, with `Σm = 1`.
fn solve_4body_system(rho1: f64, rho2: f64, m3: f64) -> Result<([f64; 4], f64)> {
    let q = [-rho1, -1.0, 1.0, rho2];
    // a_i = Σ_j m_j coef(i, j) with coef = -sign(q_i - q_j)/(q_i - q_j)²
    let coef = |i: usize, j: usize| {
        let x: f64 = q[i] - q[j];
        -x.signum() / (x * x)
    };
    let unknown_bodies = [0usize, 1, 3];
    let mut a = DMatrix::<f64>::zeros(5, 5);
    let mut b = DVector::<f64>::zeros(5);
    for i in 0..4 {
        for (col, &j) in unknown_bodies.iter().enumerate() {
            if j != i {
                a[(i, col)] = coef(i, j);
            }
        }
        a[(i, 3)] = -q[i];
        a[(i, 4)] = 1.0;
        if i != 2 {
            b[i] = -coef(i, 2) * m3;
        }
    }
    for col in 0..3 {
        a[(4, col)] = 1.0;
    }
    b[4] = 1.0 - m3;

    // Full pivoting exposes rank loss on the diagonal of U.
    let lu = a.clone().full_piv_lu();
    let diag = lu.u().diagonal();
    let (umax, umin) = diag
        .iter()
        .fold((0.0_f64, f64::INFINITY), |(hi, lo), d| (hi.max(d.abs()), lo.min(d.abs())));
    if !(umin > 1e-12 * umax) {
        return Err(Error::RankDeficiency { rho1, rho2 });
    }
    let x = lu.solve(&b).ok_or(Error::RankDeficiency { rho1, rho2 })?;
    if (&a * &x - &b).amax() > 1e-10 * (1.0 + x.amax()) {
        return Err(Error::RankDeficiency { rho1, rho2 });
    }
    Ok(([x[0], x[1], m3, x[2]], x[3]))
}

pub fn solve_masses_4body(rho1: f64, rho2: f64, m3: f64) -> Result<MassVector> {
    let line = MassLine4::new(rho1, rho2)?;
    MassVector::new(line.masses(m3).to_vec())
}

/// Moulton's colinear central configuration for the given left-to-right
/// ordering of bodies, normalized to multiplier `-1` and center of mass `0`.
pub fn moulton_solve(m: &MassVector, order: &[usize]) -> Result<CentralConfiguration> {
    let n = m.len();
    let gaps = vec![1.0; n.saturating_sub(1)];
    moulton_solve_from(m, order, &gaps)
}

/// Same as [`moulton_solve`] from a chosen starting shape, given as the
/// `n - 1` positive gaps between consecutive bodies along the ordering.
pub fn moulton_solve_from(
    m: &MassVector,
    order: &[usize],
    gaps: &[f64],
) -> Result<CentralConfiguration> {
    let n = m.len();
    m.require_positive()?;
    check_permutation(order, n)?;
    if gaps.len() != n - 1 || gaps.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "need {} positive gaps",
            n - 1
        )));
    }
    let mut q = vec![0.0; n];
    let mut x = -1.0;
    q[order[0]] = x;
    for k in 1..n {
        x += gaps[k - 1] / gaps[0];
        q[order[k]] = x;
    }
    let q = moulton_newton(m, order, q)?;
    let cc = CentralConfiguration::new(m.clone(), Configuration::colinear(&q)?)?;
    normalize_cc(&cc)
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::InvalidInput(format!("ordering must list {n} bodies")));
    }
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::InvalidInput(format!("{order:?} is not a permutation")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Residual of `a_i - α (q_i - g)` for every body except `order[0]`.
fn moulton_residual(m: &MassVector, order: &[usize], q: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let config = Configuration::colinear(q)?;
    let acc = acceleration(m, &config)?;
    let g = config.center_of_mass(m)?[0];
    Ok(order[1..]
        .iter()
        .map(|&i| acc[i] - alpha * (q[i] - g))
        .collect())
}

fn is_ordered(order: &[usize], q: &[f64]) -> bool {
    order.windows(2).all(|w| q[w[0]] < q[w[1]])
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Newton iteration on the `n - 1` unknowns `(q_{order[2..]}, α)` with
/// `q_{order[0]} = -1` and `q_{order[1]}` held fixed.
fn moulton_newton(m: &MassVector, order: &[usize], mut q: Vec<f64>) -> Result<Vec<f64>> {
    let n = q.len();
    let w = m.values();
    let total = m.total();
    if n == 2 {
        return Ok(q);
    }
    let config = Configuration::colinear(&q)?;
    let acc = acceleration(m, &config)?;
    let g = config.center_of_mass(m)?[0];
    let num: f64 = (0..n).map(|i| w[i] * acc[i] * (q[i] - g)).sum();
    let den: f64 = (0..n).map(|i| w[i] * (q[i] - g).powi(2)).sum();
    let mut alpha = num / den;

    let mut res = moulton_residual(m, order, &q, alpha)?;
    let mut best = max_abs(&res);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let config = Configuration::colinear(&q)?;
        let force_scale = max_abs(&acceleration(m, &config)?).max(1.0);
        if best <= 1e-14 * force_scale {
            return Ok(q);
        }
        let wmat = hessian_w(m, &config)?.matrix;
        let g = config.center_of_mass(m)?[0];
        let mut jac = DMatrix::<f64>::zeros(n - 1, n - 1);
        for (row, &i) in order[1..].iter().enumerate() {
            for (col, &j) in order[2..].iter().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                jac[(row, col)] = wmat[(i, j)] - alpha * (delta - w[j] / total);
            }
            jac[(row, n - 2)] = -(q[i] - g);
        }
        let rhs = -DVector::from_column_slice(&res);
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = q.clone();
            for (col, &j) in order[2..].iter().enumerate() {
                trial[j] += t * step[col];
            }
            let trial_alpha = alpha + t * step[n - 2];
            if is_ordered(order, &trial) {
                if let Ok(r) = moulton_residual(m, order, &trial, trial_alpha) {
                    let norm = max_abs(&r);
                    if norm < best {
                        q = trial;
                        alpha = trial_alpha;
                        res = r;
                        best = norm;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let config = Configuration::colinear(&q)?;
    let force_scale = max_abs(&acceleration(m, &config)?).max(1.0);
    if best <= 1e-12 * force_scale {
        return Ok(q);
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITERATIONS,
        residual: best,
    })
}
