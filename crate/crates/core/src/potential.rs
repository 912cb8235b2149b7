//! The Newtonian force function `V(q) = Σ_{i<j} m_i m_j / |q_i - q_j|` and its
//! first three derivatives, in closed form, for any spatial dimension.
//!
//! Sign convention: `V` is the positive force function and the equations of
//! motion are `m_i q̈_i = ∂V/∂q_i`, so the physical energy is `T - V`.
//! Coordinates are stored body-major: component `a` of body `i` sits at
//! flat index `i * d + a`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise distances below this are treated as collisions.
pub const COLLISION_FLOOR: f64 = 1e-14;

const NORMALIZED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassVector {
    values: Vec<f64>,
    normalized: bool,
}

impl MassVector {
    /// Signed masses are accepted; positivity is a separate predicate.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least two masses, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite mass {bad}")));
        }
        let normalized = (values.iter().sum::<f64>() - 1.0).abs() <= NORMALIZED_TOL;
        Ok(Self { values, normalized })
    }

    /// Rescales so the masses sum to one.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let total: f64 = values.iter().sum();
        if total.abs() <= f64::EPSILON {
            return Err(Error::DegenerateMass("total mass is zero".into()));
        }
        Self::new(values.into_iter().map(|m| m / total).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&m| m > 0.0)
    }

    pub fn require_positive(&self) -> Result<()> {
        match self.values.iter().position(|&m| m <= 0.0) {
            Some(i) => Err(Error::DegenerateMass(format!(
                "mass {} is {} (positive masses required)",
                i + 1,
                self.values[i]
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    n: usize,
    d: usize,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(n: usize, d: usize, coords: Vec<f64>) -> Result<Self> {
        if n < 2 || d == 0 {
            return Err(Error::InvalidInput(format!("bad shape n={n}, d={d}")));
        }
        if coords.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates for n={n}, d={d}, got {}",
                n * d,
                coords.len()
            )));
        }
        Ok(Self { n, d, coords })
    }

    /// Colinear configuration (`d = 1`).
    pub fn colinear(positions: &[f64]) -> Result<Self> {
        Self::new(positions.len(), 1, positions.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged coordinate rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn body(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.coords.chunks(self.d).map(<[f64]>::to_vec).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for row in out.coords.chunks_mut(self.d) {
            for (x, s) in row.iter_mut().zip(shift) {
                *x += s;
            }
        }
        out
    }

    /// Embeds into a higher dimension, padding with zeros.
    pub fn embed(&self, d: usize) -> Result<Self> {
        if d < self.d {
            return Err(Error::InvalidInput(format!(
                "cannot embed dimension {} into {d}",
                self.d
            )));
        }
        let mut coords = vec![0.0; self.n * d];
        for i in 0..self.n {
            coords[i * d..i * d + self.d].copy_from_slice(self.body(i));
        }
        Self::new(self.n, d, coords)
    }

    pub fn center_of_mass(&self, m: &MassVector) -> Result<Vec<f64>> {
        let total = m.total();
        if total.abs() <= f64::EPSILON {
            return Err(Error::DegenerateMass("total mass is zero".into()));
        }
        let mut g = vec![0.0; self.d];
        for (i, &mi) in m.values().iter().enumerate() {
            for (ga, x) in g.iter_mut().zip(self.body(i)) {
                *ga += mi * x;
            }
        }
        g.iter_mut().for_each(|x| *x /= total);
        Ok(g)
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.n {
            for j in i + 1..self.n {
                best = best.min(dist(self.body(i), self.body(j)));
            }
        }
        best
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_shapes(m: &MassVector, q: &Configuration) -> Result<()> {
    if m.len() != q.n() {
        return Err(Error::InvalidInput(format!(
            "{} masses for {} bodies",
            m.len(),
            q.n()
        )));
    }
    Ok(())
}

/// Visits every pair `i < j` with `x = q_i - q_j` and `r = |x|`.
fn for_each_pair(
    q: &Configuration,
    mut visit: impl FnMut(usize, usize, &[f64], f64),
) -> Result<()> {
    let d = q.d();
    let mut x = vec![0.0; d];
    for i in 0..q.n() {
        for j in i + 1..q.n() {
            let (qi, qj) = (q.body(i), q.body(j));
            for a in 0..d {
                x[a] = qi[a] - qj[a];
            }
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(r > COLLISION_FLOOR) {
                return Err(Error::Collision { i, j, distance: r });
            }
            visit(i, j, &x, r);
        }
    }
    Ok(())
}

pub fn eval_potential(m: &MassVector, q: &Configuration) -> Result<f64> {
    check_shapes(m, q)?;
    let w = m.values();
    let mut v = 0.0;
    for_each_pair(q, |i, j, _, r| v += w[i] * w[j] / r)?;
    Ok(v)
}

/// `∂V/∂q`, flat body-major.
pub fn gradient(m: &MassVector, q: &Configuration) -> Result<Vec<f64>> {
    check_shapes(m, q)?;
    let (w, d) = (m.values(), q.d());
    let mut g = vec![0.0; q.n() * d];
    for_each_pair(q, |i, j, x, r| {
        let c = -w[i] * w[j] / (r * r * r);
        for a in 0..d {
            g[i * d + a] += c * x[a];
            g[j * d + a] -= c * x[a];
        }
    })?;
    Ok(g)
}

/// `(1/m_i) ∂V/∂q_i`, evaluated without dividing by the mass so zero
/// masses are harmless.
pub fn acceleration(m: &MassVector, q: &Configuration) -> Result<Vec<f64>> {
    check_shapes(m, q)?;
    let (w, d) = (m.values(), q.d());
    let mut acc = vec![0.0; q.n() * d];
    for_each_pair(q, |i, j, x, r| {
        let r3 = r * r * r;
        for a in 0..d {
            acc[i * d + a] -= w[j] * x[a] / r3;
            acc[j * d + a] += w[i] * x[a] / r3;
        }
    })?;
    Ok(acc)
}

/// Raw Hessian `∂²V/∂q∂q` (symmetric).
pub fn hessian(m: &MassVector, q: &Configuration) -> Result<DMatrix<f64>> {
    let w = m.values();
    pair_hessian_sum(m, q, |i, j| w[i] * w[j], |i, j| w[i] * w[j])
}

/// Assembles `Σ_pairs` of the `1/r` pair Hessian `H(x) = -I/r³ + 3xxᵀ/r⁵`,
/// with row block `i` weighted by `wi(i, j)` and row block `j` by `wj(i, j)`.
fn pair_hessian_sum(
    m: &MassVector,
    q: &Configuration,
    wi: impl Fn(usize, usize) -> f64,
    wj: impl Fn(usize, usize) -> f64,
) -> Result<DMatrix<f64>> {
    check_shapes(m, q)?;
    let d = q.d();
    let dim = q.n() * d;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for_each_pair(q, |i, j, x, r| {
        let r3 = r * r * r;
        let r5 = r3 * r * r;
        let (ci, cj) = (wi(i, j), wj(i, j));
        for a in 0..d {
            for b in 0..d {
                let delta = if a == b { 1.0 } else { 0.0 };
                let hab = -delta / r3 + 3.0 * x[a] * x[b] / r5;
                h[(i * d + a, i * d + b)] += ci * hab;
                h[(i * d + a, j * d + b)] -= ci * hab;
                h[(j * d + a, j * d + b)] += cj * hab;
                h[(j * d + a, i * d + b)] -= cj * hab;
            }
        }
    })?;
    Ok(h)
}

/// `W = diag(m)⁻¹ ∇²V`, the Jacobian of the acceleration field.
#[derive(Debug, Clone)]
pub struct HessianW {
    pub matrix: DMatrix<f64>,
    pub config: Configuration,
    pub masses: MassVector,
}

pub fn hessian_w(m: &MassVector, q: &Configuration) -> Result<HessianW> {
    let w = m.values();
    // Row block i of W carries the partner mass m_j, row block j carries m_i.
    let matrix = pair_hessian_sum(m, q, |_, j| w[j], |i, _| w[i])?;
    Ok(HessianW {
        matrix,
        config: q.clone(),
        masses: m.clone(),
    })
}

/// Tolerance on imaginary parts before a spectrum counts as non-real.
const IMAG_TOL: f64 = 1e-9;

impl HessianW {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            ..self.clone()
        }
    }

    /// Per-coordinate masses (each body's mass repeated `d` times).
    fn coordinate_masses(&self) -> Vec<f64> {
        let d = self.config.d();
        self.masses
            .values()
            .iter()
            .flat_map(|&m| std::iter::repeat_n(m, d))
            .collect()
    }

    /// `D^{1/2} W D^{-1/2}`, symmetric when all masses are positive.
    fn symmetrized(&self) -> DMatrix<f64> {
        let sq: Vec<f64> = self.coordinate_masses().iter().map(|m| m.sqrt()).collect();
        let n = self.dim();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = sq[i] * self.matrix[(i, j)] / sq[j];
            }
        }
        (&s + s.transpose()) * 0.5
    }

    /// Eigenvalues in ascending order. With signed masses the spectrum may be
    /// complex, reported as [`Error::NonRealSpectrum`].
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut vals: Vec<f64> = if self.masses.is_positive() {
            SymmetricEigen::new(self.symmetrized())
                .eigenvalues
                .iter()
                .copied()
                .collect()
        } else {
            let complex = self.matrix.complex_eigenvalues();
            let scale = 1.0 + complex.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let max_imag = complex.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            if max_imag > IMAG_TOL * scale {
                return Err(Error::NonRealSpectrum { max_imag });
            }
            complex.iter().map(|z| z.re).collect()
        };
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }

    /// Eigenpairs for positive masses, ascending. Eigenvectors are normalized
    /// to unit mass-weighted norm (`xᵀ D x = 1`) with the first significant
    /// component positive.
    pub fn eigen_pairs(&self) -> Result<Vec<(f64, Vec<f64>)>> {
        self.masses.require_positive()?;
        let eig = SymmetricEigen::new(self.symmetrized());
        let inv_sqrt: Vec<f64> = self
            .coordinate_masses()
            .iter()
            .map(|m| 1.0 / m.sqrt())
            .collect();
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..self.dim())
            .map(|k| {
                let y = eig.eigenvectors.column(k);
                let mut x: Vec<f64> = y.iter().zip(&inv_sqrt).map(|(v, s)| v * s).collect();
                fix_sign(&mut x);
                (eig.eigenvalues[k], x)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(pairs)
    }

    /// Eigenvector for a known eigenvalue, by inverse iteration. Works for
    /// signed masses; scaled so `|xᵀ D x| = 1` when that form is
    /// non-degenerate, with the first significant component positive.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.dim();
        let shift = lambda + 1e-10 * (1.0 + lambda.abs());
        let lu = (&self.matrix - DMatrix::<f64>::identity(n, n) * shift).full_piv_lu();
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
        for _ in 0..3 {
            if let Some(next) = lu.solve(&v) {
                let norm = next.norm();
                if norm.is_finite() && norm > 0.0 {
                    v = next / norm;
                }
            }
        }
        let mut x: Vec<f64> = v.iter().copied().collect();
        let form: f64 = x
            .iter()
            .zip(self.coordinate_masses())
            .map(|(v, m)| m * v * v)
            .sum();
        if form.abs() > 1e-12 {
            let s = form.abs().sqrt();
            x.iter_mut().for_each(|v| *v /= s);
        }
        fix_sign(&mut x);
        x
    }

    /// The matrix reordered axis-major: all first components, then all
    /// second components, and so on.
    pub fn axis_major(&self) -> DMatrix<f64> {
        let (n, d) = (self.config.n(), self.config.d());
        let perm = |k: usize| (k % n) * d + k / n;
        DMatrix::from_fn(n * d, n * d, |r, c| self.matrix[(perm(r), perm(c))])
    }
}

fn fix_sign(x: &mut [f64]) {
    let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// `D³V(q)·(X, Y, Z)` from the closed-form third derivative of `1/r`:
/// `T(u,v,w) = 3[(u·v)(x·w) + (u·w)(x·v) + (v·w)(x·u)]/r⁵ - 15(x·u)(x·v)(x·w)/r⁷`.
pub fn third_contract(
    m: &MassVector,
    q: &Configuration,
    x_dir: &[f64],
    y_dir: &[f64],
    z_dir: &[f64],
) -> Result<f64> {
    check_shapes(m, q)?;
    let (w, d) = (m.values(), q.d());
    let dim = q.n() * d;
    if [x_dir, y_dir, z_dir].iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidInput(format!(
            "contraction vectors must have length {dim}"
        )));
    }
    let rel = |v: &[f64], i: usize, j: usize, a: usize| v[i * d + a] - v[j * d + a];
    let mut total = 0.0;
    for_each_pair(q, |i, j, x, r| {
        let (mut uv, mut uw, mut vw) = (0.0, 0.0, 0.0);
        let (mut xu, mut xv, mut xw) = (0.0, 0.0, 0.0);
        for a in 0..d {
            let (u, v, s) = (rel(x_dir, i, j, a), rel(y_dir, i, j, a), rel(z_dir, i, j, a));
            uv += u * v;
            uw += u * s;
            vw += v * s;
            xu += x[a] * u;
            xv += x[a] * v;
            xw += x[a] * s;
        }
        let r2 = r * r;
        let r5 = r2 * r2 * r;
        let r7 = r5 * r2;
        let t = 3.0 * (uv * xw + uw * xv + vw * xu) / r5 - 15.0 * xu * xv * xw / r7;
        total += w[i] * w[j] * t;
    })?;
    Ok(total)
}

/// Unit translation along one axis, as a flat vector.
pub fn translation_vector(n: usize, d: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * d];
    for i in 0..n {
        v[i * d + axis] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn masses(v: &[f64]) -> MassVector {
        MassVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn unit_pair_and_triple() {
        let q = Configuration::colinear(&[0.0, 1.0]).unwrap();
        assert_eq!(eval_potential(&masses(&[1.0, 1.0]), &q).unwrap(), 1.0);
        let q = Configuration::colinear(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(eval_potential(&masses(&[1.0, 1.0, 1.0]), &q).unwrap(), 2.5);
    }

    #[test]
    fn scaling_halves_value() {
        let m = masses(&[1.0, 1.0]);
        let q = Configuration::colinear(&[0.0, 1.0]).unwrap();
        let v1 = eval_potential(&m, &q).unwrap();
        let v2 = eval_potential(&m, &q.scaled(2.0)).unwrap();
        assert_eq!(v2, v1 / 2.0);
    }

    #[test]
    fn collision_is_reported() {
        let q = Configuration::colinear(&[0.0, 0.0, 1.0]).unwrap();
        let err = eval_potential(&masses(&[1.0, 1.0, 1.0]), &q).unwrap_err();
        assert!(matches!(err, Error::Collision { i: 0, j: 1, .. }));
        assert!(gradient(&masses(&[1.0, 1.0, 1.0]), &q).is_err());
    }

    #[test]
    fn symmetric_middle_force_vanishes() {
        let q = Configuration::colinear(&[-1.0, 0.0, 1.0]).unwrap();
        let g = gradient(&masses(&[1.0, 1.0, 1.0]), &q).unwrap();
        assert_eq!(g[1], 0.0);
        assert!((g[0] + g[2]).abs() < 1e-15);
    }

    #[test]
    fn mass_validation() {
        assert!(MassVector::new(vec![1.0]).is_err());
        assert!(MassVector::new(vec![1.0, f64::NAN]).is_err());
        let m = MassVector::new(vec![-0.25, 1.0, 1.0]).unwrap();
        assert!(!m.is_positive());
        assert!(!m.is_normalized());
        assert!(MassVector::normalized(vec![2.0, 2.0]).unwrap().is_normalized());
    }

    #[test]
    fn translations_span_kernel_of_w() {
        let m = masses(&[0.3, 1.2, 0.7, 2.0]);
        let q = Configuration::new(4, 2, vec![0.1, 0.0, 1.3, -0.4, -0.8, 0.9, 0.5, 1.7]).unwrap();
        let w = hessian_w(&m, &q).unwrap();
        for axis in 0..2 {
            let out = w.apply(&translation_vector(4, 2, axis));
            assert!(out.iter().all(|v| v.abs() < 1e-12), "{out:?}");
        }
    }

    #[test]
    fn w_rows_are_hessian_rows_over_mass() {
        let m = masses(&[0.3, 1.2, 0.7]);
        let q = Configuration::new(3, 2, vec![0.1, 0.0, 1.3, -0.4, -0.8, 0.9]).unwrap();
        let h = hessian(&m, &q).unwrap();
        let w = hessian_w(&m, &q).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let expect = h[(r, c)] / m.values()[r / 2];
                assert!((w.matrix[(r, c)] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn axis_major_groups_components() {
        let m = masses(&[1.0, 2.0]);
        let q = Configuration::new(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let w = hessian_w(&m, &q).unwrap();
        let a = w.axis_major();
        // Pair along x: xx entries 2m/r³ and yy entries -m/r³, no xy coupling.
        assert!((a[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((a[(2, 2)] + 2.0).abs() < 1e-14);
        assert!(a[(0, 2)].abs() < 1e-14);
    }

    #[test]
    fn signed_masses_can_give_complex_spectrum() {
        let m = masses(&[1.0, -3.0, 1.0]);
        let q = Configuration::colinear(&[-1.0, 0.2, 1.0]).unwrap();
        let w = hessian_w(&m, &q).unwrap();
        match w.eigenvalues() {
            Ok(vals) => assert_eq!(vals.len(), 3),
            Err(e) => assert!(matches!(e, Error::NonRealSpectrum { .. })),
        }
    }

    #[test]
    fn eigen_pairs_need_positive_masses() {
        let m = masses(&[1.0, -1.0, 1.0]);
        let q = Configuration::colinear(&[-1.0, 0.0, 1.0]).unwrap();
        assert!(hessian_w(&m, &q).unwrap().eigen_pairs().is_err());
    }
}
