//! Integrable restrictions of the n-body problem to invariant linear
//! subspaces: the planar 5-body parallelogram model, the spatial n+3-body
//! polygon model, and an adaptive simulator reporting drift of first
//! integrals.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DVector;
use ode_solvers::dop853::Dop853;
use ode_solvers::dop_shared::{IntegrationError, OutputType, System};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{acceleration, eval_potential, gradient, Configuration, MassVector};

const ORTHONORMAL_TOL: f64 = 1e-12;

/// Linear subspace of configuration space `R^{n·d}` with an orthonormal basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantSubspace {
    pub n: usize,
    pub d: usize,
    pub basis: Vec<Vec<f64>>,
    pub masses: MassVector,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt, dropping vectors whose remainder falls below `tol`.
fn gram_schmidt(vectors: impl IntoIterator<Item = Vec<f64>>, start: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        for _ in 0..2 {
            for u in start.iter().chain(out.iter()) {
                let c = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > tol {
            v.iter_mut().for_each(|a| *a /= norm);
            out.push(v);
        }
    }
    out
}

impl InvariantSubspace {
    /// Requires an orthonormal basis.
    pub fn new(masses: MassVector, n: usize, d: usize, basis: Vec<Vec<f64>>) -> Result<Self> {
        if masses.len() != n {
            return Err(Error::InvalidInput(format!("{} masses for {n} bodies", masses.len())));
        }
        for (i, u) in basis.iter().enumerate() {
            if u.len() != n * d {
                return Err(Error::InvalidInput(format!(
                    "basis vector {i} has length {}, expected {}",
                    u.len(),
                    n * d
                )));
            }
            for (j, v) in basis.iter().enumerate().take(i + 1) {
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot(u, v) - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidInput(format!(
                        "basis is not orthonormal at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, d, basis, masses })
    }

    /// Orthonormalizes a spanning set.
    pub fn from_spanning(masses: MassVector, n: usize, d: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let basis = gram_schmidt(vectors, &[], 1e-10);
        Self::new(masses, n, d, basis)
    }

    /// The subspace `{q : c·q = 0 for every constraint row c}`.
    pub fn from_constraints(
        masses: MassVector,
        n: usize,
        d: usize,
        constraints: &[Vec<f64>],
    ) -> Result<Self> {
        let cons = gram_schmidt(constraints.iter().cloned(), &[], 1e-10);
        let unit = (0..n * d).map(|k| {
            let mut e = vec![0.0; n * d];
            e[k] = 1.0;
            e
        });
        let basis = gram_schmidt(unit, &cons, 1e-6);
        Self::new(masses, n, d, basis)
    }

    /// The whole configuration space.
    pub fn full(masses: MassVector, d: usize) -> Result<Self> {
        let n = masses.len();
        let cons: Vec<Vec<f64>> = Vec::new();
        Self::from_constraints(masses, n, d, &cons)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `Bᵀ s`, flat.
    pub fn lift(&self, s: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.n * self.d];
        for (c, u) in s.iter().zip(&self.basis) {
            q.iter_mut().zip(u).for_each(|(a, b)| *a += c * b);
        }
        q
    }

    pub fn embed(&self, s: &[f64]) -> Result<Configuration> {
        Configuration::new(self.n, self.d, self.lift(s))
    }

    /// `B q`.
    pub fn project(&self, q: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|u| dot(u, q)).collect()
    }

    /// `|a⊥|∞ / max(|a|∞, 1)` for the acceleration field at `Bᵀ s`.
    pub fn leakage(&self, s: &[f64]) -> Result<f64> {
        let q = self.embed(s)?;
        let a = acceleration(&self.masses, &q)?;
        let inside = self.lift(&self.project(&a));
        let perp = a
            .iter()
            .zip(&inside)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let scale = a.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        Ok(perp / scale)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub samples: usize,
    pub max_leakage: f64,
    pub worst_point: Vec<f64>,
}

/// Samples collision-free points of the span and reports the largest
/// component of the acceleration field leaving it.
pub fn check_invariant_subspace(sub: &InvariantSubspace, samples: usize, seed: u64) -> Result<SubspaceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SubspaceReport {
        samples: 0,
        max_leakage: 0.0,
        worst_point: Vec::new(),
    };
    let mut attempts = 0;
    while report.samples < samples {
        attempts += 1;
        if attempts > 1000 * samples.max(1) {
            return Err(Error::InvalidInput(
                "could not draw collision-free points in the subspace".into(),
            ));
        }
        let s: Vec<f64> = (0..sub.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let q = sub.embed(&s)?;
        if q.min_separation() < 0.05 {
            continue;
        }
        let leak = sub.leakage(&s)?;
        if leak >= report.max_leakage {
            report.max_leakage = leak;
            report.worst_point = s;
        }
        report.samples += 1;
    }
    Ok(report)
}

/// Masses of the parallelogram model: a repelling center and four unit bodies.
pub fn five_body_masses() -> MassVector {
    MassVector::new(vec![-0.25, 1.0, 1.0, 1.0, 1.0]).expect("valid masses")
}

/// `q1 = 0`, `q4 = -q2`, `q5 = -q3` in the plane.
pub fn five_body_subspace() -> InvariantSubspace {
    let row = |pairs: &[(usize, f64)]| {
        let mut r = vec![0.0; 10];
        for &(k, v) in pairs {
            r[k] = v;
        }
        r
    };
    let constraints = [
        row(&[(0, 1.0)]),
        row(&[(1, 1.0)]),
        row(&[(2, 1.0), (6, 1.0)]),
        row(&[(3, 1.0), (7, 1.0)]),
        row(&[(4, 1.0), (8, 1.0)]),
        row(&[(5, 1.0), (9, 1.0)]),
    ];
    InvariantSubspace::from_constraints(five_body_masses(), 5, 2, &constraints).expect("valid subspace")
}

/// Full configuration for chart coordinates `(q21, q22, q31, q32)`.
pub fn five_body_embed(q4: &[f64; 4]) -> Configuration {
    let [a, b, c, d] = *q4;
    Configuration::new(5, 2, vec![0.0, 0.0, a, b, c, d, -a, -b, -c, -d]).expect("shape")
}

fn norm2(x: f64, y: f64) -> f64 {
    x.hypot(y)
}

fn check_distance(i: usize, j: usize, r: f64) -> Result<()> {
    if r > crate::potential::COLLISION_FLOOR {
        Ok(())
    } else {
        Err(Error::Collision { i, j, distance: r })
    }
}

/// `|q2 - q3|⁻¹ + |q2 + q3|⁻¹` for `q4 = (q21, q22, q31, q32)`.
pub fn restricted_potential_5body(q4: &[f64; 4]) -> Result<f64> {
    let [a, b, c, d] = *q4;
    let (r1, r2) = (norm2(a - c, b - d), norm2(a + c, b + d));
    check_distance(1, 2, r1)?;
    check_distance(1, 4, r2)?;
    Ok(1.0 / r1 + 1.0 / r2)
}

pub fn restricted_gradient_5body(q4: &[f64; 4]) -> Result<[f64; 4]> {
    let [a, b, c, d] = *q4;
    let (dx, dy, sx, sy) = (a - c, b - d, a + c, b + d);
    let (r1, r2) = (norm2(dx, dy), norm2(sx, sy));
    check_distance(1, 2, r1)?;
    check_distance(1, 4, r2)?;
    let (k1, k2) = (1.0 / r1.powi(3), 1.0 / r2.powi(3));
    Ok([
        -k1 * dx - k2 * sx,
        -k1 * dy - k2 * sy,
        k1 * dx - k2 * sx,
        k1 * dy - k2 * sy,
    ])
}

/// Orthogonal map taking `(q21, q31, q22, q32)` to two decoupled Kepler charts.
pub const DECOUPLE_R: [[f64; 4]; 4] = [
    [FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0, 0.0],
    [0.0, 0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0],
    [0.0, 0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2],
];

/// Strength of each decoupled Kepler potential `κ / |y|`.
pub const KAPPA_5BODY: f64 = FRAC_1_SQRT_2;

/// Strength of the Kepler problems followed by `q2 ± q3`.
pub const KAPPA_MIDPOINT: f64 = 2.0;

fn chart_to_r_order(q4: &[f64; 4]) -> [f64; 4] {
    [q4[0], q4[2], q4[1], q4[3]]
}

fn r_order_to_chart(x: &[f64; 4]) -> [f64; 4] {
    [x[0], x[2], x[1], x[3]]
}

/// `y = R (q21, q31, q22, q32)` split into its two planar halves.
pub fn decouple_5body(q4: &[f64; 4]) -> ([f64; 2], [f64; 2]) {
    let x = chart_to_r_order(q4);
    let y: Vec<f64> = DECOUPLE_R.iter().map(|row| dot(row, &x)).collect();
    ([y[0], y[1]], [y[2], y[3]])
}

/// Inverse of [`decouple_5body`].
pub fn recouple_5body(y1: [f64; 2], y2: [f64; 2]) -> [f64; 4] {
    let y = [y1[0], y1[1], y2[0], y2[1]];
    let mut x = [0.0; 4];
    for (i, row) in DECOUPLE_R.iter().enumerate() {
        for k in 0..4 {
            x[k] += row[k] * y[i];
        }
    }
    r_order_to_chart(&x)
}

/// `|(1/4)/r² - 1/(2r)²|`: the pull of the opposite unit mass against the
/// push of the central mass.
pub fn central_mass_cancellation_check(r: f64) -> f64 {
    (0.25 / (r * r) - 1.0 / (2.0 * r).powi(2)).abs()
}

/// `(1/2) Σ_{k=1}^{n-1} 1/sin(kπ/n)`.
pub fn polygon_alpha(n: usize) -> f64 {
    0.5 * (1..n).map(|k| 1.0 / (k as f64 * PI / n as f64).sin()).sum::<f64>()
}

/// Central mass magnitude making the unit regular n-gon of unit masses an
/// absolute equilibrium: half of [`polygon_alpha`].
pub fn polygon_equilibrium_mass(n: usize) -> f64 {
    0.5 * polygon_alpha(n)
}

/// Vertices of the unit regular n-gon, the first at `(1, 0)`.
pub fn regular_polygon(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / n as f64;
            [phi.cos(), phi.sin()]
        })
        .collect()
}

/// Unit masses on the unit n-gon plus a central mass `center_mass`.
pub fn polygon_with_center(n: usize, center_mass: f64) -> Result<(MassVector, Configuration)> {
    let mut m = vec![1.0; n];
    m.push(center_mass);
    let mut coords: Vec<f64> = regular_polygon(n).into_iter().flatten().collect();
    coords.extend([0.0, 0.0]);
    Ok((MassVector::new(m)?, Configuration::new(n + 1, 2, coords)?))
}

/// Max-norm of `∇V`; zero exactly at an absolute equilibrium.
pub fn absolute_equilibrium_check(config: &Configuration, masses: &MassVector) -> Result<f64> {
    Ok(gradient(masses, config)?
        .iter()
        .fold(0.0, |a, g| a.max(g.abs())))
}

/// Spatial n+3 model: unit masses on a regular n-gon in the horizontal plane,
/// a central mass `-α`, and two masses `4α` on the vertical axis at `±z`,
/// where `α` makes the polygon with its center an absolute equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NPlusThree {
    pub n: usize,
    pub alpha: f64,
}

impl NPlusThree {
    pub fn regular(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("need n >= 2, got {n}")));
        }
        Ok(Self {
            n,
            alpha: polygon_equilibrium_mass(n),
        })
    }

    pub fn masses(&self) -> MassVector {
        let mut m = vec![1.0; self.n];
        m.extend([-self.alpha, 4.0 * self.alpha, 4.0 * self.alpha]);
        MassVector::new(m).expect("valid masses")
    }

    /// Three-dimensional subspace: the polygon rotated and scaled in the
    /// plane, and the two vertical bodies placed symmetrically.
    pub fn subspace(&self) -> InvariantSubspace {
        let n = self.n;
        let dim = 3 * (n + 3);
        let mut bx = vec![0.0; dim];
        let mut by = vec![0.0; dim];
        let mut bz = vec![0.0; dim];
        let s = (n as f64).sqrt();
        for (i, [c, sn]) in regular_polygon(n).into_iter().enumerate() {
            bx[3 * i] = c / s;
            bx[3 * i + 1] = sn / s;
            by[3 * i] = -sn / s;
            by[3 * i + 1] = c / s;
        }
        bz[3 * (n + 1) + 2] = FRAC_1_SQRT_2;
        bz[3 * (n + 2) + 2] = -FRAC_1_SQRT_2;
        InvariantSubspace::new(self.masses(), n + 3, 3, vec![bx, by, bz]).expect("orthonormal")
    }

    /// Orthonormal chart coordinates for `q1 = (x, y, 0)`, `q_{n+2} = (0, 0, z)`.
    pub fn chart_coordinates(&self, xyz: [f64; 3]) -> [f64; 3] {
        let s = (self.n as f64).sqrt();
        [s * xyz[0], s * xyz[1], std::f64::consts::SQRT_2 * xyz[2]]
    }

    pub fn embed(&self, xyz: [f64; 3]) -> Result<Configuration> {
        self.subspace().embed(&self.chart_coordinates(xyz))
    }
}

/// `4nα / |(x, y, z)|` with `α = polygon_alpha(n)`, for `q1 = (x, y, 0)` and
/// `q_{n+2} = (0, 0, z)`.
pub fn n3_effective_potential(n: usize, state3: [f64; 3]) -> Result<f64> {
    let r = norm2(norm2(state3[0], state3[1]), state3[2]);
    check_distance(0, n + 1, r)?;
    Ok(4.0 * n as f64 * polygon_alpha(n) / r)
}

/// Gradient of [`n3_effective_potential`] in `(x, y, z)`.
pub fn n3_effective_gradient(n: usize, state3: [f64; 3]) -> Result<[f64; 3]> {
    let r = norm2(norm2(state3[0], state3[1]), state3[2]);
    check_distance(0, n + 1, r)?;
    let k = -4.0 * n as f64 * polygon_alpha(n) / r.powi(3);
    Ok([k * state3[0], k * state3[1], k * state3[2]])
}

/// Second-order dynamics `s̈ = f(s)` on a chart, with first integrals.
pub trait Chart: Sync {
    fn dim(&self) -> usize;
    fn acceleration(&self, s: &[f64]) -> Result<Vec<f64>>;
    fn integral_names(&self) -> Vec<String>;
    fn integrals(&self, s: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

/// The 5-body model in coordinates `(q21, q22, q31, q32)`, where
/// `q̈2 = ∂V/∂q2` with `V` the restricted potential.
#[derive(Debug, Clone, Copy, Default)]
pub struct FiveBodyChart;

fn kepler_energy(kappa: f64, y: [f64; 2], w: [f64; 2]) -> f64 {
    0.5 * (w[0] * w[0] + w[1] * w[1]) - kappa / norm2(y[0], y[1])
}

fn cross(y: [f64; 2], w: [f64; 2]) -> f64 {
    y[0] * w[1] - y[1] * w[0]
}

impl Chart for FiveBodyChart {
    fn dim(&self) -> usize {
        4
    }

    fn acceleration(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(restricted_gradient_5body(&[s[0], s[1], s[2], s[3]])?.to_vec())
    }

    fn integral_names(&self) -> Vec<String> {
        [
            "energy",
            "kepler_energy_1",
            "kepler_energy_2",
            "angular_momentum_1",
            "angular_momentum_2",
        ]
        .map(String::from)
        .to_vec()
    }

    fn integrals(&self, s: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let q = [s[0], s[1], s[2], s[3]];
        let p = [v[0], v[1], v[2], v[3]];
        let energy = 0.5 * dot(&p, &p) - restricted_potential_5body(&q)?;
        let (y1, y2) = decouple_5body(&q);
        let (w1, w2) = decouple_5body(&p);
        Ok(vec![
            energy,
            kepler_energy(KAPPA_5BODY, y1, w1),
            kepler_energy(KAPPA_5BODY, y2, w2),
            cross(y1, w1),
            cross(y2, w2),
        ])
    }
}

/// Full n-body dynamics restricted to an invariant subspace, in orthonormal
/// coordinates `s = B q`: `s̈ = B a(Bᵀ s)`.
#[derive(Debug, Clone)]
pub struct SubspaceChart {
    pub sub: InvariantSubspace,
}

impl Chart for SubspaceChart {
    fn dim(&self) -> usize {
        self.sub.dim()
    }

    fn acceleration(&self, s: &[f64]) -> Result<Vec<f64>> {
        let q = self.sub.embed(s)?;
        Ok(self.sub.project(&acceleration(&self.sub.masses, &q)?))
    }

    fn integral_names(&self) -> Vec<String> {
        let mut names = vec!["energy".to_string()];
        match self.sub.d {
            2 => names.push("angular_momentum".into()),
            3 => names.extend(["angular_momentum_x", "angular_momentum_y", "angular_momentum_z"].map(String::from)),
            _ => {}
        }
        names
    }

    fn integrals(&self, s: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (n, d) = (self.sub.n, self.sub.d);
        let q = self.sub.embed(s)?;
        let qd = self.sub.lift(v);
        let m = self.sub.masses.values();
        let kinetic: f64 = (0..n * d).map(|k| 0.5 * m[k / d] * qd[k] * qd[k]).sum();
        let mut out = vec![kinetic - eval_potential(&self.sub.masses, &q)?];
        let c = q.coords();
        let mut l = [0.0; 3];
        for i in 0..n {
            let (x, u) = (&c[i * d..(i + 1) * d], &qd[i * d..(i + 1) * d]);
            match d {
                2 => l[2] += m[i] * (x[0] * u[1] - x[1] * u[0]),
                3 => {
                    l[0] += m[i] * (x[1] * u[2] - x[2] * u[1]);
                    l[1] += m[i] * (x[2] * u[0] - x[0] * u[2]);
                    l[2] += m[i] * (x[0] * u[1] - x[1] * u[0]);
                }
                _ => {}
            }
        }
        match d {
            2 => out.push(l[2]),
            3 => out.extend(l),
            _ => {}
        }
        Ok(out)
    }
}

/// The n+3 model in per-body coordinates `(x, y, z)`: kinetic metric
/// `diag(n, n, 8α)` and potential [`n3_effective_potential`].
///
/// Evaluating the full force on the subspace instead loses all precision
/// whenever the vertical pair passes through the central mass: the three
/// pairwise forces there grow like `1/z²` and cancel exactly.
#[derive(Debug, Clone, Copy)]
pub struct NPlusThreeChart {
    pub model: NPlusThree,
}

impl NPlusThreeChart {
    fn metric(&self) -> [f64; 3] {
        let n = self.model.n as f64;
        [n, n, 8.0 * self.model.alpha]
    }
}

impl Chart for NPlusThreeChart {
    fn dim(&self) -> usize {
        3
    }

    fn acceleration(&self, s: &[f64]) -> Result<Vec<f64>> {
        let g = n3_effective_gradient(self.model.n, [s[0], s[1], s[2]])?;
        Ok(g.iter().zip(self.metric()).map(|(g, m)| g / m).collect())
    }

    fn integral_names(&self) -> Vec<String> {
        ["energy", "angular_momentum_z"].map(String::from).to_vec()
    }

    fn integrals(&self, s: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let m = self.metric();
        let kinetic: f64 = (0..3).map(|k| 0.5 * m[k] * v[k] * v[k]).sum();
        let potential = n3_effective_potential(self.model.n, [s[0], s[1], s[2]])?;
        Ok(vec![kinetic - potential, m[0] * (s[0] * v[1] - s[1] * v[0])])
    }
}

/// A chart composed with an orthogonal change of coordinates `s' = Q s`.
pub struct RotatedChart<'a> {
    pub inner: &'a dyn Chart,
    /// Row-major orthogonal matrix.
    pub q: Vec<Vec<f64>>,
}

impl RotatedChart<'_> {
    pub fn to_inner(&self, s: &[f64]) -> Vec<f64> {
        let n = s.len();
        (0..n).map(|k| (0..n).map(|i| self.q[i][k] * s[i]).sum()).collect()
    }

    pub fn from_inner(&self, s: &[f64]) -> Vec<f64> {
        self.q.iter().map(|row| dot(row, s)).collect()
    }
}

impl Chart for RotatedChart<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn acceleration(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.from_inner(&self.inner.acceleration(&self.to_inner(s))?))
    }

    fn integral_names(&self) -> Vec<String> {
        self.inner.integral_names()
    }

    fn integrals(&self, s: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.inner.integrals(&self.to_inner(s), &self.to_inner(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub t_end: f64,
    /// Spacing of recorded samples.
    pub dt_out: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl SimulationSpec {
    pub fn new(t_end: f64, dt_out: f64) -> Self {
        Self {
            t_end,
            dt_out,
            rtol: 1e-12,
            atol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegralDrift {
    pub name: String,
    pub initial: f64,
    pub max_change: f64,
    /// `max |I(t) - I(0)| / |I(0)|`, or the absolute change when `I(0) = 0`.
    pub drift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Positions followed by velocities, per sample.
    pub states: Vec<Vec<f64>>,
    pub integral_names: Vec<String>,
    pub integral_values: Vec<Vec<f64>>,
    pub drifts: Vec<IntegralDrift>,
    pub accepted_steps: u32,
    pub rejected_steps: u32,
}

impl TrajectoryRecord {
    pub fn drift(&self, name: &str) -> Option<f64> {
        self.drifts.iter().find(|d| d.name == name).map(|d| d.drift)
    }

    pub fn max_drift(&self) -> f64 {
        self.drifts.iter().fold(0.0, |a, d| a.max(d.drift))
    }
}

struct FirstOrder<'a> {
    chart: &'a dyn Chart,
    dim: usize,
}

impl System<f64, DVector<f64>> for FirstOrder<'_> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let (s, v) = y.as_slice().split_at(self.dim);
        dy.as_mut_slice()[..self.dim].copy_from_slice(v);
        match self.chart.acceleration(s) {
            Ok(a) => dy.as_mut_slice()[self.dim..].copy_from_slice(&a),
            // Collisions poison the step so the controller rejects it.
            Err(_) => dy.as_mut_slice()[self.dim..].fill(f64::NAN),
        }
    }
}

/// Integrates `s̈ = f(s)` with the adaptive 8th-order Dormand-Prince scheme
/// and records the chart's first integrals at every output sample.
pub fn simulate(chart: &dyn Chart, s0: &[f64], v0: &[f64], spec: &SimulationSpec) -> Result<TrajectoryRecord> {
    let dim = chart.dim();
    if s0.len() != dim || v0.len() != dim {
        return Err(Error::InvalidInput(format!("chart has dimension {dim}")));
    }
    if !(spec.t_end > 0.0 && spec.dt_out > 0.0) {
        return Err(Error::InvalidInput("t_end and dt_out must be positive".into()));
    }
    chart.acceleration(s0)?;
    // Each output interval is its own solver run ending exactly on the sample
    // time: the dense interpolant is several orders less accurate than the
    // steps themselves, which would swamp the drift being measured.
    let segments = (spec.t_end / spec.dt_out * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut times = vec![0.0];
    let mut states = vec![s0.iter().chain(v0).copied().collect::<Vec<f64>>()];
    let (mut accepted_steps, mut rejected_steps) = (0, 0);
    for k in 1..=segments {
        let t0 = times[k - 1];
        let t1 = if k == segments { spec.t_end } else { k as f64 * spec.dt_out };
        let y0 = DVector::from_column_slice(&states[k - 1]);
        let mut solver = Dop853::from_param(
            FirstOrder { chart, dim },
            t0,
            t1,
            t1 - t0,
            y0,
            spec.rtol,
            spec.atol,
            0.9,
            0.0,
            0.333,
            6.0,
            t1 - t0,
            0.0,
            u32::MAX,
            1000,
            OutputType::Sparse,
        );
        let stats = solver.integrate().map_err(|e| match e {
            IntegrationError::StepSizeUnderflow { x }
            | IntegrationError::MaxNumStepReached { x, .. }
            | IntegrationError::StiffnessDetected { x } => Error::StepFailure { t: x },
        })?;
        accepted_steps += stats.accepted_steps;
        rejected_steps += stats.rejected_steps;
        let y = solver.y_out().last().expect("solver records the final state");
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::StepFailure { t: t0 });
        }
        times.push(t1);
        states.push(y.as_slice().to_vec());
    }
    let integral_values: Vec<Vec<f64>> = states
        .iter()
        .map(|y| chart.integrals(&y[..dim], &y[dim..]))
        .collect::<Result<_>>()?;
    let names = chart.integral_names();
    let drifts = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let initial = integral_values[0][k];
            let max_change = integral_values
                .iter()
                .map(|v| (v[k] - initial).abs())
                .fold(0.0, f64::max);
            let drift = if initial == 0.0 {
                max_change
            } else {
                max_change / initial.abs()
            };
            IntegralDrift {
                name: name.clone(),
                initial,
                max_change,
                drift,
            }
        })
        .collect();
    Ok(TrajectoryRecord {
        times,
        states,
        integral_names: names,
        integral_values,
        drifts,
        accepted_steps,
        rejected_steps,
    })
}

/// Position and velocity of a circular orbit of radius `r` for `ÿ = -κ y/|y|³`.
pub fn circular_orbit(kappa: f64, r: f64, phase: f64) -> ([f64; 2], [f64; 2]) {
    let v = (kappa / r).sqrt();
    let (s, c) = phase.sin_cos();
    ([r * c, r * s], [-v * s, v * c])
}

/// Period of a bound Kepler orbit with semi-major axis `a`.
pub fn kepler_period(kappa: f64, a: f64) -> f64 {
    2.0 * PI * (a.powi(3) / kappa).sqrt()
}

/// Chart state of the 5-body model whose decoupled halves follow circular
/// orbits of radii `r1`, `r2`.
pub fn five_body_circular_state(r1: f64, r2: f64, phase1: f64, phase2: f64) -> ([f64; 4], [f64; 4]) {
    let (y1, w1) = circular_orbit(KAPPA_5BODY, r1, phase1);
    let (y2, w2) = circular_orbit(KAPPA_5BODY, r2, phase2);
    (recouple_5body(y1, y2), recouple_5body(w1, w2))
}

/// Conic through the initial state of a Kepler orbit with strength `κ`: the
/// largest relative deviation `|r (1 + e·r̂) - p| / p` along the samples.
pub fn conic_residual(kappa: f64, positions: &[[f64; 2]], velocities: &[[f64; 2]]) -> f64 {
    let (r0, v0) = (positions[0], velocities[0]);
    let l = cross(r0, v0);
    let p = l * l / kappa;
    let rn = norm2(r0[0], r0[1]);
    // e = (v × L)/κ - r̂
    let e = [v0[1] * l / kappa - r0[0] / rn, -v0[0] * l / kappa - r0[1] / rn];
    positions
        .iter()
        .map(|r| {
            let rn = norm2(r[0], r[1]);
            let cos = (e[0] * r[0] + e[1] * r[1]) / rn;
            (rn * (1.0 + cos) - p).abs() / p
        })
        .fold(0.0, f64::max)
}

/// Sampled positions and velocities of a planar orbit.
pub type PlanarTrack = (Vec<[f64; 2]>, Vec<[f64; 2]>);

/// `q2 + q3` and `q2 - q3` with their velocities, per sample of a
/// [`FiveBodyChart`] trajectory.
pub fn five_body_midpoints(record: &TrajectoryRecord) -> [PlanarTrack; 2] {
    let mut sum = (Vec::new(), Vec::new());
    let mut diff = (Vec::new(), Vec::new());
    for y in &record.states {
        sum.0.push([y[0] + y[2], y[1] + y[3]]);
        sum.1.push([y[4] + y[6], y[5] + y[7]]);
        diff.0.push([y[0] - y[2], y[1] - y[3]]);
        diff.1.push([y[4] - y[6], y[5] - y[7]]);
    }
    [sum, diff]
}
