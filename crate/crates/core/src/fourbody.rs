//! Colinear 4-body configurations `(-ρ1, -1, 1, ρ2)`: the trace of `W` along
//! the affine mass line, its boundary maxima and grid sweep, and the search
//! for admissible eigenvalue pairs `{λ1, λ2}` with `Sp(W) = {0, 2, λ1, λ2}`.
//!
//! Grid sweeps are numerical evidence only; nothing here is a certified
//! bound.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::central_config::MassLine4;
use crate::error::{Error, Result};
use crate::galois::odd_family_predicate;
use crate::potential::{hessian_w, third_contract, Configuration, MassVector};

/// Admissible values above 2 that can appear in a pair.
pub const PAIR_VALUES: [i64; 8] = [5, 9, 14, 20, 27, 35, 44, 54];

/// Upper bound on `λ1 + λ2` used for enumeration.
pub const PAIR_SUM_BOUND: i64 = 68;

/// Bound on the trace of `W` under test.
pub const TRACE_BOUND: f64 = 70.0;

const ROOT_TOL: f64 = 1e-8;

/// Masses and normalized configuration at one point of the mass line.
#[derive(Debug, Clone)]
pub struct FourBodyPoint {
    pub rho1: f64,
    pub rho2: f64,
    pub m3: f64,
    pub masses: MassVector,
    /// Configuration scaled so the multiplier is `-1`, center of mass at 0.
    pub config: Configuration,
}

impl FourBodyPoint {
    pub fn new(line: &MassLine4, m3: f64) -> Result<Self> {
        let m = line.masses(m3);
        let alpha = line.multiplier(m3);
        if alpha.abs() <= 1e-12 {
            return Err(Error::AbsoluteEquilibrium { multiplier: alpha });
        }
        let q = line.positions();
        let g: f64 = m.iter().zip(q).map(|(a, b)| a * b).sum();
        let gamma = (-alpha).cbrt();
        let qn: Vec<f64> = q.iter().map(|x| gamma * (x - g)).collect();
        Ok(Self {
            rho1: line.rho1,
            rho2: line.rho2,
            m3,
            masses: MassVector::new(m.to_vec())?,
            config: Configuration::colinear(&qn)?,
        })
    }

    pub fn w(&self) -> Result<DMatrix<f64>> {
        Ok(hessian_w(&self.masses, &self.config)?.matrix)
    }

    pub fn is_positive(&self) -> bool {
        self.masses.is_positive()
    }
}

/// Trace of `W` at the normalized configuration with masses `J(m3)`.
pub fn trace_w_4body(rho1: f64, rho2: f64, m3: f64) -> Result<f64> {
    let line = MassLine4::new(rho1, rho2)?;
    Ok(FourBodyPoint::new(&line, m3)?.w()?.trace())
}

/// The trace along one mass line, with its affine coefficients taken from the
/// samples `m3 = 0` and `m3 = 1`.
#[derive(Debug, Clone, Copy)]
pub struct TraceLine {
    pub line: MassLine4,
    pub base: f64,
    pub slope: f64,
}

impl TraceLine {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        let line = MassLine4::new(rho1, rho2)?;
        let t0 = FourBodyPoint::new(&line, 0.0)?.w()?.trace();
        let t1 = FourBodyPoint::new(&line, 1.0)?.w()?.trace();
        Ok(Self {
            line,
            base: t0,
            slope: t1 - t0,
        })
    }

    pub fn trace(&self, m3: f64) -> f64 {
        self.base + self.slope * m3
    }

    /// `m3` with the given trace; `None` when the trace does not depend on `m3`.
    pub fn solve(&self, target: f64) -> Option<f64> {
        (self.slope.abs() > 1e-13 * (1.0 + self.base.abs())).then(|| (target - self.base) / self.slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMaximum {
    /// One-based index `i` of the mass `J_i` that vanishes.
    pub which: usize,
    pub m3: f64,
    pub trace: f64,
    /// Whether `m3` lies in the closed feasible interval.
    pub feasible: bool,
}

/// Trace at the `m3` root of each `J_i`, flagged by feasibility.
pub fn boundary_maxima(rho1: f64, rho2: f64) -> Result<Vec<BoundaryMaximum>> {
    let tl = TraceLine::new(rho1, rho2)?;
    let (lo, hi) = tl
        .line
        .feasible_interval()
        .ok_or(Error::EmptyFeasibleSet { rho1, rho2 })?;
    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    Ok((0..4)
        .filter_map(|i| {
            tl.line.root(i).map(|m3| BoundaryMaximum {
                which: i + 1,
                m3,
                trace: tl.trace(m3),
                feasible: m3 >= lo - slack && m3 <= hi + slack,
            })
        })
        .collect())
}

/// Largest trace over the feasible interval, or `None` when it is empty.
pub fn max_trace(rho1: f64, rho2: f64) -> Result<Option<SweepCell>> {
    match boundary_maxima(rho1, rho2) {
        Ok(bm) => Ok(bm
            .into_iter()
            .filter(|b| b.feasible)
            .max_by(|a, b| a.trace.total_cmp(&b.trace))
            .map(|b| SweepCell {
                rho1,
                rho2,
                which: b.which,
                m3: b.m3,
                trace: b.trace,
            })),
        Err(Error::EmptyFeasibleSet { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub rho1: f64,
    pub rho2: f64,
    pub which: usize,
    pub m3: f64,
    pub trace: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub rho_max: f64,
    pub resolution: usize,
    pub refine: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            rho_max: 20.0,
            resolution: 400,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSweepResult {
    pub spec: SweepSpec,
    pub cells: Vec<SweepCell>,
    pub empty_cells: usize,
    pub global_max: f64,
    pub argmax: SweepCell,
    /// Local pattern-search refinement of the grid maximum.
    pub refined: Option<SweepCell>,
    /// Cells with trace at or above [`TRACE_BOUND`].
    pub violations: Vec<SweepCell>,
    pub note: String,
}

/// Grid `1 + (ρmax - 1) k / N` for `k = 1..=N`.
fn sweep_axis(spec: &SweepSpec) -> Vec<f64> {
    (1..=spec.resolution)
        .map(|k| 1.0 + (spec.rho_max - 1.0) * k as f64 / spec.resolution as f64)
        .collect()
}

/// Maximum of the trace over the feasible mass interval on the grid
/// `ρ1 ≥ ρ2` in `(1, ρmax]²`.
pub fn trace_sweep(spec: &SweepSpec) -> Result<TraceSweepResult> {
    if spec.resolution == 0 || !(spec.rho_max > 1.0) {
        return Err(Error::InvalidInput(format!(
            "need resolution > 0 and rho_max > 1, got {} and {}",
            spec.resolution, spec.rho_max
        )));
    }
    let axis = sweep_axis(spec);
    let rows: Vec<Result<(Vec<SweepCell>, usize)>> = axis
        .par_iter()
        .enumerate()
        .map(|(i, &rho1)| {
            let mut cells = Vec::with_capacity(i + 1);
            let mut empty = 0;
            for &rho2 in &axis[..=i] {
                match max_trace(rho1, rho2)? {
                    Some(c) => cells.push(c),
                    None => empty += 1,
                }
            }
            Ok((cells, empty))
        })
        .collect();
    let mut cells = Vec::new();
    let mut empty_cells = 0;
    for row in rows {
        let (c, e) = row?;
        cells.extend(c);
        empty_cells += e;
    }
    let argmax = *cells
        .iter()
        .max_by(|a, b| a.trace.total_cmp(&b.trace))
        .ok_or(Error::EmptyFeasibleSet {
            rho1: spec.rho_max,
            rho2: spec.rho_max,
        })?;
    let violations = cells
        .iter()
        .filter(|c| c.trace >= TRACE_BOUND)
        .copied()
        .collect();
    let refined = if spec.refine {
        Some(refine_max(argmax, (spec.rho_max - 1.0) / spec.resolution as f64)?)
    } else {
        None
    };
    Ok(TraceSweepResult {
        spec: *spec,
        global_max: argmax.trace,
        argmax,
        cells,
        empty_cells,
        refined,
        violations,
        note: format!(
            "grid evidence on (1, {}]^2 only, not a certified bound; behaviour for larger rho1 is not sampled",
            spec.rho_max
        ),
    })
}

/// Compass search for a local maximum starting from a grid cell.
fn refine_max(start: SweepCell, spacing: f64) -> Result<SweepCell> {
    let mut best = start;
    let mut h = spacing;
    while h > 1e-10 {
        let mut moved = false;
        for (d1, d2) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0)] {
            let (r1, r2) = (best.rho1 + d1 * h, best.rho2 + d2 * h);
            if !(r1 >= r2 && r2 > 1.0) {
                continue;
            }
            if let Some(c) = max_trace(r1, r2)? {
                if c.trace > best.trace {
                    best = c;
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStatus {
    Enumerated,
    ExcludedByZ0,
    Feasible,
    Order2Excluded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairWitness {
    pub rho1: f64,
    pub rho2: f64,
    pub m3: f64,
    pub masses: Vec<f64>,
    pub z0: f64,
    pub eigenvalues: Vec<f64>,
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCandidate {
    pub pair: (i64, i64),
    pub status: PairStatus,
    pub witness: Option<PairWitness>,
}

/// Unordered admissible pairs above 2 with `λ1 + λ2 < 68`.
pub fn enumerate_pairs() -> Vec<PairCandidate> {
    let mut out = Vec::new();
    for (i, &a) in PAIR_VALUES.iter().enumerate() {
        for &b in &PAIR_VALUES[i..] {
            if a + b < PAIR_SUM_BOUND {
                out.push(PairCandidate {
                    pair: (a, b),
                    status: PairStatus::Enumerated,
                    witness: None,
                });
            }
        }
    }
    out
}

/// Sum of the 2×2 principal minors.
fn second_invariant(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += w[(i, i)] * w[(j, j)] - w[(i, j)] * w[(j, i)];
        }
    }
    s
}

/// `P(0) - λ1 λ2`, where `P(0)` is the product of the two nontrivial
/// eigenvalues at the `m3` fixing `tr W = 2 + λ1 + λ2`.
#[derive(Debug, Clone, Copy)]
struct Z0Eval {
    z0: f64,
    m3: f64,
}

fn z0_on_line(tl: &TraceLine, pair: (i64, i64)) -> Option<Z0Eval> {
    let (l1, l2) = (pair.0 as f64, pair.1 as f64);
    let m3 = tl.solve(2.0 + l1 + l2)?;
    let w = FourBodyPoint::new(&tl.line, m3).ok()?.w().ok()?;
    let product = second_invariant(&w) - 2.0 * (w.trace() - 2.0);
    let z0 = product - l1 * l2;
    z0.is_finite().then_some(Z0Eval { z0, m3 })
}

fn z0_at(rho1: f64, rho2: f64, pair: (i64, i64)) -> Option<Z0Eval> {
    z0_on_line(&TraceLine::new(rho1, rho2).ok()?, pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilitySearch {
    pub grid: usize,
    pub rho_max: f64,
}

impl FeasibilitySearch {
    /// Log-spaced `ρ1 > ρ2` grid on `(1, 60]`.
    pub fn non_symmetric() -> Self {
        Self {
            grid: 200,
            rho_max: 60.0,
        }
    }

    /// Log-spaced `ρ` scan on `(1, 10⁴]`.
    pub fn symmetric() -> Self {
        Self {
            grid: 4000,
            rho_max: 1e4,
        }
    }

    fn axis(&self, start: f64) -> Vec<f64> {
        let (a, b) = (start.ln(), self.rho_max.ln());
        (0..self.grid)
            .map(|k| (a + (b - a) * k as f64 / (self.grid - 1) as f64).exp())
            .collect()
    }
}

/// Bisection for a zero of `f` on the segment from `a` to `b`, given values
/// of opposite sign at the ends. Returns the parameter in `[0, 1]`.
fn bisect_segment(f: impl Fn(f64) -> Option<f64>, fa: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Some(mid);
        }
        if (fm > 0.0) == (fa > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

fn witness(line: &MassLine4, m3: f64, z0: f64) -> Result<PairWitness> {
    let point = FourBodyPoint::new(line, m3)?;
    let w = hessian_w(&point.masses, &point.config)?;
    let eigenvalues = w.eigenvalues().unwrap_or_default();
    Ok(PairWitness {
        rho1: line.rho1,
        rho2: line.rho2,
        m3,
        masses: point.masses.values().to_vec(),
        z0,
        positive: point.is_positive(),
        eigenvalues,
    })
}

/// Zeros of `Z0` on the `ρ1 > ρ2` grid: sign changes between neighbouring
/// cells, bisected and kept only if `|Z0| ≤ 1e-8` (poles are rejected).
pub fn z0_roots_non_symmetric(
    pair: (i64, i64),
    search: &FeasibilitySearch,
) -> Result<Vec<PairWitness>> {
    let axis = search.axis(1.0005);
    let n = axis.len();
    let lines: Vec<Vec<Option<TraceLine>>> = axis
        .par_iter()
        .enumerate()
        .map(|(i, &r1)| {
            axis[..i]
                .iter()
                .map(|&r2| TraceLine::new(r1, r2).ok())
                .collect()
        })
        .collect();
    let z = |i: usize, j: usize| -> Option<f64> {
        lines[i][j].as_ref().and_then(|tl| z0_on_line(tl, pair)).map(|e| e.z0)
    };
    let edges: Vec<((usize, usize), (usize, usize))> = (0..n)
        .flat_map(|i| (0..i).flat_map(move |j| [((i, j), (i + 1, j)), ((i, j), (i, j + 1))]))
        .filter(|&(_, (a, b))| a < n && b < a)
        .collect();
    let found: Vec<Option<PairWitness>> = edges
        .par_iter()
        .map(|&((i, j), (a, b))| {
            let (za, zb) = (z(i, j)?, z(a, b)?);
            if za.signum() == zb.signum() {
                return None;
            }
            let (p1, p2) = ((axis[i], axis[j]), (axis[a], axis[b]));
            let at = |t: f64| (p1.0 + t * (p2.0 - p1.0), p1.1 + t * (p2.1 - p1.1));
            let t = bisect_segment(|t| z0_at(at(t).0, at(t).1, pair).map(|e| e.z0), za)?;
            let (r1, r2) = at(t);
            let tl = TraceLine::new(r1, r2).ok()?;
            let e = z0_on_line(&tl, pair)?;
            if e.z0.abs() > ROOT_TOL {
                return None;
            }
            witness(&tl.line, e.m3, e.z0).ok()
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// Trace on the symmetric locus `ρ1 = ρ2 = ρ`, where it does not depend on `m3`.
pub fn symmetric_trace(rho: f64) -> Result<f64> {
    Ok(TraceLine::new(rho, rho)?.base)
}

/// Solutions on the symmetric locus: `ρ` from the trace equation, then the
/// real roots in `m3` of `Z0`, which is quadratic in `m3` there.
pub fn z0_roots_symmetric(pair: (i64, i64), search: &FeasibilitySearch) -> Result<Vec<PairWitness>> {
    let target = 2.0 + (pair.0 + pair.1) as f64;
    let axis = search.axis(1.00001);
    let traces: Vec<Option<f64>> = axis.par_iter().map(|&r| symmetric_trace(r).ok()).collect();
    let mut out = Vec::new();
    for k in 1..axis.len() {
        let (Some(ta), Some(tb)) = (traces[k - 1], traces[k]) else {
            continue;
        };
        if (ta - target).signum() == (tb - target).signum() {
            continue;
        }
        let (a, b) = (axis[k - 1], axis[k]);
        let Some(t) = bisect_segment(
            |t| symmetric_trace(a + t * (b - a)).ok().map(|v| v - target),
            ta - target,
        ) else {
            continue;
        };
        let rho = a + t * (b - a);
        let line = MassLine4::new(rho, rho)?;
        let zq = |m3: f64| -> Result<f64> {
            let w = FourBodyPoint::new(&line, m3)?.w()?;
            Ok(second_invariant(&w) - 2.0 * (w.trace() - 2.0) - (pair.0 * pair.1) as f64)
        };
        let (z0, zh, z1) = (zq(0.0)?, zq(0.5)?, zq(1.0)?);
        // Exact quadratic through three samples.
        let c2 = 2.0 * (z1 - 2.0 * zh + z0);
        let c1 = z1 - z0 - c2;
        for m3 in quadratic_roots(c2, c1, z0) {
            let z = zq(m3)?;
            out.push(witness(&line, m3, z)?);
        }
    }
    Ok(out)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() <= 1e-14 * (b.abs() + c.abs()) {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r
}

/// Feasibility of a pair. The non-symmetric search ignores mass signs; the
/// symmetric search requires all masses positive.
pub fn pair_feasibility(
    pair: (i64, i64),
    symmetric: bool,
    search: &FeasibilitySearch,
) -> Result<PairCandidate> {
    let witnesses = if symmetric {
        z0_roots_symmetric(pair, search)?
            .into_iter()
            .filter(|w| w.positive)
            .collect::<Vec<_>>()
    } else {
        z0_roots_non_symmetric(pair, search)?
    };
    let best = witnesses
        .into_iter()
        .min_by(|a, b| a.z0.abs().total_cmp(&b.z0.abs()));
    Ok(PairCandidate {
        pair,
        status: if best.is_some() {
            PairStatus::Feasible
        } else {
            PairStatus::ExcludedByZ0
        },
        witness: best,
    })
}

/// Threshold on the scale-free size of the order-2 conditions.
pub const ORDER2_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Order2Report {
    pub pair: (i64, i64),
    pub status: PairStatus,
    pub points_checked: usize,
    /// Smallest `max |Z_i| / scale` over the sampled `Z0 = 0` points.
    pub min_ratio: f64,
    pub argmin: Option<PairWitness>,
    /// Largest deviation of `W E ⊂ E` over the sampled points.
    pub invariance_error: f64,
}

/// Basis of the mass-orthogonal complement of the translation `(1,…,1)` and
/// the configuration `c`.
fn stable_subspace(masses: &[f64], c: &[f64]) -> Vec<Vec<f64>> {
    let n = masses.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let constraints = [masses.to_vec(), masses.iter().zip(c).map(|(m, x)| m * x).collect()];
    let orthonormalize = |v: &mut Vec<f64>, against: &[Vec<f64>]| {
        for u in against {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        norm
    };
    let mut cons: Vec<Vec<f64>> = Vec::new();
    for k in constraints {
        let mut v = k;
        orthonormalize(&mut v, &cons.clone());
        cons.push(v);
    }
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let all: Vec<Vec<f64>> = cons.iter().chain(basis.iter()).cloned().collect();
        let mut v = e.clone();
        let norm = orthonormalize(&mut v, &all);
        candidates.push((norm, v));
        if norm > 0.3 && basis.len() < n - 2 {
            basis.push(candidates.pop().unwrap().1);
        }
    }
    // Mass-weighted scale, as for eigenvectors.
    for v in &mut basis {
        let form: f64 = v.iter().zip(masses).map(|(a, m)| m * a * a).sum();
        if form.abs() > 1e-12 {
            let s = form.abs().sqrt();
            v.iter_mut().for_each(|a| *a /= s);
        }
    }
    basis
}

/// `(max |Z_i|, scale, invariance error)` at one point.
fn order2_conditions(point: &FourBodyPoint) -> Result<(f64, f64, f64)> {
    let m = point.masses.values();
    let c = point.config.coords();
    let basis = stable_subspace(m, c);
    let (w1, w2) = (&basis[0], &basis[1]);
    let z = [
        third_contract(&point.masses, &point.config, w1, w1, w1)?,
        third_contract(&point.masses, &point.config, w1, w1, w2)?,
        third_contract(&point.masses, &point.config, w1, w2, w2)?,
        third_contract(&point.masses, &point.config, w2, w2, w2)?,
    ];
    let mut scale = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let r = (c[i] - c[j]).abs();
            let spread = (w1[i] - w1[j]).abs() + (w2[i] - w2[j]).abs();
            scale += (m[i] * m[j]).abs() * 6.0 / r.powi(4) * spread.powi(3);
        }
    }
    // W E ⊂ E: residual of W w_k after projection onto span(w1, w2),
    // via the 2×2 normal equations.
    let w = point.w()?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (g11, g12, g22) = (dot(w1, w1), dot(w1, w2), dot(w2, w2));
    let det = g11 * g22 - g12 * g12;
    let mut invariance: f64 = 0.0;
    for v in [w1, w2] {
        let wv: Vec<f64> = (&w * nalgebra::DVector::from_column_slice(v)).iter().copied().collect();
        let (b1, b2) = (dot(w1, &wv), dot(w2, &wv));
        let (c1, c2) = ((b1 * g22 - b2 * g12) / det, (g11 * b2 - g12 * b1) / det);
        let scale = wv.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        let resid = (0..wv.len())
            .map(|i| (wv[i] - c1 * w1[i] - c2 * w2[i]).abs())
            .fold(0.0, f64::max);
        invariance = invariance.max(resid / scale);
    }
    let zmax = z.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok((zmax, scale, invariance))
}

/// Evaluates the order-2 conditions `Z1..Z4` (third derivatives of `V`
/// restricted to the stable subspace) along the sampled `Z0 = 0` locus,
/// both off and on the symmetric locus. The pair is excluded when no sampled
/// point brings them to zero.
pub fn order2_exclusion_4body(
    pair: (i64, i64),
    non_symmetric: &FeasibilitySearch,
    symmetric: &FeasibilitySearch,
) -> Result<Order2Report> {
    if !odd_family_predicate(&[pair.0 as f64, pair.1 as f64]) {
        return Err(Error::InvalidInput(format!(
            "pair {pair:?} is outside the odd family"
        )));
    }
    let mut points = z0_roots_non_symmetric(pair, non_symmetric)?;
    points.extend(
        z0_roots_symmetric(pair, symmetric)?
            .into_iter()
            .filter(|w| w.m3 > 0.0),
    );
    let mut min_ratio = f64::INFINITY;
    let mut argmin = None;
    let mut invariance_error: f64 = 0.0;
    for wit in &points {
        let line = MassLine4::new(wit.rho1, wit.rho2)?;
        let point = FourBodyPoint::new(&line, wit.m3)?;
        let (zmax, scale, inv) = order2_conditions(&point)?;
        invariance_error = invariance_error.max(inv);
        let ratio = zmax / scale;
        if ratio < min_ratio {
            min_ratio = ratio;
            argmin = Some(wit.clone());
        }
    }
    Ok(Order2Report {
        pair,
        status: if min_ratio > ORDER2_TOL {
            PairStatus::Order2Excluded
        } else {
            PairStatus::Feasible
        },
        points_checked: points.len(),
        min_ratio,
        argmin,
        invariance_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_is_affine_in_m3() {
        let (r1, r2) = (4.0, 2.5);
        let t: Vec<f64> = [0.1, 0.25, 0.4]
            .iter()
            .map(|&m3| trace_w_4body(r1, r2, m3).unwrap())
            .collect();
        assert!((t[0] + t[2] - 2.0 * t[1]).abs() < 1e-10);
        let tl = TraceLine::new(r1, r2).unwrap();
        assert!((tl.trace(0.25) - t[1]).abs() < 1e-10);
    }

    #[test]
    fn symmetric_trace_is_constant() {
        let a = trace_w_4body(3.0, 3.0, 0.1).unwrap();
        let b = trace_w_4body(3.0, 3.0, 0.35).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn spectrum_contains_zero_and_two() {
        let line = MassLine4::new(5.0, 2.0).unwrap();
        let (lo, hi) = line.feasible_interval().unwrap();
        let p = FourBodyPoint::new(&line, 0.5 * (lo + hi)).unwrap();
        let eig = hessian_w(&p.masses, &p.config).unwrap().eigenvalues().unwrap();
        assert!(eig[0].abs() < 1e-9 && (eig[1] - 2.0).abs() < 1e-9, "{eig:?}");
        assert!(eig[2] > 2.0);
    }

    #[test]
    fn empty_near_collision_corner() {
        assert!(matches!(
            boundary_maxima(1.01, 1.005),
            Err(Error::EmptyFeasibleSet { .. })
        ));
    }

    #[test]
    fn boundary_maxima_below_bound() {
        for i in 0..20 {
            for j in 0..=i {
                let r1 = 1.1 + 3.9 * i as f64 / 19.0;
                let r2 = 1.1 + 3.9 * j as f64 / 19.0;
                if let Ok(bm) = boundary_maxima(r1, r2) {
                    for b in bm.iter().filter(|b| b.feasible) {
                        assert!(b.trace <= 69.9, "{r1} {r2} {b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn j1_root_infeasible_for_large_rho1() {
        for i in 0..15 {
            for j in 0..10 {
                let r1 = 5.0 + i as f64;
                let r2 = (1.05 + (r1 - 1.05) * j as f64 / 9.0).min(r1);
                let line = MassLine4::new(r1, r2).unwrap();
                let m3 = line.root(0).unwrap();
                assert!(line.masses(m3).iter().any(|&m| m < 0.0), "{r1} {r2}");
            }
        }
    }

    #[test]
    fn pair_enumeration() {
        let pairs: Vec<(i64, i64)> = enumerate_pairs().iter().map(|p| p.pair).collect();
        assert_eq!(pairs.len(), 26);
        assert!(!pairs.contains(&(14, 54)));
        assert!(pairs.contains(&(27, 35)));
        assert!(pairs.iter().all(|&(a, b)| a > 2 && b > 2 && a + b < 68));
    }

    #[test]
    fn quadratic_root_helper() {
        let mut r = quadratic_roots(1.0, -3.0, 2.0);
        r.sort_by(f64::total_cmp);
        assert_eq!(r, vec![1.0, 2.0]);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
    }

    #[test]
    fn stable_subspace_is_mass_orthogonal() {
        let m = [0.2, 0.3, 0.1, 0.4];
        let c = [-1.5, -0.4, 0.6, 1.1];
        let basis = stable_subspace(&m, &c);
        assert_eq!(basis.len(), 2);
        for v in &basis {
            let t: f64 = v.iter().zip(&m).map(|(a, b)| a * b).sum();
            let h: f64 = v.iter().zip(&m).zip(&c).map(|((a, b), x)| a * b * x).sum();
            assert!(t.abs() < 1e-13 && h.abs() < 1e-13);
        }
    }
}
