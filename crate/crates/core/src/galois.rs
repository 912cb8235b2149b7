//! Eigenvalue admissibility and the obstruction checks for colinear
//! configurations: the nontrivial eigenvalue `G(s, ρ)` of the 3-body problem,
//! the exceptional mass curves `E_k`, order-2 and order-3 conditions, and the
//! planar block spectrum.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Neg;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::central_config::{moulton_solve, normalize_cc, CentralConfiguration, MassLine3};
use crate::error::{Error, Result};
use crate::poly::RationalPoly;
use crate::potential::{hessian_w, third_contract, Configuration, HessianW, MassVector};

/// Tolerance for matching an eigenvalue to an admissible value.
pub const ADMISSIBLE_TOL: f64 = 1e-8;

/// `(k - 1)(k + 2) / 2`.
pub fn admissible_value(k: u32) -> i64 {
    let k = i64::from(k);
    (k - 1) * (k + 2) / 2
}

/// Smallest `k` whose admissible value is within [`ADMISSIBLE_TOL`] of `lambda`.
pub fn admissible(lambda: f64) -> Option<u32> {
    if !lambda.is_finite() || lambda < -1.0 - ADMISSIBLE_TOL {
        return None;
    }
    // k² + k - 2 - 2λ = 0
    let estimate = (-1.0 + (9.0 + 8.0 * lambda).max(0.0).sqrt()) / 2.0;
    let base = estimate.floor().max(0.0) as u32;
    (base.saturating_sub(1)..=base + 1)
        .find(|&k| (admissible_value(k) as f64 - lambda).abs() <= ADMISSIBLE_TOL)
}

/// Admissible values with their indices, up to a ceiling on `k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub ceiling: u32,
    values: Vec<i64>,
    index: BTreeMap<i64, u32>,
}

impl Default for AdmissibleSet {
    fn default() -> Self {
        Self::new(200)
    }
}

impl AdmissibleSet {
    pub fn new(ceiling: u32) -> Self {
        let values: Vec<i64> = (0..=ceiling).map(admissible_value).collect();
        let index = values.iter().zip(0..).map(|(&v, k)| (v, k)).collect();
        Self {
            ceiling,
            values,
            index,
        }
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn contains(&self, value: i64) -> bool {
        self.index.contains_key(&value)
    }

    pub fn index_of(&self, value: i64) -> Option<u32> {
        self.index.get(&value).copied()
    }

    /// Admissible values in the open interval `(lo, hi)`.
    pub fn between(&self, lo: f64, hi: f64) -> Vec<i64> {
        self.values
            .iter()
            .copied()
            .filter(|&v| (v as f64) > lo && (v as f64) < hi)
            .collect()
    }
}

fn quartic_q(rho: f64) -> f64 {
    1.0 + 2.0 * rho + rho.powi(2) + 2.0 * rho.powi(3) + rho.powi(4)
}

/// `s` at which the 3-body multiplier vanishes.
pub fn g_singular_s(rho: f64) -> f64 {
    (1.0 + rho).powi(2) / quartic_q(rho)
}

/// Nontrivial eigenvalue of `W` at the normalized configuration `(-1, 0, ρ)`
/// with masses [`MassLine3::masses`]`(s)`.
pub fn g_eigenvalue(s: f64, rho: f64) -> Result<f64> {
    MassLine3::new(rho)?;
    let r = rho;
    let (r2, r3, r4) = (r * r, r.powi(3), r.powi(4));
    let lin = s * r4 + 2.0 * s * r3 - r2 + r2 * s - 2.0 * r + 2.0 * r * s - 1.0 + s;
    let den = lin * quartic_q(r);
    if den.abs() <= 1e-12 {
        return Err(Error::AbsoluteEquilibrium { multiplier: lin });
    }
    Ok(-4.0 * (1.0 + r) * r3 * (2.0 * r2 + 3.0 * r + 2.0) / den)
}

/// Image of the positivity interval under `G(·, ρ)`, for `ρ ≥ 1`.
pub fn g_interval(rho: f64) -> Result<(f64, f64)> {
    let line = MassLine3::new(rho)?;
    let (lo, hi) = line.s_interval().ok_or(Error::EmptyFeasibleSet {
        rho1: rho,
        rho2: rho,
    })?;
    let (a, b) = (g_eigenvalue(lo, rho)?, g_eigenvalue(hi, rho)?);
    Ok((a.min(b), a.max(b)))
}

/// Closed-form endpoints of [`g_interval`] for `ρ ≥ 1`.
pub fn g_interval_closed_form(rho: f64) -> (f64, f64) {
    let r = rho;
    let cubic = 2.0 * r * r + 3.0 * r + 2.0;
    let q = quartic_q(r);
    let lo = 4.0 * (1.0 + r) * r.powi(3) * cubic / ((1.0 + r).powi(2) * q);
    let hi = 4.0 * cubic * (1.0 + r).powi(2) / q;
    (lo, hi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EkPoint {
    pub k: i64,
    pub rho: f64,
    pub masses: MassVector,
}

impl EkPoint {
    /// Normalized central configuration `(-1, 0, ρ)` carrying these masses.
    pub fn central_configuration(&self) -> Result<CentralConfiguration> {
        let q = Configuration::colinear(&[-1.0, 0.0, self.rho])?;
        normalize_cc(&CentralConfiguration::new(self.masses.clone(), q)?)
    }

    pub fn hessian_w(&self) -> Result<HessianW> {
        let cc = self.central_configuration()?;
        hessian_w(&cc.masses, &cc.config)
    }
}

fn check_ek_index(k: i64) -> Result<()> {
    let admissible = u32::try_from(k)
        .ok()
        .and_then(|v| admissible(v as f64))
        .is_some();
    if k < 5 || !admissible {
        return Err(Error::InvalidK(k));
    }
    Ok(())
}

fn ek_formula<T>(k: T, r: T, c: impl Fn(i64) -> T) -> [T; 3]
where
    T: Num + Neg<Output = T> + Clone,
{
    let p = |e: u32| (0..e).fold(c(1), |acc, _| acc * r.clone());
    let sq = c(1) + c(2) * p(3) + p(4) + c(2) * p(1) + p(2);
    let den = k.clone() * sq.clone() * sq;
    let kk = |n: i64| c(n) * k.clone();
    let m1 = (p(1) + c(1))
        * (c(-8) * p(5) + kk(1) * p(5) - c(12) * p(4) + kk(3) * p(4) - c(8) * p(3)
            + kk(3) * p(3)
            + kk(3) * p(2)
            + kk(3) * p(1)
            + k.clone())
        / den.clone();
    let m2 = -((c(-8) * p(4) + kk(1) * p(4) - c(28) * p(3) + kk(2) * p(3) + kk(1) * p(2)
        - c(40) * p(2)
        - c(28) * p(1)
        + kk(2) * p(1)
        - c(8)
        + k.clone())
        * p(2))
        / den.clone();
    let m3 = (p(1) + c(1))
        * (kk(1) * p(5) + kk(3) * p(4) + kk(3) * p(3) - c(8) * p(2) + kk(3) * p(2)
            - c(12) * p(1)
            + kk(3) * p(1)
            - c(8)
            + k)
        * p(2)
        / den;
    [m1, m2, m3]
}

/// Masses on the exceptional curve `E_k`, normalized to unit total.
pub fn ek_masses(k: i64, rho: f64) -> Result<EkPoint> {
    check_ek_index(k)?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let m = ek_formula(k as f64, rho, |n| n as f64);
    Ok(EkPoint {
        k,
        rho,
        masses: MassVector::new(m.to_vec())?,
    })
}

/// Exact rational masses on `E_k`.
pub fn ek_masses_exact(k: i64, rho: &BigRational) -> Result<[BigRational; 3]> {
    check_ek_index(k)?;
    if *rho <= BigRational::from_integer(BigInt::from(0)) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let c = |n: i64| BigRational::from_integer(BigInt::from(n));
    Ok(ek_formula(c(k), rho.clone(), c))
}

/// Admissible values reached by `G(I(ρ), ρ)` for `ρ` on a uniform grid of
/// `[1, rho_max]`.
pub fn reachable_ks(rho_max: f64, grid: usize) -> Result<BTreeSet<i64>> {
    if !(rho_max >= 1.0) || grid == 0 {
        return Err(Error::InvalidInput(format!(
            "need rho_max >= 1 and a non-empty grid, got {rho_max}, {grid}"
        )));
    }
    let table = AdmissibleSet::default();
    let mut hit = BTreeSet::new();
    for i in 0..grid {
        let rho = if grid == 1 {
            1.0
        } else {
            1.0 + (rho_max - 1.0) * i as f64 / (grid - 1) as f64
        };
        let (lo, hi) = g_interval(rho)?;
        hit.extend(table.between(lo, hi));
    }
    Ok(hit)
}

/// `P(ρ)` from the order-2 analysis on `E_k`; the obstruction vanishes exactly
/// where `(ρ - 1) P(ρ) = 0`.
pub fn order2_p(k: f64, rho: f64) -> f64 {
    let c = [
        k + 10.0,
        5.0 * k + 50.0,
        8.0 * k + 120.0,
        7.0 * k + 158.0,
        8.0 * k + 120.0,
        5.0 * k + 50.0,
        k + 10.0,
    ];
    c.iter().rev().fold(0.0, |acc, v| acc * rho + v)
}

/// `D³V(X, X, X)` at the normalized `E_k` configuration, `X` the eigenvector
/// of `W` for the eigenvalue `k`.
pub fn order2_obstruction_3body(k: i64, rho: f64) -> Result<f64> {
    if k != 5 && k != 14 {
        return Err(Error::InvalidK(k));
    }
    let point = ek_masses(k, rho)?;
    let cc = point.central_configuration()?;
    let w = hessian_w(&cc.masses, &cc.config)?;
    let x = w.eigenvector(k as f64);
    third_contract(&cc.masses, &cc.config, &x, &x, &x)
}

/// Coefficients (ascending) of the degree-14 order-3 polynomial for `k = 9`.
pub const ORDER3_K9_COEFFS: [i64; 15] = [
    179523957,
    1436191656,
    5144769684,
    11297844542,
    17938383865,
    23104821764,
    25814403801,
    26361946842,
    25814403801,
    23104821764,
    17938383865,
    11297844542,
    5144769684,
    1436191656,
    179523957,
];

pub fn order3_k9_poly() -> RationalPoly {
    RationalPoly::from_integers(&ORDER3_K9_COEFFS)
}

pub fn order3_obstruction_k9(rho: f64) -> f64 {
    ORDER3_K9_COEFFS
        .iter()
        .rev()
        .fold(0.0, |acc, &c| acc * rho + c as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub eigenvalue: f64,
    /// Index `k` of the matching admissible value, if any.
    pub k: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    pub obstructed: bool,
    /// Max-norm deviation from `diag(A, -A/2)`, for planar reports.
    pub block_error: Option<f64>,
}

impl SpectrumReport {
    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Self {
        let verdicts: Vec<Verdict> = eigenvalues
            .iter()
            .map(|&eigenvalue| Verdict {
                eigenvalue,
                k: admissible(eigenvalue),
            })
            .collect();
        let obstructed = verdicts.iter().any(|v| v.k.is_none());
        Self {
            eigenvalues,
            verdicts,
            obstructed,
            block_error: None,
        }
    }

    pub fn inadmissible(&self) -> Vec<f64> {
        self.verdicts
            .iter()
            .filter(|v| v.k.is_none())
            .map(|v| v.eigenvalue)
            .collect()
    }
}

pub fn spectrum_report(w: &HessianW) -> Result<SpectrumReport> {
    Ok(SpectrumReport::from_eigenvalues(w.eigenvalues()?))
}

/// Spectrum of `W` for the colinear Moulton configuration (bodies in index
/// order) embedded in the plane.
pub fn planar_spectrum(m: &MassVector) -> Result<SpectrumReport> {
    let order: Vec<usize> = (0..m.len()).collect();
    let cc = moulton_solve(m, &order)?;
    let planar = cc.config.embed(2)?;
    let w = hessian_w(&cc.masses, &planar)?;
    let am = w.axis_major();
    let n = m.len();
    let a = am.view((0, 0), (n, n)).into_owned();
    let mut expected = DMatrix::<f64>::zeros(2 * n, 2 * n);
    expected.view_mut((0, 0), (n, n)).copy_from(&a);
    expected.view_mut((n, n), (n, n)).copy_from(&(&a * -0.5));
    let block_error = (am - expected).amax();
    let mut report = spectrum_report(&w)?;
    report.block_error = Some(block_error);
    Ok(report)
}

/// `b` with `b(2b + 3) = λ`, for `λ` within tolerance of that family.
fn odd_family_index(lambda: f64) -> Option<u64> {
    if lambda < -ADMISSIBLE_TOL {
        return None;
    }
    let b = ((-3.0 + (9.0 + 8.0 * lambda.max(0.0)).sqrt()) / 4.0).round();
    ((b * (2.0 * b + 3.0) - lambda).abs() <= ADMISSIBLE_TOL).then_some(b as u64)
}

/// Every eigenvalue is `b(2b + 3)` for integer `b ∈ B`, and `max B ≤ 2 min B + 1`.
pub fn odd_family_predicate(eigs: &[f64]) -> bool {
    let Some(bs) = eigs
        .iter()
        .map(|&l| odd_family_index(l))
        .collect::<Option<Vec<u64>>>()
    else {
        return false;
    };
    match (bs.iter().min(), bs.iter().max()) {
        (Some(&lo), Some(&hi)) => hi <= 2 * lo + 1,
        _ => true,
    }
}

/// Number of third-derivative conditions at order 2 for each candidate
/// 4-body eigenvalue pair that survives the determinant test.
pub fn order2_condition_count(pair: (i64, i64)) -> Option<u32> {
    let key = (pair.0.min(pair.1), pair.0.max(pair.1));
    let count = match key {
        (5, 5) | (5, 14) | (5, 27) | (14, 44) => 4,
        (5, 44) | (5, 20) | (5, 35) | (5, 54) => 3,
        (5, 9) | (9, 27) | (9, 44) => 2,
        (9, 35) | (9, 54) => 1,
        (9, 20) => 0,
        _ => return None,
    };
    Some(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rational;

    #[test]
    fn admissible_table_head() {
        let set = AdmissibleSet::default();
        assert_eq!(
            &set.values()[..12],
            &[-1, 0, 2, 5, 9, 14, 20, 27, 35, 44, 54, 65]
        );
        assert_eq!(set.index_of(5), Some(3));
        assert!(!set.contains(70));
    }

    #[test]
    fn admissible_lookup() {
        assert_eq!(admissible(5.0), Some(3));
        assert_eq!(admissible(3.0), None);
        assert_eq!(admissible(70.0), None);
        assert_eq!(admissible(-1.0), Some(0));
        assert_eq!(admissible(0.0 + 1e-12), Some(1));
        assert_eq!(admissible(-1.5), None);
        // Brute force against the table.
        let set = AdmissibleSet::new(60);
        for v in -3..1500 {
            let want = set.index_of(v);
            assert_eq!(admissible(v as f64), want, "{v}");
        }
    }

    #[test]
    fn g_closed_form_at_rho_one() {
        assert!((g_eigenvalue(12.0 / 35.0, 1.0).unwrap() - 5.0).abs() < 1e-13);
        for &s in &[0.05, 0.2, 0.4] {
            let want = 8.0 / (4.0 - 7.0 * s);
            assert!((g_eigenvalue(s, 1.0).unwrap() - want).abs() < 1e-13);
        }
        let (lo, hi) = g_interval(1.0).unwrap();
        assert!((lo - 2.0).abs() < 1e-13 && (hi - 16.0).abs() < 1e-12);
    }

    #[test]
    fn g_singular_locus() {
        let rho = 2.0;
        assert!(matches!(
            g_eigenvalue(g_singular_s(rho), rho),
            Err(Error::AbsoluteEquilibrium { .. })
        ));
    }

    #[test]
    fn g_matches_eigen_solver() {
        for &(rho, s) in &[(1.0, 0.1), (1.7, 0.05), (3.0, 0.02), (6.0, 0.004)] {
            let m = crate::central_config::masses_from_rho(rho, s).unwrap();
            let q = Configuration::colinear(&[-1.0, 0.0, rho]).unwrap();
            let cc = normalize_cc(&CentralConfiguration::new(m, q).unwrap()).unwrap();
            let eig = hessian_w(&cc.masses, &cc.config).unwrap().eigenvalues().unwrap();
            let g = g_eigenvalue(s, rho).unwrap();
            assert!((eig[2] - g).abs() < 1e-9, "{eig:?} vs {g}");
        }
    }

    #[test]
    fn g_interval_closed_form_agrees() {
        for i in 0..40 {
            let rho = 1.0 + 0.5 * i as f64;
            let (lo, hi) = g_interval(rho).unwrap();
            let (clo, chi) = g_interval_closed_form(rho);
            assert!((lo - clo).abs() < 1e-10 * chi && (hi - chi).abs() < 1e-10 * chi);
        }
    }

    #[test]
    fn g_increasing_in_s() {
        for &rho in &[1.0, 1.5, 3.0, 10.0] {
            let (lo, hi) = MassLine3::new(rho).unwrap().s_interval().unwrap();
            let h = 1e-7 * (hi - lo);
            for i in 1..=100 {
                let s = lo + (hi - lo) * i as f64 / 101.0;
                let d = g_eigenvalue(s + h, rho).unwrap() - g_eigenvalue(s - h, rho).unwrap();
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn ek_known_points() {
        let p = ek_masses(5, 1.0).unwrap();
        let want = [12.0 / 35.0, 11.0 / 35.0, 12.0 / 35.0];
        for (a, b) in p.masses.values().iter().zip(want) {
            assert!((a - b).abs() <= 1e-15);
        }
        let exact = ek_masses_exact(14, &rational(1, 1)).unwrap();
        assert_eq!(exact, [rational(24, 49), rational(1, 49), rational(24, 49)]);
        let exact = ek_masses_exact(5, &rational(1, 1)).unwrap();
        assert_eq!(exact, [rational(12, 35), rational(11, 35), rational(12, 35)]);
    }

    #[test]
    fn ek_consistent_with_g() {
        let p = ek_masses(9, 2.0).unwrap();
        let s = p.masses.values()[0];
        assert!((g_eigenvalue(s, 2.0).unwrap() - 9.0).abs() < 1e-10);
        let line = MassLine3::new(2.0).unwrap().masses(s);
        for (a, b) in line.iter().zip(p.masses.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn ek_spectrum() {
        for &k in &[5, 9, 14] {
            for &rho in &[1.0, 1.3, 2.0, 5.0] {
                let eig = ek_masses(k, rho).unwrap().hessian_w().unwrap().eigenvalues().unwrap();
                let want = [0.0, 2.0, k as f64];
                for (a, b) in eig.iter().zip(want) {
                    assert!((a - b).abs() < 1e-8, "k={k} rho={rho} {eig:?}");
                }
            }
        }
    }

    #[test]
    fn ek_rejects_bad_k() {
        assert!(matches!(ek_masses(6, 1.0), Err(Error::InvalidK(6))));
        assert!(matches!(ek_masses(2, 1.0), Err(Error::InvalidK(2))));
        assert!(matches!(ek_masses(-1, 1.0), Err(Error::InvalidK(-1))));
    }

    #[test]
    fn reachable_values() {
        assert_eq!(reachable_ks(1.0, 1).unwrap(), BTreeSet::from([5, 9, 14]));
        let (lo, hi) = g_interval(10.0).unwrap();
        assert!(lo > 2.0 && hi < 16.0);
        assert_eq!(reachable_ks(100.0, 1000).unwrap(), BTreeSet::from([5, 9, 14]));
    }

    #[test]
    fn order2_vanishes_only_at_rho_one() {
        for &k in &[5, 14] {
            assert!(order2_obstruction_3body(k, 1.0).unwrap().abs() < 1e-9);
            let v = order2_obstruction_3body(k, 2.0).unwrap();
            assert!(v.abs() > 1e-3, "k={k}: {v}");
        }
        assert!(order2_p(5.0, 2.0) > 0.0);
        assert!(matches!(order2_obstruction_3body(9, 1.0), Err(Error::InvalidK(9))));
    }

    #[test]
    fn order3_polynomial() {
        let sum: i64 = ORDER3_K9_COEFFS.iter().sum();
        let at_one = order3_k9_poly().eval(&rational(1, 1));
        assert_eq!(at_one, rational(sum, 1));
        assert_eq!(order3_obstruction_k9(0.0), 179523957.0);
        assert_eq!(order3_k9_poly().count_positive_roots(), 0);
        assert_eq!(order3_k9_poly().descartes_bound(), 0);
    }

    #[test]
    fn planar_equal_three() {
        let r = planar_spectrum(&MassVector::new(vec![1.0; 3]).unwrap()).unwrap();
        let want = [-2.4, -1.0, 0.0, 0.0, 2.0, 4.8];
        for (a, b) in r.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{:?}", r.eigenvalues);
        }
        assert!(r.block_error.unwrap() <= 1e-10);
        assert!(r.obstructed);
        assert_eq!(r.inadmissible().len(), 2);
    }

    #[test]
    fn odd_family() {
        assert!(odd_family_predicate(&[5.0, 14.0]));
        assert!(odd_family_predicate(&[14.0, 44.0]));
        assert!(odd_family_predicate(&[5.0, 27.0]));
        assert!(!odd_family_predicate(&[5.0, 44.0]));
        assert!(!odd_family_predicate(&[5.0, 9.0]));
    }

    #[test]
    fn condition_table() {
        assert_eq!(order2_condition_count((20, 9)), Some(0));
        assert_eq!(order2_condition_count((14, 44)), Some(4));
        assert_eq!(order2_condition_count((27, 35)), None);
    }
}
