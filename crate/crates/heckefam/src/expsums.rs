//! p-adic exponential sums: additive characters, Gauss and hyper-Kloosterman
//! sums, finite gamma factors and the local dual transform g*_p.

use crate::error::{Error, Result};
use crate::numberfield::{PrimeIdeal, ResidueUnitGroup};
use crate::quad::tree_sum;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const BRUTE_FORCE_BUDGET: f64 = 1e7;
/// Number of power-series coefficients kept for A_0.
pub const SERIES_CAP: usize = 200;

fn npow(n: f64, s: Complex64) -> Complex64 {
    (s * n.ln()).exp()
}

fn unit(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * t)
}

/// psi_p(x) = e^{2 pi i frac(Tr x)}, trivial on O_p. The uniformizer is the rational prime p.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalAdditiveCharacter {
    pub prime: String,
    pub uniformizer: String,
}

impl LocalAdditiveCharacter {
    pub fn new(p: &PrimeIdeal) -> Self {
        LocalAdditiveCharacter { prime: p.label(), uniformizer: p.p.to_string() }
    }

    /// psi(x / varpi^k) for a residue x of O / p^e, k <= e.
    pub fn eval(group: &ResidueUnitGroup, x: u64, k: u32) -> Complex64 {
        let pk = group.ring.p.pow(k);
        let t = group.ring.trace(x) % pk;
        unit(t as f64 / pk as f64)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteCharacter {
    pub prime: PrimeIdeal,
    pub level: u32,
    pub exps: Vec<u64>,
    pub conductor_exponent: u32,
}

impl FiniteCharacter {
    pub fn new(group: &ResidueUnitGroup, exps: Vec<u64>) -> Self {
        let r = group.conductor_exponent(&exps);
        FiniteCharacter { prime: group.ring.prime, level: group.ring.e, exps, conductor_exponent: r }
    }
}

fn check_budget(group: &ResidueUnitGroup, r: u32) -> Result<()> {
    let size = (group.ring.prime.norm() as f64).powi(r as i32);
    if size > BRUTE_FORCE_BUDGET {
        return Err(Error::budget("N(p)^r", size, BRUTE_FORCE_BUDGET));
    }
    Ok(())
}

/// G(delta) = sum over u in U/U^(r) of delta(u) conj(psi)(u / varpi^r), by direct summation.
/// `group` is the unit group at a level e >= r; the sum over U/U^(e) is rescaled.
pub fn gauss_sum(group: &ResidueUnitGroup, exps: &[u64], r: u32) -> Result<Complex64> {
    if r == 0 || r > group.ring.e {
        return Err(Error::validation("Gauss sum level must lie in 1..=e"));
    }
    check_budget(group, r)?;
    let terms: Vec<Complex64> = (0..group.order())
        .map(|i| {
            let l = group.exps_of_index(i);
            let x = group.element(i);
            unit(group.pairing(exps, &l)) * LocalAdditiveCharacter::eval(group, x, r).conj()
        })
        .collect();
    let scale = (group.ring.prime.norm() as f64).powi((group.ring.e - r) as i32);
    Ok(tree_sum(&terms) / scale)
}

/// sum_l f(l) e^{2 pi i <k, l>} for every k, over the mixed-radix layout of `orders`.
fn character_transform(orders: &[u64], mut data: Vec<Complex64>) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let mut stride = 1usize;
    for &o in orders {
        let o = o as usize;
        if o > 1 {
            let fft = planner.plan_fft_inverse(o);
            let block = stride * o;
            let mut line = vec![Complex64::new(0.0, 0.0); o];
            for start in (0..data.len()).step_by(block) {
                for off in 0..stride {
                    for (j, z) in line.iter_mut().enumerate() {
                        *z = data[start + off + j * stride];
                    }
                    fft.process(&mut line);
                    for (j, z) in line.iter().enumerate() {
                        data[start + off + j * stride] = *z;
                    }
                }
            }
        }
        stride *= o;
    }
    data
}

/// Gauss sums at level r of every character of the group, indexed like the group.
pub fn gauss_sums_all(group: &ResidueUnitGroup, r: u32) -> Result<Vec<Complex64>> {
    if r == 0 || r > group.ring.e {
        return Err(Error::validation("Gauss sum level must lie in 1..=e"));
    }
    let f: Vec<Complex64> = group.elements().iter().map(|&x| LocalAdditiveCharacter::eval(group, x, r).conj()).collect();
    let scale = (group.ring.prime.norm() as f64).powi((group.ring.e - r) as i32);
    Ok(character_transform(&group.orders, f).into_iter().map(|z| z / scale).collect())
}

/// Conductor exponent of every character, indexed like the group.
pub fn conductors_all(group: &ResidueUnitGroup) -> Vec<u32> {
    let e = group.ring.e;
    let n = group.order() as usize;
    let mut cond = vec![0u32; n];
    // trivial on U^(r) iff the transform of its indicator has full size at k
    let mut trivial_on: Vec<Vec<bool>> = Vec::new();
    for r in 0..=e {
        let ind: Vec<Complex64> = group
            .elements()
            .iter()
            .map(|&x| if r == 0 || group.ring.is_one_mod(x, r) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
            .collect();
        let size: f64 = ind.iter().map(|z| z.re).sum();
        let t = character_transform(&group.orders, ind);
        trivial_on.push(t.iter().map(|z| (z.re - size).abs() < 1e-6 * size).collect());
    }
    for (k, c) in cond.iter_mut().enumerate() {
        *c = (0..=e).find(|&r| trivial_on[r as usize][k]).unwrap_or(e);
    }
    cond
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KloostermanValue {
    pub value: Complex64,
    pub bound: f64,
    pub deligne_ok: bool,
}

/// Kl_m(a) = sum over x_1..x_m in k_p^x with x_1...x_m = a of psi((x_1+...+x_m)/varpi).
/// `group` must be the level-1 unit group; `a` is a unit residue.
pub fn hyper_kloosterman(group: &ResidueUnitGroup, m: u32, a: u64) -> Result<KloostermanValue> {
    if group.ring.e != 1 {
        return Err(Error::validation("hyper-Kloosterman sums use the residue field"));
    }
    if m == 0 {
        return Err(Error::validation("m must be >= 1"));
    }
    let q = group.ring.prime.norm() as f64;
    let work = q.powi(m as i32 - 1);
    if work > BRUTE_FORCE_BUDGET {
        return Err(Error::budget("N(p)^(m-1)", work, BRUTE_FORCE_BUDGET));
    }
    let la = group.index_of(a).ok_or(Error::NotCoprime)?;
    let order = group.order();
    let t: Vec<Complex64> = group.elements().iter().map(|&x| LocalAdditiveCharacter::eval(group, x, 1)).collect();
    // the unit group of a finite field is cyclic, so indices add under multiplication
    let last = |s: u64| t[((la + order - s % order) % order) as usize];
    let value = if m == 1 {
        t[la as usize]
    } else {
        let partial: Vec<Complex64> = (0..order)
            .into_par_iter()
            .map(|l1| {
                let mut acc = Vec::new();
                let mut idx = vec![0u64; m as usize - 2];
                loop {
                    let s: u64 = l1 + idx.iter().sum::<u64>();
                    let prod: Complex64 = idx.iter().fold(t[l1 as usize], |p, &l| p * t[l as usize]);
                    acc.push(prod * last(s));
                    // odometer over the remaining m-2 coordinates
                    let mut j = 0;
                    loop {
                        if j == idx.len() {
                            return tree_sum(&acc);
                        }
                        idx[j] += 1;
                        if idx[j] < order {
                            break;
                        }
                        idx[j] = 0;
                        j += 1;
                    }
                }
            })
            .collect();
        tree_sum(&partial)
    };
    let bound = m as f64 * q.powf((m as f64 - 1.0) / 2.0);
    Ok(KloostermanValue { value, bound, deligne_ok: value.norm() <= bound * (1.0 + 1e-9) })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub diff: f64,
    pub relative: f64,
    pub kloosterman: KloostermanValue,
}

/// sum over primitive delta of level 1 of G(delta)^{n^2} conj(delta)(a)
/// against phi(p) Kl_{n^2}((-1)^{n^2} a) - (-1)^{n^2}.
pub fn gauss_kloosterman_identity(group: &ResidueUnitGroup, n: u32, a: u64) -> Result<IdentityCheck> {
    let m = n * n;
    let la = group.index_of(a).ok_or(Error::NotCoprime)?;
    let la_exps = group.exps_of_index(la);
    let terms: Vec<Complex64> = (1..group.order())
        .map(|k| {
            let ke = group.exps_of_index(k);
            let g = gauss_sum(group, &ke, 1)?;
            Ok(g.powu(m) * unit(-group.pairing(&ke, &la_exps)))
        })
        .collect::<Result<_>>()?;
    let lhs = tree_sum(&terms);
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let arg = if m.is_multiple_of(2) {
        a
    } else {
        let minus_one = group.ring.from_parts(group.ring.modulus - 1, 0);
        group.ring.mul(minus_one, a)
    };
    let kl = hyper_kloosterman(group, m, arg)?;
    let phi = group.order() as f64;
    let rhs = kl.value * phi - sign;
    let diff = (lhs - rhs).norm();
    let relative = diff / lhs.norm().max(rhs.norm()).max(1.0);
    Ok(IdentityCheck { lhs, rhs, diff, relative, kloosterman: kl })
}

/// Input to the local gamma factor of pi x pi~ twisted by chi_p = delta |.|^{i tau}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FiniteTwist {
    /// delta unramified; value of chi_p at the uniformizer (including N(p)^{-i tau}).
    Unramified { chi_at_uniformizer: Complex64 },
    /// conductor p^r with r >= 1 and Gauss sum G(delta).
    Ramified { r: u32, gauss: Complex64, tau: f64 },
}

/// gamma(s) at a finite place: the L-polynomial ratio for r = 0,
/// N(p)^{-r n^2 (s + i tau)} G^{n^2} for r >= 1.
pub fn finite_gamma(s: Complex64, twist: &FiniteTwist, pairs: &[Complex64], norm: u64) -> Result<Complex64> {
    let nn = norm as f64;
    match twist {
        FiniteTwist::Unramified { chi_at_uniformizer: chi } => {
            let mut num = Complex64::new(1.0, 0.0);
            let mut den = Complex64::new(1.0, 0.0);
            for l in pairs {
                num *= Complex64::new(1.0, 0.0) - l * chi * npow(nn, -s);
                den *= Complex64::new(1.0, 0.0) - l.conj() * chi.conj() * npow(nn, s - 1.0);
            }
            if den.norm() < 1e-12 {
                return Err(Error::Pole(format!("local factor at s = {s}")));
            }
            Ok(num / den)
        }
        FiniteTwist::Ramified { r, gauss, tau } => {
            if *r == 0 {
                return Err(Error::validation("ramified twist needs r >= 1"));
            }
            let m = pairs.len() as f64;
            let e = -(*r as f64) * m * (s + Complex64::new(0.0, *tau));
            Ok(npow(nn, e) * gauss.powf(m))
        }
    }
}

/// x in K_p^x as |x|_p = N(p)^k and its unit part modulo p^e.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocalElement {
    pub k: i32,
    pub unit: u64,
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    // prod (1 - r z)
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, a) in c.iter().enumerate() {
            next[i] += a;
            next[i + 1] -= a * r;
        }
        c = next;
    }
    c
}

/// A_0(x): coefficient of z^{-k} in prod(1 - lambda z^{-1}/N) / prod(1 - conj(lambda) z).
pub fn a0(pairs: &[Complex64], norm: u64, k: i32) -> Result<Complex64> {
    let m = pairs.len() as i32;
    if k > m {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if (m - k) as usize >= SERIES_CAP {
        return Err(Error::budget("power-series order", (m - k) as f64, SERIES_CAP as f64));
    }
    let scaled: Vec<Complex64> = pairs.iter().map(|l| l / norm as f64).collect();
    let p = poly_from_roots(&scaled);
    let q = poly_from_roots(&pairs.iter().map(|l| l.conj()).collect::<Vec<_>>());
    // 1/Q as a power series
    let len = (m - k) as usize + 1;
    let mut qinv = vec![Complex64::new(0.0, 0.0); len];
    qinv[0] = Complex64::new(1.0, 0.0);
    for i in 1..len {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 1..q.len().min(i + 1) {
            acc -= q[j] * qinv[i - j];
        }
        qinv[i] = acc;
    }
    let terms: Vec<Complex64> = p
        .iter()
        .enumerate()
        .filter_map(|(j, pj)| {
            let i = j as i32 - k;
            (i >= 0).then(|| pj * qinv[i as usize])
        })
        .collect();
    Ok(tree_sum(&terms))
}

/// Characters of the level-e group sorted by conductor, with Gauss sums at their conductor.
#[derive(Clone, Debug)]
pub struct LocalDual {
    pub group: ResidueUnitGroup,
    pub conductors: Vec<u32>,
    /// gauss[nu-1][k]: Gauss sum at level nu, for all k.
    pub gauss: Vec<Vec<Complex64>>,
}

impl LocalDual {
    pub fn new(group: ResidueUnitGroup) -> Result<Self> {
        let conductors = conductors_all(&group);
        let gauss = (1..=group.ring.e).map(|r| gauss_sums_all(&group, r)).collect::<Result<_>>()?;
        Ok(LocalDual { group, conductors, gauss })
    }

    /// A_nu(x) = N^{-nu m} sum over delta of conductor nu of G_nu(delta)^m conj(delta)(u), supported at k = nu m.
    pub fn a_nu(&self, nu: u32, m: u32, x: LocalElement) -> Result<Complex64> {
        if nu == 0 || nu > self.group.ring.e {
            return Err(Error::validation("nu must lie in 1..=e"));
        }
        if x.k != (nu * m) as i32 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let l = self.group.dlog(x.unit).ok_or(Error::NotCoprime)?;
        let terms: Vec<Complex64> = (0..self.group.order())
            .filter(|&k| self.conductors[k as usize] == nu)
            .map(|k| {
                let ke = self.group.exps_of_index(k);
                self.gauss[nu as usize - 1][k as usize].powu(m) * unit(-self.group.pairing(&ke, &l))
            })
            .collect();
        let nn = self.group.ring.prime.norm() as f64;
        Ok(tree_sum(&terms) / nn.powi((nu * m) as i32))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GStarFinite {
    pub value: Complex64,
    /// A_0, A_1, ..., A_e
    pub terms: Vec<Complex64>,
}

/// g*_p(x) = phi(p^e)^{-1} sum_{0 <= nu <= e} A_nu(x).
pub fn gstar_finite(dual: &LocalDual, pairs: &[Complex64], x: LocalElement) -> Result<GStarFinite> {
    let m = pairs.len() as u32;
    let norm = dual.group.ring.prime.norm();
    let mut terms = vec![a0(pairs, norm, x.k)?];
    for nu in 1..=dual.group.ring.e {
        terms.push(dual.a_nu(nu, m, x)?);
    }
    let phi = dual.group.order() as f64;
    Ok(GStarFinite { value: tree_sum(&terms) / phi, terms })
}
