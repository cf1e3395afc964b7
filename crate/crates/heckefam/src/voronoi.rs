//! The global summation identity G(x) = |x|^{-1} R + |x|^{-1} G*(1/x) for
//! pi x pi~ twisted along a Hecke family, a smoothed approximate functional
//! equation for Hecke L-values, and the non-vanishing pipeline built on both.

use crate::archgamma::{
    default_mb_params, fourier_profile, g0, geometric_sum, gstar_real_n1, ln_gamma_v, MbKernel, RadialTable,
    RankinSelbergData, TestFunctionSuite,
};
use crate::error::{Error, Result};
use crate::heckefamily::{build_family, chi_on_ideal, fibers, ArchCharacter, FamilySpec, HeckeCharacter, ModulusGroups};
use crate::numberfield::{
    prime_factors, FieldKind, IdealData, NumberField, PlaceKind, PrimeIdeal, PrimeKind, QuadInt, ResidueRing,
};
use crate::quad::{tree_sum, tree_sum_real};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

const ELEMENT_BUDGET: f64 = 2e7;
/// F0 is tabulated up to this argument; beyond it the profile is below 1e-16.
const FOURIER_CUT: f64 = 120.0;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn zero() -> Complex64 {
    c(0.0, 0.0)
}

/// Complete homogeneous symmetric polynomial h_r of the given values.
fn homogeneous(values: &[Complex64], r: u32) -> Complex64 {
    let r = r as usize;
    let mut h = vec![zero(); r + 1];
    h[0] = c(1.0, 0.0);
    for &l in values {
        for k in 1..=r {
            let prev = h[k - 1];
            h[k] += l * prev;
        }
    }
    h[r]
}

/// Coefficient of X^r in prod_{i,j} (1 - alpha_i conj(alpha_j) X)^{-1}.
pub fn rs_coefficients(rs: &RankinSelbergData, p: &PrimeIdeal, r: u32) -> f64 {
    homogeneous(&rs.pair_parameters(p), r).re
}

/// n = 1 with trivial parameters everywhere, so that L(s, pi x pi~ x chi) = L(s, chi).
pub fn is_unit_data(rs: &RankinSelbergData) -> bool {
    let one = |v: &[Complex64]| v.iter().all(|z| (z - 1.0).norm() < 1e-14);
    rs.n == 1
        && one(&rs.default_satake)
        && rs.satake.values().all(|v| one(v))
        && rs.mu.iter().flatten().all(|m| m.norm() < 1e-14)
}

fn valuation(mut x: u64, p: u64) -> u32 {
    let mut k = 0;
    while x > 0 && x.is_multiple_of(p) {
        x /= p;
        k += 1;
    }
    k
}

/// Prime ideal factorisation of (alpha).
pub fn factor_element(field: &NumberField, alpha: QuadInt) -> Result<Vec<(PrimeIdeal, u32)>> {
    let n = field.norm(alpha).unsigned_abs();
    if n == 0 {
        return Err(Error::validation("cannot factor zero"));
    }
    let n = u64::try_from(n).map_err(|_| Error::budget("element norm", n as f64, u64::MAX as f64))?;
    let mut out = Vec::new();
    for (p, k) in prime_factors(n) {
        for pr in field.primes_above(p)? {
            let e = match pr.kind {
                PrimeKind::Rational | PrimeKind::Ramified => k,
                PrimeKind::Inert => k / 2,
                PrimeKind::Split(_) => {
                    let ring = ResidueRing::new(field, pr, k)?;
                    let r = ring.reduce(alpha);
                    if r == 0 {
                        k
                    } else {
                        valuation(r, p).min(k)
                    }
                }
            };
            if e > 0 {
                out.push((pr, e));
            }
        }
    }
    Ok(out)
}

/// lambda_{pi x pi~}((alpha)), multiplicative over the factorisation.
pub fn ideal_coefficient(field: &NumberField, rs: &RankinSelbergData, alpha: QuadInt) -> Result<f64> {
    if is_unit_data(rs) {
        return Ok(1.0);
    }
    Ok(factor_element(field, alpha)?
        .iter()
        .map(|(p, e)| rs_coefficients(rs, p, *e))
        .product())
}

/// Nonzero elements with |alpha_v - center_v| <= radius_v at every place (plain absolute values).
pub fn elements_in_box(field: &NumberField, center: &[Complex64], radius: &[f64]) -> Result<Vec<QuadInt>> {
    let om = field.omega_embeddings();
    let mut out = Vec::new();
    let inside = |x: QuadInt| -> bool {
        field
            .embed(x)
            .iter()
            .zip(center)
            .zip(radius)
            .all(|((z, c0), r)| (z - c0).norm() <= *r)
    };
    match field.kind {
        FieldKind::Rational => {
            let (c0, r) = (center[0].re, radius[0]);
            let (lo, hi) = ((c0 - r).floor() as i64, (c0 + r).ceil() as i64);
            if (hi - lo) as f64 > ELEMENT_BUDGET {
                return Err(Error::budget("elements in box", (hi - lo) as f64, ELEMENT_BUDGET));
            }
            for a in lo..=hi {
                let x = QuadInt::int(a);
                if !x.is_zero() && inside(x) {
                    out.push(x);
                }
            }
        }
        FieldKind::Quadratic(_) if field.r1 == 2 => {
            let (w1, w2) = (om[0].re, om[1].re);
            let d = w1 - w2;
            let (c1, c2) = (center[0].re, center[1].re);
            let spread = radius[0] + radius[1];
            let blo = ((c1 - c2 - spread) / d).floor() as i64;
            let bhi = ((c1 - c2 + spread) / d).ceil() as i64;
            let est = (bhi - blo + 1) as f64 * (2.0 * radius[0].min(radius[1]) + 2.0);
            if est > ELEMENT_BUDGET {
                return Err(Error::budget("elements in box", est, ELEMENT_BUDGET));
            }
            for b in blo..=bhi {
                let bf = b as f64;
                let lo = (c1 - bf * w1 - radius[0]).max(c2 - bf * w2 - radius[1]).floor() as i64;
                let hi = (c1 - bf * w1 + radius[0]).min(c2 - bf * w2 + radius[1]).ceil() as i64;
                for a in lo..=hi {
                    let x = QuadInt::new(a, b);
                    if !x.is_zero() && inside(x) {
                        out.push(x);
                    }
                }
            }
        }
        FieldKind::Quadratic(_) => {
            let w = om[0];
            let (c0, r) = (center[0], radius[0]);
            let blo = ((c0.im - r) / w.im).floor() as i64;
            let bhi = ((c0.im + r) / w.im).ceil() as i64;
            let est = (bhi - blo + 1) as f64 * (2.0 * r + 2.0);
            if est > ELEMENT_BUDGET {
                return Err(Error::budget("elements in box", est, ELEMENT_BUDGET));
            }
            for b in blo..=bhi {
                let bf = b as f64;
                let dy = bf * w.im - c0.im;
                if dy.abs() > r {
                    continue;
                }
                let rem = (r * r - dy * dy).sqrt();
                let lo = (c0.re - bf * w.re - rem).floor() as i64;
                let hi = (c0.re - bf * w.re + rem).ceil() as i64;
                for a in lo..=hi {
                    let x = QuadInt::new(a, b);
                    if !x.is_zero() && inside(x) {
                        out.push(x);
                    }
                }
            }
        }
        FieldKind::Custom => return Err(Error::Unsupported("element enumeration for custom fields".into())),
    }
    Ok(out)
}

/// x_{v0} = Y^{1/[K_v0:R]} and 1 at every other place, so |x|_A = Y.
pub fn idele_x(field: &NumberField, v0: usize, y: f64) -> Vec<f64> {
    field
        .places
        .iter()
        .enumerate()
        .map(|(v, k)| if v == v0 { y.powf(1.0 / k.deg()) } else { 1.0 })
        .collect()
}

/// w / (2^{r1} (2 pi)^{r2} R_K): the constant in front of the residues.
pub fn kappa(field: &NumberField) -> f64 {
    field.torsion_order as f64 / (2f64.powi(field.r1 as i32) * (2.0 * PI).powi(field.r2 as i32) * field.regulator)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Piece {
    pub value: Complex64,
    pub terms: usize,
    /// Bound on the omitted part of the sum (0 when the truncation is exact).
    pub tail: f64,
}

fn check_setting(field: &NumberField, suite: &TestFunctionSuite, y: f64) -> Result<()> {
    if field.class_number != 1 {
        return Err(Error::Unsupported("summation over principal generators needs class number 1".into()));
    }
    if !suite.modulus.is_unit() {
        return Err(Error::Unsupported("summation identity implemented for c = (1)".into()));
    }
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::validation("Y must be positive"));
    }
    Ok(())
}

/// G(x) = sum over nonzero alpha of lambda((alpha)) prod_v g_v(alpha x_v). The supports make the sum finite.
pub fn global_g(field: &NumberField, suite: &TestFunctionSuite, rs: &RankinSelbergData, y: f64) -> Result<Piece> {
    check_setting(field, suite, y)?;
    let x = idele_x(field, suite.v0, y);
    let mut center = Vec::new();
    let mut radius = Vec::new();
    for (v, k) in field.places.iter().enumerate() {
        if v == suite.v0 {
            center.push(zero());
            radius.push(1.0 / x[v]);
        } else {
            center.push(c(1.0, 0.0));
            radius.push(suite.t.powf(-1.0 / k.deg()));
        }
    }
    let elems = elements_in_box(field, &center, &radius)?;
    let vals: Vec<f64> = elems
        .par_iter()
        .map(|&a| -> Result<f64> {
            let emb = field.embed(a);
            let g: f64 = emb.iter().enumerate().map(|(v, z)| suite.value(v, z * x[v])).product();
            if g == 0.0 {
                return Ok(0.0);
            }
            Ok(g * ideal_coefficient(field, rs, a)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let terms = vals.iter().filter(|v| **v != 0.0).count();
    Ok(Piece { value: c(tree_sum_real(&vals), 0.0), terms, tail: 0.0 })
}

fn y_of_u(kind: PlaceKind, u: f64) -> Complex64 {
    c((u / kind.deg()).exp(), 0.0)
}

/// g*_{v0} tabulated on u = log|y|_{v0}, with the kernel kept for arguments off the table.
#[derive(Clone, Debug)]
pub struct V0Dual {
    pub kind: PlaceKind,
    pub beta: f64,
    pub kernel: MbKernel,
    pub tables: Vec<RadialTable>,
    /// Beyond log|y| = u_cut the transform is below `cut_level`.
    pub u_cut: f64,
    pub cut_level: f64,
    pub peak: f64,
}

impl V0Dual {
    pub fn new(suite: &TestFunctionSuite, rs: &RankinSelbergData) -> Result<Self> {
        let v = suite.v0;
        let kind = suite.places[v];
        let kernel = MbKernel::new(suite, v, rs, default_mb_params(suite, v, rs))?;
        let scan: Vec<(f64, f64)> = (0..=240)
            .map(|i| {
                let u = -4.0 + 0.05 * i as f64;
                (u, kernel.eval(y_of_u(kind, u)).norm())
            })
            .collect();
        let peak = scan.iter().map(|p| p.1).fold(0.0, f64::max);
        let last = scan.iter().rev().find(|p| p.1 > 1e-12 * peak).map(|p| p.0).unwrap_or(0.0);
        let u_cut = (last + 0.5).min(8.0);
        let cut_level = scan.iter().filter(|p| p.0 >= u_cut - 0.5).map(|p| p.1).fold(0.0, f64::max);
        let tables = vec![kernel.radial_table(-16.0, 0.0, 0.004), kernel.radial_table(0.0, u_cut, 0.0004)];
        Ok(V0Dual { kind, beta: suite.beta, kernel, tables, u_cut, cut_level, peak })
    }

    pub fn eval_abs(&self, a: f64) -> Complex64 {
        let u = a.ln();
        if u > self.u_cut {
            return zero();
        }
        for t in &self.tables {
            if t.contains(u) {
                return t.eval(u);
            }
        }
        self.kernel.eval(y_of_u(self.kind, u))
    }
}

/// g*_v at one place v != v0.
#[derive(Clone, Debug)]
pub enum PlaceDual {
    /// n = 1, real place: e^{2 pi i y} F0(y/T)/T in closed form.
    Fourier { t: f64 },
    /// Generic Mellin-Barnes kernel with a support radius in |y|_v.
    Kernel { kernel: MbKernel },
}

#[derive(Clone, Debug)]
pub struct DualKernels {
    pub v0: usize,
    pub v0_dual: V0Dual,
    pub places: Vec<Option<PlaceDual>>,
    /// Truncation radius in |y|_v (normalised absolute value).
    pub radius: Vec<f64>,
    pub cut_level: Vec<f64>,
    pub peak: Vec<f64>,
}

impl DualKernels {
    pub fn new(suite: &TestFunctionSuite, rs: &RankinSelbergData, v0_dual: V0Dual) -> Result<Self> {
        let r = suite.places.len();
        let mut places = Vec::with_capacity(r);
        let mut radius = Vec::with_capacity(r);
        let mut cut_level = Vec::with_capacity(r);
        let mut peak = Vec::with_capacity(r);
        let n1 = is_unit_data(rs);
        for (v, &kind) in suite.places.iter().enumerate() {
            if v == suite.v0 {
                places.push(None);
                radius.push(v0_dual.u_cut.exp());
                cut_level.push(v0_dual.cut_level);
                peak.push(v0_dual.peak);
                continue;
            }
            if n1 && kind == PlaceKind::Real {
                places.push(Some(PlaceDual::Fourier { t: suite.t }));
                radius.push(FOURIER_CUT * suite.t);
                cut_level.push(fourier_profile(FOURIER_CUT) / suite.t);
                peak.push(fourier_profile(0.0) / suite.t);
                continue;
            }
            let kernel = MbKernel::new(suite, v, rs, default_mb_params(suite, v, rs))?;
            // scan |y|_v on a log grid up to T^{n^2 + 3}
            let top = suite.t.powf(rs.n2() as f64 + 3.0).min(1e9).ln();
            let steps = ((top + 2.0) / 0.1).ceil() as usize;
            let scan: Vec<(f64, f64)> = (0..=steps)
                .into_par_iter()
                .map(|i| {
                    let u = -2.0 + 0.1 * i as f64;
                    (u, kernel.eval(y_of_u(kind, u)).norm())
                })
                .collect();
            let pk = scan.iter().map(|p| p.1).fold(0.0, f64::max);
            let last = scan.iter().rev().find(|p| p.1 > 1e-9 * pk).map(|p| p.0).unwrap_or(top);
            let u_cut = (last + 0.3).min(top);
            let lvl = scan.iter().filter(|p| p.0 >= u_cut - 0.3).map(|p| p.1).fold(0.0, f64::max);
            places.push(Some(PlaceDual::Kernel { kernel }));
            radius.push(u_cut.exp());
            cut_level.push(lvl);
            peak.push(pk);
        }
        Ok(DualKernels { v0: suite.v0, v0_dual, places, radius, cut_level, peak })
    }

    pub fn eval(&self, v: usize, kind: PlaceKind, y: Complex64) -> Complex64 {
        if v == self.v0 {
            return self.v0_dual.eval_abs(kind.abs(y));
        }
        match self.places[v].as_ref().expect("dual kernel") {
            PlaceDual::Fourier { t } => {
                if y.re.abs() > FOURIER_CUT * t {
                    zero()
                } else {
                    gstar_real_n1(y.re, *t)
                }
            }
            PlaceDual::Kernel { kernel } => {
                if kind.abs(y) > self.radius[v] {
                    zero()
                } else {
                    kernel.eval(y)
                }
            }
        }
    }
}

/// G*(1/x) = |d|^{-1/2} sum over nonzero alpha of lambda((alpha)) prod_v g*_v(alpha / (x_v d_v)),
/// d a generator of the different. Fails with a budget error when the tail estimate exceeds `tol`.
pub fn global_g_star(
    field: &NumberField,
    suite: &TestFunctionSuite,
    rs: &RankinSelbergData,
    duals: &DualKernels,
    y: f64,
    tol: f64,
) -> Result<Piece> {
    check_setting(field, suite, y)?;
    let x = idele_x(field, suite.v0, y);
    let dif = field.embed(field.different_generator());
    let center = vec![zero(); field.places.len()];
    let radius: Vec<f64> = field
        .places
        .iter()
        .enumerate()
        .map(|(v, k)| duals.radius[v].powf(1.0 / k.deg()) * x[v] * dif[v].norm())
        .collect();
    let elems = elements_in_box(field, &center, &radius)?;
    let vals: Vec<Complex64> = elems
        .par_iter()
        .map(|&a| -> Result<Complex64> {
            let emb = field.embed(a);
            let mut g = c(1.0, 0.0);
            for (v, k) in field.places.iter().enumerate() {
                g *= duals.eval(v, *k, emb[v] / (dif[v] * x[v]));
                if g == zero() {
                    return Ok(g);
                }
            }
            Ok(g * ideal_coefficient(field, rs, a)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let sqd = (field.discriminant.abs() as f64).sqrt();
    let value = tree_sum(&vals) / sqd;
    let abs_sum: f64 = vals.iter().map(|z| z.norm()).sum::<f64>() / sqd;
    let rel: f64 = (0..field.places.len()).map(|v| duals.cut_level[v] / duals.peak[v].max(1e-300)).sum();
    let tail = abs_sum * rel;
    if tail > tol {
        return Err(Error::Tail { achieved: tail, requested: tol });
    }
    let terms = vals.iter().filter(|z| z.norm() > 0.0).count();
    Ok(Piece { value, terms, tail })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AfeParams {
    /// Abscissa of the w-contour.
    pub c: f64,
    pub h: f64,
    pub y_max: f64,
    /// Rotation angle of the smoothing weight e^{-i theta w}.
    pub theta: f64,
    /// Relative size of the dropped Dirichlet tail; rounding in the weights sits near 1e-12.
    pub tol: f64,
    pub max_norm: u64,
}

impl Default for AfeParams {
    fn default() -> Self {
        AfeParams { c: 2.0, h: 0.1, y_max: 80.0, theta: PI / 8.0, tol: 1e-11, max_norm: 2_000_000 }
    }
}

#[derive(Clone, Debug)]
struct NormGroup {
    norm: u64,
    ln: f64,
    gens: Vec<QuadInt>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AfeValue {
    pub s: Complex64,
    pub value: Complex64,
    pub root_number: Complex64,
    /// Norm cutoffs for the two Dirichlet sums.
    pub cutoffs: (u64, u64),
    /// |L(A = 1) - L(A = 0.8)|, when requested.
    pub scale_check: Option<f64>,
}

/// Smoothed approximate functional equation
/// Lambda(s) = I(A) + W I~(A) - (pole terms), evaluated on a rotated contour.
#[derive(Clone, Debug)]
pub struct AfeEngine {
    pub field: NumberField,
    pub params: AfeParams,
    norms: Vec<NormGroup>,
    limit: u64,
    roots: HashMap<String, Complex64>,
}

struct Prepared {
    finite: Vec<crate::heckefamily::FiniteComponent>,
    groups: ModulusGroups,
    arch: ArchCharacter,
    ln_q: f64,
    trivial: bool,
}

impl AfeEngine {
    pub fn new(field: &NumberField, params: AfeParams) -> Result<Self> {
        if field.class_number != 1 {
            return Err(Error::Unsupported("approximate functional equation needs class number 1".into()));
        }
        Ok(AfeEngine { field: field.clone(), params, norms: vec![], limit: 0, roots: HashMap::new() })
    }

    fn ensure(&mut self, x: u64) -> Result<()> {
        if x <= self.limit {
            return Ok(());
        }
        if x > self.params.max_norm {
            return Err(Error::budget("ideal norm cutoff", x as f64, self.params.max_norm as f64));
        }
        let x = x.max(2 * self.limit).min(self.params.max_norm).max(64);
        let mut groups: Vec<NormGroup> = Vec::new();
        for id in self.field.principal_ideals(x)? {
            match groups.last_mut() {
                Some(g) if g.norm == id.norm => g.gens.push(id.generator),
                _ => groups.push(NormGroup { norm: id.norm, ln: (id.norm as f64).ln(), gens: vec![id.generator] }),
            }
        }
        self.norms = groups;
        self.limit = x;
        Ok(())
    }

    fn prepare(&self, groups: &ModulusGroups, ch: &HeckeCharacter) -> Result<Prepared> {
        let all_trivial = ch.finite.iter().all(|f| f.conductor_exponent == 0);
        let primitive = ch.finite.iter().all(|f| f.conductor_exponent == f.level);
        if !all_trivial && !primitive {
            return Err(Error::Unsupported("finite part must be primitive or trivial".into()));
        }
        let (finite, groups) = if all_trivial {
            (vec![], ModulusGroups { groups: vec![] })
        } else {
            (ch.finite.clone(), groups.clone())
        };
        let qf: f64 = finite.iter().map(|f| (f.prime.norm() as f64).powi(f.level as i32)).product();
        let ln_q = (self.field.discriminant.abs() as f64).ln() + qf.ln();
        let trivial = all_trivial && ch.arch.delta.iter().all(|&d| d == 0) && ch.arch.tau.iter().all(|&t| t == 0.0);
        Ok(Prepared { finite, groups, arch: ch.arch.clone(), ln_q, trivial })
    }

    /// sum_v log Gamma_v(z + i sign tau_v + |delta_v| / deg)
    fn ln_gamma(&self, p: &Prepared, z: Complex64, sign: f64) -> Complex64 {
        self.field
            .places
            .iter()
            .enumerate()
            .map(|(v, k)| {
                let sh = p.arch.delta[v].unsigned_abs() as f64 / k.deg();
                ln_gamma_v(z + c(sh, sign * p.arch.tau[v]), *k)
            })
            .sum()
    }

    fn nodes(&self) -> Vec<Complex64> {
        let n = (2.0 * self.params.y_max / self.params.h).round() as usize;
        (0..=n).map(|j| c(self.params.c, -self.params.y_max + j as f64 * self.params.h)).collect()
    }

    /// Weights of the two w-integrals at scale A, already divided by q^{s/2} gamma(s).
    fn bases(&self, p: &Prepared, s: Complex64, a: f64, theta: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let norm0 = s * 0.5 * p.ln_q + self.ln_gamma(p, s, 1.0);
        let la = a.ln();
        let scale = self.params.h / (2.0 * PI);
        let i = Complex64::i();
        let one = c(1.0, 0.0);
        let nodes = self.nodes();
        let b1 = nodes
            .iter()
            .map(|&w| {
                let e = (s + w) * 0.5 * p.ln_q + self.ln_gamma(p, s + w, 1.0) - norm0 - i * theta * w + w * la;
                e.exp() * scale / w
            })
            .collect();
        let b2 = nodes
            .iter()
            .map(|&w| {
                let e = (one - s + w) * 0.5 * p.ln_q + self.ln_gamma(p, one - s + w, -1.0) - norm0 + i * theta * w - w * la;
                e.exp() * scale / w
            })
            .collect();
        (b1, b2)
    }

    fn weight(&self, base: &[Complex64], ln_n: f64) -> Complex64 {
        let w0 = c(self.params.c, -self.params.y_max);
        geometric_sum(base, -w0 * ln_n, c(0.0, -self.params.h * ln_n))
    }

    /// Smallest N beyond which |weight(N)| N^{1 - sigma} log^2 N stays below tol times its maximum.
    fn cutoff(&self, base: &[Complex64], sigma: f64) -> Result<u64> {
        let mut best = 0.0f64;
        let mut below = 0;
        let mut k = 0;
        loop {
            let n = 1.15f64.powi(k);
            let m = self.weight(base, n.ln()).norm() * n.powf(1.0 - sigma) * (2.0 + n.ln()).powi(2);
            best = best.max(m);
            if m < self.params.tol * best.max(1.0) {
                below += 1;
                if below >= 4 {
                    return Ok(n.ceil() as u64);
                }
            } else {
                below = 0;
            }
            if n > self.params.max_norm as f64 {
                return Err(Error::budget("ideal norm cutoff", n, self.params.max_norm as f64));
            }
            k += 1;
        }
    }

    fn side_sum(&self, p: &Prepared, base: &[Complex64], x: u64, exponent: Complex64, conj: bool) -> Result<Complex64> {
        let mut acc = Vec::new();
        for g in self.norms.iter().take_while(|g| g.norm <= x) {
            let mut s = zero();
            for &a in &g.gens {
                let ch = HeckeCharacter {
                    id: String::new(),
                    finite: p.finite.clone(),
                    arch: p.arch.clone(),
                    class_index: 0,
                    conductor_norm: 1,
                    analytic_conductor: 0.0,
                };
                match chi_on_ideal(&self.field, &p.groups, &ch, a) {
                    Ok(z) => s += if conj { z.conj() } else { z },
                    Err(Error::NotCoprime) => {}
                    Err(e) => return Err(e),
                }
            }
            if s == zero() {
                continue;
            }
            acc.push(s * (-exponent * g.ln).exp() * self.weight(base, g.ln));
        }
        Ok(tree_sum(&acc))
    }

    /// I(A), I~(A) and the pole term P(A), all divided by q^{s/2} gamma(s).
    fn pieces(&mut self, p: &Prepared, s: Complex64, a: f64) -> Result<(Complex64, Complex64, Complex64, (u64, u64))> {
        let tsum: f64 = p.arch.tau.iter().sum();
        let theta = if tsum > 0.0 {
            self.params.theta
        } else if tsum < 0.0 {
            -self.params.theta
        } else {
            0.0
        };
        let (b1, b2) = self.bases(p, s, a, theta);
        let x1 = self.cutoff(&b1, s.re)?;
        let x2 = self.cutoff(&b2, 1.0 - s.re)?;
        self.ensure(x1.max(x2))?;
        let one = c(1.0, 0.0);
        let i1 = self.side_sum(p, &b1, x1, s, false)?;
        let i2 = self.side_sum(p, &b2, x2, one - s, true)?;
        let mut pole = zero();
        if p.trivial {
            if (s - 1.0).norm() < 1e-10 || s.norm() < 1e-10 {
                return Err(Error::Pole(format!("{s}")));
            }
            let norm0 = s * 0.5 * p.ln_q + self.ln_gamma(p, s, 1.0);
            let r = (0.5 * p.ln_q + self.ln_gamma(p, one, 1.0)).exp() * self.field.zeta_residue;
            let i = Complex64::i();
            let la = a.ln();
            pole = r
                * ((-i * theta * (one - s) + (one - s) * la).exp() / (one - s) + (i * theta * s - s * la).exp() / s)
                / norm0.exp();
        }
        Ok((i1, i2, pole, (x1, x2)))
    }

    /// Root number W(chi), solved from the A-independence of the right-hand side.
    pub fn root_number(&mut self, groups: &ModulusGroups, ch: &HeckeCharacter) -> Result<Complex64> {
        let p = self.prepare(groups, ch)?;
        if p.trivial {
            return Ok(c(1.0, 0.0));
        }
        let key = format!("{:?}|{:?}|{:?}", p.finite.iter().map(|f| &f.exps).collect::<Vec<_>>(), p.arch.delta, p.arch.tau);
        if let Some(w) = self.roots.get(&key) {
            return Ok(*w);
        }
        let mut best: Option<(f64, Complex64)> = None;
        for s0 in [c(0.6, 0.1), c(0.45, 1.7)] {
            let (i1, j1, p1, _) = self.pieces(&p, s0, 1.0)?;
            let (i2, j2, p2, _) = self.pieces(&p, s0, 1.3)?;
            let den = j2 - j1;
            let w = ((i1 - p1) - (i2 - p2)) / den;
            if best.is_none_or(|(d, _)| den.norm() > d) {
                best = Some((den.norm(), w));
            }
        }
        let w = best.unwrap().1;
        self.roots.insert(key, w);
        Ok(w)
    }

    /// L(s, chi) for the primitive character attached to `ch`.
    pub fn evaluate(&mut self, groups: &ModulusGroups, ch: &HeckeCharacter, s: Complex64, check: bool) -> Result<AfeValue> {
        let p = self.prepare(groups, ch)?;
        let w = self.root_number(groups, ch)?;
        let (i1, j1, p1, cut) = self.pieces(&p, s, 1.0)?;
        let value = i1 + w * j1 - p1;
        let scale_check = if check {
            let (i3, j3, p3, _) = self.pieces(&p, s, 0.8)?;
            Some((i3 + w * j3 - p3 - value).norm())
        } else {
            None
        };
        Ok(AfeValue { s, value, root_number: w, cutoffs: cut, scale_check })
    }
}

/// L(s, chi) through the approximate functional equation (h = 1, primitive or unramified chi).
pub fn hecke_l_afe(field: &NumberField, groups: &ModulusGroups, ch: &HeckeCharacter, s: Complex64) -> Result<AfeValue> {
    AfeEngine::new(field, AfeParams::default())?.evaluate(groups, ch, s, true)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LineTerm {
    pub delta: Vec<i64>,
    pub tau: Vec<f64>,
    pub l_value: Complex64,
    /// prod_{v != v0} ghat_v(beta + i tau_v, delta_v)
    pub weight: Complex64,
    pub in_family: bool,
}

/// sum over chi of L(beta, chi) prod_{v != v0} ghat_v(beta, chi), for c = (1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LineSum {
    pub beta: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub tau_cut: f64,
    pub terms: Vec<LineTerm>,
    pub sum: Complex64,
    pub abs_sum: f64,
    /// max |weight| over the family characters
    pub max_family_weight: f64,
}

fn sort_key(tau: &[f64]) -> Vec<i64> {
    tau.iter().map(|t| (t * 1e6).round() as i64).collect()
}

/// Every character whose weight exceeds `rel` times the weight of the trivial one.
pub fn beta_line_sum(field: &NumberField, suite: &TestFunctionSuite, engine: &mut AfeEngine, rel: f64) -> Result<LineSum> {
    let beta = c(suite.beta, 0.0);
    let weight = |delta: &[i64], tau: &[f64]| -> Result<Complex64> {
        let mut w = c(1.0, 0.0);
        for v in 0..suite.places.len() {
            if v != suite.v0 {
                w *= suite.mellin(v, beta + c(0.0, tau[v]), delta[v])?;
            }
        }
        Ok(w)
    };
    let r = suite.places.len();
    // radius in tau beyond which every ghat_v is negligible
    let mut tau_cut: f64 = 0.0;
    for v in 0..r {
        if v == suite.v0 {
            continue;
        }
        let w0 = suite.mellin(v, beta, 0)?.norm();
        let step = suite.t.max(1.0) / 2.0;
        let mut below = 0;
        let mut k = 1;
        while below < 12 {
            let tau = k as f64 * step;
            if suite.mellin(v, beta + c(0.0, tau), 0)?.norm() < rel * w0 {
                below += 1;
            } else {
                below = 0;
            }
            k += 1;
            if k > 200_000 {
                return Err(Error::budget("beta-line character range", tau, 1e5 * suite.t));
            }
        }
        tau_cut = tau_cut.max(((k - 12) as f64 * step).powf(suite.places[v].deg()));
    }
    let spec = FamilySpec::new(IdealData::unit(), tau_cut.max(1.0));
    let (groups, fibs, _) = fibers(field, &spec)?;
    let fam_hw: Vec<f64> = suite.places.iter().map(|k| suite.t.powf(1.0 / k.deg())).collect();
    let mut chars: Vec<(Vec<i64>, Vec<f64>)> = Vec::new();
    for fb in fibs.iter().filter(|f| f.lattice.feasible) {
        for tau in fb.lattice.enumerate_points(spec.t) {
            chars.push((fb.delta.clone(), tau));
        }
    }
    let trivial_w = weight(&vec![0; r], &vec![0.0; r])?.norm();
    // chi and its conjugate share L(beta) up to conjugation
    let conj_delta = |d: &[i64]| -> Vec<i64> {
        d.iter()
            .zip(&suite.places)
            .map(|(x, k)| if *k == PlaceKind::Complex { -x } else { *x })
            .collect()
    };
    let mut done: HashMap<(Vec<i64>, Vec<i64>), Complex64> = HashMap::new();
    let mut terms = Vec::new();
    let arch_box_t = |d: &[i64]| d.iter().zip(&suite.places).all(|(x, k)| *k == PlaceKind::Real || (x.abs() as f64) <= suite.t.sqrt());
    for (delta, tau) in chars {
        let w = weight(&delta, &tau)?;
        if w.norm() < rel * trivial_w {
            continue;
        }
        let partner: Vec<f64> = tau.iter().map(|t| -t).collect();
        let key_p = (conj_delta(&delta), sort_key(&partner));
        let l = if let Some(lp) = done.get(&key_p) {
            lp.conj()
        } else {
            let ch = HeckeCharacter {
                id: String::new(),
                finite: vec![],
                arch: ArchCharacter { delta: delta.clone(), tau: tau.clone() },
                class_index: 0,
                conductor_norm: 1,
                analytic_conductor: 0.0,
            };
            engine.evaluate(&groups, &ch, beta, false)?.value
        };
        done.insert((delta.clone(), sort_key(&tau)), l);
        let in_family = tau.iter().zip(&fam_hw).all(|(t, hw)| t.abs() <= hw + 1e-9) && arch_box_t(&delta);
        terms.push(LineTerm { delta, tau, l_value: l, weight: w, in_family });
    }
    let prods: Vec<Complex64> = terms.iter().map(|t| t.l_value * t.weight).collect();
    let max_family_weight = terms.iter().filter(|t| t.in_family).map(|t| t.weight.norm()).fold(0.0, f64::max);
    Ok(LineSum {
        beta: suite.beta,
        t: suite.t,
        tau_cut,
        sum: tree_sum(&prods),
        abs_sum: prods.iter().map(|z| z.norm()).sum(),
        terms,
        max_family_weight,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidueItem {
    pub label: String,
    pub s: Complex64,
    /// Contribution to |x|^{-1} R.
    pub value: Complex64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidueReport {
    pub items: Vec<ResidueItem>,
    pub total: Complex64,
    /// Set when some residues need L-values that are not available (n >= 2).
    pub partial: bool,
}

/// |x|^{-1} R: the s = 1 pole of the trivial character and the poles of ghat_{v0} on Re s = beta.
/// s = 0 contributes nothing since ghat_S is regular there.
pub fn residue_term_r(
    field: &NumberField,
    suite: &TestFunctionSuite,
    rs: &RankinSelbergData,
    y: f64,
    line: Option<&LineSum>,
) -> Result<ResidueReport> {
    check_setting(field, suite, y)?;
    let mut items = Vec::new();
    let exact = is_unit_data(rs);
    let k = kappa(field);
    if exact {
        let mut fhat = c(1.0, 0.0);
        for v in 0..suite.places.len() {
            fhat *= suite.mellin(v, c(1.0, 0.0), 0)?;
        }
        items.push(ResidueItem {
            label: "s=1 trivial character".into(),
            s: c(1.0, 0.0),
            value: fhat * k * field.zeta_residue / y,
        });
    }
    let mut partial = !exact;
    match line {
        Some(l) if exact => {
            if (l.beta - suite.beta).abs() > 1e-15 || (l.t - suite.t).abs() > 1e-12 {
                return Err(Error::validation("beta-line sum was built for another suite"));
            }
            items.push(ResidueItem {
                label: format!("Re s = beta line, {} characters", l.terms.len()),
                s: c(suite.beta, 0.0),
                value: l.sum * k * suite.v0_volume() * y.powf(-suite.beta),
            });
        }
        _ => partial = true,
    }
    let total = items.iter().map(|i| i.value).sum();
    Ok(ResidueReport { items, total, partial })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummationReport {
    pub field: String,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub beta: f64,
    pub g: Piece,
    pub g_star: Piece,
    /// Y^{-1} G*(1/x)
    pub g_star_scaled: Complex64,
    pub residues: ResidueReport,
    pub rhs: Complex64,
    pub residual: f64,
}

/// n = 1, c = (1) verification of the summation identity with caching across (Y, T).
pub struct Verifier {
    pub field: NumberField,
    pub beta: f64,
    pub rs: RankinSelbergData,
    pub tol: f64,
    engine: AfeEngine,
    v0: V0Dual,
    lines: Vec<LineSum>,
}

impl Verifier {
    pub fn new(field: &NumberField, beta: f64) -> Result<Self> {
        if field.class_number != 1 {
            return Err(Error::Unsupported("summation identity needs class number 1".into()));
        }
        let rs = RankinSelbergData::trivial(field.r());
        let suite = TestFunctionSuite::new(field.places.clone(), beta, 1.0)?;
        Ok(Verifier {
            field: field.clone(),
            beta,
            v0: V0Dual::new(&suite, &rs)?,
            rs,
            tol: 1e-6,
            engine: AfeEngine::new(field, AfeParams::default())?,
            lines: vec![],
        })
    }

    pub fn suite(&self, t: f64) -> Result<TestFunctionSuite> {
        TestFunctionSuite::new(self.field.places.clone(), self.beta, t)
    }

    pub fn line_sum(&mut self, t: f64) -> Result<LineSum> {
        if let Some(l) = self.lines.iter().find(|l| l.t == t) {
            return Ok(l.clone());
        }
        let suite = self.suite(t)?;
        let l = beta_line_sum(&self.field, &suite, &mut self.engine, 1e-11)?;
        self.lines.push(l.clone());
        Ok(l)
    }

    pub fn g_pieces(&self, t: f64, y: f64) -> Result<(Piece, Piece)> {
        let suite = self.suite(t)?;
        let duals = DualKernels::new(&suite, &self.rs, self.v0.clone())?;
        let g = global_g(&self.field, &suite, &self.rs, y)?;
        let gs = global_g_star(&self.field, &suite, &self.rs, &duals, y, self.tol)?;
        Ok((g, gs))
    }

    pub fn verify(&mut self, t: f64, y: f64) -> Result<SummationReport> {
        let line = self.line_sum(t)?;
        let suite = self.suite(t)?;
        let (g, gs) = self.g_pieces(t, y)?;
        let residues = residue_term_r(&self.field, &suite, &self.rs, y, Some(&line))?;
        let g_star_scaled = gs.value / y;
        let rhs = residues.total + g_star_scaled;
        let residual = (g.value - rhs).norm() / g.value.norm();
        Ok(SummationReport {
            field: self.field.name.clone(),
            t,
            y,
            beta: self.beta,
            g,
            g_star: gs,
            g_star_scaled,
            residues,
            rhs,
            residual,
        })
    }

    pub fn engine(&mut self) -> &mut AfeEngine {
        &mut self.engine
    }
}

pub fn verify_summation(field: &NumberField, t: f64, y: f64, beta: f64) -> Result<SummationReport> {
    Verifier::new(field, beta)?.verify(t, y)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonvanishingReport {
    pub field: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub beta: f64,
    pub n: u32,
    pub eps: f64,
    /// Normalised family volume V.
    pub volume: f64,
    /// Y = V^{-(n^2+1)/2}
    #[serde(rename = "Y")]
    pub y: f64,
    pub family_size: usize,
    pub g: Piece,
    pub g_star: Piece,
    pub residues: ResidueReport,
    /// Y G(x) lower bound Y^{1 - beta} g0(Y) from the alpha = 1 term.
    pub positivity_ok: bool,
    pub structural: bool,
    /// (G - residues at s = 1 - Y^{-1} G*) Y^beta / (kappa vol_{v0}): the beta-line sum.
    pub extracted: Option<Complex64>,
    /// The same sum computed character by character.
    pub direct: Option<Complex64>,
    pub direct_abs: Option<f64>,
    pub cross_relative: Option<f64>,
    pub max_family_weight: Option<f64>,
    /// |extracted| / max family weight against V^{1 - eps}.
    pub mass: Option<f64>,
    pub mass_target: f64,
    /// Family characters with |L(beta) ghat| > 1e-8, against V^{1/(n^2+1) - eps}.
    pub count: Option<usize>,
    pub count_target: f64,
    /// Y^{beta - 1} and V^{(n^2+1)/2 + eps} Y^beta.
    pub error_terms: (f64, f64),
    /// C with |s = 1 block| = C / (Y V).
    pub residue_block_constant: Option<f64>,
}

/// The lower-bound pipeline with Y = V^{-(n^2+1)/2}; exact for n = 1 data, structural otherwise.
pub fn nonvanishing_average(
    field: &NumberField,
    spec: &FamilySpec,
    beta: f64,
    rs: &RankinSelbergData,
) -> Result<NonvanishingReport> {
    rs.validate(field.r())?;
    let n2 = rs.n2() as f64;
    if !(beta > 1.0 - 2.0 / (n2 + 1.0) && beta < 1.0) {
        return Err(Error::validation("beta must lie in (1 - 2/(n^2+1), 1)"));
    }
    if !spec.modulus.is_unit() || spec.v0 != 0 {
        return Err(Error::Unsupported("pipeline implemented for c = (1) and v0 = 0".into()));
    }
    let eps = 0.05;
    let fam = build_family(field, spec)?;
    let vol = fam.normalized_volume;
    let y = vol.powf(-(n2 + 1.0) / 2.0);
    let suite = TestFunctionSuite::new(field.places.clone(), beta, spec.t.max(1.0))?;
    let v0 = V0Dual::new(&suite, rs)?;
    let duals = DualKernels::new(&suite, rs, v0)?;
    let g = global_g(field, &suite, rs, y)?;
    let gs = global_g_star(field, &suite, rs, &duals, y, 1e-6)?;
    let exact = is_unit_data(rs);
    let positivity_ok = g.value.re >= y.powf(-beta) * g0(y) * (1.0 - 1e-12);
    let error_terms = (y.powf(beta - 1.0), vol.powf((n2 + 1.0) / 2.0 + eps) * y.powf(beta));
    let mut rep = NonvanishingReport {
        field: field.name.clone(),
        t: spec.t,
        beta,
        n: rs.n,
        eps,
        volume: vol,
        y,
        family_size: fam.characters.len(),
        g,
        g_star: gs,
        residues: residue_term_r(field, &suite, rs, y, None)?,
        positivity_ok,
        structural: !exact,
        extracted: None,
        direct: None,
        direct_abs: None,
        cross_relative: None,
        max_family_weight: None,
        mass: None,
        mass_target: vol.powf(1.0 - eps),
        count: None,
        count_target: vol.powf(1.0 / (n2 + 1.0) - eps),
        error_terms,
        residue_block_constant: None,
    };
    if !exact {
        return Ok(rep);
    }
    let s1 = rep.residues.items[0].value;
    let extracted = (rep.g.value - s1 - rep.g_star.value / y) * y.powf(beta) / (kappa(field) * suite.v0_volume());
    let mut engine = AfeEngine::new(field, AfeParams::default())?;
    let line = beta_line_sum(field, &suite, &mut engine, 1e-11)?;
    rep.residues = residue_term_r(field, &suite, rs, y, Some(&line))?;
    rep.extracted = Some(extracted);
    rep.direct = Some(line.sum);
    rep.direct_abs = Some(line.abs_sum);
    rep.cross_relative = Some((extracted - line.sum).norm() / line.sum.norm());
    rep.max_family_weight = Some(line.max_family_weight);
    rep.mass = Some(extracted.norm() / line.max_family_weight);
    rep.count = Some(
        line.terms
            .iter()
            .filter(|t| t.in_family && (t.l_value * t.weight).norm() > 1e-8)
            .count(),
    );
    rep.residue_block_constant = Some(s1.norm() * y * vol);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q5() -> NumberField {
        NumberField::make_quadratic(5).unwrap()
    }

    fn qi() -> NumberField {
        NumberField::make_quadratic(-1).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let p = PrimeIdeal { p: 5, kind: PrimeKind::Rational };
        let rs = RankinSelbergData::trivial(1);
        assert_eq!(rs_coefficients(&rs, &p, 3), 1.0);
        let mut rs2 = RankinSelbergData::toy_gl2(1, PI / 3.0);
        assert!((rs_coefficients(&rs2, &p, 1) - 1.0).abs() < 1e-12);
        rs2.default_satake = vec![c(1.0, 0.0), c(1.0, 0.0)];
        assert!((rs_coefficients(&rs2, &p, 1) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn factorisation_recovers_norm() {
        let f = q5();
        for (a, b) in [(7, 3), (11, 0), (4, 1), (-3, 8), (10, 5), (31, -2)] {
            let x = QuadInt::new(a, b);
            let fac = factor_element(&f, x).unwrap();
            let n: u64 = fac.iter().map(|(p, e)| p.norm().pow(*e)).product();
            assert_eq!(n as i128, f.norm(x).abs(), "{x}");
        }
    }

    #[test]
    fn box_enumeration_matches_brute_force() {
        for f in [q5(), qi()] {
            let r = f.places.len();
            let center: Vec<Complex64> = (0..r).map(|v| c(0.3 + v as f64, 0.1 * v as f64)).collect();
            let radius: Vec<f64> = (0..r).map(|v| 3.0 + 2.0 * v as f64).collect();
            let mut got = elements_in_box(&f, &center, &radius).unwrap();
            let mut want = Vec::new();
            for a in -40..=40 {
                for b in -40..=40 {
                    let x = QuadInt::new(a, b);
                    let e = f.embed(x);
                    if !x.is_zero() && (0..r).all(|v| (e[v] - center[v]).norm() <= radius[v]) {
                        want.push(x);
                    }
                }
            }
            got.sort_by_key(|x| (x.a, x.b));
            want.sort_by_key(|x| (x.a, x.b));
            assert_eq!(got, want);
        }
    }

    fn dirichlet(f: &NumberField, s: f64, n: usize) -> f64 {
        // the tail is rho X^{1-s}/(s-1) up to O(X^{1/2-s})
        let a = f.ideal_counts(n).unwrap();
        let head: f64 = (1..=n).map(|m| a[m] as f64 * (m as f64).powf(-s)).sum();
        head + f.zeta_residue * (n as f64 + 0.5).powf(1.0 - s) / (s - 1.0)
    }

    fn trivial_char(r: usize) -> HeckeCharacter {
        HeckeCharacter {
            id: String::new(),
            finite: vec![],
            arch: ArchCharacter::trivial(r),
            class_index: 0,
            conductor_norm: 1,
            analytic_conductor: 1.0,
        }
    }

    #[test]
    fn afe_trivial_matches_dirichlet_series() {
        for f in [q5(), qi()] {
            let g = ModulusGroups { groups: vec![] };
            let v = hecke_l_afe(&f, &g, &trivial_char(f.r()), c(2.0, 0.0)).unwrap();
            let d = dirichlet(&f, 2.0, 200_000);
            assert!((v.value.re - d).abs() < 1e-6 && v.value.im.abs() < 1e-9, "{} {} {}", f.name, v.value, d);
        }
    }

    #[test]
    fn afe_root_number_and_conjugation() {
        let f = q5();
        let g = ModulusGroups { groups: vec![] };
        let t = 2.0 * PI * 3.0 / f.regulator;
        let mut e = AfeEngine::new(&f, AfeParams::default()).unwrap();
        let mut ch = trivial_char(2);
        ch.arch.tau = vec![0.0, t];
        let v = e.evaluate(&g, &ch, c(0.7, 0.0), true).unwrap();
        assert!(v.scale_check.unwrap() < 1e-8, "{:?}", v);
        let w_closed = Complex64::from_polar(1.0, -t * 5f64.ln() / 2.0);
        assert!((v.root_number - w_closed).norm() < 1e-8, "{} {}", v.root_number, w_closed);
        ch.arch.tau = vec![0.0, -t];
        let u = e.evaluate(&g, &ch, c(0.7, 0.0), false).unwrap();
        assert!((u.value - v.value.conj()).norm() < 1e-9);
    }

    #[test]
    fn summation_identity_small() {
        let f = q5();
        let mut ver = Verifier::new(&f, 1.5).unwrap();
        let r = ver.verify(10.0, 0.3).unwrap();
        assert!(r.residual < 1e-3, "{:?}", r);
        let fi = qi();
        let r = verify_summation(&fi, 10.0, 0.5, 1.3).unwrap();
        assert!(r.residual < 1e-3, "{:?}", r);
    }
}
