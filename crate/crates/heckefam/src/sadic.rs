//! S-unit aggregation: the Bruggeman-Miatello unit sum and G*_S(x) as a sum
//! over O_S^x, with envelope and decay checks for G*_S.

use crate::archgamma::{RankinSelbergData, TestFunctionSuite};
use crate::error::{Error, Result};
use crate::expsums::{gstar_finite, LocalDual, LocalElement};
use crate::heckefamily::{build_family, FamilySpec};
use crate::numberfield::{NumberField, PrimeIdeal, PrimeKind, QuadInt, ResidueRing, ResidueUnitGroup};
use crate::quad::tree_sum;
use crate::voronoi::{DualKernels, V0Dual};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const TERM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BmSum {
    #[serde(rename = "A")]
    pub a: f64,
    pub abs_x: f64,
    pub sum: f64,
    pub terms: usize,
    /// min(1 + |log|x||^{r-1}, |x|^{-A})
    pub envelope: f64,
    /// sum / envelope
    pub constant: f64,
}

fn fundamental_logs(field: &NumberField) -> Result<Option<Vec<f64>>> {
    match field.fundamental_units.len() {
        0 => Ok(None),
        1 => Ok(Some(field.fundamental_units[0].log_vector.clone())),
        _ => Err(Error::Unsupported("unit sums implemented for unit rank <= 1".into())),
    }
}

/// Range of k with sum_v max(0, log|u^k x|_v) small enough that the term can exceed `floor`.
fn k_window(logs: &[f64], lx: &[f64], a: f64, floor: f64) -> (i64, i64) {
    let step = logs.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let spread: f64 = lx.iter().map(|l| l.abs()).sum();
    let k = ((spread + (-floor.ln()) / a.max(1e-9)) / step).ceil() as i64 + 2;
    (-k, k)
}

/// sum over u in O_K^x of prod_v min(1, |(u x)_v|_v^{-A}), dropping terms below 1e-12 of the largest.
pub fn bm_unit_sum(field: &NumberField, a: f64, x: &[Complex64]) -> Result<BmSum> {
    if a < 1.0 {
        return Err(Error::validation("A must be >= 1"));
    }
    if x.len() != field.places.len() || x.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::validation("x must be a nonzero vector with one entry per place"));
    }
    // log|x_v|_v
    let lx: Vec<f64> = field.places.iter().zip(x).map(|(k, z)| k.abs(*z).ln()).collect();
    let term = |shift: &[f64]| -> f64 { lx.iter().zip(shift).map(|(l, s)| (-a * (l + s).max(0.0)).exp()).product() };
    let w = field.torsion_order as f64;
    let mut vals = Vec::new();
    match fundamental_logs(field)? {
        None => vals.push(term(&vec![0.0; lx.len()])),
        Some(logs) => {
            let (lo, hi) = k_window(&logs, &lx, a, TERM_FLOOR);
            for k in lo..=hi {
                let shift: Vec<f64> = logs.iter().map(|l| k as f64 * l).collect();
                vals.push(term(&shift));
            }
        }
    }
    let peak = vals.iter().cloned().fold(0.0, f64::max);
    let kept: Vec<f64> = vals.into_iter().filter(|t| *t >= TERM_FLOOR * peak).collect();
    let sum = w * kept.iter().sum::<f64>();
    let abs_x: f64 = lx.iter().sum::<f64>().exp();
    let r = field.places.len() as i32;
    let envelope = (1.0 + abs_x.ln().abs().powi(r - 1)).min(abs_x.powf(-a));
    Ok(BmSum { a, abs_x, sum, terms: kept.len() * field.torsion_order as usize, envelope, constant: sum / envelope })
}

/// A point of K_S^x: archimedean components and, for each finite prime of S, |x|_p = N(p)^k and a unit part.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SAdicPoint {
    pub arch: Vec<Complex64>,
    pub finite: Vec<LocalElement>,
}

/// One finite place of S with its residue group, dual data, and the S-unit generators in log coordinates.
#[derive(Clone, Debug)]
pub struct LocalPlace {
    pub prime: PrimeIdeal,
    pub level: u32,
    pub generator: QuadInt,
    pub dual: LocalDual,
    pub pairs: Vec<Complex64>,
    /// Discrete logs of the torsion generator, the fundamental unit (if any), and
    /// the unit parts of each S-prime generator at this place.
    torsion_log: Vec<u64>,
    unit_log: Option<Vec<u64>>,
    gen_logs: Vec<Vec<u64>>,
}

/// Finite part of S: the primes of the modulus, each with a generator of the prime ideal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SUnitIndex {
    pub primes: Vec<String>,
    pub generators: Vec<QuadInt>,
    pub torsion_order: u32,
    pub unit_rank: usize,
}

/// Unit part of pi at its own prime, in O/p^e: pi / p for split primes, 1 when pi = p.
fn own_unit_part(field: &NumberField, pr: PrimeIdeal, gen: QuadInt, e: u32) -> Result<u64> {
    match pr.kind {
        PrimeKind::Split(_) => {
            let ring = ResidueRing::new(field, pr, e + 1)?;
            let r = ring.reduce(gen);
            if r % pr.p != 0 {
                return Err(Error::validation("generator is not divisible by p"));
            }
            Ok((r / pr.p) % pr.p.pow(e))
        }
        _ => {
            if gen != QuadInt::int(pr.p as i64) && gen != QuadInt::int(-(pr.p as i64)) {
                return Err(Error::Unsupported("prime generator must be p at inert primes".into()));
            }
            Ok(if gen.a < 0 { pr.p.pow(e) - 1 } else { 1 })
        }
    }
}

fn unit_int(u: &crate::numberfield::Unit) -> Result<QuadInt> {
    match u.coeffs.as_slice() {
        [a] => Ok(QuadInt::int(*a)),
        [a, b] => Ok(QuadInt::new(*a, *b)),
        _ => Err(Error::Unsupported("unit given only by embeddings".into())),
    }
}

fn log_of(group: &ResidueUnitGroup, x: QuadInt) -> Result<Vec<u64>> {
    group.dlog(group.ring.reduce(x)).ok_or(Error::NotCoprime)
}

fn combine(group: &ResidueUnitGroup, parts: &[(&[u64], i64)]) -> Vec<u64> {
    group
        .orders
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            let o = o as i64;
            parts.iter().map(|(l, c)| (l[i] as i64 % o) * (c.rem_euclid(o))).fold(0i64, |a, b| (a + b % o) % o) as u64
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SAdic {
    pub field: NumberField,
    pub suite: TestFunctionSuite,
    pub rs: RankinSelbergData,
    pub duals: DualKernels,
    pub locals: Vec<LocalPlace>,
    pub index: SUnitIndex,
    /// Normalised family volume V for (c, T).
    pub volume: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GsValue {
    pub value: Complex64,
    pub terms: usize,
    /// Largest term times the relative kernel level at the truncation radii, per boundary unit.
    pub tail: f64,
    /// S-unit exponent windows (l box per prime, k range) that were summed.
    pub l_range: Vec<(i64, i64)>,
    pub k_range: (i64, i64),
}

impl SAdic {
    /// S = archimedean places plus the primes dividing the suite modulus.
    pub fn new(field: &NumberField, suite: &TestFunctionSuite, rs: &RankinSelbergData) -> Result<Self> {
        if field.class_number != 1 {
            return Err(Error::Unsupported("S-unit sums need class number 1".into()));
        }
        rs.validate(field.r())?;
        let logs_len = field.fundamental_units.len();
        if logs_len > 1 {
            return Err(Error::Unsupported("S-unit sums implemented for unit rank <= 1".into()));
        }
        let duals = DualKernels::new(suite, rs, V0Dual::new(suite, rs)?)?;
        let gens: Vec<QuadInt> = suite
            .modulus
            .factors
            .iter()
            .map(|(p, _)| field.prime_generator(p))
            .collect::<Result<_>>()?;
        let torsion = unit_int(&field.torsion_generator)?;
        let fund = match field.fundamental_units.first() {
            Some(u) => Some(unit_int(u)?),
            None => None,
        };
        let mut locals = Vec::new();
        for (i, (pr, e)) in suite.modulus.factors.iter().enumerate() {
            let group = field.residue_unit_group(pr, *e)?;
            let torsion_log = log_of(&group, torsion)?;
            let unit_log = match fund {
                Some(u) => Some(log_of(&group, u)?),
                None => None,
            };
            let mut gen_logs = Vec::new();
            for (j, g) in gens.iter().enumerate() {
                if j == i {
                    let own = own_unit_part(field, *pr, *g, *e)?;
                    gen_logs.push(group.dlog(own).ok_or(Error::NotCoprime)?);
                } else {
                    gen_logs.push(log_of(&group, *g)?);
                }
            }
            locals.push(LocalPlace {
                prime: *pr,
                level: *e,
                generator: gens[i],
                dual: LocalDual::new(group)?,
                pairs: rs.pair_parameters(pr),
                torsion_log,
                unit_log,
                gen_logs,
            });
        }
        let fam = build_family(field, &FamilySpec::new(suite.modulus.clone(), suite.t))?;
        Ok(SAdic {
            field: field.clone(),
            suite: suite.clone(),
            rs: rs.clone(),
            duals,
            index: SUnitIndex {
                primes: suite.modulus.factors.iter().map(|(p, _)| p.label()).collect(),
                generators: gens,
                torsion_order: field.torsion_order,
                unit_rank: logs_len,
            },
            locals,
            volume: fam.normalized_volume,
            eps: 0.05,
        })
    }

    /// |x|_S
    pub fn abs_s(&self, x: &SAdicPoint) -> f64 {
        let arch: f64 = self.field.places.iter().zip(&x.arch).map(|(k, z)| k.abs(*z)).product();
        let fin: f64 = self
            .locals
            .iter()
            .zip(&x.finite)
            .map(|(l, e)| (l.prime.norm() as f64).powi(e.k))
            .product();
        arch * fin
    }

    /// u x for u = zeta^j eps^k prod pi_p^{l_p}.
    pub fn multiply(&self, x: &SAdicPoint, j: i64, k: i64, l: &[i64]) -> Result<SAdicPoint> {
        let emb_t = &self.field.torsion_generator.embeddings;
        let emb_u = self.field.fundamental_units.first().map(|u| &u.embeddings);
        let gen_emb: Vec<Vec<Complex64>> = self.index.generators.iter().map(|g| self.field.embed(*g)).collect();
        let arch = x
            .arch
            .iter()
            .enumerate()
            .map(|(v, z)| {
                let mut y = z * emb_t[v].powi(j as i32);
                if let Some(eu) = emb_u {
                    y *= eu[v].powi(k as i32);
                }
                for (g, lp) in gen_emb.iter().zip(l) {
                    y *= g[v].powi(*lp as i32);
                }
                y
            })
            .collect();
        let mut finite = Vec::new();
        for (i, (loc, xe)) in self.locals.iter().zip(&x.finite).enumerate() {
            let g = &loc.dual.group;
            let xl = g.dlog(xe.unit).ok_or(Error::NotCoprime)?;
            let mut parts: Vec<(&[u64], i64)> = vec![(&xl, 1), (&loc.torsion_log, j)];
            if let Some(ul) = &loc.unit_log {
                parts.push((ul, k));
            }
            for (gl, lp) in loc.gen_logs.iter().zip(l) {
                parts.push((gl, *lp));
            }
            let exps = combine(g, &parts);
            finite.push(LocalElement { k: xe.k - l[i] as i32, unit: g.element(g.index_of_exps(&exps)) });
        }
        Ok(SAdicPoint { arch, finite })
    }

    /// g*_S(x) = prod over v in S of g*_v(x_v).
    pub fn gstar_s(&self, x: &SAdicPoint) -> Result<Complex64> {
        let mut g = Complex64::new(1.0, 0.0);
        for (v, k) in self.field.places.iter().enumerate() {
            g *= self.duals.eval(v, *k, x.arch[v]);
            if g.norm() == 0.0 {
                return Ok(g);
            }
        }
        for (loc, xe) in self.locals.iter().zip(&x.finite) {
            g *= gstar_finite(&loc.dual, &loc.pairs, *xe)?.value;
        }
        Ok(g)
    }

    /// G*_S(x) = sum over u in O_S^x of g*_S(u x). The windows follow the exact supports:
    /// g*_p vanishes once k_p exceeds e_p n^2, and g*_v vanishes beyond its truncation radius.
    pub fn gs_star_value(&self, x: &SAdicPoint) -> Result<GsValue> {
        if x.arch.len() != self.field.places.len() || x.finite.len() != self.locals.len() {
            return Err(Error::validation("point does not match S"));
        }
        if x.arch.iter().any(|z| z.norm() == 0.0) {
            return Err(Error::validation("x must be nonzero at every place"));
        }
        let n2 = self.rs.n2() as i64;
        let ln_r: f64 = self.field.places.iter().enumerate().map(|(v, _)| self.duals.radius[v].ln()).sum();
        let ln_x: f64 = self.field.places.iter().zip(&x.arch).map(|(k, z)| k.abs(*z).ln()).sum();
        // l_p >= k_p - e_p n^2 from the finite supports; the archimedean radii bound sum l_p log N(p)
        let lo: Vec<i64> = self
            .locals
            .iter()
            .zip(&x.finite)
            .map(|(loc, xe)| xe.k as i64 - loc.level as i64 * n2.max(1) - 1)
            .collect();
        let lnn: Vec<f64> = self.locals.iter().map(|l| (l.prime.norm() as f64).ln()).collect();
        let base: f64 = lo.iter().zip(&lnn).map(|(l, n)| *l as f64 * n).sum();
        let hi: Vec<i64> = lo
            .iter()
            .zip(&lnn)
            .map(|(l, n)| l + ((ln_r - ln_x - base) / n).floor().max(-1.0) as i64 + 1)
            .collect();
        let mut boxes: Vec<Vec<i64>> = vec![vec![]];
        for (a, b) in lo.iter().zip(&hi) {
            boxes = boxes
                .into_iter()
                .flat_map(|p| {
                    (*a..=*b.max(a)).map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        let mut k_range = (0i64, 0i64);
        let mut jobs = Vec::new();
        for l in &boxes {
            let ks: (i64, i64) = match self.field.fundamental_units.first() {
                None => (0, 0),
                Some(u) => {
                    // a term is nonzero only if |eps^k y_v|_v <= R_v at every place
                    let y = self.multiply(x, 0, 0, l)?;
                    let mut kl = i64::MIN;
                    let mut kh = i64::MAX;
                    for (v, k) in self.field.places.iter().enumerate() {
                        let lu = u.log_vector[v];
                        let ly = k.abs(y.arch[v]).ln();
                        let bound = (self.duals.radius[v].ln() - ly) / lu;
                        if lu > 0.0 {
                            kh = kh.min(bound.floor() as i64 + 1);
                        } else {
                            kl = kl.max(bound.ceil() as i64 - 1);
                        }
                    }
                    if kl > kh {
                        continue;
                    }
                    (kl, kh)
                }
            };
            k_range = (k_range.0.min(ks.0), k_range.1.max(ks.1));
            for j in 0..self.field.torsion_order as i64 {
                for k in ks.0..=ks.1 {
                    jobs.push((j, k, l.clone()));
                }
            }
        }
        if jobs.len() > 50_000_000 {
            return Err(Error::budget("S-unit terms", jobs.len() as f64, 5e7));
        }
        let vals: Vec<Complex64> = jobs
            .par_iter()
            .map(|(j, k, l)| self.gstar_s(&self.multiply(x, *j, *k, l)?))
            .collect::<Result<_>>()?;
        let top = vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let rel: f64 = (0..self.field.places.len())
            .map(|v| self.duals.cut_level[v] / self.duals.peak[v].max(f64::MIN_POSITIVE))
            .sum();
        let edge = 2.0 * self.field.torsion_order as f64 * boxes.len() as f64;
        Ok(GsValue {
            value: tree_sum(&vals),
            tail: top * rel * edge,
            terms: vals.iter().filter(|z| z.norm() > 0.0).count(),
            l_range: lo.into_iter().zip(hi).collect(),
            k_range,
        })
    }

    /// x with |x|_S = s placed at v0 and trivial elsewhere.
    pub fn point(&self, s: f64) -> SAdicPoint {
        let v0 = self.suite.v0;
        let arch = self
            .field
            .places
            .iter()
            .enumerate()
            .map(|(v, k)| {
                if v == v0 {
                    Complex64::new(s.powf(1.0 / k.deg()), 0.0)
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect();
        let finite = self
            .locals
            .iter()
            .map(|l| LocalElement { k: 0, unit: l.dual.group.ring.one() })
            .collect();
        SAdicPoint { arch, finite }
    }
}

/// sum over l in Z^{|S_fin|} of min(1 + |log X_l|^{r-1}, X_l^{-A}) prod_p (1 + N(p)^{-l_p})^{-A},
/// X_l = ratio prod N(p)^{l_p}, with the envelope min(1 + |log ratio|^{|S|-1}, ratio^{-A}).
pub fn induction_sum(norms: &[f64], r: usize, a: f64, ratio: f64) -> (f64, f64) {
    let s_size = (r + norms.len()) as i32;
    let env = (1.0 + ratio.ln().abs().powi(s_size - 1)).min(ratio.powf(-a));
    let ranges: Vec<i64> = norms
        .iter()
        .map(|n| ((40.0 / a + ratio.ln().abs()) / n.ln()).ceil() as i64 + 3)
        .collect();
    let mut boxes: Vec<Vec<i64>> = vec![vec![]];
    for m in &ranges {
        boxes = boxes
            .into_iter()
            .flat_map(|p| {
                (-*m..=*m).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    let sum = boxes
        .iter()
        .map(|l| {
            let lx: f64 = ratio.ln() + l.iter().zip(norms).map(|(k, n)| *k as f64 * n.ln()).sum::<f64>();
            let head = (1.0 + lx.abs().powi(r as i32 - 1)).min((-a * lx).exp());
            let tail: f64 = l.iter().zip(norms).map(|(k, n)| (1.0 + n.powf(-(*k as f64))).powf(-a)).product();
            head * tail
        })
        .sum();
    (sum, env)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GsRow {
    pub abs_x: f64,
    pub value: Complex64,
    /// |G*_S(x)| |x|_S / V^{(n^2-1)/2 + eps}
    pub envelope_ratio: f64,
    /// |G*_S(x)| / max over the grid
    pub decay_ratio: f64,
    /// |x|_S / V^{n^2 + eps}
    pub scaled: f64,
    pub induction_sum: f64,
    pub induction_envelope: f64,
}

/// Envelope and decay table of G*_S on a grid of |x|_S values.
pub fn verify_gs_corollary(sa: &SAdic, grid: &[f64], a: f64) -> Result<Vec<GsRow>> {
    let n2 = sa.rs.n2() as f64;
    let lead = sa.volume.powf((n2 - 1.0) / 2.0 + sa.eps);
    let top = sa.volume.powf(n2 + sa.eps);
    let norms: Vec<f64> = sa.locals.iter().map(|l| l.prime.norm() as f64).collect();
    let mut rows = Vec::new();
    for &s in grid {
        let g = sa.gs_star_value(&sa.point(s))?;
        let (isum, ienv) = induction_sum(&norms, sa.field.places.len(), a, s / top);
        rows.push(GsRow {
            abs_x: s,
            value: g.value,
            envelope_ratio: g.value.norm() * s / lead,
            decay_ratio: 0.0,
            scaled: s / top,
            induction_sum: isum,
            induction_envelope: ienv,
        });
    }
    let peak = rows.iter().map(|r| r.value.norm()).fold(0.0, f64::max);
    for r in &mut rows {
        r.decay_ratio = if peak > 0.0 { r.value.norm() / peak } else { 0.0 };
    }
    Ok(rows)
}

/// |x|_S grid log-spaced on [1, V^{n^2}] plus the point 2 V^{n^2 + eps}.
pub fn default_grid(sa: &SAdic, points: usize) -> Vec<f64> {
    let n2 = sa.rs.n2() as f64;
    let top = sa.volume.powf(n2);
    let mut g: Vec<f64> = (0..points)
        .map(|i| top.powf(i as f64 / (points.max(2) - 1) as f64))
        .collect();
    g.push(2.0 * sa.volume.powf(n2 + sa.eps));
    g
}
