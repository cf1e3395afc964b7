//! Families X(c, D, T) of Hecke characters: enumeration by fibering over
//! the finite-times-archimedean characters, conductors, and evaluation on
//! principal ideals.

use crate::charlattice::{
    box_section_volume, principal_arg, shifted_lattice, trivial_covolume, Hyperplane, ShiftedLattice, UnitConstraint,
};
use crate::error::{Error, Result};
use crate::numberfield::{IdealData, NumberField, PlaceKind, PrimeIdeal, QuadInt, ResidueUnitGroup};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchCharacter {
    /// 0/1 at real places, an integer at complex places.
    pub delta: Vec<i64>,
    pub tau: Vec<f64>,
}

impl ArchCharacter {
    pub fn trivial(r: usize) -> Self {
        ArchCharacter { delta: vec![0; r], tau: vec![0.0; r] }
    }

    /// 1 + |delta_v + i tau_v|^{[K_v:R]}
    pub fn local_conductor(&self, v: usize, kind: PlaceKind) -> f64 {
        let z = Complex64::new(self.delta[v] as f64, self.tau[v]);
        1.0 + z.norm().powi(kind.degree() as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteComponent {
    pub prime: PrimeIdeal,
    pub level: u32,
    /// Exponents against the generators of (O/p^level)^x.
    pub exps: Vec<u64>,
    pub conductor_exponent: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeckeCharacter {
    pub id: String,
    pub finite: Vec<FiniteComponent>,
    pub arch: ArchCharacter,
    pub class_index: u32,
    pub conductor_norm: u64,
    pub analytic_conductor: f64,
}

impl HeckeCharacter {
    pub fn is_trivial(&self) -> bool {
        self.conductor_norm == 1
            && self.class_index == 0
            && self.arch.delta.iter().all(|&d| d == 0)
            && self.arch.tau.iter().all(|&t| t == 0.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilySpec {
    pub modulus: IdealData,
    #[serde(rename = "T")]
    pub t: f64,
    pub hyperplane: Option<Hyperplane>,
    pub v0: usize,
}

impl FamilySpec {
    pub fn new(modulus: IdealData, t: f64) -> Self {
        FamilySpec { modulus, t, hyperplane: None, v0: 0 }
    }

    pub fn hyperplane(&self, r: usize) -> Hyperplane {
        self.hyperplane.clone().unwrap_or_else(|| Hyperplane::distinguished(r, self.v0))
    }
}

/// Residue unit groups for each p^e || c.
#[derive(Clone, Debug)]
pub struct ModulusGroups {
    pub groups: Vec<ResidueUnitGroup>,
}

impl ModulusGroups {
    pub fn new(field: &NumberField, c: &IdealData) -> Result<Self> {
        c.check_unramified()?;
        let groups = c
            .factors
            .iter()
            .map(|(p, e)| field.residue_unit_group(p, *e))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModulusGroups { groups })
    }

    /// phi(c)
    pub fn order(&self) -> u64 {
        self.groups.iter().map(|g| g.order()).product()
    }

    /// Finite character with mixed index `idx` over all primes.
    pub fn finite_components(&self, mut idx: u64) -> Vec<FiniteComponent> {
        self.groups
            .iter()
            .map(|g| {
                let o = g.order();
                let exps = g.exps_of_index(idx % o);
                idx /= o;
                FiniteComponent {
                    prime: g.ring.prime,
                    level: g.ring.e,
                    conductor_exponent: g.conductor_exponent(&exps),
                    exps,
                }
            })
            .collect()
    }

    /// Sum over p | c of arg delta_p(x), as a fraction of a full turn.
    pub fn turn(&self, finite: &[FiniteComponent], x: QuadInt) -> Result<f64> {
        let mut t = 0.0;
        for (g, f) in self.groups.iter().zip(finite) {
            let l = g.dlog(g.ring.reduce(x)).ok_or(Error::NotCoprime)?;
            t += g.pairing(&f.exps, &l);
        }
        Ok(t - t.floor())
    }
}

/// arg delta_infty(u) summed over places.
fn arch_arg(field: &NumberField, delta: &[i64], emb: &[Complex64]) -> f64 {
    field
        .places
        .iter()
        .zip(delta)
        .zip(emb)
        .map(|((k, &d), z)| match k {
            PlaceKind::Real => {
                if d % 2 != 0 && z.re < 0.0 {
                    PI
                } else {
                    0.0
                }
            }
            PlaceKind::Complex => d as f64 * z.arg(),
        })
        .sum()
}

fn unit_constraints(
    field: &NumberField,
    groups: &ModulusGroups,
    finite: &[FiniteComponent],
    delta: &[i64],
) -> Result<Vec<UnitConstraint>> {
    let mut units = vec![&field.torsion_generator];
    units.extend(field.fundamental_units.iter());
    units
        .into_iter()
        .map(|u| {
            let mut arg = arch_arg(field, delta, &u.embeddings);
            if !groups.groups.is_empty() {
                if u.coeffs.len() != 2 {
                    return Err(Error::Unsupported("finite moduli need element coordinates of the units".into()));
                }
                let x = QuadInt::new(u.coeffs[0], u.coeffs[1]);
                arg += 2.0 * PI * groups.turn(finite, x)?;
            }
            Ok(UnitConstraint { log_vector: u.log_vector.clone(), arg: principal_arg(arg) })
        })
        .collect()
}

/// Archimedean box D: delta_{v0} = 0, {0,1} at real places, |delta| <= floor(sqrt T) at complex places.
pub fn arch_box(field: &NumberField, v0: usize, t: f64) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![vec![]];
    for (v, k) in field.places.iter().enumerate() {
        let choices: Vec<i64> = if v == v0 {
            vec![0]
        } else {
            match k {
                PlaceKind::Real => vec![0, 1],
                PlaceKind::Complex => {
                    let m = t.max(0.0).sqrt().floor() as i64;
                    (-m..=m).collect()
                }
            }
        };
        out = out
            .into_iter()
            .flat_map(|p| {
                choices.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

/// One delta in D(c) with its shifted lattice.
#[derive(Clone, Debug)]
pub struct Fiber {
    pub finite: Vec<FiniteComponent>,
    pub delta: Vec<i64>,
    pub lattice: ShiftedLattice,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Family {
    pub field: String,
    pub spec: FamilySpec,
    pub phi: u64,
    /// |D| (archimedean box) and |D(c)| = phi |D|.
    pub arch_box_size: usize,
    pub fibers_total: usize,
    pub fibers_feasible: usize,
    /// phi(c) |D| vol(B(0,T) cap h)
    pub volume: f64,
    /// h |feasible D(c)| vol(B(0,T) cap h) / covolume, the predicted size.
    pub normalized_volume: f64,
    pub characters: Vec<HeckeCharacter>,
}

fn content_id(field: &NumberField, finite: &[FiniteComponent], arch: &ArchCharacter, class_index: u32) -> String {
    let mut s = format!("{}|", field.name);
    for f in finite {
        s.push_str(&format!("{}^{}:{:?};", f.prime.label(), f.level, f.exps));
    }
    s.push_str(&format!("|{:?}|", arch.delta));
    for t in &arch.tau {
        s.push_str(&format!("{:.9};", t));
    }
    s.push_str(&format!("|{class_index}"));
    let digest = Sha256::digest(s.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fibers(field: &NumberField, spec: &FamilySpec) -> Result<(ModulusGroups, Vec<Fiber>, usize)> {
    let groups = ModulusGroups::new(field, &spec.modulus)?;
    let h = spec.hyperplane(field.r());
    let boxd = arch_box(field, spec.v0, spec.t);
    let phi = groups.order();
    let total = phi as usize * boxd.len();
    let list: Vec<(u64, usize)> = (0..phi).flat_map(|i| (0..boxd.len()).map(move |j| (i, j))).collect();
    let fibers = list
        .par_iter()
        .map(|&(i, j)| {
            let finite = groups.finite_components(i);
            let delta = boxd[j].clone();
            let cons = unit_constraints(field, &groups, &finite, &delta)?;
            let lattice = shifted_lattice(field, &h, &cons)?;
            Ok(Fiber { finite, delta, lattice })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((groups, fibers, total))
}

pub fn analytic_conductor(field: &NumberField, ch: &HeckeCharacter) -> f64 {
    let fin: f64 = ch
        .finite
        .iter()
        .map(|f| (f.prime.norm() as f64).powi(f.conductor_exponent as i32))
        .product();
    let arch: f64 = field
        .places
        .iter()
        .enumerate()
        .map(|(v, k)| ch.arch.local_conductor(v, *k))
        .product();
    fin * arch
}

pub fn build_family(field: &NumberField, spec: &FamilySpec) -> Result<Family> {
    if spec.t < 0.0 {
        return Err(Error::validation("T must be >= 0"));
    }
    let (_, fibers, total) = fibers(field, spec)?;
    let h = spec.hyperplane(field.r());
    let vol = box_section_volume(&field.places, &h, spec.t);
    let cov = trivial_covolume(field, &h)?;
    let feasible = fibers.iter().filter(|f| f.lattice.feasible).count();
    let per_fiber: Vec<Vec<HeckeCharacter>> = fibers
        .par_iter()
        .map(|fb| {
            let cond_norm: u64 = fb
                .finite
                .iter()
                .map(|f| f.prime.norm().pow(f.conductor_exponent))
                .product();
            let mut out = Vec::new();
            for tau in fb.lattice.enumerate_points(spec.t) {
                for ci in 0..field.class_number {
                    let arch = ArchCharacter { delta: fb.delta.clone(), tau: tau.clone() };
                    let mut ch = HeckeCharacter {
                        id: content_id(field, &fb.finite, &arch, ci),
                        finite: fb.finite.clone(),
                        arch,
                        class_index: ci,
                        conductor_norm: cond_norm,
                        analytic_conductor: 0.0,
                    };
                    ch.analytic_conductor = analytic_conductor(field, &ch);
                    out.push(ch);
                }
            }
            out
        })
        .collect();
    Ok(Family {
        field: field.name.clone(),
        spec: spec.clone(),
        phi: field.euler_phi(&spec.modulus),
        arch_box_size: arch_box(field, spec.v0, spec.t).len(),
        fibers_total: total,
        fibers_feasible: feasible,
        volume: field.euler_phi(&spec.modulus) as f64 * arch_box(field, spec.v0, spec.t).len() as f64 * vol,
        normalized_volume: field.class_number as f64 * feasible as f64 * vol / cov,
        characters: per_fiber.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub count: usize,
    pub volume: f64,
    pub normalized_volume: f64,
    pub ratio: f64,
}

/// |X(c,D,T)| against the predicted size for each T; fibers are built once.
pub fn verify_counting(field: &NumberField, spec: &FamilySpec, ts: &[f64]) -> Result<Vec<CountRow>> {
    let h = spec.hyperplane(field.r());
    let cov = trivial_covolume(field, &h)?;
    let groups = ModulusGroups::new(field, &spec.modulus)?;
    let phi = groups.order();
    ts.iter()
        .map(|&t| {
            // the complex-place box depends on T, so rebuild fibers per T
            let s = FamilySpec { t, ..spec.clone() };
            let (_, fibs, _) = fibers(field, &s)?;
            let count: usize = fibs
                .par_iter()
                .map(|f| f.lattice.enumerate_points(t).len())
                .sum::<usize>()
                * field.class_number as usize;
            let vol = box_section_volume(&field.places, &h, t);
            let feasible = fibs.iter().filter(|f| f.lattice.feasible).count();
            let nv = field.class_number as f64 * feasible as f64 * vol / cov;
            Ok(CountRow {
                t,
                count,
                volume: phi as f64 * arch_box(field, spec.v0, t).len() as f64 * vol,
                normalized_volume: nv,
                ratio: count as f64 / nv,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConductorBound {
    /// C(chi)^{n^2}, the chi-dependent factor.
    pub chi_factor: f64,
    pub family_bound: f64,
    pub within_family_bound: bool,
}

/// Rankin-Selberg conductor factor and the family bound N(c) (1+T)^{r-1} 2^r.
pub fn rs_conductor_bound(field: &NumberField, ch: &HeckeCharacter, n: u32, spec: &FamilySpec) -> ConductorBound {
    let c = analytic_conductor(field, ch);
    let r = field.r() as i32;
    let bound = spec.modulus.norm() as f64 * (1.0 + spec.t).powi(r - 1) * 2f64.powi(r);
    ConductorBound { chi_factor: c.powi((n * n) as i32), family_bound: bound, within_family_bound: c <= bound * (1.0 + 1e-12) }
}

/// chi((alpha)) = prod_{v|infty} chi_v(alpha)^{-1} prod_{p|c} delta_p(alpha)^{-1}.
pub fn chi_on_ideal(field: &NumberField, groups: &ModulusGroups, ch: &HeckeCharacter, alpha: QuadInt) -> Result<Complex64> {
    if field.class_number != 1 {
        return Err(Error::Unsupported("character values on ideals need class number 1".into()));
    }
    if alpha.is_zero() {
        return Err(Error::validation("generator must be nonzero"));
    }
    let emb = field.embed(alpha);
    let mut phase = 0.0;
    for (v, k) in field.places.iter().enumerate() {
        let z = emb[v];
        let d = ch.arch.delta[v];
        phase += match k {
            PlaceKind::Real => {
                if d % 2 != 0 && z.re < 0.0 {
                    PI
                } else {
                    0.0
                }
            }
            PlaceKind::Complex => d as f64 * z.arg(),
        };
        phase += ch.arch.tau[v] * k.abs(z).ln();
    }
    if !groups.groups.is_empty() {
        phase += 2.0 * PI * groups.turn(&ch.finite, alpha)?;
    }
    Ok(Complex64::from_polar(1.0, -phase))
}
