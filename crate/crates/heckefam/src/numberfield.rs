//! Quadratic fields (plus Q and config-supplied fields): embeddings, units,
//! prime splitting, residue rings and their unit groups, ideal counting.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

pub const PELL_LIMIT: u64 = 10_000_000;
pub const RESIDUE_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceKind {
    Real,
    Complex,
}

impl PlaceKind {
    /// [K_v : R]
    pub fn degree(self) -> u32 {
        match self {
            PlaceKind::Real => 1,
            PlaceKind::Complex => 2,
        }
    }

    pub fn deg(self) -> f64 {
        self.degree() as f64
    }

    /// Normalised absolute value |z|_v.
    pub fn abs(self, z: Complex64) -> f64 {
        match self {
            PlaceKind::Real => z.re.abs(),
            PlaceKind::Complex => z.norm_sqr(),
        }
    }
}

/// Element a + b*omega of a quadratic order (b = 0 over Q).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuadInt {
    pub a: i64,
    pub b: i64,
}

impl QuadInt {
    pub const fn new(a: i64, b: i64) -> Self {
        QuadInt { a, b }
    }

    pub const fn int(a: i64) -> Self {
        QuadInt { a, b: 0 }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0 && self.b == 0
    }
}

impl fmt::Display for QuadInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:+}w", self.a, self.b)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Unit {
    /// Coordinates in the integral basis; empty for config-supplied units.
    pub coeffs: Vec<i64>,
    pub embeddings: Vec<Complex64>,
    /// [K_v:R] log|u^(v)| per place.
    pub log_vector: Vec<f64>,
}

/// omega^2 = trace*omega - norm; omega = sqrt(d) or (1+sqrt(d))/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticData {
    pub d: i64,
    pub trace: i64,
    pub norm: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    Rational,
    Quadratic(QuadraticData),
    Custom,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NumberField {
    pub name: String,
    pub kind: FieldKind,
    pub degree: u32,
    pub r1: u32,
    pub r2: u32,
    pub discriminant: i64,
    pub integral_basis: Vec<String>,
    pub places: Vec<PlaceKind>,
    pub fundamental_units: Vec<Unit>,
    pub torsion_generator: Unit,
    pub torsion_order: u32,
    pub class_number: u32,
    pub regulator: f64,
    pub zeta_residue: f64,
}

/// JSON field description: `{"kind":"quadratic","D":5}` or a full custom record.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldConfig {
    Quadratic {
        #[serde(rename = "D")]
        d: i64,
    },
    Rational,
    Custom(CustomField),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CustomField {
    pub name: String,
    pub degree: u32,
    pub r1: u32,
    pub r2: u32,
    pub discriminant: i64,
    /// Embeddings (re, im) of each fundamental unit, one per place.
    pub units: Vec<Vec<(f64, f64)>>,
    pub torsion_order: u32,
    #[serde(default)]
    pub torsion_generator: Option<Vec<(f64, f64)>>,
    pub class_number: u32,
    pub regulator: f64,
}

fn is_squarefree(mut n: u64) -> bool {
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p * p) {
            return false;
        }
        if n.is_multiple_of(p) {
            n /= p;
        }
        p += 1;
    }
    true
}

/// Kronecker symbol (a / n) for n >= 1.
pub fn kronecker(a: i64, n: u64) -> i32 {
    let mut n = n;
    let mut result = 1i32;
    while n.is_multiple_of(2) {
        n /= 2;
        if a % 2 == 0 {
            return 0;
        }
        let r = a.rem_euclid(8);
        if r == 3 || r == 5 {
            result = -result;
        }
    }
    if n == 1 {
        return result;
    }
    // Jacobi symbol (a / n), n odd
    let mut a = a.rem_euclid(n as i64) as u64;
    while a != 0 {
        while a.is_multiple_of(2) {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        a %= n;
    }
    if n == 1 {
        result
    } else {
        0
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub fn prime_factors(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut k = 0;
            while n.is_multiple_of(p) {
                n /= p;
                k += 1;
            }
            out.push((p, k));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn isqrt(n: i128) -> Option<i128> {
    if n < 0 {
        return None;
    }
    let mut r = (n as f64).sqrt() as i128;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    Some(r)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn mod_inverse(a: i128, m: i128) -> Option<i128> {
    let (mut old_r, mut r) = (a.rem_euclid(m), m);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m))
}

fn unit_from_embeddings(coeffs: Vec<i64>, embeddings: Vec<Complex64>, places: &[PlaceKind]) -> Unit {
    let log_vector = embeddings
        .iter()
        .zip(places)
        .map(|(z, k)| k.deg() * z.norm().ln())
        .collect();
    Unit { coeffs, embeddings, log_vector }
}

impl NumberField {
    /// Q(sqrt(d)) for squarefree d not in {0, 1}.
    pub fn make_quadratic(d: i64) -> Result<Self> {
        if d == 0 || d == 1 || !is_squarefree(d.unsigned_abs()) {
            return Err(Error::validation(format!("D = {d} must be squarefree and not 0 or 1")));
        }
        let (trace, norm, disc) = if d.rem_euclid(4) == 1 {
            (1, (1 - d) / 4, d)
        } else {
            (0, -d, 4 * d)
        };
        let q = QuadraticData { d, trace, norm };
        let omega_str = if trace == 1 { format!("(1+sqrt({d}))/2") } else { format!("sqrt({d})") };
        let name = match d {
            -1 => "Q(i)".to_string(),
            _ => format!("Q(sqrt({d}))"),
        };
        let mut f = NumberField {
            name,
            kind: FieldKind::Quadratic(q),
            degree: 2,
            r1: if d > 0 { 2 } else { 0 },
            r2: if d > 0 { 0 } else { 1 },
            discriminant: disc,
            integral_basis: vec!["1".into(), omega_str],
            places: if d > 0 { vec![PlaceKind::Real; 2] } else { vec![PlaceKind::Complex] },
            fundamental_units: vec![],
            torsion_generator: Unit { coeffs: vec![], embeddings: vec![], log_vector: vec![] },
            torsion_order: 2,
            class_number: 1,
            regulator: 1.0,
            zeta_residue: 0.0,
        };
        let (w, zeta) = match d {
            -1 => (4, QuadInt::new(0, 1)),
            -3 => (6, QuadInt::new(0, 1)),
            _ => (2, QuadInt::int(-1)),
        };
        f.torsion_order = w;
        f.torsion_generator = f.unit_from_element(zeta);
        if d > 0 {
            let eps = f.pell_unit()?;
            f.regulator = f.embed(eps)[0].re.abs().ln();
            f.fundamental_units = vec![f.unit_from_element(eps)];
        }
        f.class_number = f.analytic_class_number();
        f.zeta_residue = f.zeta_residue_formula();
        Ok(f)
    }

    /// The rational field, used as a degenerate configuration for classical sums.
    pub fn rationals() -> Self {
        let places = vec![PlaceKind::Real];
        let torsion = unit_from_embeddings(vec![-1], vec![Complex64::new(-1.0, 0.0)], &places);
        NumberField {
            name: "Q".into(),
            kind: FieldKind::Rational,
            degree: 1,
            r1: 1,
            r2: 0,
            discriminant: 1,
            integral_basis: vec!["1".into()],
            places,
            fundamental_units: vec![],
            torsion_generator: torsion,
            torsion_order: 2,
            class_number: 1,
            regulator: 1.0,
            zeta_residue: 1.0,
        }
    }

    pub fn from_config(cfg: &FieldConfig) -> Result<Self> {
        match cfg {
            FieldConfig::Quadratic { d } => Self::make_quadratic(*d),
            FieldConfig::Rational => Ok(Self::rationals()),
            FieldConfig::Custom(c) => Self::custom(c),
        }
    }

    /// Short names used on the command line: q5, qi, q2, q-3, q.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "q" | "Q" => Ok(Self::rationals()),
            "qi" => Self::make_quadratic(-1),
            _ => {
                let d = name
                    .strip_prefix('q')
                    .and_then(|s| s.parse::<i64>().ok())
                    .ok_or_else(|| Error::validation(format!("unknown field name {name}")))?;
                Self::make_quadratic(d)
            }
        }
    }

    fn custom(c: &CustomField) -> Result<Self> {
        if c.r1 + 2 * c.r2 != c.degree {
            return Err(Error::validation("r1 + 2 r2 must equal the degree"));
        }
        let r = (c.r1 + c.r2) as usize;
        if c.units.len() + 1 != r {
            return Err(Error::validation(format!("need {} fundamental units", r - 1)));
        }
        let mut places = vec![PlaceKind::Real; c.r1 as usize];
        places.extend(vec![PlaceKind::Complex; c.r2 as usize]);
        let mut units = Vec::new();
        for u in &c.units {
            if u.len() != r {
                return Err(Error::validation("each unit needs one embedding per place"));
            }
            let emb: Vec<Complex64> = u.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
            let unit = unit_from_embeddings(vec![], emb, &places);
            let s: f64 = unit.log_vector.iter().sum();
            if s.abs() > 1e-9 {
                return Err(Error::validation(format!("unit log-vector sums to {s:e}, not 0")));
            }
            units.push(unit);
        }
        let tg = match &c.torsion_generator {
            Some(v) => v.iter().map(|&(a, b)| Complex64::new(a, b)).collect(),
            None => vec![Complex64::new(-1.0, 0.0); r],
        };
        let mut f = NumberField {
            name: c.name.clone(),
            kind: FieldKind::Custom,
            degree: c.degree,
            r1: c.r1,
            r2: c.r2,
            discriminant: c.discriminant,
            integral_basis: vec![],
            places: places.clone(),
            fundamental_units: units,
            torsion_generator: unit_from_embeddings(vec![], tg, &places),
            torsion_order: c.torsion_order,
            class_number: c.class_number,
            regulator: c.regulator,
            zeta_residue: 0.0,
        };
        f.zeta_residue = f.zeta_residue_formula();
        Ok(f)
    }

    /// Number of archimedean places.
    pub fn r(&self) -> usize {
        self.places.len()
    }

    pub fn quad(&self) -> Result<QuadraticData> {
        match self.kind {
            FieldKind::Quadratic(q) => Ok(q),
            FieldKind::Rational => Ok(QuadraticData { d: 1, trace: 0, norm: 0 }),
            FieldKind::Custom => Err(Error::Unsupported("element arithmetic needs a quadratic field".into())),
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self.kind, FieldKind::Rational)
    }

    /// 2^{r1} (2 pi)^{r2} h R / (w sqrt|disc|)
    pub fn zeta_residue_formula(&self) -> f64 {
        2f64.powi(self.r1 as i32) * (2.0 * PI).powi(self.r2 as i32) * self.class_number as f64 * self.regulator
            / (self.torsion_order as f64 * (self.discriminant.abs() as f64).sqrt())
    }

    /// Embeddings of omega, one per place.
    pub fn omega_embeddings(&self) -> Vec<Complex64> {
        match self.kind {
            FieldKind::Quadratic(q) => {
                let disc = self.discriminant as f64;
                let t = q.trace as f64;
                if disc > 0.0 {
                    vec![
                        Complex64::new(0.5 * (t + disc.sqrt()), 0.0),
                        Complex64::new(0.5 * (t - disc.sqrt()), 0.0),
                    ]
                } else {
                    vec![Complex64::new(0.5 * t, 0.5 * (-disc).sqrt())]
                }
            }
            _ => vec![Complex64::new(0.0, 0.0); self.r()],
        }
    }

    pub fn embed(&self, x: QuadInt) -> Vec<Complex64> {
        self.omega_embeddings()
            .into_iter()
            .map(|w| Complex64::new(x.a as f64, 0.0) + w * x.b as f64)
            .collect()
    }

    pub fn mul(&self, x: QuadInt, y: QuadInt) -> QuadInt {
        let q = self.quad().unwrap_or(QuadraticData { d: 1, trace: 0, norm: 0 });
        let bb = x.b * y.b;
        QuadInt::new(x.a * y.a - q.norm * bb, x.a * y.b + x.b * y.a + q.trace * bb)
    }

    pub fn norm(&self, x: QuadInt) -> i128 {
        let q = self.quad().unwrap_or(QuadraticData { d: 1, trace: 0, norm: 0 });
        let (a, b) = (x.a as i128, x.b as i128);
        a * a + a * b * q.trace as i128 + b * b * q.norm as i128
    }

    pub fn conj(&self, x: QuadInt) -> QuadInt {
        let q = self.quad().unwrap_or(QuadraticData { d: 1, trace: 0, norm: 0 });
        QuadInt::new(x.a + x.b * q.trace, -x.b)
    }

    pub fn pow(&self, x: QuadInt, k: u32) -> QuadInt {
        let mut r = QuadInt::int(1);
        for _ in 0..k {
            r = self.mul(r, x);
        }
        r
    }

    /// Generator of the different: f'(omega) = 2 omega - trace.
    pub fn different_generator(&self) -> QuadInt {
        match self.kind {
            FieldKind::Quadratic(q) => QuadInt::new(-q.trace, 2),
            _ => QuadInt::int(1),
        }
    }

    pub fn unit_from_element(&self, u: QuadInt) -> Unit {
        unit_from_embeddings(vec![u.a, u.b], self.embed(u), &self.places)
    }

    /// Smallest unit > 1 in the first embedding, by a bounded Pell search.
    fn pell_unit(&self) -> Result<QuadInt> {
        let q = self.quad()?;
        let disc = self.discriminant as i128;
        for b in 1..=PELL_LIMIT as i128 {
            let mut cands = Vec::new();
            for s in [-4i128, 4] {
                if let Some(r) = isqrt(b * b * disc + s) {
                    if r * r != b * b * disc + s {
                        continue;
                    }
                    for sign in [-1i128, 1] {
                        let num = -b * q.trace as i128 + sign * r;
                        if num % 2 == 0 {
                            cands.push(QuadInt::new((num / 2) as i64, b as i64));
                        }
                    }
                }
            }
            if !cands.is_empty() {
                let mut best: Option<(f64, QuadInt)> = None;
                for c in cands {
                    for u in [c, QuadInt::new(-c.a, -c.b), self.conj(c), {
                        let k = self.conj(c);
                        QuadInt::new(-k.a, -k.b)
                    }] {
                        let v = self.embed(u)[0].re;
                        if v > 1.0 + 1e-12 && best.is_none_or(|(bv, _)| v < bv) {
                            best = Some((v, u));
                        }
                    }
                }
                if let Some((_, u)) = best {
                    return Ok(u);
                }
            }
        }
        Err(Error::budget("Pell search iterations", PELL_LIMIT as f64 + 1.0, PELL_LIMIT as f64))
    }

    /// Class number from the analytic class number formula in closed form.
    fn analytic_class_number(&self) -> u32 {
        let d = self.discriminant;
        let n = d.unsigned_abs();
        if d < 0 {
            let s: i64 = (1..n).map(|a| kronecker(d, a) as i64 * a as i64).sum();
            let h = -(self.torsion_order as f64) * s as f64 / (2.0 * n as f64);
            h.round() as u32
        } else {
            let s: f64 = (1..n)
                .map(|a| kronecker(d, a) as f64 * (PI * a as f64 / n as f64).sin().ln())
                .sum();
            (-s / (2.0 * self.regulator)).round() as u32
        }
    }

    pub fn splitting(&self, p: u64) -> Result<Splitting> {
        if !is_prime(p) {
            return Err(Error::validation(format!("{p} is not prime")));
        }
        match self.kind {
            FieldKind::Rational => Ok(Splitting::Split),
            FieldKind::Quadratic(_) => Ok(match kronecker(self.discriminant, p) {
                0 => Splitting::Ramified,
                1 => Splitting::Split,
                _ => Splitting::Inert,
            }),
            FieldKind::Custom => Err(Error::Unsupported("prime splitting for custom fields".into())),
        }
    }

    /// Prime ideals above the rational prime p.
    pub fn primes_above(&self, p: u64) -> Result<Vec<PrimeIdeal>> {
        let s = self.splitting(p)?;
        Ok(match (&self.kind, s) {
            (FieldKind::Rational, _) => vec![PrimeIdeal { p, kind: PrimeKind::Rational }],
            (_, Splitting::Inert) => vec![PrimeIdeal { p, kind: PrimeKind::Inert }],
            (_, Splitting::Ramified) => vec![PrimeIdeal { p, kind: PrimeKind::Ramified }],
            (_, Splitting::Split) => vec![
                PrimeIdeal { p, kind: PrimeKind::Split(1) },
                PrimeIdeal { p, kind: PrimeKind::Split(2) },
            ],
        })
    }

    /// Roots of the minimal polynomial of omega mod p, ascending.
    pub fn roots_mod_p(&self, p: u64) -> Vec<u64> {
        let q = match self.quad() {
            Ok(q) => q,
            Err(_) => return vec![],
        };
        (0..p)
            .filter(|&x| {
                let x = x as i128;
                (x * x - q.trace as i128 * x + q.norm as i128).rem_euclid(p as i128) == 0
            })
            .collect()
    }

    /// |(O_K / c)^x|
    pub fn euler_phi(&self, c: &IdealData) -> u64 {
        c.factors
            .iter()
            .map(|(pr, e)| {
                let n = pr.norm();
                n.pow(e - 1) * (n - 1)
            })
            .product()
    }

    /// a_m = number of ideals of norm m, for m = 0..=x (a_0 = 0).
    pub fn ideal_counts(&self, x: usize) -> Result<Vec<u64>> {
        if matches!(self.kind, FieldKind::Custom) {
            return Err(Error::Unsupported("ideal counts for custom fields".into()));
        }
        let mut spf = vec![0usize; x + 1];
        for i in 2..=x {
            if spf[i] == 0 {
                let mut j = i;
                while j <= x {
                    if spf[j] == 0 {
                        spf[j] = i;
                    }
                    j += i;
                }
            }
        }
        let mut local: HashMap<usize, Splitting> = HashMap::new();
        let mut a = vec![0u64; x + 1];
        if x >= 1 {
            a[1] = 1;
        }
        for m in 2..=x {
            let p = spf[m];
            let mut k = 0u32;
            let mut rest = m;
            while rest % p == 0 {
                rest /= p;
                k += 1;
            }
            let s = *local.entry(p).or_insert_with(|| self.splitting(p as u64).unwrap());
            let lp = match (self.is_rational(), s) {
                (true, _) => 1,
                (_, Splitting::Split) => k as u64 + 1,
                (_, Splitting::Inert) => u64::from(k.is_multiple_of(2)),
                (_, Splitting::Ramified) => 1,
            };
            a[m] = a[rest] * lp;
        }
        Ok(a)
    }

    /// Principal ideals of norm <= x with a canonical generator each.
    /// Real quadratic: alpha1 > 0 and 1 <= |alpha1/alpha2| < eps^2.
    /// Imaginary quadratic: arg(alpha) in [0, 2 pi / w).
    pub fn principal_ideals(&self, x: u64) -> Result<Vec<PrincipalIdeal>> {
        if self.class_number != 1 {
            return Err(Error::Unsupported("principal generators need class number 1".into()));
        }
        let mut out = Vec::new();
        match self.kind {
            FieldKind::Rational => {
                for n in 1..=x {
                    out.push(PrincipalIdeal { norm: n, generator: QuadInt::int(n as i64) });
                }
            }
            FieldKind::Quadratic(q) => {
                let om = self.omega_embeddings();
                let xf = x as f64;
                if self.discriminant > 0 {
                    let eps = self.regulator.exp();
                    let e2 = eps * eps;
                    let (w1, w2) = (om[0].re, om[1].re);
                    let bmax = ((eps + 1.0) * xf.sqrt() / (w1 - w2)).ceil() as i64 + 1;
                    for b in -bmax..=bmax {
                        // |alpha2| <= sqrt(x)
                        let lo = (-xf.sqrt() - b as f64 * w2).floor() as i64 - 1;
                        let hi = (xf.sqrt() - b as f64 * w2).ceil() as i64 + 1;
                        for a in lo..=hi {
                            let al = QuadInt::new(a, b);
                            let n = self.norm(al).unsigned_abs();
                            if n == 0 || n as u64 > x {
                                continue;
                            }
                            let a1 = a as f64 + b as f64 * w1;
                            let a2 = a as f64 + b as f64 * w2;
                            if a1 <= 0.0 {
                                continue;
                            }
                            let r = (a1 / a2).abs();
                            if r >= 1.0 - 1e-12 && r < e2 * (1.0 - 1e-12) {
                                out.push(PrincipalIdeal { norm: n as u64, generator: al });
                            }
                        }
                    }
                } else {
                    let w = self.torsion_order as f64;
                    let im = om[0].im;
                    let bmax = (xf.sqrt() / im).ceil() as i64 + 1;
                    for b in -bmax..=bmax {
                        let re0 = b as f64 * om[0].re;
                        let amax = xf.sqrt().ceil() as i64 + (re0.abs().ceil() as i64) + 1;
                        for a in -amax..=amax {
                            let al = QuadInt::new(a, b);
                            let n = self.norm(al);
                            if n == 0 || n as u64 > x {
                                continue;
                            }
                            let z = Complex64::new(a as f64, 0.0) + om[0] * b as f64;
                            let mut arg = z.arg();
                            if arg < 0.0 {
                                arg += 2.0 * PI;
                            }
                            let width = 2.0 * PI / w;
                            if arg >= -1e-12 && arg < width * (1.0 - 1e-12) {
                                out.push(PrincipalIdeal { norm: n as u64, generator: al });
                            }
                        }
                    }
                }
                let _ = q;
            }
            FieldKind::Custom => return Err(Error::Unsupported("ideal enumeration for custom fields".into())),
        }
        out.sort_by_key(|p| (p.norm, p.generator.a, p.generator.b));
        Ok(out)
    }

    /// A generator of a prime ideal (class number one), found by a box search.
    pub fn prime_generator(&self, pr: &PrimeIdeal) -> Result<QuadInt> {
        match pr.kind {
            PrimeKind::Rational | PrimeKind::Inert => return Ok(QuadInt::int(pr.p as i64)),
            _ => {}
        }
        let target = pr.norm() as i128;
        let ring = ResidueRing::new(self, *pr, 1)?;
        for r in 1..=2000i64 {
            for b in -r..=r {
                for a in [-r, r] {
                    for (aa, bb) in [(a, b), (b, a)] {
                        let x = QuadInt::new(aa, bb);
                        if self.norm(x).abs() == target && ring.reduce(x) == 0 {
                            return Ok(x);
                        }
                    }
                }
            }
        }
        Err(Error::budget("prime generator search radius", 2001.0, 2000.0))
    }

    pub fn residue_unit_group(&self, pr: &PrimeIdeal, e: u32) -> Result<ResidueUnitGroup> {
        ResidueUnitGroup::new(self, *pr, e, RESIDUE_BUDGET)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    Inert,
    Split,
    Ramified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimeKind {
    Rational,
    Inert,
    /// 1 = factor through the smaller root of the minimal polynomial mod p.
    Split(u8),
    Ramified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimeIdeal {
    pub p: u64,
    pub kind: PrimeKind,
}

impl PrimeIdeal {
    pub fn norm(&self) -> u64 {
        match self.kind {
            PrimeKind::Inert => self.p * self.p,
            _ => self.p,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            PrimeKind::Split(1) => format!("{}a", self.p),
            PrimeKind::Split(_) => format!("{}b", self.p),
            PrimeKind::Ramified => format!("{}r", self.p),
            _ => format!("{}", self.p),
        }
    }
}

impl fmt::Display for PrimeIdeal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipalIdeal {
    pub norm: u64,
    pub generator: QuadInt,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdealData {
    pub factors: Vec<(PrimeIdeal, u32)>,
}

impl IdealData {
    pub fn unit() -> Self {
        IdealData { factors: vec![] }
    }

    /// The ideal generated by a positive rational integer.
    pub fn from_rational(field: &NumberField, m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation("modulus must be nonzero"));
        }
        let mut factors = Vec::new();
        for (p, k) in prime_factors(m) {
            for pr in field.primes_above(p)? {
                let e = if pr.kind == PrimeKind::Ramified { 2 * k } else { k };
                factors.push((pr, e));
            }
        }
        factors.sort();
        Ok(IdealData { factors })
    }

    pub fn norm(&self) -> u64 {
        self.factors.iter().map(|(p, e)| p.norm().pow(*e)).product()
    }

    pub fn is_unit(&self) -> bool {
        self.factors.is_empty()
    }

    /// Rejects ramified factors (the modulus must be prime to the discriminant).
    pub fn check_unramified(&self) -> Result<()> {
        if self.factors.iter().any(|(p, _)| p.kind == PrimeKind::Ramified) {
            return Err(Error::validation("modulus has a ramified prime factor"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        if self.factors.is_empty() {
            return "(1)".into();
        }
        self.factors
            .iter()
            .map(|(p, e)| if *e == 1 { p.label() } else { format!("{}^{}", p.label(), e) })
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// O_K / p^e with elements encoded as integers.
/// Split and rational primes: a residue mod p^e. Inert primes: a + M*b with M = p^e.
#[derive(Clone, Debug)]
pub struct ResidueRing {
    pub prime: PrimeIdeal,
    pub e: u32,
    pub p: u64,
    pub modulus: u64,
    root: u64,
    trace: i64,
    norm_coef: i64,
}

impl ResidueRing {
    pub fn new(field: &NumberField, prime: PrimeIdeal, e: u32) -> Result<Self> {
        if e == 0 {
            return Err(Error::validation("exponent must be >= 1"));
        }
        if prime.kind == PrimeKind::Ramified {
            return Err(Error::validation("ramified primes are excluded from moduli"));
        }
        let p = prime.p;
        let modulus = p
            .checked_pow(e)
            .ok_or_else(|| Error::budget("residue ring size", f64::INFINITY, RESIDUE_BUDGET as f64))?;
        let q = field.quad()?;
        let mut root = 0;
        if let PrimeKind::Split(i) = prime.kind {
            let roots = field.roots_mod_p(p);
            if roots.len() != 2 {
                return Err(Error::validation(format!("{p} does not split")));
            }
            // Hensel lift
            let m = modulus as i128;
            let mut r = roots[(i - 1) as usize] as i128;
            for _ in 0..64 {
                let f = (r * r - q.trace as i128 * r + q.norm as i128).rem_euclid(m);
                if f == 0 {
                    break;
                }
                let df = (2 * r - q.trace as i128).rem_euclid(m);
                let inv = mod_inverse(df, m).ok_or_else(|| Error::validation("singular Hensel step"))?;
                r = (r - f * inv).rem_euclid(m);
            }
            root = r as u64;
        }
        Ok(ResidueRing { prime, e, p, modulus, root, trace: q.trace, norm_coef: q.norm })
    }

    pub fn is_inert(&self) -> bool {
        self.prime.kind == PrimeKind::Inert
    }

    /// N(p)^e
    pub fn size(&self) -> u64 {
        if self.is_inert() {
            self.modulus * self.modulus
        } else {
            self.modulus
        }
    }

    pub fn one(&self) -> u64 {
        1 % self.modulus
    }

    pub fn reduce(&self, x: QuadInt) -> u64 {
        let m = self.modulus as i128;
        if self.is_inert() {
            let a = (x.a as i128).rem_euclid(m);
            let b = (x.b as i128).rem_euclid(m);
            (a + m * b) as u64
        } else {
            (x.a as i128 + x.b as i128 * self.root as i128).rem_euclid(m) as u64
        }
    }

    pub fn parts(&self, x: u64) -> (u64, u64) {
        if self.is_inert() {
            (x % self.modulus, x / self.modulus)
        } else {
            (x, 0)
        }
    }

    fn pack(&self, a: u64, b: u64) -> u64 {
        if self.is_inert() {
            a + self.modulus * b
        } else {
            a
        }
    }

    pub fn mul(&self, x: u64, y: u64) -> u64 {
        let m = self.modulus as u128;
        if self.is_inert() {
            let (a1, b1) = self.parts(x);
            let (a2, b2) = self.parts(y);
            let (a1, b1, a2, b2) = (a1 as u128, b1 as u128, a2 as u128, b2 as u128);
            let bb = b1 * b2 % m;
            let n = (self.norm_coef as i128).rem_euclid(m as i128) as u128;
            let t = (self.trace as i128).rem_euclid(m as i128) as u128;
            let a = (a1 * a2 + (m - n * bb % m)) % m;
            let b = (a1 * b2 + a2 * b1 + t * bb) % m;
            self.pack(a as u64, b as u64)
        } else {
            ((x as u128 * y as u128) % m) as u64
        }
    }

    pub fn add(&self, x: u64, y: u64) -> u64 {
        let (a1, b1) = self.parts(x);
        let (a2, b2) = self.parts(y);
        self.pack((a1 + a2) % self.modulus, (b1 + b2) % self.modulus)
    }

    pub fn pow(&self, x: u64, mut k: u64) -> u64 {
        let mut base = x;
        let mut acc = self.one();
        while k > 0 {
            if k & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            k >>= 1;
        }
        acc
    }

    pub fn is_unit(&self, x: u64) -> bool {
        let (a, b) = self.parts(x);
        let p = self.p as i128;
        if self.is_inert() {
            let (a, b) = (a as i128, b as i128);
            (a * a + a * b * self.trace as i128 + b * b * self.norm_coef as i128).rem_euclid(p) != 0
        } else {
            a % self.p != 0
        }
    }

    /// x = 1 mod p^r
    pub fn is_one_mod(&self, x: u64, r: u32) -> bool {
        let pr = self.p.pow(r);
        let (a, b) = self.parts(x);
        (a % pr) == 1 % pr && b % pr == 0
    }

    /// Trace to Z/p^e, used by the additive character psi(x / p^e).
    pub fn trace(&self, x: u64) -> u64 {
        let (a, b) = self.parts(x);
        if self.is_inert() {
            let m = self.modulus as i128;
            ((2 * a as i128 + b as i128 * self.trace as i128).rem_euclid(m)) as u64
        } else {
            a
        }
    }

    /// Embed a residue mod p^k (k <= e) given by digits into this ring.
    pub fn from_parts(&self, a: u64, b: u64) -> u64 {
        self.pack(a % self.modulus, b % self.modulus)
    }
}

/// (O_K / p^e)^x as a product of cyclic groups, with a full discrete-log table.
#[derive(Clone, Debug)]
pub struct ResidueUnitGroup {
    pub ring: ResidueRing,
    pub generators: Vec<u64>,
    pub orders: Vec<u64>,
    table: Vec<u32>,
    elements: Vec<u64>,
}

fn factor_small(n: u64) -> Vec<u64> {
    prime_factors(n).into_iter().map(|(p, _)| p).collect()
}

impl ResidueUnitGroup {
    pub fn new(field: &NumberField, prime: PrimeIdeal, e: u32, budget: u64) -> Result<Self> {
        let size = (prime.norm() as f64).powi(e as i32);
        if size > budget as f64 {
            return Err(Error::budget("residue ring size N(p)^e", size, budget as f64));
        }
        let ring = ResidueRing::new(field, prime, e)?;
        let p = ring.p;
        let q = prime.norm();
        // primitive root of the residue field, lifted and raised to q^{e-1}
        let field_ring = ResidueRing::new(field, prime, 1)?;
        let qm1 = q - 1;
        let ls = factor_small(qm1);
        let mut g = None;
        for x in 1..field_ring.size() {
            if !field_ring.is_unit(x) {
                continue;
            }
            if ls.iter().all(|l| field_ring.pow(x, qm1 / l) != field_ring.one()) {
                g = Some(x);
                break;
            }
        }
        let g = g.ok_or_else(|| Error::validation("no primitive root found"))?;
        let (ga, gb) = field_ring.parts(g);
        let z = ring.pow(ring.from_parts(ga, gb), q.pow(e - 1));

        // basis of the p-group U^(1)/U^(e)
        let pe1 = p.pow(e - 1);
        let mut u1: Vec<u64> = Vec::new();
        if ring.is_inert() {
            for j in 0..pe1 {
                for i in 0..pe1 {
                    u1.push(ring.from_parts(1 + p * i, p * j));
                }
            }
        } else {
            for i in 0..pe1 {
                u1.push(ring.from_parts(1 + p * i, 0));
            }
        }
        let mut pgens: Vec<u64> = Vec::new();
        let mut porders: Vec<u64> = Vec::new();
        let mut h: HashMap<u64, u64> = HashMap::new();
        h.insert(ring.one(), 0);
        let mut h_list: Vec<u64> = vec![ring.one()];
        while h.len() < u1.len() {
            let mut best: Option<(u32, u64)> = None;
            for &x in &u1 {
                if h.contains_key(&x) {
                    continue;
                }
                let mut y = x;
                let mut k = 0u32;
                while !h.contains_key(&y) {
                    y = ring.pow(y, p);
                    k += 1;
                }
                if best.is_none_or(|(bk, _)| k > bk) {
                    best = Some((k, x));
                }
            }
            let (k, x) = best.unwrap();
            let pk = p.pow(k);
            let y = ring.pow(x, pk);
            let idx = h[&y];
            // adjust x so that x^{p^k} = 1
            let mut rem = idx;
            let mut adj = x;
            for (gi, &oi) in pgens.iter().zip(&porders) {
                let mi = rem % oi;
                rem /= oi;
                if !mi.is_multiple_of(pk) {
                    return Err(Error::validation("p-group basis adjustment failed"));
                }
                let c = (oi - mi / pk) % oi;
                adj = ring.mul(adj, ring.pow(*gi, c));
            }
            if ring.pow(adj, pk) != ring.one() {
                return Err(Error::validation("p-group basis element has wrong order"));
            }
            let base = h_list.len() as u64;
            let mut new_list = Vec::with_capacity(h_list.len() * pk as usize);
            let mut power = ring.one();
            for j in 0..pk {
                for (t, &el) in h_list.iter().enumerate() {
                    let v = ring.mul(el, power);
                    h.insert(v, t as u64 + base * j);
                    new_list.push(v);
                }
                power = ring.mul(power, adj);
            }
            h_list = new_list;
            pgens.push(adj);
            porders.push(pk);
        }

        let mut generators = Vec::new();
        let mut orders = Vec::new();
        if qm1 > 1 {
            generators.push(z);
            orders.push(qm1);
        }
        generators.extend(pgens);
        orders.extend(porders);

        let order: u64 = orders.iter().product();
        let mut table = vec![u32::MAX; ring.size() as usize];
        let mut elements = vec![0u64; order as usize];
        let zc = if qm1 > 1 { qm1 } else { 1 };
        let mut zp = ring.one();
        for i in 0..zc {
            for (hidx, &u) in h_list.iter().enumerate() {
                let v = ring.mul(zp, u);
                let idx = i + zc * hidx as u64;
                table[v as usize] = idx as u32;
                elements[idx as usize] = v;
            }
            zp = ring.mul(zp, z);
        }
        Ok(ResidueUnitGroup { ring, generators, orders, table, elements })
    }

    pub fn order(&self) -> u64 {
        self.orders.iter().product()
    }

    /// Mixed-radix index of a unit residue.
    pub fn index_of(&self, x: u64) -> Option<u64> {
        match self.table.get(x as usize) {
            Some(&v) if v != u32::MAX => Some(v as u64),
            _ => None,
        }
    }

    pub fn exps_of_index(&self, mut idx: u64) -> Vec<u64> {
        self.orders
            .iter()
            .map(|&o| {
                let r = idx % o;
                idx /= o;
                r
            })
            .collect()
    }

    pub fn index_of_exps(&self, exps: &[u64]) -> u64 {
        let mut idx = 0;
        for (k, o) in exps.iter().zip(&self.orders).rev() {
            idx = idx * o + k % o;
        }
        idx
    }

    pub fn dlog(&self, x: u64) -> Option<Vec<u64>> {
        self.index_of(x).map(|i| self.exps_of_index(i))
    }

    pub fn element(&self, idx: u64) -> u64 {
        self.elements[idx as usize]
    }

    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    pub fn contains(&self, x: u64) -> bool {
        self.index_of(x).is_some()
    }

    /// Exponent of the pairing <k, l> as a fraction of a full turn.
    pub fn pairing(&self, k: &[u64], l: &[u64]) -> f64 {
        let mut num = 0f64;
        for ((a, b), o) in k.iter().zip(l).zip(&self.orders) {
            num += ((a * b) % o) as f64 / *o as f64;
        }
        num - num.floor()
    }

    /// Value of the character with exponents k at the residue x.
    pub fn character(&self, k: &[u64], x: u64) -> Result<Complex64> {
        let l = self.dlog(x).ok_or(Error::NotCoprime)?;
        let t = self.pairing(k, &l);
        Ok(Complex64::from_polar(1.0, 2.0 * PI * t))
    }

    /// Smallest r with the character trivial on U^(r) = 1 + p^r.
    pub fn conductor_exponent(&self, k: &[u64]) -> u32 {
        if k.iter().zip(&self.orders).all(|(a, o)| a % o == 0) {
            return 0;
        }
        let e = self.ring.e;
        let mut r_min = e;
        for r in (1..e).rev() {
            let trivial = self.elements.iter().filter(|&&x| self.ring.is_one_mod(x, r)).all(|&x| {
                let l = self.dlog(x).unwrap();
                let t = self.pairing(k, &l);
                t.min(1.0 - t) < 1e-12
            });
            if trivial {
                r_min = r;
            } else {
                break;
            }
        }
        r_min
    }

    /// All character exponent vectors in mixed-radix order.
    pub fn characters(&self) -> Vec<Vec<u64>> {
        (0..self.order()).map(|i| self.exps_of_index(i)).collect()
    }
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    gcd(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q5_basics() {
        let f = NumberField::make_quadratic(5).unwrap();
        assert_eq!(f.discriminant, 5);
        assert!((f.regulator - 0.481_211_825_059_603_4).abs() < 1e-12);
        assert_eq!(f.class_number, 1);
        assert!((f.zeta_residue - 0.430_408_940_964_004).abs() < 1e-9);
        let u = &f.fundamental_units[0];
        assert!(u.log_vector.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn q2_and_qi() {
        let f = NumberField::make_quadratic(2).unwrap();
        assert_eq!(f.discriminant, 8);
        assert!((f.regulator - 0.881_373_587_019_543).abs() < 1e-12);
        let g = NumberField::make_quadratic(-1).unwrap();
        assert_eq!((g.discriminant, g.torsion_order, g.r()), (-4, 4, 1));
        assert!((g.zeta_residue - PI / 4.0).abs() < 1e-14);
        assert!(NumberField::make_quadratic(12).is_err());
        assert!(NumberField::make_quadratic(1).is_err());
    }

    #[test]
    fn class_numbers() {
        for (d, h) in [(-5, 2), (-23, 3), (10, 2), (79, 3), (-163, 1), (229, 3)] {
            assert_eq!(NumberField::make_quadratic(d).unwrap().class_number, h, "d={d}");
        }
    }

    #[test]
    fn splitting_q5() {
        let f = NumberField::make_quadratic(5).unwrap();
        assert_eq!(f.splitting(7).unwrap(), Splitting::Inert);
        assert_eq!(f.splitting(11).unwrap(), Splitting::Split);
        assert_eq!(f.splitting(5).unwrap(), Splitting::Ramified);
    }

    #[test]
    fn unit_groups() {
        let f = NumberField::make_quadratic(5).unwrap();
        let g = f.residue_unit_group(&PrimeIdeal { p: 7, kind: PrimeKind::Inert }, 1).unwrap();
        assert_eq!(g.orders, vec![48]);
        let g = f.residue_unit_group(&PrimeIdeal { p: 11, kind: PrimeKind::Split(1) }, 1).unwrap();
        assert_eq!(g.orders, vec![10]);
        let g = f.residue_unit_group(&PrimeIdeal { p: 7, kind: PrimeKind::Inert }, 2).unwrap();
        assert_eq!(g.order(), 48 * 49);
        for &x in g.elements() {
            let l = g.dlog(x).unwrap();
            let mut y = g.ring.one();
            for (gi, k) in g.generators.iter().zip(&l) {
                y = g.ring.mul(y, g.ring.pow(*gi, *k));
            }
            assert_eq!(x, y);
        }
    }

    #[test]
    fn two_adic_unit_group() {
        let q = NumberField::rationals();
        let g = q.residue_unit_group(&PrimeIdeal { p: 2, kind: PrimeKind::Rational }, 5).unwrap();
        let mut o = g.orders.clone();
        o.sort();
        assert_eq!(o, vec![2, 8]);
    }
}
