use heckefam::archgamma::{arch_gamma_factor, ln_gamma_v, RankinSelbergData, TestFunctionSuite};
use heckefam::charlattice::{shifted_lattice, trivial_constraints, Hyperplane};
use heckefam::expsums::{conductors_all, finite_gamma, gauss_sums_all, gstar_finite, FiniteTwist, LocalDual, LocalElement};
use heckefam::heckefamily::{build_family, chi_on_ideal, Family, FamilySpec, ModulusGroups};
use heckefam::numberfield::{IdealData, NumberField, PlaceKind, QuadInt};
use heckefam::sadic::{bm_unit_sum, SAdic};
use heckefam::voronoi::{hecke_l_afe, rs_coefficients};
use num_complex::Complex64;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::sync::OnceLock;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn q5() -> &'static NumberField {
    static F: OnceLock<NumberField> = OnceLock::new();
    F.get_or_init(|| NumberField::make_quadratic(5).unwrap())
}

fn field_of(d: i64) -> NumberField {
    NumberField::make_quadratic(d).unwrap()
}

fn powmod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

/// Kronecker symbol (disc / n) via Euler's criterion, one prime at a time.
fn kron(disc: i64, mut n: u64) -> i64 {
    let mut out = 1i64;
    let mut p = 2u64;
    while n > 1 {
        if p * p > n {
            p = n;
        }
        while n.is_multiple_of(p) {
            n /= p;
            out *= if p == 2 {
                match disc.rem_euclid(8) {
                    1 => 1,
                    5 => -1,
                    _ => 0,
                }
            } else {
                let a = disc.rem_euclid(p as i64) as u64;
                match powmod(a, (p - 1) / 2, p) {
                    0 => 0,
                    1 => 1,
                    _ => -1,
                }
            };
        }
        p += 1;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ideal_counts_match_zeta_times_l(d in prop::sample::select(vec![5i64, -1, 2, -3, 13, -7, 3, -5])) {
        let f = field_of(d);
        let counts = f.ideal_counts(500).unwrap();
        for m in 1..=500u64 {
            let want: i64 = (1..=m).filter(|k| m % k == 0).map(|k| kron(f.discriminant, k)).sum();
            prop_assert_eq!(counts[m as usize] as i64, want, "m = {}", m);
        }
    }

    #[test]
    fn euler_phi_matches_unit_count(m in 2u64..90) {
        let f = q5();
        // 5 ramifies in Q(sqrt 5) and is rejected as a factor of c
        prop_assume!(m % 5 != 0);
        let cid = IdealData::from_rational(f, m).unwrap();
        let brute = (0..m as i64)
            .flat_map(|a| (0..m as i64).map(move |b| QuadInt::new(a, b)))
            .filter(|x| {
                let n = f.norm(*x).unsigned_abs() as u64;
                n != 0 && gcd(n, m) == 1
            })
            .count() as u64;
        prop_assert_eq!(f.euler_phi(&cid), brute);
    }

    #[test]
    fn lattice_points_satisfy_unit_constraints(t in 10.0f64..3000.0) {
        let f = q5();
        let lat = shifted_lattice(f, &Hyperplane::distinguished(2, 0), &trivial_constraints(f)).unwrap();
        let pts = lat.enumerate_points(t);
        prop_assert!(!pts.is_empty());
        for p in &pts {
            prop_assert!(lat.residual(p) < 1e-9);
            let neg: Vec<f64> = p.iter().map(|x| -x).collect();
            prop_assert!(pts.iter().any(|q| q.iter().zip(&neg).all(|(a, b)| (a - b).abs() < 1e-9)));
        }
    }

    #[test]
    fn rs_coefficients_are_nonnegative(
        thetas in prop::collection::vec(-3.2f64..3.2, 1..5),
        r in 0u32..=6,
    ) {
        let f = q5();
        let n = thetas.len() as u32;
        let rs = RankinSelbergData {
            n,
            mu: vec![vec![c(0.0, 0.0); (n * n) as usize]; 2],
            eps: vec![c(1.0, 0.0); 2],
            satake: BTreeMap::new(),
            default_satake: thetas.iter().map(|t| Complex64::from_polar(1.0, *t)).collect(),
        };
        let p = f.primes_above(11).unwrap()[0];
        let lam = rs_coefficients(&rs, &p, r);
        prop_assert!(lam >= -1e-10, "lambda = {}", lam);
        if r == 1 {
            let s: Complex64 = rs.default_satake.iter().sum();
            prop_assert!((lam - s.norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn gauss_sums_have_square_root_size(
        d in prop::sample::select(vec![5i64, -1, 2, -3]),
        p in prop::sample::select(vec![3u64, 7, 11, 13, 17, 19, 23, 29, 31, 41]),
    ) {
        let f = field_of(d);
        prop_assume!(!f.discriminant.unsigned_abs().is_multiple_of(p));
        for pr in f.primes_above(p).unwrap() {
            prop_assume!(pr.norm() <= 1000);
            let g = f.residue_unit_group(&pr, 1).unwrap();
            for (z, cond) in gauss_sums_all(&g, 1).unwrap().iter().zip(conductors_all(&g)) {
                if cond == 1 {
                    prop_assert!((z.norm_sqr() / pr.norm() as f64 - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn finite_gamma_is_unitary_on_half_line(
        t in -50.0f64..50.0,
        tau in -20.0f64..20.0,
        theta in -3.0f64..3.0,
        phase in -3.0f64..3.0,
        r in 1u32..3,
    ) {
        let pairs = vec![c(1.0, 0.0), Complex64::from_polar(1.0, theta), Complex64::from_polar(1.0, -theta), c(1.0, 0.0)];
        let s = c(0.5, t);
        let un = FiniteTwist::Unramified { chi_at_uniformizer: Complex64::from_polar(1.0, phase) };
        let g = finite_gamma(s, &un, &pairs, 11).unwrap();
        prop_assert!((g.norm() - 1.0).abs() < 1e-8);
        let ram = FiniteTwist::Ramified { r, gauss: Complex64::from_polar(11f64.powf(r as f64 / 2.0), phase), tau };
        let g = finite_gamma(s, &ram, &pairs, 11).unwrap();
        prop_assert!((g.norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn arch_gamma_is_unitary_on_half_line(
        t in -200.0f64..200.0,
        tau in -100.0f64..100.0,
        delta in 0i64..4,
        complex in any::<bool>(),
    ) {
        let (kind, delta) = if complex { (PlaceKind::Complex, delta) } else { (PlaceKind::Real, delta % 2) };
        let g = arch_gamma_factor(c(0.5, t), delta, tau, kind, &[c(0.0, 0.0)], c(1.0, 0.0)).unwrap();
        prop_assert!((g.norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gstar_finite_vanishes_outside_support(
        e in 1u32..3,
        n in 1u32..3,
        extra in 1i32..5,
        idx in any::<u64>(),
    ) {
        let f = q5();
        let pr = f.primes_above(11).unwrap()[0];
        let group = f.residue_unit_group(&pr, e).unwrap();
        let unit = group.element(idx % group.order());
        let dual = LocalDual::new(group).unwrap();
        let rs = if n == 1 { RankinSelbergData::trivial(2) } else { RankinSelbergData::toy_gl2(2, 0.7) };
        let k = (e * n * n) as i32 + extra;
        let g = gstar_finite(&dual, &rs.pair_parameters(&pr), LocalElement { k, unit }).unwrap();
        prop_assert_eq!(g.value.norm(), 0.0);
    }

    #[test]
    fn bm_sum_matches_brute_force(l0 in -7.0f64..7.0, l1 in -7.0f64..7.0, a in 1.0f64..4.0) {
        let f = q5();
        let x = [c(l0.exp(), 0.0), c(-l1.exp(), 0.0)];
        let b = bm_unit_sum(f, a, &x).unwrap();
        let eps = (1.0 + 5f64.sqrt()) / 2.0;
        let brute: f64 = 2.0 * (-300..=300)
            .map(|k: i32| {
                let u0 = l0.exp() * eps.powi(k);
                let u1 = l1.exp() * eps.powi(-k);
                u0.powf(-a).min(1.0) * u1.powf(-a).min(1.0)
            })
            .sum::<f64>();
        prop_assert!((b.sum - brute).abs() < 1e-9 * brute, "{} {}", b.sum, brute);
        prop_assert!(b.sum <= b.constant * b.envelope * (1.0 + 1e-12));
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn family7() -> &'static (Family, ModulusGroups) {
    static F: OnceLock<(Family, ModulusGroups)> = OnceLock::new();
    F.get_or_init(|| {
        let f = q5();
        let cid = IdealData::from_rational(f, 7).unwrap();
        let fam = build_family(f, &FamilySpec::new(cid.clone(), 40.0)).unwrap();
        (fam, ModulusGroups::new(f, &cid).unwrap())
    })
}

fn coprime7(x: QuadInt) -> bool {
    q5().norm(x) % 7 != 0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn character_is_independent_of_generator(
        i in any::<usize>(),
        a in -30i64..30,
        b in -30i64..30,
        k in -4i32..4,
        sign in any::<bool>(),
    ) {
        let f = q5();
        let (fam, groups) = family7();
        let ch = &fam.characters[i % fam.characters.len()];
        let alpha = QuadInt::new(a, b);
        prop_assume!(!alpha.is_zero() && coprime7(alpha));
        let eps = QuadInt::new(0, 1);
        // conj(omega) = -omega^{-1}, so its powers cover the negative exponents
        let mut u = if k >= 0 { f.pow(eps, k as u32) } else { f.pow(f.conj(eps), (-k) as u32) };
        if sign {
            u = QuadInt::new(-u.a, -u.b);
        }
        prop_assert_eq!(f.norm(u).abs(), 1);
        let x = chi_on_ideal(f, groups, ch, alpha).unwrap();
        let y = chi_on_ideal(f, groups, ch, f.mul(alpha, u)).unwrap();
        prop_assert!((x - y).norm() < 1e-9, "{} {}", x, y);
        prop_assert!((x.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn character_is_multiplicative(
        i in any::<usize>(),
        a in -20i64..20, b in -20i64..20,
        c2 in -20i64..20, d in -20i64..20,
    ) {
        let f = q5();
        let (fam, groups) = family7();
        let ch = &fam.characters[i % fam.characters.len()];
        let (x, y) = (QuadInt::new(a, b), QuadInt::new(c2, d));
        prop_assume!(!x.is_zero() && !y.is_zero() && coprime7(x) && coprime7(y));
        let lhs = chi_on_ideal(f, groups, ch, f.mul(x, y)).unwrap();
        let rhs = chi_on_ideal(f, groups, ch, x).unwrap() * chi_on_ideal(f, groups, ch, y).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }
}

#[test]
fn family_conductors_within_box_bound() {
    let f = q5();
    for (m, t) in [(1u64, 200.0), (7, 40.0), (11, 60.0)] {
        let cid = IdealData::from_rational(f, m).unwrap();
        let fam = build_family(f, &FamilySpec::new(cid.clone(), t)).unwrap();
        let bound = cid.norm() as f64 * (1.0 + t) * 4.0;
        for ch in &fam.characters {
            assert!(ch.analytic_conductor <= bound, "{} > {bound}", ch.analytic_conductor);
        }
    }
}

fn sadic7() -> &'static SAdic {
    static S: OnceLock<SAdic> = OnceLock::new();
    S.get_or_init(|| {
        let f = q5();
        let mut suite = TestFunctionSuite::new(f.places.clone(), 0.9, 10.0).unwrap();
        suite.modulus = IdealData::from_rational(f, 7).unwrap();
        SAdic::new(f, &suite, &RankinSelbergData::trivial(2)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn s_unit_reindexing_invariance(ls in 0.0f64..5.0, j in 0i64..2, k in -3i64..4, l in -2i64..3) {
        let sa = sadic7();
        let x = sa.point(ls.exp());
        let a = sa.gs_star_value(&x).unwrap();
        let b = sa.gs_star_value(&sa.multiply(&x, j, k, &[l]).unwrap()).unwrap();
        prop_assert!((a.value - b.value).norm() <= 1e-9 * a.value.norm() + 1e-18, "{:?} {:?}", a.value, b.value);
    }
}

/// ln of q^{s/2} prod_v Gamma_v(s + i tau_v + |delta_v| / [K_v:R]).
fn ln_completion(f: &NumberField, q: f64, delta: &[i64], tau: &[f64], s: Complex64) -> Complex64 {
    let mut acc = s * 0.5 * q.ln();
    for (v, kind) in f.places.iter().enumerate() {
        acc += ln_gamma_v(s + c(0.0, tau[v]) + delta[v].unsigned_abs() as f64 / kind.deg(), *kind);
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn afe_satisfies_functional_equation(i in any::<usize>(), re in 0.1f64..0.9, im in -5.0f64..5.0) {
        let f = q5();
        let (fam, groups) = family7();
        let ch = &fam.characters[i % fam.characters.len()];
        let s = c(re, im);
        let s1 = c(1.0 - re, im);
        let a = hecke_l_afe(f, groups, ch, s).unwrap();
        let b = hecke_l_afe(f, groups, ch, s1).unwrap();
        let q = f.discriminant.unsigned_abs() as f64 * ch.conductor_norm as f64;
        let lam_a = ln_completion(f, q, &ch.arch.delta, &ch.arch.tau, s).exp() * a.value;
        let lam_b = ln_completion(f, q, &ch.arch.delta, &ch.arch.tau, s1).exp() * b.value;
        prop_assert!((a.root_number.norm() - 1.0).abs() < 1e-8);
        let rel = (lam_a - a.root_number * lam_b.conj()).norm() / lam_a.norm();
        prop_assert!(rel < 1e-6, "rel {} for {:?}", rel, ch.arch);
    }
}
