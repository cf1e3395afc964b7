//! Decay of the dual transforms past the family scale.

use heckefam::archgamma::{default_mb_params, MbKernel, RankinSelbergData, TestFunctionSuite};
use heckefam::numberfield::{IdealData, NumberField};
use heckefam::sadic::{default_grid, verify_gs_corollary, SAdic};
use num_complex::Complex64;

const EPS: f64 = 0.05;

#[test]
fn gs_star_past_v_n2_eps_is_below_peak() {
    let f = NumberField::make_quadratic(5).unwrap();
    let mut suite = TestFunctionSuite::new(f.places.clone(), 0.9, 100.0).unwrap();
    suite.modulus = IdealData::from_rational(&f, 7).unwrap();
    let sa = SAdic::new(&f, &suite, &RankinSelbergData::trivial(2)).unwrap();
    let rows = verify_gs_corollary(&sa, &default_grid(&sa, 9), 2.0).unwrap();
    let last = rows.last().unwrap();
    println!("|x|_S = {:.4e}: decay ratio {:.3e}", last.abs_x, last.decay_ratio);
    assert!(last.decay_ratio < 1e-3, "{last:?}");
}

#[test]
fn real_gstar_past_t_n2_eps_is_negligible() {
    let f = NumberField::make_quadratic(5).unwrap();
    let rs = RankinSelbergData::toy_gl2(2, 0.4);
    let suite = TestFunctionSuite::new(f.places.clone(), 0.9, 100.0).unwrap();
    let k = MbKernel::new(&suite, 1, &rs, default_mb_params(&suite, 1, &rs)).unwrap();
    // |g*| oscillates, so compare maxima over windows of width 10^0.4
    let win = |e: f64| {
        (0..100)
            .map(|j| k.eval(Complex64::new(10f64.powf(e + 0.4 * j as f64 / 100.0), 0.0)).norm())
            .fold(0.0, f64::max)
    };
    let top = 4.0 * suite.t.log10();
    let ratio = win(top + EPS * suite.t.log10()) / win(top);
    println!("T = {}: max |g*| past T^(4+eps) / max near T^4 = {ratio:.3e}", suite.t);
    assert!(ratio < 1e-6, "ratio {ratio:.3e}");
}
