//! Complex log-gamma and the archimedean gamma factors built on it.

use num_complex::Complex64;
use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_2: f64 = std::f64::consts::LN_2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

// B_{2k} / (2k (2k-1)) for k = 1..9
const STIRLING: [f64; 9] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
    43_867.0 / 244_188.0,
];

fn stirling(w: Complex64) -> Complex64 {
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut p = inv;
    for c in STIRLING {
        acc += p * c;
        p *= inv2;
    }
    (w - 0.5) * w.ln() - w + LN_SQRT_2PI + acc
}

/// log sin(pi z) on some branch, stable for large |Im z|.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    if z.im.abs() < 20.0 {
        return (z * PI).sin().ln();
    }
    if z.im > 0.0 {
        let e = (i * 2.0 * PI * z).exp();
        -i * PI * z + Complex64::new(-LN_2, PI / 2.0) + (Complex64::new(1.0, 0.0) - e).ln()
    } else {
        let e = (-i * 2.0 * PI * z).exp();
        i * PI * z + Complex64::new(-LN_2, -PI / 2.0) + (Complex64::new(1.0, 0.0) - e).ln()
    }
}

/// log Gamma(z) on some branch (only exp of the result is branch free).
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        return Complex64::new(LN_PI, 0.0) - ln_sin_pi(z) - ln_gamma(Complex64::new(1.0, 0.0) - z);
    }
    let mut w = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while w.norm() < 16.0 {
        shift += w.ln();
        w += 1.0;
    }
    stirling(w) - shift
}

pub fn gamma(z: Complex64) -> Complex64 {
    ln_gamma(z).exp()
}

/// Distance from z to the nearest pole of Gamma (non-positive integers).
pub fn pole_distance(z: Complex64) -> f64 {
    if z.re > 0.5 {
        return f64::INFINITY;
    }
    let k = z.re.round().min(0.0);
    Complex64::new(z.re - k, z.im).norm()
}

/// log Gamma_R(s) = -(s/2) log pi + log Gamma(s/2).
pub fn ln_gamma_r(s: Complex64) -> Complex64 {
    -s * (0.5 * LN_PI) + ln_gamma(s * 0.5)
}

/// log Gamma_C(s) = log 2 - s log(2 pi) + log Gamma(s).
pub fn ln_gamma_c(s: Complex64) -> Complex64 {
    Complex64::new(LN_2, 0.0) - s * LN_2PI + ln_gamma(s)
}

/// Real log-gamma for positive arguments.
pub fn ln_gamma_real(x: f64) -> f64 {
    ln_gamma(Complex64::new(x, 0.0)).re
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn half_integer_values() {
        assert!((gamma(c(0.5, 0.0)).re - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(c(5.0, 0.0)).re - 24.0).abs() < 1e-12);
        assert!((gamma(c(-0.5, 0.0)).re + 2.0 * PI.sqrt()).abs() < 1e-13);
    }

    fn ln_cosh(x: f64) -> f64 {
        x - LN_2 + (-2.0 * x).exp().ln_1p()
    }

    fn ln_sinh(x: f64) -> f64 {
        x - LN_2 + (-(-2.0 * x).exp()).ln_1p()
    }

    #[test]
    fn modulus_on_vertical_lines() {
        for &y in &[0.3, 2.0, 17.0, 60.0, 300.0] {
            let lhs = 2.0 * ln_gamma(c(0.5, y)).re;
            let rhs = PI.ln() - ln_cosh(PI * y);
            assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()), "y={y}");
            let lhs = 2.0 * ln_gamma(c(0.0, y)).re;
            let rhs = PI.ln() - y.ln() - ln_sinh(PI * y);
            assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()), "y={y}");
        }
    }

    #[test]
    fn recurrence_in_left_half_plane() {
        for &z in &[c(-3.3, 1.1), c(-0.7, -25.0), c(0.2, 4.0), c(-8.5, 0.5)] {
            let a = gamma(z + 1.0);
            let b = z * gamma(z);
            assert!((a - b).norm() < 1e-11 * a.norm().max(1e-300), "z={z}");
        }
    }

    #[test]
    fn archimedean_normalisations() {
        assert!((ln_gamma_r(c(1.0, 0.0)).exp().re - 1.0).abs() < 1e-14);
        assert!((ln_gamma_c(c(1.0, 0.0)).exp().re - 1.0 / PI).abs() < 1e-14);
        assert!((ln_gamma_r(c(2.0, 0.0)).exp().re - 1.0 / PI).abs() < 1e-14);
    }
}
