//! Unit-log lattice duals cut out by admissible hyperplanes, and point
//! enumeration in max-norm boxes.

use crate::error::{Error, Result};
use crate::numberfield::{NumberField, PlaceKind};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;
pub const COMPAT_TOL: f64 = 1e-9;

/// Hyperplane sum_v alpha_v tau_v = 0 in the archimedean exponent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub alpha: Vec<f64>,
}

impl Hyperplane {
    /// tau_{v0} = 0
    pub fn distinguished(r: usize, v0: usize) -> Self {
        let mut alpha = vec![0.0; r];
        alpha[v0] = 1.0;
        Hyperplane { alpha }
    }

    /// The trace-zero hyperplane sum_v tau_v = 0.
    pub fn trace_zero(r: usize) -> Self {
        Hyperplane { alpha: vec![1.0; r] }
    }

    pub fn is_admissible(&self) -> bool {
        self.alpha.iter().sum::<f64>().abs() > 1e-12
    }

    pub fn norm(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// A unit together with arg delta(u) in (-pi, pi].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnitConstraint {
    pub log_vector: Vec<f64>,
    pub arg: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShiftedLattice {
    pub r: usize,
    pub basis: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
    pub feasible: bool,
    pub box_exponents: Vec<f64>,
    pub constraints: Vec<UnitConstraint>,
}

fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut d = 1.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for j in c..n {
                a[i][j] -= f * a[c][j];
            }
        }
    }
    d
}

/// Solve m x = b by Gaussian elimination with partial pivoting.
fn solve(m: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(piv, c);
        for i in 0..n {
            if i != c {
                let f = a[i][c] / a[c][c];
                for j in c..=n {
                    a[i][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Rows: the r-1 fundamental-unit log-vectors, then alpha.
pub fn admissibility_matrix(field: &NumberField, h: &Hyperplane) -> Result<(Vec<Vec<f64>>, f64)> {
    let r = field.r();
    if h.alpha.len() != r {
        return Err(Error::validation(format!("hyperplane needs {r} coefficients")));
    }
    let mut m: Vec<Vec<f64>> = field.fundamental_units.iter().map(|u| u.log_vector.clone()).collect();
    m.push(h.alpha.clone());
    let d = det(&m);
    if !h.is_admissible() || d.abs() < 1e-12 {
        return Err(Error::Inadmissible { det: if h.is_admissible() { d } else { 0.0 } });
    }
    Ok((m, d))
}

/// Reduce an angle to (-pi, pi].
pub fn principal_arg(t: f64) -> f64 {
    let mut x = t.rem_euclid(TWO_PI);
    if x > PI {
        x -= TWO_PI;
    }
    x
}

fn dist_to_2pi_z(t: f64) -> f64 {
    principal_arg(t).abs()
}

/// Solutions tau in h of tau(log u_j) + arg delta(u_j) in 2 pi Z.
pub fn shifted_lattice(field: &NumberField, h: &Hyperplane, constraints: &[UnitConstraint]) -> Result<ShiftedLattice> {
    let (m, _) = admissibility_matrix(field, h)?;
    let r = field.r();
    let box_exponents = field.places.iter().map(|p| 1.0 / p.deg()).collect();
    let mut feasible = true;
    let mut free = Vec::new();
    for c in constraints {
        if c.log_vector.iter().all(|x| x.abs() < 1e-12) {
            if dist_to_2pi_z(c.arg) > COMPAT_TOL {
                feasible = false;
            }
        } else {
            free.push(c);
        }
    }
    if free.len() != r - 1 {
        return Err(Error::validation(format!(
            "expected {} fundamental-unit constraints, got {}",
            r - 1,
            free.len()
        )));
    }
    // rows of m are the fundamental units in the same order as `free`
    let mut basis = Vec::new();
    for j in 0..r - 1 {
        let mut rhs = vec![0.0; r];
        rhs[j] = TWO_PI;
        basis.push(solve(&m, &rhs));
    }
    let mut rhs: Vec<f64> = free.iter().map(|c| -c.arg).collect();
    rhs.push(0.0);
    let mut shift = if r == 0 { vec![] } else { solve(&m, &rhs) };
    // move the shift into the fundamental cell around the origin
    if r > 1 {
        let coords = lattice_coords(&basis, &shift);
        for (j, c) in coords.iter().enumerate() {
            let k = c.round();
            for (s, b) in shift.iter_mut().zip(&basis[j]) {
                *s -= k * b;
            }
        }
    }
    Ok(ShiftedLattice {
        r,
        basis,
        shift,
        feasible,
        box_exponents,
        constraints: constraints.to_vec(),
    })
}

/// Least-squares coordinates of v in the span of `basis`.
fn lattice_coords(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let k = basis.len();
    let gram: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| dot(&basis[i], &basis[j])).collect())
        .collect();
    let rhs: Vec<f64> = (0..k).map(|i| dot(&basis[i], v)).collect();
    solve(&gram, &rhs)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ShiftedLattice {
    /// Residual of the compatibility condition at tau, max over stored constraints.
    pub fn residual(&self, tau: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| dist_to_2pi_z(dot(tau, &c.log_vector) + c.arg))
            .fold(0.0, f64::max)
    }

    /// Euclidean covolume of the lattice inside h.
    pub fn covolume(&self) -> f64 {
        let k = self.basis.len();
        if k == 0 {
            return 1.0;
        }
        let gram: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| dot(&self.basis[i], &self.basis[j])).collect())
            .collect();
        det(&gram).abs().sqrt()
    }

    pub fn half_widths(&self, t: f64) -> Vec<f64> {
        self.box_exponents.iter().map(|e| t.max(0.0).powf(*e)).collect()
    }

    /// Lattice points with |tau_v| <= T^{1/[K_v:R]}, lexicographically sorted.
    pub fn enumerate_points(&self, t: f64) -> Vec<Vec<f64>> {
        if !self.feasible {
            return vec![];
        }
        let hw = self.half_widths(t);
        let inside = |tau: &[f64]| tau.iter().zip(&hw).all(|(x, w)| x.abs() <= w + 1e-9);
        let k = self.basis.len();
        let mut out = Vec::new();
        if k == 0 {
            if inside(&self.shift) {
                out.push(self.shift.clone());
            }
            return out;
        }
        // coordinate bounds from the pseudo-inverse
        let gram: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| dot(&self.basis[i], &self.basis[j])).collect())
            .collect();
        let mut bounds = Vec::with_capacity(k);
        for i in 0..k {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            let row = solve(&gram, &e);
            // P_i = sum_j row_j basis_j
            let p: Vec<f64> = (0..self.r)
                .map(|v| (0..k).map(|j| row[j] * self.basis[j][v]).sum())
                .collect();
            let c0 = dot(&p, &self.shift);
            let spread: f64 = p.iter().zip(&hw).map(|(a, w)| a.abs() * w).sum();
            bounds.push(((-c0 - spread).floor() as i64 - 1, (-c0 + spread).ceil() as i64 + 1));
        }
        let mut idx: Vec<i64> = bounds.iter().map(|b| b.0).collect();
        loop {
            let mut tau = self.shift.clone();
            for (j, &c) in idx.iter().enumerate() {
                for (t, b) in tau.iter_mut().zip(&self.basis[j]) {
                    *t += c as f64 * b;
                }
            }
            if inside(&tau) {
                out.push(tau);
            }
            let mut j = 0;
            loop {
                if j == k {
                    out.sort_by(|a, b| {
                        a.iter()
                            .zip(b)
                            .map(|(x, y)| x.total_cmp(y))
                            .find(|o| o.is_ne())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    });
                    return out;
                }
                idx[j] += 1;
                if idx[j] <= bounds[j].1 {
                    break;
                }
                idx[j] = bounds[j].0;
                j += 1;
            }
        }
    }
}

/// (r-1)-dimensional volume of {|tau_v| <= T^{1/deg}} cut by h.
pub fn box_section_volume(places: &[PlaceKind], h: &Hyperplane, t: f64) -> f64 {
    let r = places.len();
    let hw: Vec<f64> = places.iter().map(|p| t.max(0.0).powf(1.0 / p.deg())).collect();
    if r == 1 {
        return 1.0;
    }
    let a = &h.alpha;
    let nrm = h.norm();
    if r == 2 {
        let mut len = f64::INFINITY;
        if a[1] != 0.0 {
            len = len.min(hw[0] * nrm / a[1].abs());
        }
        if a[0] != 0.0 {
            len = len.min(hw[1] * nrm / a[0].abs());
        }
        return 2.0 * len;
    }
    // r >= 3: eliminate the coordinate with the largest |alpha|, integrate the
    // interval length in one more coordinate exactly and the rest by midpoints
    let k = (0..r).max_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs())).unwrap();
    let others: Vec<usize> = (0..r).filter(|&i| i != k).collect();
    let j = others[0];
    let rest = &others[1..];
    let m = if rest.len() == 1 { 4000 } else { 300 };
    let mut total = 0.0;
    let mut idx = vec![0usize; rest.len()];
    let cell: f64 = rest.iter().map(|&v| 2.0 * hw[v] / m as f64).product();
    loop {
        let mut c = 0.0;
        for (q, &v) in rest.iter().enumerate() {
            let x = -hw[v] + (idx[q] as f64 + 0.5) * 2.0 * hw[v] / m as f64;
            c += a[v] * x;
        }
        // need |c + a_j x_j| <= |a_k| hw_k and |x_j| <= hw_j
        let (lo, hi) = if a[j] == 0.0 {
            if c.abs() <= a[k].abs() * hw[k] {
                (-hw[j], hw[j])
            } else {
                (0.0, 0.0)
            }
        } else {
            let l1 = (-a[k].abs() * hw[k] - c) / a[j];
            let l2 = (a[k].abs() * hw[k] - c) / a[j];
            (l1.min(l2).max(-hw[j]), l1.max(l2).min(hw[j]))
        };
        if hi > lo {
            total += (hi - lo) * cell;
        }
        let mut q = 0;
        loop {
            if q == rest.len() {
                return total * nrm / a[k].abs();
            }
            idx[q] += 1;
            if idx[q] < m {
                break;
            }
            idx[q] = 0;
            q += 1;
        }
    }
}

/// Covolume of L_h for trivial delta: (2 pi)^{r-1} |alpha| / |det M_h|.
pub fn trivial_covolume(field: &NumberField, h: &Hyperplane) -> Result<f64> {
    let (_, d) = admissibility_matrix(field, h)?;
    Ok(TWO_PI.powi(field.r() as i32 - 1) * h.norm() / d.abs())
}

/// Predicted point count vol(B(0,T) cap h) / covolume.
pub fn covolume_prediction(field: &NumberField, h: &Hyperplane, t: f64) -> Result<f64> {
    let cov = trivial_covolume(field, h)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    Ok(box_section_volume(&field.places, h, t) / cov)
}

/// Constraints for trivial delta: torsion and fundamental units with arg 0.
pub fn trivial_constraints(field: &NumberField) -> Vec<UnitConstraint> {
    let mut out = vec![UnitConstraint { log_vector: field.torsion_generator.log_vector.clone(), arg: 0.0 }];
    for u in &field.fundamental_units {
        out.push(UnitConstraint { log_vector: u.log_vector.clone(), arg: 0.0 });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q5() -> NumberField {
        NumberField::make_quadratic(5).unwrap()
    }

    #[test]
    fn determinants() {
        let f = q5();
        let le = f.regulator;
        let (_, d) = admissibility_matrix(&f, &Hyperplane { alpha: vec![1.0, 0.0] }).unwrap();
        assert!((d.abs() - le).abs() < 1e-12);
        let (_, d) = admissibility_matrix(&f, &Hyperplane::trace_zero(2)).unwrap();
        assert!((d.abs() - 2.0 * le).abs() < 1e-12);
        assert!(matches!(
            admissibility_matrix(&f, &Hyperplane { alpha: vec![1.0, -1.0] }),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn q5_lattice_counts() {
        let f = q5();
        let h = Hyperplane::distinguished(2, 0);
        let l = shifted_lattice(&f, &h, &trivial_constraints(&f)).unwrap();
        assert!((l.covolume() - 2.0 * PI / f.regulator).abs() < 1e-9);
        let pts = l.enumerate_points(100.0);
        assert_eq!(pts.len(), 15);
        for p in &pts {
            assert!(l.residual(p) < 1e-9);
            assert_eq!(p[0], 0.0);
        }
        assert_eq!(l.enumerate_points(0.0).len(), 1);

        let mut cons = trivial_constraints(&f);
        cons[1].arg = PI;
        let l = shifted_lattice(&f, &h, &cons).unwrap();
        assert!((l.shift[1].abs() - PI / f.regulator).abs() < 1e-9);
        assert_eq!(l.enumerate_points(100.0).len(), 16);
        assert_eq!(l.enumerate_points(0.0).len(), 0);

        let mut cons = trivial_constraints(&f);
        cons[0].arg = PI;
        assert!(!shifted_lattice(&f, &h, &cons).unwrap().feasible);
    }

    #[test]
    fn predictions() {
        let f = q5();
        let p = covolume_prediction(&f, &Hyperplane::distinguished(2, 0), 100.0).unwrap();
        assert!((p - 200.0 * f.regulator / (2.0 * PI)).abs() < 1e-9);
        let p0 = covolume_prediction(&f, &Hyperplane::trace_zero(2), 100.0).unwrap();
        assert!((p0 - 200.0 * f.regulator / PI).abs() < 1e-9);
        let l = shifted_lattice(&f, &Hyperplane::trace_zero(2), &trivial_constraints(&f)).unwrap();
        let n = l.enumerate_points(1e4).len() as f64;
        assert!((n / covolume_prediction(&f, &Hyperplane::trace_zero(2), 1e4).unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn section_volume_3d() {
        let places = vec![PlaceKind::Real; 3];
        // plane x+y+z=0 in the cube [-1,1]^3 is a regular hexagon of side sqrt 2
        let v = box_section_volume(&places, &Hyperplane::trace_zero(3), 1.0);
        let hex = 1.5 * 3f64.sqrt() * 2.0;
        assert!((v - hex).abs() < 1e-3, "{v} {hex}");
    }
}
