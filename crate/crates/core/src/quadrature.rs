//! Quadrature rules on simplices in barycentric coordinates.
//!
//! Weights are fractions of the cell volume (they sum to one).

use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    pub degree: usize,
    /// Barycentric coordinates, `dim + 1` entries per point.
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Smallest tabulated rule on the `dim`-simplex exact for polynomials of
/// total degree `degree`.
pub fn rule(dim: usize, degree: usize) -> &'static QuadratureRule {
    static TRI2: OnceLock<QuadratureRule> = OnceLock::new();
    static TRI5: OnceLock<QuadratureRule> = OnceLock::new();
    static TRI6: OnceLock<QuadratureRule> = OnceLock::new();
    static TET2: OnceLock<QuadratureRule> = OnceLock::new();
    static TET5: OnceLock<QuadratureRule> = OnceLock::new();
    static TET7: OnceLock<QuadratureRule> = OnceLock::new();
    match (dim, degree) {
        (2, 0..=2) => TRI2.get_or_init(triangle_degree2),
        (2, 3..=5) => TRI5.get_or_init(triangle_degree5),
        (2, 6) => TRI6.get_or_init(triangle_degree6),
        (3, 0..=2) => TET2.get_or_init(tet_degree2),
        (3, 3..=5) => TET5.get_or_init(tet_degree5),
        (3, 6..=7) => TET7.get_or_init(|| grundmann_moeller(3, 3)),
        _ => panic!("no quadrature rule of degree {degree} in dimension {dim}"),
    }
}

fn push_orbit(points: &mut Vec<Vec<f64>>, weights: &mut Vec<f64>, bary: &[f64], w: f64) {
    let mut orbit: Vec<Vec<f64>> = Vec::new();
    let mut perm = bary.to_vec();
    perm.sort_by(|a, b| a.partial_cmp(b).unwrap());
    loop {
        if !orbit.iter().any(|p| p == &perm) {
            orbit.push(perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    for p in orbit {
        points.push(p);
        weights.push(w);
    }
}

fn next_permutation(v: &mut [f64]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn triangle_degree2() -> QuadratureRule {
    let (mut p, mut w) = (Vec::new(), Vec::new());
    push_orbit(&mut p, &mut w, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0);
    QuadratureRule { dim: 2, degree: 2, points: p, weights: w }
}

fn triangle_degree5() -> QuadratureRule {
    let s = 15f64.sqrt();
    let (mut p, mut w) = (Vec::new(), Vec::new());
    push_orbit(&mut p, &mut w, &[1.0 / 3.0; 3], 9.0 / 40.0);
    for (a, wt) in [((6.0 - s) / 21.0, (155.0 - s) / 1200.0), ((6.0 + s) / 21.0, (155.0 + s) / 1200.0)] {
        push_orbit(&mut p, &mut w, &[a, a, 1.0 - 2.0 * a], wt);
    }
    QuadratureRule { dim: 2, degree: 5, points: p, weights: w }
}

fn triangle_degree6() -> QuadratureRule {
    let (mut p, mut w) = (Vec::new(), Vec::new());
    let a = 0.063089014491502228340331602870819;
    push_orbit(&mut p, &mut w, &[a, a, 1.0 - 2.0 * a], 0.050844906370206816920936809106869);
    let b = 0.24928674517091042129163855310702;
    push_orbit(&mut p, &mut w, &[b, b, 1.0 - 2.0 * b], 0.11678627572637936602528961138558);
    let (c1, c2) = (0.053145049844816947353249671631398, 0.31035245103378440541660773395655);
    push_orbit(&mut p, &mut w, &[c1, c2, 1.0 - c1 - c2], 0.082851075618373575193553456420442);
    QuadratureRule { dim: 2, degree: 6, points: p, weights: w }
}

fn tet_degree2() -> QuadratureRule {
    let a = (5.0 - 5f64.sqrt()) / 20.0;
    let (mut p, mut w) = (Vec::new(), Vec::new());
    push_orbit(&mut p, &mut w, &[a, a, a, 1.0 - 3.0 * a], 0.25);
    QuadratureRule { dim: 3, degree: 2, points: p, weights: w }
}

fn tet_degree5() -> QuadratureRule {
    let (mut p, mut w) = (Vec::new(), Vec::new());
    let a = 0.0927352503108912264;
    push_orbit(&mut p, &mut w, &[a, a, a, 1.0 - 3.0 * a], 0.0734930431163619495);
    let b = 0.3108859192633006097;
    push_orbit(&mut p, &mut w, &[b, b, b, 1.0 - 3.0 * b], 0.1126879257180158508);
    let c = 0.0455037041256496495;
    push_orbit(&mut p, &mut w, &[c, c, 0.5 - c, 0.5 - c], 0.0425460207770814664);
    QuadratureRule { dim: 3, degree: 5, points: p, weights: w }
}

/// Grundmann-Moeller rule of degree `2s + 1` on the `n`-simplex.
fn grundmann_moeller(n: usize, s: usize) -> QuadratureRule {
    let d = 2 * s + 1;
    let fact = |m: usize| (1..=m).map(|x| x as f64).product::<f64>();
    let (mut points, mut weights) = (Vec::new(), Vec::new());
    for i in 0..=s {
        let denom = (d + n - 2 * i) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * 2f64.powi(-(2 * s as i32)) * denom.powi(d as i32) / (fact(i) * fact(d + n - i));
        for beta in compositions(s - i, n + 1) {
            points.push(beta.iter().map(|&b| (2 * b + 1) as f64 / denom).collect());
            weights.push(w * fact(n));
        }
    }
    QuadratureRule { dim: n, degree: d, points, weights }
}

/// All vectors of `parts` nonnegative integers summing to `total`.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}
