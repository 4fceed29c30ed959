//! Independent reference values shared by integration tests.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bound-state energies of a square well: zero potential on `|x| < a`,
/// `depth` outside. Solves `z tan z = sqrt(z0^2 - z^2)` (even) and
/// `-z cot z = sqrt(z0^2 - z^2)` (odd) with `z = a sqrt(2 m E)`,
/// `z0 = a sqrt(2 m depth)`. Energies ascending.
pub fn square_well_energies(depth: f64, a: f64, mass: f64) -> Vec<f64> {
    let z0 = a * (2.0 * mass * depth).sqrt();
    let rhs = |z: f64| (z0 * z0 - z * z).max(0.0).sqrt();
    let mut zs = Vec::new();
    let mut start = 0.0;
    let mut even = true;
    while start < z0 {
        let end = start + FRAC_PI_2;
        let hi = z0.min(end - 1e-14);
        let f = |z: f64| if even { z * z.tan() - rhs(z) } else { -z / z.tan() - rhs(z) };
        if f(hi) > 0.0 {
            zs.push(bisect(f, start + 1e-15, hi));
        }
        start = end;
        even = !even;
    }
    zs.iter().map(|z| z * z / (2.0 * mass * a * a)).collect()
}

/// Number of bound states, `ceil(2 z0 / pi)`.
pub fn square_well_count(depth: f64, a: f64, mass: f64) -> usize {
    let z0 = a * (2.0 * mass * depth).sqrt();
    (2.0 * z0 / PI).ceil() as usize
}
