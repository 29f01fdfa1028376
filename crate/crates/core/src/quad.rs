//! Deterministic quadrature: Gauss-Legendre panels, improper radial integrals
//! over R^n, and axially symmetric ball integrals.
//!
//! Improper integrals are mapped to [0,1) by r = s/(1-s) and integrated over
//! dyadically graded panels toward s = 1. Every result carries an error
//! estimate (coarse/fine panel difference plus a tail bound); integrands whose
//! tail fails to decay produce a hard error instead of a silently wrong value.

use crate::error::{Error, Result};

/// Value with an a posteriori error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Nodes come out symmetric and sorted.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for k in 0..m {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(m, x);
        nodes[m - 1 - k] = x;
        weights[m - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_deriv(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=m {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    if m == 1 {
        return (x, 1.0);
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Plain Gauss-Legendre integral of f over [a, b] with m nodes.
pub fn integral_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(m);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Surface area of the unit sphere S^{n-1} in R^n: 2 pi^{n/2} / Gamma(n/2).
pub fn unit_sphere_area(n: usize) -> f64 {
    assert!(n >= 2);
    let pi = std::f64::consts::PI;
    if n.is_multiple_of(2) {
        // Gamma(n/2) = (n/2 - 1)!
        let m = n / 2;
        let mut gamma = 1.0;
        for j in 1..m {
            gamma *= j as f64;
        }
        2.0 * pi.powi(m as i32) / gamma
    } else {
        // Gamma(m + 1/2) = (2m)! sqrt(pi) / (4^m m!)
        let m = n / 2;
        let mut gamma = pi.sqrt();
        for j in 0..m {
            gamma *= j as f64 + 0.5;
        }
        2.0 * pi.powi(m as i32) * pi.sqrt() / gamma
    }
}

/// Options for improper radial integrals.
#[derive(Debug, Clone, Copy)]
pub struct RadialOpts {
    /// Gauss nodes per panel (the error estimate re-integrates with half as
    /// many).
    pub nodes: usize,
    /// Number of dyadic panels toward s = 1; the effective radial cutoff is
    /// about 2^{panels}.
    pub dyadic_panels: usize,
    /// Absolute tolerance for the estimated truncation tail.
    pub tail_tol: f64,
}

impl Default for RadialOpts {
    fn default() -> Self {
        Self {
            nodes: 24,
            dyadic_panels: 44,
            tail_tol: 1e-9,
        }
    }
}

/// ∫_0^∞ f(r) r^{n-1} dr (line integral, no angular factor).
pub fn integral_radial_line<F: Fn(f64) -> f64>(
    n: usize,
    f: F,
    opts: RadialOpts,
) -> Result<Quadrature> {
    let g = |s: f64| {
        let r = s / (1.0 - s);
        let jac = 1.0 / ((1.0 - s) * (1.0 - s));
        f(r) * r.powi(n as i32 - 1) * jac
    };

    let (nodes_f, weights_f) = gauss_legendre(opts.nodes);
    let (nodes_c, weights_c) = gauss_legendre(opts.nodes / 2);
    let panel = |a: f64, b: f64| -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut fine = 0.0;
        for (x, w) in nodes_f.iter().zip(&weights_f) {
            fine += w * g(mid + half * x);
        }
        let mut coarse = 0.0;
        for (x, w) in nodes_c.iter().zip(&weights_c) {
            coarse += w * g(mid + half * x);
        }
        (fine * half, (fine - coarse).abs() * half)
    };

    let mut value = 0.0;
    let mut error = 0.0;
    // Uniform panels on s in [0, 1/2] (r in [0, 1]).
    let inner = 8;
    for k in 0..inner {
        let a = 0.5 * k as f64 / inner as f64;
        let b = 0.5 * (k + 1) as f64 / inner as f64;
        let (v, e) = panel(a, b);
        value += v;
        error += e;
    }
    // Dyadic panels s in [1 - 2^{-k}, 1 - 2^{-k-1}].
    let mut last = f64::INFINITY;
    let mut tail = f64::INFINITY;
    for k in 1..=opts.dyadic_panels {
        let a = 1.0 - 0.5f64.powi(k as i32);
        let b = 1.0 - 0.5f64.powi(k as i32 + 1);
        let (v, e) = panel(a, b);
        value += v;
        error += e;
        // Geometric tail bound: if panel magnitudes decay by a factor theta,
        // the remainder is at most |v| theta/(1-theta).
        let theta = if last.is_finite() && last > 0.0 {
            (v.abs() / last).min(0.9)
        } else {
            0.5
        };
        tail = v.abs() * theta / (1.0 - theta);
        last = v.abs().max(1e-300);
        if tail < opts.tail_tol && k > 8 {
            return Ok(Quadrature {
                value,
                error: error + tail,
            });
        }
    }
    if !tail.is_finite() || tail > opts.tail_tol {
        return Err(Error::QuadratureTail {
            what: "radial integral",
            estimate: tail,
            tolerance: opts.tail_tol,
        });
    }
    Ok(Quadrature {
        value,
        error: error + tail,
    })
}

/// ∫_{R^n} f(|y|) dy = |S^{n-1}| ∫_0^∞ f r^{n-1} dr.
pub fn integral_radial_rn<F: Fn(f64) -> f64>(
    n: usize,
    f: F,
    opts: RadialOpts,
) -> Result<Quadrature> {
    let line = integral_radial_line(n, f, opts)?;
    let area = unit_sphere_area(n);
    Ok(Quadrature {
        value: area * line.value,
        error: area * line.error,
    })
}

/// ∫_{B_R} f(y_1, |y_perp|) dy over the ball of radius `radius` in R^n, for
/// integrands depending on y_1 and the transverse radius only:
///
///   |S^{n-2}| ∫_0^R r^{n-1} ∫_0^pi f(r cos θ, r sin θ) sin^{n-2}θ dθ dr.
///
/// The θ form keeps the angular integrand analytic (the equivalent weight in
/// mu = cos θ has endpoint singularities), and the rule is symmetric about
/// θ = pi/2 so odd-in-y_1 integrands cancel to roundoff. Radial panels are
/// dyadic from [0,1] outward.
pub fn integral_ball_axi<F: Fn(f64, f64) -> f64>(
    n: usize,
    radius: f64,
    f: F,
    nodes_r: usize,
    nodes_theta: usize,
) -> Quadrature {
    assert!(radius > 0.0);
    let (th_nodes, th_weights) = gauss_legendre(nodes_theta);
    let half = 0.5 * std::f64::consts::PI;
    let angular = |r: f64| {
        let mut acc = 0.0;
        for (x, w) in th_nodes.iter().zip(&th_weights) {
            let theta = half * (1.0 + x);
            let (s, c) = theta.sin_cos();
            acc += w * f(r * c, r * s) * s.powi(n as i32 - 2);
        }
        acc * half
    };
    let radial = |r: f64| angular(r) * r.powi(n as i32 - 1);

    // Panel edges 0, 1, 2, 4, ... capped at radius.
    let mut edges = vec![0.0];
    let mut e = 1.0f64.min(radius);
    loop {
        edges.push(e);
        if e >= radius {
            break;
        }
        e = (e * 2.0).min(radius);
    }
    let mut value = 0.0;
    let mut coarse = 0.0;
    for w in edges.windows(2) {
        value += integral_interval(radial, w[0], w[1], nodes_r);
        coarse += integral_interval(radial, w[0], w[1], nodes_r / 2);
    }
    let area = unit_sphere_area(n - 1);
    Quadrature {
        value: area * value,
        error: area * (value - coarse).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        // m-point Gauss integrates degree <= 2m-1 exactly.
        let m = 8;
        for k in 0..=(2 * m - 1) {
            let exact = 1.0 / (k as f64 + 1.0);
            let got = integral_interval(|x| x.powi(k as i32), 0.0, 1.0, m);
            assert_relative_eq!(got, exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, max_relative = 1e-14);
        // |S^5| = pi^3, |S^6| = 16 pi^3 / 15.
        assert_relative_eq!(unit_sphere_area(6), PI.powi(3), max_relative = 1e-14);
        assert_relative_eq!(
            unit_sphere_area(7),
            16.0 * PI.powi(3) / 15.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn exponential_moment() {
        // ∫_0^∞ e^{-r} r^5 dr = 5! = 120.
        let q = integral_radial_line(6, |r| (-r).exp(), RadialOpts::default()).unwrap();
        assert_relative_eq!(q.value, 120.0, max_relative = 1e-10);
        assert!(q.error < 1e-6);
    }

    #[test]
    fn gaussian_over_r6() {
        // ∫_{R^6} e^{-|y|^2} dy = pi^3.
        let q = integral_radial_rn(6, |r| (-r * r).exp(), RadialOpts::default()).unwrap();
        assert_relative_eq!(q.value, PI.powi(3), max_relative = 1e-12);
    }

    #[test]
    fn slow_decay_is_rejected() {
        // f r^{n-1} ~ r at infinity: divergent, must be flagged.
        let res = integral_radial_line(6, |r| (1.0 + r * r).powi(-2), RadialOpts::default());
        assert!(matches!(res, Err(Error::QuadratureTail { .. })));
    }

    #[test]
    fn ball_volume_and_parity() {
        // |B_R| in R^6 = pi^3 R^6 / 6.
        let q = integral_ball_axi(6, 3.0, |_, _| 1.0, 16, 64);
        assert_relative_eq!(
            q.value,
            PI.powi(3) * 3.0f64.powi(6) / 6.0,
            max_relative = 1e-10
        );

        // Odd integrand in y_1 cancels by symmetry of the angular rule.
        let scale = integral_ball_axi(6, 3.0, |y1, _| y1.abs(), 16, 64).value;
        let odd = integral_ball_axi(6, 3.0, |y1, _| y1, 16, 64).value;
        assert!(odd.abs() < 1e-13 * scale);
    }

    #[test]
    fn ball_second_moment() {
        // ∫_{B_R in R^6} y_1^2 dy = (1/6) ∫_{B_R} |y|^2 = pi^3 R^8 / 48.
        let q = integral_ball_axi(6, 2.0, |y1, _| y1 * y1, 16, 64);
        assert_relative_eq!(
            q.value,
            PI.powi(3) * 2.0f64.powi(8) / 48.0,
            max_relative = 1e-10
        );
    }
}
