//! Quadrature on non-uniform meshes.
//!
//! The dense sample meshes produced by the simulator are uniform except next
//! to events, noise-cell boundaries and the horizon. Each sub-interval is
//! integrated exactly against the cubic through four neighboring nodes. That
//! is fourth-order accurate like composite Simpson and also yields every
//! partial integral, which the IPA factor oracle needs for nested integrals.

/// Cumulative integral of a smooth piece sampled at `t`, `y`.
///
/// Three nodes use the interpolating quadratic, two fall back to the
/// trapezoid rule and one gives `[0]`.
pub fn cumulative(t: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), y.len(), "mesh and values differ in length");
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(0.0);
    if n == 2 {
        out.push(0.5 * (t[1] - t[0]) * (y[0] + y[1]));
        return out;
    }
    let mut acc = 0.0;
    for j in 0..n - 1 {
        acc += if n == 3 {
            quadratic_integral([t[0], t[1], t[2]], [y[0], y[1], y[2]], t[j], t[j + 1])
        } else {
            let s = stencil(t, j);
            cubic_integral(
                [t[s], t[s + 1], t[s + 2], t[s + 3]],
                [y[s], y[s + 1], y[s + 2], y[s + 3]],
                t[j],
                t[j + 1],
            )
        };
        out.push(acc);
    }
    out
}

/// Cumulative integral across pieces separated by derivative kinks.
///
/// `knot[j]` marks node `j` as a boundary between two smooth pieces; the
/// node belongs to both. Node 0 and the last node are implicit boundaries.
pub fn cumulative_piecewise(t: &[f64], y: &[f64], knot: &[bool]) -> Vec<f64> {
    assert_eq!(t.len(), knot.len(), "mesh and knot flags differ in length");
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut offset = 0.0;
    let mut start = 0;
    out.push(0.0);
    for j in 1..n {
        if knot[j] || j == n - 1 {
            let piece = cumulative(&t[start..=j], &y[start..=j]);
            out.extend(piece[1..].iter().map(|v| v + offset));
            offset = *out.last().unwrap();
            start = j;
        }
    }
    out
}

/// Definite integral over pieces separated by kinks.
pub fn integrate_piecewise(t: &[f64], y: &[f64], knot: &[bool]) -> f64 {
    cumulative_piecewise(t, y, knot)
        .last()
        .copied()
        .unwrap_or(0.0)
}

/// Definite integral of a single smooth piece.
pub fn integrate(t: &[f64], y: &[f64]) -> f64 {
    cumulative(t, y).last().copied().unwrap_or(0.0)
}

/// Composite trapezoid rule.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    assert_eq!(t.len(), y.len(), "mesh and values differ in length");
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

// Left index of the four-node stencil used for sub-interval [t_j, t_{j+1}].
// Among the stencils that contain it, picks the one whose node spacings are
// closest to the sub-interval width, preferring the centered one on ties.
fn stencil(t: &[f64], j: usize) -> usize {
    let n = t.len();
    let h = t[j + 1] - t[j];
    let score = |s: usize| {
        (s..s + 3)
            .map(|k| spacing_ratio(t[k + 1] - t[k], h))
            .fold(1.0_f64, f64::max)
    };
    let mut best: Option<(usize, f64)> = None;
    for s in [j.wrapping_sub(1), j, j.wrapping_sub(2)] {
        if s > j || s + 3 > n - 1 {
            continue;
        }
        let sc = score(s);
        // Mesh round-off must not flip the choice away from the centered one.
        if best.is_none_or(|(_, b)| sc < b - 1e-6) {
            best = Some((s, sc));
        }
    }
    best.expect("a piece with four or more nodes has a stencil")
        .0
}

fn spacing_ratio(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return f64::INFINITY;
    }
    (a / b).max(b / a)
}

// Exact integral over [lo, hi] of the quadratic interpolating (x_k, y_k).
fn quadratic_integral(x: [f64; 3], y: [f64; 3], lo: f64, hi: f64) -> f64 {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let d012 = (d12 - d01) / (x[2] - x[0]);
    let (a, b) = (lo - x[0], hi - x[0]);
    let h1 = x[1] - x[0];
    let lin = 0.5 * (b * b - a * a);
    let quad = (b * b * b - a * a * a) / 3.0 - 0.5 * h1 * (b * b - a * a);
    y[0] * (hi - lo) + d01 * lin + d012 * quad
}

// Exact integral over [lo, hi] of the cubic interpolating (x_k, y_k), in
// Newton form about x_0.
fn cubic_integral(x: [f64; 4], y: [f64; 4], lo: f64, hi: f64) -> f64 {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let d23 = (y[3] - y[2]) / (x[3] - x[2]);
    let d012 = (d12 - d01) / (x[2] - x[0]);
    let d123 = (d23 - d12) / (x[3] - x[1]);
    let d0123 = (d123 - d012) / (x[3] - x[0]);
    let (a1, a2) = (x[1] - x[0], x[2] - x[0]);
    let (a, b) = (lo - x[0], hi - x[0]);
    let p2 = (b * b - a * a) / 2.0;
    let p3 = (b * b * b - a * a * a) / 3.0;
    let p4 = (b * b * b * b - a * a * a * a) / 4.0;
    y[0] * (hi - lo)
        + d01 * p2
        + d012 * (p3 - a1 * p2)
        + d0123 * (p4 - (a1 + a2) * p3 + a1 * a2 * p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_on_quadratics_with_uneven_mesh() {
        let t = [0.0, 1e-9, 0.1, 0.2, 0.3, 0.35, 0.45, 0.45 + 1e-10];
        let f = |x: f64| 3.0 * x * x - 2.0 * x + 0.5;
        let y: Vec<f64> = t.iter().map(|&x| f(x)).collect();
        let exact = |x: f64| x * x * x - x * x + 0.5 * x;
        let got = integrate(&t, &y);
        let want = exact(t[t.len() - 1]) - exact(0.0);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn exact_on_cubics_with_uneven_mesh() {
        let t = [0.0, 0.05, 0.1, 0.2, 0.2 + 1e-9, 0.3, 0.31, 0.5, 0.6];
        let f = |x: f64| 4.0 * x * x * x - x * x + 0.25;
        let y: Vec<f64> = t.iter().map(|&x| f(x)).collect();
        let exact = |x: f64| x.powi(4) - x * x * x / 3.0 + 0.25 * x;
        let cum = cumulative(&t, &y);
        for (k, &tk) in t.iter().enumerate() {
            assert!(
                (cum[k] - exact(tk)).abs() < 1e-12,
                "node {k}: {} vs {}",
                cum[k],
                exact(tk)
            );
        }
    }

    #[test]
    fn fourth_order_convergence_on_smooth_integrand() {
        let err = |n: usize| {
            let t: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64 * 2.0).collect();
            let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
            (integrate(&t, &y) - (1.0 - 2.0_f64.cos())).abs()
        };
        let ratio = err(40) / err(80);
        assert!(ratio > 14.0, "ratio {ratio}");
    }

    #[test]
    fn knots_split_pieces() {
        // |x - 1| integrated across the kink at 1 is exact when split there.
        let t: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|x| (x - 1.0).abs()).collect();
        let mut knot = vec![false; t.len()];
        knot[10] = true;
        assert!((integrate_piecewise(&t, &y, &knot) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn degenerate_meshes() {
        assert_eq!(cumulative(&[], &[]), Vec::<f64>::new());
        assert_eq!(cumulative(&[1.0], &[5.0]), vec![0.0]);
        assert_eq!(cumulative(&[0.0, 2.0], &[1.0, 3.0]), vec![0.0, 4.0]);
        assert_eq!(trapezoid(&[0.0, 2.0], &[1.0, 3.0]), 4.0);
    }

    proptest! {
        #[test]
        fn cumulative_is_additive(split in 2usize..30, n in 32usize..60) {
            let t: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).powf(1.1)).collect();
            let y: Vec<f64> = t.iter().map(|x| (0.3 * x).cos()).collect();
            let mut knot = vec![false; n];
            knot[split] = true;
            let whole = integrate_piecewise(&t, &y, &knot);
            let left = integrate(&t[..=split], &y[..=split]);
            let right = integrate(&t[split..], &y[split..]);
            prop_assert!((whole - left - right).abs() < 1e-12);
        }
    }
}
