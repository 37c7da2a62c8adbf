//! Finite-difference derivatives for non-periodic samples (open curves).
//!
//! Interior nodes use centered stencils; nodes near either end use one-sided
//! stencils of the same width, which costs roughly one order of accuracy.

/// Fornberg's algorithm: weights for the `order`-th derivative at `x0`
/// from values at `nodes`.
pub fn fornberg_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

/// Stencil width used for a derivative of the given order.
pub fn stencil_width(order: u32) -> usize {
    match order {
        0 => 1,
        1 | 2 => 9,
        _ => 11,
    }
}

/// Precomputed stencils for one derivative order on a uniform grid.
#[derive(Clone, Debug)]
pub struct FdOperator {
    order: u32,
    /// (first node of the stencil, weights) per output node.
    rows: Vec<(usize, Vec<f64>)>,
}

impl FdOperator {
    pub fn new(n: usize, dx: f64, order: u32) -> Self {
        let w = stencil_width(order).min(n);
        let half = w / 2;
        let offsets: Vec<f64> = (0..w).map(|i| i as f64).collect();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let start = i.saturating_sub(half).min(n - w);
            let weights = fornberg_weights((i - start) as f64, &offsets, order as usize)
                .into_iter()
                .map(|v| v / dx.powi(order as i32))
                .collect();
            rows.push((start, weights));
        }
        FdOperator { order, rows }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(start, w)| w.iter().zip(&f[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `order`-th finite-difference derivative of uniformly spaced samples.
pub fn fd_derivative(f: &[f64], dx: f64, order: u32) -> Vec<f64> {
    if order == 0 {
        return f.to_vec();
    }
    FdOperator::new(f.len(), dx, order).apply(f)
}

/// Cumulative integral of uniformly spaced samples, starting from 0.
pub fn cumulative_integral(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    // integrate each cell with the quintic through the nearest six samples
    let width = 6.min(n);
    for i in 0..n - 1 {
        let start = i.saturating_sub(2).min(n - width);
        let nodes: Vec<f64> = (0..width).map(|j| (start + j) as f64).collect();
        // integral over [i, i+1] of the Lagrange interpolant
        let mut cell = 0.0;
        for j in 0..width {
            cell += f[start + j] * lagrange_cell_weight(&nodes, j, i as f64);
        }
        out[i + 1] = out[i] + cell * dx;
    }
    out
}

fn lagrange_cell_weight(nodes: &[f64], j: usize, a: f64) -> f64 {
    // exact integral over [a, a+1] of the j-th Lagrange basis polynomial (degree ≤ 5),
    // via 3-point Gauss–Legendre quadrature
    let gl = [
        (-0.774_596_669_241_483_4, 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        (0.774_596_669_241_483_4, 5.0 / 9.0),
    ];
    gl.iter()
        .map(|&(s, w)| {
            let x = a + 0.5 + 0.5 * s;
            let mut l = 1.0;
            for (m, xm) in nodes.iter().enumerate() {
                if m != j {
                    l *= (x - xm) / (nodes[j] - xm);
                }
            }
            0.5 * w * l
        })
        .sum()
}

/// Lagrange interpolation of uniformly spaced samples at fractional index `r`.
pub fn interpolate(f: &[f64], r: f64, width: usize) -> f64 {
    let n = f.len();
    let width = width.min(n);
    let centre = r.floor() as i64 - (width as i64 / 2 - 1);
    let start = centre.clamp(0, (n - width) as i64) as usize;
    let mut acc = 0.0;
    for j in 0..width {
        let xj = (start + j) as f64;
        let mut l = 1.0;
        for m in 0..width {
            if m != j {
                let xm = (start + m) as f64;
                l *= (r - xm) / (xj - xm);
            }
        }
        acc += f[start + j] * l;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_reproduce_classic_stencil() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[0] - 1.0).abs() < 1e-14);
        assert!((w[1] + 2.0).abs() < 1e-14);
        assert!((w[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn derivatives_of_smooth_function() {
        let n = 400;
        let dx = 0.01;
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * dx).sin()).collect();
        let d1 = fd_derivative(&f, dx, 1);
        let d2 = fd_derivative(&f, dx, 2);
        let d3 = fd_derivative(&f, dx, 3);
        for i in 0..n {
            let x = i as f64 * dx;
            assert!((d1[i] - x.cos()).abs() < 1e-10, "d1 at {i}");
            assert!((d2[i] + x.sin()).abs() < 1e-8, "d2 at {i}");
            assert!((d3[i] + x.cos()).abs() < 1e-5, "d3 at {i}");
        }
    }

    #[test]
    fn cumulative_integral_of_cosine() {
        let n = 200;
        let dx = 0.02;
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * dx).cos()).collect();
        let s = cumulative_integral(&f, dx);
        for i in 0..n {
            assert!((s[i] - (i as f64 * dx).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_is_high_order() {
        let f: Vec<f64> = (0..50).map(|i| (0.1 * i as f64).exp()).collect();
        let v = interpolate(&f, 10.37, 8);
        assert!((v - (1.037_f64).exp()).abs() < 1e-10);
        let v = interpolate(&f, 0.3, 8);
        assert!((v - (0.03_f64).exp()).abs() < 1e-9);
    }
}
