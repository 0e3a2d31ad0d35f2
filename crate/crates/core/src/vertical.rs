//! Polynomial discretisation of the vertical reference interval (−1, 0).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lagrange interpolation on an arbitrary node set, in barycentric form.
#[derive(Clone, Debug)]
pub struct Lagrange {
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl Lagrange {
    pub fn new(nodes: Vec<f64>) -> Self {
        let n = nodes.len();
        let mut bary = vec![1.0; n];
        for j in 0..n {
            for k in 0..n {
                if k != j {
                    bary[j] *= nodes[j] - nodes[k];
                }
            }
            bary[j] = 1.0 / bary[j];
        }
        let scale = bary.iter().map(|w| w.abs()).fold(0.0, f64::max);
        bary.iter_mut().for_each(|w| *w /= scale);
        Lagrange { nodes, bary }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of every cardinal function at `x`.
    pub fn basis_at(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        if let Some(j) = self.nodes.iter().position(|&xj| xj == x) {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            return row;
        }
        let terms: Vec<f64> = (0..n).map(|j| self.bary[j] / (x - self.nodes[j])).collect();
        let denom: f64 = terms.iter().sum();
        terms.into_iter().map(|t| t / denom).collect()
    }

    pub fn eval(&self, values: &[f64], x: f64) -> f64 {
        self.basis_at(x).iter().zip(values).map(|(b, v)| b * v).sum()
    }

    /// Rows: `points`, columns: cardinal functions.
    pub fn eval_matrix(&self, points: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.nodes.len());
        for (i, &x) in points.iter().enumerate() {
            for (j, b) in self.basis_at(x).into_iter().enumerate() {
                m[(i, j)] = b;
            }
        }
        m
    }

    /// Nodal differentiation matrix.
    pub fn diff_matrix(&self) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (self.bary[j] / self.bary[i]) / (self.nodes[i] - self.nodes[j]);
                    d[(i, j)] = v;
                    diag -= v;
                }
            }
            d[(i, i)] = diag;
        }
        d
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1], nodes increasing.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `L_j^{(d)}(s)` for `j = 0..=nmax` and derivative orders `d = 0..=3`.
pub(crate) fn legendre_table(nmax: usize, s: f64) -> [Vec<f64>; 4] {
    let mut t: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; nmax + 1]);
    t[0][0] = 1.0;
    if nmax >= 1 {
        t[0][1] = s;
        t[1][1] = 1.0;
    }
    for j in 1..nmax {
        let jf = j as f64;
        t[0][j + 1] = ((2.0 * jf + 1.0) * s * t[0][j] - jf * t[0][j - 1]) / (jf + 1.0);
        // L'_{j+1} = L'_{j-1} + (2j+1) L_j, and likewise for higher orders
        for d in 1..4 {
            t[d][j + 1] = t[d][j - 1] + (2.0 * jf + 1.0) * t[d - 1][j];
        }
    }
    t
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Clenshaw–Curtis weights for the Chebyshev–Gauss–Lobatto points
/// `cos(πj/N)`, j = 0..=N, on [−1, 1].
fn clenshaw_curtis(n_intervals: usize) -> Vec<f64> {
    let n = n_intervals;
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    if n == 0 {
        return vec![2.0];
    }
    let theta: Vec<f64> = (0..=n).map(|j| std::f64::consts::PI * j as f64 / nf).collect();
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (vi, th) in v.iter_mut().zip(&theta[1..n]) {
                *vi -= 2.0 * (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (vi, th) in v.iter_mut().zip(&theta[1..n]) {
            *vi -= (nf * th).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (vi, th) in v.iter_mut().zip(&theta[1..n]) {
                *vi -= 2.0 * (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.into_iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Chebyshev–Gauss–Lobatto nodes on [−1, 0] with Clenshaw–Curtis weights.
#[derive(Clone, Debug)]
pub struct VerticalNodes {
    basis: Lagrange,
    weights: Vec<f64>,
}

pub const DEFAULT_VERTICAL_NODES: usize = 32;

impl VerticalNodes {
    pub fn new(m: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::param("m", format!("{m} vertical nodes; need at least 4")));
        }
        let n = m - 1;
        let nodes: Vec<f64> = (0..m)
            .map(|j| {
                let s = -(std::f64::consts::PI * j as f64 / n as f64).cos();
                0.5 * (s - 1.0)
            })
            .collect();
        let mut nodes = nodes;
        nodes[0] = -1.0;
        nodes[n] = 0.0;
        // weights are symmetric, so the reversed ordering is harmless
        let weights = clenshaw_curtis(n).into_iter().map(|w| 0.5 * w).collect();
        Ok(VerticalNodes {
            basis: Lagrange::new(nodes),
            weights,
        })
    }

    pub fn m(&self) -> usize {
        self.basis.len()
    }

    pub fn nodes(&self) -> &[f64] {
        self.basis.nodes()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis(&self) -> &Lagrange {
        &self.basis
    }

    /// ∫_{−1}^{0} profile(y) weight(y) dy by Clenshaw–Curtis quadrature.
    pub fn integrate(&self, profile: &[f64], weight: impl Fn(f64) -> f64) -> Result<f64> {
        self.check_len(profile.len())?;
        Ok(self
            .nodes()
            .iter()
            .zip(profile)
            .zip(&self.weights)
            .map(|((&y, &p), &w)| w * p * weight(y))
            .sum())
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got != self.m() {
            return Err(Error::NodeCountMismatch {
                expected: self.m(),
                got,
            });
        }
        Ok(())
    }

    /// Evaluates the interpolant of `profile` at `y`.
    pub fn interpolate(&self, profile: &[f64], y: f64) -> f64 {
        self.basis.eval(profile, y)
    }

    pub fn diff_matrix(&self) -> DMatrix<f64> {
        self.basis.diff_matrix()
    }

    /// `Q[i][j] = ∫_{−1}^{y_i} ℓ_j`, so `Q·g` is the running integral of the
    /// interpolant of `g`.
    pub fn cumulative_integration_matrix(&self) -> DMatrix<f64> {
        self.weighted_running_integral(|_, _| 1.0)
    }

    /// `R[i][j] = ∫_{−1}^{y_i} (y_i − ζ) ℓ_j(ζ) dζ`.
    pub fn double_integration_matrix(&self) -> DMatrix<f64> {
        self.weighted_running_integral(|y, z| y - z)
    }

    fn weighted_running_integral(&self, kernel: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
        let m = self.m();
        let (gx, gw) = gauss_legendre(m + 1);
        let mut q = DMatrix::zeros(m, m);
        for (i, &yi) in self.nodes().iter().enumerate() {
            let half = 0.5 * (yi + 1.0);
            if half == 0.0 {
                continue;
            }
            for (&s, &w) in gx.iter().zip(&gw) {
                let z = -1.0 + half * (s + 1.0);
                let b = self.basis.basis_at(z);
                let k = kernel(yi, z) * w * half;
                for j in 0..m {
                    q[(i, j)] += k * b[j];
                }
            }
        }
        q
    }
}
