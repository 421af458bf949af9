//! Piecewise-linear (1D) and bilinear (2D) finite elements on uniform grids
//! of `[0,1]^D` with homogeneous Dirichlet boundary conditions.
//!
//! Resolution `α_i` means `2^{α_i}` intervals of width `h_i = 2^{-α_i}` in
//! direction `i`, i.e. `2^{α_i} - 1` interior unknowns.

use crate::error::{Error, Result};

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Number of intervals at level `alpha`.
pub fn intervals(alpha: u32) -> usize {
    1usize << alpha
}

/// Tridiagonal SPD system from the 1D hat-function Galerkin method.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[j]` couples unknowns `j` and `j + 1`.
    pub off: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// Assemble `-(a u')' = f` on `[0,1]` with `k` equal intervals.
///
/// Element integrals use two-point Gauss quadrature.
pub fn assemble_1d(
    k: usize,
    a: impl Fn(f64) -> f64,
    f: impl Fn(f64) -> f64,
) -> Result<Tridiagonal> {
    if k == 0 {
        return Err(Error::invalid("need at least one interval"));
    }
    let n = k - 1;
    let h = 1.0 / k as f64;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut rhs = vec![0.0; n];
    let mut a_min = f64::INFINITY;
    for e in 0..k {
        let z0 = e as f64 * h;
        let mut a_int = 0.0;
        let mut f_left = 0.0;
        let mut f_right = 0.0;
        for &g in &GAUSS2 {
            let z = z0 + g * h;
            let av = a(z);
            a_min = a_min.min(av);
            a_int += 0.5 * h * av;
            let fv = f(z);
            f_left += 0.5 * h * fv * (1.0 - g);
            f_right += 0.5 * h * fv * g;
        }
        // Gradients are ∓1/h on the element.
        let kk = a_int / (h * h);
        // Left node of the element is global node e, interior unknown e-1.
        let left = e.checked_sub(1).filter(|&j| j < n);
        let right = if e < n { Some(e) } else { None };
        if let Some(l) = left {
            diag[l] += kk;
            rhs[l] += f_left;
        }
        if let Some(r) = right {
            diag[r] += kk;
            rhs[r] += f_right;
        }
        if let (Some(l), Some(_)) = (left, right) {
            off[l] -= kk;
        }
    }
    if a_min <= 0.0 {
        return Err(Error::NotElliptic { min: a_min });
    }
    Ok(Tridiagonal { diag, off, rhs })
}

/// Thomas algorithm for a symmetric tridiagonal system.
pub fn solve_tridiagonal(sys: &Tridiagonal) -> Result<Vec<f64>> {
    let n = sys.diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = sys.diag[0];
    if denom.abs() < f64::MIN_POSITIVE {
        return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
    }
    c[0] = if n > 1 { sys.off[0] / denom } else { 0.0 };
    d[0] = sys.rhs[0] / denom;
    for i in 1..n {
        denom = sys.diag[i] - sys.off[i - 1] * c[i - 1];
        if denom.abs() < f64::MIN_POSITIVE {
            return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
        }
        c[i] = if i + 1 < n { sys.off[i] / denom } else { 0.0 };
        d[i] = (sys.rhs[i] - sys.off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Nodal FEM solution on `[0,1]` including the two boundary zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution1d {
    pub nodal: Vec<f64>,
}

impl Solution1d {
    pub fn intervals(&self) -> usize {
        self.nodal.len() - 1
    }

    /// Piecewise-linear interpolation at `z ∈ [0,1]`.
    pub fn eval(&self, z: f64) -> f64 {
        let k = self.intervals();
        let s = (z.clamp(0.0, 1.0) * k as f64).min(k as f64);
        let e = (s.floor() as usize).min(k - 1);
        let t = s - e as f64;
        (1.0 - t) * self.nodal[e] + t * self.nodal[e + 1]
    }
}

/// Solve `-(a u')' = f`, `u(0) = u(1) = 0`, at level `alpha`.
pub fn fem_solve_1d(
    alpha: u32,
    a: impl Fn(f64) -> f64,
    f: impl Fn(f64) -> f64,
) -> Result<Solution1d> {
    let k = intervals(alpha);
    let sys = assemble_1d(k, a, f)?;
    let interior = solve_tridiagonal(&sys)?;
    let mut nodal = Vec::with_capacity(k + 1);
    nodal.push(0.0);
    nodal.extend(interior);
    nodal.push(0.0);
    Ok(Solution1d { nodal })
}

/// Nine-point stencil operator on the interior nodes of a tensor grid.
///
/// `coef[u][(dj + 1) * 3 + (di + 1)]` couples unknown `u = (i, j)` with
/// `(i + di, j + dj)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil2d {
    pub n1: usize,
    pub n2: usize,
    pub coef: Vec<[f64; 9]>,
}

impl Stencil2d {
    fn zeros(n1: usize, n2: usize) -> Self {
        Stencil2d {
            n1,
            n2,
            coef: vec![[0.0; 9]; n1 * n2],
        }
    }

    pub fn unknowns(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i + self.n1 * j
    }

    /// `self + s * other`.
    pub fn axpy(&mut self, s: f64, other: &Stencil2d) {
        for (a, b) in self.coef.iter_mut().zip(&other.coef) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n1, n2) = (self.n1 as isize, self.n2 as isize);
        for j in 0..n2 {
            for i in 0..n1 {
                let u = (i + n1 * j) as usize;
                let c = &self.coef[u];
                let mut acc = 0.0;
                for dj in -1..=1 {
                    let jj = j + dj;
                    if jj < 0 || jj >= n2 {
                        continue;
                    }
                    for di in -1..=1 {
                        let ii = i + di;
                        if ii < 0 || ii >= n1 {
                            continue;
                        }
                        acc += c[((dj + 1) * 3 + (di + 1)) as usize] * x[(ii + n1 * jj) as usize];
                    }
                }
                y[u] = acc;
            }
        }
    }

    /// Dense copy, for small-grid checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.unknowns();
        let mut m = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            self.apply(&e, &mut col);
            for r in 0..n {
                m[r][c] = col[r];
            }
            e[c] = 0.0;
        }
        m
    }
}

/// Bilinear Galerkin discretization of `-∇·(a ∇u) = f` on `[0,1]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct System2d {
    pub k1: usize,
    pub k2: usize,
    pub stiffness: Stencil2d,
    pub load: Vec<f64>,
}

/// Assemble with 2×2 Gauss quadrature per element.
pub fn assemble_2d(
    k1: usize,
    k2: usize,
    a: impl Fn(f64, f64) -> f64,
    f: impl Fn(f64, f64) -> f64,
) -> Result<System2d> {
    let (sys, a_min) = assemble_2d_any_sign(k1, k2, a, f)?;
    if a_min <= 0.0 {
        return Err(Error::NotElliptic { min: a_min });
    }
    Ok(sys)
}

/// Like [`assemble_2d`] but accepts coefficients of any sign, returning the
/// smallest coefficient value seen at a quadrature point. Used for the terms
/// of an affine decomposition `a = a_0 + Σ x_j a_j`.
pub fn assemble_2d_any_sign(
    k1: usize,
    k2: usize,
    a: impl Fn(f64, f64) -> f64,
    f: impl Fn(f64, f64) -> f64,
) -> Result<(System2d, f64)> {
    if k1 == 0 || k2 == 0 {
        return Err(Error::invalid("need at least one interval per direction"));
    }
    let (n1, n2) = (k1 - 1, k2 - 1);
    let (h1, h2) = (1.0 / k1 as f64, 1.0 / k2 as f64);
    let mut st = Stencil2d::zeros(n1, n2);
    let mut load = vec![0.0; n1 * n2];
    let mut a_min = f64::INFINITY;
    let w = 0.25 * h1 * h2;
    for e2 in 0..k2 {
        for e1 in 0..k1 {
            let mut ke = [[0.0; 4]; 4];
            let mut fe = [0.0; 4];
            for &gy in &GAUSS2 {
                for &gx in &GAUSS2 {
                    let z1 = (e1 as f64 + gx) * h1;
                    let z2 = (e2 as f64 + gy) * h2;
                    let av = a(z1, z2);
                    a_min = a_min.min(av);
                    let fv = f(z1, z2);
                    let mut val = [0.0; 4];
                    let mut gr = [[0.0; 2]; 4];
                    for p in 0..4 {
                        let (pa, pb) = (p & 1, p >> 1);
                        let nx = if pa == 1 { gx } else { 1.0 - gx };
                        let ny = if pb == 1 { gy } else { 1.0 - gy };
                        let sx = if pa == 1 { 1.0 } else { -1.0 };
                        let sy = if pb == 1 { 1.0 } else { -1.0 };
                        val[p] = nx * ny;
                        gr[p] = [sx / h1 * ny, nx * sy / h2];
                    }
                    for p in 0..4 {
                        fe[p] += w * fv * val[p];
                        for q in 0..4 {
                            ke[p][q] += w * av * (gr[p][0] * gr[q][0] + gr[p][1] * gr[q][1]);
                        }
                    }
                }
            }
            for p in 0..4 {
                let gi = e1 + (p & 1);
                let gj = e2 + (p >> 1);
                if gi == 0 || gi == k1 || gj == 0 || gj == k2 {
                    continue;
                }
                let u = st.idx(gi - 1, gj - 1);
                load[u] += fe[p];
                for q in 0..4 {
                    let qi = e1 + (q & 1);
                    let qj = e2 + (q >> 1);
                    if qi == 0 || qi == k1 || qj == 0 || qj == k2 {
                        continue;
                    }
                    let di = qi as isize - gi as isize;
                    let dj = qj as isize - gj as isize;
                    st.coef[u][((dj + 1) * 3 + (di + 1)) as usize] += ke[p][q];
                }
            }
        }
    }
    Ok((
        System2d {
            k1,
            k2,
            stiffness: st,
            load,
        },
        a_min,
    ))
}

/// Symmetric positive definite band matrix in lower storage, factorized in
/// place by Cholesky.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row `r` holds `L[r][r - bw ..= r]`, left-padded with zeros.
    data: Vec<f64>,
    /// `perm[u]` = band position of stencil unknown `u`.
    perm: Vec<usize>,
}

impl BandCholesky {
    /// Factorize a stencil operator, ordering unknowns along the shorter
    /// direction first so the bandwidth is `min(n1, n2) + 1`.
    pub fn factor(st: &Stencil2d) -> Result<Self> {
        let (n1, n2) = (st.n1, st.n2);
        let n = n1 * n2;
        let swap = n1 > n2;
        let fast = if swap { n2 } else { n1 };
        let bw = if n <= 1 { 0 } else { (fast + 1).min(n - 1) };
        let mut perm = vec![0; n];
        for j in 0..n2 {
            for i in 0..n1 {
                perm[i + n1 * j] = if swap { j + n2 * i } else { i + n1 * j };
            }
        }
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        for j in 0..n2 as isize {
            for i in 0..n1 as isize {
                let u = (i + n1 as isize * j) as usize;
                let r = perm[u];
                for dj in -1..=1isize {
                    for di in -1..=1isize {
                        let (ii, jj) = (i + di, j + dj);
                        if ii < 0 || jj < 0 || ii >= n1 as isize || jj >= n2 as isize {
                            continue;
                        }
                        let c = perm[(ii + n1 as isize * jj) as usize];
                        if c > r {
                            continue;
                        }
                        let v = st.coef[u][((dj + 1) * 3 + (di + 1)) as usize];
                        data[r * w + (bw - (r - c))] = v;
                    }
                }
            }
        }
        // In-place banded Cholesky.
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            for c in lo..=r {
                let mut s = data[r * w + (bw - (r - c))];
                let klo = lo.max(c.saturating_sub(bw));
                for k in klo..c {
                    s -= data[r * w + (bw - (r - k))] * data[c * w + (bw - (c - k))];
                }
                if c == r {
                    if s <= 0.0 {
                        return Err(Error::Solver(format!(
                            "matrix not positive definite at row {r} (pivot {s})"
                        )));
                    }
                    data[r * w + bw] = s.sqrt();
                } else {
                    data[r * w + (bw - (r - c))] = s / data[c * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, data, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = vec![0.0; n];
        for (u, &r) in self.perm.iter().enumerate() {
            y[r] = rhs[u];
        }
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            let mut s = y[r];
            for k in lo..r {
                s -= self.data[r * w + (bw - (r - k))] * y[k];
            }
            y[r] = s / self.data[r * w + bw];
        }
        for r in (0..n).rev() {
            let hi = (r + bw).min(n - 1);
            let mut s = y[r];
            for k in r + 1..=hi {
                s -= self.data[k * w + (bw - (k - r))] * y[k];
            }
            y[r] = s / self.data[r * w + bw];
        }
        self.perm.iter().map(|&r| y[r]).collect()
    }
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
pub fn conjugate_gradient(st: &Stencil2d, rhs: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = st.unknowns();
    let inv_diag: Vec<f64> = st.coef.iter().map(|c| 1.0 / c[4]).collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        st.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "conjugate gradient did not converge: relative residual {}",
        norm(&r) / bnorm
    )))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Bilinear FEM function on `[0,1]²` including boundary zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution2d {
    pub k1: usize,
    pub k2: usize,
    /// `(k1 + 1) × (k2 + 1)` nodal values, `z1` fastest.
    pub nodal: Vec<f64>,
}

impl Solution2d {
    pub fn from_interior(k1: usize, k2: usize, interior: &[f64]) -> Self {
        let mut nodal = vec![0.0; (k1 + 1) * (k2 + 1)];
        for j in 1..k2 {
            for i in 1..k1 {
                nodal[i + (k1 + 1) * j] = interior[(i - 1) + (k1 - 1) * (j - 1)];
            }
        }
        Solution2d { k1, k2, nodal }
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.nodal[i + (self.k1 + 1) * j]
    }

    /// Bilinear interpolation at `(z1, z2)`.
    pub fn eval(&self, z1: f64, z2: f64) -> f64 {
        let (s1, i) = cell(z1, self.k1);
        let (s2, j) = cell(z2, self.k2);
        (1.0 - s1) * (1.0 - s2) * self.node(i, j)
            + s1 * (1.0 - s2) * self.node(i + 1, j)
            + (1.0 - s1) * s2 * self.node(i, j + 1)
            + s1 * s2 * self.node(i + 1, j + 1)
    }

    /// `‖u_h - u‖_{L²}` by 3×3 Gauss quadrature per element.
    pub fn l2_error(&self, exact: impl Fn(f64, f64) -> f64) -> f64 {
        const G3: [(f64, f64); 3] = [
            (0.112_701_665_379_258_3, 5.0 / 18.0),
            (0.5, 8.0 / 18.0),
            (0.887_298_334_620_741_7, 5.0 / 18.0),
        ];
        let (h1, h2) = (1.0 / self.k1 as f64, 1.0 / self.k2 as f64);
        let mut acc = 0.0;
        for e2 in 0..self.k2 {
            for e1 in 0..self.k1 {
                for &(gy, wy) in &G3 {
                    for &(gx, wx) in &G3 {
                        let uh = (1.0 - gx) * (1.0 - gy) * self.node(e1, e2)
                            + gx * (1.0 - gy) * self.node(e1 + 1, e2)
                            + (1.0 - gx) * gy * self.node(e1, e2 + 1)
                            + gx * gy * self.node(e1 + 1, e2 + 1);
                        let d = uh - exact((e1 as f64 + gx) * h1, (e2 as f64 + gy) * h2);
                        acc += wx * wy * h1 * h2 * d * d;
                    }
                }
            }
        }
        acc.sqrt()
    }
}

fn cell(z: f64, k: usize) -> (f64, usize) {
    let s = z.clamp(0.0, 1.0) * k as f64;
    let e = (s.floor() as usize).min(k - 1);
    (s - e as f64, e)
}

/// Solve `-∇·(a∇u) = f` at resolution `(α_1, α_2)` by banded Cholesky.
pub fn fem_solve_2d(
    alpha: (u32, u32),
    a: impl Fn(f64, f64) -> f64,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Solution2d> {
    let (k1, k2) = (intervals(alpha.0), intervals(alpha.1));
    let sys = assemble_2d(k1, k2, a, f)?;
    solve_system_2d(&sys)
}

pub fn solve_system_2d(sys: &System2d) -> Result<Solution2d> {
    if sys.stiffness.unknowns() == 0 {
        return Ok(Solution2d::from_interior(sys.k1, sys.k2, &[]));
    }
    let chol = BandCholesky::factor(&sys.stiffness)?;
    let u = chol.solve(&sys.load);
    Ok(Solution2d::from_interior(sys.k1, sys.k2, &u))
}
