//! Piecewise-polynomial Lagrange interpolation over the Kuhn decomposition.
//!
//! On every space-time cell (spatial simplex x dyadic time interval) the
//! local polynomial space is the tensor of total-degree `< r` in space and
//! degree `< r'` in time. The spatial nodes are the per-cube lattice points
//! in the closed simplex (its principal lattice); the temporal nodes are
//! the `r'` equispaced points of the closed interval. The node count
//! matches the dimension of the polynomial space, and unisolvency is
//! asserted numerically when the reference Vandermonde system is factored.
//!
//! The global interpolant evaluates by locating the query point in its
//! half-open cell ([`crate::grid::locate`]), so it is single-valued
//! everywhere on the closed box.

use crate::error::{Error, Result};
use crate::grid::{self, GridSpec, SimplexCell};
use crate::linalg::{Lu, Matrix};
use crate::seq::axis_probes;

/// Reference data for total-degree `< r` Lagrange interpolation on the
/// Kuhn reference simplex `1 >= y_1 >= ... >= y_d >= 0`, shared by all
/// cells of a grid.
#[derive(Debug, Clone)]
pub struct SimplexBasis {
    pub d: usize,
    pub r: usize,
    /// Monomial exponent rows, |alpha| < r.
    pub powers: Vec<Vec<usize>>,
    /// Principal-lattice nodes in reference coordinates (sorted descending).
    pub nodes: Vec<Vec<f64>>,
    lu: Lu,
}

fn monomial_powers(d: usize, r: usize) -> Vec<Vec<usize>> {
    // total degree < r, lexicographic in the exponent vector
    let mut out = Vec::new();
    let mut cur = vec![0usize; d];
    loop {
        if cur.iter().sum::<usize>() < r {
            out.push(cur.clone());
        }
        // odometer over {0..r-1}^d
        let mut a = d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            cur[a] += 1;
            if cur[a] < r {
                break;
            }
            cur[a] = 0;
        }
    }
}

fn principal_nodes(d: usize, r: usize) -> Vec<Vec<f64>> {
    let step = 1.0 / (r - 1) as f64;
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        if idx.windows(2).all(|w| w[0] >= w[1]) {
            out.push(idx.iter().map(|&i| i as f64 * step).collect());
        }
        let mut a = d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < r {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl SimplexBasis {
    pub fn new(d: usize, r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidSpec("r must be >= 2".into()));
        }
        let powers = monomial_powers(d, r);
        let nodes = principal_nodes(d, r);
        // node count must equal the polynomial space dimension
        if powers.len() != nodes.len() {
            return Err(Error::SingularSystem(format!(
                "node/monomial count mismatch: {} vs {}",
                nodes.len(),
                powers.len()
            )));
        }
        let n = nodes.len();
        let mut v = Matrix::zeros(n, n);
        for (i, node) in nodes.iter().enumerate() {
            for (j, alpha) in powers.iter().enumerate() {
                v.set(i, j, eval_monomial(alpha, node));
            }
        }
        let lu = Lu::factor(&v)?;
        if lu.min_pivot < 1e-10 {
            return Err(Error::SingularSystem(format!(
                "near-singular Vandermonde, min pivot {:.3e}",
                lu.min_pivot
            )));
        }
        Ok(SimplexBasis {
            d,
            r,
            powers,
            nodes,
            lu,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Polynomial coefficients (monomial basis) from nodal values.
    pub fn coeffs(&self, nodal: &[f64]) -> Vec<f64> {
        self.lu.solve(nodal)
    }

    /// Lagrange basis values at reference point `y`.
    pub fn basis_at(&self, y: &[f64]) -> Vec<f64> {
        let m: Vec<f64> = self.powers.iter().map(|a| eval_monomial(a, y)).collect();
        self.lu.solve_transposed(&m)
    }
}

fn eval_monomial(alpha: &[usize], y: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(y)
        .map(|(&a, &z)| z.powi(a as i32))
        .product()
}

fn eval_poly(powers: &[Vec<usize>], coeffs: &[f64], y: &[f64]) -> f64 {
    powers
        .iter()
        .zip(coeffs)
        .map(|(a, &c)| c * eval_monomial(a, y))
        .sum()
}

fn eval_poly_grad(powers: &[Vec<usize>], coeffs: &[f64], y: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (alpha, &c) in powers.iter().zip(coeffs) {
        for a in 0..y.len() {
            if alpha[a] == 0 {
                continue;
            }
            let mut g = c * alpha[a] as f64 * y[a].powi(alpha[a] as i32 - 1);
            for (b, &e) in alpha.iter().enumerate() {
                if b != a {
                    g *= y[b].powi(e as i32);
                }
            }
            out[a] += g;
        }
    }
}

/// Equispaced temporal Lagrange nodes of the closed interval `[t0, t1]`.
pub fn time_nodes(t0: f64, t1: f64, rp: usize) -> Vec<f64> {
    (0..rp)
        .map(|i| t0 + (t1 - t0) * i as f64 / (rp - 1) as f64)
        .collect()
}

/// 1D Lagrange basis at `t` over the given nodes.
pub fn lagrange_1d(nodes: &[f64], t: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut p = 1.0;
            for l in 0..n {
                if l != j {
                    p *= (t - nodes[l]) / (nodes[j] - nodes[l]);
                }
            }
            p
        })
        .collect()
}

/// The sample nodes of one cell: all (spatial node, temporal node) pairs,
/// spatial-major. Callers sample `f` here before [`interpolate_cell`].
pub fn cell_nodes(cell: &SimplexCell, basis: &SimplexBasis, rp: usize) -> Vec<(Vec<f64>, f64)> {
    let tn = time_nodes(cell.t0, cell.t1, rp);
    let mut out = Vec::with_capacity(basis.n_nodes() * rp);
    for node in &basis.nodes {
        let x = cell.from_reference(node);
        for &t in &tn {
            out.push((x.clone(), t));
        }
    }
    out
}

/// Local interpolating polynomial of one cell.
#[derive(Debug, Clone)]
pub struct CellInterpolant {
    pub cell: SimplexCell,
    pub rp: usize,
    basis: SimplexBasis,
    /// nodal samples, spatial-major: `samples[i * rp + j]`
    samples: Vec<f64>,
}

/// Interpolate samples given in [`cell_nodes`] order on the closed cell.
///
/// The sample count must equal the dimension of the local space
/// (spatial nodes times `r'`).
pub fn interpolate_cell(
    samples: &[f64],
    cell: &SimplexCell,
    r: usize,
    rp: usize,
) -> Result<CellInterpolant> {
    let basis = SimplexBasis::new(cell.cube.len(), r)?;
    let expected = basis.n_nodes() * rp;
    if samples.len() != expected {
        return Err(Error::Misaligned {
            expected,
            got: samples.len(),
        });
    }
    Ok(CellInterpolant {
        cell: cell.clone(),
        rp,
        basis,
        samples: samples.to_vec(),
    })
}

impl CellInterpolant {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let y = self.cell.to_reference(x);
        let psi = lagrange_1d(&time_nodes(self.cell.t0, self.cell.t1, self.rp), t);
        // contract time first, then solve for spatial coefficients
        let nodal: Vec<f64> = (0..self.basis.n_nodes())
            .map(|i| {
                (0..self.rp)
                    .map(|j| self.samples[i * self.rp + j] * psi[j])
                    .sum()
            })
            .collect();
        let c = self.basis.coeffs(&nodal);
        eval_poly(&self.basis.powers, &c, &y)
    }
}

/// The global piecewise-polynomial interpolant over all cells of a spec.
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub spec: GridSpec,
    basis: SimplexBasis,
    d_fact: usize,
    cubes_per_axis: usize,
    /// nodal samples per cell, cell-major then spatial-major then time
    values: Vec<f64>,
}

/// Build the interpolant of `f` by sampling every cell's closed node set.
pub fn build_interpolant(
    spec: &GridSpec,
    mut f: impl FnMut(&[f64], f64) -> f64,
) -> Result<Interpolant> {
    try_build_interpolant(spec, |x, t| Ok(f(x, t)))
}

/// Fallible-sampler variant; the first sampling error aborts the build.
pub fn try_build_interpolant(
    spec: &GridSpec,
    mut f: impl FnMut(&[f64], f64) -> Result<f64>,
) -> Result<Interpolant> {
    spec.validate()?;
    let basis = SimplexBasis::new(spec.d, spec.r)?;
    let d_fact: usize = (1..=spec.d).product();
    let rp = spec.rp;
    let cubes = grid::all_cubes(spec);
    let n_time = spec.time_intervals();
    let mut values = Vec::with_capacity(n_time * cubes.len() * d_fact * basis.n_nodes() * rp);
    for ti in 0..n_time {
        for cube in &cubes {
            for cell in grid::kuhn_decompose(spec, cube, ti) {
                let tn = time_nodes(cell.t0, cell.t1, rp);
                for node in &basis.nodes {
                    let x = cell.from_reference(node);
                    for &t in &tn {
                        values.push(f(&x, t)?);
                    }
                }
            }
        }
    }
    Ok(Interpolant {
        spec: *spec,
        basis,
        d_fact,
        cubes_per_axis: spec.cubes_per_axis(),
        values,
    })
}

impl Interpolant {
    fn cell_offset(&self, cell: &SimplexCell) -> usize {
        let mut cube_flat = 0usize;
        for &c in &cell.cube {
            cube_flat = cube_flat * self.cubes_per_axis + c;
        }
        let cell_idx = (cell.time_idx * self.cubes_per_axis.pow(self.spec.d as u32) + cube_flat)
            * self.d_fact
            + cell.perm_rank;
        cell_idx * self.basis.n_nodes() * self.spec.rp
    }

    /// Nodal values of the located cell contracted against the temporal
    /// Lagrange basis at `t`.
    fn nodal_at_time(&self, cell: &SimplexCell, t: f64) -> Vec<f64> {
        let off = self.cell_offset(cell);
        let rp = self.spec.rp;
        let psi = lagrange_1d(&time_nodes(cell.t0, cell.t1, rp), t);
        (0..self.basis.n_nodes())
            .map(|i| {
                (0..rp)
                    .map(|j| self.values[off + i * rp + j] * psi[j])
                    .sum()
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        let cell = grid::locate(&self.spec, x, t)?;
        let nodal = self.nodal_at_time(&cell, t);
        let c = self.basis.coeffs(&nodal);
        Ok(eval_poly(&self.basis.powers, &c, &cell.to_reference(x)))
    }

    /// Value and spatial gradient (the gradient is the broken, cellwise one).
    pub fn eval_grad(&self, x: &[f64], t: f64) -> Result<(f64, Vec<f64>)> {
        let cell = grid::locate(&self.spec, x, t)?;
        let nodal = self.nodal_at_time(&cell, t);
        let c = self.basis.coeffs(&nodal);
        let y = cell.to_reference(x);
        let value = eval_poly(&self.basis.powers, &c, &y);
        let mut gy = vec![0.0; self.spec.d];
        eval_poly_grad(&self.basis.powers, &c, &y, &mut gy);
        let mut gx = vec![0.0; self.spec.d];
        for (j, &axis) in cell.perm.iter().enumerate() {
            gx[axis] = gy[j] / cell.side;
        }
        Ok((value, gx))
    }

    /// Sum of absolute Lagrange basis products at `(x, t)`; its supremum
    /// is the Lebesgue constant of the cellwise interpolation operator.
    pub fn lebesgue_function(&self, x: &[f64], t: f64) -> Result<f64> {
        let cell = grid::locate(&self.spec, x, t)?;
        let phi = self.basis.basis_at(&cell.to_reference(x));
        let psi = lagrange_1d(&time_nodes(cell.t0, cell.t1, self.spec.rp), t);
        let sx: f64 = phi.iter().map(|v| v.abs()).sum();
        let st: f64 = psi.iter().map(|v| v.abs()).sum();
        Ok(sx * st)
    }
}

/// Max of `|f - S|` over the nested deterministic probe set with
/// `n_probe` points per axis; nondecreasing in `n_probe`.
pub fn sup_error(
    mut f: impl FnMut(&[f64], f64) -> f64,
    s: &Interpolant,
    n_probe: usize,
) -> Result<f64> {
    let d = s.spec.d;
    let axis = axis_probes(n_probe);
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; d + 1];
    let mut x = vec![0.0; d];
    loop {
        for a in 0..d {
            x[a] = axis[idx[a]];
        }
        let t = axis[idx[d]] * s.spec.t_final;
        let err = (f(&x, t) - s.eval(&x, t)?).abs();
        worst = worst.max(err);
        if !incr(&mut idx, n_probe) {
            break;
        }
    }
    Ok(worst)
}

/// Max of `|f - S|` over a uniform probe lattice restricted to a sub-box;
/// used to inspect recovery error inside small supports.
pub fn sup_error_on_box(
    mut f: impl FnMut(&[f64], f64) -> f64,
    s: &Interpolant,
    lo: (&[f64], f64),
    hi: (&[f64], f64),
    n_probe: usize,
) -> Result<f64> {
    let d = s.spec.d;
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; d + 1];
    let mut x = vec![0.0; d];
    loop {
        for a in 0..d {
            x[a] = lo.0[a] + (hi.0[a] - lo.0[a]) * idx[a] as f64 / (n_probe - 1) as f64;
        }
        let t = lo.1 + (hi.1 - lo.1) * idx[d] as f64 / (n_probe - 1) as f64;
        let err = (f(&x, t) - s.eval(&x, t)?).abs();
        worst = worst.max(err);
        if !incr(&mut idx, n_probe) {
            break;
        }
    }
    Ok(worst)
}

fn incr(idx: &mut [usize], base: usize) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < base {
            return true;
        }
        idx[a] = 0;
    }
    false
}

/// `L^tau'(0,T; L^tau(Omega))` norm of `f - S` by per-cell composite
/// midpoint quadrature with `quad_res` points per axis and cell.
/// `tau = f64::INFINITY` takes the spatial max, likewise `taup` in time.
pub fn mixed_norm_error(
    mut f: impl FnMut(&[f64], f64) -> f64,
    s: &Interpolant,
    tau: f64,
    taup: f64,
    quad_res: usize,
) -> Result<f64> {
    let spec = s.spec;
    let d = spec.d;
    let side = 0.5f64.powi(spec.k as i32);
    let hsub = side / quad_res as f64;
    let dt_cell = spec.t_final * 0.5f64.powi(spec.kp as i32);
    let tsub = dt_cell / quad_res as f64;
    let cubes = grid::all_cubes(&spec);
    let cell_vol = hsub.powi(d as i32);

    let mut time_acc = 0.0f64;
    let mut time_max = 0.0f64;
    for ti in 0..spec.time_intervals() {
        for q in 0..quad_res {
            let t = ti as f64 * dt_cell + (q as f64 + 0.5) * tsub;
            // spatial L^tau at this time
            let mut acc = 0.0f64;
            let mut mx = 0.0f64;
            for cube in &cubes {
                let mut off = vec![0usize; d];
                let mut x = vec![0.0; d];
                loop {
                    for a in 0..d {
                        x[a] = cube[a] as f64 * side + (off[a] as f64 + 0.5) * hsub;
                    }
                    let e = (f(&x, t) - s.eval(&x, t)?).abs();
                    if tau.is_finite() {
                        acc += e.powf(tau) * cell_vol;
                    } else {
                        mx = mx.max(e);
                    }
                    if !incr(&mut off, quad_res) {
                        break;
                    }
                }
            }
            let phi = if tau.is_finite() {
                acc.powf(1.0 / tau)
            } else {
                mx
            };
            if taup.is_finite() {
                time_acc += phi.powf(taup) * tsub;
            } else {
                time_max = time_max.max(phi);
            }
        }
    }
    Ok(if taup.is_finite() {
        time_acc.powf(1.0 / taup)
    } else {
        time_max
    })
}

/// Broken `L^2(0,T; H^1)` error of `f - S`: cellwise quadrature of
/// `|f - S|^2 + |grad f - grad S|^2`, gradients taken per cell.
pub fn l2h1_error(
    mut f: impl FnMut(&[f64], f64) -> f64,
    mut f_grad: impl FnMut(&[f64], f64) -> Vec<f64>,
    s: &Interpolant,
    quad_res: usize,
) -> Result<f64> {
    let spec = s.spec;
    let d = spec.d;
    let side = 0.5f64.powi(spec.k as i32);
    let hsub = side / quad_res as f64;
    let dt_cell = spec.t_final * 0.5f64.powi(spec.kp as i32);
    let tsub = dt_cell / quad_res as f64;
    let cubes = grid::all_cubes(&spec);
    let vol = hsub.powi(d as i32) * tsub;

    let mut acc = 0.0f64;
    for ti in 0..spec.time_intervals() {
        for q in 0..quad_res {
            let t = ti as f64 * dt_cell + (q as f64 + 0.5) * tsub;
            for cube in &cubes {
                let mut off = vec![0usize; d];
                let mut x = vec![0.0; d];
                loop {
                    for a in 0..d {
                        x[a] = cube[a] as f64 * side + (off[a] as f64 + 0.5) * hsub;
                    }
                    let (sv, sg) = s.eval_grad(&x, t)?;
                    let fv = f(&x, t);
                    let fg = f_grad(&x, t);
                    let mut point = (fv - sv) * (fv - sv);
                    for a in 0..d {
                        point += (fg[a] - sg[a]) * (fg[a] - sg[a]);
                    }
                    acc += point * vol;
                    if !incr(&mut off, quad_res) {
                        break;
                    }
                }
            }
        }
    }
    Ok(acc.sqrt())
}

/// Measured Lebesgue constant: sup of the Lebesgue function over the
/// deterministic probe set.
pub fn lebesgue_constant(s: &Interpolant, n_probe: usize) -> Result<f64> {
    let d = s.spec.d;
    let axis = axis_probes(n_probe);
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; d + 1];
    let mut x = vec![0.0; d];
    loop {
        for a in 0..d {
            x[a] = axis[idx[a]];
        }
        let t = axis[idx[d]] * s.spec.t_final;
        worst = worst.max(s.lebesgue_function(&x, t)?);
        if !incr(&mut idx, n_probe) {
            break;
        }
    }
    Ok(worst)
}
