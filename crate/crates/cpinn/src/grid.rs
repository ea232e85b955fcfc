//! Space-time data-site sets and the dyadic/simplicial partition of the
//! unit box `[0,1]^d x [0,T]`.
//!
//! Three site families are produced from a [`GridSpec`]:
//!
//! * [`TensorGrid`] — interior collocation sites. Spatially these are the
//!   per-cube lattices of the dyadic decomposition (points on shared cube
//!   faces appear once per touching cube, so the count is exactly
//!   `(r 2^k)^d`). Temporal anchors are `t_j = j T / m_hat`, `j = 1..m_hat`,
//!   covering `(0, T]`; the initial slice `t = 0` lives in [`InitialGrid`].
//! * [`BoundaryGrid`] — lattice points on the lateral boundary, stored
//!   deduplicated (each physical point once) with the nominal face-count
//!   formula reported separately.
//! * [`InitialGrid`] — the spatial per-cube lattice at `t = 0`.
//!
//! The simplicial machinery ([`SimplexCell`], [`kuhn_decompose`],
//! [`locate`]) splits every dyadic cube into `d!` Kuhn simplices. Cells are
//! half-open `(a, b]` along every axis so that a point on a shared facet
//! belongs to the cell with the lexicographically smallest
//! (cube index, permutation id); the bottom faces `x_i = 0`, `t = 0` are
//! absorbed by the first cells.

// indexed loops mirror the stencil formulas; clearer than iterator chains here
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Parameters of the dyadic space-time collocation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Spatial dimension, `>= 1`.
    pub d: usize,
    /// Spatial dyadic refinement level.
    pub k: u32,
    /// Temporal dyadic refinement level.
    pub kp: u32,
    /// Points per cell and axis in space, `>= 2`.
    pub r: usize,
    /// Points per cell in time, `>= 2`.
    pub rp: usize,
    /// Final time, `> 0`.
    pub t_final: f64,
}

impl GridSpec {
    pub fn new(d: usize, k: u32, kp: u32, r: usize, rp: usize, t_final: f64) -> Result<Self> {
        let spec = GridSpec {
            d,
            k,
            kp,
            r,
            rp,
            t_final,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidSpec("d must be >= 1".into()));
        }
        if self.r < 2 || self.rp < 2 {
            return Err(Error::InvalidSpec("r and r' must be >= 2".into()));
        }
        if self.t_final <= 0.0 || self.t_final.is_nan() || !self.t_final.is_finite() {
            return Err(Error::InvalidSpec("T must be positive and finite".into()));
        }
        // All derived counts must be exact integers.
        self.m_tilde_checked()?;
        self.m_hat_checked()?;
        Ok(())
    }

    /// Spatial lattice spacing `h = 2^-k / (r-1)`.
    pub fn h(&self) -> f64 {
        0.5f64.powi(self.k as i32) / (self.r as f64 - 1.0)
    }

    /// Temporal lattice spacing parameter `h' = 2^-k' / (r'-1)`.
    pub fn hp(&self) -> f64 {
        0.5f64.powi(self.kp as i32) / (self.rp as f64 - 1.0)
    }

    /// Cubes per spatial axis, `2^k`.
    pub fn cubes_per_axis(&self) -> usize {
        1usize << self.k
    }

    /// Time intervals, `2^k'`.
    pub fn time_intervals(&self) -> usize {
        1usize << self.kp
    }

    fn m_tilde_checked(&self) -> Result<usize> {
        let per_axis = self
            .r
            .checked_shl(self.k)
            .ok_or_else(|| Error::InvalidSpec("r 2^k overflows".into()))?;
        let mut m = 1usize;
        for _ in 0..self.d {
            m = m
                .checked_mul(per_axis)
                .ok_or_else(|| Error::InvalidSpec("(r 2^k)^d overflows".into()))?;
        }
        Ok(m)
    }

    fn m_hat_checked(&self) -> Result<usize> {
        self.rp
            .checked_shl(self.kp)
            .ok_or_else(|| Error::InvalidSpec("r' 2^k' overflows".into()))
    }

    /// Spatial site count `(r 2^k)^d`, counting shared-face lattice points
    /// once per touching cube.
    pub fn m_tilde(&self) -> usize {
        self.m_tilde_checked().expect("validated spec")
    }

    /// Temporal site count `r' 2^k'`.
    pub fn m_hat(&self) -> usize {
        self.m_hat_checked().expect("validated spec")
    }

    /// Nominal lateral-boundary site count `2d [r 2^k]^(d-1) [r' 2^k']`.
    ///
    /// This face-count formula double-counts edges and corners; the
    /// deduplicated count is [`BoundaryGrid::m_bar`] times `m_hat`.
    pub fn boundary_nominal(&self) -> usize {
        let per_axis = self.r << self.k;
        2 * self.d * per_axis.pow(self.d as u32 - 1) * self.m_hat()
    }

    /// Points per spatial axis of the deduplicated lattice, `(r-1) 2^k + 1`.
    pub fn lattice_axis_len(&self) -> usize {
        (self.r - 1) * (1 << self.k) + 1
    }
}

/// Interior collocation sites on `[0,1]^d x (0,T]`.
///
/// Storage is factored: `m_tilde` spatial points times `m_hat` temporal
/// anchors. Site `i = j * m_tilde + s` pairs spatial point `s` with time
/// level `j` (time-major ordering, spatial points in cube-lexicographic
/// order).
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub d: usize,
    pub m_tilde: usize,
    pub m_hat: usize,
    /// `m_tilde * d` spatial coordinates, row per point.
    pub xs: Vec<f64>,
    /// `m_hat` temporal anchors, ascending.
    pub ts: Vec<f64>,
}

impl TensorGrid {
    pub fn len(&self) -> usize {
        self.m_tilde * self.m_hat
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, site: usize) -> &[f64] {
        let s = site % self.m_tilde;
        &self.xs[s * self.d..(s + 1) * self.d]
    }

    pub fn t(&self, site: usize) -> f64 {
        self.ts[site / self.m_tilde]
    }

    /// Sample `f` at every site, time-major.
    pub fn sample(&self, mut f: impl FnMut(&[f64], f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for j in 0..self.m_hat {
            for s in 0..self.m_tilde {
                v.push(f(&self.xs[s * self.d..(s + 1) * self.d], self.ts[j]));
            }
        }
        v
    }
}

/// Lateral-boundary sites on `dOmega x (0,T]`, deduplicated.
#[derive(Debug, Clone)]
pub struct BoundaryGrid {
    pub d: usize,
    /// Deduplicated spatial boundary points per time level.
    pub m_bar: usize,
    pub m_hat: usize,
    /// Nominal space-time count `2d [r 2^k]^(d-1) [r' 2^k']`.
    pub nominal: usize,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl BoundaryGrid {
    pub fn len(&self) -> usize {
        self.m_bar * self.m_hat
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn sample(&self, mut f: impl FnMut(&[f64], f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for j in 0..self.m_hat {
            for i in 0..self.m_bar {
                v.push(f(self.x(i), self.ts[j]));
            }
        }
        v
    }
}

/// Initial-time sites on `Omega x {0}`.
#[derive(Debug, Clone)]
pub struct InitialGrid {
    pub d: usize,
    pub m_tilde: usize,
    pub xs: Vec<f64>,
}

impl InitialGrid {
    pub fn len(&self) -> usize {
        self.m_tilde
    }

    pub fn is_empty(&self) -> bool {
        self.m_tilde == 0
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        (0..self.m_tilde).map(|i| f(self.x(i))).collect()
    }
}

/// Enumerate the per-cube spatial lattice: cubes lexicographic, offsets
/// within each cube lexicographic. Coordinates are exact multiples of `h`.
fn per_cube_lattice(spec: &GridSpec) -> Vec<f64> {
    let d = spec.d;
    let cubes = spec.cubes_per_axis();
    let h = spec.h();
    let mut xs = Vec::with_capacity(spec.m_tilde() * d);
    let mut cube = vec![0usize; d];
    loop {
        let mut off = vec![0usize; d];
        loop {
            for a in 0..d {
                xs.push((cube[a] * (spec.r - 1) + off[a]) as f64 * h);
            }
            if !increment(&mut off, spec.r) {
                break;
            }
        }
        if !increment(&mut cube, cubes) {
            break;
        }
    }
    xs
}

/// Odometer increment of a multi-index with `base` states per digit.
/// The last axis varies fastest. Returns false on wrap-around.
fn increment(idx: &mut [usize], base: usize) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < base {
            return true;
        }
        idx[a] = 0;
    }
    false
}

fn temporal_anchors(spec: &GridSpec) -> Vec<f64> {
    let m_hat = spec.m_hat();
    (1..=m_hat)
        .map(|j| j as f64 * spec.t_final / m_hat as f64)
        .collect()
}

/// Interior collocation sites of the spec, `(r 2^k)^d * r' 2^k'` in total.
pub fn tensor_grid(spec: &GridSpec) -> Result<TensorGrid> {
    spec.validate()?;
    Ok(TensorGrid {
        d: spec.d,
        m_tilde: spec.m_tilde(),
        m_hat: spec.m_hat(),
        xs: per_cube_lattice(spec),
        ts: temporal_anchors(spec),
    })
}

/// Deduplicated lateral-boundary sites of the spec.
pub fn boundary_grid(spec: &GridSpec) -> Result<BoundaryGrid> {
    spec.validate()?;
    let d = spec.d;
    let n_ax = spec.lattice_axis_len();
    let h = spec.h();
    let mut xs = Vec::new();
    let mut m_bar = 0usize;
    let mut idx = vec![0usize; d];
    loop {
        if idx.iter().any(|&i| i == 0 || i == n_ax - 1) {
            for a in 0..d {
                xs.push(idx[a] as f64 * h);
            }
            m_bar += 1;
        }
        if !increment(&mut idx, n_ax) {
            break;
        }
    }
    Ok(BoundaryGrid {
        d,
        m_bar,
        m_hat: spec.m_hat(),
        nominal: spec.boundary_nominal(),
        xs,
        ts: temporal_anchors(spec),
    })
}

/// Initial-time sites: the spatial per-cube lattice at `t = 0`.
pub fn initial_grid(k: u32, r: usize, d: usize) -> Result<InitialGrid> {
    let spec = GridSpec::new(d, k, 0, r, 2, 1.0)?;
    Ok(InitialGrid {
        d,
        m_tilde: spec.m_tilde(),
        xs: per_cube_lattice(&spec),
    })
}

/// Uniform `N`-lattice site sets used by the experiment harness: one
/// closed `N^d` spatial lattice, `N` time levels `t_j = j T / N`, boundary
/// and initial sites taken from the same lattice. Bypasses the dyadic
/// parameters.
pub fn mesh_grids(d: usize, n: usize, t_final: f64) -> Result<(TensorGrid, BoundaryGrid, InitialGrid)> {
    if n < 2 {
        return Err(Error::InvalidSpec("mesh size N must be >= 2".into()));
    }
    if t_final <= 0.0 || t_final.is_nan() {
        return Err(Error::InvalidSpec("T must be positive".into()));
    }
    let step = 1.0 / (n - 1) as f64;
    let mut xs = Vec::with_capacity(n.pow(d as u32) * d);
    let mut bxs = Vec::new();
    let mut m_bar = 0usize;
    let mut idx = vec![0usize; d];
    loop {
        for a in 0..d {
            xs.push(idx[a] as f64 * step);
        }
        if idx.iter().any(|&i| i == 0 || i == n - 1) {
            for a in 0..d {
                bxs.push(idx[a] as f64 * step);
            }
            m_bar += 1;
        }
        if !increment(&mut idx, n) {
            break;
        }
    }
    let ts: Vec<f64> = (1..=n).map(|j| j as f64 * t_final / n as f64).collect();
    let m_tilde = n.pow(d as u32);
    let tensor = TensorGrid {
        d,
        m_tilde,
        m_hat: n,
        xs: xs.clone(),
        ts: ts.clone(),
    };
    let boundary = BoundaryGrid {
        d,
        m_bar,
        m_hat: n,
        nominal: 2 * d * n.pow(d as u32 - 1) * n,
        xs: bxs,
        ts,
    };
    let initial = InitialGrid { d, m_tilde, xs };
    Ok((tensor, boundary, initial))
}

/// One space-time cell of the Kuhn decomposition: a spatial simplex of a
/// dyadic cube crossed with a dyadic time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexCell {
    /// Dyadic cube index per spatial axis, each in `0 .. 2^k`.
    pub cube: Vec<usize>,
    /// Time interval index in `0 .. 2^k'`.
    pub time_idx: usize,
    /// Axis visit order defining the simplex `y_{perm[0]} >= ... >= y_{perm[d-1]}`
    /// in cube-local coordinates.
    pub perm: Vec<usize>,
    /// Lexicographic rank of `perm` among all `d!` permutations (0-based).
    pub perm_rank: usize,
    /// Spatial cube side `2^-k`.
    pub side: f64,
    /// Time interval `(t0, t1]` with `t1 - t0 = T 2^-k'`.
    pub t0: f64,
    pub t1: f64,
}

impl SimplexCell {
    /// Anchor (smallest) corner of the spatial cube.
    pub fn corner(&self) -> Vec<f64> {
        self.cube.iter().map(|&c| c as f64 * self.side).collect()
    }

    /// The `d+1` spatial vertices: the cube corner, then cumulative unit
    /// steps along `perm`.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.cube.len();
        let mut vs = Vec::with_capacity(d + 1);
        let mut v = self.corner();
        vs.push(v.clone());
        for &axis in &self.perm {
            v[axis] += self.side;
            vs.push(v.clone());
        }
        vs
    }

    /// Barycentric coordinates of `x` with respect to [`Self::vertices`].
    /// All entries are `>= 0` (up to rounding) iff `x` lies in the closed
    /// simplex, and they always sum to 1.
    pub fn barycentric(&self, x: &[f64]) -> Vec<f64> {
        let d = self.cube.len();
        let corner = self.corner();
        // sorted cube-local coordinates along the permutation
        let s: Vec<f64> = (0..d)
            .map(|j| (x[self.perm[j]] - corner[self.perm[j]]) / self.side)
            .collect();
        let mut lam = Vec::with_capacity(d + 1);
        lam.push(1.0 - s[0]);
        for j in 0..d - 1 {
            lam.push(s[j] - s[j + 1]);
        }
        lam.push(s[d - 1]);
        lam
    }

    /// Whether `(x, t)` lies in the closed cell, with slack `tol` on the
    /// barycentric coordinates and the time interval.
    pub fn contains(&self, x: &[f64], t: f64, tol: f64) -> bool {
        self.barycentric(x).iter().all(|&l| l >= -tol)
            && t >= self.t0 - tol
            && t <= self.t1 + tol
    }

    /// Simplex volume times interval length.
    pub fn volume(&self) -> f64 {
        let d = self.cube.len() as f64;
        let mut fact = 1.0;
        for i in 2..=self.cube.len() {
            fact *= i as f64;
        }
        self.side.powf(d) / fact * (self.t1 - self.t0)
    }

    /// Map a physical point to reference Kuhn coordinates
    /// `1 >= y_1 >= ... >= y_d >= 0`.
    pub fn to_reference(&self, x: &[f64]) -> Vec<f64> {
        let corner = self.corner();
        self.perm
            .iter()
            .map(|&a| (x[a] - corner[a]) / self.side)
            .collect()
    }

    /// Map reference Kuhn coordinates back to physical space.
    pub fn from_reference(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.corner();
        for (j, &a) in self.perm.iter().enumerate() {
            x[a] += self.side * y[j];
        }
        x
    }
}

/// Lexicographic rank of a permutation (Lehmer code).
pub fn perm_rank(perm: &[usize]) -> usize {
    let d = perm.len();
    let mut rank = 0usize;
    for i in 0..d {
        let smaller = perm[i + 1..].iter().filter(|&&p| p < perm[i]).count();
        rank = rank * (d - i) + smaller;
    }
    rank
}

/// All permutations of `0..d` in lexicographic order.
pub fn all_permutations(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..d).collect();
    loop {
        out.push(cur.clone());
        // next_permutation
        let Some(i) = (0..d.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..d).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// Split one dyadic cube x interval into its `d!` Kuhn cells, ordered by
/// permutation rank. The simplices tile the cube with disjoint interiors.
pub fn kuhn_decompose(spec: &GridSpec, cube: &[usize], time_idx: usize) -> Vec<SimplexCell> {
    let side = 0.5f64.powi(spec.k as i32);
    let dt = spec.t_final * 0.5f64.powi(spec.kp as i32);
    all_permutations(spec.d)
        .into_iter()
        .enumerate()
        .map(|(rank, perm)| SimplexCell {
            cube: cube.to_vec(),
            time_idx,
            perm,
            perm_rank: rank,
            side,
            t0: time_idx as f64 * dt,
            t1: (time_idx + 1) as f64 * dt,
        })
        .collect()
}

/// Iterate all spatial cube indices of the spec lexicographically.
pub fn all_cubes(spec: &GridSpec) -> Vec<Vec<usize>> {
    let cubes = spec.cubes_per_axis();
    let mut out = Vec::with_capacity(cubes.pow(spec.d as u32));
    let mut idx = vec![0usize; spec.d];
    loop {
        out.push(idx.clone());
        if !increment(&mut idx, cubes) {
            break;
        }
    }
    out
}

/// Axis index of `z` under the half-open `(a, b]` convention, clamped so
/// that `z = 0` lands in the first cell.
#[inline]
fn axis_index(z: f64, cells: usize, cell_len: f64) -> usize {
    let raw = (z / cell_len).ceil() as isize - 1;
    raw.clamp(0, cells as isize - 1) as usize
}

/// Find the cell containing `(x, t)`.
///
/// Points on shared facets resolve to the cell with the lexicographically
/// smallest (cube index, permutation id); the domain faces `x_i = 0`,
/// `t = 0` map into the first cells, `x_i = 1`, `t = T` into the last.
pub fn locate(spec: &GridSpec, x: &[f64], t: f64) -> Result<SimplexCell> {
    if x.len() != spec.d {
        return Err(Error::InvalidSpec(format!(
            "point has dimension {}, spec has {}",
            x.len(),
            spec.d
        )));
    }
    if x.iter().any(|&xi| !(0.0..=1.0).contains(&xi)) || !(0.0..=spec.t_final).contains(&t) {
        return Err(Error::OutOfDomain { x: x.to_vec(), t });
    }
    let cubes = spec.cubes_per_axis();
    let side = 0.5f64.powi(spec.k as i32);
    let cube: Vec<usize> = x.iter().map(|&xi| axis_index(xi, cubes, side)).collect();
    let dt = spec.t_final * 0.5f64.powi(spec.kp as i32);
    let time_idx = axis_index(t, spec.time_intervals(), dt);

    // Cube-local coordinates, sorted descending; ties keep ascending axis
    // order, which yields the lexicographically smallest valid permutation.
    let mut order: Vec<usize> = (0..spec.d).collect();
    let local: Vec<f64> = (0..spec.d)
        .map(|a| x[a] - cube[a] as f64 * side)
        .collect();
    order.sort_by(|&a, &b| local[b].partial_cmp(&local[a]).unwrap().then(a.cmp(&b)));
    let rank = perm_rank(&order);
    Ok(SimplexCell {
        cube,
        time_idx,
        perm: order,
        perm_rank: rank,
        side,
        t0: time_idx as f64 * dt,
        t1: (time_idx + 1) as f64 * dt,
    })
}
