//! Discrete norms evaluated from point values only, and quadrature
//! oracles for their continuous counterparts.
//!
//! Conventions, carried literally from the discretization they implement:
//!
//! * pair sums run over ordered pairs `i != j`, so each unordered pair is
//!   counted twice;
//! * the `H^{1/2}` spatial denominator uses the Euclidean distance
//!   `|x_i - x_j|` raised to the ambient dimension `d` (even though the
//!   boundary is (d-1)-dimensional — kept as written);
//! * the `H^{1/4}` numerator pairs distinct times at equal spatial points,
//!   `|g(x_i,t_j) - g(x_i,t_l)|^2 / |t_j - t_l|^{3/2}`;
//! * the combined discrete trace norm is
//!   `2 ||g||_L2L2 + |g|_H12 + |g|_H14`.
//!
//! The fractional quadrature oracles exclude a one-cell collar around the
//! singular diagonal; equivalence studies always compare discrete and
//! quadrature values at matched resolution so the collar bias cancels in
//! ratios.

// indexed loops mirror the stencil formulas; clearer than iterator chains here
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::grid::{BoundaryGrid, InitialGrid, TensorGrid};

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Misaligned { expected, got });
    }
    Ok(())
}

/// Discrete `L^2(0,T; L^tau(Omega))` norm of interior site values:
/// `[ 1/m_hat sum_j [ 1/m_tilde sum_i |v_ij|^tau ]^(2/tau) ]^(1/2)`,
/// with the inner mean replaced by a max for `tau = infinity`.
pub fn discrete_mixed(grid: &TensorGrid, values: &[f64], tau: f64) -> Result<f64> {
    check_len(grid.len(), values.len())?;
    if tau < 1.0 || tau.is_nan() {
        return Err(Error::InvalidSpec(format!("tau = {tau} must be >= 1")));
    }
    let (mt, mh) = (grid.m_tilde, grid.m_hat);
    let mut outer = 0.0f64;
    for j in 0..mh {
        let level = &values[j * mt..(j + 1) * mt];
        let inner = if tau.is_finite() {
            let mean: f64 = level.iter().map(|v| v.abs().powf(tau)).sum::<f64>() / mt as f64;
            mean.powf(2.0 / tau)
        } else {
            let mx = level.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            mx * mx
        };
        outer += inner;
    }
    Ok((outer / mh as f64).sqrt())
}

/// Discrete `L^2(0,T; L^2(dOmega))` norm of boundary site values.
pub fn discrete_boundary_l2(grid: &BoundaryGrid, values: &[f64]) -> Result<f64> {
    check_len(grid.len(), values.len())?;
    let sum: f64 = values.iter().map(|v| v * v).sum();
    Ok((sum / (grid.m_bar * grid.m_hat) as f64).sqrt())
}

/// Discrete `L^2(0,T; H^{1/2}(dOmega))` seminorm:
/// same-time pairs, denominator `|x_i - x_j|^d`.
pub fn discrete_h12_seminorm(grid: &BoundaryGrid, values: &[f64]) -> Result<f64> {
    check_len(grid.len(), values.len())?;
    let (mb, mh, d) = (grid.m_bar, grid.m_hat, grid.d);
    // pairwise inverse distances, shared across time levels
    let mut inv_dist = vec![0.0f64; mb * mb];
    for i in 0..mb {
        for j in i + 1..mb {
            let (xi, xj) = (grid.x(i), grid.x(j));
            let dist2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist2 < 1e-30 {
                return Err(Error::InvalidSpec(format!(
                    "coincident boundary points {i} and {j}"
                )));
            }
            let w = dist2.sqrt().powi(d as i32).recip();
            inv_dist[i * mb + j] = w;
            inv_dist[j * mb + i] = w;
        }
    }
    let mut acc = 0.0f64;
    for l in 0..mh {
        let level = &values[l * mb..(l + 1) * mb];
        for i in 0..mb {
            for j in i + 1..mb {
                let diff = level[i] - level[j];
                // ordered pairs count twice
                acc += 2.0 * diff * diff * inv_dist[i * mb + j];
            }
        }
    }
    Ok((acc / (mh as f64 * (mb * mb) as f64)).sqrt())
}

/// Discrete `H^{1/4}(0,T; L^2(dOmega))` seminorm:
/// same-space pairs across distinct times, denominator `|t_j - t_l|^{3/2}`.
pub fn discrete_h14_seminorm(grid: &BoundaryGrid, values: &[f64]) -> Result<f64> {
    check_len(grid.len(), values.len())?;
    let (mb, mh) = (grid.m_bar, grid.m_hat);
    let mut inv_gap = vec![0.0f64; mh * mh];
    for j in 0..mh {
        for l in j + 1..mh {
            let gap = (grid.ts[j] - grid.ts[l]).abs();
            if gap < 1e-30 {
                return Err(Error::InvalidSpec(format!(
                    "coincident time levels {j} and {l}"
                )));
            }
            let w = gap.powf(1.5).recip();
            inv_gap[j * mh + l] = w;
            inv_gap[l * mh + j] = w;
        }
    }
    let mut acc = 0.0f64;
    for j in 0..mh {
        for l in j + 1..mh {
            let w = inv_gap[j * mh + l];
            let (lj, ll) = (&values[j * mb..(j + 1) * mb], &values[l * mb..(l + 1) * mb]);
            for i in 0..mb {
                let diff = lj[i] - ll[i];
                acc += 2.0 * diff * diff * w;
            }
        }
    }
    Ok((acc / ((mh * mh) as f64 * mb as f64)).sqrt())
}

/// Discrete parabolic trace norm:
/// `2 ||g||*_{L2 L2} + |g|*_{H^{1/2}} + |g|*_{H^{1/4}}`.
pub fn discrete_h1214_norm(grid: &BoundaryGrid, values: &[f64]) -> Result<f64> {
    Ok(2.0 * discrete_boundary_l2(grid, values)?
        + discrete_h12_seminorm(grid, values)?
        + discrete_h14_seminorm(grid, values)?)
}

/// Discrete `L^2(Omega)` norm of initial site values.
pub fn discrete_initial_l2(grid: &InitialGrid, values: &[f64]) -> Result<f64> {
    check_len(grid.len(), values.len())?;
    let sum: f64 = values.iter().map(|v| v * v).sum();
    Ok((sum / grid.m_tilde as f64).sqrt())
}

/// Composite-midpoint quadrature of `||f||_{L^tau'(0,T; L^tau(Omega))}`
/// over the unit box times `[0, T]`, `res` points per axis.
pub fn quad_mixed(
    mut f: impl FnMut(&[f64], f64) -> f64,
    d: usize,
    t_final: f64,
    tau: f64,
    taup: f64,
    res: usize,
) -> f64 {
    let hx = 1.0 / res as f64;
    let ht = t_final / res as f64;
    let cell = hx.powi(d as i32);
    let mut x = vec![0.0; d];
    let mut t_acc = 0.0f64;
    let mut t_max = 0.0f64;
    for jt in 0..res {
        let t = (jt as f64 + 0.5) * ht;
        let mut acc = 0.0f64;
        let mut mx = 0.0f64;
        let mut idx = vec![0usize; d];
        loop {
            for a in 0..d {
                x[a] = (idx[a] as f64 + 0.5) * hx;
            }
            let v = f(&x, t).abs();
            if tau.is_finite() {
                acc += v.powf(tau) * cell;
            } else {
                mx = mx.max(v);
            }
            if !incr(&mut idx, res) {
                break;
            }
        }
        let phi = if tau.is_finite() {
            acc.powf(1.0 / tau)
        } else {
            mx
        };
        if taup.is_finite() {
            t_acc += phi.powf(taup) * ht;
        } else {
            t_max = t_max.max(phi);
        }
    }
    if taup.is_finite() {
        t_acc.powf(1.0 / taup)
    } else {
        t_max
    }
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

/// Midpoint sample points along the boundary of the unit square,
/// `res` per edge, with the arclength weight `4/(4 res)`.
fn square_boundary_points(res: usize) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(4 * res);
    let h = 1.0 / res as f64;
    for i in 0..res {
        let s = (i as f64 + 0.5) * h;
        pts.push([s, 0.0]);
        pts.push([1.0, s]);
        pts.push([1.0 - s, 1.0]);
        pts.push([0.0, 1.0 - s]);
    }
    pts
}

/// Quadrature oracle for the continuous `L^2(0,T; H^{1/2}(dOmega))`
/// seminorm on the unit square (`d = 2` only): double boundary integral
/// with a one-cell collar excluded around the diagonal. `res` counts
/// points per edge, `res_t` time points.
pub fn quad_h12_seminorm(
    mut g: impl FnMut(&[f64], f64) -> f64,
    t_final: f64,
    res: usize,
    res_t: usize,
) -> Result<f64> {
    if res < 2 || res_t < 1 {
        return Err(Error::InvalidSpec("res must be >= 2, res_t >= 1".into()));
    }
    let pts = square_boundary_points(res);
    let ds = 1.0 / res as f64;
    let dt = t_final / res_t as f64;
    let collar = ds;
    let mut acc = 0.0f64;
    for jt in 0..res_t {
        let t = (jt as f64 + 0.5) * dt;
        let vals: Vec<f64> = pts.iter().map(|p| g(p, t)).collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let dx = pts[i][0] - pts[j][0];
                let dy = pts[i][1] - pts[j][1];
                let dist = (dx * dx + dy * dy).sqrt();
                if dist <= collar {
                    continue;
                }
                let diff = vals[i] - vals[j];
                acc += 2.0 * diff * diff / dist.powi(2) * ds * ds * dt;
            }
        }
    }
    Ok(acc.sqrt())
}

/// Quadrature oracle for the continuous `H^{1/4}(0,T; L^2(dOmega))`
/// seminorm on the unit square: double time integral with a one-cell
/// collar excluded. `res` counts points per edge, `res_t` time points.
pub fn quad_h14_seminorm(
    mut g: impl FnMut(&[f64], f64) -> f64,
    t_final: f64,
    res: usize,
    res_t: usize,
) -> Result<f64> {
    if res < 2 || res_t < 2 {
        return Err(Error::InvalidSpec("res must be >= 2, res_t >= 2".into()));
    }
    let pts = square_boundary_points(res);
    let ds = 1.0 / res as f64;
    let dt = t_final / res_t as f64;
    let collar = dt;
    let times: Vec<f64> = (0..res_t).map(|j| (j as f64 + 0.5) * dt).collect();
    let table: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| pts.iter().map(|p| g(p, t)).collect())
        .collect();
    let mut acc = 0.0f64;
    for j in 0..res_t {
        for l in j + 1..res_t {
            let gap = times[l] - times[j];
            if gap <= collar {
                continue;
            }
            let w = gap.powf(1.5).recip();
            for i in 0..pts.len() {
                let diff = table[j][i] - table[l][i];
                acc += 2.0 * diff * diff * w * ds * dt * dt;
            }
        }
    }
    Ok(acc.sqrt())
}

/// Quadrature of the boundary `L^2(0,T; L^2(dOmega))` norm on the unit
/// square.
pub fn quad_boundary_l2(
    mut g: impl FnMut(&[f64], f64) -> f64,
    t_final: f64,
    res: usize,
    res_t: usize,
) -> f64 {
    let pts = square_boundary_points(res);
    let ds = 1.0 / res as f64;
    let dt = t_final / res_t as f64;
    let mut acc = 0.0f64;
    for jt in 0..res_t {
        let t = (jt as f64 + 0.5) * dt;
        for p in &pts {
            let v = g(p, t);
            acc += v * v * ds * dt;
        }
    }
    acc.sqrt()
}

/// Quadrature counterpart of [`discrete_h1214_norm`] at resolution `res`.
pub fn quad_h1214_norm(
    mut g: impl FnMut(&[f64], f64) -> f64,
    t_final: f64,
    res: usize,
    res_t: usize,
) -> Result<f64> {
    Ok(2.0 * quad_boundary_l2(&mut g, t_final, res, res_t)
        + quad_h12_seminorm(&mut g, t_final, res, res_t)?
        + quad_h14_seminorm(&mut g, t_final, res, res_t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{self, GridSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_boundary(m_bar: usize, m_hat: usize, xs: Vec<f64>, ts: Vec<f64>, d: usize) -> BoundaryGrid {
        BoundaryGrid {
            d,
            m_bar,
            m_hat,
            nominal: m_bar * m_hat,
            xs,
            ts,
        }
    }

    #[test]
    fn mixed_norm_of_constants() {
        let g = grid::tensor_grid(&GridSpec::new(2, 1, 1, 2, 2, 1.0).unwrap()).unwrap();
        let v = vec![-2.5; g.len()];
        for tau in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_relative_eq!(discrete_mixed(&g, &v, tau).unwrap(), 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixed_norm_hand_values() {
        // one time level, values (3, 4), tau = 2 -> sqrt(25/2)
        let g = TensorGrid {
            d: 1,
            m_tilde: 2,
            m_hat: 1,
            xs: vec![0.0, 1.0],
            ts: vec![1.0],
        };
        assert_relative_eq!(
            discrete_mixed(&g, &[3.0, 4.0], 2.0).unwrap(),
            (25.0f64 / 2.0).sqrt(),
            epsilon = 1e-12
        );
        // tau = inf, levels (1,2) and (0,5) -> sqrt((4 + 25)/2)
        let g = TensorGrid {
            d: 1,
            m_tilde: 2,
            m_hat: 2,
            xs: vec![0.0, 1.0],
            ts: vec![0.5, 1.0],
        };
        assert_relative_eq!(
            discrete_mixed(&g, &[1.0, 2.0, 0.0, 5.0], f64::INFINITY).unwrap(),
            (29.0f64 / 2.0).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn mixed_norm_rejects_misalignment_and_bad_tau() {
        let g = grid::tensor_grid(&GridSpec::new(1, 0, 0, 2, 2, 1.0).unwrap()).unwrap();
        assert!(discrete_mixed(&g, &[1.0], 2.0).is_err());
        assert!(discrete_mixed(&g, &vec![1.0; g.len()], 0.5).is_err());
    }

    #[test]
    fn boundary_l2_hand_values() {
        let g = grid::boundary_grid(&GridSpec::new(2, 0, 0, 2, 2, 1.0).unwrap()).unwrap();
        let ones = vec![1.0; g.len()];
        assert_relative_eq!(discrete_boundary_l2(&g, &ones).unwrap(), 1.0, epsilon = 1e-14);
        let zeros = vec![0.0; g.len()];
        assert_eq!(discrete_boundary_l2(&g, &zeros).unwrap(), 0.0);
        let alternating: Vec<f64> = (0..g.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_relative_eq!(
            discrete_boundary_l2(&g, &alternating).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn h12_hand_value() {
        // d=2, one time level, two boundary points at distance 1 with
        // values 0, 1: sqrt(2 / (1 * 4 * 1)) = sqrt(1/2)
        let g = tiny_boundary(2, 1, vec![0.0, 0.0, 1.0, 0.0], vec![1.0], 2);
        let got = discrete_h12_seminorm(&g, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(got, 0.5f64.sqrt(), epsilon = 1e-14);
        // constants vanish
        assert_eq!(discrete_h12_seminorm(&g, &[3.0, 3.0]).unwrap(), 0.0);
        // homogeneity
        let doubled = discrete_h12_seminorm(&g, &[0.0, 2.0]).unwrap();
        assert_relative_eq!(doubled, 2.0 * got, epsilon = 1e-14);
    }

    #[test]
    fn h14_hand_value() {
        // one spatial point, two times at gap 1, values 0, 1:
        // sqrt((1 + 1) / (m_hat^2 * m_bar)) = sqrt(2/4)
        let g = tiny_boundary(1, 2, vec![0.0, 0.0], vec![0.0, 1.0], 2);
        let got = discrete_h14_seminorm(&g, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(got, (2.0f64 / 4.0).sqrt(), epsilon = 1e-14);
        // time-constant data vanish
        assert_eq!(discrete_h14_seminorm(&g, &[5.0, 5.0]).unwrap(), 0.0);
        let tripled = discrete_h14_seminorm(&g, &[0.0, 3.0]).unwrap();
        assert_relative_eq!(tripled, 3.0 * got, epsilon = 1e-14);
    }

    #[test]
    fn h1214_is_the_sum_of_components() {
        let spec = GridSpec::new(2, 1, 1, 2, 2, 1.0).unwrap();
        let g = grid::boundary_grid(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let total = discrete_h1214_norm(&g, &v).unwrap();
        let parts = 2.0 * discrete_boundary_l2(&g, &v).unwrap()
            + discrete_h12_seminorm(&g, &v).unwrap()
            + discrete_h14_seminorm(&g, &v).unwrap();
        assert_relative_eq!(total, parts, epsilon = 1e-14);
        // g = 0 -> 0; g = 1 -> 2 (seminorms vanish on constants)
        assert_eq!(discrete_h1214_norm(&g, &vec![0.0; g.len()]).unwrap(), 0.0);
        assert_relative_eq!(
            discrete_h1214_norm(&g, &vec![1.0; g.len()]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn initial_l2_hand_values() {
        let g = grid::initial_grid(0, 2, 2).unwrap();
        assert_relative_eq!(
            discrete_initial_l2(&g, &[-3.0; 4]).unwrap(),
            3.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            discrete_initial_l2(&g, &[0.0, 0.0, 0.0, 2.0]).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let single = discrete_initial_l2(&g, &[0.2, -0.4, 1.0, 0.6]).unwrap();
        let scaled = discrete_initial_l2(&g, &[0.5, -1.0, 2.5, 1.5]).unwrap();
        assert_relative_eq!(scaled, 2.5 * single, epsilon = 1e-13);
    }

    #[test]
    fn norm_axioms_on_random_vectors() {
        // nonnegativity, absolute homogeneity, triangle inequality
        let spec = GridSpec::new(2, 1, 1, 2, 2, 1.0).unwrap();
        let tg = grid::tensor_grid(&spec).unwrap();
        let bg = grid::boundary_grid(&spec).unwrap();
        let ig = grid::initial_grid(1, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let alpha: f64 = rng.gen_range(-3.0..3.0);
            let u: Vec<f64> = (0..tg.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..tg.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tau = [1.0, 2.0, 4.0, f64::INFINITY][rng.gen_range(0..4)];
            let nu = discrete_mixed(&tg, &u, tau).unwrap();
            let nv = discrete_mixed(&tg, &v, tau).unwrap();
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let nsum = discrete_mixed(&tg, &sum, tau).unwrap();
            assert!(nu >= 0.0 && nsum <= nu + nv + 1e-12);
            let au: Vec<f64> = u.iter().map(|a| alpha * a).collect();
            assert_relative_eq!(
                discrete_mixed(&tg, &au, tau).unwrap(),
                alpha.abs() * nu,
                epsilon = 1e-12,
                max_relative = 1e-12
            );

            let ub: Vec<f64> = (0..bg.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vb: Vec<f64> = (0..bg.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nb = discrete_h1214_norm(&bg, &ub).unwrap();
            let nvb = discrete_h1214_norm(&bg, &vb).unwrap();
            let sb: Vec<f64> = ub.iter().zip(&vb).map(|(a, b)| a + b).collect();
            assert!(discrete_h1214_norm(&bg, &sb).unwrap() <= nb + nvb + 1e-12);

            let ui: Vec<f64> = (0..ig.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vi: Vec<f64> = (0..ig.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ni = discrete_initial_l2(&ig, &ui).unwrap();
            let nvi = discrete_initial_l2(&ig, &vi).unwrap();
            let si: Vec<f64> = ui.iter().zip(&vi).map(|(a, b)| a + b).collect();
            assert!(discrete_initial_l2(&ig, &si).unwrap() <= ni + nvi + 1e-12);
        }
    }

    #[test]
    fn components_invariant_under_level_permutation() {
        // relabeling (point, value) pairs within a time level leaves
        // every discrete norm unchanged
        let spec = GridSpec::new(2, 1, 1, 2, 2, 1.0).unwrap();
        let bg = grid::boundary_grid(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let v: Vec<f64> = (0..bg.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // build the permuted grid: reverse the point order
        let perm: Vec<usize> = (0..bg.m_bar).rev().collect();
        let mut xs2 = Vec::with_capacity(bg.xs.len());
        for &i in &perm {
            xs2.extend_from_slice(bg.x(i));
        }
        let bg2 = tiny_boundary(bg.m_bar, bg.m_hat, xs2, bg.ts.clone(), 2);
        let mut v2 = vec![0.0; v.len()];
        for l in 0..bg.m_hat {
            for (new_i, &old_i) in perm.iter().enumerate() {
                v2[l * bg.m_bar + new_i] = v[l * bg.m_bar + old_i];
            }
        }
        assert_relative_eq!(
            discrete_h1214_norm(&bg, &v).unwrap(),
            discrete_h1214_norm(&bg2, &v2).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn quad_mixed_analytic_values() {
        // constant 1 with tau' = 2 integrates to sqrt(T)
        let v = quad_mixed(|_, _| 1.0, 2, 4.0, 2.0, 2.0, 16);
        assert_relative_eq!(v, 2.0, max_relative = 1e-12);
        // sin(pi x) in d=1, tau=2: ||sin||_{L2(0,1)} = sqrt(1/2) per time
        let pi = std::f64::consts::PI;
        let v = quad_mixed(|x, _| (pi * x[0]).sin(), 1, 1.0, 2.0, 2.0, 256);
        assert_relative_eq!(v, 0.5f64.sqrt(), max_relative = 1e-4);
        assert_eq!(quad_mixed(|_, _| 0.0, 2, 1.0, 2.0, 2.0, 8), 0.0);
    }

    #[test]
    fn quad_h12_constant_and_homogeneity() {
        assert_eq!(quad_h12_seminorm(|_, _| 2.0, 1.0, 16, 16).unwrap(), 0.0);
        let g = |x: &[f64], _t: f64| x[0] + 0.5 * x[1];
        let a = quad_h12_seminorm(g, 1.0, 24, 24).unwrap();
        let b = quad_h12_seminorm(|x, t| 2.0 * g(x, t), 1.0, 24, 24).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn quad_h14_matches_closed_form() {
        // g(x,t) = t: int_0^1 int_0^1 |t-s|^2 / |t-s|^{3/2} dt ds = 8/15,
        // times the boundary length 4
        let v = quad_h14_seminorm(|_, t| t, 1.0, 192, 192).unwrap();
        let want = (4.0f64 * 8.0 / 15.0).sqrt();
        assert_relative_eq!(v, want, max_relative = 0.02);
        // time-constant -> 0
        assert_eq!(quad_h14_seminorm(|x, _| x[0], 1.0, 16, 16).unwrap(), 0.0);
    }

    #[test]
    fn quad_h12_matches_dense_oracle_for_edge_profile() {
        // piecewise-linear-in-arclength tent profile (continuous around
        // the perimeter loop): the quadrature at moderate resolution must
        // agree with a much denser evaluation
        let g = |x: &[f64], _t: f64| {
            let s = if x[1] == 0.0 {
                x[0]
            } else if x[0] == 1.0 {
                1.0 + x[1]
            } else if x[1] == 1.0 {
                3.0 - x[0]
            } else {
                4.0 - x[1]
            };
            s.min(4.0 - s)
        };
        let coarse = quad_h12_seminorm(g, 1.0, 48, 48).unwrap();
        let dense = quad_h12_seminorm(g, 1.0, 96, 96).unwrap();
        assert_relative_eq!(coarse, dense, max_relative = 0.02);
    }

    #[test]
    fn piecewise_polynomial_trace_ratio_is_level_stable() {
        // trace of a cellwise interpolant: the discrete/quad seminorm
        // ratios at matched resolution stay within +-50% across levels
        let pi = std::f64::consts::PI;
        let v = |x: &[f64], t: f64| (pi * x[0]).sin() * (0.7 * pi * x[1]).cos() * (1.0 - 0.4 * t);
        let mut h12_ratios = Vec::new();
        let mut h14_ratios = Vec::new();
        for k in 2..=4u32 {
            let spec = GridSpec::new(2, k, k, 2, 2, 1.0).unwrap();
            let s_int = crate::interp::build_interpolant(&spec, v).unwrap();
            let g = |x: &[f64], t: f64| s_int.eval(x, t).unwrap();
            let bg = grid::boundary_grid(&spec).unwrap();
            let vals = bg.sample(g);
            let res_edge = spec.lattice_axis_len() - 1;
            let res_t = bg.m_hat;
            let d12 = discrete_h12_seminorm(&bg, &vals).unwrap();
            let q12 = quad_h12_seminorm(g, 1.0, res_edge, res_t).unwrap();
            let d14 = discrete_h14_seminorm(&bg, &vals).unwrap();
            let q14 = quad_h14_seminorm(g, 1.0, res_edge, res_t).unwrap();
            h12_ratios.push(d12 / q12);
            h14_ratios.push(d14 / q14);
        }
        for ratios in [h12_ratios, h14_ratios] {
            let med = {
                let mut r = ratios.clone();
                r.sort_by(|a, b| a.partial_cmp(b).unwrap());
                r[r.len() / 2]
            };
            for r in &ratios {
                assert!(
                    (r / med - 1.0).abs() < 0.5,
                    "ratio {r} strays from median {med}: {ratios:?}"
                );
            }
        }
    }

    #[test]
    fn discrete_mixed_converges_to_quadrature() {
        // smooth f: the discrete mixed norm approaches the continuous one
        let pi = std::f64::consts::PI;
        let f = |x: &[f64], t: f64| (pi * x[0]).sin() * (pi * x[1]).sin() * t.cos();
        let reference = quad_mixed(f, 2, 1.0, 2.0, 2.0, 128);
        let mut diffs = Vec::new();
        for k in 1..=4u32 {
            let spec = GridSpec::new(2, k, k, 2, 2, 1.0).unwrap();
            let g = grid::tensor_grid(&spec).unwrap();
            let vals = g.sample(f);
            let disc = discrete_mixed(&g, &vals, 2.0).unwrap();
            diffs.push((disc - reference).abs());
        }
        let levels: Vec<f64> = (1..=4).map(|k| k as f64).collect();
        let slope = crate::besov::rate_fit(&levels, &diffs).unwrap();
        assert!(slope < -0.5, "slope = {slope}, diffs = {diffs:?}");
    }
}
