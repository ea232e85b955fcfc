//! Collocation losses assembled from the discrete norms and field jets:
//! the classical squared loss, the consistent squared loss, and the
//! unsquared consistent loss, each with a per-term breakdown.
//!
//! Every loss sees the trial function only through point evaluations of
//! its jet (value, time derivative, spatial Laplacian) at the data sites,
//! so any [`Field`] can be scored; gradients are available for
//! [`MlpNetwork`] trial functions through the [`SiteLoss`] adapter.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{BoundaryGrid, InitialGrid, TensorGrid};
use crate::network::{SeedBuf, SiteEvals, SiteLoss};
use crate::norms;
use serde::Serialize;
use std::sync::Arc;

/// Sampled problem data: source, boundary, and initial values aligned to
/// their site sets, plus an optional exact solution for error reporting.
#[derive(Clone)]
pub struct ProblemData {
    pub tensor: TensorGrid,
    pub boundary: BoundaryGrid,
    pub initial: InitialGrid,
    /// `f` at the interior sites, time-major.
    pub f_values: Vec<f64>,
    /// `g` at the boundary sites, time-major.
    pub g_values: Vec<f64>,
    /// `u0` at the initial sites.
    pub u0_values: Vec<f64>,
    pub exact: Option<Arc<dyn Field + Send + Sync>>,
}

impl ProblemData {
    /// Sample `(f, g, u0)` from closures.
    pub fn from_closures(
        tensor: TensorGrid,
        boundary: BoundaryGrid,
        initial: InitialGrid,
        mut f: impl FnMut(&[f64], f64) -> f64,
        mut g: impl FnMut(&[f64], f64) -> f64,
        mut u0: impl FnMut(&[f64]) -> f64,
    ) -> Self {
        let f_values = tensor.sample(&mut f);
        let g_values = boundary.sample(&mut g);
        let u0_values = initial.sample(&mut u0);
        ProblemData {
            tensor,
            boundary,
            initial,
            f_values,
            g_values,
            u0_values,
            exact: None,
        }
    }

    /// Manufacture consistent data from an exact solution: the source is
    /// `u_t - lap(u)`, boundary and initial data are traces of `u`.
    pub fn manufactured_from<F: Field + Send + Sync + 'static>(
        tensor: TensorGrid,
        boundary: BoundaryGrid,
        initial: InitialGrid,
        u: Arc<F>,
    ) -> Self {
        let f_values = tensor.sample(|x, t| {
            let j = u.jet(x, t);
            j.dt - j.laplacian
        });
        let g_values = boundary.sample(|x, t| u.value(x, t));
        let u0_values = initial.sample(|x| u.value(x, 0.0));
        ProblemData {
            tensor,
            boundary,
            initial,
            f_values,
            g_values,
            u0_values,
            exact: Some(u),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (want, got) in [
            (self.tensor.len(), self.f_values.len()),
            (self.boundary.len(), self.g_values.len()),
            (self.initial.len(), self.u0_values.len()),
        ] {
            if want != got {
                return Err(Error::Misaligned {
                    expected: want,
                    got,
                });
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.tensor.d
    }
}

/// Which training loss to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Pinn,
    Cpinn,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<LossKind> {
        match s {
            "pinn" => Ok(LossKind::Pinn),
            "cpinn" => Ok(LossKind::Cpinn),
            other => Err(Error::InvalidSpec(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Per-term decomposition of a loss value.
///
/// Each field stores the term exactly as it enters `total` (the boundary
/// `L^2` term carries its coefficient 2 for the consistent losses, the
/// interior term of the unsquared loss is stored without the logarithmic
/// prefactor, which lives in `log_factor`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub interior: f64,
    pub boundary_l2: f64,
    pub boundary_h12: f64,
    pub boundary_h14: f64,
    pub initial: f64,
    pub log_factor: f64,
    pub total: f64,
}

fn require_finite(label: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{label} = {v}")))
    }
}

/// Interior residuals `lap v + f - v_t`, boundary mismatches `v - g`, and
/// initial mismatches `v - u0` of a field at the data sites.
fn mismatches(v: &dyn Field, data: &ProblemData) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    data.validate()?;
    let mut residuals = Vec::with_capacity(data.tensor.len());
    for (i, fv) in data.f_values.iter().enumerate() {
        let j = v.jet(data.tensor.x(i), data.tensor.t(i));
        residuals.push(require_finite("interior residual", j.laplacian + fv - j.dt)?);
    }
    let mut bdiffs = Vec::with_capacity(data.boundary.len());
    for l in 0..data.boundary.m_hat {
        for i in 0..data.boundary.m_bar {
            let idx = l * data.boundary.m_bar + i;
            let val = v.value(data.boundary.x(i), data.boundary.ts[l]);
            bdiffs.push(require_finite("boundary value", val - data.g_values[idx])?);
        }
    }
    let mut idiffs = Vec::with_capacity(data.initial.len());
    for i in 0..data.initial.len() {
        let val = v.value(data.initial.x(i), 0.0);
        idiffs.push(require_finite("initial value", val - data.u0_values[i])?);
    }
    Ok((residuals, bdiffs, idiffs))
}

/// Mean of squares computed level-by-level, matching the nested order of
/// the discrete mixed norm so that the two interior terms coincide
/// exactly at `gamma = 2`.
fn nested_mean_sq(values: &[f64], per_level: usize, levels: usize) -> f64 {
    let mut outer = 0.0;
    for j in 0..levels {
        let level = &values[j * per_level..(j + 1) * per_level];
        outer += level.iter().map(|r| r * r).sum::<f64>() / per_level as f64;
    }
    outer / levels as f64
}

/// Classical squared collocation loss: mean squared interior residual
/// plus mean squared boundary and initial mismatches (unit weights).
pub fn pinn_loss(v: &dyn Field, data: &ProblemData) -> Result<LossBreakdown> {
    let (residuals, bdiffs, idiffs) = mismatches(v, data)?;
    Ok(pinn_terms(data, &residuals, &bdiffs, &idiffs))
}

fn pinn_terms(
    data: &ProblemData,
    residuals: &[f64],
    bdiffs: &[f64],
    idiffs: &[f64],
) -> LossBreakdown {
    let interior = nested_mean_sq(residuals, data.tensor.m_tilde, data.tensor.m_hat);
    let boundary_l2 =
        bdiffs.iter().map(|e| e * e).sum::<f64>() / (data.boundary.m_bar * data.boundary.m_hat) as f64;
    let initial = idiffs.iter().map(|e| e * e).sum::<f64>() / data.initial.len() as f64;
    LossBreakdown {
        interior,
        boundary_l2,
        boundary_h12: 0.0,
        boundary_h14: 0.0,
        initial,
        log_factor: 1.0,
        total: interior + boundary_l2 + initial,
    }
}

/// Exponent of the interior norm: `2d/(d+2)` for `d >= 3`, and the
/// mesh-dependent `1 + 1/log(m_tilde)` for `d = 2` (natural log).
pub fn default_gamma(d: usize, m_tilde: usize) -> Result<f64> {
    match d {
        0 | 1 => Err(Error::InvalidSpec("gamma rule needs d >= 2".into())),
        2 => {
            if m_tilde < 3 {
                return Err(Error::InvalidSpec(
                    "d = 2 needs m_tilde >= 3 for the log factor".into(),
                ));
            }
            Ok(1.0 + 1.0 / (m_tilde as f64).ln())
        }
        _ => Ok(2.0 * d as f64 / (d as f64 + 2.0)),
    }
}

/// Consistent squared loss: squared discrete mixed norm of the residual
/// (exponent `gamma`), boundary `L^2` term with coefficient 2, squared
/// discrete `H^{1/2}` and `H^{1/4}` seminorms of the boundary mismatch,
/// and the squared discrete initial `L^2` norm.
pub fn cpinn_loss_sq(v: &dyn Field, data: &ProblemData, gamma: f64) -> Result<LossBreakdown> {
    let (residuals, bdiffs, idiffs) = mismatches(v, data)?;
    cpinn_terms(data, &residuals, &bdiffs, &idiffs, gamma)
}

fn cpinn_terms(
    data: &ProblemData,
    residuals: &[f64],
    bdiffs: &[f64],
    idiffs: &[f64],
    gamma: f64,
) -> Result<LossBreakdown> {
    if gamma < 1.0 || gamma.is_nan() {
        return Err(Error::InvalidSpec(format!("gamma = {gamma} must be >= 1")));
    }
    let interior = if gamma == 2.0 {
        // identical arithmetic to the classical interior term
        nested_mean_sq(residuals, data.tensor.m_tilde, data.tensor.m_hat)
    } else {
        let n = norms::discrete_mixed(&data.tensor, residuals, gamma)?;
        n * n
    };
    let bl2 = norms::discrete_boundary_l2(&data.boundary, bdiffs)?;
    let boundary_l2 = 2.0 * bl2 * bl2;
    let h12 = norms::discrete_h12_seminorm(&data.boundary, bdiffs)?;
    let h14 = norms::discrete_h14_seminorm(&data.boundary, bdiffs)?;
    let init = norms::discrete_initial_l2(&data.initial, idiffs)?;
    let breakdown = LossBreakdown {
        interior,
        boundary_l2,
        boundary_h12: h12 * h12,
        boundary_h14: h14 * h14,
        initial: init * init,
        log_factor: 1.0,
        total: interior + boundary_l2 + h12 * h12 + h14 * h14 + init * init,
    };
    require_finite("cpinn loss", breakdown.total)?;
    Ok(breakdown)
}

/// Options for the unsquared consistent loss.
#[derive(Debug, Clone, Copy)]
pub struct LStarOptions {
    /// Interior exponent; `None` applies the dimension rule.
    pub gamma: Option<f64>,
    /// Keep the initial-data term (on by default; switching it off
    /// reproduces the two-term form exactly).
    pub include_initial: bool,
    /// Apply the `1 + log(m_tilde)` prefactor in `d = 2`.
    pub log_prefactor: bool,
}

impl Default for LStarOptions {
    fn default() -> Self {
        LStarOptions {
            gamma: None,
            include_initial: true,
            log_prefactor: true,
        }
    }
}

/// Unsquared consistent loss: (optionally log-weighted) discrete mixed
/// norm of the residual plus the discrete trace norm of the boundary
/// mismatch, plus the discrete initial `L^2` term unless disabled.
pub fn l_star(v: &dyn Field, data: &ProblemData, opts: LStarOptions) -> Result<LossBreakdown> {
    let d = data.d();
    if d < 2 {
        return Err(Error::InvalidSpec("the consistent loss needs d >= 2".into()));
    }
    let gamma = match opts.gamma {
        Some(g) => g,
        None => default_gamma(d, data.tensor.m_tilde)?,
    };
    let (residuals, bdiffs, idiffs) = mismatches(v, data)?;
    let interior = norms::discrete_mixed(&data.tensor, &residuals, gamma)?;
    let boundary_l2 = 2.0 * norms::discrete_boundary_l2(&data.boundary, &bdiffs)?;
    let boundary_h12 = norms::discrete_h12_seminorm(&data.boundary, &bdiffs)?;
    let boundary_h14 = norms::discrete_h14_seminorm(&data.boundary, &bdiffs)?;
    let initial = if opts.include_initial {
        norms::discrete_initial_l2(&data.initial, &idiffs)?
    } else {
        0.0
    };
    let log_factor = if d == 2 && opts.log_prefactor {
        if data.tensor.m_tilde < 3 {
            return Err(Error::InvalidSpec(
                "d = 2 needs m_tilde >= 3 for the log factor".into(),
            ));
        }
        1.0 + (data.tensor.m_tilde as f64).ln()
    } else {
        1.0
    };
    let total = log_factor * interior + boundary_l2 + boundary_h12 + boundary_h14 + initial;
    require_finite("l_star", total)?;
    Ok(LossBreakdown {
        interior,
        boundary_l2,
        boundary_h12,
        boundary_h14,
        initial,
        log_factor,
        total,
    })
}

/// Site-loss adapter for training: evaluates the chosen squared loss and
/// its adjoint seeds from network site evaluations.
pub struct CollocationLoss<'a> {
    data: &'a ProblemData,
    kind: LossKind,
    gamma: f64,
    sites: Vec<f64>,
    n_int: usize,
    n_b: usize,
}

impl<'a> CollocationLoss<'a> {
    pub fn new(data: &'a ProblemData, kind: LossKind, gamma: Option<f64>) -> Result<Self> {
        data.validate()?;
        let d = data.d();
        let dim = d + 1;
        let gamma = match (kind, gamma) {
            (LossKind::Pinn, _) => 2.0,
            (LossKind::Cpinn, Some(g)) => g,
            (LossKind::Cpinn, None) => default_gamma(d, data.tensor.m_tilde)?,
        };
        let n_int = data.tensor.len();
        let n_b = data.boundary.len();
        let n_0 = data.initial.len();
        let mut sites = Vec::with_capacity((n_int + n_b + n_0) * dim);
        for i in 0..n_int {
            sites.extend_from_slice(data.tensor.x(i));
            sites.push(data.tensor.t(i));
        }
        for l in 0..data.boundary.m_hat {
            for i in 0..data.boundary.m_bar {
                sites.extend_from_slice(data.boundary.x(i));
                sites.push(data.boundary.ts[l]);
            }
        }
        for i in 0..n_0 {
            sites.extend_from_slice(data.initial.x(i));
            sites.push(0.0);
        }
        Ok(CollocationLoss {
            data,
            kind,
            gamma,
            sites,
            n_int,
            n_b,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Breakdown from precomputed mismatch vectors.
    fn terms(&self, residuals: &[f64], bdiffs: &[f64], idiffs: &[f64]) -> Result<LossBreakdown> {
        match self.kind {
            LossKind::Pinn => Ok(pinn_terms(self.data, residuals, bdiffs, idiffs)),
            LossKind::Cpinn => cpinn_terms(self.data, residuals, bdiffs, idiffs, self.gamma),
        }
    }

    /// Derivatives of the loss with respect to each residual/mismatch.
    fn mismatch_seeds(
        &self,
        residuals: &[f64],
        bdiffs: &[f64],
        idiffs: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let data = self.data;
        let (mt, mh) = (data.tensor.m_tilde, data.tensor.m_hat);
        let (mb, bh) = (data.boundary.m_bar, data.boundary.m_hat);
        let m0 = data.initial.len();
        let mut dr = vec![0.0; residuals.len()];
        match self.kind {
            LossKind::Pinn => {
                let c = 2.0 / (mt * mh) as f64;
                for (o, r) in dr.iter_mut().zip(residuals) {
                    *o = c * r;
                }
            }
            LossKind::Cpinn => {
                let gamma = self.gamma;
                for j in 0..mh {
                    let level = &residuals[j * mt..(j + 1) * mt];
                    if gamma == 2.0 {
                        let c = 2.0 / (mt * mh) as f64;
                        for (i, r) in level.iter().enumerate() {
                            dr[j * mt + i] = c * r;
                        }
                    } else {
                        let q: f64 =
                            level.iter().map(|r| r.abs().powf(gamma)).sum::<f64>() / mt as f64;
                        if q > 0.0 {
                            let qpow = q.powf(2.0 / gamma - 1.0);
                            let c = 2.0 / (mt * mh) as f64;
                            for (i, r) in level.iter().enumerate() {
                                dr[j * mt + i] =
                                    c * qpow * r.abs().powf(gamma - 1.0) * r.signum();
                            }
                        }
                    }
                }
            }
        }
        let mut db = vec![0.0; bdiffs.len()];
        match self.kind {
            LossKind::Pinn => {
                let c = 2.0 / (mb * bh) as f64;
                for (o, e) in db.iter_mut().zip(bdiffs) {
                    *o = c * e;
                }
            }
            LossKind::Cpinn => {
                // L2 with coefficient 2
                let c = 4.0 / (mb * bh) as f64;
                for (o, e) in db.iter_mut().zip(bdiffs) {
                    *o = c * e;
                }
                // ordered-pair seminorms
                let ch12 = 1.0 / (bh as f64 * (mb * mb) as f64);
                for l in 0..bh {
                    let level = &bdiffs[l * mb..(l + 1) * mb];
                    for i in 0..mb {
                        let xi = data.boundary.x(i);
                        let mut acc = 0.0;
                        for j in 0..mb {
                            if j == i {
                                continue;
                            }
                            let xj = data.boundary.x(j);
                            let dist2: f64 =
                                xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                            let w = dist2.sqrt().powi(data.boundary.d as i32).recip();
                            acc += (level[i] - level[j]) * w;
                        }
                        db[l * mb + i] += 4.0 * ch12 * acc;
                    }
                }
                let ch14 = 1.0 / ((bh * bh) as f64 * mb as f64);
                for j in 0..bh {
                    for i in 0..mb {
                        let mut acc = 0.0;
                        for l in 0..bh {
                            if l == j {
                                continue;
                            }
                            let w = (data.boundary.ts[j] - data.boundary.ts[l])
                                .abs()
                                .powf(1.5)
                                .recip();
                            acc += (bdiffs[j * mb + i] - bdiffs[l * mb + i]) * w;
                        }
                        db[j * mb + i] += 4.0 * ch14 * acc;
                    }
                }
            }
        }
        let ci = 2.0 / m0 as f64;
        let di: Vec<f64> = idiffs.iter().map(|e| ci * e).collect();
        (dr, db, di)
    }
}

impl SiteLoss for CollocationLoss<'_> {
    fn dim(&self) -> usize {
        self.data.d()
    }

    fn sites(&self) -> &[f64] {
        &self.sites
    }

    fn value_only_from(&self) -> usize {
        // boundary and initial sites enter only through their values
        self.n_int
    }

    fn loss_and_seeds(&self, ev: &SiteEvals) -> Result<(f64, SeedBuf)> {
        let dim = self.data.d() + 1;
        let n_int = self.n_int;
        let n_b = self.n_b;
        // residual r = lap v + f - v_t at interior sites
        let residuals: Vec<f64> = (0..n_int)
            .map(|i| ev.laps[i] + self.data.f_values[i] - ev.dt(i))
            .collect();
        let bdiffs: Vec<f64> = (0..n_b)
            .map(|i| ev.values[n_int + i] - self.data.g_values[i])
            .collect();
        let idiffs: Vec<f64> = (0..self.data.initial.len())
            .map(|i| ev.values[n_int + n_b + i] - self.data.u0_values[i])
            .collect();
        let breakdown = self.terms(&residuals, &bdiffs, &idiffs)?;
        let (dr, db, di) = self.mismatch_seeds(&residuals, &bdiffs, &idiffs);
        let mut seeds = SeedBuf::zeros(ev.n, dim);
        for (i, s) in dr.iter().enumerate() {
            seeds.laps[i] = *s;
            seeds.grads[i * dim + dim - 1] = -s;
        }
        for (i, s) in db.iter().enumerate() {
            seeds.values[n_int + i] = *s;
        }
        for (i, s) in di.iter().enumerate() {
            seeds.values[n_int + n_b + i] = *s;
        }
        Ok((breakdown.total, seeds))
    }
}

/// Evaluate the chosen squared loss of a network through the training
/// path (identical arithmetic to the gradient path).
pub fn training_loss(
    net: &crate::network::MlpNetwork,
    loss: &CollocationLoss<'_>,
) -> Result<LossBreakdown> {
    let ev = net.site_evals(loss.sites());
    let n_int = loss.n_int;
    let n_b = loss.n_b;
    let residuals: Vec<f64> = (0..n_int)
        .map(|i| ev.laps[i] + loss.data.f_values[i] - ev.dt(i))
        .collect();
    let bdiffs: Vec<f64> = (0..n_b)
        .map(|i| ev.values[n_int + i] - loss.data.g_values[i])
        .collect();
    let idiffs: Vec<f64> = (0..loss.data.initial.len())
        .map(|i| ev.values[n_int + n_b + i] - loss.data.u0_values[i])
        .collect();
    loss.terms(&residuals, &bdiffs, &idiffs)
}

/// Spearman rank correlation of two equally long samples.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut ranks = vec![0.0; v.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r as f64;
        }
        ranks
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean) * (a - mean);
        dy += (b - mean) * (b - mean);
    }
    num / (dx * dy).sqrt()
}

/// Rows of the loss-vs-error study: the unsquared consistent loss and a
/// quadrature `L^2(0,T; H^1)` error surrogate per candidate field.
pub fn error_vs_loss_study(
    fields: &[&dyn Field],
    data: &ProblemData,
    exact: &dyn Field,
    quad_res: usize,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let mut rows = Vec::with_capacity(fields.len());
    for v in fields {
        let loss = l_star(*v, data, LStarOptions::default())?.total;
        let err = l2h1_field_error(*v, exact, data.d(), last_time(data), quad_res);
        rows.push((loss, err));
    }
    let (ls, es): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    let rho = spearman(&ls, &es);
    Ok((rows, rho))
}

fn last_time(data: &ProblemData) -> f64 {
    *data
        .tensor
        .ts
        .last()
        .expect("tensor grid has at least one time level")
}

/// Quadrature `L^2(0,T; H^1)` distance between two fields (midpoint rule,
/// `res` points per axis).
pub fn l2h1_field_error(v: &dyn Field, u: &dyn Field, d: usize, t_final: f64, res: usize) -> f64 {
    let hx = 1.0 / res as f64;
    let ht = t_final / res as f64;
    let vol = hx.powi(d as i32) * ht;
    let mut acc = 0.0;
    let mut x = vec![0.0; d];
    let mut idx = vec![0usize; d + 1];
    loop {
        for a in 0..d {
            x[a] = (idx[a] as f64 + 0.5) * hx;
        }
        let t = (idx[d] as f64 + 0.5) * ht;
        let jv = v.jet(&x, t);
        let ju = u.jet(&x, t);
        let mut point = (jv.value - ju.value) * (jv.value - ju.value);
        for a in 0..d {
            point += (jv.grad_x[a] - ju.grad_x[a]) * (jv.grad_x[a] - ju.grad_x[a]);
        }
        acc += point * vol;
        let mut a = d + 1;
        let cont = loop {
            if a == 0 {
                break false;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < res {
                break true;
            }
            idx[a] = 0;
        };
        if !cont {
            break;
        }
    }
    acc.sqrt()
}
