//! Manufactured solutions, the full-batch momentum trainer, the
//! PINN-vs-CPINN comparison table, heatmap data export, norm-equivalence
//! checks, and the rate-study orchestration behind the CLI.

use crate::besov::{self, rate_fit, BesovClass, Bump, Index, NormId};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{self, GridSpec};
use crate::interp;
use crate::loss::{self, CollocationLoss, LossBreakdown, LossKind, ProblemData};
use crate::network::{Jet, MlpNetwork};
use crate::norms;
use serde::Serialize;
use std::sync::Arc;
use std::time::Instant;

const PI: f64 = std::f64::consts::PI;

/// The two closed-form heat-equation solutions driving the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolutionKind {
    /// `x y (1-x) (1-y) e^{-t}` — zero boundary data.
    U1,
    /// `sin(pi x) cos(pi y) + e^{-t}` — all data nonzero.
    U2,
}

/// Exact solution with analytic derivatives.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedSolution(pub SolutionKind);

impl Field for ManufacturedSolution {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        match self.0 {
            SolutionKind::U1 => x1 * x2 * (1.0 - x1) * (1.0 - x2) * (-t).exp(),
            SolutionKind::U2 => (PI * x1).sin() * (PI * x2).cos() + (-t).exp(),
        }
    }

    fn jet(&self, x: &[f64], t: f64) -> Jet {
        let (x1, x2) = (x[0], x[1]);
        match self.0 {
            SolutionKind::U1 => {
                let e = (-t).exp();
                let (a, b) = (x1 * (1.0 - x1), x2 * (1.0 - x2));
                let (da, db) = (1.0 - 2.0 * x1, 1.0 - 2.0 * x2);
                let value = a * b * e;
                let grad_x = vec![da * b * e, a * db * e];
                let hess_x = vec![-2.0 * b * e, da * db * e, da * db * e, -2.0 * a * e];
                Jet {
                    value,
                    grad_x,
                    dt: -value,
                    laplacian: -2.0 * (a + b) * e,
                    hess_x,
                }
            }
            SolutionKind::U2 => {
                let (s1, c1) = ((PI * x1).sin(), (PI * x1).cos());
                let (s2, c2) = ((PI * x2).sin(), (PI * x2).cos());
                let e = (-t).exp();
                let value = s1 * c2 + e;
                let grad_x = vec![PI * c1 * c2, -PI * s1 * s2];
                let pp = PI * PI;
                let hess_x = vec![-pp * s1 * c2, -pp * c1 * s2, -pp * c1 * s2, -pp * s1 * c2];
                Jet {
                    value,
                    grad_x,
                    dt: -e,
                    laplacian: -2.0 * pp * s1 * c2,
                    hess_x,
                }
            }
        }
    }
}

/// A named problem: exact solution plus hand-simplified closed forms of
/// the source, boundary, and initial data it manufactures.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub name: &'static str,
    pub solution: Arc<ManufacturedSolution>,
}

/// Look up a manufactured problem by name (`u1` or `u2`).
pub fn manufactured(name: &str) -> Result<ManufacturedProblem> {
    let kind = match name {
        "u1" => SolutionKind::U1,
        "u2" => SolutionKind::U2,
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    Ok(ManufacturedProblem {
        name: if kind == SolutionKind::U1 { "u1" } else { "u2" },
        solution: Arc::new(ManufacturedSolution(kind)),
    })
}

impl ManufacturedProblem {
    /// Source term `f = u_t - lap u`, simplified by hand (an independent
    /// route from the solution's jet).
    pub fn source(&self, x: &[f64], t: f64) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        match self.solution.0 {
            SolutionKind::U1 => {
                let e = (-t).exp();
                -x1 * x2 * (1.0 - x1) * (1.0 - x2) * e
                    + 2.0 * e * (x1 * (1.0 - x1) + x2 * (1.0 - x2))
            }
            SolutionKind::U2 => -(-t).exp() + 2.0 * PI * PI * (PI * x1).sin() * (PI * x2).cos(),
        }
    }

    pub fn boundary(&self, x: &[f64], t: f64) -> f64 {
        self.solution.value(x, t)
    }

    pub fn initial(&self, x: &[f64]) -> f64 {
        self.solution.value(x, 0.0)
    }

    /// Sampled data on the uniform `N`-mesh used by the experiments.
    pub fn data(&self, n: usize, t_final: f64) -> Result<ProblemData> {
        let (tensor, boundary, initial) = grid::mesh_grids(2, n, t_final)?;
        let mut data = ProblemData::from_closures(
            tensor,
            boundary,
            initial,
            |x, t| self.source(x, t),
            |x, t| self.boundary(x, t),
            |x| self.initial(x),
        );
        data.exact = Some(self.solution.clone());
        Ok(data)
    }
}

/// Training configuration. Step size, momentum, and iteration defaults
/// are desk-scale choices; everything is overridable.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Mesh size per axis.
    pub n: usize,
    pub width: usize,
    pub depth: usize,
    pub step_size: f64,
    pub momentum: f64,
    /// `0` evaluates the freshly initialized network without stepping.
    pub iterations: usize,
    pub seed: u64,
    /// Interior exponent override for the consistent loss.
    pub gamma: Option<f64>,
    pub skip: bool,
    pub t_final: f64,
    pub history_every: usize,
    /// Record the relative L2 error every this many iterations
    /// (0 disables the extra evaluations).
    pub error_every: usize,
}

impl TrainConfig {
    pub fn new(loss: LossKind, n: usize) -> Self {
        TrainConfig {
            loss,
            n,
            width: 20,
            depth: 4,
            step_size: 1e-3,
            momentum: 0.9,
            iterations: 20_000,
            seed: 1,
            gamma: None,
            skip: true,
            t_final: 1.0,
            history_every: 100,
            error_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec("mesh size N must be >= 2".into()));
        }
        if self.step_size <= 0.0 || self.step_size.is_nan() {
            return Err(Error::InvalidSpec("step size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidSpec("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub loss_kind: LossKind,
    pub n: usize,
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Final classical squared loss, regardless of the trained kind.
    pub final_pinn_loss: f64,
    /// Final consistent squared loss, regardless of the trained kind.
    pub final_cpinn_loss: f64,
    pub rel_l2_error_percent: f64,
    /// `(iteration, loss)` samples every `history_every` steps.
    pub history: Vec<(usize, f64)>,
    /// `(iteration, rel L2 error %)` samples when `error_every` is set.
    pub error_history: Vec<(usize, f64)>,
    pub wall_secs: f64,
}

/// Full-batch momentum gradient descent:
/// `velocity <- mu * velocity + grad; params <- params - eta * velocity`.
///
/// Aborts with a divergence error when the loss exceeds `diverge_at`.
pub fn momentum_descent(
    params: &mut [f64],
    mut grad_fn: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    eta: f64,
    mu: f64,
    iters: usize,
    diverge_at: f64,
    mut on_step: impl FnMut(usize, f64),
) -> Result<f64> {
    let mut velocity = vec![0.0; params.len()];
    let mut last = f64::NAN;
    for it in 0..iters {
        let (value, grad) = grad_fn(params)?;
        if !value.is_finite() || value > diverge_at {
            return Err(Error::Diverged {
                iter: it,
                loss: value,
            });
        }
        on_step(it, value);
        for ((v, g), p) in velocity.iter_mut().zip(&grad).zip(params.iter_mut()) {
            *v = mu * *v + g;
            *p -= eta * *v;
        }
        last = value;
    }
    Ok(last)
}

/// Relative `L^2(Omega_T)` error of a field against the exact solution,
/// in percent, by midpoint quadrature with `probe_res` points per axis.
pub fn relative_l2_error(v: &dyn Field, exact: &dyn Field, t_final: f64, probe_res: usize) -> f64 {
    let h = 1.0 / probe_res as f64;
    let ht = t_final / probe_res as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for it in 0..probe_res {
        let t = (it as f64 + 0.5) * ht;
        for ix in 0..probe_res {
            for iy in 0..probe_res {
                let x = [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h];
                let (uv, vv) = (exact.value(&x, t), v.value(&x, t));
                num += (vv - uv) * (vv - uv);
                den += uv * uv;
            }
        }
    }
    100.0 * (num / den).sqrt()
}

/// Train a network on the manufactured problem with the given config.
pub fn train(problem: &ManufacturedProblem, cfg: &TrainConfig) -> Result<(MlpNetwork, RunReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let data = problem.data(cfg.n, cfg.t_final)?;
    let coll = CollocationLoss::new(&data, cfg.loss, cfg.gamma)?;
    let mut net = MlpNetwork::init(cfg.width, cfg.depth, 2, cfg.seed, cfg.skip)?;
    let initial_loss = loss::training_loss(&net, &coll)?.total;
    let mut history: Vec<(usize, f64)> = Vec::new();
    let mut error_history: Vec<(usize, f64)> = Vec::new();
    let every = cfg.history_every.max(1);
    {
        use crate::network::{GradientEngine, SiteLoss};
        let mut engine = GradientEngine::new(&net, coll.sites().len() / 3);
        let mut shadow = net.clone();
        let mut params = net.params.clone();
        let mut step = 0usize;
        momentum_descent(
            &mut params,
            |p| {
                shadow.params.copy_from_slice(p);
                if cfg.error_every > 0 && step.is_multiple_of(cfg.error_every) {
                    let err =
                        relative_l2_error(&shadow, problem.solution.as_ref(), cfg.t_final, 40);
                    error_history.push((step, err));
                }
                step += 1;
                engine.gradient(&shadow, &coll)
            },
            cfg.step_size,
            cfg.momentum,
            cfg.iterations,
            1e6,
            |it, value| {
                if it.is_multiple_of(every) {
                    history.push((it, value));
                }
            },
        )?;
        net.params = params;
    }
    let final_breakdown = loss::training_loss(&net, &coll)?;
    history.push((cfg.iterations, final_breakdown.total));
    let final_pinn = loss::pinn_loss(&net, &data)?.total;
    let final_cpinn = loss::cpinn_loss_sq(
        &net,
        &data,
        match cfg.gamma {
            Some(g) => g,
            None => loss::default_gamma(2, data.tensor.m_tilde)?,
        },
    )?
    .total;
    let rel = relative_l2_error(&net, problem.solution.as_ref(), cfg.t_final, 50);
    let report = RunReport {
        loss_kind: cfg.loss,
        n: cfg.n,
        seed: cfg.seed,
        initial_loss,
        final_loss: final_breakdown.total,
        final_pinn_loss: final_pinn,
        final_cpinn_loss: final_cpinn,
        rel_l2_error_percent: rel,
        history,
        error_history,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((net, report))
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub n: usize,
    pub seed: u64,
    pub pinn_rel_err_percent: f64,
    pub cpinn_rel_err_percent: f64,
    pub pinn_final_loss: f64,
    pub cpinn_final_loss: f64,
}

/// Per-mesh medians over the seeds.
#[derive(Debug, Clone, Serialize)]
pub struct TableSummary {
    pub n: usize,
    pub median_pinn_err: f64,
    pub median_cpinn_err: f64,
    pub err_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1 {
    pub problem: String,
    pub rows: Vec<TableRow>,
    pub summary: Vec<TableSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Run both trainings for every mesh size and seed; `threads` caps the
/// number of worker threads for the sweep (cells are independent, so the
/// result is identical to the serial run).
pub fn reproduce_table1(
    problem: &ManufacturedProblem,
    sizes: &[usize],
    seeds: &[u64],
    base: &TrainConfig,
    threads: usize,
) -> Result<Table1> {
    struct Job {
        n: usize,
        seed: u64,
    }
    let jobs: Vec<Job> = sizes
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&seed| Job { n, seed }))
        .collect();
    let run_cell = |job: &Job| -> Result<TableRow> {
        let mut cfg_p = *base;
        cfg_p.loss = LossKind::Pinn;
        cfg_p.n = job.n;
        cfg_p.seed = job.seed;
        let mut cfg_c = cfg_p;
        cfg_c.loss = LossKind::Cpinn;
        let (_, rp) = train(problem, &cfg_p)?;
        let (_, rc) = train(problem, &cfg_c)?;
        Ok(TableRow {
            n: job.n,
            seed: job.seed,
            pinn_rel_err_percent: rp.rel_l2_error_percent,
            cpinn_rel_err_percent: rc.rel_l2_error_percent,
            pinn_final_loss: rp.final_pinn_loss,
            cpinn_final_loss: rc.final_cpinn_loss,
        })
    };
    let rows: Vec<TableRow> = if threads <= 1 {
        jobs.iter().map(run_cell).collect::<Result<_>>()?
    } else {
        type Slot<'s> = std::sync::Mutex<&'s mut Option<Result<TableRow>>>;
        let mut slots: Vec<Option<Result<TableRow>>> = (0..jobs.len()).map(|_| None).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slot_refs: Vec<Slot<'_>> = slots.iter_mut().map(std::sync::Mutex::new).collect();
        std::thread::scope(|scope| {
            for _ in 0..threads.min(jobs.len()) {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if idx >= jobs.len() {
                        break;
                    }
                    let row = run_cell(&jobs[idx]);
                    **slot_refs[idx].lock().unwrap() = Some(row);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("all jobs completed"))
            .collect::<Result<_>>()?
    };
    let mut summary = Vec::new();
    for &n in sizes {
        let pe: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.pinn_rel_err_percent)
            .collect();
        let ce: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.cpinn_rel_err_percent)
            .collect();
        let (mp, mc) = (median(&pe), median(&ce));
        summary.push(TableSummary {
            n,
            median_pinn_err: mp,
            median_cpinn_err: mc,
            err_ratio: mp / mc,
        });
    }
    Ok(Table1 {
        problem: problem.name.to_string(),
        rows,
        summary,
    })
}

/// Value grids of the exact solution and two trained networks at the
/// requested times: rows `(time, x, y, exact, pinn, cpinn)`.
pub fn figure1_data(
    pinn: &MlpNetwork,
    cpinn: &MlpNetwork,
    problem: &ManufacturedProblem,
    times: &[f64],
    res: usize,
) -> Vec<(f64, f64, f64, f64, f64, f64)> {
    let mut rows = Vec::with_capacity(times.len() * res * res);
    for &t in times {
        for ix in 0..res {
            for iy in 0..res {
                let x = [ix as f64 / (res - 1) as f64, iy as f64 / (res - 1) as f64];
                rows.push((
                    t,
                    x[0],
                    x[1],
                    problem.solution.value(&x, t),
                    pinn.forward(&x, t),
                    cpinn.forward(&x, t),
                ));
            }
        }
    }
    rows
}

/// Error norm selector for the interpolation rate study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpNorm {
    C,
    L2L2,
    L2H1,
}

impl std::str::FromStr for InterpNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<InterpNorm> {
        match s {
            "c" => Ok(InterpNorm::C),
            "l2l2" => Ok(InterpNorm::L2L2),
            "l2h1" => Ok(InterpNorm::L2H1),
            other => Err(Error::InvalidSpec(format!("unknown norm {other:?}"))),
        }
    }
}

/// Named smooth test functions for the rate studies (d = 2), with
/// analytic spatial gradients.
pub struct TestFunction {
    pub name: &'static str,
    pub f: fn(&[f64], f64) -> f64,
    pub grad: fn(&[f64], f64) -> Vec<f64>,
}

pub fn test_function(name: &str) -> Result<TestFunction> {
    match name {
        "sinprod" => Ok(TestFunction {
            name: "sinprod",
            f: |x, t| (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * t).sin(),
            grad: |x, t| {
                vec![
                    PI * (PI * x[0]).cos() * (PI * x[1]).sin() * (PI * t).sin(),
                    PI * (PI * x[0]).sin() * (PI * x[1]).cos() * (PI * t).sin(),
                ]
            },
        }),
        "sincos" => Ok(TestFunction {
            name: "sincos",
            f: |x, t| (PI * x[0]).sin() * (PI * x[1]).cos() * (-t).exp(),
            grad: |x, t| {
                vec![
                    PI * (PI * x[0]).cos() * (PI * x[1]).cos() * (-t).exp(),
                    -PI * (PI * x[0]).sin() * (PI * x[1]).sin() * (-t).exp(),
                ]
            },
        }),
        other => Err(Error::InvalidSpec(format!(
            "unknown test function {other:?}"
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub k: u32,
    pub kp: u32,
    pub error: f64,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
}

/// Measure interpolation errors of a smooth test function over the joint
/// sweep `k = k' = kmin..kmax` and fit the slope.
pub fn interp_rate_study(
    tf: &TestFunction,
    r: usize,
    rp: usize,
    norm: InterpNorm,
    kmin: u32,
    kmax: u32,
) -> Result<Vec<RateRow>> {
    if kmax < kmin + 2 {
        return Err(Error::InvalidSpec(
            "rate study needs at least 3 levels".into(),
        ));
    }
    let mut errors = Vec::new();
    for k in kmin..=kmax {
        let spec = GridSpec::new(2, k, k, r, rp, 1.0)?;
        let s = interp::build_interpolant(&spec, tf.f)?;
        let e = match norm {
            InterpNorm::C => interp::sup_error(tf.f, &s, probe_count(k))?,
            InterpNorm::L2L2 => interp::mixed_norm_error(tf.f, &s, 2.0, 2.0, 4)?,
            InterpNorm::L2H1 => interp::l2h1_error(tf.f, tf.grad, &s, 4)?,
        };
        errors.push(e);
    }
    let levels: Vec<f64> = (kmin..=kmax).map(|k| k as f64).collect();
    let fitted = rate_fit(&levels, &errors)?;
    // smooth functions saturate the polynomial order: the effective
    // smoothness caps at r (r-1 through the gradient), matched in p,
    // so the joint sweep is predicted to decay at min of the two orders
    let space_order = match norm {
        InterpNorm::L2H1 => r - 1,
        _ => r,
    };
    let predicted = -(space_order.min(rp) as f64);
    Ok((kmin..=kmax)
        .zip(errors)
        .map(|(k, error)| RateRow {
            k,
            kp: k,
            error,
            fitted_slope: fitted,
            predicted_slope: predicted,
        })
        .collect())
}

/// Separated space/time slopes for the interpolation error. The joint
/// sweep (measured in the requested norm) is recorded; the per-direction
/// slopes are fitted in the mixed L2 norm with the other level held one
/// step finer than the sweep window, so its error floor stays an order
/// of magnitude below the varying part.
pub fn separated_rate_study(
    tf: &TestFunction,
    r: usize,
    rp: usize,
    norm: InterpNorm,
    kmin: u32,
    kmax: u32,
) -> Result<besov::RateStudy> {
    if kmax < kmin + 3 {
        return Err(Error::InvalidSpec(
            "separated rate study needs at least 4 levels".into(),
        ));
    }
    let measure = |k: u32, kp: u32, n: InterpNorm| -> Result<f64> {
        let spec = GridSpec::new(2, k, kp, r, rp, 1.0)?;
        let s = interp::build_interpolant(&spec, tf.f)?;
        match n {
            InterpNorm::C => interp::sup_error(tf.f, &s, probe_count(k.max(kp))),
            InterpNorm::L2L2 => interp::mixed_norm_error(tf.f, &s, 2.0, 2.0, 4),
            InterpNorm::L2H1 => interp::l2h1_error(tf.f, tf.grad, &s, 4),
        }
    };
    let mut levels = Vec::new();
    let mut errors = Vec::new();
    for k in kmin..=kmax {
        levels.push((k, k));
        errors.push(measure(k, k, norm)?);
    }
    let axis: Vec<f64> = (kmin..kmax).map(|k| k as f64).collect();
    let mut space_errs = Vec::new();
    let mut time_errs = Vec::new();
    for k in kmin..kmax {
        space_errs.push(measure(k, kmax + 1, InterpNorm::L2L2)?);
        time_errs.push(measure(kmax + 1, k, InterpNorm::L2L2)?);
    }
    let space_order = match norm {
        InterpNorm::L2H1 => r - 1,
        _ => r,
    } as f64;
    besov::RateStudy::from_sweeps(
        levels,
        errors,
        (&axis, &space_errs),
        (&axis, &time_errs),
        -space_order,
        -(rp as f64),
    )
}

fn probe_count(k: u32) -> usize {
    // eight probes per cell and axis: the nested probe prefix of length
    // 2^(k+3) is exactly the dyadic lattice at level k+3, so every level
    // sees the same per-cell probe density and slope fits stay unbiased
    8usize << k
}

/// The sample-free dyadic cuboid two levels below the grid: spatial cube
/// index (1, .., 1) at level k+2, time interval index 1 at level k'+2.
/// Its interior meets no collocation site and no interpolation node, so
/// samples of a bump supported there are identically zero.
/// Returns (spatial corner, spatial side, time start, time length).
pub fn sample_free_cell(spec: &GridSpec) -> (Vec<f64>, f64, f64, f64) {
    let len = 0.5f64.powi(spec.k as i32 + 2);
    let lo = vec![len; spec.d];
    let t_len = spec.t_final * 0.5f64.powi(spec.kp as i32 + 2);
    (lo, len, t_len, t_len)
}

/// Recovery-rate study rows: interpolation of a smooth function
/// (upper-bound fixture) and of bumps in sample-free cells (lower-bound
/// fixture), against the predicted class exponents.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryRow {
    pub fixture: &'static str,
    pub k: u32,
    pub kp: u32,
    pub error: f64,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
}

pub fn recovery_rate_study(cls: &BesovClass, norm: NormId, kmax: u32) -> Result<Vec<RecoveryRow>> {
    if kmax < 3 {
        return Err(Error::InvalidSpec("recovery study needs kmax >= 3".into()));
    }
    let d = 2usize;
    let (alpha, _beta) = besov::predicted_exponents(cls, norm, d)?;
    // the error scales like m_tilde^-alpha with m_tilde = (r 2^k)^d, so
    // log2(error) drops by d * alpha per spatial level
    let predicted = -(d as f64) * alpha.to_f64();
    let kp_fixed = 1u32;

    // lower-bound fixture: bump in a sample-free cell; the interpolant
    // vanishes, so the sup recovery error is the bump's sup norm
    let mut bump_errors = Vec::new();
    for k in 1..=kmax {
        let spec = GridSpec::new(d, k, kp_fixed, 2, 2, 1.0)?;
        let (lo, len, t_lo, t_len) = sample_free_cell(&spec);
        let bump = Bump::new(lo.clone(), len, t_lo, t_len, cls)?;
        let s = interp::build_interpolant(&spec, |x, t| bump.value(x, t))?;
        let hi: Vec<f64> = lo.iter().map(|&v| v + len).collect();
        let err = interp::sup_error_on_box(
            |x, t| bump.value(x, t),
            &s,
            (&lo, t_lo),
            (&hi, t_lo + t_len),
            33,
        )?;
        bump_errors.push(err);
    }
    let levels: Vec<f64> = (1..=kmax).map(|k| k as f64).collect();
    let bump_fit = rate_fit(&levels, &bump_errors)?;

    // upper-bound fixture: smooth-function interpolation decays at the
    // polynomial-order cap
    let tf = test_function("sincos")?;
    let mut smooth_errors = Vec::new();
    for k in 1..=kmax {
        let spec = GridSpec::new(d, k, kp_fixed, 2, 2, 1.0)?;
        let s = interp::build_interpolant(&spec, tf.f)?;
        smooth_errors.push(interp::sup_error(tf.f, &s, probe_count(k))?);
    }
    let smooth_fit = rate_fit(&levels, &smooth_errors)?;

    let mut rows = Vec::new();
    for (i, k) in (1..=kmax).enumerate() {
        rows.push(RecoveryRow {
            fixture: "bump",
            k,
            kp: kp_fixed,
            error: bump_errors[i],
            fitted_slope: bump_fit,
            predicted_slope: predicted,
        });
    }
    for (i, k) in (1..=kmax).enumerate() {
        rows.push(RecoveryRow {
            fixture: "smooth",
            k,
            kp: kp_fixed,
            error: smooth_errors[i],
            fitted_slope: smooth_fit,
            predicted_slope: predicted,
        });
    }
    Ok(rows)
}

/// Which discrete norm the norm-check compares against quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormCheckKind {
    Mixed,
    H12,
    H14,
    H1214,
    Init,
}

impl std::str::FromStr for NormCheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<NormCheckKind> {
        match s {
            "mixed" => Ok(NormCheckKind::Mixed),
            "h12" => Ok(NormCheckKind::H12),
            "h14" => Ok(NormCheckKind::H14),
            "h1214" => Ok(NormCheckKind::H1214),
            "init" => Ok(NormCheckKind::Init),
            other => Err(Error::InvalidSpec(format!("unknown norm check {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormCheckRow {
    pub k: u32,
    pub kp: u32,
    pub discrete: f64,
    pub quadrature: f64,
    pub ratio: f64,
}

/// Smooth test fields for the norm checks: the interior function
/// `sin(pi x1) sin(pi x2) cos(t)`, the trace of
/// `sin(pi x1) cos(pi x2) e^{-t}`, and its initial slice.
pub fn norm_check(kind: NormCheckKind, kmin: u32, kmax: u32) -> Result<Vec<NormCheckRow>> {
    let interior = |x: &[f64], t: f64| (PI * x[0]).sin() * (PI * x[1]).sin() * t.cos();
    let trace = |x: &[f64], t: f64| (PI * x[0]).sin() * (PI * x[1]).cos() * (-t).exp();
    let u0 = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).cos() + 1.0;
    let mut rows = Vec::new();
    for k in kmin..=kmax {
        let spec = GridSpec::new(2, k, k, 2, 2, 1.0)?;
        let (discrete, quadrature) = match kind {
            NormCheckKind::Mixed => {
                let g = grid::tensor_grid(&spec)?;
                let vals = g.sample(interior);
                (
                    norms::discrete_mixed(&g, &vals, 2.0)?,
                    norms::quad_mixed(interior, 2, 1.0, 2.0, 2.0, 128),
                )
            }
            NormCheckKind::H12 | NormCheckKind::H14 | NormCheckKind::H1214 => {
                let g = grid::boundary_grid(&spec)?;
                let vals = g.sample(trace);
                let res_edge = spec.lattice_axis_len() - 1;
                let res_t = g.m_hat;
                match kind {
                    NormCheckKind::H12 => (
                        norms::discrete_h12_seminorm(&g, &vals)?,
                        norms::quad_h12_seminorm(trace, 1.0, res_edge, res_t)?,
                    ),
                    NormCheckKind::H14 => (
                        norms::discrete_h14_seminorm(&g, &vals)?,
                        norms::quad_h14_seminorm(trace, 1.0, res_edge, res_t)?,
                    ),
                    _ => (
                        norms::discrete_h1214_norm(&g, &vals)?,
                        norms::quad_h1214_norm(trace, 1.0, res_edge, res_t)?,
                    ),
                }
            }
            NormCheckKind::Init => {
                let g = grid::initial_grid(k, 2, 2)?;
                let vals = g.sample(u0);
                let quad = norms::quad_mixed(|x, _| u0(x), 2, 1.0, 2.0, f64::INFINITY, 128);
                (norms::discrete_initial_l2(&g, &vals)?, quad)
            }
        };
        rows.push(NormCheckRow {
            k,
            kp: k,
            discrete,
            quadrature,
            ratio: discrete / quadrature,
        });
    }
    Ok(rows)
}

/// CSV rows of every data site: `site_class, x1..xd, t`.
pub fn dump_grid_csv(spec: &GridSpec) -> Result<String> {
    let tensor = grid::tensor_grid(spec)?;
    let boundary = grid::boundary_grid(spec)?;
    let initial = grid::initial_grid(spec.k, spec.r, spec.d)?;
    let mut out = String::new();
    out.push_str("site_class");
    for a in 1..=spec.d {
        out.push_str(&format!(",x{a}"));
    }
    out.push_str(",t\n");
    let mut push_row = |class: &str, x: &[f64], t: f64| {
        out.push_str(class);
        for v in x {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{t}\n"));
    };
    for i in 0..tensor.len() {
        push_row("interior", tensor.x(i), tensor.t(i));
    }
    for l in 0..boundary.m_hat {
        for i in 0..boundary.m_bar {
            push_row("boundary", boundary.x(i), boundary.ts[l]);
        }
    }
    for i in 0..initial.len() {
        push_row("initial", initial.x(i), 0.0);
    }
    Ok(out)
}

/// One `(eps, l_star, l2h1_error)` row of the perturbation study.
pub type PerturbationRow = (f64, f64, f64);

/// Loss-vs-error rows over the perturbation family `u + eps * bump`,
/// with their Spearman rank correlation.
pub fn perturbation_study(
    problem: &ManufacturedProblem,
    n: usize,
    epsilons: &[f64],
    quad_res: usize,
) -> Result<(Vec<PerturbationRow>, f64)> {
    let data = problem.data(n, 1.0)?;
    let cls = BesovClass::new(
        Index::int(2),
        Index::int(1),
        Index::Infinity,
        Index::Infinity,
        Index::Infinity,
        Index::Infinity,
    );
    let bump = Bump::new(vec![0.25, 0.25], 0.5, 0.25, 0.5, &cls)?;
    let exact = problem.solution.as_ref();
    let mut rows = Vec::new();
    for &eps in epsilons {
        let v = crate::field::Perturbed::new(exact, &bump, eps);
        let l = loss::l_star(&v, &data, loss::LStarOptions::default())?.total;
        let e = loss::l2h1_field_error(&v, exact, 2, 1.0, quad_res);
        rows.push((eps, l, e));
    }
    let ls: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.2).collect();
    Ok((rows, loss::spearman(&ls, &es)))
}

/// Serialize a report as pretty JSON.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization cannot fail")
}

/// Render a loss breakdown as CSV key/value rows.
pub fn breakdown_csv(b: &LossBreakdown) -> String {
    format!(
        "term,value\ninterior,{}\nboundary_l2,{}\nboundary_h12,{}\nboundary_h14,{}\ninitial,{}\nlog_factor,{}\ntotal,{}\n",
        b.interior, b.boundary_l2, b.boundary_h12, b.boundary_h14, b.initial, b.log_factor, b.total
    )
}
