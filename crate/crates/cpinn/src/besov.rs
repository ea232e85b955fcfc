//! Smoothness classes and their computable fingerprints: predicted
//! recovery-rate exponents (in exact rational arithmetic), a sampled
//! modulus-of-smoothness estimator, the scaled bump fixture used for
//! recovery lower bounds, and log-log rate fitting.

// indexed loops mirror the stencil formulas; clearer than iterator chains here
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::ls_slope;
use crate::network::Jet;
use crate::seq::weyl_point;

/// A nonnegative rational with infinity, used so exponent formulas stay
/// exact when the smoothness indices are rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Index {
    Finite(i64, i64),
    Infinity,
}

impl Index {
    pub fn new(num: i64, den: i64) -> Index {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Index::Finite(sign * num / g, sign * den / g)
    }

    pub fn int(v: i64) -> Index {
        Index::Finite(v, 1)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Index::Finite(n, d) => n as f64 / d as f64,
            Index::Infinity => f64::INFINITY,
        }
    }

    /// `1 / self`, with `1 / infinity = 0`.
    pub fn recip(self) -> Index {
        match self {
            Index::Infinity => Index::int(0),
            Index::Finite(n, d) => {
                assert!(n != 0, "reciprocal of zero index");
                Index::new(d, n)
            }
        }
    }

    fn sub(self, rhs: Index) -> Index {
        match (self, rhs) {
            (Index::Finite(a, b), Index::Finite(c, d)) => Index::new(a * d - c * b, b * d),
            _ => panic!("infinite operand in exponent arithmetic"),
        }
    }

    fn add(self, rhs: Index) -> Index {
        match (self, rhs) {
            (Index::Finite(a, b), Index::Finite(c, d)) => Index::new(a * d + c * b, b * d),
            _ => panic!("infinite operand in exponent arithmetic"),
        }
    }

    fn div_int(self, k: i64) -> Index {
        match self {
            Index::Finite(n, d) => Index::new(n, d * k),
            Index::Infinity => Index::Infinity,
        }
    }

    fn mul(self, rhs: Index) -> Index {
        match (self, rhs) {
            (Index::Finite(a, b), Index::Finite(c, d)) => Index::new(a * c, b * d),
            _ => panic!("infinite operand in exponent arithmetic"),
        }
    }

    fn clamp_nonneg(self) -> Index {
        match self {
            Index::Finite(n, _) if n < 0 => Index::int(0),
            other => other,
        }
    }

    fn le(self, rhs: Index) -> bool {
        match (self, rhs) {
            (Index::Finite(a, b), Index::Finite(c, d)) => a * d <= c * b,
            (Index::Infinity, Index::Infinity) => true,
            (Index::Infinity, _) => false,
            (_, Index::Infinity) => true,
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Mixed space-time smoothness descriptor: order `s` with integrability
/// `(p, q)` in space, order `theta` with `(p', q')` in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovClass {
    pub s: Index,
    pub theta: Index,
    pub p: Index,
    pub q: Index,
    pub pp: Index,
    pub qp: Index,
}

impl BesovClass {
    pub fn new(s: Index, theta: Index, p: Index, q: Index, pp: Index, qp: Index) -> Self {
        BesovClass {
            s,
            theta,
            p,
            q,
            pp,
            qp,
        }
    }

    /// `s - d/p`, the sup-norm scaling exponent of the spatial part.
    pub fn space_excess(&self, d: usize) -> f64 {
        self.s.to_f64() - d as f64 * self.p.recip().to_f64()
    }

    /// `theta - 1/p'`.
    pub fn time_excess(&self) -> f64 {
        self.theta.to_f64() - self.pp.recip().to_f64()
    }

    /// The model-class hypotheses `s > d/p`, `theta > 1/p'`.
    pub fn check_model_hypotheses(&self, d: usize) -> Result<()> {
        let dp = self.p.recip().mul(Index::int(d as i64));
        if self.s.le(dp) {
            return Err(Error::Hypothesis(format!(
                "s = {} must exceed d/p = {}",
                self.s.to_f64(),
                dp.to_f64()
            )));
        }
        if self.theta.le(self.pp.recip()) {
            return Err(Error::Hypothesis(format!(
                "theta = {} must exceed 1/p' = {}",
                self.theta.to_f64(),
                self.pp.recip().to_f64()
            )));
        }
        Ok(())
    }
}

/// Which error norm a recovery-rate prediction refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormId {
    /// Uniform norm on the space-time box.
    C,
    /// `L^tau'(0,T; L^tau(Omega))`.
    MixedLebesgue { tau: Index, taup: Index },
    /// `L^2(0,T; H^1(Omega))`.
    L2H1,
    /// `L^2(0,T; H^-1(Omega))`.
    L2HNeg1,
    /// Lateral-boundary trace norm `H^{1/2,1/4}`; the class carries the
    /// bar-indices.
    BoundaryTrace,
    /// `L^2(Omega)` recovery of initial data; the class carries the
    /// check-indices (only `s`, `p`, `q` are read).
    InitialL2,
}

/// Predicted spatial/temporal recovery exponents `(alpha, beta)` so that
/// the optimal error scales like `m_tilde^-alpha * m_hat^-beta`
/// (`m_bar^-alpha` on the boundary, and `beta = 0` for initial data).
///
/// Exact rational arithmetic; the hypotheses of the corresponding rate
/// statement are enforced.
pub fn predicted_exponents(cls: &BesovClass, norm: NormId, d: usize) -> Result<(Index, Index)> {
    let di = Index::int(d as i64);
    let half = Index::new(1, 2);
    match norm {
        NormId::C => {
            cls.check_model_hypotheses(d)?;
            let alpha = cls.s.div_int(d as i64).sub(cls.p.recip());
            let beta = cls.theta.sub(cls.pp.recip());
            Ok((alpha, beta))
        }
        NormId::MixedLebesgue { tau, taup } => {
            cls.check_model_hypotheses(d)?;
            let alpha = cls
                .s
                .div_int(d as i64)
                .sub(cls.p.recip().sub(tau.recip()).clamp_nonneg());
            let beta = cls
                .theta
                .sub(cls.pp.recip().sub(taup.recip()).clamp_nonneg());
            Ok((alpha, beta))
        }
        NormId::L2H1 => {
            cls.check_model_hypotheses(d)?;
            if !cls.p.le(Index::int(2)) {
                return Err(Error::Hypothesis("L2H1 rate needs p <= 2".into()));
            }
            let alpha = cls
                .s
                .sub(Index::int(1))
                .div_int(d as i64)
                .sub(cls.p.recip().sub(half));
            let beta = cls.theta.sub(cls.pp.recip().sub(half));
            Ok((alpha, beta))
        }
        NormId::L2HNeg1 => {
            cls.check_model_hypotheses(d)?;
            // 1/delta = 1/2 + 1/d
            let delta_recip = half.add(di.recip());
            let alpha = cls
                .s
                .div_int(d as i64)
                .sub(cls.p.recip().sub(delta_recip).clamp_nonneg());
            let beta = cls.theta.sub(cls.pp.recip().sub(half).clamp_nonneg());
            Ok((alpha, beta))
        }
        NormId::BoundaryTrace => {
            if d < 2 {
                return Err(Error::Hypothesis("boundary trace rate needs d >= 2".into()));
            }
            cls.check_model_hypotheses(d)?;
            if !cls.p.le(Index::int(2)) || !cls.pp.le(Index::int(2)) {
                return Err(Error::Hypothesis("trace rate needs p, p' <= 2".into()));
            }
            // alpha-bar = (s-1)/(d-1) - d/(d-1) (1/p - 1/2)
            let dm1 = (d - 1) as i64;
            let alpha = cls
                .s
                .sub(Index::int(1))
                .div_int(dm1)
                .sub(di.div_int(dm1).mul(cls.p.recip().sub(half)));
            let beta = cls.theta.sub(cls.pp.recip().sub(half));
            Ok((alpha, beta))
        }
        NormId::InitialL2 => {
            let dp = cls.p.recip().mul(di);
            if cls.s.le(dp) {
                return Err(Error::Hypothesis("initial rate needs s > d/p".into()));
            }
            if !cls.p.le(Index::int(2)) {
                return Err(Error::Hypothesis("initial rate needs p <= 2".into()));
            }
            let alpha = cls.s.div_int(d as i64).sub(cls.p.recip().sub(half));
            Ok((alpha, Index::int(0)))
        }
    }
}

/// Mixed forward difference of order `(r, r')` with steps `(h, h')`:
/// the outer sums run over the binomial stencil.
fn mixed_difference(
    f: &mut impl FnMut(&[f64], f64) -> f64,
    x: &[f64],
    t: f64,
    h: &[f64],
    hp: f64,
    r: usize,
    rp: usize,
) -> f64 {
    let d = x.len();
    let mut shifted = vec![0.0; d];
    let mut acc = 0.0;
    for i in 0..=r {
        let ci = binom(r, i) * if (r - i).is_multiple_of(2) { 1.0 } else { -1.0 };
        for a in 0..d {
            shifted[a] = x[a] + i as f64 * h[a];
        }
        for j in 0..=rp {
            let cj = binom(rp, j) * if (rp - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += ci * cj * f(&shifted, t + j as f64 * hp);
        }
    }
    acc
}

fn binom(n: usize, k: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Estimate the mixed modulus of smoothness
/// `omega_{r,r'}(f, b x b')_{L^p'(0,T; L^p)}` on the unit box:
/// the sup over sampled shifts of the mixed-difference quadrature norm,
/// with stencils restricted to stay inside the domain.
///
/// Shifts come from a fixed seedless direction sequence scaled by dyadic
/// magnitudes and filtered by `|h| <= b`, so enlarging `b` (or `b'`) only
/// enlarges the shift set and the estimate is monotone in both arguments.
/// Order 0 in either direction means no differencing there (the identity),
/// which reduces the estimator to a one-direction modulus.
#[allow(clippy::too_many_arguments)]
pub fn modulus_of_smoothness(
    mut f: impl FnMut(&[f64], f64) -> f64,
    d: usize,
    r: usize,
    rp: usize,
    b: f64,
    bp: f64,
    p: f64,
    p_time: f64,
    n_shift: usize,
    n_probe: usize,
) -> f64 {
    assert!(b > 0.0 && bp > 0.0);
    const SCALES: usize = 6;
    // fixed direction set: an axis-aligned direction plus Weyl samples
    let mut dirs: Vec<Vec<f64>> = vec![vec![1.0; d]];
    for n in 0..n_shift.saturating_sub(1) {
        let w = weyl_point(n as u64, d);
        dirs.push(w.iter().map(|&z| 2.0 * z - 1.0).collect());
    }
    let mut space_shifts: Vec<Vec<f64>> = Vec::new();
    for m in 0..SCALES {
        let scale = 0.5f64.powi(m as i32);
        for dir in &dirs {
            let shift: Vec<f64> = dir.iter().map(|&z| z * scale).collect();
            if shift.iter().all(|&z| z.abs() <= b) {
                space_shifts.push(shift);
            }
        }
    }
    let mut time_shifts: Vec<f64> = Vec::new();
    if rp == 0 {
        time_shifts.push(0.0);
    } else {
        for m in 0..SCALES {
            for frac in [1.0, 0.7] {
                let hp = frac * 0.5f64.powi(m as i32);
                if hp <= bp {
                    time_shifts.push(hp);
                }
            }
        }
    }

    let mut best = 0.0f64;
    let mut x = vec![0.0; d];
    for h in &space_shifts {
        for &hp in &time_shifts {
            // valid probe box: stencil x + i h, t + j h' inside the domain
            let t_len = 1.0 - rp as f64 * hp;
            if t_len <= 0.0 {
                continue;
            }
            let mut lo = vec![0.0; d];
            let mut hi = vec![1.0; d];
            let mut degenerate = false;
            for a in 0..d {
                let reach = r as f64 * h[a];
                if reach >= 0.0 {
                    hi[a] = 1.0 - reach;
                } else {
                    lo[a] = -reach;
                }
                if hi[a] <= lo[a] {
                    degenerate = true;
                }
            }
            if degenerate {
                continue;
            }
            let vol: f64 = (0..d).map(|a| hi[a] - lo[a]).product();
            // composite midpoint quadrature of the mixed norm
            let mut t_acc = 0.0f64;
            let mut t_max = 0.0f64;
            for jt in 0..n_probe {
                let t = (jt as f64 + 0.5) / n_probe as f64 * t_len;
                let mut s_acc = 0.0f64;
                let mut s_max = 0.0f64;
                let mut idx = vec![0usize; d];
                loop {
                    for a in 0..d {
                        x[a] = lo[a] + (idx[a] as f64 + 0.5) / n_probe as f64 * (hi[a] - lo[a]);
                    }
                    let v = mixed_difference(&mut f, &x, t, h, hp, r, rp).abs();
                    if p.is_finite() {
                        s_acc += v.powf(p);
                    } else {
                        s_max = s_max.max(v);
                    }
                    if !incr(&mut idx, n_probe) {
                        break;
                    }
                }
                let space_norm = if p.is_finite() {
                    (s_acc / (n_probe as f64).powi(d as i32) * vol).powf(1.0 / p)
                } else {
                    s_max
                };
                if p_time.is_finite() {
                    t_acc += space_norm.powf(p_time);
                } else {
                    t_max = t_max.max(space_norm);
                }
            }
            let norm = if p_time.is_finite() {
                (t_acc / n_probe as f64 * t_len).powf(1.0 / p_time)
            } else {
                t_max
            };
            best = best.max(norm);
        }
    }
    best
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

/// Scaled compactly-supported bump on the cuboid `I x I'`:
///
/// `phi(x,t) = len^(s - d/p) * len'^(theta - 1/p') * prod_a psi((z_a - lo_a)/len_a)`
///
/// where `psi(z) = exp((1 - 1/(1 - (2z-1)^2)) / (d+1))` on `(0,1)`, zero
/// outside. Each axis profile has sup 1, so the tensor bump has sup equal
/// to the scale factor; the per-axis `1/(d+1)` power keeps the product
/// at least 1/2 on the middle-half sub-box in every dimension.
#[derive(Debug, Clone)]
pub struct Bump {
    pub lo: Vec<f64>,
    pub len: f64,
    pub t_lo: f64,
    pub t_len: f64,
    pub amplitude: f64,
    inv_sharp: f64,
}

impl Bump {
    /// Bump over the spatial cube at `lo` of side `len` and the time
    /// interval `[t_lo, t_lo + t_len]`, scaled per the class exponents
    /// `len^(s - d/p) * t_len^(theta - 1/p')`.
    pub fn new(lo: Vec<f64>, len: f64, t_lo: f64, t_len: f64, cls: &BesovClass) -> Result<Bump> {
        if len <= 0.0 || t_len <= 0.0 {
            return Err(Error::DegenerateCell(format!(
                "bump cell with lengths {len} x {t_len}"
            )));
        }
        let d = lo.len();
        let amplitude = len.powf(cls.space_excess(d)) * t_len.powf(cls.time_excess());
        Ok(Bump {
            lo,
            len,
            t_lo,
            t_len,
            amplitude,
            inv_sharp: 1.0 / (d as f64 + 1.0),
        })
    }

    /// Per-axis profile and its first two derivatives in the local
    /// coordinate `z in (0,1)`.
    fn axis(&self, z: f64) -> (f64, f64, f64) {
        if z <= 0.0 || z >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let w = 2.0 * z - 1.0;
        let u = 1.0 - w * w;
        let psi = 1.0 - 1.0 / u;
        let dpsi = -4.0 * w / (u * u);
        let ddpsi = -8.0 / (u * u) - 32.0 * w * w / (u * u * u);
        let e = (psi * self.inv_sharp).exp();
        let d1 = e * dpsi * self.inv_sharp;
        let d2 = e * (dpsi * self.inv_sharp * dpsi * self.inv_sharp + ddpsi * self.inv_sharp);
        (e, d1, d2)
    }
}

impl Field for Bump {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        let mut v = self.amplitude;
        for a in 0..self.lo.len() {
            let (e, _, _) = self.axis((x[a] - self.lo[a]) / self.len);
            v *= e;
        }
        let (et, _, _) = self.axis((t - self.t_lo) / self.t_len);
        v * et
    }

    fn jet(&self, x: &[f64], t: f64) -> Jet {
        let d = self.lo.len();
        let ax: Vec<(f64, f64, f64)> = (0..d)
            .map(|a| self.axis((x[a] - self.lo[a]) / self.len))
            .collect();
        let (et, det, _) = self.axis((t - self.t_lo) / self.t_len);
        let prod_all: f64 = ax.iter().map(|v| v.0).product::<f64>() * et;
        let value = self.amplitude * prod_all;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        // product rule with chain factors 1/len per spatial axis
        for a in 0..d {
            let mut g = self.amplitude * et / self.len;
            for (b, v) in ax.iter().enumerate() {
                g *= if b == a { v.1 } else { v.0 };
            }
            grad[a] = g;
        }
        for a in 0..d {
            for b in 0..d {
                let mut h = self.amplitude * et / (self.len * self.len);
                if a == b {
                    for (c, v) in ax.iter().enumerate() {
                        h *= if c == a { v.2 } else { v.0 };
                    }
                } else {
                    for (c, v) in ax.iter().enumerate() {
                        h *= if c == a || c == b { v.1 } else { v.0 };
                    }
                }
                hess[a * d + b] = h;
            }
        }
        let mut dt = self.amplitude * det / self.t_len;
        for v in &ax {
            dt *= v.0;
        }
        let laplacian = (0..d).map(|a| hess[a * d + a]).sum();
        Jet {
            value,
            grad_x: grad,
            dt,
            hess_x: hess,
            laplacian,
        }
    }
}

/// One refinement sweep: levels, measured errors, fitted and predicted
/// log2 slopes for the spatial and temporal directions (the separated
/// slopes come from auxiliary sweeps that vary one level at a time).
#[derive(Debug, Clone)]
pub struct RateStudy {
    pub levels: Vec<(u32, u32)>,
    pub errors: Vec<f64>,
    pub fitted_slope_space: f64,
    pub fitted_slope_time: f64,
    pub predicted_slope_space: f64,
    pub predicted_slope_time: f64,
}

impl RateStudy {
    /// Assemble a study from the recorded joint sweep plus the two
    /// single-direction sweeps (vary k at fixed k', then k' at fixed k).
    pub fn from_sweeps(
        levels: Vec<(u32, u32)>,
        errors: Vec<f64>,
        space_sweep: (&[f64], &[f64]),
        time_sweep: (&[f64], &[f64]),
        predicted_slope_space: f64,
        predicted_slope_time: f64,
    ) -> crate::error::Result<RateStudy> {
        if levels.len() != errors.len() || levels.len() < 3 {
            return Err(Error::InvalidSpec(
                "rate study needs at least 3 aligned (level, error) pairs".into(),
            ));
        }
        if errors.iter().any(|&e| e <= 0.0 || e.is_nan()) {
            return Err(Error::InvalidSpec(
                "rate study needs strictly positive errors".into(),
            ));
        }
        let fitted_slope_space = rate_fit(space_sweep.0, space_sweep.1)?;
        let fitted_slope_time = rate_fit(time_sweep.0, time_sweep.1)?;
        Ok(RateStudy {
            levels,
            errors,
            fitted_slope_space,
            fitted_slope_time,
            predicted_slope_space,
            predicted_slope_time,
        })
    }
}

/// Least-squares slope of `log2(error)` against the level index.
pub fn rate_fit(levels: &[f64], errors: &[f64]) -> Result<f64> {
    if levels.len() < 3 || levels.len() != errors.len() {
        return Err(Error::InvalidSpec(
            "rate fit needs at least 3 aligned (level, error) pairs".into(),
        ));
    }
    if errors.iter().any(|&e| e <= 0.0 || e.is_nan()) {
        return Err(Error::InvalidSpec(
            "rate fit needs strictly positive errors".into(),
        ));
    }
    let logs: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    Ok(ls_slope(levels, &logs))
}
