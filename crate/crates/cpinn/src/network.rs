//! Fully-connected network with a tanh input layer and ReLU^3 hidden
//! layers, exact input-derivative propagation, and exact parameter
//! gradients of site-based scalar losses.
//!
//! Input derivatives are propagated analytically through every layer:
//! the full jet ([`MlpNetwork::jet`]) carries value, spatial gradient,
//! time derivative, and the spatial Hessian; the training path carries
//! value, gradient, and spatial Laplacian only, which is all the losses
//! consume. Parameter gradients are reverse accumulation over that
//! augmented forward pass. Finite differences exist only as test oracles
//! ([`finite_diff_jet`], [`finite_diff_param_grad`]) and are never used
//! in training.
//!
//! ReLU^3(z) = max(z, 0)^3 is C^2, so Laplacians are defined everywhere.

// indexed loops mirror the stencil formulas; clearer than iterator chains here
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::field::Field;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

/// Network evaluation record at one space-time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    /// Spatial gradient, `d` entries.
    pub grad_x: Vec<f64>,
    /// Time derivative.
    pub dt: f64,
    /// Spatial Hessian, row-major `d x d`, symmetric.
    pub hess_x: Vec<f64>,
    /// Trace of `hess_x`.
    pub laplacian: f64,
}

impl Jet {
    pub fn zero(d: usize) -> Jet {
        Jet {
            value: 0.0,
            grad_x: vec![0.0; d],
            dt: 0.0,
            hess_x: vec![0.0; d * d],
            laplacian: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Act {
    Tanh,
    ReluCubed,
}

/// Value and first three derivatives of the activation.
#[inline]
fn act_derivs(a: Act, z: f64) -> (f64, f64, f64, f64) {
    match a {
        Act::Tanh => {
            let th = z.tanh();
            let s1 = 1.0 - th * th;
            (th, s1, -2.0 * th * s1, -2.0 * s1 * (1.0 - 3.0 * th * th))
        }
        Act::ReluCubed => {
            if z > 0.0 {
                (z * z * z, 3.0 * z * z, 6.0 * z, 6.0)
            } else {
                (0.0, 0.0, 0.0, 0.0)
            }
        }
    }
}

/// Fixed-width MLP: input `(x, t)` of dimension `d+1`, a tanh layer to
/// width `W`, `L-1` ReLU^3 layers of width `W` (identity skips between
/// consecutive hidden layers when `skip` is set), and a scalar affine
/// output. Parameters live in one flat vector.
#[derive(Debug, Clone)]
pub struct MlpNetwork {
    pub d: usize,
    pub width: usize,
    /// Number of hidden layers, `>= 2`.
    pub depth: usize,
    pub skip: bool,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl MlpNetwork {
    /// Deterministic initialization: weights uniform in `[-a, a]` with
    /// `a = sqrt(6 / (fan_in + fan_out))` per layer, biases zero.
    pub fn init(width: usize, depth: usize, d: usize, seed: u64, skip: bool) -> Result<Self> {
        if width < 1 || depth < 2 || d < 1 {
            return Err(Error::InvalidSpec(format!(
                "invalid network shape: W={width}, L={depth}, d={d}"
            )));
        }
        let dim = d + 1;
        let count = Self::param_count_for(width, depth, d);
        let mut params = vec![0.0; count];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in slice {
                *w = rng.gen_range(-a..=a);
            }
        };
        let mut off = 0usize;
        fill(&mut params[off..off + width * dim], dim, width);
        off += width * dim + width; // biases stay zero
        for _ in 0..depth - 1 {
            fill(&mut params[off..off + width * width], width, width);
            off += width * width + width;
        }
        fill(&mut params[off..off + width], width, 1);
        Ok(MlpNetwork {
            d,
            width,
            depth,
            skip,
            seed,
            params,
        })
    }

    pub fn param_count_for(width: usize, depth: usize, d: usize) -> usize {
        (d + 2) * width + (depth - 1) * (width + 1) * width + width + 1
    }

    pub fn param_count(&self) -> usize {
        Self::param_count_for(self.width, self.depth, self.d)
    }

    /// Weighted layers in order: the input tanh layer, then the ReLU^3
    /// layers. Returns (weight offset, bias offset, fan_in, activation,
    /// has_skip).
    fn layer_info(&self, wl: usize) -> (usize, usize, usize, Act, bool) {
        let (w, dim) = (self.width, self.d + 1);
        if wl == 0 {
            (0, w * dim, dim, Act::Tanh, false)
        } else {
            let base = w * dim + w + (wl - 1) * (w * w + w);
            (base, base + w * w, w, Act::ReluCubed, self.skip)
        }
    }

    fn out_offsets(&self) -> (usize, usize) {
        let (w, dim) = (self.width, self.d + 1);
        let base = w * dim + w + (self.depth - 1) * (w * w + w);
        (base, base + w)
    }

    /// Offset of the output bias in the flat parameter vector.
    pub fn output_bias_index(&self) -> usize {
        self.out_offsets().1
    }

    /// Plain scalar evaluation.
    pub fn forward(&self, x: &[f64], t: f64) -> f64 {
        let w = self.width;
        let mut prev: Vec<f64> = x.iter().copied().chain(std::iter::once(t)).collect();
        let mut cur = vec![0.0; w];
        for wl in 0..self.depth {
            let (woff, boff, fan_in, act, skip) = self.layer_info(wl);
            for i in 0..w {
                let row = &self.params[woff + i * fan_in..woff + (i + 1) * fan_in];
                let mut z = self.params[boff + i];
                for (wij, aj) in row.iter().zip(&prev) {
                    z += wij * aj;
                }
                let (s, _, _, _) = act_derivs(act, z);
                cur[i] = s + if skip { prev[i] } else { 0.0 };
            }
            std::mem::swap(&mut prev, &mut cur);
            if cur.len() != w {
                cur = vec![0.0; w];
            }
        }
        let (woff, boff) = self.out_offsets();
        let mut u = self.params[boff];
        for i in 0..w {
            u += self.params[woff + i] * prev[i];
        }
        u
    }

    /// Exact full jet: value, spatial gradient, time derivative, spatial
    /// Hessian, Laplacian.
    pub fn jet(&self, x: &[f64], t: f64) -> Jet {
        let (w, d) = (self.width, self.d);
        let dim = d + 1;
        // per-neuron state: value, gradient (dim), Hessian (dim*dim)
        let mut pv: Vec<f64> = x.iter().copied().chain(std::iter::once(t)).collect();
        let mut pg = vec![0.0; dim * dim];
        for a in 0..dim {
            pg[a * dim + a] = 1.0;
        }
        let mut ph = vec![0.0; dim * dim * dim];
        for wl in 0..self.depth {
            let (woff, boff, fan_in, act, skip) = self.layer_info(wl);
            let mut nv = vec![0.0; w];
            let mut ng = vec![0.0; w * dim];
            let mut nh = vec![0.0; w * dim * dim];
            for i in 0..w {
                let row = &self.params[woff + i * fan_in..woff + (i + 1) * fan_in];
                let mut z = self.params[boff + i];
                let mut gz = vec![0.0; dim];
                let mut hz = vec![0.0; dim * dim];
                for (j, wij) in row.iter().enumerate() {
                    z += wij * pv[j];
                    for a in 0..dim {
                        gz[a] += wij * pg[j * dim + a];
                    }
                    for a in 0..dim * dim {
                        hz[a] += wij * ph[j * dim * dim + a];
                    }
                }
                let (s, s1, s2, _) = act_derivs(act, z);
                nv[i] = s + if skip { pv[i] } else { 0.0 };
                for a in 0..dim {
                    ng[i * dim + a] = s1 * gz[a] + if skip { pg[i * dim + a] } else { 0.0 };
                }
                for a in 0..dim {
                    for b in 0..dim {
                        nh[i * dim * dim + a * dim + b] = s2 * gz[a] * gz[b]
                            + s1 * hz[a * dim + b]
                            + if skip {
                                ph[i * dim * dim + a * dim + b]
                            } else {
                                0.0
                            };
                    }
                }
            }
            pv = nv;
            pg = ng;
            ph = nh;
        }
        let (woff, boff) = self.out_offsets();
        let mut value = self.params[boff];
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for i in 0..w {
            let wi = self.params[woff + i];
            value += wi * pv[i];
            for a in 0..dim {
                grad[a] += wi * pg[i * dim + a];
            }
            for a in 0..dim * dim {
                hess[a] += wi * ph[i * dim * dim + a];
            }
        }
        let mut hess_x = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                hess_x[a * d + b] = hess[a * dim + b];
            }
        }
        let laplacian = (0..d).map(|a| hess_x[a * d + a]).sum();
        Jet {
            value,
            grad_x: grad[..d].to_vec(),
            dt: grad[d],
            hess_x,
            laplacian,
        }
    }
}

impl Field for MlpNetwork {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.forward(x, t)
    }

    fn jet(&self, x: &[f64], t: f64) -> Jet {
        MlpNetwork::jet(self, x, t)
    }
}

/// Evaluations of a network at a site list: values, full gradients
/// (spatial components then time), spatial Laplacians.
#[derive(Debug, Clone)]
pub struct SiteEvals {
    pub n: usize,
    /// `d + 1`
    pub dim: usize,
    pub values: Vec<f64>,
    /// site-major, `n * dim`
    pub grads: Vec<f64>,
    pub laps: Vec<f64>,
}

impl SiteEvals {
    pub fn zeros(n: usize, dim: usize) -> Self {
        SiteEvals {
            n,
            dim,
            values: vec![0.0; n],
            grads: vec![0.0; n * dim],
            laps: vec![0.0; n],
        }
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.grads[i * self.dim + self.dim - 1]
    }
}

/// Adjoint seeds per site: derivatives of the scalar loss with respect to
/// the site value, gradient components, and Laplacian.
pub type SeedBuf = SiteEvals;

/// A scalar loss that is a differentiable composition of network
/// evaluations at finitely many space-time sites.
pub trait SiteLoss {
    /// Spatial dimension of the sites.
    fn dim(&self) -> usize;

    /// Flat site coordinates, `n` rows of `(x_1..x_d, t)`.
    fn sites(&self) -> &[f64];

    /// Loss value and adjoint seeds given site evaluations.
    fn loss_and_seeds(&self, ev: &SiteEvals) -> Result<(f64, SeedBuf)>;

    /// Index of the first site whose loss terms read only the value
    /// channel (its gradient/Laplacian evaluations and seeds stay zero);
    /// defaults to "none".
    fn value_only_from(&self) -> usize {
        usize::MAX
    }
}

// Recorded augmented forward pass of one site: post-layer states
// (value/gradient/laplacian, including the input state) and the
// pre-activation bundles of every weighted layer.
struct Tape {
    va: Vec<Vec<f64>>,
    ga: Vec<Vec<f64>>,
    qa: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    gz: Vec<Vec<f64>>,
    qz: Vec<Vec<f64>>,
}

impl Tape {
    fn new(net: &MlpNetwork) -> Self {
        let (w, dim, l) = (net.width, net.d + 1, net.depth);
        let mut sizes = vec![dim];
        sizes.extend(std::iter::repeat_n(w, l));
        let states =
            |per: usize| -> Vec<Vec<f64>> { sizes.iter().map(|&s| vec![0.0; s * per]).collect() };
        Tape {
            va: states(1),
            ga: states(dim),
            qa: states(1),
            z: (0..l).map(|_| vec![0.0; w]).collect(),
            gz: (0..l).map(|_| vec![0.0; w * dim]).collect(),
            qz: (0..l).map(|_| vec![0.0; w]).collect(),
        }
    }
}

// Adjoint scratch, shared across sites within one backward sweep.
struct Adjoints {
    av: Vec<Vec<f64>>,
    ag: Vec<Vec<f64>>,
    aq: Vec<Vec<f64>>,
}

impl Adjoints {
    fn new(net: &MlpNetwork) -> Self {
        let (w, dim, l) = (net.width, net.d + 1, net.depth);
        let mut sizes = vec![dim];
        sizes.extend(std::iter::repeat_n(w, l));
        let states =
            |per: usize| -> Vec<Vec<f64>> { sizes.iter().map(|&s| vec![0.0; s * per]).collect() };
        Adjoints {
            av: states(1),
            ag: states(dim),
            aq: states(1),
        }
    }
}

/// Reusable buffers for repeated gradient evaluations over a fixed site
/// list (one cached tape per site, so each iteration runs a single
/// forward pass per site).
pub struct GradientEngine {
    tapes: Vec<Tape>,
    adj: Adjoints,
    shape: (usize, usize, usize, bool),
}

impl GradientEngine {
    pub fn new(net: &MlpNetwork, n_sites: usize) -> Self {
        GradientEngine {
            tapes: (0..n_sites).map(|_| Tape::new(net)).collect(),
            adj: Adjoints::new(net),
            shape: (net.width, net.depth, net.d, net.skip),
        }
    }

    /// Loss value and exact parameter gradient, reusing the cached tapes.
    pub fn gradient<L: SiteLoss>(
        &mut self,
        net: &MlpNetwork,
        loss: &L,
    ) -> Result<(f64, Vec<f64>)> {
        assert_eq!(loss.dim(), net.d);
        assert_eq!(
            self.shape,
            (net.width, net.depth, net.d, net.skip),
            "engine built for a different network shape"
        );
        let dim = net.d + 1;
        let sites = loss.sites();
        let n = sites.len() / dim;
        assert_eq!(self.tapes.len(), n, "engine built for a different site count");
        let cutoff = loss.value_only_from().min(n);
        let mut ev = SiteEvals::zeros(n, dim);
        for s in 0..n {
            let row = &sites[s * dim..(s + 1) * dim];
            if s < cutoff {
                let (v, g, q) =
                    net.forward_lap_tape(&row[..net.d], row[net.d], &mut self.tapes[s]);
                ev.values[s] = v;
                ev.grads[s * dim..(s + 1) * dim].copy_from_slice(&g);
                ev.laps[s] = q;
            } else {
                ev.values[s] = net.forward_value_tape(&row[..net.d], row[net.d], &mut self.tapes[s]);
            }
        }
        let (value, seeds) = loss.loss_and_seeds(&ev)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss value {value}")));
        }
        let mut grad = vec![0.0; net.param_count()];
        for s in 0..n {
            let sv = seeds.values[s];
            let sg = &seeds.grads[s * dim..(s + 1) * dim];
            let sq = seeds.laps[s];
            if sv == 0.0 && sq == 0.0 && sg.iter().all(|&g| g == 0.0) {
                continue;
            }
            if s < cutoff {
                net.backward_lap(sv, sg, sq, &self.tapes[s], &mut self.adj, &mut grad);
            } else {
                debug_assert!(sq == 0.0 && sg.iter().all(|&g| g == 0.0));
                net.backward_value(sv, &self.tapes[s], &mut self.adj, &mut grad);
            }
        }
        Ok((value, grad))
    }
}

impl MlpNetwork {
    /// Augmented forward pass at one site, recording the tape.
    /// Returns (value, gradient, laplacian) of the output.
    fn forward_lap_tape(&self, x: &[f64], t: f64, ws: &mut Tape) -> (f64, Vec<f64>, f64) {
        let (w, d) = (self.width, self.d);
        let dim = d + 1;
        ws.va[0][..d].copy_from_slice(x);
        ws.va[0][d] = t;
        ws.ga[0].fill(0.0);
        for a in 0..dim {
            ws.ga[0][a * dim + a] = 1.0;
        }
        ws.qa[0].fill(0.0);
        for wl in 0..self.depth {
            let (woff, boff, fan_in, act, skip) = self.layer_info(wl);
            // split tape entries around wl to appease the borrow checker
            let (head, tail) = ws.va.split_at_mut(wl + 1);
            let pv = &head[wl];
            let nv = &mut tail[0];
            let (ghead, gtail) = ws.ga.split_at_mut(wl + 1);
            let pg = &ghead[wl];
            let ng = &mut gtail[0];
            let (qhead, qtail) = ws.qa.split_at_mut(wl + 1);
            let pq = &qhead[wl];
            let nq = &mut qtail[0];
            let z = &mut ws.z[wl];
            let gz = &mut ws.gz[wl];
            let qz = &mut ws.qz[wl];
            for i in 0..w {
                let row = &self.params[woff + i * fan_in..woff + (i + 1) * fan_in];
                let mut zi = self.params[boff + i];
                let gzi = &mut gz[i * dim..(i + 1) * dim];
                gzi.fill(0.0);
                let mut qzi = 0.0;
                for (((wij, pvj), pgj), pqj) in row
                    .iter()
                    .zip(pv.iter())
                    .zip(pg.chunks_exact(dim))
                    .zip(pq.iter())
                {
                    zi += wij * pvj;
                    for (g, p) in gzi.iter_mut().zip(pgj) {
                        *g += wij * p;
                    }
                    qzi += wij * pqj;
                }
                z[i] = zi;
                qz[i] = qzi;
                let (s, s1, s2, _) = act_derivs(act, zi);
                let ssum: f64 = gzi[..d].iter().map(|g| g * g).sum();
                nv[i] = s + if skip { pv[i] } else { 0.0 };
                let ngi = &mut ng[i * dim..(i + 1) * dim];
                for a in 0..dim {
                    ngi[a] = s1 * gzi[a] + if skip { pg[i * dim + a] } else { 0.0 };
                }
                nq[i] = s2 * ssum + s1 * qzi + if skip { pq[i] } else { 0.0 };
            }
        }
        let (woff, boff) = self.out_offsets();
        let last = self.depth;
        let mut value = self.params[boff];
        let mut grad = vec![0.0; dim];
        let mut lap = 0.0;
        for i in 0..w {
            let wi = self.params[woff + i];
            value += wi * ws.va[last][i];
            for a in 0..dim {
                grad[a] += wi * ws.ga[last][i * dim + a];
            }
            lap += wi * ws.qa[last][i];
        }
        (value, grad, lap)
    }

    /// Value-only forward pass with tape, for sites whose loss terms read
    /// nothing but the output value.
    fn forward_value_tape(&self, x: &[f64], t: f64, ws: &mut Tape) -> f64 {
        let w = self.width;
        ws.va[0][..self.d].copy_from_slice(x);
        ws.va[0][self.d] = t;
        for wl in 0..self.depth {
            let (woff, boff, fan_in, act, skip) = self.layer_info(wl);
            let (head, tail) = ws.va.split_at_mut(wl + 1);
            let pv = &head[wl];
            let nv = &mut tail[0];
            let z = &mut ws.z[wl];
            for i in 0..w {
                let row = &self.params[woff + i * fan_in..woff + (i + 1) * fan_in];
                let mut zi = self.params[boff + i];
                for (wij, pvj) in row.iter().zip(pv.iter()) {
                    zi += wij * pvj;
                }
                z[i] = zi;
                let (s, _, _, _) = act_derivs(act, zi);
                nv[i] = s + if skip { pv[i] } else { 0.0 };
            }
        }
        let (woff, boff) = self.out_offsets();
        let mut value = self.params[boff];
        for i in 0..w {
            value += self.params[woff + i] * ws.va[self.depth][i];
        }
        value
    }

    /// Scalar reverse pass over a value-only tape.
    fn backward_value(&self, seed_value: f64, ws: &Tape, adj: &mut Adjoints, grad_out: &mut [f64]) {
        let w = self.width;
        for l in 0..=self.depth {
            adj.av[l].fill(0.0);
        }
        let (woff, boff) = self.out_offsets();
        let last = self.depth;
        grad_out[boff] += seed_value;
        for i in 0..w {
            grad_out[woff + i] += seed_value * ws.va[last][i];
            adj.av[last][i] = seed_value * self.params[woff + i];
        }
        for wl in (0..self.depth).rev() {
            let (woff, boff, fan_in, act, skip) = self.layer_info(wl);
            let (avh, avt) = adj.av.split_at_mut(wl + 1);
            let av_prev = &mut avh[wl];
            let av_cur = &avt[0];
            let pv = &ws.va[wl];
            for i in 0..w {
                let (_, s1, _, _) = act_derivs(act, ws.z[wl][i]);
                let zbar = av_cur[i] * s1;
                grad_out[boff + i] += zbar;
                let row = &self.params[woff + i * fan_in..woff + (i + 1) * fan_in];
                let wrow = &mut grad_out[woff + i * fan_in..woff + (i + 1) * fan_in];
                for (((wr, pvj), avp), rj) in
                    wrow.iter_mut().zip(pv.iter()).zip(av_prev.iter_mut()).zip(row.iter())
                {
                    *wr += zbar * pvj;
                    *avp += rj * zbar;
                }
                if skip {
                    av_prev[i] += av_cur[i];
                }
            }
        }
    }

    /// Reverse pass for one site. Seeds are the loss derivatives with
    /// respect to the output (value, gradient, laplacian); parameter
    /// gradients accumulate into `grad_out`.
    fn backward_lap(
        &self,
        seed_value: f64,
        seed_grad: &[f64],
        seed_lap: f64,
        ws: &Tape,
        adj: &mut Adjoints,
        grad_out: &mut [f64],
    ) {
        let (w, d) = (self.width, self.d);
        let dim = d + 1;
        for l in 0..=self.depth {
            adj.av[l].fill(0.0);
            adj.ag[l].fill(0.0);
            adj.aq[l].fill(0.0);
        }
        // output layer
        let (woff, boff) = self.out_offsets();
        let last = self.depth;
        grad_out[boff] += seed_value;
        for i in 0..w {
            let wi = self.params[woff + i];
            let mut acc = seed_value * ws.va[last][i] + seed_lap * ws.qa[last][i];
            for a in 0..dim {
                acc += seed_grad[a] * ws.ga[last][i * dim + a];
            }
            grad_out[woff + i] += acc;
            adj.av[last][i] = seed_value * wi;
            for a in 0..dim {
                adj.ag[last][i * dim + a] = seed_grad[a] * wi;
            }
            adj.aq[last][i] = seed_lap * wi;
        }
        // weighted layers in reverse
        let mut gzbar = vec![0.0; dim];
        for wl in (0..self.depth).rev() {
            let (woff, boff, fan_in, act, skip) = self.layer_info(wl);
            let (avh, avt) = adj.av.split_at_mut(wl + 1);
            let av_prev = &mut avh[wl];
            let av_cur = &avt[0];
            let (agh, agt) = adj.ag.split_at_mut(wl + 1);
            let ag_prev = &mut agh[wl];
            let ag_cur = &agt[0];
            let (aqh, aqt) = adj.aq.split_at_mut(wl + 1);
            let aq_prev = &mut aqh[wl];
            let aq_cur = &aqt[0];
            let pv = &ws.va[wl];
            let pg = &ws.ga[wl];
            let pq = &ws.qa[wl];
            for i in 0..w {
                let zi = ws.z[wl][i];
                let qzi = ws.qz[wl][i];
                let gzi = &ws.gz[wl][i * dim..(i + 1) * dim];
                let (_, s1, s2, s3) = act_derivs(act, zi);
                let ssum: f64 = gzi[..d].iter().map(|g| g * g).sum();
                let av_i = av_cur[i];
                let ag_i = &ag_cur[i * dim..(i + 1) * dim];
                let aq_i = aq_cur[i];
                // adjoints of the pre-activation bundle
                let mut zbar = av_i * s1 + aq_i * (s3 * ssum + s2 * qzi);
                let mut gdot = 0.0;
                for a in 0..dim {
                    gdot += ag_i[a] * gzi[a];
                }
                zbar += gdot * s2;
                let qbar = aq_i * s1;
                for a in 0..dim {
                    gzbar[a] = s1 * ag_i[a] + if a < d { 2.0 * s2 * aq_i * gzi[a] } else { 0.0 };
                }
                grad_out[boff + i] += zbar;
                let row = &self.params[woff + i * fan_in..woff + (i + 1) * fan_in];
                let wrow = &mut grad_out[woff + i * fan_in..woff + (i + 1) * fan_in];
                let iter = wrow
                    .iter_mut()
                    .zip(row.iter())
                    .zip(pv.iter().zip(pq.iter()))
                    .zip(pg.chunks_exact(dim))
                    .zip(av_prev.iter_mut().zip(aq_prev.iter_mut()))
                    .zip(ag_prev.chunks_exact_mut(dim));
                for (((((wr, rj), (pvj, pqj)), pgj), (avp, aqp)), agp) in iter {
                    let mut acc = zbar * pvj + qbar * pqj;
                    for a in 0..dim {
                        acc += gzbar[a] * pgj[a];
                        agp[a] += rj * gzbar[a];
                    }
                    *wr += acc;
                    *avp += rj * zbar;
                    *aqp += rj * qbar;
                }
                if skip {
                    av_prev[i] += av_i;
                    for a in 0..dim {
                        ag_prev[i * dim + a] += ag_i[a];
                    }
                    aq_prev[i] += aq_i;
                }
            }
        }
    }

    /// Evaluate value/gradient/Laplacian at every site of a flat
    /// `(x.., t)` list (the training-path evaluations).
    pub fn site_evals(&self, sites: &[f64]) -> SiteEvals {
        let dim = self.d + 1;
        assert!(sites.len().is_multiple_of(dim), "site list not a multiple of d+1");
        let n = sites.len() / dim;
        let mut ev = SiteEvals::zeros(n, dim);
        let mut ws = Tape::new(self);
        for s in 0..n {
            let row = &sites[s * dim..(s + 1) * dim];
            let (v, g, q) = self.forward_lap_tape(&row[..self.d], row[self.d], &mut ws);
            ev.values[s] = v;
            ev.grads[s * dim..(s + 1) * dim].copy_from_slice(&g);
            ev.laps[s] = q;
        }
        ev
    }

    /// Exact gradient of a site-based scalar loss with respect to the
    /// flat parameter vector. Returns (loss value, gradient).
    ///
    /// Builds a fresh [`GradientEngine`]; callers evaluating the same
    /// loss repeatedly should hold an engine instead.
    pub fn param_gradient<L: SiteLoss>(&self, loss: &L) -> Result<(f64, Vec<f64>)> {
        let dim = self.d + 1;
        let mut engine = GradientEngine::new(self, loss.sites().len() / dim);
        engine.gradient(self, loss)
    }

    /// Write the checkpoint: five little-endian u64 header words
    /// (d, W, L, skip flag, seed) followed by the flat parameter vector
    /// as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for v in [
            self.d as u64,
            self.width as u64,
            self.depth as u64,
            self.skip as u64,
            self.seed,
        ] {
            f.write_all(&v.to_le_bytes())?;
        }
        for p in &self.params {
            f.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut buf8 = [0u8; 8];
        let mut header = [0u64; 5];
        for h in header.iter_mut() {
            f.read_exact(&mut buf8)?;
            *h = u64::from_le_bytes(buf8);
        }
        let (d, width, depth, skip, seed) = (
            header[0] as usize,
            header[1] as usize,
            header[2] as usize,
            header[3] != 0,
            header[4],
        );
        if width < 1 || depth < 2 || d < 1 {
            return Err(Error::Parse("checkpoint header has invalid shape".into()));
        }
        let count = Self::param_count_for(width, depth, d);
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            f.read_exact(&mut buf8)?;
            params.push(f64::from_le_bytes(buf8));
        }
        if f.read(&mut buf8)? != 0 {
            return Err(Error::Parse("checkpoint has trailing bytes".into()));
        }
        Ok(MlpNetwork {
            d,
            width,
            depth,
            skip,
            seed,
            params,
        })
    }
}

/// Central finite-difference jet of the network output; test oracle only.
pub fn finite_diff_jet(net: &MlpNetwork, x: &[f64], t: f64, h: f64) -> Jet {
    let d = net.d;
    let f = |x: &[f64], t: f64| net.forward(x, t);
    let value = f(x, t);
    let mut grad_x = vec![0.0; d];
    let mut hess_x = vec![0.0; d * d];
    let mut xp = x.to_vec();
    for a in 0..d {
        xp.copy_from_slice(x);
        xp[a] = x[a] + h;
        let fp = f(&xp, t);
        xp[a] = x[a] - h;
        let fm = f(&xp, t);
        grad_x[a] = (fp - fm) / (2.0 * h);
        hess_x[a * d + a] = (fp - 2.0 * value + fm) / (h * h);
    }
    for a in 0..d {
        for b in a + 1..d {
            xp.copy_from_slice(x);
            xp[a] = x[a] + h;
            xp[b] = x[b] + h;
            let fpp = f(&xp, t);
            xp[b] = x[b] - h;
            let fpm = f(&xp, t);
            xp[a] = x[a] - h;
            xp[b] = x[b] + h;
            let fmp = f(&xp, t);
            xp[b] = x[b] - h;
            let fmm = f(&xp, t);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess_x[a * d + b] = v;
            hess_x[b * d + a] = v;
        }
    }
    let dt = (f(x, t + h) - f(x, t - h)) / (2.0 * h);
    let laplacian = (0..d).map(|a| hess_x[a * d + a]).sum();
    Jet {
        value,
        grad_x,
        dt,
        hess_x,
        laplacian,
    }
}

/// Central finite-difference parameter gradient of a site loss; test
/// oracle only.
pub fn finite_diff_param_grad<L: SiteLoss>(net: &MlpNetwork, loss: &L, h: f64) -> Result<Vec<f64>> {
    let mut work = net.clone();
    let mut grad = vec![0.0; net.param_count()];
    for p in 0..net.param_count() {
        let orig = net.params[p];
        work.params[p] = orig + h;
        let (lp, _) = eval_loss(&work, loss)?;
        work.params[p] = orig - h;
        let (lm, _) = eval_loss(&work, loss)?;
        work.params[p] = orig;
        grad[p] = (lp - lm) / (2.0 * h);
    }
    Ok(grad)
}

fn eval_loss<L: SiteLoss>(net: &MlpNetwork, loss: &L) -> Result<(f64, SeedBuf)> {
    let ev = net.site_evals(loss.sites());
    loss.loss_and_seeds(&ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Quadratic loss touching every seed channel:
    /// sum of (v + q/2 - v_t)^2 + (g_1)^2 / 4 over the sites.
    struct QuadLoss {
        d: usize,
        sites: Vec<f64>,
    }

    impl SiteLoss for QuadLoss {
        fn dim(&self) -> usize {
            self.d
        }

        fn sites(&self) -> &[f64] {
            &self.sites
        }

        fn loss_and_seeds(&self, ev: &SiteEvals) -> Result<(f64, SeedBuf)> {
            let dim = self.d + 1;
            let mut seeds = SeedBuf::zeros(ev.n, dim);
            let mut loss = 0.0;
            for s in 0..ev.n {
                let v = ev.values[s];
                let q = ev.laps[s];
                let dt = ev.dt(s);
                let g0 = ev.grads[s * dim];
                let r = v + 0.5 * q - dt;
                loss += r * r + 0.25 * g0 * g0;
                seeds.values[s] = 2.0 * r;
                seeds.laps[s] = r;
                seeds.grads[s * dim + dim - 1] = -2.0 * r;
                seeds.grads[s * dim] = 0.5 * g0;
            }
            Ok((loss, seeds))
        }
    }

    fn probe_sites(d: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * (d + 1))
            .map(|_| rng.gen_range(0.05..0.95))
            .collect()
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let a = MlpNetwork::init(8, 3, 2, 11, true).unwrap();
        let b = MlpNetwork::init(8, 3, 2, 11, true).unwrap();
        assert_eq!(a.params, b.params);
        let c = MlpNetwork::init(8, 3, 2, 12, true).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn parameter_count_formula() {
        let net = MlpNetwork::init(20, 4, 2, 0, true).unwrap();
        assert_eq!(net.param_count(), 1361); // 80 + 3*420 + 21
        assert_eq!(net.params.len(), 1361);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(MlpNetwork::init(0, 3, 2, 0, true).is_err());
        assert!(MlpNetwork::init(4, 1, 2, 0, true).is_err());
    }

    #[test]
    fn zero_network_outputs_its_bias() {
        let mut net = MlpNetwork::init(6, 3, 2, 5, true).unwrap();
        net.params.fill(0.0);
        let boff = net.output_bias_index();
        net.params[boff] = -1.75;
        assert_eq!(net.forward(&[0.3, 0.8], 0.2), -1.75);
        // jet of the zero network is all zeros
        net.params[boff] = 0.0;
        let j = net.jet(&[0.3, 0.8], 0.2);
        assert_eq!(j, Jet::zero(2));
    }

    #[test]
    fn two_neuron_hand_computation() {
        // d=1, W=1, L=2, no skips:
        // u = w4 relu3(w3 tanh(w1 x + w2 t + b1) + b2) + b_out
        let mut net = MlpNetwork::init(1, 2, 1, 0, false).unwrap();
        net.params.copy_from_slice(&[0.5, -0.3, 0.1, 1.2, 0.05, 2.0, -0.7]);
        let (x, t) = (0.4, 0.9);
        let a1 = (0.5 * x - 0.3 * t + 0.1_f64).tanh();
        let z2 = 1.2 * a1 + 0.05;
        let a2 = z2.max(0.0).powi(3);
        let by_hand = 2.0 * a2 - 0.7;
        assert_relative_eq!(net.forward(&[x], t), by_hand, epsilon = 1e-15);
    }

    #[test]
    fn forward_is_continuous() {
        let net = MlpNetwork::init(10, 3, 2, 3, true).unwrap();
        let base = net.forward(&[0.5, 0.5], 0.5);
        for eps in [1e-3, 1e-6, 1e-9] {
            let v = net.forward(&[0.5 + eps, 0.5], 0.5);
            assert!((v - base).abs() < 1e3 * eps);
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        for seed in 0..20u64 {
            let net = MlpNetwork::init(6, 3, 2, seed, seed % 2 == 0).unwrap();
            let sites = probe_sites(2, 1, seed + 100);
            let (x, t) = (&sites[..2], sites[2]);
            let jet = net.jet(x, t);
            let fd = finite_diff_jet(&net, x, t, 1e-4);
            let scale = 1.0 + jet.value.abs();
            assert!((jet.value - fd.value).abs() / scale < 1e-10);
            assert!((jet.dt - fd.dt).abs() / (1.0 + fd.dt.abs()) < 1e-4);
            for a in 0..2 {
                assert!((jet.grad_x[a] - fd.grad_x[a]).abs() / (1.0 + fd.grad_x[a].abs()) < 1e-4);
            }
            for a in 0..4 {
                assert!(
                    (jet.hess_x[a] - fd.hess_x[a]).abs() / (1.0 + fd.hess_x[a].abs()) < 1e-4,
                    "hess[{a}]: {} vs {}",
                    jet.hess_x[a],
                    fd.hess_x[a]
                );
            }
        }
    }

    #[test]
    fn laplacian_is_hessian_trace() {
        let net = MlpNetwork::init(7, 4, 3, 9, true).unwrap();
        let sites = probe_sites(3, 25, 1);
        for s in 0..25 {
            let row = &sites[s * 4..(s + 1) * 4];
            let j = net.jet(&row[..3], row[3]);
            let tr: f64 = (0..3).map(|a| j.hess_x[a * 3 + a]).sum();
            assert_relative_eq!(j.laplacian, tr, epsilon = 1e-12, max_relative = 1e-12);
            for a in 0..3 {
                for b in 0..3 {
                    assert_relative_eq!(j.hess_x[a * 3 + b], j.hess_x[b * 3 + a], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn training_path_agrees_with_full_jet() {
        let net = MlpNetwork::init(9, 4, 2, 21, true).unwrap();
        let sites = probe_sites(2, 40, 2);
        let ev = net.site_evals(&sites);
        for s in 0..40 {
            let row = &sites[s * 3..(s + 1) * 3];
            let j = net.jet(&row[..2], row[2]);
            assert_relative_eq!(ev.values[s], j.value, epsilon = 1e-13, max_relative = 1e-12);
            assert_relative_eq!(ev.laps[s], j.laplacian, epsilon = 1e-11, max_relative = 1e-11);
            assert_relative_eq!(ev.dt(s), j.dt, epsilon = 1e-13, max_relative = 1e-12);
            for a in 0..2 {
                assert_relative_eq!(
                    ev.grads[s * 3 + a],
                    j.grad_x[a],
                    epsilon = 1e-13,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        for (w, l, skip) in [(4usize, 3usize, true), (8, 3, false), (5, 2, true)] {
            let net = MlpNetwork::init(w, l, 2, 77, skip).unwrap();
            assert!(net.param_count() <= 500);
            let loss = QuadLoss {
                d: 2,
                sites: probe_sites(2, 7, 3),
            };
            let (_, grad) = net.param_gradient(&loss).unwrap();
            let fd = finite_diff_param_grad(&net, &loss, 1e-6).unwrap();
            let num: f64 = grad
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(num / den < 1e-5, "W={w} L={l}: rel err {}", num / den);
        }
    }

    #[test]
    fn gradient_of_zero_network_value_loss() {
        // loss = forward(x0); at the zero network only the output-bias
        // path is active, so the gradient is e_{b_out}.
        struct ValueLoss {
            sites: Vec<f64>,
        }
        impl SiteLoss for ValueLoss {
            fn dim(&self) -> usize {
                2
            }
            fn sites(&self) -> &[f64] {
                &self.sites
            }
            fn loss_and_seeds(&self, ev: &SiteEvals) -> Result<(f64, SeedBuf)> {
                let mut seeds = SeedBuf::zeros(ev.n, ev.dim);
                seeds.values[0] = 1.0;
                Ok((ev.values[0], seeds))
            }
        }
        let mut net = MlpNetwork::init(4, 3, 2, 0, true).unwrap();
        net.params.fill(0.0);
        let loss = ValueLoss {
            sites: vec![0.3, 0.4, 0.5],
        };
        let (value, grad) = net.param_gradient(&loss).unwrap();
        assert_eq!(value, 0.0);
        let boff = net.output_bias_index();
        for (p, g) in grad.iter().enumerate() {
            if p == boff {
                assert_relative_eq!(*g, 1.0);
            } else {
                assert_eq!(*g, 0.0, "param {p}");
            }
        }
    }

    #[test]
    fn gradient_scales_linearly_and_vanishes_for_constants() {
        struct Scaled {
            alpha: f64,
            inner: QuadLoss,
        }
        impl SiteLoss for Scaled {
            fn dim(&self) -> usize {
                self.inner.dim()
            }
            fn sites(&self) -> &[f64] {
                self.inner.sites()
            }
            fn loss_and_seeds(&self, ev: &SiteEvals) -> Result<(f64, SeedBuf)> {
                let (l, mut s) = self.inner.loss_and_seeds(ev)?;
                for v in s
                    .values
                    .iter_mut()
                    .chain(s.grads.iter_mut())
                    .chain(s.laps.iter_mut())
                {
                    *v *= self.alpha;
                }
                Ok((self.alpha * l, s))
            }
        }
        let net = MlpNetwork::init(5, 3, 2, 13, true).unwrap();
        let inner = QuadLoss {
            d: 2,
            sites: probe_sites(2, 5, 9),
        };
        let (_, g1) = net.param_gradient(&inner).unwrap();
        let scaled = Scaled {
            alpha: 3.0,
            inner: QuadLoss {
                d: 2,
                sites: probe_sites(2, 5, 9),
            },
        };
        let (_, g3) = net.param_gradient(&scaled).unwrap();
        for (a, b) in g1.iter().zip(&g3) {
            assert_relative_eq!(3.0 * a, *b, epsilon = 1e-12, max_relative = 1e-12);
        }
        // constant loss: zero seeds -> zero gradient
        struct Constant {
            sites: Vec<f64>,
        }
        impl SiteLoss for Constant {
            fn dim(&self) -> usize {
                2
            }
            fn sites(&self) -> &[f64] {
                &self.sites
            }
            fn loss_and_seeds(&self, ev: &SiteEvals) -> Result<(f64, SeedBuf)> {
                Ok((42.0, SeedBuf::zeros(ev.n, ev.dim)))
            }
        }
        let (_, g) = net
            .param_gradient(&Constant {
                sites: probe_sites(2, 3, 4),
            })
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let dir = std::env::temp_dir().join("cpinn_net_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.bin");
        let net = MlpNetwork::init(6, 3, 2, 123, false).unwrap();
        net.save(&path).unwrap();
        let back = MlpNetwork::load(&path).unwrap();
        assert_eq!(net.params, back.params);
        assert_eq!(net.d, back.d);
        assert_eq!(net.width, back.width);
        assert_eq!(net.depth, back.depth);
        assert_eq!(net.skip, back.skip);
        assert_eq!(net.seed, back.seed);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn outputs_stay_finite_in_unit_box() {
        let net = MlpNetwork::init(12, 4, 2, 31, true).unwrap();
        let sites = probe_sites(2, 100, 17);
        for s in 0..100 {
            let row = &sites[s * 3..(s + 1) * 3];
            let j = net.jet(&row[..2], row[2]);
            assert!(j.value.is_finite() && j.dt.is_finite() && j.laplacian.is_finite());
        }
    }
}
