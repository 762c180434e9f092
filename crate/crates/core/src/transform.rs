//! Filter pair (A, B) with Kronecker structure and the KKL transform T
//! evaluated as a truncated backward integral.
//!
//! T(x) = integral over s in [-tau, 0] of exp(-k A s) B h(X(x, s)) ds,
//! where X is the backward flow of the cutoff field. The backward flow, the
//! variational equation, and the quadrature all share one fixed RK4 grid;
//! the per-node factors exp(k A_o j h) B_o are precomputed once per field.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynsys::{self, Direction, DomainSpec, Rk4Scratch, State, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::{norm2, sigma_stats, Mat};
use crate::math;
use crate::rng::SplitMix64;

/// Requested filter eigenvalue: a negative real or a complex-conjugate pair
/// (which contributes a 2x2 rotation block).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigSpec {
    Real(f64),
    ComplexPair { re: f64, im: f64 },
}

impl EigSpec {
    fn size(&self) -> usize {
        match self {
            EigSpec::Real(_) => 1,
            EigSpec::ComplexPair { .. } => 2,
        }
    }

    fn re(&self) -> f64 {
        match self {
            EigSpec::Real(v) => *v,
            EigSpec::ComplexPair { re, .. } => *re,
        }
    }
}

/// The pair (A, B) = (I_{n_y} (x) A_o, I_{n_y} (x) B_o) driving the filter.
#[derive(Debug, Clone)]
pub struct FilterPair {
    pub n_y: usize,
    pub n_o: usize,
    pub a_o: Mat,
    pub b_o: Vec<f64>,
    /// Hurwitz margin: -max Re(eig(A_o)) > 0.
    pub rho: f64,
    /// Condition number of the controllability matrix of (A_o, B_o).
    pub ctrb_cond: f64,
    eigs: Vec<EigSpec>,
}

/// Block-diagonal A_o with the requested spectrum and B_o = all-ones
/// (optionally perturbed when `seed != 0` to realize the "almost any pair"
/// genericity). Rejects non-Hurwitz spectra and uncontrollable pairs.
pub fn make_filter_pair(
    n_y: usize,
    n_o: usize,
    eigs: &[EigSpec],
    seed: u64,
) -> Result<FilterPair> {
    if n_y == 0 || n_o == 0 {
        return Err(Error::Precondition("n_y and n_o must be positive"));
    }
    let total: usize = eigs.iter().map(|e| e.size()).sum();
    if total != n_o {
        return Err(Error::Precondition("eigenvalue list does not fill n_o"));
    }
    for e in eigs {
        if !(e.re() < 0.0) {
            return Err(Error::NotHurwitz { re: e.re() });
        }
    }
    let mut a_o = Mat::zeros(n_o, n_o);
    let mut off = 0;
    for e in eigs {
        match e {
            EigSpec::Real(l) => {
                a_o.set(off, off, *l);
                off += 1;
            }
            EigSpec::ComplexPair { re, im } => {
                a_o.set(off, off, *re);
                a_o.set(off, off + 1, *im);
                a_o.set(off + 1, off, -*im);
                a_o.set(off + 1, off + 1, *re);
                off += 2;
            }
        }
    }
    let mut b_o = vec![1.0; n_o];
    if seed != 0 {
        let mut rng = SplitMix64::new(seed);
        for v in b_o.iter_mut() {
            *v += 0.05 * rng.uniform(-1.0, 1.0);
        }
    }
    // Controllability matrix [B, AB, ..., A^{n_o-1}B].
    let mut ctrb = Mat::zeros(n_o, n_o);
    let mut col = b_o.clone();
    for j in 0..n_o {
        for i in 0..n_o {
            ctrb.set(i, j, col[i]);
        }
        col = a_o.matvec(&col);
    }
    let (smin, smax, cond) = sigma_stats(&ctrb);
    if smin <= 1e-10 * smax {
        return Err(Error::NotControllable { cond });
    }
    let rho = -eigs.iter().map(|e| e.re()).fold(f64::NEG_INFINITY, f64::max);
    Ok(FilterPair { n_y, n_o, a_o, b_o, rho, ctrb_cond: cond, eigs: eigs.to_vec() })
}

impl FilterPair {
    pub fn n_z(&self) -> usize {
        self.n_o * self.n_y
    }

    /// A = I_{n_y} (x) A_o, assembled.
    pub fn a_full(&self) -> Mat {
        let nz = self.n_z();
        let mut a = Mat::zeros(nz, nz);
        for blk in 0..self.n_y {
            for i in 0..self.n_o {
                for j in 0..self.n_o {
                    a.set(blk * self.n_o + i, blk * self.n_o + j, self.a_o.get(i, j));
                }
            }
        }
        a
    }

    /// B = I_{n_y} (x) B_o, assembled (n_z x n_y).
    pub fn b_full(&self) -> Mat {
        let mut b = Mat::zeros(self.n_z(), self.n_y);
        for blk in 0..self.n_y {
            for i in 0..self.n_o {
                b.set(blk * self.n_o + i, blk, self.b_o[i]);
            }
        }
        b
    }

    /// exp(t A_o) B_o, evaluated exactly from the block structure.
    pub fn exp_a_o_b(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_o];
        let mut off = 0;
        for e in &self.eigs {
            match e {
                EigSpec::Real(l) => {
                    out[off] = math::exp(l * t) * self.b_o[off];
                    off += 1;
                }
                EigSpec::ComplexPair { re, im } => {
                    let amp = math::exp(re * t);
                    let (s, c) = math::sincos(im * t);
                    let b0 = self.b_o[off];
                    let b1 = self.b_o[off + 1];
                    out[off] = amp * (c * b0 + s * b1);
                    out[off + 1] = amp * (-s * b0 + c * b1);
                    off += 2;
                }
            }
        }
        out
    }

    /// k * A z, using the Kronecker block structure.
    pub fn apply_a(&self, k: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_z()];
        for blk in 0..self.n_y {
            let zs = &z[blk * self.n_o..(blk + 1) * self.n_o];
            for i in 0..self.n_o {
                let mut acc = 0.0;
                for j in 0..self.n_o {
                    acc += self.a_o.get(i, j) * zs[j];
                }
                out[blk * self.n_o + i] = k * acc;
            }
        }
        out
    }

    /// B y: output channel i drives z-block i through B_o.
    pub fn apply_b(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_z()];
        for blk in 0..self.n_y {
            for i in 0..self.n_o {
                out[blk * self.n_o + i] = self.b_o[i] * y[blk];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransformOpts {
    pub step: f64,
    pub tol_trunc: f64,
    pub k: f64,
    /// Truncation horizon; computed from the tail bound when absent.
    pub tau: Option<f64>,
}

impl Default for TransformOpts {
    fn default() -> Self {
        Self { step: 1e-3, tol_trunc: 1e-6, k: 1.0, tau: None }
    }
}

/// Numerical evaluator of T and dT/dx for one (system, pair, k) choice.
#[derive(Debug)]
pub struct TransformField {
    pub system: SystemModel,
    pub pair: FilterPair,
    pub k: f64,
    pub step: f64,
    pub tol_trunc: f64,
    /// Truncation horizon actually used (a whole even number of steps).
    pub tau: f64,
    /// Bound on |B h| over the invariant ball that sized tau.
    pub sup_bh: f64,
    r_zero: f64,
    n_steps: usize,
    /// Per-node fused quadrature weights: simpson_j * exp(k A_o (j h)) B_o.
    node_weights: Vec<f64>,
    /// Evaluation counter (profiling only; not part of any result).
    evals: core::sync::atomic::AtomicU64,
}

impl Clone for TransformField {
    fn clone(&self) -> Self {
        Self {
            system: self.system.clone(),
            pair: self.pair.clone(),
            k: self.k,
            step: self.step,
            tol_trunc: self.tol_trunc,
            tau: self.tau,
            sup_bh: self.sup_bh,
            r_zero: self.r_zero,
            n_steps: self.n_steps,
            node_weights: self.node_weights.clone(),
            evals: core::sync::atomic::AtomicU64::new(0),
        }
    }
}

impl TransformField {
    /// `system` must already be backward-invariantized via
    /// [`dynsys::cutoff_field`].
    pub fn new(system: SystemModel, pair: FilterPair, opts: TransformOpts) -> Result<Self> {
        let (_, r_zero) = system
            .cutoff
            .ok_or(Error::Precondition("transform needs a cutoff system"))?;
        if system.n_y != pair.n_y {
            return Err(Error::Precondition("pair n_y does not match system"));
        }
        if !(opts.step > 0.0) || !(opts.tol_trunc > 0.0) || !(opts.k > 0.0) {
            return Err(Error::Precondition("step, tol_trunc and k must be positive"));
        }
        let sup_bh = sup_output_bound(&system, r_zero) * norm2(&pair.b_o);
        let decay = opts.k * pair.rho;
        let tau_required = math::ln((sup_bh / (opts.tol_trunc * decay)).max(2.0)) / decay;
        let tau = match opts.tau {
            Some(t) => {
                if t < tau_required {
                    return Err(Error::TauTooShort { requested: t, required: tau_required });
                }
                t
            }
            None => tau_required,
        };
        let mut n_steps = dynsys::step_count(tau, opts.step);
        if n_steps % 2 == 1 {
            n_steps += 1;
        }
        let tau_used = n_steps as f64 * opts.step;
        let n_o = pair.n_o;
        let mut node_weights = vec![0.0; (n_steps + 1) * n_o];
        for j in 0..=n_steps {
            let simpson = if j == 0 || j == n_steps {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            } * opts.step
                / 3.0;
            let w = pair.exp_a_o_b(opts.k * j as f64 * opts.step);
            for l in 0..n_o {
                node_weights[j * n_o + l] = simpson * w[l];
            }
        }
        Ok(Self {
            system,
            pair,
            k: opts.k,
            step: opts.step,
            tol_trunc: opts.tol_trunc,
            tau: tau_used,
            sup_bh,
            r_zero,
            n_steps,
            node_weights,
            evals: core::sync::atomic::AtomicU64::new(0),
        })
    }

    pub fn n_z(&self) -> usize {
        self.pair.n_z()
    }

    fn check_inside(&self, x: &[f64]) -> Result<()> {
        let r = norm2(x);
        if !r.is_finite() || r > self.r_zero + 1e-9 {
            return Err(Error::OutsideCutoff { norm: r, r_zero: self.r_zero });
        }
        Ok(())
    }

    /// T(x) by the truncated backward integral.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_core(x, false)?.0)
    }

    /// dT/dx by integrating the variational equation along the same grid.
    pub fn jacobian(&self, x: &[f64]) -> Result<Mat> {
        Ok(self.eval_core(x, true)?.1.expect("jacobian requested"))
    }

    /// T(x) and dT/dx from one backward pass.
    pub fn evaluate_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Mat)> {
        let (z, j) = self.eval_core(x, true)?;
        Ok((z, j.expect("jacobian requested")))
    }

    /// Number of transform evaluations since construction (profiling aid).
    pub fn eval_count(&self) -> u64 {
        self.evals.load(core::sync::atomic::Ordering::Relaxed)
    }

    fn eval_core(&self, x: &[f64], want_jac: bool) -> Result<(Vec<f64>, Option<Mat>)> {
        self.evals.fetch_add(1, core::sync::atomic::Ordering::Relaxed);
        self.check_inside(x)?;
        let n_x = self.system.n_x;
        let n_y = self.system.n_y;
        let n_o = self.pair.n_o;
        let n_z = self.n_z();
        let dim = if want_jac { n_x + n_x * n_x } else { n_x };

        // Joint backward state: plant coordinates then the variational
        // matrix, flattened row-major.
        let mut state = vec![0.0; dim];
        state[..n_x].copy_from_slice(x);
        if want_jac {
            for i in 0..n_x {
                state[n_x + i * n_x + i] = 1.0;
            }
        }

        let mut z = vec![0.0; n_z];
        let mut jac = if want_jac { Some(Mat::zeros(n_z, n_x)) } else { None };
        let mut scratch = Rk4Scratch::new(dim);
        let mut hbuf = vec![0.0; n_y];
        let mut dfbuf = vec![0.0; n_x * n_x];
        let mut dhbuf = vec![0.0; n_y * n_x];
        let mut gbuf = vec![0.0; n_y * n_x];

        let sys = &self.system;
        let mut deriv = |s: &[f64], out: &mut [f64]| {
            sys.f_into(&s[..n_x], &mut out[..n_x]);
            for v in out[..n_x].iter_mut() {
                *v = -*v;
            }
            if want_jac {
                sys.df_into(&s[..n_x], &mut dfbuf);
                // d(psi)/du = -df(x) psi  (u is backward time).
                for i in 0..n_x {
                    for j in 0..n_x {
                        let mut acc = 0.0;
                        for r in 0..n_x {
                            acc += dfbuf[i * n_x + r] * s[n_x + r * n_x + j];
                        }
                        out[n_x + i * n_x + j] = -acc;
                    }
                }
            }
        };

        for node in 0..=self.n_steps {
            let w = &self.node_weights[node * n_o..(node + 1) * n_o];
            sys.h_into(&state[..n_x], &mut hbuf);
            for i in 0..n_y {
                let hv = hbuf[i];
                let zs = &mut z[i * n_o..(i + 1) * n_o];
                for l in 0..n_o {
                    zs[l] += w[l] * hv;
                }
            }
            if let Some(j) = jac.as_mut() {
                sys.dh_into(&state[..n_x], &mut dhbuf);
                // G = dh(x) psi.
                for i in 0..n_y {
                    for c in 0..n_x {
                        let mut acc = 0.0;
                        for r in 0..n_x {
                            acc += dhbuf[i * n_x + r] * state[n_x + r * n_x + c];
                        }
                        gbuf[i * n_x + c] = acc;
                    }
                }
                for i in 0..n_y {
                    for l in 0..n_o {
                        let row = i * n_o + l;
                        for c in 0..n_x {
                            j.data[row * n_x + c] += w[l] * gbuf[i * n_x + c];
                        }
                    }
                }
            }
            if node < self.n_steps {
                dynsys::rk4_step(&mut deriv, &mut state, self.step, &mut scratch);
                if state.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { t: -((node + 1) as f64) * self.step });
                }
            }
        }
        Ok((z, jac))
    }

    /// Flow-based directional residual of the defining identity
    /// dT/dx f = k A T + B h: |(T(X(x, delta)) - T(x)) / delta - rhs|.
    pub fn pde_residual(&self, x: &[f64], delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(Error::Precondition("delta must be positive"));
        }
        let t0 = self.evaluate(x)?;
        let x_fwd = dynsys::flow(&self.system, x, delta, Direction::Forward, delta.min(self.step))?;
        let t1 = self.evaluate(&x_fwd)?;
        let mut rhs = self.pair.apply_a(self.k, &t0);
        let hx = self.system.h(x);
        let bh = self.pair.apply_b(&hx);
        let mut acc = 0.0;
        for i in 0..t0.len() {
            rhs[i] += bh[i];
            let d = (t1[i] - t0[i]) / delta - rhs[i];
            acc += d * d;
        }
        Ok(math::sqrt(acc))
    }
}

/// 1.5x-padded bound of |h| sampled over the `r_zero` ball. The caller
/// multiplies by |B_o| since |B h| = |B_o| |h| under the Kronecker split.
fn sup_output_bound(system: &SystemModel, r_zero: f64) -> f64 {
    let n_x = system.n_x;
    let res = match n_x {
        1 => 65,
        2 => 33,
        _ => 13,
    };
    let axis = dynsys::axis_grid(-r_zero, r_zero, res);
    let total = axis.len().pow(n_x as u32);
    let mut hbuf = vec![0.0; system.n_y];
    let mut point = vec![0.0; n_x];
    let mut sup = 0.0f64;
    for flat in 0..total {
        let mut idx = flat;
        for ax in 0..n_x {
            point[ax] = axis[idx % axis.len()];
            idx /= axis.len();
        }
        if norm2(&point) > r_zero {
            continue;
        }
        system.h_into(&point, &mut hbuf);
        sup = sup.max(norm2(&hbuf));
    }
    sup * 1.5
}

/// Tabulation of T and Jacobian conditioning over a domain grid.
#[derive(Debug, Clone)]
pub struct ImageAtlas {
    pub points: Vec<State>,
    pub images: Vec<Vec<f64>>,
    pub jac_sigma_min: Vec<f64>,
    pub jac_sigma_max: Vec<f64>,
    pub jac_cond: Vec<f64>,
    /// Smallest axis spacing of the generating grid.
    pub grid_spacing: f64,
    pub n_x: usize,
    pub n_z: usize,
    /// The compact set the tabulation covers; inversions constrain to it.
    pub domain: DomainSpec,
}

impl ImageAtlas {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Evaluate T and Jacobian singular values on the domain grid, row-major;
/// grid points outside the domain are excluded.
pub fn tabulate_image(field: &TransformField, domain: &DomainSpec) -> Result<ImageAtlas> {
    let grid = domain.grid();
    let mut atlas = ImageAtlas {
        points: Vec::with_capacity(grid.len()),
        images: Vec::with_capacity(grid.len()),
        jac_sigma_min: Vec::with_capacity(grid.len()),
        jac_sigma_max: Vec::with_capacity(grid.len()),
        jac_cond: Vec::with_capacity(grid.len()),
        grid_spacing: grid_spacing(domain),
        n_x: field.system.n_x,
        n_z: field.n_z(),
        domain: domain.clone(),
    };
    for p in grid {
        let (z, jac) = field.evaluate_with_jacobian(&p)?;
        let (smin, smax, cond) = sigma_stats(&jac);
        atlas.points.push(p);
        atlas.images.push(z);
        atlas.jac_sigma_min.push(smin);
        atlas.jac_sigma_max.push(smax);
        atlas.jac_cond.push(cond);
    }
    Ok(atlas)
}

fn grid_spacing(domain: &DomainSpec) -> f64 {
    let (lo, hi) = domain.bounding_box();
    let n = domain.grid_resolution.max(1);
    if n == 1 {
        return 0.0;
    }
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| (h - l) / (n - 1) as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Relative threshold under which a singular value counts as rank-deficient.
pub const RANK_TOL_REL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ConditioningReport {
    pub min_sigma_min: f64,
    pub max_cond: f64,
    /// Every tabulated Jacobian has sigma_min > RANK_TOL_REL * sigma_max.
    pub full_rank: bool,
    pub rank_tol_rel: f64,
    /// Grid point attaining the worst conditioning.
    pub worst_point: State,
}

/// Summarize the Jacobian conditioning of an atlas.
pub fn conditioning_map(atlas: &ImageAtlas) -> Result<ConditioningReport> {
    if atlas.is_empty() {
        return Err(Error::Precondition("atlas must be nonempty"));
    }
    let mut min_sigma_min = f64::INFINITY;
    let mut max_cond = 0.0f64;
    let mut full_rank = true;
    let mut worst = 0usize;
    for i in 0..atlas.len() {
        let smin = atlas.jac_sigma_min[i];
        let smax = atlas.jac_sigma_max[i];
        min_sigma_min = min_sigma_min.min(smin);
        if atlas.jac_cond[i] > max_cond {
            max_cond = atlas.jac_cond[i];
            worst = i;
        }
        if !(smin > RANK_TOL_REL * smax) {
            full_rank = false;
            worst = i;
        }
    }
    Ok(ConditioningReport {
        min_sigma_min,
        max_cond,
        full_rank,
        rank_tol_rel: RANK_TOL_REL,
        worst_point: atlas.points[worst].clone(),
    })
}
