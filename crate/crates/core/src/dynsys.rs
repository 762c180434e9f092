//! Plant models and fixed-step ODE machinery.
//!
//! Everything is deterministic: a fixed-step classical RK4 with the final
//! step shortened to land exactly on the requested endpoint. Adaptive
//! stepping is deliberately absent — regression outputs must be bit-stable.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{norm2, Mat};
use crate::math;
use crate::rng::SplitMix64;

pub type State = Vec<f64>;

/// Maps a state to a fixed-size output written into the provided buffer.
type DynFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Analytic indistinguishable-set map, when an example registers one.
pub type IndistMap = Arc<dyn Fn(&[f64]) -> Vec<State> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

/// Compact region the trajectories of interest live in.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub grid_resolution: usize,
}

impl DomainSpec {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>, grid_resolution: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidDomain("box bounds must share a nonzero dimension"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidDomain("box must have nonempty interior"));
        }
        Ok(Self { kind: DomainKind::Box { lo, hi }, grid_resolution })
    }

    pub fn new_ball(center: Vec<f64>, radius: f64, grid_resolution: usize) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0) {
            return Err(Error::InvalidDomain("ball needs positive radius"));
        }
        Ok(Self { kind: DomainKind::Ball { center, radius }, grid_resolution })
    }

    pub fn new_annulus(
        center: Vec<f64>,
        inner: f64,
        outer: f64,
        grid_resolution: usize,
    ) -> Result<Self> {
        if center.is_empty() || !(inner > 0.0) || !(inner < outer) {
            return Err(Error::InvalidDomain("annulus needs 0 < inner < outer"));
        }
        Ok(Self { kind: DomainKind::Annulus { center, inner, outer }, grid_resolution })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DomainKind::Box { lo, .. } => lo.len(),
            DomainKind::Ball { center, .. } | DomainKind::Annulus { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            DomainKind::Box { lo, hi } => {
                x.iter().zip(lo).all(|(v, l)| v >= l) && x.iter().zip(hi).all(|(v, h)| v <= h)
            }
            DomainKind::Ball { center, radius } => dist_to(center, x) <= *radius,
            DomainKind::Annulus { center, inner, outer } => {
                let r = dist_to(center, x);
                r >= *inner && r <= *outer
            }
        }
    }

    /// Nearest point of the domain (componentwise clamp for boxes, radial
    /// clamp for balls and annuli).
    pub fn project(&self, x: &[f64]) -> State {
        match &self.kind {
            DomainKind::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.max(*l).min(*h))
                .collect(),
            DomainKind::Ball { center, radius } => radial_clamp(center, x, 0.0, *radius),
            DomainKind::Annulus { center, inner, outer } => radial_clamp(center, x, *inner, *outer),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            DomainKind::Box { lo, hi } => (lo.clone(), hi.clone()),
            DomainKind::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainKind::Annulus { center, outer, .. } => (
                center.iter().map(|c| c - outer).collect(),
                center.iter().map(|c| c + outer).collect(),
            ),
        }
    }

    /// Largest distance from the origin to a domain point. The cutoff bump
    /// is radial about the origin, so this is what `r_keep` must cover.
    pub fn enclosing_radius(&self) -> f64 {
        match &self.kind {
            DomainKind::Box { lo, hi } => {
                let mut worst: f64 = 0.0;
                let n = lo.len();
                for corner in 0..(1usize << n) {
                    let mut acc = 0.0;
                    for i in 0..n {
                        let v = if corner >> i & 1 == 1 { hi[i] } else { lo[i] };
                        acc += v * v;
                    }
                    worst = worst.max(acc);
                }
                math::sqrt(worst)
            }
            DomainKind::Ball { center, radius } => norm2(center) + radius,
            DomainKind::Annulus { center, outer, .. } => norm2(center) + outer,
        }
    }

    /// Row-major rectangular grid restricted to the domain (points outside
    /// a ball or annulus are dropped). Symmetric axes produce grids that are
    /// bitwise antisymmetric under negation.
    pub fn grid(&self) -> Vec<State> {
        let (lo, hi) = self.bounding_box();
        let n = self.grid_resolution.max(1);
        let axes: Vec<Vec<f64>> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| axis_grid(*l, *h, n))
            .collect();
        let dim = axes.len();
        let total: usize = axes.iter().map(|a| a.len()).product();
        let mut out = Vec::new();
        for flat in 0..total {
            // Row-major: first axis slowest.
            let mut idx = flat;
            let mut point = vec![0.0; dim];
            for ax in (0..dim).rev() {
                let len = axes[ax].len();
                point[ax] = axes[ax][idx % len];
                idx /= len;
            }
            if self.contains(&point) {
                out.push(point);
            }
        }
        out
    }

    /// Seeded uniform sample by rejection from the bounding box.
    pub fn sample(&self, rng: &mut SplitMix64) -> State {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: State = lo.iter().zip(&hi).map(|(l, h)| rng.uniform(*l, *h)).collect();
            if self.contains(&x) {
                return x;
            }
        }
    }
}

fn dist_to(center: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..center.len() {
        let d = x[i] - center[i];
        acc += d * d;
    }
    math::sqrt(acc)
}

fn radial_clamp(center: &[f64], x: &[f64], rmin: f64, rmax: f64) -> State {
    let r = dist_to(center, x);
    if r >= rmin && r <= rmax {
        return x.to_vec();
    }
    if r == 0.0 {
        // Any direction works; pick the first axis so results are
        // reproducible.
        let mut out = center.to_vec();
        out[0] += rmin;
        return out;
    }
    let target = r.max(rmin).min(rmax);
    let scale = target / r;
    center
        .iter()
        .zip(x)
        .map(|(c, v)| c + (v - c) * scale)
        .collect()
}

/// Evenly spaced nodes including both endpoints; exactly antisymmetric when
/// `lo == -hi` (so every grid has its mirror point bitwise present).
pub fn axis_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    let m = (n - 1) as f64;
    if lo == -hi {
        (0..n)
            .map(|i| hi * ((2 * i) as f64 - m) / m)
            .collect()
    } else {
        (0..n)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * (i as f64 / m)
                }
            })
            .collect()
    }
}

/// Autonomous plant `x' = f(x)`, `y = h(x)` with optional analytic Jacobians.
#[derive(Clone)]
pub struct SystemModel {
    pub name: String,
    pub n_x: usize,
    pub n_y: usize,
    f: DynFn,
    h: DynFn,
    df: Option<DynFn>,
    dh: Option<DynFn>,
    pub domain: DomainSpec,
    /// `(r_keep, r_zero)` once `cutoff_field` has been applied.
    pub cutoff: Option<(f64, f64)>,
    /// Analytic backward-indistinguishability map, when known.
    pub indist: Option<IndistMap>,
}

impl core::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_y", &self.n_y)
            .field("domain", &self.domain)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl SystemModel {
    pub fn new(
        name: &str,
        n_x: usize,
        n_y: usize,
        f: DynFn,
        h: DynFn,
        df: Option<DynFn>,
        dh: Option<DynFn>,
        domain: DomainSpec,
    ) -> Self {
        Self {
            name: String::from(name),
            n_x,
            n_y,
            f,
            h,
            df,
            dh,
            domain,
            cutoff: None,
            indist: None,
        }
    }

    pub fn with_indist(mut self, map: IndistMap) -> Self {
        self.indist = Some(map);
        self
    }

    #[inline]
    pub fn f_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out);
    }

    #[inline]
    pub fn h_into(&self, x: &[f64], out: &mut [f64]) {
        (self.h)(x, out);
    }

    pub fn f(&self, x: &[f64]) -> State {
        let mut out = vec![0.0; self.n_x];
        self.f_into(x, &mut out);
        out
    }

    pub fn h(&self, x: &[f64]) -> State {
        let mut out = vec![0.0; self.n_y];
        self.h_into(x, &mut out);
        out
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.df.is_some() && self.dh.is_some()
    }

    /// Jacobian of `f` written into `out` (row-major, n_x * n_x); analytic
    /// when provided, otherwise central finite differences with step
    /// `1e-6 * max(1, |x|)`.
    pub fn df_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.df {
            Some(j) => j(x, out),
            None => {
                let m = fd_jacobian(x, self.n_x, |p, buf| self.f_into(p, buf));
                out.copy_from_slice(&m.data);
            }
        }
    }

    /// Jacobian of `h` written into `out` (row-major, n_y * n_x), same
    /// fallback rule as `df_into`.
    pub fn dh_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.dh {
            Some(j) => j(x, out),
            None => {
                let m = fd_jacobian(x, self.n_y, |p, buf| self.h_into(p, buf));
                out.copy_from_slice(&m.data);
            }
        }
    }

    pub fn df_mat(&self, x: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.n_x, self.n_x);
        self.df_into(x, &mut m.data);
        m
    }

    pub fn dh_mat(&self, x: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.n_y, self.n_x);
        self.dh_into(x, &mut m.data);
        m
    }
}

/// Central finite-difference Jacobian of an arbitrary map.
pub fn fd_jacobian(x: &[f64], n_out: usize, eval: impl Fn(&[f64], &mut [f64])) -> Mat {
    let n_in = x.len();
    let step = 1e-6 * norm2(x).max(1.0);
    let mut jac = Mat::zeros(n_out, n_in);
    let mut plus = vec![0.0; n_out];
    let mut minus = vec![0.0; n_out];
    let mut probe = x.to_vec();
    for j in 0..n_in {
        let orig = probe[j];
        probe[j] = orig + step;
        eval(&probe, &mut plus);
        probe[j] = orig - step;
        eval(&probe, &mut minus);
        probe[j] = orig;
        for i in 0..n_out {
            jac.set(i, j, (plus[i] - minus[i]) / (2.0 * step));
        }
    }
    jac
}

/// Time-stamped solution samples. Times are strictly monotone; decreasing
/// for backward integrations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &State {
        self.states.last().expect("trajectory nonempty")
    }
}

/// Piecewise-linear output record, queryable anywhere inside its span.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSignal {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl OutputSignal {
    pub fn span(&self) -> (f64, f64) {
        let a = *self.times.first().expect("signal nonempty");
        let b = *self.times.last().expect("signal nonempty");
        (a.min(b), a.max(b))
    }

    /// Linear interpolation; a query at a stored node returns the stored
    /// value exactly.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.span();
        let slack = 1e-9 * (hi - lo).max(1.0);
        if t < lo - slack || t > hi + slack {
            return Err(Error::SignalGap { t, lo, hi });
        }
        let ascending = self.times.len() < 2 || self.times[1] > self.times[0];
        // Binary search over the monotone time grid.
        let cmp_key = |v: f64| if ascending { v } else { -v };
        let key = cmp_key(t);
        let mut a = 0usize;
        let mut b = self.times.len() - 1;
        if key <= cmp_key(self.times[0]) {
            return Ok(self.values[0].clone());
        }
        if key >= cmp_key(self.times[b]) {
            return Ok(self.values[b].clone());
        }
        while b - a > 1 {
            let mid = (a + b) / 2;
            if cmp_key(self.times[mid]) <= key {
                a = mid;
            } else {
                b = mid;
            }
        }
        if t == self.times[a] {
            return Ok(self.values[a].clone());
        }
        if t == self.times[b] {
            return Ok(self.values[b].clone());
        }
        let w = (t - self.times[a]) / (self.times[b] - self.times[a]);
        Ok(self.values[a]
            .iter()
            .zip(&self.values[b])
            .map(|(u, v)| u + (v - u) * w)
            .collect())
    }
}

/// One classical RK4 step of an autonomous field written through `deriv`.
pub(crate) fn rk4_step(
    deriv: &mut impl FnMut(&[f64], &mut [f64]),
    x: &mut [f64],
    h: f64,
    scratch: &mut Rk4Scratch,
) {
    let n = x.len();
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
    deriv(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    deriv(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    deriv(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    deriv(tmp, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Number of RK4 steps for a span, last step shortened onto the endpoint.
pub(crate) fn step_count(span: f64, step: f64) -> usize {
    (math::ceil(span / step - 1e-9) as usize).max(1)
}

/// Fixed-step RK4 from `t0` to `t1` (backward when `t1 < t0`). The final
/// node lands exactly on `t1`.
pub fn integrate(
    system: &SystemModel,
    x0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(Error::Precondition("step must be positive"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("x0 must be finite"));
    }
    if t0 == t1 {
        return Err(Error::Precondition("t0 must differ from t1"));
    }
    let span = math::abs(t1 - t0);
    let sign = if t1 > t0 { 1.0 } else { -1.0 };
    let n = step_count(span, step);
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(t0);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    let mut scratch = Rk4Scratch::new(system.n_x);
    let mut deriv = |p: &[f64], out: &mut [f64]| {
        system.f_into(p, out);
        if sign < 0.0 {
            for v in out.iter_mut() {
                *v = -*v;
            }
        }
    };
    for i in 1..=n {
        let t_prev = if i == 1 { t0 } else { t0 + sign * step * (i - 1) as f64 };
        let t_next = if i == n { t1 } else { t0 + sign * step * i as f64 };
        let h = math::abs(t_next - t_prev);
        rk4_step(&mut deriv, &mut x, h, &mut scratch);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Endpoint of the flow over a signed duration; `flow(x, 0) = x` exactly.
pub fn flow(
    system: &SystemModel,
    x: &[f64],
    duration: f64,
    direction: Direction,
    step: f64,
) -> Result<State> {
    if !(duration >= 0.0) {
        return Err(Error::Precondition("duration must be nonnegative"));
    }
    if duration == 0.0 {
        return Ok(x.to_vec());
    }
    let t1 = match direction {
        Direction::Forward => duration,
        Direction::Backward => -duration,
    };
    let traj = integrate(system, x, 0.0, t1, step)?;
    Ok(traj.last_state().clone())
}

/// Output samples along a trajectory: `values[i] = h(states[i])`.
pub fn output_along(system: &SystemModel, traj: &Trajectory) -> Result<OutputSignal> {
    if traj.is_empty() {
        return Err(Error::Precondition("trajectory must be nonempty"));
    }
    let values = traj.states.iter().map(|x| system.h(x)).collect();
    Ok(OutputSignal { times: traj.times.clone(), values })
}

/// C1 radial bump: 1 on [0, r_keep], 0 on [r_zero, inf), cubic Hermite blend
/// in between.
pub fn bump(r: f64, r_keep: f64, r_zero: f64) -> f64 {
    if r <= r_keep {
        1.0
    } else if r >= r_zero {
        0.0
    } else {
        let u = (r - r_keep) / (r_zero - r_keep);
        1.0 - u * u * (3.0 - 2.0 * u)
    }
}

fn bump_deriv(r: f64, r_keep: f64, r_zero: f64) -> f64 {
    if r <= r_keep || r >= r_zero {
        0.0
    } else {
        let w = r_zero - r_keep;
        let u = (r - r_keep) / w;
        (-6.0 * u + 6.0 * u * u) / w
    }
}

/// Backward-invariantize by the radial cutoff `f_cut(x) = bump(|x|) f(x)`.
/// The field is untouched on the domain and vanishes outside `r_zero`, so
/// every ball of radius >= `r_zero` is backward invariant.
pub fn cutoff_field(system: &SystemModel, r_keep: f64, r_zero: f64) -> Result<SystemModel> {
    if !(r_keep < r_zero) {
        return Err(Error::BadRadii { r_keep, r_zero });
    }
    if system.domain.enclosing_radius() > r_keep + 1e-12 {
        return Err(Error::Precondition("domain must fit inside the r_keep ball"));
    }
    let inner_f = system.f.clone();
    let n_x = system.n_x;
    let f: DynFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
        inner_f(x, out);
        let s = bump(norm2(x), r_keep, r_zero);
        for v in out.iter_mut() {
            *v *= s;
        }
    });
    let df = system.df.as_ref().map(|inner_df| {
        let inner_df = inner_df.clone();
        let inner_f = system.f.clone();
        let j: DynFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
            inner_df(x, out);
            let r = norm2(x);
            let s = bump(r, r_keep, r_zero);
            for v in out.iter_mut() {
                *v *= s;
            }
            let ds = bump_deriv(r, r_keep, r_zero);
            if ds != 0.0 && r > 0.0 {
                let mut fval = vec![0.0; n_x];
                inner_f(x, &mut fval);
                for i in 0..n_x {
                    for jcol in 0..n_x {
                        out[i * n_x + jcol] += fval[i] * ds * x[jcol] / r;
                    }
                }
            }
        });
        j
    });
    let mut out = SystemModel {
        name: format!("{}+cutoff", system.name),
        n_x: system.n_x,
        n_y: system.n_y,
        f,
        h: system.h.clone(),
        df,
        dh: system.dh.clone(),
        domain: system.domain.clone(),
        cutoff: Some((r_keep, r_zero)),
        indist: system.indist.clone(),
    };
    // A second cutoff would stack bumps; keep the widest radii only.
    if let Some((k0, z0)) = system.cutoff {
        out.cutoff = Some((k0.min(r_keep), z0.max(r_zero)));
    }
    Ok(out)
}

/// Stable public identifiers for the shipped example systems.
pub const EXAMPLE_NAMES: [&str; 5] = [
    "limit_cycle_squared_output",
    "sine_pair_map",
    "rescaled_limit_cycle",
    "harmonic_oscillator",
    "static",
];

/// Named example systems with analytic Jacobians.
pub fn example_registry(name: &str) -> Result<SystemModel> {
    match name {
        "limit_cycle_squared_output" => Ok(limit_cycle_squared_output()),
        "sine_pair_map" => Ok(sine_pair_map()),
        "rescaled_limit_cycle" => Ok(rescaled_limit_cycle()),
        "harmonic_oscillator" => Ok(harmonic_oscillator()),
        "static" => Ok(static_identity()),
        _ => Err(Error::UnknownExample),
    }
}

fn limit_cycle_field(x: &[f64], out: &mut [f64]) {
    let s = 1.0 - (x[0] * x[0] + x[1] * x[1]);
    out[0] = x[1] + x[0] * s;
    out[1] = -x[0] + x[1] * s;
}

fn limit_cycle_jac(x: &[f64], out: &mut [f64]) {
    let (a, b) = (x[0], x[1]);
    out[0] = 1.0 - 3.0 * a * a - b * b;
    out[1] = 1.0 - 2.0 * a * b;
    out[2] = -1.0 - 2.0 * a * b;
    out[3] = 1.0 - a * a - 3.0 * b * b;
}

fn squared_output(x: &[f64], out: &mut [f64]) {
    out[0] = x[0] * x[0] - x[1] * x[1];
    out[1] = 2.0 * x[0] * x[1];
}

fn squared_output_jac(x: &[f64], out: &mut [f64]) {
    out[0] = 2.0 * x[0];
    out[1] = -2.0 * x[1];
    out[2] = 2.0 * x[1];
    out[3] = 2.0 * x[0];
}

fn antipodal_pair(x: &[f64]) -> Vec<State> {
    vec![x.to_vec(), x.iter().map(|v| -v).collect()]
}

/// Planar limit cycle with the squared (angle-doubling) output. States x and
/// -x are backward indistinguishable.
fn limit_cycle_squared_output() -> SystemModel {
    SystemModel::new(
        "limit_cycle_squared_output",
        2,
        2,
        Arc::new(limit_cycle_field),
        Arc::new(squared_output),
        Some(Arc::new(limit_cycle_jac)),
        Some(Arc::new(squared_output_jac)),
        DomainSpec::new_ball(vec![0.0, 0.0], 1.7, 40).expect("valid ball"),
    )
    .with_indist(Arc::new(antipodal_pair))
}

/// Static scalar system exposing the pi-periodic sine pair as its output.
/// Generic outputs have exactly two preimages (x and x -/+ pi); the output
/// (0, 0) has three: {-pi, 0, pi}.
fn sine_pair_map() -> SystemModel {
    let pi = core::f64::consts::PI;
    SystemModel::new(
        "sine_pair_map",
        1,
        2,
        Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 0.0),
        Arc::new(|x: &[f64], out: &mut [f64]| {
            let s = math::sin(x[0]);
            out[0] = math::sin(2.0 * x[0]);
            out[1] = s * s;
        }),
        Some(Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 0.0)),
        Some(Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = 2.0 * math::cos(2.0 * x[0]);
            out[1] = math::sin(2.0 * x[0]);
        })),
        DomainSpec::new_box(vec![-pi], vec![pi], 201).expect("valid box"),
    )
    .with_indist(Arc::new(move |x: &[f64]| {
        let pi = core::f64::consts::PI;
        // All pi-shifts landing in [-pi, pi]; both endpoints belong to the
        // class of 0.
        let mut set = Vec::new();
        for shift in [-2.0 * pi, -pi, 0.0, pi, 2.0 * pi] {
            let y = x[0] + shift;
            if (-pi - 1e-12..=pi + 1e-12).contains(&y)
                && set.iter().all(|s: &Vec<f64>| (s[0] - y).abs() > 1e-12)
            {
                set.push(vec![y]);
            }
        }
        set.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        set
    }))
}

/// Limit-cycle field rescaled by (1 - |x|^2)^2 inside the unit disk and
/// frozen outside: solutions spiral toward {|x| >= 1} without converging to
/// any single point.
fn rescaled_limit_cycle() -> SystemModel {
    let phi = |r2: f64| if r2 >= 1.0 { 0.0 } else { (1.0 - r2) * (1.0 - r2) };
    let dphi = |r2: f64| if r2 >= 1.0 { 0.0 } else { -2.0 * (1.0 - r2) };
    SystemModel::new(
        "rescaled_limit_cycle",
        2,
        2,
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            limit_cycle_field(x, out);
            let s = phi(x[0] * x[0] + x[1] * x[1]);
            out[0] *= s;
            out[1] *= s;
        }),
        Arc::new(squared_output),
        Some(Arc::new(move |x: &[f64], out: &mut [f64]| {
            limit_cycle_jac(x, out);
            let r2 = x[0] * x[0] + x[1] * x[1];
            let s = phi(r2);
            let ds = dphi(r2);
            let mut fval = [0.0; 2];
            limit_cycle_field(x, &mut fval);
            for i in 0..2 {
                for j in 0..2 {
                    out[i * 2 + j] = s * out[i * 2 + j] + fval[i] * ds * 2.0 * x[j];
                }
            }
        })),
        Some(Arc::new(squared_output_jac)),
        DomainSpec::new_ball(vec![0.0, 0.0], 2.0, 40).expect("valid ball"),
    )
    .with_indist(Arc::new(antipodal_pair))
}

/// Rotation with position output; fully observable.
fn harmonic_oscillator() -> SystemModel {
    SystemModel::new(
        "harmonic_oscillator",
        2,
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = x[1];
            out[1] = -x[0];
        }),
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0]),
        Some(Arc::new(|_x: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = 1.0;
            out[2] = -1.0;
            out[3] = 0.0;
        })),
        Some(Arc::new(|_x: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = 0.0;
        })),
        DomainSpec::new_ball(vec![0.0, 0.0], 1.5, 40).expect("valid ball"),
    )
    .with_indist(Arc::new(|x: &[f64]| vec![x.to_vec()]))
}

/// Frozen plant with identity output; the injective baseline.
fn static_identity() -> SystemModel {
    SystemModel::new(
        "static",
        2,
        2,
        Arc::new(|_x: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = 0.0;
        }),
        Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = x[0];
            out[1] = x[1];
        }),
        Some(Arc::new(|_x: &[f64], out: &mut [f64]| {
            for v in out.iter_mut() {
                *v = 0.0;
            }
        })),
        Some(Arc::new(|_x: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = 1.0;
        })),
        DomainSpec::new_box(vec![-1.0, -1.0], vec![1.0, 1.0], 21).expect("valid box"),
    )
    .with_indist(Arc::new(|x: &[f64]| vec![x.to_vec()]))
}
