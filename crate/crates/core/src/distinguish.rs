//! Ground-truth diagnostics: a brute-force backward-indistinguishability
//! oracle over a grid, the characterization check linking T to the oracle
//! classes, the differential observability map H_m with rank profiling, and
//! the gain sweep relating the two.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynsys::{self, fd_jacobian, DomainSpec, IndistMap, State, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::{dist2, sigma_stats, Mat};
use crate::setvalued::PointSet;
use crate::transform::{FilterPair, TransformField, TransformOpts, RANK_TOL_REL};

/// Grid partition into backward-indistinguishability classes.
#[derive(Debug, Clone)]
pub struct IndistReport {
    pub grid: Vec<State>,
    /// Class index per grid point.
    pub class_id: Vec<usize>,
    /// Member indices per class, ascending.
    pub classes: Vec<Vec<usize>>,
    /// Within-class pairs that are not directly related: artifacts of the
    /// tolerance straddling a class boundary. Reported, never auto-merged.
    pub transitivity_violations: Vec<(usize, usize)>,
    pub horizon: f64,
    pub tol: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Integrates every grid point backward over the horizon and relates two
/// points when their output histories stay within `tol` (sup over the
/// shared grid). A finite horizon over-approximates the true classes; the
/// caller probes sensitivity by doubling the horizon.
pub fn backward_indist_oracle(
    system: &SystemModel,
    domain: &DomainSpec,
    horizon: f64,
    tol: f64,
    step: f64,
) -> Result<IndistReport> {
    if !(horizon > 0.0) {
        return Err(Error::Precondition("horizon must be positive"));
    }
    let grid = domain.grid();
    let n = grid.len();
    if n == 0 {
        return Err(Error::Precondition("domain grid is empty"));
    }
    // Output histories cached once per point, flattened [time * n_y + ch].
    let n_y = system.n_y;
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for p in &grid {
        let traj = dynsys::integrate(system, p, 0.0, -horizon, step)?;
        let mut flat = Vec::with_capacity(traj.len() * n_y);
        let mut buf = vec![0.0; n_y];
        for s in &traj.states {
            system.h_into(s, &mut buf);
            flat.extend_from_slice(&buf);
        }
        outputs.push(flat);
    }
    let related = |i: usize, j: usize| -> bool {
        let a = &outputs[i];
        let b = &outputs[j];
        let mut t = 0;
        while t < a.len() {
            let mut acc = 0.0;
            for ch in 0..n_y {
                let d = a[t + ch] - b[t + ch];
                acc += d * d;
            }
            if acc > tol * tol {
                return false;
            }
            t += n_y;
        }
        true
    };
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if related(i, j) {
                uf.union(i, j);
            }
        }
    }
    let mut class_id = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut root_to_class: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        let cid = match root_to_class.iter().find(|(r, _)| *r == root) {
            Some((_, c)) => *c,
            None => {
                let c = classes.len();
                root_to_class.push((root, c));
                classes.push(Vec::new());
                c
            }
        };
        class_id[i] = cid;
        classes[cid].push(i);
    }
    let mut transitivity_violations = Vec::new();
    for members in &classes {
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                if !related(members[a], members[b]) {
                    transitivity_violations.push((members[a], members[b]));
                }
            }
        }
    }
    Ok(IndistReport { grid, class_id, classes, transitivity_violations, horizon, tol })
}

/// Wrap an oracle report as an indistinguishable-set map: a query returns
/// the class members of the nearest grid point. Grid-resolution coarse, but
/// usable as observer ground truth when no analytic map is registered.
pub fn indist_fn_from_report(report: &IndistReport) -> IndistMap {
    let grid = report.grid.clone();
    let class_id = report.class_id.clone();
    let classes = report.classes.clone();
    Arc::new(move |x: &[f64]| {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in grid.iter().enumerate() {
            let d = dist2(p, x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        classes[class_id[best]].iter().map(|i| grid[*i].clone()).collect()
    })
}

/// Class members of a grid point as a point set.
pub fn class_of(report: &IndistReport, idx: usize) -> PointSet {
    let members = &report.classes[report.class_id[idx]];
    PointSet::new(members.iter().map(|i| report.grid[*i].clone()).collect(), 0.0)
}

#[derive(Debug, Clone)]
pub struct CharacterizationVerdict {
    pub pass: bool,
    /// Worst |T(xa) - T(xb)| over related pairs (must stay <= match_tol).
    pub forward_worst: f64,
    pub forward_pair: (usize, usize),
    /// Smallest |T(xa) - T(xb)| over unrelated pairs (must exceed match_tol).
    pub reverse_worst: f64,
    pub reverse_pair: (usize, usize),
    pub match_tol: f64,
}

/// Check both directions of the characterization on all grid pairs:
/// related points must map together under T, unrelated points apart.
pub fn characterization_check(
    field: &TransformField,
    report: &IndistReport,
    match_tol: f64,
) -> Result<CharacterizationVerdict> {
    let n = report.grid.len();
    let mut images = Vec::with_capacity(n);
    for p in &report.grid {
        images.push(field.evaluate(p)?);
    }
    let mut forward_worst = 0.0f64;
    let mut forward_pair = (0, 0);
    let mut reverse_worst = f64::INFINITY;
    let mut reverse_pair = (0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let dz = dist2(&images[i], &images[j]);
            if report.class_id[i] == report.class_id[j] {
                if dz > forward_worst {
                    forward_worst = dz;
                    forward_pair = (i, j);
                }
            } else if dz < reverse_worst {
                reverse_worst = dz;
                reverse_pair = (i, j);
            }
        }
    }
    let pass = forward_worst <= match_tol && reverse_worst > match_tol;
    Ok(CharacterizationVerdict {
        pass,
        forward_worst,
        forward_pair,
        reverse_worst,
        reverse_pair,
        match_tol,
    })
}

/// Highest Lie-derivative order reachable through nested finite differences.
pub const MAX_LIE_ORDER: usize = 3;

fn lie_value(system: &SystemModel, x: &[f64], level: usize) -> Vec<f64> {
    if level == 0 {
        return system.h(x);
    }
    let grad = lie_grad(system, x, level - 1);
    grad.matvec(&system.f(x))
}

fn lie_grad(system: &SystemModel, x: &[f64], level: usize) -> Mat {
    if level == 0 {
        return system.dh_mat(x);
    }
    fd_jacobian(x, system.n_y, |p, out| {
        out.copy_from_slice(&lie_value(system, p, level));
    })
}

/// The differential observability map H_m = (h, L_f h, ..., L_f^{m-1} h)
/// and its Jacobian. Values use analytic first derivatives where available;
/// deeper gradients fall back to nested central differences, which caps m.
pub fn diff_observability_map(
    system: &SystemModel,
    x: &[f64],
    m: usize,
) -> Result<(Vec<f64>, Mat)> {
    if m < 1 {
        return Err(Error::Precondition("order m must be at least 1"));
    }
    if m > MAX_LIE_ORDER {
        return Err(Error::OrderTooHigh { m, max: MAX_LIE_ORDER });
    }
    let n_y = system.n_y;
    let n_x = system.n_x;
    let mut value = Vec::with_capacity(m * n_y);
    let mut jac = Mat::zeros(m * n_y, n_x);
    for level in 0..m {
        let v = lie_value(system, x, level);
        value.extend_from_slice(&v);
        let g = lie_grad(system, x, level);
        for i in 0..n_y {
            for j in 0..n_x {
                jac.set(level * n_y + i, j, g.get(i, j));
            }
        }
    }
    Ok((value, jac))
}

/// Per-grid-point rank of the H_m Jacobian.
#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    pub grid: Vec<State>,
    pub sigma_min: Vec<f64>,
    pub sigma_max: Vec<f64>,
    pub rank: Vec<usize>,
    /// Indices where the Jacobian fails full column rank.
    pub deficient: Vec<usize>,
    pub m: usize,
}

pub fn rank_profile_hm(
    system: &SystemModel,
    domain: &DomainSpec,
    m: usize,
) -> Result<ObservabilityReport> {
    let grid = domain.grid();
    let n_x = system.n_x;
    let mut sigma_min = Vec::with_capacity(grid.len());
    let mut sigma_max = Vec::with_capacity(grid.len());
    let mut rank = Vec::with_capacity(grid.len());
    let mut deficient = Vec::new();
    for (i, p) in grid.iter().enumerate() {
        let (_, jac) = diff_observability_map(system, p, m)?;
        let sv = crate::linalg::singular_values(&jac);
        let smax = sv.first().copied().unwrap_or(0.0);
        let r = sv.iter().filter(|s| **s > RANK_TOL_REL * smax && **s > 0.0).count();
        sigma_min.push(sv.last().copied().unwrap_or(0.0));
        sigma_max.push(smax);
        rank.push(r);
        if r < n_x {
            deficient.push(i);
        }
    }
    Ok(ObservabilityReport { grid, sigma_min, sigma_max, rank, deficient, m })
}

#[derive(Debug, Clone, Copy)]
pub struct KSweepRow {
    pub k: f64,
    pub min_sigma_min: f64,
    pub max_cond: f64,
    pub full_rank: bool,
}

/// Jacobian conditioning of T_k over probe points for each gain k, the pair
/// scaled to (k A, B) with the truncation horizon rescaled by 1/k.
pub fn k_sweep_rank(
    system: &SystemModel,
    pair: &FilterPair,
    ks: &[f64],
    probes: &[State],
    base: TransformOpts,
) -> Result<Vec<KSweepRow>> {
    if ks.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::Precondition("gains must be positive"));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let field = TransformField::new(
            system.clone(),
            pair.clone(),
            TransformOpts { k, tau: None, ..base },
        )?;
        let mut min_smin = f64::INFINITY;
        let mut max_cond = 0.0f64;
        let mut full_rank = true;
        for p in probes {
            let jac = field.jacobian(p)?;
            let (smin, smax, cond) = sigma_stats(&jac);
            min_smin = min_smin.min(smin);
            max_cond = max_cond.max(cond);
            if !(smin > RANK_TOL_REL * smax) {
                full_rank = false;
            }
        }
        rows.push(KSweepRow { k, min_sigma_min: min_smin, max_cond, full_rank });
    }
    Ok(rows)
}
