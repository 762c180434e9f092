//! Set-valued machinery: Hausdorff and permutation (Almgren tuple) metrics,
//! the preimage map of the transform, its projection-based extension to all
//! of z-space, cardinality profiling, and branch bookkeeping.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynsys::State;
use crate::error::{Error, Result};
use crate::linalg::{dist2, norm2};
use crate::transform::{ImageAtlas, TransformField};

/// Finite unordered set of states. Pairwise distances exceed `merge_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<State>,
    pub merge_radius: f64,
}

impl PointSet {
    pub fn new(points: Vec<State>, merge_radius: f64) -> Self {
        Self { points, merge_radius }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `x` to the set (infinity when empty).
    pub fn dist_to(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| dist2(p, x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Directional gap: sup over `a` of the distance from `a` to `b`.
fn directional_gap(a: &PointSet, b: &PointSet) -> f64 {
    a.points
        .iter()
        .map(|p| b.dist_to(p))
        .fold(0.0, f64::max)
}

/// Hausdorff distance plus the two directional gaps; exact on finite sets.
pub fn hausdorff(a: &PointSet, b: &PointSet) -> Result<(f64, f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let ab = directional_gap(a, b);
    let ba = directional_gap(b, a);
    Ok((ab.max(ba), ab, ba))
}

/// Permutation distance on unordered p-tuples (multiplicity allowed):
/// min over permutations of the max pairwise displacement. Exact by
/// enumeration, so p is capped at 8.
pub fn tuple_distance(a: &[State], b: &[State]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { a: a.len(), b: b.len() });
    }
    let p = a.len();
    if p > 8 {
        return Err(Error::TooLarge { p });
    }
    if p == 0 {
        return Ok(0.0);
    }
    let mut perm: Vec<usize> = (0..p).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |sigma| {
        let mut worst = 0.0f64;
        for (i, &j) in sigma.iter().enumerate() {
            worst = worst.max(dist2(&a[i], &b[j]));
            if worst >= best {
                return;
            }
        }
        best = best.min(worst);
    });
    Ok(best)
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Tunables for the multi-start Gauss-Newton inversion.
#[derive(Debug, Clone, Copy)]
pub struct InversionConfig {
    /// z-space residual below which a point counts as a preimage member.
    pub residual_tol: f64,
    /// x-space radius for merging converged candidates.
    pub cluster_radius: f64,
    pub max_gn_iters: usize,
    /// Number of nearest atlas images seeded per query.
    pub seeds_per_query: usize,
}

impl InversionConfig {
    /// Defaults derived from a tabulated atlas: the inversion cannot be
    /// sharper than the transform's own error floor, and clusters cannot be
    /// finer than the grid that seeds them.
    pub fn for_atlas(atlas: &ImageAtlas, tol_trunc: f64) -> Self {
        Self {
            residual_tol: 10.0 * tol_trunc,
            cluster_radius: 2.0 * atlas.grid_spacing,
            max_gn_iters: 40,
            seeds_per_query: 6,
        }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    x: State,
    residual: f64,
}

/// Damped Gauss-Newton descent of 0.5 |T(x) - z|^2 from one seed, with
/// iterates clamped into the domain. Returns the final point and residual.
fn refine(
    field: &TransformField,
    domain: &crate::dynsys::DomainSpec,
    z: &[f64],
    seed: &[f64],
    cfg: &InversionConfig,
) -> Result<Candidate> {
    let n_x = field.system.n_x;
    let mut x = domain.project(seed);
    let mut zx = field.evaluate(&x)?;
    let mut residual = dist2(&zx, z);
    let mut stagnant = 0usize;
    'outer: for _ in 0..cfg.max_gn_iters {
        if residual <= cfg.residual_tol {
            break;
        }
        let jac = field.jacobian(&x)?;
        let mut grad = vec![0.0; n_x];
        let mut rvec = vec![0.0; zx.len()];
        for row in 0..zx.len() {
            let r = zx[row] - z[row];
            rvec[row] = r;
            for c in 0..n_x {
                grad[c] += jac.get(row, c) * r;
            }
        }
        if norm2(&grad) < 1e-10 {
            break;
        }
        // The step is solved through the SVD of J: near the slow-pole
        // crease the Jacobian is stiff and the image folds into a curved
        // narrow valley. When the full Gauss-Newton step stalls against the
        // valley wall, slide along the gentle singular directions only,
        // then restore with the stiff direction alone.
        let pieces = crate::linalg::svd_lstsq_components(&jac, &rvec);
        if pieces.is_empty() {
            break;
        }
        let full: State = (0..n_x)
            .map(|i| pieces.iter().map(|(_, p)| p[i]).sum())
            .collect();
        let gentle: State = (0..n_x)
            .map(|i| pieces.iter().skip(1).map(|(_, p)| p[i]).sum())
            .collect();
        let stiff = pieces[0].1.clone();
        let before = residual;
        // The full step gets the spec'd 30 halvings; the fallback slides
        // only pay off near alpha = 1, so they get a short leash.
        for (delta, max_halvings) in [(full, 30usize), (gentle, 8), (stiff, 8)] {
            let scale = norm2(&delta);
            if scale < 1e-15 {
                continue;
            }
            let mut alpha = 1.0;
            for _halving in 0..max_halvings {
                if alpha * scale < 1e-13 {
                    break;
                }
                let trial: State = (0..n_x).map(|i| x[i] - alpha * delta[i]).collect();
                let trial = domain.project(&trial);
                let zt = field.evaluate(&trial)?;
                let rt = dist2(&zt, z);
                if rt < residual {
                    x = trial;
                    zx = zt;
                    residual = rt;
                    // Diminishing returns above tolerance: the iterate is
                    // grinding a valley floor, not converging.
                    if before - residual < 1e-3 * residual {
                        stagnant += 1;
                        if stagnant >= 3 {
                            break 'outer;
                        }
                    } else {
                        stagnant = 0;
                    }
                    continue 'outer;
                }
                alpha *= 0.5;
            }
        }
        // No direction improved: converged to the valley floor.
        break;
    }
    Ok(Candidate { x, residual })
}


/// Atlas rows within `radius` of `x` in state space. Near the slow-pole
/// fold the image metric is wildly distorted, so the basin holding an
/// on-image query can be image-far from every atlas cell while staying
/// x-adjacent to the minima a first multistart finds; these neighbors seed
/// a second round.
fn x_neighbor_indices(atlas: &ImageAtlas, x: &[f64], radius: f64) -> Vec<usize> {
    let mut out: Vec<usize> = (0..atlas.len())
        .filter(|i| dist2(&atlas.points[*i], x) <= radius)
        .collect();
    out.sort_unstable();
    out
}

/// Second-round multistart: refine from the atlas x-neighbors of the best
/// endpoints found so far. Returns the new candidates.
fn neighbor_round(
    field: &TransformField,
    atlas: &ImageAtlas,
    z: &[f64],
    cfg: &InversionConfig,
    candidates: &[Candidate],
) -> Result<Vec<Candidate>> {
    let mut anchors: Vec<&Candidate> = candidates.iter().collect();
    anchors.sort_by(|a, b| {
        a.residual
            .partial_cmp(&b.residual)
            .unwrap()
            .then_with(|| a.x.partial_cmp(&b.x).unwrap())
    });
    let radius = 2.0 * atlas.grid_spacing.max(0.5 * cfg.cluster_radius);
    let mut tried: Vec<usize> = Vec::new();
    let mut fresh = Vec::new();
    for anchor in anchors.iter().take(2) {
        // Nearest cells first, few per anchor: the hidden basin hugs the
        // endpoint, and mirrored anchors keep the pattern symmetric.
        let mut cells: Vec<(f64, usize)> = x_neighbor_indices(atlas, &anchor.x, radius)
            .into_iter()
            .map(|i| (dist2(&atlas.points[i], &anchor.x), i))
            .collect();
        cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (_, idx) in cells.into_iter().take(6) {
            if tried.contains(&idx) {
                continue;
            }
            tried.push(idx);
            let seed = &atlas.points[idx];
            if candidates
                .iter()
                .chain(fresh.iter())
                .any(|c: &Candidate| dist2(&c.x, seed) <= 0.25 * cfg.cluster_radius)
            {
                continue;
            }
            fresh.push(refine(field, &atlas.domain, z, seed, cfg)?);
        }
    }
    Ok(fresh)
}

/// Atlas rows used as starting points for a query `z`: every image within a
/// 3 * residual_tol neighborhood plus the `seeds_per_query` nearest overall.
fn seed_indices(atlas: &ImageAtlas, z: &[f64], cfg: &InversionConfig) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = atlas
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (dist2(img, z), i))
        .collect();
    order.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut picked = Vec::new();
    for (d, i) in &order {
        let near_hit = *d <= 3.0 * cfg.residual_tol;
        let top_k = picked.len() < cfg.seeds_per_query;
        if near_hit || top_k {
            picked.push(*i);
        }
        if !near_hit && !top_k {
            break;
        }
        if picked.len() >= 64 {
            break;
        }
    }
    picked
}

/// Deterministic clustering: candidates sorted by (residual, position), then
/// greedily merged at `cluster_radius`; each cluster keeps its lowest-residual
/// member as representative.
fn cluster(mut candidates: Vec<Candidate>, cluster_radius: f64) -> Vec<State> {
    candidates.sort_by(|a, b| {
        a.residual
            .partial_cmp(&b.residual)
            .unwrap()
            .then_with(|| a.x.partial_cmp(&b.x).unwrap())
    });
    let mut reps: Vec<State> = Vec::new();
    for c in candidates {
        if reps.iter().all(|r| dist2(r, &c.x) > cluster_radius) {
            reps.push(c.x);
        }
    }
    reps
}

/// The set-valued preimage of `z` under T, restricted to the domain:
/// multi-start Gauss-Newton from atlas seeds, thresholded at `residual_tol`
/// and clustered. Empty when `z` has no preimage within tolerance — an
/// expected value during transients, not an error.
pub fn preimage(
    field: &TransformField,
    atlas: &ImageAtlas,
    z: &[f64],
    cfg: &InversionConfig,
) -> Result<PointSet> {
    if atlas.is_empty() {
        return Err(Error::Precondition("atlas must be nonempty"));
    }
    let mut all: Vec<Candidate> = Vec::new();
    for idx in seed_indices(atlas, z, cfg) {
        // A seed inside the cluster of a converged candidate would merge
        // with it anyway; skip the redundant descent.
        let seed = &atlas.points[idx];
        if all
            .iter()
            .any(|c| c.residual <= cfg.residual_tol && dist2(&c.x, seed) <= 0.5 * cfg.cluster_radius)
        {
            continue;
        }
        all.push(refine(field, &atlas.domain, z, &atlas.points[idx], cfg)?);
    }
    let best = all.iter().map(|c| c.residual).fold(f64::INFINITY, f64::min);
    if best > cfg.residual_tol {
        let fresh = neighbor_round(field, atlas, z, cfg, &all)?;
        all.extend(fresh);
    }
    let accepted: Vec<Candidate> = all
        .into_iter()
        .filter(|c| c.residual <= cfg.residual_tol)
        .collect();
    Ok(PointSet::new(cluster(accepted, cfg.cluster_radius), cfg.cluster_radius))
}

/// Lipschitz-style extension of the preimage to all of z-space: project `z`
/// onto the (discretized, refined) image set and take the preimage there.
/// Coincides with [`preimage`] whenever `z` is on the image within
/// tolerance, and is never empty.
pub fn extend_inverse(
    field: &TransformField,
    atlas: &ImageAtlas,
    z: &[f64],
    cfg: &InversionConfig,
) -> Result<PointSet> {
    if atlas.is_empty() {
        return Err(Error::Precondition("atlas must be nonempty"));
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    for idx in seed_indices(atlas, z, cfg) {
        let seed = &atlas.points[idx];
        if candidates
            .iter()
            .any(|c| c.residual <= cfg.residual_tol && dist2(&c.x, seed) <= 0.5 * cfg.cluster_radius)
        {
            continue;
        }
        candidates.push(refine(field, &atlas.domain, z, &atlas.points[idx], cfg)?);
    }
    let first_best = candidates
        .iter()
        .map(|c| c.residual)
        .fold(f64::INFINITY, f64::min);
    if first_best > cfg.residual_tol {
        let fresh = neighbor_round(field, atlas, z, cfg, &candidates)?;
        candidates.extend(fresh);
    }
    let best = candidates
        .iter()
        .map(|c| c.residual)
        .fold(f64::INFINITY, f64::min);
    if best <= cfg.residual_tol {
        // On-image: same acceptance rule as the plain preimage.
        let accepted: Vec<Candidate> = candidates
            .into_iter()
            .filter(|c| c.residual <= cfg.residual_tol)
            .collect();
        return Ok(PointSet::new(cluster(accepted, cfg.cluster_radius), cfg.cluster_radius));
    }
    // Off-image: project onto the image through the best argmin point, then
    // invert the projected target starting from all current endpoints.
    let best_x = candidates
        .iter()
        .min_by(|a, b| {
            a.residual
                .partial_cmp(&b.residual)
                .unwrap()
                .then_with(|| a.x.partial_cmp(&b.x).unwrap())
        })
        .expect("seeded candidates")
        .x
        .clone();
    let z_proj = field.evaluate(&best_x)?;
    let mut projected: Vec<Candidate> = Vec::new();
    let covered = |found: &[Candidate], x: &[f64]| {
        found
            .iter()
            .any(|c| dist2(&c.x, x) <= 0.5 * cfg.cluster_radius)
    };
    // Best candidates first: the argmin (and its mirror) accept instantly
    // and their clusters then cover the stragglers.
    candidates.sort_by(|a, b| {
        a.residual
            .partial_cmp(&b.residual)
            .unwrap()
            .then_with(|| a.x.partial_cmp(&b.x).unwrap())
    });
    for c in &candidates {
        if covered(&projected, &c.x) {
            continue;
        }
        let refined = refine(field, &atlas.domain, &z_proj, &c.x, cfg)?;
        if refined.residual <= cfg.residual_tol {
            projected.push(refined);
        }
    }
    // Atlas re-seeds for the projected target, skipping cells an existing
    // endpoint already covers.
    for idx in seed_indices(atlas, &z_proj, cfg) {
        let seed = &atlas.points[idx];
        if covered(&projected, seed) || candidates.iter().any(|c| dist2(&c.x, seed) <= 0.5 * cfg.cluster_radius) {
            continue;
        }
        let refined = refine(field, &atlas.domain, &z_proj, seed, cfg)?;
        if refined.residual <= cfg.residual_tol {
            projected.push(refined);
        }
    }
    if projected.is_empty() {
        // The projection point itself always matches its own image.
        projected.push(Candidate { x: best_x, residual: 0.0 });
    }
    Ok(PointSet::new(cluster(projected, cfg.cluster_radius), cfg.cluster_radius))
}

/// Per-point preimage cardinality over the atlas, the modal value p, and
/// the rows violating constant cardinality.
#[derive(Debug, Clone)]
pub struct CardinalityReport {
    pub cards: Vec<usize>,
    pub modal_p: usize,
    /// Atlas indices whose cardinality differs from the modal value.
    pub violations: Vec<usize>,
}

pub fn cardinality_profile(
    field: &TransformField,
    atlas: &ImageAtlas,
    cfg: &InversionConfig,
) -> Result<CardinalityReport> {
    if atlas.is_empty() {
        return Err(Error::Precondition("atlas must be nonempty"));
    }
    let mut cards = Vec::with_capacity(atlas.len());
    for i in 0..atlas.len() {
        let set = preimage(field, atlas, &atlas.images[i], cfg)?;
        cards.push(set.len());
    }
    let max_card = cards.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0usize; max_card + 1];
    for c in &cards {
        histogram[*c] += 1;
    }
    let mut modal_p = 0;
    let mut best_count = 0;
    for (card, count) in histogram.iter().enumerate() {
        // Ties resolve to the smaller cardinality.
        if *count > best_count {
            best_count = *count;
            modal_p = card;
        }
    }
    let violations = cards
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != modal_p)
        .map(|(i, _)| i)
        .collect();
    Ok(CardinalityReport { cards, modal_p, violations })
}

/// Empirical Lipschitz bound of the set-valued inverse: max of
/// d_H(T^inv(z_a), T^inv(z_b)) / |z_a - z_b| over seeded random pairs of
/// nearby atlas images. The theory guarantees a finite constant under the
/// constant-cardinality and full-rank assumptions; this reports the
/// observed one.
pub fn empirical_lipschitz(
    field: &TransformField,
    atlas: &ImageAtlas,
    cfg: &InversionConfig,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if atlas.len() < 2 {
        return Err(Error::Precondition("atlas needs at least two points"));
    }
    let mut rng = crate::rng::SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut tried = 0usize;
    let mut guard = 0usize;
    while tried < pairs && guard < 20 * pairs {
        guard += 1;
        let i = (rng.next_u64() % atlas.len() as u64) as usize;
        // Nearest distinct image: a small |z_a - z_b| probes the local
        // Lipschitz ratio rather than a global chord.
        let mut j_best = usize::MAX;
        let mut dz_best = f64::INFINITY;
        for j in 0..atlas.len() {
            if j == i {
                continue;
            }
            let dz = dist2(&atlas.images[i], &atlas.images[j]);
            if dz > 10.0 * cfg.residual_tol && dz < dz_best {
                dz_best = dz;
                j_best = j;
            }
        }
        if j_best == usize::MAX {
            continue;
        }
        let sa = extend_inverse(field, atlas, &atlas.images[i], cfg)?;
        let sb = extend_inverse(field, atlas, &atlas.images[j_best], cfg)?;
        if sa.is_empty() || sb.is_empty() {
            continue;
        }
        let (dh, _, _) = hausdorff(&sa, &sb)?;
        worst = worst.max(dh / dz_best);
        tried += 1;
    }
    Ok(worst)
}

/// Pairing of `next` points onto `prev` points.
#[derive(Debug, Clone)]
pub struct BranchMatch {
    /// (prev index, next index) pairs, greedy nearest first, ties by index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_prev: Vec<usize>,
    pub unmatched_next: Vec<usize>,
}

impl BranchMatch {
    /// True when the pairing maps every index onto itself.
    pub fn is_identity(&self) -> bool {
        self.unmatched_prev.is_empty()
            && self.unmatched_next.is_empty()
            && self.pairs.iter().all(|(a, b)| a == b)
    }
}

/// Greedy nearest-neighbor injective pairing between two nonempty sets;
/// leftover points (cardinality changes) are flagged, not dropped.
pub fn match_branches(prev: &PointSet, next: &PointSet) -> Result<BranchMatch> {
    if prev.is_empty() || next.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut edges = Vec::with_capacity(prev.len() * next.len());
    for i in 0..prev.len() {
        for j in 0..next.len() {
            edges.push((dist2(&prev.points[i], &next.points[j]), i, j));
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut used_prev = vec![false; prev.len()];
    let mut used_next = vec![false; next.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in edges {
        if !used_prev[i] && !used_next[j] {
            used_prev[i] = true;
            used_next[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort();
    Ok(BranchMatch {
        pairs,
        unmatched_prev: (0..prev.len()).filter(|i| !used_prev[*i]).collect(),
        unmatched_next: (0..next.len()).filter(|j| !used_next[*j]).collect(),
    })
}
