//! The set-valued observer loop: run the linear z-filter on a measured
//! output, invert the transform set-valuedly at a decimated grid, extract a
//! continuous selection by branch tracking, and record the error series.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynsys::{self, IndistMap, OutputSignal, State, SystemModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::dist2;
use crate::math;
use crate::rng::SplitMix64;
use crate::setvalued::{self, InversionConfig, PointSet};
use crate::transform::{FilterPair, ImageAtlas, TransformField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Uniform,
    Sinusoid,
}

/// Measurement noise added to the plant output before filtering.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub amplitude: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, amplitude: 0.0, seed: 0 }
    }
}

const SINUSOID_OMEGA: f64 = 7.3;

/// Noise samples on a time grid. The same seed yields the same underlying
/// sequence at every amplitude, so ISS sweeps scale one fixed realization.
pub fn noise_series(spec: &NoiseSpec, times: &[f64], n_y: usize) -> Vec<Vec<f64>> {
    match spec.kind {
        NoiseKind::None => times.iter().map(|_| vec![0.0; n_y]).collect(),
        NoiseKind::Uniform => {
            let mut rng = SplitMix64::new(spec.seed);
            times
                .iter()
                .map(|_| {
                    (0..n_y)
                        .map(|_| spec.amplitude * rng.uniform(-1.0, 1.0))
                        .collect()
                })
                .collect()
        }
        NoiseKind::Sinusoid => {
            let mut rng = SplitMix64::new(spec.seed);
            let phases: Vec<f64> = (0..n_y)
                .map(|_| rng.uniform(0.0, 2.0 * core::f64::consts::PI))
                .collect();
            times
                .iter()
                .map(|t| {
                    phases
                        .iter()
                        .map(|p| spec.amplitude * math::sin(SINUSOID_OMEGA * t + p))
                        .collect()
                })
                .collect()
        }
    }
}

/// RK4 integration of the filter `z' = k A z + B y(t)` with `y` linearly
/// interpolated at substeps. Deterministic for a fixed grid.
pub fn run_filter(
    pair: &FilterPair,
    k: f64,
    y: &OutputSignal,
    z0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(Error::Precondition("step must be positive"));
    }
    if z0.len() != pair.n_z() {
        return Err(Error::Precondition("z0 dimension mismatch"));
    }
    if t1 < t0 {
        return Err(Error::Precondition("filter runs forward in time"));
    }
    let (lo, hi) = y.span();
    let slack = 1e-9 * (hi - lo).max(1.0);
    if t0 < lo - slack || t1 > hi + slack {
        return Err(Error::SignalGap { t: t1, lo, hi });
    }
    let mut times = vec![t0];
    let mut states = vec![z0.to_vec()];
    if t1 == t0 {
        return Ok(Trajectory { times, states });
    }
    let n = dynsys::step_count(t1 - t0, step);
    let mut z = z0.to_vec();
    let nz = pair.n_z();
    let rhs = |t: f64, zin: &[f64], out: &mut [f64]| -> Result<()> {
        let yv = y.sample(t)?;
        let az = pair.apply_a(k, zin);
        let by = pair.apply_b(&yv);
        for i in 0..nz {
            out[i] = az[i] + by[i];
        }
        Ok(())
    };
    let mut k1 = vec![0.0; nz];
    let mut k2 = vec![0.0; nz];
    let mut k3 = vec![0.0; nz];
    let mut k4 = vec![0.0; nz];
    let mut tmp = vec![0.0; nz];
    for i in 1..=n {
        let t_prev = if i == 1 { t0 } else { t0 + step * (i - 1) as f64 };
        let t_next = if i == n { t1 } else { t0 + step * i as f64 };
        let h = t_next - t_prev;
        rhs(t_prev, &z, &mut k1)?;
        for j in 0..nz {
            tmp[j] = z[j] + 0.5 * h * k1[j];
        }
        rhs(t_prev + 0.5 * h, &tmp, &mut k2)?;
        for j in 0..nz {
            tmp[j] = z[j] + 0.5 * h * k2[j];
        }
        rhs(t_prev + 0.5 * h, &tmp, &mut k3)?;
        for j in 0..nz {
            tmp[j] = z[j] + h * k3[j];
        }
        rhs(t_next, &tmp, &mut k4)?;
        for j in 0..nz {
            z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        times.push(t_next);
        states.push(z.clone());
    }
    Ok(Trajectory { times, states })
}

#[derive(Debug, Clone)]
pub struct ObserverConfig {
    pub x0: State,
    /// Filter initial condition; zeros when absent (the transient case).
    pub z0: Option<Vec<f64>>,
    pub horizon: f64,
    pub step: f64,
    /// Set estimates are computed every `decimation`-th integration step.
    pub decimation: usize,
    pub noise: NoiseSpec,
    /// Starting point for the continuous selection; defaults to the first
    /// point of the first estimate.
    pub selection_guess: Option<State>,
}

/// Time-indexed record of one observer run.
#[derive(Debug, Clone)]
pub struct ObserverRun {
    /// Decimated estimate times.
    pub times: Vec<f64>,
    pub z_states: Vec<Vec<f64>>,
    pub estimates: Vec<PointSet>,
    pub selection: Vec<State>,
    /// Full-resolution plant truth.
    pub truth: Trajectory,
    /// Truth sampled on the decimated grid.
    pub truth_at: Vec<State>,
    /// Ground-truth indistinguishable sets at the decimated times.
    pub indist_truth: Vec<PointSet>,
    pub hausdorff_series: Vec<f64>,
    /// Per time, distance from the selection to each indistinguishable
    /// branch (branch order fixed by the indistinguishability map).
    pub selection_error_series: Vec<Vec<f64>>,
    /// Times at which the truth left the domain (guarantees suspended).
    pub domain_exit: Vec<f64>,
    pub max_jump: f64,
    pub jump_tol: f64,
    /// Decimated indices where the estimate was empty and the selection
    /// held its previous value.
    pub selection_gaps: Vec<usize>,
    pub indist_provenance: String,
}

impl ObserverRun {
    /// Floor of the Hausdorff series: max over the trailing 20% window.
    pub fn hausdorff_floor(&self) -> f64 {
        floor_of(&self.hausdorff_series)
    }
}

fn floor_of(series: &[f64]) -> f64 {
    if series.is_empty() {
        return f64::NAN;
    }
    let start = ((series.len() as f64) * 0.8) as usize;
    let start = start.min(series.len() - 1);
    series[start..].iter().fold(0.0f64, |m, v| m.max(*v))
}

/// Simulate the plant, feed the (optionally noisy) output through the
/// filter, and invert set-valuedly on a decimated grid.
///
/// `indist` overrides the ground-truth indistinguishable-set map; when
/// absent the map registered on the system is used, else the singleton
/// truth.
pub fn run_set_observer(
    truth_system: &SystemModel,
    field: &TransformField,
    atlas: &ImageAtlas,
    inv_cfg: &InversionConfig,
    cfg: &ObserverConfig,
    indist: Option<&IndistMap>,
) -> Result<ObserverRun> {
    if !(cfg.horizon >= 0.0) {
        return Err(Error::Precondition("horizon must be nonnegative"));
    }
    if cfg.decimation == 0 {
        return Err(Error::Precondition("decimation must be positive"));
    }
    let truth = if cfg.horizon > 0.0 {
        dynsys::integrate(truth_system, &cfg.x0, 0.0, cfg.horizon, cfg.step)?
    } else {
        Trajectory { times: vec![0.0], states: vec![cfg.x0.clone()] }
    };
    let noise = noise_series(&cfg.noise, &truth.times, truth_system.n_y);
    let mut y_values = Vec::with_capacity(truth.len());
    for (x, nu) in truth.states.iter().zip(&noise) {
        let mut y = truth_system.h(x);
        for (yi, ni) in y.iter_mut().zip(nu) {
            *yi += ni;
        }
        y_values.push(y);
    }
    let y = OutputSignal { times: truth.times.clone(), values: y_values };
    let z0 = match &cfg.z0 {
        Some(z) => {
            if z.len() != field.n_z() {
                return Err(Error::Precondition("z0 dimension mismatch"));
            }
            z.clone()
        }
        None => vec![0.0; field.n_z()],
    };
    let z_traj = if cfg.horizon > 0.0 {
        run_filter(&field.pair, field.k, &y, &z0, 0.0, cfg.horizon, cfg.step)?
    } else {
        Trajectory { times: vec![0.0], states: vec![z0] }
    };

    // Decimated estimate grid; the final node is always included.
    let mut picks: Vec<usize> = (0..truth.len()).step_by(cfg.decimation).collect();
    if *picks.last().unwrap() != truth.len() - 1 {
        picks.push(truth.len() - 1);
    }

    let fallback: IndistMap = alloc::sync::Arc::new(|x: &[f64]| vec![x.to_vec()]);
    let (indist_map, indist_provenance): (&IndistMap, &str) = match indist {
        Some(m) => (m, "caller"),
        None => match &truth_system.indist {
            Some(m) => (m, "registry-analytic"),
            None => (&fallback, "truth-singleton"),
        },
    };

    let mut times = Vec::with_capacity(picks.len());
    let mut z_states = Vec::with_capacity(picks.len());
    let mut estimates = Vec::with_capacity(picks.len());
    let mut truth_at = Vec::with_capacity(picks.len());
    let mut indist_truth = Vec::with_capacity(picks.len());
    let mut hausdorff_series = Vec::with_capacity(picks.len());
    let mut domain_exit = Vec::new();
    for &i in &picks {
        let t = truth.times[i];
        let x = &truth.states[i];
        // The convergence guarantees hold while the truth stays inside the
        // estimation domain (the set the transform was tabulated over).
        if !field.system.domain.contains(x) {
            domain_exit.push(t);
        }
        let z = &z_traj.states[i];
        let est = setvalued::extend_inverse(field, atlas, z, inv_cfg)?;
        let truth_set = PointSet::new(indist_map(x), 0.0);
        let (dh, _, _) = setvalued::hausdorff(&est, &truth_set)?;
        times.push(t);
        z_states.push(z.clone());
        estimates.push(est);
        truth_at.push(x.clone());
        indist_truth.push(truth_set);
        hausdorff_series.push(dh);
    }

    // A true continuous selection moves at the plant's speed; allow 5x the
    // worst decimated truth step.
    let mut max_truth_step = 0.0f64;
    for w in truth_at.windows(2) {
        max_truth_step = max_truth_step.max(dist2(&w[0], &w[1]));
    }
    let jump_tol = 5.0 * max_truth_step;

    let guess = cfg
        .selection_guess
        .clone()
        .or_else(|| estimates[0].points.first().cloned())
        .unwrap_or_else(|| cfg.x0.clone());
    let sel = continuous_selection(&estimates, &guess)?;

    let selection_error_series = sel
        .selection
        .iter()
        .zip(&indist_truth)
        .map(|(s, set)| set.points.iter().map(|b| dist2(s, b)).collect())
        .collect();

    Ok(ObserverRun {
        times,
        z_states,
        estimates,
        selection: sel.selection,
        truth,
        truth_at,
        indist_truth,
        hausdorff_series,
        selection_error_series,
        domain_exit,
        max_jump: sel.max_jump,
        jump_tol,
        selection_gaps: sel.gaps,
        indist_provenance: String::from(indist_provenance),
    })
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub selection: Vec<State>,
    pub jumps: Vec<f64>,
    pub max_jump: f64,
    /// Indices where the estimate was empty and the previous value was held.
    pub gaps: Vec<usize>,
}

/// Branch-tracking selection: start at the estimate point nearest the
/// guess, then follow the nearest point step to step. Jump magnitudes are
/// recorded; the caller decides continuity against its `jump_tol`.
pub fn continuous_selection(estimates: &[PointSet], guess: &[f64]) -> Result<SelectionResult> {
    if estimates.is_empty() {
        return Err(Error::Precondition("estimates must be nonempty"));
    }
    let nearest = |set: &PointSet, target: &[f64]| -> Option<State> {
        let mut best: Option<(f64, &State)> = None;
        for p in &set.points {
            let d = dist2(p, target);
            match &best {
                Some((bd, _)) if *bd <= d => {}
                _ => best = Some((d, p)),
            }
        }
        best.map(|(_, p)| p.clone())
    };
    let mut selection = Vec::with_capacity(estimates.len());
    let mut gaps = Vec::new();
    let first = match nearest(&estimates[0], guess) {
        Some(p) => p,
        None => {
            gaps.push(0);
            guess.to_vec()
        }
    };
    selection.push(first);
    let mut jumps = Vec::with_capacity(estimates.len().saturating_sub(1));
    for (i, est) in estimates.iter().enumerate().skip(1) {
        let prev = selection.last().expect("nonempty").clone();
        let next = match nearest(est, &prev) {
            Some(p) => p,
            None => {
                gaps.push(i);
                prev.clone()
            }
        };
        jumps.push(dist2(&prev, &next));
        selection.push(next);
    }
    let max_jump = jumps.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(SelectionResult { selection, jumps, max_jump, gaps })
}

#[derive(Debug, Clone, Copy)]
pub struct IssRow {
    pub amplitude: f64,
    pub floor: f64,
}

/// Rerun the observer at each noise amplitude and report the steady-state
/// Hausdorff floor (max over the trailing 20% window).
pub fn iss_sweep(
    truth_system: &SystemModel,
    field: &TransformField,
    atlas: &ImageAtlas,
    inv_cfg: &InversionConfig,
    base: &ObserverConfig,
    amplitudes: &[f64],
) -> Result<Vec<IssRow>> {
    if amplitudes.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::Precondition("amplitudes must be nonnegative"));
    }
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &a in amplitudes {
        let mut cfg = base.clone();
        cfg.noise.amplitude = a;
        if cfg.noise.kind == NoiseKind::None && a > 0.0 {
            cfg.noise.kind = NoiseKind::Uniform;
        }
        let run = run_set_observer(truth_system, field, atlas, inv_cfg, &cfg, None)?;
        rows.push(IssRow { amplitude: a, floor: run.hausdorff_floor() });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{cutoff_field, example_registry, integrate, output_along};
    use crate::transform::{make_filter_pair, tabulate_image, EigSpec, TransformOpts};

    fn pair1() -> FilterPair {
        make_filter_pair(1, 1, &[EigSpec::Real(-1.0)], 0).unwrap()
    }

    fn const_signal(value: f64, t1: f64) -> OutputSignal {
        OutputSignal {
            times: vec![0.0, t1],
            values: vec![vec![value], vec![value]],
        }
    }

    #[test]
    fn filter_homogeneous_decay() {
        let pair = pair1();
        let y = const_signal(0.0, 5.0);
        let traj = run_filter(&pair, 1.0, &y, &[1.0], 0.0, 5.0, 1e-3).unwrap();
        for (t, z) in traj.times.iter().zip(&traj.states) {
            assert!((z[0] - math::exp(-t)).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn filter_step_response() {
        let pair = pair1();
        let c = 2.5;
        let y = const_signal(c, 6.0);
        let traj = run_filter(&pair, 1.0, &y, &[0.0], 0.0, 6.0, 1e-3).unwrap();
        for (t, z) in traj.times.iter().zip(&traj.states) {
            let expect = c * (1.0 - math::exp(-t));
            assert!((z[0] - expect).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn filter_signal_gap_detected() {
        let pair = pair1();
        let y = const_signal(0.0, 1.0);
        assert!(matches!(
            run_filter(&pair, 1.0, &y, &[0.0], 0.0, 2.0, 1e-2),
            Err(Error::SignalGap { .. })
        ));
    }

    #[test]
    fn graph_invariance_with_matched_initialization() {
        // z0 = T(x0) and noiseless output keep z(t) on the graph of T.
        let sys = example_registry("limit_cycle_squared_output").unwrap();
        let cut = cutoff_field(&sys, 1.7, 2.55).unwrap();
        let pair = make_filter_pair(
            2,
            3,
            &[EigSpec::Real(-1.0), EigSpec::Real(-2.0), EigSpec::Real(-3.0)],
            0,
        )
        .unwrap();
        let field = crate::transform::TransformField::new(
            cut,
            pair,
            TransformOpts { step: 1e-3, tol_trunc: 1e-6, ..Default::default() },
        )
        .unwrap();
        let x0 = [1.2, 0.0];
        let horizon = 3.0;
        let truth = integrate(&sys, &x0, 0.0, horizon, 1e-3).unwrap();
        let y = output_along(&sys, &truth).unwrap();
        let z0 = field.evaluate(&x0).unwrap();
        let z = run_filter(&field.pair, 1.0, &y, &z0, 0.0, horizon, 1e-3).unwrap();
        let mut worst = 0.0f64;
        for i in (0..truth.len()).step_by(300) {
            let t_here = field.evaluate(&truth.states[i]).unwrap();
            worst = worst.max(dist2(&z.states[i], &t_here));
        }
        assert!(worst < 10.0 * (field.tol_trunc + 1e-4), "graph error {worst}");
    }

    #[test]
    fn noise_scales_linearly_with_amplitude() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let base = NoiseSpec { kind: NoiseKind::Uniform, amplitude: 0.01, seed: 9 };
        let double = NoiseSpec { kind: NoiseKind::Uniform, amplitude: 0.02, seed: 9 };
        let a = noise_series(&base, &times, 2);
        let b = noise_series(&double, &times, 2);
        for (u, v) in a.iter().zip(&b) {
            for (x, y) in u.iter().zip(v) {
                assert!((2.0 * x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn selection_tracks_singletons() {
        let estimates: Vec<PointSet> = (0..10)
            .map(|i| PointSet::new(vec![vec![i as f64 * 0.1]], 0.0))
            .collect();
        let sel = continuous_selection(&estimates, &[0.0]).unwrap();
        assert_eq!(sel.selection.len(), 10);
        for (i, s) in sel.selection.iter().enumerate() {
            assert_eq!(s[0], i as f64 * 0.1);
        }
        assert!(sel.max_jump <= 0.1 + 1e-12);
        assert!(sel.gaps.is_empty());
    }

    #[test]
    fn selection_holds_through_empty_estimates() {
        let estimates = vec![
            PointSet::new(vec![vec![1.0]], 0.0),
            PointSet::new(vec![], 0.0),
            PointSet::new(vec![vec![1.2]], 0.0),
        ];
        let sel = continuous_selection(&estimates, &[0.0]).unwrap();
        assert_eq!(sel.selection[1], vec![1.0]);
        assert_eq!(sel.gaps, vec![1]);
    }

    #[test]
    fn sinusoid_noise_deterministic_and_scaled() {
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        let a = NoiseSpec { kind: NoiseKind::Sinusoid, amplitude: 0.1, seed: 3 };
        let b = NoiseSpec { kind: NoiseKind::Sinusoid, amplitude: 0.2, seed: 3 };
        let sa = noise_series(&a, &times, 2);
        let sb = noise_series(&b, &times, 2);
        assert_eq!(sa, noise_series(&a, &times, 2));
        for (u, v) in sa.iter().zip(&sb) {
            for (x, y) in u.iter().zip(v) {
                assert!((2.0 * x - y).abs() < 1e-15);
                assert!(x.abs() <= 0.1 + 1e-12);
            }
        }
    }

    #[test]
    fn domain_exit_flagged_not_fatal() {
        // Truth decays onto the unit circle and leaves an annulus whose
        // inner radius sits above it; the run must complete with the exit
        // times recorded.
        let sys = example_registry("limit_cycle_squared_output").unwrap();
        let mut cut = cutoff_field(&sys, 1.7, 2.55).unwrap();
        cut.domain =
            crate::dynsys::DomainSpec::new_annulus(vec![0.0, 0.0], 1.05, 1.7, 16).unwrap();
        let pair = make_filter_pair(
            2,
            3,
            &[EigSpec::Real(-1.0), EigSpec::Real(-2.0), EigSpec::Real(-3.0)],
            0,
        )
        .unwrap();
        let field = crate::transform::TransformField::new(
            cut,
            pair,
            TransformOpts { step: 1e-2, tol_trunc: 1e-5, ..Default::default() },
        )
        .unwrap();
        let atlas = tabulate_image(&field, &field.system.domain.clone()).unwrap();
        let inv = InversionConfig::for_atlas(&atlas, field.tol_trunc);
        let cfg = ObserverConfig {
            x0: vec![1.2, 0.0],
            z0: None,
            horizon: 1.0,
            step: 1e-3,
            decimation: 250,
            noise: NoiseSpec::none(),
            selection_guess: None,
        };
        let run = run_set_observer(&sys, &field, &atlas, &inv, &cfg, None).unwrap();
        assert!(!run.domain_exit.is_empty());
        assert_eq!(run.times.len(), run.hausdorff_series.len());
    }

    #[test]
    fn zero_horizon_single_row() {
        let sys = example_registry("limit_cycle_squared_output").unwrap();
        let cut = cutoff_field(&sys, 1.7, 2.55).unwrap();
        let pair = make_filter_pair(
            2,
            3,
            &[EigSpec::Real(-1.0), EigSpec::Real(-2.0), EigSpec::Real(-3.0)],
            0,
        )
        .unwrap();
        let field = crate::transform::TransformField::new(
            cut,
            pair,
            TransformOpts { step: 1e-2, tol_trunc: 1e-5, ..Default::default() },
        )
        .unwrap();
        let dom = crate::dynsys::DomainSpec::new_annulus(vec![0.0, 0.0], 0.5, 1.7, 16).unwrap();
        let atlas = tabulate_image(&field, &dom).unwrap();
        let inv = InversionConfig::for_atlas(&atlas, field.tol_trunc);
        let cfg = ObserverConfig {
            x0: vec![1.2, 0.0],
            z0: None,
            horizon: 0.0,
            step: 1e-3,
            decimation: 10,
            noise: NoiseSpec::none(),
            selection_guess: None,
        };
        let run = run_set_observer(&sys, &field, &atlas, &inv, &cfg, None).unwrap();
        assert_eq!(run.times.len(), 1);
        assert_eq!(run.estimates.len(), 1);
        assert_eq!(run.indist_provenance, "registry-analytic");
    }
}
