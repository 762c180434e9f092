//! The three subcommands: transform-build, observe, diagnose. Each emits
//! CSV artifacts plus a meta.json echoing every consumed tunable.

use std::path::Path;

use serde_json::json;
use setkkl_core::distinguish::{
    backward_indist_oracle, characterization_check, indist_fn_from_report, k_sweep_rank,
    rank_profile_hm,
};
use setkkl_core::observer::{self, run_set_observer};
use setkkl_core::setvalued::{self, cardinality_profile};
use setkkl_core::transform::{conditioning_map, TransformOpts};

use crate::config::Resolved;
use crate::csvio::{fmt_f64, write_json, CsvWriter};
use crate::CliError;

fn base_meta(res: &Resolved, command: &str) -> serde_json::Value {
    json!({
        "command": command,
        "config": serde_json::to_value(&res.config).expect("config serializes"),
        "resolved": {
            "system": res.system.name,
            "n_x": res.system.n_x,
            "n_y": res.system.n_y,
            "n_o": res.pair.n_o,
            "n_z": res.pair.n_z(),
            "hurwitz_margin_rho": res.pair.rho,
            "ctrb_cond": res.pair.ctrb_cond,
            "k": res.field.k,
            "tau": res.field.tau,
            "sup_bh_bound": res.field.sup_bh,
            "transform_step": res.field.step,
            "tol_trunc": res.field.tol_trunc,
            "r_keep": res.r_keep,
            "r_zero": res.r_zero,
            "atlas_points": res.atlas.len(),
            "atlas_grid_spacing": res.atlas.grid_spacing,
            "inversion": {
                "residual_tol": res.inversion.residual_tol,
                "cluster_radius": res.inversion.cluster_radius,
                "max_gn_iters": res.inversion.max_gn_iters,
                "seeds_per_query": res.inversion.seeds_per_query,
            },
            "pair_seed": res.config.pair.seed,
        },
    })
}

fn coord_headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Tabulate T over the domain, emit the atlas and the conditioning map.
pub fn cmd_transform_build(res: &Resolved, out_dir: &Path, quiet: bool) -> Result<(), CliError> {
    let n_x = res.system.n_x;
    let n_z = res.atlas.n_z;
    let mut header: Vec<String> = coord_headers("x_", n_x);
    header.extend(coord_headers("z_", n_z));
    header.push("sigma_min".into());
    header.push("cond".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut atlas_csv = CsvWriter::new(&header_refs);
    for i in 0..res.atlas.len() {
        let mut row: Vec<String> = res.atlas.points[i].iter().map(|v| fmt_f64(*v)).collect();
        row.extend(res.atlas.images[i].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(res.atlas.jac_sigma_min[i]));
        row.push(fmt_f64(res.atlas.jac_cond[i]));
        atlas_csv.row(&row);
    }
    atlas_csv.write(&out_dir.join("atlas.csv"))?;

    let mut cond_header: Vec<String> = coord_headers("x_", n_x);
    cond_header.push("cond".into());
    let cond_refs: Vec<&str> = cond_header.iter().map(|s| s.as_str()).collect();
    let mut cond_csv = CsvWriter::new(&cond_refs);
    for i in 0..res.atlas.len() {
        let mut row: Vec<String> = res.atlas.points[i].iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(res.atlas.jac_cond[i]));
        cond_csv.row(&row);
    }
    cond_csv.write(&out_dir.join("conditioning.csv"))?;

    let report = conditioning_map(&res.atlas).map_err(CliError::Numeric)?;
    let mut meta = base_meta(res, "transform-build");
    meta["results"] = json!({
        "min_sigma_min": report.min_sigma_min,
        "max_cond": report.max_cond,
        "full_rank": report.full_rank,
        "rank_tol_rel": report.rank_tol_rel,
        "worst_point": report.worst_point,
    });
    write_json(&out_dir.join("meta.json"), &meta)?;
    if !quiet {
        println!(
            "transform-build: {} atlas points, min sigma_min {:.3e}, max cond {:.3e}, full rank: {}",
            res.atlas.len(),
            report.min_sigma_min,
            report.max_cond,
            report.full_rank
        );
    }
    Ok(())
}

/// Run the set-valued observer and serialize the full record.
pub fn cmd_observe(res: &Resolved, out_dir: &Path, quiet: bool) -> Result<(), CliError> {
    let (obs_cfg, section) = res.observer_config()?;
    // Ground-truth indistinguishable sets: the registry's analytic map when
    // present, else the brute-force oracle over the domain grid.
    let oracle_map;
    let indist = match &res.system.indist {
        Some(_) => None,
        None => {
            let report = backward_indist_oracle(
                &res.cutoff_system,
                &res.system.domain,
                res.config.diagnostics.oracle_horizon,
                res.config.diagnostics.oracle_tol,
                res.config.diagnostics.oracle_step,
            )
            .map_err(CliError::Numeric)?;
            oracle_map = indist_fn_from_report(&report);
            Some(&oracle_map)
        }
    };
    let run = run_set_observer(&res.system, &res.field, &res.atlas, &res.inversion, &obs_cfg, indist)
        .map_err(CliError::Numeric)?;

    let n_x = res.system.n_x;
    let n_z = res.field.n_z();
    let p_max = run.indist_truth.iter().map(|s| s.len()).max().unwrap_or(0);

    let mut header: Vec<String> = vec!["t".into()];
    header.extend(coord_headers("z_", n_z));
    header.extend(coord_headers("x_true_", n_x));
    header.extend(coord_headers("sel_", n_x));
    header.push("hausdorff".into());
    header.extend(coord_headers("err_branch_", p_max));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut run_csv = CsvWriter::new(&header_refs);
    for i in 0..run.times.len() {
        let mut row = vec![fmt_f64(run.times[i])];
        row.extend(run.z_states[i].iter().map(|v| fmt_f64(*v)));
        row.extend(run.truth_at[i].iter().map(|v| fmt_f64(*v)));
        row.extend(run.selection[i].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(run.hausdorff_series[i]));
        for b in 0..p_max {
            row.push(
                run.selection_error_series[i]
                    .get(b)
                    .map(|v| fmt_f64(*v))
                    .unwrap_or_else(|| "nan".into()),
            );
        }
        run_csv.row(&row);
    }
    run_csv.write(&out_dir.join("run.csv"))?;

    let mut est_header: Vec<String> = vec!["t".into(), "branch".into()];
    est_header.extend(coord_headers("x_", n_x));
    let est_refs: Vec<&str> = est_header.iter().map(|s| s.as_str()).collect();
    let mut est_csv = CsvWriter::new(&est_refs);
    for i in 0..run.times.len() {
        for (b, p) in run.estimates[i].points.iter().enumerate() {
            let mut row = vec![fmt_f64(run.times[i]), b.to_string()];
            row.extend(p.iter().map(|v| fmt_f64(*v)));
            est_csv.row(&row);
        }
    }
    est_csv.write(&out_dir.join("estimates.csv"))?;

    let iss_rows = match &section.iss_amplitudes {
        Some(amplitudes) => {
            let mut sorted = amplitudes.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rows = observer::iss_sweep(
                &res.system,
                &res.field,
                &res.atlas,
                &res.inversion,
                &obs_cfg,
                &sorted,
            )
            .map_err(CliError::Numeric)?;
            let mut iss_csv = CsvWriter::new(&["amplitude", "floor"]);
            for r in &rows {
                iss_csv.row(&[fmt_f64(r.amplitude), fmt_f64(r.floor)]);
            }
            iss_csv.write(&out_dir.join("iss.csv"))?;
            Some(rows)
        }
        None => None,
    };

    let l_emp = setvalued::empirical_lipschitz(&res.field, &res.atlas, &res.inversion, 30, 7)
        .map_err(CliError::Numeric)?;

    let mut meta = base_meta(res, "observe");
    meta["results"] = json!({
        "samples": run.times.len(),
        "hausdorff_initial": run.hausdorff_series.first(),
        "hausdorff_floor": run.hausdorff_floor(),
        "max_jump": run.max_jump,
        "jump_tol": run.jump_tol,
        "selection_gaps": run.selection_gaps,
        "domain_exit_times": run.domain_exit,
        "indist_provenance": run.indist_provenance,
        "empirical_lipschitz": l_emp,
        "noise_seed": section.noise.seed,
        "iss": iss_rows.as_ref().map(|rows| {
            rows.iter().map(|r| json!({"amplitude": r.amplitude, "floor": r.floor})).collect::<Vec<_>>()
        }),
    });
    write_json(&out_dir.join("meta.json"), &meta)?;
    if !quiet {
        println!(
            "observe: {} samples, hausdorff floor {:.3e}, max jump {:.3e} (tol {:.3e}), L_emp {:.3e}",
            run.times.len(),
            run.hausdorff_floor(),
            run.max_jump,
            run.jump_tol,
            l_emp
        );
    }
    Ok(())
}

/// Run the toggled diagnostics: cardinality profile, characterization
/// check, H_m rank map, k-sweep.
pub fn cmd_diagnose(res: &Resolved, out_dir: &Path, quiet: bool) -> Result<(), CliError> {
    let diag = &res.config.diagnostics;
    let n_x = res.system.n_x;
    let mut results = json!({});

    let oracle = if diag.characterization {
        let report = backward_indist_oracle(
            &res.cutoff_system,
            &res.system.domain,
            diag.oracle_horizon,
            diag.oracle_tol,
            diag.oracle_step,
        )
        .map_err(CliError::Numeric)?;
        let mut header: Vec<String> = vec!["index".into()];
        header.extend(coord_headers("x_", n_x));
        header.push("class_id".into());
        let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut csv = CsvWriter::new(&refs);
        for (i, p) in report.grid.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(p.iter().map(|v| fmt_f64(*v)));
            row.push(report.class_id[i].to_string());
            csv.row(&row);
        }
        csv.write(&out_dir.join("indist.csv"))?;
        let verdict = characterization_check(&res.field, &report, diag.match_tol)
            .map_err(CliError::Numeric)?;
        results["characterization"] = json!({
            "pass": verdict.pass,
            "match_tol": verdict.match_tol,
            "forward_worst": verdict.forward_worst,
            "forward_pair": verdict.forward_pair,
            "reverse_worst": verdict.reverse_worst,
            "reverse_pair": verdict.reverse_pair,
            "classes": report.classes.len(),
            "transitivity_violations": report.transitivity_violations.len(),
            "oracle_horizon": report.horizon,
            "oracle_tol": report.tol,
        });
        if !quiet {
            println!(
                "diagnose: characterization pass={} forward {:.3e} reverse {:.3e}",
                verdict.pass, verdict.forward_worst, verdict.reverse_worst
            );
        }
        Some(report)
    } else {
        None
    };

    if diag.cardinality {
        let profile = cardinality_profile(&res.field, &res.atlas, &res.inversion)
            .map_err(CliError::Numeric)?;
        let mut header: Vec<String> = coord_headers("x_", n_x);
        header.push("card".into());
        header.push("modal_flag".into());
        let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut csv = CsvWriter::new(&refs);
        for i in 0..res.atlas.len() {
            let mut row: Vec<String> =
                res.atlas.points[i].iter().map(|v| fmt_f64(*v)).collect();
            row.push(profile.cards[i].to_string());
            row.push(if profile.cards[i] == profile.modal_p { "1" } else { "0" }.to_string());
            csv.row(&row);
        }
        csv.write(&out_dir.join("cardinality.csv"))?;
        results["cardinality"] = json!({
            "modal_p": profile.modal_p,
            "violations": profile.violations.len(),
            "violation_indices": profile.violations,
        });
        if let Some(report) = &oracle {
            // Numerical form of the preimage/indistinguishability identity:
            // when the characterization passes, the modal preimage
            // cardinality should match the modal oracle class size.
            let mut sizes: Vec<usize> = report.classes.iter().map(|c| c.len()).collect();
            sizes.sort_unstable();
            let modal_class = sizes[sizes.len() / 2];
            results["cardinality"]["modal_oracle_class_size"] = json!(modal_class);
        }
        if !quiet {
            println!(
                "diagnose: cardinality modal p = {}, {} violations",
                profile.modal_p,
                profile.violations.len()
            );
        }
    }

    if diag.rank_map {
        let report = rank_profile_hm(&res.system, &res.system.domain, diag.hm_order)
            .map_err(CliError::Numeric)?;
        let mut header: Vec<String> = coord_headers("x_", n_x);
        header.push("sigma_min".into());
        header.push("rank".into());
        let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut csv = CsvWriter::new(&refs);
        for i in 0..report.grid.len() {
            let mut row: Vec<String> = report.grid[i].iter().map(|v| fmt_f64(*v)).collect();
            row.push(fmt_f64(report.sigma_min[i]));
            row.push(report.rank[i].to_string());
            csv.row(&row);
        }
        csv.write(&out_dir.join("observability.csv"))?;
        results["rank_map"] = json!({
            "m": report.m,
            "deficient_count": report.deficient.len(),
            "deficient_indices": report.deficient,
            "grid_points": report.grid.len(),
        });
        if !quiet {
            println!(
                "diagnose: H_{} rank map, {} deficient of {}",
                report.m,
                report.deficient.len(),
                report.grid.len()
            );
        }
    }

    if let Some(ks) = &diag.k_sweep {
        let mut rng = setkkl_core::rng::SplitMix64::new(diag.probe_seed);
        let probes: Vec<Vec<f64>> = (0..diag.probe_count)
            .map(|_| res.system.domain.sample(&mut rng))
            .collect();
        let rows = k_sweep_rank(
            &res.cutoff_system,
            &res.pair,
            ks,
            &probes,
            TransformOpts {
                step: res.field.step,
                tol_trunc: res.field.tol_trunc,
                k: 1.0,
                tau: None,
            },
        )
        .map_err(CliError::Numeric)?;
        let mut csv = CsvWriter::new(&["k", "min_sigma_min", "max_cond", "full_rank"]);
        for r in &rows {
            csv.row(&[
                fmt_f64(r.k),
                fmt_f64(r.min_sigma_min),
                fmt_f64(r.max_cond),
                if r.full_rank { "1" } else { "0" }.to_string(),
            ]);
        }
        csv.write(&out_dir.join("ksweep.csv"))?;
        results["k_sweep"] = json!(rows
            .iter()
            .map(|r| json!({
                "k": r.k,
                "min_sigma_min": r.min_sigma_min,
                "max_cond": r.max_cond,
                "full_rank": r.full_rank,
            }))
            .collect::<Vec<_>>());
        if !quiet {
            for r in &rows {
                println!(
                    "diagnose: k = {} min sigma_min {:.3e} max cond {:.3e} full rank {}",
                    r.k, r.min_sigma_min, r.max_cond, r.full_rank
                );
            }
        }
    }

    let mut meta = base_meta(res, "diagnose");
    meta["results"] = results;
    write_json(&out_dir.join("meta.json"), &meta)?;
    Ok(())
}
