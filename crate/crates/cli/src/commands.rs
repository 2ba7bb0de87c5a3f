//! The seven CLI verbs: gen, fit, eval, bench, sweep, perturb, dump.

use anyhow::{bail, Context, Result};
use mvda_kit::dataio::{
    generate_synthetic, load_manifest, split_by_class, write_labels, write_matrix_csv,
    DatasetManifest, MultiViewDataset,
};
use mvda_kit::kernels::{gram, KernelSpec};
use mvda_kit::model::{
    classify_cross_view, fit, run_sweep_job, sweep_jobs, BestEntry, EvalSide, ModelMode,
    ProjectionModel, SweepKernel, SweepRow, SweepSpec,
};
use mvda_kit::scatter::{
    build_kernel_scatter, build_structure, structure_spectrum_report,
};
use mvda_kit::subspace::{
    experiment_stage, run_trial, summarize_by_m, PerturbationConfig, PerturbationReport,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{
    ensure_dir, full, guard_overwrite, meta_comment, write_csv, write_json,
};

fn load_dataset(config: &RunConfig) -> Result<MultiViewDataset> {
    match (&config.manifest, &config.synthesis) {
        (Some(path), None) => load_manifest(path).map_err(|e| anyhow::anyhow!("{e}")),
        (None, Some(synth)) => generate_synthetic(synth).map_err(|e| anyhow::anyhow!("{e}")),
        (Some(_), Some(_)) => bail!("config sets both \"manifest\" and \"synthesis\"; pick one"),
        (None, None) => bail!("config needs a dataset: set \"manifest\" or \"synthesis\""),
    }
}

fn train_test(config: &RunConfig) -> Result<(MultiViewDataset, MultiViewDataset)> {
    let ds = load_dataset(config)?;
    let tc = config
        .train_classes
        .context("this command needs \"train_classes\" for the class-disjoint split")?;
    split_by_class(&ds, tc).map_err(|e| anyhow::anyhow!("{e}"))
}

fn pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .context("building worker pool")
}

pub fn cmd_gen(config: &RunConfig, force: bool) -> Result<()> {
    let synth = config.synthesis.as_ref().context("gen needs a \"synthesis\" config section")?;
    let out = config.out_dir()?;
    ensure_dir(out)?;
    let manifest_path = out.join("manifest.json");
    guard_overwrite(&manifest_path, force)?;

    let ds = generate_synthetic(synth).map_err(|e| anyhow::anyhow!("{e}"))?;
    let hash = config.hash();
    let comment = meta_comment(&hash);
    let mut views = Vec::new();
    let mut labels = Vec::new();
    for j in 0..ds.layout.views {
        let view_name = format!("view_{j}.csv");
        let label_name = format!("labels_{j}.csv");
        guard_overwrite(&out.join(&view_name), force)?;
        guard_overwrite(&out.join(&label_name), force)?;
        write_matrix_csv(&out.join(&view_name), &ds.views[j], Some(&comment))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        write_labels(&out.join(&label_name), &ds.labels[j], Some(&comment))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        println!("wrote {}", out.join(&view_name).display());
        println!("wrote {}", out.join(&label_name).display());
        views.push(view_name);
        labels.push(label_name);
    }
    let manifest = DatasetManifest {
        views,
        labels,
        names: None,
        meta: Some(json!({
            "tool": crate::output::TOOL,
            "version": crate::output::version(),
            "config_hash": hash,
        })),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&manifest_path, text)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    println!("wrote {}", manifest_path.display());
    println!(
        "dataset: {} views, {} classes, {} samples",
        ds.layout.views, ds.layout.classes, ds.layout.total
    );
    Ok(())
}

pub fn cmd_fit(config: &RunConfig, force: bool) -> Result<()> {
    let out = config.out_dir()?;
    let kernel = config.kernel.clone().context("fit needs a \"kernel\" section")?;
    let l = config.l.context("fit needs \"l\" (or --l)")?;
    let mode = config.mode.unwrap_or(ModelMode::Kernel);
    let ds = load_dataset(config)?;
    let train = match config.train_classes {
        Some(tc) => split_by_class(&ds, tc).map_err(|e| anyhow::anyhow!("{e}"))?.0,
        None => ds,
    };
    ensure_dir(out)?;
    guard_overwrite(&out.join("model.json"), force)?;
    let model =
        fit(&train, &kernel, config.epsilon, l, mode).map_err(|e| anyhow::anyhow!("{e}"))?;
    model.save(out).map_err(|e| anyhow::anyhow!("{e}"))?;
    println!("wrote {}", out.join("model.json").display());
    let hash = config.hash();
    write_json(
        &out.join("fit.json"),
        &hash,
        &json!({
            "kernel": model.kernel,
            "mode": model.mode,
            "epsilon": model.epsilon,
            "l": model.l,
            "classes": model.layout.classes,
            "samples": model.layout.total,
            "leading_eigenvalues": model.eigenvalues.iter().take(l).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

pub fn cmd_eval(config: &RunConfig) -> Result<()> {
    let out = config.out_dir()?;
    let model_dir = config.model.as_ref().context("eval needs \"model\" (a fitted model dir)")?;
    let model = ProjectionModel::load(model_dir).map_err(|e| anyhow::anyhow!("{e}"))?;
    let ds = load_dataset(config)?;
    let eval_set = match config.train_classes {
        Some(tc) => split_by_class(&ds, tc).map_err(|e| anyhow::anyhow!("{e}"))?.1,
        None => ds,
    };
    let probe = config.probe_view.unwrap_or(0);
    let gallery = config.gallery_view.unwrap_or(1);
    let result = classify_cross_view(
        &model,
        EvalSide { view: probe, samples: &eval_set.views[probe], labels: &eval_set.labels[probe] },
        EvalSide {
            view: gallery,
            samples: &eval_set.views[gallery],
            labels: &eval_set.labels[gallery],
        },
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    ensure_dir(out)?;
    let hash = config.hash();
    write_json(&out.join("eval.json"), &hash, &result)?;
    let rows: Vec<String> = result
        .predicted
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{i},{p},{}", eval_set.labels[probe][i]))
        .collect();
    write_csv(&out.join("predictions.csv"), &hash, "probe_index,predicted,actual", &rows)?;
    println!("rank-1 rate: {:.2}%", result.rate);
    Ok(())
}

fn sweep_spec(config: &RunConfig) -> Result<SweepSpec> {
    let kinds = if config.kinds.is_empty() {
        vec![SweepKernel::Linear, SweepKernel::Rbf, SweepKernel::Rff]
    } else {
        config.kinds.clone()
    };
    let l_grid = if config.l_grid.is_empty() {
        vec![config.l.context("sweep needs \"l_grid\" or \"l\"")?]
    } else {
        config.l_grid.clone()
    };
    let sigma_grid = if config.sigma_grid.is_empty() {
        config.sigma.into_iter().collect()
    } else {
        config.sigma_grid.clone()
    };
    let m_grid = if config.m_grid.is_empty() {
        config.m.into_iter().collect()
    } else {
        config.m_grid.clone()
    };
    Ok(SweepSpec {
        kinds,
        sigma_grid,
        l_grid,
        m_grid,
        rff_trials: config.trials,
        epsilon: config.epsilon,
        seed: config.seed,
        normalize: config.rff_normalize.unwrap_or(true),
        mode: config.mode.unwrap_or(ModelMode::Kernel),
    })
}

/// Run every sweep job in the worker pool, reassembling rows in job order
/// so the output is independent of the schedule.
fn run_jobs_parallel(
    config: &RunConfig,
    train: &MultiViewDataset,
    test: &MultiViewDataset,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    let jobs = sweep_jobs(spec).map_err(|e| anyhow::anyhow!("{e}"))?;
    let pool = pool(config)?;
    let per_job: Vec<mvda_kit::Result<Vec<SweepRow>>> = pool.install(|| {
        jobs.par_iter().map(|job| run_sweep_job(train, test, spec.epsilon, job)).collect()
    });
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r.map_err(|e| anyhow::anyhow!("{e}"))?);
    }
    Ok(rows)
}

fn best_by(rows: &[SweepRow], views: usize) -> Vec<BestEntry> {
    let pairs: Vec<(usize, usize)> = (0..views)
        .flat_map(|p| (0..views).filter(move |&g| g != p).map(move |g| (p, g)))
        .collect();
    mvda_kit::model::best_entries(rows, &pairs)
}

fn sweep_csv_rows(rows: &[SweepRow]) -> Vec<String> {
    rows.iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.kernel,
                r.sigma.map(full).unwrap_or_default(),
                r.m.map(|m| m.to_string()).unwrap_or_default(),
                r.l,
                r.seed,
                r.probe,
                r.gallery,
                full(r.rate)
            )
        })
        .collect()
}

const SWEEP_HEADER: &str = "kernel,sigma,m,l,seed,probe,gallery,rate";

pub fn cmd_sweep(config: &RunConfig) -> Result<()> {
    let out = config.out_dir()?;
    let (train, test) = train_test(config)?;
    let spec = sweep_spec(config)?;
    let rows = run_jobs_parallel(config, &train, &test, &spec)?;
    let best = best_by(&rows, test.layout.views);
    ensure_dir(out)?;
    let hash = config.hash();
    write_csv(&out.join("sweep.csv"), &hash, SWEEP_HEADER, &sweep_csv_rows(&rows))?;
    write_json(&out.join("sweep.json"), &hash, &json!({ "best": best }))?;
    Ok(())
}

pub fn cmd_bench(config: &RunConfig) -> Result<()> {
    let out = config.out_dir()?;
    let (train, test) = train_test(config)?;
    let spec = sweep_spec(config)?;
    let rows = run_jobs_parallel(config, &train, &test, &spec)?;
    let best = best_by(&rows, test.layout.views);
    ensure_dir(out)?;
    let hash = config.hash();

    let views = test.layout.views;
    let mut kinds: Vec<String> = best.iter().map(|b| b.kernel.clone()).collect();
    kinds.sort();
    kinds.dedup();
    for kind in &kinds {
        let mut table_rows = Vec::new();
        let mut header = String::from("probe");
        for g in 0..views {
            header.push_str(&format!(",gallery_{g}"));
        }
        for p in 0..views {
            let mut line = format!("view_{p}");
            for g in 0..views {
                if p == g {
                    line.push_str(",-");
                } else if let Some(entry) =
                    best.iter().find(|b| &b.kernel == kind && b.probe == p && b.gallery == g)
                {
                    line.push_str(&format!(",{:.2}", entry.rate));
                } else {
                    line.push(',');
                }
            }
            table_rows.push(line);
        }
        write_csv(&out.join(format!("bench_{kind}.csv")), &hash, &header, &table_rows)?;
    }

    let sensitivity = epsilon_sensitivity(config, &train, &test, &best)?;
    write_json(
        &out.join("bench.json"),
        &hash,
        &json!({ "best": best, "epsilon_sensitivity": sensitivity }),
    )?;
    Ok(())
}

/// Rates of each kernel's best cell when the regularizer moves a decade
/// down and up, reported so runs expose their ε dependence.
fn epsilon_sensitivity(
    config: &RunConfig,
    train: &MultiViewDataset,
    test: &MultiViewDataset,
    best: &[BestEntry],
) -> Result<serde_json::Value> {
    let mut kinds: Vec<String> = best.iter().map(|b| b.kernel.clone()).collect();
    kinds.sort();
    kinds.dedup();
    let mode = config.mode.unwrap_or(ModelMode::Kernel);
    let normalize = config.rff_normalize.unwrap_or(true);
    let mut out = Vec::new();
    for kind in kinds {
        let top = best
            .iter()
            .filter(|b| b.kernel == kind)
            .max_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap())
            .expect("kind came from best entries");
        let kernel = match kind.as_str() {
            "linear" => KernelSpec::Linear,
            "rbf" => KernelSpec::Rbf { sigma: top.sigma.unwrap() },
            "rff" => KernelSpec::Rff {
                sigma: top.sigma.unwrap(),
                m: top.m.unwrap(),
                seed: config.seed,
                normalize,
            },
            other => bail!("unexpected kernel kind {other}"),
        };
        let reference =
            fit(train, &kernel, config.epsilon, top.l, mode).map_err(|e| anyhow::anyhow!("{e}"))?;
        let eps = reference.epsilon;
        let mut rates = Vec::new();
        for scale in [0.1, 1.0, 10.0] {
            let model = fit(train, &kernel, Some(eps * scale), top.l, mode)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut acc = Vec::new();
            for p in 0..test.layout.views {
                for g in 0..test.layout.views {
                    if p == g {
                        continue;
                    }
                    let r = classify_cross_view(
                        &model,
                        EvalSide {
                            view: p,
                            samples: &test.views[p],
                            labels: &test.labels[p],
                        },
                        EvalSide {
                            view: g,
                            samples: &test.views[g],
                            labels: &test.labels[g],
                        },
                    )
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                    acc.push(r.rate);
                }
            }
            rates.push(json!({
                "epsilon": eps * scale,
                "mean_rate": acc.iter().sum::<f64>() / acc.len() as f64,
            }));
        }
        out.push(json!({ "kernel": kind, "at_best": { "sigma": top.sigma, "m": top.m, "l": top.l }, "rates": rates }));
    }
    Ok(serde_json::Value::Array(out))
}

pub fn cmd_perturb(config: &RunConfig) -> Result<()> {
    let out = config.out_dir()?;
    let ds = load_dataset(config)?;
    let sigma = config
        .sigma
        .or(match config.kernel {
            Some(KernelSpec::Rbf { sigma }) | Some(KernelSpec::Rff { sigma, .. }) => Some(sigma),
            _ => None,
        })
        .context("perturb needs \"sigma\" (or an RBF kernel section)")?;
    let l = config.l.context("perturb needs \"l\"")?;
    if config.m_grid.is_empty() {
        bail!("perturb needs a nonempty \"m_grid\"");
    }
    let mut pcfg = PerturbationConfig::new(
        sigma,
        l,
        config.m_grid.clone(),
        config.trials,
        config.eta,
        config.seed,
    );
    pcfg.epsilon = config.epsilon;
    pcfg.crawford_restarts = config.crawford_restarts;

    let stage = experiment_stage(&ds, &pcfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    let cells: Vec<(usize, usize)> = (0..pcfg.m_grid.len())
        .flat_map(|mi| (0..pcfg.trials).map(move |t| (mi, t)))
        .collect();
    let pool = pool(config)?;
    let results: Vec<mvda_kit::Result<PerturbationReport>> =
        pool.install(|| cells.par_iter().map(|&(mi, t)| run_trial(&stage, mi, t)).collect());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        reports.push(r.map_err(|e| anyhow::anyhow!("{e}"))?);
    }

    ensure_dir(out)?;
    let hash = config.hash();
    let rows: Vec<String> = reports.iter().map(PerturbationReport::csv_row).collect();
    write_csv(&out.join("perturb.csv"), &hash, PerturbationReport::csv_header(), &rows)?;
    let summary = summarize_by_m(&reports);
    write_json(
        &out.join("perturb.json"),
        &hash,
        &json!({
            "epsilon": stage.epsilon,
            "k_star": stage.k_star,
            "crawford_exact": stage.crawford_exact,
            "summary": summary,
            "reports": reports,
        }),
    )?;
    for s in &summary {
        println!(
            "m={}: median sin_theta {:.4} (thm3 informative {}, vacuous {}, inapplicable {})",
            s.m, s.median_sin_theta_sp, s.thm3_informative, s.thm3_vacuous, s.thm3_inapplicable
        );
    }
    Ok(())
}

pub fn cmd_dump(config: &RunConfig, force: bool) -> Result<()> {
    let out = config.out_dir()?;
    let ds = load_dataset(config)?;
    ensure_dir(out)?;
    let hash = config.hash();
    let comment = meta_comment(&hash);
    let h = build_structure(&ds.layout).map_err(|e| anyhow::anyhow!("{e}"))?;
    for (name, matrix) in [("hd.csv", &h.hd), ("hs.csv", &h.hs)] {
        let path = out.join(name);
        guard_overwrite(&path, force)?;
        write_matrix_csv(&path, matrix, Some(&comment)).map_err(|e| anyhow::anyhow!("{e}"))?;
        println!("wrote {}", path.display());
    }
    let report = structure_spectrum_report(&h);
    write_json(&out.join("structure_report.json"), &hash, &report)?;

    if let Some(kernel) = &config.kernel {
        let blocks: Vec<_> = match kernel {
            KernelSpec::Linear | KernelSpec::Rbf { .. } => ds
                .views
                .iter()
                .map(|x| gram(x, x, kernel))
                .collect::<mvda_kit::Result<_>>()
                .map_err(|e| anyhow::anyhow!("{e}"))?,
            KernelSpec::Rff { normalize, .. } => ds
                .views
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let map = mvda_kit::kernels::rff_sample_for_view(x.ncols(), kernel, j)?;
                    let phi = mvda_kit::kernels::rff_transform(x, &map, *normalize)?;
                    Ok(mvda_kit::kernels::approx_gram(&phi))
                })
                .collect::<mvda_kit::Result<_>>()
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        };
        for (j, k) in blocks.iter().enumerate() {
            let path = out.join(format!("gram_{j}.csv"));
            guard_overwrite(&path, force)?;
            write_matrix_csv(&path, k, Some(&comment)).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("wrote {}", path.display());
        }
        let pair = build_kernel_scatter(&blocks, &h).map_err(|e| anyhow::anyhow!("{e}"))?;
        for (name, matrix) in [("d.csv", &pair.d), ("s.csv", &pair.s)] {
            let path = out.join(name);
            guard_overwrite(&path, force)?;
            write_matrix_csv(&path, matrix, Some(&comment)).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("wrote {}", path.display());
        }

        // the regularized pencil solution for this kernel
        let l = config.l.unwrap_or(ds.layout.classes.saturating_sub(1).max(1));
        let solution = mvda_kit::gep::solve_regularized(&pair, config.epsilon.unwrap_or_else(|| mvda_kit::gep::default_epsilon(&pair.s)), l)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let rows: Vec<String> = solution.eigenvalues.iter().map(|v| full(*v)).collect();
        write_csv(&out.join("eigenvalues.csv"), &hash, "eigenvalue", &rows)?;
        let path = out.join("eigenvectors.csv");
        guard_overwrite(&path, force)?;
        write_matrix_csv(&path, &solution.eigenvectors, Some(&comment))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
