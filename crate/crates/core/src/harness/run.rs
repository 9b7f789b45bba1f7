use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::spec::{
    db_to_linear, validate_spec, ExperimentSpec, QuantizerMethod, Scenario, SpecError, SpecWarning,
};
use crate::alloc::{LinkQuantizer, NetworkConfig};
use crate::bits::{
    central_node_variant, greedy_allocate, loss_coefficients, nominal_r1, uniform_allocate,
    BitAllocError, BitAllocation, CentralNode,
};
use crate::channel::ChannelDistribution;
use crate::loss::{delta_q, monte_carlo_delta, LossError};
use crate::quantizer::{QuantizationVector, QuantizerError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Csv(#[from] csv::Error),
    #[error("could not start worker pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl From<QuantizerError> for RunError {
    fn from(e: QuantizerError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

impl From<LossError> for RunError {
    fn from(e: LossError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

impl From<BitAllocError> for RunError {
    fn from(e: BitAllocError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub warnings: Vec<SpecWarning>,
    pub summary: Value,
}

/// Runs the scenario on the global worker pool.
pub fn run(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunSummary, RunError> {
    run_with_threads(spec, out_dir, None)
}

/// Runs the scenario on a dedicated pool of `threads` workers. Output does not
/// depend on the worker count.
pub fn run_with_threads(
    spec: &ExperimentSpec,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<RunSummary, RunError> {
    let warnings = validate_spec(spec)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let (table, summary) = pool.install(|| match spec.scenario {
        Scenario::AdaptiveVsFixed => adaptive_vs_fixed(spec),
        Scenario::LossRatioVsSnr => loss_ratio_vs_snr(spec),
        Scenario::DecayVsN => decay_vs_n(spec),
        Scenario::BitAllocationSweep => bit_allocation_sweep(spec),
        Scenario::CentralNodeComparison => central_node_comparison(spec),
        Scenario::Custom => custom(spec),
    })?;

    fs::create_dir_all(out_dir)?;
    let name = spec.scenario.name();
    let csv_path = out_dir.join(format!("{name}.csv"));
    let mut writer = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["scenario", "seed"];
    header.extend(table.header.iter().copied());
    writer.write_record(&header)?;
    let seed = spec.master_seed.to_string();
    for row in &table.rows {
        let mut record = vec![name.to_string(), seed.clone()];
        record.extend(row.iter().cloned());
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let spec_json = serde_json::to_vec(spec).map_err(SpecError::from)?;
    let manifest = json!({
        "scenario": name,
        "library_version": env!("CARGO_PKG_VERSION"),
        "spec_sha256": hex::encode(Sha256::digest(&spec_json)),
        "master_seed": spec.master_seed,
        "n_trials": spec.n_trials,
        "output": format!("{name}.csv"),
        "warnings": warnings.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "summary": summary,
    });
    let manifest_path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(SpecError::from)?;
    text.push('\n');
    fs::write(&manifest_path, text)?;

    Ok(RunSummary {
        scenario: spec.scenario,
        csv_path,
        manifest_path,
        warnings,
        summary,
    })
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

/// First point where the piecewise-linear curve through `points` reaches
/// `target`, scanning in order of increasing `x`.
pub fn interpolate_crossing(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let first = points.first()?;
    if first.1 >= target {
        return Some(first.0);
    }
    points.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        (y0 < target && y1 >= target).then(|| x0 + (target - y0) * (x1 - x0) / (y1 - y0))
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn adaptive_vs_fixed(spec: &ExperimentSpec) -> Result<(Table, Value), RunError> {
    let dist = &spec.link_distributions()?[0];
    let snrs = spec.snr_grid();
    let gamma_fixed = db_to_linear(spec.fixed_design_snr_db);
    let mut table = Table::new(&[
        "snr_db",
        "n_levels",
        "quantizer",
        "delta_nats",
        "delta_bits",
    ]);
    let mut growth = serde_json::Map::new();
    for n in spec.n_grid() {
        let fixed = QuantizerMethod::General.design(n, gamma_fixed, dist)?;
        let mut curves = [Vec::new(), Vec::new()];
        for &snr in &snrs {
            let gamma = db_to_linear(snr);
            let adaptive = QuantizerMethod::General.design(n, gamma, dist)?;
            for (k, (label, q)) in [("adaptive", &adaptive), ("fixed", &fixed)]
                .into_iter()
                .enumerate()
            {
                let d = delta_q(q, gamma, dist)?.delta_q;
                curves[k].push(d);
                table.push(vec![
                    num(snr),
                    n.to_string(),
                    label.into(),
                    num(d),
                    num(d / std::f64::consts::LN_2),
                ]);
            }
        }
        let factor = |c: &Vec<f64>| c[c.len() - 1] / c[0];
        growth.insert(
            format!("n{n}"),
            json!({"adaptive_growth": factor(&curves[0]), "fixed_growth": factor(&curves[1])}),
        );
    }
    Ok((table, json!({ "delta_growth_over_grid": growth })))
}

fn link_quantizers(
    method: QuantizerMethod,
    bits: &[Option<u32>],
    cfg: &NetworkConfig,
    dists: &[ChannelDistribution],
) -> Result<Vec<LinkQuantizer>, RunError> {
    bits.iter()
        .enumerate()
        .map(|(j, k)| match k {
            None => Ok(LinkQuantizer::Exact),
            Some(k) => {
                let n_levels = (1usize << k) - 1;
                Ok(LinkQuantizer::Levels(method.design(
                    n_levels,
                    cfg.link_gamma(j),
                    &dists[j],
                )?))
            }
        })
        .collect()
}

fn loss_ratio_vs_snr(spec: &ExperimentSpec) -> Result<(Table, Value), RunError> {
    let dists = spec.link_distributions()?;
    let ns = spec.network.n_sources;
    let k = spec.bits_per_link;
    let n_levels = (1usize << k) - 1;
    let mut table = Table::new(&[
        "snr_db",
        "n_levels",
        "quantizer",
        "delta_nats",
        "delta_bits",
        "percent_lost",
        "stderr",
    ]);
    let methods = [QuantizerMethod::Proposed, QuantizerMethod::MaxEntropy];
    let mut curves = vec![Vec::new(); methods.len()];
    for &snr in &spec.snr_grid() {
        let g = db_to_linear(snr);
        let cfg =
            NetworkConfig::new(vec![g; ns], g).map_err(|e| RunError::Numerical(e.to_string()))?;
        for (m, method) in methods.iter().enumerate() {
            let qs = link_quantizers(*method, &vec![Some(k); ns + 1], &cfg, &dists)?;
            let rep = monte_carlo_delta(&cfg, &qs, &dists, spec.n_trials, spec.master_seed)?;
            curves[m].push(json!({"snr_db": snr, "percent_lost": rep.percent_lost, "stderr": rep.percent_stderr}));
            table.push(vec![
                num(snr),
                n_levels.to_string(),
                method.name().into(),
                num(rep.mean_delta),
                num(rep.mean_delta / std::f64::consts::LN_2),
                num(rep.percent_lost),
                num(rep.percent_stderr),
            ]);
        }
    }
    let summary = methods
        .iter()
        .zip(curves)
        .map(|(m, c)| (m.name().to_string(), Value::from(c)))
        .collect::<serde_json::Map<_, _>>();
    Ok((table, json!({ "percent_lost": summary })))
}

fn decay_vs_n(spec: &ExperimentSpec) -> Result<(Table, Value), RunError> {
    let dist = &spec.link_distributions()?[0];
    let mut table = Table::new(&["snr_db", "n_levels", "delta_nats"]);
    let mut slopes = serde_json::Map::new();
    for &snr in &spec.snr_grid() {
        let gamma = db_to_linear(snr);
        let mut points = Vec::new();
        for n in spec.n_grid() {
            let q = QuantizerMethod::General.design(n, gamma, dist)?;
            let d = delta_q(&q, gamma, dist)?.delta_q;
            points.push(((n as f64).ln(), d.ln()));
            table.push(vec![num(snr), n.to_string(), num(d)]);
        }
        if points.len() >= 2 {
            slopes.insert(format!("{snr}"), json!(fit_slope(&points)));
        }
    }
    Ok((table, json!({ "log_log_slope_by_snr_db": slopes })))
}

fn allocation_label(a: &BitAllocation) -> String {
    a.link_bits()
        .iter()
        .map(|k| k.map_or("exact".to_string(), |k| k.to_string()))
        .collect::<Vec<_>>()
        .join("-")
}

fn coefficients_for(
    spec: &ExperimentSpec,
    cfg: &NetworkConfig,
    dists: &[ChannelDistribution],
) -> Result<crate::bits::LossCoefficients, RunError> {
    let ns = cfg.n_sources();
    let r1 = match spec.r1_override {
        Some(r) => vec![r],
        None => nominal_r1(cfg, &dists[..ns])?,
    };
    Ok(loss_coefficients(cfg, &r1, 1.0)?)
}

fn bit_allocation_sweep(spec: &ExperimentSpec) -> Result<(Table, Value), RunError> {
    let cfg = spec.network_config()?;
    let dists = spec.link_distributions()?;
    let eta = coefficients_for(spec, &cfg, &dists)?;
    let mut table = Table::new(&[
        "k_max",
        "allocator",
        "quantizer",
        "allocation",
        "percent_achieved",
        "stderr",
    ]);
    let combos = [
        ("greedy", QuantizerMethod::Proposed),
        ("greedy", QuantizerMethod::MaxEntropy),
        ("uniform", QuantizerMethod::Proposed),
        ("uniform", QuantizerMethod::MaxEntropy),
    ];
    let mut curves = vec![Vec::new(); combos.len()];
    for &k_max in &spec.k_max_grid() {
        let greedy = greedy_allocate(&eta, k_max)?;
        let uniform = match uniform_allocate(&eta, k_max) {
            Ok(a) => Some(a),
            Err(BitAllocError::NotDivisible { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        for (c, (allocator, method)) in combos.iter().enumerate() {
            let alloc = if *allocator == "greedy" {
                Some(&greedy)
            } else {
                uniform.as_ref()
            };
            let Some(alloc) = alloc else { continue };
            let qs = link_quantizers(*method, &alloc.link_bits(), &cfg, &dists)?;
            let rep = monte_carlo_delta(&cfg, &qs, &dists, spec.n_trials, spec.master_seed)?;
            curves[c].push((k_max as f64, rep.percent_achieved()));
            table.push(vec![
                k_max.to_string(),
                allocator.to_string(),
                method.name().into(),
                allocation_label(alloc),
                num(rep.percent_achieved()),
                num(rep.percent_stderr),
            ]);
        }
    }
    let target = spec.target_percent;
    let mut crossings = serde_json::Map::new();
    for ((allocator, method), curve) in combos.iter().zip(&curves) {
        crossings.insert(
            format!("{allocator}+{}", method.name()),
            json!(interpolate_crossing(curve, target)),
        );
    }
    let gap = match (
        interpolate_crossing(&curves[0], target),
        interpolate_crossing(&curves[3], target),
    ) {
        (Some(best), Some(base)) => Some(base - best),
        _ => None,
    };
    Ok((
        table,
        json!({
            "target_percent": target,
            "k_max_at_target": crossings,
            "bits_saved_vs_max_entropy_uniform": gap,
            "eta": eta,
        }),
    ))
}

fn central_node_comparison(spec: &ExperimentSpec) -> Result<(Table, Value), RunError> {
    let cfg = spec.network_config()?;
    let dists = spec.link_distributions()?;
    let eta = coefficients_for(spec, &cfg, &dists)?;
    let mut table = Table::new(&[
        "node",
        "k_max",
        "allocation",
        "bound_value",
        "mc_percent_achieved",
        "stderr",
    ]);
    let mut best = serde_json::Map::new();
    for &k_max in &spec.k_max_grid() {
        let mut winner: Option<(f64, &str)> = None;
        for node in [
            CentralNode::External,
            CentralNode::Relay,
            CentralNode::Destination,
        ] {
            let alloc = central_node_variant(&eta, k_max, node)?;
            let qs = link_quantizers(QuantizerMethod::Proposed, &alloc.link_bits(), &cfg, &dists)?;
            let rep = monte_carlo_delta(&cfg, &qs, &dists, spec.n_trials, spec.master_seed)?;
            if winner.is_none_or(|(v, _)| rep.percent_achieved() > v) {
                winner = Some((rep.percent_achieved(), node.name()));
            }
            table.push(vec![
                node.name().into(),
                k_max.to_string(),
                allocation_label(&alloc),
                num(alloc.bound_value),
                num(rep.percent_achieved()),
                num(rep.percent_stderr),
            ]);
        }
        if let Some((_, name)) = winner {
            best.insert(k_max.to_string(), json!(name));
        }
    }
    Ok((table, json!({ "best_node_by_k_max": best, "eta": eta })))
}

fn custom(spec: &ExperimentSpec) -> Result<(Table, Value), RunError> {
    let dists = spec.link_distributions()?;
    let methods = spec
        .custom
        .as_ref()
        .map(|c| c.methods.clone())
        .unwrap_or_default();
    let mc = spec.uses_monte_carlo();
    let ns = spec.network.n_sources;
    let mut table = Table::new(&[
        "snr_db",
        "n_levels",
        "quantizer",
        "delta_nats",
        "delta_bits",
        "percent_lost",
        "stderr",
    ]);
    let mut skipped = 0usize;
    for &snr in &spec.snr_grid() {
        let g = db_to_linear(snr);
        for n in spec.n_grid() {
            for &method in &methods {
                if method == QuantizerMethod::General && n < 2 {
                    skipped += 1;
                    continue;
                }
                let q: QuantizationVector = method.design(n, g, &dists[0])?;
                let d = delta_q(&q, g, &dists[0])?.delta_q;
                let (pl, se) = if mc {
                    let cfg = NetworkConfig::new(vec![g; ns], g)
                        .map_err(|e| RunError::Numerical(e.to_string()))?;
                    let qs = (0..=ns)
                        .map(|j| Ok(LinkQuantizer::Levels(method.design(n, g, &dists[j])?)))
                        .collect::<Result<Vec<_>, RunError>>()?;
                    let rep =
                        monte_carlo_delta(&cfg, &qs, &dists, spec.n_trials, spec.master_seed)?;
                    (num(rep.percent_lost), num(rep.percent_stderr))
                } else {
                    (String::new(), String::new())
                };
                table.push(vec![
                    num(snr),
                    n.to_string(),
                    method.name().into(),
                    num(d),
                    num(d / std::f64::consts::LN_2),
                    pl,
                    se,
                ]);
            }
        }
    }
    let summary = json!({ "rows": table.rows.len(), "skipped_single_level_general": skipped });
    Ok((table, summary))
}
