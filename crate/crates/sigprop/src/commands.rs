//! The subcommands. Each returns whether its checks passed; reporting
//! commands always pass.

use std::fs;
use std::path::PathBuf;

use log::info;
use serde::Serialize;
use sigprop_core::montecarlo::{ks_statistic, mean_and_se};
use sigprop_core::spectral::{fit_line, m_crit_with};
use sigprop_core::{
    compensating_sigma, component_cdf, discretized_spectrum, empirical_density, expected_sq_norm, kernel_matrix,
    moments::{expected_sq_norm_closed_form, mean_gain},
    propagate, sample_ensemble, sweep, LayerSpec, LayerSummary, McConfig, NetworkSpec, Prefactor,
};

use crate::config::{InputConfig, RunConfig};
use crate::error::{Error, Result};
use crate::idx::read_idx_file;
use crate::io::{save_distribution, write_mcsn, write_spectrum};
use crate::report::{ensure_dir, write_json, Provenance};

/// Reference linear fit `m_crit ≈ a + b N` at critical σ_w.
pub const REFERENCE_MCRIT_SLOPE: f64 = -1.6207083;
pub const REFERENCE_MCRIT_INTERCEPT: f64 = -3.2559793;

fn all_relu(net: &NetworkSpec) -> bool {
    net.layers.iter().all(|l| l.activation.is_relu())
}

#[derive(Serialize)]
struct LayerRecord {
    layer: usize,
    file: String,
    mean: f64,
    variance: f64,
    atom0: f64,
    leaked_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_sq_norm: Option<f64>,
}

#[derive(Serialize)]
struct PropagateSummary {
    provenance: Provenance,
    grid_z_max: f64,
    grid_points: usize,
    kernels_built: usize,
    layers: Vec<LayerRecord>,
}

/// Writes `layer_00.csv..layer_LL.csv` and `propagate.json`.
pub fn propagate_cmd(cfg: &RunConfig) -> Result<bool> {
    let r = cfg.resolve()?;
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    info!("propagating {} layers on {} points", r.net.depth(), r.grid.n_points());
    let trace = propagate(&r.net, &r.input.p0)?;
    let expected = if all_relu(&r.net) {
        Some(expected_sq_norm(&r.net, r.input.mean_sq_norm)?.expected_sq_norms)
    } else {
        None
    };
    let mut layers = Vec::new();
    for (l, p) in trace.densities.iter().enumerate() {
        let file = format!("layer_{l:02}.csv");
        save_distribution(&out.join(&file), p)?;
        let LayerSummary { mean, variance, atom0, leaked_mass } = trace.summaries[l];
        layers.push(LayerRecord {
            layer: l,
            file,
            mean,
            variance,
            atom0,
            leaked_mass,
            expected_sq_norm: expected.as_ref().map(|e| e[l]),
        });
    }
    write_json(
        &out.join("propagate.json"),
        &PropagateSummary {
            provenance: Provenance::of(cfg),
            grid_z_max: r.grid.z_max(),
            grid_points: r.grid.n_points(),
            kernels_built: trace.kernels_built,
            layers,
        },
    )?;
    Ok(true)
}

#[derive(Serialize)]
struct EigenRecord {
    re: f64,
    im: f64,
    residual: f64,
}

#[derive(Serialize)]
struct SeriesRecord {
    width: usize,
    sigma_w: f64,
    file: String,
    m_crit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    discretized: Option<Vec<EigenRecord>>,
}

#[derive(Serialize)]
struct Fit {
    m_crit: Vec<f64>,
    slope: f64,
    intercept: f64,
}

#[derive(Serialize)]
struct McritScan {
    widths: Vec<usize>,
    fit: Fit,
    reference_slope: f64,
    reference_intercept: f64,
    slope_rel_error: f64,
    intercept_rel_error: f64,
    within_2_percent: bool,
    /// Same scan with the `0.5^(N−m−1)` prefactor.
    alternate_prefactor: Option<Fit>,
}

#[derive(Serialize)]
struct SpectrumSummary {
    provenance: Provenance,
    series: Vec<SeriesRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mcrit_scan: Option<McritScan>,
}

fn scan(widths: &[usize], prefactor: Prefactor) -> Result<Fit> {
    let ms = widths
        .iter()
        .map(|&n| m_crit_with(n, (2.0 / n as f64).sqrt(), prefactor))
        .collect::<sigprop_core::Result<Vec<f64>>>()?;
    let ns: Vec<f64> = widths.iter().map(|&n| n as f64).collect();
    let (slope, intercept) = fit_line(&ns, &ms)?;
    Ok(Fit { m_crit: ms, slope, intercept })
}

/// Writes `spectrum_N<width>.csv` per width and `spectrum.json`.
pub fn spectrum_cmd(cfg: &RunConfig) -> Result<bool> {
    cfg.validate()?;
    let s = &cfg.spectrum;
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    let grid = if s.top_k > 0 { Some(cfg.resolve()?.grid) } else { None };
    let mut series = Vec::new();
    for &n in &s.widths {
        let sigma_w = s.sigma_w.unwrap_or((2.0 / n as f64).sqrt());
        let rep = sweep(n, sigma_w, s.m_min, s.m_max, s.m_samples)?;
        let file = format!("spectrum_N{n}.csv");
        let path = out.join(&file);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_spectrum(f, &rep.m_values, &rep.lambda_values)?;
        let discretized = match &grid {
            Some(g) => {
                info!("discretized spectrum for N={n}");
                let k = kernel_matrix(&LayerSpec::relu(n, sigma_w, 0.0)?, g)?;
                let spec = discretized_spectrum(&k, s.top_k)?;
                Some(
                    spec.pairs
                        .iter()
                        .map(|p| EigenRecord { re: p.value.re, im: p.value.im, residual: p.residual })
                        .collect(),
                )
            }
            None => None,
        };
        series.push(SeriesRecord { width: n, sigma_w, file, m_crit: rep.m_crit, discretized });
    }
    let mcrit_scan = match &s.mcrit_scan {
        Some(widths) => {
            if widths.len() < 2 || widths.contains(&0) {
                return Err(Error::Config("--mcrit-scan needs at least two positive widths".into()));
            }
            let fit = scan(widths, Prefactor::HalfPowNPlusM)?;
            let slope_rel_error = ((fit.slope - REFERENCE_MCRIT_SLOPE) / REFERENCE_MCRIT_SLOPE).abs();
            let intercept_rel_error = ((fit.intercept - REFERENCE_MCRIT_INTERCEPT) / REFERENCE_MCRIT_INTERCEPT).abs();
            Some(McritScan {
                widths: widths.clone(),
                within_2_percent: slope_rel_error <= 0.02 && intercept_rel_error <= 0.02,
                fit,
                reference_slope: REFERENCE_MCRIT_SLOPE,
                reference_intercept: REFERENCE_MCRIT_INTERCEPT,
                slope_rel_error,
                intercept_rel_error,
                alternate_prefactor: scan(widths, Prefactor::HalfPowNMinusM).ok(),
            })
        }
        None => None,
    };
    write_json(&out.join("spectrum.json"), &SpectrumSummary { provenance: Provenance::of(cfg), series, mcrit_scan })?;
    Ok(true)
}

#[derive(Serialize)]
struct CompensateRecord {
    n1: usize,
    n2: usize,
    sigma_w2: f64,
    sigma_w1: f64,
}

#[derive(Serialize)]
struct MomentsSummary {
    provenance: Provenance,
    x0_sq: f64,
    mean_gains: Vec<f64>,
    expected_sq_norms: Vec<f64>,
    expected_final_sq_norm_closed_form: f64,
    final_mean_bound: f64,
    final_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    compensate: Option<CompensateRecord>,
}

/// Writes `moments.json`.
pub fn moments_cmd(cfg: &RunConfig) -> Result<bool> {
    cfg.validate()?;
    let net = cfg.network.to_spec()?;
    let x0_sq = match &cfg.input {
        InputConfig::Idx { .. } => cfg.resolve()?.input.mean_sq_norm,
        InputConfig::PointMass(z) => *z,
        InputConfig::MnistMean => crate::idx::MNIST_MEAN_SQ_NORM,
    };
    let rep = expected_sq_norm(&net, x0_sq)?;
    let compensate = match cfg.moments.compensate {
        Some(c) => Some(CompensateRecord {
            n1: c.n1,
            n2: c.n2,
            sigma_w2: c.sigma_w2,
            sigma_w1: compensating_sigma(c.n1, c.n2, c.sigma_w2)?,
        }),
        None => None,
    };
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    write_json(
        &out.join("moments.json"),
        &MomentsSummary {
            provenance: Provenance::of(cfg),
            x0_sq,
            mean_gains: net.layers.iter().map(mean_gain).collect(),
            expected_final_sq_norm_closed_form: expected_sq_norm_closed_form(&net, x0_sq)?,
            expected_sq_norms: rep.expected_sq_norms,
            final_mean_bound: rep.final_mean_bound,
            final_variance: rep.final_variance,
            compensate,
        },
    )?;
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub depth: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Serialize)]
struct ValidateSummary {
    provenance: Provenance,
    n_samples: usize,
    mc_sigma_w_scale: f64,
    checks: Vec<Check>,
    passed: bool,
}

fn check(name: &str, depth: usize, statistic: f64, threshold: f64) -> Check {
    Check {
        name: name.into(),
        depth,
        statistic,
        threshold,
        // NaN fails
        passed: statistic.abs() < threshold,
    }
}

/// Compares the propagated laws with a Monte Carlo ensemble and writes
/// `validate.json` and `samples_final.mcsn`.
pub fn validate_cmd(cfg: &RunConfig) -> Result<bool> {
    let r = cfg.resolve()?;
    let v = &cfg.validate;
    let depth = r.net.depth();
    let depths = v.depths.clone().unwrap_or_else(|| (1..=depth).collect());
    if depths.is_empty() || depths.iter().any(|&d| d == 0 || d > depth) {
        return Err(Error::Config(format!("validate depths must lie in 1..={depth}")));
    }
    let out = cfg.output_dir();
    ensure_dir(&out)?;

    info!("propagating {depth} layers");
    let trace = propagate(&r.net, &r.input.p0)?;
    let mut mc_net = r.net.clone();
    for l in &mut mc_net.layers {
        l.sigma_w *= v.mc_sigma_w_scale;
    }
    info!("sampling {} networks", v.n_samples);
    let run = sample_ensemble(
        &McConfig::new(mc_net, v.n_samples, cfg.seed)?.with_all_layers().with_components(),
        &r.input.mc,
    )?;
    let expected = if all_relu(&r.net) {
        Some(expected_sq_norm(&r.net, r.input.mean_sq_norm)?.expected_sq_norms)
    } else {
        None
    };

    let mut checks = Vec::new();
    for &d in &depths {
        let samples = run.layer_sq_norms(d).expect("all layers recorded");
        let empirical = empirical_density(samples, &r.grid)?;
        checks.push(check("ks_sq_norm", d, trace.densities[d].ks_distance(&empirical)?, v.ks_threshold));
        if let Some(e) = &expected {
            let (mean, se) = mean_and_se(samples);
            checks.push(check("mean_sq_norm_z", d, (mean - e[d]) / se, v.z_threshold));
        }
        let p = trace.densities[d].atom0();
        let zeros = samples.iter().filter(|&&s| s == 0.0).count() as f64 / samples.len() as f64;
        let se = (p * (1.0 - p) / samples.len() as f64).sqrt();
        let z = if se > 0.0 {
            (zeros - p) / se
        } else if zeros == p {
            0.0
        } else {
            f64::INFINITY
        };
        checks.push(check("atom_z", d, z, v.z_threshold));
    }
    let components = run.components.as_ref().expect("components recorded");
    let last = r.net.layers[depth - 1];
    let prev = &trace.densities[depth - 1];
    let ks_comp = ks_statistic(components, |x| component_cdf(prev, &last, x));
    checks.push(check("ks_component", depth, ks_comp, v.ks_threshold));

    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        info!("{} depth {}: {:.4e} (< {}) {}", c.name, c.depth, c.statistic, c.threshold, if c.passed { "ok" } else { "FAIL" });
    }
    let raw = out.join("samples_final.mcsn");
    let f = fs::File::create(&raw).map_err(|e| Error::io(&raw, e))?;
    write_mcsn(f, run.final_sq_norms())?;
    write_json(
        &out.join("validate.json"),
        &ValidateSummary {
            provenance: Provenance::of(cfg),
            n_samples: v.n_samples,
            mc_sigma_w_scale: v.mc_sigma_w_scale,
            checks,
            passed,
        },
    )?;
    Ok(passed)
}

#[derive(Serialize)]
struct IngestSummary {
    provenance: Provenance,
    path: PathBuf,
    count: usize,
    rows: usize,
    cols: usize,
    mean_sq_norm: f64,
    max_sq_norm: f64,
    grid_z_max: f64,
    grid_points: usize,
    atom0: f64,
    leaked_mass: f64,
    file: String,
}

/// Reads the configured IDX file; writes `input_density.csv` and `ingest.json`.
pub fn ingest_cmd(cfg: &RunConfig) -> Result<bool> {
    let InputConfig::Idx { path, scale } = &cfg.input else {
        return Err(Error::Config("ingest needs an IDX input (--idx <path>)".into()));
    };
    let r = cfg.resolve()?;
    let imgs = read_idx_file(path)?;
    let norms = imgs.squared_norms(*scale)?;
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    let file = "input_density.csv".to_string();
    save_distribution(&out.join(&file), &r.input.p0)?;
    write_json(
        &out.join("ingest.json"),
        &IngestSummary {
            provenance: Provenance::of(cfg),
            path: path.clone(),
            count: imgs.count,
            rows: imgs.rows,
            cols: imgs.cols,
            mean_sq_norm: r.input.mean_sq_norm,
            max_sq_norm: norms.iter().cloned().fold(0.0, f64::max),
            grid_z_max: r.grid.z_max(),
            grid_points: r.grid.n_points(),
            atom0: r.input.p0.atom0(),
            leaked_mass: r.input.p0.leaked_mass(),
            file,
        },
    )?;
    Ok(true)
}
