//! Acceptance criteria, one line each. Set `SIGPROP_MNIST` to an IDX image
//! file (optionally gzipped) to use the MNIST input law in criterion 4.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use sigprop::idx::{read_idx_file, squared_norm_density, MNIST_MEAN_SQ_NORM};
use sigprop_core::montecarlo::{mean_and_se, variance_and_se, zero_fraction_and_se};
use sigprop_core::spectral::{fit_line, interior_ratio_deviation, m_crit_with};
use sigprop_core::{
    empirical_density, expected_sq_norm, generic_kernel_row, kernel_matrix, propagate, relu_eigenvalue, relu_kernel_row,
    sample_ensemble, Grid, InputSource, LayerSpec, McConfig, MixedDensity, NetworkSpec, PointMass, Prefactor,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn criterion(id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let elapsed = t.elapsed();
    let in_time = elapsed <= budget;
    let ok = out.passed && in_time;
    println!(
        "[{}] {id} {name}: {} ({:.2} s, budget {} s{})",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    ok
}

fn critical(n: usize) -> f64 {
    (2.0 / n as f64).sqrt()
}

fn c1() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=64usize {
        for sw in [0.05, 0.1, 1.0] {
            let l = relu_eigenvalue(n, sw, -1.0).unwrap();
            worst = worst.max((l - (1.0 - 0.5f64.powi(n as i32))).abs());
        }
    }
    Outcome { passed: worst <= 1e-12, detail: format!("max |λ(-1) - (1 - 0.5^N)| = {worst:.2e} (tol 1e-12)") }
}

fn scan(pre: Prefactor) -> (Vec<f64>, f64, f64) {
    let widths = [5usize, 10, 20, 50];
    let ms: Vec<f64> = widths.iter().map(|&n| m_crit_with(n, critical(n), pre).unwrap()).collect();
    let ns: Vec<f64> = widths.iter().map(|&n| n as f64).collect();
    let (slope, intercept) = fit_line(&ns, &ms).unwrap();
    (ms, slope, intercept)
}

fn c2() -> Outcome {
    let (ms, slope, intercept) = scan(Prefactor::HalfPowNPlusM);
    let es = ((slope + 1.6207) / 1.6207).abs();
    let ei = ((intercept + 3.2560) / 3.2560).abs();
    let (_, alt_s, alt_i) = scan(Prefactor::HalfPowNMinusM);
    Outcome {
        passed: es <= 0.02 && ei <= 0.02,
        detail: format!(
            "m_crit(5,10,20,50) = {ms:.4?}, slope {slope:.4} (rel err {es:.3}), intercept {intercept:.4} (rel err {ei:.3}), \
             tol 0.02 each; with the 0.5^(N-m-1) prefactor: slope {alt_s:.4}, intercept {alt_i:.4}"
        ),
    }
}

fn c3() -> Outcome {
    // each row on its own 4096-point grid spanning 16x the row mean N σ_y² / 2
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for n in [1usize, 2, 8, 32] {
        let layer = LayerSpec::relu(n, 1.0, 0.1).unwrap();
        for y in [0.5, 1.0, 4.0] {
            let grid = Grid::new(16.0 * n as f64 * layer.pre_activation_variance(y) / 2.0, 4096).unwrap();
            let a = relu_kernel_row(&layer, y, &grid).unwrap();
            let b = generic_kernel_row(&layer, y, &grid).unwrap();
            let d = a.l1_distance(&b).unwrap();
            worst = worst.max(d);
            if d.is_nan() || d >= 1e-3 {
                failed.push((n, y, d));
            }
        }
    }
    Outcome {
        passed: failed.is_empty(),
        detail: format!(
            "max row L1 = {worst:.2e} (tol 1e-3) over widths {{1,2,8,32}} x y {{0.5,1,4}}, σ_w=1, σ_b=0.1, \
             z_max = 16 x row mean; failures {failed:?}"
        ),
    }
}

fn mnist_input(grid_n: usize) -> Option<(Grid, MixedDensity, InputSource, f64)> {
    let path = PathBuf::from(std::env::var_os("SIGPROP_MNIST")?);
    let imgs = read_idx_file(&path).unwrap_or_else(|e| panic!("{e}"));
    let zs = imgs.squared_norms(255.0).unwrap();
    let mean = zs.iter().sum::<f64>() / zs.len() as f64;
    let max = zs.iter().cloned().fold(0.0, f64::max);
    let grid = Grid::new((8.0 * mean).max(max * (1.0 + 1e-9)), grid_n).unwrap();
    let p0 = squared_norm_density(&imgs, &grid, 255.0).unwrap();
    Some((grid, p0, InputSource::SquaredNorms(zs), mean))
}

fn c4() -> Outcome {
    let (grid, p0, input, mean0, label) = match mnist_input(4096) {
        Some((g, p, i, m)) => (g, p, i, m, "MNIST file"),
        None => {
            let z = MNIST_MEAN_SQ_NORM;
            let g = Grid::new(8.0 * z, 4096).unwrap();
            (g, PointMass::new(z).unwrap().discretize(&g).unwrap(), InputSource::SquaredNorm(z), z, "point mass 87.81")
        }
    };
    let net = NetworkSpec::uniform(784, LayerSpec::relu(200, 0.1, 0.0).unwrap(), 9).unwrap();
    let trace = propagate(&net, &p0).unwrap();
    let run = sample_ensemble(&McConfig::new(net, 100_000, 2024).unwrap().with_all_layers(), &input).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for d in [1usize, 3, 9] {
        let s = run.layer_sq_norms(d).unwrap();
        let ks = trace.densities[d].ks_distance(&empirical_density(s, &grid).unwrap()).unwrap();
        let p = &trace.densities[d];
        let drift = (p.mean() - mean0).abs() / mean0;
        let ok = ks < 0.02 && drift <= 0.02 + p.leaked_mass();
        passed &= ok;
        let (mc_mean, _) = mean_and_se(s);
        parts.push(format!(
            "L={d}: KS {ks:.4}, mean {:.3} (drift {:.4}, leaked {:.1e}), MC mean {mc_mean:.3}",
            p.mean(),
            drift,
            p.leaked_mass()
        ));
    }
    Outcome { passed, detail: format!("input {label}; {}; tol KS<0.02, drift<=0.02+leak", parts.join("; ")) }
}

fn c5() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    let x0 = 5.0;
    for (seed, (n, depth)) in [(10usize, 1usize), (50, 2), (200, 3)].into_iter().enumerate() {
        let layer = LayerSpec::relu(n, 1.2 * critical(n), 0.2).unwrap();
        let net = NetworkSpec::uniform(10, layer, depth).unwrap();
        let rep = expected_sq_norm(&net, x0).unwrap();
        let run = sample_ensemble(
            &McConfig::new(net, 100_000, 77 + seed as u64).unwrap().with_all_layers().with_components(),
            &InputSource::SquaredNorm(x0),
        )
        .unwrap();
        let mut worst_z: f64 = 0.0;
        for l in 1..=depth {
            let (m, se) = mean_and_se(run.layer_sq_norms(l).unwrap());
            worst_z = worst_z.max(((m - rep.expected_sq_norms[l]) / se).abs());
        }
        let comps = run.components.as_ref().unwrap();
        let (cm, cse) = mean_and_se(comps);
        let jensen_excess = (cm - rep.final_mean_bound) / cse;
        let (cv, vse) = variance_and_se(comps);
        let var_z = (cv - rep.final_variance) / vse;
        let ok = worst_z < 3.0 && jensen_excess < 3.0 && var_z.abs() < 3.0;
        passed &= ok;
        parts.push(format!(
            "(N={n},L={depth}): max|z| E|x|^2 {worst_z:.2}, mean {cm:.4} vs bound {:.4} (excess {jensen_excess:.2} se), \
             var {cv:.4} vs {:.4} (z {var_z:.2})",
            rep.final_mean_bound, rep.final_variance
        ));
    }
    Outcome { passed, detail: format!("σ_w=1.2·sqrt(2/N), σ_b=0.2, |x0|^2=5, 1e5 draws; {}; tol 3 se", parts.join("; ")) }
}

fn c6() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (n, seed) in [(3usize, 11u64), (5, 12)] {
        let net = NetworkSpec::uniform(4, LayerSpec::relu(n, 1.0, 0.0).unwrap(), 1).unwrap();
        let run = sample_ensemble(&McConfig::new(net, 100_000, seed).unwrap(), &InputSource::SquaredNorm(3.0)).unwrap();
        let (p, _) = zero_fraction_and_se(run.final_sq_norms());
        let target = 0.5f64.powi(n as i32);
        let se = (target * (1.0 - target) / 1e5).sqrt();
        let z = (p - target) / se;
        passed &= z.abs() < 3.0;
        parts.push(format!("N={n}: P0 {p:.5} vs {target} (z {z:.2})"));
    }
    // a_l = a_{l-1} A(0) + 0.5^N (cell mass of p_{l-1}), A(0) = 1 without bias
    let mut worst: f64 = 0.0;
    let grid = Grid::new(40.0, 1024).unwrap();
    for n in [3usize, 5] {
        for sb in [0.0, 0.3] {
            let net = NetworkSpec::uniform(4, LayerSpec::relu(n, critical(n), sb).unwrap(), 6).unwrap();
            let trace = propagate(&net, &PointMass::new(3.0).unwrap().discretize(&grid).unwrap()).unwrap();
            let half = 0.5f64.powi(n as i32);
            let a0 = if sb == 0.0 { 1.0 } else { half };
            for w in trace.densities.windows(2) {
                let predicted = w[0].atom0() * a0 + half * w[0].cell_mass();
                worst = worst.max((w[1].atom0() - predicted).abs());
            }
        }
    }
    passed &= worst <= 1e-9;
    Outcome { passed, detail: format!("{}; atom recursion max err {worst:.1e} (tol 1e-9)", parts.join("; ")) }
}

fn c7() -> Outcome {
    let grid = Grid::new(10.0, 4096).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for n in [5usize, 10, 20] {
        let sw = (32.0 / n as f64).sqrt();
        let k = kernel_matrix(&LayerSpec::relu(n, sw, 0.0).unwrap(), &grid).unwrap();
        let devs: Vec<f64> = [-1.5, -2.0, -3.0]
            .iter()
            .map(|&m| interior_ratio_deviation(&k, m, relu_eigenvalue(n, sw, m).unwrap()).unwrap())
            .collect();
        worst = devs.iter().cloned().fold(worst, f64::max);
        parts.push(format!("N={n}: [{}]", devs.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>().join(", ")));
    }
    let crit: Vec<String> = [5usize, 10, 20]
        .iter()
        .map(|&n| {
            let k = kernel_matrix(&LayerSpec::relu(n, critical(n), 0.0).unwrap(), &grid).unwrap();
            let d = interior_ratio_deviation(&k, -2.0, relu_eigenvalue(n, critical(n), -2.0).unwrap()).unwrap();
            format!("N={n}: {d:.3}")
        })
        .collect();
    Outcome {
        passed: worst < 0.02,
        detail: format!(
            "σ_w=sqrt(32/N), grid [0,10] x 4096, m in {{-1.5,-2,-3}}: {}; max {worst:.1e} (tol 0.02); \
             for reference at critical σ_w, m=-2: {}",
            parts.join(", "),
            crit.join(", ")
        ),
    }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let results = [
        criterion("1", "eigenvalue identity", secs(1), c1),
        criterion("2", "m_crit linear fit", secs(5), c2),
        criterion("3", "kernel route equivalence", secs(30), c3),
        criterion("4", "operator vs Monte Carlo", secs(300), c4),
        criterion("5", "moment formulas vs Monte Carlo", secs(180), c5),
        criterion("6", "atom bookkeeping", secs(60), c6),
        criterion("7", "discretized eigenfunction ratios", secs(60), c7),
    ];
    println!("[SKIP] 8 training-accuracy results: out of scope for this artifact");
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
