//! Acceptance suite. Runs every acceptance criterion at its stated tolerance
//! and prints one PASS/FAIL line per criterion; exits non-zero if any fails.
//!
//! Built with `harness = false` so the lines always reach stdout.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use bandsel_core::bandcluster::{cluster_band, resolve_overlaps, Band, SpectralGrid, DEFAULT_WIDTHS};
use bandsel_core::classify::{qda_fit, stratified_folds, weighted_f1, CvEngine, DEFAULT_SHRINKAGE};
use bandsel_core::ensemble::fitness;
use bandsel_core::pipeline::{prepare, run_full_pipeline, select_bands, PipelineConfig, Report};
use bandsel_core::rankers::{
    anova_f, ccsa_search, forest_importances, lambda_grid, lasso_path, rank_svm_rfe, relieff_weights,
    svm_rfe_elimination_order, CcsaConfig, ForestConfig, LassoConfig, ReliefConfig, SvmConfig,
};
use bandsel_core::seed::SeedTree;
use bandsel_core::windowing::{build_windows, correlation_matrix};
use bandsel_core::FeatureMatrix;
use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fm(values: Array2<f64>) -> FeatureMatrix {
    let names = (0..values.ncols()).map(|i| format!("f{}", i + 1)).collect();
    FeatureMatrix::new(names, values).unwrap()
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Check {
    // (f1, k, expected fitness) for six elimination rounds, N = 51.
    let rows = [
        (0.86, 7, 1.73),
        (0.86, 7, 1.73),
        (0.86, 7, 1.73),
        (0.87, 7, 1.73),
        (0.86, 8, 1.71),
        (0.88, 8, 1.72),
    ];
    let mut worst: f64 = 0.0;
    for (f1, k, expected) in rows {
        let err = (fitness(f1, k, 51) - expected).abs();
        worst = worst.max(err);
        ensure(err <= 0.01, || format!("f1 {f1}, k {k}: {} vs {expected}", fitness(f1, k, 51)))?;
    }
    Ok(format!("6 rows within 0.01, worst error {worst:.4}"))
}

// ---------------------------------------------------------------- 2

/// ReliefF from the textbook definition: explicit diff function, full
/// distance scan, neighbours chosen one at a time.
fn direct_relieff(x: &[Vec<f64>], y: &[u8], k: usize) -> Vec<f64> {
    let (n, d) = (x.len(), x[0].len());
    let lo: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let scaled = |i: usize, j: usize| if hi[j] == lo[j] { 0.0 } else { (x[i][j] - lo[j]) / (hi[j] - lo[j]) };
    let diff = |j: usize, a: usize, b: usize| (scaled(a, j) - scaled(b, j)).abs();
    let scale = 1.0 / (n * k) as f64;
    let dist = |a: usize, b: usize| (0..d).map(|j| diff(j, a, b)).sum::<f64>();
    let mut w = vec![0.0; d];
    for r in 0..n {
        let pick = |same: bool| {
            let mut chosen: Vec<usize> = vec![];
            for _ in 0..k {
                let mut best: Option<usize> = None;
                for c in 0..n {
                    if c == r || chosen.contains(&c) || (y[c] == y[r]) != same {
                        continue;
                    }
                    if best.map_or(true, |b| dist(r, c) < dist(r, b)) {
                        best = Some(c);
                    }
                }
                chosen.push(best.unwrap());
            }
            chosen
        };
        for j in 0..d {
            for h in pick(true) {
                w[j] -= diff(j, r, h) * scale;
            }
            for m in pick(false) {
                w[j] += diff(j, r, m) * scale;
            }
        }
    }
    w
}

fn relieff_oracle() -> Result<(), String> {
    let rows = vec![
        vec![0.0, 0.31],
        vec![0.0, 0.77],
        vec![0.0, 0.12],
        vec![0.0, 0.58],
        vec![1.0, 0.43],
        vec![1.0, 0.95],
        vec![1.0, 0.05],
        vec![1.0, 0.66],
    ];
    let y = [0, 0, 0, 0, 1, 1, 1, 1];
    let x = fm(Array2::from_shape_fn((8, 2), |(i, j)| rows[i][j]));
    let cfg = ReliefConfig { k_neighbors: 3, n_iterations: None };
    let got = relieff_weights(&x, &y, &cfg, 0).map_err(|e| e.to_string())?;
    let expected = direct_relieff(&rows, &y, 3);
    ensure(got == expected, || format!("ReliefF {got:?} vs direct {expected:?}"))
}

fn lasso_oracle() -> Result<(), String> {
    // X^T X / n = I with zero-mean, unit-variance columns.
    let a = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
    let b = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
    let x = FeatureMatrix::new(
        vec!["a".into(), "b".into()],
        Array2::from_shape_fn((8, 2), |(i, j)| if j == 0 { a[i] } else { b[i] }),
    )
    .unwrap();
    let y: [u8; 8] = [1, 1, 0, 0, 1, 0, 0, 0];
    let mean = y.iter().map(|&v| f64::from(v)).sum::<f64>() / 8.0;
    let yc: Vec<f64> = y.iter().map(|&v| f64::from(v) - mean).collect();
    let cfg = LassoConfig::default();
    let grid = lambda_grid(&x, &y, &cfg).map_err(|e| e.to_string())?;
    let path = lasso_path(x.values.view(), &yc, &grid, &cfg).map_err(|e| e.to_string())?;
    let soft = |z: f64, g: f64| z.signum() * (z.abs() - g).max(0.0);
    for (lambda, beta) in grid.iter().zip(&path) {
        for j in 0..2 {
            let z = x.values.column(j).iter().zip(&yc).map(|(p, q)| p * q).sum::<f64>() / 8.0;
            let want = soft(z, *lambda);
            ensure((beta[j] - want).abs() < 1e-8, || {
                format!("LASSO beta {} vs soft threshold {want} at lambda {lambda}", beta[j])
            })?;
        }
    }
    Ok(())
}

/// Max-margin direction of separable 2-D points, by angle scan with
/// successive refinement.
fn hard_margin_direction(pts: &[[f64; 2]], y: &[u8]) -> [f64; 2] {
    let margin = |t: f64| {
        let u = [t.cos(), t.sin()];
        let proj = |p: &[f64; 2]| p[0] * u[0] + p[1] * u[1];
        let lo_pos = pts.iter().zip(y).filter(|(_, &c)| c == 1).map(|(p, _)| proj(p)).fold(f64::INFINITY, f64::min);
        let hi_neg = pts.iter().zip(y).filter(|(_, &c)| c == 0).map(|(p, _)| proj(p)).fold(f64::NEG_INFINITY, f64::max);
        (lo_pos - hi_neg) / 2.0
    };
    let (mut lo, mut hi) = (-std::f64::consts::PI, std::f64::consts::PI);
    let mut best = 0.0;
    for _ in 0..8 {
        let steps = 2000;
        let mut best_m = f64::NEG_INFINITY;
        for s in 0..=steps {
            let t = lo + (hi - lo) * s as f64 / steps as f64;
            let m = margin(t);
            if m > best_m {
                best_m = m;
                best = t;
            }
        }
        let span = (hi - lo) / steps as f64 * 4.0;
        lo = best - span;
        hi = best + span;
    }
    [best.cos(), best.sin()]
}

fn svm_oracle() -> Result<(), String> {
    let mut rng = SeedTree::new(3).rng();
    let n = 40;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let mag = 0.3 + rng.gen::<f64>();
        let x1 = if i % 2 == 0 { mag } else { -mag };
        let x2 = 0.3 * x1 + 0.5 * rng.sample::<f64, _>(StandardNormal);
        let x3 = rng.sample::<f64, _>(StandardNormal);
        rows.extend([x1, x2, x3]);
        y.push(u8::from(x1 > 0.0));
    }
    let x = fm(Array2::from_shape_vec((n, 3), rows).unwrap());
    let order = svm_rfe_elimination_order(&x, &y, &SvmConfig::default()).map_err(|e| e.to_string())?;
    let pts: Vec<[f64; 2]> = x.values.outer_iter().map(|r| [r[0], r[1]]).collect();
    let u = hard_margin_direction(&pts, &y);
    let oracle_survivor = if u[0].abs() > u[1].abs() { 0 } else { 1 };
    ensure(order == vec![2, 1, 0] && order[2] == oracle_survivor, || {
        format!("SVM-RFE order {order:?}, exact margin direction {u:?}")
    })?;
    let rv = rank_svm_rfe(&x, &y, &SvmConfig::default()).map_err(|e| e.to_string())?;
    ensure(rv.rank_of("f1") == Some(1), || format!("x1 not ranked first: {:?}", rv.ranks))
}

fn ccsa_oracle() -> Result<(), String> {
    // Features 1 and 3 share a large nuisance of opposite sign, so only
    // together do they reveal the class; 2 and 4 are noise.
    let mut rng = SeedTree::new(21).rng();
    let n = 40;
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let mut values = Array2::zeros((n, 4));
    for i in 0..n {
        let s = if y[i] == 1 { 1.0 } else { -1.0 };
        let nuisance = 3.0 * rng.sample::<f64, _>(StandardNormal);
        values[[i, 0]] = nuisance + s * (1.0 + 0.1 * rng.gen::<f64>());
        values[[i, 2]] = -nuisance + s * (1.0 + 0.1 * rng.gen::<f64>());
        values[[i, 1]] = rng.sample(StandardNormal);
        values[[i, 3]] = rng.sample(StandardNormal);
    }
    let x = fm(values);
    let cfg = CcsaConfig::default();
    let seed = 9;
    let outcome = ccsa_search(&x, &y, &cfg, seed).map_err(|e| e.to_string())?;
    let plan = stratified_folds(&y, cfg.cv_folds, SeedTree::new(seed).child("folds").seed()).unwrap();
    let engine = CvEngine::new(x.values.view(), &y, plan, cfg.shrinkage).unwrap();
    let mut best: (f64, Vec<usize>) = (f64::NEG_INFINITY, vec![]);
    for mask in 1u32..16 {
        let subset: Vec<usize> = (0..4).filter(|b| mask >> b & 1 == 1).collect();
        let f = fitness(engine.evaluate(&subset).unwrap().f1_mean, subset.len(), 4);
        if f > best.0 {
            best = (f, subset);
        }
    }
    ensure(best.1 == vec![0, 2] && outcome.best_subset == best.1, || {
        format!("CCSA best {:?}, exhaustive optimum {:?}", outcome.best_subset, best.1)
    })
}

fn anova_oracle() -> Result<(), String> {
    let f = anova_f(&fm(array![[1.0], [2.0], [3.0], [4.0]]), &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    ensure(f == vec![8.0], || format!("ANOVA F {f:?}"))
}

fn forest_oracle() -> Result<(), String> {
    let x = fm(array![[-2.0, 1.0], [-1.0, 1.0], [-0.5, 1.0], [0.5, 1.0], [1.0, 1.0], [2.0, 1.0]]);
    let imp = forest_importances(&x, &[0, 0, 0, 1, 1, 1], &ForestConfig::default(), 1).map_err(|e| e.to_string())?;
    ensure(imp == vec![1.0, 0.0], || format!("forest importances {imp:?}"))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    relieff_oracle()?;
    lasso_oracle()?;
    svm_oracle()?;
    ccsa_oracle()?;
    anova_oracle()?;
    forest_oracle()?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), || format!("oracle suite took {t:?}"))?;
    Ok(format!("ReliefF, LASSO, SVM-RFE, CCSA, ANOVA and forest oracles agree in {:.1} s", t.as_secs_f64()))
}

// ---------------------------------------------------------------- 3

fn log_gauss_2d(x: [f64; 2], mu: [f64; 2], s: [[f64; 2]; 2]) -> f64 {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
    let d = [x[0] - mu[0], x[1] - mu[1]];
    let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
    -0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
}

fn criterion_3() -> Check {
    let m = qda_fit(&fm(array![[-2.0], [-1.0], [0.0], [0.0], [1.0], [2.0]]), &[0, 0, 0, 1, 1, 1], DEFAULT_SHRINKAGE)
        .map_err(|e| e.to_string())?;
    let [g0, g1] = m.discriminants(array![0.0].view());
    ensure((g0 - g1).abs() < 1e-9, || format!("1-D discriminants differ at 0 by {}", g0 - g1))?;
    ensure(m.predict_row(array![1e-6].view()) == 1 && m.predict_row(array![-1e-6].view()) == 0, || {
        "1-D boundary not at 0".into()
    })?;

    let x0 = [[0.0, 0.0], [1.0, 0.5], [0.5, 2.0], [2.0, 1.0]];
    let x1 = [[3.0, 3.0], [4.0, 2.0], [5.0, 4.5], [3.5, 5.0]];
    let rows: Vec<f64> = x0.iter().chain(&x1).flatten().copied().collect();
    let m = qda_fit(&fm(Array2::from_shape_vec((8, 2), rows).unwrap()), &[0, 0, 0, 0, 1, 1, 1, 1], 0.0)
        .map_err(|e| e.to_string())?;
    let stats = |pts: &[[f64; 2]; 4]| {
        let mu = [pts.iter().map(|p| p[0]).sum::<f64>() / 4.0, pts.iter().map(|p| p[1]).sum::<f64>() / 4.0];
        let mut s = [[0.0; 2]; 2];
        for p in pts {
            for a in 0..2 {
                for b in 0..2 {
                    s[a][b] += (p[a] - mu[a]) * (p[b] - mu[b]) / 3.0;
                }
            }
        }
        (mu, s)
    };
    let ((mu0, s0), (mu1, s1)) = (stats(&x0), stats(&x1));
    let mut worst: f64 = 0.0;
    for q in [[0.0, 0.0], [2.5, 2.5], [4.0, 1.0], [-1.0, 3.0]] {
        let g = m.discriminants(Array1::from(q.to_vec()).view());
        worst = worst
            .max((g[0] - log_gauss_2d(q, mu0, s0) - 0.5f64.ln()).abs())
            .max((g[1] - log_gauss_2d(q, mu1, s1) - 0.5f64.ln()).abs());
    }
    ensure(worst < 1e-9, || format!("2-D discriminants off by {worst:e}"))?;

    let a = weighted_f1(&[0, 0, 1, 1], &[0, 1, 1, 1]);
    let b = weighted_f1(&[0, 1], &[1, 1]);
    ensure((a - 11.0 / 15.0).abs() < 1e-15 && (b - 1.0 / 3.0).abs() < 1e-15, || {
        format!("weighted F1 {a} and {b}")
    })?;
    Ok(format!("boundary at 0, 2-D log densities within {worst:.1e}, F1 11/15 and 1/3"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Check {
    let start = Instant::now();
    let mut rng = SeedTree::new(44).rng();

    // K blocks of duplicated independent columns.
    let sizes = [3, 1, 5, 2, 7, 4];
    let n = 200;
    let base: Vec<Vec<f64>> = sizes.iter().map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let cols: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat(b).take(s)).collect();
    let x = fm(Array2::from_shape_fn((n, cols.len()), |(i, j)| base[cols[j]][i]));
    let wl: Vec<f64> = (0..cols.len()).map(|j| 400.0 + j as f64).collect();
    let map = build_windows(&correlation_matrix(&x).unwrap(), &wl, 0.99).map_err(|e| e.to_string())?;
    ensure(map.windows.len() == sizes.len(), || {
        format!("{} blocks gave {} windows", sizes.len(), map.windows.len())
    })?;

    // Complete linkage on random AR(1) spectra.
    let d = 400;
    let mut values = Array2::zeros((n, d));
    for i in 0..n {
        let mut e: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0f64 - 0.995 * 0.995).sqrt();
        for j in 0..d {
            values[[i, j]] = e;
            e = 0.995 * e + rng.sample::<f64, _>(StandardNormal);
        }
    }
    let corr = correlation_matrix(&fm(values)).unwrap();
    let wl: Vec<f64> = (0..d).map(|j| 400.0 + j as f64).collect();
    let map = build_windows(&corr, &wl, 0.99).map_err(|e| e.to_string())?;
    for w in &map.windows {
        for &a in &w.member_indices {
            for &b in &w.member_indices {
                ensure(a == b || corr.get(a, b) > 0.99, || format!("pair ({a}, {b}) in a window has rho {}", corr.get(a, b)))?;
            }
        }
    }
    let ar_windows = map.windows.len();

    // Default synthetic spectra.
    let prepared = prepare(&PipelineConfig::default()).map_err(|e| e.to_string())?;
    let train = &prepared.dataset.x_extreme;
    let corr = correlation_matrix(&train.to_features()).map_err(|e| e.to_string())?;
    let map = build_windows(&corr, &train.wavelengths_nm, 0.99).map_err(|e| e.to_string())?;
    let count = map.windows.len();
    ensure(count < 130, || format!("{count} windows over {} columns", train.n_wavelengths()))?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("windowing checks took {t:?}"))?;
    Ok(format!(
        "{} blocks -> {} windows, {ar_windows} complete-linkage AR windows, {count} windows over {} synthetic columns",
        sizes.len(),
        sizes.len(),
        train.n_wavelengths()
    ))
}

// ---------------------------------------------------------------- 5

fn grid(lo: f64, hi: f64, step: f64) -> SpectralGrid {
    let n = ((hi - lo) / step).round() as usize + 1;
    let wl: Vec<f64> = (0..n).map(|i| ((lo + i as f64 * step) * 1000.0).round() / 1000.0).collect();
    SpectralGrid::from_wavelengths(&wl).unwrap()
}

fn criterion_5() -> Check {
    let g = grid(400.0, 900.0, 1.0);

    let b = cluster_band(&[601.0], &g).map_err(|e| e.to_string())?;
    ensure((b.center_nm, b.nominal_width_nm, b.lo_nm, b.hi_nm) == (601.0, 10.0, 596.0, 606.0), || format!("{b:?}"))?;
    let b = cluster_band(&[600.0, 604.0, 596.0], &g).map_err(|e| e.to_string())?;
    ensure((b.center_nm, b.nominal_width_nm) == (600.0, 10.0), || format!("{b:?}"))?;
    let wide = grid(1400.0, 1700.0, 1.0);
    let picks = [1619.0, 1600.0, 1630.0, 1596.0, 1625.0];
    let b = cluster_band(&picks, &wide).map_err(|e| e.to_string())?;
    ensure(b.nominal_width_nm == 40.0 && (b.center_nm - picks.iter().sum::<f64>() / 5.0).abs() < 1e-12, || {
        format!("{b:?}")
    })?;
    let b = cluster_band(&[401.0, 403.0], &grid(400.0, 900.0, 0.4)).map_err(|e| e.to_string())?;
    ensure(b.lo_nm == 400.0 && b.hi_nm <= 407.0, || format!("{b:?}"))?;

    let nir = grid(700.0, 900.0, 1.0);
    let forty = Band {
        center_nm: 820.0,
        nominal_width_nm: 40.0,
        lo_nm: 797.0,
        hi_nm: 843.0,
        member_wavelengths: vec![797.0, 843.0],
    };
    let merged = resolve_overlaps(&[forty, nir.band(845.0, 10.0).unwrap()], &nir).map_err(|e| e.to_string())?;
    ensure(merged.len() == 1 && (merged[0].center_nm, merged[0].nominal_width_nm) == (832.5, 40.0), || {
        format!("40+10 merge gave {merged:?}")
    })?;
    let touching = [g.band(596.0, 20.0).unwrap(), g.band(611.0, 10.0).unwrap()];
    let kept = resolve_overlaps(&touching, &g).map_err(|e| e.to_string())?;
    ensure(kept == touching.to_vec(), || format!("touching bands changed: {kept:?}"))?;
    let tens = resolve_overlaps(&[g.band(500.0, 10.0).unwrap(), g.band(508.0, 10.0).unwrap()], &g)
        .map_err(|e| e.to_string())?;
    ensure(tens.len() == 1 && (tens[0].center_nm, tens[0].nominal_width_nm) == (504.0, 20.0), || {
        format!("10+10 merge gave {tens:?}")
    })?;

    // Fixpoint on random band lists.
    let vis = grid(390.0, 910.0, 0.4);
    let mut rng = SeedTree::new(55).rng();
    for case in 0..1000 {
        let count = rng.gen_range(1..12);
        let bands: Vec<Band> = (0..count)
            .map(|_| {
                let c = (rng.gen_range(400.0..900.0) * 10.0f64).round() / 10.0;
                vis.band(c, DEFAULT_WIDTHS[rng.gen_range(0..3)]).unwrap()
            })
            .collect();
        let out = resolve_overlaps(&bands, &vis).map_err(|e| format!("case {case}: {e}"))?;
        for (i, a) in out.iter().enumerate() {
            ensure(DEFAULT_WIDTHS.contains(&a.nominal_width_nm), || format!("case {case}: width {}", a.nominal_width_nm))?;
            for b in &out[i + 1..] {
                ensure(!a.overlaps(b), || format!("case {case}: {} and {} overlap", a.name(), b.name()))?;
            }
        }
    }
    Ok("clustering and overlap examples exact, 1000 random lists reach an overlap-free fixpoint".into())
}

// ---------------------------------------------------------------- 6-8

struct Runs {
    config: PipelineConfig,
    single: Option<(Report, Duration)>,
}

impl Runs {
    fn single_threaded(&mut self) -> Result<&(Report, Duration), String> {
        if self.single.is_none() {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let start = Instant::now();
            let report = pool.install(|| run_full_pipeline(&self.config)).map_err(|e| e.to_string())?;
            self.single = Some((report, start.elapsed()));
        }
        Ok(self.single.as_ref().unwrap())
    }
}

const PLANTED_NM: [f64; 3] = [550.0, 980.0, 1450.0];

fn criterion_6(runs: &mut Runs) -> Check {
    let (report, elapsed) = runs.single_threaded()?;
    let centers: Vec<f64> = report.selected_bands.iter().map(|b| b.center_nm).collect();
    let matched = PLANTED_NM.iter().filter(|p| centers.iter().any(|c| (c - **p).abs() <= 15.0)).count();
    let moderate = report
        .comparison
        .iter()
        .find(|r| r.method == "Full Pipeline")
        .map(|r| r.f1_moderate)
        .ok_or("no Full Pipeline row")?;
    for (i, a) in report.selected_bands.iter().enumerate() {
        for b in &report.selected_bands[i + 1..] {
            ensure(!a.overlaps(b), || format!("final bands {} and {} overlap", a.name(), b.name()))?;
        }
    }
    let summary = format!(
        "bands {centers:?}, {matched}/3 planted centers matched, moderate F1 {moderate:.3}, {:.1} s on one thread",
        elapsed.as_secs_f64()
    );
    ensure(matched >= 2 && moderate >= 0.80 && *elapsed < Duration::from_secs(600), || summary.clone())?;
    Ok(summary)
}

fn criterion_7(runs: &mut Runs) -> Check {
    let config = runs.config.clone();
    let first = runs.single_threaded()?.0.to_json().map_err(|e| e.to_string())?;
    let run_with = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let report = pool.install(|| run_full_pipeline(&config)).map_err(|e| e.to_string())?;
        report.to_json().map_err(|e| e.to_string())
    };
    let again = run_with(1)?;
    ensure(first == again, || "two single-threaded runs differ".into())?;
    let eight = run_with(8)?;
    ensure(first == eight, || "1-thread and 8-thread reports differ".into())?;
    Ok(format!("{} report bytes identical across two 1-thread runs and an 8-thread run", first.len()))
}

fn criterion_8(runs: &mut Runs) -> Check {
    let config = runs.config.clone();
    let baseline = runs.single_threaded()?.0.selected_bands.clone();
    let mut prepared = prepare(&config).map_err(|e| e.to_string())?;
    let mut rng = SeedTree::new(88).rng();
    prepared
        .dataset
        .x_inner
        .reflectance
        .mapv_inplace(|v| v * 1.5 + 0.2 * rng.sample::<f64, _>(StandardNormal));
    let perturbed = select_bands(&prepared.dataset, &config).map_err(|e| e.to_string())?;
    let names = |b: &[Band]| b.iter().map(Band::name).collect::<Vec<_>>();
    ensure(perturbed.selected_bands == baseline, || {
        format!("bands {:?} became {:?}", names(&baseline), names(&perturbed.selected_bands))
    })?;
    Ok(format!("selected bands {:?} unchanged after corrupting the inner samples", names(&baseline)))
}

fn main() {
    let mut runs = Runs {
        config: PipelineConfig::default(),
        single: None,
    };
    let criteria: Vec<(&str, Box<dyn FnMut(&mut Runs) -> Check>)> = vec![
        ("fitness reconstruction", Box::new(|_| criterion_1())),
        ("ranker oracle suite", Box::new(|_| criterion_2())),
        ("QDA correctness", Box::new(|_| criterion_3())),
        ("windowing", Box::new(|_| criterion_4())),
        ("band rules", Box::new(|_| criterion_5())),
        ("end-to-end synthetic recovery", Box::new(criterion_6)),
        ("determinism", Box::new(criterion_7)),
        ("leakage audit", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, mut check)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut runs)))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
