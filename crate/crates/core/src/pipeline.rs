//! End-to-end band selection: data preparation, correlation windows, a
//! first ranking stage on window features, within-window clustering into
//! bands, a final ranking stage on bands, and the method comparison.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandcluster::{
    apply_band_windows, cluster_band, resolve_overlaps, within_window_selection, Band, SpectralGrid,
    WindowSelection, DEFAULT_WIDTHS,
};
use crate::classify::{cross_validate, qda_fit, qda_predict, weighted_f1};
use crate::dataset::{
    assign_classes, load_labels, load_spectra, merge_sensors, remove_outliers, ClassThresholds,
    LabeledDataset, NitrogenLabel, SpectraTable,
};
use crate::ensemble::{recursive_ranker_elimination, EliminationTrace, SelectionSettings, SubsetScorer};
use crate::error::{Error, Result, StageContext};
use crate::features::FeatureMatrix;
use crate::rankers::{run_all, RankVector, RankerConfig, RankerKind};
use crate::seed::SeedTree;
use crate::synthgen::{generate_sensors, SynthConfig};
use crate::windowing::{
    apply_normalizer, apply_windows, build_windows, correlation_matrix, fit_normalizer, CorrelationMatrix,
    Normalizer, WindowMap,
};

/// Where spectra come from: CSV files or the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    /// One merged table, or a visible table followed by an NIR table.
    pub spectra: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Used instead of files when present.
    pub synthetic: Option<SynthConfig>,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            spectra: Vec::new(),
            labels: None,
            synthetic: Some(SynthConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: InputConfig,
    /// Visible sensor wavelengths kept when merging two sensors.
    pub vis_clip_nm: (f64, f64),
    pub outlier_z: f64,
    pub thresholds: ClassThresholds,
    pub correlation_threshold: f64,
    pub rankers: RankerConfig,
    /// Cross-validation for the window and band stages.
    pub selection: SelectionSettings,
    /// Cross-validation inside single correlated windows.
    pub window_selection: SelectionSettings,
    pub band_widths_nm: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: InputConfig::default(),
            vis_clip_nm: (400.0, 900.0),
            outlier_z: 3.0,
            thresholds: ClassThresholds::default(),
            correlation_threshold: 0.99,
            rankers: RankerConfig::default(),
            selection: SelectionSettings::default(),
            window_selection: SelectionSettings {
                max_k: Some(40),
                ..SelectionSettings::default()
            },
            band_widths_nm: DEFAULT_WIDTHS.to_vec(),
            seed: 0,
            output_dir: PathBuf::from("bandsel-out"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            row: Some(e.line()),
            column: None,
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.rankers.validate()?;
        self.selection.validate()?;
        self.window_selection.validate()?;
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return Err(Error::validation("correlation threshold must lie in (0, 1]"));
        }
        if !(self.outlier_z > 0.0) {
            return Err(Error::validation("outlier z threshold must be positive"));
        }
        if !(self.vis_clip_nm.0 < self.vis_clip_nm.1) {
            return Err(Error::validation("visible clip range is empty"));
        }
        let input = &self.input;
        match (&input.synthetic, input.spectra.len(), &input.labels) {
            (Some(s), _, _) => s.validate()?,
            (None, 1 | 2, Some(_)) => {}
            _ => {
                return Err(Error::validation(
                    "input needs a synthetic config, or one or two spectra files plus a labels file",
                ))
            }
        }
        Ok(())
    }
}

/// Merged, screened spectra with their labels and nitrogen split.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub spectra: SpectraTable,
    pub labels: Vec<NitrogenLabel>,
    pub removed_outliers: Vec<String>,
    pub dataset: LabeledDataset,
}

fn merge_all(tables: Vec<SpectraTable>, clip: (f64, f64)) -> Result<SpectraTable> {
    let mut it = tables.into_iter();
    let first = it.next().ok_or_else(|| Error::validation("no spectra tables"))?;
    match it.next() {
        None => Ok(first),
        Some(nir) => {
            if it.next().is_some() {
                return Err(Error::validation("at most two sensor tables can be merged"));
            }
            merge_sensors(&first, &nir, clip.0, clip.1)
        }
    }
}

/// Loads or generates spectra, merges sensors, drops outliers and splits
/// samples by nitrogen level.
pub fn prepare(config: &PipelineConfig) -> Result<PreparedData> {
    config.validate()?;
    let (tables, labels) = match &config.input.synthetic {
        Some(s) => generate_sensors(s)?,
        None => {
            let tables = config
                .input
                .spectra
                .iter()
                .map(|p| load_spectra(p))
                .collect::<Result<Vec<_>>>()?;
            let labels = load_labels(config.input.labels.as_ref().expect("validated"))?;
            (tables, labels)
        }
    };
    let merged = merge_all(tables, config.vis_clip_nm)?;
    let (spectra, removed_outliers) = remove_outliers(&merged, config.outlier_z)?;
    log::info!(
        "{} samples over {} wavelengths; {} outliers removed",
        spectra.n_samples(),
        spectra.n_wavelengths(),
        removed_outliers.len()
    );
    let dataset = assign_classes(&spectra, &labels, &config.thresholds)?;
    Ok(PreparedData {
        spectra,
        labels,
        removed_outliers,
        dataset,
    })
}

/// Rankings and elimination trace of one selection stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub feature_names: Vec<String>,
    /// In the fixed ranker order.
    pub rankings: Vec<(String, RankVector)>,
    pub trace: EliminationTrace,
}

impl StageRecord {
    /// Heatmap layout: one row per ranker, one column per feature.
    pub fn write_heatmap_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::validation(format!("csv write failed: {e}"));
        let mut header = vec!["ranker".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).map_err(map)?;
        for (name, rv) in &self.rankings {
            let mut row = vec![name.clone()];
            row.extend(rv.ranks.iter().map(|r| r.to_string()));
            w.write_record(&row).map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// A correlated window, the wavelengths chosen inside it and the band they
/// were clustered into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBand {
    pub selection: WindowSelection,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub subset_size: usize,
    pub f1_mean_extreme: f64,
    pub f1_std_extreme: f64,
    pub f1_moderate: f64,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_wavelengths: usize,
    pub n_extreme: usize,
    pub n_inner: usize,
    pub n_excluded_middle: usize,
    pub n_outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub data: DataSummary,
    pub windows: WindowMap,
    pub window_stage: StageRecord,
    pub window_bands: Vec<WindowBand>,
    /// Bands after overlap resolution, the candidates of the band stage.
    pub candidate_bands: Vec<Band>,
    pub band_stage: StageRecord,
    /// Bands in the final winning subset, in the winner's order.
    pub selected_bands: Vec<Band>,
    pub comparison: Vec<ComparisonRow>,
    /// Large; exported as CSV rather than stored in the JSON report.
    #[serde(skip)]
    pub correlation: Option<CorrelationMatrix>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Band-level view of each window: correlated window center, range and
    /// width next to the clustered band's.
    pub fn write_window_bands_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::validation(format!("csv write failed: {e}"));
        w.write_record([
            "window_center_nm",
            "window_range_nm",
            "window_width_nm",
            "band_center_nm",
            "band_range_nm",
            "band_width_nm",
            "nominal_width_nm",
        ])
        .map_err(map)?;
        let fmt = |v: f64| format!("{}", (v * 1000.0).round() / 1000.0);
        for wb in &self.window_bands {
            let win = &wb.selection.window;
            let b = &wb.band;
            w.write_record([
                fmt(win.midpoint_nm),
                format!("{} - {}", fmt(win.first_nm), fmt(win.last_nm)),
                fmt(win.last_nm - win.first_nm),
                fmt(b.center_nm),
                format!("{} - {}", fmt(b.lo_nm), fmt(b.hi_nm)),
                fmt(b.hi_nm - b.lo_nm),
                fmt(b.nominal_width_nm),
            ])
            .map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn write_comparison_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::validation(format!("csv write failed: {e}"));
        w.write_record(["method", "subset_size", "f1_mean_extreme", "f1_std_extreme", "f1_moderate"])
            .map_err(map)?;
        for r in &self.comparison {
            w.write_record([
                r.method.clone(),
                r.subset_size.to_string(),
                format!("{:.4}", r.f1_mean_extreme),
                format!("{:.4}", r.f1_std_extreme),
                format!("{:.4}", r.f1_moderate),
            ])
            .map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Training and test features of one stage, normalized with training
/// statistics only.
struct StageData {
    train: FeatureMatrix,
    test: FeatureMatrix,
}

impl StageData {
    fn new(train_raw: &FeatureMatrix, test_raw: &FeatureMatrix) -> Result<Self> {
        let norm: Normalizer = fit_normalizer(train_raw)?;
        Ok(StageData {
            train: apply_normalizer(&norm, train_raw)?,
            test: apply_normalizer(&norm, test_raw)?,
        })
    }

    /// Fits QDA on the named training columns and scores the test rows.
    fn test_f1(&self, names: &[String], y_train: &[u8], y_test: &[u8], shrinkage: f64) -> Result<f64> {
        let model = qda_fit(&self.train.select_named(names)?, y_train, shrinkage)?;
        let pred = qda_predict(&model, &self.test.select_named(names)?)?;
        Ok(weighted_f1(y_test, &pred))
    }
}

fn rank_stage(
    x: &FeatureMatrix,
    y: &[u8],
    rankers: &RankerConfig,
    settings: &SelectionSettings,
    reference_size: usize,
    seed: SeedTree,
) -> Result<StageRecord> {
    let config = RankerConfig {
        seed: seed.child("rankers").seed(),
        ..rankers.clone()
    };
    let rankings = if x.n_features() == 1 {
        // Nothing to order; every ranker agrees trivially.
        RankerKind::ALL
            .iter()
            .map(|k| {
                let rv = RankVector {
                    feature_names: x.names.clone(),
                    ranks: vec![1],
                };
                (k.name().to_string(), rv)
            })
            .collect()
    } else {
        run_all(&RankerKind::ALL, x, y, &config)?
    };
    let scorer = settings
        .scorer(x, y, seed.child("cv").seed())?
        .with_reference_size(reference_size)?;
    let trace = recursive_ranker_elimination(&rankings, &scorer, settings.max_k_for(x.n_features()))?;
    Ok(StageRecord {
        feature_names: x.names.clone(),
        rankings,
        trace,
    })
}

fn comparison_row(
    method: &str,
    features: &[String],
    f1_mean: f64,
    f1_std: f64,
    data: &StageData,
    ds: &LabeledDataset,
    shrinkage: f64,
) -> Result<ComparisonRow> {
    Ok(ComparisonRow {
        method: method.to_string(),
        subset_size: features.len(),
        f1_mean_extreme: f1_mean,
        f1_std_extreme: f1_std,
        f1_moderate: data.test_f1(features, &ds.y_extreme, &ds.y_inner, shrinkage)?,
        features: features.to_vec(),
    })
}

/// Comparison rows over the window features: no selection, each base
/// ranker's own best prefix, the full ensemble and the elimination winner.
fn compare_window_methods(
    stage: &StageRecord,
    scorer: &SubsetScorer,
    data: &StageData,
    ds: &LabeledDataset,
    config: &PipelineConfig,
    seed: SeedTree,
) -> Result<Vec<ComparisonRow>> {
    let shrinkage = config.selection.shrinkage;
    let all = cross_validate(
        &data.train,
        &ds.y_extreme,
        config.selection.cv_folds,
        seed.child("cv").seed(),
        shrinkage,
    )?;
    let mut rows = vec![comparison_row(
        "None",
        &data.train.names,
        all.f1_mean,
        all.f1_std,
        data,
        ds,
        shrinkage,
    )?];
    let max_k = config.selection.max_k_for(data.train.n_features());
    for (name, rv) in &stage.rankings {
        let best = scorer.best_prefix(rv, max_k)?;
        rows.push(comparison_row(name, &best.features, best.f1_mean, best.f1_std, data, ds, shrinkage)?);
    }
    let full = &stage.trace.rounds[0].best;
    rows.push(comparison_row("Full Ensemble", &full.features, full.f1_mean, full.f1_std, data, ds, shrinkage)?);
    let win = &stage.trace.winner;
    rows.push(comparison_row(
        "Recursive Ranker Elimination",
        &win.features,
        win.f1_mean,
        win.f1_std,
        data,
        ds,
        shrinkage,
    )?);
    Ok(rows)
}

fn window_stage_data(ds: &LabeledDataset, windows: &WindowMap) -> Result<StageData> {
    StageData::new(&apply_windows(&ds.x_extreme, windows)?, &apply_windows(&ds.x_inner, windows)?)
        .stage("window features")
}

fn band_stage_data(ds: &LabeledDataset, bands: &[Band]) -> Result<StageData> {
    StageData::new(&apply_band_windows(&ds.x_extreme, bands)?, &apply_band_windows(&ds.x_inner, bands)?)
        .stage("band features")
}

/// Runs both selection stages on a prepared dataset. The returned report has
/// no comparison rows yet; see [`evaluate_report`]. Nothing here is fit on
/// the inner (test) samples.
pub fn select_bands(ds: &LabeledDataset, config: &PipelineConfig) -> Result<Report> {
    config.validate()?;
    let tree = SeedTree::new(config.seed);
    let raw_train = &ds.x_extreme;
    let y = &ds.y_extreme;

    let correlation = correlation_matrix(&raw_train.to_features()).stage("correlation windows")?;
    let windows = build_windows(&correlation, &raw_train.wavelengths_nm, config.correlation_threshold)
        .stage("correlation windows")?;
    log::info!("{} wavelengths grouped into {} windows", raw_train.n_wavelengths(), windows.windows.len());
    let window_data = window_stage_data(ds, &windows)?;

    let window_stage = rank_stage(
        &window_data.train,
        y,
        &config.rankers,
        &config.selection,
        window_data.train.n_features(),
        tree.child("window stage"),
    )
    .stage("window ranking")?;
    log::info!(
        "window stage winner: {:?} ({} features, fitness {:.4})",
        window_stage.trace.winner_members,
        window_stage.trace.winner.size(),
        window_stage.trace.winner.fitness
    );

    let mut grid = SpectralGrid::from_wavelengths(&raw_train.wavelengths_nm)?;
    grid.widths_nm = config.band_widths_nm.clone();
    grid.validate()?;
    let winners: Vec<_> = window_stage
        .trace
        .winner
        .features
        .iter()
        .map(|name| windows.by_name(name).expect("winner names come from the window map").clone())
        .collect();
    let window_bands = winners
        .par_iter()
        .map(|w| {
            let selection = within_window_selection(
                w,
                raw_train,
                y,
                &config.rankers,
                &config.window_selection,
                tree.child("window").child(&w.name()),
            )?;
            let band = cluster_band(&selection.selected_nm, &grid)?;
            log::info!("window {} nm -> band {} nm ({} nm)", w.name(), band.name(), band.nominal_width_nm);
            Ok(WindowBand { selection, band })
        })
        .collect::<Result<Vec<_>>>()
        .stage("within-window selection")?;
    let clustered: Vec<Band> = window_bands.iter().map(|wb| wb.band.clone()).collect();
    let candidate_bands = resolve_overlaps(&clustered, &grid).stage("overlap resolution")?;

    let band_data = band_stage_data(ds, &candidate_bands)?;
    let band_stage = rank_stage(
        &band_data.train,
        y,
        &config.rankers,
        &config.selection,
        // Bands compete under the window stage's smallness scale.
        window_data.train.n_features().max(band_data.train.n_features()),
        tree.child("band stage"),
    )
    .stage("band ranking")?;
    let selected_bands: Vec<Band> = band_stage
        .trace
        .winner
        .features
        .iter()
        .map(|name| {
            candidate_bands
                .iter()
                .find(|b| &b.name() == name)
                .expect("band names come from the candidates")
                .clone()
        })
        .collect();

    Ok(Report {
        seed: config.seed,
        data: DataSummary {
            n_wavelengths: raw_train.n_wavelengths(),
            n_extreme: ds.y_extreme.len(),
            n_inner: ds.y_inner.len(),
            n_excluded_middle: ds.n_excluded_middle,
            n_outliers: 0,
        },
        windows,
        window_stage,
        window_bands,
        candidate_bands,
        band_stage,
        selected_bands,
        comparison: Vec::new(),
        correlation: Some(correlation),
    })
}

/// Fills in the method comparison of a report from [`select_bands`]: train
/// CV scores on the extreme samples and QDA scores on the inner samples.
pub fn evaluate_report(ds: &LabeledDataset, mut report: Report, config: &PipelineConfig) -> Result<Report> {
    config.validate()?;
    let tree = SeedTree::new(config.seed);
    let y = &ds.y_extreme;
    let window_data = window_stage_data(ds, &report.windows)?;
    // Same seed path as the window stage, so the folds match its scores.
    let window_scorer = config
        .selection
        .scorer(&window_data.train, y, tree.child("window stage").child("cv").seed())
        .and_then(|s| s.with_reference_size(window_data.train.n_features()))
        .stage("comparison")?;
    let mut comparison = compare_window_methods(
        &report.window_stage,
        &window_scorer,
        &window_data,
        ds,
        config,
        tree.child("comparison"),
    )
    .stage("comparison")?;
    let band_data = band_stage_data(ds, &report.candidate_bands)?;
    let win = &report.band_stage.trace.winner;
    comparison.push(
        comparison_row(
            "Full Pipeline",
            &win.features,
            win.f1_mean,
            win.f1_std,
            &band_data,
            ds,
            config.selection.shrinkage,
        )
        .stage("final evaluation")?,
    );
    report.comparison = comparison;
    Ok(report)
}

/// Runs every stage after data preparation.
pub fn run_from_dataset(ds: &LabeledDataset, config: &PipelineConfig) -> Result<Report> {
    let report = select_bands(ds, config)?;
    evaluate_report(ds, report, config)
}

pub fn run_full_pipeline(config: &PipelineConfig) -> Result<Report> {
    let prepared = prepare(config).stage("data preparation")?;
    let mut report = run_from_dataset(&prepared.dataset, config)?;
    report.data.n_outliers = prepared.removed_outliers.len();
    Ok(report)
}

/// The comparison rows of a full run.
pub fn compare_methods(config: &PipelineConfig) -> Result<Vec<ComparisonRow>> {
    Ok(run_full_pipeline(config)?.comparison)
}
