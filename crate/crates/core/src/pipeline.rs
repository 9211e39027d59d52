//! End-to-end orchestration of the four data cases.
//!
//! Every stage reads its inputs from and writes its outputs to one run
//! directory, so stages can run one at a time from the command line or all at
//! once through [`run_all`]. The trained model and the attribution matrix
//! carry a content key derived from the dataset hash and the settings that
//! produced them; a later run with the same key reuses them.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster_validation::{validate, ValidationReport};
use crate::cmapss_io::{
    assign_bin, drop_constant_columns, export_table, import_table, label_rul, normalize,
    parse_cmapss, split_train_test, CycleTable, DataSplit, IngestOptions, MaintenanceBin, RulLabel,
};
use crate::error::{Error, Result};
use crate::fuzzy_cmeans::{fcm_fit, FcmConfig, FcmResult};
use crate::manifold::{umap, Embedding2D, UmapConfig};
use crate::matrix::Matrix;
use crate::rul_net::{default_dims, EpochRmse, RegressorState, SavedModel, TrainConfig};
use crate::shapley::{
    explain, rank_features, sample_background, select_top_k, AttributionMatrix, FeatureRanking,
    Method,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    RawData,
    ShapValues,
}

/// One column of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCase {
    pub id: u8,
    pub source: Source,
    pub shap_informed: bool,
}

impl DataCase {
    pub const ALL: [DataCase; 4] = [
        DataCase {
            id: 1,
            source: Source::RawData,
            shap_informed: false,
        },
        DataCase {
            id: 2,
            source: Source::RawData,
            shap_informed: true,
        },
        DataCase {
            id: 3,
            source: Source::ShapValues,
            shap_informed: false,
        },
        DataCase {
            id: 4,
            source: Source::ShapValues,
            shap_informed: true,
        },
    ];

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("data case must be 1-4, got {id}")))
    }

    /// Input width given the retained feature count and the top-k size.
    pub fn dimensions(&self, retained: usize, top_k: usize) -> usize {
        if self.shap_informed {
            top_k
        } else {
            retained
        }
    }
}

/// Which RUL values the ground-truth bins come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    /// The trained regressor's predictions.
    #[default]
    Ann,
    /// The capped piecewise labels.
    Piecewise,
}

impl FromStr for Truth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ann" => Ok(Truth::Ann),
            "piecewise" => Ok(Truth::Piecewise),
            _ => Err(Error::InvalidInput(format!(
                "truth must be `ann` or `piecewise`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::Ann => "ann",
            Truth::Piecewise => "piecewise",
        })
    }
}

/// Rows that are attributed, embedded and clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    #[default]
    Test,
    All,
}

impl FromStr for Population {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Population::Test),
            "all" => Ok(Population::All),
            _ => Err(Error::InvalidInput(format!(
                "population must be `test` or `all`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Population::Test => "test",
            Population::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub include_cycle: bool,
    pub top_k: usize,
    pub background: usize,
    /// Kernel estimator budget; `None` means `2d + 2048`.
    pub coalitions: Option<usize>,
    pub clusters: usize,
    pub fuzziness: f64,
    pub neighbors: usize,
    pub min_dist: f64,
    pub layout_epochs: usize,
    pub cases: Vec<u8>,
    pub truth: Truth,
    pub population: Population,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data/train_FD001.txt"),
            out: PathBuf::from("out"),
            seed: 0,
            epochs: 100,
            learning_rate: 1e-4,
            batch_size: 32,
            train_fraction: 0.8,
            include_cycle: false,
            top_k: 5,
            background: 100,
            coalitions: None,
            clusters: 6,
            fuzziness: 3.0,
            neighbors: 15,
            min_dist: 0.1,
            layout_epochs: 200,
            cases: vec![1, 2, 3, 4],
            truth: Truth::Ann,
            population: Population::Test,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value `{value}` for `{key}`")))
}

/// Parses `1,2,4` into case ids.
pub fn parse_cases(value: &str) -> Result<Vec<u8>> {
    let mut ids = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let id: u8 = parse_value("cases", part)?;
        DataCase::from_id(id)?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    if ids.is_empty() {
        return Err(Error::InvalidInput("no data cases selected".into()));
    }
    Ok(ids)
}

impl RunConfig {
    /// Sets one option by its flag name (dashes or underscores both accepted).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "data" => self.data = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse_value(&key, value)?,
            "epochs" => self.epochs = parse_value(&key, value)?,
            "learning-rate" => self.learning_rate = parse_value(&key, value)?,
            "batch-size" => self.batch_size = parse_value(&key, value)?,
            "train-fraction" => self.train_fraction = parse_value(&key, value)?,
            "include-cycle" => self.include_cycle = parse_value(&key, value)?,
            "top-k" => self.top_k = parse_value(&key, value)?,
            "background" => self.background = parse_value(&key, value)?,
            "coalitions" => {
                self.coalitions = match value {
                    "auto" | "" => None,
                    v => Some(parse_value(&key, v)?),
                }
            }
            "clusters" => self.clusters = parse_value(&key, value)?,
            "fuzziness" => self.fuzziness = parse_value(&key, value)?,
            "neighbors" => self.neighbors = parse_value(&key, value)?,
            "min-dist" => self.min_dist = parse_value(&key, value)?,
            "layout-epochs" => self.layout_epochs = parse_value(&key, value)?,
            "cases" => self.cases = parse_cases(value)?,
            "truth" => self.truth = value.parse()?,
            "population" => self.population = value.parse()?,
            other => return Err(Error::InvalidInput(format!("unknown option `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_config_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_config_text(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.background == 0 || self.clusters == 0 {
            return Err(Error::InvalidInput(
                "top-k, background and clusters must be positive".into(),
            ));
        }
        if !(self.fuzziness > 1.0) {
            return Err(Error::InvalidInput(format!(
                "fuzziness must exceed 1, got {}",
                self.fuzziness
            )));
        }
        if self.neighbors < 2 || self.layout_epochs == 0 || !(self.min_dist >= 0.0) {
            return Err(Error::InvalidInput("invalid layout settings".into()));
        }
        self.train_config().validate()?;
        parse_cases(
            &self
                .cases
                .iter()
                .map(u8::to_string)
                .collect::<Vec<_>>()
                .join(","),
        )?;
        Ok(())
    }

    pub fn selected_cases(&self) -> Result<Vec<DataCase>> {
        self.cases.iter().map(|&id| DataCase::from_id(id)).collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: sub_seed(self.seed, "shuffle"),
            ..TrainConfig::default()
        }
    }

    pub fn umap_config(&self) -> UmapConfig {
        UmapConfig {
            n_neighbors: self.neighbors,
            min_dist: self.min_dist,
            epochs: self.layout_epochs,
            seed: sub_seed(self.seed, "layout"),
            ..UmapConfig::default()
        }
    }

    pub fn fcm_config(&self) -> FcmConfig {
        FcmConfig {
            clusters: self.clusters,
            fuzziness: self.fuzziness,
            seed: sub_seed(self.seed, "fcm"),
            ..FcmConfig::default()
        }
    }
}

/// Independent per-stage seed derived from the run seed.
pub fn sub_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn content_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Hex SHA-256 of a file's bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn table_csv(&self) -> PathBuf {
        self.root.join("table.csv")
    }
    pub fn table_json(&self) -> PathBuf {
        self.root.join("table.json")
    }
    pub fn split_json(&self) -> PathBuf {
        self.root.join("split.json")
    }
    pub fn model_json(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn history_csv(&self) -> PathBuf {
        self.root.join("rmse_history.csv")
    }
    pub fn predictions_csv(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }
    pub fn attributions_csv(&self) -> PathBuf {
        self.root.join("attributions.csv")
    }
    pub fn attributions_json(&self) -> PathBuf {
        self.root.join("attributions.json")
    }
    pub fn ranking_json(&self) -> PathBuf {
        self.root.join("ranking.json")
    }
    pub fn truth_csv(&self) -> PathBuf {
        self.root.join("truth.csv")
    }
    pub fn case_dir(&self, id: u8) -> PathBuf {
        self.root.join(format!("case{id}"))
    }
    pub fn embedding_csv(&self, id: u8) -> PathBuf {
        self.case_dir(id).join("embedding.csv")
    }
    pub fn partition_csv(&self, id: u8) -> PathBuf {
        self.case_dir(id).join("partition.csv")
    }
    pub fn centroids_json(&self, id: u8) -> PathBuf {
        self.case_dir(id).join("centroids.json")
    }
    pub fn metrics_json(&self, id: u8) -> PathBuf {
        self.case_dir(id).join("metrics.json")
    }
    pub fn metrics_table_csv(&self) -> PathBuf {
        self.root.join("metrics_table.csv")
    }
    pub fn metrics_table_json(&self) -> PathBuf {
        self.root.join("metrics_table.json")
    }
    pub fn manifest_json(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    }
}

fn require(stage: &str, path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            stage: stage.into(),
            path,
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitRecord {
    key: String,
    fingerprint: String,
    train: Vec<usize>,
    test: Vec<usize>,
}

/// Normalized, labelled table plus the train/test partition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: CycleTable,
    pub labels: Vec<RulLabel>,
    pub train: DataSplit,
    pub test: DataSplit,
    pub fingerprint: String,
    pub key: String,
}

impl Prepared {
    /// Row positions that are attributed, embedded and clustered.
    pub fn population(&self, population: Population) -> Vec<usize> {
        match population {
            Population::Test => self.test.indices.clone(),
            Population::All => (0..self.table.len()).collect(),
        }
    }
}

fn ingest_key(config: &RunConfig, fingerprint: &str) -> String {
    content_key(&[
        "ingest",
        fingerprint,
        &config.include_cycle.to_string(),
        &config.seed.to_string(),
        &config.train_fraction.to_string(),
    ])
}

/// Parses the raw file, drops constant columns, labels, normalizes and splits.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let bytes = fs::read(&config.data).map_err(|e| Error::io(&config.data, e))?;
    let fp = fingerprint(&bytes);
    let options = IngestOptions {
        include_cycle: config.include_cycle,
    };
    let raw = parse_cmapss(bytes.as_slice(), config.data.clone(), options)?;
    let table = normalize(&drop_constant_columns(&raw)?)?;
    let labels = label_rul(&table);
    let (train, test) = split_train_test(
        &table,
        &labels,
        config.train_fraction,
        sub_seed(config.seed, "split"),
    )?;
    Ok(Prepared {
        key: ingest_key(config, &fp),
        table,
        labels,
        train,
        test,
        fingerprint: fp,
    })
}

/// `ingest` stage: [`prepare`] and write the table and split.
pub fn ingest(config: &RunConfig, paths: &RunPaths) -> Result<Prepared> {
    fs::create_dir_all(paths.root()).map_err(|e| Error::io(paths.root(), e))?;
    let p = prepare(config)?;
    export_table(
        &p.table,
        Some(&p.labels),
        paths.table_csv(),
        paths.table_json(),
    )?;
    let record = SplitRecord {
        key: p.key.clone(),
        fingerprint: p.fingerprint.clone(),
        train: p.train.indices.clone(),
        test: p.test.indices.clone(),
    };
    write_text(&paths.split_json(), &serde_json::to_string(&record)?)?;
    Ok(p)
}

/// Reloads what `ingest` wrote.
pub fn load_prepared(paths: &RunPaths) -> Result<Prepared> {
    let csv = require("ingest", paths.table_csv())?;
    let json = require("ingest", paths.table_json())?;
    let split = require("ingest", paths.split_json())?;
    let (table, labels) = import_table(csv, json)?;
    let labels = labels.ok_or_else(|| Error::InvalidInput("table has no rul column".into()))?;
    let text = fs::read_to_string(&split).map_err(|e| Error::io(&split, e))?;
    let record: SplitRecord = serde_json::from_str(&text)?;
    Ok(Prepared {
        train: DataSplit::from_indices(&table, &labels, record.train),
        test: DataSplit::from_indices(&table, &labels, record.test),
        table,
        labels,
        fingerprint: record.fingerprint,
        key: record.key,
    })
}

fn model_key(config: &RunConfig, prepared: &Prepared) -> String {
    let tc = config.train_config();
    content_key(&[
        "train",
        &prepared.key,
        &serde_json::to_string(&tc).expect("config serializes"),
        &sub_seed(config.seed, "init").to_string(),
    ])
}

/// Trained model with its RMSE history.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: SavedModel,
    pub history: Vec<EpochRmse>,
    pub cached: bool,
}

fn write_history(path: &Path, history: &[EpochRmse]) -> Result<()> {
    let mut out = String::from("epoch,train_rmse,test_rmse\n");
    for h in history {
        let test = h.test.map_or(String::new(), |t| t.to_string());
        out.push_str(&format!("{},{},{}\n", h.epoch, h.train, test));
    }
    write_text(path, &out)
}

fn read_history(path: &Path) -> Result<Vec<EpochRmse>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: "expected epoch,train_rmse,test_rmse".into(),
        };
        out.push(EpochRmse {
            epoch: rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?,
            train: rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?,
            test: match rec.get(2) {
                Some("") | None => None,
                Some(v) => Some(v.parse().map_err(|_| bad())?),
            },
        });
    }
    Ok(out)
}

fn write_predictions(path: &Path, prepared: &Prepared, model: &SavedModel) -> Result<()> {
    let pred = model.state.predict_rul(&prepared.table)?;
    let mut in_test = vec![false; prepared.table.len()];
    for &i in &prepared.test.indices {
        in_test[i] = true;
    }
    let mut out = String::from("row,unit,cycle,split,rul,predicted_rul\n");
    for (i, p) in pred.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{p}\n",
            prepared.table.unit_ids()[i],
            prepared.table.cycles()[i],
            if in_test[i] { "test" } else { "train" },
            prepared.labels[i].value(),
        ));
    }
    write_text(path, &out)
}

/// `train` stage. Reuses `model.json` when its key matches.
pub fn train(config: &RunConfig, paths: &RunPaths, prepared: &Prepared) -> Result<Trained> {
    let key = model_key(config, prepared);
    if let (Ok(model), Ok(history)) = (
        SavedModel::load(paths.model_json()),
        read_history(&paths.history_csv()),
    ) {
        if model.key == key && paths.predictions_csv().exists() {
            return Ok(Trained {
                model,
                history,
                cached: true,
            });
        }
    }
    let mut state = RegressorState::init(
        &default_dims(prepared.table.n_features()),
        sub_seed(config.seed, "init"),
    )?;
    let tc = config.train_config();
    let history = state.train(&prepared.train, Some(&prepared.test), &tc)?;
    let model = SavedModel {
        state,
        feature_names: prepared.table.feature_names().to_vec(),
        normalization: prepared.table.ranges().to_vec(),
        config: tc,
        key,
    };
    model.save(paths.model_json())?;
    write_history(&paths.history_csv(), &history)?;
    write_predictions(&paths.predictions_csv(), prepared, &model)?;
    Ok(Trained {
        model,
        history,
        cached: false,
    })
}

pub fn load_model(paths: &RunPaths) -> Result<SavedModel> {
    SavedModel::load(require("train", paths.model_json())?)
}

/// Attribution matrix with its key and the derived ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explained {
    pub key: String,
    /// Table row of each attribution row.
    pub rows: Vec<usize>,
    pub attributions: AttributionMatrix,
    #[serde(skip)]
    pub ranking: Option<FeatureRanking>,
    #[serde(skip)]
    pub cached: bool,
}

impl Explained {
    pub fn ranking(&self) -> Result<FeatureRanking> {
        match &self.ranking {
            Some(r) => Ok(r.clone()),
            None => rank_features(&self.attributions),
        }
    }
}

fn attribution_key(config: &RunConfig, model: &SavedModel) -> String {
    content_key(&[
        "explain",
        &model.key,
        &config.background.to_string(),
        &format!("{:?}", config.coalitions),
        &config.population.to_string(),
        &config.seed.to_string(),
    ])
}

/// `explain` stage: Shapley values for the population rows, plus the ranking.
pub fn explain_stage(
    config: &RunConfig,
    paths: &RunPaths,
    prepared: &Prepared,
    model: &SavedModel,
) -> Result<Explained> {
    let key = attribution_key(config, model);
    if let Ok(text) = fs::read_to_string(paths.attributions_json()) {
        if let Ok(mut e) = serde_json::from_str::<Explained>(&text) {
            if e.key == key && paths.ranking_json().exists() && paths.attributions_csv().exists() {
                e.ranking = Some(rank_features(&e.attributions)?);
                e.cached = true;
                return Ok(e);
            }
        }
    }
    let rows = prepared.population(config.population);
    let data = prepared.table.features().select_rows(&rows);
    let background = sample_background(
        &prepared.train.features,
        config.background,
        sub_seed(config.seed, "background"),
    );
    let d = prepared.table.n_features();
    let kernel_seed = sub_seed(config.seed, "coalitions");
    let method = match config.coalitions {
        Some(n) => Method::Kernel {
            n_coalitions: n,
            seed: kernel_seed,
        },
        None => Method::default_kernel(d, kernel_seed),
    };
    let attributions = explain(
        &model.state,
        &data,
        &background,
        method,
        model.feature_names.clone(),
    )?;
    let ranking = rank_features(&attributions)?;
    let e = Explained {
        key,
        rows,
        attributions,
        ranking: Some(ranking),
        cached: false,
    };
    e.attributions
        .write_csv(paths.attributions_csv(), &e.rows)?;
    write_text(&paths.attributions_json(), &serde_json::to_string(&e)?)?;
    write_text(
        &paths.ranking_json(),
        &serde_json::to_string_pretty(e.ranking.as_ref().unwrap())?,
    )?;
    Ok(e)
}

pub fn load_explained(paths: &RunPaths) -> Result<Explained> {
    let path = require("explain", paths.attributions_json())?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut e: Explained = serde_json::from_str(&text)?;
    e.ranking = Some(rank_features(&e.attributions)?);
    Ok(e)
}

/// Bins for the rows in `rows`, from model predictions or from the labels.
pub fn ground_truth_bins(
    truth: Truth,
    prepared: &Prepared,
    model: &SavedModel,
    rows: &[usize],
) -> Result<Vec<MaintenanceBin>> {
    let rul: Vec<f64> = match truth {
        Truth::Ann => model
            .state
            .forward(&prepared.table.features().select_rows(rows))?,
        Truth::Piecewise => rows.iter().map(|&i| prepared.labels[i].value()).collect(),
    };
    Ok(rul.into_iter().map(assign_bin).collect())
}

fn write_truth(path: &Path, rows: &[usize], bins: &[MaintenanceBin]) -> Result<()> {
    let mut out = String::from("row,bin,label\n");
    for (r, b) in rows.iter().zip(bins) {
        out.push_str(&format!("{r},{b},{}\n", b.index()));
    }
    write_text(path, &out)
}

/// Feature matrix a case embeds, with its column names.
pub fn case_input(
    case: DataCase,
    prepared: &Prepared,
    explained: &Explained,
    top_k: usize,
) -> Result<(Matrix, Vec<String>)> {
    let ranking = explained.ranking()?;
    let chosen = if case.shap_informed {
        select_top_k(&ranking, top_k)?
    } else {
        explained.attributions.feature_names.clone()
    };
    let columns: Vec<usize> = chosen
        .iter()
        .map(|n| {
            explained
                .attributions
                .feature_names
                .iter()
                .position(|f| f == n)
                .ok_or_else(|| Error::InvalidInput(format!("unknown feature `{n}`")))
        })
        .collect::<Result<_>>()?;
    let m = match case.source {
        Source::RawData => prepared
            .table
            .features()
            .select_rows(&explained.rows)
            .select_columns(&columns),
        Source::ShapValues => explained.attributions.phi.select_columns(&columns),
    };
    Ok((m, chosen))
}

/// Outcome of one data case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub case: DataCase,
    pub features: Vec<String>,
    pub embedding: Embedding2D,
    pub partition: FcmResult,
    pub metrics: ValidationReport,
}

/// Embeds, clusters and scores one case; writes its artifacts.
pub fn run_case(
    case: DataCase,
    config: &RunConfig,
    paths: &RunPaths,
    prepared: &Prepared,
    explained: &Explained,
    truth: &[MaintenanceBin],
) -> Result<CaseReport> {
    let (input, features) = case_input(case, prepared, explained, config.top_k)?;
    let embedding = umap(&input, &config.umap_config())?;
    embedding.write_csv(
        ensure_dir(paths.embedding_csv(case.id))?,
        Some(&explained.rows),
    )?;
    let partition = fcm_fit(&embedding.coords, &config.fcm_config())?;
    partition.write_partition_csv(paths.partition_csv(case.id), Some(&explained.rows))?;
    partition.write_centroids_json(paths.centroids_json(case.id))?;
    let labels: Vec<usize> = truth.iter().map(|b| b.index()).collect();
    let metrics = validate(&labels, &partition.hard_labels())?;
    metrics.write_json(paths.metrics_json(case.id))?;
    Ok(CaseReport {
        case,
        features,
        embedding,
        partition,
        metrics,
    })
}

fn ensure_dir(path: PathBuf) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(path)
}

/// Rows are metrics, columns are cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub cases: Vec<u8>,
    pub rows: Vec<MetricRow>,
    pub nmi_normalization: String,
    pub log_base: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub values: Vec<f64>,
}

impl MetricsTable {
    pub fn from_reports(reports: &[(u8, ValidationReport)]) -> Self {
        let rows = ValidationReport::METRIC_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| MetricRow {
                metric: (*name).to_string(),
                values: reports.iter().map(|(_, r)| r.values()[k]).collect(),
            })
            .collect();
        Self {
            cases: reports.iter().map(|(id, _)| *id).collect(),
            rows,
            nmi_normalization: "arithmetic".into(),
            log_base: "e".into(),
        }
    }

    pub fn value(&self, metric: &str, case: u8) -> Option<f64> {
        let col = self.cases.iter().position(|&c| c == case)?;
        self.rows
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| r.values[col])
    }

    /// CSV with values at four decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.cases {
            out.push_str(&format!(",case{c}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.metric);
            for v in &r.values {
                out.push_str(&format!(",{v:.4}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, paths: &RunPaths) -> Result<()> {
        write_text(&paths.metrics_table_csv(), &self.to_csv())?;
        write_text(
            &paths.metrics_table_json(),
            &serde_json::to_string_pretty(self)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<String>,
    pub seconds: f64,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub id: u8,
    pub source: Source,
    pub shap_informed: bool,
    pub dimensions: usize,
    pub features: Vec<String>,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config: RunConfig,
    pub dataset_fingerprint: String,
    pub retained_features: Vec<String>,
    pub top_features: Vec<String>,
    pub cases: Vec<CaseManifest>,
    pub stages: Vec<StageRecord>,
    pub complete: bool,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &serde_json::to_string_pretty(self)?)
    }
}

/// Everything [`run_all`] produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub table: MetricsTable,
    pub reports: Vec<CaseReport>,
    pub history: Vec<EpochRmse>,
}

struct Recorder<'a> {
    paths: &'a RunPaths,
    manifest: RunManifest,
}

impl Recorder<'_> {
    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<(T, Vec<PathBuf>, bool)>,
    ) -> Result<T> {
        let start = Instant::now();
        match f() {
            Ok((value, outputs, cached)) => {
                self.manifest.stages.push(StageRecord {
                    name: name.into(),
                    outputs: outputs.iter().map(|p| self.paths.relative(p)).collect(),
                    seconds: start.elapsed().as_secs_f64(),
                    cached,
                });
                Ok(value)
            }
            Err(e) => {
                // Keep a record of what did finish; the stage error takes priority.
                let _ = self.manifest.write(&self.paths.manifest_json());
                Err(Error::Stage {
                    stage: name.into(),
                    source: Box::new(e),
                })
            }
        }
    }
}

/// Ingest, train, explain, rank, then every selected case, the table and the manifest.
pub fn run_all(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let cases = config.selected_cases()?;
    let paths = RunPaths::new(&config.out);
    fs::create_dir_all(paths.root()).map_err(|e| Error::io(paths.root(), e))?;
    let mut rec = Recorder {
        paths: &paths,
        manifest: RunManifest {
            seed: config.seed,
            config: config.clone(),
            dataset_fingerprint: String::new(),
            retained_features: Vec::new(),
            top_features: Vec::new(),
            cases: Vec::new(),
            stages: Vec::new(),
            complete: false,
        },
    };

    let prepared = rec.stage("ingest", || {
        let p = ingest(config, &paths)?;
        Ok((
            p,
            vec![paths.table_csv(), paths.table_json(), paths.split_json()],
            false,
        ))
    })?;
    rec.manifest.dataset_fingerprint = prepared.fingerprint.clone();
    rec.manifest.retained_features = prepared.table.feature_names().to_vec();

    let trained = rec.stage("train", || {
        let t = train(config, &paths, &prepared)?;
        let cached = t.cached;
        Ok((
            t,
            vec![
                paths.model_json(),
                paths.history_csv(),
                paths.predictions_csv(),
            ],
            cached,
        ))
    })?;

    let explained = rec.stage("explain", || {
        let e = explain_stage(config, &paths, &prepared, &trained.model)?;
        let cached = e.cached;
        Ok((
            e,
            vec![paths.attributions_csv(), paths.attributions_json()],
            cached,
        ))
    })?;
    let top = rec.stage("rank", || {
        let ranking = explained.ranking()?;
        write_text(
            &paths.ranking_json(),
            &serde_json::to_string_pretty(&ranking)?,
        )?;
        Ok((
            select_top_k(&ranking, config.top_k)?,
            vec![paths.ranking_json()],
            false,
        ))
    })?;
    rec.manifest.top_features = top;

    let truth = rec.stage("truth", || {
        let bins = ground_truth_bins(config.truth, &prepared, &trained.model, &explained.rows)?;
        write_truth(&paths.truth_csv(), &explained.rows, &bins)?;
        Ok((bins, vec![paths.truth_csv()], false))
    })?;

    let mut reports = Vec::new();
    for case in cases {
        let report = rec.stage(&format!("case{}", case.id), || {
            let r = run_case(case, config, &paths, &prepared, &explained, &truth)?;
            let outs = vec![
                paths.embedding_csv(case.id),
                paths.partition_csv(case.id),
                paths.centroids_json(case.id),
                paths.metrics_json(case.id),
            ];
            Ok((r, outs, false))
        })?;
        rec.manifest.cases.push(CaseManifest {
            id: case.id,
            source: case.source,
            shap_informed: case.shap_informed,
            dimensions: report.features.len(),
            features: report.features.clone(),
            n_points: report.embedding.n(),
        });
        reports.push(report);
    }

    let table = rec.stage("table", || {
        let t = MetricsTable::from_reports(
            &reports
                .iter()
                .map(|r| (r.case.id, r.metrics))
                .collect::<Vec<_>>(),
        );
        t.write(&paths)?;
        Ok((
            t,
            vec![paths.metrics_table_csv(), paths.metrics_table_json()],
            false,
        ))
    })?;

    rec.manifest.complete = true;
    rec.manifest.write(&paths.manifest_json())?;
    Ok(RunOutcome {
        manifest: rec.manifest,
        table,
        reports,
        history: trained.history,
    })
}

/// `embed` stage for one case from saved artifacts.
pub fn embed_from_artifacts(
    config: &RunConfig,
    paths: &RunPaths,
    case: DataCase,
) -> Result<Embedding2D> {
    let prepared = load_prepared(paths)?;
    let explained = load_explained(paths)?;
    let (input, _) = case_input(case, &prepared, &explained, config.top_k)?;
    let e = umap(&input, &config.umap_config())?;
    e.write_csv(
        ensure_dir(paths.embedding_csv(case.id))?,
        Some(&explained.rows),
    )?;
    Ok(e)
}

/// `cluster` stage for one case from its saved embedding.
pub fn cluster_from_artifacts(
    config: &RunConfig,
    paths: &RunPaths,
    case: DataCase,
) -> Result<FcmResult> {
    let (embedding, ids) = Embedding2D::read_csv(require("embed", paths.embedding_csv(case.id))?)?;
    let r = fcm_fit(&embedding.coords, &config.fcm_config())?;
    r.write_partition_csv(paths.partition_csv(case.id), Some(&ids))?;
    r.write_centroids_json(paths.centroids_json(case.id))?;
    Ok(r)
}

fn read_hard_labels(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let (mut ids, mut labels) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: "malformed partition row".into(),
        };
        ids.push(rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?);
        labels.push(
            rec.get(rec.len() - 1)
                .ok_or_else(bad)?
                .parse()
                .map_err(|_| bad())?,
        );
    }
    Ok((ids, labels))
}

/// `validate` stage: scores every selected case that has a partition and
/// writes the comparison table.
pub fn validate_from_artifacts(config: &RunConfig, paths: &RunPaths) -> Result<MetricsTable> {
    let prepared = load_prepared(paths)?;
    let model = load_model(paths)?;
    let mut reports = Vec::new();
    for case in config.selected_cases()? {
        let (ids, pred) = read_hard_labels(&require("cluster", paths.partition_csv(case.id))?)?;
        let truth = ground_truth_bins(config.truth, &prepared, &model, &ids)?;
        let labels: Vec<usize> = truth.iter().map(|b| b.index()).collect();
        let r = validate(&labels, &pred)?;
        r.write_json(paths.metrics_json(case.id))?;
        reports.push((case.id, r));
    }
    let table = MetricsTable::from_reports(&reports);
    table.write(paths)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_mapping_is_fixed() {
        let c = DataCase::from_id(3).unwrap();
        assert_eq!(c.source, Source::ShapValues);
        assert!(!c.shap_informed);
        assert_eq!(DataCase::from_id(2).unwrap().dimensions(17, 5), 5);
        assert_eq!(DataCase::from_id(1).unwrap().dimensions(17, 5), 17);
        assert!(DataCase::from_id(5).is_err());
    }

    #[test]
    fn config_text_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply_config_text(
            "# comment\nseed = 7\ntop_k=3\ncases = 1, 2\ntruth=piecewise\nmin-dist = 0.25 # inline\n",
            Path::new("run.cfg"),
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.top_k, 3);
        assert_eq!(c.cases, vec![1, 2]);
        assert_eq!(c.truth, Truth::Piecewise);
        assert_eq!(c.min_dist, 0.25);
        let err = c
            .apply_config_text("bogus = 1\n", Path::new("run.cfg"))
            .unwrap_err();
        assert!(err.to_string().contains("run.cfg:1"), "{err}");
        assert!(parse_cases("5").is_err());
    }

    #[test]
    fn sub_seeds_differ_by_stage() {
        assert_ne!(sub_seed(0, "fcm"), sub_seed(0, "layout"));
        assert_eq!(sub_seed(9, "fcm"), sub_seed(9, "fcm"));
    }

    #[test]
    fn table_csv_has_four_decimals() {
        let r = validate(&[0, 0, 1, 1], &[0, 0, 1, 0]).unwrap();
        let t = MetricsTable::from_reports(&[(1, r), (3, r)]);
        let csv = t.to_csv();
        assert!(csv.starts_with("metric,case1,case3\nARI,"));
        assert_eq!(csv.lines().count(), 10);
        let cell = csv.lines().nth(2).unwrap().split(',').nth(1).unwrap();
        assert_eq!(cell.split('.').nth(1).unwrap().len(), 4);
        assert_eq!(t.value("RI", 3), Some(r.ri));
    }

    #[test]
    fn missing_artifacts_name_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let paths = RunPaths::new(dir.path());
        match load_prepared(&paths) {
            Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "ingest"),
            other => panic!("{other:?}"),
        }
        match load_model(&paths) {
            Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "train"),
            other => panic!("{other:?}"),
        }
    }
}
