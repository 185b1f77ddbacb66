use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{summarize, FitSettings, FittedModel, LibraryKey, ModelKind, ModelLibrary};
use crate::baselines::ArimaxOrder;
use crate::estimators::{PriorConfig, TrainingConfig};
use crate::fleet::{
    cluster_by_elbow, cluster_homes, representative, synth_fleet, Clustering, FleetConfig,
    FleetManifest, HomeMetadata, DEFAULT_RESTARTS,
};
use crate::rcnet::MAX_ORDER;
use crate::seed::derive_seed;
use crate::timeseries::{
    derive_controls, impute, write_controls, write_trace, ControlSeries, Trace,
};
use crate::{Error, Result, SAMPLES_PER_DAY};

pub const EXPERIMENT_CONFIG_VERSION: u32 = 1;

/// Retraining budgets an experiment may request, in days.
pub const RETRAIN_BUDGETS: [usize; 3] = [0, 1, 7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetSource {
    /// Generate the fleet per seed.
    Synthetic(FleetConfig),
    /// Load a fleet manifest; the data is shared by every seed.
    Manifest(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    None,
    CrossHome,
    CrossSeason,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::None => "none",
            Scenario::CrossHome => "cross_home",
            Scenario::CrossSeason => "cross_season",
        }
    }
}

/// How a record's model was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Trained on the home's own data for the season evaluated.
    Scratch,
    /// The source model applied unchanged.
    Direct,
    /// The source model adapted with the home's retraining budget.
    Retrain,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Scratch => "scratch",
            Method::Direct => "direct",
            Method::Retrain => "retrain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSource {
    /// Equipment states recorded with the trace, falling back to derived
    /// ones where none were recorded.
    Recorded,
    /// Control signals re-derived from setpoints and mode.
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterChoice {
    Fixed(usize),
    Elbow { k_max: usize, threshold_pct: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub fleet: FleetSource,
    pub models: Vec<ModelKind>,
    pub order: usize,
    pub train_days: usize,
    pub test_days: usize,
    pub scenario: Scenario,
    /// Target-home budgets for transfer scenarios; 0 is direct transfer.
    pub retrain_days: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Season evaluated (source season for cross-season). Defaults to the
    /// fleet's first season.
    pub season: Option<String>,
    /// Cross-season target. Defaults to the fleet's second season.
    pub target_season: Option<String>,
    pub controls: ControlSource,
    pub clusters: ClusterChoice,
    pub arimax_order: ArimaxOrder,
    pub prior: PriorConfig,
    pub training: TrainingConfig,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: EXPERIMENT_CONFIG_VERSION,
            fleet: FleetSource::Synthetic(FleetConfig::default()),
            models: vec![ModelKind::BnnRc],
            order: 2,
            train_days: 75,
            test_days: 15,
            scenario: Scenario::None,
            retrain_days: vec![0, 1],
            seeds: vec![0],
            season: None,
            target_season: None,
            controls: ControlSource::Recorded,
            clusters: ClusterChoice::Elbow {
                k_max: 10,
                threshold_pct: 5.0,
            },
            arimax_order: ArimaxOrder::default(),
            prior: PriorConfig::default(),
            training: TrainingConfig::default(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != EXPERIMENT_CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported experiment config version {}",
                self.version
            )));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no model kinds selected".into()));
        }
        if self.models.iter().collect::<BTreeSet<_>>().len() != self.models.len() {
            return Err(Error::Config("model kinds must be distinct".into()));
        }
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::Config(format!("order must be in 1..={MAX_ORDER}")));
        }
        if self.train_days == 0 || self.test_days == 0 {
            return Err(Error::Config("train and test days must be positive".into()));
        }
        if let Some(&r) = self
            .retrain_days
            .iter()
            .find(|r| !RETRAIN_BUDGETS.contains(r))
        {
            return Err(Error::Config(format!(
                "retrain days must be one of 0, 1, 7; got {r}"
            )));
        }
        if self.scenario != Scenario::None && self.retrain_days.is_empty() {
            return Err(Error::Config("transfer scenarios need retrain days".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        match self.clusters {
            ClusterChoice::Fixed(0) => {
                return Err(Error::Config("cluster count must be positive".into()))
            }
            ClusterChoice::Elbow {
                k_max,
                threshold_pct,
            } if k_max == 0 || !(threshold_pct > 0.0) => {
                return Err(Error::Config(
                    "elbow needs k_max ≥ 1 and a positive threshold".into(),
                ))
            }
            _ => {}
        }
        if let FleetSource::Synthetic(f) = &self.fleet {
            f.validate()?;
            let needed = self.train_days + self.test_days;
            if let Some(s) = f.seasons.iter().find(|s| s.days < needed) {
                return Err(Error::Config(format!(
                    "season {} has {} days; train + test need {needed}",
                    s.name, s.days
                )));
            }
        }
        if self.scenario == Scenario::CrossSeason
            && self.season.is_some()
            && self.season == self.target_season
        {
            return Err(Error::Config(
                "cross-season source and target must differ".into(),
            ));
        }
        self.training.validate()?;
        Ok(())
    }

    fn settings(&self) -> FitSettings {
        FitSettings {
            order: self.order,
            arimax_order: self.arimax_order,
            prior: self.prior.clone(),
            training: self.training.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRecord {
    pub seed: u64,
    pub home_id: String,
    pub model: ModelKind,
    pub scenario: Scenario,
    pub method: Method,
    /// Home (cross-home) or season (cross-season) the model came from.
    pub source: String,
    /// Season of the test segment.
    pub season: String,
    /// Days of this home's data used for fitting or retraining.
    pub train_days: usize,
    pub rmse: f64,
    pub free_run_rmse: Option<f64>,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Relative to the output directory; empty when nothing was written.
    pub model_file: String,
    pub model_sha256: String,
    /// Hash of the segment the model was last trained on.
    pub train_sha256: String,
    pub test_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRef {
    pub seed: u64,
    pub home_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub model: ModelKind,
    pub scenario: Scenario,
    pub method: Method,
    pub season: String,
    pub train_days: usize,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    pub outliers: Vec<RecordRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub seed: u64,
    pub home_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub seed: u64,
    pub k: usize,
    /// Cluster index to representative home.
    pub representatives: BTreeMap<usize, String>,
    pub clustering: Clustering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub version: u32,
    pub records: Vec<RmseRecord>,
    pub summaries: Vec<GroupSummary>,
    pub exclusions: Vec<Exclusion>,
    pub clusters: Vec<ClusterReport>,
}

impl RmseReport {
    /// RMSE values of one group, in record order.
    pub fn rmse_of(
        &self,
        model: ModelKind,
        method: Method,
        train_days: usize,
    ) -> Vec<(u64, String, f64)> {
        self.records
            .iter()
            .filter(|r| r.model == model && r.method == method && r.train_days == train_days)
            .map(|r| (r.seed, r.home_id.clone(), r.rmse))
            .collect()
    }

    pub fn summary(
        &self,
        model: ModelKind,
        method: Method,
        train_days: usize,
    ) -> Option<&GroupSummary> {
        self.summaries
            .iter()
            .find(|s| s.model == model && s.method == method && s.train_days == train_days)
    }
}

/// Groups records and summarizes each group's RMSE distribution.
pub fn summarize_records(records: &[RmseRecord]) -> Result<Vec<GroupSummary>> {
    let mut groups: BTreeMap<(ModelKind, Scenario, Method, String, usize), Vec<&RmseRecord>> =
        BTreeMap::new();
    for r in records {
        groups
            .entry((
                r.model,
                r.scenario,
                r.method,
                r.season.clone(),
                r.train_days,
            ))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((model, scenario, method, season, train_days), rs)| {
            let values: Vec<f64> = rs.iter().map(|r| r.rmse).collect();
            let s = summarize(&values)?;
            Ok(GroupSummary {
                model,
                scenario,
                method,
                season,
                train_days,
                count: s.count,
                mean: s.mean,
                median: s.median,
                q1: s.q1,
                q3: s.q3,
                iqr: s.iqr,
                min: s.min,
                max: s.max,
                outliers: s
                    .outliers
                    .iter()
                    .map(|&i| RecordRef {
                        seed: rs[i].seed,
                        home_id: rs[i].home_id.clone(),
                    })
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
struct SeasonData {
    trace: Trace,
    controls: ControlSeries,
}

#[derive(Debug, Clone)]
struct HomeData {
    metadata: HomeMetadata,
    seasons: BTreeMap<String, SeasonData>,
}

struct Fleet {
    homes: Vec<HomeData>,
    season_order: Vec<String>,
}

fn slice_controls(c: &ControlSeries, start: usize, len: usize) -> ControlSeries {
    ControlSeries {
        k_heat: c.k_heat[start..start + len].to_vec(),
        k_cool: c.k_cool[start..start + len].to_vec(),
        conflicts: c
            .conflicts
            .iter()
            .filter(|&&i| i >= start && i < start + len)
            .map(|&i| i - start)
            .collect(),
    }
}

/// A contiguous piece of one season with its hash.
struct Segment {
    trace: Trace,
    controls: ControlSeries,
    sha256: String,
}

impl SeasonData {
    fn segment(&self, start: usize, len: usize) -> Result<Segment> {
        let trace = self.trace.window(start, len)?;
        let controls = slice_controls(&self.controls, start, len);
        let mut bytes = Vec::new();
        write_trace(&trace, &mut bytes)?;
        write_controls(&controls, &mut bytes)?;
        Ok(Segment {
            trace,
            controls,
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }

    /// Start of the test segment.
    fn test_start(&self, test_days: usize) -> Result<usize> {
        let test = test_days * SAMPLES_PER_DAY;
        if self.trace.len() < test + SAMPLES_PER_DAY {
            return Err(Error::InsufficientData {
                needed: test + SAMPLES_PER_DAY,
                available: self.trace.len(),
            });
        }
        Ok(self.trace.len() - test)
    }

    /// The `days` days immediately before the test segment.
    fn train(&self, days: usize, test_days: usize) -> Result<Segment> {
        let end = self.test_start(test_days)?;
        let len = days * SAMPLES_PER_DAY;
        if len > end {
            return Err(Error::InsufficientData {
                needed: len + self.trace.len() - end,
                available: self.trace.len(),
            });
        }
        self.segment(end - len, len)
    }

    /// The test segment preceded by `context` samples of history.
    fn test(&self, test_days: usize, context: usize) -> Result<(Segment, String)> {
        let start = self.test_start(test_days)?;
        let ctx = context.min(start);
        if ctx < context {
            return Err(Error::InsufficientData {
                needed: context + self.trace.len() - start,
                available: self.trace.len(),
            });
        }
        let scored = self.segment(start, self.trace.len() - start)?.sha256;
        Ok((
            self.segment(start - ctx, self.trace.len() - start + ctx)?,
            scored,
        ))
    }
}

fn load_fleet(cfg: &ExperimentConfig, seed: u64) -> Result<Fleet> {
    match &cfg.fleet {
        FleetSource::Synthetic(fc) => {
            let fleet = synth_fleet(fc, seed)?;
            let season_order = fc.seasons.iter().map(|s| s.name.clone()).collect();
            let homes = fleet
                .homes
                .into_iter()
                .map(|g| {
                    let seasons = g
                        .traces
                        .into_iter()
                        .map(|(name, trace)| {
                            let controls = match cfg.controls {
                                ControlSource::Recorded => g.controls[&name].clone(),
                                ControlSource::Derived => derive_controls(&trace)?,
                            };
                            Ok((name, SeasonData { trace, controls }))
                        })
                        .collect::<Result<_>>()?;
                    Ok(HomeData {
                        metadata: g.home.metadata,
                        seasons,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Fleet {
                homes,
                season_order,
            })
        }
        FleetSource::Manifest(path) => {
            let manifest = FleetManifest::load(path)?;
            let base = FleetManifest::base_dir(path);
            let traces = manifest.load_traces(&base)?;
            let recorded = manifest.load_controls(&base)?;
            let mut season_order: Vec<String> = Vec::new();
            let mut homes = Vec::with_capacity(manifest.homes.len());
            for ((h, traces), mut recorded) in manifest.homes.iter().zip(traces).zip(recorded) {
                let mut seasons = BTreeMap::new();
                for s in &h.seasons {
                    if !season_order.contains(&s.season) {
                        season_order.push(s.season.clone());
                    }
                }
                for (name, trace) in traces {
                    let trace = if trace.has_missing() {
                        impute(&trace)?
                    } else {
                        trace
                    };
                    let controls = match (cfg.controls, recorded.remove(&name)) {
                        (ControlSource::Recorded, Some(c)) if c.len() == trace.len() => c,
                        (ControlSource::Recorded, Some(_)) => {
                            return Err(Error::Shape(format!(
                                "{}: recorded controls and trace differ in length",
                                h.metadata.home_id
                            )))
                        }
                        _ => derive_controls(&trace)?,
                    };
                    seasons.insert(name, SeasonData { trace, controls });
                }
                homes.push(HomeData {
                    metadata: h.metadata.clone(),
                    seasons,
                });
            }
            homes.sort_by(|a: &HomeData, b| a.metadata.home_id.cmp(&b.metadata.home_id));
            Ok(Fleet {
                homes,
                season_order,
            })
        }
    }
}

/// A fitted model with its serialized form and provenance.
struct Trained {
    model: FittedModel,
    json: String,
    sha256: String,
    file: String,
    train_sha256: String,
    train_samples: usize,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    settings: FitSettings,
    seed: u64,
}

impl Ctx<'_> {
    fn fit_seed(
        &self,
        home: &str,
        season: &str,
        kind: ModelKind,
        method: Method,
        days: usize,
    ) -> u64 {
        derive_seed(
            self.seed,
            &format!("fit/{home}/{season}/{kind}/{}", method.as_str()),
            days as u64,
        )
    }

    fn store(
        &self,
        model: FittedModel,
        home: &str,
        season: &str,
        method: Method,
        days: usize,
        train: &Segment,
    ) -> Result<Trained> {
        let json = serde_json::to_string_pretty(&model)?;
        let sha256 = hex::encode(Sha256::digest(json.as_bytes()));
        let rel = format!(
            "models/seed-{}/{home}/{season}/{}-{}-{days}d.json",
            self.seed,
            model.kind(),
            method.as_str()
        );
        let file = match &self.cfg.output {
            Some(out) => {
                let path = out.join(&rel);
                std::fs::create_dir_all(path.parent().expect("nested path"))?;
                std::fs::write(&path, &json)?;
                rel
            }
            None => String::new(),
        };
        Ok(Trained {
            model,
            json,
            sha256,
            file,
            train_sha256: train.sha256.clone(),
            train_samples: train.trace.len(),
        })
    }

    fn fit(
        &self,
        kind: ModelKind,
        home: &str,
        season: &str,
        data: &SeasonData,
        days: usize,
    ) -> Result<Trained> {
        let seg = data.train(days, self.cfg.test_days)?;
        let seed = self.fit_seed(home, season, kind, Method::Scratch, days);
        let model = FittedModel::fit(kind, &seg.trace, &seg.controls, &self.settings, seed)?;
        self.store(model, home, season, Method::Scratch, days, &seg)
    }

    fn retrain(
        &self,
        source: &Trained,
        home: &str,
        season: &str,
        data: &SeasonData,
        days: usize,
    ) -> Result<Trained> {
        let seg = data.train(days, self.cfg.test_days)?;
        let kind = source.model.kind();
        let seed = self.fit_seed(home, season, kind, Method::Retrain, days);
        let model = source
            .model
            .retrain(&seg.trace, &seg.controls, &self.settings, seed)?;
        self.store(model, home, season, Method::Retrain, days, &seg)
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        trained: &Trained,
        home: &str,
        season: &str,
        method: Method,
        source: &str,
        days: usize,
        data: &SeasonData,
    ) -> Result<RmseRecord> {
        let (seg, scored_hash) = data.test(self.cfg.test_days, trained.model.context())?;
        let eval = trained.model.evaluate(&seg.trace, &seg.controls)?;
        Ok(RmseRecord {
            seed: self.seed,
            home_id: home.to_string(),
            model: trained.model.kind(),
            scenario: self.cfg.scenario,
            method,
            source: source.to_string(),
            season: season.to_string(),
            train_days: days,
            rmse: eval.rmse,
            free_run_rmse: eval.free_run_rmse,
            train_samples: if method == Method::Direct {
                0
            } else {
                trained.train_samples
            },
            test_samples: eval.samples,
            model_file: trained.file.clone(),
            model_sha256: trained.sha256.clone(),
            train_sha256: trained.train_sha256.clone(),
            test_sha256: scored_hash,
        })
    }
}

type HomeOutcome = std::result::Result<Vec<RmseRecord>, Exclusion>;

fn exclusion(seed: u64, home: &str, reason: impl std::fmt::Display) -> Exclusion {
    Exclusion {
        seed,
        home_id: home.to_string(),
        reason: reason.to_string(),
    }
}

fn season_or(cfg: Option<&String>, order: &[String], index: usize) -> Result<String> {
    match cfg {
        Some(s) => Ok(s.clone()),
        None => order
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Config(format!("fleet has no season number {}", index + 1))),
    }
}

fn run_none(ctx: &Ctx, fleet: &Fleet) -> Result<Vec<HomeOutcome>> {
    let season = season_or(ctx.cfg.season.as_ref(), &fleet.season_order, 0)?;
    Ok(fleet
        .homes
        .par_iter()
        .map(|h| {
            let id = h.metadata.home_id.as_str();
            let data = h
                .seasons
                .get(&season)
                .ok_or_else(|| exclusion(ctx.seed, id, format!("no {season} data")))?;
            let run = || -> Result<Vec<RmseRecord>> {
                let mut out = Vec::new();
                for &kind in &ctx.cfg.models {
                    let t = ctx.fit(kind, id, &season, data, ctx.cfg.train_days)?;
                    out.push(ctx.record(
                        &t,
                        id,
                        &season,
                        Method::Scratch,
                        "",
                        ctx.cfg.train_days,
                        data,
                    )?);
                }
                Ok(out)
            };
            run().map_err(|e| exclusion(ctx.seed, id, e))
        })
        .collect())
}

/// Scratch, direct and retrained records for one target home.
fn transfer_records(
    ctx: &Ctx,
    id: &str,
    season: &str,
    data: &SeasonData,
    sources: &[(&Trained, String)],
) -> Result<Vec<RmseRecord>> {
    let days = ctx.cfg.train_days;
    let mut out = Vec::new();
    for (kind, (source, source_name)) in ctx.cfg.models.iter().zip(sources) {
        let own = ctx.fit(*kind, id, season, data, days)?;
        out.push(ctx.record(&own, id, season, Method::Scratch, "", days, data)?);
        for &r in &ctx.cfg.retrain_days {
            if r == 0 {
                out.push(ctx.record(source, id, season, Method::Direct, source_name, 0, data)?);
            } else {
                let t = ctx.retrain(source, id, season, data, r)?;
                out.push(ctx.record(&t, id, season, Method::Retrain, source_name, r, data)?);
            }
        }
    }
    Ok(out)
}

fn run_cross_home(ctx: &Ctx, fleet: &Fleet) -> Result<(Vec<HomeOutcome>, ClusterReport)> {
    let season = season_or(ctx.cfg.season.as_ref(), &fleet.season_order, 0)?;
    let (eligible, missing): (Vec<&HomeData>, Vec<&HomeData>) = fleet
        .homes
        .iter()
        .partition(|h| h.seasons.contains_key(&season));
    let mut outcomes: BTreeMap<String, HomeOutcome> = missing
        .iter()
        .map(|h| {
            let id = h.metadata.home_id.clone();
            (
                id.clone(),
                Err(exclusion(ctx.seed, &id, format!("no {season} data"))),
            )
        })
        .collect();
    let metadata: Vec<HomeMetadata> = eligible.iter().map(|h| h.metadata.clone()).collect();
    if metadata.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cluster_seed = derive_seed(ctx.seed, "cluster", 0);
    let clustering = match ctx.cfg.clusters {
        ClusterChoice::Fixed(k) => cluster_homes(
            &metadata,
            k.min(metadata.len()),
            cluster_seed,
            DEFAULT_RESTARTS,
        )?,
        ClusterChoice::Elbow {
            k_max,
            threshold_pct,
        } => cluster_by_elbow(&metadata, k_max, cluster_seed, threshold_pct)?.clustering,
    };
    let representatives: BTreeMap<usize, String> = (0..clustering.k)
        .map(|c| Ok((c, representative(&clustering, c, &metadata)?)))
        .collect::<Result<_>>()?;
    let by_id: BTreeMap<&str, &HomeData> = eligible
        .iter()
        .map(|h| (h.metadata.home_id.as_str(), *h))
        .collect();

    let rep_models: Vec<(usize, Result<Vec<Trained>>)> = representatives
        .par_iter()
        .map(|(&c, rep)| {
            let data = &by_id[rep.as_str()].seasons[&season];
            let fits = ctx
                .cfg
                .models
                .iter()
                .map(|&kind| ctx.fit(kind, rep, &season, data, ctx.cfg.train_days))
                .collect();
            (c, fits)
        })
        .collect();
    let rep_models: BTreeMap<usize, Result<Vec<Trained>>> = rep_models.into_iter().collect();

    if let Some(out) = &ctx.cfg.output {
        let lib = ModelLibrary::open(out.join(format!("library/seed-{}", ctx.seed)))?;
        for (&c, fits) in &rep_models {
            for t in fits.iter().flatten() {
                let key = LibraryKey {
                    cluster: c,
                    season: season.clone(),
                    kind: t.model.kind(),
                };
                lib.put_bytes(&key, t.json.as_bytes())?;
            }
        }
    }

    let member_outcomes: Vec<(String, HomeOutcome)> = eligible
        .par_iter()
        .map(|h| {
            let id = h.metadata.home_id.as_str();
            let c = clustering.assignments[id];
            let rep = &representatives[&c];
            let outcome = match &rep_models[&c] {
                Err(e) => Err(exclusion(
                    ctx.seed,
                    id,
                    format!("representative {rep} failed: {e}"),
                )),
                Ok(fits) => {
                    let sources: Vec<(&Trained, String)> =
                        fits.iter().map(|t| (t, rep.clone())).collect();
                    transfer_records(ctx, id, &season, &h.seasons[&season], &sources)
                        .map_err(|e| exclusion(ctx.seed, id, e))
                }
            };
            (id.to_string(), outcome)
        })
        .collect();
    outcomes.extend(member_outcomes);
    let report = ClusterReport {
        seed: ctx.seed,
        k: clustering.k,
        representatives,
        clustering,
    };
    Ok((outcomes.into_values().collect(), report))
}

fn run_cross_season(ctx: &Ctx, fleet: &Fleet) -> Result<Vec<HomeOutcome>> {
    let source = season_or(ctx.cfg.season.as_ref(), &fleet.season_order, 0)?;
    let target = match &ctx.cfg.target_season {
        Some(t) => t.clone(),
        None => fleet
            .season_order
            .iter()
            .find(|s| **s != source)
            .cloned()
            .ok_or_else(|| Error::Config("cross-season needs two seasons".into()))?,
    };
    Ok(fleet
        .homes
        .par_iter()
        .map(|h| {
            let id = h.metadata.home_id.as_str();
            let (Some(src), Some(dst)) = (h.seasons.get(&source), h.seasons.get(&target)) else {
                return Err(exclusion(
                    ctx.seed,
                    id,
                    format!("missing {source} or {target} data"),
                ));
            };
            let run = || -> Result<Vec<RmseRecord>> {
                let fits = ctx
                    .cfg
                    .models
                    .iter()
                    .map(|&kind| ctx.fit(kind, id, &source, src, ctx.cfg.train_days))
                    .collect::<Result<Vec<_>>>()?;
                let sources: Vec<(&Trained, String)> =
                    fits.iter().map(|t| (t, source.clone())).collect();
                transfer_records(ctx, id, &target, dst, &sources)
            };
            run().map_err(|e| exclusion(ctx.seed, id, e))
        })
        .collect())
}

/// Runs every seed of the experiment and, when an output directory is set,
/// writes `records.csv`, `summary.json`, `config.json`, model files and (for
/// cross-home runs) the representatives' model library.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RmseReport> {
    cfg.validate()?;
    if let Some(out) = &cfg.output {
        std::fs::create_dir_all(out)?;
    }
    let mut records = Vec::new();
    let mut exclusions = Vec::new();
    let mut clusters = Vec::new();
    for &seed in &cfg.seeds {
        let fleet = load_fleet(cfg, seed)?;
        let ctx = Ctx {
            cfg,
            settings: cfg.settings(),
            seed,
        };
        let outcomes = match cfg.scenario {
            Scenario::None => run_none(&ctx, &fleet)?,
            Scenario::CrossHome => {
                let (o, c) = run_cross_home(&ctx, &fleet)?;
                clusters.push(c);
                o
            }
            Scenario::CrossSeason => run_cross_season(&ctx, &fleet)?,
        };
        for o in outcomes {
            match o {
                Ok(r) => records.extend(r),
                Err(e) => exclusions.push(e),
            }
        }
    }
    records.sort_by(|a, b| {
        (a.seed, &a.home_id, a.model, a.method, a.train_days).cmp(&(
            b.seed,
            &b.home_id,
            b.model,
            b.method,
            b.train_days,
        ))
    });
    exclusions.sort_by(|a, b| (a.seed, &a.home_id).cmp(&(b.seed, &b.home_id)));
    let summaries = if records.is_empty() {
        Vec::new()
    } else {
        summarize_records(&records)?
    };
    let report = RmseReport {
        version: EXPERIMENT_CONFIG_VERSION,
        records,
        summaries,
        exclusions,
        clusters,
    };
    if let Some(out) = &cfg.output {
        write_report(&report, cfg, out)?;
    }
    Ok(report)
}

pub fn write_records<W: std::io::Write>(records: &[RmseRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(source: R) -> Result<Vec<RmseRecord>> {
    csv::Reader::from_reader(source)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    version: u32,
    summaries: &'a [GroupSummary],
    exclusions: &'a [Exclusion],
    clusters: &'a [ClusterReport],
}

fn write_report(report: &RmseReport, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_records(
        &report.records,
        std::fs::File::create(out.join("records.csv"))?,
    )?;
    let summary = SummaryFile {
        version: report.version,
        summaries: &report.summaries,
        exclusions: &report.exclusions,
        clusters: &report.clusters,
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}
