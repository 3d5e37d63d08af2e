//! Size and wall-clock comparison of the composed explanation against the
//! LIME saliency baseline over square grids of increasing side.

use std::path::{Path, PathBuf};
use std::time::Instant;

use advice_core::desk;
use advice_core::explain::{
    adesse_size, baseline_size, explanation_size, generate_adesse, generate_baseline, AnyExplanation, ExplainConfig,
    ExplainError,
};
use advice_core::grid::{GridError, GridSpec};
use advice_core::nn::{NnError, QNet, TrainConfig};
use advice_core::predictor::{fire_desk_config, Domain, PredictError, Predictor, StateRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SIZES: [usize; 4] = [10, 20, 40, 80];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("missing model checkpoint {}", .0.display())]
    MissingModel(PathBuf),
    #[error("loading {}: {source}", path.display())]
    Load { path: PathBuf, source: NnError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("{domain:?} {side}x{side}: {explainer:?} size {got}, expected {want}")]
    SizeMismatch {
        domain: Domain,
        side: usize,
        explainer: Explainer,
        got: usize,
        want: usize,
    },
    #[error("runs must be at least 1")]
    NoRuns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Explainer {
    Adesse,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSource {
    Trained,
    RandomInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub domain: Domain,
    pub grid_size: usize,
    pub explainer: Explainer,
    pub size: usize,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub runs: usize,
    /// Perturbation budget; empty for the composed explanation.
    pub lime_samples: Option<usize>,
    pub models: ModelSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub host: String,
    pub seed: u64,
    pub timestamp: String,
    pub parallelism: usize,
    pub version: String,
}

impl Fingerprint {
    pub fn capture(seed: u64) -> Self {
        let host = std::fs::read_to_string("/proc/sys/kernel/hostname")
            .ok()
            .or_else(|| std::env::var("HOSTNAME").ok())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "unknown".into());
        Self {
            host,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339(),
            parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub fingerprint: Fingerprint,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<BenchRow>, csv::Error> {
        csv::Reader::from_reader(r).deserialize().collect()
    }

    pub fn row(&self, domain: Domain, grid_size: usize, explainer: Explainer) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.domain == domain && r.grid_size == grid_size && r.explainer == explainer)
    }

    /// Plain-text table, one line per row.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<9} {:>5} {:<9} {:>7} {:>11} {:>10} {:>5} {:>6}  {}\n",
            "domain", "grid", "explainer", "size", "mean_s", "std_s", "runs", "lime", "models"
        );
        for r in &self.rows {
            let lime = r.lime_samples.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
            let models = match r.models {
                ModelSource::Trained => "trained",
                ModelSource::RandomInit => "random-init",
            };
            s.push_str(&format!(
                "{:<9} {:>5} {:<9} {:>7} {:>11.5} {:>10.5} {:>5} {:>6}  {}\n",
                r.domain.as_str(),
                format!("{0}x{0}", r.grid_size),
                match r.explainer {
                    Explainer::Adesse => "adesse",
                    Explainer::Baseline => "lime",
                },
                r.size,
                r.mean_time_s,
                r.std_time_s,
                r.runs,
                lime,
                models
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub domains: Vec<Domain>,
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    /// Fixed LIME budget; `None` uses [`default_lime_samples`].
    pub lime_samples: Option<usize>,
    /// Directory of trained checkpoints; `None` benchmarks random-init models.
    pub models: Option<PathBuf>,
    pub explain: ExplainConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            domains: vec![Domain::Taxi, Domain::Wildfire],
            sizes: DEFAULT_SIZES.to_vec(),
            runs: 10,
            seed: 0,
            lime_samples: None,
            models: None,
            explain: ExplainConfig::default(),
        }
    }
}

/// LIME budget for a grid side; shrinks as the input grows so the largest
/// grids finish in minutes.
pub fn default_lime_samples(side: usize) -> usize {
    match side {
        0..=10 => 1000,
        11..=20 => 500,
        21..=40 => 200,
        _ => 100,
    }
}

/// Checkpoint paths for one domain and grid side inside a model directory.
pub fn model_paths(dir: &Path, domain: Domain, side: usize) -> (PathBuf, PathBuf) {
    let stem = format!("{}-{side}", domain.as_str());
    (dir.join(format!("{stem}-predictor.ckpt")), dir.join(format!("{stem}-qnet.ckpt")))
}

fn load_checked<M>(path: &Path, load: impl Fn(&Path) -> Result<M, NnError>) -> Result<M, BenchError> {
    if !path.is_file() {
        return Err(BenchError::MissingModel(path.to_path_buf()));
    }
    load(path).map_err(|source| BenchError::Load {
        path: path.to_path_buf(),
        source,
    })
}

fn models_for(
    config: &BenchConfig,
    domain: Domain,
    side: usize,
) -> Result<(Predictor<f32>, QNet<f32>, ModelSource), BenchError> {
    if let Some(dir) = &config.models {
        let (pp, qp) = model_paths(dir, domain, side);
        let p = load_checked(&pp, Predictor::<f64>::load)?;
        let q = load_checked(&qp, QNet::<f64>::load)?;
        return Ok((p.cast(), q.cast(), ModelSource::Trained));
    }
    let (train, qcfg) = match domain {
        Domain::Taxi => (TrainConfig::taxi(), desk::taxi_qnet_config()),
        Domain::Wildfire => (fire_desk_config(), desk::wildfire_qnet_config()),
    };
    let p = Predictor::untrained(domain, &train)?;
    let q = QNet::new(qcfg, config.seed)?;
    Ok((p, q, ModelSource::RandomInit))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Times both explainers on `runs` fresh states per domain and grid side.
/// `progress` sees each row as it completes.
pub fn run_benchmark(config: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchReport, BenchError> {
    if config.runs == 0 {
        return Err(BenchError::NoRuns);
    }
    let mut rows = Vec::new();
    for &domain in &config.domains {
        for &side in &config.sizes {
            let grid = GridSpec::square(side)?;
            let (predictor, model, source) = models_for(config, domain, side)?;
            let lime = config.lime_samples.unwrap_or_else(|| default_lime_samples(side));
            let taxi = (domain == Domain::Taxi).then(|| desk::taxi_world(grid, config.seed));
            let fire = (domain == Domain::Wildfire).then(|| desk::wildfire_env(grid));
            let want = [adesse_size(grid), baseline_size(domain, grid)];
            let mut times = [Vec::new(), Vec::new()];
            let mut sizes = [0, 0];

            for run in 0..config.runs {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed + run as u64);
                let taxi_state = taxi.as_ref().map(|w| w.env.new_episode(&mut rng));
                let fire_state = fire.as_ref().map(|e| e.new_episode(&mut rng));
                let state = match (&taxi_state, &fire_state) {
                    (Some(s), _) => StateRef::Taxi(s, &taxi.as_ref().unwrap().ctx),
                    (_, Some(s)) => StateRef::Wildfire(s),
                    _ => unreachable!("one environment per domain"),
                };
                let mut explain = config.explain.clone();
                explain.seed = config.seed + run as u64;

                let t = Instant::now();
                let a = generate_adesse(&predictor, &model, state, &explain)?;
                times[0].push(t.elapsed().as_secs_f64());
                sizes[0] = explanation_size(AnyExplanation::Adesse(&a));

                let t = Instant::now();
                let b = generate_baseline(&predictor, &model, state, lime, explain.seed)?;
                times[1].push(t.elapsed().as_secs_f64());
                sizes[1] = explanation_size(AnyExplanation::Baseline(&b));
            }

            for (k, explainer) in [Explainer::Adesse, Explainer::Baseline].into_iter().enumerate() {
                if sizes[k] != want[k] {
                    return Err(BenchError::SizeMismatch {
                        domain,
                        side,
                        explainer,
                        got: sizes[k],
                        want: want[k],
                    });
                }
                let (mean, std) = mean_std(&times[k]);
                let row = BenchRow {
                    domain,
                    grid_size: side,
                    explainer,
                    size: sizes[k],
                    mean_time_s: mean,
                    std_time_s: std,
                    runs: config.runs,
                    lime_samples: (explainer == Explainer::Baseline).then_some(lime),
                    models: source,
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(BenchReport {
        fingerprint: Fingerprint::capture(config.seed),
        rows,
    })
}
