//! Monte Carlo evaluation: random placements per (range, noise) cell, the
//! full pipeline on each, per-trial CSV rows and an aggregate summary.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    azimuth_difference, octant_of, true_azimuth_elevation, HydrophoneArray, PingerSource, Scenario, Vec3,
    DEFAULT_SOUND_SPEED,
};
use crate::pipeline::{run_localization, PipelineError, PipelineParams};
use crate::simulator::{add_noise, render_clean, to_recording, ChannelModel, NoiseSpec};

/// Azimuth error charged to a trial that produced no estimate.
pub const FAILED_TRIAL_ERROR: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    Noiseless,
    Calibrated,
}

/// A noise cell: either a named preset or an SNR in dB of white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevel {
    SnrDb(f64),
    Preset(NoisePreset),
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseLevel::SnrDb(db) => write!(f, "{db}"),
            NoiseLevel::Preset(NoisePreset::Noiseless) => f.write_str("inf"),
            NoiseLevel::Preset(NoisePreset::Calibrated) => f.write_str("calibrated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ranges: Vec<f64>,
    pub snrs: Vec<NoiseLevel>,
    pub trials_per_cell: usize,
    pub seed: u64,
    /// Placements draw elevation uniformly from ±this, degrees.
    pub max_elevation_deg: f64,
    /// A trial succeeds when converged with azimuth error below this.
    pub success_threshold_deg: f64,
    /// Length of each simulated recording; one ping fits in it.
    pub record_duration: f64,
    pub array: HydrophoneArray,
    pub front_end: ChannelModel,
    pub sample_rate: f64,
    pub sound_speed: f64,
    pub pipeline: PipelineParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ranges: vec![5.0, 10.0, 20.0, 30.0],
            snrs: vec![NoiseLevel::SnrDb(0.0), NoiseLevel::SnrDb(20.0)],
            trials_per_cell: 50,
            seed: 0,
            max_elevation_deg: 60.0,
            success_threshold_deg: 5.0,
            record_duration: 0.05,
            array: HydrophoneArray::default(),
            front_end: ChannelModel::default(),
            sample_rate: 500_000.0,
            sound_speed: DEFAULT_SOUND_SPEED,
            pipeline: PipelineParams::default(),
        }
    }
}

impl EvalConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be at least 1".into());
        }
        if self.ranges.is_empty() || self.snrs.is_empty() {
            return bad("ranges and snrs must be non-empty".into());
        }
        if self.ranges.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return bad("ranges must be positive".into());
        }
        if self
            .snrs
            .iter()
            .any(|s| matches!(s, NoiseLevel::SnrDb(db) if !db.is_finite()))
        {
            return bad("snr values must be finite".into());
        }
        if !(0.0..=90.0).contains(&self.max_elevation_deg) {
            return bad("max_elevation_deg must lie in [0, 90]".into());
        }
        let latest = self.ranges.iter().fold(0.0f64, |m, r| m.max(*r)) / self.sound_speed;
        let needed = latest + PingerSource::at(Vec3::ZERO).ping_duration + 0.01;
        if self.record_duration < needed {
            return bad(format!(
                "record_duration {} s is too short for the farthest range (needs {needed:.4} s)",
                self.record_duration
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub range_m: f64,
    pub snr_db: String,
    pub true_az_deg: f64,
    pub est_az_deg: Option<f64>,
    pub az_err_deg: f64,
    pub octant_true: String,
    pub octant_guess: Option<String>,
    pub converged: bool,
    pub objective: Option<f64>,
    pub iters: Option<usize>,
}

impl TrialRow {
    pub fn detected(&self) -> bool {
        self.est_az_deg.is_some()
    }

    pub fn octant_correct(&self) -> bool {
        self.octant_guess.as_deref() == Some(self.octant_true.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub trials: usize,
    pub success_count: usize,
    pub success_fraction: f64,
    pub detected_fraction: f64,
    pub octant_accuracy: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl ErrorStats {
    fn of(rows: &[&TrialRow], threshold: f64) -> Self {
        let n = rows.len();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let success_count = rows.iter().filter(|r| r.converged && r.az_err_deg < threshold).count();
        let mut errs: Vec<f64> = rows.iter().map(|r| r.az_err_deg).collect();
        errs.sort_by(f64::total_cmp);
        Self {
            trials: n,
            success_count,
            success_fraction: frac(success_count),
            detected_fraction: frac(rows.iter().filter(|r| r.detected()).count()),
            octant_accuracy: frac(rows.iter().filter(|r| r.octant_correct()).count()),
            p50: percentile(&errs, 0.5),
            p90: percentile(&errs, 0.9),
            max: errs.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub range_m: f64,
    pub snr_db: String,
    #[serde(flatten)]
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    #[serde(flatten)]
    pub overall: ErrorStats,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOutput {
    pub rows: Vec<TrialRow>,
    pub summary: MonteCarloSummary,
}

/// Linear interpolation between order statistics of sorted `values`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Pinger position for one trial, relative to the precise-quad centroid.
pub fn placement(rng: &mut impl Rng, range: f64, max_elevation_deg: f64, centroid: Vec3) -> Vec3 {
    let az = rng.gen_range(0.0..360.0f64).to_radians();
    let el = if max_elevation_deg > 0.0 {
        rng.gen_range(-max_elevation_deg..=max_elevation_deg).to_radians()
    } else {
        0.0
    };
    centroid + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * range
}

struct Trial {
    index: usize,
    range: f64,
    level: NoiseLevel,
}

fn run_trial(cfg: &EvalConfig, trial: &Trial) -> Result<TrialRow, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial.index as u64);
    let centroid = cfg.array.precise_centroid();
    let position = placement(&mut rng, trial.range, cfg.max_elevation_deg, centroid);
    let noise_seed: u64 = rng.gen();

    let mut pinger = PingerSource::at(position);
    pinger.repetition_interval = cfg.record_duration;
    let scenario = Scenario {
        array: cfg.array.clone(),
        pinger,
        sound_speed: cfg.sound_speed,
        sample_rate: cfg.sample_rate,
        record_duration: cfg.record_duration,
        noise: NoiseSpec::silent(),
        front_end: cfg.front_end.clone(),
        seed: noise_seed,
    };
    let clean = render_clean(&scenario)?;
    let noise = match trial.level {
        NoiseLevel::Preset(NoisePreset::Noiseless) => NoiseSpec::silent(),
        NoiseLevel::Preset(NoisePreset::Calibrated) => NoiseSpec::default(),
        NoiseLevel::SnrDb(db) => NoiseSpec::white(white_sigma_for_snr(&scenario, &clean, db, &cfg.pipeline)?),
    };
    let recording = add_noise(&to_recording(cfg.sample_rate, clean)?, &noise, noise_seed)?;

    let (true_az, _) = true_azimuth_elevation(position - centroid).map_err(|e| PipelineError::Config(e.to_string()))?;
    let params = PipelineParams {
        sound_speed: cfg.sound_speed,
        ..cfg.pipeline.clone()
    };
    let mut row = TrialRow {
        trial: trial.index,
        range_m: trial.range,
        snr_db: trial.level.to_string(),
        true_az_deg: true_az,
        est_az_deg: None,
        az_err_deg: FAILED_TRIAL_ERROR,
        octant_true: octant_of(position - cfg.array.coarse_centroid()).to_string(),
        octant_guess: None,
        converged: false,
        objective: None,
        iters: None,
    };
    match run_localization(&recording, &cfg.array, &params) {
        Ok(run) => {
            let first = &run.estimates[0];
            row.est_az_deg = Some(first.result.azimuth);
            row.az_err_deg = azimuth_difference(first.result.azimuth, true_az);
            row.octant_guess = Some(first.report.octant_guess.clone());
            row.converged = first.result.converged;
            row.objective = Some(first.result.objective);
            row.iters = Some(first.result.iterations);
        }
        Err(PipelineError::NoPing) => {}
        Err(e) => return Err(e),
    }
    Ok(row)
}

/// White-noise sigma giving `snr_db`: burst RMS on the nearest hydrophone's
/// clean channel over the noise RMS after the pipeline's bandpass.
fn white_sigma_for_snr(
    scenario: &Scenario,
    clean: &[Vec<f64>],
    snr_db: f64,
    params: &PipelineParams,
) -> Result<f64, PipelineError> {
    let positions = scenario.array.positions_by_channel();
    let p = scenario.pinger.position;
    let nearest = (0..positions.len())
        .min_by(|&a, &b| p.distance(positions[a]).total_cmp(&p.distance(positions[b])))
        .unwrap_or(0);
    let fs = scenario.sample_rate;
    let start = (p.distance(positions[nearest]) / scenario.sound_speed * fs).ceil() as usize;
    let len = (scenario.pinger.ping_duration * fs).round() as usize;
    let burst = &clean[nearest][start.min(clean[nearest].len())..(start + len).min(clean[nearest].len())];
    let burst_rms = (burst.iter().map(|v| v * v).sum::<f64>() / burst.len().max(1) as f64).sqrt();
    let gain = params.filter.design(fs)?.noise_power_gain(4096);
    Ok(burst_rms / 10f64.powf(snr_db / 20.0) / gain.sqrt())
}

/// Runs every cell; rows come back in trial order regardless of scheduling.
pub fn monte_carlo(cfg: &EvalConfig) -> Result<MonteCarloOutput, PipelineError> {
    cfg.check()?;
    let mut trials = Vec::new();
    for &range in &cfg.ranges {
        for &level in &cfg.snrs {
            for _ in 0..cfg.trials_per_cell {
                trials.push(Trial {
                    index: trials.len(),
                    range,
                    level,
                });
            }
        }
    }
    let rows = trials
        .par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(cfg, &rows);
    Ok(MonteCarloOutput { rows, summary })
}

pub fn summarize(cfg: &EvalConfig, rows: &[TrialRow]) -> MonteCarloSummary {
    let all: Vec<&TrialRow> = rows.iter().collect();
    let mut cells = Vec::new();
    for &range in &cfg.ranges {
        for level in &cfg.snrs {
            let label = level.to_string();
            let members: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| r.range_m == range && r.snr_db == label)
                .collect();
            cells.push(CellSummary {
                range_m: range,
                snr_db: label,
                stats: ErrorStats::of(&members, cfg.success_threshold_deg),
            });
        }
    }
    MonteCarloSummary {
        overall: ErrorStats::of(&all, cfg.success_threshold_deg),
        cells,
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "trial",
    "range_m",
    "snr_db",
    "true_az_deg",
    "est_az_deg",
    "az_err_deg",
    "octant_true",
    "octant_guess",
    "converged",
    "objective",
    "iters",
];

/// Trial rows, then one `summary` row: `az_err_deg` holds the overall p50,
/// `octant_guess` the octant accuracy, `converged` the success fraction and
/// `iters` the trial count.
pub fn write_csv<W: Write>(out: &MonteCarloOutput, w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in &out.rows {
        wr.write_record([
            r.trial.to_string(),
            r.range_m.to_string(),
            r.snr_db.clone(),
            format!("{:.6}", r.true_az_deg),
            opt(r.est_az_deg.map(|v| format!("{v:.6}"))),
            format!("{:.6}", r.az_err_deg),
            r.octant_true.clone(),
            opt(r.octant_guess.clone()),
            r.converged.to_string(),
            opt(r.objective.map(|v| format!("{v:e}"))),
            opt(r.iters.map(|v| v.to_string())),
        ])?;
    }
    let s = &out.summary.overall;
    wr.write_record([
        "summary".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        format!("{:.6}", s.p50),
        String::new(),
        format!("{:.6}", s.octant_accuracy),
        format!("{:.6}", s.success_fraction),
        String::new(),
        s.trials.to_string(),
    ])?;
    wr.flush()?;
    Ok(())
}
