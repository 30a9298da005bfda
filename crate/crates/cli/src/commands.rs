//! The six commands. Every command reads its inputs, processes clips
//! independently on up to `jobs` threads, and writes one manifest at the end.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use geneoh::diffusion::NoiseSchedule;
use geneoh::io::atomic_write;
use geneoh::metrics::{evaluate, mpjpe, MetricsReport};
use geneoh::pipeline::{denoise_sequence, train_stage_models, ModelTrainConfig, StageModels};
use geneoh::rep::extract_generalized_contact_points;
use geneoh::scene::{
    generate_synthetic_sequence, perturb_beta, perturb_gaussian, HandSkeleton, HoiSequence, SurfacePattern,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    sample_seed, DenoiseConfig, EvalConfig, ExportConfig, ExportFormat, GenDataConfig, NoiseMode, PerturbConfig,
    Selection,
};
use crate::error::{CliError, CliResult};
use crate::format::{encode_keypoints, obj_frame, read_sequence, write_json, write_sequence};

pub const MANIFEST: &str = "manifest.json";
pub const LOSSES: &str = "losses.json";
pub const SNAPSHOTS: &str = "snapshots";

pub fn clip_name(i: usize) -> String {
    format!("clip_{i:05}.json")
}

/// Runs `f` over `items` on up to `jobs` scoped threads. Results keep the
/// input order; the error of the lowest failing index wins.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> CliResult<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> CliResult<R> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CliResult<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let workers = jobs.clamp(1, items.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Clip files of a corpus directory: the manifest's list when there is
/// one, otherwise every `*.json` except the manifest, sorted.
pub fn corpus_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let manifest = dir.join(MANIFEST);
    if manifest.exists() {
        let text = std::fs::read_to_string(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", manifest.display())))?;
        let clips = v["clips"]
            .as_array()
            .ok_or_else(|| CliError::Validation(format!("{}: no clip list", manifest.display())))?;
        return clips
            .iter()
            .map(|c| {
                c["file"]
                    .as_str()
                    .map(|f| dir.join(f))
                    .ok_or_else(|| CliError::Validation(format!("{}: clip without file", manifest.display())))
            })
            .collect();
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") && path.file_name().is_some_and(|n| n != MANIFEST) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_corpus(dir: &Path, jobs: usize) -> CliResult<(Vec<PathBuf>, Vec<HoiSequence>)> {
    let files = corpus_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Validation(format!("{} holds no clips", dir.display())));
    }
    let seqs = parallel_map(&files, jobs, |_, p| read_sequence(p))?;
    Ok((files, seqs))
}

fn write_manifest(dir: &Path, command: &str, config: &impl Serialize, clips: Vec<Value>) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "clips": clips,
    });
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn gen_data(cfg: &GenDataConfig, out: &Path, jobs: usize) -> CliResult<Vec<PathBuf>> {
    if cfg.clips == 0 {
        return Err(CliError::Validation("clips must be positive".into()));
    }
    create_dir(out)?;
    let ids: Vec<usize> = (0..cfg.clips).collect();
    let clips = parallel_map(&ids, jobs, |_, &i| {
        let seed = cfg.seed.wrapping_add(i as u64);
        let seq = generate_synthetic_sequence(&cfg.synth, seed).map_err(|e| CliError::from(e).context(&format!("clip {i}")))?;
        let name = clip_name(i);
        write_sequence(&out.join(&name), &seq)?;
        log::info!("generated {name} (seed {seed})");
        Ok(json!({ "file": name, "seed": seed }))
    })?;
    write_manifest(out, "gen-data", cfg, clips)?;
    Ok(ids.iter().map(|&i| out.join(clip_name(i))).collect())
}

pub fn perturb(cfg: &PerturbConfig, input: &Path, out: &Path, jobs: usize) -> CliResult<()> {
    let (files, seqs) = read_corpus(input, jobs)?;
    create_dir(out)?;
    let clips = parallel_map(&seqs, jobs, |i, seq| {
        let seed = cfg.seed.wrapping_add(i as u64);
        let noisy = match cfg.mode {
            NoiseMode::Gaussian => perturb_gaussian(seq, cfg.gaussian, seed),
            NoiseMode::Beta => perturb_beta(seq, cfg.beta, seed),
        }
        .map_err(|e| CliError::from(e).context(&file_name(&files[i])))?;
        let name = file_name(&files[i]);
        write_sequence(&out.join(&name), &noisy)?;
        Ok(json!({ "file": name, "seed": seed, "source": files[i].display().to_string() }))
    })?;
    write_manifest(out, "perturb", cfg, clips)
}

pub fn train(cfg: &ModelTrainConfig, input: &Path, out: &Path, jobs: usize) -> CliResult<()> {
    let (files, corpus) = read_corpus(input, jobs)?;
    log::info!("training on {} clips of {} frames", corpus.len(), corpus[0].frames());
    let (models, losses) = train_stage_models(&corpus, cfg, &NoiseSchedule::default())?;
    create_dir(out)?;
    models.save(out)?;
    let summary = |l: &[f64]| {
        json!({
            "initial": l.first(),
            "final": l.last(),
            "losses": l,
        })
    };
    write_json(
        &out.join(LOSSES),
        &json!({
            "motion": summary(&losses.motion),
            "spatial": summary(&losses.spatial),
            "temporal": summary(&losses.temporal),
        }),
    )?;
    let clips = files.iter().map(|f| json!({ "file": f.display().to_string() })).collect();
    write_manifest(out, "train", cfg, clips)
}

/// The chosen sample of one clip.
#[derive(Debug, Clone, Serialize)]
pub struct DenoiseRecord {
    pub file: String,
    pub sample: usize,
    pub seed: u64,
    /// MPJPE (mm) of every sample's final trajectory to the noisy input.
    pub distances_to_input: Vec<f64>,
}

pub fn denoise(cfg: &DenoiseConfig, input: &Path, models: &Path, out: &Path, jobs: usize) -> CliResult<Vec<DenoiseRecord>> {
    if cfg.num_samples == 0 {
        return Err(CliError::Validation("num_samples must be positive".into()));
    }
    let models = StageModels::load(models)?;
    cfg.stage.validate(&models.schedule)?;
    let (files, seqs) = read_corpus(input, jobs)?;
    create_dir(&out.join(SNAPSHOTS))?;
    let records = parallel_map(&seqs, jobs, |i, noisy| {
        let name = file_name(&files[i]);
        let mut best = None;
        let mut distances = Vec::with_capacity(cfg.num_samples);
        for s in 0..cfg.num_samples {
            let seed = sample_seed(cfg.seed, i, s);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let result = denoise_sequence(noisy, &models, &cfg.stage, &mut rng)
                .map_err(|e| CliError::from(e).context(&name))?;
            let d = mpjpe(&result.keypoints, &noisy.keypoints)?;
            distances.push(d);
            let better = match (&best, cfg.select) {
                (None, _) => true,
                (Some((_, _, bd, _)), Selection::Closest) => d < *bd,
                (Some(_), Selection::First) => false,
            };
            if better {
                best = Some((s, seed, d, result));
            }
        }
        let (sample, seed, _, result) = best.expect("at least one sample");
        write_sequence(&out.join(&name), &result.sequence(noisy)?)?;
        let stem = name.trim_end_matches(".json");
        for (k, kps) in result.stages().iter().enumerate() {
            let snap = noisy.with_keypoints(kps.to_vec())?;
            write_sequence(&out.join(SNAPSHOTS).join(format!("{stem}.stage{}.json", k + 1)), &snap)?;
        }
        log::info!("denoised {name} (sample {sample})");
        Ok(DenoiseRecord {
            file: name,
            sample,
            seed,
            distances_to_input: distances,
        })
    })?;
    let clips = records.iter().map(|r| serde_json::to_value(r).expect("plain record")).collect();
    write_manifest(out, "denoise", cfg, clips)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub file: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    /// Median of every metric over the rows that report it.
    pub median: std::collections::BTreeMap<String, f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(rows: Vec<EvalRow>) -> EvalTable {
    let mut columns: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for r in &rows {
        for (name, v) in r.metrics.values() {
            columns.entry(name.to_string()).or_default().push(v);
        }
    }
    let median = columns
        .into_iter()
        .filter_map(|(k, v)| median(&v).map(|m| (k, m)))
        .collect();
    EvalTable { rows, median }
}

/// Metrics of every clip in `pred`, against the same-named clip in `gt`
/// when given.
pub fn eval(cfg: &EvalConfig, pred: &Path, gt: Option<&Path>, out: &Path, jobs: usize) -> CliResult<EvalTable> {
    let files = corpus_files(pred)?;
    if files.is_empty() {
        return Err(CliError::Validation(format!("{} holds no clips", pred.display())));
    }
    let rows = parallel_map(&files, jobs, |_, path| {
        let name = file_name(path);
        let p = read_sequence(path)?;
        let g = gt.map(|dir| read_sequence(&dir.join(&name))).transpose()?;
        let reference = g.as_ref().unwrap_or(&p);
        let contacts = extract_generalized_contact_points(reference, &cfg.contact, cfg.contact_seed)?;
        let metrics = evaluate(&p, g.as_ref(), &contacts, &cfg.options).map_err(|e| CliError::from(e).context(&name))?;
        Ok(EvalRow { file: name, metrics })
    })?;
    let table = summarize(rows);
    write_json(out, &table)?;
    Ok(table)
}

/// OBJ frames into directory `out`, or one flat binary file at `out`.
pub fn export(cfg: &ExportConfig, input: &Path, out: &Path) -> CliResult<usize> {
    let seq = read_sequence(input)?;
    match cfg.format {
        ExportFormat::Bin => {
            atomic_write(out, &encode_keypoints(&seq.keypoints))?;
            Ok(1)
        }
        ExportFormat::Obj => {
            create_dir(out)?;
            let skeleton = HandSkeleton::new();
            let pattern = SurfacePattern::new(&skeleton, cfg.hand_density)?;
            for (k, (kp, pose)) in seq.keypoints.iter().zip(&seq.object_poses).enumerate() {
                let hand = pattern.place_keypoints(&skeleton, kp);
                let object: Vec<_> = seq.object.points().iter().map(|p| pose.apply(p)).collect();
                let path = out.join(format!("frame_{k:04}.obj"));
                atomic_write(&path, obj_frame(&hand, &object).as_bytes())?;
            }
            Ok(seq.frames())
        }
    }
}
