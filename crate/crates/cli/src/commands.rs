//! Subcommand implementations. Every command reads its inputs from the
//! output tree of the previous one, so the stages can be rerun separately.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use pad_core::corpus::{load_manifest, make_protocol_split, synth_corpus, CorpusError, DatasetManifest, Label, ProtocolSplit, SampleRecord, SplitPlan};
use pad_core::detector::{score_csv, Detector, ModelBundle, ScoreRow};
use pad_core::eval::plots::{pca_2d, plot_histograms, plot_roc, plot_scatter};
use pad_core::eval::{benchmark_speed, export_features, per_material_report, roc_points, Provenance, ScoreTable};
use pad_core::nnkit::{Checkpoint, NnError};
use pad_core::par;
use pad_core::pipeline::{assemble_bundle, score_all, train_model, vae_tau, ModeSpecs, ModelKind};
use pad_core::preprocess::{extract_roi_triplet, Calibration, CaptureTriplet, Image, RoiTriplet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{code, CliError, OrExit};
use crate::Subset;

/// More than this fraction of skipped samples fails preprocessing.
const MAX_SKIP_FRACTION: f64 = 0.10;

pub struct Context {
    pub cfg: RunConfig,
    pub config_hash: String,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub calibration: Calibration,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    config_hash: String,
    manifest_hash: String,
    split: ProtocolSplit,
}

#[derive(Debug, Serialize, Deserialize)]
struct Skip {
    id: String,
    reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SkipFile {
    n_records: usize,
    n_skipped: usize,
    skipped: Vec<Skip>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoresMeta {
    config_hash: String,
    manifest_hash: String,
    bundle_hash: String,
    seed: u64,
    subset: String,
    n_rows: usize,
    /// Subset members without an ROI (skipped at preprocessing).
    n_missing_roi: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TauFile {
    vae_tau: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::new(code::FAILURE, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::new(code::FAILURE, format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).or_exit(code::FAILURE)?;
    write(path, text + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, code: i32, hint: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new(code, format!("{}: {e} ({hint})", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(code, format!("{}: {e}", path.display())))
}

fn corpus_error(e: CorpusError) -> CliError {
    let c = match e {
        CorpusError::Io(_) => code::FAILURE,
        _ => code::CONFIG,
    };
    CliError::new(c, e.to_string())
}

fn train_error(kind: ModelKind, e: NnError) -> CliError {
    let c = match e {
        NnError::Config(_) | NnError::OneClassViolation(_) | NnError::EmptyData(_) => code::CONFIG,
        _ => code::TRAINING,
    };
    CliError::new(c, format!("{}: {e}", kind.name()))
}

fn bundle_hash(b: &ModelBundle) -> String {
    let mut h = Sha256::new();
    for ck in b.checkpoints() {
        h.update(ck.weights_hash().as_bytes());
    }
    h.update(b.vae_tau.to_le_bytes());
    hex::encode(h.finalize())
}

fn load_capture(m: &DatasetManifest, r: &SampleRecord) -> Result<CaptureTriplet, pad_core::preprocess::PreprocessError> {
    Ok(CaptureTriplet {
        direct: Image::load_png(m.resolve(&r.path_direct))?,
        raw: Image::load_png(m.resolve(&r.path_raw))?,
        processed: Image::load_png(m.resolve(&r.path_processed))?,
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Context {
    pub fn new(config_path: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(config_path)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let base = config_path.parent().unwrap_or(Path::new("")).to_path_buf();
        let out_dir = match std::env::var_os("PAD_OUT") {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => resolve(&base, &cfg.paths.output_root),
        };
        let data_dir = match &cfg.paths.data_root {
            Some(p) => resolve(&base, p),
            None => out_dir.join("data"),
        };
        let calibration = match &cfg.calibration {
            Some(p) => {
                let c: Calibration = read_json(&resolve(&base, p), code::CONFIG, "calibration file")?;
                c.validate().or_exit(code::CONFIG)?;
                c
            }
            None => Calibration::identity(),
        };
        let config_hash = sha256_hex(serde_json::to_string(&cfg).or_exit(code::FAILURE)?.as_bytes());
        Ok(Self {
            cfg,
            config_hash,
            data_dir,
            out_dir,
            calibration,
        })
    }

    fn manifest_path(&self) -> PathBuf {
        self.data_dir.join("manifest.jsonl")
    }

    fn manifest(&self) -> Result<DatasetManifest, CliError> {
        let path = self.manifest_path();
        if !path.exists() {
            return Err(CliError::config(format!("{} not found; run `pad synth` or set paths.data_root", path.display())));
        }
        load_manifest(&path).map_err(corpus_error)
    }

    fn manifest_hash(&self) -> Result<String, CliError> {
        let path = self.manifest_path();
        let bytes = fs::read(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Ok(sha256_hex(&bytes))
    }

    fn roi_dir(&self) -> PathBuf {
        self.out_dir.join("roi")
    }

    fn roi_paths(&self, id: &str) -> [PathBuf; 4] {
        let d = self.roi_dir();
        ["direct.png", "raw.png", "processed.png", "roi.json"].map(|s| d.join(format!("{id}.{s}")))
    }

    fn skipped_ids(&self) -> Result<HashSet<String>, CliError> {
        let f: SkipFile = read_json(&self.roi_dir().join("skips.json"), code::PREPROCESS, "run `pad preprocess` first")?;
        Ok(f.skipped.into_iter().map(|s| s.id).collect())
    }

    fn load_roi(&self, id: &str) -> Result<RoiTriplet, CliError> {
        let [d, r, p, _] = self.roi_paths(id);
        let load = |path: &Path| Image::load_png(path).or_exit(code::PREPROCESS);
        let roi = RoiTriplet {
            direct: load(&d)?,
            raw: load(&r)?,
            processed: load(&p)?,
        };
        roi.validate().or_exit(code::PREPROCESS)?;
        Ok(roi)
    }

    /// ROIs of `ids`, dropping those skipped at preprocessing.
    fn load_rois<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Result<Vec<(String, RoiTriplet)>, CliError> {
        let skipped = self.skipped_ids()?;
        let kept: Vec<&String> = ids.into_iter().filter(|id| !skipped.contains(*id)).collect();
        par::map_slice(&kept, |id| self.load_roi(id).map(|r| ((*id).clone(), r)))
            .into_iter()
            .collect()
    }

    fn split_file(&self) -> Result<SplitFile, CliError> {
        read_json(&self.out_dir.join("split.json"), code::CONFIG, "run `pad split` first")
    }

    /// The split after checking it against the current manifest.
    fn checked_split(&self, m: &DatasetManifest) -> Result<ProtocolSplit, CliError> {
        let f = self.split_file()?;
        if f.manifest_hash != self.manifest_hash()? {
            return Err(CliError::config("split.json was built from a different manifest; rerun `pad split`"));
        }
        f.split.check(m).map_err(|e| CliError::config(format!("split.json: {e}")))?;
        Ok(f.split)
    }

    fn bundle(&self) -> Result<ModelBundle, CliError> {
        ModelBundle::load(&self.out_dir).or_exit(code::BUNDLE)
    }

    pub fn synth(&self) -> Result<(), CliError> {
        let s = self
            .cfg
            .synth_config()
            .ok_or_else(|| CliError::config("the config has no `synth` section"))?;
        let m = synth_corpus(&s, &self.data_dir).map_err(corpus_error)?;
        write_json(
            &self.data_dir.join("synth.meta.json"),
            &serde_json::json!({ "config_hash": self.config_hash, "synth": s }),
        )?;
        eprintln!("synth: {} records in {}", m.records.len(), self.data_dir.display());
        Ok(())
    }

    pub fn preprocess(&self) -> Result<(), CliError> {
        let m = self.manifest()?;
        fs::create_dir_all(self.roi_dir()).or_exit(code::FAILURE)?;
        let outcomes = par::map_slice(&m.records, |r| -> Result<Option<Skip>, CliError> {
            let paths = self.roi_paths(&r.id);
            let extracted = load_capture(&m, r).and_then(|t| extract_roi_triplet(&t, &self.calibration));
            match extracted {
                Ok((roi, meta)) => {
                    for (img, p) in [&roi.direct, &roi.raw, &roi.processed].into_iter().zip(&paths) {
                        img.save_png(p).or_exit(code::FAILURE)?;
                    }
                    write_json(&paths[3], &meta)?;
                    Ok(None)
                }
                Err(e) => {
                    // A stale ROI from an earlier run must not leak into training.
                    for p in &paths {
                        let _ = fs::remove_file(p);
                    }
                    Ok(Some(Skip {
                        id: r.id.clone(),
                        reason: e.to_string(),
                    }))
                }
            }
        });
        let mut skipped = Vec::new();
        for o in outcomes {
            skipped.extend(o?);
        }
        let n = m.records.len();
        let file = SkipFile {
            n_records: n,
            n_skipped: skipped.len(),
            skipped,
        };
        write_json(&self.roi_dir().join("skips.json"), &file)?;
        for s in &file.skipped {
            eprintln!("skipped {}: {}", s.id, s.reason);
        }
        eprintln!("preprocess: {} of {n} records extracted", n - file.n_skipped);
        if file.n_skipped as f64 > MAX_SKIP_FRACTION * n as f64 {
            return Err(CliError::new(
                code::PREPROCESS,
                format!("{} of {n} samples skipped, above the {:.0}% limit", file.n_skipped, MAX_SKIP_FRACTION * 100.0),
            ));
        }
        Ok(())
    }

    pub fn split(&self) -> Result<(), CliError> {
        let m = self.manifest()?;
        let s = &self.cfg.split;
        let materials: Vec<&str> = m.materials().into_iter().collect();
        let test_location = match &s.test_location {
            Some(l) => l.clone(),
            None => m
                .locations()
                .into_iter()
                .next()
                .ok_or_else(|| CliError::config("manifest is empty"))?
                .to_string(),
        };
        let plan = SplitPlan {
            material_partition: s.partition_for(&materials),
            test_location,
            val_live_count: s.val_live_count,
            spoof_val_fraction: s.spoof_val_fraction,
            spoof_val_cap: s.spoof_val_cap,
            seed: self.cfg.seed,
        };
        let split = make_protocol_split(&m, s.partition, &plan).map_err(corpus_error)?;
        let counts: Vec<String> = split.lists().iter().map(|(k, v)| format!("{k} {}", v.len())).collect();
        eprintln!("split: {}", counts.join(", "));
        write_json(
            &self.out_dir.join("split.json"),
            &SplitFile {
                config_hash: self.config_hash.clone(),
                manifest_hash: self.manifest_hash()?,
                split,
            },
        )
    }

    pub fn train(&self, view: Option<&str>) -> Result<(), CliError> {
        let kinds: Vec<ModelKind> = match view {
            Some(v) => vec![ModelKind::parse(v).ok_or_else(|| CliError::config(format!("unknown view {v:?}")))?],
            None => ModelKind::ALL.to_vec(),
        };
        let m = self.manifest()?;
        let split = self.checked_split(&m)?;
        let train = self.load_rois(&split.train_live)?;
        let val_live = self.load_rois(&split.val_live)?;
        let val_spoof = self.load_rois(&split.val_spoof)?;
        let specs = self.cfg.mode.specs();
        for kind in kinds {
            self.train_one(kind, &specs, &train, &val_live, &val_spoof)?;
        }
        self.try_assemble()
    }

    fn train_one(
        &self,
        kind: ModelKind,
        specs: &ModeSpecs,
        train: &[(String, RoiTriplet)],
        val_live: &[(String, RoiTriplet)],
        val_spoof: &[(String, RoiTriplet)],
    ) -> Result<(), CliError> {
        fn labeled(v: &[(String, RoiTriplet)], label: Label) -> Vec<(&str, Label, &RoiTriplet)> {
            v.iter().map(|(i, r)| (i.as_str(), label, r)).collect()
        }
        let g_train = specs.groups(kind, &labeled(train, Label::Live));
        let g_val_live = specs.groups(kind, &labeled(val_live, Label::Live));
        let g_val_spoof = if kind == ModelKind::Vae { Vec::new() } else { specs.groups(kind, &labeled(val_spoof, Label::Spoof)) };
        let tc = self.cfg.train_config(kind);
        eprintln!("train {}: {} live, {} val live, {} val spoof", kind.name(), g_train.len(), g_val_live.len(), g_val_spoof.len());
        let trained = train_model(kind, specs, &g_train, &g_val_live, &g_val_spoof, &tc).map_err(|e| train_error(kind, e))?;
        let models = self.out_dir.join("models");
        trained
            .checkpoint
            .save(&models.join(kind.name()))
            .or_exit(code::FAILURE)?;
        write(&self.out_dir.join("logs").join(format!("{}.csv", kind.name())), trained.log_csv())?;
        write_json(
            &models.join(format!("{}.train.json", kind.name())),
            &serde_json::json!({
                "config_hash": self.config_hash,
                "best_step": trained.checkpoint.step,
                "val_metric": trained.checkpoint.val_metric,
                "audit": trained.audit,
                "train": tc,
            }),
        )?;
        if let Some(a) = &trained.audit {
            eprintln!(
                "train {}: best step {}, {} live backward passes, {} spoof backward passes",
                kind.name(),
                trained.checkpoint.step,
                a.live_backward_passes,
                a.spoof_backward_passes
            );
        }
        if kind == ModelKind::Vae {
            let tau = vae_tau(&trained.checkpoint, &g_val_live).or_exit(code::TRAINING)?;
            write_json(&models.join("vae_tau.json"), &TauFile { vae_tau: tau })?;
        }
        Ok(())
    }

    /// Writes `bundle.json` once all five checkpoints and the VAE scale exist.
    fn try_assemble(&self) -> Result<(), CliError> {
        let models = self.out_dir.join("models");
        let mut cks = Vec::new();
        for kind in ModelKind::ALL {
            match Checkpoint::load(&models.join(kind.name())) {
                Ok(c) => cks.push(c),
                Err(_) => return Ok(()),
            }
        }
        let Ok(tau) = read_json::<TauFile>(&models.join("vae_tau.json"), code::BUNDLE, "") else {
            return Ok(());
        };
        let cks: [Checkpoint; 5] = cks.try_into().expect("five checkpoints");
        let bundle = assemble_bundle(cks, tau.vae_tau);
        bundle.save(&self.out_dir).or_exit(code::BUNDLE)?;
        eprintln!("bundle written to {}", self.out_dir.join("bundle.json").display());
        Ok(())
    }

    pub fn score(&self, subset: Subset) -> Result<(), CliError> {
        let bundle = self.bundle()?;
        let det = Detector::from_bundle(&bundle).or_exit(code::BUNDLE)?;
        let m = self.manifest()?;
        let wanted: HashSet<String> = match subset {
            Subset::All => m.records.iter().map(|r| r.id.clone()).collect(),
            Subset::Test => {
                let s = self.checked_split(&m)?;
                s.test_live.into_iter().chain(s.test_spoof).collect()
            }
            Subset::Val => {
                let s = self.checked_split(&m)?;
                s.val_live.into_iter().chain(s.val_spoof).collect()
            }
        };
        let ordered: Vec<String> = m.records.iter().filter(|r| wanted.contains(&r.id)).map(|r| r.id.clone()).collect();
        let rois = self.load_rois(&ordered)?;
        let scores = score_all(&det, &rois.iter().map(|(_, r)| r).collect::<Vec<_>>()).or_exit(code::BUNDLE)?;
        let idx = m.index();
        let rows: Vec<ScoreRow> = rois
            .iter()
            .zip(scores)
            .map(|((id, _), scores)| ScoreRow {
                sample_id: id.clone(),
                label: idx[id.as_str()].label,
                material: idx[id.as_str()].material.clone(),
                scores,
            })
            .collect();
        write(&self.out_dir.join("scores.csv"), score_csv(&rows))?;
        write_json(
            &self.out_dir.join("scores.meta.json"),
            &ScoresMeta {
                config_hash: self.config_hash.clone(),
                manifest_hash: self.manifest_hash()?,
                bundle_hash: bundle_hash(&bundle),
                seed: self.cfg.seed,
                subset: format!("{subset:?}").to_lowercase(),
                n_rows: rows.len(),
                n_missing_roi: ordered.len() - rows.len(),
            },
        )?;
        eprintln!("score: {} rows", rows.len());
        Ok(())
    }

    pub fn eval(&self, fdr: Option<f64>) -> Result<(), CliError> {
        let fdr = fdr.unwrap_or(self.cfg.eval.fdr_target);
        if !(fdr > 0.0 && fdr < 1.0) {
            return Err(CliError::config(format!("--fdr {fdr} must lie in (0, 1)")));
        }
        let path = self.out_dir.join("scores.csv");
        let text = fs::read_to_string(&path).map_err(|e| CliError::new(code::EVAL, format!("{}: {e}", path.display())))?;
        let table = ScoreTable::parse_csv(&text).map_err(|e| CliError::new(code::EVAL, format!("{}: {e}", path.display())))?;
        let mut report = per_material_report(&table, fdr).or_exit(code::EVAL)?;
        let meta: Option<ScoresMeta> = read_json(&self.out_dir.join("scores.meta.json"), code::EVAL, "").ok();
        report.provenance = Some(Provenance {
            config_hash: self.config_hash.clone(),
            manifest_hash: meta.as_ref().map(|m| m.manifest_hash.clone()).unwrap_or_default(),
            bundle_hash: meta.as_ref().map(|m| m.bundle_hash.clone()).unwrap_or_default(),
            seed: self.cfg.seed,
        });
        if let Ok(b) = read_json::<pad_core::eval::BenchReport>(&self.out_dir.join("bench.json"), code::EVAL, "") {
            let mut t: BTreeMap<String, f64> = b.stage_means().into_iter().collect();
            t.insert("total".into(), b.total.mean_ms);
            report.timing_ms = Some(t);
        }
        write_json(&self.out_dir.join("report.json"), &report)?;
        let txt = report.to_text();
        write(&self.out_dir.join("report.txt"), &txt)?;
        print!("{txt}");

        let live = table.fused(Label::Live);
        let spoof = table.fused(Label::Spoof);
        let plots = self.out_dir.join("plots");
        fs::create_dir_all(&plots).or_exit(code::FAILURE)?;
        plot_roc(&[roc_points(&live, &spoof).or_exit(code::EVAL)?], &plots.join("roc.png")).or_exit(code::EVAL)?;
        plot_histograms(&[("live", live), ("spoof", spoof)], 40, &plots.join("score_hist.png")).or_exit(code::EVAL)?;
        Ok(())
    }

    pub fn bench(&self, runs: Option<usize>) -> Result<(), CliError> {
        let n_runs = runs.unwrap_or(self.cfg.bench.n_runs);
        if n_runs < 5 {
            return Err(CliError::config(format!("--runs {n_runs}: need at least 5")));
        }
        let det = Detector::from_bundle(&self.bundle()?).or_exit(code::BUNDLE)?;
        let m = self.manifest()?;
        let rec = match &self.cfg.bench.sample {
            Some(id) => m.get(id).ok_or_else(|| CliError::config(format!("bench.sample {id:?} is not in the manifest")))?,
            None => m
                .records
                .iter()
                .find(|r| r.label == Label::Live)
                .ok_or_else(|| CliError::config("manifest has no live record"))?,
        };
        let capture = load_capture(&m, rec).or_exit(code::PREPROCESS)?;
        let report = benchmark_speed(&det, &capture, &self.calibration, n_runs).or_exit(code::EVAL)?;
        write_json(&self.out_dir.join("bench.json"), &report)?;
        let txt = report.to_text();
        write(&self.out_dir.join("bench.txt"), &txt)?;
        print!("{txt}");
        Ok(())
    }

    pub fn features(&self) -> Result<(), CliError> {
        let det = Detector::from_bundle(&self.bundle()?).or_exit(code::BUNDLE)?;
        let m = self.manifest()?;
        let s = self.checked_split(&m)?;
        let wanted: HashSet<&String> = s.test_live.iter().chain(&s.test_spoof).collect();
        let ordered: Vec<String> = m.records.iter().filter(|r| wanted.contains(&r.id)).map(|r| r.id.clone()).collect();
        let idx = m.index();
        let samples: Vec<_> = self
            .load_rois(&ordered)?
            .into_iter()
            .map(|(id, roi)| {
                let r = idx[id.as_str()];
                (id, r.label, r.material.clone(), roi)
            })
            .collect();
        let rows = export_features(&det, &samples, &self.out_dir.join("features.csv")).or_exit(code::EVAL)?;
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.clone()).collect();
        let groups: Vec<usize> = rows.iter().map(|r| usize::from(r.label == Label::Spoof)).collect();
        plot_scatter(&pca_2d(&x), &groups, &self.out_dir.join("plots").join("features_pca.png")).or_exit(code::EVAL)?;
        eprintln!("features: {} rows", rows.len());
        Ok(())
    }

    pub fn pipeline(&self) -> Result<(), CliError> {
        if self.cfg.synth.is_some() {
            self.synth()?;
        }
        self.preprocess()?;
        self.split()?;
        self.train(None)?;
        self.score(Subset::Test)?;
        self.eval(None)
    }
}
