//! Experiment configuration, presets, and the runner that writes CSV, PGM
//! and manifest artifacts.
//!
//! Config files are plain `key = value` lines with `#` comments. Values are
//! resolved in this order, later wins: experiment defaults, preset, file,
//! `--set` overrides, dedicated command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{
    edge_score, quantile, random_filter_mean_null, random_filter_scores, rectangle_corpus, stack_pretrain, stroke_bank,
    train, write_filter_pgm, Activation, LayerSchedule, TrainSpec,
};
use crate::error::{Error, Result};
use crate::figures::{rasterize, rasterize_with, Extent, Figure, RasterImage, Render};
use crate::group::{finite_orbit_stabilizer, BallSpec, FiniteAction, Gl2, Point};
use crate::moduli::{
    complexity_contrast, hexagon, preset as sweep_preset, sweep, sweep_union, triangulate_to_generalized_edges,
    union_oracle, write_segments_csv,
};
use crate::shadow::{fit_shadow, stabilizer_transfer, write_shadow_csv};
use crate::stabilizer::{
    compare_features, median, paired_wins, random_walk_first_hit, stabilizer_fraction, write_estimates_csv,
    write_feature_hits_csv, write_fits_csv, write_walk_csv, EntryHyperplane, FigureTarget, StabilizerTarget, WalkSpec,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ORBITLAB_OUT";
pub const DEFAULT_OUT_DIR: &str = "orbitlab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    OrbitCheck,
    StabVolume,
    FeatureCompare,
    RandomWalk,
    TrainAe,
    StackAe,
    ShadowFit,
    ModuliSweep,
    ComplexityContrast,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::OrbitCheck,
        Experiment::StabVolume,
        Experiment::FeatureCompare,
        Experiment::RandomWalk,
        Experiment::TrainAe,
        Experiment::StackAe,
        Experiment::ShadowFit,
        Experiment::ModuliSweep,
        Experiment::ComplexityContrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::OrbitCheck => "orbit-check",
            Experiment::StabVolume => "stab-volume",
            Experiment::FeatureCompare => "feature-compare",
            Experiment::RandomWalk => "random-walk",
            Experiment::TrainAe => "train-ae",
            Experiment::StackAe => "stack-ae",
            Experiment::ShadowFit => "shadow-fit",
            Experiment::ModuliSweep => "moduli-sweep",
            Experiment::ComplexityContrast => "complexity-contrast",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Parameter keys and their defaults.
    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Experiment::OrbitCheck => &[("group", "D4,S3,C6")],
            Experiment::StabVolume => &[
                ("figure", "edge"),
                ("radius", "0.5"),
                ("eps_grid", "0.2,0.1,0.05,0.025"),
                ("count", "1000000"),
                ("samples", "256"),
                ("ellipse_a", "1.5"),
                ("ellipse_b", "1.0"),
            ],
            Experiment::FeatureCompare => &[
                ("figures", "edge,circle,butterfly"),
                ("radius", "0.5"),
                ("eps", "0.05"),
                ("count", "1000000"),
                ("samples", "256"),
                ("ellipse_a", "1.5"),
                ("ellipse_b", "1.0"),
            ],
            Experiment::RandomWalk => &[
                ("figures", "edge,circle"),
                ("radius", "0.5"),
                ("eps", "0.05"),
                ("step_sigma", "0.02"),
                ("max_steps", "100000"),
                ("trials", "100"),
                ("confine", "false"),
                ("samples", "256"),
                ("ellipse_a", "1.5"),
                ("ellipse_b", "1.0"),
            ],
            Experiment::TrainAe => &[
                ("images", "2000"),
                ("side", "16"),
                ("hidden", "16"),
                ("learning_rate", "0.1"),
                ("epochs", "200"),
                ("batch_size", "10"),
                ("activation", "sigmoid"),
                ("null_draws", "1000"),
            ],
            Experiment::StackAe => &[
                ("images", "2000"),
                ("side", "16"),
                ("layers", "16,8"),
                ("learning_rate", "0.1"),
                ("epochs", "50"),
                ("batch_size", "10"),
                ("activation", "sigmoid"),
                ("binarize_threshold", "0.5"),
            ],
            Experiment::ShadowFit => &[
                ("figures", "edge,circle,ellipse,butterfly"),
                ("side", "32"),
                ("half_extent", "1.75"),
                ("hidden", "16"),
                ("learning_rate", "0.1"),
                ("epochs", "2000"),
                ("batch_size", "4"),
                ("samples", "64"),
                ("ellipse_a", "1.5"),
                ("ellipse_b", "1.0"),
            ],
            Experiment::ModuliSweep => &[
                ("shape", "butterfly"),
                ("side", "128"),
                ("steps", "257"),
                ("oracle_family", "4096"),
                ("oracle_factor", "4"),
            ],
            Experiment::ComplexityContrast => &[
                ("figure", "butterfly"),
                ("radius", "0.5"),
                ("eps", "0.05"),
                ("count", "1000000"),
                ("samples", "256"),
                ("ellipse_a", "1.5"),
                ("ellipse_b", "1.0"),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Real,
    Bool,
    Str,
    IntList,
    RealList,
    StrList,
}

fn kind_of(key: &str) -> Option<Kind> {
    Some(match key {
        "seed" | "workers" | "count" | "samples" | "max_steps" | "trials" | "images" | "side" | "hidden" | "epochs"
        | "batch_size" | "null_draws" | "steps" | "oracle_family" | "oracle_factor" => Kind::Int,
        "radius" | "eps" | "ellipse_a" | "ellipse_b" | "step_sigma" | "learning_rate" | "binarize_threshold"
        | "half_extent" => Kind::Real,
        "confine" => Kind::Bool,
        "experiment" | "preset" | "out_dir" | "figure" | "activation" | "shape" => Kind::Str,
        "layers" => Kind::IntList,
        "eps_grid" => Kind::RealList,
        "group" | "figures" => Kind::StrList,
        _ => return None,
    })
}

fn check_kind(kind: Kind, value: &str) -> std::result::Result<(), String> {
    let items = || value.split(',').map(str::trim);
    let int = |s: &str| s.parse::<u64>().map(|_| ()).map_err(|_| format!("{s:?} is not a non-negative integer"));
    let real = |s: &str| match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(()),
        _ => Err(format!("{s:?} is not a finite real number")),
    };
    let nonempty = |s: &str| if s.is_empty() { Err("empty value".to_string()) } else { Ok(()) };
    match kind {
        Kind::Int => int(value),
        Kind::Real => real(value),
        Kind::Bool => match value {
            "true" | "false" => Ok(()),
            _ => Err(format!("{value:?} is not true or false")),
        },
        Kind::Str => nonempty(value),
        Kind::IntList => items().try_for_each(int),
        Kind::RealList => items().try_for_each(real),
        Kind::StrList => items().try_for_each(nonempty),
    }
}

pub struct Preset {
    pub name: &'static str,
    pub experiment: Experiment,
    pub params: &'static [(&'static str, &'static str)],
    pub description: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "orbits", experiment: Experiment::OrbitCheck, params: &[], description: "orbit-stabilizer identity for D4, S3, C6" },
    Preset { name: "edge-volume", experiment: Experiment::StabVolume, params: &[("figure", "edge")], description: "eps-stabilizer volume and codimension of an edge" },
    Preset { name: "circle-volume", experiment: Experiment::StabVolume, params: &[("figure", "circle")], description: "eps-stabilizer volume and codimension of a circle" },
    Preset { name: "ellipse-volume", experiment: Experiment::StabVolume, params: &[("figure", "ellipse")], description: "eps-stabilizer volume and codimension of an ellipse" },
    Preset { name: "hyperplane-volume", experiment: Experiment::StabVolume, params: &[("figure", "hyperplane")], description: "codimension-1 calibration of the volume estimator" },
    Preset { name: "feature-order", experiment: Experiment::FeatureCompare, params: &[], description: "edge vs circle vs butterfly hit fractions at eps 0.05" },
    Preset { name: "edge-circle-walk", experiment: Experiment::RandomWalk, params: &[], description: "first stabilizer hits of a random walk in GL2" },
    Preset { name: "rectangles", experiment: Experiment::TrainAe, params: &[], description: "autoencoder on the rectangle corpus, edge scores of its filters" },
    Preset { name: "rectangle-stack", experiment: Experiment::StackAe, params: &[], description: "two-layer greedy stack on the rectangle corpus" },
    Preset { name: "shadow-transfer", experiment: Experiment::ShadowFit, params: &[], description: "shadow GL2 fits of a trained autoencoder's action" },
    Preset { name: "trapezoid", experiment: Experiment::ModuliSweep, params: &[("shape", "trapezoid")], description: "sweep of two parallel segments" },
    Preset { name: "triangle", experiment: Experiment::ModuliSweep, params: &[("shape", "triangle")], description: "sweep of two segments with a shared start" },
    Preset { name: "butterfly", experiment: Experiment::ModuliSweep, params: &[("shape", "butterfly")], description: "sweep of two crossing segments" },
    Preset { name: "hexagon", experiment: Experiment::ModuliSweep, params: &[("shape", "hexagon")], description: "hexagon as the union of its triangulation's sweeps" },
    Preset { name: "butterfly-contrast", experiment: Experiment::ComplexityContrast, params: &[], description: "stabilizer fraction of the butterfly boundary vs an edge" },
];

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// One `key = value` line of a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses the line format, rejecting malformed lines, duplicate keys,
/// unknown keys and values of the wrong type.
pub fn parse_config(text: &str) -> Result<Vec<RawEntry>> {
    let mut out: Vec<RawEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Usage(format!("line {line}: expected `key = value`, got {content:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        let kind = kind_of(key).ok_or_else(|| Error::Usage(format!("line {line}: unknown key {key:?}")))?;
        check_kind(kind, value).map_err(|e| Error::Usage(format!("line {line}: key {key:?}: {e}")))?;
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Usage(format!("line {line}: duplicate key {key:?} (first set on line {})", prev.line)));
        }
        out.push(RawEntry { key: key.to_string(), value: value.to_string(), line });
    }
    Ok(out)
}

/// Command-line inputs layered over a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub preset: Option<String>,
    pub sets: Vec<(String, String)>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub preset: Option<String>,
    pub seed: u64,
    /// Rayon worker threads; 0 uses all available cores.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub params: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Resolves a parsed file against presets, defaults and overrides.
    pub fn resolve(entries: &[RawEntry], ov: &Overrides) -> Result<Self> {
        let file = |k: &str| entries.iter().find(|e| e.key == k).map(|e| e.value.clone());
        let preset_name = ov.preset.clone().or_else(|| file("preset"));
        let preset = match &preset_name {
            Some(n) => Some(find_preset(n).ok_or_else(|| Error::Usage(format!("unknown preset {n:?}")))?),
            None => None,
        };
        let exp_name = ov.experiment.clone().or_else(|| file("experiment"));
        let experiment = match (&exp_name, preset) {
            (Some(n), p) => {
                let e = Experiment::parse(n).ok_or_else(|| Error::Usage(format!("unknown experiment {n:?}")))?;
                if let Some(p) = p.filter(|p| p.experiment != e) {
                    return Err(Error::Usage(format!(
                        "preset {:?} belongs to {}, not {}",
                        p.name,
                        p.experiment.name(),
                        e.name()
                    )));
                }
                e
            }
            (None, Some(p)) => p.experiment,
            (None, None) => return Err(Error::Usage("no experiment given (set `experiment` or `preset`)".into())),
        };
        let mut params: BTreeMap<String, String> =
            experiment.defaults().iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(p) = preset {
            for (k, v) in p.params {
                params.insert(k.to_string(), v.to_string());
            }
        }
        let mut seed = "0".to_string();
        let mut workers = "0".to_string();
        let mut out_dir = std::env::var(OUT_DIR_ENV).unwrap_or_else(|_| DEFAULT_OUT_DIR.to_string());
        let mut apply = |key: &str, value: &str, origin: &str| -> Result<()> {
            let kind = kind_of(key).ok_or_else(|| Error::Usage(format!("{origin}: unknown key {key:?}")))?;
            check_kind(kind, value).map_err(|e| Error::Usage(format!("{origin}: key {key:?}: {e}")))?;
            match key {
                "experiment" | "preset" => {}
                "seed" => seed = value.to_string(),
                "workers" => workers = value.to_string(),
                "out_dir" => out_dir = value.to_string(),
                _ if params.contains_key(key) => {
                    params.insert(key.to_string(), value.to_string());
                }
                _ => {
                    return Err(Error::Usage(format!(
                        "{origin}: key {key:?} does not apply to experiment {}",
                        experiment.name()
                    )))
                }
            }
            Ok(())
        };
        for e in entries {
            apply(&e.key, &e.value, &format!("line {}", e.line))?;
        }
        for (k, v) in &ov.sets {
            apply(k, v, "--set")?;
        }
        let mut seed: u64 = seed.parse().expect("checked integer");
        let mut workers: usize = workers.parse().map_err(|_| Error::Usage("workers out of range".into()))?;
        let mut out_dir = PathBuf::from(out_dir);
        if let Some(s) = ov.seed {
            seed = s;
        }
        if let Some(w) = ov.workers {
            workers = w;
        }
        if let Some(o) = &ov.out_dir {
            out_dir = o.clone();
        }
        Ok(Self { experiment, preset: preset.map(|p| p.name.to_string()), seed, workers, out_dir, params })
    }

    pub fn from_text(text: &str, ov: &Overrides) -> Result<Self> {
        Self::resolve(&parse_config(text)?, ov)
    }

    /// Config for a preset with everything else at its defaults.
    pub fn preset(name: &str, seed: u64, workers: usize, out_dir: &Path) -> Result<Self> {
        Self::resolve(
            &[],
            &Overrides {
                preset: Some(name.to_string()),
                seed: Some(seed),
                workers: Some(workers),
                out_dir: Some(out_dir.to_path_buf()),
                ..Default::default()
            },
        )
    }

    /// The fully resolved config in the file format; parsing it back yields
    /// the same config.
    pub fn to_text(&self) -> String {
        let mut s = format!("experiment = {}\n", self.experiment.name());
        if let Some(p) = &self.preset {
            s += &format!("preset = {p}\n");
        }
        s += &format!("seed = {}\nworkers = {}\nout_dir = {}\n", self.seed, self.workers, self.out_dir.display());
        for (k, v) in &self.params {
            s += &format!("{k} = {v}\n");
        }
        s
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Usage(format!("experiment {} has no key {key:?}", self.experiment.name())))
    }

    pub fn int(&self, key: &str) -> Result<u64> {
        self.raw(key)?.parse().map_err(|_| Error::Usage(format!("key {key:?} must be an integer")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        usize::try_from(self.int(key)?).map_err(|_| Error::Usage(format!("key {key:?} out of range")))
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        self.raw(key)?.parse().map_err(|_| Error::Usage(format!("key {key:?} must be a real number")))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.raw(key)? == "true")
    }

    pub fn text(&self, key: &str) -> Result<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self.raw(key)?.split(',').map(|s| s.trim().to_string()).collect())
    }

    pub fn reals(&self, key: &str) -> Result<Vec<f64>> {
        self.list(key)?.iter().map(|s| s.parse().map_err(|_| Error::Usage(format!("bad real in {key:?}")))).collect()
    }

    pub fn ints(&self, key: &str) -> Result<Vec<usize>> {
        self.list(key)?.iter().map(|s| s.parse().map_err(|_| Error::Usage(format!("bad integer in {key:?}")))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub experiment: String,
    pub preset: Option<String>,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: String,
    pub parameters: BTreeMap<String, String>,
    pub artifacts: Vec<Artifact>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// The config this manifest echoes, with optional overrides on top.
    pub fn config(&self, ov: &Overrides) -> Result<ExperimentConfig> {
        let mut entries = vec![
            RawEntry { key: "experiment".into(), value: self.experiment.clone(), line: 0 },
            RawEntry { key: "seed".into(), value: self.seed.to_string(), line: 0 },
            RawEntry { key: "workers".into(), value: self.workers.to_string(), line: 0 },
            RawEntry { key: "out_dir".into(), value: self.out_dir.clone(), line: 0 },
        ];
        if let Some(p) = &self.preset {
            entries.push(RawEntry { key: "preset".into(), value: p.clone(), line: 0 });
        }
        for (k, v) in &self.parameters {
            entries.push(RawEntry { key: k.clone(), value: v.clone(), line: 0 });
        }
        ExperimentConfig::resolve(&entries, ov)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Artifacts of a run, buffered and hashed as they are written.
struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    summary: Vec<(String, String)>,
}

impl Outputs {
    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        fs::write(self.dir.join(name), &buf)?;
        self.artifacts.push(Artifact { file: name.to_string(), sha256: sha256_hex(&buf) });
        Ok(())
    }

    fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// Headline numbers of the run, also written to `summary.csv`.
    pub summary: Vec<(String, String)>,
}

impl RunOutcome {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

/// Runs an experiment and writes its artifacts, `summary.csv`,
/// `config.resolved` and `manifest.json` into the output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} workers: {e}", config.workers)))?;
    let mut out = Outputs { dir: config.out_dir.clone(), artifacts: Vec::new(), summary: Vec::new() };
    pool.install(|| dispatch(config, &mut out))?;
    let summary = out.summary.clone();
    out.write("summary.csv", |buf| {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf);
        w.write_record(["key", "value"])?;
        for (k, v) in &summary {
            w.write_record([k, v])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write("config.resolved", |buf| {
        buf.extend_from_slice(config.to_text().as_bytes());
        Ok(())
    })?;
    let manifest = RunManifest {
        tool_version: VERSION.to_string(),
        experiment: config.experiment.name().to_string(),
        preset: config.preset.clone(),
        seed: config.seed,
        workers: config.workers,
        out_dir: config.out_dir.display().to_string(),
        parameters: config.params.clone(),
        artifacts: out.artifacts.clone(),
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(config.out_dir.join("manifest.json"), json + "\n")?;
    Ok(RunOutcome { manifest, summary })
}

fn dispatch(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    match cfg.experiment {
        Experiment::OrbitCheck => orbit_check(cfg, out),
        Experiment::StabVolume => stab_volume(cfg, out),
        Experiment::FeatureCompare => feature_compare(cfg, out),
        Experiment::RandomWalk => random_walk(cfg, out),
        Experiment::TrainAe => train_ae(cfg, out),
        Experiment::StackAe => stack_ae(cfg, out),
        Experiment::ShadowFit => shadow_fit(cfg, out),
        Experiment::ModuliSweep => moduli_sweep(cfg, out),
        Experiment::ComplexityContrast => contrast(cfg, out),
    }
}

/// Plane figures addressable by name in configs.
pub fn named_figure(name: &str, ellipse: (f64, f64)) -> Result<Figure> {
    match name {
        "edge" => Ok(Figure::edge(0.0, 1.0)),
        "circle" => Ok(Figure::circle(1.0)),
        "ellipse" => Ok(Figure::ellipse(ellipse.0, ellipse.1, 0.0)),
        "butterfly" | "triangle" | "trapezoid" => Ok(sweep_preset(name)?.0.boundary()),
        _ => Err(Error::UnsupportedFigure(format!(
            "{name:?} (expected edge, circle, ellipse, butterfly, triangle, trapezoid)"
        ))),
    }
}

/// Known GL2 codimension of a named target's eps-stabilizer.
fn analytic_codim(name: &str) -> Option<u32> {
    match name {
        "hyperplane" => Some(1),
        "edge" => Some(2),
        "circle" | "ellipse" => Some(3),
        "butterfly" | "triangle" | "trapezoid" => Some(4),
        _ => None,
    }
}

fn target(cfg: &ExperimentConfig, name: &str) -> Result<Box<dyn StabilizerTarget>> {
    if name == "hyperplane" {
        return Ok(Box::new(EntryHyperplane::new("hyperplane", 0, 0, 1.0)));
    }
    let n = cfg.usize("samples")?;
    let ellipse = (cfg.real("ellipse_a")?, cfg.real("ellipse_b")?);
    Ok(Box::new(FigureTarget::new(name, named_figure(name, ellipse)?, n)))
}

fn ball(cfg: &ExperimentConfig) -> Result<BallSpec> {
    BallSpec::about_identity(cfg.real("radius")?, cfg.seed)
}

fn csv_out(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf)
}

fn orbit_check(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let mut rows = Vec::new();
    let mut all = true;
    for name in cfg.list("group")? {
        let action = FiniteAction::by_name(&name)?;
        for x in 0..action.ground().len() {
            let os = finite_orbit_stabilizer(&action, x)?;
            let ok = os.orbit.len() * os.stabilizer.len() == action.order();
            all &= ok;
            rows.push([
                action.name().to_string(),
                action.ground()[x].clone(),
                os.orbit.len().to_string(),
                os.stabilizer.len().to_string(),
                action.order().to_string(),
                ok.to_string(),
            ]);
        }
    }
    out.write("orbit_stabilizer.csv", |buf| {
        let mut w = csv_out(buf);
        w.write_record(["group", "element", "orbit_size", "stabilizer_size", "group_order", "identity_holds"])?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.note("identity_holds", all);
    Ok(())
}

fn stab_volume(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let name = cfg.text("figure")?;
    let t = target(cfg, &name)?;
    let est = stabilizer_fraction(t.as_ref(), &ball(cfg)?, &cfg.reals("eps_grid")?, cfg.usize("count")?)?;
    out.write("estimates.csv", |buf| write_estimates_csv(buf, std::slice::from_ref(&est)))?;
    out.write("fits.csv", |buf| write_fits_csv(buf, std::slice::from_ref(&est)))?;
    out.note("figure", &name);
    out.note("codim_fit", est.codim_fit);
    out.note("codim_stderr", est.codim_stderr);
    if let Some(c) = analytic_codim(&name) {
        out.note("analytic_codim", c);
    }
    Ok(())
}

fn feature_compare(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let names = cfg.list("figures")?;
    let targets: Vec<Box<dyn StabilizerTarget>> = names.iter().map(|n| target(cfg, n)).collect::<Result<_>>()?;
    let refs: Vec<&dyn StabilizerTarget> = targets.iter().map(|t| t.as_ref()).collect();
    let hits = compare_features(&refs, &ball(cfg)?, cfg.real("eps")?, cfg.usize("count")?)?;
    out.write("feature_hits.csv", |buf| write_feature_hits_csv(buf, &hits))?;
    let find = |n: &str| hits.iter().find(|h| h.figure_id == n).expect("every figure reported");
    let first = find(&names[0]);
    for h in &hits {
        out.note(format!("fraction_{}", h.figure_id), h.fraction);
    }
    for n in &names[1..] {
        out.note(format!("separation_{}_{}", names[0], n), first.separation(find(n)));
    }
    Ok(())
}

fn random_walk(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let names = cfg.list("figures")?;
    let targets: Vec<Box<dyn StabilizerTarget>> = names.iter().map(|n| target(cfg, n)).collect::<Result<_>>()?;
    let refs: Vec<&dyn StabilizerTarget> = targets.iter().map(|t| t.as_ref()).collect();
    let spec = WalkSpec {
        step_sigma: cfg.real("step_sigma")?,
        eps: cfg.real("eps")?,
        max_steps: cfg.int("max_steps")?,
        start: ball(cfg)?,
        trial_count: cfg.usize("trials")?,
        seed: cfg.seed,
        confine: cfg.flag("confine")?,
    };
    let walks = random_walk_first_hit(&refs, &spec)?;
    out.write("walk.csv", |buf| write_walk_csv(buf, &walks))?;
    let never = spec.max_steps + 1;
    for w in &walks {
        out.note(format!("median_{}", w.figure_id), median(&w.first_hit));
        out.note(format!("never_{}", w.figure_id), w.first_hit.iter().filter(|&&s| s == never).count());
    }
    for w in &walks[1..] {
        out.note(format!("wins_{}_over_{}", walks[0].figure_id, w.figure_id), paired_wins(&walks[0], w, spec.max_steps));
    }
    Ok(())
}

fn schedule(cfg: &ExperimentConfig, hidden: usize, seed: u64) -> Result<LayerSchedule> {
    let name = cfg.text("activation")?;
    let activation = Activation::parse(&name)
        .filter(|a| *a != Activation::Identity)
        .ok_or_else(|| Error::Usage(format!("activation must be sigmoid or rectifier, got {name:?}")))?;
    Ok(LayerSchedule {
        hidden,
        learning_rate: cfg.real("learning_rate")?,
        epochs: cfg.usize("epochs")?,
        batch_size: cfg.usize("batch_size")?,
        seed,
        activation,
    })
}

fn write_curve(buf: &mut Vec<u8>, curves: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_out(buf);
    w.write_record(["layer", "epoch", "loss"])?;
    for (layer, curve) in curves.iter().enumerate() {
        for (epoch, loss) in curve.iter().enumerate() {
            w.write_record([(layer + 1).to_string(), epoch.to_string(), loss.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn train_ae(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let side = cfg.usize("side")?;
    let hidden = cfg.usize("hidden")?;
    let images = rectangle_corpus(cfg.usize("images")?, side, cfg.seed)?;
    let trained = train(&TrainSpec::from_images(&images, schedule(cfg, hidden, cfg.seed)?)?)?;
    let bank = stroke_bank(side);
    let scores: Vec<f64> = (0..hidden).map(|k| edge_score(trained.params.filter(k), &bank)).collect();
    let mean_score = scores.iter().sum::<f64>() / hidden as f64;
    let draws = cfg.usize("null_draws")?;
    let single = random_filter_scores(side, draws, cfg.seed);
    let null_mean = single.iter().sum::<f64>() / draws.max(1) as f64;
    let null_sd = (single.iter().map(|s| (s - null_mean).powi(2)).sum::<f64>() / (draws.max(2) - 1) as f64).sqrt();
    let p95 = quantile(&random_filter_mean_null(side, hidden, draws, cfg.seed), 0.95);

    out.write("loss_curve.csv", |buf| write_curve(buf, std::slice::from_ref(&trained.loss_curve)))?;
    out.write("edge_scores.csv", |buf| {
        let mut w = csv_out(buf);
        w.write_record(["filter", "edge_score"])?;
        for (k, s) in scores.iter().enumerate() {
            w.write_record([k.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write("params.aep1", |buf| trained.params.write_to(buf))?;
    out.write("sample_rectangle.pgm", |buf| images[0].write_pgm(buf))?;
    for k in 0..hidden {
        let name = format!("filter_{k:02}.pgm");
        let comment = format!("extent 0 0 {side} kind filter {k}");
        out.write(&name, |buf| write_filter_pgm(buf, trained.params.filter(k), side, &comment))?;
    }
    let initial = trained.loss_curve[0];
    let last = *trained.loss_curve.last().expect("curve has the initial loss");
    out.note("initial_loss", initial);
    out.note("final_loss", last);
    out.note("final_dataset_loss", trained.final_loss);
    out.note("loss_ratio", last / initial);
    out.note("mean_edge_score", mean_score);
    out.note("null_score_mean", null_mean);
    out.note("null_score_sd", null_sd);
    out.note("null_mean_p95", p95);
    Ok(())
}

fn stack_ae(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let side = cfg.usize("side")?;
    let images = rectangle_corpus(cfg.usize("images")?, side, cfg.seed)?;
    let data: Vec<Vec<f64>> = images.iter().map(RasterImage::to_vector).collect();
    let schedules: Vec<LayerSchedule> = cfg
        .ints("layers")?
        .iter()
        .enumerate()
        .map(|(i, &h)| schedule(cfg, h, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    let stack = stack_pretrain(&data, &schedules, cfg.real("binarize_threshold")?)?;
    out.write("stack_loss.csv", |buf| write_curve(buf, &stack.loss_curves))?;
    for (i, (layer, curve)) in stack.layers.iter().zip(&stack.loss_curves).enumerate() {
        let mut bytes = Vec::new();
        layer.write_to(&mut bytes)?;
        out.write(&format!("layer_{}.aep1", i + 1), |buf| {
            buf.extend_from_slice(&bytes);
            Ok(())
        })?;
        let first = curve[0];
        let last = *curve.last().expect("curve has the initial loss");
        out.note(format!("layer{}_initial_loss", i + 1), first);
        out.note(format!("layer{}_final_loss", i + 1), last);
        out.note(format!("layer{}_decrease", i + 1), 1.0 - last / first);
    }
    Ok(())
}

/// Known deformation used for the synthetic shadow recovery check.
pub fn synthetic_deformation() -> Gl2 {
    Gl2::new([[1.05, 0.2], [-0.1, 0.95]]).expect("invertible")
}

fn shadow_fit(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let names = cfg.list("figures")?;
    let ellipse = (cfg.real("ellipse_a")?, cfg.real("ellipse_b")?);
    let figures: Vec<Figure> = names.iter().map(|n| named_figure(n, ellipse)).collect::<Result<_>>()?;
    let side = cfg.usize("side")?;
    let extent = Extent::centered(cfg.real("half_extent")?);
    let images: Vec<RasterImage> = figures
        .iter()
        .zip(&names)
        .map(|(f, n)| {
            let mut img = rasterize_with(f, side, extent, Render::Stroke)?;
            img.set_label(n);
            Ok(img)
        })
        .collect::<Result<_>>()?;
    let trained = train(&TrainSpec::from_images(&images, schedule_plain(cfg)?)?)?;
    let n = cfg.usize("samples")?;
    let eps = images[0].pixel_width();
    let mut rows = Vec::new();
    let g = synthetic_deformation();
    let mut synthetic_worst: f64 = 0.0;
    for ((name, f), img) in names.iter().zip(&figures).zip(&images) {
        rows.push(stabilizer_transfer(name, f, &trained.params, img, n, eps)?);
        let pts = f.sample_points(n);
        let moved: Vec<Point> = pts.iter().map(|p| g.apply(*p)).collect();
        let fit = fit_shadow(&pts, &moved)?;
        if !fit.rank_deficient {
            synthetic_worst = synthetic_worst.max(fit.g.frobenius_distance(&g));
        }
        out.note(format!("synthetic_rank_deficient_{name}"), fit.rank_deficient);
    }
    out.write("shadow.csv", |buf| write_shadow_csv(buf, &rows))?;
    for (img, name) in images.iter().zip(&names) {
        out.write(&format!("figure_{name}.pgm"), |buf| img.write_pgm(buf))?;
    }
    out.note("eps", eps);
    out.note("final_dataset_loss", trained.final_loss);
    out.note("synthetic_max_error", synthetic_worst);
    out.note("antecedent_all", rows.iter().all(|r| r.antecedent));
    out.note("transfer_all", rows.iter().all(|r| r.transfer_ok));
    Ok(())
}

fn schedule_plain(cfg: &ExperimentConfig) -> Result<LayerSchedule> {
    Ok(LayerSchedule {
        hidden: cfg.usize("hidden")?,
        learning_rate: cfg.real("learning_rate")?,
        epochs: cfg.usize("epochs")?,
        batch_size: cfg.usize("batch_size")?,
        seed: cfg.seed,
        activation: Activation::Sigmoid,
    })
}

fn moduli_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let shape = cfg.text("shape")?;
    let side = cfg.usize("side")?;
    let steps = cfg.usize("steps")?;
    let (raster, segments, reference) = if shape == "hexagon" {
        let hex = hexagon();
        let extent = Extent::centered(1.25);
        let edges = triangulate_to_generalized_edges(&hex)?;
        let union = sweep_union(&edges, steps, side, extent)?;
        let mut segments = Vec::new();
        for ge in &edges {
            segments.extend(sweep(ge, steps, side, extent)?.segments);
        }
        (union, segments, rasterize(&hex, side, extent)?)
    } else {
        let (ge, extent) = sweep_preset(&shape)?;
        let swept = sweep(&ge, steps, side, extent)?;
        let oracle = union_oracle(&ge, cfg.usize("oracle_family")?, side, extent, cfg.usize("oracle_factor")?)?;
        (swept.raster, swept.segments, oracle)
    };
    let mut raster = raster;
    raster.set_label(&shape);
    out.write("sweep.pgm", |buf| raster.write_pgm(buf))?;
    out.write("segments.csv", |buf| write_segments_csv(buf, &segments))?;
    let mut reference = reference;
    reference.set_label(&format!("{shape}-reference"));
    out.write("reference.pgm", |buf| reference.write_pgm(buf))?;
    out.note("shape", &shape);
    out.note("iou", raster.iou(&reference));
    out.note("segments", segments.len());
    Ok(())
}

fn contrast(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let name = cfg.text("figure")?;
    let n = cfg.usize("samples")?;
    let ellipse = (cfg.real("ellipse_a")?, cfg.real("ellipse_b")?);
    let reference = FigureTarget::new("edge", named_figure("edge", ellipse)?, n);
    let id = if name == "edge" { "edge-copy".to_string() } else { name.clone() };
    let other = FigureTarget::new(&id, named_figure(&name, ellipse)?, n);
    let report = complexity_contrast(&reference, &other, &ball(cfg)?, cfg.real("eps")?, cfg.usize("count")?)?;
    out.write("contrast.csv", |buf| {
        let mut w = csv_out(buf);
        w.write_record(["reference", "figure", "eps", "reference_fraction", "figure_fraction", "gap", "separation"])?;
        w.write_record([
            report.edge.figure_id.clone(),
            report.other.figure_id.clone(),
            report.edge.eps.to_string(),
            report.edge.fraction.to_string(),
            report.other.fraction.to_string(),
            report.gap.to_string(),
            report.separation.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    })?;
    out.write("feature_hits.csv", |buf| write_feature_hits_csv(buf, &[report.edge.clone(), report.other.clone()]))?;
    out.note("gap", report.gap);
    out.note("separation", report.separation);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(exp: &str) -> Overrides {
        Overrides { experiment: Some(exp.into()), ..Default::default() }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_text("", &ov("stab-volume")).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.real("radius").unwrap(), 0.5);
        assert_eq!(c.reals("eps_grid").unwrap(), vec![0.2, 0.1, 0.05, 0.025]);
    }

    #[test]
    fn numeric_overrides() {
        let c = ExperimentConfig::from_text("eps = 0.05\ncount = 1000000", &ov("feature-compare")).unwrap();
        assert_eq!(c.real("eps").unwrap(), 0.05);
        assert_eq!(c.usize("count").unwrap(), 1_000_000);
    }

    #[test]
    fn config_errors_name_the_line() {
        let e = parse_config("epz = 0.05").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("\"epz\""), "{e}");
        let e = parse_config("# c\neps = 1\neps = 2").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("duplicate"), "{e}");
        let e = parse_config("count = lots").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("count"), "{e}");
        let e = ExperimentConfig::from_text("\nshape = butterfly", &ov("stab-volume")).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("does not apply"), "{e}");
        assert!(parse_config("just words").is_err());
        assert_eq!(parse_config("epz = 1").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn flags_override_file_and_sets() {
        let o = Overrides {
            experiment: Some("random-walk".into()),
            sets: vec![("trials".into(), "7".into()), ("seed".into(), "3".into())],
            seed: Some(9),
            ..Default::default()
        };
        let c = ExperimentConfig::from_text("trials = 5\nseed = 1", &o).unwrap();
        assert_eq!(c.usize("trials").unwrap(), 7);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn presets_resolve_and_conflicts_rejected() {
        for p in PRESETS {
            let c = ExperimentConfig::preset(p.name, 0, 1, Path::new("x")).unwrap();
            assert_eq!(c.experiment, p.experiment);
            for (k, v) in p.params {
                assert_eq!(c.params[*k], *v);
            }
        }
        let o = Overrides { experiment: Some("moduli-sweep".into()), ..Default::default() };
        let c = ExperimentConfig::from_text("preset = butterfly", &o).unwrap();
        assert_eq!(c.text("shape").unwrap(), "butterfly");
        assert!(ExperimentConfig::from_text("preset = butterfly", &ov("stab-volume")).is_err());
        assert!(ExperimentConfig::from_text("", &Overrides::default()).is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let c = ExperimentConfig::preset("circle-volume", 4, 2, Path::new("/tmp/o")).unwrap();
        let back = ExperimentConfig::from_text(&c.to_text(), &Overrides::default()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn orbit_check_writes_rows() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides {
            experiment: Some("orbit-check".into()),
            out_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let c = ExperimentConfig::from_text("group = D4", &o).unwrap();
        let r = run(&c).unwrap();
        assert_eq!(r.get("identity_holds"), Some("true"));
        let text = fs::read_to_string(dir.path().join("orbit_stabilizer.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("group,element,orbit_size,stabilizer_size,group_order,identity_holds"));
        assert!(lines.next().unwrap().ends_with(",4,2,8,true"));
        let m = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
        assert!(m.artifacts.iter().any(|a| a.file == "orbit_stabilizer.csv" && a.sha256.len() == 64));
        assert_eq!(m.config(&Overrides::default()).unwrap(), c);
    }
}
