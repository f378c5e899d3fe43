//! Flat `key = value` run configuration.
//!
//! Settings are layered: built-in defaults, then a preset, then a config
//! file, then command-line overrides. Every key must be one of [`DEFAULTS`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dwa_core::data::SplitSpec;
use dwa_core::nn::{ConvGeometry, ConvMode, ModelGeometry};
use dwa_core::train::TrainConfig;

use crate::error::{invalid, CliResult};

/// Every recognised key with its default value.
pub const DEFAULTS: &str = "\
seed = 0
dataset.kind = synth
dataset.path =
dataset.train_file = Train_Arabic_Digit.txt
dataset.test_file = Test_Arabic_Digit.txt
dataset.train_manifest =
dataset.test_manifest =
dataset.length = 50
dataset.normalize = true
split.test_fraction = 0.1
split.validation_count = 50
synth.classes = 4
synth.dim = 2
synth.train_per_class = 200
synth.test_per_class = 50
synth.validation_per_class = 12
synth.warp = 2
synth.noise = 0.05
model.conv_mode = dwa
model.conv1.filters = 50
model.conv1.width = 8
model.conv1.stride = 2
model.conv2.filters = 50
model.conv2.width = 8
model.conv2.stride = 2
model.fc1 = 400
model.fc2 = 100
train.lr_conv = 0.001
train.lr_decay = 0.001
train.lr_dense = 0.0001
train.batch_size = 20
train.iterations = 5000
train.eval_every = 500
train.parallel = true
train.record_time = true
output.dir = runs
gradcheck.seeds = 5
gradcheck.h = 1e-5
gradcheck.threshold = 1e-4
gradcheck.freeze = true
gradcheck.batch = 4
gradcheck.length = 16
gradcheck.dim = 2
gradcheck.filters = 4
gradcheck.width = 4
gradcheck.stride = 2
gradcheck.fc1 = 16
gradcheck.fc2 = 8
gradcheck.classes = 3
dtwcheck.max_len = 8
dtwcheck.pairs = 1000
bench.dim = 2
bench.warmup = 5
bench.repeats = 50
bench.presets =
";

const SYNTH: &str = "\
dataset.kind = synth
dataset.length = 50
model.conv1.width = 8
model.conv1.stride = 2
model.conv2.width = 8
model.conv2.stride = 2
train.batch_size = 20
train.iterations = 5000
train.eval_every = 500
bench.dim = 2
";

const UNIPEN: &str = "\
dataset.kind = delimited
dataset.length = 50
model.conv1.width = 8
model.conv1.stride = 2
model.conv2.width = 8
model.conv2.stride = 2
train.batch_size = 100
train.iterations = 60000
train.eval_every = 1000
bench.dim = 2
";

const ARABIC: &str = "\
dataset.kind = arabic
dataset.length = 40
dataset.train_manifest = 660x10
dataset.test_manifest = 220x10
model.conv1.width = 6
model.conv1.stride = 2
model.conv2.width = 6
model.conv2.stride = 2
train.batch_size = 50
train.iterations = 60000
train.eval_every = 1000
bench.dim = 13
";

const ADL: &str = "\
dataset.kind = delimited
dataset.length = 100
model.conv1.width = 12
model.conv1.stride = 4
model.conv2.width = 12
model.conv2.stride = 4
train.batch_size = 5
train.iterations = 60000
train.eval_every = 1000
bench.dim = 3
";

pub const PRESETS: [&str; 4] = ["synth", "unipen", "arabic", "adl"];

pub fn preset_text(name: &str) -> CliResult<&'static str> {
    match name {
        "synth" => Ok(SYNTH),
        "unipen" => Ok(UNIPEN),
        "arabic" => Ok(ARABIC),
        "adl" => Ok(ADL),
        other => Err(invalid(format!("preset: unknown preset {other:?} (expected one of {PRESETS:?})"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_lines(text: &str, source: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(invalid(format!("{source}:{}: expected `key = value`, found {line:?}", n + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Layered raw settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        let values = parse_lines(DEFAULTS, "defaults")
            .expect("defaults parse")
            .into_iter()
            .collect();
        Settings { values }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(invalid(format!("{key}: unknown setting"))),
        }
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> CliResult<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn apply_preset(&mut self, name: &str) -> CliResult<()> {
        self.apply(&parse_lines(preset_text(name)?, name)?)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("{key} is not a known setting"))
    }

    fn parse<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| invalid(format!("{key}: cannot parse {raw:?}: {e}")))
    }

    fn positive(&self, key: &str) -> CliResult<usize> {
        match self.parse::<usize>(key)? {
            0 => Err(invalid(format!("{key}: must be at least 1"))),
            v => Ok(v),
        }
    }

    /// Rendered back as a config file; loading it reproduces these settings.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Parses `660x10`, `3,4,5` or a mix such as `2x3,7`.
pub fn parse_manifest(key: &str, text: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || invalid(format!("{key}: cannot parse {part:?} (use counts like 660x10 or 3,4,5)"));
        match part.split_once('x') {
            Some((count, times)) => {
                let count: usize = count.trim().parse().map_err(|_| bad())?;
                let times: usize = times.trim().parse().map_err(|_| bad())?;
                out.extend(std::iter::repeat_n(count, times));
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synth,
    Arabic,
    Delimited,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synth" => Ok(DatasetKind::Synth),
            "arabic" => Ok(DatasetKind::Arabic),
            "delimited" => Ok(DatasetKind::Delimited),
            _ => Err("expected synth, arabic or delimited".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub validation_per_class: usize,
    pub warp: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub path: Option<PathBuf>,
    pub train_file: String,
    pub test_file: String,
    pub train_manifest: Vec<usize>,
    pub test_manifest: Vec<usize>,
    pub length: usize,
    pub normalize: bool,
    pub split: SplitSpec,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seeds: u64,
    pub h: f64,
    pub threshold: f64,
    pub freeze: bool,
    pub batch: usize,
    pub geometry: ModelGeometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dim: usize,
    pub warmup: usize,
    pub repeats: usize,
    pub presets: Vec<String>,
}

/// Validated, typed configuration of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub mode: ConvMode,
    pub conv1: ConvGeometry,
    pub conv2: ConvGeometry,
    pub fc1: usize,
    pub fc2: usize,
    pub lr_conv: f64,
    pub lr_decay: f64,
    pub lr_dense: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub parallel: bool,
    pub record_time: bool,
    pub output_dir: PathBuf,
    pub gradcheck: GradcheckConfig,
    pub dtw_max_len: usize,
    pub dtw_pairs: usize,
    pub bench: BenchConfig,
}

fn conv(s: &Settings, layer: &str) -> CliResult<ConvGeometry> {
    Ok(ConvGeometry {
        filters: s.positive(&format!("model.{layer}.filters"))?,
        width: s.positive(&format!("model.{layer}.width"))?,
        stride: s.positive(&format!("model.{layer}.stride"))?,
    })
}

impl RunConfig {
    /// Types and checks every setting, including that the configured
    /// geometry leaves at least one output position at both conv layers and
    /// that dataset paths exist.
    pub fn from_settings(s: &Settings) -> CliResult<Self> {
        let kind: DatasetKind = s.parse("dataset.kind")?;
        let path = match s.get("dataset.path") {
            "" => None,
            p => Some(PathBuf::from(p)),
        };
        if kind != DatasetKind::Synth {
            match &path {
                None => return Err(invalid("dataset.path: required for this dataset kind but not set")),
                Some(p) if !p.exists() => {
                    return Err(invalid(format!("dataset.path: {} does not exist", p.display())));
                }
                _ => {}
            }
        }
        let train_manifest = parse_manifest("dataset.train_manifest", s.get("dataset.train_manifest"))?;
        let test_manifest = parse_manifest("dataset.test_manifest", s.get("dataset.test_manifest"))?;
        if kind == DatasetKind::Arabic {
            let dir = path.as_deref().unwrap_or(Path::new("."));
            for key in ["dataset.train_file", "dataset.test_file"] {
                let file = dir.join(s.get(key));
                if !file.is_file() {
                    return Err(invalid(format!("{key}: {} does not exist", file.display())));
                }
            }
            if train_manifest.is_empty() || train_manifest.len() != test_manifest.len() {
                return Err(invalid(
                    "dataset.train_manifest / dataset.test_manifest: need one count per class in both",
                ));
            }
        }
        let length: usize = s.parse("dataset.length")?;
        if length < 2 {
            return Err(invalid("dataset.length: must be at least 2"));
        }
        let test_fraction: f64 = s.parse("split.test_fraction")?;
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(invalid("split.test_fraction: must lie strictly between 0 and 1"));
        }
        let synth = SynthConfig {
            classes: s.positive("synth.classes")?,
            dim: s.positive("synth.dim")?,
            train_per_class: s.positive("synth.train_per_class")?,
            test_per_class: s.positive("synth.test_per_class")?,
            validation_per_class: s.parse("synth.validation_per_class")?,
            warp: s.parse("synth.warp")?,
            noise: s.parse("synth.noise")?,
        };
        if !(synth.warp >= 1.0 && synth.warp.is_finite()) {
            return Err(invalid("synth.warp: must be at least 1"));
        }
        if !(synth.noise >= 0.0 && synth.noise.is_finite()) {
            return Err(invalid("synth.noise: must be non-negative"));
        }
        let seed = s.parse("seed")?;
        let data = DataConfig {
            kind,
            path,
            train_file: s.get("dataset.train_file").to_string(),
            test_file: s.get("dataset.test_file").to_string(),
            train_manifest,
            test_manifest,
            length,
            normalize: s.parse("dataset.normalize")?,
            split: SplitSpec {
                test_fraction,
                validation_count: s.parse("split.validation_count")?,
                seed,
            },
            synth,
        };

        let gradcheck_conv = ConvGeometry {
            filters: s.positive("gradcheck.filters")?,
            width: s.positive("gradcheck.width")?,
            stride: s.positive("gradcheck.stride")?,
        };
        let mode: ConvMode = s.parse("model.conv_mode")?;
        let gradcheck = GradcheckConfig {
            seeds: s.parse("gradcheck.seeds")?,
            h: s.parse("gradcheck.h")?,
            threshold: s.parse("gradcheck.threshold")?,
            freeze: s.parse("gradcheck.freeze")?,
            batch: s.positive("gradcheck.batch")?,
            geometry: ModelGeometry {
                input_len: s.positive("gradcheck.length")?,
                input_dim: s.positive("gradcheck.dim")?,
                conv1: gradcheck_conv,
                conv2: gradcheck_conv,
                fc1: s.positive("gradcheck.fc1")?,
                fc2: s.positive("gradcheck.fc2")?,
                classes: s.positive("gradcheck.classes")?,
                mode,
            },
        };
        gradcheck
            .geometry
            .shape_chain()
            .map_err(|e| invalid(format!("gradcheck geometry: {e}")))?;

        let bench = BenchConfig {
            dim: s.positive("bench.dim")?,
            warmup: s.parse("bench.warmup")?,
            repeats: s.positive("bench.repeats")?,
            presets: s
                .get("bench.presets")
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(String::from)
                .collect(),
        };
        for p in &bench.presets {
            preset_text(p).map_err(|_| invalid(format!("bench.presets: unknown preset {p:?}")))?;
        }

        let cfg = RunConfig {
            seed,
            data,
            mode,
            conv1: conv(s, "conv1")?,
            conv2: conv(s, "conv2")?,
            fc1: s.positive("model.fc1")?,
            fc2: s.positive("model.fc2")?,
            lr_conv: s.parse("train.lr_conv")?,
            lr_decay: s.parse("train.lr_decay")?,
            lr_dense: s.parse("train.lr_dense")?,
            batch_size: s.positive("train.batch_size")?,
            iterations: s.positive("train.iterations")?,
            eval_every: s.positive("train.eval_every")?,
            parallel: s.parse("train.parallel")?,
            record_time: s.parse("train.record_time")?,
            output_dir: PathBuf::from(s.get("output.dir")),
            gradcheck,
            dtw_max_len: s.positive("dtwcheck.max_len")?,
            dtw_pairs: s.positive("dtwcheck.pairs")?,
            bench,
        };
        // Any input dim and class count will do for the time-axis check.
        cfg.geometry(1, 2)
            .shape_chain()
            .map_err(|e| invalid(format!("model geometry at dataset.length = {length}: {e}")))?;
        cfg.train_config(1, 2)
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn geometry(&self, input_dim: usize, classes: usize) -> ModelGeometry {
        ModelGeometry {
            input_len: self.data.length,
            input_dim,
            conv1: self.conv1,
            conv2: self.conv2,
            fc1: self.fc1,
            fc2: self.fc2,
            classes,
            mode: self.mode,
        }
    }

    pub fn train_config(&self, input_dim: usize, classes: usize) -> TrainConfig {
        TrainConfig {
            lr_conv: self.lr_conv,
            lr_decay: self.lr_decay,
            lr_dense: self.lr_dense,
            batch_size: self.batch_size,
            iterations: self.iterations,
            eval_every: self.eval_every,
            seed: self.seed,
            geometry: self.geometry(input_dim, classes),
            parallel: self.parallel,
            record_time: self.record_time,
            final_eval_f32: true,
        }
    }
}

/// Where settings come from, in increasing priority after the defaults.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub preset: Option<String>,
    pub config_file: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    /// Forces deterministic output: serial execution and no wall-clock column.
    pub serial: bool,
    /// Command options that turned up among the overrides, e.g. `checkpoint`.
    pub command_options: BTreeMap<String, String>,
    /// Valueless command switches found among the overrides.
    pub switches: Vec<String>,
}

impl Sources {
    pub fn settings(&self) -> CliResult<Settings> {
        let mut s = Settings::default();
        let file_pairs = match &self.config_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid(format!("config file {}: {e}", path.display())))?;
                parse_lines(&text, &path.display().to_string())?
            }
            None => Vec::new(),
        };
        // A preset named in the file applies beneath the file's own keys; a
        // --preset flag wins over it.
        let (file_preset, file_pairs): (Vec<_>, Vec<_>) = file_pairs.into_iter().partition(|(k, _)| k == "preset");
        let preset = self
            .preset
            .clone()
            .or_else(|| file_preset.last().map(|(_, v)| v.clone()))
            .unwrap_or_else(|| "synth".to_string());
        s.apply_preset(&preset)?;
        s.apply(&file_pairs)?;
        s.apply(&self.overrides)?;
        if self.serial {
            s.set("train.parallel", "false")?;
            s.set("train.record_time", "false")?;
        }
        Ok(s)
    }

    pub fn resolve(&self) -> CliResult<RunConfig> {
        RunConfig::from_settings(&self.settings()?)
    }
}

/// Command options taking a value.
pub const COMMAND_OPTIONS: [&str; 2] = ["checkpoint", "out"];
/// Command options taking no value.
pub const COMMAND_SWITCHES: [&str; 1] = ["corrupt-backward"];

/// Splits `--key=value`, `--key value` and `key=value` tokens. The flags
/// `--serial`, `--preset`, `--config` and the command options are recognised
/// here too, so they may appear after the first override.
pub fn parse_overrides(tokens: &[String], sources: &mut Sources) -> CliResult<()> {
    let mut it = tokens.iter().peekable();
    while let Some(tok) = it.next() {
        let body = tok.strip_prefix("--").unwrap_or(tok);
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if key == "serial" || COMMAND_SWITCHES.contains(&key.as_str()) {
            if value.is_some() {
                return Err(invalid(format!("--{key} takes no value")));
            }
            if key == "serial" {
                sources.serial = true;
            } else {
                sources.switches.push(key);
            }
            continue;
        }
        let value = match value {
            Some(v) => v,
            None if tok.starts_with("--") => match it.next() {
                Some(v) => v.clone(),
                None => return Err(invalid(format!("{key}: missing value"))),
            },
            None => return Err(invalid(format!("unexpected argument {tok:?}"))),
        };
        match key.as_str() {
            "preset" => sources.preset = Some(value),
            "config" => sources.config_file = Some(PathBuf::from(value)),
            k if COMMAND_OPTIONS.contains(&k) => {
                sources.command_options.insert(key, value);
            }
            _ => sources.overrides.push((key, value)),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn defaults_resolve() {
        let cfg = Sources::default().resolve().unwrap();
        assert_eq!(cfg.data.kind, DatasetKind::Synth);
        assert_eq!(cfg.conv1.width, 8);
        assert_eq!(cfg.batch_size, 20);
        assert_eq!(cfg.train_config(2, 4), {
            let mut t = TrainConfig::default();
            t.parallel = true;
            t.record_time = true;
            t
        });
    }

    #[test]
    fn override_forms() {
        let mut src = Sources::default();
        parse_overrides(&tokens("--train.iterations=7 --model.fc1 12 seed=3 --serial --preset synth"), &mut src)
            .unwrap();
        assert!(src.serial);
        let cfg = src.resolve().unwrap();
        assert_eq!((cfg.iterations, cfg.fc1, cfg.seed), (7, 12, 3));
        assert!(!cfg.parallel && !cfg.record_time);
        assert!(parse_overrides(&tokens("--seed"), &mut Sources::default()).is_err());
        let mut src = Sources::default();
        parse_overrides(&tokens("--seed 2 --corrupt-backward --checkpoint a.ckpt"), &mut src).unwrap();
        assert_eq!(src.switches, vec!["corrupt-backward"]);
        assert_eq!(src.command_options["checkpoint"], "a.ckpt");
        assert!(parse_overrides(&tokens("stray"), &mut Sources::default()).is_err());
    }

    #[test]
    fn errors_name_the_key() {
        let mut src = Sources::default();
        src.overrides.push(("train.batch_size".into(), "lots".into()));
        let err = src.resolve().unwrap_err().to_string();
        assert!(err.contains("train.batch_size"), "{err}");

        let mut src = Sources::default();
        src.overrides.push(("model.colour".into(), "red".into()));
        assert!(src.resolve().unwrap_err().to_string().contains("model.colour"));

        let src = Sources {
            preset: Some("unipen".into()),
            ..Sources::default()
        };
        assert!(src.resolve().unwrap_err().to_string().contains("dataset.path"));
    }

    #[test]
    fn geometry_without_outputs_is_rejected() {
        let mut src = Sources::default();
        src.overrides.push(("dataset.length".into(), "12".into()));
        let err = src.resolve().unwrap_err().to_string();
        assert!(err.contains("geometry"), "{err}");
    }

    #[test]
    fn config_file_layers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# demo\npreset = synth\ntrain.iterations = 9  # short\n\nmodel.conv_mode = linear\n").unwrap();
        let mut src = Sources {
            config_file: Some(path),
            ..Sources::default()
        };
        src.overrides.push(("train.iterations".into(), "11".into()));
        let cfg = src.resolve().unwrap();
        assert_eq!(cfg.iterations, 11);
        assert_eq!(cfg.mode, ConvMode::Linear);
    }

    #[test]
    fn rendered_settings_reload() {
        let s = Sources::default().settings().unwrap();
        let mut again = Settings::default();
        again.apply(&parse_lines(&s.to_text(), "x").unwrap()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn manifests() {
        assert_eq!(parse_manifest("k", "2x3,7").unwrap(), vec![2, 2, 2, 7]);
        assert_eq!(parse_manifest("k", "").unwrap(), Vec::<usize>::new());
        assert!(parse_manifest("k", "ax2").unwrap_err().to_string().contains("k"));
    }

    #[test]
    fn presets_parse() {
        for p in PRESETS {
            let mut s = Settings::default();
            s.apply_preset(p).unwrap();
        }
        let mut s = Settings::default();
        s.apply_preset("arabic").unwrap();
        assert_eq!(parse_manifest("m", s.get("dataset.train_manifest")).unwrap(), vec![660; 10]);
    }
}
