use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dwa_core::align::{align, validate_matches};
use dwa_core::data::{
    hold_out, load_arabic, load_delimited_dir, resample_dataset, split, synth_part, write_delimited_dir, Standardizer,
    SynthSpec,
};
use dwa_core::nn::{ConvMode, ModelGeometry, ModelState, ParamGroup, PassOptions};
use dwa_core::rng::Rng;
use dwa_core::series::Dataset;
use dwa_core::train::{
    evaluate, load_checkpoint, save_checkpoint, train_loop, Checkpoint, Evaluation, MetricsWriter,
};
use dwa_core::verify::{brute_force_dtw, finite_diff_check_with, GradCheckOptions};
use ndarray::Array2;
use rand::Rng as _;

use crate::config::{DatasetKind, RunConfig, Settings, SynthConfig};
use crate::error::{invalid, CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Train, optional validation and test sets, resampled and normalised.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Dataset,
}

impl Splits {
    pub fn input_dim(&self) -> usize {
        self.train.feature_dim()
    }

    pub fn classes(&self) -> usize {
        self.train.num_classes()
    }
}

pub fn synth_spec(synth: &SynthConfig, length: usize, per_class: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        classes: synth.classes,
        samples_per_class: per_class,
        length,
        dim: synth.dim,
        warp: synth.warp,
        noise: synth.noise,
        seed,
    }
}

/// The full data pipeline: load or generate, split, resample to
/// `dataset.length`, then z-score with training statistics.
pub fn load_splits(cfg: &RunConfig) -> CliResult<Splits> {
    let d = &cfg.data;
    let (train, validation, test) = match d.kind {
        DatasetKind::Synth => {
            let s = &d.synth;
            let train = synth_part(&synth_spec(s, d.length, s.train_per_class, cfg.seed), 0)?;
            let test = synth_part(&synth_spec(s, d.length, s.test_per_class, cfg.seed), 1)?;
            let val = match s.validation_per_class {
                0 => None,
                n => Some(synth_part(&synth_spec(s, d.length, n, cfg.seed), 2)?),
            };
            (train, val, test)
        }
        DatasetKind::Arabic => {
            let dir = d.path.as_deref().unwrap_or(Path::new("."));
            let (train, test) = load_arabic(
                &dir.join(&d.train_file),
                &dir.join(&d.test_file),
                &d.train_manifest,
                &d.test_manifest,
            )?;
            match d.split.validation_count {
                0 => (train, None, test),
                n => {
                    let (rest, val) = hold_out(&train, n, d.split.seed)?;
                    (rest, Some(val), test)
                }
            }
        }
        DatasetKind::Delimited => {
            let root = d.path.as_deref().unwrap_or(Path::new("."));
            let all = load_delimited_dir(root)?.dataset;
            let (train, val, test) = split(&all, &d.split)?;
            let val = (!val.is_empty()).then_some(val);
            (train, val, test)
        }
    };
    if test.is_empty() {
        return Err(CliError::Runtime(dwa_core::Error::Empty("test set".into())));
    }
    let train = resample_dataset(&train, d.length)?;
    let test = resample_dataset(&test, d.length)?;
    let validation = validation.map(|v| resample_dataset(&v, d.length)).transpose()?;
    if !d.normalize {
        return Ok(Splits { train, validation, test });
    }
    let stats = Standardizer::fit(&train)?;
    Ok(Splits {
        train: stats.apply(&train)?,
        validation: validation.map(|v| stats.apply(&v)).transpose()?,
        test: stats.apply(&test)?,
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub test_accuracy: f64,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<TrainSummary> {
    let splits = load_splits(cfg)?;
    let tc = cfg.train_config(splits.input_dim(), splits.classes());
    std::fs::create_dir_all(&cfg.output_dir)?;
    let metrics = cfg.output_dir.join(METRICS_FILE);
    let checkpoint = cfg.output_dir.join(CHECKPOINT_FILE);

    writeln!(
        out,
        "training {} model: {} train / {} test items, {} x {} input, {} classes",
        cfg.mode,
        splits.train.len(),
        splits.test.len(),
        cfg.data.length,
        splits.input_dim(),
        splits.classes()
    )?;
    let mut writer = MetricsWriter::create(&metrics)?;
    let outcome = train_loop(&tc, &splits.train, splits.validation.as_ref(), &splits.test, |row| {
        writer.append(row)?;
        let _ = writeln!(out, "{}", row.to_csv());
        Ok(())
    })?;
    let ckpt = Checkpoint {
        model: outcome.model,
        iteration: outcome.iterations as u64,
        rng: outcome.rng,
    };
    save_checkpoint(&ckpt, &checkpoint)?;
    let test_accuracy = outcome.log.last().map(|r| r.test_acc).unwrap_or(0.0);
    writeln!(out, "final test accuracy: {test_accuracy:.6}")?;
    writeln!(out, "wrote {} and {}", metrics.display(), checkpoint.display())?;
    Ok(TrainSummary {
        test_accuracy,
        metrics,
        checkpoint,
    })
}

pub fn render_confusion(eval: &Evaluation) -> String {
    let k = eval.confusion.nrows();
    let mut s = String::from("true\\pred");
    for j in 0..k {
        s.push_str(&format!("\t{j}"));
    }
    s.push('\n');
    for i in 0..k {
        s.push_str(&i.to_string());
        for j in 0..k {
            s.push_str(&format!("\t{}", eval.confusion[(i, j)]));
        }
        s.push('\n');
    }
    s
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, out: &mut dyn Write) -> CliResult<Evaluation> {
    let ckpt = load_checkpoint(checkpoint)?;
    let splits = load_splits(cfg)?;
    let g = ckpt.model.geometry();
    let want = (cfg.data.length, splits.input_dim(), splits.classes());
    if (g.input_len, g.input_dim, g.classes) != want {
        return Err(invalid(format!(
            "checkpoint {} expects {} x {} inputs and {} classes, dataset gives {} x {} and {}",
            checkpoint.display(),
            g.input_len,
            g.input_dim,
            g.classes,
            want.0,
            want.1,
            want.2
        )));
    }
    let eval = evaluate(&ckpt.model, &splits.test, cfg.parallel)?;
    writeln!(
        out,
        "test accuracy: {:.6} ({}/{}) after {} iterations",
        eval.accuracy, eval.correct, eval.total, ckpt.iteration
    )?;
    write!(out, "{}", render_confusion(&eval))?;
    Ok(eval)
}

/// Random inputs and round-robin labels for one oracle case.
fn random_batch(g: &ModelGeometry, size: usize, seed: u64) -> (Vec<Array2<f64>>, Vec<usize>) {
    let mut rng = Rng::aux(seed, 70);
    let xs = (0..size)
        .map(|_| Array2::from_shape_simple_fn((g.input_len, g.input_dim), || rng.random_range(-1.0..1.0)))
        .collect();
    (xs, (0..size).map(|i| i % g.classes).collect())
}

/// Returns the largest relative error seen. `corrupt` perturbs the analytic
/// gradient so the check can be seen to fail.
pub fn cmd_gradcheck(cfg: &RunConfig, corrupt: bool, out: &mut dyn Write) -> CliResult<f64> {
    let gc = &cfg.gradcheck;
    let opts = GradCheckOptions {
        h: gc.h,
        threshold: gc.threshold,
        freeze_alignment: gc.freeze,
        ..GradCheckOptions::default()
    };
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    writeln!(out, "mode\tseed\tmax_rel\tpass")?;
    for seed in 0..gc.seeds {
        let model = ModelState::init(gc.geometry.clone(), seed)?;
        let (xs, labels) = random_batch(&gc.geometry, gc.batch, seed);
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let report = finite_diff_check_with(&model, &views, &labels, &opts, |g| {
            if corrupt {
                g.group_mut(ParamGroup::Conv1Weights).iter_mut().for_each(|v| *v *= 1.01);
            }
        })?;
        worst = worst.max(report.max_relative());
        writeln!(
            out,
            "{}\t{seed}\t{:.3e}\t{}",
            gc.geometry.mode,
            report.max_relative(),
            report.passed
        )?;
        if !report.passed {
            write!(out, "{}", report.to_tsv())?;
            failed.push(seed);
        }
    }
    if failed.is_empty() {
        Ok(worst)
    } else {
        Err(CliError::OracleFailed(format!(
            "gradient check above {:e} for seeds {failed:?}",
            gc.threshold
        )))
    }
}

/// Compares the DP against exhaustive search for every `I = J` up to
/// `dtwcheck.max_len`. Returns the number of pairs checked.
pub fn cmd_dtwcheck(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<usize> {
    let mut rng = Rng::aux(cfg.seed, 71);
    let mut checked = 0;
    let mut problems = Vec::new();
    writeln!(out, "length\tpairs\tcost_mismatches\tinvalid_paths\tnon_argmin")?;
    for len in 1..=cfg.dtw_max_len {
        let (mut cost_bad, mut invalid_path, mut not_argmin) = (0, 0, 0);
        for _ in 0..cfg.dtw_pairs {
            let dim = rng.random_range(1..=3);
            let w = Array2::from_shape_simple_fn((len, dim), || rng.random_range(-1.0..1.0));
            let a = Array2::from_shape_simple_fn((len, dim), || rng.random_range(-1.0..1.0));
            let path = align(w.view(), a.view())?;
            let (cost, argmin) = brute_force_dtw(w.view(), a.view())?;
            cost_bad += (path.cost() != cost) as usize;
            invalid_path += validate_matches(path.matches(), len).is_err() as usize;
            not_argmin += (!argmin.iter().any(|p| p == path.matches())) as usize;
            checked += 1;
        }
        writeln!(out, "{len}\t{}\t{cost_bad}\t{invalid_path}\t{not_argmin}", cfg.dtw_pairs)?;
        if cost_bad + invalid_path + not_argmin > 0 {
            problems.push(len);
        }
    }
    if problems.is_empty() {
        Ok(checked)
    } else {
        Err(CliError::OracleFailed(format!("DTW disagrees with exhaustive search at lengths {problems:?}")))
    }
}

/// Writes the synthetic training part as a delimited directory.
pub fn cmd_synth(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> CliResult<Dataset> {
    let s = &cfg.data.synth;
    let data = synth_part(&synth_spec(s, cfg.data.length, s.train_per_class, cfg.seed), 0)?;
    let names: Vec<String> = (0..s.classes).map(|k| format!("class_{k:02}")).collect();
    write_delimited_dir(&data, &names, dir)?;
    writeln!(
        out,
        "wrote {} series ({} classes x {}) to {}",
        data.len(),
        s.classes,
        s.train_per_class,
        dir.display()
    )?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub geometry: ModelGeometry,
    pub dwa_median: f64,
    pub dwa_p95: f64,
    pub linear_median: f64,
    pub linear_p95: f64,
}

impl BenchRow {
    pub fn ratio(&self) -> f64 {
        self.dwa_median / self.linear_median
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn time_forward(model: &ModelState, x: &Array2<f64>, warmup: usize, repeats: usize) -> CliResult<(f64, f64)> {
    let batch = [x.view()];
    for _ in 0..warmup {
        std::hint::black_box(model.forward(&batch, PassOptions::inference())?);
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(model.forward(&batch, PassOptions::inference())?);
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok((percentile(&times, 50.0), percentile(&times, 95.0)))
}

fn bench_geometry(name: &str, g: ModelGeometry, cfg: &RunConfig) -> CliResult<BenchRow> {
    let mut model = ModelState::init(ModelGeometry { mode: ConvMode::Dwa, ..g.clone() }, cfg.seed)?;
    // Inference needs running batch-norm statistics.
    let (xs, _) = random_batch(&g, 4, cfg.seed);
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let trace = model.forward(&views, PassOptions::train())?;
    model.update_running_stats(&trace);
    let linear = model.clone().with_mode(ConvMode::Linear);
    let (dwa_median, dwa_p95) = time_forward(&model, &xs[0], cfg.bench.warmup, cfg.bench.repeats)?;
    let (linear_median, linear_p95) = time_forward(&linear, &xs[0], cfg.bench.warmup, cfg.bench.repeats)?;
    Ok(BenchRow {
        name: name.to_string(),
        geometry: g,
        dwa_median,
        dwa_p95,
        linear_median,
        linear_p95,
    })
}

/// Single-sample forward latency in both conv modes, same weights.
pub fn cmd_bench(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<Vec<BenchRow>> {
    let mut cases = Vec::new();
    if cfg.bench.presets.is_empty() {
        cases.push(("config".to_string(), cfg.geometry(cfg.bench.dim, cfg.data.synth.classes)));
    }
    for name in &cfg.bench.presets {
        let mut s = Settings::default();
        s.apply_preset(name)?;
        s.set("dataset.kind", "synth")?;
        let pc = RunConfig::from_settings(&s)?;
        cases.push((name.clone(), pc.geometry(pc.bench.dim, pc.data.synth.classes)));
    }
    writeln!(
        out,
        "geometry\tL\tD\tconv1\tconv2\tdwa_median_ms\tdwa_p95_ms\tlinear_median_ms\tlinear_p95_ms\tratio"
    )?;
    let mut rows = Vec::new();
    for (name, g) in cases {
        let row = bench_geometry(&name, g, cfg)?;
        let g = &row.geometry;
        writeln!(
            out,
            "{}\t{}\t{}\t{}x{}/{}\t{}x{}/{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.2}",
            row.name,
            g.input_len,
            g.input_dim,
            g.conv1.filters,
            g.conv1.width,
            g.conv1.stride,
            g.conv2.filters,
            g.conv2.width,
            g.conv2.stride,
            row.dwa_median * 1e3,
            row.dwa_p95 * 1e3,
            row.linear_median * 1e3,
            row.linear_p95 * 1e3,
            row.ratio()
        )?;
        rows.push(row);
    }
    Ok(rows)
}
