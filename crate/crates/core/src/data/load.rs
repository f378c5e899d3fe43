use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::series::{Dataset, Series};
use crate::{Error, Result};

const MFCC_DIM: usize = 13;

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_row(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|tok| !tok.is_empty())
        .map(|tok| match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(parse_error(path, line, format!("non-finite value {tok:?}"))),
            Err(_) => Err(parse_error(path, line, format!("not a number: {tok:?}"))),
        })
        .collect()
}

fn to_matrix(rows: Vec<Vec<f64>>, dim: usize) -> Array2<f64> {
    let len = rows.len();
    Array2::from_shape_vec((len, dim), rows.into_iter().flatten().collect()).expect("rows have equal width")
}

/// Parses the Spoken Arabic Digit block format.
///
/// Every non-blank line is one frame of 13 numbers; runs of blank lines
/// separate utterances. `manifest[k]` consecutive blocks belong to class `k`.
pub fn parse_arabic(text: &str, path: &Path, manifest: &[usize]) -> Result<Dataset> {
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let row = parse_row(path, n + 1, line)?;
        if row.len() != MFCC_DIM {
            return Err(parse_error(
                path,
                n + 1,
                format!("expected {MFCC_DIM} coefficients, found {}", row.len()),
            ));
        }
        current.push(row);
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    if blocks.is_empty() {
        return Err(Error::Empty(format!("utterance file {}", path.display())));
    }
    let expected: usize = manifest.iter().sum();
    if manifest.is_empty() || expected != blocks.len() {
        return Err(Error::Invalid(format!(
            "{}: {} blocks but the class manifest {:?} accounts for {}",
            path.display(),
            blocks.len(),
            manifest,
            expected
        )));
    }
    let labels = manifest.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c));
    let items = blocks
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (rows, label))| {
            Ok(Series::labeled(to_matrix(rows, MFCC_DIM), label)?.with_id(format!("{}#{}", path.display(), i)))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(items, manifest.len())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))
}

/// Loads the predefined train/test files; manifests give blocks per class in file order.
pub fn load_arabic(
    train_path: &Path,
    test_path: &Path,
    train_manifest: &[usize],
    test_manifest: &[usize],
) -> Result<(Dataset, Dataset)> {
    if train_manifest.len() != test_manifest.len() {
        return Err(Error::Invalid(format!(
            "class manifests disagree on class count ({} vs {})",
            train_manifest.len(),
            test_manifest.len()
        )));
    }
    let train = parse_arabic(&read(train_path)?, train_path, train_manifest)?;
    let test = parse_arabic(&read(test_path)?, test_path, test_manifest)?;
    Ok((train, test))
}

/// A dataset read from `root/<class>/<sample>` files, with its class names.
#[derive(Debug, Clone, PartialEq)]
pub struct DelimitedDataset {
    pub dataset: Dataset,
    pub classes: Vec<String>,
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("list {}", dir.display()), e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("list {}", dir.display()), e))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && path.is_dir() == want_dirs {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_delimited(path: &Path) -> Result<Array2<f64>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    let mut width = None;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let row = parse_row(path, n + 1, line)?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_error(path, n + 1, format!("{} columns, earlier rows have {w}", row.len())));
            }
            _ => {}
        }
        rows.push(row);
    }
    match width {
        Some(w) => Ok(to_matrix(rows, w)),
        None => Err(Error::Empty(format!("sample file {}", path.display()))),
    }
}

/// Loads `root/<class>/<sample>` files with comma- or whitespace-separated rows.
///
/// Labels follow the lexicographic order of class directory names; samples
/// within a class are read in file-name order. Hidden entries are skipped.
pub fn load_delimited_dir(root: &Path) -> Result<DelimitedDataset> {
    let class_dirs = sorted_entries(root, true)?;
    if class_dirs.is_empty() {
        return Err(Error::Empty(format!("dataset directory {} (no class folders)", root.display())));
    }
    let mut items = Vec::new();
    let mut classes = Vec::new();
    let mut dim: Option<(usize, PathBuf)> = None;
    for (label, dir) in class_dirs.iter().enumerate() {
        let files = sorted_entries(dir, false)?;
        if files.is_empty() {
            return Err(Error::Empty(format!("class directory {}", dir.display())));
        }
        for file in files {
            let values = read_delimited(&file)?;
            match &dim {
                None => dim = Some((values.ncols(), file.clone())),
                Some((d, first)) if *d != values.ncols() => {
                    return Err(Error::Invalid(format!(
                        "{} has {} features but {} has {d}",
                        file.display(),
                        values.ncols(),
                        first.display()
                    )));
                }
                _ => {}
            }
            items.push(Series::labeled(values, label)?.with_id(file.display().to_string()));
        }
        classes.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }
    let dataset = Dataset::new(items, classes.len())?;
    Ok(DelimitedDataset { dataset, classes })
}

/// Writes one CSV per series under `root/<class name>/`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_delimited_dir(data: &Dataset, classes: &[String], root: &Path) -> Result<()> {
    if classes.len() != data.num_classes() {
        return Err(Error::Invalid(format!(
            "{} class names for {} classes",
            classes.len(),
            data.num_classes()
        )));
    }
    let mut counters = vec![0usize; classes.len()];
    for name in classes {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    }
    for item in data.items() {
        let label = item.label().unwrap_or(0);
        let path = root.join(&classes[label]).join(format!("{:05}.csv", counters[label]));
        counters[label] += 1;
        let mut text = String::new();
        for row in item.values().rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    }
    Ok(())
}
