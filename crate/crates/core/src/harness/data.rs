use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::gp::{Dataset, Task};
use crate::linalg::{stream_rng, Matrix, Vector};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadOptions {
    /// Keep this many rows, drawn without replacement.
    pub subsample: Option<usize>,
    pub seed: u64,
    /// Raw label mapped to +1; every other label becomes -1. Defaults to the
    /// most frequent label (ties go to the smaller value), or the larger of
    /// two labels when both are equally frequent.
    pub positive_class: Option<f64>,
}

/// Reads a headerless comma-separated file whose last column is the target.
pub fn read_csv(path: &Path) -> Result<(Matrix, Vector)> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::MalformedRow {
                    line,
                    reason: format!("`{f}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() < 2 {
            return Err(Error::MalformedRow {
                line,
                reason: "need at least one feature and a target".into(),
            });
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = rows[0].len() - 1;
    let x = Matrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let y = Vector::from_fn(rows.len(), |i, _| rows[i][d]);
    Ok((x, y))
}

/// Loads, optionally subsamples, standardizes features to mean 0 and
/// standard deviation 1, centers regression targets and maps class labels
/// to ±1.
pub fn load_dataset(path: &Path, task: Task, options: &LoadOptions) -> Result<Dataset> {
    let (x, y) = read_csv(path)?;
    prepare(x, y, task, options)
}

pub fn prepare(x: Matrix, y: Vector, task: Task, options: &LoadOptions) -> Result<Dataset> {
    let (mut x, mut y) = match options.subsample {
        Some(m) if m < x.nrows() => {
            if m == 0 {
                return Err(Error::EmptyDataset);
            }
            let mut rng = stream_rng(options.seed, u64::MAX);
            let mut idx = sample(&mut rng, x.nrows(), m).into_vec();
            idx.sort_unstable();
            (x.select_rows(idx.iter()), Vector::from_iterator(m, idx.iter().map(|&i| y[i])))
        }
        _ => (x, y),
    };
    standardize_columns(&mut x);
    match task {
        Task::Regression => {
            let mean = y.mean();
            y.add_scalar_mut(-mean);
        }
        Task::Classification => {
            let positive = options.positive_class.unwrap_or_else(|| default_positive(&y));
            y.apply(|v| *v = if *v == positive { 1.0 } else { -1.0 });
        }
    }
    Dataset::new(x, y, task)
}

fn standardize_columns(x: &mut Matrix) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}

fn default_positive(y: &Vector) -> f64 {
    let mut counts: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for &v in y.iter() {
        counts.entry(v.to_bits() as i64).or_insert((v, 0)).1 += 1;
    }
    let mut classes: Vec<(f64, usize)> = counts.into_values().collect();
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));
    if classes.len() == 2 && classes[0].1 == classes[1].1 {
        return classes[1].0;
    }
    classes
        .iter()
        .fold((f64::NAN, 0usize), |best, &(v, c)| if c > best.1 { (v, c) } else { best })
        .0
}

/// Synthetic inputs `x ~ U(-2, 2)^d` with a smooth latent function
/// `g(x) = Σ_r sin(1.5·x_r)`. Regression adds Gaussian noise of variance
/// 0.1; classification labels are the sign of `g(x) + ε`, `ε ~ N(0, 0.25)`.
pub fn synthetic_dataset(n: usize, d: usize, task: Task, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let unif = Uniform::new(-2.0, 2.0).expect("valid range");
    let x = Matrix::from_fn(n, d, |_, _| unif.sample(&mut rng));
    let y = Vector::from_fn(n, |i, _| {
        let g: f64 = x.row(i).iter().map(|v| (1.5 * v).sin()).sum();
        let e: f64 = StandardNormal.sample(&mut rng);
        match task {
            Task::Regression => g + 0.1f64.sqrt() * e,
            Task::Classification => {
                if g + 0.5 * e >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    });
    prepare(x, y, task, &LoadOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_rows_standardize_exactly() {
        let f = write("1,10,3.5\n3,20,4.5\n");
        let d = load_dataset(f.path(), Task::Regression, &LoadOptions::default()).unwrap();
        assert_eq!((d.len(), d.input_dim()), (2, 2));
        for col in d.x.column_iter() {
            assert_eq!(col.sum(), 0.0);
        }
        assert_eq!(d.y.sum(), 0.0);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let f = write("1,2,3\n4,x,6\n");
        match load_dataset(f.path(), Task::Regression, &LoadOptions::default()) {
            Err(Error::MalformedRow { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let f = write("1,2,3\n4,5\n");
        assert!(matches!(
            load_dataset(f.path(), Task::Regression, &LoadOptions::default()),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        let f = write("");
        assert!(matches!(
            load_dataset(f.path(), Task::Regression, &LoadOptions::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_dataset(Path::new("/no/such/file.csv"), Task::Regression, &LoadOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn subsampling_is_deterministic() {
        let body: String = (0..50).map(|i| format!("{i},{},{}\n", i * i, i % 3)).collect();
        let f = write(&body);
        let opts = LoadOptions {
            subsample: Some(20),
            seed: 4,
            positive_class: None,
        };
        let a = load_dataset(f.path(), Task::Classification, &opts).unwrap();
        let b = load_dataset(f.path(), Task::Classification, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
    }

    #[test]
    fn one_vs_rest_uses_largest_class() {
        let y = Vector::from_vec(vec![1.0, 2.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(default_positive(&y), 2.0);
        let y = Vector::from_vec(vec![2.0, 4.0, 4.0, 2.0]);
        assert_eq!(default_positive(&y), 4.0);
    }

    #[test]
    fn synthetic_sets_have_the_requested_shape() {
        let d = synthetic_dataset(40, 2, Task::Regression, 1).unwrap();
        assert_eq!((d.len(), d.input_dim()), (40, 2));
        let c = synthetic_dataset(30, 3, Task::Classification, 1).unwrap();
        assert!(c.y.iter().any(|&v| v == 1.0) && c.y.iter().any(|&v| v == -1.0));
    }
}
