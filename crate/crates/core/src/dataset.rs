//! Synthetic deterioration-cycle data: generation, splitting and CSV I/O.
//!
//! A dataset is a sequence of cycles. Each cycle walks the structure from
//! class 1 (undamaged) through class 4 (critical) before a repair resets it,
//! so labels within a cycle are non-decreasing. Features for each point are
//! drawn from the Gaussian of its class.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_lower, matrix_from_rows};

pub const NUM_CLASSES: usize = 4;

/// Structural health state, 1 = undamaged through 4 = critical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct HealthLabel(u8);

impl HealthLabel {
    pub const ALL: [HealthLabel; NUM_CLASSES] =
        [HealthLabel(1), HealthLabel(2), HealthLabel(3), HealthLabel(4)];

    pub fn new(value: i64) -> Result<Self> {
        match value {
            1..=4 => Ok(HealthLabel(value as u8)),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    /// Zero-based class index.
    pub fn from_index(index: usize) -> Result<Self> {
        Self::new(index as i64 + 1)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based class index.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<i64> for HealthLabel {
    type Error = Error;
    fn try_from(value: i64) -> Result<Self> {
        HealthLabel::new(value)
    }
}

impl From<HealthLabel> for i64 {
    fn from(label: HealthLabel) -> i64 {
        label.0 as i64
    }
}

impl fmt::Display for HealthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One time step of the monitored structure. `y_true` is hidden from the
/// learner until it pays for an inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: u64,
    pub x: Vec<f64>,
    pub y_true: HealthLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_cycles: usize,
    pub points_per_cycle: usize,
    pub class_proportions: [f64; NUM_CLASSES],
    pub class_means: Vec<Vec<f64>>,
    /// Row-major covariance per class.
    pub class_covariances: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl Default for DatasetConfig {
    /// Stand-in geometry with classes 3 and 4 overlapping the most. The
    /// original recorded corpus is not available, so these values are
    /// placeholders of similar shape rather than measured quantities.
    fn default() -> Self {
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let wide = vec![vec![1.5, 0.3], vec![0.3, 1.5]];
        Self {
            n_cycles: 6,
            points_per_cycle: 2000,
            class_proportions: [0.25; NUM_CLASSES],
            class_means: vec![
                vec![0.0, 0.0],
                vec![3.0, 0.0],
                vec![6.0, 2.0],
                vec![8.0, 4.5],
            ],
            class_covariances: vec![identity.clone(), identity, wide.clone(), wide],
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 || self.points_per_cycle == 0 {
            return Err(Error::InvalidConfig(
                "n_cycles and points_per_cycle must be positive".into(),
            ));
        }
        let total: f64 = self.class_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.class_proportions.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "class_proportions must be positive and sum to 1 (sum = {total})"
            )));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dimension must be positive".into()));
        }
        if self.class_means.len() != NUM_CLASSES || self.class_covariances.len() != NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "expected {NUM_CLASSES} class means and covariances"
            )));
        }
        for (k, mean) in self.class_means.iter().enumerate() {
            if mean.len() != dim || mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "class {} mean must have {dim} finite entries",
                    k + 1
                )));
            }
        }
        for (k, cov) in self.class_covariances.iter().enumerate() {
            let what = format!("class {} covariance", k + 1);
            let m = matrix_from_rows(cov, dim, &what)?;
            cholesky_lower(&m, &what)?;
        }
        Ok(())
    }

    /// Points per class in every cycle, remainder of rounding folded into
    /// class 1.
    pub fn class_counts(&self) -> Result<[usize; NUM_CLASSES]> {
        let per = self.points_per_cycle as f64;
        let mut counts = [0i64; NUM_CLASSES];
        for (c, p) in counts.iter_mut().zip(&self.class_proportions) {
            *c = (per * p).round() as i64;
        }
        counts[0] += self.points_per_cycle as i64 - counts.iter().sum::<i64>();
        if let Some(k) = counts.iter().position(|&c| c <= 0) {
            return Err(Error::InvalidConfig(format!(
                "class {} receives no points per cycle",
                k + 1
            )));
        }
        Ok(counts.map(|c| c as usize))
    }
}

/// Draws `n_cycles × points_per_cycle` observations, deterministic in the seed.
pub fn generate(config: &DatasetConfig) -> Result<Vec<Observation>> {
    config.validate()?;
    let dim = config.dim();
    let counts = config.class_counts()?;
    let factors = config
        .class_covariances
        .iter()
        .enumerate()
        .map(|(k, cov)| {
            let what = format!("class {} covariance", k + 1);
            cholesky_lower(&matrix_from_rows(cov, dim, &what)?, &what)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.n_cycles * config.points_per_cycle);
    let mut t = 0u64;
    for _ in 0..config.n_cycles {
        for (k, &count) in counts.iter().enumerate() {
            let label = HealthLabel::from_index(k)?;
            let mean = &config.class_means[k];
            for _ in 0..count {
                let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let offset = &factors[k] * z;
                let x = mean.iter().zip(offset.iter()).map(|(m, o)| m + o).collect();
                out.push(Observation { t, x, y_true: label });
                t += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub labeled_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.5,
            labeled_fraction: 0.002,
        }
    }
}

/// Disjoint partition of a dataset into the initial labeled set, the
/// unlabeled stream, and a held-out test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub labeled_seed: Vec<Observation>,
    /// In original time order.
    pub unlabeled_stream: Vec<Observation>,
    pub test: Vec<Observation>,
}

impl DatasetSplit {
    /// SHA-256 of the partition contents, hex-encoded. Two runs consumed the
    /// same split iff their fingerprints match.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (tag, part) in [
            (b'l', &self.labeled_seed),
            (b'u', &self.unlabeled_stream),
            (b't', &self.test),
        ] {
            hasher.update([tag]);
            hasher.update((part.len() as u64).to_le_bytes());
            for obs in part {
                hasher.update(obs.t.to_le_bytes());
                for v in &obs.x {
                    hasher.update(v.to_bits().to_le_bytes());
                }
                hasher.update([obs.y_true.value()]);
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Uniformly samples a test set, then an initial labeled subset of the
/// remaining training data. The rest is the unlabeled stream. There is no
/// per-class guarantee on the labeled subset.
pub fn split(
    data: &[Observation],
    test_fraction: f64,
    labeled_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if !(labeled_fraction > 0.0 && labeled_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "labeled_fraction must lie in (0, 1), got {labeled_fraction}"
        )));
    }
    let n = data.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::EmptySample {
            fraction: "test_fraction",
            value: test_fraction,
        });
    }
    let n_train = n - n_test;
    let n_labeled = ((n_train as f64 * labeled_fraction).round() as usize).max(1);
    if n_labeled >= n_train {
        return Err(Error::EmptySample {
            fraction: "labeled_fraction",
            value: labeled_fraction,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let take_sorted = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| data[i].clone()).collect::<Vec<_>>()
    };
    Ok(DatasetSplit {
        test: take_sorted(&order[..n_test]),
        labeled_seed: take_sorted(&order[n_test..n_test + n_labeled]),
        unlabeled_stream: take_sorted(&order[n_test + n_labeled..]),
    })
}

/// Writes `t,x1,..,xD,y` rows with 17 significant digits per real value.
pub fn write_csv<W: Write>(data: &[Observation], mut out: W) -> std::io::Result<()> {
    let dim = data.first().map_or(2, |o| o.x.len());
    let mut header = String::from("t");
    for i in 1..=dim {
        header.push_str(&format!(",x{i}"));
    }
    writeln!(out, "{header},y")?;
    for obs in data {
        write!(out, "{}", obs.t)?;
        for v in &obs.x {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out, ",{}", obs.y_true)?;
    }
    out.flush()
}

pub fn save_csv(data: &[Observation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Observation>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header_err = |message: String| Error::Csv { line: 1, message };
    let headers = reader
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let dim = cols.len().saturating_sub(2);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=dim).map(|i| format!("x{i}")))
        .chain(std::iter::once("y".to_string()))
        .collect();
    if dim == 0 || cols != expected {
        return Err(header_err(format!(
            "expected header {}, found {}",
            expected.join(","),
            cols.join(",")
        )));
    }

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Csv { line, message };
        if record.len() != dim + 2 {
            return Err(bad(format!("expected {} fields, found {}", dim + 2, record.len())));
        }
        let t = record[0]
            .parse::<u64>()
            .map_err(|e| bad(format!("bad time index {:?}: {e}", &record[0])))?;
        let x = (1..=dim)
            .map(|i| {
                let v = record[i]
                    .parse::<f64>()
                    .map_err(|e| bad(format!("bad feature {:?}: {e}", &record[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("non-finite feature {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let y_raw = record[dim + 1]
            .parse::<i64>()
            .map_err(|e| bad(format!("bad label {:?}: {e}", &record[dim + 1])))?;
        let y_true = HealthLabel::new(y_raw).map_err(|e| bad(e.to_string()))?;
        if let Some(prev) = out.last().map(|o: &Observation| o.t) {
            if t <= prev {
                return Err(bad(format!("time index {t} does not increase")));
            }
        }
        out.push(Observation { t, x, y_true });
    }
    Ok(out)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_cycles: usize, points_per_cycle: usize) -> DatasetConfig {
        DatasetConfig {
            n_cycles,
            points_per_cycle,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn default_corpus_shape() {
        let data = generate(&DatasetConfig::default()).unwrap();
        assert_eq!(data.len(), 12000);
        for cycle in 0..6 {
            let chunk = &data[cycle * 2000..(cycle + 1) * 2000];
            assert_eq!(chunk[0].t, 2000 * cycle as u64);
            assert_eq!(chunk[0].y_true.value(), 1);
            for k in 1..=4 {
                assert_eq!(chunk.iter().filter(|o| o.y_true.value() == k).count(), 500);
            }
            assert!(chunk.windows(2).all(|w| w[0].y_true <= w[1].y_true));
        }
        assert!(data.iter().enumerate().all(|(i, o)| o.t == i as u64));
    }

    #[test]
    fn four_points_one_per_class() {
        let data = generate(&small(1, 4)).unwrap();
        let labels: Vec<u8> = data.iter().map(|o| o.y_true.value()).collect();
        assert_eq!(labels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small(2, 100);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&generate(&cfg).unwrap(), &mut a).unwrap();
        write_csv(&generate(&cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let other = DatasetConfig { seed: 2, ..cfg };
        assert_ne!(generate(&other).unwrap(), generate(&small(2, 100)).unwrap());
    }

    #[test]
    fn rounding_remainder_goes_to_class_one() {
        let cfg = DatasetConfig {
            points_per_cycle: 10,
            class_proportions: [0.1, 0.3, 0.3, 0.3],
            ..DatasetConfig::default()
        };
        assert_eq!(cfg.class_counts().unwrap(), [1, 3, 3, 3]);
        let cfg = DatasetConfig {
            points_per_cycle: 7,
            ..DatasetConfig::default()
        };
        // round(1.75) = 2 each -> 8, class 1 gives one back.
        assert_eq!(cfg.class_counts().unwrap(), [1, 2, 2, 2]);
    }

    #[test]
    fn rejects_empty_class_and_bad_covariance() {
        assert!(generate(&small(1, 3)).is_err());
        let mut cfg = small(1, 8);
        cfg.class_covariances[2] = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(
            generate(&cfg),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let mut cfg = small(1, 8);
        cfg.class_proportions = [0.5, 0.5, 0.1, 0.1];
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn split_sizes_match_protocol() {
        let data: Vec<Observation> = (0..11997)
            .map(|t| Observation {
                t,
                x: vec![0.0, 0.0],
                y_true: HealthLabel::new(1).unwrap(),
            })
            .collect();
        let s = split(&data, 0.5, 0.002, 9).unwrap();
        assert_eq!(s.test.len(), 5999);
        assert_eq!(s.labeled_seed.len(), 12);
        assert_eq!(s.unlabeled_stream.len(), 11997 - 5999 - 12);
        assert!(s.unlabeled_stream.windows(2).all(|w| w[0].t < w[1].t));

        let tiny = split(&data[..100], 0.5, 0.001, 9).unwrap();
        assert_eq!(tiny.labeled_seed.len(), 1);
    }

    #[test]
    fn split_rejects_empty_samples() {
        let data = generate(&small(1, 8)).unwrap();
        assert!(matches!(
            split(&data, 0.01, 0.1, 0),
            Err(Error::EmptySample { fraction: "test_fraction", .. })
        ));
        assert!(matches!(
            split(&data, 0.5, 0.9, 0),
            Err(Error::EmptySample { fraction: "labeled_fraction", .. })
        ));
        assert!(split(&data, 1.0, 0.1, 0).is_err());
        assert!(split(&data, 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn csv_header_and_label_validation() {
        let data = generate(&small(1, 4)).unwrap();
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,y\n"));

        let mut lines: Vec<String> = (0..8).map(|t| format!("{t},0.5,1.5,2")).collect();
        lines[5] = "5,0.5,1.5,5".into();
        let body = format!("t,x1,x2,y\n{}\n", lines.join("\n"));
        match read_csv(body.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected csv error, got {other:?}"),
        }

        assert!(read_csv("t,a,b,y\n0,1,2,1\n".as_bytes()).is_err());
        assert!(matches!(
            read_csv("t,x1,x2,y\n0,1,oops,1\n".as_bytes()),
            Err(Error::Csv { line: 2, .. })
        ));
    }
}
