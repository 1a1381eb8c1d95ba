//! Embedding datasets, their CSV file format, and seedable synthetic
//! domain-shift generators.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::orthonormalize_columns;

const HEADER_MAGIC: &str = "#hypersfda-embeddings";
const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::Validation(format!("unknown domain tag '{other}'"))),
        }
    }
}

/// A matrix of sample embeddings with optional class labels.
///
/// Rows are samples. Target labels, when present, are only ever read by
/// evaluation code.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    domain: Domain,
    class_count: usize,
}

impl EmbeddingDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
        domain: Domain,
        class_count: usize,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::Validation(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if class_count == 0 {
            return Err(Error::Validation("class_count must be positive".into()));
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature at row {}, column {}",
                idx / d,
                idx % d
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
            if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
                return Err(Error::Validation(format!(
                    "label {l} at row {row} is not below class count {class_count}"
                )));
            }
        }
        Ok(Self { features, labels, domain, class_count })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// Same data with labels dropped.
    pub fn without_labels(&self) -> Self {
        Self { labels: None, ..self.clone() }
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Validation(format!("subset index {bad} out of range")));
        }
        let features = self.features.select(Axis(0), indices);
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::new(features, labels, self.domain, self.class_count)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<writer>", e);
        writeln!(
            w,
            "{HEADER_MAGIC} {FORMAT_VERSION} dim={} classes={} labeled={} domain={}",
            self.dim(),
            self.class_count,
            u8::from(self.is_labeled()),
            self.domain
        )
        .map_err(io)?;
        let mut line = String::new();
        for (i, row) in self.features.rows().into_iter().enumerate() {
            line.clear();
            match &self.labels {
                Some(l) => line.push_str(&l[i].to_string()),
                None => line.push('-'),
            }
            for v in row {
                line.push(',');
                // Display for f64 is the shortest string that round-trips
                line.push_str(&v.to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(Ok(h)) => h,
            Some(Err(e)) => return Err(Error::io("<reader>", e)),
            None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
        };
        let header = parse_header(&header)?;

        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut rows = 0usize;
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(|e| Error::io("<reader>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label_field = fields.next().unwrap_or("").trim();
            if header.labeled {
                let l: usize = label_field.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid label '{label_field}'"),
                })?;
                if l >= header.classes {
                    return Err(Error::Validation(format!(
                        "line {line_no}: label {l} is not below class count {}",
                        header.classes
                    )));
                }
                labels.push(l);
            } else if label_field != "-" {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected '-' for unlabeled row, found '{label_field}'"),
                });
            }
            let before = data.len();
            for f in fields {
                let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid float '{f}'"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line: line_no, msg: format!("non-finite value '{f}'") });
                }
                data.push(v);
            }
            let got = data.len() - before;
            if got != header.dim {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {} features, found {got}", header.dim),
                });
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Parse { line: 2, msg: "no sample rows".into() });
        }
        let features = Array2::from_shape_vec((rows, header.dim), data)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let labels = header.labeled.then_some(labels);
        Self::new(features, labels, header.domain, header.classes)
    }
}

struct Header {
    dim: usize,
    classes: usize,
    labeled: bool,
    domain: Domain,
}

fn parse_header(line: &str) -> Result<Header> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let mut parts = line.split_whitespace();
    if parts.next() != Some(HEADER_MAGIC) {
        return Err(bad(format!("header must start with '{HEADER_MAGIC}'")));
    }
    match parts.next() {
        Some(FORMAT_VERSION) => {}
        other => return Err(bad(format!("unsupported format version {other:?}"))),
    }
    let (mut dim, mut classes, mut labeled, mut domain) = (None, None, None, None);
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("malformed field '{kv}'")))?;
        match k {
            "dim" => dim = v.parse::<usize>().ok(),
            "classes" => classes = v.parse::<usize>().ok(),
            "labeled" => {
                labeled = match v {
                    "0" => Some(false),
                    "1" => Some(true),
                    _ => None,
                }
            }
            "domain" => domain = v.parse::<Domain>().ok(),
            _ => return Err(bad(format!("unknown header field '{k}'"))),
        }
    }
    match (dim, classes, labeled, domain) {
        (Some(dim), Some(classes), Some(labeled), Some(domain)) if dim > 0 && classes > 0 => {
            Ok(Header { dim, classes, labeled, domain })
        }
        _ => Err(bad("header needs dim>0, classes>0, labeled=0|1 and domain=source|target".into())),
    }
}

pub fn save_dataset(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    ds.write_csv(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingDataset::read_csv(file)
}

/// Description of the covariate shift applied to the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Rotation in radians within the first coordinate plane.
    pub rotation_angle: f64,
    /// Added to every target sample; empty means no translation.
    pub translation: Vec<f64>,
    /// Extra isotropic noise on target samples.
    pub noise_sigma: f64,
    /// Per-class target sampling weights; `None` keeps classes balanced.
    pub class_prior_drift: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            rotation_angle: 0.0,
            translation: Vec::new(),
            noise_sigma: 0.0,
            class_prior_drift: None,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn rotation_deg(deg: f64) -> Self {
        Self { rotation_angle: deg.to_radians(), ..Self::default() }
    }

    fn validate(&self, dim: usize, class_count: usize) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.rotation_angle.is_finite() {
            return Err(Error::Config("rotation_angle must be finite".into()));
        }
        if !self.translation.is_empty() && self.translation.len() != dim {
            return Err(Error::Config(format!(
                "translation has length {}, expected {dim}",
                self.translation.len()
            )));
        }
        if let Some(w) = &self.class_prior_drift {
            if w.len() != class_count {
                return Err(Error::Config(format!(
                    "class_prior_drift has {} weights for {class_count} classes",
                    w.len()
                )));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config("class_prior_drift weights must be >= 0 and sum to 1".into()));
            }
        }
        Ok(())
    }

    fn apply(&self, point: &mut [f64], rng: &mut ChaCha8Rng) {
        let (s, c) = self.rotation_angle.sin_cos();
        let (x0, x1) = (point[0], point[1]);
        point[0] = c * x0 - s * x1;
        point[1] = s * x0 + c * x1;
        for (j, v) in point.iter_mut().enumerate() {
            if let Some(t) = self.translation.get(j) {
                *v += t;
            }
        }
        if self.noise_sigma > 0.0 {
            for v in point.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += self.noise_sigma * e;
            }
        }
    }

    fn target_labels(&self, n: usize, class_count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match &self.class_prior_drift {
            Some(w) => {
                let dist = WeightedIndex::new(w).expect("weights validated");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            None => (0..n).map(|i| i % class_count).collect(),
        }
    }
}

/// Shape of the Gaussian mixture behind [`gen_gaussian_domains`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    /// Within-class standard deviation.
    pub sigma: f64,
    /// Pairwise distance between class means, in units of `sigma`.
    pub separation: f64,
    /// Constant added to every coordinate after the shift, so embeddings
    /// are mostly non-negative like pooled backbone features.
    pub offset: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        Self { sigma: 1.0, separation: 4.0, offset: 4.0 }
    }
}

fn rngs(seed: u64, shift_seed: u64) -> (ChaCha8Rng, ChaCha8Rng, ChaCha8Rng) {
    let mut structure = ChaCha8Rng::seed_from_u64(seed);
    structure.set_stream(0);
    let mut source = ChaCha8Rng::seed_from_u64(seed);
    source.set_stream(1);
    let mut target = ChaCha8Rng::seed_from_u64(seed ^ shift_seed.rotate_left(29));
    target.set_stream(2);
    (structure, source, target)
}

fn check_counts(n_source: usize, n_target: usize, min: usize) -> Result<()> {
    if n_source < min || n_target < min {
        return Err(Error::Config(format!(
            "sample counts must be at least {min}, got n_source={n_source}, n_target={n_target}"
        )));
    }
    Ok(())
}

/// Class means on a regular polygon with a random phase in the first
/// coordinate plane, adjacent vertices `distance` apart. For two or three
/// classes this is the regular simplex; for more classes it keeps every
/// class in the plane the target rotation acts on.
fn polygon_means(class_count: usize, dim: usize, distance: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let c = class_count;
    let step = 2.0 * PI / c as f64;
    let radius = distance / (2.0 * (step / 2.0).sin());
    let phase = rng.random::<f64>() * step;
    let mut means = Array2::<f64>::zeros((c, dim));
    for i in 0..c {
        let angle = step * i as f64 + phase;
        means[[i, 0]] = radius * angle.cos();
        means[[i, 1]] = radius * angle.sin();
    }
    means
}

/// Labeled source mixture and a shifted target mixture drawn from it.
pub fn gen_gaussian_domains(
    class_count: usize,
    dim: usize,
    n_source: usize,
    n_target: usize,
    shift: &ShiftSpec,
    seed: u64,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    gen_gaussian_domains_with(class_count, dim, n_source, n_target, shift, seed, MixtureParams::default())
}

pub fn gen_gaussian_domains_with(
    class_count: usize,
    dim: usize,
    n_source: usize,
    n_target: usize,
    shift: &ShiftSpec,
    seed: u64,
    params: MixtureParams,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    if class_count < 2 {
        return Err(Error::Config(format!("class count must be at least 2, got {class_count}")));
    }
    if dim < 2 {
        return Err(Error::Config(format!("dimension must be at least 2, got {dim}")));
    }
    check_counts(n_source, n_target, class_count)?;
    if !(params.sigma > 0.0 && params.separation > 0.0 && params.offset.is_finite()) {
        return Err(Error::Config("sigma and separation must be positive, offset finite".into()));
    }
    shift.validate(dim, class_count)?;

    let (mut structure, mut src_rng, mut tgt_rng) = rngs(seed, shift.seed);
    let means = polygon_means(class_count, dim, params.separation * params.sigma, &mut structure);

    let draw = |label: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        means
            .row(label)
            .iter()
            .map(|&m| m + params.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let src_labels: Vec<usize> = (0..n_source).map(|i| i % class_count).collect();
    let mut src = Vec::with_capacity(n_source * dim);
    for &l in &src_labels {
        src.extend(draw(l, &mut src_rng).into_iter().map(|v| v + params.offset));
    }

    let tgt_labels = shift.target_labels(n_target, class_count, &mut tgt_rng);
    let mut tgt = Vec::with_capacity(n_target * dim);
    for &l in &tgt_labels {
        let mut p = draw(l, &mut tgt_rng);
        shift.apply(&mut p, &mut tgt_rng);
        tgt.extend(p.into_iter().map(|v| v + params.offset));
    }

    let source = EmbeddingDataset::new(
        Array2::from_shape_vec((n_source, dim), src).expect("sized"),
        Some(src_labels),
        Domain::Source,
        class_count,
    )?;
    let target = EmbeddingDataset::new(
        Array2::from_shape_vec((n_target, dim), tgt).expect("sized"),
        Some(tgt_labels),
        Domain::Target,
        class_count,
    )?;
    Ok((source, target))
}

/// Two interleaved half circles embedded into `dim` dimensions.
///
/// The target rotation acts in the plane of the moons, so a rotation by π
/// swaps the sides the two classes occupy.
pub fn gen_two_moons_domains(
    dim: usize,
    n_source: usize,
    n_target: usize,
    shift: &ShiftSpec,
    seed: u64,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    const MOON_NOISE: f64 = 0.1;
    if dim < 2 {
        return Err(Error::Config(format!("dimension must be at least 2, got {dim}")));
    }
    check_counts(n_source, n_target, 2)?;
    shift.validate(dim, 2)?;
    let (mut structure, mut src_rng, mut tgt_rng) = rngs(seed, shift.seed);

    // fixed random affine lift: orthonormal columns plus an offset
    let mut lift = Array2::from_shape_fn((dim, 2), |_| structure.sample::<f64, _>(StandardNormal));
    orthonormalize_columns(&mut lift);
    let offset = Array1::from_iter((0..dim).map(|_| structure.sample::<f64, _>(StandardNormal)));

    let moon = |label: usize, rng: &mut ChaCha8Rng| -> [f64; 2] {
        let t = rng.random::<f64>() * PI;
        let (x, y) = if label == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        // centered on the midpoint of the two moons
        [x - 0.5 + MOON_NOISE * ex, y - 0.25 + MOON_NOISE * ey]
    };
    let embed = |p: [f64; 2]| -> Vec<f64> {
        (0..dim).map(|j| lift[[j, 0]] * p[0] + lift[[j, 1]] * p[1] + offset[j]).collect()
    };

    let src_labels: Vec<usize> = (0..n_source).map(|i| i % 2).collect();
    let mut src = Vec::with_capacity(n_source * dim);
    for &l in &src_labels {
        src.extend(embed(moon(l, &mut src_rng)));
    }

    let tgt_labels = shift.target_labels(n_target, 2, &mut tgt_rng);
    let (s, c) = shift.rotation_angle.sin_cos();
    let mut tgt = Vec::with_capacity(n_target * dim);
    for &l in &tgt_labels {
        let [x, y] = moon(l, &mut tgt_rng);
        let mut p = embed([c * x - s * y, s * x + c * y]);
        for (j, v) in p.iter_mut().enumerate() {
            if let Some(t) = shift.translation.get(j) {
                *v += t;
            }
            if shift.noise_sigma > 0.0 {
                *v += shift.noise_sigma * tgt_rng.sample::<f64, _>(StandardNormal);
            }
        }
        tgt.extend(p);
    }

    let source = EmbeddingDataset::new(
        Array2::from_shape_vec((n_source, dim), src).expect("sized"),
        Some(src_labels),
        Domain::Source,
        2,
    )?;
    let target = EmbeddingDataset::new(
        Array2::from_shape_vec((n_target, dim), tgt).expect("sized"),
        Some(tgt_labels),
        Domain::Target,
        2,
    )?;
    Ok((source, target))
}
