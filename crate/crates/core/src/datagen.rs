//! Toy targets, dataset ingestion and normalisation of private inputs.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Role};
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-9;
const ZERO_ROW: f64 = 1e-12;
const MIN_EIGENVALUE: f64 = 1e-12;

/// One weighted Gaussian component, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
struct Component {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

/// A validated finite Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    specs: Vec<ComponentSpec>,
    components: Vec<Component>,
    weights: WeightedIndex<f64>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(specs: Vec<ComponentSpec>) -> Result<Self> {
        let first = specs
            .first()
            .ok_or_else(|| Error::invalid("mixture needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be >= 1"));
        }
        let total: f64 = specs.iter().map(|c| c.weight).sum();
        if specs.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights must be positive and sum to 1 (sum = {total})"
            )));
        }
        let mut components = Vec::with_capacity(specs.len());
        for (k, spec) in specs.iter().enumerate() {
            if spec.mean.len() != dim
                || spec.covariance.len() != dim
                || spec.covariance.iter().any(|r| r.len() != dim)
            {
                return Err(Error::invalid(format!("component {k} has inconsistent dimensions")));
            }
            if spec.mean.iter().chain(spec.covariance.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("component {k} has non-finite entries")));
            }
            let cov = DMatrix::from_fn(dim, dim, |i, j| spec.covariance[i][j]);
            if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
                return Err(Error::invalid(format!("component {k} covariance is not symmetric")));
            }
            let min_eig = cov.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < MIN_EIGENVALUE {
                return Err(Error::invalid(format!(
                    "component {k} covariance is not positive definite (smallest eigenvalue {min_eig})"
                )));
            }
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::invalid(format!("component {k} covariance has no Cholesky factor")))?
                .l();
            let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let log_norm = spec.weight.ln()
                - 0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
            components.push(Component {
                mean: DVector::from_column_slice(&spec.mean),
                chol,
                log_norm,
            });
        }
        let weights = WeightedIndex::new(specs.iter().map(|c| c.weight))
            .map_err(|e| Error::invalid(format!("mixture weights: {e}")))?;
        Ok(GaussianMixture {
            specs,
            components,
            weights,
            dim,
        })
    }

    /// `n` equally weighted isotropic components with means evenly spaced on a
    /// centred circle of `radius`, each with covariance `variance * I_2`.
    pub fn ring(n: usize, radius: f64, variance: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ring needs at least one component"));
        }
        let specs = (0..n)
            .map(|k| {
                let angle = std::f64::consts::TAU * k as f64 / n as f64;
                ComponentSpec {
                    mean: vec![radius * angle.cos(), radius * angle.sin()],
                    covariance: vec![vec![variance, 0.0], vec![0.0, variance]],
                    weight: 1.0 / n as f64,
                }
            })
            .collect::<Vec<_>>();
        // Re-normalise so the weights sum to 1 to machine precision.
        let total: f64 = specs.iter().map(|c| c.weight).sum();
        let specs = specs
            .into_iter()
            .map(|mut c| {
                c.weight /= total;
                c
            })
            .collect();
        Self::new(specs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.specs
    }

    /// `n` i.i.d. draws: a categorical component choice, then `mean + L z`.
    pub fn sample(&self, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng::stream(seed, Role::Mixture, 0, 0);
        let mut out = Array2::zeros((n, self.dim));
        for mut row in out.axis_iter_mut(Axis(0)) {
            let c = &self.components[self.weights.sample(&mut rng)];
            let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &c.mean + &c.chol * z;
            row.iter_mut().zip(x.iter()).for_each(|(o, v)| *o = *v);
        }
        out
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        self.components
            .iter()
            .map(|c| {
                let y = c.chol.solve_lower_triangular(&(&x - &c.mean)).expect("Cholesky factor is invertible");
                (c.log_norm - 0.5 * y.norm_squared()).exp()
            })
            .sum()
    }

    /// Density level `t` such that `{x : p(x) >= t}` holds `mass` of the
    /// probability, estimated from `n_mc` draws.
    pub fn level_set_threshold(&self, mass: f64, n_mc: usize, seed: u64) -> Result<f64> {
        if !(mass > 0.0 && mass < 1.0) || n_mc == 0 {
            return Err(Error::invalid("level set needs 0 < mass < 1 and n_mc >= 1"));
        }
        let draws = self.sample(n_mc, seed);
        let mut dens: Vec<f64> = draws
            .axis_iter(Axis(0))
            .map(|r| self.density(r.as_slice().expect("standard layout")))
            .collect();
        dens.sort_by(f64::total_cmp);
        let idx = (((1.0 - mass) * n_mc as f64).floor() as usize).min(n_mc - 1);
        Ok(dens[idx])
    }

    /// Density on a regular 2D grid, as `[x, y, density]` triples (row-major in y).
    pub fn density_grid(&self, x_range: (f64, f64), y_range: (f64, f64), resolution: usize) -> Result<Vec<[f64; 3]>> {
        if self.dim != 2 {
            return Err(Error::invalid("density grid export needs a 2D mixture"));
        }
        if resolution < 2 {
            return Err(Error::invalid("grid resolution must be >= 2"));
        }
        let step = |(lo, hi): (f64, f64), k: usize| lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
        let mut out = Vec::with_capacity(resolution * resolution);
        for iy in 0..resolution {
            let y = step(y_range, iy);
            for ix in 0..resolution {
                let x = step(x_range, ix);
                out.push([x, y, self.density(&[x, y])]);
            }
        }
        Ok(out)
    }
}

pub fn sample_mixture(mixture: &GaussianMixture, n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    Ok(mixture.sample(n, seed))
}

/// The built-in 2D toy target and how many samples to draw from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyTarget {
    pub components: usize,
    pub radius: f64,
    pub variance: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ToyTarget {
    fn default() -> Self {
        ToyTarget {
            components: 5,
            radius: 6.0,
            variance: 0.25,
            samples: 1000,
            seed: 0,
        }
    }
}

impl ToyTarget {
    pub fn mixture(&self) -> Result<GaussianMixture> {
        GaussianMixture::ring(self.components, self.radius, self.variance)
    }

    pub fn sample(&self) -> Result<Array2<f64>> {
        sample_mixture(&self.mixture()?, self.samples, self.seed)
    }
}

/// A matrix of samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Array2<f64>,
    normalized: bool,
}

impl Dataset {
    /// Wraps `rows`, flagging them as normalised if every row already has unit norm.
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::invalid("dataset must have at least one row and one column"));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        let normalized = rows
            .axis_iter(Axis(0))
            .all(|r| (r.dot(&r).sqrt() - 1.0).abs() <= UNIT_TOL);
        Ok(Dataset { rows, normalized })
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(rows: ArrayView2<'_, f64>) -> Result<Dataset> {
    let mut out = rows.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm >= ZERO_ROW) || !norm.is_finite() {
            return Err(Error::invalid(format!("row {i} has norm {norm} and cannot be normalised")));
        }
        row.mapv_inplace(|v| v / norm);
    }
    let mut ds = Dataset::new(out)?;
    ds.normalized = true;
    Ok(ds)
}

/// Reads a headerless CSV of decimal floats, one sample per line.
pub fn load_dataset(path: impl AsRef<Path>, expect_dim: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_dataset(&text, path, expect_dim)
}

pub fn parse_dataset(text: &str, path: &Path, expect_dim: Option<usize>) -> Result<Dataset> {
    let err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(err(line, format!("expected {w} fields, found {}", record.len())));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(line, format!("cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
    }
    let Some(width) = width else {
        return Err(err(1, "empty dataset".into()));
    };
    if let Some(d) = expect_dim {
        if d != width {
            return Err(err(1, format!("expected dimension {d}, found {width}")));
        }
    }
    let rows = values.len() / width;
    let matrix = Array2::from_shape_vec((rows, width), values).expect("row width checked");
    Dataset::new(matrix)
}

/// Writes rows in the dataset CSV format using shortest round-trip float formatting.
pub fn save_dataset(path: impl AsRef<Path>, rows: ArrayView2<'_, f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_rows(&mut out, rows)?;
    out.flush()?;
    Ok(())
}

pub fn write_rows(out: &mut impl Write, rows: ArrayView2<'_, f64>) -> std::io::Result<()> {
    for row in rows.axis_iter(Axis(0)) {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b",")?;
            }
            write!(out, "{v:?}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
