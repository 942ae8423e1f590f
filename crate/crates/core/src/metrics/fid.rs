use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gnr_formats::FeatureCache;

use crate::error::{Error, Result};

/// Relative amount of negative spectrum tolerated before the covariance
/// product is declared broken.
pub const CLAMP_TOLERANCE: f64 = 1e-3;

/// `rows x dim` feature vectors (row-major) tagged with their extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    rows: usize,
    dim: usize,
    pub extractor_id: String,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(rows: usize, dim: usize, extractor_id: impl Into<String>, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows * dim != data.len() {
            return Err(Error::Shape(format!("{} values for {rows} x {dim} features", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature values".into()));
        }
        Ok(Self {
            rows,
            dim,
            extractor_id: extractor_id.into(),
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], extractor_id: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(rows.len(), dim, extractor_id, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let data = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self {
            rows: indices.len(),
            dim: self.dim,
            extractor_id: self.extractor_id.clone(),
            data,
        }
    }

    /// Rows in lexicographic order, so downstream resampling does not depend
    /// on the order the features were produced in.
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.rows).collect();
        idx.sort_by(|&a, &b| {
            self.row(a)
                .iter()
                .zip(self.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.subset(&idx)
    }

    pub fn concat(sets: &[FeatureSet]) -> Result<Self> {
        let first = sets.first().ok_or_else(|| Error::invalid("no feature sets to concatenate"))?;
        if sets.iter().any(|s| s.dim != first.dim || s.extractor_id != first.extractor_id) {
            return Err(Error::Shape("feature sets differ in dimension or extractor".into()));
        }
        let data = sets.iter().flat_map(|s| s.data.iter().copied()).collect();
        Self::new(sets.iter().map(|s| s.rows).sum(), first.dim, first.extractor_id.clone(), data)
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for i in 0..self.rows {
            m += DVector::from_column_slice(self.row(i));
        }
        m / self.rows as f64
    }

    /// Unbiased (`1 / (N - 1)`) covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let x = DMatrix::from_fn(self.rows, self.dim, |i, j| self.data[i * self.dim + j] - mu[j]);
        (x.transpose() * &x) / (self.rows as f64 - 1.0)
    }

    pub fn to_cache(&self) -> FeatureCache {
        FeatureCache {
            rows: self.rows,
            dim: self.dim,
            extractor_id: self.extractor_id.clone(),
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_cache(c: &FeatureCache) -> Result<Self> {
        Self::new(c.rows, c.dim, c.extractor_id.clone(), c.data.iter().map(|&v| v as f64).collect())
    }

    fn check_fid_ready(&self, what: &str) -> Result<()> {
        if self.rows < self.dim + 1 {
            return Err(Error::invalid(format!(
                "{what}: {} samples cannot estimate a {}-d covariance (need at least {})",
                self.rows,
                self.dim,
                self.dim + 1
            )));
        }
        Ok(())
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix with negative ones clamped to zero;
/// fails when the clamped mass is a sizeable fraction of the spectrum.
fn clamped_spectrum(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut eig = SymmetricEigen::new(symmetrize(m));
    let neg: f64 = eig.eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    let scale: f64 = eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>().max(1.0);
    if neg > CLAMP_TOLERANCE * scale {
        return Err(Error::NonFinite(format!(
            "{what} is not positive semi-definite (clamped mass {neg:.3e} of {scale:.3e})"
        )));
    }
    eig.eigenvalues.apply(|l| *l = l.max(0.0));
    Ok(eig)
}

/// `Tr((A B)^{1/2})` for symmetric PSD `A`, `B`, via the similar symmetric
/// matrix `A^{1/2} B A^{1/2}`.
pub fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let ea = clamped_spectrum(a, "first covariance")?;
    let sqrt_a = &ea.eigenvectors
        * DMatrix::from_diagonal(&ea.eigenvalues.map(f64::sqrt))
        * ea.eigenvectors.transpose();
    let inner = &sqrt_a * b * &sqrt_a;
    let e = clamped_spectrum(&inner, "covariance product")?;
    Ok(e.eigenvalues.iter().map(|l| l.sqrt()).sum())
}

/// Fréchet distance between Gaussians with the given moments.
pub fn frechet_from_moments(
    mu_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    let diff = (mu_a - mu_b).norm_squared();
    let tr = cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt_product(cov_a, cov_b)?;
    let d = diff + tr;
    if !d.is_finite() {
        return Err(Error::NonFinite("Fréchet distance".into()));
    }
    Ok(d.max(0.0))
}

pub fn frechet_distance(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::Shape(format!("feature dimensions differ: {} vs {}", a.dim, b.dim)));
    }
    if a.extractor_id != b.extractor_id {
        return Err(Error::invalid(format!(
            "features come from different extractors: {} vs {}",
            a.extractor_id, b.extractor_id
        )));
    }
    a.check_fid_ready("first feature set")?;
    b.check_fid_ready("second feature set")?;
    frechet_from_moments(&a.mean(), &a.covariance(), &b.mean(), &b.covariance())
}

/// Result of the extrapolated FID.
#[derive(Debug, Clone, PartialEq)]
pub struct FidInf {
    /// The intercept, clamped at zero.
    pub value: f64,
    /// Intercept of the fit at `1/N = 0`.
    pub intercept: f64,
    pub slope: f64,
    /// `(subset size, mean FID over resamples)` used for the fit.
    pub points: Vec<(usize, f64)>,
}

pub const DEFAULT_FID_INF_SIZES: usize = 8;

/// `count` log-spaced subset sizes from `n / 8` (at least `dim + 2`) to `n`.
pub fn default_batch_sizes(n: usize, dim: usize, count: usize) -> Vec<usize> {
    let lo = (n / 8).max(dim + 2).min(n) as f64;
    let hi = n as f64;
    let mut sizes: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 1.0 };
            (lo * (hi / lo).powf(t)).round() as usize
        })
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
}

/// FID of random subsets of `gen` at each size (mean over `resamples`),
/// extrapolated linearly in `1/N` to infinitely many samples.
pub fn fid_inf(gen: &FeatureSet, real: &FeatureSet, batch_sizes: &[usize], resamples: usize, seed: u64) -> Result<FidInf> {
    let mut sizes = batch_sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::invalid(format!(
            "FID extrapolation needs at least 3 distinct batch sizes, got {sizes:?}"
        )));
    }
    if resamples == 0 {
        return Err(Error::invalid("resamples must be positive"));
    }
    let max = *sizes.last().expect("non-empty");
    if max > gen.rows {
        return Err(Error::invalid(format!("batch size {max} exceeds the {} generated samples", gen.rows)));
    }
    if sizes[0] < gen.dim + 1 {
        return Err(Error::invalid(format!(
            "batch size {} is too small for {}-d features",
            sizes[0], gen.dim
        )));
    }
    real.check_fid_ready("real features")?;
    let gen = gen.sorted();
    let (mu_r, cov_r) = (real.mean(), real.covariance());
    let mut points = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n as u64);
        let mut total = 0.0;
        for _ in 0..resamples {
            let idx = rand::seq::index::sample(&mut rng, gen.rows, n).into_vec();
            let sub = gen.subset(&idx);
            total += frechet_from_moments(&sub.mean(), &sub.covariance(), &mu_r, &cov_r)?;
        }
        points.push((n, total / resamples as f64));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| 1.0 / *n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|(_, f)| *f).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(FidInf {
        value: intercept.max(0.0),
        intercept,
        slope,
        points,
    })
}
