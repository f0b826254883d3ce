// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ground-truth piecewise-constant signals, their structural statistics, and
//! noisy observations of them.
//!
//! Index convention: everything stored in these types is 0-based. The only
//! 1-based quantities are the `changepoints` passed to [`PiecewiseSignal::new`]
//! and returned by [`PiecewiseSignal::changepoints`] /
//! [`PiecewiseSignal::detectable_set`], which follow the usual `n_1 = 1`
//! notation so that they can be written to CSV unchanged.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A length-`n` series of `dim`-dimensional rows stored row-major.
///
/// The scalar case is `dim == 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    dim: usize,
    values: Vec<f64>,
}

impl Series {
    pub fn scalar(values: Vec<f64>) -> Self {
        Self { dim: 1, values }
    }

    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("series dimension must be positive".into()));
        }
        if values.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "row {i} has dimension {} but row 0 has {dim}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(dim, values)
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            values: vec![0.0; len * dim.max(1)],
        }
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest Euclidean row norm.
    pub fn max_row_norm(&self) -> f64 {
        self.rows().map(norm).fold(0.0, f64::max)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Piecewise-constant ground truth with `K` segments.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseSignal {
    n: usize,
    /// 0-based first index of each segment; `starts[0] == 0`.
    starts: Vec<usize>,
    levels: Series,
}

impl PiecewiseSignal {
    /// Builds a signal from 1-based segment starts `n_1 = 1 < n_2 < ... < n_K <= n`
    /// and one level row per segment.
    pub fn new(n: usize, changepoints: &[usize], levels: Series) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSignal("length n must be positive".into()));
        }
        if changepoints.is_empty() {
            return Err(Error::InvalidSignal("at least one segment is required".into()));
        }
        if changepoints[0] != 1 {
            return Err(Error::InvalidSignal(format!(
                "first change point must be 1, got {}",
                changepoints[0]
            )));
        }
        if let Some(w) = changepoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSignal(format!(
                "change points must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let last = *changepoints.last().unwrap();
        if last > n {
            return Err(Error::InvalidSignal(format!(
                "change point {last} exceeds series length {n}"
            )));
        }
        if levels.len() != changepoints.len() {
            return Err(Error::InvalidSignal(format!(
                "{} levels given for {} segments",
                levels.len(),
                changepoints.len()
            )));
        }
        if !levels.all_finite() {
            return Err(Error::InvalidSignal("levels must be finite".into()));
        }
        for k in 1..levels.len() {
            if levels.row(k - 1) == levels.row(k) {
                return Err(Error::InvalidSignal(format!(
                    "segments {k} and {} have equal levels",
                    k + 1
                )));
            }
        }
        Ok(Self {
            n,
            starts: changepoints.iter().map(|c| c - 1).collect(),
            levels,
        })
    }

    /// Scalar convenience constructor.
    pub fn scalar(n: usize, changepoints: &[usize], levels: &[f64]) -> Result<Self> {
        Self::new(n, changepoints, Series::scalar(levels.to_vec()))
    }

    /// Recovers the (unique) piecewise description of a materialized series.
    pub fn from_series(x: &Series) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidSignal("empty series".into()));
        }
        let mut cps = vec![1];
        let mut levels = x.row(0).to_vec();
        for i in 1..x.len() {
            if x.row(i) != x.row(i - 1) {
                cps.push(i + 1);
                levels.extend_from_slice(x.row(i));
            }
        }
        Self::new(x.len(), &cps, Series::from_flat(x.dim(), levels)?)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.levels.dim()
    }

    /// Number of segments `K`.
    pub fn num_segments(&self) -> usize {
        self.starts.len()
    }

    pub fn levels(&self) -> &Series {
        &self.levels
    }

    /// 0-based segment starts.
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// 1-based segment starts `n_1, ..., n_K`.
    pub fn changepoints(&self) -> Vec<usize> {
        self.starts.iter().map(|s| s + 1).collect()
    }

    /// 1-based detectable set `S = {n_2, ..., n_K}`.
    pub fn detectable_set(&self) -> Vec<usize> {
        self.starts.iter().skip(1).map(|s| s + 1).collect()
    }

    pub fn materialize(&self) -> Series {
        let mut x = Series::zeros(self.n, self.dim());
        for (k, &start) in self.starts.iter().enumerate() {
            let end = self.segment_end(k);
            for i in start..end {
                x.row_mut(i).copy_from_slice(self.levels.row(k));
            }
        }
        x
    }

    /// 0-based exclusive end of segment `k`.
    fn segment_end(&self, k: usize) -> usize {
        self.starts.get(k + 1).copied().unwrap_or(self.n)
    }

    pub fn stats(&self) -> SignalStats {
        signal_stats(self)
    }
}

/// Structural quantities derived from a [`PiecewiseSignal`].
#[derive(Clone, Debug, PartialEq)]
pub struct SignalStats {
    /// `m_k = n_{k+1} - n_k`.
    pub segment_lengths: Vec<usize>,
    /// Minimum segment length `W_n`.
    pub w_n: usize,
    /// Minimum jump magnitude between adjacent levels; `+inf` when `K == 1`.
    pub h_n: f64,
    /// Harmonic mean of the segment lengths.
    pub m_h: f64,
    /// `d[i]` for 0-based `i`, evaluated with the 1-based definition
    /// `min(i + 1 - n_k, n_{k+1} - i)`.
    pub d: Vec<usize>,
    /// 0-based segment index of each 0-based position.
    pub k_of: Vec<usize>,
}

impl SignalStats {
    pub fn num_segments(&self) -> usize {
        self.segment_lengths.len()
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

pub fn signal_stats(sig: &PiecewiseSignal) -> SignalStats {
    let k = sig.num_segments();
    let segment_lengths: Vec<usize> = (0..k).map(|j| sig.segment_end(j) - sig.starts[j]).collect();
    let w_n = segment_lengths.iter().copied().min().unwrap_or(0);
    let h_n = (1..k)
        .map(|j| dist(sig.levels.row(j - 1), sig.levels.row(j)))
        .fold(f64::INFINITY, f64::min);
    let m_h = k as f64 / segment_lengths.iter().map(|&m| 1.0 / m as f64).sum::<f64>();

    let mut d = Vec::with_capacity(sig.n);
    let mut k_of = Vec::with_capacity(sig.n);
    for (j, &start) in sig.starts.iter().enumerate() {
        let end = sig.segment_end(j);
        // 1-based: n_k = start + 1, n_{k+1} = end + 1, i1 = i + 1.
        for i in start..end {
            let i1 = i + 1;
            d.push((i1 + 1 - (start + 1)).min(end + 1 - i1));
            k_of.push(j);
        }
    }
    SignalStats {
        segment_lengths,
        w_n,
        h_n,
        m_h,
        d,
        k_of,
    }
}

/// Noise distribution families, each normalized to variance `sigma^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    Gaussian,
    /// Uniform on `[-sigma*sqrt(3), sigma*sqrt(3)]`.
    SubGaussianBounded,
    /// Centered Laplace with scale `sigma/sqrt(2)`.
    SubExponential,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::SubGaussianBounded => "sub_gaussian_bounded",
            NoiseFamily::SubExponential => "sub_exponential",
        }
    }

    /// Draws one unit-variance variate.
    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseFamily::Gaussian => StandardNormal.sample(rng),
            NoiseFamily::SubGaussianBounded => {
                let u: f64 = rand::Rng::gen(rng);
                3f64.sqrt() * (2.0 * u - 1.0)
            }
            NoiseFamily::SubExponential => {
                // Laplace(0, 1/sqrt(2)) by inversion; u in (-1/2, 1/2].
                let u: f64 = 0.5 - rand::Rng::gen::<f64>(rng);
                let b = std::f64::consts::FRAC_1_SQRT_2;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseFamily::Gaussian),
            "sub_gaussian_bounded" | "uniform" => Ok(NoiseFamily::SubGaussianBounded),
            "sub_exponential" | "laplace" => Ok(NoiseFamily::SubExponential),
            other => Err(Error::InvalidInput(format!(
                "unknown noise family '{other}'; expected gaussian, sub_gaussian_bounded or sub_exponential"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Noise standard deviation. Zero is accepted and means a noiseless draw.
    pub sigma: f64,
    pub family: NoiseFamily,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, family: NoiseFamily, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(Self {
            sigma,
            family,
            seed,
        })
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self> {
        Self::new(sigma, NoiseFamily::Gaussian, seed)
    }
}

// Word offset between consecutive elements in the ChaCha keystream; far larger
// than any row draw consumes, so each element owns a disjoint window.
const ELEMENT_STRIDE_WORDS: u32 = 24;

/// Draws an `len x dim` noise matrix.
///
/// Element `j` is generated from the ChaCha8 keystream keyed by `spec.seed`,
/// stream `stream`, starting at word `j << 24`, so every value depends only on
/// `(seed, stream, j)` and not on how or in which order other elements or
/// trials are produced.
pub fn generate_noise(spec: &NoiseSpec, stream: u64, len: usize, dim: usize) -> Series {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let mut eps = Series::zeros(len, dim);
    for j in 0..len {
        rng.set_word_pos((j as u128) << ELEMENT_STRIDE_WORDS);
        for v in eps.row_mut(j) {
            *v = spec.sigma * spec.family.draw(&mut rng);
        }
    }
    eps
}

/// Noisy data plus, when synthetic, the truth and noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub y: Series,
    pub signal_ref: Option<PiecewiseSignal>,
    pub noise_spec: Option<NoiseSpec>,
}

impl Observation {
    /// Wraps real data with no ground truth.
    pub fn from_data(y: Series) -> Self {
        Self {
            y,
            signal_ref: None,
            noise_spec: None,
        }
    }
}

/// `y = x + eps` with `eps` drawn on stream 0.
pub fn sample_observation(sig: &PiecewiseSignal, spec: &NoiseSpec) -> Observation {
    sample_observation_on_stream(sig, spec, 0)
}

/// `y = x + eps` with `eps` drawn on the given keystream, used to give
/// Monte Carlo trials independent noise.
pub fn sample_observation_on_stream(
    sig: &PiecewiseSignal,
    spec: &NoiseSpec,
    stream: u64,
) -> Observation {
    let mut y = sig.materialize();
    let eps = generate_noise(spec, stream, sig.len(), sig.dim());
    for (v, e) in y.values.iter_mut().zip(eps.as_slice()) {
        *v += e;
    }
    Observation {
        y,
        signal_ref: Some(sig.clone()),
        noise_spec: Some(*spec),
    }
}

/// `max_{k <= l} ||sum_{i=k}^{l} eps_i|| / sqrt(l - k + 1)` over all windows.
///
/// Quadratic in the length, which is fine up to `n ~ 10^4`.
pub fn max_partial_sum_stat(eps: &Series) -> Result<f64> {
    let n = eps.len();
    if n == 0 {
        return Err(Error::InvalidInput("partial sum statistic of an empty series".into()));
    }
    let p = eps.dim();
    let mut best = 0.0f64;
    let mut acc = vec![0.0; p];
    for k in 0..n {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for l in k..n {
            for (a, e) in acc.iter_mut().zip(eps.row(l)) {
                *a += e;
            }
            let sq: f64 = acc.iter().map(|a| a * a).sum();
            let stat = (sq / (l - k + 1) as f64).sqrt();
            if stat > best {
                best = stat;
            }
        }
    }
    Ok(best)
}
