//! Synthetic features and polynomial costs with multiplicative noise.
//!
//! All randomness comes from ChaCha8 seeded with the dataset seed. Each
//! consumer gets its own stream (see the `STREAM_*` constants), so adding
//! draws to one consumer never shifts another.

use std::fmt::Write as _;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const STREAM_B: u64 = 0;
pub const STREAM_X: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_WEIGHTS: u64 = 3;
pub const STREAM_COVARIANCE: u64 = 4;
pub const STREAM_SHUFFLE: u64 = 5;
pub const STREAM_VERIFY: u64 = 6;

/// Success probability of each entry of `B`.
pub const B_PROBABILITY: f64 = 0.5;

const FORMAT_TAG: &str = "# pear-dataset v1";

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub p: usize,
    pub d: usize,
    pub deg: u32,
    pub noise_half_width: f64,
    pub seed: u64,
    pub sizes: [usize; 3],
}

impl GenConfig {
    pub fn new(d: usize, deg: u32, noise_half_width: f64, seed: u64) -> Self {
        Self {
            p: 5,
            d,
            deg,
            noise_half_width,
            seed,
            sizes: [1000, 500, 500],
        }
    }

    pub fn with_sizes(mut self, sizes: [usize; 3]) -> Self {
        self.sizes = sizes;
        self
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.d == 0 {
            return Err(Error::Invalid("feature and cost dimensions must be positive".into()));
        }
        if self.deg < 1 {
            return Err(Error::Invalid("degree must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise_half_width) {
            return Err(Error::Invalid(format!(
                "noise half-width {} outside [0, 1)",
                self.noise_half_width
            )));
        }
        Ok(())
    }
}

/// `[(1/3.5^deg)(bx/√p + 3)^deg + 1]·eps` for one cost entry, where `bx`
/// is the corresponding entry of `Bx`.
pub fn polynomial_cost(bx: f64, p: usize, deg: u32, eps: f64) -> f64 {
    let base = bx / (p as f64).sqrt() + 3.0;
    (base.powi(deg as i32) / 3.5f64.powi(deg as i32) + 1.0) * eps
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GenConfig,
    /// d×p matrix with 0/1 entries.
    pub b: DenseMatrix,
    /// One sample per row.
    pub x: DenseMatrix,
    pub c: DenseMatrix,
}

pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (p, d, count) = (cfg.p, cfg.d, cfg.total());

    let mut rng_b = substream(cfg.seed, STREAM_B);
    let b_data = (0..d * p)
        .map(|_| if rng_b.random_bool(B_PROBABILITY) { 1.0 } else { 0.0 })
        .collect();
    let b = DenseMatrix::from_vec(d, p, b_data)?;

    let mut rng_x = substream(cfg.seed, STREAM_X);
    let x_data: Vec<f64> = (0..count * p).map(|_| rng_x.sample(StandardNormal)).collect();
    let x = DenseMatrix::from_vec(count, p, x_data)?;

    let mut rng_eps = substream(cfg.seed, STREAM_NOISE);
    let eb = cfg.noise_half_width;
    let mut c = DenseMatrix::zeros(count, d);
    for i in 0..count {
        let bx = b.matvec(x.row(i))?;
        for (j, v) in bx.into_iter().enumerate() {
            let eps = if eb > 0.0 { rng_eps.random_range(1.0 - eb..=1.0 + eb) } else { 1.0 };
            c[(i, j)] = polynomial_cost(v, p, cfg.deg, eps);
        }
    }
    Ok(Dataset { config: cfg.clone(), b, x, c })
}

/// Borrowed contiguous slice of a dataset.
#[derive(Debug, Clone)]
pub struct DataView<'a> {
    pub data: &'a Dataset,
    pub range: Range<usize>,
}

impl<'a> DataView<'a> {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn features(&self, i: usize) -> &'a [f64] {
        self.data.x.row(self.range.start + i)
    }

    pub fn costs(&self, i: usize) -> &'a [f64] {
        self.data.c.row(self.range.start + i)
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn view(&self, range: Range<usize>) -> DataView<'_> {
        DataView { data: self, range }
    }

    pub fn full(&self) -> DataView<'_> {
        self.view(0..self.len())
    }

    /// Columnar text: tagged header comments, a column-name row, then one
    /// sample per line (features then costs).
    pub fn to_text(&self) -> String {
        let cfg = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_TAG}");
        let _ = writeln!(
            s,
            "# p={} d={} deg={} noise={} seed={} bernoulli={}",
            cfg.p, cfg.d, cfg.deg, cfg.noise_half_width, cfg.seed, B_PROBABILITY
        );
        let _ = writeln!(s, "# sizes={},{},{}", cfg.sizes[0], cfg.sizes[1], cfg.sizes[2]);
        for j in 0..self.b.rows() {
            let row: Vec<String> = self.b.row(j).iter().map(|v| format!("{}", *v as u8)).collect();
            let _ = writeln!(s, "# B {}", row.join(" "));
        }
        let mut header: Vec<String> = (0..cfg.p).map(|k| format!("x{k}")).collect();
        header.extend((0..cfg.d).map(|k| format!("c{k}")));
        let _ = writeln!(s, "{}", header.join(","));
        for i in 0..self.len() {
            let vals: Vec<String> = self.x.row(i).iter().chain(self.c.row(i)).map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", vals.join(","));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |msg: String| Error::Parse(msg);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(FORMAT_TAG) {
            return Err(perr("missing dataset version tag".into()));
        }
        let params = lines.next().ok_or_else(|| perr("missing parameter line".into()))?;
        let field = |key: &str| -> Result<&str> {
            params
                .trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| perr(format!("missing header field {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?.parse::<f64>().map_err(|e| perr(format!("{key}: {e}")))
        };
        let p = num("p")? as usize;
        let d = num("d")? as usize;
        let deg = num("deg")? as u32;
        let noise = num("noise")?;
        let seed = field("seed")?.parse::<u64>().map_err(|e| perr(format!("seed: {e}")))?;

        let sizes_line = lines.next().ok_or_else(|| perr("missing sizes line".into()))?;
        let sizes: Vec<usize> = sizes_line
            .trim_start_matches('#')
            .trim()
            .strip_prefix("sizes=")
            .ok_or_else(|| perr("malformed sizes line".into()))?
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| perr(format!("sizes: {e}"))))
            .collect::<Result<_>>()?;
        if sizes.len() != 3 {
            return Err(perr("sizes must list three splits".into()));
        }

        let mut b_data = Vec::with_capacity(d * p);
        for _ in 0..d {
            let line = lines.next().ok_or_else(|| perr("truncated B block".into()))?;
            let row = line
                .strip_prefix("# B")
                .ok_or_else(|| perr("malformed B row".into()))?;
            for t in row.split_whitespace() {
                b_data.push(t.parse::<f64>().map_err(|e| perr(format!("B: {e}")))?);
            }
        }
        let b = DenseMatrix::from_vec(d, p, b_data).map_err(|_| perr("B has wrong size".into()))?;

        let header = lines.next().ok_or_else(|| perr("missing column header".into()))?;
        if header.split(',').count() != p + d {
            return Err(perr("column header does not match dimensions".into()));
        }
        let (mut xs, mut cs) = (Vec::new(), Vec::new());
        let mut count = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| perr(format!("row {count}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != p + d {
                return Err(perr(format!("row {count} has {} columns, expected {}", vals.len(), p + d)));
            }
            xs.extend_from_slice(&vals[..p]);
            cs.extend_from_slice(&vals[p..]);
            count += 1;
        }
        let config = GenConfig {
            p,
            d,
            deg,
            noise_half_width: noise,
            seed,
            sizes: [sizes[0], sizes[1], sizes[2]],
        };
        Ok(Self {
            config,
            b,
            x: DenseMatrix::from_vec(count, p, xs)?,
            c: DenseMatrix::from_vec(count, d, cs)?,
        })
    }
}

/// Train, validation and test views over consecutive index ranges.
pub fn split(ds: &Dataset, sizes: [usize; 3]) -> Result<(DataView<'_>, DataView<'_>, DataView<'_>)> {
    let requested: usize = sizes.iter().sum();
    if requested > ds.len() {
        return Err(Error::SizesExceedData {
            requested,
            available: ds.len(),
        });
    }
    let a = sizes[0];
    let b = a + sizes[1];
    Ok((ds.view(0..a), ds.view(a..b), ds.view(b..requested)))
}
