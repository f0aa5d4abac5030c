use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Second-order factorization machine over one-hot features.
///
/// `v` is row-major: row `i` holds the `factors` latent values of feature `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FmParams {
    pub w0: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub factors: usize,
}

impl FmParams {
    pub fn zeros(dimension: usize, factors: usize) -> Self {
        FmParams {
            w0: 0.0,
            w: vec![0.0; dimension],
            v: vec![0.0; dimension * factors],
            factors,
        }
    }

    /// Zero biases, latent values uniform in (-scale, scale).
    pub fn random<R: Rng>(dimension: usize, factors: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(dimension, factors);
        for x in &mut p.v {
            *x = rng.gen_range(-scale..scale);
        }
        p
    }

    pub fn dimension(&self) -> usize {
        self.w.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.v[i * self.factors..(i + 1) * self.factors]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let k = self.factors;
        &mut self.v[i * k..(i + 1) * k]
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite()
            && self.w.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }

    fn check(&self, active: &[usize]) -> Result<()> {
        match active.iter().find(|&&i| i >= self.dimension()) {
            Some(&index) => Err(Error::IndexOutOfRange {
                index,
                dimension: self.dimension(),
            }),
            None => Ok(()),
        }
    }

    /// `w0 + sum_i w_i + sum_{i<j} <v_i, v_j>` for the binary feature set
    /// `active`, using `1/2 sum_f [(sum_i v_if)^2 - sum_i v_if^2]`.
    pub fn score(&self, active: &[usize]) -> Result<f64> {
        self.check(active)?;
        let mut s = self.w0 + active.iter().map(|&i| self.w[i]).sum::<f64>();
        for f in 0..self.factors {
            let (sum, sum_sq) = active.iter().fold((0.0, 0.0), |(a, b), &i| {
                let x = self.v[i * self.factors + f];
                (a + x, b + x * x)
            });
            s += 0.5 * (sum * sum - sum_sq);
        }
        Ok(s)
    }

    /// Precomputes everything in a score that depends only on the user-side
    /// features, so each candidate item costs one dot product.
    pub fn user_context(&self, user_features: &[usize]) -> Result<UserContext> {
        self.check(user_features)?;
        let mut sum = vec![0.0; self.factors];
        let mut sum_sq = 0.0;
        let mut base = self.w0;
        for &i in user_features {
            base += self.w[i];
            for (s, &x) in sum.iter_mut().zip(self.row(i)) {
                *s += x;
                sum_sq += x * x;
            }
        }
        base += 0.5 * (sum.iter().map(|s| s * s).sum::<f64>() - sum_sq);
        Ok(UserContext { base, sum })
    }
}

/// Score decomposition for a fixed set of user-side features:
/// `score(item) = base + w_item + <sum, v_item>`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    pub base: f64,
    pub sum: Vec<f64>,
}

impl UserContext {
    /// Score without the user-only `base` term.
    #[inline]
    pub fn item_term(&self, params: &FmParams, item_feature: usize) -> f64 {
        params.w[item_feature] + dot(&self.sum, params.row(item_feature))
    }

    #[inline]
    pub fn score(&self, params: &FmParams, item_feature: usize) -> f64 {
        self.base + self.item_term(params, item_feature)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Text checkpoint:
///
/// ```text
/// # fmsurvival fm-checkpoint v1
/// dimension <d>
/// factors <k>
/// seed <seed>
/// config <free-form config line>
/// w0 <value>
/// w <index> <value>                  (d lines)
/// v <index> <v_1> ... <v_k>          (d lines)
/// ```
///
/// Fields are tab separated; floats use Rust's shortest round-trip format.
pub fn checkpoint_to_string(params: &FmParams, seed: u64, config: &str) -> String {
    let mut out = String::from("# fmsurvival fm-checkpoint v1\n");
    let _ = writeln!(out, "dimension\t{}", params.dimension());
    let _ = writeln!(out, "factors\t{}", params.factors);
    let _ = writeln!(out, "seed\t{seed}");
    let _ = writeln!(out, "config\t{config}");
    let _ = writeln!(out, "w0\t{}", params.w0);
    for (i, w) in params.w.iter().enumerate() {
        let _ = writeln!(out, "w\t{i}\t{w}");
    }
    for i in 0..params.dimension() {
        let _ = write!(out, "v\t{i}");
        for x in params.row(i) {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}

pub fn write_checkpoint(params: &FmParams, seed: u64, config: &str, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(params, seed, config)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: FmParams,
    pub seed: u64,
    pub config: String,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text).map_err(|(line, msg)| Error::parse(path, line, msg))
}

pub fn parse_checkpoint(text: &str) -> std::result::Result<Checkpoint, (usize, String)> {
    let mut dimension = None;
    let mut params: Option<FmParams> = None;
    let mut seed = 0;
    let mut config = String::new();
    let mut w0 = 0.0;
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| (n, format!("bad number `{s}`")));
        let idx = |s: &str| s.parse::<usize>().map_err(|_| (n, format!("bad index `{s}`")));
        match f[0] {
            "dimension" if f.len() == 2 => dimension = Some(idx(f[1])?),
            "factors" if f.len() == 2 => {
                let d = dimension.ok_or((n, "factors before dimension".to_string()))?;
                params = Some(FmParams::zeros(d, idx(f[1])?));
            }
            "seed" if f.len() == 2 => {
                seed = f[1].parse().map_err(|_| (n, "bad seed".to_string()))?
            }
            "config" => config = f[1..].join("\t"),
            "w0" if f.len() == 2 => w0 = num(f[1])?,
            "w" if f.len() == 3 => {
                let p = params.as_mut().ok_or((n, "weights before header".to_string()))?;
                let i = idx(f[1])?;
                *p.w.get_mut(i).ok_or((n, format!("index {i} out of range")))? = num(f[2])?;
            }
            "v" => {
                let p = params.as_mut().ok_or((n, "factors before header".to_string()))?;
                let i = idx(f[1])?;
                if i >= p.dimension() || f.len() != p.factors + 2 {
                    return Err((n, "malformed latent row".to_string()));
                }
                for (slot, s) in p.row_mut(i).iter_mut().zip(&f[2..]) {
                    *slot = num(s)?;
                }
            }
            other => return Err((n, format!("unexpected record `{other}`"))),
        }
    }
    let mut params = params.ok_or((0, "missing header".to_string()))?;
    params.w0 = w0;
    Ok(Checkpoint {
        params,
        seed,
        config,
    })
}
