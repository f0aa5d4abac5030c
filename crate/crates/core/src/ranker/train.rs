use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fm::{dot, FmParams};
use crate::corpus::{FeatureEncoding, ImplicitDataset};
use crate::error::{Error, Result};
use crate::splits::TemporalSplit;

/// Margin a sampled negative must come within to count as a WARP violation.
pub const WARP_MARGIN: f64 = 1.0;
/// Latent factors start uniform in (-INIT_SCALE, INIT_SCALE).
pub const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Bpr,
    Warp,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Bpr => "bpr",
            Loss::Warp => "warp",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpr" => Ok(Loss::Bpr),
            "warp" => Ok(Loss::Warp),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub learning_rate: f64,
    pub epochs: usize,
    pub factors: usize,
    /// L2 weight on the linear terms.
    pub alpha: f64,
    /// L2 weight on the latent factors.
    pub beta: f64,
    pub seed: u64,
    pub max_warp_trials: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: Loss::Warp,
            learning_rate: 0.05,
            epochs: 50,
            factors: 50,
            alpha: 0.01,
            beta: 0.01,
            seed: 42,
            max_warp_trials: 50,
            batch_size: 1,
        }
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "loss={} lr={} epochs={} factors={} alpha={} beta={} seed={} trials={} batch={}",
            self.loss,
            self.learning_rate,
            self.epochs,
            self.factors,
            self.alpha,
            self.beta,
            self.seed,
            self.max_warp_trials,
            self.batch_size
        )
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} invalid", self.learning_rate)));
        }
        if self.factors == 0 {
            return Err(Error::Config("factors must be positive".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("regularization weights must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.max_warp_trials == 0 {
            return Err(Error::Config("batch size and WARP trials must be positive".into()));
        }
        Ok(())
    }
}

/// Sparse gradient of a pairwise objective over the features it touches.
#[derive(Debug, Clone)]
pub struct PairGradient {
    factors: usize,
    dw: Vec<f64>,
    dv: Vec<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl PairGradient {
    pub fn new(dimension: usize, factors: usize) -> Self {
        PairGradient {
            factors,
            dw: vec![0.0; dimension],
            dv: vec![0.0; dimension * factors],
            touched: Vec::new(),
            marked: vec![false; dimension],
        }
    }

    fn touch(&mut self, l: usize) {
        if !self.marked[l] {
            self.marked[l] = true;
            self.touched.push(l);
        }
    }

    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn dw(&self, l: usize) -> f64 {
        self.dw[l]
    }

    pub fn dv(&self, l: usize) -> &[f64] {
        &self.dv[l * self.factors..(l + 1) * self.factors]
    }

    /// Adds the gradient of `loss(x) + alpha*sum w^2 + beta*sum |v|^2`,
    /// where `x = s(U + pos) - s(U + neg)` and `dloss = dloss/dx`, given
    /// `context = sum_{l in U} v_l`.
    fn accumulate(
        &mut self,
        params: &FmParams,
        user_features: &[usize],
        context: &[f64],
        pos: usize,
        neg: usize,
        dloss: f64,
        alpha: f64,
        beta: f64,
    ) {
        let k = self.factors;
        let (vp, vn) = (params.row(pos), params.row(neg));
        for &l in user_features {
            self.touch(l);
            self.dw[l] += 2.0 * alpha * params.w[l];
            let vl = params.row(l);
            let dv = &mut self.dv[l * k..(l + 1) * k];
            for f in 0..k {
                dv[f] += dloss * (vp[f] - vn[f]) + 2.0 * beta * vl[f];
            }
        }
        for (item, sign, v) in [(pos, 1.0, vp), (neg, -1.0, vn)] {
            self.touch(item);
            self.dw[item] += sign * dloss + 2.0 * alpha * params.w[item];
            let dv = &mut self.dv[item * k..(item + 1) * k];
            for f in 0..k {
                dv[f] += sign * dloss * context[f] + 2.0 * beta * v[f];
            }
        }
    }

    /// `params -= lr * gradient`, then resets the buffer.
    fn apply(&mut self, params: &mut FmParams, lr: f64) {
        let k = self.factors;
        for &l in &self.touched {
            params.w[l] -= lr * self.dw[l];
            self.dw[l] = 0.0;
            let row = params.row_mut(l);
            let dv = &mut self.dv[l * k..(l + 1) * k];
            for (x, g) in row.iter_mut().zip(dv.iter_mut()) {
                *x -= lr * *g;
                *g = 0.0;
            }
            self.marked[l] = false;
        }
        self.touched.clear();
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn union_of(user_features: &[usize], pos: usize, neg: usize) -> Vec<usize> {
    let mut all = user_features.to_vec();
    all.extend([pos, neg]);
    all
}

/// BPR objective for one (user, positive, negative) triple:
/// `-ln sigma(s_pos - s_neg) + alpha*sum w_l^2 + beta*sum |v_l|^2` over the
/// active features of both pairs.
pub fn bpr_triple_loss(
    params: &FmParams,
    user_features: &[usize],
    pos: usize,
    neg: usize,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let mut a = user_features.to_vec();
    a.push(pos);
    let mut b = user_features.to_vec();
    b.push(neg);
    let x = params.score(&a)? - params.score(&b)?;
    let penalty: f64 = union_of(user_features, pos, neg)
        .into_iter()
        .map(|l| alpha * params.w[l] * params.w[l] + beta * dot(params.row(l), params.row(l)))
        .sum();
    Ok(softplus(-x) + penalty)
}

/// Analytic gradient of [`bpr_triple_loss`]. `pos` and `neg` must not be
/// among `user_features`.
pub fn bpr_triple_gradient(
    params: &FmParams,
    user_features: &[usize],
    pos: usize,
    neg: usize,
    alpha: f64,
    beta: f64,
) -> Result<PairGradient> {
    if user_features.contains(&pos) || user_features.contains(&neg) || pos == neg {
        return Err(Error::InvalidInput("item features must be distinct from user features".into()));
    }
    let ctx = params.user_context(user_features)?;
    let x = ctx.item_term(params, pos) - ctx.item_term(params, neg);
    let mut g = PairGradient::new(params.dimension(), params.factors);
    g.accumulate(params, user_features, &ctx.sum, pos, neg, -sigmoid(-x), alpha, beta);
    Ok(g)
}

/// `L(r) = sum_{m=1..r} 1/m` for `r` in `0..=max_rank`.
pub fn harmonic_table(max_rank: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(max_rank + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for m in 1..=max_rank {
        acc += 1.0 / m as f64;
        table.push(acc);
    }
    table
}

/// WARP rank estimate after `trials` samples, at least 1.
pub fn warp_rank_estimate(num_items: usize, trials: usize) -> usize {
    (num_items.saturating_sub(1) / trials.max(1)).max(1)
}

struct TrainingData {
    positives: Vec<(u32, u32)>,
    pos_bits: Vec<u64>,
    words: usize,
    pos_count: Vec<usize>,
    user_features: Vec<Vec<usize>>,
    num_items: usize,
    item_offset: usize,
}

impl TrainingData {
    fn new(train: &ImplicitDataset, enc: &FeatureEncoding) -> Result<Self> {
        if enc.num_users != train.num_users() || enc.num_items != train.num_items() {
            return Err(Error::InvalidInput(
                "feature encoding does not match the training data".into(),
            ));
        }
        let num_items = train.num_items();
        let words = num_items.div_ceil(64);
        let mut pos_bits = vec![0u64; words * train.num_users()];
        let mut positives = Vec::with_capacity(train.interaction_count());
        let mut pos_count = Vec::with_capacity(train.num_users());
        for (u, history) in train.relevant.iter().enumerate() {
            let mut items: Vec<u32> = history.iter().map(|e| e.item).collect();
            items.sort_unstable();
            for &i in &items {
                pos_bits[u * words + i as usize / 64] |= 1 << (i % 64);
                positives.push((u as u32, i));
            }
            pos_count.push(items.len());
        }
        if positives.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(TrainingData {
            positives,
            pos_bits,
            words,
            pos_count,
            user_features: (0..train.num_users()).map(|u| enc.user_features(u)).collect(),
            num_items,
            item_offset: enc.item_offset,
        })
    }

    #[inline]
    fn is_positive(&self, u: usize, i: usize) -> bool {
        self.pos_bits[u * self.words + i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    fn sample_negative<R: Rng>(&self, u: usize, rng: &mut R) -> usize {
        loop {
            let j = rng.gen_range(0..self.num_items);
            if !self.is_positive(u, j) {
                return j;
            }
        }
    }
}

/// Epoch-at-a-time SGD over the train part of a split. Each epoch visits
/// every train positive once in a seeded shuffled order.
pub struct Trainer {
    cfg: TrainConfig,
    data: TrainingData,
    params: FmParams,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    grad: PairGradient,
    context: Vec<f64>,
    item_rows: Vec<f64>,
    harmonic: Vec<f64>,
    epoch: usize,
}

impl Trainer {
    pub fn new(train: &ImplicitDataset, enc: &FeatureEncoding, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let data = TrainingData::new(train, enc)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = FmParams::random(enc.dimension, cfg.factors, INIT_SCALE, &mut rng);
        Ok(Trainer {
            order: (0..data.positives.len()).collect(),
            grad: PairGradient::new(enc.dimension, cfg.factors),
            context: vec![0.0; cfg.factors],
            item_rows: vec![0.0; 2 * cfg.factors],
            harmonic: harmonic_table(data.num_items),
            cfg: cfg.clone(),
            data,
            params,
            rng,
            epoch: 0,
        })
    }

    /// Continues training from `params` instead of a fresh initialization.
    pub fn from_params(train: &ImplicitDataset, enc: &FeatureEncoding, cfg: &TrainConfig, params: FmParams) -> Result<Self> {
        if params.dimension() != enc.dimension || params.factors != cfg.factors {
            return Err(Error::InvalidInput(format!(
                "parameters are {}x{}, configuration expects {}x{}",
                params.dimension(),
                params.factors,
                enc.dimension,
                cfg.factors
            )));
        }
        let mut trainer = Trainer::new(train, enc, cfg)?;
        trainer.params = params;
        Ok(trainer)
    }

    pub fn params(&self) -> &FmParams {
        &self.params
    }

    pub fn into_params(self) -> FmParams {
        self.params
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    fn fill_context(&mut self, u: usize) {
        self.context.iter_mut().for_each(|c| *c = 0.0);
        for &l in &self.data.user_features[u] {
            for (c, x) in self.context.iter_mut().zip(self.params.row(l)) {
                *c += x;
            }
        }
    }

    #[inline]
    fn item_term(&self, item: usize) -> f64 {
        let f = self.data.item_offset + item;
        self.params.w[f] + dot(&self.context, self.params.row(f))
    }

    /// Same update as accumulating into [`PairGradient`] and applying it,
    /// written in place for single-triple batches.
    fn sgd_step(&mut self, u: usize, pos: usize, neg: usize, dloss: f64) {
        let k = self.cfg.factors;
        let lr = self.cfg.learning_rate;
        let (two_a, two_b) = (2.0 * self.cfg.alpha, 2.0 * self.cfg.beta);
        self.item_rows[..k].copy_from_slice(self.params.row(pos));
        self.item_rows[k..].copy_from_slice(self.params.row(neg));
        let (vp, vn) = self.item_rows.split_at(k);
        for &l in &self.data.user_features[u] {
            let dw = two_a * self.params.w[l];
            self.params.w[l] -= lr * dw;
            for (f, x) in self.params.row_mut(l).iter_mut().enumerate() {
                *x -= lr * (dloss * (vp[f] - vn[f]) + two_b * *x);
            }
        }
        for (item, sign, old) in [(pos, 1.0, vp), (neg, -1.0, vn)] {
            let dw = sign * dloss + two_a * self.params.w[item];
            self.params.w[item] -= lr * dw;
            let step = sign * dloss;
            for ((x, c), o) in self.params.row_mut(item).iter_mut().zip(&self.context).zip(old) {
                *x -= lr * (step * c + two_b * o);
            }
        }
    }

    pub fn run_epoch(&mut self) -> Result<()> {
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(&mut self.rng);
        let mut pending = 0;
        for &idx in &order {
            let (u, i) = self.data.positives[idx];
            let (u, i) = (u as usize, i as usize);
            if self.data.pos_count[u] == self.data.num_items {
                continue;
            }
            self.fill_context(u);
            let pos_term = self.item_term(i);
            let update = match self.cfg.loss {
                Loss::Bpr => {
                    let j = self.data.sample_negative(u, &mut self.rng);
                    let x = pos_term - self.item_term(j);
                    Some((j, -sigmoid(-x)))
                }
                Loss::Warp => {
                    let mut hit = None;
                    for trial in 1..=self.cfg.max_warp_trials {
                        let j = self.data.sample_negative(u, &mut self.rng);
                        if self.item_term(j) > pos_term - WARP_MARGIN {
                            let rank = warp_rank_estimate(self.data.num_items, trial);
                            hit = Some((j, -self.harmonic[rank]));
                            break;
                        }
                    }
                    hit
                }
            };
            if let Some((j, dloss)) = update {
                let off = self.data.item_offset;
                if self.cfg.batch_size == 1 {
                    self.sgd_step(u, off + i, off + j, dloss);
                    continue;
                }
                self.grad.accumulate(
                    &self.params,
                    &self.data.user_features[u],
                    &self.context,
                    off + i,
                    off + j,
                    dloss,
                    self.cfg.alpha,
                    self.cfg.beta,
                );
                pending += 1;
                if pending == self.cfg.batch_size {
                    self.grad.apply(&mut self.params, self.cfg.learning_rate);
                    pending = 0;
                }
            }
        }
        if pending > 0 {
            self.grad.apply(&mut self.params, self.cfg.learning_rate);
        }
        self.order = order;
        self.epoch += 1;
        if !self.params.is_finite() {
            return Err(Error::Diverged { epoch: self.epoch });
        }
        Ok(())
    }
}

fn train_with(split: &TemporalSplit, enc: &FeatureEncoding, cfg: &TrainConfig) -> Result<FmParams> {
    let mut trainer = Trainer::new(&split.train, enc, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_params())
}

/// SGD on `ln sigma(s_ui - s_uj)` with uniformly sampled unobserved `j`.
pub fn train_bpr(split: &TemporalSplit, enc: &FeatureEncoding, cfg: &TrainConfig) -> Result<FmParams> {
    if cfg.loss != Loss::Bpr {
        return Err(Error::Config("train_bpr requires loss = bpr".into()));
    }
    train_with(split, enc, cfg)
}

/// WARP: sample negatives until one violates the margin (or the trial budget
/// runs out) and weight the hinge update by `L(rank estimate)`.
pub fn train_warp(split: &TemporalSplit, enc: &FeatureEncoding, cfg: &TrainConfig) -> Result<FmParams> {
    if cfg.loss != Loss::Warp {
        return Err(Error::Config("train_warp requires loss = warp".into()));
    }
    train_with(split, enc, cfg)
}

/// BPR matrix factorization: the FM restricted to user and item features.
pub fn train_bprmf(split: &TemporalSplit, cfg: &TrainConfig) -> Result<FmParams> {
    let enc = FeatureEncoding::plain(split.num_users(), split.num_items());
    let cfg = TrainConfig {
        loss: Loss::Bpr,
        ..cfg.clone()
    };
    train_with(split, &enc, &cfg)
}

/// Dispatches on `cfg.loss`.
pub fn train(split: &TemporalSplit, enc: &FeatureEncoding, cfg: &TrainConfig) -> Result<FmParams> {
    train_with(split, enc, cfg)
}
