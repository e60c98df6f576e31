//! Learned descriptor: a small perceptron over FPFH histograms trained with a
//! contrastive plus triplet loss on correspondences induced by pseudo-labels.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::descriptors::DescriptorSet;
use crate::error::{Result, SgpError};
use crate::fpfh::{FpfhDescriptor, FPFH_DIM};
use crate::geometry::{RigidTransform, Vec3};
use crate::kdtree::KdTree;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"SGPMLP1";

/// FPFH sub-histograms sum to 100; the network sees them scaled to unit mass.
pub const INPUT_SCALE: f64 = 0.01;

/// Embedding emitted for an all-zero pre-normalization vector.
fn fallback_unit(dim: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[0] = 1.0;
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: DMatrix::zeros(output, input),
            bias: DVector::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDescriptor {
    layers: Vec<Layer>,
    normalize_output: bool,
}

impl MlpDescriptor {
    pub fn new(layers: Vec<Layer>, normalize_output: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(SgpError::invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(SgpError::invalid(format!("layer {i}: bias length {} != {} outputs", l.bias.len(), l.output_dim())));
            }
            if l.input_dim() == 0 || l.output_dim() == 0 {
                return Err(SgpError::invalid(format!("layer {i} has an empty dimension")));
            }
            if i > 0 && layers[i - 1].output_dim() != l.input_dim() {
                return Err(SgpError::DimensionMismatch {
                    expected: layers[i - 1].output_dim(),
                    found: l.input_dim(),
                });
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(SgpError::invalid(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { layers, normalize_output })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn normalize_output(&self) -> bool {
        self.normalize_output
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].input_dim()];
        d.extend(self.layers.iter().map(Layer::output_dim));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

pub fn default_dims(d_f: usize) -> Vec<usize> {
    vec![FPFH_DIM, 64, 64, d_f]
}

#[derive(Debug, Clone, Copy)]
pub enum InitMode<'a> {
    Fresh,
    FromModel(&'a MlpDescriptor),
}

/// Glorot-uniform weights `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_weights(dims: &[usize], seed: u64, mode: InitMode<'_>, normalize_output: bool) -> Result<MlpDescriptor> {
    if let InitMode::FromModel(m) = mode {
        if m.dims() != dims {
            return Err(SgpError::invalid(format!("model dims {:?} differ from requested {:?}", m.dims(), dims)));
        }
        return Ok(m.clone());
    }
    if dims.len() < 2 || dims.contains(&0) {
        return Err(SgpError::invalid(format!("invalid layer dims {dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let dist = Uniform::new(-a, a).expect("valid range");
            // row-major fill order
            let mut weights = DMatrix::zeros(w[1], w[0]);
            for r in 0..w[1] {
                for c in 0..w[0] {
                    weights[(r, c)] = dist.sample(&mut rng);
                }
            }
            Layer {
                weights,
                bias: DVector::zeros(w[1]),
            }
        })
        .collect();
    MlpDescriptor::new(layers, normalize_output)
}

struct ForwardCache {
    /// Layer inputs, `rows x in` per layer, plus the final pre-normalization output.
    activations: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
    norms: Vec<f64>,
}

fn forward_cached(model: &MlpDescriptor, x: DMatrix<f64>) -> ForwardCache {
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    let mut h = x;
    let last = model.layers.len() - 1;
    for (i, l) in model.layers.iter().enumerate() {
        let mut z = &h * l.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += l.bias.transpose();
        }
        if i < last {
            z.apply(|v| *v = v.max(0.0));
        }
        activations.push(h);
        h = z;
    }
    let mut output = h.clone();
    let mut norms = Vec::new();
    if model.normalize_output {
        norms = (0..output.nrows()).map(|r| output.row(r).norm()).collect();
        let fallback = fallback_unit(output.ncols());
        for (r, &n) in norms.iter().enumerate() {
            if n == 0.0 {
                output.set_row(r, &fallback.transpose());
            } else {
                let scaled = output.row(r) / n;
                output.set_row(r, &scaled);
            }
        }
    }
    activations.push(h);
    ForwardCache {
        activations,
        output,
        norms,
    }
}

fn rows_matrix(model: &MlpDescriptor, inputs: &[f64]) -> Result<DMatrix<f64>> {
    let dim = model.input_dim();
    if inputs.len() % dim != 0 {
        return Err(SgpError::DimensionMismatch {
            expected: dim,
            found: inputs.len() % dim,
        });
    }
    Ok(DMatrix::from_row_slice(inputs.len() / dim, dim, inputs))
}

pub fn forward(model: &MlpDescriptor, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != model.input_dim() {
        return Err(SgpError::DimensionMismatch {
            expected: model.input_dim(),
            found: input.len(),
        });
    }
    Ok(forward_cached(model, rows_matrix(model, input)?).output.row(0).iter().copied().collect())
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub descriptors: DescriptorSet,
    /// Rows whose pre-normalization output was zero.
    pub flagged: Vec<usize>,
}

/// Embeds row-major `inputs`; rows whose input is marked invalid stay excluded.
pub fn embed(model: &MlpDescriptor, inputs: &[f64], valid: Option<&[bool]>) -> Result<Embedding> {
    let cache = forward_cached(model, rows_matrix(model, inputs)?);
    let flagged = cache
        .norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| n == 0.0)
        .map(|(i, _)| i)
        .collect();
    let data: Vec<f64> = cache.output.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
    let mut descriptors = DescriptorSet::new(model.output_dim(), data)?;
    if let Some(mask) = valid {
        descriptors = descriptors.with_mask(mask.to_vec())?;
    }
    Ok(Embedding { descriptors, flagged })
}

/// Scaled FPFH histograms, row-major, with the validity mask of non-zero rows.
pub fn student_inputs(fpfh: &[FpfhDescriptor]) -> (Vec<f64>, Vec<bool>) {
    let inputs = fpfh
        .iter()
        .flat_map(|d| d.histogram.iter().map(|v| v * INPUT_SCALE))
        .collect();
    (inputs, fpfh.iter().map(|d| !d.is_zero()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub m_p: f64,
    pub m_n: f64,
    pub m: f64,
    pub lambda_p: f64,
    pub lambda_n: f64,
    pub lambda: f64,
    pub negatives_per_anchor: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            m_p: 0.1,
            m_n: 1.4,
            m: 0.5,
            lambda_p: 1.0,
            lambda_n: 1.0,
            lambda: 1.0,
            negatives_per_anchor: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, normalize_output: bool) -> Result<()> {
        let lambdas = [self.lambda_p, self.lambda_n, self.lambda];
        if !(self.m_p >= 0.0) {
            return Err(SgpError::config("m_p", "must be nonnegative"));
        }
        if !(self.m_n > self.m_p) {
            return Err(SgpError::config("m_n", "margins must satisfy m_n > m_p"));
        }
        if !(self.m >= 0.0) {
            return Err(SgpError::config("m", "triplet margin must be nonnegative"));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0)) || lambdas.iter().all(|&l| l == 0.0) {
            return Err(SgpError::config("lambda", "weights must be nonnegative with at least one positive"));
        }
        if normalize_output && self.m_n > 2.0 {
            return Err(SgpError::config("m_n", "unit-norm embeddings are at most 2 apart; m_n must be <= 2"));
        }
        if self.negatives_per_anchor == 0 {
            return Err(SgpError::config("negatives_per_anchor", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSample {
    /// Rows of [`TrainingBatch::inputs`].
    pub anchor: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// Point indices behind one anchor sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexTriplet {
    pub a: usize,
    pub positive_b: usize,
    pub negatives_b: Vec<usize>,
}

/// Deduplicated input rows and the anchor samples referencing them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub samples: Vec<AnchorSample>,
    pub triplets: Vec<IndexTriplet>,
}

impl TrainingBatch {
    pub fn from_rows(
        dim: usize,
        rows: Vec<Vec<f64>>,
        samples: Vec<AnchorSample>,
    ) -> Result<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(SgpError::invalid("batch rows must share the input dimension"));
        }
        let batch = Self {
            dim,
            inputs: rows.concat(),
            samples,
            triplets: Vec::new(),
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn row_count(&self) -> usize {
        self.inputs.len() / self.dim
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.row_count();
        for s in &self.samples {
            if s.negatives.is_empty() {
                return Err(SgpError::invalid("every anchor needs at least one negative"));
            }
            if s.anchor >= n || s.positive >= n || s.negatives.iter().any(|&j| j >= n) {
                return Err(SgpError::invalid("batch sample refers past the input rows"));
            }
        }
        Ok(())
    }
}

/// One labeled pair as seen by the student.
#[derive(Debug, Clone, Copy)]
pub struct TrainingPair<'a> {
    pub points_a: &'a [Vec3],
    pub inputs_a: &'a [f64],
    pub points_b: &'a [Vec3],
    pub inputs_b: &'a [f64],
    pub label: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub negatives_per_anchor: usize,
    /// Uniform subsample of anchors when more qualify.
    pub max_anchors: Option<usize>,
}

/// Anchors are points of A whose labeled image has a B neighbor closer than
/// `c_bar`; negatives are drawn uniformly, with replacement, from B points at
/// least `2 c_bar` from that image.
pub fn generate_training_pairs(
    pair: &TrainingPair<'_>,
    input_dim: usize,
    c_bar: f64,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<TrainingBatch> {
    if pair.inputs_a.len() != pair.points_a.len() * input_dim || pair.inputs_b.len() != pair.points_b.len() * input_dim {
        return Err(SgpError::invalid("inputs must hold one row per point"));
    }
    if !(c_bar > 0.0) {
        return Err(SgpError::invalid("c_bar must be positive"));
    }
    if cfg.negatives_per_anchor == 0 {
        return Err(SgpError::invalid("negatives_per_anchor must be at least 1"));
    }
    let tree = KdTree::from_points(pair.points_b);
    let c2 = c_bar * c_bar;
    let mut candidates: Vec<(usize, usize, Vec3)> = Vec::new();
    for (i, p) in pair.points_a.iter().enumerate() {
        let q = pair.label.apply(p);
        if let Some((j, d2)) = tree.nearest_point(&q) {
            if d2 < c2 {
                candidates.push((i, j, q));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(cap) = cfg.max_anchors {
        if candidates.len() > cap {
            let mut keep = sample(&mut rng, candidates.len(), cap).into_vec();
            keep.sort_unstable();
            candidates = keep.into_iter().map(|k| candidates[k].clone()).collect();
        }
    }
    let far2 = 4.0 * c2;
    let nb = pair.points_b.len();
    let mut triplets = Vec::with_capacity(candidates.len());
    for (i, j, q) in candidates {
        let is_far = |k: usize| (pair.points_b[k] - q).norm_squared() >= far2;
        let mut negatives = Vec::with_capacity(cfg.negatives_per_anchor);
        let mut attempts = 0;
        while negatives.len() < cfg.negatives_per_anchor && attempts < 64 * cfg.negatives_per_anchor {
            attempts += 1;
            let k = rng.random_range(0..nb);
            if is_far(k) {
                negatives.push(k);
            }
        }
        if negatives.len() < cfg.negatives_per_anchor {
            // sparse eligible set: draw from the explicit list instead
            let eligible: Vec<usize> = (0..nb).filter(|&k| is_far(k)).collect();
            if eligible.is_empty() {
                continue;
            }
            while negatives.len() < cfg.negatives_per_anchor {
                negatives.push(eligible[rng.random_range(0..eligible.len())]);
            }
        }
        triplets.push(IndexTriplet {
            a: i,
            positive_b: j,
            negatives_b: negatives,
        });
    }
    if triplets.is_empty() {
        return Err(SgpError::EmptyBatch);
    }
    Ok(assemble_batch(pair, input_dim, triplets))
}

fn assemble_batch(pair: &TrainingPair<'_>, dim: usize, triplets: Vec<IndexTriplet>) -> TrainingBatch {
    let mut inputs = Vec::new();
    let mut row_of_a = vec![usize::MAX; pair.points_a.len()];
    let mut row_of_b = vec![usize::MAX; pair.points_b.len()];
    let mut next = 0;
    let mut row = |table: &mut Vec<usize>, src: &[f64], k: usize, inputs: &mut Vec<f64>| {
        if table[k] == usize::MAX {
            table[k] = next;
            next += 1;
            inputs.extend_from_slice(&src[k * dim..(k + 1) * dim]);
        }
        table[k]
    };
    let samples = triplets
        .iter()
        .map(|t| AnchorSample {
            anchor: row(&mut row_of_a, pair.inputs_a, t.a, &mut inputs),
            positive: row(&mut row_of_b, pair.inputs_b, t.positive_b, &mut inputs),
            negatives: t
                .negatives_b
                .iter()
                .map(|&k| row(&mut row_of_b, pair.inputs_b, k, &mut inputs))
                .collect(),
        })
        .collect();
    TrainingBatch {
        dim,
        inputs,
        samples,
        triplets,
    }
}

/// Per-anchor loss
/// `lp*max(0, d_ap - m_p)^2 + sum_n [ln*max(0, m_n - d_an)^2 + l*max(0, m + d_ap - d_an)^2]`
/// and its derivatives with respect to `d_ap` and each `d_an`.
fn anchor_terms(cfg: &LossConfig, d_ap: f64, d_an: &[f64], grad_an: &mut [f64]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut g_ap = 0.0;
    let h = d_ap - cfg.m_p;
    if h > 0.0 {
        loss += cfg.lambda_p * h * h;
        g_ap += 2.0 * cfg.lambda_p * h;
    }
    for (k, &dn) in d_an.iter().enumerate() {
        let mut g = 0.0;
        let hn = cfg.m_n - dn;
        if hn > 0.0 {
            loss += cfg.lambda_n * hn * hn;
            g -= 2.0 * cfg.lambda_n * hn;
        }
        let ht = cfg.m + d_ap - dn;
        if ht > 0.0 {
            loss += cfg.lambda * ht * ht;
            g_ap += 2.0 * cfg.lambda * ht;
            g -= 2.0 * cfg.lambda * ht;
        }
        grad_an[k] = g;
    }
    (loss, g_ap)
}

fn row_distance(e: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (e.row(i) - e.row(j)).norm()
}

fn check_batch(model: &MlpDescriptor, batch: &TrainingBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(SgpError::EmptyBatch);
    }
    if batch.dim != model.input_dim() {
        return Err(SgpError::DimensionMismatch {
            expected: model.input_dim(),
            found: batch.dim,
        });
    }
    Ok(())
}

/// Mean over anchors of the hinge-then-square contrastive and triplet terms.
pub fn loss(model: &MlpDescriptor, batch: &TrainingBatch, cfg: &LossConfig) -> Result<f64> {
    check_batch(model, batch)?;
    let e = forward_cached(model, rows_matrix(model, &batch.inputs)?).output;
    let mut total = 0.0;
    let mut scratch = Vec::new();
    for s in &batch.samples {
        let d_an: Vec<f64> = s.negatives.iter().map(|&n| row_distance(&e, s.anchor, n)).collect();
        scratch.resize(d_an.len(), 0.0);
        total += anchor_terms(cfg, row_distance(&e, s.anchor, s.positive), &d_an, &mut scratch).0;
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Same shapes as the model layers.
    pub layers: Vec<Layer>,
}

/// Loss and its exact gradient; tight hinges and coincident embeddings contribute zero.
pub fn loss_gradient(model: &MlpDescriptor, batch: &TrainingBatch, cfg: &LossConfig) -> Result<LossGradient> {
    check_batch(model, batch)?;
    let cache = forward_cached(model, rows_matrix(model, &batch.inputs)?);
    let e = &cache.output;
    let scale = 1.0 / batch.len() as f64;
    let mut de = DMatrix::<f64>::zeros(e.nrows(), e.ncols());
    let mut total = 0.0;
    let mut g_an = Vec::new();
    // d(|x - y|)/dx = (x - y)/|x - y|, taken as 0 at x = y
    let push = |de: &mut DMatrix<f64>, i: usize, j: usize, d: f64, g: f64| {
        if g == 0.0 || d == 0.0 {
            return;
        }
        let u = (e.row(i) - e.row(j)) * (g * scale / d);
        let mut ri = de.row_mut(i);
        ri += &u;
        let mut rj = de.row_mut(j);
        rj -= &u;
    };
    for s in &batch.samples {
        let d_ap = row_distance(e, s.anchor, s.positive);
        let d_an: Vec<f64> = s.negatives.iter().map(|&n| row_distance(e, s.anchor, n)).collect();
        g_an.resize(d_an.len(), 0.0);
        let (l, g_ap) = anchor_terms(cfg, d_ap, &d_an, &mut g_an);
        total += l;
        push(&mut de, s.anchor, s.positive, d_ap, g_ap);
        for (k, &n) in s.negatives.iter().enumerate() {
            push(&mut de, s.anchor, n, d_an[k], g_an[k]);
        }
    }
    let layers = backward(model, &cache, de);
    Ok(LossGradient {
        loss: total * scale,
        layers,
    })
}

fn backward(model: &MlpDescriptor, cache: &ForwardCache, d_out: DMatrix<f64>) -> Vec<Layer> {
    let nl = model.layers.len();
    let mut dz = d_out;
    if model.normalize_output {
        // y = z/|z|: dz = (g - y (y.g)) / |z|
        for r in 0..dz.nrows() {
            let n = cache.norms[r];
            if n == 0.0 {
                dz.row_mut(r).fill(0.0);
                continue;
            }
            let y = cache.output.row(r);
            let g = dz.row(r).clone_owned();
            let proj = y.dot(&g);
            dz.set_row(r, &((g - y * proj) / n));
        }
    }
    let mut grads: Vec<Layer> = Vec::with_capacity(nl);
    for i in (0..nl).rev() {
        let h = &cache.activations[i];
        let l = &model.layers[i];
        let dw = dz.transpose() * h;
        let db = dz.row_sum().transpose();
        if i > 0 {
            let mut dh = &dz * &l.weights;
            // ReLU of the previous layer: h is its output
            dh.zip_apply(h, |g, a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            dz = dh;
        }
        grads.push(Layer { weights: dw, bias: db });
    }
    grads.reverse();
    grads
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub max_anchors_per_pair: Option<usize>,
    /// Pseudo-label TLS truncation, meters.
    pub c_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: MlpDescriptor,
    /// Mean batch loss per epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
    /// Pairs that produced an empty batch, per epoch.
    pub empty_batches: Vec<usize>,
}

impl TrainReport {
    pub fn last_epoch_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    crate::seed::derive(seed, &[a, b])
}

/// SGD with momentum, one step per pair, pairs reshuffled every epoch.
pub fn train_student(init: &MlpDescriptor, pairs: &[TrainingPair<'_>], cfg: &TrainConfig, seed: u64) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(SgpError::invalid("training needs at least one labeled pair"));
    }
    cfg.loss.validate(init.normalize_output())?;
    let mut model = init.clone();
    let mut velocity: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
        .collect();
    let sampling = SamplingConfig {
        negatives_per_anchor: cfg.loss.negatives_per_anchor,
        max_anchors: cfg.max_anchors_per_pair,
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut empty_batches = Vec::with_capacity(cfg.epochs);
    let (lr, mu) = (cfg.optimizer.learning_rate, cfg.optimizer.momentum);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut used = 0;
        for &p in &order {
            let batch = match generate_training_pairs(&pairs[p], model.input_dim(), cfg.c_bar, &sampling, mix(seed, epoch as u64, p as u64)) {
                Ok(b) => b,
                Err(SgpError::EmptyBatch) => continue,
                Err(e) => return Err(e),
            };
            let g = loss_gradient(&model, &batch, &cfg.loss)?;
            if !g.loss.is_finite() || g.layers.iter().any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite())) {
                return Err(SgpError::NonFiniteLoss { epoch, pair: p });
            }
            sum += g.loss;
            used += 1;
            for ((layer, v), gl) in model.layers.iter_mut().zip(velocity.iter_mut()).zip(&g.layers) {
                v.weights *= mu;
                v.weights += &gl.weights;
                v.bias *= mu;
                v.bias += &gl.bias;
                layer.weights -= &v.weights * lr;
                layer.bias -= &v.bias * lr;
            }
        }
        empty_batches.push(pairs.len() - used);
        epoch_losses.push(if used > 0 { sum / used as f64 } else { 0.0 });
    }
    Ok(TrainReport {
        model,
        epoch_losses,
        empty_batches,
    })
}

pub fn write_checkpoint<W: Write>(model: &MlpDescriptor, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(model.layers.len() as u32).to_le_bytes())?;
    for l in &model.layers {
        w.write_all(&(l.output_dim() as u32).to_le_bytes())?;
        w.write_all(&(l.input_dim() as u32).to_le_bytes())?;
    }
    for l in &model.layers {
        for r in 0..l.output_dim() {
            for c in 0..l.input_dim() {
                w.write_all(&l.weights[(r, c)].to_le_bytes())?;
            }
        }
        for b in l.bias.iter() {
            w.write_all(&b.to_le_bytes())?;
        }
    }
    w.write_all(&[model.normalize_output as u8])?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpDescriptor> {
    let bad = |m: &str| SgpError::invalid(format!("malformed checkpoint: {m}"));
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<usize> {
        r.read_exact(&mut u32_buf).map_err(|_| bad("truncated header"))?;
        Ok(u32::from_le_bytes(u32_buf) as usize)
    };
    let count = read_u32(&mut r)?;
    if count == 0 || count > 1024 {
        return Err(bad("implausible layer count"));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = read_u32(&mut r)?;
        let cols = read_u32(&mut r)?;
        if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 26 {
            return Err(bad("implausible layer shape"));
        }
        shapes.push((rows, cols));
    }
    let mut f64_buf = [0u8; 8];
    let mut read_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f64_buf).map_err(|_| bad("truncated weights"))?;
        Ok(f64::from_le_bytes(f64_buf))
    };
    let mut layers = Vec::with_capacity(count);
    for &(rows, cols) in &shapes {
        let mut weights = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                weights[(i, j)] = read_f64(&mut r)?;
            }
        }
        let mut bias = DVector::zeros(rows);
        for i in 0..rows {
            bias[i] = read_f64(&mut r)?;
        }
        layers.push(Layer { weights, bias });
    }
    let mut flags = [0u8; 1];
    r.read_exact(&mut flags).map_err(|_| bad("missing flags byte"))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes"));
    }
    MlpDescriptor::new(layers, flags[0] & 1 == 1)
}
