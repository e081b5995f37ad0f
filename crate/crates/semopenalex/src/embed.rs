//! Link-prediction embeddings over the entity-to-entity statements of a
//! converted graph.
//!
//! Three scoring families are supported. TransE trains with a margin
//! ranking loss and keeps entity rows on the unit sphere; DistMult and
//! ComplEx train with a softplus loss over positives plus sampled
//! negatives and a small L2 penalty. Everything is seeded, so a run is
//! reproducible bit for bit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Term;
use crate::store::TripleIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    TransE,
    DistMult,
    ComplEx,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<ModelKind, String> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            kind: ModelKind::DistMult,
            dim: 100,
            batch_size: 16_000,
            epochs: 3,
            learning_rate: 0.05,
            margin: 1.0,
            negatives_per_positive: 2,
            l2: 1e-5,
            seed: 7,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<(), EmbedError> {
        if self.dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(EmbedError::InvalidConfig("dim, batch size and epochs must be positive".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(EmbedError::InvalidConfig("learning rate must be finite and not negative".into()));
        }
        if self.margin <= 0.0 || self.negatives_per_positive == 0 {
            return Err(EmbedError::InvalidConfig(
                "margin and negatives per positive must be positive".into(),
            ));
        }
        if self.kind == ModelKind::ComplEx && self.dim % 2 != 0 {
            return Err(EmbedError::InvalidConfig("complex needs an even dimension".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{0} statements with entity objects is too few to split; need at least 10")]
    TooFewTriples(usize),
    #[error("loss became non-finite in epoch {epoch}, batch {batch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dense-indexed triples with a deterministic train/valid/test split.
#[derive(Debug, Clone)]
pub struct IdTripleSet {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub train: Vec<[usize; 3]>,
    pub valid: Vec<[usize; 3]>,
    pub test: Vec<[usize; 3]>,
}

impl IdTripleSet {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triple_count(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    fn known(&self) -> HashSet<[usize; 3]> {
        self.train.iter().chain(&self.valid).chain(&self.test).copied().collect()
    }
}

/// Extracts the IRI-object statements from the index, numbers entities and
/// relations in sorted IRI order, and splits them. Every entity and
/// relation seen in valid or test is guaranteed to appear in train;
/// violating triples are moved into train until that holds.
pub fn build_id_triples(
    index: &TripleIndex,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<IdTripleSet, EmbedError> {
    let mut edges: Vec<(String, String, String)> = Vec::new();
    for (s, p, o) in index.distinct_triples() {
        let (Term::Iri(s), Term::Iri(p), Term::Iri(o)) = (s, p, o) else { continue };
        edges.push((s.as_str().to_string(), p.as_str().to_string(), o.as_str().to_string()));
    }
    if edges.len() < 10 {
        return Err(EmbedError::TooFewTriples(edges.len()));
    }

    let mut entity_set: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    let mut relation_set: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for (s, p, o) in &edges {
        entity_set.insert(s);
        entity_set.insert(o);
        relation_set.insert(p);
    }
    // Indices follow sorted IRI order, so the numbering is deterministic.
    let entities: Vec<String> = entity_set.iter().map(|s| s.to_string()).collect();
    let relations: Vec<String> = relation_set.iter().map(|s| s.to_string()).collect();
    let entity_ix: HashMap<&str, usize> =
        entities.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let relation_ix: HashMap<&str, usize> =
        relations.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut triples: Vec<[usize; 3]> = edges
        .iter()
        .map(|(s, p, o)| [entity_ix[s.as_str()], relation_ix[p.as_str()], entity_ix[o.as_str()]])
        .collect();
    triples.sort_unstable();
    triples.dedup();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in (1..triples.len()).rev() {
        triples.swap(i, rng.random_range(0..=i));
    }
    let n = triples.len();
    let n_valid = (n as f64 * ratios.1).round() as usize;
    let n_test = (n as f64 * ratios.2).round() as usize;
    let n_train = n - n_valid - n_test;
    let mut train: Vec<[usize; 3]> = triples[..n_train].to_vec();
    let mut valid: Vec<[usize; 3]> = triples[n_train..n_train + n_valid].to_vec();
    let mut test: Vec<[usize; 3]> = triples[n_train + n_valid..].to_vec();

    loop {
        let mut seen_entity = vec![false; entities.len()];
        let mut seen_relation = vec![false; relations.len()];
        for [h, r, t] in &train {
            seen_entity[*h] = true;
            seen_entity[*t] = true;
            seen_relation[*r] = true;
        }
        let mut moved = false;
        for held in [&mut valid, &mut test] {
            let mut keep = Vec::with_capacity(held.len());
            for triple in held.drain(..) {
                let [h, r, t] = triple;
                if seen_entity[h] && seen_entity[t] && seen_relation[r] {
                    keep.push(triple);
                } else {
                    train.push(triple);
                    moved = true;
                }
            }
            *held = keep;
        }
        if !moved {
            break;
        }
    }

    Ok(IdTripleSet { entities, relations, train, valid, test })
}

#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub kind: ModelKind,
    pub dim: usize,
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
}

impl EmbeddingModel {
    fn init(kind: ModelKind, dim: usize, entity_count: usize, relation_count: usize, rng: &mut ChaCha20Rng) -> EmbeddingModel {
        let bound = 6.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let mut model = EmbeddingModel {
            kind,
            dim,
            entities: draw(entity_count * dim),
            relations: draw(relation_count * dim),
        };
        if kind == ModelKind::TransE {
            for e in 0..entity_count {
                model.normalize_entity(e);
            }
        }
        model
    }

    pub fn entity(&self, e: usize) -> &[f64] {
        &self.entities[e * self.dim..(e + 1) * self.dim]
    }

    pub fn relation(&self, r: usize) -> &[f64] {
        &self.relations[r * self.dim..(r + 1) * self.dim]
    }

    fn normalize_entity(&mut self, e: usize) {
        let row = &mut self.entities[e * self.dim..(e + 1) * self.dim];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row {
                *v /= norm;
            }
        }
    }

    /// Plausibility of (h, r, t); higher is more plausible for every kind.
    pub fn score(&self, h: usize, r: usize, t: usize) -> f64 {
        score_rows(self.kind, self.dim, self.entity(h), self.relation(r), self.entity(t))
    }
}

fn score_rows(kind: ModelKind, dim: usize, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE => {
            let mut sq = 0.0;
            for i in 0..dim {
                let d = h[i] + r[i] - t[i];
                sq += d * d;
            }
            -sq.sqrt()
        }
        // h*t first, so the float rounding is identical either way around
        // and the symmetry property holds exactly.
        ModelKind::DistMult => (0..dim).map(|i| r[i] * (h[i] * t[i])).sum(),
        ModelKind::ComplEx => {
            let half = dim / 2;
            let mut score = 0.0;
            for i in 0..half {
                let (hr, hi) = (h[i], h[half + i]);
                let (rr, ri) = (r[i], r[half + i]);
                let (tr, ti) = (t[i], t[half + i]);
                score += hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr;
            }
            score
        }
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

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// One positive with its presampled corruptions.
#[derive(Debug, Clone)]
pub struct BatchExample {
    pub positive: [usize; 3],
    pub negatives: Vec<[usize; 3]>,
}

/// Sparse gradient accumulators, one slot per touched row.
#[derive(Debug, Default)]
pub struct BatchGradients {
    pub entities: BTreeMap<usize, Vec<f64>>,
    pub relations: BTreeMap<usize, Vec<f64>>,
}

impl BatchGradients {
    fn entity_row(&mut self, e: usize, dim: usize) -> &mut Vec<f64> {
        self.entities.entry(e).or_insert_with(|| vec![0.0; dim])
    }

    fn relation_row(&mut self, r: usize, dim: usize) -> &mut Vec<f64> {
        self.relations.entry(r).or_insert_with(|| vec![0.0; dim])
    }
}

fn add_scaled(acc: &mut [f64], row: &[f64], scale: f64) {
    for (a, v) in acc.iter_mut().zip(row) {
        *a += scale * v;
    }
}

/// Adds the gradient of `weight * score(h, r, t)` for one triple.
fn accumulate_score_gradient(
    model: &EmbeddingModel,
    grads: &mut BatchGradients,
    [h, r, t]: [usize; 3],
    weight: f64,
) {
    let dim = model.dim;
    match model.kind {
        ModelKind::TransE => {
            // score = -||h + r - t||; d(score)/dh = -(h + r - t)/||.||
            let (eh, er, et) = (model.entity(h), model.relation(r), model.entity(t));
            let mut diff = vec![0.0; dim];
            let mut sq = 0.0;
            for i in 0..dim {
                diff[i] = eh[i] + er[i] - et[i];
                sq += diff[i] * diff[i];
            }
            let norm = sq.sqrt();
            if norm == 0.0 {
                return;
            }
            let scale = -weight / norm;
            add_scaled(grads.entity_row(h, dim), &diff, scale);
            add_scaled(grads.relation_row(r, dim), &diff, scale);
            add_scaled(grads.entity_row(t, dim), &diff, -scale);
        }
        ModelKind::DistMult => {
            let (eh, er, et) = (model.entity(h), model.relation(r), model.entity(t));
            let gh: Vec<f64> = (0..dim).map(|i| er[i] * et[i]).collect();
            let gr: Vec<f64> = (0..dim).map(|i| eh[i] * et[i]).collect();
            let gt: Vec<f64> = (0..dim).map(|i| eh[i] * er[i]).collect();
            add_scaled(grads.entity_row(h, dim), &gh, weight);
            add_scaled(grads.relation_row(r, dim), &gr, weight);
            add_scaled(grads.entity_row(t, dim), &gt, weight);
        }
        ModelKind::ComplEx => {
            let (eh, er, et) = (model.entity(h), model.relation(r), model.entity(t));
            let half = dim / 2;
            let mut gh = vec![0.0; dim];
            let mut gr = vec![0.0; dim];
            let mut gt = vec![0.0; dim];
            for i in 0..half {
                let (hr, hi) = (eh[i], eh[half + i]);
                let (rr, ri) = (er[i], er[half + i]);
                let (tr, ti) = (et[i], et[half + i]);
                gh[i] = rr * tr + ri * ti;
                gh[half + i] = rr * ti - ri * tr;
                gr[i] = hr * tr + hi * ti;
                gr[half + i] = hr * ti - hi * tr;
                gt[i] = hr * rr - hi * ri;
                gt[half + i] = hi * rr + hr * ri;
            }
            add_scaled(grads.entity_row(h, dim), &gh, weight);
            add_scaled(grads.relation_row(r, dim), &gr, weight);
            add_scaled(grads.entity_row(t, dim), &gt, weight);
        }
    }
}

/// Summed loss over the batch and its exact gradients. The sum, not the
/// mean, so the step an individual row takes does not shrink with the
/// batch size. Pure: no parameter update, no renormalization, no
/// randomness.
pub fn batch_gradients(
    model: &EmbeddingModel,
    examples: &[BatchExample],
    cfg: &TrainConfig,
) -> (f64, BatchGradients) {
    let mut grads = BatchGradients::default();
    let mut loss = 0.0;
    for example in examples {
        let pos = example.positive;
        let k = example.negatives.len().max(1) as f64;
        match cfg.kind {
            ModelKind::TransE => {
                let s_pos = model.score(pos[0], pos[1], pos[2]);
                for &neg in &example.negatives {
                    let s_neg = model.score(neg[0], neg[1], neg[2]);
                    let hinge = cfg.margin - s_pos + s_neg;
                    if hinge > 0.0 {
                        loss += hinge / k;
                        accumulate_score_gradient(model, &mut grads, pos, -1.0 / k);
                        accumulate_score_gradient(model, &mut grads, neg, 1.0 / k);
                    }
                }
            }
            ModelKind::DistMult | ModelKind::ComplEx => {
                let s_pos = model.score(pos[0], pos[1], pos[2]);
                loss += softplus(-s_pos);
                accumulate_score_gradient(model, &mut grads, pos, -sigmoid(-s_pos));
                for &neg in &example.negatives {
                    let s_neg = model.score(neg[0], neg[1], neg[2]);
                    loss += softplus(s_neg) / k;
                    accumulate_score_gradient(model, &mut grads, neg, sigmoid(s_neg) / k);
                }
                let [h, r, t] = pos;
                loss += cfg.l2
                    * (model.entity(h).iter().map(|v| v * v).sum::<f64>()
                        + model.relation(r).iter().map(|v| v * v).sum::<f64>()
                        + model.entity(t).iter().map(|v| v * v).sum::<f64>());
                add_scaled(grads.entity_row(h, model.dim), model.entity(h), cfg.l2 * 2.0);
                add_scaled(grads.relation_row(r, model.dim), model.relation(r), cfg.l2 * 2.0);
                add_scaled(grads.entity_row(t, model.dim), model.entity(t), cfg.l2 * 2.0);
            }
        }
    }
    (loss, grads)
}

#[derive(Debug)]
pub struct TrainRun {
    pub model: EmbeddingModel,
    pub epoch_mean_loss: Vec<f64>,
}

pub fn train(ids: &IdTripleSet, cfg: &TrainConfig) -> Result<TrainRun, EmbedError> {
    cfg.check()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut model = EmbeddingModel::init(
        cfg.kind,
        cfg.dim,
        ids.entity_count(),
        ids.relation_count(),
        &mut rng,
    );
    let entity_count = ids.entity_count();
    let mut order: Vec<usize> = (0..ids.train.len()).collect();
    let mut epoch_mean_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut loss_sum = 0.0;
        let mut example_count = 0usize;
        for (batch_ix, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let examples: Vec<BatchExample> = chunk
                .iter()
                .map(|&i| {
                    let positive = ids.train[i];
                    let negatives = (0..cfg.negatives_per_positive)
                        .map(|_| {
                            let mut corrupt = positive;
                            let slot = if rng.random_bool(0.5) { 0 } else { 2 };
                            corrupt[slot] = rng.random_range(0..entity_count);
                            corrupt
                        })
                        .collect();
                    BatchExample { positive, negatives }
                })
                .collect();
            let (loss, grads) = batch_gradients(&model, &examples, cfg);
            if !loss.is_finite() {
                return Err(EmbedError::NonFiniteLoss { epoch, batch: batch_ix });
            }
            if cfg.learning_rate == 0.0 {
                loss_sum += loss;
                example_count += examples.len();
                continue;
            }
            for (e, grad) in &grads.entities {
                let row = &mut model.entities[e * cfg.dim..(e + 1) * cfg.dim];
                for (v, g) in row.iter_mut().zip(grad) {
                    *v -= cfg.learning_rate * g;
                }
            }
            for (r, grad) in &grads.relations {
                let row = &mut model.relations[r * cfg.dim..(r + 1) * cfg.dim];
                for (v, g) in row.iter_mut().zip(grad) {
                    *v -= cfg.learning_rate * g;
                }
            }
            if cfg.kind == ModelKind::TransE {
                for &e in grads.entities.keys() {
                    model.normalize_entity(e);
                }
            }
            loss_sum += loss;
            example_count += examples.len();
        }
        let mean = if example_count == 0 { 0.0 } else { loss_sum / example_count as f64 };
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        epoch_mean_loss.push(mean);
    }
    Ok(TrainRun { model, epoch_mean_loss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mrr_raw: f64,
    pub mrr_filtered: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
    pub ranked: usize,
}

/// Rank of the true candidate among `scores`, pessimistic about ties:
/// any other candidate scoring at least as high counts as better.
/// Filtered rank additionally ignores candidates marked `known`.
fn rank_of(scores: &[f64], true_ix: usize, known: &[bool]) -> (usize, usize) {
    let target = scores[true_ix];
    let mut raw = 1;
    let mut filtered = 1;
    for (ix, &s) in scores.iter().enumerate() {
        if ix == true_ix || s < target {
            continue;
        }
        raw += 1;
        if !known[ix] {
            filtered += 1;
        }
    }
    (raw, filtered)
}

/// Ranks every test triple against all corrupted heads and tails.
pub fn evaluate(model: &EmbeddingModel, ids: &IdTripleSet) -> EvalResult {
    let known = ids.known();
    let n = ids.entity_count();
    let mut recip_raw = 0.0;
    let mut recip_filtered = 0.0;
    let mut hits = [0usize; 3];
    let mut ranked = 0usize;
    let mut scores = vec![0.0; n];
    let mut mask = vec![false; n];
    for &[h, r, t] in &ids.test {
        for (true_ix, corrupt_tail) in [(t, true), (h, false)] {
            for c in 0..n {
                let candidate = if corrupt_tail { [h, r, c] } else { [c, r, t] };
                scores[c] = model.score(candidate[0], candidate[1], candidate[2]);
                mask[c] = c != true_ix && known.contains(&candidate);
            }
            let (raw, filtered) = rank_of(&scores, true_ix, &mask);
            recip_raw += 1.0 / raw as f64;
            recip_filtered += 1.0 / filtered as f64;
            for (slot, cut) in [1usize, 3, 10].into_iter().enumerate() {
                if filtered <= cut {
                    hits[slot] += 1;
                }
            }
            ranked += 1;
        }
    }
    let denom = ranked.max(1) as f64;
    EvalResult {
        mrr_raw: recip_raw / denom,
        mrr_filtered: recip_filtered / denom,
        hits_at_1: hits[0] as f64 / denom,
        hits_at_3: hits[1] as f64 / denom,
        hits_at_10: hits[2] as f64 / denom,
        ranked,
    }
}

/// Expected mean reciprocal rank of a uniformly random ranking over
/// `candidates` choices.
pub fn random_baseline_mrr(candidates: usize) -> f64 {
    (1..=candidates).map(|r| 1.0 / r as f64).sum::<f64>() / candidates as f64
}

/// Maximum relative error between analytic batch gradients and central
/// finite differences, probed on a small random instance.
pub fn gradient_check(kind: ModelKind, seed: u64) -> f64 {
    let dim = 6;
    let cfg = TrainConfig {
        kind,
        dim,
        batch_size: 4,
        epochs: 1,
        learning_rate: 0.01,
        margin: 1.0,
        negatives_per_positive: 2,
        l2: 1e-3,
        seed,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut model = EmbeddingModel::init(kind, dim, 5, 2, &mut rng);
    // Random parameters land on the hinge boundary with probability zero,
    // but nudge everything slightly anyway so finite differences stay
    // two-sided on the same hinge branch.
    for v in model.entities.iter_mut().chain(model.relations.iter_mut()) {
        *v += 0.011;
    }
    let examples: Vec<BatchExample> = (0..4)
        .map(|_| {
            let positive = [rng.random_range(0..5), rng.random_range(0..2), rng.random_range(0..5)];
            let negatives = (0..2)
                .map(|_| {
                    let mut corrupt = positive;
                    let slot = if rng.random_bool(0.5) { 0 } else { 2 };
                    corrupt[slot] = rng.random_range(0..5);
                    corrupt
                })
                .collect();
            BatchExample { positive, negatives }
        })
        .collect();
    if kind == ModelKind::TransE {
        let (_, grads) = batch_gradients(&model, &examples, &cfg);
        assert!(
            !grads.entities.is_empty(),
            "degenerate probe: every hinge inactive, pick another seed"
        );
    }

    let (_, grads) = batch_gradients(&model, &examples, &cfg);
    let mut dense_entity = vec![0.0; model.entities.len()];
    let mut dense_relation = vec![0.0; model.relations.len()];
    for (e, grad) in &grads.entities {
        dense_entity[e * dim..(e + 1) * dim].copy_from_slice(grad);
    }
    for (r, grad) in &grads.relations {
        dense_relation[r * dim..(r + 1) * dim].copy_from_slice(grad);
    }

    let mut worst = 0.0f64;
    let eps = 1e-6;
    for slot in 0..model.entities.len() + model.relations.len() {
        let loss_at = |model: &mut EmbeddingModel, delta: f64| {
            let param = if slot < model.entities.len() {
                &mut model.entities[slot]
            } else {
                let ix = slot - model.entities.len();
                &mut model.relations[ix]
            };
            let saved = *param;
            *param = saved + delta;
            let (loss, _) = batch_gradients(model, &examples, &cfg);
            let param = if slot < model.entities.len() {
                &mut model.entities[slot]
            } else {
                let ix = slot - model.entities.len();
                &mut model.relations[ix]
            };
            *param = saved;
            loss
        };
        let plus = loss_at(&mut model, eps);
        let minus = loss_at(&mut model, -eps);
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = if slot < dense_entity.len() {
            dense_entity[slot]
        } else {
            dense_relation[slot - dense_entity.len()]
        };
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

/// Small graph with compositional structure: items point at their
/// category, categories cluster into groups, and items chain to the next
/// item of the same category. Learnable by all three model families.
pub fn toy_index() -> TripleIndex {
    use crate::model::Iri;
    let item = |i: usize| Iri::new(format!("http://example.org/item/{i:03}")).unwrap();
    let cat = |c: usize| Iri::new(format!("http://example.org/category/{c:02}")).unwrap();
    let rel = |name: &str| Iri::new(format!("http://example.org/relation/{name}")).unwrap();
    let mut index = TripleIndex::new();
    let add = |index: &mut TripleIndex, s: &Iri, p: &Iri, o: &Iri| {
        index.insert(s, p, &Term::Iri(o.clone()), None);
    };
    let in_category = rel("inCategory");
    let shares_category = rel("sharesCategoryWith");
    let grouped_with = rel("groupedWith");
    let next_item = rel("nextItem");
    for i in 0..170 {
        add(&mut index, &item(i), &in_category, &cat(i % 30));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    for _ in 0..800 {
        let a = rng.random_range(0..170usize);
        let in_same_category = if a % 30 < 20 { 6 } else { 5 };
        let step = rng.random_range(1..in_same_category);
        let b = ((a / 30 + step) % in_same_category) * 30 + a % 30;
        add(&mut index, &item(a), &shares_category, &item(b));
    }
    for group in 0..6 {
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    add(&mut index, &cat(group * 5 + a), &grouped_with, &cat(group * 5 + b));
                }
            }
        }
    }
    for i in 0..140 {
        add(&mut index, &item(i), &next_item, &item(i + 30));
    }
    index.finalize();
    index
}

/// Writes one row per entity: the IRI, then the embedding components.
pub fn write_embeddings_tsv(
    model: &EmbeddingModel,
    ids: &IdTripleSet,
    path: &Path,
) -> Result<(), EmbedError> {
    let io_err = |source| EmbedError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    for (e, iri) in ids.entities.iter().enumerate() {
        write!(out, "{iri}").map_err(io_err)?;
        for v in model.entity(e) {
            write!(out, "\t{v}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_ids() -> IdTripleSet {
        build_id_triples(&toy_index(), (0.8, 0.1, 0.1), 13).unwrap()
    }

    #[test]
    fn id_triples_split_and_cover() {
        let ids = toy_ids();
        assert!(ids.entity_count() == 200, "170 items + 30 categories");
        assert_eq!(ids.relation_count(), 4);
        let total = ids.triple_count();
        assert!(ids.valid.len() <= total / 10 + 1);
        assert!(ids.test.len() <= total / 10 + 1);
        let train_entities: HashSet<usize> =
            ids.train.iter().flat_map(|&[h, _, t]| [h, t]).collect();
        let train_relations: HashSet<usize> = ids.train.iter().map(|&[_, r, _]| r).collect();
        for &[h, r, t] in ids.valid.iter().chain(&ids.test) {
            assert!(train_entities.contains(&h) && train_entities.contains(&t));
            assert!(train_relations.contains(&r));
        }
        let train_set: HashSet<[usize; 3]> = ids.train.iter().copied().collect();
        assert!(ids.valid.iter().chain(&ids.test).all(|t| !train_set.contains(t)));
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let a = build_id_triples(&toy_index(), (0.8, 0.1, 0.1), 5).unwrap();
        let b = build_id_triples(&toy_index(), (0.8, 0.1, 0.1), 5).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.valid, b.valid);
        assert_eq!(a.test, b.test);
        let c = build_id_triples(&toy_index(), (0.8, 0.1, 0.1), 6).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn too_few_triples_is_rejected() {
        let mut index = TripleIndex::new();
        let a = crate::model::Iri::new("http://example.org/a").unwrap();
        let b = crate::model::Iri::new("http://example.org/b").unwrap();
        index.insert(&a, &b, &Term::Iri(a.clone()), None);
        index.finalize();
        match build_id_triples(&index, (0.8, 0.1, 0.1), 1) {
            Err(EmbedError::TooFewTriples(1)) => {}
            other => panic!("expected TooFewTriples, got {other:?}"),
        }
    }

    #[test]
    fn literal_objects_stay_out() {
        let mut index = TripleIndex::new();
        let s = crate::model::Iri::new("http://example.org/s").unwrap();
        let p = crate::model::Iri::new("http://example.org/p").unwrap();
        let o = crate::model::Iri::new("http://example.org/o").unwrap();
        for i in 0..12 {
            let s_i = crate::model::Iri::new(format!("http://example.org/s/{i}")).unwrap();
            index.insert(&s_i, &p, &Term::Iri(o.clone()), None);
        }
        index.insert(&s, &p, &Term::Literal(crate::model::Literal::string("text")), None);
        index.finalize();
        let ids = build_id_triples(&index, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!(ids.triple_count(), 12);
        assert!(ids.entities.iter().all(|e| e.starts_with("http")));
    }

    #[test]
    fn score_definitions_hold_at_fixed_points() {
        let zero = EmbeddingModel { kind: ModelKind::TransE, dim: 4, entities: vec![0.0; 8], relations: vec![0.0; 4] };
        assert_eq!(zero.score(0, 0, 1), 0.0);

        let mut basis = EmbeddingModel { kind: ModelKind::DistMult, dim: 4, entities: vec![0.0; 8], relations: vec![1.0; 4] };
        basis.entities[2] = 1.0;
        basis.entities[4 + 2] = 1.0;
        assert_eq!(basis.score(0, 0, 1), 1.0);
    }

    #[test]
    fn complex_with_zero_imaginary_reduces_to_distmult() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let half = 5;
        let real: Vec<f64> = (0..half * 3 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut complex = EmbeddingModel {
            kind: ModelKind::ComplEx,
            dim: half * 2,
            entities: vec![0.0; 2 * half * 2],
            relations: vec![0.0; half * 2],
        };
        let mut distmult = EmbeddingModel {
            kind: ModelKind::DistMult,
            dim: half,
            entities: vec![0.0; 2 * half],
            relations: vec![0.0; half],
        };
        for i in 0..half {
            complex.entities[i] = real[i];
            complex.entities[half * 2 + i] = real[half + i];
            complex.relations[i] = real[half * 2 + i];
            distmult.entities[i] = real[i];
            distmult.entities[half + i] = real[half + i];
            distmult.relations[i] = real[half * 2 + i];
        }
        let a = complex.score(0, 0, 1);
        let b = distmult.score(0, 0, 1);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn distmult_is_symmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let model = EmbeddingModel {
            kind: ModelKind::DistMult,
            dim: 8,
            entities: (0..32).map(|_| rng.random_range(-1.0..1.0)).collect(),
            relations: (0..16).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        for h in 0..4 {
            for t in 0..4 {
                for r in 0..2 {
                    assert_eq!(model.score(h, r, t), model.score(t, r, h));
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in [ModelKind::TransE, ModelKind::DistMult, ModelKind::ComplEx] {
            let err = gradient_check(kind, 41);
            assert!(err <= 1e-4, "{kind}: relative error {err}");
        }
    }

    #[test]
    fn rank_breaks_ties_pessimistically() {
        let scores = [0.5, 0.9, 0.5, 0.1, 0.5];
        let known = [false, false, true, false, false];
        let (raw, filtered) = rank_of(&scores, 0, &known);
        assert_eq!(raw, 4, "one higher, two ties count against");
        assert_eq!(filtered, 3, "the known tie is excused");
    }

    #[test]
    fn perfect_and_second_place_mrr() {
        let scores = [0.9, 0.1, 0.2];
        assert_eq!(rank_of(&scores, 0, &[false; 3]), (1, 1));
        let scores = [0.5, 0.9, 0.2];
        assert_eq!(rank_of(&scores, 0, &[false; 3]), (2, 2));
    }

    #[test]
    fn evaluation_matches_brute_force_oracle() {
        let ids = {
            let mut rng = ChaCha20Rng::seed_from_u64(21);
            let mut triples: Vec<[usize; 3]> = (0..140)
                .map(|_| [rng.random_range(0..50), rng.random_range(0..3), rng.random_range(0..50)])
                .collect();
            triples.sort_unstable();
            triples.dedup();
            let held = triples.len() / 10;
            let test = triples.split_off(triples.len() - held);
            let valid = triples.split_off(triples.len() - held);
            IdTripleSet {
                entities: (0..50).map(|i| format!("http://example.org/e/{i}")).collect(),
                relations: (0..3).map(|i| format!("http://example.org/r/{i}")).collect(),
                train: triples,
                valid,
                test,
            }
        };
        let run = train(&ids, &TrainConfig { dim: 8, epochs: 4, batch_size: 64, ..TrainConfig::default() }).unwrap();
        let fast = evaluate(&run.model, &ids);

        let known = ids.known();
        let mut recip_raw = Vec::new();
        let mut recip_filtered = Vec::new();
        let mut filtered_ranks = Vec::new();
        for &[h, r, t] in &ids.test {
            let tail_scores: Vec<f64> = (0..50).map(|c| run.model.score(h, r, c)).collect();
            let head_scores: Vec<f64> = (0..50).map(|c| run.model.score(c, r, t)).collect();
            for (scores, true_ix, is_tail) in [(tail_scores, t, true), (head_scores, h, false)] {
                let mut raw = 1;
                let mut filtered = 1;
                for c in 0..50 {
                    if c == true_ix {
                        continue;
                    }
                    if scores[c] >= scores[true_ix] {
                        raw += 1;
                        let candidate = if is_tail { [h, r, c] } else { [c, r, t] };
                        if !known.contains(&candidate) {
                            filtered += 1;
                        }
                    }
                }
                recip_raw.push(1.0 / raw as f64);
                recip_filtered.push(1.0 / filtered as f64);
                filtered_ranks.push(filtered);
            }
        }
        let n = recip_raw.len() as f64;
        assert_eq!(fast.ranked, recip_raw.len());
        assert!((fast.mrr_raw - recip_raw.iter().sum::<f64>() / n).abs() < 1e-12);
        assert!((fast.mrr_filtered - recip_filtered.iter().sum::<f64>() / n).abs() < 1e-12);
        let hits1 = filtered_ranks.iter().filter(|&&r| r <= 1).count() as f64 / n;
        let hits10 = filtered_ranks.iter().filter(|&&r| r <= 10).count() as f64 / n;
        assert!((fast.hits_at_1 - hits1).abs() < 1e-12);
        assert!((fast.hits_at_10 - hits10).abs() < 1e-12);
        assert!(fast.mrr_filtered >= fast.mrr_raw);
        assert!(fast.hits_at_1 <= fast.hits_at_3 && fast.hits_at_3 <= fast.hits_at_10);
    }

    #[test]
    fn same_seed_reproduces_parameters_exactly() {
        let ids = toy_ids();
        let cfg = TrainConfig { dim: 16, epochs: 2, batch_size: 256, ..TrainConfig::default() };
        let a = train(&ids, &cfg).unwrap();
        let b = train(&ids, &cfg).unwrap();
        assert_eq!(a.model.entities, b.model.entities);
        assert_eq!(a.model.relations, b.model.relations);
        assert_eq!(a.epoch_mean_loss, b.epoch_mean_loss);
    }

    #[test]
    fn zero_learning_rate_leaves_initialization_untouched() {
        let ids = toy_ids();
        for kind in [ModelKind::TransE, ModelKind::DistMult] {
            let cfg = TrainConfig {
                kind,
                dim: 8,
                epochs: 2,
                batch_size: 256,
                learning_rate: 0.0,
                ..TrainConfig::default()
            };
            let run = train(&ids, &cfg).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            let fresh = EmbeddingModel::init(kind, 8, ids.entity_count(), ids.relation_count(), &mut rng);
            assert_eq!(run.model.entities, fresh.entities);
            assert_eq!(run.model.relations, fresh.relations);
        }
    }

    #[test]
    fn toy_graph_beats_random_baseline_five_fold() {
        let ids = toy_ids();
        let cfg = TrainConfig {
            kind: ModelKind::DistMult,
            dim: 64,
            epochs: 60,
            batch_size: 256,
            learning_rate: 0.02,
            negatives_per_positive: 8,
            ..TrainConfig::default()
        };
        let run = train(&ids, &cfg).unwrap();
        for window in run.epoch_mean_loss.windows(2) {
            assert!(
                window[1] <= window[0] * 1.05,
                "loss jumped: {} -> {}",
                window[0],
                window[1]
            );
        }
        let result = evaluate(&run.model, &ids);
        let baseline = random_baseline_mrr(ids.entity_count());
        assert!(
            result.mrr_filtered >= 5.0 * baseline,
            "filtered MRR {} vs baseline {baseline}",
            result.mrr_filtered
        );
    }

    #[test]
    fn transe_rows_stay_unit_length() {
        let ids = toy_ids();
        let cfg = TrainConfig {
            kind: ModelKind::TransE,
            dim: 16,
            epochs: 3,
            batch_size: 128,
            ..TrainConfig::default()
        };
        let run = train(&ids, &cfg).unwrap();
        for e in 0..ids.entity_count() {
            let norm: f64 = run.model.entity(e).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "entity {e} norm {norm}");
        }
    }

    #[test]
    fn embeddings_tsv_has_one_row_per_entity() {
        let ids = toy_ids();
        let cfg = TrainConfig { dim: 4, epochs: 1, batch_size: 512, ..TrainConfig::default() };
        let run = train(&ids, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.tsv");
        write_embeddings_tsv(&run.model, &ids, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), ids.entity_count());
        for line in &lines {
            assert_eq!(line.split('\t').count(), 1 + 4);
        }
        assert!(lines[0].starts_with("http://example.org/"));
        for (value, expected) in lines[0].split('\t').skip(1).zip(run.model.entity(0)) {
            assert_eq!(value.parse::<f64>().unwrap(), *expected);
        }
    }
}
