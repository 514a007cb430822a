use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{LossMode, TrainConfig};
use super::dataset::{build_split, Dataset};
use crate::embeddings::{features, EmbeddingKind};
use crate::error::{Error, Result};
use crate::losses::{l1_gradient, participation_loss, sd_gap};
use crate::nn::{AdamState, CheckpointMeta, Gradients, MlpModel};
use crate::profiles::Profile;
use crate::rules::{Lottery, RuleId, SocialChoice};
use crate::seed::{
    rng_for, RNG_NAME, STREAM_AUGMENT, STREAM_SHUFFLE, STREAM_TEST, STREAM_TRAIN, STREAM_VALIDATION,
};

/// Rows per forward pass when evaluating.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    /// `rule_loss + participation_loss`.
    pub loss: f64,
    pub rule_loss: f64,
    pub participation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_rule_loss: f64,
    pub val_participation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub profiles: usize,
    pub voters: usize,
    pub rule_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub participation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Train,
    Retrain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: RunKind,
    pub config: TrainConfig,
    pub rng: String,
    pub num_params: usize,
    pub epochs: Vec<EpochRecord>,
    /// Test metrics of the starting model (retraining only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_test: Option<TestMetrics>,
    pub final_test: TestMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_loss_increase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_guard_band: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    /// Kept out of the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            rule: self.config.rule,
            embedding: self.config.embedding,
            m: self.config.m,
            seed: self.config.seed,
            epoch: self.epochs.len(),
        }
    }
}

fn gather(data: &Dataset, indices: &[usize]) -> Vec<f64> {
    let mut xs = Vec::with_capacity(indices.len() * data.feature_dim());
    for &i in indices {
        xs.extend_from_slice(data.feature_row(i));
    }
    xs
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Worst abstention of one profile: `(loss, voter, prefix)` given the
/// truthful output `q` and the `n x m` abstention outputs.
fn worst_abstention(profile: &Profile, q: &[f64], abstentions: &[f64]) -> (f64, usize, usize) {
    let m = q.len();
    let mut worst = (0.0, 0, 0);
    for (i, p) in abstentions.chunks_exact(m).enumerate() {
        let (gap, prefix) = sd_gap(p, profile.ballots()[i].ranking(), q);
        if gap > worst.0 {
            worst = (gap, i, prefix);
        }
    }
    worst
}

fn abstention_outputs(model: &MlpModel, data: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    let mut xs = Vec::with_capacity(indices.len() * data.n * data.feature_dim());
    for &i in indices {
        xs.extend_from_slice(
            data.abstention_rows(i)
                .ok_or_else(|| Error::Internal("abstention features not computed".into()))?,
        );
    }
    Ok(model.forward_batch(&xs, indices.len() * data.n)?.output().to_vec())
}

/// Mean loss over the profiles `indices` of `data`, without gradients.
pub fn batch_loss(model: &MlpModel, data: &Dataset, indices: &[usize], mode: LossMode) -> Result<BatchLoss> {
    batch_loss_impl(model, data, indices, mode, None)
}

/// Mean loss over the profiles `indices` of `data`; its gradient with
/// respect to every parameter is written into `grads`.
pub fn batch_loss_and_grad(
    model: &MlpModel,
    data: &Dataset,
    indices: &[usize],
    mode: LossMode,
    grads: &mut Gradients,
) -> Result<BatchLoss> {
    grads.fill_zero();
    batch_loss_impl(model, data, indices, mode, Some(grads))
}

fn batch_loss_impl(
    model: &MlpModel,
    data: &Dataset,
    indices: &[usize],
    mode: LossMode,
    grads: Option<&mut Gradients>,
) -> Result<BatchLoss> {
    if indices.is_empty() {
        return Err(Error::InvalidDimension("empty batch".into()));
    }
    let m = data.m;
    let rows = indices.len();
    let scale = 1.0 / rows as f64;
    let cache = model.forward_batch(&gather(data, indices), rows)?;
    let out = cache.output();

    let mut rule_total = 0.0;
    let mut upstream = vec![0.0; rows * m];
    for (r, &i) in indices.iter().enumerate() {
        let y = &out[r * m..(r + 1) * m];
        let t = data.target_row(i);
        rule_total += l1(y, t);
        l1_gradient(y, t, &mut upstream[r * m..(r + 1) * m]);
    }

    let mut part_total = 0.0;
    // (abstention features, prefix candidates) of each profile with a positive loss.
    let mut selected: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    if mode.uses_participation() {
        let n = data.n;
        let abst = abstention_outputs(model, data, indices)?;
        for (r, &i) in indices.iter().enumerate() {
            let block = &abst[r * n * m..(r + 1) * n * m];
            let profile = &data.profiles[i];
            let (loss, voter, prefix) = worst_abstention(profile, &out[r * m..(r + 1) * m], block);
            part_total += loss;
            if loss > 0.0 {
                let top: Vec<usize> = profile.ballots()[voter].ranking()[..prefix].to_vec();
                for &c in &top {
                    upstream[r * m + c] += 1.0;
                }
                let d = data.feature_dim();
                let x = data.abstention_rows(i).expect("checked above")[voter * d..(voter + 1) * d].to_vec();
                selected.push((x, top));
            }
        }
    }

    if let Some(grads) = grads {
        for g in upstream.iter_mut() {
            *g *= scale;
        }
        model.accumulate_gradients(&cache, &upstream, grads)?;
        if !selected.is_empty() {
            let xs: Vec<f64> = selected.iter().flat_map(|(x, _)| x.iter().copied()).collect();
            let sub = model.forward_batch(&xs, selected.len())?;
            let mut up = vec![0.0; selected.len() * m];
            for (r, (_, top)) in selected.iter().enumerate() {
                for &c in top {
                    up[r * m + c] = -scale;
                }
            }
            model.accumulate_gradients(&sub, &up, grads)?;
        }
    }

    let rule_loss = rule_total * scale;
    let participation_loss = part_total * scale;
    Ok(BatchLoss {
        loss: rule_loss + participation_loss,
        rule_loss,
        participation_loss,
    })
}

/// Mean rule loss (and participation loss if asked) of `model` over `data`.
pub fn evaluate_dataset(model: &MlpModel, data: &Dataset, participation: bool) -> Result<TestMetrics> {
    let m = data.m;
    let mut rule_total = 0.0;
    let mut part_total = 0.0;
    let all: Vec<usize> = (0..data.len()).collect();
    let per_chunk = if participation {
        (EVAL_CHUNK / (data.n + 1)).max(1)
    } else {
        EVAL_CHUNK
    };
    for chunk in all.chunks(per_chunk) {
        let out = model.forward_batch(&gather(data, chunk), chunk.len())?;
        let out = out.output();
        for (r, &i) in chunk.iter().enumerate() {
            rule_total += l1(&out[r * m..(r + 1) * m], data.target_row(i));
        }
        if participation {
            let n = data.n;
            let abst = abstention_outputs(model, data, chunk)?;
            for (r, &i) in chunk.iter().enumerate() {
                let block = &abst[r * n * m..(r + 1) * n * m];
                part_total += worst_abstention(&data.profiles[i], &out[r * m..(r + 1) * m], block).0;
            }
        }
    }
    let count = data.len() as f64;
    Ok(TestMetrics {
        profiles: data.len(),
        voters: data.n,
        rule_loss: rule_total / count,
        participation_loss: participation.then_some(part_total / count),
    })
}

/// A trained model viewed as a PSCF on raw profiles.
pub struct LearnedRule<'a> {
    pub model: &'a MlpModel,
    pub embedding: EmbeddingKind,
}

impl SocialChoice for LearnedRule<'_> {
    fn lottery(&self, p: &Profile) -> Lottery {
        self.model
            .predict(&features(self.embedding, p))
            .expect("profile size matches the model")
    }
}

/// Mean rule loss of any PSCF against the dataset targets, plus mean
/// participation loss when asked.
pub fn evaluate_rule<F: SocialChoice + ?Sized>(f: &F, data: &Dataset, participation: bool) -> Result<TestMetrics> {
    let mut rule_total = 0.0;
    let mut part_total = 0.0;
    for (i, p) in data.profiles.iter().enumerate() {
        rule_total += l1(f.lottery(p).probabilities(), data.target_row(i));
        if participation {
            part_total += participation_loss(f, p)?.value;
        }
    }
    let count = data.len() as f64;
    Ok(TestMetrics {
        profiles: data.len(),
        voters: data.n,
        rule_loss: rule_total / count,
        participation_loss: participation.then_some(part_total / count),
    })
}

/// Evaluates on `count` fresh test profiles with `n_test` voters.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &MlpModel,
    rule: RuleId,
    embedding: EmbeddingKind,
    m: usize,
    n_test: usize,
    count: usize,
    seed: u64,
    participation: bool,
) -> Result<TestMetrics> {
    if model.input_dim() != m * m || model.output_dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: model.output_dim(),
        });
    }
    let mut data = build_split(rule, embedding, m, n_test, count, seed, STREAM_TEST)?;
    if participation {
        data = data.with_abstentions()?;
    }
    evaluate_dataset(model, &data, participation)
}

struct Splits {
    train: Dataset,
    validation: Dataset,
    test: Dataset,
}

fn build_splits(config: &TrainConfig, train: Option<Dataset>) -> Result<Splits> {
    let split = |count, stream| {
        let d = build_split(config.rule, config.embedding, config.m, config.n_train, count, config.seed, stream)?;
        if config.loss_mode.uses_participation() {
            d.with_abstentions()
        } else {
            Ok(d)
        }
    };
    let train = match train {
        Some(d) => {
            if d.m != config.m || d.rule != config.rule || d.embedding != config.embedding {
                return Err(Error::Config(format!(
                    "dataset is {}/{} with m={}, config wants {}/{} with m={}",
                    d.rule, d.embedding, d.m, config.rule, config.embedding, config.m
                )));
            }
            if config.loss_mode.uses_participation() {
                d.with_abstentions()?
            } else {
                d
            }
        }
        None => split(config.train_profiles, STREAM_TRAIN)?,
    };
    if config.batch_size > train.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {} training profiles",
            config.batch_size,
            train.len()
        )));
    }
    Ok(Splits {
        train,
        validation: split(config.validation_profiles, STREAM_VALIDATION)?,
        test: split(config.test_profiles, STREAM_TEST)?,
    })
}

/// Copy of `data` with every profile's candidates renamed by an independent
/// uniform permutation; targets are recomputed by the rule.
fn relabel_dataset<R: rand::Rng>(data: &Dataset, rng: &mut R) -> Result<Dataset> {
    let mut mapping: Vec<usize> = (0..data.m).collect();
    let profiles = data
        .profiles
        .iter()
        .map(|p| {
            mapping.shuffle(rng);
            p.relabel(&mapping)
        })
        .collect::<Result<Vec<_>>>()?;
    let relabeled = Dataset::from_profiles(data.rule, data.embedding, data.m, profiles)?;
    if data.abstention_features.is_some() {
        relabeled.with_abstentions()
    } else {
        Ok(relabeled)
    }
}

/// Adam over shuffled mini-batches with a plateau schedule on the
/// validation loss of the optimized objective.
fn fit(model: &mut MlpModel, config: &TrainConfig, train: &Dataset, validation: &Dataset) -> Result<Vec<EpochRecord>> {
    let participation = config.loss_mode.uses_participation();
    let mut optimizer = AdamState::new(model);
    let mut schedule = config.schedule();
    let mut rng = rng_for(config.seed, STREAM_SHUFFLE);
    let mut augment_rng = rng_for(config.seed, STREAM_AUGMENT);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = Gradients::zeros_like(model);
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let lr = schedule.current_lr;
        let relabeled = if config.relabel_augmentation {
            Some(relabel_dataset(train, &mut augment_rng)?)
        } else {
            None
        };
        let data = relabeled.as_ref().unwrap_or(train);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let loss = batch_loss_and_grad(model, data, batch, config.loss_mode, &mut grads)?;
            optimizer.step(model, &grads, lr)?;
            total += loss.loss * batch.len() as f64;
        }
        let val = evaluate_dataset(model, validation, participation)?;
        schedule.update(val.rule_loss + val.participation_loss.unwrap_or(0.0));
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss: total / train.len() as f64,
            val_rule_loss: val.rule_loss,
            val_participation_loss: val.participation_loss,
        });
    }
    Ok(records)
}

/// Trains a fresh model; `train_data` replaces the generated training split.
pub fn train_with_data(config: &TrainConfig, train_data: Option<Dataset>) -> Result<(ExperimentReport, MlpModel)> {
    let started = Instant::now();
    config.validate()?;
    let splits = build_splits(config, train_data)?;
    let mut model = MlpModel::for_candidates(config.m, config.seed)?;
    let epochs = fit(&mut model, config, &splits.train, &splits.validation)?;
    let final_test = evaluate_dataset(&model, &splits.test, config.loss_mode.uses_participation())?;
    let report = ExperimentReport {
        kind: RunKind::Train,
        config: config.clone(),
        rng: RNG_NAME.to_string(),
        num_params: model.num_params(),
        epochs,
        initial_test: None,
        final_test,
        rule_loss_increase: None,
        within_guard_band: None,
        checkpoint: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((report, model))
}

pub fn train(config: &TrainConfig) -> Result<(ExperimentReport, MlpModel)> {
    train_with_data(config, None)
}

/// Continues training a rule-trained model with the combined loss.
pub fn retrain_participation(
    model: MlpModel,
    meta: &CheckpointMeta,
    config: &TrainConfig,
) -> Result<(ExperimentReport, MlpModel)> {
    let started = Instant::now();
    config.validate()?;
    if meta.rule != config.rule || meta.embedding != config.embedding || meta.m != config.m {
        return Err(Error::Config(format!(
            "checkpoint is {}/{} with m={}, config wants {}/{} with m={}",
            meta.rule, meta.embedding, meta.m, config.rule, config.embedding, config.m
        )));
    }
    if !config.loss_mode.uses_participation() {
        return Err(Error::Config("retraining needs loss_mode rule-plus-participation".into()));
    }
    if model.input_dim() != config.m * config.m || model.output_dim() != config.m {
        return Err(Error::Config(format!(
            "model layers {:?} do not fit m={}",
            model.layer_dims(),
            config.m
        )));
    }
    let splits = build_splits(config, None)?;
    let mut model = model;
    let initial_test = evaluate_dataset(&model, &splits.test, true)?;
    let epochs = fit(&mut model, config, &splits.train, &splits.validation)?;
    let final_test = evaluate_dataset(&model, &splits.test, true)?;
    let increase = final_test.rule_loss - initial_test.rule_loss;
    let report = ExperimentReport {
        kind: RunKind::Retrain,
        config: config.clone(),
        rng: RNG_NAME.to_string(),
        num_params: model.num_params(),
        epochs,
        initial_test: Some(initial_test),
        final_test,
        rule_loss_increase: Some(increase),
        within_guard_band: Some(increase <= config.guard_band),
        checkpoint: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((report, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::dataset::build_dataset;
    use crate::rules::apply_rule;

    fn small_config(mode: LossMode) -> TrainConfig {
        TrainConfig {
            m: 3,
            n_train: 5,
            train_profiles: 64,
            validation_profiles: 16,
            test_profiles: 16,
            batch_size: 16,
            epochs: 3,
            seed: 5,
            loss_mode: mode,
            ..TrainConfig::new(RuleId::Plurality, EmbeddingKind::RankFrequency)
        }
    }

    #[test]
    fn exact_rule_has_zero_loss() {
        let data = build_dataset(RuleId::Schulze, EmbeddingKind::Tournament, 4, 5, 12, 2).unwrap();
        let exact = |p: &Profile| apply_rule(RuleId::Schulze, p);
        let metrics = evaluate_rule(&exact, &data, false).unwrap();
        assert_eq!(metrics.rule_loss, 0.0);
        assert_eq!(metrics.participation_loss, None);
    }

    #[test]
    fn constant_model_has_zero_participation_loss() {
        let data = build_dataset(RuleId::Plurality, EmbeddingKind::RankFrequency, 3, 5, 20, 2)
            .unwrap()
            .with_abstentions()
            .unwrap();
        let model = MlpModel::zeros(&[9, 4, 3]).unwrap();
        let metrics = evaluate_dataset(&model, &data, true).unwrap();
        assert_eq!(metrics.participation_loss, Some(0.0));
        let all: Vec<usize> = (0..data.len()).collect();
        let loss = batch_loss(&model, &data, &all, LossMode::RulePlusParticipation).unwrap();
        assert_eq!(loss.participation_loss, 0.0);
    }

    #[test]
    fn batched_evaluation_matches_learned_rule() {
        let data = build_dataset(RuleId::Borda, EmbeddingKind::WeightedTournament, 3, 4, 30, 7)
            .unwrap()
            .with_abstentions()
            .unwrap();
        let model = MlpModel::new(&[9, 8, 8, 3], 1).unwrap();
        let fast = evaluate_dataset(&model, &data, true).unwrap();
        let learned = LearnedRule {
            model: &model,
            embedding: EmbeddingKind::WeightedTournament,
        };
        let slow = evaluate_rule(&learned, &data, true).unwrap();
        assert!((fast.rule_loss - slow.rule_loss).abs() < 1e-12);
        assert!((fast.participation_loss.unwrap() - slow.participation_loss.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_reports_every_epoch() {
        let config = small_config(LossMode::RuleOnly);
        let (a, model_a) = train(&config).unwrap();
        let (b, model_b) = train(&config).unwrap();
        assert_eq!(a.epochs.len(), 3);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(model_a, model_b);
        for e in &a.epochs {
            assert!(e.train_loss >= 0.0 && e.val_rule_loss >= 0.0);
            assert!(e.val_participation_loss.is_none());
        }
    }

    #[test]
    fn combined_mode_reports_participation() {
        let (report, _) = train(&small_config(LossMode::RulePlusParticipation)).unwrap();
        assert!(report.epochs.iter().all(|e| e.val_participation_loss.is_some()));
        assert!(report.final_test.participation_loss.is_some());
    }

    #[test]
    fn retraining_checks_checkpoint_metadata() {
        let config = TrainConfig {
            m: 3,
            ..TrainConfig::retraining(RuleId::Plurality, EmbeddingKind::RankFrequency)
        };
        let model = MlpModel::for_candidates(3, 0).unwrap();
        let meta = CheckpointMeta {
            rule: RuleId::Borda,
            embedding: EmbeddingKind::RankFrequency,
            m: 3,
            seed: 0,
            epoch: 0,
        };
        assert!(matches!(
            retrain_participation(model, &meta, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn retraining_a_constant_model_starts_at_zero() {
        let config = TrainConfig {
            m: 3,
            train_profiles: 40,
            validation_profiles: 10,
            test_profiles: 10,
            epochs: 1,
            ..TrainConfig::retraining(RuleId::Plurality, EmbeddingKind::RankFrequency)
        };
        let meta = CheckpointMeta {
            rule: RuleId::Plurality,
            embedding: EmbeddingKind::RankFrequency,
            m: 3,
            seed: 0,
            epoch: 0,
        };
        let model = MlpModel::zeros(&[9, 6, 3]).unwrap();
        let (report, _) = retrain_participation(model, &meta, &config).unwrap();
        assert_eq!(report.initial_test.unwrap().participation_loss, Some(0.0));
        assert_eq!(report.epochs.len(), 1);
        assert!(report.within_guard_band.is_some());
    }
}
