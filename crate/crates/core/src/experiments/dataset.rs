use rayon::prelude::*;

use crate::embeddings::{features, EmbeddingKind};
use crate::error::{Error, Result};
use crate::profiles::{sample_impartial_culture, Profile};
use crate::rules::{apply_rule, RuleId, SIMPLEX_TOLERANCE};
use crate::seed::{rng_for, STREAM_TRAIN};

/// Embedded profiles with exact rule targets, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rule: RuleId,
    pub embedding: EmbeddingKind,
    pub m: usize,
    pub n: usize,
    /// `len() x m*m` network inputs.
    pub features: Vec<f64>,
    /// `len() x m` rule lotteries.
    pub targets: Vec<f64>,
    pub profiles: Vec<Profile>,
    /// `len() x n x m*m`: features of each profile with voter `i` removed.
    pub abstention_features: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds from given profiles; all must have `m` candidates and the same voter count.
    pub fn from_profiles(
        rule: RuleId,
        embedding: EmbeddingKind,
        m: usize,
        profiles: Vec<Profile>,
    ) -> Result<Self> {
        let n = profiles
            .first()
            .map(Profile::num_voters)
            .ok_or_else(|| Error::InvalidDimension("empty dataset".into()))?;
        if let Some(p) = profiles
            .iter()
            .find(|p| p.num_candidates() != m || p.num_voters() != n)
        {
            return Err(Error::InvalidDimension(format!(
                "profile with (m, n) = ({}, {}) in a ({m}, {n}) dataset",
                p.num_candidates(),
                p.num_voters()
            )));
        }
        let rows: Vec<(Vec<f64>, Vec<f64>)> = profiles
            .par_iter()
            .map(|p| {
                let target = apply_rule(rule, p).into_vec();
                (features(embedding, p), target)
            })
            .collect();
        let mut feature_buf = Vec::with_capacity(profiles.len() * m * m);
        let mut targets = Vec::with_capacity(profiles.len() * m);
        for (x, y) in rows {
            let total: f64 = y.iter().sum();
            if y.len() != m || (total - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::Internal(format!("rule target {y:?} is not a lottery")));
            }
            feature_buf.extend(x);
            targets.extend(y);
        }
        Ok(Dataset {
            rule,
            embedding,
            m,
            n,
            features: feature_buf,
            targets,
            profiles,
            abstention_features: None,
        })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.m * self.m
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        let d = self.feature_dim();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.m..(i + 1) * self.m]
    }

    /// Precomputes abstention features; needs at least two voters.
    pub fn with_abstentions(mut self) -> Result<Self> {
        if self.abstention_features.is_some() {
            return Ok(self);
        }
        if self.n < 2 {
            return Err(Error::UndefinedParticipation);
        }
        let emb = self.embedding;
        let per_profile: Vec<Vec<f64>> = self
            .profiles
            .par_iter()
            .map(|p| {
                let mut out = Vec::with_capacity(p.num_voters() * self.m * self.m);
                for i in 0..p.num_voters() {
                    out.extend(features(emb, &p.remove_voter(i)?));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        self.abstention_features = Some(per_profile.concat());
        Ok(self)
    }

    /// Features of profile `i` with each voter removed in turn (`n x m*m`).
    pub fn abstention_rows(&self, i: usize) -> Option<&[f64]> {
        let block = self.n * self.feature_dim();
        self.abstention_features
            .as_ref()
            .map(|a| &a[i * block..(i + 1) * block])
    }
}

/// `count` impartial-culture profiles drawn from `seed` on the given stream.
pub fn build_split(
    rule: RuleId,
    embedding: EmbeddingKind,
    m: usize,
    n: usize,
    count: usize,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidDimension("dataset needs at least one profile".into()));
    }
    let mut rng = rng_for(seed, stream);
    let profiles = (0..count)
        .map(|_| sample_impartial_culture(m, n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_profiles(rule, embedding, m, profiles)
}

/// Training split: the same profiles `gen` writes for this seed.
pub fn build_dataset(
    rule: RuleId,
    embedding: EmbeddingKind,
    m: usize,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    build_split(rule, embedding, m, n, count, seed, STREAM_TRAIN)
}

/// Profiles written by the `gen` command.
pub fn generate_profiles(m: usize, n: usize, count: usize, seed: u64) -> Result<Vec<Profile>> {
    let mut rng = rng_for(seed, STREAM_TRAIN);
    (0..count)
        .map(|_| sample_impartial_culture(m, n, &mut rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::STREAM_VALIDATION;

    #[test]
    fn shape_and_targets() {
        let d = build_dataset(RuleId::Copeland, EmbeddingKind::Tournament, 3, 5, 10, 1).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.features.len(), 10 * 9);
        assert_eq!(d.feature_row(0).len(), 9);
        for i in 0..d.len() {
            assert_eq!(d.target_row(i), apply_rule(RuleId::Copeland, &d.profiles[i]).probabilities());
            assert_eq!(d.feature_row(i), features(EmbeddingKind::Tournament, &d.profiles[i]));
        }
    }

    #[test]
    fn deterministic_and_split_by_stream() {
        let a = build_dataset(RuleId::Borda, EmbeddingKind::RankFrequency, 4, 7, 20, 3).unwrap();
        let b = build_dataset(RuleId::Borda, EmbeddingKind::RankFrequency, 4, 7, 20, 3).unwrap();
        assert_eq!(a, b);
        let v = build_split(RuleId::Borda, EmbeddingKind::RankFrequency, 4, 7, 20, 3, STREAM_VALIDATION)
            .unwrap();
        assert!(a.profiles.iter().all(|p| !v.profiles.contains(p)));
        assert_eq!(a.profiles, generate_profiles(4, 7, 20, 3).unwrap());
    }

    #[test]
    fn abstention_features_match_removed_profiles() {
        let d = build_dataset(RuleId::Plurality, EmbeddingKind::WeightedTournament, 3, 4, 3, 8)
            .unwrap()
            .with_abstentions()
            .unwrap();
        let rows = d.abstention_rows(2).unwrap();
        assert_eq!(rows.len(), 4 * 9);
        let removed = d.profiles[2].remove_voter(1).unwrap();
        assert_eq!(&rows[9..18], features(EmbeddingKind::WeightedTournament, &removed).as_slice());
    }

    #[test]
    fn single_voter_has_no_abstentions() {
        let d = build_dataset(RuleId::Plurality, EmbeddingKind::Tournament, 3, 1, 2, 0).unwrap();
        assert!(matches!(d.with_abstentions(), Err(Error::UndefinedParticipation)));
    }

    #[test]
    fn zero_count_is_rejected() {
        assert!(build_dataset(RuleId::Plurality, EmbeddingKind::Tournament, 3, 3, 0, 0).is_err());
    }
}
