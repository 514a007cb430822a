//! Fixed-size `m x m` profile embeddings.
//!
//! All three embeddings are anonymous: they depend only on the multiset of
//! ballots, never on voter identity. Raw matrices hold integer counts
//! (tournament entries are 0, 1/2 or 1); [`normalize`] divides counts by the
//! voter count so networks see values in `[0, 1]` independent of `n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::Profile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmbeddingKind {
    #[serde(rename = "T_T", alias = "tournament", alias = "T")]
    Tournament,
    #[serde(rename = "T_WT", alias = "weighted-tournament", alias = "WT")]
    WeightedTournament,
    #[serde(rename = "T_RF", alias = "rank-frequency", alias = "RF")]
    RankFrequency,
}

impl EmbeddingKind {
    /// Column order of the summary tables.
    pub const ALL: [EmbeddingKind; 3] = [
        EmbeddingKind::RankFrequency,
        EmbeddingKind::WeightedTournament,
        EmbeddingKind::Tournament,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EmbeddingKind::Tournament => "T_T",
            EmbeddingKind::WeightedTournament => "T_WT",
            EmbeddingKind::RankFrequency => "T_RF",
        }
    }

    pub fn index(self) -> usize {
        match self {
            EmbeddingKind::RankFrequency => 0,
            EmbeddingKind::WeightedTournament => 1,
            EmbeddingKind::Tournament => 2,
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "t-t" | "t" | "tournament" => Ok(EmbeddingKind::Tournament),
            "t-wt" | "wt" | "weighted-tournament" => Ok(EmbeddingKind::WeightedTournament),
            "t-rf" | "rf" | "rank-frequency" => Ok(EmbeddingKind::RankFrequency),
            _ => Err(Error::Config(format!("unknown embedding {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    kind: EmbeddingKind,
    m: usize,
    entries: Vec<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn num_candidates(&self) -> usize {
        self.m
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.m + col]
    }

    /// Exact integer key of a raw embedding (tournament entries doubled).
    pub fn raw_key(&self) -> Result<Vec<u32>> {
        if self.normalized {
            return Err(Error::AlreadyNormalized);
        }
        let scale = match self.kind {
            EmbeddingKind::Tournament => 2.0,
            _ => 1.0,
        };
        Ok(self.entries.iter().map(|&v| (v * scale) as u32).collect())
    }

    /// Inverse of [`to_feature_vector`].
    pub fn from_feature_vector(kind: EmbeddingKind, features: &[f64]) -> Result<Self> {
        let m = (features.len() as f64).sqrt().round() as usize;
        if m == 0 || m * m != features.len() {
            return Err(Error::InvalidDimension(format!(
                "feature vector of length {} is not a square matrix",
                features.len()
            )));
        }
        Ok(EmbeddingMatrix {
            kind,
            m,
            entries: features.to_vec(),
            normalized: true,
        })
    }
}

pub fn tournament(p: &Profile) -> EmbeddingMatrix {
    let m = p.num_candidates();
    let n = p.num_voters();
    let counts = p.pairwise_counts();
    let mut entries = vec![0.5; m * m];
    for j in 0..m {
        for k in 0..m {
            if j != k {
                let support = 2 * counts[j * m + k];
                entries[j * m + k] = match support.cmp(&n) {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Less => 0.0,
                    std::cmp::Ordering::Equal => 0.5,
                };
            }
        }
    }
    EmbeddingMatrix {
        kind: EmbeddingKind::Tournament,
        m,
        entries,
        normalized: false,
    }
}

pub fn weighted_tournament(p: &Profile) -> EmbeddingMatrix {
    EmbeddingMatrix {
        kind: EmbeddingKind::WeightedTournament,
        m: p.num_candidates(),
        entries: p.pairwise_counts().into_iter().map(|c| c as f64).collect(),
        normalized: false,
    }
}

pub fn rank_frequency(p: &Profile) -> EmbeddingMatrix {
    let m = p.num_candidates();
    let mut entries = vec![0.0; m * m];
    for ballot in p.ballots() {
        for (position, &c) in ballot.ranking().iter().enumerate() {
            entries[c * m + position] += 1.0;
        }
    }
    EmbeddingMatrix {
        kind: EmbeddingKind::RankFrequency,
        m,
        entries,
        normalized: false,
    }
}

pub fn embed(kind: EmbeddingKind, p: &Profile) -> EmbeddingMatrix {
    match kind {
        EmbeddingKind::Tournament => tournament(p),
        EmbeddingKind::WeightedTournament => weighted_tournament(p),
        EmbeddingKind::RankFrequency => rank_frequency(p),
    }
}

/// Divides count embeddings by the voter count `n`; tournaments pass through.
pub fn normalize(e: &EmbeddingMatrix, n: usize) -> Result<EmbeddingMatrix> {
    if e.normalized {
        return Err(Error::AlreadyNormalized);
    }
    if n == 0 {
        return Err(Error::InvalidDimension("cannot normalize by zero voters".into()));
    }
    let entries = match e.kind {
        EmbeddingKind::Tournament => e.entries.clone(),
        EmbeddingKind::WeightedTournament | EmbeddingKind::RankFrequency => {
            let n = n as f64;
            e.entries.iter().map(|v| v / n).collect()
        }
    };
    Ok(EmbeddingMatrix {
        kind: e.kind,
        m: e.m,
        entries,
        normalized: true,
    })
}

/// Row-major flattening of a network-ready embedding.
pub fn to_feature_vector(e: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if !e.normalized && e.kind != EmbeddingKind::Tournament {
        return Err(Error::NotNormalized);
    }
    Ok(e.entries.clone())
}

/// Embeds, normalizes by the profile's own voter count, and flattens.
pub fn features(kind: EmbeddingKind, p: &Profile) -> Vec<f64> {
    let raw = embed(kind, p);
    let normalized = normalize(&raw, p.num_voters()).expect("fresh embedding is raw");
    normalized.entries
}
