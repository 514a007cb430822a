//! Probabilistic social choice functions.
//!
//! Every rule computes a winner set with exact integer arithmetic and returns
//! the uniform lottery over it. Only IRV breaks ties, and only inside its
//! elimination rounds (the highest-index candidate among those tied for last
//! is eliminated).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{Candidate, Profile};

/// Tolerance on the simplex constraint.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lottery {
    probabilities: Vec<f64>,
}

impl Lottery {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidDimension("empty lottery".into()));
        }
        if probabilities.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::InvalidDimension(format!(
                "lottery has a negative or NaN entry: {probabilities:?}"
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidDimension(format!("lottery sums to {total}")));
        }
        Ok(Lottery { probabilities })
    }

    /// Uniform distribution over `winners`, zero elsewhere.
    pub fn uniform(winners: &[Candidate], m: usize) -> Result<Self> {
        if winners.is_empty() {
            return Err(Error::Internal("empty winner set".into()));
        }
        if let Some(&c) = winners.iter().find(|&&c| c >= m) {
            return Err(Error::InvalidCandidate {
                candidate: c,
                num_candidates: m,
            });
        }
        let mut probabilities = vec![0.0; m];
        let share = 1.0 / winners.len() as f64;
        for &w in winners {
            probabilities[w] = share;
        }
        Ok(Lottery { probabilities })
    }

    pub fn point(c: Candidate, m: usize) -> Self {
        Lottery::uniform(&[c], m).expect("candidate in range")
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn prob(&self, c: Candidate) -> f64 {
        self.probabilities[c]
    }

    pub fn l1_distance(&self, other: &Lottery) -> f64 {
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probabilities
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleId {
    Plurality,
    Borda,
    Copeland,
    Schulze,
    SimpsonKramer,
    #[serde(rename = "irv")]
    Irv,
    Blacks,
}

impl RuleId {
    /// Row order of the summary tables.
    pub const ALL: [RuleId; 7] = [
        RuleId::Plurality,
        RuleId::Borda,
        RuleId::Copeland,
        RuleId::Schulze,
        RuleId::SimpsonKramer,
        RuleId::Irv,
        RuleId::Blacks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::Plurality => "plurality",
            RuleId::Borda => "borda",
            RuleId::Copeland => "copeland",
            RuleId::Schulze => "schulze",
            RuleId::SimpsonKramer => "simpson-kramer",
            RuleId::Irv => "irv",
            RuleId::Blacks => "blacks",
        }
    }

    pub fn index(self) -> usize {
        RuleId::ALL.iter().position(|&r| r == self).expect("listed")
    }

    pub fn is_condorcet_consistent(self) -> bool {
        matches!(
            self,
            RuleId::Copeland | RuleId::Schulze | RuleId::SimpsonKramer | RuleId::Blacks
        )
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', ' '], "-");
        let rule = match key.as_str() {
            "plurality" => RuleId::Plurality,
            "borda" => RuleId::Borda,
            "copeland" => RuleId::Copeland,
            "schulze" => RuleId::Schulze,
            "simpson-kramer" | "simpsonkramer" | "maximin" => RuleId::SimpsonKramer,
            "irv" | "instant-runoff" => RuleId::Irv,
            "blacks" | "black" | "black's" => RuleId::Blacks,
            _ => return Err(Error::Config(format!("unknown rule {s:?}"))),
        };
        Ok(rule)
    }
}

/// Anything that maps a profile to a lottery.
pub trait SocialChoice {
    fn lottery(&self, profile: &Profile) -> Lottery;
}

impl SocialChoice for RuleId {
    fn lottery(&self, profile: &Profile) -> Lottery {
        apply_rule(*self, profile)
    }
}

impl<F> SocialChoice for F
where
    F: Fn(&Profile) -> Lottery,
{
    fn lottery(&self, profile: &Profile) -> Lottery {
        self(profile)
    }
}

fn argmax_set<T: Ord + Copy>(scores: &[T]) -> Vec<Candidate> {
    let best = *scores.iter().max().expect("at least one candidate");
    (0..scores.len()).filter(|&c| scores[c] == best).collect()
}

fn lottery_over(winners: &[Candidate], m: usize) -> Lottery {
    Lottery::uniform(winners, m).expect("rules always produce a non-empty winner set")
}

pub fn plurality(p: &Profile) -> Lottery {
    lottery_over(&argmax_set(&p.plurality_scores()), p.num_candidates())
}

pub fn borda_scores(p: &Profile) -> Vec<usize> {
    let m = p.num_candidates();
    let mut scores = vec![0usize; m];
    for ballot in p.ballots() {
        for (position, &c) in ballot.ranking().iter().enumerate() {
            scores[c] += m - 1 - position;
        }
    }
    scores
}

pub fn borda(p: &Profile) -> Lottery {
    lottery_over(&argmax_set(&borda_scores(p)), p.num_candidates())
}

/// Copeland scores doubled so ties (half a point) stay integral.
pub fn copeland_scores_doubled(p: &Profile) -> Vec<usize> {
    let m = p.num_candidates();
    let n = p.num_voters();
    let counts = p.pairwise_counts();
    (0..m)
        .map(|a| {
            (0..m)
                .filter(|&b| b != a)
                .map(|b| match (2 * counts[a * m + b]).cmp(&n) {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                })
                .sum()
        })
        .collect()
}

pub fn copeland(p: &Profile) -> Lottery {
    lottery_over(&argmax_set(&copeland_scores_doubled(p)), p.num_candidates())
}

/// Edge weights of the majority graph: `d(a,b)` when a strict majority
/// prefers `a` to `b`, otherwise 0 (no edge).
pub fn majority_graph(p: &Profile) -> Vec<usize> {
    let m = p.num_candidates();
    let n = p.num_voters();
    let mut graph = p.pairwise_counts();
    for w in graph.iter_mut() {
        if 2 * *w <= n {
            *w = 0;
        }
    }
    for a in 0..m {
        graph[a * m + a] = 0;
    }
    graph
}

pub fn simpson_kramer(p: &Profile) -> Lottery {
    let m = p.num_candidates();
    let graph = majority_graph(p);
    let worst_defeat: Vec<usize> = (0..m)
        .map(|c| (0..m).map(|a| graph[a * m + c]).max().unwrap_or(0))
        .collect();
    let best = *worst_defeat.iter().min().expect("at least one candidate");
    let winners: Vec<Candidate> = (0..m).filter(|&c| worst_defeat[c] == best).collect();
    lottery_over(&winners, m)
}

/// Widest-path strengths over the majority graph; 0 where no path exists.
pub fn schulze_strengths(p: &Profile) -> Vec<usize> {
    let m = p.num_candidates();
    let mut strength = majority_graph(p);
    for k in 0..m {
        for i in 0..m {
            if i == k {
                continue;
            }
            let via = strength[i * m + k];
            if via == 0 {
                continue;
            }
            for j in 0..m {
                if j == i || j == k {
                    continue;
                }
                let candidate = via.min(strength[k * m + j]);
                if candidate > strength[i * m + j] {
                    strength[i * m + j] = candidate;
                }
            }
        }
    }
    strength
}

pub fn schulze(p: &Profile) -> Lottery {
    let m = p.num_candidates();
    let strength = schulze_strengths(p);
    let winners: Vec<Candidate> = (0..m)
        .filter(|&a| (0..m).all(|b| strength[a * m + b] >= strength[b * m + a]))
        .collect();
    assert!(!winners.is_empty(), "Schulze winner set is never empty");
    lottery_over(&winners, m)
}

pub fn irv(p: &Profile) -> Lottery {
    let m = p.num_candidates();
    let mut eliminated = vec![false; m];
    for _round in 1..m {
        let mut scores = vec![0usize; m];
        for ballot in p.ballots() {
            let top = ballot
                .ranking()
                .iter()
                .copied()
                .find(|&c| !eliminated[c])
                .expect("at least two candidates remain");
            scores[top] += 1;
        }
        // Ties for last place eliminate the lexicographically last candidate.
        let mut loser = None;
        for c in (0..m).filter(|&c| !eliminated[c]) {
            if loser.is_none_or(|l: Candidate| scores[c] <= scores[l]) {
                loser = Some(c);
            }
        }
        eliminated[loser.expect("a candidate remains")] = true;
    }
    let survivor = (0..m).find(|&c| !eliminated[c]).expect("one survivor");
    Lottery::point(survivor, m)
}

pub fn condorcet_winner(p: &Profile) -> Option<Candidate> {
    let m = p.num_candidates();
    let n = p.num_voters();
    let counts = p.pairwise_counts();
    (0..m).find(|&a| (0..m).all(|b| b == a || 2 * counts[a * m + b] > n))
}

pub fn blacks(p: &Profile) -> Lottery {
    match condorcet_winner(p) {
        Some(w) => Lottery::point(w, p.num_candidates()),
        None => borda(p),
    }
}

pub fn apply_rule(rule: RuleId, p: &Profile) -> Lottery {
    match rule {
        RuleId::Plurality => plurality(p),
        RuleId::Borda => borda(p),
        RuleId::Copeland => copeland(p),
        RuleId::Schulze => schulze(p),
        RuleId::SimpsonKramer => simpson_kramer(p),
        RuleId::Irv => irv(p),
        RuleId::Blacks => blacks(p),
    }
}
