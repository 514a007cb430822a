//! Strict-order ballots and preference profiles.
//!
//! Candidates are `0..m`. A [`Ballot`] stores the candidate at each position
//! (position 0 is the most preferred); [`Ballot::rank_of`] reports the
//! 1-indexed rank used by the scoring formulas.

use std::fmt;
use std::io::{BufRead, Write};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{rng_for, STREAM_TRAIN};

pub type Candidate = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ballot {
    ranking: Vec<Candidate>,
}

impl Ballot {
    /// Builds a ballot, checking that `ranking` is a permutation of `0..len`.
    pub fn new(ranking: Vec<Candidate>) -> Result<Self> {
        let m = ranking.len();
        if m == 0 {
            return Err(Error::InvalidBallot("empty ranking".into()));
        }
        let mut seen = vec![false; m];
        for &c in &ranking {
            if c >= m {
                return Err(Error::InvalidBallot(format!(
                    "candidate {c} out of range for {m} candidates"
                )));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidBallot(format!("candidate {c} repeated")));
            }
        }
        Ok(Ballot { ranking })
    }

    pub(crate) fn from_permutation_unchecked(ranking: Vec<Candidate>) -> Self {
        debug_assert!(Ballot::new(ranking.clone()).is_ok());
        Ballot { ranking }
    }

    pub fn ranking(&self) -> &[Candidate] {
        &self.ranking
    }

    pub fn num_candidates(&self) -> usize {
        self.ranking.len()
    }

    pub fn top(&self) -> Candidate {
        self.ranking[0]
    }

    /// 1-indexed rank of `c` (1 = most preferred).
    pub fn rank_of(&self, c: Candidate) -> Result<usize> {
        if c >= self.ranking.len() {
            return Err(Error::InvalidCandidate {
                candidate: c,
                num_candidates: self.ranking.len(),
            });
        }
        Ok(self.position_of(c) + 1)
    }

    fn position_of(&self, c: Candidate) -> usize {
        self.ranking
            .iter()
            .position(|&x| x == c)
            .expect("ballot is a permutation")
    }

    /// Inverse view: `positions()[c]` is the 0-indexed position of candidate `c`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.ranking.len()];
        for (k, &c) in self.ranking.iter().enumerate() {
            pos[c] = k;
        }
        pos
    }

    /// Renames candidates: candidate `c` becomes `mapping[c]`.
    pub fn relabel(&self, mapping: &[Candidate]) -> Ballot {
        Ballot {
            ranking: self.ranking.iter().map(|&c| mapping[c]).collect(),
        }
    }
}

impl fmt::Display for Ballot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ranking.iter().join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Profile {
    num_candidates: usize,
    ballots: Vec<Ballot>,
}

impl Profile {
    pub fn new(num_candidates: usize, ballots: Vec<Ballot>) -> Result<Self> {
        if num_candidates == 0 {
            return Err(Error::InvalidDimension("a profile needs at least one candidate".into()));
        }
        if ballots.is_empty() {
            return Err(Error::InvalidDimension("a profile needs at least one voter".into()));
        }
        if let Some(b) = ballots.iter().find(|b| b.num_candidates() != num_candidates) {
            return Err(Error::InvalidBallot(format!(
                "ballot {b} has {} entries, expected {num_candidates}",
                b.num_candidates()
            )));
        }
        Ok(Profile {
            num_candidates,
            ballots,
        })
    }

    /// Convenience constructor from raw rankings.
    pub fn from_rankings<I, R>(num_candidates: usize, rankings: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: Into<Vec<Candidate>>,
    {
        let ballots = rankings
            .into_iter()
            .map(|r| Ballot::new(r.into()))
            .collect::<Result<Vec<_>>>()?;
        Profile::new(num_candidates, ballots)
    }

    pub fn num_candidates(&self) -> usize {
        self.num_candidates
    }

    pub fn num_voters(&self) -> usize {
        self.ballots.len()
    }

    pub fn ballots(&self) -> &[Ballot] {
        &self.ballots
    }

    pub fn ballot(&self, voter: usize) -> Result<&Ballot> {
        self.ballots.get(voter).ok_or(Error::InvalidVoter {
            voter,
            num_voters: self.ballots.len(),
        })
    }

    /// The profile with voter `voter` abstaining; surviving ballots keep their order.
    pub fn remove_voter(&self, voter: usize) -> Result<Profile> {
        let n = self.ballots.len();
        if voter >= n {
            return Err(Error::InvalidVoter {
                voter,
                num_voters: n,
            });
        }
        if n == 1 {
            return Err(Error::CannotEmptyProfile);
        }
        let mut ballots = self.ballots.clone();
        ballots.remove(voter);
        Ok(Profile {
            num_candidates: self.num_candidates,
            ballots,
        })
    }

    pub fn insert_voter(&self, voter: usize, ballot: Ballot) -> Result<Profile> {
        let n = self.ballots.len();
        if voter > n {
            return Err(Error::InvalidVoter {
                voter,
                num_voters: n,
            });
        }
        if ballot.num_candidates() != self.num_candidates {
            return Err(Error::DimensionMismatch {
                expected: self.num_candidates,
                got: ballot.num_candidates(),
            });
        }
        let mut ballots = self.ballots.clone();
        ballots.insert(voter, ballot);
        Ok(Profile {
            num_candidates: self.num_candidates,
            ballots,
        })
    }

    /// Row-major `m x m` matrix with entry `[a*m + b] = |{i : a >_i b}|`.
    pub fn pairwise_counts(&self) -> Vec<usize> {
        let m = self.num_candidates;
        let mut counts = vec![0usize; m * m];
        for ballot in &self.ballots {
            let r = ballot.ranking();
            for (k, &a) in r.iter().enumerate() {
                for &b in &r[k + 1..] {
                    counts[a * m + b] += 1;
                }
            }
        }
        counts
    }

    /// First-place counts per candidate.
    pub fn plurality_scores(&self) -> Vec<usize> {
        let mut scores = vec![0usize; self.num_candidates];
        for b in &self.ballots {
            scores[b.top()] += 1;
        }
        scores
    }

    /// The same multiset of ballots, sorted lexicographically.
    pub fn canonical(&self) -> Profile {
        let mut ballots = self.ballots.clone();
        ballots.sort_unstable();
        Profile {
            num_candidates: self.num_candidates,
            ballots,
        }
    }

    pub fn relabel(&self, mapping: &[Candidate]) -> Result<Profile> {
        Ballot::new(mapping.to_vec())?;
        if mapping.len() != self.num_candidates {
            return Err(Error::DimensionMismatch {
                expected: self.num_candidates,
                got: mapping.len(),
            });
        }
        Ok(Profile {
            num_candidates: self.num_candidates,
            ballots: self.ballots.iter().map(|b| b.relabel(mapping)).collect(),
        })
    }

    /// Reorders voters: the new voter `i` is the old voter `order[i]`.
    pub fn permute_voters(&self, order: &[usize]) -> Result<Profile> {
        if order.len() != self.ballots.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ballots.len(),
                got: order.len(),
            });
        }
        Ballot::new(order.to_vec())?;
        Ok(Profile {
            num_candidates: self.num_candidates,
            ballots: order.iter().map(|&i| self.ballots[i].clone()).collect(),
        })
    }

    /// Serializes as one line of the profile file format, e.g. `0,1,2;1,0,2`.
    pub fn to_line(&self) -> String {
        self.ballots.iter().join(";")
    }

    pub fn parse_line(num_candidates: usize, line: &str) -> Result<Profile> {
        let ballots = line
            .trim()
            .split(';')
            .map(|ballot| {
                let ranking = ballot
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Format(format!("bad candidate {c:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ballot::new(ranking)
            })
            .collect::<Result<Vec<_>>>()?;
        Profile::new(num_candidates, ballots)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

pub fn sample_impartial_culture<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<Profile> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!(
            "impartial culture needs m >= 1 and n >= 1 (got m={m}, n={n})"
        )));
    }
    let ballots = (0..n)
        .map(|_| {
            let mut ranking: Vec<Candidate> = (0..m).collect();
            ranking.shuffle(rng);
            Ballot::from_permutation_unchecked(ranking)
        })
        .collect();
    Ok(Profile {
        num_candidates: m,
        ballots,
    })
}

/// `n` independent uniformly random ballots over `m` candidates.
pub fn generate_impartial_culture(m: usize, n: usize, seed: u64) -> Result<Profile> {
    sample_impartial_culture(m, n, &mut rng_for(seed, STREAM_TRAIN))
}

/// All `m!` ballots in lexicographic order.
pub fn all_ballots(m: usize) -> Vec<Ballot> {
    (0..m)
        .permutations(m)
        .map(Ballot::from_permutation_unchecked)
        .collect()
}

/// Iterator over every profile with `m` candidates and `n` voters, in
/// lexicographic order over ballot sequences.
pub struct ProfileEnumerator {
    m: usize,
    ballots: Vec<Ballot>,
    odometer: Vec<usize>,
    done: bool,
}

impl Iterator for ProfileEnumerator {
    type Item = Profile;

    fn next(&mut self) -> Option<Profile> {
        if self.done {
            return None;
        }
        let profile = Profile {
            num_candidates: self.m,
            ballots: self.odometer.iter().map(|&i| self.ballots[i].clone()).collect(),
        };
        // Advance the last voter fastest so the output is lexicographic.
        let mut pos = self.odometer.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.odometer[pos] += 1;
            if self.odometer[pos] < self.ballots.len() {
                break;
            }
            self.odometer[pos] = 0;
        }
        Some(profile)
    }
}

pub fn enumerate_profiles(m: usize, n: usize) -> ProfileEnumerator {
    ProfileEnumerator {
        m,
        ballots: all_ballots(m),
        odometer: vec![0; n],
        done: m == 0 || n == 0,
    }
}

pub const FILE_HEADER_PREFIX: &str = "#pscf-profiles";

pub fn write_profiles<W: Write>(mut out: W, m: usize, profiles: &[Profile]) -> Result<()> {
    writeln!(out, "{FILE_HEADER_PREFIX} m={m}")?;
    for p in profiles {
        if p.num_candidates() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: p.num_candidates(),
            });
        }
        writeln!(out, "{}", p.to_line())?;
    }
    Ok(())
}

/// Reads a profile file; returns the candidate count from the header and the profiles.
pub fn read_profiles<R: BufRead>(input: R) -> Result<(usize, Vec<Profile>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty profile file".into()))??;
    let m = header
        .strip_prefix(FILE_HEADER_PREFIX)
        .and_then(|rest| rest.trim().strip_prefix("m="))
        .and_then(|v| v.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::Format(format!("bad header line {header:?}")))?;
    let mut profiles = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        profiles.push(Profile::parse_line(m, &line)?);
    }
    Ok((m, profiles))
}
