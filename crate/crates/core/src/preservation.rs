//! Preservation of PSCFs under embeddings: pair checks, counterexample
//! search over small profile spaces, and the reference counterexamples.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::embeddings::{embed, EmbeddingKind};
use crate::error::{Error, Result};
use crate::profiles::{all_ballots, sample_impartial_culture, Ballot, Profile};
use crate::rules::{apply_rule, Lottery, RuleId};
use crate::seed::{rng_for, STREAM_SEARCH};

/// Lotteries closer than this in L1 count as equal.
pub const LOTTERY_TOLERANCE: f64 = 1e-9;

fn profile_line<S: Serializer>(p: &Profile, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&p.to_line())
}

/// Two profiles with equal raw embeddings but different lotteries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreservationViolation {
    #[serde(serialize_with = "profile_line")]
    pub profile_a: Profile,
    #[serde(serialize_with = "profile_line")]
    pub profile_b: Profile,
    pub embedding: EmbeddingKind,
    pub rule: RuleId,
    pub lottery_a: Lottery,
    pub lottery_b: Lottery,
}

impl PreservationViolation {
    pub fn num_candidates(&self) -> usize {
        self.profile_a.num_candidates()
    }

    pub fn num_voters(&self) -> usize {
        self.profile_a.num_voters()
    }
}

fn lotteries_differ(a: &Lottery, b: &Lottery) -> bool {
    a.l1_distance(b) > LOTTERY_TOLERANCE
}

pub fn check_pair(
    rule: RuleId,
    emb: EmbeddingKind,
    a: &Profile,
    b: &Profile,
) -> Result<Option<PreservationViolation>> {
    if a.num_candidates() != b.num_candidates() || a.num_voters() != b.num_voters() {
        return Err(Error::InvalidPair(format!(
            "profiles have (m, n) = ({}, {}) and ({}, {})",
            a.num_candidates(),
            a.num_voters(),
            b.num_candidates(),
            b.num_voters()
        )));
    }
    if embed(emb, a).raw_key()? != embed(emb, b).raw_key()? {
        return Ok(None);
    }
    let lottery_a = apply_rule(rule, a);
    let lottery_b = apply_rule(rule, b);
    if !lotteries_differ(&lottery_a, &lottery_b) {
        return Ok(None);
    }
    Ok(Some(PreservationViolation {
        profile_a: a.clone(),
        profile_b: b.clone(),
        embedding: emb,
        rule,
        lottery_a,
        lottery_b,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub rule: RuleId,
    pub embedding: EmbeddingKind,
    pub m: usize,
    pub n: usize,
    /// True when every profile multiset of this size was examined.
    pub exhaustive: bool,
    pub profiles_examined: u64,
    pub violation: Option<PreservationViolation>,
}

/// Number of ballot multisets of size `n` over `m!` ballots, saturating.
pub fn multiset_count(m: usize, n: usize) -> u64 {
    let ballots = (1..=m as u64).try_fold(1u64, |acc, k| acc.checked_mul(k));
    let Some(ballots) = ballots else {
        return u64::MAX;
    };
    // C(ballots + n - 1, n), built incrementally so each step stays integral.
    let mut count: u128 = 1;
    for k in 1..=n as u128 {
        count = count * (ballots as u128 + k - 1) / k;
        if count > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    count as u64
}

struct Representative {
    profile: Profile,
    lottery: Lottery,
}

#[derive(Default)]
struct Groups {
    table: HashMap<Vec<u32>, Representative>,
    /// Keys in first-seen order so merging is deterministic.
    order: Vec<Vec<u32>>,
    violation: Option<(Profile, Lottery, Profile, Lottery)>,
    examined: u64,
}

impl Groups {
    fn insert(&mut self, emb: EmbeddingKind, rule: RuleId, profile: Profile) -> Result<()> {
        self.examined += 1;
        let key = embed(emb, &profile).raw_key()?;
        let lottery = apply_rule(rule, &profile);
        self.offer(key, profile, lottery);
        Ok(())
    }

    fn offer(&mut self, key: Vec<u32>, profile: Profile, lottery: Lottery) {
        match self.table.get(&key) {
            Some(rep) => {
                if self.violation.is_none()
                    && rep.profile != profile
                    && lotteries_differ(&rep.lottery, &lottery)
                {
                    self.violation =
                        Some((rep.profile.clone(), rep.lottery.clone(), profile, lottery));
                }
            }
            None => {
                self.order.push(key.clone());
                self.table.insert(key, Representative { profile, lottery });
            }
        }
    }

    fn merge(&mut self, mut other: Groups) {
        self.examined += other.examined;
        if self.violation.is_none() {
            self.violation = other.violation.take();
        }
        for key in other.order {
            let rep = other.table.remove(&key).expect("key recorded in order");
            self.offer(key, rep.profile, rep.lottery);
        }
    }

    fn into_violation(self, rule: RuleId, emb: EmbeddingKind) -> Option<PreservationViolation> {
        self.violation
            .map(|(profile_a, lottery_a, profile_b, lottery_b)| PreservationViolation {
                profile_a,
                profile_b,
                embedding: emb,
                rule,
                lottery_a,
                lottery_b,
            })
    }
}

/// Extends `buf` to every non-decreasing index sequence of length `len`
/// whose new entries lie in `start..limit`.
fn for_each_multiset<F>(buf: &mut Vec<usize>, len: usize, start: usize, limit: usize, f: &mut F) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    if buf.len() == len {
        return f(buf);
    }
    for i in start..limit {
        buf.push(i);
        for_each_multiset(buf, len, i, limit, f)?;
        buf.pop();
    }
    Ok(())
}

fn exhaustive_groups(rule: RuleId, emb: EmbeddingKind, m: usize, n: usize) -> Result<Groups> {
    let ballots = all_ballots(m);
    let partitions = (0..ballots.len())
        .into_par_iter()
        .map(|first| {
            let mut groups = Groups::default();
            let mut buf = vec![first];
            for_each_multiset(&mut buf, n, first, ballots.len(), &mut |idx| {
                let chosen: Vec<Ballot> = idx.iter().map(|&i| ballots[i].clone()).collect();
                groups.insert(emb, rule, Profile::new(m, chosen)?)
            })?;
            Ok(groups)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut merged = Groups::default();
    for part in partitions {
        merged.merge(part);
    }
    Ok(merged)
}

/// Searches size `(m, n)` for a violation. When the number of profile
/// multisets fits in `budget` the whole space is grouped by raw embedding;
/// otherwise `budget` impartial-culture profiles drawn from `seed` are.
pub fn search_counterexample_seeded(
    rule: RuleId,
    emb: EmbeddingKind,
    m: usize,
    n: usize,
    budget: u64,
    seed: u64,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::InvalidDimension("search budget must be positive".into()));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!("cannot search (m, n) = ({m}, {n})")));
    }
    let exhaustive = multiset_count(m, n) <= budget;
    let groups = if exhaustive {
        exhaustive_groups(rule, emb, m, n)?
    } else {
        let mut rng = rng_for(seed, STREAM_SEARCH);
        let mut groups = Groups::default();
        for _ in 0..budget {
            groups.insert(emb, rule, sample_impartial_culture(m, n, &mut rng)?.canonical())?;
            if groups.violation.is_some() {
                break;
            }
        }
        groups
    };
    Ok(SearchOutcome {
        rule,
        embedding: emb,
        m,
        n,
        exhaustive,
        profiles_examined: groups.examined,
        violation: groups.into_violation(rule, emb),
    })
}

pub fn search_counterexample(
    rule: RuleId,
    emb: EmbeddingKind,
    m: usize,
    n: usize,
    budget: u64,
) -> Result<SearchOutcome> {
    search_counterexample_seeded(rule, emb, m, n, budget, 0)
}

/// Known preservation status of each rule and embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMark {
    Preserved,
    NotPreserved,
    Open,
}

pub fn table_mark(rule: RuleId, emb: EmbeddingKind) -> TableMark {
    use EmbeddingKind::*;
    use RuleId::*;
    match (rule, emb) {
        (Plurality | Borda, RankFrequency) => TableMark::Preserved,
        (Copeland, WeightedTournament | Tournament) => TableMark::Preserved,
        (Schulze | SimpsonKramer, WeightedTournament) => TableMark::Preserved,
        (Borda | Irv | Blacks, WeightedTournament) => TableMark::Open,
        _ => TableMark::NotPreserved,
    }
}

/// Sizes tried when a reference pair turns out to be invalid.
pub const REPLACEMENT_SIZES: [(usize, usize); 9] =
    [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3), (4, 1), (4, 2), (4, 3)];

/// Smallest violation over [`REPLACEMENT_SIZES`], searched exhaustively.
pub fn find_replacement(rule: RuleId, emb: EmbeddingKind) -> Result<Option<PreservationViolation>> {
    for &(m, n) in &REPLACEMENT_SIZES {
        let outcome = search_counterexample(rule, emb, m, n, u64::MAX)?;
        if outcome.violation.is_some() {
            return Ok(outcome.violation);
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferencePair {
    pub label: String,
    pub rule: RuleId,
    pub embedding: EmbeddingKind,
    #[serde(serialize_with = "profile_line")]
    pub profile_a: Profile,
    #[serde(serialize_with = "profile_line")]
    pub profile_b: Profile,
}

fn pair(rule: RuleId, emb: EmbeddingKind, m: usize, a: [&str; 3], b: [&str; 3]) -> ReferencePair {
    let parse = |rows: [&str; 3]| {
        let rankings = rows.map(|r| r.bytes().map(|c| (c - b'a') as usize).collect::<Vec<_>>());
        Profile::from_rankings(m, rankings).expect("reference profile")
    };
    ReferencePair {
        label: format!("{}/{}", rule.name(), emb.label()),
        rule,
        embedding: emb,
        profile_a: parse(a),
        profile_b: parse(b),
    }
}

/// Built-in counterexample pairs, one per non-preservation claim.
pub fn reference_pairs() -> Vec<ReferencePair> {
    use EmbeddingKind::{RankFrequency as RF, Tournament as T, WeightedTournament as WT};
    use RuleId::*;
    let shared_a = ["abcd", "bcda", "dabc"];
    let shared_b = ["abcd", "badc", "dcba"];
    let sk_a = ["abcd", "bcad", "dcab"];
    let sk_b = ["abcd", "bcad", "cabd"];
    vec![
        pair(Plurality, WT, 3, ["abc", "bac", "cab"], ["abc", "abc", "cba"]),
        pair(Borda, T, 3, ["abc", "bac", "bca"], ["abc", "abc", "abc"]),
        pair(Copeland, RF, 4, shared_a, shared_b),
        pair(Schulze, RF, 4, shared_a, shared_b),
        pair(Schulze, T, 4, shared_a, shared_a),
        pair(SimpsonKramer, RF, 4, shared_a, shared_b),
        pair(SimpsonKramer, T, 4, sk_a, sk_b),
        pair(Irv, RF, 4, shared_a, shared_b),
        pair(Irv, T, 4, ["abcd", "bcda", "dacb"], shared_a),
        pair(Blacks, RF, 4, shared_a, shared_b),
        pair(Blacks, T, 4, sk_a, sk_b),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairVerdict {
    pub pair: ReferencePair,
    pub embeddings_match: bool,
    pub lotteries_differ: bool,
    pub valid: bool,
    pub replacement_searched: bool,
    pub replacement: Option<PreservationViolation>,
}

pub fn verify_pair(pair: &ReferencePair) -> Result<PairVerdict> {
    let (a, b) = (&pair.profile_a, &pair.profile_b);
    let embeddings_match = embed(pair.embedding, a).raw_key()? == embed(pair.embedding, b).raw_key()?;
    let lotteries_differ = lotteries_differ(&apply_rule(pair.rule, a), &apply_rule(pair.rule, b));
    let valid = check_pair(pair.rule, pair.embedding, a, b)?.is_some();
    let replacement = if valid {
        None
    } else {
        find_replacement(pair.rule, pair.embedding)?
    };
    Ok(PairVerdict {
        pair: pair.clone(),
        embeddings_match,
        lotteries_differ,
        valid,
        replacement_searched: !valid,
        replacement,
    })
}

pub fn verify_reference_pairs() -> Result<Vec<PairVerdict>> {
    reference_pairs().iter().map(verify_pair).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(m: usize, rows: &[&str]) -> Profile {
        let rankings: Vec<Vec<usize>> = rows
            .iter()
            .map(|r| r.bytes().map(|c| (c - b'a') as usize).collect())
            .collect();
        Profile::from_rankings(m, rankings).unwrap()
    }

    #[test]
    fn plurality_weighted_tournament_pair() {
        let a = profile(3, &["abc", "bac", "cab"]);
        let b = profile(3, &["abc", "abc", "cba"]);
        let v = check_pair(RuleId::Plurality, EmbeddingKind::WeightedTournament, &a, &b)
            .unwrap()
            .expect("violation");
        let third = 1.0 / 3.0;
        assert!(v.lottery_a.l1_distance(&Lottery::new(vec![third; 3]).unwrap()) < 1e-12);
        assert_eq!(v.lottery_b, Lottery::point(0, 3));
    }

    #[test]
    fn identical_profiles_never_violate() {
        let a = profile(4, &["abcd", "bcda", "dabc"]);
        for rule in RuleId::ALL {
            for emb in EmbeddingKind::ALL {
                assert!(check_pair(rule, emb, &a, &a).unwrap().is_none());
            }
        }
    }

    #[test]
    fn copeland_rank_frequency_pair() {
        let a = profile(4, &["abcd", "bcda", "dabc"]);
        let b = profile(4, &["abcd", "badc", "dcba"]);
        assert!(check_pair(RuleId::Copeland, EmbeddingKind::RankFrequency, &a, &b)
            .unwrap()
            .is_some());
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let a = profile(3, &["abc", "bca"]);
        let b = profile(3, &["abc"]);
        let c = profile(2, &["ab", "ba"]);
        for other in [&b, &c] {
            assert!(matches!(
                check_pair(RuleId::Borda, EmbeddingKind::Tournament, &a, other),
                Err(Error::InvalidPair(_))
            ));
        }
    }

    #[test]
    fn multiset_counts() {
        assert_eq!(multiset_count(3, 3), 56);
        assert_eq!(multiset_count(4, 3), 2600);
        assert_eq!(multiset_count(2, 1), 2);
        assert_eq!(multiset_count(30, 3), u64::MAX);
    }

    #[test]
    fn exhaustive_search_examines_every_multiset() {
        let out = search_counterexample(RuleId::Plurality, EmbeddingKind::RankFrequency, 3, 3, 1000).unwrap();
        assert!(out.exhaustive);
        assert_eq!(out.profiles_examined, 56);
        assert!(out.violation.is_none());
    }

    #[test]
    fn table_examples() {
        let none = |rule, emb, n| {
            search_counterexample(rule, emb, 3, n, u64::MAX).unwrap().violation.is_none()
        };
        assert!(none(RuleId::Copeland, EmbeddingKind::Tournament, 3));
        for n in 1..=4 {
            assert!(none(RuleId::Borda, EmbeddingKind::WeightedTournament, n));
        }
        assert!(!none(RuleId::Plurality, EmbeddingKind::WeightedTournament, 3));
    }

    #[test]
    fn random_mode_is_deterministic() {
        let run = || {
            search_counterexample_seeded(RuleId::Irv, EmbeddingKind::Tournament, 5, 5, 300, 9).unwrap()
        };
        let a = run();
        assert!(!a.exhaustive);
        assert_eq!(a, run());
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(search_counterexample(RuleId::Borda, EmbeddingKind::Tournament, 3, 3, 0).is_err());
    }

    #[test]
    fn found_violations_satisfy_their_invariants() {
        for rule in RuleId::ALL {
            for emb in EmbeddingKind::ALL {
                let out = search_counterexample(rule, emb, 3, 3, u64::MAX).unwrap();
                if let Some(v) = out.violation {
                    assert_eq!(
                        embed(emb, &v.profile_a).raw_key().unwrap(),
                        embed(emb, &v.profile_b).raw_key().unwrap()
                    );
                    assert!(v.lottery_a.l1_distance(&v.lottery_b) > LOTTERY_TOLERANCE);
                    assert!(check_pair(rule, emb, &v.profile_a, &v.profile_b).unwrap().is_some());
                }
            }
        }
    }

    #[test]
    fn weighted_tournament_violations_are_tournament_violations() {
        for rule in RuleId::ALL {
            for n in 1..=3 {
                let out = search_counterexample(rule, EmbeddingKind::WeightedTournament, 3, n, u64::MAX).unwrap();
                if let Some(v) = out.violation {
                    assert!(check_pair(rule, EmbeddingKind::Tournament, &v.profile_a, &v.profile_b)
                        .unwrap()
                        .is_some());
                }
            }
        }
    }

    #[test]
    fn reference_verdicts() {
        let verdicts = verify_reference_pairs().unwrap();
        assert_eq!(verdicts.len(), 11);
        for v in &verdicts {
            assert_eq!(v.valid, v.embeddings_match && v.lotteries_differ, "{}", v.pair.label);
            if v.valid {
                assert!(v.replacement.is_none());
            } else {
                assert!(v.replacement_searched);
            }
        }
        let by_label = |label: &str| verdicts.iter().find(|v| v.pair.label == label).unwrap();
        for label in [
            "plurality/T_WT",
            "copeland/T_RF",
            "schulze/T_RF",
            "simpson-kramer/T_RF",
            "irv/T_RF",
        ] {
            assert!(by_label(label).valid, "{label}");
        }
        // Both profiles elect b: a Condorcet winner in one, the Borda winner in the other.
        let blacks = by_label("blacks/T_RF");
        assert!(blacks.embeddings_match && !blacks.lotteries_differ);
        assert!(blacks.replacement.is_some());
        let borda = by_label("borda/T_T");
        assert!(!borda.embeddings_match);
        assert!(borda.replacement.is_some());
        let schulze = by_label("schulze/T_T");
        assert!(!schulze.lotteries_differ);
        assert!(schulze.replacement.is_some());
    }

    proptest! {
        #[test]
        fn check_pair_is_symmetric(
            seed_a in 0u64..500, seed_b in 0u64..500,
            rule_idx in 0usize..7, emb_idx in 0usize..3,
        ) {
            let a = crate::profiles::generate_impartial_culture(3, 3, seed_a).unwrap();
            let b = crate::profiles::generate_impartial_culture(3, 3, seed_b).unwrap();
            let (rule, emb) = (RuleId::ALL[rule_idx], EmbeddingKind::ALL[emb_idx]);
            let ab = check_pair(rule, emb, &a, &b).unwrap();
            let ba = check_pair(rule, emb, &b, &a).unwrap();
            prop_assert_eq!(ab.is_some(), ba.is_some());
        }
    }
}
