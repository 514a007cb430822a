//! Rule loss, stochastic-dominance loss and participation loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{Ballot, Candidate, Profile};
use crate::rules::{Lottery, SocialChoice};

/// Slack allowed on prefix-sum comparisons.
pub const DOMINANCE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rule_loss: f64,
    pub participation_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_component: Option<LossBreakdown>,
}

impl LossValue {
    pub fn scalar(value: f64) -> Self {
        LossValue {
            value,
            per_component: None,
        }
    }

    pub fn combined(rule_loss: f64, participation_loss: f64) -> Self {
        LossValue {
            value: rule_loss + participation_loss,
            per_component: Some(LossBreakdown {
                rule_loss,
                participation_loss,
            }),
        }
    }
}

pub fn l1_loss(p: &Lottery, q: &Lottery) -> Result<LossValue> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(LossValue::scalar(p.l1_distance(q)))
}

/// Subgradient of `sum |output - target|` with respect to `output`, written
/// into `grad` (0 where the two agree exactly).
pub fn l1_gradient(output: &[f64], target: &[f64], grad: &mut [f64]) {
    for ((g, &y), &t) in grad.iter_mut().zip(output).zip(target) {
        *g = if y > t {
            1.0
        } else if y < t {
            -1.0
        } else {
            0.0
        };
    }
}

/// Largest prefix shortfall of `p` against `q` along `sigma`, and the
/// 1-indexed prefix length where it occurs (first on ties). Returns `(0, 0)`
/// when `p` dominates `q` within [`DOMINANCE_TOLERANCE`].
pub fn sd_gap(p: &[f64], sigma: &[Candidate], q: &[f64]) -> (f64, usize) {
    assert_eq!(p.len(), q.len(), "lotteries over different candidate sets");
    assert_eq!(p.len(), sigma.len(), "ordering over a different candidate set");
    let mut p_prefix = 0.0;
    let mut q_prefix = 0.0;
    let mut worst = 0.0;
    let mut at = 0;
    for (k, &c) in sigma.iter().enumerate() {
        p_prefix += p[c];
        q_prefix += q[c];
        let gap = q_prefix - p_prefix;
        if gap > worst {
            worst = gap;
            at = k + 1;
        }
    }
    if worst > DOMINANCE_TOLERANCE {
        (worst, at)
    } else {
        (0.0, 0)
    }
}

/// Whether `p` stochastically dominates `q` with respect to the ordering `sigma`.
pub fn stochastically_dominates(p: &Lottery, q: &Lottery, sigma: &Ballot) -> bool {
    sd_gap(p.probabilities(), sigma.ranking(), q.probabilities()).0 == 0.0
}

/// `L(p | sigma, q)`: zero if `p` dominates `q`, else the largest prefix gap.
pub fn sd_loss(p: &Lottery, sigma: &Ballot, q: &Lottery) -> LossValue {
    LossValue::scalar(sd_gap(p.probabilities(), sigma.ranking(), q.probabilities()).0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticipationDetail {
    pub loss: f64,
    /// Voter attaining the maximum (lowest index on ties).
    pub voter: usize,
    /// Prefix length of that voter's largest gap; 0 when the loss is 0.
    pub prefix: usize,
    pub truthful: Lottery,
    pub abstentions: Vec<Lottery>,
}

/// `max_i L(P^i | x_i, Q)` where `Q = f(x)` and `P^i = f(x without voter i)`.
pub fn participation_detail<F>(f: &F, x: &Profile) -> Result<ParticipationDetail>
where
    F: SocialChoice + ?Sized,
{
    if x.num_voters() < 2 {
        return Err(Error::UndefinedParticipation);
    }
    let truthful = f.lottery(x);
    let abstentions = (0..x.num_voters())
        .map(|i| Ok(f.lottery(&x.remove_voter(i)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut detail = ParticipationDetail {
        loss: 0.0,
        voter: 0,
        prefix: 0,
        truthful,
        abstentions,
    };
    for (i, p) in detail.abstentions.iter().enumerate() {
        let (gap, prefix) = sd_gap(
            p.probabilities(),
            x.ballots()[i].ranking(),
            detail.truthful.probabilities(),
        );
        if gap > detail.loss {
            detail.loss = gap;
            detail.voter = i;
            detail.prefix = prefix;
        }
    }
    Ok(detail)
}

pub fn participation_loss<F>(f: &F, x: &Profile) -> Result<LossValue>
where
    F: SocialChoice + ?Sized,
{
    participation_detail(f, x).map(|d| LossValue::scalar(d.loss))
}

/// The participation axiom itself: every voter's truthful outcome
/// stochastically dominates their abstention outcome.
pub fn satisfies_participation<F>(f: &F, x: &Profile) -> Result<bool>
where
    F: SocialChoice + ?Sized,
{
    let detail = participation_detail(f, x)?;
    Ok(detail
        .abstentions
        .iter()
        .zip(x.ballots())
        .all(|(p, sigma)| stochastically_dominates(&detail.truthful, p, sigma)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::generate_impartial_culture;
    use crate::rules::{plurality, RuleId};
    use proptest::prelude::*;

    const THIRD: f64 = 1.0 / 3.0;

    fn lot(v: &[f64]) -> Lottery {
        Lottery::new(v.to_vec()).unwrap()
    }

    fn abc() -> Ballot {
        Ballot::new(vec![0, 1, 2]).unwrap()
    }

    #[test]
    fn l1_examples() {
        let p = lot(&[0.2, 0.3, 0.5]);
        assert_eq!(l1_loss(&p, &p).unwrap().value, 0.0);
        assert_eq!(l1_loss(&lot(&[1.0, 0.0, 0.0]), &lot(&[0.0, 1.0, 0.0])).unwrap().value, 2.0);
        let v = l1_loss(&lot(&[0.5, 0.5, 0.0]), &lot(&[THIRD; 3])).unwrap().value;
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            l1_loss(&lot(&[1.0]), &lot(&[0.5, 0.5])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn l1_gradient_is_sign() {
        let mut g = [9.0; 3];
        l1_gradient(&[0.5, 0.2, 0.3], &[0.5, 0.5, 0.0], &mut g);
        assert_eq!(g, [0.0, -1.0, 1.0]);
    }

    #[test]
    fn dominance_examples() {
        let q = lot(&[THIRD; 3]);
        assert!(stochastically_dominates(&q, &q, &abc()));
        assert!(stochastically_dominates(&lot(&[1.0, 0.0, 0.0]), &q, &abc()));
        assert!(!stochastically_dominates(&lot(&[0.0, 0.0, 1.0]), &lot(&[1.0, 0.0, 0.0]), &abc()));
    }

    #[test]
    fn sd_loss_examples() {
        let q = lot(&[0.1, 0.6, 0.3]);
        assert_eq!(sd_loss(&q, &abc(), &q).value, 0.0);
        assert_eq!(sd_loss(&lot(&[0.0, 0.0, 1.0]), &abc(), &lot(&[1.0, 0.0, 0.0])).value, 1.0);
        assert_eq!(sd_gap(&[0.0, 0.0, 1.0], &[0, 1, 2], &[1.0, 0.0, 0.0]), (1.0, 1));
        let v = sd_loss(&lot(&[THIRD; 3]), &abc(), &lot(&[0.5, 0.5, 0.0])).value;
        assert!((v - THIRD).abs() < 1e-12);
    }

    #[test]
    fn participation_of_constant_function_is_zero() {
        let constant = |p: &Profile| Lottery::point(0, p.num_candidates());
        for seed in 0..20 {
            let x = generate_impartial_culture(4, 7, seed).unwrap();
            assert_eq!(participation_loss(&constant, &x).unwrap().value, 0.0);
        }
    }

    #[test]
    fn participation_of_plurality_on_unanimous_profile_is_zero() {
        let x = Profile::from_rankings(3, [[1, 0, 2], [1, 2, 0], [1, 0, 2], [1, 2, 0]]).unwrap();
        assert_eq!(participation_loss(&plurality, &x).unwrap().value, 0.0);
        assert_eq!(participation_loss(&RuleId::Plurality, &x).unwrap().value, 0.0);
    }

    #[test]
    fn participation_needs_two_voters() {
        let x = Profile::from_rankings(2, [[0, 1]]).unwrap();
        assert!(matches!(
            participation_loss(&RuleId::Borda, &x),
            Err(Error::UndefinedParticipation)
        ));
    }

    #[test]
    fn participation_detail_reports_worst_voter() {
        // Three-way plurality tie: each abstention drops the voter's favourite
        // from the winner set, a prefix gap of 1/3 at position 1.
        let x = Profile::from_rankings(3, [[0, 1, 2], [1, 2, 0], [2, 0, 1]]).unwrap();
        let d = participation_detail(&RuleId::Plurality, &x).unwrap();
        assert!((d.loss - THIRD).abs() < 1e-12);
        assert_eq!(d.voter, 0);
        assert_eq!(d.prefix, 1);
        assert!(satisfies_participation(&RuleId::Plurality, &x).unwrap());
    }

    fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, m).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-12;
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn sd_loss_properties(p in simplex(5), q in simplex(5), perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle()) {
            let (gap, _) = sd_gap(&p, &perm, &q);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&gap));
            prop_assert_eq!(sd_gap(&p, &perm, &p).0, 0.0);

            // Zero loss exactly when every prefix of p covers q's prefix within tolerance.
            let mut pp = 0.0;
            let mut qq = 0.0;
            let mut dominates = true;
            for &c in &perm {
                pp += p[c];
                qq += q[c];
                if pp < qq - DOMINANCE_TOLERANCE { dominates = false; }
            }
            prop_assert_eq!(gap == 0.0, dominates);
        }
    }
}
