use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::train::ExperimentReport;
use crate::embeddings::EmbeddingKind;
use crate::error::Result;
use crate::rules::RuleId;

pub const CURVES_HEADER: &str = "epoch,train_loss,val_rule_loss,val_participation_loss";
pub const PARTICIPATION_HEADER: &str = "rule,embedding,participation_loss,rule_loss";

/// Per-epoch loss curves; the participation column is empty in rule-only runs.
pub fn curves_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for e in &report.epochs {
        let part = e
            .val_participation_loss
            .map(|v| format!("{v:.8}"))
            .unwrap_or_default();
        let _ = writeln!(out, "{},{:.8},{:.8},{part}", e.epoch, e.train_loss, e.val_rule_loss);
    }
    out
}

/// Final test rule loss, rules as rows and embeddings as columns, both in
/// fixed order and restricted to what the reports cover.
pub fn summary_csv(reports: &[ExperimentReport]) -> String {
    let has = |r: RuleId, e: EmbeddingKind| {
        reports
            .iter()
            .find(|x| x.config.rule == r && x.config.embedding == e)
    };
    let embeddings: Vec<EmbeddingKind> = EmbeddingKind::ALL
        .into_iter()
        .filter(|&e| reports.iter().any(|x| x.config.embedding == e))
        .collect();
    let mut out = String::from("rule");
    for e in &embeddings {
        let _ = write!(out, ",{}", e.label());
    }
    out.push('\n');
    for rule in RuleId::ALL {
        if !reports.iter().any(|x| x.config.rule == rule) {
            continue;
        }
        out.push_str(rule.name());
        for &e in &embeddings {
            match has(rule, e) {
                Some(r) => {
                    let _ = write!(out, ",{:.6}", r.final_test.rule_loss);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// One row per report that measured participation loss.
pub fn participation_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from(PARTICIPATION_HEADER);
    out.push('\n');
    let mut rows: Vec<&ExperimentReport> = reports
        .iter()
        .filter(|r| r.final_test.participation_loss.is_some())
        .collect();
    rows.sort_by_key(|r| (r.config.rule.index(), r.config.embedding.index()));
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6}",
            r.config.rule.name(),
            r.config.embedding.label(),
            r.final_test.participation_loss.unwrap_or_default(),
            r.final_test.rule_loss
        );
    }
    out
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::TrainConfig;
    use crate::experiments::train::{EpochRecord, RunKind, TestMetrics};

    fn report(rule: RuleId, emb: EmbeddingKind, loss: f64, part: Option<f64>) -> ExperimentReport {
        ExperimentReport {
            kind: RunKind::Train,
            config: TrainConfig::new(rule, emb),
            rng: "chacha8".into(),
            num_params: 1,
            epochs: vec![EpochRecord {
                epoch: 1,
                lr: 1e-3,
                train_loss: 0.5,
                val_rule_loss: 0.25,
                val_participation_loss: part,
            }],
            initial_test: None,
            final_test: TestMetrics {
                profiles: 1,
                voters: 3,
                rule_loss: loss,
                participation_loss: part,
            },
            rule_loss_increase: None,
            within_guard_band: None,
            checkpoint: None,
            wall_clock_secs: 12.0,
        }
    }

    #[test]
    fn summary_order_is_fixed() {
        let reports = vec![
            report(RuleId::Copeland, EmbeddingKind::Tournament, 0.01, None),
            report(RuleId::Plurality, EmbeddingKind::Tournament, 0.2, None),
            report(RuleId::Plurality, EmbeddingKind::RankFrequency, 0.001, None),
        ];
        assert_eq!(
            summary_csv(&reports),
            "rule,T_RF,T_T\nplurality,0.001000,0.200000\ncopeland,,0.010000\n"
        );
    }

    #[test]
    fn curves_leave_participation_empty_in_rule_only_runs() {
        let r = report(RuleId::Borda, EmbeddingKind::RankFrequency, 0.1, None);
        assert_eq!(curves_csv(&r), format!("{CURVES_HEADER}\n1,0.50000000,0.25000000,\n"));
        let r = report(RuleId::Borda, EmbeddingKind::RankFrequency, 0.1, Some(0.125));
        assert!(curves_csv(&r).ends_with(",0.12500000\n"));
    }

    #[test]
    fn participation_table() {
        let reports = vec![
            report(RuleId::Borda, EmbeddingKind::RankFrequency, 0.1, Some(0.2)),
            report(RuleId::Plurality, EmbeddingKind::RankFrequency, 0.05, Some(0.07)),
            report(RuleId::Copeland, EmbeddingKind::Tournament, 0.1, None),
        ];
        assert_eq!(
            participation_csv(&reports),
            format!("{PARTICIPATION_HEADER}\nplurality,T_RF,0.070000,0.050000\nborda,T_RF,0.200000,0.100000\n")
        );
    }

    #[test]
    fn wall_clock_stays_out_of_json() {
        let r = report(RuleId::Borda, EmbeddingKind::RankFrequency, 0.1, None);
        assert!(!report_json(&r).unwrap().contains("wall_clock"));
    }
}
