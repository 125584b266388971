//! Run reports and their JSON/CSV serialization.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Criterion, ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};

/// One diagnostic at one sample size, across seed groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `max - min` across seed groups.
    pub spread: f64,
    pub groups: Vec<f64>,
}

impl DiagnosticSummary {
    pub fn from_groups(groups: Vec<f64>) -> Self {
        let mean = groups.iter().sum::<f64>() / groups.len() as f64;
        let min = groups.iter().copied().fold(f64::INFINITY, f64::min);
        let max = groups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        DiagnosticSummary {
            mean,
            min,
            max,
            spread: max - min,
            groups,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub diagnostics: BTreeMap<String, DiagnosticSummary>,
}

/// Tally of an invariant checked throughout a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Largest amount by which the invariant was exceeded, 0 when it always held.
    pub worst_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub criterion: Criterion,
    pub n: Option<usize>,
    pub value: Option<f64>,
    pub spread: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub seed_groups: usize,
    pub replicates: usize,
    pub version: String,
    /// The only field that varies between identical runs.
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    /// Scenario constants such as prior distances and covering numbers.
    pub summary: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<InvariantCheck>,
    pub criteria: Vec<CriterionOutcome>,
    pub metadata: Metadata,
}

impl Report {
    pub fn diagnostic(&self, n: usize, name: &str) -> Option<&DiagnosticSummary> {
        self.rows.iter().find(|r| r.n == n)?.diagnostics.get(name)
    }

    /// Summary of `name` at the largest sample size that reports it.
    pub fn final_diagnostic(&self, name: &str) -> Option<&DiagnosticSummary> {
        self.rows.iter().rev().find_map(|r| r.diagnostics.get(name))
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn criteria_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    /// Fails with [`Error::Invariant`] if any invariant was violated.
    pub fn ensure_invariants(&self) -> Result<()> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| c.violations > 0)
            .map(|c| format!("{} ({} of {})", c.name, c.violations, c.checked))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Invariant(format!("violated: {}", failed.join(", "))))
        }
    }

    pub(crate) fn evaluate_criteria(&mut self) {
        let last = self.rows.last().map(|r| r.n);
        self.criteria = self
            .config
            .criteria
            .iter()
            .map(|c| {
                let n = c.n.or(last);
                let found = n.and_then(|n| self.diagnostic(n, &c.diagnostic));
                let passed = found.is_some_and(|d| {
                    c.min.is_none_or(|lo| d.mean >= lo)
                        && c.max.is_none_or(|hi| d.mean <= hi)
                        && c.max_spread.is_none_or(|s| d.spread <= s)
                });
                CriterionOutcome {
                    criterion: c.clone(),
                    n,
                    value: found.map(|d| d.mean),
                    spread: found.map(|d| d.spread),
                    passed,
                }
            })
            .collect();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Long-format curves: one line per (n, diagnostic, seed group).
    pub fn write_curves<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "diagnostic", "value", "seed_group"])?;
        for row in &self.rows {
            for (name, d) in &row.diagnostics {
                for (g, v) in d.groups.iter().enumerate() {
                    w.write_record([row.n.to_string(), name.clone(), v.to_string(), g.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn curves_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_curves(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Invariant(e.to_string()))
    }

    /// Writes `report.json` and `curves.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_curves(std::fs::File::create(dir.join("curves.csv"))?)
    }
}

/// Per-group values of each diagnostic, assembled into report rows.
#[derive(Debug, Default)]
pub(crate) struct Curves {
    groups: usize,
    values: BTreeMap<usize, BTreeMap<String, Vec<Option<f64>>>>,
}

impl Curves {
    pub(crate) fn new(groups: usize) -> Self {
        Curves {
            groups,
            values: BTreeMap::new(),
        }
    }

    pub(crate) fn record(&mut self, n: usize, name: &str, group: usize, value: f64) {
        let slots = self
            .values
            .entry(n)
            .or_default()
            .entry(name.to_string())
            .or_insert_with(|| vec![None; self.groups]);
        slots[group] = Some(value);
    }

    pub(crate) fn into_rows(self) -> Result<Vec<ReportRow>> {
        self.values
            .into_iter()
            .map(|(n, diags)| {
                let diagnostics = diags
                    .into_iter()
                    .map(|(name, slots)| {
                        let groups = slots
                            .into_iter()
                            .collect::<Option<Vec<f64>>>()
                            .ok_or_else(|| Error::Invariant(format!("{name} missing for a seed group at n = {n}")))?;
                        Ok((name, DiagnosticSummary::from_groups(groups)))
                    })
                    .collect::<Result<_>>()?;
                Ok(ReportRow { n, diagnostics })
            })
            .collect()
    }
}

/// Running tallies of invariant checks, in first-seen order.
#[derive(Debug, Default)]
pub(crate) struct Checks {
    checks: Vec<InvariantCheck>,
}

impl Checks {
    /// Records one instance of `value <= bound`.
    pub(crate) fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        let excess = value - bound;
        let entry = match self.checks.iter().position(|c| c.name == name) {
            Some(i) => &mut self.checks[i],
            None => {
                self.checks.push(InvariantCheck {
                    name: name.to_string(),
                    checked: 0,
                    violations: 0,
                    worst_excess: 0.0,
                });
                self.checks.last_mut().expect("just pushed")
            }
        };
        entry.checked += 1;
        // NaN counts as a violation
        if excess.is_nan() || excess > 0.0 {
            entry.violations += 1;
            entry.worst_excess = entry.worst_excess.max(if excess.is_nan() { f64::INFINITY } else { excess });
        }
    }

    pub(crate) fn holds(&mut self, name: &str, ok: bool) {
        self.at_most(name, if ok { 0.0 } else { 1.0 }, 0.0);
    }

    pub(crate) fn into_vec(self) -> Vec<InvariantCheck> {
        self.checks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rows: Vec<ReportRow>, criteria: Vec<Criterion>) -> Report {
        let mut config: ExperimentConfig = serde_json::from_str(r#"{"kind": "consistency"}"#).unwrap();
        config.criteria = criteria;
        Report {
            kind: config.kind,
            config,
            summary: BTreeMap::new(),
            flags: BTreeMap::new(),
            rows,
            checks: Vec::new(),
            criteria: Vec::new(),
            metadata: Metadata {
                seed: 0,
                seed_groups: 2,
                replicates: 1,
                version: "test".into(),
                wall_time_ms: 0,
            },
        }
    }

    #[test]
    fn curves_assemble_in_order() {
        let mut c = Curves::new(2);
        c.record(10, "b", 1, 0.5);
        c.record(10, "b", 0, 0.25);
        c.record(1, "a", 0, 1.0);
        c.record(1, "a", 1, 3.0);
        let rows = c.into_rows().unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![1, 10]);
        let a = &rows[0].diagnostics["a"];
        assert_eq!((a.mean, a.spread, a.min, a.max), (2.0, 2.0, 1.0, 3.0));

        let r = report(rows, vec![]);
        assert_eq!(
            r.curves_csv().unwrap(),
            "n,diagnostic,value,seed_group\n1,a,1,0\n1,a,3,1\n10,b,0.25,0\n10,b,0.5,1\n"
        );
    }

    #[test]
    fn missing_group_is_an_invariant_failure() {
        let mut c = Curves::new(2);
        c.record(1, "a", 0, 1.0);
        assert!(matches!(c.into_rows(), Err(Error::Invariant(_))));
    }

    #[test]
    fn checks_tally_violations() {
        let mut k = Checks::default();
        k.at_most("x", 0.5, 1.0);
        k.at_most("x", 1.25, 1.0);
        k.at_most("x", f64::NAN, 1.0);
        k.holds("y", true);
        let v = k.into_vec();
        assert_eq!((v[0].checked, v[0].violations, v[0].worst_excess), (3, 2, f64::INFINITY));
        assert_eq!((v[1].checked, v[1].violations), (1, 0));
    }

    #[test]
    fn criteria_use_final_row_by_default() {
        let mut c = Curves::new(2);
        for (n, v) in [(1, 0.0), (5, 0.9)] {
            c.record(n, "m", 0, v);
            c.record(n, "m", 1, v + 0.02);
        }
        let crit = |min: Option<f64>, max_spread: Option<f64>, n: Option<usize>| Criterion {
            diagnostic: "m".into(),
            n,
            min,
            max: None,
            max_spread,
        };
        let mut r = report(
            c.into_rows().unwrap(),
            vec![
                crit(Some(0.9), None, None),
                crit(Some(0.9), None, Some(1)),
                crit(None, Some(0.01), None),
                Criterion { diagnostic: "absent".into(), ..crit(Some(0.0), None, None) },
            ],
        );
        r.evaluate_criteria();
        let passed: Vec<bool> = r.criteria.iter().map(|c| c.passed).collect();
        assert_eq!(passed, vec![true, false, false, false]);
        assert_eq!(r.criteria[0].n, Some(5));
        assert!(!r.criteria_passed());
    }
}
