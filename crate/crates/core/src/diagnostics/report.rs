use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ErrorClassification;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Collapse,
    Repeat,
    /// Passed-over tokens and never-reached tokens together.
    Skip,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 3] = [ErrorClass::Collapse, ErrorClass::Repeat, ErrorClass::Skip];

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Collapse => "collapse",
            ErrorClass::Repeat => "repeat",
            ErrorClass::Skip => "skip",
        }
    }

    fn events(self, c: &ErrorClassification) -> usize {
        match self {
            ErrorClass::Collapse => c.collapse_frames,
            ErrorClass::Repeat => c.repeat_events,
            ErrorClass::Skip => c.skipped_total(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: String,
    #[serde(flatten)]
    pub classification: ErrorClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorTotals {
    pub events: usize,
    pub cases_affected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub mechanism: String,
    pub cases: Vec<CaseRow>,
    pub collapse: ErrorTotals,
    pub repeat: ErrorTotals,
    pub skip: ErrorTotals,
    /// Of the skip events, how many were tokens never reached.
    pub incomplete_tokens: usize,
    pub failed_cases: usize,
    pub failure_rate: f64,
}

/// Aggregates per-case classifications for one mechanism.
pub fn corpus_report(mechanism: &str, cases: Vec<CaseRow>) -> Result<CorpusReport> {
    if cases.is_empty() {
        return Err(Error::InvalidInput(format!("no cases for mechanism {mechanism}")));
    }
    let totals = |class: ErrorClass| {
        let mut t = ErrorTotals::default();
        for c in &cases {
            let e = class.events(&c.classification);
            t.events += e;
            t.cases_affected += usize::from(e > 0);
        }
        t
    };
    let collapse = totals(ErrorClass::Collapse);
    let repeat = totals(ErrorClass::Repeat);
    let skip = totals(ErrorClass::Skip);
    let incomplete_tokens = cases.iter().map(|c| c.classification.incomplete_tokens).sum();
    let failed_cases = cases.iter().filter(|c| c.classification.case_failed).count();
    let failure_rate = failed_cases as f64 / cases.len() as f64;
    Ok(CorpusReport {
        mechanism: mechanism.to_string(),
        cases,
        collapse,
        repeat,
        skip,
        incomplete_tokens,
        failed_cases,
        failure_rate,
    })
}

impl CorpusReport {
    pub fn totals(&self, class: ErrorClass) -> ErrorTotals {
        match class {
            ErrorClass::Collapse => self.collapse,
            ErrorClass::Repeat => self.repeat,
            ErrorClass::Skip => self.skip,
        }
    }

    /// Class affecting the most cases, ties broken by event count. `None`
    /// when no case has any error.
    pub fn dominant_class(&self) -> Option<ErrorClass> {
        ErrorClass::ALL
            .into_iter()
            .map(|c| (c, self.totals(c)))
            .filter(|(_, t)| t.events > 0)
            .max_by_key(|(_, t)| (t.cases_affected, t.events))
            .map(|(c, _)| c)
    }

    /// One row per error class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mechanism,error_class,events,cases_affected,cases,failure_rate\n");
        self.write_csv_rows(&mut out);
        out
    }

    fn write_csv_rows(&self, out: &mut String) {
        for class in ErrorClass::ALL {
            let t = self.totals(class);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.mechanism,
                class.name(),
                t.events,
                t.cases_affected,
                self.cases.len(),
                self.failure_rate
            );
        }
    }

    /// One row per case.
    pub fn cases_csv(&self) -> String {
        let mut out = String::from(
            "mechanism,case_id,collapse_frames,repeat_events,skip_events,incomplete_tokens,failed\n",
        );
        for c in &self.cases {
            let k = &c.classification;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.mechanism,
                c.case_id,
                k.collapse_frames,
                k.repeat_events,
                k.skip_events,
                k.incomplete_tokens,
                k.case_failed
            );
        }
        out
    }
}

/// CSV covering several mechanisms, one row per mechanism and error class.
pub fn reports_to_csv(reports: &[CorpusReport]) -> String {
    let mut out = String::from("mechanism,error_class,events,cases_affected,cases,failure_rate\n");
    for r in reports {
        r.write_csv_rows(&mut out);
    }
    out
}

/// Fixed-width table for terminals.
pub fn render_table(reports: &[CorpusReport]) -> String {
    let width = reports.iter().map(|r| r.mechanism.len()).max().unwrap_or(0).max(9);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>8}  {:>8}  {:>8}  {:>8}  {:>9}",
        "mechanism", "cases", "collapse", "repeat", "skip", "failed", "dominant"
    );
    for r in reports {
        let cell = |t: ErrorTotals| format!("{}/{}", t.cases_affected, t.events);
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>8}  {:>8}  {:>8}  {:>7.1}%  {:>9}",
            r.mechanism,
            r.cases.len(),
            cell(r.collapse),
            cell(r.repeat),
            cell(r.skip),
            100.0 * r.failure_rate,
            r.dominant_class().map_or("-", ErrorClass::name)
        );
    }
    out.push_str("cells: cases affected/events\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(id: &str, collapse: usize, repeat: usize, skip: usize, failed: bool) -> CaseRow {
        CaseRow {
            case_id: id.into(),
            classification: ErrorClassification {
                collapse_frames: collapse,
                repeat_events: repeat,
                skip_events: skip,
                incomplete_tokens: 0,
                case_failed: failed,
            },
        }
    }

    #[test]
    fn aggregates() {
        let r = corpus_report(
            "ma",
            vec![case("a", 0, 0, 2, true), case("b", 0, 0, 1, true), case("c", 6, 1, 0, true), case("d", 0, 0, 0, false)],
        )
        .unwrap();
        assert_eq!(r.skip, ErrorTotals { events: 3, cases_affected: 2 });
        assert_eq!(r.collapse, ErrorTotals { events: 6, cases_affected: 1 });
        assert_eq!(r.failure_rate, 0.75);
        assert_eq!(r.dominant_class(), Some(ErrorClass::Skip));
        assert_eq!(r.to_csv().lines().count(), 4);
        assert!(r.to_csv().contains("ma,skip,3,2,4,0.75"));
        assert_eq!(r.cases_csv().lines().count(), 5);
        assert!(render_table(&[r]).contains("skip"));
    }

    #[test]
    fn clean_corpus_has_no_dominant_class() {
        let r = corpus_report("sma", vec![case("a", 0, 0, 0, false)]).unwrap();
        assert_eq!(r.dominant_class(), None);
        assert!(corpus_report("x", vec![]).is_err());
    }
}
