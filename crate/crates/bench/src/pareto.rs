//! Per-method (Avg TST, Avg TWT) points and pairwise dominance.

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodPoint {
    pub method: String,
    pub avg_twt: f64,
    pub avg_tst: f64,
}

/// No worse on both objectives and strictly better on one.
pub fn dominates(a: &MethodPoint, b: &MethodPoint) -> bool {
    a.avg_twt <= b.avg_twt && a.avg_tst <= b.avg_tst && (a.avg_twt < b.avg_twt || a.avg_tst < b.avg_tst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoReport {
    pub points: Vec<MethodPoint>,
    /// `(winner, loser)` for every dominating pair, in point order.
    pub verdicts: Vec<(String, String)>,
}

impl ParetoReport {
    pub fn dominated(&self, method: &str) -> bool {
        self.verdicts.iter().any(|(_, loser)| loser == method)
    }

    /// CSV `method,avg_tst,avg_twt,dominates,nondominated` where `dominates`
    /// lists the beaten methods separated by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,avg_tst,avg_twt,dominates,nondominated\n");
        for p in &self.points {
            let beaten: Vec<&str> =
                self.verdicts.iter().filter(|(w, _)| *w == p.method).map(|(_, l)| l.as_str()).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.method,
                p.avg_tst,
                p.avg_twt,
                beaten.join(";"),
                !self.dominated(&p.method)
            ));
        }
        out
    }

    pub fn verdict_lines(&self) -> Vec<String> {
        self.verdicts.iter().map(|(w, l)| format!("{w} dominates {l}")).collect()
    }
}

pub fn pareto_report(points: &[MethodPoint]) -> Result<ParetoReport> {
    if points.len() < 2 {
        return Err(BenchError::Invalid("a Pareto report needs at least two methods".into()));
    }
    let mut verdicts = Vec::new();
    for a in points {
        for b in points {
            if dominates(a, b) {
                verdicts.push((a.method.clone(), b.method.clone()));
            }
        }
    }
    Ok(ParetoReport { points: points.to_vec(), verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(method: &str, twt: f64, tst: f64) -> MethodPoint {
        MethodPoint { method: method.into(), avg_twt: twt, avg_tst: tst }
    }

    #[test]
    fn better_on_both_dominates() {
        let r = pareto_report(&[pt("a", 4.0, 2.0), pt("b", 16.0, 4.0)]).unwrap();
        assert_eq!(r.verdict_lines(), vec!["a dominates b"]);
        assert_eq!(r.to_csv(), "method,avg_tst,avg_twt,dominates,nondominated\na,2,4,b,true\nb,4,16,,false\n");
    }

    #[test]
    fn equal_and_incomparable_points_do_not_dominate() {
        assert!(pareto_report(&[pt("a", 4.0, 2.0), pt("b", 4.0, 2.0)]).unwrap().verdicts.is_empty());
        assert!(pareto_report(&[pt("a", 4.0, 5.0), pt("b", 5.0, 4.0)]).unwrap().verdicts.is_empty());
    }

    #[test]
    fn one_better_axis_suffices_when_the_other_ties() {
        let r = pareto_report(&[pt("a", 4.0, 2.0), pt("b", 4.0, 3.0)]).unwrap();
        assert_eq!(r.verdicts, vec![("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn needs_two_methods() {
        assert!(pareto_report(&[pt("a", 1.0, 1.0)]).is_err());
    }
}
