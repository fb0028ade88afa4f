use std::fmt::Write as _;

use crate::classifiers::Classifier;
use crate::dataset::LabeledDataset;
use crate::error::{CoreError, Result};

use super::metrics::evaluate;

/// Per-distance test accuracy for several architectures.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub distances_ft: Vec<u32>,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// One accuracy per entry of `distances_ft`.
    pub accuracy: Vec<f64>,
}

/// One architecture under comparison: a trained model and its test set for
/// each distance, in table order. Test sets are per arm because arms may use
/// different window lengths.
pub struct Arm<'a> {
    pub name: String,
    pub models: Vec<&'a Classifier>,
    pub tests: Vec<&'a LabeledDataset>,
}

pub const COMPARISON_HEADER: &str = "distance_ft";

impl ComparisonTable {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Distances where series `a` scores at least as well as series `b`.
    pub fn dominates(&self, a: &str, b: &str) -> Option<Vec<bool>> {
        let (a, b) = (self.series(a)?, self.series(b)?);
        Some(
            a.accuracy
                .iter()
                .zip(&b.accuracy)
                .map(|(x, y)| x >= y)
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARISON_HEADER);
        for s in &self.series {
            let _ = write!(out, ",{}", s.name);
        }
        out.push('\n');
        for (i, d) in self.distances_ft.iter().enumerate() {
            let _ = write!(out, "{d}");
            for s in &self.series {
                let _ = write!(out, ",{}", s.accuracy[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| CoreError::format("comparison csv", m);
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers.get(0) != Some(COMPARISON_HEADER) {
            return Err(bad(format!("first column must be {COMPARISON_HEADER}")));
        }
        let mut series: Vec<Series> = headers
            .iter()
            .skip(1)
            .map(|n| Series {
                name: n.to_string(),
                accuracy: Vec::new(),
            })
            .collect();
        let mut distances_ft = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let d = record[0]
                .parse()
                .map_err(|_| bad(format!("bad distance {:?}", &record[0])))?;
            distances_ft.push(d);
            for (s, field) in series.iter_mut().zip(record.iter().skip(1)) {
                s.accuracy.push(
                    field
                        .parse()
                        .map_err(|_| bad(format!("bad accuracy {field:?}")))?,
                );
            }
        }
        Ok(ComparisonTable {
            distances_ft,
            series,
        })
    }
}

/// Evaluates every arm at every distance.
pub fn compare_architectures(distances_ft: &[u32], arms: &[Arm<'_>]) -> Result<ComparisonTable> {
    let mut series = Vec::with_capacity(arms.len());
    for arm in arms {
        if arm.models.len() != distances_ft.len() || arm.tests.len() != distances_ft.len() {
            return Err(CoreError::Argument(format!(
                "arm {} needs one model and one test set per distance",
                arm.name
            )));
        }
        let mut accuracy = Vec::with_capacity(distances_ft.len());
        for (model, test) in arm.models.iter().zip(&arm.tests) {
            accuracy.push(evaluate(model, test)?.accuracy);
        }
        series.push(Series {
            name: arm.name.clone(),
            accuracy,
        });
    }
    Ok(ComparisonTable {
        distances_ft: distances_ft.to_vec(),
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ComparisonTable {
        ComparisonTable {
            distances_ft: vec![2, 8, 14],
            series: vec![
                Series {
                    name: "baseline_w128".into(),
                    accuracy: vec![0.9, 0.1 + 0.2, 1.0 / 3.0],
                },
                Series {
                    name: "resnet".into(),
                    accuracy: vec![0.95, 0.5, 1.0],
                },
            ],
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let t = table();
        assert_eq!(ComparisonTable::from_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn dominance_per_distance() {
        assert_eq!(
            table().dominates("resnet", "baseline_w128"),
            Some(vec![true, true, true])
        );
        assert_eq!(table().dominates("resnet", "missing"), None);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(ComparisonTable::from_csv("d,a\n1,0.5\n").is_err());
        assert!(ComparisonTable::from_csv("distance_ft,a\n1,x\n").is_err());
    }
}
