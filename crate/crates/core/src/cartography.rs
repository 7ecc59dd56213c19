//! Data maps from training dynamics, and the low-variability ("easy to
//! learn") filter.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::read_jsonl;
use crate::synthesis::SyntheticExample;

pub const DEFAULT_DROP_FRAC: f64 = 0.17;

/// One example's state after one training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub example_id: String,
    pub epoch: u32,
    pub gold_prob: f64,
    pub predicted_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMapPoint {
    pub example_id: String,
    pub confidence: f64,
    pub variability: f64,
    pub correctness: f64,
}

/// Reads `dynamics.jsonl`, checking probabilities and `(example_id, epoch)`
/// uniqueness line by line.
pub fn read_dynamics(path: impl AsRef<Path>) -> Result<Vec<DynamicsRecord>> {
    let path = path.as_ref();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, rec) in read_jsonl::<DynamicsRecord>(path)? {
        let bad = |message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        if !(0.0..=1.0).contains(&rec.gold_prob) {
            return Err(bad(format!("gold_prob {} outside [0, 1]", rec.gold_prob)));
        }
        if !seen.insert((rec.example_id.clone(), rec.epoch)) {
            return Err(bad(format!("duplicate epoch {} for `{}`", rec.epoch, rec.example_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// The id used for a synthetic example in training dynamics: its draw index.
pub fn example_id(example: &SyntheticExample) -> String {
    example.draw_index.to_string()
}

/// Per-example confidence (mean gold probability), variability (population
/// standard deviation of it) and correctness (fraction of epochs predicting
/// the gold label). `gold_labels` maps example ids to their gold label.
/// Points are sorted by example id.
pub fn compute_data_map(
    records: &[DynamicsRecord],
    gold_labels: &HashMap<String, String>,
) -> Result<Vec<DataMapPoint>> {
    let mut by_example: BTreeMap<&str, Vec<&DynamicsRecord>> = BTreeMap::new();
    for r in records {
        if !(0.0..=1.0).contains(&r.gold_prob) {
            return Err(Error::Invalid(format!(
                "gold_prob {} for `{}` outside [0, 1]",
                r.gold_prob, r.example_id
            )));
        }
        by_example.entry(&r.example_id).or_default().push(r);
    }
    let mut epochs: Option<Vec<u32>> = None;
    let mut points = Vec::with_capacity(by_example.len());
    for (id, mut recs) in by_example {
        recs.sort_by_key(|r| r.epoch);
        let these: Vec<u32> = recs.iter().map(|r| r.epoch).collect();
        if these.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!("duplicate epoch for `{id}`")));
        }
        match &epochs {
            None => {
                if these.len() < 2 {
                    return Err(Error::TooFewEpochs(these.len()));
                }
                epochs = Some(these);
            }
            Some(expected) if *expected != these => return Err(Error::RaggedEpochs(id.to_owned())),
            Some(_) => {}
        }
        let gold = gold_labels
            .get(id)
            .ok_or_else(|| Error::Invalid(format!("no gold label for `{id}`")))?;
        let n = recs.len() as f64;
        let confidence = recs.iter().map(|r| r.gold_prob).sum::<f64>() / n;
        let variance = recs
            .iter()
            .map(|r| (r.gold_prob - confidence).powi(2))
            .sum::<f64>()
            / n;
        let correct = recs.iter().filter(|r| &r.predicted_label == gold).count();
        points.push(DataMapPoint {
            example_id: id.to_owned(),
            confidence,
            variability: variance.sqrt(),
            correctness: correct as f64 / n,
        });
    }
    Ok(points)
}

/// Number of examples kept out of `n` when dropping `drop_frac` of them.
pub fn retained_count(n: usize, drop_frac: f64) -> usize {
    n - (drop_frac * n as f64).floor() as usize
}

/// Indices (ascending) of the `N - ⌊drop_frac·N⌋` highest-variability ids.
/// Ties keep lower confidence first, then the smaller id.
pub fn select_ambiguous(ids: &[String], points: &[DataMapPoint], drop_frac: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&drop_frac) {
        return Err(Error::Invalid(format!("drop_frac must be in [0, 1), got {drop_frac}")));
    }
    let by_id: HashMap<&str, &DataMapPoint> = points.iter().map(|p| (p.example_id.as_str(), p)).collect();
    let located: Vec<&DataMapPoint> = ids
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| Error::MissingDataPoint(id.clone())))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (located[a], located[b]);
        pb.variability
            .total_cmp(&pa.variability)
            .then(pa.confidence.total_cmp(&pb.confidence))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    order.truncate(retained_count(ids.len(), drop_frac));
    order.sort_unstable();
    Ok(order)
}

/// Drops the least ambiguous examples, preserving dataset order.
pub fn ambiguity_filter(
    dataset: &[SyntheticExample],
    points: &[DataMapPoint],
    drop_frac: f64,
) -> Result<Vec<SyntheticExample>> {
    let ids: Vec<String> = dataset.iter().map(example_id).collect();
    Ok(select_ambiguous(&ids, points, drop_frac)?
        .into_iter()
        .map(|i| dataset[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, epoch: u32, p: f64, pred: &str) -> DynamicsRecord {
        DynamicsRecord {
            example_id: id.into(),
            epoch,
            gold_prob: p,
            predicted_label: pred.into(),
        }
    }

    fn gold(ids: &[&str]) -> HashMap<String, String> {
        ids.iter().map(|i| (i.to_string(), "y".to_string())).collect()
    }

    #[test]
    fn constant_probability() {
        let recs: Vec<_> = (0..4).map(|e| rec("a", e, 0.8, "y")).collect();
        let p = &compute_data_map(&recs, &gold(&["a"])).unwrap()[0];
        assert!((p.confidence - 0.8).abs() < 1e-12);
        assert_eq!(p.variability, 0.0);
        assert_eq!(p.correctness, 1.0);
    }

    #[test]
    fn two_epoch_case() {
        let recs = vec![rec("a", 0, 0.2, "n"), rec("a", 1, 0.8, "y")];
        let p = &compute_data_map(&recs, &gold(&["a"])).unwrap()[0];
        assert!((p.confidence - 0.5).abs() < 1e-12);
        assert!((p.variability - 0.3).abs() < 1e-12);
        assert_eq!(p.correctness, 0.5);
    }

    #[test]
    fn three_of_six_correct() {
        let recs: Vec<_> = (0..6).map(|e| rec("a", e, 0.5, if e % 2 == 0 { "y" } else { "n" })).collect();
        assert_eq!(compute_data_map(&recs, &gold(&["a"])).unwrap()[0].correctness, 0.5);
    }

    #[test]
    fn ragged_and_short_dynamics_rejected() {
        let ragged = vec![rec("a", 0, 0.1, "y"), rec("a", 1, 0.1, "y"), rec("b", 0, 0.1, "y")];
        assert!(matches!(
            compute_data_map(&ragged, &gold(&["a", "b"])),
            Err(Error::RaggedEpochs(id)) if id == "b"
        ));
        let short = vec![rec("a", 0, 0.1, "y")];
        assert!(matches!(compute_data_map(&short, &gold(&["a"])), Err(Error::TooFewEpochs(1))));
    }

    #[test]
    fn filter_drops_lowest_variability() {
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let points: Vec<_> = (0..10)
            .map(|i| DataMapPoint {
                example_id: i.to_string(),
                confidence: 0.5,
                variability: i as f64 / 10.0,
                correctness: 1.0,
            })
            .collect();
        assert_eq!(select_ambiguous(&ids, &points, 0.17).unwrap(), (1..10).collect::<Vec<_>>());
        assert_eq!(select_ambiguous(&ids, &points, 0.0).unwrap(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn ties_keep_lower_confidence() {
        let ids: Vec<String> = vec!["x".into(), "y".into()];
        let points = vec![
            DataMapPoint {
                example_id: "x".into(),
                confidence: 0.9,
                variability: 0.1,
                correctness: 1.0,
            },
            DataMapPoint {
                example_id: "y".into(),
                confidence: 0.2,
                variability: 0.1,
                correctness: 1.0,
            },
        ];
        assert_eq!(select_ambiguous(&ids, &points, 0.5).unwrap(), vec![1]);
    }

    #[test]
    fn missing_point_named() {
        let err = select_ambiguous(&["q".to_string()], &[], 0.1).unwrap_err();
        assert!(matches!(err, Error::MissingDataPoint(id) if id == "q"));
    }
}
