//! Fleiss' kappa for a fixed number of raters per item.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Per-item category counts, as parsed from an annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    pub items: Vec<String>,
    pub categories: Vec<String>,
    /// `counts[i][j]`: raters who put item `i` in category `j`.
    pub counts: Vec<Vec<u32>>,
}

/// Kappa from an `N x k` count table where every row sums to the same `n`.
///
/// When every rating falls into one category the expected agreement is 1
/// and kappa is undefined; this returns 1.0 and logs a warning.
pub fn fleiss_kappa(counts: &[Vec<u32>]) -> Result<f64> {
    let first = counts.first().ok_or_else(|| Error::validation("no items to rate"))?;
    let k = first.len();
    if k < 2 {
        return Err(Error::validation("at least two categories are required"));
    }
    let n: u32 = first.iter().sum();
    if n < 2 {
        return Err(Error::validation("at least two ratings per item are required"));
    }
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(Error::validation(format!("item {i} has {} categories, expected {k}", row.len())));
        }
        let s: u32 = row.iter().sum();
        if s != n {
            return Err(Error::validation(format!("item {i} has {s} ratings, expected {n}")));
        }
    }
    let big_n = counts.len() as f64;
    let n_f = n as f64;

    // per-item agreement, exact in integers before the division
    let pairs = (n as u64) * (n as u64 - 1);
    let p_bar = counts
        .iter()
        .map(|row| {
            let agree: u64 = row.iter().map(|&c| c as u64 * c as u64).sum::<u64>() - n as u64;
            agree as f64 / pairs as f64
        })
        .sum::<f64>()
        / big_n;

    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = counts.iter().map(|r| r[j] as f64).sum::<f64>() / (big_n * n_f);
            pj * pj
        })
        .sum();

    if (1.0 - p_e).abs() < f64::EPSILON {
        log::warn!("all ratings fall into one category; kappa is undefined, reporting 1.0");
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Parses `item_id<TAB>rater_id<TAB>label` rows after a header line.
/// Categories are the sorted set of observed labels.
pub fn parse_annotations(text: &str) -> Result<RatingTable> {
    let mut lines = text.lines().enumerate();
    lines.next().ok_or_else(|| Error::validation("annotation file is empty"))?;
    let mut by_item: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut labels = BTreeSet::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [item, rater, label] = fields[..] else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        };
        let entry = by_item.entry(item.to_string()).or_insert_with(|| {
            order.push(item.to_string());
            Vec::new()
        });
        if entry.iter().any(|(r, _)| r == rater) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("rater {rater} rated item {item} twice"),
            });
        }
        entry.push((rater.to_string(), label.to_string()));
        labels.insert(label.to_string());
    }
    let categories: Vec<String> = labels.into_iter().collect();
    let counts = order
        .iter()
        .map(|item| {
            let mut row = vec![0u32; categories.len()];
            for (_, l) in &by_item[item] {
                let j = categories.binary_search(l).expect("label collected");
                row[j] += 1;
            }
            row
        })
        .collect();
    Ok(RatingTable {
        items: order,
        categories,
        counts,
    })
}
