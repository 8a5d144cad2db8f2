use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Assignment of sample ids to cross-validation folds, in the order the ids
/// were given.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_count: usize,
    pub assignments: Vec<(String, usize)>,
}

impl FoldSplit {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.iter().find(|(i, _)| i == id).map(|&(_, f)| f)
    }

    pub fn ids_in(&self, fold: usize) -> Vec<&str> {
        self.assignments.iter().filter(|(_, f)| *f == fold).map(|(i, _)| i.as_str()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &(_, f) in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// Lines of `<id> <fold>`.
    pub fn to_text(&self) -> String {
        self.assignments.iter().map(|(i, f)| format!("{i} {f}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut assignments = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(id), Some(fold), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Format(format!("folds line {}: expected `<id> <fold>`", n + 1)));
            };
            let fold = fold
                .parse()
                .map_err(|_| Error::Format(format!("folds line {}: bad fold `{fold}`", n + 1)))?;
            assignments.push((id.to_string(), fold));
        }
        let fold_count = assignments.iter().map(|&(_, f)| f + 1).max().unwrap_or(0);
        Ok(FoldSplit { fold_count, assignments })
    }
}

/// Seeded shuffle, then round-robin assignment.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::Config(format!("{} samples cannot fill {k} folds", ids.len())));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(FoldSplit {
        fold_count: k,
        assignments: ids.iter().cloned().zip(fold).collect(),
    })
}
