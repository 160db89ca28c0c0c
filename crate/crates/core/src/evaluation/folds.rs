use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::neural::Rng;

fn by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    classes
}

/// `k` disjoint folds covering `0..labels.len()`, each class spread within ±1.
///
/// Classes are visited in ascending order; each is shuffled and dealt
/// round-robin, starting where the previous class stopped so that remainders
/// land on different folds.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}, need at least 2 folds")));
    }
    if k > labels.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {} samples", labels.len())));
    }
    let mut rng = Rng::seed_from(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut members) in by_class(labels) {
        if members.len() < k {
            warn!("class {class} has {} members for {k} folds", members.len());
        }
        rng.shuffle(&mut members);
        for idx in members {
            folds[next].push(idx);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Splits `indices` into `(train, held_out)` with `round(fraction · n_c)`
/// held out per class (at least one when the class has two or more members).
pub fn stratified_holdout(indices: &[usize], labels: &[usize], fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("holdout fraction {fraction}")));
    }
    let sub: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (_, mut members) in by_class(&sub) {
        rng.shuffle(&mut members);
        let n = members.len();
        let mut take = (fraction * n as f64).round() as usize;
        if fraction > 0.0 && take == 0 && n >= 2 {
            take = 1;
        }
        held.extend(members[..take].iter().map(|&m| indices[m]));
        train.extend(members[take..].iter().map(|&m| indices[m]));
    }
    train.sort_unstable();
    held.sort_unstable();
    Ok((train, held))
}
