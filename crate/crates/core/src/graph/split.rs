use rand::seq::SliceRandom;

use super::{Dataset, GraphError, Label};
use crate::seeding::{derive_seed, rng_from};

const PARTS: [&str; 3] = ["train", "val", "test"];

/// Label-stratified `(train, val, test)` partition, deterministic per seed.
///
/// Per label, the train and validation counts are `round(fraction · count)`
/// and the test part takes the rest. Each part keeps the original order.
pub fn split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), GraphError> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GraphError::BadFractions(f));
    }
    let labels = dataset.labels()?;
    if labels.is_empty() {
        return Err(GraphError::EmptyDataset);
    }

    let mut parts: [Vec<usize>; 3] = Default::default();
    for label in Label::BOTH {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = rng_from(derive_seed(seed, &[label.sign().to_bits()]));
        members.shuffle(&mut rng);
        let count = members.len() as f64;
        let n_train = (f[0] * count).round() as usize;
        let n_val = (f[1] * count).round() as usize;
        let sizes = [n_train, n_val, members.len().saturating_sub(n_train + n_val)];
        if n_train + n_val > members.len() {
            return Err(GraphError::EmptyPart { part: PARTS[2], label });
        }
        let mut offset = 0;
        for (p, &size) in sizes.iter().enumerate() {
            if size == 0 {
                return Err(GraphError::EmptyPart { part: PARTS[p], label });
            }
            parts[p].extend_from_slice(&members[offset..offset + size]);
            offset += size;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok((
        dataset.subset(&parts[0]),
        dataset.subset(&parts[1]),
        dataset.subset(&parts[2]),
    ))
}

/// Label-stratified two-way partition `(rest, held)`; per label, `held`
/// gets `round(fraction · count)` graphs. Each part keeps the original order.
pub fn holdout(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), GraphError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GraphError::BadFractions([1.0 - fraction, fraction, 0.0]));
    }
    let labels = dataset.labels()?;
    if labels.is_empty() {
        return Err(GraphError::EmptyDataset);
    }
    let mut rest = Vec::new();
    let mut held = Vec::new();
    for label in Label::BOTH {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = rng_from(derive_seed(seed, &[label.sign().to_bits()]));
        members.shuffle(&mut rng);
        let n_held = (fraction * members.len() as f64).round() as usize;
        if n_held == 0 {
            return Err(GraphError::EmptyPart { part: PARTS[1], label });
        }
        if n_held == members.len() {
            return Err(GraphError::EmptyPart { part: PARTS[0], label });
        }
        held.extend_from_slice(&members[..n_held]);
        rest.extend_from_slice(&members[n_held..]);
    }
    rest.sort_unstable();
    held.sort_unstable();
    Ok((dataset.subset(&rest), dataset.subset(&held)))
}
