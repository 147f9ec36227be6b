//! DBSCAN expansion over a precomputed neighbor graph.
//!
//! Shared by point clustering, cluster merging and ground-truth
//! pre-clustering; each caller decides what a neighbor and a core point are.

use std::collections::VecDeque;

use crate::types::Label;

/// Expands clusters from core points in index order. Non-core points join
/// the first cluster that reaches them; unreachable points stay noise.
/// Cluster ids follow the order in which their first core point is found.
pub fn expand(neighbors: &[Vec<usize>], core: &[bool]) -> Vec<Label> {
    let n = neighbors.len();
    assert_eq!(core.len(), n);
    let mut labels: Vec<Label> = vec![None; n];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        let id = next;
        next += 1;
        labels[start] = Some(id);
        queue.push_back(start);
        while let Some(q) = queue.pop_front() {
            for &nb in &neighbors[q] {
                if labels[nb].is_none() {
                    labels[nb] = Some(id);
                    if core[nb] {
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn border_goes_to_first_cluster() {
        // 0 - 1 - 2 where 0 and 2 are core, 1 is a shared border point
        let nb = vec![vec![1], vec![0, 2], vec![1]];
        let labels = expand(&nb, &[true, false, true]);
        assert_eq!(labels, vec![Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn isolated_non_core_is_noise() {
        let labels = expand(&[vec![], vec![]], &[false, false]);
        assert_eq!(labels, vec![None, None]);
    }
}
