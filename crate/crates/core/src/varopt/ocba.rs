use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary of the noisy samples of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    /// Variance of `mean`.
    pub variance: f64,
    pub shots: usize,
}

impl CellStats {
    fn variance_with(&self, extra: usize) -> f64 {
        if self.shots == 0 {
            return self.variance;
        }
        self.variance * self.shots as f64 / (self.shots + extra) as f64
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Bonferroni bound on the probability that the cell with the lowest sample
/// mean is not the truly best one, after `extra[i]` more shots per cell.
pub fn pics(cells: &[CellStats], extra: &[usize]) -> f64 {
    let Some(b) = (0..cells.len()).min_by(|&i, &j| cells[i].mean.total_cmp(&cells[j].mean)) else {
        return 0.0;
    };
    let vb = cells[b].variance_with(extra[b]);
    (0..cells.len())
        .filter(|&i| i != b)
        .map(|i| {
            let gap = cells[i].mean - cells[b].mean;
            let sd = (vb + cells[i].variance_with(extra[i])).sqrt();
            if sd > 0.0 {
                normal_cdf(-gap / sd)
            } else if gap > 0.0 {
                0.0
            } else {
                0.5
            }
        })
        .sum()
}

/// Greedy allocation of extra shots in batches: each batch goes to the cell
/// whose refinement lowers the mis-selection bound most (ties go to the cell
/// with fewer extra shots, then the lower index). Stops once the bound is below
/// `1 - confidence` or `budget` shots are spent.
pub fn allocate_refinement(cells: &[CellStats], confidence: f64, budget: usize, batch: usize) -> Result<Vec<usize>> {
    if cells.len() < 2 {
        return Err(Error::InsufficientData("refinement needs at least two cells".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) || batch == 0 {
        return Err(Error::InvalidArgument("confidence must lie in (0, 1) and the batch size be positive".into()));
    }
    let mut extra = vec![0; cells.len()];
    let mut spent = 0;
    let mut current = pics(cells, &extra);
    while current > 1.0 - confidence && spent + batch <= budget {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..cells.len() {
            if cells[i].shots == 0 {
                continue;
            }
            extra[i] += batch;
            let p = pics(cells, &extra);
            extra[i] -= batch;
            let better = match best {
                None => true,
                Some((bp, bi)) => p < bp - 1e-15 || ((p - bp).abs() <= 1e-15 && extra[i] < extra[bi]),
            };
            if better {
                best = Some((p, i));
            }
        }
        let Some((p, i)) = best else { break };
        extra[i] += batch;
        spent += batch;
        current = p;
    }
    Ok(extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(mean: f64, per_shot_var: f64, shots: usize) -> CellStats {
        CellStats { mean, variance: per_shot_var / shots as f64, shots }
    }

    #[test]
    fn separated_cells_need_nothing() {
        let cells = [cell(0.1, 0.01, 100), cell(0.5, 0.01, 100)];
        assert_eq!(allocate_refinement(&cells, 0.9, 1000, 50).unwrap(), vec![0, 0]);
    }

    #[test]
    fn identical_cells_split_evenly() {
        let cells = [cell(0.2, 0.04, 100), cell(0.2, 0.04, 100)];
        let a = allocate_refinement(&cells, 0.9, 1000, 50).unwrap();
        assert_eq!(a.iter().sum::<usize>(), 1000);
        assert!(a[0].abs_diff(a[1]) <= 50);
    }

    #[test]
    fn greedy_matches_brute_force() {
        let cells = [cell(0.20, 0.05, 100), cell(0.215, 0.02, 100), cell(0.23, 0.08, 100)];
        let batches = 12;
        let greedy = allocate_refinement(&cells, 0.999_999, 50 * batches, 50).unwrap();
        let mut best = (f64::INFINITY, vec![]);
        for a in 0..=batches {
            for b in 0..=batches - a {
                let alloc = vec![50 * a, 50 * b, 50 * (batches - a - b)];
                let p = pics(&cells, &alloc);
                if p < best.0 {
                    best = (p, alloc);
                }
            }
        }
        let pg = pics(&cells, &greedy);
        assert!(pg <= best.0 * 1.01, "greedy {pg} vs optimum {}", best.0);
        for (g, o) in greedy.iter().zip(&best.1) {
            assert!(g.abs_diff(*o) <= 50, "{greedy:?} vs {:?}", best.1);
        }
    }

    #[test]
    fn needs_two_cells() {
        assert!(allocate_refinement(&[cell(0.1, 0.1, 50)], 0.9, 100, 50).is_err());
    }
}
