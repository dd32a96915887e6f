//! Adiabatic level tracking across a field sweep by eigenvector overlap.

use serde::{Deserialize, Serialize};

use super::cmatrix::inner;
use super::eigen::EigenSystem;
use crate::error::{Error, Result};

const MIN_OVERLAP: f64 = 0.5;
const AMBIGUITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedBranches {
    /// Per step, the eigen-system reordered so that entry k belongs to branch k.
    pub steps: Vec<EigenSystem>,
    /// `permutations[i][k]` is the sorted eigen index that branch k occupies at step i.
    pub permutations: Vec<Vec<usize>>,
    /// Smallest matched overlap between step i−1 and step i (1 at step 0).
    pub min_overlap: Vec<f64>,
    /// Steps where the matching had a near tie.
    pub ambiguous_steps: Vec<usize>,
}

impl TrackedBranches {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn n_branches(&self) -> usize {
        self.steps.first().map_or(0, |s| s.dim())
    }

    /// Energy of branch `k` at every step.
    pub fn branch_energies(&self, k: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.values[k]).collect()
    }
}

/// Follow each level through an ordered sequence of diagonalisations.
///
/// Branch k starts as the k-th lowest level of the first system. At every
/// subsequent step the assignment maximises the summed overlap
/// `|⟨v_k(i−1)|v(i)⟩|` (greedy start, then pairwise-swap improvement).
pub fn track_levels(systems: &[EigenSystem]) -> Result<TrackedBranches> {
    if systems.len() < 2 {
        return Err(Error::InvalidSweep(format!(
            "tracking needs at least 2 field steps, got {}",
            systems.len()
        )));
    }
    let n = systems[0].dim();
    if systems.iter().any(|s| s.dim() != n) {
        return Err(Error::InvalidSweep("systems differ in dimension".into()));
    }

    let mut steps = vec![systems[0].clone()];
    let mut permutations = vec![(0..n).collect::<Vec<_>>()];
    let mut min_overlap = vec![1.0];
    let mut ambiguous_steps = Vec::new();

    for (i, cur) in systems.iter().enumerate().skip(1) {
        let prev = steps.last().unwrap();
        let overlap: Vec<Vec<f64>> = prev
            .vectors
            .iter()
            .map(|p| cur.vectors.iter().map(|c| inner(p, c).norm()).collect())
            .collect();
        let (perm, ambiguous) = assign(&overlap, &prev.values, &cur.values);
        let worst = (0..n)
            .map(|k| overlap[k][perm[k]])
            .fold(f64::INFINITY, f64::min);
        if worst < MIN_OVERLAP {
            return Err(Error::StepTooCoarse {
                step: i,
                overlap: worst,
            });
        }
        if ambiguous {
            log::debug!("ambiguous level assignment at step {i}");
            ambiguous_steps.push(i);
        }
        steps.push(EigenSystem {
            values: perm.iter().map(|&j| cur.values[j]).collect(),
            vectors: perm.iter().map(|&j| cur.vectors[j].clone()).collect(),
        });
        permutations.push(perm);
        min_overlap.push(worst);
    }

    Ok(TrackedBranches {
        steps,
        permutations,
        min_overlap,
        ambiguous_steps,
    })
}

/// Returns the branch→level permutation and whether a near tie was broken by
/// eigenvalue proximity.
fn assign(overlap: &[Vec<f64>], prev_e: &[f64], cur_e: &[f64]) -> (Vec<usize>, bool) {
    let n = overlap.len();
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];

    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|k| (0..n).map(move |j| (k, j))).collect();
    pairs.sort_by(|&(k1, j1), &(k2, j2)| {
        overlap[k2][j2]
            .total_cmp(&overlap[k1][j1])
            .then(
                (prev_e[k1] - cur_e[j1])
                    .abs()
                    .total_cmp(&(prev_e[k2] - cur_e[j2]).abs()),
            )
            .then((k1, j1).cmp(&(k2, j2)))
    });
    for (k, j) in pairs {
        if perm[k] == usize::MAX && !taken[j] {
            perm[k] = j;
            taken[j] = true;
        }
    }

    let proximity = |k: usize, j: usize| (prev_e[k] - cur_e[j]).abs();
    let mut ambiguous = false;
    // pairwise swaps until no strict improvement; near ties go to the
    // assignment with smaller energy jumps
    for _ in 0..n * n {
        let mut changed = false;
        for a in 0..n {
            for b in (a + 1)..n {
                let (ja, jb) = (perm[a], perm[b]);
                let keep = overlap[a][ja] + overlap[b][jb];
                let swap = overlap[a][jb] + overlap[b][ja];
                let do_swap = if (swap - keep).abs() < AMBIGUITY_TOL {
                    if swap > 0.5 && keep > 0.5 {
                        ambiguous = true;
                    }
                    proximity(a, jb) + proximity(b, ja) < proximity(a, ja) + proximity(b, jb)
                } else {
                    swap > keep
                };
                if do_swap {
                    perm.swap(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (perm, ambiguous)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::cmatrix::{CMatrix, C64};
    use crate::hamiltonian::eigen::eigensolve;

    fn two_level(x: f64, kappa: f64) -> EigenSystem {
        let h = CMatrix::from_rows(&[
            vec![C64::new(x, 0.0), C64::new(kappa, 0.0)],
            vec![C64::new(kappa, 0.0), C64::new(-x, 0.0)],
        ]);
        eigensolve(&h).unwrap()
    }

    #[test]
    fn uncoupled_levels_swap_sorted_order() {
        let systems: Vec<_> = (0..21)
            .map(|i| two_level(-1.0 + 0.1 * i as f64, 0.0))
            .collect();
        let t = track_levels(&systems).unwrap();
        // branch 0 starts at −1 (the +x diagonal entry) and rises linearly
        let e0 = t.branch_energies(0);
        for (i, e) in e0.iter().enumerate() {
            assert!((e - (-1.0 + 0.1 * i as f64)).abs() < 1e-12);
        }
        assert_eq!(t.permutations[0], vec![0, 1]);
        assert_eq!(t.permutations[20], vec![1, 0]);
    }

    #[test]
    fn avoided_crossing_branches_never_touch() {
        let kappa = 0.2;
        let systems: Vec<_> = (0..201)
            .map(|i| two_level(-1.0 + 0.01 * i as f64, kappa))
            .collect();
        let t = track_levels(&systems).unwrap();
        let gap = (0..t.n_steps())
            .map(|i| (t.steps[i].values[1] - t.steps[i].values[0]).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((gap - 2.0 * kappa).abs() < 1e-12);
        assert!(t.permutations.iter().all(|p| p == &vec![0, 1]));
    }

    #[test]
    fn coarse_step_is_rejected() {
        // every overlap between the standard basis and the 5-point DFT basis is 1/√5
        let n = 5;
        let identity = EigenSystem {
            values: (0..n).map(|k| k as f64).collect(),
            vectors: (0..n)
                .map(|k| {
                    (0..n)
                        .map(|i| C64::new(if i == k { 1.0 } else { 0.0 }, 0.0))
                        .collect()
                })
                .collect(),
        };
        let dft = EigenSystem {
            values: identity.values.clone(),
            vectors: (0..n)
                .map(|k| {
                    (0..n)
                        .map(|i| {
                            let phase = 2.0 * std::f64::consts::PI * (i * k) as f64 / n as f64;
                            C64::from_polar(1.0 / (n as f64).sqrt(), phase)
                        })
                        .collect()
                })
                .collect(),
        };
        let systems = vec![identity, dft];
        assert!(matches!(
            track_levels(&systems),
            Err(Error::StepTooCoarse { step: 1, .. })
        ));
    }

    #[test]
    fn single_step_is_rejected() {
        assert!(track_levels(&[two_level(0.0, 1.0)]).is_err());
    }
}
