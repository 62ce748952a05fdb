//! Accuracy against ground truth: abundance RMSE (percent), endmember
//! spectral angle (degrees), and the endmember alignment they rely on.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{AbundanceMatrix, EndmemberMatrix};
use crate::linalg::{dot, norm2, Matrix};

/// Up to this many endmembers the matching enumerates every permutation.
pub const EXHAUSTIVE_MATCH_LIMIT: usize = 8;

/// Ground-truth abundance columns off the simplex by more than this are rescaled.
pub const GT_RENORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndmemberScore {
    pub name: String,
    pub rmse: f64,
    pub sad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// Percent.
    pub overall_rmse: f64,
    /// Degrees.
    pub overall_sad: f64,
    /// One entry per ground-truth endmember, in ground-truth order.
    pub per_endmember: Vec<EndmemberScore>,
    /// `permutation[k]` is the ground-truth index matched to estimate `k`.
    pub permutation: Vec<usize>,
    /// Whether the ground-truth abundances had to be rescaled onto the simplex.
    pub gt_renormalized: bool,
}

impl EvaluationResult {
    /// Plain-text table: one row per endmember, then the overall row.
    pub fn to_table(&self) -> String {
        let width = self
            .per_endmember
            .iter()
            .map(|s| s.name.len())
            .chain(["Endmember".len(), "Overall".len()])
            .max()
            .unwrap_or(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}",
            "Endmember", "RMSE (%)", "SAD (deg)"
        );
        for s in &self.per_endmember {
            let _ = writeln!(out, "{:<width$}  {:>9.2}  {:>9.2}", s.name, s.rmse, s.sad);
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.2}  {:>9.2}",
            "Overall", self.overall_rmse, self.overall_sad
        );
        out
    }
}

/// Angle in radians between two spectra; the cosine is clamped to `[-1, 1]`.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm2(a);
    let nb = norm2(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0).acos())
}

fn check_same_shape(a: &Matrix, b: &Matrix, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Per-endmember spectral angles in degrees, column `i` against column `i`.
pub fn sad_per_endmember(gt: &EndmemberMatrix, est: &EndmemberMatrix) -> Result<Vec<f64>> {
    check_same_shape(gt.matrix(), est.matrix(), "sad")?;
    (0..gt.endmembers())
        .map(|i| {
            spectral_angle(gt.matrix().col(i), est.matrix().col(i))
                .map(f64::to_degrees)
                .ok_or(Error::ZeroSpectrum(i))
        })
        .collect()
}

/// Mean spectral angle distance in degrees.
pub fn sad(gt: &EndmemberMatrix, est: &EndmemberMatrix) -> Result<f64> {
    let per = sad_per_endmember(gt, est)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Abundance RMSE in percent over all `p·N` entries.
pub fn rmse(gt: &AbundanceMatrix, est: &AbundanceMatrix) -> Result<f64> {
    check_same_shape(gt.matrix(), est.matrix(), "rmse")?;
    let sq: f64 = gt
        .matrix()
        .as_slice()
        .iter()
        .zip(est.matrix().as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(100.0 * (sq / gt.matrix().as_slice().len() as f64).sqrt())
}

/// RMSE in percent of each abundance row, each over its `N` entries.
pub fn rmse_per_endmember(gt: &AbundanceMatrix, est: &AbundanceMatrix) -> Result<Vec<f64>> {
    check_same_shape(gt.matrix(), est.matrix(), "rmse")?;
    let (p, n) = gt.matrix().shape();
    let mut sq = vec![0.0; p];
    for (gc, ec) in gt.matrix().columns().zip(est.matrix().columns()) {
        for i in 0..p {
            sq[i] += (gc[i] - ec[i]).powi(2);
        }
    }
    Ok(sq
        .into_iter()
        .map(|s| 100.0 * (s / n as f64).sqrt())
        .collect())
}

/// `cost[k][g]`: angle between estimate `k` and ground truth `g`.
fn angle_costs(est: &Matrix, gt: &Matrix) -> Result<Vec<Vec<f64>>> {
    (0..est.cols())
        .map(|k| {
            (0..gt.cols())
                .map(|g| {
                    spectral_angle(est.col(k), gt.col(g)).ok_or(Error::ZeroSpectrum(
                        if norm2(est.col(k)) == 0.0 { k } else { g },
                    ))
                })
                .collect()
        })
        .collect()
}

fn assignment_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(k, &g)| cost[k][g]).sum()
}

fn exhaustive_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    fn search(
        cost: &[Vec<f64>],
        current: &mut Vec<usize>,
        used: &mut [bool],
        partial: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        let k = current.len();
        if k == cost.len() {
            if partial < best.0 {
                *best = (partial, current.clone());
            }
            return;
        }
        for g in 0..cost.len() {
            if !used[g] {
                used[g] = true;
                current.push(g);
                search(cost, current, used, partial + cost[k][g], best);
                current.pop();
                used[g] = false;
            }
        }
    }
    let n = cost.len();
    let mut best = (f64::INFINITY, (0..n).collect());
    search(
        cost,
        &mut Vec::with_capacity(n),
        &mut vec![false; n],
        0.0,
        &mut best,
    );
    best.1
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n³)). Returns `row → column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Pairs estimated endmembers with ground-truth ones so the total spectral
/// angle is minimal. Returns `permutation[k] = g`.
pub fn match_endmembers(est: &EndmemberMatrix, gt: &EndmemberMatrix) -> Result<Vec<usize>> {
    if est.endmembers() != gt.endmembers() || est.bands() != gt.bands() {
        return Err(Error::DimensionMismatch {
            op: "match_endmembers",
            left: est.matrix().shape(),
            right: gt.matrix().shape(),
        });
    }
    let cost = angle_costs(est.matrix(), gt.matrix())?;
    let perm = if cost.len() <= EXHAUSTIVE_MATCH_LIMIT {
        exhaustive_assignment(&cost)
    } else {
        hungarian(&cost)
    };
    debug_assert!(assignment_cost(&cost, &perm).is_finite());
    Ok(perm)
}

/// `order[g] = k`: which estimate lands in ground-truth slot `g`.
pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &g) in perm.iter().enumerate() {
        inv[g] = k;
    }
    inv
}

/// Full evaluation: align estimates to the ground truth, then score.
///
/// Ground-truth abundances whose columns stray from the simplex by more
/// than [`GT_RENORMALIZE_TOL`] are rescaled first (flagged in the result).
pub fn evaluate(
    gt_endmembers: &EndmemberMatrix,
    gt_abundances: &Matrix,
    est_endmembers: &EndmemberMatrix,
    est_abundances: &AbundanceMatrix,
    names: Option<&[String]>,
) -> Result<EvaluationResult> {
    let (gt_a, gt_renormalized) =
        AbundanceMatrix::renormalized(gt_abundances.clone(), GT_RENORMALIZE_TOL)?;
    let p = gt_endmembers.endmembers();
    if gt_a.endmembers() != p {
        return Err(Error::DimensionMismatch {
            op: "evaluate",
            left: gt_endmembers.matrix().shape(),
            right: gt_a.matrix().shape(),
        });
    }
    let permutation = match_endmembers(est_endmembers, gt_endmembers)?;
    let order = inverse_permutation(&permutation);
    let aligned_e = EndmemberMatrix::new(est_endmembers.matrix().select_columns(&order))?;
    let aligned_a = AbundanceMatrix::new_unchecked(
        est_abundances
            .matrix()
            .transpose()
            .select_columns(&order)
            .transpose(),
    );
    let per_rmse = rmse_per_endmember(&gt_a, &aligned_a)?;
    let per_sad = sad_per_endmember(gt_endmembers, &aligned_e)?;
    let per_endmember = (0..p)
        .map(|i| EndmemberScore {
            name: names
                .and_then(|n| n.get(i).cloned())
                .unwrap_or_else(|| format!("#{i}")),
            rmse: per_rmse[i],
            sad: per_sad[i],
        })
        .collect();
    Ok(EvaluationResult {
        overall_rmse: rmse(&gt_a, &aligned_a)?,
        overall_sad: per_sad.iter().sum::<f64>() / p as f64,
        per_endmember,
        permutation,
        gt_renormalized,
    })
}
