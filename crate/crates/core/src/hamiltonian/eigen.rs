//! Cyclic complex Jacobi diagonalisation for small Hermitian matrices.
//!
//! Output conventions, relied on by level tracking and by anything that
//! compares runs bit-for-bit:
//! - eigenvalues ascending;
//! - inside an exactly degenerate subspace the basis diagonalises a caller
//!   supplied label operator (for the pair Hamiltonian: total `S_z`, ties
//!   split by ion 1's `S_z`);
//! - every eigenvector has its largest-magnitude component real and positive
//!   (first such component when several tie).

use serde::{Deserialize, Serialize};

use super::cmatrix::{inner, CMatrix, C64, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAG_TOL: f64 = 1e-13;
const HERMITIAN_TOL: f64 = 1e-9;
const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    /// Ascending eigenvalues (GHz).
    pub values: Vec<f64>,
    /// `vectors[k]` is the normalised eigenvector for `values[k]`.
    pub vectors: Vec<Vec<C64>>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V Λ V†`
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.dim();
        let mut h = CMatrix::zeros(n);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += v[i] * v[j].conj() * *lam;
                }
            }
        }
        h
    }
}

/// Diagonalise a Hermitian matrix. Degenerate subspaces keep whatever basis
/// the rotations produced (still deterministic).
pub fn eigensolve(h: &CMatrix) -> Result<EigenSystem> {
    solve(h, None)
}

/// Like [`eigensolve`], but fixes the basis of each degenerate subspace by
/// diagonalising `label` within it.
pub fn eigensolve_labeled(h: &CMatrix, label: &CMatrix) -> Result<EigenSystem> {
    assert_eq!(h.dim(), label.dim());
    solve(h, Some(label))
}

fn solve(h: &CMatrix, label: Option<&CMatrix>) -> Result<EigenSystem> {
    let n = h.dim();
    let norm = h.frobenius_norm();
    let defect = h.hermitian_defect();
    if !norm.is_finite() {
        return Err(Error::NotHermitian(f64::NAN));
    }
    if defect > HERMITIAN_TOL * norm {
        return Err(Error::NotHermitian(defect / norm));
    }
    let (diag, vecs) = jacobi(h)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(a.cmp(&b)));
    let mut values: Vec<f64> = order.iter().map(|&k| diag[k]).collect();
    let mut vectors: Vec<Vec<C64>> = order
        .iter()
        .map(|&k| (0..n).map(|r| vecs[(r, k)]).collect())
        .collect();

    if let Some(label) = label {
        let tol = DEGENERACY_TOL * norm.max(1.0);
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && values[end] - values[end - 1] <= tol {
                end += 1;
            }
            if end - start > 1 {
                relabel_block(&mut values[start..end], &mut vectors[start..end], label)?;
            }
            start = end;
        }
    }

    for v in vectors.iter_mut() {
        fix_phase(v);
    }
    Ok(EigenSystem { values, vectors })
}

/// Rotate a degenerate block onto eigenvectors of `label`, ordered by
/// ascending label eigenvalue. Energies in the block are replaced by their
/// mean so that the block stays internally sorted.
fn relabel_block(values: &mut [f64], vectors: &mut [Vec<C64>], label: &CMatrix) -> Result<()> {
    let k = vectors.len();
    let mut m = CMatrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = label.expectation(&vectors[i], &vectors[j]);
        }
    }
    let (d, u) = jacobi(&m)?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let dim = vectors[0].len();
    let rotated: Vec<Vec<C64>> = order
        .iter()
        .map(|&c| {
            let mut v = vec![ZERO; dim];
            for (i, old) in vectors.iter().enumerate() {
                let coeff = u[(i, c)];
                for (t, o) in v.iter_mut().zip(old) {
                    *t += o * coeff;
                }
            }
            v
        })
        .collect();
    let mean = values.iter().sum::<f64>() / k as f64;
    for v in values.iter_mut() {
        *v = mean;
    }
    vectors.clone_from_slice(&rotated);
    Ok(())
}

fn fix_phase(v: &mut [C64]) {
    let max = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let Some(k) = v.iter().position(|c| c.norm() >= max * (1.0 - 1e-9)) else {
        return;
    };
    let phase = v[k].conj() / v[k].norm();
    for c in v.iter_mut() {
        *c *= phase;
    }
    v[k] = C64::new(v[k].norm(), 0.0);
}

/// Raw Jacobi iteration: returns the (unsorted) diagonal and the unitary
/// whose columns are the eigenvectors.
fn jacobi(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = h.dim();
    let mut a = h.clone();
    // symmetrise away round-off so the rotations see an exactly Hermitian input
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut v = CMatrix::identity(n);
    let norm = a.frobenius_norm();
    let tol = OFF_DIAG_TOL * norm;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= tol || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > tol {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }
    Ok(((0..n).map(|i| a[(i, i)].re).collect(), v))
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// One complex Jacobi rotation annihilating `a[p][q]`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let abs = apq.norm();
    if abs == 0.0 {
        return;
    }
    let phase = apq / abs;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * abs);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]] on the (p, q) plane
    let gpp = C64::new(c, 0.0);
    let gpq = C64::new(s, 0.0);
    let gqp = phase.conj() * -s;
    let gqq = phase.conj() * c;

    let n = a.dim();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * gpp + akq * gqp;
        a[(k, q)] = akp * gpq + akq * gqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
        a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * gpp + vkq * gqp;
        v[(k, q)] = vkp * gpq + vkq * gqq;
    }
}

/// Largest `|⟨v_i|v_j⟩ − δ_ij|` over all pairs.
pub fn orthonormality_defect(vectors: &[Vec<C64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((inner(a, b) - C64::new(target, 0.0)).norm());
        }
    }
    worst
}
