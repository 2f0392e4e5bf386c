//! Block-tridiagonal (block-Jacobi) operators
//! `(H Ψ)_n = D_{n+s} Ψ_{n+s} + D_n Ψ_{n-s} + Q_n Ψ_n` on the half line.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::seeds::ScalarChain;
use crate::smallmat::{self, hermitian_defect, max_norm, CVector, SmallMatrix};

/// Largest `k·N` accepted by [`section_eigenvalues`].
pub const SECTION_SIZE_LIMIT: usize = 1200;

#[derive(Debug, Clone)]
pub struct BlockJacobiOperator {
    k: usize,
    step: usize,
    d: Vec<SmallMatrix>,
    q: Vec<SmallMatrix>,
}

impl BlockJacobiOperator {
    /// Materialize coefficients `n = 0..len` from `f(n) = (D_n, Q_n)`.
    ///
    /// `D_n` is replaced by zero for `n < step`. Blocks must be Hermitian.
    pub fn from_fn(k: usize, step: usize, len: usize, f: impl Fn(usize) -> (SmallMatrix, SmallMatrix)) -> Result<Self> {
        let mut d = Vec::with_capacity(len);
        let mut q = Vec::with_capacity(len);
        for n in 0..len {
            let (dn, qn) = f(n);
            for block in [&dn, &qn] {
                if block.nrows() != k || block.ncols() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: block.nrows(),
                    });
                }
                let defect = hermitian_defect(block);
                if defect > smallmat::HERMITIAN_TOL * max_norm(block).max(1.0) {
                    return Err(Error::NotHermitian { defect });
                }
            }
            d.push(if n < step { smallmat::zeros(k) } else { dn });
            q.push(qn);
        }
        Ok(BlockJacobiOperator { k, step, d, q })
    }

    /// Blocks with no Hermiticity requirement, e.g. transformed coefficients
    /// that are only checked after the fact.
    pub fn from_blocks_unchecked(step: usize, d: Vec<SmallMatrix>, q: Vec<SmallMatrix>) -> Self {
        assert_eq!(d.len(), q.len());
        let k = q.first().map_or(0, |m| m.nrows());
        BlockJacobiOperator { k, step, d, q }
    }

    /// `D_n = d_n I_k`, `Q_n = q_n I_k`.
    pub fn from_scalar_chain(chain: &ScalarChain, k: usize, len: usize) -> Self {
        let d = (0..len).map(|n| smallmat::scalar(k, chain.d(n))).collect();
        let q = (0..len).map(|n| smallmat::scalar(k, chain.q(n))).collect();
        BlockJacobiOperator {
            k,
            step: chain.step(),
            d,
            q,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Number of materialized sites.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn d(&self, n: usize) -> &SmallMatrix {
        &self.d[n]
    }

    pub fn q(&self, n: usize) -> &SmallMatrix {
        &self.q[n]
    }

    pub fn d_blocks(&self) -> &[SmallMatrix] {
        &self.d
    }

    pub fn q_blocks(&self) -> &[SmallMatrix] {
        &self.q
    }

    /// Step-1 operator on the sites `n = step*m + offset`.
    pub fn subchain(&self, offset: usize) -> BlockJacobiOperator {
        assert!(offset < self.step);
        let sites: Vec<usize> = (offset..self.len()).step_by(self.step).collect();
        let mut d: Vec<SmallMatrix> = sites.iter().map(|&n| self.d[n].clone()).collect();
        if let Some(first) = d.first_mut() {
            *first = smallmat::zeros(self.k);
        }
        let q = sites.iter().map(|&n| self.q[n].clone()).collect();
        BlockJacobiOperator {
            k: self.k,
            step: 1,
            d,
            q,
        }
    }

    /// `(HΨ)_n` with out-of-range neighbours treated as zero.
    pub fn apply(&self, psi: &StateSequence, n: usize) -> Result<CVector> {
        self.check_dim(psi)?;
        let s = self.step;
        let mut out = &self.q[n] * psi.at(n);
        if n + s < self.len() {
            out += &self.d[n + s] * psi.at(n + s);
        }
        if n >= s {
            out += &self.d[n] * psi.at(n - s);
        }
        Ok(out)
    }

    /// `HΨ` on the support of `psi`, truncated to the materialized sites.
    pub fn apply_all(&self, psi: &StateSequence) -> Result<StateSequence> {
        self.check_dim(psi)?;
        let len = psi.len().min(self.len());
        let values = (0..len).map(|n| self.apply(psi, n)).collect::<Result<Vec<_>>>()?;
        Ok(StateSequence::new(self.k, values))
    }

    fn check_dim(&self, psi: &StateSequence) -> Result<()> {
        if psi.k() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                found: psi.k(),
            });
        }
        Ok(())
    }

    /// Dense `kN × kN` section over sites `0..n_blocks`. Boundary rows drop the
    /// neighbour that falls outside the section.
    pub fn finite_section(&self, n_blocks: usize) -> FiniteSection {
        let n_blocks = n_blocks.min(self.len());
        let k = self.k;
        let s = self.step;
        let mut dense = SmallMatrix::zeros(k * n_blocks, k * n_blocks);
        for n in 0..n_blocks {
            dense.view_mut((k * n, k * n), (k, k)).copy_from(&self.q[n]);
            if n + s < n_blocks {
                dense.view_mut((k * n, k * (n + s)), (k, k)).copy_from(&self.d[n + s]);
                dense
                    .view_mut((k * (n + s), k * n), (k, k))
                    .copy_from(&self.d[n + s].adjoint());
            }
        }
        FiniteSection { n_blocks, k, dense }
    }
}

/// Vector-valued sequence `Ψ_n ∈ C^k` on `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    k: usize,
    values: Vec<CVector>,
    /// Energy (or factorization energy) the sequence belongs to, if any.
    pub label: Option<f64>,
}

impl StateSequence {
    pub fn new(k: usize, values: Vec<CVector>) -> Self {
        debug_assert!(values.iter().all(|v| v.len() == k));
        StateSequence { k, values, label: None }
    }

    pub fn zeros(k: usize, len: usize) -> Self {
        StateSequence::new(k, vec![CVector::zeros(k); len])
    }

    /// Unit vector `e_alpha` at site `n`.
    pub fn basis(k: usize, len: usize, n: usize, alpha: usize) -> Self {
        let mut s = StateSequence::zeros(k, len);
        s.values[n][alpha] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn with_label(mut self, label: f64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[CVector] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [CVector] {
        &mut self.values
    }

    pub fn get(&self, n: usize) -> Option<&CVector> {
        self.values.get(n)
    }

    /// Value at `n`, zero outside the support.
    pub fn at(&self, n: usize) -> CVector {
        self.values.get(n).cloned().unwrap_or_else(|| CVector::zeros(self.k))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }

    /// Flatten into one `k·len` vector, site-major.
    pub fn stacked(&self) -> CVector {
        CVector::from_iterator(self.k * self.len(), self.values.iter().flat_map(|v| v.iter().copied()))
    }

    pub fn from_stacked(k: usize, v: &CVector) -> Self {
        let values = v.as_slice().chunks(k).map(CVector::from_column_slice).collect();
        StateSequence::new(k, values)
    }
}

/// `<Ψ|Φ> = Σ_n Ψ_n† Φ_n` over the common support.
pub fn inner(psi: &StateSequence, phi: &StateSequence) -> Result<Complex64> {
    if psi.k() != phi.k() {
        return Err(Error::DimensionMismatch {
            expected: psi.k(),
            found: phi.k(),
        });
    }
    Ok(psi.values().iter().zip(phi.values()).map(|(a, b)| a.dotc(b)).sum())
}

#[derive(Debug, Clone)]
pub struct FiniteSection {
    pub n_blocks: usize,
    pub k: usize,
    pub dense: SmallMatrix,
}

impl FiniteSection {
    /// Largest entry coupling sites of different parity. Zero for any step-2
    /// operator.
    pub fn parity_coupling(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dense.nrows() {
            for j in 0..self.dense.ncols() {
                if (i / self.k) % 2 != (j / self.k) % 2 {
                    worst = worst.max(self.dense[(i, j)].norm());
                }
            }
        }
        worst
    }
}

/// Eigenvalues of a finite section, ascending. Exploratory: truncation adds
/// boundary modes that are not part of the half-line spectrum.
pub fn section_eigenvalues(sec: &FiniteSection) -> Result<Vec<f64>> {
    let size = sec.dense.nrows();
    if size > SECTION_SIZE_LIMIT {
        return Err(Error::SizeLimit {
            size,
            limit: SECTION_SIZE_LIMIT,
        });
    }
    Ok(smallmat::hermitian_eigen(&sec.dense)?.values)
}
