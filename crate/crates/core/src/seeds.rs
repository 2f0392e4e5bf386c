//! Scalar seed solutions of three-term recurrences.
//!
//! The free-particle chain in the oscillator basis is solved by normalized
//! Hermite values `u_n = (n! 2^n)^{-1/2} H_n(sqrt(2 lambda))`. For `lambda < 0`
//! the argument is purely imaginary, so `u_n` is real for even `n` and purely
//! imaginary for odd `n`. [`SeedValue`] carries that flag explicitly so that
//! ratios of same-parity values come out exactly real.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn offset(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn of(n: usize) -> Self {
        if n.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Full index of the `m`-th site of this parity subchain.
    pub fn site(self, m: usize) -> usize {
        2 * m + self.offset()
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parity::Even => f.write_str("even"),
            Parity::Odd => f.write_str("odd"),
        }
    }
}

type Coefficient = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Scalar three-term recurrence `d_{n+s} u_{n+s} + d_n u_{n-s} + q_n u_n = lambda u_n`.
///
/// `d_n` is forced to zero for `n < step`, which removes the `u_{n-s}` term at
/// the left edge of the half line.
#[derive(Clone)]
pub struct ScalarChain {
    d: Coefficient,
    q: Coefficient,
    step: usize,
}

impl fmt::Debug for ScalarChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarChain")
            .field("step", &self.step)
            .field("d[0..4]", &(0..4).map(|n| self.d(n)).collect::<Vec<_>>())
            .field("q[0..4]", &(0..4).map(|n| self.q(n)).collect::<Vec<_>>())
            .finish()
    }
}

impl ScalarChain {
    pub fn new(
        step: usize,
        d: impl Fn(usize) -> f64 + Send + Sync + 'static,
        q: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(step == 1 || step == 2, "step must be 1 or 2");
        ScalarChain {
            d: Arc::new(d),
            q: Arc::new(q),
            step,
        }
    }

    /// `p^2` in the oscillator basis: `d_n = sqrt(n(n-1))/4`, `q_n = n/2 + 1/4`, step 2.
    pub fn free_particle() -> Self {
        ScalarChain::new(2, free_d, free_q)
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn d(&self, n: usize) -> f64 {
        if n < self.step {
            0.0
        } else {
            (self.d)(n)
        }
    }

    pub fn q(&self, n: usize) -> f64 {
        (self.q)(n)
    }

    /// Step-1 chain on the sites `n = step*m + offset`.
    pub fn subchain(&self, offset: usize) -> ScalarChain {
        assert!(offset < self.step, "offset must be below the step");
        let s = self.step;
        let d = self.d.clone();
        let q = self.q.clone();
        ScalarChain::new(
            1,
            move |m| if m == 0 { 0.0 } else { d(s * m + offset) },
            move |m| q(s * m + offset),
        )
    }
}

pub fn free_d(n: usize) -> f64 {
    let n = n as f64;
    (n * (n - 1.0)).max(0.0).sqrt() / 4.0
}

pub fn free_q(n: usize) -> f64 {
    n as f64 / 2.0 + 0.25
}

/// A value that is either real (`value`) or purely imaginary (`i * value`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedValue {
    pub value: f64,
    pub imaginary: bool,
}

impl SeedValue {
    pub fn real(value: f64) -> Self {
        SeedValue {
            value,
            imaginary: false,
        }
    }

    pub fn imag(value: f64) -> Self {
        SeedValue { value, imaginary: true }
    }

    pub fn to_complex(self) -> Complex64 {
        if self.imaginary {
            Complex64::new(0.0, self.value)
        } else {
            Complex64::new(self.value, 0.0)
        }
    }

    /// Exact real ratio `self / other` when both carry the same flag.
    pub fn real_ratio(self, other: SeedValue) -> Option<f64> {
        (self.imaginary == other.imaginary).then(|| self.value / other.value)
    }

    pub fn ratio(self, other: SeedValue) -> Complex64 {
        self.real_ratio(other)
            .map(|r| Complex64::new(r, 0.0))
            .unwrap_or_else(|| self.to_complex() / other.to_complex())
    }
}

/// Normalized Hermite values `(n! 2^n)^{-1/2} H_n(sqrt(2 lambda))` for `n = 0..=nmax`.
///
/// Uses `û_{n+1} = z sqrt(2/(n+1)) û_n - sqrt(n/(n+1)) û_{n-1}`. For
/// `lambda < 0` the substitution `û_n = i^n v_n` turns this into a recurrence
/// with positive coefficients, so `v_n > 0` for every `n`.
pub fn hermite_table(lambda: f64, nmax: usize) -> Result<Vec<SeedValue>> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidEnergy { lambda });
    }
    let mut out = Vec::with_capacity(nmax + 1);
    if lambda < 0.0 {
        let t = (-2.0 * lambda).sqrt();
        let (mut prev, mut cur) = (0.0_f64, 1.0_f64);
        for n in 0..=nmax {
            if !cur.is_finite() {
                return Err(Error::Overflow { n, lambda });
            }
            out.push(match n % 4 {
                0 => SeedValue::real(cur),
                1 => SeedValue::imag(cur),
                2 => SeedValue::real(-cur),
                _ => SeedValue::imag(-cur),
            });
            let nf = n as f64;
            let next = t * (2.0 / (nf + 1.0)).sqrt() * cur + (nf / (nf + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
        }
    } else {
        for (n, v) in normalized_real_hermite((2.0 * lambda).sqrt(), nmax)
            .into_iter()
            .enumerate()
        {
            if !v.is_finite() {
                return Err(Error::Overflow { n, lambda });
            }
            out.push(SeedValue::real(v));
        }
    }
    Ok(out)
}

fn normalized_real_hermite(z: f64, nmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    let (mut prev, mut cur) = (0.0, 1.0);
    for n in 0..=nmax {
        out.push(cur);
        let nf = n as f64;
        let next = z * (2.0 / (nf + 1.0)).sqrt() * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    out
}

/// Single normalized Hermite value; see [`hermite_table`].
pub fn normalized_hermite(n: usize, lambda: f64) -> Result<SeedValue> {
    Ok(hermite_table(lambda, n)?[n])
}

/// `psi_n(E) = 2 (n! 2^n sqrt(2 pi))^{-1/2} e^{-E} H_n(sqrt(2E))`, the regular
/// continuum solution of the free chain.
pub fn physical_state(n: usize, energy: f64) -> f64 {
    physical_states(energy, n)[n]
}

/// [`physical_state`] for `n = 0..=nmax`.
pub fn physical_states(energy: f64, nmax: usize) -> Vec<f64> {
    assert!(energy > 0.0, "physical states need E > 0");
    let norm = 2.0 * (2.0 * PI).powf(-0.25) * (-energy).exp();
    normalized_real_hermite((2.0 * energy).sqrt(), nmax)
        .into_iter()
        .map(|h| norm * h)
        .collect()
}

/// A scalar solution on one parity class of a chain, stored by subchain index
/// `m` (full index `n = step*m + offset`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSolution {
    pub lambda: f64,
    pub step: usize,
    pub offset: usize,
    values: Vec<SeedValue>,
}

impl SeedSolution {
    /// Normalized Hermite seed of the free-particle chain on the given parity,
    /// covering full indices up to `nmax`. Only `lambda < 0` is accepted.
    pub fn hermite(lambda: f64, parity: Parity, nmax: usize) -> Result<Self> {
        if !(lambda < 0.0) {
            return Err(Error::InvalidEnergy { lambda });
        }
        let values: Vec<SeedValue> = hermite_table(lambda, nmax)?
            .into_iter()
            .skip(parity.offset())
            .step_by(2)
            .collect();
        let seed = SeedSolution {
            lambda,
            step: 2,
            offset: parity.offset(),
            values,
        };
        seed.check_nodeless()?;
        Ok(seed)
    }

    /// Forward recursion of `chain` from `u_offset = 1` for `len` sites.
    pub fn from_recurrence(chain: &ScalarChain, lambda: f64, offset: usize, len: usize) -> Result<Self> {
        let s = chain.step();
        let mut values: Vec<f64> = Vec::with_capacity(len);
        for m in 0..len {
            let v = match m {
                0 => 1.0,
                _ => {
                    let n = s * (m - 1) + offset;
                    let prev = if m >= 2 { values[m - 2] } else { 0.0 };
                    ((lambda - chain.q(n)) * values[m - 1] - chain.d(n) * prev) / chain.d(n + s)
                }
            };
            if !v.is_finite() {
                return Err(Error::Overflow {
                    n: s * m + offset,
                    lambda,
                });
            }
            values.push(v);
        }
        Ok(SeedSolution {
            lambda,
            step: s,
            offset,
            values: values.into_iter().map(SeedValue::real).collect(),
        })
    }

    pub fn from_values(lambda: f64, step: usize, offset: usize, values: Vec<SeedValue>) -> Self {
        SeedSolution {
            lambda,
            step,
            offset,
            values,
        }
    }

    pub fn parity(&self) -> Option<Parity> {
        (self.step == 2).then(|| Parity::of(self.offset))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values by subchain index.
    pub fn chain_values(&self) -> &[SeedValue] {
        &self.values
    }

    /// Value at full index `n`, or `None` for the other parity or past the end.
    pub fn get(&self, n: usize) -> Option<SeedValue> {
        if n < self.offset || !(n - self.offset).is_multiple_of(self.step) {
            return None;
        }
        self.values.get((n - self.offset) / self.step).copied()
    }

    /// Real ratio `u_num / u_den` between two sites of this seed (full indices).
    pub fn ratio(&self, num: usize, den: usize) -> Option<f64> {
        self.get(num)?.real_ratio(self.get(den)?)
    }

    /// Index of the first vanishing value, if any.
    pub fn first_node(&self) -> Option<usize> {
        self.values
            .iter()
            .position(|v| v.value == 0.0)
            .map(|m| self.step * m + self.offset)
    }

    fn check_nodeless(&self) -> Result<()> {
        match self.first_node() {
            Some(index) => Err(Error::NodeFailure { index }),
            None => Ok(()),
        }
    }
}

/// `|d_{n+s}u_{n+s} + d_n u_{n-s} + (q_n - lambda) u_n| / max(1, |lambda u_n|)` at full index `n`.
///
/// Returns infinity when `u_{n+s}` is not available.
pub fn seed_residual(chain: &ScalarChain, seed: &SeedSolution, n: usize) -> f64 {
    let s = chain.step();
    let (Some(un), Some(up)) = (seed.get(n), seed.get(n + s)) else {
        return f64::INFINITY;
    };
    let down = if n >= s {
        seed.get(n - s).map_or(0.0, |v| v.value)
    } else {
        0.0
    };
    let lhs = chain.d(n + s) * up.value + chain.d(n) * down + (chain.q(n) - seed.lambda) * un.value;
    lhs.abs() / (seed.lambda * un.value).abs().max(1.0)
}

/// Same residual for a real sequence at energy `energy` (full indices).
pub fn sequence_residual(chain: &ScalarChain, values: &[f64], energy: f64, n: usize) -> f64 {
    let s = chain.step();
    if n + s >= values.len() {
        return f64::INFINITY;
    }
    let down = if n >= s { values[n - s] } else { 0.0 };
    let lhs = chain.d(n + s) * values[n + s] + chain.d(n) * down + (chain.q(n) - energy) * values[n];
    lhs.abs() / (energy * values[n]).abs().max(1.0)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    /// `H_n(i) = i^n h_n` with integer `h_{n+1} = 2 h_n + 2 n h_{n-1}`.
    fn hermite_at_i(nmax: usize) -> Vec<i128> {
        let mut h = vec![1i128, 2];
        for n in 1..nmax {
            h.push(2 * h[n] + 2 * n as i128 * h[n - 1]);
        }
        h
    }

    #[test]
    fn hermite_values_at_i() {
        assert_eq!(normalized_hermite(0, -0.5).unwrap(), SeedValue::real(1.0));
        assert_eq!(normalized_hermite(0, 3.0).unwrap(), SeedValue::real(1.0));
        let u2 = normalized_hermite(2, -0.5).unwrap();
        assert!(!u2.imaginary);
        assert!((u2.value + 3.0 / 2f64.sqrt()).abs() < 1e-14);
        let u4 = normalized_hermite(4, -0.5).unwrap();
        assert!((u4.value - 76.0 / 384f64.sqrt()).abs() < 1e-13);
        assert!((u4.value - 3.878_358_759_406_698_7).abs() < 1e-13);
        let u3 = normalized_hermite(3, -0.5).unwrap();
        assert!(u3.imaginary);
    }

    #[test]
    fn rejects_zero_energy() {
        assert!(matches!(hermite_table(0.0, 4), Err(Error::InvalidEnergy { .. })));
        assert!(matches!(
            SeedSolution::hermite(0.5, Parity::Even, 10),
            Err(Error::InvalidEnergy { .. })
        ));
    }

    #[test]
    fn ratios_match_exact_integers() {
        let h = hermite_at_i(34);
        let table = hermite_table(-0.5, 34).unwrap();
        for n in 0..=30 {
            // u_{n+2}/u_n = i^2 h_{n+2} / (h_n * 2 sqrt((n+1)(n+2)))
            let exact = -(h[n + 2] as f64) / (h[n] as f64) / (2.0 * (((n + 1) * (n + 2)) as f64).sqrt());
            let got = table[n + 2].real_ratio(table[n]).unwrap();
            assert!(((got - exact) / exact).abs() < 1e-12, "n = {n}: {got} vs {exact}");
        }
    }

    #[test]
    fn parity_flags_are_structural() {
        let table = hermite_table(-1.3, 200).unwrap();
        for (n, v) in table.iter().enumerate() {
            assert_eq!(v.imaginary, n % 2 == 1);
            assert!(v.value != 0.0);
        }
    }

    #[test]
    fn free_chain_residuals() {
        let chain = ScalarChain::free_particle();
        assert_eq!(chain.d(0), 0.0);
        assert_eq!(chain.d(1), 0.0);
        assert!((chain.d(2) - 0.353_553_390_593_273_8).abs() < 1e-15);
        let seed = SeedSolution::hermite(-0.5, Parity::Even, 40).unwrap();
        assert!(seed_residual(&chain, &seed, 0) <= 1e-12);
        assert!(seed_residual(&chain, &seed, 2) <= 1e-12);

        let mut values = seed.chain_values().to_vec();
        values[1].value += 1.0;
        let corrupted = SeedSolution::from_values(-0.5, 2, 0, values);
        assert!(seed_residual(&chain, &corrupted, 2) >= 0.1);
        assert_eq!(seed_residual(&chain, &seed, 40), f64::INFINITY);
    }

    #[test]
    fn physical_state_values() {
        let norm = 2.0 * (2.0 * PI).powf(-0.25);
        assert!((physical_state(0, 1.0) - norm * (-1f64).exp()).abs() < 1e-15);
        assert!((physical_state(0, 1.0) - 0.464_719_125_981_223_4).abs() < 1e-15);
        assert!((physical_state(0, 1e-12) - 1.263_237_555_492_129_4).abs() < 1e-11);
        let chain = ScalarChain::free_particle();
        let psi = physical_states(1.0, 300);
        for n in 0..=296 {
            assert!(sequence_residual(&chain, &psi, 1.0, n) <= 1e-10, "n = {n}");
        }
    }

    #[test]
    fn recurrence_seed_matches_hermite() {
        let chain = ScalarChain::free_particle();
        let h = SeedSolution::hermite(-0.5, Parity::Odd, 61).unwrap();
        let r = SeedSolution::from_recurrence(&chain, -0.5, 1, 31).unwrap();
        // same solution up to the normalization u_1
        let scale = h.get(1).unwrap().value;
        for m in 0..31 {
            let n = 2 * m + 1;
            let hv = h.get(n).unwrap();
            assert!(hv.imaginary);
            let rel = (hv.value / scale - r.get(n).unwrap().value) / r.get(n).unwrap().value;
            assert!(rel.abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn subchain_reindexes() {
        let chain = ScalarChain::free_particle();
        let odd = chain.subchain(1);
        assert_eq!(odd.step(), 1);
        assert_eq!(odd.d(0), 0.0);
        assert_eq!(odd.d(1), chain.d(3));
        assert_eq!(odd.q(2), chain.q(5));
    }
}
