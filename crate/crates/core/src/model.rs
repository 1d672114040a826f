//! Square QAM constellations, the Gray bit map, the `±1` binary decomposition
//! of amplitude levels, and Rayleigh channel/noise generation for `r = Hx + n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64};

/// Largest supported `Q` (256-QAM per dimension pair is `Q = 4`).
pub const MAX_Q_ORDER: u32 = 8;

/// Square QAM with `2^Q` odd amplitude levels per real dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    q_order: u32,
    levels: Vec<f64>,
}

impl Constellation {
    pub fn new(q_order: u32) -> Result<Self> {
        if q_order == 0 || q_order > MAX_Q_ORDER {
            return Err(Error::InvalidParameter(format!(
                "Q must lie in 1..={MAX_Q_ORDER}, got {q_order}"
            )));
        }
        let m = 1i64 << q_order;
        let levels = (0..m).map(|i| (2 * i - (m - 1)) as f64).collect();
        Ok(Self { q_order, levels })
    }

    pub fn qpsk() -> Self {
        Self::new(1).unwrap()
    }

    pub fn q_order(&self) -> u32 {
        self.q_order
    }

    /// Ascending odd levels `-(2^Q-1), ..., 2^Q-1`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn max_level(&self) -> f64 {
        ((1u64 << self.q_order) - 1) as f64
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.q_order as usize
    }

    /// `E|s|^2 = 2(4^Q - 1)/3` for equiprobable points.
    pub fn symbol_energy(&self) -> f64 {
        2.0 * ((1u64 << (2 * self.q_order)) - 1) as f64 / 3.0
    }

    /// All `4^Q` points, real part major.
    pub fn points(&self) -> Vec<C64> {
        self.levels
            .iter()
            .flat_map(|&re| self.levels.iter().map(move |&im| C64::new(re, im)))
            .collect()
    }

    /// Level index (0 = most negative) of an exact amplitude, if valid.
    fn level_index(&self, value: f64) -> Option<usize> {
        let m = self.levels.len() as f64;
        let idx = (value + m - 1.0) / 2.0;
        (idx.fract() == 0.0 && idx >= 0.0 && idx < m).then_some(idx as usize)
    }

    pub fn contains(&self, s: C64) -> bool {
        self.level_index(s.re).is_some() && self.level_index(s.im).is_some()
    }

    fn amplitude_to_bits(&self, value: f64, out: &mut Vec<u8>) -> Result<()> {
        let idx = self.level_index(value).ok_or(Error::NotInConstellation {
            value,
            q_order: self.q_order,
        })?;
        let gray = idx ^ (idx >> 1);
        for b in (0..self.q_order).rev() {
            out.push(((gray >> b) & 1) as u8);
        }
        Ok(())
    }

    fn bits_to_amplitude(&self, bits: &[u8]) -> f64 {
        let gray = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        // inverse Gray code
        let mut idx = gray;
        let mut shift = gray >> 1;
        while shift != 0 {
            idx ^= shift;
            shift >>= 1;
        }
        self.levels[idx]
    }
}

/// Bits for a block of `U` symbols, `2Q` per symbol: `Q` for the real part
/// then `Q` for the imaginary part, most significant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBlock {
    bits: Vec<u8>,
}

impl BitBlock {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidParameter(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self { bits })
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn hamming_distance(&self, other: &BitBlock) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

/// Per-dimension Gray mapping: bit pattern `0...0` is the most negative level.
pub fn bits_to_symbols(bits: &BitBlock, c: &Constellation) -> Result<Vec<C64>> {
    let per = c.bits_per_symbol();
    if !bits.len().is_multiple_of(per) {
        return Err(Error::DimensionMismatch {
            context: "bit block (multiple of 2Q)",
            expected: (bits.len() / per + 1) * per,
            actual: bits.len(),
        });
    }
    let q = c.q_order() as usize;
    Ok(bits
        .as_slice()
        .chunks_exact(per)
        .map(|chunk| C64::new(c.bits_to_amplitude(&chunk[..q]), c.bits_to_amplitude(&chunk[q..])))
        .collect())
}

pub fn symbols_to_bits(s: &[C64], c: &Constellation) -> Result<BitBlock> {
    let mut bits = Vec::with_capacity(s.len() * c.bits_per_symbol());
    for z in s {
        c.amplitude_to_bits(z.re, &mut bits)?;
        c.amplitude_to_bits(z.im, &mut bits)?;
    }
    Ok(BitBlock { bits })
}

/// `x = sum_q 2^(q-1) x_q` with every real and imaginary entry of `x_q` in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDecomposition {
    parts: Vec<Vec<C64>>,
}

impl BinaryDecomposition {
    /// `parts[q-1]` is `x_q`.
    pub fn parts(&self) -> &[Vec<C64>] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<Vec<C64>> {
        self.parts
    }
}

fn decompose_amplitude(v: f64, q_order: u32, c: &Constellation) -> Result<Vec<f64>> {
    let idx = c.level_index(v).ok_or(Error::NotInConstellation { value: v, q_order })?;
    // v = 2*idx - (2^Q - 1) = sum_q 2^(q-1) (2 b_q - 1), with b_q the bits of idx
    Ok((0..q_order).map(|b| if (idx >> b) & 1 == 1 { 1.0 } else { -1.0 }).collect())
}

pub fn decompose(x: &[C64], q_order: u32) -> Result<BinaryDecomposition> {
    let c = Constellation::new(q_order)?;
    let q = q_order as usize;
    let mut parts = vec![Vec::with_capacity(x.len()); q];
    for z in x {
        let re = decompose_amplitude(z.re, q_order, &c)?;
        let im = decompose_amplitude(z.im, q_order, &c)?;
        for (part, (a, b)) in parts.iter_mut().zip(re.into_iter().zip(im)) {
            part.push(C64::new(a, b));
        }
    }
    Ok(BinaryDecomposition { parts })
}

/// `sum_q 2^(q-1) parts[q-1]`. Exact for every valid decomposition since all
/// intermediate values are small integers.
pub fn recompose(d: &BinaryDecomposition) -> Vec<C64> {
    recompose_parts(&d.parts)
}

pub(crate) fn recompose_parts(parts: &[Vec<C64>]) -> Vec<C64> {
    let n = parts.first().map_or(0, Vec::len);
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut weight = 1.0;
    for part in parts {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p * weight;
        }
        weight *= 2.0;
    }
    out
}

/// Nearest odd level in `[-(2^Q-1), 2^Q-1]`; even-integer ties go away from
/// zero, with `0` mapping to `+1`.
pub fn slice_amplitude(v: f64, max_level: f64) -> f64 {
    let mag = 2.0 * (v.abs() / 2.0).floor() + 1.0;
    let s = if v < 0.0 { -mag } else { mag };
    s.clamp(-max_level, max_level)
}

pub fn hard_slice(v: &[C64], c: &Constellation) -> Vec<C64> {
    let m = c.max_level();
    v.iter()
        .map(|z| C64::new(slice_amplitude(z.re, m), slice_amplitude(z.im, m)))
        .collect()
}

/// Marker SNR value requesting a noiseless instance.
pub const NOISELESS_SNR_DB: f64 = f64::INFINITY;

/// Per-entry noise variance `N0 = U * Es / 10^(snr/10)`, making the average
/// receive SNR `E||Hx||^2 / E||n||^2` equal to `snr_db` for CN(0,1) channels.
pub fn noise_variance(users: usize, c: &Constellation, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        users as f64 * c.symbol_energy() / 10f64.powf(snr_db / 10.0)
    }
}

/// One realization of `r = Hx + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionInstance {
    pub h: ComplexMatrix,
    pub bits: BitBlock,
    pub x: Vec<C64>,
    pub n: Vec<C64>,
    pub r: Vec<C64>,
    pub snr_db: f64,
    pub noise_var: f64,
    pub seed: u64,
}

fn complex_gaussian(rng: &mut ChaCha8Rng, std_per_dim: f64) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * std_per_dim, im * std_per_dim)
}

/// Draws `H ~ CN(0,1)` entries, uniform bits, and `n ~ CN(0, N0)`, in that
/// order, from a generator seeded with `seed`.
///
/// The unit-variance noise draw is scaled after the fact, so instances with
/// the same seed share `H`, `x` and the noise direction across SNR values.
pub fn generate_instance(
    b: usize,
    u: usize,
    c: &Constellation,
    snr_db: f64,
    seed: u64,
) -> Result<TransmissionInstance> {
    if u == 0 || b == 0 {
        return Err(Error::InvalidParameter("B and U must be positive".into()));
    }
    if b < u {
        return Err(Error::InvalidParameter(format!(
            "need B >= U (base-station antennas at least the number of users), got B={b}, U={u}"
        )));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("SNR must be finite or the noiseless marker, got {snr_db}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let h = ComplexMatrix::from_fn(b, u, |_, _| complex_gaussian(&mut rng, half));
    let bits = BitBlock {
        bits: (0..u * c.bits_per_symbol()).map(|_| rng.random_range(0..2u8)).collect(),
    };
    let x = bits_to_symbols(&bits, c)?;
    let noise_var = noise_variance(u, c, snr_db);
    let scale = (noise_var / 2.0).sqrt();
    let n: Vec<C64> = (0..b).map(|_| complex_gaussian(&mut rng, 1.0) * scale).collect();
    let hx = h.mul_vec(&x);
    let r = hx.iter().zip(&n).map(|(a, e)| a + e).collect();
    Ok(TransmissionInstance {
        h,
        bits,
        x,
        n,
        r,
        snr_db,
        noise_var,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constellation_levels_and_energy() {
        for (q, energy) in [(1, 2.0), (2, 10.0), (3, 42.0)] {
            let con = Constellation::new(q).unwrap();
            let levels = con.levels();
            assert_eq!(levels.len(), 1 << q);
            assert!(levels.iter().all(|l| (l.abs() as i64) % 2 == 1));
            assert!(levels.iter().zip(levels.iter().rev()).all(|(a, b)| a == &-b));
            assert_eq!(con.symbol_energy(), energy);
        }
        assert!(Constellation::new(0).is_err());
    }

    #[test]
    fn qpsk_bit_map() {
        let con = Constellation::qpsk();
        let s = bits_to_symbols(&BitBlock::new(vec![0, 0]).unwrap(), &con).unwrap();
        assert_eq!(s, vec![c(-1.0, -1.0)]);
        let b = symbols_to_bits(&[c(1.0, 1.0)], &con).unwrap();
        assert_eq!(b.as_slice(), &[1, 1]);
    }

    #[test]
    fn sixteen_qam_gray_enumeration() {
        let con = Constellation::new(2).unwrap();
        let mut seen = Vec::new();
        for pattern in 0u8..16 {
            let bits: Vec<u8> = (0..4).rev().map(|b| (pattern >> b) & 1).collect();
            let s = bits_to_symbols(&BitBlock::new(bits.clone()).unwrap(), &con).unwrap()[0];
            assert!(con.contains(s));
            assert!(!seen.contains(&s));
            seen.push(s);
        }
        // adjacent amplitude levels differ in exactly one bit per dimension
        for w in con.levels().windows(2) {
            let a = symbols_to_bits(&[c(w[0], 1.0)], &con).unwrap();
            let b = symbols_to_bits(&[c(w[1], 1.0)], &con).unwrap();
            assert_eq!(a.hamming_distance(&b), 1);
        }
        // 3 - 3j: real index 3 -> gray 10, imag index 0 -> gray 00
        assert_eq!(symbols_to_bits(&[c(3.0, -3.0)], &con).unwrap().as_slice(), &[1, 0, 0, 0]);
    }

    #[test]
    fn bit_errors() {
        let con = Constellation::new(2).unwrap();
        assert!(bits_to_symbols(&BitBlock::new(vec![0, 1, 0]).unwrap(), &con).is_err());
        assert!(symbols_to_bits(&[c(2.0, 1.0)], &con).is_err());
        assert!(symbols_to_bits(&[c(5.0, 1.0)], &con).is_err());
        assert!(BitBlock::new(vec![2]).is_err());
    }

    #[test]
    fn decompose_examples() {
        let d = decompose(&[c(1.0, -1.0)], 1).unwrap();
        assert_eq!(d.parts(), &[vec![c(1.0, -1.0)]]);
        let d = decompose(&[c(3.0, 1.0)], 2).unwrap();
        assert_eq!(d.parts(), &[vec![c(1.0, -1.0)], vec![c(1.0, 1.0)]]);
        assert_eq!(recompose(&d), vec![c(3.0, 1.0)]);
        assert!(decompose(&[c(2.0, 1.0)], 2).is_err());
        assert!(decompose(&[c(5.0, 1.0)], 2).is_err());
    }

    #[test]
    fn decomposition_is_unique_by_enumeration() {
        // every +-1 assignment of (x1, x2, x3) hits a distinct level
        for q in 1..=3u32 {
            let mut hits = std::collections::BTreeMap::new();
            for mask in 0..(1u32 << q) {
                let v: i64 = (0..q).map(|b| (1i64 << b) * if (mask >> b) & 1 == 1 { 1 } else { -1 }).sum();
                *hits.entry(v).or_insert(0) += 1;
            }
            assert_eq!(hits.len(), 1 << q);
            assert!(hits.values().all(|&n| n == 1));
        }
    }

    #[test]
    fn slicing() {
        let con = Constellation::new(2).unwrap();
        assert_eq!(hard_slice(&[c(2.6, -0.2)], &con), vec![c(3.0, -1.0)]);
        assert_eq!(hard_slice(&[c(0.0, 0.0)], &Constellation::qpsk()), vec![c(1.0, 1.0)]);
        assert_eq!(hard_slice(&[c(2.0, -2.0)], &con), vec![c(3.0, -3.0)]);
        assert_eq!(hard_slice(&[c(9.0, -7.5)], &con), vec![c(3.0, -3.0)]);
        let pts = con.points();
        assert_eq!(hard_slice(&pts, &con), pts);
    }

    #[test]
    fn noiseless_instance() {
        let con = Constellation::new(2).unwrap();
        let inst = generate_instance(6, 4, &con, NOISELESS_SNR_DB, 9).unwrap();
        assert!(inst.n.iter().all(|z| *z == c(0.0, 0.0)));
        assert_eq!(inst.r, inst.h.mul_vec(&inst.x));
        assert_eq!(symbols_to_bits(&inst.x, &con).unwrap(), inst.bits);
    }

    #[test]
    fn instance_is_deterministic_and_shares_draws_across_snr() {
        let con = Constellation::qpsk();
        let a = generate_instance(8, 4, &con, 5.0, 42).unwrap();
        let b = generate_instance(8, 4, &con, 5.0, 42).unwrap();
        assert_eq!(a, b);
        let hi = generate_instance(8, 4, &con, 15.0, 42).unwrap();
        assert_eq!(a.h, hi.h);
        assert_eq!(a.x, hi.x);
        let other = generate_instance(8, 4, &con, 5.0, 43).unwrap();
        assert_ne!(a.h, other.h);
    }

    #[test]
    fn instance_rejects_bad_dimensions() {
        let con = Constellation::qpsk();
        assert!(generate_instance(2, 4, &con, 10.0, 0).is_err());
        assert!(generate_instance(0, 0, &con, 10.0, 0).is_err());
        assert!(generate_instance(4, 2, &con, f64::NAN, 0).is_err());
    }
}
