//! Adaptive arithmetic coder over a finite alphabet.
//!
//! Used only to confirm that the reported index entropy is an achievable
//! code length; the schemes themselves never emit a bitstream.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeIndex;

const PRECISION: u32 = 32;
const WHOLE: u64 = 1 << PRECISION;
const HALF: u64 = WHOLE / 2;
const QUARTER: u64 = WHOLE / 4;
/// Frequencies are halved once their total reaches this.
const MAX_TOTAL: u32 = 1 << 16;

/// Laplace-smoothed symbol counts, updated after every symbol.
#[derive(Debug, Clone)]
struct AdaptiveModel {
    freq: Vec<u32>,
    total: u32,
}

impl AdaptiveModel {
    fn new(alphabet: usize) -> Self {
        Self {
            freq: vec![1; alphabet],
            total: alphabet as u32,
        }
    }

    fn range(&self, sym: usize) -> (u64, u64) {
        let lo: u32 = self.freq[..sym].iter().sum();
        (lo as u64, (lo + self.freq[sym]) as u64)
    }

    /// Symbol whose cumulative range contains `target`.
    fn find(&self, target: u64) -> usize {
        let mut acc = 0u64;
        for (s, &f) in self.freq.iter().enumerate() {
            acc += f as u64;
            if target < acc {
                return s;
            }
        }
        self.freq.len() - 1
    }

    fn update(&mut self, sym: usize) {
        self.freq[sym] += 1;
        self.total += 1;
        if self.total >= MAX_TOTAL {
            self.total = 0;
            for f in &mut self.freq {
                *f = (*f).div_ceil(2);
                self.total += *f;
            }
        }
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    filled: u8,
    bits: u64,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | bit as u8;
        self.filled += 1;
        self.bits += 1;
        if self.filled == 8 {
            self.bytes.push(self.acc);
            self.acc = 0;
            self.filled = 0;
        }
    }

    fn finish(mut self) -> (Vec<u8>, u64) {
        if self.filled > 0 {
            self.bytes.push(self.acc << (8 - self.filled));
        }
        (self.bytes, self.bits)
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    /// Next bit; zeros past the end.
    fn next(&mut self) -> u64 {
        let byte = self.pos / 8;
        let bit = match self.bytes.get(byte) {
            Some(b) => (b >> (7 - self.pos % 8)) & 1,
            None => 0,
        };
        self.pos += 1;
        bit as u64
    }
}

/// Encoded symbols plus the exact number of payload bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub bits: u64,
    pub count: usize,
    pub alphabet: usize,
}

impl Encoded {
    /// Code length in nats per symbol.
    pub fn nats_per_symbol(&self) -> f64 {
        self.bits as f64 * std::f64::consts::LN_2 / self.count.max(1) as f64
    }
}

pub fn encode(symbols: &[usize], alphabet: usize) -> Result<Encoded> {
    if alphabet == 0 || alphabet as u32 >= MAX_TOTAL / 2 {
        return Err(invalid(format!("alphabet size {alphabet} out of range")));
    }
    let mut model = AdaptiveModel::new(alphabet);
    let mut out = BitWriter::default();
    let (mut low, mut high) = (0u64, WHOLE - 1);
    let mut pending = 0u64;
    let emit = |out: &mut BitWriter, bit: bool, pending: &mut u64| {
        out.push(bit);
        for _ in 0..*pending {
            out.push(!bit);
        }
        *pending = 0;
    };
    for &s in symbols {
        if s >= alphabet {
            return Err(invalid(format!(
                "symbol {s} outside alphabet of size {alphabet}"
            )));
        }
        let (c_lo, c_hi) = model.range(s);
        let total = model.total as u64;
        let span = high - low + 1;
        high = low + span * c_hi / total - 1;
        low += span * c_lo / total;
        loop {
            if high < HALF {
                emit(&mut out, false, &mut pending);
            } else if low >= HALF {
                emit(&mut out, true, &mut pending);
                low -= HALF;
                high -= HALF;
            } else if low >= QUARTER && high < 3 * QUARTER {
                pending += 1;
                low -= QUARTER;
                high -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
        }
        model.update(s);
    }
    pending += 1;
    emit(&mut out, low >= QUARTER, &mut pending);
    let (bytes, bits) = out.finish();
    Ok(Encoded {
        bytes,
        bits,
        count: symbols.len(),
        alphabet,
    })
}

pub fn decode(enc: &Encoded) -> Result<Vec<usize>> {
    if enc.alphabet == 0 || enc.alphabet as u32 >= MAX_TOTAL / 2 {
        return Err(Error::CorruptStream(format!(
            "alphabet size {} out of range",
            enc.alphabet
        )));
    }
    let mut model = AdaptiveModel::new(enc.alphabet);
    let mut input = BitReader {
        bytes: &enc.bytes,
        pos: 0,
    };
    let (mut low, mut high) = (0u64, WHOLE - 1);
    let mut value = 0u64;
    for _ in 0..PRECISION {
        value = (value << 1) | input.next();
    }
    let mut out = Vec::with_capacity(enc.count);
    for _ in 0..enc.count {
        let total = model.total as u64;
        let span = high - low + 1;
        let target = ((value - low + 1) * total - 1) / span;
        let s = model.find(target);
        let (c_lo, c_hi) = model.range(s);
        high = low + span * c_hi / total - 1;
        low += span * c_lo / total;
        if value < low || value > high {
            return Err(Error::CorruptStream(
                "code value left the coding interval".into(),
            ));
        }
        loop {
            if high < HALF {
                // lower half: shift only
            } else if low >= HALF {
                low -= HALF;
                high -= HALF;
                value -= HALF;
            } else if low >= QUARTER && high < 3 * QUARTER {
                low -= QUARTER;
                high -= QUARTER;
                value -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
            value = (value << 1) | input.next();
        }
        model.update(s);
        out.push(s);
    }
    Ok(out)
}

/// Maps lattice indices onto a dense alphabet in sorted order. The returned
/// dictionary is side information the decoder must also hold.
pub fn index_alphabet(indices: &[LatticeIndex]) -> (Vec<LatticeIndex>, Vec<usize>) {
    let mut dict: BTreeMap<&LatticeIndex, usize> = indices.iter().map(|i| (i, 0)).collect();
    for (slot, v) in dict.values_mut().enumerate() {
        *v = slot;
    }
    let symbols = indices.iter().map(|i| dict[i]).collect();
    (dict.into_keys().cloned().collect(), symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecdq::ecdq_encode;
    use crate::lattice::Lattice;
    use crate::prob::{symbol_entropy, SourceModel};
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn round_trip_small() {
        let syms = vec![0, 1, 1, 2, 0, 0, 0, 3, 1];
        let enc = encode(&syms, 4).unwrap();
        assert_eq!(decode(&enc).unwrap(), syms);
        assert_eq!(
            decode(&encode(&[], 3).unwrap()).unwrap(),
            Vec::<usize>::new()
        );
        assert!(encode(&[5], 3).is_err());
    }

    #[test]
    fn code_length_tracks_index_entropy() {
        let lat = Lattice::scaled_integer(0.25, 1).unwrap();
        let model = SourceModel::standard_gaussian();
        let mut r = stream(21, 0);
        let z = lat.sample_dither(&mut r);
        let indices: Vec<LatticeIndex> = (0..100_000)
            .map(|_| {
                ecdq_encode(&lat, &z, &[model.sample_scalar(&mut r)])
                    .unwrap()
                    .indices
            })
            .collect();
        let (dict, syms) = index_alphabet(&indices);
        let enc = encode(&syms, dict.len()).unwrap();
        assert_eq!(decode(&enc).unwrap(), syms);
        let h = symbol_entropy(indices.iter(), false).unwrap();
        let len = enc.nats_per_symbol();
        assert!(
            len >= h - 1e-3 && len - h < 0.05,
            "code {len} vs entropy {h}"
        );
    }

    proptest! {
        #[test]
        fn round_trip_random(syms in proptest::collection::vec(0usize..7, 0..2000)) {
            let enc = encode(&syms, 7).unwrap();
            prop_assert_eq!(decode(&enc).unwrap(), syms);
        }

        #[test]
        fn round_trip_skewed(n in 1usize..20_000, seed in 0u64..1000) {
            // long runs of one symbol push the interval to its limits
            let syms: Vec<usize> = (0..n).map(|i| if (i as u64 * 2654435761 + seed).is_multiple_of(97) { 1 } else { 0 }).collect();
            let enc = encode(&syms, 2).unwrap();
            prop_assert_eq!(decode(&enc).unwrap(), syms);
        }
    }
}
