//! Bitset masks over the token vocabulary or the class vocabulary.

use std::fmt;

/// Which vocabulary a [`Mask`] ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskDomain {
    Tokens,
    Classes,
}

impl MaskDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskDomain::Tokens => "token",
            MaskDomain::Classes => "class",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    domain: MaskDomain,
    len: usize,
    words: Vec<u64>,
}

impl Mask {
    pub fn empty(domain: MaskDomain, len: usize) -> Self {
        Self {
            domain,
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(domain: MaskDomain, len: usize) -> Self {
        let mut m = Self::empty(domain, len);
        for i in 0..len {
            m.set(i, true);
        }
        m
    }

    pub fn from_fn(domain: MaskDomain, len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut m = Self::empty(domain, len);
        for i in 0..len {
            if f(i) {
                m.words[i / 64] |= 1 << (i % 64);
            }
        }
        m
    }

    pub fn domain(&self) -> MaskDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn none(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    /// Positions where the two masks differ.
    pub fn diff<'a>(&'a self, other: &'a Mask) -> impl Iterator<Item = usize> + 'a {
        assert_eq!(self.len, other.len);
        (0..self.len).filter(move |&i| self.get(i) != other.get(i))
    }

    /// Little-endian hex of the packed bits (bit 0 of byte 0 is index 0).
    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = self
            .words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(self.len.div_ceil(8))
            .collect();
        hex::encode(bytes)
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask<{}>[{}/{}: ", self.domain.as_str(), self.count_ones(), self.len)?;
        f.debug_list().entries(self.ones().take(32)).finish()?;
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_get_count() {
        let mut m = Mask::empty(MaskDomain::Tokens, 130);
        m.set(0, true);
        m.set(129, true);
        assert!(m.get(129) && !m.get(128));
        assert_eq!(m.count_ones(), 2);
        assert_eq!(m.ones().collect::<Vec<_>>(), vec![0, 129]);
        m.set(0, false);
        assert_eq!(m.count_ones(), 1);
    }

    #[test]
    fn full_mask_has_no_stray_bits() {
        let m = Mask::full(MaskDomain::Classes, 70);
        assert_eq!(m.count_ones(), 70);
        assert_eq!(m.to_hex().len(), 18);
    }

    proptest! {
        #[test]
        fn ones_round_trip(bits in prop::collection::vec(any::<bool>(), 0..200)) {
            let m = Mask::from_fn(MaskDomain::Tokens, bits.len(), |i| bits[i]);
            let ones: Vec<usize> = m.ones().collect();
            let expect: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
            prop_assert_eq!(ones, expect);
        }
    }
}
