//! Token equivalence classes and their on-disk cache.
//!
//! `c` maps each token id to a class id and `r` maps each class id to its
//! representative token. Tokens share a class exactly when their
//! displacements are equal; empty tokens, dead tokens (empty displacement),
//! budget fallbacks and specials are handled by [`ClassKind`].
//!
//! Cache layout, all integers little-endian:
//!
//! ```text
//! magic   b"CFGZIPC\0"
//! version u32
//! grammar digest [u8; 32]
//! vocab digest   [u8; 32]
//! |T| u32, |E| u32
//! c     u32 × |T|
//! r     u32 × |E|
//! kinds u8  × |E|
//! SHA-256 of everything above
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::displacement::{Displacement, TokenDisplacement};
use crate::error::{CacheError, TableError};
use crate::grammar::Cfg;
use crate::mask::{Mask, MaskDomain};
use crate::vocab::{sha256, Digest, Vocabulary};

pub const CACHE_MAGIC: &[u8; 8] = b"CFGZIPC\0";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 32 + 32 + 4 + 4;

/// How a class's mask bit is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ClassKind {
    /// Non-empty displacement; ask the engine about the representative.
    Grammar = 0,
    /// Empty displacement; never valid.
    Dead = 1,
    /// Tokens with no bytes; always valid, never advance the state.
    Empty = 2,
    /// Search budget exceeded; a singleton checked on its own.
    Fallback = 3,
    /// Special token; valid iff the consumed text is complete.
    Special = 4,
}

impl ClassKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => ClassKind::Grammar,
            1 => ClassKind::Dead,
            2 => ClassKind::Empty,
            3 => ClassKind::Fallback,
            4 => ClassKind::Special,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassKind::Grammar => "grammar",
            ClassKind::Dead => "dead",
            ClassKind::Empty => "empty",
            ClassKind::Fallback => "fallback",
            ClassKind::Special => "special",
        }
    }
}

/// Digest identifying a grammar: SHA-256 of its canonical rendering.
pub fn grammar_digest(g: &Cfg) -> Digest {
    sha256(g.render().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    c: Vec<u32>,
    r: Vec<u32>,
    kinds: Vec<ClassKind>,
    grammar_digest: Digest,
    vocab_digest: Digest,
}

#[derive(Hash, PartialEq, Eq)]
enum Key<'a> {
    Grammar(&'a Displacement),
    Dead,
    Empty,
    Single(u32),
}

impl ClassTable {
    /// Groups tokens by displacement.
    ///
    /// # Panics
    /// If `disps` and `vocab` differ in length.
    pub fn build(vocab: &Vocabulary, disps: &[TokenDisplacement], grammar_digest: Digest) -> Self {
        assert_eq!(vocab.len(), disps.len(), "one displacement per token");
        let mut ids: HashMap<Key<'_>, u32> = HashMap::new();
        let mut c = Vec::with_capacity(vocab.len());
        let mut r: Vec<u32> = Vec::new();
        let mut kinds = Vec::new();
        for (i, d) in disps.iter().enumerate() {
            let id = i as u32;
            let (key, kind) = if vocab.is_special(id) {
                (Key::Single(id), ClassKind::Special)
            } else {
                match d {
                    TokenDisplacement::Empty => (Key::Empty, ClassKind::Empty),
                    TokenDisplacement::BudgetExceeded => (Key::Single(id), ClassKind::Fallback),
                    TokenDisplacement::Computed(d) if d.is_empty() => (Key::Dead, ClassKind::Dead),
                    TokenDisplacement::Computed(d) => (Key::Grammar(d), ClassKind::Grammar),
                }
            };
            let next = r.len() as u32;
            let class = *ids.entry(key).or_insert(next);
            if class == next {
                r.push(id);
                kinds.push(kind);
            } else if vocab.token(id).len() < vocab.token(r[class as usize]).len() {
                r[class as usize] = id;
            }
            c.push(class);
        }
        Self {
            c,
            r,
            kinds,
            grammar_digest,
            vocab_digest: vocab.digest(),
        }
    }

    /// Assembles a table from raw vectors, checking the structural invariants.
    pub fn from_parts(
        c: Vec<u32>,
        r: Vec<u32>,
        kinds: Vec<ClassKind>,
        grammar_digest: Digest,
        vocab_digest: Digest,
    ) -> Result<Self, CacheError> {
        if kinds.len() != r.len() {
            return Err(CacheError::Corrupt("kinds and representatives differ in length".into()));
        }
        if let Some(&k) = c.iter().find(|&&k| k as usize >= r.len()) {
            return Err(CacheError::Corrupt(format!("class id {k} out of range")));
        }
        for (k, &t) in r.iter().enumerate() {
            if c.get(t as usize) != Some(&(k as u32)) {
                return Err(CacheError::Corrupt(format!("representative of class {k} is not a member")));
            }
        }
        Ok(Self {
            c,
            r,
            kinds,
            grammar_digest,
            vocab_digest,
        })
    }

    pub fn token_count(&self) -> usize {
        self.c.len()
    }

    pub fn class_count(&self) -> usize {
        self.r.len()
    }

    pub fn classes(&self) -> &[u32] {
        &self.c
    }

    pub fn representatives(&self) -> &[u32] {
        &self.r
    }

    pub fn kinds(&self) -> &[ClassKind] {
        &self.kinds
    }

    #[inline]
    pub fn class_of(&self, token: u32) -> u32 {
        self.c[token as usize]
    }

    #[inline]
    pub fn representative(&self, class: u32) -> u32 {
        self.r[class as usize]
    }

    #[inline]
    pub fn kind(&self, class: u32) -> ClassKind {
        self.kinds[class as usize]
    }

    pub fn grammar_digest(&self) -> &Digest {
        &self.grammar_digest
    }

    pub fn vocab_digest(&self) -> &Digest {
        &self.vocab_digest
    }

    /// |T| / |E|.
    pub fn compression_ratio(&self) -> f64 {
        self.c.len() as f64 / self.r.len().max(1) as f64
    }

    /// Members of every class, in token-id order.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.r.len()];
        for (t, &k) in self.c.iter().enumerate() {
            out[k as usize].push(t as u32);
        }
        out
    }

    /// Representative of the token's class.
    pub fn map_token(&self, token: u32) -> Result<u32, TableError> {
        match self.c.get(token as usize) {
            Some(&k) => Ok(self.r[k as usize]),
            None => Err(TableError::TokenOutOfRange {
                id: token,
                len: self.c.len(),
            }),
        }
    }

    /// Token mask implied by a class mask.
    pub fn expand(&self, class_mask: &Mask) -> Result<Mask, TableError> {
        self.check_class_mask(class_mask)?;
        Ok(Mask::from_fn(MaskDomain::Tokens, self.c.len(), |i| {
            class_mask.get(self.c[i] as usize)
        }))
    }

    /// Gather-then-mask: blocked tokens get negative infinity.
    pub fn apply_mask(&self, logits: &[f32], class_mask: &Mask) -> Result<Vec<f32>, TableError> {
        let mut out = logits.to_vec();
        self.apply_mask_in_place(&mut out, class_mask)?;
        Ok(out)
    }

    pub fn apply_mask_in_place(&self, logits: &mut [f32], class_mask: &Mask) -> Result<(), TableError> {
        self.check_class_mask(class_mask)?;
        if logits.len() != self.c.len() {
            return Err(TableError::LengthMismatch {
                expected: self.c.len(),
                actual: logits.len(),
            });
        }
        for (x, &k) in logits.iter_mut().zip(&self.c) {
            if !class_mask.get(k as usize) {
                *x = f32::NEG_INFINITY;
            }
        }
        Ok(())
    }

    fn check_class_mask(&self, m: &Mask) -> Result<(), TableError> {
        if m.domain() != MaskDomain::Classes {
            return Err(TableError::WrongDomain { expected: "class" });
        }
        if m.len() != self.r.len() {
            return Err(TableError::LengthMismatch {
                expected: self.r.len(),
                actual: m.len(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.c.len() + 5 * self.r.len() + 32);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.grammar_digest);
        out.extend_from_slice(&self.vocab_digest);
        out.extend_from_slice(&(self.c.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.r.len() as u32).to_le_bytes());
        for &k in &self.c {
            out.extend_from_slice(&k.to_le_bytes());
        }
        for &t in &self.r {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out.extend(self.kinds.iter().map(|&k| k as u8));
        let sum = sha256(&out);
        out.extend_from_slice(&sum);
        out
    }

    /// Parses a cache image, checking magic, version, checksum and structure
    /// but not the digests.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CacheError> {
        if bytes.len() < 8 || &bytes[..8] != CACHE_MAGIC {
            return Err(CacheError::BadMagic);
        }
        if bytes.len() < HEADER_LEN + 32 {
            return Err(CacheError::Truncated);
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != CACHE_VERSION {
            return Err(CacheError::VersionMismatch {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        let t = u32_at(76) as usize;
        let e = u32_at(80) as usize;
        let body_len = HEADER_LEN + 4 * t + 5 * e;
        if bytes.len() != body_len + 32 {
            return Err(CacheError::Truncated);
        }
        if sha256(&bytes[..body_len]) != bytes[body_len..] {
            return Err(CacheError::ChecksumMismatch);
        }
        let mut grammar_digest = [0u8; 32];
        grammar_digest.copy_from_slice(&bytes[12..44]);
        let mut vocab_digest = [0u8; 32];
        vocab_digest.copy_from_slice(&bytes[44..76]);
        let c = (0..t).map(|i| u32_at(HEADER_LEN + 4 * i)).collect();
        let r_at = HEADER_LEN + 4 * t;
        let r = (0..e).map(|i| u32_at(r_at + 4 * i)).collect();
        let kinds = bytes[r_at + 4 * e..body_len]
            .iter()
            .map(|&b| ClassKind::from_u8(b).ok_or_else(|| CacheError::Corrupt(format!("unknown class kind {b}"))))
            .collect::<Result<_, _>>()?;
        Self::from_parts(c, r, kinds, grammar_digest, vocab_digest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CacheError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Reads a cache without checking which grammar and vocabulary it was
    /// built for.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Reads a cache and refuses it unless it was built for these inputs.
    pub fn load(path: impl AsRef<Path>, grammar_digest: &Digest, vocab_digest: &Digest) -> Result<Self, CacheError> {
        let table = Self::read(path)?;
        if &table.grammar_digest != grammar_digest {
            return Err(CacheError::StaleGrammar);
        }
        if &table.vocab_digest != vocab_digest {
            return Err(CacheError::StaleVocab);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::NtId;

    fn computed(pairs: &[(&[u32], &[u32])]) -> TokenDisplacement {
        TokenDisplacement::Computed(Displacement::from_pairs(pairs.iter().map(|(i, o)| {
            (
                i.iter().map(|&x| NtId(x)).collect(),
                o.iter().map(|&x| NtId(x)).collect(),
            )
        })))
    }

    fn sample() -> (Vocabulary, Vec<TokenDisplacement>) {
        let vocab = Vocabulary::new(
            vec![b"aa".to_vec(), b"b".to_vec(), b"a".to_vec(), b"".to_vec(), b"c".to_vec(), b"</s>".to_vec(), b"zz".to_vec()],
            [5],
        )
        .unwrap();
        let disps = vec![
            computed(&[(&[0], &[])]),
            computed(&[]),
            computed(&[(&[0], &[])]),
            TokenDisplacement::Empty,
            computed(&[]),
            TokenDisplacement::Empty,
            TokenDisplacement::BudgetExceeded,
        ];
        (vocab, disps)
    }

    #[test]
    fn grouping_and_representatives() {
        let (vocab, disps) = sample();
        let t = ClassTable::build(&vocab, &disps, [1; 32]);
        assert_eq!(t.classes(), &[0, 1, 0, 2, 1, 3, 4]);
        assert_eq!(t.representatives(), &[2, 1, 3, 5, 6]);
        assert_eq!(
            t.kinds(),
            &[ClassKind::Grammar, ClassKind::Dead, ClassKind::Empty, ClassKind::Special, ClassKind::Fallback]
        );
        assert_eq!(t.map_token(0).unwrap(), 2);
        assert_eq!(t.map_token(2).unwrap(), 2);
        assert!(t.map_token(7).is_err());
    }

    #[test]
    fn duplicates_share_lowest_id() {
        let vocab = Vocabulary::from_tokens([b"x", b"x"]);
        let d = computed(&[(&[1], &[2])]);
        let t = ClassTable::build(&vocab, &[d.clone(), d], [0; 32]);
        assert_eq!(t.class_count(), 1);
        assert_eq!(t.representative(0), 0);
    }

    #[test]
    fn cache_round_trip_and_size() {
        let (vocab, disps) = sample();
        let t = ClassTable::build(&vocab, &disps, [1; 32]);
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 7 + 5 * 5 + 32);
        assert_eq!(ClassTable::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn cache_rejects_damage() {
        let (vocab, disps) = sample();
        let t = ClassTable::build(&vocab, &disps, [1; 32]);
        let bytes = t.to_bytes();
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN] ^= 1;
        assert!(matches!(ClassTable::from_bytes(&flipped), Err(CacheError::ChecksumMismatch)));
        assert!(matches!(ClassTable::from_bytes(&bytes[..bytes.len() - 1]), Err(CacheError::Truncated)));
        assert!(matches!(ClassTable::from_bytes(b"nope"), Err(CacheError::BadMagic)));
        let mut versioned = bytes.clone();
        versioned[8] = 9;
        assert!(matches!(
            ClassTable::from_bytes(&versioned),
            Err(CacheError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn load_checks_digests() {
        let (vocab, disps) = sample();
        let t = ClassTable::build(&vocab, &disps, [1; 32]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cfgz");
        t.save(&path).unwrap();
        assert_eq!(ClassTable::load(&path, &[1; 32], &vocab.digest()).unwrap(), t);
        assert!(matches!(ClassTable::load(&path, &[2; 32], &vocab.digest()), Err(CacheError::StaleGrammar)));
        assert!(matches!(ClassTable::load(&path, &[1; 32], &[0; 32]), Err(CacheError::StaleVocab)));
    }

    #[test]
    fn apply_mask_gathers_by_class() {
        let (vocab, disps) = sample();
        let t = ClassTable::build(&vocab, &disps, [1; 32]);
        let logits = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let all = Mask::full(MaskDomain::Classes, t.class_count());
        assert_eq!(t.apply_mask(&logits, &all).unwrap(), logits.to_vec());
        let none = Mask::empty(MaskDomain::Classes, t.class_count());
        assert!(t.apply_mask(&logits, &none).unwrap().iter().all(|x| *x == f32::NEG_INFINITY));
        let mut one = none.clone();
        one.set(0, true);
        let out = t.apply_mask(&logits, &one).unwrap();
        let kept: Vec<usize> = (0..7).filter(|&i| out[i].is_finite()).collect();
        assert_eq!(kept, vec![0, 2]);
        assert!(matches!(
            t.apply_mask(&logits[..3], &one),
            Err(TableError::LengthMismatch { .. })
        ));
        let wrong = Mask::full(MaskDomain::Tokens, t.class_count());
        assert!(matches!(t.apply_mask(&logits, &wrong), Err(TableError::WrongDomain { .. })));
    }

    #[test]
    fn from_parts_checks_self_map() {
        assert!(ClassTable::from_parts(vec![0, 0], vec![1], vec![ClassKind::Grammar], [0; 32], [0; 32]).is_ok());
        assert!(ClassTable::from_parts(vec![0, 1], vec![1, 0], vec![ClassKind::Grammar; 2], [0; 32], [0; 32]).is_err());
        assert!(ClassTable::from_parts(vec![0, 2], vec![0], vec![ClassKind::Grammar], [0; 32], [0; 32]).is_err());
    }
}
