//! Progressive material cache.
//!
//! A fixed table of `n_cells * n_entries` 64-bit words. Each occupied word
//! packs `(hash32 << 32) | payload32`, where `hash32` is the check hash of
//! the descriptor and the payload is a shared-exponent RGB encoding of the
//! cached value. Zero is the empty word. The cell hash picks a cell; inside
//! it, slots are scanned in order and the first empty one is claimed with a
//! single compare-and-swap from zero. Slots are write-once: the first value
//! inserted for a key is kept, later inserts for the same key are ignored,
//! and keys that find their cell full are dropped.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::matgraph::Value;
use crate::raycone::{mip_level, texel_indices, ShadingPoint};

/// Key of one cacheable-node occurrence in the virtual texture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct CacheDescriptor {
    pub mat_idx: u32,
    pub node_idx: u32,
    pub mip_level: u8,
    pub texel_x: u32,
    pub texel_y: u32,
}

impl CacheDescriptor {
    pub fn new(mat_idx: u32, node_idx: u32, mip_level: u8, texel_x: u32, texel_y: u32) -> Self {
        CacheDescriptor {
            mat_idx,
            node_idx,
            mip_level,
            texel_x,
            texel_y,
        }
    }

    /// Descriptor for a cache point evaluated at `sp`. Sub-graphs without
    /// UV-dependent nodes use level 0 and texel (0, 0).
    pub fn at(mat_idx: u32, node_idx: u32, uses_uv: bool, sp: &ShadingPoint, mip_offset: i32) -> Self {
        if !uses_uv {
            return CacheDescriptor::new(mat_idx, node_idx, 0, 0, 0);
        }
        let level = mip_level(sp.g1, sp.g2, mip_offset);
        let (tx, ty) = texel_indices(sp.uv, level);
        CacheDescriptor::new(mat_idx, node_idx, level, tx, ty)
    }

    /// Fixed 17-byte little-endian serialization fed to the hashes.
    pub fn to_bytes(&self) -> [u8; 17] {
        let mut b = [0u8; 17];
        b[0..4].copy_from_slice(&self.mat_idx.to_le_bytes());
        b[4..8].copy_from_slice(&self.node_idx.to_le_bytes());
        b[8] = self.mip_level;
        b[9..13].copy_from_slice(&self.texel_x.to_le_bytes());
        b[13..17].copy_from_slice(&self.texel_y.to_le_bytes());
        b
    }
}

const SEED_CELL: u64 = 0x243F_6A88_85A3_08D3;
const SEED_CHECK: u64 = 0x1319_8A2E_0370_7344;

/// MurmurHash3's 64-bit finalizer.
#[inline]
pub fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

fn seeded_hash(desc: &CacheDescriptor, seed: u64) -> u64 {
    let b = desc.to_bytes();
    let w0 = u64::from_le_bytes(b[0..8].try_into().unwrap());
    let w1 = u64::from_le_bytes(b[8..16].try_into().unwrap());
    let w2 = b[16] as u64;
    let mut h = seed;
    for w in [w0, w1, w2] {
        h = fmix64(h ^ w);
    }
    fmix64(h ^ 17)
}

/// Hash selecting the cell (taken modulo the cell count).
#[inline]
pub fn hash_cell(desc: &CacheDescriptor) -> u64 {
    seeded_hash(desc, SEED_CELL)
}

/// Hash identifying the key inside its cell; never zero.
#[inline]
pub fn hash_check(desc: &CacheDescriptor) -> u32 {
    match seeded_hash(desc, SEED_CHECK) as u32 {
        0 => 1,
        h => h,
    }
}

/// Shared-exponent encoding: 8-bit mantissas for r, g, b in the high
/// bytes, exponent biased by 128 in the low byte. Exponent byte 0 is black.
/// Negative and non-finite components encode as 0.
///
/// Every channel decodes within `max_channel / 256` of its input.
pub fn encode_rgb(c: [f32; 3]) -> u32 {
    let c = c.map(|x| if x.is_finite() && x > 0.0 { x as f64 } else { 0.0 });
    let max = c[0].max(c[1]).max(c[2]);
    if max == 0.0 {
        return 0;
    }
    // max = f * 2^e with f in [0.5, 1)
    let e = ((max.to_bits() >> 52) & 0x7ff) as i32 - 1022;
    if e < -127 {
        return 0;
    }
    let e = e.min(127);
    let scale = 2f64.powi(8 - e);
    let m = c.map(|x| ((x * scale).round() as u32).min(255));
    (m[0] << 24) | (m[1] << 16) | (m[2] << 8) | (e + 128) as u32
}

pub fn decode_rgb(p: u32) -> [f32; 3] {
    let e = (p & 0xff) as i32;
    if e == 0 {
        return [0.0; 3];
    }
    let scale = 2f64.powi(e - 128 - 8);
    [
        ((p >> 24) & 0xff) as f64 * scale,
        ((p >> 16) & 0xff) as f64 * scale,
        ((p >> 8) & 0xff) as f64 * scale,
    ]
    .map(|x| x as f32)
}

#[inline]
pub fn encode_value(v: &Value) -> u32 {
    encode_rgb(v.rgb())
}

/// Decodes to a color; callers that know the slot holds a scalar take `r`.
#[inline]
pub fn decode_value(p: u32) -> Value {
    Value::Color(decode_rgb(p))
}

#[inline]
pub fn pack_entry(hash: u32, payload: u32) -> u64 {
    ((hash as u64) << 32) | payload as u64
}

#[inline]
pub fn entry_hash(entry: u64) -> u32 {
    (entry >> 32) as u32
}

#[inline]
pub fn entry_payload(entry: u64) -> u32 {
    entry as u32
}

/// Bytes of table storage, or `None` on overflow.
pub fn memory_bytes(n_cells: u64, n_entries: u64) -> Option<u64> {
    n_cells.checked_mul(n_entries)?.checked_mul(8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// This call's CAS claimed an empty slot.
    Inserted,
    /// A slot with the same check hash already exists.
    AlreadyPresent,
    /// Another thread claimed the chosen slot first.
    LostRace,
    /// Every slot of the cell holds another key.
    CellFull,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheCounters {
    pub lookups: u64,
    pub hits: u64,
    pub inserts_won: u64,
    pub inserts_present: u64,
    pub inserts_lost_race: u64,
    pub inserts_lost_full: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache must have at least one cell and one entry (got {n_cells} x {n_entries})")]
    Empty { n_cells: u64, n_entries: u64 },
    #[error("cache of {n_cells} x {n_entries} entries does not fit in memory")]
    TooLarge { n_cells: u64, n_entries: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt dump: {0}")]
    Corrupt(String),
}

pub struct MaterialCache {
    entries: Box<[AtomicU64]>,
    n_cells: u64,
    n_entries: u64,
    lookups: AtomicU64,
    hits: AtomicU64,
    inserts_won: AtomicU64,
    inserts_present: AtomicU64,
    inserts_lost_race: AtomicU64,
    inserts_lost_full: AtomicU64,
}

impl std::fmt::Debug for MaterialCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaterialCache")
            .field("n_cells", &self.n_cells)
            .field("n_entries", &self.n_entries)
            .field("counters", &self.counters())
            .finish()
    }
}

impl MaterialCache {
    pub fn new(n_cells: u64, n_entries: u64) -> Result<Self, CacheError> {
        if n_cells == 0 || n_entries == 0 {
            return Err(CacheError::Empty { n_cells, n_entries });
        }
        let len = n_cells
            .checked_mul(n_entries)
            .filter(|&n| memory_bytes(n, 1).is_some() && n <= isize::MAX as u64 / 8)
            .ok_or(CacheError::TooLarge { n_cells, n_entries })?;
        let entries = (0..len).map(|_| AtomicU64::new(0)).collect();
        Ok(MaterialCache {
            entries,
            n_cells,
            n_entries,
            lookups: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            inserts_won: AtomicU64::new(0),
            inserts_present: AtomicU64::new(0),
            inserts_lost_race: AtomicU64::new(0),
            inserts_lost_full: AtomicU64::new(0),
        })
    }

    pub fn n_cells(&self) -> u64 {
        self.n_cells
    }

    pub fn n_entries(&self) -> u64 {
        self.n_entries
    }

    pub fn memory_bytes(&self) -> u64 {
        self.entries.len() as u64 * 8
    }

    #[inline]
    pub fn cell_of(&self, desc: &CacheDescriptor) -> u64 {
        hash_cell(desc) % self.n_cells
    }

    #[inline]
    fn cell_slots(&self, cell: u64) -> &[AtomicU64] {
        let start = (cell * self.n_entries) as usize;
        &self.entries[start..start + self.n_entries as usize]
    }

    /// Insert `v` for `desc` unless the key is present or its cell is full.
    pub fn update(&self, desc: &CacheDescriptor, v: &Value) -> UpdateOutcome {
        let hash = hash_check(desc);
        let outcome = self.update_hashed(self.cell_of(desc), hash, encode_value(v));
        let counter = match outcome {
            UpdateOutcome::Inserted => &self.inserts_won,
            UpdateOutcome::AlreadyPresent => &self.inserts_present,
            UpdateOutcome::LostRace => &self.inserts_lost_race,
            UpdateOutcome::CellFull => &self.inserts_lost_full,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        outcome
    }

    fn update_hashed(&self, cell: u64, hash: u32, payload: u32) -> UpdateOutcome {
        for slot in self.cell_slots(cell) {
            let current = slot.load(Ordering::Acquire);
            if current == 0 {
                let new = pack_entry(hash, payload);
                return match slot.compare_exchange(0, new, Ordering::Release, Ordering::Relaxed) {
                    Ok(_) => UpdateOutcome::Inserted,
                    Err(_) => UpdateOutcome::LostRace,
                };
            }
            if entry_hash(current) == hash {
                return UpdateOutcome::AlreadyPresent;
            }
        }
        UpdateOutcome::CellFull
    }

    /// Raw payload stored for `desc`, without touching the counters.
    pub fn probe(&self, desc: &CacheDescriptor) -> Option<u32> {
        let hash = hash_check(desc);
        for slot in self.cell_slots(self.cell_of(desc)) {
            let current = slot.load(Ordering::Acquire);
            if current == 0 {
                return None;
            }
            if entry_hash(current) == hash {
                return Some(entry_payload(current));
            }
        }
        None
    }

    /// Cached payload for `desc`, counted as a lookup.
    pub fn lookup_payload(&self, desc: &CacheDescriptor) -> Option<u32> {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        let found = self.probe(desc);
        if found.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        found
    }

    /// Cached value for `desc`, decoded as a color.
    pub fn lookup(&self, desc: &CacheDescriptor) -> Option<Value> {
        self.lookup_payload(desc).map(decode_value)
    }

    pub fn counters(&self) -> CacheCounters {
        CacheCounters {
            lookups: self.lookups.load(Ordering::Relaxed),
            hits: self.hits.load(Ordering::Relaxed),
            inserts_won: self.inserts_won.load(Ordering::Relaxed),
            inserts_present: self.inserts_present.load(Ordering::Relaxed),
            inserts_lost_race: self.inserts_lost_race.load(Ordering::Relaxed),
            inserts_lost_full: self.inserts_lost_full.load(Ordering::Relaxed),
        }
    }

    /// Copy of every word; consistent per slot, not across slots.
    pub fn snapshot(&self) -> TableImage {
        TableImage {
            n_cells: self.n_cells,
            n_entries: self.n_entries,
            entries: self.entries.iter().map(|e| e.load(Ordering::Acquire)).collect(),
        }
    }

    pub fn occupied(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.load(Ordering::Relaxed) != 0)
            .count() as u64
    }
}

/// A plain copy of a table, as stored in dump files.
///
/// Dump layout: little-endian `n_cells: u64`, `n_entries: u64`, then
/// `n_cells * n_entries` little-endian `u64` words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableImage {
    pub n_cells: u64,
    pub n_entries: u64,
    pub entries: Vec<u64>,
}

impl TableImage {
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.n_cells.to_le_bytes())?;
        w.write_all(&self.n_entries.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * 4096);
        for chunk in self.entries.chunks(4096) {
            buf.clear();
            for e in chunk {
                buf.extend_from_slice(&e.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<TableImage, CacheError> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)
            .map_err(|_| CacheError::Corrupt("missing header".into()))?;
        let n_cells = u64::from_le_bytes(head[0..8].try_into().unwrap());
        let n_entries = u64::from_le_bytes(head[8..16].try_into().unwrap());
        let expected = memory_bytes(n_cells, n_entries)
            .ok_or_else(|| CacheError::Corrupt(format!("size {n_cells} x {n_entries} overflows")))?;
        if n_cells == 0 || n_entries == 0 {
            return Err(CacheError::Corrupt(format!("empty table {n_cells} x {n_entries}")));
        }
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() as u64 != expected {
            return Err(CacheError::Corrupt(format!(
                "expected {expected} bytes of entries, found {}",
                body.len()
            )));
        }
        let entries = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(TableImage {
            n_cells,
            n_entries,
            entries,
        })
    }

    pub fn cell(&self, cell: u64) -> &[u64] {
        let start = (cell * self.n_entries) as usize;
        &self.entries[start..start + self.n_entries as usize]
    }

    /// Check structural invariants of a table image.
    pub fn audit(&self) -> AuditReport {
        let mut report = AuditReport {
            n_cells: self.n_cells,
            n_entries: self.n_entries,
            ..Default::default()
        };
        for cell in 0..self.n_cells {
            let slots = self.cell(cell);
            let mut seen_empty = false;
            for (i, &e) in slots.iter().enumerate() {
                if e == 0 {
                    seen_empty = true;
                    continue;
                }
                report.occupied += 1;
                let h = entry_hash(e);
                if h == 0 {
                    report.problems.push(AuditProblem::ZeroHash { cell, slot: i });
                }
                if seen_empty {
                    report.problems.push(AuditProblem::Hole { cell, slot: i });
                }
                if slots[..i].iter().any(|&p| p != 0 && entry_hash(p) == h) {
                    report
                        .problems
                        .push(AuditProblem::DuplicateHash { cell, slot: i, hash: h });
                }
            }
            if !seen_empty {
                report.full_cells += 1;
            }
        }
        report
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditProblem {
    /// Two occupied slots of one cell carry the same check hash.
    DuplicateHash { cell: u64, slot: usize, hash: u32 },
    /// An occupied slot with hash 0 (indistinguishable from a torn write).
    ZeroHash { cell: u64, slot: usize },
    /// An occupied slot after an empty one; slots fill front to back.
    Hole { cell: u64, slot: usize },
}

impl std::fmt::Display for AuditProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuditProblem::DuplicateHash { cell, slot, hash } => {
                write!(f, "cell {cell}: slot {slot} duplicates hash {hash:#010x}")
            }
            AuditProblem::ZeroHash { cell, slot } => {
                write!(f, "cell {cell}: slot {slot} is occupied with hash 0")
            }
            AuditProblem::Hole { cell, slot } => {
                write!(f, "cell {cell}: slot {slot} is occupied after an empty slot")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub n_cells: u64,
    pub n_entries: u64,
    pub occupied: u64,
    pub full_cells: u64,
    pub problems: Vec<AuditProblem>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(node: u32) -> CacheDescriptor {
        CacheDescriptor::new(1, node, 3, 5, 7)
    }

    #[test]
    fn hashes_are_deterministic() {
        let a = desc(4);
        assert_eq!(hash_cell(&a), hash_cell(&desc(4)));
        assert_eq!(hash_check(&a), hash_check(&desc(4)));
        assert_ne!(hash_cell(&a), hash_cell(&desc(5)));
        assert_ne!(hash_cell(&a) as u32, hash_check(&a));
    }

    #[test]
    fn zero_descriptor_has_nonzero_check() {
        assert_ne!(hash_check(&CacheDescriptor::default()), 0);
    }

    #[test]
    fn serialization_layout() {
        let b = CacheDescriptor::new(0x01020304, 0x05060708, 9, 0x0a0b0c0d, 0x0e0f1011).to_bytes();
        assert_eq!(
            b,
            [4, 3, 2, 1, 8, 7, 6, 5, 9, 0x0d, 0x0c, 0x0b, 0x0a, 0x11, 0x10, 0x0f, 0x0e]
        );
    }

    #[test]
    fn black_roundtrips_exactly() {
        assert_eq!(encode_rgb([0.0; 3]), 0);
        assert_eq!(decode_rgb(encode_rgb([0.0; 3])), [0.0; 3]);
        assert_eq!(decode_rgb(encode_rgb([-1.0, f32::NAN, 0.0])), [0.0; 3]);
    }

    #[test]
    fn ones_within_bound() {
        let d = decode_rgb(encode_rgb([1.0; 3]));
        for c in d {
            assert!((c - 1.0).abs() <= 1.0 / 256.0);
        }
    }

    #[test]
    fn powers_of_two_and_small_channels() {
        assert_eq!(decode_rgb(encode_rgb([0.5, 0.25, 0.0])), [0.5, 0.25, 0.0]);
        let d = decode_rgb(encode_rgb([1000.0, 0.5, 0.25]));
        assert!((d[0] - 1000.0).abs() <= 1000.0 / 256.0);
        // the shared exponent wipes out channels far below the max
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn memory_examples() {
        assert_eq!(memory_bytes(10_000_000, 10), Some(800_000_000));
        assert_eq!(memory_bytes(1, 1), Some(8));
        assert_eq!(memory_bytes(1_000_000, 5), Some(40_000_000));
        assert_eq!(memory_bytes(u64::MAX, 2), None);
    }

    #[test]
    fn first_insert_wins() {
        let cache = MaterialCache::new(16, 2).unwrap();
        let d = desc(1);
        assert_eq!(cache.lookup(&d), None);
        let v1 = Value::Color([0.25, 0.5, 0.75]);
        let v2 = Value::Color([0.9, 0.1, 0.1]);
        assert_eq!(cache.update(&d, &v1), UpdateOutcome::Inserted);
        assert_eq!(cache.update(&d, &v2), UpdateOutcome::AlreadyPresent);
        assert_eq!(cache.lookup(&d), Some(decode_value(encode_value(&v1))));
        let c = cache.counters();
        assert_eq!((c.lookups, c.hits, c.inserts_won, c.inserts_present), (2, 1, 1, 1));
    }

    #[test]
    fn empty_cache_rejected() {
        assert!(matches!(MaterialCache::new(0, 4), Err(CacheError::Empty { .. })));
        assert!(matches!(MaterialCache::new(4, 0), Err(CacheError::Empty { .. })));
        assert!(matches!(
            MaterialCache::new(u64::MAX, 4),
            Err(CacheError::TooLarge { .. })
        ));
    }

    #[test]
    fn descriptor_without_uv_ignores_shading_point() {
        let a = CacheDescriptor::at(2, 9, false, &ShadingPoint::at_uv(0.1, 0.2), 0);
        let b = CacheDescriptor::at(2, 9, false, &ShadingPoint::at_uv(0.8, 0.7), 3);
        assert_eq!(a, b);
        assert_eq!(a, CacheDescriptor::new(2, 9, 0, 0, 0));
        let mut sp = ShadingPoint::at_uv(0.3, 0.8);
        sp.g1 = [0.25, 0.0];
        sp.g2 = [0.0, 0.25];
        assert_eq!(CacheDescriptor::at(2, 9, true, &sp, 0), CacheDescriptor::new(2, 9, 2, 1, 3));
    }

    #[test]
    fn audit_flags_duplicates_and_holes() {
        let img = TableImage {
            n_cells: 2,
            n_entries: 3,
            entries: vec![
                pack_entry(5, 1),
                pack_entry(5, 2),
                0,
                0,
                pack_entry(7, 0),
                0,
            ],
        };
        let r = img.audit();
        assert_eq!(r.occupied, 3);
        assert!(r.problems.contains(&AuditProblem::DuplicateHash { cell: 0, slot: 1, hash: 5 }));
        assert!(r.problems.contains(&AuditProblem::Hole { cell: 1, slot: 1 }));
    }

    #[test]
    fn dump_roundtrip_and_corruption() {
        let cache = MaterialCache::new(3, 2).unwrap();
        cache.update(&desc(1), &Value::Scalar(0.5));
        let img = cache.snapshot();
        let mut bytes = Vec::new();
        img.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        let back = TableImage::read_from(&mut &bytes[..]).unwrap();
        assert_eq!(back, img);
        assert!(back.audit().is_clean());
        assert!(TableImage::read_from(&mut &bytes[..bytes.len() - 1]).is_err());
        assert!(TableImage::read_from(&mut &bytes[..5]).is_err());
    }
}
