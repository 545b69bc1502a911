//! Append-only vector of lazily allocated, geometrically growing segments.
//! Elements never move, so shared references stay valid while other
//! threads extend the vector.

use std::sync::OnceLock;

const BASE_BITS: u32 = 12;
/// Rows in the first segment.
pub const BASE: u64 = 1 << BASE_BITS;
/// Enough segments to cover every 48-bit offset.
const SEGMENTS: usize = 37;

pub struct SegVec<T> {
    segments: [OnceLock<Box<[T]>>; SEGMENTS],
}

impl<T: Default> Default for SegVec<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn locate(index: u64) -> (usize, usize) {
    let j = (index >> BASE_BITS) + 1;
    let seg = 63 - j.leading_zeros();
    let start = BASE * ((1u64 << seg) - 1);
    (seg as usize, (index - start) as usize)
}

impl<T: Default> SegVec<T> {
    pub fn new() -> Self {
        Self { segments: std::array::from_fn(|_| OnceLock::new()) }
    }

    /// Element at `index`, allocating its segment on first use.
    pub fn get_or_alloc(&self, index: u64) -> &T {
        let (seg, off) = locate(index);
        let segment = self.segments[seg].get_or_init(|| {
            let len = (BASE << seg) as usize;
            (0..len).map(|_| T::default()).collect()
        });
        &segment[off]
    }

    /// Element at `index` if its segment exists.
    #[inline]
    pub fn get(&self, index: u64) -> Option<&T> {
        let (seg, off) = locate(index);
        self.segments.get(seg)?.get().map(|s| &s[off])
    }
}
