use alloc::vec::Vec;
use core::fmt;

/// Half-open byte range `[start, end)` inside a file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ByteSpan {
    pub start: u64,
    pub end: u64,
}

impl ByteSpan {
    pub const fn new(start: u64, end: u64) -> Self {
        ByteSpan { start, end }
    }

    pub const fn at(start: u64, len: u64) -> Self {
        ByteSpan {
            start,
            end: start + len,
        }
    }

    pub const fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub const fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub const fn contains(&self, pos: u64) -> bool {
        self.start <= pos && pos < self.end
    }

    pub fn overlaps(&self, other: &ByteSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn as_usize_range(&self) -> core::ops::Range<usize> {
        self.start as usize..self.end as usize
    }
}

impl fmt::Display for ByteSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:X}..0x{:X}", self.start, self.end)
    }
}

/// Sorts and merges overlapping or touching spans, dropping empty ones.
pub(crate) fn merge(mut spans: Vec<ByteSpan>) -> Vec<ByteSpan> {
    spans.retain(|s| !s.is_empty());
    spans.sort_unstable();
    let mut out: Vec<ByteSpan> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Gaps of `[0, len)` not covered by `covered`.
pub(crate) fn complement(covered: Vec<ByteSpan>, len: u64) -> Vec<ByteSpan> {
    let mut gaps = Vec::new();
    let mut cursor = 0;
    for s in merge(covered) {
        if s.start >= len {
            break;
        }
        if s.start > cursor {
            gaps.push(ByteSpan::new(cursor, s.start));
        }
        cursor = cursor.max(s.end);
    }
    if cursor < len {
        gaps.push(ByteSpan::new(cursor, len));
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn merge_joins_touching() {
        let m = merge(vec![
            ByteSpan::new(10, 12),
            ByteSpan::new(0, 4),
            ByteSpan::new(4, 6),
            ByteSpan::new(11, 20),
            ByteSpan::new(30, 30),
        ]);
        assert_eq!(m, vec![ByteSpan::new(0, 6), ByteSpan::new(10, 20)]);
    }

    #[test]
    fn complement_fills_gaps() {
        let c = complement(vec![ByteSpan::new(2, 4), ByteSpan::new(6, 8)], 10);
        assert_eq!(
            c,
            vec![
                ByteSpan::new(0, 2),
                ByteSpan::new(4, 6),
                ByteSpan::new(8, 10)
            ]
        );
        assert!(complement(vec![ByteSpan::new(0, 10)], 10).is_empty());
    }
}
