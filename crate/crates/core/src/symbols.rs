use std::fmt;

/// Largest alphabet a [`SymbolSet`] can hold.
pub const MAX_Q: usize = 32;

/// A subset of the alphabet `{1, ..., q}`, stored as a bitmask where bit
/// `s - 1` represents symbol `s`.
///
/// This is the message type of the erasure decoder: every message is a
/// uniform distribution over its support, so only the support is kept.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct SymbolSet(pub u32);

impl SymbolSet {
    pub const EMPTY: SymbolSet = SymbolSet(0);

    pub fn full(q: usize) -> Self {
        debug_assert!(q <= MAX_Q);
        if q == 32 {
            SymbolSet(u32::MAX)
        } else {
            SymbolSet((1u32 << q) - 1)
        }
    }

    /// The singleton `{symbol}` with `symbol` in `1..=q`.
    pub fn singleton(symbol: usize) -> Self {
        debug_assert!((1..=MAX_Q).contains(&symbol));
        SymbolSet(1 << (symbol - 1))
    }

    pub fn from_symbols<I: IntoIterator<Item = usize>>(symbols: I) -> Self {
        symbols
            .into_iter()
            .fold(Self::EMPTY, |acc, s| acc | Self::singleton(s))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_singleton(self) -> bool {
        self.0 != 0 && self.0 & (self.0 - 1) == 0
    }

    pub fn contains(self, symbol: usize) -> bool {
        symbol >= 1 && symbol <= MAX_Q && self.0 & (1 << (symbol - 1)) != 0
    }

    pub fn is_subset(self, other: SymbolSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Smallest symbol in the set.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize + 1)
    }

    /// Symbols in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let s = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(s + 1)
            }
        })
    }

    /// The `index`-th smallest symbol.
    pub fn nth(self, index: usize) -> Option<usize> {
        self.iter().nth(index)
    }

    /// Position of `symbol` in ascending order.
    pub fn position(self, symbol: usize) -> Option<usize> {
        self.contains(symbol)
            .then(|| (self.0 & ((1u32 << (symbol - 1)) - 1)).count_ones() as usize)
    }
}

impl std::ops::BitAnd for SymbolSet {
    type Output = SymbolSet;
    fn bitand(self, rhs: Self) -> Self {
        SymbolSet(self.0 & rhs.0)
    }
}

impl std::ops::BitAndAssign for SymbolSet {
    fn bitand_assign(&mut self, rhs: Self) {
        self.0 &= rhs.0;
    }
}

impl std::ops::BitOr for SymbolSet {
    type Output = SymbolSet;
    fn bitor(self, rhs: Self) -> Self {
        SymbolSet(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for SymbolSet {
    fn bitor_assign(&mut self, rhs: Self) {
        self.0 |= rhs.0;
    }
}

impl fmt::Debug for SymbolSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
