//! Compiled-in mapping tables and published coefficient sets.

/// Positive-polarity sign patterns for `M_Rx = 3`, one row per output
/// pattern `g_i` (entering polarity `+1`).
pub(crate) const SIGNS_MRX3: [[i8; 3]; 4] = [[1, 1, 1], [1, 1, -1], [1, -1, -1], [-1, -1, -1]];

/// Gray bit labels selecting each row for `M_Rx = 3` (table column order).
pub(crate) const LABELS_MRX3: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 1], [1, 0]];

/// Positive-polarity sign patterns for `M_Rx = 2`; each block spans two
/// Nyquist intervals (four samples).
pub(crate) const SIGNS_MRX2: [[i8; 4]; 8] = [
    [1, 1, 1, 1],
    [1, 1, 1, -1],
    [1, 1, -1, -1],
    [1, -1, -1, -1],
    [1, -1, -1, 1],
    [-1, -1, -1, 1],
    [-1, -1, -1, -1],
    [-1, -1, 1, 1],
];

pub(crate) const LABELS_MRX2: [[u8; 3]; 8] = [
    [0, 0, 0],
    [0, 0, 1],
    [0, 1, 1],
    [0, 1, 0],
    [1, 1, 0],
    [1, 1, 1],
    [1, 0, 1],
    [1, 0, 0],
];

/// Optimal coefficient set for `M_Rx = 2` at `f_c = 0.65/T`, `eta = 0.95`,
/// unit energy budget, as printed (four decimals).
pub const TABLE4_MRX2: [[f64; 4]; 8] = [
    [0.2719, 0.3751, 0.3715, 0.2378],
    [0.2081, 0.2129, 0.1, 0.1],
    [0.1719, 0.1, 0.1, 0.1440],
    [0.1, 0.1, 0.1832, 0.1572],
    [0.1, 0.1, 0.1, 0.1],
    [0.1, 0.2030, 0.1, 0.1],
    [0.1, 0.2507, 0.2551, 0.1655],
    [0.1, 0.1, 0.1, 0.1647],
];

/// Optimal coefficient set for `M_Rx = 3`, same design point as
/// [`TABLE4_MRX2`].
pub const TABLE5_MRX3: [[f64; 3]; 4] = [
    [0.4566, 0.4809, 0.4006],
    [0.2631, 0.1, 0.1014],
    [0.1334, 0.1, 0.2312],
    [0.1, 0.2875, 0.3692],
];
