//! Unscrambled Sobol low-discrepancy sequence (Joe–Kuo direction numbers).
//!
//! Point `i` is the XOR of the direction numbers selected by the bits of the
//! Gray code of `i`, so points can be produced in any order. Index 0 is the
//! origin and is included: the first `2^m` points then form a balanced net.

use crate::error::{Error, Result};

const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0; // 2^-32

/// `(s, a, m_1..m_s)` for dimensions 2..=21 from the new-joe-kuo-6.21201 table.
const JOE_KUO: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

/// Largest supported dimension.
pub const MAX_DIMS: usize = JOE_KUO.len() + 1;

#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
}

impl SobolSequence {
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::Config(format!(
                "Sobol sequence supports 1..={MAX_DIMS} dimensions, got {dims}"
            )));
        }
        let mut directions = Vec::with_capacity(dims);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1u32 << (BITS - 1 - k);
        }
        directions.push(first);
        for &(s, a, m) in JOE_KUO.iter().take(dims - 1) {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for j in 1..s {
                        if (a >> (s - 1 - j)) & 1 == 1 {
                            x ^= v[k - j];
                        }
                    }
                    x
                };
            }
            directions.push(v);
        }
        Ok(Self {
            directions,
            shift: vec![0; dims],
        })
    }

    /// Applies a digital shift (XOR) per dimension. Shifting preserves the
    /// net structure of every `2^m` block.
    pub fn with_digital_shift(mut self, shift: Vec<u32>) -> Self {
        assert_eq!(shift.len(), self.directions.len());
        self.shift = shift;
        self
    }

    pub fn dims(&self) -> usize {
        self.directions.len()
    }

    /// The `index`-th point in `[0, 1)^dims`.
    pub fn point(&self, index: u64) -> Vec<f64> {
        let gray = index ^ (index >> 1);
        self.directions
            .iter()
            .zip(&self.shift)
            .map(|(v, s)| {
                let mut x = *s;
                let mut g = gray;
                let mut k = 0;
                while g != 0 && k < BITS {
                    if g & 1 == 1 {
                        x ^= v[k];
                    }
                    g >>= 1;
                    k += 1;
                }
                x as f64 * SCALE
            })
            .collect()
    }

    /// The first `n` points.
    pub fn take(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n as u64).map(|i| self.point(i)).collect()
    }
}
