//! Canonical and Z-order (Morton) numbering of grid nodes and DOFs.
//!
//! A subdomain grid has `2^d × 2^d` nodes indexed by `(i, j)`. Two scalar
//! labels are used:
//!
//! * canonical: `L = i + 2^d j` (rows of constant `j` are contiguous);
//! * Z-order: `Z = Σ_k 2^{2k-2} i_k + 2^{2k-1} j_k`, the bits of `i` and `j`
//!   interleaved with `i_1` least significant.
//!
//! All indices are 0-based. Node `n` owns the DOF pair `(2n, 2n+1)` for the
//! x and y displacement; the 1-based pair `(2n+1, 2n+2)` is available through
//! [`dof_indices_one_based`] for comparison with hand computations.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("index ({i}, {j}) outside the {n}×{n} grid")]
    OutOfRange { i: usize, j: usize, n: usize },

    #[error("level d = {0} is not supported (need 1 ≤ d ≤ 31)")]
    Level(usize),
}

/// Node ordering used for QTT layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    Canonical,
    #[default]
    ZOrder,
}

impl std::str::FromStr for Ordering {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Ordering::Canonical),
            "zorder" | "z-order" | "z" => Ok(Ordering::ZOrder),
            other => Err(format!("unknown ordering '{other}' (expected canonical or zorder)")),
        }
    }
}

impl std::fmt::Display for Ordering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ordering::Canonical => "canonical",
            Ordering::ZOrder => "zorder",
        })
    }
}

/// Grid of `2^d × 2^d` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridIndexMap {
    d: usize,
}

impl GridIndexMap {
    pub fn new(d: usize) -> Result<Self, IndexError> {
        if d == 0 || d > 31 {
            return Err(IndexError::Level(d));
        }
        Ok(GridIndexMap { d })
    }

    pub fn level(&self) -> usize {
        self.d
    }

    /// Nodes per side, `2^d`.
    pub fn side(&self) -> usize {
        1 << self.d
    }

    pub fn node_count(&self) -> usize {
        1 << (2 * self.d)
    }

    fn check(&self, i: usize, j: usize) -> Result<(), IndexError> {
        if i >= self.side() || j >= self.side() {
            return Err(IndexError::OutOfRange { i, j, n: self.side() });
        }
        Ok(())
    }

    pub fn canonical(&self, i: usize, j: usize) -> Result<usize, IndexError> {
        self.check(i, j)?;
        Ok(i + (j << self.d))
    }

    pub fn zorder(&self, i: usize, j: usize) -> Result<usize, IndexError> {
        self.check(i, j)?;
        Ok(interleave(i, j))
    }

    /// Index under the given ordering.
    pub fn index(&self, i: usize, j: usize, ordering: Ordering) -> Result<usize, IndexError> {
        match ordering {
            Ordering::Canonical => self.canonical(i, j),
            Ordering::ZOrder => self.zorder(i, j),
        }
    }

    /// Inverse of [`GridIndexMap::index`].
    pub fn coords(&self, index: usize, ordering: Ordering) -> (usize, usize) {
        match ordering {
            Ordering::Canonical => (index & (self.side() - 1), index >> self.d),
            Ordering::ZOrder => deinterleave(index),
        }
    }
}

/// Spread the low 32 bits of `x` onto the even bit positions.
#[inline]
fn spread(x: usize) -> usize {
    let mut v = x as u64 & 0xffff_ffff;
    v = (v | (v << 16)) & 0x0000_ffff_0000_ffff;
    v = (v | (v << 8)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    v = (v | (v << 1)) & 0x5555_5555_5555_5555;
    v as usize
}

/// Collect the even bit positions of `x`.
#[inline]
fn compact(x: usize) -> usize {
    let mut v = x as u64 & 0x5555_5555_5555_5555;
    v = (v | (v >> 1)) & 0x3333_3333_3333_3333;
    v = (v | (v >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v >> 4)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v >> 8)) & 0x0000_ffff_0000_ffff;
    v = (v | (v >> 16)) & 0x0000_0000_ffff_ffff;
    v as usize
}

/// Morton code with `i` on the even (less significant) bits.
#[inline]
pub fn interleave(i: usize, j: usize) -> usize {
    spread(i) | (spread(j) << 1)
}

/// Inverse of [`interleave`].
#[inline]
pub fn deinterleave(z: usize) -> (usize, usize) {
    (compact(z), compact(z >> 1))
}

/// `L = i + 2^d j`.
pub fn canonical_index(i: usize, j: usize, d: usize) -> Result<usize, IndexError> {
    GridIndexMap::new(d)?.canonical(i, j)
}

/// `Z = Σ 2^{2k-2} i_k + 2^{2k-1} j_k`.
pub fn z_index(i: usize, j: usize, d: usize) -> Result<usize, IndexError> {
    GridIndexMap::new(d)?.zorder(i, j)
}

/// 0-based DOF pair `(2n, 2n+1)` of node `n`; the same formula applies to
/// canonical and Z-order labels.
pub fn dof_indices(node: usize) -> (usize, usize) {
    (2 * node, 2 * node + 1)
}

/// 1-based DOF pair `(2n+1, 2n+2)`.
pub fn dof_indices_one_based(node: usize) -> (usize, usize) {
    (2 * node + 1, 2 * node + 2)
}

/// Node permutation with `perm[Z_ij] = L_ij`.
pub fn zorder_permutation(d: usize) -> Result<Vec<usize>, IndexError> {
    let g = GridIndexMap::new(d)?;
    Ok((0..g.node_count())
        .map(|z| {
            let (i, j) = deinterleave(z);
            i + (j << d)
        })
        .collect())
}

/// DOF permutation of size `2·4^d`: `perm[2 Z + c] = 2 L + c` for component `c`.
pub fn zorder_dof_permutation(d: usize) -> Result<Vec<usize>, IndexError> {
    let p = zorder_permutation(d)?;
    Ok(p.iter().flat_map(|&l| [2 * l, 2 * l + 1]).collect())
}

/// Inverse of a permutation.
pub fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (k, &v) in p.iter().enumerate() {
        inv[v] = k;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_examples() {
        assert_eq!(canonical_index(0, 0, 3).unwrap(), 0);
        assert_eq!(canonical_index(2, 1, 2).unwrap(), 6);
        assert_eq!(canonical_index(3, 3, 2).unwrap(), 15);
        assert!(canonical_index(4, 0, 2).is_err());
    }

    #[test]
    fn z_examples() {
        assert_eq!(z_index(0, 0, 4).unwrap(), 0);
        assert_eq!(z_index(3, 2, 2).unwrap(), 13);
        assert_eq!(z_index(1, 0, 1).unwrap(), 1);
        assert_eq!(z_index(0, 1, 1).unwrap(), 2);
        assert!(z_index(0, 2, 1).is_err());
    }

    /// Bit-by-bit oracle for the Morton code.
    fn z_oracle(i: usize, j: usize, d: usize) -> usize {
        (0..d).map(|k| (((i >> k) & 1) << (2 * k)) | (((j >> k) & 1) << (2 * k + 1))).sum()
    }

    #[test]
    fn dof_examples() {
        assert_eq!(dof_indices_one_based(0), (1, 2));
        assert_eq!(dof_indices(0), (0, 1));
        assert_eq!(dof_indices_one_based(13), (27, 28));
        assert_eq!(dof_indices_one_based(6), (13, 14));
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(zorder_permutation(1).unwrap(), vec![0, 1, 2, 3]);
        let p = zorder_permutation(2).unwrap();
        assert_eq!(p[13], canonical_index(3, 2, 2).unwrap());
        assert_eq!(p[13], 11);
        let inv = invert_permutation(&p);
        for k in 0..16 {
            assert_eq!(p[inv[k]], k);
            assert_eq!(inv[p[k]], k);
        }
        let pd = zorder_dof_permutation(2).unwrap();
        assert_eq!(pd[26], 22);
        assert_eq!(pd[27], 23);
    }

    #[test]
    fn bijections_exhaustive() {
        for d in 1..=6 {
            let g = GridIndexMap::new(d).unwrap();
            let n = g.side();
            let mut seen_z = vec![false; n * n];
            let mut seen_l = vec![false; n * n];
            for j in 0..n {
                for i in 0..n {
                    let z = g.zorder(i, j).unwrap();
                    let l = g.canonical(i, j).unwrap();
                    assert_eq!(z, z_oracle(i, j, d));
                    assert!(!seen_z[z] && !seen_l[l]);
                    seen_z[z] = true;
                    seen_l[l] = true;
                    assert_eq!(deinterleave(z), (i, j));
                    assert_eq!(g.coords(l, Ordering::Canonical), (i, j));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn interleave_round_trip(i in 0usize..(1 << 20), j in 0usize..(1 << 20)) {
            prop_assert_eq!(deinterleave(interleave(i, j)), (i, j));
            prop_assert_eq!(interleave(i, j), z_oracle(i, j, 20));
        }
    }
}
