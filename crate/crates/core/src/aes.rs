//! Round-1 AES arithmetic: S-box, key-hypothesis intermediates, Hamming
//! weight and algebraic-normal-form monomials over the intermediate bits.
//!
//! Bit `i` of a byte is `(b >> i) & 1`, i.e. bit 0 is the least significant.

use std::fmt;

use crate::{Error, Result, Scalar};

const fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let hi = a & 0x80;
        a <<= 1;
        if hi != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

/// Multiplicative inverse in GF(2^8) as `a^254`; maps 0 to 0.
const fn gf_inv(a: u8) -> u8 {
    let mut result = 1u8;
    let mut base = a;
    let mut e = 254u8;
    while e != 0 {
        if e & 1 != 0 {
            result = gf_mul(result, base);
        }
        base = gf_mul(base, base);
        e >>= 1;
    }
    if a == 0 {
        0
    } else {
        result
    }
}

const fn affine(b: u8) -> u8 {
    b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63
}

const fn build_sbox() -> [u8; 256] {
    let mut t = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = affine(gf_inv(i as u8));
        i += 1;
    }
    t
}

const fn build_inv_sbox(s: &[u8; 256]) -> [u8; 256] {
    let mut t = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        t[s[i] as usize] = i as u8;
        i += 1;
    }
    t
}

/// Forward S-box, generated from field inversion and the affine map.
pub const SBOX: [u8; 256] = build_sbox();
pub const INV_SBOX: [u8; 256] = build_inv_sbox(&SBOX);

#[inline]
pub fn sbox(b: u8) -> u8 {
    SBOX[b as usize]
}

#[inline]
pub fn inv_sbox(b: u8) -> u8 {
    INV_SBOX[b as usize]
}

/// S-box output under key hypothesis `k`: `S(p ^ k)`.
#[inline]
pub fn intermediate(p: u8, k: u8) -> u8 {
    SBOX[(p ^ k) as usize]
}

#[inline]
pub fn hamming_weight(b: u8) -> u32 {
    b.count_ones()
}

/// Nonzero byte mask selecting the bits of a monomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ByteMask(u8);

impl ByteMask {
    /// Number of nonzero masks.
    pub const COUNT: usize = 255;

    pub fn new(u: u8) -> Result<Self> {
        if u == 0 {
            Err(Error::Argument("monomial mask must be nonzero".into()))
        } else {
            Ok(ByteMask(u))
        }
    }

    #[inline]
    pub fn get(self) -> u8 {
        self.0
    }

    /// Monomial degree.
    #[inline]
    pub fn degree(self) -> u32 {
        self.0.count_ones()
    }

    /// Position in mask-indexed tables (`u - 1`).
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < Self::COUNT, "mask index {index} out of range");
        ByteMask(index as u8 + 1)
    }

    /// All 255 masks in ascending order.
    pub fn all() -> impl Iterator<Item = ByteMask> {
        (1..=255u8).map(ByteMask)
    }

    /// Lower-case `0x..` form used in JSON keys.
    pub fn to_hex(self) -> String {
        format!("{:#04x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let digits = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .unwrap_or(s);
        let u = u8::from_str_radix(digits, 16)
            .map_err(|e| Error::Argument(format!("bad mask {s:?}: {e}")))?;
        Self::new(u)
    }
}

impl fmt::Display for ByteMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

/// `X^U`: 1 iff every bit selected by `u` is set in `x`.
#[inline]
pub fn monomial(x: u8, u: ByteMask) -> u8 {
    ((x & u.0) == u.0) as u8
}

/// Product of `xhat[i]` over the bits `i` selected by `u`.
pub fn soft_monomial<T: Scalar>(xhat: &[T], u: ByteMask) -> Result<T> {
    if xhat.len() != 8 {
        return Err(Error::Argument(format!(
            "soft bits must have 8 entries, got {}",
            xhat.len()
        )));
    }
    if let Some(v) = xhat.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
        return Err(Error::Argument(format!("soft bit {v} outside [0, 1]")));
    }
    Ok(soft_monomial_unchecked(xhat, u))
}

#[inline]
pub(crate) fn soft_monomial_unchecked<T: Scalar>(xhat: &[T], u: ByteMask) -> T {
    let mut p = T::one();
    let mut bits = u.0;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        p *= xhat[i];
        bits &= bits - 1;
    }
    p
}

/// The 8 bits of `x`, least significant first.
pub fn bits_of(x: u8) -> [u8; 8] {
    std::array::from_fn(|i| (x >> i) & 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    // FIPS-197 Figure 7.
    #[rustfmt::skip]
    const FIPS_SBOX: [u8; 256] = [
        0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
        0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
        0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
        0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
        0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
        0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
        0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
        0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
        0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
        0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
        0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
        0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
        0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
        0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
        0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
        0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
    ];

    #[test]
    fn sbox_matches_fips_table() {
        assert_eq!(SBOX, FIPS_SBOX);
        assert_eq!(sbox(0x00), 0x63);
        assert_eq!(sbox(0x53), 0xed);
    }

    #[test]
    fn sbox_inverse_and_bijective() {
        let mut seen = [false; 256];
        for b in 0..=255u8 {
            assert_eq!(inv_sbox(sbox(b)), b);
            seen[sbox(b) as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn intermediate_under_hypothesis() {
        assert_eq!(intermediate(0, 0), 0x63);
        for v in 0..=255u8 {
            assert_eq!(intermediate(v, v), 0x63);
        }
        for p in [0u8, 0x3a, 0xff] {
            let mut seen = [false; 256];
            for k in 0..=255u8 {
                seen[intermediate(p, k) as usize] = true;
            }
            assert!(seen.iter().all(|s| *s));
        }
    }

    #[test]
    fn hamming_weight_cases_and_binomial_counts() {
        assert_eq!(hamming_weight(0x00), 0);
        assert_eq!(hamming_weight(0xff), 8);
        assert_eq!(hamming_weight(0xa5), 4);
        let binom = [1, 8, 28, 56, 70, 56, 28, 8, 1];
        for (c, expected) in binom.iter().enumerate() {
            let n = (0..=255u8).filter(|b| hamming_weight(*b) == c as u32).count();
            assert_eq!(n, *expected);
        }
    }

    #[test]
    fn monomial_matches_bit_product_everywhere() {
        assert!(ByteMask::new(0).is_err());
        let m = |x, u| monomial(x, ByteMask::new(u).unwrap());
        assert_eq!(m(0x01, 0x01), 1);
        assert_eq!(m(0x02, 0x01), 0);
        assert_eq!(m(0b1010_0110, 0b0010_0010), 1);
        for x in 0..=255u8 {
            assert_eq!(m(x, 0xff), (x == 0xff) as u8);
            for u in ByteMask::all() {
                let product: u8 = (0..8)
                    .filter(|i| (u.get() >> i) & 1 == 1)
                    .map(|i| (x >> i) & 1)
                    .product();
                assert_eq!(monomial(x, u), product);
            }
        }
    }

    #[test]
    fn soft_monomial_reduces_and_validates() {
        let ones = [1.0f64; 8];
        let halves = [0.5f64; 8];
        for u in ByteMask::all() {
            assert_eq!(soft_monomial(&ones, u).unwrap(), 1.0);
            let expected = 0.5f64.powi(u.degree() as i32);
            assert!((soft_monomial(&halves, u).unwrap() - expected).abs() < 1e-15);
        }
        for x in 0..=255u8 {
            let xhat: Vec<f64> = bits_of(x).iter().map(|b| *b as f64).collect();
            for u in ByteMask::all() {
                assert_eq!(soft_monomial(&xhat, u).unwrap(), monomial(x, u) as f64);
            }
        }
        let mut bad = [0.5f64; 8];
        bad[3] = 1.5;
        assert!(soft_monomial(&bad, ByteMask::new(1).unwrap()).is_err());
        assert!(soft_monomial(&[0.5f64; 7], ByteMask::new(1).unwrap()).is_err());
    }

    #[test]
    fn mask_hex_round_trip() {
        for u in ByteMask::all() {
            assert_eq!(ByteMask::from_hex(&u.to_hex()).unwrap(), u);
            assert_eq!(ByteMask::from_index(u.index()), u);
        }
        assert_eq!(ByteMask::new(0x80).unwrap().to_hex(), "0x80");
        assert_eq!(ByteMask::new(0x01).unwrap().to_hex(), "0x01");
    }
}
