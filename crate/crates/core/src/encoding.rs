//! Frequency positional encoding of scene coordinates.
//!
//! Coordinates are expected in the normalized scene cube `[-1, 1]^3`; the
//! highest level `2^(W-1) pi` then spans `2^(W-1)` periods over the domain.

use std::f64::consts::PI;

use crate::geometry::Vec3;

/// `(sin 2^0 pi v, cos 2^0 pi v, ..., sin 2^(W-1) pi v, cos 2^(W-1) pi v)`.
pub fn positional_encode(v: f64, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * levels);
    encode_into(v, levels, &mut out);
    out
}

fn encode_into(v: f64, levels: usize, out: &mut Vec<f64>) {
    let mut freq = PI;
    for _ in 0..levels {
        let (s, c) = (freq * v).sin_cos();
        out.push(s);
        out.push(c);
        freq *= 2.0;
    }
}

/// `gamma(x) || gamma(y) || gamma(z)`, length `6W`.
pub fn encode_point(p: Vec3, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * levels);
    encode_point_into(p, levels, &mut out);
    out
}

/// Appends the encoding of `p` to `out`.
pub fn encode_point_into(p: Vec3, levels: usize, out: &mut Vec<f64>) {
    encode_into(p.x, levels, out);
    encode_into(p.y, levels, out);
    encode_into(p.z, levels, out);
}

pub const fn encoded_len(levels: usize) -> usize {
    6 * levels
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_one() {
        assert_eq!(positional_encode(0.0, 2), vec![0.0, 1.0, 0.0, 1.0]);
        let e = positional_encode(1.0, 1);
        assert!(e[0].abs() < 1e-15 && (e[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_evaluation() {
        let e = positional_encode(0.3, 10);
        assert_eq!(e.len(), 20);
        for k in 0..10 {
            let arg = 2f64.powi(k as i32) * PI * 0.3;
            assert!((e[2 * k] - arg.sin()).abs() < 1e-12);
            assert!((e[2 * k + 1] - arg.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn point_encodings() {
        let e = encode_point(Vec3::ZERO, 10);
        assert_eq!(e.len(), 60);
        for (i, v) in e.iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
        }
        let e = encode_point(Vec3::X, 1);
        let want = [0.0, -1.0, 0.0, 1.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn bounded(v in -1.0f64..1.0, w in 1usize..12) {
            for x in positional_encode(v, w) {
                prop_assert!((-1.0..=1.0).contains(&x));
            }
        }

        #[test]
        fn periodic_per_level(v in -1.0f64..1.0, w in 1usize..8) {
            let base = positional_encode(v, w);
            for k in 0..w {
                let shifted = positional_encode(v + 2.0 / 2f64.powi(k as i32), w);
                prop_assert!((base[2 * k] - shifted[2 * k]).abs() < 1e-9);
                prop_assert!((base[2 * k + 1] - shifted[2 * k + 1]).abs() < 1e-9);
            }
        }

        #[test]
        fn point_is_concatenation(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let e = encode_point(Vec3::new(x, y, z), 5);
            let mut want = positional_encode(x, 5);
            want.extend(positional_encode(y, 5));
            want.extend(positional_encode(z, 5));
            prop_assert_eq!(e, want);
        }
    }
}
