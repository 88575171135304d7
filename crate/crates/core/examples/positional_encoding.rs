//! Frequency encoding of a 3D point: the raw coordinates followed by
//! sin/cos pairs at octave-spaced frequencies.

use nrf::encoding::{encode_point, encoded_len, positional_encode};
use nrf::geometry::Vec3;

fn main() {
    let levels = 4;
    println!("scalar 0.25 at {levels} levels:");
    for (i, v) in positional_encode(0.25, levels).iter().enumerate() {
        println!("  [{i}] {v:+.6}");
    }
    let p = Vec3::new(0.1, -0.4, 0.7);
    let e = encode_point(p, 10);
    println!("point {p:?} -> {} features (expected {})", e.len(), encoded_len(10));
}
