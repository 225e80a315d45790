//! Seed derivation and number formatting shared across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag. Children of the same
/// parent with different tags are statistically independent, and the result
/// depends only on `(parent, tag)`, never on call order.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    mix64(parent ^ mix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Derives a seed along a path of tags.
pub fn derive_path(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(parent, |s, &t| derive_seed(s, t))
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Formats a float with 9 significant digits, `%.9g` style: fixed notation
/// for moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        trim_zeros(&fixed)
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
