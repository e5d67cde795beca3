//! Named sub-stream seed derivation.
//!
//! All randomness in a run flows from one root seed. Components draw from
//! named sub-streams so that e.g. the split and the synthetic generator stay
//! independently reproducible no matter what else runs.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive the seed for the sub-stream `label` of `root`.
///
/// Stable across platforms and releases; changing it invalidates recorded
/// outputs.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ splitmix64(root);
    for b in label.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x100000001b3);
    }
    splitmix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_labels_give_distinct_seeds() {
        let a = derive_seed(7, "split");
        let b = derive_seed(7, "synth");
        let c = derive_seed(8, "split");
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn deterministic() {
        assert_eq!(derive_seed(42, "subsample"), derive_seed(42, "subsample"));
    }
}
