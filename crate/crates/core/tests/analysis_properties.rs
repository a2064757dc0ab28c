use proptest::prelude::*;

use dirtysim::analysis::{align_by_preamble, bit_error_rate, edit_distance, BitString};

/// Recursive definition over prefixes, small inputs only.
fn naive(a: &[u8], b: &[u8]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => (naive(ra, rb) + usize::from(x != y))
            .min(naive(ra, b) + 1)
            .min(naive(a, rb) + 1),
    }
}

fn short() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..3, 0..7)
}

fn bits(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 0..max)
}

proptest! {
    #[test]
    fn agrees_with_naive_recursion(a in short(), b in short()) {
        prop_assert_eq!(edit_distance(&a, &b), naive(&a, &b));
    }

    #[test]
    fn is_a_metric(a in bits(24), b in bits(24), c in bits(24)) {
        let ab = edit_distance(&a, &b);
        prop_assert_eq!(ab, edit_distance(&b, &a));
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(ab <= edit_distance(&a, &c) + edit_distance(&c, &b));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        prop_assert!(ab <= a.len().max(b.len()));
    }

    #[test]
    fn ber_is_bounded(sent in bits(64), received in bits(64)) {
        prop_assume!(!sent.is_empty());
        let r = bit_error_rate(&BitString::from(sent.as_slice()), &BitString::from(received.as_slice()));
        prop_assert!((0.0..=1.0).contains(&r.ber));
        prop_assert_eq!(r.clamped, r.edit_distance > sent.len());
    }

    /// A clean preamble behind `junk` leading bits is found at that offset.
    #[test]
    fn preamble_found_after_junk(junk in bits(17), tail in bits(32)) {
        let preamble = BitString::from_u64(0xF0F0, 16);
        let mut stream = BitString::from(junk.as_slice());
        stream.extend_from(&preamble);
        stream.extend_from(&BitString::from(tail.as_slice()));
        let a = align_by_preamble(&stream, &preamble, 32).unwrap();
        prop_assert!(a.distance <= 4);
        // An earlier, equally good match can only come from the junk itself.
        prop_assert!(a.offset <= junk.len());
        if a.offset < junk.len() {
            prop_assert_eq!(a.distance, 0);
        }
    }
}
