use ndarray::Array2;
use proptest::prelude::*;

use neuralff::bitcodec::*;

#[test]
fn known_encodings() {
    assert_eq!(to_bits(Scalar::Finite(0)), Ok([0; 8]));
    assert_eq!(to_bits(Scalar::Finite(5)), Ok([1, 0, 1, 0, 0, 0, 0, 0]));
    assert_eq!(to_bits(Scalar::Infinity), Ok([1; 8]));
    assert_eq!(to_bits(Scalar::Finite(255)), Err(CodecError::ReservedValue));
    assert_eq!(to_bits(Scalar::Finite(300)), Err(CodecError::OutOfRange(300)));
}

#[test]
fn roundtrip_every_value() {
    let mut seen = std::collections::HashSet::new();
    for v in 0..255 {
        let b = to_bits(Scalar::Finite(v)).unwrap();
        assert_eq!(from_bits(&b), Scalar::Finite(v));
        assert!(seen.insert(b));
    }
    let inf = to_bits(Scalar::Infinity).unwrap();
    assert_eq!(from_bits(&inf), Scalar::Infinity);
    assert!(seen.insert(inf));
}

fn table() -> Array2<f64> {
    Array2::from_shape_fn((8, 4), |(i, j)| (i * 4 + j) as f64 * 0.37 - 3.0)
}

#[test]
fn embed_zero_and_one_hot() {
    let t = table();
    assert_eq!(embed(&[0; 8], t.view()), vec![0.0; 4]);
    for i in 0..8 {
        let mut b = [0; 8];
        b[i] = 1;
        assert_eq!(embed(&b, t.view()), t.row(i).to_vec());
    }
}

proptest! {
    #[test]
    fn embed_is_additive_on_disjoint_bits(a in 0u32..255, b in 0u32..255) {
        let b = b & !a;
        let t = table();
        let ea = embed(&to_bits(Scalar::Finite(a)).unwrap(), t.view());
        let eb = embed(&to_bits(Scalar::Finite(b)).unwrap(), t.view());
        let eab = embed(&saturating_bits(a | b), t.view());
        for k in 0..4 {
            prop_assert!((ea[k] + eb[k] - eab[k]).abs() < 1e-12);
        }
    }
}
