use nalgebra::DMatrix;
use proptest::prelude::*;
use rank_distortion::design::{read_matrix, write_matrix};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #[test]
    fn write_then_read_is_bit_exact(
        rows in 1usize..8,
        cols in 1usize..5,
        values in prop::collection::vec(finite(), 40),
        header in any::<bool>(),
    ) {
        let m = DMatrix::from_fn(rows, cols, |i, j| values[(i * cols + j) % values.len()]);
        let labels: Vec<String> = (0..cols).map(|j| format!("c{j}")).collect();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, header.then_some(labels.as_slice())).unwrap();
        let (back, got_labels) = read_matrix(buf.as_slice()).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in back.iter().zip(m.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(got_labels, header.then_some(labels));
    }
}
