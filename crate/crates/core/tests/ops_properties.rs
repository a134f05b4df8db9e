//! Property tests for the op-level algebraic invariants.

use proptest::prelude::*;

use rdseg::labels::Labels;
use rdseg::ops;
use rdseg::tape::Tape;
use rdseg::tensor::Tensor;

fn small_tensor() -> impl Strategy<Value = (Vec<f32>, usize, usize)> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(h, w)| {
        (
            proptest::collection::vec(-2.0f32..2.0, h * w),
            Just(h),
            Just(w),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_commutes_and_associates((a, h, w) in small_tensor(),
                                   b in proptest::collection::vec(-2.0f32..2.0, 12),
                                   c in proptest::collection::vec(-2.0f32..2.0, 12)) {
        let n = h * w;
        let ta = Tensor::from_vec(a, &[h, w]).unwrap();
        let tb = Tensor::from_vec(b[..n].to_vec(), &[h, w]).unwrap();
        let tc = Tensor::from_vec(c[..n].to_vec(), &[h, w]).unwrap();
        let mut tape = Tape::paused();

        let ab = ops::add(&mut tape, &ta, &tb).unwrap();
        let ba = ops::add(&mut tape, &tb, &ta).unwrap();
        prop_assert_eq!(ab.to_vec(), ba.to_vec());

        let left = ops::add(&mut tape, &ab, &tc).unwrap();
        let bc = ops::add(&mut tape, &tb, &tc).unwrap();
        let right = ops::add(&mut tape, &ta, &bc).unwrap();
        for (l, r) in left.to_vec().iter().zip(right.to_vec()) {
            prop_assert!((l - r).abs() <= 1e-5, "{l} vs {r}");
        }
    }

    #[test]
    fn concat_channels_is_exactly_associative(
        a in proptest::collection::vec(-2.0f32..2.0, 4),
        b in proptest::collection::vec(-2.0f32..2.0, 8),
        c in proptest::collection::vec(-2.0f32..2.0, 12),
    ) {
        let ta = Tensor::from_vec(a, &[1, 1, 2, 2]).unwrap();
        let tb = Tensor::from_vec(b, &[1, 2, 2, 2]).unwrap();
        let tc = Tensor::from_vec(c, &[1, 3, 2, 2]).unwrap();
        let mut tape = Tape::paused();
        let ab = ops::concat_channels(&mut tape, &ta, &tb).unwrap();
        let left = ops::concat_channels(&mut tape, &ab, &tc).unwrap();
        let bc = ops::concat_channels(&mut tape, &tb, &tc).unwrap();
        let right = ops::concat_channels(&mut tape, &ta, &bc).unwrap();
        prop_assert_eq!(left.to_vec(), right.to_vec());
        prop_assert_eq!(left.shape(), vec![1, 6, 2, 2]);
    }

    #[test]
    fn argmax_invariant_to_per_pixel_shift(
        logits in proptest::collection::vec(-3.0f32..3.0, 3 * 4),
        shift in proptest::collection::vec(-5.0f32..5.0, 4),
    ) {
        let t = Tensor::from_vec(logits.clone(), &[1, 3, 2, 2]).unwrap();
        let mut shifted = logits;
        for k in 0..3 {
            for p in 0..4 {
                shifted[k * 4 + p] += shift[p];
            }
        }
        let t2 = Tensor::from_vec(shifted, &[1, 3, 2, 2]).unwrap();
        let p1 = ops::argmax_classes(&t).unwrap();
        let p2 = ops::argmax_classes(&t2).unwrap();
        prop_assert_eq!(p1.ids, p2.ids);
    }

    #[test]
    fn iou_is_permutation_equivariant(
        gt in proptest::collection::vec(0u8..4, 25),
        pred in proptest::collection::vec(0u8..4, 25),
        swap in 0usize..3,
    ) {
        use rdseg::eval::ConfusionMatrix;
        // permutation: swap class `swap` with class `swap+1`
        let perm = |id: u8| -> u8 {
            if id as usize == swap { (swap + 1) as u8 }
            else if id as usize == swap + 1 { swap as u8 }
            else { id }
        };
        let l_gt = Labels::new(1, 5, 5, gt.clone()).unwrap();
        let l_pred = Labels::new(1, 5, 5, pred.clone()).unwrap();
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&l_gt, &l_pred).unwrap();

        let p_gt = Labels::new(1, 5, 5, gt.iter().map(|&v| perm(v)).collect()).unwrap();
        let p_pred = Labels::new(1, 5, 5, pred.iter().map(|&v| perm(v)).collect()).unwrap();
        let mut cm_p = ConfusionMatrix::new(4);
        cm_p.accumulate(&p_gt, &p_pred).unwrap();

        let (a, b) = (cm.iou(), cm_p.iou());
        for c in 0..4 {
            prop_assert_eq!(a.per_class[c], b.per_class[perm(c as u8) as usize]);
        }
        // the mean sums the same values in permuted order
        match (a.mean, b.mean) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}"),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn forward_independent_of_recording(
        data in proptest::collection::vec(-2.0f32..2.0, 18),
    ) {
        let x = Tensor::from_vec(data, &[1, 2, 3, 3]).unwrap().with_requires_grad();
        let mut recording = Tape::new();
        let mut paused = Tape::paused();
        let a = ops::relu(&mut recording, &x).unwrap();
        let b = ops::relu(&mut paused, &x).unwrap();
        prop_assert_eq!(a.to_vec(), b.to_vec());
        let ga = ops::global_avg_pool(&mut recording, &a).unwrap();
        let gb = ops::global_avg_pool(&mut paused, &b).unwrap();
        prop_assert_eq!(ga.to_vec(), gb.to_vec());
    }
}
