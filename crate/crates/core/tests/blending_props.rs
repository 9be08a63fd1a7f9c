use proptest::prelude::*;

use hpigcn::blending::{
    blend1_avgpool_to_conv, blend2_fuse_bn, blend3_fuse_serial, blend4_add_parallel, blend5_pad_kernel,
    blend6_fuse_adjacency, ParallelBranchSet, SerialBranchParams,
};
use hpigcn::ops::{avg_pool_time, batch_norm_infer, graph_conv, pointwise_conv, temporal_conv};
use hpigcn::params::{init, same_padding};
use hpigcn::rng::Rng;
use hpigcn::{BatchNormParams, Shape4, TemporalConvParams, Tensor4};

fn odd_kernel() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 3, 5, 7, 9])
}

fn input(rng: &mut Rng, n: usize, c: usize, t: usize, v: usize) -> Tensor4<f64> {
    rng.tensor(Shape4::new(n, c, t, v), 1.0)
}

fn conv(rng: &mut Rng, c_out: usize, c_in: usize, k: usize, stride: usize) -> TemporalConvParams<f64> {
    init::temporal(rng, c_out, c_in, k, stride, 1.0, true)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pooling_equals_expanded_conv_exactly(
        seed in any::<u64>(), n in 1usize..3, c in 1usize..6, t in 1usize..14, v in 1usize..5,
        k in odd_kernel(), stride in 1usize..3,
    ) {
        let mut rng = Rng::new(seed);
        let x = input(&mut rng, n, c, t, v);
        let p = same_padding(k);
        let pooled = avg_pool_time(&x, k, stride, p).unwrap();
        let conv = blend1_avgpool_to_conv::<f64>(k, c, stride, p).unwrap();
        prop_assert_eq!(pooled, temporal_conv(&x, &conv).unwrap());
    }

    #[test]
    fn padded_kernel_is_exact(
        seed in any::<u64>(), c_in in 1usize..5, c_out in 1usize..5, t in 1usize..14,
        k in odd_kernel(), extra in 0usize..3, stride in 1usize..3,
    ) {
        let mut rng = Rng::new(seed);
        let x = input(&mut rng, 1, c_in, t, 3);
        let p = conv(&mut rng, c_out, c_in, k, stride);
        let padded = blend5_pad_kernel(&p, k + 2 * extra).unwrap();
        prop_assert_eq!(padded.padding, p.padding + extra);
        let d = temporal_conv(&x, &p).unwrap().max_abs_diff(&temporal_conv(&x, &padded).unwrap()).unwrap();
        prop_assert_eq!(d, 0.0);
        prop_assert_eq!(blend5_pad_kernel(&p, k).unwrap(), p);
    }

    #[test]
    fn parallel_sum_is_order_independent(
        seed in any::<u64>(), c_in in 1usize..5, c_out in 1usize..5, k in odd_kernel(), count in 2usize..5,
    ) {
        let mut rng = Rng::new(seed);
        let branches: Vec<_> = (0..count).map(|_| conv(&mut rng, c_out, c_in, k, 1)).collect();
        let forward = blend4_add_parallel(&ParallelBranchSet { branches: branches.clone() }).unwrap();
        let mut reversed = branches;
        reversed.reverse();
        let backward = blend4_add_parallel(&ParallelBranchSet { branches: reversed }).unwrap();
        for (a, b) in forward.weight.iter().zip(&backward.weight) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in forward.bias.iter().zip(&backward.bias) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identity_batch_norm_leaves_conv_unchanged(
        seed in any::<u64>(), c in 1usize..6, k in odd_kernel(),
    ) {
        let mut rng = Rng::new(seed);
        let p = conv(&mut rng, c, c, k, 1);
        let fused = blend2_fuse_bn(&p, &BatchNormParams::identity(c)).unwrap();
        for (a, b) in fused.weight.iter().zip(&p.weight) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn serial_fusion_matches_pipeline(
        seed in any::<u64>(), c_in in 1usize..5, c_mid in 1usize..5, c_out in 1usize..5,
        t in 1usize..12, k in odd_kernel(), stride in 1usize..3,
    ) {
        let mut rng = Rng::new(seed);
        let x = input(&mut rng, 2, c_in, t, 3);
        let branch = SerialBranchParams {
            first: init::pointwise(&mut rng, c_mid, c_in, 1.0, false),
            second: conv(&mut rng, c_out, c_mid, k, stride),
            bn: init::batch_norm(&mut rng, c_out, 0.5, 1.5),
        };
        let mid = pointwise_conv(&x, &branch.first).unwrap();
        let want = batch_norm_infer(&temporal_conv(&mid, &branch.second).unwrap(), &branch.bn).unwrap();
        let fused = blend3_fuse_serial(&branch).unwrap();
        prop_assert_eq!(&fused, &blend3_fuse_serial(&branch).unwrap());
        let d = temporal_conv(&x, &fused).unwrap().max_abs_diff(&want).unwrap();
        prop_assert!(d <= 1e-12, "|Δ| {}", d);
    }

    #[test]
    fn adjacency_sum_is_linear(
        seed in any::<u64>(), c in 1usize..4, t in 1usize..6, v in 1usize..7, count in 1usize..6,
    ) {
        let mut rng = Rng::new(seed);
        let x = input(&mut rng, 1, c, t, v);
        let pas: Vec<_> = (0..count).map(|_| init::adjacency::<f64>(&mut rng, v)).collect();
        let fused = blend6_fuse_adjacency(&pas).unwrap();
        if count == 1 {
            prop_assert_eq!(&fused, &pas[0]);
        }
        let mut want = graph_conv(&x, &pas[0]).unwrap();
        for a in &pas[1..] {
            want.add_assign(&graph_conv(&x, a).unwrap()).unwrap();
        }
        let d = graph_conv(&x, &fused).unwrap().max_abs_diff(&want).unwrap();
        prop_assert!(d <= 1e-12, "|Δ| {}", d);
    }
}
