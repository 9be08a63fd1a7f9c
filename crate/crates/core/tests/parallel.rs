use hpigcn::exec;
use hpigcn::model::{build_model, forward, fuse_model, ModelSpec, Variant};
use hpigcn::rng::Rng;
use hpigcn::{Matrix, Shape4};

fn logits(variant: Variant, fused: bool) -> Matrix<f32> {
    let train = build_model::<f32>(&ModelSpec::new(variant, 5), 4).unwrap();
    let model = if fused { fuse_model(&train).unwrap() } else { train };
    let x = Rng::new(21).tensor::<f32>(Shape4::new(3, 3, 32, 25), 1.0);
    forward(&model, &x).unwrap()
}

fn run_all() -> Vec<Matrix<f32>> {
    [Variant::Rp, Variant::Op]
        .into_iter()
        .flat_map(|v| [logits(v, false), logits(v, true)])
        .collect()
}

// One test function: the execution policy is process-wide.
#[test]
fn serial_and_parallel_forward_are_bit_identical() {
    exec::set_parallel(false);
    let serial = run_all();

    exec::set_parallel(true);
    #[cfg(feature = "parallel")]
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run_all);
    #[cfg(not(feature = "parallel"))]
    let parallel = run_all();
    exec::set_parallel(cfg!(feature = "parallel"));

    for (s, p) in serial.iter().zip(&parallel) {
        let bits = |m: &Matrix<f32>| m.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(s), bits(p));
    }
}
