//! Quick single-core throughput check for the three matmul kernels at the
//! shapes the training loop actually uses (batch 100, width ~1064).
//!
//!     cargo run --release -p actlearn --example gemm_bench

use actlearn::numerics::{Mat, SeededRng};
use std::time::Instant;

fn bench(name: &str, flops: f64, mut f: impl FnMut() -> Mat<f32>) {
    // Warm up once, then time enough repetitions to get a stable number.
    let mut sink = 0.0f32;
    sink += f()[(0, 0)];
    let reps = 20;
    let t = Instant::now();
    for _ in 0..reps {
        sink += f()[(0, 0)];
    }
    let dt = t.elapsed().as_secs_f64() / reps as f64;
    println!("{name:<28} {:8.2} ms   {:6.2} GFLOP/s   (sink {sink:e})", dt * 1e3, flops / dt / 1e9);
}

fn main() {
    let mut rng = SeededRng::new(1);
    let b = 100;
    let n = 1064;
    let x: Mat<f32> = rng.gaussian_mat(b, n, 1.0);
    let w: Mat<f32> = rng.gaussian_mat(n, n, 0.1);
    let y = x.matmul(&w).unwrap();

    let flops = 2.0 * b as f64 * n as f64 * n as f64;
    bench("forward   x(100xN)*w(NxN)", flops, || x.matmul(&w).unwrap());
    bench("residual  y(100xN)*w^T", flops, || y.matmul_bt(&w).unwrap());
    bench("delta     x^T(Nx100)*y", flops, || x.matmul_at(&y).unwrap());
}
