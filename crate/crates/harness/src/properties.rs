//! Self-contained verification suite for the learning rule's mathematical
//! guarantees, run on synthetic Gaussian data with known structure.
//!
//! Five checks per problem size, all against independent linear-algebra
//! oracles (eigendecomposition of the sample second moment):
//!
//! 1. reconstruction error within 5% of the best rank-`m` (PCA) error,
//! 2. total weight energy `||w||_F^2` within 2% of the unit count,
//! 3. output activation bounded by input activation on >99% of samples,
//! 4. fixed-point residual `||Cw - w(w^T C w)||_F` below `1e-3 * ||w||_F`,
//! 5. activation bounded by the energy inside the principal subspace
//!    (the typicality bound) on >99% of samples.
//!
//! A sign-flipped control trains the same layer with negated updates and
//! must *fail* checks 1 and 4 — guarding against a suite that passes
//! vacuously.

use std::time::Instant;

use actlearn::data::{EncodedSample, NormPolicy};
use actlearn::layers::{Activation, Connectivity, LayerState};
use actlearn::network::{train_unsupervised, Block, BlockLayout, BlockRole, NetworkModel, TrainConfig};
use actlearn::numerics::{covariance, dot, norm_sq, pca_reconstruction_error, top_eigenpairs, Mat, SeededRng};
use actlearn::rule::stability_report;
use anyhow::Result;
use serde::Serialize;

/// Relative slack when counting bound violations: finite-step training
/// leaves the top singular values of `w` within O(eta) of 1, so tiny
/// exceedances are training noise, not bound failures. Exceedances must
/// clear this margin to count.
const VIOLATION_SLACK: f64 = 1e-4;

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// Measured statistic; smaller is better for every check.
    pub value: f64,
    /// Pass threshold: the check passes iff `value <= bound`.
    pub bound: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: &'static str, value: f64, bound: f64) -> Self {
        CheckResult {
            name,
            value,
            bound,
            pass: value <= bound,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VariantReport {
    pub dim: usize,
    pub units: usize,
    pub samples: usize,
    pub checks: Vec<CheckResult>,
    /// Worst per-sample excess of `||y||^2` over `||x||^2`, relative to
    /// `||x||^2` (negative = bound held everywhere with margin).
    pub activation_excess_max: f64,
    /// Worst per-sample excess of `||y||^2` over the in-subspace energy,
    /// relative to `||x||^2`.
    pub typicality_excess_max: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct ControlReport {
    /// Reconstruction ratio vs the PCA oracle for the sign-flipped layer;
    /// must exceed the normal bound.
    pub reconstruction_ratio: f64,
    pub reconstruction_fails: bool,
    /// Relative fixed-point residual for the sign-flipped layer.
    pub stability_ratio: f64,
    pub stability_fails: bool,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub variants: Vec<VariantReport>,
    pub sign_flip_control: ControlReport,
    pub elapsed_seconds: f64,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.variants.iter().all(|v| v.pass) && self.sign_flip_control.pass
    }
}

/// Gaussian samples with the given per-direction standard deviations along
/// a random (seeded) orthonormal frame.
fn gaussian_cloud(dim: usize, n: usize, sds: &[f64], seed: u64) -> Vec<EncodedSample<f64>> {
    assert_eq!(sds.len(), dim);
    let mut rng = SeededRng::new(seed);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while frame.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gaussian::<f64>(1.0)).collect();
        for u in &frame {
            let c = dot(&v, u);
            for k in 0..dim {
                v[k] -= c * u[k];
            }
        }
        let nrm = norm_sq(&v).sqrt();
        if nrm > 1e-6 {
            for x in &mut v {
                *x /= nrm;
            }
            frame.push(v);
        }
    }
    (0..n)
        .map(|_| {
            let mut x = vec![0.0f64; dim];
            for (u, &sd) in frame.iter().zip(sds) {
                let c = rng.gaussian::<f64>(sd);
                for k in 0..dim {
                    x[k] += c * u[k];
                }
            }
            EncodedSample {
                data: x,
                label: None,
                class: None,
            }
        })
        .collect()
}

fn fresh_layer(dim: usize, m: usize, seed: u64, sigma: f64) -> LayerState<f64> {
    let mut rng = SeededRng::new(seed);
    LayerState::init(
        Connectivity::Full {
            fan_in: dim,
            fan_out: m,
        },
        Activation::Identity,
        &mut rng,
        sigma,
    )
}

fn sample_matrix(samples: &[EncodedSample<f64>]) -> Mat<f64> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.data.clone()).collect();
    Mat::from_rows(&rows).expect("uniform sample rows")
}

struct VariantSpec {
    dim: usize,
    m: usize,
    n: usize,
    strong: &'static [f64],
    epochs: usize,
    eta_decay: f64,
}

/// Train one linear layer on the cloud and evaluate all five checks.
fn run_variant(spec: &VariantSpec, seed: u64) -> Result<VariantReport> {
    let mut sds = spec.strong.to_vec();
    sds.resize(spec.dim, 0.05f64.sqrt());
    let samples = gaussian_cloud(spec.dim, spec.n, &sds, seed);

    let layout = BlockLayout::new(vec![Block::new("x", vec![spec.dim], BlockRole::Data)])?;
    let layer = fresh_layer(spec.dim, spec.m, seed ^ 0x9e37, 0.3);
    let mut model = NetworkModel::new(layout, NormPolicy::PerBlock, vec![layer])?;
    // Slow geometric decay: the noise floor the weights freeze at scales
    // with the step size, so the schedule has to spend many epochs at
    // small eta for the fixed-point residual to tighten below 1e-3. The
    // larger problem needs a gentler schedule than the small one.
    let cfg = TrainConfig {
        eta: 0.02,
        epochs: spec.epochs,
        batch_size: 50,
        eta_decay: spec.eta_decay,
        seed: seed ^ 0x51f1,
        ..TrainConfig::default()
    };
    train_unsupervised(&mut model, &samples, &cfg, |_, _| true)?;
    let w = model.layers()[0].weights().clone();

    let x = sample_matrix(&samples);
    let c = covariance(&x)?;
    let m = spec.m;

    // 1. reconstruction through the layer (x_hat = w w^T x) vs PCA oracle.
    let y = x.matmul(&w)?;
    let xhat = y.matmul_bt(&w)?;
    let mut recon = 0.0;
    for s in 0..x.rows() {
        let mut e = 0.0;
        for k in 0..x.cols() {
            let d = x[(s, k)] - xhat[(s, k)];
            e += d * d;
        }
        recon += e;
    }
    recon /= x.rows() as f64;
    let pca = pca_reconstruction_error(&x, m)?;
    let c_recon = CheckResult::new("reconstruction_vs_pca", recon / pca, 1.05);

    // 2. weight energy: ||w||_F^2 relative deviation from the unit count.
    let stab = stability_report(&w, &c, m)?;
    let c_energy = CheckResult::new(
        "weight_energy",
        (stab.weight_norm_sq - m as f64).abs() / m as f64,
        0.02,
    );

    // 3. output activation never (meaningfully) exceeds input activation.
    // 5. activation bounded by the energy inside the principal subspace.
    let pairs = top_eigenpairs(&c, m)?;
    let mut basis = Mat::<f64>::zeros(spec.dim, m);
    for (k, p) in pairs.iter().enumerate() {
        for (i, &v) in p.vector.iter().enumerate() {
            basis[(i, k)] = v;
        }
    }
    let coords = x.matmul(&basis)?;
    let mut over_input = 0usize;
    let mut over_subspace = 0usize;
    let mut activation_excess_max = f64::NEG_INFINITY;
    let mut typicality_excess_max = f64::NEG_INFINITY;
    for s in 0..x.rows() {
        let x_sq = norm_sq(x.row(s));
        let y_sq = norm_sq(y.row(s));
        let pv_sq = norm_sq(coords.row(s));
        activation_excess_max = activation_excess_max.max((y_sq - x_sq) / x_sq);
        typicality_excess_max = typicality_excess_max.max((y_sq - pv_sq) / x_sq);
        if y_sq > x_sq * (1.0 + VIOLATION_SLACK) {
            over_input += 1;
        }
        if y_sq > pv_sq + VIOLATION_SLACK * x_sq {
            over_subspace += 1;
        }
    }
    let n = x.rows() as f64;
    let c_bound = CheckResult::new("activation_bound", over_input as f64 / n, 0.01);
    let c_typ = CheckResult::new("typicality_bound", over_subspace as f64 / n, 0.01);

    // 4. fixed-point residual relative to the weight norm.
    let w_norm = stab.weight_norm_sq.sqrt();
    let c_stab = CheckResult::new("stability_residual", stab.residual / w_norm, 1e-3);

    let checks = vec![c_recon, c_energy, c_bound, c_stab, c_typ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(VariantReport {
        dim: spec.dim,
        units: m,
        samples: spec.n,
        checks,
        activation_excess_max,
        typicality_excess_max,
        pass,
    })
}

/// Train the 16-dim layer with the update sign flipped and confirm the
/// reconstruction and stability checks now fail.
fn run_control(spec: &VariantSpec, seed: u64) -> Result<ControlReport> {
    let mut sds = spec.strong.to_vec();
    sds.resize(spec.dim, 0.05f64.sqrt());
    let samples = gaussian_cloud(spec.dim, spec.n, &sds, seed);
    // Start small: below unit column norm the flipped rule contracts, so a
    // short run leaves the weights tiny but finite and measurably off any
    // fixed point. (Above unit norm it explodes instead — either way the
    // checks must fail, but contraction keeps the arithmetic finite.)
    let mut layer = fresh_layer(spec.dim, spec.m, seed ^ 0x9e37, 0.1);

    let eta = 0.02;
    let batch = 50;
    'epochs: for _epoch in 0..3 {
        for chunk in samples.chunks(batch) {
            let xb = sample_matrix(chunk);
            let net = layer.forward_linear(&xb)?;
            let delta = layer.delta(&xb, &net, eta, None)?;
            let mut neg = Mat::zeros(delta.rows(), delta.cols());
            for i in 0..delta.rows() {
                for j in 0..delta.cols() {
                    neg[(i, j)] = -delta[(i, j)];
                }
            }
            match layer.apply_update(&neg) {
                Ok(next) => layer = next,
                // Divergence to non-finite values: keep the last finite
                // weights, which are already far from any fixed point.
                Err(_) => break 'epochs,
            }
        }
    }
    let w = layer.weights().clone();

    let x = sample_matrix(&samples);
    let c = covariance(&x)?;
    let y = x.matmul(&w)?;
    let xhat = y.matmul_bt(&w)?;
    let mut recon = 0.0;
    for s in 0..x.rows() {
        let mut e = 0.0;
        for k in 0..x.cols() {
            let d = x[(s, k)] - xhat[(s, k)];
            e += d * d;
        }
        recon += e;
    }
    recon /= x.rows() as f64;
    let pca = pca_reconstruction_error(&x, spec.m)?;
    let stab = stability_report(&w, &c, spec.m)?;
    let w_norm = stab.weight_norm_sq.sqrt().max(1e-300);

    let reconstruction_ratio = recon / pca;
    let stability_ratio = stab.residual / w_norm;
    let reconstruction_fails = reconstruction_ratio > 1.05;
    let stability_fails = stability_ratio > 1e-3;
    Ok(ControlReport {
        reconstruction_ratio,
        reconstruction_fails,
        stability_ratio,
        stability_fails,
        pass: reconstruction_fails && stability_fails,
    })
}

/// Run both problem sizes plus the sign-flipped control.
pub fn run_property_suite(seed: u64) -> Result<PropertyReport> {
    let start = Instant::now();
    let small = VariantSpec {
        dim: 16,
        m: 4,
        n: 2000,
        strong: &[2.0, 1.7320508075688772, 1.4142135623730951, 1.0],
        epochs: 400,
        eta_decay: 0.97,
    };
    let large = VariantSpec {
        dim: 64,
        m: 8,
        n: 3000,
        strong: &[3.0, 2.6, 2.2, 1.9, 1.6, 1.4, 1.2, 1.0],
        epochs: 900,
        eta_decay: 0.985,
    };
    let variants = vec![run_variant(&small, seed)?, run_variant(&large, seed.wrapping_add(1))?];
    let sign_flip_control = run_control(&small, seed)?;
    Ok(PropertyReport {
        seed,
        variants,
        sign_flip_control,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
