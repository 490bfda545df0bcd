use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::build_oltc_cnn;
use crate::error::Result;
use crate::nn::{grad_check, one_hot, Activation, GradCheckReport, LossKind, Network, NetworkSpec};
use crate::seed;
use crate::tensor::Tensor;

/// Networks covered by [`gradcheck_suite`].
pub const GRADCHECK_CASES: [&str; 3] = ["mlp-softplus-mse", "mlp-softmax-ce", "oltc-cnn-8x8"];

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// Finite-difference check of the 3→8→4→2 MLP (both loss variants) and an
/// 8×8-input instance of the OLTC CNN.
pub fn gradcheck_suite(seed: u64, step: f64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(seed, "gradcheck-data"));
    let batch = 5;
    for (name, loss) in GRADCHECK_CASES[..2].iter().zip([LossKind::Mse, LossKind::CrossEntropy]) {
        let spec = NetworkSpec::mlp(&[3, 8, 4, 2], Activation::Softplus, loss);
        let mut net = Network::new(spec, seed::derive_named(seed, name))?;
        let x = random_tensor(&mut rng, &[batch, 3]);
        let y = match loss {
            LossKind::Mse => random_tensor(&mut rng, &[batch, 2]),
            LossKind::CrossEntropy => {
                let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..2)).collect();
                one_hot(&labels, 2)?
            }
        };
        out.push((name.to_string(), grad_check(&mut net, &x, &y, step)?));
    }
    let name = GRADCHECK_CASES[2];
    let mut net = Network::new(build_oltc_cnn(8, 8, 7)?, seed::derive_named(seed, name))?;
    let x = random_tensor(&mut rng, &[2, 8, 8, 1]);
    let y = one_hot(&[3, 5], 7)?;
    out.push((name.to_string(), grad_check(&mut net, &x, &y, step)?));
    Ok(out)
}
