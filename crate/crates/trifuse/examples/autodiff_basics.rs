//! The differentiation engine on its own: record a computation on the
//! tape, run one reverse sweep, read exact gradients, and cross-check
//! them against hand-derived calculus and finite differences.
//!
//! Everything the classifiers do — attention, layernorm, fusion heads —
//! reduces to tape nodes like the ones built here.
//!
//! Run with: cargo run --example autodiff_basics

use trifuse::error::Result;
use trifuse::tensor::{check_gradients, GradCheckOptions, Graph, Params, Tensor};

fn main() -> Result<()> {
    // f(w, x) = sum(gelu(W x)) for a 2x2 W and fixed x.
    let mut g = Graph::new(0);
    let w = g.leaf(&Tensor::new(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25])?.with_requires_grad(true));
    let x = g.constant(vec![2], vec![1.5, -0.5])?;
    let wx = g.matvec(w, x)?;
    let act = g.gelu(wx);
    let loss = g.sum_all(act);
    println!("forward: Wx = {:?}", g.value(wx));
    println!("         gelu(Wx) = {:?}", g.value(act));
    println!("         loss = {:.6}", g.value(loss)[0]);

    g.backward(loss)?;
    let grad_w = g.grad(w).expect("w requires gradient");
    println!("\ndloss/dW = {grad_w:?}");
    assert!(g.grad(x).is_none(), "constants never get gradient buffers");

    // Hand check: d/dW[i][j] sum(gelu(Wx)) = gelu'((Wx)[i]) * x[j].
    let gelu_prime = |v: f64| {
        let h = 1e-6;
        (gelu(v + h) - gelu(v - h)) / (2.0 * h)
    };
    let x_vals = [1.5, -0.5];
    let wx_vals = g.value(wx).to_vec();
    for i in 0..2 {
        for j in 0..2 {
            let manual = gelu_prime(wx_vals[i]) * x_vals[j];
            let auto = grad_w[i * 2 + j];
            println!(
                "  dW[{i}][{j}]: tape {auto:+.6}  manual {manual:+.6}  diff {:.1e}",
                (auto - manual).abs()
            );
            assert!((auto - manual).abs() < 1e-6);
        }
    }

    // The same check, automated: register the weight as a named
    // parameter and let the finite-difference harness probe every entry.
    let mut params = Params::new();
    let w_id = params.register(
        "demo.w".to_string(),
        Tensor::new(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25])?,
        true,
    )?;
    let report = check_gradients(
        &mut params,
        |g, p| {
            let w = g.param(p, w_id);
            let x = g.constant(vec![2], vec![1.5, -0.5])?;
            let wx = g.matvec(w, x)?;
            let act = g.gelu(wx);
            Ok(g.sum_all(act))
        },
        &GradCheckOptions::default(),
    )?;
    println!("\n{}", report.render());
    assert!(report.pass());
    Ok(())
}

fn gelu(v: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * v * (1.0 + ((C * (v + 0.044715 * v.powi(3))).tanh()))
}
