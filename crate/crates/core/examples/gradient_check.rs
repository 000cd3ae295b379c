//! Reverse-mode gradients of a small conv -> sigmoid -> masked BCE graph,
//! compared with central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrwnet::autodiff::{NdArray, Tape, Var};

fn loss(tape: &mut Tape<f64>, x: Var, k: Var, b: Var, target: &NdArray<f64>) -> rrwnet::Result<Var> {
    let y = tape.conv2d(x, k, b)?;
    let y = tape.relu(y);
    let p = tape.sigmoid(y);
    tape.bce(p, target, None)
}

fn main() -> rrwnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut random = |shape: &[usize]| NdArray::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    let x = random(&[2, 6, 6]);
    let k = random(&[3, 2, 3, 3]);
    let b = random(&[3]);
    let target = NdArray::from_fn(&[3, 6, 6], |i| (i % 2) as f64);

    let mut tape = Tape::new();
    let (xv, kv, bv) = (tape.constant(x.clone()), tape.param(k.clone()), tape.param(b.clone()));
    let out = loss(&mut tape, xv, kv, bv, &target)?;
    tape.backward(out)?;
    let grad = tape.grad(kv).expect("kernel is a parameter").clone();
    println!("loss = {:.6}, {} tape nodes", tape.value(out).item()?, tape.len());

    let eval = |k: &NdArray<f64>| -> rrwnet::Result<f64> {
        let mut t = Tape::new();
        let (xv, kv, bv) = (t.constant(x.clone()), t.constant(k.clone()), t.constant(b.clone()));
        let out = loss(&mut t, xv, kv, bv, &target)?;
        t.value(out).item()
    };
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..k.len() {
        let (mut plus, mut minus) = (k.clone(), k.clone());
        plus.data_mut()[i] += eps;
        minus.data_mut()[i] -= eps;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        worst = worst.max((grad.data()[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    println!("worst relative error over {} kernel weights: {worst:.2e}", k.len());
    Ok(())
}
