//! Backpropagation against central finite differences on random networks.
//!
//!     cargo run --release --example gradient_check

use cellfree_energy::config::make_rng;
use cellfree_energy::nn::{Cache, Mlp};
use rand::Rng;

fn main() {
    let mut rng = make_rng(5, "gradcheck-example");
    let h = 1e-5;
    for trial in 0..8 {
        let depth = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=12)).collect();
        let mut net = Mlp::orthogonal(&sizes, 2f64.sqrt(), 1.0, &mut rng);
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        // scalar loss: w . f(x)
        let loss = |n: &Mlp| n.forward(&x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();

        let mut cache = Cache::default();
        net.forward_cached(&x, &mut cache).unwrap();
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&cache, &w, &mut grad);

        let mut worst: f64 = 0.0;
        for i in 0..net.num_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net);
            net.params_mut()[i] = orig - h;
            let down = loss(&net);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        println!("trial {trial}: shape {sizes:?}, {} params, max rel err {worst:.2e}", net.num_params());
    }
}
