use std::time::Instant;

use benet_core::losses::{objective, LossConfig};
use benet_core::{BENetModel, EncoderDecoderConfig, Graph, Label, Scalar, Tensor};

fn run<T: Scalar>(steps: usize) {
    let model = BENetModel::<T>::new(EncoderDecoderConfig::default(), 1).unwrap();
    let x = Tensor::<T>::from_f64(&[8, 3, 32, 32], &(0..8 * 3 * 1024).map(|i| ((i * 37) % 101) as f64 / 101.0).collect::<Vec<_>>()).unwrap();
    let labels: Vec<Label> = (0..8).map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake }).collect();
    let t0 = Instant::now();
    for _ in 0..steps {
        let g = Graph::new();
        let p = model.bind(&g, true);
        let xv = g.constant(x.clone());
        let f = model.forward(&g, &p, xv).unwrap();
        let (loss, _) = objective(&g, f.bias, f.probability, &labels, &LossConfig::default()).unwrap();
        let _grads = g.backward(loss).unwrap();
    }
    println!("{}: {:.2} ms/step", std::any::type_name::<T>(), t0.elapsed().as_secs_f64() * 1e3 / steps as f64);
}

fn main() {
    run::<f32>(20);
    run::<f64>(20);
}
