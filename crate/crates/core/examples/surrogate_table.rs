use nalgebra::DVector;
use smcwake::models::{ConjugateGaussian1D, GenerativeModel};
use smcwake::numkit::{GaussianDist, RngStream};
use smcwake::trainers::surrogate_objective;

fn main() {
    let model = ConjugateGaussian1D::default();
    let mut rng = RngStream::new(0, 0);
    let z = model.sample_prior(&mut rng);
    let x = model.simulate(&z, &mut rng);
    println!("x = {}", x[0]);
    let root = RngStream::new(1, 0);
    for s in [1e-4, 1e-5, 1e-6, 1e-7] {
        let q = GaussianDist::isotropic(DVector::zeros(1), s).unwrap();
        let e = surrogate_objective(&q, &model, &x, 10_000, 200, &root).unwrap();
        println!("N(0,{s}^2): {:.3} (se {:.3}, sd {:.3})", e.mean, e.se, e.sd);
    }
    let (m, v) = model.posterior_mean_var(x[0]);
    let q = GaussianDist::isotropic(DVector::from_element(1, m), v.sqrt()).unwrap();
    let e = surrogate_objective(&q, &model, &x, 10_000, 200, &root).unwrap();
    println!("posterior: {:.3} (se {:.3}, sd {:.3})", e.mean, e.se, e.sd);
}
