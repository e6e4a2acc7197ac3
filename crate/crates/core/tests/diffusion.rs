use manigen_core::diffusion::*;
use manigen_core::nldr::{standardize_embedding, Embedding, Method};
use manigen_core::rng::seeded;
use manigen_core::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

/// Mean and variance of x_t after iterating single forward steps
/// `x <- sqrt(1 - beta) x + sqrt(beta) z` from a fixed x0.
fn iterate_forward(x0: f64, t: usize, sched: &NoiseSchedule, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = seeded(seed);
    let mut xs = vec![x0; draws];
    for s in 1..=t {
        let (a, b) = ((1.0 - sched.beta(s)).sqrt(), sched.beta(s).sqrt());
        for x in xs.iter_mut() {
            *x = a * *x + b * rng.sample::<f64, _>(StandardNormal);
        }
    }
    moments(&xs)
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn closed_form_marginal_matches_iterated_steps() {
    let sched = linear_schedule(1000, 1e-4, 0.02).unwrap();
    let draws = 100_000;
    let x0 = 1.5f64;
    for (k, &t) in [1usize, 500, 1000].iter().enumerate() {
        let (im, iv) = iterate_forward(x0, t, &sched, draws, 10 + k as u64);
        let mut rng = seeded(20 + k as u64);
        let eps: Vec<f64> = (0..draws).map(|_| rng.sample(StandardNormal)).collect();
        let x0t = Tensor::from_f64(vec![draws, 1], &vec![x0; draws]).unwrap();
        let epst = Tensor::from_f64(vec![draws, 1], &eps).unwrap();
        let (cm, cv) = moments(&q_sample(&x0t, t, &epst, &sched).unwrap().to_f64());
        let se = (iv / draws as f64).sqrt() + (cv / draws as f64).sqrt();
        assert!((im - cm).abs() < 3.0 * se, "t={t}: mean {im} vs {cm}");
        assert!((iv / cv - 1.0).abs() < 0.02, "t={t}: var {iv} vs {cv}");
    }
}

fn two_mode(n: usize) -> Tensor {
    let mut rng = seeded(3);
    let mut x = Vec::with_capacity(2 * n);
    for i in 0..n {
        let c = if i % 2 == 0 { 2.0 } else { -2.0 };
        x.push(c + 0.3 * rng.sample::<f64, _>(StandardNormal));
        x.push(0.3 * rng.sample::<f64, _>(StandardNormal));
    }
    let e = Embedding {
        method: Method::Isomap,
        coords: Tensor::matrix_from_f64(n, 2, &x).unwrap(),
        hyper: Default::default(),
        standardization: None,
        diagnostics: Default::default(),
    };
    standardize_embedding(&e).unwrap().coords
}

#[test]
fn denoiser_halves_its_loss_on_two_modes() {
    let x = two_mode(2000);
    let sched = linear_schedule(1000, 1e-4, 0.02).unwrap();
    let spec = DenoiserSpec::standard(2).unwrap();
    let cfg = DiffusionConfig { epochs: 100, batch_size: 64, lr: 1e-4, seed: 1, ..Default::default() };
    let r = train_diffusion(&x, &spec, &sched, &cfg).unwrap();
    eprintln!("initial {} final {} last epoch {}", r.initial_loss, r.final_loss, r.loss_history.last().unwrap());
    assert!(r.final_loss < 0.5 * r.initial_loss);
}
