use super::*;
use crate::data::ImageTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::LN_2;

fn t(v: &[f64], shape: &[i64]) -> Tensor {
    Tensor::from_slice(v).view(shape)
}

fn out(sample: &[f64], batch: Option<f64>) -> DiscOutput {
    DiscOutput {
        sample_logits: Tensor::from_slice(sample),
        batch_logit: batch.map(|b| Tensor::from(b)),
    }
}

#[test]
fn scon_zero_on_identical() {
    let s = StyleCode([0.3, -1.0, 2.0, 0.0, 0.5, 0.5, 1.0, -2.0]);
    assert!(style_consistency_loss(&[s; 7]).unwrap().abs() < 1e-15);
}

#[test]
fn scon_population_variance() {
    let v = style_consistency(&t(&[0.0, 2.0], &[2, 1])).unwrap().double_value(&[]);
    assert!((v - 1.0).abs() < 1e-15);
    assert!(style_consistency(&t(&[1.0], &[1, 1])).is_err());
    assert!(style_consistency_loss(&[StyleCode::zeros()]).is_err());
}

#[test]
fn scon_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let styles: Vec<_> = (0..7).map(|_| StyleCode::sample(&mut rng)).collect();
    let mut rev = styles.clone();
    rev.reverse();
    let a = style_consistency_loss(&styles).unwrap();
    let b = style_consistency_loss(&rev).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn derangement_of_two_swaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        assert_eq!(derangement(2, &mut rng).unwrap(), vec![1, 0]);
    }
    assert!(derangement(1, &mut rng).is_err());
    assert!(shuffle_styles(&[StyleCode::zeros()], &mut rng).is_err());
}

#[test]
fn derangement_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let p = derangement(7, &mut rng).unwrap();
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..7).collect::<Vec<_>>());
        assert!(p.iter().enumerate().all(|(i, &j)| i != j));
    }
}

#[test]
fn derangement_of_three_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let hits = (0..n).filter(|_| derangement(3, &mut rng).unwrap() == vec![1, 2, 0]).count();
    let frac = hits as f64 / n as f64;
    assert!((frac - 0.5).abs() < 0.02, "{frac}");
}

#[test]
fn shuffle_preserves_multiset() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let styles: Vec<_> = (0..7).map(|i| StyleCode([i as f64; 8])).collect();
    let shuffled = shuffle_styles(&styles, &mut rng).unwrap();
    let mut keys: Vec<i32> = shuffled.iter().map(|s| s.0[0] as i32).collect();
    assert!(keys.iter().enumerate().all(|(i, &k)| i as i32 != k));
    keys.sort_unstable();
    assert_eq!(keys, (0..7).collect::<Vec<_>>());
}

#[test]
fn rms_offset() {
    let x = Tensor::rand([2, 3, 64, 64], (Kind::Double, tch::Device::Cpu));
    let d = rms_distance(&(&x + 0.1), &x).unwrap();
    for v in Vec::<f64>::try_from(d).unwrap() {
        assert!((v - 0.1).abs() < 1e-9);
    }
    let z = rms_distance(&x, &x).unwrap().sum(Kind::Double).double_value(&[]);
    assert_eq!(z, 0.0);
    assert!(rms_distance(&x, &x.narrow(2, 0, 32)).is_err());
}

#[test]
fn rms_monotone_along_segment() {
    let x = Tensor::rand([1, 3, 16, 16], (Kind::Double, tch::Device::Cpu));
    let y = Tensor::rand([1, 3, 16, 16], (Kind::Double, tch::Device::Cpu));
    let mut prev = f64::INFINITY;
    for k in 0..=10 {
        let a = k as f64 / 10.0;
        let p = &y * (1.0 - a) + &x * a;
        let d = rms_distance(&p, &x).unwrap().double_value(&[0]);
        assert!(d < prev || d == 0.0);
        prev = d;
    }
    assert_eq!(prev, 0.0);
}

#[test]
fn pyramid_distance_on_constant_offset() {
    let x = Tensor::rand([2, 3, 32, 32], (Kind::Double, tch::Device::Cpu));
    let p = PyramidDistance::default();
    let d = p.distance(&(&x - 0.25), &x).unwrap();
    for v in Vec::<f64>::try_from(d).unwrap() {
        assert!((v - 0.25).abs() < 1e-9, "{v}");
    }
    let z = p.distance(&x, &x).unwrap().abs().max().double_value(&[]);
    assert_eq!(z, 0.0);
    assert_eq!(pyramid_down(&x).size(), vec![2, 3, 16, 16]);
}

#[test]
fn adversarial_closed_forms() {
    assert!((adv_g_loss(&out(&[0.0], None)).double_value(&[]) - LN_2).abs() < 1e-9);
    assert!((adv_g_loss(&out(&[0.0, 0.0], Some(0.0))).double_value(&[]) - 2.0 * LN_2).abs() < 1e-9);
    assert!(adv_g_loss(&out(&[60.0, 60.0], Some(60.0))).double_value(&[]) < 1e-20);
    let d = adv_d_loss(&out(&[0.0; 3], Some(0.0)), &out(&[0.0; 3], Some(0.0))).unwrap();
    assert!((d.double_value(&[]) - 4.0 * LN_2).abs() < 1e-9);
    let d = adv_d_loss(&out(&[0.0; 3], None), &out(&[0.0; 3], None)).unwrap();
    assert!((d.double_value(&[]) - 2.0 * LN_2).abs() < 1e-9);
    let d = adv_d_loss(&out(&[60.0; 3], Some(60.0)), &out(&[-60.0; 3], Some(-60.0))).unwrap();
    assert!(d.double_value(&[]) < 1e-20);
    assert!(adv_d_loss(&out(&[0.0; 3], None), &out(&[0.0; 3], Some(0.0))).is_err());
    assert!(adv_d_loss(&out(&[0.0; 3], None), &out(&[0.0; 2], None)).is_err());
}

#[test]
fn adversarial_monotone() {
    let mut prev_g = f64::INFINITY;
    let mut prev_d = f64::INFINITY;
    for k in -10..=10 {
        let l = k as f64;
        let g = adv_g_loss(&out(&[l, l], Some(l))).double_value(&[]);
        let d = adv_d_loss(&out(&[l], Some(l)), &out(&[-l], Some(-l))).unwrap().double_value(&[]);
        assert!(g < prev_g && d < prev_d);
        prev_g = g;
        prev_d = d;
    }
}

struct Linear(Tensor);

impl SampleCritic for Linear {
    fn sample_logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.flatten(1, -1).matmul(&self.0))
    }
}

struct Constant;

impl SampleCritic for Constant {
    fn sample_logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.flatten(1, -1).sum_dim_intlist(1, false, x.kind()) * 0.0)
    }
}

#[test]
fn r1_linear_probe() {
    let w = Tensor::randn([3 * 4 * 4], (Kind::Double, tch::Device::Cpu));
    let x = Tensor::randn([5, 3, 4, 4], (Kind::Double, tch::Device::Cpu));
    let got = r1_penalty(&Linear(w.shallow_clone()), &x, 10.0).unwrap().double_value(&[]);
    let want = 5.0 * w.square().sum(Kind::Double).double_value(&[]);
    assert!((got - want).abs() < 1e-9 * want);
    let zero = r1_penalty(&Constant, &x, 10.0).unwrap().double_value(&[]);
    assert_eq!(zero, 0.0);
}

#[test]
fn mode_seeking_values() {
    let a = ImageTensor::constant(8, 0.5);
    let b = ImageTensor::constant(8, -0.5);
    let mut za = StyleCode::zeros();
    let mut zb = StyleCode::zeros();
    za.0[0] = 1.0;
    zb.0[1] = 1.0;
    assert!((mode_seeking_penalty(&a, &b, &za, &zb).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(mode_seeking_penalty(&a, &a, &za, &zb).unwrap(), 0.0);
    assert!(mode_seeking_penalty(&a, &b, &za, &za).is_err());
    let c = ImageTensor::constant(8, 0.0);
    assert!(mode_seeking_penalty(&a, &b, &za, &zb).unwrap() < mode_seeking_penalty(&a, &c, &za, &zb).unwrap());
}

#[test]
fn total_composition() {
    let r = LossReport {
        adv_g: 1.0,
        scon: 1.0,
        cyc_l2: 0.75,
        cyc_perceptual: 0.25,
        ..Default::default()
    };
    assert_eq!(total_loss(&r, &LossWeights::default()), 31.0);
    assert_eq!(total_loss(&LossReport::default(), &LossWeights::default()), 0.0);
    let bad = LossReport { r1: f64::NAN, ..r };
    assert_eq!(bad.non_finite_field(), Some("r1"));
}
