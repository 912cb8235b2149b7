use nbint::{eval_potential, gradient, hessian, third_contract, Configuration, MassVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(rng: &mut ChaCha8Rng) -> (MassVector, Configuration) {
    loop {
        let n = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=3);
        let coords: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let q = Configuration::new(n, d, coords).unwrap();
        if q.min_separation() < 0.3 {
            continue;
        }
        let m = MassVector::new((0..n).map(|_| rng.gen_range(0.1..2.0)).collect()).unwrap();
        return (m, q);
    }
}

fn shifted(q: &Configuration, dir: &[f64], h: f64) -> Configuration {
    let c: Vec<f64> = q.coords().iter().zip(dir).map(|(a, b)| a + h * b).collect();
    Configuration::new(q.n(), q.d(), c).unwrap()
}

fn unit(dim: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[k] = 1.0;
    e
}

fn rel(exact: &[f64], approx: &[f64]) -> f64 {
    let scale = exact.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1e-300);
    exact
        .iter()
        .zip(approx)
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
        / scale
}

const H: f64 = 1e-5;

#[test]
fn gradient_hessian_third_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (m, q) = random_system(&mut rng);
        let dim = q.coords().len();
        let g = gradient(&m, &q).unwrap();
        let fd: Vec<f64> = (0..dim)
            .map(|k| {
                let e = unit(dim, k);
                (eval_potential(&m, &shifted(&q, &e, H)).unwrap()
                    - eval_potential(&m, &shifted(&q, &e, -H)).unwrap())
                    / (2.0 * H)
            })
            .collect();
        assert!(rel(&g, &fd) <= 1e-5);

        let hs = hessian(&m, &q).unwrap();
        let mut fd = Vec::new();
        for k in 0..dim {
            let e = unit(dim, k);
            let (gp, gm) = (gradient(&m, &shifted(&q, &e, H)).unwrap(), gradient(&m, &shifted(&q, &e, -H)).unwrap());
            fd.extend(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * H)));
        }
        assert!(rel(hs.as_slice(), &fd) <= 1e-5);

        let dirs: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let t = third_contract(&m, &q, &dirs[0], &dirs[1], &dirs[2]).unwrap();
        let bilinear = |q: &Configuration| {
            let hq = hessian(&m, q).unwrap();
            let hz = &hq * nalgebra::DVector::from_column_slice(&dirs[2]);
            hz.iter().zip(&dirs[1]).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = (bilinear(&shifted(&q, &dirs[0], H)) - bilinear(&shifted(&q, &dirs[0], -H))) / (2.0 * H);
        let scale = t.abs().max(hs.amax());
        assert!((t - fd).abs() <= 1e-5 * scale, "{t} vs {fd}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_homogeneous(seed in any::<u64>(), lambda in 0.2f64..5.0) {
        let (m, q) = random_system(&mut ChaCha8Rng::seed_from_u64(seed));
        let v = eval_potential(&m, &q).unwrap();
        let vl = eval_potential(&m, &q.scaled(lambda)).unwrap();
        prop_assert!((vl - v / lambda).abs() <= 1e-12 * v.abs());
        let g = gradient(&m, &q).unwrap();
        let gl = gradient(&m, &q.scaled(lambda)).unwrap();
        let want: Vec<f64> = g.iter().map(|x| x / (lambda * lambda)).collect();
        prop_assert!(rel(&want, &gl) <= 1e-12);
        // Euler: q·∇V = -V
        let euler: f64 = q.coords().iter().zip(&g).map(|(a, b)| a * b).sum();
        prop_assert!((euler + v).abs() <= 1e-12 * v.abs());
    }

    #[test]
    fn potential_is_translation_invariant(seed in any::<u64>(), shift in -3.0f64..3.0) {
        let (m, q) = random_system(&mut ChaCha8Rng::seed_from_u64(seed));
        let t = vec![shift; q.d()];
        let (a, b) = (eval_potential(&m, &q).unwrap(), eval_potential(&m, &q.translated(&t)).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        let g = gradient(&m, &q).unwrap();
        for axis in 0..q.d() {
            let s: f64 = (0..q.n()).map(|i| g[i * q.d() + axis]).sum();
            prop_assert!(s.abs() <= 1e-10 * g.iter().fold(1.0_f64, |a, x| a.max(x.abs())));
        }
    }
}
