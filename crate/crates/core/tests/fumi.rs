use dlfumi::fumi::{
    alpha_gradient, code_step_positive, e_step_all, objective, soft_threshold, step_length, update_background_atom,
    update_target_atom, AtomUpdate, Dictionary, Discriminative, LatentPosteriors, SparseCode, TrainingSet,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn random_dict(rng: &mut ChaCha8Rng, d: usize, t: usize, m: usize) -> Dictionary {
    let tg = DMatrix::from_fn(d, t, |_, _| gauss(rng));
    let bg = DMatrix::from_fn(d, m, |_, _| gauss(rng));
    Dictionary::normalized(tg, bg).unwrap()
}

fn random_code(rng: &mut ChaCha8Rng, t: usize, m: usize) -> SparseCode {
    SparseCode {
        target: DVector::from_fn(t, |_, _| gauss(rng)),
        background: DVector::from_fn(m, |_, _| gauss(rng)),
    }
}

/// Smooth part of one positive instance's expected objective.
fn smooth(x: &DVector<f64>, dict: &Dictionary, a: &DVector<f64>, p: f64) -> f64 {
    let code = SparseCode::from_stacked(a, dict.n_target());
    let r_bg = x - dict.background() * &code.background;
    let r_full = &r_bg - dict.target() * &code.target;
    0.5 * (p * r_full.norm_squared() + (1.0 - p) * r_bg.norm_squared())
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (d, t, m) = (91, 3, 3);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dict = random_dict(&mut rng, d, t, m);
        let x = DVector::from_fn(d, |_, _| gauss(&mut rng));
        let code = random_code(&mut rng, t, m);
        let p: f64 = rng.random();
        let g = alpha_gradient(x.as_view(), &dict, &code, p);
        let a = code.stacked();
        let mut fd = DVector::zeros(a.len());
        for j in 0..a.len() {
            let (mut up, mut dn) = (a.clone(), a.clone());
            up[j] += h;
            dn[j] -= h;
            fd[j] = (smooth(&x, &dict, &up, p) - smooth(&x, &dict, &dn, p)) / (2.0 * h);
        }
        worst = worst.max((&g - &fd).norm() / g.norm().max(1e-12));
    }
    assert!(worst < 1e-5, "relative error {worst}");
}

#[test]
fn prox_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let v: f64 = rng.random_range(-3.0..3.0);
        let lambda: f64 = rng.random_range(0.0..1.0);
        let got = soft_threshold(&DVector::from_element(1, v), &[lambda])[0];
        let f = |u: f64| 0.5 * (u - v) * (u - v) + lambda * u.abs();
        let mut best = (f64::INFINITY, 0.0);
        let mut u = -3.0;
        while u <= 3.0 {
            if f(u) < best.0 {
                best = (f(u), u);
            }
            u += 1e-4;
        }
        assert!((got - best.1).abs() < 2e-4, "v={v} lambda={lambda}: {got} vs {}", best.1);
    }
}

struct Problem {
    set: TrainingSet,
    dict: Dictionary,
    codes: Vec<SparseCode>,
    post: LatentPosteriors,
    lambda: f64,
}

fn problem(rng: &mut ChaCha8Rng, d: usize, t: usize, m: usize, n: usize) -> Problem {
    let x = DMatrix::from_fn(d, n, |_, _| gauss(rng));
    // at least one instance of each class
    let positive: Vec<bool> = (0..n).map(|i| i == 0 || (i != 1 && rng.random_bool(0.5))).collect();
    let set = TrainingSet::new(x, positive.clone(), None).unwrap();
    let dict = random_dict(rng, d, t, m);
    let codes = (0..n)
        .map(|i| {
            let mut c = random_code(rng, t, m);
            if !positive[i] {
                c.target.fill(0.0);
            }
            c
        })
        .collect();
    let post = LatentPosteriors {
        p_target: positive.iter().map(|&p| if p { rng.random_range(0.05..1.0) } else { 0.0 }).collect(),
    };
    Problem {
        set,
        dict,
        codes,
        post,
        lambda: 5e-3,
    }
}

/// Exact coordinate minimisation by three-point parabola fits; the objective
/// is quadratic in each atom entry.
fn coordinate_descent(mut atom: DVector<f64>, f: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    for _ in 0..10_000 {
        let mut moved = 0.0f64;
        for j in 0..atom.len() {
            let f0 = f(&atom);
            let mut a = atom.clone();
            a[j] += 1.0;
            let fp = f(&a);
            a[j] -= 2.0;
            let fm = f(&a);
            let curv = fp - 2.0 * f0 + fm;
            if curv <= 0.0 {
                continue;
            }
            let step = -(fp - fm) / (2.0 * curv);
            atom[j] += step;
            moved = moved.max(step.abs());
        }
        if moved < 1e-8 {
            break;
        }
    }
    atom
}

fn with_target(dict: &Dictionary, t: usize, atom: &DVector<f64>) -> Dictionary {
    let mut tg = dict.target().clone();
    tg.set_column(t, atom);
    Dictionary::new(tg, dict.background().clone()).unwrap()
}

fn with_background(dict: &Dictionary, k: usize, atom: &DVector<f64>) -> Dictionary {
    let mut bg = dict.background().clone();
    bg.set_column(k, atom);
    Dictionary::new(dict.target().clone(), bg).unwrap()
}

#[test]
fn atom_updates_minimise_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let pr = problem(&mut rng, 8, 1, 2, 5);
        let penalty = Discriminative::from_dictionary(&pr.dict, 0.5).unwrap();
        let obj = |dict: &Dictionary| objective(&pr.set, dict, &pr.codes, &pr.post, pr.lambda, &penalty).unwrap();

        let closed = update_target_atom(0, &pr.set, &pr.codes, &pr.post, &pr.dict).into_atom().unwrap();
        let f = |a: &DVector<f64>| obj(&with_target(&pr.dict, 0, a));
        let oracle = coordinate_descent(pr.dict.target_atom(0).into_owned(), f);
        assert!((f(&closed) - f(&oracle)).abs() < 1e-6, "target: {} vs {}", f(&closed), f(&oracle));

        for k in 0..2 {
            let closed = match update_background_atom(k, &pr.set, &pr.codes, &pr.post, &pr.dict, &penalty) {
                AtomUpdate::Updated(a) => a,
                AtomUpdate::Stale => panic!("random codes are dense"),
            };
            let f = |a: &DVector<f64>| obj(&with_background(&pr.dict, k, a));
            let oracle = coordinate_descent(pr.dict.background_atom(k).into_owned(), f);
            assert!((f(&closed) - f(&oracle)).abs() < 1e-6, "background {k}: {} vs {}", f(&closed), f(&oracle));
        }
    }
}

#[test]
fn posteriors_are_probabilities_and_zero_on_negatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let pr = problem(&mut rng, 12, 2, 3, 30);
        let post = e_step_all(&pr.set, &pr.dict, &pr.codes, 90.0);
        for (i, &p) in post.p_target.iter().enumerate() {
            assert!((0.0..=1.0).contains(&p));
            if !pr.set.is_positive(i) {
                assert_eq!(p, 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ista_step_never_increases_instance_objective(seed in any::<u64>(), p in 0.0f64..=1.0, lambda in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = random_dict(&mut rng, 16, 2, 3);
        let x = DVector::from_fn(16, |_, _| gauss(&mut rng));
        let eta = step_length(&dict.full()).unwrap();
        let f = |c: &SparseCode| {
            smooth(&x, &dict, &c.stacked(), p) + lambda * (p * c.target.lp_norm(1) + c.background.lp_norm(1))
        };
        let mut code = random_code(&mut rng, 2, 3);
        for _ in 0..20 {
            let next = code_step_positive(x.as_view(), &dict, &code, p, lambda, eta);
            prop_assert!(f(&next) <= f(&code) + 1e-9, "{} -> {}", f(&code), f(&next));
            code = next;
        }
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(v in -10.0f64..10.0, t in 0.0f64..5.0) {
        let s = soft_threshold(&DVector::from_element(1, v), &[t])[0];
        prop_assert!(s.abs() <= v.abs());
        prop_assert!(s == 0.0 || s.signum() == v.signum());
        prop_assert!((v - s).abs() <= t + 1e-12);
    }
}
