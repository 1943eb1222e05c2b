mod support;

use nersplit::bias::{bias_product, combine_log, debiased_nll, BiasTable, TagDistribution};
use nersplit::corpus::{Corpus, SplitRole, TagScheme};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_distribution<R: Rng>(rng: &mut R, k: usize, zeros: bool) -> TagDistribution {
    let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
    if zeros {
        v[rng.gen_range(0..k)] = 0.0;
    }
    if v.iter().sum::<f64>() == 0.0 {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    let mut v: Vec<f64> = v.iter().map(|x| x / s).collect();
    // absorb rounding so the vector validates
    let drift = 1.0 - v.iter().sum::<f64>();
    v[0] = (v[0] + drift).max(0.0);
    TagDistribution::new(v).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let k = rng.gen_range(2..8);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let b = random_distribution(&mut rng, k, trial % 4 == 0);
        let gold = rng.gen_range(0..k);
        let analytic = debiased_nll(&z, Some(&b), gold).grad;
        for i in 0..k {
            let mut up = z.clone();
            up[i] += h;
            let mut down = z.clone();
            down[i] -= h;
            let numeric = (debiased_nll(&up, Some(&b), gold).loss - debiased_nll(&down, Some(&b), gold).loss) / (2.0 * h);
            worst = worst.max((numeric - analytic[i]).abs());
        }
    }
    assert!(worst < 1e-6, "max abs error {worst}");
}

#[test]
fn product_laws_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let k = rng.gen_range(2..9);
        let p = random_distribution(&mut rng, k, false);
        let zeros = rng.gen_bool(0.3);
        let b = random_distribution(&mut rng, k, zeros);
        let pb = bias_product(&p, &b).unwrap();
        let bp = bias_product(&b, &p).unwrap();
        for (x, y) in pb.probs().iter().zip(bp.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((pb.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let u = bias_product(&p, &TagDistribution::uniform(k)).unwrap();
        // identity up to the mass moved by flooring entries of p at 1e-8
        for (x, y) in u.probs().iter().zip(p.probs()) {
            assert!((x - y).abs() <= k as f64 * 1e-8, "{x} vs {y}");
        }
        // combining with a flat bias keeps the winner
        assert_eq!(u.argmax(), p.argmax());
    }
}

proptest! {
    #[test]
    fn shift_invariance(
        lp in prop::collection::vec(-10.0..10.0f64, 2..8),
        c in -50.0..50.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lb: Vec<f64> = lp.iter().map(|_| rng.gen_range(-10.0..0.0)).collect();
        let base = combine_log(&lp, &lb);
        let shifted_p: Vec<f64> = lp.iter().map(|x| x + c).collect();
        let shifted_b: Vec<f64> = lb.iter().map(|x| x + c).collect();
        for other in [combine_log(&shifted_p, &lb), combine_log(&lp, &shifted_b)] {
            for (x, y) in base.iter().zip(&other) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_bias_is_plain_cross_entropy(
        z in prop::collection::vec(-6.0..6.0f64, 2..8),
        g in any::<prop::sample::Index>(),
    ) {
        let gold = g.index(z.len());
        let a = debiased_nll(&z, None, gold);
        let b = debiased_nll(&z, Some(&TagDistribution::uniform(z.len())), gold);
        prop_assert!((a.loss - b.loss).abs() < 1e-9);
        for (x, y) in a.grad.iter().zip(&b.grad) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn table_ignores_document_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = support::mini_corpus(&mut rng, SplitRole::Train, 12, true);
        let scheme = TagScheme::new(train.entity_types.iter().cloned());
        let mut docs = train.documents.clone();
        docs.shuffle(&mut rng);
        let shuffled = Corpus::new(SplitRole::Train, train.tokenizer, docs).unwrap();
        let a = BiasTable::build(&train, &scheme).unwrap();
        let b = BiasTable::build(&shuffled, &scheme).unwrap();
        prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
    }
}

#[test]
fn confident_bias_leaves_little_gradient() {
    // when the biased model already puts almost all mass on the gold label,
    // the tagger receives a much smaller update than under plain training
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let k = rng.gen_range(3..7);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gold = rng.gen_range(0..k);
        let mut b = vec![0.001 / (k - 1) as f64; k];
        b[gold] = 0.999;
        let b = TagDistribution::new(b).unwrap();
        let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let plain = norm(&debiased_nll(&z, None, gold).grad);
        let deb = norm(&debiased_nll(&z, Some(&b), gold).grad);
        assert!(deb < 0.1 * plain, "{deb} vs {plain}");
    }
}
