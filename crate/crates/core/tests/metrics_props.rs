mod oracles;

use hypnokit_core::metrics::{
    bootstrap_distribution, classification_metrics, cluster_bootstrap_ci, confusion_matrix,
    exact_bootstrap_distribution, largest_remainder_quotas, percentile, stratified_sample, MetricsError,
    SubjectPredictions,
};
use hypnokit_core::{LabeledPredictions, Stage};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashSet};

fn subj(id: &str, truth: &[usize], pred: &[usize]) -> SubjectPredictions {
    SubjectPredictions {
        subject_id: id.into(),
        truth: truth.iter().map(|&i| Stage::ALL[i]).collect(),
        pred: pred.iter().map(|&i| Stage::ALL[i]).collect(),
    }
}

fn random_fixture(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n = rng.random_range(1..300);
    let classes = rng.random_range(1..=5);
    let skill = rng.random_range(0.0..1.0);
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let pred = truth.iter().map(|&t| if rng.random_bool(skill) { t } else { rng.random_range(0..5) }).collect();
    (truth, pred)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn thousand_fixtures_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..1000 {
        let (truth, pred) = random_fixture(&mut rng);
        // split into two subjects so pooling is exercised too
        let cut = truth.len() / 2;
        let mut subjects = vec![subj("b", &truth[cut..], &pred[cut..])];
        if cut > 0 {
            subjects.push(subj("a", &truth[..cut], &pred[..cut]));
        }
        let data = LabeledPredictions::new(subjects).unwrap();
        let m = classification_metrics(&data);
        let o = oracles::brute_metrics(&truth, &pred);
        assert_eq!(confusion_matrix(&data).counts, o.confusion, "fixture {k}");
        assert!(close(m.accuracy, o.accuracy), "fixture {k}");
        assert!(close(m.macro_f1, o.macro_f1), "fixture {k}");
        assert!(close(m.kappa, o.kappa), "fixture {k}: {} vs {}", m.kappa, o.kappa);
        for c in 0..5 {
            assert!(close(m.per_class_f1[c], o.f1[c]), "fixture {k} class {c}");
        }
    }
}

#[test]
fn two_subject_bootstrap_has_quarter_half_quarter_law() {
    // one subject always right, one always wrong, same size
    let data = LabeledPredictions::new(vec![subj("good", &[0, 2, 4, 2], &[0, 2, 4, 2]), subj("bad", &[0, 2, 4, 2], &[1, 3, 3, 0])]).unwrap();
    let mut exact: BTreeMap<u64, f64> = BTreeMap::new();
    for (m, p) in exact_bootstrap_distribution(&data).unwrap() {
        *exact.entry((m.accuracy * 4.0).round() as u64).or_default() += p;
    }
    assert_eq!(exact.into_iter().collect::<Vec<_>>(), vec![(0, 0.25), (2, 0.5), (4, 0.25)]);

    let n = 20_000;
    let dist = bootstrap_distribution(&data, n, 11).unwrap();
    for (acc, p) in [(0.0, 0.25), (0.5, 0.5), (1.0, 0.25)] {
        let freq = dist.iter().filter(|m| close(m.accuracy, acc)).count() as f64 / n as f64;
        // five standard errors at n = 20000
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 5.0 * se, "accuracy {acc}: {freq}");
    }
}

#[test]
fn bootstrap_is_reproducible_and_needs_two_subjects() {
    let data = LabeledPredictions::new(vec![subj("a", &[0, 1, 2], &[0, 1, 1]), subj("b", &[2, 3, 4], &[2, 3, 4]), subj("c", &[1, 1, 0], &[1, 0, 0])]).unwrap();
    let a = cluster_bootstrap_ci(&data, 500, 0.95, 5).unwrap();
    let b = cluster_bootstrap_ci(&data, 500, 0.95, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.accuracy[0] <= a.accuracy[1] && a.kappa[0] <= a.kappa[1] && a.macro_f1[0] <= a.macro_f1[1]);
    assert!(cluster_bootstrap_ci(&data, 500, 1.5, 5).is_err());
    let one = LabeledPredictions::new(vec![subj("a", &[0, 1], &[0, 1])]).unwrap();
    assert!(matches!(bootstrap_distribution(&one, 10, 1), Err(MetricsError::Degenerate(_))));
}

#[test]
fn percentile_interpolates() {
    let v = [1.0, 2.0, 4.0, 8.0];
    assert_eq!(percentile(&v, 0.0), 1.0);
    assert_eq!(percentile(&v, 1.0), 8.0);
    assert_eq!(percentile(&v, 0.5), 3.0);
    assert!(close(percentile(&v, 0.9), 4.0 + 0.7 * 4.0));
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(LabeledPredictions::new(vec![]).is_err());
    assert!(LabeledPredictions::new(vec![subj("a", &[0, 1], &[0])]).is_err());
    assert!(LabeledPredictions::new(vec![subj("a", &[], &[])]).is_err());
}

/// Quotas from floating shares, checked against the defining properties
/// rather than by re-running the allocation.
fn check_quotas(counts: [usize; 5], k: usize, q: [usize; 5]) {
    let total: usize = counts.iter().sum();
    assert_eq!(q.iter().sum::<usize>(), k, "{counts:?} k {k}");
    let share: Vec<f64> = counts.iter().map(|&c| k as f64 * c as f64 / total as f64).collect();
    for s in 0..5 {
        assert!((q[s] as f64 - share[s]).abs() < 1.0, "{counts:?} k {k} stage {s}");
        assert!(q[s] as f64 >= share[s].floor() - 1e-9);
    }
    // a stage rounded up never has a smaller remainder than one rounded down
    for up in (0..5).filter(|&s| q[s] as f64 > share[s] + 1e-9) {
        for down in (0..5).filter(|&s| (q[s] as f64) < share[s] - 1e-9) {
            assert!(share[up].fract() >= share[down].fract() - 1e-9, "{counts:?} k {k}");
        }
    }
}

#[test]
fn largest_remainder_on_thousand_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..1000 {
        let counts: [usize; 5] = std::array::from_fn(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(0..400) });
        if counts.iter().sum::<usize>() == 0 {
            continue;
        }
        let k = rng.random_range(0..=counts.iter().sum::<usize>().min(60));
        check_quotas(counts, k, largest_remainder_quotas(counts, k));
    }
    // ties go to the earlier stage
    assert_eq!(largest_remainder_quotas([1, 1, 1, 1, 1], 3), [1, 1, 1, 0, 0]);
    assert_eq!(largest_remainder_quotas([10, 0, 30, 0, 60], 10), [1, 0, 3, 0, 6]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_ignore_epoch_order(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200), seed in any::<u64>()) {
        let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let a = classification_metrics(&LabeledPredictions::new(vec![subj("a", &t, &p)]).unwrap());
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (t2, p2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let b = classification_metrics(&LabeledPredictions::new(vec![subj("a", &t2, &p2)]).unwrap());
        prop_assert!(close(a.accuracy, b.accuracy) && close(a.kappa, b.kappa) && close(a.macro_f1, b.macro_f1));
    }

    #[test]
    fn kappa_is_one_exactly_for_perfect_agreement(truth in prop::collection::vec(0usize..5, 1..100), flip in prop::option::of(any::<prop::sample::Index>())) {
        let mut pred = truth.clone();
        if let Some(i) = flip {
            let i = i.index(pred.len());
            pred[i] = (pred[i] + 1) % 5;
        }
        let m = classification_metrics(&LabeledPredictions::new(vec![subj("a", &truth, &pred)]).unwrap());
        let perfect = truth == pred;
        let single_class = truth.iter().all(|&t| t == truth[0]);
        if perfect && single_class {
            prop_assert!(m.kappa_degenerate);
            prop_assert_eq!(m.kappa, 0.0);
        } else {
            prop_assert_eq!(close(m.kappa, 1.0), perfect);
        }
    }

    #[test]
    fn stratified_sample_respects_quotas(stages in prop::collection::vec(0usize..5, 1..120), k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let epochs: Vec<(String, Stage)> = stages.iter().enumerate().map(|(i, &s)| (format!("e{i:03}"), Stage::ALL[s])).collect();
        let k = ((epochs.len() as f64) * k_frac) as usize;
        let ids = stratified_sample(&epochs, k, seed).unwrap();
        prop_assert_eq!(ids.len(), k);
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), k);
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let mut counts = [0usize; 5];
        for &s in &stages {
            counts[s] += 1;
        }
        let quotas = largest_remainder_quotas(counts, k);
        let mut got = [0usize; 5];
        for id in &ids {
            let i: usize = id[1..].parse().unwrap();
            got[stages[i]] += 1;
        }
        prop_assert_eq!(got, quotas);
        prop_assert_eq!(&stratified_sample(&epochs, k, seed).unwrap(), &ids);
        prop_assert!(stratified_sample(&epochs, epochs.len() + 1, seed).is_err());
    }
}
