//! Property tests for the invariants the pipelines rely on.

use std::collections::{BTreeMap, HashMap};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use twin_core::corpus::{Chamber, Congressperson, CorpusStore, Party, RollCall, Tweet, Vote};
use twin_core::dkps::{DkpsMode, DkpsModel};
use twin_core::flipscore::{quantize_scores, score_bill, validate, FlipScoreEntry, DEFAULT_EPSILON};
use twin_core::numerics::{
    classical_mds, euclidean, fld_fit, fld_risk, pairwise_euclidean, select_dim_profile_likelihood,
};
use twin_core::stats::{kendall_tau, knn_predict, signed_rank_distribution, stratified_folds};
use twin_core::topics::{classify, corpus_stats, TopicLabel, TopicModel};

fn points(n: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, dim), n)
}

fn rotation(theta: f64, phi: f64) -> [[f64; 3]; 3] {
    let (c, s) = (theta.cos(), theta.sin());
    let (cp, sp) = (phi.cos(), phi.sin());
    // Rz(theta)·Rx(phi)
    [[c, -s * cp, s * sp], [s, c * cp, -c * sp], [0.0, sp, cp]]
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mds_is_invariant_to_rigid_motion(
        pts in points(4..15, 3),
        theta in 0.0..6.3f64,
        phi in 0.0..6.3f64,
        shift in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        let r = rotation(theta, phi);
        let moved: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| (0..3).map(|i| (0..3).map(|j| r[i][j] * p[j]).sum::<f64>() + shift[i]).collect())
            .collect();
        let a = classical_mds(&pairwise_euclidean(&pts).unwrap(), Some(3)).unwrap();
        let b = classical_mds(&pairwise_euclidean(&moved).unwrap(), Some(3)).unwrap();
        let da = pairwise_euclidean(&a.coords).unwrap();
        let db = pairwise_euclidean(&b.coords).unwrap();
        let scale = pts.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        let rows = |d: &twin_core::numerics::DistanceMatrix| d.rows().map(<[f64]>::to_vec).collect::<Vec<_>>();
        prop_assert!(max_abs_diff(&rows(&da), &rows(&db)) <= 1e-7 * scale);
    }

    #[test]
    fn mds_coordinates_are_centred(pts in points(3..15, 4), d in 1usize..4) {
        let mds = classical_mds(&pairwise_euclidean(&pts).unwrap(), Some(d)).unwrap();
        let scale = pts.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..d {
            let mean = mds.coords.iter().map(|r| r[j]).sum::<f64>() / mds.coords.len() as f64;
            prop_assert!(mean.abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn fld_predictions_survive_positive_scaling(
        pts in points(6..30, 3),
        s in 0.01..100.0f64,
    ) {
        let labels: Vec<bool> = (0..pts.len()).map(|i| i % 2 == 1).collect();
        let scaled: Vec<Vec<f64>> = pts.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        let a = fld_fit(&pts, &labels).unwrap();
        let b = fld_fit(&scaled, &labels).unwrap();
        // Predictions may only differ for points sitting on the boundary.
        for (p, q) in pts.iter().zip(&scaled) {
            let margin = (a.project(p) - a.threshold).abs();
            let norm = a.w.iter().map(|w| w * w).sum::<f64>().sqrt() * p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if margin > 1e-6 * norm.max(1e-12) {
                prop_assert_eq!(a.predict(p), b.predict(q));
            }
        }
    }

    #[test]
    fn fld_risk_and_flipped_risk_sum_to_one(pts in points(4..30, 2)) {
        let labels: Vec<bool> = (0..pts.len()).map(|i| i % 3 == 0).collect();
        let model = fld_fit(&pts, &labels).unwrap();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let total = fld_risk(&model, &pts, &labels).unwrap() + fld_risk(&model, &pts, &flipped).unwrap();
        prop_assert_eq!(total, 1.0);
    }

    #[test]
    fn dimension_selection_ignores_positive_scale(
        mut values in prop::collection::vec(0.001..100.0f64, 2..30),
        exp in -3i32..4,
    ) {
        values.sort_by(|a, b| b.total_cmp(a));
        // Powers of two scale every value exactly.
        let c = 2f64.powi(exp);
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        prop_assert_eq!(select_dim_profile_likelihood(&values), select_dim_profile_likelihood(&scaled));
    }

    #[test]
    fn knn_ignores_training_order(
        pts in points(3..25, 2),
        query in prop::collection::vec(-10.0..10.0f64, 2),
        k_pick in 0usize..100,
        perm_seed in any::<u64>(),
    ) {
        let y: Vec<u8> = (0..pts.len()).map(|i| (i % 3) as u8).collect();
        let k = 1 + k_pick % pts.len();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut state = perm_seed;
        for i in (1..order.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (state >> 33) as usize % (i + 1));
        }
        let px: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let py: Vec<u8> = order.iter().map(|&i| y[i]).collect();
        // Only meaningful when distances are distinct.
        let mut d: Vec<f64> = pts.iter().map(|p| euclidean(p, &query)).collect();
        d.sort_by(f64::total_cmp);
        prop_assume!(d.windows(2).all(|w| w[1] - w[0] > 1e-9));
        prop_assert_eq!(knn_predict(&pts, &y, &query, k).unwrap(), knn_predict(&px, &py, &query, k).unwrap());
    }

    #[test]
    fn kendall_symmetry_and_reversal(
        pairs in prop::collection::vec((0i32..6, 0i32..6), 3..20),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        match (kendall_tau(&x, &y), kendall_tau(&y, &x), kendall_tau(&x, &neg)) {
            (Ok(a), Ok(b), Ok(c)) => {
                prop_assert!((a.statistic - b.statistic).abs() <= 1e-12);
                prop_assert!((a.p_value - b.p_value).abs() <= 1e-12);
                prop_assert!((a.statistic + c.statistic).abs() <= 1e-12);
                prop_assert!((a.p_value - c.p_value).abs() <= 1e-12);
            }
            (Err(_), Err(_), Err(_)) => {}
            other => prop_assert!(false, "inconsistent definedness: {:?}", other),
        }
    }

    #[test]
    fn signed_rank_distribution_sums_to_one(values in prop::collection::vec(0.1..5.0f64, 1..16)) {
        let ranks = twin_core::stats::midranks(&values);
        let total: f64 = signed_rank_distribution(&ranks).iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn stratified_folds_partition(
        labels in prop::collection::vec(0u8..3, 2..60),
        folds in 2usize..10,
        seed in any::<u64>(),
    ) {
        let f = stratified_folds(&labels, folds, seed);
        prop_assert_eq!(f.len(), labels.len());
        prop_assert!(f.iter().all(|&k| k < folds));
        let mut sizes = vec![0usize; folds];
        for &k in &f {
            sizes[k] += 1;
        }
        let used: Vec<usize> = sizes.iter().copied().filter(|&s| s > 0).collect();
        prop_assert!(used.iter().max().unwrap() - used.iter().min().unwrap() <= 1);
        prop_assert_eq!(f, stratified_folds(&labels, folds, seed));
    }
}

fn ts(day: i64) -> chrono::DateTime<Utc> {
    Utc.timestamp_opt(1_600_000_000 + day * 86_400, 0).unwrap()
}

fn member(handle: &str, party: Party, chamber: Chamber) -> Congressperson {
    Congressperson {
        handle: handle.into(),
        name: handle.to_uppercase(),
        party,
        chamber,
        state: "OH".into(),
    }
}

fn store_from(days: &[(u8, i64)]) -> CorpusStore {
    let tweets = days
        .iter()
        .enumerate()
        .map(|(i, &(h, d))| Tweet {
            tweet_id: format!("t{i}"),
            handle: format!("h{}", h % 3),
            text: format!("tweet {i}"),
            created_at: ts(d),
            is_retweet: false,
        })
        .collect();
    let roster = (0..3).map(|i| member(&format!("h{i}"), Party::Democrat, Chamber::House)).collect();
    CorpusStore::from_parts(tweets, roster).unwrap()
}

proptest! {
    #[test]
    fn split_partitions_an_authors_tweets(days in prop::collection::vec((0u8..3, 0i64..400), 1..60), cut in 0i64..400) {
        let store = store_from(&days);
        for h in ["h0", "h1", "h2"] {
            let all = store.author_tweets(h).unwrap();
            let (pre, post) = store.split_at(h, ts(cut)).unwrap();
            prop_assert_eq!(pre.len() + post.len(), all.len());
            prop_assert!(pre.iter().all(|t| t.created_at < ts(cut)));
            prop_assert!(post.iter().all(|t| t.created_at >= ts(cut)));
        }
    }

    #[test]
    fn tweets_before_is_monotone(days in prop::collection::vec((0u8..3, 0i64..400), 1..60), a in 0i64..400, b in 0i64..400) {
        let store = store_from(&days);
        let (lo, hi) = (a.min(b), a.max(b));
        for h in ["h0", "h1", "h2"] {
            let early = store.tweets_before(h, ts(lo)).unwrap();
            let late = store.tweets_before(h, ts(hi)).unwrap();
            prop_assert!(early.len() <= late.len());
            prop_assert!(early.iter().all(|t| late.iter().any(|u| u.tweet_id == t.tweet_id)));
        }
    }

    #[test]
    fn topic_shares_sum_to_one(days in prop::collection::vec((0u8..3, 0i64..1200), 1..80), picks in prop::collection::vec(0usize..6, 80)) {
        let store = store_from(&days);
        let labels: HashMap<String, TopicLabel> = store
            .tweets()
            .iter()
            .enumerate()
            .map(|(i, t)| (t.tweet_id.clone(), TopicLabel::ALL[picks[i]]))
            .collect();
        let s = corpus_stats(&store, &labels);
        prop_assert_eq!(s.unlabeled, 0);
        for shares in s.yearly_topic_shares.values() {
            prop_assert!((shares.values().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        prop_assert_eq!(s.per_author.values().sum::<usize>(), store.tweets().len());
    }

    #[test]
    fn classify_ignores_a_common_score_shift(
        w in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 6),
        b in prop::collection::vec(-1.0..1.0f64, 6),
        x in prop::collection::vec(-1.0..1.0f64, 3),
        shift in -100.0..100.0f64,
    ) {
        let model = |biases: Vec<f64>| TopicModel {
            weights: w.clone(),
            biases,
            lambda: 0.0,
            iterations: 0,
            final_objective: 0.0,
            final_gradient_norm: 0.0,
            converged: true,
            objective_trace: vec![],
        };
        let scores = model(b.clone()).scores(&x);
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        // A shift can reorder scores that differ only by rounding.
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        let shifted = model(b.iter().map(|v| v + shift).collect());
        prop_assert_eq!(classify(&model(b.clone()), &x).unwrap(), classify(&shifted, &x).unwrap());
    }
}

fn entry(score: f64) -> FlipScoreEntry {
    FlipScoreEntry {
        senator: String::new(),
        party: Party::Democrat,
        score,
        nearest_flipper: None,
        distance: None,
        saturated: false,
        bin: 0,
        quantized: 0.0,
    }
}

/// House flippers and senators scattered in the plane, for flip-score
/// properties.
fn flip_world(house: &[(f64, f64)], senate: &[(f64, f64)], flip_mask: u64) -> (DkpsModel, Vec<Congressperson>, RollCall, Vec<String>) {
    let mut roster = Vec::new();
    let mut handles = Vec::new();
    let mut coords = Vec::new();
    let mut votes = BTreeMap::new();
    for (i, &(x, y)) in house.iter().enumerate() {
        let h = format!("h{i}");
        roster.push(member(&h, Party::Republican, Chamber::House));
        // Fewer than half flip, so the line stays Nay.
        let flips = (flip_mask >> i) & 1 == 1 && i % 3 == 0;
        votes.insert(h.clone(), if flips { Vote::Yea } else { Vote::Nay });
        handles.push(h);
        coords.push(vec![x, y]);
    }
    let mut senators = Vec::new();
    for (i, &(x, y)) in senate.iter().enumerate() {
        let h = format!("s{i}");
        roster.push(member(&h, Party::Republican, Chamber::Senate));
        handles.push(h.clone());
        coords.push(vec![x, y]);
        senators.push(h);
    }
    let rc = RollCall {
        bill_id: "b".into(),
        chamber: Chamber::House,
        vote_time: ts(0),
        votes,
    };
    (DkpsModel::from_coords(handles, coords, DkpsMode::Generated).unwrap(), roster, rc, senators)
}

fn plane(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closer_senators_score_higher(house in plane(3..12), senate in plane(2..12), mask in any::<u64>()) {
        let (model, roster, rc, senators) = flip_world(&house, &senate, mask);
        let r = score_bill(&model, &rc, &senators, &roster, DEFAULT_EPSILON).unwrap();
        for a in &r.entries {
            for b in &r.entries {
                if let (Some(da), Some(db)) = (a.distance, b.distance) {
                    if da < db && db > DEFAULT_EPSILON {
                        prop_assert!(a.score > b.score);
                    }
                }
            }
            prop_assert_eq!(a.score == 0.0, a.nearest_flipper.is_none());
        }
    }

    #[test]
    fn quantization_is_order_consistent(scores in prop::collection::vec(prop_oneof![Just(0.0), 0.01..50.0f64], 1..40)) {
        let mut e: Vec<FlipScoreEntry> = scores.iter().map(|&s| entry(s)).collect();
        quantize_scores(&mut e);
        for a in &e {
            prop_assert!([0.0, 0.2, 0.4, 0.6, 0.8, 1.0].contains(&a.quantized));
            for b in &e {
                if a.score < b.score {
                    prop_assert!(a.quantized <= b.quantized);
                }
            }
        }
    }

    #[test]
    fn scaling_coordinates_keeps_quantized_scores(
        house in plane(3..12),
        senate in plane(2..12),
        mask in any::<u64>(),
        s in 0.1..20.0f64,
    ) {
        let (model, roster, rc, senators) = flip_world(&house, &senate, mask);
        let a = score_bill(&model, &rc, &senators, &roster, DEFAULT_EPSILON).unwrap();
        let b = score_bill(&model.scaled(s), &rc, &senators, &roster, DEFAULT_EPSILON).unwrap();
        // Distances that nearly tie may swap order after rounding.
        let mut d: Vec<f64> = a.entries.iter().filter_map(|e| e.distance).collect();
        d.sort_by(f64::total_cmp);
        prop_assume!(d.windows(2).all(|w| w[1] - w[0] > 1e-9 || w[1] == w[0]));
        prop_assume!(d.first().is_none_or(|&m| m * s.min(1.0) > DEFAULT_EPSILON));
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert_eq!(x.quantized, y.quantized);
            if x.score > 0.0 {
                prop_assert!((y.score - x.score / s).abs() <= 1e-9 * x.score / s);
            }
        }
    }

    #[test]
    fn validated_bins_count_every_senator(
        house in plane(3..12),
        senate in plane(4..16),
        mask in any::<u64>(),
        votes in any::<u64>(),
    ) {
        let (model, roster, rc, senators) = flip_world(&house, &senate, mask);
        let scores = score_bill(&model, &rc, &senators, &roster, DEFAULT_EPSILON).unwrap();
        let senate_rc = RollCall {
            bill_id: "b-S".into(),
            chamber: Chamber::Senate,
            vote_time: ts(0),
            votes: senators
                .iter()
                .enumerate()
                .map(|(i, h)| (h.clone(), if (votes >> i) & 1 == 1 && i % 3 == 0 { Vote::Yea } else { Vote::Nay }))
                .collect(),
        };
        if let Ok(r) = validate(&[scores], &[senate_rc], &roster) {
            prop_assert_eq!(r.bins.iter().map(|b| b.n).sum::<usize>(), r.n_validated);
            for b in &r.bins {
                if let Some(p) = b.proportion {
                    prop_assert!((0.0..=1.0).contains(&p));
                }
            }
        }
    }

    #[test]
    fn dkps_distances_are_symmetric(pts in points(2..15, 3)) {
        let handles = (0..pts.len()).map(|i| format!("m{i}")).collect();
        let m = DkpsModel::from_coords(handles, pts, DkpsMode::Retrieved).unwrap();
        let d = &m.distance_matrix;
        for i in 0..d.n() {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..d.n() {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }
}
