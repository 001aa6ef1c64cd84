//! Flip scores: how close a senator sits, in a bill's joint DKPS, to the
//! House members of their own party who crossed the party line.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Congressperson, Party, RollCall, Vote};
use crate::dkps::DkpsModel;
use crate::numerics::euclidean;
use crate::stats::{kendall_tau, ols_r2, proportion_se, LinearFit, TestResult};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-9;
/// Number of nonzero quantization bins.
pub const N_BINS: u32 = 5;

/// Modal Yea/Nay vote of `party` among members of the roll call's chamber.
/// `None` on an exact tie or when nobody in the party voted Yea or Nay.
pub fn party_line(rollcall: &RollCall, roster: &[Congressperson], party: Party) -> Option<Vote> {
    let (mut yea, mut nay) = (0usize, 0usize);
    for m in roster.iter().filter(|m| m.party == party && m.chamber == rollcall.chamber) {
        match rollcall.vote(&m.handle) {
            Some(Vote::Yea) => yea += 1,
            Some(Vote::Nay) => nay += 1,
            _ => {}
        }
    }
    match yea.cmp(&nay) {
        std::cmp::Ordering::Greater => Some(Vote::Yea),
        std::cmp::Ordering::Less => Some(Vote::Nay),
        std::cmp::Ordering::Equal => None,
    }
}

/// Members of the roll call's chamber whose Yea/Nay vote differs from their
/// party's line. Parties without a defined line contribute nobody.
pub fn cross_party_voters(rollcall: &RollCall, roster: &[Congressperson]) -> BTreeSet<String> {
    let mut lines: BTreeMap<Party, Option<Vote>> = BTreeMap::new();
    let mut out = BTreeSet::new();
    for m in roster.iter().filter(|m| m.chamber == rollcall.chamber) {
        let Some(v) = rollcall.vote(&m.handle).filter(|v| v.is_yea_or_nay()) else {
            continue;
        };
        let line = *lines.entry(m.party).or_insert_with(|| party_line(rollcall, roster, m.party));
        if line.is_some_and(|l| l != v) {
            out.insert(m.handle.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipScoreEntry {
    pub senator: String,
    pub party: Party,
    /// `1 / max(distance, ε)`, or 0 without same-party House flippers.
    pub score: f64,
    pub nearest_flipper: Option<String>,
    pub distance: Option<f64>,
    /// The distance fell below ε.
    pub saturated: bool,
    /// 0 for a zero score, otherwise 1..=5.
    pub bin: u32,
    /// `bin / 5`.
    pub quantized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillScores {
    pub bill_id: String,
    pub entries: Vec<FlipScoreEntry>,
    /// House flippers with no position in the model (ignored).
    pub flippers_missing: Vec<String>,
    pub n_flippers: usize,
}

/// Raw flip scores for `senators` on one bill (quantization left at 0).
pub fn flip_scores(
    model: &DkpsModel,
    house_rollcall: &RollCall,
    senators: &[String],
    roster: &[Congressperson],
    epsilon: f64,
) -> Result<BillScores> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let by_handle: BTreeMap<&str, &Congressperson> = roster.iter().map(|m| (m.handle.as_str(), m)).collect();
    let flippers = cross_party_voters(house_rollcall, roster);
    let mut flippers_missing = Vec::new();
    let mut positioned: Vec<(&str, Party, &[f64])> = Vec::new();
    for h in &flippers {
        match model.coord(h) {
            Some(c) => positioned.push((h.as_str(), by_handle[h.as_str()].party, c)),
            None => flippers_missing.push(h.clone()),
        }
    }
    let mut entries = Vec::with_capacity(senators.len());
    for s in senators {
        let member = by_handle
            .get(s.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("senator {s} is not on the roster")))?;
        let xs = model
            .coord(s)
            .ok_or_else(|| Error::InvalidInput(format!("senator {s} has no position in the DKPS model")))?;
        let mut nearest: Option<(&str, f64)> = None;
        for &(h, party, xh) in &positioned {
            if party != member.party {
                continue;
            }
            let d = euclidean(xs, xh);
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((h, d));
            }
        }
        let (score, saturated) = match nearest {
            Some((_, d)) => (1.0 / d.max(epsilon), d < epsilon),
            None => (0.0, false),
        };
        entries.push(FlipScoreEntry {
            senator: s.clone(),
            party: member.party,
            score,
            nearest_flipper: nearest.map(|(h, _)| h.to_string()),
            distance: nearest.map(|(_, d)| d),
            saturated,
            bin: 0,
            quantized: 0.0,
        });
    }
    Ok(BillScores {
        bill_id: house_rollcall.bill_id.clone(),
        entries,
        flippers_missing,
        n_flippers: flippers.len(),
    })
}

/// Zero scores go to bin 0. A nonzero score `s` has percentile
/// `p = #{nonzero ≤ s} / #{nonzero}` and bin `ceil(5p)`.
pub fn quantize_scores(entries: &mut [FlipScoreEntry]) {
    let mut nonzero: Vec<f64> = entries.iter().map(|e| e.score).filter(|&s| s != 0.0).collect();
    nonzero.sort_by(f64::total_cmp);
    let total = nonzero.len() as u64;
    for e in entries.iter_mut() {
        e.bin = if e.score == 0.0 {
            0
        } else {
            let at_most = nonzero.partition_point(|&v| v <= e.score) as u64;
            (N_BINS as u64 * at_most).div_ceil(total) as u32
        };
        e.quantized = e.bin as f64 / N_BINS as f64;
    }
}

/// Scores and quantizes one bill.
pub fn score_bill(
    model: &DkpsModel,
    house_rollcall: &RollCall,
    senators: &[String],
    roster: &[Congressperson],
    epsilon: f64,
) -> Result<BillScores> {
    let mut scores = flip_scores(model, house_rollcall, senators, roster, epsilon)?;
    quantize_scores(&mut scores.entries);
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: u32,
    pub quantized: f64,
    pub n: usize,
    pub flips: usize,
    pub proportion: Option<f64>,
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillBreakdown {
    pub bill_id: String,
    pub n_validated: usize,
    pub n_flipped: usize,
    pub n_house_flippers: usize,
    pub senate_lines: BTreeMap<Party, Option<Vote>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenatorOutcome {
    pub bill_id: String,
    pub senator: String,
    pub quantized: f64,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub bins: Vec<BinSummary>,
    /// Kendall's tau-b over (bin value, flip proportion) of non-empty bins.
    pub kendall: Option<TestResult>,
    pub kendall_undefined: Option<String>,
    pub fit: Option<LinearFit>,
    pub fit_undefined: Option<String>,
    /// Kendall's tau-b over (quantized score, flipped) per senator.
    pub per_observation_kendall: Option<TestResult>,
    pub per_observation_undefined: Option<String>,
    pub n_validated: usize,
    /// Senators without a Yea/Nay Senate vote.
    pub n_excluded_no_vote: usize,
    /// Senators whose party has no Senate line on the bill.
    pub n_excluded_no_line: usize,
    pub per_bill: Vec<BillBreakdown>,
    pub outcomes: Vec<SenatorOutcome>,
}

fn split<T>(r: std::result::Result<T, crate::stats::StatsError>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Pools senators across bills and compares quantized flip scores with
/// observed crossing of the Senate party line.
pub fn validate(bills: &[BillScores], senate_rollcalls: &[RollCall], roster: &[Congressperson]) -> Result<ValidationReport> {
    if bills.len() != senate_rollcalls.len() {
        return Err(Error::InvalidInput(format!(
            "{} scored bills for {} Senate roll calls",
            bills.len(),
            senate_rollcalls.len()
        )));
    }
    let mut outcomes = Vec::new();
    let mut per_bill = Vec::new();
    let (mut no_vote, mut no_line) = (0, 0);
    for (scores, senate) in bills.iter().zip(senate_rollcalls) {
        let mut lines: BTreeMap<Party, Option<Vote>> = BTreeMap::new();
        let (mut validated, mut flipped_count) = (0, 0);
        for e in &scores.entries {
            let Some(v) = senate.vote(&e.senator).filter(|v| v.is_yea_or_nay()) else {
                no_vote += 1;
                continue;
            };
            let line = *lines.entry(e.party).or_insert_with(|| party_line(senate, roster, e.party));
            let Some(line) = line else {
                no_line += 1;
                continue;
            };
            let flipped = v != line;
            validated += 1;
            flipped_count += usize::from(flipped);
            outcomes.push(SenatorOutcome {
                bill_id: scores.bill_id.clone(),
                senator: e.senator.clone(),
                quantized: e.quantized,
                flipped,
            });
        }
        per_bill.push(BillBreakdown {
            bill_id: scores.bill_id.clone(),
            n_validated: validated,
            n_flipped: flipped_count,
            n_house_flippers: scores.n_flippers,
            senate_lines: lines,
        });
    }
    let distinct: BTreeSet<u64> = outcomes.iter().map(|o| o.quantized.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "validation needs at least two distinct quantized scores, found {}",
            distinct.len()
        )));
    }

    let bins: Vec<BinSummary> = (0..=N_BINS)
        .map(|bin| {
            let quantized = bin as f64 / N_BINS as f64;
            let members: Vec<&SenatorOutcome> = outcomes.iter().filter(|o| o.quantized == quantized).collect();
            let n = members.len();
            let flips = members.iter().filter(|o| o.flipped).count();
            let proportion = (n > 0).then(|| flips as f64 / n as f64);
            BinSummary {
                bin,
                quantized,
                n,
                flips,
                proportion,
                standard_error: proportion.map(|p| proportion_se(p, n)),
            }
        })
        .collect();
    let (bx, by): (Vec<f64>, Vec<f64>) = bins.iter().filter_map(|b| b.proportion.map(|p| (b.quantized, p))).unzip();
    let (kendall, kendall_undefined) = split(kendall_tau(&bx, &by));
    let (fit, fit_undefined) = split(ols_r2(&bx, &by));
    let ox: Vec<f64> = outcomes.iter().map(|o| o.quantized).collect();
    let oy: Vec<f64> = outcomes.iter().map(|o| f64::from(u8::from(o.flipped))).collect();
    let (per_observation_kendall, per_observation_undefined) = split(kendall_tau(&ox, &oy));
    Ok(ValidationReport {
        bins,
        kendall,
        kendall_undefined,
        fit,
        fit_undefined,
        per_observation_kendall,
        per_observation_undefined,
        n_validated: outcomes.len(),
        n_excluded_no_vote: no_vote,
        n_excluded_no_line: no_line,
        per_bill,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_timestamp, Chamber};
    use crate::dkps::DkpsMode;
    use crate::util::rng_from;
    use rand::Rng;

    fn person(handle: &str, party: Party, chamber: Chamber) -> Congressperson {
        Congressperson {
            handle: handle.into(),
            name: handle.to_uppercase(),
            party,
            chamber,
            state: "OH".into(),
        }
    }

    fn rollcall(chamber: Chamber, votes: &[(&str, Vote)]) -> RollCall {
        RollCall {
            bill_id: "b".into(),
            chamber,
            vote_time: parse_timestamp("2022-01-01T00:00:00Z").unwrap(),
            votes: votes.iter().map(|(h, v)| (h.to_string(), *v)).collect(),
        }
    }

    fn entry(score: f64) -> FlipScoreEntry {
        FlipScoreEntry {
            senator: "s".into(),
            party: Party::Democrat,
            score,
            nearest_flipper: None,
            distance: None,
            saturated: false,
            bin: 0,
            quantized: 0.0,
        }
    }

    fn random_fixture(seed: u64) -> (Vec<Congressperson>, RollCall) {
        let mut rng = rng_from(seed);
        let parties = [Party::Democrat, Party::Republican, Party::Independent];
        let mut roster = Vec::new();
        let mut votes = BTreeMap::new();
        for i in 0..rng.gen_range(1..30) {
            let h = format!("m{i}");
            let chamber = if rng.gen_bool(0.8) { Chamber::House } else { Chamber::Senate };
            roster.push(person(&h, parties[rng.gen_range(0..3)], chamber));
            let v = [Vote::Yea, Vote::Nay, Vote::NotVoting, Vote::Present][rng.gen_range(0..4)];
            if rng.gen_bool(0.9) {
                votes.insert(h, v);
            }
        }
        let rc = RollCall {
            bill_id: "r".into(),
            chamber: Chamber::House,
            vote_time: parse_timestamp("2022-01-01T00:00:00Z").unwrap(),
            votes,
        };
        (roster, rc)
    }

    fn tally_line(rc: &RollCall, roster: &[Congressperson], party: Party) -> Option<Vote> {
        let votes: Vec<Vote> = roster
            .iter()
            .filter(|m| m.party == party && m.chamber == rc.chamber)
            .filter_map(|m| rc.votes.get(&m.handle).copied())
            .collect();
        let yea = votes.iter().filter(|v| **v == Vote::Yea).count();
        let nay = votes.iter().filter(|v| **v == Vote::Nay).count();
        if yea > nay {
            Some(Vote::Yea)
        } else if nay > yea {
            Some(Vote::Nay)
        } else {
            None
        }
    }

    #[test]
    fn party_line_rules() {
        let mut roster = Vec::new();
        let mut votes = Vec::new();
        let handles: Vec<String> = (0..13).map(|i| format!("r{i}")).collect();
        for (i, h) in handles.iter().enumerate() {
            roster.push(person(h, Party::Republican, Chamber::House));
            votes.push((h.as_str(), if i < 10 { Vote::Yea } else { Vote::Nay }));
        }
        assert_eq!(party_line(&rollcall(Chamber::House, &votes), &roster, Party::Republican), Some(Vote::Yea));
        let tie: Vec<(&str, Vote)> = handles[..10].iter().enumerate().map(|(i, h)| (h.as_str(), if i < 5 { Vote::Yea } else { Vote::Nay })).collect();
        assert_eq!(party_line(&rollcall(Chamber::House, &tie), &roster, Party::Republican), None);
        assert_eq!(party_line(&rollcall(Chamber::House, &votes), &roster, Party::Democrat), None);
        // Other chambers do not count.
        assert_eq!(party_line(&rollcall(Chamber::Senate, &votes), &roster, Party::Republican), None);
    }

    #[test]
    fn party_line_and_crossers_match_tally() {
        for seed in 0..200 {
            let (roster, rc) = random_fixture(seed);
            for p in [Party::Democrat, Party::Republican, Party::Independent] {
                assert_eq!(party_line(&rc, &roster, p), tally_line(&rc, &roster, p));
            }
            let expected: BTreeSet<String> = roster
                .iter()
                .filter(|m| m.chamber == Chamber::House)
                .filter(|m| {
                    let v = rc.votes.get(&m.handle);
                    let line = tally_line(&rc, &roster, m.party);
                    matches!((v, line), (Some(v @ (Vote::Yea | Vote::Nay)), Some(l)) if *v != l)
                })
                .map(|m| m.handle.clone())
                .collect();
            assert_eq!(cross_party_voters(&rc, &roster), expected);
        }
    }

    #[test]
    fn crossers() {
        let roster = vec![
            person("r1", Party::Republican, Chamber::House),
            person("r2", Party::Republican, Chamber::House),
            person("r3", Party::Republican, Chamber::House),
            person("d1", Party::Democrat, Chamber::House),
        ];
        let loyal = rollcall(Chamber::House, &[("r1", Vote::Nay), ("r2", Vote::Nay), ("d1", Vote::Yea)]);
        assert!(cross_party_voters(&loyal, &roster).is_empty());
        let one = rollcall(Chamber::House, &[("r1", Vote::Nay), ("r2", Vote::Nay), ("r3", Vote::Yea), ("d1", Vote::Yea)]);
        assert_eq!(cross_party_voters(&one, &roster), BTreeSet::from(["r3".to_string()]));
    }

    fn small_model() -> (DkpsModel, Vec<Congressperson>, RollCall) {
        let roster = vec![
            person("h1", Party::Republican, Chamber::House),
            person("h2", Party::Republican, Chamber::House),
            person("h3", Party::Republican, Chamber::House),
            person("hd", Party::Democrat, Chamber::House),
            person("s1", Party::Republican, Chamber::Senate),
            person("s2", Party::Democrat, Chamber::Senate),
            person("s3", Party::Republican, Chamber::Senate),
        ];
        let rc = rollcall(Chamber::House, &[("h1", Vote::Nay), ("h2", Vote::Nay), ("h3", Vote::Yea), ("hd", Vote::Yea)]);
        let model = DkpsModel::from_coords(
            ["h1", "h2", "h3", "hd", "s1", "s2", "s3"].iter().map(|s| s.to_string()).collect(),
            vec![vec![5.0, 0.0], vec![6.0, 0.0], vec![0.0, 0.0], vec![-5.0, 0.0], vec![0.5, 0.0], vec![0.1, 0.0], vec![0.0, 0.0]],
            DkpsMode::Generated,
        )
        .unwrap();
        (model, roster, rc)
    }

    #[test]
    fn score_formula_and_edge_cases() {
        let (model, roster, rc) = small_model();
        let senators: Vec<String> = ["s1", "s2", "s3"].iter().map(|s| s.to_string()).collect();
        let r = flip_scores(&model, &rc, &senators, &roster, DEFAULT_EPSILON).unwrap();
        let s1 = &r.entries[0];
        assert_eq!(s1.nearest_flipper.as_deref(), Some("h3"));
        assert_eq!(s1.score, 2.0);
        assert_eq!(s1.score * s1.distance.unwrap(), 1.0);
        // No Democratic flippers.
        assert_eq!(r.entries[1].score, 0.0);
        assert!(r.entries[1].nearest_flipper.is_none());
        // Coincident with the flipper.
        assert_eq!(r.entries[2].score, 1.0 / DEFAULT_EPSILON);
        assert!(r.entries[2].saturated);
        assert!(flip_scores(&model, &rc, &["nobody".to_string()], &roster, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn missing_flippers_are_skipped() {
        let (model, mut roster, mut rc) = small_model();
        for (h, v) in [("h4", Vote::Yea), ("h5", Vote::Nay), ("h6", Vote::Nay)] {
            roster.push(person(h, Party::Republican, Chamber::House));
            rc.votes.insert(h.into(), v);
        }
        let r = flip_scores(&model, &rc, &["s1".to_string()], &roster, DEFAULT_EPSILON).unwrap();
        assert_eq!(r.flippers_missing, vec!["h4".to_string()]);
        assert_eq!(r.entries[0].score, 2.0);
    }

    #[test]
    fn quantization_examples() {
        let mut e: Vec<FlipScoreEntry> = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&s| entry(s)).collect();
        quantize_scores(&mut e);
        let q: Vec<f64> = e.iter().map(|e| e.quantized).collect();
        assert_eq!(q, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let mut zeros: Vec<FlipScoreEntry> = (0..4).map(|_| entry(0.0)).collect();
        quantize_scores(&mut zeros);
        assert!(zeros.iter().all(|e| e.quantized == 0.0));
        let mut same: Vec<FlipScoreEntry> = [0.0, 3.0, 3.0, 3.0].iter().map(|&s| entry(s)).collect();
        quantize_scores(&mut same);
        assert_eq!(same.iter().map(|e| e.quantized).collect::<Vec<_>>(), vec![0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn quantization_matches_percentile_definition() {
        let mut rng = rng_from(8);
        for _ in 0..200 {
            let mut e: Vec<FlipScoreEntry> = (0..rng.gen_range(1..25))
                .map(|_| entry(if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(1..6) as f64 }))
                .collect();
            quantize_scores(&mut e);
            let nonzero: Vec<f64> = e.iter().map(|x| x.score).filter(|&s| s > 0.0).collect();
            for x in &e {
                let expected = if x.score == 0.0 {
                    0.0
                } else {
                    // Smallest b with b/5 >= count/total, in integers.
                    let c = nonzero.iter().filter(|&&v| v <= x.score).count();
                    let b = (1..=5).find(|b| b * nonzero.len() >= 5 * c).unwrap();
                    b as f64 / 5.0
                };
                assert!((x.quantized - expected).abs() < 1e-12, "{} vs {expected}", x.quantized);
            }
        }
    }

    #[test]
    fn validation_bookkeeping() {
        let roster: Vec<Congressperson> = (0..6)
            .map(|i| person(&format!("s{i}"), if i < 4 { Party::Democrat } else { Party::Republican }, Chamber::Senate))
            .collect();
        let mut entries: Vec<FlipScoreEntry> = [0.0, 1.0, 2.0, 3.0, 0.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| FlipScoreEntry {
                senator: format!("s{i}"),
                party: roster[i].party,
                ..entry(s)
            })
            .collect();
        quantize_scores(&mut entries);
        let bill = BillScores {
            bill_id: "b".into(),
            entries,
            flippers_missing: vec![],
            n_flippers: 2,
        };
        // Democrats Yea except s3; the Republicans tie so both are excluded.
        let senate = rollcall(
            Chamber::Senate,
            &[("s0", Vote::Yea), ("s1", Vote::Yea), ("s2", Vote::Yea), ("s3", Vote::Nay), ("s4", Vote::Yea), ("s5", Vote::Nay)],
        );
        let r = validate(&[bill], &[senate], &roster).unwrap();
        assert_eq!(r.n_validated, 4);
        assert_eq!(r.n_excluded_no_line, 2);
        assert_eq!(r.bins.iter().map(|b| b.n).sum::<usize>(), r.n_validated);
        assert_eq!(r.bins[0].n, 1);
        assert_eq!(r.bins[4].proportion, Some(1.0));
        assert_eq!(r.bins.iter().filter(|b| b.n == 0).count(), 2);
        assert!(r.bins.iter().filter(|b| b.n == 0).all(|b| b.proportion.is_none()));
        assert_eq!(r.per_bill[0].n_flipped, 1);
    }

    #[test]
    fn validation_needs_two_bins() {
        let roster = vec![person("s0", Party::Democrat, Chamber::Senate)];
        let bill = BillScores {
            bill_id: "b".into(),
            entries: vec![FlipScoreEntry {
                senator: "s0".into(),
                ..entry(0.0)
            }],
            flippers_missing: vec![],
            n_flippers: 0,
        };
        let senate = rollcall(Chamber::Senate, &[("s0", Vote::Yea)]);
        assert!(matches!(validate(&[bill], &[senate], &roster), Err(Error::InsufficientData(_))));
    }
}
