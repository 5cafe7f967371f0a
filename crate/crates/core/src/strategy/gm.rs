use super::{
    assemble_stream, score_stream, DecisionRecord, Reason, ReplacementDecision, StrategyConfig, StrategyError,
    StrategyOutcome, UnderRepresentedSet,
};
use crate::buffer::{Buffer, Sample};
use crate::loss::LossOracle;

pub fn build_under_represented_set(buffer: &Buffer, sample: &Sample, m: usize) -> UnderRepresentedSet {
    UnderRepresentedSet(sample.unique_labels().iter().copied().filter(|&u| buffer.label_count(u) < m).collect())
}

/// Positions (in insertion order) of the entries that may be evicted: every
/// entry when `u_set` is empty, otherwise the entries holding no label of
/// `u_set`.
pub fn select_candidates(buffer: &Buffer, u_set: &UnderRepresentedSet) -> Vec<usize> {
    buffer
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| u_set.is_empty() || e.unique_labels().iter().all(|&l| !u_set.contains(l)))
        .map(|(i, _)| i)
        .collect()
}

/// Picks the eviction target among `candidates`: fewest unique labels, then
/// highest loss, then oldest. Inserts `sample` in its place when the
/// under-represented set forces it or the target's loss is strictly higher.
pub fn buffer_manager_step(
    buffer: &mut Buffer,
    candidates: &[usize],
    u_set: &UnderRepresentedSet,
    sample: Sample,
) -> Result<ReplacementDecision, StrategyError> {
    let incoming = sample.loss().ok_or(StrategyError::UnsetLoss(sample.image_id()))?;
    if !buffer.is_full() {
        return Err(StrategyError::BufferNotFull);
    }
    if candidates.is_empty() {
        return Ok(ReplacementDecision::reject(Reason::NoCandidates));
    }
    let mut positions = candidates.to_vec();
    positions.sort_unstable();
    let entries = buffer.entries();
    let min_unique = positions.iter().map(|&i| entries[i].unique_labels().len()).min().unwrap_or(0);

    let mut opt: Option<(usize, f64)> = None;
    for &i in &positions {
        let e = &entries[i];
        if e.unique_labels().len() != min_unique {
            continue;
        }
        let l = e.loss().ok_or(StrategyError::UnsetLoss(e.image_id()))?;
        if opt.is_none_or(|(_, best)| l > best) {
            opt = Some((i, l));
        }
    }
    let (pos, opt_loss) = opt.expect("candidate set is non-empty");

    let reason = if !u_set.is_empty() {
        Reason::ForcedByU
    } else if opt_loss > incoming {
        Reason::LossImprovement
    } else {
        return Ok(ReplacementDecision::reject(Reason::NoImprovement));
    };
    let evicted = buffer.remove_at(pos).image_id();
    buffer.insert(sample)?;
    Ok(ReplacementDecision::replace(evicted, reason))
}

/// Guarantee-minimum buffer construction over `previous ++ new_data`,
/// starting from an empty buffer of `cfg.capacity`.
pub fn gm_process<O: LossOracle + Sync>(
    previous: &[Sample],
    new_data: &[Sample],
    oracle: &O,
    cfg: &StrategyConfig,
) -> Result<StrategyOutcome, StrategyError> {
    cfg.validate()?;
    let mut stream = assemble_stream(previous, new_data, cfg.order, cfg.seed)?;
    score_stream(&mut stream, oracle)?;

    let mut buffer = Buffer::new(cfg.capacity)?;
    let mut log = Vec::with_capacity(stream.len());
    for d in stream {
        let loss = d.loss().expect("scored");
        let image_id = d.image_id();
        let (decision, u_set) = if !buffer.is_full() {
            buffer.insert(d)?;
            (ReplacementDecision::insert_free(), UnderRepresentedSet::default())
        } else {
            let u_set = build_under_represented_set(&buffer, &d, cfg.min_guarantee);
            let candidates = select_candidates(&buffer, &u_set);
            (buffer_manager_step(&mut buffer, &candidates, &u_set, d)?, u_set)
        };
        log.push(DecisionRecord {
            image_id,
            action: decision.action,
            reason: decision.reason,
            evicted: decision.evicted,
            u_set: u_set.labels().collect(),
            loss,
        });
    }
    Ok(StrategyOutcome { buffer, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::tests::sample;
    use crate::buffer::{ImageId, LabelId};
    use crate::loss::LossError;
    use crate::strategy::{Action, StreamOrder};
    use proptest::prelude::*;
    use std::collections::{BTreeSet, HashMap};

    fn full_buffer(items: &[(u64, &[u32], f64)]) -> Buffer {
        let mut b = Buffer::new(items.len()).unwrap();
        for &(id, labels, loss) in items {
            b.insert(sample(id, labels, loss)).unwrap();
        }
        b
    }

    fn u(labels: &[u32]) -> UnderRepresentedSet {
        UnderRepresentedSet(labels.iter().map(|&l| LabelId(l)).collect())
    }

    fn ids(b: &Buffer) -> Vec<u64> {
        b.entries().iter().map(|e| e.image_id().0).collect()
    }

    #[test]
    fn under_represented_examples() {
        // cat = 1 held by 5 entries, dog = 2 held by 20
        let mut b = Buffer::new(25).unwrap();
        for i in 0..20 {
            let labels: &[u32] = if i < 5 { &[1, 2] } else { &[2] };
            b.insert(sample(i, labels, 1.0)).unwrap();
        }
        let d = sample(100, &[1, 2], 1.0);
        assert_eq!(build_under_represented_set(&b, &d, 12), u(&[1]));
        assert_eq!(build_under_represented_set(&Buffer::new(3).unwrap(), &d, 12), u(&[1, 2]));
        assert!(build_under_represented_set(&b, &d, 0).is_empty());
    }

    #[test]
    fn candidate_examples() {
        let b = full_buffer(&[(1, &[1, 2], 0.1), (2, &[2, 3], 0.1), (3, &[3], 0.1)]);
        assert_eq!(select_candidates(&b, &u(&[])), vec![0, 1, 2]);
        assert_eq!(select_candidates(&b, &u(&[3])), vec![0]);
        assert!(select_candidates(&b, &u(&[1, 3])).is_empty());
    }

    #[test]
    fn manager_replaces_highest_loss_among_fewest_labels() {
        // A(|U|=1, 0.9), B(|U|=1, 0.4), C(|U|=3, 2.0)
        let items: [(u64, &[u32], f64); 3] = [(1, &[1], 0.9), (2, &[2], 0.4), (3, &[1, 2, 3], 2.0)];
        let mut b = full_buffer(&items);
        let d = sample(9, &[1], 0.5);
        let dec = buffer_manager_step(&mut b, &[0, 1, 2], &u(&[]), d).unwrap();
        assert_eq!(dec, ReplacementDecision::replace(ImageId(1), Reason::LossImprovement));
        assert_eq!(ids(&b), vec![2, 3, 9]);

        let mut b = full_buffer(&items);
        let dec = buffer_manager_step(&mut b, &[0, 1, 2], &u(&[]), sample(9, &[1], 1.5)).unwrap();
        assert_eq!(dec, ReplacementDecision::reject(Reason::NoImprovement));
        assert_eq!(ids(&b), vec![1, 2, 3]);

        // equal loss keeps the buffer
        let mut b = full_buffer(&items);
        let dec = buffer_manager_step(&mut b, &[0, 1, 2], &u(&[]), sample(9, &[1], 0.9)).unwrap();
        assert_eq!(dec.action, Action::Reject);
    }

    #[test]
    fn manager_forced_branch_ignores_losses() {
        let mut b = full_buffer(&[(1, &[1], 0.1), (2, &[2], 0.2)]);
        let dec = buffer_manager_step(&mut b, &[0, 1], &u(&[7]), sample(9, &[7], 100.0)).unwrap();
        assert_eq!(dec, ReplacementDecision::replace(ImageId(2), Reason::ForcedByU));
        assert_eq!(b.label_count(LabelId(7)), 1);
    }

    #[test]
    fn manager_ties_evict_oldest() {
        let mut b = full_buffer(&[(1, &[1], 0.5), (2, &[2], 0.5), (3, &[3], 0.5)]);
        let dec = buffer_manager_step(&mut b, &[2, 1, 0], &u(&[]), sample(9, &[1], 0.1)).unwrap();
        assert_eq!(dec.evicted, Some(ImageId(1)));
    }

    #[test]
    fn manager_without_candidates_rejects() {
        let mut b = full_buffer(&[(1, &[1], 0.5)]);
        let dec = buffer_manager_step(&mut b, &[], &u(&[1]), sample(9, &[1], 0.1)).unwrap();
        assert_eq!(dec, ReplacementDecision::reject(Reason::NoCandidates));
    }

    #[test]
    fn manager_errors() {
        let mut b = full_buffer(&[(1, &[1], 0.5)]);
        let mut d = sample(9, &[1], 0.1);
        d.clear_loss();
        assert_eq!(buffer_manager_step(&mut b, &[0], &u(&[]), d), Err(StrategyError::UnsetLoss(ImageId(9))));
        let mut roomy = Buffer::new(2).unwrap();
        roomy.insert(sample(1, &[1], 0.5)).unwrap();
        assert_eq!(
            buffer_manager_step(&mut roomy, &[0], &u(&[]), sample(9, &[1], 0.1)),
            Err(StrategyError::BufferNotFull)
        );
    }

    fn loss_table(table: &[(u64, f64)]) -> impl Fn(&Sample) -> Result<f64, LossError> + Sync + '_ {
        let map: HashMap<u64, f64> = table.iter().copied().collect();
        move |s: &Sample| Ok(map[&s.image_id().0])
    }

    #[test]
    fn gm_worked_example() {
        // K=2, m=1: s1{a} L=1, s2{a} L=2, s3{b} L=9
        let stream = vec![sample(1, &[0], 0.0), sample(2, &[0], 0.0), sample(3, &[1], 0.0)];
        let oracle = loss_table(&[(1, 1.0), (2, 2.0), (3, 9.0)]);
        let cfg = StrategyConfig { capacity: 2, min_guarantee: 1, ..StrategyConfig::default() };
        let out = gm_process(&[], &stream, &oracle, &cfg).unwrap();
        assert_eq!(ids(&out.buffer), vec![1, 3]);
        let last = out.log.last().unwrap();
        assert_eq!(last.reason, Reason::ForcedByU);
        assert_eq!(last.evicted, Some(ImageId(2)));
        assert_eq!(last.u_set, vec![LabelId(1)]);
    }

    #[test]
    fn gm_never_full_keeps_everything() {
        let stream: Vec<_> = (0..5).map(|i| sample(i, &[i as u32 % 2], 0.0)).collect();
        let cfg = StrategyConfig { capacity: 5, min_guarantee: 1, ..StrategyConfig::default() };
        let out = gm_process(&[], &stream, &|_: &Sample| Ok(1.0), &cfg).unwrap();
        assert_eq!(ids(&out.buffer), vec![0, 1, 2, 3, 4]);
        assert!(out.log.iter().all(|r| r.reason == Reason::BufferNotFull));
    }

    #[test]
    fn gm_puts_previous_buffer_first_and_rejects_duplicates() {
        let prev = vec![sample(10, &[0], 5.0)];
        let new = vec![sample(1, &[1], 0.0)];
        let cfg = StrategyConfig { capacity: 4, min_guarantee: 1, ..StrategyConfig::default() };
        let out = gm_process(&prev, &new, &|_: &Sample| Ok(0.5), &cfg).unwrap();
        assert_eq!(ids(&out.buffer), vec![10, 1]);
        // losses are recomputed by the current oracle
        assert_eq!(out.buffer.entries()[0].loss(), Some(0.5));
        let dup = vec![sample(10, &[1], 0.0)];
        assert_eq!(
            gm_process(&prev, &dup, &|_: &Sample| Ok(0.5), &cfg).unwrap_err(),
            StrategyError::DuplicateImage(ImageId(10))
        );
    }

    #[test]
    fn gm_propagates_oracle_errors() {
        let cfg = StrategyConfig { capacity: 4, min_guarantee: 1, ..StrategyConfig::default() };
        let failing = |s: &Sample| Err(LossError::NoPredictions(s.image_id()));
        let err = gm_process(&[], &[sample(1, &[0], 0.0)], &failing, &cfg).unwrap_err();
        assert_eq!(err, StrategyError::Loss(LossError::NoPredictions(ImageId(1))));
    }

    #[test]
    fn gm_is_deterministic_with_shuffled_order() {
        let stream: Vec<_> = (0..40).map(|i| sample(i, &[(i % 5) as u32, (i % 3) as u32], 0.0)).collect();
        let oracle = |s: &Sample| Ok(((s.image_id().0 * 37) % 11) as f64);
        let cfg = StrategyConfig {
            capacity: 6,
            min_guarantee: 2,
            order: StreamOrder::Shuffled,
            seed: 4,
            ..StrategyConfig::default()
        };
        let a = gm_process(&[], &stream, &oracle, &cfg).unwrap();
        let b = gm_process(&[], &stream, &oracle, &cfg).unwrap();
        assert_eq!(a.buffer, b.buffer);
        assert_eq!(a.log, b.log);
    }

    /// Buffer entries as (labels, loss), then the incoming labels, its loss and `m`.
    type Case = (Vec<(Vec<u32>, f64)>, Vec<u32>, f64, usize);

    fn random_buffer_and_sample() -> impl Strategy<Value = Case> {
        (
            prop::collection::vec((prop::collection::vec(0u32..6, 1..4), 0.0..5.0f64), 1..8),
            prop::collection::vec(0u32..6, 1..4),
            0.0..5.0f64,
            1usize..4,
        )
    }

    proptest! {
        #[test]
        fn manager_step_properties((entries, labels, loss, m) in random_buffer_and_sample()) {
            let mut b = Buffer::new(entries.len()).unwrap();
            for (i, (l, x)) in entries.iter().enumerate() {
                b.insert(sample(i as u64, l, *x)).unwrap();
            }
            let d = sample(1000, &labels, loss);
            let u_set = build_under_represented_set(&b, &d, m);
            for l in u_set.labels() {
                prop_assert!(b.label_count(l) < m && d.contains_label(l));
            }
            let cands = select_candidates(&b, &u_set);
            let cand_ids: BTreeSet<ImageId> = cands.iter().map(|&i| b.entries()[i].image_id()).collect();
            let before = b.clone();
            let dec = buffer_manager_step(&mut b, &cands, &u_set, d).unwrap();
            prop_assert!(b.len() <= b.capacity());
            prop_assert_eq!(&b.recount(), b.class_counts());
            if let Some(ev) = dec.evicted {
                prop_assert!(cand_ids.contains(&ev));
            }
            match dec.reason {
                Reason::ForcedByU => for l in u_set.labels() {
                    prop_assert!(b.label_count(l) > before.label_count(l));
                },
                Reason::NoImprovement => {
                    let min_u = cands.iter().map(|&i| before.entries()[i].unique_labels().len()).min().unwrap();
                    for &i in &cands {
                        let e = &before.entries()[i];
                        if e.unique_labels().len() == min_u {
                            prop_assert!(e.loss().unwrap() <= loss);
                        }
                    }
                }
                _ => {}
            }
        }
    }
}
