use replaygm_core::ingest::{
    cumulative_view, parse_coco_str, split_tasks, synthetic_stream, task_view, write_coco, SyntheticStreamConfig,
};
use replaygm_core::strategy::{Action, Reason};
use replaygm_core::{run_pipeline, Oracle, PipelineConfig, StrategyConfig, StrategyKind};

#[test]
fn exported_synthetic_stream_parses_back_unchanged() {
    let m = synthetic_stream(&SyntheticStreamConfig {
        n_classes: 12,
        n_samples: 150,
        seed: 3,
        ..SyntheticStreamConfig::default()
    })
    .unwrap();
    let mut bytes = Vec::new();
    write_coco(&mut bytes, &m).unwrap();
    let (back, report) = parse_coco_str(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(back.samples, m.samples);
    assert_eq!(back.categories, m.categories);
    assert_eq!(report.samples, 150);
    assert_eq!(report.dropped_empty, 0);
    assert_eq!(report.class_frequencies, m.class_frequencies());
}

#[test]
fn task_views_partition_the_annotations() {
    let m =
        synthetic_stream(&SyntheticStreamConfig { n_classes: 10, n_samples: 300, ..SyntheticStreamConfig::default() })
            .unwrap();
    let split = split_tasks(&m, &[4, 3, 3]).unwrap();
    let total: usize = m.samples.iter().map(|s| s.annotations().len()).sum();
    let mut seen = 0;
    for t in 0..3 {
        let v = task_view(&m, &split, t).unwrap();
        assert!(v.samples.iter().all(|s| s.unique_labels().is_subset(&split.tasks[t])));
        seen += v.samples.iter().map(|s| s.annotations().len()).sum::<usize>();
    }
    assert_eq!(seen, total);
    assert_eq!(cumulative_view(&m, &split, 2).unwrap().samples.len(), m.samples.len());
}

#[test]
fn three_task_run_keeps_buffer_invariants() {
    let m =
        synthetic_stream(&SyntheticStreamConfig { n_classes: 15, n_samples: 900, ..SyntheticStreamConfig::default() })
            .unwrap();
    let split = split_tasks(&m, &[5, 5, 5]).unwrap();
    for kind in StrategyKind::ALL {
        let cfg = PipelineConfig {
            seed: 21,
            strategy: StrategyConfig { capacity: 60, min_guarantee: 3, kind, ..StrategyConfig::default() },
            ..PipelineConfig::default()
        }
        .with_derived_seeds();
        let out = run_pipeline(&m, &split, &cfg, Oracle::Surrogate).unwrap();
        assert_eq!(out.len(), 3);
        for o in &out {
            assert!(o.buffer.len() <= 60);
            assert_eq!(&o.buffer.recount(), o.buffer.class_counts());
            assert_eq!(o.log.len(), o.previous_buffer_ids.len() + o.view.len() - o.merged_images);
            for d in &o.log {
                match d.action {
                    Action::Replace => assert!(d.evicted.is_some()),
                    _ => assert!(d.evicted.is_none()),
                }
                if kind == StrategyKind::Ebts && d.reason == Reason::ForcedByU {
                    assert!(!d.u_set.is_empty());
                }
            }
        }
    }
}
