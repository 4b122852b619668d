use owis_core::incremental::{relabel_for_eval, relabel_for_training, select_exemplars, Phase, ReplayConfig, TaskState};
use owis_core::splits::split_frequency;
use owis_core::synthgen::{generate, GenConfig};
use owis_core::Label;
use proptest::prelude::*;

fn state(task: usize) -> (Vec<owis_core::Scene>, TaskState) {
    let d = generate(&GenConfig { scenes: 20, ..GenConfig::default() }).unwrap();
    let split = split_frequency(&d.catalog, [4, 4, 4]).unwrap();
    (d.scenes, TaskState::new(split, task).unwrap())
}

#[test]
fn relabel_keeps_masks() {
    for task in 0..3 {
        let (scenes, st) = state(task);
        for s in &scenes {
            for out in [
                relabel_for_training(s, &st, Phase::Main),
                relabel_for_training(s, &st, Phase::Replay),
                relabel_for_eval(s, &st),
            ] {
                assert_eq!(out.voxels, s.voxels);
                assert_eq!(out.instances.len(), s.instances.len());
                for (a, b) in out.instances.iter().zip(&s.instances) {
                    assert_eq!(a.mask, b.mask);
                }
            }
            // Eval never shows an ignored instance and never a future class.
            let future = st.future();
            for inst in relabel_for_eval(s, &st).instances {
                assert!(!matches!(inst.label, Label::Class(c) if future.contains(&c)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn exemplars_deterministic_and_capped(cap in 1usize..6, seed in any::<u64>(), task in 1usize..3) {
        let (scenes, st) = state(task);
        let cfg = ReplayConfig { exemplars_per_class: cap, seed, ..ReplayConfig::default() };
        let (a, _) = select_exemplars(&scenes, &st, &cfg).unwrap();
        prop_assert_eq!(&a, &select_exemplars(&scenes, &st, &cfg).unwrap().0);
        let prev = st.previous();
        for (class, picks) in &a.per_class {
            prop_assert!(picks.len() <= cap);
            prop_assert!(prev.contains(class));
            for (id, idx) in picks {
                let s = scenes.iter().find(|s| &s.id == id).unwrap();
                prop_assert_eq!(s.instances[*idx].label, Label::Class(*class));
            }
        }
    }
}
