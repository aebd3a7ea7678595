//! Property tests for the data model and the perturbation/augmentation
//! contracts.

use proptest::prelude::*;

use mcqa_probe::augment::{augment_epoch, AugmentConfig, TripletLabel};
use mcqa_probe::dataset::{
    read_dataset, tokenize, write_dataset, Dataset, McqaInstance, OptionEntry, EMPTY_SENTINEL,
};
use mcqa_probe::perturb::{perturb_nc, perturb_no, perturb_nq, perturb_pio, PIO_CONTEXT_COPIES};
use mcqa_probe::scorer::featurize;

fn field_string() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[ a-zA-Z0-9,.?!぀-ヿ©-ÿ]{0,40}",
        1 => Just(EMPTY_SENTINEL.to_string()),
        1 => Just(String::new()),
    ]
}

fn instance(index: usize) -> impl Strategy<Value = McqaInstance> {
    (2usize..=6, field_string()).prop_flat_map(move |(k, question)| {
        (
            prop::collection::vec((field_string(), field_string()), k),
            0..k,
        )
            .prop_map(move |(opts, gold)| McqaInstance {
                id: format!("inst{index}"),
                question: question.clone(),
                options: opts
                    .into_iter()
                    .map(|(text, context)| OptionEntry { text, context })
                    .collect(),
                gold,
            })
    })
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(Just(()), 1..8).prop_flat_map(|slots| {
        slots
            .iter()
            .enumerate()
            .map(|(i, _)| instance(i).boxed())
            .collect::<Vec<_>>()
            .prop_map(Dataset::new)
    })
}

proptest! {
    // save -> load -> save is byte-identical, including unicode and
    // sentinel strings
    #[test]
    fn dataset_round_trip(d in dataset_strategy()) {
        let mut first = Vec::new();
        write_dataset(&d, &mut first, "mem").unwrap();
        let reloaded = read_dataset(first.as_slice(), "mem").unwrap();
        prop_assert_eq!(&reloaded.instances, &d.instances);
        let mut second = Vec::new();
        write_dataset(&reloaded, &mut second, "mem").unwrap();
        prop_assert_eq!(first, second);
    }

    // all four perturbations preserve count, order, ids, k, and gold
    #[test]
    fn perturbations_preserve_structure(d in dataset_strategy(), seed in any::<u64>()) {
        let (pio, choices) = perturb_pio(&d, seed);
        let variants = [pio, perturb_no(&d), perturb_nq(&d), perturb_nc(&d)];
        for v in &variants {
            prop_assert_eq!(v.len(), d.len());
            for (orig, pert) in d.instances.iter().zip(&v.instances) {
                prop_assert_eq!(&pert.id, &orig.id);
                prop_assert_eq!(pert.option_count(), orig.option_count());
                prop_assert_eq!(pert.gold, orig.gold);
            }
        }
        // PIO rewrites exactly one incorrect option and leaves gold
        // byte-identical
        for ((orig, pert), choice) in d.instances.iter().zip(&variants[0].instances).zip(&choices) {
            prop_assert_ne!(choice.perturbed_option_index, orig.gold);
            for (j, (o, p)) in orig.options.iter().zip(&pert.options).enumerate() {
                if j == choice.perturbed_option_index {
                    prop_assert_eq!(&p.text, &orig.question);
                    let expected =
                        [orig.question.as_str(); PIO_CONTEXT_COPIES].join(" ");
                    prop_assert_eq!(&p.context, &expected);
                } else {
                    prop_assert_eq!(p, o);
                }
            }
        }
    }

    // the sampler emits one triplet per option for every config, and only
    // unmodified gold triplets carry the positive label
    #[test]
    fn augmentation_preserves_cardinality(
        d in dataset_strategy(),
        p_correct in 0.0f64..=1.0,
        p_incorrect in 0.0f64..=1.0,
        seed in any::<u64>(),
        epoch in 0u64..4,
    ) {
        let cfg = AugmentConfig { p_correct, p_incorrect, seed };
        let out = augment_epoch(&d, &cfg, epoch);
        let expected: usize = d.k_profile().iter().sum();
        prop_assert_eq!(out.len(), expected);
        let again = augment_epoch(&d, &cfg, epoch);
        prop_assert_eq!(&out, &again);
        let mut offset = 0;
        for inst in &d.instances {
            for j in 0..inst.option_count() {
                let t = &out[offset + j];
                prop_assert_eq!(&t.origin_id, &inst.id);
                prop_assert_eq!(t.origin_index, j);
                if t.label == TripletLabel::Positive {
                    prop_assert_eq!(j, inst.gold);
                    prop_assert_eq!(&t.question, &inst.question);
                    prop_assert_eq!(&t.option_text, &inst.options[j].text);
                    prop_assert_eq!(&t.context, &inst.options[j].context);
                }
            }
            offset += inst.option_count();
        }
    }

    // token bags ignore token order; featurize inherits the symmetry
    #[test]
    fn overlap_is_order_invariant(mut words in prop::collection::vec("[a-z]{1,6}", 0..12)) {
        let original = words.join(" ");
        let bag = tokenize(&original);
        words.reverse();
        let reversed = words.join(" ");
        prop_assert_eq!(tokenize(&reversed), bag);
        let f_a = featurize(&original, "alpha beta", "beta gamma");
        let f_b = featurize(&reversed, "alpha beta", "beta gamma");
        prop_assert_eq!(f_a, f_b);
    }

    // NO/NQ/NC are idempotent on arbitrary datasets
    #[test]
    fn empties_are_idempotent(d in dataset_strategy()) {
        let no = perturb_no(&d);
        prop_assert_eq!(&perturb_no(&no).instances, &no.instances);
        let nq = perturb_nq(&d);
        prop_assert_eq!(&perturb_nq(&nq).instances, &nq.instances);
        let nc = perturb_nc(&d);
        prop_assert_eq!(&perturb_nc(&nc).instances, &nc.instances);
    }
}
