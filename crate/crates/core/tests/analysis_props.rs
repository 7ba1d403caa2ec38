mod common;

use std::collections::BTreeMap;

use common::oracle::*;
use proptest::prelude::*;

use dce_core::analysis::*;

proptest! {
    #[test]
    fn atl_matches_sum_over_len(captions in corpus()) {
        match average_token_length(&captions, TokenMode::Whitespace) {
            Ok(v) => {
                let total: usize = captions.iter().map(|c| c.split_whitespace().count()).sum();
                prop_assert_eq!(v, total as f64 / captions.len() as f64);
            }
            Err(_) => prop_assert!(captions.is_empty()),
        }
    }

    #[test]
    fn frequencies_sum_to_kept_tokens(captions in corpus(), stop in stopword_set()) {
        let table = word_frequencies(&captions, &stop);
        let kept = captions
            .iter()
            .flat_map(|c| c.split_whitespace())
            .map(normalize_word)
            .filter(|w| !w.is_empty() && !stop.contains(w))
            .count();
        prop_assert_eq!(table.iter().map(|(_, n)| n).sum::<usize>(), kept);
        for pair in table.windows(2) {
            prop_assert!(pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0));
        }
    }

    #[test]
    fn occurrence_is_monotone_in_the_lexicon(caption in "[a-z ,.]{0,60}", extra in "[a-z]{1,6}( [a-z]{1,4})?") {
        let base = AttributeLexicon::shipped().clone();
        let before = attribute_occurrence(&caption, &base);
        for attr in Attribute::ALL {
            let mut grown = base.clone();
            grown.add(attr, &extra).unwrap();
            let after = attribute_occurrence(&caption, &grown);
            for a in Attribute::ALL {
                prop_assert!(!before[&a] || after[&a]);
            }
        }
    }
}

#[test]
fn fixed_caption_sets() {
    let sets: [(&[&str], f64); 3] = [
        (&["a b c", "a b c d e"], 4.0),
        (&["one", "two words", "three more words"], 2.0),
        (&["  spaced   out  ", "x"], 1.5),
    ];
    for (captions, want) in sets {
        assert_eq!(average_token_length(captions, TokenMode::Whitespace).unwrap(), want);
    }
    let only = AttributeLexicon::new(BTreeMap::from([(Attribute::SpatialRelation, vec!["left of".into()])])).unwrap();
    assert!(!attribute_occurrence("he feels leftover pizza", &only)[&Attribute::SpatialRelation]);
}
