use serde::{Deserialize, Serialize};

use crate::dataio::Corpus;
use crate::error::{Error, Result};

/// One held-out speaker. Indices point into the corpus the plan was built
/// from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosoFold {
    pub speaker: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosoPlan {
    pub folds: Vec<LosoFold>,
}

/// One fold per speaker, ordered by speaker id.
pub fn loso_split(corpus: &Corpus) -> Result<LosoPlan> {
    let speakers = corpus.speakers();
    if speakers.len() < 2 {
        return Err(Error::domain(format!(
            "leave-one-speaker-out needs at least two speakers, found {}",
            speakers.len()
        )));
    }
    let folds = speakers
        .into_iter()
        .map(|speaker| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..corpus.len()).partition(|&i| corpus.utterances[i].speaker_id == speaker);
            LosoFold { speaker, train, test }
        })
        .collect();
    Ok(LosoPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, SyntheticSpec};
    use proptest::prelude::*;

    fn corpus(groups: usize, speakers: usize, utts: usize, seed: u64) -> Corpus {
        generate_synthetic(&SyntheticSpec {
            n_groups: groups,
            n_speakers_per_group: speakers,
            utterances_per_speaker: utts,
            d_s: 2,
            n_mel: 4,
            t_range: (2, 3),
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn three_speakers() {
        let c = corpus(1, 3, 4, 0);
        let plan = loso_split(&c).unwrap();
        assert_eq!(plan.folds.len(), 3);
        let mut all: Vec<usize> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..c.len()).collect::<Vec<_>>());
        let names: Vec<&str> = plan.folds.iter().map(|f| f.speaker.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
    }

    #[test]
    fn single_utterance_speaker_and_single_speaker() {
        let c = corpus(1, 2, 1, 0);
        let plan = loso_split(&c).unwrap();
        assert!(plan.folds.iter().all(|f| f.test.len() == 1 && f.train.len() == 1));
        assert!(loso_split(&corpus(1, 1, 5, 0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn folds_partition_the_corpus(groups in 1usize..3, speakers in 1usize..4, utts in 1usize..5, seed in 0u64..100) {
            prop_assume!(groups * speakers >= 2);
            let c = corpus(groups, speakers, utts, seed);
            let plan = loso_split(&c).unwrap();
            let mut seen = vec![0; c.len()];
            for f in &plan.folds {
                for &i in &f.test {
                    seen[i] += 1;
                    prop_assert_eq!(&c.utterances[i].speaker_id, &f.speaker);
                }
                prop_assert!(f.train.iter().all(|&i| c.utterances[i].speaker_id != f.speaker));
                prop_assert_eq!(f.train.len() + f.test.len(), c.len());
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
    }
}
