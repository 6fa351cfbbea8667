use rand::seq::{index, SliceRandom};

use super::{Corpus, DataError, Dialogue};
use crate::numerics::rng::{seeded, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// 80/10/10 train/validation/test.
    Full,
    /// `k` training dialogues sampled from the full training split.
    FewShot(usize),
    /// Everything is test data.
    ZeroShot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<Dialogue>,
    pub val: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

/// Shuffles with the split stream of `seed`, then partitions.
pub fn split_corpus(corpus: &Corpus, mode: SplitMode, seed: u64) -> Result<Splits, DataError> {
    let mut rng = seeded(seed, stream::SPLIT);
    if mode == SplitMode::ZeroShot {
        return Ok(Splits {
            train: Vec::new(),
            val: Vec::new(),
            test: corpus.dialogues.clone(),
        });
    }
    let mut all = corpus.dialogues.clone();
    all.shuffle(&mut rng);
    let n = all.len();
    let n_test = n / 10;
    let n_val = n / 10;
    let test = all.split_off(n - n_test);
    let val = all.split_off(all.len() - n_val);
    let train = match mode {
        SplitMode::FewShot(k) => {
            if k == 0 || k > all.len() {
                return Err(DataError::Config(format!(
                    "few-shot size {k} must be between 1 and the {} training dialogues",
                    all.len()
                )));
            }
            let mut picked: Vec<usize> = index::sample(&mut rng, all.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i].clone()).collect()
        }
        _ => all,
    };
    Ok(Splits { train, val, test })
}
