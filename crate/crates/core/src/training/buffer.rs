use std::borrow::Cow;
use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::policy::Example;
use crate::samegame::{encode_board, Board, EncodedBoard};

/// Where a sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleTag {
    pub generation: usize,
    pub episode: usize,
    pub step: usize,
}

/// A state and the action the search committed to in it. Boards are stored
/// compactly and encoded on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSample {
    pub tag: SampleTag,
    pub board: Board,
    /// Grid index of the committed action.
    pub target: usize,
}

impl Example for TaggedSample {
    fn input(&self) -> Cow<'_, EncodedBoard> {
        Cow::Owned(encode_board(&self.board))
    }

    fn target(&self) -> usize {
        self.target
    }
}

/// Bounded FIFO queue: pushing into a full buffer evicts the oldest item.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> ReplayBuffer<T> {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn extend(&mut self, items: impl IntoIterator<Item = T>) {
        for item in items {
            self.push(item);
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// The `n` most recently pushed items still held, oldest first.
    pub fn newest(&self, n: usize) -> impl Iterator<Item = &T> {
        self.items.iter().skip(self.items.len().saturating_sub(n))
    }

    /// Contents as one slice, oldest first.
    pub fn as_slice(&mut self) -> &[T] {
        self.items.make_contiguous()
    }
}

impl ReplayBuffer<TaggedSample> {
    /// Distinct generations with data in the buffer.
    pub fn generations(&self) -> BTreeSet<usize> {
        self.items.iter().map(|s| s.tag.generation).collect()
    }
}

/// Shuffles `samples`, sends the first `⌊λM⌋` to `training` and the rest to
/// `validation`. Returns the two counts.
pub fn split_and_append<T, R: Rng + ?Sized>(
    mut samples: Vec<T>,
    split: f64,
    training: &mut ReplayBuffer<T>,
    validation: &mut ReplayBuffer<T>,
    rng: &mut R,
) -> (usize, usize) {
    samples.shuffle(rng);
    let cut = split_point(samples.len(), split);
    let rest = samples.split_off(cut);
    let counts = (samples.len(), rest.len());
    training.extend(samples);
    validation.extend(rest);
    counts
}

/// `⌊λM⌋`.
pub fn split_point(m: usize, split: f64) -> usize {
    ((m as f64 * split).floor() as usize).min(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        b.extend(0..5);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(b.as_slice(), &[2, 3, 4]);
    }

    #[test]
    fn split_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = ReplayBuffer::new(1000);
        let mut v = ReplayBuffer::new(1000);
        assert_eq!(
            split_and_append((0..100).collect(), 0.9, &mut t, &mut v, &mut rng),
            (90, 10)
        );
        assert_eq!((t.len(), v.len()), (90, 10));

        let mut t = ReplayBuffer::new(50);
        let mut v = ReplayBuffer::new(50);
        split_and_append((0..100).collect(), 0.9, &mut t, &mut v, &mut rng);
        assert_eq!(t.len(), 50);
        assert_eq!(split_point(7, 0.9), 6);
    }

    #[test]
    fn split_keeps_newest_in_fifo_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = ReplayBuffer::new(50);
        let mut v = ReplayBuffer::new(50);
        let mut shuffled: Vec<u32> = (0..100).collect();
        let mut check = ChaCha8Rng::seed_from_u64(1);
        shuffled.shuffle(&mut check);
        split_and_append((0..100).collect(), 0.9, &mut t, &mut v, &mut rng);
        assert_eq!(t.iter().copied().collect::<Vec<_>>(), shuffled[40..90].to_vec());
    }

    #[test]
    fn split_is_a_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..1000 {
            let m = trial % 97 + 1;
            let mut t = ReplayBuffer::new(1000);
            let mut v = ReplayBuffer::new(1000);
            split_and_append((0..m).collect(), 0.9, &mut t, &mut v, &mut rng);
            let a: HashSet<_> = t.iter().collect();
            let b: HashSet<_> = v.iter().collect();
            assert!(a.is_disjoint(&b));
            assert_eq!(a.len() + b.len(), m);
        }
    }
}
