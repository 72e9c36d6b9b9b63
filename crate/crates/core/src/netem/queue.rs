use std::cmp::Ordering;
use std::collections::BinaryHeap;

struct Scheduled<T> {
    at: f64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Scheduled<T> {}

impl<T> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Scheduled<T> {
    // reversed: BinaryHeap is a max-heap, we want earliest first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Discrete-event queue on a virtual millisecond timeline.
///
/// Events at equal times pop in insertion order, so a run is fully
/// determined by the order of `schedule` calls.
pub struct SimQueue<T> {
    now: f64,
    next_seq: u64,
    heap: BinaryHeap<Scheduled<T>>,
}

impl<T> Default for SimQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> SimQueue<T> {
    pub fn new() -> Self {
        Self {
            now: 0.0,
            next_seq: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Events in the past are clamped to `now`.
    pub fn schedule(&mut self, at: f64, item: T) {
        let at = at.max(self.now);
        self.heap.push(Scheduled {
            at,
            seq: self.next_seq,
            item,
        });
        self.next_seq += 1;
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|s| s.at)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    /// Advances the clock to the next event and returns it.
    pub fn advance(&mut self) -> Option<(f64, T)> {
        let next = self.heap.pop()?;
        self.now = next.at;
        Some((next.at, next.item))
    }

    /// Moves the clock forward to `t` without popping anything.
    pub fn advance_to(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
    }
}
