use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

struct Entry<E> {
    at: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at.total_cmp(&other.at).then(self.seq.cmp(&other.seq))
    }
}

/// Discrete-event clock. Events scheduled for the same instant fire in
/// scheduling order.
pub struct Scheduler<E> {
    now: f64,
    seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Scheduler {
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
        }
    }
}

impl<E> Scheduler<E> {
    pub fn now(&self) -> f64 {
        self.now
    }

    /// Events in the past fire at the next advance.
    pub fn schedule(&mut self, at: f64, event: E) {
        self.seq += 1;
        self.queue.push(Reverse(Entry {
            at: at.max(self.now),
            seq: self.seq,
            event,
        }));
    }

    /// Next event due no later than `until`; the clock jumps to its time.
    pub fn pop_due(&mut self, until: f64) -> Option<(f64, E)> {
        match self.queue.peek() {
            Some(Reverse(e)) if e.at <= until => {
                let Reverse(e) = self.queue.pop().expect("peeked");
                self.now = e.at;
                Some((e.at, e.event))
            }
            _ => None,
        }
    }

    pub fn settle(&mut self, until: f64) {
        self.now = self.now.max(until);
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_in_time_then_insertion_order() {
        let mut s = Scheduler::default();
        s.schedule(2.0, "b");
        s.schedule(1.0, "a");
        s.schedule(2.0, "c");
        let mut seen = Vec::new();
        while let Some((t, e)) = s.pop_due(5.0) {
            seen.push((t, e));
        }
        s.settle(5.0);
        assert_eq!(seen, vec![(1.0, "a"), (2.0, "b"), (2.0, "c")]);
        assert_eq!(s.now(), 5.0);
        assert_eq!(s.pending(), 0);
    }

    #[test]
    fn future_events_stay_queued() {
        let mut s = Scheduler::default();
        s.schedule(10.0, ());
        assert!(s.pop_due(9.9).is_none());
        s.settle(9.9);
        assert_eq!(s.pending(), 1);
    }
}
