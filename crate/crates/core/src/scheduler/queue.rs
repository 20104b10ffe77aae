//! Per-worker ready queues.
//!
//! Each worker owns a LIFO deque it pushes to and pops from, plus an inbox
//! that other threads may place work into (used for root distribution).
//! Thieves take from the FIFO end of a victim's deque, then from its inbox.

use crossbeam_deque::{Injector, Steal, Stealer, Worker};

pub struct WorkQueues<T> {
    inboxes: Box<[Injector<T>]>,
    stealers: Box<[Stealer<T>]>,
}

/// Owner handle of one worker's deque. Not shareable between threads.
pub struct LocalQueue<T> {
    index: usize,
    deque: Worker<T>,
}

impl<T> WorkQueues<T> {
    pub fn new(workers: usize) -> (Self, Vec<LocalQueue<T>>) {
        let locals: Vec<LocalQueue<T>> = (0..workers)
            .map(|index| LocalQueue {
                index,
                deque: Worker::new_lifo(),
            })
            .collect();
        let stealers = locals.iter().map(|l| l.deque.stealer()).collect();
        let inboxes = (0..workers).map(|_| Injector::new()).collect();
        (Self { inboxes, stealers }, locals)
    }

    pub fn workers(&self) -> usize {
        self.stealers.len()
    }

    /// Places `item` into the inbox of `queue`.
    pub fn place(&self, queue: usize, item: T) {
        self.inboxes[queue].push(item);
    }

    /// One steal attempt against `victim`: its deque first, then its inbox.
    /// `None` when the victim is empty or the race was lost.
    pub fn steal(&self, thief: usize, victim: usize) -> Option<T> {
        match self.try_steal(thief, victim) {
            Steal::Success(t) => Some(t),
            _ => None,
        }
    }

    pub(crate) fn try_steal(&self, thief: usize, victim: usize) -> Steal<T> {
        if thief == victim {
            return Steal::Empty;
        }
        let from_deque = self.stealers[victim].steal();
        if from_deque.is_success() {
            return from_deque;
        }
        from_deque.or_else(|| self.inboxes[victim].steal())
    }

    pub fn is_empty(&self) -> bool {
        self.stealers.iter().all(Stealer::is_empty) && self.inboxes.iter().all(Injector::is_empty)
    }

    pub fn queue_len(&self, queue: usize) -> usize {
        self.stealers[queue].len() + self.inboxes[queue].len()
    }
}

impl<T> LocalQueue<T> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn push(&self, item: T) {
        self.deque.push(item);
    }

    /// Owner-side take: newest local item first, then the oldest item of
    /// this worker's inbox.
    pub fn pop(&self, queues: &WorkQueues<T>) -> Option<T> {
        if let Some(t) = self.deque.pop() {
            return Some(t);
        }
        loop {
            match queues.inboxes[self.index].steal() {
                Steal::Success(t) => return Some(t),
                Steal::Empty => return None,
                Steal::Retry => std::hint::spin_loop(),
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.deque.is_empty()
    }
}

/// Victims in round-robin order starting at `start`, skipping the thief.
pub(crate) fn victims(thief: usize, workers: usize, start: usize) -> impl Iterator<Item = usize> {
    (0..workers)
        .map(move |k| (start + k) % workers)
        .filter(move |&v| v != thief)
}
