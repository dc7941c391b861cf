use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Access-counting label view for semi-supervised protocols. Labels of the
/// hidden partition are never returned; attempts to read them are counted.
#[derive(Debug)]
pub struct LabelView<'a> {
    labels: &'a [usize],
    hidden: BTreeSet<usize>,
    reads: AtomicUsize,
    hidden_reads: AtomicUsize,
}

impl<'a> LabelView<'a> {
    pub fn new(labels: &'a [usize], hidden: impl IntoIterator<Item = usize>) -> Self {
        LabelView {
            labels,
            hidden: hidden.into_iter().collect(),
            reads: AtomicUsize::new(0),
            hidden_reads: AtomicUsize::new(0),
        }
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        if self.hidden.contains(&i) {
            self.hidden_reads.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        Some(self.labels[i])
    }

    /// Labels for `indices`; `None` if any index is hidden.
    pub fn labels_of(&self, indices: &[usize]) -> Option<Vec<usize>> {
        indices.iter().map(|&i| self.label(i)).collect()
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn hidden_reads(&self) -> usize {
        self.hidden_reads.load(Ordering::Relaxed)
    }
}
