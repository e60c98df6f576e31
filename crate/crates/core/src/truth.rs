//! Hidden ground-truth transforms, readable only from evaluation code.
//!
//! Reads require an [`EvalScope`], which only the crate's evaluation
//! functions can create; every read is counted in the shared [`AuditLog`].

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::geometry::RigidTransform;

/// Evaluation entry points allowed to read ground truth.
pub const EVAL_ORIGINS: [&str; 3] = ["evaluate", "plir", "recall"];

#[derive(Debug, Default)]
pub struct AuditLog {
    eval_reads: AtomicUsize,
    violations: AtomicUsize,
    exports: AtomicUsize,
}

impl AuditLog {
    pub fn eval_reads(&self) -> usize {
        self.eval_reads.load(Ordering::SeqCst)
    }

    /// Reads attributed to anything other than an evaluation entry point.
    pub fn violations(&self) -> usize {
        self.violations.load(Ordering::SeqCst)
    }

    /// Transforms serialized to a dataset manifest.
    pub fn exports(&self) -> usize {
        self.exports.load(Ordering::SeqCst)
    }

    fn record(&self, origin: &str) {
        if EVAL_ORIGINS.contains(&origin) {
            self.eval_reads.fetch_add(1, Ordering::SeqCst);
        } else {
            self.violations.fetch_add(1, Ordering::SeqCst);
        }
    }
}

/// Capability to read ground truth, held only by evaluation code.
#[derive(Debug)]
pub struct EvalScope {
    origin: &'static str,
}

impl EvalScope {
    pub(crate) fn new(origin: &'static str) -> Self {
        Self { origin }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    transforms: BTreeMap<String, RigidTransform>,
    audit: Arc<AuditLog>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair_id: impl Into<String>, t: RigidTransform) {
        self.transforms.insert(pair_id.into(), t);
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn contains(&self, pair_id: &str) -> bool {
        self.transforms.contains_key(pair_id)
    }

    pub fn get(&self, pair_id: &str, scope: &EvalScope) -> Option<&RigidTransform> {
        self.audit.record(scope.origin);
        self.transforms.get(pair_id)
    }

    /// All transforms in id order, for writing a dataset manifest. Counted as exports.
    pub(crate) fn export(&self) -> impl Iterator<Item = (&str, &RigidTransform)> {
        self.audit.exports.fetch_add(self.transforms.len(), Ordering::SeqCst);
        self.transforms.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn audit(&self) -> &Arc<AuditLog> {
        &self.audit
    }

    /// Shares `audit` so several truth tables report into one log.
    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = audit;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_are_counted_by_origin() {
        let mut gt = GroundTruth::new();
        gt.insert("p0", RigidTransform::identity());
        assert!(gt.get("p0", &EvalScope::new("recall")).is_some());
        assert!(gt.get("missing", &EvalScope::new("plir")).is_none());
        assert_eq!(gt.audit().eval_reads(), 2);
        assert_eq!(gt.audit().violations(), 0);
        gt.get("p0", &EvalScope::new("train_student"));
        assert_eq!(gt.audit().violations(), 1);
    }
}
