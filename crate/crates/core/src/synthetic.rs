//! Embedding spaces with exactly chosen cosines, for fixtures and tests.
//!
//! Each topic owns one axis of an orthonormal basis. A text placed at cosine
//! `c` to a topic gets `c·e_topic + sqrt(1 - c²)·e_fresh`, where `e_fresh` is
//! an axis no other text uses. Two texts on the same topic then have cosine
//! `c₁·c₂`, and texts on different topics are orthogonal. A text at cosine 1
//! is the topic axis itself.

use crate::embedding::{EmbeddingError, PrecomputedStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topic(usize);

pub struct SyntheticSpace {
    dim: usize,
    next_axis: usize,
    store: PrecomputedStore,
}

impl SyntheticSpace {
    pub fn new(provider_id: &str, dim: usize) -> Self {
        SyntheticSpace {
            dim,
            next_axis: 0,
            store: PrecomputedStore::new(provider_id, dim),
        }
    }

    fn axis(&mut self) -> usize {
        assert!(
            self.next_axis < self.dim,
            "synthetic space exhausted: dim {}",
            self.dim
        );
        self.next_axis += 1;
        self.next_axis - 1
    }

    pub fn topic(&mut self) -> Topic {
        Topic(self.axis())
    }

    /// Places `text` at cosine `cos` (in [0, 1]) to `topic` and returns its
    /// vector.
    pub fn place(
        &mut self,
        text: &str,
        topic: Topic,
        cos: f64,
    ) -> Result<Vec<f64>, EmbeddingError> {
        assert!((0.0..=1.0).contains(&cos), "cosine {cos} outside [0, 1]");
        let mut v = vec![0.0; self.dim];
        v[topic.0] = cos;
        if cos < 1.0 {
            let fresh = self.axis();
            v[fresh] = (1.0 - cos * cos).sqrt();
        }
        self.store.insert_text(text, v.clone())?;
        Ok(v)
    }

    /// Places `text` on an axis of its own, orthogonal to everything else.
    pub fn place_alone(&mut self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let t = self.topic();
        self.place(text, t, 1.0)
    }

    pub fn axes_used(&self) -> usize {
        self.next_axis
    }

    pub fn into_store(self) -> PrecomputedStore {
        self.store
    }
}
