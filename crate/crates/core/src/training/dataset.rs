use crate::ingest::{LabelScheme, Segment};
use crate::tensor::Tensor;

use super::TrainError;

/// Labelled segments of equal length under one label scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub segments: Vec<Segment>,
    pub scheme: LabelScheme,
}

impl Dataset {
    pub fn new(segments: Vec<Segment>, scheme: LabelScheme) -> Result<Self, TrainError> {
        if let Some(first) = segments.first() {
            let len = first.values.len();
            if let Some(bad) = segments.iter().find(|s| s.values.len() != len) {
                return Err(TrainError::Data(format!(
                    "segment from {} has {} samples, expected {len}",
                    bad.source_id,
                    bad.values.len()
                )));
            }
        }
        if let Some(bad) = segments.iter().find(|s| s.values.iter().any(|v| !v.is_finite())) {
            return Err(TrainError::Data(format!("segment from {} has non-finite samples", bad.source_id)));
        }
        if let Some(bad) = segments.iter().find(|s| s.label.index >= scheme.len()) {
            return Err(TrainError::Data(format!(
                "label {} outside scheme {scheme}",
                bad.label.index
            )));
        }
        Ok(Self { segments, scheme })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.scheme.len()
    }

    pub fn segment_len(&self) -> Option<usize> {
        self.segments.first().map(|s| s.values.len())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.label.index).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.segments {
            counts[s.label.index] += 1;
        }
        counts
    }

    /// Copies of the segments at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            segments: indices.iter().map(|&i| self.segments[i].clone()).collect(),
            scheme: self.scheme.clone(),
        }
    }

    /// `B × 1 × L` input tensor and label vector for the given indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let len = self.segment_len().expect("batch from empty dataset");
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.segments[i].values);
            labels.push(self.segments[i].label.index);
        }
        let t = Tensor::new(&[indices.len(), 1, len], data).expect("consistent batch shape");
        (t, labels)
    }
}
