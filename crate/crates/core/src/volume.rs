//! Per-instance pixel probabilities and labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{exact_sum, Scalar};

/// Which of the two segmentation channels an operation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Numerator region (e.g. necrosis).
    A,
    /// Denominator region (e.g. whole tumor).
    B,
}

/// Binary ground-truth masks for both channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub a: Vec<bool>,
    pub b: Vec<bool>,
}

/// Predicted probabilities (and optionally labels) for one case.
///
/// Pixels are a flat sequence; channel `A` is a subregion of channel `B`, so
/// labelled volumes must satisfy `y_a <= y_b` pixelwise.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceVolume<T> {
    id: String,
    g_a: Vec<T>,
    g_b: Vec<T>,
    labels: Option<Labels>,
}

impl<T: Scalar> InstanceVolume<T> {
    pub fn new(
        id: impl Into<String>,
        g_a: Vec<T>,
        g_b: Vec<T>,
        labels: Option<Labels>,
    ) -> Result<Self> {
        let id = id.into();
        if g_a.is_empty() {
            return Err(Error::InvalidVolume(format!("{id}: no pixels")));
        }
        if g_a.len() != g_b.len() {
            return Err(Error::InvalidVolume(format!(
                "{id}: g_a has {} pixels but g_b has {}",
                g_a.len(),
                g_b.len()
            )));
        }
        let in_unit = |g: &T| *g >= T::zero() && *g <= T::one();
        if let Some(i) = g_a.iter().chain(g_b.iter()).position(|g| !in_unit(g)) {
            return Err(Error::InvalidVolume(format!(
                "{id}: probability at flat index {i} outside [0, 1]"
            )));
        }
        if let Some(l) = &labels {
            if l.a.len() != g_a.len() || l.b.len() != g_a.len() {
                return Err(Error::InvalidVolume(format!(
                    "{id}: label length does not match {} pixels",
                    g_a.len()
                )));
            }
            if let Some(i) = l.a.iter().zip(&l.b).position(|(&a, &b)| a && !b) {
                return Err(Error::InvalidVolume(format!(
                    "{id}: pixel {i} labelled A outside region B"
                )));
            }
        }
        Ok(Self { id, g_a, g_b, labels })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_pixels(&self) -> usize {
        self.g_a.len()
    }

    pub fn g_a(&self) -> &[T] {
        &self.g_a
    }

    pub fn g_b(&self) -> &[T] {
        &self.g_b
    }

    pub fn predictions(&self, channel: Channel) -> &[T] {
        match channel {
            Channel::A => &self.g_a,
            Channel::B => &self.g_b,
        }
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn require_labels(&self) -> Result<&Labels> {
        self.labels.as_ref().ok_or(Error::LabelsRequired)
    }

    pub fn label_mask(&self, channel: Channel) -> Result<&[bool]> {
        let l = self.require_labels()?;
        Ok(match channel {
            Channel::A => &l.a,
            Channel::B => &l.b,
        })
    }

    /// Same predictions with labels dropped (inference-time view).
    pub fn without_labels(&self) -> Self {
        Self {
            id: self.id.clone(),
            g_a: self.g_a.clone(),
            g_b: self.g_b.clone(),
            labels: None,
        }
    }

    /// Concatenates the pixels of two volumes. Labels survive only if both
    /// sides carry them.
    pub fn concat(&self, other: &Self, id: impl Into<String>) -> Self {
        let join = |x: &[T], y: &[T]| x.iter().chain(y).copied().collect::<Vec<_>>();
        let labels = match (&self.labels, &other.labels) {
            (Some(l), Some(r)) => Some(Labels {
                a: l.a.iter().chain(&r.a).copied().collect(),
                b: l.b.iter().chain(&r.b).copied().collect(),
            }),
            _ => None,
        };
        Self {
            id: id.into(),
            g_a: join(&self.g_a, &other.g_a),
            g_b: join(&self.g_b, &other.g_b),
            labels,
        }
    }
}

/// Sum of predicted probabilities of one channel. Needs no labels.
pub fn soft_volume<T: Scalar>(v: &InstanceVolume<T>, channel: Channel) -> T {
    exact_sum(v.predictions(channel))
}

/// Number of labelled pixels in one channel.
pub fn label_count<T: Scalar>(v: &InstanceVolume<T>, channel: Channel) -> Result<usize> {
    Ok(v.label_mask(channel)?.iter().filter(|&&y| y).count())
}
