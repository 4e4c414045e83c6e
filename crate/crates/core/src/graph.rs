//! Dependency adjacency for the graph convolution.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;

use crate::corpus::AnnotatedSentence;
use crate::error::{AsteError, Result};

/// Undirected token graph with its normalized adjacency
/// `D^-1/2 (A + I) D^-1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyGraph {
    edges: BTreeSet<(usize, usize)>,
    adjacency: Array2<f64>,
}

impl DependencyGraph {
    /// Edges are stored as `(min, max)`; self-edges are dropped since every
    /// node already gets a self-loop.
    pub fn new(edges: impl IntoIterator<Item = (usize, usize)>, len: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for x in [a, b] {
                if x >= len {
                    return Err(AsteError::Index { index: x, len });
                }
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }

        let mut raw = Array2::<f64>::eye(len);
        for &(a, b) in &set {
            raw[[a, b]] = 1.0;
            raw[[b, a]] = 1.0;
        }
        let inv_sqrt_degree: Vec<f64> = raw.rows().into_iter().map(|r| r.sum().powf(-0.5)).collect();
        let adjacency =
            Array2::from_shape_fn((len, len), |(i, j)| {
                raw[[i, j]] * (inv_sqrt_degree[i.min(j)] * inv_sqrt_degree[i.max(j)])
            });
        Ok(DependencyGraph {
            edges: set,
            adjacency,
        })
    }

    /// Builds the graph from 1-based head indices (`0` marks the root).
    pub fn from_heads(heads: &[usize]) -> Result<Self> {
        let len = heads.len();
        let mut edges = Vec::with_capacity(len);
        for (i, &h) in heads.iter().enumerate() {
            if h > len {
                return Err(AsteError::Index { index: h, len });
            }
            if h > 0 {
                edges.push((i, h - 1));
            }
        }
        Self::new(edges, len)
    }

    /// Graph with self-loops only.
    pub fn identity(len: usize) -> Self {
        Self::new(std::iter::empty(), len).expect("no edges to validate")
    }

    pub fn len(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Symmetric 0/1 matrix without self-loops.
    pub fn raw_adjacency(&self) -> Array2<f64> {
        let mut raw = Array2::zeros((self.len(), self.len()));
        for &(a, b) in &self.edges {
            raw[[a, b]] = 1.0;
            raw[[b, a]] = 1.0;
        }
        raw
    }

    pub fn normalized(&self) -> &Array2<f64> {
        &self.adjacency
    }
}

/// Parses a dependency file: one line of whitespace-separated 1-based head
/// indices per sentence.
pub fn parse_heads(text: &str) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|h| {
                    h.parse::<usize>()
                        .map_err(|_| AsteError::format(i + 1, format!("bad head index {h:?}")))
                })
                .collect()
        })
        .collect()
}

pub fn read_heads(path: impl AsRef<Path>) -> Result<Vec<Vec<usize>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AsteError::io(path, e))?;
    parse_heads(&text)
}

/// Attaches one head list per sentence, in corpus order.
pub fn attach_heads(sentences: &mut [AnnotatedSentence], heads: &[Vec<usize>]) -> Result<()> {
    if sentences.len() != heads.len() {
        return Err(AsteError::Shape(format!(
            "{} sentences but {} dependency lines",
            sentences.len(),
            heads.len()
        )));
    }
    for (i, (s, h)) in sentences.iter_mut().zip(heads).enumerate() {
        if s.len() != h.len() {
            return Err(AsteError::Shape(format!(
                "sentence {i}: {} tokens but {} heads",
                s.len(),
                h.len()
            )));
        }
        s.dep_graph = Some(DependencyGraph::from_heads(h)?);
    }
    Ok(())
}
