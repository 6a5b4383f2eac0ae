//! Hypothesis families, composite (intersection) hypotheses, and ordered
//! partitions encoding a testing order.
//!
//! Elementary hypotheses carry 1-based base indices `1..=k`. A composite
//! hypothesis is a nonempty set of base indices; intersecting two hypotheses
//! corresponds to taking the union of their index sets. Family elements are
//! addressed by their 0-based position in the element list, which is how
//! decision states, partitions, and traces refer to them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of one elementary hypothesis, 1-based within a family of size k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HypothesisId(usize);

impl HypothesisId {
    pub fn new(index: usize, k: usize) -> Result<Self> {
        if index == 0 || index > k {
            return Err(Error::Validation(format!(
                "hypothesis index {index} outside 1..={k}"
            )));
        }
        Ok(Self(index))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// An intersection of elementary hypotheses, represented by the set of
/// base indices being intersected. Identity is set equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompositeHypothesis {
    members: BTreeSet<usize>,
}

impl CompositeHypothesis {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let members: BTreeSet<usize> = members.into_iter().collect();
        if members.is_empty() {
            return Err(Error::Validation(
                "composite hypothesis must have at least one member".into(),
            ));
        }
        Ok(Self { members })
    }

    pub fn singleton(j: usize) -> Self {
        Self {
            members: BTreeSet::from([j]),
        }
    }

    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    /// Number of elementary hypotheses intersected.
    pub fn dimension(&self) -> usize {
        self.members.len()
    }

    /// Intersection of the two hypotheses (union of member sets).
    pub fn intersect(&self, other: &Self) -> Self {
        Self {
            members: self.members.union(&other.members).copied().collect(),
        }
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.contains(&j)
    }
}

impl fmt::Debug for CompositeHypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// An ordered collection of distinct hypotheses over base indices `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisFamily {
    k: usize,
    elements: Vec<CompositeHypothesis>,
}

impl HypothesisFamily {
    pub fn new(k: usize, elements: Vec<CompositeHypothesis>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("family size k must be at least 1".into()));
        }
        if elements.is_empty() {
            return Err(Error::Validation(
                "family must have at least one element".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in elements.iter().enumerate() {
            if let Some(&m) = e.members().iter().find(|&&m| m == 0 || m > k) {
                return Err(Error::Validation(format!(
                    "element {i} references base index {m} outside 1..={k}"
                )));
            }
            if !seen.insert(e.clone()) {
                return Err(Error::Validation(format!("duplicate family element {e:?}")));
            }
        }
        Ok(Self { k, elements })
    }

    /// Family of the k elementary hypotheses as singletons, in index order.
    pub fn elementary(k: usize) -> Result<Self> {
        Self::new(k, (1..=k).map(CompositeHypothesis::singleton).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn elements(&self) -> &[CompositeHypothesis] {
        &self.elements
    }

    pub fn element(&self, idx: usize) -> &CompositeHypothesis {
        &self.elements[idx]
    }

    pub fn index_of(&self, h: &CompositeHypothesis) -> Option<usize> {
        self.elements.iter().position(|e| e == h)
    }

    /// True when every pairwise intersection of elements is itself an element.
    pub fn is_closed(&self) -> bool {
        for a in &self.elements {
            for b in &self.elements {
                if self.index_of(&a.intersect(b)).is_none() {
                    return false;
                }
            }
        }
        true
    }
}

/// Ordered disjoint blocks of family-element indices; block order is the
/// testing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedPartition {
    blocks: Vec<Vec<usize>>,
}

/// Structured outcome of a failed partition validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionViolation {
    /// An element appears in two blocks.
    Overlap {
        element: usize,
        blocks: (usize, usize),
    },
    /// A family element is covered by no block.
    Missing { element: usize },
    /// A block contains no elements.
    EmptyBlock { block: usize },
    /// A block references an element index outside the family.
    OutOfRange { element: usize, block: usize },
}

impl fmt::Display for PartitionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Overlap { element, blocks } => write!(
                f,
                "element {element} appears in blocks {} and {}",
                blocks.0, blocks.1
            ),
            Self::Missing { element } => write!(f, "element {element} not covered by any block"),
            Self::EmptyBlock { block } => write!(f, "block {block} is empty"),
            Self::OutOfRange { element, block } => {
                write!(f, "block {block} references unknown element {element}")
            }
        }
    }
}

impl OrderedPartition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// 0-based index of the block containing the given family element.
    pub fn block_of(&self, element: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&element))
    }

    /// Checks that blocks are nonempty, disjoint, and cover the family.
    pub fn validate(
        &self,
        family: &HypothesisFamily,
    ) -> std::result::Result<(), PartitionViolation> {
        let mut owner: Vec<Option<usize>> = vec![None; family.len()];
        for (bi, block) in self.blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(PartitionViolation::EmptyBlock { block: bi });
            }
            for &e in block {
                if e >= family.len() {
                    return Err(PartitionViolation::OutOfRange {
                        element: e,
                        block: bi,
                    });
                }
                match owner[e] {
                    Some(first) => {
                        return Err(PartitionViolation::Overlap {
                            element: e,
                            blocks: (first, bi),
                        })
                    }
                    None => owner[e] = Some(bi),
                }
            }
        }
        if let Some(e) = owner.iter().position(|o| o.is_none()) {
            return Err(PartitionViolation::Missing { element: e });
        }
        Ok(())
    }
}

/// Validates a partition against its family, as a fallible operation.
pub fn validate_partition(
    partition: &OrderedPartition,
    family: &HypothesisFamily,
) -> std::result::Result<(), PartitionViolation> {
    partition.validate(family)
}

/// Full closed family of all nonempty intersections of `1..=k`, partitioned
/// into blocks of decreasing dimension. Block 1 holds the global hypothesis,
/// block 2 the intersections of dimension k-1, and so on.
pub fn build_closed_partition(k: usize) -> Result<(HypothesisFamily, OrderedPartition)> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if k > 16 {
        return Err(Error::Validation(format!(
            "closed family of k = {k} would have {} elements; limit is k <= 16",
            (1u64 << k) - 1
        )));
    }
    let mut elements = Vec::new();
    let mut blocks = Vec::new();
    for dim in (1..=k).rev() {
        let mut block = Vec::new();
        for mask in 1u32..(1 << k) {
            if mask.count_ones() as usize == dim {
                let members = (1..=k).filter(|&j| mask & (1 << (j - 1)) != 0);
                block.push(elements.len());
                elements.push(CompositeHypothesis::new(members)?);
            }
        }
        blocks.push(block);
    }
    let family = HypothesisFamily::new(k, elements)?;
    Ok((family, OrderedPartition::new(blocks)))
}

/// Nested chain of intersections: element j (1-based) is the intersection of
/// elementary hypotheses `j..=k`. The partition tests the chain in singleton
/// blocks of decreasing dimension, the global hypothesis first.
pub fn build_chain_family(k: usize) -> Result<(HypothesisFamily, OrderedPartition)> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let elements: Vec<CompositeHypothesis> = (1..=k)
        .map(|j| CompositeHypothesis::new(j..=k))
        .collect::<Result<_>>()?;
    let family = HypothesisFamily::new(k, elements)?;
    let blocks = (0..k).map(|i| vec![i]).collect();
    Ok((family, OrderedPartition::new(blocks)))
}
