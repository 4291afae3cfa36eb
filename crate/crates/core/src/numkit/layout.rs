use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub offset: usize,
    pub size: usize,
    pub label: String,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.size
    }
}

/// Ordered partition of `[0, dim)` into labelled contiguous blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockLayout {
    blocks: Vec<Block>,
    #[serde(skip)]
    dim: usize,
}

impl BlockLayout {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Layout("layout has no blocks".into()));
        }
        let mut next = 0usize;
        for (b, block) in blocks.iter().enumerate() {
            if block.size == 0 {
                return Err(Error::Layout(format!("block {b} (`{}`) has size 0", block.label)));
            }
            if block.offset != next {
                return Err(Error::Layout(format!(
                    "block {b} (`{}`) starts at {} but the previous block ends at {next}",
                    block.label, block.offset
                )));
            }
            next += block.size;
        }
        Ok(BlockLayout { blocks, dim: next })
    }

    /// Builds a contiguous layout from `(label, size)` pairs.
    pub fn from_sizes<I, S>(sizes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut offset = 0;
        let blocks = sizes
            .into_iter()
            .map(|(label, size)| {
                let block = Block { offset, size, label: label.into() };
                offset += size;
                block
            })
            .collect();
        Self::new(blocks)
    }

    pub fn single(dim: usize, label: &str) -> Result<Self> {
        Self::from_sizes([(label, dim)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, b: usize) -> &Block {
        &self.blocks[b]
    }

    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(|b| b.size).max().unwrap_or(0)
    }

    /// Index of the block containing coordinate `i`.
    pub fn block_of(&self, i: usize) -> Option<usize> {
        if i >= self.dim {
            return None;
        }
        Some(self.blocks.partition_point(|b| b.offset <= i) - 1)
    }

    pub fn find(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// Splits every block larger than `cap` into contiguous pieces of at most `cap`
    /// coordinates. Pieces are labelled `label#0`, `label#1`, ...
    pub fn split_capped(&self, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::Layout("block cap must be at least 1".into()));
        }
        let mut out = Vec::new();
        for block in &self.blocks {
            if block.size <= cap {
                out.push(block.clone());
                continue;
            }
            let mut start = 0;
            let mut piece = 0;
            while start < block.size {
                let size = cap.min(block.size - start);
                out.push(Block {
                    offset: block.offset + start,
                    size,
                    label: format!("{}#{piece}", block.label),
                });
                start += size;
                piece += 1;
            }
        }
        Self::new(out)
    }

    /// Sum of squared block sizes, the entry count of a dense block-diagonal matrix.
    pub fn dense_entries(&self) -> usize {
        self.blocks.iter().map(|b| b.size * b.size).sum()
    }
}

impl<'de> Deserialize<'de> for BlockLayout {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            blocks: Vec<Block>,
        }
        let raw = Raw::deserialize(de)?;
        BlockLayout::new(raw.blocks).map_err(serde::de::Error::custom)
    }
}
