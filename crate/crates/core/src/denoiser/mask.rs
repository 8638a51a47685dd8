use std::sync::Arc;

use crate::error::{Error, Result};

/// Row-major allow-pattern over the joint `(context ++ query)` token axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    allowed: Arc<[bool]>,
}

impl AttentionMask {
    /// Arbitrary `size x size` pattern; every row must allow some key.
    pub fn from_pattern(size: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != size * size {
            return Err(Error::shape("attention mask", &[size, size], &[allowed.len()]));
        }
        if allowed.chunks(size.max(1)).any(|row| !row.iter().any(|&b| b)) {
            return Err(Error::Contract("attention mask row with no allowed keys".into()));
        }
        Ok(Self {
            size,
            allowed: allowed.into(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.size + col]
    }

    pub fn pattern(&self) -> Arc<[bool]> {
        self.allowed.clone()
    }

    pub fn count_allowed(&self) -> usize {
        self.allowed.iter().filter(|&&b| b).count()
    }

    /// `Some(p)` when every row may attend exactly keys `0..p`.
    pub fn key_prefix(&self) -> Option<usize> {
        let n = self.size;
        let p = (0..n).take_while(|&c| self.allowed(0, c)).count();
        let uniform = (0..n).all(|r| (0..n).all(|c| self.allowed(r, c) == (c < p)));
        uniform.then_some(p)
    }
}

/// Context rows attend all context rows; query rows attend context rows only.
pub fn build_mask(m_ctx: usize, m_qry: usize) -> Result<AttentionMask> {
    if m_ctx == 0 {
        return Err(Error::Contract("attention mask needs at least one context row".into()));
    }
    let size = m_ctx + m_qry;
    let allowed: Vec<bool> = (0..size * size).map(|i| i % size < m_ctx).collect();
    Ok(AttentionMask {
        size,
        allowed: allowed.into(),
    })
}
