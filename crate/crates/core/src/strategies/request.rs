use std::collections::BTreeSet;
use std::fmt;

use super::MultiIndex;
use crate::error::{Error, Result};

/// A derivative of one output channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Field {
    pub channel: usize,
    pub index: MultiIndex,
}

impl Field {
    pub fn new(channel: usize, index: impl Into<MultiIndex>) -> Self {
        Field {
            channel,
            index: index.into(),
        }
    }

    /// Channel 0, for single-output problems.
    pub fn of(index: impl Into<MultiIndex>) -> Self {
        Field::new(0, index)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}{}", self.channel, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTerm {
    pub field: Field,
    pub coeff: f64,
}

impl LinearTerm {
    pub fn new(field: Field, coeff: f64) -> Self {
        LinearTerm { field, coeff }
    }
}

/// Pointwise product of two derivative fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductTerm {
    pub left: Field,
    pub right: Field,
}

impl ProductTerm {
    pub fn new(left: Field, right: Field) -> Self {
        ProductTerm { left, right }
    }
}

/// The coordinate derivatives a residual needs.
///
/// `linear` fields are extracted individually, `products` are pairwise
/// products of fields, and each entry of `combinations` is a weighted sum of
/// fields that strategies may evaluate in one fused pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DerivativeRequest {
    pub dims: usize,
    pub channels: usize,
    pub linear: Vec<Field>,
    pub products: Vec<ProductTerm>,
    pub combinations: Vec<Vec<LinearTerm>>,
}

impl DerivativeRequest {
    pub fn new(dims: usize, channels: usize) -> Self {
        DerivativeRequest {
            dims,
            channels,
            ..Default::default()
        }
    }

    pub fn with_field(mut self, field: Field) -> Self {
        if !self.linear.contains(&field) {
            self.linear.push(field);
        }
        self
    }

    pub fn with_product(mut self, left: Field, right: Field) -> Self {
        self.products.push(ProductTerm::new(left, right));
        self
    }

    pub fn with_combination(mut self, terms: Vec<LinearTerm>) -> Self {
        self.combinations.push(terms);
        self
    }

    /// Every field read by any term.
    pub fn fields(&self) -> BTreeSet<Field> {
        let mut out: BTreeSet<Field> = self.linear.iter().cloned().collect();
        for p in &self.products {
            out.insert(p.left.clone());
            out.insert(p.right.clone());
        }
        for c in &self.combinations {
            out.extend(c.iter().map(|t| t.field.clone()));
        }
        out
    }

    pub fn max_order(&self) -> usize {
        self.fields()
            .iter()
            .map(|f| f.index.order())
            .max()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty() && self.products.is_empty() && self.combinations.is_empty()
    }

    /// Checks dimensions and channels, and the order bound if given.
    pub fn validate(&self, max_order: Option<usize>) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Config("empty derivative request".into()));
        }
        if self.combinations.iter().any(Vec::is_empty) {
            return Err(Error::Config(
                "empty combination in derivative request".into(),
            ));
        }
        for f in self.fields() {
            if f.index.dims() != self.dims {
                return Err(Error::Config(format!(
                    "multi-index {} has {} dimensions, request has {}",
                    f.index,
                    f.index.dims(),
                    self.dims
                )));
            }
            if f.channel >= self.channels {
                return Err(Error::Config(format!(
                    "channel {} out of range for {} channels",
                    f.channel, self.channels
                )));
            }
            if let Some(p) = max_order {
                if f.index.order() > p {
                    return Err(Error::Config(format!(
                        "derivative {} exceeds the maximum order {p}",
                        f.index
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every field together with every index it is nested from.
    pub fn closure(&self) -> BTreeSet<Field> {
        let mut out = BTreeSet::new();
        for f in self.fields() {
            let mut cur = Some(f.index.clone());
            while let Some(idx) = cur {
                cur = idx.parent().map(|(p, _)| p);
                out.insert(Field::new(f.channel, idx));
            }
        }
        out
    }
}
