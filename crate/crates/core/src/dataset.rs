use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One category: a name plus optional word embedding and any number of
/// image embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelItem {
    pub id: usize,
    pub name: String,
    #[serde(default)]
    pub word_vec: Option<Vec<f64>>,
    #[serde(default)]
    pub image_vecs: Vec<Vec<f64>>,
}

impl LabelItem {
    pub fn new(id: usize, name: impl Into<String>) -> Self {
        LabelItem {
            id,
            name: name.into(),
            word_vec: None,
            image_vecs: Vec::new(),
        }
    }

    pub fn with_word(mut self, v: Vec<f64>) -> Self {
        self.word_vec = Some(v);
        self
    }

    pub fn with_images(mut self, imgs: Vec<Vec<f64>>) -> Self {
        self.image_vecs = imgs;
        self
    }

    pub fn has_images(&self) -> bool {
        !self.image_vecs.is_empty()
    }
}

/// A collection of categories with ids `1..=N` in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<LabelItem>,
    image_dim: usize,
    word_dim: usize,
}

impl Dataset {
    pub fn new(items: Vec<LabelItem>, image_dim: usize, word_dim: usize) -> Result<Self> {
        for (i, item) in items.iter().enumerate() {
            if item.id != i + 1 {
                return Err(Error::InvalidDataset(format!(
                    "item at position {} has id {} (ids must be 1..=N in order)",
                    i + 1,
                    item.id
                )));
            }
            if item.name.is_empty() {
                return Err(Error::InvalidDataset(format!("item {} has an empty name", item.id)));
            }
            if let Some(w) = &item.word_vec {
                check_vec(w, word_dim, "word vector")?;
            }
            for v in &item.image_vecs {
                check_vec(v, image_dim, "image vector")?;
            }
        }
        Ok(Dataset {
            items,
            image_dim,
            word_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn items(&self) -> &[LabelItem] {
        &self.items
    }

    /// Item with id `n` (1-based).
    pub fn item(&self, n: usize) -> &LabelItem {
        &self.items[n - 1]
    }

    /// Copies the listed ids into a new dataset, renumbered `1..` in the
    /// order given.
    pub fn subset(&self, ids: &[usize]) -> Result<Dataset> {
        let mut items = Vec::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if id == 0 || id > self.len() {
                return Err(Error::OutOfRange { id, max: self.len() });
            }
            let mut item = self.item(id).clone();
            item.id = i + 1;
            items.push(item);
        }
        Dataset::new(items, self.image_dim, self.word_dim)
    }

    /// Same items with every image vector dropped.
    pub fn without_images(&self) -> Dataset {
        let items = self
            .items
            .iter()
            .map(|it| LabelItem {
                image_vecs: Vec::new(),
                ..it.clone()
            })
            .collect();
        Dataset {
            items,
            image_dim: self.image_dim,
            word_dim: self.word_dim,
        }
    }
}

fn check_vec(v: &[f64], dim: usize, what: &'static str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gaps_and_bad_dims() {
        let items = vec![LabelItem::new(1, "a"), LabelItem::new(3, "b")];
        assert!(Dataset::new(items, 2, 2).is_err());
        let items = vec![LabelItem::new(1, "a").with_word(vec![1.0])];
        assert!(matches!(
            Dataset::new(items, 2, 2),
            Err(Error::DimensionMismatch { .. })
        ));
        let items = vec![LabelItem::new(1, "")];
        assert!(Dataset::new(items, 2, 2).is_err());
    }

    #[test]
    fn subset_renumbers() {
        let items = (1..=4).map(|i| LabelItem::new(i, format!("n{i}"))).collect();
        let d = Dataset::new(items, 1, 1).unwrap();
        let s = d.subset(&[4, 2]).unwrap();
        assert_eq!(s.item(1).name, "n4");
        assert_eq!(s.item(2).id, 2);
    }
}
