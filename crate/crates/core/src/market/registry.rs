use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SellerEntry {
    pub id: String,
    /// Number of sessions already closed when the seller joined.
    pub joined_after: u64,
    pub sessions: u64,
    pub missed: u64,
}

impl SellerEntry {
    pub fn missing_rate(&self) -> f64 {
        if self.sessions == 0 {
            0.0
        } else {
            self.missed as f64 / self.sessions as f64
        }
    }
}

/// Registered sellers in a stable index order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SellerRegistry {
    sellers: Vec<SellerEntry>,
    closed_sessions: u64,
}

impl SellerRegistry {
    pub fn len(&self) -> usize {
        self.sellers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sellers.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sellers.iter().position(|s| s.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sellers.iter().map(|s| s.id.as_str())
    }

    pub fn entries(&self) -> &[SellerEntry] {
        &self.sellers
    }

    /// Returns the new index, or `None` if the id is taken.
    pub(crate) fn register(&mut self, id: &str) -> Option<usize> {
        if self.index_of(id).is_some() {
            return None;
        }
        self.sellers.push(SellerEntry {
            id: id.to_owned(),
            joined_after: self.closed_sessions,
            sessions: 0,
            missed: 0,
        });
        Some(self.sellers.len() - 1)
    }

    pub(crate) fn record_session(&mut self, missing: &[bool]) {
        self.closed_sessions += 1;
        for (seller, &m) in self.sellers.iter_mut().zip(missing) {
            seller.sessions += 1;
            seller.missed += u64::from(m);
        }
    }
}
