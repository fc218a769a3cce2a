use crate::error::{invalid, Result};
use crate::event::PoiInventory;
use crate::taxonomy::{Mid10, N_CATEGORIES};

use super::{BallTree, GeoPoint, Neighbor};

/// Which POIs a query searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Category(Mid10),
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryMode {
    Knn(usize),
    Radius(f64),
}

/// One ball tree per category plus one over the whole inventory. Hits carry
/// the POI's position in the (id-sorted) inventory, so the payload tie-break
/// is a `poi_id` tie-break.
#[derive(Debug, Clone)]
pub struct CategoryIndex {
    per_category: Vec<BallTree>,
    global: BallTree,
}

impl CategoryIndex {
    pub fn build(inventory: &PoiInventory) -> Result<Self> {
        if inventory.is_empty() {
            return Err(invalid("cannot index an empty POI inventory"));
        }
        let per_category = (0..N_CATEGORIES)
            .map(|c| {
                BallTree::build(
                    inventory
                        .pois()
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p.category.index() == c)
                        .map(|(i, p)| (i, p.location())),
                )
            })
            .collect();
        let global = BallTree::build(
            inventory
                .pois()
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.location())),
        );
        Ok(CategoryIndex {
            per_category,
            global,
        })
    }

    fn tree(&self, scope: Scope) -> &BallTree {
        match scope {
            Scope::Category(c) => &self.per_category[c.index()],
            Scope::Global => &self.global,
        }
    }

    pub fn len(&self, scope: Scope) -> usize {
        self.tree(scope).len()
    }

    /// Exact query; knn on an empty category returns an empty list.
    pub fn query(&self, anchor: GeoPoint, scope: Scope, mode: QueryMode) -> Vec<Neighbor> {
        match mode {
            QueryMode::Knn(k) => self.tree(scope).knn(anchor, k),
            QueryMode::Radius(r) => self.tree(scope).within(anchor, r),
        }
    }

    pub fn knn(&self, anchor: GeoPoint, scope: Scope, k: usize) -> Vec<Neighbor> {
        self.tree(scope).knn(anchor, k)
    }

    pub fn within(&self, anchor: GeoPoint, scope: Scope, radius_m: f64) -> Vec<Neighbor> {
        self.tree(scope).within(anchor, radius_m)
    }
}
