use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::UnitVec3;

/// Fixed-point scale for accumulated location sums: 2^60 per unit.
const FIXED_SCALE: f64 = (1u64 << 60) as f64;

/// Exact accumulator for sums of unit vectors. Integer arithmetic makes
/// add-then-remove restore the previous value bit for bit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedVec3(pub [i128; 3]);

impl FixedVec3 {
    pub fn from_unit(v: &UnitVec3) -> Self {
        let a = v.as_array();
        FixedVec3([
            (a[0] * FIXED_SCALE).round() as i128,
            (a[1] * FIXED_SCALE).round() as i128,
            (a[2] * FIXED_SCALE).round() as i128,
        ])
    }

    #[inline]
    pub fn add(&mut self, o: &FixedVec3) {
        for i in 0..3 {
            self.0[i] += o.0[i];
        }
    }

    #[inline]
    pub fn sub(&mut self, o: &FixedVec3) {
        for i in 0..3 {
            self.0[i] -= o.0[i];
        }
    }

    pub fn to_f64(&self) -> [f64; 3] {
        [self.0[0] as f64 / FIXED_SCALE, self.0[1] as f64 / FIXED_SCALE, self.0[2] as f64 / FIXED_SCALE]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: String,
    pub location: UnitVec3,
    pub views: Vec<u32>,
}

/// Customers with their locations and bags of viewed items.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    customers: Vec<Customer>,
    fixed: Vec<FixedVec3>,
    offsets: Vec<usize>,
    catalog_size: usize,
}

impl Dataset {
    pub fn new(customers: Vec<Customer>, catalog_size: usize) -> Result<Self> {
        if catalog_size == 0 {
            return Err(Error::Config("catalog size must be at least 1".into()));
        }
        let mut offsets = Vec::with_capacity(customers.len() + 1);
        offsets.push(0);
        for (line, c) in customers.iter().enumerate() {
            if let Some(&v) = c.views.iter().find(|v| **v as usize >= catalog_size) {
                return Err(Error::Data {
                    line: line + 1,
                    message: format!("item {v} outside catalog of size {catalog_size}"),
                });
            }
            offsets.push(offsets.last().unwrap() + c.views.len());
        }
        let fixed = customers.iter().map(|c| FixedVec3::from_unit(&c.location)).collect();
        Ok(Dataset { customers, fixed, offsets, catalog_size })
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog_size
    }

    pub fn customers(&self) -> &[Customer] {
        &self.customers
    }

    pub fn customer(&self, d: usize) -> &Customer {
        &self.customers[d]
    }

    #[inline]
    pub fn views(&self, d: usize) -> &[u32] {
        &self.customers[d].views
    }

    #[inline]
    pub fn location(&self, d: usize) -> &UnitVec3 {
        &self.customers[d].location
    }

    #[inline]
    pub fn location_fixed(&self, d: usize) -> &FixedVec3 {
        &self.fixed[d]
    }

    /// Position of customer `d`'s first view in the flat per-view arrays.
    #[inline]
    pub fn view_offset(&self, d: usize) -> usize {
        self.offsets[d]
    }

    pub fn total_views(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Replaces locations and views in place, keeping ids and view counts.
    /// Used by successive-conditional simulation.
    pub fn replace_observations(&mut self, locations: Vec<UnitVec3>, views: Vec<Vec<u32>>) -> Result<()> {
        if locations.len() != self.len() || views.len() != self.len() {
            return Err(Error::LengthMismatch(locations.len(), self.len()));
        }
        for (d, (loc, vs)) in locations.into_iter().zip(views).enumerate() {
            if vs.len() != self.customers[d].views.len() {
                return Err(Error::LengthMismatch(vs.len(), self.customers[d].views.len()));
            }
            if vs.iter().any(|v| *v as usize >= self.catalog_size) {
                return Err(Error::InvalidItem { item: d, size: self.catalog_size });
            }
            self.fixed[d] = FixedVec3::from_unit(&loc);
            self.customers[d].location = loc;
            self.customers[d].views = vs;
        }
        Ok(())
    }
}
