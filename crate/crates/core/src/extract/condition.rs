use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ROUTE_COUNT;

/// Number of unordered route pairs, `n(n+1)/2` with `n = 12`.
pub const CATEGORY_COUNT: u32 = (ROUTE_COUNT * (ROUTE_COUNT + 1) / 2) as u32;

/// Condition label of a scenario: the unordered pair of the two vehicles'
/// route ids, numbered `1..=78`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionCategory {
    pub category_id: u32,
    pub route_low: usize,
    pub route_high: usize,
}

impl fmt::Display for ConditionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.category_id)
    }
}

fn triangular_index(low: usize, high: usize) -> u32 {
    let n = ROUTE_COUNT;
    (low * (2 * n - low + 1) / 2 + (high - low) + 1) as u32
}

/// Order-insensitive encoding of two route ids into a category id.
pub fn encode_condition(route_a: usize, route_b: usize) -> Result<ConditionCategory> {
    for r in [route_a, route_b] {
        if r >= ROUTE_COUNT {
            return Err(Error::RouteIdOutOfRange(r));
        }
    }
    let (low, high) = (route_a.min(route_b), route_a.max(route_b));
    Ok(ConditionCategory {
        category_id: triangular_index(low, high),
        route_low: low,
        route_high: high,
    })
}

pub fn decode_condition(category_id: u32) -> Result<ConditionCategory> {
    if !(1..=CATEGORY_COUNT).contains(&category_id) {
        return Err(Error::CategoryOutOfRange(category_id));
    }
    // Row `low` starts at triangular_index(low, low).
    let low = (0..ROUTE_COUNT)
        .rev()
        .find(|&low| triangular_index(low, low) <= category_id)
        .expect("category 1 starts row 0");
    let high = low + (category_id - triangular_index(low, low)) as usize;
    Ok(ConditionCategory {
        category_id,
        route_low: low,
        route_high: high,
    })
}
