//! Hand-built belief maps for information studies.

use crate::error::Result;
use crate::grid::GridMap;
use crate::logodds::{CategoricalPmf, LogOdds};

/// Confidently labeled wall: occupancy 0.9, mostly class 1.
pub const RED_PMF: [f64; 3] = [0.1, 0.8, 0.1];
/// Equally occupied wall with its class split between 1 and 2.
pub const GREEN_PMF: [f64; 3] = [0.1, 0.45, 0.45];

/// Known-free 20×40 room crossed by two full-width walls twenty rows
/// apart, so that the neighborhoods of the walls are translates of each
/// other.
#[derive(Clone, Debug)]
pub struct TwoWallScene {
    pub map: GridMap,
    pub red_y: i64,
    pub green_y: i64,
}

impl TwoWallScene {
    pub const NX: usize = 20;
    pub const NY: usize = 40;
    /// Longest beam that keeps the two neighborhoods equivalent.
    pub const MAX_RANGE: f64 = 5.0;

    pub fn new() -> Result<Self> {
        let mut map = GridMap::new_2d(Self::NX, Self::NY, 1.0, LogOdds::uniform(2))?;
        let free = LogOdds::from_nonfree(&[-6.0, -6.0])?;
        let red = LogOdds::from_pmf(&CategoricalPmf::new(RED_PMF.to_vec())?)?;
        let green = LogOdds::from_pmf(&CategoricalPmf::new(GREEN_PMF.to_vec())?)?;
        let (red_y, green_y) = (8, 28);
        for idx in 0..map.num_cells() {
            let y = map.cell_coords(idx)[1];
            let h = if y == red_y {
                &red
            } else if y == green_y {
                &green
            } else {
                &free
            };
            map.set_cell(idx, h)?;
        }
        Ok(TwoWallScene { map, red_y, green_y })
    }

    pub fn is_wall(&self, idx: usize) -> bool {
        let y = self.map.cell_coords(idx)[1];
        y == self.red_y || y == self.green_y
    }

    /// Free cells within `radius` rows of the wall at `wall_y`.
    pub fn near(&self, wall_y: i64, radius: i64) -> Vec<usize> {
        (0..self.map.num_cells())
            .filter(|&i| !self.is_wall(i) && (self.map.cell_coords(i)[1] - wall_y).abs() <= radius)
            .collect()
    }
}
