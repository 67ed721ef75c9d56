//! Interchangeable map back ends for the exploration loop.

use std::io::Write;
use std::ops::Range;

use crate::error::Result;
use crate::geometry::{BeamMeasurement, Cell};
use crate::grid::GridMap;
use crate::logodds::{entropy_of, LogOdds, SensorParams};
use crate::mi::BeliefMap;
use crate::octree::{FusionMode, SemanticOctree, TruncatedSemantics};
use crate::planner::NavGrid;
use crate::registry::Registry;

/// What a mapper needs to know about the world it maps.
#[derive(Clone, Debug)]
pub struct MapSpec {
    pub dims: [usize; 3],
    pub resolution: f64,
    pub prior: LogOdds,
    pub params: SensorParams,
    pub fusion: FusionMode,
    /// Layers projected onto the navigation grid.
    pub nav_band: Range<usize>,
}

pub trait Mapper: Send {
    fn name(&self) -> &'static str;
    fn integrate(&mut self, beams: &[BeamMeasurement]) -> Result<()>;
    fn belief(&self) -> &dyn BeliefMap;
    fn nav(&self) -> Result<NavGrid>;
    /// Full belief at a cell of the mapped region.
    fn belief_at(&self, c: Cell) -> Result<LogOdds>;
    /// Whether the cell has left the prior.
    fn is_known(&self, c: Cell) -> Result<bool>;
    /// Sum of cell entropies over the mapped region.
    fn entropy(&self) -> f64;
    fn write_map(&self, w: &mut dyn Write) -> Result<()>;
    /// File extension of `write_map` output.
    fn extension(&self) -> &'static str;
}

pub trait MapperBuilder: Send + Sync {
    fn build(&self, spec: &MapSpec) -> Result<Box<dyn Mapper>>;
}

pub struct GridMapper {
    map: GridMap,
    params: SensorParams,
    band: Range<usize>,
}

impl GridMapper {
    pub fn new(spec: &MapSpec) -> Result<Self> {
        Ok(GridMapper {
            map: GridMap::new(spec.dims, spec.resolution, [0.0; 3], spec.prior.clone())?,
            params: spec.params.clone(),
            band: spec.nav_band.clone(),
        })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }
}

impl Mapper for GridMapper {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn integrate(&mut self, beams: &[BeamMeasurement]) -> Result<()> {
        for b in beams {
            self.map.integrate(b, &self.params)?;
        }
        Ok(())
    }

    fn belief(&self) -> &dyn BeliefMap {
        &self.map
    }

    fn nav(&self) -> Result<NavGrid> {
        NavGrid::from_grid(&self.map, self.band.clone())
    }

    fn belief_at(&self, c: Cell) -> Result<LogOdds> {
        let idx = self.map.index(c).ok_or(crate::Error::OriginOutOfBounds)?;
        LogOdds::new(self.map.cell(idx).to_vec())
    }

    fn is_known(&self, c: Cell) -> Result<bool> {
        let idx = self.map.index(c).ok_or(crate::Error::OriginOutOfBounds)?;
        Ok(!self.map.is_prior(idx))
    }

    fn entropy(&self) -> f64 {
        self.map.map_entropy(None)
    }

    fn write_map(&self, w: &mut dyn Write) -> Result<()> {
        self.map.write_binary(w)
    }

    fn extension(&self) -> &'static str {
        "ssmigrid"
    }
}

pub struct OctreeMapper {
    tree: SemanticOctree,
    dims: [usize; 3],
    band: Range<usize>,
    prior: TruncatedSemantics,
}

impl OctreeMapper {
    pub fn new(spec: &MapSpec) -> Result<Self> {
        let side = spec.dims.iter().copied().max().unwrap_or(1).max(2);
        let depth = side.next_power_of_two().trailing_zeros() as u8;
        let tree = SemanticOctree::new(
            depth,
            spec.resolution,
            [0.0; 3],
            spec.prior.clone(),
            spec.params.clone(),
        )?
        .with_fusion(spec.fusion);
        Ok(OctreeMapper {
            prior: TruncatedSemantics::from_full(&spec.prior),
            tree,
            dims: spec.dims,
            band: spec.nav_band.clone(),
        })
    }

    pub fn tree(&self) -> &SemanticOctree {
        &self.tree
    }
}

impl Mapper for OctreeMapper {
    fn name(&self) -> &'static str {
        "octree"
    }

    fn integrate(&mut self, beams: &[BeamMeasurement]) -> Result<()> {
        self.tree.insert_scan(beams)
    }

    fn belief(&self) -> &dyn BeliefMap {
        &self.tree
    }

    fn nav(&self) -> Result<NavGrid> {
        NavGrid::from_octree(&self.tree, self.band.clone())
    }

    fn belief_at(&self, c: Cell) -> Result<LogOdds> {
        self.tree.query_full(c)
    }

    fn is_known(&self, c: Cell) -> Result<bool> {
        Ok(*self.tree.query_cell(c)? != self.prior)
    }

    fn entropy(&self) -> f64 {
        let [nx, ny, nz] = self.dims;
        let k = self.tree.num_classes();
        let mut total = 0.0;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let sem = self
                        .tree
                        .query_cell([x as i64, y as i64, z as i64])
                        .expect("cell inside tree");
                    total += entropy_of(sem.to_full(k).values());
                }
            }
        }
        total
    }

    fn write_map(&self, w: &mut dyn Write) -> Result<()> {
        self.tree.write_binary(w)
    }

    fn extension(&self) -> &'static str {
        "ssmioct"
    }
}

struct GridBuilder;

impl MapperBuilder for GridBuilder {
    fn build(&self, spec: &MapSpec) -> Result<Box<dyn Mapper>> {
        Ok(Box::new(GridMapper::new(spec)?))
    }
}

struct OctreeBuilder;

impl MapperBuilder for OctreeBuilder {
    fn build(&self, spec: &MapSpec) -> Result<Box<dyn Mapper>> {
        Ok(Box::new(OctreeMapper::new(spec)?))
    }
}

pub fn mapper_registry() -> Registry<dyn MapperBuilder> {
    let mut r: Registry<dyn MapperBuilder> = Registry::new("mapper");
    r.register("grid", || Box::new(GridBuilder));
    r.register("octree", || Box::new(OctreeBuilder));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::NavCell;

    fn spec() -> MapSpec {
        MapSpec {
            dims: [12, 10, 1],
            resolution: 1.0,
            prior: LogOdds::uniform(2),
            params: SensorParams::default_profile(2),
            fusion: FusionMode::Fold,
            nav_band: 0..1,
        }
    }

    #[test]
    fn both_mappers_agree_on_a_scan() {
        let reg = mapper_registry();
        assert_eq!(reg.names(), vec!["grid", "octree"]);
        let beams: Vec<BeamMeasurement> = (0..8)
            .map(|i| {
                let th = i as f64 * 0.7;
                BeamMeasurement::new([5.5, 5.5, 0.5], [th.cos(), th.sin(), 0.0], 3.0, 1 + i % 2, 5.0).unwrap()
            })
            .collect();
        let mut maps: Vec<Box<dyn Mapper>> = ["grid", "octree"]
            .iter()
            .map(|n| reg.create(n).unwrap().build(&spec()).unwrap())
            .collect();
        for m in &mut maps {
            m.integrate(&beams).unwrap();
        }
        for y in 0..10 {
            for x in 0..12 {
                let c = [x, y, 0];
                assert_eq!(maps[0].belief_at(c).unwrap(), maps[1].belief_at(c).unwrap(), "{c:?}");
                assert_eq!(maps[0].is_known(c).unwrap(), maps[1].is_known(c).unwrap());
            }
        }
        assert!((maps[0].entropy() - maps[1].entropy()).abs() < 1e-9);
        let (a, b) = (maps[0].nav().unwrap(), maps[1].nav().unwrap());
        for y in 0..10 {
            for x in 0..12 {
                assert_eq!(a.get(a.index(x, y).unwrap()), b.get(b.index(x, y).unwrap()));
            }
        }
        assert_eq!(a.get(a.index(5, 5).unwrap()), NavCell::Free);
        let mut buf = Vec::new();
        maps[1].write_map(&mut buf).unwrap();
        assert!(buf.starts_with(b"SSMIOCT1"));
    }
}
