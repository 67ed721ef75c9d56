//! Pruning multi-class octree over a cubic lattice of elements.

mod semantics;

use std::io::{Read, Write};

pub use semantics::{
    fuse_all, fuse_children, update_node, FusionMode, NodeUpdate, TruncatedSemantics, TRACKED_CLASSES,
};

use crate::error::{Error, Result};
use crate::geometry::{BeamMeasurement, Cell, Lattice, LatticeRay, Point3};
use crate::grid::GridMap;
use crate::io::{read_f32, read_f64, read_f64_vec, read_u16, read_u8, write_f64_vec};
use crate::logodds::{LogOdds, SensorParams};
use crate::mi::{SrleRay, SrleRun};

const OCT_MAGIC: &[u8; 8] = b"SSMIOCT1";

#[derive(Clone, Debug, PartialEq)]
struct Node {
    sem: TruncatedSemantics,
    children: Option<Box<[Node; 8]>>,
}

impl Node {
    fn leaf(sem: TruncatedSemantics) -> Self {
        Node { sem, children: None }
    }

    fn expand(&mut self) -> &mut [Node; 8] {
        if self.children.is_none() {
            let kid = Node::leaf(self.sem.clone());
            self.children = Some(Box::new(std::array::from_fn(|_| kid.clone())));
        }
        self.children.as_mut().expect("just expanded")
    }
}

/// Axis-aligned block of elements covered by one leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub min: Cell,
    pub size: i64,
}

impl Block {
    pub fn contains(&self, c: Cell) -> bool {
        (0..3).all(|a| c[a] >= self.min[a] && c[a] < self.min[a] + self.size)
    }
}

/// Multi-class octree whose smallest cells ("elements") form a `2^d` cube.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticOctree {
    root: Node,
    max_depth: u8,
    lattice: Lattice,
    prior: LogOdds,
    params: SensorParams,
    fusion: FusionMode,
}

fn child_index(c: Cell, shift: u32) -> usize {
    (((c[0] >> shift) & 1) | (((c[1] >> shift) & 1) << 1) | (((c[2] >> shift) & 1) << 2)) as usize
}

impl SemanticOctree {
    pub fn new(max_depth: u8, element_size: f64, origin: Point3, prior: LogOdds, params: SensorParams) -> Result<Self> {
        if max_depth == 0 || max_depth > 16 {
            return Err(Error::BadDims(format!("max_depth {max_depth} outside 1..=16")));
        }
        if !(element_size > 0.0) {
            return Err(Error::BadDims(format!("element size {element_size}")));
        }
        params.check_classes(prior.num_classes())?;
        let side = 1usize << max_depth;
        Ok(SemanticOctree {
            root: Node::leaf(TruncatedSemantics::from_full(&prior)),
            max_depth,
            lattice: Lattice {
                origin,
                cell_size: element_size,
                dims: [side; 3],
            },
            prior,
            params,
            fusion: FusionMode::Fold,
        })
    }

    pub fn with_fusion(mut self, mode: FusionMode) -> Self {
        self.fusion = mode;
        self
    }

    pub fn num_classes(&self) -> usize {
        self.prior.num_classes()
    }

    pub fn max_depth(&self) -> u8 {
        self.max_depth
    }

    pub fn element_size(&self) -> f64 {
        self.lattice.cell_size
    }

    pub fn side(&self) -> usize {
        self.lattice.dims[0]
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn prior(&self) -> &LogOdds {
        &self.prior
    }

    pub fn params(&self) -> &SensorParams {
        &self.params
    }

    pub fn root_value(&self) -> &TruncatedSemantics {
        &self.root.sem
    }

    fn leaf_at(&self, c: Cell) -> (&Node, Block) {
        let mut node = &self.root;
        let mut level = 0u32;
        let d = self.max_depth as u32;
        while let Some(kids) = &node.children {
            node = &kids[child_index(c, d - level - 1)];
            level += 1;
        }
        let shift = d - level;
        let min = [c[0] >> shift << shift, c[1] >> shift << shift, c[2] >> shift << shift];
        (node, Block { min, size: 1 << shift })
    }

    fn element_mut(&mut self, c: Cell) -> &mut Node {
        let d = self.max_depth as u32;
        let mut node = &mut self.root;
        for level in 0..d {
            node = &mut node.expand()[child_index(c, d - level - 1)];
        }
        node
    }

    /// Value of the leaf containing element `c`.
    pub fn query_cell(&self, c: Cell) -> Result<&TruncatedSemantics> {
        if !self.lattice.contains(c) {
            return Err(Error::IndexOutOfRange {
                index: self.lattice.linear(c.map(|v| v.max(0))),
                len: self.lattice.len(),
            });
        }
        Ok(&self.leaf_at(c).0.sem)
    }

    pub fn query_point(&self, p: Point3) -> Result<&TruncatedSemantics> {
        let c = self.lattice.cell_of(p);
        if !self.lattice.contains(c) {
            return Err(Error::OriginOutOfBounds);
        }
        Ok(&self.leaf_at(c).0.sem)
    }

    /// Full log-odds vector at element `c`.
    pub fn query_full(&self, c: Cell) -> Result<LogOdds> {
        Ok(self.query_cell(c)?.to_full(self.num_classes()))
    }

    pub fn leaf_block(&self, c: Cell) -> Block {
        self.leaf_at(c).1
    }

    /// Overwrites a single element.
    pub fn set_element(&mut self, c: Cell, sem: TruncatedSemantics) -> Result<()> {
        if !self.lattice.contains(c) {
            return Err(Error::OriginOutOfBounds);
        }
        self.element_mut(c).sem = sem;
        Ok(())
    }

    fn apply(&mut self, c: Cell, update: NodeUpdate) -> Result<()> {
        let new = update_node(&self.leaf_at(c).0.sem, update, &self.params, &self.prior)?;
        self.element_mut(c).sem = new;
        Ok(())
    }

    /// Integrates one beam without pruning.
    pub fn insert_beam(&mut self, beam: &BeamMeasurement) -> Result<()> {
        let ray = LatticeRay::new(&self.lattice, beam)?;
        if ray.hit.is_some() {
            self.params.hit_vector(beam.category)?;
        }
        let free_end = ray.hit.unwrap_or(ray.len);
        let mut i = 0;
        while i < free_end {
            let c = ray.line.cell_at(i);
            let (leaf, block) = self.leaf_at(c);
            let new = update_node(&leaf.sem, NodeUpdate::Free, &self.params, &self.prior)?;
            if new == leaf.sem {
                i = ray.line.last_inside(i, free_end - 1, |q| block.contains(q)) + 1;
                continue;
            }
            self.element_mut(c).sem = new;
            i += 1;
        }
        if let Some(h) = ray.hit {
            self.apply(ray.line.cell_at(h), NodeUpdate::Hit(beam.category))?;
        }
        Ok(())
    }

    /// Integrates every beam, then prunes once.
    pub fn insert_scan(&mut self, beams: &[BeamMeasurement]) -> Result<()> {
        for b in beams {
            self.insert_beam(b)?;
        }
        if !beams.is_empty() {
            self.prune();
        }
        Ok(())
    }

    /// Collapses identical sibling leaves bottom-up and refreshes inner values.
    pub fn prune(&mut self) {
        fn visit(node: &mut Node, mode: FusionMode, params: &SensorParams) {
            let Some(kids) = node.children.as_mut() else { return };
            for k in kids.iter_mut() {
                visit(k, mode, params);
            }
            let first = &kids[0];
            let uniform = kids.iter().all(|k| k.children.is_none() && k.sem == first.sem);
            if uniform {
                node.sem = first.sem.clone();
                node.children = None;
            } else {
                let sems: Vec<TruncatedSemantics> = kids.iter().map(|k| k.sem.clone()).collect();
                node.sem = fuse_all(&sems, mode, params);
            }
        }
        visit(&mut self.root, self.fusion, &self.params);
    }

    pub fn num_leaves(&self) -> usize {
        fn count(n: &Node) -> usize {
            n.children.as_ref().map_or(1, |k| k.iter().map(count).sum())
        }
        count(&self.root)
    }

    pub fn num_nodes(&self) -> usize {
        fn count(n: &Node) -> usize {
            1 + n.children.as_ref().map_or(0, |k| k.iter().map(count).sum())
        }
        count(&self.root)
    }

    /// Run-length encoding of the leaf values along a beam, up to `r_max` or
    /// the map boundary. The return of the beam is ignored.
    pub fn raycast_srle(&self, beam: &BeamMeasurement) -> Result<SrleRay> {
        let ray = LatticeRay::new(&self.lattice, beam)?;
        let k = self.num_classes();
        let mut runs: Vec<SrleRun> = Vec::new();
        let mut last: Option<&TruncatedSemantics> = None;
        let mut i = 0;
        while i < ray.len {
            let (leaf, block) = self.leaf_at(ray.line.cell_at(i));
            let j = ray.line.last_inside(i, ray.len - 1, |q| block.contains(q));
            let width = j - i + 1;
            match (last, runs.last_mut()) {
                (Some(prev), Some(run)) if *prev == leaf.sem => run.width += width,
                _ => runs.push(SrleRun::new(width, leaf.sem.to_full(k), self.prior.clone())),
            }
            last = Some(&leaf.sem);
            i = j + 1;
        }
        Ok(SrleRay::new(runs))
    }

    /// Element indices (in lattice order) along a beam.
    pub fn trace_elements(&self, beam: &BeamMeasurement) -> Result<Vec<usize>> {
        let ray = LatticeRay::new(&self.lattice, beam)?;
        Ok(ray.cells().map(|c| self.lattice.linear(c)).collect())
    }

    /// Samples a grid at each element center; elements outside the grid keep the prior.
    pub fn from_grid(grid: &GridMap, max_depth: u8, element_size: f64, params: SensorParams) -> Result<Self> {
        let mut tree = SemanticOctree::new(max_depth, element_size, grid.origin(), grid.prior().clone(), params)?;
        let prior_sem = tree.root.sem.clone();
        let side = tree.side() as i64;
        for z in 0..side {
            for y in 0..side {
                for x in 0..side {
                    let c = [x, y, z];
                    let gc = grid.lattice().cell_of(tree.lattice.center(c));
                    if let Some(idx) = grid.index(gc) {
                        let sem = TruncatedSemantics::from_values(grid.cell(idx));
                        if sem != prior_sem {
                            tree.set_element(c, sem)?;
                        }
                    }
                }
            }
        }
        tree.prune();
        Ok(tree)
    }

    /// Samples the tree at each cell center of a grid with the given geometry.
    pub fn to_grid(&self, dims: [usize; 3], resolution: f64) -> Result<GridMap> {
        let mut grid = GridMap::new(dims, resolution, self.lattice.origin, self.prior.clone())?;
        for idx in 0..grid.num_cells() {
            let p = grid.lattice().center(grid.cell_coords(idx));
            if let Ok(sem) = self.query_point(p) {
                grid.set_cell(idx, &sem.to_full(self.num_classes()))?;
            }
        }
        Ok(grid)
    }

    /// Grid with one cell per element.
    pub fn to_element_grid(&self) -> Result<GridMap> {
        let s = self.side();
        self.to_grid([s, s, s], self.element_size())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(OCT_MAGIC)?;
        w.write_all(&self.lattice.cell_size.to_le_bytes())?;
        w.write_all(&[self.max_depth])?;
        w.write_all(&(self.num_classes() as u16).to_le_bytes())?;
        write_f64_vec(&mut w, &self.lattice.origin)?;
        write_f64_vec(&mut w, &self.prior.values()[1..])?;
        fn node<W: Write>(w: &mut W, n: &Node) -> Result<()> {
            let mask: u8 = if n.children.is_some() { 0xFF } else { 0 };
            w.write_all(&[mask])?;
            w.write_all(&(n.sem.occupancy() as f32).to_le_bytes())?;
            w.write_all(&[n.sem.entries().len() as u8])?;
            for &(c, v) in n.sem.entries() {
                w.write_all(&c.to_le_bytes())?;
                w.write_all(&(v as f32).to_le_bytes())?;
            }
            w.write_all(&(n.sem.others() as f32).to_le_bytes())?;
            if let Some(kids) = &n.children {
                for k in kids.iter() {
                    node(w, k)?;
                }
            }
            Ok(())
        }
        node(&mut w, &self.root)
    }

    /// Reads a tree; the sensor parameters are not part of the file.
    pub fn read_binary<R: Read>(mut r: R, params: SensorParams) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != OCT_MAGIC {
            return Err(Error::Format("not an SSMIOCT1 file".into()));
        }
        let element_size = read_f64(&mut r)?;
        let max_depth = read_u8(&mut r)?;
        let k = read_u16(&mut r)? as usize;
        let o = read_f64_vec(&mut r, 3)?;
        let prior = LogOdds::from_nonfree(&read_f64_vec(&mut r, k)?)?;
        let mut tree = SemanticOctree::new(max_depth, element_size, [o[0], o[1], o[2]], prior, params)?;
        fn node<R: Read>(r: &mut R, depth: u8, k: usize) -> Result<Node> {
            let mask = read_u8(r)?;
            let _occupancy = read_f32(r)?;
            let count = read_u8(r)? as usize;
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                let c = read_u16(r)?;
                if c == 0 || c as usize > k {
                    return Err(Error::InvalidClass {
                        class: c as usize,
                        max: k,
                    });
                }
                entries.push((c, read_f32(r)? as f64));
            }
            let others = read_f32(r)? as f64;
            let sem = TruncatedSemantics::new(&entries, others)?;
            let children = match mask {
                0 => None,
                0xFF if depth > 0 => {
                    let mut kids = Vec::with_capacity(8);
                    for _ in 0..8 {
                        kids.push(node(r, depth - 1, k)?);
                    }
                    let arr: [Node; 8] = kids.try_into().expect("eight children");
                    Some(Box::new(arr))
                }
                m => return Err(Error::Format(format!("bad child mask {m:#x}"))),
            };
            Ok(Node { sem, children })
        }
        tree.root = node(&mut r, max_depth, k)?;
        Ok(tree)
    }
}
