//! Map files on disk: binary grids, binary octrees and JSON grids.

use std::fs;
use std::path::Path;

use ssmi_core::sim::Config;
use ssmi_core::{Error, GridMap, Result, SemanticOctree};

pub enum LoadedMap {
    Grid(GridMap),
    Octree(SemanticOctree),
}

impl LoadedMap {
    pub fn kind(&self) -> &'static str {
        match self {
            LoadedMap::Grid(_) => "grid",
            LoadedMap::Octree(_) => "octree",
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            LoadedMap::Grid(g) => g.num_classes(),
            LoadedMap::Octree(t) => t.num_classes(),
        }
    }

    /// Dense view; octrees are sampled once per element.
    pub fn to_grid(&self) -> Result<GridMap> {
        match self {
            LoadedMap::Grid(g) => Ok(g.clone()),
            LoadedMap::Octree(t) => t.to_element_grid(),
        }
    }
}

const OCT_CLASSES_AT: usize = 8 + 8 + 1;

/// Detects the format from the leading bytes. Octree files do not carry the
/// sensor model, so it is taken from `cfg`.
pub fn load(path: &Path, cfg: &Config) -> Result<LoadedMap> {
    let bytes = fs::read(path).map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    if bytes.starts_with(b"SSMIGRID") {
        return Ok(LoadedMap::Grid(GridMap::read_binary(bytes.as_slice())?));
    }
    if bytes.starts_with(b"SSMIOCT1") {
        let k = bytes
            .get(OCT_CLASSES_AT..OCT_CLASSES_AT + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
            .ok_or_else(|| Error::Format("truncated octree header".into()))?;
        let params = cfg.model.params(k)?;
        return Ok(LoadedMap::Octree(SemanticOctree::read_binary(
            bytes.as_slice(),
            params,
        )?));
    }
    if bytes.first().copied() == Some(b'{') {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?;
        return Ok(LoadedMap::Grid(GridMap::from_json(text)?));
    }
    Err(Error::Format(format!("{}: unrecognized map format", path.display())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Grid,
    Octree,
    Json,
}

/// Converts `map` and writes it to `out`. `resolution` sets the target cell
/// or element size; `depth` the octree depth.
pub fn convert(
    map: &LoadedMap,
    out: &Path,
    to: Target,
    resolution: Option<f64>,
    depth: Option<u8>,
    cfg: &Config,
) -> Result<()> {
    let mut buf = Vec::new();
    match (map, to) {
        (LoadedMap::Octree(t), Target::Octree) if resolution.is_none() && depth.is_none() => {
            t.write_binary(&mut buf)?
        }
        (_, Target::Octree) => {
            let grid = map.to_grid()?;
            let size = resolution.unwrap_or(grid.resolution());
            let extent = grid
                .dims()
                .iter()
                .map(|&d| d as f64 * grid.resolution())
                .fold(0.0, f64::max);
            let needed = ((extent / size).ceil() as usize)
                .max(2)
                .next_power_of_two()
                .trailing_zeros() as u8;
            let params = cfg.model.params(grid.num_classes())?;
            SemanticOctree::from_grid(&grid, depth.unwrap_or(needed), size, params)?.write_binary(&mut buf)?;
        }
        (LoadedMap::Octree(t), Target::Grid | Target::Json) if resolution.is_some() => {
            let size = resolution.unwrap_or(1.0);
            let n = ((t.side() as f64 * t.element_size() / size).round() as usize).max(1);
            let grid = t.to_grid([n, n, n], size)?;
            write_grid(&grid, to, &mut buf)?;
        }
        (_, Target::Grid | Target::Json) => {
            if resolution.is_some() {
                return Err(Error::Config(
                    "--resolution only applies when converting an octree".into(),
                ));
            }
            write_grid(&map.to_grid()?, to, &mut buf)?;
        }
    }
    fs::write(out, buf)?;
    Ok(())
}

fn write_grid(grid: &GridMap, to: Target, buf: &mut Vec<u8>) -> Result<()> {
    match to {
        Target::Json => buf.extend_from_slice(grid.to_json()?.as_bytes()),
        _ => grid.write_binary(buf)?,
    }
    Ok(())
}

/// Human-readable summary, one `key: value` per line.
pub fn describe(map: &LoadedMap) -> Result<String> {
    let mut lines = vec![
        format!("format: {}", map.kind()),
        format!("classes: {}", map.num_classes()),
    ];
    if let LoadedMap::Octree(t) = map {
        lines.push(format!("depth: {}", t.max_depth()));
        lines.push(format!("element_size: {}", t.element_size()));
        lines.push(format!("leaves: {}", t.num_leaves()));
        lines.push(format!("nodes: {}", t.num_nodes()));
    }
    let grid = map.to_grid()?;
    let [nx, ny, nz] = grid.dims();
    let known = (0..grid.num_cells()).filter(|&i| !grid.is_prior(i)).count();
    lines.push(format!("dims: {nx}x{ny}x{nz}"));
    lines.push(format!("resolution: {}", grid.resolution()));
    lines.push(format!("known_cells: {known}/{}", grid.num_cells()));
    lines.push(format!("entropy_nats: {:.6}", grid.map_entropy(None)));
    Ok(lines.join("\n"))
}
