//! Grid coverage map and sensing-hole identification.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{cells_along, FieldConfig, Position, Rect, SensorNode};

/// How a live node marks cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageModel {
    /// Every cell whose centre lies within the sensing radius.
    #[default]
    Disk,
    /// Only the cell containing the node.
    NodeCell,
}

pub type Cell = (usize, usize);

/// Boolean occupancy grid over a rectangular region; `true` = covered.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    origin: Position,
    cell_size: f64,
    width_cells: usize,
    height_cells: usize,
    field: Rect,
    cells: Vec<bool>,
}

/// All-false map over the whole field.
pub fn initialize_grid(config: &FieldConfig) -> Result<CoverageMap> {
    config.validate()?;
    CoverageMap::for_region(config.bounds(), config.bounds(), config.grid_cell_size)
}

impl CoverageMap {
    /// All-false map over `region`. Nodes may lie anywhere inside `field`.
    pub fn for_region(region: Rect, field: Rect, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::config("grid_cell_size must be positive"));
        }
        let w = cells_along(region.width(), cell_size);
        let h = cells_along(region.height(), cell_size);
        match (w, h) {
            (Some(w), Some(h)) => Ok(CoverageMap {
                origin: region.min,
                cell_size,
                width_cells: w,
                height_cells: h,
                field,
                cells: vec![false; w * h],
            }),
            _ => Err(Error::config(format!(
                "region {}x{} m is not divisible into {} m cells",
                region.width(),
                region.height(),
                cell_size
            ))),
        }
    }

    pub fn width_cells(&self) -> usize {
        self.width_cells
    }

    pub fn height_cells(&self) -> usize {
        self.height_cells
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn region(&self) -> Rect {
        Rect {
            min: self.origin,
            max: Position::new(
                self.origin.x + self.width_cells as f64 * self.cell_size,
                self.origin.y + self.height_cells as f64 * self.cell_size,
            ),
        }
    }

    pub fn field(&self) -> Rect {
        self.field
    }

    pub fn total_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.width_cells + i]
    }

    pub fn set(&mut self, i: usize, j: usize, covered: bool) {
        self.cells[j * self.width_cells + i] = covered;
    }

    pub fn clear(&mut self) {
        self.cells.fill(false);
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Position {
        Position::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_size,
            self.origin.y + (j as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing `p`, if inside the region. Points on the upper edge
    /// belong to the last cell.
    pub fn cell_of(&self, p: &Position) -> Option<Cell> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let i = (fx.floor() as usize).min(self.width_cells - 1);
        let j = (fy.floor() as usize).min(self.height_cells - 1);
        if fx > self.width_cells as f64 || fy > self.height_cells as f64 {
            return None;
        }
        Some((i, j))
    }

    /// Cells whose centres lie within `radius` of `p`.
    pub fn disk_cells(&self, p: &Position, radius: f64) -> impl Iterator<Item = Cell> + '_ {
        let c = self.cell_size;
        let r2 = radius * radius;
        let lo = |v: f64, o: f64| (((v - radius - o) / c - 0.5).floor().max(0.0)) as usize;
        let hi = |v: f64, o: f64, n: usize| {
            let top = ((v + radius - o) / c - 0.5).ceil();
            if top < 0.0 {
                None
            } else {
                Some((top as usize).min(n - 1))
            }
        };
        let (i0, j0) = (lo(p.x, self.origin.x), lo(p.y, self.origin.y));
        let i1 = hi(p.x, self.origin.x, self.width_cells);
        let j1 = hi(p.y, self.origin.y, self.height_cells);
        let p = *p;
        let (jr, ir) = match (i1, j1) {
            (Some(i1), Some(j1)) if i0 <= i1 && j0 <= j1 => (j0..=j1, i0..=i1),
            _ => (1..=0, 1..=0),
        };
        jr.flat_map(move |j| ir.clone().map(move |i| (i, j)))
            .filter(move |&(i, j)| self.cell_center(i, j).distance_sq(&p) <= r2)
    }

    /// Marks cells covered by live nodes. Monotone: never clears a cell.
    pub fn mark_covered(&mut self, nodes: &[SensorNode], radius: f64, model: CoverageModel) -> Result<()> {
        if let Some(n) = nodes.iter().find(|n| !self.field.contains(&n.position)) {
            return Err(Error::domain(format!(
                "node {} at {} is outside the field",
                n.id, n.position
            )));
        }
        for n in nodes.iter().filter(|n| n.alive) {
            match model {
                CoverageModel::Disk => {
                    let cells: Vec<Cell> = self.disk_cells(&n.position, radius).collect();
                    for (i, j) in cells {
                        self.set(i, j, true);
                    }
                }
                CoverageModel::NodeCell => {
                    if let Some((i, j)) = self.cell_of(&n.position) {
                        self.set(i, j, true);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn covered_cells(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn hole_cells(&self) -> usize {
        self.total_cells() - self.covered_cells()
    }

    /// `'#'` covered, `'.'` hole; the top line is the highest row.
    pub fn to_text_grid(&self) -> String {
        let mut s = String::with_capacity((self.width_cells + 1) * self.height_cells);
        for j in (0..self.height_cells).rev() {
            for i in 0..self.width_cells {
                s.push(if self.get(i, j) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,covered\n");
        for j in 0..self.height_cells {
            for i in 0..self.width_cells {
                let _ = writeln!(s, "{},{},{}", i, j, u8::from(self.get(i, j)));
            }
        }
        s
    }
}

pub fn coverage_fraction(map: &CoverageMap) -> f64 {
    if map.total_cells() == 0 {
        return 0.0;
    }
    map.covered_cells() as f64 / map.total_cells() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoleComponent {
    pub cells: Vec<Cell>,
    /// Mean of the member cell centres, in field coordinates.
    pub centroid: Position,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HoleSet {
    /// Every uncovered cell in row-major order.
    pub cells: Vec<Cell>,
    /// 4-connected components, ordered by their first cell.
    pub components: Vec<HoleComponent>,
}

impl HoleSet {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }
}

pub fn find_coverage_holes(map: &CoverageMap) -> HoleSet {
    let (w, h) = (map.width_cells, map.height_cells);
    let mut label = vec![usize::MAX; w * h];
    let mut set = HoleSet::default();
    let mut queue = VecDeque::new();

    for j in 0..h {
        for i in 0..w {
            if map.get(i, j) {
                continue;
            }
            set.cells.push((i, j));
            if label[j * w + i] != usize::MAX {
                continue;
            }
            let comp = set.components.len();
            label[j * w + i] = comp;
            queue.push_back((i, j));
            let mut cells = Vec::new();
            while let Some((ci, cj)) = queue.pop_front() {
                cells.push((ci, cj));
                let mut visit = |ni: usize, nj: usize| {
                    let k = nj * w + ni;
                    if !map.get(ni, nj) && label[k] == usize::MAX {
                        label[k] = comp;
                        queue.push_back((ni, nj));
                    }
                };
                if ci > 0 {
                    visit(ci - 1, cj);
                }
                if ci + 1 < w {
                    visit(ci + 1, cj);
                }
                if cj > 0 {
                    visit(ci, cj - 1);
                }
                if cj + 1 < h {
                    visit(ci, cj + 1);
                }
            }
            cells.sort_by_key(|&(i, j)| (j, i));
            let n = cells.len() as f64;
            let (sx, sy) = cells.iter().fold((0.0, 0.0), |(sx, sy), &(i, j)| {
                let c = map.cell_center(i, j);
                (sx + c.x, sy + c.y)
            });
            set.components.push(HoleComponent {
                cells,
                centroid: Position::new(sx / n, sy / n),
            });
        }
    }
    set
}

/// Per-cell coverer counts, for evaluating candidate moves incrementally.
#[derive(Debug, Clone)]
pub struct CoverageCounts {
    map: CoverageMap,
    counts: Vec<u32>,
    radius: f64,
    holes: usize,
}

impl CoverageCounts {
    pub fn new(template: &CoverageMap, radius: f64) -> Self {
        let mut map = template.clone();
        map.clear();
        let n = map.total_cells();
        CoverageCounts {
            map,
            counts: vec![0; n],
            radius,
            holes: n,
        }
    }

    pub fn from_positions<'a>(
        template: &CoverageMap,
        radius: f64,
        positions: impl IntoIterator<Item = &'a Position>,
    ) -> Self {
        let mut c = CoverageCounts::new(template, radius);
        for p in positions {
            c.add(p);
        }
        c
    }

    pub fn holes(&self) -> usize {
        self.holes
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[j * self.map.width_cells + i]
    }

    pub fn add(&mut self, p: &Position) {
        let w = self.map.width_cells;
        let cells: Vec<Cell> = self.map.disk_cells(p, self.radius).collect();
        for (i, j) in cells {
            let k = j * w + i;
            if self.counts[k] == 0 {
                self.holes -= 1;
            }
            self.counts[k] += 1;
        }
    }

    pub fn remove(&mut self, p: &Position) {
        let w = self.map.width_cells;
        let cells: Vec<Cell> = self.map.disk_cells(p, self.radius).collect();
        for (i, j) in cells {
            let k = j * w + i;
            debug_assert!(self.counts[k] > 0);
            self.counts[k] -= 1;
            if self.counts[k] == 0 {
                self.holes += 1;
            }
        }
    }

    /// Moves a coverer from `from` to `to` and returns the change in hole
    /// count.
    pub fn shift(&mut self, from: &Position, to: &Position) -> isize {
        let before = self.holes as isize;
        self.remove(from);
        self.add(to);
        self.holes as isize - before
    }

    pub fn to_map(&self) -> CoverageMap {
        let mut m = self.map.clone();
        for (k, &c) in self.counts.iter().enumerate() {
            m.cells[k] = c > 0;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ClusterId, HomePrefix, NodeId, ZoneId};
    use proptest::prelude::*;

    fn at(id: u32, x: f64, y: f64) -> SensorNode {
        SensorNode::new(
            NodeId(id),
            Position::new(x, y),
            1.0,
            HomePrefix {
                zone: ZoneId(0),
                cluster: ClusterId(0),
            },
        )
    }

    fn cfg(w: f64, h: f64) -> FieldConfig {
        FieldConfig {
            field_width: w,
            field_height: h,
            ..FieldConfig::default()
        }
    }

    #[test]
    fn initialize_grid_dimensions() {
        let m = initialize_grid(&FieldConfig::default()).unwrap();
        assert_eq!((m.width_cells(), m.height_cells()), (110, 110));
        assert_eq!(m.covered_cells(), 0);
        let m = initialize_grid(&cfg(4.0, 4.0)).unwrap();
        assert_eq!((m.width_cells(), m.height_cells()), (2, 2));
        assert!(initialize_grid(&cfg(5.0, 5.0)).is_err());
    }

    #[test]
    fn no_live_nodes_leaves_map_empty() {
        let mut m = initialize_grid(&cfg(6.0, 6.0)).unwrap();
        let mut dead = at(0, 3.0, 3.0);
        dead.alive = false;
        m.mark_covered(&[dead], 10.0, CoverageModel::Disk).unwrap();
        assert_eq!(m.covered_cells(), 0);
    }

    #[test]
    fn large_radius_covers_everything() {
        let mut m = initialize_grid(&cfg(6.0, 6.0)).unwrap();
        m.mark_covered(&[at(0, 3.0, 3.0)], 4.25, CoverageModel::Disk).unwrap();
        assert_eq!(coverage_fraction(&m), 1.0);
    }

    #[test]
    fn unit_radius_at_centre_covers_centre_cell_only() {
        // Cell centres are at 1, 3, 5; only (3,3) is within 1 m of (3,3).
        let mut m = initialize_grid(&cfg(6.0, 6.0)).unwrap();
        m.mark_covered(&[at(0, 3.0, 3.0)], 1.0, CoverageModel::Disk).unwrap();
        assert!(m.get(1, 1));
        assert_eq!(m.covered_cells(), 1);

        let holes = find_coverage_holes(&m);
        assert_eq!(holes.len(), 8);
        assert_eq!(holes.components.len(), 1);
        let c = holes.components[0].centroid;
        assert!((c.x - 3.0).abs() < 1e-12 && (c.y - 3.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_field_node_is_rejected() {
        let mut m = initialize_grid(&cfg(6.0, 6.0)).unwrap();
        assert!(m.mark_covered(&[at(0, 7.0, 1.0)], 1.0, CoverageModel::Disk).is_err());
    }

    #[test]
    fn node_cell_model_marks_one_cell() {
        let mut m = initialize_grid(&cfg(6.0, 6.0)).unwrap();
        m.mark_covered(&[at(0, 0.5, 5.5)], 10.0, CoverageModel::NodeCell).unwrap();
        assert_eq!(m.covered_cells(), 1);
        assert!(m.get(0, 2));
    }

    #[test]
    fn hole_examples() {
        let mut full = initialize_grid(&cfg(4.0, 4.0)).unwrap();
        for j in 0..2 {
            for i in 0..2 {
                full.set(i, j, true);
            }
        }
        assert!(find_coverage_holes(&full).is_empty());
        assert_eq!(coverage_fraction(&full), 1.0);

        let empty = initialize_grid(&cfg(4.0, 4.0)).unwrap();
        let holes = find_coverage_holes(&empty);
        assert_eq!(holes.len(), 4);
        assert_eq!(holes.components.len(), 1);
        assert_eq!(holes.components[0].centroid, Position::new(2.0, 2.0));
        assert_eq!(coverage_fraction(&empty), 0.0);

        let mut three = empty.clone();
        three.set(0, 0, true);
        three.set(1, 0, true);
        three.set(0, 1, true);
        assert_eq!(coverage_fraction(&three), 0.75);
    }

    #[test]
    fn diagonal_holes_are_separate_components() {
        let mut m = initialize_grid(&cfg(4.0, 4.0)).unwrap();
        m.set(1, 0, true);
        m.set(0, 1, true);
        let holes = find_coverage_holes(&m);
        assert_eq!(holes.components.len(), 2);
        assert_eq!(holes.components[0].cells, vec![(0, 0)]);
        assert_eq!(holes.components[1].cells, vec![(1, 1)]);
    }

    #[test]
    fn text_and_csv_render() {
        let mut m = initialize_grid(&cfg(4.0, 4.0)).unwrap();
        m.set(0, 1, true);
        assert_eq!(m.to_text_grid(), "#.\n..\n");
        assert_eq!(m.to_csv(), "i,j,covered\n0,0,0\n1,0,0\n0,1,1\n1,1,0\n");
    }

    #[test]
    fn counts_agree_with_boolean_map() {
        let m = initialize_grid(&cfg(20.0, 20.0)).unwrap();
        let nodes = [at(0, 3.0, 4.0), at(1, 10.0, 10.0), at(2, 17.5, 2.0)];
        let mut cc = CoverageCounts::from_positions(&m, 5.0, nodes.iter().map(|n| &n.position));
        let mut direct = m.clone();
        direct.mark_covered(&nodes, 5.0, CoverageModel::Disk).unwrap();
        assert_eq!(cc.to_map(), direct);
        assert_eq!(cc.holes(), direct.hole_cells());

        let delta = cc.shift(&nodes[1].position, &Position::new(19.0, 19.0));
        let mut moved = nodes.clone();
        moved[1].position = Position::new(19.0, 19.0);
        let mut direct2 = m.clone();
        direct2.mark_covered(&moved, 5.0, CoverageModel::Disk).unwrap();
        assert_eq!(cc.to_map(), direct2);
        assert_eq!(delta, direct2.hole_cells() as isize - direct.hole_cells() as isize);
    }

    #[test]
    fn region_map_uses_region_origin() {
        let field = Rect::with_size(20.0, 20.0);
        let region = Rect::new(10.0, 0.0, 20.0, 4.0);
        let mut m = CoverageMap::for_region(region, field, 2.0).unwrap();
        assert_eq!((m.width_cells(), m.height_cells()), (5, 2));
        assert_eq!(m.cell_center(0, 0), Position::new(11.0, 1.0));
        // A node outside the region still covers cells inside it.
        m.mark_covered(&[at(0, 9.0, 1.0)], 2.0, CoverageModel::Disk).unwrap();
        assert!(m.get(0, 0));
        assert_eq!(m.covered_cells(), 1);
    }

    fn field_strategy() -> impl Strategy<Value = (usize, usize, f64, f64, Vec<(f64, f64, bool)>)> {
        (1usize..=20, 1usize..=20, prop::sample::select(vec![0.5, 1.0, 2.0]), 0.1f64..6.0).prop_flat_map(|(w, h, cell, r)| {
            let (fw, fh) = (w as f64 * cell, h as f64 * cell);
            let nodes = prop::collection::vec((0.0..=fw, 0.0..=fh, prop::bool::weighted(0.8)), 0..=30);
            (Just(w), Just(h), Just(cell), Just(r), nodes)
        })
    }

    fn sensors(raw: &[(f64, f64, bool)]) -> Vec<SensorNode> {
        raw.iter()
            .enumerate()
            .map(|(k, &(x, y, alive))| {
                let mut n = at(k as u32, x, y);
                n.alive = alive;
                n
            })
            .collect()
    }

    proptest! {
        #[test]
        fn disk_marking_matches_brute_force((w, h, cell, r, raw) in field_strategy()) {
            let field = Rect::with_size(w as f64 * cell, h as f64 * cell);
            let nodes = sensors(&raw);
            let mut map = CoverageMap::for_region(field, field, cell).unwrap();
            map.mark_covered(&nodes, r, CoverageModel::Disk).unwrap();
            for j in 0..h {
                for i in 0..w {
                    let (cx, cy) = ((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
                    let want = nodes.iter().any(|n| n.alive && (n.position.x - cx).hypot(n.position.y - cy) <= r);
                    prop_assert_eq!(map.get(i, j), want, "cell ({}, {})", i, j);
                }
            }
        }

        #[test]
        fn marking_is_monotone_and_idempotent((w, h, cell, r, raw) in field_strategy()) {
            let field = Rect::with_size(w as f64 * cell, h as f64 * cell);
            let nodes = sensors(&raw);
            let mut map = CoverageMap::for_region(field, field, cell).unwrap();
            for k in 0..nodes.len() {
                let before = map.clone();
                map.mark_covered(&nodes[k..=k], r, CoverageModel::Disk).unwrap();
                for j in 0..h {
                    for i in 0..w {
                        prop_assert!(!before.get(i, j) || map.get(i, j));
                    }
                }
            }
            let once = map.clone();
            map.mark_covered(&nodes, r, CoverageModel::Disk).unwrap();
            prop_assert_eq!(map, once);
        }

        #[test]
        fn holes_and_covered_cells_tile_the_grid((w, h, cell, r, raw) in field_strategy()) {
            let field = Rect::with_size(w as f64 * cell, h as f64 * cell);
            let mut map = CoverageMap::for_region(field, field, cell).unwrap();
            map.mark_covered(&sensors(&raw), r, CoverageModel::Disk).unwrap();
            let holes = find_coverage_holes(&map);
            let mut seen = vec![0u8; w * h];
            for c in &holes.components {
                for &(i, j) in &c.cells {
                    prop_assert!(!map.get(i, j));
                    seen[j * w + i] += 1;
                }
            }
            for j in 0..h {
                for i in 0..w {
                    let want = u8::from(!map.get(i, j));
                    prop_assert_eq!(seen[j * w + i], want);
                }
            }
            prop_assert_eq!(holes.cells.len() + map.covered_cells(), w * h);
        }
    }
}
