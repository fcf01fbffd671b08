//! Mesh geometry, port directions and turn-model legality.
//!
//! Nodes are numbered row-major with node 0 in the top-left corner: `x` grows
//! east and `y` grows south, so `North` of `(x, y)` is `(x, y - 1)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("mesh must be at least 2x2, got {width}x{height}")]
    MeshTooSmall { width: usize, height: usize },
    #[error("node id {id} is out of range for a {width}x{height} mesh")]
    NodeOutOfRange {
        id: NodeId,
        width: usize,
        height: usize,
    },
    #[error("coordinate ({x}, {y}) is outside a {width}x{height} mesh")]
    CoordOutOfRange {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("route code {0} does not decode to a valid (input, output) pair")]
    BadRouteCode(u8),
    #[error("unknown direction `{0}`")]
    BadDirection(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeshConfig {
    pub width: usize,
    pub height: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            width: 8,
            height: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub const fn new(x: usize, y: usize) -> Self {
        Coord { x, y }
    }

    pub fn manhattan(&self, other: &Coord) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl MeshConfig {
    pub fn new(width: usize, height: usize) -> Result<Self, TopologyError> {
        let mesh = MeshConfig { width, height };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.width < 2 || self.height < 2 {
            return Err(TopologyError::MeshTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.width * self.height
    }

    pub fn id_to_coord(&self, id: NodeId) -> Result<Coord, TopologyError> {
        if id >= self.nodes() {
            return Err(TopologyError::NodeOutOfRange {
                id,
                width: self.width,
                height: self.height,
            });
        }
        Ok(Coord::new(id % self.width, id / self.width))
    }

    pub fn coord_to_id(&self, c: Coord) -> Result<NodeId, TopologyError> {
        if !self.contains(c) {
            return Err(TopologyError::CoordOutOfRange {
                x: c.x,
                y: c.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(c.y * self.width + c.x)
    }

    /// Unchecked variant of [`MeshConfig::id_to_coord`] for hot paths.
    #[inline]
    pub fn coord(&self, id: NodeId) -> Coord {
        debug_assert!(id < self.nodes());
        Coord::new(id % self.width, id / self.width)
    }

    /// Unchecked variant of [`MeshConfig::coord_to_id`] for hot paths.
    #[inline]
    pub fn id(&self, c: Coord) -> NodeId {
        debug_assert!(self.contains(c));
        c.y * self.width + c.x
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.width && c.y < self.height
    }

    /// Neighbor reached by leaving `id` through `dir`, if the mesh has one.
    pub fn neighbor(&self, id: NodeId, dir: Direction) -> Option<NodeId> {
        let c = self.coord(id);
        let n = match dir {
            Direction::Local => return None,
            Direction::North => Coord::new(c.x, c.y.checked_sub(1)?),
            Direction::South => Coord::new(c.x, c.y + 1),
            Direction::West => Coord::new(c.x.checked_sub(1)?, c.y),
            Direction::East => Coord::new(c.x + 1, c.y),
        };
        self.contains(n).then(|| self.id(n))
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> usize {
        self.coord(a).manhattan(&self.coord(b))
    }

    /// Direction of the hop from `from` to the adjacent node `to`.
    pub fn direction_to(&self, from: NodeId, to: NodeId) -> Option<Direction> {
        Direction::MESH
            .into_iter()
            .find(|&d| self.neighbor(from, d) == Some(to))
    }
}

/// Router port / travel direction. The discriminants are the canonical
/// ordinals used by the route encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Local = 0,
    North = 1,
    East = 2,
    South = 3,
    West = 4,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::Local,
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];
    pub const MESH: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    #[inline]
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ord: usize) -> Option<Direction> {
        Direction::ALL.get(ord).copied()
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Local => Direction::Local,
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::East | Direction::West)
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Direction::North | Direction::South)
    }

    pub fn short(self) -> char {
        match self {
            Direction::Local => 'L',
            Direction::North => 'N',
            Direction::East => 'E',
            Direction::South => 'S',
            Direction::West => 'W',
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short())
    }
}

impl FromStr for Direction {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "local" => Ok(Direction::Local),
            "n" | "north" => Ok(Direction::North),
            "e" | "east" => Ok(Direction::East),
            "s" | "south" => Ok(Direction::South),
            "w" | "west" => Ok(Direction::West),
            _ => Err(TopologyError::BadDirection(s.to_string())),
        }
    }
}

/// Output directions that strictly reduce the distance from `cur` to `dst`,
/// horizontal candidate first. Returns `[Local]` when already there.
pub fn minimal_candidates(cur: Coord, dst: Coord) -> SmallVec<[Direction; 2]> {
    let mut out = SmallVec::new();
    if cur == dst {
        out.push(Direction::Local);
        return out;
    }
    if dst.x > cur.x {
        out.push(Direction::East);
    } else if dst.x < cur.x {
        out.push(Direction::West);
    }
    if dst.y > cur.y {
        out.push(Direction::South);
    } else if dst.y < cur.y {
        out.push(Direction::North);
    }
    out
}

/// Virtual-channel class. Class `A` forbids turning east/west after
/// travelling south; class `B` forbids turning east/west after travelling
/// north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VcClass {
    A,
    B,
}

impl VcClass {
    pub fn index(self) -> usize {
        match self {
            VcClass::A => 0,
            VcClass::B => 1,
        }
    }

    /// VC indices belonging to this class when a port has `vcs` VCs: the
    /// lower half goes to `A`, the upper half to `B`.
    pub fn vc_range(self, vcs: usize) -> std::ops::Range<usize> {
        let half = vcs / 2;
        match self {
            VcClass::A => 0..half,
            VcClass::B => half..vcs,
        }
    }
}

impl fmt::Display for VcClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VcClass::A => f.write_str("A"),
            VcClass::B => f.write_str("B"),
        }
    }
}

/// Class assignment: packets that must travel north use `A`, packets that
/// must travel south use `B`, and same-row packets alternate by id parity.
pub fn vc_class_for(src: Coord, dst: Coord, pkt_id: u64) -> VcClass {
    if dst.y < src.y {
        VcClass::A
    } else if dst.y > src.y {
        VcClass::B
    } else if pkt_id.is_multiple_of(2) {
        VcClass::A
    } else {
        VcClass::B
    }
}

/// A set of permitted turns, expressed over travel directions.
pub trait TurnRule {
    fn allows(&self, prev_travel: Direction, next_travel: Direction) -> bool;
}

impl TurnRule for VcClass {
    fn allows(&self, prev_travel: Direction, next_travel: Direction) -> bool {
        allowed_turn(*self, prev_travel, next_travel)
    }
}

/// Control rule that permits every non-reversing turn.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllTurns;

impl TurnRule for AllTurns {
    fn allows(&self, prev_travel: Direction, next_travel: Direction) -> bool {
        prev_travel == Direction::Local
            || next_travel == Direction::Local
            || next_travel != prev_travel.opposite()
    }
}

/// Whether a packet of `class` that last travelled `prev_travel` may leave
/// in `next_travel`. `Local` as the previous direction means the packet was
/// just injected.
pub fn allowed_turn(class: VcClass, prev_travel: Direction, next_travel: Direction) -> bool {
    use Direction::*;
    if prev_travel == Local || next_travel == Local {
        return true;
    }
    if next_travel == prev_travel.opposite() {
        return false;
    }
    match class {
        VcClass::A => !(prev_travel == South && next_travel.is_horizontal()),
        VcClass::B => !(prev_travel == North && next_travel.is_horizontal()),
    }
}

/// Builds the channel dependency graph of `rule` over the directed links of
/// `mesh` and reports whether it is free of cycles.
///
/// Channels are the directed links `(node, dir)`; there is an edge from
/// `(u, d1)` to `(v, d2)` when `v` is the far end of `(u, d1)` and the rule
/// lets a packet travelling `d1` continue in `d2`. Cycle detection is Kahn's
/// topological peel.
pub fn cdg_acyclic<R: TurnRule + ?Sized>(rule: &R, mesh: &MeshConfig) -> bool {
    let n = mesh.nodes();
    let chan = |node: NodeId, d: Direction| node * 4 + (d.ordinal() - 1);
    let mut exists = vec![false; n * 4];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n * 4];
    let mut indeg = vec![0usize; n * 4];

    for u in 0..n {
        for d1 in Direction::MESH {
            let Some(v) = mesh.neighbor(u, d1) else {
                continue;
            };
            let c1 = chan(u, d1);
            exists[c1] = true;
            for d2 in Direction::MESH {
                if mesh.neighbor(v, d2).is_some() && rule.allows(d1, d2) {
                    let c2 = chan(v, d2);
                    succ[c1].push(c2);
                    indeg[c2] += 1;
                }
            }
        }
    }

    let mut ready: Vec<usize> = (0..n * 4).filter(|&c| exists[c] && indeg[c] == 0).collect();
    let mut peeled = 0;
    while let Some(c) = ready.pop() {
        peeled += 1;
        for &s in &succ[c] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
    }
    peeled == exists.iter().filter(|&&e| e).count()
}

/// Route through a router: the arrival port (`Local` for injected packets)
/// and the selected output port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RouteKey {
    pub in_dir: Direction,
    pub out_dir: Direction,
}

impl RouteKey {
    pub const fn new(in_dir: Direction, out_dir: Direction) -> Self {
        RouteKey { in_dir, out_dir }
    }

    /// `in_ordinal * 4 + out_index`, where `out_index` is the position of the
    /// output among the four directions other than the input. Codes span
    /// `0..20`. Returns `None` for the invalid `in == out` pairs.
    pub fn encode(&self) -> Option<u8> {
        if self.in_dir == self.out_dir {
            return None;
        }
        let out = self.out_dir.ordinal();
        let out_index = if out > self.in_dir.ordinal() {
            out - 1
        } else {
            out
        };
        Some((self.in_dir.ordinal() * 4 + out_index) as u8)
    }

    pub fn decode(code: u8) -> Result<RouteKey, TopologyError> {
        if code >= 20 {
            return Err(TopologyError::BadRouteCode(code));
        }
        let in_ord = code as usize / 4;
        let out_index = code as usize % 4;
        let out_ord = if out_index >= in_ord {
            out_index + 1
        } else {
            out_index
        };
        Ok(RouteKey::new(
            Direction::from_ordinal(in_ord).expect("ordinal < 5"),
            Direction::from_ordinal(out_ord).expect("ordinal < 5"),
        ))
    }
}

impl fmt::Display for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.in_dir, self.out_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mesh8() -> MeshConfig {
        MeshConfig::new(8, 8).unwrap()
    }

    #[test]
    fn id_coord_examples() {
        let m = mesh8();
        assert_eq!(m.id_to_coord(0).unwrap(), Coord::new(0, 0));
        assert_eq!(m.id_to_coord(8).unwrap(), Coord::new(0, 1));
        assert_eq!(m.id_to_coord(63).unwrap(), Coord::new(7, 7));
        assert!(matches!(
            m.id_to_coord(64),
            Err(TopologyError::NodeOutOfRange { id: 64, .. })
        ));
        assert!(m.coord_to_id(Coord::new(8, 0)).is_err());
    }

    #[test]
    fn rejects_degenerate_mesh() {
        assert!(MeshConfig::new(1, 8).is_err());
        assert!(MeshConfig::new(2, 2).is_ok());
    }

    #[test]
    fn node_eight_neighbors_node_zero() {
        let m = mesh8();
        assert_eq!(m.neighbor(8, Direction::North), Some(0));
        assert_eq!(m.neighbor(8, Direction::East), Some(9));
        assert_eq!(m.neighbor(8, Direction::West), None);
        assert_eq!(m.direction_to(8, 16), Some(Direction::South));
    }

    #[test]
    fn candidates_examples() {
        use Direction::*;
        assert_eq!(
            minimal_candidates(Coord::new(0, 1), Coord::new(0, 0)).as_slice(),
            &[North]
        );
        assert_eq!(
            minimal_candidates(Coord::new(1, 1), Coord::new(3, 4)).as_slice(),
            &[East, South]
        );
        assert_eq!(
            minimal_candidates(Coord::new(5, 5), Coord::new(5, 5)).as_slice(),
            &[Local]
        );
    }

    #[test]
    fn candidates_reduce_distance_everywhere() {
        let m = mesh8();
        for a in 0..m.nodes() {
            for b in 0..m.nodes() {
                let (ca, cb) = (m.coord(a), m.coord(b));
                let cands = minimal_candidates(ca, cb);
                if a == b {
                    assert_eq!(cands.as_slice(), &[Direction::Local]);
                    continue;
                }
                assert!((1..=2).contains(&cands.len()));
                for d in cands {
                    let n = m.neighbor(a, d).expect("candidate stays inside the mesh");
                    assert_eq!(m.distance(n, b) + 1, m.distance(a, b));
                }
            }
        }
    }

    #[test]
    fn turn_examples() {
        use Direction::*;
        assert!(!allowed_turn(VcClass::A, South, East));
        assert!(allowed_turn(VcClass::A, North, East));
        assert!(!allowed_turn(VcClass::B, North, West));
    }

    #[test]
    fn turn_restrictions_are_exact() {
        use Direction::*;
        for class in [VcClass::A, VcClass::B] {
            for prev in Direction::MESH {
                for next in Direction::MESH {
                    let expected = if next == prev.opposite() {
                        false
                    } else {
                        match class {
                            VcClass::A => !(prev == South && matches!(next, East | West)),
                            VcClass::B => !(prev == North && matches!(next, East | West)),
                        }
                    };
                    assert_eq!(
                        allowed_turn(class, prev, next),
                        expected,
                        "{class} {prev}->{next}"
                    );
                }
                assert!(allowed_turn(class, Local, prev));
            }
        }
    }

    #[test]
    fn class_assignment_examples() {
        assert_eq!(
            vc_class_for(Coord::new(2, 3), Coord::new(2, 0), 0),
            VcClass::A
        );
        assert_eq!(
            vc_class_for(Coord::new(2, 0), Coord::new(2, 3), 0),
            VcClass::B
        );
        assert_eq!(
            vc_class_for(Coord::new(0, 4), Coord::new(7, 4), 3),
            VcClass::B
        );
        assert_eq!(
            vc_class_for(Coord::new(0, 4), Coord::new(7, 4), 4),
            VcClass::A
        );
    }

    #[test]
    fn classes_split_vcs_evenly() {
        assert_eq!(VcClass::A.vc_range(4), 0..2);
        assert_eq!(VcClass::B.vc_range(4), 2..4);
    }

    /// Enumerates every minimal path from `src` to `dst` and checks each
    /// turn against the class the packet would be assigned.
    fn all_minimal_paths_legal(m: &MeshConfig, src: NodeId, dst: NodeId, pkt_id: u64) -> bool {
        let class = vc_class_for(m.coord(src), m.coord(dst), pkt_id);
        fn walk(m: &MeshConfig, cur: NodeId, dst: NodeId, prev: Direction, class: VcClass) -> bool {
            if cur == dst {
                return true;
            }
            minimal_candidates(m.coord(cur), m.coord(dst))
                .into_iter()
                .all(|d| {
                    allowed_turn(class, prev, d)
                        && walk(m, m.neighbor(cur, d).unwrap(), dst, d, class)
                })
        }
        walk(m, src, dst, Direction::Local, class)
    }

    #[test]
    fn minimal_quadrant_is_fully_adaptive_under_assigned_class() {
        let m = MeshConfig::new(6, 6).unwrap();
        for s in 0..m.nodes() {
            for d in 0..m.nodes() {
                if s != d {
                    assert!(all_minimal_paths_legal(&m, s, d, 0));
                    assert!(all_minimal_paths_legal(&m, s, d, 1));
                }
            }
        }
    }

    #[test]
    fn cdg_examples() {
        assert!(cdg_acyclic(&VcClass::A, &mesh8()));
        assert!(cdg_acyclic(&VcClass::B, &MeshConfig::new(4, 4).unwrap()));
        assert!(!cdg_acyclic(&AllTurns, &MeshConfig::new(3, 3).unwrap()));
    }

    #[test]
    fn route_encoding_examples() {
        use Direction::*;
        let ns = RouteKey::new(North, South);
        let code = ns.encode().unwrap();
        assert_eq!(code, 6);
        assert_eq!(RouteKey::decode(code).unwrap(), ns);
        assert_ne!(
            RouteKey::new(Local, East).encode(),
            RouteKey::new(North, East).encode()
        );
        assert_eq!(RouteKey::new(East, East).encode(), None);
        assert!(RouteKey::decode(20).is_err());
    }

    #[test]
    fn all_twenty_routes_have_distinct_codes() {
        let mut seen = std::collections::BTreeSet::new();
        for i in Direction::ALL {
            for o in Direction::ALL {
                if i != o {
                    let code = RouteKey::new(i, o).encode().unwrap();
                    assert!(code < 20);
                    assert!(seen.insert(code));
                }
            }
        }
        assert_eq!(seen.len(), 20);
    }

    proptest! {
        #[test]
        fn id_coord_round_trip(w in 2usize..12, h in 2usize..12, seed in 0usize..10_000) {
            let m = MeshConfig::new(w, h).unwrap();
            let id = seed % m.nodes();
            prop_assert_eq!(m.coord_to_id(m.id_to_coord(id).unwrap()).unwrap(), id);
        }

        #[test]
        fn route_codes_round_trip(code in 0u8..20) {
            let key = RouteKey::decode(code).unwrap();
            prop_assert_eq!(key.encode(), Some(code));
        }

        #[test]
        fn opposite_is_an_involution(ord in 1usize..5) {
            let d = Direction::from_ordinal(ord).unwrap();
            prop_assert_eq!(d.opposite().opposite(), d);
            prop_assert_ne!(d.opposite(), d);
        }
    }
}
