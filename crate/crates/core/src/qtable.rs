//! Fixed-point Q-value tables.
//!
//! Every router keeps one row per other node. A row holds two Q-values, one
//! for the horizontal and one for the vertical minimal candidate toward that
//! destination, plus the last route a packet flow to that destination took
//! through the router.

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::topology::{minimal_candidates, Direction, MeshConfig, NodeId, RouteKey};

/// Fractional bits shared by every Q-value format.
pub const FRAC_BITS: u32 = 4;
const SCALE: f64 = (1u32 << FRAC_BITS) as f64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QTableError {
    #[error("router {0} keeps no row for itself")]
    SelfDestination(NodeId),
    #[error("destination {0} is outside the mesh")]
    UnknownDestination(NodeId),
    #[error("minimum query over an empty direction set")]
    EmptyAllowedSet,
    #[error("{dir} is not a minimal candidate from router {owner} toward {dest}")]
    NotACandidate {
        owner: NodeId,
        dest: NodeId,
        dir: Direction,
    },
}

/// Unsigned fixed-point format with [`FRAC_BITS`] fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub int_bits: u32,
}

impl QFormat {
    /// 6 integer + 4 fractional bits; contention-valued tables.
    pub const Q6_4: QFormat = QFormat { int_bits: 6 };
    /// 12 integer + 4 fractional bits; latency-valued tables.
    pub const Q12_4: QFormat = QFormat { int_bits: 12 };

    pub fn bits(&self) -> u32 {
        self.int_bits + FRAC_BITS
    }

    pub fn max_raw(&self) -> u16 {
        ((1u32 << self.bits()) - 1) as u16
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 / SCALE
    }

    /// Round to the nearest representable value (ties up), clamping into
    /// `[0, max_value]`. NaN and negative inputs map to zero.
    pub fn quantize(&self, v: f64) -> QFixed {
        if v.is_nan() || v <= 0.0 {
            return QFixed::ZERO;
        }
        let raw = (v * SCALE + 0.5).floor();
        if raw >= self.max_raw() as f64 {
            QFixed(self.max_raw())
        } else {
            QFixed(raw as u16)
        }
    }
}

impl Default for QFormat {
    fn default() -> Self {
        QFormat::Q6_4
    }
}

/// A stored Q-value: `raw / 16`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct QFixed(u16);

impl QFixed {
    pub const ZERO: QFixed = QFixed(0);
    pub const STEP: f64 = 1.0 / SCALE;

    pub fn from_raw(raw: u16) -> QFixed {
        QFixed(raw)
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / SCALE
    }
}

impl fmt::Display for QFixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.value())
    }
}

/// Quantize into the 6.4 format.
pub fn quantize(v: f64) -> QFixed {
    QFormat::Q6_4.quantize(v)
}

/// `quantize((1 - alpha) * old + alpha * (cost + gamma * downstream_min))`.
pub fn q_update(
    old: QFixed,
    alpha: f64,
    cost: f64,
    gamma: f64,
    downstream_min: QFixed,
    format: QFormat,
) -> QFixed {
    let target = cost + gamma * downstream_min.value();
    format.quantize((1.0 - alpha) * old.value() + alpha * target)
}

const H: usize = 0;
const V: usize = 1;

fn slot_of(dir: Direction) -> usize {
    if dir.is_horizontal() {
        H
    } else {
        V
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QRow {
    pub dest: NodeId,
    /// Horizontal candidate toward `dest`, if the geometry has one.
    pub h_dir: Option<Direction>,
    /// Vertical candidate toward `dest`, if the geometry has one.
    pub v_dir: Option<Direction>,
    q: [QFixed; 2],
    pub route: Option<RouteKey>,
}

impl QRow {
    pub fn q_h(&self) -> Option<QFixed> {
        self.h_dir.map(|_| self.q[H])
    }

    pub fn q_v(&self) -> Option<QFixed> {
        self.v_dir.map(|_| self.q[V])
    }

    fn dir_valid(&self, dir: Direction) -> bool {
        self.h_dir == Some(dir) || self.v_dir == Some(dir)
    }
}

#[derive(Debug, Clone)]
pub struct QTable {
    owner: NodeId,
    format: QFormat,
    rows: Vec<QRow>,
}

impl QTable {
    /// Zero-initialized table for router `owner`.
    pub fn new(owner: NodeId, mesh: &MeshConfig, format: QFormat) -> QTable {
        let here = mesh.coord(owner);
        let rows = (0..mesh.nodes())
            .filter(|&d| d != owner)
            .map(|dest| {
                let cands = minimal_candidates(here, mesh.coord(dest));
                QRow {
                    dest,
                    h_dir: cands.iter().copied().find(|d| d.is_horizontal()),
                    v_dir: cands.iter().copied().find(|d| d.is_vertical()),
                    q: [QFixed::ZERO; 2],
                    route: None,
                }
            })
            .collect();
        QTable {
            owner,
            format,
            rows,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[QRow] {
        &self.rows
    }

    fn index(&self, dest: NodeId) -> Result<usize, QTableError> {
        if dest == self.owner {
            return Err(QTableError::SelfDestination(self.owner));
        }
        let idx = if dest < self.owner { dest } else { dest - 1 };
        if idx >= self.rows.len() {
            return Err(QTableError::UnknownDestination(dest));
        }
        Ok(idx)
    }

    pub fn row(&self, dest: NodeId) -> Result<&QRow, QTableError> {
        Ok(&self.rows[self.index(dest)?])
    }

    fn checked_slot(&self, dest: NodeId, dir: Direction) -> Result<(usize, usize), QTableError> {
        let idx = self.index(dest)?;
        if !self.rows[idx].dir_valid(dir) {
            return Err(QTableError::NotACandidate {
                owner: self.owner,
                dest,
                dir,
            });
        }
        Ok((idx, slot_of(dir)))
    }

    /// Q-value for leaving toward `dir` on the way to `dest`.
    pub fn get(&self, dest: NodeId, dir: Direction) -> Result<QFixed, QTableError> {
        let (idx, slot) = self.checked_slot(dest, dir)?;
        Ok(self.rows[idx].q[slot])
    }

    pub fn set(&mut self, dest: NodeId, dir: Direction, value: QFixed) -> Result<(), QTableError> {
        let (idx, slot) = self.checked_slot(dest, dir)?;
        self.rows[idx].q[slot] = QFixed(value.raw().min(self.format.max_raw()));
        Ok(())
    }

    /// Zeroes every Q-value and keeps the route column.
    pub fn clear_values(&mut self) {
        for row in &mut self.rows {
            row.q = [QFixed::ZERO; 2];
        }
    }

    /// Smallest Q-value among `allowed`; the horizontal candidate wins ties.
    pub fn min_estimate(
        &self,
        dest: NodeId,
        allowed: &[Direction],
    ) -> Result<(Direction, QFixed), QTableError> {
        if allowed.is_empty() {
            return Err(QTableError::EmptyAllowedSet);
        }
        let mut best: Option<(usize, Direction, QFixed)> = None;
        for &dir in allowed {
            let q = self.get(dest, dir)?;
            let slot = slot_of(dir);
            let better = match best {
                None => true,
                Some((bslot, _, bq)) => q < bq || (q == bq && slot < bslot),
            };
            if better {
                best = Some((slot, dir, q));
            }
        }
        let (_, dir, q) = best.expect("allowed is non-empty");
        Ok((dir, q))
    }

    /// Minimum over every valid candidate toward `dest`, with the direction
    /// it came from. `None` when `dest` is the owner: the estimate from the
    /// destination itself is zero.
    pub fn best(&self, dest: NodeId) -> Result<Option<(Direction, QFixed)>, QTableError> {
        if dest == self.owner {
            return Ok(None);
        }
        let row = self.row(dest)?;
        let cands: SmallVec<[Direction; 2]> = row.h_dir.into_iter().chain(row.v_dir).collect();
        self.min_estimate(dest, &cands).map(Some)
    }

    /// The estimate this router reports for `dest`: `min_z Q(dest, z)`, or
    /// zero when it is the destination.
    pub fn estimate(&self, dest: NodeId) -> Result<QFixed, QTableError> {
        Ok(self.best(dest)?.map_or(QFixed::ZERO, |(_, q)| q))
    }

    /// Applies the Q-learning update to `Q(dest, dir)` and returns the new
    /// value.
    pub fn update(
        &mut self,
        dest: NodeId,
        dir: Direction,
        alpha: f64,
        cost: f64,
        gamma: f64,
        downstream_min: QFixed,
    ) -> Result<QFixed, QTableError> {
        let (idx, slot) = self.checked_slot(dest, dir)?;
        let cell = &mut self.rows[idx].q[slot];
        *cell = q_update(*cell, alpha, cost, gamma, downstream_min, self.format);
        Ok(*cell)
    }

    pub fn is_candidate(&self, dest: NodeId, dir: Direction) -> bool {
        self.checked_slot(dest, dir).is_ok()
    }

    /// Remember `key` as the latest route taken toward `dest`.
    pub fn record_route(&mut self, dest: NodeId, key: RouteKey) -> Result<(), QTableError> {
        let idx = self.index(dest)?;
        self.rows[idx].route = Some(key);
        Ok(())
    }

    /// Destinations other than `exclude` whose recorded route equals `key`,
    /// ascending, at most `limit` of them.
    pub fn shared_dests(&self, key: RouteKey, exclude: NodeId, limit: usize) -> Vec<NodeId> {
        self.rows
            .iter()
            .filter(|r| r.dest != exclude && r.route == Some(key))
            .map(|r| r.dest)
            .take(limit)
            .collect()
    }

    /// Debug dump: `dest,q_h,q_v,route` with empty cells for invalid slots.
    pub fn write_csv<W: io::Write>(&self, mut w: W, with_header: bool) -> io::Result<()> {
        if with_header {
            writeln!(w, "router,dest,q_h,q_v,route")?;
        }
        for r in &self.rows {
            let cell =
                |q: Option<QFixed>| q.map(|q| format!("{:.4}", q.value())).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                self.owner,
                r.dest,
                cell(r.q_h()),
                cell(r.q_v()),
                r.route.map(|k| k.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}
