//! Tiling geometry, quality ladder, user requests and the multicast partition.
//!
//! Tiles are addressed 1-based as `(row, col)`, row 1 at the top of the
//! equirectangular frame (elevation 0°) and column 1 starting at azimuth 0°.
//! Users are addressed 0-based by their position in the [`RequestProfile`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// A tile position `(row, col)`, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileIndex {
    pub row: usize,
    pub col: usize,
}

impl TileIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for TileIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// `rows × cols` grid of equal tiles covering 360° × 180°.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilingGrid {
    rows: usize,
    cols: usize,
}

impl TilingGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return domain(format!("grid dimensions must be positive, got {rows}x{cols}"));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Horizontal angular span of one tile in degrees.
    pub fn tile_span_h(&self) -> f64 {
        360.0 / self.cols as f64
    }

    /// Vertical angular span of one tile in degrees.
    pub fn tile_span_v(&self) -> f64 {
        180.0 / self.rows as f64
    }

    pub fn contains(&self, tile: TileIndex) -> bool {
        (1..=self.rows).contains(&tile.row) && (1..=self.cols).contains(&tile.col)
    }

    pub fn tile_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn tiles(&self) -> impl Iterator<Item = TileIndex> + '_ {
        (1..=self.rows).flat_map(move |r| (1..=self.cols).map(move |c| TileIndex::new(r, c)))
    }

    /// All tiles in the inclusive row/column rectangle, clipped to the grid.
    pub fn rect(&self, rows: (usize, usize), cols: (usize, usize)) -> BTreeSet<TileIndex> {
        let (r0, r1) = (rows.0.max(1), rows.1.min(self.rows));
        let (c0, c1) = (cols.0.max(1), cols.1.min(self.cols));
        (r0..=r1)
            .flat_map(|r| (c0..=c1).map(move |c| TileIndex::new(r, c)))
            .collect()
    }
}

/// Field-of-view window in degrees, with the extra margin delivered on every side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovSpec {
    pub span_h: f64,
    pub span_v: f64,
    pub margin: f64,
}

impl FovSpec {
    pub fn new(span_h: f64, span_v: f64, margin: f64) -> Result<Self> {
        if !(span_h > 0.0 && span_h <= 360.0) {
            return domain(format!("horizontal FoV span must be in (0, 360], got {span_h}"));
        }
        if !(span_v > 0.0 && span_v <= 180.0) {
            return domain(format!("vertical FoV span must be in (0, 180], got {span_v}"));
        }
        if !(margin >= 0.0 && margin.is_finite()) {
            return domain(format!("FoV margin must be non-negative, got {margin}"));
        }
        Ok(Self { span_h, span_v, margin })
    }
}

/// Viewing direction: azimuth in `[0, 360)`, elevation in `[0, 180]` measured from the top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewCenter {
    pub azimuth: f64,
    pub elevation: f64,
}

/// Every tile whose rectangle overlaps the margin-expanded viewing window
/// with positive area. Azimuth wraps at 360°, elevation is clamped to the poles.
pub fn tiles_for_view(
    grid: &TilingGrid,
    fov: &FovSpec,
    center: ViewCenter,
) -> Result<BTreeSet<TileIndex>> {
    let ViewCenter { azimuth, elevation } = center;
    if !(0.0..360.0).contains(&azimuth) {
        return domain(format!("azimuth must lie in [0, 360), got {azimuth}"));
    }
    if !(0.0..=180.0).contains(&elevation) {
        return domain(format!("elevation must lie in [0, 180], got {elevation}"));
    }
    let half_h = fov.span_h / 2.0 + fov.margin;
    let half_v = fov.span_v / 2.0 + fov.margin;
    let (vh, vv) = (grid.tile_span_h(), grid.tile_span_v());

    let cols: Vec<usize> = if 2.0 * half_h >= 360.0 {
        (1..=grid.cols).collect()
    } else {
        let (lo, hi) = (azimuth - half_h, azimuth + half_h);
        (1..=grid.cols)
            .filter(|&n| {
                let (a, b) = ((n - 1) as f64 * vh, n as f64 * vh);
                [-360.0, 0.0, 360.0]
                    .iter()
                    .any(|&s| (a + s).max(lo) < (b + s).min(hi))
            })
            .collect()
    };
    let (lo, hi) = ((elevation - half_v).max(0.0), (elevation + half_v).min(180.0));
    let rows: Vec<usize> = (1..=grid.rows)
        .filter(|&m| ((m - 1) as f64 * vv).max(lo) < (m as f64 * vv).min(hi))
        .collect();

    let tiles: BTreeSet<TileIndex> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| TileIndex::new(r, c)))
        .collect();
    if tiles.is_empty() {
        return domain("viewing window covers no tile");
    }
    Ok(tiles)
}

/// Encoding rate (bit/s) and PSNR (dB) for each of the `L` quality levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityLadder<S> {
    rates: Vec<S>,
    psnr: Vec<S>,
}

impl<S: Scalar> QualityLadder<S> {
    pub fn new(rates: Vec<S>, psnr: Vec<S>) -> Result<Self> {
        if rates.is_empty() {
            return domain("quality ladder needs at least one level");
        }
        if rates.len() != psnr.len() {
            return domain(format!(
                "ladder has {} rates but {} PSNR values",
                rates.len(),
                psnr.len()
            ));
        }
        if rates.iter().any(|r| !(*r > S::zero()) || !r.is_finite()) {
            return domain("encoding rates must be positive and finite");
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return domain("encoding rates must be strictly increasing");
        }
        if psnr.iter().any(|p| !p.is_finite()) || psnr.windows(2).any(|w| w[0] >= w[1]) {
            return domain("PSNR values must be finite and strictly increasing");
        }
        Ok(Self { rates, psnr })
    }

    /// The six-level HEVC ladder of a 360° tile used in the reference experiments.
    pub fn reference() -> Self {
        let rates = [6.66, 16.18, 24.29, 32.01, 40.23, 50.45].map(|r| S::lit(r * 1e5));
        let psnr = [15.82, 25.24, 32.86, 39.96, 46.11, 50.96].map(S::lit);
        Self::new(rates.to_vec(), psnr.to_vec()).expect("reference ladder is valid")
    }

    pub fn levels(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[S] {
        &self.rates
    }

    pub fn psnr(&self) -> &[S] {
        &self.psnr
    }

    /// PSNR of 1-based `level`.
    pub fn psnr_at(&self, level: usize) -> S {
        self.psnr[level - 1]
    }

    pub fn gamma(&self) -> S {
        gamma(self)
    }
}

/// Largest encoding rate per quality level, `max_l D_l / l`.
pub fn gamma<S: Scalar>(ladder: &QualityLadder<S>) -> S {
    ladder
        .rates
        .iter()
        .enumerate()
        .map(|(i, &d)| d / S::of_usize(i + 1))
        .fold(S::zero(), S::max)
}

/// Tile sets requested by each user; user `k` is `tile_sets[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestProfile {
    tile_sets: Vec<BTreeSet<TileIndex>>,
}

impl RequestProfile {
    pub fn new(grid: &TilingGrid, tile_sets: Vec<BTreeSet<TileIndex>>) -> Result<Self> {
        if tile_sets.is_empty() {
            return domain("request profile needs at least one user");
        }
        for (k, set) in tile_sets.iter().enumerate() {
            if set.is_empty() {
                return domain(format!("user {} requests no tiles", k + 1));
            }
            if let Some(t) = set.iter().find(|t| !grid.contains(**t)) {
                return domain(format!("user {} requests tile {t} outside the grid", k + 1));
            }
        }
        Ok(Self { tile_sets })
    }

    pub fn users(&self) -> usize {
        self.tile_sets.len()
    }

    pub fn tiles_of(&self, user: usize) -> &BTreeSet<TileIndex> {
        &self.tile_sets[user]
    }

    pub fn tile_sets(&self) -> &[BTreeSet<TileIndex>] {
        &self.tile_sets
    }

    /// The union of every user's request.
    pub fn union(&self) -> BTreeSet<TileIndex> {
        self.tile_sets.iter().flatten().copied().collect()
    }

    /// Users requesting `tile`, ascending.
    pub fn audience_of(&self, tile: TileIndex) -> BTreeSet<usize> {
        self.tile_sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&tile))
            .map(|(k, _)| k)
            .collect()
    }

    /// Total number of (user, tile) requests.
    pub fn request_count(&self) -> usize {
        self.tile_sets.iter().map(BTreeSet::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastGroup {
    pub tiles: BTreeSet<TileIndex>,
    pub audience: BTreeSet<usize>,
}

/// Disjoint tile groups, each served by one transmission to its audience.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastPartition {
    groups: Vec<MulticastGroup>,
}

impl MulticastPartition {
    /// Wraps explicit groups after checking them against `profile`.
    pub fn from_groups(profile: &RequestProfile, groups: Vec<MulticastGroup>) -> Result<Self> {
        let part = Self { groups };
        part.validate(profile)?;
        Ok(part)
    }

    pub fn groups(&self) -> &[MulticastGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Group index of every tile in the partition.
    pub fn group_of(&self) -> BTreeMap<TileIndex, usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.tiles.iter().map(move |&t| (t, i)))
            .collect()
    }

    pub fn validate(&self, profile: &RequestProfile) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut audiences = BTreeSet::new();
        for (i, g) in self.groups.iter().enumerate() {
            if g.tiles.is_empty() || g.audience.is_empty() {
                return domain(format!("group {} is empty", i + 1));
            }
            if !audiences.insert(g.audience.clone()) {
                return domain(format!("group {} repeats an audience", i + 1));
            }
            for &t in &g.tiles {
                if !seen.insert(t) {
                    return domain(format!("tile {t} appears in two groups"));
                }
                if profile.audience_of(t) != g.audience {
                    return domain(format!("tile {t} is not requested by exactly group {}'s audience", i + 1));
                }
            }
        }
        if seen != profile.union() {
            return domain("groups do not cover every requested tile");
        }
        Ok(())
    }
}

/// Groups requested tiles by their exact audience. Groups are ordered by
/// audience (lexicographically on the ascending user list).
pub fn build_partition(profile: &RequestProfile) -> MulticastPartition {
    let mut by_audience: BTreeMap<Vec<usize>, BTreeSet<TileIndex>> = BTreeMap::new();
    for tile in profile.union() {
        let audience: Vec<usize> = profile.audience_of(tile).into_iter().collect();
        by_audience.entry(audience).or_default().insert(tile);
    }
    let groups = by_audience
        .into_iter()
        .map(|(audience, tiles)| MulticastGroup {
            tiles,
            audience: audience.into_iter().collect(),
        })
        .collect();
    MulticastPartition { groups }
}

/// Weakest channel power of each group's audience.
pub fn group_min_channel<S: Scalar>(partition: &MulticastPartition, channels: &[S]) -> Result<Vec<S>> {
    partition
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.audience
                .iter()
                .map(|&k| match channels.get(k) {
                    Some(&h) if h > S::zero() && h.is_finite() => Ok(h),
                    Some(h) => Err(Error::Domain(format!("channel power of user {} must be positive, got {h}", k + 1))),
                    None => Err(Error::Domain(format!("no channel power for user {} (group {})", k + 1, i + 1))),
                })
                .try_fold(S::infinity(), |acc, h| h.map(|h| acc.min(h)))
        })
        .collect()
}
