//! Value types shared across the crate: network geometry, path-loss
//! constants, measurement containers and measurement-type masks.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitCircle, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position in meters. Planar problems keep `z = 0`.
pub type Point = Vector3<f64>;

/// Minimum separation between any two of {anchors, source}.
pub const COINCIDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Dim {
    #[serde(rename = "2")]
    Two,
    #[default]
    #[serde(rename = "3")]
    Three,
}

impl Dim {
    pub fn is_planar(self) -> bool {
        self == Dim::Two
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    anchors: Vec<Point>,
    source: Point,
    dim: Dim,
}

impl NetworkGeometry {
    pub fn new(anchors: Vec<Point>, source: Point, dim: Dim) -> Result<Self> {
        validate_anchors(&anchors, dim)?;
        if !source.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry("source position is not finite".into()));
        }
        if dim.is_planar() && source.z != 0.0 {
            return Err(Error::InvalidGeometry("planar geometry requires source z = 0".into()));
        }
        if let Some((i, d)) = anchors
            .iter()
            .map(|m| (source - m).norm())
            .enumerate()
            .find(|(_, d)| *d <= COINCIDENCE_TOL)
        {
            return Err(Error::InvalidGeometry(format!(
                "source coincides with anchor {i} (distance {d:e} m)"
            )));
        }
        Ok(Self { anchors, source, dim })
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    pub fn source(&self) -> Point {
        self.source
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Checks the anchor-only part of the geometry invariants.
pub fn validate_anchors(anchors: &[Point], dim: Dim) -> Result<()> {
    if anchors.len() < 2 {
        return Err(Error::InvalidGeometry(format!(
            "need at least 2 anchors, got {}",
            anchors.len()
        )));
    }
    for (i, m) in anchors.iter().enumerate() {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry(format!("anchor {i} is not finite")));
        }
        if dim.is_planar() && m.z != 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "planar geometry requires z = 0 (anchor {i})"
            )));
        }
    }
    for i in 0..anchors.len() {
        for j in (i + 1)..anchors.len() {
            if (anchors[i] - anchors[j]).norm() <= COINCIDENCE_TOL {
                return Err(Error::InvalidGeometry(format!(
                    "anchors {i} and {j} coincide"
                )));
            }
        }
    }
    Ok(())
}

/// Anchors and source drawn uniformly on the sphere of radius `radius`
/// centred at the origin.
pub fn generate_network(n_anchors: usize, radius: f64, rng_seed: u64) -> Result<NetworkGeometry> {
    check_network_args(n_anchors, radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
        Point::new(x, y, z) * radius
    };
    loop {
        let anchors: Vec<Point> = (0..n_anchors).map(|_| draw(&mut rng)).collect();
        let source = draw(&mut rng);
        // coincident draws have probability zero but are still rejected
        if let Ok(g) = NetworkGeometry::new(anchors, source, Dim::Three) {
            return Ok(g);
        }
    }
}

/// Planar counterpart of [`generate_network`]: everything on the circle of
/// radius `radius` in the `z = 0` plane.
pub fn generate_planar_network(
    n_anchors: usize,
    radius: f64,
    rng_seed: u64,
) -> Result<NetworkGeometry> {
    check_network_args(n_anchors, radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let [x, y]: [f64; 2] = UnitCircle.sample(rng);
        Point::new(x * radius, y * radius, 0.0)
    };
    loop {
        let anchors: Vec<Point> = (0..n_anchors).map(|_| draw(&mut rng)).collect();
        let source = draw(&mut rng);
        if let Ok(g) = NetworkGeometry::new(anchors, source, Dim::Two) {
            return Ok(g);
        }
    }
}

fn check_network_args(n_anchors: usize, radius: f64) -> Result<()> {
    if n_anchors < 2 {
        return Err(Error::InvalidGeometry(format!(
            "need at least 2 anchors, got {n_anchors}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidGeometry(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

/// `‖s − m_i‖` for every anchor.
pub fn pairwise_distances(g: &NetworkGeometry) -> Vec<f64> {
    distances_from(g.source(), g.anchors())
}

pub fn distances_from(s: Point, anchors: &[Point]) -> Vec<f64> {
    anchors.iter().map(|m| (s - m).norm()).collect()
}

/// Log-distance path-loss constants. `eta` is always derived from `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRssParams", into = "RawRssParams")]
pub struct RssParams {
    l0: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRssParams {
    l0: f64,
    gamma: f64,
}

impl TryFrom<RawRssParams> for RssParams {
    type Error = Error;
    fn try_from(raw: RawRssParams) -> Result<Self> {
        RssParams::new(raw.l0, raw.gamma)
    }
}

impl From<RssParams> for RawRssParams {
    fn from(p: RssParams) -> Self {
        RawRssParams { l0: p.l0, gamma: p.gamma }
    }
}

impl RssParams {
    pub fn new(l0: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || !l0.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "path-loss parameters must be finite with gamma > 0 (l0 = {l0}, gamma = {gamma})"
            )));
        }
        Ok(Self { l0, gamma })
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `10 γ / ln 10`.
    pub fn eta(&self) -> f64 {
        10.0 * self.gamma / std::f64::consts::LN_10
    }
}

impl Default for RssParams {
    fn default() -> Self {
        Self { l0: 20.0, gamma: 2.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementKind {
    Toa,
    Tdoa,
    Rss,
    Aoa,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 4] = [
        MeasurementKind::Toa,
        MeasurementKind::Tdoa,
        MeasurementKind::Rss,
        MeasurementKind::Aoa,
    ];

    pub fn letter(self) -> char {
        match self {
            MeasurementKind::Toa => 'T',
            MeasurementKind::Tdoa => 'D',
            MeasurementKind::Rss => 'R',
            MeasurementKind::Aoa => 'A',
        }
    }

    fn bit(self) -> u8 {
        match self {
            MeasurementKind::Toa => 1,
            MeasurementKind::Tdoa => 2,
            MeasurementKind::Rss => 4,
            MeasurementKind::Aoa => 8,
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MeasurementKind::Toa => "TOA",
            MeasurementKind::Tdoa => "TDOA",
            MeasurementKind::Rss => "RSS",
            MeasurementKind::Aoa => "AOA",
        };
        f.write_str(s)
    }
}

/// A subset of {T, D, R, A}. Displayed by initials in T, D, R, A order
/// (e.g. `TDRA`, `DA`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Mask(u8);

impl Mask {
    pub const EMPTY: Mask = Mask(0);
    pub const ALL: Mask = Mask(0b1111);

    pub fn of(kinds: &[MeasurementKind]) -> Mask {
        Mask(kinds.iter().fold(0, |acc, k| acc | k.bit()))
    }

    pub fn single(kind: MeasurementKind) -> Mask {
        Mask(kind.bit())
    }

    pub fn contains(self, kind: MeasurementKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: Mask) -> Mask {
        Mask(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: Mask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn kinds(self) -> impl Iterator<Item = MeasurementKind> {
        MeasurementKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    /// All 15 nonempty masks: singles, then pairs, triples and `TDRA`.
    pub fn all_methods() -> Vec<Mask> {
        let mut masks: Vec<Mask> = (1u8..16).map(Mask).collect();
        masks.sort_by_key(|m| {
            let idx: Vec<usize> = MeasurementKind::ALL
                .iter()
                .enumerate()
                .filter(|(_, k)| m.contains(**k))
                .map(|(i, _)| i)
                .collect();
            (m.len(), idx)
        });
        masks
    }

    /// Method-selection invariants for a network of `n_anchors`.
    pub fn validate_for(self, n_anchors: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidConfig("measurement mask is empty".into()));
        }
        if self.contains(MeasurementKind::Tdoa) && n_anchors < 2 {
            return Err(Error::InvalidConfig("TDOA needs at least 2 anchors".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in self.kinds() {
            write!(f, "{}", k.letter())?;
        }
        Ok(())
    }
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mask> {
        let mut bits = 0u8;
        for c in s.trim().chars() {
            let kind = match c.to_ascii_uppercase() {
                'T' => MeasurementKind::Toa,
                'D' => MeasurementKind::Tdoa,
                'R' => MeasurementKind::Rss,
                'A' => MeasurementKind::Aoa,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown measurement initial '{other}' in '{s}'"
                    )))
                }
            };
            bits |= kind.bit();
        }
        if bits == 0 {
            return Err(Error::InvalidConfig("empty measurement mask".into()));
        }
        Ok(Mask(bits))
    }
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.is_empty() {
            return Ok(Mask::EMPTY);
        }
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bearing {
    pub azimuth: f64,
    pub elevation: f64,
    /// Set when the source sits on the anchor's vertical axis and the
    /// azimuth was fixed to 0 by convention.
    #[serde(default)]
    pub pole: bool,
}

/// Per-anchor noise standard deviations. `tdoa` has `N − 1` entries,
/// aligned with the TDOA measurement list; the others have `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSigmas {
    /// dB
    pub rss: Vec<f64>,
    /// meters
    pub toa: Vec<f64>,
    /// meters
    pub tdoa: Vec<f64>,
    /// radians
    pub aoa: Vec<f64>,
}

impl NoiseSigmas {
    pub fn uniform(n_anchors: usize, rss: f64, toa: f64, tdoa: f64, aoa: f64) -> Self {
        Self {
            rss: vec![rss; n_anchors],
            toa: vec![toa; n_anchors],
            tdoa: vec![tdoa; n_anchors.saturating_sub(1)],
            aoa: vec![aoa; n_anchors],
        }
    }

    pub fn for_kind(&self, kind: MeasurementKind) -> &[f64] {
        match kind {
            MeasurementKind::Toa => &self.toa,
            MeasurementKind::Tdoa => &self.tdoa,
            MeasurementKind::Rss => &self.rss,
            MeasurementKind::Aoa => &self.aoa,
        }
    }

    /// Multiplies every sigma by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| x * factor).collect();
        Self {
            rss: s(&self.rss),
            toa: s(&self.toa),
            tdoa: s(&self.tdoa),
            aoa: s(&self.aoa),
        }
    }
}

/// Observed TOA/TDOA/RSS/AOA data for one source. Times are stored
/// range-scaled (`c·t`, meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rss: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toa: Option<Vec<f64>>,
    /// `τ_1i` for `i = 2..N`, anchor 1 as reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdoa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aoa: Option<Vec<Bearing>>,
    pub sigma: NoiseSigmas,
    pub mask: Mask,
}

impl MeasurementSet {
    pub fn validate(&self, n_anchors: usize) -> Result<()> {
        let check = |name: &str, len: Option<usize>, want: usize, active: bool| -> Result<()> {
            match len {
                Some(l) if l != want => Err(Error::InvalidMeasurements(format!(
                    "{name} has {l} entries, expected {want}"
                ))),
                None if active => Err(Error::InvalidMeasurements(format!(
                    "{name} is in the mask but has no data"
                ))),
                _ => Ok(()),
            }
        };
        let n = n_anchors;
        check("RSS", self.rss.as_ref().map(Vec::len), n, self.mask.contains(MeasurementKind::Rss))?;
        check("TOA", self.toa.as_ref().map(Vec::len), n, self.mask.contains(MeasurementKind::Toa))?;
        check(
            "TDOA",
            self.tdoa.as_ref().map(Vec::len),
            n.saturating_sub(1),
            self.mask.contains(MeasurementKind::Tdoa),
        )?;
        check("AOA", self.aoa.as_ref().map(Vec::len), n, self.mask.contains(MeasurementKind::Aoa))?;

        for kind in self.mask.kinds() {
            let sig = self.sigma.for_kind(kind);
            let want = if kind == MeasurementKind::Tdoa { n - 1 } else { n };
            if sig.len() != want {
                return Err(Error::InvalidMeasurements(format!(
                    "{kind} sigma has {} entries, expected {want}",
                    sig.len()
                )));
            }
            if let Some(bad) = sig.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                return Err(Error::InvalidMeasurements(format!("{kind} sigma {bad} is not >= 0")));
            }
        }
        let finite = |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite()));
        if !(finite(&self.rss) && finite(&self.toa) && finite(&self.tdoa)) {
            return Err(Error::InvalidMeasurements("non-finite measurement value".into()));
        }
        if let Some(aoa) = &self.aoa {
            for (i, b) in aoa.iter().enumerate() {
                if !(0.0..=std::f64::consts::PI).contains(&b.elevation) {
                    return Err(Error::InvalidMeasurements(format!(
                        "elevation at anchor {i} is outside [0, pi]"
                    )));
                }
                if !(b.azimuth > -std::f64::consts::PI && b.azimuth <= std::f64::consts::PI) {
                    return Err(Error::InvalidMeasurements(format!(
                        "azimuth at anchor {i} is outside (-pi, pi]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn has(&self, kind: MeasurementKind) -> bool {
        match kind {
            MeasurementKind::Toa => self.toa.is_some(),
            MeasurementKind::Tdoa => self.tdoa.is_some(),
            MeasurementKind::Rss => self.rss.is_some(),
            MeasurementKind::Aoa => self.aoa.is_some(),
        }
    }

    /// Same data restricted to `mask` (which must be available).
    pub fn with_mask(&self, mask: Mask) -> Result<MeasurementSet> {
        if let Some(k) = mask.kinds().find(|k| !self.has(*k)) {
            return Err(Error::InvalidMeasurements(format!("{k} requested but not measured")));
        }
        Ok(MeasurementSet { mask, ..self.clone() })
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Uniform draw in `[0, upper)` per coordinate; `z = 0` in the plane.
pub fn uniform_box<R: Rng>(rng: &mut R, upper: f64, dim: Dim) -> Point {
    let mut p = Point::new(
        rng.random::<f64>() * upper,
        rng.random::<f64>() * upper,
        rng.random::<f64>() * upper,
    );
    if dim.is_planar() {
        p.z = 0.0;
    }
    p
}
