//! Gauss codes of rope projections.
//!
//! The rope is projected onto the z=0 plane. Every proper intersection of two
//! non-adjacent segments is a crossing; the strand with the larger interpolated
//! z at the intersection passes over. Traversal starts on segment 0 (bead 0 to
//! bead 1) and follows increasing bead index. Crossings receive labels in order
//! of first encounter, and each visit records whether the current strand is the
//! over-strand (`+`) or the under-strand (`-`).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{KnotConfiguration, Vec3};

/// Minimum distance (m) between a projected intersection and any segment endpoint.
pub const XY_EPS: f64 = 1e-9;
/// Minimum z separation (m) between the two strands at a crossing.
pub const Z_EPS: f64 = 1e-6;
/// Orientation determinants below this magnitude are re-evaluated exactly.
pub const ORIENT_EXACT_THRESHOLD: f64 = 1e-12;
/// Two crossings on one segment closer than this in parameter are ambiguous.
pub const PARAM_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussError {
    #[error("degenerate projection at segments {seg_a} and {seg_b}: {reason}")]
    DegenerateProjection {
        seg_a: usize,
        seg_b: usize,
        reason: Degeneracy,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid gauss code: {0}")]
    Validation(String),
    #[error("code count for {0} crossings overflows u64")]
    Overflow(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// Intersection within [`XY_EPS`] of a segment endpoint.
    EndpointContact,
    /// Collinear segments with overlapping projections.
    CollinearOverlap,
    /// Strands within [`Z_EPS`] of each other at the crossing.
    AmbiguousHeight,
    /// Two crossings at the same parameter along one segment.
    CoincidentCrossings,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Degeneracy::EndpointContact => "intersection touches a segment endpoint",
            Degeneracy::CollinearOverlap => "collinear overlapping segments",
            Degeneracy::AmbiguousHeight => "strand heights are indistinguishable",
            Degeneracy::CoincidentCrossings => "two crossings coincide on one segment",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Over,
    Under,
}

impl Sign {
    pub fn flipped(self) -> Self {
        match self {
            Sign::Over => Sign::Under,
            Sign::Under => Sign::Over,
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Over => '+',
            Sign::Under => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GaussEntry {
    pub label: u32,
    pub sign: Sign,
}

impl GaussEntry {
    pub fn new(label: u32, sign: Sign) -> Self {
        Self { label, sign }
    }
}

/// Canonically labeled signed crossing sequence. Empty for a crossing-free
/// projection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct GaussCode {
    entries: Vec<GaussEntry>,
}

impl GaussCode {
    pub fn unknot() -> Self {
        Self::default()
    }

    /// Validates `entries` against the code invariants: every label appears
    /// exactly twice with opposite signs, and labels are `1..=n` in order of
    /// first appearance.
    pub fn from_entries(entries: Vec<GaussEntry>) -> Result<Self, GaussError> {
        let mut seen: Vec<Option<Sign>> = Vec::new();
        let mut complete = Vec::new();
        for (pos, e) in entries.iter().enumerate() {
            let idx = e.label as usize;
            if idx == 0 {
                return Err(GaussError::Validation(format!("label 0 at position {pos}")));
            }
            if idx > seen.len() + 1 {
                return Err(GaussError::Validation(format!(
                    "label {} first appears before label {}",
                    e.label,
                    seen.len() + 1
                )));
            }
            if idx == seen.len() + 1 {
                seen.push(Some(e.sign));
                complete.push(false);
                continue;
            }
            match seen[idx - 1] {
                Some(first) if !complete[idx - 1] => {
                    if first == e.sign {
                        return Err(GaussError::Validation(format!(
                            "label {} has the same sign twice",
                            e.label
                        )));
                    }
                    complete[idx - 1] = true;
                }
                _ => {
                    return Err(GaussError::Validation(format!(
                        "label {} appears more than twice",
                        e.label
                    )))
                }
            }
        }
        if let Some(missing) = complete.iter().position(|c| !c) {
            return Err(GaussError::Validation(format!(
                "label {} appears once",
                missing + 1
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GaussEntry] {
        &self.entries
    }

    pub fn crossing_count(&self) -> usize {
        self.entries.len() / 2
    }

    pub fn is_unknot(&self) -> bool {
        self.entries.is_empty()
    }

    /// The same sequence with every sign flipped.
    pub fn mirrored(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| GaussEntry::new(e.label, e.sign.flipped()))
                .collect(),
        }
    }
}

impl fmt::Display for GaussCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}{}", e.label, e.sign.symbol())?;
        }
        f.write_str("]")
    }
}

impl FromStr for GaussCode {
    type Err = GaussError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_code(s)
    }
}

/// Exact element-wise equality of two codes.
pub fn codes_equal(a: &GaussCode, b: &GaussCode) -> bool {
    a.entries == b.entries
}

pub fn crossing_count(code: &GaussCode) -> usize {
    code.crossing_count()
}

/// Number of distinct codes with `n` crossings: `(2n-1)!! * 2^n`.
pub fn count_possible_codes(n: u32) -> Result<u64, GaussError> {
    (1..=n as u64).try_fold(1u64, |acc, k| {
        acc.checked_mul(2 * k - 1)
            .and_then(|v| v.checked_mul(2))
            .ok_or(GaussError::Overflow(n))
    })
}

pub fn format_code(code: &GaussCode) -> String {
    code.to_string()
}

/// Parses `[1+,1-,2+,2-]`-style text. Whitespace is allowed between tokens.
pub fn parse_code(text: &str) -> Result<GaussCode, GaussError> {
    let mut p = Parser { bytes: text.as_bytes(), pos: 0 };
    p.skip_ws();
    p.expect(b'[')?;
    let mut entries = Vec::new();
    p.skip_ws();
    if p.peek() == Some(b']') {
        p.pos += 1;
    } else {
        loop {
            p.skip_ws();
            let label = p.label()?;
            p.skip_ws();
            let sign = match p.peek() {
                Some(b'+') => Sign::Over,
                Some(b'-') => Sign::Under,
                _ => return Err(p.error("expected '+' or '-'")),
            };
            p.pos += 1;
            entries.push(GaussEntry::new(label, sign));
            p.skip_ws();
            match p.peek() {
                Some(b',') => p.pos += 1,
                Some(b']') => {
                    p.pos += 1;
                    break;
                }
                _ => return Err(p.error("expected ',' or ']'")),
            }
        }
    }
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("trailing characters"));
    }
    GaussCode::from_entries(entries)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), GaussError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", b as char)))
        }
    }

    fn label(&mut self) -> Result<u32, GaussError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a label"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| GaussError::Parse {
                offset: start,
                message: "label out of range".into(),
            })
    }

    fn error(&self, message: &str) -> GaussError {
        GaussError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }
}

/// One projected self-intersection. `seg_a < seg_b`; segment `i` joins bead `i`
/// to bead `i+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub seg_a: usize,
    pub seg_b: usize,
    pub uv: [f64; 2],
    pub param_a: f64,
    pub param_b: f64,
    /// True when `seg_a` is the over-strand.
    pub a_over: bool,
}

impl Crossing {
    pub fn over_segment(&self) -> usize {
        if self.a_over {
            self.seg_a
        } else {
            self.seg_b
        }
    }
}

fn orientation(a: &Vec3, b: &Vec3, c: &Vec3) -> (f64, i8) {
    let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let sign = if det.abs() < ORIENT_EXACT_THRESHOLD {
        let exact = robust::orient2d(
            robust::Coord { x: a.x, y: a.y },
            robust::Coord { x: b.x, y: b.y },
            robust::Coord { x: c.x, y: c.y },
        );
        exact.partial_cmp(&0.0).map_or(0, |o| o as i8)
    } else if det > 0.0 {
        1
    } else {
        -1
    };
    (det, sign)
}

/// `p` lies on segment `a`–`b`, given that it is collinear with it.
fn within_box(a: &Vec3, b: &Vec3, p: &Vec3) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segment_crossing(
    points: &[Vec3],
    i: usize,
    j: usize,
) -> Result<Option<Crossing>, GaussError> {
    let n = points.len();
    let (a0, a1) = (&points[i], &points[(i + 1) % n]);
    let (b0, b1) = (&points[j], &points[(j + 1) % n]);

    if a0.x.max(a1.x) < b0.x.min(b1.x)
        || b0.x.max(b1.x) < a0.x.min(a1.x)
        || a0.y.max(a1.y) < b0.y.min(b1.y)
        || b0.y.max(b1.y) < a0.y.min(a1.y)
    {
        return Ok(None);
    }

    let degenerate = |reason| GaussError::DegenerateProjection {
        seg_a: i,
        seg_b: j,
        reason,
    };

    let (d1, s1) = orientation(a0, a1, b0);
    let (d2, s2) = orientation(a0, a1, b1);
    let (d3, s3) = orientation(b0, b1, a0);
    let (d4, s4) = orientation(b0, b1, a1);

    if s1 == 0 && s2 == 0 {
        // Collinear; the bounding boxes already overlap, so the segments touch.
        return Err(degenerate(Degeneracy::CollinearOverlap));
    }
    if (s1 == 0 && within_box(a0, a1, b0))
        || (s2 == 0 && within_box(a0, a1, b1))
        || (s3 == 0 && within_box(b0, b1, a0))
        || (s4 == 0 && within_box(b0, b1, a1))
    {
        return Err(degenerate(Degeneracy::EndpointContact));
    }
    if s1 == 0 || s2 == 0 || s3 == 0 || s4 == 0 || s1 == s2 || s3 == s4 {
        return Ok(None);
    }

    let t = d3 / (d3 - d4);
    let u = d1 / (d1 - d2);
    let len_a = ((a1.x - a0.x).powi(2) + (a1.y - a0.y).powi(2)).sqrt();
    let len_b = ((b1.x - b0.x).powi(2) + (b1.y - b0.y).powi(2)).sqrt();
    if t * len_a <= XY_EPS
        || (1.0 - t) * len_a <= XY_EPS
        || u * len_b <= XY_EPS
        || (1.0 - u) * len_b <= XY_EPS
    {
        return Err(degenerate(Degeneracy::EndpointContact));
    }

    let za = a0.z + t * (a1.z - a0.z);
    let zb = b0.z + u * (b1.z - b0.z);
    if (za - zb).abs() <= Z_EPS {
        return Err(degenerate(Degeneracy::AmbiguousHeight));
    }
    Ok(Some(Crossing {
        seg_a: i,
        seg_b: j,
        uv: [a0.x + t * (a1.x - a0.x), a0.y + t * (a1.y - a0.y)],
        param_a: t,
        param_b: u,
        a_over: za > zb,
    }))
}

/// Every proper projected intersection between non-adjacent segments, ordered
/// by `(seg_a, seg_b)`.
pub fn find_crossings(config: &KnotConfiguration) -> Result<Vec<Crossing>, GaussError> {
    let points = config.points();
    let n = points.len();
    let mut crossings = Vec::new();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if let Some(c) = segment_crossing(points, i, j)? {
                crossings.push(c);
            }
        }
    }
    Ok(crossings)
}

/// The canonical Gauss code of `config`'s z-projection.
pub fn compute_gauss_code(config: &KnotConfiguration) -> Result<GaussCode, GaussError> {
    let crossings = find_crossings(config)?;
    gauss_code_from_crossings(&crossings)
}

/// Orders crossing visits along the traversal and assigns canonical labels.
pub fn gauss_code_from_crossings(crossings: &[Crossing]) -> Result<GaussCode, GaussError> {
    // (segment, param, crossing index, this strand is over)
    let mut visits: Vec<(usize, f64, usize, bool)> = Vec::with_capacity(crossings.len() * 2);
    for (k, c) in crossings.iter().enumerate() {
        visits.push((c.seg_a, c.param_a, k, c.a_over));
        visits.push((c.seg_b, c.param_b, k, !c.a_over));
    }
    visits.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    for w in visits.windows(2) {
        if w[0].0 == w[1].0 && (w[1].1 - w[0].1).abs() <= PARAM_TIE_EPS {
            let (ka, kb) = (w[0].2, w[1].2);
            return Err(GaussError::DegenerateProjection {
                seg_a: crossings[ka].seg_a.min(crossings[kb].seg_a),
                seg_b: w[0].0,
                reason: Degeneracy::CoincidentCrossings,
            });
        }
    }

    let mut labels: Vec<u32> = vec![0; crossings.len()];
    let mut next = 1;
    let entries = visits
        .iter()
        .map(|&(_, _, k, over)| {
            if labels[k] == 0 {
                labels[k] = next;
                next += 1;
            }
            GaussEntry::new(labels[k], if over { Sign::Over } else { Sign::Under })
        })
        .collect();
    Ok(GaussCode { entries })
}
