//! Independent reference implementations used as test oracles.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, Zero};

use knotsim::geometry::Vec3;

type Q = BigRational;

fn q(v: f64) -> Q {
    Q::from_f64(v).expect("finite coordinate")
}

struct ExactPoint {
    x: Q,
    y: Q,
    z: Q,
}

fn cross(o: &ExactPoint, a: &ExactPoint, b: &ExactPoint) -> Q {
    (&a.x - &o.x) * (&b.y - &o.y) - (&a.y - &o.y) * (&b.x - &o.x)
}

/// Why the exact oracle declined to produce a code.
#[derive(Debug, PartialEq, Eq)]
pub enum Unresolved {
    /// Segments touch, overlap or cross at equal height.
    Degenerate,
    /// Two crossings fall at the same point of one segment.
    Tie,
}

/// Gauss code text computed entirely in exact rational arithmetic by brute
/// force over segment pairs that share no bead.
pub fn exact_gauss_code(points: &[Vec3]) -> Result<String, Unresolved> {
    let n = points.len();
    let p: Vec<ExactPoint> = points
        .iter()
        .map(|v| ExactPoint { x: q(v.x), y: q(v.y), z: q(v.z) })
        .collect();
    let seg = |i: usize| (&p[i], &p[(i + 1) % n]);
    // (segment, parameter, crossing id, over?)
    let mut visits: Vec<(usize, Q, usize, bool)> = Vec::new();
    let mut id = 0;
    for i in 0..n {
        for j in 0..n {
            if j <= i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            let d1 = cross(c, d, a);
            let d2 = cross(c, d, b);
            let d3 = cross(a, b, c);
            let d4 = cross(a, b, d);
            let s1 = d1.signum();
            let s2 = d2.signum();
            let s3 = d3.signum();
            let s4 = d4.signum();
            let zero = Q::zero();
            if s1 == s2 && !s1.is_zero() || s3 == s4 && !s3.is_zero() {
                continue;
            }
            if d1 == zero || d2 == zero || d3 == zero || d4 == zero {
                // Any contact other than a proper crossing: check whether the
                // closed segments actually meet.
                if touches(a, b, c, d) {
                    return Err(Unresolved::Degenerate);
                }
                continue;
            }
            let t = &d1 / (&d1 - &d2);
            let u = &d3 / (&d3 - &d4);
            let za = &a.z + (&b.z - &a.z) * &t;
            let zc = &c.z + (&d.z - &c.z) * &u;
            if za == zc {
                return Err(Unresolved::Degenerate);
            }
            let a_over = za > zc;
            visits.push((i, t, id, a_over));
            visits.push((j, u, id, !a_over));
            id += 1;
        }
    }
    visits.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    for w in visits.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            return Err(Unresolved::Tie);
        }
    }
    let mut label = vec![0usize; id];
    let mut next = 1;
    let mut parts = Vec::new();
    for (_, _, c, over) in &visits {
        if label[*c] == 0 {
            label[*c] = next;
            next += 1;
        }
        parts.push(format!("{}{}", label[*c], if *over { '+' } else { '-' }));
    }
    Ok(format!("[{}]", parts.join(",")))
}

fn on_segment(a: &ExactPoint, b: &ExactPoint, p: &ExactPoint) -> bool {
    let minx = if a.x < b.x { &a.x } else { &b.x };
    let maxx = if a.x < b.x { &b.x } else { &a.x };
    let miny = if a.y < b.y { &a.y } else { &b.y };
    let maxy = if a.y < b.y { &b.y } else { &a.y };
    cross(a, b, p).is_zero() && *minx <= p.x && p.x <= *maxx && *miny <= p.y && p.y <= *maxy
}

fn touches(a: &ExactPoint, b: &ExactPoint, c: &ExactPoint, d: &ExactPoint) -> bool {
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

/// Every canonically labelled signed double-occurrence word on `n` symbols,
/// built symbol by symbol.
pub fn enumerate_codes(n: usize) -> Vec<String> {
    fn go(n: usize, word: &mut Vec<(usize, bool)>, seen: &mut Vec<u8>, signs: &mut Vec<bool>, out: &mut Vec<String>) {
        if word.len() == 2 * n {
            let parts: Vec<String> = word
                .iter()
                .map(|(l, o)| format!("{}{}", l, if *o { '+' } else { '-' }))
                .collect();
            out.push(format!("[{}]", parts.join(",")));
            return;
        }
        let introduced = seen.iter().filter(|&&c| c > 0).count();
        // Reuse an open label with the opposite sign of its first visit.
        for l in 0..introduced {
            if seen[l] == 1 {
                seen[l] = 2;
                word.push((l + 1, !signs[l]));
                go(n, word, seen, signs, out);
                word.pop();
                seen[l] = 1;
            }
        }
        // Or open the next label, with either sign.
        if introduced < n {
            for over in [true, false] {
                seen[introduced] = 1;
                signs[introduced] = over;
                word.push((introduced + 1, over));
                go(n, word, seen, signs, out);
                word.pop();
                seen[introduced] = 0;
            }
        }
    }
    let mut out = Vec::new();
    go(n, &mut Vec::new(), &mut vec![0; n], &mut vec![false; n], &mut out);
    out
}

/// `(2n-1)!! * 2^n` in arbitrary precision.
pub fn code_count_formula(n: u32) -> BigInt {
    let mut v = BigInt::from(1);
    let mut k = 2 * n as i64 - 1;
    while k > 1 {
        v *= k;
        k -= 2;
    }
    v * (BigInt::from(1) << n as usize)
}
