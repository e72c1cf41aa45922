//! Bit-exact Cascade reconciliation with full parity transcripts.
//!
//! Every parity Alice announces is answered by Bob's parity over the same
//! index set, so the two directions leak the same number of bits. Bob's
//! answers are a function of Alice's and of the error string `w = x xor y`,
//! which [`reconstruct_bob_messages`] checks bit for bit.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::binary_entropy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub n: usize,
    pub qber_estimate: f64,
    pub k1: usize,
    pub growth: usize,
    pub passes: usize,
    pub rng_seed: u64,
}

impl CascadeParams {
    /// `k1 = ceil(0.73 / e)` clamped to `[2, n]`, doubling, four passes.
    pub fn with_defaults(n: usize, qber_estimate: f64, rng_seed: u64) -> Self {
        let k1 = ((0.73 / qber_estimate).ceil() as usize).clamp(2, n.max(2));
        CascadeParams { n, qber_estimate, k1, growth: 2, passes: 4, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 < 2 || self.passes < 1 || self.growth < 1 {
            return Err(Error::Cascade(format!(
                "need k1 >= 2, passes >= 1, growth >= 1 (k1 {}, passes {}, growth {})",
                self.k1, self.passes, self.growth
            )));
        }
        if !(self.qber_estimate > 0.0 && self.qber_estimate < 0.5) {
            return Err(Error::Cascade(format!("QBER estimate {} outside (0, 0.5)", self.qber_estimate)));
        }
        Ok(())
    }

    /// Block size of pass `i` (zero based).
    pub fn block_size(&self, pass: usize) -> usize {
        self.k1.saturating_mul(self.growth.saturating_pow(pass as u32)).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AliceToBob => "A>B",
            Direction::BobToAlice => "B>A",
        })
    }
}

/// Whether a parity covers a whole block or a bisection half.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Block,
    Bisect,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityMessage {
    pub dir: Direction,
    pub pass: usize,
    pub block: usize,
    pub kind: MessageKind,
    /// Positions in the order the block was formed.
    pub indices: Vec<usize>,
    pub parity: u8,
}

impl ParityMessage {
    /// `dir,pass,block,indices,parity` with indices as hex ranges.
    pub fn to_line(&self) -> String {
        format!("{},{},{},{},{}", self.dir, self.pass, self.block, hex_ranges(&self.indices), self.parity)
    }
}

/// Sorted index set as `;`-separated hex ranges, e.g. `0-7;a;1f-22`.
pub fn hex_ranges(indices: &[usize]) -> String {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        let mut end = start;
        while i + 1 < sorted.len() && sorted[i + 1] == end + 1 {
            i += 1;
            end = sorted[i];
        }
        parts.push(if start == end { format!("{start:x}") } else { format!("{start:x}-{end:x}") });
        i += 1;
    }
    parts.join(";")
}

/// Inverse of [`hex_ranges`].
pub fn parse_hex_ranges(s: &str) -> Result<Vec<usize>> {
    let bad = |p: &str| Error::Cascade(format!("bad index range {p:?}"));
    let mut out = Vec::new();
    for part in s.split(';').filter(|p| !p.is_empty()) {
        let (a, b) = part.split_once('-').unwrap_or((part, part));
        let a = usize::from_str_radix(a, 16).map_err(|_| bad(part))?;
        let b = usize::from_str_radix(b, 16).map_err(|_| bad(part))?;
        if b < a {
            return Err(bad(part));
        }
        out.extend(a..=b);
    }
    Ok(out)
}

/// A transcript line read back from [`ParityMessage::to_line`]. The index
/// order within a block is not part of the text format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptLine {
    pub dir: Direction,
    pub pass: usize,
    pub block: usize,
    pub indices: Vec<usize>,
    pub parity: u8,
}

impl FromStr for TranscriptLine {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = || Error::Cascade(format!("bad transcript line {line:?}"));
        if f.len() != 5 {
            return Err(bad());
        }
        let dir = match f[0] {
            "A>B" => Direction::AliceToBob,
            "B>A" => Direction::BobToAlice,
            _ => return Err(bad()),
        };
        let parity: u8 = f[4].parse().map_err(|_| bad())?;
        if parity > 1 {
            return Err(bad());
        }
        Ok(TranscriptLine {
            dir,
            pass: f[1].parse().map_err(|_| bad())?,
            block: f[2].parse().map_err(|_| bad())?,
            indices: parse_hex_ranges(f[3])?,
            parity,
        })
    }
}

/// `w_l = x_l xor y_l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorString {
    pub w: Vec<u8>,
}

impl ErrorString {
    pub fn new(x: &[u8], y: &[u8]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Cascade(format!("strings of length {} and {}", x.len(), y.len())));
        }
        Ok(ErrorString { w: x.iter().zip(y).map(|(a, b)| a ^ b).collect() })
    }

    pub fn weight(&self) -> usize {
        self.w.iter().filter(|&&b| b == 1).count()
    }
}

#[derive(Clone, Debug)]
pub struct CascadeTranscript {
    pub messages: Vec<ParityMessage>,
    /// Bob's string after reconciliation.
    pub corrected: Vec<u8>,
    pub alice_bits: usize,
    pub bob_bits: usize,
    pub binary_runs: usize,
    /// Positions where Bob's final string still differs from Alice's.
    pub residual_errors: usize,
    /// Whether every block of every finished pass had even parity difference
    /// when its pass ended.
    pub pass_invariant_held: bool,
}

impl CascadeTranscript {
    pub fn alice_messages(&self) -> Vec<ParityMessage> {
        self.messages.iter().filter(|m| m.dir == Direction::AliceToBob).cloned().collect()
    }

    pub fn bob_messages(&self) -> Vec<ParityMessage> {
        self.messages.iter().filter(|m| m.dir == Direction::BobToAlice).cloned().collect()
    }

    /// One line per message, see [`ParityMessage::to_line`].
    pub fn export(&self) -> String {
        let mut s = String::from("dir,pass,block,indices,parity\n");
        for m in &self.messages {
            s.push_str(&m.to_line());
            s.push('\n');
        }
        s
    }
}

fn parity(bits: &[u8], indices: &[usize]) -> u8 {
    indices.iter().fold(0, |p, &i| p ^ bits[i])
}

/// Appends an Alice/Bob parity pair over `indices` and reports whether the
/// two parities differ.
fn exchange(
    x: &[u8],
    y: &[u8],
    indices: &[usize],
    tag: (usize, usize, MessageKind),
    msgs: &mut Vec<ParityMessage>,
) -> bool {
    let (pass, block, kind) = tag;
    let pa = parity(x, indices);
    let pb = parity(y, indices);
    for (dir, p) in [(Direction::AliceToBob, pa), (Direction::BobToAlice, pb)] {
        msgs.push(ParityMessage { dir, pass, block, kind, indices: indices.to_vec(), parity: p });
    }
    pa != pb
}

/// Bisects `indices` (odd parity difference) down to one error position. A
/// single-position block still costs one exchange.
fn bisect(x: &[u8], y: &[u8], indices: &[usize], pass: usize, block: usize, msgs: &mut Vec<ParityMessage>) -> usize {
    let tag = (pass, block, MessageKind::Bisect);
    if indices.len() == 1 {
        exchange(x, y, indices, tag, msgs);
        return indices[0];
    }
    let mut s = indices;
    while s.len() > 1 {
        let (left, right) = s.split_at(s.len() / 2);
        s = if exchange(x, y, left, tag, msgs) { left } else { right };
    }
    s[0]
}

/// BINARY on two blocks that differ in an odd number of positions. Returns
/// the index (plus `offset`) of one differing position and the messages.
pub fn run_binary(xa: &[u8], xb: &[u8], offset: usize) -> Result<(usize, Vec<ParityMessage>)> {
    if xa.len() != xb.len() || xa.is_empty() {
        return Err(Error::Cascade(format!("BINARY needs equal non-empty blocks, got {} and {}", xa.len(), xb.len())));
    }
    let diff = xa.iter().zip(xb).filter(|(a, b)| a != b).count();
    if diff % 2 == 0 {
        return Err(Error::Cascade(format!("BINARY needs an odd number of differences, got {diff}")));
    }
    let mut x = vec![0u8; offset];
    x.extend_from_slice(xa);
    let mut y = vec![0u8; offset];
    y.extend_from_slice(xb);
    let indices: Vec<usize> = (offset..offset + xa.len()).collect();
    let mut msgs = Vec::new();
    let found = bisect(&x, &y, &indices, 0, 0, &mut msgs);
    Ok((found, msgs))
}

/// Runs Cascade on Alice's `x` and Bob's `y`.
pub fn run_cascade(x: &[u8], y: &[u8], p: &CascadeParams) -> Result<CascadeTranscript> {
    p.validate()?;
    if x.len() != y.len() || x.len() != p.n {
        return Err(Error::Cascade(format!("strings of length {} and {} for n = {}", x.len(), y.len(), p.n)));
    }
    let n = p.n;
    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    let mut y = y.to_vec();
    let mut msgs = Vec::new();
    let mut binary_runs = 0;
    let mut pass_invariant_held = true;

    // blocks[pass][block] lists positions; block_of[pass][position].
    let mut blocks: Vec<Vec<Vec<usize>>> = Vec::with_capacity(p.passes);
    let mut block_of: Vec<Vec<usize>> = Vec::with_capacity(p.passes);
    // Parity difference of each block at Bob's current string.
    let mut odd: Vec<Vec<bool>> = Vec::with_capacity(p.passes);

    for pass in 0..p.passes {
        let mut order: Vec<usize> = (0..n).collect();
        if pass > 0 {
            order.shuffle(&mut rng);
        }
        let k = p.block_size(pass).min(n.max(1));
        let these: Vec<Vec<usize>> = order.chunks(k).map(|c| c.to_vec()).collect();
        let mut owner = vec![0; n];
        for (b, blk) in these.iter().enumerate() {
            for &i in blk {
                owner[i] = b;
            }
        }
        odd.push(these.iter().map(|blk| parity(x, blk) != parity(&y, blk)).collect());
        blocks.push(these);
        block_of.push(owner);

        // Known odd blocks, smallest first.
        let mut pending: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
        for b in 0..blocks[pass].len() {
            let differs = exchange(x, &y, &blocks[pass][b], (pass, b, MessageKind::Block), &mut msgs);
            if differs {
                pending.insert((blocks[pass][b].len(), pass, b));
            }
            while let Some(&(len, pp, bb)) = pending.iter().next() {
                pending.remove(&(len, pp, bb));
                if !odd[pp][bb] {
                    continue;
                }
                let pos = bisect(x, &y, &blocks[pp][bb], pp, bb, &mut msgs);
                binary_runs += 1;
                y[pos] ^= 1;
                for q in 0..=pass {
                    let owner = block_of[q][pos];
                    odd[q][owner] = !odd[q][owner];
                    let known = q < pass || owner <= b;
                    let key = (blocks[q][owner].len(), q, owner);
                    if known && odd[q][owner] {
                        pending.insert(key);
                    } else {
                        pending.remove(&key);
                    }
                }
            }
        }
        for q in 0..=pass {
            for blk in &blocks[q] {
                if parity(x, blk) != parity(&y, blk) {
                    pass_invariant_held = false;
                }
            }
        }
    }

    let alice_bits = msgs.iter().filter(|m| m.dir == Direction::AliceToBob).count();
    let bob_bits = msgs.len() - alice_bits;
    let residual_errors = x.iter().zip(&y).filter(|(a, b)| a != b).count();
    Ok(CascadeTranscript {
        messages: msgs,
        corrected: y,
        alice_bits,
        bob_bits,
        binary_runs,
        residual_errors,
        pass_invariant_held,
    })
}

/// Rebuilds Bob's replies from Alice's messages and the error string.
///
/// Bob's parity over `K` is Alice's parity xor the parity of the current
/// error string on `K`. Each finished bisection tells both parties, and
/// anyone holding `w`, which position Bob flipped, so the error string is
/// updated as the transcript is replayed.
pub fn reconstruct_bob_messages(alice_msgs: &[ParityMessage], w: &ErrorString) -> Result<Vec<ParityMessage>> {
    let n = w.w.len();
    let mut w = w.w.clone();
    let mut block_sets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut active: Option<Vec<usize>> = None;
    let mut out = Vec::with_capacity(alice_msgs.len());
    for m in alice_msgs {
        if m.dir != Direction::AliceToBob {
            return Err(Error::Cascade("reconstruction takes Alice's messages only".into()));
        }
        if let Some(&bad) = m.indices.iter().find(|&&i| i >= n) {
            return Err(Error::Cascade(format!("index {bad} outside an error string of length {n}")));
        }
        let flip = parity(&w, &m.indices);
        out.push(ParityMessage { dir: Direction::BobToAlice, parity: m.parity ^ flip, ..m.clone() });
        match m.kind {
            MessageKind::Block => {
                block_sets.insert((m.pass, m.block), m.indices.clone());
            }
            MessageKind::Bisect => {
                let scope = match active.take() {
                    Some(s) => s,
                    None => block_sets
                        .get(&(m.pass, m.block))
                        .cloned()
                        .ok_or_else(|| Error::Cascade(format!("bisection of unknown block {}/{}", m.pass, m.block)))?,
                };
                let next = if scope.len() == 1 {
                    scope
                } else {
                    let (left, right) = scope.split_at(scope.len() / 2);
                    if left != m.indices.as_slice() {
                        return Err(Error::Cascade("bisection message does not match its block".into()));
                    }
                    if flip == 1 { left.to_vec() } else { right.to_vec() }
                };
                if next.len() == 1 {
                    w[next[0]] ^= 1;
                } else {
                    active = Some(next);
                }
            }
        }
    }
    Ok(out)
}

/// Per-bit disclosure of each direction and the empirical efficiency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Leakage {
    pub delta_a: f64,
    pub delta_b: f64,
    /// `delta_a / h(e)`; `None` when `h(e) = 0`.
    pub f_emp: Option<f64>,
}

pub fn leakage_summary(t: &CascadeTranscript, e: f64) -> Result<Leakage> {
    if !(0.0..0.5).contains(&e) {
        return Err(Error::InvalidParameter(format!("QBER {e} outside [0, 0.5)")));
    }
    let n = t.corrected.len().max(1) as f64;
    let delta_a = t.alice_bits as f64 / n;
    let delta_b = t.bob_bits as f64 / n;
    let h = binary_entropy(e);
    Ok(Leakage { delta_a, delta_b, f_emp: (h > 0.0).then(|| delta_a / h) })
}

/// Uniform `x` and `y = x` with each bit flipped independently with
/// probability `e`.
pub fn random_pair<R: Rng + ?Sized>(n: usize, e: f64, rng: &mut R) -> (Vec<u8>, Vec<u8>) {
    let x: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let y = x.iter().map(|&b| b ^ u8::from(rng.gen_bool(e))).collect();
    (x, y)
}

/// Whether Alice's and Bob's messages pair up one to one with identical
/// pass, block and index metadata.
pub fn messages_paired(t: &CascadeTranscript) -> bool {
    if !t.messages.len().is_multiple_of(2) {
        return false;
    }
    t.messages.chunks(2).all(|pair| {
        let (a, b) = (&pair[0], &pair[1]);
        a.dir == Direction::AliceToBob
            && b.dir == Direction::BobToAlice
            && a.pass == b.pass
            && a.block == b.block
            && a.kind == b.kind
            && a.indices == b.indices
    })
}
