//! Byte-level mutation operators in the usual greybox style.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Inputs never grow past this many bytes.
pub const MAX_INPUT_LEN: usize = 1024;

pub const INTERESTING: [u32; 8] = [0, 1, 0x7F, 0x80, 0xFF, 0xFFFF, 0x7FFF_FFFF, 0xFFFF_FFFF];

const ARITH_MAX: u32 = 35;
const HAVOC_MAX_STACK: u32 = 64;
/// One mutation in this many is a splice with a second corpus entry.
const SPLICE_ONE_IN: u32 = 8;

fn window(rng: &mut ChaCha8Rng, len: usize) -> Option<(usize, usize)> {
    let widths: &[usize] = match len {
        0 => return None,
        1 => &[1],
        2 | 3 => &[1, 2],
        _ => &[1, 2, 4],
    };
    let w = widths[rng.gen_range(0..widths.len())];
    Some((rng.gen_range(0..=len - w), w))
}

fn read_le(buf: &[u8]) -> u32 {
    buf.iter().rev().fold(0, |acc, &b| (acc << 8) | b as u32)
}

fn write_le(buf: &mut [u8], v: u32) {
    for (i, b) in buf.iter_mut().enumerate() {
        *b = (v >> (8 * i)) as u8;
    }
}

/// Applies one randomly chosen elementary operator in place.
pub fn mutate_once(rng: &mut ChaCha8Rng, data: &mut Vec<u8>) {
    if data.is_empty() {
        data.push(rng.gen());
        return;
    }
    match rng.gen_range(0..8u32) {
        0 => {
            let bit = rng.gen_range(0..data.len() * 8);
            data[bit / 8] ^= 1 << (bit % 8);
        }
        1 => {
            let i = rng.gen_range(0..data.len());
            data[i] ^= 0xFF;
        }
        2 | 3 => {
            let (at, w) = window(rng, data.len()).expect("nonempty");
            let delta = rng.gen_range(1..=ARITH_MAX);
            let v = read_le(&data[at..at + w]);
            let v = if rng.gen() {
                v.wrapping_add(delta)
            } else {
                v.wrapping_sub(delta)
            };
            write_le(&mut data[at..at + w], v);
        }
        4 => {
            let (at, w) = window(rng, data.len()).expect("nonempty");
            let v = INTERESTING[rng.gen_range(0..INTERESTING.len())];
            write_le(&mut data[at..at + w], v);
        }
        5 => {
            let i = rng.gen_range(0..data.len());
            data[i] = rng.gen();
        }
        6 => {
            if data.len() < MAX_INPUT_LEN {
                let at = rng.gen_range(0..=data.len());
                let n = rng.gen_range(1..=16.min(MAX_INPUT_LEN - data.len()));
                let fill: u8 = if rng.gen() { 0 } else { rng.gen() };
                data.splice(at..at, std::iter::repeat_n(fill, n));
            }
        }
        _ => {
            if data.len() > 1 {
                let at = rng.gen_range(0..data.len());
                let n = rng.gen_range(1..=16.min(data.len() - at));
                data.drain(at..at + n);
            }
        }
    }
}

/// Head of `a` up to a random cut joined to the tail of `b` from a random cut.
pub fn splice(rng: &mut ChaCha8Rng, a: &[u8], b: &[u8]) -> Vec<u8> {
    let cut_a = rng.gen_range(0..=a.len());
    let cut_b = rng.gen_range(0..=b.len());
    let mut out = a[..cut_a].to_vec();
    out.extend_from_slice(&b[cut_b..]);
    out.truncate(MAX_INPUT_LEN);
    out
}

/// Produces a child of `parent`: an optional splice with `other`, then a
/// havoc stack of 1..=64 elementary operators.
pub fn mutate(rng: &mut ChaCha8Rng, parent: &[u8], other: Option<&[u8]>) -> Vec<u8> {
    let mut data = match other {
        Some(b) if rng.gen_range(0..SPLICE_ONE_IN) == 0 => splice(rng, parent, b),
        _ => parent.to_vec(),
    };
    let stack = 1 << rng.gen_range(0..=HAVOC_MAX_STACK.trailing_zeros());
    for _ in 0..stack {
        mutate_once(rng, &mut data);
    }
    data.truncate(MAX_INPUT_LEN);
    data
}
