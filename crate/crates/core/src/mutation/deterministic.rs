use crate::message::{Message, Seed};
use crate::scheduler::Regions;

use super::{reassemble, INTERESTING_8, INTERESTING_WIDE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetStage {
    /// Walking flips of 1, 2 or 4 consecutive bits.
    BitFlip(u8),
    /// Walking inversion of 1, 2 or 4 consecutive bytes.
    ByteFlip(u8),
    /// Big-endian +-1 at width 1, 2 or 4 bytes.
    Arith(u8),
    /// Big-endian interesting-value overwrite at width 1, 2 or 4 bytes.
    Interesting(u8),
}

/// One deterministic mutation; `msg` indexes into the target region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetOp {
    FlipBits {
        msg: usize,
        bit: usize,
        width: u8,
    },
    FlipBytes {
        msg: usize,
        pos: usize,
        width: u8,
    },
    Arith {
        msg: usize,
        pos: usize,
        width: u8,
        delta: i8,
    },
    Interesting {
        msg: usize,
        pos: usize,
        width: u8,
        value: u32,
    },
}

impl DetOp {
    pub fn stage(&self) -> DetStage {
        match *self {
            DetOp::FlipBits { width, .. } => DetStage::BitFlip(width),
            DetOp::FlipBytes { width, .. } => DetStage::ByteFlip(width),
            DetOp::Arith { width, .. } => DetStage::Arith(width),
            DetOp::Interesting { width, .. } => DetStage::Interesting(width),
        }
    }

    fn apply(&self, m: &mut Message) {
        match *self {
            DetOp::FlipBits { bit, width, .. } => {
                for b in bit..bit + width as usize {
                    m.flip_bit(b);
                }
            }
            DetOp::FlipBytes { pos, width, .. } => {
                for b in &mut m.0[pos..pos + width as usize] {
                    *b = !*b;
                }
            }
            DetOp::Arith {
                pos, width, delta, ..
            } => {
                let w = width as usize;
                let v = read_be(&m.0[pos..pos + w]);
                let v = v.wrapping_add(delta as i64 as u64);
                write_be(&mut m.0[pos..pos + w], v);
            }
            DetOp::Interesting {
                pos, width, value, ..
            } => write_be(&mut m.0[pos..pos + width as usize], value as u64),
        }
    }
}

pub(crate) fn read_be(b: &[u8]) -> u64 {
    b.iter().fold(0u64, |acc, &x| (acc << 8) | x as u64)
}

/// Writes the low `b.len()` bytes of `v`, big-endian.
pub(crate) fn write_be(b: &mut [u8], v: u64) {
    let n = b.len();
    for (i, byte) in b.iter_mut().enumerate() {
        *byte = (v >> (8 * (n - 1 - i))) as u8;
    }
}

/// The full deterministic schedule, stage-major, over the leading `window`
/// bytes of each target-region message.
pub fn deterministic_ops(seed: &Seed, regions: &Regions, window: usize) -> Vec<DetOp> {
    let lens: Vec<usize> = seed.messages[regions.target.clone()]
        .iter()
        .map(|m| m.len().min(window))
        .collect();
    let mut ops = Vec::new();
    for width in [1u8, 2, 4] {
        for (msg, &n) in lens.iter().enumerate() {
            let bits = n * 8;
            for bit in 0..(bits + 1).saturating_sub(width as usize) {
                ops.push(DetOp::FlipBits { msg, bit, width });
            }
        }
    }
    for width in [1u8, 2, 4] {
        for (msg, &n) in lens.iter().enumerate() {
            for pos in 0..(n + 1).saturating_sub(width as usize) {
                ops.push(DetOp::FlipBytes { msg, pos, width });
            }
        }
    }
    for width in [1u8, 2, 4] {
        for (msg, &n) in lens.iter().enumerate() {
            for pos in 0..(n + 1).saturating_sub(width as usize) {
                for delta in [1i8, -1] {
                    ops.push(DetOp::Arith {
                        msg,
                        pos,
                        width,
                        delta,
                    });
                }
            }
        }
    }
    for width in [1u8, 2, 4] {
        let values: Vec<u32> = if width == 1 {
            INTERESTING_8.iter().map(|&v| v as u32).collect()
        } else {
            INTERESTING_WIDE.to_vec()
        };
        for (msg, &n) in lens.iter().enumerate() {
            for pos in 0..(n + 1).saturating_sub(width as usize) {
                for &value in &values {
                    ops.push(DetOp::Interesting {
                        msg,
                        pos,
                        width,
                        value,
                    });
                }
            }
        }
    }
    ops
}

/// Lazily yields one mutant per deterministic operator application.
pub fn deterministic_stage<'a>(
    seed: &'a Seed,
    regions: &'a Regions,
    window: usize,
) -> impl Iterator<Item = Seed> + 'a {
    deterministic_ops(seed, regions, window)
        .into_iter()
        .map(move |op| apply_det(seed, regions, op))
}

/// Applies one deterministic operator to a copy of `seed`.
pub fn apply_det(seed: &Seed, regions: &Regions, op: DetOp) -> Seed {
    let mut region: Vec<Message> = seed.messages[regions.target.clone()].to_vec();
    let msg = match op {
        DetOp::FlipBits { msg, .. }
        | DetOp::FlipBytes { msg, .. }
        | DetOp::Arith { msg, .. }
        | DetOp::Interesting { msg, .. } => msg,
    };
    op.apply(&mut region[msg]);
    reassemble(seed, regions, region)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(msgs: &[&[u8]]) -> (Seed, Regions) {
        let seed = Seed::new(msgs.iter().map(|m| Message::new(m.to_vec())).collect());
        let r = Regions::whole(msgs.len());
        (seed, r)
    }

    #[test]
    fn single_bit_walk_on_zero_byte() {
        let (seed, r) = one(&[&[0x00]]);
        let got: Vec<u8> = deterministic_ops(&seed, &r, 64)
            .into_iter()
            .filter(|op| op.stage() == DetStage::BitFlip(1))
            .map(|op| apply_det(&seed, &r, op).messages[0].0[0])
            .collect();
        assert_eq!(got, vec![0x80, 0x40, 0x20, 0x10, 0x08, 0x04, 0x02, 0x01]);
    }

    #[test]
    fn empty_message_yields_nothing() {
        let (seed, r) = one(&[&[]]);
        assert_eq!(deterministic_stage(&seed, &r, 64).count(), 0);
    }

    #[test]
    fn two_byte_walk_count() {
        let (seed, r) = one(&[b"AB"]);
        let n = deterministic_ops(&seed, &r, 64)
            .iter()
            .filter(|op| op.stage() == DetStage::BitFlip(1))
            .count();
        assert_eq!(n, 16);
    }

    #[test]
    fn stage_sizes_for_four_bytes() {
        let (seed, r) = one(&[b"ABCD"]);
        let ops = deterministic_ops(&seed, &r, 64);
        let count = |s| ops.iter().filter(|op| op.stage() == s).count();
        assert_eq!(count(DetStage::BitFlip(2)), 31);
        assert_eq!(count(DetStage::BitFlip(4)), 29);
        assert_eq!(count(DetStage::ByteFlip(4)), 1);
        assert_eq!(count(DetStage::Arith(1)), 8);
        assert_eq!(count(DetStage::Arith(4)), 2);
        assert_eq!(count(DetStage::Interesting(1)), 36);
        assert_eq!(count(DetStage::Interesting(2)), 48);
    }

    #[test]
    fn only_target_region_changes() {
        let seed = Seed::new(vec![
            Message::from("pre"),
            Message::from("mid"),
            Message::from("post"),
        ]);
        let r = Regions {
            prefix: 0..1,
            target: 1..2,
            suffix: 2..3,
        };
        for m in deterministic_stage(&seed, &r, 64) {
            assert_eq!(m.messages[0], seed.messages[0]);
            assert_eq!(m.messages[2], seed.messages[2]);
            assert_eq!(m.messages[1].len(), 3);
        }
    }

    #[test]
    fn window_limits_walk() {
        let (seed, r) = one(&[&[0u8; 100]]);
        assert!(deterministic_ops(&seed, &r, 4)
            .iter()
            .all(|op| !matches!(op, DetOp::FlipBytes { pos, .. } if *pos >= 4)));
    }

    #[test]
    fn arith_wraps_big_endian() {
        let mut m = Message::new([0x00, 0xFF]);
        DetOp::Arith {
            msg: 0,
            pos: 0,
            width: 2,
            delta: 1,
        }
        .apply(&mut m);
        assert_eq!(m.0, vec![0x01, 0x00]);
        DetOp::Interesting {
            msg: 0,
            pos: 0,
            width: 2,
            value: 4096,
        }
        .apply(&mut m);
        assert_eq!(m.0, vec![0x10, 0x00]);
    }
}
