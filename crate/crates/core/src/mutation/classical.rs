use rand::Rng;

use crate::message::{Message, Seed};

use super::deterministic::{read_be, write_be};
use super::{
    reassemble, stack_depth, MutationPlan, INTERESTING_8, INTERESTING_WIDE, MAX_MESSAGES,
    MAX_MESSAGE_LEN,
};

/// Byte-level and message-level havoc operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassicalOp {
    FlipBit,
    FlipByte,
    InterestingByte,
    InterestingWord,
    InterestingDword,
    ArithByte,
    ArithWord,
    ArithDword,
    RandomByte,
    DeleteBlock,
    DuplicateBlock,
    MemsetBlock,
    InsertBlock,
    MessageInsert,
    MessageDelete,
    MessageReplace,
    MessageDuplicate,
}

pub const CLASSICAL_OPS: [ClassicalOp; 17] = [
    ClassicalOp::FlipBit,
    ClassicalOp::FlipByte,
    ClassicalOp::InterestingByte,
    ClassicalOp::InterestingWord,
    ClassicalOp::InterestingDword,
    ClassicalOp::ArithByte,
    ClassicalOp::ArithWord,
    ClassicalOp::ArithDword,
    ClassicalOp::RandomByte,
    ClassicalOp::DeleteBlock,
    ClassicalOp::DuplicateBlock,
    ClassicalOp::MemsetBlock,
    ClassicalOp::InsertBlock,
    ClassicalOp::MessageInsert,
    ClassicalOp::MessageDelete,
    ClassicalOp::MessageReplace,
    ClassicalOp::MessageDuplicate,
];

const ARITH_MAX: u64 = 35;
const RETRIES: usize = 16;

/// Block length in `1..=limit`, mostly small.
fn block_len<R: Rng>(limit: usize, rng: &mut R) -> usize {
    debug_assert!(limit >= 1);
    let (lo, hi) = match rng.gen_range(0..3) {
        0 => (1, 32),
        1 => (32, 128),
        _ => (128, 1500),
    };
    let hi = hi.min(limit);
    let lo = lo.min(hi);
    rng.gen_range(lo..=hi)
}

fn pick_nonempty<R: Rng>(region: &[Message], min_len: usize, rng: &mut R) -> Option<usize> {
    let candidates: Vec<usize> = (0..region.len())
        .filter(|&i| region[i].len() >= min_len)
        .collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

fn word_op<R: Rng>(m: &mut Message, width: usize, rng: &mut R, f: impl FnOnce(u64, &mut R) -> u64) {
    let pos = rng.gen_range(0..=m.len() - width);
    let slot = &mut m.0[pos..pos + width];
    let little = width > 1 && rng.gen_bool(0.5);
    if little {
        slot.reverse();
    }
    let v = f(read_be(slot), rng);
    write_be(slot, v);
    if little {
        slot.reverse();
    }
}

/// Applies one operator to the target region. `pool` holds the seed's
/// messages, the source for message insertion and replacement; `others`
/// counts the messages outside the region. Returns `false` when the operator
/// cannot apply.
pub fn apply_classical_op<R: Rng>(
    op: ClassicalOp,
    region: &mut Vec<Message>,
    pool: &[Message],
    others: usize,
    rng: &mut R,
) -> bool {
    use ClassicalOp::*;
    let width = match op {
        InterestingWord | ArithWord => 2,
        InterestingDword | ArithDword => 4,
        _ => 1,
    };
    match op {
        FlipBit | FlipByte | InterestingByte | InterestingWord | InterestingDword | ArithByte
        | ArithWord | ArithDword | RandomByte => {
            let Some(i) = pick_nonempty(region, width, rng) else {
                return false;
            };
            let m = &mut region[i];
            match op {
                FlipBit => {
                    let bit = rng.gen_range(0..m.bit_len());
                    m.flip_bit(bit);
                }
                FlipByte => {
                    let p = rng.gen_range(0..m.len());
                    m.0[p] = !m.0[p];
                }
                InterestingByte => {
                    let p = rng.gen_range(0..m.len());
                    m.0[p] = INTERESTING_8[rng.gen_range(0..INTERESTING_8.len())];
                }
                InterestingWord | InterestingDword => word_op(m, width, rng, |_, rng| {
                    INTERESTING_WIDE[rng.gen_range(0..INTERESTING_WIDE.len())] as u64
                }),
                ArithByte | ArithWord | ArithDword => word_op(m, width, rng, |v, rng| {
                    let d = rng.gen_range(1..=ARITH_MAX);
                    if rng.gen_bool(0.5) {
                        v.wrapping_add(d)
                    } else {
                        v.wrapping_sub(d)
                    }
                }),
                RandomByte => {
                    let p = rng.gen_range(0..m.len());
                    m.0[p] ^= rng.gen_range(1..=255u8);
                }
                _ => unreachable!(),
            }
            true
        }
        DeleteBlock => {
            let Some(i) = pick_nonempty(region, 2, rng) else {
                return false;
            };
            let m = &mut region[i];
            let len = block_len(m.len() - 1, rng);
            let from = rng.gen_range(0..=m.len() - len);
            m.0.drain(from..from + len);
            true
        }
        DuplicateBlock | InsertBlock => {
            let need = if op == DuplicateBlock { 1 } else { 0 };
            let Some(i) = pick_nonempty(region, need, rng) else {
                return false;
            };
            let m = &mut region[i];
            let room = MAX_MESSAGE_LEN.saturating_sub(m.len());
            if room == 0 {
                return false;
            }
            let block: Vec<u8> = if op == DuplicateBlock {
                let len = block_len(m.len().min(room), rng);
                let from = rng.gen_range(0..=m.len() - len);
                m.0[from..from + len].to_vec()
            } else {
                let len = block_len(room.min(1500), rng);
                if rng.gen_bool(0.5) {
                    vec![rng.gen::<u8>(); len]
                } else {
                    (0..len).map(|_| rng.gen()).collect()
                }
            };
            let at = rng.gen_range(0..=m.len());
            m.0.splice(at..at, block);
            true
        }
        MemsetBlock => {
            let Some(i) = pick_nonempty(region, 1, rng) else {
                return false;
            };
            let m = &mut region[i];
            let len = block_len(m.len(), rng);
            let from = rng.gen_range(0..=m.len() - len);
            let byte = if rng.gen_bool(0.5) {
                rng.gen()
            } else {
                m.0[rng.gen_range(0..m.len())]
            };
            m.0[from..from + len].fill(byte);
            true
        }
        MessageInsert | MessageDuplicate => {
            if region.len() + others >= MAX_MESSAGES {
                return false;
            }
            if op == MessageDuplicate {
                if region.is_empty() {
                    return false;
                }
                let i = rng.gen_range(0..region.len());
                let copy = region[i].clone();
                region.insert(i + 1, copy);
            } else {
                if pool.is_empty() {
                    return false;
                }
                let src = pool[rng.gen_range(0..pool.len())].clone();
                let at = rng.gen_range(0..=region.len());
                region.insert(at, src);
            }
            true
        }
        MessageDelete => {
            // never leave the whole seed without messages
            if region.is_empty() || region.len() + others < 2 {
                return false;
            }
            let i = rng.gen_range(0..region.len());
            region.remove(i);
            true
        }
        MessageReplace => {
            if region.is_empty() || pool.is_empty() {
                return false;
            }
            let i = rng.gen_range(0..region.len());
            region[i] = pool[rng.gen_range(0..pool.len())].clone();
            true
        }
    }
}

/// Applies 1 to `stack_depth_max` randomly drawn classical operators to M2.
pub fn classical_stack<R: Rng>(
    seed: &Seed,
    plan: &MutationPlan<'_>,
    stack_depth_max: u32,
    rng: &mut R,
) -> Seed {
    let r = &plan.regions;
    let mut region: Vec<Message> = seed.messages[r.target.clone()].to_vec();
    let others = seed.messages.len() - region.len();
    let depth = stack_depth(stack_depth_max, rng);
    for _ in 0..depth {
        for _ in 0..RETRIES {
            let op = CLASSICAL_OPS[rng.gen_range(0..CLASSICAL_OPS.len())];
            if apply_classical_op(op, &mut region, &seed.messages, others, rng) {
                break;
            }
        }
    }
    reassemble(seed, r, region)
}
