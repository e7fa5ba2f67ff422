use rand::Rng;

use crate::message::{Bits, FieldSpec, Grammar, Message, Seed};

use super::{reassemble, stack_depth, MutationError, MutationPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldOp {
    /// Invert every bit of the range.
    FlipRange,
    /// Swap two distinct bit positions inside the range.
    SwapBits,
    /// Overwrite the range with a dictionary value for the field.
    Dictionary,
}

/// Width of the random window used when no grammar field fits a message.
const FALLBACK_WINDOW: usize = 32;

/// Grammar fields that start inside `m`, clipped to its end.
fn applicable<'g>(g: &'g Grammar, m: &Message) -> Vec<(&'g FieldSpec, usize)> {
    g.fields
        .iter()
        .filter(|f| f.bit_start < m.bit_len())
        .map(|f| (f, f.bit_len.min(m.bit_len() - f.bit_start)))
        .collect()
}

/// Applies `op` to bits `[start, start + len)` of `m`.
///
/// `full_len` is the field's declared width; dictionary values are fitted to
/// it before the leading `len` bits are written. `swap` picks the two
/// positions for [`FieldOp::SwapBits`] as offsets into the range.
pub fn apply_field_op(
    m: &mut Message,
    start: usize,
    len: usize,
    op: FieldOp,
    dict_value: Option<&[u8]>,
    full_len: usize,
    swap: (usize, usize),
) {
    match op {
        FieldOp::FlipRange => {
            for b in start..start + len {
                m.flip_bit(b);
            }
        }
        FieldOp::SwapBits => {
            let (a, b) = (start + swap.0, start + swap.1);
            let (va, vb) = (m.bit(a), m.bit(b));
            m.set_bit(a, vb);
            m.set_bit(b, va);
        }
        FieldOp::Dictionary => {
            let value = Bits::from_bytes(dict_value.unwrap_or(&[])).fit(full_len);
            for (i, &bit) in value.0.iter().take(len).enumerate() {
                m.set_bit(start + i, bit);
            }
        }
    }
}

fn field_step<R: Rng>(region: &mut [Message], grammar: &Grammar, rng: &mut R) {
    let idx = rng.gen_range(0..region.len());
    let m = &mut region[idx];
    if m.is_empty() {
        return;
    }
    let fields = applicable(grammar, m);
    let (start, len, full_len, dict) = if fields.is_empty() {
        let start = rng.gen_range(0..m.bit_len());
        let len = rng.gen_range(1..=FALLBACK_WINDOW.min(m.bit_len() - start));
        (start, len, len, &[][..])
    } else {
        let (f, len) = fields[rng.gen_range(0..fields.len())];
        (f.bit_start, len, f.bit_len, grammar.dictionary_for(&f.name))
    };
    let mut ops = vec![FieldOp::FlipRange];
    if len >= 2 {
        ops.push(FieldOp::SwapBits);
    }
    if !dict.is_empty() {
        ops.push(FieldOp::Dictionary);
    }
    let op = ops[rng.gen_range(0..ops.len())];
    let swap = if op == FieldOp::SwapBits {
        let a = rng.gen_range(0..len);
        let mut b = rng.gen_range(0..len - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    } else {
        (0, 0)
    };
    let value = (op == FieldOp::Dictionary).then(|| dict[rng.gen_range(0..dict.len())].as_slice());
    apply_field_op(m, start, len, op, value, full_len, swap);
}

/// Applies 1 to `stack_depth_max` field operators to messages of M2.
pub fn field_stack<R: Rng>(
    seed: &Seed,
    plan: &MutationPlan<'_>,
    stack_depth_max: u32,
    rng: &mut R,
) -> Result<Seed, MutationError> {
    let grammar = plan.grammar.ok_or(MutationError::NoGrammar)?;
    let r = &plan.regions;
    let mut region: Vec<Message> = seed.messages[r.target.clone()].to_vec();
    if !region.is_empty() {
        for _ in 0..stack_depth(stack_depth_max, rng) {
            field_step(&mut region, grammar, rng);
        }
    }
    Ok(reassemble(seed, r, region))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::Regions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flip_range_example() {
        let mut m = Message::new([0x00]);
        apply_field_op(&mut m, 2, 3, FieldOp::FlipRange, None, 3, (0, 0));
        assert_eq!(m.0, vec![0x38]);
    }

    #[test]
    fn swapping_equal_bits_is_identity() {
        let mut m = Message::new([0xF0]);
        apply_field_op(&mut m, 0, 4, FieldOp::SwapBits, None, 4, (0, 3));
        assert_eq!(m.0, vec![0xF0]);
        apply_field_op(&mut m, 0, 8, FieldOp::SwapBits, None, 8, (0, 7));
        assert_eq!(m.0, vec![0x71]);
    }

    #[test]
    fn dictionary_overwrite() {
        let mut m = Message::new([0x00, 0x00]);
        apply_field_op(
            &mut m,
            0,
            16,
            FieldOp::Dictionary,
            Some(&[0x00, 0x01]),
            16,
            (0, 0),
        );
        assert_eq!(m.0, vec![0x00, 0x01]);
        // longer value keeps its low-order bits, shorter one is zero-padded
        let mut m = Message::new([0xFF]);
        apply_field_op(
            &mut m,
            0,
            8,
            FieldOp::Dictionary,
            Some(&[0x12, 0x34]),
            8,
            (0, 0),
        );
        assert_eq!(m.0, vec![0x34]);
        let mut m = Message::new([0xFF, 0xFF]);
        apply_field_op(
            &mut m,
            0,
            16,
            FieldOp::Dictionary,
            Some(&[0x07]),
            16,
            (0, 0),
        );
        assert_eq!(m.0, vec![0x00, 0x07]);
    }

    #[test]
    fn clipped_field_writes_leading_bits() {
        let mut m = Message::new([0x00]);
        // 16-bit field over a 1-byte message: only its first 8 bits land
        apply_field_op(
            &mut m,
            0,
            8,
            FieldOp::Dictionary,
            Some(&[0xAB, 0xCD]),
            16,
            (0, 0),
        );
        assert_eq!(m.0, vec![0xAB]);
    }

    #[test]
    fn no_grammar_errors() {
        let seed = Seed::from_strs(&["x"]);
        let plan = MutationPlan::new(Regions::whole(1), None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            field_stack(&seed, &plan, 4, &mut rng),
            Err(MutationError::NoGrammar)
        );
    }

    #[test]
    fn preserves_lengths() {
        let mut g = Grammar {
            protocol: "t".into(),
            fields: vec![
                FieldSpec::new("magic", 0, 16),
                FieldSpec::new("type", 16, 8),
                FieldSpec::new("payload", 24, 4000),
            ],
            ..Grammar::default()
        };
        g.dictionary.insert("magic".into(), vec![vec![0x4D, 0x5A]]);
        g.dictionary
            .insert("payload".into(), vec![vec![1, 2, 3, 4, 5, 6, 7, 8, 9]]);
        let seed = Seed::new(vec![
            Message::new(*b"\x4d\x5a\x01abc"),
            Message::new(vec![0u8; 2]),
            Message::new(vec![]),
        ]);
        let plan = MutationPlan::new(Regions::whole(3), Some(&g));
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let out = field_stack(&seed, &plan, 16, &mut rng).unwrap();
            let lens: Vec<_> = out.messages.iter().map(Message::len).collect();
            assert_eq!(lens, vec![6, 2, 0]);
        }
    }

    #[test]
    fn fallback_window_when_no_field_fits() {
        let g = Grammar {
            protocol: "t".into(),
            fields: vec![FieldSpec::new("far", 800, 8)],
            ..Grammar::default()
        };
        let seed = Seed::new(vec![Message::new([0u8; 4])]);
        let plan = MutationPlan::new(Regions::whole(1), Some(&g));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let changed = (0..100)
            .filter(|_| field_stack(&seed, &plan, 4, &mut rng).unwrap() != seed)
            .count();
        assert!(changed > 0);
    }
}
