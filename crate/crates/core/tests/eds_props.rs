use etf2d::eds::{decode, encode, transmit_bsc, ChannelCodec, Codeword};
use etf2d::rng::seeded_rng;
use proptest::prelude::*;

fn codec() -> impl Strategy<Value = ChannelCodec> {
    (0.1f64..20.0, 1u32..=16, 0.0f64..0.5).prop_map(|(range, bits, crossover)| ChannelCodec { range, bits, crossover })
}

proptest! {
    #[test]
    fn encoded_level_neighbours_input(c in codec(), u in 0.0f64..=1.0, seed in any::<u64>()) {
        let y = -c.range + 2.0 * c.range * u;
        let e = encode(&c, y, &mut seeded_rng(seed)).unwrap();
        prop_assert!(!e.clamped);
        prop_assert!((e.level - y).abs() <= c.step() * (1.0 + 1e-12));
        prop_assert!(e.level >= -c.range - 1e-12 && e.level <= c.range + 1e-12);
        prop_assert_eq!(e.code.len(), c.bits as usize);
        let back = decode(&ChannelCodec { crossover: 0.0, ..c }, &e.code).unwrap();
        prop_assert!((back - e.level).abs() <= 1e-12 * c.range.max(1.0));
    }

    #[test]
    fn codeword_index_roundtrip(bits in 1u32..=62, raw in any::<u64>()) {
        let index = raw & ((1u64 << bits) - 1);
        prop_assert_eq!(Codeword::from_index(index, bits).index(), index);
    }

    #[test]
    fn out_of_range_clamps_to_end_level(c in codec(), excess in 1e-6f64..100.0, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let hi = encode(&c, c.range + excess, &mut rng).unwrap();
        let lo = encode(&c, -c.range - excess, &mut rng).unwrap();
        prop_assert!(hi.clamped && lo.clamped);
        prop_assert!((hi.level - c.range).abs() < 1e-9 * c.range);
        prop_assert_eq!(lo.level, -c.range);
    }

    #[test]
    fn bsc_preserves_length(c in codec(), raw in any::<u64>(), seed in any::<u64>()) {
        let word = Codeword::from_index(raw & ((1u64 << c.bits) - 1), c.bits);
        prop_assert_eq!(transmit_bsc(&c, &word, &mut seeded_rng(seed)).len(), word.len());
    }

    #[test]
    fn flip_variance_is_exact_single_bit_sum(c in codec()) {
        // independent bits: sum over v of p(1-p)(2^v step)^2
        let p = c.crossover;
        let d = c.step();
        let direct: f64 = (0..c.bits).map(|v| p * (1.0 - p) * (d * (1u64 << v) as f64).powi(2)).sum();
        prop_assert!((c.flip_variance() - direct).abs() <= 1e-10 * direct.max(1e-300));
    }
}

#[test]
fn randomized_rounding_is_unbiased_at_fixed_inputs() {
    let c = ChannelCodec { range: 3.0, bits: 3, crossover: 0.0 };
    let mut rng = seeded_rng(11);
    let n = 200_000;
    for y in [-2.9, -0.4, 0.123, 1.7, 2.99] {
        let mean = (0..n).map(|_| encode(&c, y, &mut rng).unwrap().level - y).sum::<f64>() / n as f64;
        // q is bounded by one step, so its std is at most step / 2
        assert!(mean.abs() < 4.0 * 0.5 * c.step() / (n as f64).sqrt(), "y {y}: mean {mean}");
    }
}

#[test]
fn empirical_bsc_moments_match_closed_form() {
    let c = ChannelCodec { range: 2.0, bits: 5, crossover: 0.2 };
    let word = Codeword::from_index(19, 5);
    let level = decode(&c, &word).unwrap();
    let (mean, var) = c.decoded_moments(level);
    let mut rng = seeded_rng(12);
    let n = 400_000;
    let draws: Vec<f64> = (0..n).map(|_| decode(&c, &transmit_bsc(&c, &word, &mut rng)).unwrap()).collect();
    let m = draws.iter().sum::<f64>() / n as f64;
    let v = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
    assert!((m - mean).abs() < 4.0 * var.sqrt() / (n as f64).sqrt(), "mean {m} vs {mean}");
    assert!((v / var - 1.0).abs() < 0.02, "variance {v} vs {var}");
}
