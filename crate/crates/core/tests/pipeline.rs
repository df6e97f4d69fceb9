use dpq_core::coder::{decode, encode, index_alphabet};
use dpq_core::harness::{evaluate, EvalReport};
use dpq_core::lattice::{LatticeIndex, LatticeKind};
use dpq_core::prob::SourceModel;
use dpq_core::schemes::{DpqScheme, Message, SchemeKind};
use proptest::prelude::*;

fn transform(step: f64) -> DpqScheme {
    DpqScheme::new(
        SchemeKind::Transform {
            lattice: LatticeKind::ScaledInteger { step, dim: 1 },
        },
        SourceModel::standard_gaussian(),
        9,
    )
    .unwrap()
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    for scheme in [
        transform(0.5),
        DpqScheme::new(
            SchemeKind::Resample { step: 0.3 },
            SourceModel::standard_gaussian(),
            4,
        )
        .unwrap(),
        DpqScheme::new(
            SchemeKind::Transform {
                lattice: LatticeKind::Hexagonal { scale: 1.0 },
            },
            SourceModel::standard_gaussian().with_dim(2).unwrap(),
            4,
        )
        .unwrap(),
    ] {
        let a = evaluate(&scheme, 10_000, 5, 1).unwrap();
        let b = evaluate(&scheme, 10_000, 5, 3).unwrap();
        assert!(a.same_statistics(&b), "{}", scheme.label());
    }
}

#[test]
fn report_json_round_trip() {
    let r = evaluate(&transform(1.0), 10_000, 1, 0).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: EvalReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

/// Entropy-coded indices decode to the same reconstructions as the direct
/// path, and the code length tracks the measured rate.
#[test]
fn coded_transform_pipeline() {
    let scheme = transform(0.25);
    let x = SourceModel::standard_gaussian().sample(3, 20_000).unwrap();
    let indices: Vec<LatticeIndex> = x
        .values()
        .iter()
        .enumerate()
        .map(|(b, v)| match scheme.encode(b as u64, &[*v]).unwrap() {
            Message::Lattice(idx) => idx,
            other => panic!("unexpected message {other:?}"),
        })
        .collect();
    let (dict, symbols) = index_alphabet(&indices);
    let coded = encode(&symbols, dict.len()).unwrap();
    let decoded = decode(&coded).unwrap();
    assert_eq!(decoded, symbols);
    for (b, (s, v)) in decoded.iter().zip(x.values()).enumerate() {
        let idx = dict[*s].clone();
        let y = scheme.decode(b as u64, &Message::Lattice(idx)).unwrap();
        assert_eq!(y, scheme.apply(b as u64, &[*v]).unwrap());
    }
    // the coder does not see the dither, so it pays a little over the
    // dither-conditional entropy
    let report = evaluate(&scheme, 20_000, 3, 0).unwrap();
    assert!(
        coded.nats_per_symbol() >= report.rate_nats - 0.01,
        "{} vs {}",
        coded.nats_per_symbol(),
        report.rate_nats
    );
    assert!(
        coded.nats_per_symbol() <= report.rate_nats + 0.2,
        "{} vs {}",
        coded.nats_per_symbol(),
        report.rate_nats
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Decoding is a pure function of (seed, block, message): the decoder
    /// reproduces the encoder-side output exactly.
    #[test]
    fn decode_matches_apply(x in -6.0f64..6.0, block in 0u64..1_000_000, step in 0.05f64..5.0) {
        let scheme = transform(step);
        let msg = scheme.encode(block, &[x]).unwrap();
        prop_assert_eq!(scheme.decode(block, &msg).unwrap(), scheme.apply(block, &[x]).unwrap());
    }
}
