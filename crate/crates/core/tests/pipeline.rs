mod common;

use nfsense_core::channel_sim::{generate_population, ActivityClass, CsiSample, PopulationConfig, RadioConfig};
use nfsense_core::dataset_io::{decode_dataset, encode_dataset, make_split, SplitSpec};
use nfsense_core::infer_eval::{
    check_no_leakage, composite_scores, predict, report_from_predictions, CompositeParams, Predictor,
};
use nfsense_core::numerics::Tensor;
use nfsense_core::preprocess::{
    assemble_dataset, assemble_input, cache_key, pad_len, read_cache, write_cache, EmbedParams, ModelInput,
    PAD_VALUE,
};
use nfsense_core::train::{compute_anchors, Anchors};
use num_complex::Complex64;
use proptest::prelude::*;

fn tiny_population(reps: usize, subjects: usize) -> Vec<CsiSample> {
    generate_population(&PopulationConfig {
        n_subjects: subjects,
        reps_per_activity: reps,
        radio: RadioConfig {
            n_subcarriers: 4,
            ..RadioConfig::default()
        },
        ..PopulationConfig::default()
    })
    .unwrap()
}

fn sample_strategy() -> impl Strategy<Value = CsiSample> {
    (2usize..12, 2usize..4, 1usize..5, 0u8..10, 0u16..500, 0u8..8).prop_flat_map(|(p, n, m, label, subject, env)| {
        (
            prop::collection::vec(0.001f32..0.5, p),
            prop::collection::vec(-90.0f32..-20.0, p),
            prop::collection::vec((-1.0f32..1.0, -1.0f32..1.0), p * n * m),
        )
            .prop_map(move |(gaps, rssi, csi)| {
                let mut t = 0.0f64;
                let timestamps_s = gaps
                    .iter()
                    .map(|&g| {
                        t += g as f64;
                        t as f32 as f64
                    })
                    .collect::<Vec<_>>();
                CsiSample {
                    timestamps_s,
                    rssi_dbm: rssi.iter().map(|&v| v as f64).collect(),
                    csi: csi.iter().map(|&(re, im)| Complex64::new(re as f64, im as f64)).collect(),
                    n_antennas: n,
                    n_subcarriers: m,
                    activity_label: label,
                    subject_id: subject,
                    environment_id: env,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_encoding_round_trips(samples in prop::collection::vec(sample_strategy(), 0..5)) {
        prop_assume!(samples.iter().all(|s| s.timestamps_s.windows(2).all(|w| w[1] > w[0])));
        let bytes = encode_dataset(&samples).unwrap();
        prop_assert_eq!(&encode_dataset(&samples).unwrap(), &bytes);
        let back = decode_dataset(&bytes).unwrap();
        prop_assert_eq!(&back, &samples);
        if !bytes.is_empty() {
            let cut = bytes.len() / 2;
            prop_assert!(decode_dataset(&bytes[..cut]).is_err() || cut == 0);
        }
    }

    #[test]
    fn assembled_inputs_respect_their_layout(sample in sample_strategy(), extra in 0usize..5) {
        prop_assume!(sample.timestamps_s.windows(2).all(|w| w[1] > w[0]));
        let params = EmbedParams::default();
        let valid = sample.n_packets() - 1;
        let x = assemble_input(&sample, &params, valid + extra).unwrap();
        let s = params.dim + 1 + 3 * (sample.n_antennas - 1) * sample.n_subcarriers;
        prop_assert_eq!(x.n_features, s);
        prop_assert_eq!(x.valid_len, valid);
        for r in 0..valid {
            let row = x.row(r);
            prop_assert!(row[..params.dim].iter().all(|v| (-1.0..=1.0).contains(v)));
            let phase_start = params.dim + 1 + (sample.n_antennas - 1) * sample.n_subcarriers;
            prop_assert!(row[phase_start..].iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(row[params.dim..phase_start].iter().all(|v| (0.0..=1.0).contains(v)));
        }
        for r in valid..valid + extra {
            prop_assert!(x.row(r).iter().all(|&v| v == PAD_VALUE));
        }
        let tight = assemble_input(&sample, &params, valid).unwrap();
        prop_assert_eq!(tight.valid(), x.valid());
    }

    #[test]
    fn composite_argmax_ignores_constant_shifts(
        logits in prop::collection::vec(-4.0f64..4.0, 10),
        feat in prop::collection::vec(-1.0f64..1.0, 4),
        centers in prop::collection::vec(-1.0f64..1.0, 40),
        shift in -3.0f64..3.0,
    ) {
        let anchors = Anchors {
            centers: Tensor::new(vec![10, 4], centers).unwrap(),
            counts: vec![1; 10],
            model_version: 0,
        };
        let params = CompositeParams { lambda3: 0.5 };
        let s = composite_scores(&feat, &logits, &anchors, params);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let t = composite_scores(&feat, &shifted, &anchors, params);
        let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        prop_assert_eq!(argmax(&s), argmax(&t));
        let plus: Vec<f64> = s.iter().map(|v| v + shift).collect();
        prop_assert_eq!(argmax(&s), argmax(&plus));
    }
}

#[test]
fn split_keeps_roles_apart() {
    let data = tiny_population(12, 9);
    let mut spec = SplitSpec::new(4);
    spec.n_source = 4;
    spec.n_anchor_per_class = 6;
    spec.absent_classes = vec![ActivityClass::Rotate, ActivityClass::Handshake];
    let m = make_split(&data, &spec, 3).unwrap();
    assert!(!m.source_subjects.contains(&4));
    let target_env = data.iter().find(|s| s.subject_id == 4).unwrap().environment_id;
    for (class, ids) in m.ft_ids.iter().enumerate() {
        let absent = class == ActivityClass::Rotate.id() as usize || class == ActivityClass::Handshake.id() as usize;
        assert_eq!(ids.len(), if absent { 0 } else { 10 });
        for &i in ids {
            assert_eq!(data[i].subject_id, 4);
            assert_eq!(data[i].activity_label as usize, class);
        }
    }
    for (class, ids) in m.anchor_ids.iter().enumerate() {
        assert_eq!(ids.len(), 6);
        for &i in ids {
            assert!(m.source_subjects.contains(&data[i].subject_id));
            assert_ne!(data[i].environment_id, target_env);
            assert_eq!(data[i].activity_label as usize, class);
        }
    }
    let test = m.test_ids(&data);
    check_no_leakage(&m, &test).unwrap();
    assert!(test.iter().all(|&i| data[i].subject_id == 4));
    assert_eq!(test.len(), 10 * 12 - 8 * 10);
    assert_eq!(make_split(&data, &spec, 3).unwrap(), m);
    let mut leaky = test.clone();
    leaky.push(m.ft_ids[0][0]);
    assert!(check_no_leakage(&m, &leaky).is_err());
}

#[test]
fn cache_round_trip_and_stale_key() {
    let data = tiny_population(1, 2);
    let params = EmbedParams::default();
    let pad = pad_len(&data).unwrap();
    let inputs = assemble_dataset(&data, &params, pad).unwrap();
    let key = cache_key("abc", &params, pad);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.nfsx");
    write_cache(&path, &inputs, &key).unwrap();
    assert_eq!(read_cache(&path, Some(&key)).unwrap(), inputs);
    assert!(read_cache(&path, Some("other")).is_err());
}

#[test]
fn report_counts_are_consistent() {
    let labels: Vec<u8> = (0..50).map(|i| (i % 10) as u8).collect();
    let preds: Vec<usize> = labels.iter().enumerate().map(|(i, &l)| if i % 3 == 0 { (l as usize + 1) % 10 } else { l as usize }).collect();
    let r = report_from_predictions(&preds, &labels, 10, &[8, 6], "m", 1, "h").unwrap();
    for (c, row) in r.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), labels.iter().filter(|&&l| l as usize == c).count());
    }
    let correct = preds.iter().zip(&labels).filter(|(p, l)| **p == **l as usize).count();
    assert!((r.overall - correct as f64 / 50.0).abs() < 1e-15);
    assert!(r.per_class.iter().flatten().all(|a| (0.0..=1.0).contains(a)));
    let absent = (r.per_class[8].unwrap() + r.per_class[6].unwrap()) / 2.0;
    assert!((r.absent_mean.unwrap() - absent).abs() < 1e-15);
}

#[test]
fn zero_weight_composite_is_softmax_and_anchors_must_match_the_model() {
    let model = common::small_model(3, 5);
    let mut r = nfsense_core::rng::rng(4);
    let classes: Vec<u8> = (0..10).collect();
    let anchor_set = common::random_batch(&mut r, 5, 30, 6, &classes);
    let test = common::random_batch(&mut r, 5, 40, 6, &classes);
    let an: Vec<&ModelInput> = anchor_set.iter().collect();
    let te: Vec<&ModelInput> = test.iter().collect();
    let anchors = compute_anchors(&model, &an, 7).unwrap();
    assert_eq!(anchors.model_version, model.fingerprint());
    let zero = predict(
        &model,
        &te,
        Predictor::Composite {
            anchors: &anchors,
            params: CompositeParams { lambda3: 0.0 },
        },
        16,
    )
    .unwrap();
    let soft = predict(&model, &te, Predictor::Softmax, 16).unwrap();
    assert!(zero.iter().zip(&soft).all(|(a, b)| a.class == b.class));
    let other = common::small_model(4, 5);
    assert!(predict(
        &other,
        &te,
        Predictor::Composite {
            anchors: &anchors,
            params: CompositeParams::default(),
        },
        16
    )
    .is_err());
}
