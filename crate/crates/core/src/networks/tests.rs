use super::*;
use crate::autodiff::finite_difference_check;
use crate::data_gen::{Dataset, Material};
use crate::decoders::{fourier_basis, pod_basis, pretrain_autoencoder, snapshot_matrix};
use crate::trainer::Schedule;

fn spec(m: usize, n: usize, decoder: DecoderKind) -> ModelSpec {
    ModelSpec {
        predictive: PredictiveSpec::new(m, n, decoder),
        explanatory: ExplanatorySpec::default(),
    }
}

fn attachment(kind: DecoderKind, m: usize, n: usize) -> DecoderAttachment {
    let data = Dataset::generate(Material::Material1, 12, m, 0.0, 3).unwrap();
    let fields: Vec<Field> = data.samples.iter().map(|s| s.u.clone()).collect();
    match kind {
        DecoderKind::Baseline => DecoderAttachment::None,
        DecoderKind::Fourier => DecoderAttachment::Linear {
            basis: fourier_basis(m, n).unwrap().basis,
        },
        DecoderKind::Pod => DecoderAttachment::Linear {
            basis: pod_basis(&snapshot_matrix(&fields).unwrap(), n)
                .unwrap()
                .modes,
        },
        DecoderKind::Autoencoder => DecoderAttachment::Frozen {
            decoder: pretrain_autoencoder(&fields, n, &Schedule::single(20, 1e-3), 1)
                .unwrap()
                .decoder,
        },
    }
}

fn model(kind: DecoderKind, m: usize, n: usize, seed: u64) -> Model {
    Model::new(spec(m, n, kind), seed, attachment(kind, m, n)).unwrap()
}

fn inputs(m: usize, d: usize) -> Tensor2 {
    let data = Dataset::generate(Material::Material2, d, m, 0.0, 8).unwrap();
    let rows: Vec<Vec<f64>> = data.samples.iter().map(|s| s.input()).collect();
    Tensor2::from_rows(&rows)
}

#[test]
fn reference_scale_counts() {
    let c = count_parameters(
        &PredictiveSpec::new(10, 10, DecoderKind::Baseline),
        &ExplanatorySpec::default(),
    );
    assert_eq!(c.p_encoding, 1940);
    assert_eq!(c.p_decoding, 2430);
    assert_eq!(c.p_pre, 4370);
    assert_eq!(c.p_exp_formula, 131);
    assert_eq!(c.p_exp_reference, 161);
    let f = count_parameters(
        &PredictiveSpec::new(10, 10, DecoderKind::Fourier),
        &ExplanatorySpec::default(),
    );
    assert_eq!(f.p_decoding_trainable, 0);
}

#[test]
fn literal_counts_match_formulas() {
    for kind in DecoderKind::ALL {
        for (m, n) in [(5, 3), (8, 6)] {
            let md = model(kind, m, n, 1);
            let c = count_parameters(&md.spec.predictive, &md.spec.explanatory);
            assert_eq!(
                md.group_count(ParamGroup::Encoder),
                encoder_formula(m, m, n)
            );
            assert_eq!(md.group_count(ParamGroup::Encoder), c.p_encoding);
            assert_eq!(md.group_count(ParamGroup::Explanatory), c.p_exp_formula);
            assert_eq!(
                md.trainable_count(),
                c.trainable_total(),
                "{kind} m={m} n={n}"
            );
            if kind == DecoderKind::Baseline {
                assert_eq!(c.p_encoding + c.p_decoding, c.p_pre);
                assert_eq!(md.group_count(ParamGroup::Decoder), c.p_decoding);
            }
        }
    }
}

#[test]
fn decoder_kind_parsing() {
    assert_eq!(
        "ae".parse::<DecoderKind>().unwrap(),
        DecoderKind::Autoencoder
    );
    assert_eq!("pod".parse::<DecoderKind>().unwrap(), DecoderKind::Pod);
    let err = "wavelet".parse::<DecoderKind>().unwrap_err();
    assert!(err.contains("baseline, fourier, pod, autoencoder"));
    let k: DecoderKind = serde_json::from_str("\"ae\"").unwrap();
    assert_eq!(k, DecoderKind::Autoencoder);
}

#[test]
fn attachment_must_match_kind() {
    let err = Model::new(spec(5, 3, DecoderKind::Fourier), 0, DecoderAttachment::None).unwrap_err();
    assert!(matches!(err, NetworkError::MissingAttachment { .. }));
    let wrong = DecoderAttachment::Linear {
        basis: fourier_basis(5, 4).unwrap().basis,
    };
    assert!(matches!(
        Model::new(spec(5, 3, DecoderKind::Pod), 0, wrong),
        Err(NetworkError::AttachmentShape(_))
    ));
}

#[test]
fn explanatory_map_is_pixelwise() {
    let md = model(DecoderKind::Baseline, 5, 3, 4);
    let c = md.explain_values(&Tensor2::filled(3, 4, 0.37));
    assert!(c.data().iter().all(|&v| v == c.data()[0]));
    let mut rng = SplitMix64::new(5);
    let u = Tensor2::from_vec(1, 25, (0..25).map(|_| rng.uniform()).collect());
    let mut perm: Vec<usize> = (0..25).collect();
    rng.shuffle(&mut perm);
    let permuted = Tensor2::from_vec(1, 25, perm.iter().map(|&p| u.data()[p]).collect());
    let k = md.explain_values(&u);
    let kp = md.explain_values(&permuted);
    for (i, &p) in perm.iter().enumerate() {
        assert_eq!(kp.data()[i], k.data()[p]);
    }
}

#[test]
fn same_seed_same_weights_and_streams_are_separate() {
    let a = model(DecoderKind::Baseline, 5, 3, 9);
    assert_eq!(a, model(DecoderKind::Baseline, 5, 3, 9));
    assert_ne!(a.params, model(DecoderKind::Baseline, 5, 3, 10).params);
    let f = model(DecoderKind::Fourier, 5, 3, 9);
    assert_eq!(a.param("encoder.0.weight"), f.param("encoder.0.weight"));
    assert_eq!(a.param("explanatory.3.bias"), f.param("explanatory.3.bias"));
}

#[test]
fn graph_matches_plain_evaluation() {
    let x = inputs(5, 4);
    for kind in DecoderKind::ALL {
        let md = model(kind, 5, 3, 2);
        let mut mg = build_model_graph(&md, &x).unwrap();
        mg.forward(&md).unwrap();
        let (u, z) = md.predict_rows(&x).unwrap();
        let k = md.explain_values(&u);
        let close = |a: &Tensor2, b: &Tensor2| a.sub(b).max_abs() <= 1e-12 * (1.0 + b.max_abs());
        assert!(close(mg.graph.value(mg.u_hat), &u), "{kind}");
        assert!(close(mg.graph.value(mg.latent), &z), "{kind}");
        assert!(close(mg.graph.value(mg.k_hat), &k), "{kind}");
        let (field, code) = predict_field(&md, x.row_slice(1)).unwrap();
        assert_eq!(field.shape(), (5, 5));
        assert_eq!(code.len(), 3);
    }
}

#[test]
fn frozen_parameters_receive_no_gradient() {
    let x = inputs(5, 3);
    let mut md = model(DecoderKind::Baseline, 5, 3, 2);
    md.set_trainable(ParamGroup::Encoder, false);
    let mut mg = build_model_graph(&md, &x).unwrap();
    let ss = mg.graph.sum_squares(mg.k_hat);
    let _ = ss;
    mg.forward(&md).unwrap();
    let grads = mg.graph.backward().unwrap();
    let trainable = mg.trainable(&md);
    assert_eq!(grads.len(), trainable.len());
    for (k, id) in trainable {
        assert_ne!(md.params[k].group, ParamGroup::Encoder);
        assert!(grads.contains_key(&id));
    }
}

#[test]
fn encoder_gradients_flow_through_every_decoder() {
    let x = inputs(5, 3);
    for kind in DecoderKind::ALL {
        let md = model(kind, 5, 3, 6);
        let idx = md
            .params
            .iter()
            .position(|p| p.name == "encoder.2.bias")
            .unwrap();
        let mut mg = build_model_graph(&md, &x).unwrap();
        let ss = mg.graph.sum_squares(mg.u_hat);
        let sk = mg.graph.sum_squares(mg.k_hat);
        mg.graph.add(ss, sk).unwrap();
        let leaf = mg.param_leaves[idx];
        let worst = finite_difference_check(
            |w: &Tensor2| -> Result<(f64, Tensor2), GraphError> {
                let mut probe = md.clone();
                probe.params[idx].value = w.clone();
                let loss = mg.forward(&probe)?.item();
                let grads = mg.graph.backward()?;
                Ok((loss, grads[&leaf].clone()))
            },
            &md.params[idx].value,
            1e-5,
        )
        .unwrap();
        assert!(worst < 1e-4, "{kind}: {worst}");
    }
}

#[test]
fn checkpoint_round_trip_and_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let src = model(DecoderKind::Pod, 5, 3, 1);
    let path = dir.path().join("ck.json");
    write_checkpoint(&src, &path).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back, src);

    let mut target = model(DecoderKind::Fourier, 5, 3, 2);
    target.load_groups(&back, &[ParamGroup::Encoder]).unwrap();
    assert_eq!(
        target.param("encoder.2.weight"),
        src.param("encoder.2.weight")
    );
    assert_ne!(
        target.param("explanatory.0.weight"),
        src.param("explanatory.0.weight")
    );

    let other = model(DecoderKind::Fourier, 5, 4, 2);
    let err = target
        .load_groups(&other, &[ParamGroup::Encoder])
        .unwrap_err();
    assert!(err.to_string().contains("encoder.2.weight"), "{err}");
}
