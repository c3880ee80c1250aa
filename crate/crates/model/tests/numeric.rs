use delirium_core::report::build_vocab;
use delirium_model::{
    load_encoder, numeric_value_table, save_encoder, train_step, Adam, Batch, ClassifyExample,
    EncoderModel, FreezeSpec, ModelConfig,
};

fn vocab() -> delirium_core::report::Vocabulary {
    build_vocab(["[CLS] lactic acid: min 1.3 max 2.2 [SEP] heart rate: min 88 max -4.5e3 [SEP] gcs: na nan"], 1).unwrap()
}

#[test]
fn only_numeric_tokens_get_rows() {
    let v = vocab();
    let t = numeric_value_table(&v, 8, 0.5);
    assert_eq!(t.dim(), (v.len(), 8));
    for id in 0..v.len() as u32 {
        let tok = v.token(id).unwrap();
        let numeric = tok.parse::<f64>().is_ok_and(f64::is_finite);
        let row = t.row(id as usize);
        if numeric {
            // each sin/cos pair has norm equal to the scale
            for k in 0..4 {
                let n = row[2 * k].hypot(row[2 * k + 1]);
                assert!((n - 0.5).abs() < 1e-12, "{tok}");
            }
        } else {
            assert!(row.iter().all(|&x| x == 0.0), "{tok}");
        }
    }
    assert_eq!(t, numeric_value_table(&v, 8, 0.5));
}

#[test]
fn close_values_get_close_rows() {
    let v = build_vocab(["1.0 1.1 50 -1.0"], 1).unwrap();
    let t = numeric_value_table(&v, 16, 1.0);
    let row = |s: &str| t.row(v.id(s) as usize).to_owned();
    let dist = |a: &str, b: &str| (&row(a) - &row(b)).mapv(|x| x * x).sum().sqrt();
    assert!(dist("1.0", "1.1") < dist("1.0", "50"));
    assert!(dist("1.0", "-1.0") > 0.0);
}

#[test]
fn table_shape_is_checked_and_persisted() {
    let v = vocab();
    let config = ModelConfig {
        vocab_size: v.len(),
        ..ModelConfig::toy()
    };
    let mut m = EncoderModel::init(config.clone(), 3).unwrap();
    assert!(m
        .set_value_encoding(Some(ndarray::Array2::zeros((v.len(), 3))))
        .is_err());
    let seq: Vec<u32> = (2..v.len() as u32).collect();
    let plain = m.forward_classify(&seq).unwrap();
    m.set_value_encoding(Some(numeric_value_table(&v, config.hidden_dim, 1.0)))
        .unwrap();
    assert_ne!(m.forward_classify(&seq).unwrap(), plain);
    assert_eq!(
        m.params.tensors().len(),
        EncoderModel::init(config.clone(), 3)
            .unwrap()
            .params
            .tensors()
            .len()
    );

    let before = m.params.value_enc.clone();
    let ex = [ClassifyExample::new(&seq, true)];
    let mut opt = Adam::new(1e-2);
    train_step(
        &mut m,
        &mut opt,
        &Batch::Classify(&ex),
        FreezeSpec::all_trainable(config.num_layers),
        None,
    )
    .unwrap();
    assert_eq!(m.params.value_enc, before);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_encoder(&path, &m, Some(&opt), serde_json::Value::Null).unwrap();
    let back = load_encoder(&path).unwrap();
    assert_eq!(back.model, m);
    assert_eq!(back.optimizer.as_ref(), Some(&opt));
    assert_eq!(
        back.model.forward_classify(&seq).unwrap().to_bits(),
        m.forward_classify(&seq).unwrap().to_bits()
    );
}
