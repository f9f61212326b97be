use lbal_core::store::{
    l2_normalize, load_embeddings, load_labels, load_selection, save_embeddings, save_labels,
    save_selection, standardize,
};
use lbal_core::{EmbeddingMatrix, LabelVector, SelectionResult};
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
}

fn matrix() -> impl Strategy<Value = EmbeddingMatrix> {
    (1usize..12, 1usize..9).prop_flat_map(|(n, d)| {
        prop::collection::vec(finite_f32(), n * d)
            .prop_map(move |v| EmbeddingMatrix::from_vec(n, d, v).unwrap())
    })
}

#[test]
fn resave_keeps_payload_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let original = dir.path().join("a.emb");
    // hand-written file, independent of the encoder
    let mut bytes = b"EMB1".to_vec();
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&3u64.to_le_bytes());
    bytes.extend_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(&[1, 0, 0, 0]);
    for v in [1.5f32, -0.0, f32::MIN_POSITIVE, 1e-45, 3.4e38, -2.75] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&original, &bytes).unwrap();
    let copy = dir.path().join("b.emb");
    save_embeddings(&load_embeddings(&original).unwrap(), &copy).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), bytes);
}

#[test]
fn labels_and_selection_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelVector::new(vec![0, 3, 1, 1], Some(6)).unwrap();
    save_labels(&labels, dir.path().join("l.lbl")).unwrap();
    assert_eq!(load_labels(dir.path().join("l.lbl")).unwrap(), labels);

    let sel = SelectionResult {
        strategy: "kmeans_multi".into(),
        seed: 2,
        budget_schedule: vec![1, 3],
        round_boundaries: vec![1, 3],
        indices: vec![5, 0, 9],
    };
    save_selection(&sel, dir.path().join("s.json")).unwrap();
    assert_eq!(load_selection(dir.path().join("s.json")).unwrap(), sel);
    let text = std::fs::read_to_string(dir.path().join("s.json")).unwrap();
    let keys: Vec<usize> = ["strategy", "seed", "budget_schedule", "round_boundaries", "indices"]
        .iter()
        .map(|k| text.find(&format!("\"{k}\"")).unwrap())
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn save_load_is_bit_exact(m in matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        save_embeddings(&m, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        let a: Vec<u32> = m.as_slice().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.as_slice().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!((back.n(), back.d()), (m.n(), m.d()));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_std(
        rows in prop::collection::vec(prop::collection::vec(-1000.0f32..1000.0, 4), 2..50),
    ) {
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let (s, stats) = standardize(&m, None).unwrap();
        for j in 0..m.d() {
            if stats.std[j] < 1e-3 {
                continue;
            }
            let col: Vec<f64> = s.rows().map(|r| r[j] as f64).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            prop_assert!(mean.abs() < 1e-5, "mean {}", mean);
            prop_assert!((std - 1.0).abs() < 1e-4, "std {}", std);
        }
    }

    #[test]
    fn l2_rows_are_unit_and_idempotent(
        rows in prop::collection::vec(prop::collection::vec(-100.0f32..100.0, 5), 1..30),
    ) {
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let u = l2_normalize(&m);
        let uu = l2_normalize(&u);
        for (row, again) in u.rows().zip(uu.rows()) {
            let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-6);
            for (a, b) in row.iter().zip(again) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
