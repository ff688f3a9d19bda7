use bbdec_nn::{Graph, Mode, ParamStore, Tensor};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<bool>)> {
    (1usize..4, 1usize..5, 1usize..3).prop_flat_map(|(queries, keys, heads)| {
        let width = 2 * heads;
        let values = queries * width + 2 * keys * width;
        (
            Just(queries),
            Just(keys),
            Just(heads),
            prop::collection::vec(-3.0f64..3.0, values),
            prop::collection::vec(any::<bool>(), queries * keys),
        )
    })
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_masked_entries_vanish((queries, keys, heads, values, blocked) in case()) {
        let width = 2 * heads;
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store, Mode::Eval);
        let (qd, rest) = values.split_at(queries * width);
        let (kd, vd) = rest.split_at(keys * width);
        let q = g.input(Tensor::from_vec(&[queries, width], qd.to_vec()).unwrap());
        let k = g.input(Tensor::from_vec(&[keys, width], kd.to_vec()).unwrap());
        let v = g.input(Tensor::from_vec(&[keys, width], vd.to_vec()).unwrap());
        let mut mask = Tensor::<f64>::zeros(&[queries, keys]);
        for i in 0..queries {
            for j in 0..keys {
                // Key 0 stays open so that every row has a finite entry.
                if blocked[i * keys + j] && j > 0 {
                    mask.data_mut()[i * keys + j] = f64::NEG_INFINITY;
                }
            }
        }
        let out = g.attention(q, k, v, heads, 1, Some(&mask));
        let probs = g.attention_probs(out).unwrap();
        for h in 0..heads {
            for i in 0..queries {
                let row = &probs[(h * queries + i) * keys..][..keys];
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                for j in 0..keys {
                    if mask.data()[i * keys + j] == f64::NEG_INFINITY {
                        prop_assert_eq!(row[j], 0.0);
                    }
                }
            }
        }
    }
}
