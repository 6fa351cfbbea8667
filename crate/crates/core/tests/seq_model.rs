mod common;

use common::{random_ids, toy_config};
use latact::numerics::rng::{seeded, stream};
use latact::numerics::{gradcheck_params, Graph, ParamStore};
use latact::seq_model::{decode_greedy, Decoder, Dropout, Encoder, ModelError, TokenSequence};

fn encoder_decoder(seed: u64) -> (Encoder, Decoder, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let mut rng = seeded(seed, stream::INIT);
    let cfg = toy_config();
    let e = Encoder::new(&mut store, &cfg, &mut rng);
    let d = Decoder::new(&mut store, &cfg, &mut rng);
    (e, d, store)
}

#[test]
fn encoder_output_has_one_row_per_token() {
    let (e, _, store) = encoder_decoder(1);
    let mut g = Graph::no_grad();
    let out = e.forward(&mut g, &store, &TokenSequence::new(vec![4, 5, 6, 7, 8]), &mut Dropout::off()).unwrap();
    assert_eq!(g.shape(out.hidden), &[5, 8]);
}

#[test]
fn padded_tail_does_not_affect_real_rows() {
    let (e, _, store) = encoder_decoder(2);
    let run = |tail: Vec<usize>| {
        let mut ids = vec![4, 9, 11];
        let n = ids.len();
        ids.extend(tail);
        let valid = (0..ids.len()).map(|i| i < n).collect();
        let mut g = Graph::no_grad();
        let seq = TokenSequence::with_mask(ids, valid).unwrap();
        let out = e.forward(&mut g, &store, &seq, &mut Dropout::off()).unwrap();
        g.value(out.hidden).data()[..3 * 8].to_vec()
    };
    assert_eq!(run(vec![0, 0]), run(vec![17, 5]));
}

#[test]
fn overlong_context_keeps_most_recent_tokens() {
    let (e, _, store) = encoder_decoder(3);
    let ids: Vec<usize> = (0..20).map(|i| 4 + i % 20).collect();
    let mut g = Graph::no_grad();
    let out = e.forward(&mut g, &store, &TokenSequence::new(ids), &mut Dropout::off()).unwrap();
    assert_eq!(g.shape(out.hidden)[0], toy_config().max_context_len);
}

#[test]
fn decoder_is_causal() {
    let (e, d, store) = encoder_decoder(4);
    let logits = |prefix: &[usize]| {
        let mut g = Graph::no_grad();
        let enc = e.forward(&mut g, &store, &TokenSequence::new(vec![5, 6, 7]), &mut Dropout::off()).unwrap();
        let l = d.forward(&mut g, &store, prefix, &[enc.hidden], None, &mut Dropout::off()).unwrap();
        assert!(g.value(l).is_finite());
        g.value(l).data().to_vec()
    };
    let a = logits(&[2, 8, 9, 10]);
    let b = logits(&[2, 8, 15, 21]);
    let v = toy_config().vocab_size;
    assert_eq!(a[..2 * v], b[..2 * v]);
    assert_ne!(a[2 * v..], b[2 * v..]);
}

#[test]
fn forward_is_deterministic() {
    let (e, _, store) = encoder_decoder(5);
    let run = || {
        let mut g = Graph::no_grad();
        let out = e.forward(&mut g, &store, &TokenSequence::new(vec![4, 5]), &mut Dropout::off()).unwrap();
        g.value(out.hidden).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn empty_inputs_are_errors() {
    let (e, d, store) = encoder_decoder(6);
    let mut g = Graph::<f64>::no_grad();
    assert!(matches!(
        d.forward(&mut g, &store, &[2], &[], None, &mut Dropout::off()),
        Err(ModelError::EmptyInput(_))
    ));
    assert!(matches!(
        e.forward(&mut g, &store, &TokenSequence::new(vec![]), &mut Dropout::off()),
        Err(ModelError::EmptyInput(_))
    ));
    let out_of_vocab = TokenSequence::new(vec![99]);
    assert!(matches!(
        e.forward(&mut g, &store, &out_of_vocab, &mut Dropout::off()),
        Err(ModelError::Token { .. })
    ));
}

#[test]
fn greedy_decoding_stops_at_eos_and_max_len() {
    let eos_first = decode_greedy(|_| Ok(vec![0.0f32, 0.0, 0.0, 5.0]), 2, 3, 10).unwrap();
    assert!(eos_first.is_empty());
    let never = decode_greedy(|_| Ok(vec![0.0f32, 9.0, 0.0, 0.0]), 2, 3, 7).unwrap();
    assert_eq!(never, vec![1; 7]);
}

#[test]
fn encoder_decoder_gradcheck() {
    for seed in 0..3 {
        let (e, d, mut store) = encoder_decoder(seed);
        let mut rng = seeded(seed, stream::TEST);
        let ctx = TokenSequence::new(random_ids(&mut rng, 5));
        let prefix = random_ids(&mut rng, 4);
        let targets: Vec<Option<usize>> = random_ids(&mut rng, 4).into_iter().map(Some).collect();
        let report = gradcheck_params(
            &mut store,
            |g, s| {
                let enc = e.forward(g, s, &ctx, &mut Dropout::off())?;
                let l = d.forward(g, s, &prefix, &[enc.hidden], None, &mut Dropout::off())?;
                Ok::<_, ModelError>(g.cross_entropy(l, &targets)?)
            },
            1e-5,
            Some(6),
            &mut rng,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
    }
}
