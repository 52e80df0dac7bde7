use super::{BoundEncoder, LayerSlot};
use crate::data::TokenSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Activation, Tape, Var};
use crate::tensor::Matrix;

/// Extra key columns (`d_h×n`) and value rows (`n×d_h`) appended to the
/// feed-forward sublayer of one layer.
#[derive(Debug, Clone, Copy)]
pub struct FfnSlots {
    pub layer: usize,
    pub keys: Var,
    pub values: Var,
}

/// Per-layer prefix key/value blocks (`prefix_len×d_h` each).
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    pub prefix_keys: Option<&'a [Var]>,
    pub prefix_values: Option<&'a [Var]>,
    pub ffn_slots: Option<FfnSlots>,
    /// Rows appended after the embedding layer; attendable, not returned.
    pub extra_positions: Option<Var>,
    /// Position id of the first token.
    pub position_offset: usize,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Final-norm hidden states, one row per input position.
    pub hidden: Var,
    /// Residual stream after each layer (including any extra positions).
    pub layers: Vec<Var>,
}

/// `f(H·[K | keys] + [b | 0]) · [V ; values] + c`.
///
/// The extra slots go at the end of the key and value matrices; their key
/// bias is zero.
#[allow(clippy::too_many_arguments)]
pub fn feed_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    keys: Var,
    key_bias: Option<Var>,
    values: Var,
    value_bias: Option<Var>,
    activation: Activation,
    slots: Option<(Var, Var)>,
) -> Result<Var> {
    let (d, f) = tape.shape(keys);
    if tape.shape(values) != (f, d) {
        return Err(Error::Shape(format!(
            "ffn values {:?} do not match keys {:?}",
            tape.shape(values),
            (d, f)
        )));
    }
    let (keys, key_bias, values) = match slots {
        None => (keys, key_bias, values),
        Some((extra_k, extra_v)) => {
            let (kd, n) = tape.shape(extra_k);
            if kd != d || tape.shape(extra_v) != (n, d) {
                return Err(Error::Shape(format!(
                    "knowledge slots {:?}/{:?} do not fit hidden width {d}",
                    tape.shape(extra_k),
                    tape.shape(extra_v)
                )));
            }
            let k = tape.concat_cols(&[keys, extra_k]);
            let v = tape.concat_rows(&[values, extra_v]);
            let b = key_bias.map(|b| {
                let zeros = tape.constant(Matrix::zeros(1, n));
                tape.concat_cols(&[b, zeros])
            });
            (k, b, v)
        }
    };
    let mut pre = tape.matmul(h, keys);
    if let Some(b) = key_bias {
        pre = tape.add_row(pre, b);
    }
    let act = tape.activate(pre, activation);
    let mut out = tape.matmul(act, values);
    if let Some(c) = value_bias {
        out = tape.add_row(out, c);
    }
    Ok(out)
}

pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    enc: &BoundEncoder,
    seq: &TokenSequence,
    opts: ForwardOptions<'_>,
) -> Result<ForwardTrace> {
    let cfg = *enc.config();
    let n = seq.len();
    let d = cfg.hidden;
    let extra = opts.extra_positions.map_or(0, |v| tape.shape(v).0);
    if opts.position_offset + n + extra > cfg.max_positions {
        return Err(Error::Truncation { len: opts.position_offset + n + extra, max: cfg.max_positions });
    }
    if let Some(&bad) = seq.ids().iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Shape(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
    }
    if let Some(slots) = opts.ffn_slots {
        if slots.layer >= cfg.layers {
            return Err(Error::LayerOutOfRange { layer: slots.layer, layers: cfg.layers });
        }
    }
    let prefix = match (opts.prefix_keys, opts.prefix_values) {
        (None, None) => None,
        (Some(k), Some(v)) => {
            if k.len() != cfg.layers || v.len() != cfg.layers {
                return Err(Error::Shape(format!(
                    "prefix has {}/{} blocks for {} layers",
                    k.len(),
                    v.len(),
                    cfg.layers
                )));
            }
            for (&kb, &vb) in k.iter().zip(v) {
                let (kl, kw) = tape.shape(kb);
                let (vl, vw) = tape.shape(vb);
                if kw != d || vw != d || kl != vl {
                    return Err(Error::Shape(format!(
                        "prefix blocks {kl}x{kw} / {vl}x{vw} do not match hidden width {d}"
                    )));
                }
            }
            // An empty prefix is the identity.
            if tape.shape(k[0]).0 == 0 {
                None
            } else {
                Some((k, v))
            }
        }
        _ => return Err(Error::Shape("prefix keys and values must be given together".into())),
    };
    if let Some(extra_v) = opts.extra_positions {
        if tape.shape(extra_v).1 != d {
            return Err(Error::Shape(format!(
                "extra positions have width {}, expected {d}",
                tape.shape(extra_v).1
            )));
        }
    }

    let ids: Vec<usize> = seq.ids().iter().map(|&i| i as usize).collect();
    let positions: Vec<usize> = (opts.position_offset..opts.position_offset + n).collect();
    let tok = tape.gather_rows(enc.token_embedding(), &ids);
    let pos = tape.gather_rows(enc.position_embedding(), &positions);
    let mut x = tape.add(tok, pos);
    if let Some(extra_v) = opts.extra_positions {
        x = tape.concat_rows(&[x, extra_v]);
    }

    let heads = cfg.heads;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let h = tape.layer_norm(
            x,
            enc.layer(l, LayerSlot::AttnNormGamma),
            enc.layer(l, LayerSlot::AttnNormBeta),
        );
        let q = linear(tape, h, enc.layer(l, LayerSlot::Query), enc.layer(l, LayerSlot::QueryBias));
        let mut k = linear(tape, h, enc.layer(l, LayerSlot::Key), enc.layer(l, LayerSlot::KeyBias));
        let mut v = linear(tape, h, enc.layer(l, LayerSlot::Value), enc.layer(l, LayerSlot::ValueBias));
        if let Some((pk, pv)) = prefix {
            k = tape.concat_rows(&[pk[l], k]);
            v = tape.concat_rows(&[pv[l], v]);
        }
        let attended = if heads == 1 {
            attention_head(tape, q, k, v, scale)
        } else {
            let outs: Vec<Var> = (0..heads)
                .map(|hi| {
                    let qh = tape.slice_cols(q, hi * hd, hd);
                    let kh = tape.slice_cols(k, hi * hd, hd);
                    let vh = tape.slice_cols(v, hi * hd, hd);
                    attention_head(tape, qh, kh, vh, scale)
                })
                .collect();
            tape.concat_cols(&outs)
        };
        let o = linear(tape, attended, enc.layer(l, LayerSlot::Output), enc.layer(l, LayerSlot::OutputBias));
        x = tape.add(x, o);

        let h2 = tape.layer_norm(
            x,
            enc.layer(l, LayerSlot::FfnNormGamma),
            enc.layer(l, LayerSlot::FfnNormBeta),
        );
        let slots = opts.ffn_slots.filter(|s| s.layer == l).map(|s| (s.keys, s.values));
        let f = feed_forward(
            tape,
            h2,
            enc.layer(l, LayerSlot::FfnKeys),
            Some(enc.layer(l, LayerSlot::FfnKeyBias)),
            enc.layer(l, LayerSlot::FfnValues),
            Some(enc.layer(l, LayerSlot::FfnValueBias)),
            cfg.activation,
            slots,
        )?;
        x = tape.add(x, f);
        layers.push(x);
    }
    let (g, b) = enc.final_norm();
    let mut hidden = tape.layer_norm(x, g, b);
    if extra > 0 {
        hidden = tape.slice_rows(hidden, 0, n);
    }
    Ok(ForwardTrace { hidden, layers })
}

fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Var {
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

fn attention_head<T: Scalar>(tape: &mut Tape<T>, q: Var, k: Var, v: Var, scale: f64) -> Var {
    let scores = tape.matmul_nt(q, k);
    let scores = tape.scale(scores, scale);
    let weights = tape.softmax_rows(scores);
    tape.matmul(weights, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{EncoderParams, ModelConfig};
    use crate::rng::Lcg64;

    fn config() -> ModelConfig {
        ModelConfig { hidden: 8, ffn: 16, layers: 2, heads: 2, max_positions: 12, vocab_size: 10, seed: 3, ..Default::default() }
    }

    fn seq(ids: &[u32]) -> TokenSequence {
        TokenSequence::from_ids(ids.to_vec(), 128).unwrap()
    }

    #[test]
    fn hand_computed_expansion() {
        let mut t = Tape::<f64>::new();
        let h = t.constant(Matrix::row_vector(&[1.0, 0.0]));
        let k = t.constant(Matrix::identity(2));
        let v = t.constant(Matrix::identity(2));
        let base = feed_forward(&mut t, h, k, None, v, None, Activation::Relu, None).unwrap();
        assert_eq!(t.value(base).data(), &[1.0, 0.0]);
        let ek = t.constant(Matrix::from_vec(2, 1, vec![1.0, 1.0]));
        let ev = t.constant(Matrix::row_vector(&[2.0, 3.0]));
        let out = feed_forward(&mut t, h, k, None, v, None, Activation::Relu, Some((ek, ev))).unwrap();
        assert_eq!(t.value(out).data(), &[3.0, 3.0]);
    }

    #[test]
    fn zero_value_slots_are_bit_identical() {
        let params = EncoderParams::<f32>::init(config()).unwrap();
        let s = seq(&[2, 5, 6, 7, 3]);
        let mut t = Tape::new();
        let enc = params.bind(&mut t, false);
        let base = forward(&mut t, &enc, &s, ForwardOptions::default()).unwrap();
        let mut rng = Lcg64::new(9);
        let keys = t.constant(Matrix::random_normal(8, 3, 1.0, &mut rng));
        let values = t.constant(Matrix::zeros(3, 8));
        let opts = ForwardOptions { ffn_slots: Some(FfnSlots { layer: 1, keys, values }), ..Default::default() };
        let aug = forward(&mut t, &enc, &s, opts).unwrap();
        assert_eq!(t.value(base.hidden), t.value(aug.hidden));
    }

    #[test]
    fn empty_prefix_equals_no_prefix() {
        let params = EncoderParams::<f32>::init(config()).unwrap();
        let s = seq(&[2, 5, 1, 3]);
        let mut t = Tape::new();
        let enc = params.bind(&mut t, false);
        let base = forward(&mut t, &enc, &s, ForwardOptions::default()).unwrap();
        let empty: Vec<Var> = (0..2).map(|_| t.constant(Matrix::zeros(0, 8))).collect();
        let opts = ForwardOptions { prefix_keys: Some(&empty), prefix_values: Some(&empty), ..Default::default() };
        let with = forward(&mut t, &enc, &s, opts).unwrap();
        assert_eq!(t.value(base.hidden), t.value(with.hidden));
    }

    #[test]
    fn prefixes_keep_output_length_and_change_values() {
        let params = EncoderParams::<f32>::init(config()).unwrap();
        let s = seq(&[2, 5, 1, 3]);
        let mut t = Tape::new();
        let enc = params.bind(&mut t, false);
        let base = forward(&mut t, &enc, &s, ForwardOptions::default()).unwrap();
        let mut rng = Lcg64::new(1);
        let pk: Vec<Var> = (0..2).map(|_| t.param(Matrix::random_normal(3, 8, 1.0, &mut rng))).collect();
        let pv: Vec<Var> = (0..2).map(|_| t.param(Matrix::random_normal(3, 8, 1.0, &mut rng))).collect();
        let opts = ForwardOptions { prefix_keys: Some(&pk), prefix_values: Some(&pv), ..Default::default() };
        let with = forward(&mut t, &enc, &s, opts).unwrap();
        assert_eq!(t.shape(with.hidden), (4, 8));
        assert!(t.value(with.hidden).max_abs_diff(t.value(base.hidden)) > 0.0);
    }

    #[test]
    fn errors_on_bad_options() {
        let params = EncoderParams::<f32>::init(config()).unwrap();
        let s = seq(&[2, 5, 3]);
        let mut t = Tape::new();
        let enc = params.bind(&mut t, false);
        let keys = t.constant(Matrix::zeros(8, 1));
        let values = t.constant(Matrix::zeros(1, 8));
        let opts = ForwardOptions { ffn_slots: Some(FfnSlots { layer: 2, keys, values }), ..Default::default() };
        assert!(matches!(forward(&mut t, &enc, &s, opts), Err(Error::LayerOutOfRange { layer: 2, layers: 2 })));

        let narrow: Vec<Var> = (0..2).map(|_| t.constant(Matrix::zeros(2, 4))).collect();
        let opts = ForwardOptions { prefix_keys: Some(&narrow), prefix_values: Some(&narrow), ..Default::default() };
        assert!(matches!(forward(&mut t, &enc, &s, opts), Err(Error::Shape(_))));

        let long = seq(&[2, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 3]);
        assert!(matches!(
            forward(&mut t, &enc, &long, ForwardOptions::default()),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn extra_positions_are_attended_but_not_returned() {
        let params = EncoderParams::<f32>::init(config()).unwrap();
        let s = seq(&[2, 5, 6, 3]);
        let mut t = Tape::new();
        let enc = params.bind(&mut t, false);
        let base = forward(&mut t, &enc, &s, ForwardOptions::default()).unwrap();
        let extra = t.constant(Matrix::random_normal(2, 8, 1.0, &mut Lcg64::new(4)));
        let opts = ForwardOptions { extra_positions: Some(extra), ..Default::default() };
        let with = forward(&mut t, &enc, &s, opts).unwrap();
        assert_eq!(t.shape(with.hidden), (4, 8));
        assert!(t.value(with.hidden).max_abs_diff(t.value(base.hidden)) > 0.0);
        let none = t.constant(Matrix::zeros(0, 8));
        let opts = ForwardOptions { extra_positions: Some(none), ..Default::default() };
        let empty = forward(&mut t, &enc, &s, opts).unwrap();
        assert_eq!(t.value(empty.hidden), t.value(base.hidden));
    }

    #[test]
    fn forward_is_deterministic() {
        let params = EncoderParams::<f32>::init(config()).unwrap();
        let s = seq(&[2, 5, 6, 7, 8, 3]);
        let run = || {
            let mut t = Tape::new();
            let enc = params.bind(&mut t, false);
            let tr = forward(&mut t, &enc, &s, ForwardOptions::default()).unwrap();
            t.value(tr.hidden).clone()
        };
        assert_eq!(run(), run());
    }
}
