//! The neural sentence classifiers: trainable embedding layer, an LSTM,
//! BiLSTM or convolutional encoder, a rectified dense layer and a softmax
//! output layer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{
    bilstm_backward, bilstm_forward, dropout_apply, softmax_xent, softmax_xent_backward, Activation,
    BiLstmTrace, ConvPool, ConvPoolTrace, Dense, DenseTrace, Lstm, LstmTrace, Mode, Parameter, Tensor,
};
use crate::rng::Rng;

/// Filter widths of the convolutional encoder.
pub const CNN_WIDTHS: [usize; 3] = [2, 3, 4];

/// One input position: a row of the embedding table, or a fixed vector for
/// words never seen when the model was built.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Row(usize),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Lstm(Lstm),
    BiLstm { forward: Lstm, backward: Lstm },
    Cnn { conv: ConvPool, seq_len: usize },
}

impl Encoder {
    fn output_dim(&self) -> usize {
        match self {
            Encoder::Lstm(l) => l.hidden_dim(),
            Encoder::BiLstm { forward, backward } => forward.hidden_dim() + backward.hidden_dim(),
            Encoder::Cnn { conv, seq_len } => conv.output_dim(*seq_len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Lstm,
    BiLstm,
    Cnn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetShape {
    pub encoder: EncoderKind,
    /// Dense layer width.
    pub hidden: usize,
    pub classes: usize,
    pub dropout: f64,
    /// LSTM state size (per direction).
    pub recurrent: usize,
    /// Filters per convolution width.
    pub filters: usize,
    /// Fixed input length of the convolutional encoder.
    pub seq_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentNet {
    pub embeddings: Parameter,
    pub encoder: Encoder,
    pub dense: Dense,
    pub output: Dense,
    pub dropout: f64,
}

enum EncoderTrace {
    Lstm(LstmTrace),
    BiLstm(BiLstmTrace),
    Cnn(ConvPoolTrace),
}

/// Everything the backward pass needs from one forward pass.
pub struct NetTrace {
    slots: Vec<Slot>,
    rows: usize,
    input_mask: Vec<f64>,
    encoder: EncoderTrace,
    encoded: Vec<f64>,
    encoded_mask: Vec<f64>,
    dense: DenseTrace,
    activations: Vec<f64>,
    output: DenseTrace,
}

impl SentimentNet {
    pub fn new(embeddings: Tensor, shape: &NetShape, rng: &mut Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&shape.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", shape.dropout)));
        }
        if embeddings.shape().len() != 2 || embeddings.shape()[1] == 0 {
            return Err(Error::shape("V x d embedding table", format!("{:?}", embeddings.shape())));
        }
        let d = embeddings.shape()[1];
        let encoder = match shape.encoder {
            EncoderKind::Lstm => Encoder::Lstm(Lstm::new(d, shape.recurrent, rng)),
            EncoderKind::BiLstm => Encoder::BiLstm {
                forward: Lstm::new(d, shape.recurrent, rng),
                backward: Lstm::new(d, shape.recurrent, rng),
            },
            EncoderKind::Cnn => Encoder::Cnn {
                conv: ConvPool::new(&CNN_WIDTHS, d, shape.filters, rng),
                seq_len: shape.seq_len.max(CNN_WIDTHS[2]),
            },
        };
        let dense = Dense::new(encoder.output_dim(), shape.hidden, Activation::Relu, rng);
        let output = Dense::new(shape.hidden, shape.classes, Activation::Identity, rng);
        Ok(SentimentNet {
            embeddings: Parameter::new(embeddings),
            encoder,
            dense,
            output,
            dropout: shape.dropout,
        })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.value.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.output.output_dim()
    }

    fn input_matrix(&self, slots: &[Slot]) -> (Vec<f64>, usize) {
        let d = self.dim();
        let rows = match &self.encoder {
            Encoder::Cnn { seq_len, .. } => *seq_len,
            _ => slots.len(),
        };
        let mut x = vec![0.0; rows * d];
        for (k, slot) in slots.iter().take(rows).enumerate() {
            let v = match slot {
                Slot::Row(r) => self.embeddings.value.row(*r),
                Slot::Fixed(v) => v.as_slice(),
            };
            x[k * d..(k + 1) * d].copy_from_slice(v);
        }
        (x, rows)
    }

    /// Class logits. `rng` drives dropout and is untouched in inference mode.
    pub fn forward(&self, slots: &[Slot], mode: Mode, rng: &mut Rng) -> Result<(Vec<f64>, NetTrace)> {
        if slots.is_empty() {
            return Err(Error::invalid("empty input sequence"));
        }
        let (x, rows) = self.input_matrix(slots);
        let (x, input_mask) = dropout_apply(&x, self.dropout, mode, rng);
        let (encoded, encoder, encoded_mask) = match &self.encoder {
            Encoder::Lstm(l) => {
                let (out, tr) = l.forward(&x)?;
                let n = out.final_hidden.len();
                (out.final_hidden, EncoderTrace::Lstm(tr), vec![1.0; n])
            }
            Encoder::BiLstm { forward, backward } => {
                let (out, tr) = bilstm_forward(forward, backward, &x)?;
                let n = out.len();
                (out, EncoderTrace::BiLstm(tr), vec![1.0; n])
            }
            Encoder::Cnn { conv, .. } => {
                let valid = slots.len().min(rows);
                let (feat, tr) = conv.forward(&x, valid)?;
                let (feat, mask) = dropout_apply(&feat, self.dropout, mode, rng);
                (feat, EncoderTrace::Cnn(tr), mask)
            }
        };
        let (activations, dense) = self.dense.forward(&encoded)?;
        let (logits, output) = self.output.forward(&activations)?;
        Ok((
            logits,
            NetTrace {
                slots: slots.to_vec(),
                rows,
                input_mask,
                encoder,
                encoded,
                encoded_mask,
                dense,
                activations,
                output,
            },
        ))
    }

    /// Cross-entropy loss and its gradient, accumulated into the layer
    /// parameters and `embedding_grad` (scaled by `weight`).
    pub fn backward(
        &mut self,
        trace: &NetTrace,
        gold: usize,
        weight: f64,
        embedding_grad: &mut BTreeMap<usize, Vec<f64>>,
    ) -> Result<f64> {
        let logits = crate::neural::dense_apply(
            &self.output.weight.value,
            &self.output.bias.value,
            &trace.activations,
            Activation::Identity,
        )?;
        let (probs, loss) = softmax_xent(&logits, gold)?;
        let d_logits: Vec<f64> = softmax_xent_backward(&probs, gold).iter().map(|g| g * weight).collect();
        let d_act = self.output.backward(&trace.activations, &trace.output, &d_logits);
        let d_enc = self.dense.backward(&trace.encoded, &trace.dense, &d_act);
        let d_enc: Vec<f64> = d_enc.iter().zip(&trace.encoded_mask).map(|(g, m)| g * m).collect();
        let dx = match (&mut self.encoder, &trace.encoder) {
            (Encoder::Lstm(l), EncoderTrace::Lstm(tr)) => {
                let h = l.hidden_dim();
                let mut d_hidden = vec![0.0; trace.rows * h];
                d_hidden[(trace.rows - 1) * h..].copy_from_slice(&d_enc);
                l.backward(tr, &d_hidden)
            }
            (Encoder::BiLstm { forward, backward }, EncoderTrace::BiLstm(tr)) => {
                bilstm_backward(forward, backward, tr, &d_enc)
            }
            (Encoder::Cnn { conv, .. }, EncoderTrace::Cnn(tr)) => conv.backward(tr, &d_enc),
            _ => unreachable!("trace produced by a different encoder"),
        };
        let d = self.dim();
        for (k, slot) in trace.slots.iter().take(trace.rows).enumerate() {
            if let Slot::Row(r) = slot {
                let row = embedding_grad.entry(*r).or_insert_with(|| vec![0.0; d]);
                for j in 0..d {
                    row[j] += dx[k * d + j] * trace.input_mask[k * d + j];
                }
            }
        }
        Ok(loss)
    }

    /// Dense parameters (everything except the embedding table).
    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = match &mut self.encoder {
            Encoder::Lstm(l) => l.params_mut(),
            Encoder::BiLstm { forward, backward } => {
                let mut v = forward.params_mut();
                v.extend(backward.params_mut());
                v
            }
            Encoder::Cnn { conv, .. } => conv.params_mut(),
        };
        out.extend(self.dense.params_mut());
        out.extend(self.output.params_mut());
        out
    }

    /// Every parameter under a stable name, embedding table first.
    pub fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = vec![("embeddings".to_string(), &self.embeddings)];
        match &self.encoder {
            Encoder::Lstm(l) => out.extend(lstm_names("lstm", l)),
            Encoder::BiLstm { forward, backward } => {
                out.extend(lstm_names("lstm_fwd", forward));
                out.extend(lstm_names("lstm_bwd", backward));
            }
            Encoder::Cnn { conv, .. } => {
                for c in &conv.convs {
                    out.push((format!("conv{}.weight", c.width), &c.weight));
                    out.push((format!("conv{}.bias", c.width), &c.bias));
                }
            }
        }
        out.push(("dense.weight".into(), &self.dense.weight));
        out.push(("dense.bias".into(), &self.dense.bias));
        out.push(("output.weight".into(), &self.output.weight));
        out.push(("output.bias".into(), &self.output.bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = vec![("embeddings".to_string(), &mut self.embeddings)];
        match &mut self.encoder {
            Encoder::Lstm(l) => out.extend(lstm_names_mut("lstm", l)),
            Encoder::BiLstm { forward, backward } => {
                out.extend(lstm_names_mut("lstm_fwd", forward));
                out.extend(lstm_names_mut("lstm_bwd", backward));
            }
            Encoder::Cnn { conv, .. } => {
                for c in &mut conv.convs {
                    let w = c.width;
                    out.push((format!("conv{w}.weight"), &mut c.weight));
                    out.push((format!("conv{w}.bias"), &mut c.bias));
                }
            }
        }
        out.push(("dense.weight".into(), &mut self.dense.weight));
        out.push(("dense.bias".into(), &mut self.dense.bias));
        out.push(("output.weight".into(), &mut self.output.weight));
        out.push(("output.bias".into(), &mut self.output.bias));
        out
    }
}

fn lstm_names<'a>(prefix: &str, l: &'a Lstm) -> [(String, &'a Parameter); 3] {
    [
        (format!("{prefix}.w_input"), &l.w_input),
        (format!("{prefix}.w_hidden"), &l.w_hidden),
        (format!("{prefix}.bias"), &l.bias),
    ]
}

fn lstm_names_mut<'a>(prefix: &str, l: &'a mut Lstm) -> [(String, &'a mut Parameter); 3] {
    let Lstm { w_input, w_hidden, bias } = l;
    [
        (format!("{prefix}.w_input"), w_input),
        (format!("{prefix}.w_hidden"), w_hidden),
        (format!("{prefix}.bias"), bias),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{numeric_gradient, relative_error, STEP};
    use crate::rng::seeded;

    fn shape(encoder: EncoderKind) -> NetShape {
        NetShape {
            encoder,
            hidden: 4,
            classes: 3,
            dropout: 0.0,
            recurrent: 3,
            filters: 2,
            seq_len: 5,
        }
    }

    #[test]
    fn whole_network_gradients() {
        for kind in [EncoderKind::Lstm, EncoderKind::BiLstm, EncoderKind::Cnn] {
            let mut rng = seeded(11);
            let table = Tensor::uniform(&[6, 3], 0.5, &mut rng);
            let mut net = SentimentNet::new(table, &shape(kind), &mut rng).unwrap();
            let slots = vec![Slot::Row(1), Slot::Row(4), Slot::Fixed(vec![0.1, -0.2, 0.3]), Slot::Row(1)];
            let (_, trace) = net.forward(&slots, Mode::Train, &mut rng).unwrap();
            let mut emb = BTreeMap::new();
            net.backward(&trace, 2, 1.0, &mut emb).unwrap();
            let analytic = net.dense.weight.grad.data().to_vec();
            let base = net.clone();
            let numeric = numeric_gradient(
                |w| {
                    let mut probe = base.clone();
                    probe.dense.weight.value.data_mut().copy_from_slice(w);
                    let (logits, _) = probe.forward(&slots, Mode::Inference, &mut seeded(0)).unwrap();
                    softmax_xent(&logits, 2).unwrap().1
                },
                base.dense.weight.value.data(),
                STEP,
            );
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!(relative_error(*a, *n) < 1e-4 || (a - n).abs() < 1e-9, "{kind:?}: {a} vs {n}");
            }
            let row = &emb[&4];
            let numeric = numeric_gradient(
                |v| {
                    let mut probe = base.clone();
                    probe.embeddings.value.row_mut(4).copy_from_slice(v);
                    let (logits, _) = probe.forward(&slots, Mode::Inference, &mut seeded(0)).unwrap();
                    softmax_xent(&logits, 2).unwrap().1
                },
                base.embeddings.value.row(4),
                STEP,
            );
            for (a, n) in row.iter().zip(&numeric) {
                assert!(relative_error(*a, *n) < 1e-4 || (a - n).abs() < 1e-9, "{kind:?}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn names_are_unique_and_cover_all_parameters() {
        let mut rng = seeded(2);
        for kind in [EncoderKind::Lstm, EncoderKind::BiLstm, EncoderKind::Cnn] {
            let mut net = SentimentNet::new(Tensor::zeros(&[3, 2]), &shape(kind), &mut rng).unwrap();
            let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
            let mut dedup = names.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), names.len());
            assert_eq!(net.params_mut().len() + 1, names.len());
        }
    }
}
