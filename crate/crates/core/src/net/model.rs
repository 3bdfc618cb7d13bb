//! Forward passes of the transformer generator, discriminator and auxiliary
//! decoder, compiled from a [`NetworkWeights`] container.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{BBox, Label, Layout};
use crate::net::layers::{open_sigmoid, sigmoid, softmax, vector, Mlp, Transformer};
use crate::net::weights::{Hyperparameters, NetworkWeights};
use crate::net::LatentCodes;

/// Probabilities below this are floored before taking a logarithm.
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
struct GeneratorNet {
    enc: Mlp,
    transformer: Transformer,
    dec: Mlp,
}

#[derive(Debug, Clone)]
struct DiscriminatorNet {
    enc: Mlp,
    h_const: DVector<f64>,
    transformer: Transformer,
    dec: Mlp,
}

#[derive(Debug, Clone)]
struct AuxDecoderNet {
    enc: Mlp,
    pos: DMatrix<f64>,
    transformer: Transformer,
    dec: Mlp,
}

/// The three networks, ready for inference.
#[derive(Debug, Clone)]
pub struct LayoutNet {
    hyper: Hyperparameters,
    vocabulary: Option<Vec<String>>,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    aux: AuxDecoderNet,
}

/// Output of the auxiliary decoder: one box and one label distribution per
/// reconstructed element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub boxes: Vec<[f64; 4]>,
    pub label_probs: Vec<Vec<f64>>,
}

/// Discriminator score plus the constant token's final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorOutput {
    pub score: f64,
    pub h_const: DVector<f64>,
}

/// Terms of the adversarial objective on one real layout and one latent code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanDiagnostics {
    pub d_real: f64,
    pub d_fake: f64,
    pub rec_loss: f64,
    /// `d_real - rec_loss + (1 - d_fake)`.
    pub total: f64,
}

fn one_hot_rows(prefix: &DMatrix<f64>, labels: &[Label], vocab: usize) -> DMatrix<f64> {
    let n = prefix.nrows();
    let p = prefix.ncols();
    let mut x = DMatrix::zeros(n, p + vocab);
    x.view_mut((0, 0), (n, p)).copy_from(prefix);
    for (i, &l) in labels.iter().enumerate() {
        x[(i, p + l)] = 1.0;
    }
    x
}

impl LayoutNet {
    pub fn new(weights: &NetworkWeights) -> Result<Self> {
        let hp = weights.hyper;
        let pos_t = weights.get("aux.pos")?;
        let pos = DMatrix::from_row_iterator(
            pos_t.shape[0],
            pos_t.shape[1],
            pos_t.data.iter().map(|&v| v as f64),
        );
        Ok(LayoutNet {
            hyper: hp,
            vocabulary: weights.vocabulary.clone(),
            gen: GeneratorNet {
                enc: Mlp::load(weights, "gen.enc")?,
                transformer: Transformer::load(weights, "gen")?,
                dec: Mlp::load(weights, "gen.dec")?,
            },
            disc: DiscriminatorNet {
                enc: Mlp::load(weights, "disc.enc")?,
                h_const: vector(weights, "disc.h_const")?,
                transformer: Transformer::load(weights, "disc")?,
                dec: Mlp::load(weights, "disc.dec")?,
            },
            aux: AuxDecoderNet {
                enc: Mlp::load(weights, "aux.enc")?,
                pos,
                transformer: Transformer::load(weights, "aux")?,
                dec: Mlp::load(weights, "aux.dec")?,
            },
        })
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn vocabulary(&self) -> Option<&[String]> {
        self.vocabulary.as_deref()
    }

    fn check_labels(&self, labels: &[Label]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::Validation("label set is empty".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.hyper.vocab_size) {
            return Err(Error::Validation(format!(
                "label {l} is outside the vocabulary of {} labels",
                self.hyper.vocab_size
            )));
        }
        Ok(())
    }

    /// Maps one latent vector per element to a box. No positional encoding is
    /// used, so permuting the `(z_i, l_i)` pairs permutes the output.
    pub fn generate(&self, z: &LatentCodes, labels: &[Label]) -> Result<Layout> {
        self.check_labels(labels)?;
        if z.rows() != labels.len() || z.dim() != self.hyper.d_z {
            return Err(Error::Validation(format!(
                "latent codes are {}x{}, expected {}x{}",
                z.rows(),
                z.dim(),
                labels.len(),
                self.hyper.d_z
            )));
        }
        let zm = DMatrix::from_row_slice(z.rows(), z.dim(), z.as_flat());
        let x = one_hot_rows(&zm, labels, self.hyper.vocab_size);
        let h = self.gen.transformer.forward(&self.gen.enc.forward(&x));
        let out = self.gen.dec.forward(&h);
        let boxes: Vec<BBox> = out
            .row_iter()
            .map(|r| BBox::new(open_sigmoid(r[0]), open_sigmoid(r[1]), open_sigmoid(r[2]), open_sigmoid(r[3])))
            .collect();
        Layout::from_parts(labels, &boxes)
    }

    /// Scores a layout (higher reads as more realistic) by reading the output
    /// of a learned constant token prepended to the element tokens.
    pub fn discriminate(&self, layout: &Layout) -> Result<DiscriminatorOutput> {
        let labels = layout.labels();
        self.check_labels(&labels)?;
        let n = layout.len();
        let mut coords = DMatrix::zeros(n, 4);
        for (i, b) in layout.boxes().iter().enumerate() {
            for (k, v) in b.to_array().into_iter().enumerate() {
                coords[(i, k)] = v;
            }
        }
        let h = self.disc.enc.forward(&one_hot_rows(&coords, &labels, self.hyper.vocab_size));
        let d = self.hyper.d_model;
        let mut tokens = DMatrix::zeros(n + 1, d);
        tokens.row_mut(0).copy_from(&self.disc.h_const.transpose());
        tokens.view_mut((1, 0), (n, d)).copy_from(&h);
        let out = self.disc.transformer.forward(&tokens);
        let h_const: DVector<f64> = out.row(0).transpose();
        let score = self.disc.dec.forward(&DMatrix::from_row_slice(1, d, h_const.as_slice()))[(0, 0)];
        Ok(DiscriminatorOutput { score, h_const })
    }

    pub fn positional_capacity(&self) -> usize {
        self.aux.pos.nrows()
    }

    /// Reconstructs `n` elements from the discriminator's constant-token state.
    pub fn reconstruct(&self, h_const: &DVector<f64>, n: usize) -> Result<Reconstruction> {
        let cap = self.positional_capacity();
        if n == 0 || n > cap {
            return Err(Error::Validation(format!(
                "cannot reconstruct {n} elements with {cap} positional embeddings"
            )));
        }
        let d = self.hyper.d_model;
        if h_const.len() != d {
            return Err(Error::SizeMismatch {
                what: "constant-token state",
                left: h_const.len(),
                right: d,
            });
        }
        let mut x = DMatrix::zeros(n, 2 * d);
        for i in 0..n {
            x.view_mut((i, 0), (1, d)).copy_from(&h_const.transpose());
            x.view_mut((i, d), (1, d)).copy_from(&self.aux.pos.row(i));
        }
        let h = self.aux.transformer.forward(&self.aux.enc.forward(&x));
        let out = self.aux.dec.forward(&h);
        let v = self.hyper.vocab_size;
        let mut boxes = Vec::with_capacity(n);
        let mut label_probs = Vec::with_capacity(n);
        for r in out.row_iter() {
            boxes.push([sigmoid(r[0]), sigmoid(r[1]), sigmoid(r[2]), sigmoid(r[3])]);
            let logits: Vec<f64> = (0..v).map(|k| r[4 + k]).collect();
            label_probs.push(softmax(&logits));
        }
        Ok(Reconstruction { boxes, label_probs })
    }

    /// Evaluates the adversarial objective terms without updating anything.
    pub fn gan_objective(&self, real: &Layout, z: &LatentCodes) -> Result<GanDiagnostics> {
        let real_out = self.discriminate(real)?;
        let rec = self.reconstruct(&real_out.h_const, real.len())?;
        let rec_loss = reconstruction_loss(&rec, real)?;
        let fake = self.generate(z, &real.labels())?;
        let d_fake = self.discriminate(&fake)?.score;
        Ok(GanDiagnostics {
            d_real: real_out.score,
            d_fake,
            rec_loss,
            total: real_out.score - rec_loss + (1.0 - d_fake),
        })
    }
}

/// Orders elements ascending by `(yc, xc, w, h)`.
pub fn lexicographic_order(layout: &Layout) -> Vec<usize> {
    let boxes = layout.boxes();
    let mut idx: Vec<usize> = (0..boxes.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ba, bb) = (&boxes[a], &boxes[b]);
        [ba.yc(), ba.xc(), ba.w(), ba.h()]
            .iter()
            .zip([bb.yc(), bb.xc(), bb.w(), bb.h()].iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    idx
}

/// Box MSE over all `4N` coordinates plus mean label cross-entropy, with the
/// target elements sorted lexicographically before pairing.
pub fn reconstruction_loss(pred: &Reconstruction, target: &Layout) -> Result<f64> {
    let n = target.len();
    if pred.boxes.len() != n || pred.label_probs.len() != n {
        return Err(Error::SizeMismatch {
            what: "reconstructed vs target elements",
            left: pred.boxes.len(),
            right: n,
        });
    }
    let elements = target.elements();
    let mut sq = 0.0;
    let mut ce = 0.0;
    for (k, &t) in lexicographic_order(target).iter().enumerate() {
        let e = &elements[t];
        for (p, y) in pred.boxes[k].iter().zip(e.bbox.to_array()) {
            sq += (p - y).powi(2);
        }
        let probs = &pred.label_probs[k];
        let p = *probs.get(e.label).ok_or_else(|| {
            Error::Validation(format!(
                "label {} outside the predicted distribution of size {}",
                e.label,
                probs.len()
            ))
        })?;
        ce -= p.max(PROB_FLOOR).ln();
    }
    Ok(sq / (4 * n) as f64 + ce / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Element;

    fn mini() -> Hyperparameters {
        Hyperparameters {
            d_model: 8,
            ffn_hidden: 4,
            heads: 2,
            blocks: 2,
            mlp_hidden: 6,
            d_z: 3,
            vocab_size: 5,
            max_elements: 6,
        }
    }

    fn sample_layout() -> Layout {
        Layout::new(vec![
            Element::new(0, BBox::new(0.3, 0.2, 0.4, 0.1)),
            Element::new(2, BBox::new(0.5, 0.6, 0.8, 0.3)),
            Element::new(1, BBox::new(0.7, 0.1, 0.2, 0.1)),
        ])
        .unwrap()
    }

    #[test]
    fn zero_network_fixed_points() {
        let net = LayoutNet::new(&NetworkWeights::zeros(mini()).unwrap()).unwrap();
        let z = LatentCodes::sample(3, 3, 1);
        let l = net.generate(&z, &[0, 1, 4]).unwrap();
        for b in l.boxes() {
            assert_eq!(b.to_array(), [0.5; 4]);
        }
        let d = net.discriminate(&sample_layout()).unwrap();
        assert_eq!(d.score, 0.0);
        let rec = net.reconstruct(&d.h_const, 1).unwrap();
        assert_eq!(rec.boxes.len(), 1);
        assert!((rec.label_probs[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_network_objective_arithmetic() {
        let net = LayoutNet::new(&NetworkWeights::zeros(mini()).unwrap()).unwrap();
        let real = sample_layout();
        let diag = net.gan_objective(&real, &LatentCodes::sample(3, 3, 2)).unwrap();
        assert_eq!(diag.d_real, 0.0);
        assert_eq!(diag.d_fake, 0.0);
        assert!((diag.total - (1.0 - diag.rec_loss)).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let net = LayoutNet::new(&NetworkWeights::random(mini(), 3).unwrap()).unwrap();
        assert!(net.generate(&LatentCodes::sample(2, 3, 0), &[0, 1, 2]).is_err());
        assert!(net.generate(&LatentCodes::sample(3, 4, 0), &[0, 1, 2]).is_err());
        assert!(net.generate(&LatentCodes::sample(1, 3, 0), &[5]).is_err());
        let h = DVector::zeros(8);
        assert!(net.reconstruct(&h, 7).is_err());
        assert!(net.reconstruct(&h, 0).is_err());
    }

    #[test]
    fn reconstruction_loss_cases() {
        let target = sample_layout();
        let order = lexicographic_order(&target);
        let els = target.elements();
        let boxes: Vec<[f64; 4]> = order.iter().map(|&i| els[i].bbox.to_array()).collect();
        let one_hot: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| (0..5).map(|k| if k == els[i].label { 1.0 } else { 0.0 }).collect())
            .collect();
        let perfect = Reconstruction {
            boxes: boxes.clone(),
            label_probs: one_hot,
        };
        assert_eq!(reconstruction_loss(&perfect, &target).unwrap(), 0.0);
        let uniform = Reconstruction {
            boxes,
            label_probs: vec![vec![0.2; 5]; 3],
        };
        let loss = reconstruction_loss(&uniform, &target).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);

        let shuffled = Layout::new(vec![els[2], els[0], els[1]]).unwrap();
        assert_eq!(
            reconstruction_loss(&perfect, &shuffled).unwrap(),
            reconstruction_loss(&perfect, &target).unwrap()
        );
        let short = Reconstruction {
            boxes: vec![[0.5; 4]],
            label_probs: vec![vec![0.2; 5]],
        };
        assert!(reconstruction_loss(&short, &target).is_err());
    }
}
