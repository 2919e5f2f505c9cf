use std::path::Path;

use super::attention::{attention_trace, AttentionMap, AttentionParams};
use super::classifier::ClassifierParams;
use crate::error::{Error, Result};
use crate::features::{ExtractorParams, InstanceFeatures, TileActivations, Trainable};
use crate::imaging::{RgbImage, TileRef};
use crate::linalg::{axpy, dot, log_sum_exp, softmax, Matrix};
use crate::params::Parameters;
use crate::tensor_io::{load_tensors, save_tensors, NamedTensor};

/// One slide as a bag of tiles with a slide-level label.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub slide_id: String,
    pub tiles: Vec<RgbImage>,
    pub tile_refs: Vec<TileRef>,
    pub label: usize,
}

impl Bag {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

/// Extractor plus attention head plus classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MilModel {
    pub extractor: ExtractorParams,
    pub attention: AttentionParams,
    pub classifier: ClassifierParams,
}

/// Everything the forward pass produces, for selection and visualization.
#[derive(Debug, Clone)]
pub struct MilOutput {
    pub probs: Vec<f64>,
    pub alpha: AttentionMap,
    pub features: InstanceFeatures,
}

impl MilModel {
    pub fn new(extractor: ExtractorParams, hidden: usize, classes: usize, seed: u64) -> Self {
        let d = extractor.feature_dim();
        Self {
            extractor,
            attention: AttentionParams::init(hidden, d, seed),
            classifier: ClassifierParams::init(classes, d, seed),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut tensors = vec![NamedTensor::new("meta.input_side", vec![1], vec![self.extractor.input_side() as f64])];
        tensors.extend(self.to_tensors(""));
        save_tensors(path, &tensors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&load_tensors(path)?)
    }

    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
        };
        let side = find("meta.input_side")?.data.first().copied().unwrap_or(0.0) as usize;
        let embed = find("extractor.embed.weight")?;
        let w_v = find("attention.w_v")?;
        let w_c = find("classifier.w_c")?;
        if embed.shape.len() != 2 || w_v.shape.len() != 2 || w_c.shape.len() != 2 {
            return Err(Error::Format("weight tensors must be rank 2".into()));
        }
        let mut model = Self {
            extractor: ExtractorParams::zeros(side, embed.shape[0])?,
            attention: AttentionParams::zeros(w_v.shape[0], w_v.shape[1]),
            classifier: ClassifierParams::zeros(w_c.shape[0], w_c.shape[1]),
        };
        model.load_tensors(tensors, "")?;
        Ok(model)
    }
}

impl Parameters for MilModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.extractor.visit(&mut |n, s, d| f(&format!("extractor.{n}"), s, d));
        self.attention.visit(&mut |n, s, d| f(&format!("attention.{n}"), s, d));
        self.classifier.visit(&mut |n, s, d| f(&format!("classifier.{n}"), s, d));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.extractor.visit_mut(&mut |n, d| f(&format!("extractor.{n}"), d));
        self.attention.visit_mut(&mut |n, d| f(&format!("attention.{n}"), d));
        self.classifier.visit_mut(&mut |n, d| f(&format!("classifier.{n}"), d));
    }
}

/// Gradients of the attention head and classifier.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub attention: AttentionParams,
    pub classifier: ClassifierParams,
}

/// Forward pass of the head on precomputed features.
pub fn head_forward(v: &InstanceFeatures, att: &AttentionParams, clf: &ClassifierParams) -> Result<(Vec<f64>, AttentionMap)> {
    let trace = attention_trace(v, att)?;
    let alpha = AttentionMap { weights: trace.alpha };
    let z = super::attention::bag_embed(v, &alpha)?;
    Ok((softmax(&clf.logits(&z)?), alpha))
}

/// Cross-entropy of the bag label and its gradients with respect to the
/// head parameters and to every feature row.
pub fn head_loss_and_grads(
    v: &InstanceFeatures,
    label: usize,
    att: &AttentionParams,
    clf: &ClassifierParams,
) -> Result<(f64, HeadGrads, Matrix)> {
    let n = clf.num_classes();
    if label >= n {
        return Err(Error::InvalidArgument(format!("label {label} for {n} classes")));
    }
    let trace = attention_trace(v, att)?;
    let alpha = &trace.alpha;
    let k = v.rows;
    let mut z = vec![0.0; v.cols];
    for (i, &a) in alpha.iter().enumerate() {
        axpy(a, v.row(i), &mut z);
    }
    let logits = clf.logits(&z)?;
    let loss = log_sum_exp(&logits) - logits[label];
    if !loss.is_finite() {
        return Err(Error::NumericalFailure);
    }
    let mut d_s = softmax(&logits);
    d_s[label] -= 1.0;

    let mut g_clf = ClassifierParams::zeros(n, v.cols);
    for (c, &g) in d_s.iter().enumerate() {
        g_clf.b_c[c] = g;
        axpy(g, &z, g_clf.w_c.row_mut(c));
    }
    let d_z = clf.w_c.matvec_t(&d_s);

    // Softmax over attention logits: da_i = α_i (dα_i − Σ_j α_j dα_j).
    let d_alpha: Vec<f64> = (0..k).map(|i| dot(v.row(i), &d_z)).collect();
    let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
    let h = att.hidden_dim();
    let mut g_att = AttentionParams::zeros(h, v.cols);
    let mut d_v = Matrix::zeros(k, v.cols);
    for i in 0..k {
        let da = alpha[i] * (d_alpha[i] - mean);
        let hidden = trace.hidden.row(i);
        axpy(da, hidden, &mut g_att.u);
        let row = d_v.row_mut(i);
        axpy(alpha[i], &d_z, row);
        for j in 0..h {
            let d_pre = da * att.u[j] * (1.0 - hidden[j] * hidden[j]);
            if d_pre != 0.0 {
                axpy(d_pre, v.row(i), g_att.w_v.row_mut(j));
                axpy(d_pre, att.w_v.row(j), row);
            }
        }
    }
    Ok((loss, HeadGrads { attention: g_att, classifier: g_clf }, d_v))
}

/// Full forward pass: features, attention, embedding, class probabilities.
pub fn mil_forward(tiles: &[RgbImage], model: &MilModel) -> Result<MilOutput> {
    if tiles.is_empty() {
        return Err(Error::EmptyBag);
    }
    let features = crate::features::extract_features(tiles, &model.extractor)?;
    let (probs, alpha) = head_forward(&features, &model.attention, &model.classifier)?;
    Ok(MilOutput { probs, alpha, features })
}

/// Loss `−log p_y` and gradients for every model parameter. Extractor
/// gradients are filled according to `trainable` (zero when frozen).
pub fn loss_and_grads(tiles: &[RgbImage], label: usize, model: &MilModel, trainable: Trainable) -> Result<(f64, MilModel)> {
    if tiles.is_empty() {
        return Err(Error::EmptyBag);
    }
    let acts: Vec<TileActivations> = tiles.iter().map(|t| model.extractor.forward_cached(t)).collect::<Result<_>>()?;
    let d = model.extractor.feature_dim();
    let mut v = Matrix::zeros(acts.len(), d);
    for (i, a) in acts.iter().enumerate() {
        v.row_mut(i).copy_from_slice(&a.feature);
    }
    let (loss, head, d_v) = head_loss_and_grads(&v, label, &model.attention, &model.classifier)?;
    let mut grads = MilModel {
        extractor: model.extractor.zeros_like(),
        attention: head.attention,
        classifier: head.classifier,
    };
    if trainable != Trainable::Frozen {
        for (i, a) in acts.iter().enumerate() {
            model.extractor.backward(a, d_v.row(i), &mut grads.extractor, trainable);
        }
    }
    Ok((loss, grads))
}
