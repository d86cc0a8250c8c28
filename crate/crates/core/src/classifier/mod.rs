//! Stage two: food-type classification of eating windows.

pub mod swin;
pub mod window;

use std::path::Path;

use cuisine_nn::{adam_step, Checkpoint, Graph, SplitMix64, Tensor};
use serde_json::json;

use crate::error::{CoreError, Result};
use crate::fusion::{fuse_batch, fuse_window, Standardizer, CHANNELS};
use crate::imu::{WindowPair, NUM_FOODS};
use crate::train::{epoch_batches, TrainOptions};

pub use swin::{Swin, SwinConfig};
pub use window::WindowLayout;

pub const CHECKPOINT_KIND: &str = "classifier";
const PREDICT_BATCH: usize = 64;

pub const DEFAULT_CLASS_NAMES: [&str; NUM_FOODS] = [
    "Mixed Noodles",
    "Dumplings",
    "Noodle Soup",
    "Stir-fry",
    "Baozi",
    "Pancake",
    "Milk Tea",
    "Congee",
    "Fried Rice",
    "Soup",
    "Wontons",
];

pub fn default_class_names() -> Vec<String> {
    DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug)]
pub struct FoodClassifier {
    pub swin: Swin<f32>,
    pub standardizer: Standardizer,
    pub training: TrainOptions,
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedClassifier {
    pub loss_curve: Vec<f64>,
    pub train_accuracy: f64,
}

/// The default food names, extended with `class{i}` past the eleventh.
pub fn class_names_for(num_classes: usize) -> Vec<String> {
    (0..num_classes)
        .map(|i| DEFAULT_CLASS_NAMES.get(i).map_or_else(|| format!("class{i}"), |n| n.to_string()))
        .collect()
}

/// Food labels of a training set; every window needs one and the classes
/// present must be `0..k` without gaps.
pub fn training_labels(windows: &[WindowPair], num_classes: usize) -> Result<Vec<usize>> {
    if windows.is_empty() {
        return Err(CoreError::EmptyTrainingSet);
    }
    let labels = windows
        .iter()
        .enumerate()
        .map(|(index, w)| w.food().ok_or(CoreError::MissingLabel { index }))
        .collect::<Result<Vec<_>>>()?;
    let mut present = vec![false; num_classes];
    for &l in &labels {
        if l >= num_classes {
            return Err(CoreError::Nn(cuisine_nn::NnError::ClassOutOfRange {
                class: l,
                classes: num_classes,
            }));
        }
        present[l] = true;
    }
    let k = present.iter().rposition(|&p| p).map_or(0, |i| i + 1);
    if let Some(missing) = present[..k].iter().position(|&p| !p) {
        return Err(CoreError::ClassAbsent(missing));
    }
    Ok(labels)
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn train_classifier(windows: &[WindowPair], config: SwinConfig, opts: &TrainOptions) -> Result<(FoodClassifier, TrainedClassifier)> {
    config.validate()?;
    opts.validate()?;
    if config.in_channels != CHANNELS {
        return Err(CoreError::Config(format!("classifier expects {CHANNELS} input channels")));
    }
    let labels = training_labels(windows, config.num_classes)?;
    let standardizer = Standardizer::fit(windows)?;
    let inputs: Vec<Tensor<f32>> = windows.iter().map(|w| fuse_window(w, &standardizer)).collect();
    let mut swin = Swin::<f32>::new(config.clone(), opts.seed)?;
    let mut rng = SplitMix64::for_purpose(opts.seed, "classifier/train");
    let adam = opts.adam();
    let step = CHANNELS * config.seq_len;
    let mut loss_curve = Vec::with_capacity(opts.epochs);
    for _ in 0..opts.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        for batch in epoch_batches(inputs.len(), opts.batch_size, &mut rng) {
            let mut data = Vec::with_capacity(batch.len() * step);
            for &i in &batch {
                data.extend_from_slice(inputs[i].data());
            }
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let x = g.constant(Tensor::new(&[batch.len(), CHANNELS, config.seq_len], data)?);
            let logits = swin.forward(&mut g, x)?;
            let loss = g.cross_entropy(logits, &y)?;
            total += g.value(loss).item() as f64 * batch.len() as f64;
            count += batch.len();
            let grads = g.backward(loss);
            swin.params.zero_grad();
            swin.params.accumulate(&grads);
            adam_step(swin.params.params_mut(), &adam);
        }
        loss_curve.push(total / count as f64);
    }
    let model = FoodClassifier {
        swin,
        standardizer,
        training: opts.clone(),
        class_names: class_names_for(config.num_classes),
    };
    let probs = model.probabilities(windows)?;
    let hits = probs.iter().zip(&labels).filter(|(p, &l)| argmax(p) == l).count();
    let train_accuracy = hits as f64 / labels.len() as f64;
    Ok((model, TrainedClassifier { loss_curve, train_accuracy }))
}

impl FoodClassifier {
    /// Class probabilities per window.
    pub fn probabilities(&self, windows: &[WindowPair]) -> Result<Vec<Vec<f64>>> {
        let classes = self.swin.config.num_classes;
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(PREDICT_BATCH) {
            let refs: Vec<&WindowPair> = chunk.iter().collect();
            let p = self.swin.predict_proba(fuse_batch(&refs, &self.standardizer))?;
            out.extend(p.data().chunks(classes).map(|r| r.iter().map(|&v| v as f64).collect::<Vec<f64>>()));
        }
        Ok(out)
    }

    pub fn classify(&self, w: &WindowPair) -> Result<Vec<f64>> {
        Ok(self.probabilities(std::slice::from_ref(w))?.remove(0))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(json!({
            "kind": CHECKPOINT_KIND,
            "swin": self.swin.config,
            "standardizer": self.standardizer,
            "training": self.training,
            "class_names": self.class_names,
        }));
        for (name, t) in self.swin.named_tensors() {
            ck.insert(name, t)?;
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let c = &ck.config;
        if c.get("kind").and_then(|k| k.as_str()) != Some(CHECKPOINT_KIND) {
            return Err(CoreError::Config("checkpoint is not a classifier".into()));
        }
        let field = |name: &str| {
            c.get(name)
                .cloned()
                .ok_or_else(|| CoreError::Config(format!("classifier checkpoint lacks `{name}`")))
        };
        let config: SwinConfig = serde_json::from_value(field("swin")?)?;
        let standardizer: Standardizer = serde_json::from_value(field("standardizer")?)?;
        standardizer.validate()?;
        let class_names: Vec<String> = serde_json::from_value(field("class_names")?)?;
        if class_names.len() != config.num_classes {
            return Err(CoreError::Config(format!(
                "{} class names for {} classes",
                class_names.len(),
                config.num_classes
            )));
        }
        let mut swin = Swin::<f32>::new(config, 0)?;
        swin.load_named(&ck.tensors)?;
        Ok(FoodClassifier {
            swin,
            standardizer,
            training: serde_json::from_value(field("training")?)?,
            class_names,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
