//! Self-describing classifier checkpoints.
//!
//! A checkpoint stores the backbone config alongside every named parameter
//! tensor. Loading rebuilds the network from the embedded config; loading
//! weights into an existing classifier refuses any config, name, or shape
//! mismatch rather than silently skipping tensors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{build_backbone, BackboneConfig, Classifier};

const FORMAT_TAG: &str = "skelfuse.checkpoint.v1";

#[derive(Serialize, Deserialize)]
struct ParamDoc {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    config: BackboneConfig,
    params: BTreeMap<String, ParamDoc>,
}

pub fn save_checkpoint(clf: &mut Classifier, path: &Path) -> Result<()> {
    let mut params = BTreeMap::new();
    for p in clf.params() {
        params.insert(
            p.name.clone(),
            ParamDoc {
                shape: p.value.shape().to_vec(),
                data: p.value.iter().copied().collect(),
            },
        );
    }
    let doc = CheckpointDoc {
        format: FORMAT_TAG.to_string(),
        config: clf.config().clone(),
        params,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(BufWriter::new(file), &doc)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    Ok(())
}

fn read_doc(path: &Path) -> Result<CheckpointDoc> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: CheckpointDoc =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    if doc.format != FORMAT_TAG {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unknown checkpoint format '{}'", doc.format),
        });
    }
    Ok(doc)
}

/// Configs match when everything but the pretrained-weights pointer agrees.
fn configs_compatible(a: &BackboneConfig, b: &BackboneConfig) -> bool {
    let mut a = a.clone();
    let mut b = b.clone();
    a.pretrained_weights_path = None;
    b.pretrained_weights_path = None;
    a == b
}

fn apply_params(clf: &mut Classifier, doc: &CheckpointDoc, path: &Path) -> Result<()> {
    let mut model_names = Vec::new();
    {
        let ps = clf.params();
        for p in &ps {
            model_names.push(p.name.clone());
        }
    }
    for name in &model_names {
        if !doc.params.contains_key(name) {
            return Err(Error::CheckpointMismatch(format!(
                "{} is missing parameter '{name}'",
                path.display()
            )));
        }
    }
    if doc.params.len() != model_names.len() {
        let extra: Vec<_> = doc
            .params
            .keys()
            .filter(|k| !model_names.iter().any(|n| n == *k))
            .cloned()
            .collect();
        return Err(Error::CheckpointMismatch(format!(
            "{} holds parameters the model does not have: {extra:?}",
            path.display()
        )));
    }
    for p in clf.params() {
        let saved = &doc.params[&p.name];
        if saved.shape != p.value.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "parameter '{}' has shape {:?} in {}, model expects {:?}",
                p.name,
                saved.shape,
                path.display(),
                p.value.shape()
            )));
        }
        p.value = ArrayD::from_shape_vec(saved.shape.clone(), saved.data.clone()).map_err(|e| {
            Error::CheckpointMismatch(format!("parameter '{}': {e}", p.name))
        })?;
        p.zero_grad();
    }
    Ok(())
}

/// Load saved weights into an already-built classifier of matching config.
pub fn load_weights_into(clf: &mut Classifier, path: &Path) -> Result<()> {
    let doc = read_doc(path)?;
    if !configs_compatible(clf.config(), &doc.config) {
        return Err(Error::CheckpointMismatch(format!(
            "config in {} does not match the model being loaded into",
            path.display()
        )));
    }
    apply_params(clf, &doc, path)
}

/// Rebuild a classifier entirely from a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Classifier> {
    let doc = read_doc(path)?;
    let mut config = doc.config.clone();
    config.pretrained_weights_path = None;
    let mut clf = build_backbone(&config, 0)?;
    apply_params(&mut clf, &doc, path)?;
    Ok(clf)
}
