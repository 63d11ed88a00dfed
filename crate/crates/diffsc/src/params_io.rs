//! Codec parameters as JSON: a layout version, the architecture and every
//! named array.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use diffsc_core::codec::{init_codec, Arch, CodecParams};
use diffsc_core::rng::stream;
use diffsc_core::Shape;
use serde::{Deserialize, Serialize};

use crate::config::ConditioningName;
use crate::error::AppError;

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchFile {
    bottleneck: usize,
    snr_conditioning: ConditioningName,
    snr_range_db: [f64; 2],
    power_normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    layout_version: u32,
    shape: [usize; 3],
    compressed_len: usize,
    arch: ArchFile,
    arrays: BTreeMap<String, Vec<f64>>,
}

pub fn params_to_json(p: &CodecParams) -> String {
    let a = p.arch;
    let file = ParamsFile {
        layout_version: LAYOUT_VERSION,
        shape: [p.shape.w, p.shape.h, p.shape.c],
        compressed_len: p.compressed_len,
        arch: ArchFile {
            bottleneck: a.bottleneck,
            snr_conditioning: a.snr_conditioning.into(),
            snr_range_db: [a.snr_range_db.0, a.snr_range_db.1],
            power_normalize: a.power_normalize,
        },
        arrays: p.arrays().into_iter().map(|(n, v)| (n, v.to_vec())).collect(),
    };
    serde_json::to_string_pretty(&file).expect("params serialize")
}

pub fn params_from_json(text: &str) -> Result<CodecParams, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ParamsFile = serde_path_to_error::deserialize(de).map_err(|e| format!("at `{}`: {}", e.path(), e.inner()))?;
    if file.layout_version != LAYOUT_VERSION {
        return Err(format!(
            "layout_version {} is not supported (expected {LAYOUT_VERSION})",
            file.layout_version
        ));
    }
    let [w, h, c] = file.shape;
    let shape = Shape::new(w, h, c).map_err(|e| e.to_string())?;
    let arch = Arch {
        bottleneck: file.arch.bottleneck,
        snr_conditioning: file.arch.snr_conditioning.into(),
        snr_range_db: (file.arch.snr_range_db[0], file.arch.snr_range_db[1]),
        power_normalize: file.arch.power_normalize,
    };
    let k = file.compressed_len as f64 / shape.len() as f64;
    // Layout only; every array is overwritten below.
    let mut params = init_codec(shape, k, arch, &mut stream(0)).map_err(|e| e.to_string())?;
    let names: Vec<String> = params.arrays().into_iter().map(|(n, _)| n).collect();
    if let Some(extra) = file.arrays.keys().find(|k| !names.contains(k)) {
        return Err(format!("unknown array `{extra}`"));
    }
    for (name, slot) in names.iter().zip(params.arrays_mut()) {
        let values = file.arrays.get(name).ok_or_else(|| format!("missing array `{name}`"))?;
        if values.len() != slot.len() {
            return Err(format!("array `{name}` has {} values, expected {}", values.len(), slot.len()));
        }
        slot.copy_from_slice(values);
    }
    if !params.is_finite() {
        return Err("non-finite parameter values".into());
    }
    Ok(params)
}

pub fn save_params(p: &CodecParams, path: &Path) -> Result<(), AppError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, params_to_json(p)).map_err(|e| AppError::io(path, e))
}

pub fn load_params(path: &Path) -> Result<CodecParams, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    params_from_json(&text).map_err(|e| AppError::format(path, e))
}
