//! Binary file formats.
//!
//! Feature files (`GTPF`): magic, u32 row count, u32 column count, then
//! rows×cols little-endian f32 values in row-major order. The same container
//! holds clip features and word embeddings.
//!
//! Checkpoints (`GTPC`): magic, u32 format version, the dimension header
//! (d_v, d_w, hidden, d_f, h_p, layer count, K as u32), a variant tag byte,
//! activation / aggregation / adjacency flag bytes, f64 lambda and layer-norm
//! epsilon, then every parameter tensor in visit order as u32 rows, u32 cols,
//! and little-endian f32 data. Parameters are held f32-quantized during
//! training, so a save/load round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use gtp_core::interaction::Activation;
use gtp_core::model::{Model, ModelDims, Variant};
use gtp_core::Tensor;

use crate::error::CliError;

const FEATURE_MAGIC: &[u8; 4] = b"GTPF";
const CHECKPOINT_MAGIC: &[u8; 4] = b"GTPC";
const CHECKPOINT_VERSION: u32 = 1;

pub fn write_features(path: &Path, t: &Tensor) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_u32::<LittleEndian>(t.rows() as u32)?;
    w.write_u32::<LittleEndian>(t.cols() as u32)?;
    for v in t.data() {
        w.write_f32::<LittleEndian>(*v as f32)?;
    }
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Tensor, CliError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(CliError::Data(format!("{}: not a feature file", path.display())));
    }
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 28 {
        return Err(CliError::Data(format!("{}: bad dimensions {rows}x{cols}", path.display())));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let v = r.read_f32::<LittleEndian>()? as f64;
        if !v.is_finite() {
            return Err(CliError::Data(format!("{}: non-finite feature value", path.display())));
        }
        data.push(v);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(CliError::Data(format!("{}: trailing bytes", path.display())));
    }
    Ok(Tensor::from_vec(rows, cols, data))
}

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::Full => 0,
        Variant::NoGraph => 1,
        Variant::NoPointer => 2,
        Variant::NoMask => 3,
    }
}

fn variant_from(tag: u8) -> Option<Variant> {
    match tag {
        0 => Some(Variant::Full),
        1 => Some(Variant::NoGraph),
        2 => Some(Variant::NoPointer),
        3 => Some(Variant::NoMask),
        _ => None,
    }
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    let d = &model.dims;
    for v in [d.d_v, d.d_w, d.hidden, d.d_f, d.h_p, d.layer_count, d.k] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_u8(variant_tag(model.variant))?;
    w.write_u8(match d.activation {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    })?;
    w.write_u8(d.aggregate_pointer_input as u8)?;
    w.write_u8(d.per_layer_adjacency as u8)?;
    w.write_f64::<LittleEndian>(d.lambda)?;
    w.write_f64::<LittleEndian>(d.layer_norm_eps)?;
    let mut result = Ok(());
    model.visit(&mut |_, t| {
        if result.is_ok() {
            result = write_tensor(&mut w, t);
        }
    });
    result
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<(), CliError> {
    w.write_u32::<LittleEndian>(t.rows() as u32)?;
    w.write_u32::<LittleEndian>(t.cols() as u32)?;
    for v in t.data() {
        w.write_f32::<LittleEndian>(*v as f32)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model, CliError> {
    let bad = |msg: &str| CliError::Data(format!("{}: {msg}", path.display()));
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let mut dims_raw = [0usize; 7];
    for v in dims_raw.iter_mut() {
        *v = r.read_u32::<LittleEndian>()? as usize;
    }
    let variant =
        variant_from(r.read_u8()?).ok_or_else(|| bad("unknown variant tag"))?;
    let activation = match r.read_u8()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        _ => return Err(bad("unknown activation tag")),
    };
    let aggregate_pointer_input = r.read_u8()? != 0;
    let per_layer_adjacency = r.read_u8()? != 0;
    let lambda = r.read_f64::<LittleEndian>()?;
    let layer_norm_eps = r.read_f64::<LittleEndian>()?;
    if !lambda.is_finite() || lambda < 0.0 || !layer_norm_eps.is_finite() {
        return Err(bad("bad lambda or epsilon"));
    }
    let dims = ModelDims {
        d_v: dims_raw[0],
        d_w: dims_raw[1],
        hidden: dims_raw[2],
        d_f: dims_raw[3],
        h_p: dims_raw[4],
        layer_count: dims_raw[5],
        k: dims_raw[6],
        lambda,
        activation,
        layer_norm_eps,
        aggregate_pointer_input,
        per_layer_adjacency,
    };
    if dims.d_v == 0 || dims.d_w == 0 || dims.hidden == 0 || dims.k == 0 {
        return Err(bad("zero dimension in header"));
    }

    let mut model = Model::init(dims, variant, 0);
    let mut result = Ok(());
    model.visit_mut(&mut |name, t| {
        if result.is_ok() {
            result = read_tensor(&mut r, &name, t).map_err(|e| {
                CliError::Data(format!("{}: {e}", path.display()))
            });
        }
    });
    result?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(model)
}

fn read_tensor(r: &mut impl Read, name: &str, t: &mut Tensor) -> Result<(), String> {
    let io = |e: std::io::Error| format!("{name}: {e}");
    let rows = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    if rows != t.rows() || cols != t.cols() {
        return Err(format!(
            "{name}: stored shape {rows}x{cols} does not match expected {}x{}",
            t.rows(),
            t.cols()
        ));
    }
    for v in t.data_mut() {
        let x = r.read_f32::<LittleEndian>().map_err(io)? as f64;
        if !x.is_finite() {
            return Err(format!("{name}: non-finite parameter"));
        }
        *v = x;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gtp_core::model::{Model, ModelDims, Variant};

    #[test]
    fn feature_file_round_trips_f32_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.gtpf");
        let t = Tensor::from_vec(2, 3, vec![0.5, -1.25, 3.0, 0.1f32 as f64, 0.0, -0.0]);
        write_features(&path, &t).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn feature_file_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gtpf");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x80\x3f").unwrap();
        assert!(matches!(read_features(&path), Err(CliError::Data(_))));
    }

    #[test]
    fn feature_file_rejects_truncation_and_trailing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.gtpf");
        let t = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        write_features(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(read_features(&path).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        std::fs::write(&path, &extended).unwrap();
        assert!(read_features(&path).is_err());
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        for variant in [Variant::Full, Variant::NoGraph, Variant::NoPointer, Variant::NoMask] {
            let dims = ModelDims::tiny(4, 6, 3);
            let mut model = Model::init(dims, variant, 42);
            model.quantize_f32();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.gtpc");
            save_checkpoint(&path, &model).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back.variant, model.variant);
            let mut a = Vec::new();
            model.visit(&mut |n, t| a.push((n, t.clone())));
            let mut b = Vec::new();
            back.visit(&mut |n, t| b.push((n, t.clone())));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn checkpoint_rejects_shape_tampering() {
        let dims = ModelDims::tiny(4, 4, 3);
        let mut model = Model::init(dims, Variant::Full, 1);
        model.quantize_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gtpc");
        save_checkpoint(&path, &model).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // corrupt the stored hidden size
        bytes[16] = bytes[16].wrapping_add(1);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
