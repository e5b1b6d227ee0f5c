//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "HRFPARAM"
//! version  u32      1
//! layers   u32      L
//! L times: inputs u32, outputs u32, activation u8
//! L times: weights f64[outputs * inputs] (row-major), bias f64[outputs]
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, Layer, ParamSet};

pub const MAGIC: &[u8; 8] = b"HRFPARAM";
pub const VERSION: u32 = 1;

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 9 * params.layers().len() + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layers().len() as u32).to_le_bytes());
    for l in params.layers() {
        out.extend_from_slice(&(l.inputs() as u32).to_le_bytes());
        out.extend_from_slice(&(l.outputs() as u32).to_le_bytes());
        out.push(l.activation().tag());
    }
    for l in params.layers() {
        for v in l.weights().iter().chain(l.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.bad("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bad(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.origin.to_path_buf(),
            reason: reason.into(),
        }
    }
}

/// `origin` only labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<ParamSet> {
    let mut r = Reader {
        bytes,
        pos: 0,
        origin,
    };
    if r.take(8)? != MAGIC {
        return Err(r.bad("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.bad(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count == 0 || count > 1024 {
        return Err(r.bad(format!("implausible layer count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let tag = r.take(1)?[0];
        let act = Activation::from_tag(tag)
            .ok_or_else(|| r.bad(format!("unknown activation tag {tag}")))?;
        shapes.push((inputs, outputs, act));
    }
    let mut layers = Vec::with_capacity(count);
    for (inputs, outputs, act) in shapes {
        let weights = (0..inputs * outputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let bias = (0..outputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        layers.push(Layer::new(inputs, outputs, weights, bias, act).map_err(|e| r.bad(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(r.bad("trailing bytes"));
    }
    ParamSet::new(layers).map_err(|e| r.bad(e.to_string()))
}

/// Writes `params`, creating parent directories as needed.
pub fn save(params: &ParamSet, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamSet> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..12, depth in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sizes = vec![3];
            sizes.extend(std::iter::repeat_n(hidden, depth));
            sizes.push(2);
            let mut acts = vec![Activation::Tanh; depth];
            acts.push(Activation::Softmax);
            let params = ParamSet::random(&sizes, &acts, &mut rng).unwrap();
            let bytes = encode(&params);
            let back = decode(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(encode(&back), bytes);
            prop_assert!(back.flat().iter().zip(params.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_corruption() {
        let params = ParamSet::zeros(&[2, 2], &[Activation::Identity]).unwrap();
        let mut bytes = encode(&params);
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes, Path::new("x")), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.ckpt"));
    }
}
