//! Versioned binary snapshot of a parameter store, optional optimizer
//! state, and small named extras (rescaler bounds, class counts). Every
//! checkpoint records the config fingerprint it was trained under; loading
//! against a different fingerprint is refused.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::{Optimizer, ParamStore, Tensor2D};

const MAGIC: &[u8; 4] = b"TCKP";
const VERSION: u32 = 1;
const MAX_NAME_BYTES: u32 = 1 << 20;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step_count: u64,
    /// First and second moments, aligned with the parameter order.
    pub m: Vec<Tensor2D<f32>>,
    pub v: Vec<Tensor2D<f32>>,
    pub slow: Option<Vec<Tensor2D<f32>>>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub extras: BTreeMap<String, f64>,
    pub params: Vec<(String, Tensor2D<f32>)>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn capture(
        store: &ParamStore<f32>,
        optimizer: Option<&Optimizer<f32>>,
        fingerprint: &str,
    ) -> Self {
        let params = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.get(id).clone()))
            .collect();
        let optimizer = optimizer.map(|o| {
            let (m, v) = o.moments();
            OptimizerState {
                step_count: o.step_count,
                m: m.to_vec(),
                v: v.to_vec(),
                slow: o.slow_weights().map(|s| s.to_vec()),
            }
        });
        Checkpoint {
            fingerprint: fingerprint.to_string(),
            extras: BTreeMap::new(),
            params,
            optimizer,
        }
    }

    /// Copies saved tensors into a store that was initialised under the same
    /// configuration. Every saved parameter must exist with its saved shape.
    pub fn apply(&self, store: &mut ParamStore<f32>, expected_fingerprint: &str) -> Result<()> {
        if self.fingerprint != expected_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: expected_fingerprint.to_string(),
                found: self.fingerprint.clone(),
            });
        }
        if self.params.len() != store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} parameters, store has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (name, tensor) in &self.params {
            let id = store.id_of(name).ok_or_else(|| {
                Error::Format(format!("checkpoint parameter {name} missing from store"))
            })?;
            let target = store.get_mut(id);
            if target.shape() != tensor.shape() {
                return Err(Error::Format(format!(
                    "parameter {name}: checkpoint shape {:?}, store shape {:?}",
                    tensor.shape(),
                    target.shape()
                )));
            }
            *target = tensor.clone();
        }
        Ok(())
    }

    pub fn restore_optimizer(&self, optimizer: &mut Optimizer<f32>) -> Result<()> {
        let state = self.optimizer.as_ref().ok_or_else(|| {
            Error::Format("checkpoint carries no optimizer state".to_string())
        })?;
        if state.m.len() != self.params.len() {
            return Err(Error::Format(format!(
                "optimizer state covers {} parameters, checkpoint has {}",
                state.m.len(),
                self.params.len()
            )));
        }
        optimizer.restore(
            state.step_count,
            state.m.clone(),
            state.v.clone(),
            state.slow.clone(),
        );
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(VERSION)?;
        write_string(&mut out, &self.fingerprint)?;
        out.write_u32::<LittleEndian>(self.extras.len() as u32)?;
        for (name, value) in &self.extras {
            write_string(&mut out, name)?;
            out.write_f64::<LittleEndian>(*value)?;
        }
        out.write_u64::<LittleEndian>(self.params.len() as u64)?;
        for (name, tensor) in &self.params {
            write_string(&mut out, name)?;
            let (rows, cols) = tensor.shape();
            out.write_u32::<LittleEndian>(rows as u32)?;
            out.write_u32::<LittleEndian>(cols as u32)?;
            for v in tensor.data() {
                out.write_f32::<LittleEndian>(*v)?;
            }
        }
        match &self.optimizer {
            None => out.write_u8(0)?,
            Some(state) => {
                out.write_u8(1)?;
                out.write_u64::<LittleEndian>(state.step_count)?;
                write_aligned(&mut out, &state.m, &self.params)?;
                write_aligned(&mut out, &state.v, &self.params)?;
                match &state.slow {
                    None => out.write_u8(0)?,
                    Some(slow) => {
                        out.write_u8(1)?;
                        write_aligned(&mut out, slow, &self.params)?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut file = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "{}: not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = file.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let fingerprint = read_string(&mut file)?;
        let n_extras = file.read_u32::<LittleEndian>()?;
        let mut extras = BTreeMap::new();
        for _ in 0..n_extras {
            let name = read_string(&mut file)?;
            let value = file.read_f64::<LittleEndian>()?;
            extras.insert(name, value);
        }
        let n_params = file.read_u64::<LittleEndian>()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = read_string(&mut file)?;
            let rows = file.read_u32::<LittleEndian>()? as usize;
            let cols = file.read_u32::<LittleEndian>()? as usize;
            params.push((name, read_tensor(&mut file, rows, cols)?));
        }
        let optimizer = match file.read_u8()? {
            0 => None,
            1 => {
                let step_count = file.read_u64::<LittleEndian>()?;
                let m = read_aligned(&mut file, &params)?;
                let v = read_aligned(&mut file, &params)?;
                let slow = match file.read_u8()? {
                    0 => None,
                    1 => Some(read_aligned(&mut file, &params)?),
                    other => {
                        return Err(Error::Format(format!(
                            "{}: bad slow-weight flag {other}",
                            path.display()
                        )))
                    }
                };
                Some(OptimizerState {
                    step_count,
                    m,
                    v,
                    slow,
                })
            }
            other => {
                return Err(Error::Format(format!(
                    "{}: bad optimizer flag {other}",
                    path.display()
                )))
            }
        };
        Ok(Checkpoint {
            fingerprint,
            extras,
            params,
            optimizer,
        })
    }
}

fn write_string<W: Write>(out: &mut W, s: &str) -> Result<()> {
    out.write_u32::<LittleEndian>(s.len() as u32)?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(file: &mut R) -> Result<String> {
    let len = file.read_u32::<LittleEndian>()?;
    if len > MAX_NAME_BYTES {
        return Err(Error::Format(format!("unreasonable string length {len}")));
    }
    let mut buf = vec![0u8; len as usize];
    file.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("non-utf8 string: {e}")))
}

fn read_tensor<R: Read>(file: &mut R, rows: usize, cols: usize) -> Result<Tensor2D<f32>> {
    let mut data = vec![0f32; rows * cols];
    for v in data.iter_mut() {
        *v = file.read_f32::<LittleEndian>()?;
    }
    Ok(Tensor2D::from_flat(rows, cols, data))
}

/// Moment tensors share the shapes of their parameters, so only data is
/// stored.
fn write_aligned<W: Write>(
    out: &mut W,
    tensors: &[Tensor2D<f32>],
    params: &[(String, Tensor2D<f32>)],
) -> Result<()> {
    if tensors.len() != params.len() {
        return Err(Error::Format(format!(
            "optimizer tensors ({}) misaligned with parameters ({})",
            tensors.len(),
            params.len()
        )));
    }
    for (t, (name, p)) in tensors.iter().zip(params) {
        if t.shape() != p.shape() {
            return Err(Error::Format(format!(
                "optimizer tensor for {name} has shape {:?}, parameter {:?}",
                t.shape(),
                p.shape()
            )));
        }
        for v in t.data() {
            out.write_f32::<LittleEndian>(*v)?;
        }
    }
    Ok(())
}

fn read_aligned<R: Read>(
    file: &mut R,
    params: &[(String, Tensor2D<f32>)],
) -> Result<Vec<Tensor2D<f32>>> {
    params
        .iter()
        .map(|(_, p)| {
            let (rows, cols) = p.shape();
            read_tensor(file, rows, cols)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Grads, OptimizerConfig};
    use crate::rng;

    fn small_store() -> ParamStore<f32> {
        let mut store = ParamStore::new();
        let mut r = rng::stream(11, "ckpt-test", 0);
        store.add_weight("layer.w", 3, 2, &mut r);
        store.add_zeros("layer.b", 1, 2);
        store
    }

    fn stepped_optimizer(store: &mut ParamStore<f32>) -> Optimizer<f32> {
        let mut opt = Optimizer::new(store, OptimizerConfig::default());
        let mut grads = Grads::empty(store.len());
        grads.by_param[0] = Some(Tensor2D::from_fn(3, 2, |r, c| (r + c) as f32 * 0.1));
        grads.by_param[1] = Some(Tensor2D::from_fn(1, 2, |_, c| c as f32 - 0.5));
        opt.step(store, &grads).unwrap();
        opt.step(store, &grads).unwrap();
        opt
    }

    #[test]
    fn roundtrip_with_optimizer_and_extras() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = small_store();
        let opt = stepped_optimizer(&mut store);
        let mut ckpt = Checkpoint::capture(&store, Some(&opt), "abcd1234abcd1234");
        ckpt.extras.insert("rescaler.duration.min".into(), 0.25);
        ckpt.extras.insert("rescaler.duration.max".into(), 14.0);
        ckpt.write(&path).unwrap();

        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(back.fingerprint, "abcd1234abcd1234");
        assert_eq!(back.extras["rescaler.duration.min"], 0.25);
        assert_eq!(back.params.len(), 2);
        assert_eq!(back.params[0].0, "layer.w");
        assert_eq!(back.params[0].1.data(), store.get(store.id_of("layer.w").unwrap()).data());
        let state = back.optimizer.as_ref().unwrap();
        assert_eq!(state.step_count, 2);
        assert_eq!(state.m[0].data(), opt.moments().0[0].data());
        assert!(state.slow.is_none());
    }

    #[test]
    fn apply_restores_weights_into_fresh_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = small_store();
        stepped_optimizer(&mut store);
        Checkpoint::capture(&store, None, "fp").write(&path).unwrap();

        let mut fresh = small_store();
        assert_ne!(
            fresh.get(fresh.id_of("layer.w").unwrap()).data(),
            store.get(store.id_of("layer.w").unwrap()).data()
        );
        Checkpoint::read(&path).unwrap().apply(&mut fresh, "fp").unwrap();
        assert_eq!(
            fresh.get(fresh.id_of("layer.w").unwrap()).data(),
            store.get(store.id_of("layer.w").unwrap()).data()
        );
    }

    #[test]
    fn fingerprint_mismatch_refused() {
        let store = small_store();
        let ckpt = Checkpoint::capture(&store, None, "fp-a");
        let mut target = small_store();
        let err = ckpt.apply(&mut target, "fp-b").unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }));
    }

    #[test]
    fn shape_mismatch_refused() {
        let store = small_store();
        let mut ckpt = Checkpoint::capture(&store, None, "fp");
        ckpt.params[0].1 = Tensor2D::zeros(2, 2);
        let mut target = small_store();
        assert!(ckpt.apply(&mut target, "fp").is_err());
    }

    #[test]
    fn optimizer_restore_resumes_identically() {
        let mut store_a = small_store();
        let mut opt_a = stepped_optimizer(&mut store_a);
        let ckpt = Checkpoint::capture(&store_a, Some(&opt_a), "fp");

        let mut store_b = small_store();
        ckpt.apply(&mut store_b, "fp").unwrap();
        let mut opt_b = Optimizer::new(&store_b, OptimizerConfig::default());
        ckpt.restore_optimizer(&mut opt_b).unwrap();

        let mut grads = Grads::empty(store_a.len());
        grads.by_param[0] = Some(Tensor2D::from_fn(3, 2, |_, _| 0.3));
        grads.by_param[1] = Some(Tensor2D::from_fn(1, 2, |_, _| -0.2));
        opt_a.step(&mut store_a, &grads).unwrap();
        opt_b.step(&mut store_b, &grads).unwrap();
        for id in store_a.ids() {
            assert_eq!(store_a.get(id).data(), store_b.get(id).data());
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let store = small_store();
        Checkpoint::capture(&store, None, "fp").write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(Checkpoint::read(&path).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        assert!(Checkpoint::read(&path).is_err());
    }
}
