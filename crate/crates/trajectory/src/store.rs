//! Binary store of named dense vectors: one header + packed f32 rows, with
//! a plain-text id sidecar (`<file>.ids`, line i names row i). Used for note
//! chunk embeddings, code embedding tables and exported admission
//! representations.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VSTR";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct VectorStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "vector dim must be positive");
        VectorStore {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Format(format!(
                "vector for {id} has length {}, store dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Format(format!("duplicate vector id {id}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_os_string();
        os.push(".ids");
        PathBuf::from(os)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u32::<LittleEndian>(self.dim as u32)?;
        out.write_u64::<LittleEndian>(self.ids.len() as u64)?;
        for v in &self.data {
            out.write_f32::<LittleEndian>(*v)?;
        }
        out.flush()?;
        let mut ids_out = BufWriter::new(std::fs::File::create(Self::sidecar(path))?);
        for id in &self.ids {
            writeln!(ids_out, "{id}")?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut file = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "{}: not a vector store (bad magic)",
                path.display()
            )));
        }
        let version = file.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported vector store version {version}",
                path.display()
            )));
        }
        let dim = file.read_u32::<LittleEndian>()? as usize;
        let count = file.read_u64::<LittleEndian>()? as usize;
        if dim == 0 {
            return Err(Error::Format(format!("{}: zero dim", path.display())));
        }
        let mut data = vec![0f32; dim * count];
        for v in data.iter_mut() {
            *v = file.read_f32::<LittleEndian>()?;
        }
        let ids_text = std::fs::read_to_string(Self::sidecar(path)).map_err(|e| {
            Error::Format(format!(
                "{}: missing id sidecar: {e}",
                Self::sidecar(path).display()
            ))
        })?;
        let ids: Vec<String> = ids_text.lines().map(|l| l.to_string()).collect();
        if ids.len() != count {
            return Err(Error::Format(format!(
                "{}: sidecar has {} ids, store has {} rows",
                path.display(),
                ids.len(),
                count
            )));
        }
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect::<HashMap<_, _>>();
        if index.len() != ids.len() {
            return Err(Error::Format(format!(
                "{}: duplicate ids in sidecar",
                path.display()
            )));
        }
        Ok(VectorStore {
            dim,
            ids,
            index,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.bin");
        let mut store = VectorStore::new(3);
        store.insert("a", &[1.0, 2.0, 3.0]).unwrap();
        store.insert("b", &[-1.0, 0.5, 0.0]).unwrap();
        store.write(&path).unwrap();
        let back = VectorStore::read(&path).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("a").unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(back.get("b").unwrap(), &[-1.0, 0.5, 0.0]);
        assert!(back.get("c").is_none());
    }

    #[test]
    fn wrong_length_rejected() {
        let mut store = VectorStore::new(3);
        assert!(store.insert("a", &[1.0]).is_err());
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut store = VectorStore::new(2);
        store.insert("a", &[1.0, 2.0]).unwrap();
        assert!(store.insert("a", &[3.0, 4.0]).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(VectorStore::read(&path).is_err());
    }
}
