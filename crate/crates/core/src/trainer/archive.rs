//! ECGW weight archives: `"ECGW"`, version u32, tensor count u32, then per
//! tensor name length u32, UTF-8 name, rank u32, dims u32 each and f32 data,
//! all little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{Result, TrainError};
use crate::neural::{InitScheme, Network, Tensor};

const MAGIC: &[u8; 4] = b"ECGW";
const VERSION: u32 = 1;
/// Guards allocation against corrupt headers.
const MAX_ELEMENTS: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightArchive {
    tensors: Vec<(String, Tensor<f32>)>,
}

impl WeightArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails on duplicate names.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(TrainError::CorruptTensor(format!("duplicate tensor name {name}")));
        }
        self.tensors.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Every parameter as `layer.weight` / `layer.bias`.
    pub fn from_network(net: &Network<f32>) -> Self {
        let mut a = Self::new();
        for p in net.params() {
            a.tensors.push((p.weight_name(), p.weight.clone()));
            a.tensors.push((p.bias_name(), p.bias.clone()));
        }
        a
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| TrainError::Io {
            path: String::new(),
            source: e,
        };
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            w.write_all(&buf).map_err(io)?;
            buf.clear();
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(io)
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| TrainError::Io {
            path: String::new(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(TrainError::BadMagic);
        }
        let mut cur = Cursor { bytes, pos: 4 };
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(TrainError::VersionUnsupported(version));
        }
        let count = cur.u32("tensor count")?;
        let mut archive = WeightArchive::new();
        for k in 0..count {
            let name_len = cur.u32("name length")? as usize;
            let name = std::str::from_utf8(cur.take(name_len, "name")?)
                .map_err(|_| TrainError::CorruptTensor(format!("tensor {k}: name is not UTF-8")))?
                .to_string();
            let rank = cur.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(cur.u32("dimension")? as usize);
            }
            let n = shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
            let n = match n {
                Some(n) if n <= MAX_ELEMENTS => n as usize,
                _ => return Err(TrainError::CorruptTensor(format!("{name}: implausible shape {shape:?}"))),
            };
            let raw = cur.take(n * 4, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::from_vec(shape, data).map_err(|e| TrainError::CorruptTensor(format!("{name}: {e}")))?;
            archive.insert(name, t)?;
        }
        if cur.pos != bytes.len() {
            return Err(TrainError::CorruptTensor(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| TrainError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w).map_err(|e| e.in_file(path))?;
        w.flush().map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(TrainError::CorruptTensor(format!(
                "truncated {what} at byte {} ({} bytes left, {n} needed)",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Checks that `archive` holds a tensor of the right shape for every
/// parameter of `net` except the one named `skip`.
fn validate(net: &Network<f32>, archive: &WeightArchive, skip: Option<&str>) -> Result<()> {
    for p in net.params() {
        if Some(p.name.as_str()) == skip {
            continue;
        }
        for (name, own) in [(p.weight_name(), &p.weight), (p.bias_name(), &p.bias)] {
            let t = archive.get(&name).ok_or_else(|| TrainError::MissingLayer(name.clone()))?;
            if t.shape() != own.shape() {
                return Err(TrainError::ShapeMismatch {
                    name,
                    expected: own.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
        }
    }
    Ok(())
}

/// Replaces every parameter of `net` with its archived value. Nothing is
/// modified unless all tensors are present with matching shapes.
pub fn load_weights(net: &mut Network<f32>, archive: &WeightArchive) -> Result<()> {
    validate(net, archive, None)?;
    for p in net.params_mut() {
        p.weight = archive.get(&p.weight_name()).expect("validated").clone();
        p.bias = archive.get(&p.bias_name()).expect("validated").clone();
    }
    Ok(())
}

/// Loads every layer except the profile's output layer from `archive` and
/// tags it with `lr_multiplier`. The output layer is re-initialized from
/// `seed` and trains at the full rate.
pub fn apply_transfer(net: &mut Network<f32>, archive: &WeightArchive, lr_multiplier: f64, seed: u64) -> Result<()> {
    let output = net.profile().output_layer().map(str::to_string);
    validate(net, archive, output.as_deref())?;
    for p in net.params_mut() {
        if Some(&p.name) == output.as_ref() {
            p.lr_multiplier = 1.0;
            continue;
        }
        p.weight = archive.get(&p.weight_name()).expect("validated").clone();
        p.bias = archive.get(&p.bias_name()).expect("validated").clone();
        p.lr_multiplier = lr_multiplier;
    }
    if let Some(name) = output {
        net.reinit_param(&name, InitScheme::Auto, seed)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::neural::ArchitectureProfile;

    fn random_archive(seed: u64) -> WeightArchive {
        let mut rng = crate::seed::rng(seed);
        let mut a = WeightArchive::new();
        for k in 0..5 {
            let rank = rng.random_range(0..4);
            let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..6)).collect();
            let n = shape.iter().product();
            let data = (0..n).map(|_| f32::from_bits(rng.random::<u32>() & 0xBFFF_FFFF)).collect();
            a.insert(format!("t{k}.weight"), Tensor::from_vec(shape, data).unwrap()).unwrap();
        }
        a
    }

    fn bytes(a: &WeightArchive) -> Vec<u8> {
        let mut b = Vec::new();
        a.write(&mut b).unwrap();
        b
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for seed in 0..20 {
            let a = random_archive(seed);
            let b = bytes(&a);
            let back = WeightArchive::from_bytes(&b).unwrap();
            assert_eq!(bytes(&back), b);
        }
    }

    #[test]
    fn layout_is_little_endian() {
        let mut a = WeightArchive::new();
        a.insert("w", Tensor::from_vec(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
        let b = bytes(&a);
        let mut want = b"ECGW".to_vec();
        for v in [1u32, 1, 1] {
            want.extend(v.to_le_bytes());
        }
        want.push(b'w');
        for v in [1u32, 2] {
            want.extend(v.to_le_bytes());
        }
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.0f32).to_le_bytes());
        assert_eq!(b, want);
    }

    #[test]
    fn errors() {
        let b = bytes(&random_archive(1));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(WeightArchive::from_bytes(&bad), Err(TrainError::BadMagic)));
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(matches!(WeightArchive::from_bytes(&bad), Err(TrainError::VersionUnsupported(9))));
        assert!(matches!(
            WeightArchive::from_bytes(&b[..b.len() - 3]),
            Err(TrainError::CorruptTensor(_))
        ));
        let mut a = WeightArchive::new();
        a.insert("x", Tensor::zeros(&[1])).unwrap();
        assert!(a.insert("x", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn self_transfer_keeps_all_but_output() {
        let p = ArchitectureProfile::tiny_1d();
        let src = Network::<f32>::new(p.clone(), InitScheme::Auto, 1).unwrap();
        let archive = WeightArchive::from_network(&src);
        let before = bytes(&archive);
        let mut dst = Network::<f32>::new(p, InitScheme::Auto, 2).unwrap();
        apply_transfer(&mut dst, &archive, 0.1, 3).unwrap();
        assert_eq!(bytes(&archive), before);
        for (a, b) in src.params().iter().zip(dst.params()) {
            if a.name == "fc3" {
                assert_ne!(a.weight, b.weight);
                assert_eq!(b.lr_multiplier, 1.0);
            } else {
                assert_eq!(a.weight, b.weight);
                assert_eq!(a.bias, b.bias);
                assert_eq!(b.lr_multiplier, 0.1);
            }
        }
    }

    #[test]
    fn output_layer_width_may_differ() {
        let src = Network::<f32>::new(ArchitectureProfile::tiny_2d().with_classes(1000), InitScheme::Auto, 1).unwrap();
        let archive = WeightArchive::from_network(&src);
        let mut dst = Network::<f32>::new(ArchitectureProfile::tiny_2d(), InitScheme::Auto, 2).unwrap();
        apply_transfer(&mut dst, &archive, 0.1, 3).unwrap();
        assert_eq!(dst.param("fc3").unwrap().weight.shape(), &[2, 128]);
        assert_eq!(dst.param("conv2").unwrap().weight, src.param("conv2").unwrap().weight);
    }

    #[test]
    fn missing_and_mismatched_layers() {
        let p = ArchitectureProfile::tiny_1d();
        let src = Network::<f32>::new(p.clone(), InitScheme::Auto, 1).unwrap();
        let full = WeightArchive::from_network(&src);
        let mut partial = WeightArchive::new();
        for n in full.names().filter(|n| !n.starts_with("conv2")) {
            partial.insert(n, full.get(n).unwrap().clone()).unwrap();
        }
        let mut dst = Network::<f32>::new(p.clone(), InitScheme::Auto, 2).unwrap();
        let snapshot = dst.clone();
        match apply_transfer(&mut dst, &partial, 0.1, 3) {
            Err(TrainError::MissingLayer(n)) => assert_eq!(n, "conv2.weight"),
            other => panic!("{other:?}"),
        }
        assert_eq!(dst, snapshot);
        let mut wrong = WeightArchive::new();
        for n in full.names() {
            let t = if n == "conv1.weight" { Tensor::zeros(&[8, 1, 5]) } else { full.get(n).unwrap().clone() };
            wrong.insert(n, t).unwrap();
        }
        assert!(matches!(
            apply_transfer(&mut dst, &wrong, 0.1, 3),
            Err(TrainError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn load_weights_restores_every_tensor() {
        let p = ArchitectureProfile::tiny_1d();
        let src = Network::<f32>::new(p.clone(), InitScheme::Auto, 1).unwrap();
        let archive = WeightArchive::from_network(&src);
        let mut dst = Network::<f32>::new(p.clone(), InitScheme::Auto, 2).unwrap();
        load_weights(&mut dst, &archive).unwrap();
        assert_eq!(dst.params(), src.params());
        let mut other = Network::<f32>::new(p.with_classes(3), InitScheme::Auto, 2).unwrap();
        let snapshot = other.clone();
        assert!(matches!(load_weights(&mut other, &archive), Err(TrainError::ShapeMismatch { .. })));
        assert_eq!(other, snapshot);
    }
}
