//! Binary model checkpoints.
//!
//! Format (all integers little-endian):
//!
//! ```text
//! "ACTL"  magic
//! u32     format version (currently 1)
//! u8      normalization policy tag
//! u32     block count
//!   per block: u8 role (0 data, 1 label), u32 name length, name bytes,
//!              u32 dim count, u32 per dim
//! u32     layer count
//!   per layer: u8 activation tag,
//!              u8 connectivity kind (0 full, 1 local),
//!                full:  u32 fan_in, u32 fan_out
//!                local: u32 height, width, channels, units_per_site,
//!                       field, broadcast_len
//!              f32 weights, row-major, fan_in * fan_out entries
//! u64     FNV-1a checksum of every preceding byte
//! ```
//!
//! Weights are stored as `f32` regardless of the in-memory scalar type, so
//! an `f64` model round-trips through the nearest `f32` values; an `f32`
//! model round-trips bit-exactly.

use std::path::Path;

use crate::data::NormPolicy;
use crate::error::{Error, Result};
use crate::layers::{Activation, Connectivity, LayerState, LocalPattern};
use crate::numerics::{Mat, Scalar};

use super::{Block, BlockLayout, BlockRole, NetworkModel};

const MAGIC: &[u8; 4] = b"ACTL";
const VERSION: u32 = 1;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialize a model to the checkpoint byte format.
pub fn checkpoint_bytes<T: Scalar>(model: &NetworkModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    out.push(model.policy().tag());

    let blocks = model.layout().blocks();
    push_u32(&mut out, blocks.len() as u32);
    for b in blocks {
        out.push(match b.role {
            BlockRole::Data => 0,
            BlockRole::Label => 1,
        });
        push_u32(&mut out, b.name.len() as u32);
        out.extend_from_slice(b.name.as_bytes());
        push_u32(&mut out, b.dims.len() as u32);
        for &d in &b.dims {
            push_u32(&mut out, d as u32);
        }
    }

    push_u32(&mut out, model.layers().len() as u32);
    for layer in model.layers() {
        out.push(layer.activation().tag());
        match layer.connectivity() {
            Connectivity::Full { fan_in, fan_out } => {
                out.push(0);
                push_u32(&mut out, *fan_in as u32);
                push_u32(&mut out, *fan_out as u32);
            }
            Connectivity::Local(p) => {
                out.push(1);
                push_u32(&mut out, p.height() as u32);
                push_u32(&mut out, p.width() as u32);
                push_u32(&mut out, p.channels() as u32);
                push_u32(&mut out, p.units_per_site() as u32);
                push_u32(&mut out, p.field() as u32);
                push_u32(&mut out, p.broadcast_len() as u32);
            }
        }
        for &w in layer.weights().as_slice() {
            out.extend_from_slice(&(w.as64() as f32).to_le_bytes());
        }
    }

    let checksum = fnv1a(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

/// Write a model checkpoint to disk.
pub fn save_checkpoint<T: Scalar>(model: &NetworkModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

/// Read a model checkpoint from disk.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<NetworkModel<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    parse_checkpoint(&bytes, &path.display().to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    label: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.label,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let s = self.take(4, what)?;
        Ok(u32::from_le_bytes(s.try_into().unwrap()))
    }
}

/// Parse checkpoint bytes; `label` names the source in error messages.
pub fn parse_checkpoint<T: Scalar>(bytes: &[u8], label: &str) -> Result<NetworkModel<T>> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::format(label, "file too short to be a checkpoint"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().unwrap());
    let computed = fnv1a(body);
    if stored != computed {
        return Err(Error::format(
            label,
            format!("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"),
        ));
    }

    let mut r = Reader {
        bytes: body,
        pos: 0,
        label,
    };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(label, "bad magic; not a model checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            label,
            format!("unsupported checkpoint version {version} (expected {VERSION})"),
        ));
    }
    let policy = NormPolicy::from_tag(r.u8("normalization policy")?)
        .ok_or_else(|| Error::format(label, "unknown normalization policy tag"))?;

    let n_blocks = r.u32("block count")? as usize;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let role = match r.u8("block role")? {
            0 => BlockRole::Data,
            1 => BlockRole::Label,
            t => return Err(Error::format(label, format!("unknown block role tag {t}"))),
        };
        let name_len = r.u32("block name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "block name")?)
            .map_err(|_| Error::format(label, "block name is not UTF-8"))?
            .to_string();
        let n_dims = r.u32("block dim count")? as usize;
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(r.u32("block dim")? as usize);
        }
        blocks.push(Block { name, dims, role });
    }
    let layout = BlockLayout::new(blocks)?;

    let n_layers = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let act = Activation::from_tag(r.u8("activation tag")?)
            .ok_or_else(|| Error::format(label, "unknown activation tag"))?;
        let conn = match r.u8("connectivity kind")? {
            0 => Connectivity::Full {
                fan_in: r.u32("fan_in")? as usize,
                fan_out: r.u32("fan_out")? as usize,
            },
            1 => {
                let height = r.u32("height")? as usize;
                let width = r.u32("width")? as usize;
                let channels = r.u32("channels")? as usize;
                let units = r.u32("units_per_site")? as usize;
                let field = r.u32("field")? as usize;
                let broadcast = r.u32("broadcast_len")? as usize;
                Connectivity::Local(LocalPattern::new(
                    height, width, channels, units, field, broadcast,
                )?)
            }
            t => {
                return Err(Error::format(
                    label,
                    format!("unknown connectivity kind tag {t}"),
                ))
            }
        };
        let (fan_in, fan_out) = (conn.fan_in(), conn.fan_out());
        let raw = r.take(fan_in * fan_out * 4, "layer weights")?;
        let mut data = Vec::with_capacity(fan_in * fan_out);
        for chunk in raw.chunks_exact(4) {
            data.push(T::from64(
                f32::from_le_bytes(chunk.try_into().unwrap()) as f64
            ));
        }
        let w = Mat::from_vec(fan_in, fan_out, data)?;
        layers.push(LayerState::from_weights(w, conn, act)?);
    }
    if r.pos != body.len() {
        return Err(Error::format(
            label,
            format!("{} trailing bytes after the last layer", body.len() - r.pos),
        ));
    }
    NetworkModel::new(layout, policy, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn toy_model() -> NetworkModel<f32> {
        let layout = BlockLayout::new(vec![
            Block::new("image", vec![2, 3], BlockRole::Data),
            Block::new("label", vec![2], BlockRole::Label),
        ])
        .unwrap();
        let mut rng = SeededRng::new(7);
        NetworkModel::fully_connected(
            layout,
            NormPolicy::PerBlock,
            2,
            Activation::StdAbs,
            0.1,
            &mut rng,
        )
        .unwrap()
    }

    fn local_model() -> NetworkModel<f32> {
        let layout = BlockLayout::new(vec![
            Block::new("image", vec![1, 4, 4], BlockRole::Data),
            Block::new("label", vec![3], BlockRole::Label),
        ])
        .unwrap();
        let mut rng = SeededRng::new(11);
        let p = LocalPattern::new(4, 4, 1, 2, 3, 3).unwrap();
        let l1 = LayerState::init(Connectivity::Local(p), Activation::Abs, &mut rng, 0.1);
        let l2 = LayerState::init(
            Connectivity::Full {
                fan_in: 32,
                fan_out: 5,
            },
            Activation::SquareNorm,
            &mut rng,
            0.1,
        );
        NetworkModel::new(layout, NormPolicy::Joint, vec![l1, l2]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_for_f32() {
        for model in [toy_model(), local_model()] {
            let bytes = checkpoint_bytes(&model);
            let back: NetworkModel<f32> = parse_checkpoint(&bytes, "mem").unwrap();
            assert_eq!(back.policy(), model.policy());
            assert_eq!(back.layout(), model.layout());
            assert_eq!(back.layers().len(), model.layers().len());
            for (a, b) in back.layers().iter().zip(model.layers()) {
                assert_eq!(a.activation(), b.activation());
                assert_eq!(a.connectivity(), b.connectivity());
                assert_eq!(a.weights().as_slice(), b.weights().as_slice());
            }
            // Serializing the parsed model reproduces the bytes.
            assert_eq!(checkpoint_bytes(&back), bytes);
        }
    }

    #[test]
    fn round_trip_through_disk() {
        let model = toy_model();
        let dir = std::env::temp_dir().join(format!("actl-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.actl");
        save_checkpoint(&model, &path).unwrap();
        let back: NetworkModel<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(checkpoint_bytes(&back), checkpoint_bytes(&model));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn f64_model_saves_as_f32() {
        let layout = BlockLayout::new(vec![Block::new("x", vec![3], BlockRole::Data)]).unwrap();
        let mut rng = SeededRng::new(3);
        let model: NetworkModel<f64> = NetworkModel::fully_connected(
            layout,
            NormPolicy::PerBlock,
            1,
            Activation::Identity,
            0.1,
            &mut rng,
        )
        .unwrap();
        let bytes = checkpoint_bytes(&model);
        let back: NetworkModel<f64> = parse_checkpoint(&bytes, "mem").unwrap();
        for (a, b) in back.layers()[0]
            .weights()
            .as_slice()
            .iter()
            .zip(model.layers()[0].weights().as_slice())
        {
            assert_eq!(*a, *b as f32 as f64);
        }
        // A second trip is stable: the values are already f32-representable.
        assert_eq!(checkpoint_bytes(&back), bytes);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let mut bytes = checkpoint_bytes(&toy_model());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        let err = parse_checkpoint::<f32>(&bytes, "mem").unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = checkpoint_bytes(&toy_model());
        bytes[0] = b'X';
        // Fix up the checksum so the magic check itself is exercised.
        let n = bytes.len();
        let sum = fnv1a(&bytes[..n - 8]);
        bytes[n - 8..].copy_from_slice(&sum.to_le_bytes());
        let err = parse_checkpoint::<f32>(&bytes, "mem").unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut bytes = checkpoint_bytes(&toy_model());
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        let n = bytes.len();
        let sum = fnv1a(&bytes[..n - 8]);
        bytes[n - 8..].copy_from_slice(&sum.to_le_bytes());
        let err = parse_checkpoint::<f32>(&bytes, "mem").unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = checkpoint_bytes(&toy_model());
        let cut = &bytes[..bytes.len() - 20];
        let err = parse_checkpoint::<f32>(cut, "mem").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("checksum") || msg.contains("truncated") || msg.contains("short"),
            "{msg}"
        );
    }

    #[test]
    fn missing_file_reports_io_error() {
        let err = load_checkpoint::<f32>("/nonexistent/nowhere.actl").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
