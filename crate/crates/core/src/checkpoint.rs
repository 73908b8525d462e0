//! `BENET1` checkpoint format.
//!
//! ```text
//! magic       6 bytes   "BENET1"
//! count       u64 LE    number of records
//! record*     name_len u32 LE, name (UTF-8), rank u32 LE,
//!             rank × extent u64 LE, product(extents) × f64 LE values
//! ```
//!
//! Record names:
//!
//! * `config.channels`, `config.image_size`, `config.stage_channels`,
//!   `config.patch_size`, `config.hidden_width`, `config.use_lsa`
//! * every model parameter under [`BENetModel::param_names`]
//! * `detector.theta`, `detector.percentile`,
//!   `detector.calibration_values` (only when calibrated)

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::detector::DetectorState;
use crate::error::{Error, Result};
use crate::model::{BENetModel, EncoderDecoderConfig};
use crate::numerics::{Scalar, Tensor};

pub const MAGIC: &[u8; 6] = b"BENET1";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub tensor: Tensor<f64>,
}

impl Record {
    pub fn new(name: impl Into<String>, tensor: Tensor<f64>) -> Self {
        Self {
            name: name.into(),
            tensor,
        }
    }

    fn scalar(name: &str, v: f64) -> Self {
        Self::new(name, Tensor::scalar(v))
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        let name = r.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(r.tensor.rank() as u32).to_le_bytes())?;
        for &e in r.tensor.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in r.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated record header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated record header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Record>> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| bad("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    for i in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 4096 {
            return Err(bad(format!("record {i}: name length {len} is implausible")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| bad(format!("record {i}: truncated name")))?;
        let name = String::from_utf8(name).map_err(|_| bad(format!("record {i}: name is not UTF-8")))?;
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > 8 {
            return Err(bad(format!("record '{name}': unsupported rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&n| n > 0 && n < (1 << 31))
            .ok_or_else(|| bad(format!("record '{name}': bad extents {shape:?}")))?;
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw).map_err(|_| bad(format!("record '{name}': truncated values")))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push(Record::new(name, Tensor::new(&shape, data)?));
    }
    Ok(out)
}

/// Model parameters together with an optional calibrated detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: BENetModel<T>,
    pub detector: Option<DetectorState<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: BENetModel<T>, detector: Option<DetectorState<T>>) -> Self {
        Self { model, detector }
    }

    pub fn to_records(&self) -> Vec<Record> {
        let c = self.model.config();
        let mut records = vec![
            Record::scalar("config.channels", c.channels as f64),
            Record::scalar("config.image_size", c.image_size as f64),
            Record::new(
                "config.stage_channels",
                Tensor::new(
                    &[c.stage_channels.len()],
                    c.stage_channels.iter().map(|&v| v as f64).collect(),
                )
                .unwrap(),
            ),
            Record::scalar("config.patch_size", c.patch_size as f64),
            Record::scalar("config.hidden_width", c.hidden_width as f64),
            Record::scalar("config.use_lsa", if c.use_lsa { 1.0 } else { 0.0 }),
        ];
        for (name, t) in self.model.named_params() {
            records.push(Record::new(name, t.cast()));
        }
        if let Some(d) = &self.detector {
            if let Ok(theta) = d.theta() {
                records.push(Record::scalar("detector.theta", theta.to_f64_lossy()));
                records.push(Record::scalar("detector.percentile", d.percentile()));
                let vals: Vec<f64> = d.calibration_values().iter().map(|v| v.to_f64_lossy()).collect();
                if !vals.is_empty() {
                    records.push(Record::new(
                        "detector.calibration_values",
                        Tensor::new(&[vals.len()], vals).unwrap(),
                    ));
                }
            }
        }
        records
    }

    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let mut map: HashMap<String, Tensor<f64>> = HashMap::new();
        for r in records {
            if map.insert(r.name.clone(), r.tensor).is_some() {
                return Err(bad(format!("duplicate record '{}'", r.name)));
            }
        }
        let mut take = |name: &str| map.remove(name).ok_or_else(|| bad(format!("missing record '{name}'")));
        let single = |t: Tensor<f64>, name: &str| -> Result<f64> {
            match t.data() {
                &[v] if v.is_finite() => Ok(v),
                _ => Err(bad(format!("record '{name}' is not a finite scalar"))),
            }
        };
        let as_usize = |t: Tensor<f64>, name: &str| -> Result<usize> {
            let v = single(t, name)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(bad(format!("record '{name}' is not a nonnegative integer")));
            }
            Ok(v as usize)
        };

        let config = EncoderDecoderConfig {
            channels: as_usize(take("config.channels")?, "config.channels")?,
            image_size: as_usize(take("config.image_size")?, "config.image_size")?,
            stage_channels: {
                let t = take("config.stage_channels")?;
                if t.data().iter().any(|&v| !(v >= 0.0 && v.fract() == 0.0)) {
                    return Err(bad("record 'config.stage_channels' holds non-integer values"));
                }
                t.data().iter().map(|&v| v as usize).collect()
            },
            patch_size: as_usize(take("config.patch_size")?, "config.patch_size")?,
            hidden_width: as_usize(take("config.hidden_width")?, "config.hidden_width")?,
            use_lsa: single(take("config.use_lsa")?, "config.use_lsa")? != 0.0,
        };
        let mut model = BENetModel::<T>::new(config, 0)?;
        let mut values = Vec::new();
        for name in model.param_names() {
            let t = take(&name)?;
            if !t.all_finite() {
                return Err(bad(format!("record '{name}' holds non-finite values")));
            }
            values.push(t.cast());
        }
        model.set_params(values)?;

        let detector = match take("detector.theta") {
            Ok(theta) => {
                let theta = single(theta, "detector.theta")?;
                let percentile = single(take("detector.percentile")?, "detector.percentile")?;
                let vals = take("detector.calibration_values")
                    .map(|t| t.data().iter().map(|&v| T::from_f64_lossy(v)).collect())
                    .unwrap_or_default();
                Some(DetectorState::from_parts(T::from_f64_lossy(theta), vals, percentile)?)
            }
            Err(_) => None,
        };
        if let Some(extra) = map.keys().next() {
            return Err(bad(format!("unexpected record '{extra}'")));
        }
        Ok(Self { model, detector })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_records(&mut buf, &self.to_records()).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_records(read_records(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = File::create(path)?;
        write_records(BufWriter::new(f), &self.to_records())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = File::open(path)?;
        Self::from_records(read_records(BufReader::new(f))?)
    }
}
