//! Paired low-dose datasets and the `CTFD` file format.
//!
//! File layout (little-endian): magic `CTFD`, version `u16`, then the header
//! `count u32, num_angles u32, num_detectors u32, image_size u32, detector_spacing f64,
//! pixel_spacing f64, photons_high f64, photons_low f64, clamp_floor f64, seed u64`, then
//! for every pair the `f32` arrays `reference`, `low_dose_sinogram`, `fbp`, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::phantom::{generate_phantom, PhantomFamily};
use super::{fbp_reconstruct, simulate_low_dose, Geometry, Image, NoiseModel, Sinogram};
use crate::error::{config_err, Error, Result};
use crate::rng::derive_seed;

pub const MAGIC: &[u8; 4] = b"CTFD";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4 + 8 * 5 + 8;

/// Settings for [`build_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    pub seed: u64,
    pub geometry: Geometry,
    pub family: PhantomFamily,
    /// Photons per bin for the measurement behind the reference reconstruction.
    pub photons_high: f64,
    /// Photons per bin for the simulated low-dose measurement.
    pub photons_low: f64,
    pub clamp_floor: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 2000,
            seed: 0,
            geometry: Geometry::default(),
            family: PhantomFamily::Ellipses,
            photons_high: 65536.0,
            photons_low: 4096.0,
            clamp_floor: 0.1,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.geometry.image_size < 16 {
            return Err(config_err!("image_size must be at least 16"));
        }
        for n0 in [self.photons_high, self.photons_low] {
            NoiseModel { photon_count: n0, clamp_floor: self.clamp_floor, seed: 0 }.validate()?;
        }
        if self.photons_high < self.photons_low {
            return Err(config_err!(
                "the reference measurement must not be noisier than the low-dose one: photons_high {} < photons_low {}",
                self.photons_high,
                self.photons_low
            ));
        }
        if self.count > u32::MAX as usize {
            return Err(config_err!("count {} exceeds the file format limit", self.count));
        }
        Ok(())
    }

    fn noise(&self, photons: f64, seed: u64) -> NoiseModel {
        NoiseModel { photon_count: photons, clamp_floor: self.clamp_floor, seed }
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            count: self.count,
            geometry: self.geometry,
            photons_high: self.photons_high,
            photons_low: self.photons_low,
            clamp_floor: self.clamp_floor,
            seed: self.seed,
        }
    }
}

/// `(reference, low-dose sinogram, FBP of the low-dose sinogram)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPair {
    pub reference: Image,
    pub low_dose_sinogram: Sinogram,
    pub fbp: Image,
}

/// Runs the two-stage simulation for item `index`: phantom → high-dose measurement →
/// reference FBP → low-dose measurement of the reference → FBP.
pub fn build_pair(config: &DatasetConfig, index: u64) -> Result<DataPair> {
    let g = &config.geometry;
    let item_seed = derive_seed(config.seed, index);
    let phantom = generate_phantom(derive_seed(item_seed, 0), g.image_size, config.family)?;
    let y_high = simulate_low_dose(&phantom, g, &config.noise(config.photons_high, derive_seed(item_seed, 1)))?;
    let reference = fbp_reconstruct(&y_high, g)?;
    let low_dose_sinogram = simulate_low_dose(&reference, g, &config.noise(config.photons_low, derive_seed(item_seed, 2)))?;
    let fbp = fbp_reconstruct(&low_dose_sinogram, g)?;
    Ok(DataPair { reference, low_dose_sinogram, fbp })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetHeader {
    pub count: usize,
    pub geometry: Geometry,
    pub photons_high: f64,
    pub photons_low: f64,
    pub clamp_floor: f64,
    pub seed: u64,
}

impl DatasetHeader {
    fn to_bytes(self) -> Vec<u8> {
        let g = self.geometry;
        let mut b = Vec::with_capacity(HEADER_LEN);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.count, g.num_angles, g.num_detectors, g.image_size] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [g.detector_spacing, g.pixel_spacing, self.photons_high, self.photons_low, self.clamp_floor] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.seed.to_le_bytes());
        b
    }

    fn from_bytes(b: &[u8], path: &Path) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::format(path, "truncated CTFD header"));
        }
        if &b[..4] != MAGIC {
            return Err(Error::format(path, "not a CTFD dataset (bad magic)"));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported dataset version {version}")));
        }
        let u = |i: usize| u32::from_le_bytes(b[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
        let f = |i: usize| f64::from_le_bytes(b[22 + 8 * i..30 + 8 * i].try_into().unwrap());
        let geometry = Geometry {
            num_angles: u(1),
            num_detectors: u(2),
            image_size: u(3),
            detector_spacing: f(0),
            pixel_spacing: f(1),
        };
        geometry.validate().map_err(|e| Error::format(path, format!("invalid geometry: {e}")))?;
        Ok(Self {
            count: u(0),
            geometry,
            photons_high: f(2),
            photons_low: f(3),
            clamp_floor: f(4),
            seed: u64::from_le_bytes(b[62..70].try_into().unwrap()),
        })
    }

    /// Manifest text: one `key=value` per line.
    pub fn manifest(&self, family: Option<PhantomFamily>) -> String {
        let g = &self.geometry;
        let mut m = format!(
            "format=CTFD\nversion={VERSION}\ncount={}\nnum_angles={}\nnum_detectors={}\nimage_size={}\n\
             detector_spacing={}\npixel_spacing={}\nphotons_high={}\nphotons_low={}\nclamp_floor={}\nseed={}\n",
            self.count,
            g.num_angles,
            g.num_detectors,
            g.image_size,
            g.detector_spacing,
            g.pixel_spacing,
            self.photons_high,
            self.photons_low,
            self.clamp_floor,
            self.seed
        );
        if let Some(f) = family {
            m.push_str(&format!("family={}\n", f.id()));
        }
        m.push_str("item_seed=seed^mix64(index)\n");
        m
    }
}

/// Loaded dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub pairs: Vec<DataPair>,
}

fn write_f32s(w: &mut impl Write, data: &[f64], path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for &v in data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn read_f32s(r: &mut impl Read, len: usize, path: &Path) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf).map_err(|_| Error::format(path, "truncated pair data"))?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

/// Streams pairs into a `CTFD` file.
pub struct DatasetWriter {
    out: BufWriter<File>,
    path: PathBuf,
    header: DatasetHeader,
    written: usize,
}

impl DatasetWriter {
    pub fn create(path: &Path, header: DatasetHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&header.to_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(Self { out, path: path.to_path_buf(), header, written: 0 })
    }

    pub fn push(&mut self, pair: &DataPair) -> Result<()> {
        let g = &self.header.geometry;
        g.check_image(pair.reference.size())?;
        g.check_image(pair.fbp.size())?;
        g.check_sinogram(pair.low_dose_sinogram.num_angles(), pair.low_dose_sinogram.num_detectors())?;
        if self.written == self.header.count {
            return Err(Error::Contract(format!("{}: header declares {} pairs", self.path.display(), self.header.count)));
        }
        write_f32s(&mut self.out, pair.reference.data(), &self.path)?;
        write_f32s(&mut self.out, pair.low_dose_sinogram.data(), &self.path)?;
        write_f32s(&mut self.out, pair.fbp.data(), &self.path)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.count {
            return Err(Error::Contract(format!(
                "{}: wrote {} of {} pairs",
                self.path.display(),
                self.written,
                self.header.count
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut header = dataset.header;
    header.count = dataset.pairs.len();
    let mut w = DatasetWriter::create(path, header)?;
    for p in &dataset.pairs {
        w.push(p)?;
    }
    w.finish()
}

pub fn read_dataset_header(path: &Path) -> Result<DatasetHeader> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut b = vec![0u8; HEADER_LEN];
    f.read_exact(&mut b).map_err(|_| Error::format(path, "truncated CTFD header"))?;
    DatasetHeader::from_bytes(&b, path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut b = vec![0u8; HEADER_LEN];
    r.read_exact(&mut b).map_err(|_| Error::format(path, "truncated CTFD header"))?;
    let header = DatasetHeader::from_bytes(&b, path)?;
    let g = header.geometry;
    let mut pairs = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let reference = Image::from_vec(g.image_size, read_f32s(&mut r, g.image_len(), path)?)?;
        let low_dose_sinogram =
            Sinogram::from_vec(g.num_angles, g.num_detectors, read_f32s(&mut r, g.sinogram_len(), path)?)?;
        let fbp = Image::from_vec(g.image_size, read_f32s(&mut r, g.image_len(), path)?)?;
        pairs.push(DataPair { reference, low_dose_sinogram, fbp });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after the declared pairs"));
    }
    Ok(Dataset { header, pairs })
}

/// Manifest path written next to a dataset file.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Simulate `config.count` pairs into `path` and write the manifest beside it.
pub fn build_dataset(config: &DatasetConfig, path: &Path) -> Result<DatasetHeader> {
    config.validate()?;
    let header = config.header();
    let mut w = DatasetWriter::create(path, header)?;
    for i in 0..config.count {
        w.push(&build_pair(config, i as u64)?)?;
    }
    w.finish()?;
    let manifest = manifest_path(path);
    std::fs::write(&manifest, header.manifest(Some(config.family))).map_err(|e| Error::io(&manifest, e))?;
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig { count: 3, geometry: Geometry::square(16, 10).unwrap(), ..Default::default() }
    }

    #[test]
    fn ordering_violation_rejected() {
        let mut c = small();
        c.photons_high = 100.0;
        c.photons_low = 1000.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.ctfd");
        let mut c = small();
        c.count = 0;
        build_dataset(&c, &p).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len() as usize, HEADER_LEN);
        let d = read_dataset(&p).unwrap();
        assert!(d.pairs.is_empty());
        assert!(std::fs::read_to_string(manifest_path(&p)).unwrap().contains("count=0"));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.ctfd");
        build_dataset(&small(), &p).unwrap();
        let d = read_dataset(&p).unwrap();
        assert_eq!(d.pairs.len(), 3);
        let q = dir.path().join("e.ctfd");
        write_dataset(&q, &d).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        assert_eq!(read_dataset(&q).unwrap().pairs, d.pairs);
    }

    #[test]
    fn bad_magic_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.ctfd");
        std::fs::write(&p, vec![0u8; 100]).unwrap();
        let e = read_dataset(&p).unwrap_err();
        assert!(e.to_string().contains("junk.ctfd"), "{e}");
    }
}
