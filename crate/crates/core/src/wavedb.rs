//! Database of measured (or simulated) lens responses, one stored period per
//! drive wave, and the narrowest-range lookup used for planning.
//!
//! # File format
//!
//! All integers and floats are little-endian.
//!
//! | field | type |
//! |---|---|
//! | magic `FSWAVEDB` | 8 bytes |
//! | version (= 1) | u32 |
//! | grid start, grid step (V) | f64, f64 |
//! | grid count | u64 |
//! | sweep frequency (Hz) | f64 |
//! | sample period (s) | f64 |
//! | samples per entry | u64 |
//! | model: volts_full_scale, power_full_scale, time_constant, distortion, nominal_sample_period | 5 × f64 |
//! | model: settle_periods | u32 |
//! | entry count | u64 |
//! | per entry: v_min, v_max (V), then `samples per entry` powers (mm⁻¹) | f64, f64, n × f64 |

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::etl::{synth_etl_response, EtlModel, InputWave, OutputWaveform, VoltageGrid};
use crate::units::mm_inv_to_diopters;

const MAGIC: &[u8; 8] = b"FSWAVEDB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DbEntry {
    pub wave: InputWave,
    pub output: OutputWaveform,
    min: f64,
    max: f64,
}

impl DbEntry {
    pub fn new(wave: InputWave, output: OutputWaveform) -> Self {
        let (min, max) = (output.min(), output.max());
        Self {
            wave,
            output,
            min,
            max,
        }
    }

    pub fn output_min(&self) -> f64 {
        self.min
    }

    pub fn output_max(&self) -> f64 {
        self.max
    }

    pub fn covers(&self, low: f64, high: f64) -> bool {
        self.min <= low && self.max >= high
    }

    fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformDb {
    pub grid: VoltageGrid,
    pub frequency: f64,
    pub model: EtlModel,
    pub entries: Vec<DbEntry>,
}

/// One entry per grid pair `v_min <= v_max`, in row-major `(i, j ≥ i)` order.
pub fn build_db(grid: VoltageGrid, frequency: f64, model: &EtlModel) -> Result<WaveformDb> {
    if grid.count == 0 || !(grid.step > 0.0) {
        return Err(Error::Domain("voltage grid must be non-empty and increasing".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..grid.count)
        .flat_map(|i| (i..grid.count).map(move |j| (i, j)))
        .collect();
    let entries = pairs
        .par_iter()
        .map(|&(i, j)| {
            let wave = InputWave::new(grid.value(i), grid.value(j), frequency)?;
            Ok(DbEntry::new(wave, synth_etl_response(&wave, model)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WaveformDb {
        grid,
        frequency,
        model: *model,
        entries,
    })
}

/// Ordering used to pick among covering entries: narrowest output range,
/// then smallest drive amplitude, then lowest `(v_min, v_max)`.
fn preference(a: &DbEntry, b: &DbEntry) -> Ordering {
    a.width()
        .total_cmp(&b.width())
        .then_with(|| (a.wave.v_max - a.wave.v_min).total_cmp(&(b.wave.v_max - b.wave.v_min)))
        .then_with(|| a.wave.v_min.total_cmp(&b.wave.v_min))
        .then_with(|| a.wave.v_max.total_cmp(&b.wave.v_max))
}

impl WaveformDb {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, v_min: f64, v_max: f64) -> Option<&DbEntry> {
        self.entries
            .iter()
            .find(|e| e.wave.v_min == v_min && e.wave.v_max == v_max)
    }

    /// The entry with the narrowest output range that covers `[low, high]`.
    pub fn select_wave(&self, low: f64, high: f64) -> Result<&DbEntry> {
        if self.entries.is_empty() {
            return Err(Error::Domain("waveform database is empty".into()));
        }
        if !(low <= high) {
            return Err(Error::Domain(format!("target range [{low}, {high}] is inverted")));
        }
        self.entries
            .iter()
            .filter(|e| e.covers(low, high))
            .min_by(|a, b| preference(a, b))
            .ok_or(Error::RangeUnachievable {
                low_diopters: mm_inv_to_diopters(low),
                high_diopters: mm_inv_to_diopters(high),
            })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let n = self.entries.first().map_or(0, |e| e.output.len());
        let sample_period = self.entries.first().map_or(0.0, |e| e.output.sample_period);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_f64::<LittleEndian>(self.grid.start)?;
        w.write_f64::<LittleEndian>(self.grid.step)?;
        w.write_u64::<LittleEndian>(self.grid.count as u64)?;
        w.write_f64::<LittleEndian>(self.frequency)?;
        w.write_f64::<LittleEndian>(sample_period)?;
        w.write_u64::<LittleEndian>(n as u64)?;
        let m = &self.model;
        for v in [
            m.volts_full_scale,
            m.power_full_scale,
            m.time_constant,
            m.distortion,
            m.nominal_sample_period,
        ] {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u32::<LittleEndian>(m.settle_periods)?;
        w.write_u64::<LittleEndian>(self.entries.len() as u64)?;
        for e in &self.entries {
            if e.output.len() != n {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    "entries have differing sample counts",
                ));
            }
            w.write_f64::<LittleEndian>(e.wave.v_min)?;
            w.write_f64::<LittleEndian>(e.wave.v_max)?;
            for p in &e.output.samples {
                w.write_f64::<LittleEndian>(*p)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |what: &str| Error::Invalid(format!("waveform database: {what}"));
        let io = |e: std::io::Error| Error::Invalid(format!("waveform database: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let grid = VoltageGrid {
            start: r.read_f64::<LittleEndian>().map_err(io)?,
            step: r.read_f64::<LittleEndian>().map_err(io)?,
            count: r.read_u64::<LittleEndian>().map_err(io)? as usize,
        };
        let frequency = r.read_f64::<LittleEndian>().map_err(io)?;
        let sample_period = r.read_f64::<LittleEndian>().map_err(io)?;
        let n = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let mut f = [0.0; 5];
        for v in &mut f {
            *v = r.read_f64::<LittleEndian>().map_err(io)?;
        }
        let model = EtlModel {
            volts_full_scale: f[0],
            power_full_scale: f[1],
            time_constant: f[2],
            distortion: f[3],
            nominal_sample_period: f[4],
            settle_periods: r.read_u32::<LittleEndian>().map_err(io)?,
        };
        let count = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        if n == 0 && count > 0 {
            return Err(bad("entries without samples"));
        }
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let v_min = r.read_f64::<LittleEndian>().map_err(io)?;
            let v_max = r.read_f64::<LittleEndian>().map_err(io)?;
            let mut samples = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut samples).map_err(io)?;
            let wave = InputWave::new(v_min, v_max, frequency)?;
            entries.push(DbEntry::new(
                wave,
                OutputWaveform {
                    samples,
                    sample_period,
                },
            ));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            grid,
            frequency,
            model,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_db() -> WaveformDb {
        let grid = VoltageGrid {
            start: -0.01,
            step: 0.01,
            count: 5,
        };
        build_db(grid, 60.0, &EtlModel::default()).unwrap()
    }

    #[test]
    fn one_entry_per_ordered_pair() {
        let db = small_db();
        assert_eq!(db.len(), 15);
        assert!(db.entries.iter().all(|e| e.wave.v_min <= e.wave.v_max));
    }

    #[test]
    fn exact_cover_wins() {
        let db = small_db();
        let e = &db.entries[7];
        let got = db.select_wave(e.output_min(), e.output_max()).unwrap();
        assert_eq!(got.wave, e.wave);
    }

    #[test]
    fn zero_target_selects_flat_zero_wave() {
        let db = small_db();
        let e = db.select_wave(0.0, 0.0).unwrap();
        assert_eq!(e.wave.v_min, e.wave.v_max);
        assert!(e.output_min() == 0.0 && e.output_max() == 0.0);
    }

    #[test]
    fn unachievable_range() {
        let db = small_db();
        assert!(matches!(db.select_wave(0.0, 0.05), Err(Error::RangeUnachievable { .. })));
        assert!(db.select_wave(0.002, 0.001).is_err());
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let db = small_db();
        let mut buf = Vec::new();
        db.write_to(&mut buf).unwrap();
        let back = WaveformDb::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, db);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let db = small_db();
        let mut buf = Vec::new();
        db.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(WaveformDb::read_from(&mut bad.as_slice()).is_err());
        assert!(WaveformDb::read_from(&mut &buf[..buf.len() - 3]).is_err());
        let mut extra = buf;
        extra.push(0);
        assert!(WaveformDb::read_from(&mut extra.as_slice()).is_err());
    }
}
