//! Analytic performance models: cache block size, code balance, ECM and
//! Roofline.
//!
//! Cache-block and code-balance results are exact rationals; conversion to
//! floating point happens only when reporting.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wavefront_width;
use crate::registry::Registry;
use crate::stencil::StencilKind;

pub type Rational = Ratio<i128>;

/// Inputs of the cache block size model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheModelInput {
    /// Bytes in one padded x-row (`N_xb`).
    pub leading_bytes: usize,
    /// Diamond width `D_w`.
    pub d_w: usize,
    /// Wavefront tile width `N_F`.
    pub n_f: usize,
    pub radius: usize,
    /// Domain-sized streams `N_D`.
    pub streams: usize,
}

impl CacheModelInput {
    pub fn new(leading_bytes: usize, d_w: usize, n_f: usize, radius: usize, streams: usize) -> Self {
        Self {
            leading_bytes,
            d_w,
            n_f,
            radius,
            streams,
        }
    }
}

fn r(n: usize) -> Rational {
    Rational::from_integer(n as i128)
}

/// Bytes one wavefront-diamond tile keeps in cache:
/// `N_xb·[N_D·D_w·(D_w/2 − R + N_F) + 2R(D_w + W_w)]`.
///
/// # Panics
/// If the inputs admit no wavefront (`D_w < 2R` or `N_F = 0`).
pub fn cache_block_size(input: &CacheModelInput) -> Rational {
    let CacheModelInput {
        leading_bytes,
        d_w,
        n_f,
        radius,
        streams,
    } = *input;
    let w_w = wavefront_width(d_w, n_f, radius).expect("admissible wavefront");
    let area = r(d_w) / r(2) - r(radius) + r(n_f);
    r(leading_bytes) * (r(streams) * r(d_w) * area + r(2 * radius) * r(d_w + w_w))
}

/// The radius-one form `N_xb·[N_D·(D_w²/2 + D_w·(N_F − 1)) + 2(D_w + W_w)]`
/// with `W_w = D_w + N_F − 2`.
pub fn cache_block_size_r1(leading_bytes: usize, d_w: usize, n_f: usize, streams: usize) -> Rational {
    let w_w = r(d_w) + r(n_f) - r(2);
    let area = r(d_w * d_w) / r(2) + r(d_w) * (r(n_f) - r(1));
    r(leading_bytes) * (r(streams) * area + r(2) * (r(d_w) + w_w))
}

/// Main-memory bytes per lattice update with temporal blocking:
/// `16R·[(2D_w − 2R) + (N_D·D_w + 2R)] / D_w²`.
pub fn code_balance(d_w: usize, streams: usize, radius: usize) -> Rational {
    assert!(d_w >= 2 * radius && radius > 0, "code balance needs D_w >= 2R");
    let writes = r(2 * d_w) - r(2 * radius);
    let reads = r(streams * d_w) + r(2 * radius);
    r(16 * radius) * (writes + reads) / r(d_w * d_w)
}

/// The radius-one form `16·[(2D_w − 2) + (N_D·D_w + 2)] / D_w²`.
pub fn code_balance_r1(d_w: usize, streams: usize) -> Rational {
    r(16) * ((r(2 * d_w) - r(2)) + (r(streams * d_w) + r(2))) / r(d_w * d_w)
}

/// Bytes per update of the kind under pure spatial blocking.
pub fn spatial_balance(kind: StencilKind) -> usize {
    kind.info().spatial_balance
}

pub fn to_f64(x: Rational) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Where the working set of the modeled loop resides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemLevel {
    L1,
    L2,
    L3,
    Mem,
}

impl MemLevel {
    pub const ALL: [MemLevel; 4] = [MemLevel::L1, MemLevel::L2, MemLevel::L3, MemLevel::Mem];
}

/// ECM cycle decomposition for one unit of work:
/// `{T_OL ‖ T_nOL | T_L1L2 | T_L2L3 | T_L3Mem}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcmModel {
    pub t_ol: f64,
    pub t_nol: f64,
    pub t_l1l2: f64,
    pub t_l2l3: f64,
    pub t_l3mem: f64,
    /// Lattice updates per unit of work.
    pub work_unit: f64,
}

/// Updates per ECM work unit (one cache line of doubles).
pub const WORK_UNIT_LUPS: f64 = 8.0;

impl EcmModel {
    pub fn new(t_ol: f64, t_nol: f64, t_l1l2: f64, t_l2l3: f64, t_l3mem: f64) -> Self {
        Self {
            t_ol,
            t_nol,
            t_l1l2,
            t_l2l3,
            t_l3mem,
            work_unit: WORK_UNIT_LUPS,
        }
    }

    /// Summed transfer cycles from L1 down to `level`.
    pub fn transfer(&self, level: MemLevel) -> f64 {
        let terms = [self.t_l1l2, self.t_l2l3, self.t_l3mem];
        let n = match level {
            MemLevel::L1 => 0,
            MemLevel::L2 => 1,
            MemLevel::L3 => 2,
            MemLevel::Mem => 3,
        };
        terms[..n].iter().sum()
    }

    /// `max(T_nOL + T_data, T_OL)` with data coming from `level`.
    pub fn cycles(&self, level: MemLevel) -> f64 {
        (self.t_nol + self.transfer(level)).max(self.t_ol)
    }

    /// Predictions for data in L1, L2, L3 and memory.
    pub fn chain(&self) -> [f64; 4] {
        MemLevel::ALL.map(|l| self.cycles(l))
    }
}

impl fmt::Display for EcmModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{{} ‖ {} | {} | {} | {}}} cy",
            self.t_ol, self.t_nol, self.t_l1l2, self.t_l2l3, self.t_l3mem
        )
    }
}

/// Prediction for one memory level plus the whole chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcmPrediction {
    pub cycles: f64,
    pub chain: [f64; 4],
}

impl EcmPrediction {
    /// `{a⌉b⌉c⌉d} cy`
    pub fn chain_string(&self) -> String {
        let parts: Vec<String> = self.chain.iter().map(|c| format_num(*c)).collect();
        format!("{{{}}} cy", parts.join("⌉"))
    }
}

fn format_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x}")
    }
}

pub fn ecm_single(model: &EcmModel, level: MemLevel) -> EcmPrediction {
    EcmPrediction {
        cycles: model.cycles(level),
        chain: model.chain(),
    }
}

/// Hardware parameters the models need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    /// Core clock in Hz.
    pub clock_hz: f64,
    /// Saturated memory bandwidth in bytes/s.
    pub bandwidth: f64,
    pub cores: usize,
    pub l3_bytes: usize,
    /// Shared-cache bytes usable for blocking; half of L3 when absent.
    #[serde(default)]
    pub usable_cache_bytes: Option<usize>,
}

impl MachineSpec {
    pub fn usable_cache(&self) -> usize {
        self.usable_cache_bytes.unwrap_or(self.l3_bytes / 2)
    }

    fn validate(self) -> Result<Self> {
        if !(self.clock_hz > 0.0 && self.bandwidth > 0.0 && self.cores > 0 && self.l3_bytes > 0) {
            return Err(Error::Parse(format!("machine `{}` needs positive clock, bandwidth, cores and L3", self.name)));
        }
        Ok(self)
    }

    /// Parses a `key = value` machine description.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str::<MachineSpec>(text)
            .map_err(|e| Error::Parse(e.to_string()))?
            .validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

const MB: usize = 1_000_000;

fn preset(name: &str, clock_ghz: f64, bw_gbs: f64, cores: usize, l3_mb: usize) -> MachineSpec {
    MachineSpec {
        name: name.to_string(),
        clock_hz: clock_ghz * 1e9,
        bandwidth: bw_gbs * 1e9,
        cores,
        l3_bytes: l3_mb * MB,
        usable_cache_bytes: None,
    }
}

/// Built-in machine presets by name.
pub fn machines() -> &'static Registry<MachineSpec> {
    static PRESETS: OnceLock<[MachineSpec; 3]> = OnceLock::new();
    static REGISTRY: OnceLock<Registry<MachineSpec>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let p = PRESETS.get_or_init(|| {
            [
                preset("ivybridge-e5-2660v2", 2.2, 40.0, 10, 25),
                // bandwidth quoted alongside the spatial-blocking baselines
                preset("ivybridge-e5-2660v2-41", 2.2, 41.0, 10, 25),
                preset("haswell-e5-2699v3", 2.3, 50.0, 18, 45),
            ]
        });
        p.iter().fold(Registry::new("machine"), |reg, m| reg.register(&m.name, m))
    })
}

/// When adding cores stops helping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Saturation {
    /// Bandwidth limit reached at this many cores.
    AtCores(usize),
    /// No memory transfer term: scaling is linear for every core count.
    ComputeBound,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MulticorePrediction {
    /// Lattice updates per second, in units of 1e9.
    pub glups: f64,
    pub saturation: Saturation,
}

/// Socket throughput on `cores` cores: linear scaling of the in-memory
/// single-core ECM prediction, capped by the memory transfer term.
pub fn ecm_multicore(model: &EcmModel, machine: &MachineSpec, cores: usize) -> Result<MulticorePrediction> {
    if cores == 0 || cores > machine.cores {
        return Err(Error::config(format!(
            "core count {cores} outside 1..={} for {}",
            machine.cores, machine.name
        )));
    }
    let t_mem = model.cycles(MemLevel::Mem);
    let per_core = model.work_unit * machine.clock_hz / t_mem;
    let linear = cores as f64 * per_core;
    let (lups, saturation) = if model.t_l3mem > 0.0 {
        let cap = model.work_unit * machine.clock_hz / model.t_l3mem;
        // guard ceil against representation error when the ratio is integral
        let n_sat = (t_mem / model.t_l3mem - 1e-9).ceil().max(1.0) as usize;
        (linear.min(cap), Saturation::AtCores(n_sat))
    } else {
        (linear, Saturation::ComputeBound)
    };
    Ok(MulticorePrediction {
        glups: lups / 1e9,
        saturation,
    })
}

/// Roofline bound `P = I·b_S`. With `I` in updates per byte and `b_S` in
/// bytes/s the result is in updates per second.
pub fn roofline(intensity: f64, bandwidth: f64) -> f64 {
    intensity * bandwidth
}

/// One row of the published phenomenological model tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub machine: &'static str,
    pub kind: StencilKind,
    pub model: EcmModel,
    /// Prediction as printed, GLUP/s.
    pub published: f64,
}

/// The eight full-socket ECM model tuples and their published predictions.
pub fn published_tables() -> Vec<TableRow> {
    use StencilKind::*;
    let ivb = "ivybridge-e5-2660v2";
    let hsw = "haswell-e5-2699v3";
    let row = |machine, kind, m: [f64; 5], published| TableRow {
        machine,
        kind,
        model: EcmModel::new(m[0], m[1], m[2], m[3], m[4]),
        published,
    };
    vec![
        row(ivb, Const7pt, [12.0, 14.0, 14.0, 8.3, 2.2], 4.6),
        row(ivb, Var7pt, [14.0, 28.0, 30.0, 24.0, 11.0], 1.6),
        row(ivb, Const25pt, [12.0, 56.0, 40.0, 28.0, 11.0], 1.3),
        row(ivb, Var25pt, [12.0, 76.0, 115.0, 50.0, 40.0], 0.44),
        row(hsw, Const7pt, [12.0, 14.0, 7.0, 7.5, 1.8], 10.0),
        row(hsw, Var7pt, [14.0, 21.0, 14.0, 25.0, 4.8], 3.9),
        row(hsw, Const25pt, [12.0, 56.0, 20.0, 30.0, 7.4], 2.5),
        row(hsw, Var25pt, [12.0, 38.0, 56.0, 50.0, 26.0], 0.71),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_cache_block_example() {
        for n_xb in [1, 8, 7680, 7744] {
            let cs = cache_block_size(&CacheModelInput::new(n_xb, 8, 1, 1, 2));
            assert_eq!(cs, r(94 * n_xb));
        }
    }

    #[test]
    fn higher_order_cache_block_example() {
        let cs = cache_block_size(&CacheModelInput::new(7680, 16, 4, 4, 2));
        assert_eq!(cs, r(7680 * 480));
    }

    #[test]
    fn code_balance_examples() {
        assert_eq!(code_balance(8, 2, 1), r(8));
        assert_eq!(code_balance_r1(8, 2), r(8));
        assert_eq!(code_balance(16, 2, 4), r(16));
    }

    #[test]
    fn spatial_baselines() {
        assert_eq!(spatial_balance(StencilKind::Const7pt), 24);
        assert_eq!(spatial_balance(StencilKind::Var7pt), 80);
        assert_eq!(spatial_balance(StencilKind::Const25pt), 32);
        assert_eq!(spatial_balance(StencilKind::Var25pt), 128);
    }

    #[test]
    fn ecm_worked_example() {
        let m = EcmModel::new(4.0, 4.0, 2.0, 4.0, 9.0);
        let p = ecm_single(&m, MemLevel::L3);
        assert_eq!(p.cycles, 10.0);
        assert_eq!(p.chain, [4.0, 6.0, 10.0, 19.0]);
        assert_eq!(p.chain_string(), "{4⌉6⌉10⌉19} cy");
        assert_eq!(m.cycles(MemLevel::L1), 4.0);
    }

    #[test]
    fn empty_transfer_is_core_time() {
        let m = EcmModel::new(7.0, 3.0, 1.0, 1.0, 1.0);
        assert_eq!(m.cycles(MemLevel::L1), 7.0);
    }

    #[test]
    fn multicore_table_rows() {
        // min(n·8·f/T_Mem, 8·f/T_L3Mem), evaluated by hand from each tuple
        let expect = [4.5714, 1.6, 1.3037, 0.44, 10.2222, 3.8333, 2.4865, 0.7077];
        let reg = machines();
        for (row, want) in published_tables().iter().zip(expect) {
            let mach = reg.get(row.machine).unwrap();
            let p = ecm_multicore(&row.model, mach, mach.cores).unwrap();
            assert!((p.glups - want).abs() < 1e-4, "{row:?}: {}", p.glups);
        }
    }

    #[test]
    fn saturation_core_counts() {
        let hsw = machines().get("haswell-e5-2699v3").unwrap();
        let p = ecm_multicore(&EcmModel::new(12.0, 14.0, 7.0, 7.5, 1.8), hsw, 18).unwrap();
        assert_eq!(p.saturation, Saturation::AtCores(17));
        let ivb = machines().get("ivybridge-e5-2660v2").unwrap();
        let p = ecm_multicore(&EcmModel::new(12.0, 14.0, 14.0, 8.3, 2.2), ivb, 10).unwrap();
        assert_eq!(p.saturation, Saturation::AtCores(18));
    }

    #[test]
    fn linear_regime_and_compute_bound() {
        let ivb = machines().get("ivybridge-e5-2660v2").unwrap();
        let m = EcmModel::new(10.0, 5.0, 0.0, 0.0, 1e-3);
        let p = ecm_multicore(&m, ivb, 1).unwrap();
        assert!((p.glups - 8.0 * 2.2 / 10.0).abs() < 1e-12);
        let m = EcmModel::new(10.0, 10.0, 0.0, 0.0, 0.0);
        assert_eq!(ecm_multicore(&m, ivb, 4).unwrap().saturation, Saturation::ComputeBound);
        assert!(ecm_multicore(&m, ivb, 11).is_err());
        assert!(ecm_multicore(&m, ivb, 0).is_err());
    }

    #[test]
    fn roofline_examples() {
        assert!((roofline(1.0 / 24.0, 41e9) / 1e9 - 1.708).abs() < 0.01);
        assert!((roofline(1.0 / 16.0, 41e9) / 1e9 - 2.5625).abs() < 1e-9);
        assert_eq!(roofline(0.5, 0.0), 0.0);
    }

    #[test]
    fn machine_file_parses() {
        let m = MachineSpec::from_toml(
            "name = \"desk\"\nclock_hz = 3.0e9\nbandwidth = 2.0e10\ncores = 4\nl3_bytes = 8000000\n",
        )
        .unwrap();
        assert_eq!(m.usable_cache(), 4_000_000);
        assert!(MachineSpec::from_toml("name = \"x\"\nclock_hz = 0.0\nbandwidth = 1.0\ncores = 1\nl3_bytes = 1\n").is_err());
        assert!(MachineSpec::from_toml("nonsense").is_err());
    }

    #[test]
    fn presets_are_registered() {
        let names: Vec<_> = machines().names().collect();
        assert!(names.contains(&"ivybridge-e5-2660v2"));
        assert!(names.contains(&"haswell-e5-2699v3"));
        assert_eq!(machines().get("haswell-e5-2699v3").unwrap().usable_cache(), 22_500_000);
    }
}
