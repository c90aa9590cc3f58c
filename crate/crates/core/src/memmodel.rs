//! On-chip buffer sizing for the two engine kinds, skip-connection delay
//! buffers, and SRAM/DRAM totals for a group boundary.
//!
//! A boundary `l` places layers `0..l` on FRCEs (weights in ROM, line-buffered
//! FMs) and layers `l..` on WRCEs (FMs in a ping-pong global buffer, weights
//! streamed from DRAM once per frame).

use thiserror::Error;

use crate::costmodel::kernel_elements;
use crate::netspec::{bytes_for, fm_bytes, FmSide, LayerKind, LayerSpec, NetworkSpec};

pub const MIB: f64 = (1u64 << 20) as f64;

pub fn mib(bytes: u64) -> f64 {
    bytes as f64 / MIB
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemError {
    #[error("boundary {boundary} outside 0..={layers}")]
    Boundary { boundary: usize, layers: usize },
    #[error("layer {0} is not a join with a shortcut source")]
    NoShortcut(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CeKind {
    Frce,
    Wrce,
}

impl std::fmt::Display for CeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CeKind::Frce => "FRCE",
            CeKind::Wrce => "WRCE",
        })
    }
}

/// `(K-1)` lines plus `(K-1)` pixels of every input channel.
pub fn frce_fm_buffer(layer: &LayerSpec, bits: u32) -> u64 {
    if !layer.kind.is_spatial() {
        return 0;
    }
    let k1 = (layer.k - 1) as u64;
    let pixels = k1 * layer.f_in as u64 + k1;
    bytes_for(pixels * layer.m as u64, bits)
}

/// Ping-pong global FM buffer; DWC and pooling engines only keep `K` lines of
/// the channel in flight.
pub fn wrce_fm_buffer(layer: &LayerSpec, bits: u32) -> u64 {
    let f = layer.f_in as u64;
    match layer.kind {
        LayerKind::Stc | LayerKind::Pwc | LayerKind::Fc => {
            bytes_for(2 * f * f * layer.m as u64, bits)
        }
        LayerKind::Dwc | LayerKind::Pool => bytes_for(layer.k as u64 * f, bits),
        LayerKind::ScbAdd | LayerKind::Concat => 0,
    }
}

/// Weights one output kernel touches per round.
pub fn kernel_volume(layer: &LayerSpec) -> u64 {
    let (k2, m, g) = (
        layer.k as u64 * layer.k as u64,
        layer.m as u64,
        layer.groups as u64,
    );
    match layer.kind {
        LayerKind::Stc => k2 * m / g,
        LayerKind::Pwc => m / g,
        LayerKind::Fc => m,
        LayerKind::Dwc => k2,
        _ => 0,
    }
}

pub fn kernel_bytes(layer: &LayerSpec, bits: u32) -> u64 {
    bytes_for(kernel_elements(layer), bits)
}

pub fn stream_buffer_bytes(layer: &LayerSpec, pw: u32, bits: u32) -> u64 {
    bytes_for(2 * kernel_volume(layer) * pw as u64, bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightStorage {
    pub on_chip_bytes: u64,
    pub off_chip_bytes: u64,
    /// Full kernel-set reads per frame.
    pub kernel_reads_per_frame: u64,
}

pub fn weight_storage(layer: &LayerSpec, kind: CeKind, pw: u32, bits: u32) -> WeightStorage {
    let kernels = kernel_bytes(layer, bits);
    match kind {
        CeKind::Frce => WeightStorage {
            on_chip_bytes: kernels,
            off_chip_bytes: 0,
            kernel_reads_per_frame: if kernels == 0 {
                0
            } else {
                layer.f_out as u64 * layer.f_out as u64
            },
        },
        CeKind::Wrce => WeightStorage {
            on_chip_bytes: stream_buffer_bytes(layer, pw, bits),
            off_chip_bytes: kernels,
            kernel_reads_per_frame: u64::from(kernels > 0),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScbScheme {
    /// Each stage writes whole lines before the next begins.
    LineReuse,
    /// Stages forward pixels as soon as a window is complete.
    FmReuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScbDelay {
    pub shortcut_lines: u32,
    pub main_lines: u32,
    pub total_lines: u32,
    /// Shortcut delay storage.
    pub bytes: u64,
}

/// Layers on the main branch of the join at `join_id`: everything strictly
/// between the shortcut producer and the join.
pub fn main_branch(net: &NetworkSpec, join_id: usize) -> Result<&[LayerSpec], MemError> {
    let join = net
        .layers
        .get(join_id)
        .ok_or(MemError::NoShortcut(join_id))?;
    match (join.kind.is_join(), join.shortcut_src) {
        (true, Some(s)) => Ok(&net.layers[s + 1..join_id]),
        _ => Err(MemError::NoShortcut(join_id)),
    }
}

/// Lines the shortcut operand must be delayed by while the main branch fills.
pub fn scb_delay_buffer(
    net: &NetworkSpec,
    join_id: usize,
    scheme: ScbScheme,
) -> Result<ScbDelay, MemError> {
    let main = main_branch(net, join_id)?;
    let join = &net.layers[join_id];
    let (shortcut_lines, main_lines) = match scheme {
        ScbScheme::FmReuse => {
            let lag: u32 = main
                .iter()
                .filter(|l| l.kind.is_spatial())
                .map(|l| l.k - 1)
                .sum();
            (lag, lag)
        }
        ScbScheme::LineReuse => {
            let spatial: u32 = main
                .iter()
                .filter(|l| l.kind.is_spatial())
                .map(|l| l.k)
                .sum();
            (spatial + 2, main.iter().map(|l| l.k + 1).sum())
        }
    };
    let bytes = bytes_for(
        shortcut_lines as u64 * join.f_out as u64 * join.shortcut_channels() as u64,
        net.bits,
    );
    Ok(ScbDelay {
        shortcut_lines,
        main_lines,
        total_lines: shortcut_lines + main_lines,
        bytes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Converter {
    /// One full FM of the first WRCE layer.
    #[default]
    FullFm,
    Bytes(u64),
    None,
}

#[derive(Debug, Clone, Default)]
pub struct MemOptions {
    pub converter: Converter,
    /// Per-layer weight-stream width; missing entries default to 1.
    pub stream_pw: Vec<u32>,
}

impl MemOptions {
    fn pw(&self, id: usize) -> u32 {
        self.stream_pw.get(id).copied().unwrap_or(1).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemoryFootprint {
    pub boundary: usize,
    pub line_buffer_bytes: u64,
    pub weight_rom_bytes: u64,
    /// Portion of `weight_rom_bytes` holding FC weights.
    pub fc_rom_bytes: u64,
    pub gfm_buffer_bytes: u64,
    pub weight_buffer_bytes: u64,
    pub shortcut_buffer_bytes: u64,
    pub converter_buffer_bytes: u64,
    pub sram_total_bytes: u64,
    pub dram_weights_bytes: u64,
    pub dram_shortcut_bytes: u64,
    pub dram_fm_bytes: u64,
}

impl MemoryFootprint {
    pub fn dram_total_bytes(&self) -> u64 {
        self.dram_weights_bytes + self.dram_shortcut_bytes + self.dram_fm_bytes
    }

    /// SRAM without on-chip FC weights.
    pub fn sram_excluding_fc(&self) -> u64 {
        self.sram_total_bytes - self.fc_rom_bytes
    }
}

/// Shortcut operand written to and read back from DRAM once each.
pub fn dram_shortcut_bytes(layer: &LayerSpec, bits: u32) -> u64 {
    if !layer.kind.is_join() {
        return 0;
    }
    let f = layer.f_out as u64;
    2 * bytes_for(f * f * layer.shortcut_channels() as u64, bits)
}

/// SRAM a layer costs on an FRCE: line buffer, weight ROM and, for a join,
/// the shortcut delay buffer.
pub fn frce_cost(net: &NetworkSpec, id: usize) -> u64 {
    let l = &net.layers[id];
    let delay = if l.kind.is_join() {
        scb_delay_buffer(net, id, ScbScheme::FmReuse)
            .map(|d| d.bytes)
            .unwrap_or(0)
    } else {
        0
    };
    frce_fm_buffer(l, net.bits) + kernel_bytes(l, net.bits) + delay
}

/// SRAM a layer costs on a WRCE with weight-stream width `pw`.
pub fn wrce_cost(net: &NetworkSpec, id: usize, pw: u32) -> u64 {
    let l = &net.layers[id];
    wrce_fm_buffer(l, net.bits) + stream_buffer_bytes(l, pw, net.bits)
}

pub fn converter_bytes(net: &NetworkSpec, boundary: usize, converter: Converter) -> u64 {
    if boundary == 0 || boundary >= net.len() {
        return 0;
    }
    match converter {
        Converter::FullFm => fm_bytes(&net.layers[boundary], FmSide::Input, net.bits),
        Converter::Bytes(b) => b,
        Converter::None => 0,
    }
}

pub fn design_point_memory(
    net: &NetworkSpec,
    boundary: usize,
    opts: &MemOptions,
) -> Result<MemoryFootprint, MemError> {
    if boundary > net.len() {
        return Err(MemError::Boundary {
            boundary,
            layers: net.len(),
        });
    }
    let bits = net.bits;
    let mut fp = MemoryFootprint {
        boundary,
        ..Default::default()
    };
    for (i, l) in net.layers.iter().enumerate() {
        if i < boundary {
            fp.line_buffer_bytes += frce_fm_buffer(l, bits);
            let rom = kernel_bytes(l, bits);
            fp.weight_rom_bytes += rom;
            if l.kind == LayerKind::Fc {
                fp.fc_rom_bytes += rom;
            }
            if l.kind.is_join() {
                fp.shortcut_buffer_bytes += scb_delay_buffer(net, i, ScbScheme::FmReuse)
                    .map(|d| d.bytes)
                    .unwrap_or(0);
            }
        } else {
            fp.gfm_buffer_bytes += wrce_fm_buffer(l, bits);
            fp.weight_buffer_bytes += stream_buffer_bytes(l, opts.pw(i), bits);
            fp.dram_weights_bytes += kernel_bytes(l, bits);
            fp.dram_shortcut_bytes += dram_shortcut_bytes(l, bits);
        }
    }
    fp.converter_buffer_bytes = converter_bytes(net, boundary, opts.converter);
    fp.sram_total_bytes = fp.line_buffer_bytes
        + fp.weight_rom_bytes
        + fp.gfm_buffer_bytes
        + fp.weight_buffer_bytes
        + fp.shortcut_buffer_bytes
        + fp.converter_buffer_bytes;
    Ok(fp)
}

/// Footprints for every boundary `0..=L`.
pub fn boundary_sweep(net: &NetworkSpec, opts: &MemOptions) -> Vec<MemoryFootprint> {
    (0..=net.len())
        .map(|l| design_point_memory(net, l, opts).expect("boundary in range"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Unified engine: every layer round-trips through DRAM.
    Ue,
    /// Separated engines with DWC fused on chip.
    Se,
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Traffic {
    pub fm: u64,
    pub shortcut: u64,
    pub weights: u64,
}

impl Traffic {
    pub fn total(&self) -> u64 {
        self.fm + self.shortcut + self.weights
    }
}

pub fn architecture_traffic(
    net: &NetworkSpec,
    arch: Architecture,
    boundary: usize,
) -> Result<Traffic, MemError> {
    let bits = net.bits;
    match arch {
        Architecture::Streaming => {
            let fp = design_point_memory(net, boundary, &MemOptions::default())?;
            Ok(Traffic {
                fm: fp.dram_fm_bytes,
                shortcut: fp.dram_shortcut_bytes,
                weights: fp.dram_weights_bytes,
            })
        }
        Architecture::Ue | Architecture::Se => {
            let mut t = Traffic::default();
            for l in &net.layers {
                t.weights += kernel_bytes(l, bits);
                if arch == Architecture::Se && l.kind == LayerKind::Dwc {
                    continue;
                }
                t.fm += fm_bytes(l, FmSide::Input, bits) + fm_bytes(l, FmSide::Output, bits);
                if l.kind.is_join() {
                    let f = l.f_out as u64;
                    t.shortcut += bytes_for(f * f * l.shortcut_channels() as u64, bits);
                }
            }
            Ok(t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::builtin;

    #[test]
    fn buffer_size_examples() {
        let stc = LayerSpec::new(0, "c", LayerKind::Stc, 112, 32, 32).with_kernel(3, 1, 1);
        assert_eq!(frce_fm_buffer(&stc, 8), 7232);
        let pwc = LayerSpec::new(0, "p", LayerKind::Pwc, 112, 32, 64);
        assert_eq!(frce_fm_buffer(&pwc, 8), 0);
        let k1 = LayerSpec::new(0, "c", LayerKind::Stc, 9, 4, 4);
        assert_eq!(frce_fm_buffer(&k1, 8), 0);

        let pwc7 = LayerSpec::new(0, "p", LayerKind::Pwc, 7, 320, 1280);
        assert_eq!(wrce_fm_buffer(&pwc7, 8), 31_360);
        let dwc7 = LayerSpec::new(0, "d", LayerKind::Dwc, 7, 960, 960).with_kernel(3, 1, 1);
        assert_eq!(wrce_fm_buffer(&dwc7, 8), 21);
        let tiny = LayerSpec::new(0, "p", LayerKind::Pwc, 1, 1, 1);
        assert_eq!(wrce_fm_buffer(&tiny, 8), 2);
    }

    #[test]
    fn weight_storage_examples() {
        let stc = LayerSpec::new(0, "c", LayerKind::Stc, 224, 3, 32).with_kernel(3, 2, 1);
        let frce = weight_storage(&stc, CeKind::Frce, 1, 8);
        assert_eq!(frce.on_chip_bytes, 864);
        assert_eq!(frce.kernel_reads_per_frame, 112 * 112);
        let wrce = weight_storage(&stc, CeKind::Wrce, 4, 8);
        assert_eq!(wrce.kernel_reads_per_frame, 1);
        assert_eq!(wrce.off_chip_bytes, 864);
        assert_eq!(wrce.on_chip_bytes, 2 * 27 * 4);
    }

    #[test]
    fn shufflenet_scb_lines() {
        let net = builtin("shufflenet_v2").unwrap();
        let join = net.scb_join(1).unwrap().id;
        let fm = scb_delay_buffer(&net, join, ScbScheme::FmReuse).unwrap();
        let lr = scb_delay_buffer(&net, join, ScbScheme::LineReuse).unwrap();
        assert_eq!((fm.shortcut_lines, fm.total_lines), (2, 4));
        assert_eq!((lr.shortcut_lines, lr.total_lines), (5, 13));
        assert_eq!(fm.bytes, 2 * 28 * 58);
        assert!(scb_delay_buffer(&net, 0, ScbScheme::FmReuse).is_err());
    }

    #[test]
    fn all_frce_has_no_dram() {
        for net in crate::netspec::builtin_networks() {
            let fp = design_point_memory(&net, net.len(), &MemOptions::default()).unwrap();
            assert_eq!(fp.dram_total_bytes(), 0, "{}", net.name);
        }
        let net = builtin("mobilenet_v1").unwrap();
        assert!(design_point_memory(&net, net.len() + 1, &MemOptions::default()).is_err());
    }

    #[test]
    fn sram_is_sum_of_components() {
        let net = builtin("mobilenet_v2").unwrap();
        for fp in boundary_sweep(&net, &MemOptions::default()) {
            assert_eq!(
                fp.sram_total_bytes,
                fp.line_buffer_bytes
                    + fp.weight_rom_bytes
                    + fp.gfm_buffer_bytes
                    + fp.weight_buffer_bytes
                    + fp.shortcut_buffer_bytes
                    + fp.converter_buffer_bytes
            );
            assert_eq!(fp.dram_fm_bytes, 0);
        }
    }

    #[test]
    fn boundary_step_changes_sram_by_layer_costs() {
        let opts = MemOptions::default();
        for net in crate::netspec::builtin_networks() {
            let sweep = boundary_sweep(&net, &opts);
            for l in 0..net.len() {
                let lhs = sweep[l + 1].sram_total_bytes as i128 - sweep[l].sram_total_bytes as i128;
                let rhs = frce_cost(&net, l) as i128 - wrce_cost(&net, l, 1) as i128
                    + converter_bytes(&net, l + 1, opts.converter) as i128
                    - converter_bytes(&net, l, opts.converter) as i128;
                assert_eq!(lhs, rhs, "{} boundary {l}", net.name);
                assert!(sweep[l + 1].dram_total_bytes() <= sweep[l].dram_total_bytes());
            }
        }
    }

    #[test]
    fn ue_equals_se_for_single_stc() {
        let net = NetworkSpec {
            name: "one".into(),
            input_side: 8,
            input_channels: 3,
            bits: 8,
            layers: vec![LayerSpec::new(0, "c", LayerKind::Stc, 8, 3, 8).with_kernel(3, 1, 1)],
        };
        assert_eq!(
            architecture_traffic(&net, Architecture::Ue, 0).unwrap(),
            architecture_traffic(&net, Architecture::Se, 0).unwrap()
        );
    }
}
