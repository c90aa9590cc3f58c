//! Closed-form operation counts, feature-map access costs and the
//! DSC/SCB-to-STC ratios.
//!
//! `F` is the output side when counting MACs. Access counts use the input side
//! for reads and the output side for writes, so strided layers stay consistent
//! with their geometry.

use num_rational::Ratio;

use crate::netspec::{LayerKind, LayerSpec, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerCost {
    pub macs: u64,
    /// FM elements read plus written.
    pub fm_access: u64,
    /// Parameters including biases.
    pub weight_count: u64,
}

fn sq(x: u32) -> u64 {
    x as u64 * x as u64
}

pub fn stc_macs(f: u32, k: u32, m: u32, n: u32) -> u64 {
    sq(f) * sq(k) * m as u64 * n as u64
}

pub fn dwc_macs(f: u32, k: u32, m: u32) -> u64 {
    sq(f) * sq(k) * m as u64
}

pub fn pwc_macs(f: u32, m: u32, n: u32) -> u64 {
    sq(f) * m as u64 * n as u64
}

/// Additions of a residual join, counted as half a MAC each.
pub fn scb_macs(f: u32, m: u32) -> u64 {
    (m as u64).div_ceil(2) * sq(f)
}

pub fn dsc_macs(f: u32, k: u32, m: u32, n: u32) -> u64 {
    dwc_macs(f, k, m) + pwc_macs(f, m, n)
}

pub fn stc_fm_access(f: u32, m: u32, n: u32) -> u64 {
    sq(f) * (m as u64 + n as u64)
}

/// DWC reads M and writes M channels, then PWC reads M and writes N.
pub fn dsc_fm_access(f: u32, m: u32, n: u32) -> u64 {
    sq(f) * (3 * m as u64 + n as u64)
}

/// Block input, shortcut operand and output, each `M` channels wide.
pub fn scb_fm_access(f: u32, m: u32) -> u64 {
    3 * m as u64 * sq(f)
}

pub fn mac_count(layer: &LayerSpec) -> u64 {
    let (f, k, m, n, g) = (layer.f_out, layer.k, layer.m, layer.n, layer.groups);
    match layer.kind {
        LayerKind::Stc => stc_macs(f, k, m / g, n),
        LayerKind::Dwc => dwc_macs(f, k, m),
        LayerKind::Pwc => pwc_macs(f, m / g, n),
        LayerKind::Fc => m as u64 * n as u64,
        LayerKind::ScbAdd => scb_macs(f, m),
        LayerKind::Pool | LayerKind::Concat => 0,
    }
}

/// FM elements one layer reads and writes. A residual join also reads its
/// shortcut operand; a concat reads both halves and writes the full width.
pub fn fm_access(layer: &LayerSpec) -> u64 {
    let read = sq(layer.f_in) * layer.m as u64;
    let write = sq(layer.f_out) * layer.n as u64;
    match layer.kind {
        LayerKind::ScbAdd => scb_fm_access(layer.f_out, layer.m),
        LayerKind::Concat => read + sq(layer.f_out) * layer.shortcut_channels() as u64 + write,
        _ => read + write,
    }
}

/// Kernel elements without biases.
pub fn kernel_elements(layer: &LayerSpec) -> u64 {
    let (k2, m, n, g) = (
        sq(layer.k),
        layer.m as u64,
        layer.n as u64,
        layer.groups as u64,
    );
    match layer.kind {
        LayerKind::Stc => k2 * (m / g) * n,
        LayerKind::Dwc => k2 * m,
        LayerKind::Pwc => (m / g) * n,
        LayerKind::Fc => m * n,
        _ => 0,
    }
}

pub fn weight_count(layer: &LayerSpec) -> u64 {
    match layer.kind {
        k if k.has_weights() => kernel_elements(layer) + layer.n as u64,
        _ => 0,
    }
}

pub fn layer_cost(layer: &LayerSpec) -> LayerCost {
    LayerCost {
        macs: mac_count(layer),
        fm_access: fm_access(layer),
        weight_count: weight_count(layer),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratios {
    pub ra_dsc: Ratio<u64>,
    pub ro_dsc: Ratio<u64>,
    pub ra_scb: Ratio<u64>,
    pub ro_scb: Ratio<u64>,
}

/// Access and operation ratios of DSC and SCB relative to an STC with the
/// same `K`, `M`, `N`.
pub fn ratios(k: u32, m: u32, n: u32) -> Ratios {
    assert!(k >= 1 && m >= 1 && n >= 1, "ratios need K, M, N >= 1");
    let (k, m, n) = (k as u64, m as u64, n as u64);
    Ratios {
        ra_dsc: Ratio::new(1, 1) + Ratio::new(2 * m, m + n),
        ro_dsc: Ratio::new(1, n) + Ratio::new(1, k * k),
        ra_scb: Ratio::new(3 * m, m + n),
        ro_scb: Ratio::new(1, 2 * n * k * k),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NetworkTotals {
    pub total_macs: u64,
    pub total_weights: u64,
    /// Share of `total_weights` held by FC layers.
    pub fc_weights: u64,
    pub per_layer: Vec<LayerCost>,
}

pub fn network_totals(net: &NetworkSpec) -> NetworkTotals {
    let per_layer: Vec<LayerCost> = net.layers.iter().map(layer_cost).collect();
    NetworkTotals {
        total_macs: per_layer.iter().map(|c| c.macs).sum(),
        total_weights: per_layer.iter().map(|c| c.weight_count).sum(),
        fc_weights: net
            .layers
            .iter()
            .zip(&per_layer)
            .filter(|(l, _)| l.kind == LayerKind::Fc)
            .map(|(_, c)| c.weight_count)
            .sum(),
        per_layer,
    }
}
