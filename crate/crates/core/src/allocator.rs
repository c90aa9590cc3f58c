//! Parallel-space enumeration, the balanced memory allocation between FRCE
//! and WRCE groups, greedy parallelism tuning under a DSP budget, and the
//! steady-state throughput model.
//!
//! Every compute layer is mapped onto a `pw x pf` MAC array: `pw` lanes along
//! the kernel (output channel) dimension and `pf` lanes along output
//! positions. A layer then takes
//! `ceil(dim_w / pw) * ceil(dim_f / pf) * work` cycles per frame, where `work`
//! is the MAC depth of one output element. Non-divisor parallelism pads the
//! dimension up, which is what lets the fine-grained space use every `P` that
//! yields a distinct round count.

use rayon::prelude::*;
use thiserror::Error;

use crate::costmodel::mac_count;
use crate::memmodel::{
    boundary_sweep, design_point_memory, frce_cost, wrce_cost, CeKind, MemError, MemOptions,
    MemoryFootprint,
};
use crate::netspec::{LayerKind, LayerSpec, NetworkSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("DSP budget {budget} is below the {needed} needed for one MAC per layer")]
    DspInfeasible { needed: u64, budget: u64 },
    #[error("SRAM budget {budget} B is below the minimum achievable {min_sram} B")]
    SramInfeasible { min_sram: u64, budget: u64 },
    #[error("network has no compute layers")]
    NoCompute,
    #[error(transparent)]
    Mem(#[from] MemError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelSpace {
    pub max_dim: u32,
    /// `(P, T)` with `P` ascending and `T = ceil(max_dim / P)` strictly
    /// descending; each `P` is the smallest reaching its `T`.
    pub points: Vec<(u32, u32)>,
}

impl ParallelSpace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The closed-form size estimate `2 * floor(sqrt(M))`.
    pub fn approx_size(&self) -> u32 {
        2 * self.max_dim.isqrt()
    }

    /// Smallest point whose round count is at most `rounds`.
    fn first_within(&self, rounds: u64) -> Option<(u32, u32)> {
        let i = self.points.partition_point(|&(_, t)| t as u64 > rounds);
        self.points.get(i).copied()
    }

    /// The point following `p`.
    fn after(&self, p: u32) -> Option<(u32, u32)> {
        let i = self.points.partition_point(|&(q, _)| q <= p);
        self.points.get(i).copied()
    }
}

/// All distinct round counts `ceil(M / P)`, `P = 1..=M`.
pub fn parallel_space(m: u32) -> ParallelSpace {
    assert!(m >= 1, "parallel space needs M >= 1");
    let mut points = Vec::new();
    let mut p = 1;
    loop {
        let t = m.div_ceil(p);
        points.push((p, t));
        if t == 1 {
            break;
        }
        p = m.div_ceil(t - 1);
    }
    ParallelSpace { max_dim: m, points }
}

/// Divisors of `M` only: the round count is always exact.
pub fn factor_space(m: u32) -> ParallelSpace {
    assert!(m >= 1, "factor space needs M >= 1");
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= m {
        if m.is_multiple_of(d) {
            small.push(d);
            if d * d != m {
                large.push(m / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    ParallelSpace {
        max_dim: m,
        points: small.into_iter().map(|p| (p, m / p)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Fgpm,
    Factorized,
}

impl Granularity {
    pub fn space(self, m: u32) -> ParallelSpace {
        match self {
            Granularity::Fgpm => parallel_space(m),
            Granularity::Factorized => factor_space(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerWork {
    /// Kernels (output channels, or channels for DWC).
    pub dim_w: u32,
    /// Output positions per channel.
    pub dim_f: u32,
    /// MACs per output element.
    pub work: u64,
}

impl LayerWork {
    pub fn cycles(&self, pw: u32, pf: u32) -> u64 {
        self.dim_w.div_ceil(pw) as u64 * self.dim_f.div_ceil(pf) as u64 * self.work
    }
}

/// `None` for layers that occupy no MAC units (pooling, concat).
pub fn layer_work(layer: &LayerSpec) -> Option<LayerWork> {
    let f2 = layer.f_out * layer.f_out;
    let k2 = (layer.k * layer.k) as u64;
    let (dim_w, dim_f, work) = match layer.kind {
        LayerKind::Stc => (layer.n, f2, k2 * (layer.m / layer.groups) as u64),
        LayerKind::Dwc => (layer.m, f2, k2),
        LayerKind::Pwc => (layer.n, f2, (layer.m / layer.groups) as u64),
        LayerKind::Fc => (layer.n, 1, layer.m as u64),
        LayerKind::ScbAdd => (layer.m.div_ceil(2), f2, 1),
        LayerKind::Pool | LayerKind::Concat => return None,
    };
    Some(LayerWork { dim_w, dim_f, work })
}

/// MACs executed with both parallel dimensions padded to multiples of
/// `pw` and `pf`.
pub fn padded_ops(layer: &LayerSpec, pw: u32, pf: u32) -> u64 {
    layer_work(layer).map_or(0, |w| w.cycles(pw, pf) * pw as u64 * pf as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CeAssignment {
    pub layer_id: usize,
    pub kind: CeKind,
    pub depthwise: bool,
    pub pw: u32,
    pub pf: u32,
    pub t_cycles: u64,
}

impl CeAssignment {
    pub fn units(&self) -> u64 {
        self.pw as u64 * self.pf as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DspMode {
    /// Two 8-bit multiplies share one DSP, except in depthwise layers.
    Decomposed,
    Plain,
}

fn unit_dsp(units: u64, depthwise: bool, mode: DspMode) -> u64 {
    match mode {
        DspMode::Decomposed if !depthwise => units.div_ceil(2),
        _ => units,
    }
}

pub fn dsp_count(assignments: &[CeAssignment], mode: DspMode) -> u64 {
    assignments
        .iter()
        .map(|a| unit_dsp(a.units(), a.depthwise, mode))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BumpPolicy {
    /// The cheapest `(pw, pf)` pair that lowers the layer's round count.
    #[default]
    MinUnits,
    /// Step the engine's preferred dimension to its next point, falling back
    /// to the other dimension once it saturates.
    PreferredChain,
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub mode: Granularity,
    pub dsp_mode: DspMode,
    pub policy: BumpPolicy,
    pub clock_hz: f64,
    pub mem: MemOptions,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            mode: Granularity::Fgpm,
            dsp_mode: DspMode::Decomposed,
            policy: BumpPolicy::MinUnits,
            clock_hz: 200e6,
            mem: MemOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Engine {
    layer_id: usize,
    kind: CeKind,
    depthwise: bool,
    work: LayerWork,
    space_w: ParallelSpace,
    space_f: ParallelSpace,
    pw: u32,
    pf: u32,
    t: u64,
}

type BumpKey = (u64, u64, u32);

impl Engine {
    fn dsp(&self, pw: u32, pf: u32, mode: DspMode) -> u64 {
        unit_dsp(pw as u64 * pf as u64, self.depthwise, mode)
    }

    fn next_min_units(&self) -> Option<(u32, u32)> {
        let cur = self.t;
        // (units, time, preference) ordered lexicographically.
        let mut best: Option<(BumpKey, (u32, u32))> = None;
        for &(pw, rw) in &self.space_w.points {
            let per_round = rw as u64 * self.work.work;
            if per_round >= cur {
                continue;
            }
            // Largest pf-round count still below the current time.
            let max_rf = (cur - 1) / per_round;
            let Some((pf, rf)) = self.space_f.first_within(max_rf) else {
                continue;
            };
            let t = per_round * rf as u64;
            let preferred = match self.kind {
                CeKind::Frce => pw,
                CeKind::Wrce => pf,
            };
            let key = (pw as u64 * pf as u64, t, u32::MAX - preferred);
            if best.is_none_or(|(k, _)| key < k) {
                best = Some((key, (pw, pf)));
            }
        }
        best.map(|(_, p)| p)
    }

    fn next_chain(&self) -> Option<(u32, u32)> {
        let w = self.space_w.after(self.pw).map(|(p, _)| (p, self.pf));
        let f = self.space_f.after(self.pf).map(|(p, _)| (self.pw, p));
        match self.kind {
            CeKind::Frce => w.or(f),
            CeKind::Wrce => f.or(w),
        }
    }

    fn assignment(&self) -> CeAssignment {
        CeAssignment {
            layer_id: self.layer_id,
            kind: self.kind,
            depthwise: self.depthwise,
            pw: self.pw,
            pf: self.pf,
            t_cycles: self.t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassOutcome {
    /// Every bottleneck layer was bumped.
    Progress,
    /// A bump would exceed the budget; earlier bumps of the pass are kept.
    BudgetBound,
    /// A bottleneck layer has no faster configuration.
    Saturated,
}

/// Greedy bottleneck-relief state for one network and boundary.
#[derive(Debug, Clone)]
pub struct Tuner {
    engines: Vec<Engine>,
    policy: BumpPolicy,
    dsp_mode: DspMode,
    dsp: u64,
}

impl Tuner {
    pub fn new(
        net: &NetworkSpec,
        boundary: usize,
        opts: &TuneOptions,
    ) -> Result<Tuner, AllocError> {
        let engines: Vec<Engine> = net
            .layers
            .iter()
            .filter_map(|l| {
                let work = layer_work(l)?;
                Some(Engine {
                    layer_id: l.id,
                    kind: if l.id < boundary {
                        CeKind::Frce
                    } else {
                        CeKind::Wrce
                    },
                    depthwise: l.kind == LayerKind::Dwc,
                    space_w: opts.mode.space(work.dim_w),
                    space_f: opts.mode.space(work.dim_f),
                    t: work.cycles(1, 1),
                    work,
                    pw: 1,
                    pf: 1,
                })
            })
            .collect();
        if engines.is_empty() {
            return Err(AllocError::NoCompute);
        }
        let dsp = engines.iter().map(|e| e.dsp(1, 1, opts.dsp_mode)).sum();
        Ok(Tuner {
            engines,
            policy: opts.policy,
            dsp_mode: opts.dsp_mode,
            dsp,
        })
    }

    pub fn dsp_used(&self) -> u64 {
        self.dsp
    }

    pub fn t_max(&self) -> u64 {
        self.engines.iter().map(|e| e.t).max().unwrap_or(0)
    }

    pub fn assignments(&self) -> Vec<CeAssignment> {
        self.engines.iter().map(Engine::assignment).collect()
    }

    /// Bumps every layer at the bottleneck time, in ascending layer order.
    pub fn pass(&mut self, budget: Option<u64>) -> PassOutcome {
        let t_max = self.t_max();
        for idx in 0..self.engines.len() {
            if self.engines[idx].t != t_max {
                continue;
            }
            let e = &self.engines[idx];
            let next = match self.policy {
                BumpPolicy::MinUnits => e.next_min_units(),
                BumpPolicy::PreferredChain => e.next_chain(),
            };
            let Some((pw, pf)) = next else {
                return PassOutcome::Saturated;
            };
            let dsp = self.dsp - e.dsp(e.pw, e.pf, self.dsp_mode) + e.dsp(pw, pf, self.dsp_mode);
            if budget.is_some_and(|b| dsp > b) {
                return PassOutcome::BudgetBound;
            }
            let e = &mut self.engines[idx];
            e.pw = pw;
            e.pf = pf;
            e.t = e.work.cycles(pw, pf);
            self.dsp = dsp;
        }
        PassOutcome::Progress
    }

    pub fn run(&mut self, budget: u64) -> PassOutcome {
        loop {
            match self.pass(Some(budget)) {
                PassOutcome::Progress => {}
                stop => return stop,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub network: String,
    pub boundary: usize,
    pub assignments: Vec<CeAssignment>,
    pub footprint: MemoryFootprint,
    pub dsp_used: u64,
    pub mac_units: u64,
    pub t_max: u64,
    /// Unpadded MACs per frame.
    pub total_macs: u64,
    pub clock_hz: f64,
    pub throughput_gops: f64,
    pub fps: f64,
}

pub fn dynamic_parallelism_tuning(
    net: &NetworkSpec,
    boundary: usize,
    dsp_budget: u64,
    opts: &TuneOptions,
) -> Result<DesignPoint, AllocError> {
    let mut tuner = Tuner::new(net, boundary, opts)?;
    if tuner.dsp_used() > dsp_budget {
        return Err(AllocError::DspInfeasible {
            needed: tuner.dsp_used(),
            budget: dsp_budget,
        });
    }
    tuner.run(dsp_budget);
    design_point(net, boundary, &tuner, opts)
}

fn design_point(
    net: &NetworkSpec,
    boundary: usize,
    tuner: &Tuner,
    opts: &TuneOptions,
) -> Result<DesignPoint, AllocError> {
    let assignments = tuner.assignments();
    let mut mem = opts.mem.clone();
    mem.stream_pw = vec![1; net.len()];
    for a in &assignments {
        mem.stream_pw[a.layer_id] = a.pw;
    }
    let footprint = design_point_memory(net, boundary, &mem)?;
    let t_max = tuner.t_max();
    let total_macs = net.layers.iter().map(mac_count).sum();
    Ok(DesignPoint {
        network: net.name.clone(),
        boundary,
        dsp_used: tuner.dsp_used(),
        mac_units: assignments.iter().map(CeAssignment::units).sum(),
        assignments,
        footprint,
        t_max,
        total_macs,
        clock_hz: opts.clock_hz,
        throughput_gops: 2.0 * total_macs as f64 * opts.clock_hz / t_max as f64 / 1e9,
        fps: opts.clock_hz / t_max as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Throughput {
    pub gops: f64,
    pub fps: f64,
    /// Indexed like `DesignPoint::assignments`.
    pub per_layer_efficiency: Vec<f64>,
    pub system_efficiency: f64,
}

pub fn throughput(design: &DesignPoint, net: &NetworkSpec, clock_hz: f64) -> Throughput {
    let t = design.t_max as f64;
    let per_layer_efficiency = design
        .assignments
        .iter()
        .map(|a| mac_count(&net.layers[a.layer_id]) as f64 / (t * a.units() as f64))
        .collect();
    let raw: u64 = design
        .assignments
        .iter()
        .map(|a| mac_count(&net.layers[a.layer_id]))
        .sum();
    Throughput {
        gops: 2.0 * design.total_macs as f64 * clock_hz / t / 1e9,
        fps: clock_hz / t,
        per_layer_efficiency,
        system_efficiency: raw as f64 / (t * design.mac_units as f64),
    }
}

impl DesignPoint {
    /// Useful MACs over allocated MAC-cycles at the bottleneck rate.
    pub fn efficiency(&self) -> f64 {
        self.total_macs as f64 / (self.t_max as f64 * self.mac_units as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Boundary after the first pass (lowest SRAM).
    pub min_boundary: usize,
    pub final_boundary: usize,
    pub at_min: MemoryFootprint,
    pub at_final: MemoryFootprint,
}

/// Consecutive layer ranges that each close where the feature map narrows
/// again: at a weight layer fed by a depthwise or pooling layer (the
/// projection of a DSC pair or bottleneck), extended by a join that directly
/// follows it.
pub fn allocation_units(net: &NetworkSpec) -> Vec<std::ops::Range<usize>> {
    let mut units = Vec::new();
    let mut start = 0;
    for (i, l) in net.layers.iter().enumerate() {
        let next_is_join = net.layers.get(i + 1).is_some_and(|n| n.kind.is_join());
        let closes = match l.kind {
            LayerKind::Stc | LayerKind::Pwc | LayerKind::Fc => {
                let producer = l.src.or(i.checked_sub(1));
                producer
                    .is_some_and(|p| matches!(net.layers[p].kind, LayerKind::Dwc | LayerKind::Pool))
                    && !next_is_join
            }
            LayerKind::ScbAdd | LayerKind::Concat => true,
            LayerKind::Dwc | LayerKind::Pool => false,
        };
        if closes {
            units.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < net.len() {
        units.push(start..net.len());
    }
    units
}

/// Moves the FRCE/WRCE boundary forward while doing so does not grow SRAM,
/// then keeps moving it while SRAM stays within `sram_budget`.
///
/// The first pass compares whole allocation units. Layer by layer, a
/// depthwise layer is always cheaper on a WRCE and an expansion layer's
/// weights outweigh its narrow input, so a per-layer test would stall in
/// front of every bottleneck even where moving it as a whole saves memory.
pub fn balanced_memory_allocation(
    net: &NetworkSpec,
    sram_budget: u64,
    mem: &MemOptions,
) -> Result<Allocation, AllocError> {
    let mut boundary = 0;
    for unit in allocation_units(net) {
        let frce: u64 = unit.clone().map(|i| frce_cost(net, i)).sum();
        let wrce: u64 = unit.clone().map(|i| wrce_cost(net, i, 1)).sum();
        if frce > wrce {
            break;
        }
        boundary = unit.end;
    }
    let at_min = design_point_memory(net, boundary, mem)?;
    if at_min.sram_total_bytes > sram_budget {
        return Err(AllocError::SramInfeasible {
            min_sram: at_min.sram_total_bytes,
            budget: sram_budget,
        });
    }
    let mut at_final = at_min;
    while at_final.boundary < net.len() {
        let next = design_point_memory(net, at_final.boundary + 1, mem)?;
        if next.sram_total_bytes > sram_budget {
            break;
        }
        at_final = next;
    }
    Ok(Allocation {
        min_boundary: boundary,
        final_boundary: at_final.boundary,
        at_min,
        at_final,
    })
}

/// The boundary with the lowest SRAM over a full sweep (first on ties).
pub fn min_sram_boundary(net: &NetworkSpec, mem: &MemOptions) -> MemoryFootprint {
    boundary_sweep(net, mem)
        .into_iter()
        .min_by_key(|f| (f.sram_total_bytes, f.boundary))
        .expect("sweep is never empty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Platform {
    pub name: String,
    pub bram_count: u32,
    pub dsp_count: u32,
    pub sram_cap: f64,
    pub dsp_cap: f64,
    pub clock_mhz: f64,
}

/// One block RAM holds 36 Kbit.
pub const BRAM_BITS: u64 = 36 * 1024;

impl Platform {
    pub fn zc706() -> Platform {
        Platform {
            name: "zc706".into(),
            bram_count: 545,
            dsp_count: 900,
            sram_cap: 0.75,
            dsp_cap: 0.95,
            clock_mhz: 200.0,
        }
    }

    pub fn usable_dsp(&self) -> u64 {
        (self.dsp_count as f64 * self.dsp_cap + 1e-9).floor() as u64
    }

    pub fn usable_sram_bytes(&self) -> u64 {
        (self.bram_count as f64 * BRAM_BITS as f64 * self.sram_cap / 8.0 + 1e-9).floor() as u64
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub budget: u64,
    /// `None` when the budget cannot give every layer one MAC.
    pub design: Option<SweepDesign>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepDesign {
    pub efficiency: f64,
    pub fps: f64,
    pub mac_units: u64,
    pub t_max: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub mean: f64,
    /// Population standard deviation over feasible points.
    pub stddev: f64,
}

/// Tunes at every budget (counted in MAC units) and summarises the
/// resulting efficiencies.
pub fn efficiency_sweep(
    net: &NetworkSpec,
    boundary: usize,
    budgets: &[u64],
    opts: &TuneOptions,
) -> SweepCurve {
    let opts = TuneOptions {
        dsp_mode: DspMode::Plain,
        ..opts.clone()
    };
    let points: Vec<SweepPoint> = budgets
        .par_iter()
        .map(|&budget| SweepPoint {
            budget,
            design: dynamic_parallelism_tuning(net, boundary, budget, &opts)
                .ok()
                .map(|d| SweepDesign {
                    efficiency: d.efficiency(),
                    fps: d.fps,
                    mac_units: d.mac_units,
                    t_max: d.t_max,
                }),
        })
        .collect();
    let effs: Vec<f64> = points
        .iter()
        .filter_map(|p| p.design.map(|d| d.efficiency))
        .collect();
    let n = effs.len().max(1) as f64;
    let mean = effs.iter().sum::<f64>() / n;
    let var = effs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    SweepCurve {
        points,
        mean,
        stddev: var.sqrt(),
    }
}

/// The 60..=4000 MAC-unit grid with a step of 20.
pub fn default_sweep_budgets() -> Vec<u64> {
    (60..=4000).step_by(20).collect()
}
