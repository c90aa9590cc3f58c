//! Cycle-level model of a convolution line buffer fed by a unit-rate pixel
//! stream.
//!
//! Two padding schemes are compared. `Direct` writes the zero border through
//! the same port as real pixels, so each frame streams `(F+p)(F+2p)` slots
//! (adjacent frames share their `p` border rows, at most `k` of them). `DataflowOriented` stores
//! only the `F^2` real pixels: the address generator substitutes zeros when a
//! window reaches over the border, and a stride of two or more gets one extra
//! buffer line so that the next window row can fill while the current one
//! drains.
//!
//! The buffer is a circular FIFO of `lines * width` pixel slots. A write
//! stalls while the slot it would overwrite is still referenced by an
//! unfinished window. The PE handles windows strictly in raster order, one at
//! a time, each taking `window_cycles`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("simulation stopped making progress at cycle {0}")]
    Deadlock(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Direct,
    DataflowOriented,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Direct => "direct",
            Scheme::DataflowOriented => "dataflow",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Scheme::Direct),
            "dataflow" | "dataflow_oriented" | "dataflow-oriented" => Ok(Scheme::DataflowOriented),
            _ => Err(format!("unknown scheme `{s}` (direct|dataflow)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub f: u32,
    pub k: u32,
    pub stride: u32,
    pub pad: u32,
    pub scheme: Scheme,
    pub frames: u32,
    pub write_rate: u32,
    /// PE cycles per window; `None` means `stride^2`, which matches the PE
    /// rate to the input rate.
    pub window_cycles: Option<u32>,
    /// Overrides the scheme's buffer depth; `Some(u32::MAX)` is unbounded.
    pub buffer_lines: Option<u32>,
}

impl SimConfig {
    pub fn new(f: u32, k: u32, stride: u32, pad: u32, scheme: Scheme) -> SimConfig {
        SimConfig {
            f,
            k,
            stride,
            pad,
            scheme,
            frames: 4,
            write_rate: 1,
            window_cycles: None,
            buffer_lines: None,
        }
    }

    pub fn f_out(&self) -> u32 {
        (self.f + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn window_cycles(&self) -> u32 {
        self.window_cycles.unwrap_or(self.stride * self.stride)
    }

    /// Slots per stored line.
    pub fn width(&self) -> u32 {
        match self.scheme {
            Scheme::Direct => self.f + 2 * self.pad,
            Scheme::DataflowOriented => self.f,
        }
    }

    pub fn lines(&self) -> u32 {
        if let Some(l) = self.buffer_lines {
            return l;
        }
        match self.scheme {
            Scheme::DataflowOriented if self.stride >= 2 => self.k + 1,
            _ => self.k,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.k == 0 || self.stride == 0 || self.f == 0 {
            return bad("f, k and stride must be >= 1");
        }
        if self.f < self.k {
            return bad("f must be >= k");
        }
        if self.frames == 0 || self.write_rate == 0 || self.window_cycles() == 0 {
            return bad("frames, write_rate and window_cycles must be >= 1");
        }
        if self.lines() == 0 {
            return bad("buffer needs at least one line");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub cycles_total: u64,
    /// Steady-state spacing between the last windows of consecutive frames.
    pub cycles_per_frame: u64,
    pub windows_emitted: u64,
    pub pe_active_cycles: u64,
    /// Busy share of a steady-state frame.
    pub pe_efficiency: f64,
    pub buffer_lines_used: u32,
    pub pixels_written: u64,
    /// Zero border slots written through the input port.
    pub padding_written: u64,
    /// Window taps served by the address generator instead of the buffer.
    pub padding_generated: u64,
    /// Window taps served from the buffer.
    pub stored_reads: u64,
    pub write_stall_cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowCoord {
    pub frame: u32,
    pub oy: u32,
    pub ox: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub cycle: u64,
    pub event: &'static str,
    pub buffer_occupancy: u64,
    pub pe_active: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    /// Windows in the order the PE started them.
    pub windows: Vec<WindowCoord>,
}

impl SimTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cycle,event,buffer_occupancy,pe_active")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.cycle,
                r.event,
                r.buffer_occupancy,
                u8::from(r.pe_active)
            )?;
        }
        Ok(())
    }
}

struct Window {
    coord: WindowCoord,
    taps: Vec<u64>,
    /// One past the highest slot the window reads; 0 if it only reads padding.
    ready_at: u64,
    generated: u64,
}

struct Stream {
    slots: u64,
    padding_slots: u64,
    windows: Vec<Window>,
}

fn build_stream(cfg: &SimConfig) -> Stream {
    let (f, k, s, p) = (
        cfg.f as i64,
        cfg.k as i64,
        cfg.stride as i64,
        cfg.pad as i64,
    );
    let w = cfg.width() as i64;
    let f_out = cfg.f_out() as i64;
    let frames = cfg.frames as i64;
    // Border rows shared by consecutive frames; more than k shared rows
    // cannot all stay resident in a k-line buffer.
    let shared = p.min(k);
    let pitch = f + 2 * p - shared;
    let mut windows = Vec::with_capacity((frames * f_out * f_out) as usize);
    for fr in 0..frames {
        for oy in 0..f_out {
            for ox in 0..f_out {
                let mut taps = Vec::with_capacity((k * k) as usize);
                let mut generated = 0;
                for dy in 0..k {
                    for dx in 0..k {
                        // Padded-image coordinates.
                        let (py, px) = (oy * s + dy, ox * s + dx);
                        match cfg.scheme {
                            Scheme::Direct => {
                                let row = fr * pitch + py;
                                taps.push((row * w + px) as u64);
                            }
                            Scheme::DataflowOriented => {
                                let (y, x) = (py - p, px - p);
                                if (0..f).contains(&y) && (0..f).contains(&x) {
                                    taps.push(((fr * f + y) * w + x) as u64);
                                } else {
                                    generated += 1;
                                }
                            }
                        }
                    }
                }
                let ready_at = taps.iter().max().map_or(0, |&m| m + 1);
                windows.push(Window {
                    coord: WindowCoord {
                        frame: fr as u32,
                        oy: oy as u32,
                        ox: ox as u32,
                    },
                    taps,
                    ready_at,
                    generated,
                });
            }
        }
    }
    let (slots, padding_slots) = match cfg.scheme {
        Scheme::Direct => {
            let rows = shared + frames * pitch;
            let slots = rows * w;
            (slots as u64, (slots - frames * f * f) as u64)
        }
        Scheme::DataflowOriented => ((frames * f * f) as u64, 0),
    };
    Stream {
        slots,
        padding_slots,
        windows,
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<SimResult, SimError> {
    run(cfg, false).map(|(r, _)| r)
}

/// Like [`simulate`], also recording one trace row per cycle.
pub fn simulate_traced(cfg: &SimConfig) -> Result<(SimResult, SimTrace), SimError> {
    run(cfg, true)
}

fn run(cfg: &SimConfig, trace: bool) -> Result<(SimResult, SimTrace), SimError> {
    cfg.validate()?;
    let stream = build_stream(cfg);
    let capacity = (cfg.lines() as u64).saturating_mul(cfg.width() as u64);
    let mut refs = vec![0u32; stream.slots as usize];
    for w in &stream.windows {
        for &t in &w.taps {
            refs[t as usize] += 1;
        }
    }
    let stored_reads: u64 = refs.iter().map(|&r| r as u64).sum();
    let wc = cfg.window_cycles() as u64;
    let per_frame = (cfg.f_out() as usize).pow(2);

    let mut out = SimTrace::default();
    let mut written: u64 = 0;
    let mut live: u64 = 0;
    let mut next_window = 0usize;
    // Window in service and the cycle it finishes.
    let mut busy: Option<(usize, u64)> = None;
    let mut frame_done = vec![0u64; cfg.frames as usize];
    let mut stalls = 0u64;
    let mut cycle: u64 = 0;
    let mut idle_streak = 0u64;

    while next_window < stream.windows.len() || busy.is_some() {
        // Release a window that finishes at the start of this cycle.
        if let Some((idx, end)) = busy {
            if end <= cycle {
                for &t in &stream.windows[idx].taps {
                    refs[t as usize] -= 1;
                    if refs[t as usize] == 0 {
                        live -= 1;
                    }
                }
                let c = stream.windows[idx].coord;
                frame_done[c.frame as usize] = end;
                busy = None;
            }
        }

        let mut wrote = 0;
        let mut stalled = false;
        while wrote < cfg.write_rate && written < stream.slots {
            if written >= capacity && refs[(written - capacity) as usize] > 0 {
                stalled = true;
                break;
            }
            if refs[written as usize] > 0 {
                live += 1;
            }
            written += 1;
            wrote += 1;
        }
        if stalled {
            stalls += 1;
        }

        let mut started = false;
        if busy.is_none() && next_window < stream.windows.len() {
            let w = &stream.windows[next_window];
            if w.ready_at <= written {
                busy = Some((next_window, cycle + wc));
                if trace {
                    out.windows.push(w.coord);
                }
                next_window += 1;
                started = true;
            }
        }

        if trace {
            let event = match (wrote > 0, stalled, started) {
                (true, _, true) => "write+start",
                (true, _, false) => "write",
                (false, true, true) => "stall+start",
                (false, true, false) => "stall",
                (false, false, true) => "start",
                (false, false, false) => "idle",
            };
            out.rows.push(TraceRow {
                cycle,
                event,
                buffer_occupancy: live,
                pe_active: busy.is_some(),
            });
        }

        if wrote == 0 && !started && busy.is_none() {
            idle_streak += 1;
            if idle_streak > 2 {
                return Err(SimError::Deadlock(cycle));
            }
        } else {
            idle_streak = 0;
        }
        cycle += 1;
    }

    let windows = stream.windows.len() as u64;
    let generated: u64 = stream.windows.iter().map(|w| w.generated).sum();
    let n = frame_done.len();
    let cycles_per_frame = if n >= 2 {
        frame_done[n - 1] - frame_done[n - 2]
    } else {
        frame_done[0]
    };
    let result = SimResult {
        cycles_total: cycle,
        cycles_per_frame,
        windows_emitted: windows,
        pe_active_cycles: windows * wc,
        pe_efficiency: (per_frame as u64 * wc) as f64 / cycles_per_frame as f64,
        buffer_lines_used: cfg.lines(),
        pixels_written: stream.slots - stream.padding_slots,
        padding_written: stream.padding_slots,
        padding_generated: generated,
        stored_reads,
        write_stall_cycles: stalls,
    };
    Ok((result, out))
}

/// Completion times of the last window of every frame.
pub fn frame_completions(cfg: &SimConfig) -> Result<Vec<u64>, SimError> {
    let (_, t) = simulate_traced(cfg)?;
    let per_frame = (cfg.f_out() as usize).pow(2);
    let wc = cfg.window_cycles() as u64;
    // Start cycles are recorded per trace row; recover each window's start.
    let mut starts = t
        .rows
        .iter()
        .filter(|r| r.event.ends_with("start"))
        .map(|r| r.cycle);
    let mut out = Vec::new();
    for _ in 0..cfg.frames {
        let last = starts.by_ref().take(per_frame).last().unwrap_or(0);
        out.push(last + wc);
    }
    Ok(out)
}

/// `(F+2)(F+1) / F^2`: stream-length ratio of direct to address-generated
/// padding for a 3x3, stride-1, same-padded layer.
pub fn acceleration_ratio(f: u32) -> Ratio<u64> {
    assert!(f >= 1, "f must be >= 1");
    let f = f as u64;
    Ratio::new((f + 2) * (f + 1), f * f)
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedFormRow {
    pub f: u32,
    pub direct_cycles: u64,
    pub dataflow_cycles: u64,
    pub simulated: Ratio<u64>,
    pub closed_form: Ratio<u64>,
}

impl ClosedFormRow {
    pub fn matches(&self) -> bool {
        self.simulated == self.closed_form
    }
}

/// Simulates both schemes at `k=3, stride=1, pad=1` for each side.
pub fn validate_against_closed_form(f_values: &[u32]) -> Result<Vec<ClosedFormRow>, SimError> {
    f_values
        .iter()
        .map(|&f| {
            let direct = simulate(&SimConfig::new(f, 3, 1, 1, Scheme::Direct))?;
            let dataflow = simulate(&SimConfig::new(f, 3, 1, 1, Scheme::DataflowOriented))?;
            Ok(ClosedFormRow {
                f,
                direct_cycles: direct.cycles_per_frame,
                dataflow_cycles: dataflow.cycles_per_frame,
                simulated: Ratio::new(direct.cycles_per_frame, dataflow.cycles_per_frame),
                closed_form: acceleration_ratio(f),
            })
        })
        .collect()
}

/// Idle PE cycles per steady-state frame at stride 2 that a larger buffer
/// would have avoided.
pub fn stride2_bubble_count(f: u32, k: u32, scheme: Scheme) -> Result<u64, SimError> {
    let cfg = SimConfig::new(f, k, 2, (k - 1) / 2, scheme);
    let base = simulate(&cfg)?.cycles_per_frame;
    let ideal = simulate(&SimConfig {
        buffer_lines: Some(u32::MAX),
        ..cfg
    })?
    .cycles_per_frame;
    Ok(base.saturating_sub(ideal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f7_cycle_counts() {
        let d = simulate(&SimConfig::new(7, 3, 1, 1, Scheme::Direct)).unwrap();
        let o = simulate(&SimConfig::new(7, 3, 1, 1, Scheme::DataflowOriented)).unwrap();
        assert_eq!(d.cycles_per_frame, 72);
        assert_eq!(o.cycles_per_frame, 49);
        assert_eq!(d.windows_emitted, 4 * 49);
        assert_eq!(o.windows_emitted, 4 * 49);
        assert!((o.pe_efficiency - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_padding_means_identical_timing() {
        for f in [5, 8, 13] {
            let d = simulate(&SimConfig::new(f, 3, 1, 0, Scheme::Direct)).unwrap();
            let o = simulate(&SimConfig::new(f, 3, 1, 0, Scheme::DataflowOriented)).unwrap();
            assert_eq!(d.cycles_per_frame, o.cycles_per_frame, "f={f}");
        }
    }

    #[test]
    fn closed_form_ratios() {
        assert_eq!(acceleration_ratio(7), Ratio::new(72, 49));
        assert_eq!(acceleration_ratio(14), Ratio::new(240, 196));
        assert_eq!(acceleration_ratio(3), Ratio::new(20, 9));
        assert!(ratio_f64(acceleration_ratio(100_000)) < 1.0001);
        assert!(validate_against_closed_form(&[]).unwrap().is_empty());
        let rows = validate_against_closed_form(&[3, 7, 14]).unwrap();
        assert!(rows.iter().all(ClosedFormRow::matches), "{rows:?}");
    }

    #[test]
    fn stride2_bubbles() {
        assert_eq!(
            stride2_bubble_count(8, 3, Scheme::DataflowOriented).unwrap(),
            0
        );
        assert!(stride2_bubble_count(8, 3, Scheme::Direct).unwrap() > 0);
    }

    #[test]
    fn single_window_frames_still_stall_the_direct_buffer() {
        // With f = k and no padding each frame is one window spanning every
        // buffered line, so the next frame cannot enter until it finishes.
        let base = SimConfig::new(3, 3, 2, 0, Scheme::Direct);
        let direct = simulate(&base).unwrap();
        let open = simulate(&SimConfig {
            buffer_lines: Some(u32::MAX),
            ..base
        })
        .unwrap();
        assert_eq!((direct.cycles_per_frame, open.cycles_per_frame), (12, 9));
        let dataflow = simulate(&SimConfig::new(3, 3, 2, 0, Scheme::DataflowOriented)).unwrap();
        assert_eq!(dataflow.cycles_per_frame, 9);
    }

    #[test]
    fn trace_csv_has_header_and_one_row_per_cycle() {
        let (r, t) = simulate_traced(&SimConfig::new(4, 3, 1, 1, Scheme::Direct)).unwrap();
        assert_eq!(t.rows.len() as u64, r.cycles_total);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cycle,event,buffer_occupancy,pe_active\n"));
        assert_eq!(text.lines().count() as u64, r.cycles_total + 1);
    }

    #[test]
    fn invalid_configs() {
        assert!(simulate(&SimConfig::new(2, 3, 1, 1, Scheme::Direct)).is_err());
        let mut c = SimConfig::new(8, 3, 1, 1, Scheme::Direct);
        c.frames = 0;
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn frame_completions_are_periodic() {
        let cfg = SimConfig::new(8, 3, 1, 1, Scheme::Direct);
        let c = frame_completions(&cfg).unwrap();
        assert_eq!(c[3] - c[2], c[2] - c[1]);
        assert_eq!(c[3] - c[2], simulate(&cfg).unwrap().cycles_per_frame);
    }
}
