//! Command-line front end. Every command renders one or more CSV artifacts;
//! they go to `--out-dir` (or `$LWSTREAM_OUT_DIR`) when set and to stdout
//! otherwise.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::allocator::{
    balanced_memory_allocation, default_sweep_budgets, dynamic_parallelism_tuning,
    efficiency_sweep, min_sram_boundary, throughput, BumpPolicy, DesignPoint, DspMode, Granularity,
    Platform, TuneOptions,
};
use crate::costmodel::network_totals;
use crate::dfsim::{simulate_traced, Scheme, SimConfig};
use crate::error::Error;
use crate::memmodel::{boundary_sweep, mib, Converter, MemOptions};
use crate::netspec::{builtin, resolve_network, NetworkSpec, BUILTIN_NAMES};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "lwstream",
    version,
    about = "Streaming CNN accelerator explorer"
)]
pub struct RunConfig {
    /// Directory for artifacts; stdout when unset.
    #[arg(long, global = true, env = "LWSTREAM_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Per-layer MACs, FM accesses and parameters.
    Analyze {
        #[arg(long)]
        network: String,
    },
    /// Group-boundary selection under an SRAM budget.
    Allocate {
        #[arg(long)]
        network: String,
        #[command(flatten)]
        platform: PlatformArgs,
        /// Override the SRAM budget, in MiB.
        #[arg(long)]
        sram_mib: Option<f64>,
        /// Emit SRAM and DRAM for every boundary instead of the summary.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        converter: ConverterArgs,
    },
    /// Parallelism tuning under a DSP budget.
    Tune {
        #[arg(long)]
        network: String,
        #[command(flatten)]
        platform: PlatformArgs,
        /// DSP budget; defaults to the platform's usable DSPs.
        #[arg(long)]
        dsp_budget: Option<u64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Fgpm)]
        mode: ModeArg,
        /// Pack two 8-bit MACs per DSP outside depthwise layers.
        #[arg(long, action = ArgAction::Set, num_args = 0..=1,
              default_value_t = true, default_missing_value = "true")]
        decompose: bool,
        /// `auto` or a layer index.
        #[arg(long, default_value = "auto")]
        boundary: String,
        #[arg(long, value_enum, default_value_t = PolicyArg::MinUnits)]
        policy: PolicyArg,
        #[command(flatten)]
        converter: ConverterArgs,
    },
    /// MAC-efficiency sweep over MAC-unit budgets.
    Sweep {
        /// Builtin name or path; all builtins when omitted.
        #[arg(long)]
        network: Option<String>,
        #[arg(long, default_value_t = 60)]
        min: u64,
        #[arg(long, default_value_t = 4000)]
        max: u64,
        #[arg(long, default_value_t = 20)]
        step: u64,
        #[arg(long, value_enum, default_value_t = PolicyArg::MinUnits)]
        policy: PolicyArg,
    },
    /// Line-buffer dataflow simulation.
    Simulate {
        #[arg(long)]
        f: u32,
        #[arg(long, default_value_t = 3)]
        k: u32,
        #[arg(long, default_value_t = 1)]
        stride: u32,
        #[arg(long, default_value_t = 1)]
        pad: u32,
        #[arg(long, default_value = "dataflow")]
        scheme: Scheme,
        #[arg(long, default_value_t = 4)]
        frames: u32,
        #[arg(long, default_value_t = 1)]
        write_rate: u32,
        /// Also emit the per-cycle trace.
        #[arg(long)]
        trace: bool,
    },
    /// Memory curves and performance summaries for the benchmark networks.
    Report {
        /// Emit the benchmark memory curves and summary tables.
        #[arg(long = "paper-tables")]
        tables: bool,
        #[command(flatten)]
        platform: PlatformArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fgpm,
    Factorized,
}

impl From<ModeArg> for Granularity {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fgpm => Granularity::Fgpm,
            ModeArg::Factorized => Granularity::Factorized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    MinUnits,
    Chain,
}

impl From<PolicyArg> for BumpPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::MinUnits => BumpPolicy::MinUnits,
            PolicyArg::Chain => BumpPolicy::PreferredChain,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PlatformArgs {
    #[arg(long, default_value = "zc706")]
    pub platform: String,
    #[arg(long)]
    pub bram_count: Option<u32>,
    #[arg(long)]
    pub dsp_count: Option<u32>,
    #[arg(long)]
    pub sram_cap: Option<f64>,
    #[arg(long)]
    pub dsp_cap: Option<f64>,
    #[arg(long)]
    pub clock_mhz: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ConverterArgs {
    /// Order-converter buffer: `full` (one FM), `none`, or a byte count.
    #[arg(long, default_value = "full")]
    pub converter: String,
}

impl ConverterArgs {
    fn options(&self) -> Result<MemOptions, Error> {
        let converter = match self.converter.as_str() {
            "full" => Converter::FullFm,
            "none" => Converter::None,
            s => Converter::Bytes(s.parse().map_err(|_| {
                Error::Config(format!(
                    "--converter: expected full, none or bytes, got `{s}`"
                ))
            })?),
        };
        Ok(MemOptions {
            converter,
            stream_pw: Vec::new(),
        })
    }
}

pub fn platform_presets() -> Vec<Platform> {
    vec![Platform::zc706()]
}

impl PlatformArgs {
    pub fn resolve(&self) -> Result<Platform, Error> {
        let mut p = platform_presets()
            .into_iter()
            .find(|p| p.name == self.platform)
            .ok_or_else(|| Error::Config(format!("unknown platform `{}`", self.platform)))?;
        if let Some(v) = self.bram_count {
            p.bram_count = v;
        }
        if let Some(v) = self.dsp_count {
            p.dsp_count = v;
        }
        if let Some(v) = self.sram_cap {
            p.sram_cap = v;
        }
        if let Some(v) = self.dsp_cap {
            p.dsp_cap = v;
        }
        if let Some(v) = self.clock_mhz {
            p.clock_mhz = v;
        }
        let cap_ok = |c: f64| c > 0.0 && c <= 1.0;
        if !cap_ok(p.sram_cap) || !cap_ok(p.dsp_cap) {
            return Err(Error::Config("utilization caps must lie in (0, 1]".into()));
        }
        if p.clock_mhz <= 0.0 || !p.clock_mhz.is_finite() {
            return Err(Error::Config("--clock-mhz must be positive".into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

impl Artifact {
    fn new(name: impl Into<String>, content: String) -> Artifact {
        Artifact {
            name: name.into(),
            content,
        }
    }
}

/// Runs the command and emits its artifacts.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), Error> {
    let artifacts = execute(&cfg.command)?;
    match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
            for a in &artifacts {
                let path = dir.join(&a.name);
                std::fs::write(&path, &a.content).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                writeln!(stdout, "wrote {}", path.display()).map_err(stdout_err)?;
            }
        }
        None => {
            for (i, a) in artifacts.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout).map_err(stdout_err)?;
                }
                stdout.write_all(a.content.as_bytes()).map_err(stdout_err)?;
            }
        }
    }
    Ok(())
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

/// Renders the artifacts of one command without writing them anywhere.
pub fn execute(cmd: &Command) -> Result<Vec<Artifact>, Error> {
    match cmd {
        Command::Analyze { network } => {
            let net = resolve_network(network)?;
            Ok(vec![Artifact::new(
                format!("{}_analyze.csv", net.name),
                analyze_csv(&net),
            )])
        }
        Command::Allocate {
            network,
            platform,
            sram_mib,
            sweep,
            converter,
        } => {
            let net = resolve_network(network)?;
            let mem = converter.options()?;
            if *sweep {
                return Ok(vec![Artifact::new(
                    format!("{}_mem_sweep.csv", net.name),
                    mem_sweep_csv(&net, &mem),
                )]);
            }
            let platform = platform.resolve()?;
            let budget = match sram_mib {
                Some(m) if *m > 0.0 => (m * (1u64 << 20) as f64) as u64,
                Some(_) => return Err(Error::Config("--sram-mib must be positive".into())),
                None => platform.usable_sram_bytes(),
            };
            let a = balanced_memory_allocation(&net, budget, &mem)?;
            let mut s = String::from(
                "network,stage,boundary,boundary_layer,sram_bytes,dram_bytes_per_frame,sram_mib,dram_mib\n",
            );
            for (stage, fp) in [("min_sram", &a.at_min), ("budget", &a.at_final)] {
                let _ = writeln!(
                    s,
                    "{},{stage},{},{},{},{},{:.4},{:.4}",
                    net.name,
                    fp.boundary,
                    boundary_name(&net, fp.boundary),
                    fp.sram_total_bytes,
                    fp.dram_total_bytes(),
                    mib(fp.sram_total_bytes),
                    mib(fp.dram_total_bytes())
                );
            }
            Ok(vec![Artifact::new(format!("{}_allocate.csv", net.name), s)])
        }
        Command::Tune {
            network,
            platform,
            dsp_budget,
            mode,
            decompose,
            boundary,
            policy,
            converter,
        } => {
            let net = resolve_network(network)?;
            let platform = platform.resolve()?;
            let mem = converter.options()?;
            let boundary = match boundary.as_str() {
                "auto" => {
                    balanced_memory_allocation(&net, platform.usable_sram_bytes(), &mem)?
                        .final_boundary
                }
                s => {
                    let b: usize = s.parse().map_err(|_| {
                        Error::Config(format!("--boundary: expected auto or an index, got `{s}`"))
                    })?;
                    if b > net.len() {
                        return Err(Error::Config(format!(
                            "--boundary {b} exceeds layer count {}",
                            net.len()
                        )));
                    }
                    b
                }
            };
            let opts = TuneOptions {
                mode: (*mode).into(),
                dsp_mode: if *decompose {
                    DspMode::Decomposed
                } else {
                    DspMode::Plain
                },
                policy: (*policy).into(),
                clock_hz: platform.clock_hz(),
                mem,
            };
            let budget = dsp_budget.unwrap_or_else(|| platform.usable_dsp());
            let d = dynamic_parallelism_tuning(&net, boundary, budget, &opts)?;
            Ok(vec![
                Artifact::new(
                    format!("{}_tune_layers.csv", net.name),
                    tune_layers_csv(&net, &d),
                ),
                Artifact::new(
                    format!("{}_tune_summary.csv", net.name),
                    format!("{}{}", SUMMARY_HEADER, summary_row(&net, &d)),
                ),
            ])
        }
        Command::Sweep {
            network,
            min,
            max,
            step,
            policy,
        } => {
            if *step == 0 || min > max {
                return Err(Error::Config("sweep needs step >= 1 and min <= max".into()));
            }
            let nets = match network {
                Some(n) => vec![resolve_network(n)?],
                None => all_builtins()?,
            };
            let budgets: Vec<u64> = (*min..=*max).step_by(*step as usize).collect();
            let (points, summary) = sweep_csv(&nets, &budgets, (*policy).into());
            Ok(vec![
                Artifact::new("sweep_points.csv", points),
                Artifact::new("sweep_summary.csv", summary),
            ])
        }
        Command::Simulate {
            f,
            k,
            stride,
            pad,
            scheme,
            frames,
            write_rate,
            trace,
        } => {
            let cfg = SimConfig {
                frames: *frames,
                write_rate: *write_rate,
                ..SimConfig::new(*f, *k, *stride, *pad, *scheme)
            };
            let (r, t) = simulate_traced(&cfg)?;
            let mut s = String::from(
                "f,k,stride,pad,scheme,frames,cycles_total,cycles_per_frame,windows_emitted,pe_active_cycles,pe_efficiency,buffer_lines_used,write_stall_cycles\n",
            );
            let _ = writeln!(
                s,
                "{f},{k},{stride},{pad},{scheme},{frames},{},{},{},{},{:.6},{},{}",
                r.cycles_total,
                r.cycles_per_frame,
                r.windows_emitted,
                r.pe_active_cycles,
                r.pe_efficiency,
                r.buffer_lines_used,
                r.write_stall_cycles
            );
            let mut out = vec![Artifact::new("simulate_summary.csv", s)];
            if *trace {
                let mut buf = Vec::new();
                t.write_csv(&mut buf).expect("writing to memory");
                out.push(Artifact::new(
                    "simulate_trace.csv",
                    String::from_utf8(buf).expect("trace is ASCII"),
                ));
            }
            Ok(out)
        }
        Command::Report { tables, platform } => {
            if !tables {
                return Err(Error::Config("report needs --paper-tables".into()));
            }
            report(&platform.resolve()?)
        }
    }
}

fn all_builtins() -> Result<Vec<NetworkSpec>, Error> {
    BUILTIN_NAMES
        .iter()
        .map(|n| builtin(n).map_err(Error::from))
        .collect()
}

fn boundary_name(net: &NetworkSpec, boundary: usize) -> &str {
    net.layers.get(boundary).map_or("end", |l| l.name.as_str())
}

pub fn analyze_csv(net: &NetworkSpec) -> String {
    let totals = network_totals(net);
    let mut s = String::from("id,name,kind,macs,fm_access,weights\n");
    for (l, c) in net.layers.iter().zip(&totals.per_layer) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            l.id, l.name, l.kind, c.macs, c.fm_access, c.weight_count
        );
    }
    s
}

pub fn mem_sweep_csv(net: &NetworkSpec, mem: &MemOptions) -> String {
    let mut s = String::from("boundary_layer,sram_bytes,dram_bytes_per_frame\n");
    for fp in boundary_sweep(net, mem) {
        let _ = writeln!(
            s,
            "{},{},{}",
            fp.boundary,
            fp.sram_total_bytes,
            fp.dram_total_bytes()
        );
    }
    s
}

fn tune_layers_csv(net: &NetworkSpec, d: &DesignPoint) -> String {
    let th = throughput(d, net, d.clock_hz);
    let mut s = String::from("layer_id,name,ce,pw,pf,t_cycles,efficiency\n");
    for (a, e) in d.assignments.iter().zip(&th.per_layer_efficiency) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{:.6}",
            a.layer_id, net.layers[a.layer_id].name, a.kind, a.pw, a.pf, a.t_cycles, e
        );
    }
    s
}

const SUMMARY_HEADER: &str = "network,boundary,boundary_layer,fps,gops,dsp_used,mac_units,efficiency,sram_bytes,dram_bytes_per_frame\n";

fn summary_row(net: &NetworkSpec, d: &DesignPoint) -> String {
    format!(
        "{},{},{},{:.2},{:.2},{},{},{:.6},{},{}\n",
        net.name,
        d.boundary,
        boundary_name(net, d.boundary),
        d.fps,
        d.throughput_gops,
        d.dsp_used,
        d.mac_units,
        d.efficiency(),
        d.footprint.sram_total_bytes,
        d.footprint.dram_total_bytes()
    )
}

fn sweep_csv(nets: &[NetworkSpec], budgets: &[u64], policy: BumpPolicy) -> (String, String) {
    let mut points = String::from("network,mode,budget,status,efficiency,fps,mac_units\n");
    let mut summary = String::from("network,mode,feasible_points,mean_efficiency,stddev\n");
    for net in nets {
        let boundary = min_sram_boundary(net, &MemOptions::default()).boundary;
        for (label, mode) in [
            ("fgpm", Granularity::Fgpm),
            ("factorized", Granularity::Factorized),
        ] {
            let opts = TuneOptions {
                mode,
                policy,
                ..Default::default()
            };
            let curve = efficiency_sweep(net, boundary, budgets, &opts);
            let mut feasible = 0;
            for p in &curve.points {
                match p.design {
                    Some(d) => {
                        feasible += 1;
                        let _ = writeln!(
                            points,
                            "{},{label},{},ok,{:.6},{:.3},{}",
                            net.name, p.budget, d.efficiency, d.fps, d.mac_units
                        );
                    }
                    None => {
                        let _ = writeln!(points, "{},{label},{},infeasible,,,", net.name, p.budget);
                    }
                }
            }
            let _ = writeln!(
                summary,
                "{},{label},{feasible},{:.6},{:.6}",
                net.name, curve.mean, curve.stddev
            );
        }
    }
    (points, summary)
}

fn report(platform: &Platform) -> Result<Vec<Artifact>, Error> {
    let mem = MemOptions::default();
    let mut out = Vec::new();
    let mut perf = String::from(
        "network,stage,boundary,boundary_layer,sram_mib,dram_mib,dsp_used,mac_units,fps,gops,efficiency\n",
    );
    for name in ["mobilenet_v2", "shufflenet_v2"] {
        let net = builtin(name)?;
        let mut curve =
            String::from("boundary_layer,name,sram_bytes,dram_bytes_per_frame,sram_mib,dram_mib\n");
        for fp in boundary_sweep(&net, &mem) {
            let _ = writeln!(
                curve,
                "{},{},{},{},{:.4},{:.4}",
                fp.boundary,
                boundary_name(&net, fp.boundary),
                fp.sram_total_bytes,
                fp.dram_total_bytes(),
                mib(fp.sram_total_bytes),
                mib(fp.dram_total_bytes())
            );
        }
        out.push(Artifact::new(format!("{name}_mem_curve.csv"), curve));

        let alloc = balanced_memory_allocation(&net, platform.usable_sram_bytes(), &mem)?;
        let opts = TuneOptions {
            clock_hz: platform.clock_hz(),
            ..Default::default()
        };
        for (stage, b) in [
            ("min_sram", alloc.min_boundary),
            ("budget", alloc.final_boundary),
        ] {
            let d = dynamic_parallelism_tuning(&net, b, platform.usable_dsp(), &opts)?;
            let _ = writeln!(
                perf,
                "{name},{stage},{b},{},{:.4},{:.4},{},{},{:.2},{:.2},{:.6}",
                boundary_name(&net, b),
                mib(d.footprint.sram_total_bytes),
                mib(d.footprint.dram_total_bytes()),
                d.dsp_used,
                d.mac_units,
                d.fps,
                d.throughput_gops,
                d.efficiency()
            );
        }
    }
    out.push(Artifact::new("performance_summary.csv", perf));
    let nets = all_builtins()?;
    let (_, summary) = sweep_csv(&nets, &default_sweep_budgets(), BumpPolicy::MinUnits);
    out.push(Artifact::new("efficiency_summary.csv", summary));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("lwstream").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn analyze_header() {
        let a = execute(&parse(&["analyze", "--network", "mobilenet_v1"]).command).unwrap();
        assert!(a[0]
            .content
            .starts_with("id,name,kind,macs,fm_access,weights\n"));
    }

    #[test]
    fn custom_caps() {
        let cfg = parse(&[
            "report",
            "--paper-tables",
            "--sram-cap",
            "1.0",
            "--dsp-cap",
            "1.0",
        ]);
        let Command::Report { platform, .. } = cfg.command else {
            unreachable!()
        };
        let p = platform.resolve().unwrap();
        assert_eq!(p.usable_dsp(), 900);
        assert_eq!(p.usable_sram_bytes(), 545 * 36 * 1024 / 8);
        let bad = parse(&["report", "--sram-cap", "1.5"]);
        let Command::Report { platform, .. } = bad.command else {
            unreachable!()
        };
        assert_eq!(platform.resolve().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn decompose_flag_forms() {
        for (args, want) in [
            (vec!["tune", "--network", "x"], true),
            (vec!["tune", "--network", "x", "--decompose"], true),
            (
                vec!["tune", "--network", "x", "--decompose", "false"],
                false,
            ),
        ] {
            let Command::Tune { decompose, .. } = parse(&args).command else {
                unreachable!()
            };
            assert_eq!(decompose, want);
        }
    }

    #[test]
    fn infeasible_dsp_budget_exit_code() {
        let cfg = parse(&[
            "tune",
            "--network",
            "mobilenet_v1",
            "--dsp-budget",
            "3",
            "--boundary",
            "0",
        ]);
        assert_eq!(execute(&cfg.command).unwrap_err().exit_code(), 3);
    }
}
