#![allow(dead_code)]

use lwstream::netspec::{LayerKind, LayerSpec, NetworkSpec};
use proptest::prelude::*;

/// One block of a generated network.
#[derive(Debug, Clone, Copy)]
pub enum Block {
    /// DWC (3x3) followed by a PWC to `n` channels.
    Dsc {
        stride2: bool,
        n: u32,
    },
    /// Expand, 3x3 DWC, project back, residual add.
    Residual {
        expand: u32,
    },
    Conv {
        n: u32,
    },
}

fn block() -> impl Strategy<Value = Block> {
    prop_oneof![
        (any::<bool>(), 1..=48u32).prop_map(|(stride2, n)| Block::Dsc { stride2, n }),
        (1..=6u32).prop_map(|expand| Block::Residual { expand }),
        (1..=48u32).prop_map(|n| Block::Conv { n }),
    ]
}

/// Random streaming-style networks: a stem convolution, a mix of
/// separable, residual and plain blocks, optionally pooling plus classifier.
pub fn network() -> impl Strategy<Value = NetworkSpec> {
    (
        4..=48u32,
        1..=4u32,
        1..=32u32,
        prop::collection::vec(block(), 0..6),
        any::<bool>(),
    )
        .prop_map(|(side, c, stem, blocks, head)| build(side, c, stem, &blocks, head))
}

pub fn build(
    side: u32,
    input_channels: u32,
    stem: u32,
    blocks: &[Block],
    head: bool,
) -> NetworkSpec {
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut f = side;
    let mut c = stem;
    layers.push(
        LayerSpec::new(0, "stem", LayerKind::Stc, side, input_channels, stem).with_kernel(3, 1, 1),
    );
    let mut scb = 0;
    for b in blocks {
        let id = layers.len();
        match *b {
            Block::Dsc { stride2, n } => {
                let s = if stride2 && f >= 2 { 2 } else { 1 };
                let d = LayerSpec::new(id, &format!("dw{id}"), LayerKind::Dwc, f, c, c)
                    .with_kernel(3, s, 1);
                f = d.f_out;
                layers.push(d);
                layers.push(LayerSpec::new(
                    id + 1,
                    &format!("pw{}", id + 1),
                    LayerKind::Pwc,
                    f,
                    c,
                    n,
                ));
                c = n;
            }
            Block::Residual { expand } => {
                scb += 1;
                let e = c * expand;
                let src = id - 1;
                layers.push(
                    LayerSpec::new(id, &format!("ex{id}"), LayerKind::Pwc, f, c, e).with_scb(scb),
                );
                layers.push(
                    LayerSpec::new(id + 1, &format!("dw{}", id + 1), LayerKind::Dwc, f, e, e)
                        .with_kernel(3, 1, 1)
                        .with_scb(scb),
                );
                layers.push(
                    LayerSpec::new(id + 2, &format!("pj{}", id + 2), LayerKind::Pwc, f, e, c)
                        .with_scb(scb),
                );
                layers.push(
                    LayerSpec::new(
                        id + 3,
                        &format!("add{}", id + 3),
                        LayerKind::ScbAdd,
                        f,
                        c,
                        c,
                    )
                    .with_shortcut(src)
                    .with_scb(scb),
                );
            }
            Block::Conv { n } => {
                layers.push(
                    LayerSpec::new(id, &format!("cv{id}"), LayerKind::Stc, f, c, n)
                        .with_kernel(3, 1, 1),
                );
                c = n;
            }
        }
    }
    if head {
        let id = layers.len();
        layers.push(LayerSpec::new(id, "pool", LayerKind::Pool, f, c, c).with_kernel(f, 1, 0));
        layers.push(LayerSpec::new(id + 1, "fc", LayerKind::Fc, 1, c, 10));
    }
    NetworkSpec {
        name: "generated".into(),
        input_side: side,
        input_channels,
        bits: 8,
        layers,
    }
    .validate()
    .expect("generated network is valid")
}

/// Tiny networks of at most four compute layers for exhaustive search.
pub fn tiny_network() -> impl Strategy<Value = NetworkSpec> {
    (
        1..=3u32,
        1..=3u32,
        prop::collection::vec((0..3u8, 1..=4u32), 1..=4),
    )
        .prop_map(|(f, c0, spec)| {
            let mut layers = Vec::new();
            let mut c = c0;
            for (id, &(kind, n)) in spec.iter().enumerate() {
                let l = match kind {
                    0 => LayerSpec::new(id, &format!("p{id}"), LayerKind::Pwc, f, c, n),
                    1 => LayerSpec::new(id, &format!("d{id}"), LayerKind::Dwc, f, c, c)
                        .with_kernel(3, 1, 1),
                    _ => LayerSpec::new(id, &format!("s{id}"), LayerKind::Stc, f, c, n)
                        .with_kernel(3, 1, 1),
                };
                c = l.n;
                layers.push(l);
            }
            NetworkSpec {
                name: "tiny".into(),
                input_side: f,
                input_channels: c0,
                bits: 8,
                layers,
            }
            .validate()
            .expect("tiny network is valid")
        })
}

/// Distinct `ceil(m / p)` values by direct enumeration, each with its
/// smallest `p`.
pub fn brute_space(m: u32) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for p in 1..=m {
        let t = m.div_ceil(p);
        if out.last().is_none_or(|&(_, lt)| lt != t) {
            out.push((p, t));
        }
    }
    out
}

/// `(f, k, stride, pad)` for f <= 16, k in {1, 3, 5}, stride <= 2, pad <= 2.
pub fn sim_grid() -> impl Iterator<Item = (u32, u32, u32, u32)> {
    (1..=16u32)
        .flat_map(|f| {
            [1u32, 3, 5].into_iter().flat_map(move |k| {
                (1..=2u32).flat_map(move |s| (0..=2u32).map(move |p| (f, k, s, p)))
            })
        })
        .filter(|&(f, k, _, _)| f >= k)
}

/// Lowest bottleneck time over every `(pw, pf)` assignment within `budget`
/// MAC units.
pub fn exhaustive_optimum(net: &NetworkSpec, budget: u64) -> u64 {
    use lwstream::allocator::{layer_work, LayerWork};

    fn go(works: &[LayerWork], left: u64, worst: u64, best: &mut u64) {
        let Some((w, rest)) = works.split_first() else {
            *best = (*best).min(worst);
            return;
        };
        // Every later layer needs at least one unit.
        let reserve = rest.len() as u64;
        for pw in 1..=w.dim_w {
            for pf in 1..=w.dim_f {
                let units = pw as u64 * pf as u64;
                if units + reserve > left {
                    break;
                }
                let t = worst.max(w.cycles(pw, pf));
                if t < *best {
                    go(rest, left - units, t, best);
                }
            }
        }
    }
    let works: Vec<_> = net.layers.iter().filter_map(layer_work).collect();
    let mut best = u64::MAX;
    go(&works, budget, 0, &mut best);
    best
}

#[derive(Debug, Default)]
pub struct OracleTally {
    pub optimal: usize,
    pub one_bump: usize,
    /// `(network text, budget, greedy, optimum)`.
    pub further: Vec<(String, u64, u64, u64)>,
}

/// Runs greedy tuning on `cases` random tiny networks with budgets up to 20
/// MAC units and classifies each result against exhaustive search. "One
/// bump" means one more unbudgeted pass reaches the optimum.
pub fn tuning_oracle(cases: usize) -> OracleTally {
    use lwstream::allocator::{DspMode, TuneOptions, Tuner};
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;

    let mut runner = TestRunner::deterministic();
    let strategy = (tiny_network(), 0..=20u64, 0..=4usize);
    let opts = TuneOptions {
        dsp_mode: DspMode::Plain,
        ..TuneOptions::default()
    };
    let mut tally = OracleTally::default();
    let mut seen = 0;
    while seen < cases {
        let (net, budget, boundary) = strategy.new_tree(&mut runner).unwrap().current();
        if budget < net.len() as u64 {
            continue;
        }
        seen += 1;
        let mut tuner = Tuner::new(&net, boundary.min(net.len()), &opts).unwrap();
        tuner.run(budget);
        let greedy = tuner.t_max();
        let optimum = exhaustive_optimum(&net, budget);
        assert!(greedy >= optimum, "oracle beaten: {greedy} < {optimum}");
        if greedy == optimum {
            tally.optimal += 1;
            continue;
        }
        tuner.pass(None);
        if tuner.t_max() <= optimum {
            tally.one_bump += 1;
        } else {
            tally.further.push((net.to_text(), budget, greedy, optimum));
        }
    }
    tally
}
