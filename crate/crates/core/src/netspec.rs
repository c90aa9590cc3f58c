//! Network and layer data model, the layer-description text format, and the
//! builtin benchmark networks.
//!
//! A network is an ordered list of layers. Each layer consumes the output of
//! the previous layer unless it names another producer with `src`, which is how
//! the two branches of a downsampling unit are linearised. Residual joins
//! (`SCB_ADD`) and channel-concatenating joins (`CONCAT`) name the producer of
//! their shortcut operand with `shortcut_src`.
//!
//! # File format
//!
//! UTF-8 text, one record per line, `#` starts a comment:
//!
//! ```text
//! network name=toy input_side=8 input_channels=3 bits=8
//! layer id=0 name=c0 kind=STC f_in=8 m=3 n=16 k=3 stride=1 pad=1
//! layer id=1 name=d1 kind=DWC f_in=8 m=16 n=16 k=3 stride=2 pad=1
//! ```
//!
//! `f_out` is optional; when present it must agree with the convolution
//! geometry. Optional fields: `groups`, `src`, `shortcut_src`, `scb`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("layer {id} ({name}): {msg}")]
    Invalid {
        id: usize,
        name: String,
        msg: String,
    },
    #[error("network: {0}")]
    Network(String),
    #[error("unknown network `{0}`")]
    Unknown(String),
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    /// Standard convolution.
    Stc,
    /// Depthwise convolution.
    Dwc,
    /// Pointwise (1x1) convolution.
    Pwc,
    /// Fully connected classifier.
    Fc,
    /// Max or average pooling.
    Pool,
    /// Elementwise residual join.
    ScbAdd,
    /// Channel-concatenating join (shuffle units).
    Concat,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::Stc,
        LayerKind::Dwc,
        LayerKind::Pwc,
        LayerKind::Fc,
        LayerKind::Pool,
        LayerKind::ScbAdd,
        LayerKind::Concat,
    ];

    pub fn token(self) -> &'static str {
        match self {
            LayerKind::Stc => "STC",
            LayerKind::Dwc => "DWC",
            LayerKind::Pwc => "PWC",
            LayerKind::Fc => "FC",
            LayerKind::Pool => "POOL",
            LayerKind::ScbAdd => "SCB_ADD",
            LayerKind::Concat => "CONCAT",
        }
    }

    /// Joins terminate a skip-connection block.
    pub fn is_join(self) -> bool {
        matches!(self, LayerKind::ScbAdd | LayerKind::Concat)
    }

    /// Kinds whose kernel slides over neighbouring pixels when `k > 1`.
    pub fn is_spatial(self) -> bool {
        matches!(self, LayerKind::Stc | LayerKind::Dwc | LayerKind::Pool)
    }

    /// Kinds that carry trainable weights.
    pub fn has_weights(self) -> bool {
        matches!(
            self,
            LayerKind::Stc | LayerKind::Dwc | LayerKind::Pwc | LayerKind::Fc
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerKind::ALL
            .iter()
            .copied()
            .find(|k| k.token().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown layer kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: usize,
    pub name: String,
    pub kind: LayerKind,
    pub f_in: u32,
    pub f_out: u32,
    pub m: u32,
    pub n: u32,
    pub k: u32,
    pub stride: u32,
    pub pad: u32,
    /// Channel groups of a grouped convolution; 1 for ordinary layers.
    pub groups: u32,
    /// Producer of the main input when it is not the previous layer.
    pub src: Option<usize>,
    pub shortcut_src: Option<usize>,
    pub scb_member: Option<u32>,
}

impl LayerSpec {
    /// A layer with unit kernel, stride and groups and no linkage, for
    /// building networks in code.
    pub fn new(id: usize, name: &str, kind: LayerKind, f_in: u32, m: u32, n: u32) -> Self {
        LayerSpec {
            id,
            name: name.to_string(),
            kind,
            f_in,
            f_out: f_in,
            m,
            n,
            k: 1,
            stride: 1,
            pad: 0,
            groups: 1,
            src: None,
            shortcut_src: None,
            scb_member: None,
        }
    }

    /// Sets kernel geometry and recomputes `f_out`.
    pub fn with_kernel(mut self, k: u32, stride: u32, pad: u32) -> Self {
        self.k = k;
        self.stride = stride;
        self.pad = pad;
        self.f_out = conv_out_side(self.f_in, k, stride, pad).unwrap_or(0);
        self
    }

    pub fn with_shortcut(mut self, src: usize) -> Self {
        self.shortcut_src = Some(src);
        self
    }

    pub fn with_scb(mut self, block: u32) -> Self {
        self.scb_member = Some(block);
        self
    }

    /// Channels carried by the shortcut operand of a join.
    pub fn shortcut_channels(&self) -> u32 {
        match self.kind {
            LayerKind::ScbAdd => self.m,
            LayerKind::Concat => self.n.saturating_sub(self.m),
            _ => 0,
        }
    }
}

/// `floor((f + 2p - k) / s) + 1`, or `None` when the window does not fit.
pub fn conv_out_side(f_in: u32, k: u32, stride: u32, pad: u32) -> Option<u32> {
    let span = f_in + 2 * pad;
    if stride == 0 || k == 0 || span < k {
        return None;
    }
    Some((span - k) / stride + 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_side: u32,
    pub input_channels: u32,
    pub bits: u32,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmSide {
    Input,
    Output,
}

/// Feature-map size of one side of `layer`, `F^2 * channels * bits / 8`
/// rounded up to whole bytes.
pub fn fm_bytes(layer: &LayerSpec, which: FmSide, bits: u32) -> u64 {
    let (f, c) = match which {
        FmSide::Input => (layer.f_in, layer.m),
        FmSide::Output => (layer.f_out, layer.n),
    };
    bytes_for(f as u64 * f as u64 * c as u64, bits)
}

/// Bytes needed to hold `elements` values of `bits` each.
pub fn bytes_for(elements: u64, bits: u32) -> u64 {
    (elements * bits as u64).div_ceil(8)
}

impl NetworkSpec {
    pub fn layer(&self, id: usize) -> &LayerSpec {
        &self.layers[id]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Output side and channels of the producer feeding `layer`'s main input.
    /// `None` stands for the network input.
    fn producer(&self, layer: &LayerSpec) -> Option<&LayerSpec> {
        match layer.src {
            Some(s) => self.layers.get(s),
            None if layer.id == 0 => None,
            None => self.layers.get(layer.id - 1),
        }
    }

    /// The join layer closing skip-connection block `block`.
    pub fn scb_join(&self, block: u32) -> Option<&LayerSpec> {
        self.layers
            .iter()
            .filter(|l| l.scb_member == Some(block))
            .find(|l| l.kind.is_join())
    }

    /// Layer ids grouped by block id, in ascending order.
    pub fn scb_blocks(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for l in &self.layers {
            if let Some(b) = l.scb_member {
                out.entry(b).or_default().push(l.id);
            }
        }
        out
    }

    pub fn layer_by_name(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Checks every layer and linkage invariant and returns all violations.
    pub fn violations(&self) -> Vec<NetError> {
        let mut errs = Vec::new();
        if self.bits == 0 {
            errs.push(NetError::Network("bits must be positive".into()));
        }
        if self.input_side == 0 || self.input_channels == 0 {
            errs.push(NetError::Network(
                "input_side and input_channels must be positive".into(),
            ));
        }
        for (pos, l) in self.layers.iter().enumerate() {
            let mut bad = |msg: String| {
                errs.push(NetError::Invalid {
                    id: l.id,
                    name: l.name.clone(),
                    msg,
                })
            };
            if l.id != pos {
                bad(format!("id must equal its position {pos}"));
                continue;
            }
            if l.k == 0 || l.stride == 0 || l.m == 0 || l.n == 0 || l.f_in == 0 || l.groups == 0 {
                bad("k, stride, m, n, f_in and groups must be >= 1".into());
                continue;
            }
            match conv_out_side(l.f_in, l.k, l.stride, l.pad) {
                Some(f) if f == l.f_out => {}
                Some(f) => bad(format!(
                    "f_out={} but geometry (f_in={}, k={}, stride={}, pad={}) gives {f}",
                    l.f_out, l.f_in, l.k, l.stride, l.pad
                )),
                None => bad("kernel larger than padded input".into()),
            }
            if l.m % l.groups != 0 || l.n % l.groups != 0 {
                bad(format!("groups={} must divide m and n", l.groups));
            }
            match l.kind {
                LayerKind::Pwc if l.k != 1 => bad("PWC layers need k=1".into()),
                LayerKind::Dwc | LayerKind::Pool if l.n != l.m => {
                    bad(format!("{} layers need n == m", l.kind))
                }
                LayerKind::Fc if l.k != 1 || l.f_in != 1 => {
                    bad("FC layers need k=1 and f_in=1".into())
                }
                _ => {}
            }
            if l.kind != LayerKind::Stc && l.kind != LayerKind::Pwc && l.groups != 1 {
                bad("groups only applies to STC and PWC".into());
            }
            if let Some(s) = l.src {
                if s >= l.id {
                    bad(format!("src={s} must point backwards"));
                    continue;
                }
            }
            if let Some(s) = l.shortcut_src {
                if s >= l.id {
                    bad(format!("shortcut_src={s} must point backwards"));
                    continue;
                }
            }
            if l.kind.is_join() {
                if l.k != 1 || l.stride != 1 || l.pad != 0 {
                    bad("joins need k=1, stride=1, pad=0".into());
                }
                match l.shortcut_src {
                    None => bad("join without shortcut_src".into()),
                    Some(s) => {
                        let sc = &self.layers[s];
                        if sc.f_out != l.f_out {
                            bad(format!(
                                "shortcut source {} has side {} but join has {}",
                                sc.name, sc.f_out, l.f_out
                            ));
                        }
                        match l.kind {
                            LayerKind::ScbAdd => {
                                if l.n != l.m {
                                    bad("SCB_ADD needs n == m".into());
                                }
                                if sc.n != l.m {
                                    bad(format!(
                                        "shortcut source {} has {} channels, join expects {}",
                                        sc.name, sc.n, l.m
                                    ));
                                }
                            }
                            _ => {
                                if l.n <= l.m || l.n - l.m > sc.n {
                                    bad(format!(
                                        "CONCAT of {} main channels into {} needs {} shortcut channels, source {} has {}",
                                        l.m,
                                        l.n,
                                        l.n.saturating_sub(l.m),
                                        sc.name,
                                        sc.n
                                    ));
                                }
                            }
                        }
                    }
                }
            } else if l.shortcut_src.is_some() {
                bad("only joins may carry shortcut_src".into());
            }
            // Main-branch chaining.
            let (pf, pc, pid) = match self.producer(l) {
                Some(p) => (p.f_out, p.n, Some(p.id)),
                None => (self.input_side, self.input_channels, None),
            };
            if l.f_in != pf {
                bad(format!("f_in={} but producer side is {pf}", l.f_in));
            }
            if l.m != pc && !self.is_split_consumer(l, pid, pc) {
                bad(format!("m={} but producer emits {pc} channels", l.m));
            }
        }
        // Block structure: the join is the last member, and every member
        // closes in the same join.
        for (b, ids) in self.scb_blocks() {
            let joins: Vec<_> = ids
                .iter()
                .filter(|&&i| self.layers[i].kind.is_join())
                .collect();
            let last = *ids.last().unwrap();
            if joins.len() != 1 || *joins[0] != last {
                errs.push(NetError::Network(format!(
                    "scb block {b} must end in exactly one join"
                )));
            }
            if ids.windows(2).any(|w| w[1] != w[0] + 1) {
                errs.push(NetError::Network(format!(
                    "scb block {b} members must be contiguous"
                )));
            }
        }
        errs
    }

    /// The first main-branch layer of a channel-split block consumes only the
    /// channels that do not bypass through the shortcut.
    fn is_split_consumer(&self, l: &LayerSpec, producer: Option<usize>, producer_ch: u32) -> bool {
        let Some(b) = l.scb_member else { return false };
        let Some(join) = self.scb_join(b) else {
            return false;
        };
        let first = self
            .layers
            .iter()
            .find(|x| x.scb_member == Some(b))
            .map(|x| x.id);
        join.kind == LayerKind::Concat
            && first == Some(l.id)
            && join.shortcut_src == producer
            && producer.is_some()
            && l.m + join.shortcut_channels() == producer_ch
    }

    pub fn validate(self) -> Result<NetworkSpec, NetError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    /// Serialises to the layer-description text format.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "network name={} input_side={} input_channels={} bits={}\n",
            self.name, self.input_side, self.input_channels, self.bits
        );
        for l in &self.layers {
            out.push_str(&format!(
                "layer id={} name={} kind={} f_in={} f_out={} m={} n={} k={} stride={} pad={}",
                l.id, l.name, l.kind, l.f_in, l.f_out, l.m, l.n, l.k, l.stride, l.pad
            ));
            if l.groups != 1 {
                out.push_str(&format!(" groups={}", l.groups));
            }
            if let Some(s) = l.src {
                out.push_str(&format!(" src={s}"));
            }
            if let Some(s) = l.shortcut_src {
                out.push_str(&format!(" shortcut_src={s}"));
            }
            if let Some(b) = l.scb_member {
                out.push_str(&format!(" scb={b}"));
            }
            out.push('\n');
        }
        out
    }
}

fn fields(line_no: usize, rest: &str) -> Result<HashMap<String, String>, NetError> {
    let mut map = HashMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| NetError::Parse {
            line: line_no,
            msg: format!("expected key=value, got `{tok}`"),
        })?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(NetError::Parse {
                line: line_no,
                msg: format!("duplicate field `{k}`"),
            });
        }
    }
    Ok(map)
}

struct Record {
    line: usize,
    map: HashMap<String, String>,
}

impl Record {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn req(&mut self, key: &str) -> Result<String, NetError> {
        self.take(key).ok_or_else(|| NetError::Parse {
            line: self.line,
            msg: format!("missing field `{key}`"),
        })
    }

    fn num<T: FromStr>(&self, key: &str, v: &str) -> Result<T, NetError> {
        v.parse().map_err(|_| NetError::Parse {
            line: self.line,
            msg: format!("field `{key}`: `{v}` is not a non-negative integer"),
        })
    }

    fn req_num<T: FromStr>(&mut self, key: &str) -> Result<T, NetError> {
        let v = self.req(key)?;
        self.num(key, &v)
    }

    fn opt_num<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, NetError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => self.num(key, &v).map(Some),
        }
    }

    fn finish(self) -> Result<(), NetError> {
        let mut left: Vec<_> = self.map.into_keys().collect();
        left.sort();
        match left.first() {
            None => Ok(()),
            Some(k) => Err(NetError::Parse {
                line: self.line,
                msg: format!("unknown field `{k}`"),
            }),
        }
    }
}

/// Parses and validates a network description.
pub fn parse_network(text: &str) -> Result<NetworkSpec, NetError> {
    let mut net: Option<NetworkSpec> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let mut rec = Record {
            line: line_no,
            map: fields(line_no, rest)?,
        };
        match head {
            "network" => {
                if net.is_some() {
                    return Err(NetError::Parse {
                        line: line_no,
                        msg: "second network header".into(),
                    });
                }
                let spec = NetworkSpec {
                    name: rec.req("name")?,
                    input_side: rec.req_num("input_side")?,
                    input_channels: rec.req_num("input_channels")?,
                    bits: rec.opt_num("bits")?.unwrap_or(8),
                    layers: Vec::new(),
                };
                rec.finish()?;
                net = Some(spec);
            }
            "layer" => {
                let Some(spec) = net.as_mut() else {
                    return Err(NetError::Parse {
                        line: line_no,
                        msg: "layer record before the network header".into(),
                    });
                };
                let kind_tok = rec.req("kind")?;
                let kind: LayerKind = kind_tok
                    .parse()
                    .map_err(|msg| NetError::Parse { line: line_no, msg })?;
                let id = rec.req_num("id")?;
                let name = rec.req("name")?;
                let f_in = rec.req_num("f_in")?;
                let m = rec.req_num("m")?;
                let n = rec.req_num("n")?;
                let k = rec.opt_num("k")?.unwrap_or(1);
                let stride = rec.opt_num("stride")?.unwrap_or(1);
                let pad = rec.opt_num("pad")?.unwrap_or(0);
                let f_out = match rec.opt_num("f_out")? {
                    Some(f) => f,
                    None => conv_out_side(f_in, k, stride, pad).unwrap_or(0),
                };
                let layer = LayerSpec {
                    id,
                    name,
                    kind,
                    f_in,
                    f_out,
                    m,
                    n,
                    k,
                    stride,
                    pad,
                    groups: rec.opt_num("groups")?.unwrap_or(1),
                    src: rec.opt_num("src")?,
                    shortcut_src: rec.opt_num("shortcut_src")?,
                    scb_member: rec.opt_num("scb")?,
                };
                rec.finish()?;
                spec.layers.push(layer);
            }
            other => {
                return Err(NetError::Parse {
                    line: line_no,
                    msg: format!("unknown record `{other}`"),
                })
            }
        }
    }
    net.ok_or(NetError::Parse {
        line: 0,
        msg: "no network header found".into(),
    })?
    .validate()
}

pub fn load_network(path: &Path) -> Result<NetworkSpec, NetError> {
    let text = std::fs::read_to_string(path).map_err(|e| NetError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_network(&text)
}

pub const BUILTIN_NAMES: [&str; 4] = [
    "mobilenet_v1",
    "mobilenet_v2",
    "shufflenet_v1",
    "shufflenet_v2",
];

fn builtin_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "mobilenet_v1" => include_str!("../networks/mobilenet_v1.net"),
        "mobilenet_v2" => include_str!("../networks/mobilenet_v2.net"),
        "shufflenet_v1" => include_str!("../networks/shufflenet_v1.net"),
        "shufflenet_v2" => include_str!("../networks/shufflenet_v2.net"),
        _ => return None,
    })
}

pub fn builtin(name: &str) -> Result<NetworkSpec, NetError> {
    let text = builtin_text(name).ok_or_else(|| NetError::Unknown(name.to_string()))?;
    parse_network(text)
}

/// The four benchmark networks.
pub fn builtin_networks() -> Vec<NetworkSpec> {
    BUILTIN_NAMES
        .iter()
        .map(|n| builtin(n).expect("builtin network data must validate"))
        .collect()
}

/// Resolves a builtin name or a path to a description file.
pub fn resolve_network(name_or_path: &str) -> Result<NetworkSpec, NetError> {
    if builtin_text(name_or_path).is_some() {
        return builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return load_network(path);
    }
    Err(NetError::Unknown(name_or_path.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_layer(extra: &str) -> String {
        format!("network name=t input_side=8 input_channels=3 bits=8\nlayer id=0 name=c kind=STC f_in=8 m=3 n=4 k=3 stride=1 pad=1 {extra}\n")
    }

    #[test]
    fn mobilenet_v2_stem() {
        let net = builtin("mobilenet_v2").unwrap();
        let l = &net.layers[0];
        assert_eq!(
            (l.kind, l.k, l.stride, l.m, l.n, l.f_in, l.f_out),
            (LayerKind::Stc, 3, 2, 3, 32, 224, 112)
        );
        assert_eq!(fm_bytes(l, FmSide::Output, 8), 401_408);
    }

    #[test]
    fn inconsistent_f_out_is_rejected() {
        let err = parse_network(&one_layer("f_out=7")).unwrap_err();
        assert!(matches!(err, NetError::Invalid { id: 0, .. }), "{err}");
        assert!(parse_network(&one_layer("f_out=8")).is_ok());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# header\nnetwork name=t input_side=8 input_channels=3\nlayer id=0 name=c kind=XYZ f_in=8 m=3 n=3\n";
        match parse_network(text).unwrap_err() {
            NetError::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("XYZ"));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            parse_network("").unwrap_err(),
            NetError::Parse { .. }
        ));
        let bad_num = one_layer("").replace("m=3", "m=three");
        assert!(matches!(
            parse_network(&bad_num).unwrap_err(),
            NetError::Parse { line: 2, .. }
        ));
        let unknown = one_layer("colour=red");
        assert!(parse_network(&unknown).is_err());
    }

    #[test]
    fn chaining_is_checked() {
        let text = "network name=t input_side=8 input_channels=3\n\
            layer id=0 name=a kind=STC f_in=8 m=3 n=4 k=3 pad=1\n\
            layer id=1 name=b kind=PWC f_in=8 m=5 n=4\n";
        let err = parse_network(text).unwrap_err();
        assert!(matches!(err, NetError::Invalid { id: 1, .. }), "{err}");
    }

    #[test]
    fn dwc_needs_equal_channels_and_pwc_unit_kernel() {
        let dwc = "network name=t input_side=8 input_channels=4\nlayer id=0 name=d kind=DWC f_in=8 m=4 n=8 k=3 pad=1\n";
        assert!(parse_network(dwc).is_err());
        let pwc = "network name=t input_side=8 input_channels=4\nlayer id=0 name=p kind=PWC f_in=8 m=4 n=8 k=3 pad=1\n";
        assert!(parse_network(pwc).is_err());
    }

    #[test]
    fn shortcut_must_point_backwards_and_match() {
        let block = |width: u32, src: usize| {
            format!(
                "network name=t input_side=8 input_channels=4\n\
                 layer id=0 name=a kind=PWC f_in=8 m=4 n=4\n\
                 layer id=1 name=b kind=DWC f_in=8 m=4 n=4 k=3 pad=1 scb=1\n\
                 layer id=2 name=c kind=PWC f_in=8 m=4 n={width} scb=1\n\
                 layer id=3 name=d kind=SCB_ADD f_in=8 m={width} n={width} shortcut_src={src} scb=1\n"
            )
        };
        parse_network(&block(4, 0)).unwrap();
        assert!(parse_network(&block(4, 3)).is_err());
        assert!(parse_network(&block(8, 0)).is_err());
    }

    #[test]
    fn every_builtin_validates() {
        for net in builtin_networks() {
            assert!(net.violations().is_empty(), "{}", net.name);
            assert_eq!(net.input_side, 224);
            assert_eq!(net.bits, 8);
        }
    }

    #[test]
    fn geometry_identity_holds_for_builtin_layers() {
        for net in builtin_networks() {
            for l in &net.layers {
                assert_eq!(
                    Some(l.f_out),
                    conv_out_side(l.f_in, l.k, l.stride, l.pad),
                    "{}:{}",
                    net.name,
                    l.name
                );
            }
        }
    }

    #[test]
    fn shufflenet_v2_blocks_are_pwc_dwc_pwc() {
        let net = builtin("shufflenet_v2").unwrap();
        let blocks = net.scb_blocks();
        assert_eq!(blocks.len(), 3 + 7 + 3);
        for ids in blocks.values() {
            let kinds: Vec<_> = ids.iter().map(|&i| net.layers[i].kind).collect();
            assert_eq!(
                kinds,
                [
                    LayerKind::Pwc,
                    LayerKind::Dwc,
                    LayerKind::Pwc,
                    LayerKind::Concat
                ]
            );
            assert_eq!(net.layers[ids[1]].k, 3);
        }
    }

    #[test]
    fn dwc_same_padding_preserves_fm_bytes() {
        let l = LayerSpec::new(0, "d", LayerKind::Dwc, 14, 96, 96).with_kernel(3, 1, 1);
        assert_eq!(
            fm_bytes(&l, FmSide::Input, 8),
            fm_bytes(&l, FmSide::Output, 8)
        );
        let p = LayerSpec::new(0, "p", LayerKind::Pwc, 1, 1, 1);
        assert_eq!(fm_bytes(&p, FmSide::Output, 8), 1);
    }

    #[test]
    fn text_round_trip_on_builtins() {
        for net in builtin_networks() {
            let again = parse_network(&net.to_text()).unwrap();
            assert_eq!(again, net);
        }
    }

    #[test]
    fn unknown_builtin() {
        assert_eq!(
            resolve_network("resnet_9000").unwrap_err(),
            NetError::Unknown("resnet_9000".into())
        );
    }
}
