// SPDX-License-Identifier: Apache-2.0

//! Data-plane program files (JSON). The layout is documented in
//! `docs/dpp-format.md`. Loading either yields a fully built [`Program`]
//! or every problem found, never a partial program.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::parse_value;
use crate::buffer::{Admission, BufferConfigEntry, BufferId, BufferParams, BufferSet, DEFAULT_BUFFER_SIZE};
use crate::deparser::{DeparseDiagnostic, DeparseGraph, DeparseNode};
use crate::delay::Component;
use crate::mau::{
    parse_action_list, parse_match_key, Action, MatEntry, MatNode, MatTable, MatchKind, MauDiagnostic, MauGraph,
    MeterConfig, StatefulStore,
};
use crate::parser::{GraphDiagnostic, ParseGraph, ParseMatch, ParseNode, ParseTransition};
use crate::phv::{FieldLength, HeaderFieldDef, MetaType, MetadataFieldDef, Schema, SchemaError};
use crate::pipeline::{PipelineConfig, Program};
use crate::replication::{bre_buffers, GroupId, Mgt};
use crate::scheduler::{Registry, SchedParams, Scheduler};
use crate::table::Stage;

/// Default packet length limit: a 9000-byte jumbo frame.
pub const DEFAULT_MAX_PACKET_BITS: usize = 9000 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    SyntaxError,
    UnresolvedReference,
    EgressPortWriteInEgressStage,
    OverlappingFields,
    InvalidDefinition,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticKind::SyntaxError => "syntax error",
            DiagnosticKind::UnresolvedReference => "unresolved reference",
            DiagnosticKind::EgressPortWriteInEgressStage => "egress_port write in egress stage",
            DiagnosticKind::OverlappingFields => "overlapping fields",
            DiagnosticKind::InvalidDefinition => "invalid definition",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Dotted path to the offending part of the file.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.location, self.kind, self.message)
    }
}

/// A number or a literal string such as `"0x001525"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Num(u64),
    Text(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Num(n) => write!(f, "{n}"),
            Literal::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthDef {
    Fixed(usize),
    Variable {
        length_from: String,
        #[serde(default = "eight")]
        scale_bits: u32,
        #[serde(default)]
        bias_bits: i64,
    },
}

fn eight() -> u32 {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderDef {
    pub id: String,
    pub start_bit: usize,
    pub length: LengthDef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataDef {
    pub id: String,
    #[serde(rename = "type")]
    pub ty: MetaType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDef {
    #[serde(default = "eight_ports")]
    pub ports: u16,
    #[serde(default)]
    pub enable_be1: bool,
    #[serde(default = "yes")]
    pub enable_be2: bool,
    #[serde(default = "yes")]
    pub enable_egress: bool,
    /// Component name (`pr_in`, `mau_e`, ...) to cost in ns.
    #[serde(default)]
    pub costs_ns: BTreeMap<String, u64>,
    #[serde(default)]
    pub link_delay_ns: u64,
}

fn eight_ports() -> u16 {
    8
}

fn yes() -> bool {
    true
}

impl Default for PipelineDef {
    fn default() -> Self {
        Self {
            ports: 8,
            enable_be1: false,
            enable_be2: true,
            enable_egress: true,
            costs_ns: BTreeMap::new(),
            link_delay_ns: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDef {
    /// A value literal, or `"*"` for the default row.
    pub on: Literal,
    pub next: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseNodeDef {
    pub id: String,
    /// Absent for the accept node.
    #[serde(default)]
    pub field: Option<String>,
    #[serde(default)]
    pub transitions: Vec<TransitionDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParserDef {
    pub start: String,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    pub nodes: Vec<ParseNodeDef>,
}

fn default_depth() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferDef {
    pub id: BufferId,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "yes")]
    pub rx: bool,
    #[serde(default = "yes")]
    pub tx: bool,
}

fn default_size() -> usize {
    DEFAULT_BUFFER_SIZE
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BctRowDef {
    pub field: String,
    pub value: Literal,
    pub buffer: BufferId,
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferEngineDef {
    #[serde(default)]
    pub bpt: Vec<BufferDef>,
    /// Post-parser engine only.
    #[serde(default)]
    pub bct: Vec<BctRowDef>,
    /// Post-port engine only: ingress port to buffer.
    #[serde(default)]
    pub port_map: BTreeMap<u16, BufferId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterDef {
    pub name: String,
    pub size: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterDef {
    pub name: String,
    pub size: usize,
    pub cir: u64,
    pub cbs: u64,
    pub pir: u64,
    pub pbs: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDef {
    #[serde(default)]
    pub counters: Vec<String>,
    #[serde(default)]
    pub registers: Vec<RegisterDef>,
    #[serde(default)]
    pub meters: Vec<MeterDef>,
}

/// One action string (`"a; b"`) or a list of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionsDef {
    One(String),
    Many(Vec<String>),
}

impl Default for ActionsDef {
    fn default() -> Self {
        ActionsDef::Many(Vec::new())
    }
}

impl ActionsDef {
    fn joined(&self) -> String {
        match self {
            ActionsDef::One(s) => s.clone(),
            ActionsDef::Many(v) => v.join("; "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDef {
    pub key: Literal,
    #[serde(default)]
    pub priority: i64,
    #[serde(default)]
    pub actions: ActionsDef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatNodeDef {
    pub id: String,
    pub field: String,
    /// `exact`, `lpm`, `ternary` or `range`.
    pub kind: String,
    #[serde(default)]
    pub entries: Vec<EntryDef>,
    #[serde(default)]
    pub default_actions: ActionsDef,
    #[serde(default)]
    pub on_hit: Option<String>,
    #[serde(default)]
    pub on_miss: Option<String>,
    #[serde(default)]
    pub miss_threshold: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MauDef {
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default)]
    pub nodes: Vec<MatNodeDef>,
}

/// The file as written.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub max_packet_length_bits: Option<usize>,
    pub headers: Vec<HeaderDef>,
    #[serde(default)]
    pub metadata: Vec<MetadataDef>,
    #[serde(default)]
    pub pipeline: PipelineDef,
    /// Defaults to a chain over the headers in declaration order.
    #[serde(default)]
    pub parser_ingress: Option<ParserDef>,
    /// Defaults to the ingress parser.
    #[serde(default)]
    pub parser_egress: Option<ParserDef>,
    #[serde(default)]
    pub be1: BufferEngineDef,
    #[serde(default)]
    pub be2: BufferEngineDef,
    #[serde(default)]
    pub bre: BufferEngineDef,
    #[serde(default)]
    pub state: StateDef,
    #[serde(default)]
    pub mau_ingress: MauDef,
    #[serde(default)]
    pub mau_egress: MauDef,
    /// Deparse node strings; default is every header in declaration order.
    #[serde(default)]
    pub deparser_ingress: Option<Vec<String>>,
    #[serde(default)]
    pub deparser_egress: Option<Vec<String>>,
    #[serde(default)]
    pub mgt: BTreeMap<GroupId, Vec<u16>>,
    #[serde(default)]
    pub scheduler: SchedParams,
}

/// Parse graph that extracts every header in order, then accepts.
pub fn chain_parser(schema: &Schema) -> ParseGraph {
    let ids: Vec<String> = schema.headers().iter().map(|h| h.id.clone()).collect();
    let mut nodes: Vec<ParseNode> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| ParseNode {
            id: id.clone(),
            field: Some(id.clone()),
            transitions: vec![ParseTransition {
                on: ParseMatch::Wildcard,
                next: ids.get(i + 1).cloned().unwrap_or_else(|| "accept".into()),
            }],
        })
        .collect();
    nodes.push(ParseNode::accept("accept"));
    let start = ids.first().cloned().unwrap_or_else(|| "accept".into());
    ParseGraph::new(nodes, &start, ids.len() + 1)
}

struct Diags(Vec<Diagnostic>);

impl Diags {
    fn push(&mut self, kind: DiagnosticKind, location: impl Into<String>, message: impl fmt::Display) {
        self.0.push(Diagnostic {
            kind,
            location: location.into(),
            message: message.to_string(),
        });
    }
}

fn schema_diag(d: &mut Diags, e: SchemaError) {
    let kind = match e {
        SchemaError::UnknownLengthSource { .. } => DiagnosticKind::UnresolvedReference,
        _ => DiagnosticKind::InvalidDefinition,
    };
    d.push(kind, "headers", e);
}

fn parse_diag(d: &mut Diags, loc: &str, e: GraphDiagnostic) {
    let kind = match e {
        GraphDiagnostic::UnknownField { .. } | GraphDiagnostic::UnknownNode { .. } => {
            DiagnosticKind::UnresolvedReference
        }
        GraphDiagnostic::OverlappingFields { .. } => DiagnosticKind::OverlappingFields,
        _ => DiagnosticKind::InvalidDefinition,
    };
    d.push(kind, loc, e);
}

fn mau_diag(d: &mut Diags, loc: &str, e: MauDiagnostic) {
    let kind = match e {
        MauDiagnostic::UnknownField { .. } | MauDiagnostic::UnknownNode(_) | MauDiagnostic::UnknownStateObject { .. } => {
            DiagnosticKind::UnresolvedReference
        }
        MauDiagnostic::EgressPortWriteInEgressStage(_) => DiagnosticKind::EgressPortWriteInEgressStage,
        _ => DiagnosticKind::InvalidDefinition,
    };
    d.push(kind, loc, e);
}

fn build_parser(d: &mut Diags, loc: &str, def: &ParserDef, schema: &Schema) -> ParseGraph {
    let mut nodes = Vec::new();
    for n in &def.nodes {
        let width = n.field.as_deref().and_then(|f| schema.width(f));
        let mut transitions = Vec::new();
        for t in &n.transitions {
            let on = match &t.on {
                Literal::Text(s) if s == "*" => ParseMatch::Wildcard,
                lit => match width {
                    Some(w) => match parse_value(&lit.to_string(), w) {
                        Ok(v) => ParseMatch::Value(v),
                        Err(e) => {
                            d.push(DiagnosticKind::InvalidDefinition, format!("{loc}.{}", n.id), e);
                            continue;
                        }
                    },
                    // unknown or variable field: reported by graph validation
                    None => ParseMatch::Value(crate::bits::BitBuffer::new()),
                },
            };
            transitions.push(ParseTransition {
                on,
                next: t.next.clone(),
            });
        }
        nodes.push(ParseNode {
            id: n.id.clone(),
            field: n.field.clone(),
            transitions,
        });
    }
    let g = ParseGraph::new(nodes, &def.start, def.max_depth);
    for e in g.validate(schema) {
        parse_diag(d, loc, e);
    }
    g
}

fn build_actions(d: &mut Diags, loc: &str, def: &ActionsDef) -> Vec<Action> {
    parse_action_list(&def.joined()).unwrap_or_else(|e| {
        d.push(DiagnosticKind::SyntaxError, loc, e);
        Vec::new()
    })
}

fn build_mau(d: &mut Diags, loc: &str, stage: Stage, def: &MauDef, schema: &Schema, store: &StatefulStore) -> MauGraph {
    let mut nodes = Vec::new();
    for n in &def.nodes {
        let nloc = format!("{loc}.{}", n.id);
        let width = schema.width(&n.field).filter(|w| *w <= 128).unwrap_or(0);
        let kind: MatchKind = match n.kind.parse() {
            Ok(k) => k,
            Err(e) => {
                d.push(DiagnosticKind::SyntaxError, nloc, e);
                continue;
            }
        };
        let mut table = MatTable::new(kind, width);
        for (i, e) in n.entries.iter().enumerate() {
            let eloc = format!("{nloc}.entries[{i}]");
            let key = match parse_match_key(kind, &e.key.to_string()) {
                Ok(k) => k,
                Err(msg) => {
                    d.push(DiagnosticKind::SyntaxError, eloc, msg);
                    continue;
                }
            };
            let entry = MatEntry {
                key,
                priority: e.priority,
                actions: build_actions(d, &eloc, &e.actions),
            };
            // width problems surface once through graph validation
            if width > 0 {
                if let Err(err) = table.apply(crate::table::TableOp::Add, entry) {
                    d.push(DiagnosticKind::InvalidDefinition, eloc, err);
                }
            }
        }
        nodes.push(MatNode {
            id: n.id.clone(),
            field: n.field.clone(),
            table,
            default_actions: build_actions(d, &format!("{nloc}.default_actions"), &n.default_actions),
            on_hit: n.on_hit.clone(),
            on_miss: n.on_miss.clone(),
            miss_threshold: n.miss_threshold,
        });
    }
    let start = def.start.clone().or_else(|| def.nodes.first().map(|n| n.id.clone()));
    let g = MauGraph::new(stage, start, nodes);
    for e in g.validate(schema, store) {
        mau_diag(d, loc, e);
    }
    g
}

fn build_deparser(d: &mut Diags, loc: &str, def: &Option<Vec<String>>, schema: &Schema) -> DeparseGraph {
    let Some(list) = def else {
        return DeparseGraph::layout_order(schema);
    };
    let mut nodes = Vec::new();
    for (i, text) in list.iter().enumerate() {
        match text.parse::<DeparseNode>() {
            Ok(n) => nodes.push(n),
            Err(e) => d.push(DiagnosticKind::SyntaxError, format!("{loc}[{i}]"), e),
        }
    }
    let g = DeparseGraph::new(nodes);
    for DeparseDiagnostic::UnknownField(f) in g.validate(schema) {
        d.push(DiagnosticKind::UnresolvedReference, loc, format!("unknown header field {f}"));
    }
    g
}

fn bpt(d: &mut Diags, loc: &str, def: &[BufferDef]) -> BTreeMap<BufferId, BufferParams> {
    let mut out = BTreeMap::new();
    for b in def {
        if b.size == 0 {
            d.push(DiagnosticKind::InvalidDefinition, loc, format!("buffer {} has size 0", b.id));
        }
        let p = BufferParams {
            size: b.size,
            rx: b.rx,
            tx: b.tx,
        };
        if out.insert(b.id, p).is_some() {
            d.push(DiagnosticKind::InvalidDefinition, loc, format!("buffer {} declared twice", b.id));
        }
    }
    out
}

fn check_field(d: &mut Diags, schema: &Schema, loc: &str, field: &str) {
    if !schema.contains(field) {
        d.push(DiagnosticKind::UnresolvedReference, loc, format!("unknown field {field}"));
    }
}

impl DppFile {
    pub fn from_json(text: &str) -> Result<DppFile, Vec<Diagnostic>> {
        serde_json::from_str(text).map_err(|e| {
            vec![Diagnostic {
                kind: DiagnosticKind::SyntaxError,
                location: format!("line {} column {}", e.line(), e.column()),
                message: e.to_string(),
            }]
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serialize")
    }

    /// Builds the program, or reports every problem found.
    pub fn build(&self) -> Result<Program, Vec<Diagnostic>> {
        let mut d = Diags(Vec::new());
        let headers = self
            .headers
            .iter()
            .map(|h| HeaderFieldDef {
                id: h.id.clone(),
                start_bit: h.start_bit,
                length: match &h.length {
                    LengthDef::Fixed(n) => FieldLength::Fixed(*n),
                    LengthDef::Variable {
                        length_from,
                        scale_bits,
                        bias_bits,
                    } => FieldLength::Variable {
                        length_from: length_from.clone(),
                        scale_bits: *scale_bits,
                        bias_bits: *bias_bits,
                    },
                },
            })
            .collect();
        let metadata = self
            .metadata
            .iter()
            .map(|m| MetadataFieldDef {
                id: m.id.clone(),
                ty: m.ty.clone(),
            })
            .collect();
        let max_bits = self.max_packet_length_bits.unwrap_or(DEFAULT_MAX_PACKET_BITS);
        let schema = match Schema::new(headers, metadata, max_bits) {
            Ok(s) => s,
            Err(errs) => {
                for e in errs {
                    schema_diag(&mut d, e);
                }
                // nothing else can be checked without a schema
                return Err(d.0);
            }
        };

        let pd = &self.pipeline;
        let mut costs = BTreeMap::new();
        for (name, &ns) in &pd.costs_ns {
            match Component::from_name(name) {
                Some(c) => {
                    costs.insert(c, ns);
                }
                None => d.push(
                    DiagnosticKind::UnresolvedReference,
                    "pipeline.costs_ns",
                    format!("unknown component {name}"),
                ),
            }
        }
        if pd.ports == 0 {
            d.push(DiagnosticKind::InvalidDefinition, "pipeline.ports", "a device needs at least one port");
        }
        let config = PipelineConfig {
            ports: pd.ports,
            enable_be1: pd.enable_be1,
            enable_be2: pd.enable_be2,
            enable_egress: pd.enable_egress,
            costs,
            link_delay_ns: pd.link_delay_ns,
        };

        let parser_ingress = match &self.parser_ingress {
            Some(p) => build_parser(&mut d, "parser_ingress", p, &schema),
            None => {
                let g = chain_parser(&schema);
                for e in g.validate(&schema) {
                    parse_diag(&mut d, "parser_ingress", e);
                }
                g
            }
        };
        let parser_egress = match &self.parser_egress {
            Some(p) => build_parser(&mut d, "parser_egress", p, &schema),
            None => parser_ingress.clone(),
        };

        // BE1: port map
        let be1_bpt = bpt(&mut d, "be1.bpt", &self.be1.bpt);
        if !self.be1.bct.is_empty() {
            d.push(DiagnosticKind::InvalidDefinition, "be1.bct", "the post-port buffer engine admits by port map only");
        }
        for (port, buf) in &self.be1.port_map {
            if *port >= pd.ports {
                d.push(DiagnosticKind::UnresolvedReference, "be1.port_map", format!("port {port} does not exist"));
            }
            if *buf != 0 && !be1_bpt.contains_key(buf) {
                d.push(DiagnosticKind::UnresolvedReference, "be1.port_map", format!("buffer {buf} is not in the BPT"));
            }
        }
        let be1 = BufferSet::new(be1_bpt, Admission::ByPort(self.be1.port_map.clone()));

        // BE2: BCT
        let be2_bpt = bpt(&mut d, "be2.bpt", &self.be2.bpt);
        if !self.be2.port_map.is_empty() {
            d.push(DiagnosticKind::InvalidDefinition, "be2.port_map", "the post-parser buffer engine admits by BCT only");
        }
        let mut be2 = BufferSet::new(be2_bpt.clone(), Admission::ByField(Vec::new()));
        for (i, row) in self.be2.bct.iter().enumerate() {
            let loc = format!("be2.bct[{i}]");
            let Some(width) = schema.width(&row.field) else {
                d.push(DiagnosticKind::UnresolvedReference, loc, format!("unknown or variable-width field {}", row.field));
                continue;
            };
            if row.buffer != 0 && !be2_bpt.contains_key(&row.buffer) {
                d.push(DiagnosticKind::UnresolvedReference, loc, format!("buffer {} is not in the BPT", row.buffer));
                continue;
            }
            let value = match parse_value(&row.value.to_string(), width) {
                Ok(v) => v,
                Err(e) => {
                    d.push(DiagnosticKind::InvalidDefinition, loc, e);
                    continue;
                }
            };
            let entry = BufferConfigEntry {
                field: row.field.clone(),
                value,
                buffer: row.buffer,
                priority: row.priority,
            };
            if let Err(e) = be2.update_bct(crate::table::TableOp::Add, entry) {
                d.push(DiagnosticKind::InvalidDefinition, loc, e);
            }
        }

        // BRE: per-port buffers
        let bre_bpt = bpt(&mut d, "bre.bpt", &self.bre.bpt);
        if !self.bre.bct.is_empty() || !self.bre.port_map.is_empty() {
            d.push(DiagnosticKind::InvalidDefinition, "bre", "BRE buffers are per egress port; only bpt applies");
        }
        for id in bre_bpt.keys() {
            if *id >= u32::from(pd.ports) {
                d.push(DiagnosticKind::UnresolvedReference, "bre.bpt", format!("buffer {id} names no port"));
            }
        }
        let bre = bre_buffers(pd.ports, &bre_bpt);

        let mut store = StatefulStore::default();
        for c in &self.state.counters {
            if let Err(e) = store.declare_counter(c) {
                d.push(DiagnosticKind::InvalidDefinition, "state.counters", e);
            }
        }
        for r in &self.state.registers {
            if r.width == 0 || r.width > 128 {
                d.push(DiagnosticKind::InvalidDefinition, "state.registers", format!("register {} width must be 1..=128", r.name));
            }
            if let Err(e) = store.declare_register(&r.name, r.size, r.width) {
                d.push(DiagnosticKind::InvalidDefinition, "state.registers", e);
            }
        }
        for m in &self.state.meters {
            let cfg = MeterConfig {
                cir: m.cir,
                cbs: m.cbs,
                pir: m.pir,
                pbs: m.pbs,
            };
            if m.pir < m.cir {
                d.push(DiagnosticKind::InvalidDefinition, "state.meters", format!("meter {}: pir below cir", m.name));
            }
            if let Err(e) = store.declare_meter(&m.name, m.size, cfg) {
                d.push(DiagnosticKind::InvalidDefinition, "state.meters", e);
            }
        }

        let mau_ingress = build_mau(&mut d, "mau_ingress", Stage::Ingress, &self.mau_ingress, &schema, &store);
        let mau_egress = build_mau(&mut d, "mau_egress", Stage::Egress, &self.mau_egress, &schema, &store);
        let ingress_ids: std::collections::BTreeSet<&str> = self.mau_ingress.nodes.iter().map(|n| n.id.as_str()).collect();
        for n in &self.mau_egress.nodes {
            if ingress_ids.contains(n.id.as_str()) {
                d.push(
                    DiagnosticKind::InvalidDefinition,
                    "mau_egress",
                    format!("node id {} is also used in mau_ingress", n.id),
                );
            }
        }
        if !pd.enable_egress && (!self.mau_egress.nodes.is_empty() || self.parser_egress.is_some() || self.deparser_egress.is_some()) {
            d.push(DiagnosticKind::InvalidDefinition, "pipeline.enable_egress", "egress block is disabled but egress components are defined");
        }

        let deparser_ingress = build_deparser(&mut d, "deparser_ingress", &self.deparser_ingress, &schema);
        let deparser_egress = build_deparser(&mut d, "deparser_egress", &self.deparser_egress, &schema);

        let mut mgt = Mgt::new(pd.ports);
        for (gid, ports) in &self.mgt {
            if let Err(e) = mgt.set(*gid, ports.iter().copied()) {
                d.push(DiagnosticKind::InvalidDefinition, format!("mgt.{gid}"), e);
            }
        }

        let sp = &self.scheduler;
        for f in [&sp.flow_field, &sp.priority_field].into_iter().flatten() {
            check_field(&mut d, &schema, "scheduler", f);
        }
        let scheduler = match Scheduler::new(sp.clone(), pd.ports, &Registry::default()) {
            Ok(s) => Some(s),
            Err(e) => {
                d.push(DiagnosticKind::InvalidDefinition, "scheduler", e);
                None
            }
        };

        if !d.0.is_empty() {
            return Err(d.0);
        }
        Ok(Program {
            name: self.name.clone(),
            schema,
            config,
            parser_ingress,
            parser_egress,
            be1,
            be2,
            bre,
            store,
            mau_ingress,
            mau_egress,
            deparser_ingress,
            deparser_egress,
            mgt,
            scheduler: scheduler.expect("no diagnostics"),
        })
    }
}

/// Parses and builds a program from JSON text.
pub fn load_dpp_str(text: &str) -> Result<Program, Vec<Diagnostic>> {
    DppFile::from_json(text)?.build()
}

pub fn load_dpp(path: &Path) -> Result<Program, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Diagnostic {
            kind: DiagnosticKind::SyntaxError,
            location: path.display().to_string(),
            message: e.to_string(),
        }]
    })?;
    load_dpp_str(&text)
}
