// SPDX-License-Identifier: Apache-2.0

//! Graph-driven header extraction.
//!
//! A [`ParseGraph`] is walked from its start node. Each field node pulls the
//! next `length` bits out of `PHV.data_buffer` at the running cursor, stores
//! them as that field, and picks its successor from the node's parse table.
//! Reaching the ACCEPT node ends the walk; whatever is left of the buffer is
//! payload and its offset is written to the `payload_offset` metadata.
//!
//! The same engine serves the ingress and egress parsers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::bits::BitBuffer;
use crate::phv::{meta, FieldKind, FieldLength, Phv, Schema};
use crate::table::TableOp;

/// Key of a parse-table row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseMatch {
    Value(BitBuffer),
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTransition {
    pub on: ParseMatch,
    pub next: String,
}

/// A field-extraction node, or the ACCEPT terminal when `field` is `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseNode {
    pub id: String,
    pub field: Option<String>,
    pub transitions: Vec<ParseTransition>,
}

impl ParseNode {
    pub fn accept(id: &str) -> Self {
        Self {
            id: id.to_string(),
            field: None,
            transitions: Vec::new(),
        }
    }

    pub fn is_accept(&self) -> bool {
        self.field.is_none()
    }

    /// Exact value rows first, the wildcard row last.
    fn next_for(&self, value: &BitBuffer) -> Option<&str> {
        self.transitions
            .iter()
            .find(|t| matches!(&t.on, ParseMatch::Value(v) if v.cmp_numeric(value) == Ordering::Equal))
            .or_else(|| self.transitions.iter().find(|t| t.on == ParseMatch::Wildcard))
            .map(|t| t.next.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("packet too short for field {field}: need {need} bits at {at}, have {have}")]
    Underflow {
        field: String,
        at: usize,
        need: usize,
        have: usize,
    },
    #[error("no transition from node {node} for value {value}")]
    NoTransition { node: String, value: String },
    #[error("parse depth {0} exceeded")]
    DepthExceeded(usize),
    #[error("field {field} resolved to an invalid length")]
    InvalidLength { field: String },
    #[error("length source {0} is not valid")]
    InvalidFieldRead(String),
    #[error("parse graph has no node {0}")]
    MissingNode(String),
}

impl ParseError {
    /// Name of the drop counter this failure increments.
    pub fn counter(&self) -> &'static str {
        match self {
            ParseError::Underflow { .. } => "parse_underflow",
            ParseError::NoTransition { .. } => "parse_no_transition",
            ParseError::DepthExceeded(_) => "parse_depth_exceeded",
            ParseError::InvalidLength { .. } | ParseError::InvalidFieldRead(_) => {
                "parse_invalid_length"
            }
            ParseError::MissingNode(_) => "parse_no_transition",
        }
    }
}

/// Static problems found in a parse graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Error)]
pub enum GraphDiagnostic {
    #[error("parse node {node}: unknown header field {field}")]
    UnknownField { node: String, field: String },
    #[error("parse node {from}: transition to unknown node {to}")]
    UnknownNode { from: String, to: String },
    #[error("parse node {node} cannot reach the accept node")]
    UnreachableAccept { node: String },
    #[error("parse graph needs exactly one accept node, found {0}")]
    AcceptCount(usize),
    #[error("parse node {node}: transition value is {found} bits, field is {expected}")]
    WidthMismatch { node: String, expected: usize, found: usize },
    #[error("parse node {node}: value transitions on a variable-length field")]
    ValueOnVariableField { node: String },
    #[error("parse node {node}: duplicate transition")]
    DuplicateTransition { node: String },
    #[error("header fields {first} and {second} overlap on one parse path")]
    OverlappingFields { first: String, second: String },
    #[error("parse path of depth {depth} exceeds the limit {limit}")]
    PathTooLong { depth: usize, limit: usize },
    #[error("max parse depth must be positive")]
    ZeroDepth,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseUpdateError {
    #[error("no parse node {0}")]
    NoSuchNode(String),
    #[error("node {0} is the accept node and has no parse table")]
    AcceptNode(String),
    #[error("value is {found} bits wide, field needs {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("no such parse-table entry")]
    NoSuchEntry,
    #[error("parse-table entry already exists")]
    DuplicateEntry,
    #[error("modify/add needs a next node")]
    MissingNext,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseGraph {
    nodes: BTreeMap<String, ParseNode>,
    start: String,
    max_parse_depth: usize,
}

/// Caps simple-path enumeration during validation.
const MAX_PATHS: usize = 4096;

impl ParseGraph {
    pub fn new(nodes: Vec<ParseNode>, start: &str, max_parse_depth: usize) -> Self {
        Self {
            nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            start: start.to_string(),
            max_parse_depth,
        }
    }

    /// A graph whose start node is ACCEPT.
    pub fn accept_only() -> Self {
        Self::new(vec![ParseNode::accept("accept")], "accept", 1)
    }

    pub fn node(&self, id: &str) -> Option<&ParseNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ParseNode> {
        self.nodes.values()
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn max_parse_depth(&self) -> usize {
        self.max_parse_depth
    }

    /// Parses `phv.data_buffer`, populating header fields.
    pub fn run(&self, schema: &Schema, phv: &mut Phv) -> Result<(), ParseError> {
        let mut cursor = 0usize;
        let mut current = self.start.as_str();
        let mut depth = 0usize;
        loop {
            let node = self
                .nodes
                .get(current)
                .ok_or_else(|| ParseError::MissingNode(current.to_string()))?;
            let Some(field) = &node.field else {
                phv.set_uint(meta::PAYLOAD_OFFSET, cursor as u128, 32);
                return Ok(());
            };
            depth += 1;
            if depth > self.max_parse_depth {
                return Err(ParseError::DepthExceeded(self.max_parse_depth));
            }
            let len = resolve_length(schema, field, phv)?;
            let have = phv.data_buffer.len();
            let value = phv
                .data_buffer
                .slice(cursor, len)
                .map_err(|_| ParseError::Underflow {
                    field: field.clone(),
                    at: cursor,
                    need: len,
                    have,
                })?;
            cursor += len;
            let next = node.next_for(&value).ok_or_else(|| ParseError::NoTransition {
                node: node.id.clone(),
                value: value.to_string(),
            })?;
            phv.set(field, value);
            current = next;
        }
    }

    /// Diagnostics against a schema; empty means the graph is well formed.
    pub fn validate(&self, schema: &Schema) -> Vec<GraphDiagnostic> {
        let mut diags = BTreeSet::new();
        if self.max_parse_depth == 0 {
            diags.insert(GraphDiagnostic::ZeroDepth);
        }
        if !self.nodes.contains_key(&self.start) {
            diags.insert(GraphDiagnostic::UnknownNode {
                from: "<start>".into(),
                to: self.start.clone(),
            });
        }
        let accepts = self.nodes.values().filter(|n| n.is_accept()).count();
        if accepts != 1 {
            diags.insert(GraphDiagnostic::AcceptCount(accepts));
        }
        for node in self.nodes.values() {
            let field_len = match &node.field {
                None => None,
                Some(f) => match schema.kind(f) {
                    Some(FieldKind::Header(l)) => Some(l.fixed()),
                    _ => {
                        diags.insert(GraphDiagnostic::UnknownField {
                            node: node.id.clone(),
                            field: f.clone(),
                        });
                        None
                    }
                },
            };
            let mut seen: Vec<&ParseMatch> = Vec::new();
            for t in &node.transitions {
                if !self.nodes.contains_key(&t.next) {
                    diags.insert(GraphDiagnostic::UnknownNode {
                        from: node.id.clone(),
                        to: t.next.clone(),
                    });
                }
                if seen.iter().any(|s| same_match(s, &t.on)) {
                    diags.insert(GraphDiagnostic::DuplicateTransition {
                        node: node.id.clone(),
                    });
                }
                seen.push(&t.on);
                if let (ParseMatch::Value(v), Some(len)) = (&t.on, field_len) {
                    match len {
                        Some(w) if w != v.len() => {
                            diags.insert(GraphDiagnostic::WidthMismatch {
                                node: node.id.clone(),
                                expected: w,
                                found: v.len(),
                            });
                        }
                        None => {
                            diags.insert(GraphDiagnostic::ValueOnVariableField {
                                node: node.id.clone(),
                            });
                        }
                        _ => {}
                    }
                }
            }
        }
        let reach = self.can_reach_accept();
        for id in self.nodes.keys() {
            if !reach.contains(id.as_str()) {
                diags.insert(GraphDiagnostic::UnreachableAccept { node: id.clone() });
            }
        }
        if self.nodes.contains_key(&self.start) {
            self.check_paths(schema, &mut diags);
        }
        diags.into_iter().collect()
    }

    /// Nodes from which some ACCEPT node is reachable.
    fn can_reach_accept(&self) -> BTreeSet<&str> {
        let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for n in self.nodes.values() {
            for t in &n.transitions {
                preds.entry(t.next.as_str()).or_default().push(n.id.as_str());
            }
        }
        let mut seen: BTreeSet<&str> = self
            .nodes
            .values()
            .filter(|n| n.is_accept())
            .map(|n| n.id.as_str())
            .collect();
        let mut queue: VecDeque<&str> = seen.iter().copied().collect();
        while let Some(id) = queue.pop_front() {
            for p in preds.get(id).into_iter().flatten() {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// Walks simple paths from the start node checking declared field
    /// intervals for overlap and path depth against the limit.
    fn check_paths(&self, schema: &Schema, diags: &mut BTreeSet<GraphDiagnostic>) {
        let mut budget = MAX_PATHS;
        let mut on_path = Vec::new();
        self.dfs(&self.start, schema, &mut on_path, diags, &mut budget);
    }

    fn dfs<'a>(
        &'a self,
        id: &'a str,
        schema: &Schema,
        on_path: &mut Vec<&'a str>,
        diags: &mut BTreeSet<GraphDiagnostic>,
        budget: &mut usize,
    ) {
        if *budget == 0 || on_path.contains(&id) {
            return;
        }
        let Some(node) = self.nodes.get(id) else { return };
        let Some(field) = &node.field else {
            *budget -= 1;
            let depth = on_path.len();
            if depth > self.max_parse_depth {
                diags.insert(GraphDiagnostic::PathTooLong {
                    depth,
                    limit: self.max_parse_depth,
                });
            }
            return;
        };
        if let Some(def) = schema.header(field) {
            if let FieldLength::Fixed(len) = def.length {
                for prev in on_path.iter() {
                    let prev_field = self.nodes[*prev].field.as_deref().unwrap_or_default();
                    if prev_field == field {
                        continue;
                    }
                    if let Some(pd) = schema.header(prev_field) {
                        if let FieldLength::Fixed(plen) = pd.length {
                            let overlap = def.start_bit < pd.start_bit + plen
                                && pd.start_bit < def.start_bit + len;
                            if overlap {
                                let (a, b) = if prev_field < field.as_str() {
                                    (prev_field, field.as_str())
                                } else {
                                    (field.as_str(), prev_field)
                                };
                                diags.insert(GraphDiagnostic::OverlappingFields {
                                    first: a.to_string(),
                                    second: b.to_string(),
                                });
                            }
                        }
                    }
                }
            }
        }
        on_path.push(id);
        let mut nexts: Vec<&str> = node.transitions.iter().map(|t| t.next.as_str()).collect();
        nexts.dedup();
        for next in nexts {
            self.dfs(next, schema, on_path, diags, budget);
        }
        on_path.pop();
    }

    /// Runtime parse-table mutation from the control plane. The graph is
    /// left untouched on error.
    pub fn update(
        &mut self,
        schema: &Schema,
        node_id: &str,
        op: TableOp,
        on: ParseMatch,
        next: Option<&str>,
    ) -> Result<(), ParseUpdateError> {
        if let Some(n) = next {
            if !self.nodes.contains_key(n) {
                return Err(ParseUpdateError::NoSuchNode(n.to_string()));
            }
        }
        let node = self
            .nodes
            .get_mut(node_id)
            .ok_or_else(|| ParseUpdateError::NoSuchNode(node_id.to_string()))?;
        let Some(field) = &node.field else {
            return Err(ParseUpdateError::AcceptNode(node_id.to_string()));
        };
        if let ParseMatch::Value(v) = &on {
            match schema.width(field) {
                Some(w) if w == v.len() => {}
                Some(w) => {
                    return Err(ParseUpdateError::WidthMismatch {
                        expected: w,
                        found: v.len(),
                    })
                }
                None => {
                    return Err(ParseUpdateError::WidthMismatch {
                        expected: 0,
                        found: v.len(),
                    })
                }
            }
        }
        let pos = node.transitions.iter().position(|t| same_match(&t.on, &on));
        match (op, pos) {
            (TableOp::Add, Some(_)) => Err(ParseUpdateError::DuplicateEntry),
            (TableOp::Add, None) => {
                let next = next.ok_or(ParseUpdateError::MissingNext)?;
                node.transitions.push(ParseTransition {
                    on,
                    next: next.to_string(),
                });
                Ok(())
            }
            (TableOp::Modify, Some(i)) => {
                let next = next.ok_or(ParseUpdateError::MissingNext)?;
                node.transitions[i].next = next.to_string();
                Ok(())
            }
            (TableOp::Delete, Some(i)) => {
                node.transitions.remove(i);
                Ok(())
            }
            (TableOp::Modify | TableOp::Delete, None) => Err(ParseUpdateError::NoSuchEntry),
        }
    }
}

fn same_match(a: &ParseMatch, b: &ParseMatch) -> bool {
    match (a, b) {
        (ParseMatch::Wildcard, ParseMatch::Wildcard) => true,
        (ParseMatch::Value(x), ParseMatch::Value(y)) => x.cmp_numeric(y) == Ordering::Equal,
        _ => false,
    }
}

fn resolve_length(schema: &Schema, field: &str, phv: &Phv) -> Result<usize, ParseError> {
    match schema.header(field).map(|h| &h.length) {
        Some(FieldLength::Fixed(n)) => Ok(*n),
        Some(FieldLength::Variable {
            length_from,
            scale_bits,
            bias_bits,
        }) => {
            let v = phv
                .get_u128(length_from)
                .map_err(|_| ParseError::InvalidFieldRead(length_from.clone()))?;
            let bits = i128::try_from(v)
                .ok()
                .and_then(|v| v.checked_mul(i128::from(*scale_bits)))
                .and_then(|v| v.checked_add(i128::from(*bias_bits)));
            match bits {
                Some(b) if b >= 1 && b <= schema.max_packet_length_bits() as i128 => Ok(b as usize),
                _ => Err(ParseError::InvalidLength {
                    field: field.to_string(),
                }),
            }
        }
        None => Err(ParseError::InvalidLength {
            field: field.to_string(),
        }),
    }
}
