// SPDX-License-Identifier: Apache-2.0

//! Control-plane scripts: `<t_ns> <verb> <args...>` per line, `#` comments.
//!
//! ```text
//! 0   table add mat_proto exact 17 set_field(out, 9); counter_inc(c)
//! 0   table add acl ternary 0x40&&&0xf0 5 drop
//! 10  bpt set be2 1 tx true
//! 10  bct add vlan_tag 0x001525 3 1
//! 20  mgt set 7 1,2,3
//! 30  sched set weight.1 3
//! 40  deparse set egress eth_dst eth_src const:8100:16 proto_type
//! 50  parse add ingress n_proto 17 accept
//! 60  read counter ipv4_counter
//! 60  write register r 0 7
//! 70  write meter m 0 1000 100 2000 200
//! 80  reset counter ipv4_counter
//! ```

use serde::Serialize;
use serde_json::{json, Value};

use crate::bits::{parse_u128, parse_value};
use crate::buffer::{BptSetting, BufferConfigEntry, BufferId};
use crate::deparser::{DeparseGraph, DeparseNode};
use crate::mau::{parse_action_list, parse_match_key, MatEntry, MatchKind, MeterConfig};
use crate::parser::ParseMatch;
use crate::pipeline::{BufferStage, Device};
use crate::replication::GroupId;
use crate::table::{Stage, TableOp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CpVerb {
    Table {
        op: TableOp,
        node: String,
        kind: MatchKind,
        key: String,
        priority: i64,
        actions: String,
    },
    Bpt {
        stage: Option<BufferStage>,
        buffer: BufferId,
        setting: BptSetting,
    },
    Bct {
        op: TableOp,
        field: String,
        value: String,
        buffer: Option<BufferId>,
        priority: i64,
    },
    MgtSet { group: GroupId, ports: Vec<u16> },
    MgtDel { group: GroupId },
    Sched { key: String, value: String },
    Deparse { stage: Stage, nodes: Vec<DeparseNode> },
    Parse {
        op: TableOp,
        stage: Stage,
        node: String,
        on: String,
        next: Option<String>,
    },
    ReadCounter(String),
    ReadRegister(String, u128),
    ReadMeter(String, u128),
    ReadSds,
    ReadNotifications,
    WriteRegister(String, u128, u128),
    WriteMeter(String, u128, MeterConfig),
    ResetCounter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpCommand {
    pub line: usize,
    pub at: u64,
    pub text: String,
    pub verb: CpVerb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CpError {
    pub line: usize,
    pub at: Option<u64>,
    pub command: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpReadRecord {
    pub line: usize,
    pub at: u64,
    pub command: String,
    pub result: Value,
}

/// Parsed script. Lines that failed to parse are kept as errors and are
/// reported in the run statistics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CpScript {
    pub commands: Vec<CpCommand>,
    pub errors: Vec<CpError>,
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "t" | "1" | "on" => Ok(true),
        "false" | "f" | "0" | "off" => Ok(false),
        _ => Err(format!("bad boolean {s:?}")),
    }
}

fn num<T: TryFrom<u128>>(s: &str, what: &str) -> Result<T, String> {
    parse_u128(s)
        .ok()
        .and_then(|v| T::try_from(v).ok())
        .ok_or_else(|| format!("bad {what} {s:?}"))
}

fn parse_verb(rest: &str) -> Result<CpVerb, String> {
    let toks: Vec<&str> = rest.split_whitespace().collect();
    let arg = |i: usize| toks.get(i).copied().ok_or_else(|| "missing argument".to_string());
    let exact_len = |n: usize| {
        if toks.len() == n {
            Ok(())
        } else {
            Err(format!("expected {} argument(s) after the verb", n - 1))
        }
    };
    let verb = arg(0).map_err(|_| "empty command".to_string())?;
    match verb {
        "table" => {
            let op: TableOp = arg(1)?.parse()?;
            let node = arg(2)?.to_string();
            let kind: MatchKind = arg(3)?.parse()?;
            let key = arg(4)?.to_string();
            let mut i = 5;
            let mut priority = 0;
            if let Some(p) = toks.get(5).and_then(|t| t.parse::<i64>().ok()) {
                priority = p;
                i = 6;
            }
            Ok(CpVerb::Table {
                op,
                node,
                kind,
                key,
                priority,
                actions: toks.get(i..).map(|t| t.join(" ")).unwrap_or_default(),
            })
        }
        "bpt" => {
            if arg(1)? != "set" {
                return Err("bpt supports only `set`".into());
            }
            let (stage, i) = match arg(2)? {
                "be1" => (Some(BufferStage::Be1), 3),
                "be2" => (Some(BufferStage::Be2), 3),
                "bre" => (Some(BufferStage::Bre), 3),
                _ => (None, 2),
            };
            exact_len(i + 3)?;
            let buffer = num(arg(i)?, "buffer id")?;
            let v = arg(i + 2)?;
            let setting = match arg(i + 1)? {
                "size" => BptSetting::Size(num(v, "size")?),
                "rx" => BptSetting::Rx(parse_bool(v)?),
                "tx" => BptSetting::Tx(parse_bool(v)?),
                other => return Err(format!("unknown BPT column {other:?}")),
            };
            Ok(CpVerb::Bpt { stage, buffer, setting })
        }
        "bct" => {
            let op: TableOp = arg(1)?.parse()?;
            let field = arg(2)?.to_string();
            let value = arg(3)?.to_string();
            let (buffer, priority) = match (op, toks.len()) {
                (TableOp::Delete, 4) => (None, 0),
                (_, 6) => (
                    Some(num(arg(4)?, "buffer id")?),
                    arg(5)?.parse::<i64>().map_err(|_| "bad priority".to_string())?,
                ),
                _ => return Err("usage: bct add|mod|del <field> <value> [<buffer> <priority>]".into()),
            };
            Ok(CpVerb::Bct {
                op,
                field,
                value,
                buffer,
                priority,
            })
        }
        "mgt" => match arg(1)? {
            "set" => {
                let group = num(arg(2)?, "group id")?;
                let ports = toks[3..]
                    .iter()
                    .flat_map(|t| t.split(','))
                    .filter(|t| !t.is_empty())
                    .map(|t| num(t, "port"))
                    .collect::<Result<Vec<u16>, _>>()?;
                Ok(CpVerb::MgtSet { group, ports })
            }
            "del" | "delete" => {
                exact_len(3)?;
                Ok(CpVerb::MgtDel {
                    group: num(arg(2)?, "group id")?,
                })
            }
            other => Err(format!("unknown mgt operation {other:?}")),
        },
        "sched" => {
            if arg(1)? != "set" {
                return Err("sched supports only `set`".into());
            }
            exact_len(4)?;
            Ok(CpVerb::Sched {
                key: arg(2)?.to_string(),
                value: arg(3)?.to_string(),
            })
        }
        "deparse" => {
            if arg(1)? != "set" {
                return Err("deparse supports only `set`".into());
            }
            let stage: Stage = arg(2)?.parse()?;
            let nodes = toks[3..]
                .iter()
                .map(|t| t.parse::<DeparseNode>())
                .collect::<Result<Vec<_>, _>>()?;
            Ok(CpVerb::Deparse { stage, nodes })
        }
        "parse" => {
            let op: TableOp = arg(1)?.parse()?;
            let stage: Stage = arg(2)?.parse()?;
            let node = arg(3)?.to_string();
            let on = arg(4)?.to_string();
            let next = toks.get(5).map(|s| s.to_string());
            if toks.len() > 6 {
                return Err("too many arguments".into());
            }
            Ok(CpVerb::Parse {
                op,
                stage,
                node,
                on,
                next,
            })
        }
        "read" => match arg(1)? {
            "counter" => {
                exact_len(3)?;
                Ok(CpVerb::ReadCounter(arg(2)?.to_string()))
            }
            "register" => {
                exact_len(4)?;
                Ok(CpVerb::ReadRegister(arg(2)?.to_string(), num(arg(3)?, "index")?))
            }
            "meter" => {
                exact_len(4)?;
                Ok(CpVerb::ReadMeter(arg(2)?.to_string(), num(arg(3)?, "index")?))
            }
            "sds" => {
                exact_len(2)?;
                Ok(CpVerb::ReadSds)
            }
            "notifications" => {
                exact_len(2)?;
                Ok(CpVerb::ReadNotifications)
            }
            other => Err(format!("cannot read {other:?}")),
        },
        "write" => match arg(1)? {
            "register" => {
                exact_len(5)?;
                Ok(CpVerb::WriteRegister(
                    arg(2)?.to_string(),
                    num(arg(3)?, "index")?,
                    num(arg(4)?, "value")?,
                ))
            }
            "meter" => {
                exact_len(8)?;
                let cfg = MeterConfig {
                    cir: num(arg(4)?, "cir")?,
                    cbs: num(arg(5)?, "cbs")?,
                    pir: num(arg(6)?, "pir")?,
                    pbs: num(arg(7)?, "pbs")?,
                };
                Ok(CpVerb::WriteMeter(arg(2)?.to_string(), num(arg(3)?, "index")?, cfg))
            }
            "counter" => Err("counters are read-only from the control plane".into()),
            other => Err(format!("cannot write {other:?}")),
        },
        "reset" => {
            if arg(1)? != "counter" {
                return Err("only counters can be reset".into());
            }
            exact_len(3)?;
            Ok(CpVerb::ResetCounter(arg(2)?.to_string()))
        }
        other => Err(format!("unknown verb {other:?}")),
    }
}

/// Parses a script. Malformed lines and timestamps that go backwards are
/// recorded as errors; the remaining lines still apply.
pub fn parse_script(text: &str) -> CpScript {
    let mut script = CpScript::default();
    let mut last = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (t, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let err = |at: Option<u64>, error: String| CpError {
            line,
            at,
            command: body.to_string(),
            error,
        };
        let Ok(at) = t.parse::<u64>() else {
            script.errors.push(err(None, format!("bad timestamp {t:?}")));
            continue;
        };
        if at < last {
            script
                .errors
                .push(err(Some(at), format!("timestamp {at} is earlier than {last}")));
            continue;
        }
        match parse_verb(rest) {
            Ok(verb) => {
                last = at;
                script.commands.push(CpCommand {
                    line,
                    at,
                    text: body.to_string(),
                    verb,
                });
            }
            Err(e) => script.errors.push(err(Some(at), e)),
        }
    }
    script
}

impl Device {
    fn mau_for_node(&mut self, node: &str) -> Option<Stage> {
        if self.p.mau_ingress.node(node).is_some() {
            Some(Stage::Ingress)
        } else if self.p.mau_egress.node(node).is_some() {
            Some(Stage::Egress)
        } else {
            None
        }
    }

    /// Applies one command now. Reads return a JSON value.
    pub fn apply(&mut self, verb: &CpVerb) -> Result<Option<Value>, String> {
        let e = |x: &dyn std::fmt::Display| x.to_string();
        match verb {
            CpVerb::Table {
                op,
                node,
                kind,
                key,
                priority,
                actions,
            } => {
                let stage = self.mau_for_node(node).ok_or_else(|| format!("no such MAT node {node}"))?;
                let entry = MatEntry {
                    key: parse_match_key(*kind, key)?,
                    priority: *priority,
                    actions: parse_action_list(actions).map_err(|x| e(&x))?,
                };
                let p = &mut self.p;
                let g = match stage {
                    Stage::Ingress => &mut p.mau_ingress,
                    Stage::Egress => &mut p.mau_egress,
                };
                g.apply_entry(node, *op, entry, &p.schema, &p.store).map_err(|x| e(&x))?;
            }
            CpVerb::Bpt { stage, buffer, setting } => {
                let stage = stage.unwrap_or(if self.p.config.enable_be2 {
                    BufferStage::Be2
                } else {
                    BufferStage::Be1
                });
                self.buffers_mut(stage).set_param(*buffer, *setting).map_err(|x| e(&x))?;
            }
            CpVerb::Bct {
                op,
                field,
                value,
                buffer,
                priority,
            } => {
                let width = self
                    .p
                    .schema
                    .width(field)
                    .ok_or_else(|| format!("unknown or variable-width field {field}"))?;
                let entry = BufferConfigEntry {
                    field: field.clone(),
                    value: parse_value(value, width).map_err(|x| e(&x))?,
                    buffer: buffer.unwrap_or(0),
                    priority: *priority,
                };
                self.p.be2.update_bct(*op, entry).map_err(|x| e(&x))?;
            }
            CpVerb::MgtSet { group, ports } => {
                self.p.mgt.set(*group, ports.iter().copied()).map_err(|x| e(&x))?
            }
            CpVerb::MgtDel { group } => self.p.mgt.delete(*group).map_err(|x| e(&x))?,
            CpVerb::Sched { key, value } => self.p.scheduler.set_param(key, value).map_err(|x| e(&x))?,
            CpVerb::Deparse { stage, nodes } => {
                let g = DeparseGraph::new(nodes.clone());
                if let Some(d) = g.validate(&self.p.schema).first() {
                    return Err(d.to_string());
                }
                match stage {
                    Stage::Ingress => self.p.deparser_ingress = g,
                    Stage::Egress => self.p.deparser_egress = g,
                }
            }
            CpVerb::Parse {
                op,
                stage,
                node,
                on,
                next,
            } => {
                let p = &mut self.p;
                let graph = match stage {
                    Stage::Ingress => &mut p.parser_ingress,
                    Stage::Egress => &mut p.parser_egress,
                };
                let on = if on == "*" {
                    ParseMatch::Wildcard
                } else {
                    let field = graph
                        .node(node)
                        .and_then(|n| n.field.clone())
                        .ok_or_else(|| format!("no extraction node {node}"))?;
                    let width = p
                        .schema
                        .width(&field)
                        .ok_or_else(|| format!("field {field} has no fixed width"))?;
                    ParseMatch::Value(parse_value(on, width).map_err(|x| e(&x))?)
                };
                graph
                    .update(&p.schema, node, *op, on, next.as_deref())
                    .map_err(|x| e(&x))?;
            }
            CpVerb::ReadCounter(name) => {
                return self.p.store.counter(name).map(|v| Some(json!(v))).map_err(|x| e(&x));
            }
            CpVerb::ReadRegister(name, idx) => {
                return self
                    .p
                    .store
                    .register_read(name, *idx)
                    .map(|v| Some(json!(v.to_string())))
                    .map_err(|x| e(&x));
            }
            CpVerb::ReadMeter(name, idx) => {
                let (cfg, (tc, tp)) = self.p.store.meter_state(name, *idx).map_err(|x| e(&x))?;
                return Ok(Some(json!({ "config": cfg, "committed_tokens": tc, "peak_tokens": tp })));
            }
            CpVerb::ReadSds => {
                return Ok(Some(serde_json::to_value(self.p.scheduler.inspect()).expect("snapshot")));
            }
            CpVerb::ReadNotifications => {
                let n = self.poll_notifications();
                return Ok(Some(serde_json::to_value(n).expect("notifications")));
            }
            CpVerb::WriteRegister(name, idx, v) => {
                self.p.store.register_write(name, *idx, *v).map_err(|x| e(&x))?
            }
            CpVerb::WriteMeter(name, idx, cfg) => self.p.store.set_meter(name, *idx, *cfg).map_err(|x| e(&x))?,
            CpVerb::ResetCounter(name) => self.p.store.reset_counter(name).map_err(|x| e(&x))?,
        }
        Ok(None)
    }

    pub(crate) fn apply_command(&mut self, cmd: &CpCommand) {
        match self.apply(&cmd.verb) {
            Ok(read) => {
                self.stats.cp_applied += 1;
                if let Some(result) = read {
                    self.stats.cp_reads.push(CpReadRecord {
                        line: cmd.line,
                        at: cmd.at,
                        command: cmd.text.clone(),
                        result,
                    });
                }
            }
            Err(error) => self.stats.cp_errors.push(CpError {
                line: cmd.line,
                at: Some(cmd.at),
                command: cmd.text.clone(),
                error,
            }),
        }
    }
}
