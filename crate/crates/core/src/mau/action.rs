// SPDX-License-Identifier: Apache-2.0

//! Action primitives and their text form, e.g. `set_field(out, ttl - 1)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bits::parse_u128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Field(String),
    Const(u128),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Field(id) => f.write_str(id),
            Operand::Const(v) => write!(f, "{v}"),
        }
    }
}

/// Sum of signed terms; evaluation wraps at the destination width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub terms: Vec<(bool, Operand)>,
}

impl Expr {
    pub fn constant(v: u128) -> Self {
        Expr {
            terms: vec![(false, Operand::Const(v))],
        }
    }

    pub fn field(id: &str) -> Self {
        Expr {
            terms: vec![(false, Operand::Field(id.to_string()))],
        }
    }

    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().filter_map(|(_, o)| match o {
            Operand::Field(id) => Some(id.as_str()),
            Operand::Const(_) => None,
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (neg, op)) in self.terms.iter().enumerate() {
            match (i, neg) {
                (0, true) => write!(f, "-{op}")?,
                (0, false) => write!(f, "{op}")?,
                (_, true) => write!(f, " - {op}")?,
                (_, false) => write!(f, " + {op}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad action {text:?}: {reason}")]
pub struct ActionParseError {
    pub text: String,
    pub reason: String,
}

impl FromStr for Expr {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ActionParseError {
            text: s.to_string(),
            reason: reason.to_string(),
        };
        let mut terms = Vec::new();
        let mut neg = false;
        let mut cur = String::new();
        let flush = |cur: &mut String, neg: bool, terms: &mut Vec<(bool, Operand)>| {
            let t = cur.trim();
            if t.is_empty() {
                return Err(err("empty term"));
            }
            let op = if t.starts_with(|c: char| c.is_ascii_digit()) {
                Operand::Const(parse_u128(t).map_err(|_| err("bad constant"))?)
            } else if t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                Operand::Field(t.to_string())
            } else {
                return Err(err("bad operand"));
            };
            terms.push((neg, op));
            cur.clear();
            Ok(())
        };
        for c in s.chars() {
            match c {
                '+' | '-' => {
                    if cur.trim().is_empty() && terms.is_empty() && c == '-' && !neg {
                        neg = true;
                        continue;
                    }
                    flush(&mut cur, neg, &mut terms)?;
                    neg = c == '-';
                }
                _ => cur.push(c),
            }
        }
        flush(&mut cur, neg, &mut terms)?;
        Ok(Expr { terms })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl ArithOp {
    fn name(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::And => "and",
            ArithOp::Or => "or",
            ArithOp::Xor => "xor",
            ArithOp::Shl => "shl",
            ArithOp::Shr => "shr",
        }
    }

    pub fn apply(self, a: u128, b: u128) -> u128 {
        match self {
            ArithOp::Add => a.wrapping_add(b),
            ArithOp::Sub => a.wrapping_sub(b),
            ArithOp::And => a & b,
            ArithOp::Or => a | b,
            ArithOp::Xor => a ^ b,
            ArithOp::Shl => a.checked_shl(b.min(128) as u32).unwrap_or(0),
            ArithOp::Shr => a.checked_shr(b.min(128) as u32).unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    SetField { dst: String, expr: Expr },
    CopyField { dst: String, src: String },
    Arith { op: ArithOp, dst: String, expr: Expr },
    Drop,
    SetEgressPort(Expr),
    SetMcastGroup(Expr),
    CounterInc { name: String, by: u64 },
    RegisterRead { dst: String, name: String, idx: Expr },
    RegisterWrite { name: String, idx: Expr, value: Expr },
    MeterExec { name: String, idx: Expr, dst: String },
    SetSchedOrder(Expr),
    NoOp,
}

impl Action {
    /// Field written by this action, if any.
    pub fn written_field(&self) -> Option<&str> {
        match self {
            Action::SetField { dst, .. }
            | Action::CopyField { dst, .. }
            | Action::Arith { dst, .. }
            | Action::RegisterRead { dst, .. }
            | Action::MeterExec { dst, .. } => Some(dst),
            Action::SetEgressPort(_) => Some(crate::phv::meta::EGRESS_PORT),
            Action::SetMcastGroup(_) => Some(crate::phv::meta::MCAST_GROUP),
            Action::SetSchedOrder(_) => Some(crate::phv::meta::SCHEDULING_ORDER),
            _ => None,
        }
    }

    /// True if the action can change `egress_port`. Setting the multicast
    /// group counts, because it invalidates the unicast decision.
    pub fn writes_egress_port(&self) -> bool {
        matches!(
            self.written_field(),
            Some(crate::phv::meta::EGRESS_PORT) | Some(crate::phv::meta::MCAST_GROUP)
        )
    }

    /// Fields read by this action.
    pub fn read_fields(&self) -> Vec<&str> {
        match self {
            Action::SetField { expr, .. }
            | Action::SetEgressPort(expr)
            | Action::SetMcastGroup(expr)
            | Action::SetSchedOrder(expr) => expr.fields().collect(),
            Action::Arith { dst, expr, .. } => std::iter::once(dst.as_str()).chain(expr.fields()).collect(),
            Action::CopyField { src, .. } => vec![src],
            Action::RegisterRead { idx, .. } | Action::MeterExec { idx, .. } => idx.fields().collect(),
            Action::RegisterWrite { idx, value, .. } => idx.fields().chain(value.fields()).collect(),
            Action::Drop | Action::CounterInc { .. } | Action::NoOp => vec![],
        }
    }

    /// Stateful object referenced, with its kind.
    pub fn state_object(&self) -> Option<(&'static str, &str)> {
        match self {
            Action::CounterInc { name, .. } => Some(("counter", name)),
            Action::RegisterRead { name, .. } | Action::RegisterWrite { name, .. } => Some(("register", name)),
            Action::MeterExec { name, .. } => Some(("meter", name)),
            _ => None,
        }
    }

    pub fn is_stateful(&self) -> bool {
        self.state_object().is_some()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SetField { dst, expr } => write!(f, "set_field({dst}, {expr})"),
            Action::CopyField { dst, src } => write!(f, "copy_field({dst}, {src})"),
            Action::Arith { op, dst, expr } => write!(f, "{}({dst}, {expr})", op.name()),
            Action::Drop => f.write_str("drop"),
            Action::SetEgressPort(e) => write!(f, "set_egress_port({e})"),
            Action::SetMcastGroup(e) => write!(f, "set_mcast_group({e})"),
            Action::CounterInc { name, by: 1 } => write!(f, "counter_inc({name})"),
            Action::CounterInc { name, by } => write!(f, "counter_inc({name}, {by})"),
            Action::RegisterRead { dst, name, idx } => write!(f, "register_read({dst}, {name}, {idx})"),
            Action::RegisterWrite { name, idx, value } => write!(f, "register_write({name}, {idx}, {value})"),
            Action::MeterExec { name, idx, dst } => write!(f, "meter_exec({name}, {idx}, {dst})"),
            Action::SetSchedOrder(e) => write!(f, "set_sched_order({e})"),
            Action::NoOp => f.write_str("no_op"),
        }
    }
}

fn ident(s: &str) -> Option<String> {
    let s = s.trim();
    let ok = !s.is_empty()
        && !s.starts_with(|c: char| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
    ok.then(|| s.to_string())
}

impl FromStr for Action {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let err = |reason: &str| ActionParseError {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let (name, args) = match text.find('(') {
            Some(open) => {
                if !text.ends_with(')') {
                    return Err(err("missing ')'"));
                }
                let inner = &text[open + 1..text.len() - 1];
                let args: Vec<&str> = if inner.trim().is_empty() {
                    vec![]
                } else {
                    inner.split(',').map(str::trim).collect()
                };
                (text[..open].trim(), args)
            }
            None => (text, vec![]),
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(&format!("expected {n} argument(s), got {}", args.len())))
            }
        };
        let id = |i: usize| ident(args[i]).ok_or_else(|| err("bad identifier"));
        let expr = |i: usize| args[i].parse::<Expr>();
        let arith = |op| -> Result<Action, ActionParseError> {
            arity(2)?;
            Ok(Action::Arith {
                op,
                dst: id(0)?,
                expr: expr(1)?,
            })
        };
        match name {
            "set_field" => {
                arity(2)?;
                Ok(Action::SetField {
                    dst: id(0)?,
                    expr: expr(1)?,
                })
            }
            "copy_field" => {
                arity(2)?;
                Ok(Action::CopyField { dst: id(0)?, src: id(1)? })
            }
            "add" => arith(ArithOp::Add),
            "sub" => arith(ArithOp::Sub),
            "and" => arith(ArithOp::And),
            "or" => arith(ArithOp::Or),
            "xor" => arith(ArithOp::Xor),
            "shl" => arith(ArithOp::Shl),
            "shr" => arith(ArithOp::Shr),
            "drop" => arity(0).map(|_| Action::Drop),
            "no_op" => arity(0).map(|_| Action::NoOp),
            "set_egress_port" => {
                arity(1)?;
                Ok(Action::SetEgressPort(expr(0)?))
            }
            "set_mcast_group" => {
                arity(1)?;
                Ok(Action::SetMcastGroup(expr(0)?))
            }
            "set_sched_order" => {
                arity(1)?;
                Ok(Action::SetSchedOrder(expr(0)?))
            }
            "counter_inc" => {
                let by = match args.len() {
                    1 => 1,
                    2 => parse_u128(args[1])
                        .ok()
                        .and_then(|v| u64::try_from(v).ok())
                        .ok_or_else(|| err("bad increment"))?,
                    _ => return Err(err("expected 1 or 2 arguments")),
                };
                Ok(Action::CounterInc { name: id(0)?, by })
            }
            "register_read" => {
                arity(3)?;
                Ok(Action::RegisterRead {
                    dst: id(0)?,
                    name: id(1)?,
                    idx: expr(2)?,
                })
            }
            "register_write" => {
                arity(3)?;
                Ok(Action::RegisterWrite {
                    name: id(0)?,
                    idx: expr(1)?,
                    value: expr(2)?,
                })
            }
            "meter_exec" => {
                arity(3)?;
                Ok(Action::MeterExec {
                    name: id(0)?,
                    idx: expr(1)?,
                    dst: id(2)?,
                })
            }
            _ => Err(err("unknown primitive")),
        }
    }
}

/// Parses a `;`-separated action list. Blank items are ignored.
pub fn parse_action_list(s: &str) -> Result<Vec<Action>, ActionParseError> {
    s.split(';')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for text in [
            "set_field(out, 9)",
            "copy_field(a, b)",
            "sub(ttl, 1)",
            "drop",
            "set_egress_port(2)",
            "set_mcast_group(grp + 1)",
            "counter_inc(ipv4_counter)",
            "counter_inc(c, 3)",
            "register_read(x, r, 0)",
            "register_write(r, idx, x - 1)",
            "meter_exec(m, 0, color)",
            "set_sched_order(prio)",
            "no_op",
        ] {
            let a: Action = text.parse().unwrap();
            assert_eq!(a.to_string(), text);
        }
    }

    #[test]
    fn list_and_errors() {
        let l = parse_action_list("counter_inc(c); set_egress_port(1)").unwrap();
        assert_eq!(l.len(), 2);
        assert!("frobnicate(x)".parse::<Action>().is_err());
        assert!("set_field(x)".parse::<Action>().is_err());
        assert!("set_field(9x, 1)".parse::<Action>().is_err());
        assert!("set_field(x, 1 +)".parse::<Action>().is_err());
    }

    #[test]
    fn expression_terms() {
        let e: Expr = "-a + 0x10 - b".parse().unwrap();
        assert_eq!(
            e.terms,
            vec![
                (true, Operand::Field("a".into())),
                (false, Operand::Const(16)),
                (true, Operand::Field("b".into())),
            ]
        );
    }

    #[test]
    fn egress_writers() {
        assert!("set_egress_port(1)".parse::<Action>().unwrap().writes_egress_port());
        assert!("set_field(egress_port, 1)".parse::<Action>().unwrap().writes_egress_port());
        assert!("set_mcast_group(1)".parse::<Action>().unwrap().writes_egress_port());
        assert!(!"set_field(x, egress_port)".parse::<Action>().unwrap().writes_egress_port());
    }
}
