// SPDX-License-Identifier: Apache-2.0

pub mod bits;
pub mod delay;
pub mod parser;
pub mod phv;
pub mod table;
pub mod buffer;
pub mod mau;
pub mod deparser;
pub mod replication;
pub mod scheduler;
pub mod control;
pub mod pipeline;
pub mod trace;
pub mod dpp;
pub mod score;
