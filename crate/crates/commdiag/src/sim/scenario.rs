//! Line-oriented scenario scripts.
//!
//! ```text
//! cluster N CHANNELS SEED [bandwidth=F] [latency=N] [jitter=N] [measure=0|1]
//! comm ID ring|tree R0,R1,...
//! round COMM OP ALGO PROTO BYTES
//! fault KIND VICTIM ROUND [key=val ...]
//! advance USEC                          # advance simulated time by USEC
//! destroy COMM
//! expect KIND VICTIM | expect none
//! # comment
//! ```
//!
//! Fault kinds accept long names (`comm_slow`) or the short aliases
//! `h1 h2 h3 s1 s2 s3`. Kind-specific keys: `entry_delay_us`,
//! `bandwidth_factor`, `freeze_after_fraction`, `comm`, and `op`/`algo`/
//! `proto`/`bytes` for an explicit inconsistent-hang substitute descriptor.
//! `expect` lines declare the reports a run must produce; `expect none`
//! asserts a clean run.

use crate::error::{Error, Result};
use crate::sim::config::ClusterConfig;
use crate::sim::fault::{FaultKind, FaultSpec};
use crate::trace::{
    Algorithm, CommunicatorId, OpKind, OperationDescriptor, Protocol, RankId,
};

/// One parsed scenario action, in script order.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioStep {
    CreateComm {
        id: CommunicatorId,
        algorithm: Algorithm,
        members: Vec<RankId>,
    },
    Round {
        comm: CommunicatorId,
        round: u64,
        descriptor: OperationDescriptor,
    },
    Advance {
        by_us: u64,
    },
    Destroy {
        comm: CommunicatorId,
    },
}

/// Declared outcome a run is checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// The run must produce no reports at all.
    NoReports,
    /// Exactly one report of this class naming this victim.
    Anomaly { kind: FaultKind, victim: RankId },
}

/// A parsed scenario script.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub cluster: ClusterConfig,
    pub steps: Vec<ScenarioStep>,
    pub faults: Vec<FaultSpec>,
    pub expectations: Vec<Expectation>,
}

impl Scenario {
    /// Parses a script; `name` labels the scenario in summaries.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut cluster: Option<ClusterConfig> = None;
        let mut steps = Vec::new();
        let mut faults = Vec::new();
        let mut expectations = Vec::new();
        let mut comm_rounds: std::collections::BTreeMap<CommunicatorId, u64> = Default::default();
        let mut known_comms: Vec<CommunicatorId> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| Error::ScenarioSyntax { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens[0] {
                "cluster" => {
                    if cluster.is_some() {
                        return Err(err("duplicate cluster line".into()));
                    }
                    if tokens.len() < 4 {
                        return Err(err("usage: cluster N CHANNELS SEED [key=val...]".into()));
                    }
                    let num_ranks = parse_num(tokens[1], line, "rank count")?;
                    let channels = parse_num(tokens[2], line, "channel count")?;
                    let seed = parse_num(tokens[3], line, "seed")?;
                    let mut cfg = ClusterConfig::new(num_ranks as u32, channels as u32, seed);
                    for kv in &tokens[4..] {
                        let (key, val) = split_kv(kv, line)?;
                        match key {
                            "bandwidth" => {
                                cfg.bandwidth_bytes_per_us = parse_float(val, line, "bandwidth")?
                            }
                            "latency" => {
                                cfg.base_latency_us = parse_num(val, line, "latency")?
                            }
                            "jitter" => cfg.entry_jitter_us = parse_num(val, line, "jitter")?,
                            "budget" => {
                                cfg.edge_budget_units = parse_num(val, line, "budget")?
                            }
                            "measure" => {
                                cfg.measurement_enabled = parse_num(val, line, "measure")? != 0
                            }
                            other => {
                                return Err(err(format!("unknown cluster key '{other}'")));
                            }
                        }
                    }
                    cluster = Some(cfg);
                }
                "comm" => {
                    if tokens.len() != 4 {
                        return Err(err("usage: comm ID ring|tree R0,R1,...".into()));
                    }
                    let id = CommunicatorId(parse_num(tokens[1], line, "communicator id")?);
                    let algorithm = Algorithm::parse(tokens[2])
                        .ok_or_else(|| err(format!("unknown algorithm '{}'", tokens[2])))?;
                    let members = tokens[3]
                        .split(',')
                        .map(|r| parse_num(r, line, "member rank").map(|v| RankId(v as u32)))
                        .collect::<Result<Vec<_>>>()?;
                    known_comms.push(id);
                    comm_rounds.insert(id, 0);
                    steps.push(ScenarioStep::CreateComm {
                        id,
                        algorithm,
                        members,
                    });
                }
                "round" => {
                    if tokens.len() != 6 {
                        return Err(err("usage: round COMM OP ALGO PROTO BYTES".into()));
                    }
                    let comm = CommunicatorId(parse_num(tokens[1], line, "communicator id")?);
                    if !known_comms.contains(&comm) {
                        return Err(err(format!("round names unknown communicator {comm}")));
                    }
                    let op = OpKind::parse(tokens[2])
                        .ok_or_else(|| err(format!("unknown operation '{}'", tokens[2])))?;
                    let algo = Algorithm::parse(tokens[3])
                        .ok_or_else(|| err(format!("unknown algorithm '{}'", tokens[3])))?;
                    let proto = Protocol::parse(tokens[4])
                        .ok_or_else(|| err(format!("unknown protocol '{}'", tokens[4])))?;
                    let bytes = parse_num(tokens[5], line, "data size")?;
                    let descriptor = OperationDescriptor::new(op, algo, proto, bytes)
                        .map_err(|e| err(e.to_string()))?;
                    let round = comm_rounds.entry(comm).or_insert(0);
                    steps.push(ScenarioStep::Round {
                        comm,
                        round: *round,
                        descriptor,
                    });
                    *round += 1;
                }
                "fault" => {
                    if tokens.len() < 4 {
                        return Err(err("usage: fault KIND VICTIM ROUND [key=val...]".into()));
                    }
                    let kind = FaultKind::parse(tokens[1])
                        .ok_or_else(|| err(format!("unknown fault kind '{}'", tokens[1])))?;
                    let victim = RankId(parse_num(tokens[2], line, "victim rank")? as u32);
                    let trigger = parse_num(tokens[3], line, "trigger round")?;
                    let mut spec = FaultSpec::new(kind, victim, trigger);
                    let mut sub_op = None;
                    let mut sub_algo = None;
                    let mut sub_proto = None;
                    let mut sub_bytes = None;
                    for kv in &tokens[4..] {
                        let (key, val) = split_kv(kv, line)?;
                        match key {
                            "comm" => {
                                spec.comm =
                                    Some(CommunicatorId(parse_num(val, line, "comm id")?))
                            }
                            "entry_delay_us" => {
                                spec.entry_delay_us = parse_num(val, line, "entry delay")?
                            }
                            "bandwidth_factor" => {
                                spec.bandwidth_factor =
                                    parse_float(val, line, "bandwidth factor")?
                            }
                            "freeze_after_fraction" => {
                                spec.freeze_after_fraction =
                                    parse_float(val, line, "freeze fraction")?
                            }
                            "op" => {
                                sub_op = Some(OpKind::parse(val).ok_or_else(|| {
                                    err(format!("unknown operation '{val}'"))
                                })?)
                            }
                            "algo" => {
                                sub_algo = Some(Algorithm::parse(val).ok_or_else(|| {
                                    err(format!("unknown algorithm '{val}'"))
                                })?)
                            }
                            "proto" => {
                                sub_proto = Some(Protocol::parse(val).ok_or_else(|| {
                                    err(format!("unknown protocol '{val}'"))
                                })?)
                            }
                            "bytes" => sub_bytes = Some(parse_num(val, line, "data size")?),
                            other => return Err(err(format!("unknown fault key '{other}'"))),
                        }
                    }
                    if sub_op.is_some()
                        || sub_algo.is_some()
                        || sub_proto.is_some()
                        || sub_bytes.is_some()
                    {
                        match (sub_op, sub_algo, sub_proto, sub_bytes) {
                            (Some(op), Some(algo), Some(proto), Some(bytes)) => {
                                spec.substitute = Some(
                                    OperationDescriptor::new(op, algo, proto, bytes)
                                        .map_err(|e| err(e.to_string()))?,
                                );
                            }
                            _ => {
                                return Err(err(
                                    "substitute descriptor needs op=, algo=, proto= and bytes="
                                        .into(),
                                ))
                            }
                        }
                    }
                    spec.validate().map_err(|e| err(e.to_string()))?;
                    faults.push(spec);
                }
                "advance" => {
                    if tokens.len() != 2 {
                        return Err(err("usage: advance USEC".into()));
                    }
                    let by_us = parse_num(tokens[1], line, "advance duration")?;
                    steps.push(ScenarioStep::Advance { by_us });
                }
                "destroy" => {
                    if tokens.len() != 2 {
                        return Err(err("usage: destroy COMM".into()));
                    }
                    let comm = CommunicatorId(parse_num(tokens[1], line, "communicator id")?);
                    steps.push(ScenarioStep::Destroy { comm });
                }
                "expect" => {
                    if tokens.len() == 2 && tokens[1] == "none" {
                        expectations.push(Expectation::NoReports);
                    } else if tokens.len() == 3 {
                        let kind = FaultKind::parse(tokens[1])
                            .ok_or_else(|| err(format!("unknown fault kind '{}'", tokens[1])))?;
                        let victim = RankId(parse_num(tokens[2], line, "victim rank")? as u32);
                        expectations.push(Expectation::Anomaly { kind, victim });
                    } else {
                        return Err(err("usage: expect KIND VICTIM | expect none".into()));
                    }
                }
                other => {
                    return Err(err(format!("unknown directive '{other}'")));
                }
            }
        }

        let cluster = cluster.ok_or(Error::ScenarioSyntax {
            line: 0,
            msg: "script has no cluster line".into(),
        })?;
        Ok(Scenario {
            name: name.to_string(),
            cluster,
            steps,
            faults,
            expectations,
        })
    }

    /// Total simulated time the script advances through.
    pub fn total_advance_us(&self) -> u64 {
        self.steps
            .iter()
            .map(|s| match s {
                ScenarioStep::Advance { by_us } => *by_us,
                _ => 0,
            })
            .sum()
    }
}

fn split_kv(token: &str, line: usize) -> Result<(&str, &str)> {
    token.split_once('=').ok_or(Error::ScenarioSyntax {
        line,
        msg: format!("expected key=val, got '{token}'"),
    })
}

fn parse_num(s: &str, line: usize, what: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::ScenarioSyntax {
        line,
        msg: format!("invalid {what} '{s}'"),
    })
}

fn parse_float(s: &str, line: usize, what: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::ScenarioSyntax {
        line,
        msg: format!("invalid {what} '{s}'"),
    })
}
