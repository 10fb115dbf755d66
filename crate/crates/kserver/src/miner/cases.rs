//! Training cases scanned from an optimum trace.
//!
//! A case records the arriving request, the per-node occupancy bits of the
//! configuration it saw, and the node the optimum moved a server from
//! (the class). Covered requests yield class = request.

use crate::domain::{apply_decision, Configuration, NodeId};
use crate::offline::OptTrace;
use crate::streamgen::RequestStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Case {
    pub request: NodeId,
    pub occupancy: u64, // bit i set = server at node i when the request arrived
    pub class: NodeId,
}

impl Case {
    pub fn occupied(&self, node: usize) -> bool {
        self.occupancy & (1u64 << node) != 0
    }
}

/// Flat database of training cases, one per request of the training stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseTable {
    pub n: usize,
    pub k: usize,
    pub cases: Vec<Case>,
}

impl CaseTable {
    /// CSV with header `request,node0,...,node{n-1},class`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("request");
        for i in 0..self.n {
            out.push_str(&format!(",node{i}"));
        }
        out.push_str(",class\n");
        for case in &self.cases {
            out.push_str(&case.request.to_string());
            for i in 0..self.n {
                out.push_str(if case.occupied(i) { ",1" } else { ",0" });
            }
            out.push_str(&format!(",{}\n", case.class));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::CaseTable("empty case file".into()))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 3 || columns[0] != "request" || *columns.last().unwrap() != "class" {
            return Err(Error::CaseTable(format!("bad header {header:?}")));
        }
        let n = columns.len() - 2;
        for (i, col) in columns[1..=n].iter().enumerate() {
            if *col != format!("node{i}") {
                return Err(Error::CaseTable(format!("unexpected column {col:?}")));
            }
        }
        let mut cases = Vec::new();
        let mut k = None;
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n + 2 {
                return Err(Error::CaseTable(format!(
                    "row {} has {} fields, expected {}",
                    ln + 2,
                    fields.len(),
                    n + 2
                )));
            }
            let parse_node = |t: &str| -> Result<NodeId> {
                let v: u32 = t
                    .parse()
                    .map_err(|_| Error::CaseTable(format!("bad value {t:?} on row {}", ln + 2)))?;
                if (v as usize) < n {
                    Ok(NodeId(v))
                } else {
                    Err(Error::CaseTable(format!("node {v} out of range on row {}", ln + 2)))
                }
            };
            let request = parse_node(fields[0])?;
            let mut occupancy = 0u64;
            for (i, f) in fields[1..=n].iter().enumerate() {
                match *f {
                    "0" => {}
                    "1" => occupancy |= 1u64 << i,
                    other => {
                        return Err(Error::CaseTable(format!(
                            "bad occupancy bit {other:?} on row {}",
                            ln + 2
                        )))
                    }
                }
            }
            let class = parse_node(fields[n + 1])?;
            let case = Case {
                request,
                occupancy,
                class,
            };
            let bits = occupancy.count_ones() as usize;
            match k {
                None => k = Some(bits),
                Some(expected) if expected != bits => {
                    return Err(Error::CaseTable(format!(
                        "row {} has {bits} occupied nodes, expected {expected}",
                        ln + 2
                    )))
                }
                _ => {}
            }
            check_case(&case)?;
            cases.push(case);
        }
        let k = k.ok_or_else(|| Error::CaseTable("case file has no rows".into()))?;
        Ok(CaseTable { n, k, cases })
    }
}

fn check_case(case: &Case) -> Result<()> {
    if case.occupied(case.request.index()) {
        if case.class != case.request {
            return Err(Error::CaseTable(format!(
                "covered request {} must have class {}, got {}",
                case.request, case.request, case.class
            )));
        }
    } else if !case.occupied(case.class.index()) {
        return Err(Error::CaseTable(format!(
            "class {} names an unoccupied node",
            case.class
        )));
    }
    Ok(())
}

/// Scan an optimum trace into a case table: one case per request, built
/// from the configuration seen on arrival and the optimum's source node.
pub fn extract_cases(
    n: usize,
    start: Configuration,
    stream: &RequestStream,
    trace: &OptTrace,
) -> Result<CaseTable> {
    if trace.decisions.len() != stream.len() {
        return Err(Error::CaseTable(format!(
            "trace length {} does not match stream length {}",
            trace.decisions.len(),
            stream.len()
        )));
    }
    let k = start.k();
    let mut config = start;
    let mut cases = Vec::with_capacity(stream.len());
    for (decision, &request) in trace.decisions.iter().zip(&stream.requests) {
        if decision.request != request {
            return Err(Error::CaseTable(format!(
                "trace decision for {} does not match request {}",
                decision.request, request
            )));
        }
        cases.push(Case {
            request,
            occupancy: config.mask(),
            class: decision.source,
        });
        config = apply_decision(config, decision)?;
    }
    Ok(CaseTable { n, k, cases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DistanceFunction, NodeSpace};
    use crate::offline::optimum_flow;

    fn config_of(ids: &[u32]) -> Configuration {
        Configuration::from_nodes(ids.iter().map(|&i| NodeId(i))).unwrap()
    }

    fn stream_of(ids: &[u32]) -> RequestStream {
        RequestStream {
            requests: ids.iter().map(|&i| NodeId(i)).collect(),
        }
    }

    #[test]
    fn cases_from_anti_greedy_optimum() {
        let space = NodeSpace::line(6);
        let start = config_of(&[0, 3]);
        let stream = stream_of(&[1, 2]);
        let trace = optimum_flow(&space, &DistanceFunction::LineAbs, start, &stream).unwrap();
        assert_eq!(trace.total_cost, 2);
        let table = extract_cases(6, start, &stream, &trace).unwrap();
        assert_eq!(table.cases.len(), 2);
        assert_eq!(table.cases[0].request, NodeId(1));
        assert_eq!(table.cases[0].occupancy, 0b001001);
        assert_eq!(table.cases[0].class, NodeId(0));
        assert_eq!(table.cases[1].request, NodeId(2));
        assert_eq!(table.cases[1].occupancy, 0b001010);
        // two optima exist: serve 2 from 1 or from 3, both at cost 1
        assert!([NodeId(1), NodeId(3)].contains(&table.cases[1].class));
    }

    #[test]
    fn covered_request_class_is_request() {
        let space = NodeSpace::line(6);
        let start = config_of(&[0, 3]);
        let stream = stream_of(&[3, 3]);
        let trace = optimum_flow(&space, &DistanceFunction::LineAbs, start, &stream).unwrap();
        let table = extract_cases(6, start, &stream, &trace).unwrap();
        for case in &table.cases {
            assert_eq!(case.class, case.request);
        }
    }

    #[test]
    fn case_count_equals_stream_length() {
        let space = NodeSpace::line(6);
        let start = config_of(&[0, 3]);
        let stream = stream_of(&[1, 2, 1, 5, 0, 0]);
        let trace = optimum_flow(&space, &DistanceFunction::LineAbs, start, &stream).unwrap();
        let table = extract_cases(6, start, &stream, &trace).unwrap();
        assert_eq!(table.cases.len(), stream.len());
        for case in &table.cases {
            assert_eq!(case.occupancy.count_ones(), 2);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let space = NodeSpace::line(6);
        let start = config_of(&[0, 3]);
        let stream = stream_of(&[1, 2]);
        let trace = optimum_flow(&space, &DistanceFunction::LineAbs, start, &stream).unwrap();
        let longer = stream_of(&[1, 2, 3]);
        assert!(extract_cases(6, start, &longer, &trace).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let space = NodeSpace::line(6);
        let start = config_of(&[0, 3]);
        let stream = stream_of(&[1, 2, 1, 5, 0, 0]);
        let trace = optimum_flow(&space, &DistanceFunction::LineAbs, start, &stream).unwrap();
        let table = extract_cases(6, start, &stream, &trace).unwrap();
        let csv = table.to_csv();
        assert!(csv.starts_with("request,node0,node1,node2,node3,node4,node5,class\n"));
        assert_eq!(CaseTable::parse_csv(&csv).unwrap(), table);
    }
}
