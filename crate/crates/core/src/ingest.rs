//! Reading and writing network series: dense JSON, edge lists, and
//! sponsorship event logs turned into sliding-window snapshots.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TergmError};
use crate::network::{Network, NetworkSeries, NodeAttributes};

/// One proposal: a sponsor and the nodes that cosponsored it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SponsorshipEvent {
    pub proposal_id: String,
    pub sponsor: usize,
    pub cosponsors: Vec<usize>,
}

/// Builds snapshots over windows of `window` consecutive events, advancing
/// by `step`. Within a window, `A_ij = 1` iff `i` cosponsored a proposal
/// sponsored by `j`.
pub fn build_sliding_windows(
    events: &[SponsorshipEvent],
    window: usize,
    step: usize,
    n: usize,
) -> Result<NetworkSeries> {
    if window == 0 || step == 0 {
        return Err(TergmError::InvalidConfig(
            "window and step must be positive".into(),
        ));
    }
    if events.is_empty() {
        return Err(TergmError::EmptySeries("no events".into()));
    }
    if window > events.len() {
        return Err(TergmError::EmptySeries(format!(
            "window {window} exceeds the {} available events",
            events.len()
        )));
    }
    for ev in events {
        if ev.sponsor >= n {
            return Err(TergmError::Ingestion(format!(
                "proposal {}: sponsor {} out of range for {n} nodes",
                ev.proposal_id, ev.sponsor
            )));
        }
        for &c in &ev.cosponsors {
            if c >= n {
                return Err(TergmError::Ingestion(format!(
                    "proposal {}: cosponsor {c} out of range for {n} nodes",
                    ev.proposal_id
                )));
            }
            if c == ev.sponsor {
                return Err(TergmError::Ingestion(format!(
                    "proposal {}: node {c} is both sponsor and cosponsor",
                    ev.proposal_id
                )));
            }
        }
    }
    let snapshots = (events.len() - window) / step + 1;
    let networks = (0..snapshots)
        .map(|s| {
            let mut net = Network::empty(n);
            for ev in &events[s * step..s * step + window] {
                for &c in &ev.cosponsors {
                    net.set(c, ev.sponsor, true);
                }
            }
            net
        })
        .collect();
    NetworkSeries::new(networks)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesFormat {
    EdgeList,
    EventLog,
    DenseJson,
}

impl std::str::FromStr for SeriesFormat {
    type Err = TergmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-list" => Ok(SeriesFormat::EdgeList),
            "event-log" => Ok(SeriesFormat::EventLog),
            "dense-json" => Ok(SeriesFormat::DenseJson),
            other => Err(TergmError::InvalidConfig(format!(
                "unknown series format `{other}`"
            ))),
        }
    }
}

/// Options for formats that do not carry everything themselves.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Node count; inferred from the largest index when absent.
    pub n: Option<usize>,
    pub window: usize,
    pub step: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            n: None,
            window: 100,
            step: 30,
        }
    }
}

pub fn load_series(
    path: &Path,
    format: SeriesFormat,
    options: &LoadOptions,
) -> Result<NetworkSeries> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    parse_series(&text, format, options)
}

pub fn parse_series(
    text: &str,
    format: SeriesFormat,
    options: &LoadOptions,
) -> Result<NetworkSeries> {
    match format {
        SeriesFormat::DenseJson => parse_dense_json(text),
        SeriesFormat::EdgeList => parse_edge_list(text, options.n),
        SeriesFormat::EventLog => {
            let log = parse_event_log(text)?;
            let n = match options.n {
                Some(n) if n < log.node_count => {
                    return Err(TergmError::Ingestion(format!(
                        "event log references {} nodes but n = {n}",
                        log.node_count
                    )))
                }
                Some(n) => n,
                None => log.node_count,
            };
            let series = build_sliding_windows(&log.events, options.window, options.step, n)?;
            match log.node_names {
                Some(mut names) => {
                    names.extend((names.len()..n).map(|i| i.to_string()));
                    series.with_node_names(names)
                }
                None => Ok(series),
            }
        }
    }
}

/// Labels object of the dense-json format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelsJson {
    pub alphabet: Vec<String>,
    pub values: Vec<Option<String>>,
    pub observed: Vec<bool>,
}

impl LabelsJson {
    pub fn to_attributes(&self) -> Result<NodeAttributes> {
        NodeAttributes::from_names(self.alphabet.clone(), &self.values, self.observed.clone())
    }

    pub fn from_attributes(attrs: &NodeAttributes) -> Self {
        LabelsJson {
            alphabet: attrs.alphabet().to_vec(),
            values: attrs
                .labels()
                .iter()
                .map(|l| l.map(|v| attrs.label_name(v).to_string()))
                .collect(),
            observed: attrs.observed().to_vec(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DenseJson {
    n: usize,
    networks: Vec<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<LabelsJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_names: Option<Vec<String>>,
}

fn json_error(e: serde_json::Error) -> TergmError {
    TergmError::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

pub fn parse_dense_json(text: &str) -> Result<NetworkSeries> {
    let doc: DenseJson = serde_json::from_str(text).map_err(json_error)?;
    let networks = doc
        .networks
        .iter()
        .enumerate()
        .map(|(t, rows)| {
            let net = Network::from_rows(rows)
                .map_err(|e| TergmError::InvalidNetwork(format!("network {} : {e}", t + 1)))?;
            if net.n() != doc.n {
                return Err(TergmError::DimensionMismatch {
                    expected: doc.n,
                    found: net.n(),
                });
            }
            Ok(net)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut series = NetworkSeries::new(networks)?;
    if let Some(labels) = &doc.labels {
        series = series.with_attributes(labels.to_attributes()?)?;
    }
    if let Some(names) = doc.node_names {
        series = series.with_node_names(names)?;
    }
    Ok(series)
}

pub fn series_to_dense_json(series: &NetworkSeries) -> Result<String> {
    let doc = DenseJson {
        n: series.n(),
        networks: series.networks().iter().map(Network::rows).collect(),
        labels: series.attributes().map(LabelsJson::from_attributes),
        node_names: series.node_names().map(<[String]>::to_vec),
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Writes dense JSON via a temporary file and rename.
pub fn save_series(series: &NetworkSeries, path: &Path) -> Result<()> {
    write_atomically(path, series_to_dense_json(series)?.as_bytes())
}

pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path.file_name().ok_or_else(|| {
        TergmError::InvalidConfig(format!("{} is not a file path", path.display()))
    })?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| TergmError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(TergmError::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                found.join(",")
            ),
        });
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn parse_index(field: &str, what: &str, line: usize) -> Result<usize> {
    field.parse::<usize>().map_err(|_| TergmError::Parse {
        line,
        message: format!("{what} `{field}` is not a non-negative integer"),
    })
}

/// Edge list with header `t,src,dst`; `t` is 1-based, nodes 0-based.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<NetworkSeries> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &["t", "src", "dst"])?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TergmError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(TergmError::Parse {
                line,
                message: "expected 3 fields".into(),
            });
        }
        let t = parse_index(&record[0], "t", line)?;
        if t == 0 {
            return Err(TergmError::Parse {
                line,
                message: "t is 1-based".into(),
            });
        }
        let src = parse_index(&record[1], "src", line)?;
        let dst = parse_index(&record[2], "dst", line)?;
        if src == dst {
            return Err(TergmError::Parse {
                line,
                message: format!("self-loop on node {src}"),
            });
        }
        rows.push((line, t, src, dst));
    }
    if rows.is_empty() {
        return Err(TergmError::EmptySeries("edge list has no rows".into()));
    }
    let max_node = rows.iter().map(|r| r.2.max(r.3)).max().unwrap_or(0);
    let n = match n {
        Some(n) => n,
        None => max_node + 1,
    };
    let t_max = rows.iter().map(|r| r.1).max().unwrap_or(1);
    let mut networks = vec![Network::empty(n); t_max];
    for (line, t, src, dst) in rows {
        if src >= n || dst >= n {
            return Err(TergmError::Parse {
                line,
                message: format!("node index out of range for n = {n}"),
            });
        }
        networks[t - 1].set(src, dst, true);
    }
    NetworkSeries::new(networks)
}

pub fn series_to_edge_list(series: &NetworkSeries) -> String {
    let mut out = String::from("t,src,dst\n");
    for (t, net) in series.networks().iter().enumerate() {
        for (i, j) in net.edges() {
            out.push_str(&format!("{},{i},{j}\n", t + 1));
        }
    }
    out
}

/// Node labels from CSV with header `node,label` or `node,label,observed`.
/// Nodes are matched against `node_names` when given, otherwise read as
/// 0-based indices. An empty label or `observed = false` marks the node as
/// unobserved; the alphabet is the labels in order of first appearance.
pub fn parse_labels_csv(
    text: &str,
    n: usize,
    node_names: Option<&[String]>,
) -> Result<NodeAttributes> {
    let mut reader = csv_reader(text);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| TergmError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let with_mask = match header
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["node", "label"] => false,
        ["node", "label", "observed"] => true,
        _ => {
            return Err(TergmError::Parse {
                line: 1,
                message: format!(
                    "expected header `node,label[,observed]`, found `{}`",
                    header.join(",")
                ),
            })
        }
    };
    let mut alphabet: Vec<String> = Vec::new();
    let mut values: Vec<Option<String>> = vec![None; n];
    let mut observed = vec![false; n];
    let mut seen = vec![false; n];
    for record in reader.records() {
        let record = record.map_err(|e| TergmError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&record);
        let node = match node_names {
            Some(names) => {
                names
                    .iter()
                    .position(|x| x == &record[0])
                    .ok_or_else(|| TergmError::Parse {
                        line,
                        message: format!("unknown node `{}`", &record[0]),
                    })?
            }
            None => parse_index(&record[0], "node", line)?,
        };
        if node >= n {
            return Err(TergmError::Parse {
                line,
                message: format!("node {node} out of range for {n} nodes"),
            });
        }
        if std::mem::replace(&mut seen[node], true) {
            return Err(TergmError::Parse {
                line,
                message: format!("node `{}` listed twice", &record[0]),
            });
        }
        let label = record[1].to_string();
        let visible = if with_mask {
            match &record[2] {
                "true" | "1" => true,
                "false" | "0" => false,
                other => {
                    return Err(TergmError::Parse {
                        line,
                        message: format!("observed flag `{other}` is not true/false"),
                    })
                }
            }
        } else {
            true
        };
        if !label.is_empty() {
            if !alphabet.contains(&label) {
                alphabet.push(label.clone());
            }
            values[node] = Some(label);
        }
        observed[node] = visible && values[node].is_some();
    }
    NodeAttributes::from_names(alphabet, &values, observed)
}

/// Parsed event log: events in proposal order plus the node mapping.
#[derive(Clone, Debug)]
pub struct EventLog {
    pub events: Vec<SponsorshipEvent>,
    pub node_count: usize,
    /// Present when the log names nodes instead of numbering them.
    pub node_names: Option<Vec<String>>,
}

/// Event log with header `proposal_id,sponsor,cosponsor`, one row per
/// (sponsor, cosponsor) pair. An empty cosponsor field records a proposal
/// without cosponsors. Proposals are ordered by first appearance.
pub fn parse_event_log(text: &str) -> Result<EventLog> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &["proposal_id", "sponsor", "cosponsor"])?;
    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TergmError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(TergmError::Parse {
                line,
                message: "expected 3 fields".into(),
            });
        }
        if record[1].is_empty() {
            return Err(TergmError::Parse {
                line,
                message: "missing sponsor".into(),
            });
        }
        raw.push((
            line,
            record[0].to_string(),
            record[1].to_string(),
            record[2].to_string(),
        ));
    }
    if raw.is_empty() {
        return Err(TergmError::EmptySeries("event log has no rows".into()));
    }

    let numeric = raw.iter().all(|(_, _, s, c)| {
        s.parse::<usize>().is_ok() && (c.is_empty() || c.parse::<usize>().is_ok())
    });
    let mut names: Vec<String> = Vec::new();
    let mut name_index: HashMap<String, usize> = HashMap::new();
    let mut node_of = |token: &str| -> usize {
        if numeric {
            token.parse().expect("checked numeric")
        } else {
            *name_index.entry(token.to_string()).or_insert_with(|| {
                names.push(token.to_string());
                names.len() - 1
            })
        }
    };

    let mut events: Vec<SponsorshipEvent> = Vec::new();
    let mut event_index: HashMap<String, usize> = HashMap::new();
    for (line, pid, sponsor, cosponsor) in &raw {
        let s = node_of(sponsor);
        let c = if cosponsor.is_empty() {
            None
        } else {
            Some(node_of(cosponsor))
        };
        if c == Some(s) {
            return Err(TergmError::Parse {
                line: *line,
                message: format!("sponsor {sponsor} cosponsors own proposal"),
            });
        }
        let idx = *event_index.entry(pid.clone()).or_insert_with(|| {
            events.push(SponsorshipEvent {
                proposal_id: pid.clone(),
                sponsor: s,
                cosponsors: Vec::new(),
            });
            events.len() - 1
        });
        let ev = &mut events[idx];
        if ev.sponsor != s {
            return Err(TergmError::Parse {
                line: *line,
                message: format!("proposal {pid} has more than one sponsor"),
            });
        }
        if let Some(c) = c {
            if !ev.cosponsors.contains(&c) {
                ev.cosponsors.push(c);
            }
        }
    }
    let node_count = if numeric {
        events
            .iter()
            .flat_map(|e| std::iter::once(e.sponsor).chain(e.cosponsors.iter().copied()))
            .max()
            .map_or(0, |m| m + 1)
    } else {
        names.len()
    };
    Ok(EventLog {
        events,
        node_count,
        node_names: (!numeric).then_some(names),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: usize, sponsor: usize, cos: &[usize]) -> SponsorshipEvent {
        SponsorshipEvent {
            proposal_id: id.to_string(),
            sponsor,
            cosponsors: cos.to_vec(),
        }
    }

    #[test]
    fn labels_csv_with_mask() {
        let text = "node,label,observed\n0,dem,true\n1,rep,false\n2,,false\n";
        let a = parse_labels_csv(text, 3, None).unwrap();
        assert_eq!(a.alphabet(), ["dem".to_string(), "rep".to_string()]);
        assert_eq!(a.labels(), [Some(0), Some(1), None]);
        assert_eq!(a.observed(), [true, false, false]);
        let names = vec!["x".to_string(), "y".to_string()];
        let b = parse_labels_csv("node,label\ny,a\nx,b\n", 2, Some(&names)).unwrap();
        assert_eq!(b.labels(), [Some(1), Some(0)]);
        assert!(parse_labels_csv("node,label\n0,a\n0,b\n", 2, None).is_err());
        assert!(parse_labels_csv("id,label\n0,a\n", 2, None).is_err());
    }

    #[test]
    fn three_events_one_edge() {
        let events: Vec<_> = (0..3).map(|i| ev(i, 0, &[1])).collect();
        let s = build_sliding_windows(&events, 3, 1, 3).unwrap();
        assert_eq!(s.len(), 1);
        let a = &s.networks()[0];
        assert!(a.has_edge(1, 0));
        assert_eq!(a.edge_count(), 1);
    }

    #[test]
    fn senate_layout_gives_fourteen_snapshots() {
        let events: Vec<_> = (0..490).map(|i| ev(i, i % 100, &[(i + 1) % 100])).collect();
        let s = build_sliding_windows(&events, 100, 30, 100).unwrap();
        assert_eq!(s.len(), 14);
    }

    #[test]
    fn window_larger_than_events_is_empty_series() {
        assert!(matches!(
            build_sliding_windows(&[], 3, 1, 3),
            Err(TergmError::EmptySeries(_))
        ));
        let events = vec![ev(0, 0, &[1])];
        assert!(matches!(
            build_sliding_windows(&events, 2, 1, 3),
            Err(TergmError::EmptySeries(_))
        ));
    }

    #[test]
    fn out_of_range_index_is_ingestion_error() {
        let events = vec![ev(0, 0, &[5])];
        assert!(matches!(
            build_sliding_windows(&events, 1, 1, 3),
            Err(TergmError::Ingestion(_))
        ));
    }

    #[test]
    fn edge_list_self_loop_reports_line() {
        let text = "t,src,dst\n1,0,1\n1,2,2\n";
        match parse_edge_list(text, None) {
            Err(TergmError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn edge_list_builds_series() {
        let text = "t,src,dst\n1,0,1\n2,1,0\n2,2,0\n";
        let s = parse_edge_list(text, None).unwrap();
        assert_eq!((s.len(), s.n()), (2, 3));
        assert_eq!(s.networks()[1].edge_count(), 2);
        let again = parse_edge_list(&series_to_edge_list(&s), Some(3)).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn dense_json_two_networks() {
        let text = r#"{"n":3,"networks":[[[0,1,0],[0,0,1],[0,0,0]],[[0,0,0],[1,0,0],[0,0,0]]]}"#;
        let s = parse_dense_json(text).unwrap();
        assert_eq!((s.len(), s.n()), (2, 3));
    }

    #[test]
    fn dense_json_rejects_wrong_n() {
        let text = r#"{"n":2,"networks":[[[0,1,0],[0,0,1],[0,0,0]]]}"#;
        assert!(parse_dense_json(text).is_err());
    }

    #[test]
    fn dense_json_with_labels_round_trips() {
        let attrs = NodeAttributes::new(
            vec!["D".into(), "R".into()],
            vec![Some(0), Some(1), None],
            vec![true, true, false],
        )
        .unwrap();
        let s = NetworkSeries::new(vec![Network::from_edges(3, &[(0, 2)]).unwrap()])
            .unwrap()
            .with_attributes(attrs)
            .unwrap();
        let text = series_to_dense_json(&s).unwrap();
        assert_eq!(parse_dense_json(&text).unwrap(), s);
    }

    #[test]
    fn event_log_groups_rows_by_proposal() {
        let text = "proposal_id,sponsor,cosponsor\np1,0,1\np1,0,2\np2,1,\np3,2,0\n";
        let log = parse_event_log(text).unwrap();
        assert_eq!(log.events.len(), 3);
        assert_eq!(log.events[0].cosponsors, vec![1, 2]);
        assert!(log.events[1].cosponsors.is_empty());
        assert_eq!(log.node_count, 3);
        let opts = LoadOptions {
            n: None,
            window: 2,
            step: 1,
        };
        let s = parse_series(text, SeriesFormat::EventLog, &opts).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.networks()[0].has_edge(1, 0) && s.networks()[0].has_edge(2, 0));
        assert!(s.networks()[1].has_edge(0, 2) && !s.networks()[1].has_edge(1, 0));
    }

    #[test]
    fn event_log_with_names_keeps_mapping() {
        let text = "proposal_id,sponsor,cosponsor\na,Kerry,Kennedy\nb,Frist,Kerry\n";
        let opts = LoadOptions {
            n: None,
            window: 1,
            step: 1,
        };
        let s = parse_series(text, SeriesFormat::EventLog, &opts).unwrap();
        assert_eq!(s.node_names().unwrap(), &["Kerry", "Kennedy", "Frist"]);
        assert!(s.networks()[1].has_edge(0, 2));
    }

    #[test]
    fn event_log_rejects_two_sponsors() {
        let text = "proposal_id,sponsor,cosponsor\np1,0,1\np1,2,1\n";
        assert!(matches!(
            parse_event_log(text),
            Err(TergmError::Parse { line: 3, .. })
        ));
    }
}
