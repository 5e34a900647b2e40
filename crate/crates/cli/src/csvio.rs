//! CSV reading and writing for the command surfaces.
//!
//! Flows are reported per pipe along its declared direction, which is the
//! even-indexed member of each directed edge pair.

use std::collections::HashMap;
use std::path::Path;

use hydronet_core::WaterNetwork;
use hydronet_model::EpochRecord;

use crate::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes to the path, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn rows(path: &Path, text: &str, header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == header => {}
        _ => {
            return Err(CliError::Data(format!(
                "{}: expected header `{header}`",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    let columns = header.split(',').count();
    for (number, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != columns {
            return Err(CliError::Data(format!(
                "{}:{}: expected {columns} fields, got {}",
                path.display(),
                number + 1,
                fields.len()
            )));
        }
        out.push(fields);
    }
    Ok(out)
}

fn number(path: &Path, id: &str, raw: &str) -> Result<f64, CliError> {
    raw.parse()
        .map_err(|_| CliError::Data(format!("{}: `{id}`: bad number `{raw}`", path.display())))
}

/// Reads `node_id,demand` and returns one demand per node. Every consumer
/// must appear; reservoir rows are optional and ignored.
pub fn read_demands(path: &Path, net: &WaterNetwork) -> Result<Vec<f64>, CliError> {
    let text = read_text(path)?;
    let mut by_id: HashMap<String, f64> = HashMap::new();
    for fields in rows(path, &text, "node_id,demand")? {
        let value = number(path, &fields[0], &fields[1])?;
        if by_id.insert(fields[0].clone(), value).is_some() {
            return Err(CliError::Data(format!(
                "{}: node `{}` appears twice",
                path.display(),
                fields[0]
            )));
        }
    }
    let mut demands = vec![0.0; net.n_nodes()];
    for v in 0..net.n_nodes() {
        let id = &net.node(v).id;
        match by_id.remove(id) {
            Some(d) if !net.is_reservoir(v) => demands[v] = d,
            Some(_) => {}
            None if net.is_reservoir(v) => {}
            None => {
                return Err(CliError::Data(format!(
                    "{}: no demand for node `{id}`",
                    path.display()
                )))
            }
        }
    }
    if let Some(unknown) = by_id.keys().next() {
        return Err(CliError::Data(format!(
            "{}: unknown node `{unknown}`",
            path.display()
        )));
    }
    Ok(demands)
}

/// Reads `edge_id,from,to,flow` with one signed flow per pipe (along its declared
/// direction) and expands to the directed edge pairs.
pub fn read_flows(path: &Path, net: &WaterNetwork) -> Result<Vec<f64>, CliError> {
    let text = read_text(path)?;
    let mut by_id: HashMap<String, f64> = HashMap::new();
    for fields in rows(path, &text, "edge_id,from,to,flow")? {
        let value = number(path, &fields[0], &fields[3])?;
        if by_id.insert(fields[0].clone(), value).is_some() {
            return Err(CliError::Data(format!(
                "{}: pipe `{}` appears twice",
                path.display(),
                fields[0]
            )));
        }
    }
    let mut flows = vec![0.0; net.n_edges()];
    for (p, pipe) in net.pipes().iter().enumerate() {
        let q = by_id.remove(&pipe.id).ok_or_else(|| {
            CliError::Data(format!("{}: no flow for pipe `{}`", path.display(), pipe.id))
        })?;
        flows[2 * p] = q;
        flows[2 * p + 1] = -q;
    }
    if let Some(unknown) = by_id.keys().next() {
        return Err(CliError::Data(format!(
            "{}: unknown pipe `{unknown}`",
            path.display()
        )));
    }
    Ok(flows)
}

pub fn node_csv(net: &WaterNetwork, heads: &[f64], demands: &[f64]) -> String {
    let mut out = String::from("node_id,head_m,demand\n");
    for v in 0..net.n_nodes() {
        out.push_str(&format!("{},{},{}\n", net.node(v).id, heads[v], demands[v]));
    }
    out
}

pub fn pipe_csv(net: &WaterNetwork, edge_flows: &[f64]) -> String {
    let mut out = String::from("edge_id,from,to,flow\n");
    for (p, pipe) in net.pipes().iter().enumerate() {
        let edge = &net.edges()[2 * p];
        out.push_str(&format!(
            "{},{},{},{}\n",
            pipe.id,
            net.node(edge.from).id,
            net.node(edge.to).id,
            edge_flows[2 * p]
        ));
    }
    out
}

pub fn loss_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,lr,K\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.lr, r.k));
    }
    out
}

pub fn bench_csv(rows: &[hydronet_model::BenchRow]) -> String {
    let mut out = String::from("samples,oracle_s,emulator_s\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.samples, r.oracle_s, r.emulator_s));
    }
    out
}
