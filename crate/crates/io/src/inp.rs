//! EPANET INP subset: parsing, interpretation, rendering.
//!
//! The tokenizer keeps one record per non-blank line with the line number and
//! the 1-based column of every token, so interpretation errors can point at
//! the offending field. Sections the toolkit does not interpret are carried
//! verbatim through parse and render; interpreted sections are stored as
//! token lists, which makes render ∘ parse the identity up to whitespace
//! normalization (and exactly the identity on canonically formatted files).
//!
//! All quantities are converted on load: lengths and heads to meters, pipe
//! diameters to meters, demands to cubic meters per hour. The flow-unit code
//! in [OPTIONS] selects the conversion table; Hazen-Williams is the only
//! supported head-loss formula.

use std::collections::BTreeMap;

use thiserror::Error;

use hydronet_core::{NetworkBuilder, NetworkError, WaterNetwork};

use crate::scenario::DemandBasis;

const SUPPORTED_SECTIONS: [&str; 8] = [
    "TITLE",
    "JUNCTIONS",
    "RESERVOIRS",
    "PIPES",
    "DEMANDS",
    "PATTERNS",
    "COORDINATES",
    "OPTIONS",
];

#[derive(Debug, Error)]
pub enum InpError {
    #[error("line {line}: content appears before any section header")]
    StrayContent { line: usize },

    #[error("missing mandatory section [{0}]")]
    MissingSection(&'static str),

    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { id: String, line: usize },

    #[error("line {line}: pipe endpoint `{id}` is not a declared node")]
    UnknownNode { id: String, line: usize },

    #[error("line {line}: `{id}` in [DEMANDS] is not a declared junction")]
    UnknownJunction { id: String, line: usize },

    #[error("line {line}, column {col}: expected a number for {field}, got `{token}`")]
    BadNumber {
        field: &'static str,
        token: String,
        line: usize,
        col: usize,
    },

    #[error("line {line}: [{section}] record needs {expected} fields, got {got}")]
    ShortRecord {
        section: &'static str,
        expected: usize,
        got: usize,
        line: usize,
    },

    #[error("line {line}: unsupported flow units `{token}`")]
    BadUnits { token: String, line: usize },

    #[error("line {line}: only Hazen-Williams head loss is supported, got `{token}`")]
    BadHeadloss { token: String, line: usize },

    #[error("line {line}: demand pattern `{id}` is not defined")]
    UnknownPattern { id: String, line: usize },

    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// One whitespace-delimited field with its position in the source text.
#[derive(Debug, Clone)]
pub struct InpToken {
    pub text: String,
    /// 1-based column of the token's first character.
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct InpRecord {
    pub tokens: Vec<InpToken>,
    /// 1-based source line.
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct InpSection {
    /// Canonical upper-case name without brackets.
    pub name: String,
    /// Whether the toolkit interprets this section.
    pub known: bool,
    /// Tokenized records (known sections only).
    pub records: Vec<InpRecord>,
    /// Verbatim lines (unknown sections only).
    pub raw: Vec<String>,
}

/// Structured INP file: sections in source order.
#[derive(Debug, Clone)]
pub struct InpDocument {
    pub sections: Vec<InpSection>,
}

// Equality is structural: section names and token texts, not source
// positions, so a document survives a parse/render round trip unchanged.
impl PartialEq for InpDocument {
    fn eq(&self, other: &Self) -> bool {
        self.sections.len() == other.sections.len()
            && self
                .sections
                .iter()
                .zip(&other.sections)
                .all(|(a, b)| section_eq(a, b))
    }
}

fn section_eq(a: &InpSection, b: &InpSection) -> bool {
    a.name == b.name
        && a.known == b.known
        && a.raw == b.raw
        && a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(ra, rb)| {
            ra.tokens.len() == rb.tokens.len()
                && ra
                    .tokens
                    .iter()
                    .zip(&rb.tokens)
                    .all(|(ta, tb)| ta.text == tb.text)
        })
}

/// Flow-unit code from [OPTIONS]; fixes the whole unit system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowUnits {
    /// Cubic meters per hour (the internal system; default).
    Cmh,
    /// Cubic meters per day.
    Cmd,
    /// Liters per second.
    Lps,
    /// Liters per minute.
    Lpm,
    /// Megaliters per day.
    Mld,
    /// US gallons per minute (US customary lengths).
    Gpm,
    /// Cubic feet per second (US customary lengths).
    Cfs,
}

impl FlowUnits {
    fn from_code(code: &str) -> Option<FlowUnits> {
        match code.to_ascii_uppercase().as_str() {
            "CMH" => Some(FlowUnits::Cmh),
            "CMD" => Some(FlowUnits::Cmd),
            "LPS" => Some(FlowUnits::Lps),
            "LPM" => Some(FlowUnits::Lpm),
            "MLD" => Some(FlowUnits::Mld),
            "GPM" => Some(FlowUnits::Gpm),
            "CFS" => Some(FlowUnits::Cfs),
            _ => None,
        }
    }

    /// Demand/flow value → m³/h.
    pub fn flow_factor(self) -> f64 {
        match self {
            FlowUnits::Cmh => 1.0,
            FlowUnits::Cmd => 1.0 / 24.0,
            FlowUnits::Lps => 3.6,
            FlowUnits::Lpm => 0.06,
            FlowUnits::Mld => 1000.0 / 24.0,
            FlowUnits::Gpm => 0.227_124_707_04,
            FlowUnits::Cfs => 101.940_647_731_2,
        }
    }

    /// Pipe length / elevation / head value → m.
    pub fn length_factor(self) -> f64 {
        if self.is_us_customary() {
            0.3048
        } else {
            1.0
        }
    }

    /// Pipe diameter value → m (millimeters in SI files, inches in US files).
    pub fn diameter_factor(self) -> f64 {
        if self.is_us_customary() {
            0.0254
        } else {
            0.001
        }
    }

    fn is_us_customary(self) -> bool {
        matches!(self, FlowUnits::Gpm | FlowUnits::Cfs)
    }
}

/// Everything extracted from one INP file.
#[derive(Debug, Clone)]
pub struct ParsedInp {
    pub document: InpDocument,
    pub network: WaterNetwork,
    /// Base demand per node index, m³/h; zero at reservoirs.
    pub base_demands: Vec<f64>,
    /// Demand pattern id per node index, when one was referenced.
    pub node_patterns: Vec<Option<String>>,
    /// Pattern id → multiplier sequence.
    pub patterns: BTreeMap<String, Vec<f64>>,
    /// Node id → (x, y), carried through untouched.
    pub coordinates: BTreeMap<String, (f64, f64)>,
    pub flow_units: FlowUnits,
    pub warnings: Vec<String>,
}

impl ParsedInp {
    /// Demand profile implied by the file's [PATTERNS] references, if any.
    /// Returns `None` when no junction references a non-empty pattern, in
    /// which case callers fall back to synthetic demand sampling.
    pub fn demand_basis(&self) -> Option<DemandBasis> {
        let any = (0..self.network.n_nodes()).any(|v| {
            self.node_patterns[v]
                .as_ref()
                .and_then(|id| self.patterns.get(id))
                .map(|m| !m.is_empty())
                .unwrap_or(false)
        });
        if !any {
            return None;
        }
        let per_node = (0..self.network.n_nodes())
            .map(|v| {
                let multipliers = self.node_patterns[v]
                    .as_ref()
                    .and_then(|id| self.patterns.get(id))
                    .cloned()
                    .unwrap_or_default();
                (self.base_demands[v], multipliers)
            })
            .collect();
        Some(DemandBasis { per_node })
    }
}

/// Parse INP text into a structured document plus the interpreted network.
pub fn parse_inp(text: &str) -> Result<ParsedInp, InpError> {
    let document = tokenize(text)?;
    interpret(document)
}

fn tokenize(text: &str) -> Result<InpDocument, InpError> {
    let mut sections: Vec<InpSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let effective = match raw_line.find(';') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let trimmed = effective.trim();

        if trimmed.starts_with('[') {
            let name = trimmed
                .trim_start_matches('[')
                .split(']')
                .next()
                .unwrap_or("")
                .trim()
                .to_ascii_uppercase();
            let known = SUPPORTED_SECTIONS.contains(&name.as_str());
            sections.push(InpSection {
                name,
                known,
                records: Vec::new(),
                raw: Vec::new(),
            });
            continue;
        }

        let Some(section) = sections.last_mut() else {
            if trimmed.is_empty() {
                continue;
            }
            return Err(InpError::StrayContent { line: line_no });
        };

        if !section.known {
            section.raw.push(raw_line.to_string());
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }

        let mut tokens = Vec::new();
        let mut start: Option<usize> = None;
        for (i, ch) in effective.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push(InpToken {
                        text: effective[s..i].to_string(),
                        col: s + 1,
                    });
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            tokens.push(InpToken {
                text: effective[s..].to_string(),
                col: s + 1,
            });
        }
        section.records.push(InpRecord {
            tokens,
            line: line_no,
        });
    }
    Ok(InpDocument { sections })
}

/// Render a document back to INP text. Interpreted sections come out with
/// single-space token separators and a blank line before the next section;
/// uninterpreted sections are reproduced verbatim, blank lines included, so
/// rendering adds nothing of its own after them.
pub fn render_inp(doc: &InpDocument) -> String {
    let mut out = String::new();
    for (i, section) in doc.sections.iter().enumerate() {
        out.push_str(&format!("[{}]\n", section.name));
        if section.known {
            for record in &section.records {
                let line: Vec<&str> = record.tokens.iter().map(|t| t.text.as_str()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            if i + 1 < doc.sections.len() {
                out.push('\n');
            }
        } else {
            for raw in &section.raw {
                out.push_str(raw);
                out.push('\n');
            }
        }
    }
    out
}

struct RecordView<'a> {
    section: &'static str,
    record: &'a InpRecord,
}

impl<'a> RecordView<'a> {
    fn need(&self, n: usize) -> Result<(), InpError> {
        if self.record.tokens.len() < n {
            return Err(InpError::ShortRecord {
                section: self.section,
                expected: n,
                got: self.record.tokens.len(),
                line: self.record.line,
            });
        }
        Ok(())
    }

    fn text(&self, i: usize) -> &str {
        &self.record.tokens[i].text
    }

    fn number(&self, i: usize, field: &'static str) -> Result<f64, InpError> {
        let tok = &self.record.tokens[i];
        tok.text.parse::<f64>().map_err(|_| InpError::BadNumber {
            field,
            token: tok.text.clone(),
            line: self.record.line,
            col: tok.col,
        })
    }

    fn opt_number(&self, i: usize, field: &'static str) -> Result<Option<f64>, InpError> {
        if i < self.record.tokens.len() {
            Ok(Some(self.number(i, field)?))
        } else {
            Ok(None)
        }
    }
}

fn records<'a>(
    doc: &'a InpDocument,
    name: &'static str,
) -> impl Iterator<Item = RecordView<'a>> + 'a {
    doc.sections
        .iter()
        .filter(move |s| s.name == name)
        .flat_map(move |s| {
            s.records.iter().map(move |record| RecordView {
                section: name,
                record,
            })
        })
}

fn interpret(document: InpDocument) -> Result<ParsedInp, InpError> {
    let mut warnings: Vec<String> = Vec::new();
    for section in &document.sections {
        if !section.known {
            warnings.push(format!(
                "section [{}] is preserved but not interpreted",
                section.name
            ));
        }
    }
    for name in ["JUNCTIONS", "PIPES"] {
        if !document.sections.iter().any(|s| s.name == name) {
            return Err(InpError::MissingSection(if name == "JUNCTIONS" {
                "JUNCTIONS"
            } else {
                "PIPES"
            }));
        }
    }

    let mut units = FlowUnits::Cmh;
    for view in records(&document, "OPTIONS") {
        if view.record.tokens.is_empty() {
            continue;
        }
        let key = view.text(0).to_ascii_uppercase();
        match key.as_str() {
            "UNITS" => {
                view.need(2)?;
                units = FlowUnits::from_code(view.text(1)).ok_or_else(|| InpError::BadUnits {
                    token: view.text(1).to_string(),
                    line: view.record.line,
                })?;
            }
            "HEADLOSS" => {
                view.need(2)?;
                let code = view.text(1).to_ascii_uppercase();
                if code != "H-W" && code != "HW" {
                    return Err(InpError::BadHeadloss {
                        token: view.text(1).to_string(),
                        line: view.record.line,
                    });
                }
            }
            _ => {}
        }
    }

    // Patterns first so demand records can be validated against them.
    // Repeated pattern ids extend the same multiplier sequence, matching the
    // EPANET convention of continuation lines.
    let mut patterns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for view in records(&document, "PATTERNS") {
        view.need(1)?;
        let id = view.text(0).to_string();
        let entry = patterns.entry(id).or_default();
        for i in 1..view.record.tokens.len() {
            entry.push(view.number(i, "pattern multiplier")?);
        }
    }

    // Node declarations, with duplicate detection keyed on the id across
    // junctions and reservoirs together.
    struct NodeDecl {
        id: String,
        head_or_elev: f64,
        reservoir: bool,
        base_demand: f64,
        pattern: Option<String>,
        line: usize,
    }
    let mut decls: Vec<NodeDecl> = Vec::new();
    let mut seen_nodes: BTreeMap<String, usize> = BTreeMap::new();

    for view in records(&document, "JUNCTIONS") {
        view.need(2)?;
        let id = view.text(0).to_string();
        if seen_nodes.insert(id.clone(), view.record.line).is_some() {
            return Err(InpError::DuplicateId {
                id,
                line: view.record.line,
            });
        }
        let elevation = view.number(1, "junction elevation")? * units.length_factor();
        let base_demand = view
            .opt_number(2, "junction base demand")?
            .map(|d| d * units.flow_factor())
            .unwrap_or(0.0);
        let pattern = if view.record.tokens.len() > 3 {
            Some(view.text(3).to_string())
        } else {
            None
        };
        if let Some(p) = &pattern {
            if !patterns.contains_key(p) {
                return Err(InpError::UnknownPattern {
                    id: p.clone(),
                    line: view.record.line,
                });
            }
        }
        decls.push(NodeDecl {
            id,
            head_or_elev: elevation,
            reservoir: false,
            base_demand,
            pattern,
            line: view.record.line,
        });
    }

    for view in records(&document, "RESERVOIRS") {
        view.need(2)?;
        let id = view.text(0).to_string();
        if seen_nodes.insert(id.clone(), view.record.line).is_some() {
            return Err(InpError::DuplicateId {
                id,
                line: view.record.line,
            });
        }
        let head = view.number(1, "reservoir head")? * units.length_factor();
        if view.record.tokens.len() > 2 {
            warnings.push(format!(
                "line {}: reservoir `{}` head pattern ignored (fixed-head model)",
                view.record.line, id
            ));
        }
        decls.push(NodeDecl {
            id,
            head_or_elev: head,
            reservoir: true,
            base_demand: 0.0,
            pattern: None,
            line: view.record.line,
        });
    }

    // Pipes, pre-validated here so diagnostics carry line numbers that the
    // network builder does not know about.
    struct PipeDecl {
        id: String,
        from: String,
        to: String,
        length: f64,
        diameter: f64,
        roughness: f64,
    }
    let mut pipe_decls: Vec<PipeDecl> = Vec::new();
    let mut seen_pipes: BTreeMap<String, usize> = BTreeMap::new();
    for view in records(&document, "PIPES") {
        view.need(6)?;
        let id = view.text(0).to_string();
        if seen_pipes.insert(id.clone(), view.record.line).is_some() {
            return Err(InpError::DuplicateId {
                id,
                line: view.record.line,
            });
        }
        for endpoint in [view.text(1), view.text(2)] {
            if !seen_nodes.contains_key(endpoint) {
                return Err(InpError::UnknownNode {
                    id: endpoint.to_string(),
                    line: view.record.line,
                });
            }
        }
        if view.record.tokens.len() > 7 {
            let status = view.text(7).to_ascii_uppercase();
            if status != "OPEN" {
                warnings.push(format!(
                    "line {}: pipe `{}` status `{}` treated as open",
                    view.record.line,
                    id,
                    view.text(7)
                ));
            }
        }
        pipe_decls.push(PipeDecl {
            id,
            from: view.text(1).to_string(),
            to: view.text(2).to_string(),
            length: view.number(3, "pipe length")? * units.length_factor(),
            diameter: view.number(4, "pipe diameter")? * units.diameter_factor(),
            roughness: view.number(5, "pipe roughness")?,
        });
    }

    // Extra demand categories add onto the junction base demand; a pattern
    // on the record replaces the junction's pattern reference.
    struct ExtraDemand {
        node: String,
        demand: f64,
        pattern: Option<String>,
    }
    let mut extra: Vec<ExtraDemand> = Vec::new();
    for view in records(&document, "DEMANDS") {
        view.need(2)?;
        let node = view.text(0).to_string();
        match seen_nodes.get(&node) {
            None => {
                return Err(InpError::UnknownJunction {
                    id: node,
                    line: view.record.line,
                })
            }
            Some(_) => {
                if decls.iter().any(|d| d.id == node && d.reservoir) {
                    return Err(InpError::UnknownJunction {
                        id: node,
                        line: view.record.line,
                    });
                }
            }
        }
        let demand = view.number(1, "demand")? * units.flow_factor();
        let pattern = if view.record.tokens.len() > 2 {
            let p = view.text(2).to_string();
            if !patterns.contains_key(&p) {
                return Err(InpError::UnknownPattern {
                    id: p,
                    line: view.record.line,
                });
            }
            Some(p)
        } else {
            None
        };
        extra.push(ExtraDemand {
            node,
            demand,
            pattern,
        });
    }

    let mut coordinates: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for view in records(&document, "COORDINATES") {
        view.need(3)?;
        let x = view.number(1, "x coordinate")?;
        let y = view.number(2, "y coordinate")?;
        coordinates.insert(view.text(0).to_string(), (x, y));
    }

    let mut builder = NetworkBuilder::new();
    for d in &decls {
        builder = if d.reservoir {
            builder.reservoir(&d.id, d.head_or_elev)
        } else {
            builder.node(&d.id, d.head_or_elev)
        };
        let _ = d.line;
    }
    for p in &pipe_decls {
        builder = builder.pipe(&p.id, &p.from, &p.to, p.length, p.diameter, p.roughness)?;
    }
    let network = builder.build()?;
    warnings.extend(network.warnings().iter().cloned());

    let mut base_demands = vec![0.0; network.n_nodes()];
    let mut node_patterns: Vec<Option<String>> = vec![None; network.n_nodes()];
    for d in &decls {
        if !d.reservoir {
            let v = network.node_index(&d.id).expect("declared node");
            base_demands[v] = d.base_demand;
            node_patterns[v] = d.pattern.clone();
        }
    }
    for e in &extra {
        let v = network.node_index(&e.node).expect("validated node");
        base_demands[v] += e.demand;
        if e.pattern.is_some() {
            node_patterns[v] = e.pattern.clone();
        }
    }

    Ok(ParsedInp {
        document,
        network,
        base_demands,
        node_patterns,
        patterns,
        coordinates,
        flow_units: units,
        warnings,
    })
}
