//! Graph files, metadata blocks and CSV helpers.
//!
//! Graphs are stored as JSON `{"metadata": {...}, "chart": {...}, "c": .., "u": [..]}`
//! with every height written to 17 significant digits, so a write/read
//! round trip reproduces `u` bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::geometry::SpacelikeGraph;
use crate::grid::Grid;
use crate::manifold::BaseChart;

/// Provenance stamped into every output file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_sign: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_sign: Option<i8>,
    /// Coordinate step per grid axis.
    #[serde(default)]
    pub grid_spacing: Vec<f64>,
}

impl Metadata {
    /// `# key=value` lines for CSV outputs.
    pub fn write_csv_header<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# command={}", self.command)?;
        writeln!(out, "# config_hash={}", self.config_hash)?;
        if let Some(seed) = self.seed {
            writeln!(out, "# seed={seed}")?;
        }
        if let Some(s) = self.drift_sign {
            writeln!(out, "# drift_sign={s}")?;
        }
        if let Some(s) = self.weight_sign {
            writeln!(out, "# weight_sign={s}")?;
        }
        let spacing: Vec<String> = self.grid_spacing.iter().map(|h| format!("{h:.16e}")).collect();
        writeln!(out, "# grid_spacing={}", spacing.join(";"))
    }
}

pub fn grid_spacing(grid: &Grid) -> Vec<f64> {
    grid.axes().iter().map(|a| a.step).collect()
}

#[derive(Serialize)]
struct GraphFileOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<&'a Metadata>,
    chart: &'a BaseChart,
    c: f64,
    u: Box<RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFileIn {
    #[serde(default)]
    metadata: Option<Metadata>,
    chart: BaseChart,
    c: f64,
    u: Vec<f64>,
}

fn heights_json(u: &[f64]) -> Result<Box<RawValue>> {
    let body: Vec<String> = u.iter().map(|v| format!("{v:.16e}")).collect();
    Ok(RawValue::from_string(format!("[{}]", body.join(",")))?)
}

pub fn graph_to_json(graph: &SpacelikeGraph, metadata: Option<&Metadata>) -> Result<String> {
    let out = GraphFileOut { metadata, chart: &graph.chart, c: graph.c, u: heights_json(&graph.u)? };
    Ok(serde_json::to_string(&out)?)
}

pub fn graph_from_json(text: &str) -> Result<(SpacelikeGraph, Option<Metadata>)> {
    let raw: GraphFileIn = serde_json::from_str(text)?;
    Ok((SpacelikeGraph::new(raw.chart, raw.c, raw.u)?, raw.metadata))
}

pub fn write_graph(path: &Path, graph: &SpacelikeGraph, metadata: Option<&Metadata>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(graph_to_json(graph, metadata)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<(SpacelikeGraph, Option<Metadata>)> {
    let raw: GraphFileIn = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    Ok((SpacelikeGraph::new(raw.chart, raw.c, raw.u)?, raw.metadata))
}

/// One row per node: indices, coordinates and the field value.
pub fn write_field_csv<W: Write>(grid: &Grid, name: &str, values: &[f64], mut out: W) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Config(format!(
            "field {name} has {} values for {} nodes",
            values.len(),
            grid.len()
        )));
    }
    writeln!(out, "i,j,x,y,{name}")?;
    for (k, v) in values.iter().enumerate() {
        let (i, j) = grid.unravel(k);
        let x = grid.coords(k);
        writeln!(out, "{i},{j},{:.16e},{:.16e},{v:.16e}", x[0], x[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::WarpedProfile;
    use proptest::prelude::*;

    fn meta() -> Metadata {
        Metadata {
            command: "verify".into(),
            config_hash: "abc".into(),
            seed: Some(7),
            drift_sign: Some(-1),
            weight_sign: Some(-1),
            grid_spacing: vec![0.5, 0.25],
        }
    }

    #[test]
    fn awkward_values_round_trip() {
        let chart = BaseChart::flat_patch((0.0, 1.0), (0.0, 1.0), 4, 4);
        let mut u = vec![0.1 + 0.2, 1.0 / 3.0, f64::MIN_POSITIVE, -0.0, 5e-324, 1e300, -2.5];
        u.resize(16, std::f64::consts::PI);
        let g = SpacelikeGraph::new(chart, 0.3, u).unwrap();
        let text = graph_to_json(&g, Some(&meta())).unwrap();
        let (back, m) = graph_from_json(&text).unwrap();
        assert_eq!(m, Some(meta()));
        assert_eq!(back.chart, g.chart);
        for (a, b) in back.u.iter().zip(&g.u) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn schema_violations_are_errors() {
        assert!(graph_from_json(r#"{"chart": 3, "c": 0, "u": []}"#).is_err());
        let chart = serde_json::to_string(&BaseChart::flat_torus(1.0, 1.0, 4, 4)).unwrap();
        let short = format!(r#"{{"chart": {chart}, "c": 0, "u": [1, 2]}}"#);
        assert!(matches!(graph_from_json(&short), Err(Error::Config(_))));
        let extra = format!(r#"{{"chart": {chart}, "c": 0, "u": [], "v": 1}}"#);
        assert!(graph_from_json(&extra).is_err());
    }

    #[test]
    fn steep_graph_loads() {
        let chart = BaseChart::flat_patch((0.0, 1.0), (0.0, 1.0), 5, 5);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 2.0 * x[0]).unwrap();
        let (back, _) = graph_from_json(&graph_to_json(&g, None).unwrap()).unwrap();
        assert!(!crate::geometry::covariant_gradient(&back).unwrap().spacelike);
    }

    #[test]
    fn csv_metadata_lines() {
        let mut buf = Vec::new();
        meta().write_csv_header(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.starts_with("# ")));
        assert!(text.contains("# drift_sign=-1"));
    }

    #[test]
    fn field_csv_rows() {
        let chart = BaseChart::warped(WarpedProfile::euclidean(), 2, (0.5, 1.0), 4, 3);
        let grid = chart.grid().unwrap();
        let mut buf = Vec::new();
        write_field_csv(&grid, "theta", &vec![-1.0; 12], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("i,j,x,y,theta\n0,0,"));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(u in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 9), c in -5.0f64..5.0) {
            let g = SpacelikeGraph::new(BaseChart::flat_torus(1.0, 2.0, 3, 3), c, u).unwrap();
            let (back, _) = graph_from_json(&graph_to_json(&g, None).unwrap()).unwrap();
            prop_assert_eq!(back.c.to_bits(), g.c.to_bits());
            for (a, b) in back.u.iter().zip(&g.u) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
