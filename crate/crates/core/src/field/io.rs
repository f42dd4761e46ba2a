//! Operator and gauge files.
//!
//! A matrix field is a list of rows, each entry a list of terms
//! `{"exp": [k₁,…,kₙ], "c": coefficient}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::operator::{Chart, GaugeTransform, OperatorSpec};
use crate::field::poly::{PolyMatrixField, PolyScalarField};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermFile {
    pub exp: Vec<u32>,
    pub c: f64,
}

pub type MatrixFieldFile = Vec<Vec<Vec<TermFile>>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartFile {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorFile {
    pub n: usize,
    pub m: usize,
    pub chart: ChartFile,
    #[serde(rename = "A")]
    pub a: Vec<MatrixFieldFile>,
    #[serde(rename = "B")]
    pub b: MatrixFieldFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaugeFile {
    #[serde(rename = "P")]
    pub p: MatrixFieldFile,
    #[serde(rename = "P_inv")]
    pub p_inv: MatrixFieldFile,
}

fn field_from_file(f: &MatrixFieldFile, n: usize, m: usize, what: &str) -> Result<PolyMatrixField> {
    if f.len() != m || f.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidSpec(format!("{what} must be a {m}x{m} matrix")));
    }
    let mut entries = Vec::with_capacity(m * m);
    for row in f {
        for terms in row {
            for t in terms {
                if t.exp.len() != n {
                    return Err(Error::InvalidSpec(format!(
                        "{what}: exponent {:?} has length {}, expected {n}",
                        t.exp,
                        t.exp.len()
                    )));
                }
                if !t.c.is_finite() {
                    return Err(Error::InvalidSpec(format!("{what}: non-finite coefficient")));
                }
            }
            entries.push(PolyScalarField::from_terms(
                n,
                terms.iter().map(|t| (t.exp.clone(), t.c)),
            ));
        }
    }
    Ok(PolyMatrixField::from_entries(m, entries))
}

fn field_to_file(f: &PolyMatrixField) -> MatrixFieldFile {
    let m = f.m();
    (0..m)
        .map(|r| {
            (0..m)
                .map(|c| {
                    f.entry(r, c)
                        .terms()
                        .map(|(e, coeff)| TermFile {
                            exp: e.0.clone(),
                            c: coeff,
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

impl OperatorFile {
    pub fn into_spec(self) -> Result<OperatorSpec> {
        let (n, m) = (self.n, self.m);
        if self.a.len() != n {
            return Err(Error::InvalidSpec(format!(
                "expected {n} first-order coefficients, got {}",
                self.a.len()
            )));
        }
        let a = self
            .a
            .iter()
            .enumerate()
            .map(|(i, f)| field_from_file(f, n, m, &format!("A[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let b = field_from_file(&self.b, n, m, "B")?;
        OperatorSpec::new(a, b, Chart::new(self.chart.lo, self.chart.hi)?)
    }

    pub fn from_spec(op: &OperatorSpec) -> Self {
        Self {
            n: op.n,
            m: op.m,
            chart: ChartFile {
                lo: op.chart.lo.clone(),
                hi: op.chart.hi.clone(),
            },
            a: op.a.iter().map(field_to_file).collect(),
            b: field_to_file(&op.b),
        }
    }
}

pub fn parse_operator(text: &str) -> Result<OperatorSpec> {
    let file: OperatorFile = serde_json::from_str(text)?;
    file.into_spec()
}

pub fn operator_to_json(op: &OperatorSpec) -> Result<String> {
    crate::json::to_string(&OperatorFile::from_spec(op))
}

/// The gauge's matrix size and variable count come from the operator it
/// will act on.
pub fn parse_gauge(text: &str, n: usize, m: usize) -> Result<GaugeTransform> {
    let file: GaugeFile = serde_json::from_str(text)?;
    GaugeTransform::new(
        field_from_file(&file.p, n, m, "P")?,
        field_from_file(&file.p_inv, n, m, "P_inv")?,
    )
}

pub fn gauge_to_json(g: &GaugeTransform) -> Result<String> {
    crate::json::to_string(&GaugeFile {
        p: field_to_file(&g.p),
        p_inv: field_to_file(&g.p_inv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
      "n": 2, "m": 2,
      "chart": {"lo": [-1, -1], "hi": [1, 1]},
      "A": [
        [[[{"exp": [0, 0], "c": 1}], []], [[], []]],
        [[[], [{"exp": [0, 0], "c": 1}]], [[{"exp": [0, 0], "c": 1}], []]]
      ],
      "B": [[[{"exp": [1, 0], "c": 1}], []], [[], [{"exp": [0, 1], "c": 0.1}]]]
    }"#;

    #[test]
    fn parses_example() {
        let op = parse_operator(EXAMPLE).unwrap();
        assert_eq!((op.n, op.m), (2, 2));
        let b = op.subsymbol_flat(&[0.5, 2.0]).unwrap();
        assert_eq!(b[(0, 0)], 0.5);
        assert_eq!(b[(1, 1)], 0.2);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut op = parse_operator(EXAMPLE).unwrap();
        op.b = op.b.scale(1.0 / 3.0);
        let text = operator_to_json(&op).unwrap();
        let back = parse_operator(&text).unwrap();
        assert_eq!(back, op);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = EXAMPLE.replace("\"n\": 2", "\"n\": 3");
        assert!(matches!(parse_operator(&bad), Err(Error::InvalidSpec(_))));
        let bad = EXAMPLE.replace("\"exp\": [1, 0]", "\"exp\": [1]");
        assert!(matches!(parse_operator(&bad), Err(Error::InvalidSpec(_))));
        assert!(matches!(parse_operator("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn gauge_files() {
        let ok = r#"{"P": [[[{"exp":[0,0],"c":1}], [{"exp":[1,0],"c":1}]], [[], [{"exp":[0,0],"c":1}]]],
                    "P_inv": [[[{"exp":[0,0],"c":1}], [{"exp":[1,0],"c":-1}]], [[], [{"exp":[0,0],"c":1}]]]}"#;
        let g = parse_gauge(ok, 2, 2).unwrap();
        assert_eq!(parse_gauge(&gauge_to_json(&g).unwrap(), 2, 2).unwrap(), g);
        let bad = ok.replace("\"c\":-1", "\"c\":1");
        assert!(matches!(parse_gauge(&bad, 2, 2), Err(Error::InvalidGauge { .. })));
    }
}
