//! CPLEX LP text output.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{MilpModel, Sense, VarId, VarKind};

/// Lines are wrapped well below the 255-character limit some readers impose.
const WRAP_AT: usize = 200;

fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // Debug keeps full precision and switches to exponent form for
        // very large or small magnitudes.
        format!("{x:?}")
    }
}

struct Wrapped<'a> {
    out: &'a mut String,
    line: usize,
}

impl<'a> Wrapped<'a> {
    fn new(out: &'a mut String, head: &str) -> Self {
        out.push_str(head);
        let line = head.len();
        Wrapped { out, line }
    }

    fn token(&mut self, tok: &str) {
        if self.line + tok.len() + 1 > WRAP_AT {
            self.out.push_str("\n   ");
            self.line = 3;
        }
        self.out.push(' ');
        self.out.push_str(tok);
        self.line += tok.len() + 1;
    }

    fn end(self) {
        self.out.push('\n');
    }
}

fn linear(w: &mut Wrapped<'_>, model: &MilpModel, terms: &[(VarId, f64)]) {
    if terms.is_empty() {
        // An empty expression still needs a variable for the grammar.
        if let Some(first) = model.variables().first() {
            w.token("0");
            w.token(&first.name);
        }
        return;
    }
    for (i, &(id, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else { "+" };
        if i > 0 || c < 0.0 {
            w.token(sign);
        }
        w.token(&num(c.abs()));
        w.token(&model.variable(id).name);
    }
}

/// Renders the model; the objective is always `Minimize`.
pub fn to_lp_string(model: &MilpModel) -> String {
    let mut out = String::from("\\ community energy model\nMinimize\n");
    {
        let obj = model.objective();
        let mut w = Wrapped::new(&mut out, " obj:");
        linear(&mut w, model, &obj.terms);
        if obj.constant != 0.0 {
            w.token(if obj.constant < 0.0 { "-" } else { "+" });
            w.token(&num(obj.constant.abs()));
        }
        w.end();
    }

    out.push_str("Subject To\n");
    for c in model.constraints() {
        let mut w = Wrapped::new(&mut out, &format!(" {}:", c.name));
        linear(&mut w, model, &c.terms);
        w.token(match c.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        });
        w.token(&num(c.rhs));
        w.end();
    }

    out.push_str("Bounds\n");
    for v in model.variables() {
        let (lo, hi) = (v.lower, v.upper);
        if lo == hi {
            let _ = writeln!(out, " {} = {}", v.name, num(lo));
        } else if v.kind == VarKind::Binary || (lo == 0.0 && hi == f64::INFINITY) {
            continue;
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", num(lo), v.name, num(hi));
        }
    }

    let binaries: Vec<&str> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        let mut w = Wrapped::new(&mut out, "");
        for b in binaries {
            w.token(b);
        }
        w.end();
    }
    out.push_str("End\n");
    out
}

pub fn write_lp<W: Write>(model: &MilpModel, mut writer: W) -> io::Result<()> {
    writer.write_all(to_lp_string(model).as_bytes())?;
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Objective;

    #[test]
    fn small_model_layout() {
        let mut m = MilpModel::new();
        let x = m.add_variable("x", 0.0, f64::INFINITY, VarKind::Continuous, None).unwrap();
        let y = m.add_variable("y", -2.0, 3.5, VarKind::Continuous, None).unwrap();
        let z = m.add_variable("z", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, None).unwrap();
        let b = m.add_variable("b", 0.0, 1.0, VarKind::Binary, None).unwrap();
        m.add_constraint("c1", vec![(x, 1.0), (y, -2.5)], Sense::Le, 4.0).unwrap();
        m.add_constraint("c2", vec![(z, -1.0), (b, 3.0)], Sense::Ge, -1.0).unwrap();
        m.set_objective(Objective {
            terms: vec![(x, 2.0), (z, 1.0)],
            constant: 0.0,
        })
        .unwrap();
        let text = to_lp_string(&m);
        let expected = "\\ community energy model\nMinimize\n obj: 2.0 x + 1.0 z\nSubject To\n c1: 1.0 x - 2.5 y <= 4.0\n c2: - 1.0 z + 3.0 b >= -1.0\nBounds\n -2.0 <= y <= 3.5\n z free\nBinaries\n b\nEnd\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn long_rows_are_wrapped() {
        let mut m = MilpModel::new();
        let terms: Vec<_> = (0..200)
            .map(|i| {
                let id = m
                    .add_variable(format!("variable_{i}"), 0.0, 1.0, VarKind::Continuous, None)
                    .unwrap();
                (id, 1.0 + i as f64)
            })
            .collect();
        m.add_constraint("long", terms, Sense::Le, 1.0).unwrap();
        let text = to_lp_string(&m);
        assert!(text.lines().all(|l| l.len() < 255));
        assert!(text.lines().count() > 20);
    }

    #[test]
    fn fixed_variables_use_equality_bounds() {
        let mut m = MilpModel::new();
        m.add_variable("f", 0.0, 0.0, VarKind::Continuous, None).unwrap();
        m.add_variable("g", 1.0, 1.0, VarKind::Binary, None).unwrap();
        let text = to_lp_string(&m);
        assert!(text.contains(" f = 0.0\n"));
        assert!(text.contains(" g = 1.0\n"));
    }
}
