//! Systems declared as expression lists in a run configuration.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{eval_ast, parse, Expr};
use crate::system::{check_first_integral_identity, Constraint, Domain, Dynamics, ParameterBox, SystemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDecl {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn default_name() -> String {
    "dsl".into()
}

fn default_identity_tolerance() -> f64 {
    1e-8
}

fn default_identity_samples() -> usize {
    200
}

/// A system written as expressions in `x1..xn` and `l1..lm`. First integrals
/// and constraints may only use the state variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DslDeclaration {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub f: Vec<String>,
    pub h: Vec<String>,
    pub domain: BoxDecl,
    /// Inequalities `g(x) <= 0` cutting down the domain box.
    #[serde(default)]
    pub constraints: Vec<String>,
    /// Defaults to `[0, 1]` in every coordinate.
    #[serde(default)]
    pub parameter_box: Option<BoxDecl>,
    #[serde(default = "default_identity_tolerance")]
    pub identity_tolerance: f64,
    #[serde(default = "default_identity_samples")]
    pub identity_samples: usize,
    #[serde(default)]
    pub identity_seed: u64,
}

impl DslDeclaration {
    /// Fill in the parameter box so that the declaration echoes every default.
    pub fn materialize(&mut self) {
        if self.parameter_box.is_none() {
            self.parameter_box = Some(BoxDecl {
                lower: vec![0.0; self.m],
                upper: vec![1.0; self.m],
            });
        }
    }
}

#[derive(Debug)]
struct DslSystem {
    f: Vec<Expr>,
    h: Vec<Expr>,
}

fn eval_all(exprs: &[Expr], lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let values = exprs
        .iter()
        .map(|e| eval_ast(e, lambda.as_slice(), x.as_slice()))
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    Ok(DVector::from_vec(values))
}

impl Dynamics for DslSystem {
    fn f(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        eval_all(&self.f, lambda, x)
    }

    fn h(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        eval_all(&self.h, &DVector::zeros(0), x)
    }
}

fn check_box(what: &str, b: &BoxDecl, dim: usize) -> Result<()> {
    if b.lower.len() != dim {
        return Err(Error::dim(format!("{what} lower bounds"), dim, b.lower.len()));
    }
    if b.upper.len() != dim {
        return Err(Error::dim(format!("{what} upper bounds"), dim, b.upper.len()));
    }
    if let Some(i) = (0..dim).find(|&i| b.lower[i].is_nan() || b.upper[i].is_nan() || b.lower[i] > b.upper[i]) {
        return Err(Error::Input(format!(
            "{what} bounds are invalid in coordinate {}",
            i + 1
        )));
    }
    Ok(())
}

fn parse_all(what: &str, sources: &[String], n: usize, m: usize) -> Result<Vec<Expr>> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| parse(s, n, m).map_err(|e| Error::Input(format!("{what}[{}] = {s:?}: {e}", i + 1))))
        .collect()
}

/// Structural checks that need no evaluation: counts, bounds, and that every
/// expression parses against the declared dimensions.
pub fn validate_declaration(decl: &DslDeclaration) -> Result<()> {
    let (n, m, k) = (decl.n, decl.m, decl.k);
    if n == 0 || k == 0 || k >= n {
        return Err(Error::Input(format!("need 0 < k < n, got n = {n}, k = {k}")));
    }
    if decl.f.len() != n {
        return Err(Error::dim("f expressions", n, decl.f.len()));
    }
    if decl.h.len() != k {
        return Err(Error::dim("h expressions", k, decl.h.len()));
    }
    check_box("domain", &decl.domain, n)?;
    if decl
        .domain
        .lower
        .iter()
        .chain(&decl.domain.upper)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Input("domain box must be bounded".into()));
    }
    if let Some(pb) = &decl.parameter_box {
        check_box("parameter box", pb, m)?;
    }
    if decl.identity_tolerance.is_nan() || decl.identity_tolerance <= 0.0 || decl.identity_samples == 0 {
        return Err(Error::Input("identity tolerance and samples must be positive".into()));
    }
    parse_all("f", &decl.f, n, m)?;
    parse_all("h", &decl.h, n, 0)?;
    parse_all("constraints", &decl.constraints, n, 0)?;
    Ok(())
}

/// Build a system from a declaration and accept it only if every `h_l` is
/// numerically a first integral of `f`.
pub fn build_system_from_config(decl: &DslDeclaration) -> Result<SystemSpec> {
    validate_declaration(decl)?;
    let (n, m) = (decl.n, decl.m);
    let f = parse_all("f", &decl.f, n, m)?;
    let h = parse_all("h", &decl.h, n, 0)?;
    let mut domain = Domain::boxed(decl.domain.lower.clone(), decl.domain.upper.clone());
    for (src, g) in decl
        .constraints
        .iter()
        .zip(parse_all("constraints", &decl.constraints, n, 0)?)
    {
        let g = Arc::new(g);
        domain = domain.with_constraint(Constraint::new(src.clone(), move |x: &DVector<f64>| {
            eval_ast(&g, &[], x.as_slice()).unwrap_or(f64::NAN)
        }));
    }
    let parameter_box = match &decl.parameter_box {
        Some(b) => ParameterBox {
            lower: b.lower.clone(),
            upper: b.upper.clone(),
        },
        None => ParameterBox {
            lower: vec![0.0; m],
            upper: vec![1.0; m],
        },
    };
    let sys = SystemSpec {
        name: decl.name.clone(),
        n,
        m,
        k: decl.k,
        dynamics: Arc::new(DslSystem { f, h }),
        domain,
        parameter_box,
    };
    let check = check_first_integral_identity(&sys, decl.identity_samples, decl.identity_seed)?;
    if check.max_residual > decl.identity_tolerance {
        let worst = check.worst.expect("at least one sample");
        return Err(Error::NotFirstIntegral {
            residual: check.max_residual,
            lambda: worst.lambda.iter().copied().collect(),
            x: worst.x.iter().copied().collect(),
        });
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{evaluate, PointState};

    fn decl(n: usize, m: usize, f: &[&str], h: &[&str], lo: f64, hi: f64) -> DslDeclaration {
        DslDeclaration {
            name: "t".into(),
            n,
            m,
            k: h.len(),
            f: f.iter().map(|s| s.to_string()).collect(),
            h: h.iter().map(|s| s.to_string()).collect(),
            domain: BoxDecl {
                lower: vec![lo; n],
                upper: vec![hi; n],
            },
            constraints: vec![],
            parameter_box: None,
            identity_tolerance: 1e-8,
            identity_samples: 200,
            identity_seed: 0,
        }
    }

    #[test]
    fn rfmr3_as_expressions() {
        let d = decl(
            3,
            3,
            &[
                "l3*x3*(1-x1) - l1*x1*(1-x2)",
                "l1*x1*(1-x2) - l2*x2*(1-x3)",
                "l2*x2*(1-x3) - l3*x3*(1-x1)",
            ],
            &["x1+x2+x3"],
            0.0,
            1.0,
        );
        let s = build_system_from_config(&d).unwrap();
        let check = check_first_integral_identity(&s, 200, 5).unwrap();
        assert!(check.max_residual < 1e-10, "{}", check.max_residual);
        let ev = evaluate(&s, &PointState::from_slices(&[1.0; 3], &[0.5; 3])).unwrap();
        assert!(ev.f_value.norm() == 0.0);
    }

    #[test]
    fn rejects_non_integral() {
        let err = build_system_from_config(&decl(2, 1, &["x2", "x1"], &["x1"], -1.0, 1.0)).unwrap_err();
        match err {
            Error::NotFirstIntegral { residual, x, .. } => {
                assert!(residual > 1e-3);
                assert_eq!(x.len(), 2);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn accepts_rotation() {
        let s = build_system_from_config(&decl(2, 1, &["-x2", "x1"], &["x1^2+x2^2"], -1.0, 1.0)).unwrap();
        assert_eq!((s.n, s.m, s.k), (2, 1, 1));
    }

    #[test]
    fn dimension_and_parse_errors() {
        let err = build_system_from_config(&decl(2, 1, &["x2"], &["x1"], -1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        let err = build_system_from_config(&decl(2, 1, &["x2", "l1*x1"], &["l1*x1"], -1.0, 1.0)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn constraints_cut_the_box() {
        let mut d = decl(2, 1, &["-x2", "x1"], &["x1^2+x2^2"], -1.0, 1.0);
        d.constraints = vec!["x1^2 + x2^2 - 1".into()];
        let s = build_system_from_config(&d).unwrap();
        assert!(s.domain.contains(&DVector::from_vec(vec![0.5, 0.5]), 0.0));
        assert!(!s.domain.contains(&DVector::from_vec(vec![0.9, 0.9]), 0.0));
    }
}
