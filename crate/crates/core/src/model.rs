//! Domain types and pure primitives for the outcome model
//! `g(E[Y | a, z]) = b0 + b1'a + b2'z` and the package cost.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LagoError, Result};

/// Link function `g` of the mean model. All three inverses are strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Identity,
    Log,
    Logit,
}

impl LinkFunction {
    /// `g(mu)`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            LinkFunction::Identity => mu,
            LinkFunction::Log => mu.ln(),
            LinkFunction::Logit => mu.ln() - (-mu).ln_1p(),
        }
    }

    /// `g^-1(eta)`, the mean response on the outcome scale.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => eta,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Logit => expit(eta),
        }
    }

    /// First derivative of `g^-1` with respect to `eta`.
    pub fn inverse_deriv(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => 1.0,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Logit => {
                let mu = expit(eta);
                // mu * (1 - mu) with 1 - mu computed as expit(-eta) to keep tails accurate
                mu * expit(-eta)
            }
        }
    }

    /// Second derivative of `g^-1` with respect to `eta`.
    pub fn inverse_second_deriv(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => 0.0,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Logit => {
                let mu = expit(eta);
                let one_minus = expit(-eta);
                mu * one_minus * (one_minus - mu)
            }
        }
    }

    /// Whether `mu` lies in the range of `g^-1`.
    pub fn is_valid_mean(self, mu: f64) -> bool {
        match self {
            LinkFunction::Identity => mu.is_finite(),
            LinkFunction::Log => mu > 0.0 && mu.is_finite(),
            LinkFunction::Logit => mu > 0.0 && mu < 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Identity => "identity",
            LinkFunction::Log => "log",
            LinkFunction::Logit => "logit",
        }
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFunction {
    type Err = LagoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" => Ok(LinkFunction::Identity),
            "log" => Ok(LinkFunction::Log),
            "logit" => Ok(LinkFunction::Logit),
            other => Err(LagoError::InvalidInput(format!(
                "unknown link `{other}` (expected identity, log or logit)"
            ))),
        }
    }
}

/// Overflow-free logistic function.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(LagoError::InvalidInput(format!(
            "{what}[{i}] is not finite ({})",
            values[i]
        )));
    }
    Ok(())
}

/// Doses of each package component, in the caller's model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterventionPackage(pub Vec<f64>);

impl InterventionPackage {
    pub fn new(doses: Vec<f64>) -> Result<Self> {
        if doses.is_empty() {
            return Err(LagoError::InvalidInput(
                "intervention package needs at least one component".into(),
            ));
        }
        check_finite("package", &doses)?;
        Ok(Self(doses))
    }

    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    pub fn doses(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_within(&self, bounds: &ComponentBounds) -> bool {
        self.0.len() == bounds.len()
            && self
                .0
                .iter()
                .zip(bounds.lower.iter().zip(&bounds.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }
}

impl From<Vec<f64>> for InterventionPackage {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Box constraints `[L_p, U_p]` on each component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ComponentBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(LagoError::DimensionMismatch {
                what: "bounds.upper",
                expected: self.lower.len(),
                found: self.upper.len(),
            });
        }
        if self.lower.is_empty() {
            return Err(LagoError::InvalidInput("bounds must have at least one component".into()));
        }
        check_finite("bounds.lower", &self.lower)?;
        check_finite("bounds.upper", &self.upper)?;
        for (p, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo >= hi {
                return Err(LagoError::InvalidInput(format!(
                    "bounds[{p}]: lower {lo} must be strictly below upper {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower_package(&self) -> InterventionPackage {
        InterventionPackage(self.lower.clone())
    }

    pub fn upper_package(&self) -> InterventionPackage {
        InterventionPackage(self.upper.clone())
    }

    /// Clamp each dose into its interval.
    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

impl FromStr for ComponentBounds {
    type Err = LagoError;

    /// Parses `lo:hi,lo:hi,...`.
    fn from_str(s: &str) -> Result<Self> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for part in s.split(',') {
            let (lo, hi) = part.split_once(':').ok_or_else(|| {
                LagoError::InvalidInput(format!("bounds entry `{part}` is not of the form lo:hi"))
            })?;
            lower.push(parse_f64(lo)?);
            upper.push(parse_f64(hi)?);
        }
        ComponentBounds::new(lower, upper)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| LagoError::InvalidInput(format!("`{s}` is not a number")))
}

/// Parses a comma-separated list of numbers; the empty string yields an empty list.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_f64).collect()
}

/// Fixed center characteristics `z`; may be empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CenterCovariates(pub Vec<f64>);

impl CenterCovariates {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("covariates", &values)?;
        Ok(Self(values))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(q: usize) -> Self {
        Self(vec![0.0; q])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for CenterCovariates {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `beta = (b0, b1, b2)`: intercept, package effects and covariate effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub intercept: f64,
    pub effects: Vec<f64>,
    pub covariate_effects: Vec<f64>,
}

impl ParameterVector {
    pub fn new(intercept: f64, effects: Vec<f64>, covariate_effects: Vec<f64>) -> Self {
        Self {
            intercept,
            effects,
            covariate_effects,
        }
    }

    pub fn zeros(p: usize, q: usize) -> Self {
        Self::new(0.0, vec![0.0; p], vec![0.0; q])
    }

    pub fn p(&self) -> usize {
        self.effects.len()
    }

    pub fn q(&self) -> usize {
        self.covariate_effects.len()
    }

    /// Total dimension `p + q + 1`.
    pub fn dim(&self) -> usize {
        1 + self.p() + self.q()
    }

    /// Flattened `(b0, b1..., b2...)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.intercept);
        v.extend_from_slice(&self.effects);
        v.extend_from_slice(&self.covariate_effects);
        v
    }

    pub fn from_slice(flat: &[f64], p: usize, q: usize) -> Result<Self> {
        if flat.len() != 1 + p + q {
            return Err(LagoError::DimensionMismatch {
                what: "parameter vector",
                expected: 1 + p + q,
                found: flat.len(),
            });
        }
        Ok(Self::new(
            flat[0],
            flat[1..1 + p].to_vec(),
            flat[1 + p..].to_vec(),
        ))
    }

    pub fn check_dims(&self, x: &InterventionPackage, z: &CenterCovariates) -> Result<()> {
        if x.len() != self.p() {
            return Err(LagoError::DimensionMismatch {
                what: "intervention package",
                expected: self.p(),
                found: x.len(),
            });
        }
        if z.len() != self.q() {
            return Err(LagoError::DimensionMismatch {
                what: "center covariates",
                expected: self.q(),
                found: z.len(),
            });
        }
        Ok(())
    }

    /// `b2'z + b0`, the part of the linear predictor that does not depend on the package.
    pub fn baseline_eta(&self, z: &[f64]) -> f64 {
        self.intercept
            + self
                .covariate_effects
                .iter()
                .zip(z)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// Linear predictor without dimension checks.
    pub fn eta_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        self.baseline_eta(z) + self.effects.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn linear_predictor(&self, x: &InterventionPackage, z: &CenterCovariates) -> Result<f64> {
        self.check_dims(x, z)?;
        Ok(self.eta_unchecked(x.doses(), z.values()))
    }
}

/// Design row `(1, x', z')`.
pub fn design_row(x: &[f64], z: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + x.len() + z.len());
    row.push(1.0);
    row.extend_from_slice(x);
    row.extend_from_slice(z);
    row
}

/// `g^-1(b0 + b1'x + b2'z)`.
pub fn mean_response(
    link: LinkFunction,
    beta: &ParameterVector,
    x: &InterventionPackage,
    z: &CenterCovariates,
) -> Result<f64> {
    Ok(link.inverse(beta.linear_predictor(x, z)?))
}

/// One component's cubic `d + c x + b x^2 + a x^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicTerm {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CubicTerm {
    pub fn eval(&self, x: f64) -> f64 {
        ((self.a * x + self.b) * x + self.c) * x + self.d
    }
}

/// Package cost in dollars. Both forms are separable across components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostFunction {
    Linear {
        #[serde(default)]
        fixed_cost: f64,
        unit_costs: Vec<f64>,
    },
    Cubic { terms: Vec<CubicTerm> },
}

impl CostFunction {
    pub fn linear(unit_costs: Vec<f64>) -> Result<Self> {
        Self::linear_with_fixed(0.0, unit_costs)
    }

    pub fn linear_with_fixed(fixed_cost: f64, unit_costs: Vec<f64>) -> Result<Self> {
        let cf = CostFunction::Linear {
            fixed_cost,
            unit_costs,
        };
        cf.validate()?;
        Ok(cf)
    }

    pub fn cubic(terms: Vec<CubicTerm>) -> Result<Self> {
        let cf = CostFunction::Cubic { terms };
        cf.validate()?;
        Ok(cf)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CostFunction::Linear {
                fixed_cost,
                unit_costs,
            } => {
                check_finite("unit_costs", unit_costs)?;
                if !fixed_cost.is_finite() {
                    return Err(LagoError::InvalidInput("fixed_cost is not finite".into()));
                }
                if let Some(p) = unit_costs.iter().position(|c| *c <= 0.0) {
                    return Err(LagoError::InvalidInput(format!(
                        "unit_costs[{p}] must be positive"
                    )));
                }
                if unit_costs.is_empty() {
                    return Err(LagoError::InvalidInput("unit_costs is empty".into()));
                }
            }
            CostFunction::Cubic { terms } => {
                if terms.is_empty() {
                    return Err(LagoError::InvalidInput("cubic cost has no terms".into()));
                }
                for (p, t) in terms.iter().enumerate() {
                    check_finite(&format!("terms[{p}]"), &[t.a, t.b, t.c, t.d])?;
                }
            }
        }
        Ok(())
    }

    /// Number of package components the cost is defined over.
    pub fn len(&self) -> usize {
        match self {
            CostFunction::Linear { unit_costs, .. } => unit_costs.len(),
            CostFunction::Cubic { terms } => terms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, CostFunction::Linear { .. })
    }

    /// Cost that does not depend on any dose.
    pub fn fixed_part(&self) -> f64 {
        match self {
            CostFunction::Linear { fixed_cost, .. } => *fixed_cost,
            CostFunction::Cubic { .. } => 0.0,
        }
    }

    /// Contribution of component `p` at dose `v`.
    pub fn component(&self, p: usize, v: f64) -> f64 {
        match self {
            CostFunction::Linear { unit_costs, .. } => unit_costs[p] * v,
            CostFunction::Cubic { terms } => terms[p].eval(v),
        }
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.fixed_part()
            + x.iter()
                .enumerate()
                .map(|(p, v)| self.component(p, *v))
                .sum::<f64>()
    }
}

impl fmt::Display for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        match self {
            CostFunction::Linear {
                fixed_cost,
                unit_costs,
            } => {
                write!(f, "linear:{}", join(unit_costs))?;
                if *fixed_cost != 0.0 {
                    write!(f, "+{fixed_cost}")?;
                }
                Ok(())
            }
            CostFunction::Cubic { terms } => {
                let parts: Vec<String> = terms.iter().map(|t| join(&[t.a, t.b, t.c, t.d])).collect();
                write!(f, "cubic:{}", parts.join("/"))
            }
        }
    }
}

impl FromStr for CostFunction {
    type Err = LagoError;

    /// `linear:c1,c2[+fixed]` or `cubic:a,b,c,d/a,b,c,d` (`;` also separates cubic terms).
    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| LagoError::InvalidInput(format!("cost `{s}` lacks a `kind:` prefix")))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "linear" => {
                let (units, fixed) = match body.split_once('+') {
                    Some((u, f)) => (u, parse_f64(f)?),
                    None => (body, 0.0),
                };
                CostFunction::linear_with_fixed(fixed, parse_f64_list(units)?)
            }
            "cubic" => {
                let terms = body
                    .split(['/', ';'])
                    .map(|t| {
                        let v = parse_f64_list(t)?;
                        if v.len() != 4 {
                            return Err(LagoError::InvalidInput(format!(
                                "cubic term `{t}` needs four coefficients a,b,c,d"
                            )));
                        }
                        Ok(CubicTerm {
                            a: v[0],
                            b: v[1],
                            c: v[2],
                            d: v[3],
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                CostFunction::cubic(terms)
            }
            other => Err(LagoError::InvalidInput(format!("unknown cost kind `{other}`"))),
        }
    }
}

/// Cost of package `x`.
pub fn cost(cf: &CostFunction, x: &InterventionPackage) -> Result<f64> {
    if x.len() != cf.len() {
        return Err(LagoError::DimensionMismatch {
            what: "intervention package",
            expected: cf.len(),
            found: x.len(),
        });
    }
    Ok(cf.eval_unchecked(x.doses()))
}

/// Absolute target `theta` for the mean outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub theta: f64,
}

impl TargetSpec {
    pub fn new(theta: f64, link: LinkFunction) -> Result<Self> {
        if !link.is_valid_mean(theta) {
            return Err(LagoError::InvalidInput(format!(
                "target theta {theta} is outside the range of the {link} link"
            )));
        }
        Ok(Self { theta })
    }

    /// `g(theta)`.
    pub fn eta(&self, link: LinkFunction) -> f64 {
        link.link(self.theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LINKS: [LinkFunction; 3] = [LinkFunction::Identity, LinkFunction::Log, LinkFunction::Logit];

    #[test]
    fn identity_mean_is_linear_sum() {
        let beta = ParameterVector::new(0.1, vec![0.2, 0.3], vec![]);
        let m = mean_response(
            LinkFunction::Identity,
            &beta,
            &InterventionPackage(vec![1.0, 1.0]),
            &CenterCovariates::empty(),
        )
        .unwrap();
        assert!((m - 0.6).abs() < 1e-15);
    }

    #[test]
    fn logit_mean_at_reported_final_estimates() {
        // launch days 5, coaching visits 31 expressed per 5 visits, birth volume per 100
        let beta = ParameterVector::new(-0.138, vec![0.17, 0.172], vec![-0.202]);
        let m = mean_response(
            LinkFunction::Logit,
            &beta,
            &InterventionPackage(vec![5.0, 6.2]),
            &CenterCovariates(vec![1.75]),
        )
        .unwrap();
        assert!((m - 0.806).abs() < 1e-3, "{m}");
    }

    #[test]
    fn log_mean_at_origin() {
        let beta = ParameterVector::new(0.0, vec![1.0], vec![]);
        let m = mean_response(
            LinkFunction::Log,
            &beta,
            &InterventionPackage(vec![0.0]),
            &CenterCovariates::empty(),
        )
        .unwrap();
        assert_eq!(m, 1.0);
    }

    #[test]
    fn dimension_mismatch_names_the_offending_length() {
        let beta = ParameterVector::new(0.0, vec![1.0, 2.0], vec![]);
        let err = mean_response(
            LinkFunction::Identity,
            &beta,
            &InterventionPackage(vec![1.0]),
            &CenterCovariates::empty(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            LagoError::DimensionMismatch {
                what: "intervention package",
                expected: 2,
                found: 1
            }
        );
        let err = mean_response(
            LinkFunction::Identity,
            &beta,
            &InterventionPackage(vec![1.0, 1.0]),
            &CenterCovariates(vec![3.0]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("found 1"));
    }

    #[test]
    fn linear_cost_examples() {
        let c1 = CostFunction::linear(vec![800.0, 170.0]).unwrap();
        assert_eq!(cost(&c1, &InterventionPackage(vec![5.0, 31.0])).unwrap(), 9270.0);
        let c = CostFunction::linear(vec![8.0, 2.0]).unwrap();
        assert_eq!(cost(&c, &InterventionPackage(vec![0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn cubic_cost_matches_hand_evaluated_polynomial() {
        // 0.05x1^3 - 1.19x1^2 + 10x1 + 10 + 0.1x2^3 - 0.7x2^2 + 2x2 at (1, 4):
        // (0.05 - 1.19 + 10 + 10) + (6.4 - 11.2 + 8) = 18.86 + 3.2 = 22.06
        let cf: CostFunction = "cubic:0.05,-1.19,10,10/0.1,-0.7,2,0".parse().unwrap();
        let c = cost(&cf, &InterventionPackage(vec![1.0, 4.0])).unwrap();
        assert!((c - 22.06).abs() < 1e-12, "{c}");
    }

    #[test]
    fn cost_strings_round_trip() {
        for s in ["linear:8,2", "linear:800,170+100", "cubic:0.05,-1.19,10,10/0.1,-0.7,2,0"] {
            let cf: CostFunction = s.parse().unwrap();
            assert_eq!(cf.to_string().parse::<CostFunction>().unwrap(), cf);
        }
        assert!("linear:8,-2".parse::<CostFunction>().is_err());
        assert!("cubic:1,2,3".parse::<CostFunction>().is_err());
        assert!("quadratic:1".parse::<CostFunction>().is_err());
    }

    #[test]
    fn bounds_parsing_and_validation() {
        let b: ComponentBounds = "0:2,0:8".parse().unwrap();
        assert_eq!(b.lower, vec![0.0, 0.0]);
        assert_eq!(b.upper, vec![2.0, 8.0]);
        assert!("2:0".parse::<ComponentBounds>().is_err());
        assert!("0-2".parse::<ComponentBounds>().is_err());
        assert!(ComponentBounds::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn logit_target_must_be_a_probability() {
        assert!(TargetSpec::new(1.2, LinkFunction::Logit).is_err());
        assert!(TargetSpec::new(0.8, LinkFunction::Logit).is_ok());
        assert!(TargetSpec::new(1.2, LinkFunction::Identity).is_ok());
        assert!(TargetSpec::new(-1.0, LinkFunction::Log).is_err());
    }

    #[test]
    fn logit_is_stable_in_the_tails() {
        assert!(LinkFunction::Logit.inverse(800.0) == 1.0);
        assert!(LinkFunction::Logit.inverse(-800.0) >= 0.0);
        assert!(LinkFunction::Logit.inverse_deriv(800.0).is_finite());
        assert!(LinkFunction::Logit.inverse_second_deriv(-800.0).is_finite());
    }

    proptest! {
        #[test]
        fn link_round_trip(eta in -30.0f64..30.0) {
            for link in LINKS {
                let mu = link.inverse(eta);
                let back = link.link(mu);
                // A logit mean above ~1 - 1e-7 cannot carry eta to 1e-9 in f64: the
                // spacing of doubles near 1 bounds the recoverable precision.
                let tol = match link {
                    LinkFunction::Logit if eta > 15.0 => 4.0 * f64::EPSILON / expit(-eta),
                    _ => 1e-9,
                };
                prop_assert!((back - eta).abs() < tol, "{link}: eta {eta} -> {back}");
            }
        }

        #[test]
        fn mean_ranges(eta in -30.0f64..30.0) {
            let m = LinkFunction::Logit.inverse(eta);
            prop_assert!(m > 0.0 && m < 1.0);
            prop_assert!(LinkFunction::Log.inverse(eta) > 0.0);
        }

        #[test]
        fn inverse_derivatives_match_finite_differences(
            b0 in -2.0f64..2.0,
            b1 in -1.0f64..1.0,
            x in -3.0f64..3.0,
        ) {
            let h = 1e-5;
            for link in LINKS {
                // d/d(b1) g^-1(b0 + b1 x) = g^-1'(eta) * x
                let f = |b: f64| link.inverse(b0 + b * x);
                let fd = (f(b1 + h) - f(b1 - h)) / (2.0 * h);
                let analytic = link.inverse_deriv(b0 + b1 * x) * x;
                prop_assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3),
                    "{link}: fd {fd} analytic {analytic}");

                let d = |e: f64| link.inverse_deriv(e);
                let eta = b0 + b1 * x;
                let fd2 = (d(eta + h) - d(eta - h)) / (2.0 * h);
                let analytic2 = link.inverse_second_deriv(eta);
                prop_assert!((fd2 - analytic2).abs() <= 1e-5 * analytic2.abs().max(1e-3),
                    "{link}: fd2 {fd2} analytic2 {analytic2}");
            }
        }

        #[test]
        fn linear_cost_is_additive(
            c1 in 0.1f64..100.0, c2 in 0.1f64..100.0, fixed in 0.0f64..50.0,
            x1 in 0.0f64..5.0, x2 in 0.0f64..5.0, y1 in 0.0f64..5.0, y2 in 0.0f64..5.0,
        ) {
            let cf = CostFunction::linear_with_fixed(fixed, vec![c1, c2]).unwrap();
            let cx = cost(&cf, &InterventionPackage(vec![x1, x2])).unwrap() - fixed;
            let cy = cost(&cf, &InterventionPackage(vec![y1, y2])).unwrap() - fixed;
            let cxy = cost(&cf, &InterventionPackage(vec![x1 + y1, x2 + y2])).unwrap() - fixed;
            prop_assert!((cxy - (cx + cy)).abs() < 1e-9 * (1.0 + cxy.abs()));
        }
    }
}
