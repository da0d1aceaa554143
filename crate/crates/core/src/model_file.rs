//! Plain-text model files.
//!
//! ```text
//! # simple decay
//! species X = 100000
//! reaction X -> 0 @ 1.0
//! time 0.5
//! observable X
//! ```
//!
//! Reactions are either mass action (`reactants -> products @ rate`,
//! multiplicities as integer prefixes, `0` or nothing for an empty
//! side) or explicit (`reaction [ -1 0 2 ] @ 0.5 X^2 Y + 3e-2` giving
//! the stoichiometric vector and a monomial list). The observable is a
//! species name, a linear form (`2 R + 1 P`), or `total`. Rate and
//! coefficient literals are kept verbatim so a file can be written back
//! with its constants bit-exact.

use std::fmt;

use crate::network::{Model, Monomial, Observable, Propensity, ReactionNetwork};

#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone)]
pub struct RateLit {
    pub text: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub enum ReactionDecl {
    MassAction {
        reactants: Vec<(String, u32)>,
        products: Vec<(String, u32)>,
        rate: RateLit,
    },
    Explicit {
        nu: Vec<i64>,
        monomials: Vec<MonomialDecl>,
    },
}

#[derive(Debug, Clone)]
pub enum ObservableDecl {
    Species(String),
    Total,
    Linear(Vec<(RateLit, String)>),
}

/// A parsed model file: the declarations (for verbatim write-back) plus
/// the compiled [`Model`].
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub species: Vec<(String, i64)>,
    pub reactions: Vec<ReactionDecl>,
    pub t_final: f64,
    pub t_final_text: String,
    pub observable: ObservableDecl,
    pub model: Model,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
    }
}

fn parse_rate(tok: &str, line: usize, col: usize) -> Result<RateLit, ParseError> {
    let value: f64 = tok
        .parse()
        .map_err(|_| err(line, col, format!("expected a number, found `{tok}`")))?;
    if !value.is_finite() {
        return Err(err(line, col, "rate must be finite"));
    }
    Ok(RateLit {
        text: tok.to_string(),
        value,
    })
}

/// Parse a `coeff species [^pow] [* species ...]` multiset like
/// `2 P + R` or `X^2 Y`.
fn parse_multiset(
    text: &str,
    line: usize,
    col0: usize,
    species: &[(String, i64)],
) -> Result<Vec<(String, u32)>, ParseError> {
    let mut out: Vec<(String, u32)> = Vec::new();
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "0" {
        return Ok(out);
    }
    for part in trimmed.split('+') {
        let part = part.trim();
        if part.is_empty() {
            return Err(err(line, col0, "empty term in species list"));
        }
        let mut mult = 1u32;
        let mut name = part;
        // optional integer multiplicity prefix: "2 P" or "2P"
        let digits: String = part.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() {
            mult = digits
                .parse()
                .map_err(|_| err(line, col0, format!("bad multiplicity in `{part}`")))?;
            name = part[digits.len()..].trim();
        }
        if name.is_empty() {
            return Err(err(line, col0, format!("missing species name in `{part}`")));
        }
        if !species.iter().any(|(s, _)| s == name) {
            return Err(err(line, col0, format!("unknown species `{name}`")));
        }
        match out.iter_mut().find(|(s, _)| s == name) {
            Some((_, m)) => *m += mult,
            None => out.push((name.to_string(), mult)),
        }
    }
    Ok(out)
}

fn species_index(species: &[(String, i64)], name: &str) -> Option<usize> {
    species.iter().position(|(s, _)| s == name)
}

/// A parsed monomial: coefficient literal plus `(species, power)` factors.
pub type MonomialDecl = (RateLit, Vec<(String, u32)>);

/// Parse monomials `coeff [X[^p]]... + coeff ...` with `*` or spaces
/// between factors.
fn parse_monomials(
    text: &str,
    line: usize,
    col0: usize,
    species: &[(String, i64)],
) -> Result<Vec<MonomialDecl>, ParseError> {
    let mut out = Vec::new();
    for term in text.split('+') {
        let term = term.trim();
        if term.is_empty() {
            return Err(err(line, col0, "empty monomial"));
        }
        let factors: Vec<&str> = term
            .split(|c: char| c == '*' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let coeff = parse_rate(factors[0], line, col0)?;
        let mut powers: Vec<(String, u32)> = Vec::new();
        for factor in &factors[1..] {
            let (name, pow) = match factor.split_once('^') {
                Some((n, p)) => (
                    n,
                    p.parse::<u32>()
                        .map_err(|_| err(line, col0, format!("bad power in `{factor}`")))?,
                ),
                None => (*factor, 1),
            };
            if species_index(species, name).is_none() {
                return Err(err(line, col0, format!("unknown species `{name}`")));
            }
            match powers.iter_mut().find(|(s, _)| s == name) {
                Some((_, p)) => *p += pow,
                None => powers.push((name.to_string(), pow)),
            }
        }
        out.push((coeff, powers));
    }
    Ok(out)
}

pub fn parse(text: &str) -> Result<ModelFile, ParseError> {
    let mut species: Vec<(String, i64)> = Vec::new();
    let mut reactions: Vec<ReactionDecl> = Vec::new();
    let mut t_final: Option<(f64, String)> = None;
    let mut observable: Option<ObservableDecl> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = raw.len() - raw.trim_start().len() + 1;
        let (keyword, rest) = match trimmed.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (trimmed, ""),
        };
        match keyword {
            "species" => {
                let (name, count) = rest
                    .split_once('=')
                    .ok_or_else(|| err(line_no, col, "expected `species NAME = COUNT`"))?;
                let name = name.trim().to_string();
                if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    return Err(err(line_no, col, format!("bad species name `{name}`")));
                }
                if species.iter().any(|(s, _)| *s == name) {
                    return Err(err(line_no, col, format!("duplicate species `{name}`")));
                }
                let count: i64 = count.trim().parse().map_err(|_| {
                    err(line_no, col, format!("bad initial count `{}`", count.trim()))
                })?;
                if count < 0 {
                    return Err(err(line_no, col, "initial counts must be nonnegative"));
                }
                species.push((name, count));
            }
            "reaction" => {
                let (lhs, rate_text) = rest
                    .rsplit_once('@')
                    .ok_or_else(|| err(line_no, col, "expected `... @ rate`"))?;
                let lhs = lhs.trim();
                if let Some(body) = lhs.strip_prefix('[') {
                    let body = body
                        .strip_suffix(']')
                        .ok_or_else(|| err(line_no, col, "unterminated `[` in stoichiometry"))?;
                    let nu: Result<Vec<i64>, _> = body
                        .split_whitespace()
                        .map(|t| t.trim_matches(',').parse::<i64>())
                        .collect();
                    let nu = nu.map_err(|_| err(line_no, col, "bad stoichiometric vector"))?;
                    if nu.len() != species.len() {
                        return Err(err(
                            line_no,
                            col,
                            format!(
                                "stoichiometric vector has {} entries for {} species",
                                nu.len(),
                                species.len()
                            ),
                        ));
                    }
                    let monomials =
                        parse_monomials(rate_text.trim(), line_no, col, &species)?;
                    reactions.push(ReactionDecl::Explicit { nu, monomials });
                } else {
                    let (reactants, products) = lhs
                        .split_once("->")
                        .ok_or_else(|| err(line_no, col, "expected `reactants -> products`"))?;
                    let rate = parse_rate(rate_text.trim(), line_no, col)?;
                    reactions.push(ReactionDecl::MassAction {
                        reactants: parse_multiset(reactants, line_no, col, &species)?,
                        products: parse_multiset(products, line_no, col, &species)?,
                        rate,
                    });
                }
            }
            "time" => {
                let value: f64 = rest
                    .parse()
                    .map_err(|_| err(line_no, col, format!("bad time `{rest}`")))?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(err(line_no, col, "final time must be positive"));
                }
                t_final = Some((value, rest.to_string()));
            }
            "observable" => {
                observable = Some(if rest == "total" {
                    ObservableDecl::Total
                } else if species_index(&species, rest).is_some() {
                    ObservableDecl::Species(rest.to_string())
                } else {
                    let mut terms = Vec::new();
                    for term in rest.split('+') {
                        let term = term.trim();
                        let factors: Vec<&str> = term
                            .split(|c: char| c == '*' || c.is_whitespace())
                            .filter(|s| !s.is_empty())
                            .collect();
                        if factors.len() != 2 {
                            return Err(err(
                                line_no,
                                col,
                                format!("expected `weight SPECIES` terms, found `{term}`"),
                            ));
                        }
                        let w = parse_rate(factors[0], line_no, col)?;
                        if species_index(&species, factors[1]).is_none() {
                            return Err(err(
                                line_no,
                                col,
                                format!("unknown species `{}`", factors[1]),
                            ));
                        }
                        terms.push((w, factors[1].to_string()));
                    }
                    ObservableDecl::Linear(terms)
                });
            }
            other => {
                return Err(err(
                    line_no,
                    col,
                    format!("unknown keyword `{other}` (expected species/reaction/time/observable)"),
                ));
            }
        }
    }

    let (t_final, t_final_text) =
        t_final.ok_or_else(|| err(text.lines().count() + 1, 1, "missing `time` line"))?;
    let observable =
        observable.ok_or_else(|| err(text.lines().count() + 1, 1, "missing `observable` line"))?;
    if species.is_empty() {
        return Err(err(1, 1, "no species declared"));
    }
    if reactions.is_empty() {
        return Err(err(1, 1, "no reactions declared"));
    }

    let d = species.len();
    let mut stoich = Vec::new();
    let mut props = Vec::new();
    for decl in &reactions {
        match decl {
            ReactionDecl::MassAction {
                reactants,
                products,
                rate,
            } => {
                let mut nu = vec![0i64; d];
                for (name, mult) in reactants {
                    nu[species_index(&species, name).unwrap()] -= *mult as i64;
                }
                for (name, mult) in products {
                    nu[species_index(&species, name).unwrap()] += *mult as i64;
                }
                stoich.push(nu);
                props.push(Propensity::MassAction {
                    rate: rate.value,
                    reactants: reactants
                        .iter()
                        .map(|(name, mult)| (species_index(&species, name).unwrap(), *mult))
                        .collect(),
                });
            }
            ReactionDecl::Explicit { nu, monomials } => {
                stoich.push(nu.clone());
                props.push(Propensity::Polynomial(
                    monomials
                        .iter()
                        .map(|(coeff, powers)| Monomial {
                            coeff: coeff.value,
                            powers: powers
                                .iter()
                                .map(|(name, p)| (species_index(&species, name).unwrap(), *p))
                                .collect(),
                        })
                        .collect(),
                ));
            }
        }
    }
    let names: Vec<String> = species.iter().map(|(n, _)| n.clone()).collect();
    let network = ReactionNetwork::new(names, stoich, props)
        .map_err(|e| err(1, 1, format!("invalid network: {e}")))?;
    let x0: Vec<i64> = species.iter().map(|(_, c)| *c).collect();
    let obs = match &observable {
        ObservableDecl::Total => Observable::total(d),
        ObservableDecl::Species(name) => {
            Observable::species(species_index(&species, name).unwrap(), d)
        }
        ObservableDecl::Linear(terms) => {
            let mut weights = vec![0.0; d];
            for (w, name) in terms {
                weights[species_index(&species, name).unwrap()] += w.value;
            }
            Observable { weights }
        }
    };
    let model = Model {
        network,
        x0,
        t_final,
        observable: obs,
    };
    Ok(ModelFile {
        species,
        reactions,
        t_final,
        t_final_text,
        observable,
        model,
    })
}

fn multiset_to_text(set: &[(String, u32)]) -> String {
    if set.is_empty() {
        return "0".to_string();
    }
    set.iter()
        .map(|(name, mult)| {
            if *mult == 1 {
                name.clone()
            } else {
                format!("{mult} {name}")
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

impl ModelFile {
    /// Write the model back out; rate constants keep their original
    /// decimal text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, count) in &self.species {
            out.push_str(&format!("species {name} = {count}\n"));
        }
        for decl in &self.reactions {
            match decl {
                ReactionDecl::MassAction {
                    reactants,
                    products,
                    rate,
                } => {
                    out.push_str(&format!(
                        "reaction {} -> {} @ {}\n",
                        multiset_to_text(reactants),
                        multiset_to_text(products),
                        rate.text
                    ));
                }
                ReactionDecl::Explicit { nu, monomials } => {
                    let nu_text = nu
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(" ");
                    let mono_text = monomials
                        .iter()
                        .map(|(coeff, powers)| {
                            let mut s = coeff.text.clone();
                            for (name, p) in powers {
                                if *p == 1 {
                                    s.push_str(&format!(" {name}"));
                                } else {
                                    s.push_str(&format!(" {name}^{p}"));
                                }
                            }
                            s
                        })
                        .collect::<Vec<_>>()
                        .join(" + ");
                    out.push_str(&format!("reaction [ {nu_text} ] @ {mono_text}\n"));
                }
            }
        }
        out.push_str(&format!("time {}\n", self.t_final_text));
        match &self.observable {
            ObservableDecl::Total => out.push_str("observable total\n"),
            ObservableDecl::Species(name) => out.push_str(&format!("observable {name}\n")),
            ObservableDecl::Linear(terms) => {
                let text = terms
                    .iter()
                    .map(|(w, name)| format!("{} {name}", w.text))
                    .collect::<Vec<_>>()
                    .join(" + ");
                out.push_str(&format!("observable {text}\n"));
            }
        }
        out
    }
}

/// SHA-256 of the raw model file bytes, hex-encoded; artifacts carry it
/// so plans and reports can be matched to the exact model they used.
pub fn model_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DECAY: &str = "\
# simple decay
species X = 100000
reaction X -> 0 @ 1.0
time 0.5
observable X
";

    const GENE: &str = "\
species R = 0
species P = 0
species D = 0
reaction 0 -> R @ 25
reaction R -> R + P @ 1000
reaction 2 P -> D @ 0.001
reaction R -> 0 @ 0.1
reaction P -> 0 @ 1
time 1
observable D
";

    #[test]
    fn decay_parses_and_matches_builtin() {
        let mf = parse(DECAY).unwrap();
        assert_eq!(mf.model.x0, vec![100_000]);
        assert_eq!(mf.model.t_final, 0.5);
        assert_eq!(mf.model.network.propensities(&[10]), vec![10.0]);
    }

    #[test]
    fn gene_parses_with_mass_action_kinetics() {
        let mf = parse(GENE).unwrap();
        let a = mf.model.network.propensities(&[1, 2, 0]);
        let expected = [25.0, 1000.0, 0.002, 0.1, 2.0];
        for (got, want) in a.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{a:?}");
        }
        assert_eq!(mf.model.observable.weights, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn explicit_reaction_form() {
        let text = "\
species X = 5
species Y = 3
reaction [ -1 2 ] @ 0.5 X^2 Y + 3e-2
time 1.0
observable 2 X + 1 Y
";
        let mf = parse(text).unwrap();
        let a = mf.model.network.propensities(&[2, 3]);
        // 0.5 * 4 * 3 + 0.03, clamped check: x + nu = (1, 5) stays in.
        assert!((a[0] - 6.03).abs() < 1e-12);
        assert_eq!(mf.model.observable.weights, vec![2.0, 1.0]);
    }

    #[test]
    fn rate_text_roundtrip_is_bit_exact() {
        let text = "\
species X = 7
reaction X -> 0 @ 0.1000
reaction 0 -> X @ 2.5e-3
time 0.25
observable X
";
        let mf = parse(text).unwrap();
        let written = mf.to_text();
        assert!(written.contains("@ 0.1000"), "{written}");
        assert!(written.contains("@ 2.5e-3"), "{written}");
        // Parsing the written form yields the same compiled rates.
        let back = parse(&written).unwrap();
        assert_eq!(
            back.model.network.propensities(&[7]),
            mf.model.network.propensities(&[7])
        );
        // And the hash of a rewrite of a rewrite is stable.
        assert_eq!(model_hash(&written), model_hash(&back.to_text()));
    }

    #[test]
    fn errors_carry_line_and_column() {
        let text = "species X = 5\nreaction X -> 0 @ fast\ntime 1\nobservable X\n";
        let e = parse(text).unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("fast"));
        let e = parse("species X = 5\nbogus line\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("bogus"));
        let e = parse("species X = 5\nreaction X -> 0 @ 1\ntime 1\n").unwrap_err();
        assert!(e.message.contains("observable"));
    }

    #[test]
    fn unknown_species_rejected() {
        let text = "species X = 5\nreaction Y -> 0 @ 1\ntime 1\nobservable X\n";
        let e = parse(text).unwrap_err();
        assert!(e.message.contains("unknown species `Y`"));
    }
}
