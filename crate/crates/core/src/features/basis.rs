use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All monomials in `dim` variables of total degree at most `max_degree`.
///
/// Terms are kept in graded lexicographic order: degree ascending, and within
/// a degree the exponent vectors in descending lexicographic order, so that
/// `x1^2` precedes `x1*x2` precedes `x2^2`. The constant term is always first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct MonomialBasis {
    dim: usize,
    max_degree: u32,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(dim: usize, max_degree: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("basis dimension must be at least 1"));
        }
        if max_degree == 0 {
            return Err(Error::input("basis degree must be at least 1"));
        }
        let mut exponents = Vec::with_capacity(binomial(dim + max_degree as usize, dim));
        for degree in 0..=max_degree {
            let mut current = vec![0u32; dim];
            push_compositions(degree, 0, &mut current, &mut exponents);
        }
        Ok(Self {
            dim,
            max_degree,
            exponents,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e.as_slice() == exponent)
    }

    /// Index of a term given by name, e.g. `"x1^2*x2"`.
    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        let exponent = parse_term(name, self.dim).ok()?;
        self.index_of(&exponent)
    }

    pub fn term_name(&self, j: usize) -> String {
        format_term(&self.exponents[j])
    }

    pub fn term_names(&self) -> Vec<String> {
        self.exponents.iter().map(|e| format_term(e)).collect()
    }

    /// Rebuilds a basis from its serialized term names, checking that the
    /// names are exactly the canonical list for some `(dim, degree)`.
    pub fn from_term_names<S: AsRef<str>>(dim: usize, names: &[S]) -> Result<Self> {
        let parsed = names
            .iter()
            .map(|n| parse_term(n.as_ref(), dim))
            .collect::<Result<Vec<_>>>()?;
        let max_degree = parsed
            .iter()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0);
        let canonical = Self::new(dim, max_degree)?;
        if canonical.exponents != parsed {
            return Err(Error::input(
                "term names do not form a canonical monomial basis",
            ));
        }
        Ok(canonical)
    }

    /// Values of every monomial at one state.
    pub fn evaluate_row(&self, state: &[f64]) -> Vec<f64> {
        debug_assert_eq!(state.len(), self.dim);
        let mut powers = vec![Vec::with_capacity(self.max_degree as usize + 1); self.dim];
        for (l, p) in powers.iter_mut().enumerate() {
            let mut acc = 1.0;
            p.push(acc);
            for _ in 0..self.max_degree {
                acc *= state[l];
                p.push(acc);
            }
        }
        self.exponents
            .iter()
            .map(|e| {
                e.iter()
                    .enumerate()
                    .map(|(l, &k)| powers[l][k as usize])
                    .product()
            })
            .collect()
    }
}

impl fmt::Display for MonomialBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.term_names().join(", "))
    }
}

fn push_compositions(remaining: u32, slot: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if slot + 1 == current.len() {
        current[slot] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[slot] = k;
        push_compositions(remaining - k, slot + 1, current, out);
    }
    current[slot] = 0;
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn format_term(exponent: &[u32]) -> String {
    let factors: Vec<String> = exponent
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(l, &k)| {
            if k == 1 {
                format!("x{}", l + 1)
            } else {
                format!("x{}^{}", l + 1, k)
            }
        })
        .collect();
    if factors.is_empty() {
        "1".to_string()
    } else {
        factors.join("*")
    }
}

fn parse_term(name: &str, dim: usize) -> Result<Vec<u32>> {
    let bad = || Error::input(format!("malformed term name '{name}'"));
    let mut exponent = vec![0u32; dim];
    let name = name.trim();
    if name == "1" {
        return Ok(exponent);
    }
    for factor in name.split('*') {
        let rest = factor.strip_prefix('x').ok_or_else(bad)?;
        let (var, power) = match rest.split_once('^') {
            Some((v, p)) => (v, p.parse::<u32>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let var: usize = var.parse().map_err(|_| bad())?;
        if var == 0 || var > dim || power == 0 || exponent[var - 1] != 0 {
            return Err(bad());
        }
        exponent[var - 1] = power;
    }
    Ok(exponent)
}

#[derive(Serialize, Deserialize)]
struct BasisRepr {
    dim: usize,
    terms: Vec<String>,
}

impl TryFrom<BasisRepr> for MonomialBasis {
    type Error = Error;

    fn try_from(repr: BasisRepr) -> Result<Self> {
        MonomialBasis::from_term_names(repr.dim, &repr.terms)
    }
}

impl From<MonomialBasis> for BasisRepr {
    fn from(basis: MonomialBasis) -> Self {
        BasisRepr {
            dim: basis.dim,
            terms: basis.term_names(),
        }
    }
}

/// The library matrix: column `j` is monomial `j` evaluated on every row.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub theta: DMatrix<f64>,
    pub basis: MonomialBasis,
}

pub fn build_basis(dim: usize, max_degree: u32) -> Result<MonomialBasis> {
    MonomialBasis::new(dim, max_degree)
}

pub fn evaluate_library(states: &DMatrix<f64>, basis: &MonomialBasis) -> Result<DesignMatrix> {
    if states.ncols() != basis.dim() {
        return Err(Error::input(format!(
            "states have {} columns but the basis has dimension {}",
            states.ncols(),
            basis.dim()
        )));
    }
    let n = states.nrows();
    let mut theta = DMatrix::zeros(n, basis.len());
    let mut row = vec![0.0; basis.dim()];
    for i in 0..n {
        for (l, v) in row.iter_mut().enumerate() {
            *v = states[(i, l)];
        }
        for (j, value) in basis.evaluate_row(&row).into_iter().enumerate() {
            theta[(i, j)] = value;
        }
    }
    Ok(DesignMatrix {
        theta,
        basis: basis.clone(),
    })
}
