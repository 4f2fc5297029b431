//! Reduction from 3SAT to the tag-selection feasibility problem.
//!
//! Each variable contributes a tag pair; category one holds one two-tag item
//! per variable, category two one three-tag item per clause (the tag of each
//! literal). Feasibility asks for two disjoint tag sets, the first hitting
//! every category-one item and the second every category-two item. The
//! search here is a plain exhaustive assignment of tags to either side or
//! neither, which is exact at small variable counts.

use std::fmt;

use crate::error::{Error, Result};

/// A literal over variable `var` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Literal {
    pub var: usize,
    pub negated: bool,
}

/// Exactly three literals.
pub type Clause = [Literal; 3];

/// A tag: the positive or negative marker of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tag {
    pub var: usize,
    pub negated: bool,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // One-based to match conventional variable numbering.
        write!(f, "{}{}", if self.negated { 'b' } else { 'a' }, self.var + 1)
    }
}

/// The reduced instance: tag sets per item, split into two categories.
#[derive(Debug, Clone)]
pub struct ClbInstance {
    num_vars: usize,
    category_one: Vec<Vec<Tag>>,
    category_two: Vec<Vec<Tag>>,
}

/// Disjoint tag selections hitting every item of their category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClbCertificate {
    pub category_one_tags: Vec<Tag>,
    pub category_two_tags: Vec<Tag>,
}

/// Builds the tag-selection instance from a 3SAT formula.
pub fn from_3sat(clauses: &[Clause]) -> Result<ClbInstance> {
    if clauses.is_empty() {
        return Err(Error::InvalidParam {
            what: "clauses".into(),
            message: "formula must have at least one clause".into(),
        });
    }
    let num_vars = clauses
        .iter()
        .flatten()
        .map(|l| l.var + 1)
        .max()
        .unwrap_or(0);
    let category_one: Vec<Vec<Tag>> = (0..num_vars)
        .map(|var| {
            vec![
                Tag { var, negated: false },
                Tag { var, negated: true },
            ]
        })
        .collect();
    let category_two: Vec<Vec<Tag>> = clauses
        .iter()
        .map(|clause| {
            clause
                .iter()
                .map(|l| Tag {
                    var: l.var,
                    negated: l.negated,
                })
                .collect()
        })
        .collect();
    Ok(ClbInstance {
        num_vars,
        category_one,
        category_two,
    })
}

impl ClbInstance {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_tags(&self) -> usize {
        2 * self.num_vars
    }

    pub fn category_one(&self) -> &[Vec<Tag>] {
        &self.category_one
    }

    pub fn category_two(&self) -> &[Vec<Tag>] {
        &self.category_two
    }

    /// Exhaustive feasibility check over tag selections for side two.
    ///
    /// Hitting conditions are monotone in the selected set, so whenever a
    /// disjoint pair of sides exists, taking the entire complement of side
    /// two as side one also works. Enumerating side-two subsets is therefore
    /// complete. Only viable at small variable counts.
    pub fn feasible(&self) -> Option<ClbCertificate> {
        let n = self.num_tags();
        assert!(n <= 24, "exhaustive tag-selection check caps at 12 variables");
        let tag_bit = |t: &Tag| 1u32 << (2 * t.var + t.negated as usize);
        let item_mask =
            |item: &Vec<Tag>| item.iter().map(&tag_bit).fold(0u32, |acc, b| acc | b);
        let c1_masks: Vec<u32> = self.category_one.iter().map(&item_mask).collect();
        let c2_masks: Vec<u32> = self.category_two.iter().map(&item_mask).collect();
        let universe = (1u32 << n) - 1;

        for side_two in 0..=universe {
            if !c2_masks.iter().all(|&m| m & side_two != 0) {
                continue;
            }
            let side_one = !side_two & universe;
            if c1_masks.iter().all(|&m| m & side_one != 0) {
                let tags_of = |mask: u32| {
                    (0..n)
                        .filter(|&i| mask & (1 << i) != 0)
                        .map(|i| Tag {
                            var: i / 2,
                            negated: i % 2 == 1,
                        })
                        .collect()
                };
                return Some(ClbCertificate {
                    category_one_tags: tags_of(side_one),
                    category_two_tags: tags_of(side_two),
                });
            }
        }
        None
    }
}

/// Parses DIMACS CNF, requiring exactly three literals per clause.
pub fn parse_dimacs(src: &str) -> Result<Vec<Clause>> {
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    for (lineno, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('p') || line.starts_with('%')
        {
            continue;
        }
        for token in line.split_whitespace() {
            let value: i64 = token.parse().map_err(|e| Error::Parse {
                what: format!("dimacs line {}", lineno + 1),
                message: format!("`{token}`: {e}"),
            })?;
            if value == 0 {
                if current.len() != 3 {
                    return Err(Error::Parse {
                        what: format!("dimacs line {}", lineno + 1),
                        message: format!("clause has {} literals, need exactly 3", current.len()),
                    });
                }
                clauses.push([current[0], current[1], current[2]]);
                current.clear();
            } else {
                current.push(Literal {
                    var: (value.unsigned_abs() as usize) - 1,
                    negated: value < 0,
                });
            }
        }
    }
    if !current.is_empty() {
        return Err(Error::Parse {
            what: "dimacs".into(),
            message: "unterminated clause at end of input".into(),
        });
    }
    Ok(clauses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(v: i64) -> Literal {
        Literal {
            var: (v.unsigned_abs() as usize) - 1,
            negated: v < 0,
        }
    }

    fn clause(a: i64, b: i64, c: i64) -> Clause {
        [lit(a), lit(b), lit(c)]
    }

    #[test]
    fn construction_matches_hand_worked_example() {
        // (x1 or x2 or not x3)
        let inst = from_3sat(&[clause(1, 2, -3)]).unwrap();
        assert_eq!(inst.num_vars(), 3);
        assert_eq!(inst.category_one().len(), 3);
        for (var, item) in inst.category_one().iter().enumerate() {
            assert_eq!(
                item,
                &vec![
                    Tag { var, negated: false },
                    Tag { var, negated: true }
                ]
            );
        }
        assert_eq!(
            inst.category_two(),
            &[vec![
                Tag { var: 0, negated: false },
                Tag { var: 1, negated: false },
                Tag { var: 2, negated: true },
            ]]
        );
        // Item tag sets never exceed three tags.
        for item in inst.category_one().iter().chain(inst.category_two()) {
            assert!(item.len() <= 3);
        }
    }

    #[test]
    fn satisfiable_formula_is_feasible() {
        let inst = from_3sat(&[clause(1, 2, 3), clause(-1, 2, -3)]).unwrap();
        let cert = inst.feasible().expect("satisfiable formula");
        // Desired structure: the two sides are disjoint.
        for t in &cert.category_one_tags {
            assert!(!cert.category_two_tags.contains(t));
        }
    }

    #[test]
    fn all_eight_clauses_is_infeasible() {
        // Every sign combination over three variables: unsatisfiable.
        let mut clauses = Vec::new();
        for s1 in [1i64, -1] {
            for s2 in [1i64, -1] {
                for s3 in [1i64, -1] {
                    clauses.push(clause(s1, s2 * 2, s3 * 3));
                }
            }
        }
        let inst = from_3sat(&clauses).unwrap();
        assert!(inst.feasible().is_none());
    }

    #[test]
    fn dimacs_round() {
        let src = "c sample\np cnf 3 2\n1 2 -3 0\n-1 -2 3 0\n";
        let clauses = parse_dimacs(src).unwrap();
        assert_eq!(clauses.len(), 2);
        assert_eq!(clauses[0], clause(1, 2, -3));
        assert_eq!(clauses[1], clause(-1, -2, 3));
    }

    #[test]
    fn dimacs_rejects_non_three_literal_clause() {
        assert!(parse_dimacs("p cnf 2 1\n1 -2 0\n").is_err());
        assert!(parse_dimacs("p cnf 2 1\n1 -2 2 1 0\n").is_err());
        assert!(parse_dimacs("1 2\n").is_err());
    }

    #[test]
    fn tag_display() {
        assert_eq!(Tag { var: 0, negated: false }.to_string(), "a1");
        assert_eq!(Tag { var: 2, negated: true }.to_string(), "b3");
    }
}
