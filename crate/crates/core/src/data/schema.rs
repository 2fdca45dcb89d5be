//! Dataset description files.
//!
//! A schema is plain line-oriented text that names the label column, the
//! optional prediction column, the feature columns, and the group
//! definitions. Groups are predicates over numeric columns:
//!
//! ```text
//! # lines starting with # are comments
//! label = approved
//! prediction = score
//! features = age, income, tenure
//! group senior true: age >= 65
//! group senior proxy err=0.02: age_reported >= 65
//! ```
//!
//! A predicate is one or more `column op constant` clauses joined by `and`,
//! with `op` one of `=`, `!=`, `>`, `>=`, `<`, `<=`. Cells referenced by
//! predicates must parse as numbers. Every group needs a `proxy` definition;
//! a `true` definition is optional and, when present with no declared
//! `err=`, the proxy error rate is measured from the two masks.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Gt,
    Ge,
    Lt,
    Le,
}

impl CmpOp {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "=" => Some(CmpOp::Eq),
            "!=" => Some(CmpOp::Ne),
            ">" => Some(CmpOp::Gt),
            ">=" => Some(CmpOp::Ge),
            "<" => Some(CmpOp::Lt),
            "<=" => Some(CmpOp::Le),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }

    pub fn eval(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub column: String,
    pub op: CmpOp,
    pub value: f64,
}

/// Conjunction of comparison clauses.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub clauses: Vec<Clause>,
}

impl Predicate {
    fn parse(line: usize, text: &str) -> Result<Self> {
        let err = |reason: String| Error::Config { line, reason };
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(err("empty predicate".into()));
        }
        let mut clauses = Vec::new();
        let mut pos = 0;
        loop {
            if pos + 3 > tokens.len() {
                return Err(err(format!(
                    "predicate needs `column op constant` clauses, got {text:?}"
                )));
            }
            let op = CmpOp::parse(tokens[pos + 1])
                .ok_or_else(|| err(format!("unknown operator {:?}", tokens[pos + 1])))?;
            let value: f64 = tokens[pos + 2]
                .parse()
                .map_err(|_| err(format!("bad constant {:?}", tokens[pos + 2])))?;
            clauses.push(Clause {
                column: tokens[pos].to_string(),
                op,
                value,
            });
            pos += 3;
            if pos == tokens.len() {
                break;
            }
            if tokens[pos] != "and" {
                return Err(err(format!("expected `and`, got {:?}", tokens[pos])));
            }
            pos += 1;
        }
        Ok(Self { clauses })
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.clauses.iter().map(|c| c.column.as_str())
    }

    fn to_config(&self) -> String {
        self.clauses
            .iter()
            .map(|c| format!("{} {} {}", c.column, c.op.token(), c.value))
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupRole {
    True,
    Proxy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupDef {
    pub name: String,
    pub role: GroupRole,
    pub declared_err: Option<f64>,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub label_column: String,
    pub prediction_column: Option<String>,
    pub feature_columns: Vec<String>,
    pub groups: Vec<GroupDef>,
}

impl DatasetSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut label = None;
        let mut prediction = None;
        let mut features = Vec::new();
        let mut groups: Vec<GroupDef> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Config {
                line: lineno,
                reason,
            };
            if let Some(rest) = line.strip_prefix("group ") {
                groups.push(Self::parse_group(lineno, rest)?);
            } else if let Some((key, value)) = line.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                match key {
                    "label" => label = Some(value.to_string()),
                    "prediction" => prediction = Some(value.to_string()),
                    "features" => {
                        features = value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect();
                    }
                    other => return Err(err(format!("unknown key {other:?}"))),
                }
            } else {
                return Err(err(format!("unparseable line {line:?}")));
            }
        }
        let schema = Self {
            label_column: label.ok_or(Error::Config {
                line: 0,
                reason: "missing `label = <column>`".into(),
            })?,
            prediction_column: prediction,
            feature_columns: features,
            groups,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn parse_group(lineno: usize, rest: &str) -> Result<GroupDef> {
        let err = |reason: String| Error::Config {
            line: lineno,
            reason,
        };
        let (head, predicate_text) = rest
            .split_once(':')
            .ok_or_else(|| err("group line needs `: <predicate>`".into()))?;
        let tokens: Vec<&str> = head.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(err("group line needs `<name> <true|proxy>`".into()));
        }
        let name = tokens[0].to_string();
        let role = match tokens[1] {
            "true" => GroupRole::True,
            "proxy" => GroupRole::Proxy,
            other => return Err(err(format!("group role must be true or proxy, got {other:?}"))),
        };
        let mut declared_err = None;
        for extra in &tokens[2..] {
            if let Some(v) = extra.strip_prefix("err=") {
                if role == GroupRole::True {
                    return Err(err("err= belongs on the proxy definition".into()));
                }
                let e: f64 = v
                    .parse()
                    .map_err(|_| err(format!("bad error rate {v:?}")))?;
                if !(0.0..=1.0).contains(&e) {
                    return Err(err(format!("error rate {e} is not in [0, 1]")));
                }
                declared_err = Some(e);
            } else {
                return Err(err(format!("unexpected token {extra:?}")));
            }
        }
        Ok(GroupDef {
            name,
            role,
            declared_err,
            predicate: Predicate::parse(lineno, predicate_text)?,
        })
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for g in &self.groups {
            if !seen.insert((g.name.clone(), g.role)) {
                return Err(Error::Config {
                    line: 0,
                    reason: format!("group {:?} defined twice for the same role", g.name),
                });
            }
        }
        for g in &self.groups {
            if g.role == GroupRole::True
                && !self
                    .groups
                    .iter()
                    .any(|o| o.name == g.name && o.role == GroupRole::Proxy)
            {
                return Err(Error::Config {
                    line: 0,
                    reason: format!(
                        "group {:?} has a true definition but no proxy definition",
                        g.name
                    ),
                });
            }
        }
        Ok(())
    }

    /// Unique group names in first-appearance order.
    pub fn group_names(&self) -> Vec<&str> {
        let mut names = Vec::new();
        for g in &self.groups {
            if !names.contains(&g.name.as_str()) {
                names.push(g.name.as_str());
            }
        }
        names
    }

    pub fn def(&self, name: &str, role: GroupRole) -> Option<&GroupDef> {
        self.groups.iter().find(|g| g.name == name && g.role == role)
    }

    /// Regenerate config text that parses back to this schema.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("label = {}\n", self.label_column));
        if let Some(p) = &self.prediction_column {
            out.push_str(&format!("prediction = {p}\n"));
        }
        if !self.feature_columns.is_empty() {
            out.push_str(&format!("features = {}\n", self.feature_columns.join(", ")));
        }
        for g in &self.groups {
            let role = match g.role {
                GroupRole::True => "true",
                GroupRole::Proxy => "proxy",
            };
            let err = g
                .declared_err
                .map(|e| format!(" err={e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "group {} {role}{err}: {}\n",
                g.name,
                g.predicate.to_config()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# demo schema
label = approved
prediction = score
features = age, income

group senior true: age >= 65
group senior proxy err=0.02: age_reported >= 65
group dual proxy: flag = 1 and income < 40000
";

    #[test]
    fn parses_full_schema() {
        let schema = DatasetSchema::parse(SAMPLE).unwrap();
        assert_eq!(schema.label_column, "approved");
        assert_eq!(schema.prediction_column.as_deref(), Some("score"));
        assert_eq!(schema.feature_columns, vec!["age", "income"]);
        assert_eq!(schema.group_names(), vec!["senior", "dual"]);
        let senior = schema.def("senior", GroupRole::Proxy).unwrap();
        assert_eq!(senior.declared_err, Some(0.02));
        let dual = schema.def("dual", GroupRole::Proxy).unwrap();
        assert_eq!(dual.predicate.clauses.len(), 2);
        assert_eq!(dual.predicate.clauses[1].op, CmpOp::Lt);
        assert!(schema.def("dual", GroupRole::True).is_none());
    }

    #[test]
    fn config_round_trips() {
        let schema = DatasetSchema::parse(SAMPLE).unwrap();
        let regenerated = schema.to_config();
        assert_eq!(DatasetSchema::parse(&regenerated).unwrap(), schema);
    }

    #[test]
    fn missing_label_is_an_error() {
        assert!(DatasetSchema::parse("prediction = score\n").is_err());
    }

    #[test]
    fn true_only_group_is_an_error() {
        let text = "label = y\ngroup g true: a = 1\n";
        let msg = DatasetSchema::parse(text).unwrap_err().to_string();
        assert!(msg.contains("no proxy definition"), "{msg}");
    }

    #[test]
    fn bad_lines_name_their_line_number() {
        let text = "label = y\ngroup g proxy: a ~ 1\n";
        match DatasetSchema::parse(text) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected: {other:?}"),
        }
        assert!(DatasetSchema::parse("label = y\nnonsense\n").is_err());
        assert!(DatasetSchema::parse("label = y\ngroup g true err=0.1: a = 1\ngroup g proxy: a = 1\n").is_err());
    }

    #[test]
    fn duplicate_role_rejected() {
        let text = "label = y\ngroup g proxy: a = 1\ngroup g proxy: b = 1\n";
        assert!(DatasetSchema::parse(text).is_err());
    }
}
