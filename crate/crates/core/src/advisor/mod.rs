//! Rule engine that turns graph patterns into bottleneck diagnoses.

mod detectors;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpg::{build_cpg_with, BuildOptions, CodePropertyGraph, Skip};
use crate::error::AdvisorError;
use crate::source::{LineSpan, SourceUnit};
use crate::template::{fill, placeholders};

pub use detectors::{
    detect_loop_invariant_calls, detect_recursion_without_memoization, detect_slow_calls,
    detect_static_replaceable_container,
};

const DEFAULT_RULES: &str = include_str!("../../assets/rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    InefficientAlgorithm,
    DataStructureUsage,
    LibraryUsage,
    LoopStructure,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::InefficientAlgorithm, Category::DataStructureUsage, Category::LibraryUsage, Category::LoopStructure];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::InefficientAlgorithm => "InefficientAlgorithm",
            Category::DataStructureUsage => "DataStructureUsage",
            Category::LibraryUsage => "LibraryUsage",
            Category::LoopStructure => "LoopStructure",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Detector {
    RecursionWithoutMemoization,
    StaticReplaceableContainer {
        containers: Vec<String>,
        allowed_ops: Vec<String>,
    },
    SlowCalls {
        calls: Vec<String>,
        /// Any of these calls anywhere in the program suppresses the rule.
        #[serde(default)]
        unless_calls: Vec<String>,
        /// Only flag calls whose argument at this index has integral type.
        #[serde(default)]
        integral_arg: Option<usize>,
    },
    LoopInvariantCalls {
        hoistable: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTemplatePair {
    #[serde(rename = "id")]
    pub rule_id: String,
    pub category: Category,
    pub template: String,
    pub detector: Detector,
}

impl RuleTemplatePair {
    pub fn detect(&self, g: &CodePropertyGraph) -> Vec<RuleMatch> {
        let entities = match &self.detector {
            Detector::RecursionWithoutMemoization => detect_recursion_without_memoization(g),
            Detector::StaticReplaceableContainer { containers, allowed_ops } => {
                detect_static_replaceable_container(g, containers, allowed_ops)
            }
            Detector::SlowCalls { calls, unless_calls, integral_arg } => {
                detect_slow_calls(g, calls, unless_calls, *integral_arg)
            }
            Detector::LoopInvariantCalls { hoistable } => detect_loop_invariant_calls(g, hoistable),
        };
        entities.into_iter().map(|e| RuleMatch { rule_id: self.rule_id.clone(), entities: vec![e] }).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RuleFile {
    version: u32,
    #[serde(default)]
    rule: Vec<RuleTemplatePair>,
}

/// A validated, versioned collection of rules sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<RuleTemplatePair>,
}

impl RuleSet {
    pub const VERSION: u32 = 1;

    pub fn builtin() -> Self {
        RuleSet::from_toml(DEFAULT_RULES).expect("bundled rule set is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, AdvisorError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| AdvisorError::InvalidRuleSet(e.to_string()))?;
        if file.version != Self::VERSION {
            return Err(AdvisorError::InvalidRuleSet(format!(
                "unsupported rule set version {} (expected {})",
                file.version,
                Self::VERSION
            )));
        }
        RuleSet::new(file.rule)
    }

    pub fn load(path: &Path) -> Result<Self, AdvisorError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| AdvisorError::Io { path: path.to_path_buf(), source })?;
        RuleSet::from_toml(&text)
    }

    pub fn new(mut rules: Vec<RuleTemplatePair>) -> Result<Self, AdvisorError> {
        let mut seen = BTreeSet::new();
        for r in &rules {
            if !seen.insert(r.rule_id.clone()) {
                return Err(AdvisorError::InvalidRuleSet(format!("duplicate rule id `{}`", r.rule_id)));
            }
            check_template(&r.template)?;
        }
        rules.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[RuleTemplatePair] {
        &self.rules
    }

    pub fn get(&self, rule_id: &str) -> Option<&RuleTemplatePair> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    /// Keeps only the listed rule ids.
    pub fn subset(&self, ids: &[&str]) -> RuleSet {
        RuleSet { rules: self.rules.iter().filter(|r| ids.contains(&r.rule_id.as_str())).cloned().collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Method,
    Variable,
    Call,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Method => "method",
            EntityKind::Variable => "variable",
            EntityKind::Call => "call",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub kind: EntityKind,
    pub name: String,
    pub span: LineSpan,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}: {}, lines: {}}}", self.kind.as_str(), self.name, self.span)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub rule_id: String,
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BottleneckDiagnosis {
    pub rule_id: String,
    pub category: Category,
    pub entities: Vec<Entity>,
    pub text: String,
}

fn check_template(template: &str) -> Result<(), AdvisorError> {
    let found = placeholders(template);
    if let Some(unknown) = found.iter().find(|p| **p != "entities") {
        return Err(AdvisorError::MissingPlaceholder(unknown.to_string()));
    }
    if found.is_empty() {
        return Err(AdvisorError::MissingPlaceholder("entities".into()));
    }
    Ok(())
}

/// Fills a rule's template with the entities of `m`.
pub fn instantiate(rule: &RuleTemplatePair, m: &RuleMatch) -> Result<BottleneckDiagnosis, AdvisorError> {
    if m.entities.is_empty() {
        return Err(AdvisorError::EmptyMatch(m.rule_id.clone()));
    }
    check_template(&rule.template)?;
    let rendered = m.entities.iter().map(Entity::to_string).collect::<Vec<_>>().join(", ");
    Ok(BottleneckDiagnosis {
        rule_id: rule.rule_id.clone(),
        category: rule.category,
        entities: m.entities.clone(),
        text: fill(&rule.template, &[("entities", &rendered)]),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdviseOptions {
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Advice {
    pub diagnoses: Vec<BottleneckDiagnosis>,
    /// Per-entity matches before merging, in diagnosis order.
    pub matches: Vec<RuleMatch>,
    pub warnings: Vec<Skip>,
}

/// Runs every rule and merges each rule's matches into one diagnosis.
pub fn advise(src: &SourceUnit, rules: &RuleSet, opts: AdviseOptions) -> Result<Advice, AdvisorError> {
    let g = build_cpg_with(src, BuildOptions { strict: opts.strict })?;
    advise_graph(&g, rules)
}

pub fn advise_graph(g: &CodePropertyGraph, rules: &RuleSet) -> Result<Advice, AdvisorError> {
    let mut diagnoses = Vec::new();
    let mut all_matches = Vec::new();
    for rule in rules.rules() {
        let mut matches = rule.detect(g);
        if matches.is_empty() {
            continue;
        }
        matches.sort_by(|a, b| a.entities.cmp(&b.entities));
        matches.sort_by_key(|m| m.entities[0].span.start_line);
        let merged = RuleMatch {
            rule_id: rule.rule_id.clone(),
            entities: matches.iter().flat_map(|m| m.entities.iter().cloned()).collect(),
        };
        diagnoses.push(instantiate(rule, &merged)?);
        all_matches.extend(matches);
    }
    diagnoses.sort_by(|a, b| {
        (a.rule_id.as_str(), a.entities[0].span.start_line).cmp(&(b.rule_id.as_str(), b.entities[0].span.start_line))
    });
    Ok(Advice { diagnoses, matches: all_matches, warnings: g.warnings().to_vec() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub counts: BTreeMap<Category, usize>,
    pub units: usize,
    /// Units that could not be analyzed, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Match counts per category over a corpus; unparseable units are skipped.
pub fn bottleneck_histogram(corpus: &[SourceUnit], rules: &RuleSet) -> Histogram {
    let results: Vec<Result<Vec<RuleMatch>, String>> = corpus
        .par_iter()
        .map(|unit| {
            let g = build_cpg_with(unit, BuildOptions::default()).map_err(|e| e.to_string())?;
            Ok(rules.rules().iter().flat_map(|r| r.detect(&g)).collect())
        })
        .collect();
    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    let mut skipped = Vec::new();
    for (unit, result) in corpus.iter().zip(results) {
        match result {
            Ok(matches) => {
                for m in matches {
                    let category = rules.get(&m.rule_id).expect("match from known rule").category;
                    *counts.entry(category).or_default() += 1;
                }
            }
            Err(e) => skipped.push((unit.label().to_string(), e)),
        }
    }
    Histogram { counts, units: corpus.len(), skipped }
}

/// True iff `rule_id` no longer matches anything in `optimized`.
pub fn check_resolved(rules: &RuleSet, rule_id: &str, optimized: &SourceUnit) -> Result<bool, AdvisorError> {
    let rule = rules.get(rule_id).ok_or_else(|| AdvisorError::UnknownRule(rule_id.to_string()))?;
    let g = build_cpg_with(optimized, BuildOptions::default())?;
    Ok(rule.detect(&g).is_empty())
}

#[cfg(test)]
mod tests;
