//! Final prompts built from diagnoses, retrieved triplets, and the input program.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::advisor::BottleneckDiagnosis;
use crate::error::ComposeError;
use crate::roi_store::RoiTriplet;
use crate::source::SourceUnit;
use crate::template::{fill, placeholders};

pub const MAX_EXAMPLES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Symbolic,
    Retrieval,
    Combined,
    InstructionOnly,
    Cot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub text: String,
}

/// Template text for every prompt family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub symbolic: String,
    pub retrieval: String,
    pub retrieval_example: String,
    pub retrieval_example_plain: String,
    pub combined: String,
    pub instruction_only: String,
    pub cot: String,
}

/// File name and required placeholders of each template.
const LAYOUT: [(&str, &[&str]); 7] = [
    ("symbolic.txt", &["explanations", "src_code"]),
    ("retrieval.txt", &["examples", "src_code"]),
    ("retrieval_example.txt", &["index", "slow_code", "fast_code", "optimization_instruction"]),
    ("retrieval_example_plain.txt", &["index", "slow_code", "fast_code"]),
    ("combined.txt", &["explanations", "examples", "src_code"]),
    ("instruction_only.txt", &["src_code"]),
    ("cot.txt", &["src_code"]),
];

impl PromptTemplates {
    pub fn builtin() -> &'static PromptTemplates {
        static BUILTIN: OnceLock<PromptTemplates> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            PromptTemplates::from_texts([
                include_str!("../assets/prompts/symbolic.txt"),
                include_str!("../assets/prompts/retrieval.txt"),
                include_str!("../assets/prompts/retrieval_example.txt"),
                include_str!("../assets/prompts/retrieval_example_plain.txt"),
                include_str!("../assets/prompts/combined.txt"),
                include_str!("../assets/prompts/instruction_only.txt"),
                include_str!("../assets/prompts/cot.txt"),
            ])
            .expect("builtin templates are valid")
        })
    }

    /// Reads the template files from `dir`; see the asset directory for names.
    pub fn load(dir: &Path) -> Result<PromptTemplates, ComposeError> {
        let mut texts = Vec::with_capacity(LAYOUT.len());
        for (name, _) in LAYOUT {
            let path = dir.join(name);
            texts.push(std::fs::read_to_string(&path).map_err(|source| ComposeError::Io { path, source })?);
        }
        let texts: [String; 7] = texts.try_into().expect("one text per layout entry");
        PromptTemplates::from_texts(texts.each_ref().map(String::as_str))
    }

    fn from_texts(t: [&str; 7]) -> Result<PromptTemplates, ComposeError> {
        for ((name, required), text) in LAYOUT.iter().zip(t) {
            let found = placeholders(text);
            if let Some(missing) = required.iter().find(|p| !found.contains(p)) {
                return Err(ComposeError::BadTemplate { name: name.to_string(), placeholder: missing.to_string() });
            }
        }
        Ok(PromptTemplates {
            symbolic: t[0].into(),
            retrieval: t[1].into(),
            retrieval_example: t[2].into(),
            retrieval_example_plain: t[3].into(),
            combined: t[4].into(),
            instruction_only: t[5].into(),
            cot: t[6].into(),
        })
    }

    pub fn compose_symbolic(&self, diagnoses: &[BottleneckDiagnosis], src: &SourceUnit) -> PromptBundle {
        let text =
            fill(&self.symbolic, &[("explanations", &explanations(diagnoses)), ("src_code", &source_block(src))]);
        PromptBundle { kind: PromptKind::Symbolic, text }
    }

    /// Retrieval prompt with each example's instruction in brackets.
    pub fn compose_retrieval(&self, triplets: &[&RoiTriplet], src: &SourceUnit) -> Result<PromptBundle, ComposeError> {
        self.retrieval_prompt(triplets, src, true)
    }

    /// Retrieval prompt with code examples only, as plain few-shot baselines use.
    pub fn compose_retrieval_baseline(
        &self,
        triplets: &[&RoiTriplet],
        src: &SourceUnit,
    ) -> Result<PromptBundle, ComposeError> {
        self.retrieval_prompt(triplets, src, false)
    }

    fn retrieval_prompt(
        &self,
        triplets: &[&RoiTriplet],
        src: &SourceUnit,
        instructions: bool,
    ) -> Result<PromptBundle, ComposeError> {
        check_examples(triplets)?;
        let examples = self.examples(triplets, instructions);
        let text = fill(&self.retrieval, &[("examples", &examples), ("src_code", &source_block(src))]);
        Ok(PromptBundle { kind: PromptKind::Retrieval, text })
    }

    /// Explanations and examples in one prompt with the source once, at the
    /// end. Falls back to the single-part prompt when one side is empty.
    pub fn compose_combined(
        &self,
        diagnoses: &[BottleneckDiagnosis],
        triplets: &[&RoiTriplet],
        src: &SourceUnit,
    ) -> Result<PromptBundle, ComposeError> {
        if triplets.is_empty() {
            return Ok(self.compose_symbolic(diagnoses, src));
        }
        if diagnoses.is_empty() {
            return self.compose_retrieval(triplets, src);
        }
        check_examples(triplets)?;
        let text = fill(
            &self.combined,
            &[
                ("explanations", &explanations(diagnoses)),
                ("examples", &self.examples(triplets, true)),
                ("src_code", &source_block(src)),
            ],
        );
        Ok(PromptBundle { kind: PromptKind::Combined, text })
    }

    /// `InstructionOnly` or `Cot`; other kinds need diagnoses or examples.
    pub fn compose_baseline(&self, kind: PromptKind, src: &SourceUnit) -> PromptBundle {
        let template = match kind {
            PromptKind::Cot => &self.cot,
            PromptKind::InstructionOnly => &self.instruction_only,
            other => panic!("{other:?} is not a baseline prompt kind"),
        };
        PromptBundle { kind, text: fill(template, &[("src_code", &source_block(src))]) }
    }

    fn examples(&self, triplets: &[&RoiTriplet], instructions: bool) -> String {
        let template = if instructions { &self.retrieval_example } else { &self.retrieval_example_plain };
        triplets
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let index = (i + 1).to_string();
                let instruction = t.instruction.text();
                fill(
                    template,
                    &[
                        ("index", &index),
                        ("slow_code", t.pair.slow.text()),
                        ("fast_code", t.pair.fast.text()),
                        ("optimization_instruction", &instruction),
                    ],
                )
            })
            .collect()
    }
}

fn check_examples(triplets: &[&RoiTriplet]) -> Result<(), ComposeError> {
    match triplets.len() {
        0 => Err(ComposeError::NoExamples),
        n if n > MAX_EXAMPLES => Err(ComposeError::TooManyExamples(n)),
        _ => Ok(()),
    }
}

fn explanations(diagnoses: &[BottleneckDiagnosis]) -> String {
    diagnoses.iter().enumerate().map(|(i, d)| format!("{}. {}", i + 1, d.text)).collect::<Vec<_>>().join("\n")
}

/// The source without trailing newlines, fenced when a line of it could be
/// read as a prompt section header or code fence.
pub fn source_block(src: &SourceUnit) -> String {
    let text = src.text().trim_end_matches(['\n', '\r']);
    let collides = text.lines().any(|l| {
        let l = l.trim_start();
        l.starts_with("###") || l.starts_with("```")
    });
    if !collides {
        return text.to_string();
    }
    let longest = text.split(|c| c != '`').map(str::len).max().unwrap_or(0);
    let fence = "`".repeat(longest.max(2) + 1);
    format!("{fence}cpp\n{text}\n{fence}")
}

pub fn compose_symbolic(diagnoses: &[BottleneckDiagnosis], src: &SourceUnit) -> PromptBundle {
    PromptTemplates::builtin().compose_symbolic(diagnoses, src)
}

pub fn compose_retrieval(triplets: &[&RoiTriplet], src: &SourceUnit) -> Result<PromptBundle, ComposeError> {
    PromptTemplates::builtin().compose_retrieval(triplets, src)
}

pub fn compose_retrieval_baseline(triplets: &[&RoiTriplet], src: &SourceUnit) -> Result<PromptBundle, ComposeError> {
    PromptTemplates::builtin().compose_retrieval_baseline(triplets, src)
}

pub fn compose_combined(
    diagnoses: &[BottleneckDiagnosis],
    triplets: &[&RoiTriplet],
    src: &SourceUnit,
) -> Result<PromptBundle, ComposeError> {
    PromptTemplates::builtin().compose_combined(diagnoses, triplets, src)
}

pub fn compose_baseline(kind: PromptKind, src: &SourceUnit) -> PromptBundle {
    PromptTemplates::builtin().compose_baseline(kind, src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::{advise, AdviseOptions, Category, RuleSet};
    use crate::roi_store::{parse_instruction, CodePair};

    fn src(text: &str) -> SourceUnit {
        SourceUnit::new(text).unwrap()
    }

    fn triplet(id: &str, instruction: &str) -> RoiTriplet {
        RoiTriplet {
            pair: CodePair::new(id, "p", &format!("slow {id}\n"), &format!("fast {id}\n")).unwrap(),
            instruction: parse_instruction(instruction, "</think>"),
            embedding: None,
        }
    }

    fn diag(text: &str) -> BottleneckDiagnosis {
        BottleneckDiagnosis {
            rule_id: "X".into(),
            category: Category::LoopStructure,
            entities: vec![],
            text: text.into(),
        }
    }

    #[test]
    fn symbolic_numbers_diagnoses() {
        let fib = src(include_str!("../tests/fixtures/snippets/recursion_slow.cpp"));
        let d = advise(&fib, &RuleSet::builtin(), AdviseOptions::default()).unwrap().diagnoses;
        let p = compose_symbolic(&d, &fib);
        assert_eq!(p.kind, PromptKind::Symbolic);
        assert!(p.text.contains("### Explanation:\n1. The following methods are purely recursive"));
        let two = compose_symbolic(&[diag("a"), diag("b")], &fib);
        assert!(two.text.contains("### Explanation:\n1. a\n2. b\n\n### Original code:"));
        let none = compose_symbolic(&[], &fib);
        assert!(none.text.contains("### Explanation:\n\n\n### Original code:\n"));
        assert_eq!(none.text.matches(fib.text()).count(), 1);
    }

    #[test]
    fn retrieval_sections_follow_example_count() {
        let (a, b, c) = (triplet("a", "ia"), triplet("b", "ib"), triplet("c", "ic"));
        let s = src("int main(){}\n");
        let one = compose_retrieval(&[&a], &s).unwrap().text;
        assert!(one.contains("### Original Example Code1:\n```slow a\n```"));
        assert!(!one.contains("Code2"));
        let two = compose_retrieval(&[&a, &b], &s).unwrap().text;
        assert!(two.contains("[ia]\n\n\n### Original Example Code2:\n```slow b\n```"));
        assert!(two.contains("[ib]\n\n\nNow, optimize the following code."));
        assert!(matches!(compose_retrieval(&[&a, &b, &c], &s), Err(ComposeError::TooManyExamples(3))));
        assert!(matches!(compose_retrieval(&[], &s), Err(ComposeError::NoExamples)));
        let plain = compose_retrieval_baseline(&[&a, &b], &s).unwrap().text;
        assert!(!plain.contains("[ia]") && !plain.contains("[ib]"));
        assert!(plain.contains("```fast a\n```\n\n\n### Original Example Code2:"));
    }

    #[test]
    fn combined_degenerates_to_single_parts() {
        let s = src("int main(){}\n");
        let a = triplet("a", "ia");
        let d = [diag("tip")];
        assert_eq!(compose_combined(&[], &[&a], &s).unwrap(), compose_retrieval(&[&a], &s).unwrap());
        assert_eq!(compose_combined(&d, &[], &s).unwrap(), compose_symbolic(&d, &s));
        let both = compose_combined(&d, &[&a], &s).unwrap();
        assert_eq!(both.kind, PromptKind::Combined);
        assert_eq!(both.text.matches("int main(){}").count(), 1);
        assert!(both.text.ends_with("### Original Code:\nint main(){}\n\n### Optimized Code:"));
    }

    #[test]
    fn baselines_differ_by_system_line() {
        let s = src("int main(){}\n");
        let cot = compose_baseline(PromptKind::Cot, &s).text;
        let plain = compose_baseline(PromptKind::InstructionOnly, &s).text;
        assert!(cot.starts_with("[You are a software developer and now you will help to improve code efficiency."));
        assert!(plain.starts_with("Optimize the program and provide a more efficient version."));
        assert!(cot.ends_with(&plain));
        for p in [&cot, &plain] {
            assert!(p.ends_with("### Optimized Code:"));
        }
    }

    #[test]
    fn source_with_placeholders_is_inserted_verbatim() {
        let s = src("// {src_code} {explanations}\nint main(){}\n");
        let p = compose_symbolic(&[diag("{src_code}")], &s).text;
        assert_eq!(p.matches("// {src_code} {explanations}\n").count(), 1);
        assert!(p.contains("1. {src_code}\n"));
    }

    #[test]
    fn colliding_source_is_fenced() {
        let s = src("int main(){}\n/*\n### Optimized Code:\n``` */\n");
        let block = source_block(&s);
        assert!(block.starts_with("````cpp\n") && block.ends_with("\n````"));
        let p = compose_baseline(PromptKind::InstructionOnly, &s).text;
        assert!(p.ends_with("\n````\n\n### Optimized Code:"));
        assert_eq!(source_block(&src("int x;\n\n")), "int x;");
    }

    #[test]
    fn templates_load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/prompts");
        for (name, _) in LAYOUT {
            std::fs::copy(root.join(name), dir.path().join(name)).unwrap();
        }
        assert_eq!(&PromptTemplates::load(dir.path()).unwrap(), PromptTemplates::builtin());
        std::fs::write(dir.path().join("cot.txt"), "no slot").unwrap();
        assert!(matches!(
            PromptTemplates::load(dir.path()),
            Err(ComposeError::BadTemplate { placeholder, .. }) if placeholder == "src_code"
        ));
        std::fs::remove_file(dir.path().join("cot.txt")).unwrap();
        assert!(matches!(PromptTemplates::load(dir.path()), Err(ComposeError::Io { .. })));
    }
}
