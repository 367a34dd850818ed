//! Prompt rendering for the three variation operators.
//!
//! Every prompt is assembled from up to five components: the task
//! description, the parent algorithm(s) (crossover and mutation only), an
//! operator-specific hint, the expected-output contract and optional extra
//! hints. The wording lives in plain-text templates; defaults are compiled
//! in and any of them can be overridden from a directory.
//!
//! Placeholder vocabulary:
//!
//! | template            | placeholders |
//! |---------------------|--------------|
//! | `init.txt`          | `task_description`, `expected_output`, `other_hints` |
//! | `crossover.txt`     | the above plus `parents`, `parent_count` |
//! | `mutation.txt`      | the above plus `parents`, `parent_count` |
//! | `parent.txt`        | `index`, `description`, `code`, `fence_language` |
//! | `expected_output.txt` | `function_name`, `input_count`, `input_names`, `input_meanings`, `output_name`, `output_meaning` |

mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Individual, IndividualId};
pub use template::Template;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("template {template} line {line}: {msg}")]
    Template {
        template: String,
        line: usize,
        msg: String,
    },
    #[error("parent {0} has no program text to show")]
    MissingParentProgram(IndividualId),
    #[error("parent {0} has an empty description")]
    MissingParentDescription(IndividualId),
    #[error("crossover needs at least one parent")]
    NoParents,
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("reading templates: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Init,
    Crossover,
    Mutation,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Init => "init",
            Operator::Crossover => "crossover",
            Operator::Mutation => "mutation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub meaning: String,
}

impl Parameter {
    pub fn new(name: &str, meaning: &str) -> Self {
        Parameter {
            name: name.to_string(),
            meaning: meaning.to_string(),
        }
    }
}

/// What the evolved function must do and look like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_description: String,
    pub function_name: String,
    pub inputs: Vec<Parameter>,
    pub output: Parameter,
    #[serde(default)]
    pub extra_hints: String,
}

impl TaskSpec {
    /// The constructive TSP next-node task.
    pub fn tsp_next_node() -> Self {
        TaskSpec {
            task_description: "Given a set of nodes with their coordinates, find the shortest route that \
                visits every node exactly once and returns to the starting node. The route is built \
                step by step: starting from the current node, an algorithm repeatedly chooses the next \
                node to visit. Your job is to design the algorithm that selects the next node at each step."
                .into(),
            function_name: "select_next_node".into(),
            inputs: vec![
                Parameter::new("current_node", "ID of the current node"),
                Parameter::new("destination_node", "ID of the destination node, where the route must end"),
                Parameter::new("unvisited_nodes", "list of IDs of the nodes not yet visited, in ascending order"),
                Parameter::new("distance_matrix", "2-D array where distance_matrix[i][j] is the distance between nodes i and j"),
            ],
            output: Parameter::new("next_node", "ID of the next node to visit, taken from unvisited_nodes"),
            extra_hints: "Do not give any explanation beyond the algorithm line and the code block, and keep code comments to a minimum."
                .into(),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |what: &str| {
            Err(PromptError::InvalidTask(format!(
                "{what} must be non-empty"
            )))
        };
        if self.function_name.trim().is_empty() {
            return bad("function_name");
        }
        if self.inputs.iter().any(|p| p.name.trim().is_empty()) {
            return bad("every input name");
        }
        if self.output.name.trim().is_empty() {
            return bad("output name");
        }
        Ok(())
    }
}

/// A rendered prompt ready for the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub operator: Operator,
    pub text: String,
    pub parent_ids: Vec<IndividualId>,
}

const OPERATOR_SLOTS: &[&str] = &[
    "task_description",
    "expected_output",
    "other_hints",
    "parents",
    "parent_count",
];
const PARENT_SLOTS: &[&str] = &["index", "description", "code", "fence_language"];
const OUTPUT_SLOTS: &[&str] = &[
    "function_name",
    "input_count",
    "input_names",
    "input_meanings",
    "output_name",
    "output_meaning",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub init: Template,
    pub crossover: Template,
    pub mutation: Template,
    pub parent: Template,
    pub expected_output: Template,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::from_sources(|_| None).expect("built-in templates are valid")
    }
}

impl TemplateSet {
    /// Loads `init.txt`, `crossover.txt`, `mutation.txt`, `parent.txt` and
    /// `expected_output.txt` from `dir`; missing files keep their default.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut failure = None;
        let set = Self::from_sources(|file| {
            let path = dir.join(file);
            if !path.exists() {
                return None;
            }
            match std::fs::read_to_string(&path) {
                Ok(text) => Some(text),
                Err(e) => {
                    failure = Some(PromptError::Io(format!("{}: {e}", path.display())));
                    None
                }
            }
        });
        match failure {
            Some(e) => Err(e),
            None => set,
        }
    }

    fn from_sources(mut read: impl FnMut(&str) -> Option<String>) -> Result<Self, PromptError> {
        let mut load = |file: &str, default: &str, slots: &[&str]| {
            let text = read(file).unwrap_or_else(|| default.to_string());
            Template::parse(file, &text, slots)
        };
        let init = load(
            "init.txt",
            include_str!("../../templates/init.txt"),
            OPERATOR_SLOTS,
        )?;
        if init
            .placeholders()
            .any(|p| p == "parents" || p == "parent_count")
        {
            return Err(PromptError::Template {
                template: "init.txt".into(),
                line: 0,
                msg: "the initialization prompt has no parents".into(),
            });
        }
        Ok(TemplateSet {
            init,
            crossover: load(
                "crossover.txt",
                include_str!("../../templates/crossover.txt"),
                OPERATOR_SLOTS,
            )?,
            mutation: load(
                "mutation.txt",
                include_str!("../../templates/mutation.txt"),
                OPERATOR_SLOTS,
            )?,
            parent: load(
                "parent.txt",
                include_str!("../../templates/parent.txt"),
                PARENT_SLOTS,
            )?,
            expected_output: load(
                "expected_output.txt",
                include_str!("../../templates/expected_output.txt"),
                OUTPUT_SLOTS,
            )?,
        })
    }
}

/// Renders operator prompts for one task. Rendering is a pure function of
/// the task, templates and parents.
#[derive(Debug, Clone)]
pub struct PromptForge {
    task: TaskSpec,
    templates: TemplateSet,
}

impl PromptForge {
    pub fn new(task: TaskSpec, templates: TemplateSet) -> Result<Self, PromptError> {
        task.validate()?;
        Ok(PromptForge { task, templates })
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn render_init(&self) -> Result<PromptBundle, PromptError> {
        let vars = self.base_vars()?;
        Ok(PromptBundle {
            operator: Operator::Init,
            text: self.templates.init.render(&vars)?,
            parent_ids: Vec::new(),
        })
    }

    pub fn render_crossover(&self, parents: &[&Individual]) -> Result<PromptBundle, PromptError> {
        if parents.is_empty() {
            return Err(PromptError::NoParents);
        }
        self.with_parents(Operator::Crossover, &self.templates.crossover, parents)
    }

    pub fn render_mutation(&self, parent: &Individual) -> Result<PromptBundle, PromptError> {
        self.with_parents(Operator::Mutation, &self.templates.mutation, &[parent])
    }

    fn with_parents(
        &self,
        operator: Operator,
        template: &Template,
        parents: &[&Individual],
    ) -> Result<PromptBundle, PromptError> {
        let mut vars = self.base_vars()?;
        let mut blocks = Vec::with_capacity(parents.len());
        for (k, parent) in parents.iter().enumerate() {
            let code = parent.program.canonical_text();
            if code.trim().is_empty() {
                return Err(PromptError::MissingParentProgram(parent.id));
            }
            if parent.description.trim().is_empty() {
                return Err(PromptError::MissingParentDescription(parent.id));
            }
            let pvars: BTreeMap<&str, String> = [
                ("index", (k + 1).to_string()),
                ("description", parent.description.clone()),
                ("code", code.trim_end().to_string()),
                (
                    "fence_language",
                    parent.program.fence_language().to_string(),
                ),
            ]
            .into_iter()
            .collect();
            blocks.push(self.templates.parent.render(&pvars)?);
        }
        vars.insert("parents", blocks.join("\n").trim_end().to_string());
        vars.insert("parent_count", parents.len().to_string());
        Ok(PromptBundle {
            operator,
            text: template.render(&vars)?,
            parent_ids: parents.iter().map(|p| p.id).collect(),
        })
    }

    fn base_vars(&self) -> Result<BTreeMap<&'static str, String>, PromptError> {
        let task = &self.task;
        let quoted: Vec<String> = task
            .inputs
            .iter()
            .map(|p| format!("'{}'", p.name))
            .collect();
        let meanings: Vec<String> = task
            .inputs
            .iter()
            .map(|p| format!("- '{}': {}.", p.name, p.meaning))
            .collect();
        let out_vars: BTreeMap<&str, String> = [
            ("function_name", task.function_name.clone()),
            ("input_count", task.inputs.len().to_string()),
            ("input_names", quoted.join(", ")),
            ("input_meanings", meanings.join("\n")),
            ("output_name", format!("'{}'", task.output.name)),
            (
                "output_meaning",
                format!("- '{}': {}.", task.output.name, task.output.meaning),
            ),
        ]
        .into_iter()
        .collect();
        let expected = self.templates.expected_output.render(&out_vars)?;
        Ok([
            ("task_description", task.task_description.trim().to_string()),
            ("expected_output", expected.trim_end().to_string()),
            ("other_hints", task.extra_hints.trim().to_string()),
            ("parents", String::new()),
            ("parent_count", "0".to_string()),
        ]
        .into_iter()
        .collect())
    }
}
