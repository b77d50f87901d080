use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BehaviorVocabulary, PersonaError, RoleCard, RoleId, RuleCategoryName, TaskSpec};

const DEFAULT_MANIFEST: &str = include_str!("../../data/scenario/default/scenario.toml");
const DEFAULT_TASK: &str = include_str!("../../data/scenario/default/task.toml");
const DEFAULT_VOCABULARY: &str = include_str!("../../data/scenario/default/vocabulary.toml");
const DEFAULT_ROLES: [(&str, &str); 3] = [
    (
        "roles/alice.toml",
        include_str!("../../data/scenario/default/roles/alice.toml"),
    ),
    (
        "roles/benji.toml",
        include_str!("../../data/scenario/default/roles/benji.toml"),
    ),
    (
        "roles/caden.toml",
        include_str!("../../data/scenario/default/roles/caden.toml"),
    ),
];

/// `scenario.toml`: names the task, vocabulary and role-card files of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub name: String,
    pub task: String,
    pub vocabulary: String,
    pub roles: Vec<String>,
    #[serde(default = "default_session_minutes")]
    pub session_minutes: u32,
}

fn default_session_minutes() -> u32 {
    20
}

/// A loaded scenario directory: one task, three role cards, one vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub task: TaskSpec,
    pub vocabulary: BehaviorVocabulary,
    pub roles: Vec<RoleCard>,
    pub session_minutes: u32,
}

fn read(path: &Path) -> Result<String, PersonaError> {
    fs::read_to_string(path).map_err(|source| PersonaError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_manifest(doc: &str) -> Result<ScenarioManifest, PersonaError> {
    toml::from_str(doc).map_err(|e| PersonaError::Malformed(format!("scenario.toml: {}", e.message())))
}

impl Scenario {
    /// The scenario compiled into the binary (three housemates, five rule categories).
    pub fn bundled_default() -> Scenario {
        let manifest = parse_manifest(DEFAULT_MANIFEST).expect("bundled manifest");
        let roles = DEFAULT_ROLES
            .iter()
            .map(|(_, doc)| RoleCard::from_toml(doc).expect("bundled role card"))
            .collect();
        Scenario::assemble(
            manifest,
            TaskSpec::from_toml(DEFAULT_TASK).expect("bundled task"),
            BehaviorVocabulary::from_toml(DEFAULT_VOCABULARY).expect("bundled vocabulary"),
            roles,
        )
        .expect("bundled scenario is valid")
    }

    /// Writes the bundled default scenario files into `dir`.
    pub fn write_default(dir: &Path) -> Result<(), PersonaError> {
        let io = |path: PathBuf| {
            move |source| PersonaError::Io {
                path: path.display().to_string(),
                source,
            }
        };
        fs::create_dir_all(dir.join("roles")).map_err(io(dir.join("roles")))?;
        let mut files = vec![
            ("scenario.toml", DEFAULT_MANIFEST),
            ("task.toml", DEFAULT_TASK),
            ("vocabulary.toml", DEFAULT_VOCABULARY),
        ];
        files.extend(DEFAULT_ROLES);
        for (name, contents) in files {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(io(path.clone()))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Scenario, PersonaError> {
        let manifest = parse_manifest(&read(&dir.join("scenario.toml"))?)?;
        let task = TaskSpec::from_toml(&read(&dir.join(&manifest.task))?)?;
        let vocabulary = BehaviorVocabulary::from_toml(&read(&dir.join(&manifest.vocabulary))?)?;
        let roles = manifest
            .roles
            .iter()
            .map(|file| {
                RoleCard::from_toml(&read(&dir.join(file))?).map_err(|e| match e {
                    PersonaError::Malformed(m) => PersonaError::Malformed(format!("{file}: {m}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Scenario::assemble(manifest, task, vocabulary, roles)
    }

    fn assemble(
        manifest: ScenarioManifest,
        task: TaskSpec,
        vocabulary: BehaviorVocabulary,
        roles: Vec<RoleCard>,
    ) -> Result<Scenario, PersonaError> {
        let scenario = Scenario {
            name: manifest.name,
            task,
            vocabulary,
            roles,
            session_minutes: manifest.session_minutes,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        self.task.validate()?;
        if self.roles.len() != 3 {
            return Err(PersonaError::InvalidScenario(format!(
                "expected exactly 3 roles, found {}",
                self.roles.len()
            )));
        }
        for (i, card) in self.roles.iter().enumerate() {
            if self.roles[..i].iter().any(|c| {
                c.role_id == card.role_id || c.display_name.eq_ignore_ascii_case(&card.display_name)
            }) {
                return Err(PersonaError::InvalidScenario(format!(
                    "duplicate role {}",
                    card.role_id
                )));
            }
            if let Some(key) = card
                .stance_on_house_rules
                .keys()
                .find(|k| !self.task.has_category(**k))
            {
                return Err(PersonaError::InvalidScenario(format!(
                    "role {} has a stance on {}, which the task does not define",
                    card.role_id,
                    key.key()
                )));
            }
        }
        Ok(())
    }

    /// True when the task covers all five standard rule categories.
    pub fn has_all_rule_categories(&self) -> bool {
        self.task.house_rules.len() == RuleCategoryName::ALL.len()
            && RuleCategoryName::ALL.iter().all(|c| self.task.has_category(*c))
    }

    pub fn role(&self, id: &RoleId) -> Option<&RoleCard> {
        self.roles.iter().find(|r| &r.role_id == id)
    }

    /// Looks a role up by id or display name, ignoring ASCII case.
    pub fn resolve_role(&self, name: &str) -> Option<&RoleCard> {
        let name = name.trim();
        self.roles.iter().find(|r| {
            r.role_id.as_str().eq_ignore_ascii_case(name) || r.display_name.eq_ignore_ascii_case(name)
        })
    }

    pub fn role_ids(&self) -> Vec<RoleId> {
        self.roles.iter().map(|r| r.role_id.clone()).collect()
    }

    /// Roles voiced by the model when `user` is played by the human, in scenario order.
    pub fn avatar_roles(&self, user: &RoleId) -> Vec<&RoleCard> {
        self.roles.iter().filter(|r| &r.role_id != user).collect()
    }
}
