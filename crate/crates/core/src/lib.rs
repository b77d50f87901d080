//! Three-housemate role-play engine with persona-conditioned language-model
//! avatars, plus the psychometric tooling used to check those avatars and to
//! analyse a counterbalanced training study.
//!
//! Modules, from the bottom up:
//!
//! - [`stats`]: descriptive statistics, cosine/Pearson, Cronbach's alpha, paired t
//! - [`persona`]: role cards, Big Five profiles, scenario bundles, prompt compilation
//! - [`gateway`]: chat-completion client, scripted replay provider, retry policy
//! - [`dialogue`]: four-field turn schema, output parser, turn engine, transcripts
//! - [`instruments`]: Likert questionnaires, scoring, administration to personas
//! - [`validation`]: repeated self-assessment and fidelity reports
//! - [`study`]: session phases, Latin-square assignment, study storage, cohort analysis

pub mod dialogue;
pub mod gateway;
pub mod instruments;
pub mod persona;
pub mod stats;
pub mod study;
pub mod validation;
