//! Question catalog, disease profiles, synthetic note generation, splits and
//! persistence.

mod catalog;
mod generate;
mod io;
mod split;

pub use catalog::{
    default_catalog, default_diseases, AnswerKind, CatalogConfig, CatalogDocument, ClinicalQuestion, DiseaseProfile,
    DiseaseSpec, QuestionCatalog, QuestionParams, QuestionTemplates, SentenceFrames, SignalConfig, Tier, TierCounts,
    NEGATION_CUES,
};
pub use generate::{
    generate_corpus, generator_name_lexicon, Annotation, DemographicsConfig, GenerateConfig, LabeledCorpus,
    LabeledNote, NoteRef, Sex, TokenSpan,
};
pub use io::{load_catalog, load_corpus, read_corpus, save_catalog, save_corpus, write_corpus};
pub use split::{stratified_kfold, stratified_split, CorpusSplit, SplitRatios};
