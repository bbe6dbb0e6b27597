//! Persistence round trips and cross-module invariants on generated data.

use icdlab::classifier::{train_logreg, LogRegModel, TrainConfig};
use icdlab::corpus::{
    default_catalog, generate_corpus, load_catalog, load_corpus, save_catalog, save_corpus, CatalogConfig,
    CatalogDocument, GenerateConfig, LabeledCorpus, Tier,
};
use icdlab::extractor::{extract_corpus, train_lexicon_extractor, LexiconConfig, LexiconExtractorModel};
use icdlab::features::{encode_gold, NumericStats};

fn setup() -> (CatalogDocument, LabeledCorpus, LabeledCorpus) {
    let doc = default_catalog(&CatalogConfig::default()).unwrap();
    let train = generate_corpus(&doc, &GenerateConfig { n_notes: 150, ..GenerateConfig::default() }, 11).unwrap();
    let held_out = GenerateConfig { n_notes: 40, id_prefix: "held".into(), ..GenerateConfig::default() };
    let test = generate_corpus(&doc, &held_out, 12).unwrap();
    (doc, train, test)
}

#[test]
fn corpus_and_catalog_survive_disk() {
    let (doc, train, _) = setup();
    let dir = tempfile::tempdir().unwrap();
    save_catalog(&doc, dir.path().join("catalog.json")).unwrap();
    save_corpus(&train, dir.path().join("corpus.jsonl")).unwrap();
    let doc2 = load_catalog(dir.path().join("catalog.json")).unwrap();
    let train2 = load_corpus(dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(doc2, doc);
    assert_eq!(train2.digest(), train.digest());
    assert_eq!(train2.notes, train.notes);
}

#[test]
fn lexicon_model_reload_extracts_identically() {
    let (doc, train, test) = setup();
    let (model, _) = train_lexicon_extractor(&train, &doc.catalog, &LexiconConfig::default()).unwrap();
    let reloaded = LexiconExtractorModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(reloaded.digest(), model.digest());
    let a = extract_corpus(&model, &test, &doc.catalog).unwrap();
    let b = extract_corpus(&reloaded, &test, &doc.catalog).unwrap();
    assert_eq!(a, b);
    for (note, results) in test.notes.iter().zip(&a) {
        let n_tokens = icdlab::text::tokenize(&note.text).len();
        for (q, r) in doc.catalog.questions().iter().zip(results) {
            r.validate(q.answer_kind, n_tokens, model.threshold()).unwrap();
        }
    }
}

#[test]
fn classifier_reload_predicts_identically() {
    let (doc, train, test) = setup();
    let stats = NumericStats::fit(&train.notes, &doc.catalog).unwrap();
    let x = encode_gold(&train.notes, &doc.catalog, &stats).unwrap().tier_view(Tier::Two);
    let model = train_logreg(&x, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let reloaded = LogRegModel::load(&path).unwrap();
    assert_eq!(reloaded, model);
    let tx = encode_gold(&test.notes, &doc.catalog, &stats).unwrap().tier_view(Tier::Two);
    assert_eq!(reloaded.predict_proba(&tx).unwrap(), model.predict_proba(&tx).unwrap());
}

#[test]
fn tier_views_are_nested_prefixes() {
    let (doc, train, _) = setup();
    let stats = NumericStats::fit(&train.notes, &doc.catalog).unwrap();
    let x = encode_gold(&train.notes, &doc.catalog, &stats).unwrap();
    let names: Vec<_> = Tier::ALL.iter().map(|&t| x.tier_view(t).column_names()).collect();
    assert!(names[0].len() < names[1].len() && names[1].len() < names[2].len());
    for w in names.windows(2) {
        assert_eq!(w[0][..], w[1][..w[0].len()]);
    }
    assert_eq!(names[2], x.column_names());
}

#[test]
fn feature_files_carry_schema() {
    let (doc, train, _) = setup();
    let stats = NumericStats::fit(&train.notes, &doc.catalog).unwrap();
    let x = encode_gold(&train.notes, &doc.catalog, &stats).unwrap();
    let dir = tempfile::tempdir().unwrap();
    x.save(dir.path(), "features").unwrap();
    let csv = std::fs::read_to_string(dir.path().join("features.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header[..2], ["note_id", "icd_code"]);
    assert_eq!(header.len(), 2 + x.n_cols());
    assert_eq!(csv.lines().count(), 1 + x.n_rows());
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("features.schema.json")).unwrap()).unwrap();
    assert_eq!(schema["columns"].as_array().unwrap().len(), x.n_cols());
    assert_eq!(schema["tier_masks"].as_array().unwrap().len(), 3);
}
