//! Question catalog, disease profiles and the surface templates used to
//! render answers into note text.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::digest::{json_digest, rng_at};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Tier {
    /// History, symptoms and vitals: what is known before the consultation.
    One = 1,
    /// Adds the physical examination.
    Two = 2,
    /// Adds diagnostic test results.
    Three = 3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::One, Tier::Two, Tier::Three];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn section(self) -> &'static str {
        match self {
            Tier::One => "History",
            Tier::Two => "Examination",
            Tier::Three => "Diagnostics",
        }
    }
}

impl TryFrom<u8> for Tier {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Tier::One),
            2 => Ok(Tier::Two),
            3 => Ok(Tier::Three),
            other => Err(Error::InvalidConfig(format!("tier must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl From<Tier> for u8 {
    fn from(tier: Tier) -> u8 {
        tier.number()
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Binary,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalQuestion {
    pub id: String,
    pub text: String,
    pub tier: Tier,
    pub answer_kind: AnswerKind,
}

/// Ordered set of questions. The order defines feature-column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClinicalQuestion>", into = "Vec<ClinicalQuestion>")]
pub struct QuestionCatalog {
    questions: Vec<ClinicalQuestion>,
    index: HashMap<String, usize>,
}

impl QuestionCatalog {
    pub fn new(questions: Vec<ClinicalQuestion>) -> Result<Self> {
        if questions.is_empty() {
            return Err(Error::Empty("question catalog"));
        }
        let mut index = HashMap::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            if index.insert(q.id.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate question id `{}`", q.id)));
            }
        }
        Ok(Self { questions, index })
    }

    pub fn questions(&self) -> &[ClinicalQuestion] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&ClinicalQuestion> {
        self.position(id).map(|i| &self.questions[i])
    }

    /// Number of questions visible at `tier` (cumulative).
    pub fn tier_size(&self, tier: Tier) -> usize {
        self.questions.iter().filter(|q| q.tier <= tier).count()
    }

    pub fn digest(&self) -> String {
        json_digest(&self.questions)
    }
}

impl TryFrom<Vec<ClinicalQuestion>> for QuestionCatalog {
    type Error = Error;

    fn try_from(questions: Vec<ClinicalQuestion>) -> Result<Self> {
        Self::new(questions)
    }
}

impl From<QuestionCatalog> for Vec<ClinicalQuestion> {
    fn from(catalog: QuestionCatalog) -> Self {
        catalog.questions
    }
}

/// Generative parameters of one question under one disease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionParams {
    pub question_id: String,
    /// Probability that the note addresses the question at all.
    pub p_mention: f64,
    /// Probability of an affirmative answer given a mention (binary only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_affirm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseProfile {
    pub icd_code: String,
    pub description: String,
    /// One entry per catalog question, in catalog order.
    pub params: Vec<QuestionParams>,
}

impl DiseaseProfile {
    pub fn validate(&self, catalog: &QuestionCatalog) -> Result<()> {
        if self.params.len() != catalog.len() {
            return Err(Error::DimensionMismatch { expected: catalog.len(), found: self.params.len() });
        }
        for (p, q) in self.params.iter().zip(catalog.questions()) {
            if p.question_id != q.id {
                return Err(Error::UnknownQuestion(p.question_id.clone()));
            }
            let bad = |what: &str| Error::InvalidConfig(format!("{}: {what} for question `{}`", self.icd_code, q.id));
            if !(0.0..=1.0).contains(&p.p_mention) {
                return Err(bad("p_mention outside [0, 1]"));
            }
            match q.answer_kind {
                AnswerKind::Binary => match p.p_affirm {
                    Some(a) if (0.0..=1.0).contains(&a) => {}
                    _ => return Err(bad("p_affirm missing or outside [0, 1]")),
                },
                AnswerKind::Numeric => match (p.mean, p.std) {
                    (Some(m), Some(s)) if m.is_finite() && s > 0.0 && s.is_finite() => {}
                    _ => return Err(bad("numeric mean/std missing or std not positive")),
                },
            }
        }
        Ok(())
    }
}

/// Surface forms for one question. Phrase lists are ordered by how often the
/// generator uses them; the first is the common form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTemplates {
    pub question_id: String,
    /// Affirmative slot phrases (binary).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub affirmative: Vec<String>,
    /// Negated slot phrases, each carrying a negation cue (binary).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negated: Vec<String>,
    /// Numeric slot phrases, each containing exactly one `{value}`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub numeric: Vec<String>,
    /// Decimal places used when rendering numeric values.
    #[serde(default)]
    pub decimals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

/// Sentence frames; `{slot}` marks where the answer phrase goes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceFrames {
    pub affirmative: Vec<String>,
    pub negated: Vec<String>,
    pub numeric: Vec<String>,
}

impl Default for SentenceFrames {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            affirmative: v(&[
                "Reports {slot}.",
                "{slot} present.",
                "Complains of {slot}.",
                "Positive for {slot}.",
                "Mother describes {slot}.",
            ]),
            negated: v(&["{slot}.", "Reports {slot}.", "On review {slot}.", "Mother says {slot}."]),
            numeric: v(&["{slot}.", "Measured {slot}.", "Recorded {slot}."]),
        }
    }
}

pub const NEGATION_CUES: &[&str] = &["no", "not", "denies", "without", "negative", "absent"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseSpec {
    pub icd_code: String,
    pub description: String,
}

pub fn default_diseases() -> Vec<DiseaseSpec> {
    [
        ("G43.0", "Migraine without aura"),
        ("G43.1", "Migraine with aura"),
        ("G44.2", "Tension-type headache"),
        ("H66.9", "Otitis media, unspecified"),
        ("J15.9", "Bacterial pneumonia, unspecified"),
        ("J20.9", "Acute bronchitis"),
    ]
    .into_iter()
    .map(|(c, d)| DiseaseSpec { icd_code: c.into(), description: d.into() })
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierCounts {
    pub binary: usize,
    pub numeric: usize,
}

impl TierCounts {
    pub fn total(&self) -> usize {
        self.binary + self.numeric
    }
}

/// How strongly each tier's answers depend on the disease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    /// Binary signature questions per disease, per tier.
    pub signatures_per_disease: [usize; 3],
    /// p_affirm of a signature question under its own disease.
    pub affirm_high: [f64; 3],
    /// p_affirm of a signature question under every other disease.
    pub affirm_low: [f64; 3],
    /// Added to p_mention of a signature question under its own disease.
    pub mention_boost: [f64; 3],
    /// Mean shift, in standard deviations, of numeric answers under a
    /// signature disease.
    pub numeric_shift: [f64; 3],
    /// Base mention-rate range per tier.
    pub mention_range: [(f64, f64); 3],
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            signatures_per_disease: [4, 2, 0],
            affirm_high: [0.92, 0.95, 0.95],
            affirm_low: [0.55, 0.6, 0.6],
            mention_boost: [0.3, 0.55, 0.55],
            numeric_shift: [0.6, 1.5, 2.5],
            mention_range: [(0.15, 0.45), (0.2, 0.4), (0.2, 0.4)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogConfig {
    pub seed: u64,
    /// Question counts for tiers 1, 2 and 3.
    pub tiers: [TierCounts; 3],
    pub diseases: Vec<DiseaseSpec>,
    pub signal: SignalConfig,
    /// Target population mean of the positive-answer ratio.
    pub positive_ratio: f64,
    /// Spread of per-question positive ratios.
    pub positive_ratio_std: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        // 44:17:3 is 420:162:26 scaled to 64 questions.
        Self {
            seed: 0,
            tiers: [
                TierCounts { binary: 40, numeric: 4 },
                TierCounts { binary: 16, numeric: 1 },
                TierCounts { binary: 1, numeric: 2 },
            ],
            diseases: default_diseases(),
            signal: SignalConfig::default(),
            positive_ratio: 0.75,
            positive_ratio_std: 0.2,
        }
    }
}

/// Catalog, profiles and templates: everything needed to generate notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogDocument {
    pub catalog: QuestionCatalog,
    pub profiles: Vec<DiseaseProfile>,
    pub templates: Vec<QuestionTemplates>,
    pub frames: SentenceFrames,
}

impl CatalogDocument {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.len() < 2 {
            return Err(Error::InvalidConfig("at least two disease profiles required".into()));
        }
        for p in &self.profiles {
            p.validate(&self.catalog)?;
        }
        if self.templates.len() != self.catalog.len() {
            return Err(Error::DimensionMismatch { expected: self.catalog.len(), found: self.templates.len() });
        }
        for (t, q) in self.templates.iter().zip(self.catalog.questions()) {
            if t.question_id != q.id {
                return Err(Error::UnknownQuestion(t.question_id.clone()));
            }
            let ok = match q.answer_kind {
                AnswerKind::Binary => !t.affirmative.is_empty() && !t.negated.is_empty(),
                AnswerKind::Numeric => {
                    !t.numeric.is_empty() && t.numeric.iter().all(|p| p.matches("{value}").count() == 1)
                }
            };
            if !ok {
                return Err(Error::InvalidConfig(format!("incomplete templates for `{}`", q.id)));
            }
        }
        for frames in [&self.frames.affirmative, &self.frames.negated, &self.frames.numeric] {
            if frames.is_empty() || frames.iter().any(|f| f.matches("{slot}").count() != 1) {
                return Err(Error::InvalidConfig("every frame needs exactly one {slot}".into()));
            }
        }
        Ok(())
    }

    pub fn disease_codes(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.icd_code.clone()).collect()
    }

    pub fn profile(&self, icd_code: &str) -> Option<&DiseaseProfile> {
        self.profiles.iter().find(|p| p.icd_code == icd_code)
    }

    /// Expected positive-answer ratio over answered binary annotations under
    /// the given disease prior.
    pub fn expected_positive_ratio(&self, prior: &[f64]) -> f64 {
        let (mut pos, mut answered) = (0.0, 0.0);
        for (profile, &w) in self.profiles.iter().zip(prior) {
            for p in &profile.params {
                if let Some(a) = p.p_affirm {
                    pos += w * p.p_mention * a;
                    answered += w * p.p_mention;
                }
            }
        }
        pos / answered
    }
}

struct BinaryItem {
    id: &'static str,
    question: &'static str,
    terms: &'static [&'static str],
}

struct NumericItem {
    id: &'static str,
    question: &'static str,
    phrases: &'static [&'static str],
    mean: f64,
    std: f64,
    decimals: usize,
    range: (f64, f64),
}

macro_rules! binary {
    ($id:expr, $q:expr, [$($t:expr),+]) => {
        BinaryItem { id: $id, question: $q, terms: &[$($t),+] }
    };
}

const TIER1_BINARY: &[BinaryItem] = &[
    binary!("headache", "Does the patient have a headache?", ["headache", "head pain"]),
    binary!("nausea", "Does the patient have nausea?", ["nausea", "queasiness"]),
    binary!("vomiting", "Is the patient vomiting?", ["vomiting", "emesis"]),
    binary!("photophobia", "Is the patient sensitive to light?", ["photophobia", "light sensitivity"]),
    binary!("phonophobia", "Is the patient sensitive to sound?", ["phonophobia", "sound sensitivity"]),
    binary!("aura", "Does the headache come with an aura?", ["aura", "visual aura"]),
    binary!(
        "visual_disturbance",
        "Does the patient report visual disturbance?",
        ["visual disturbance", "blurred vision"]
    ),
    binary!("dizziness", "Is the patient dizzy?", ["dizziness", "lightheadedness"]),
    binary!("neck_pain", "Does the patient have neck pain?", ["neck pain", "stiff neck"]),
    binary!("fever", "Does the patient have a fever?", ["fever", "pyrexia"]),
    binary!("chills", "Does the patient have chills?", ["chills", "shivering"]),
    binary!("cough", "Does the patient have a cough?", ["cough", "coughing"]),
    binary!("sputum", "Is the cough productive?", ["sputum", "productive cough"]),
    binary!("runny_nose", "Does the patient have a runny nose?", ["runny nose", "rhinorrhea"]),
    binary!("nasal_congestion", "Is the nose congested?", ["nasal congestion", "blocked nose"]),
    binary!("sore_throat", "Does the patient have a sore throat?", ["sore throat", "throat pain"]),
    binary!("ear_pain", "Does the patient have ear pain?", ["ear pain", "earache"]),
    binary!("ear_discharge", "Is there fluid out of the ear?", ["ear discharge", "otorrhea"]),
    binary!("muffled_hearing", "Is the patient's hearing muffled?", ["muffled hearing", "hearing change"]),
    binary!("dyspnea", "Is the patient short of breath?", ["dyspnea", "breathlessness"]),
    binary!("chest_pain", "Does the patient have chest pain?", ["chest pain", "thoracic pain"]),
    binary!("chest_tightness", "Does the patient feel chest tightness?", ["chest tightness", "tight chest"]),
    binary!("pleuritic_pain", "Does breathing hurt?", ["pleuritic pain", "painful breathing"]),
    binary!("wheezing", "Does the patient wheeze?", ["wheezing", "whistling breath"]),
    binary!("malaise", "Does the patient feel unwell?", ["malaise", "feeling unwell"]),
    binary!("reduced_appetite", "Is food intake reduced?", ["reduced appetite", "poor feeding"]),
    binary!("reduced_fluids", "Is fluid intake reduced?", ["reduced fluid intake", "drinking less"]),
    binary!("abdominal_pain", "Does the patient have abdominal pain?", ["abdominal pain", "tummy ache"]),
    binary!("diarrhea", "Does the patient have diarrhea?", ["diarrhea", "loose stools"]),
    binary!("rash", "Does the patient have a rash?", ["rash", "skin eruption"]),
    binary!("fatigue", "Is the patient tired?", ["fatigue", "tiredness"]),
    binary!("insomnia", "Does the patient sleep poorly?", ["insomnia", "poor sleep"]),
    binary!("tinnitus", "Does the patient have tinnitus?", ["tinnitus", "ringing ears"]),
    binary!("limb_numbness", "Does the patient report limb numbness?", ["limb numbness", "tingling limbs"]),
    binary!("pulsating_pain", "Is the pain pulsating?", ["pulsating pain", "throbbing pain"]),
    binary!("pressing_pain", "Is the pain pressing or tight?", ["pressing pain", "band-like pain"]),
    binary!("unilateral_pain", "Is the pain one-sided?", ["unilateral pain", "one-sided pain"]),
    binary!(
        "worse_with_activity",
        "Does activity worsen the pain?",
        ["pain worse with activity", "exertional worsening"]
    ),
    binary!("recent_cold", "Has the patient recently had a cold?", ["recent common cold", "recent cold"]),
    binary!("asthma_history", "Does the patient have a history of asthma?", ["history of asthma", "known asthma"]),
    binary!("otitis_history", "Has the patient had recurrent otitis?", ["recurrent otitis", "previous ear infections"]),
    binary!(
        "family_migraine",
        "Is there a family history of headache disorders?",
        ["family history of headaches", "headaches in the family"]
    ),
    binary!("analgesic_use", "Is the patient using analgesics?", ["analgesic use", "painkiller use"]),
    binary!("night_sweats", "Does the patient have night sweats?", ["night sweats", "sweating at night"]),
    binary!("hoarseness", "Is the patient hoarse?", ["hoarseness", "hoarse voice"]),
    binary!("sneezing", "Is the patient sneezing?", ["sneezing", "sneezes"]),
    binary!("snoring", "Does the patient snore?", ["snoring", "snores"]),
    binary!("stress", "Is the patient under stress?", ["stress", "school stress"]),
];

const TIER2_BINARY: &[BinaryItem] = &[
    binary!("tm_red", "Is the tympanic membrane red on otoscopy?", ["red tympanic membrane", "erythematous eardrum"]),
    binary!("tm_bulging", "Is the tympanic membrane bulging?", ["bulging tympanic membrane", "bulging eardrum"]),
    binary!("ear_effusion", "Is there effusion behind the eardrum?", ["middle ear effusion", "fluid behind eardrum"]),
    binary!("crackles", "Are there crackles on lung auscultation?", ["crackles", "rales"]),
    binary!("wheezes", "Are there wheezes on lung auscultation?", ["wheezes on auscultation", "expiratory wheezes"]),
    binary!("reduced_breath_sounds", "Are breath sounds reduced?", ["reduced breath sounds", "diminished air entry"]),
    binary!("tachypnea", "Is the patient tachypneic?", ["tachypnea", "fast breathing"]),
    binary!("retractions", "Are there intercostal retractions?", ["intercostal retractions", "chest indrawing"]),
    binary!("neck_stiffness", "Is the neck stiff on examination?", ["meningism", "nuchal rigidity"]),
    binary!(
        "abnormal_neuro",
        "Is the neurological examination abnormal?",
        ["focal neurological signs", "abnormal neurological findings"]
    ),
    binary!("pharyngeal_erythema", "Is the pharynx red?", ["pharyngeal erythema", "red pharynx"]),
    binary!("enlarged_tonsils", "Are the tonsils enlarged?", ["enlarged tonsils", "tonsillar hypertrophy"]),
    binary!("lymph_nodes", "Are neck lymph nodes palpable?", ["palpable lymph nodes", "cervical adenopathy"]),
    binary!("sick_looking", "Does the patient look generally sick?", ["ill appearance", "toxic appearance"]),
    binary!(
        "pericranial_tenderness",
        "Are pericranial muscles tender?",
        ["pericranial tenderness", "tender scalp muscles"]
    ),
    binary!("sinus_tenderness", "Is there pain on sinus palpation?", ["sinus tenderness", "tender sinuses"]),
    binary!("papilledema", "Is there papilledema on fundoscopy?", ["papilledema", "swollen optic discs"]),
    binary!("abnormal_gait", "Is the gait abnormal?", ["abnormal gait", "unsteady gait"]),
    binary!("dehydration", "Are mucous membranes dry?", ["dry mucous membranes", "dehydration signs"]),
    binary!("nasal_flaring", "Is there nasal flaring?", ["nasal flaring", "flaring nostrils"]),
];

const TIER3_BINARY: &[BinaryItem] = &[
    binary!(
        "infiltrate",
        "Does the chest radiograph show an infiltrate?",
        ["infiltrate on radiograph", "consolidation on imaging"]
    ),
    binary!("strep_positive", "Is the rapid strep test positive?", ["positive strep test", "strep antigen detected"]),
    binary!("abnormal_blood_count", "Is the blood count abnormal?", ["abnormal blood count", "abnormal blood status"]),
    binary!("abnormal_imaging", "Is head imaging abnormal?", ["abnormal head imaging", "abnormal brain scan"]),
];

const TIER1_NUMERIC: &[NumericItem] = &[
    NumericItem {
        id: "temperature",
        question: "What is the patient's temperature?",
        phrases: &["temperature {value}", "temp {value}"],
        mean: 37.6,
        std: 0.7,
        decimals: 1,
        range: (35.0, 41.5),
    },
    NumericItem {
        id: "heart_rate",
        question: "What is the patient's heart rate?",
        phrases: &["heart rate {value}", "pulse {value}"],
        mean: 105.0,
        std: 15.0,
        decimals: 0,
        range: (50.0, 200.0),
    },
    NumericItem {
        id: "respiratory_rate",
        question: "What is the respiratory frequency?",
        phrases: &["respiratory rate {value}", "breathing rate {value}"],
        mean: 24.0,
        std: 5.0,
        decimals: 0,
        range: (8.0, 70.0),
    },
    NumericItem {
        id: "oxygen_saturation",
        question: "What is the oxygen saturation?",
        phrases: &["saturation {value}", "spo2 {value}"],
        mean: 97.0,
        std: 1.5,
        decimals: 0,
        range: (70.0, 100.0),
    },
    NumericItem {
        id: "pain_score",
        question: "What is the pain VAS value?",
        phrases: &["pain score {value}", "vas {value}"],
        mean: 5.0,
        std: 2.0,
        decimals: 0,
        range: (0.0, 10.0),
    },
];

const TIER2_NUMERIC: &[NumericItem] = &[
    NumericItem {
        id: "capillary_refill",
        question: "What is the capillary refill time?",
        phrases: &["capillary refill {value}", "refill time {value}"],
        mean: 2.0,
        std: 0.6,
        decimals: 1,
        range: (0.5, 6.0),
    },
    NumericItem {
        id: "measured_weight_loss",
        question: "How much weight has been lost?",
        phrases: &["weight loss {value}", "lost weight {value}"],
        mean: 0.5,
        std: 0.5,
        decimals: 1,
        range: (0.0, 5.0),
    },
];

const TIER3_NUMERIC: &[NumericItem] = &[
    NumericItem {
        id: "crp",
        question: "What is the CRP value?",
        phrases: &["crp {value}", "c-reactive protein {value}"],
        mean: 30.0,
        std: 25.0,
        decimals: 0,
        range: (0.0, 400.0),
    },
    NumericItem {
        id: "wbc",
        question: "What is the white cell count?",
        phrases: &["wbc {value}", "leukocytes {value}"],
        mean: 11.0,
        std: 4.0,
        decimals: 1,
        range: (1.0, 40.0),
    },
    NumericItem {
        id: "neutrophils",
        question: "What is the neutrophil count?",
        phrases: &["neutrophils {value}", "neutrophil count {value}"],
        mean: 7.0,
        std: 3.0,
        decimals: 1,
        range: (0.5, 30.0),
    },
    NumericItem {
        id: "esr",
        question: "What is the ESR value?",
        phrases: &["esr {value}", "sedimentation rate {value}"],
        mean: 20.0,
        std: 12.0,
        decimals: 0,
        range: (1.0, 120.0),
    },
];

/// Made-up single-word term for catalogs larger than the built-in bank.
fn pseudo_term(tier: Tier, n: usize) -> String {
    const SYLLABLES: [&str; 8] = ["ka", "lo", "mi", "ne", "ru", "so", "ta", "vi"];
    let mut word = String::new();
    let mut k = n + 8 * tier.index() + 64;
    while k > 0 {
        word.push_str(SYLLABLES[k % 8]);
        k /= 8;
    }
    word
}

fn negated_forms(term: &str) -> Vec<String> {
    vec![format!("no {term}"), format!("denies {term}"), format!("without {term}"), format!("not {term}")]
}

struct Draft {
    question: ClinicalQuestion,
    templates: QuestionTemplates,
    numeric: Option<(f64, f64)>,
}

fn draft_questions(config: &CatalogConfig) -> Vec<Draft> {
    let mut drafts = Vec::new();
    for tier in Tier::ALL {
        let counts = config.tiers[tier.index()];
        let (bank_b, bank_n) = match tier {
            Tier::One => (TIER1_BINARY, TIER1_NUMERIC),
            Tier::Two => (TIER2_BINARY, TIER2_NUMERIC),
            Tier::Three => (TIER3_BINARY, TIER3_NUMERIC),
        };
        for i in 0..counts.binary {
            let (id, question, terms): (String, String, Vec<String>) = match bank_b.get(i) {
                Some(item) => {
                    (item.id.into(), item.question.into(), item.terms.iter().map(|t| t.to_string()).collect())
                }
                None => {
                    let term = pseudo_term(tier, i);
                    (format!("t{}_{term}", tier.number()), format!("Is {term} present?"), vec![format!("{term} sign")])
                }
            };
            let negated = terms.iter().flat_map(|t| negated_forms(t)).collect();
            drafts.push(Draft {
                question: ClinicalQuestion { id, text: question, tier, answer_kind: AnswerKind::Binary },
                templates: QuestionTemplates {
                    question_id: String::new(),
                    affirmative: terms,
                    negated,
                    numeric: Vec::new(),
                    decimals: 0,
                    range: None,
                },
                numeric: None,
            });
        }
        for i in 0..counts.numeric {
            let draft = match bank_n.get(i) {
                Some(item) => Draft {
                    question: ClinicalQuestion {
                        id: item.id.into(),
                        text: item.question.into(),
                        tier,
                        answer_kind: AnswerKind::Numeric,
                    },
                    templates: QuestionTemplates {
                        question_id: String::new(),
                        affirmative: Vec::new(),
                        negated: Vec::new(),
                        numeric: item.phrases.iter().map(|p| p.to_string()).collect(),
                        decimals: item.decimals,
                        range: Some(item.range),
                    },
                    numeric: Some((item.mean, item.std)),
                },
                None => {
                    let term = pseudo_term(tier, 100 + i);
                    Draft {
                        question: ClinicalQuestion {
                            id: format!("t{}_{term}_value", tier.number()),
                            text: format!("What is the {term} value?"),
                            tier,
                            answer_kind: AnswerKind::Numeric,
                        },
                        templates: QuestionTemplates {
                            question_id: String::new(),
                            affirmative: Vec::new(),
                            negated: Vec::new(),
                            numeric: vec![format!("{term} level {{value}}")],
                            decimals: 1,
                            range: None,
                        },
                        numeric: Some((10.0, 3.0)),
                    }
                }
            };
            drafts.push(draft);
        }
    }
    for d in &mut drafts {
        d.templates.question_id = d.question.id.clone();
    }
    drafts
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Builds the question catalog and one profile per disease.
///
/// Each disease gets `signatures_per_disease[t]` binary questions in tier `t`
/// where its affirmative rate is `affirm_high` while every other disease sits
/// at `affirm_low`. The remaining binary cells are drawn from a Beta
/// distribution and then shifted on the logit scale until the expected
/// positive-answer ratio equals `positive_ratio`.
pub fn default_catalog(config: &CatalogConfig) -> Result<CatalogDocument> {
    for tier in Tier::ALL {
        if config.tiers[tier.index()].total() < 1 {
            return Err(Error::InvalidConfig(format!("tier {tier} needs at least one question")));
        }
    }
    if config.diseases.len() < 2 {
        return Err(Error::InvalidConfig("at least two diseases required".into()));
    }
    let m = config.positive_ratio;
    let s = config.positive_ratio_std;
    if !(0.0 < m && m < 1.0) || !(s > 0.0 && s * s < m * (1.0 - m)) {
        return Err(Error::InvalidConfig("positive ratio mean/std do not define a Beta distribution".into()));
    }
    let sig = &config.signal;
    let n_diseases = config.diseases.len();
    let drafts = draft_questions(config);
    let mut rng = rng_at(config.seed, &["catalog"]);

    // Base parameters shared by all diseases.
    let spread = m * (1.0 - m) / (s * s) - 1.0;
    let beta = Beta::new(m * spread, (1.0 - m) * spread).expect("validated above");
    let base: Vec<(f64, f64)> = drafts
        .iter()
        .map(|d| {
            let (lo, hi) = sig.mention_range[d.question.tier.index()];
            let mention = rng.random_range(lo..=hi);
            let affirm = beta.sample(&mut rng).clamp(0.05, 0.98);
            (mention, affirm)
        })
        .collect();

    // signature[q] = Some(disease index) for binary signature questions.
    let mut signature: Vec<Option<usize>> = vec![None; drafts.len()];
    for tier in Tier::ALL {
        let mut pool: Vec<usize> = drafts
            .iter()
            .enumerate()
            .filter(|(_, d)| d.question.tier == tier && d.question.answer_kind == AnswerKind::Binary)
            .map(|(i, _)| i)
            .collect();
        pool.shuffle(&mut rng);
        let wanted = sig.signatures_per_disease[tier.index()] * n_diseases;
        for (k, &q) in pool.iter().take(wanted).enumerate() {
            signature[q] = Some(k % n_diseases);
        }
    }
    // Numeric questions: one or two diseases shift the mean up or down.
    let numeric_signature: Vec<Vec<(usize, f64)>> = drafts
        .iter()
        .map(|d| {
            if d.question.answer_kind != AnswerKind::Numeric {
                return Vec::new();
            }
            let mut diseases: Vec<usize> = (0..n_diseases).collect();
            diseases.shuffle(&mut rng);
            let k = rng.random_range(1..=2.min(n_diseases));
            let shift = sig.numeric_shift[d.question.tier.index()];
            let direction = if rng.random_bool(0.75) { 1.0 } else { -1.0 };
            diseases[..k].iter().map(|&di| (di, direction * shift)).collect()
        })
        .collect();

    let params_for = |shift: f64, disease: usize| -> Vec<QuestionParams> {
        drafts
            .iter()
            .enumerate()
            .map(|(q, d)| {
                let tier = d.question.tier.index();
                let (mention, affirm) = base[q];
                match d.question.answer_kind {
                    AnswerKind::Binary => {
                        let (p_mention, p_affirm) = match signature[q] {
                            Some(owner) if owner == disease => {
                                ((mention + sig.mention_boost[tier]).min(0.95), sig.affirm_high[tier])
                            }
                            Some(_) => (mention, sig.affirm_low[tier]),
                            None => (mention, sigmoid(logit(affirm) + shift).clamp(0.02, 0.99)),
                        };
                        QuestionParams {
                            question_id: d.question.id.clone(),
                            p_mention,
                            p_affirm: Some(p_affirm),
                            mean: None,
                            std: None,
                        }
                    }
                    AnswerKind::Numeric => {
                        let (mean, std) = d.numeric.expect("numeric drafts carry moments");
                        let shift_sd =
                            numeric_signature[q].iter().find(|(di, _)| *di == disease).map_or(0.0, |(_, s)| *s);
                        let boost = if shift_sd != 0.0 { sig.mention_boost[tier] } else { 0.0 };
                        QuestionParams {
                            question_id: d.question.id.clone(),
                            p_mention: (mention + boost).min(0.95),
                            p_affirm: None,
                            mean: Some(mean + shift_sd * std),
                            std: Some(std),
                        }
                    }
                }
            })
            .collect()
    };

    let questions: Vec<ClinicalQuestion> = drafts.iter().map(|d| d.question.clone()).collect();
    let mut doc = CatalogDocument {
        catalog: QuestionCatalog::new(questions)?,
        profiles: Vec::new(),
        templates: drafts.iter().map(|d| d.templates.clone()).collect(),
        frames: SentenceFrames::default(),
    };
    let uniform = vec![1.0 / n_diseases as f64; n_diseases];
    let build = |shift: f64| -> Vec<DiseaseProfile> {
        config
            .diseases
            .iter()
            .enumerate()
            .map(|(di, spec)| DiseaseProfile {
                icd_code: spec.icd_code.clone(),
                description: spec.description.clone(),
                params: params_for(shift, di),
            })
            .collect()
    };
    // Bisection on the logit shift of the free (non-signature) cells.
    let (mut lo, mut hi) = (-8.0_f64, 8.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        doc.profiles = build(mid);
        if doc.expected_positive_ratio(&uniform) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    doc.profiles = build(0.5 * (lo + hi));
    let achieved = doc.expected_positive_ratio(&uniform);
    if (achieved - m).abs() > 0.01 {
        return Err(Error::InvalidConfig(format!(
            "signature settings leave no room to reach positive ratio {m} (best {achieved:.3})"
        )));
    }
    doc.validate()?;
    Ok(doc)
}
