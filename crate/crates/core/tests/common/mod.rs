//! Shared fixtures: a deterministic 50-passage toy corpus, a small claim set
//! over it, and the scripted-provider entries that drive offline runs.

#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use sucea::corpus::{ingest_pages, Corpus};
use sucea::dataset::{ClaimRecord, DatasetKind, GoldEvidenceRef, VerdictLabel};
use sucea::llm::{DecodingParams, LlmClient, ScriptFallback, ScriptedProvider};

/// Pad a page body to exactly `target` words with a neutral filler cycle, so
/// chunk counts are fixed by construction rather than by hand-counting.
fn pad_words(text: &str, target: usize) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    assert!(
        words.len() <= target,
        "page body has {} words, more than {target}",
        words.len()
    );
    let filler = ["archive", "chronicle", "record", "annal", "gazette"];
    let mut i = 0;
    while words.len() < target {
        words.push(filler[i % filler.len()].to_string());
        i += 1;
    }
    words.join(" ")
}

/// Ten fictional encyclopedia pages, 100 words each. With a 20-word window
/// they ingest into exactly 50 passages. The opening phrases double as gold
/// evidence sentences, so they must stay inside each page's first window.
pub fn toy_pages() -> Vec<(String, String)> {
    let raw = [
        (
            "Aurora Bridge",
            "The Aurora Bridge in Veltar was completed by engineer Maren Kole in 1921 as the city's first steel crossing. \
             The arch spans the Veltar gorge and carried tram lines until 1954. Restoration crews replaced the deck twice. \
             Lanterns along the railing are lit during the winter season and the toll house now serves as a small museum \
             dedicated to the builders and their riveting tools.",
        ),
        (
            "Brindle Comet",
            "The Brindle Comet was discovered by astronomer Leta Farn in 1898 from the hillside observatory above Veltar. \
             Its period is roughly seventy one years and its tail shows a distinct double fork. Farn tracked the comet \
             through four winters and published her orbit tables in 1903. Amateur observers still gather on the ridge \
             whenever the comet returns to perihelion.",
        ),
        (
            "Cedar Vale Abbey",
            "Cedar Vale Abbey was founded by mountain monks in 1312 beside the juniper forest. The abbey brews a dark \
             honey ale and keeps a scriptorium of weather diaries. Pilgrims follow the cedar path each spring festival. \
             An earthquake cracked the bell tower in 1790 and the bell was recast from the old bronze by local smiths.",
        ),
        (
            "Delta Works Museum",
            "The Delta Works Museum opened in 1967 to explain the hydraulics of the lowland flood barriers. Its working \
             scale models pump real water through sluice gates every afternoon. School groups operate the miniature locks. \
             The museum archive holds the original barrier blueprints and a film reel of the first gate closing ceremony.",
        ),
        (
            "Emberlay Festival",
            "The Emberlay Festival fills the town of Emberlay with paper lanterns on the last night of autumn. Families \
             float candle rafts down the mill stream while drummers walk the old wall. The festival began as a harvest \
             vigil and now draws visitors from Veltar by the Juniper Line railway. Lantern frames are built from reed.",
        ),
        (
            "Fenwick Lighthouse",
            "Fenwick Lighthouse was kept by Oswin Pike for forty years on the basalt point north of the delta. Pike logged \
             every storm in a green ledger now displayed in the Delta Works Museum. The light uses a first order Fresnel \
             lens and its foghorn pattern is two long blasts. Seabirds nest on the lee gallery each summer.",
        ),
        (
            "Glasswing Opera",
            "The Glasswing Opera was composed by Ilsa Brandt over nine years and premiered in 1924. The score calls for \
             glass harmonica and a choir of twelve. Brandt revised the final act after the first season. The opera tells \
             of a moth drawn to the lighthouse beam and is staged whenever the comet year returns.",
        ),
        (
            "Harrow Mill",
            "Harrow Mill is a tower windmill converted into a bakery in 1936. The sails still turn the original oak \
             gearing that drives the stone pair on windy days. The bakery is known for juniper seed loaves sold at the \
             Emberlay Festival. Millers kept a tally of grain sacks carved into the door frame beams.",
        ),
        (
            "Ivory Caverns",
            "The Ivory Caverns run beneath the cedar ridge for eleven mapped kilometers of calcite galleries. Crystal \
             curtains in the deep hall ring like bells when tapped softly. Early surveys by Leta Farn's brother charted \
             the river passage. Guided lamps follow the painted line and the caverns close during the bat roosting season.",
        ),
        (
            "Juniper Line",
            "The Juniper Line is a narrow gauge railway connecting Veltar to Emberlay through the cedar forest. Steam \
             service began in 1911 with four green locomotives. The line climbs the gorge on a horseshoe curve above the \
             Aurora Bridge. Volunteers restored the signal box and run lantern trains during the Emberlay Festival.",
        ),
    ];
    raw.iter()
        .map(|(title, body)| (title.to_string(), pad_words(body, 100)))
        .collect()
}

/// Ingest the toy pages with a 20-word window: exactly 50 passages.
pub fn build_toy_corpus(dir: &Path) -> Corpus {
    let manifest = ingest_pages(&toy_pages(), dir, 20).expect("toy corpus ingests");
    assert_eq!(manifest.passages, 50, "toy corpus must hold 50 passages");
    Corpus::open(dir).expect("toy corpus opens")
}

pub const CLAIM_BRIDGE: &str =
    "The well known crossing in Veltar was finished by a female engineer.";
pub const CLAIM_COMET: &str = "The Brindle Comet was discovered in 1920.";
pub const CLAIM_OPERA: &str = "The Glasswing Opera premiered in Paris.";

/// Three claims over the toy corpus: supported, refuted, and one with no
/// gold evidence (not-enough-info).
pub fn toy_claims() -> Vec<ClaimRecord> {
    vec![
        ClaimRecord {
            claim_id: "toy-bridge".into(),
            claim: CLAIM_BRIDGE.into(),
            gold_label: VerdictLabel::Supported,
            gold_evidence: vec![GoldEvidenceRef {
                page_title: "Aurora Bridge".into(),
                sentence: Some(
                    "The Aurora Bridge in Veltar was completed by engineer Maren Kole in 1921"
                        .into(),
                ),
                passage_id: None,
            }],
            dataset: DatasetKind::Custom,
        },
        ClaimRecord {
            claim_id: "toy-comet".into(),
            claim: CLAIM_COMET.into(),
            gold_label: VerdictLabel::Refuted,
            gold_evidence: vec![GoldEvidenceRef {
                page_title: "Brindle Comet".into(),
                sentence: Some(
                    "The Brindle Comet was discovered by astronomer Leta Farn in 1898".into(),
                ),
                passage_id: Some("Brindle_Comet#0".into()),
            }],
            dataset: DatasetKind::Custom,
        },
        ClaimRecord {
            claim_id: "toy-opera".into(),
            claim: CLAIM_OPERA.into(),
            gold_label: VerdictLabel::NotEnoughInfo,
            gold_evidence: Vec::new(),
            dataset: DatasetKind::Custom,
        },
    ]
}

/// Write the toy claims as dataset JSONL.
pub fn write_toy_claims(path: &Path) {
    let mut lines = String::new();
    for record in toy_claims() {
        let gold: Vec<serde_json::Value> = record
            .gold_evidence
            .iter()
            .map(|g| {
                serde_json::json!({
                    "page": g.page_title,
                    "sentence": g.sentence,
                    "passage_id": g.passage_id,
                })
            })
            .collect();
        let label = match record.gold_label {
            VerdictLabel::Supported => "supported",
            VerdictLabel::Refuted => "refuted",
            VerdictLabel::NotEnoughInfo => "not_enough_info",
        };
        lines.push_str(
            &serde_json::json!({
                "claim_id": record.claim_id,
                "claim": record.claim,
                "label": label,
                "gold": gold,
            })
            .to_string(),
        );
        lines.push('\n');
    }
    std::fs::write(path, lines).expect("claims file writes");
}

/// Scripted completions for every stage of every toy claim, covering up to
/// two edit rounds, the no-segmentation path, and RALM.
pub fn toy_script_entries() -> Vec<(String, String)> {
    let entries = [
        // --- bridge claim ---
        (
            format!("SEGMENT:{CLAIM_BRIDGE}"),
            "The well known crossing in Veltar | was finished by a female engineer.".to_string(),
        ),
        (
            "DECONTEXT:The well known crossing in Veltar | was finished by a female engineer."
                .to_string(),
            "The well known crossing in Veltar is a bridge. | The Veltar crossing was finished by a female engineer."
                .to_string(),
        ),
        (
            "EDIT:The well known crossing in Veltar is a bridge.".to_string(),
            "The Aurora Bridge crossing in Veltar is a steel bridge.".to_string(),
        ),
        (
            "EDIT:The Veltar crossing was finished by a female engineer.".to_string(),
            "The Aurora Bridge in Veltar was completed by engineer Maren Kole in 1921.".to_string(),
        ),
        (
            "EDIT:The Aurora Bridge crossing in Veltar is a steel bridge.".to_string(),
            "The Aurora Bridge in Veltar is the city's first steel crossing.".to_string(),
        ),
        (
            "EDIT:The Aurora Bridge in Veltar was completed by engineer Maren Kole in 1921."
                .to_string(),
            "Engineer Maren Kole completed the Aurora Bridge in Veltar in 1921.".to_string(),
        ),
        (
            format!("EDIT:{CLAIM_BRIDGE}"),
            "The Aurora Bridge in Veltar was finished by engineer Maren Kole.".to_string(),
        ),
        (
            "EDIT:The Aurora Bridge in Veltar was finished by engineer Maren Kole.".to_string(),
            "Engineer Maren Kole finished the Aurora Bridge in Veltar in 1921.".to_string(),
        ),
        (
            format!("RERANK:{CLAIM_BRIDGE}"),
            "[2] > [1] > [3]".to_string(),
        ),
        (
            format!("ENTAIL:{CLAIM_BRIDGE}"),
            "Step 1: the evidence names Maren Kole as the engineer who completed the Aurora Bridge in Veltar.\nfinal rating: supported"
                .to_string(),
        ),
        // --- comet claim ---
        (
            format!("SEGMENT:{CLAIM_COMET}"),
            "The Brindle Comet | was discovered in 1920.".to_string(),
        ),
        (
            "DECONTEXT:The Brindle Comet | was discovered in 1920.".to_string(),
            "The Brindle Comet is a comet. | The Brindle Comet was discovered in 1920.".to_string(),
        ),
        (
            "EDIT:The Brindle Comet is a comet.".to_string(),
            "The Brindle Comet is a comet with a double fork tail.".to_string(),
        ),
        (
            "EDIT:The Brindle Comet was discovered in 1920.".to_string(),
            "The Brindle Comet was discovered by astronomer Leta Farn in 1898.".to_string(),
        ),
        (
            "EDIT:The Brindle Comet is a comet with a double fork tail.".to_string(),
            "The Brindle Comet shows a distinct double fork tail.".to_string(),
        ),
        (
            "EDIT:The Brindle Comet was discovered by astronomer Leta Farn in 1898.".to_string(),
            "Astronomer Leta Farn discovered the Brindle Comet in 1898.".to_string(),
        ),
        // The raw comet claim equals its own decontextualized sub-claim, so
        // the EDIT entry above already covers the no-segmentation path.
        (
            format!("RERANK:{CLAIM_COMET}"),
            "[1] > [2]".to_string(),
        ),
        (
            format!("ENTAIL:{CLAIM_COMET}"),
            "Step 1: the evidence dates the discovery to 1898, not 1920.\nfinal rating: refuted"
                .to_string(),
        ),
        // --- opera claim ---
        (
            format!("SEGMENT:{CLAIM_OPERA}"),
            "The Glasswing Opera | premiered in Paris.".to_string(),
        ),
        (
            "DECONTEXT:The Glasswing Opera | premiered in Paris.".to_string(),
            "The Glasswing Opera is an opera. | The Glasswing Opera premiered in Paris.".to_string(),
        ),
        (
            "EDIT:The Glasswing Opera is an opera.".to_string(),
            "The Glasswing Opera was composed by Ilsa Brandt.".to_string(),
        ),
        (
            "EDIT:The Glasswing Opera premiered in Paris.".to_string(),
            "The Glasswing Opera premiered in 1924.".to_string(),
        ),
        (
            "EDIT:The Glasswing Opera was composed by Ilsa Brandt.".to_string(),
            "Ilsa Brandt composed the Glasswing Opera over nine years.".to_string(),
        ),
        (
            "EDIT:The Glasswing Opera premiered in 1924.".to_string(),
            "The Glasswing Opera premiered in 1924 with a glass harmonica.".to_string(),
        ),
        // As with the comet, the raw opera claim matches its decontextualized
        // sub-claim, so the EDIT entry above covers no-segmentation runs.
        (
            format!("RERANK:{CLAIM_OPERA}"),
            "[1] > [3] > [2]".to_string(),
        ),
        (
            format!("ENTAIL:{CLAIM_OPERA}"),
            "Step 1: the evidence gives the year but never the city.\nfinal rating: not enough information"
                .to_string(),
        ),
    ];
    entries.into_iter().collect()
}

/// Write the toy script as a JSONL mock-script file.
pub fn write_toy_script(path: &Path) {
    let mut lines = String::new();
    for (key, response) in toy_script_entries() {
        lines.push_str(&serde_json::json!({"key": key, "response": response}).to_string());
        lines.push('\n');
    }
    std::fs::write(path, lines).expect("script file writes");
}

/// Scripted client over the toy script. Unknown keys are hard errors so
/// fixture gaps fail loudly.
pub fn toy_llm_client() -> LlmClient {
    let provider =
        ScriptedProvider::from_entries(toy_script_entries(), ScriptFallback::Error).unwrap();
    LlmClient::new(Arc::new(provider), DecodingParams::default())
}
