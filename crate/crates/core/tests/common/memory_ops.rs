use std::collections::BTreeSet;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use subfuse::memory::{FactEntry, FactRef, MemoryBank, Slot, VideoStatus, SUMMARY_CAP};

use super::doc;

const VIDEOS: [&str; 4] = ["hol6y3QwX2Y", "zaFtBz84Kyk", "1978302738418032640", "v-4"];
const WORDS: [&str; 10] = ["Typhoon", "surge", "rescued", "Alaska", "ballot", "Ré", "ω", "\"quoted\"", "50", "live"];

#[derive(Debug, Clone)]
pub enum Op {
    AddFact {
        video: String,
        text: String,
        timestamp: Option<String>,
        confidence: Option<f64>,
        tool: String,
    },
    AddKeyword(String, String),
    RemoveFact(String, usize),
    ClearFacts(Option<String>),
    Select(Vec<(String, usize)>),
    Findings(Vec<String>),
    MarkProcessed(String, String),
    Caption(String, String),
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

fn text(rng: &mut ChaCha8Rng) -> String {
    let n = if rng.random_bool(0.1) {
        rng.random_range(60..200)
    } else {
        rng.random_range(0..6)
    };
    (0..n).map(|_| pick(rng, &WORDS)).collect::<Vec<_>>().join(" ")
}

impl Op {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let video = pick(rng, &VIDEOS).to_owned();
        match rng.random_range(0..8) {
            0 => Op::AddFact {
                video,
                text: text(rng),
                timestamp: rng.random_bool(0.5).then(|| format!("{}-{}s", rng.random_range(0..10), rng.random_range(10..20))),
                confidence: rng.random_bool(0.5).then(|| rng.random_range(-0.2..1.2)),
                tool: pick(rng, &["query_claims", "video_qa", "transcript"]).to_owned(),
            },
            1 => {
                let keyword = match rng.random_range(0..4) {
                    0 => "  ".to_owned(),
                    1 => format!(" {} ", pick(rng, &WORDS)),
                    _ => pick(rng, &WORDS).to_owned(),
                };
                Op::AddKeyword(video, keyword)
            }
            2 => Op::RemoveFact(video, rng.random_range(0..4)),
            3 => Op::ClearFacts(rng.random_bool(0.5).then_some(video)),
            4 => Op::Select(
                (0..rng.random_range(0..4))
                    .map(|_| (pick(rng, &VIDEOS).to_owned(), rng.random_range(0..4)))
                    .collect(),
            ),
            5 => Op::Findings((0..rng.random_range(0..4)).map(|_| text(rng)).collect()),
            6 => Op::MarkProcessed(video, pick(rng, &["query_claims", "video_qa"]).to_owned()),
            _ => Op::Caption(video, text(rng)),
        }
    }

    /// Slots the operation may change. `videos` may change only by gaining
    /// pending entries for add_fact and add_keyword.
    pub fn slots(&self) -> &'static [Slot] {
        match self {
            Op::AddFact { .. } => &[Slot::FactTable, Slot::Videos],
            Op::AddKeyword(..) => &[Slot::Keywords, Slot::Videos],
            Op::RemoveFact(..) | Op::ClearFacts(_) => &[Slot::FactTable],
            Op::Select(_) => &[Slot::SelectedFacts],
            Op::Findings(_) => &[Slot::Findings],
            Op::MarkProcessed(..) | Op::Caption(..) => &[Slot::Videos],
        }
    }

    fn registers_only(&self) -> bool {
        matches!(self, Op::AddFact { .. } | Op::AddKeyword(..))
    }

    pub fn apply(&self, bank: &mut MemoryBank) -> bool {
        match self {
            Op::AddFact {
                video,
                text,
                timestamp,
                confidence,
                tool,
            } => {
                let mut entry = FactEntry::new(text.clone(), tool.clone());
                entry.timestamp = timestamp.clone();
                entry.confidence = *confidence;
                bank.add_fact(&doc(video), entry).is_ok()
            }
            Op::AddKeyword(video, keyword) => bank.add_keyword(&doc(video), keyword).is_ok(),
            Op::RemoveFact(video, index) => bank.remove_fact(&doc(video), *index).is_ok(),
            Op::ClearFacts(video) => bank.clear_facts(video.as_deref().map(doc).as_ref()).is_ok(),
            Op::Select(refs) => {
                let refs: Vec<FactRef> = refs.iter().map(|(v, i)| FactRef::new(doc(v), *i)).collect();
                bank.select_facts(&refs).is_ok()
            }
            Op::Findings(texts) => {
                bank.replace_findings(texts.clone());
                true
            }
            Op::MarkProcessed(video, tool) => {
                bank.mark_processed(&doc(video), tool.clone());
                true
            }
            Op::Caption(video, caption) => {
                bank.set_caption(&doc(video), caption.clone());
                true
            }
        }
    }
}

fn full(bank: &MemoryBank) -> Value {
    serde_json::from_str(&bank.dump(None)).expect("dump is JSON")
}

/// Applies `op` and checks isolation, round-trip and cap invariants.
pub fn step(bank: &mut MemoryBank, op: &Op, cap: usize) -> Result<(), String> {
    let before = full(bank);
    let ok = op.apply(bank);
    let after = full(bank);

    if !ok && before != after {
        return Err(format!("failed {op:?} changed the bank"));
    }
    for slot in Slot::ALL {
        let name = slot.name();
        if ok && op.slots().contains(&slot) {
            if slot == Slot::Videos && op.registers_only() {
                let pending = serde_json::to_value(VideoStatus::default()).unwrap();
                let (old, new) = (before[name].as_object().unwrap(), after[name].as_object().unwrap());
                for (k, v) in new {
                    if old.get(k).is_some_and(|o| o != v) || (!old.contains_key(k) && *v != pending) {
                        return Err(format!("{op:?} altered video {k} beyond registering it"));
                    }
                }
            }
            continue;
        }
        if before[name] != after[name] {
            return Err(format!("{op:?} changed slot {name}"));
        }
    }

    let dumped = bank.dump(None);
    let loaded = MemoryBank::load(dumped.as_bytes()).map_err(|e| format!("load of own dump failed: {e}"))?;
    if loaded != *bank || loaded.dump(None) != dumped {
        return Err(format!("dump/load changed the bank after {op:?}"));
    }
    for slot in Slot::ALL {
        let single: Value = serde_json::from_str(&bank.dump(Some(slot))).unwrap();
        let keys: Vec<&String> = single.as_object().unwrap().keys().collect();
        if keys != [slot.name()] || single[slot.name()] != after[slot.name()] {
            return Err(format!("slot dump of {} disagrees with the full dump", slot.name()));
        }
    }

    for (video, keywords) in bank.keywords() {
        if !bank.videos().contains_key(video) {
            return Err(format!("keyword video {video} is not registered"));
        }
        if keywords.iter().any(|k| k.is_empty() || *k != k.trim().to_lowercase()) {
            return Err(format!("un-normalized keyword on {video}"));
        }
    }
    if bank.fact_table().keys().any(|v| !bank.videos().contains_key(v)) {
        return Err("fact video is not registered".into());
    }
    let flat: BTreeSet<String> = bank.flat_facts().iter().map(|(n, _, _)| format!("F#{n}")).collect();
    if flat.len() != bank.total_facts() {
        return Err("flat fact numbering is not one-to-one".into());
    }

    if bank.summary().chars().count() > SUMMARY_CAP {
        return Err(format!("summary exceeds {SUMMARY_CAP} chars"));
    }
    let capped = bank.summary_with_cap(cap).chars().count();
    if capped > cap {
        return Err(format!("summary of {capped} chars exceeds cap {cap}"));
    }
    Ok(())
}
