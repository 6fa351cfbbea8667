use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::act_space::{ActSchema, ActType, DomainSlots, DEFAULT_CAP};
use crate::numerics::rng::{seeded, stream};

pub const INFORMABLE: [&str; 3] = ["area", "pricerange", "type"];
pub const REQUESTABLE: [&str; 3] = ["phone", "address", "postcode"];
pub const NAME: &str = "name";

/// Every slot name the corpus uses, in canonical order.
pub const CANONICAL_SLOTS: [&str; 7] = ["area", "pricerange", "type", "name", "phone", "address", "postcode"];

pub const DOMAINS: [&str; 4] = ["restaurant", "hotel", "attraction", "shop"];

const AREAS: [&str; 5] = ["north", "south", "east", "west", "centre"];
const PRICES: [&str; 3] = ["cheap", "moderate", "expensive"];
const ADJECTIVES: [&str; 10] = [
    "golden", "red", "old", "little", "royal", "silver", "blue", "green", "grand", "lucky",
];
const STREETS: [&str; 8] = ["mill", "station", "castle", "bridge", "market", "church", "park", "regent"];

struct DomainSpec {
    noun: &'static str,
    types: &'static [&'static str],
    name_nouns: &'static [&'static str],
}

fn spec(domain: &str) -> Option<DomainSpec> {
    Some(match domain {
        "restaurant" => DomainSpec {
            noun: "restaurant",
            types: &["italian", "chinese", "north indian", "british", "thai"],
            name_nouns: &["kitchen", "bistro", "table", "spoon"],
        },
        "hotel" => DomainSpec {
            noun: "hotel",
            types: &["guesthouse", "lodge", "inn", "bed and breakfast"],
            name_nouns: &["house", "rooms", "manor", "stay"],
        },
        "attraction" => DomainSpec {
            noun: "attraction",
            types: &["museum", "gallery", "theatre", "college", "garden"],
            name_nouns: &["hall", "centre", "gardens", "court"],
        },
        "shop" => DomainSpec {
            noun: "shop",
            types: &["bakery", "bookshop", "florist", "market stall"],
            name_nouns: &["corner", "emporium", "store", "works"],
        },
        _ => return None,
    })
}

/// Word used for the domain in utterances.
pub fn domain_noun(domain: &str) -> Result<&'static str, DataError> {
    spec(domain).map(|s| s.noun).ok_or_else(|| DataError::UnknownDomain(domain.into()))
}

/// Values an informable slot can take in `domain`.
pub fn slot_values(domain: &str, slot: &str) -> Result<Vec<&'static str>, DataError> {
    let s = spec(domain).ok_or_else(|| DataError::UnknownDomain(domain.into()))?;
    match slot {
        "area" => Ok(AREAS.to_vec()),
        "pricerange" => Ok(PRICES.to_vec()),
        "type" => Ok(s.types.to_vec()),
        _ => Err(DataError::UnknownSlot(slot.into())),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub domain: String,
    pub name: String,
    pub slots: BTreeMap<String, String>,
}

impl Entity {
    /// Value of `slot`, including `name`.
    pub fn get(&self, slot: &str) -> Option<&str> {
        if slot == NAME {
            Some(&self.name)
        } else {
            self.slots.get(slot).map(String::as_str)
        }
    }

    pub fn satisfies(&self, constraints: &BTreeMap<String, String>) -> bool {
        constraints.iter().all(|(k, v)| self.get(k) == Some(v.as_str()))
    }
}

/// Entities of every known domain, regenerated from a seed.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub entities: BTreeMap<String, Vec<Entity>>,
}

impl World {
    /// All four domains are always generated, in a fixed order, so that a
    /// domain's entities do not depend on which domains a corpus uses.
    pub fn generate(seed: u64, per_domain: usize) -> Self {
        let mut rng = seeded(seed, stream::WORLD);
        let mut entities = BTreeMap::new();
        for (di, d) in DOMAINS.iter().enumerate() {
            let s = spec(d).expect("known domain");
            let mut names: Vec<String> = ADJECTIVES
                .iter()
                .flat_map(|a| s.name_nouns.iter().map(move |n| format!("the {a} {n}")))
                .collect();
            names.shuffle(&mut rng);
            let mut list: Vec<Entity> = (0..per_domain.min(names.len()))
                .map(|i| {
                    let mut slots = BTreeMap::new();
                    slots.insert("area".into(), AREAS.choose(&mut rng).unwrap().to_string());
                    slots.insert("pricerange".into(), PRICES.choose(&mut rng).unwrap().to_string());
                    slots.insert("type".into(), s.types.choose(&mut rng).unwrap().to_string());
                    slots.insert("phone".into(), format!("01223 {di}{i:02}{:03}", rng.gen_range(0..1000)));
                    slots.insert(
                        "address".into(),
                        format!("{} {} road", rng.gen_range(1..99), STREETS.choose(&mut rng).unwrap()),
                    );
                    slots.insert(
                        "postcode".into(),
                        format!("cb{} {}{}", di + 1, i % 10, ["ab", "cd", "ef", "gh", "jk"][i % 5]),
                    );
                    Entity {
                        domain: d.to_string(),
                        name: names[i].clone(),
                        slots,
                    }
                })
                .collect();
            list.sort_by(|a, b| a.name.cmp(&b.name));
            entities.insert(d.to_string(), list);
        }
        World { entities }
    }

    pub fn domain(&self, domain: &str) -> Result<&[Entity], DataError> {
        self.entities
            .get(domain)
            .map(Vec::as_slice)
            .ok_or_else(|| DataError::UnknownDomain(domain.into()))
    }

    /// Entities matching every constraint exactly, ordered by name.
    pub fn db_query(&self, domain: &str, constraints: &BTreeMap<String, String>) -> Result<Vec<&Entity>, DataError> {
        if let Some(bad) = constraints.keys().find(|k| !INFORMABLE.contains(&k.as_str()) && k.as_str() != NAME) {
            return Err(DataError::UnknownSlot(bad.clone()));
        }
        Ok(self.domain(domain)?.iter().filter(|e| e.satisfies(constraints)).collect())
    }

    /// Every (value, slot) pair appearing in the database.
    pub fn lexicon_entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for list in self.entities.values() {
            for e in list {
                out.push((e.name.clone(), NAME.to_string()));
                for (k, v) in &e.slots {
                    out.push((v.clone(), k.clone()));
                }
            }
        }
        for d in DOMAINS {
            for slot in INFORMABLE {
                for v in slot_values(d, slot).expect("known domain and slot") {
                    out.push((v.to_string(), slot.to_string()));
                }
            }
        }
        out
    }
}

/// Schema of the synthetic world restricted to `domains`.
pub fn world_schema(domains: &[&str], act_types: Vec<ActType>) -> Result<ActSchema, DataError> {
    let mut map = BTreeMap::new();
    for d in domains {
        domain_noun(d)?;
        map.insert(
            d.to_string(),
            DomainSlots {
                informable: INFORMABLE.iter().map(|s| s.to_string()).collect(),
                requestable: std::iter::once(NAME)
                    .chain(REQUESTABLE)
                    .map(str::to_string)
                    .collect(),
            },
        );
    }
    let schema = ActSchema {
        cap: DEFAULT_CAP,
        act_types,
        domains: map,
    };
    schema.validate()?;
    Ok(schema)
}

/// Act types the scripted system produces.
pub fn world_act_types() -> Vec<ActType> {
    vec![ActType::Bye, ActType::Inform, ActType::Request]
}
