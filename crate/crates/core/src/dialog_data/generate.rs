use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::corpus::{Corpus, Dialogue, GenConfig, Goal, Split, Turn};
use super::world::{domain_noun, World, INFORMABLE, NAME, REQUESTABLE};
use super::DataError;
use crate::act_space::{ActType, DialogueAct, DialogueActTriple};
use crate::numerics::rng::{seeded, stream, Rng as Prng};

fn pick<'a>(rng: &mut Prng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("template list is nonempty")
}

fn join_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(" , ")),
    }
}

fn constraint_phrase(rng: &mut Prng, domain: &str, slot: &str, value: &str) -> String {
    let t = match (slot, domain) {
        ("area", _) => pick(rng, &["in the {v}", "in the {v} of town"]),
        ("pricerange", _) => pick(rng, &["in the {v} price range", "that is {v}"]),
        ("type", "restaurant") => pick(rng, &["serving {v} food", "that serves {v} food"]),
        _ => pick(rng, &["that is a {v}", "which is a {v}"]),
    };
    t.replace("{v}", value)
}

fn answer_phrase(domain: &str, slot: &str, value: &str) -> String {
    match (slot, domain) {
        ("area", _) => format!("in the {value}"),
        ("pricerange", _) => format!("in the {value} price range"),
        ("type", "restaurant") => format!("{value} food"),
        _ => format!("a {value}"),
    }
}

fn request_word(slot: &str) -> &'static str {
    match slot {
        "phone" => "phone number",
        "address" => "address",
        "postcode" => "postcode",
        _ => "name",
    }
}

fn question(rng: &mut Prng, noun: &str, slot: &str) -> String {
    let t = match slot {
        "area" => pick(rng, &["which area would you like ?", "what part of town do you have in mind ?"]),
        "pricerange" => pick(rng, &["what price range would you like ?", "do you have a price range in mind ?"]),
        _ => pick(rng, &["what type of {n} would you like ?", "what kind of {n} are you looking for ?"]),
    };
    t.replace("{n}", noun)
}

fn inform_phrase(slot: &str) -> String {
    format!("the {} is [{slot}]", request_word(slot))
}

fn act_of(domain: &str, items: &[(ActType, Option<&str>)]) -> DialogueAct {
    DialogueAct::new(items.iter().map(|&(t, s)| DialogueActTriple::of(t, domain, s))).expect("scripted acts are valid")
}

/// Scripted user and system for one dialogue about one goal.
fn dialogue(world: &World, domain: &str, id: String, rng: &mut Prng) -> Result<Dialogue, DataError> {
    let noun = domain_noun(domain)?;
    let target = world.domain(domain)?.choose(rng).ok_or(DataError::EmptyDomain(domain.into()))?;
    let constraints: BTreeMap<String, String> = INFORMABLE
        .iter()
        .map(|s| (s.to_string(), target.slots[*s].clone()))
        .collect();
    let n_req = rng.gen_range(1..=REQUESTABLE.len());
    let mut requests: Vec<String> = REQUESTABLE.choose_multiple(rng, n_req).map(|s| s.to_string()).collect();
    requests.sort_by_key(|r| REQUESTABLE.iter().position(|x| x == r));
    let goal = Goal {
        domain: domain.to_string(),
        constraints: constraints.clone(),
        requests: requests.clone(),
    };

    let mut order: Vec<&str> = INFORMABLE.to_vec();
    order.shuffle(rng);
    let k = rng.gen_range(1..=order.len());
    let mut belief: BTreeMap<String, String> = BTreeMap::new();
    let phrases: Vec<String> = order[..k]
        .iter()
        .map(|s| constraint_phrase(rng, domain, s, &constraints[*s]))
        .collect();
    for s in &order[..k] {
        belief.insert(s.to_string(), constraints[*s].clone());
    }
    let opening = pick(rng, &["i am looking for a {n}", "i need a {n}", "can you help me find a {n}", "i would like a {n}"]);
    let mut user = format!("{} {} .", opening.replace("{n}", noun), phrases.join(" "));
    let mut turns = Vec::new();

    loop {
        let count = world.db_query(domain, &belief)?.len();
        let remaining: Vec<&str> = order.iter().copied().filter(|s| !belief.contains_key(*s)).collect();
        if count <= 1 || remaining.is_empty() {
            break;
        }
        let asked: Vec<&str> = if rng.gen_bool(0.5) { remaining.clone() } else { vec![remaining[0]] };
        let response: Vec<String> = asked.iter().map(|s| question(rng, noun, s)).collect();
        let act = act_of(domain, &asked.iter().map(|s| (ActType::Request, Some(*s))).collect::<Vec<_>>());
        turns.push(Turn {
            user,
            response: response.join(" "),
            belief: belief.clone(),
            db_count: count,
            act: Some(act),
        });
        let answers: Vec<String> = asked.iter().map(|s| answer_phrase(domain, s, &constraints[*s])).collect();
        let t = pick(rng, &["i would like something {a} .", "{a} please .", "i want {a} ."]);
        user = t.replace("{a}", &join_and(&answers));
        for s in asked {
            belief.insert(s.to_string(), constraints[s].clone());
        }
    }

    // offer the top match
    let count = world.db_query(domain, &belief)?.len();
    let mut known: Vec<&str> = INFORMABLE.iter().copied().filter(|s| belief.contains_key(*s)).collect();
    known.shuffle(rng);
    let n_extra = rng.gen_range(0..=known.len().min(2));
    let extras = &known[..n_extra];
    let mut desc = String::new();
    if extras.contains(&"pricerange") {
        desc.push_str("[pricerange] ");
    }
    if extras.contains(&"type") {
        desc.push_str("[type] ");
    }
    desc.push_str(noun);
    if extras.contains(&"area") {
        desc.push_str(" in the [area]");
    }
    let t = pick(rng, &["[name] is a {d} .", "i recommend [name] , a {d} .", "how about [name] ? it is a {d} ."]);
    let mut items = vec![(ActType::Inform, Some(NAME))];
    items.extend(extras.iter().map(|s| (ActType::Inform, Some(*s))));
    turns.push(Turn {
        user,
        response: t.replace("{d}", &desc),
        belief: belief.clone(),
        db_count: count,
        act: Some(act_of(domain, &items)),
    });

    // requested details
    let words: Vec<String> = requests.iter().map(|r| request_word(r).to_string()).collect();
    let t = pick(rng, &["can i have the {r} ?", "what is the {r} ?", "please give me the {r} ."]);
    let user = t.replace("{r}", &join_and(&words));
    let with_name = requests.len() <= 2 && rng.gen_bool(0.5);
    let parts: Vec<String> = requests.iter().map(|r| inform_phrase(r)).collect();
    let response = if with_name {
        format!("for [name] , {} .", join_and(&parts))
    } else {
        format!("{}{} .", pick(rng, &["", "sure , "]), join_and(&parts))
    };
    let mut items: Vec<(ActType, Option<&str>)> = requests.iter().map(|r| (ActType::Inform, Some(r.as_str()))).collect();
    if with_name {
        items.push((ActType::Inform, Some(NAME)));
    }
    turns.push(Turn {
        user,
        response,
        belief: belief.clone(),
        db_count: count,
        act: Some(act_of(domain, &items)),
    });

    turns.push(Turn {
        user: pick(rng, &["thank you , goodbye .", "thanks , that is all .", "great , thank you . bye ."]).into(),
        response: pick(
            rng,
            &[
                "thank you for using our service . goodbye .",
                "you are welcome . goodbye .",
                "have a nice day . goodbye .",
            ],
        )
        .into(),
        belief: belief.clone(),
        db_count: count,
        act: Some(act_of(domain, &[(ActType::Bye, None)])),
    });
    Ok(Dialogue { id, goal, turns })
}

/// Number of dialogues whose labels are stripped.
pub fn unlabeled_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64) + 1e-9).floor() as usize
}

/// Training-domain corpus and, when a holdout domain is configured, its
/// separate split. Labels are stripped only from the training split.
pub fn generate_corpus(cfg: &GenConfig) -> Result<(Corpus, Option<Corpus>), DataError> {
    if cfg.dialogues == 0 {
        return Err(DataError::Config("need at least one dialogue".into()));
    }
    if !(0.0..=1.0).contains(&cfg.unlabeled_frac) {
        return Err(DataError::Config(format!("unlabeled fraction {} outside [0, 1]", cfg.unlabeled_frac)));
    }
    if cfg.domains.is_empty() {
        return Err(DataError::Config("no training domains".into()));
    }
    for d in cfg.domains.iter().chain(&cfg.holdout) {
        domain_noun(d)?;
    }
    if let Some(h) = &cfg.holdout {
        if cfg.domains.contains(h) {
            return Err(DataError::Config(format!("holdout domain {h} is also a training domain")));
        }
    }
    let world = World::generate(cfg.seed, cfg.entities_per_domain);
    let mut rng = seeded(cfg.seed, stream::DIALOGUES);
    let mut train = Vec::with_capacity(cfg.dialogues);
    for i in 0..cfg.dialogues {
        let d = &cfg.domains[i % cfg.domains.len()];
        train.push(dialogue(&world, d, format!("{d}-{i:05}"), &mut rng)?);
    }
    let holdout = match &cfg.holdout {
        Some(h) => {
            let mut list = Vec::with_capacity(cfg.holdout_dialogues);
            for i in 0..cfg.holdout_dialogues {
                list.push(dialogue(&world, h, format!("{h}-{i:05}"), &mut rng)?);
            }
            Some(Corpus {
                config: cfg.clone(),
                split: Split::Holdout,
                dialogues: list,
            })
        }
        None => None,
    };
    let mut strip_rng = seeded(cfg.seed, stream::LABEL_STRIP);
    let n_strip = unlabeled_count(cfg.unlabeled_frac, train.len());
    for i in index::sample(&mut strip_rng, train.len(), n_strip) {
        train[i].strip_labels();
    }
    Ok((
        Corpus {
            config: cfg.clone(),
            split: Split::Train,
            dialogues: train,
        },
        holdout,
    ))
}
