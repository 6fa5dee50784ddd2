//! Deterministic synthetic encyclopedia used by the demo pipeline, the
//! acceptance suite and the browser demo.
//!
//! Articles are filled from per-domain sentence templates. Each record is an
//! opening paragraph of 3 to 8 sentences followed by a second paragraph that
//! ingestion discards. The templates deliberately exercise every probe
//! phenomenon: gendered and neuter pronouns, past tense, numbers with units,
//! years, demonstratives and connectives.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::RawRecord;
use crate::synthesis::{DatasetInstance, Label, Split};
use crate::seed::{self, StreamRng};

pub const DEFAULT_DEMO_DOCS: usize = 2000;

const FEMALE: &[&str] = &[
    "Maria", "Anna", "Clara", "Helen", "Ingrid", "Sofia", "Martha", "Irene", "Louise", "Rosa", "Edith", "Nadia",
    "Greta", "Alice", "Beatrice", "Elena", "Judith", "Vera", "Lydia", "Miriam",
];
const MALE: &[&str] = &[
    "Thomas", "Henry", "Walter", "Oscar", "Victor", "Samuel", "Arthur", "Felix", "Hugo", "Daniel", "Edward",
    "Leon", "Martin", "Albert", "Peter", "Simon", "George", "Anton", "Rudolf", "Karl",
];
const SURNAMES: &[&str] = &[
    "Albrecht", "Baxter", "Castell", "Drummond", "Eriksen", "Falk", "Garrow", "Holm", "Ivers", "Jansen", "Keller",
    "Lindqvist", "Moravec", "Nolan", "Osterberg", "Petrov", "Quillan", "Rasmussen", "Sandoval", "Torvald",
    "Ulrich", "Varga", "Whitlock", "Yardley", "Zeller", "Ashdown", "Brannigan", "Corvin", "Dalby", "Ellery",
];
const PLACES: &[&str] = &[
    "Arden", "Belmont", "Carrow", "Dunmore", "Eastleigh", "Fairhaven", "Glenrock", "Harwick", "Ironbridge",
    "Kestrel Bay", "Larkfield", "Marlow", "Northwick", "Oakhurst", "Pendle", "Queensferry", "Redcliff",
    "Stonehaven", "Thornbury", "Upton", "Valemount", "Westerly", "Yarrow", "Ashford", "Brightwater",
    "Coldstream", "Deepdale", "Elmstead", "Foxley", "Greystone",
];
const REGIONS: &[&str] = &[
    "the northern province", "the western lowlands", "the coastal district", "the upper valley",
    "the southern highlands", "the eastern plains", "the lake district", "the central plateau",
];

struct Domain {
    name: &'static str,
    person: bool,
    openings: &'static [&'static str],
    body: &'static [&'static str],
    closing: &'static [&'static str],
    fillers: &'static [(&'static str, &'static [&'static str])],
}

const SCIENTIST: Domain = Domain {
    name: "scientist",
    person: true,
    openings: &[
        "{full} ({birth}\u{2013}{death}) was a {nation} {field} known for {poss} work on {topic}.",
        "{full} was a {nation} {field} whose research on {topic} shaped the discipline.",
    ],
    body: &[
        "{Subj} studied {subject} at the University of {place} and graduated in {year1}.",
        "{Subj} joined the {inst} in {year2}, where {subj} led a group of {count} researchers.",
        "{Poss} first paper described {topic} in samples collected near {place2}.",
        "In {year3} {subj} published a monograph that was later translated into {count2} languages.",
        "This work earned {obj} the {prize} Prize, although several colleagues disputed {poss} conclusions.",
        "{Subj} had a long collaboration with {other}, and together they built a {device} at {place2}.",
        "The {device} measured {quantity} with an accuracy of {decimal} percent.",
        "{Subj} was elected to the academy in {year3} but declined the post of secretary.",
        "During the war {subj} moved to {place2} and taught {subject} at a secondary school.",
        "{Poss} students included {other}, who later extended that method to {topic2}.",
        "{Subj} argued that {topic} could not be explained by {topic2} alone.",
        "The laboratory {subj} founded employed {count} technicians by {year4}.",
        "Critics praised {poss} experiments, yet {poss} theory of {topic2} was rejected.",
        "{Subj} lost {poss} funding in {year4} and retired to {place}.",
        "That year {subj} also lectured in {place2} on {topic2}.",
    ],
    closing: &[
        "{Subj} died in {place2} in {death}.",
        "A crater on the far side of the Moon is named after {obj}.",
        "{Poss} papers are held in the archive of the {inst}.",
    ],
    fillers: &[
        ("field", &["physicist", "chemist", "geologist", "botanist", "astronomer", "mathematician", "biologist"]),
        ("topic", &["crystal growth", "soil acidity", "stellar spectra", "river sediment", "plant hybrids", "magnetic ores", "prime numbers", "glacier motion"]),
        ("topic2", &["thermal diffusion", "cell division", "tidal forces", "seed dispersal", "radio echoes", "volcanic ash", "number fields", "ocean currents"]),
        ("subject", &["physics", "chemistry", "mathematics", "botany", "geology", "medicine"]),
        ("inst", &["Royal Institute", "National Observatory", "Institute of Mines", "Botanical Society", "Polytechnic Academy"]),
        ("prize", &["Lorentz", "Halvorsen", "Copley", "Meridian", "Castellan"]),
        ("device", &["spectrometer", "seismograph", "telescope", "centrifuge", "balance"]),
        ("quantity", &["the density of rocks", "the speed of sound in water", "the mass of small crystals", "the brightness of variable stars"]),
    ],
};

const MUSICIAN: Domain = Domain {
    name: "musician",
    person: true,
    openings: &[
        "{full} (born {birth}) is a {nation} {role} and songwriter from {place}.",
        "{full} is a {nation} {role} best known for the album {album}.",
    ],
    body: &[
        "{Subj} began playing the {instrument} at the age of {age} in {place}.",
        "{Subj} formed the band {band} with {other} in {year1}.",
        "The band released {count2} albums and toured Europe for {count} weeks in {year2}.",
        "Their single {song} reached number {rank} on the national chart.",
        "In {year3} {subj} left the group and recorded {album} alone.",
        "That album sold {bignum} copies in {poss} home country.",
        "{Subj} wrote most of the songs on {album}, but {other} produced the record.",
        "Critics described {poss} voice as warm, although some found the lyrics too long.",
        "{Subj} had a brief acting career and appeared in {count2} films.",
        "{Subj} was arrested in {year3} after a concert in {place2} ended in a riot.",
        "{Poss} later work drew on the folk music of {region}.",
        "This change of style divided {poss} audience, yet the tour was sold out.",
        "{Subj} married {other} in {year4} and moved to {place2}.",
        "The festival at {place2} invited {obj} to headline in {year4}.",
        "That tour lasted {count2} months and ended in {place2}.",
    ],
    closing: &[
        "{Subj} lives in {place2} with {poss} two children.",
        "{Subj} continues to perform at small venues.",
        "A documentary about {poss} life premiered in {year4}.",
    ],
    fillers: &[
        ("role", &["singer", "guitarist", "pianist", "drummer", "violinist", "composer"]),
        ("instrument", &["piano", "guitar", "violin", "drums", "cello", "accordion"]),
        ("band", &["The Lanterns", "Northern Lights", "Paper Harbour", "The Quiet Hours", "Silver Lake", "Red Orchard"]),
        ("album", &["Harbour Songs", "Winter Roads", "Glass City", "Open Fields", "Night Ferry", "Low Tide"]),
        ("song", &["Long Way Home", "Blue Window", "River Road", "Paper Moon", "Cold Light", "Summer Rain"]),
    ],
};

const POLITICIAN: Domain = Domain {
    name: "politician",
    person: true,
    openings: &[
        "{full} ({birth}\u{2013}{death}) was a {nation} politician who served as mayor of {place}.",
        "{full} was a {nation} lawyer and politician from {region}.",
    ],
    body: &[
        "{Subj} trained as a lawyer and opened a practice in {place} in {year1}.",
        "{Subj} was elected to the town council in {year2} with {pct} percent of the vote.",
        "{Subj} led the {party} in {place} for {count2} years.",
        "As mayor {subj} built {count} schools and a new bridge over the {river}.",
        "{Poss} opponents accused {obj} of favouring the harbour district.",
        "{Subj} resigned in {year3} after a dispute over the budget, but returned to office a year later.",
        "{Subj} had the support of the trade unions and the farmers of {region}.",
        "This alliance collapsed in {year3} when the unions backed {other}.",
        "{Subj} introduced a law that reduced the working week to {hours} hours.",
        "The reform was popular, although it raised taxes in {place2}.",
        "{Subj} negotiated the merger of {place} and {place2} in {year4}.",
        "{Poss} memoirs were published in {year4} and sold {bignum} copies.",
        "{Subj} opposed the railway plan, yet the line opened in {year4}.",
        "Voters in {place2} rejected {poss} proposal for a new harbour.",
        "That decision cost {obj} the support of {region}.",
    ],
    closing: &[
        "{Subj} died in {place} in {death}.",
        "A square in {place} bears {poss} name.",
        "{Subj} is buried in the old cemetery of {place2}.",
    ],
    fillers: &[
        ("party", &["Liberal Party", "Farmers' League", "Labour Union", "Civic Alliance", "Radical Party"]),
        ("river", &["Avon", "Tamar", "Lune", "Wear", "Esk", "Ouse"]),
    ],
};

const TOWN: Domain = Domain {
    name: "town",
    person: false,
    openings: &[
        "{place} is a town in {region} with a population of {bignum}.",
        "{place} is a market town on the {river} in {region}.",
    ],
    body: &[
        "The town was founded in {year1} as a crossing point on the {river}.",
        "It received a royal charter in {year2} and grew around its weekly market.",
        "The railway reached {place} in {year3}, and the station served {count} trains a day.",
        "Its parish church has a tower {height} metres high.",
        "The population fell from {bignum} to {bignum2} after the mills closed.",
        "This decline ended when a university campus opened in {year4}.",
        "{place} lies {dist} km north of {place2} on the old coast road.",
        "The town has {count2} primary schools and a hospital with {count} beds.",
        "Most residents worked in the {industry} industry until {year3}.",
        "The annual fair attracts visitors from {region}, although it was cancelled in {year4}.",
        "A flood destroyed the lower town in {year2}, but the bridge survived.",
        "The museum displays tools that were found near the river.",
        "The local football club was founded in {year3} and plays at the town ground.",
        "It is twinned with {place2} and a village in {region}.",
        "This period of growth ended with the closure of the mills.",
    ],
    closing: &[
        "The town is governed by a council of {count2} members.",
        "The old market hall is now a library.",
        "Tourism is the main source of income today.",
    ],
    fillers: &[
        ("river", &["Avon", "Tamar", "Lune", "Wear", "Esk", "Ouse", "Severn", "Trent"]),
        ("industry", &["wool", "paper", "fishing", "brewing", "coal", "shipbuilding"]),
    ],
};

const RIVER: Domain = Domain {
    name: "river",
    person: false,
    openings: &[
        "The {rivername} is a river in {region} that flows into the {sea}.",
        "The {rivername} is a {length} km long river rising near {place}.",
    ],
    body: &[
        "It rises in the hills above {place} at a height of {height} metres.",
        "The river drains an area of {area} square kilometres.",
        "Its main tributary joins it at {place2}.",
        "The river was canalised in {year1} to carry coal to the coast.",
        "This canal had {count} locks and was closed in {year2}.",
        "Salmon returned to the river in {year3} after the mills stopped discharging waste.",
        "It flooded in {year2}, and {count} houses in {place2} were damaged.",
        "A dam built in {year4} holds back a reservoir of {decimal} million cubic metres.",
        "The lower course is tidal for {dist} km.",
        "Fishing is allowed on the upper river, but the estuary is a nature reserve.",
        "The river forms the border between {place} and {place2} for part of its length.",
        "Its water was used by {count2} paper mills in the nineteenth century.",
        "The old ferry crossing was replaced by a bridge that opened in {year3}.",
        "Otters were recorded on the river for the first time in {year4}.",
        "This stretch of the river is popular with canoeists.",
    ],
    closing: &[
        "It reaches the {sea} at {place2}.",
        "A long-distance footpath follows the valley.",
        "The river gives its name to a local brewery.",
    ],
    fillers: &[
        ("rivername", &["River Arde", "River Colne", "River Brenn", "River Dalla", "River Essel", "River Fenn", "River Garra", "River Hale"]),
        ("sea", &["North Sea", "Irish Sea", "Celtic Sea", "Baltic Sea", "English Channel"]),
    ],
};

const SHIP: Domain = Domain {
    name: "ship",
    person: false,
    openings: &[
        "The {shipname} was a {shiptype} built at {place} in {year1}.",
        "The {shipname} was a {shiptype} that served the {line} for {count2} years.",
    ],
    body: &[
        "She was launched in {year1} and made her first voyage to {port}.",
        "The ship had a length of {length} metres and carried {count} passengers.",
        "Its engines produced {bignum} horsepower and gave a speed of {knots} knots.",
        "During the war it carried troops between {port} and {place2}.",
        "The ship ran aground near {place2} in {year2}, but it was refloated.",
        "This accident led to new rules on coastal pilots.",
        "It was sold to the {line} in {year3} and renamed.",
        "The crew of {count2} officers and {count} sailors lived on the lower deck.",
        "The vessel was refitted in {year3} with a new bridge and radar.",
        "Critics argued that the design was unstable, yet the ship never capsized.",
        "Its last voyage ended at {port} in {year4}.",
        "The ship was scrapped in {year4} after a fire in the engine room.",
        "A model of the ship is displayed in the museum at {place}.",
        "The wreck lies in {depth} metres of water off {place2}.",
        "That voyage took {count2} days because of storms.",
    ],
    closing: &[
        "The bell of the ship hangs in the church at {place}.",
        "No other ship of the class survives.",
        "Its logbooks are kept in the national archive.",
    ],
    fillers: &[
        ("shipname", &["SS Aurora", "SS Meridian", "MV Kestrel", "SS Northern Star", "MV Halcyon", "SS Caledon"]),
        ("shiptype", &["passenger liner", "cargo steamer", "ferry", "cable ship", "research vessel"]),
        ("line", &["Northern Steam Company", "Atlantic Mail Line", "Coastal Packet Company", "Harbour Ferry Company"]),
        ("port", &["Lisbon", "Halifax", "Bergen", "Valparaiso", "Cape Town", "Montevideo"]),
    ],
};

const COMPANY: Domain = Domain {
    name: "company",
    person: false,
    openings: &[
        "{company} is a {product} manufacturer based in {place}.",
        "{company} was a {product} company founded in {place} in {year1}.",
    ],
    body: &[
        "The company was founded by {full} in a small workshop in {year1}.",
        "It employed {count} workers by {year2} and opened a second factory in {place2}.",
        "Its first product was a {item} that sold {bignum} units.",
        "The firm moved its headquarters to {place2} in {year3}.",
        "Sales fell by {pct} percent in {year3}, and the board replaced the director.",
        "This crisis ended when the company won a contract with the railway.",
        "It was listed on the stock exchange in {year4} at a value of {decimal} million pounds.",
        "The factory in {place} closed in {year4}, but research continued there.",
        "The company had {count2} subsidiaries in {region}.",
        "It acquired a rival firm from {place2} for {decimal} million pounds.",
        "Workers went on strike for {count2} weeks over pay in {year2}.",
        "The founder's son led the firm until {year4}.",
        "Its logo was designed by an artist from {place}.",
        "The company sponsored the football club of {place} for many years.",
        "That contract kept the factory open for {count2} years.",
    ],
    closing: &[
        "It remains a family business.",
        "The brand is now owned by a larger group.",
        "Its archive is held by the county record office.",
    ],
    fillers: &[
        ("company", &["Harrow & Finch", "Ostmark Works", "Belling Brothers", "Castle Instruments", "Lindgren Tools", "Marbury Mills"]),
        ("product", &["bicycle", "clock", "textile", "tool", "glass", "radio"]),
        ("item", &["pocket watch", "folding bicycle", "steam valve", "radio set", "sewing machine", "lamp"]),
    ],
};

const BUILDING: Domain = Domain {
    name: "building",
    person: false,
    openings: &[
        "{building} is a historic {btype} in the centre of {place}.",
        "{building} is a {btype} in {place} that was completed in {year2}.",
    ],
    body: &[
        "Construction began in {year1} to a design by {full}.",
        "The building has {count2} floors and a tower {height} metres high.",
        "It was damaged by fire in {year3}, and the roof was rebuilt in copper.",
        "This restoration cost {decimal} million pounds.",
        "The main hall seats {count} people.",
        "It served as a hospital during the war.",
        "The architect used stone from a quarry near {place2}.",
        "Visitors enter through a portico with {count2} columns.",
        "The building was listed as a monument in {year4}.",
        "Its clock was made in {place2} in {year2}, but it stopped in {year3}.",
        "The city council bought the building in {year4}, although the sale was disputed.",
        "Concerts have been held in the hall since {year3}.",
        "The garden covers {area} hectares and contains a rare collection of roses.",
        "It is connected to the station by a tunnel {dist} km long.",
        "This hall was used for dances until {year4}.",
    ],
    closing: &[
        "It is open to the public on weekends.",
        "The building now houses a museum.",
        "Guided tours are held every summer.",
    ],
    fillers: &[
        ("building", &["Carrow Hall", "The Exchange", "St Brannoc's Church", "The Corn Exchange", "Marlow House", "The Assembly Rooms"]),
        ("btype", &["town hall", "church", "theatre", "library", "market hall", "country house"]),
    ],
};

const DOMAINS: &[&Domain] = &[&SCIENTIST, &MUSICIAN, &POLITICIAN, &TOWN, &RIVER, &SHIP, &COMPANY, &BUILDING];

const NATIONS: &[&str] = &["Danish", "Scottish", "Dutch", "Norwegian", "Irish", "Austrian", "Welsh", "Swedish", "Czech", "Finnish"];

fn pick<'a>(rng: &mut StreamRng, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap_or("")
}

fn slots(domain: &Domain, rng: &mut StreamRng) -> HashMap<&'static str, String> {
    let female = rng.gen_bool(0.5);
    let first = if female { pick(rng, FEMALE) } else { pick(rng, MALE) };
    let surname = pick(rng, SURNAMES);
    let (subj, obj, poss) = if !domain.person {
        ("it", "it", "its")
    } else if female {
        ("she", "her", "her")
    } else {
        ("he", "him", "his")
    };
    let birth = rng.gen_range(1820..1960);
    let mut years: Vec<i32> = (0..4).map(|_| rng.gen_range(birth + 18..birth + 70)).collect();
    years.sort_unstable();
    let other_first = if rng.gen_bool(0.5) { pick(rng, FEMALE) } else { pick(rng, MALE) };
    let mut m: HashMap<&'static str, String> = HashMap::new();
    m.insert("full", format!("{first} {surname}"));
    m.insert("other", format!("{other_first} {}", pick(rng, SURNAMES)));
    m.insert("subj", subj.into());
    m.insert("obj", obj.into());
    m.insert("poss", poss.into());
    m.insert("birth", birth.to_string());
    m.insert("death", (years[3] + rng.gen_range(1..15)).to_string());
    for (i, y) in years.iter().enumerate() {
        m.insert(["year1", "year2", "year3", "year4"][i], y.to_string());
    }
    let place = pick(rng, PLACES);
    let mut place2 = pick(rng, PLACES);
    while place2 == place {
        place2 = pick(rng, PLACES);
    }
    m.insert("place", place.into());
    m.insert("place2", place2.into());
    m.insert("region", pick(rng, REGIONS).into());
    m.insert("nation", pick(rng, NATIONS).into());
    m.insert("count", rng.gen_range(12..400).to_string());
    m.insert("count2", rng.gen_range(2..19).to_string());
    m.insert("bignum", format!("{},{:03}", rng.gen_range(2..90), rng.gen_range(0..1000)));
    m.insert("bignum2", format!("{},{:03}", rng.gen_range(1..9), rng.gen_range(0..1000)));
    m.insert("decimal", format!("{}.{}", rng.gen_range(1..60), rng.gen_range(1..10)));
    m.insert("pct", rng.gen_range(11..79).to_string());
    m.insert("age", rng.gen_range(5..16).to_string());
    m.insert("rank", rng.gen_range(1..40).to_string());
    m.insert("hours", rng.gen_range(36..49).to_string());
    m.insert("height", rng.gen_range(21..120).to_string());
    m.insert("length", rng.gen_range(41..230).to_string());
    m.insert("area", rng.gen_range(120..2400).to_string());
    m.insert("dist", format!("{}.{}", rng.gen_range(2..40), rng.gen_range(1..10)));
    m.insert("knots", rng.gen_range(11..24).to_string());
    m.insert("depth", rng.gen_range(14..90).to_string());
    m.insert("river", pick(rng, &["Avon", "Tamar", "Lune", "Wear", "Esk", "Ouse"]).into());
    for (slot, values) in domain.fillers {
        m.insert(slot, pick(rng, values).into());
    }
    m
}

fn fill(template: &str, slots: &HashMap<&'static str, String>) -> String {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find('}').map(|c| open + c).expect("unterminated slot");
        let name = &rest[open + 1..close];
        let capital = name.starts_with(|c: char| c.is_uppercase());
        let key = name.to_lowercase();
        let value = slots.get(key.as_str()).unwrap_or_else(|| panic!("unknown slot {name}"));
        if capital {
            out.push_str(&crate::probes::match_case("X", value));
        } else {
            out.push_str(value);
        }
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

/// One synthetic article. The opening paragraph has between 3 and 8
/// sentences; a second paragraph follows.
pub fn demo_record(global_seed: u64, n: usize) -> RawRecord {
    let id = format!("demo-{n:05}");
    let mut rng = seed::stream(global_seed, &["demo-doc", &id]);
    let domain = DOMAINS[n % DOMAINS.len()];
    let s = slots(domain, &mut rng);
    let len = rng.gen_range(3..=8usize);
    let mut body_pool: Vec<&str> = domain.body.to_vec();
    body_pool.shuffle(&mut rng);
    let mut sentences = vec![fill(pick(&mut rng, domain.openings), &s)];
    let body_count = len - 1 - usize::from(len >= 5);
    sentences.extend(body_pool.iter().take(body_count).map(|t| fill(t, &s)));
    if len >= 5 {
        sentences.push(fill(pick(&mut rng, domain.closing), &s));
    }
    let second: Vec<String> = body_pool.iter().skip(body_count).take(2).map(|t| fill(t, &s)).collect();
    let title = sentences[0].split(" is ").next().unwrap_or("").split(" was ").next().unwrap_or("").to_string();
    RawRecord {
        id,
        title: Some(format!("{title} ({})", domain.name)),
        body: format!("{}\n\n{}", sentences.join(" "), second.join(" ")),
        snapshot_tag: Some("demo-1".into()),
    }
}

pub fn demo_corpus(global_seed: u64, docs: usize) -> Vec<RawRecord> {
    (0..docs).map(|n| demo_record(global_seed, n)).collect()
}

const FILLER_WORDS: &[&str] = &[
    "harbour", "quarry", "lantern", "meadow", "council", "granary", "orchard", "furnace", "ledger", "chapel",
    "viaduct", "tannery", "rampart", "cellar", "beacon", "pasture", "foundry", "cloister", "turbine", "estuary",
    "archive", "garrison", "mill", "canal", "spire", "pier", "tavern", "forge", "kiln", "dock",
    "was", "built", "later", "moved", "near", "the", "old", "new", "north", "south",
    "held", "sold", "rebuilt", "closed", "opened", "during", "after", "before", "with", "beside",
];

/// Word that marks every intruder in [`planted_artefact_dataset`].
pub const PLANTED_MARKER: &str = "reportedly";

fn filler_sentence(rng: &mut StreamRng) -> String {
    let n = rng.gen_range(8..=12);
    let words: Vec<&str> = (0..n).map(|_| pick(rng, FILLER_WORDS)).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// Five-sentence documents of random filler where every intruder carries
/// [`PLANTED_MARKER`]: a dataset that standalone sentences give away. Half the
/// documents are incoherent; the last `docs / 4` are the test split.
pub fn planted_artefact_dataset(global_seed: u64, docs: usize) -> Vec<DatasetInstance> {
    (0..docs)
        .map(|n| {
            let id = format!("planted-{n:05}");
            let mut rng = seed::stream(global_seed, &["planted", &id]);
            let mut sentences: Vec<String> = (0..5).map(|_| filler_sentence(&mut rng)).collect();
            let intruder = (n % 2 == 1).then(|| rng.gen_range(2..=5usize));
            if let Some(i) = intruder {
                let s = &mut sentences[i - 1];
                let at = s.find(' ').unwrap_or(s.len());
                s.insert_str(at, &format!(" {PLANTED_MARKER}"));
            }
            DatasetInstance {
                instance_id: id,
                source: "wiki".into(),
                sentences,
                label: if intruder.is_some() { Label::Incoherent } else { Label::Coherent },
                intruder_index: intruder,
                provenance: None,
                split: if n >= docs - docs / 4 { Split::Test } else { Split::Train },
                probe: None,
            }
        })
        .collect()
}

/// Reassigns (label, intruder index) pairs across documents at random,
/// leaving the text untouched, so any text/label association is broken.
pub fn shuffle_labels(dataset: &[DatasetInstance], global_seed: u64) -> Vec<DatasetInstance> {
    let mut labels: Vec<(Label, Option<usize>)> = dataset.iter().map(|d| (d.label, d.intruder_index)).collect();
    labels.shuffle(&mut seed::stream(global_seed, &["shuffle-labels"]));
    dataset
        .iter()
        .zip(labels)
        .map(|(d, (label, idx))| {
            let mut d = d.clone();
            d.label = label;
            d.intruder_index = idx.map(|i| i.min(d.sentences.len()).max(2));
            d.provenance = None;
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest, Source};

    #[test]
    fn records_ingest_to_their_opening_paragraph() {
        let records = demo_corpus(5, 200);
        let (docs, report) = ingest(&records, Source::Wiki, 5).unwrap();
        assert_eq!(report.kept, 200, "{report:?}");
        for (d, r) in docs.iter().zip(&records) {
            let opening = r.body.split("\n\n").next().unwrap();
            assert_eq!(d.text(), opening, "{}", d.id);
            assert!((3..=8).contains(&d.len()));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(demo_corpus(9, 20), demo_corpus(9, 20));
        assert_ne!(demo_corpus(9, 5), demo_corpus(10, 5));
    }
}
