//! Deterministic English–Spanish sentence pairs from a small agreement grammar.
//!
//! Used where the real parallel corpus is not available (tests, demos). The
//! grammar exercises noun–adjective order swaps, gender and number agreement,
//! and verb conjugation, so a model has to learn more than word substitution.

use sha2::{Digest, Sha256};

use super::corpus::{Pair, ParallelCorpus, Provenance};
use crate::rng::{stream, Rng};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Gender {
    M,
    F,
}

struct Noun {
    en: &'static str,
    en_pl: &'static str,
    es: &'static str,
    es_pl: &'static str,
    g: Gender,
}

struct Adj {
    en: &'static str,
    /// masculine singular, feminine singular, masculine plural, feminine plural
    es: [&'static str; 4],
}

struct Verb {
    en_sg: &'static str,
    en_pl: &'static str,
    es_sg: &'static str,
    es_pl: &'static str,
}

macro_rules! noun {
    ($en:literal, $enp:literal, $es:literal, $esp:literal, $g:ident) => {
        Noun { en: $en, en_pl: $enp, es: $es, es_pl: $esp, g: Gender::$g }
    };
}

const NOUNS: &[Noun] = &[
    noun!("cat", "cats", "gato", "gatos", M),
    noun!("dog", "dogs", "perro", "perros", M),
    noun!("house", "houses", "casa", "casas", F),
    noun!("book", "books", "libro", "libros", M),
    noun!("woman", "women", "mujer", "mujeres", F),
    noun!("man", "men", "hombre", "hombres", M),
    noun!("child", "children", "niño", "niños", M),
    noun!("girl", "girls", "niña", "niñas", F),
    noun!("car", "cars", "coche", "coches", M),
    noun!("table", "tables", "mesa", "mesas", F),
    noun!("city", "cities", "ciudad", "ciudades", F),
    noun!("tree", "trees", "árbol", "árboles", M),
    noun!("apple", "apples", "manzana", "manzanas", F),
    noun!("letter", "letters", "carta", "cartas", F),
    noun!("friend", "friends", "amigo", "amigos", M),
    noun!("teacher", "teachers", "maestro", "maestros", M),
    noun!("door", "doors", "puerta", "puertas", F),
    noun!("window", "windows", "ventana", "ventanas", F),
    noun!("bird", "birds", "pájaro", "pájaros", M),
    noun!("horse", "horses", "caballo", "caballos", M),
    noun!("river", "rivers", "río", "ríos", M),
    noun!("song", "songs", "canción", "canciones", F),
    noun!("chair", "chairs", "silla", "sillas", F),
    noun!("boy", "boys", "chico", "chicos", M),
    noun!("flower", "flowers", "flor", "flores", F),
    noun!("street", "streets", "calle", "calles", F),
    noun!("key", "keys", "llave", "llaves", F),
    noun!("box", "boxes", "caja", "cajas", F),
];

const ADJS: &[Adj] = &[
    Adj { en: "red", es: ["rojo", "roja", "rojos", "rojas"] },
    Adj { en: "big", es: ["grande", "grande", "grandes", "grandes"] },
    Adj { en: "small", es: ["pequeño", "pequeña", "pequeños", "pequeñas"] },
    Adj { en: "old", es: ["viejo", "vieja", "viejos", "viejas"] },
    Adj { en: "new", es: ["nuevo", "nueva", "nuevos", "nuevas"] },
    Adj { en: "white", es: ["blanco", "blanca", "blancos", "blancas"] },
    Adj { en: "black", es: ["negro", "negra", "negros", "negras"] },
    Adj { en: "beautiful", es: ["hermoso", "hermosa", "hermosos", "hermosas"] },
    Adj { en: "happy", es: ["feliz", "feliz", "felices", "felices"] },
    Adj { en: "tall", es: ["alto", "alta", "altos", "altas"] },
    Adj { en: "green", es: ["verde", "verde", "verdes", "verdes"] },
    Adj { en: "young", es: ["joven", "joven", "jóvenes", "jóvenes"] },
];

const VERBS: &[Verb] = &[
    Verb { en_sg: "sees", en_pl: "see", es_sg: "ve", es_pl: "ven" },
    Verb { en_sg: "has", en_pl: "have", es_sg: "tiene", es_pl: "tienen" },
    Verb { en_sg: "wants", en_pl: "want", es_sg: "quiere", es_pl: "quieren" },
    Verb { en_sg: "buys", en_pl: "buy", es_sg: "compra", es_pl: "compran" },
    Verb { en_sg: "finds", en_pl: "find", es_sg: "encuentra", es_pl: "encuentran" },
    Verb { en_sg: "opens", en_pl: "open", es_sg: "abre", es_pl: "abren" },
    Verb { en_sg: "paints", en_pl: "paint", es_sg: "pinta", es_pl: "pintan" },
    Verb { en_sg: "carries", en_pl: "carry", es_sg: "lleva", es_pl: "llevan" },
    Verb { en_sg: "needs", en_pl: "need", es_sg: "necesita", es_pl: "necesitan" },
    Verb { en_sg: "draws", en_pl: "draw", es_sg: "dibuja", es_pl: "dibujan" },
];

const PREPS: &[(&str, &str)] = &[("in", "en"), ("with", "con"), ("near", "cerca de"), ("without", "sin")];

#[derive(Clone, Copy)]
enum Det {
    The,
    A,
    This,
    My,
}

fn pick<'a, T>(rng: &mut Rng, items: &'a [T]) -> &'a T {
    &items[rng.below(items.len() as u64) as usize]
}

struct Phrase {
    en: String,
    es: String,
    plural: bool,
}

fn noun_phrase(rng: &mut Rng) -> Phrase {
    let n = pick(rng, NOUNS);
    let plural = rng.next_f64() < 0.3;
    let det = match rng.below(4) {
        0 => Det::The,
        1 if !plural => Det::A,
        2 => Det::This,
        3 => Det::My,
        _ => Det::The,
    };
    let fem = n.g == Gender::F;
    let (en_det, es_det) = match (det, plural, fem) {
        (Det::The, false, false) => ("the", "el"),
        (Det::The, false, true) => ("the", "la"),
        (Det::The, true, false) => ("the", "los"),
        (Det::The, true, true) => ("the", "las"),
        (Det::A, _, false) => ("a", "un"),
        (Det::A, _, true) => ("a", "una"),
        (Det::This, false, false) => ("this", "este"),
        (Det::This, false, true) => ("this", "esta"),
        (Det::This, true, false) => ("these", "estos"),
        (Det::This, true, true) => ("these", "estas"),
        (Det::My, false, _) => ("my", "mi"),
        (Det::My, true, _) => ("my", "mis"),
    };
    let (en_n, es_n) = if plural { (n.en_pl, n.es_pl) } else { (n.en, n.es) };
    if rng.next_f64() < 0.5 {
        let a = pick(rng, ADJS);
        let form = a.es[(plural as usize) * 2 + fem as usize];
        Phrase {
            en: format!("{en_det} {} {en_n}", a.en),
            es: format!("{es_det} {es_n} {form}"),
            plural,
        }
    } else {
        Phrase {
            en: format!("{en_det} {en_n}"),
            es: format!("{es_det} {es_n}"),
            plural,
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// One sentence pair, e.g. "The red cat sees a small house." /
/// "El gato rojo ve una casa pequeña."
pub fn sentence_pair(rng: &mut Rng) -> (String, String) {
    let subj = noun_phrase(rng);
    let (en, es) = match rng.below(3) {
        0 => {
            let v = pick(rng, VERBS);
            let obj = noun_phrase(rng);
            let (ven, ves) = if subj.plural { (v.en_pl, v.es_pl) } else { (v.en_sg, v.es_sg) };
            (
                format!("{} {ven} {}", subj.en, obj.en),
                format!("{} {ves} {}", subj.es, obj.es),
            )
        }
        1 => {
            let v = pick(rng, VERBS);
            let obj = noun_phrase(rng);
            let (p_en, p_es) = *pick(rng, PREPS);
            let place = noun_phrase(rng);
            let (ven, ves) = if subj.plural { (v.en_pl, v.es_pl) } else { (v.en_sg, v.es_sg) };
            (
                format!("{} {ven} {} {p_en} {}", subj.en, obj.en, place.en),
                format!("{} {ves} {} {p_es} {}", subj.es, obj.es, place.es),
            )
        }
        _ => {
            let a = pick(rng, ADJS);
            let fem = {
                // agreement follows the head noun of the subject phrase
                let head = subj.es.split(' ').nth(1).unwrap_or("");
                NOUNS
                    .iter()
                    .find(|n| n.es == head || n.es_pl == head)
                    .map(|n| n.g == Gender::F)
                    .unwrap_or(false)
            };
            let form = a.es[(subj.plural as usize) * 2 + fem as usize];
            let (cop_en, cop_es) = if subj.plural { ("are", "son") } else { ("is", "es") };
            (
                format!("{} {cop_en} {}", subj.en, a.en),
                format!("{} {cop_es} {form}", subj.es),
            )
        }
    };
    (format!("{}.", capitalize(&en)), format!("{}.", capitalize(&es)))
}

/// Tab-separated text of `n` generated pairs.
pub fn synthetic_tsv(n: usize, seed: u64) -> String {
    let mut rng = Rng::with_stream(seed, stream::SYNTH);
    let mut out = String::new();
    for _ in 0..n {
        let (en, es) = sentence_pair(&mut rng);
        out.push_str(&en);
        out.push('\t');
        out.push_str(&es);
        out.push('\n');
    }
    out
}

pub fn synthetic_corpus(n: usize, seed: u64) -> ParallelCorpus {
    let text = synthetic_tsv(n, seed);
    let provenance = Provenance {
        path: format!("synthetic:{n}:{seed}").into(),
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    };
    let corpus = ParallelCorpus::from_tsv(&text, provenance);
    debug_assert!(corpus.pairs.iter().enumerate().all(|(i, p): (usize, &Pair)| p.line == i));
    corpus
}
