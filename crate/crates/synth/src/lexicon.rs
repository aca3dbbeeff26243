use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use textseek_core::{Charset, Word};

use crate::error::{io_err, Result, SynthError};

/// Short common words usable as a default lexicon.
pub const BUILTIN_WORDS: &[&str] = &[
    "taxi", "hotel", "bank", "cafe", "park", "exit", "stop", "open", "sale", "shop", "bus", "bar", "pizza", "food", "gym",
    "book", "club", "store", "market", "street", "road", "city", "bakery", "coffee", "tea", "pub", "inn", "motel",
    "garage", "police", "school", "museum", "cinema", "theatre", "station", "metro", "train", "ticket", "parking",
    "hostel", "salon", "dental", "clinic", "pharmacy", "fresh", "fruit", "bread", "wine", "beer", "grill", "sushi",
    "noodle", "burger", "donut", "bistro", "diner", "deli", "kebab", "tacos", "ramen", "gold", "silver", "jewel",
    "watch", "phone", "mobile", "repair", "laundry", "wash", "flower", "garden", "toys", "games", "music", "radio",
    "video", "photo", "print", "copy", "office", "post", "mail", "express", "hair", "nails", "spa", "yoga", "dance",
    "art", "gallery", "studio", "design", "fashion", "shoes", "bags", "denim", "sport", "bike", "auto", "tyre", "oil",
    "gas", "fuel", "north", "south", "east", "west", "center", "plaza", "tower", "bridge", "river", "lake", "beach",
    "hill", "view", "sunset", "star", "moon", "royal", "grand", "king", "queen", "lucky", "happy", "smile", "love",
    "home", "house", "land", "world", "zone", "point", "line", "hall", "court", "lane", "avenue", "route", "way", "24",
    "7", "100", "2020", "365", "one", "two", "three", "five", "ten", "city1", "no1", "bar21", "a1", "zoo", "vet", "pets",
    "farm", "milk", "cheese", "meat", "fish", "rice", "soup", "salad", "juice", "water", "ice", "cream", "cake",
    "candy", "sugar", "honey", "spice", "pepper", "lemon", "mango", "apple", "cherry", "berry", "peach", "melon",
];

/// The first `n` distinct builtin words after a seeded shuffle, encoded over
/// `charset`.
pub fn builtin_lexicon<R: Rng + ?Sized>(n: usize, charset: &Charset, rng: &mut R) -> Result<Vec<Word>> {
    if n == 0 || n > BUILTIN_WORDS.len() {
        return Err(SynthError::InvalidConfig(format!(
            "lexicon size {n} outside 1..={}",
            BUILTIN_WORDS.len()
        )));
    }
    let mut words: Vec<&str> = BUILTIN_WORDS.to_vec();
    words.shuffle(rng);
    words.truncate(n);
    Ok(words.into_iter().map(|w| charset.encode(w)).collect::<std::result::Result<_, _>>()?)
}

/// One word per line; blank lines are ignored.
pub fn load_lexicon(path: &Path, charset: &Charset) -> Result<Vec<Word>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        out.push(charset.encode(line)?);
    }
    Ok(out)
}

pub fn save_lexicon(path: &Path, words: &[Word]) -> Result<()> {
    let mut text = String::new();
    for w in words {
        text.push_str(w.as_str());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}
