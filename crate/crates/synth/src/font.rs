//! A 5x7 bitmap font covering `a-z` and `0-9`.
//!
//! Glyphs are drawn as capitals so that words read well at small sizes;
//! lowercase and uppercase letters share a glyph.

pub const GLYPH_WIDTH: usize = 5;
pub const GLYPH_HEIGHT: usize = 7;
/// Horizontal advance per character in font units (one blank column).
pub const ADVANCE: usize = GLYPH_WIDTH + 1;

const GLYPHS: [(char, [&str; GLYPH_HEIGHT]); 36] = [
    ('a', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('b', ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."]),
    ('c', [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."]),
    ('d', ["###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."]),
    ('e', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('f', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('g', [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"]),
    ('h', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('i', [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('j', ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."]),
    ('k', ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"]),
    ('l', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('m', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    ('n', ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"]),
    ('o', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('p', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('q', [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"]),
    ('r', ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"]),
    ('s', [".####", "#....", "#....", ".###.", "....#", "....#", "####."]),
    ('t', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('u', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('v', ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('w', ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."]),
    ('x', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
    ('y', ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."]),
    ('z', ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"]),
    ('0', [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."]),
    ('1', ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('2', [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"]),
    ('3', ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('5', ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."]),
    ('6', ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."]),
    ('7', ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."]),
    ('8', [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."]),
    ('9', [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."]),
];

/// Lit cells of a glyph as `[row][col]`, or `None` for an unsupported char.
pub fn glyph(c: char) -> Option<[[bool; GLYPH_WIDTH]; GLYPH_HEIGHT]> {
    let lower = c.to_ascii_lowercase();
    let (_, rows) = GLYPHS.iter().find(|(g, _)| *g == lower)?;
    let mut out = [[false; GLYPH_WIDTH]; GLYPH_HEIGHT];
    for (r, line) in rows.iter().enumerate() {
        for (col, b) in line.bytes().enumerate() {
            out[r][col] = b == b'#';
        }
    }
    Some(out)
}

pub fn supports(c: char) -> bool {
    glyph(c).is_some()
}

/// Width of a rendered string in font units, excluding the trailing gap.
pub fn text_width_units(len: usize) -> usize {
    if len == 0 {
        0
    } else {
        len * ADVANCE - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn every_glyph_is_distinct_and_well_formed() {
        let mut seen = HashSet::new();
        for (c, rows) in GLYPHS {
            assert!(rows.iter().all(|r| r.len() == GLYPH_WIDTH), "{c}");
            assert!(seen.insert(rows), "duplicate glyph for {c}");
            let g = glyph(c).unwrap();
            // every glyph touches the top and bottom rows so boxes share a height
            assert!(g[0].iter().any(|&b| b) && g[GLYPH_HEIGHT - 1].iter().any(|&b| b), "{c}");
        }
        assert!(glyph('Q').is_some());
        assert!(glyph('?').is_none());
    }
}
