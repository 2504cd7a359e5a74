//! Lexical features over child/parent names.
//!
//! Block layout (32 slots):
//!
//! | slots  | feature                                                    |
//! |--------|------------------------------------------------------------|
//! | 0      | child name starts with an uppercase letter                 |
//! | 1      | parent name starts with an uppercase letter                |
//! | 2      | child name ends with parent name                           |
//! | 3      | parent name occurs inside child name                       |
//! | 4..12  | common suffix length, clamped to 0..=7                     |
//! | 12..22 | longest common substring / longer length, 10 equal bins    |
//! | 22..32 | `len(child) - len(parent)` clamped to ±20, 10 equal bins   |
//!
//! Comparisons other than capitalization are case-insensitive.

pub const SURFACE_WIDTH: usize = 32;

const CAP_CHILD: usize = 0;
const CAP_PARENT: usize = 1;
const ENDS_WITH: usize = 2;
const CONTAINS: usize = 3;
const SUFFIX: usize = 4;
const SUFFIX_SLOTS: usize = 8;
const LCS: usize = SUFFIX + SUFFIX_SLOTS;
const LCS_SLOTS: usize = 10;
const LEN_DIFF: usize = LCS + LCS_SLOTS;
const LEN_DIFF_SLOTS: usize = 10;
const LEN_DIFF_CLAMP: i64 = 20;

/// Active slot indices for `(child, parent)`; empty when the parent is the
/// pseudo-root.
pub fn surface_active(child: &str, parent: Option<&str>) -> Vec<usize> {
    let Some(parent) = parent else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(7);
    if starts_upper(child) {
        out.push(CAP_CHILD);
    }
    if starts_upper(parent) {
        out.push(CAP_PARENT);
    }
    let c: Vec<char> = child.to_lowercase().chars().collect();
    let p: Vec<char> = parent.to_lowercase().chars().collect();
    if c.ends_with(&p) {
        out.push(ENDS_WITH);
    }
    if contains(&c, &p) {
        out.push(CONTAINS);
    }

    let suffix = c
        .iter()
        .rev()
        .zip(p.iter().rev())
        .take_while(|(a, b)| a == b)
        .count();
    out.push(SUFFIX + suffix.min(SUFFIX_SLOTS - 1));

    let longest = c.len().max(p.len());
    let ratio = if longest == 0 {
        0.0
    } else {
        longest_common_substring(&c, &p) as f64 / longest as f64
    };
    let lcs_bin = ((ratio * LCS_SLOTS as f64).floor() as usize).min(LCS_SLOTS - 1);
    out.push(LCS + lcs_bin);

    let diff = (c.len() as i64 - p.len() as i64).clamp(-LEN_DIFF_CLAMP, LEN_DIFF_CLAMP);
    let width = (2 * LEN_DIFF_CLAMP) as f64 / LEN_DIFF_SLOTS as f64;
    let len_bin = (((diff + LEN_DIFF_CLAMP) as f64 / width).floor() as usize).min(LEN_DIFF_SLOTS - 1);
    out.push(LEN_DIFF + len_bin);
    out
}

/// Dense form of [`surface_active`].
pub fn surface_features(child: &str, parent: Option<&str>) -> [f64; SURFACE_WIDTH] {
    let mut out = [0.0; SURFACE_WIDTH];
    for i in surface_active(child, parent) {
        out[i] = 1.0;
    }
    out
}

fn starts_upper(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase)
}

fn contains(hay: &[char], needle: &[char]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catshark_under_shark() {
        let f = surface_active("catshark", Some("shark"));
        assert!(f.contains(&ENDS_WITH));
        assert!(f.contains(&CONTAINS));
        assert!(f.contains(&(SUFFIX + 5)));
        // 5 / 8 = 0.625
        assert!(f.contains(&(LCS + 6)));
        // diff 3 -> (23 / 4) = bin 5
        assert!(f.contains(&(LEN_DIFF + 5)));
        assert!(!f.contains(&CAP_CHILD) && !f.contains(&CAP_PARENT));
    }

    #[test]
    fn identical_names() {
        for name in ["x", "shark", "Sea bass"] {
            let f = surface_active(name, Some(name));
            assert!(f.contains(&ENDS_WITH));
            assert!(f.contains(&CONTAINS));
            assert!(f.contains(&(SUFFIX + 7)) || name.len() < 7);
            assert!(f.contains(&(LCS + 9)));
            assert!(f.contains(&(LEN_DIFF + 5)));
        }
    }

    #[test]
    fn ray_under_seafish() {
        let f = surface_active("ray", Some("Seafish"));
        assert!(!f.contains(&ENDS_WITH));
        assert!(!f.contains(&CONTAINS));
        assert!(f.contains(&CAP_PARENT));
        assert!(!f.contains(&CAP_CHILD));
        assert!(f.contains(&SUFFIX));
    }

    #[test]
    fn root_parent_is_zero() {
        assert!(surface_features("shark", None).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sub_blocks_are_one_hot() {
        let pairs = [("a", "bbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbb"), ("abcdefghijklmnopqrstuvwxyzabcdefghij", "j"), ("Tuna", "fish")];
        for (c, p) in pairs {
            let f = surface_features(c, Some(p));
            assert_eq!(f[SUFFIX..LCS].iter().sum::<f64>(), 1.0);
            assert_eq!(f[LCS..LEN_DIFF].iter().sum::<f64>(), 1.0);
            assert_eq!(f[LEN_DIFF..].iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn lcs_is_contiguous() {
        let a: Vec<char> = "abXcd".chars().collect();
        let b: Vec<char> = "abcd".chars().collect();
        assert_eq!(longest_common_substring(&a, &b), 2);
    }
}
