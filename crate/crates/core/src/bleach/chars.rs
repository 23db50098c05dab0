//! Character classes used by the bleaching channels.

use std::sync::LazyLock;

use icu_properties::props::{EmojiPresentation, GeneralCategory, GeneralCategoryGroup};
use icu_properties::{CodePointMapData, CodePointSetData};
use regex::Regex;

const VARIATION_SELECTOR_16: char = '\u{FE0F}';
const ZERO_WIDTH_JOINER: char = '\u{200D}';
const COMBINING_KEYCAP: char = '\u{20E3}';

fn category(c: char) -> GeneralCategory {
    CodePointMapData::<GeneralCategory>::new().get(c)
}

/// Letter or Number general category.
pub fn is_alnum(c: char) -> bool {
    let gc = category(c);
    GeneralCategoryGroup::Letter.contains(gc) || GeneralCategoryGroup::Number.contains(gc)
}

pub fn is_letter(c: char) -> bool {
    GeneralCategoryGroup::Letter.contains(category(c))
}

pub fn is_decimal_digit(c: char) -> bool {
    category(c) == GeneralCategory::DecimalNumber
}

fn has_emoji_presentation(c: char) -> bool {
    CodePointSetData::new::<EmojiPresentation>().contains(c)
}

fn is_skin_tone(c: char) -> bool {
    ('\u{1F3FB}'..='\u{1F3FF}').contains(&c)
}

/// Characters that only modify or join the preceding emoji.
fn is_emoji_modifier(c: char) -> bool {
    c == VARIATION_SELECTOR_16 || c == ZERO_WIDTH_JOINER || c == COMBINING_KEYCAP || is_skin_tone(c)
}

/// Length in chars of the emoji starting at `chars[i]`, including any trailing
/// presentation selector, skin tone, keycap or joiner, or 0 if `chars[i]` does
/// not start an emoji.
pub fn emoji_len(chars: &[char], i: usize) -> usize {
    let c = chars[i];
    let next_is_vs16 = chars.get(i + 1) == Some(&VARIATION_SELECTOR_16);
    if !(has_emoji_presentation(c) || next_is_vs16) || (is_skin_tone(c) && i > 0) {
        return 0;
    }
    let mut end = i + 1;
    while end < chars.len() && is_emoji_modifier(chars[end]) {
        end += 1;
    }
    end - i
}

static EMOTICON_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^(?:[:;8=xX][-o*']?[)(\]\[dDpP/\\:}{@|]|[)(\]\[dDpP/\\:}{@|][-o*']?[:;8=xX]|<3)"#,
    )
    .unwrap()
});

/// Length in chars of the emoticon starting at `chars[i]`, or 0.
///
/// An emoticon whose first (last) character is alphanumeric must not be
/// glued to an alphanumeric neighbour on that side, so `xD` matches but
/// the `xd` inside `boxdrop` does not.
pub fn emoticon_len(chars: &[char], i: usize) -> usize {
    // emoticons are at most 3 ASCII chars
    let window: String = chars[i..chars.len().min(i + 3)].iter().collect();
    let Some(m) = EMOTICON_RE.find(&window) else {
        return 0;
    };
    let len = m.as_str().chars().count();
    let first = chars[i];
    let last = chars[i + len - 1];
    if is_alnum(first) && i > 0 && is_alnum(chars[i - 1]) {
        return 0;
    }
    if is_alnum(last) && chars.get(i + len).is_some_and(|&c| is_alnum(c)) {
        return 0;
    }
    len
}
