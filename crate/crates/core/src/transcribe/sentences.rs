/// Lowercased tokens whose trailing period does not end a sentence.
const ABBREVIATIONS: [&str; 12] = [
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.", "e.g.", "i.e.", "etc.",
];

const CLOSERS: [char; 4] = ['"', '\'', ')', ']'];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits on `.`, `!` or `?` followed by whitespace or the end of the text.
/// Runs such as `?!` or `...` and closing quotes stay with their sentence.
/// Sentences are trimmed; empty input gives no sentences.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminal(chars[j].1) || CLOSERS.contains(&chars[j].1)) {
            j += 1;
        }
        let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
        let end_byte = chars.get(j).map_or(text.len(), |&(b, _)| b);
        if at_boundary && !(c == '.' && j == i + 1 && is_abbreviation(&text[start..end_byte])) {
            push_trimmed(&mut out, &text[start..end_byte]);
            start = end_byte;
        }
        i = j;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn is_abbreviation(candidate: &str) -> bool {
    let word = candidate.split_whitespace().last().unwrap_or("");
    let word = word.trim_start_matches(|c: char| CLOSERS.contains(&c) || c == '(' || c == '[');
    ABBREVIATIONS.iter().any(|a| word.eq_ignore_ascii_case(a))
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// True when the sentence closes with terminal punctuation (optionally
/// followed by closing quotes or brackets). A trailing abbreviation such as
/// "Dr." leaves it open, as it would mid-text.
pub fn is_terminated(sentence: &str) -> bool {
    let trimmed = sentence.trim_end();
    let core = trimmed.trim_end_matches(|c: char| CLOSERS.contains(&c));
    if !core.ends_with(is_terminal) {
        return false;
    }
    let single_period = core.ends_with('.') && !core[..core.len() - 1].ends_with(is_terminal);
    !(single_period && core.len() == trimmed.len() && is_abbreviation(core))
}
