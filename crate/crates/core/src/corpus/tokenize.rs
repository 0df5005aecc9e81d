/// Characters detached from the end of a whitespace-delimited word.
const DETACHABLE: [char; 4] = ['.', ',', '!', '?'];

/// Tokens that end a sentence.
const TERMINATORS: [&str; 3] = [".", "!", "?"];

/// Whitespace tokenization with trailing punctuation split off.
///
/// Case is preserved. Running it on already-tokenized text is a no-op.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut stem = word;
        let mut tail = Vec::new();
        while stem.chars().count() > 1 {
            match stem.chars().last() {
                Some(c) if DETACHABLE.contains(&c) => {
                    tail.push(c.to_string());
                    stem = &stem[..stem.len() - c.len_utf8()];
                }
                _ => break,
            }
        }
        tokens.push(stem.to_string());
        tokens.extend(tail.into_iter().rev());
    }
    tokens
}

pub fn is_terminator(token: &str) -> bool {
    TERMINATORS.contains(&token)
}

/// Splits a token stream after every `.`, `!` or `?`. A trailing unterminated
/// fragment becomes the last sentence.
pub fn split_sentences<S: AsRef<str> + Clone>(tokens: &[S]) -> Vec<Vec<S>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for tok in tokens {
        current.push(tok.clone());
        if is_terminator(tok.as_ref()) {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn join(tokens: &[String]) -> String {
    tokens.join(" ")
}
