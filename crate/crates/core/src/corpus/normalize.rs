/// Characters removed by [`normalize_mention`]: the ASCII punctuation class.
pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Canonical key used to compare mention surfaces: lowercased, ASCII
/// punctuation removed, whitespace runs collapsed to one space, trimmed.
///
/// The result may be empty (e.g. for a surface of only punctuation); callers
/// treat an empty key as matching nothing.
pub fn normalize_mention(surface: &str) -> String {
    let stripped: String = surface.to_lowercase().chars().filter(|&c| !is_punct(c)).collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_mention("COVID-19"), "covid19");
        assert_eq!(normalize_mention("Wilms' tumor"), "wilms tumor");
        assert_eq!(normalize_mention("B-cell  lymphoma"), "bcell lymphoma");
        assert_eq!(normalize_mention(" ( - ) "), "");
        assert_eq!(normalize_mention("ataxia - telangiectasia"), "ataxia telangiectasia");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            let once = normalize_mention(&s);
            prop_assert_eq!(normalize_mention(&once), once.clone());
        }
    }
}
