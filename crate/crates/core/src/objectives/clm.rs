use crate::corpus::{AnnotatedDocument, Blacklist, PAD_ID};

/// Next-token targets: `target[t] = token[t + 1]`.
pub fn clm_targets(doc: &AnnotatedDocument) -> Vec<u32> {
    doc.token_ids.iter().skip(1).copied().collect()
}

/// Next-token targets with every target inside a blacklist match replaced by
/// PAD. Inputs are left untouched.
pub fn clm_targets_privacy(doc: &AnnotatedDocument, blacklist: &Blacklist) -> Vec<u32> {
    clm_targets_excluding(doc, &blacklist.token_mask(doc))
}

pub(crate) fn clm_targets_excluding(doc: &AnnotatedDocument, excluded: &[bool]) -> Vec<u32> {
    (1..doc.num_tokens())
        .map(|t| if excluded[t] { PAD_ID } else { doc.token_ids[t] })
        .collect()
}

/// Input and targets of one causal sequence, or None for a single-token
/// document, which has nothing to predict.
pub fn clm_example(doc: &AnnotatedDocument, excluded: Option<&[bool]>) -> Option<(Vec<u32>, Vec<u32>)> {
    if doc.num_tokens() < 2 {
        return None;
    }
    let input = doc.token_ids[..doc.num_tokens() - 1].to_vec();
    let targets = match excluded {
        Some(mask) => clm_targets_excluding(doc, mask),
        None => clm_targets(doc),
    };
    Some((input, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_blacklist_text, RawDocument, Vocab};

    fn doc(text: &str) -> (Vocab, AnnotatedDocument) {
        let raw = RawDocument {
            id: "d".into(),
            words: text.split_whitespace().map(String::from).collect(),
            annotations: vec![],
        };
        let vocab = Vocab::build([raw.words.as_slice()], 1, true).unwrap();
        let d = AnnotatedDocument::from_raw(&raw, &vocab).unwrap();
        (vocab, d)
    }

    #[test]
    fn shifted_targets() {
        let (v, d) = doc("a b c");
        assert_eq!(clm_targets(&d), vec![v.id("b").unwrap(), v.id("c").unwrap()]);
        let (input, _) = clm_example(&d, None).unwrap();
        assert_eq!(input, vec![v.id("a").unwrap(), v.id("b").unwrap()]);
    }

    #[test]
    fn blacklisted_target_becomes_pad() {
        let (v, d) = doc("the john has fever");
        let bl = Blacklist::new(parse_blacklist_text("john"), &v, std::slice::from_ref(&d)).unwrap();
        let t = clm_targets_privacy(&d, &bl);
        assert_eq!(t[0], PAD_ID);
        assert_eq!(t[1], v.id("has").unwrap());
        let (input, _) = clm_example(&d, Some(&bl.token_mask(&d))).unwrap();
        assert_eq!(input[1], v.id("john").unwrap());
    }

    #[test]
    fn single_token_document_has_no_example() {
        let (_, d) = doc("a");
        assert!(clm_example(&d, None).is_none());
    }
}
