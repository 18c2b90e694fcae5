//! Username anonymization and emote inventory collection.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::CommentRecord;

/// Stable salted hash for a username; reveals no substring of the name.
pub fn user_hash(name: &str, salt: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("u{hex}")
}

/// Replace any raw usernames with their salted hashes, in place.
pub fn anonymize(comments: &mut [CommentRecord], salt: u64) {
    for c in comments.iter_mut() {
        if let Some(raw) = c.raw_user.take() {
            c.user_hash = user_hash(&raw, salt);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmoteCount {
    pub name: String,
    pub count: usize,
}

/// Inventory of `<emote:NAME>` occurrences, sorted by count descending
/// then name.
pub fn collect_emotes(comments: &[CommentRecord]) -> Vec<EmoteCount> {
    let mut counts = std::collections::BTreeMap::new();
    for c in comments {
        let mut rest = c.text.as_str();
        while let Some(start) = rest.find("<emote:") {
            let after = &rest[start + 7..];
            match after.find('>') {
                Some(end) => {
                    *counts.entry(after[..end].to_string()).or_insert(0usize) += 1;
                    rest = &after[end + 1..];
                }
                None => break,
            }
        }
    }
    let mut inventory: Vec<EmoteCount> =
        counts.into_iter().map(|(name, count)| EmoteCount { name, count }).collect();
    inventory.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
    inventory
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comment(user: &str, text: &str) -> CommentRecord {
        CommentRecord {
            video_id: "v".into(),
            time_s: 0.0,
            user_hash: String::new(),
            raw_user: Some(user.into()),
            text: text.into(),
        }
    }

    #[test]
    fn same_username_same_hash() {
        assert_eq!(user_hash("StreamFan42", 9), user_hash("StreamFan42", 9));
        assert_ne!(user_hash("StreamFan42", 9), user_hash("StreamFan42", 10));
    }

    #[test]
    fn hash_reveals_no_substring_of_the_name() {
        let name = "StreamFan42";
        let h = user_hash(name, 1);
        assert_ne!(h, name);
        let lower = name.to_lowercase();
        for i in 0..lower.len() - 2 {
            assert!(!h.contains(&lower[i..i + 3]));
        }
    }

    #[test]
    fn anonymize_clears_raw_names() {
        let mut comments = vec![comment("alice", "hi"), comment("alice", "again")];
        anonymize(&mut comments, 4);
        assert!(comments.iter().all(|c| c.raw_user.is_none()));
        assert_eq!(comments[0].user_hash, comments[1].user_hash);
        assert!(!comments[0].user_hash.contains("alice"));
    }

    #[test]
    fn emote_inventory_matches_hand_counts() {
        let texts = [
            "<emote:Kappa> lol",
            "wow <emote:PogChamp>",
            "<emote:Kappa> <emote:Kappa>",
            "plain text",
            "<emote:PogChamp> again",
            "<emote:Kappa>",
            "ha <emote:LUL>",
            "<emote:LUL> x",
            "nothing",
            "<emote:Kappa> end",
        ];
        let comments: Vec<CommentRecord> =
            texts.iter().map(|t| comment("u", t)).collect();
        let inv = collect_emotes(&comments);
        // Hand counts: Kappa 5, PogChamp 2, LUL 2 (ties by name).
        assert_eq!(inv[0], EmoteCount { name: "Kappa".into(), count: 5 });
        assert_eq!(inv[1], EmoteCount { name: "LUL".into(), count: 2 });
        assert_eq!(inv[2], EmoteCount { name: "PogChamp".into(), count: 2 });
    }
}
