//! Byte-level tokenizer with a handful of reserved specials.

/// Ids 0..=255 are raw bytes; the specials follow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tokenizer;

impl Tokenizer {
    pub const PAD: u32 = 256;
    pub const EOS: u32 = 257;
    /// Stands for one projected image token.
    pub const IMAGE: u32 = 258;
    /// Separates the instruction from the response.
    pub const SEP: u32 = 259;
    pub const VOCAB: usize = 260;

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.bytes().map(u32::from).collect()
    }

    /// Decodes byte ids, skipping specials; invalid UTF-8 is replaced.
    pub fn decode(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids.iter().filter(|&&i| i < 256).map(|&i| i as u8).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    pub fn is_special(id: u32) -> bool {
        id >= 256
    }

    /// `instruction SEP`, the prompt a response is generated from.
    pub fn prompt(&self, instruction: &str) -> Vec<u32> {
        let mut ids = self.encode(instruction);
        ids.push(Self::SEP);
        ids
    }

    /// `instruction SEP response EOS` and the index of the first response
    /// token.
    pub fn instruct(&self, instruction: &str, response: &str) -> (Vec<u32>, usize) {
        let mut ids = self.prompt(instruction);
        let start = ids.len();
        ids.extend(self.encode(response));
        ids.push(Self::EOS);
        (ids, start)
    }

    /// `text EOS` for plain language-model pretraining.
    pub fn document(&self, text: &str) -> Vec<u32> {
        let mut ids = self.encode(text);
        ids.push(Self::EOS);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let t = Tokenizer;
        assert_eq!(t.decode(&t.encode("héllo [1,2,3,4]")), "héllo [1,2,3,4]");
        let (ids, start) = t.instruct("Q?", "Yes");
        assert_eq!(ids[start - 1], Tokenizer::SEP);
        assert_eq!(t.decode(&ids[start..]), "Yes");
        assert_eq!(*ids.last().unwrap(), Tokenizer::EOS);
        assert_eq!(t.decode(&[Tokenizer::PAD, 65, Tokenizer::EOS]), "A");
    }
}
