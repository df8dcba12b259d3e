use serde::{Deserialize, Serialize};

use crate::dataset::{Antibody, Antigen, RESIDUES};
use crate::error::{Error, Result};

/// Token id.
pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const MASK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const AB_HC: TokenId = 3;
pub const AB_LC: TokenId = 4;
pub const AG: TokenId = 5;
/// First residue id; residues follow [`RESIDUES`] order.
pub const FIRST_RESIDUE: TokenId = 6;
pub const N_RESIDUES: usize = RESIDUES.len();
pub const VOCAB_SIZE: usize = FIRST_RESIDUE as usize + N_RESIDUES;

const SPECIAL_NAMES: [&str; 6] = ["<pad>", "<mask>", "<cls>", "<ab_hc>", "<ab_lc>", "<ag>"];

/// Fixed token table: six markers followed by the 21 residue letters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Vocabulary;

impl Vocabulary {
    pub fn len(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn residue_id(&self, residue: u8) -> Option<TokenId> {
        RESIDUES
            .iter()
            .position(|&r| r == residue)
            .map(|i| FIRST_RESIDUE + i as TokenId)
    }

    pub fn is_residue(&self, id: TokenId) -> bool {
        (FIRST_RESIDUE..VOCAB_SIZE as TokenId).contains(&id)
    }

    /// Human-readable token name.
    pub fn name(&self, id: TokenId) -> Option<String> {
        let i = id as usize;
        if i < SPECIAL_NAMES.len() {
            Some(SPECIAL_NAMES[i].to_string())
        } else if self.is_residue(id) {
            Some((RESIDUES[i - FIRST_RESIDUE as usize] as char).to_string())
        } else {
            None
        }
    }

    pub fn id_of(&self, name: &str) -> Option<TokenId> {
        if let Some(i) = SPECIAL_NAMES.iter().position(|&s| s == name) {
            return Some(i as TokenId);
        }
        match name.as_bytes() {
            [b] => self.residue_id(*b),
            _ => None,
        }
    }

    fn encode_residues(&self, seq: &[u8], out: &mut Vec<TokenId>) {
        out.extend(seq.iter().map(|&r| self.residue_id(r).expect("validated residue")));
    }
}

/// `[CLS, AB_HC, hc…, AB_LC, lc…, AG, ag…]`, never longer than the limit it was built with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPrompt {
    pub tokens: Vec<TokenId>,
}

impl PairPrompt {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Copy right-padded with `PAD` to `len` tokens.
    pub fn padded(&self, len: usize) -> PairPrompt {
        let mut tokens = self.tokens.clone();
        if tokens.len() < len {
            tokens.resize(len, PAD);
        }
        PairPrompt { tokens }
    }

    /// Tokens before the first `PAD`.
    pub fn unpadded(&self) -> &[TokenId] {
        let end = self.tokens.iter().position(|&t| t == PAD).unwrap_or(self.tokens.len());
        &self.tokens[..end]
    }
}

/// Encodes an antibody–antigen pair. If the prompt would exceed `max_len`,
/// the antigen tail is dropped.
pub fn tokenize_pair(ab: &Antibody, ag: &Antigen, vocab: &Vocabulary, max_len: usize) -> Result<PairPrompt> {
    tokenize_parts(ab.heavy_var.as_bytes(), ab.light_var.as_bytes(), ag.sequence.as_bytes(), vocab, max_len)
}

pub fn tokenize_parts(heavy: &[u8], light: &[u8], antigen: &[u8], vocab: &Vocabulary, max_len: usize) -> Result<PairPrompt> {
    let fixed = 4 + heavy.len() + light.len();
    if fixed >= max_len {
        return Err(Error::Config(format!(
            "antibody prompt of {fixed} tokens leaves no room for the antigen under max_input_len {max_len}"
        )));
    }
    let ag_len = antigen.len().min(max_len - fixed);
    let mut tokens = Vec::with_capacity(fixed + ag_len);
    tokens.extend([CLS, AB_HC]);
    vocab.encode_residues(heavy, &mut tokens);
    tokens.push(AB_LC);
    vocab.encode_residues(light, &mut tokens);
    tokens.push(AG);
    vocab.encode_residues(&antigen[..ag_len], &mut tokens);
    Ok(PairPrompt { tokens })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_bijective_and_stable() {
        let v = Vocabulary;
        assert_eq!(v.len(), 27);
        for id in 0..VOCAB_SIZE as TokenId {
            let name = v.name(id).unwrap();
            assert_eq!(v.id_of(&name), Some(id));
        }
        assert_eq!(v.residue_id(b'A'), Some(6));
        assert_eq!(v.residue_id(b'X'), Some(26));
        assert_eq!(v.name(27), None);
    }

    #[test]
    fn layout() {
        let v = Vocabulary;
        let p = tokenize_parts(b"AC", b"DE", b"FG", &v, 900).unwrap();
        let r = |c: u8| v.residue_id(c).unwrap();
        assert_eq!(p.tokens, vec![CLS, AB_HC, r(b'A'), r(b'C'), AB_LC, r(b'D'), r(b'E'), AG, r(b'F'), r(b'G')]);
    }

    #[test]
    fn antigen_tail_truncated() {
        let v = Vocabulary;
        let hc = vec![b'A'; 100];
        let lc = vec![b'C'; 100];
        let ag = vec![b'D'; 701];
        // 4 markers + 100 + 100 + 701 = 905 tokens.
        let p = tokenize_parts(&hc, &lc, &ag, &v, 900).unwrap();
        assert_eq!(p.len(), 900);
        assert_eq!(p.tokens.iter().filter(|&&t| t == v.residue_id(b'D').unwrap()).count(), 696);
        assert!(tokenize_parts(&hc, &lc, &ag, &v, 204).is_err());
    }

    #[test]
    fn padding_helpers() {
        let v = Vocabulary;
        let p = tokenize_parts(b"A", b"C", b"D", &v, 50).unwrap();
        let padded = p.padded(12);
        assert_eq!(padded.len(), 12);
        assert_eq!(padded.unpadded(), &p.tokens[..]);
    }
}
