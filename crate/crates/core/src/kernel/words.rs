//! Trace words: cyclic classes of non-commutative monomials and their traces.
//!
//! Letter `0` stands for the subsymbol `σ₀`, letter `i ≥ 1` for the frame
//! component `σ̃_i`. A word is stored as its lexicographically minimal
//! rotation, so two words name the same trace iff they compare equal.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{jet::Jet, trace_of_product, Mat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraceWord(Vec<u8>);

impl TraceWord {
    /// Builds the canonical representative of the cyclic class of `letters`.
    ///
    /// Panics on an empty word.
    pub fn new(letters: Vec<u8>) -> Self {
        assert!(!letters.is_empty(), "trace words are nonempty");
        TraceWord(min_rotation(&letters))
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of occurrences of `letter`.
    pub fn count(&self, letter: u8) -> usize {
        self.0.iter().filter(|&&l| l == letter).count()
    }

    pub fn uses_sigma0(&self) -> bool {
        self.0.contains(&0)
    }

    /// Human-readable label such as `Tr(σ̃₁²σ̃₂)`; used as the key of the
    /// invariant in every report.
    pub fn label(&self) -> String {
        let mut s = String::from("Tr(");
        let mut i = 0;
        while i < self.0.len() {
            let l = self.0[i];
            let mut run = 1;
            while i + run < self.0.len() && self.0[i + run] == l {
                run += 1;
            }
            if l == 0 {
                s.push_str("σ₀");
            } else {
                s.push_str("σ̃");
                s.push_str(&subscript(l as usize));
            }
            if run > 1 {
                s.push_str(&superscript(run));
            }
            i += run;
        }
        s.push(')');
        s
    }
}

impl fmt::Display for TraceWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn min_rotation(w: &[u8]) -> Vec<u8> {
    let k = w.len();
    (0..k)
        .map(|r| w[r..].iter().chain(&w[..r]).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

fn map_digits(n: usize, table: &[char; 10]) -> String {
    n.to_string()
        .chars()
        .map(|c| table[c.to_digit(10).unwrap() as usize])
        .collect()
}

pub(crate) fn subscript(n: usize) -> String {
    map_digits(n, &['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'])
}

pub(crate) fn superscript(n: usize) -> String {
    map_digits(n, &['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'])
}

/// All cyclic classes of words of length `1..=max_len` over `alphabet`, one
/// canonical representative each, ordered by length and then
/// lexicographically.
pub fn enumerate_trace_words(alphabet: &[u8], max_len: usize) -> Vec<TraceWord> {
    let mut letters: Vec<u8> = alphabet.to_vec();
    letters.sort_unstable();
    letters.dedup();
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(max_len);
    for len in 1..=max_len {
        extend_words(&letters, len, &mut buf, &mut out);
    }
    out
}

fn extend_words(letters: &[u8], len: usize, buf: &mut Vec<u8>, out: &mut Vec<TraceWord>) {
    if buf.len() == len {
        if is_min_rotation(buf) {
            out.push(TraceWord(buf.clone()));
        }
        return;
    }
    for &l in letters {
        // a canonical word never has a letter smaller than its first one
        if !buf.is_empty() && l < buf[0] {
            continue;
        }
        buf.push(l);
        extend_words(letters, len, buf, out);
        buf.pop();
    }
}

fn is_min_rotation(w: &[u8]) -> bool {
    let k = w.len();
    (1..k).all(|r| {
        let rot = w[r..].iter().chain(&w[..r]);
        w.iter().le(rot)
    })
}

fn check_letters(w: &TraceWord, operands: usize) -> Result<()> {
    match w.0.iter().find(|&&l| l as usize >= operands) {
        Some(&l) => Err(Error::LetterOutOfRange {
            letter: l as usize,
            operands,
        }),
        None => Ok(()),
    }
}

/// `Tr(X_{w_1} ⋯ X_{w_k})` with `X_l = operands[l]`.
pub fn trace_word_eval(operands: &[Mat], w: &TraceWord) -> Result<f64> {
    check_letters(w, operands.len())?;
    let ls = &w.0;
    if ls.len() == 1 {
        return Ok(operands[ls[0] as usize].trace());
    }
    let mut acc = operands[ls[0] as usize].clone();
    for &l in &ls[1..ls.len() - 1] {
        acc = &acc * &operands[l as usize];
    }
    Ok(trace_of_product(&acc, &operands[*ls.last().unwrap() as usize]))
}

/// Jet version of [`trace_word_eval`].
pub fn trace_word_eval_jet(operands: &[Jet<Mat>], w: &TraceWord) -> Result<Jet<f64>> {
    check_letters(w, operands.len())?;
    let ls = &w.0;
    let mut acc = operands[ls[0] as usize].clone();
    for &l in &ls[1..] {
        acc = acc.mul(&operands[l as usize]);
    }
    Ok(acc.trace())
}
