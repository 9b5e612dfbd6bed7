//! Document intake: plain-text extraction, language detection and the
//! UTF-8 / WIN-1251 converter.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Share of letters one script must exceed to count as dominant.
pub const DOMINANCE_THRESHOLD: f64 = 0.5;

/// Letters that only occur in Ukrainian among the Cyrillic languages we route.
pub const UKRAINIAN_MARKERS: [char; 4] = ['і', 'ї', 'є', 'ґ'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocFormat {
    PlainText,
    Pdf,
    Doc,
    Docx,
}

impl DocFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DocFormat::PlainText => "plain_text",
            DocFormat::Pdf => "pdf",
            DocFormat::Doc => "doc",
            DocFormat::Docx => "docx",
        }
    }
}

impl core::str::FromStr for DocFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain_text" | "txt" | "text" => Ok(DocFormat::PlainText),
            "pdf" => Ok(DocFormat::Pdf),
            "doc" => Ok(DocFormat::Doc),
            "docx" => Ok(DocFormat::Docx),
            other => Err(IngestError::UnknownFormat(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Utf8,
    Win1251,
    Unknown,
}

impl core::str::FromStr for Encoding {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "utf8" | "utf-8" => Ok(Encoding::Utf8),
            "win1251" | "windows-1251" | "cp1251" => Ok(Encoding::Win1251),
            "unknown" => Ok(Encoding::Unknown),
            other => Err(IngestError::UnknownEncoding(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Uk,
    Ru,
    En,
    Unknown,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Uk => "uk",
            Language::Ru => "ru",
            Language::En => "en",
            Language::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A patent source as uploaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub payload: Vec<u8>,
    pub declared_format: DocFormat,
    pub declared_encoding: Encoding,
}

impl RawDocument {
    pub fn plain_utf8(id: impl Into<String>, text: &str) -> Self {
        RawDocument {
            id: id.into(),
            payload: text.as_bytes().to_vec(),
            declared_format: DocFormat::PlainText,
            declared_encoding: Encoding::Utf8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedText {
    pub doc_id: String,
    pub text: String,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("unsupported document format `{0}`: only plain text is accepted")]
    UnsupportedFormat(&'static str),
    #[error("encoding error: {0}")]
    Encoding(EncodingFault),
    #[error("empty document id")]
    EmptyId,
    #[error("unknown document format `{0}`")]
    UnknownFormat(String),
    #[error("unknown encoding `{0}`")]
    UnknownEncoding(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodingFault {
    #[error("invalid UTF-8 at byte offset {0}")]
    InvalidUtf8(usize),
    #[error("byte 0x{byte:02X} at offset {offset} is undefined in WIN-1251")]
    UndefinedWin1251 { offset: usize, byte: u8 },
    #[error("NUL character at offset {0}")]
    Nul(usize),
    #[error("conversion endpoints must be utf8 or win1251")]
    UnsupportedEndpoint,
}

impl From<EncodingFault> for IngestError {
    fn from(f: EncodingFault) -> Self {
        IngestError::Encoding(f)
    }
}

/// Decodes a plain-text payload, normalizes whitespace and tags its language.
///
/// Runs of spaces and tabs collapse to one space; a run that contains line
/// breaks is replaced by those line breaks only (`\r\n` counts as one).
pub fn extract_text(doc: &RawDocument) -> Result<ExtractedText, IngestError> {
    if doc.id.is_empty() {
        return Err(IngestError::EmptyId);
    }
    if doc.declared_format != DocFormat::PlainText {
        return Err(IngestError::UnsupportedFormat(doc.declared_format.as_str()));
    }
    let decoded = match doc.declared_encoding {
        Encoding::Utf8 | Encoding::Unknown => decode_utf8(&doc.payload)?,
        Encoding::Win1251 => decode_win1251(&doc.payload)?,
    };
    if let Some(pos) = decoded.find('\0') {
        return Err(EncodingFault::Nul(pos).into());
    }
    let text = collapse_whitespace(&decoded);
    let language = detect_language(&text);
    Ok(ExtractedText { doc_id: doc.id.clone(), text, language })
}

fn decode_utf8(bytes: &[u8]) -> Result<String, EncodingFault> {
    core::str::from_utf8(bytes)
        .map(String::from)
        .map_err(|e| EncodingFault::InvalidUtf8(e.valid_up_to()))
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if !c.is_whitespace() {
            out.push(c);
            continue;
        }
        let mut newlines = usize::from(c == '\n');
        let mut bare_cr = c == '\r';
        while let Some(&next) = chars.peek() {
            if !next.is_whitespace() {
                break;
            }
            chars.next();
            match next {
                '\n' => {
                    newlines += 1;
                    bare_cr = false;
                }
                '\r' => {
                    if bare_cr {
                        newlines += 1;
                    }
                    bare_cr = true;
                }
                _ => {
                    if bare_cr {
                        newlines += 1;
                        bare_cr = false;
                    }
                }
            }
        }
        if bare_cr {
            newlines += 1;
        }
        if newlines == 0 {
            out.push(' ');
        } else {
            out.extend(core::iter::repeat_n('\n', newlines));
        }
    }
    out
}

fn is_cyrillic(c: char) -> bool {
    matches!(c, '\u{0400}'..='\u{04FF}' | '\u{0500}'..='\u{052F}')
}

fn is_latin(c: char) -> bool {
    c.is_ascii_alphabetic() || matches!(c, '\u{00C0}'..='\u{024F}' if c != '×' && c != '÷')
}

/// Classifies text by letter-script statistics.
///
/// Cyrillic letters above half of all letters give `uk` when any of
/// [`UKRAINIAN_MARKERS`] occurs (case-insensitively) and `ru` otherwise;
/// Latin letters above half give `en`; anything else is `unknown`.
pub fn detect_language(text: &str) -> Language {
    let (mut letters, mut cyrillic, mut latin) = (0usize, 0usize, 0usize);
    let mut marked = false;
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if is_cyrillic(c) {
            cyrillic += 1;
            marked |= c.to_lowercase().any(|l| UKRAINIAN_MARKERS.contains(&l));
        } else if is_latin(c) {
            latin += 1;
        }
    }
    if letters == 0 {
        return Language::Unknown;
    }
    let share = |n: usize| n as f64 / letters as f64;
    if share(cyrillic) > DOMINANCE_THRESHOLD {
        if marked {
            Language::Uk
        } else {
            Language::Ru
        }
    } else if share(latin) > DOMINANCE_THRESHOLD {
        Language::En
    } else {
        Language::Unknown
    }
}

/// Upper half (0x80..=0xFF) of the WIN-1251 code page; `None` marks 0x98.
const WIN1251_HIGH: [Option<char>; 128] = {
    const U: [u32; 64] = [
        0x0402, 0x0403, 0x201A, 0x0453, 0x201E, 0x2026, 0x2020, 0x2021, //
        0x20AC, 0x2030, 0x0409, 0x2039, 0x040A, 0x040C, 0x040B, 0x040F, //
        0x0452, 0x2018, 0x2019, 0x201C, 0x201D, 0x2022, 0x2013, 0x2014, //
        0x0000, 0x2122, 0x0459, 0x203A, 0x045A, 0x045C, 0x045B, 0x045F, //
        0x00A0, 0x040E, 0x045E, 0x0408, 0x00A4, 0x0490, 0x00A6, 0x00A7, //
        0x0401, 0x00A9, 0x0404, 0x00AB, 0x00AC, 0x00AD, 0x00AE, 0x0407, //
        0x00B0, 0x00B1, 0x0406, 0x0456, 0x0491, 0x00B5, 0x00B6, 0x00B7, //
        0x0451, 0x2116, 0x0454, 0x00BB, 0x0458, 0x0405, 0x0455, 0x0457, //
    ];
    let mut table = [None; 128];
    let mut i = 0;
    while i < 64 {
        if U[i] != 0 {
            table[i] = char::from_u32(U[i]);
        }
        i += 1;
    }
    // 0xC0..=0xFF is А..я in order.
    while i < 128 {
        table[i] = char::from_u32(0x0410 + (i as u32 - 64));
        i += 1;
    }
    table
};

fn win1251_decode_byte(b: u8) -> Option<char> {
    if b < 0x80 {
        Some(b as char)
    } else {
        WIN1251_HIGH[(b - 0x80) as usize]
    }
}

fn win1251_encode_char(c: char) -> Option<u8> {
    if (c as u32) < 0x80 {
        return Some(c as u8);
    }
    if ('А'..='я').contains(&c) {
        return Some((c as u32 - 0x0410 + 0xC0) as u8);
    }
    WIN1251_HIGH[..64]
        .iter()
        .position(|&slot| slot == Some(c))
        .map(|i| 0x80 + i as u8)
}

fn decode_win1251(bytes: &[u8]) -> Result<String, EncodingFault> {
    bytes
        .iter()
        .enumerate()
        .map(|(offset, &byte)| {
            win1251_decode_byte(byte).ok_or(EncodingFault::UndefinedWin1251 { offset, byte })
        })
        .collect()
}

/// Result of [`convert_encoding`]: the re-encoded bytes and how many
/// characters had to be replaced by `?`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Converted {
    pub bytes: Vec<u8>,
    pub replacements: usize,
}

/// Converts a payload between UTF-8 and WIN-1251.
pub fn convert_encoding(payload: &[u8], from: Encoding, to: Encoding) -> Result<Converted, EncodingFault> {
    let text = match from {
        Encoding::Utf8 => decode_utf8(payload)?,
        Encoding::Win1251 => decode_win1251(payload)?,
        Encoding::Unknown => return Err(EncodingFault::UnsupportedEndpoint),
    };
    match to {
        Encoding::Utf8 => Ok(Converted { bytes: text.into_bytes(), replacements: 0 }),
        Encoding::Win1251 => {
            let mut replacements = 0;
            let bytes = text
                .chars()
                .map(|c| {
                    win1251_encode_char(c).unwrap_or_else(|| {
                        replacements += 1;
                        b'?'
                    })
                })
                .collect();
            Ok(Converted { bytes, replacements })
        }
        Encoding::Unknown => Err(EncodingFault::UnsupportedEndpoint),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn oracle_language(text: &str) -> Language {
        // Independent restatement: classify each letter, then vote.
        let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
        if letters.is_empty() {
            return Language::Unknown;
        }
        let cyr = letters.iter().filter(|c| ('\u{0400}'..='\u{052F}').contains(*c)).count();
        let lat = letters.iter().filter(|c| c.is_ascii_alphabetic()).count();
        if 2 * cyr > letters.len() {
            let lower: String = text.to_lowercase();
            if lower.contains(['і', 'ї', 'є', 'ґ']) {
                Language::Uk
            } else {
                Language::Ru
            }
        } else if 2 * lat > letters.len() {
            Language::En
        } else {
            Language::Unknown
        }
    }

    #[test]
    fn extracts_ukrainian_plain_text() {
        let doc = RawDocument::plain_utf8("p1", "Пристрій для вимірювання.");
        let out = extract_text(&doc).unwrap();
        assert_eq!(out.text, "Пристрій для вимірювання.");
        assert_eq!(out.language, oracle_language(&out.text));
        assert_eq!(out.language, Language::Uk);
    }

    #[test]
    fn empty_payload_is_unknown() {
        let out = extract_text(&RawDocument::plain_utf8("e", "")).unwrap();
        assert_eq!(out.text, "");
        assert_eq!(out.language, Language::Unknown);
    }

    #[test]
    fn binary_formats_are_rejected() {
        for fmt in [DocFormat::Pdf, DocFormat::Doc, DocFormat::Docx] {
            let doc = RawDocument { declared_format: fmt, ..RawDocument::plain_utf8("x", "abc") };
            assert!(matches!(extract_text(&doc), Err(IngestError::UnsupportedFormat(_))));
        }
    }

    #[test]
    fn invalid_utf8_and_nul_are_encoding_errors() {
        let doc = RawDocument { payload: alloc::vec![0x41, 0xFF, 0x42], ..RawDocument::plain_utf8("x", "") };
        assert_eq!(extract_text(&doc), Err(IngestError::Encoding(EncodingFault::InvalidUtf8(1))));
        let doc = RawDocument::plain_utf8("x", "a\0b");
        assert!(matches!(extract_text(&doc), Err(IngestError::Encoding(EncodingFault::Nul(1)))));
    }

    #[test]
    fn whitespace_is_collapsed_but_newlines_survive() {
        let out = extract_text(&RawDocument::plain_utf8("w", "a  \t b \r\n\n  c\rd")).unwrap();
        assert_eq!(out.text, "a b\n\nc\nd");
        let again = extract_text(&RawDocument::plain_utf8("w", &out.text)).unwrap();
        assert_eq!(again.text, out.text);
    }

    #[test]
    fn win1251_payload_is_decoded() {
        let doc = RawDocument {
            payload: alloc::vec![0xCF, 0xF0, 0xE8, 0xF1, 0xF2, 0xF0, 0xB3, 0xE9],
            declared_encoding: Encoding::Win1251,
            ..RawDocument::plain_utf8("w", "")
        };
        let out = extract_text(&doc).unwrap();
        assert_eq!(out.text, "Пристрій");
        assert_eq!(out.language, Language::Uk);
    }

    #[test]
    fn language_examples() {
        for (text, want) in [
            ("Пристрій має ознаки", Language::Uk),
            ("the quick brown fox", Language::En),
            ("1234 %% $$", Language::Unknown),
            ("Устройство имеет признаки", Language::Ru),
            ("ҐРУНТ", Language::Uk),
            ("abc где", Language::Unknown),
        ] {
            assert_eq!(detect_language(text), oracle_language(text), "{text}");
            assert_eq!(detect_language(text), want, "{text}");
        }
    }

    #[test]
    fn cyrillic_to_win1251() {
        let out = convert_encoding("АБВ".as_bytes(), Encoding::Utf8, Encoding::Win1251).unwrap();
        assert_eq!(out.bytes, [0xC0, 0xC1, 0xC2]);
        assert_eq!(out.replacements, 0);
    }

    #[test]
    fn unrepresentable_characters_become_question_marks() {
        let out = convert_encoding("a中ä".as_bytes(), Encoding::Utf8, Encoding::Win1251).unwrap();
        assert_eq!(out.bytes, b"a??");
        assert_eq!(out.replacements, 2);
        // The euro sign sits at 0x88 in the code page.
        let out = convert_encoding("€".as_bytes(), Encoding::Utf8, Encoding::Win1251).unwrap();
        assert_eq!(out.bytes, [0x88]);
    }

    #[test]
    fn undefined_byte_and_unknown_endpoint() {
        assert_eq!(
            convert_encoding(&[0x41, 0x98], Encoding::Win1251, Encoding::Utf8),
            Err(EncodingFault::UndefinedWin1251 { offset: 1, byte: 0x98 })
        );
        assert_eq!(
            convert_encoding(b"x", Encoding::Unknown, Encoding::Utf8),
            Err(EncodingFault::UnsupportedEndpoint)
        );
    }

    #[test]
    fn parses_names() {
        assert_eq!("pdf".parse::<DocFormat>().unwrap(), DocFormat::Pdf);
        assert_eq!("UTF-8".parse::<Encoding>().unwrap(), Encoding::Utf8);
        assert!("latin1".parse::<Encoding>().is_err());
        assert_eq!(Language::Uk.to_string(), "uk");
    }
}
