use super::{Result, WfdbError};

const SKIP: u16 = 59;
const NUM: u16 = 60;
const SUB: u16 = 61;
const CHN: u16 = 62;
const AUX: u16 = 63;

/// Mnemonics of the standard WFDB annotation codes (`ecgcodes.h`).
/// Index = code; `None` marks codes without a standard definition.
const CODE_TABLE: [Option<char>; 50] = {
    let mut t = [None; 50];
    t[1] = Some('N');
    t[2] = Some('L');
    t[3] = Some('R');
    t[4] = Some('a');
    t[5] = Some('V');
    t[6] = Some('F');
    t[7] = Some('J');
    t[8] = Some('A');
    t[9] = Some('S');
    t[10] = Some('E');
    t[11] = Some('j');
    t[12] = Some('/');
    t[13] = Some('Q');
    t[14] = Some('~');
    t[16] = Some('|');
    t[18] = Some('s');
    t[19] = Some('T');
    t[20] = Some('*');
    t[21] = Some('D');
    t[22] = Some('"');
    t[23] = Some('=');
    t[24] = Some('p');
    t[25] = Some('B');
    t[26] = Some('^');
    t[27] = Some('t');
    t[28] = Some('+');
    t[29] = Some('u');
    t[30] = Some('?');
    t[31] = Some('!');
    t[32] = Some('[');
    t[33] = Some(']');
    t[34] = Some('e');
    t[35] = Some('n');
    t[36] = Some('@');
    t[37] = Some('x');
    t[38] = Some('f');
    t[39] = Some('(');
    t[40] = Some(')');
    t[41] = Some('r');
    t
};

/// Mnemonic for an annotation code, if the code is defined.
pub fn symbol_for_code(code: u8) -> Option<char> {
    CODE_TABLE.get(usize::from(code)).copied().flatten()
}

fn code_for_symbol(symbol: char) -> Option<u8> {
    CODE_TABLE
        .iter()
        .position(|s| *s == Some(symbol))
        .map(|i| i as u8)
}

/// One labelled event in a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub sample_index: u64,
    pub symbol: char,
    pub raw_code: u8,
}

impl Annotation {
    pub fn from_code(sample_index: u64, raw_code: u8) -> Option<Self> {
        symbol_for_code(raw_code).map(|symbol| Annotation {
            sample_index,
            symbol,
            raw_code,
        })
    }

    pub fn from_symbol(sample_index: u64, symbol: char) -> Result<Self> {
        let raw_code =
            code_for_symbol(symbol).ok_or_else(|| WfdbError::UnknownSymbol(symbol.to_string()))?;
        Ok(Annotation {
            sample_index,
            symbol,
            raw_code,
        })
    }
}

fn word_at(bytes: &[u8], offset: usize) -> Result<u16> {
    match bytes.get(offset..offset + 2) {
        Some(b) => Ok(u16::from_le_bytes([b[0], b[1]])),
        None => Err(WfdbError::TruncatedData {
            offset,
            reason: "annotation stream ends without the zero terminator".into(),
        }),
    }
}

/// Parses a WFDB (MIT format) annotation stream.
///
/// Each 16-bit little-endian word carries a 6-bit code and a 10-bit time
/// increment. SKIP, NUM, SUB, CHN and AUX pseudo-annotations are consumed;
/// code 0 with a nonzero increment (NOTQRS) only advances time.
pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut time: u64 = 0;
    let mut pos = 0usize;
    loop {
        let word = word_at(bytes, pos)?;
        let word_offset = pos;
        pos += 2;
        let code = word >> 10;
        let value = word & 0x03FF;
        match code {
            0 if value == 0 => return Ok(out),
            0 => time += u64::from(value),
            SKIP => {
                // 32-bit interval: high 16 bits first, each half little-endian.
                let hi = u32::from(word_at(bytes, pos)?);
                let lo = u32::from(word_at(bytes, pos + 2)?);
                pos += 4;
                time += u64::from((hi << 16) | lo);
            }
            NUM | SUB | CHN => {}
            AUX => {
                let len = usize::from(value);
                let padded = len + (len & 1);
                if bytes.len() < pos + padded {
                    return Err(WfdbError::TruncatedData {
                        offset: pos,
                        reason: format!("AUX payload of {len} bytes is cut off"),
                    });
                }
                pos += padded;
            }
            _ => {
                time += u64::from(value);
                let ann = Annotation::from_code(time, code as u8).ok_or(WfdbError::UnknownCode {
                    code,
                    offset: word_offset,
                })?;
                out.push(ann);
            }
        }
    }
}
