//! Two-pass assembler for VXA-32 source text.
//!
//! The first pass sizes every statement and records label offsets per
//! section; the second pass places `.text` at [`TEXT_BASE`] and `.data` at
//! the first page boundary after the text, then emits bytes with all labels
//! resolved to absolute addresses.

use std::collections::HashMap;

use thiserror::Error;

use crate::image::{ExecutableImage, Perm, Segment, MAX_GUEST_MEMORY, PAGE_SIZE};
use crate::instruction::{AluOp, Cond, Instruction, Reg, Width};

pub const TEXT_BASE: u32 = 0x0000_1000;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AsmErrorKind {
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("malformed directive: {0}")]
    MalformedDirective(String),
    #[error("bad operand: {0}")]
    BadOperand(String),
    #[error("value {value} out of range for {what}")]
    OutOfRange { what: &'static str, value: i64 },
    #[error("section overflow: {0}")]
    SectionOverflow(&'static str),
    #[error("instructions are only allowed in .text")]
    CodeOutsideText,
    #[error("missing .entry directive")]
    MissingEntry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    Text,
    Data,
}

#[derive(Clone, Debug)]
enum Expr {
    Const(i64),
    Sum(Vec<(bool, Term)>),
}

#[derive(Clone, Debug)]
enum Term {
    Num(i64),
    Label(String),
}

#[derive(Clone, Debug)]
enum MemOperand {
    BaseDisp(Reg, Expr),
}

#[derive(Clone, Debug)]
enum Stmt {
    Movi(Reg, Expr),
    Addi(Reg, Expr),
    Mov(Reg, Reg),
    Alu(AluOp, Reg, Reg),
    Load(Width, Reg, MemOperand),
    Store(Width, Reg, MemOperand),
    Jmp(Expr),
    Call(Expr),
    Jmpr(Reg),
    Branch(Cond, Reg, Reg, Expr),
    Ret,
    Sys(Expr),
    Bytes(Vec<Expr>),
    Words(Vec<Expr>),
    Ascii(Vec<u8>),
    Space(u32),
}

impl Stmt {
    fn size(&self) -> u64 {
        match self {
            Stmt::Movi(..) | Stmt::Addi(..) | Stmt::Branch(..) => 6,
            Stmt::Mov(..) | Stmt::Alu(..) | Stmt::Jmpr(..) | Stmt::Ret | Stmt::Sys(..) => 2,
            Stmt::Load(..) | Stmt::Store(..) => 4,
            Stmt::Jmp(..) | Stmt::Call(..) => 5,
            Stmt::Bytes(v) => v.len() as u64,
            Stmt::Words(v) => 4 * v.len() as u64,
            Stmt::Ascii(s) => s.len() as u64,
            Stmt::Space(n) => *n as u64,
        }
    }
}

struct Placed {
    line: usize,
    section: Section,
    stmt: Stmt,
}

/// Assembles `source` into an executable image.
pub fn assemble(source: &str) -> Result<ExecutableImage, AsmError> {
    let mut section = Section::Text;
    let mut sizes = [0u64; 2];
    let mut labels: HashMap<String, (Section, u64)> = HashMap::new();
    let mut entry: Option<(usize, String)> = None;
    let mut placed = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let err = |kind| AsmError { line, kind };
        let mut rest = strip_comment(raw).trim();

        while let Some((label, tail)) = split_label(rest) {
            let offset = sizes[section as usize];
            if labels.insert(label.to_string(), (section, offset)).is_some() {
                return Err(err(AsmErrorKind::DuplicateLabel(label.to_string())));
            }
            rest = tail.trim_start();
        }
        if rest.is_empty() {
            continue;
        }

        let (head, args) = match rest.find(char::is_whitespace) {
            Some(at) => (&rest[..at], rest[at..].trim()),
            None => (rest, ""),
        };

        if let Some(directive) = head.strip_prefix('.') {
            let stmt = match directive.to_ascii_lowercase().as_str() {
                "text" | "data" => {
                    if !args.is_empty() {
                        return Err(err(AsmErrorKind::MalformedDirective(format!(".{directive} takes no operands"))));
                    }
                    section = if directive.eq_ignore_ascii_case("text") { Section::Text } else { Section::Data };
                    continue;
                }
                "entry" => {
                    if !is_identifier(args) {
                        return Err(err(AsmErrorKind::MalformedDirective(".entry needs a label".into())));
                    }
                    if entry.is_some() {
                        return Err(err(AsmErrorKind::MalformedDirective("second .entry".into())));
                    }
                    entry = Some((line, args.to_string()));
                    continue;
                }
                "byte" => Stmt::Bytes(parse_expr_list(args).map_err(err)?),
                "word" => Stmt::Words(parse_expr_list(args).map_err(err)?),
                "ascii" => Stmt::Ascii(parse_string(args).map_err(err)?),
                "space" => {
                    let n = parse_number(args)
                        .ok_or_else(|| err(AsmErrorKind::MalformedDirective(".space needs a byte count".into())))?;
                    let n = u32::try_from(n).map_err(|_| err(AsmErrorKind::OutOfRange { what: ".space", value: n }))?;
                    Stmt::Space(n)
                }
                other => return Err(err(AsmErrorKind::MalformedDirective(format!("unknown directive .{other}")))),
            };
            sizes[section as usize] += stmt.size();
            placed.push(Placed { line, section, stmt });
        } else {
            let stmt = parse_instruction(head, args).map_err(err)?;
            if section != Section::Text {
                return Err(err(AsmErrorKind::CodeOutsideText));
            }
            sizes[section as usize] += stmt.size();
            placed.push(Placed { line, section, stmt });
        }

        if TEXT_BASE as u64 + sizes[0] + sizes[1] + 2 * PAGE_SIZE as u64 > MAX_GUEST_MEMORY {
            return Err(err(AsmErrorKind::SectionOverflow("program exceeds guest address space")));
        }
    }

    let last_line = source.lines().count().max(1);
    let (entry_line, entry_label) = entry.ok_or(AsmError { line: last_line, kind: AsmErrorKind::MissingEntry })?;
    if sizes[0] == 0 {
        return Err(AsmError { line: last_line, kind: AsmErrorKind::SectionOverflow("empty .text") });
    }

    let text_base = TEXT_BASE as u64;
    let data_base = align_up(text_base + sizes[0]);
    let base_of = |s: Section| match s {
        Section::Text => text_base,
        Section::Data => data_base,
    };
    let symbols: HashMap<&str, u64> =
        labels.iter().map(|(name, &(sec, off))| (name.as_str(), base_of(sec) + off)).collect();

    let mut text = Vec::with_capacity(sizes[0] as usize);
    let mut data = Vec::with_capacity(sizes[1] as usize);
    for p in &placed {
        let out = match p.section {
            Section::Text => &mut text,
            Section::Data => &mut data,
        };
        emit(&p.stmt, &symbols, out).map_err(|kind| AsmError { line: p.line, kind })?;
    }

    let entry = *symbols
        .get(entry_label.as_str())
        .ok_or(AsmError { line: entry_line, kind: AsmErrorKind::UndefinedLabel(entry_label.clone()) })?;

    let mut segments = vec![Segment {
        vaddr: TEXT_BASE,
        memsz: (align_up(sizes[0]).max(PAGE_SIZE as u64)) as u32,
        perm: Perm::RX,
        data: text,
    }];
    if sizes[1] > 0 {
        let memsz = align_up(sizes[1]) as u32;
        // Trailing zeros become zero-fill.
        let used = data.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
        data.truncate(used);
        segments.push(Segment { vaddr: data_base as u32, memsz, perm: Perm::RW, data });
    }

    Ok(ExecutableImage { entry: entry as u32, segments })
}

fn align_up(v: u64) -> u64 {
    let page = PAGE_SIZE as u64;
    v.div_ceil(page) * page
}

fn emit(stmt: &Stmt, symbols: &HashMap<&str, u64>, out: &mut Vec<u8>) -> Result<(), AsmErrorKind> {
    let imm32 = |e: &Expr| -> Result<u32, AsmErrorKind> {
        let v = eval(e, symbols)?;
        if v < i32::MIN as i64 || v > u32::MAX as i64 {
            return Err(AsmErrorKind::OutOfRange { what: "32-bit immediate", value: v });
        }
        Ok(v as u32)
    };
    let disp16 = |e: &Expr| -> Result<i16, AsmErrorKind> {
        let v = eval(e, symbols)?;
        i16::try_from(v).map_err(|_| AsmErrorKind::OutOfRange { what: "16-bit displacement", value: v })
    };

    let insn = match stmt {
        Stmt::Movi(rd, e) => Instruction::Movi { rd: *rd, imm: imm32(e)? },
        Stmt::Addi(rd, e) => Instruction::Addi { rd: *rd, imm: imm32(e)? },
        Stmt::Mov(rd, rs) => Instruction::Mov { rd: *rd, rs: *rs },
        Stmt::Alu(op, rd, rs) => Instruction::Alu { op: *op, rd: *rd, rs: *rs },
        Stmt::Load(width, rd, MemOperand::BaseDisp(base, d)) => {
            Instruction::Load { width: *width, rd: *rd, base: *base, disp: disp16(d)? }
        }
        Stmt::Store(width, src, MemOperand::BaseDisp(base, d)) => {
            Instruction::Store { width: *width, src: *src, base: *base, disp: disp16(d)? }
        }
        Stmt::Jmp(e) => Instruction::Jmp { target: imm32(e)? },
        Stmt::Call(e) => Instruction::Call { target: imm32(e)? },
        Stmt::Jmpr(rs) => Instruction::Jmpr { rs: *rs },
        Stmt::Branch(cond, ra, rb, e) => Instruction::Branch { cond: *cond, ra: *ra, rb: *rb, target: imm32(e)? },
        Stmt::Ret => Instruction::Ret,
        Stmt::Sys(e) => {
            let v = eval(e, symbols)?;
            let num = u8::try_from(v).map_err(|_| AsmErrorKind::OutOfRange { what: "syscall number", value: v })?;
            Instruction::Sys { num }
        }
        Stmt::Bytes(values) => {
            for e in values {
                let v = eval(e, symbols)?;
                if !(-128..=255).contains(&v) {
                    return Err(AsmErrorKind::OutOfRange { what: ".byte", value: v });
                }
                out.push(v as u8);
            }
            return Ok(());
        }
        Stmt::Words(values) => {
            for e in values {
                out.extend_from_slice(&imm32(e)?.to_le_bytes());
            }
            return Ok(());
        }
        Stmt::Ascii(s) => {
            out.extend_from_slice(s);
            return Ok(());
        }
        Stmt::Space(n) => {
            out.resize(out.len() + *n as usize, 0);
            return Ok(());
        }
    };
    insn.encode_into(out);
    Ok(())
}

fn eval(e: &Expr, symbols: &HashMap<&str, u64>) -> Result<i64, AsmErrorKind> {
    match e {
        Expr::Const(v) => Ok(*v),
        Expr::Sum(terms) => {
            let mut acc: i64 = 0;
            for (neg, t) in terms {
                let v = match t {
                    Term::Num(n) => *n,
                    Term::Label(name) => *symbols
                        .get(name.as_str())
                        .ok_or_else(|| AsmErrorKind::UndefinedLabel(name.clone()))?
                        as i64,
                };
                acc = if *neg { acc.wrapping_sub(v) } else { acc.wrapping_add(v) };
            }
            Ok(acc)
        }
    }
}

fn parse_instruction(mnemonic: &str, args: &str) -> Result<Stmt, AsmErrorKind> {
    let m = mnemonic.to_ascii_uppercase();
    let ops = split_operands(args);
    let want = |n: usize| -> Result<(), AsmErrorKind> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(AsmErrorKind::BadOperand(format!("{m} takes {n} operand(s), found {}", ops.len())))
        }
    };

    if let Some(op) = AluOp::ALL.iter().find(|op| op.mnemonic() == m) {
        want(2)?;
        return Ok(Stmt::Alu(*op, parse_reg(&ops[0])?, parse_reg(&ops[1])?));
    }
    if let Some(cond) = Cond::ALL.iter().find(|c| c.mnemonic() == m) {
        want(3)?;
        return Ok(Stmt::Branch(*cond, parse_reg(&ops[0])?, parse_reg(&ops[1])?, parse_expr(&ops[2])?));
    }
    Ok(match m.as_str() {
        "MOVI" => {
            want(2)?;
            Stmt::Movi(parse_reg(&ops[0])?, parse_expr(&ops[1])?)
        }
        "ADDI" => {
            want(2)?;
            Stmt::Addi(parse_reg(&ops[0])?, parse_expr(&ops[1])?)
        }
        "MOV" => {
            want(2)?;
            Stmt::Mov(parse_reg(&ops[0])?, parse_reg(&ops[1])?)
        }
        "LDW" | "LDB" | "STW" | "STB" => {
            want(2)?;
            let width = if m.ends_with('W') { Width::Word } else { Width::Byte };
            let reg = parse_reg(&ops[0])?;
            let mem = parse_mem(&ops[1])?;
            if m.starts_with("LD") {
                Stmt::Load(width, reg, mem)
            } else {
                Stmt::Store(width, reg, mem)
            }
        }
        "JMP" => {
            want(1)?;
            Stmt::Jmp(parse_expr(&ops[0])?)
        }
        "CALL" => {
            want(1)?;
            Stmt::Call(parse_expr(&ops[0])?)
        }
        "JMPR" => {
            want(1)?;
            Stmt::Jmpr(parse_reg(&ops[0])?)
        }
        "RET" => {
            want(0)?;
            Stmt::Ret
        }
        "SYS" => {
            want(1)?;
            Stmt::Sys(parse_expr(&ops[0])?)
        }
        _ => return Err(AsmErrorKind::UnknownMnemonic(mnemonic.to_string())),
    })
}

fn split_operands(args: &str) -> Vec<String> {
    if args.trim().is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut depth = 0;
    let mut quote: Option<char> = None;
    let mut cur = String::new();
    let mut escaped = false;
    for c in args.chars() {
        if let Some(q) = quote {
            cur.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => {
                quote = Some(c);
                cur.push(c);
            }
            '[' => {
                depth += 1;
                cur.push(c);
            }
            ']' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    out.push(cur.trim().to_string());
    out
}

fn parse_reg(s: &str) -> Result<Reg, AsmErrorKind> {
    let lower = s.trim().to_ascii_lowercase();
    if lower == "sp" {
        return Ok(Reg::SP);
    }
    lower
        .strip_prefix('r')
        .and_then(|n| n.parse::<u8>().ok())
        .and_then(Reg::new)
        .ok_or_else(|| AsmErrorKind::BadOperand(format!("expected register r0-r7, found `{s}`")))
}

fn is_register_name(s: &str) -> bool {
    parse_reg(s).is_ok()
}

fn parse_mem(s: &str) -> Result<MemOperand, AsmErrorKind> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| AsmErrorKind::BadOperand(format!("expected [reg+disp], found `{s}`")))?
        .trim();
    let split = inner.find(['+', '-']);
    let (reg, disp) = match split {
        Some(at) => (&inner[..at], parse_expr(&inner[at..])?),
        None => (inner, Expr::Const(0)),
    };
    Ok(MemOperand::BaseDisp(parse_reg(reg)?, disp))
}

fn parse_expr_list(args: &str) -> Result<Vec<Expr>, AsmErrorKind> {
    let ops = split_operands(args);
    if ops.is_empty() {
        return Err(AsmErrorKind::MalformedDirective("expected at least one value".into()));
    }
    ops.iter().map(|o| parse_expr(o)).collect()
}

fn parse_expr(s: &str) -> Result<Expr, AsmErrorKind> {
    let s = s.trim();
    if s.is_empty() {
        return Err(AsmErrorKind::BadOperand("empty expression".into()));
    }
    let mut terms = Vec::new();
    let mut rest = s;
    let mut neg = false;
    if let Some(r) = rest.strip_prefix('-') {
        neg = true;
        rest = r.trim_start();
    } else if let Some(r) = rest.strip_prefix('+') {
        rest = r.trim_start();
    }
    loop {
        let (term, tail) = take_term(rest)?;
        terms.push((neg, term));
        let tail = tail.trim_start();
        if tail.is_empty() {
            break;
        }
        neg = match tail.as_bytes()[0] {
            b'+' => false,
            b'-' => true,
            _ => return Err(AsmErrorKind::BadOperand(format!("unexpected `{tail}`"))),
        };
        rest = tail[1..].trim_start();
    }
    if terms.iter().all(|(_, t)| matches!(t, Term::Num(_))) {
        let v = terms
            .iter()
            .fold(0i64, |acc, (neg, t)| match t {
                Term::Num(n) if *neg => acc.wrapping_sub(*n),
                Term::Num(n) => acc.wrapping_add(*n),
                Term::Label(_) => acc,
            });
        return Ok(Expr::Const(v));
    }
    Ok(Expr::Sum(terms))
}

fn take_term(s: &str) -> Result<(Term, &str), AsmErrorKind> {
    if let Some(body) = s.strip_prefix('\'') {
        let mut chars = body.char_indices();
        let (value, consumed) = match chars.next() {
            Some((_, '\\')) => {
                let (_, e) = chars.next().ok_or_else(|| AsmErrorKind::BadOperand("bad char literal".into()))?;
                (unescape(e)?, 2)
            }
            Some((_, c)) if c.is_ascii() => (c as u8, 1),
            _ => return Err(AsmErrorKind::BadOperand("bad char literal".into())),
        };
        let tail = body[consumed..]
            .strip_prefix('\'')
            .ok_or_else(|| AsmErrorKind::BadOperand("unterminated char literal".into()))?;
        return Ok((Term::Num(value as i64), tail));
    }
    let end = s.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.')).unwrap_or(s.len());
    let (word, tail) = s.split_at(end);
    if word.is_empty() {
        return Err(AsmErrorKind::BadOperand(format!("expected a value, found `{s}`")));
    }
    if word.as_bytes()[0].is_ascii_digit() {
        let n = parse_number(word).ok_or_else(|| AsmErrorKind::BadOperand(format!("bad number `{word}`")))?;
        Ok((Term::Num(n), tail))
    } else if is_identifier(word) && !is_register_name(word) {
        Ok((Term::Label(word.to_string()), tail))
    } else {
        Err(AsmErrorKind::BadOperand(format!("expected a value, found `{word}`")))
    }
}

fn parse_number(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if let Some(bin) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        i64::from_str_radix(bin, 2).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_string(args: &str) -> Result<Vec<u8>, AsmErrorKind> {
    let body = args
        .trim()
        .strip_prefix('"')
        .and_then(|b| b.strip_suffix('"'))
        .ok_or_else(|| AsmErrorKind::MalformedDirective(".ascii needs a quoted string".into()))?;
    let mut out = Vec::with_capacity(body.len());
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            let e = chars
                .next()
                .ok_or_else(|| AsmErrorKind::MalformedDirective("dangling escape".into()))?;
            out.push(unescape(e)?);
        } else if c == '"' {
            return Err(AsmErrorKind::MalformedDirective("unescaped quote in string".into()));
        } else {
            let mut buf = [0; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
        }
    }
    Ok(out)
}

fn unescape(c: char) -> Result<u8, AsmErrorKind> {
    Ok(match c {
        'n' => b'\n',
        't' => b'\t',
        'r' => b'\r',
        '0' => 0,
        '\\' => b'\\',
        '\'' => b'\'',
        '"' => b'"',
        other => return Err(AsmErrorKind::BadOperand(format!("unknown escape \\{other}"))),
    })
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn split_label(s: &str) -> Option<(&str, &str)> {
    let colon = s.find(':')?;
    let name = s[..colon].trim();
    if is_identifier(name) && !name.starts_with('.') {
        Some((name, &s[colon + 1..]))
    } else {
        None
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
        } else if c == '"' || c == '\'' {
            quote = Some(c);
        } else if c == ';' {
            return &line[..i];
        }
    }
    line
}
