//! FCIDUMP reading and writing.
//!
//! Two-electron integrals use chemists' notation throughout the crate:
//! `(pq|rs) = ∫∫ φp(1) φq(1) r12⁻¹ φr(2) φs(2)`. A body line `v i j k l`
//! with all indices nonzero therefore sets `(ij|kl) = v`. Indices in files
//! are 1-based; everything in memory is 0-based.
//!
//! Only one value per 8-fold permutational class is stored, so
//! [`IntegralSet::eri`] returns the same number for `(pq|rs)`, `(qp|rs)`,
//! `(pq|sr)`, `(rs|pq)` and the remaining permutations.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FcidumpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: index {index} outside [0, {norb}]")]
    Range { line: usize, index: i64, norb: usize },
    #[error("orbital index {index} outside [0, {norb})")]
    Index { index: usize, norb: usize },
    #[error("invalid integral set: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Index of the unordered pair `(p, q)` in a packed lower triangle.
#[inline]
pub(crate) fn pair_index(p: usize, q: usize) -> usize {
    if p >= q {
        p * (p + 1) / 2 + q
    } else {
        q * (q + 1) / 2 + p
    }
}

/// One- and two-electron integrals of a molecular Hamiltonian in a
/// spatial-orbital basis.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSet {
    n_orb: usize,
    n_elec: usize,
    ms2: i32,
    core_energy: f64,
    /// Row-major `n_orb × n_orb`.
    h: Vec<f64>,
    /// One value per 8-fold class, addressed by `pair_index(pair_index(p,q), pair_index(r,s))`.
    eri: Vec<f64>,
    orbsym: Vec<u32>,
    isym: u32,
    source_label: String,
}

impl IntegralSet {
    /// All-zero integral set.
    pub fn zeros(n_orb: usize, n_elec: usize, ms2: i32) -> Result<Self, FcidumpError> {
        if n_elec > 2 * n_orb {
            return Err(FcidumpError::Invalid(format!(
                "{n_elec} electrons do not fit in {n_orb} spatial orbitals"
            )));
        }
        let npair = n_orb * (n_orb + 1) / 2;
        Ok(Self {
            n_orb,
            n_elec,
            ms2,
            core_energy: 0.0,
            h: vec![0.0; n_orb * n_orb],
            eri: vec![0.0; npair * (npair + 1) / 2],
            orbsym: vec![1; n_orb],
            isym: 1,
            source_label: String::new(),
        })
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn n_elec(&self) -> usize {
        self.n_elec
    }

    pub fn ms2(&self) -> i32 {
        self.ms2
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.n_orb
    }

    pub fn core_energy(&self) -> f64 {
        self.core_energy
    }

    pub fn set_core_energy(&mut self, e: f64) {
        self.core_energy = e;
    }

    pub fn orbsym(&self) -> &[u32] {
        &self.orbsym
    }

    /// Resets orbital symmetry labels to 1 (no symmetry), e.g. after mixing orbitals.
    pub fn clear_orbsym(&mut self) {
        self.orbsym.iter_mut().for_each(|s| *s = 1);
        self.isym = 1;
    }

    pub fn isym(&self) -> u32 {
        self.isym
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn set_source_label(&mut self, label: impl Into<String>) {
        self.source_label = label.into();
    }

    /// One-electron integral `h[p][q]` (unchecked beyond slice bounds).
    #[inline]
    pub fn h(&self, p: usize, q: usize) -> f64 {
        self.h[p * self.n_orb + q]
    }

    /// Sets `h[p][q]` and `h[q][p]`.
    pub fn set_h(&mut self, p: usize, q: usize, v: f64) {
        self.h[p * self.n_orb + q] = v;
        self.h[q * self.n_orb + p] = v;
    }

    /// Two-electron integral `(pq|rs)` without range checks.
    #[inline]
    pub fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.eri[pair_index(pair_index(p, q), pair_index(r, s))]
    }

    /// Checked lookup of `(pq|rs)`.
    pub fn eri_get(&self, p: usize, q: usize, r: usize, s: usize) -> Result<f64, FcidumpError> {
        for index in [p, q, r, s] {
            if index >= self.n_orb {
                return Err(FcidumpError::Index {
                    index,
                    norb: self.n_orb,
                });
            }
        }
        Ok(self.eri(p, q, r, s))
    }

    /// Stores `(pq|rs)` for its whole symmetry class.
    pub fn set_eri(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        self.eri[pair_index(pair_index(p, q), pair_index(r, s))] = v;
    }

    /// Full row-major `M×M` one-electron matrix.
    pub fn h_matrix(&self) -> &[f64] {
        &self.h
    }

    /// Dense `M⁴` copy of the two-electron integrals, index `((p*M+q)*M+r)*M+s`.
    pub fn eri_dense(&self) -> Vec<f64> {
        let m = self.n_orb;
        let mut out = vec![0.0; m * m * m * m];
        for p in 0..m {
            for q in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        out[((p * m + q) * m + r) * m + s] = self.eri(p, q, r, s);
                    }
                }
            }
        }
        out
    }

    /// Rebuilds an integral set from a dense `M⁴` array (assumed 8-fold symmetric).
    pub(crate) fn with_dense_eri(&self, h: Vec<f64>, eri: &[f64]) -> Self {
        let m = self.n_orb;
        let mut out = self.clone();
        out.h = h;
        for p in 0..m {
            for q in 0..=p {
                for r in 0..m {
                    for s in 0..=r {
                        if pair_index(p, q) >= pair_index(r, s) {
                            out.set_eri(p, q, r, s, eri[((p * m + q) * m + r) * m + s]);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, FcidumpError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FcidumpError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        parse_fcidump(&text)
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<(), FcidumpError> {
        let path = path.as_ref();
        std::fs::write(path, write_fcidump(self)).map_err(|e| FcidumpError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

#[derive(Default)]
struct Header {
    norb: Option<usize>,
    nelec: Option<usize>,
    ms2: Option<i32>,
    orbsym: Option<Vec<u32>>,
    isym: Option<u32>,
    label: Option<String>,
}

/// Splits the namelist text into `KEY=` markers, quoted strings and bare values.
fn header_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\'' | '"' => {
                let mut quoted = String::from("'");
                for d in chars.by_ref() {
                    if d == c {
                        break;
                    }
                    quoted.push(d);
                }
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(quoted);
            }
            '=' => {
                cur.push('=');
                tokens.push(std::mem::take(&mut cur));
            }
            ',' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn parse_header(text: &str, line: usize) -> Result<Header, FcidumpError> {
    let err = |msg: String| FcidumpError::Parse { line, msg };
    let mut header = Header::default();
    let mut key: Option<String> = None;
    let mut values: Vec<String> = Vec::new();

    let mut flush = |key: Option<String>, values: &mut Vec<String>| -> Result<(), FcidumpError> {
        let Some(key) = key else {
            return Ok(());
        };
        let vals = std::mem::take(values);
        let first = || {
            vals.first()
                .cloned()
                .ok_or_else(|| err(format!("{key} has no value")))
        };
        match key.as_str() {
            "NORB" => {
                header.norb = Some(
                    first()?
                        .parse()
                        .map_err(|_| err(format!("NORB is not an integer: {:?}", vals)))?,
                )
            }
            "NELEC" => {
                header.nelec = Some(
                    first()?
                        .parse()
                        .map_err(|_| err(format!("NELEC is not an integer: {:?}", vals)))?,
                )
            }
            "MS2" => {
                header.ms2 = Some(
                    first()?
                        .parse()
                        .map_err(|_| err(format!("MS2 is not an integer: {:?}", vals)))?,
                )
            }
            "ISYM" => {
                header.isym = Some(
                    first()?
                        .parse()
                        .map_err(|_| err(format!("ISYM is not an integer: {:?}", vals)))?,
                )
            }
            "ORBSYM" => {
                let syms = vals
                    .iter()
                    .map(|v| v.parse::<u32>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| err(format!("ORBSYM entries must be integers: {:?}", vals)))?;
                header.orbsym = Some(syms);
            }
            "LABEL" => header.label = Some(first()?.trim_start_matches('\'').to_string()),
            _ => {}
        }
        Ok(())
    };

    for tok in header_tokens(text) {
        if let Some(name) = tok.strip_suffix('=') {
            flush(key.take(), &mut values)?;
            key = Some(name.trim().to_ascii_uppercase());
        } else {
            values.push(tok);
        }
    }
    flush(key.take(), &mut values)?;
    Ok(header)
}

/// Parses FCIDUMP text.
pub fn parse_fcidump(text: &str) -> Result<IntegralSet, FcidumpError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    // Namelist header: from `&FCI` up to `/` or `&END`.
    let mut header_text = String::new();
    let mut header_line = 0;
    let mut started = false;
    let mut terminated = false;
    for (no, raw) in lines.by_ref() {
        let mut line = raw.trim();
        if !started {
            if line.is_empty() {
                continue;
            }
            let upper = line.to_ascii_uppercase();
            if !upper.starts_with("&FCI") {
                return Err(FcidumpError::Parse {
                    line: no,
                    msg: "expected `&FCI` namelist header".into(),
                });
            }
            started = true;
            header_line = no;
            line = &line[4..];
        }
        let upper = line.to_ascii_uppercase();
        if let Some(pos) = upper.find("&END") {
            header_text.push_str(&line[..pos]);
            terminated = true;
            break;
        }
        // A `/` outside quotes closes the namelist.
        let mut in_quote = None;
        let mut close = None;
        for (i, c) in line.char_indices() {
            match (c, in_quote) {
                ('\'' | '"', None) => in_quote = Some(c),
                (c, Some(q)) if c == q => in_quote = None,
                ('/', None) => {
                    close = Some(i);
                    break;
                }
                _ => {}
            }
        }
        if let Some(pos) = close {
            header_text.push_str(&line[..pos]);
            terminated = true;
            break;
        }
        header_text.push_str(line);
        header_text.push(' ');
    }
    if !started {
        return Err(FcidumpError::Parse {
            line: 1,
            msg: "empty input: missing `&FCI` header".into(),
        });
    }
    if !terminated {
        return Err(FcidumpError::Parse {
            line: header_line,
            msg: "unterminated namelist header".into(),
        });
    }

    let header = parse_header(&header_text, header_line)?;
    let norb = header.norb.ok_or_else(|| FcidumpError::Parse {
        line: header_line,
        msg: "header lacks NORB".into(),
    })?;
    let nelec = header.nelec.ok_or_else(|| FcidumpError::Parse {
        line: header_line,
        msg: "header lacks NELEC".into(),
    })?;
    let mut set = IntegralSet::zeros(norb, nelec, header.ms2.unwrap_or(0)).map_err(|e| {
        FcidumpError::Parse {
            line: header_line,
            msg: e.to_string(),
        }
    })?;
    if let Some(orbsym) = header.orbsym {
        if orbsym.len() == norb {
            set.orbsym = orbsym;
        } else if !orbsym.is_empty() {
            return Err(FcidumpError::Parse {
                line: header_line,
                msg: format!("ORBSYM has {} entries for NORB={norb}", orbsym.len()),
            });
        }
    }
    set.isym = header.isym.unwrap_or(1);
    set.source_label = header.label.unwrap_or_default();

    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(FcidumpError::Parse {
                line: no,
                msg: format!("expected `value i j k l`, found {} fields", fields.len()),
            });
        }
        let value: f64 = fields[0]
            .replace(['D', 'd'], "e")
            .parse()
            .map_err(|_| FcidumpError::Parse {
                line: no,
                msg: format!("non-numeric value {:?}", fields[0]),
            })?;
        let mut idx = [0usize; 4];
        for (slot, tok) in idx.iter_mut().zip(&fields[1..]) {
            let i: i64 = tok.parse().map_err(|_| FcidumpError::Parse {
                line: no,
                msg: format!("non-integer index {tok:?}"),
            })?;
            if i < 0 || i as usize > norb {
                return Err(FcidumpError::Range {
                    line: no,
                    index: i,
                    norb,
                });
            }
            *slot = i as usize;
        }
        match idx {
            [0, 0, 0, 0] => set.core_energy = value,
            [i, j, 0, 0] if i > 0 && j > 0 => set.set_h(i - 1, j - 1, value),
            [i, j, k, l] if i > 0 && j > 0 && k > 0 && l > 0 => {
                set.set_eri(i - 1, j - 1, k - 1, l - 1, value)
            }
            // Orbital-energy lines (`e i 0 0 0`) carry no Hamiltonian data.
            [_, 0, 0, 0] => {}
            _ => {
                return Err(FcidumpError::Parse {
                    line: no,
                    msg: format!("unsupported index pattern {:?}", idx),
                })
            }
        }
    }
    Ok(set)
}

fn fmt_value(v: f64) -> String {
    if v == 0.0 {
        "0.0".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Serializes an integral set; values carry 17 significant digits, so
/// parsing the output reproduces every stored bit.
pub fn write_fcidump(set: &IntegralSet) -> String {
    let m = set.n_orb;
    let mut out = String::new();
    let orbsym: Vec<String> = set.orbsym.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(
        out,
        "&FCI NORB={},NELEC={},MS2={},",
        set.n_orb, set.n_elec, set.ms2
    );
    let _ = writeln!(out, "  ORBSYM={},", orbsym.join(","));
    let _ = writeln!(out, "  ISYM={},", set.isym);
    if !set.source_label.is_empty() {
        let _ = writeln!(out, "  LABEL='{}',", set.source_label.replace('\'', ""));
    }
    out.push_str("&END\n");
    for p in 0..m {
        for q in 0..=p {
            for r in 0..m {
                for s in 0..=r {
                    if pair_index(p, q) < pair_index(r, s) {
                        continue;
                    }
                    let v = set.eri(p, q, r, s);
                    if v != 0.0 {
                        let _ = writeln!(
                            out,
                            "{} {} {} {} {}",
                            fmt_value(v),
                            p + 1,
                            q + 1,
                            r + 1,
                            s + 1
                        );
                    }
                }
            }
        }
    }
    for p in 0..m {
        for q in 0..=p {
            let v = set.h(p, q);
            if v != 0.0 {
                let _ = writeln!(out, "{} {} {} 0 0", fmt_value(v), p + 1, q + 1);
            }
        }
    }
    let _ = writeln!(out, "{} 0 0 0 0", fmt_value(set.core_energy));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_header_and_one_body_line() {
        let s = parse_fcidump("&FCI NORB=2,NELEC=2,MS2=0,/\n0.5 1 1 0 0\n").unwrap();
        assert_eq!(s.n_orb(), 2);
        assert_eq!(s.n_elec(), 2);
        assert_eq!(s.h(0, 0), 0.5);
        assert_eq!(s.h(0, 1), 0.0);
        assert_eq!(s.h(1, 1), 0.0);
        assert_eq!(s.core_energy(), 0.0);
        assert!(s.eri_dense().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn core_energy_sentinel() {
        let s = parse_fcidump("&FCI NORB=1,NELEC=0 &END\n0.75 0 0 0 0\n").unwrap();
        assert_eq!(s.core_energy(), 0.75);
    }

    #[test]
    fn eight_fold_symmetry_lookup() {
        let s = parse_fcidump("&FCI NORB=4,NELEC=2/\n0.125 2 1 4 3\n").unwrap();
        let v = 0.125;
        for (p, q, r, t) in [
            (0, 1, 2, 3),
            (1, 0, 2, 3),
            (0, 1, 3, 2),
            (1, 0, 3, 2),
            (2, 3, 0, 1),
            (3, 2, 0, 1),
            (2, 3, 1, 0),
            (3, 2, 1, 0),
        ] {
            assert_eq!(s.eri_get(p, q, r, t).unwrap(), v);
        }
        assert_eq!(s.eri_get(0, 0, 0, 0).unwrap(), 0.0);
        assert!(matches!(
            s.eri_get(4, 0, 0, 0),
            Err(FcidumpError::Index { index: 4, norb: 4 })
        ));
    }

    #[test]
    fn later_duplicates_overwrite() {
        let s = parse_fcidump("&FCI NORB=2,NELEC=2/\n1.0 1 2 0 0\n2.0 2 1 0 0\n").unwrap();
        assert_eq!(s.h(0, 1), 2.0);
        assert_eq!(s.h(1, 0), 2.0);
    }

    #[test]
    fn multiline_header_with_orbsym_and_fortran_exponent() {
        let text = " &FCI NORB=   3,NELEC= 2,MS2=0,\n  ORBSYM=1,2,1,\n  ISYM=1,\n &END\n 1.5D-01 1 1 1 1\n";
        let s = parse_fcidump(text).unwrap();
        assert_eq!(s.orbsym(), &[1, 2, 1]);
        assert_eq!(s.eri(0, 0, 0, 0), 0.15);
    }

    #[test]
    fn label_survives_round_trip() {
        let mut s = IntegralSet::zeros(2, 2, 0).unwrap();
        s.set_source_label("H2 6-31G NO/MP2");
        let back = parse_fcidump(&write_fcidump(&s)).unwrap();
        assert_eq!(back.source_label(), "H2 6-31G NO/MP2");
    }

    #[test]
    fn missing_nelec_reports_header_line() {
        let err = parse_fcidump("\n&FCI NORB=2 /\n").unwrap_err();
        assert_eq!(
            err,
            FcidumpError::Parse {
                line: 2,
                msg: "header lacks NELEC".into()
            }
        );
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        assert!(matches!(
            parse_fcidump(""),
            Err(FcidumpError::Parse { .. })
        ));
    }

    #[test]
    fn index_out_of_range() {
        let err = parse_fcidump("&FCI NORB=2,NELEC=2/\n1.0 3 1 0 0\n").unwrap_err();
        assert_eq!(
            err,
            FcidumpError::Range {
                line: 2,
                index: 3,
                norb: 2
            }
        );
    }

    #[test]
    fn non_numeric_value() {
        let err = parse_fcidump("&FCI NORB=2,NELEC=2/\nabc 1 1 0 0\n").unwrap_err();
        assert!(matches!(err, FcidumpError::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip_small() {
        let s = parse_fcidump("&FCI NORB=2,NELEC=2,MS2=0,/\n0.5 1 1 0 0\n").unwrap();
        assert_eq!(parse_fcidump(&write_fcidump(&s)).unwrap(), s);
    }

    #[test]
    fn empty_set_writes_only_core_line() {
        let s = IntegralSet::zeros(2, 0, 0).unwrap();
        let text = write_fcidump(&s);
        let body: Vec<&str> = text
            .lines()
            .skip_while(|l| !l.starts_with("&END"))
            .skip(1)
            .collect();
        assert_eq!(body, vec!["0.0 0 0 0 0"]);
    }

    #[test]
    fn too_many_electrons() {
        assert!(parse_fcidump("&FCI NORB=1,NELEC=3/\n").is_err());
    }
}
