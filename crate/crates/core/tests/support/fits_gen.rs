use rand::Rng;

use gammagate_core::fits::{BinTable, Card, Cell, Column, ColumnForm, Hdu, Value};

const BLOCK: usize = 2880;

pub fn printable(rng: &mut impl Rng, max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    let mut s: String = (0..n).map(|_| rng.random_range(0x20u8..=0x7e) as char).collect();
    // trailing blanks are padding in FITS and do not survive a round trip
    while s.ends_with(' ') {
        s.pop();
    }
    s
}

fn ident(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| {
            let c = rng.random_range(0..36u8);
            if c < 26 { (b'A' + c) as char } else { (b'0' + c - 26) as char }
        })
        .collect()
}

pub fn random_form(rng: &mut impl Rng) -> ColumnForm {
    match rng.random_range(0..5) {
        0 => ColumnForm::Int32,
        1 => ColumnForm::Int64,
        2 => ColumnForm::Float32,
        3 => ColumnForm::Float64,
        _ => ColumnForm::Ascii(rng.random_range(1..=24)),
    }
}

pub fn random_cell(rng: &mut impl Rng, form: ColumnForm) -> Cell {
    match form {
        ColumnForm::Int32 => Cell::Int32(rng.random()),
        ColumnForm::Int64 => Cell::Int64(rng.random()),
        // any bit pattern, NaN payloads and infinities included
        ColumnForm::Float32 => Cell::Float32(f32::from_bits(rng.random())),
        ColumnForm::Float64 => Cell::Float64(f64::from_bits(rng.random())),
        ColumnForm::Ascii(n) => Cell::Text(printable(rng, n)),
    }
}

/// Table whose columns cover every supported TFORM kind at least once.
pub fn random_table(rng: &mut impl Rng, max_rows: usize) -> BinTable {
    let mut forms = vec![
        ColumnForm::Int32,
        ColumnForm::Int64,
        ColumnForm::Float32,
        ColumnForm::Float64,
        ColumnForm::Ascii(rng.random_range(1..=24)),
    ];
    for _ in 0..rng.random_range(0..4) {
        forms.push(random_form(rng));
    }
    let columns: Vec<Column> = forms
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let c = Column::new(format!("C{i}_{}", ident(rng, 4)), f);
            if rng.random_bool(0.5) {
                c.with_unit(["deg", "s", "TeV", "m2", "ct/s"][rng.random_range(0..5)])
            } else {
                c
            }
        })
        .collect();
    let name_len = rng.random_range(1..=8);
    let mut t = BinTable::new(ident(rng, name_len), columns);
    let n = rng.random_range(0..=max_rows);
    t.rows = (0..n)
        .map(|_| forms.iter().map(|&f| random_cell(rng, f)).collect())
        .collect();
    t
}

pub fn random_cards(rng: &mut impl Rng) -> Vec<Card> {
    (0..rng.random_range(0..6))
        .map(|i| {
            let key = format!("HK{i}{}", ident(rng, 2));
            let value = match rng.random_range(0..4) {
                0 => Value::Integer(rng.random()),
                1 => Value::Real(rng.random_range(-1e12..1e12)),
                2 => Value::Logical(rng.random()),
                _ => Value::Text(printable(rng, 120)),
            };
            let card = Card::new(key, value);
            if rng.random_bool(0.3) {
                card.with_comment(printable(rng, 20).trim().to_owned())
            } else {
                card
            }
        })
        .collect()
}

pub fn random_file(rng: &mut impl Rng, max_rows: usize) -> Vec<Hdu> {
    let table = random_table(rng, max_rows);
    vec![Hdu::empty_primary(), Hdu::bintable(table, random_cards(rng))]
}

fn card(s: &str) -> Vec<u8> {
    assert!(s.len() <= 80);
    format!("{s:<80}").into_bytes()
}

fn header(cards: &[&str]) -> Vec<u8> {
    let mut b: Vec<u8> = cards.iter().flat_map(|c| card(c)).collect();
    b.extend(card("END"));
    let padded = b.len().div_ceil(BLOCK) * BLOCK;
    b.resize(padded, b' ');
    b
}

/// Files assembled byte by byte from the FITS layout rules: fixed-format
/// cards, 2880-byte blocks, blank-padded headers, zero-padded data.
pub fn hand_fixtures() -> Vec<Vec<u8>> {
    let primary = header(&[
        "SIMPLE  =                    T",
        "BITPIX  =                    8",
        "NAXIS   =                    0",
    ]);
    let mut out = vec![primary.clone()];

    let mut table = primary.clone();
    table.extend(header(&[
        "XTENSION= 'BINTABLE'",
        "BITPIX  =                    8",
        "NAXIS   =                    2",
        "NAXIS1  =                   24",
        "NAXIS2  =                    2",
        "PCOUNT  =                    0",
        "GCOUNT  =                    1",
        "TFIELDS =                    4",
        "TTYPE1  = 'ID      '",
        "TFORM1  = 'J       '",
        "TTYPE2  = 'TIME    '",
        "TFORM2  = 'D       '",
        "TUNIT2  = 's       '",
        "TTYPE3  = 'ENERGY  '",
        "TFORM3  = 'E       '",
        "TTYPE4  = 'NAME    '",
        "TFORM4  = '8A      '",
        "EXTNAME = 'EVENTS  '",
    ]));
    let mut data = Vec::new();
    for (id, time, energy, name) in [(1i32, 0.5f64, 1.5f32, "crab"), (-2, 1e9, 0.25, "pks2155")] {
        data.extend(id.to_be_bytes());
        data.extend(time.to_be_bytes());
        data.extend(energy.to_be_bytes());
        let mut n = name.as_bytes().to_vec();
        n.resize(8, b' ');
        data.extend(n);
    }
    data.resize(BLOCK, 0);
    table.extend(data);
    out.push(table);

    let mut empty = primary;
    empty.extend(header(&[
        "XTENSION= 'BINTABLE'",
        "BITPIX  =                    8",
        "NAXIS   =                    2",
        "NAXIS1  =                    8",
        "NAXIS2  =                    0",
        "PCOUNT  =                    0",
        "GCOUNT  =                    1",
        "TFIELDS =                    1",
        "TTYPE1  = 'K       '",
        "TFORM1  = 'K       '",
        "EXTNAME = 'EMPTY   '",
    ]));
    out.push(empty);
    out
}
