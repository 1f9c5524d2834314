//! Plain-text formats for datasets, truths and posterior draw dumps.
//!
//! Dataset: a header line `M N n`, then one token per line as
//! `doc<TAB>word`, both 1-based.
//!
//! Truth and draws: named matrix blocks. A block header is
//! `<name> <rows> <cols>` followed by `rows` lines of space-separated
//! values in row-major order. Lines starting with `#` are comments.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::matrix::StochasticMatrix;
use crate::model::{Dataset, Token, TrueModel};

/// Formats a real with 17 significant digits, enough to round-trip.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

pub fn write_dataset<W: Write>(mut out: W, dataset: &Dataset) -> Result<()> {
    writeln!(out, "{} {} {}", dataset.vocab(), dataset.docs(), dataset.len()).map_err(write_err)?;
    for tok in dataset.tokens() {
        writeln!(out, "{}\t{}", tok.doc + 1, tok.word + 1).map_err(write_err)?;
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(field: &str, line: u64, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("expected {what}, found {field:?}")))
}

/// Numbered, non-empty, non-comment lines.
fn content_lines<R: BufRead>(input: R) -> impl Iterator<Item = Result<(u64, String)>> {
    input
        .lines()
        .enumerate()
        .map(|(idx, line)| {
            line.map(|l| (idx as u64 + 1, l))
                .map_err(|e| Error::io("<input>", e))
        })
        .filter(|res| match res {
            Ok((_, l)) => {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        })
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = content_lines(input);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing `M N n` header"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::parse(line_no, "header must be `M N n`"));
    }
    let vocab: usize = parse_num(fields[0], line_no, "M")?;
    let docs: usize = parse_num(fields[1], line_no, "N")?;
    let n: usize = parse_num(fields[2], line_no, "n")?;
    let mut tokens = Vec::with_capacity(n);
    for item in lines {
        let (line_no, line) = item?;
        let mut parts = line.split('\t');
        let (Some(doc), Some(word), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(line_no, "expected `doc<TAB>word`"));
        };
        let doc: usize = parse_num(doc, line_no, "document index")?;
        let word: usize = parse_num(word, line_no, "word index")?;
        if doc == 0 || doc > docs || word == 0 || word > vocab {
            return Err(Error::parse(
                line_no,
                format!("token ({doc}, {word}) outside 1..={docs} x 1..={vocab}"),
            ));
        }
        tokens.push(Token {
            doc: (doc - 1) as u32,
            word: (word - 1) as u32,
        });
    }
    if tokens.len() != n {
        return Err(Error::parse(
            line_no,
            format!("header announces {n} tokens, found {}", tokens.len()),
        ));
    }
    Dataset::from_tokens(vocab, docs, tokens)
}

fn write_block<W: Write>(out: &mut W, name: &str, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    writeln!(out, "{name} {rows} {cols}").map_err(write_err)?;
    for row in data.chunks(cols) {
        let line: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        writeln!(out, "{}", line.join(" ")).map_err(write_err)?;
    }
    Ok(())
}

pub fn write_truth<W: Write>(mut out: W, truth: &TrueModel) -> Result<()> {
    writeln!(out, "# LDA truth: A0 is words x topics, B0 is topics x documents").map_err(write_err)?;
    let (a0, b0) = (truth.a0(), truth.b0());
    write_block(&mut out, "A0", a0.rows(), a0.cols(), a0.as_row_major())?;
    write_block(&mut out, "B0", b0.rows(), b0.cols(), b0.as_row_major())?;
    let dd = truth.doc_dist();
    write_block(&mut out, "doc_dist", 1, dd.len(), dd)
}

struct Block {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    line: u64,
}

fn read_blocks<R: BufRead>(input: R) -> Result<Vec<Block>> {
    let mut blocks = Vec::new();
    let mut lines = content_lines(input);
    while let Some(item) = lines.next() {
        let (line_no, header) = item?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(line_no, "expected block header `<name> <rows> <cols>`"));
        }
        let rows: usize = parse_num(fields[1], line_no, "row count")?;
        let cols: usize = parse_num(fields[2], line_no, "column count")?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (row_line, row) = lines
                .next()
                .ok_or_else(|| Error::parse(line_no, format!("block {} ends early", fields[0])))??;
            let values = row
                .split_whitespace()
                .map(|f| parse_num::<f64>(f, row_line, "a real number"))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != cols {
                return Err(Error::parse(
                    row_line,
                    format!("expected {cols} values, found {}", values.len()),
                ));
            }
            data.extend(values);
        }
        blocks.push(Block {
            name: fields[0].to_string(),
            rows,
            cols,
            data,
            line: line_no,
        });
    }
    Ok(blocks)
}

fn take_block(blocks: &mut Vec<Block>, name: &str) -> Option<Block> {
    let idx = blocks.iter().position(|b| b.name == name)?;
    Some(blocks.remove(idx))
}

fn block_matrix(block: Block) -> Result<StochasticMatrix> {
    let line = block.line;
    StochasticMatrix::from_row_major(block.rows, block.cols, block.data).map_err(|e| Error::parse(line, e.to_string()))
}

/// Reads a truth written by [`write_truth`]. A missing `doc_dist` block
/// means uniform documents. A0 and B0 must be full rank.
pub fn read_truth<R: BufRead>(input: R) -> Result<TrueModel> {
    let mut blocks = read_blocks(input)?;
    let a0 = take_block(&mut blocks, "A0").ok_or_else(|| Error::parse(1, "missing A0 block"))?;
    let b0 = take_block(&mut blocks, "B0").ok_or_else(|| Error::parse(1, "missing B0 block"))?;
    let doc_dist = take_block(&mut blocks, "doc_dist").map(|b| b.data);
    if let Some(extra) = blocks.first() {
        return Err(Error::parse(extra.line, format!("unexpected block {}", extra.name)));
    }
    TrueModel::new(block_matrix(a0)?, block_matrix(b0)?, doc_dist)
}

/// Writes every draw as a `draw <index>` record followed by its A and B blocks.
pub fn write_draws<W: Write>(mut out: W, draws: &PosteriorDraws) -> Result<()> {
    for (idx, d) in draws.draws().iter().enumerate() {
        writeln!(out, "# draw {}", idx + 1).map_err(write_err)?;
        write_block(&mut out, "A", d.a.rows(), d.a.cols(), d.a.as_row_major())?;
        write_block(&mut out, "B", d.b.rows(), d.b.cols(), d.b.as_row_major())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::model::{generate_dataset, sample_true_model};

    #[test]
    fn dataset_text_layout() {
        let ds = Dataset::from_tokens(3, 2, vec![Token { doc: 1, word: 2 }, Token { doc: 0, word: 0 }]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3 2 2\n2\t3\n1\t1\n");
    }

    #[test]
    fn dataset_parse_errors_carry_line_numbers() {
        let err = read_dataset("3 2 2\n1\t1\n5\t1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_dataset("3 2 2\n1\t1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("announces 2"), "{err}");
        let err = read_dataset("3 2 1\n1 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(read_dataset("".as_bytes()).is_err());
    }

    #[test]
    fn truth_round_trips_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = sample_true_model(6, 4, 3, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_truth(&mut buf, &truth).unwrap();
        let back = read_truth(buf.as_slice()).unwrap();
        assert_eq!(back, truth);
    }

    #[test]
    fn truth_parse_errors() {
        let text = "A0 2 1\n0.5\n0.5\n";
        assert!(read_truth(text.as_bytes()).unwrap_err().to_string().contains("B0"));
        let text = "A0 2 1\n0.5 0.1\n";
        assert!(matches!(read_truth(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "A0 2 1\n0.7\n0.5\nB0 1 2\n1 1\n";
        assert!(matches!(read_truth(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn draws_dump_has_one_record_per_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = sample_true_model(4, 3, 2, &mut rng).unwrap();
        let ds = generate_dataset(&truth, 30, &mut rng).unwrap();
        let cfg = crate::gibbs::GibbsConfig { burn_in: 2, thinning: 1, draws: 3, ..Default::default() };
        let draws = crate::gibbs::run(&ds, 2, &cfg).unwrap();
        let mut buf = Vec::new();
        write_draws(&mut buf, &draws).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("# draw ").count(), 3);
        assert!(text.contains("# draw 3\nA 4 2\n"));
        let blocks = read_blocks(text.as_bytes()).unwrap();
        assert_eq!(blocks.len(), 6);
        assert_eq!(blocks[1].data, draws.draws()[0].b.as_row_major());
    }

    proptest! {
        #[test]
        fn dataset_round_trip(vocab in 1usize..8, docs in 1usize..6, raw in prop::collection::vec((0u32..100, 0u32..100), 0..60)) {
            let tokens: Vec<Token> = raw
                .into_iter()
                .map(|(d, w)| Token { doc: d % docs as u32, word: w % vocab as u32 })
                .collect();
            let ds = Dataset::from_tokens(vocab, docs, tokens).unwrap();
            let mut buf = Vec::new();
            write_dataset(&mut buf, &ds).unwrap();
            prop_assert_eq!(read_dataset(buf.as_slice()).unwrap(), ds);
        }

        #[test]
        fn reals_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }
}
