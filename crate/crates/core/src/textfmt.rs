//! Line-oriented parsing helpers shared by the versioned flat-text formats
//! (oracle solutions, critic parameter checkpoints).
//!
//! Every helper takes a `ctx` naming the format being parsed; errors carry
//! that context plus the 1-based line number of the offending line.

use crate::error::{Error, Result};

pub(crate) type NumberedLines<'a> = std::iter::Enumerate<std::str::Lines<'a>>;

pub(crate) fn parse_error(ctx: &'static str, line_no: usize, detail: String) -> Error {
    Error::InvalidInput {
        what: ctx,
        detail: format!("line {}: {detail}", line_no + 1),
    }
}

pub(crate) fn next_line<'a>(ctx: &'static str, lines: &mut NumberedLines<'a>) -> Result<(usize, &'a str)> {
    lines.next().ok_or(Error::InvalidInput {
        what: ctx,
        detail: "unexpected end of input".to_string(),
    })
}

pub(crate) fn expect_version(ctx: &'static str, lines: &mut NumberedLines<'_>, want: &str) -> Result<()> {
    let (no, line) = next_line(ctx, lines)?;
    if line != want {
        return Err(parse_error(
            ctx,
            no,
            format!("expected version line {want:?}, got {line:?}"),
        ));
    }
    Ok(())
}

pub(crate) fn labeled_value<'a>(
    ctx: &'static str,
    lines: &mut NumberedLines<'a>,
    key: &str,
) -> Result<(usize, &'a str)> {
    let (no, line) = next_line(ctx, lines)?;
    match line.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')) {
        Some(rest) => Ok((no, rest)),
        None => Err(parse_error(
            ctx,
            no,
            format!("expected `{key} ...`, got {line:?}"),
        )),
    }
}

pub(crate) fn labeled_f64(ctx: &'static str, lines: &mut NumberedLines<'_>, key: &str) -> Result<f64> {
    let (no, rest) = labeled_value(ctx, lines, key)?;
    rest.parse()
        .map_err(|_| parse_error(ctx, no, format!("bad {key} value {rest:?}")))
}

pub(crate) fn labeled_usize(ctx: &'static str, lines: &mut NumberedLines<'_>, key: &str) -> Result<usize> {
    let (no, rest) = labeled_value(ctx, lines, key)?;
    rest.parse()
        .map_err(|_| parse_error(ctx, no, format!("bad {key} value {rest:?}")))
}

pub(crate) fn parse_floats(ctx: &'static str, no: usize, text: &str, want: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != want {
        return Err(parse_error(
            ctx,
            no,
            format!("expected {want} fields, got {}", parts.len()),
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.parse()
                .map_err(|_| parse_error(ctx, no, format!("bad number {p:?}")))
        })
        .collect()
}

pub(crate) fn float_row(ctx: &'static str, lines: &mut NumberedLines<'_>, want: usize) -> Result<Vec<f64>> {
    let (no, line) = next_line(ctx, lines)?;
    parse_floats(ctx, no, line, want)
}

pub(crate) fn float_row_labeled(
    ctx: &'static str,
    lines: &mut NumberedLines<'_>,
    key: &str,
    want: usize,
) -> Result<Vec<f64>> {
    let (no, rest) = labeled_value(ctx, lines, key)?;
    parse_floats(ctx, no, rest, want)
}

pub(crate) fn expect_end(ctx: &'static str, lines: &mut NumberedLines<'_>) -> Result<()> {
    if let Some((no, line)) = lines.next() {
        return Err(parse_error(ctx, no, format!("trailing content {line:?}")));
    }
    Ok(())
}
