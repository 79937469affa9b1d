//! Plain-text persistence for oracle solutions and parameter snapshots.
//!
//! Everything is line-oriented: a versioned header line, `key = value`
//! scalars, then labelled blocks of numbers. Floats are written with Rust's
//! shortest-roundtrip formatting, so save/load is value-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::diff::{FlatParams, ParamLayout};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::oracle::{GridSolution, RiccatiSolution};

const GRID_HEADER: &str = "grid-solution v1";
const RICCATI_HEADER: &str = "riccati-solution v1";
const PARAMS_HEADER: &str = "flat-params v1";

/// Line-by-line reader tracking 1-based line numbers for error messages.
struct Lines<R: BufRead> {
    src: R,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(src: R) -> Self {
        Lines { src, line_no: 0 }
    }

    fn next_line(&mut self) -> Result<String> {
        let mut buf = String::new();
        let n = self.src.read_line(&mut buf)?;
        if n == 0 {
            return Err(Error::Parse {
                line: self.line_no + 1,
                detail: "unexpected end of file".to_string(),
            });
        }
        self.line_no += 1;
        Ok(buf.trim_end().to_string())
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let got = self.next_line()?;
        if got != want {
            return Err(Error::Parse {
                line: self.line_no,
                detail: format!("expected `{want}`, found `{got}`"),
            });
        }
        Ok(())
    }

    fn scalar(&mut self, key: &str) -> Result<f64> {
        let line = self.next_line()?;
        let val = line
            .strip_prefix(key)
            .and_then(|rest| rest.trim_start().strip_prefix('='))
            .ok_or_else(|| Error::Parse {
                line: self.line_no,
                detail: format!("expected `{key} = ...`, found `{line}`"),
            })?;
        self.parse_f64(val.trim())
    }

    fn scalar_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.scalar(key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Parse {
                line: self.line_no,
                detail: format!("`{key}` must be a non-negative integer, got {v}"),
            });
        }
        Ok(v as usize)
    }

    fn parse_f64(&self, text: &str) -> Result<f64> {
        text.parse::<f64>().map_err(|_| Error::Parse {
            line: self.line_no,
            detail: format!("not a number: `{text}`"),
        })
    }

    /// Read `count` whitespace-separated numbers spread over as many lines
    /// as needed.
    fn numbers(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let line = self.next_line()?;
            for tok in line.split_whitespace() {
                if out.len() == count {
                    return Err(Error::Parse {
                        line: self.line_no,
                        detail: "more numbers than declared".to_string(),
                    });
                }
                out.push(self.parse_f64(tok)?);
            }
        }
        Ok(out)
    }
}

fn write_numbers<W: Write>(w: &mut W, values: &[f64], per_line: usize) -> Result<()> {
    for chunk in values.chunks(per_line) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_grid_solution<W: Write>(w: &mut W, sol: &GridSolution) -> Result<()> {
    writeln!(w, "{GRID_HEADER}")?;
    writeln!(w, "gamma = {}", sol.gamma)?;
    writeln!(w, "residual = {}", sol.residual)?;
    writeln!(w, "points = {}", sol.s_grid.len())?;
    writeln!(w, "columns s v pi")?;
    for i in 0..sol.s_grid.len() {
        writeln!(w, "{} {} {}", sol.s_grid[i], sol.v_star[i], sol.pi_star[i])?;
    }
    Ok(())
}

pub fn read_grid_solution<R: Read>(r: R) -> Result<GridSolution> {
    let mut lines = Lines::new(BufReader::new(r));
    lines.expect(GRID_HEADER)?;
    let gamma = lines.scalar("gamma")?;
    let residual = lines.scalar("residual")?;
    let points = lines.scalar_usize("points")?;
    lines.expect("columns s v pi")?;
    let flat = lines.numbers(points * 3)?;
    let mut s_grid = Vec::with_capacity(points);
    let mut v_star = Vec::with_capacity(points);
    let mut pi_star = Vec::with_capacity(points);
    for row in flat.chunks_exact(3) {
        s_grid.push(row[0]);
        v_star.push(row[1]);
        pi_star.push(row[2]);
    }
    if points < 2 || s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parse {
            line: 0,
            detail: "grid nodes must be strictly increasing with at least 2 points".to_string(),
        });
    }
    Ok(GridSolution {
        s_grid,
        v_star,
        pi_star,
        gamma,
        residual,
    })
}

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &Mat) -> Result<()> {
    writeln!(w, "matrix {name} {} {}", m.rows(), m.cols())?;
    write_numbers(w, m.data(), m.cols().max(1))
}

fn read_matrix<R: BufRead>(lines: &mut Lines<R>, name: &str) -> Result<Mat> {
    let line = lines.next_line()?;
    let mut parts = line.split_whitespace();
    let (tag, got_name) = (parts.next(), parts.next());
    if tag != Some("matrix") || got_name != Some(name) {
        return Err(Error::Parse {
            line: lines.line_no,
            detail: format!("expected `matrix {name} <rows> <cols>`, found `{line}`"),
        });
    }
    let dims: Vec<usize> = parts
        .map(|t| {
            t.parse::<usize>().map_err(|_| Error::Parse {
                line: lines.line_no,
                detail: format!("bad matrix dimension `{t}`"),
            })
        })
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: lines.line_no,
            detail: "matrix header needs rows and cols".to_string(),
        });
    }
    let data = lines.numbers(dims[0] * dims[1])?;
    Ok(Mat::from_vec(dims[0], dims[1], data))
}

pub fn write_riccati_solution<W: Write>(w: &mut W, sol: &RiccatiSolution) -> Result<()> {
    writeln!(w, "{RICCATI_HEADER}")?;
    writeln!(w, "iterations = {}", sol.iterations)?;
    writeln!(w, "residual = {}", sol.residual)?;
    write_matrix(w, "p", &sol.p)?;
    write_matrix(w, "k", &sol.k)
}

pub fn read_riccati_solution<R: Read>(r: R) -> Result<RiccatiSolution> {
    let mut lines = Lines::new(BufReader::new(r));
    lines.expect(RICCATI_HEADER)?;
    let iterations = lines.scalar_usize("iterations")?;
    let residual = lines.scalar("residual")?;
    let p = read_matrix(&mut lines, "p")?;
    let k = read_matrix(&mut lines, "k")?;
    Ok(RiccatiSolution {
        p,
        k,
        iterations,
        residual,
    })
}

pub fn write_params<W: Write>(w: &mut W, params: &FlatParams) -> Result<()> {
    writeln!(w, "{PARAMS_HEADER}")?;
    writeln!(w, "segments = {}", params.layout().segments().count())?;
    for (name, off, len) in params.layout().segments() {
        writeln!(w, "segment {name} {len}")?;
        write_numbers(w, &params.values()[off..off + len], 8)?;
    }
    Ok(())
}

pub fn read_params<R: Read>(r: R) -> Result<FlatParams> {
    let mut lines = Lines::new(BufReader::new(r));
    lines.expect(PARAMS_HEADER)?;
    let n_segs = lines.scalar_usize("segments")?;
    let mut names: Vec<(String, usize)> = Vec::with_capacity(n_segs);
    let mut values: Vec<f64> = Vec::new();
    for _ in 0..n_segs {
        let line = lines.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("segment") {
            return Err(Error::Parse {
                line: lines.line_no,
                detail: format!("expected `segment <name> <len>`, found `{line}`"),
            });
        }
        let name = parts.next().ok_or_else(|| Error::Parse {
            line: lines.line_no,
            detail: "segment name missing".to_string(),
        })?;
        let len: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: lines.line_no,
                detail: "segment length missing or invalid".to_string(),
            })?;
        names.push((name.to_string(), len));
        values.extend(lines.numbers(len)?);
    }
    let seg_refs: Vec<(&str, usize)> = names.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    let layout: Arc<ParamLayout> = ParamLayout::new(&seg_refs);
    FlatParams::from_values(layout, values)
}

pub fn save_grid_solution(path: &Path, sol: &GridSolution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid_solution(&mut w, sol)
}

pub fn load_grid_solution(path: &Path) -> Result<GridSolution> {
    read_grid_solution(File::open(path)?)
}

pub fn save_riccati_solution(path: &Path, sol: &RiccatiSolution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_riccati_solution(&mut w, sol)
}

pub fn load_riccati_solution(path: &Path) -> Result<RiccatiSolution> {
    read_riccati_solution(File::open(path)?)
}

pub fn save_params(path: &Path, params: &FlatParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(&mut w, params)
}

pub fn load_params(path: &Path) -> Result<FlatParams> {
    read_params(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::MlpCritic;
    use crate::diff::CriticModel;
    use crate::env::LqrEnv;
    use crate::oracle::{riccati_solve, value_iteration_toy};

    #[test]
    fn grid_solution_roundtrips_exactly() {
        let sol = value_iteration_toy(101, 0.9, 1e-10, 10_000).unwrap();
        let mut buf = Vec::new();
        write_grid_solution(&mut buf, &sol).unwrap();
        let back = read_grid_solution(&buf[..]).unwrap();
        assert_eq!(sol.s_grid, back.s_grid);
        assert_eq!(sol.v_star, back.v_star);
        assert_eq!(sol.pi_star, back.pi_star);
        assert_eq!(sol.gamma, back.gamma);
        assert_eq!(sol.residual, back.residual);
    }

    #[test]
    fn riccati_solution_roundtrips_exactly() {
        let env = LqrEnv::standard_scalar();
        let sol = riccati_solve(&env, 1e-14, 10_000).unwrap();
        let mut buf = Vec::new();
        write_riccati_solution(&mut buf, &sol).unwrap();
        let back = read_riccati_solution(&buf[..]).unwrap();
        assert_eq!(sol.p.data(), back.p.data());
        assert_eq!(sol.k.data(), back.k.data());
        assert_eq!(sol.iterations, back.iterations);
        assert_eq!(sol.residual, back.residual);
    }

    #[test]
    fn params_roundtrip_preserves_layout_and_bits() {
        let model = MlpCritic::new(1, 1, &[8, 4]).unwrap();
        let params = model.init_params(99);
        let mut buf = Vec::new();
        write_params(&mut buf, &params).unwrap();
        let back = read_params(&buf[..]).unwrap();
        assert_eq!(back.layout().as_ref(), model.layout().as_ref());
        assert_eq!(params.values().len(), back.values().len());
        for (a, b) in params.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn params_roundtrip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        let model = MlpCritic::new(1, 1, &[4]).unwrap();
        let params = model.init_params(5);
        save_params(&path, &params).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(params.values(), back.values());
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(read_grid_solution(&b"wrong header"[..]).is_err());
        assert!(read_grid_solution(&b""[..]).is_err());
        let garbled = b"grid-solution v1\ngamma = 0.9\nresidual = x\n";
        assert!(read_grid_solution(&garbled[..]).is_err());
        let truncated = b"grid-solution v1\ngamma = 0.9\nresidual = 0\npoints = 3\ncolumns s v pi\n0 1 2\n";
        assert!(read_grid_solution(&truncated[..]).is_err());
        let bad_grid =
            b"grid-solution v1\ngamma = 0.9\nresidual = 0\npoints = 2\ncolumns s v pi\n1 0 0\n0 0 0\n";
        assert!(read_grid_solution(&bad_grid[..]).is_err());
        assert!(read_params(&b"flat-params v1\nsegments = 1\nsegment w 2\n1.0\n"[..]).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let garbled = b"grid-solution v1\ngamma = 0.9\nbad line\n";
        match read_grid_solution(&garbled[..]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
