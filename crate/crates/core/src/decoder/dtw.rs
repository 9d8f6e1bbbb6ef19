//! Dynamic time warping over a frame × token cost matrix.

use crate::error::{Error, Result};
use crate::types::TimePoint;

/// Dense row-major matrix; rows are audio frames, columns decoded tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AttentionMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AttentionMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Ok(AttentionMatrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwPath {
    /// `(frame, token)` cells from `(0, 0)` to `(F-1, N-1)`.
    pub cells: Vec<(usize, usize)>,
    pub cost: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Move {
    Start,
    Diagonal,
    Down,
    Right,
}

/// Minimal-cost monotonic path. Moves are down (next frame), right (next
/// token), or diagonal; ties prefer diagonal, then down.
pub fn dtw_path(attn: &AttentionMatrix) -> Result<DtwPath> {
    let (f_n, t_n) = (attn.rows(), attn.cols());
    if f_n == 0 || t_n == 0 {
        return Err(Error::Empty("attention matrix"));
    }
    let mut acc = vec![f64::INFINITY; f_n * t_n];
    let mut from = vec![Move::Start; f_n * t_n];
    let at = |f: usize, n: usize| f * t_n + n;
    for f in 0..f_n {
        for n in 0..t_n {
            let cell = attn.get(f, n);
            if f == 0 && n == 0 {
                acc[0] = cell;
                continue;
            }
            let mut best = (f64::INFINITY, Move::Start);
            // candidates in tie-preference order; strict < keeps the first
            let candidates = [
                (f > 0 && n > 0, Move::Diagonal),
                (f > 0, Move::Down),
                (n > 0, Move::Right),
            ];
            for (ok, mv) in candidates {
                if !ok {
                    continue;
                }
                let prev = match mv {
                    Move::Diagonal => acc[at(f - 1, n - 1)],
                    Move::Down => acc[at(f - 1, n)],
                    _ => acc[at(f, n - 1)],
                };
                if prev < best.0 {
                    best = (prev, mv);
                }
            }
            acc[at(f, n)] = best.0 + cell;
            from[at(f, n)] = best.1;
        }
    }
    let mut cells = Vec::with_capacity(f_n + t_n);
    let (mut f, mut n) = (f_n - 1, t_n - 1);
    loop {
        cells.push((f, n));
        match from[at(f, n)] {
            Move::Start => break,
            Move::Diagonal => {
                f -= 1;
                n -= 1;
            }
            Move::Down => f -= 1,
            Move::Right => n -= 1,
        }
    }
    cells.reverse();
    Ok(DtwPath {
        cells,
        cost: acc[at(f_n - 1, t_n - 1)],
    })
}

/// Each token's time is the first frame of its path segment over
/// `frame_rate`.
pub fn dtw_timestamps(attn: &AttentionMatrix, frame_rate: f64) -> Result<Vec<TimePoint>> {
    if !frame_rate.is_finite() || frame_rate <= 0.0 {
        return Err(Error::InvalidValue("frame rate must be positive".into()));
    }
    let path = dtw_path(attn)?;
    let mut first = vec![None; attn.cols()];
    for &(f, n) in &path.cells {
        first[n].get_or_insert(f);
    }
    first
        .into_iter()
        .map(|f| TimePoint::new(f.expect("path visits every column") as f64 / frame_rate))
        .collect()
}
