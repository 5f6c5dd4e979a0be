//! Run-length helpers. Runs alternate background/foreground starting with
//! background; only the first run may be empty.

pub fn encode(bits: &[bool]) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &b in bits {
        if b != current {
            counts.push(run);
            run = 0;
            current = b;
        }
        run += 1;
    }
    counts.push(run);
    if counts.len() > 1 && *counts.last().unwrap() == 0 {
        counts.pop();
    }
    counts
}

pub fn decode(counts: &[u32]) -> Vec<bool> {
    let mut bits = Vec::with_capacity(counts.iter().map(|&c| c as usize).sum());
    for (i, &c) in counts.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    bits
}

/// True when `counts` is what [`encode`] would produce.
pub fn is_canonical(counts: &[u32]) -> bool {
    !counts.is_empty() && counts.iter().skip(1).all(|&c| c > 0)
}

fn transpose(bits: &[bool], rows: usize, cols: usize) -> Vec<bool> {
    let mut out = vec![false; bits.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = bits[r * cols + c];
        }
    }
    out
}

/// Row-major runs over a `width`x`height` mask to column-major runs (COCO order).
pub fn row_to_column_major(counts: &[u32], width: u32, height: u32) -> Vec<u32> {
    encode(&transpose(&decode(counts), height as usize, width as usize))
}

pub fn column_to_row_major(counts: &[u32], width: u32, height: u32) -> Vec<u32> {
    encode(&transpose(&decode(counts), width as usize, height as usize))
}
