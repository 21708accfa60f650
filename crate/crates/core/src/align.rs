//! Global pairwise alignment with affine gap costs.
//!
//! The aligner is generic over the symbol type and scoring function so the
//! same kernel serves class-string alignment (scored by symbol tables) and
//! raw-token alignment (scored by PMI matrices). Gap runs cost
//! `open + (len - 1) * extend`.

/// Affine gap costs. Both values are penalties and normally negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPenalties {
    pub open: f64,
    pub extend: f64,
}

/// One column of a pairwise alignment: indices into the two inputs, `None`
/// marking a gap.
pub type AlignedColumn = (Option<usize>, Option<usize>);

/// Maximum global alignment score of `a` against `b`.
pub fn global_affine_score<T>(
    a: &[T],
    b: &[T],
    score: impl Fn(&T, &T) -> f64,
    gaps: GapPenalties,
) -> f64 {
    let (m, x, y) = fill(a, b, &score, gaps);
    let (rows, cols) = (a.len(), b.len());
    max3(m[idx(rows, cols, cols)], x[idx(rows, cols, cols)], y[idx(rows, cols, cols)])
}

/// Maximum global alignment score of `a` against `b`, together with one
/// optimal alignment.
///
/// Ties during traceback resolve in a fixed order (substitution, then gap in
/// `b`, then gap in `a`), so the returned alignment is deterministic.
pub fn global_affine_align<T>(
    a: &[T],
    b: &[T],
    score: impl Fn(&T, &T) -> f64,
    gaps: GapPenalties,
) -> (f64, Vec<AlignedColumn>) {
    let (m, x, y) = fill(a, b, &score, gaps);
    let (rows, cols) = (a.len(), b.len());
    let at = |mat: &[f64], i: usize, j: usize| mat[idx(i, j, cols)];

    // States: 0 = substitution, 1 = gap in b (consumes a), 2 = gap in a.
    let mut i = rows;
    let mut j = cols;
    let mut state = {
        let (vm, vx, vy) = (at(&m, i, j), at(&x, i, j), at(&y, i, j));
        pick_state(vm, vx, vy)
    };
    let best = match state {
        0 => at(&m, i, j),
        1 => at(&x, i, j),
        _ => at(&y, i, j),
    };
    let mut columns = Vec::with_capacity(rows + cols);
    while i > 0 || j > 0 {
        match state {
            0 => {
                // Arrived via a substitution a[i-1] ~ b[j-1].
                columns.push((Some(i - 1), Some(j - 1)));
                let (vm, vx, vy) = (at(&m, i - 1, j - 1), at(&x, i - 1, j - 1), at(&y, i - 1, j - 1));
                state = pick_state(vm, vx, vy);
                i -= 1;
                j -= 1;
            }
            1 => {
                columns.push((Some(i - 1), None));
                let open_m = at(&m, i - 1, j) + gaps.open;
                let ext = at(&x, i - 1, j) + gaps.extend;
                let open_y = at(&y, i - 1, j) + gaps.open;
                let v = at(&x, i, j);
                state = if open_m >= ext && open_m >= open_y && close(open_m, v) {
                    0
                } else if ext >= open_y && close(ext, v) {
                    1
                } else {
                    2
                };
                i -= 1;
            }
            _ => {
                columns.push((None, Some(j - 1)));
                let open_m = at(&m, i, j - 1) + gaps.open;
                let ext = at(&y, i, j - 1) + gaps.extend;
                let open_x = at(&x, i, j - 1) + gaps.open;
                let v = at(&y, i, j);
                state = if open_m >= ext && open_m >= open_x && close(open_m, v) {
                    0
                } else if open_x >= ext && close(open_x, v) {
                    1
                } else {
                    2
                };
                j -= 1;
            }
        }
    }
    columns.reverse();
    (best, columns)
}

fn pick_state(vm: f64, vx: f64, vy: f64) -> u8 {
    if vm >= vx && vm >= vy {
        0
    } else if vx >= vy {
        1
    } else {
        2
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn max3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).max(c)
}

fn idx(i: usize, j: usize, cols: usize) -> usize {
    i * (cols + 1) + j
}

/// Gotoh three-matrix fill. `m` ends in a substitution, `x` in a gap in `b`
/// (consuming `a`), `y` in a gap in `a`.
fn fill<T>(
    a: &[T],
    b: &[T],
    score: &impl Fn(&T, &T) -> f64,
    gaps: GapPenalties,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = a.len();
    let cols = b.len();
    let size = (rows + 1) * (cols + 1);
    let neg = f64::NEG_INFINITY;
    let mut m = vec![neg; size];
    let mut x = vec![neg; size];
    let mut y = vec![neg; size];
    m[idx(0, 0, cols)] = 0.0;
    for i in 1..=rows {
        x[idx(i, 0, cols)] = gaps.open + (i - 1) as f64 * gaps.extend;
    }
    for j in 1..=cols {
        y[idx(0, j, cols)] = gaps.open + (j - 1) as f64 * gaps.extend;
    }
    for i in 1..=rows {
        for j in 1..=cols {
            let diag = idx(i - 1, j - 1, cols);
            let up = idx(i - 1, j, cols);
            let left = idx(i, j - 1, cols);
            let here = idx(i, j, cols);
            m[here] = score(&a[i - 1], &b[j - 1]) + max3(m[diag], x[diag], y[diag]);
            x[here] = max3(m[up] + gaps.open, x[up] + gaps.extend, y[up] + gaps.open);
            y[here] = max3(m[left] + gaps.open, y[left] + gaps.extend, x[left] + gaps.open);
        }
    }
    (m, x, y)
}
