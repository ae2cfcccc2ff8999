use super::metrics::pearson;
use super::EvalError;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwAlignment {
    /// Matched (prediction index, label index) pairs from (0,0) to the end.
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
    /// γ_pb over the matched pairs; `None` if either side is constant there.
    pub aligned_gamma_pb: Option<f64>,
}

/// Dynamic time warping of a probability series against 0/1 labels with
/// cost |p_i - l_j| and steps (1,0), (0,1), (1,1).
pub fn dtw_align(probs: &[f64], labels: &[bool]) -> Result<DtwAlignment, EvalError> {
    let (n, m) = (probs.len(), labels.len());
    if n < 2 || m < 2 {
        return Err(EvalError::TooShort);
    }
    let l: Vec<f64> = labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mut acc = vec![vec![f64::INFINITY; m]; n];
    for i in 0..n {
        for j in 0..m {
            let c = (probs[i] - l[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[i - 1][j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[i - 1][j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i][j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i][j] = c + best;
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        let cands = [
            (i > 0 && j > 0).then(|| (acc[i - 1][j - 1], i - 1, j - 1)),
            (i > 0).then(|| (acc[i - 1][j], i - 1, j)),
            (j > 0).then(|| (acc[i][j - 1], i, j - 1)),
        ];
        let (_, ni, nj) = cands.into_iter().flatten().fold((f64::INFINITY, i, j), |b, c| if c.0 < b.0 { c } else { b });
        i = ni;
        j = nj;
        path.push((i, j));
    }
    path.reverse();
    let xs: Vec<f64> = path.iter().map(|&(a, _)| probs[a]).collect();
    let ys: Vec<f64> = path.iter().map(|&(_, b)| l[b]).collect();
    Ok(DtwAlignment { cost: acc[n - 1][m - 1], aligned_gamma_pb: pearson(&xs, &ys), path })
}
