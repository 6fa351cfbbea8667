/// Boolean attention pattern: entry `(i, j)` says query `i` may attend key `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    Causal(usize),
    /// Self-attention over `len` positions of which the first `valid` are real.
    Padding { len: usize, valid: usize },
    /// The two-position policy sequence: 0 sees {0}, 1 sees {0, 1}.
    Policy,
}

impl AttentionMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        AttentionMask {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    pub fn causal(n: usize) -> Self {
        let allowed = (0..n * n).map(|k| k % n <= k / n).collect();
        AttentionMask { rows: n, cols: n, allowed }
    }

    /// Every query may attend exactly the keys flagged valid.
    pub fn keys(rows: usize, key_valid: &[bool]) -> Self {
        let cols = key_valid.len();
        let allowed = (0..rows).flat_map(|_| key_valid.iter().copied()).collect();
        AttentionMask { rows, cols, allowed }
    }

    pub fn policy() -> Self {
        AttentionMask::causal(2)
    }

    pub fn build(kind: MaskKind) -> Self {
        match kind {
            MaskKind::Causal(n) => AttentionMask::causal(n),
            MaskKind::Padding { len, valid } => {
                let keys: Vec<bool> = (0..len).map(|j| j < valid).collect();
                AttentionMask::keys(len, &keys)
            }
            MaskKind::Policy => AttentionMask::policy(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.allowed
    }

    pub fn is_full(&self) -> bool {
        self.allowed.iter().all(|&a| a)
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.allows(i, j) as u8).collect())
            .collect()
    }
}
