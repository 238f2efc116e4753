//! Character-level lemma/form alignment and stem-region detection.
//!
//! Unit-cost Levenshtein alignment (match 0, substitute/insert/delete 1) with
//! a fixed traceback preference so results are reproducible. A stem region is
//! a maximal run of consecutive identically-matched character pairs of length
//! at least `min_len` (default 3); hallucination rewrites the interiors of
//! these runs.

/// One aligned pair: `None` marks a gap on that side. Never (None, None).
pub type AlignedPair = (Option<usize>, Option<usize>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// Monotone in both coordinates; covers every lemma and form index.
    pub pairs: Vec<AlignedPair>,
    pub cost: usize,
}

/// Identically-aligned span: `lemma[lemma_span.0 + i] == form[form_span.0 + i]`
/// for every offset `i` in the span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StemRegion {
    /// Half-open `[start, end)` over lemma indices.
    pub lemma_span: (usize, usize),
    /// Half-open `[start, end)` over form indices.
    pub form_span: (usize, usize),
}

impl StemRegion {
    pub fn len(&self) -> usize {
        self.lemma_span.1 - self.lemma_span.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unit-cost edit distance. Shared by alignment and evaluation.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[b.len()]
}

/// Minimum-cost alignment with deterministic traceback: on cost ties prefer
/// match, then substitute, then delete (consume lemma), then insert.
pub fn align_chars(lemma: &[char], form: &[char]) -> Alignment {
    let (n, k) = (lemma.len(), form.len());
    let width = k + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for (j, cell) in d.iter_mut().enumerate().take(k + 1) {
        *cell = j;
    }
    for i in 1..=n {
        d[i * width] = i;
        for j in 1..=k {
            let sub = d[(i - 1) * width + j - 1] + usize::from(lemma[i - 1] != form[j - 1]);
            let del = d[(i - 1) * width + j] + 1;
            let ins = d[i * width + j - 1] + 1;
            d[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut pairs: Vec<AlignedPair> = Vec::with_capacity(n.max(k));
    let (mut i, mut j) = (n, k);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * width + j - 1];
            let matched = lemma[i - 1] == form[j - 1];
            if matched && here == diag {
                pairs.push((Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
            if !matched && here == diag + 1 {
                pairs.push((Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * width + j] + 1 {
            pairs.push((Some(i - 1), None));
            i -= 1;
            continue;
        }
        pairs.push((None, Some(j - 1)));
        j -= 1;
    }
    pairs.reverse();
    Alignment {
        pairs,
        cost: d[n * width + k],
    }
}

/// Maximal runs of consecutive matched-identical pairs with length >= min_len,
/// left to right.
pub fn find_stem_regions(
    lemma: &[char],
    form: &[char],
    alignment: &Alignment,
    min_len: usize,
) -> Vec<StemRegion> {
    let mut regions = Vec::new();
    let mut run: Option<StemRegion> = None;
    let flush = |run: &mut Option<StemRegion>, regions: &mut Vec<StemRegion>| {
        if let Some(r) = run.take() {
            if r.len() >= min_len {
                regions.push(r);
            }
        }
    };
    for &pair in &alignment.pairs {
        match pair {
            (Some(li), Some(fi)) if lemma[li] == form[fi] => match &mut run {
                Some(r) if r.lemma_span.1 == li && r.form_span.1 == fi => {
                    r.lemma_span.1 = li + 1;
                    r.form_span.1 = fi + 1;
                }
                _ => {
                    flush(&mut run, &mut regions);
                    run = Some(StemRegion {
                        lemma_span: (li, li + 1),
                        form_span: (fi, fi + 1),
                    });
                }
            },
            _ => flush(&mut run, &mut regions),
        }
    }
    flush(&mut run, &mut regions);
    regions
}

pub fn chars_of(s: &str) -> Vec<char> {
    s.chars().collect()
}
