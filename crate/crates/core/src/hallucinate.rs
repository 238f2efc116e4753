//! Synthetic training data: resample the interiors of aligned stem regions.
//!
//! For every stem region of length L >= 3, each of the L-2 interior positions
//! gets one uniform draw from the language's alphabet, written identically to
//! the aligned lemma and form positions. Endpoints, everything outside the
//! regions, tags, and all lengths stay fixed. Examples without a qualifying
//! region pass through unchanged (still flagged), so the hallucinated dataset
//! always reaches its requested size.

use crate::align::{align_chars, find_stem_regions, StemRegion};
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::rng::{Rng, SeedTree};

pub const DEFAULT_MIN_STEM: usize = 3;
pub const DEFAULT_COUNT: usize = 10_000;

/// Substitute region interiors of one example. Deterministic given `rng`.
pub fn hallucinate_example(
    e: &Example,
    regions: &[StemRegion],
    alphabet: &[char],
    rng: &mut Rng,
) -> Result<Example> {
    let form = e
        .form
        .as_ref()
        .ok_or_else(|| Error::usage("hallucinate_example: example has no form"))?;
    if alphabet.is_empty() {
        return Err(Error::usage("hallucinate_example: empty alphabet"));
    }
    let mut lemma = e.lemma.clone();
    let mut new_form = form.clone();
    for r in regions {
        for off in 1..r.len().saturating_sub(1) {
            let c = alphabet[rng.below(alphabet.len())];
            lemma[r.lemma_span.0 + off] = c;
            new_form[r.form_span.0 + off] = c;
        }
    }
    Ok(Example {
        lemma,
        tags: e.tags.clone(),
        form: Some(new_form),
        language: e.language.clone(),
        is_hallucinated: true,
        is_copy_task: e.is_copy_task,
    })
}

/// Generate exactly `n` hallucinated triples, drawing base examples uniformly
/// with replacement. Each output index uses its own sub-generator, so chunked
/// parallel generation reproduces the serial result.
pub fn hallucinate_dataset(
    data: &[Example],
    alphabet: &[char],
    n: usize,
    min_stem: usize,
    seeds: &SeedTree,
) -> Result<Vec<Example>> {
    if data.is_empty() {
        return Err(Error::usage("hallucinate_dataset: empty input"));
    }
    (0..n)
        .map(|i| hallucinate_index(data, alphabet, min_stem, seeds, i))
        .collect()
}

/// As [`hallucinate_dataset`] but fanned out over `workers` threads.
pub fn hallucinate_dataset_parallel(
    data: &[Example],
    alphabet: &[char],
    n: usize,
    min_stem: usize,
    seeds: &SeedTree,
    workers: usize,
) -> Result<Vec<Example>> {
    if data.is_empty() {
        return Err(Error::usage("hallucinate_dataset: empty input"));
    }
    let workers = workers.max(1).min(n.max(1));
    if workers == 1 {
        return hallucinate_dataset(data, alphabet, n, min_stem, seeds);
    }
    let chunk = n.div_ceil(workers);
    let mut out: Vec<Option<Example>> = vec![None; n];
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for (w, slots) in out.chunks_mut(chunk).enumerate() {
            let start = w * chunk;
            handles.push(scope.spawn(move || -> Result<()> {
                for (off, slot) in slots.iter_mut().enumerate() {
                    *slot = Some(hallucinate_index(
                        data,
                        alphabet,
                        min_stem,
                        seeds,
                        start + off,
                    )?);
                }
                Ok(())
            }));
        }
        for h in handles {
            h.join().expect("hallucination worker panicked")?;
        }
        Ok(())
    })?;
    Ok(out
        .into_iter()
        .map(|e| e.expect("all slots filled"))
        .collect())
}

fn hallucinate_index(
    data: &[Example],
    alphabet: &[char],
    min_stem: usize,
    seeds: &SeedTree,
    index: usize,
) -> Result<Example> {
    let mut rng = seeds.indexed("hallucinate", index as u64);
    let base = &data[rng.below(data.len())];
    let form = base
        .form
        .as_ref()
        .ok_or_else(|| Error::usage("hallucinate_dataset: example has no form"))?;
    let alignment = align_chars(&base.lemma, form);
    let regions = find_stem_regions(&base.lemma, form, &alignment, min_stem);
    hallucinate_example(base, &regions, alphabet, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::chars_of;
    use crate::corpus::Vocabulary;

    fn regions_of(e: &Example, min_stem: usize) -> Vec<StemRegion> {
        let form = e.form.as_ref().unwrap();
        let a = align_chars(&e.lemma, form);
        find_stem_regions(&e.lemma, form, &a, min_stem)
    }

    #[test]
    fn greek_interiors_substituted_identically() {
        let e = Example::new(
            "παρακάμπτω",
            &["V", "2", "SG", "IPFV", "PST"],
            "παρέκαμπτες",
            "el",
        );
        let regions = regions_of(&e, 3);
        assert_eq!(regions.len(), 2);
        let data = vec![e.clone()];
        let v = Vocabulary::build(&[&data]).unwrap();
        let mut rng = SeedTree::new(99).stream("h");
        let h = hallucinate_example(&e, &regions, v.alphabet("el").unwrap(), &mut rng).unwrap();
        assert!(h.is_hallucinated);
        assert_eq!(h.lemma.len(), e.lemma.len());
        assert_eq!(
            h.form.as_ref().unwrap().len(),
            e.form.as_ref().unwrap().len()
        );
        assert_eq!(h.tags, e.tags);
        let hf = h.form.as_ref().unwrap();
        let ef = e.form.as_ref().unwrap();
        // regions are "παρ" and "μπτ": only their middle offsets may change,
        // and identically on both sides
        for r in &regions {
            assert_eq!(h.lemma[r.lemma_span.0], e.lemma[r.lemma_span.0]);
            assert_eq!(h.lemma[r.lemma_span.1 - 1], e.lemma[r.lemma_span.1 - 1]);
            for off in 1..r.len() - 1 {
                assert_eq!(h.lemma[r.lemma_span.0 + off], hf[r.form_span.0 + off]);
            }
        }
        // everything outside region interiors is untouched
        let mut interior_lemma = vec![false; e.lemma.len()];
        let mut interior_form = vec![false; ef.len()];
        for r in &regions {
            for off in 1..r.len() - 1 {
                interior_lemma[r.lemma_span.0 + off] = true;
                interior_form[r.form_span.0 + off] = true;
            }
        }
        for (i, flag) in interior_lemma.iter().enumerate() {
            if !flag {
                assert_eq!(h.lemma[i], e.lemma[i]);
            }
        }
        for (i, flag) in interior_form.iter().enumerate() {
            if !flag {
                assert_eq!(hf[i], ef[i]);
            }
        }
    }

    #[test]
    fn no_regions_passes_through_flagged() {
        let e = Example::new("ab", &["T"], "xy", "xx");
        let regions = regions_of(&e, 3);
        assert!(regions.is_empty());
        let mut rng = SeedTree::new(1).stream("h");
        let h = hallucinate_example(&e, &regions, &['a', 'b'], &mut rng).unwrap();
        assert!(h.is_hallucinated);
        assert_eq!(h.lemma, e.lemma);
        assert_eq!(h.form, e.form);
    }

    #[test]
    fn length_three_region_changes_at_most_the_middle() {
        let e = Example::new("abc", &["T"], "abcz", "xx");
        let regions = regions_of(&e, 3);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].len(), 3);
        for seed in 0..20 {
            let mut rng = SeedTree::new(seed).stream("h");
            let h = hallucinate_example(&e, &regions, &['p', 'q'], &mut rng).unwrap();
            assert_eq!(h.lemma[0], 'a');
            assert_eq!(h.lemma[2], 'c');
            let hf = h.form.as_ref().unwrap();
            assert_eq!(hf[0], 'a');
            assert_eq!(hf[2], 'c');
            assert_eq!(hf[3], 'z');
            assert_eq!(h.lemma[1], hf[1]);
            assert!(['p', 'q'].contains(&h.lemma[1]));
        }
    }

    #[test]
    fn dataset_size_and_determinism() {
        let data: Vec<Example> = (0..10)
            .map(|i| {
                let stem = format!("st{}mma", (b'a' + i as u8) as char);
                let form = format!("{stem}en");
                Example::new(&stem, &["T"], &form, "xx")
            })
            .collect();
        let v = Vocabulary::build(&[&data]).unwrap();
        let alpha = v.alphabet("xx").unwrap();
        let seeds = SeedTree::new(7);
        let a = hallucinate_dataset(&data, alpha, 200, 3, &seeds).unwrap();
        let b = hallucinate_dataset(&data, alpha, 200, 3, &seeds).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a, b);
        let c = hallucinate_dataset(&data, alpha, 200, 3, &SeedTree::new(8)).unwrap();
        assert_ne!(a, c);
        assert!(a.iter().all(|e| e.is_hallucinated));
        // n = 0 gives an empty list
        assert!(hallucinate_dataset(&data, alpha, 0, 3, &seeds)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn parallel_generation_matches_serial() {
        let data: Vec<Example> = (0..5)
            .map(|i| {
                let stem = format!("base{i}x");
                Example::new(&stem, &["T"], &format!("{stem}ko"), "xx")
            })
            .collect();
        let v = Vocabulary::build(&[&data]).unwrap();
        let alpha = v.alphabet("xx").unwrap();
        let seeds = SeedTree::new(5);
        let serial = hallucinate_dataset(&data, alpha, 101, 3, &seeds).unwrap();
        for workers in [2, 3, 8] {
            let par = hallucinate_dataset_parallel(&data, alpha, 101, 3, &seeds, workers).unwrap();
            assert_eq!(serial, par, "workers = {workers}");
        }
    }

    #[test]
    fn rehallucinated_pairs_realign_at_the_same_spans() {
        let data = vec![Example::new("schwimmen", &["V"], "gschwommen", "de")];
        let v = Vocabulary::build(&[&data]).unwrap();
        let alpha = v.alphabet("de").unwrap();
        let seeds = SeedTree::new(21);
        for h in hallucinate_dataset(&data, alpha, 50, 3, &seeds).unwrap() {
            let regions = regions_of(&h, 3);
            let base_regions = regions_of(&data[0], 3);
            let spans: Vec<_> = regions
                .iter()
                .map(|r| (r.lemma_span, r.form_span))
                .collect();
            let base_spans: Vec<_> = base_regions
                .iter()
                .map(|r| (r.lemma_span, r.form_span))
                .collect();
            assert_eq!(spans, base_spans, "hallucinated {:?}", h.lemma_string());
        }
    }

    #[test]
    fn substitutions_stay_in_alphabet() {
        let e = Example::new("abcdefg", &["T"], "abcdefg", "xx");
        let regions = regions_of(&e, 3);
        let alpha = chars_of("mnpq");
        for seed in 0..50 {
            let mut rng = SeedTree::new(seed).stream("h");
            let h = hallucinate_example(&e, &regions, &alpha, &mut rng).unwrap();
            for off in 1..6 {
                assert!(alpha.contains(&h.lemma[off]) || h.lemma[off] == e.lemma[off]);
                assert!(alpha.contains(&h.lemma[off]));
            }
        }
    }

    #[test]
    fn missing_form_is_a_usage_error() {
        let mut e = Example::new("abc", &["T"], "abc", "xx");
        e.form = None;
        let mut rng = SeedTree::new(1).stream("h");
        assert!(hallucinate_example(&e, &[], &['a'], &mut rng).is_err());
    }
}
