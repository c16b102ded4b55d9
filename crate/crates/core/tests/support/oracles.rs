//! Straightforward reference implementations used to cross-check the
//! library. Written from the textbook definitions, without sharing code.

#![allow(dead_code)]

/// Textbook sentence BLEU with uniform weights over orders 1..=min(4, c),
/// clipped counts, brevity penalty against the closest reference length
/// (shorter on ties) and an optional epsilon for zero match counts.
pub fn bleu(hyp: &[String], refs: &[Vec<String>], epsilon: Option<f64>) -> f64 {
    let refs: Vec<&Vec<String>> = refs.iter().filter(|r| !r.is_empty()).collect();
    let c = hyp.len();
    let max_n = c.min(4);
    let mut log_p = 0.0;
    for n in 1..=max_n {
        let grams: Vec<&[String]> = hyp.windows(n).collect();
        let mut clipped = 0usize;
        let mut done: Vec<&[String]> = Vec::new();
        for g in &grams {
            if done.contains(g) {
                continue;
            }
            done.push(g);
            let in_hyp = grams.iter().filter(|h| h == &g).count();
            let in_ref = refs
                .iter()
                .map(|r| r.windows(n).filter(|w| w == g).count())
                .max()
                .unwrap_or(0);
            clipped += in_hyp.min(in_ref);
        }
        let numerator = if clipped == 0 {
            match epsilon {
                Some(e) => e,
                None => return 0.0,
            }
        } else {
            clipped as f64
        };
        log_p += (numerator / grams.len() as f64).ln() / max_n as f64;
    }
    let mut r = refs[0].len();
    for rf in &refs {
        let d = (rf.len() as i64 - c as i64).abs();
        let best = (r as i64 - c as i64).abs();
        if d < best || (d == best && rf.len() < r) {
            r = rf.len();
        }
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_p.exp()
}

/// Fleiss' kappa from per-item category counts, as in Fleiss (1971).
pub fn fleiss(table: &[Vec<usize>]) -> f64 {
    let big_n = table.len() as f64;
    let n = table[0].iter().sum::<usize>() as f64;
    let k = table[0].len();
    let p_i: Vec<f64> = table
        .iter()
        .map(|row| row.iter().map(|&x| (x * x.saturating_sub(1)) as f64).sum::<f64>() / (n * (n - 1.0)))
        .collect();
    let p_bar = p_i.iter().sum::<f64>() / big_n;
    let p_e: f64 = (0..k)
        .map(|j| table.iter().map(|row| row[j] as f64).sum::<f64>() / (big_n * n))
        .map(|p| p * p)
        .sum();
    if p_bar == 1.0 {
        return 1.0;
    }
    (p_bar - p_e) / (1.0 - p_e)
}

/// Checks a worker -> candidate-list plan against the campaign constraints
/// from scratch. Returns the first violation found.
pub fn check_plan(
    plan: &std::collections::BTreeMap<String, Vec<String>>,
    candidates: &[String],
    raters: usize,
    quota: usize,
) -> Result<(), String> {
    for (w, tasks) in plan {
        if tasks.len() > quota {
            return Err(format!("{w} over quota"));
        }
        for (i, t) in tasks.iter().enumerate() {
            if tasks[..i].contains(t) {
                return Err(format!("{w} repeats {t}"));
            }
            if !candidates.contains(t) {
                return Err(format!("{w} has unknown {t}"));
            }
        }
    }
    for c in candidates {
        let n = plan.values().filter(|ts| ts.contains(c)).count();
        if n != raters {
            return Err(format!("{c} has {n} raters"));
        }
    }
    Ok(())
}
