//! Aligned plain-text tables for the JSON reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::analysis::{ClusterRatioReport, GroupBreakdown};
use super::experiment::{CrossCorpusReport, WithinCorpusReport};
use super::stats::TTestResult;

/// Left-aligns the first column and right-aligns the rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let ncol = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = width[i]);
            } else {
                let _ = write!(s, "{c:>w$}", w = width[i]);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (ncol - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn fmt_test(t: Option<&TTestResult>) -> (String, String) {
    match t {
        None => ("-".into(), "-".into()),
        Some(t) => (
            t.t_statistic.map_or_else(|| "n/a".into(), |v| format!("{v:.3}")),
            format!("{:.4}", t.p_value_two_sided),
        ),
    }
}

fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

type Deltas = BTreeMap<String, BTreeMap<String, f64>>;

fn group_section<'a, I>(out: &mut String, models: I)
where
    I: Iterator<Item = (&'a str, &'a [GroupBreakdown], &'a Deltas)> + Clone,
{
    let attrs: Vec<String> = models
        .clone()
        .next()
        .map(|(_, b, _)| b.iter().map(|g| g.attr.clone()).collect())
        .unwrap_or_default();
    for (ai, attr) in attrs.iter().enumerate() {
        let _ = writeln!(out, "\nUAR by {attr}");
        let groups: Vec<String> = models
            .clone()
            .next()
            .map(|(_, b, _)| b[ai].groups.keys().cloned().collect())
            .unwrap_or_default();
        let mut header = vec!["model".to_string()];
        for g in &groups {
            header.push(g.clone());
            header.push(format!("d{g}"));
        }
        let rows: Vec<Vec<String>> = models
            .clone()
            .map(|(name, b, d)| {
                let mut row = vec![name.to_string()];
                for g in &groups {
                    row.push(b[ai].groups.get(g).map_or("-".into(), |s| format!("{:.4}", s.uar)));
                    row.push(d.get(attr).and_then(|m| m.get(g)).map_or("-".into(), |v| format!("{v:+.4}")));
                }
                row
            })
            .collect();
        let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
        out.push_str(&table(&hdr, &rows));
    }
}

pub fn render_within(r: &WithinCorpusReport) -> String {
    let mut out = format!(
        "Leave-one-speaker-out on {} ({} utterances, {} speakers, seeds {:?})\n\n",
        r.corpus,
        r.n_utterances,
        r.speakers.len(),
        r.seeds
    );
    let rows: Vec<Vec<String>> = r
        .models
        .iter()
        .map(|m| {
            let per_seed: Vec<f64> = m.seeds.iter().map(|s| s.mean_uar).collect();
            let (t, p) = fmt_test(m.t_test.as_ref());
            let k: Vec<f64> = m.seeds.iter().filter_map(|s| s.mean_clusters).collect();
            vec![
                m.model.name().to_string(),
                format!("{:.4}", m.mean_uar),
                format!("{:.4}", sd(&per_seed)),
                t,
                p,
                if k.is_empty() { "-".into() } else { format!("{:.2}", k.iter().sum::<f64>() / k.len() as f64) },
            ]
        })
        .collect();
    out.push_str(&table(&["model", "UAR", "sd(seeds)", "t", "p", "clusters"], &rows));
    let _ = writeln!(out, "(t-tests paired over speakers against {})", r.reference.name());
    group_section(
        &mut out,
        r.models.iter().map(|m| (m.model.name(), m.breakdowns.as_slice(), &m.breakdown_deltas)),
    );
    out
}

pub fn render_cross(r: &CrossCorpusReport) -> String {
    let mut out = format!(
        "Train on {} ({} utterances), test on {} ({} utterances), seeds {:?}\n\n",
        r.train_corpus, r.n_train, r.test_corpus, r.n_test, r.seeds
    );
    let rows: Vec<Vec<String>> = r
        .models
        .iter()
        .map(|m| {
            let (t, p) = fmt_test(m.t_test.as_ref());
            vec![m.model.name().to_string(), format!("{:.4}", m.mean_uar), format!("{:.4}", sd(&m.seed_uar)), t, p]
        })
        .collect();
    out.push_str(&table(&["model", "UAR", "sd(seeds)", "t", "p"], &rows));
    let _ = writeln!(out, "(t-tests paired over seeds against {})", r.reference.name());
    group_section(
        &mut out,
        r.models.iter().map(|m| (m.model.name(), m.breakdowns.as_slice(), &m.breakdown_deltas)),
    );
    out
}

pub fn render_cluster_ratios(r: &ClusterRatioReport) -> String {
    let row = |name: String, c: &super::analysis::ClusterRatios| {
        vec![
            name,
            c.n.to_string(),
            format!("{}/{}", c.count_a, c.count_b),
            c.ratio.to_string(),
            c.subjects.to_string(),
            c.dispersion.to_string(),
        ]
    };
    let mut rows: Vec<Vec<String>> = r
        .clusters
        .iter()
        .map(|c| row(format!("cluster {}", c.cluster.unwrap_or(0)), c))
        .collect();
    rows.push(row("all".into(), &r.overall));
    let ratio = format!("{}/{}", r.value_a, r.value_b);
    table(&["", "n", &format!("{} counts", r.attr), &ratio, "subjects", "max/min"], &rows)
}
