//! Test-side reference implementations, written without the library's code paths.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use smell::data::PairKind;
use smell::nn::Mlp;
use smell::objective::LossConstants;
use smell::{Autoencoder64, MarkerSet64};

fn mlp_forward(net: &Mlp<f64>, x: &[f64]) -> Vec<f64> {
    let mut current = x.to_vec();
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let (n_in, n_out) = layer.weight.dim();
        assert_eq!(n_in, current.len());
        let mut next = vec![0.0; n_out];
        for (o, out) in next.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for (i, &xi) in current.iter().enumerate() {
                acc += xi * layer.weight[[i, o]];
            }
            *out = if l < last { acc.max(0.0) } else { acc };
        }
        current = next;
    }
    current
}

fn markers_as_rows(markers: &MarkerSet64) -> Vec<(Vec<f64>, bool)> {
    let mut out = Vec::new();
    for r in markers.positive.rows() {
        out.push((r.to_vec(), true));
    }
    for r in markers.negative.rows() {
        out.push((r.to_vec(), false));
    }
    out
}

/// (q+, q-) for an S-space point.
pub fn naive_q(s: &[f64], markers: &MarkerSet64) -> (f64, f64) {
    let rows = markers_as_rows(markers);
    let kernel: Vec<f64> = rows
        .iter()
        .map(|(mu, _)| 1.0 / (1.0 + s.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>()))
        .collect();
    let total: f64 = kernel.iter().sum();
    let mut q = (0.0, 0.0);
    for (a, (_, positive)) in kernel.iter().zip(&rows) {
        if *positive {
            q.0 += a / total;
        } else {
            q.1 += a / total;
        }
    }
    q
}

fn repulsion(group: &[Vec<f64>], eps: f64) -> f64 {
    let k = group.len();
    if k < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                let d2: f64 = group[a].iter().zip(&group[b]).map(|(x, y)| (x - y).powi(2)).sum();
                sum += 1.0 / (d2 + eps);
            }
        }
    }
    sum / (k * (k - 1) / 2) as f64
}

/// Total objective `r_hc * H_c + R_r + R_d` evaluated one pair at a time.
pub fn naive_total_loss(
    net: &Autoencoder64,
    markers: &MarkerSet64,
    left: &[Vec<f64>],
    right: &[Vec<f64>],
    kinds: &[PairKind],
    c: &LossConstants<f64>,
) -> f64 {
    let g = kinds.len() as f64;
    let clamp = |q: f64| q.clamp(1e-7, 1.0 - 1e-7);
    let mut h_c = 0.0;
    let mut rec = 0.0;
    for ((xl, xr), kind) in left.iter().zip(right).zip(kinds) {
        let zl = mlp_forward(&net.encoder, xl);
        let zr = mlp_forward(&net.encoder, xr);
        let s: Vec<f64> = zl.iter().zip(&zr).map(|(a, b)| (a - b).abs()).collect();
        let (qp, qm) = naive_q(&s, markers);
        h_c -= match kind {
            PairKind::Similar => clamp(qp).ln(),
            PairKind::Dissimilar => clamp(qm).ln(),
        };
        for (x, z) in [(xl, &zl), (xr, &zr)] {
            let back = mlp_forward(&net.decoder, z);
            rec += x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    let pos: Vec<Vec<f64>> = markers.positive.rows().into_iter().map(|r| r.to_vec()).collect();
    let neg: Vec<Vec<f64>> = markers.negative.rows().into_iter().map(|r| r.to_vec()).collect();
    let r_d = c.r_d * (repulsion(&pos, c.epsilon) + repulsion(&neg, c.epsilon));
    c.r_hc * h_c / g + c.r_r * rec / g + r_d
}

/// Sorts every training row by (distance, index), keeps three and votes.
pub fn brute_force_knn(distances: &[f64], labels: &[usize]) -> usize {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].partial_cmp(&distances[b]).unwrap().then(a.cmp(&b)));
    let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for &r in order.iter().take(3) {
        let e = tally.entry(labels[r]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += distances[r];
    }
    let mut entries: Vec<(usize, usize, f64)> = tally.into_iter().map(|(l, (n, d))| (l, n, d)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.partial_cmp(&b.2).unwrap()).then(a.0.cmp(&b.0)));
    entries[0].0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub method: String,
    pub accuracy_avg: f64,
    pub ranking_avg: f64,
    pub diff_avg: f64,
    pub firsts: usize,
}

fn read_records(path: &Path) -> Vec<csv::StringRecord> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader.records().map(|r| r.unwrap()).collect()
}

/// Recomputes the cross-dataset summary from a per-fold `results.csv`.
pub fn summary_from_results(path: &Path) -> Vec<SummaryLine> {
    let mut datasets: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut folds: Vec<((String, String), Vec<f64>)> = Vec::new();
    for rec in read_records(path) {
        let (d, m, acc) = (rec[0].to_string(), rec[1].to_string(), rec[3].parse::<f64>().unwrap());
        if !datasets.contains(&d) {
            datasets.push(d.clone());
        }
        if !methods.contains(&m) {
            methods.push(m.clone());
        }
        match folds.iter_mut().find(|(k, _)| k.0 == d && k.1 == m) {
            Some((_, v)) => v.push(acc),
            None => folds.push(((d, m), vec![acc])),
        }
    }
    let mean = |d: &str, m: &str| -> f64 {
        let v = &folds.iter().find(|(k, _)| k.0 == d && k.1 == m).unwrap().1;
        let mut s = 0.0;
        for x in v {
            s += x;
        }
        s / v.len() as f64
    };
    let n = datasets.len() as f64;
    methods
        .iter()
        .map(|m| {
            let (mut acc, mut rank, mut diff, mut firsts) = (0.0, 0.0, 0.0, 0);
            for d in &datasets {
                let mut scores: Vec<f64> = methods.iter().map(|o| mean(d, o)).collect();
                scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let mine = mean(d, m);
                let position = scores.iter().position(|&s| s == mine).unwrap();
                acc += mine;
                rank += (position + 1) as f64;
                diff += scores[0] - mine;
                if position == 0 {
                    firsts += 1;
                }
            }
            SummaryLine {
                method: m.clone(),
                accuracy_avg: acc / n,
                ranking_avg: rank / n,
                diff_avg: diff / n,
                firsts,
            }
        })
        .collect()
}

/// Parses the tool's `summary.csv`.
pub fn read_summary(path: &Path) -> Vec<SummaryLine> {
    read_records(path)
        .into_iter()
        .map(|r| SummaryLine {
            method: r[0].to_string(),
            accuracy_avg: r[1].parse().unwrap(),
            ranking_avg: r[2].parse().unwrap(),
            diff_avg: r[3].parse().unwrap(),
            firsts: r[4].parse().unwrap(),
        })
        .collect()
}
