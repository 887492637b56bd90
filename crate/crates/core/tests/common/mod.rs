//! Independent reference implementations shared by integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use ucal_core::scalers::{gradient, mean_nll};
use ucal_core::{DenseLayer, DenseNet, EvalRecord, LogitArchive, RngStream, Scaler};

pub fn naive_bin(v: f64, m: usize) -> usize {
    let b = (v * m as f64).floor() as usize;
    if b >= m {
        m - 1
    } else {
        b
    }
}

/// Double loop: for every bin, scan all `(stat, outcome)` pairs.
pub fn naive_binned_gap(pairs: &[(f64, f64)], m: usize) -> f64 {
    let n = pairs.len() as f64;
    let mut total = 0.0;
    for bin in 0..m {
        let mut count = 0usize;
        let mut stat = 0.0;
        let mut outcome = 0.0;
        for &(v, o) in pairs {
            if naive_bin(v, m) == bin {
                count += 1;
                stat += v;
                outcome += o;
            }
        }
        if count > 0 {
            let c = count as f64;
            total += (c / n) * (outcome / c - stat / c).abs();
        }
    }
    total
}

fn naive_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn naive_ece(records: &[EvalRecord], m: usize) -> f64 {
    let pairs: Vec<_> = records
        .iter()
        .map(|r| {
            let k = naive_argmax(r.probs());
            (r.probs()[k], if k == r.label() { 1.0 } else { 0.0 })
        })
        .collect();
    naive_binned_gap(&pairs, m)
}

pub fn naive_uce(records: &[EvalRecord], m: usize) -> f64 {
    let pairs: Vec<_> = records
        .iter()
        .map(|r| {
            let wrong = naive_argmax(r.probs()) != r.label();
            (r.uncertainty(), if wrong { 1.0 } else { 0.0 })
        })
        .collect();
    naive_binned_gap(&pairs, m)
}

pub fn naive_cuce(records: &[EvalRecord], m: usize) -> f64 {
    let classes = records[0].classes();
    let mut sum = 0.0;
    let mut defined = 0;
    for c in 0..classes {
        let subset: Vec<EvalRecord> = records.iter().filter(|r| r.label() == c).cloned().collect();
        if !subset.is_empty() {
            sum += naive_uce(&subset, m);
            defined += 1;
        }
    }
    sum / defined as f64
}

pub fn naive_cece(records: &[EvalRecord], m: usize) -> f64 {
    let classes = records[0].classes();
    let mut sum = 0.0;
    for c in 0..classes {
        let pairs: Vec<_> = records
            .iter()
            .map(|r| (r.probs()[c], if r.label() == c { 1.0 } else { 0.0 }))
            .collect();
        sum += naive_binned_gap(&pairs, m);
    }
    sum / classes as f64
}

/// Entropy by the textbook formula, in nats, normalized by `log C`.
pub fn naive_normalized_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h / (p.len() as f64).ln()
}

fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Random record set mixing smooth, one-hot and uniform probability vectors.
pub fn random_records(rng: &mut RngStream, n: usize, classes: usize) -> Vec<EvalRecord> {
    (0..n)
        .map(|_| {
            let kind = rng.below(10);
            let probs = match kind {
                0 => {
                    let mut p = vec![0.0; classes];
                    p[rng.below(classes)] = 1.0;
                    p
                }
                1 => vec![1.0 / classes as f64; classes],
                _ => {
                    let scale = 4.0 * rng.uniform();
                    let z: Vec<f64> = (0..classes).map(|_| scale * rng.next_normal()).collect();
                    naive_softmax(&z)
                }
            };
            EvalRecord::new(probs, rng.below(classes)).unwrap()
        })
        .collect()
}

/// Relative error used by the finite-difference suites. Components below
/// 1e-6 are compared on an absolute scale, since central differences cannot
/// resolve them to four digits in double precision.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Write `report` as a bundle, read every table back and compare with the
/// in-memory values. Returns a description of the first mismatch.
pub fn check_bundle_round_trip(report: &ucal_core::experiments::Report, dir: &std::path::Path) -> Result<(), String> {
    use ucal_core::io::*;
    let files = write_bundle(report, dir).map_err(|e| e.to_string())?;
    for f in &files {
        if !f.starts_with(dir) {
            return Err(format!("{} written outside the bundle", f.display()));
        }
    }
    let metrics = read_metrics_csv(dir.join("metrics.csv")).map_err(|e| e.to_string())?;
    if metrics.len() != report.methods.len() {
        return Err("metrics row count".into());
    }
    for ((name, m), method) in metrics.iter().zip(&report.methods) {
        if name != &method.method || m != &method.metrics {
            return Err(format!("metrics row {name} differs"));
        }
    }
    for m in &report.methods {
        for rel in [&m.reliability_confidence, &m.reliability_uncertainty] {
            let bins = read_reliability_csv(dir.join(reliability_file(&m.method, rel.mode, "csv")))
                .map_err(|e| e.to_string())?;
            if bins != rel.bins {
                return Err(format!("reliability {} {:?} differs", m.method, rel.mode));
            }
            let svg = std::fs::read_to_string(dir.join(reliability_file(&m.method, rel.mode, "svg")))
                .map_err(|e| e.to_string())?;
            let bars = parse_svg_bins(&svg);
            if bars.len() != rel.bins.len() {
                return Err(format!("svg {} has {} bars", m.method, bars.len()));
            }
            for (i, (bin, count, mean, rate)) in bars.into_iter().enumerate() {
                let b = &rel.bins[i];
                if bin != i
                    || count != b.count
                    || (mean - b.mean_stat).abs() > 1e-12
                    || (rate - b.outcome_rate).abs() > 1e-12
                {
                    return Err(format!("svg {} bin {i} differs", m.method));
                }
            }
        }
        let rej = read_rejection_csv(dir.join(format!("rejection_{}.csv", m.method))).map_err(|e| e.to_string())?;
        if rej != m.rejection.points {
            return Err(format!("rejection {} differs", m.method));
        }
        let ood = read_ood_csv(dir.join(format!("ood_{}.csv", m.method))).map_err(|e| e.to_string())?;
        if ood != m.ood.points {
            return Err(format!("ood {} differs", m.method));
        }
    }
    let scalers: Vec<ScalerEntry> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("scalers.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    if scalers.len() != report.scalers.len() {
        return Err("scaler count".into());
    }
    for (entry, fitted) in scalers.iter().zip(&report.scalers) {
        let back = entry.scaler.to_scaler().map_err(|e| e.to_string())?;
        if back != fitted.scaler || entry.final_nll != fitted.final_nll || entry.iterations != fitted.iterations {
            return Err(format!("scaler {} differs", fitted.scaler.kind()));
        }
    }
    let meta: Metadata =
        serde_json::from_str(&std::fs::read_to_string(dir.join("metadata.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    if meta.config != report.config || meta.diagnostics != report.diagnostics {
        return Err("metadata differs".into());
    }
    Ok(())
}

/// Archive round trip plus one corruption of each kind. Returns the first
/// failure.
pub fn check_archive_format(archive: &ucal_core::LogitArchive) -> Result<(), String> {
    use ucal_core::io::*;
    use ucal_core::FormatError;
    let bytes = encode_archive(archive);
    let back = decode_archive(&bytes).map_err(|e| e.to_string())?;
    if &back != archive || encode_archive(&back) != bytes {
        return Err("round trip is not exact".into());
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    if !matches!(decode_archive(&bad), Err(FormatError::BadMagic { .. })) {
        return Err("bad magic not reported".into());
    }
    let mut bad = bytes.clone();
    bad[4] = 0xff;
    if !matches!(decode_archive(&bad), Err(FormatError::UnsupportedVersion { .. })) {
        return Err("version not reported".into());
    }
    if !matches!(
        decode_archive(&bytes[..bytes.len() - 1]),
        Err(FormatError::Truncated { .. })
    ) {
        return Err("truncation not reported".into());
    }
    let mut long = bytes.clone();
    long.push(0);
    if !matches!(decode_archive(&long), Err(FormatError::TrailingBytes { .. })) {
        return Err("trailing bytes not reported".into());
    }
    let mut bad = bytes.clone();
    bad[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&u32::MAX.to_le_bytes());
    if !matches!(decode_archive(&bad), Err(FormatError::LabelOutOfRange { index: 0, .. })) {
        return Err("label range not reported".into());
    }
    let mut bad = bytes.clone();
    let first_logit = HEADER_LEN + 4 * archive.len();
    bad[first_logit..first_logit + 8].copy_from_slice(&f64::NAN.to_le_bytes());
    if !matches!(decode_archive(&bad), Err(FormatError::NonFiniteLogit { .. })) {
        return Err("NaN logit not reported".into());
    }
    Ok(())
}

// Finite-difference gradient checks.

pub const MODEL_H: f64 = 1e-5;
pub const SCALER_H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

/// Largest relative error between backprop and central differences over
/// every weight and bias of `net`, with the dropout noise held fixed.
pub fn model_fd_error(net: &DenseNet, x: &[f64], label: usize, beta: f64, seed: u64) -> f64 {
    let noise = net.sample_noise(&mut RngStream::new(seed));
    let (_, grads) = net.loss_and_gradient(x, label, beta, &noise).unwrap();
    let mut worst: f64 = 0.0;
    for (l, layer) in net.layers().iter().enumerate() {
        for (bias, count) in [(false, layer.weights().len()), (true, layer.bias().len())] {
            for i in 0..count {
                let mut plus = net.clone();
                *plus.parameter_mut(l, bias, i) += MODEL_H;
                let mut minus = net.clone();
                *minus.parameter_mut(l, bias, i) -= MODEL_H;
                let fd = (plus.loss(x, label, beta, &noise).unwrap() - minus.loss(x, label, beta, &noise).unwrap())
                    / (2.0 * MODEL_H);
                let analytic = if bias { grads.bias[l][i] } else { grads.weights[l][i] };
                worst = worst.max(rel_err(analytic, fd));
            }
        }
    }
    worst
}

/// Random weights and biases of standard deviation `scale`, so that logits
/// stay moderate and the loss does not saturate.
pub fn random_net(sizes: &[usize], dropout: f64, scale: f64, rng: &mut RngStream) -> DenseNet {
    let layers = sizes
        .windows(2)
        .map(|w| {
            let weights = (0..w[0] * w[1]).map(|_| scale * rng.next_normal()).collect();
            let bias = (0..w[1]).map(|_| scale * rng.next_normal()).collect();
            DenseLayer::new(w[0], w[1], weights, bias, dropout).unwrap()
        })
        .collect();
    DenseNet::new(layers).unwrap()
}

pub fn random_archive(n: usize, samples: usize, classes: usize, scale: f64, seed: u64) -> LogitArchive {
    let mut rng = RngStream::new(seed);
    let logits = (0..n * samples * classes).map(|_| scale * rng.next_normal()).collect();
    let labels = (0..n).map(|_| rng.below(classes) as u32).collect();
    LogitArchive::new(samples, classes, logits, labels).unwrap()
}

pub fn scaler_fd_error(scaler: &Scaler, archive: &LogitArchive) -> f64 {
    let analytic = gradient(scaler, archive).unwrap();
    let base = scaler.params();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut shifted = scaler.clone();
        let mut p = base.clone();
        p[i] = base[i] + SCALER_H;
        shifted.set_params(&p).unwrap();
        let up = mean_nll(&shifted, archive).unwrap();
        p[i] = base[i] - SCALER_H;
        shifted.set_params(&p).unwrap();
        let down = mean_nll(&shifted, archive).unwrap();
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * SCALER_H)));
    }
    worst
}
