/// Minimum assignments for a mode to count as covered.
pub fn coverage_threshold(n: usize, modes: usize) -> f64 {
    (n as f64 / (4 * modes.max(1)) as f64).max(1.0)
}

/// Assigns each sample to its nearest center if within `radius`; returns
/// the number of centers holding at least [`coverage_threshold`] samples
/// and the per-center histogram.
pub fn mode_coverage(samples: &[Vec<f64>], centers: &[Vec<f64>], radius: f64) -> (usize, Vec<usize>) {
    let mut hist = vec![0usize; centers.len()];
    for s in samples {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (k, c) in centers.iter().enumerate() {
            let d: f64 = s.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = Some(k);
            }
        }
        if let Some(k) = best {
            if best_d.sqrt() <= radius {
                hist[k] += 1;
            }
        }
    }
    let covered = covered_modes(&hist, samples.len());
    (covered, hist)
}

/// Coverage from precomputed assignments (e.g. classifier argmax).
pub fn label_coverage(labels: &[usize], modes: usize) -> (usize, Vec<usize>) {
    let mut hist = vec![0usize; modes];
    for &l in labels {
        if l < modes {
            hist[l] += 1;
        }
    }
    (covered_modes(&hist, labels.len()), hist)
}

fn covered_modes(hist: &[usize], n: usize) -> usize {
    let th = coverage_threshold(n, hist.len());
    hist.iter().filter(|&&c| c as f64 >= th).count()
}
