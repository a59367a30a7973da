/// Strict local maxima, thinned so that any two survivors are at least
/// `min_separation` samples apart.
///
/// On conflict the larger peak wins; exact ties keep the earlier index.
pub fn find_peaks(signal: &[f64], min_separation: usize) -> Vec<usize> {
    if signal.len() < 3 {
        return Vec::new();
    }
    let maxima: Vec<usize> = (1..signal.len() - 1)
        .filter(|&i| signal[i] > signal[i - 1] && signal[i] > signal[i + 1])
        .collect();
    if min_separation <= 1 || maxima.len() < 2 {
        return maxima;
    }

    // priority order: value descending, index ascending
    let mut order: Vec<usize> = (0..maxima.len()).collect();
    order.sort_by(|&a, &b| {
        signal[maxima[b]]
            .total_cmp(&signal[maxima[a]])
            .then(maxima[a].cmp(&maxima[b]))
    });

    let mut keep = vec![true; maxima.len()];
    for &j in &order {
        if !keep[j] {
            continue;
        }
        let p = maxima[j];
        let mut k = j;
        while k > 0 && p - maxima[k - 1] < min_separation {
            k -= 1;
            keep[k] = false;
        }
        let mut k = j + 1;
        while k < maxima.len() && maxima[k] - p < min_separation {
            keep[k] = false;
            k += 1;
        }
    }
    maxima
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}
