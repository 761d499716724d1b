//! Multi-chain effective sample size (initial monotone sequence) and
//! summary statistics.

/// ESS of one scalar quantity from equal-length chains.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| c[..n].iter().sum::<f64>() / n as f64).collect();
    let acov: Vec<Vec<f64>> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| autocovariance(&c[..n], *mu))
        .collect();
    let nf = n as f64;
    let w = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |t: usize| -> f64 {
        let mean_acov = acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    // Sums of adjacent pairs, kept while positive and forced non-increasing.
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev);
        prev = pair;
        tau += 2.0 * pair;
        t += 2;
    }
    let tau = tau.max(1.0 / (m as f64 * nf).log10());
    m as f64 * nf / tau
}

fn autocovariance(x: &[f64], mean: f64) -> Vec<f64> {
    let n = x.len();
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..n)
        .map(|t| c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    /// Monte Carlo standard error of the mean, sd/√ESS.
    pub mcse: f64,
}

pub fn summarize(chains: &[Vec<f64>]) -> Summary {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let k = all.len() as f64;
    let mean = all.iter().sum::<f64>() / k;
    let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let e = ess(chains);
    Summary {
        mean,
        sd,
        ess: e,
        mcse: sd / e.sqrt(),
    }
}
