use crate::error::{Error, Result};

/// Holm step-down adjustment, returned in the input order.
pub fn holm_adjust(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::input(format!("p-value {bad} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (l, &i) in order.iter().enumerate() {
        running = running.max(((m - l) as f64 * pvals[i]).min(1.0));
        adjusted[i] = running;
    }
    Ok(adjusted)
}
