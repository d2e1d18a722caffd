use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("input is constant; rank correlation is undefined")]
    DegenerateInput,
    #[error("input contains a non-finite value")]
    NonFinite,
}

const KEYWORDS: [&str; 9] = ["fix", "defect", "error", "bug", "issue", "mistake", "correct", "fault", "flaw"];

/// Whether a PR title or tag line reads as a bug fix: some word starts with
/// one of the fix keywords.
pub fn is_bug_fixing_title(title: &str) -> bool {
    title
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .any(|w| KEYWORDS.iter().any(|k| w.starts_with(k)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement was 1, so the ratio is undefined.
    pub degenerate: bool,
}

/// Cohen's kappa of two raters. Computed from integer counts so that the
/// only rounding is the final division.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<Kappa, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = a.len() as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let mut marg: BTreeMap<&T, (u128, u128)> = BTreeMap::new();
    for x in a {
        marg.entry(x).or_default().0 += 1;
    }
    for y in b {
        marg.entry(y).or_default().1 += 1;
    }
    let chance: u128 = marg.values().map(|(ma, mb)| ma * mb).sum();
    let denom = n * n - chance;
    if denom == 0 {
        let value = if agree == n { 1.0 } else { 0.0 };
        return Ok(Kappa { value, degenerate: true });
    }
    let num = (n * agree) as i128 - chance as i128;
    Ok(Kappa {
        value: num as f64 / denom as f64,
        degenerate: false,
    })
}

/// Average 1-based ranks, doubled so that ties stay integral.
fn doubled_mid_ranks(xs: &[f64]) -> Vec<i128> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0i128; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, doubled mean = start + 1 + end
        let r = (start + 1 + end) as i128;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooShort(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (rx, ry) = (doubled_mid_ranks(xs), doubled_mid_ranks(ys));
    let n = xs.len() as i128;
    let (sx, sy): (i128, i128) = (rx.iter().sum(), ry.iter().sum());
    let sxy: i128 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: i128 = rx.iter().map(|a| a * a).sum();
    let syy: i128 = ry.iter().map(|a| a * a).sum();
    let num = n * sxy - sx * sy;
    let (dx, dy) = (n * sxx - sx * sx, n * syy - sy * sy);
    if dx == 0 || dy == 0 {
        return Err(StatsError::DegenerateInput);
    }
    let rho = num as f64 / ((dx as f64) * (dy as f64)).sqrt();
    Ok(rho.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Band {
    VeryStrong,
    Strong,
    Moderate,
    WeakOrNone,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::VeryStrong => "very strong",
            Band::Strong => "strong",
            Band::Moderate => "moderate",
            Band::WeakOrNone => "weak or none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BandReading {
    pub band: Band,
    pub negative: bool,
}

/// Lower-inclusive bands over non-negative rho; negative rho reads as weak
/// or none, flagged.
pub fn correlation_band(rho: f64) -> BandReading {
    let band = match rho {
        r if r >= 0.8 => Band::VeryStrong,
        r if r >= 0.6 => Band::Strong,
        r if r >= 0.4 => Band::Moderate,
        _ => Band::WeakOrNone,
    };
    BandReading { band, negative: rho < 0.0 }
}
