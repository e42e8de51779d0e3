use crate::irt::ItemBank;

pub const CEFR_LEVELS: usize = 6;
pub const CEFR_LABELS: [&str; CEFR_LEVELS] = ["A1", "A2", "B1", "B2", "C1", "C2"];

/// Centers of six equal-width bins spanning the bank's difficulty range.
pub fn cefr_bin_centers(bank: &ItemBank) -> Option<[f64; CEFR_LEVELS]> {
    let (lo, hi) = bank.difficulty_range()?;
    let width = (hi - lo) / CEFR_LEVELS as f64;
    let mut out = [0.0; CEFR_LEVELS];
    for (k, c) in out.iter_mut().enumerate() {
        *c = lo + width * (k as f64 + 0.5);
    }
    Some(out)
}

/// Index of the difficulty bin containing `theta`; values outside the range
/// clamp to the first or last level.
///
/// # Panics
/// On an empty bank.
pub fn map_theta_to_cefr(theta: f64, bank: &ItemBank) -> usize {
    let (lo, hi) = bank.difficulty_range().expect("bank must be non-empty");
    let width = (hi - lo) / CEFR_LEVELS as f64;
    if width <= 0.0 {
        return if theta <= lo { 0 } else { CEFR_LEVELS - 1 };
    }
    let k = ((theta - lo) / width).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(CEFR_LEVELS - 1)
    }
}

/// Difficulty assigned to a level: the center of its bin.
///
/// # Panics
/// On an empty bank or a level outside `0..6`.
pub fn cefr_to_difficulty(level: usize, bank: &ItemBank) -> f64 {
    assert!(level < CEFR_LEVELS, "CEFR level {level} out of range");
    cefr_bin_centers(bank).expect("bank must be non-empty")[level]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::ItemParams;

    fn bank() -> ItemBank {
        ItemBank::new(vec![
            ItemParams::new("lo", 1.0, -3.0, 0.25),
            ItemParams::new("mid", 1.0, 0.4, 0.25),
            ItemParams::new("hi", 1.0, 3.0, 0.25),
        ])
        .unwrap()
    }

    #[test]
    fn binning() {
        let b = bank();
        assert_eq!(map_theta_to_cefr(-2.7, &b), 0);
        assert_eq!(map_theta_to_cefr(10.0, &b), 5);
        assert_eq!(map_theta_to_cefr(-10.0, &b), 0);
        assert_eq!(map_theta_to_cefr(3.0, &b), 5);
        assert_eq!(map_theta_to_cefr(0.0, &b), 3);
    }

    #[test]
    fn centers_and_inverse() {
        let b = bank();
        let centers = cefr_bin_centers(&b).unwrap();
        let expected = [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5];
        for (k, (c, e)) in centers.iter().zip(expected).enumerate() {
            assert!((c - e).abs() < 1e-12);
            assert!((cefr_to_difficulty(k, &b) - e).abs() < 1e-12);
            assert_eq!(map_theta_to_cefr(cefr_to_difficulty(k, &b), &b), k);
        }
    }

    #[test]
    fn single_difficulty_bank() {
        let b = ItemBank::new(vec![ItemParams::new("x", 1.0, 0.5, 0.0)]).unwrap();
        assert_eq!(map_theta_to_cefr(0.0, &b), 0);
        assert_eq!(map_theta_to_cefr(1.0, &b), 5);
        assert_eq!(cefr_to_difficulty(2, &b), 0.5);
    }
}
