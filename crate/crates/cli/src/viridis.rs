//! Viridis colormap backed by the vendored 256-entry table.

use std::sync::OnceLock;

const TABLE_CSV: &str = include_str!("../data/viridis.csv");

/// The canonical table as shipped in `data/viridis.csv`.
pub fn table() -> &'static [[f32; 3]] {
    static TABLE: OnceLock<Vec<[f32; 3]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let t: Vec<[f32; 3]> = TABLE_CSV
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: Vec<f32> = l.split(',').map(|x| x.trim().parse().expect("viridis table entry")).collect();
                [v[0], v[1], v[2]]
            })
            .collect();
        assert_eq!(t.len(), 256, "viridis table must have 256 entries");
        t
    })
}

/// Linear interpolation into the table for `t` in [0, 1] (clamped).
pub fn viridis(t: f32) -> [f32; 3] {
    let tab = table();
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (tab.len() - 1) as f32;
    let i = (x.floor() as usize).min(tab.len() - 2);
    let f = x - i as f32;
    let (a, b) = (tab[i], tab[i + 1]);
    [
        a[0] + (b[0] - a[0]) * f,
        a[1] + (b[1] - a[1]) * f,
        a[2] + (b[2] - a[2]) * f,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_table_entries() {
        assert_eq!(viridis(0.0), table()[0]);
        assert_eq!(viridis(1.0), table()[255]);
        assert_eq!(viridis(-3.0), table()[0]);
        assert_eq!(viridis(7.0), table()[255]);
    }

    #[test]
    fn dark_to_yellow() {
        let lo = viridis(0.0);
        let hi = viridis(1.0);
        assert!(lo[2] > lo[1] && hi[0] > 0.9 && hi[1] > 0.85 && hi[2] < 0.2);
    }
}
