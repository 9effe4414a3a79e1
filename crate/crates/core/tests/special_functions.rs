use labelshift::math::digamma;

/// (x, ψ(x)) pairs computed at 50 significant digits, x log-spaced over [1e-3, 1e6].
fn reference() -> Vec<(f64, f64)> {
    let text = include_str!("data/digamma_ref.csv");
    text.lines()
        .skip(1)
        .map(|line| {
            let (x, y) = line.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn digamma_matches_high_precision_table() {
    let table = reference();
    assert_eq!(table.len(), 1000);
    let worst = table.iter().map(|&(x, want)| ((digamma(x).unwrap() - want).abs(), x)).fold((0.0, 0.0), |a, b| {
        if b.0 > a.0 {
            b
        } else {
            a
        }
    });
    assert!(worst.0 < 1e-10, "max error {} at x = {}", worst.0, worst.1);
}
