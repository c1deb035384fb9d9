// Least-squares trends of a distance series and the approaching / receding
// / constant verdict.

use nwd_lens::analytics::ols;
use nwd_lens::{classify_trend, StudyConfig, TrendFit};

fn fit(slope: f64, se: f64) -> TrendFit {
    TrendFit {
        slope,
        slope_stderr: Some(se),
        intercept: 0.5,
        r2: None,
        n_points: 13,
        first_year: 2001,
        last_year: 2013,
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = StudyConfig::new(Vec::new(), (2001, 2013));

    let line: Vec<(i32, f64)> = (2001..=2013).map(|y| (y, 0.5 + 0.01 * (y - 2001) as f64)).collect();
    let f = ols(&line)?;
    println!("exact line: slope {:.6}, r2 {:?}", f.slope, f.r2);

    let flat: Vec<(i32, f64)> = (2001..=2013).map(|y| (y, 0.75)).collect();
    let f = ols(&flat)?;
    println!("flat line:  slope {}, r2 {:?}", f.slope, f.r2);

    for (slope, se) in [(0.0130, 0.001), (-0.008, 0.002), (-0.005, 0.001), (-0.001, 0.001), (0.001, 0.001)] {
        let class = classify_trend(&fit(slope, se), &config);
        println!("{slope:+.4} ± {se:.3} -> {:?}  ({})", class.class, class.reasons.join("; "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
