// Distance for one year from four counts, its error bar, and the
// attribution of a year-over-year change.

use nwd_lens::{compute_nwd, delta_decomposition, propagate_error, PairCounts};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let pc = PairCounts::from_values(2005, (1000.0, 50.0), (100.0, 10.0), (50.0, 5.0), (1e6, 0.0));
    let point = compute_nwd(&pc);
    let d = point.value.ok_or("distance undefined")?;
    let se = propagate_error(&pc).ok_or("no error bar")?;
    println!("NWD(2005) = {d:.7} ± {se:.5}");
    assert!((d - (20f64).ln() / (1e4f64).ln()).abs() < 1e-12);
    assert!((se - 0.01265).abs() < 0.0005);

    // u and v are symmetric
    let back = compute_nwd(&pc.swapped());
    assert_eq!(back.value, point.value);

    // only M grows between the two years
    let next = PairCounts::from_values(2006, (1010.0, 0.0), (100.0, 0.0), (50.0, 0.0), (1e6, 0.0));
    let dd = delta_decomposition(&pc, &next)?;
    println!(
        "2005->2006: predicted {:.6}, exact {:.6} (dM/M term {:.5})",
        dd.predicted_delta, dd.exact_delta, dd.term_dm_big
    );
    assert!((dd.predicted_delta - dd.exact_delta).abs() < 1e-5);

    // estimated counts can push the distance above one
    let odd = compute_nwd(&PairCounts::from_values(2005, (5.0, 0.0), (4.0, 0.0), (1.0, 0.0), (10.0, 0.0)));
    println!("NWD(5, 4, 1, 10) = {:.4} [{}]", odd.value.unwrap_or(f64::NAN), odd.flags_label());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
