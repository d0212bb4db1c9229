use eegvl::render::{palette_index, render_erp_image, PlotArea};

/// Strictly periodic 1 Hz train of 80 ms triangular spikes. The synthetic
/// ECG source jitters its RR interval, so the train is built here.
fn qrs_train(sfreq: f64, seconds: usize, offset: f64) -> Vec<f64> {
    let n = (sfreq * seconds as f64) as usize;
    let half = 0.04 * sfreq;
    let mut x = vec![0.0; n];
    for beat in 0..seconds {
        let centre = (beat as f64 + offset) * sfreq;
        for (i, v) in x.iter_mut().enumerate() {
            let d = (i as f64 - centre).abs();
            if d < half {
                *v += 1.0 - d / half;
            }
        }
    }
    x
}

fn peak_latencies(offset: f64) -> (Vec<f64>, f64) {
    let sfreq = 250.0;
    let x = qrs_train(sfreq, 60, offset);
    let epochs: Vec<&[f64]> = x.chunks_exact(250).collect();
    let img = render_erp_image(&epochs, 3).unwrap();
    let a = PlotArea::STANDARD;
    // the colour scale saturates at 3 SD, so take the middle of the hottest run
    let cols = (a.y..a.y + a.h)
        .map(|y| {
            let slots: Vec<usize> = (a.x..a.x + a.w).map(|x| palette_index(img.get(x, y)).expect("palette colour")).collect();
            let top = *slots.iter().max().unwrap();
            let first = slots.iter().position(|&s| s == top).unwrap();
            let last = slots.iter().rposition(|&s| s == top).unwrap();
            // pixel column to sample within the epoch
            (first + last) as f64 / 2.0 * 250.0 / a.w as f64
        })
        .collect();
    let expected = offset * 250.0;
    (cols, expected)
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|c| (c - m).powi(2)).sum::<f64>() / n
}

#[test]
fn qrs_train_forms_a_vertical_stripe() {
    for offset in [0.25, 0.5, 0.8] {
        let (cols, expected) = peak_latencies(offset);
        assert!(variance(&cols) <= 1.0, "offset {offset}: peak latencies {cols:?}");
        let mean = cols.iter().sum::<f64>() / cols.len() as f64;
        assert!((mean - expected).abs() <= 2.0, "offset {offset}: stripe at {mean}, expected {expected}");
    }
}
