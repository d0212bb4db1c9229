fn field(s: &str, width: usize) -> Vec<u8> {
    let mut b = s.as_bytes().to_vec();
    assert!(b.len() <= width, "{s:?} wider than {width}");
    b.resize(width, b' ');
    b
}

pub struct Sig {
    pub label: &'static str,
    pub pmin: f64,
    pub pmax: f64,
    pub dmin: i32,
    pub dmax: i32,
    pub digital: Vec<i16>,
}

/// Minimal EDF writer, written from the format description.
pub fn write_edf(sigs: &[Sig], spr: usize, record_secs: f64) -> Vec<u8> {
    let n_rec = sigs[0].digital.len() / spr;
    let ns = sigs.len();
    let mut h = Vec::new();
    h.extend(field("0", 8));
    h.extend(field("X X X X", 80));
    h.extend(field("Startdate X X X X", 80));
    h.extend(field("01.01.24", 8));
    h.extend(field("00.00.00", 8));
    h.extend(field(&(256 * (ns + 1)).to_string(), 8));
    h.extend(field("", 44));
    h.extend(field(&n_rec.to_string(), 8));
    h.extend(field(&record_secs.to_string(), 8));
    h.extend(field(&ns.to_string(), 4));
    let each = |h: &mut Vec<u8>, w: usize, f: &dyn Fn(&Sig) -> String| {
        for s in sigs {
            h.extend(field(&f(s), w));
        }
    };
    each(&mut h, 16, &|s| format!("EEG {}-REF", s.label));
    each(&mut h, 80, &|_| "AgAgCl electrode".into());
    each(&mut h, 8, &|_| "uV".into());
    each(&mut h, 8, &|s| s.pmin.to_string());
    each(&mut h, 8, &|s| s.pmax.to_string());
    each(&mut h, 8, &|s| s.dmin.to_string());
    each(&mut h, 8, &|s| s.dmax.to_string());
    each(&mut h, 80, &|_| "HP:0.1Hz".into());
    each(&mut h, 8, &|_| spr.to_string());
    each(&mut h, 32, &|_| String::new());
    assert_eq!(h.len(), 256 * (ns + 1));
    for r in 0..n_rec {
        for s in sigs {
            for v in &s.digital[r * spr..(r + 1) * spr] {
                h.extend(v.to_le_bytes());
            }
        }
    }
    h
}
