//! Randomized property checks for the core numeric invariants.

use proptest::prelude::*;

use edrsky::envmap::{clip_to_ev, dynamic_range_ev, ExposureValue};
use edrsky::image::RadianceImage;
use edrsky::losses::BandSpec;
use edrsky::tonemap::TonemapOperator;

fn operators() -> Vec<TonemapOperator> {
    vec![
        TonemapOperator::Gamma { gamma: 2.2 },
        TonemapOperator::LogN { base: 2.0 },
        TonemapOperator::MuLaw { mu: 5000.0 },
        TonemapOperator::MuLawLog2 { mu: 5000.0 },
        TonemapOperator::DeepCloudsRecip,
    ]
}

proptest! {
    // invert(apply(x)) recovers x for every operator, across the whole
    // extended range.
    #[test]
    fn tonemap_roundtrip(x in 0.0f64..32768.0) {
        for op in operators() {
            let back = op.inverse(op.forward(x)).unwrap();
            prop_assert!((back - x).abs() <= 1e-5 * x.max(1e-9),
                "{} failed at {x}: {back}", op.name());
        }
    }

    // Every luminance value lands in exactly one cascade band.
    #[test]
    fn band_assignment_is_total(lum in 0.0f64..1e6, ev_max in 1u32..20) {
        let bands = BandSpec { ev_max };
        let band = bands.band_of(lum);
        prop_assert!(band < bands.band_count());
        if lum >= 1.0 && band < ev_max as usize {
            prop_assert!(lum >= 2f64.powi(band as i32 - 1));
            prop_assert!(lum < 2f64.powi(band as i32));
        }
    }

    // Clipping caps the dynamic range and is idempotent.
    #[test]
    fn clipping_bounds_ev(lo in 0.01f32..1.0, hi in 64.0f32..32768.0, ev in 3.0f64..12.0) {
        let mut img = RadianceImage::constant(8, 8, [lo; 3]).unwrap();
        img.set(4, 4, [hi; 3]);
        let clipped = clip_to_ev(&img, ExposureValue { stops: ev });
        let measured = dynamic_range_ev(&clipped).unwrap().stops;
        prop_assert!(measured <= ev + 1e-6, "EV {measured} > {ev}");
        prop_assert_eq!(&clip_to_ev(&clipped, ExposureValue { stops: ev }), &clipped);
    }
}
