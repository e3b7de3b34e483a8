use hypnokit_core::psg_io::{Channel, Epoch};
use hypnokit_core::render::{render_epoch, render_triplet_at, RenderConfig};
use proptest::prelude::*;

const BLACK: [u8; 3] = [0, 0, 0];
// (2i + 1)·224/12 rounded, worked out by hand
const CENTER_ROWS: [u32; 6] = [19, 56, 93, 131, 168, 205];
const COLORS: [[u8; 3]; 6] = [[255, 255, 0], [0, 255, 0], [255, 0, 0], [0, 255, 255], [255, 0, 255], [0, 0, 255]];

fn grid_cols() -> Vec<u32> {
    (1..30).map(|t| (t as f64 * 448.0 / 30.0).round() as u32).collect()
}

#[test]
fn zero_epoch_draws_six_center_lines() {
    let cfg = RenderConfig::default();
    let img = render_epoch(&Epoch::zeros(3), &cfg).pixels;
    assert_eq!(img.dimensions(), (448, 224));
    let grid = grid_cols();
    for x in 0..448 {
        for y in 0..224 {
            let px = img.get_pixel(x, y).0;
            if let Some(i) = CENTER_ROWS.iter().position(|&r| r == y) {
                assert_eq!(px, COLORS[i], "x {x} y {y}");
            } else if grid.contains(&x) {
                assert_ne!(px, BLACK);
                assert!(!COLORS.contains(&px));
            } else {
                assert_eq!(px, BLACK, "x {x} y {y}");
            }
        }
    }
}

#[test]
fn large_excursion_crosses_into_neighbour_lane() {
    let cfg = RenderConfig::default();
    let mut e = Epoch::zeros(0);
    for (i, v) in e.channel_mut(Channel::C4M1).iter_mut().enumerate() {
        *v = if (1000..1100).contains(&i) { 80.0 } else { 0.0 };
    }
    let img = render_epoch(&e, &cfg).pixels;
    let (f4_top, f4_bottom) = cfg.lane_bounds(Channel::F4M1);
    let green_in_f4 = (0..448).any(|x| (f4_top..f4_bottom).any(|y| img.get_pixel(x, y).0 == COLORS[1]));
    assert!(green_in_f4);
    // 80 μV sits 29.9 px above the C4 centre line
    let x = (1050 * 448 / 3000) as u32;
    assert_eq!(img.get_pixel(x, 26).0, COLORS[1]);
}

#[test]
fn frontal_slow_wave_overlaps_central_lane() {
    let cfg = RenderConfig::default();
    let mut e = Epoch::zeros(0);
    for (i, v) in e.channel_mut(Channel::F4M1).iter_mut().enumerate() {
        *v = -60.0 * (2.0 * std::f64::consts::PI * 1.0 * i as f64 / 100.0).sin();
    }
    let img = render_epoch(&e, &cfg).pixels;
    let (top, bottom) = cfg.lane_bounds(Channel::C4M1);
    // 60 μV against a 50 μV half-lane reaches 1.2 half-lanes below centre
    let yellow = (0..448).any(|x| (top..bottom).any(|y| img.get_pixel(x, y).0 == COLORS[0]));
    assert!(yellow);
}

#[test]
fn rerender_is_byte_identical() {
    let mut e = Epoch::zeros(1);
    for c in Channel::ALL {
        for (i, v) in e.channel_mut(c).iter_mut().enumerate() {
            *v = 30.0 * ((i as f64) * 0.37 + c.index() as f64).sin();
        }
    }
    let cfg = RenderConfig::default();
    let a = render_epoch(&e, &cfg).to_png_bytes().unwrap();
    let b = render_epoch(&e, &cfg).to_png_bytes().unwrap();
    assert_eq!(a, b);
    assert_eq!(&a[1..4], b"PNG");
}

#[test]
fn triplets_need_both_neighbours() {
    let epochs: Vec<Epoch> = (0..4).map(Epoch::zeros).collect();
    let cfg = RenderConfig::default();
    assert!(render_triplet_at(&epochs, 0, &cfg).is_err());
    assert!(render_triplet_at(&epochs, 3, &cfg).is_err());
    let t = render_triplet_at(&epochs, 1, &cfg).unwrap();
    assert_eq!([t[0].epoch_index, t[1].epoch_index, t[2].epoch_index], [0, 1, 2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn in_range_traces_stay_in_their_lane(vals in prop::collection::vec(-48.0f64..48.0, 30), ch in 0usize..5) {
        let cfg = RenderConfig::default();
        let c = Channel::ALL[ch];
        let mut e = Epoch::zeros(0);
        for (i, v) in e.channel_mut(c).iter_mut().enumerate() {
            *v = vals[i / 100];
        }
        let img = render_epoch(&e, &cfg).pixels;
        let (top, bottom) = cfg.lane_bounds(c);
        for x in 0..448 {
            for y in 0..224 {
                if img.get_pixel(x, y).0 == COLORS[ch] && y != CENTER_ROWS[ch] {
                    prop_assert!(y >= top && y < bottom, "row {} outside [{}, {})", y, top, bottom);
                }
            }
        }
    }

    #[test]
    fn every_column_shows_every_channel(seed in 0u64..500) {
        let cfg = RenderConfig::default();
        let mut e = Epoch::zeros(0);
        for c in Channel::ALL {
            for (i, v) in e.channel_mut(c).iter_mut().enumerate() {
                *v = 20.0 * ((i as f64 + seed as f64) * 0.13).sin();
            }
        }
        let img = render_epoch(&e, &cfg).pixels;
        for x in 0..448 {
            for color in COLORS {
                prop_assert!((0..224).any(|y| img.get_pixel(x, y).0 == color));
            }
        }
    }
}
