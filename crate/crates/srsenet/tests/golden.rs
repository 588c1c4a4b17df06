//! Agreement with golden resampler outputs produced by an independent
//! implementation (tools/gen_bicubic_golden.py).

use srsenet::imaging::{bicubic_resize, ColorSpace, Image};

const SRC_W: usize = 48;
const SRC_H: usize = 32;

fn source_image() -> Image {
    let mut data = Vec::with_capacity(SRC_W * SRC_H);
    for y in 0..SRC_H {
        for x in 0..SRC_W {
            data.push(((x * 7 + y * 13 + (x * y) / 3) % 256) as u8);
        }
    }
    Image::new(SRC_W, SRC_H, 1, ColorSpace::Luma, data).unwrap()
}

#[test]
fn source_pattern_matches_generator() {
    let golden = include_bytes!("data/bicubic_src_48x32.raw");
    assert_eq!(source_image().data, golden);
}

fn check(golden: &[u8], w: usize, h: usize) {
    let out = bicubic_resize(&source_image(), w, h).unwrap();
    assert_eq!(out.data.len(), golden.len());
    let mut worst = 0i16;
    for (a, b) in out.data.iter().zip(golden) {
        worst = worst.max((*a as i16 - *b as i16).abs());
    }
    // both sides quantize independently, so ties at .5 may land one level apart
    assert!(worst <= 1, "max deviation {worst} at {w}x{h}");
}

#[test]
fn downscale_by_2_matches_golden() {
    check(include_bytes!("data/bicubic_down2_24x16.raw"), 24, 16);
}

#[test]
fn downscale_by_4_matches_golden() {
    check(include_bytes!("data/bicubic_down4_12x8.raw"), 12, 8);
}

#[test]
fn downscale_by_8_matches_golden() {
    check(include_bytes!("data/bicubic_down8_6x4.raw"), 6, 4);
}

#[test]
fn upscale_by_2_matches_golden() {
    check(include_bytes!("data/bicubic_up2_96x64.raw"), 96, 64);
}

#[test]
fn upscale_by_4_matches_golden() {
    check(include_bytes!("data/bicubic_up4_192x128.raw"), 192, 128);
}

#[test]
fn upscale_by_8_matches_golden() {
    check(include_bytes!("data/bicubic_up8_384x256.raw"), 384, 256);
}
