//! Run-length masks, IoU and millimetre point error.
//!
//! cargo run -p pelvimark --example mask_metrics

use pelvimark::eval::{aggregate, mask_iou, point_error_mm, StdKind};
use pelvimark::model::{DenseMask, Frame, PixelSpacing, PointPx};

fn square(x0: u32, y0: u32, side: u32) -> DenseMask {
    let mut d = DenseMask::new(32, 32, Frame::Original);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            d.set(x, y, true);
        }
    }
    d
}

pub fn run_example() -> pelvimark::Result<()> {
    let a = square(4, 4, 10).encode();
    let b = square(9, 4, 10).encode();
    println!("counts of a: {:?}", &a.counts()[..4]);
    let iou = mask_iou(&a, &b)?;
    // 50 shared pixels out of 150
    println!("IoU {:.4}", iou.value);
    assert!((iou.value - 1.0 / 3.0).abs() < 1e-12);

    let spacing = PixelSpacing::new(0.2, 0.1)?;
    let e = point_error_mm(PointPx::original(10.0, 10.0)?, PointPx::original(13.0, 14.0)?, Some(spacing))?;
    println!("point error {:.4} mm", e.value);

    let agg = aggregate(&[0.4, 1.1, 0.9, 2.5], StdKind::Population).expect("non-empty");
    println!("median {:.3}, mean {:.3}, st.dev {:.3}", agg.median, agg.mean, agg.std);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pelvimark::Result<()> {
    run_example()
}
