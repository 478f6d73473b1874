//! Greedy non-maximum suppression over synthetic detector output.

use ncp::host::{nms, DetBox};

fn main() {
    let boxes = DetBox::random_set(40, 7);
    for t in [0.1, 0.3, 0.5, 0.7] {
        let kept = nms(&boxes, t);
        println!("IoU > {t}: {} of {} boxes kept", kept.len(), boxes.len());
    }
    println!();
    for b in nms(&boxes, 0.3).iter().take(5) {
        println!("class {} score {:.3} [{:.3}, {:.3}, {:.3}, {:.3}]", b.class, b.score, b.x0, b.y0, b.x1, b.y1);
    }
}
