//! Compare the analytic loss gradient with central finite differences on a
//! tiny model, tensor by tensor.
//!
//! ```text
//! cargo run --example check_gradients
//! ```

use smartreply::encoder::{Dims, EncoderParams};
use smartreply::trainer::{grad, loss, Batch, TrainConfig};

fn main() -> anyhow::Result<()> {
    let params = EncoderParams::init(20, Dims { d_emb: 4, d_hid: 6, d_out: 4 }, 7);
    let batch = Batch {
        message_ids: vec![vec![2, 3, 4], vec![5, 6], vec![7, 2, 9, 9]],
        reply_ids: vec![vec![10, 11], vec![12], vec![13, 14, 3]],
        translation_ids: Some(vec![vec![15, 16], vec![17], vec![15, 5]]),
    };
    let cfg = TrainConfig::default();
    let (l, analytic) = grad(&params, &batch, &cfg)?;
    println!("loss {:.6} (mr {:.6}, tr {:.6})", l.total, l.mr_loss, l.tr_loss);

    let h = 1e-5;
    for (t, name) in EncoderParams::TENSOR_NAMES.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..analytic.tensors()[t].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t][k] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t][k] -= h;
            let numeric = (loss(&plus, &batch, &cfg)?.total - loss(&minus, &batch, &cfg)?.total) / (2.0 * h);
            let a = analytic.tensors()[t][k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        println!("{name:<10} {:>4} params  max rel err {worst:.2e}", analytic.tensors()[t].len());
    }
    Ok(())
}
