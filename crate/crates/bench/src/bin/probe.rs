//! Scratch probe: readout activity of a trained checkpoint.
use ndarray::s;
use ssdp_core::config::RunConfig;
use ssdp_core::data::{encode_latency, load_idx};
use ssdp_core::network::{forward, load_checkpoint};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (model, _) = load_checkpoint(std::path::Path::new(&args[1])).unwrap();
    let cfg = RunConfig::from_path(std::path::Path::new(&args[2])).unwrap();
    let test = load_idx(
        &cfg.resolve_data_path(&cfg.data.test_images),
        &cfg.resolve_data_path(&cfg.data.test_labels),
    )
    .unwrap();
    let flat = test.flat_images();
    let images = flat.slice(s![..256, ..]).to_owned();
    let labels = &test.labels[..256];
    let encoded = encode_latency(images.view(), model.spec.t_steps).unwrap();
    let rec = forward(&model, &encoded).unwrap();
    // readout spike-count stats
    let mut count_hist = vec![0usize; model.spec.t_steps + 1];
    let mut correct = 0;
    let mut margin_sum = 0.0;
    for b in 0..256 {
        let row = rec.logits.row(b);
        let mut sorted: Vec<f64> = row.iter().copied().collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        margin_sum += sorted[0] - sorted[1];
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == labels[b] as usize {
            correct += 1;
        }
        for c in 0..10 {
            count_hist[(row[c] * model.spec.t_steps as f64).round() as usize] += 1;
        }
    }
    println!("acc on 256: {}", correct as f64 / 256.0);
    println!("mean top1-top2 margin (counts): {}", margin_sum / 256.0 * model.spec.t_steps as f64);
    println!("readout count histogram (count -> freq): {:?}", count_hist);
    let w2 = &model.w2.w;
    println!(
        "w2 stats: min {:.3} max {:.3} mean {:.3}",
        w2.iter().cloned().fold(f64::INFINITY, f64::min),
        w2.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        w2.mean().unwrap()
    );
    let w1 = &model.w1.w;
    println!(
        "w1 stats: min {:.3} max {:.3} mean {:.3}",
        w1.iter().cloned().fold(f64::INFINITY, f64::min),
        w1.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        w1.mean().unwrap()
    );
}
