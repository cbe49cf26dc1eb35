// scratch probe, not committed
use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skelfuse::encode::{FusionConfig, FusionMode};
use skelfuse::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use skelfuse::model::{build_backbone, BackboneConfig, BackboneFamily};
use skelfuse::nn::{softmax_cross_entropy, Adam};
use skelfuse::train::{one_cycle_lr, prepare_dataset, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::PathBuf::from("target/example_out/probe_diag");
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    let manifest = generate_synthetic_dataset(&SynthSpec::new(4, 30, 32, 100), &root)?;

    let mode = FusionMode::BodyOnly;
    let backbone =
        BackboneConfig::tiny_test(BackboneFamily::WindowedAttention, 4, (64, 64), 1)?;
    let fusion = FusionConfig {
        mode,
        scale_s: 4,
        input_hw: (64, 64),
        value_range: backbone.value_range,
    };
    let mut cfg = TrainConfig::new(backbone, fusion.clone());
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.max_lr = 3e-3;
    cfg.seed = 0;

    let data = prepare_dataset(&manifest, &fusion)?;
    let mut model = build_backbone(&cfg.backbone, cfg.seed)?;
    let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_train = data.train.inputs.len();
    let steps = cfg.epochs * n_train.div_ceil(cfg.batch_size);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut gstep = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| data.train.inputs[i].clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| data.train.labels[i]).collect();
            let logits = model.forward(&batch)?;
            let (loss, dlogits, _) = softmax_cross_entropy(&logits, &labels);
            model.zero_grad();
            model.backward(&dlogits);
            let lr = one_cycle_lr(gstep, steps, cfg.max_lr, cfg.warmup_frac, cfg.start_div, cfg.final_div)?;
            adam.step(&mut model.params(), lr);
            gstep += 1;
            loss_sum += loss * chunk.len() as f64;
        }

        // diagnose: logits over the whole val split
        let logits = model.forward(&data.val.inputs)?;
        let (nv, ncls) = logits.dim();
        let mean = logits.sum() / (nv * ncls) as f64;
        let var = logits.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nv * ncls) as f64;
        // spread of logit vectors across inputs: mean pairwise distance to the mean vector
        let mean_vec: Vec<f64> = (0..ncls)
            .map(|c| (0..nv).map(|i| logits[[i, c]]).sum::<f64>() / nv as f64)
            .collect();
        let spread = (0..nv)
            .map(|i| {
                (0..ncls)
                    .map(|c| (logits[[i, c]] - mean_vec[c]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / nv as f64;
        let correct = (0..nv)
            .filter(|&i| {
                let row: Vec<f64> = (0..ncls).map(|c| logits[[i, c]]).collect();
                let arg = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                arg == data.val.labels[i]
            })
            .count();
        println!(
            "epoch {:>2} loss {:.4} logit_std {:.4} input_spread {:.4} val {}/{}",
            epoch,
            loss_sum / n_train as f64,
            var.sqrt(),
            spread,
            correct,
            nv
        );
    }
    let _ = Array4::<f64>::zeros((1, 1, 1, 1));
    Ok(())
}
