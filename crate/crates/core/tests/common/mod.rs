//! Shared oracles and fixtures for the integration suites.
#![allow(dead_code)]

use std::sync::OnceLock;

use affect_e2e::audio::AudioSample;
use affect_e2e::model::{
    backward, build_input, forward, FirstLayerSpec, FrontEnd, ModelConfig, ModelParams, ParamGroup, Task,
};
use affect_e2e::numerics::{
    conv1d_backward, conv1d_forward, elu, elu_grad, fusion_backward, global_average_pool,
    global_average_pool_backward, sigmoid_mse, softmax_cross_entropy, weighted_average_fusion, ConvLayerParams,
    DenseParams, FusionParams, Tensor2,
};
use affect_e2e::synthcorpus::{generate_items, CorpusItem, CorpusSpec};
use affect_e2e::training::{stream_rng, Split};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const OP_TOLERANCE: f64 = 1e-5;
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`; zero when both vanish.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Filters=8 model with a 20-tap, stride-10 first layer over 600-sample inputs.
pub fn tiny_config(task: Task, front_end: FrontEnd) -> ModelConfig {
    let mut c = ModelConfig::new(task).with_width(8).with_front_end(front_end);
    c.first_layer = FirstLayerSpec {
        kernel: 20,
        stride: 10,
        filters: 8,
    };
    c
}

pub fn tiny_input_len(config: &ModelConfig) -> usize {
    match config.front_end {
        FrontEnd::Raw => 600,
        FrontEnd::Spectrogram => config.min_input_samples() + 300,
    }
}

/// Relative errors of each differentiable op against finite differences.
pub fn op_gradient_errors() -> Vec<(&'static str, f64)> {
    let mut rng = stream_rng(41, 0);
    let mut out = Vec::new();

    let x = random_vec(&mut rng, 40, 2.0);
    let w = random_vec(&mut rng, 40, 1.0);
    let analytic: Vec<f64> = x.iter().zip(&w).map(|(x, w)| w * elu_grad(*x)).collect();
    let numeric = numeric_grad(&x, |x| x.iter().zip(&w).map(|(x, w)| w * elu(*x)).sum());
    out.push(("elu", rel_error(&analytic, &numeric)));

    let logits = random_vec(&mut rng, 4, 3.0);
    let (_, _, analytic) = softmax_cross_entropy(&logits, 2).unwrap();
    let numeric = numeric_grad(&logits, |z| softmax_cross_entropy(z, 2).unwrap().0);
    out.push(("softmax_cross_entropy", rel_error(&analytic, &numeric)));

    let logits = random_vec(&mut rng, 5, 2.0);
    let truth: Vec<f64> = (0..5).map(|_| rng.gen_range(0.01..0.99)).collect();
    let (_, _, analytic) = sigmoid_mse(&logits, &truth).unwrap();
    let numeric = numeric_grad(&logits, |z| sigmoid_mse(z, &truth).unwrap().0);
    out.push(("sigmoid_mse", rel_error(&analytic, &numeric)));

    // conv: loss = Σ upstream ⊙ conv(input)
    let (frames, cin, cout, k, s) = (23, 3, 4, 5, 2);
    let input = Tensor2::from_vec(frames, cin, random_vec(&mut rng, frames * cin, 1.0)).unwrap();
    let mut conv = ConvLayerParams::zeros(cout, cin, k, s).unwrap();
    conv.weights = random_vec(&mut rng, conv.weights.len(), 0.5);
    conv.bias = random_vec(&mut rng, cout, 0.5);
    let out_frames = conv.output_frames(frames).unwrap();
    let up = Tensor2::from_vec(out_frames, cout, random_vec(&mut rng, out_frames * cout, 1.0)).unwrap();
    let loss = |inp: &Tensor2, p: &ConvLayerParams| -> f64 {
        conv1d_forward(inp, p).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
    };
    let (gi, gp) = conv1d_backward(&input, &conv, &up).unwrap();
    let numeric = numeric_grad(input.data(), |d| loss(&Tensor2::from_vec(frames, cin, d.to_vec()).unwrap(), &conv));
    out.push(("conv1d input", rel_error(gi.data(), &numeric)));
    let numeric = numeric_grad(&conv.weights, |d| {
        let mut p = conv.clone();
        p.weights = d.to_vec();
        loss(&input, &p)
    });
    out.push(("conv1d weights", rel_error(&gp.weights, &numeric)));
    let numeric = numeric_grad(&conv.bias, |d| {
        let mut p = conv.clone();
        p.bias = d.to_vec();
        loss(&input, &p)
    });
    out.push(("conv1d bias", rel_error(&gp.bias, &numeric)));

    // pooling: loss = g · pool(x)
    let x = Tensor2::from_vec(7, 3, random_vec(&mut rng, 21, 1.0)).unwrap();
    let g = random_vec(&mut rng, 3, 1.0);
    let analytic = global_average_pool_backward(&g, 7);
    let numeric = numeric_grad(x.data(), |d| {
        let p = global_average_pool(&Tensor2::from_vec(7, 3, d.to_vec()).unwrap()).unwrap();
        p.iter().zip(&g).map(|(a, b)| a * b).sum()
    });
    out.push(("global_average_pool", rel_error(analytic.data(), &numeric)));

    // dense: loss = g · (W x + b)
    let mut dense = DenseParams::zeros(3, 6);
    dense.weights = random_vec(&mut rng, 18, 1.0);
    dense.bias = random_vec(&mut rng, 3, 1.0);
    let x = random_vec(&mut rng, 6, 1.0);
    let g = random_vec(&mut rng, 3, 1.0);
    let dloss = |d: &DenseParams, x: &[f64]| -> f64 { d.forward(x).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum() };
    let (gx, gd) = dense.backward(&x, &g).unwrap();
    out.push(("dense input", rel_error(&gx, &numeric_grad(&x, |x| dloss(&dense, x)))));
    let numeric = numeric_grad(&dense.weights, |w| {
        let mut d = dense.clone();
        d.weights = w.to_vec();
        dloss(&d, &x)
    });
    out.push(("dense weights", rel_error(&gd.weights, &numeric)));

    // fusion: loss = g · ELU(Σ W_l x_l + b), backward takes the pre-activation gradient
    let dims = [4, 3, 5];
    let mut fusion = FusionParams::zeros(&dims, 3);
    for w in &mut fusion.weights {
        w.weights = random_vec(&mut rng, w.weights.len(), 1.0);
    }
    fusion.bias = random_vec(&mut rng, 3, 0.5);
    let pooled: Vec<Vec<f64>> = dims.iter().map(|&d| random_vec(&mut rng, d, 1.0)).collect();
    let g = random_vec(&mut rng, 3, 1.0);
    let floss = |f: &FusionParams, p: &[Vec<f64>]| -> f64 {
        weighted_average_fusion(p, f).unwrap().1.iter().zip(&g).map(|(a, b)| a * b).sum()
    };
    let (pre, _) = weighted_average_fusion(&pooled, &fusion).unwrap();
    let grad_pre: Vec<f64> = pre.iter().zip(&g).map(|(z, g)| g * elu_grad(*z)).collect();
    let (gin, gf) = fusion_backward(&pooled, &fusion, &grad_pre).unwrap();
    for l in 0..dims.len() {
        let numeric = numeric_grad(&pooled[l], |x| {
            let mut p = pooled.clone();
            p[l] = x.to_vec();
            floss(&fusion, &p)
        });
        out.push(("fusion input", rel_error(&gin[l], &numeric)));
        let numeric = numeric_grad(&fusion.weights[l].weights, |w| {
            let mut f = fusion.clone();
            f.weights[l].weights = w.to_vec();
            floss(&f, &pooled)
        });
        out.push(("fusion weights", rel_error(&gf.weights[l].weights, &numeric)));
    }
    let numeric = numeric_grad(&fusion.bias, |b| {
        let mut f = fusion.clone();
        f.bias = b.to_vec();
        floss(&f, &pooled)
    });
    out.push(("fusion bias", rel_error(&gf.bias, &numeric)));
    out
}

fn flat(params: &ModelParams) -> Vec<f64> {
    params.group(ParamGroup::All).concat()
}

fn unflatten(params: &mut ModelParams, values: &[f64]) {
    let mut pos = 0;
    for (_, t) in params.group_mut(ParamGroup::All) {
        t.copy_from_slice(&values[pos..pos + t.len()]);
        pos += t.len();
    }
}

/// End-to-end loss gradient of the tiny model against finite differences.
pub fn end_to_end_error(task: Task, front_end: FrontEnd, seed: u64) -> f64 {
    let config = tiny_config(task, front_end);
    let mut rng = stream_rng(seed, 0);
    let mut params = ModelParams::init(&config, &mut rng).unwrap();
    // non-zero biases so every term of the gradient is exercised
    for (name, t) in params.group_mut(ParamGroup::All) {
        if name.ends_with("bias") {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let n = tiny_input_len(&config);
    let wave: Vec<f64> = (0..n)
        .map(|i| 0.05 * (i as f64 * 0.07).sin() + rng.gen_range(-0.02..0.02))
        .collect();
    let input = build_input(&config, &wave).unwrap();
    let target_scores: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..0.9)).collect();
    let loss_of = |p: &ModelParams| -> (f64, Vec<f64>) {
        let trace = forward(p, &config, &input).unwrap();
        match task {
            Task::Emotion { .. } => {
                let (l, _, g) = softmax_cross_entropy(&trace.logits, 1).unwrap();
                (l, g)
            }
            Task::Personality { .. } => {
                let (l, _, g) = sigmoid_mse(&trace.logits, &target_scores).unwrap();
                (l, g)
            }
        }
    };
    let trace = forward(&params, &config, &input).unwrap();
    let (_, grad_logits) = loss_of(&params);
    let analytic = flat(&backward(&params, &input, &trace, &grad_logits, ParamGroup::All).unwrap());
    let x = flat(&params);
    let mut probe = params.clone();
    let numeric = numeric_grad(&x, |v| {
        unflatten(&mut probe, v);
        loss_of(&probe).0
    });
    rel_error(&analytic, &numeric)
}

/// Splits generated items into (train, test) samples.
pub fn split_items(items: &[CorpusItem]) -> (Vec<AudioSample>, Vec<AudioSample>) {
    let pick = |s: Split| items.iter().filter(|i| i.split == s).map(|i| i.sample.clone()).collect();
    (pick(Split::Train), pick(Split::Test))
}

/// The 3-language, 4-class, 50 train / 10 test corpus, generated once per test binary.
pub fn emotion_corpus() -> &'static [CorpusItem] {
    static CORPUS: OnceLock<Vec<CorpusItem>> = OnceLock::new();
    CORPUS.get_or_init(|| generate_items(&CorpusSpec::emotion(50, 10, 1)).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 7)
}

pub fn tone(freq: f64, rate: u32, seconds: f64, amplitude: f64) -> Vec<f64> {
    let n = (seconds * f64::from(rate)) as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin())
        .collect()
}

/// Per-frame argmax bin of the default spectrogram of a 1 kHz tone.
pub fn tone_peak_bins() -> Vec<usize> {
    use affect_e2e::features::{spectrogram, SpectrogramConfig};
    let s = spectrogram(&tone(1000.0, 8000, 1.0, 0.5), &SpectrogramConfig::default()).unwrap();
    (0..s.frames)
        .map(|f| {
            let frame = s.frame(f);
            (0..frame.len()).fold(0, |b, i| if frame[i] > frame[b] { i } else { b })
        })
        .collect()
}

/// Attenuation in dB of a 7 kHz tone resampled from `from` Hz to 8 kHz, edges excluded.
pub fn stopband_attenuation_db(from: u32) -> f64 {
    let input = tone(7000.0, from, 1.0, 0.9);
    let out = affect_e2e::audio::resample(&input, from, 8000).unwrap();
    let interior = &out[800..out.len() - 800];
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    20.0 * (rms(&input) / rms(interior).max(1e-300)).log10()
}

/// Largest |Tukey(taper = 1) − Hann| over several lengths.
pub fn tukey_hann_max_diff() -> f64 {
    use affect_e2e::features::tukey_window;
    let mut worst = 0.0f64;
    for len in [2usize, 3, 16, 199, 200, 256, 1001] {
        let w = tukey_window(len, 1.0);
        for (n, v) in w.iter().enumerate() {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos();
            worst = worst.max((v - hann).abs());
        }
    }
    worst
}

/// Kolmogorov–Smirnov statistic of `draws` against Uniform(lo, hi).
pub fn ks_uniform(mut draws: Vec<f64>, lo: f64, hi: f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sided KS critical value at significance 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Whether the default raw model rejects `short` samples and accepts `long` samples.
pub fn probe_min_input(short: usize, long: usize) -> (bool, bool) {
    let config = ModelConfig::emotion();
    let params = ModelParams::init(&config, &mut stream_rng(0, 0)).unwrap();
    let run = |n: usize| {
        let wave: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 * 0.03).sin()).collect();
        build_input(&config, &wave).and_then(|x| forward(&params, &config, &x))
    };
    (run(short).is_err(), run(long).is_ok())
}

/// Largest |Σ softmax − 1| of the tiny emotion model over `n` random waveforms.
pub fn softmax_sum_worst(n: usize) -> f64 {
    let config = tiny_config(Task::emotion(), FrontEnd::Raw);
    let mut r = rng(11);
    let params = ModelParams::init(&config, &mut r).unwrap();
    (0..n)
        .map(|_| {
            let amp = 10f64.powf(r.gen_range(-3.0..0.0));
            let wave = random_vec(&mut r, 600, amp);
            let out = forward(&params, &config, &build_input(&config, &wave).unwrap()).unwrap().output;
            (out.iter().sum::<f64>() - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Directly counted per-class precision, recall and F1 in percent.
pub fn brute_prf1(pred: &[usize], truth: &[usize], classes: usize) -> Vec<[f64; 3]> {
    (0..classes)
        .map(|c| {
            let tp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count() as f64;
            let fp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t != c).count() as f64;
            let fneg = pred.iter().zip(truth).filter(|(p, t)| **p != c && **t == c).count() as f64;
            let p = if tp + fp > 0.0 { 100.0 * tp / (tp + fp) } else { 0.0 };
            let r = if tp + fneg > 0.0 { 100.0 * tp / (tp + fneg) } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            [p, r, f]
        })
        .collect()
}

/// Worst disagreement of `prf1` and `mae` with brute-force recomputation over random cases.
pub fn metrics_oracle_worst(cases: usize) -> f64 {
    use affect_e2e::evaluation::{mae, prf1};
    let mut r = rng(23);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let classes = r.gen_range(2..6);
        let n = r.gen_range(1..40);
        let truth: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let rep = prf1(&pred, &truth, classes).unwrap();
        for (m, b) in rep.per_class.iter().zip(brute_prf1(&pred, &truth, classes)) {
            worst = worst
                .max((m.precision - b[0]).abs())
                .max((m.recall - b[1]).abs())
                .max((m.f1 - b[2]).abs());
        }
        let a = random_vec(&mut r, n, 1.0);
        let g = random_vec(&mut r, n, 1.0);
        let brute = a.iter().zip(&g).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
        worst = worst.max((mae(&a, &g).unwrap() - brute).abs());
    }
    worst
}

/// Reported peak of a first layer whose filter 0 is a cosine at `freq` Hz, in bins from `freq`.
pub fn cosine_kernel_peak_offset(freq: f64) -> f64 {
    use affect_e2e::analysis::{filter_frequency_response, DEFAULT_FFT_LEN};
    let mut layer = ConvLayerParams::zeros(3, 2, 200, 100).unwrap();
    let taps: Vec<f64> = (0..200)
        .map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / 8000.0).cos())
        .collect();
    for (k, tap) in taps.iter().enumerate() {
        layer.weights[k * 2] = *tap;
        layer.weights[k * 2 + 1] = *tap;
    }
    let r = filter_frequency_response(&layer, DEFAULT_FFT_LEN).unwrap();
    ((r.peak_hz[0][0] - freq) / r.bin_hz)
        .abs()
        .max(((r.peak_hz[1][0] - freq) / r.bin_hz).abs())
}

/// A short width-8 emotion training run on a small synthetic corpus, as checkpoint bytes.
pub fn small_training_checkpoint(seed: u64, augment_seed: Option<u64>) -> Vec<u8> {
    use affect_e2e::training::{train, Checkpoint, TrainConfig};
    let items = generate_items(&CorpusSpec::emotion(4, 1, 5)).unwrap();
    let (tr, _) = split_items(&items);
    let cfg = ModelConfig::emotion().with_width(8);
    let mut tc = TrainConfig::for_task(cfg.task, true);
    tc.seed = seed;
    tc.augment_seed = augment_seed;
    tc.max_epochs = 2;
    tc.initial_lr = 1e-3;
    let out = train(&cfg, &tc, &tr).unwrap();
    Checkpoint {
        config: cfg,
        params: out.params,
        languages: out.record.languages.clone(),
        label_transform: out.label_transform,
        run_record: Some(out.record),
    }
    .to_bytes()
    .unwrap()
}
