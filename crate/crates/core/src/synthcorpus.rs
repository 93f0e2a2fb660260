//! Deterministic synthetic affect corpora with planted prosodic signatures.
//!
//! Each utterance is a jittered harmonic source plus band-limited noise,
//! shaped by a syllable rhythm and an energy envelope, with contiguous silent
//! pauses. Classes differ in pitch, energy, contour and pausing; languages
//! shift pitch, formant band, rhythm and recording volume.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{encode_wav, quantize_i16, AudioSample, PCM16_SCALE, TARGET_RATE};
use crate::error::{Error, Result};
use crate::labels::{Emotion, Label, TraitScores};
use crate::model::{ModelConfig, Task};
use crate::training::{CorpusManifest, ManifestRow, Split};

/// RMS of voiced regions before class energy and language volume are applied.
pub const BASE_RMS: f64 = 0.06;
/// Shortest pause segment, in seconds, when a pause is long enough to split.
pub const MIN_PAUSE_S: f64 = 0.25;
const EDGE_FADE_S: f64 = 0.01;
const NOISE_LEVEL: f64 = 0.15;
const FORMANT_BOOST: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub name: String,
    pub base_pitch_hz: f64,
    /// Standard deviation of the slow log-pitch wander.
    pub pitch_jitter: f64,
    pub formant_band_hz: (f64, f64),
    /// Syllables per second.
    pub speaking_rate: f64,
    pub volume_bias: f64,
}

impl LanguageProfile {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.formant_band_hz;
        let ok = self.base_pitch_hz > 0.0
            && self.base_pitch_hz < 400.0
            && lo > 0.0
            && lo < hi
            && hi < f64::from(TARGET_RATE) / 2.0
            && self.pitch_jitter >= 0.0
            && self.speaking_rate > 0.0
            && self.volume_bias > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid language profile {self:?}")))
        }
    }

    /// Three pseudo-languages; `lc` is recorded twice as loud as `la`.
    pub fn default_set() -> Vec<Self> {
        let p = |name: &str, pitch, band, rate, volume| LanguageProfile {
            name: name.into(),
            base_pitch_hz: pitch,
            pitch_jitter: 0.02,
            formant_band_hz: band,
            speaking_rate: rate,
            volume_bias: volume,
        };
        vec![
            p("la", 120.0, (500.0, 1500.0), 4.0, 1.0),
            p("lb", 125.0, (700.0, 2000.0), 4.5, 0.6),
            p("lc", 130.0, (900.0, 2500.0), 3.5, 2.0),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyEnvelope {
    Flat,
    Rising,
    Burst,
}

impl EnergyEnvelope {
    fn gain(self, t: f64, duration: f64) -> f64 {
        match self {
            EnergyEnvelope::Flat => 1.0,
            EnergyEnvelope::Rising => 0.3 + 0.7 * t / duration,
            EnergyEnvelope::Burst => 0.35 + 0.65 * (-(t % 0.25) / 0.06).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectSignature {
    pub label: Label,
    pub pitch_shift: f64,
    pub energy_envelope: EnergyEnvelope,
    /// Depth of the slow sinusoidal pitch contour, relative to the mean pitch.
    pub contour_variability: f64,
    /// Fraction of the utterance that is silent.
    pub pause_ratio: f64,
    /// Multiplier on the voiced RMS level.
    pub energy_gain: f64,
}

impl AffectSignature {
    /// The four emotion signatures; pitch shifts are at least 25% apart.
    pub fn emotion_set() -> Vec<Self> {
        let s = |e, pitch, env, contour, pause, energy| AffectSignature {
            label: Label::Emotion(e),
            pitch_shift: pitch,
            energy_envelope: env,
            contour_variability: contour,
            pause_ratio: pause,
            energy_gain: energy,
        };
        vec![
            s(Emotion::Anger, 1.30, EnergyEnvelope::Burst, 0.10, 0.30, 1.6),
            s(Emotion::Sadness, 0.75, EnergyEnvelope::Flat, 0.03, 0.40, 0.55),
            s(Emotion::Happiness, 1.70, EnergyEnvelope::Rising, 0.15, 0.30, 1.2),
            s(Emotion::Anxiety, 1.00, EnergyEnvelope::Rising, 0.06, 0.35, 0.85),
        ]
    }

    /// Maps four latent factors in `[0, 1]` (pitch, energy, contour, pausing)
    /// to a signature. The label is filled in by the caller.
    pub fn from_latent(z: [f64; 4]) -> Self {
        let envelope = match (z[2] * 3.0) as usize {
            0 => EnergyEnvelope::Flat,
            1 => EnergyEnvelope::Rising,
            _ => EnergyEnvelope::Burst,
        };
        AffectSignature {
            label: Label::None,
            pitch_shift: 0.75 + 0.95 * z[0],
            energy_envelope: envelope,
            contour_variability: 0.02 + 0.14 * z[2],
            pause_ratio: 0.30 + 0.20 * z[3],
            energy_gain: 0.5 + 1.1 * z[1],
        }
    }
}

/// Noiseless trait values implied by the latent factors, before language scaling.
pub fn latent_traits(z: [f64; 4]) -> TraitScores {
    [
        0.7 * z[1] + 0.3 * z[0],
        0.5 * (1.0 - z[0]) + 0.5 * z[2],
        1.0 - z[3],
        z[0],
        z[2],
    ]
}

/// Output of one synthesis call with a per-sample voicing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub sample: AudioSample,
    /// `true` where the sample lies outside a pause.
    pub voiced: Vec<bool>,
}

/// Second-order band-pass (constant peak gain), direct form I.
struct Resonator {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Resonator {
    fn band(lo: f64, hi: f64, rate: f64) -> Self {
        let centre = (lo * hi).sqrt();
        let q = centre / (hi - lo);
        let w0 = 2.0 * PI * centre / rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w0.cos() / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Non-overlapping pause intervals covering `round(ratio·n)` samples.
fn pause_mask<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Vec<bool> {
    let silent = ((ratio.clamp(0.0, 1.0)) * n as f64).round() as usize;
    let mut voiced = vec![true; n];
    if silent == 0 {
        return voiced;
    }
    let min_len = (MIN_PAUSE_S * f64::from(TARGET_RATE)) as usize;
    let segments = (silent / min_len).max(1);
    let base = silent / segments;
    let lens: Vec<usize> = (0..segments)
        .map(|i| base + usize::from(i < silent % segments))
        .collect();
    // split the voiced budget into segments+1 gaps with random proportions
    let free = n - silent;
    let weights: Vec<f64> = (0..=segments).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    let mut gaps: Vec<usize> = weights.iter().map(|w| (w / total * free as f64) as usize).collect();
    let assigned: usize = gaps.iter().sum();
    gaps[segments] += free - assigned;
    let mut pos = 0;
    for (gap, len) in gaps.iter().zip(&lens) {
        pos += gap;
        voiced[pos..pos + len].iter_mut().for_each(|v| *v = false);
        pos += len;
    }
    voiced
}

/// Synthesizes one utterance at 8 kHz, quantized to 16-bit levels.
pub fn generate_sample<R: Rng + ?Sized>(
    profile: &LanguageProfile,
    signature: &AffectSignature,
    duration_s: f64,
    rng: &mut R,
) -> Result<AudioSample> {
    generate_with_mask(profile, signature, duration_s, rng).map(|s| s.sample)
}

pub fn generate_with_mask<R: Rng + ?Sized>(
    profile: &LanguageProfile,
    signature: &AffectSignature,
    duration_s: f64,
    rng: &mut R,
) -> Result<Synthesized> {
    profile.validate()?;
    let rate = f64::from(TARGET_RATE);
    let n = (duration_s * rate).round() as usize;
    let min = ModelConfig::new(Task::emotion()).min_input_samples();
    if !(duration_s.is_finite()) || n < min {
        return Err(Error::InputTooShort {
            required: min,
            actual: n,
        });
    }
    let f0 = profile.base_pitch_hz * signature.pitch_shift;
    if !(f0 > 0.0 && f0 < rate / 2.0) {
        return Err(Error::Config(format!("fundamental {f0} Hz is outside (0, Nyquist)")));
    }

    let voiced = pause_mask(n, signature.pause_ratio, rng);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    // slow pitch wander: Gaussian knots every 50 ms, linearly interpolated
    let knot = (0.05 * rate) as usize;
    let knots: Vec<f64> = (0..=n / knot + 1)
        .map(|_| profile.pitch_jitter * unit.sample(rng))
        .collect();
    let contour_hz = 0.5 + rng.gen::<f64>();
    let contour_phase = 2.0 * PI * rng.gen::<f64>();
    let syllable_phase = 2.0 * PI * rng.gen::<f64>();
    let harmonics = ((rate / 2.0 * 0.95) / (f0 * (1.0 + signature.contour_variability + 0.1))).floor() as usize;
    let (lo, hi) = profile.formant_band_hz;

    let mut phase = 0.0f64;
    let mut harmonic = vec![0.0; n];
    for (i, h_out) in harmonic.iter_mut().enumerate() {
        let t = i as f64 / rate;
        let k = i / knot;
        let frac = (i % knot) as f64 / knot as f64;
        let wander = knots[k] * (1.0 - frac) + knots[k + 1] * frac;
        let contour = signature.contour_variability * (2.0 * PI * contour_hz * t + contour_phase).sin();
        let f = f0 * (1.0 + contour) * wander.exp();
        phase += 2.0 * PI * f / rate;
        let mut v = 0.0;
        for h in 1..=harmonics.max(1) {
            let fh = f * h as f64;
            if fh >= rate / 2.0 {
                break;
            }
            let boost = if (lo..=hi).contains(&fh) { FORMANT_BOOST } else { 1.0 };
            v += boost / h as f64 * (h as f64 * phase).sin();
        }
        *h_out = v;
    }
    let mut res = Resonator::band(lo, hi, rate);
    let noise: Vec<f64> = (0..n).map(|_| res.step(unit.sample(rng))).collect();
    let h_rms = rms(harmonic.iter().copied()).max(1e-12);
    let n_rms = rms(noise.iter().copied()).max(1e-12);

    let fade = (EDGE_FADE_S * rate) as usize;
    let mut wave: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let syllable = 0.75 + 0.25 * (2.0 * PI * profile.speaking_rate * t + syllable_phase).cos();
            let env = signature.energy_envelope.gain(t, duration_s) * syllable;
            env * (harmonic[i] / h_rms + NOISE_LEVEL * noise[i] / n_rms)
        })
        .collect();
    // short raised-cosine fades into and out of each pause
    let mut dist_to_pause = vec![usize::MAX; n];
    let mut last = None;
    for i in 0..n {
        if !voiced[i] {
            last = Some(i);
        }
        if let Some(p) = last {
            dist_to_pause[i] = i - p;
        }
    }
    last = None;
    for i in (0..n).rev() {
        if !voiced[i] {
            last = Some(i);
        }
        if let Some(p) = last {
            dist_to_pause[i] = dist_to_pause[i].min(p - i);
        }
    }
    for (i, w) in wave.iter_mut().enumerate() {
        let d = dist_to_pause[i];
        if d == 0 {
            *w = 0.0;
        } else if d < fade {
            *w *= 0.5 - 0.5 * (PI * d as f64 / fade as f64).cos();
        }
    }

    let level = rms(wave.iter().zip(&voiced).filter(|(_, &v)| v).map(|(w, _)| *w));
    if level > 0.0 {
        let gain = BASE_RMS * signature.energy_gain * profile.volume_bias / level;
        let limit = (PCM16_SCALE - 1.0) / PCM16_SCALE;
        for w in &mut wave {
            *w = (*w * gain).clamp(-1.0, limit);
            *w = f64::from(quantize_i16(*w)) / PCM16_SCALE;
        }
    }

    let mut sample = AudioSample::new(wave, TARGET_RATE);
    sample.language = profile.name.clone();
    sample.label = signature.label.clone();
    Ok(Synthesized { sample, voiced })
}

/// What the corpus labels: a fixed emotion set, or continuous trait scores.
#[derive(Debug, Clone, PartialEq)]
pub enum SignatureSet {
    Emotion(Vec<AffectSignature>),
    /// Signatures drawn per sample from latent factors; traits follow [`latent_traits`].
    Personality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub profiles: Vec<LanguageProfile>,
    pub signatures: SignatureSet,
    /// Per (language, class) for emotion, per language for personality.
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub duration_s: f64,
    pub seed: u64,
    /// Half-width of the per-speaker log-uniform pitch scatter.
    pub speaker_pitch_spread: f64,
    /// Half-width of the per-speaker log-uniform loudness scatter.
    pub speaker_gain_spread: f64,
    /// Standard deviation of label noise on trait scores.
    pub trait_noise: f64,
}

impl CorpusSpec {
    pub fn emotion(train_per_class: usize, test_per_class: usize, seed: u64) -> Self {
        Self {
            profiles: LanguageProfile::default_set(),
            signatures: SignatureSet::Emotion(AffectSignature::emotion_set()),
            train_per_class,
            test_per_class,
            duration_s: 1.0,
            seed,
            speaker_pitch_spread: 0.05,
            speaker_gain_spread: 0.2,
            trait_noise: 0.0,
        }
    }

    pub fn personality(train_per_language: usize, test_per_language: usize, seed: u64) -> Self {
        Self {
            signatures: SignatureSet::Personality,
            trait_noise: 0.03,
            ..Self::emotion(train_per_language, test_per_language, seed)
        }
    }

    pub fn task(&self) -> Task {
        match self.signatures {
            SignatureSet::Emotion(_) => Task::emotion(),
            SignatureSet::Personality => Task::personality(),
        }
    }

    fn classes(&self) -> usize {
        match &self.signatures {
            SignatureSet::Emotion(s) => s.len(),
            SignatureSet::Personality => 1,
        }
    }
}

/// One generated utterance and the split it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub sample: AudioSample,
    pub split: Split,
    pub voiced: Vec<bool>,
}

fn item_seed(seed: u64, parts: [u64; 3]) -> u64 {
    // splitmix64 over the coordinates
    let mut z = seed;
    for p in parts {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Generates every utterance in memory, ordered by language, class, split, index.
pub fn generate_items(spec: &CorpusSpec) -> Result<Vec<CorpusItem>> {
    if spec.profiles.is_empty() {
        return Err(Error::Empty("language profiles"));
    }
    if let SignatureSet::Emotion(s) = &spec.signatures {
        if s.is_empty() {
            return Err(Error::Empty("affect signatures"));
        }
    }
    let per = spec.train_per_class + spec.test_per_class;
    let jobs: Vec<(usize, usize, usize)> = (0..spec.profiles.len())
        .flat_map(|l| (0..spec.classes()).flat_map(move |c| (0..per).map(move |i| (l, c, i))))
        .collect();
    jobs.par_iter()
        .map(|&(l, c, i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(item_seed(spec.seed, [l as u64, c as u64, i as u64]));
            let base = &spec.profiles[l];
            let mut profile = base.clone();
            let spread = |rng: &mut ChaCha8Rng, w: f64| (rng.gen_range(-1.0..=1.0) * w).exp();
            profile.base_pitch_hz *= spread(&mut rng, spec.speaker_pitch_spread);
            profile.volume_bias *= spread(&mut rng, spec.speaker_gain_spread);
            let signature = match &spec.signatures {
                SignatureSet::Emotion(s) => s[c].clone(),
                SignatureSet::Personality => {
                    let z: [f64; 4] = std::array::from_fn(|_| rng.gen());
                    let noise = Normal::new(0.0, spec.trait_noise.max(0.0)).expect("valid std");
                    // languages annotate on shifted, compressed scales
                    let offset = 0.05 * (l as f64 - 1.0);
                    let scale = 1.0 - 0.15 * l as f64;
                    let traits = latent_traits(z)
                        .map(|v| (0.5 + offset + scale * (v - 0.5) + noise.sample(&mut rng)).clamp(0.0, 1.0));
                    AffectSignature {
                        label: Label::Personality(traits),
                        ..AffectSignature::from_latent(z)
                    }
                }
            };
            let mut synth = generate_with_mask(&profile, &signature, spec.duration_s, &mut rng)?;
            let split = if i < spec.train_per_class { Split::Train } else { Split::Test };
            let class_tag = match &synth.sample.label {
                Label::Emotion(e) => e.name().to_owned(),
                _ => "p".to_owned(),
            };
            synth.sample.source_id = format!("{}_{}_{}_{:03}", base.name, class_tag, split.name(), i);
            Ok(CorpusItem {
                sample: synth.sample,
                split,
                voiced: synth.voiced,
            })
        })
        .collect()
}

/// Writes WAV files under `out_dir/<language>/` and `out_dir/manifest.csv`.
pub fn generate_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<CorpusManifest> {
    let items = generate_items(spec)?;
    let mut manifest = CorpusManifest::new(spec.task(), out_dir);
    for item in &items {
        let dir = out_dir.join(&item.sample.language);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let rel = format!("{}/{}.wav", item.sample.language, item.sample.source_id);
        let path = out_dir.join(&rel);
        std::fs::write(&path, encode_wav(&item.sample.waveform, TARGET_RATE)).map_err(|e| Error::io(&path, e))?;
        manifest.rows.push(ManifestRow {
            path: rel,
            language: item.sample.language.clone(),
            split: item.split,
            label: item.sample.label.clone(),
        });
    }
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Mean autocorrelation pitch (Hz) and RMS energy over voiced 40 ms frames.
///
/// Returns `None` for an all-silent signal.
pub fn prosodic_features(waveform: &[f64]) -> Option<(f64, f64)> {
    let rate = f64::from(TARGET_RATE);
    let frame = 320;
    let (min_lag, max_lag) = ((rate / 400.0) as usize, (rate / 60.0) as usize);
    let mut pitches = Vec::new();
    let mut energies = Vec::new();
    for chunk in waveform.chunks_exact(frame) {
        let e = rms(chunk.iter().copied());
        if e < 1e-3 {
            continue;
        }
        let r0: f64 = chunk.iter().map(|v| v * v).sum();
        let ac: Vec<f64> = (min_lag..=max_lag)
            .map(|lag| chunk[..frame - lag].iter().zip(&chunk[lag..]).map(|(a, b)| a * b).sum::<f64>() / r0)
            .collect();
        let best = ac.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // the shortest lag near the maximum avoids octave-down errors
        let lag = ac.iter().position(|&v| v >= 0.9 * best).expect("non-empty lag range") + min_lag;
        pitches.push((rate / lag as f64).ln());
        energies.push(e.ln());
    }
    if pitches.is_empty() {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some((mean(&pitches).exp(), mean(&energies).exp()))
}

/// Nearest-centroid classifier on per-language standardized (log pitch, log energy).
#[derive(Debug, Clone)]
pub struct CentroidOracle {
    /// (language, class, centroid) with per-language feature scales.
    centroids: Vec<(String, usize, [f64; 2])>,
    scales: Vec<(String, [f64; 2])>,
}

fn log_features(sample: &AudioSample) -> [f64; 2] {
    let (p, e) = prosodic_features(&sample.waveform).unwrap_or((1.0, 1e-6));
    [p.ln(), e.ln()]
}

impl CentroidOracle {
    pub fn fit(samples: &[AudioSample]) -> Result<Self> {
        let mut groups: Vec<(String, usize, Vec<[f64; 2]>)> = Vec::new();
        for s in samples {
            let class = s
                .label
                .emotion()
                .ok_or_else(|| Error::Manifest(format!("`{}` has no emotion label", s.source_id)))?
                .index();
            let f = log_features(s);
            match groups.iter_mut().find(|g| g.0 == s.language && g.1 == class) {
                Some(g) => g.2.push(f),
                None => groups.push((s.language.clone(), class, vec![f])),
            }
        }
        let mut scales: Vec<(String, [f64; 2])> = Vec::new();
        for (lang, _, _) in &groups {
            if scales.iter().any(|s| &s.0 == lang) {
                continue;
            }
            let all: Vec<[f64; 2]> = groups.iter().filter(|g| &g.0 == lang).flat_map(|g| g.2.clone()).collect();
            let sd = |d: usize| {
                let m = all.iter().map(|f| f[d]).sum::<f64>() / all.len() as f64;
                (all.iter().map(|f| (f[d] - m).powi(2)).sum::<f64>() / all.len() as f64).sqrt().max(1e-9)
            };
            scales.push((lang.clone(), [sd(0), sd(1)]));
        }
        let centroids = groups
            .into_iter()
            .map(|(l, c, fs)| {
                let n = fs.len() as f64;
                let m = [fs.iter().map(|f| f[0]).sum::<f64>() / n, fs.iter().map(|f| f[1]).sum::<f64>() / n];
                (l, c, m)
            })
            .collect();
        Ok(Self { centroids, scales })
    }

    pub fn predict(&self, sample: &AudioSample) -> Option<usize> {
        let f = log_features(sample);
        let scale = self.scales.iter().find(|s| s.0 == sample.language)?.1;
        self.centroids
            .iter()
            .filter(|c| c.0 == sample.language)
            .map(|(_, class, m)| {
                let d = ((f[0] - m[0]) / scale[0]).powi(2) + ((f[1] - m[1]) / scale[1]).powi(2);
                (*class, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
    }
}
