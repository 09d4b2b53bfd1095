//! Synthetic planted-signal benchmark generator.
//!
//! Classes are grouped separately per modality. A sample of class `c`
//! carries the signal of its own group with probability `p_*_signal` —
//! otherwise the modality carries no signal at all. The text signal is
//! a dedicated token planted at a random position among filler tokens;
//! the image signal is a solid colored block at a group-specific
//! position over background noise.
//!
//! Classes sharing a text group are indistinguishable from text alone,
//! and likewise for images, so unimodal accuracy is capped well below
//! 1 while the pair of signals identifies the class almost surely. The
//! exact Bayes-optimal accuracies under this generative process are
//! computable in closed form by enumerating group observations; see
//! [`bayes_accuracies`]. That oracle is what fusion models are judged
//! against.

use crate::data::manifest::{save_manifest, ManifestRow};
use crate::data::split::{stratified_split, SplitRatios};
use crate::error::{Error, Result};
use crate::fusion::IntentLabel;
use crate::vision::Image;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Number of distinct filler tokens (`w0` .. `w47`).
pub const FILLER_POOL: usize = 48;

/// Peak amplitude of the background noise in generated images.
const NOISE_LEVEL: f64 = 0.3;

/// Solid colors assigned to image groups, cycled if there are more
/// groups than palette entries.
const PALETTE: [[f64; 3]; 8] = [
    [0.9, 0.1, 0.1],
    [0.1, 0.9, 0.1],
    [0.1, 0.1, 0.9],
    [0.9, 0.9, 0.1],
    [0.9, 0.1, 0.9],
    [0.1, 0.9, 0.9],
    [0.9, 0.5, 0.1],
    [0.5, 0.1, 0.9],
];

/// Generative recipe for the synthetic corpus. Serializes to a
/// `key=value` file alongside the generated data.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_per_class: usize,
    /// Probability that a sample's text carries its own group's signal.
    pub p_text_signal: f64,
    /// Probability that a sample's image carries its own group's signal.
    pub p_image_signal: f64,
    pub image_size: usize,
    /// Tokens per text, including the planted signal token.
    pub text_len: usize,
    pub ratios: SplitRatios,
    pub seed: u64,
    /// Partition of the classes as seen by the text modality.
    pub text_groups: Vec<Vec<usize>>,
    /// Partition of the classes as seen by the image modality.
    pub image_groups: Vec<Vec<usize>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_per_class: 126,
            p_text_signal: 0.9,
            p_image_signal: 0.9,
            image_size: 32,
            text_len: 12,
            ratios: SplitRatios::default(),
            seed: 0,
            text_groups: vec![vec![0, 1], vec![2, 3], vec![4], vec![5]],
            image_groups: vec![vec![0], vec![1, 2], vec![3, 4], vec![5]],
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_per_class < 3 {
            problems.push(format!(
                "n_per_class = {} must be at least 3 for stratified splitting",
                self.n_per_class
            ));
        }
        if self.image_size < 4 || !self.image_size.is_multiple_of(2) {
            problems.push(format!(
                "image_size = {} must be an even number of at least 4",
                self.image_size
            ));
        }
        if self.text_len < 2 {
            problems.push(format!(
                "text_len = {} must be at least 2 (one signal token plus filler)",
                self.text_len
            ));
        }
        for (name, p) in [
            ("p_text_signal", self.p_text_signal),
            ("p_image_signal", self.p_image_signal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} = {p} must lie in [0, 1]"));
            }
        }
        if let Err(Error::Config { problems: ps }) = self.ratios.validate() {
            problems.extend(ps);
        }
        check_partition("text_groups", &self.text_groups, &mut problems);
        check_partition("image_groups", &self.image_groups, &mut problems);
        if problems.is_empty() {
            if let Some((a, b)) = self.indistinguishable_pair() {
                problems.push(format!(
                    "classes {a} and {b} share both their text group and their image \
                     group, so no model can tell them apart"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    /// Two classes that share the group in *both* modalities.
    fn indistinguishable_pair(&self) -> Option<(usize, usize)> {
        for a in 0..IntentLabel::COUNT {
            for b in a + 1..IntentLabel::COUNT {
                if group_of(&self.text_groups, a) == group_of(&self.text_groups, b)
                    && group_of(&self.image_groups, a) == group_of(&self.image_groups, b)
                {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_per_class={}", self.n_per_class);
        let _ = writeln!(out, "p_text_signal={}", self.p_text_signal);
        let _ = writeln!(out, "p_image_signal={}", self.p_image_signal);
        let _ = writeln!(out, "image_size={}", self.image_size);
        let _ = writeln!(out, "text_len={}", self.text_len);
        let _ = writeln!(out, "ratio_train={}", self.ratios.train);
        let _ = writeln!(out, "ratio_val={}", self.ratios.val);
        let _ = writeln!(out, "ratio_test={}", self.ratios.test);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "text_groups={}", render_groups(&self.text_groups));
        let _ = writeln!(out, "image_groups={}", render_groups(&self.image_groups));
        out
    }

    /// Parses a `key=value` spec; unset keys keep their defaults.
    /// `source` names the input in error messages.
    pub fn from_kv(source: &str, contents: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        let mut problems = Vec::new();
        for (lineno, line) in contents.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                ));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let outcome = match key {
                "n_per_class" => parse_into(value, &mut spec.n_per_class),
                "p_text_signal" => parse_into(value, &mut spec.p_text_signal),
                "p_image_signal" => parse_into(value, &mut spec.p_image_signal),
                "image_size" => parse_into(value, &mut spec.image_size),
                "text_len" => parse_into(value, &mut spec.text_len),
                "ratio_train" => parse_into(value, &mut spec.ratios.train),
                "ratio_val" => parse_into(value, &mut spec.ratios.val),
                "ratio_test" => parse_into(value, &mut spec.ratios.test),
                "seed" => parse_into(value, &mut spec.seed),
                "text_groups" => parse_groups(value).map(|g| spec.text_groups = g),
                "image_groups" => parse_groups(value).map(|g| spec.image_groups = g),
                other => Err(format!("unknown key {other:?}")),
            };
            if let Err(problem) = outcome {
                problems.push(format!("line {}: {problem}", lineno + 1));
            }
        }
        if !problems.is_empty() {
            return Err(Error::parse(source, problems.join("\n")));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SynthSpec::from_kv(&path.display().to_string(), &contents)
    }
}

fn parse_into<T: std::str::FromStr>(value: &str, slot: &mut T) -> std::result::Result<(), String>
where
    T::Err: std::fmt::Display,
{
    match value.parse::<T>() {
        Ok(v) => {
            *slot = v;
            Ok(())
        }
        Err(e) => Err(format!("cannot parse {value:?}: {e}")),
    }
}

/// `0,1|2,3|4|5` — groups pipe-separated, members comma-separated.
fn render_groups(groups: &[Vec<usize>]) -> String {
    groups
        .iter()
        .map(|g| g.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("|")
}

fn parse_groups(value: &str) -> std::result::Result<Vec<Vec<usize>>, String> {
    value
        .split('|')
        .map(|group| {
            group
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<usize>()
                        .map_err(|e| format!("bad class index {c:?} in groups: {e}"))
                })
                .collect()
        })
        .collect()
}

fn check_partition(name: &str, groups: &[Vec<usize>], problems: &mut Vec<String>) {
    let mut owner = [None::<usize>; IntentLabel::COUNT];
    for (gi, group) in groups.iter().enumerate() {
        if group.is_empty() {
            problems.push(format!("{name}: group {gi} is empty"));
        }
        for &class in group {
            match owner.get_mut(class) {
                None => problems.push(format!(
                    "{name}: class {class} is out of range 0..{}",
                    IntentLabel::COUNT
                )),
                Some(slot @ None) => *slot = Some(gi),
                Some(Some(first)) => problems.push(format!(
                    "{name}: class {class} appears in groups {first} and {gi}"
                )),
            }
        }
    }
    for (class, slot) in owner.iter().enumerate() {
        if slot.is_none() {
            problems.push(format!("{name}: class {class} is not covered by any group"));
        }
    }
}

fn group_of(groups: &[Vec<usize>], class: usize) -> usize {
    groups
        .iter()
        .position(|g| g.contains(&class))
        .expect("validated partitions cover every class")
}

/// Signal token planted in texts of signal group `g`.
pub fn signal_token(group: usize) -> String {
    format!("sig{group}")
}

/// Decides whether a sample of `class` carries its group's signal:
/// `Some(own group)` with probability `p`, `None` (signal absent)
/// otherwise.
fn draw_signal(groups: &[Vec<usize>], class: usize, p: f64, rng: &mut ChaCha8Rng) -> Option<usize> {
    (rng.gen::<f64>() < p).then(|| group_of(groups, class))
}

fn render_text(spec: &SynthSpec, signal: Option<usize>, rng: &mut ChaCha8Rng) -> String {
    let signal_at = signal.map(|group| (rng.gen_range(0..spec.text_len), group));
    let mut tokens = Vec::with_capacity(spec.text_len);
    for pos in 0..spec.text_len {
        match signal_at {
            Some((at, group)) if at == pos => tokens.push(signal_token(group)),
            _ => tokens.push(format!("w{}", rng.gen_range(0..FILLER_POOL))),
        }
    }
    tokens.join(" ")
}

fn render_image(spec: &SynthSpec, signal: Option<usize>, rng: &mut ChaCha8Rng) -> Image {
    let s = spec.image_size;
    let mut data = Vec::with_capacity(s * s * 3);
    for _ in 0..s * s * 3 {
        data.push(rng.gen::<f64>() * NOISE_LEVEL);
    }
    let mut img = Image::new(s, s, data).expect("noise buffer matches dimensions");
    if let Some(group) = signal {
        let half = s / 2;
        let quadrant = group % 4;
        let (x0, y0) = ((quadrant % 2) * half, (quadrant / 2) * half);
        let color = PALETTE[group % PALETTE.len()];
        for y in y0..y0 + half {
            for x in x0..x0 + half {
                img.set_pixel(x, y, color);
            }
        }
    }
    img
}

/// Generates the corpus under `out_dir`: `images/<id>.ppm` for every
/// sample, `manifest.tsv`, and the spec as `spec.kv`. Reruns with the
/// same spec produce byte-identical output. Returns the manifest rows.
pub fn gen_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<Vec<ManifestRow>> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut keyed: Vec<(String, usize)> = Vec::new();
    let mut rows: Vec<ManifestRow> = Vec::new();
    for label in IntentLabel::ALL {
        let class = label.index();
        for k in 0..spec.n_per_class {
            let id = format!("{}_{k:04}", label.name().to_lowercase());
            let text_signal = draw_signal(&spec.text_groups, class, spec.p_text_signal, &mut rng);
            let text = render_text(spec, text_signal, &mut rng);
            let image_signal =
                draw_signal(&spec.image_groups, class, spec.p_image_signal, &mut rng);
            let img = render_image(spec, image_signal, &mut rng);
            let rel = PathBuf::from("images").join(format!("{id}.ppm"));
            img.save_ppm(&out_dir.join(&rel))?;
            keyed.push((id.clone(), class));
            rows.push(ManifestRow {
                id,
                split: crate::data::split::Split::Train, // placeholder until split below
                label,
                image_path: Some(rel),
                text,
            });
        }
    }

    let splits = stratified_split(&keyed, IntentLabel::COUNT, &spec.ratios, spec.seed)?;
    for (row, split) in rows.iter_mut().zip(splits) {
        row.split = split;
    }
    save_manifest(&out_dir.join("manifest.tsv"), &rows)?;
    let spec_path = out_dir.join("spec.kv");
    std::fs::write(&spec_path, spec.to_kv()).map_err(|e| Error::io(&spec_path, e))?;
    Ok(rows)
}

/// Bayes-optimal accuracies under the generative process, by exact
/// enumeration over group observations.
#[derive(Debug, Clone)]
pub struct BayesReport {
    pub text: f64,
    pub image: f64,
    pub fused: f64,
    pub per_class_text: Vec<f64>,
    pub per_class_image: Vec<f64>,
    pub per_class_fused: Vec<f64>,
}

impl BayesReport {
    /// Headroom the second modality adds over the best single one.
    pub fn gap(&self) -> f64 {
        self.fused - self.text.max(self.image)
    }
}

/// Probability that a sample of `class` shows observation `obs`:
/// `Some(group)` means that group's signal is present, `None` means
/// the modality carries no signal.
fn observe_prob(groups: &[Vec<usize>], class: usize, obs: Option<usize>, p: f64) -> f64 {
    match obs {
        Some(group) => {
            if group_of(groups, class) == group {
                p
            } else {
                0.0
            }
        }
        None => 1.0 - p,
    }
}

/// All observations one modality can produce: each group's signal, or
/// no signal.
fn observations(groups: &[Vec<usize>]) -> Vec<Option<usize>> {
    (0..groups.len()).map(Some).chain([None]).collect()
}

/// Ties in the likelihood argmax go to the lowest class index, the same
/// rule the classifiers use.
fn argmax_class(likelihood: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_l = likelihood(0);
    for c in 1..IntentLabel::COUNT {
        let l = likelihood(c);
        if l > best_l {
            best = c;
            best_l = l;
        }
    }
    best
}

/// Computes the exact Bayes accuracy of each modality alone and of the
/// joint observation, assuming uniform class priors (which the
/// generator guarantees: `n_per_class` samples of each class).
pub fn bayes_accuracies(spec: &SynthSpec) -> Result<BayesReport> {
    spec.validate()?;
    let n = IntentLabel::COUNT;
    let tp = |class: usize, obs: Option<usize>| {
        observe_prob(&spec.text_groups, class, obs, spec.p_text_signal)
    };
    let ip = |class: usize, obs: Option<usize>| {
        observe_prob(&spec.image_groups, class, obs, spec.p_image_signal)
    };
    let text_obs = observations(&spec.text_groups);
    let image_obs = observations(&spec.image_groups);

    let mut per_class_text = vec![0.0; n];
    for &gt in &text_obs {
        let pred = argmax_class(|c| tp(c, gt));
        per_class_text[pred] += tp(pred, gt);
    }
    let mut per_class_image = vec![0.0; n];
    for &gi in &image_obs {
        let pred = argmax_class(|c| ip(c, gi));
        per_class_image[pred] += ip(pred, gi);
    }
    let mut per_class_fused = vec![0.0; n];
    for &gt in &text_obs {
        for &gi in &image_obs {
            let pred = argmax_class(|c| tp(c, gt) * ip(c, gi));
            per_class_fused[pred] += tp(pred, gt) * ip(pred, gi);
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    Ok(BayesReport {
        text: mean(&per_class_text),
        image: mean(&per_class_image),
        fused: mean(&per_class_fused),
        per_class_text,
        per_class_image,
        per_class_fused,
    })
}
