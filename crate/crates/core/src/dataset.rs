//! Label space, soft labels, clip records and dataset statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::audio::CANONICAL_SAMPLE_RATE;
use crate::{Error, Result};

pub const N_GENRES: usize = 8;

/// Tolerance on the sum of a soft label.
pub const LABEL_SUM_TOLERANCE: f64 = 1e-6;

/// The eight sub-genres. Declaration order defines label-vector indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Genre {
    ProgressiveHouse,
    FutureHouse,
    BassHouse,
    TechHouse,
    DeepHouse,
    Bigroom,
    FutureRave,
    SlapHouse,
}

impl Genre {
    pub const ALL: [Genre; N_GENRES] = [
        Genre::ProgressiveHouse,
        Genre::FutureHouse,
        Genre::BassHouse,
        Genre::TechHouse,
        Genre::DeepHouse,
        Genre::Bigroom,
        Genre::FutureRave,
        Genre::SlapHouse,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Genre> {
        Genre::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Genre::ProgressiveHouse => "Progressive House",
            Genre::FutureHouse => "Future House",
            Genre::BassHouse => "Bass House",
            Genre::TechHouse => "Tech House",
            Genre::DeepHouse => "Deep House",
            Genre::Bigroom => "Bigroom",
            Genre::FutureRave => "Future Rave",
            Genre::SlapHouse => "Slap House",
        }
    }

    /// Lowercase, underscore-separated name, e.g. `progressive_house`.
    pub fn slug(self) -> &'static str {
        match self {
            Genre::ProgressiveHouse => "progressive_house",
            Genre::FutureHouse => "future_house",
            Genre::BassHouse => "bass_house",
            Genre::TechHouse => "tech_house",
            Genre::DeepHouse => "deep_house",
            Genre::Bigroom => "bigroom",
            Genre::FutureRave => "future_rave",
            Genre::SlapHouse => "slap_house",
        }
    }

    /// Accepts the display name, the slug or the variant name.
    pub fn parse(s: &str) -> Option<Genre> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Genre::ALL.into_iter().find(|g| {
            let name: String = g.slug().chars().filter(|c| *c != '_').collect();
            name == key
        })
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A probability distribution over the eight genres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SoftLabel {
    pub probs: [f64; N_GENRES],
}

impl SoftLabel {
    pub fn new(probs: [f64; N_GENRES]) -> Result<Self> {
        let label = SoftLabel { probs };
        label.validate()?;
        Ok(label)
    }

    pub fn one_hot(genre: Genre) -> Self {
        let mut probs = [0.0; N_GENRES];
        probs[genre.index()] = 1.0;
        SoftLabel { probs }
    }

    /// `weight_a` on `a`, the rest on `b`.
    pub fn blend(a: Genre, b: Genre, weight_a: f64) -> Result<Self> {
        let mut probs = [0.0; N_GENRES];
        probs[a.index()] += weight_a;
        probs[b.index()] += 1.0 - weight_a;
        SoftLabel::new(probs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidLabel(format!(
                "negative or non-finite entry in {:?}",
                self.probs
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > LABEL_SUM_TOLERANCE {
            return Err(Error::InvalidLabel(format!("entries sum to {sum}")));
        }
        Ok(())
    }

    pub fn is_one_hot(&self) -> bool {
        self.probs.iter().filter(|&&p| p != 0.0).count() == 1
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * crate::float::Float::ln(p))
            .sum()
    }
}

/// Reference class of a soft label: its argmax, ties to the lowest index.
pub fn sharpen(label: &SoftLabel) -> Genre {
    Genre::ALL[argmax(&label.probs)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One clip of the dataset; serialized as one JSON-lines manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub source_id: String,
    pub start_s: f64,
    pub label: SoftLabel,
    pub split: Split,
    pub feature_path: String,
    #[serde(default = "canonical_rate")]
    pub sample_rate: u32,
}

fn canonical_rate() -> u32 {
    CANONICAL_SAMPLE_RATE
}

/// Manifest-level checks that need no file access: unique ids, valid labels,
/// canonical sample rate and no track in both splits.
pub fn validate_records(records: &[ClipRecord]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut splits: BTreeMap<&str, Split> = BTreeMap::new();
    for r in records {
        if !ids.insert(r.clip_id.as_str()) {
            return Err(Error::DuplicateClip(r.clip_id.clone()));
        }
        r.label
            .validate()
            .map_err(|e| Error::InvalidLabel(format!("clip `{}`: {e}", r.clip_id)))?;
        if r.sample_rate != CANONICAL_SAMPLE_RATE {
            return Err(Error::Data(format!(
                "clip `{}` has sample rate {} Hz, expected {CANONICAL_SAMPLE_RATE} Hz",
                r.clip_id, r.sample_rate
            )));
        }
        match splits.get(r.source_id.as_str()) {
            Some(&s) if s != r.split => return Err(Error::SplitLeakage(r.source_id.clone())),
            Some(_) => {}
            None => {
                splits.insert(r.source_id.as_str(), r.split);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreCount {
    pub genre: Genre,
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub per_genre: Vec<GenreCount>,
    pub total_train: usize,
    pub total_val: usize,
    pub tracks: usize,
}

/// Clip counts by sharpened genre and split, plus distinct tracks.
pub fn dataset_stats(records: &[ClipRecord]) -> DatasetStats {
    let mut per_genre: Vec<GenreCount> = Genre::ALL
        .iter()
        .map(|&genre| GenreCount {
            genre,
            train: 0,
            val: 0,
        })
        .collect();
    for r in records {
        let c = &mut per_genre[sharpen(&r.label).index()];
        match r.split {
            Split::Train => c.train += 1,
            Split::Val => c.val += 1,
        }
    }
    let tracks = records
        .iter()
        .map(|r| r.source_id.as_str())
        .collect::<BTreeSet<_>>()
        .len();
    DatasetStats {
        total_train: per_genre.iter().map(|c| c.train).sum(),
        total_val: per_genre.iter().map(|c| c.val).sum(),
        per_genre,
        tracks,
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>7} {:>7}", "genre", "train", "val")?;
        for c in &self.per_genre {
            writeln!(f, "{:<18} {:>7} {:>7}", c.genre.name(), c.train, c.val)?;
        }
        writeln!(
            f,
            "{:<18} {:>7} {:>7}",
            "Total", self.total_train, self.total_val
        )?;
        write!(f, "{:<18} {:>7}", "Tracks", self.tracks)
    }
}

/// Presence of an instrument role in a genre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Yes,
    No,
    Uncertain,
}

/// Inclusive score range on the 1-5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub low: u8,
    pub high: u8,
}

const fn r(low: u8, high: u8) -> ScoreRange {
    ScoreRange { low, high }
}

/// Annotation determinants of a genre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreProfile {
    pub genre: Genre,
    pub lead_inst: Presence,
    pub chord_inst: Presence,
    pub bass_inst: Presence,
    pub groove: ScoreRange,
    pub rhythm: ScoreRange,
    pub distortion: ScoreRange,
    pub organicity: ScoreRange,
}

pub fn genre_profile(genre: Genre) -> GenreProfile {
    use Presence::{No as N, Uncertain as U, Yes as Y};
    let (lead, chord, bass, groove, rhythm, distortion, organicity) = match genre {
        Genre::ProgressiveHouse => (Y, Y, Y, r(4, 5), r(1, 3), r(1, 2), r(3, 5)),
        Genre::FutureHouse => (Y, U, Y, r(3, 4), r(4, 5), r(3, 4), r(1, 3)),
        Genre::BassHouse => (Y, N, Y, r(2, 4), r(3, 4), r(4, 5), r(1, 2)),
        Genre::TechHouse => (N, N, Y, r(3, 5), r(3, 4), r(2, 4), r(1, 3)),
        Genre::DeepHouse => (Y, U, Y, r(2, 3), r(1, 2), r(1, 2), r(2, 4)),
        Genre::Bigroom => (Y, N, N, r(1, 2), r(1, 3), r(4, 5), r(1, 2)),
        Genre::FutureRave => (Y, N, Y, r(4, 5), r(3, 5), r(2, 4), r(1, 2)),
        Genre::SlapHouse => (Y, N, Y, r(3, 4), r(3, 5), r(1, 3), r(1, 2)),
    };
    GenreProfile {
        genre,
        lead_inst: lead,
        chord_inst: chord,
        bass_inst: bass,
        groove,
        rhythm,
        distortion,
        organicity,
    }
}

/// Published clip counts `(train, val)` per genre, in [`Genre::ALL`] order.
pub const REFERENCE_CLIP_COUNTS: [(usize, usize); N_GENRES] = [
    (1215, 344),
    (1192, 348),
    (1102, 120),
    (643, 200),
    (591, 116),
    (774, 284),
    (920, 108),
    (667, 232),
];

/// Published number of distinct tracks across both splits.
pub const REFERENCE_TRACKS: usize = 1035;

/// Synthetic manifest with the published clip and track counts.
///
/// Labels are one-hot; every track lives in one (genre, split) cell and
/// tracks are apportioned to cells by largest remainder.
pub fn reference_fixture_records() -> Vec<ClipRecord> {
    let cells: Vec<(Genre, Split, usize)> = Genre::ALL
        .iter()
        .zip(REFERENCE_CLIP_COUNTS)
        .flat_map(|(&g, (train, val))| [(g, Split::Train, train), (g, Split::Val, val)])
        .collect();
    let total_clips: usize = cells.iter().map(|c| c.2).sum();
    let quota: Vec<(usize, usize)> = cells
        .iter()
        .map(|c| {
            let scaled = c.2 * REFERENCE_TRACKS;
            (scaled / total_clips, scaled % total_clips)
        })
        .collect();
    let mut tracks: Vec<usize> = quota.iter().map(|q| q.0).collect();
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| quota[b].1.cmp(&quota[a].1).then(a.cmp(&b)));
    let missing = REFERENCE_TRACKS - tracks.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        tracks[i] += 1;
    }

    let mut out = Vec::with_capacity(total_clips);
    let mut track_no = 0usize;
    for ((genre, split, clips), n_tracks) in cells.into_iter().zip(tracks) {
        for t in 0..n_tracks {
            let source_id = format!("trk{:04}", track_no + t);
            let share = clips / n_tracks + usize::from(t < clips % n_tracks);
            for c in 0..share {
                let clip_id = format!("{source_id}_c{c:02}");
                out.push(ClipRecord {
                    feature_path: format!("features/{clip_id}.msf"),
                    clip_id,
                    source_id: source_id.clone(),
                    start_s: 7.5 * c as f64,
                    label: SoftLabel::one_hot(genre),
                    split,
                    sample_rate: CANONICAL_SAMPLE_RATE,
                });
            }
        }
        track_no += n_tracks;
    }
    out
}
