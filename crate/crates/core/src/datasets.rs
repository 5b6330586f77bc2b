//! Swiss roll and Peaks classification data.

use std::f64::consts::PI;
use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::BatchState;
use crate::linalg::{DenseMatrix, SeededRng};
use crate::loss::{HeadKind, Labels};

pub const SWISS_ROLL_POINTS: usize = 513;
pub const PEAKS_GRID: usize = 256;
pub const PEAKS_THRESHOLDS: [f64; 4] = [-2.2, 0.55, 1.75, 3.2];
pub const PEAKS_PER_CLASS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetId {
    SwissRoll,
    Peaks,
}

impl DatasetId {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::SwissRoll => "swiss-roll",
            DatasetId::Peaks => "peaks",
        }
    }

    pub fn head(self) -> HeadKind {
        match self {
            DatasetId::SwissRoll => HeadKind::BinarySigmoid,
            DatasetId::Peaks => HeadKind::MulticlassSoftmax,
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            DatasetId::SwissRoll => 1,
            DatasetId::Peaks => 5,
        }
    }

    pub fn load(self, data_seed: u64) -> Result<Dataset> {
        match self {
            DatasetId::SwissRoll => Ok(swiss_roll()),
            DatasetId::Peaks => peaks(data_seed),
        }
    }
}

impl std::str::FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swiss-roll" => Ok(DatasetId::SwissRoll),
            "peaks" => Ok(DatasetId::Peaks),
            other => Err(Error::InvalidArgument(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Validation,
}

/// Inputs in `ℝ²` with matching labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub inputs: Vec<[f64; 2]>,
    pub labels: Labels,
    pub split: Split,
}

impl LabeledSet {
    pub fn new(inputs: Vec<[f64; 2]>, labels: Labels, split: Split) -> Result<Self> {
        crate::error::check_len("labeled set", inputs.len(), labels.samples())?;
        Ok(Self { inputs, labels, split })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        2
    }

    /// `x₀ⁱ = W_in · inputⁱ`
    pub fn embed(&self, w_in: &DenseMatrix) -> Result<BatchState> {
        crate::error::check_len("W_in columns", 2, w_in.cols())?;
        let d = w_in.rows();
        let mut out = BatchState::zeros(self.len(), d);
        for (u, x) in self.inputs.iter().zip(out.as_mut_slice().chunks_exact_mut(d)) {
            w_in.mul_vec_into(u, x);
        }
        Ok(out)
    }

    /// Rows `x1,x2,label` with the class index as label.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x2", "label"])?;
        for (i, u) in self.inputs.iter().enumerate() {
            w.write_record([
                u[0].to_string(),
                u[1].to_string(),
                self.labels.class(i).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub id: DatasetId,
    pub train: LabeledSet,
    pub validation: LabeledSet,
}

/// Blue spiral `s(cos 4πs, sin 4πs)` (label 0) and red spiral
/// `(s+0.2)(cos 4πs, sin 4πs)` (label 1), `s` on 513 equispaced values in
/// `[0, 1]`. Enumerating blue then red, even positions go to training.
pub fn swiss_roll() -> Dataset {
    let n = SWISS_ROLL_POINTS;
    let mut all = Vec::with_capacity(2 * n);
    for (label, offset) in [(0.0, 0.0), (1.0, 0.2)] {
        for j in 0..n {
            let s = j as f64 / (n - 1) as f64;
            let (r, phi) = (s + offset, 4.0 * PI * s);
            all.push(([r * phi.cos(), r * phi.sin()], label));
        }
    }
    let pick = |parity: usize, split: Split| {
        let (inputs, labels): (Vec<_>, Vec<_>) =
            all.iter().skip(parity).step_by(2).cloned().unzip();
        LabeledSet::new(inputs, Labels::binary(labels).expect("binary labels"), split)
            .expect("matching lengths")
    };
    Dataset {
        id: DatasetId::SwissRoll,
        train: pick(0, Split::Train),
        validation: pick(1, Split::Validation),
    }
}

pub fn peaks_function(x1: f64, x2: f64) -> f64 {
    3.0 * (1.0 - x1).powi(2) * (-x1 * x1 - (x2 + 1.0).powi(2)).exp()
        - 10.0 * (x1 / 5.0 - x1.powi(3) - x2.powi(5)) * (-x1 * x1 - x2 * x2).exp()
        - (-(x1 + 1.0).powi(2) - x2 * x2).exp() / 3.0
}

/// Class `i` collects values with `c_i ≤ f < c_{i+1}` (`c₀ = min f`, last
/// class open above).
pub fn peaks_class(value: f64) -> usize {
    PEAKS_THRESHOLDS.iter().filter(|&&c| value >= c).count()
}

/// All points of the regular grid on `[−3, 3]²`.
pub fn peaks_grid() -> Vec<[f64; 2]> {
    let n = PEAKS_GRID;
    let coord = |i: usize| -3.0 + 6.0 * i as f64 / (n - 1) as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [coord(i), coord(j)]))
        .collect()
}

/// 1000 grid points per class drawn without replacement with `data_seed`;
/// the first 800 of each class train, the rest validate.
pub fn peaks(data_seed: u64) -> Result<Dataset> {
    let points = peaks_grid();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); PEAKS_THRESHOLDS.len() + 1];
    for (i, u) in points.iter().enumerate() {
        by_class[peaks_class(peaks_function(u[0], u[1]))].push(i);
    }
    let mut rng = SeededRng::new(data_seed);
    let n_train = PEAKS_PER_CLASS * 4 / 5;
    let (mut train_x, mut train_c, mut val_x, mut val_c) = (vec![], vec![], vec![], vec![]);
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < PEAKS_PER_CLASS {
            return Err(Error::InsufficientClassPopulation {
                class,
                available: members.len(),
                required: PEAKS_PER_CLASS,
            });
        }
        let drawn = sample(rng.inner_mut(), members.len(), PEAKS_PER_CLASS);
        for (pos, idx) in drawn.into_iter().enumerate() {
            let u = points[members[idx]];
            if pos < n_train {
                train_x.push(u);
                train_c.push(class);
            } else {
                val_x.push(u);
                val_c.push(class);
            }
        }
    }
    let outputs = PEAKS_THRESHOLDS.len() + 1;
    Ok(Dataset {
        id: DatasetId::Peaks,
        train: LabeledSet::new(train_x, Labels::one_hot(&train_c, outputs)?, Split::Train)?,
        validation: LabeledSet::new(val_x, Labels::one_hot(&val_c, outputs)?, Split::Validation)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn key(u: &[f64; 2]) -> (u64, u64) {
        (u[0].to_bits(), u[1].to_bits())
    }

    #[test]
    fn swiss_roll_endpoints_and_sizes() {
        let data = swiss_roll();
        assert_eq!(data.train.len(), 513);
        assert_eq!(data.validation.len(), 513);
        // blue s=0 is position 0 (train), red s=0 is position 513 (validation)
        assert_eq!(data.train.inputs[0], [0.0, 0.0]);
        assert_eq!(data.validation.inputs[256], [0.2, 0.0]);
        // blue s=1 is position 512 (train)
        let last_blue = data.train.inputs[256];
        assert!((last_blue[0] - 1.0).abs() < 1e-12 && last_blue[1].abs() < 1e-12);
        assert_eq!(data.train.labels.class(256), 0);
        assert_eq!(data.validation.labels.class(256), 1);
    }

    #[test]
    fn swiss_roll_split_is_a_partition() {
        let data = swiss_roll();
        let train: HashSet<_> = data.train.inputs.iter().map(key).collect();
        let val: HashSet<_> = data.validation.inputs.iter().map(key).collect();
        assert!(train.is_disjoint(&val));
        assert_eq!(train.len() + val.len(), 1026);
        let blue_train = (0..513).filter(|&i| data.train.labels.class(i) == 0).count();
        assert_eq!(blue_train, 257);
    }

    #[test]
    fn peaks_values() {
        let expected = 8.0 / 3.0 * (-1.0f64).exp();
        assert!((peaks_function(0.0, 0.0) - expected).abs() < 1e-14);
        assert!((peaks_function(0.0, 0.0) - 0.98101).abs() < 1e-5);
        assert_eq!(PEAKS_THRESHOLDS, [-2.2, 0.55, 1.75, 3.2]);
        assert_eq!(peaks_class(-5.0), 0);
        assert_eq!(peaks_class(-2.2), 1);
        assert_eq!(peaks_class(0.98), 2);
        assert_eq!(peaks_class(3.2), 4);
    }

    #[test]
    fn peaks_splits() {
        let data = peaks(0).unwrap();
        assert_eq!(data.train.len(), 4000);
        assert_eq!(data.validation.len(), 1000);
        for set in [&data.train, &data.validation] {
            for (i, u) in set.inputs.iter().enumerate() {
                assert_eq!(set.labels.class(i), peaks_class(peaks_function(u[0], u[1])));
                assert_eq!(set.labels.row(i).iter().sum::<f64>(), 1.0);
            }
        }
        for c in 0..5 {
            let n = (0..1000).filter(|&i| data.validation.labels.class(i) == c).count();
            assert_eq!(n, 200);
        }
        let train: HashSet<_> = data.train.inputs.iter().map(key).collect();
        assert_eq!(train.len(), 4000);
        assert!(data.validation.inputs.iter().all(|u| !train.contains(&key(u))));
    }

    #[test]
    fn peaks_is_a_function_of_the_seed() {
        assert_eq!(peaks(3).unwrap(), peaks(3).unwrap());
        assert_ne!(peaks(3).unwrap().train.inputs, peaks(4).unwrap().train.inputs);
    }

    #[test]
    fn embedding_shape() {
        let data = swiss_roll();
        let w_in = DenseMatrix::from_row_major(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let x0 = data.train.embed(&w_in).unwrap();
        assert_eq!((x0.samples(), x0.width()), (513, 4));
        let mut buf = Vec::new();
        data.train.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x1,x2,label\n0,0,0\n"));
    }
}
