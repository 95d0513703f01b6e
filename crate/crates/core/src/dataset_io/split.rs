use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::DatasetError;
use crate::channel_sim::{ActivityClass, CsiSample, N_CLASSES};

/// Inputs to [`make_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub target_subject: u16,
    pub n_source: usize,
    pub n_ft_per_class: usize,
    pub n_anchor_per_class: usize,
    pub absent_classes: Vec<ActivityClass>,
}

impl SplitSpec {
    pub fn new(target_subject: u16) -> Self {
        Self {
            target_subject,
            n_source: 6,
            n_ft_per_class: 10,
            n_anchor_per_class: 30,
            absent_classes: Vec::new(),
        }
    }
}

/// Leave-one-subject-out split. Sample ids index the dataset the split was
/// drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub source_subjects: Vec<u16>,
    pub target_subject: u16,
    pub ft_ids: Vec<Vec<usize>>,
    pub anchor_ids: Vec<Vec<usize>>,
    pub absent_classes: Vec<ActivityClass>,
}

impl SplitManifest {
    pub fn is_absent(&self, class: usize) -> bool {
        self.absent_classes.iter().any(|c| c.id() as usize == class)
    }

    /// All samples of the source subjects.
    pub fn pt_ids(&self, dataset: &[CsiSample]) -> Vec<usize> {
        (0..dataset.len())
            .filter(|&i| self.source_subjects.contains(&dataset[i].subject_id))
            .collect()
    }

    pub fn ft_flat(&self) -> Vec<usize> {
        self.ft_ids.iter().flatten().copied().collect()
    }

    pub fn anchor_flat(&self) -> Vec<usize> {
        self.anchor_ids.iter().flatten().copied().collect()
    }

    /// Target-subject samples not used for fine-tuning.
    pub fn test_ids(&self, dataset: &[CsiSample]) -> Vec<usize> {
        let ft: BTreeSet<usize> = self.ft_flat().into_iter().collect();
        (0..dataset.len())
            .filter(|&i| dataset[i].subject_id == self.target_subject && !ft.contains(&i))
            .collect()
    }

    pub fn check(&self, dataset: &[CsiSample]) -> Result<(), DatasetError> {
        let err = |m: String| Err(DatasetError::Split(m));
        if self.source_subjects.contains(&self.target_subject) {
            return err("target subject is also a source subject".into());
        }
        if self.ft_ids.len() != N_CLASSES || self.anchor_ids.len() != N_CLASSES {
            return err(format!("manifest must list {N_CLASSES} classes"));
        }
        for class in 0..N_CLASSES {
            for &i in &self.ft_ids[class] {
                let s = dataset.get(i).ok_or(DatasetError::Split(format!("no sample {i}")))?;
                if s.subject_id != self.target_subject || s.activity_label as usize != class {
                    return err(format!("fine-tuning sample {i} is not a target sample of class {class}"));
                }
            }
            if self.is_absent(class) && !self.ft_ids[class].is_empty() {
                return err(format!("absent class {} has fine-tuning samples", code(class)));
            }
            for &i in &self.anchor_ids[class] {
                let s = dataset.get(i).ok_or(DatasetError::Split(format!("no sample {i}")))?;
                if !self.source_subjects.contains(&s.subject_id) || s.activity_label as usize != class {
                    return err(format!("anchor sample {i} is not a source sample of class {class}"));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# leave-one-subject-out split\n");
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "target {}", self.target_subject).unwrap();
        let src: Vec<usize> = self.source_subjects.iter().map(|&x| x as usize).collect();
        writeln!(s, "sources {}", join(&src)).unwrap();
        let absent: Vec<&str> = self.absent_classes.iter().map(|c| c.code()).collect();
        writeln!(s, "absent {}", absent.join(" ")).unwrap();
        for c in 0..N_CLASSES {
            writeln!(s, "ft {} {}", code(c), join(&self.ft_ids[c])).unwrap();
        }
        for c in 0..N_CLASSES {
            writeln!(s, "anchor {} {}", code(c), join(&self.anchor_ids[c])).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DatasetError> {
        let mut m = SplitManifest {
            source_subjects: Vec::new(),
            target_subject: u16::MAX,
            ft_ids: vec![Vec::new(); N_CLASSES],
            anchor_ids: vec![Vec::new(); N_CLASSES],
            absent_classes: Vec::new(),
        };
        let mut seen_target = false;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let bad = |reason: String| DatasetError::Manifest { line, reason };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            let key = parts.next().expect("non-empty line");
            let rest: Vec<&str> = parts.collect();
            let ints = |items: &[&str]| -> Result<Vec<usize>, DatasetError> {
                items
                    .iter()
                    .map(|x| x.parse().map_err(|_| bad(format!("bad integer {x:?}"))))
                    .collect()
            };
            match key {
                "target" => {
                    let [v] = rest[..] else { return Err(bad("target takes one value".into())) };
                    m.target_subject = v.parse().map_err(|_| bad(format!("bad subject {v:?}")))?;
                    seen_target = true;
                }
                "sources" => {
                    m.source_subjects = ints(&rest)?.into_iter().map(|x| x as u16).collect();
                }
                "absent" => {
                    m.absent_classes = rest
                        .iter()
                        .map(|c| c.parse().map_err(|e: crate::channel_sim::SimError| bad(e.to_string())))
                        .collect::<Result<_, _>>()?;
                }
                "ft" | "anchor" => {
                    let Some((cls, ids)) = rest.split_first() else {
                        return Err(bad(format!("{key} needs a class code")));
                    };
                    let c: ActivityClass = cls
                        .parse()
                        .map_err(|e: crate::channel_sim::SimError| bad(e.to_string()))?;
                    let slot = if key == "ft" { &mut m.ft_ids } else { &mut m.anchor_ids };
                    slot[c.id() as usize] = ints(ids)?;
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        if !seen_target {
            return Err(DatasetError::Manifest {
                line: 0,
                reason: "missing target line".into(),
            });
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| DatasetError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Self::from_text(&text)
    }
}

fn code(class: usize) -> &'static str {
    ActivityClass::from_id(class as u8).map_or("??", |c| c.code())
}

/// Draws a split: `n_source` subjects recorded outside the target's
/// environment, `n_ft_per_class` target samples for every class not marked
/// absent, and `n_anchor_per_class` source samples per class taken
/// round-robin over the source subjects.
pub fn make_split(
    dataset: &[CsiSample],
    spec: &SplitSpec,
    seed: u64,
) -> Result<SplitManifest, DatasetError> {
    let mut rng = crate::rng::rng(seed);
    let target_env = dataset
        .iter()
        .find(|s| s.subject_id == spec.target_subject)
        .map(|s| s.environment_id)
        .ok_or_else(|| DatasetError::Split(format!("no samples of target subject {}", spec.target_subject)))?;
    let candidates: BTreeSet<u16> = dataset
        .iter()
        .filter(|s| s.environment_id != target_env)
        .map(|s| s.subject_id)
        .collect();
    if candidates.len() < spec.n_source {
        return Err(DatasetError::Split(format!(
            "need {} source subjects outside environment {target_env}, only {} available",
            spec.n_source,
            candidates.len()
        )));
    }
    let mut candidates: Vec<u16> = candidates.into_iter().collect();
    candidates.shuffle(&mut rng);
    let mut sources: Vec<u16> = candidates[..spec.n_source].to_vec();
    sources.sort_unstable();

    let by = |subject: u16, class: usize| -> Vec<usize> {
        (0..dataset.len())
            .filter(|&i| dataset[i].subject_id == subject && dataset[i].activity_label as usize == class)
            .collect()
    };

    let mut ft_ids = vec![Vec::new(); N_CLASSES];
    for (class, slot) in ft_ids.iter_mut().enumerate() {
        if spec.absent_classes.iter().any(|c| c.id() as usize == class) {
            continue;
        }
        let mut pool = by(spec.target_subject, class);
        if pool.len() < spec.n_ft_per_class {
            return Err(DatasetError::Split(format!(
                "class {}: target subject {} has {} samples, need {} for fine-tuning",
                code(class),
                spec.target_subject,
                pool.len(),
                spec.n_ft_per_class
            )));
        }
        pool.shuffle(&mut rng);
        pool.truncate(spec.n_ft_per_class);
        pool.sort_unstable();
        *slot = pool;
    }

    let mut anchor_ids = vec![Vec::new(); N_CLASSES];
    for (class, slot) in anchor_ids.iter_mut().enumerate() {
        let mut pools: Vec<Vec<usize>> = sources
            .iter()
            .map(|&s| {
                let mut p = by(s, class);
                p.shuffle(&mut rng);
                p
            })
            .collect();
        pools.shuffle(&mut rng);
        let available: usize = pools.iter().map(Vec::len).sum();
        if available < spec.n_anchor_per_class {
            return Err(DatasetError::Split(format!(
                "class {}: source subjects hold {available} samples, need {} anchors",
                code(class),
                spec.n_anchor_per_class
            )));
        }
        let mut picked = Vec::with_capacity(spec.n_anchor_per_class);
        let mut k = 0;
        while picked.len() < spec.n_anchor_per_class {
            for pool in pools.iter_mut() {
                if picked.len() == spec.n_anchor_per_class {
                    break;
                }
                if let Some(&i) = pool.get(k) {
                    picked.push(i);
                }
            }
            k += 1;
        }
        picked.sort_unstable();
        *slot = picked;
    }

    let mut absent = spec.absent_classes.clone();
    absent.sort();
    absent.dedup();
    let manifest = SplitManifest {
        source_subjects: sources,
        target_subject: spec.target_subject,
        ft_ids,
        anchor_ids,
        absent_classes: absent,
    };
    manifest.check(dataset)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    /// Label-only dataset: `subjects` subjects, environment `s % 3`.
    fn toy(subjects: u16, reps: usize) -> Vec<CsiSample> {
        let mut out = Vec::new();
        for s in 0..subjects {
            for c in 0..N_CLASSES {
                for _ in 0..reps {
                    out.push(CsiSample {
                        timestamps_s: vec![0.0, 0.1],
                        rssi_dbm: vec![0.0; 2],
                        csi: vec![Complex64::new(1.0, 0.0); 4],
                        n_antennas: 2,
                        n_subcarriers: 1,
                        activity_label: c as u8,
                        subject_id: s,
                        environment_id: (s % 3) as u8,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn absent_classes_have_no_ft_samples() {
        let data = toy(15, 40);
        let mut spec = SplitSpec::new(3);
        spec.absent_classes = vec![ActivityClass::Rotate, ActivityClass::Handshake];
        let m = make_split(&data, &spec, 7).unwrap();
        for c in 0..N_CLASSES {
            let want = if m.is_absent(c) { 0 } else { 10 };
            assert_eq!(m.ft_ids[c].len(), want);
            assert_eq!(m.anchor_ids[c].len(), 30);
        }
        assert_eq!(m.source_subjects.len(), 6);
        assert!(m.source_subjects.iter().all(|&s| s % 3 != 0));
        let ft: BTreeSet<_> = m.ft_flat().into_iter().collect();
        assert!(m.anchor_flat().iter().all(|i| !ft.contains(i)));
        assert!(m.test_ids(&data).iter().all(|i| !ft.contains(i)));
        assert_eq!(m.test_ids(&data).len(), 400 - 80);
    }

    #[test]
    fn anchors_spread_over_sources() {
        let data = toy(15, 40);
        let m = make_split(&data, &SplitSpec::new(0), 1).unwrap();
        for class in 0..N_CLASSES {
            let subjects: BTreeSet<u16> = m.anchor_ids[class].iter().map(|&i| data[i].subject_id).collect();
            assert_eq!(subjects.len(), 6);
        }
    }

    #[test]
    fn deterministic_and_round_trips_text() {
        let data = toy(15, 12);
        let mut spec = SplitSpec::new(4);
        spec.absent_classes = vec![ActivityClass::Walk];
        let a = make_split(&data, &spec, 3).unwrap();
        assert_eq!(a, make_split(&data, &spec, 3).unwrap());
        assert_eq!(SplitManifest::from_text(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn insufficient_data_errors() {
        let data = toy(15, 5);
        let err = make_split(&data, &SplitSpec::new(0), 1).unwrap_err().to_string();
        assert!(err.contains("class PP"), "{err}");
        let mut spec = SplitSpec::new(0);
        spec.n_source = 11;
        spec.n_ft_per_class = 1;
        assert!(make_split(&toy(15, 40), &spec, 1).is_err());
    }
}
