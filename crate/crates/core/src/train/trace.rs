use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the stage has no validation split.
    pub val_mean_auc: Option<f64>,
    pub encoder_lr: f64,
    pub head_lr: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub stage: String,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn new(stage: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            epochs: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.epochs.last() {
            if record.epoch <= last.epoch {
                return Err(Error::InvalidInput(format!(
                    "epoch {} recorded after epoch {}",
                    record.epoch, last.epoch
                )));
            }
        }
        self.epochs.push(record);
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.train_loss).collect()
    }

    /// Copy with wall-clock times zeroed, for run-to-run comparison.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.epochs {
            r.wall_time_s = 0.0;
        }
        out
    }

    /// One JSON object per line, one line per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    pub fn read_jsonl(stage: &str, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut trace = Self::new(stage);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            trace.push(serde_json::from_str(line).map_err(|e| Error::file(path, e))?)?;
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, wall: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: 0.5,
            val_mean_auc: Some(0.7),
            encoder_lr: 1e-5,
            head_lr: 1e-4,
            wall_time_s: wall,
        }
    }

    #[test]
    fn epochs_must_increase() {
        let mut t = TrainingTrace::new("adapt");
        t.push(rec(1, 0.1)).unwrap();
        assert!(t.push(rec(1, 0.1)).is_err());
    }

    #[test]
    fn jsonl_round_trip_and_normalization() {
        let mut t = TrainingTrace::new("adapt");
        t.push(rec(1, 0.3)).unwrap();
        t.push(rec(2, 0.4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.jsonl");
        t.write_jsonl(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 2);
        assert_eq!(TrainingTrace::read_jsonl("adapt", &p).unwrap(), t);
        let mut u = t.clone();
        u.epochs[0].wall_time_s = 9.0;
        assert_ne!(u, t);
        assert_eq!(u.normalized(), t.normalized());
    }
}
