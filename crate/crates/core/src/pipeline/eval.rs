use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{predict, PreparedSlide, TwoStageModel};
use crate::error::{Error, Result};
use crate::synth::SlideClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideRecord {
    pub slide_id: String,
    pub truth: SlideClass,
    pub prediction: SlideClass,
    /// No tissue survived filtering; the prediction is the benign default.
    pub no_tissue: bool,
}

/// Slide-level accuracy and confusion matrix (rows truth, columns prediction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub classes: Vec<SlideClass>,
    pub confusion: Vec<Vec<usize>>,
    pub per_slide: Vec<SlideRecord>,
}

impl EvalReport {
    pub fn from_records(per_slide: Vec<SlideRecord>) -> Result<Self> {
        if per_slide.is_empty() {
            return Err(Error::EmptySplit("evaluation".into()));
        }
        let n = SlideClass::ALL.len();
        let mut confusion = vec![vec![0usize; n]; n];
        for r in &per_slide {
            confusion[r.truth.index()][r.prediction.index()] += 1;
        }
        let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
        Ok(Self { accuracy: correct as f64 / per_slide.len() as f64, classes: SlideClass::ALL.to_vec(), confusion, per_slide })
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    /// `truth,<class>…` header, then one row of counts per true class.
    pub fn write_confusion_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let names: Vec<&str> = self.classes.iter().map(|c| c.name()).collect();
        writeln!(out, "truth,{}", names.join(","))?;
        for (class, row) in self.classes.iter().zip(&self.confusion) {
            let counts: Vec<String> = row.iter().map(ToString::to_string).collect();
            writeln!(out, "{},{}", class.name(), counts.join(","))?;
        }
        Ok(())
    }
}

pub fn evaluate(model: &TwoStageModel, slides: &[PreparedSlide]) -> Result<EvalReport> {
    if slides.is_empty() {
        return Err(Error::EmptySplit("test".into()));
    }
    let records = crate::par::map(slides, |s| {
        let p = predict(model, s)?;
        Ok(SlideRecord { slide_id: s.slide_id.clone(), truth: s.class, prediction: p.class, no_tissue: p.no_tissue })
    })?;
    EvalReport::from_records(records)
}
