//! Image-to-feature path shared by the offline and on-the-fly training modes.

use crate::dataset::LabeledSample;
use crate::features::{Extractor, ExtractorSpec, FeatureTensor};
use crate::imaging::Preprocess;
use crate::{par, Result};

pub struct Pipeline {
    pub preprocess: Preprocess,
    pub extractor: Extractor,
}

impl Pipeline {
    pub fn new(preprocess: Preprocess, spec: ExtractorSpec) -> Result<Self> {
        Ok(Self {
            preprocess,
            extractor: Extractor::new(spec)?,
        })
    }

    /// Loads, preprocesses and extracts every sample, in parallel, stacked
    /// in input order.
    pub fn featurize(&self, samples: &[LabeledSample]) -> Result<FeatureTensor> {
        let size = self.extractor.spec().input_size;
        let images = par::try_map(samples, |s| {
            let img = s.source.load()?;
            self.preprocess.apply(&img, size)
        })?;
        self.extractor.extract(&images)
    }
}
