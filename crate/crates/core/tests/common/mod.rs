#![allow(dead_code)]

use pelvimark::backend::{StubBackend, StubConfig};
use pelvimark::eval::GroundTruth;
use pelvimark::labelgen::{build_label_bundle, LabelOptions};
use pelvimark::model::ClassRegistry;
use pelvimark::synth::{synth_dataset, SynthCase, SynthConfig};

pub struct Fixture {
    pub registry: ClassRegistry,
    pub cases: Vec<SynthCase>,
    pub opts: LabelOptions,
}

impl Fixture {
    pub fn new(registry: ClassRegistry, cfg: SynthConfig) -> Self {
        let cases = synth_dataset(&registry, &cfg).unwrap();
        Self { registry, cases, opts: LabelOptions::default() }
    }

    pub fn schematic(n: usize, seed: u64) -> Self {
        Self::new(ClassRegistry::schematic(), SynthConfig { n, seed, ..Default::default() })
    }

    pub fn stub(&self, cfg: StubConfig) -> StubBackend {
        let truth = self
            .cases
            .iter()
            .map(|c| build_label_bundle(&c.annotations, c.record.geometry(), &self.registry, &self.opts).unwrap());
        StubBackend::new(cfg, self.opts.input_side, truth).unwrap()
    }

    pub fn truths(&self) -> Vec<GroundTruth> {
        self.cases
            .iter()
            .map(|c| GroundTruth::build(c.annotations.clone(), c.record.geometry(), &self.registry, &self.opts).unwrap())
            .collect()
    }
}
