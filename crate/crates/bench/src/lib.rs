//! Fixtures shared by the criterion benches.

use qnoc::engine::Generator;
use qnoc::{
    MeshConfig, Network, PatternKind, PolicyConfig, PolicyKind, RouterConfig, TrafficSchedule,
};

/// A loaded 8x8 network with its traffic source, already past warmup.
pub struct Loaded {
    pub net: Network,
    pub gen: Generator,
    pub traffic: TrafficSchedule,
}

impl Loaded {
    pub fn new(kind: PolicyKind, pattern: PatternKind, rate: f64, warmup: u64) -> Loaded {
        let mesh = MeshConfig::default();
        let mut l = Loaded {
            net: Network::new(mesh, RouterConfig::default(), PolicyConfig::new(kind), 1)
                .expect("default config is valid"),
            gen: Generator::new(1, mesh.nodes()),
            traffic: TrafficSchedule::fixed(pattern, rate, 4),
        };
        l.advance(warmup);
        l
    }

    pub fn advance(&mut self, cycles: u64) {
        for _ in 0..cycles {
            self.gen
                .generate(&mut self.net, &self.traffic)
                .expect("pattern fits the mesh");
            self.net.step();
            self.net.take_deliveries();
        }
    }
}
