use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tensor2};

/// Model dimensions. `heads = 0` disables the attention adapter and uses the
/// static graph directly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub nodes: usize,
    pub window: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub d_state: usize,
    pub d_spatial: usize,
    pub diffusion_order: usize,
    pub fusion_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            nodes: 0,
            window: 32,
            heads: 1,
            head_dim: 64,
            d_state: 64,
            d_spatial: 64,
            diffusion_order: 2,
            fusion_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nodes", self.nodes),
            ("window", self.window),
            ("d_state", self.d_state),
            ("d_spatial", self.d_spatial),
            ("diffusion_order", self.diffusion_order),
            ("fusion_hidden", self.fusion_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be at least 1")));
        }
        if self.heads > 0 && self.head_dim == 0 {
            return Err(Error::Config("model.head_dim must be at least 1 when heads > 0".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }
}

/// Index of a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One message-passing layer: stacked diffusion weights and a bias row.
#[derive(Clone, Copy, Debug)]
pub struct MpnnIds {
    pub theta: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct DirectionIds {
    pub reset: MpnnIds,
    pub update: MpnnIds,
    pub candidate: MpnnIds,
    pub spatial: MpnnIds,
    pub first_weight: ParamId,
    pub first_bias: ParamId,
    pub second_weight: ParamId,
    pub second_bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct FusionIds {
    pub hidden_weight: ParamId,
    pub hidden_bias: ParamId,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

/// Where every tensor lives, derived deterministically from a [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct Layout {
    pub heads: Vec<(ParamId, ParamId)>,
    pub forward: DirectionIds,
    pub backward: DirectionIds,
    pub fusion: FusionIds,
    pub specs: Vec<ParamSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub fan_in: usize,
    pub adapter: bool,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut specs = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, fan_in: usize, adapter: bool| {
            specs.push(ParamSpec {
                name,
                rows,
                cols,
                fan_in,
                adapter,
            });
            ParamId(specs.len() - 1)
        };

        let heads = (0..cfg.heads)
            .map(|l| {
                let q = add(format!("adapter.head{l}.query"), cfg.window, cfg.head_dim, cfg.window, true);
                let k = add(format!("adapter.head{l}.key"), cfg.window, cfg.head_dim, cfg.window, true);
                (q, k)
            })
            .collect();

        let k = cfg.diffusion_order;
        let gate_in = 2 * k * (2 + cfg.d_state);
        let mut direction = |dir: &str| {
            let mut mpnn = |name: &str, out: usize| MpnnIds {
                theta: add(format!("{dir}.{name}.theta"), gate_in, out, gate_in, false),
                bias: add(format!("{dir}.{name}.bias"), 1, out, gate_in, false),
            };
            let reset = mpnn("reset", cfg.d_state);
            let update = mpnn("update", cfg.d_state);
            let candidate = mpnn("candidate", cfg.d_state);
            let spatial = mpnn("spatial", cfg.d_spatial);
            let second_in = cfg.d_spatial + cfg.d_state;
            DirectionIds {
                reset,
                update,
                candidate,
                spatial,
                first_weight: add(format!("{dir}.first.weight"), cfg.d_state, 1, cfg.d_state, false),
                first_bias: add(format!("{dir}.first.bias"), 1, 1, cfg.d_state, false),
                second_weight: add(format!("{dir}.second.weight"), second_in, 1, second_in, false),
                second_bias: add(format!("{dir}.second.bias"), 1, 1, second_in, false),
            }
        };
        let forward = direction("forward");
        let backward = direction("backward");

        let fusion_in = 2 * (cfg.d_spatial + cfg.d_state);
        let fusion = FusionIds {
            hidden_weight: add("fusion.hidden.weight".into(), fusion_in, cfg.fusion_hidden, fusion_in, false),
            hidden_bias: add("fusion.hidden.bias".into(), 1, cfg.fusion_hidden, fusion_in, false),
            out_weight: add("fusion.output.weight".into(), cfg.fusion_hidden, 1, cfg.fusion_hidden, false),
            out_bias: add("fusion.output.bias".into(), 1, 1, cfg.fusion_hidden, false),
        };
        Ok(Self {
            heads,
            forward,
            backward,
            fusion,
            specs,
        })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// Ordered named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor2>,
}

impl ParamStore {
    pub fn new(names: Vec<String>, tensors: Vec<Tensor2>) -> Result<Self> {
        if names.len() != tensors.len() {
            return Err(Error::Contract("parameter names and tensors differ in count".into()));
        }
        Ok(Self { names, tensors })
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization in layout order.
    pub fn init(layout: &Layout, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let tensors = layout
            .specs
            .iter()
            .map(|s| {
                let bound = 1.0 / (s.fan_in.max(1) as f64).sqrt();
                Tensor2::from_fn(s.rows, s.cols, |_, _| rng.uniform_range(-bound, bound))
            })
            .collect();
        Self {
            names: layout.specs.iter().map(|s| s.name.clone()).collect(),
            tensors,
        }
    }

    pub fn zeros(layout: &Layout) -> Self {
        Self {
            names: layout.specs.iter().map(|s| s.name.clone()).collect(),
            tensors: layout.specs.iter().map(|s| Tensor2::zeros(s.rows, s.cols)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.tensors[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Tensor2) -> Result<()> {
        let cur = &self.tensors[id.0];
        if cur.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set parameter",
                left: cur.shape(),
                right: value.shape(),
            });
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor2] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor2] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor2::len).sum()
    }

    /// Concatenation of every tensor's row-major data in layout order.
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`pack`](Self::pack).
    pub fn unpack(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(Error::Contract(format!(
                "flat parameter vector has {} values, expected {}",
                flat.len(),
                self.count()
            )));
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Checks names and shapes against a layout.
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if self.len() != layout.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameter blocks, configuration expects {}",
                self.len(),
                layout.len()
            )));
        }
        for ((name, t), spec) in self.names.iter().zip(&self.tensors).zip(&layout.specs) {
            if *name != spec.name {
                return Err(Error::Checkpoint(format!(
                    "block `{name}` found where `{}` was expected",
                    spec.name
                )));
            }
            if t.shape() != (spec.rows, spec.cols) {
                return Err(Error::Checkpoint(format!(
                    "block `{name}` has shape {}x{}, configuration expects {}x{}",
                    t.rows(),
                    t.cols(),
                    spec.rows,
                    spec.cols
                )));
            }
        }
        Ok(())
    }
}

/// Parameter totals split into the recurrent core and the attention adapter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParameterCount {
    pub core: usize,
    pub adapter: usize,
    pub overhead_pct: f64,
}

pub fn count_parameters(layout: &Layout) -> ParameterCount {
    let (mut core, mut adapter) = (0, 0);
    for s in &layout.specs {
        if s.adapter {
            adapter += s.rows * s.cols;
        } else {
            core += s.rows * s.cols;
        }
    }
    ParameterCount {
        core,
        adapter,
        overhead_pct: 100.0 * adapter as f64 / core as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(window: usize, heads: usize, head_dim: usize, d: usize) -> ModelConfig {
        ModelConfig {
            nodes: 4,
            window,
            heads,
            head_dim,
            d_state: d,
            d_spatial: d,
            diffusion_order: 2,
            fusion_hidden: d,
        }
    }

    #[test]
    fn adapter_count_examples() {
        let c = count_parameters(&Layout::new(&cfg(128, 2, 32, 8)).unwrap());
        assert_eq!(c.adapter, 16384);
        let c = count_parameters(&Layout::new(&cfg(256, 2, 32, 8)).unwrap());
        assert_eq!(c.adapter, 32768);
        let c = count_parameters(&Layout::new(&cfg(256, 0, 32, 8)).unwrap());
        assert_eq!(c.adapter, 0);
        assert_eq!(c.overhead_pct, 0.0);
    }

    #[test]
    fn core_count_matches_closed_form() {
        // Per direction: four layers of (4(d+2)d + d), two readouts (3d + 2).
        // Fusion: 4d*d + d + d + 1.
        for d in [1, 3, 8, 64] {
            let c = count_parameters(&Layout::new(&cfg(16, 1, 4, d)).unwrap());
            assert_eq!(c.core, 36 * d * d + 80 * d + 5, "d = {d}");
        }
    }

    #[test]
    fn count_is_sum_of_tensor_sizes() {
        let layout = Layout::new(&cfg(8, 2, 3, 5)).unwrap();
        let store = ParamStore::init(&layout, 1);
        let c = count_parameters(&layout);
        assert_eq!(store.count(), c.core + c.adapter);
    }

    #[test]
    fn init_is_bounded_by_fan_in() {
        let layout = Layout::new(&cfg(8, 1, 3, 5)).unwrap();
        let store = ParamStore::init(&layout, 3);
        for (t, s) in store.tensors().iter().zip(&layout.specs) {
            let b = 1.0 / (s.fan_in as f64).sqrt();
            assert!(t.data().iter().all(|v| v.abs() <= b), "{}", s.name);
        }
        assert_eq!(store, ParamStore::init(&layout, 3));
        assert_ne!(store, ParamStore::init(&layout, 4));
    }

    #[test]
    fn validate_rejects_bad_configs() {
        assert!(cfg(8, 1, 0, 4).validate().is_err());
        assert!(cfg(8, 0, 0, 4).validate().is_ok());
        assert!(cfg(0, 1, 2, 4).validate().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let c = cfg(24, 3, 7, 9);
        let back: ModelConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<ModelConfig>("nodes = 3\nbogus = 1").is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_identity(seed in any::<u64>(), heads in 0usize..3, d in 1usize..5) {
            let layout = Layout::new(&cfg(6, heads, 2, d)).unwrap();
            let store = ParamStore::init(&layout, seed);
            let mut other = ParamStore::zeros(&layout);
            other.unpack(&store.pack()).unwrap();
            prop_assert_eq!(&other, &store);
            prop_assert!(other.unpack(&[0.0]).is_err());
        }
    }
}
