use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NsfConfig;
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::nn::{Graph, Linear, LstmCell, Mlp, ParamId, ParamStore, Tensor, Var};
use crate::trajdata::{LaneGeometry, LineKind, VehicleState};

/// Lower bound of the relaxation time, seconds.
pub const TAU_MIN: f64 = 0.05;
/// Past states fed to the relaxation network besides the current one.
pub const HISTORY: usize = 5;

const POSITION_SCALE: f64 = 25.0;
const VELOCITY_SCALE: f64 = 25.0;
const RELATIVE_SCALE: f64 = 10.0;
const TIME_SCALE: f64 = 5.0;

/// Relaxation-time network (LSTM over recent states plus a goal embedding)
/// and interaction-strength networks for neighbors and lines.
#[derive(Debug, Clone)]
pub struct ForceNets {
    pub config: NsfConfig,
    pub store: ParamStore,
    tau_lstm: LstmCell,
    tau_head: Linear,
    k_vehicle: Mlp,
    k_line: Mlp,
}

/// Interaction strengths as graph nodes (`n x 1` and `lines x 1`).
#[derive(Debug, Clone, Copy)]
pub struct KValues {
    pub vehicle: Option<Var>,
    pub line: Var,
}

impl ForceNets {
    pub fn new(config: NsfConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let h = config.tau_hidden;
        let tau_lstm = LstmCell::new(&mut store, "tau.lstm", 4, h, &mut rng)?;
        let tau_head = Linear::new(&mut store, "tau.head", h + 3, 1, &mut rng)?;
        let k_vehicle = Mlp::new(&mut store, "k.vehicle", &[6, config.k_hidden, 1], true, &mut rng)?;
        let k_line = Mlp::new(&mut store, "k.line", &[5, config.k_hidden, 1], true, &mut rng)?;
        for mlp in [&k_vehicle, &k_line] {
            let bias = mlp.layers.last().expect("two layers").bias;
            *store.value_mut(bias) = Tensor::scalar(config.k_bias_init);
        }
        Ok(Self {
            config,
            store,
            tau_lstm,
            tau_head,
            k_vehicle,
            k_line,
        })
    }

    /// Whether `id` belongs to the relaxation network.
    pub fn is_tau_param(&self, id: ParamId) -> bool {
        self.store.name(id).starts_with("tau.")
    }

    /// Whether `id` belongs to the strength networks.
    pub fn is_k_param(&self, id: ParamId) -> bool {
        self.store.name(id).starts_with("k.")
    }

    /// Zeroes every parameter, including the strength biases.
    pub fn zero(&mut self) {
        let ids: Vec<ParamId> = self.store.ids().collect();
        for id in ids {
            self.store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Relaxation time from the state history (oldest first, current last)
    /// given as `(position, velocity)` nodes.
    pub fn tau_graph(&self, g: &mut Graph, history: &[(Var, Var)], goal: Var, remaining: f64) -> Result<Var> {
        let (p, _) = *history
            .last()
            .ok_or_else(|| Error::InvalidArgument("empty state history".into()))?;
        let mut h = g.input(Tensor::zeros(1, self.config.tau_hidden))?;
        let mut c = h;
        for &(pos, vel) in history {
            let rel = g.sub(pos, goal)?;
            let rel = g.scale(rel, 1.0 / POSITION_SCALE)?;
            let v = g.scale(vel, 1.0 / VELOCITY_SCALE)?;
            let x = g.concat_cols(&[rel, v])?;
            (h, c) = self.tau_lstm.step(g, &self.store, x, h, c)?;
        }
        let to_goal = g.sub(goal, p)?;
        let to_goal = g.scale(to_goal, 1.0 / POSITION_SCALE)?;
        let time = g.input(Tensor::scalar(remaining / TIME_SCALE))?;
        let features = g.concat_cols(&[h, to_goal, time])?;
        let raw = self.tau_head.forward(g, &self.store, features)?;
        let soft = g.softplus(raw)?;
        let floor = g.input(Tensor::scalar(TAU_MIN))?;
        g.add(soft, floor)
    }

    /// Strengths for each neighbor (given as position node and velocity) and
    /// each lane line, all in `(0, a)`.
    pub fn k_graph(
        &self,
        g: &mut Graph,
        p: Var,
        v: Var,
        neighbors: &[(Var, Vec2)],
        lanes: &LaneGeometry,
    ) -> Result<KValues> {
        let a = self.config.a;
        let target = g.scale(v, 1.0 / VELOCITY_SCALE)?;
        let vehicle = if neighbors.is_empty() {
            None
        } else {
            let mut rows = Vec::with_capacity(neighbors.len());
            for &(q, vq) in neighbors {
                let rel = g.sub(q, p)?;
                let rel = g.scale(rel, 1.0 / RELATIVE_SCALE)?;
                let vq = g.input(Tensor::row(&geom::scale(vq, 1.0 / RELATIVE_SCALE)))?;
                let vp = g.scale(v, 1.0 / RELATIVE_SCALE)?;
                let dv = g.sub(vq, vp)?;
                rows.push(g.concat_cols(&[target, rel, dv])?);
            }
            let x = g.concat_rows(&rows)?;
            let raw = self.k_vehicle.forward(g, &self.store, x)?;
            let s = g.sigmoid(raw)?;
            Some(g.scale(s, a)?)
        };
        let y = g.slice_cols(p, 1, 1)?;
        let mut rows = Vec::with_capacity(lanes.lines().len());
        for line in lanes.lines() {
            let offset = g.input(Tensor::scalar(line.offset))?;
            let d = g.sub(y, offset)?;
            let kind = match line.kind {
                LineKind::Center => [1.0, 0.0],
                LineKind::Boundary => [0.0, 1.0],
            };
            let kind = g.input(Tensor::row(&kind))?;
            rows.push(g.concat_cols(&[target, d, kind])?);
        }
        let x = g.concat_rows(&rows)?;
        let raw = self.k_line.forward(g, &self.store, x)?;
        let s = g.sigmoid(raw)?;
        let line = g.scale(s, a)?;
        Ok(KValues { vehicle, line })
    }

    /// Relaxation time for a plain state history (oldest first).
    pub fn tau_network(&self, history: &[VehicleState], goal: Vec2, remaining: f64) -> Result<f64> {
        let mut g = Graph::new();
        let mut nodes = Vec::with_capacity(history.len());
        for s in history {
            nodes.push((g.input(Tensor::row(&s.position))?, g.input(Tensor::row(&s.velocity))?));
        }
        let goal = g.input(Tensor::row(&goal))?;
        let tau = self.tau_graph(&mut g, &nodes, goal, remaining)?;
        Ok(g.scalar(tau))
    }

    /// Strengths for plain states: `(k per neighbor, k per line)`.
    pub fn k_network(
        &self,
        target: &VehicleState,
        neighbors: &[VehicleState],
        lanes: &LaneGeometry,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let p = g.input(Tensor::row(&target.position))?;
        let v = g.input(Tensor::row(&target.velocity))?;
        let mut nodes = Vec::with_capacity(neighbors.len());
        for n in neighbors {
            nodes.push((g.input(Tensor::row(&n.position))?, n.velocity));
        }
        let k = self.k_graph(&mut g, p, v, &nodes, lanes)?;
        let kv = k.vehicle.map(|x| g.value(x).data().to_vec()).unwrap_or_default();
        Ok((kv, g.value(k.line).data().to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn history(rng: &mut ChaCha8Rng) -> Vec<VehicleState> {
        (0..=HISTORY)
            .map(|i| {
                VehicleState::new(
                    [i as f64 * 2.5 - 12.0, rng.gen_range(-0.5..0.5)],
                    [25.0, rng.gen_range(-0.3..0.3)],
                )
            })
            .collect()
    }

    #[test]
    fn zeroed_networks_give_reference_values() {
        let mut nets = ForceNets::new(NsfConfig {
            a: 2.0,
            ..NsfConfig::default()
        })
        .unwrap();
        nets.zero();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tau = nets.tau_network(&history(&mut rng), [100.0, 0.0], 4.0).unwrap();
        assert!((tau - (0.05 + core::f64::consts::LN_2)).abs() < 1e-15);
        assert!((tau - 0.7431).abs() < 1e-4);
        let lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        let target = VehicleState::new([0.0, 5.0], [25.0, 0.0]);
        let (kv, kl) = nets
            .k_network(&target, &[VehicleState::new([10.0, 5.0], [24.0, 0.0])], &lanes)
            .unwrap();
        assert_eq!(kv, alloc::vec![1.0]);
        assert_eq!(kl, alloc::vec![1.0; 4]);
    }

    #[test]
    fn outputs_stay_in_range_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut nets = ForceNets::new(NsfConfig::default()).unwrap();
        let ids: Vec<ParamId> = nets.store.ids().collect();
        for id in ids {
            nets.store
                .value_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-3.0..3.0));
        }
        let lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        for _ in 0..20 {
            let h = history(&mut rng);
            let goal = [rng.gen_range(50.0..150.0), 3.0];
            let tau = nets.tau_network(&h, goal, 2.0).unwrap();
            assert!(tau > 0.0);
            assert_eq!(tau.to_bits(), nets.tau_network(&h, goal, 2.0).unwrap().to_bits());
            let ns: Vec<VehicleState> = (0..3)
                .map(|_| VehicleState::new([rng.gen_range(-40.0..40.0), rng.gen_range(0.0..11.0)], [20.0, 0.0]))
                .collect();
            let (kv, kl) = nets.k_network(&h[HISTORY], &ns, &lanes).unwrap();
            assert!(kv.iter().chain(&kl).all(|k| *k > 0.0 && *k < 5.0));
            let rev: Vec<VehicleState> = ns.iter().rev().copied().collect();
            let (kr, _) = nets.k_network(&h[HISTORY], &rev, &lanes).unwrap();
            assert_eq!(kr, kv.iter().rev().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn default_strengths_start_small() {
        let nets = ForceNets::new(NsfConfig::default()).unwrap();
        let lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        let (_, kl) = nets
            .k_network(&VehicleState::new([0.0, 2.0], [25.0, 0.0]), &[], &lanes)
            .unwrap();
        let expected = 5.0 / (1.0 + libm::exp(3.0));
        assert!(kl.iter().all(|k| (k - expected).abs() < 1e-12));
    }
}
