//! The full agent network with shared parameters: encoder, communication,
//! regeneration, per-agent Q head, and the mixer.

use rand::Rng;

use super::config::{RunConfig, Variant};
use crate::comm::AttentionParams;
use crate::encoder::Encoder;
use crate::envs::DecPomdpSpec;
use crate::error::{Error, Result};
use crate::mixer::{AgentQHead, Mixer, MixerKind, QmixMixer};
use crate::numcore::{Graph, ParamSet, Tensor, Var};
use crate::regen::{cross_info_var, RegenBlock};
use crate::ssm::MiniBuffer;

/// Whether agents may read each other during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The Communication Block runs and the cross-information uses the
    /// current communication weight; the Regeneration Block may read peers.
    Centralized,
    /// Weight forced to 0, no Communication Block, no peer windows.
    Decentralized,
}

/// Per-step knobs the schedules hand to a forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepContext {
    pub alpha: f64,
    pub peers: usize,
    pub mode: Mode,
}

impl StepContext {
    pub fn decentralized() -> Self {
        Self {
            alpha: 0.0,
            peers: 0,
            mode: Mode::Decentralized,
        }
    }

    fn communicates(&self) -> bool {
        self.mode == Mode::Centralized
    }

    fn allowed_peers(&self) -> usize {
        match self.mode {
            Mode::Centralized => self.peers,
            Mode::Decentralized => 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// Next hidden state of the encoder, `[rows, N]`.
    pub h: Var,
    /// Next state of the Regeneration Block's encoder.
    pub r: Var,
    /// True information, absent in decentralized mode.
    pub v: Option<Var>,
    pub v_hat: Var,
    /// Per-agent action values, `[rows, n_actions]`.
    pub q: Var,
}

#[derive(Clone, Debug)]
pub struct SicaNetwork {
    pub spec: DecPomdpSpec,
    pub encoder: Encoder,
    pub comm: AttentionParams,
    pub regen: RegenBlock,
    pub head: AgentQHead,
    pub mixer: Mixer,
    window: usize,
    pair_width: usize,
    window_width: usize,
    state_dim: usize,
}

impl SicaNetwork {
    /// Builds the network for `cfg` and registers its parameters in a new set.
    pub fn build(cfg: &RunConfig, spec: DecPomdpSpec, rng: &mut impl Rng) -> Result<(Self, ParamSet)> {
        let mut ps = ParamSet::new();
        let m = &cfg.model;
        let gated = cfg.run.variant == Variant::Ica;
        let pair_width = spec.obs_dim + spec.n_actions;
        // The gating unit splits its input in halves; odd windows get one
        // trailing zero column.
        let raw = m.window * pair_width;
        let window_width = raw + raw % 2;
        let n = spec.n_agents;
        let encoder = Encoder::new(&mut ps, "enc", gated, window_width, m.hidden, m.state_dim, rng)?;
        let comm = AttentionParams::new(&mut ps, "comm", m.state_dim, m.self_weighting, rng)?;
        let regen = RegenBlock::new(
            &mut ps,
            "regen",
            gated,
            window_width,
            n,
            m.hidden,
            m.state_dim,
            m.state_dim,
            rng,
        )?;
        let head = AgentQHead::new(&mut ps, "q", m.state_dim, m.state_dim, m.hidden, spec.n_actions, rng)?;
        let mixer = match cfg.run.mixer {
            MixerKind::Qmix => Mixer::Qmix(QmixMixer::new(
                &mut ps,
                "mix",
                n,
                spec.state_dim,
                m.mixer_embed,
                m.weight_transform,
                rng,
            )?),
            MixerKind::Vdn => Mixer::Vdn,
        };
        let net = Self {
            spec,
            encoder,
            comm,
            regen,
            head,
            mixer,
            window: m.window,
            pair_width,
            window_width,
            state_dim: m.state_dim,
        };
        Ok((net, ps))
    }

    pub fn n_agents(&self) -> usize {
        self.spec.n_agents
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn pair_width(&self) -> usize {
        self.pair_width
    }

    pub fn window_width(&self) -> usize {
        self.window_width
    }

    /// Writes one agent's mini-buffer into a `window_width` slice.
    pub fn encode_window(&self, buf: &MiniBuffer, out: &mut [f64]) {
        let raw = self.window * self.pair_width;
        buf.encode_into(self.pair_width, &mut out[..raw]);
        out[raw..].iter_mut().for_each(|x| *x = 0.0);
    }

    /// Regeneration inputs for `[rows, window_width]` windows of whole teams:
    /// each row gets its own window and the first `allowed` peers.
    pub fn regen_inputs(&self, windows: &Tensor, allowed: usize) -> Tensor {
        let n = self.n_agents();
        let w = self.window_width;
        let rows = windows.rows();
        let mut out = Tensor::zeros(rows, self.regen.input_width());
        for r in 0..rows {
            let team = r - r % n;
            let i = r % n;
            let peers: Vec<&[f64]> = (0..n).filter(|&j| j != i).map(|j| windows.row_slice(team + j)).collect();
            let width = self.regen.input_width();
            let dst = &mut out.data_mut()[r * width..(r + 1) * width];
            self.regen.assemble_input(windows.row_slice(r), &peers, allowed, dst);
        }
        debug_assert_eq!(w * n, self.regen.input_width());
        out
    }

    /// One time step for `rows = teams * n_agents` rows.
    pub fn step(&self, g: &mut Graph, ps: &ParamSet, windows: &Tensor, h_prev: Var, r_prev: Var, ctx: StepContext) -> Result<StepOutput> {
        let n = self.n_agents();
        if windows.rows() % n != 0 || windows.cols() != self.window_width {
            return Err(Error::Shape {
                op: "network_step",
                lhs: windows.shape(),
                rhs: (n, self.window_width),
            });
        }
        let regen_in = self.regen_inputs(windows, ctx.allowed_peers());
        let x = g.input(windows.clone());
        let h = self.encoder.forward(g, ps, x, h_prev)?;
        let ri = g.input(regen_in);
        let (r, v_hat) = self.regen.forward(g, ps, ri, r_prev)?;
        let (v, v_bar) = if ctx.communicates() {
            let info = self.comm.forward(g, ps, h, n)?.info;
            (Some(info), cross_info_var(g, v_hat, info, ctx.alpha)?)
        } else {
            (None, v_hat)
        };
        let q = self.head.forward(g, ps, v_bar, h)?;
        Ok(StepOutput { h, r, v, v_hat, q })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(variant: Variant) -> (SicaNetwork, ParamSet) {
        let mut cfg = RunConfig::default();
        cfg.env = EnvConfig::SignalMatch {
            n_agents: 3,
            n_signals: 3,
        };
        cfg.run.variant = variant;
        cfg.model.state_dim = 8;
        cfg.model.hidden = 16;
        let spec = cfg.env.build().unwrap().spec();
        SicaNetwork::build(&cfg, spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn ica_has_no_s6_parameters() {
        let (_, ps) = build(Variant::Ica);
        assert!(ps.names().all(|n| !n.contains("s6")));
        let (_, ps) = build(Variant::Sica);
        assert!(ps.names().any(|n| n.contains("s6")));
    }

    #[test]
    fn regen_inputs_respect_peer_budget() {
        let (net, _) = build(Variant::Sica);
        let w = net.window_width();
        let mut windows = Tensor::zeros(3, w);
        for r in 0..3 {
            windows.data_mut()[r * w] = (r + 1) as f64;
        }
        let full = net.regen_inputs(&windows, 2);
        // agent 1 reads itself, then agents 0 and 2
        assert_eq!(full.get(1, 0), 2.0);
        assert_eq!(full.get(1, w), 1.0);
        assert_eq!(full.get(1, 2 * w), 3.0);
        let one = net.regen_inputs(&windows, 1);
        assert_eq!(one.get(1, w), 1.0);
        assert_eq!(one.get(1, 2 * w), 0.0);
        let none = net.regen_inputs(&windows, 0);
        assert!(none.row_slice(2)[w..].iter().all(|&x| x == 0.0));
    }
}
