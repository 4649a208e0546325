//! The conditional sequence VAE: a stacked-LSTM encoder producing a Gaussian
//! posterior over the latent vector, and a stacked-LSTM decoder predicting
//! the five tuple components of the next DFS-code row.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::dfs::{OneHotSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::features::ConditionVector;

/// Where the condition vector enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSpots {
    /// Concatenated to every encoder input row before embedding.
    pub on_encoder_input: bool,
    /// Concatenated to the SOS projection input and every decoder input row.
    pub on_decoder_input: bool,
    /// Projected into the decoder's initial hidden state.
    pub on_decoder_hidden_init: bool,
}

impl ConditionSpots {
    pub const ALL: ConditionSpots = ConditionSpots {
        on_encoder_input: true,
        on_decoder_input: true,
        on_decoder_hidden_init: true,
    };

    pub const NONE: ConditionSpots = ConditionSpots {
        on_encoder_input: false,
        on_decoder_input: false,
        on_decoder_hidden_init: false,
    };

    /// Parses a comma list of `e`, `d`, `h` (any subset; empty for none).
    pub fn parse(s: &str) -> Result<Self> {
        let mut spots = ConditionSpots::NONE;
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "e" => spots.on_encoder_input = true,
                "d" => spots.on_decoder_input = true,
                "h" => spots.on_decoder_hidden_init = true,
                other => return Err(Error::Config(format!("unknown condition spot {other:?}"))),
            }
        }
        Ok(spots)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.on_encoder_input {
            parts.push("e");
        }
        if self.on_decoder_input {
            parts.push("d");
        }
        if self.on_decoder_hidden_init {
            parts.push("h");
        }
        parts.join(",")
    }
}

impl Default for ConditionSpots {
    fn default() -> Self {
        ConditionSpots::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub enc_layers: usize,
    pub enc_hidden: usize,
    pub enc_embed: usize,
    pub latent_dim: usize,
    pub dec_layers: usize,
    pub dec_hidden: usize,
    pub dec_embed: usize,
    /// Width of the SOS vector; it stands in for an embedded row, so it must
    /// equal `dec_embed`.
    pub sos_dim: usize,
    pub beta: f64,
    pub condition_dim: usize,
    pub spots: ConditionSpots,
    pub vocab: Vocabulary,
}

impl HyperParams {
    /// Full-size network for a given alphabet.
    pub fn full(vocab: Vocabulary) -> Self {
        HyperParams {
            enc_layers: 2,
            enc_hidden: 223,
            enc_embed: 227,
            latent_dim: 10,
            dec_layers: 3,
            dec_hidden: 250,
            dec_embed: 250,
            sos_dim: 250,
            beta: 3.0,
            condition_dim: 10,
            spots: ConditionSpots::ALL,
            vocab,
        }
    }

    /// Same topology with every width set to `hidden` and the given latent size.
    pub fn desk(vocab: Vocabulary, hidden: usize, latent_dim: usize) -> Self {
        HyperParams {
            enc_hidden: hidden,
            enc_embed: hidden,
            latent_dim,
            dec_hidden: hidden,
            dec_embed: hidden,
            sos_dim: hidden,
            ..HyperParams::full(vocab)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("enc_layers", self.enc_layers),
            ("enc_hidden", self.enc_hidden),
            ("enc_embed", self.enc_embed),
            ("latent_dim", self.latent_dim),
            ("dec_layers", self.dec_layers),
            ("dec_hidden", self.dec_hidden),
            ("dec_embed", self.dec_embed),
            ("sos_dim", self.sos_dim),
            ("condition_dim", self.condition_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.sos_dim != self.dec_embed {
            return Err(Error::Config(format!(
                "sos_dim ({}) must equal dec_embed ({})",
                self.sos_dim, self.dec_embed
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct DenseIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct LstmIds {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    enc_emb: DenseIds,
    enc: Vec<LstmIds>,
    mu: DenseIds,
    log_var: DenseIds,
    dec_sos: DenseIds,
    dec_init: Option<DenseIds>,
    dec_emb: DenseIds,
    dec: Vec<LstmIds>,
    heads: [DenseIds; 5],
}

const HEAD_NAMES: [&str; 5] = ["t_u", "t_v", "l_u", "l_e", "l_v"];

enum Init<'a> {
    Zeros,
    Uniform(&'a mut ChaCha8Rng),
}

impl Init<'_> {
    fn matrix(&mut self, rows: usize, cols: usize) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(vec![rows, cols]),
            Init::Uniform(rng) => Tensor::uniform(vec![rows, cols], 1.0 / (cols as f64).sqrt(), *rng),
        }
    }
}

fn add_dense(store: &mut ParamStore, init: &mut Init<'_>, name: &str, out: usize, inp: usize) -> DenseIds {
    DenseIds {
        w: store.add(format!("{name}.weight"), init.matrix(out, inp)),
        b: store.add(format!("{name}.bias"), Tensor::zeros(vec![out])),
    }
}

fn add_lstm(
    store: &mut ParamStore,
    init: &mut Init<'_>,
    name: &str,
    layers: usize,
    input: usize,
    hidden: usize,
) -> Vec<LstmIds> {
    (0..layers)
        .map(|l| {
            let inp = if l == 0 { input } else { hidden };
            let w_ih = store.add(format!("{name}.{l}.w_ih"), init.matrix(4 * hidden, inp));
            let w_hh = store.add(format!("{name}.{l}.w_hh"), init.matrix(4 * hidden, hidden));
            let mut bias = Tensor::zeros(vec![4 * hidden]);
            if matches!(init, Init::Uniform(_)) {
                bias.data[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
            }
            let b = store.add(format!("{name}.{l}.bias"), bias);
            LstmIds { w_ih, w_hh, b }
        })
        .collect()
}

impl Layout {
    fn build(hp: &HyperParams, store: &mut ParamStore, init: &mut Init<'_>) -> Layout {
        let k = hp.vocab.width();
        let cd = hp.condition_dim;
        let s = hp.spots;
        let enc_in = k + if s.on_encoder_input { cd } else { 0 };
        let enc_emb = add_dense(store, init, "enc.embed", hp.enc_embed, enc_in);
        let enc = add_lstm(store, init, "enc.lstm", hp.enc_layers, hp.enc_embed, hp.enc_hidden);
        let mu = add_dense(store, init, "enc.mu", hp.latent_dim, hp.enc_hidden);
        let log_var = add_dense(store, init, "enc.log_var", hp.latent_dim, hp.enc_hidden);
        let dec_cond = if s.on_decoder_input { cd } else { 0 };
        let dec_sos = add_dense(store, init, "dec.sos", hp.sos_dim, hp.latent_dim + dec_cond);
        let dec_init = s
            .on_decoder_hidden_init
            .then(|| add_dense(store, init, "dec.init", hp.dec_hidden, cd));
        let dec_emb = add_dense(store, init, "dec.embed", hp.dec_embed, k);
        let dec_in = hp.dec_embed + hp.latent_dim + dec_cond;
        let dec = add_lstm(store, init, "dec.lstm", hp.dec_layers, dec_in, hp.dec_hidden);
        let sizes = hp.vocab.sizes();
        let heads = std::array::from_fn(|c| {
            add_dense(store, init, &format!("dec.head.{}", HEAD_NAMES[c]), sizes[c], hp.dec_hidden)
        });
        Layout {
            enc_emb,
            enc,
            mu,
            log_var,
            dec_sos,
            dec_init,
            dec_emb,
            dec,
            heads,
        }
    }
}

/// Predicted categorical distributions for one sequence position.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub xi: [Vec<f64>; 5],
}

/// On-tape decoder recurrent state.
pub struct DecoderState {
    h: Vec<Var>,
    c: Vec<Var>,
    z: Var,
    cond: Option<Var>,
}

impl DecoderState {
    pub fn top(&self) -> Var {
        *self.h.last().expect("decoder has at least one layer")
    }
}

/// Loss terms of one example recorded on a tape.
pub struct ExampleLoss {
    pub total: Var,
    pub kl: Var,
    pub recon: Var,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub hp: HyperParams,
    pub params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Uniform `±1/√fan_in` weights, zero biases, forget-gate biases at one.
    pub fn new(hp: HyperParams, seed: u64) -> Result<Model> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layout = Layout::build(&hp, &mut params, &mut Init::Uniform(&mut rng));
        Ok(Model { hp, params, layout })
    }

    /// Every parameter zero.
    pub fn zeros(hp: HyperParams) -> Result<Model> {
        hp.validate()?;
        let mut params = ParamStore::new();
        let layout = Layout::build(&hp, &mut params, &mut Init::Zeros);
        Ok(Model { hp, params, layout })
    }

    /// Rebuilds the layout for `hp` and takes parameter values from `params`,
    /// which must hold exactly the expected names and shapes.
    pub fn from_params(hp: HyperParams, params: ParamStore) -> Result<Model> {
        let mut model = Model::zeros(hp)?;
        if params.len() != model.params.len() {
            return Err(Error::Incompatible(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for id in model.params.ids() {
            let name = model.params.name(id).to_string();
            let src = params
                .find(&name)
                .ok_or_else(|| Error::Incompatible(format!("missing parameter {name}")))?;
            let t = params.get(src);
            if t.shape != model.params.get(id).shape {
                return Err(Error::Incompatible(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape,
                    model.params.get(id).shape
                )));
            }
            *model.params.get_mut(id) = t.clone();
        }
        Ok(model)
    }

    fn check_inputs(&self, seq: &OneHotSequence, cond: &ConditionVector) -> Result<()> {
        if seq.vocab != self.hp.vocab {
            return Err(Error::shape(
                "model",
                format!("sequence vocabulary {:?} vs model {:?}", seq.vocab, self.hp.vocab),
            ));
        }
        if cond.dim != self.hp.condition_dim {
            return Err(Error::shape(
                "model",
                format!("condition dim {} vs model {}", cond.dim, self.hp.condition_dim),
            ));
        }
        if seq.is_empty() {
            return Err(Error::shape("model", "empty sequence"));
        }
        Ok(())
    }

    fn dense(&self, tape: &mut Tape<'_>, ids: DenseIds, x: Var) -> Result<Var> {
        let (w, b) = (tape.param(ids.w), tape.param(ids.b));
        tape.dense(w, b, x)
    }

    fn lstm_stack(
        &self,
        tape: &mut Tape<'_>,
        layers: &[LstmIds],
        h: &mut [Var],
        c: &mut [Var],
        x: Var,
    ) -> Result<()> {
        let mut input = x;
        for (l, ids) in layers.iter().enumerate() {
            let (w_ih, w_hh, b) = (tape.param(ids.w_ih), tape.param(ids.w_hh), tape.param(ids.b));
            let (nh, nc) = tape.lstm_cell(w_ih, w_hh, b, h[l], c[l], input)?;
            h[l] = nh;
            c[l] = nc;
            input = nh;
        }
        Ok(())
    }

    fn dense_rows(&self, tape: &mut Tape<'_>, ids: DenseIds, x: Var) -> Result<Var> {
        let (w, b) = (tape.param(ids.w), tape.param(ids.b));
        tape.dense_rows(w, b, x)
    }

    fn lstm_layers(&self, tape: &mut Tape<'_>, layers: &[LstmIds], h0: Var, c0: Var, x: Var) -> Result<Var> {
        let mut input = x;
        for ids in layers {
            let (w_ih, w_hh, b) = (tape.param(ids.w_ih), tape.param(ids.w_hh), tape.param(ids.b));
            input = tape.lstm_seq(w_ih, w_hh, b, h0, c0, input)?;
        }
        Ok(input)
    }

    /// Rows `0..rows` of the one-hot sequence, each optionally followed by
    /// the condition values, as a constant matrix.
    fn input_matrix(&self, tape: &mut Tape<'_>, seq: &OneHotSequence, rows: usize, cond: Option<&[f64]>) -> Var {
        let width = seq.width() + cond.map_or(0, <[f64]>::len);
        let mut data = Vec::with_capacity(rows * width);
        for j in 0..rows {
            data.extend(seq.dense_row(j));
            if let Some(c) = cond {
                data.extend_from_slice(c);
            }
        }
        tape.input(Tensor {
            shape: vec![rows, width],
            data,
        })
    }

    /// Encoder forward on a tape; returns `(mu, log_var)`.
    pub fn encode_on(
        &self,
        tape: &mut Tape<'_>,
        seq: &OneHotSequence,
        cond: &ConditionVector,
    ) -> Result<(Var, Var)> {
        self.check_inputs(seq, cond)?;
        let cond_vals = cond.values();
        let cond_in = self.hp.spots.on_encoder_input.then_some(cond_vals.as_slice());
        let x = self.input_matrix(tape, seq, seq.len(), cond_in);
        let e = self.dense_rows(tape, self.layout.enc_emb, x)?;
        let zero = tape.input_vec(vec![0.0; self.hp.enc_hidden]);
        let hs = self.lstm_layers(tape, &self.layout.enc, zero, zero, e)?;
        let hd = self.hp.enc_hidden;
        let top = tape.slice(hs, (seq.len() - 1) * hd, hd)?;
        let mu = self.dense(tape, self.layout.mu, top)?;
        let log_var = self.dense(tape, self.layout.log_var, top)?;
        Ok((mu, log_var))
    }

    /// Posterior mean and log-variance for a sequence.
    pub fn encode(&self, seq: &OneHotSequence, cond: &ConditionVector) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new(&self.params);
        let (mu, lv) = self.encode_on(&mut tape, seq, cond)?;
        Ok((tape.value(mu).to_vec(), tape.value(lv).to_vec()))
    }

    /// Runs the SOS step: the decoder state whose top hidden vector predicts
    /// the first row.
    pub fn decoder_start(&self, tape: &mut Tape<'_>, z: Var, cond: &ConditionVector) -> Result<DecoderState> {
        if tape.shape(z) != [self.hp.latent_dim] {
            return Err(Error::shape(
                "decoder",
                format!("latent {:?} vs latent_dim {}", tape.shape(z), self.hp.latent_dim),
            ));
        }
        if cond.dim != self.hp.condition_dim {
            return Err(Error::shape(
                "decoder",
                format!("condition dim {} vs model {}", cond.dim, self.hp.condition_dim),
            ));
        }
        let s = self.hp.spots;
        let cond_var = s.on_decoder_input.then(|| tape.input_vec(cond.values()));
        let sos_in = match cond_var {
            Some(cv) => tape.concat(&[z, cv])?,
            None => z,
        };
        let sos = self.dense(tape, self.layout.dec_sos, sos_in)?;
        let hd = self.hp.dec_hidden;
        let zero = tape.input_vec(vec![0.0; hd]);
        let h0 = match self.layout.dec_init {
            Some(ids) => {
                let cv = tape.input_vec(cond.values());
                self.dense(tape, ids, cv)?
            }
            None => zero,
        };
        let mut state = DecoderState {
            h: vec![h0; self.hp.dec_layers],
            c: vec![zero; self.hp.dec_layers],
            z,
            cond: cond_var,
        };
        self.decoder_feed(tape, &mut state, sos)?;
        Ok(state)
    }

    fn decoder_feed(&self, tape: &mut Tape<'_>, state: &mut DecoderState, embedded: Var) -> Result<()> {
        let x = match state.cond {
            Some(cv) => tape.concat(&[embedded, state.z, cv])?,
            None => tape.concat(&[embedded, state.z])?,
        };
        self.lstm_stack(tape, &self.layout.dec, &mut state.h, &mut state.c, x)
    }

    /// Feeds one dense one-hot row into the decoder.
    pub fn decoder_advance(&self, tape: &mut Tape<'_>, state: &mut DecoderState, row: Vec<f64>) -> Result<()> {
        let x = tape.input_vec(row);
        let e = self.dense(tape, self.layout.dec_emb, x)?;
        self.decoder_feed(tape, state, e)
    }

    /// Softmax distributions of the five heads at the current state.
    pub fn decoder_heads(&self, tape: &mut Tape<'_>, state: &DecoderState) -> Result<[Var; 5]> {
        let top = state.top();
        let mut out = [top; 5];
        for (c, ids) in self.layout.heads.iter().enumerate() {
            let logits = self.dense(tape, *ids, top)?;
            out[c] = tape.softmax(logits)?;
        }
        Ok(out)
    }

    /// Teacher-forced decoder on a tape. Returns the five head
    /// distributions as `[T, alphabet]` matrices, row `j` predicting row `j`
    /// of `seq` from the SOS vector and rows `0..j`.
    pub fn decode_teacher_forced_on(
        &self,
        tape: &mut Tape<'_>,
        seq: &OneHotSequence,
        z: Var,
        cond: &ConditionVector,
    ) -> Result<[Var; 5]> {
        self.check_inputs(seq, cond)?;
        if tape.shape(z) != [self.hp.latent_dim] {
            return Err(Error::shape(
                "decoder",
                format!("latent {:?} vs latent_dim {}", tape.shape(z), self.hp.latent_dim),
            ));
        }
        let t_len = seq.len();
        let s = self.hp.spots;
        let cond_var = s.on_decoder_input.then(|| tape.input_vec(cond.values()));
        let sos_in = match cond_var {
            Some(cv) => tape.concat(&[z, cv])?,
            None => z,
        };
        let sos = self.dense(tape, self.layout.dec_sos, sos_in)?;
        let embedded = if t_len > 1 {
            let x = self.input_matrix(tape, seq, t_len - 1, None);
            let rows = self.dense_rows(tape, self.layout.dec_emb, x)?;
            tape.concat(&[sos, rows])?
        } else {
            sos
        };
        let embedded = tape.reshape(embedded, vec![t_len, self.hp.dec_embed])?;
        let x = match cond_var {
            Some(cv) => tape.hcat(&[embedded, z, cv])?,
            None => tape.hcat(&[embedded, z])?,
        };
        let zero = tape.input_vec(vec![0.0; self.hp.dec_hidden]);
        let h0 = match self.layout.dec_init {
            Some(ids) => {
                let cv = tape.input_vec(cond.values());
                self.dense(tape, ids, cv)?
            }
            None => zero,
        };
        let hs = self.lstm_layers(tape, &self.layout.dec, h0, zero, x)?;
        let mut out = [hs; 5];
        for (c, ids) in self.layout.heads.iter().enumerate() {
            let logits = self.dense_rows(tape, *ids, hs)?;
            out[c] = tape.softmax(logits)?;
        }
        Ok(out)
    }

    pub fn decode_teacher_forced(
        &self,
        seq: &OneHotSequence,
        z: &[f64],
        cond: &ConditionVector,
    ) -> Result<Vec<StepDistribution>> {
        let mut tape = Tape::new(&self.params);
        let zv = tape.input_vec(z.to_vec());
        let heads = self.decode_teacher_forced_on(&mut tape, seq, zv, cond)?;
        let sizes = self.hp.vocab.sizes();
        Ok((0..seq.len())
            .map(|j| StepDistribution {
                xi: std::array::from_fn(|c| tape.value(heads[c])[j * sizes[c]..(j + 1) * sizes[c]].to_vec()),
            })
            .collect())
    }

    /// Records `β·KL + reconstruction` for one example. With `noise` the
    /// latent is `mu + exp(log_var/2)·noise`; without it the latent is `mu`.
    pub fn example_loss(
        &self,
        tape: &mut Tape<'_>,
        seq: &OneHotSequence,
        cond: &ConditionVector,
        noise: Option<&[f64]>,
    ) -> Result<ExampleLoss> {
        let (mu, log_var) = self.encode_on(tape, seq, cond)?;
        let z = match noise {
            Some(eps) => {
                let eps = tape.input_vec(eps.to_vec());
                gaussian_reparam(tape, mu, log_var, eps)?
            }
            None => mu,
        };
        let kl = kl_on(tape, mu, log_var)?;
        let heads = self.decode_teacher_forced_on(tape, seq, z, cond)?;
        let recon = reconstruction_on(tape, &heads, seq)?;
        let weighted = tape.scale(kl, self.hp.beta);
        let total = tape.add(weighted, recon)?;
        Ok(ExampleLoss { total, kl, recon })
    }
}

/// `z = mu + exp(0.5·log_var) ⊙ noise` on the tape.
pub fn gaussian_reparam(tape: &mut Tape<'_>, mu: Var, log_var: Var, noise: Var) -> Result<Var> {
    let half = tape.scale(log_var, 0.5);
    let sigma = tape.exp(half);
    let spread = tape.mul(sigma, noise)?;
    tape.add(mu, spread)
}

/// `KL(N(mu, exp(log_var)) ‖ N(0, I)) = −½ Σ (1 + log_var − mu² − exp(log_var))`
/// on the tape.
pub fn kl_on(tape: &mut Tape<'_>, mu: Var, log_var: Var) -> Result<Var> {
    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(log_var);
    let a = tape.sub(log_var, mu2)?;
    let b = tape.sub(a, var)?;
    let c = tape.offset(b, 1.0);
    let s = tape.sum(c);
    Ok(tape.scale(s, -0.5))
}

/// Mean over positions of the summed component cross-entropies, on the
/// tape, for head matrices from [`Model::decode_teacher_forced_on`].
pub fn reconstruction_on(tape: &mut Tape<'_>, heads: &[Var; 5], target: &OneHotSequence) -> Result<Var> {
    let t_len = target.len();
    if t_len == 0 || tape.shape(heads[0]).first() != Some(&t_len) {
        return Err(Error::shape(
            "reconstruction_loss",
            format!("{:?} predictions for {t_len} targets", tape.shape(heads[0])),
        ));
    }
    let mut terms = [heads[0]; 5];
    for c in 0..5 {
        let targets: Vec<usize> = target.rows.iter().map(|r| r[c]).collect();
        terms[c] = tape.nll_rows(heads[c], &targets)?;
    }
    let total = tape.add_n(&terms)?;
    Ok(tape.scale(total, 1.0 / t_len as f64))
}

/// KL divergence of `N(mu, exp(log_var))` from the standard normal.
pub fn kl_loss(mu: &[f64], log_var: &[f64]) -> Result<f64> {
    if mu.len() != log_var.len() {
        return Err(Error::shape("kl_loss", format!("{} vs {}", mu.len(), log_var.len())));
    }
    Ok(-0.5
        * mu
            .iter()
            .zip(log_var)
            .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
            .sum::<f64>())
}

/// Mean over positions of `Σ_c −ln ξ_c[target_c]`, probabilities floored at
/// `1e-12`.
pub fn reconstruction_loss(pred: &[StepDistribution], target: &OneHotSequence) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(
            "reconstruction_loss",
            format!("{} predictions for {} targets", pred.len(), target.len()),
        ));
    }
    let mut total = 0.0;
    for (p, row) in pred.iter().zip(&target.rows) {
        for c in 0..5 {
            let prob = *p.xi[c].get(row[c]).ok_or_else(|| {
                Error::shape("reconstruction_loss", format!("target {} outside head {c}", row[c]))
            })?;
            total -= prob.max(crate::autodiff::PROB_FLOOR).ln();
        }
    }
    Ok(total / pred.len() as f64)
}

pub fn total_loss(kl: f64, recon: f64, beta: f64) -> f64 {
    beta * kl + recon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfs::{encode_min_dfs, to_one_hot, DfsCode, FiveTuple};
    use crate::features::build_condition_vector;
    use crate::graph::Graph;

    fn tiny_vocab() -> Vocabulary {
        Vocabulary {
            t_size: 4,
            l_size: 4,
            e_size: 2,
        }
    }

    fn tiny_hp() -> HyperParams {
        HyperParams {
            enc_layers: 2,
            enc_hidden: 6,
            enc_embed: 5,
            latent_dim: 3,
            dec_layers: 2,
            dec_hidden: 6,
            dec_embed: 5,
            sos_dim: 5,
            beta: 3.0,
            condition_dim: 2,
            spots: ConditionSpots::ALL,
            vocab: tiny_vocab(),
        }
    }

    fn triangle_seq() -> OneHotSequence {
        let g = Graph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        to_one_hot(&encode_min_dfs(&g).unwrap(), &tiny_vocab()).unwrap()
    }

    #[test]
    fn zero_model_is_uniform_and_centered() {
        let m = Model::zeros(tiny_hp()).unwrap();
        let cond = build_condition_vector(1.0, 2, 1).unwrap();
        let seq = triangle_seq();
        let (mu, lv) = m.encode(&seq, &cond).unwrap();
        assert!(mu.iter().chain(&lv).all(|&x| x == 0.0));
        assert_eq!(kl_loss(&mu, &lv).unwrap(), 0.0);
        let steps = m.decode_teacher_forced(&seq, &[0.0; 3], &cond).unwrap();
        assert_eq!(steps.len(), seq.len());
        for s in &steps {
            for (c, size) in tiny_vocab().sizes().iter().enumerate() {
                assert_eq!(s.xi[c].len(), *size);
                for p in &s.xi[c] {
                    assert!((p - 1.0 / *size as f64).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn heads_are_distributions() {
        let m = Model::new(tiny_hp(), 3).unwrap();
        let cond = build_condition_vector(2.5, 2, 1).unwrap();
        let seq = triangle_seq();
        let steps = m.decode_teacher_forced(&seq, &[0.3, -0.2, 1.0], &cond).unwrap();
        for s in steps {
            for xi in s.xi {
                assert!((xi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(xi.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn encode_is_deterministic_and_sensitive() {
        let m = Model::new(tiny_hp(), 9).unwrap();
        let cond = build_condition_vector(1.0, 2, 1).unwrap();
        let seq = triangle_seq();
        let a = m.encode(&seq, &cond).unwrap();
        assert_eq!(a, m.encode(&seq, &cond).unwrap());
        let mut other = seq.clone();
        other.rows[1] = FiveTuple::new(1, 2, 1, 0, 2).components();
        assert_ne!(a, m.encode(&other, &cond).unwrap());
    }

    #[test]
    fn teacher_forcing_matches_stepwise_decoding() {
        let m = Model::new(tiny_hp(), 4).unwrap();
        let cond = build_condition_vector(0.7, 2, 1).unwrap();
        let seq = triangle_seq();
        let z = [0.5, -0.1, 0.2];
        let forced = m.decode_teacher_forced(&seq, &z, &cond).unwrap();
        let mut tape = Tape::new(&m.params);
        let zv = tape.input_vec(z.to_vec());
        let mut state = m.decoder_start(&mut tape, zv, &cond).unwrap();
        for (j, step) in forced.iter().enumerate() {
            let heads = m.decoder_heads(&mut tape, &state).unwrap();
            for c in 0..5 {
                for (a, b) in tape.value(heads[c]).iter().zip(&step.xi[c]) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            m.decoder_advance(&mut tape, &mut state, seq.dense_row(j)).unwrap();
        }
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_loss(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((kl_loss(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(kl_loss(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn reconstruction_closed_forms() {
        let vocab = tiny_vocab();
        let seq = to_one_hot(&DfsCode::new(vec![FiveTuple::new(0, 1, 1, 0, 1)]), &vocab).unwrap();
        let perfect: Vec<StepDistribution> = seq
            .rows
            .iter()
            .map(|row| StepDistribution {
                xi: std::array::from_fn(|c| {
                    let mut v = vec![0.0; vocab.sizes()[c]];
                    v[row[c]] = 1.0;
                    v
                }),
            })
            .collect();
        assert_eq!(reconstruction_loss(&perfect, &seq).unwrap(), 0.0);
        let uniform: Vec<StepDistribution> = (0..seq.len())
            .map(|_| StepDistribution {
                xi: std::array::from_fn(|c| vec![1.0 / vocab.sizes()[c] as f64; vocab.sizes()[c]]),
            })
            .collect();
        let expect: f64 = vocab.sizes().iter().map(|&a| (a as f64).ln()).sum();
        assert!((reconstruction_loss(&uniform, &seq).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn total_loss_arithmetic() {
        assert_eq!(total_loss(0.5, 2.0, 3.0), 3.5);
        assert_eq!(total_loss(0.7, 2.0, 0.0), 2.0);
        assert_eq!(total_loss(0.0, 1.25, 3.0), 1.25);
    }

    #[test]
    fn spots_parse() {
        assert_eq!(ConditionSpots::parse("e,d,h").unwrap(), ConditionSpots::ALL);
        assert_eq!(ConditionSpots::parse("").unwrap(), ConditionSpots::NONE);
        let s = ConditionSpots::parse("d, h").unwrap();
        assert!(!s.on_encoder_input && s.on_decoder_input && s.on_decoder_hidden_init);
        assert_eq!(s.label(), "d,h");
        assert!(ConditionSpots::parse("x").is_err());
    }

    #[test]
    fn sos_must_match_embedding() {
        let mut hp = tiny_hp();
        hp.sos_dim = 7;
        assert!(Model::new(hp, 0).is_err());
    }
}
