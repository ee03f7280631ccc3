//! Acceptance suite: prints one `PASS`/`FAIL` line per criterion (1 to 9).
//!
//! Criteria 5 to 8 train full desk-scale models and dominate the runtime
//! (tens of minutes on one core). Two environment variables control a run:
//!
//! * `PGNNIV_ACCEPTANCE_ONLY=1,2,9` evaluates only the listed criteria;
//! * `PGNNIV_ACCEPTANCE_STRICT=1` exits with status 1 when any criterion fails.
//!
//! Without `STRICT` the process exits 0 after printing every verdict, so the
//! workspace test run completes and the verdict lines carry the outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use pgnniv::autodiff::ColumnMix;
use pgnniv::data_gen::{evaluate_fields, point_values, sample_coefficients, Coefficients};
use pgnniv::decoders::{
    fourier_basis, pod_basis, project, snapshot_matrix, spectral_decode, FrozenDecoder, AE_HIDDEN,
};
use pgnniv::metrics::speedup_table;
use pgnniv::networks::mlp::init_mlp;
use pgnniv::networks::{
    build_model_graph, count_parameters, encoder_formula, p_exp_formula, DecoderAttachment,
    ExplanatorySpec, ParamGroup, PredictiveSpec, P_EXP_REFERENCE,
};
use pgnniv::physics_loss::{build_loss, div2d, BatchTargets, Stencils};
use pgnniv::rng::SplitMix64;
use pgnniv::trainer::{run_with_source, RunOutcome};
use pgnniv::{
    Dataset, DecoderKind, Graph, LossWeights, Material, Model, ModelSpec, NodeId, ResidualNodes,
    RunConfig, RunReport, Schedule, Tensor2, TrainMode,
};

const FD_STEP: f64 = 1e-4;
const FD_TOLERANCE: f64 = 1e-4;
const DESK_SEED: u64 = 7;

type Check = dyn Fn(&mut Runs) -> Verdict;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<u32>> = std::env::var("PGNNIV_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("PGNNIV_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |n: u32| only.as_ref().is_none_or(|set| set.contains(&n));

    let mut runs = Runs::default();
    let criteria: [(u32, &str, &Check); 9] = [
        (1, "autodiff matches finite differences", &|_| {
            autodiff_correctness()
        }),
        (2, "manufactured solutions", &|_| manufactured_fidelity()),
        (3, "decoder exactness", &|_| decoder_exactness()),
        (4, "parameter counts", &|_| parameter_counts()),
        (5, "desk-scale training quality", &desk_quality),
        (6, "noise monotonicity", &noise_monotonicity),
        (7, "speed-up direction", &|_| speedup_direction()),
        (8, "transfer-learning contracts", &transfer_contracts),
        (9, "determinism", &|_| determinism()),
    ];
    let mut failed = Vec::new();
    let mut evaluated = 0;
    for (n, title, check) in criteria {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let v = check(&mut runs);
        evaluated += 1;
        if !v.pass {
            failed.push(n);
        }
        println!(
            "criterion {n} {} ({title}, {:.1} s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        std::io::stdout().flush().ok();
    }
    println!(
        "acceptance: {} of {evaluated} criteria passed; failed: {failed:?}",
        evaluated - failed.len()
    );
    if strict && !failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

/// Desk-scale runs shared between criteria, keyed by run name.
#[derive(Default)]
struct Runs {
    done: BTreeMap<String, RunOutcome>,
}

impl Runs {
    fn get(&mut self, config: &RunConfig, source: Option<&Model>) -> &RunOutcome {
        let name = config.run_name();
        if !self.done.contains_key(&name) {
            let out = run_with_source(config, source).unwrap_or_else(|e| panic!("{name}: {e}"));
            let r = &out.report;
            eprintln!(
                "  [run] {name}: median {:.3e}, explanatory {:.3e}, {:.1} s",
                r.predictive.quartiles.q2, r.explanatory_error, r.timing.total_seconds
            );
            self.done.insert(name.clone(), out);
        }
        &self.done[&name]
    }

    fn desk(&mut self, material: Material, mu: f64, decoder: DecoderKind) -> &RunOutcome {
        self.get(&RunConfig::new(material, 100, mu, decoder, DESK_SEED), None)
    }
}

// ---------------------------------------------------------------- criterion 1

fn bind(vals: &[(NodeId, Tensor2)]) -> Vec<(NodeId, &Tensor2)> {
    vals.iter().map(|(id, v)| (*id, v)).collect()
}

/// `max |fd - ad| / max |ad|` over every element of every gradient leaf.
fn fd_deviation(g: &mut Graph, leaves: &[(NodeId, Tensor2)]) -> f64 {
    g.forward(&bind(leaves)).expect("forward");
    let grads = g.backward().expect("backward");
    let mut probe: Vec<(NodeId, Tensor2)> = leaves.to_vec();
    let (mut worst_diff, mut scale) = (0.0_f64, 0.0_f64);
    for k in 0..leaves.len() {
        let Some(ad) = grads.get(&leaves[k].0) else {
            continue;
        };
        for i in 0..ad.len() {
            let x0 = leaves[k].1.data()[i];
            probe[k].1.data_mut()[i] = x0 + FD_STEP;
            let plus = g.forward(&bind(&probe)).expect("forward").item();
            probe[k].1.data_mut()[i] = x0 - FD_STEP;
            let minus = g.forward(&bind(&probe)).expect("forward").item();
            probe[k].1.data_mut()[i] = x0;
            let fd = (plus - minus) / (2.0 * FD_STEP);
            worst_diff = worst_diff.max((fd - ad.data()[i]).abs());
            scale = scale.max(ad.data()[i].abs());
        }
    }
    worst_diff / scale.max(1e-300)
}

struct RandomGraph {
    g: Graph,
    rng: SplitMix64,
    nodes: Vec<(NodeId, (usize, usize))>,
    consumed: Vec<bool>,
    leaves: Vec<(NodeId, Tensor2)>,
}

impl RandomGraph {
    fn new(seed: u64) -> Self {
        Self {
            g: Graph::new(),
            rng: SplitMix64::new(seed),
            nodes: Vec::new(),
            consumed: Vec::new(),
            leaves: Vec::new(),
        }
    }

    fn dim(&mut self) -> usize {
        1 + self.rng.below(5)
    }

    fn push(&mut self, id: NodeId, shape: (usize, usize)) -> usize {
        self.nodes.push((id, shape));
        self.consumed.push(false);
        self.nodes.len() - 1
    }

    fn leaf(&mut self, rows: usize, cols: usize) -> usize {
        let id = self
            .g
            .leaf(&format!("x{}", self.leaves.len()), rows, cols, true);
        let value = Tensor2::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| 0.7 * self.rng.normal()).collect(),
        );
        self.leaves.push((id, value));
        self.push(id, (rows, cols))
    }

    /// An existing node satisfying `ok`, or a fresh leaf of shape `fallback`.
    fn find(&mut self, ok: impl Fn((usize, usize)) -> bool, fallback: (usize, usize)) -> usize {
        let candidates: Vec<usize> = (0..self.nodes.len())
            .filter(|&k| ok(self.nodes[k].1))
            .collect();
        if candidates.is_empty() || self.rng.below(3) == 0 {
            self.leaf(fallback.0, fallback.1)
        } else {
            candidates[self.rng.below(candidates.len())]
        }
    }

    fn indices(&mut self, bound: usize) -> Vec<usize> {
        let len = 1 + self.rng.below(5);
        (0..len).map(|_| self.rng.below(bound)).collect()
    }

    /// Adds one random operation; returns its name.
    fn step(&mut self) -> &'static str {
        let a = self.rng.below(self.nodes.len());
        let (ida, (r, c)) = self.nodes[a];
        self.consumed[a] = true;
        let op = self.rng.below(12);
        let (name, id, shape) = match op {
            0 => {
                let k = self.dim();
                let b = self.find(|s| s.0 == c, (c, k));
                let (idb, (_, kb)) = self.nodes[b];
                self.consumed[b] = true;
                ("matmul", self.g.matmul(ida, idb).unwrap(), (r, kb))
            }
            1..=3 => {
                let b = self.find(|s| s == (r, c), (r, c));
                let idb = self.nodes[b].0;
                self.consumed[b] = true;
                match op {
                    1 => ("add", self.g.add(ida, idb).unwrap(), (r, c)),
                    2 => ("sub", self.g.sub(ida, idb).unwrap(), (r, c)),
                    _ => ("mul", self.g.mul(ida, idb).unwrap(), (r, c)),
                }
            }
            4 => ("tanh", self.g.tanh(ida), (r, c)),
            5 => {
                let f = self.rng.uniform_range(-2.0, 2.0);
                ("scale", self.g.scale(ida, f), (r, c))
            }
            6 => {
                let cols = self.indices(c);
                let n = cols.len();
                (
                    "gather_cols",
                    self.g.gather_cols(ida, cols).unwrap(),
                    (r, n),
                )
            }
            7 => {
                let rows = self.indices(r);
                let n = rows.len();
                (
                    "gather_rows",
                    self.g.gather_rows(ida, rows).unwrap(),
                    (n, c),
                )
            }
            8 => {
                let k = self.dim();
                let b = self.find(|s| s.0 == r, (r, k));
                let (idb, (_, cb)) = self.nodes[b];
                self.consumed[b] = true;
                (
                    "concat_cols",
                    self.g.concat_cols(vec![ida, idb]).unwrap(),
                    (r, c + cb),
                )
            }
            9 => {
                let k = self.dim();
                let b = self.find(|s| s.1 == c, (k, c));
                let (idb, (rb, _)) = self.nodes[b];
                self.consumed[b] = true;
                (
                    "concat_rows",
                    self.g.concat_rows(vec![ida, idb]).unwrap(),
                    (r + rb, c),
                )
            }
            10 => {
                let shape = if self.rng.below(2) == 0 {
                    (r * c, 1)
                } else {
                    (c, r)
                };
                (
                    "reshape",
                    self.g.reshape(ida, shape.0, shape.1).unwrap(),
                    shape,
                )
            }
            _ => {
                let out = self.dim();
                let terms = (0..out)
                    .map(|_| {
                        let k = 1 + self.rng.below(3);
                        (0..k)
                            .map(|_| (self.rng.below(c), self.rng.normal()))
                            .collect()
                    })
                    .collect();
                let mix = Arc::new(ColumnMix::new(c, terms));
                ("column_mix", self.g.column_mix(ida, mix).unwrap(), (r, out))
            }
        };
        self.push(id, shape);
        name
    }

    /// Sums the squared entries of every unconsumed node into a scalar.
    fn finish(&mut self) {
        let sinks: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&k| !self.consumed[k])
            .map(|k| self.nodes[k].0)
            .collect();
        let mut total: Option<NodeId> = None;
        for (k, id) in sinks.into_iter().enumerate() {
            let ss = self.g.sum_squares(id);
            let term = self.g.scale(ss, 1.0 / (1.0 + k as f64));
            total = Some(match total {
                Some(t) => self.g.add(t, term).unwrap(),
                None => term,
            });
        }
    }
}

fn small_model(kind: DecoderKind, m: usize, n: usize) -> Model {
    let spec = ModelSpec {
        predictive: PredictiveSpec::new(m, n, kind),
        explanatory: ExplanatorySpec::default(),
    };
    let attachment = match kind {
        DecoderKind::Baseline => DecoderAttachment::None,
        DecoderKind::Fourier => DecoderAttachment::Linear {
            basis: fourier_basis(m, n).unwrap().basis,
        },
        DecoderKind::Pod => {
            let data = Dataset::generate(Material::Material1, 12, m, 0.0, 3).unwrap();
            let fields: Vec<_> = data.samples.iter().map(|s| s.u.clone()).collect();
            DecoderAttachment::Linear {
                basis: pod_basis(&snapshot_matrix(&fields).unwrap(), n)
                    .unwrap()
                    .modes,
            }
        }
        DecoderKind::Autoencoder => {
            let [h0, h1] = AE_HIDDEN;
            DecoderAttachment::Frozen {
                decoder: FrozenDecoder {
                    m,
                    n,
                    layers: init_mlp(&[n, h1, h0, m * m], &mut SplitMix64::new(31)),
                },
            }
        }
    };
    Model::new(spec, 5, attachment).unwrap()
}

fn autodiff_correctness() -> Verdict {
    let start = Instant::now();
    let mut worst_random = 0.0_f64;
    let mut op_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let random_graphs = 50 - DecoderKind::ALL.len();
    for seed in 0..random_graphs as u64 {
        let mut rg = RandomGraph::new(1000 + seed);
        for _ in 0..1 + rg.rng.below(3) {
            let (r, c) = (rg.dim(), rg.dim());
            rg.leaf(r, c);
        }
        for _ in 0..4 + rg.rng.below(8) {
            *op_counts.entry(rg.step()).or_default() += 1;
        }
        rg.finish();
        let leaves = rg.leaves.clone();
        worst_random = worst_random.max(fd_deviation(&mut rg.g, &leaves));
    }

    let (m, n) = (5, 3);
    let data = Dataset::generate(Material::Material1, 2, m, 0.0, 17).unwrap();
    let inputs = Tensor2::from_rows(&data.samples.iter().map(|s| s.input()).collect::<Vec<_>>());
    let targets = BatchTargets::from_samples(&data.samples).unwrap();
    let stencils = Stencils::new(m).unwrap();
    let mut loss_detail = Vec::new();
    let mut worst_loss = 0.0_f64;
    for kind in DecoderKind::ALL {
        let model = small_model(kind, m, n);
        let mut mg = build_model_graph(&model, &inputs).unwrap();
        build_loss(
            &mut mg.graph,
            mg.u_hat,
            mg.k_hat,
            &targets,
            &stencils,
            &LossWeights::default(),
            ResidualNodes::All,
        )
        .unwrap();
        let leaves: Vec<(NodeId, Tensor2)> = mg
            .param_leaves
            .iter()
            .zip(&model.params)
            .map(|(&id, p)| (id, p.value.clone()))
            .collect();
        let dev = fd_deviation(&mut mg.graph, &leaves);
        worst_loss = worst_loss.max(dev);
        loss_detail.push(format!("{kind} {dev:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_random < FD_TOLERANCE && worst_loss < FD_TOLERANCE && secs < 10.0;
    Verdict::new(
        pass,
        format!(
            "{random_graphs} random graphs worst {worst_random:.2e}; full loss m=5 n=3 D=2 [{}]; limit {FD_TOLERANCE:e}; {secs:.2} s (limit 10 s); ops {op_counts:?}",
            loss_detail.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Flux from hand-derived partial derivatives of each manufactured solution.
fn oracle_flux(material: Material, c: Coefficients, x: f64, y: f64) -> (f64, f64) {
    let s = c.a + c.b * x + c.c * y;
    let (u, ux, uy) = match material {
        Material::Material1 => {
            let u = s.sqrt();
            (u, c.b / (2.0 * u), c.c / (2.0 * u))
        }
        Material::Material2 => (s, c.b, c.c),
    };
    let k = match material {
        Material::Material1 => u * (1.0 - u),
        Material::Material2 => 1.0 / (1.0 + (-5.0 * (u - 2.0)).exp()),
    };
    (-k * ux, -k * uy)
}

fn residual_sup(material: Material, c: Coefficients, m: usize) -> f64 {
    let b = evaluate_fields(material, c, m).unwrap();
    let h = 1.0 / (m - 1) as f64;
    let div = div2d(&b.qx, &b.qy, h).unwrap();
    div.sub(&b.f).max_abs()
}

fn manufactured_fidelity() -> Verdict {
    let (coarse, fine) = (10, 40);
    let h_ratio = ((fine - 1) as f64 / (coarse - 1) as f64).ln();
    let mut pass = true;
    let mut details = Vec::new();
    for (material, seed) in [(Material::Material1, 101), (Material::Material2, 202)] {
        let coeffs = sample_coefficients(100, seed).unwrap();
        let mut identity = 0.0_f64;
        for &c in &coeffs {
            let bundle = evaluate_fields(material, c, coarse).unwrap();
            let grid = bundle.grid();
            for j in 0..coarse {
                for i in 0..coarse {
                    let (x, y) = (grid.coord(i), grid.coord(j));
                    let (qx, qy) = oracle_flux(material, c, x, y);
                    let p = point_values(material, c, x, y).unwrap();
                    identity = identity
                        .max((p.qx - qx).abs())
                        .max((p.qy - qy).abs())
                        .max((bundle.qx.get(j, i) - qx).abs())
                        .max((bundle.qy.get(j, i) - qy).abs());
                }
            }
        }
        let pairs: Vec<(f64, f64)> = coeffs
            .iter()
            .map(|&c| {
                (
                    residual_sup(material, c, coarse),
                    residual_sup(material, c, fine),
                )
            })
            .collect();
        let e_coarse = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
        let e_fine = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        let order = (e_coarse / e_fine).ln() / h_ratio;
        let mut per_triple: Vec<f64> = pairs.iter().map(|(a, b)| (a / b).ln() / h_ratio).collect();
        per_triple.sort_by(f64::total_cmp);
        let ok = identity <= 1e-12 && order >= 1.9;
        pass &= ok;
        details.push(format!(
            "{material} {}: identity {identity:.1e} (limit 1e-12), sup residual {e_coarse:.2e} -> {e_fine:.2e}, order {order:.3} (limit 1.9), per-triple order min {:.3} median {:.3}",
            if ok { "ok" } else { "short" },
            per_triple[0],
            per_triple[per_triple.len() / 2],
        ));
    }
    Verdict::new(pass, details.join("; "))
}

// ---------------------------------------------------------------- criterion 3

fn relative(a: &Tensor2, b: &Tensor2) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm()
}

fn decoder_exactness() -> Verdict {
    let mut rng = SplitMix64::new(404);
    let mut fields: Vec<Tensor2> = Vec::new();
    let m = 10;
    for _ in 0..10 {
        fields.push(Tensor2::from_vec(
            m,
            m,
            (0..m * m).map(|_| rng.normal()).collect(),
        ));
    }
    for material in [Material::Material1, Material::Material2] {
        let ds = Dataset::generate(material, 10, m, 0.05, 9).unwrap();
        fields.extend(ds.samples.into_iter().map(|s| s.u));
    }

    let mut fourier_worst = 0.0_f64;
    for mm in [7, 10] {
        let basis = fourier_basis(mm, mm * mm).unwrap();
        let mut local = SplitMix64::new(mm as u64);
        for k in 0..10 {
            let field = if mm == m {
                fields[k * 2].clone()
            } else {
                Tensor2::from_vec(mm, mm, (0..mm * mm).map(|_| local.normal()).collect())
            };
            let z = project(&field, &basis).unwrap();
            fourier_worst =
                fourier_worst.max(relative(&spectral_decode(&z, &basis).unwrap(), &field));
        }
    }

    let snapshots = snapshot_matrix(&fields).unwrap();
    let rank = fields.len();
    let full = pod_basis(&snapshots, rank).unwrap();
    let mut pod_worst = 0.0_f64;
    for f in &fields {
        let z = project(f, &full.modes).unwrap();
        pod_worst = pod_worst.max(relative(&spectral_decode(&z, &full.modes).unwrap(), f));
    }

    let total = snapshots.frobenius_norm().powi(2);
    let mut energy_worst = 0.0_f64;
    for n in 1..=rank {
        let pod = pod_basis(&snapshots, n).unwrap();
        let projected = snapshots.matmul(&pod.modes).matmul(&pod.modes.transpose());
        let discarded = snapshots.sub(&projected).frobenius_norm().powi(2) / total;
        energy_worst = energy_worst.max((discarded - pod.energy_error).abs());
    }
    let pass = fourier_worst < 1e-9 && pod_worst < 1e-9 && energy_worst < 1e-9;
    Verdict::new(
        pass,
        format!(
            "full Fourier (m=7, 10) worst {fourier_worst:.1e}; full-rank POD ({rank} stored fields) worst {pod_worst:.1e}; truncation vs energy ratio over n=1..{rank} worst {energy_worst:.1e} (limits 1e-9)"
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn parameter_counts() -> Verdict {
    let (m, n) = (10, 10);
    let mut pass = true;
    let mut details = Vec::new();
    for kind in DecoderKind::ALL {
        let model = small_model(kind, m, n);
        let counts = count_parameters(&model.spec.predictive, &model.spec.explanatory);
        let literal_enc = model.group_count(ParamGroup::Encoder);
        let literal_dec = model.group_count(ParamGroup::Decoder);
        let literal_exp = model.group_count(ParamGroup::Explanatory);
        let ok = literal_enc == counts.p_encoding
            && literal_dec == counts.p_decoding_trainable
            && literal_exp == counts.p_exp_formula
            && model.trainable_count() == counts.trainable_total();
        pass &= ok;
        details.push(format!(
            "{kind}: encoder {literal_enc}, decoder {literal_dec}, explanatory {literal_exp}, trainable {}",
            model.trainable_count()
        ));
    }
    let base = count_parameters(
        &PredictiveSpec::new(m, n, DecoderKind::Baseline),
        &ExplanatorySpec::default(),
    );
    let pinned = base.p_encoding == 1940
        && encoder_formula(m, m, n) == 1940
        && base.p_pre == 4370
        && base.p_encoding + base.p_decoding == 4370
        && base.p_exp_formula == 131
        && p_exp_formula(1, 5, &[10], 1) == 131
        && base.p_exp_reference == P_EXP_REFERENCE;
    pass &= pinned;
    details.push(format!(
        "m=10 n=10: encoder {}, P_pre {}, explanatory formula {} (reference count {} reported, not matched)",
        base.p_encoding, base.p_pre, base.p_exp_formula, base.p_exp_reference
    ));
    Verdict::new(pass, details.join("; "))
}

// ---------------------------------------------------------------- criterion 5

fn desk_quality(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for kind in [DecoderKind::Baseline, DecoderKind::Pod] {
        let r = &runs.desk(Material::Material1, 0.0, kind).report;
        let median = r.predictive.quartiles.q2;
        let ok = median <= 5e-2 && r.explanatory_error <= 2e-1;
        pass &= ok;
        details.push(format!(
            "{kind} {}: median {median:.3e} (limit 5e-2), explanatory {:.3e} (limit 2e-1), {} epochs, {:.0} s",
            if ok { "ok" } else { "short" },
            r.explanatory_error,
            r.epochs,
            r.timing.total_seconds
        ));
    }
    Verdict::new(pass, details.join("; "))
}

// ---------------------------------------------------------------- criterion 6

fn noise_monotonicity(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for kind in [DecoderKind::Baseline, DecoderKind::Pod] {
        let clean = runs
            .desk(Material::Material1, 0.0, kind)
            .report
            .predictive
            .quartiles
            .q2;
        let noisy = runs
            .desk(Material::Material1, 0.05, kind)
            .report
            .predictive
            .quartiles
            .q2;
        pass &= noisy >= clean;
        details.push(format!(
            "{kind}: median {clean:.3e} at mu=0, {noisy:.3e} at mu=0.05"
        ));
    }
    Verdict::new(pass, details.join("; "))
}

// ---------------------------------------------------------------- criterion 7

const SPEEDUP_REPS: u64 = 10;

fn speedup_direction() -> Verdict {
    let schedule = Schedule::desk().scaled(0.1);
    let mut reports: Vec<RunReport> = Vec::new();
    for seed in 1..=SPEEDUP_REPS {
        for kind in [
            DecoderKind::Baseline,
            DecoderKind::Fourier,
            DecoderKind::Pod,
        ] {
            let mut config = RunConfig::new(Material::Material1, 100, 0.0, kind, seed);
            config.schedule = schedule;
            let out = run_with_source(&config, None)
                .unwrap_or_else(|e| panic!("{}: {e}", config.run_name()));
            reports.push(out.report);
        }
    }
    let rows = speedup_table(&reports).expect("every embedding run has a baseline twin");
    let mut pass = rows.len() == 2;
    let mut details = vec![format!(
        "{SPEEDUP_REPS} seeds x {} epochs each",
        schedule.total_epochs()
    )];
    for row in &rows {
        let ok = row.rate_mean < 1.0 && row.p_value < 0.05;
        pass &= ok;
        details.push(format!(
            "{}: rate {:.3} +- {:.3}, Mann-Whitney p {:.4} {}",
            row.model, row.rate_mean, row.rate_std, row.p_value, row.stars
        ));
    }
    Verdict::new(pass, details.join("; "))
}

// ---------------------------------------------------------------- criterion 8

fn transfer_contracts(runs: &mut Runs) -> Verdict {
    let source = runs
        .desk(Material::Material1, 0.0, DecoderKind::Baseline)
        .model
        .clone();
    let scratch = runs
        .desk(Material::Material2, 0.0, DecoderKind::Baseline)
        .report
        .clone();
    let mut details = Vec::new();
    let mut pass = true;
    for mode in [TrainMode::TransferFrozenEncoder, TrainMode::FineTune] {
        let mut config = RunConfig::new(
            Material::Material2,
            100,
            0.0,
            DecoderKind::Baseline,
            DESK_SEED,
        );
        config.mode = mode;
        let out = runs.get(&config, Some(&source));
        let r = &out.report;
        let within = r.explanatory_error <= 2.0 * scratch.explanatory_error;
        pass &= within;
        let mut line = format!(
            "{mode:?}: explanatory {:.3e} vs scratch {:.3e} (limit 2x), {:.0} s vs scratch {:.0} s",
            r.explanatory_error,
            scratch.explanatory_error,
            r.timing.total_seconds,
            scratch.timing.total_seconds
        );
        if mode == TrainMode::TransferFrozenEncoder {
            let encoder_kept = source
                .params
                .iter()
                .zip(&out.model.params)
                .filter(|(p, _)| p.group == ParamGroup::Encoder)
                .all(|(a, b)| {
                    a.name == b.name
                        && a.value
                            .data()
                            .iter()
                            .zip(b.value.data())
                            .all(|(x, y)| x.to_bits() == y.to_bits())
                });
            let expected = scratch.trainable_parameters - (1830 + 11 * config.n);
            let faster = r.timing.total_seconds < scratch.timing.total_seconds;
            pass &= encoder_kept && r.trainable_parameters == expected && faster;
            line.push_str(&format!(
                ", encoder bit-identical {encoder_kept}, trainable {} (expected {expected}), faster {faster}",
                r.trainable_parameters
            ));
        }
        details.push(line);
    }
    Verdict::new(pass, details.join("; "))
}

// ---------------------------------------------------------------- criterion 9

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Artifacts of one run with every wall-clock value removed.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let report: RunReport = serde_json::from_slice(&read(&dir.join("report.json"))).unwrap();
    let history = String::from_utf8(read(&dir.join("history.csv"))).unwrap();
    let history: String = history
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string() + "\n")
        .collect();
    vec![
        ("checkpoint.json".into(), read(&dir.join("checkpoint.json"))),
        (
            "report.json".into(),
            report.deterministic_json().into_bytes(),
        ),
        ("history.csv".into(), history.into_bytes()),
        ("kcurve.csv".into(), read(&dir.join("kcurve.csv"))),
    ]
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut pass = true;
    let mut details = Vec::new();
    for kind in DecoderKind::ALL {
        let mut config = RunConfig::new(Material::Material2, 20, 0.01, kind, 3);
        config.schedule = Schedule::two_phase(30, 3e-3, 20, 3e-4);
        config.outdir = Some(dir.clone());
        let mut copies = Vec::new();
        for _ in 0..2 {
            run_with_source(&config, None).unwrap();
            copies.push(artifacts(&dir));
            fs::remove_dir_all(&dir).unwrap();
        }
        let differing: Vec<&str> = copies[0]
            .iter()
            .zip(&copies[1])
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0.as_str())
            .collect();
        pass &= differing.is_empty();
        details.push(if differing.is_empty() {
            format!("{kind} identical")
        } else {
            format!("{kind} differs in {differing:?}")
        });
    }
    Verdict::new(pass, details.join(", "))
}
