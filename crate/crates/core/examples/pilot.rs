//! Scratch pilot runs for sizing the acceptance experiments. Not a deliverable.

use bgan_core::data::{synth_blobs, synth_categorical_grid, synth_gaussian_ring, ring_centers};
use bgan_core::continuous::{train_continuous, CoverageSpec, GeneratorLossKind};
use bgan_core::discrete::{
    adversarial_classification_step, compute_weights, policy_gradient_alpha_loss,
    policy_gradient_beta_loss, train_discrete, BaselineState, Estimator, TrainConfig,
};
use bgan_core::fdiv::Divergence;
use bgan_core::graph::Graph;
use bgan_core::models::{
    Activation, ConditionalFamily, GeneratorModel, Mlp, Prior, StatisticNetwork,
};
use bgan_core::optim::Optimizer;
use bgan_core::oracle::{
    exact_conditional_kl_gradient, exact_marginal, exact_marginal_kl_gradient, EnumerableSpace,
    PriorSupport,
};
use bgan_core::rng::{seeded, Rng};
use bgan_core::tensor::Tensor;
use rand::Rng as _;

fn flatten(ts: &[Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().to_vec()).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    bgan_core::gradcheck::relative_error(a, b)
}

// ---- 4-bit Bernoulli benchmark fixture ----

struct FourBit {
    gen: GeneratorModel,
    space: EnumerableSpace,
    f_table: Vec<f64>,
}

fn four_bit() -> FourBit {
    let net = Mlp::new(2, &[8], 4, Activation::Tanh, &mut seeded(100));
    let gen = GeneratorModel::new(
        Prior::Uniform01 { dim: 2 },
        net,
        ConditionalFamily::Bernoulli { dims: 4 },
    );
    let mut r = seeded(101);
    let nodes = Tensor::matrix(8, 2, (0..16).map(|_| r.gen_range(0.0..1.0)).collect());
    let support = PriorSupport::explicit(nodes, vec![0.125; 8]).unwrap();
    let space = EnumerableSpace::binary(4).unwrap().with_prior_support(support);
    let f_table: Vec<f64> = (0..16).map(|_| r.gen_range(-1.0..1.0)).collect();
    FourBit { gen, space, f_table }
}

fn mc_gradient(fb: &FourBit, estimator: Estimator, n: usize, m: usize, rng: &mut Rng) -> Vec<f64> {
    let support = fb.space.prior_support.as_ref().unwrap();
    // draw z rows from the discrete support
    let mut zdata = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let zi = rng.gen_range(0..support.len());
        zdata.extend_from_slice(support.nodes.row(zi));
    }
    let z = Tensor::matrix(n, 2, zdata);
    let mut g = Graph::new();
    let vars = fb.gen.net.bind(&mut g);
    let zv = g.constant(z);
    let logits = fb.gen.logits(&mut g, &vars, zv).unwrap();
    let params = fb.gen.params_from_logits(&mut g, logits);
    let params_t = g.value(params).clone();
    let x = fb.gen.sample_conditional(&params_t, m, rng).unwrap();
    let mut fvals = Vec::with_capacity(n * m);
    for i in 0..n * m {
        fvals.push(fb.f_table[fb.space.index_of(x.row(i)).unwrap()]);
    }
    let f = Tensor::matrix(n, m, fvals);
    let wb = compute_weights(&f);
    let lp = fb.gen.log_prob_conditional(&mut g, logits, &x, m).unwrap();
    let loss = match estimator {
        Estimator::Alpha => policy_gradient_alpha_loss(&mut g, &wb, lp).unwrap(),
        Estimator::Beta => policy_gradient_beta_loss(&mut g, &wb, lp).unwrap(),
        Estimator::Reinforce => unreachable!(),
    };
    flatten(&fb.gen.net.grads(&mut g, &vars, loss).unwrap())
}

fn crit5() {
    println!("== criterion 5: estimator consistency ==");
    let fb = four_bit();
    let exact_a = flatten(&exact_conditional_kl_gradient(&fb.gen, &fb.space, &fb.f_table).unwrap());
    let exact_b = flatten(&exact_marginal_kl_gradient(&fb.gen, &fb.space, &fb.f_table).unwrap());
    println!("exact alpha grad norm {:.4}, beta {:.4}",
        exact_a.iter().map(|v| v*v).sum::<f64>().sqrt(),
        exact_b.iter().map(|v| v*v).sum::<f64>().sqrt());
    let budgets = [1_000usize, 10_000, 100_000];
    let trials = [24usize, 12, 6];
    let mut rng = seeded(500);
    for (est, exact) in [(Estimator::Alpha, &exact_a), (Estimator::Beta, &exact_b)] {
        let mut lnb = Vec::new();
        let mut lne = Vec::new();
        for (bi, &b) in budgets.iter().enumerate() {
            // M large enough that the self-normalization bias sits below the
            // Monte-Carlo error at the largest budget; N carries the budget
            let (n, m) = (b / 100, 100);
            let mut errs = Vec::new();
            for _ in 0..trials[bi] {
                let g = mc_gradient(&fb, est, n, m, &mut rng);
                errs.push(rel_err(&g, exact));
            }
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            println!("{:?} budget {b}: mean rel err {mean:.5}", est);
            lnb.push((b as f64).ln());
            lne.push(mean.ln());
        }
        // least-squares slope
        let n = lnb.len() as f64;
        let sx: f64 = lnb.iter().sum();
        let sy: f64 = lne.iter().sum();
        let sxx: f64 = lnb.iter().map(|v| v * v).sum();
        let sxy: f64 = lnb.iter().zip(&lne).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        println!("{:?} slope {slope:.3}", est);
    }
}

fn crit6a() {
    println!("== criterion 6a: variance ordering ==");
    let fb = four_bit();
    let (n, m) = (64usize, 20usize);
    let mut rng = seeded(600);
    for est in [Estimator::Alpha, Estimator::Beta] {
        let mut grads = Vec::new();
        for _ in 0..30 {
            grads.push(mc_gradient(&fb, est, n, m, &mut rng));
        }
        let d = grads[0].len();
        let mut trace = 0.0;
        for j in 0..d {
            let mean = grads.iter().map(|g| g[j]).sum::<f64>() / 30.0;
            let var = grads.iter().map(|g| (g[j] - mean).powi(2)).sum::<f64>() / 29.0;
            trace += var;
        }
        println!("{est:?} trace {trace:.6}");
    }
}

fn toy_models(seed: u64) -> (GeneratorModel, StatisticNetwork) {
    let gnet = Mlp::new(2, &[16], 4, Activation::Tanh, &mut seeded(seed * 7 + 1));
    let gen = GeneratorModel::new(
        Prior::Uniform01 { dim: 2 },
        gnet,
        ConditionalFamily::Categorical { positions: 2, classes: 2 },
    );
    let snet = Mlp::new(4, &[16, 16], 1, Activation::Tanh, &mut seeded(seed * 7 + 2));
    (gen, StatisticNetwork::new(snet))
}

fn crit9(n: usize, gamma_d: f64, gamma_g: f64, penalty: f64, iters: usize) {
    println!(
        "== criterion 9: toy discrete (n {n}, gd {gamma_d}, gg {gamma_g}, pen {penalty}, iters {iters}) =="
    );
    let grid = synth_categorical_grid(2, 2, "two-mode", 4096, 77).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let (mut gen, mut stat) = toy_models(seed + 1);
        let config = TrainConfig {
            n_prior: n,
            m_conditional: 20,
            gamma_d,
            gamma_g,
            divergence: Divergence::Gan,
            penalty_coefficient: penalty,
            estimator: Estimator::Alpha,
            seed,
            ..TrainConfig::default()
        };
        train_discrete(&config, &mut gen, &mut stat, &grid.dataset, iters, |_| {}).unwrap();
        let space = EnumerableSpace::categorical(2, 2).unwrap();
        let rep = exact_marginal(&gen, &space).unwrap();
        let tv: f64 = 0.5
            * rep
                .q
                .iter()
                .zip(&grid.distribution)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        worst = worst.max(tv);
        println!("seed {seed}: tv {tv:.4}");
    }
    println!("worst {worst:.4}");
}

fn crit6b(gamma_d: f64, gamma_g: f64, iters: usize) {
    println!("== criterion 6b: alpha vs beta final GAN distance on toy grid ==");
    let grid = synth_categorical_grid(2, 2, "two-mode", 4096, 77).unwrap();
    for est in [Estimator::Alpha, Estimator::Beta] {
        let mut finals = Vec::new();
        for seed in 0..5u64 {
            let (mut gen, mut stat) = toy_models(seed + 1);
            let config = TrainConfig {
                n_prior: 64,
                m_conditional: 20,
                gamma_d,
                gamma_g,
                divergence: Divergence::Gan,
                penalty_coefficient: 0.1,
                estimator: est,
                seed,
                ..TrainConfig::default()
            };
            let mut bounds = Vec::new();
            train_discrete(&config, &mut gen, &mut stat, &grid.dataset, iters, |mr| {
                bounds.push(mr.bound_estimate);
            })
            .unwrap();
            let tail = &bounds[bounds.len() - 50..];
            finals.push(tail.iter().sum::<f64>() / tail.len() as f64);
        }
        let mut s = finals.clone();
        s.sort_by(f64::total_cmp);
        println!("{est:?} finals {finals:?} median {}", s[2]);
    }
}

fn ring_models(seed: u64, width: usize, act: Activation, zdim: usize) -> (GeneratorModel, StatisticNetwork) {
    let gnet = Mlp::new(zdim, &[width, width], 2, Activation::Tanh, &mut seeded(seed * 13 + 3));
    let gen = GeneratorModel::new(
        Prior::StandardNormal { dim: zdim },
        gnet,
        ConditionalFamily::Deterministic { dims: 2 },
    );
    let snet = Mlp::new(2, &[width, width], 1, act, &mut seeded(seed * 13 + 4));
    (gen, StatisticNetwork::new(snet))
}

#[allow(clippy::too_many_arguments)]
#[allow(clippy::too_many_arguments)]
fn crit10b(
    width: usize,
    act: Activation,
    gen_steps: usize,
    n_prior: usize,
    lr_d: f64,
    lr_g: f64,
    penalty: f64,
    radius: f64,
    sigma: f64,
    zdim: usize,
    warmup: usize,
    seeds: u64,
) {
    println!(
        "== ring (w {width} {act:?}, steps {gen_steps}, N {n_prior}, lr_d {lr_d}, lr_g {lr_g}, pen {penalty}, r {radius}, sigma {sigma}, zdim {zdim}, warmup {warmup}) =="
    );
    let data = synth_gaussian_ring(8, radius, sigma, 5000, 55).unwrap();
    let coverage = CoverageSpec {
        centers: ring_centers(8, radius),
        radius: 3.0 * sigma,
        min_share: 0.02,
        n_samples: 2000,
    };
    for loss in [GeneratorLossKind::BoundarySeeking, GeneratorLossKind::Proxy] {
        let mut covs = Vec::new();
        for seed in 0..seeds {
            let (mut gen, mut stat) = ring_models(seed + 1, width, act, zdim);
            let config = TrainConfig {
                n_prior,
                m_conditional: 1,
                gamma_d: lr_d,
                gamma_g: lr_g,
                divergence: Divergence::Gan,
                penalty_coefficient: penalty,
                estimator: Estimator::Alpha,
                seed,
                penalty_on_fake: true,
                ..TrainConfig::default()
            };
            let t0 = std::time::Instant::now();
            let mut last_cov = 0;
            let mut traj = Vec::new();
            train_continuous(
                &config, &mut gen, &mut stat, &data, loss, 5, gen_steps, warmup, 1000,
                Some(&coverage),
                |mr| {
                    last_cov = mr.modes_covered;
                    traj.push((mr.iteration, mr.modes_covered, mr.gen_loss, mr.disc_bound));
                },
            )
            .unwrap();
            covs.push(last_cov);
            println!(
                "  {} seed {seed}: coverage {last_cov} ({:?}) traj {:?}",
                loss.name(),
                t0.elapsed(),
                traj.iter().map(|t| t.1).collect::<Vec<_>>()
            );
            println!(
                "    last gen_loss {:.3} disc_bound {:.3}",
                traj.last().unwrap().2,
                traj.last().unwrap().3
            );
        }
        covs.sort_unstable();
        println!("{} coverages {covs:?} median {}", loss.name(), covs[covs.len() / 2]);
    }
}

fn crit11(iters: usize, lr: f64) {
    println!("== criterion 11: adversarial classification ==");
    let data = synth_blobs(200, 0.5, 4.0, 42).unwrap();
    let accuracy = |gen: &GeneratorModel| -> f64 {
        let mut g = Graph::new();
        let vars = gen.net.bind_frozen(&mut g);
        let xv = g.constant(data.samples.clone());
        let logits = gen.logits(&mut g, &vars, xv).unwrap();
        let l = g.value(logits);
        let labels = data.labels.as_ref().unwrap();
        let mut correct = 0;
        for i in 0..data.len() {
            let pred = if l.get2(i, 0) >= l.get2(i, 1) { 0 } else { 1 };
            if pred == labels[i] {
                correct += 1;
            }
        }
        correct as f64 / data.len() as f64
    };

    // cross-entropy baseline
    let t0 = std::time::Instant::now();
    let mut base = GeneratorModel::new(
        Prior::Uniform01 { dim: 2 },
        Mlp::new(2, &[32], 2, Activation::Tanh, &mut seeded(900)),
        ConditionalFamily::Categorical { positions: 1, classes: 2 },
    );
    let mut opt = Optimizer::adam(lr);
    let mut rng = seeded(901);
    for _ in 0..iters {
        let (x, y) = data.sample_labeled_batch(32, 2, &mut rng).unwrap();
        let mut g = Graph::new();
        let vars = base.net.bind(&mut g);
        let xv = g.constant(x);
        let logits = base.logits(&mut g, &vars, xv).unwrap();
        let lp = base.log_prob_conditional(&mut g, logits, &y, 1).unwrap();
        let ml = g.mean_all(lp);
        let loss = g.neg(ml);
        let grads = base.net.grads(&mut g, &vars, loss).unwrap();
        base.net.apply_step(&mut opt, &grads).unwrap();
    }
    let base_acc = accuracy(&base);
    println!("baseline acc {base_acc:.3} ({:?})", t0.elapsed());

    for div in bgan_core::fdiv::ALL_DIVERGENCES {
        for est in [Estimator::Alpha, Estimator::Reinforce] {
            let mut clf = GeneratorModel::new(
                Prior::Uniform01 { dim: 2 },
                Mlp::new(2, &[32], 2, Activation::Tanh, &mut seeded(910)),
                ConditionalFamily::Categorical { positions: 1, classes: 2 },
            );
            let mut stat = StatisticNetwork::new(Mlp::new(
                4, &[32, 32], 1, Activation::Tanh, &mut seeded(911),
            ));
            let config = TrainConfig {
                n_prior: 32,
                m_conditional: 8,
                gamma_d: lr,
                gamma_g: lr,
                divergence: div,
                penalty_coefficient: 5.0,
                estimator: est,
                seed: 33,
                ..TrainConfig::default()
            };
            let mut opt_c = Optimizer::adam(lr);
            let mut opt_d = Optimizer::adam(lr);
            let mut baseline = BaselineState::new(0.9);
            let mut rng = seeded(912);
            for _ in 0..iters {
                let (x, y) = data.sample_labeled_batch(32, 2, &mut rng).unwrap();
                adversarial_classification_step(
                    &config, &mut stat, &mut clf, &mut opt_c, &mut opt_d, &mut baseline,
                    &x, &y, &mut rng,
                )
                .unwrap();
            }
            println!("{div} {}: acc {:.3}", est.name(), accuracy(&clf));
        }
    }
}

fn crit12_timing() {
    println!("== criterion 12: MNIST iteration timing ==");
    let dir = std::path::Path::new("data");
    let images = bgan_core::data::read_idx(&dir.join("train-images-idx3-ubyte")).unwrap();
    let imgs = images.to_images().unwrap();
    println!("loaded {:?}", imgs.shape());
    let t0 = std::time::Instant::now();
    let small = bgan_core::data::downsample(&imgs, 2).unwrap();
    let ds = bgan_core::data::binarize(&small, bgan_core::data::Binarize::Stochastic { seed: 5 })
        .unwrap()
        .take(10_000);
    println!("prepared {} samples in {:?}", ds.len(), t0.elapsed());

    let gnet = Mlp::new(64, &[128, 128, 128], 196, Activation::Relu, &mut seeded(700));
    let mut gen = GeneratorModel::new(
        Prior::Uniform01 { dim: 64 },
        gnet,
        ConditionalFamily::Bernoulli { dims: 196 },
    );
    let snet = Mlp::new(196, &[128, 128, 128], 1, Activation::Relu, &mut seeded(701));
    let mut stat = StatisticNetwork::new(snet);
    let config = TrainConfig {
        n_prior: 64,
        m_conditional: 5,
        gamma_d: 1e-4,
        gamma_g: 1e-4,
        divergence: Divergence::Gan,
        penalty_coefficient: 1.0,
        estimator: Estimator::Alpha,
        seed: 3,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let mut bounds = Vec::new();
    train_discrete(&config, &mut gen, &mut stat, &ds, 50, |mr| {
        bounds.push(mr.bound_estimate);
    })
    .unwrap();
    let dt = t0.elapsed();
    println!(
        "50 iters in {dt:?} -> {:.1} ms/iter; 7800 iters ~ {:.1} min; first/last bound {:.3}/{:.3}",
        dt.as_millis() as f64 / 50.0,
        dt.as_secs_f64() * 7800.0 / 50.0 / 60.0,
        bounds[0],
        bounds[bounds.len() - 1]
    );
}


fn diag_boundary() {
    let data = synth_gaussian_ring(8, 2.0, 0.25, 5000, 55).unwrap();
    let centers = ring_centers(8, 2.0);
    let coverage = CoverageSpec {
        centers: centers.clone(),
        radius: 0.75,
        min_share: 0.02,
        n_samples: 2000,
    };
    for loss in [GeneratorLossKind::BoundarySeeking, GeneratorLossKind::Proxy] {
        let (mut gen, mut stat) = ring_models(1, 64, Activation::Relu, 2);
        let config = TrainConfig {
            n_prior: 64,
            m_conditional: 1,
            gamma_d: 1e-2,
            gamma_g: 1e-3,
            divergence: Divergence::Gan,
            penalty_coefficient: 0.1,
            estimator: Estimator::Alpha,
            seed: 0,
            penalty_on_fake: true,
            ..TrainConfig::default()
        };
        train_continuous(&config, &mut gen, &mut stat, &data, loss, 5, 20_000, 0, 20_000, Some(&coverage), |_| {}).unwrap();
        let mut rng = seeded(999);
        let (_, samples, _) = gen.sample(2000, 1, &mut rng).unwrap();
        // per-mode shares and radial stats
        let mut shares = vec![0usize; 8];
        let mut within = vec![0usize; 8];
        let mut radius_sum = 0.0;
        for i in 0..2000 {
            let (x, y) = (samples.get2(i, 0), samples.get2(i, 1));
            radius_sum += (x * x + y * y).sqrt();
            let mut best = f64::INFINITY;
            let mut bk = 0;
            for (k, c) in centers.iter().enumerate() {
                let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                if d2 < best { best = d2; bk = k; }
            }
            shares[bk] += 1;
            if best.sqrt() <= 0.75 { within[bk] += 1; }
        }
        println!("{}: mean radius {:.3} shares {:?} within {:?}",
            loss.name(), radius_sum / 2000.0, shares, within);
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("all");
    match which {
        "5" => crit5(),
        "6a" => crit6a(),
        "6b" => crit6b(1e-2, 3e-3, 2000),
        "9" => {
            let t0 = std::time::Instant::now();
            crit9(128, 1e-2, 3e-3, 0.1, 2000);
            println!("n=128 block took {:?}", t0.elapsed());
        }
        "10quick" => {
            crit10b(64, Activation::Relu, 20_000, 128, 1e-2, 1e-3, 0.1, 1.0, 0.2, 2, 0, 3);
            crit10b(64, Activation::Relu, 20_000, 64, 1e-2, 1e-3, 0.1, 1.0, 0.2, 2, 0, 3);
        }
        "10" => crit10b(64, Activation::Relu, 20_000, 128, 1e-2, 1e-3, 0.1, 1.0, 0.2, 2, 0, 5),
        "11" => crit11(3000, 5e-3),
        "12" => crit12_timing(),
        "diag" => diag_boundary(),
        _ => {
            crit5();
            crit6a();
        }
    }
}
