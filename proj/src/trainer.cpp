#include "semidiff/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "semidiff/errors.hpp"
#include "semidiff/features.hpp"
#include "semidiff/random.hpp"
#include "semidiff/wavelet.hpp"

namespace semidiff::trainer {

using checkpoint::Checkpoint;
using diffusion::NoiseSchedule;

namespace {

// Stream tags for derive_seed(step_seed, tag, ...).
constexpr uint64_t kStepTag = 0x5e9;
constexpr uint64_t kNoiseTag = 0x5a;
constexpr uint64_t kChainTag = 0xc4a1;
constexpr uint64_t kCropTag = 0xc0;

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

void check_finite(double v, const char* what, const torch::Tensor& t) {
  if (std::isfinite(v)) return;
  std::ostringstream os;
  os << "training diverged: " << what << " = " << v;
  if (t.defined()) os << " (steps drawn: " << t << ")";
  throw DivergenceError(os.str());
}

SampleNoise streams(uint64_t step_seed, uint64_t tag, int64_t n) {
  std::vector<uint64_t> seeds;
  for (int64_t i = 0; i < n; ++i) seeds.push_back(derive_seed(step_seed, tag, static_cast<uint64_t>(i)));
  return SampleNoise(seeds);
}

// Shared front half of both steps: diffuse the target pair, predict y0' and denoise it.
struct Forward {
  torch::Tensor x0, y0, t, y_prev, y_t, y0_pred, y_prev_fake;
};

Forward diffuse_and_predict(Nets& nets, const torch::Tensor& x_c, const torch::Tensor& y_c,
                            const NoiseSchedule& sched, uint64_t step_seed) {
  Forward f;
  f.x0 = wavelet::dwt(x_c);
  f.y0 = wavelet::dwt(y_c);
  const int64_t n = f.x0.size(0);
  std::mt19937_64 rng(derive_seed(step_seed, kStepTag));
  f.t = sample_steps(n, sched.steps, rng);
  auto noise = streams(step_seed, kNoiseTag, n);
  const auto shape = f.y0.sizes().slice(1);
  auto na = noise.normal(shape), nb = noise.normal(shape);
  std::tie(f.y_prev, f.y_t) = diffusion::diffuse_pair(f.y0, f.t, sched, na, nb);
  auto z = noise.normal({nets.g->config().latent_dim});
  f.y0_pred = nets.g->forward(f.y_t, f.x0, z, f.t);
  f.y_prev_fake = diffusion::posterior_sample(f.y_t, f.y0_pred, f.t, sched, noise.normal(shape));
  return f;
}

}  // namespace

double lambda_at(int64_t phase2_epoch, const config::LambdaSchedule& s, int phase) {
  if (phase != 2) return 0.0;
  if (s.ramp_epochs <= 0 || phase2_epoch >= s.ramp_epochs) return s.lambda_max;
  if (phase2_epoch <= 0) return 0.0;
  return s.lambda_max * static_cast<double>(phase2_epoch) / static_cast<double>(s.ramp_epochs);
}

double lr_at(double base, int64_t epoch, int64_t epochs, const config::TrainConfig& cfg) {
  if (cfg.lr_schedule == "constant" || epochs <= 0) return base;
  const double floor = std::min(cfg.lr_min, base);
  const double progress = static_cast<double>(epoch) / static_cast<double>(epochs);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(M_PI * progress));
}

Nets Nets::build(const config::TrainConfig& cfg) {
  Nets n;
  n.g = backbone::build_generator(cfg.generator);
  n.d = backbone::build_discriminator(cfg.discriminator);
  n.teacher = backbone::build_generator(cfg.generator);
  backbone::load_snapshot(*n.teacher, backbone::take_snapshot(*n.g));
  set_requires_grad(*n.teacher, false);
  n.opt_g = std::make_unique<torch::optim::Adam>(
      n.g->parameters(),
      torch::optim::AdamOptions(cfg.lr_g).betas({cfg.adam_beta1, cfg.adam_beta2}));
  n.opt_d = std::make_unique<torch::optim::Adam>(
      n.d->parameters(),
      torch::optim::AdamOptions(cfg.lr_d).betas({cfg.adam_beta1, cfg.adam_beta2}));
  return n;
}

torch::Tensor sample_steps(int64_t n, int T, std::mt19937_64& rng) {
  std::uniform_int_distribution<int64_t> dist(1, T);
  auto t = torch::empty({n}, torch::kInt64);
  auto* p = t.data_ptr<int64_t>();
  for (int64_t i = 0; i < n; ++i) p[i] = dist(rng);
  return t;
}

StepResult labeled_step(Nets& nets, const torch::Tensor& x_c, const torch::Tensor& y_c,
                        const NoiseSchedule& sched, const LossSetup& ls, uint64_t step_seed) {
  auto f = diffuse_and_predict(nets, x_c, y_c, sched, step_seed);
  StepResult r;
  r.t = f.t;

  set_requires_grad(*nets.d, true);
  auto loss_d = losses::loss_adv_d(nets.d->logits(f.y_prev, f.y_t, f.t),
                                   nets.d->logits(f.y_prev_fake.detach(), f.y_t, f.t),
                                   ls.adv_d_form, ls.adv_d_floor);
  r.loss_d = loss_d.item<double>();
  check_finite(r.loss_d, "labeled loss_d", f.t);
  nets.opt_d->zero_grad();
  loss_d.backward();
  nets.opt_d->step();

  set_requires_grad(*nets.d, false);
  auto loss_g = losses::loss_adv_g(nets.d->logits(f.y_prev_fake, f.y_t, f.t)) +
                losses::loss_aux(wavelet::idwt(f.y0_pred), y_c, *ls.perceptual, ls.weights);
  r.loss_g = loss_g.item<double>();
  check_finite(r.loss_g, "labeled loss_g", f.t);
  nets.opt_g->zero_grad();
  loss_g.backward();
  nets.opt_g->step();
  set_requires_grad(*nets.d, true);
  return r;
}

StepResult unlabeled_step(Nets& nets, const torch::Tensor& x_c, const std::vector<std::string>& ids,
                          const NoiseSchedule& sched, const LossSetup& ls, UnlabeledContext& ctx,
                          uint64_t step_seed) {
  if (!ctx.store || !ctx.scorer) throw ValidationError("unlabeled_step: warehouse and scorer required");
  if (static_cast<int64_t>(ids.size()) != x_c.size(0)) {
    throw DimensionError("unlabeled_step: one warehouse id per batch item");
  }
  const bool train = ctx.lambda > 0.0;
  std::optional<torch::NoGradGuard> frozen;
  if (!train) frozen.emplace();

  std::vector<torch::Tensor> stored;
  std::vector<warehouse::WarehouseEntry> entries;
  for (const auto& id : ids) {
    entries.push_back(ctx.store->get(id));
    stored.push_back(entries.back().patch);
  }
  auto y_c = torch::stack(stored);
  auto f = diffuse_and_predict(nets, x_c, y_c, sched, step_seed);
  StepResult r;
  r.t = f.t;

  // Teacher and student walk the chain from the same y_t with identical noise streams.
  const int64_t n = x_c.size(0);
  torch::Tensor teacher_out;
  {
    torch::NoGradGuard no_grad;
    backbone::GeneratorDenoiser teacher(nets.teacher);
    auto noise = streams(step_seed, kChainTag, n);
    teacher_out = diffusion::reverse_chain(f.x0, f.t, f.y_t.detach(), teacher, sched, noise);
  }
  backbone::GeneratorDenoiser student(nets.g);
  auto student_noise = streams(step_seed, kChainTag, n);
  auto student_out = diffusion::reverse_chain(f.x0, f.t, f.y_t.detach(), student, sched, student_noise);

  std::vector<torch::Tensor> optimal;
  for (int64_t i = 0; i < n; ++i) {
    auto d = warehouse::propose_update(entries[static_cast<size_t>(i)], teacher_out[i],
                                       student_out[i].detach(), *ctx.scorer, ctx.gate,
                                       ctx.global_step);
    if (d.accepted) {
      ctx.store->put(d.entry);
      ++r.updates;
    }
    optimal.push_back(d.entry.patch);
  }
  auto y_r = torch::stack(optimal);

  const auto lambda = ctx.lambda;
  auto loss_d = losses::loss_adv_d(nets.d->logits(f.y_prev, f.y_t, f.t),
                                   nets.d->logits(f.y_prev_fake.detach(), f.y_t, f.t),
                                   ls.adv_d_form, ls.adv_d_floor);
  check_finite(loss_d.item<double>(), "unlabeled loss_d", f.t);
  r.loss_d = lambda * loss_d.item<double>();
  if (train) {
    nets.opt_d->zero_grad();
    (loss_d * lambda).backward();
    nets.opt_d->step();
  }

  set_requires_grad(*nets.d, false);
  auto l1_target = ctx.refresh_l1_target ? wavelet::dwt(y_r) : f.y0;
  auto loss_g = losses::loss_adv_g(nets.d->logits(f.y_prev_fake, f.y_t, f.t)) +
                (f.y0_pred - l1_target.detach()).abs().mean() +
                losses::loss_contrastive(student_out, y_r, x_c, *ls.contrastive, ls.weights);
  set_requires_grad(*nets.d, true);
  check_finite(loss_g.item<double>(), "unlabeled loss_g", f.t);
  r.loss_g = lambda * loss_g.item<double>();
  if (train) {
    nets.opt_g->zero_grad();
    (loss_g * lambda).backward();
    nets.opt_g->step();
  }
  backbone::ema_update(*nets.teacher, *nets.g, ctx.eta);
  return r;
}

// ---------------------------------------------------------------------------------------------

std::unique_ptr<warehouse::QualityScorer> make_scorer(const config::TrainConfig& cfg) {
  if (cfg.scorer == "proxy") return std::make_unique<warehouse::ProxyScorer>(cfg.proxy_noise_weight);
  if (cfg.scorer.rfind("command:", 0) == 0) {
    return std::make_unique<warehouse::CommandScorer>(cfg.scorer.substr(8));
  }
  throw ConfigError("unknown scorer '" + cfg.scorer + "'");
}

namespace {

data::Corpus corpus_from(const config::TrainConfig& cfg) {
  if (cfg.datasets.empty()) throw ConfigError("config has no 'datasets' manifest");
  return data::load_manifest(data::read_dataset_specs(cfg.datasets));
}

template <typename T>
std::vector<std::vector<T>> chunk(const std::vector<T>& items, int64_t size) {
  std::vector<std::vector<T>> out;
  for (size_t i = 0; i < items.size(); i += static_cast<size_t>(size)) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + static_cast<size_t>(size))));
  }
  return out;
}

}  // namespace

Trainer::Trainer(config::TrainConfig cfg, fs::path run_dir)
    : Trainer(cfg, std::move(run_dir), corpus_from(cfg)) {}

Trainer::Trainer(config::TrainConfig cfg, fs::path run_dir, data::Corpus corpus)
    : cfg_(std::move(cfg)), run_dir_(std::move(run_dir)), corpus_(std::move(corpus)) {
  cfg_.validate();
  if (cfg_.determinism) torch::set_num_threads(1);
  hash_ = config::config_hash(cfg_);
  sched_ = NoiseSchedule::make(cfg_.T, cfg_.beta_min, cfg_.beta_max);
  nets_ = Nets::build(cfg_);
  perceptual_ = losses::make_vgg_extractor(
      losses::VggConfig::perceptual(cfg_.features.perceptual_width_scale),
      cfg_.features.perceptual_weights);
  contrastive_ = losses::make_vgg_extractor(
      losses::VggConfig::contrastive(cfg_.features.contrastive_width_scale),
      cfg_.features.contrastive_weights);
  scorer_ = make_scorer(cfg_);
  store_ = warehouse::Warehouse(scorer_->name());
}

void Trainer::prepare_run_dir() {
  fs::create_directories(run_dir_ / "checkpoints");
  config::save_config(run_dir_ / "config.json", cfg_);
}

void Trainer::set_learning_rates(int64_t epoch, int64_t epochs) {
  for (auto& group : nets_.opt_g->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr_at(cfg_.lr_g, epoch, epochs, cfg_));
  }
  for (auto& group : nets_.opt_d->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr_at(cfg_.lr_d, epoch, epochs, cfg_));
  }
}

void Trainer::truncate_metrics(int64_t last_step) {
  const auto path = run_dir_ / "metrics.csv";
  std::vector<std::string> keep;
  if (last_step > 0 && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= last_step) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PersistenceError("cannot write " + path.string());
  out << "step,loss_g,loss_d,lambda,warehouse_updates\n";
  for (const auto& l : keep) out << l << '\n';
}

void Trainer::append_metrics(int64_t step, const StepResult& r, double lambda) {
  std::ofstream out(run_dir_ / "metrics.csv", std::ios::app);
  out << step << ',' << std::setprecision(9) << r.loss_g << ',' << r.loss_d << ',' << lambda
      << ',' << r.updates << '\n';
}

Checkpoint Trainer::snapshot(int phase, int64_t phase_epoch) const {
  Checkpoint c;
  c.config = config::to_json(cfg_);
  c.config_hash = hash_;
  c.phase = phase;
  c.phase_epoch = phase_epoch;
  c.epoch = phase == 1 ? phase_epoch : cfg_.phase1_epochs + phase_epoch;
  c.global_step = global_step_;
  c.schedule_steps = sched_.steps;
  c.beta_min = sched_.beta_min;
  c.beta_max = sched_.beta_max;
  c.rng_seed = cfg_.seed;
  c.student_g = backbone::take_snapshot(*nets_.g);
  c.student_d = backbone::take_snapshot(*nets_.d);
  c.teacher_g = backbone::take_snapshot(*nets_.teacher);
  c.opt_g = checkpoint::take_adam(*nets_.opt_g, *nets_.g);
  c.opt_d = checkpoint::take_adam(*nets_.opt_d, *nets_.d);
  if (phase == 2) {
    for (const auto& id : store_.ids()) c.warehouse.push_back(store_.get(id));
    c.warehouse_scorer = store_.scorer_name();
  }
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  checkpoint::check_compatible(c, hash_);
  backbone::load_snapshot(*nets_.g, c.student_g);
  backbone::load_snapshot(*nets_.d, c.student_d);
  backbone::load_snapshot(*nets_.teacher, c.teacher_g);
  checkpoint::load_adam(*nets_.opt_g, *nets_.g, c.opt_g);
  checkpoint::load_adam(*nets_.opt_d, *nets_.d, c.opt_d);
  global_step_ = c.global_step;
  store_ = warehouse::Warehouse(scorer_->name());
  if (c.phase == 2) {
    if (c.warehouse_scorer != scorer_->name()) {
      throw CompatibilityError("checkpoint warehouse was scored by '" + c.warehouse_scorer +
                               "', the run uses '" + scorer_->name() + "'");
    }
    for (const auto& e : c.warehouse) store_.put(e);
  }
}

void Trainer::save_checkpoint(int phase, int64_t phase_epoch, const RunOptions& opts) {
  auto c = snapshot(phase, phase_epoch);
  const auto path = checkpoint::checkpoint_path(run_dir_, c.epoch);
  checkpoint::save(c, path);
  if (opts.log) *opts.log << "  saved " << path.string() << "\n";
}

std::pair<torch::Tensor, torch::Tensor> Trainer::labeled_batch(
    const std::vector<data::SampleRef>& refs, uint64_t crop_seed) {
  std::mt19937_64 rng(crop_seed);
  std::vector<torch::Tensor> xs, ys;
  for (const auto& ref : refs) {
    const auto& s = corpus_.datasets.at(ref.dataset).labeled.at(ref.index);
    auto x = cache_.get(s.degraded);
    auto y = cache_.get(s.clean);
    auto [xc, yc] = data::crop_pair(x, y, data::CropMode::random, cfg_.crop, rng);
    if (cfg_.augment_flips) {
      const auto bits = rng();
      if (bits & 1) {
        xc = xc.flip({2});
        yc = yc.flip({2});
      }
      if (bits & 2) {
        xc = xc.flip({1});
        yc = yc.flip({1});
      }
    }
    xs.push_back(xc);
    ys.push_back(yc);
  }
  return {torch::stack(xs), torch::stack(ys)};
}

std::pair<torch::Tensor, std::vector<std::string>> Trainer::unlabeled_batch(
    const std::vector<data::SampleRef>& refs) {
  std::vector<torch::Tensor> xs;
  std::vector<std::string> ids;
  for (const auto& ref : refs) {
    const auto& s = corpus_.datasets.at(ref.dataset).unlabeled.at(ref.index);
    const auto& x = cache_.get(s.degraded);
    xs.push_back(data::crop(x, data::center_offset(x.size(1), x.size(2), cfg_.crop), cfg_.crop));
    ids.push_back(s.id);
  }
  return {torch::stack(xs), ids};
}

Checkpoint Trainer::run_phase1(const std::optional<Checkpoint>& resume, const RunOptions& opts) {
  prepare_run_dir();
  int64_t start = 0;
  if (resume) {
    if (resume->phase != 1) throw ConfigError("phase-1 resume needs a phase-1 checkpoint");
    restore(*resume);
    start = resume->phase_epoch;
  } else {
    global_step_ = 0;
  }
  truncate_metrics(global_step_);
  if (start >= cfg_.phase1_epochs) {
    save_checkpoint(1, start, opts);
    return snapshot(1, start);
  }
  if (corpus_.labeled_count() == 0) throw ConfigError("phase 1 needs labeled samples");

  LossSetup ls{perceptual_.get(), contrastive_.get(), cfg_.losses, cfg_.adv_d_form, cfg_.adv_d_floor};
  int64_t done = start;
  for (int64_t epoch = start; epoch < cfg_.phase1_epochs; ++epoch) {
    set_learning_rates(epoch, cfg_.phase1_epochs);
    auto cur = data::curriculum_at(epoch, cfg_.replay_milestones, corpus_.datasets.size());
    auto order = data::labeled_epoch_order(corpus_, cur, derive_seed(cfg_.seed, 1));
    double sum_g = 0, sum_d = 0;
    int64_t steps = 0;
    for (const auto& refs : chunk(order, cfg_.batch_phase1)) {
      auto [x, y] = labeled_batch(refs, derive_seed(cfg_.seed, static_cast<uint64_t>(global_step_), kCropTag));
      auto r = labeled_step(nets_, x, y, sched_, ls, derive_seed(cfg_.seed, static_cast<uint64_t>(global_step_), 1));
      ++global_step_;
      append_metrics(global_step_, r, 0.0);
      sum_g += r.loss_g;
      sum_d += r.loss_d;
      ++steps;
    }
    done = epoch + 1;
    if (opts.log && steps > 0) {
      *opts.log << "phase 1 epoch " << done << "/" << cfg_.phase1_epochs << " step " << global_step_
                << " loss_g " << sum_g / steps << " loss_d " << sum_d / steps << "\n";
    }
    const bool stop = opts.stop_after_epoch >= 0 && done >= opts.stop_after_epoch;
    if (done % cfg_.checkpoint_every == 0 || done == cfg_.phase1_epochs || stop) {
      save_checkpoint(1, done, opts);
    }
    if (stop) break;
  }
  return snapshot(1, done);
}

Checkpoint Trainer::run_phase2(const Checkpoint& from, const RunOptions& opts) {
  checkpoint::check_compatible(from, hash_);
  prepare_run_dir();
  int64_t start = 0;
  if (from.phase == 1) {
    if (from.phase_epoch != cfg_.phase1_epochs) {
      throw ConfigError("phase 2 needs a completed phase-1 checkpoint (this one stopped at epoch " +
                        std::to_string(from.phase_epoch) + " of " +
                        std::to_string(cfg_.phase1_epochs) + ")");
    }
    restore(from);
    backbone::load_snapshot(*nets_.teacher, from.student_g);
    std::vector<warehouse::UnlabeledSource> sources;
    for (const auto& d : corpus_.datasets) {
      for (const auto& s : d.unlabeled) sources.push_back({s.id, s.degraded});
    }
    if (sources.empty()) throw ConfigError("phase 2 needs unlabeled samples");
    backbone::GeneratorDenoiser teacher(nets_.teacher);
    store_ = warehouse::initialize(sources, teacher, sched_, *scorer_, derive_seed(cfg_.seed, 0x3a),
                                   cfg_.crop, cfg_.warehouse_batch);
  } else {
    restore(from);
    start = from.phase_epoch;
  }
  truncate_metrics(global_step_);
  store_.save(run_dir_ / "warehouse");

  LossSetup ls{perceptual_.get(), contrastive_.get(), cfg_.losses, cfg_.adv_d_form, cfg_.adv_d_floor};
  UnlabeledContext ctx;
  ctx.store = &store_;
  ctx.scorer = scorer_.get();
  ctx.gate.phi = cfg_.phi;
  ctx.eta = cfg_.eta;
  ctx.refresh_l1_target = cfg_.refresh_l1_target;

  int64_t done = start;
  if (start >= cfg_.phase2_epochs) save_checkpoint(2, start, opts);
  for (int64_t epoch = start; epoch < cfg_.phase2_epochs; ++epoch) {
    set_learning_rates(epoch, cfg_.phase2_epochs);
    auto cur = data::curriculum_at(epoch, cfg_.replay_milestones, corpus_.datasets.size());
    const double lambda = lambda_at(epoch, cfg_.lambda);
    ctx.lambda = lambda;
    auto lab = chunk(data::labeled_epoch_order(corpus_, cur, derive_seed(cfg_.seed, 2)), cfg_.batch_labeled);
    auto unl = chunk(data::unlabeled_epoch_order(corpus_, cur, derive_seed(cfg_.seed, 2)), cfg_.batch_unlabeled);
    const size_t iters = lab.empty() ? unl.size() : lab.size();
    double sum_g = 0, sum_d = 0;
    int64_t steps = 0, epoch_updates = 0;
    for (size_t i = 0; i < iters; ++i) {
      if (!lab.empty()) {
        auto [x, y] = labeled_batch(lab[i], derive_seed(cfg_.seed, static_cast<uint64_t>(global_step_), kCropTag));
        auto r = labeled_step(nets_, x, y, sched_, ls, derive_seed(cfg_.seed, static_cast<uint64_t>(global_step_), 1));
        ++global_step_;
        append_metrics(global_step_, r, lambda);
        sum_g += r.loss_g;
        sum_d += r.loss_d;
        ++steps;
      }
      if (!unl.empty()) {
        auto [x, ids] = unlabeled_batch(unl[i % unl.size()]);
        ctx.global_step = global_step_ + 1;
        auto r = unlabeled_step(nets_, x, ids, sched_, ls, ctx,
                                derive_seed(cfg_.seed, static_cast<uint64_t>(global_step_), 2));
        ++global_step_;
        updates_ += r.updates;
        epoch_updates += r.updates;
        append_metrics(global_step_, r, lambda);
        sum_g += r.loss_g;
        sum_d += r.loss_d;
        ++steps;
      }
    }
    store_.save(run_dir_ / "warehouse");
    done = epoch + 1;
    if (opts.log && steps > 0) {
      *opts.log << "phase 2 epoch " << done << "/" << cfg_.phase2_epochs << " step " << global_step_
                << " lambda " << lambda << " loss_g " << sum_g / steps << " loss_d " << sum_d / steps
                << " warehouse updates " << epoch_updates << "\n";
    }
    const bool stop = opts.stop_after_epoch >= 0 && done >= opts.stop_after_epoch;
    if (done % cfg_.checkpoint_every == 0 || done == cfg_.phase2_epochs || stop) {
      save_checkpoint(2, done, opts);
    }
    if (stop) break;
  }
  return snapshot(2, done);
}

InferenceModel inference_model(const Checkpoint& ckpt) {
  auto cfg = config::from_json(ckpt.config);
  InferenceModel m;
  m.g = backbone::build_generator(cfg.generator);
  backbone::load_snapshot(*m.g, ckpt.phase == 2 ? ckpt.teacher_g : ckpt.student_g);
  m.g->eval();
  m.sched = NoiseSchedule::make(ckpt.schedule_steps, ckpt.beta_min, ckpt.beta_max);
  return m;
}

}  // namespace semidiff::trainer
