#include "semidiff/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "semidiff/errors.hpp"

namespace semidiff::config {

using nlohmann::json;

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

// Desk-scale preset: tiny networks, narrow feature extractors, 4-image batches.
TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.preset = "tiny";
  c.phase1_epochs = 150;
  c.phase2_epochs = 75;
  c.batch_phase1 = 4;
  c.batch_labeled = 4;
  c.batch_unlabeled = 4;
  c.lr_g = 1e-3;
  c.lr_d = 2e-4;
  c.eta = 0.99;
  c.replay_milestones = {};
  c.generator = backbone::GeneratorConfig::tiny();
  c.discriminator = backbone::DiscriminatorConfig::tiny();
  // The feature extractors run on fixed-random weights here, which make poor perceptual and
  // contrastive targets; both terms stay active at a much lower weight.
  c.losses.w_perc = 0.01;
  for (auto& w : c.losses.contrastive) w *= 0.02;
  c.lr_schedule = "constant";
  c.features.perceptual_width_scale = 8;
  c.features.contrastive_width_scale = 8;
  c.checkpoint_every = 50;
  return c;
}

TrainConfig TrainConfig::preset_named(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "tiny") return tiny();
  throw ConfigError("unknown preset '" + name + "' (paper|tiny)");
}

void TrainConfig::validate() const {
  auto positive = [](int64_t v, const char* field) {
    if (v < 1) throw ConfigError(std::string(field) + " must be positive");
  };
  if (phase1_epochs < 0 || phase2_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  positive(batch_phase1, "batch_phase1");
  positive(batch_labeled, "batch_labeled");
  positive(batch_unlabeled, "batch_unlabeled");
  positive(crop, "crop");
  positive(T, "T");
  positive(checkpoint_every, "checkpoint_every");
  positive(warehouse_batch, "warehouse_batch");
  if (crop % 2 != 0) throw ConfigError("crop must be even");
  if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("learning rates must be positive");
  if (lr_schedule != "cosine" && lr_schedule != "constant") {
    throw ConfigError("lr_schedule must be 'cosine' or 'constant'");
  }
  if (!(lr_min >= 0)) throw ConfigError("lr_min must be >= 0");
  if (!(eta >= 0 && eta <= 1)) throw ConfigError("eta must lie in [0, 1]");
  if (lambda.ramp_epochs < 0) throw ConfigError("lambda.ramp_epochs must be >= 0");
  if (!(lambda.lambda_max >= 0)) throw ConfigError("lambda.lambda_max must be >= 0");
  for (size_t i = 1; i < replay_milestones.size(); ++i) {
    if (replay_milestones[i] <= replay_milestones[i - 1]) {
      throw ConfigError("replay_milestones must be strictly increasing");
    }
  }
  if (!(phi > 0)) throw ConfigError("phi must be > 0");
  if (scorer != "proxy" && scorer.rfind("command:", 0) != 0) {
    throw ConfigError("scorer must be 'proxy' or 'command:<executable>'");
  }
  if (features.perceptual_width_scale < 1 || features.contrastive_width_scale < 1) {
    throw ConfigError("feature width scales must be >= 1");
  }
  try {
    generator.validate();
    discriminator.validate();
    losses.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (losses.contrastive.size() != 5) throw ConfigError("losses.contrastive needs 5 weights");
}

namespace {

json gen_json(const backbone::GeneratorConfig& g) {
  return {{"base_width", g.base_width},         {"channel_mult", g.channel_mult},
          {"blocks_per_level", g.blocks_per_level}, {"latent_dim", g.latent_dim},
          {"embed_dim", g.embed_dim},           {"condition_skip", g.condition_skip},
          {"head_init_scale", g.head_init_scale}, {"seed", g.seed}};
}

json disc_json(const backbone::DiscriminatorConfig& d) {
  return {{"base_width", d.base_width}, {"channel_mult", d.channel_mult},
          {"embed_dim", d.embed_dim},   {"zero_init_head", d.zero_init_head},
          {"seed", d.seed}};
}

// Overwrites `field` from j[key] if present and records the key as consumed.
template <typename T>
void take(const json& j, const char* key, T& field, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [k, _] : j.items()) {
    if (!seen.count(k)) throw ConfigError("unknown config key '" + where + k + "'");
  }
}

const json& object_at(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j[key].is_object()) throw ConfigError(std::string("config field '") + key + "' must be an object");
  return j[key];
}

}  // namespace

json to_json(const TrainConfig& c) {
  return {
      {"preset", c.preset},
      {"datasets", c.datasets},
      {"seed", c.seed},
      {"phase1_epochs", c.phase1_epochs},
      {"phase2_epochs", c.phase2_epochs},
      {"batch_phase1", c.batch_phase1},
      {"batch_labeled", c.batch_labeled},
      {"batch_unlabeled", c.batch_unlabeled},
      {"lr_g", c.lr_g},
      {"lr_d", c.lr_d},
      {"lr_schedule", c.lr_schedule},
      {"lr_min", c.lr_min},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"eta", c.eta},
      {"lambda", {{"ramp_epochs", c.lambda.ramp_epochs}, {"lambda_max", c.lambda.lambda_max}}},
      {"replay_milestones", c.replay_milestones},
      {"crop", c.crop},
      {"augment_flips", c.augment_flips},
      {"T", c.T},
      {"beta_min", c.beta_min},
      {"beta_max", c.beta_max},
      {"generator", gen_json(c.generator)},
      {"discriminator", disc_json(c.discriminator)},
      {"losses",
       {{"w_rec", c.losses.w_rec},
        {"w_perc", c.losses.w_perc},
        {"w_l1", c.losses.w_l1},
        {"w_l2", c.losses.w_l2},
        {"contrastive", c.losses.contrastive},
        {"denominator_epsilon", c.losses.denominator_epsilon},
        {"adv_d_form", c.adv_d_form == losses::AdvDForm::literal ? "literal" : "conventional"},
        {"adv_d_floor", c.adv_d_floor}}},
      {"features",
       {{"perceptual_width_scale", c.features.perceptual_width_scale},
        {"contrastive_width_scale", c.features.contrastive_width_scale},
        {"perceptual_weights", c.features.perceptual_weights},
        {"contrastive_weights", c.features.contrastive_weights}}},
      {"phi", c.phi},
      {"scorer", c.scorer},
      {"proxy_noise_weight", c.proxy_noise_weight},
      {"warehouse_batch", c.warehouse_batch},
      {"refresh_l1_target", c.refresh_l1_target},
      {"checkpoint_every", c.checkpoint_every},
      {"determinism", c.determinism},
  };
}

TrainConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::set<std::string> seen;
  std::string preset = "paper";
  take(j, "preset", preset, seen);
  TrainConfig c = TrainConfig::preset_named(preset);

  take(j, "datasets", c.datasets, seen);
  take(j, "seed", c.seed, seen);
  take(j, "phase1_epochs", c.phase1_epochs, seen);
  take(j, "phase2_epochs", c.phase2_epochs, seen);
  take(j, "batch_phase1", c.batch_phase1, seen);
  take(j, "batch_labeled", c.batch_labeled, seen);
  take(j, "batch_unlabeled", c.batch_unlabeled, seen);
  take(j, "lr_g", c.lr_g, seen);
  take(j, "lr_d", c.lr_d, seen);
  take(j, "lr_schedule", c.lr_schedule, seen);
  take(j, "lr_min", c.lr_min, seen);
  take(j, "adam_beta1", c.adam_beta1, seen);
  take(j, "adam_beta2", c.adam_beta2, seen);
  take(j, "eta", c.eta, seen);
  take(j, "replay_milestones", c.replay_milestones, seen);
  take(j, "crop", c.crop, seen);
  take(j, "augment_flips", c.augment_flips, seen);
  take(j, "T", c.T, seen);
  take(j, "beta_min", c.beta_min, seen);
  take(j, "beta_max", c.beta_max, seen);
  take(j, "phi", c.phi, seen);
  take(j, "scorer", c.scorer, seen);
  take(j, "proxy_noise_weight", c.proxy_noise_weight, seen);
  take(j, "warehouse_batch", c.warehouse_batch, seen);
  take(j, "refresh_l1_target", c.refresh_l1_target, seen);
  take(j, "checkpoint_every", c.checkpoint_every, seen);
  take(j, "determinism", c.determinism, seen);

  {
    const auto& o = object_at(j, "lambda");
    std::set<std::string> s;
    take(o, "ramp_epochs", c.lambda.ramp_epochs, s);
    take(o, "lambda_max", c.lambda.lambda_max, s);
    reject_unknown(o, s, "lambda.");
    seen.insert("lambda");
  }
  {
    const auto& o = object_at(j, "generator");
    std::set<std::string> s;
    take(o, "base_width", c.generator.base_width, s);
    take(o, "channel_mult", c.generator.channel_mult, s);
    take(o, "blocks_per_level", c.generator.blocks_per_level, s);
    take(o, "latent_dim", c.generator.latent_dim, s);
    take(o, "embed_dim", c.generator.embed_dim, s);
    take(o, "condition_skip", c.generator.condition_skip, s);
    take(o, "head_init_scale", c.generator.head_init_scale, s);
    take(o, "seed", c.generator.seed, s);
    reject_unknown(o, s, "generator.");
    seen.insert("generator");
  }
  {
    const auto& o = object_at(j, "discriminator");
    std::set<std::string> s;
    take(o, "base_width", c.discriminator.base_width, s);
    take(o, "channel_mult", c.discriminator.channel_mult, s);
    take(o, "embed_dim", c.discriminator.embed_dim, s);
    take(o, "zero_init_head", c.discriminator.zero_init_head, s);
    take(o, "seed", c.discriminator.seed, s);
    reject_unknown(o, s, "discriminator.");
    seen.insert("discriminator");
  }
  {
    const auto& o = object_at(j, "losses");
    std::set<std::string> s;
    take(o, "w_rec", c.losses.w_rec, s);
    take(o, "w_perc", c.losses.w_perc, s);
    take(o, "w_l1", c.losses.w_l1, s);
    take(o, "w_l2", c.losses.w_l2, s);
    take(o, "contrastive", c.losses.contrastive, s);
    take(o, "denominator_epsilon", c.losses.denominator_epsilon, s);
    std::string form = c.adv_d_form == losses::AdvDForm::literal ? "literal" : "conventional";
    take(o, "adv_d_form", form, s);
    if (form == "literal") {
      c.adv_d_form = losses::AdvDForm::literal;
    } else if (form == "conventional") {
      c.adv_d_form = losses::AdvDForm::conventional;
    } else {
      throw ConfigError("losses.adv_d_form must be 'literal' or 'conventional'");
    }
    take(o, "adv_d_floor", c.adv_d_floor, s);
    reject_unknown(o, s, "losses.");
    seen.insert("losses");
  }
  {
    const auto& o = object_at(j, "features");
    std::set<std::string> s;
    take(o, "perceptual_width_scale", c.features.perceptual_width_scale, s);
    take(o, "contrastive_width_scale", c.features.contrastive_width_scale, s);
    take(o, "perceptual_weights", c.features.perceptual_weights, s);
    take(o, "contrastive_weights", c.features.contrastive_weights, s);
    reject_unknown(o, s, "features.");
    seen.insert("features");
  }
  reject_unknown(j, seen, "");
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + file.string() + ": " + e.what());
  }
  // Accept the {"config": ..., "config_hash": ...} form written into run directories.
  if (j.is_object() && j.contains("config") && j["config"].is_object()) j = j["config"];
  auto cfg = from_json(j);
  if (!cfg.datasets.empty() && std::filesystem::path(cfg.datasets).is_relative()) {
    cfg.datasets = std::filesystem::weakly_canonical(file.parent_path() / cfg.datasets).string();
  }
  return cfg;
}

void save_config(const std::filesystem::path& file, const TrainConfig& cfg) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw PersistenceError("cannot write " + file.string());
  json j = to_json(cfg);
  out << json{{"config", j}, {"config_hash", config_hash(cfg)}}.dump(2) << '\n';
}

std::string config_hash(const TrainConfig& cfg) {
  const auto text = to_json(cfg).dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace semidiff::config
