#include "semidiff/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "semidiff/errors.hpp"

namespace semidiff::checkpoint {

namespace fs = std::filesystem;
using backbone::ParamSnapshot;
using backbone::ParamTensor;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'D', 'C', 'K'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void str(const std::string& s) {
    pod<uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void snapshot(const ParamSnapshot& s) {
    pod<uint64_t>(s.params.size());
    for (const auto& p : s.params) {
      str(p.name);
      pod<uint32_t>(static_cast<uint32_t>(p.shape.size()));
      for (auto d : p.shape) pod<int64_t>(d);
      pod<uint64_t>(p.values.size());
      bytes(p.values.data(), p.values.size() * sizeof(float));
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw PersistenceError("checkpoint truncated: " + path_);
  }
  std::string str() {
    const auto n = pod<uint64_t>();
    if (n > (1ull << 32)) throw PersistenceError("checkpoint corrupt: " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  ParamSnapshot snapshot() {
    ParamSnapshot s;
    const auto count = pod<uint64_t>();
    if (count > (1ull << 24)) throw PersistenceError("checkpoint corrupt: " + path_);
    for (uint64_t i = 0; i < count; ++i) {
      ParamTensor p;
      p.name = str();
      const auto ndim = pod<uint32_t>();
      if (ndim > 8) throw PersistenceError("checkpoint corrupt: " + path_);
      int64_t expect = 1;
      for (uint32_t d = 0; d < ndim; ++d) {
        p.shape.push_back(pod<int64_t>());
        expect *= p.shape.back();
      }
      const auto n = pod<uint64_t>();
      if (n != static_cast<uint64_t>(expect)) throw PersistenceError("checkpoint corrupt: " + path_);
      p.values.resize(n);
      bytes(p.values.data(), n * sizeof(float));
      s.params.push_back(std::move(p));
    }
    return s;
  }

 private:
  std::istream& in_;
  std::string path_;
};

ParamSnapshot warehouse_block(const std::vector<warehouse::WarehouseEntry>& entries) {
  ParamSnapshot s;
  for (const auto& e : entries) {
    auto t = e.patch.to(torch::kFloat32).contiguous();
    const float* p = t.data_ptr<float>();
    s.params.push_back({e.sample_id, t.sizes().vec(), std::vector<float>(p, p + t.numel())});
  }
  return s;
}

}  // namespace

void save(const Checkpoint& c, const fs::path& path) {
  json wh = json::array();
  for (const auto& e : c.warehouse) {
    wh.push_back({{"id", e.sample_id},
                  {"score", e.score},
                  {"updated_at_step", e.updated_at_step},
                  {"update_count", e.update_count}});
  }
  json header{{"format_version", kFormatVersion},
              {"config", c.config},
              {"config_hash", c.config_hash},
              {"phase", c.phase},
              {"epoch", c.epoch},
              {"phase_epoch", c.phase_epoch},
              {"global_step", c.global_step},
              {"schedule", {{"steps", c.schedule_steps}, {"beta_min", c.beta_min}, {"beta_max", c.beta_max}}},
              {"rng", {{"seed", c.rng_seed}, {"step", c.global_step}}},
              {"opt_g_steps", c.opt_g.steps},
              {"opt_g_names", c.opt_g.names},
              {"opt_d_steps", c.opt_d.steps},
              {"opt_d_names", c.opt_d.names},
              {"warehouse", wh},
              {"warehouse_scorer", c.warehouse_scorer}};

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PersistenceError("cannot write checkpoint " + tmp.string());
    Writer w(out);
    w.bytes(kMagic, 4);
    w.pod<uint32_t>(kFormatVersion);
    w.str(header.dump());
    w.snapshot(c.student_g);
    w.snapshot(c.student_d);
    w.snapshot(c.teacher_g);
    w.snapshot(c.opt_g.moments);
    w.snapshot(c.opt_d.moments);
    w.snapshot(warehouse_block(c.warehouse));
    out.flush();
    if (!out) throw PersistenceError("short write on checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[4];
  try {
    r.bytes(magic, 4);
  } catch (const PersistenceError&) {
    throw CheckpointVersionError("not a checkpoint: " + path.string());
  }
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointVersionError("not a checkpoint: " + path.string());
  const auto version = r.pod<uint32_t>();
  if (version != kFormatVersion) {
    throw CheckpointVersionError("checkpoint " + path.string() + " has format version " +
                                 std::to_string(version) + ", this build reads version " +
                                 std::to_string(kFormatVersion));
  }
  json h;
  try {
    h = json::parse(r.str());
    if (h.at("format_version").get<uint32_t>() != kFormatVersion) {
      throw CheckpointVersionError("checkpoint header version mismatch in " + path.string());
    }
  } catch (const json::exception& e) {
    throw CheckpointVersionError("checkpoint header unreadable in " + path.string() + ": " + e.what());
  }

  Checkpoint c;
  try {
    c.config = h.at("config");
    c.config_hash = h.at("config_hash").get<std::string>();
    c.phase = h.at("phase").get<int>();
    c.epoch = h.at("epoch").get<int64_t>();
    c.phase_epoch = h.at("phase_epoch").get<int64_t>();
    c.global_step = h.at("global_step").get<int64_t>();
    c.schedule_steps = h.at("schedule").at("steps").get<int>();
    c.beta_min = h.at("schedule").at("beta_min").get<double>();
    c.beta_max = h.at("schedule").at("beta_max").get<double>();
    c.rng_seed = h.at("rng").at("seed").get<uint64_t>();
    c.opt_g.steps = h.at("opt_g_steps").get<std::vector<int64_t>>();
    c.opt_g.names = h.at("opt_g_names").get<std::vector<std::string>>();
    c.opt_d.steps = h.at("opt_d_steps").get<std::vector<int64_t>>();
    c.opt_d.names = h.at("opt_d_names").get<std::vector<std::string>>();
    c.warehouse_scorer = h.at("warehouse_scorer").get<std::string>();
  } catch (const json::exception& e) {
    throw CheckpointVersionError("checkpoint header incomplete in " + path.string() + ": " + e.what());
  }
  c.student_g = r.snapshot();
  c.student_d = r.snapshot();
  c.teacher_g = r.snapshot();
  c.opt_g.moments = r.snapshot();
  c.opt_d.moments = r.snapshot();
  auto patches = r.snapshot();
  const auto& wh = h.at("warehouse");
  if (wh.size() != patches.params.size()) throw PersistenceError("checkpoint warehouse block mismatch");
  for (size_t i = 0; i < patches.params.size(); ++i) {
    warehouse::WarehouseEntry e;
    auto& p = patches.params[i];
    e.sample_id = wh[i].at("id").get<std::string>();
    if (e.sample_id != p.name) throw PersistenceError("checkpoint warehouse block mismatch");
    e.score = wh[i].at("score").get<double>();
    e.updated_at_step = wh[i].at("updated_at_step").get<int64_t>();
    e.update_count = wh[i].at("update_count").get<int64_t>();
    e.patch = torch::from_blob(p.values.data(), p.shape, torch::kFloat32).clone();
    c.warehouse.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw PersistenceError("checkpoint has trailing bytes: " + path.string());
  }
  return c;
}

void check_compatible(const Checkpoint& ckpt, const std::string& expected_hash) {
  if (ckpt.config_hash != expected_hash) {
    throw CompatibilityError("checkpoint config hash " + ckpt.config_hash +
                             " does not match the run config hash " + expected_hash);
  }
}

AdamSnapshot take_adam(torch::optim::Adam& opt, const torch::nn::Module& module) {
  AdamSnapshot s;
  auto& state = opt.state();
  for (const auto& item : module.named_parameters(true)) {
    auto it = state.find(item.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
    auto put = [&](const std::string& suffix, const torch::Tensor& t) {
      auto c = t.detach().to(torch::kFloat32).contiguous();
      const float* p = c.data_ptr<float>();
      s.moments.params.push_back({item.key() + suffix, c.sizes().vec(), std::vector<float>(p, p + c.numel())});
    };
    put("/exp_avg", st.exp_avg());
    put("/exp_avg_sq", st.exp_avg_sq());
    s.names.push_back(item.key());
    s.steps.push_back(st.step());
  }
  return s;
}

void load_adam(torch::optim::Adam& opt, const torch::nn::Module& module, const AdamSnapshot& s) {
  if (s.moments.params.size() != 2 * s.names.size() || s.steps.size() != s.names.size()) {
    throw SnapshotCompatibilityError("optimizer snapshot is inconsistent");
  }
  auto params = module.named_parameters(true);
  auto& state = opt.state();
  state.clear();
  for (size_t i = 0; i < s.names.size(); ++i) {
    const auto* p = params.find(s.names[i]);
    if (!p) throw SnapshotCompatibilityError("optimizer snapshot names unknown parameter " + s.names[i]);
    const auto& avg = s.moments.params[2 * i];
    const auto& sq = s.moments.params[2 * i + 1];
    if (avg.shape != p->sizes().vec() || sq.shape != p->sizes().vec()) {
      throw SnapshotCompatibilityError("optimizer snapshot shape mismatch for " + s.names[i]);
    }
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(s.steps[i]);
    st->exp_avg(torch::from_blob(const_cast<float*>(avg.values.data()), avg.shape, torch::kFloat32).clone());
    st->exp_avg_sq(torch::from_blob(const_cast<float*>(sq.values.data()), sq.shape, torch::kFloat32).clone());
    state[p->unsafeGetTensorImpl()] = std::move(st);
  }
}

fs::path checkpoint_path(const fs::path& run_dir, int64_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt", static_cast<long long>(epoch));
  return run_dir / "checkpoints" / name;
}

}  // namespace semidiff::checkpoint
