#include "semidiff/warehouse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

#include "json.hpp"
#include "semidiff/data.hpp"
#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/random.hpp"
#include "semidiff/wavelet.hpp"

namespace semidiff::warehouse {

namespace fs = std::filesystem;
using nlohmann::json;

void ConsistencyGate::validate() const {
  if (!(phi > 0.0) || !std::isfinite(phi)) throw ValidationError("gate: phi must be > 0");
}

bool gate_accepts(double q_teacher, double q_student, double q_stored, double l1,
                  const ConsistencyGate& gate) {
  return q_teacher > std::max(q_student, q_stored) && l1 < gate.phi;
}

UpdateDecision propose_update(const WarehouseEntry& entry, const torch::Tensor& teacher_out,
                              const torch::Tensor& student_out, QualityScorer& scorer,
                              const ConsistencyGate& gate, int64_t step) {
  auto teacher = teacher_out.detach().to(torch::kFloat32).squeeze(0);
  auto student = student_out.detach().to(torch::kFloat32).squeeze(0);
  if (teacher.sizes() != student.sizes() ||
      (entry.patch.defined() && entry.patch.sizes() != teacher.sizes())) {
    throw DimensionError("propose_update: teacher, student and stored patch must share a shape");
  }
  auto candidate = image_io::quantize16(teacher);

  UpdateDecision d;
  d.q_teacher = scorer.score(candidate);
  d.q_student = scorer.score(student);
  d.l1 = (teacher - student).abs().mean().item<double>();
  d.accepted = gate_accepts(d.q_teacher, d.q_student, entry.score, d.l1, gate);
  d.entry = entry;
  if (d.accepted) {
    d.entry.patch = candidate;
    d.entry.score = d.q_teacher;
    d.entry.updated_at_step = step;
    d.entry.update_count = entry.update_count + 1;
  }
  return d;
}

// ---------------------------------------------------------------------------------------------

Warehouse::Warehouse(std::string scorer_name) : scorer_name_(std::move(scorer_name)) {}

Warehouse::Warehouse(const Warehouse& other) {
  std::shared_lock lock(other.mu_);
  scorer_name_ = other.scorer_name_;
  entries_ = other.entries_;
}

Warehouse& Warehouse::operator=(const Warehouse& other) {
  if (this == &other) return *this;
  std::unique_lock a(mu_, std::defer_lock);
  std::shared_lock b(other.mu_, std::defer_lock);
  std::lock(a, b);
  scorer_name_ = other.scorer_name_;
  entries_ = other.entries_;
  return *this;
}

size_t Warehouse::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

bool Warehouse::contains(const std::string& id) const {
  std::shared_lock lock(mu_);
  return entries_.count(id) > 0;
}

WarehouseEntry Warehouse::get(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) throw std::out_of_range("warehouse: no entry for '" + id + "'");
  return it->second;
}

void Warehouse::put(WarehouseEntry entry) {
  std::unique_lock lock(mu_);
  auto id = entry.sample_id;
  entries_.insert_or_assign(std::move(id), std::move(entry));
}

std::vector<std::string> Warehouse::ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

void Warehouse::save(const fs::path& dir) const {
  std::map<std::string, WarehouseEntry> snapshot;
  std::string scorer;
  {
    std::shared_lock lock(mu_);
    snapshot = entries_;
    scorer = scorer_name_;
  }
  try {
    fs::create_directories(dir / "patches");
    json entries = json::object();
    size_t k = 0;
    for (const auto& [id, e] : snapshot) {
      char name[32];
      std::snprintf(name, sizeof(name), "patch_%06zu.png", k++);
      const auto rel = fs::path("patches") / name;
      image_io::write_png16(dir / rel, e.patch);
      entries[id] = {{"patch_file", rel.generic_string()},
                     {"score", e.score},
                     {"updated_at_step", e.updated_at_step},
                     {"update_count", e.update_count},
                     {"scorer_name", scorer}};
    }
    json manifest{{"version", 1}, {"scorer_name", scorer}, {"entries", entries}};
    const auto tmp = dir / "manifest.json.tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw PersistenceError("cannot write " + tmp.string());
      out << std::setprecision(17) << manifest.dump(2) << '\n';
      if (!out) throw PersistenceError("short write on " + tmp.string());
    }
    fs::rename(tmp, dir / "manifest.json");
  } catch (const fs::filesystem_error& e) {
    throw PersistenceError(std::string("warehouse save: ") + e.what());
  } catch (const IngestionError& e) {
    throw PersistenceError(std::string("warehouse save: ") + e.what());
  }
}

namespace {

json read_manifest(const fs::path& dir) {
  const auto file = dir / "manifest.json";
  std::ifstream in(file);
  if (!in) throw PersistenceError("warehouse: cannot open " + file.string());
  try {
    json j;
    in >> j;
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_object()) {
      throw PersistenceError("warehouse: malformed " + file.string());
    }
    return j;
  } catch (const json::exception& e) {
    throw PersistenceError("warehouse: malformed " + file.string() + ": " + e.what());
  }
}

}  // namespace

Warehouse Warehouse::load(const fs::path& dir, QualityScorer& scorer) {
  auto j = read_manifest(dir);
  const auto stored_scorer = j.value("scorer_name", std::string{});
  if (stored_scorer != scorer.name()) {
    throw PersistenceError("warehouse: stored with scorer '" + stored_scorer +
                           "', current scorer is '" + scorer.name() + "'");
  }
  Warehouse w(stored_scorer);
  for (const auto& [id, r] : j["entries"].items()) {
    WarehouseEntry e;
    e.sample_id = id;
    try {
      e.score = r.at("score").get<double>();
      e.updated_at_step = r.value("updated_at_step", int64_t{0});
      e.update_count = r.value("update_count", int64_t{0});
      e.patch = image_io::read_image(dir / r.at("patch_file").get<std::string>());
    } catch (const json::exception& ex) {
      throw PersistenceError("warehouse: bad record for '" + id + "': " + ex.what());
    } catch (const IngestionError& ex) {
      throw PersistenceError("warehouse: " + std::string(ex.what()));
    }
    const double recomputed = scorer.score(e.patch);
    if (std::abs(recomputed - e.score) > 1e-6 * std::max(1.0, std::abs(e.score))) {
      std::ostringstream os;
      os << std::setprecision(10) << "warehouse: score mismatch for '" << id << "' (stored "
         << e.score << ", recomputed " << recomputed << ")";
      throw PersistenceError(os.str());
    }
    e.score = recomputed;
    w.put(std::move(e));
  }
  return w;
}

// ---------------------------------------------------------------------------------------------

uint64_t sample_stream_seed(uint64_t seed, const std::string& id) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return derive_seed(seed, 0x3a7e, h);
}

Warehouse initialize(const std::vector<UnlabeledSource>& samples,
                     diffusion::ConditionalDenoiser& gen, const diffusion::NoiseSchedule& sched,
                     QualityScorer& scorer, uint64_t seed, int64_t crop, int64_t batch_size,
                     diffusion::ReverseMode mode) {
  if (batch_size < 1) throw ValidationError("warehouse initialize: batch size must be >= 1");
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) throw ValidationError("warehouse initialize: duplicate id " + s.id);
  }
  Warehouse w(scorer.name());
  torch::NoGradGuard no_grad;
  for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(samples.size(), begin + static_cast<size_t>(batch_size));
    std::vector<torch::Tensor> crops;
    std::vector<uint64_t> seeds;
    for (size_t i = begin; i < end; ++i) {
      auto img = image_io::read_image(samples[i].path);
      crops.push_back(data::crop(img, data::center_offset(img.size(1), img.size(2), crop), crop));
      seeds.push_back(sample_stream_seed(seed, samples[i].id));
    }
    auto x0 = wavelet::dwt(torch::stack(crops));
    SampleNoise noise(seeds);
    auto y_start = noise.normal(x0.sizes().slice(1));
    auto t = torch::full({x0.size(0)}, sched.steps, torch::kInt64);
    auto restored = diffusion::reverse_chain(x0, t, y_start, gen, sched, noise, mode);
    for (size_t i = begin; i < end; ++i) {
      WarehouseEntry e;
      e.sample_id = samples[i].id;
      e.patch = image_io::quantize16(restored[static_cast<int64_t>(i - begin)]);
      e.score = scorer.score(e.patch);
      w.put(std::move(e));
    }
  }
  return w;
}

std::string inspect_report(const fs::path& dir, int bins) {
  auto j = read_manifest(dir);
  std::vector<double> scores;
  std::map<int64_t, int64_t> updates;
  int64_t last_step = 0;
  for (const auto& [id, r] : j["entries"].items()) {
    scores.push_back(r.value("score", 0.0));
    updates[r.value("update_count", int64_t{0})]++;
    last_step = std::max(last_step, r.value("updated_at_step", int64_t{0}));
  }
  std::ostringstream os;
  os << "warehouse: " << dir.string() << "\n";
  os << "scorer:    " << j.value("scorer_name", std::string{"?"}) << "\n";
  os << "entries:   " << scores.size() << "\n";
  if (scores.empty()) return os.str();

  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it;
  double mean = 0;
  for (auto s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  os << std::fixed << std::setprecision(4);
  os << "score:     min " << lo << "  mean " << mean << "  max " << hi << "\n";
  os << "last update at step " << last_step << "\n\nscore histogram\n";

  bins = std::max(1, bins);
  std::vector<int64_t> counts(static_cast<size_t>(bins), 0);
  const double width = hi > lo ? (hi - lo) / bins : 1.0;
  for (auto s : scores) {
    auto b = static_cast<int>((s - lo) / width);
    counts[static_cast<size_t>(std::clamp(b, 0, bins - 1))]++;
  }
  for (int b = 0; b < bins; ++b) {
    if (hi <= lo && b > 0) break;
    os << "  [" << std::setw(9) << lo + b * width << ", " << std::setw(9) << lo + (b + 1) * width
       << ") " << std::setw(5) << counts[static_cast<size_t>(b)] << " "
       << std::string(static_cast<size_t>(counts[static_cast<size_t>(b)]), '#') << "\n";
  }
  os << "\nupdate counts\n";
  for (const auto& [n, c] : updates) os << "  " << std::setw(4) << n << " updates: " << c << "\n";
  return os.str();
}

}  // namespace semidiff::warehouse
