#include "semidiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/random.hpp"

namespace semidiff::data {

using nlohmann::json;

namespace {

bool is_image(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::string> list_images(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path())) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> subsample(std::vector<std::string> names, const DatasetSpec& spec) {
  if (!spec.max_samples || names.size() <= *spec.max_samples) return names;
  std::mt19937_64 rng(spec.selection_seed);
  std::shuffle(names.begin(), names.end(), rng);
  names.resize(*spec.max_samples);
  std::sort(names.begin(), names.end());
  return names;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Distance from (x, y) to the segment (ax, ay)-(bx, by).
double segment_distance(double x, double y, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double u = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  const double px = ax + u * dx - x, py = ay + u * dy - y;
  return std::sqrt(px * px + py * py);
}

// Artifact mask [H, W] in [0, 1] and the per-pixel target the degradation blends toward.
std::pair<torch::Tensor, torch::Tensor> artifact_layer(const torch::Tensor& clean,
                                                       DegradationKind kind, uint64_t seed) {
  const int64_t h = clean.size(1), w = clean.size(2);
  std::mt19937_64 rng(derive_seed(seed, 0xde9ad));
  std::vector<float> mask(static_cast<size_t>(h * w), 0.0f);
  auto at = [&](int64_t i, int64_t j) -> float& { return mask[static_cast<size_t>(i * w + j)]; };
  torch::Tensor target;

  switch (kind) {
    case DegradationKind::streaks: {
      const double base_angle = uniform(rng, -0.35, 0.35);
      const int64_t count = std::max<int64_t>(1, h * w / 128);
      for (int64_t s = 0; s < count; ++s) {
        const double cx = uniform(rng, 0, static_cast<double>(w));
        const double cy = uniform(rng, 0, static_cast<double>(h));
        const double len = uniform(rng, 6.0, 16.0);
        const double ang = base_angle + uniform(rng, -0.1, 0.1);
        const double strength = uniform(rng, 0.6, 1.0);
        const double hx = 0.5 * len * std::sin(ang), hy = 0.5 * len * std::cos(ang);
        const double ax = cx - hx, ay = cy - hy, bx = cx + hx, by = cy + hy;
        const auto i0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(ay, by))) - 2);
        const auto i1 = std::min<int64_t>(h - 1, static_cast<int64_t>(std::ceil(std::max(ay, by))) + 2);
        const auto j0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(ax, bx))) - 2);
        const auto j1 = std::min<int64_t>(w - 1, static_cast<int64_t>(std::ceil(std::max(ax, bx))) + 2);
        for (int64_t i = i0; i <= i1; ++i) {
          for (int64_t j = j0; j <= j1; ++j) {
            const double d = segment_distance(static_cast<double>(j), static_cast<double>(i), ax, ay, bx, by);
            const double v = strength * std::max(0.0, 1.0 - d);
            at(i, j) = std::max(at(i, j), static_cast<float>(v));
          }
        }
      }
      target = torch::full_like(clean, 0.95f);
      break;
    }
    case DegradationKind::blobs: {
      const int64_t count = std::max<int64_t>(1, h * w / 400);
      for (int64_t s = 0; s < count; ++s) {
        const double cx = uniform(rng, 0, static_cast<double>(w));
        const double cy = uniform(rng, 0, static_cast<double>(h));
        const double r = uniform(rng, 2.0, 6.0);
        for (int64_t i = 0; i < h; ++i) {
          for (int64_t j = 0; j < w; ++j) {
            const double d2 = (static_cast<double>(i) - cy) * (static_cast<double>(i) - cy) +
                              (static_cast<double>(j) - cx) * (static_cast<double>(j) - cx);
            const double v = std::exp(-d2 / (2.0 * r * r));
            at(i, j) = std::max(at(i, j), static_cast<float>(v > 0.05 ? v : 0.0));
          }
        }
      }
      target = clean * 0.5f + 0.4f;
      break;
    }
    case DegradationKind::haze: {
      const double tilt = uniform(rng, 0.3, 0.6);
      const double phase = uniform(rng, 0.0, 6.283);
      for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
          const double depth = 1.0 - static_cast<double>(i) / static_cast<double>(std::max<int64_t>(1, h - 1));
          const double v = 0.3 + tilt * depth +
                           0.08 * std::sin(phase + 6.283 * static_cast<double>(j) / static_cast<double>(w));
          at(i, j) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
      target = torch::full_like(clean, 0.75f);
      break;
    }
  }
  auto m = torch::from_blob(mask.data(), {1, h, w}, torch::kFloat32).clone();
  return {m, target};
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Manifest

std::vector<DatasetSpec> read_dataset_specs(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open dataset manifest " + file.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("malformed dataset manifest " + file.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ConfigError("dataset manifest must be a JSON list");
  const auto base = file.parent_path();
  std::vector<DatasetSpec> specs;
  for (const auto& r : j) {
    DatasetSpec s;
    try {
      s.name = r.at("name").get<std::string>();
      s.labeled_dir = resolve(base, r.value("labeled_dir", std::string{}));
      s.unlabeled_dir = resolve(base, r.value("unlabeled_dir", std::string{}));
      s.weight = r.value("weight", 1.0);
      if (r.contains("max_samples") && !r["max_samples"].is_null()) {
        s.max_samples = r["max_samples"].get<size_t>();
      }
      s.selection_seed = r.value("selection_seed", uint64_t{0});
    } catch (const json::exception& e) {
      throw ConfigError("dataset manifest record: " + std::string(e.what()));
    }
    if (s.name.empty() || s.name.find('/') != std::string::npos) {
      throw ConfigError("dataset name must be non-empty and contain no '/'");
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

void write_dataset_specs(const fs::path& file, const std::vector<DatasetSpec>& specs) {
  json j = json::array();
  const auto base = file.parent_path();
  for (const auto& s : specs) {
    json r{{"name", s.name},
           {"labeled_dir", s.labeled_dir.lexically_relative(base).string()},
           {"unlabeled_dir", s.unlabeled_dir.lexically_relative(base).string()},
           {"weight", s.weight},
           {"selection_seed", s.selection_seed}};
    if (s.max_samples) r["max_samples"] = *s.max_samples;
    j.push_back(r);
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw PersistenceError("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

size_t Corpus::labeled_count() const {
  size_t n = 0;
  for (const auto& d : datasets) n += d.labeled.size();
  return n;
}

size_t Corpus::unlabeled_count() const {
  size_t n = 0;
  for (const auto& d : datasets) n += d.unlabeled.size();
  return n;
}

std::string Corpus::summary() const {
  std::ostringstream os;
  for (const auto& d : datasets) {
    os << d.name << ": " << d.labeled.size() << " labeled, " << d.unlabeled.size()
       << " unlabeled\n";
  }
  return os.str();
}

Corpus load_manifest(const std::vector<DatasetSpec>& specs) {
  Corpus corpus;
  std::set<std::string> names;
  for (const auto& spec : specs) {
    if (!names.insert(spec.name).second) {
      throw ManifestError("duplicate dataset name '" + spec.name + "'");
    }
    DatasetIndex idx;
    idx.name = spec.name;
    idx.weight = spec.weight;

    if (!spec.labeled_dir.empty()) {
      const auto deg_dir = spec.labeled_dir / "degraded";
      const auto clean_dir = spec.labeled_dir / "clean";
      auto degraded = list_images(deg_dir);
      auto clean = list_images(clean_dir);
      std::vector<std::string> missing_clean, missing_degraded;
      std::set_difference(degraded.begin(), degraded.end(), clean.begin(), clean.end(),
                          std::back_inserter(missing_clean));
      std::set_difference(clean.begin(), clean.end(), degraded.begin(), degraded.end(),
                          std::back_inserter(missing_degraded));
      if (!missing_clean.empty() || !missing_degraded.empty()) {
        std::ostringstream os;
        os << "dataset '" << spec.name << "': unpaired labeled files;";
        for (const auto& f : missing_clean) os << " " << (deg_dir / f).string() << " (no clean)";
        for (const auto& f : missing_degraded) os << " " << (clean_dir / f).string() << " (no degraded)";
        throw ManifestError(os.str());
      }
      for (const auto& f : subsample(degraded, spec)) {
        idx.labeled.push_back({spec.name + "/" + f, deg_dir / f, clean_dir / f});
      }
    }
    if (!spec.unlabeled_dir.empty()) {
      for (const auto& f : subsample(list_images(spec.unlabeled_dir), spec)) {
        idx.unlabeled.push_back({spec.name + "/" + f, spec.unlabeled_dir / f});
      }
    }
    corpus.datasets.push_back(std::move(idx));
  }
  return corpus;
}

// ---------------------------------------------------------------------------------------------
// Cropping

CropOffset center_offset(int64_t height, int64_t width, int64_t size) {
  if (height < size || width < size) {
    throw SizeError("crop: image " + std::to_string(height) + "x" + std::to_string(width) +
                    " is smaller than " + std::to_string(size));
  }
  return {(height - size) / 2, (width - size) / 2};
}

CropOffset random_offset(int64_t height, int64_t width, int64_t size, std::mt19937_64& rng) {
  center_offset(height, width, size);
  std::uniform_int_distribution<int64_t> rows(0, height - size), cols(0, width - size);
  const int64_t r = rows(rng);
  return {r, cols(rng)};
}

torch::Tensor crop(const torch::Tensor& image, CropOffset at, int64_t size) {
  if (image.dim() != 3) throw DimensionError("crop: expected [C, H, W]");
  if (at.row < 0 || at.col < 0 || at.row + size > image.size(1) || at.col + size > image.size(2)) {
    throw SizeError("crop: window outside the image");
  }
  using torch::indexing::Slice;
  return image.index({Slice(), Slice(at.row, at.row + size), Slice(at.col, at.col + size)});
}

std::pair<torch::Tensor, torch::Tensor> crop_pair(const torch::Tensor& x, const torch::Tensor& y,
                                                  CropMode mode, int64_t size,
                                                  std::mt19937_64& rng) {
  if (x.dim() != 3 || x.sizes() != y.sizes()) {
    throw SizeError("crop_pair: images must share one [C, H, W] shape");
  }
  const auto at = mode == CropMode::center ? center_offset(x.size(1), x.size(2), size)
                                           : random_offset(x.size(1), x.size(2), size, rng);
  return {crop(x, at, size), crop(y, at, size)};
}

// ---------------------------------------------------------------------------------------------
// Synthetic data

DegradationKind parse_degradation(const std::string& name) {
  if (name == "streaks") return DegradationKind::streaks;
  if (name == "blobs") return DegradationKind::blobs;
  if (name == "haze") return DegradationKind::haze;
  throw ConfigError("unknown degradation kind '" + name + "' (streaks|blobs|haze)");
}

std::string to_string(DegradationKind kind) {
  switch (kind) {
    case DegradationKind::streaks: return "streaks";
    case DegradationKind::blobs: return "blobs";
    case DegradationKind::haze: return "haze";
  }
  return "?";
}

torch::Tensor synth_degrade(const torch::Tensor& clean, const SyntheticDegrader& d) {
  if (clean.dim() != 3 || clean.size(0) != 3) throw DimensionError("synth_degrade: expected [3, H, W]");
  if (!(d.severity > 0.0 && d.severity <= 1.0)) {
    throw ValidationError("synth_degrade: severity must lie in (0, 1]");
  }
  auto [mask, target] = artifact_layer(clean, d.kind, d.seed);
  auto out = clean + (target - clean) * mask * static_cast<float>(d.severity);
  return out.clamp(-1.0, 1.0);
}

torch::Tensor synth_clean_image(int64_t height, int64_t width, uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xc1ea));
  auto ys = torch::arange(height, torch::kFloat32).view({1, height, 1}).expand({1, height, width});
  auto xs = torch::arange(width, torch::kFloat32).view({1, 1, width}).expand({1, height, width});
  auto color = [&](double lo, double hi) {
    return torch::tensor({static_cast<float>(uniform(rng, lo, hi)), static_cast<float>(uniform(rng, lo, hi)),
                          static_cast<float>(uniform(rng, lo, hi))}).view({3, 1, 1});
  };

  const double angle = uniform(rng, 0.0, 6.283);
  auto proj = (xs * static_cast<float>(std::cos(angle)) + ys * static_cast<float>(std::sin(angle)));
  proj = (proj - proj.min()) / (proj.max() - proj.min() + 1e-6f);
  auto c1 = color(-0.6, 0.4), c2 = color(-0.6, 0.4);
  auto img = c1 + (c2 - c1) * proj;

  const int shapes = std::uniform_int_distribution<int>(3, 5)(rng);
  for (int s = 0; s < shapes; ++s) {
    auto fill = color(-0.8, 0.6);
    const double cx = uniform(rng, 0, static_cast<double>(width));
    const double cy = uniform(rng, 0, static_cast<double>(height));
    torch::Tensor m;
    if (rng() % 2 == 0) {
      const double r = uniform(rng, 0.1, 0.3) * static_cast<double>(std::min(height, width));
      auto d = torch::sqrt((xs - static_cast<float>(cx)).square() + (ys - static_cast<float>(cy)).square());
      m = torch::sigmoid((static_cast<float>(r) - d) / 0.8f);
    } else {
      const double hw = uniform(rng, 0.1, 0.3) * static_cast<double>(width);
      const double hh = uniform(rng, 0.1, 0.3) * static_cast<double>(height);
      m = torch::sigmoid((static_cast<float>(hw) - (xs - static_cast<float>(cx)).abs()) / 0.8f) *
          torch::sigmoid((static_cast<float>(hh) - (ys - static_cast<float>(cy)).abs()) / 0.8f);
    }
    img = img * (1 - m) + fill * m;
  }
  const double fx = uniform(rng, 0.05, 0.2), fy = uniform(rng, 0.05, 0.2), phase = uniform(rng, 0, 6.283);
  img = img + 0.04f * torch::sin(xs * static_cast<float>(fx) + ys * static_cast<float>(fy) + static_cast<float>(phase));
  return img.clamp(-0.9, 0.9).contiguous();
}

DatasetSpec write_synthetic_corpus(const fs::path& out, const SyntheticCorpusOptions& opts) {
  if (opts.count < 0 || opts.test_count < 0 || opts.size < 2 || opts.size % 2 != 0) {
    throw ConfigError("synth-data: counts must be >= 0 and size even");
  }
  std::vector<int64_t> order(static_cast<size_t>(opts.count));
  for (int64_t i = 0; i < opts.count; ++i) order[static_cast<size_t>(i)] = i;
  auto [labeled, unlabeled] = split_half(order, derive_seed(opts.seed, 0x5b1));
  std::sort(labeled.begin(), labeled.end());
  std::sort(unlabeled.begin(), unlabeled.end());

  auto name_of = [](int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%04lld.png", static_cast<long long>(i));
    return std::string(buf);
  };
  auto make_pair = [&](int64_t i, uint64_t stream) {
    auto clean = synth_clean_image(opts.size, opts.size, derive_seed(opts.seed, stream, static_cast<uint64_t>(i)));
    auto degraded = synth_degrade(clean, {opts.kind, opts.severity,
                                          derive_seed(opts.seed, stream + 1, static_cast<uint64_t>(i))});
    return std::make_pair(clean, degraded);
  };

  for (auto i : labeled) {
    auto [clean, degraded] = make_pair(i, 10);
    image_io::write_png(out / "labeled" / "clean" / name_of(i), clean);
    image_io::write_png(out / "labeled" / "degraded" / name_of(i), degraded);
  }
  for (auto i : unlabeled) {
    auto [clean, degraded] = make_pair(i, 10);
    image_io::write_png(out / "unlabeled" / name_of(i), degraded);
    image_io::write_png(out / "unlabeled_reference" / name_of(i), clean);
  }
  for (int64_t i = 0; i < opts.test_count; ++i) {
    auto [clean, degraded] = make_pair(i, 20);
    image_io::write_png(out / "test" / "clean" / name_of(i), clean);
    image_io::write_png(out / "test" / "degraded" / name_of(i), degraded);
  }
  fs::create_directories(out / "labeled" / "clean");
  fs::create_directories(out / "labeled" / "degraded");
  fs::create_directories(out / "unlabeled");

  DatasetSpec spec;
  spec.name = opts.name;
  spec.labeled_dir = out / "labeled";
  spec.unlabeled_dir = out / "unlabeled";
  write_dataset_specs(out / "datasets.json", {spec});
  return spec;
}

// ---------------------------------------------------------------------------------------------
// Curriculum and ordering

CurriculumState curriculum_at(int64_t epoch, const std::vector<int64_t>& milestones,
                              size_t dataset_count) {
  CurriculumState s;
  s.epoch = epoch;
  if (dataset_count == 0) return s;
  size_t active = dataset_count;
  if (!milestones.empty()) {
    active = 1;
    for (auto m : milestones) {
      if (epoch >= m) ++active;
    }
    if (epoch >= milestones.back()) active = dataset_count;
    active = std::min(active, dataset_count);
  }
  for (size_t i = 0; i < active; ++i) s.active_datasets.push_back(i);
  return s;
}

std::vector<SampleRef> labeled_epoch_order(const Corpus& corpus, const CurriculumState& state,
                                           uint64_t seed) {
  std::vector<SampleRef> refs;
  for (auto d : state.active_datasets) {
    for (size_t i = 0; i < corpus.datasets.at(d).labeled.size(); ++i) refs.push_back({d, i});
  }
  std::mt19937_64 rng(derive_seed(seed, 0x1ab, static_cast<uint64_t>(state.epoch)));
  std::shuffle(refs.begin(), refs.end(), rng);
  return refs;
}

std::vector<SampleRef> unlabeled_epoch_order(const Corpus& corpus, const CurriculumState& state,
                                             uint64_t seed) {
  std::vector<std::vector<SampleRef>> per;
  for (auto d : state.active_datasets) {
    std::vector<SampleRef> refs;
    for (size_t i = 0; i < corpus.datasets.at(d).unlabeled.size(); ++i) refs.push_back({d, i});
    std::mt19937_64 rng(derive_seed(seed, 0x0b1, static_cast<uint64_t>(state.epoch), d));
    std::shuffle(refs.begin(), refs.end(), rng);
    per.push_back(std::move(refs));
  }
  std::vector<SampleRef> out;
  for (size_t k = 0;; ++k) {
    bool any = false;
    for (const auto& refs : per) {
      if (k < refs.size()) {
        out.push_back(refs[k]);
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

const torch::Tensor& ImageCache::get(const fs::path& path) {
  auto it = cache_.find(path);
  if (it == cache_.end()) it = cache_.emplace(path, image_io::read_image(path)).first;
  return it->second;
}

}  // namespace semidiff::data
