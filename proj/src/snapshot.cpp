#include <cmath>

#include "semidiff/backbone.hpp"
#include "semidiff/errors.hpp"

namespace semidiff::backbone {

namespace {

void check_eta(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw ValidationError("ema_update: eta must lie in [0, 1], got " + std::to_string(eta));
  }
}

// The one EMA kernel shared by the snapshot and in-place forms.
void ema_kernel(float* teacher, const float* student, int64_t n, double eta) {
  const double keep = eta;
  const double take = 1.0 - eta;
  for (int64_t i = 0; i < n; ++i) {
    teacher[i] = static_cast<float>(keep * static_cast<double>(teacher[i]) +
                                    take * static_cast<double>(student[i]));
  }
}

}  // namespace

bool ParamSnapshot::same_structure(const ParamSnapshot& other) const {
  if (params.size() != other.params.size()) return false;
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != other.params[i].name || params[i].shape != other.params[i].shape) {
      return false;
    }
  }
  return true;
}

int64_t ParamSnapshot::numel() const {
  int64_t n = 0;
  for (const auto& p : params) n += static_cast<int64_t>(p.values.size());
  return n;
}

double ParamSnapshot::distance(const ParamSnapshot& other) const {
  if (!same_structure(other)) throw SnapshotCompatibilityError("distance: structure mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& a = params[i].values;
    const auto& b = other.params[i].values;
    for (size_t j = 0; j < a.size(); ++j) {
      const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

ParamSnapshot take_snapshot(const torch::nn::Module& module) {
  ParamSnapshot snap;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    auto t = item.value().detach().to(torch::kFloat32).contiguous();
    ParamTensor p;
    p.name = item.key();
    p.shape = t.sizes().vec();
    p.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    snap.params.push_back(std::move(p));
  }
  return snap;
}

void load_snapshot(torch::nn::Module& module, const ParamSnapshot& snapshot) {
  auto named = module.named_parameters(/*recurse=*/true);
  if (named.size() != snapshot.params.size()) {
    throw SnapshotCompatibilityError("load_snapshot: module has " + std::to_string(named.size()) +
                                     " parameters, snapshot has " +
                                     std::to_string(snapshot.params.size()));
  }
  torch::NoGradGuard no_grad;
  size_t i = 0;
  for (auto& item : named) {
    const auto& src = snapshot.params[i++];
    auto& dst = item.value();
    if (item.key() != src.name || dst.sizes().vec() != src.shape) {
      throw SnapshotCompatibilityError("load_snapshot: expected " + item.key() + " " +
                                       shape_string(dst.sizes().vec()) + ", snapshot has " +
                                       src.name + " " + shape_string(src.shape));
    }
    auto values = torch::from_blob(const_cast<float*>(src.values.data()),
                                   {static_cast<int64_t>(src.values.size())}, torch::kFloat32);
    dst.copy_(values.view(dst.sizes()));
  }
}

ParamSnapshot ema_update(const ParamSnapshot& teacher, const ParamSnapshot& student, double eta) {
  check_eta(eta);
  if (!teacher.same_structure(student)) {
    throw SnapshotCompatibilityError("ema_update: teacher and student structures differ");
  }
  ParamSnapshot out = teacher;
  for (size_t i = 0; i < out.params.size(); ++i) {
    ema_kernel(out.params[i].values.data(), student.params[i].values.data(),
               static_cast<int64_t>(out.params[i].values.size()), eta);
  }
  return out;
}

void ema_update(torch::nn::Module& teacher, const torch::nn::Module& student, double eta) {
  check_eta(eta);
  auto tp = teacher.named_parameters(true);
  auto sp = student.named_parameters(true);
  if (tp.size() != sp.size()) {
    throw SnapshotCompatibilityError("ema_update: teacher and student structures differ");
  }
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < tp.size(); ++i) {
    auto& t = tp[i].value();
    const auto& s = sp[i].value();
    if (tp[i].key() != sp[i].key() || t.sizes() != s.sizes() || !t.is_contiguous() ||
        t.scalar_type() != torch::kFloat32) {
      throw SnapshotCompatibilityError("ema_update: mismatch at " + tp[i].key());
    }
    auto sc = s.contiguous();
    ema_kernel(t.data_ptr<float>(), sc.data_ptr<float>(), t.numel(), eta);
  }
}

}  // namespace semidiff::backbone
