#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "semidiff/diffusion.hpp"
#include "semidiff/quality.hpp"

namespace semidiff::warehouse {

/// Current best pseudo-label for one unlabeled sample. `patch` is held on the 16-bit storage
/// grid (image_io::quantize16) so memory and disk agree exactly; `score` is the scorer applied
/// to that patch.
struct WarehouseEntry {
  std::string sample_id;
  torch::Tensor patch;  // [3, crop, crop]
  double score = 0.0;
  int64_t updated_at_step = 0;
  int64_t update_count = 0;
};

struct ConsistencyGate {
  double phi = 0.1;
  void validate() const;
};

/// Both criteria, strict: q_teacher > max(q_student, q_stored) and l1 < phi.
bool gate_accepts(double q_teacher, double q_student, double q_stored, double l1,
                  const ConsistencyGate& gate);

struct UpdateDecision {
  WarehouseEntry entry;  // the new entry when accepted, otherwise the input entry
  bool accepted = false;
  double q_teacher = 0.0;
  double q_student = 0.0;
  double l1 = 0.0;
};

/// Scores the candidate teacher patch as it would be stored (16-bit grid) and the student
/// output, measures mean |teacher - student|, and applies the gate.
UpdateDecision propose_update(const WarehouseEntry& entry, const torch::Tensor& teacher_out,
                              const torch::Tensor& student_out, QualityScorer& scorer,
                              const ConsistencyGate& gate, int64_t step);

/// Thread-safe keyed store; one writer, any number of readers, whole-entry replacement.
class Warehouse {
 public:
  explicit Warehouse(std::string scorer_name = {});
  Warehouse(const Warehouse& other);
  Warehouse& operator=(const Warehouse& other);

  const std::string& scorer_name() const { return scorer_name_; }
  size_t size() const;
  bool contains(const std::string& id) const;
  /// Copy of the entry; throws std::out_of_range for an unknown id.
  WarehouseEntry get(const std::string& id) const;
  void put(WarehouseEntry entry);
  std::vector<std::string> ids() const;

  /// Writes <dir>/manifest.json and one 16-bit PNG per entry under <dir>/patches/.
  void save(const std::filesystem::path& dir) const;
  /// Reads a saved warehouse, recomputing every score with `scorer`. Throws PersistenceError
  /// on a missing/corrupt store, a scorer change, or a score that no longer matches its patch.
  static Warehouse load(const std::filesystem::path& dir, QualityScorer& scorer);

 private:
  std::string scorer_name_;
  mutable std::shared_mutex mu_;
  std::map<std::string, WarehouseEntry> entries_;
};

struct UnlabeledSource {
  std::string id;
  std::filesystem::path path;
};

/// Builds the initial store: every sample's center crop is restored by a full reverse chain
/// from pure noise at T. Noise streams are derived from (seed, sample id), so the result does
/// not depend on ordering or batching. Throws IngestionError for unreadable samples.
Warehouse initialize(const std::vector<UnlabeledSource>& samples,
                     diffusion::ConditionalDenoiser& gen, const diffusion::NoiseSchedule& sched,
                     QualityScorer& scorer, uint64_t seed, int64_t crop = 64,
                     int64_t batch_size = 8,
                     diffusion::ReverseMode mode = diffusion::ReverseMode::full_chain);

/// Per-sample stream seed used by initialize().
uint64_t sample_stream_seed(uint64_t seed, const std::string& id);

/// Human-readable summary of <dir>/manifest.json: entry count, score histogram, update counts.
std::string inspect_report(const std::filesystem::path& dir, int bins = 10);

}  // namespace semidiff::warehouse
