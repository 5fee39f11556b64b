#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace semidiff {

/// Root of every error raised by the library. `kind()` is a stable short tag used in CLI
/// diagnostics and tests.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SEMIDIFF_DEFINE_ERROR(Name, tag)                                \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  };

SEMIDIFF_DEFINE_ERROR(DimensionError, "dimension")
SEMIDIFF_DEFINE_ERROR(ValidationError, "validation")
SEMIDIFF_DEFINE_ERROR(ScheduleError, "schedule")
SEMIDIFF_DEFINE_ERROR(RangeError, "range")
SEMIDIFF_DEFINE_ERROR(ModelContractError, "model-contract")
SEMIDIFF_DEFINE_ERROR(SnapshotCompatibilityError, "snapshot-compatibility")
SEMIDIFF_DEFINE_ERROR(FeatureBackendError, "feature-backend")
SEMIDIFF_DEFINE_ERROR(IngestionError, "ingestion")
SEMIDIFF_DEFINE_ERROR(ManifestError, "manifest")
SEMIDIFF_DEFINE_ERROR(SizeError, "size")
SEMIDIFF_DEFINE_ERROR(DivergenceError, "divergence")
SEMIDIFF_DEFINE_ERROR(PersistenceError, "persistence")
SEMIDIFF_DEFINE_ERROR(CheckpointVersionError, "checkpoint-version")
SEMIDIFF_DEFINE_ERROR(CompatibilityError, "compatibility")
SEMIDIFF_DEFINE_ERROR(ConfigError, "config")

#undef SEMIDIFF_DEFINE_ERROR

/// Formats a tensor shape as "[a, b, c]" for error messages.
std::string shape_string(const std::vector<int64_t>& shape);

}  // namespace semidiff
