#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace marktau {

// Raised for malformed input that cannot be turned into a Dataset.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// One observation (Y, Delta, Delta*V, A). `mark` is set iff delta == 1.
struct SubjectRecord {
  double y = 0.0;
  int delta = 0;
  std::optional<double> mark;
  int arm = 0;

  bool operator==(const SubjectRecord&) const = default;
};

struct Dataset {
  std::vector<SubjectRecord> records;
  double follow_up = 0.0;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  double pi_hat = 0.0;

  std::size_t size() const { return records.size(); }
  std::size_t group_size(int arm) const { return arm == 1 ? n1 : n0; }
  std::size_t event_count() const;
  // Marks of uncensored records, in record order.
  std::vector<double> observed_marks() const;

  bool operator==(const Dataset&) const = default;
};

// Builds a Dataset, computing group sizes and pi_hat. Throws DataError when
// either arm is empty or an arm label is not 0/1. follow_up defaults to the
// largest observed time.
Dataset make_dataset(std::vector<SubjectRecord> records,
                     std::optional<double> follow_up = std::nullopt);

struct MarkInterval {
  double lower = 0.0;
  double upper = 1.0;

  MarkInterval() = default;
  MarkInterval(double lower, double upper);
  bool contains(double v) const { return v >= lower && v <= upper; }
};

struct ParseOptions {
  // Silently skip uncensored rows with no mark (complete-case analysis).
  bool drop_missing_marks = false;
};

struct ParseResult {
  Dataset dataset;
  std::size_t dropped_rows = 0;
};

// Parses the `y,delta,mark,a` CSV format. Column order follows the header;
// the mark column may be omitted entirely when no row is uncensored.
ParseResult parse_dataset(std::string_view csv_text, const ParseOptions& options = {});

// Inverse of parse_dataset (full double precision).
std::string serialize_dataset(const Dataset& data);

struct ScalingRecord {
  double min = 0.0;
  double max = 1.0;
  bool degenerate = false;

  double to_raw(double scaled) const { return min + scaled * (max - min); }
};

struct ScaledMarks {
  std::vector<double> values;
  ScalingRecord scaling;
};

// Min-max maps raw marks onto [0,1]. When every mark is equal the map is
// undefined and all marks go to 0.5 with `scaling.degenerate` set.
ScaledMarks scale_marks(std::span<const double> raw_marks);

double apply_scaling(double raw, const ScalingRecord& scaling);

// Returns a copy with every observed mark mapped through `scaling`.
Dataset rescale_dataset(const Dataset& data, const ScalingRecord& scaling);

struct Violation {
  std::size_t row = 0;  // 0-based record index; npos for dataset-level rules
  std::string rule;

  bool operator==(const Violation&) const = default;
};

constexpr std::size_t kDatasetLevel = static_cast<std::size_t>(-1);

using ValidationReport = std::vector<Violation>;

ValidationReport validate(const Dataset& data);

enum class ScalingMode { none, automatic, fixed };

struct MarkScaling {
  ScalingMode mode = ScalingMode::none;
  ScalingRecord fixed;  // used when mode == fixed
};

// Optional JSON sidecar: {"follow_up": L, "mark_scaling": {"min":..,"max":..} | "auto"}
struct DatasetMetadata {
  std::optional<double> follow_up;
  std::optional<MarkScaling> mark_scaling;
};

DatasetMetadata parse_metadata(std::string_view json_text);

}  // namespace marktau
