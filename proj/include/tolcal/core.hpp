#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tolcal/errors.hpp"

namespace tolcal {

inline constexpr double kScaleMax = 100.0;

struct ToleranceConfig {
  double epsilon = 10.0;
  int num_bins = 10;
  double scale_max = kScaleMax;

  // Throws invalid_input when epsilon <= 0, num_bins < 1 or epsilon > scale_max.
  void validate() const;
};

struct MeasurementRecord {
  std::string id;
  double y_true = 0.0;
  double y_pred = 0.0;
  double confidence = 0.0;
  std::optional<std::vector<double>> samples;
  std::optional<std::vector<double>> token_probs;
  std::optional<double> logit_true;
  std::optional<double> logit_false;
  std::optional<std::string> group_key;

  bool operator==(const MeasurementRecord&) const = default;
};

// Returns an empty string when the record satisfies every declared range,
// otherwise a description of the first violation.
std::string first_violation(const MeasurementRecord& record);

// Ordered, validated collection of records with unique ids.
class Dataset {
 public:
  Dataset() = default;
  // Validates every record and id uniqueness; throws range/invalid_input.
  Dataset(std::string name, std::vector<MeasurementRecord> records);

  const std::string& name() const noexcept { return name_; }
  const std::vector<MeasurementRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const MeasurementRecord& operator[](std::size_t i) const { return records_[i]; }
  auto begin() const noexcept { return records_.begin(); }
  auto end() const noexcept { return records_.end(); }

  // Column views used by the kernels.
  std::vector<double> confidences() const;
  std::vector<double> predictions() const;
  std::vector<double> truths() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::string name_;
  std::vector<MeasurementRecord> records_;
};

// 1 iff |y_pred - y_true| <= epsilon (boundary inclusive).
int tolerance_correct(double y_pred, double y_true, double epsilon);

// o_i for every record of the dataset.
std::vector<double> tolerance_outcomes(const Dataset& dataset, double epsilon);

void require_non_empty(const Dataset& dataset, std::string_view what);

enum class FileFormat { jsonl, csv };
enum class ConfidenceScale { unit, percent };

FileFormat parse_file_format(std::string_view text);
ConfidenceScale parse_confidence_scale(std::string_view text);
// Picks csv for a ".csv" extension and jsonl otherwise.
FileFormat format_from_path(const std::filesystem::path& path);

Dataset parse_dataset(std::istream& in, FileFormat format, ConfidenceScale scale,
                      std::string name = "dataset");
Dataset load_dataset(const std::filesystem::path& path, FileFormat format,
                     ConfidenceScale scale = ConfidenceScale::unit);

void write_dataset(std::ostream& out, const Dataset& dataset, FileFormat format,
                   ConfidenceScale scale = ConfidenceScale::unit);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset,
                  FileFormat format, ConfidenceScale scale = ConfidenceScale::unit);

// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

}  // namespace tolcal
