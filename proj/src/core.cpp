#include "tolcal/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "tolcal/kernels.hpp"

namespace tolcal {

using nlohmann::json;

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::empty_input: return "empty-input";
    case ErrorKind::parse: return "parse";
    case ErrorKind::range: return "range";
    case ErrorKind::degenerate_fit: return "degenerate-fit";
    case ErrorKind::undefined_correlation: return "undefined-correlation";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::missing_evidence: return "missing-evidence";
    case ErrorKind::auth: return "auth";
    case ErrorKind::transport: return "transport";
  }
  return "unknown";
}

void ToleranceConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon <= 0.0)
    fail(ErrorKind::invalid_input, "tolerance epsilon must be positive, got " + format_number(epsilon));
  if (epsilon > scale_max)
    fail(ErrorKind::invalid_input, "tolerance epsilon exceeds the score scale");
  if (num_bins < 1)
    fail(ErrorKind::invalid_input, "num_bins must be at least 1, got " + std::to_string(num_bins));
}

namespace {

bool in_scale(double v) { return std::isfinite(v) && v >= 0.0 && v <= kScaleMax; }
bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

std::string first_violation(const MeasurementRecord& r) {
  if (r.id.empty()) return "empty id";
  if (!in_scale(r.y_true)) return "y_true " + format_number(r.y_true) + " outside [0, 100]";
  if (!in_scale(r.y_pred)) return "y_pred " + format_number(r.y_pred) + " outside [0, 100]";
  if (!in_unit(r.confidence))
    return "confidence " + format_number(r.confidence) + " outside [0, 1]";
  if (r.samples) {
    for (double s : *r.samples)
      if (!in_scale(s)) return "sample " + format_number(s) + " outside [0, 100]";
  }
  if (r.token_probs) {
    for (double p : *r.token_probs)
      if (!std::isfinite(p) || p <= 0.0 || p > 1.0)
        return "token probability " + format_number(p) + " outside (0, 1]";
  }
  if (r.logit_true && !std::isfinite(*r.logit_true)) return "logit_true is not finite";
  if (r.logit_false && !std::isfinite(*r.logit_false)) return "logit_false is not finite";
  return {};
}

Dataset::Dataset(std::string name, std::vector<MeasurementRecord> records)
    : name_(std::move(name)), records_(std::move(records)) {
  std::unordered_set<std::string> seen;
  seen.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (auto v = first_violation(r); !v.empty())
      fail(ErrorKind::range, "record " + std::to_string(i) + " (id '" + r.id + "'): " + v);
    if (!seen.insert(r.id).second)
      fail(ErrorKind::invalid_input, "duplicate id '" + r.id + "'");
  }
}

std::vector<double> Dataset::confidences() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.confidence);
  return out;
}

std::vector<double> Dataset::predictions() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.y_pred);
  return out;
}

std::vector<double> Dataset::truths() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.y_true);
  return out;
}

int tolerance_correct(double y_pred, double y_true, double epsilon) {
  if (!std::isfinite(y_pred) || !std::isfinite(y_true) || !std::isfinite(epsilon))
    fail(ErrorKind::invalid_input, "tolerance_correct: non-finite input");
  if (epsilon <= 0.0) fail(ErrorKind::invalid_input, "tolerance_correct: epsilon must be positive");
  return std::fabs(y_pred - y_true) <= epsilon ? 1 : 0;
}

std::vector<double> tolerance_outcomes(const Dataset& dataset, double epsilon) {
  if (!std::isfinite(epsilon) || epsilon <= 0.0)
    fail(ErrorKind::invalid_input, "tolerance epsilon must be positive");
  const auto pred = dataset.predictions();
  const auto truth = dataset.truths();
  std::vector<double> out(dataset.size());
  kernels::tolerance_mask(pred, truth, epsilon, out);
  return out;
}

void require_non_empty(const Dataset& dataset, std::string_view what) {
  if (dataset.empty()) fail(ErrorKind::empty_input, std::string(what) + ": dataset is empty");
}

FileFormat parse_file_format(std::string_view text) {
  if (text == "jsonl") return FileFormat::jsonl;
  if (text == "csv") return FileFormat::csv;
  fail(ErrorKind::invalid_input, "unknown file format '" + std::string(text) + "'");
}

ConfidenceScale parse_confidence_scale(std::string_view text) {
  if (text == "unit") return ConfidenceScale::unit;
  if (text == "percent") return ConfidenceScale::percent;
  fail(ErrorKind::invalid_input, "unknown confidence scale '" + std::string(text) + "'");
}

FileFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? FileFormat::csv : FileFormat::jsonl;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

[[noreturn]] void line_error(ErrorKind kind, std::size_t line, const std::string& message) {
  fail(kind, "line " + std::to_string(line) + ": " + message);
}

double parse_double(std::string_view text, std::size_t line, std::string_view field) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    line_error(ErrorKind::parse, line,
               "field '" + std::string(field) + "' is not a number: '" + std::string(text) + "'");
  return value;
}

double to_unit(double confidence, ConfidenceScale scale) {
  return scale == ConfidenceScale::percent ? confidence / 100.0 : confidence;
}

// Shortest text t with parse(t) / 100 == confidence, so percent files round-trip.
std::string percent_text(double confidence) {
  const double scaled = confidence * 100.0;
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    auto res = std::to_chars(buf, buf + sizeof(buf), scaled, std::chars_format::general, precision);
    double back = 0.0;
    std::from_chars(buf, res.ptr, back);
    if (back / 100.0 == confidence) return std::string(buf, res.ptr);
  }
  // Rounding of the product can miss the preimage; look at neighbours.
  double lo = scaled, hi = scaled;
  for (int step = 0; step < 8; ++step) {
    lo = std::nextafter(lo, -INFINITY);
    hi = std::nextafter(hi, INFINITY);
    if (lo / 100.0 == confidence) return format_number(lo);
    if (hi / 100.0 == confidence) return format_number(hi);
  }
  return format_number(scaled);
}

void validate_or_throw(const MeasurementRecord& r, std::size_t line) {
  if (auto v = first_violation(r); !v.empty())
    line_error(ErrorKind::range, line, "id '" + r.id + "': " + v);
}

std::vector<double> json_number_array(const json& value, std::size_t line, std::string_view field) {
  if (!value.is_array()) line_error(ErrorKind::parse, line, std::string(field) + " must be an array");
  std::vector<double> out;
  out.reserve(value.size());
  for (const auto& v : value) {
    if (!v.is_number()) line_error(ErrorKind::parse, line, std::string(field) + " must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

double json_number(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) line_error(ErrorKind::parse, line, std::string("missing required key '") + key + "'");
  if (!it->is_number()) line_error(ErrorKind::parse, line, std::string("key '") + key + "' must be a number");
  return it->get<double>();
}

MeasurementRecord record_from_json(const json& obj, std::size_t line, ConfidenceScale scale) {
  if (!obj.is_object()) line_error(ErrorKind::parse, line, "expected a JSON object");
  MeasurementRecord r;
  auto id = obj.find("id");
  if (id == obj.end()) line_error(ErrorKind::parse, line, "missing required key 'id'");
  if (id->is_string()) r.id = id->get<std::string>();
  else if (id->is_number_integer()) r.id = std::to_string(id->get<long long>());
  else line_error(ErrorKind::parse, line, "key 'id' must be a string or integer");
  r.y_true = json_number(obj, "y_true", line);
  r.y_pred = json_number(obj, "y_pred", line);
  r.confidence = to_unit(json_number(obj, "confidence", line), scale);
  if (auto it = obj.find("samples"); it != obj.end() && !it->is_null())
    r.samples = json_number_array(*it, line, "samples");
  if (auto it = obj.find("token_probs"); it != obj.end() && !it->is_null())
    r.token_probs = json_number_array(*it, line, "token_probs");
  if (auto it = obj.find("logit_true"); it != obj.end() && !it->is_null())
    r.logit_true = json_number(obj, "logit_true", line);
  if (auto it = obj.find("logit_false"); it != obj.end() && !it->is_null())
    r.logit_false = json_number(obj, "logit_false", line);
  if (auto it = obj.find("group_key"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) line_error(ErrorKind::parse, line, "group_key must be a string");
    r.group_key = it->get<std::string>();
  }
  return r;
}

// RFC 4180-style split: double quotes group a cell, "" escapes a quote.
std::vector<std::string> split_csv_row(std::string_view row, std::size_t line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    char c = row[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < row.size() && row[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) line_error(ErrorKind::parse, line, "unterminated quoted cell");
  cells.push_back(std::move(cell));
  return cells;
}

std::vector<double> csv_number_list(std::string_view cell, std::size_t line, std::string_view field) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= cell.size()) {
    auto end = cell.find(';', start);
    if (end == std::string_view::npos) end = cell.size();
    out.push_back(parse_double(cell.substr(start, end - start), line, field));
    start = end + 1;
  }
  return out;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::vector<MeasurementRecord> parse_jsonl(std::istream& in, ConfidenceScale scale) {
  std::vector<MeasurementRecord> records;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    strip_cr(text);
    if (blank(text)) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      line_error(ErrorKind::parse, line, std::string("invalid JSON: ") + e.what());
    }
    auto r = record_from_json(obj, line, scale);
    validate_or_throw(r, line);
    if (!seen.insert(r.id).second) line_error(ErrorKind::invalid_input, line, "duplicate id '" + r.id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<MeasurementRecord> parse_csv(std::istream& in, ConfidenceScale scale) {
  std::string text;
  std::size_t line = 0;
  std::vector<std::string> header;
  while (std::getline(in, text)) {
    ++line;
    strip_cr(text);
    if (!blank(text)) {
      header = split_csv_row(text, line);
      break;
    }
  }
  if (header.empty()) return {};
  for (auto& h : header) {
    while (!h.empty() && std::isspace(static_cast<unsigned char>(h.back()))) h.pop_back();
    while (!h.empty() && std::isspace(static_cast<unsigned char>(h.front()))) h.erase(h.begin());
  }
  auto column = [&](std::string_view name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_id = column("id"), c_true = column("y_true"), c_pred = column("y_pred"),
            c_conf = column("confidence");
  for (auto [idx, name] : {std::pair{c_id, "id"}, std::pair{c_true, "y_true"},
                           std::pair{c_pred, "y_pred"}, std::pair{c_conf, "confidence"}}) {
    if (idx < 0) line_error(ErrorKind::parse, line, std::string("missing required column '") + name + "'");
  }
  const int c_samples = column("samples"), c_tokens = column("token_probs"),
            c_lt = column("logit_true"), c_lf = column("logit_false"), c_group = column("group_key");

  std::vector<MeasurementRecord> records;
  std::unordered_set<std::string> seen;
  while (std::getline(in, text)) {
    ++line;
    strip_cr(text);
    if (blank(text)) continue;
    auto cells = split_csv_row(text, line);
    if (cells.size() != header.size())
      line_error(ErrorKind::parse, line,
                 "expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    auto cell = [&](int idx) -> const std::string& { return cells[static_cast<std::size_t>(idx)]; };
    auto present = [&](int idx) { return idx >= 0 && !cell(idx).empty(); };
    MeasurementRecord r;
    r.id = cell(c_id);
    r.y_true = parse_double(cell(c_true), line, "y_true");
    r.y_pred = parse_double(cell(c_pred), line, "y_pred");
    r.confidence = to_unit(parse_double(cell(c_conf), line, "confidence"), scale);
    if (present(c_samples)) r.samples = csv_number_list(cell(c_samples), line, "samples");
    if (present(c_tokens)) r.token_probs = csv_number_list(cell(c_tokens), line, "token_probs");
    if (present(c_lt)) r.logit_true = parse_double(cell(c_lt), line, "logit_true");
    if (present(c_lf)) r.logit_false = parse_double(cell(c_lf), line, "logit_false");
    if (present(c_group)) r.group_key = cell(c_group);
    validate_or_throw(r, line);
    if (!seen.insert(r.id).second) line_error(ErrorKind::invalid_input, line, "duplicate id '" + r.id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

std::string joined(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    out += format_number(values[i]);
  }
  return out;
}

}  // namespace

Dataset parse_dataset(std::istream& in, FileFormat format, ConfidenceScale scale, std::string name) {
  auto records = format == FileFormat::jsonl ? parse_jsonl(in, scale) : parse_csv(in, scale);
  return Dataset(std::move(name), std::move(records));
}

Dataset load_dataset(const std::filesystem::path& path, FileFormat format, ConfidenceScale scale) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::invalid_input, "cannot open '" + path.string() + "'");
  try {
    return parse_dataset(in, format, scale, path.stem().string());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, const Dataset& dataset, FileFormat format, ConfidenceScale scale) {
  auto conf_text = [&](double c) {
    return scale == ConfidenceScale::percent ? percent_text(c) : format_number(c);
  };
  if (format == FileFormat::jsonl) {
    for (const auto& r : dataset) {
      // Build the line by hand so numbers keep their shortest round-trip form
      // and key order is stable.
      std::string line = "{\"id\":" + json(r.id).dump() + ",\"y_true\":" + format_number(r.y_true) +
                         ",\"y_pred\":" + format_number(r.y_pred) + ",\"confidence\":" + conf_text(r.confidence);
      auto array = [](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
        return s + "]";
      };
      if (r.samples) line += ",\"samples\":" + array(*r.samples);
      if (r.token_probs) line += ",\"token_probs\":" + array(*r.token_probs);
      if (r.logit_true) line += ",\"logit_true\":" + format_number(*r.logit_true);
      if (r.logit_false) line += ",\"logit_false\":" + format_number(*r.logit_false);
      if (r.group_key) line += ",\"group_key\":" + json(*r.group_key).dump();
      out << line << "}\n";
    }
    return;
  }
  out << "id,y_true,y_pred,confidence,samples,token_probs,logit_true,logit_false,group_key\n";
  for (const auto& r : dataset) {
    out << csv_escape(r.id) << ',' << format_number(r.y_true) << ',' << format_number(r.y_pred) << ','
        << conf_text(r.confidence) << ',' << (r.samples ? joined(*r.samples) : "") << ','
        << (r.token_probs ? joined(*r.token_probs) : "") << ','
        << (r.logit_true ? format_number(*r.logit_true) : "") << ','
        << (r.logit_false ? format_number(*r.logit_false) : "") << ','
        << (r.group_key ? csv_escape(*r.group_key) : "") << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset, FileFormat format,
                  ConfidenceScale scale) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::invalid_input, "cannot write '" + path.string() + "'");
  write_dataset(out, dataset, format, scale);
}

}  // namespace tolcal
